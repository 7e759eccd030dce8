//! Discrete Fourier transforms on the periodic grid.
//!
//! Transforms are unnormalized on the forward side; `inverse_real` divides by
//! the point count. With this convention Parseval for the h-weighted L² inner
//! product reads Σ u v h^dim = (h/n)^dim Σ_k û_k conj(v̂_k).

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Unnormalized forward DFT of real samples, in grid flat-index layout.
pub fn forward(grid: &Grid, values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(grid, &mut buf, true);
    buf
}

/// Inverse DFT scaled by n^{-dim}, asserting the result is real.
///
/// The imaginary residue is discarded after checking it is at roundoff level
/// relative to the real part; a larger residue indicates a multiplier that is
/// not even in ξ and is reported as a numerical failure.
pub fn inverse_real(grid: &Grid, mut spectrum: Vec<Complex64>) -> Result<Vec<f64>> {
    transform(grid, &mut spectrum, false);
    let scale = 1.0 / grid.len() as f64;
    let mut max_re = 0.0f64;
    let mut max_im = 0.0f64;
    for z in &spectrum {
        max_re = max_re.max(z.re.abs());
        max_im = max_im.max(z.im.abs());
    }
    if max_im > 1e-12 * (max_re + 1e-300) {
        return Err(Error::Numerical(format!(
            "inverse transform is not real: imaginary residue {:.3e} vs amplitude {:.3e}",
            max_im * scale,
            max_re * scale
        )));
    }
    Ok(spectrum.iter().map(|z| z.re * scale).collect())
}

/// Applies a real spectral multiplier table: IDFT(m .* DFT(u)).
pub fn apply_multiplier(grid: &Grid, values: &[f64], table: &[f64]) -> Result<Vec<f64>> {
    let mut spec = forward(grid, values);
    for (z, m) in spec.iter_mut().zip(table) {
        *z *= m;
    }
    inverse_real(grid, spec)
}

fn transform(grid: &Grid, buf: &mut [Complex64], forward: bool) {
    let n = grid.n();
    let mut planner = FftPlanner::new();
    let fft = if forward {
        planner.plan_fft_forward(n)
    } else {
        planner.plan_fft_inverse(n)
    };
    match grid.dim() {
        1 => fft.process(buf),
        _ => {
            for row in buf.chunks_exact_mut(n) {
                fft.process(row);
            }
            let mut col = vec![Complex64::default(); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = buf[i * n + j];
                }
                fft.process(&mut col);
                for i in 0..n {
                    buf[i * n + j] = col[i];
                }
            }
        }
    }
}
