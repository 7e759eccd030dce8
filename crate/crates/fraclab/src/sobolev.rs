//! Sobolev inner products and Gram matrices on the periodic grid.
//!
//! The H^s inner product uses the inhomogeneous symbol ⟨ξ⟩^{2s} = (1+|ξ|²)^s.
//! Gram matrices are taken in the per-cell indicator basis of an index set, so
//! a coefficient vector is just the sample values on the set. Dual norms of
//! functionals on the set are Gram-inverse norms of the L²-pairing vector.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{GridFunction, IndexSet};
use crate::par;

/// H^s inner product ⟨u, v⟩_s = (h/n)^dim Σ_k ⟨ξ_k⟩^{2s} û_k conj(v̂_k).
///
/// At s = 0 this is the h-weighted L² inner product.
pub fn hs_inner(u: &GridFunction, v: &GridFunction, order: f64) -> Result<f64> {
    if u.grid() != v.grid() {
        return Err(Error::GridMismatch("hs_inner arguments".into()));
    }
    let grid = u.grid();
    let table = grid.multiplier_table(|xi| (1.0 + xi * xi).powf(order));
    let fu = fft::forward(grid, u.values());
    let fv = fft::forward(grid, v.values());
    let mut acc = 0.0;
    for ((a, b), m) in fu.iter().zip(&fv).zip(&table) {
        acc += m * (a.re * b.re + a.im * b.im);
    }
    let n = grid.len() as f64;
    Ok(acc * grid.cell_volume() / n)
}

/// H^s norm of a grid function.
pub fn hs_norm(u: &GridFunction, order: f64) -> f64 {
    hs_inner(u, u, order).expect("same grid").max(0.0).sqrt()
}

/// Gram matrix of the indicator basis of an index set in the H^s inner
/// product, with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct SobolevGram {
    order: f64,
    set: IndexSet,
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl SobolevGram {
    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn set(&self) -> &IndexSet {
        &self.set
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower Cholesky factor L with G = L Lᵀ.
    pub fn chol_l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// Norm ‖c‖_G = sqrt(cᵀ G c) of a coefficient vector on the set.
    pub fn norm(&self, coeffs: &DVector<f64>) -> f64 {
        (coeffs.dot(&(&self.matrix * coeffs))).max(0.0).sqrt()
    }
}

/// Assembles the H^s Gram matrix of `set`'s indicator basis.
///
/// The Gram is a sub-block of a symmetric circulant, so only one spectral
/// kernel is computed; rows are gathered from it in parallel.
pub fn assemble_gram(set: &IndexSet, order: f64) -> Result<SobolevGram> {
    let kernel = spectral_kernel(set.grid(), |xi| (1.0 + xi * xi).powf(order))?;
    let grid = *set.grid();
    let idx = set.indices().to_vec();
    let m = idx.len();
    let rows = par::map_indexed(m, |r| {
        let a = grid.unflatten(idx[r]);
        let mut row = vec![0.0; m];
        for (c, &jb) in idx.iter().enumerate() {
            let b = grid.unflatten(jb);
            row[c] = kernel[wrap_offset(&grid, a, b)];
        }
        row
    });
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let matrix = DMatrix::from_row_slice(m, m, &flat);
    let chol = Cholesky::new(matrix.clone()).ok_or_else(|| {
        Error::Numerical(format!(
            "H^{order} Gram matrix of {} points is not positive definite",
            m
        ))
    })?;
    Ok(SobolevGram {
        order,
        set: set.clone(),
        matrix,
        chol,
    })
}

/// Dual norm of v as a functional on test functions supported on `set`:
/// sqrt(mᵀ G⁻¹ m) with m the L²-pairing vector h^dim v|_set.
///
/// With Gram order s this is the H^{-s} dual norm relative to the set.
pub fn dual_norm(v: &GridFunction, gram: &SobolevGram) -> Result<f64> {
    if !v.supported_on(gram.set()) {
        return Err(Error::Support("dual_norm argument".into()));
    }
    let h = v.grid().cell_volume();
    let m = DVector::from_vec(gram.set().gather(v)?.iter().map(|x| x * h).collect());
    let z = gram.solve(&m);
    Ok(m.dot(&z).max(0.0).sqrt())
}

/// Translation kernel of a radial spectral multiplier: entry `d` holds the
/// h^dim-weighted pairing of indicators at grid offset d, symmetrized over
/// per-axis reflection so the resulting Grams are exactly symmetric.
pub(crate) fn spectral_kernel<F: Fn(f64) -> f64>(
    grid: &crate::grid::Grid,
    multiplier: F,
) -> Result<Vec<f64>> {
    let table = grid.multiplier_table(multiplier);
    let spec: Vec<num_complex::Complex64> = table
        .iter()
        .map(|&m| num_complex::Complex64::new(m, 0.0))
        .collect();
    let raw = fft::inverse_real(grid, spec)?;
    let scale = grid.cell_volume();
    let n = grid.n();
    let mut kernel = vec![0.0; grid.len()];
    match grid.dim() {
        1 => {
            for d in 0..n {
                let r = (n - d) % n;
                kernel[d] = 0.5 * (raw[d] + raw[r]) * scale;
            }
        }
        _ => {
            for d0 in 0..n {
                let r0 = (n - d0) % n;
                for d1 in 0..n {
                    let r1 = (n - d1) % n;
                    let sum = raw[d0 * n + d1]
                        + raw[d0 * n + r1]
                        + raw[r0 * n + d1]
                        + raw[r0 * n + r1];
                    kernel[d0 * n + d1] = 0.25 * sum * scale;
                }
            }
        }
    }
    Ok(kernel)
}

pub(crate) fn wrap_offset(grid: &crate::grid::Grid, a: [usize; 2], b: [usize; 2]) -> usize {
    let n = grid.n();
    let d0 = (a[0] + n - b[0]) % n;
    match grid.dim() {
        1 => d0,
        _ => d0 * n + (a[1] + n - b[1]) % n,
    }
}
