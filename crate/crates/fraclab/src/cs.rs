//! Harmonic extension of grid functions to the upper half-space.
//!
//! A trace f extends to u(·, y) by multiplying f̂(ξ) with the radial profile
//! φ(|ξ|y), the decaying solution of t²φ'' + (1-2s)tφ' = t²φ with φ(0) = 1.
//! Everything here is a consequence of that one formula: the Poisson kernel
//! is its discrete Fourier partner, the weighted Neumann trace recovers
//! -a_s (-Δ)^s f, and the y-weighted energies collapse to homogeneous
//! Sobolev norms of f with constants given by profile quadrature.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{Grid, GridFunction};
use crate::par;
use crate::special::{extension_constant, kernel_symbol};

/// Tabulated extension profile φ for one order, with the trace constant a_s.
#[derive(Debug, Clone)]
pub struct CsProfile {
    order: f64,
    a_s: f64,
    points: Vec<f64>,
    values: Vec<f64>,
}

const PROFILE_T_MIN: f64 = 1e-4;
const PROFILE_T_MAX: f64 = 60.0;
const PROFILE_SAMPLES: usize = 2400;

/// Builds the profile table for order s on a log-spaced argument grid.
pub fn cs_profile(s: f64) -> Result<CsProfile> {
    check_order(s)?;
    let ratio = (PROFILE_T_MAX / PROFILE_T_MIN).ln() / (PROFILE_SAMPLES - 1) as f64;
    let points: Vec<f64> = (0..PROFILE_SAMPLES)
        .map(|i| PROFILE_T_MIN * (ratio * i as f64).exp())
        .collect();
    let values: Vec<f64> = points.iter().map(|&t| kernel_symbol(s, t)).collect();
    Ok(CsProfile {
        order: s,
        a_s: extension_constant(s),
        points,
        values,
    })
}

impl CsProfile {
    pub fn order(&self) -> f64 {
        self.order
    }

    /// Trace constant a_s = 2^{1-2s} Γ(1-s)/Γ(s).
    pub fn a_s(&self) -> f64 {
        self.a_s
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// φ(t) for arbitrary argument, by the same evaluation that filled the
    /// table.
    pub fn value(&self, t: f64) -> f64 {
        kernel_symbol(self.order, t)
    }

    /// Value at zero recovered from the table alone, removing the leading
    /// t^{2s} correction with two samples; should return 1.
    pub fn extrapolated_at_zero(&self) -> f64 {
        let ta = self.points[0];
        let j = self
            .points
            .iter()
            .position(|&t| t >= 4.0 * ta)
            .unwrap_or(1);
        let tb = self.points[j];
        let (pa, pb) = (self.values[0], self.values[j]);
        let (wa, wb) = (ta.powf(2.0 * self.order), tb.powf(2.0 * self.order));
        (pa * wb - pb * wa) / (wb - wa)
    }

    /// c = ∫ z^{1-2s-2δ} φ(z)² dz, the constant of the flat-derivative
    /// energy identity; finite for δ < 1-s.
    pub fn weight_constant(&self, delta: f64) -> Result<f64> {
        let s = self.order;
        if delta >= 1.0 - s {
            return Err(Error::Config(format!(
                "weighted energy of order {s} needs delta < {}, got {delta}",
                1.0 - s
            )));
        }
        let integrand: Vec<f64> = self
            .points
            .iter()
            .zip(&self.values)
            .map(|(&t, &p)| t.powf(1.0 - 2.0 * s - 2.0 * delta) * p * p)
            .collect();
        let head = {
            let e = 2.0 - 2.0 * s - 2.0 * delta;
            self.values[0] * self.values[0] * self.points[0].powf(e) / e
        };
        Ok(head + log_trapezoid(&self.points, &integrand))
    }

    /// d = ∫ z^{1-2s-2δ} (φ(z)² + φ'(z)²) dz, the constant of the full
    /// gradient energy identity; finite for δ < min(s, 1-s). The derivative
    /// enters through t^{1-2s} φ_s'(t) = -a_s φ_{1-s}(t), so d also equals
    /// the flat constant plus a_s² times the flat constant at order 1-s.
    pub fn gradient_weight_constant(&self, delta: f64) -> Result<f64> {
        let s = self.order;
        if delta >= s {
            return Err(Error::Config(format!(
                "gradient energy of order {s} needs delta < {s}, got {delta}"
            )));
        }
        if delta >= 1.0 - s {
            return Err(Error::Config(format!(
                "gradient energy of order {s} needs delta < {} for the flat part, got {delta}",
                1.0 - s
            )));
        }
        let a = self.a_s;
        let integrand: Vec<f64> = self
            .points
            .iter()
            .zip(&self.values)
            .map(|(&t, &p)| {
                let dp = a * t.powf(2.0 * s - 1.0) * kernel_symbol(1.0 - s, t);
                t.powf(1.0 - 2.0 * s - 2.0 * delta) * (p * p + dp * dp)
            })
            .collect();
        let head = {
            let t0 = self.points[0];
            let e_flat = 2.0 - 2.0 * s - 2.0 * delta;
            let e_grad = 2.0 * s - 2.0 * delta;
            let p0 = self.values[0];
            let q0 = kernel_symbol(1.0 - s, t0);
            p0 * p0 * t0.powf(e_flat) / e_flat + a * a * q0 * q0 * t0.powf(e_grad) / e_grad
        };
        Ok(head + log_trapezoid(&self.points, &integrand))
    }
}

/// Periodized Poisson kernel at height y, sampled on the grid with its peak
/// at the origin. Rotated into displacement order, its discrete convolution
/// with f (with the h quadrature weight) multiplies f̂_k by φ(|ξ_k| y); its
/// grid quadrature is exactly φ(0) = 1 at every height.
pub fn poisson_kernel(grid: &Grid, s: f64, y: f64) -> Result<GridFunction> {
    check_order(s)?;
    if y <= 0.0 {
        return Err(Error::Config(format!("kernel height must be positive, got {y}")));
    }
    let table = grid.multiplier_table(|xi| kernel_symbol(s, xi * y));
    let spectrum = table.iter().map(|&m| m.into()).collect();
    let by_displacement = fft::inverse_real(grid, spectrum)?;
    let scale = 1.0 / grid.cell_volume();
    let half = grid.n() / 2;
    let vals = (0..grid.len())
        .map(|j| {
            let idx = grid.unflatten(j);
            let src = grid.flatten([
                (idx[0] + half) % grid.n(),
                if grid.dim() == 2 {
                    (idx[1] + half) % grid.n()
                } else {
                    idx[1]
                },
            ]);
            by_displacement[src] * scale
        })
        .collect();
    GridFunction::from_values(*grid, vals)
}

/// Extension of one trace to a list of heights.
#[derive(Debug, Clone)]
pub struct Extension {
    trace: GridFunction,
    order: f64,
    levels: Vec<f64>,
    slices: Vec<GridFunction>,
    wrap_risk: bool,
}

impl Extension {
    pub fn trace(&self) -> &GridFunction {
        &self.trace
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn slices(&self) -> &[GridFunction] {
        &self.slices
    }

    pub fn slice(&self, i: usize) -> &GridFunction {
        &self.slices[i]
    }

    /// True when some height exceeds a quarter period, where the periodic
    /// images of the slowly decaying kernel are no longer negligible.
    pub fn wrap_risk(&self) -> bool {
        self.wrap_risk
    }
}

/// Extends f to every height in `levels` (positive, strictly ascending) by
/// per-level spectral multiplication with φ(|ξ| y). Levels run in parallel.
pub fn extend(f: &GridFunction, s: f64, levels: &[f64]) -> Result<Extension> {
    check_order(s)?;
    if levels.is_empty() {
        return Err(Error::Config("extension needs at least one height".into()));
    }
    if levels[0] <= 0.0 || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "extension heights must be positive and strictly ascending".into(),
        ));
    }
    let grid = *f.grid();
    let spectrum = fft::forward(&grid, f.values());
    let slices: Result<Vec<GridFunction>> = par::map_indexed(levels.len(), |i| {
        let y = levels[i];
        let table = grid.multiplier_table(|xi| kernel_symbol(s, xi * y));
        let shaped = spectrum
            .iter()
            .zip(&table)
            .map(|(z, m)| z * m)
            .collect();
        GridFunction::from_values(grid, fft::inverse_real(&grid, shaped)?)
    })
    .into_iter()
    .collect();
    let wrap_risk = *levels.last().unwrap() > grid.half_period() / 4.0;
    Ok(Extension {
        trace: f.clone(),
        order: s,
        levels: levels.to_vec(),
        slices: slices?,
        wrap_risk,
    })
}

/// Weighted Neumann trace lim y^{1-2s} ∂_y u(·, y) with its convergence
/// diagnostics.
#[derive(Debug, Clone)]
pub struct NeumannTrace {
    /// Extrapolated limit; equals -a_s (-Δ)^s f up to extrapolation error.
    pub values: GridFunction,
    /// L² distance of each height's difference quotient from the limit, in
    /// input order.
    pub residuals: Vec<f64>,
    /// Whether the residuals shrink monotonically as the heights do.
    pub monotone: bool,
}

const TRACE_STEP: f64 = 0.01;

/// Estimates the weighted Neumann derivative at height y for each height,
/// then removes the y^{2-2s}, y² and y^{4-2s} corrections by a least-squares
/// fit across heights; heights must be ≥ 3, positive, strictly decreasing.
pub fn neumann_trace(f: &GridFunction, s: f64, heights: &[f64]) -> Result<NeumannTrace> {
    check_order(s)?;
    if heights.len() < 3 {
        return Err(Error::Config(format!(
            "trace extrapolation needs at least 3 heights, got {}",
            heights.len()
        )));
    }
    if heights.last().copied().unwrap_or(0.0) <= 0.0
        || heights.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::Config(
            "trace heights must be positive and strictly decreasing".into(),
        ));
    }
    let grid = *f.grid();
    let spectrum = fft::forward(&grid, f.values());
    let m = heights.len();
    let quotients: Result<Vec<GridFunction>> = par::map_indexed(m, |i| {
        let y = heights[i];
        let w = y.powf(1.0 - 2.0 * s) / (2.0 * TRACE_STEP * y);
        let table = grid.multiplier_table(|xi| {
            w * (kernel_symbol(s, xi * y * (1.0 + TRACE_STEP))
                - kernel_symbol(s, xi * y * (1.0 - TRACE_STEP)))
        });
        let shaped = spectrum
            .iter()
            .zip(&table)
            .map(|(z, m)| z * m)
            .collect();
        GridFunction::from_values(grid, fft::inverse_real(&grid, shaped)?)
    })
    .into_iter()
    .collect();
    let quotients = quotients?;

    // correction exponents after the constant term; with only 3 heights the
    // slowest two have to do
    let exps: &[f64] = if m >= 4 {
        &[2.0 - 2.0 * s, 2.0, 4.0 - 2.0 * s]
    } else {
        &[2.0 - 2.0 * s, 2.0]
    };
    let cols = 1 + exps.len();
    let vand = DMatrix::from_fn(m, cols, |i, j| {
        if j == 0 {
            1.0
        } else {
            heights[i].powf(exps[j - 1])
        }
    });
    let normal = vand.transpose() * &vand;
    let mut e0 = DVector::zeros(cols);
    e0[0] = 1.0;
    let z = normal
        .svd(true, true)
        .solve(&e0, 1e-13)
        .map_err(|e| Error::Numerical(format!("trace extrapolation weights: {e}")))?;
    let weights = vand * z;

    let mut values = GridFunction::zeros(grid);
    for (w, q) in weights.iter().zip(&quotients) {
        values.add_scaled(*w, q)?;
    }
    let residuals: Vec<f64> = quotients
        .iter()
        .map(|q| {
            let mut d = q.clone();
            d.add_scaled(-1.0, &values).expect("same grid");
            d.norm_l2()
        })
        .collect();
    let floor = 1e-12 * residuals.first().copied().unwrap_or(0.0);
    let monotone = residuals.windows(2).all(|w| w[1] <= w[0] + floor);
    Ok(NeumannTrace {
        values,
        residuals,
        monotone,
    })
}

/// One weighted half-space energy with its predicted value.
#[derive(Debug, Clone, Copy)]
pub struct EnergyReport {
    /// Quadrature value of the squared weighted norm over (0, y_max].
    pub energy: f64,
    /// Profile constant times the matching homogeneous trace norm squared.
    pub reference: f64,
    /// energy / reference; approaches 1 as y_max grows and levels refine.
    pub ratio: f64,
    /// The profile constant used in the reference.
    pub constant: f64,
}

const ENERGY_LEVELS: usize = 600;
const ENERGY_HEAD: f64 = 1e-4;

/// ‖y^{(1-2s)/2-δ} |D'|^N u‖² over grid × (0, y_max], by per-level Parseval
/// energies and log-spaced quadrature in y, compared against
/// c_{s,δ} ‖f‖²_{Ḣ^{s+δ+N-1}}. The zero frequency is excluded throughout:
/// the identity concerns the mean-free part of the trace.
pub fn weighted_energy(
    f: &GridFunction,
    s: f64,
    delta: f64,
    n_deriv: u32,
    y_max: f64,
) -> Result<EnergyReport> {
    let profile = cs_profile(s)?;
    let constant = profile.weight_constant(delta)?;
    if y_max <= 0.0 {
        return Err(Error::Config(format!("energy cutoff must be positive, got {y_max}")));
    }
    let grid = *f.grid();
    let spectrum = fft::forward(&grid, f.values());
    let n2 = 2.0 * n_deriv as f64;
    let mode_weights: Vec<f64> = (0..grid.len())
        .map(|k| {
            let xi = grid.frequency_norm(k);
            if xi == 0.0 {
                0.0
            } else {
                xi.powf(n2) * spectrum[k].norm_sqr()
            }
        })
        .collect();
    let parseval = grid.cell_volume() / grid.len() as f64;
    let level_energy = |y: f64| -> f64 {
        let sum: f64 = mode_weights
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                if w == 0.0 {
                    0.0
                } else {
                    let p = kernel_symbol(s, grid.frequency_norm(k) * y);
                    w * p * p
                }
            })
            .sum();
        sum * parseval
    };
    let energy = quadrature_in_y(level_energy, s, delta, y_max);
    let reference = constant * homogeneous_sq(&grid, &spectrum, s + delta + n_deriv as f64 - 1.0);
    Ok(report(energy, reference, constant))
}

/// ‖y^{(1-2s)/2-δ} ∇u‖² over grid × (0, y_max] against
/// d_{s,δ} ‖f‖²_{Ḣ^{s+δ}}, with ∇ covering both the grid directions and y.
pub fn weighted_gradient_energy(
    f: &GridFunction,
    s: f64,
    delta: f64,
    y_max: f64,
) -> Result<EnergyReport> {
    let profile = cs_profile(s)?;
    let constant = profile.gradient_weight_constant(delta)?;
    if y_max <= 0.0 {
        return Err(Error::Config(format!("energy cutoff must be positive, got {y_max}")));
    }
    let grid = *f.grid();
    let spectrum = fft::forward(&grid, f.values());
    let a = profile.a_s();
    let mode_weights: Vec<f64> = (0..grid.len())
        .map(|k| {
            let xi = grid.frequency_norm(k);
            if xi == 0.0 {
                0.0
            } else {
                xi * xi * spectrum[k].norm_sqr()
            }
        })
        .collect();
    let parseval = grid.cell_volume() / grid.len() as f64;
    let level_energy = |y: f64| -> f64 {
        let sum: f64 = mode_weights
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                if w == 0.0 {
                    0.0
                } else {
                    let t = grid.frequency_norm(k) * y;
                    let p = kernel_symbol(s, t);
                    let dp = a * t.powf(2.0 * s - 1.0) * kernel_symbol(1.0 - s, t);
                    w * (p * p + dp * dp)
                }
            })
            .sum();
        sum * parseval
    };
    // the flat head patch follows the same shape as the plain energy; the
    // derivative part carries its own z^{4s-2} factor, pulled out exactly
    // with the profile frozen at the lowest level
    let y_min = y_max * ENERGY_HEAD;
    let mut head = 0.0;
    for (k, &w) in mode_weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let xi = grid.frequency_norm(k);
        let t = xi * y_min;
        let p = kernel_symbol(s, t);
        let q = kernel_symbol(1.0 - s, t);
        let e_flat = 2.0 - 2.0 * s - 2.0 * delta;
        let e_grad = 2.0 * s - 2.0 * delta;
        head += w
            * (p * p * y_min.powf(e_flat) / e_flat
                + a * a * xi.powf(4.0 * s - 2.0) * q * q * y_min.powf(e_grad) / e_grad);
    }
    head *= parseval;
    let energy = head + log_levels_integral(level_energy, s, delta, y_min, y_max);
    let reference = constant * homogeneous_sq(&grid, &spectrum, s + delta);
    Ok(report(energy, reference, constant))
}

fn report(energy: f64, reference: f64, constant: f64) -> EnergyReport {
    let ratio = if reference == 0.0 {
        if energy == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        energy / reference
    };
    EnergyReport {
        energy,
        reference,
        ratio,
        constant,
    }
}

fn quadrature_in_y<F: Fn(f64) -> f64>(level_energy: F, s: f64, delta: f64, y_max: f64) -> f64 {
    let y_min = y_max * ENERGY_HEAD;
    let e = 2.0 - 2.0 * s - 2.0 * delta;
    let head = level_energy(y_min) * y_min.powf(e) / e;
    head + log_levels_integral(level_energy, s, delta, y_min, y_max)
}

fn log_levels_integral<F: Fn(f64) -> f64>(
    level_energy: F,
    s: f64,
    delta: f64,
    y_min: f64,
    y_max: f64,
) -> f64 {
    let step = (y_max / y_min).ln() / (ENERGY_LEVELS - 1) as f64;
    let g: Vec<f64> = (0..ENERGY_LEVELS)
        .map(|i| {
            let y = y_min * (step * i as f64).exp();
            level_energy(y) * y.powf(2.0 - 2.0 * s - 2.0 * delta)
        })
        .collect();
    let mut acc = 0.0;
    for w in g.windows(2) {
        acc += 0.5 * (w[0] + w[1]);
    }
    acc * step
}

/// (h/n)^dim Σ_{k≠0} |ξ_k|^{2σ} |f̂_k|², the squared homogeneous seminorm.
fn homogeneous_sq(grid: &Grid, spectrum: &[num_complex::Complex64], sigma: f64) -> f64 {
    let sum: f64 = (0..grid.len())
        .map(|k| {
            let xi = grid.frequency_norm(k);
            if xi == 0.0 {
                0.0
            } else {
                xi.powf(2.0 * sigma) * spectrum[k].norm_sqr()
            }
        })
        .sum();
    sum * grid.cell_volume() / grid.len() as f64
}

fn log_trapezoid(points: &[f64], integrand: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..points.len() {
        let dln = (points[i] / points[i - 1]).ln();
        acc += 0.5 * (integrand[i - 1] * points[i - 1] + integrand[i] * points[i]) * dln;
    }
    acc
}

fn check_order(s: f64) -> Result<()> {
    if !(0.0 < s && s < 1.0) {
        return Err(Error::Config(format!(
            "fractional order must lie in (0, 1), got {s}"
        )));
    }
    Ok(())
}
