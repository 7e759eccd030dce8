//! Desk-scale experiments that measure how ill-posed the measurement map
//! is: singular-value decay of the window-to-interior operator, the cost of
//! steering solutions to a target, a unique-continuation probe, collapse of
//! DN differences under potential oscillation, and control-based recovery
//! of potential-difference functionals.
//!
//! Every experiment is a pure function of its config snapshot; the only
//! randomness is drawn from the seeded generator inside the snapshot, so a
//! rerun reproduces every row bit for bit. Quantitative regression bounds
//! live in [`frozen`] and are measurements from the first recorded run of
//! the default configuration, committed as reproducibility guards; they are
//! not theory constants, which the experiments only fit and report.

use std::time::Instant;

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{
    assemble_forward, gsvd, truncated_control, ControlResult, ForwardOperator, GsvdResult,
    OmegaGeometry,
};
use crate::dn::{assemble_dn, dn_pairing, dn_partial_norm};
use crate::error::{Error, Result};
use crate::exterior::{dirichlet_spectrum, DirichletSolver};
use crate::fracop::{assemble_operator, OperatorMatrix, Potential};
use crate::grid::{
    make_domains, make_domains_two_windows, DomainSpec, Grid, GridFunction, IndexSet, SetLabel,
};
use crate::sobolev::{assemble_gram, dual_norm};

/// Regression bounds frozen from the first recorded run of the default
/// configuration (dim 1, N = 256, L = 8, s = 0.5, unit radii, zero
/// potential, seed 7). Reruns must stay within them; they are measured
/// values with headroom, not asserted theory.
pub mod frozen {
    /// σ_20/σ_1 of the default forward map stays below this
    /// (measured 4.97e-15).
    pub const SV_RATIO_20: f64 = 1e-12;
    /// Decades spanned by the flux size η across the default sample family.
    pub const QUC_ETA_DECADES: f64 = 3.0;
    /// The interior dual norm d never falls below this across the family.
    pub const QUC_D_FLOOR: f64 = 1e-2;
    /// Orders of magnitude the DN gap norm falls across the default
    /// oscillation family while the L² potential gap stays fixed
    /// (measured 5.14).
    pub const DN_COLLAPSE_ORDERS: f64 = 4.0;
    /// Curvature of log cost against log(1/ε) fitted over the frontier
    /// rows of the default cost curve stays above this (measured 0.31;
    /// pointwise slope monotonicity is too brittle here because
    /// near-degenerate singular pairs flatten stretches of the ladder).
    pub const COST_CURVATURE_MIN: f64 = 0.05;
    /// Relative error of the recovered functional at the tightest default
    /// tolerance (measured 4.3e-3, set by the partner target's deviation
    /// from one on the potential step).
    pub const RECOVER_REL_ERROR: f64 = 0.05;
    /// The recovered value moves by no more than this, relatively, over
    /// the last tightening decade once the controls have converged.
    pub const RECOVER_STALL: f64 = 1e-6;
}

/// Everything an experiment needs, in serializable form.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LabConfig {
    pub dim: usize,
    pub n: usize,
    pub half_period: f64,
    pub order: f64,
    pub omega_radius: f64,
    pub gap: f64,
    pub window_radius: f64,
    pub potential: PotentialKind,
    pub seed: u64,
}

impl Default for LabConfig {
    fn default() -> LabConfig {
        LabConfig {
            dim: 1,
            n: 256,
            half_period: 8.0,
            order: 0.5,
            omega_radius: 1.0,
            gap: 1.0,
            window_radius: 1.0,
            potential: PotentialKind::Zero,
            seed: 7,
        }
    }
}

impl LabConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n, self.half_period)
    }

    pub fn domain_spec(&self) -> DomainSpec {
        DomainSpec {
            omega_radius: self.omega_radius,
            gap: self.gap,
            window_radius: self.window_radius,
        }
    }

    /// Interior region and one control window.
    pub fn single(&self) -> Result<(Grid, IndexSet, IndexSet)> {
        let grid = self.grid()?;
        let (omega, window) = make_domains(grid, self.domain_spec())?;
        Ok((grid, omega, window))
    }

    /// Interior region and two disjoint windows on opposite sides.
    pub fn two_windows(&self) -> Result<(Grid, IndexSet, IndexSet, IndexSet)> {
        let grid = self.grid()?;
        let (omega, w1, w2) = make_domains_two_windows(grid, self.domain_spec())?;
        Ok((grid, omega, w1, w2))
    }

    pub fn build_potential(&self, grid: Grid, omega: &IndexSet) -> Result<Potential> {
        self.potential
            .build(grid, self.order, omega, self.omega_radius)
    }

    pub fn operator(&self, grid: Grid, omega: &IndexSet) -> Result<OperatorMatrix> {
        let q = self.build_potential(grid, omega)?;
        assemble_operator(grid, self.order, &q)
    }
}

/// Named recipe for the interior potential.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    #[default]
    Zero,
    Constant {
        level: f64,
    },
    Bump {
        amplitude: f64,
    },
    Oscillatory {
        amplitude: f64,
        wavenumber: f64,
    },
    /// Constant shift placing the operator's first interior eigenvalue at
    /// `offset`; offset 0 makes every solve degenerate on purpose.
    Eigenshift {
        offset: f64,
    },
    /// Full-grid samples read from a CSV file (the last field of each data
    /// row), then restricted to the interior region.
    File {
        path: String,
    },
}

impl PotentialKind {
    pub fn build(
        &self,
        grid: Grid,
        order: f64,
        omega: &IndexSet,
        radius: f64,
    ) -> Result<Potential> {
        match self {
            PotentialKind::Zero => Ok(Potential::zero(grid)),
            PotentialKind::Constant { level } => Potential::constant_on(omega, *level),
            PotentialKind::Bump { amplitude } => {
                let profile = bump_profile(grid, radius).scaled(*amplitude);
                Potential::from_values_on(omega, &profile)
            }
            PotentialKind::Oscillatory {
                amplitude,
                wavenumber,
            } => {
                let profile = oscillatory_profile(grid, *wavenumber, radius).scaled(*amplitude);
                Potential::from_values_on(omega, &profile)
            }
            PotentialKind::Eigenshift { offset } => {
                let base = assemble_operator(grid, order, &Potential::zero(grid))?;
                let lambda = dirichlet_spectrum(&base, omega, 1)?[0];
                Potential::constant_on(omega, offset - lambda)
            }
            PotentialKind::File { path } => {
                let profile = profile_from_file(grid, path)?;
                Potential::from_values_on(omega, &profile)
            }
        }
    }
}

/// Reads one grid's worth of samples from a CSV file: the last comma field
/// of every data row, in flat-index order. Header rows and `#` comments are
/// skipped, so files written by the exporter read back unchanged.
fn profile_from_file(grid: Grid, path: &str) -> Result<GridFunction> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read potential file {path}: {e}")))?;
    let mut values = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.rsplit(',').next().unwrap().trim();
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if values.is_empty() => continue,
            Err(_) => {
                return Err(Error::Config(format!(
                    "unreadable value {field:?} in potential file {path}"
                )))
            }
        }
    }
    if values.len() != grid.len() {
        return Err(Error::Config(format!(
            "potential file {path} holds {} values, the grid has {} points",
            values.len(),
            grid.len()
        )));
    }
    GridFunction::from_values(grid, values)
}

/// C^∞ profile equal to 1 at 0 and vanishing identically for |t| ≥ 1.
pub fn smooth_bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

/// Product bump supported on the centered box of the given radius.
pub fn bump_profile(grid: Grid, radius: f64) -> GridFunction {
    GridFunction::sample(grid, |x| x.iter().map(|&t| smooth_bump(t / radius)).product())
}

fn smooth_step_down(u: f64) -> f64 {
    if u <= 0.0 {
        1.0
    } else if u >= 1.0 {
        0.0
    } else {
        let a = (-1.0 / (1.0 - u)).exp();
        let b = (-1.0 / u).exp();
        a / (a + b)
    }
}

/// C^∞ flat top: exactly 1 on the half-radius box, easing to 0 at the box
/// edge.
pub fn plateau_profile(grid: Grid, radius: f64) -> GridFunction {
    GridFunction::sample(grid, |x| {
        x.iter()
            .map(|&t| smooth_step_down(2.0 * t.abs() / radius - 1.0))
            .product()
    })
}

/// sin(k x₀) under the same bump envelope; the envelope keeps the profile
/// smooth across the box edge so its interaction with smooth solutions
/// genuinely decays in k instead of being dominated by edge leakage.
pub fn oscillatory_profile(grid: Grid, wavenumber: f64, radius: f64) -> GridFunction {
    if wavenumber == 0.0 {
        return bump_profile(grid, radius);
    }
    GridFunction::sample(grid, |x| {
        let env: f64 = x.iter().map(|&t| smooth_bump(t / radius)).product();
        (wavenumber * x[0]).sin() * env
    })
}

/// cos(k x₀) under a fourth-power cosine envelope. The even oscillation
/// couples to the even bulk of the solution products, so the low-k members
/// start strong, and the envelope's spectrum is a narrow band around ±k,
/// so the high-k members are free of sidelobe leakage: together these give
/// the oscillation family its widest honest dynamic range.
pub fn dn_gap_profile(grid: Grid, wavenumber: f64, radius: f64) -> GridFunction {
    GridFunction::sample(grid, |x| {
        let env: f64 = x
            .iter()
            .map(|&t| {
                if t.abs() >= radius {
                    0.0
                } else {
                    (std::f64::consts::FRAC_PI_2 * t / radius).cos().powi(4)
                }
            })
            .product();
        (wavenumber * x[0]).cos() * env
    })
}

/// Least-squares line y ≈ intercept + slope · x; returns the rms residual
/// as the third component.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Config(format!(
            "line fit needs two or more paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Numerical("fit abscissa has no spread".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((intercept, slope, rms))
}

/// Least-squares parabola y ≈ a + b·x + c·x²; returns (a, b, c, rms).
pub fn quadratic_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Config(format!(
            "parabola fit needs three or more paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    let mut design = nalgebra::DMatrix::zeros(n, 3);
    for (i, &v) in x.iter().enumerate() {
        design[(i, 0)] = 1.0;
        design[(i, 1)] = v;
        design[(i, 2)] = v * v;
    }
    let rhs = DVector::from_column_slice(y);
    let normal = design.transpose() * &design;
    let coef = nalgebra::Cholesky::new(normal)
        .ok_or_else(|| Error::Numerical("fit abscissa has no quadratic spread".into()))?
        .solve(&(design.transpose() * &rhs));
    let resid = &design * &coef - rhs;
    let rms = (resid.norm_squared() / n as f64).sqrt();
    Ok((coef[0], coef[1], coef[2], rms))
}

/// Smallest index from which the sequence is strictly decreasing to its
/// end; None for sequences shorter than 2 or with no decreasing tail.
pub(crate) fn eventually_decreasing(vals: &[f64]) -> Option<usize> {
    if vals.len() < 2 {
        return None;
    }
    let mut onset = vals.len() - 1;
    for j in (0..vals.len() - 1).rev() {
        if vals[j] > vals[j + 1] {
            onset = j;
        } else {
            break;
        }
    }
    if onset == vals.len() - 1 {
        None
    } else {
        Some(onset)
    }
}

/// One fitted exponent with its residual.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub name: String,
    pub intercept: f64,
    pub slope: f64,
    pub residual: f64,
}

/// One named property check with its measured evidence.
#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Table-plus-verdicts output of one experiment run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRecord {
    pub name: String,
    pub config: LabConfig,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub fits: Vec<FitReport>,
    pub assertions: Vec<Assertion>,
    pub notes: Vec<String>,
    pub wall_time: f64,
}

impl ExperimentRecord {
    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }
}

fn push_assert(list: &mut Vec<Assertion>, name: &str, passed: bool, detail: String) {
    list.push(Assertion {
        name: name.into(),
        passed,
        detail,
    });
}

/// Records the whole computed σ list, runs the decay signatures on the part
/// above the rank cutoff (strict ordering, superpolynomial falloff), and
/// checks the frozen σ_20/σ_1 bound on the full list.
pub fn sv_decay_experiment(config: &LabConfig) -> Result<ExperimentRecord> {
    let t0 = Instant::now();
    let (grid, omega, window) = config.single()?;
    let op = config.operator(grid, &omega)?;
    let fwd = assemble_forward(&op, &omega, &window, OmegaGeometry::MassWeighted)?;
    let g = gsvd(&fwd)?;
    let rank = g.numerical_rank();
    let sigma = &g.sigma()[..rank];

    let rows: Vec<Vec<f64>> = g
        .sigma()
        .iter()
        .enumerate()
        .map(|(j, &s)| vec![(j + 1) as f64, s])
        .collect();
    let mut fits = Vec::new();
    let mut assertions = Vec::new();
    let mut notes = Vec::new();

    push_assert(
        &mut assertions,
        "sufficient_rank",
        rank >= 5,
        format!("numerical rank {rank}"),
    );
    if rank < 5 {
        notes.push("rank below 5: decay fits inconclusive".into());
    } else {
        for gamma in [1.0, 0.5] {
            let x: Vec<f64> = (1..=rank).map(|j| (j as f64).powf(gamma)).collect();
            let y: Vec<f64> = sigma.iter().map(|s| s.ln()).collect();
            let (intercept, slope, residual) = linear_fit(&x, &y)?;
            fits.push(FitReport {
                name: format!("log_sigma_vs_j^{gamma}"),
                intercept,
                slope,
                residual,
            });
        }
    }

    let strict = sigma.windows(2).all(|w| w[0] > w[1]);
    push_assert(
        &mut assertions,
        "sigma_strictly_decreasing",
        strict,
        format!("{rank} recorded values"),
    );

    for p in [1i32, 2, 3] {
        let vals: Vec<f64> = sigma
            .iter()
            .enumerate()
            .map(|(j, &s)| s * ((j + 1) as f64).powi(p))
            .collect();
        let onset = eventually_decreasing(&vals);
        let passed = match onset {
            Some(j0) => j0 + 3 <= rank && j0 <= (3 * rank) / 4,
            None => false,
        };
        push_assert(
            &mut assertions,
            &format!("superpolynomial_p{p}"),
            passed,
            format!("sigma_j * j^{p} decreasing from index {onset:?} of {rank}"),
        );
    }

    notes.push(format!("numerical rank {rank} of {} computed values", g.len()));
    if g.len() >= 20 {
        let ratio = g.sigma()[19] / g.sigma()[0];
        push_assert(
            &mut assertions,
            "sv_ratio_20_regression",
            ratio <= frozen::SV_RATIO_20,
            format!("sigma_20/sigma_1 = {ratio:.3e}, bound {:.1e}", frozen::SV_RATIO_20),
        );
    } else {
        push_assert(
            &mut assertions,
            "sv_ratio_20_regression",
            false,
            format!("only {} computed values, ratio unavailable", g.len()),
        );
    }

    Ok(ExperimentRecord {
        name: "sv-decay".into(),
        config: config.clone(),
        columns: vec!["j (index)".into(), "sigma_j (dimensionless)".into()],
        rows,
        fits,
        assertions,
        notes,
        wall_time: t0.elapsed().as_secs_f64(),
    })
}

/// Deterministic generic target on Ω for the cost curve: a seeded random
/// node vector, so the spectral coefficients have no accidental symmetry.
/// Builds the stock cost-curve target: a signed polynomial tail over the
/// reachable left directions, so every truncation level buys a strict
/// improvement and the budget ladder sweeps the whole spectrum.
pub fn default_cost_target(config: &LabConfig) -> Result<GridFunction> {
    let (grid, omega, window) = config.single()?;
    let op = config.operator(grid, &omega)?;
    let fwd = assemble_forward(&op, &omega, &window, OmegaGeometry::MassWeighted)?;
    let g = gsvd(&fwd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut coeffs = vec![0.0; omega.len()];
    for j in 0..g.numerical_rank() {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let weight = sign * ((j + 1) as f64).powi(-4);
        for (c, &w) in coeffs.iter_mut().zip(g.w_column(j).iter()) {
            *c += weight * w;
        }
    }
    omega.scatter(&coeffs)
}

pub fn default_epsilons() -> Vec<f64> {
    vec![
        1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6,
    ]
}

const MU_GRID: [f64; 8] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0];

/// For each error budget ε, finds the cheapest truncation level achieving
/// it and records the cost; fits log cost against ε^{-μ} over a μ grid and
/// checks monotonicity plus convexity of the cost curve.
pub fn cost_curve_experiment(
    config: &LabConfig,
    v_target: &GridFunction,
    epsilons: &[f64],
) -> Result<ExperimentRecord> {
    let t0 = Instant::now();
    if epsilons.is_empty() {
        return Err(Error::Config("no error budgets given".into()));
    }
    let (grid, omega, window) = config.single()?;
    let op = config.operator(grid, &omega)?;
    let gram_omega = assemble_gram(&omega, config.order)?;

    let mut coeffs = DVector::from_vec(omega.gather(v_target)?);
    let norm = gram_omega.norm(&coeffs);
    if norm == 0.0 {
        return Err(Error::Config("target vanishes on the interior region".into()));
    }
    let mut notes = Vec::new();
    if (norm - 1.0).abs() > 1e-8 {
        coeffs /= norm;
        notes.push(format!(
            "target renormalized to unit interior Sobolev norm (was {norm:.6e})"
        ));
    }
    let v = omega.scatter(coeffs.as_slice())?;

    let fwd = assemble_forward(&op, &omega, &window, OmegaGeometry::MassWeighted)?;
    let g = gsvd(&fwd)?;
    let rank = g.numerical_rank();
    let ladder: Vec<ControlResult> = (0..=rank)
        .map(|l| truncated_control(&fwd, &g, &v, l))
        .collect::<Result<_>>()?;

    let mut eps_sorted: Vec<f64> = epsilons.to_vec();
    eps_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if eps_sorted != epsilons {
        notes.push("error budgets reordered to descending".into());
    }

    let mut rows = Vec::new();
    for &eps in &eps_sorted {
        if eps <= 0.0 {
            return Err(Error::Config(format!("error budget must be positive, got {eps}")));
        }
        match ladder.iter().position(|r| r.approx_error <= eps) {
            Some(l) => rows.push(vec![
                eps,
                ladder[l].cost,
                l as f64,
                ladder[l].approx_error,
                0.0,
            ]),
            None => rows.push(vec![
                eps,
                ladder[rank].cost,
                rank as f64,
                ladder[rank].approx_error,
                1.0,
            ]),
        }
    }

    let mut assertions = Vec::new();
    let monotone = rows.windows(2).all(|w| w[1][1] + 1e-12 >= w[0][1]);
    push_assert(
        &mut assertions,
        "cost_nonincreasing_in_epsilon",
        monotone,
        format!("{} budgets, descending", rows.len()),
    );
    let saturated = rows.iter().filter(|r| r[4] == 1.0).count();
    if saturated > 0 {
        notes.push(format!(
            "{saturated} budgets below the achievable floor {:.3e}",
            ladder[rank].approx_error
        ));
    }

    // convexity of log cost against log(1/ε), read from the fitted
    // curvature; rows whose achieved error overshoots the budget by more
    // than a decade sit past the genuine frontier and are left out
    let frontier: Vec<&Vec<f64>> = rows
        .iter()
        .filter(|r| r[4] == 0.0 && r[1] > 0.0 && r[3] >= r[0] / 10.0)
        .collect();
    if frontier.len() >= 4 {
        let x: Vec<f64> = frontier.iter().map(|r| (1.0 / r[0]).ln()).collect();
        let y: Vec<f64> = frontier.iter().map(|r| r[1].ln()).collect();
        let (_, _, curvature, _) = quadratic_fit(&x, &y)?;
        push_assert(
            &mut assertions,
            "log_cost_convex",
            curvature >= frozen::COST_CURVATURE_MIN,
            format!(
                "fitted curvature {curvature:.4} over {} frontier rows, bound {}",
                frontier.len(),
                frozen::COST_CURVATURE_MIN
            ),
        );
    } else {
        push_assert(
            &mut assertions,
            "log_cost_convex",
            false,
            format!("only {} frontier rows", frontier.len()),
        );
    }

    let mut fits = Vec::new();
    let usable: Vec<&Vec<f64>> = rows.iter().filter(|r| r[4] == 0.0 && r[1] > 0.0).collect();
    if usable.len() >= 3 {
        let mut best: Option<(f64, f64)> = None;
        for &mu in &MU_GRID {
            let x: Vec<f64> = usable.iter().map(|r| r[0].powf(-mu)).collect();
            let y: Vec<f64> = usable.iter().map(|r| r[1].ln()).collect();
            let (intercept, slope, residual) = linear_fit(&x, &y)?;
            fits.push(FitReport {
                name: format!("log_cost_vs_eps^-{mu}"),
                intercept,
                slope,
                residual,
            });
            if best.is_none_or(|(_, r)| residual < r) {
                best = Some((mu, residual));
            }
        }
        if let Some((mu, residual)) = best {
            notes.push(format!(
                "best-fit growth exponent mu = {mu} (rms residual {residual:.4})"
            ));
        }
    } else {
        notes.push("too few usable budgets for growth-exponent fits".into());
    }

    Ok(ExperimentRecord {
        name: "cost-curve".into(),
        config: config.clone(),
        columns: vec![
            "epsilon (interior L2 budget)".into(),
            "cost (window Sobolev norm)".into(),
            "level (truncation terms)".into(),
            "achieved_error (interior L2)".into(),
            "saturated (0 or 1)".into(),
        ],
        rows,
        fits,
        assertions,
        notes,
        wall_time: t0.elapsed().as_secs_f64(),
    })
}

/// Interior targets for the unique-continuation probe: one bump and a
/// ladder of envelope-modulated oscillations of rising wavenumber.
pub fn default_quc_samples(config: &LabConfig) -> Result<Vec<GridFunction>> {
    let (grid, omega, _) = config.single()?;
    let mut out = Vec::new();
    for k in [0.0, 2.0, 4.0, 8.0, 16.0, 32.0, 48.0] {
        let p = oscillatory_profile(grid, k, config.omega_radius).restricted_to(&omega)?;
        out.push(p);
    }
    Ok(out)
}

/// For each interior target v (normalized in L²(Ω)), solves the source
/// problem and compares the dual-norm size η of its flux on the window
/// against the dual-norm size d of v itself: η collapsing while d stays
/// put is the unique-continuation ill-posedness signature.
pub fn quc_experiment(config: &LabConfig, v_samples: &[GridFunction]) -> Result<ExperimentRecord> {
    let t0 = Instant::now();
    let (grid, omega, window) = config.single()?;
    let op = config.operator(grid, &omega)?;
    let gram_w = assemble_gram(&window, config.order)?;
    let gram_omega = assemble_gram(&omega, config.order)?;
    let solver = DirichletSolver::new(&op, &omega)?;
    let h = grid.cell_volume();

    let mut rows = Vec::new();
    for (i, v) in v_samples.iter().enumerate() {
        if !v.supported_on(&omega) {
            return Err(Error::Support(format!("probe sample {i}")));
        }
        let l2 = v.norm_l2();
        if l2 == 0.0 {
            rows.push(vec![i as f64, 0.0, 0.0, 0.0]);
            continue;
        }
        let vn = v.scaled(1.0 / l2);
        let sol = solver.solve_source(&vn)?;
        let flux = op.apply(&sol.w)?.scaled(1.0 / h);
        let eta = dual_norm(&flux.restricted_to(&window)?, &gram_w)?;
        let d = dual_norm(&vn.restricted_to(&omega)?, &gram_omega)?;
        rows.push(vec![i as f64, eta, d, 1.0]);
    }

    let mut assertions = Vec::new();
    let live: Vec<&Vec<f64>> = rows.iter().filter(|r| r[3] > 0.0).collect();
    push_assert(
        &mut assertions,
        "qualitative_ucp",
        live.iter().all(|r| r[1] > 0.0),
        format!("{} nonzero samples, min eta {:.3e}", live.len(), {
            live.iter().map(|r| r[1]).fold(f64::INFINITY, f64::min)
        }),
    );
    push_assert(
        &mut assertions,
        "dual_norm_below_l2",
        rows.iter().all(|r| r[2] <= r[3] + 1e-12),
        "d <= ||v||_L2 per row".into(),
    );
    if live.len() >= 2 {
        let max_eta = live.iter().map(|r| r[1]).fold(0.0f64, f64::max);
        let min_eta = live.iter().map(|r| r[1]).fold(f64::INFINITY, f64::min);
        let decades = (max_eta / min_eta).log10();
        push_assert(
            &mut assertions,
            "eta_spans_decades",
            decades >= frozen::QUC_ETA_DECADES,
            format!("eta spans {decades:.2} decades, need {}", frozen::QUC_ETA_DECADES),
        );
        let d_floor = live.iter().map(|r| r[2]).fold(f64::INFINITY, f64::min);
        push_assert(
            &mut assertions,
            "d_bounded_below",
            d_floor >= frozen::QUC_D_FLOOR,
            format!("min d = {d_floor:.3e}, floor {:.1e}", frozen::QUC_D_FLOOR),
        );
    }

    Ok(ExperimentRecord {
        name: "quc".into(),
        config: config.clone(),
        columns: vec![
            "sample (index)".into(),
            "eta (window dual Sobolev norm of flux)".into(),
            "d (interior dual Sobolev norm)".into(),
            "l2_norm (after normalization)".into(),
        ],
        rows,
        fits: Vec::new(),
        assertions,
        notes: Vec::new(),
        wall_time: t0.elapsed().as_secs_f64(),
    })
}

pub fn default_wavenumbers() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0, 12.0, 16.0, 24.0, 32.0]
}

/// L² amplitude of the potential gaps in the oscillation family, small
/// enough that the response stays linear in the gap down to the last
/// wavenumber instead of flattening onto the quadratic tail.
pub const DN_GAP_AMPLITUDE: f64 = 1e-4;

/// Records how the partial DN gap between q and q + (oscillation of rising
/// wavenumber) collapses while the L² size of the potential gap is pinned
/// by construction.
pub fn dn_modulus_experiment(
    config: &LabConfig,
    wavenumbers: &[f64],
) -> Result<ExperimentRecord> {
    let t0 = Instant::now();
    if wavenumbers.is_empty() {
        return Err(Error::Config("no wavenumbers given".into()));
    }
    let (grid, omega, w1, w2) = config.two_windows()?;
    let q1 = config.build_potential(grid, &omega)?;
    let op1 = assemble_operator(grid, config.order, &q1)?;
    let gram1 = assemble_gram(&w1, config.order)?;
    let gram2 = assemble_gram(&w2, config.order)?;
    let gram_omega = assemble_gram(&omega, config.order)?;
    let dn1 = assemble_dn(&op1, &omega)?;

    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for &k in wavenumbers {
        let raw = dn_gap_profile(grid, k, config.omega_radius).restricted_to(&omega)?;
        let raw_norm = raw.norm_l2();
        if raw_norm == 0.0 {
            notes.push(format!("wavenumber {k} aliases to zero on this grid, skipped"));
            continue;
        }
        let gap = raw.scaled(DN_GAP_AMPLITUDE / raw_norm);
        let mut q2_vals = q1.values().clone();
        q2_vals.add_scaled(1.0, &gap)?;
        let q2 = Potential::from_values_on(&omega, &q2_vals)?;
        let op2 = assemble_operator(grid, config.order, &q2)?;
        let dn2 = match assemble_dn(&op2, &omega) {
            Ok(d) => d,
            Err(Error::Degenerate(msg)) => {
                notes.push(format!("wavenumber {k} skipped: {msg}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        let diff = dn1.difference(&dn2)?;
        let dn_norm = dn_partial_norm(&diff, dn1.exterior(), &gram1, &gram2)?;
        let q_dual = dual_norm(&gap, &gram_omega)?;
        rows.push(vec![k, dn_norm, q_dual, gap.norm_l2()]);
    }
    if rows.len() < 3 {
        return Err(Error::Numerical(format!(
            "only {} usable wavenumbers, oscillation family degenerate",
            rows.len()
        )));
    }

    let mut assertions = Vec::new();
    let l2_pinned = rows
        .iter()
        .all(|r| (r[3] - DN_GAP_AMPLITUDE).abs() <= 1e-12 * DN_GAP_AMPLITUDE);
    push_assert(
        &mut assertions,
        "l2_gap_pinned",
        l2_pinned,
        format!("||q1 - q2||_L2 = {DN_GAP_AMPLITUDE:.0e} per row by construction"),
    );
    let norms: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let onset = eventually_decreasing(&norms);
    let monotone = matches!(onset, Some(j0) if j0 <= 1);
    push_assert(
        &mut assertions,
        "dn_gap_monotone_collapse",
        monotone,
        format!("strictly decreasing from row {onset:?} of {}", norms.len()),
    );
    let orders = (norms.iter().fold(0.0f64, |a, &b| a.max(b))
        / norms.last().copied().unwrap())
    .log10();
    push_assert(
        &mut assertions,
        "dn_gap_collapse_orders",
        orders >= frozen::DN_COLLAPSE_ORDERS,
        format!(
            "DN gap falls {orders:.2} orders, need {}",
            frozen::DN_COLLAPSE_ORDERS
        ),
    );

    Ok(ExperimentRecord {
        name: "dn-modulus".into(),
        config: config.clone(),
        columns: vec![
            "wavenumber (1/length)".into(),
            "dn_gap (window-to-window operator norm)".into(),
            "q_gap_dual (interior dual Sobolev norm)".into(),
            "q_gap_l2 (interior L2 norm)".into(),
        ],
        rows,
        fits: Vec::new(),
        assertions,
        notes,
        wall_time: t0.elapsed().as_secs_f64(),
    })
}

/// Cheapest truncated control meeting the error budget, by walking the
/// ladder upward; fails with the achievable floor when the budget is below
/// discrete reach.
pub fn control_to_tolerance(
    fwd: &ForwardOperator,
    g: &GsvdResult,
    target: &GridFunction,
    eps: f64,
) -> Result<ControlResult> {
    if eps <= 0.0 {
        return Err(Error::Config(format!("error budget must be positive, got {eps}")));
    }
    let mut floor = f64::INFINITY;
    for l in 0..=g.numerical_rank() {
        let r = truncated_control(fwd, g, target, l)?;
        if r.approx_error <= eps {
            return Ok(r);
        }
        floor = floor.min(r.approx_error);
    }
    Err(Error::Numerical(format!(
        "control saturated: budget {eps:.3e} below achievable floor {floor:.3e}"
    )))
}

/// Orthogonal projection of an interior target onto the span of the
/// leading `terms` left directions of the forward map, in the map's Ω
/// geometry. The result is what the window can actually reach, so controls
/// toward it converge instead of stalling on the unreachable remainder.
pub fn project_reachable(
    fwd: &ForwardOperator,
    g: &GsvdResult,
    target: &GridFunction,
    terms: usize,
) -> Result<GridFunction> {
    if !target.supported_on(fwd.omega()) {
        return Err(Error::Support("projection target".into()));
    }
    let raw = DVector::from_vec(fwd.omega().gather(target)?);
    let mut acc = DVector::zeros(raw.len());
    for j in 0..terms.min(g.numerical_rank()) {
        let w = g.w_column(j);
        acc.axpy(fwd.omega_inner(&raw, &w), &w, 1.0);
    }
    fwd.omega().scatter(acc.as_slice())
}

/// How many left directions the stock recovery targets are projected onto.
pub const RECOVER_PROJECTION_TERMS: usize = 15;

/// A recovered functional value with the two controls that produced it.
#[derive(Debug, Clone)]
pub struct Recovery {
    /// Approximation of ∫ (q2 - q1) φ.
    pub value: f64,
    pub tolerance: f64,
    pub first: ControlResult,
    pub second: ControlResult,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn recover_with(
    op1: &OperatorMatrix,
    op2: &OperatorMatrix,
    omega: &IndexSet,
    w_first: &IndexSet,
    w_second: &IndexSet,
    phi: &GridFunction,
    partner: &GridFunction,
    eps: f64,
) -> Result<Recovery> {
    if !phi.supported_on(omega) || !partner.supported_on(omega) {
        return Err(Error::Support("functional weight".into()));
    }
    let fwd1 = assemble_forward(op1, omega, w_first, OmegaGeometry::MassWeighted)?;
    let g1 = gsvd(&fwd1)?;
    let first = control_to_tolerance(&fwd1, &g1, phi, eps)?;

    let fwd2 = assemble_forward(op2, omega, w_second, OmegaGeometry::MassWeighted)?;
    let g2 = gsvd(&fwd2)?;
    let second = control_to_tolerance(&fwd2, &g2, partner, eps)?;

    let value = dn_pairing(op2, omega, &first.f, &second.f)?
        - dn_pairing(op1, omega, &first.f, &second.f)?;
    Ok(Recovery {
        value,
        tolerance: eps,
        first,
        second,
    })
}

/// Reads off ∫ (q2 - q1) φ from DN data alone: steers the q1-solution
/// toward φ from one window and the q2-solution toward a flat-top partner
/// from the other, then evaluates the DN-gap pairing of the two exterior
/// data. The identity behind the construction makes the pairing equal the
/// integral up to terms of the order of the control errors. The partner
/// equals one on the central half-radius box, so the quadrature reading is
/// clean when q2 - q1 lives there.
pub fn recover_functional(
    config: &LabConfig,
    q1: &Potential,
    q2: &Potential,
    phi: &GridFunction,
    eps: f64,
) -> Result<Recovery> {
    let (grid, omega, w1, w2) = config.two_windows()?;
    let op1 = assemble_operator(grid, config.order, q1)?;
    let op2 = assemble_operator(grid, config.order, q2)?;
    let partner = plateau_profile(grid, config.omega_radius).restricted_to(&omega)?;
    recover_with(&op1, &op2, &omega, &w1, &w2, phi, &partner, eps)
}

pub fn default_recover_tolerances() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}

/// Runs the recovery over a tightening tolerance ladder against a known
/// piecewise-constant potential difference and compares with the direct
/// quadrature of the integral. Both steering targets are first projected
/// onto their windows' reachable spans: the ladder then converges honestly,
/// and the partner's remaining deviation from one over the potential step
/// is what bounds the converged relative gap.
pub fn recover_experiment(config: &LabConfig) -> Result<ExperimentRecord> {
    let t0 = Instant::now();
    let (grid, omega, w1, w2) = config.two_windows()?;
    let q1 = config.build_potential(grid, &omega)?;

    let half = config.omega_radius / 2.0;
    let inner: Vec<usize> = omega
        .indices()
        .iter()
        .copied()
        .filter(|&j| {
            let p = grid.point(j);
            p[..grid.dim()].iter().all(|&t| t.abs() <= half)
        })
        .collect();
    let b_set = IndexSet::new(grid, SetLabel::Omega, inner)?;
    let level = 0.75;
    let mut q2_vals = q1.values().clone();
    let step = b_set.scatter(&vec![level; b_set.len()])?;
    q2_vals.add_scaled(1.0, &step)?;
    let q2 = Potential::from_values_on(&omega, &q2_vals)?;

    let op1 = assemble_operator(grid, config.order, &q1)?;
    let op2 = assemble_operator(grid, config.order, &q2)?;
    let fwd1 = assemble_forward(&op1, &omega, &w1, OmegaGeometry::MassWeighted)?;
    let g1 = gsvd(&fwd1)?;
    let fwd2 = assemble_forward(&op2, &omega, &w2, OmegaGeometry::MassWeighted)?;
    let g2 = gsvd(&fwd2)?;

    let bump = bump_profile(grid, config.omega_radius).restricted_to(&omega)?;
    let phi = project_reachable(&fwd1, &g1, &bump, RECOVER_PROJECTION_TERMS)?;
    let flat = plateau_profile(grid, config.omega_radius).restricted_to(&omega)?;
    let partner = project_reachable(&fwd2, &g2, &flat, RECOVER_PROJECTION_TERMS)?;

    let mut notes = Vec::new();
    let mut defect = 0.0;
    let mut weight = 0.0;
    for &j in b_set.indices() {
        weight += phi.values()[j];
        defect += phi.values()[j] * (partner.values()[j] - 1.0);
    }
    notes.push(format!(
        "targets projected onto {} reachable directions per window; \
         partner deviates from one on the step by {:.3e} (phi-weighted)",
        RECOVER_PROJECTION_TERMS.min(g1.numerical_rank()),
        defect.abs() / weight.abs()
    ));

    let direct = step.dot_l2(&phi)?;

    let mut rows = Vec::new();
    for eps in default_recover_tolerances() {
        let first = match control_to_tolerance(&fwd1, &g1, &phi, eps) {
            Ok(c) => c,
            Err(Error::Numerical(msg)) => {
                notes.push(format!("tolerance {eps:.1e}: {msg}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        let second = match control_to_tolerance(&fwd2, &g2, &partner, eps) {
            Ok(c) => c,
            Err(Error::Numerical(msg)) => {
                notes.push(format!("tolerance {eps:.1e}: {msg}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        let value = dn_pairing(&op2, &omega, &first.f, &second.f)?
            - dn_pairing(&op1, &omega, &first.f, &second.f)?;
        let rel = (value - direct).abs() / direct.abs();
        rows.push(vec![eps, value, direct, rel, first.cost, second.cost]);
    }
    if rows.is_empty() {
        return Err(Error::Numerical(
            "no tolerance on the default ladder was achievable".into(),
        ));
    }

    let mut assertions = Vec::new();
    let first_rel = rows.first().map(|r| r[3]).unwrap();
    let last_rel = rows.last().map(|r| r[3]).unwrap();
    push_assert(
        &mut assertions,
        "recovery_improves",
        last_rel < first_rel,
        format!("relative gap {first_rel:.3e} -> {last_rel:.3e}"),
    );
    if rows.len() >= 2 {
        let stall = (rows[rows.len() - 1][1] - rows[rows.len() - 2][1]).abs() / direct.abs();
        push_assert(
            &mut assertions,
            "recovery_converged",
            stall <= frozen::RECOVER_STALL,
            format!(
                "value moved {stall:.3e} (relative) over the last decade, bound {:.0e}",
                frozen::RECOVER_STALL
            ),
        );
    } else {
        push_assert(
            &mut assertions,
            "recovery_converged",
            false,
            "fewer than two achievable tolerances".into(),
        );
    }
    push_assert(
        &mut assertions,
        "recovery_within_tolerance",
        last_rel <= frozen::RECOVER_REL_ERROR,
        format!(
            "final relative gap {last_rel:.3e}, bound {}",
            frozen::RECOVER_REL_ERROR
        ),
    );

    Ok(ExperimentRecord {
        name: "recover".into(),
        config: config.clone(),
        columns: vec![
            "tolerance (control error budget)".into(),
            "recovered (pairing value)".into(),
            "direct (quadrature value)".into(),
            "relative_gap (ratio)".into(),
            "cost_first (window Sobolev norm)".into(),
            "cost_second (window Sobolev norm)".into(),
        ],
        rows,
        fits: Vec::new(),
        assertions,
        notes,
        wall_time: t0.elapsed().as_secs_f64(),
    })
}
