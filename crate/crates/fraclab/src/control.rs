//! The window-to-interior forward map and its regularized inverses.
//!
//! A sends a datum supported on the window W to the restriction to Ω of its
//! exterior-value solution. Between H^s on W and the chosen geometry on Ω it
//! has a singular value decomposition with rapidly decaying σ_j; controls
//! that steer the solution toward a target v trade approximation error
//! against the H^s size of the datum along that spectrum. All reported
//! errors and costs are recomputed through fresh solves, never read off the
//! spectral algebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exterior::DirichletSolver;
use crate::fracop::{OperatorMatrix, Potential};
use crate::grid::{GridFunction, IndexSet};
use crate::par;
use crate::sobolev::{assemble_gram, SobolevGram};

/// Inner-product geometry placed on the interior values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaGeometry {
    /// Plain L²(Ω): the diagonal cell-volume weight.
    MassWeighted,
    /// A Sobolev Gram of the given order on the Ω nodes.
    Sobolev(f64),
}

/// Dense forward map with the geometry of both sides attached.
pub struct ForwardOperator {
    a: DMatrix<f64>,
    op: OperatorMatrix,
    omega: IndexSet,
    window: IndexSet,
    gram_w: SobolevGram,
    geometry: OmegaGeometry,
    omega_gram: Option<SobolevGram>,
}

/// Assembles the forward map column by column: column j is the restriction
/// to Ω of the exterior-value solution with indicator datum at window node
/// j. Columns are solved in parallel from one factorization.
pub fn assemble_forward(
    op: &OperatorMatrix,
    omega: &IndexSet,
    window: &IndexSet,
    geometry: OmegaGeometry,
) -> Result<ForwardOperator> {
    if !window.is_disjoint_from(omega) {
        return Err(Error::Config(
            "control window overlaps the interior region".into(),
        ));
    }
    let solver = DirichletSolver::new(op, omega)?;
    let m = omega.len();
    let n = window.len();
    let cols = par::map_indexed(n, |j| {
        let datum = window.indicator(j).expect("position in range");
        let sol = solver.solve_exterior(&datum).expect("nondegenerate block");
        omega.gather(&sol.u).expect("same grid")
    });
    let flat: Vec<f64> = cols.into_iter().flatten().collect();
    let a = DMatrix::from_vec(m, n, flat);
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("forward matrix has non-finite entries".into()));
    }
    let gram_w = assemble_gram(window, op.order())?;
    let omega_gram = match geometry {
        OmegaGeometry::MassWeighted => None,
        OmegaGeometry::Sobolev(t) => Some(assemble_gram(omega, t)?),
    };
    Ok(ForwardOperator {
        a,
        op: op.clone(),
        omega: omega.clone(),
        window: window.clone(),
        gram_w,
        geometry,
        omega_gram,
    })
}

impl ForwardOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn operator(&self) -> &OperatorMatrix {
        &self.op
    }

    pub fn order(&self) -> f64 {
        self.op.order()
    }

    pub fn potential(&self) -> &Potential {
        self.op.potential()
    }

    pub fn omega(&self) -> &IndexSet {
        &self.omega
    }

    pub fn window(&self) -> &IndexSet {
        &self.window
    }

    pub fn gram_w(&self) -> &SobolevGram {
        &self.gram_w
    }

    pub fn geometry(&self) -> OmegaGeometry {
        self.geometry
    }

    /// A applied to window coefficients, as interior values.
    pub fn apply(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.a * coeffs
    }

    /// Inner product of two interior-value vectors in the Ω geometry.
    pub fn omega_inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        match (&self.geometry, &self.omega_gram) {
            (OmegaGeometry::MassWeighted, _) => x.dot(y) * self.omega.grid().cell_volume(),
            (OmegaGeometry::Sobolev(_), Some(g)) => x.dot(&(g.matrix() * y)),
            _ => unreachable!("Sobolev geometry always carries its Gram"),
        }
    }

    pub fn omega_norm(&self, x: &DVector<f64>) -> f64 {
        self.omega_inner(x, x).max(0.0).sqrt()
    }

    /// Gathers a target supported on Ω into coefficient form.
    pub fn target_coeffs(&self, v: &GridFunction) -> Result<DVector<f64>> {
        if !v.supported_on(&self.omega) {
            return Err(Error::Support("control target".into()));
        }
        Ok(DVector::from_vec(self.omega.gather(v)?))
    }

    /// Whitened matrix B with plain Euclidean geometry on both sides.
    pub(crate) fn whitened(&self) -> Result<DMatrix<f64>> {
        let lw = self.gram_w.chol_l();
        let half = lw
            .solve_lower_triangular(&self.a.transpose())
            .ok_or_else(|| Error::Numerical("singular window Gram factor".into()))?
            .transpose();
        Ok(match (&self.geometry, &self.omega_gram) {
            (OmegaGeometry::MassWeighted, _) => {
                half * self.omega.grid().cell_volume().sqrt()
            }
            (OmegaGeometry::Sobolev(_), Some(g)) => g.chol_l().transpose() * half,
            _ => unreachable!("Sobolev geometry always carries its Gram"),
        })
    }

    /// Un-whitens an interior-side vector: L_Ω^{-T} y.
    fn unwhiten_omega(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match (&self.geometry, &self.omega_gram) {
            (OmegaGeometry::MassWeighted, _) => {
                Ok(y / self.omega.grid().cell_volume().sqrt())
            }
            (OmegaGeometry::Sobolev(_), Some(g)) => g
                .chol_l()
                .transpose()
                .solve_upper_triangular(y)
                .ok_or_else(|| Error::Numerical("singular interior Gram factor".into())),
            _ => unreachable!("Sobolev geometry always carries its Gram"),
        }
    }

    /// The Hilbert adjoint on coefficient vectors: G_W^{-1} Aᵀ M_Ω z.
    fn adjoint_coeffs(&self, z: &DVector<f64>) -> DVector<f64> {
        let paired = match (&self.geometry, &self.omega_gram) {
            (OmegaGeometry::MassWeighted, _) => {
                self.a.transpose() * (z * self.omega.grid().cell_volume())
            }
            (OmegaGeometry::Sobolev(_), Some(g)) => self.a.transpose() * (g.matrix() * z),
            _ => unreachable!("Sobolev geometry always carries its Gram"),
        };
        self.gram_w.solve(&paired)
    }
}

/// Singular triples below this multiple of σ₁ are kept in the result but
/// excluded from control sums.
pub const RANK_CUTOFF: f64 = 1e-14;

/// Generalized SVD of a forward map: A φ_j = σ_j w_j with φ orthonormal in
/// the window Gram and w orthonormal in the Ω geometry.
#[derive(Debug, Clone)]
pub struct GsvdResult {
    sigma: Vec<f64>,
    phi: DMatrix<f64>,
    w: DMatrix<f64>,
    numerical_rank: usize,
}

impl GsvdResult {
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Count of triples with σ_j ≥ RANK_CUTOFF · σ₁.
    pub fn numerical_rank(&self) -> usize {
        self.numerical_rank
    }

    /// Right vector in window coordinates.
    pub fn phi_column(&self, j: usize) -> DVector<f64> {
        self.phi.column(j).into_owned()
    }

    /// Left vector in interior coordinates.
    pub fn w_column(&self, j: usize) -> DVector<f64> {
        self.w.column(j).into_owned()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }
}

/// Whitened SVD of the forward map, back-transformed to the two geometries.
/// Triples whose computed value underflows to an exact zero carry no usable
/// direction and are dropped.
pub fn gsvd(fwd: &ForwardOperator) -> Result<GsvdResult> {
    let b = fwd.whitened()?;
    let svd = b.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("svd left vectors missing".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("svd right vectors missing".into()))?;
    let mut sigma: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let keep = sigma.iter().filter(|&&s| s > 0.0).count();
    sigma.truncate(keep);
    let lw_t = fwd.gram_w.chol_l().transpose();
    let phi = lw_t
        .solve_upper_triangular(&v_t.transpose().columns(0, keep).into_owned())
        .ok_or_else(|| Error::Numerical("singular window Gram factor".into()))?;
    let w = fwd.unwhiten_omega(&u.columns(0, keep).into_owned())?;
    let top = sigma.first().copied().unwrap_or(0.0);
    let numerical_rank = sigma.iter().filter(|&&s| s >= RANK_CUTOFF * top).count();
    Ok(GsvdResult {
        sigma,
        phi,
        w,
        numerical_rank,
    })
}

/// How a control datum was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMethod {
    Truncated,
    Threshold,
    Tikhonov,
}

impl ControlMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            ControlMethod::Truncated => "truncated",
            ControlMethod::Threshold => "threshold",
            ControlMethod::Tikhonov => "tikhonov",
        }
    }
}

/// A window datum with its recomputed error and cost.
#[derive(Debug, Clone)]
pub struct ControlResult {
    /// The datum, supported on the window.
    pub f: GridFunction,
    /// ‖Af - v‖ in the Ω geometry, from a fresh exterior solve.
    pub approx_error: f64,
    /// ‖f‖ in the window Sobolev Gram.
    pub cost: f64,
    pub method: ControlMethod,
    /// Truncation level l or regularization weight α.
    pub parameter: f64,
}

fn finish(
    fwd: &ForwardOperator,
    coeffs: DVector<f64>,
    target: &DVector<f64>,
    method: ControlMethod,
    parameter: f64,
) -> Result<ControlResult> {
    let f = fwd.window.scatter(coeffs.as_slice())?;
    let solver = DirichletSolver::new(&fwd.op, &fwd.omega)?;
    let sol = solver.solve_exterior(&f)?;
    let achieved = DVector::from_vec(fwd.omega.gather(&sol.u)?);
    let err = fwd.omega_norm(&(&achieved - target));
    let cost = fwd.gram_w.norm(&coeffs);
    Ok(ControlResult {
        f,
        approx_error: err,
        cost,
        method,
        parameter,
    })
}

/// Control from the first l singular triples:
/// f = Σ_{j<l} σ_j^{-1} ⟨v, w_j⟩_Ω φ_j.
pub fn truncated_control(
    fwd: &ForwardOperator,
    gsvd: &GsvdResult,
    v: &GridFunction,
    l: usize,
) -> Result<ControlResult> {
    if l > gsvd.numerical_rank() {
        return Err(Error::Config(format!(
            "truncation level {l} exceeds the numerical rank {}",
            gsvd.numerical_rank()
        )));
    }
    let target = fwd.target_coeffs(v)?;
    let mut coeffs = DVector::zeros(fwd.window.len());
    for j in 0..l {
        let c = fwd.omega_inner(&target, &gsvd.w_column(j)) / gsvd.sigma()[j];
        coeffs.axpy(c, &gsvd.phi_column(j), 1.0);
    }
    finish(fwd, coeffs, &target, ControlMethod::Truncated, l as f64)
}

/// Control from every triple with σ_j > α.
pub fn threshold_control(
    fwd: &ForwardOperator,
    gsvd: &GsvdResult,
    v: &GridFunction,
    alpha: f64,
) -> Result<ControlResult> {
    if alpha <= 0.0 {
        return Err(Error::Config(format!(
            "threshold must be positive, got {alpha}"
        )));
    }
    let target = fwd.target_coeffs(v)?;
    let mut coeffs = DVector::zeros(fwd.window.len());
    for j in 0..gsvd.numerical_rank() {
        let s = gsvd.sigma()[j];
        if s <= alpha {
            break;
        }
        let c = fwd.omega_inner(&target, &gsvd.w_column(j)) / s;
        coeffs.axpy(c, &gsvd.phi_column(j), 1.0);
    }
    finish(fwd, coeffs, &target, ControlMethod::Threshold, alpha)
}

/// Control minimizing ‖Af - v‖²_Ω + α ‖f‖²_W, by the whitened normal
/// equations (BᵀB + αI) g = Bᵀ ṽ.
pub fn tikhonov_control(
    fwd: &ForwardOperator,
    v: &GridFunction,
    alpha: f64,
) -> Result<ControlResult> {
    if alpha <= 0.0 {
        return Err(Error::Config(format!(
            "regularization weight must be positive, got {alpha}"
        )));
    }
    let target = fwd.target_coeffs(v)?;
    let b = fwd.whitened()?;
    let n = b.ncols();
    let mut normal = b.transpose() * &b;
    for j in 0..n {
        normal[(j, j)] += alpha;
    }
    let white_target = match (&fwd.geometry, &fwd.omega_gram) {
        (OmegaGeometry::MassWeighted, _) => &target * fwd.omega.grid().cell_volume().sqrt(),
        (OmegaGeometry::Sobolev(_), Some(g)) => g.chol_l().transpose() * &target,
        _ => unreachable!("Sobolev geometry always carries its Gram"),
    };
    let rhs = b.transpose() * white_target;
    let chol = nalgebra::Cholesky::new(normal)
        .ok_or_else(|| Error::Numerical("regularized normal matrix not positive definite".into()))?;
    let g = chol.solve(&rhs);
    let coeffs = fwd
        .gram_w
        .chol_l()
        .transpose()
        .solve_upper_triangular(&g)
        .ok_or_else(|| Error::Numerical("singular window Gram factor".into()))?;
    finish(fwd, coeffs, &target, ControlMethod::Tikhonov, alpha)
}

/// Relative Euler–Lagrange residual ‖A*(Af - v) + αf‖_W / ‖A*v‖_W of a
/// regularized control, recomputed from the stored matrices.
pub fn tikhonov_el_residual(
    fwd: &ForwardOperator,
    result: &ControlResult,
    v: &GridFunction,
) -> Result<f64> {
    let target = fwd.target_coeffs(v)?;
    let coeffs = DVector::from_vec(fwd.window.gather(&result.f)?);
    let misfit = fwd.apply(&coeffs) - &target;
    let mut el = fwd.adjoint_coeffs(&misfit);
    el.axpy(result.parameter, &coeffs, 1.0);
    let scale = fwd.gram_w.norm(&fwd.adjoint_coeffs(&target));
    let r = fwd.gram_w.norm(&el);
    Ok(if scale > 0.0 { r / scale } else { r })
}

/// The two adjoint readings of a target functional v on Ω.
#[derive(Debug, Clone)]
pub struct AdjointPair {
    /// Dual coordinates on the window: f ↦ h Σ_W f · banach equals
    /// ⟨Af, v⟩_{L²(Ω)}; realized as -(-Δ)^s w sampled on W, with w the
    /// interior source solution.
    pub banach: GridFunction,
    /// Riesz lift G_W^{-1} of the pairing vector: A*v in the window Gram.
    pub hilbert: GridFunction,
}

/// Realizes the adjoint of the forward map through one source solve: solve
/// ((-Δ)^s + q) w = v in Ω with w = 0 outside, then read the flux of w on
/// the window. Works in the L²(Ω) pairing.
pub fn adjoint_apply(
    op: &OperatorMatrix,
    omega: &IndexSet,
    gram_w: &SobolevGram,
    v: &GridFunction,
) -> Result<AdjointPair> {
    if !v.supported_on(omega) {
        return Err(Error::Support("adjoint source".into()));
    }
    let window = gram_w.set();
    let solver = DirichletSolver::new(op, omega)?;
    let sol = solver.solve_source(v)?;
    let flux = op.apply(&sol.w)?;
    let h = op.grid().cell_volume();
    let banach_vals: Vec<f64> = window.gather(&flux)?.iter().map(|x| -x / h).collect();
    let banach = window.scatter(&banach_vals)?;
    let pairing = DVector::from_vec(banach_vals.iter().map(|b| b * h).collect::<Vec<f64>>());
    let hilbert_coeffs = gram_w.solve(&pairing);
    let hilbert = window.scatter(hilbert_coeffs.as_slice())?;
    Ok(AdjointPair { banach, hilbert })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::solve_exterior_dirichlet;
    use crate::fracop::assemble_operator;
    use crate::grid::{make_domains, DomainSpec, Grid};
    use crate::sobolev::hs_inner;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Grid, IndexSet, IndexSet, OperatorMatrix) {
        let grid = Grid::new(1, 128, 8.0).unwrap();
        let spec = DomainSpec {
            omega_radius: 1.0,
            gap: 1.0,
            window_radius: 1.0,
        };
        let (omega, window) = make_domains(grid, spec).unwrap();
        let q = Potential::constant_on(&omega, 1.0).unwrap();
        let op = assemble_operator(grid, 0.5, &q).unwrap();
        (grid, omega, window, op)
    }

    fn forward() -> (Grid, IndexSet, IndexSet, OperatorMatrix, ForwardOperator) {
        let (grid, omega, window, op) = setup();
        let fwd = assemble_forward(&op, &omega, &window, OmegaGeometry::MassWeighted).unwrap();
        (grid, omega, window, op, fwd)
    }

    fn random_window(window: &IndexSet, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(window.len(), |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn forward_columns_are_restricted_solves() {
        let (_, omega, window, op, fwd) = forward();
        for j in [0, window.len() / 2, window.len() - 1] {
            let datum = window.indicator(j).unwrap();
            let sol = solve_exterior_dirichlet(&op, &omega, &datum).unwrap();
            let expect = omega.gather(&sol.u).unwrap();
            for (i, e) in expect.iter().enumerate() {
                assert_eq!(fwd.matrix()[(i, j)], *e);
            }
        }
        for j in 0..window.len() {
            assert!(fwd.matrix().column(j).norm() > 0.0, "column {j} vanishes");
        }
    }

    #[test]
    fn forward_is_linear_through_the_solver() {
        let (_, omega, window, op, fwd) = forward();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c1 = random_window(&window, &mut rng);
        let c2 = random_window(&window, &mut rng);
        let f1 = window.scatter(c1.as_slice()).unwrap();
        let f2 = window.scatter(c2.as_slice()).unwrap();
        let mut sum = f1.clone();
        sum.add_scaled(1.0, &f2).unwrap();
        let u12 = solve_exterior_dirichlet(&op, &omega, &sum).unwrap();
        let lhs = DVector::from_vec(omega.gather(&u12.u).unwrap());
        let rhs = fwd.apply(&c1) + fwd.apply(&c2);
        assert!((lhs - rhs).amax() <= 1e-10);
    }

    #[test]
    fn gsvd_triples_satisfy_their_relations() {
        let (_, _, window, _, fwd) = forward();
        let g = gsvd(&fwd).unwrap();
        let sig = g.sigma();
        assert!(sig.iter().all(|&s| s > 0.0));
        assert!(sig.windows(2).all(|w| w[1] <= w[0]));
        let top = sig[0];
        for (j, &sj) in sig.iter().enumerate() {
            let lhs = fwd.apply(&g.phi_column(j));
            let rhs = g.w_column(j) * sj;
            assert!(
                fwd.omega_norm(&(lhs - rhs)) <= 1e-8 * top,
                "triple {j} broken"
            );
        }
        for i in 0..g.len() {
            for j in 0..g.len() {
                let want = if i == j { 1.0 } else { 0.0 };
                let pw = g.phi_column(i).dot(&(fwd.gram_w().matrix() * g.phi_column(j)));
                assert!((pw - want).abs() <= 1e-8, "phi gram ({i},{j}) = {pw}");
                let ww = fwd.omega_inner(&g.w_column(i), &g.w_column(j));
                assert!((ww - want).abs() <= 1e-8, "w gram ({i},{j}) = {ww}");
            }
        }
        // completeness: the triples reproduce the whitened matrix
        let b = fwd.whitened().unwrap();
        let mut recon = DMatrix::zeros(b.nrows(), b.ncols());
        let lw_t = fwd.gram_w().chol_l().transpose();
        let h = window.grid().cell_volume().sqrt();
        for (j, &sj) in sig.iter().enumerate() {
            let u = g.w_column(j) * h;
            let vt = (&lw_t * g.phi_column(j)).transpose();
            recon += u * vt * sj;
        }
        assert!((b - recon).norm() <= 1e-8 * top);
    }

    #[test]
    fn top_singular_value_matches_power_iteration() {
        let (_, _, _, _, fwd) = forward();
        let g = gsvd(&fwd).unwrap();
        // iterate f ← G_W^{-1} Aᵀ M_Ω A f, whose Rayleigh quotient in the
        // window Gram converges to σ₁²
        let mut x = DVector::from_element(fwd.window().len(), 1.0);
        for _ in 0..400 {
            let y = fwd.adjoint_coeffs(&fwd.apply(&x));
            let norm = fwd.gram_w().norm(&y);
            x = y / norm;
        }
        let ax = fwd.apply(&x);
        let sigma1 = fwd.omega_norm(&ax) / fwd.gram_w().norm(&x);
        assert!(
            (sigma1 - g.sigma()[0]).abs() <= 1e-6 * g.sigma()[0],
            "{sigma1} vs {}",
            g.sigma()[0]
        );
    }

    #[test]
    fn adjoint_satisfies_the_defining_identity() {
        let (_, omega, window, op, fwd) = forward();
        let gram = fwd.gram_w();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let c = random_window(&window, &mut rng);
            let f = window.scatter(c.as_slice()).unwrap();
            let vvals: Vec<f64> = (0..omega.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v = omega.scatter(&vvals).unwrap();
            let pair = adjoint_apply(&op, &omega, gram, &v).unwrap();

            let u = solve_exterior_dirichlet(&op, &omega, &f).unwrap();
            let rhs = u.u.restricted_to(&omega).unwrap().dot_l2(&v).unwrap();
            let lhs = hs_inner(&pair.hilbert, &f, 0.5).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1.0),
                "trial {trial}: {lhs} vs {rhs}"
            );
            let banach_pairing = pair.banach.dot_l2(&f).unwrap();
            assert!((banach_pairing - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        }
        let zero = GridFunction::zeros(*omega.grid());
        let none = adjoint_apply(&op, &omega, gram, &zero).unwrap();
        assert_eq!(none.hilbert.max_abs(), 0.0);
    }

    #[test]
    fn adjoint_maps_left_vectors_to_scaled_right_vectors() {
        let (_, omega, window, op, fwd) = forward();
        let g = gsvd(&fwd).unwrap();
        for j in [0usize, 2, 5] {
            let sigma = g.sigma()[j];
            if sigma < 1e-8 * g.sigma()[0] {
                continue;
            }
            let w = omega.scatter(g.w_column(j).as_slice()).unwrap();
            let pair = adjoint_apply(&op, &omega, fwd.gram_w(), &w).unwrap();
            let got = DVector::from_vec(window.gather(&pair.hilbert).unwrap());
            let want = g.phi_column(j) * sigma;
            assert!(
                fwd.gram_w().norm(&(got - want)) <= 1e-7 * g.sigma()[0],
                "triple {j}"
            );
        }
    }

    #[test]
    fn truncated_control_walks_the_error_cost_tradeoff() {
        let (_, omega, window, _, fwd) = forward();
        let g = gsvd(&fwd).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let c0 = random_window(&window, &mut rng);
        let target_vec = fwd.apply(&c0);
        let vnorm = fwd.omega_norm(&target_vec);
        let v = omega
            .scatter((target_vec / vnorm).as_slice())
            .unwrap();

        let zero = truncated_control(&fwd, &g, &v, 0).unwrap();
        assert_eq!(zero.f.max_abs(), 0.0);
        assert!((zero.approx_error - 1.0).abs() <= 1e-12);

        let rank = g.numerical_rank();
        let full = truncated_control(&fwd, &g, &v, rank).unwrap();
        assert!(full.approx_error <= 1e-7, "{}", full.approx_error);
        assert!(truncated_control(&fwd, &g, &v, rank + 1).is_err());

        let mut prev_err = f64::INFINITY;
        let mut prev_cost = 0.0;
        for l in 0..=rank {
            let r = truncated_control(&fwd, &g, &v, l).unwrap();
            assert!(r.approx_error <= prev_err + 1e-12, "error grew at l={l}");
            assert!(r.cost + 1e-12 >= prev_cost, "cost shrank at l={l}");
            if l >= 1 {
                assert!(r.cost <= 1.0 / g.sigma()[l - 1] + 1e-9);
            }
            prev_err = r.approx_error;
            prev_cost = r.cost;
        }
    }

    #[test]
    fn cost_bound_is_sharp_on_a_left_vector() {
        let (_, omega, _, _, fwd) = forward();
        let g = gsvd(&fwd).unwrap();
        let l = 4;
        let v = omega.scatter(g.w_column(l - 1).as_slice()).unwrap();
        let r = truncated_control(&fwd, &g, &v, l).unwrap();
        assert!(
            (r.cost * g.sigma()[l - 1] - 1.0).abs() <= 1e-10,
            "cost {} vs 1/σ_l {}",
            r.cost,
            1.0 / g.sigma()[l - 1]
        );
    }

    #[test]
    fn threshold_control_discards_exactly_the_spectral_tail() {
        let (_, omega, window, _, fwd) = forward();
        let g = gsvd(&fwd).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let c0 = random_window(&window, &mut rng);
        let target_vec = fwd.apply(&c0);
        let v = omega.scatter(target_vec.as_slice()).unwrap();

        let above = threshold_control(&fwd, &g, &v, g.sigma()[0] * 2.0).unwrap();
        assert_eq!(above.f.max_abs(), 0.0);

        let alpha = g.sigma()[3] * 0.999;
        let r = threshold_control(&fwd, &g, &v, alpha).unwrap();
        let mut tail = 0.0;
        for j in 0..g.numerical_rank() {
            if g.sigma()[j] <= alpha {
                let c = fwd.omega_inner(&target_vec, &g.w_column(j));
                tail += c * c;
            }
        }
        assert!(
            (r.approx_error - tail.sqrt()).abs() <= 1e-9 * target_vec.norm().max(1.0),
            "{} vs {}",
            r.approx_error,
            tail.sqrt()
        );

        let everything =
            threshold_control(&fwd, &g, &v, g.sigma()[g.numerical_rank() - 1] * 0.5).unwrap();
        let full = truncated_control(&fwd, &g, &v, g.numerical_rank()).unwrap();
        let mut d = everything.f.clone();
        d.add_scaled(-1.0, &full.f).unwrap();
        assert!(d.max_abs() <= 1e-12 * full.f.max_abs().max(1.0));
        assert!(threshold_control(&fwd, &g, &v, 0.0).is_err());
    }

    #[test]
    fn tikhonov_control_minimizes_and_filters() {
        let (_, omega, window, _, fwd) = forward();
        let g = gsvd(&fwd).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let vvals: Vec<f64> = (0..omega.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = omega.scatter(&vvals).unwrap();
        let target = fwd.target_coeffs(&v).unwrap();

        for alpha in [1e-2, 1e-6] {
            let r = tikhonov_control(&fwd, &v, alpha).unwrap();
            let el = tikhonov_el_residual(&fwd, &r, &v).unwrap();
            assert!(el <= 1e-9, "alpha={alpha}: EL residual {el}");

            let mut filtered = DVector::zeros(window.len());
            for j in 0..g.len() {
                let s = g.sigma()[j];
                let c = fwd.omega_inner(&target, &g.w_column(j)) * s / (s * s + alpha);
                filtered.axpy(c, &g.phi_column(j), 1.0);
            }
            let got = DVector::from_vec(window.gather(&r.f).unwrap());
            assert!(
                fwd.gram_w().norm(&(got - filtered)) <= 1e-8 * r.cost.max(1e-12),
                "alpha={alpha}: filter mismatch"
            );

            // no perturbation does better on the regularized objective
            let energy = |c: &DVector<f64>| {
                let miss = fwd.apply(c) - &target;
                fwd.omega_inner(&miss, &miss) + alpha * fwd.gram_w().norm(c).powi(2)
            };
            let base_coeffs = DVector::from_vec(window.gather(&r.f).unwrap());
            let base = energy(&base_coeffs);
            for _ in 0..50 {
                let delta = random_window(&window, &mut rng) * 0.1;
                assert!(energy(&(&base_coeffs + delta)) >= base - 1e-12 * base.abs());
            }
        }

        let heavy = tikhonov_control(&fwd, &v, 1e6).unwrap();
        let light = tikhonov_control(&fwd, &v, 1e-2).unwrap();
        assert!(heavy.cost < 1e-4 * light.cost.max(1e-12));
        assert!(tikhonov_control(&fwd, &v, -1.0).is_err());
    }

    #[test]
    fn tikhonov_error_fades_for_reachable_targets() {
        let (_, omega, window, _, fwd) = forward();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let c0 = random_window(&window, &mut rng);
        let target_vec = fwd.apply(&c0);
        let v = omega.scatter(target_vec.as_slice()).unwrap();
        let vnorm = fwd.omega_norm(&target_vec);
        let mut prev = f64::INFINITY;
        for k in 1..=12 {
            let alpha = 10f64.powi(-k);
            let r = tikhonov_control(&fwd, &v, alpha).unwrap();
            assert!(r.approx_error <= prev * (1.0 + 1e-9), "alpha={alpha}");
            prev = r.approx_error;
        }
        assert!(prev <= 1e-3 * vnorm, "terminal error {prev} vs scale {vnorm}");
    }

    #[test]
    fn sobolev_codomain_changes_the_geometry_consistently() {
        let (_, omega, window, op, _) = forward();
        let fwd = assemble_forward(&op, &omega, &window, OmegaGeometry::Sobolev(0.3)).unwrap();
        let g = gsvd(&fwd).unwrap();
        assert!(g.sigma()[0] > 0.0);
        for j in 0..g.len().min(6) {
            let lhs = fwd.apply(&g.phi_column(j));
            let rhs = g.w_column(j) * g.sigma()[j];
            assert!(fwd.omega_norm(&(lhs - rhs)) <= 1e-8 * g.sigma()[0]);
            let ww = fwd.omega_inner(&g.w_column(j), &g.w_column(j));
            assert!((ww - 1.0).abs() <= 1e-8);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let c0 = random_window(&window, &mut rng);
        let v = omega.scatter(fwd.apply(&c0).as_slice()).unwrap();
        let r = truncated_control(&fwd, &g, &v, 3).unwrap();
        assert!(r.approx_error.is_finite() && r.cost.is_finite());
    }
}
