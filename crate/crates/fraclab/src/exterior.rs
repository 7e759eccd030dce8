//! Exterior-value and source problems for (-Δ)^s + q on a domain Ω.
//!
//! Both problems reduce to the Ω-block of the dense operator matrix: the
//! exterior problem solves M_ΩΩ u_Ω = -M_ΩE f_E with u = f outside Ω, and the
//! source problem solves M_ΩΩ w_Ω = h^dim v_Ω with w = 0 outside. The block is
//! factorized once per solver through a symmetric eigendecomposition, which
//! also yields the Dirichlet spectrum and the degeneracy diagnostic.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fracop::OperatorMatrix;
use crate::grid::{GridFunction, IndexSet};

/// Reciprocal condition number below which the Ω-block is treated as
/// singular, i.e. zero is a Dirichlet eigenvalue of the operator.
pub const DEGENERACY_RCOND: f64 = 1e-12;

/// Solution of the exterior-value problem.
#[derive(Debug, Clone)]
pub struct ExteriorSolution {
    /// Full-grid solution, equal to the datum outside Ω.
    pub u: GridFunction,
    /// The exterior datum that produced it.
    pub datum: GridFunction,
    /// Largest interior collocation residual max_{a∈Ω} |(M u)_a|.
    pub residual: f64,
}

/// Solution of the interior source problem, vanishing outside Ω.
#[derive(Debug, Clone)]
pub struct SourceSolution {
    pub w: GridFunction,
    pub source: GridFunction,
    pub residual: f64,
}

/// Factorized Ω-block of an operator matrix, reusable across solves.
pub struct DirichletSolver<'a> {
    op: &'a OperatorMatrix,
    omega: &'a IndexSet,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    rcond: f64,
}

impl<'a> DirichletSolver<'a> {
    pub fn new(op: &'a OperatorMatrix, omega: &'a IndexSet) -> Result<DirichletSolver<'a>> {
        if op.grid() != omega.grid() {
            return Err(Error::GridMismatch("solver domain".into()));
        }
        let block = op.block(omega);
        let eig = SymmetricEigen::new(block);
        let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = eig
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let rcond = if max > 0.0 { min / max } else { 0.0 };
        if rcond < DEGENERACY_RCOND {
            return Err(Error::Degenerate(format!(
                "zero is a Dirichlet eigenvalue of (-Δ)^s + q on the domain \
                 (reciprocal condition {rcond:.3e})"
            )));
        }
        Ok(DirichletSolver {
            op,
            omega,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            rcond,
        })
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn omega(&self) -> &IndexSet {
        self.omega
    }

    pub fn operator(&self) -> &OperatorMatrix {
        self.op
    }

    fn solve_block(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut y = self.eigenvectors.transpose() * rhs;
        for (yi, lam) in y.iter_mut().zip(self.eigenvalues.iter()) {
            *yi /= lam;
        }
        &self.eigenvectors * y
    }

    /// Solves the exterior-value problem for a datum supported off Ω.
    pub fn solve_exterior(&self, f: &GridFunction) -> Result<ExteriorSolution> {
        if f.grid() != self.op.grid() {
            return Err(Error::GridMismatch("exterior datum".into()));
        }
        let on_omega = self
            .omega
            .indices()
            .iter()
            .any(|&j| f.values()[j] != 0.0);
        if on_omega {
            return Err(Error::Support(
                "exterior datum (it takes nonzero values inside the domain)".into(),
            ));
        }
        // right-hand side -(M f)|_Ω uses only exterior columns since f
        // vanishes on Ω
        let mf = self.op.apply(f)?;
        let rhs = DVector::from_vec(
            self.omega
                .indices()
                .iter()
                .map(|&j| -mf.values()[j])
                .collect(),
        );
        let u_omega = self.solve_block(&rhs);
        let mut u = f.clone();
        for (&j, &v) in self.omega.indices().iter().zip(u_omega.iter()) {
            u.values_mut()[j] = v;
        }
        let residual = self.interior_residual(&u)?;
        Ok(ExteriorSolution {
            u,
            datum: f.clone(),
            residual,
        })
    }

    /// Solves ((-Δ)^s + q) w = v in Ω with w = 0 outside.
    pub fn solve_source(&self, v: &GridFunction) -> Result<SourceSolution> {
        if v.grid() != self.op.grid() {
            return Err(Error::GridMismatch("source term".into()));
        }
        if !v.supported_on(self.omega) {
            return Err(Error::Support("source term".into()));
        }
        let h = self.op.grid().cell_volume();
        let rhs = DVector::from_vec(
            self.omega
                .indices()
                .iter()
                .map(|&j| h * v.values()[j])
                .collect(),
        );
        let w_omega = self.solve_block(&rhs);
        let w = self.omega.scatter(w_omega.as_slice())?;
        let mw = self.op.apply(&w)?;
        let mut residual = 0.0f64;
        for &j in self.omega.indices() {
            residual = residual.max((mw.values()[j] - h * v.values()[j]).abs());
        }
        Ok(SourceSolution {
            w,
            source: v.clone(),
            residual,
        })
    }

    fn interior_residual(&self, u: &GridFunction) -> Result<f64> {
        let mu = self.op.apply(u)?;
        Ok(self
            .omega
            .indices()
            .iter()
            .fold(0.0f64, |m, &j| m.max(mu.values()[j].abs())))
    }
}

/// One-shot exterior solve; prefer [`DirichletSolver`] when solving many data
/// against the same operator.
pub fn solve_exterior_dirichlet(
    op: &OperatorMatrix,
    omega: &IndexSet,
    f: &GridFunction,
) -> Result<ExteriorSolution> {
    DirichletSolver::new(op, omega)?.solve_exterior(f)
}

/// One-shot source solve.
pub fn solve_source(
    op: &OperatorMatrix,
    omega: &IndexSet,
    v: &GridFunction,
) -> Result<SourceSolution> {
    DirichletSolver::new(op, omega)?.solve_source(v)
}

/// The k smallest Dirichlet eigenvalues of (-Δ)^s + q on Ω, i.e. of the
/// generalized problem M_ΩΩ x = λ h^dim x.
pub fn dirichlet_spectrum(op: &OperatorMatrix, omega: &IndexSet, k: usize) -> Result<Vec<f64>> {
    if op.grid() != omega.grid() {
        return Err(Error::GridMismatch("spectrum domain".into()));
    }
    if k == 0 || k > omega.len() {
        return Err(Error::Config(format!(
            "requested {k} eigenvalues of a {}-point block",
            omega.len()
        )));
    }
    let eig = SymmetricEigen::new(op.block(omega));
    let h = op.grid().cell_volume();
    let mut lambda: Vec<f64> = eig.eigenvalues.iter().map(|v| v / h).collect();
    lambda.sort_by(|a, b| a.partial_cmp(b).unwrap());
    lambda.truncate(k);
    Ok(lambda)
}
