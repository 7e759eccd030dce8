//! The fractional Laplacian (-Δ)^s as a spectral multiplier, and dense
//! matrices of the Schrödinger-type operator (-Δ)^s + q on the grid.
//!
//! The operator matrix is h^dim-weighted: uᵀ M v approximates the bilinear
//! form ⟨(-Δ)^s u, v⟩ + ⟨q u, v⟩, so M is symmetric and its rows carry the
//! quadrature weight of the collocation equations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{Grid, GridFunction, IndexSet};
use crate::par;
use crate::sobolev;

/// Bounded potential q sampled on the grid, with an optional support set used
/// for validation and reporting.
#[derive(Debug, Clone)]
pub struct Potential {
    values: GridFunction,
    support: Option<IndexSet>,
}

impl Potential {
    pub fn zero(grid: Grid) -> Potential {
        Potential {
            values: GridFunction::zeros(grid),
            support: None,
        }
    }

    /// Constant value c on `set`, zero elsewhere.
    pub fn constant_on(set: &IndexSet, c: f64) -> Result<Potential> {
        let f = set.scatter(&vec![c; set.len()])?;
        Ok(Potential {
            values: f,
            support: Some(set.clone()),
        })
    }

    /// Arbitrary samples restricted to `set`.
    pub fn from_values_on(set: &IndexSet, f: &GridFunction) -> Result<Potential> {
        Ok(Potential {
            values: f.restricted_to(set)?,
            support: Some(set.clone()),
        })
    }

    /// Full-grid samples.
    pub fn from_values(f: GridFunction) -> Potential {
        Potential {
            values: f,
            support: None,
        }
    }

    pub fn values(&self) -> &GridFunction {
        &self.values
    }

    pub fn grid(&self) -> &Grid {
        self.values.grid()
    }

    pub fn support(&self) -> Option<&IndexSet> {
        self.support.as_ref()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.max_abs()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.values().iter().all(|&v| v >= 0.0)
    }
}

/// Applies (-Δ)^s through the spectral symbol |ξ|^{2s}; the zero frequency is
/// annihilated exactly, so constants go to zero.
pub fn frac_laplacian_apply(u: &GridFunction, s: f64) -> Result<GridFunction> {
    check_order(s)?;
    let table = u
        .grid()
        .multiplier_table(|xi| if xi == 0.0 { 0.0 } else { xi.powf(2.0 * s) });
    let vals = fft::apply_multiplier(u.grid(), u.values(), &table)?;
    GridFunction::from_values(*u.grid(), vals)
}

/// Dense h^dim-weighted matrix of (-Δ)^s + q on the full grid.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    grid: Grid,
    s: f64,
    matrix: DMatrix<f64>,
    potential: Potential,
}

impl OperatorMatrix {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// M u as a grid function.
    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch("operator apply".into()));
        }
        let v = DVector::from_column_slice(u.values());
        let out = &self.matrix * v;
        GridFunction::from_values(self.grid, out.data.into())
    }

    /// Bilinear form uᵀ M v = ⟨(-Δ)^{s/2}u, (-Δ)^{s/2}v⟩ + ⟨q u, v⟩.
    pub fn bilinear(&self, u: &GridFunction, v: &GridFunction) -> Result<f64> {
        let mv = self.apply(v)?;
        let s: f64 = u
            .values()
            .iter()
            .zip(mv.values())
            .map(|(a, b)| a * b)
            .sum();
        Ok(s)
    }

    /// Extracts the square sub-block on `set` (set order on both axes).
    pub fn block(&self, set: &IndexSet) -> DMatrix<f64> {
        let idx = set.indices();
        DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.matrix[(idx[i], idx[j])])
    }

    /// Rectangular block: rows on `rows`, columns on `cols`.
    pub fn block_rect(&self, rows: &IndexSet, cols: &IndexSet) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.matrix[(rows.indices()[i], cols.indices()[j])]
        })
    }
}

/// Assembles the dense operator matrix. The fractional part is a symmetric
/// circulant, so a single spectral kernel is computed and rows are gathered
/// from it in parallel; q enters on the diagonal with the same h^dim weight.
pub fn assemble_operator(grid: Grid, s: f64, q: &Potential) -> Result<OperatorMatrix> {
    check_order(s)?;
    if q.grid() != &grid {
        return Err(Error::GridMismatch("potential grid".into()));
    }
    let total = grid.len();
    if (grid.dim() == 1 && total > 1024) || (grid.dim() == 2 && grid.n() > 64) {
        return Err(Error::Config(format!(
            "dense assembly capped at 1024 points (1d) or 64 per axis (2d); got {} points",
            total
        )));
    }
    let kernel =
        sobolev::spectral_kernel(&grid, |xi| if xi == 0.0 { 0.0 } else { xi.powf(2.0 * s) })?;
    let h = grid.cell_volume();
    let qv = q.values().values().to_vec();
    let rows = par::map_indexed(total, |r| {
        let a = grid.unflatten(r);
        let mut row = vec![0.0; total];
        for (c, slot) in row.iter_mut().enumerate() {
            let b = grid.unflatten(c);
            *slot = kernel[sobolev::wrap_offset(&grid, a, b)];
        }
        row[r] += h * qv[r];
        row
    });
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let matrix = DMatrix::from_row_slice(total, total, &flat);
    Ok(OperatorMatrix {
        grid,
        s,
        matrix,
        potential: q.clone(),
    })
}

fn check_order(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Config(format!(
            "fractional order must lie in (0, 1), got {s}"
        )));
    }
    Ok(())
}
