//! Periodic spectral grid on the box [-L, L)^dim.
//!
//! The box is a padded stand-in for R^dim: domains of interest sit well inside
//! and the half-period L is chosen large enough that wrap-around is below the
//! tolerances of the computation using it. Frequencies follow DFT order,
//! ξ_k = πk/L with k = 0, 1, ..., N/2-1, -N/2, ..., -1 per axis.

use crate::error::{Error, Result};

/// Uniform periodic grid: `n` points per axis on [-L, L)^dim, spacing 2L/n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    half_period: f64,
}

impl Grid {
    /// Builds a grid with `n` points per axis on [-half_period, half_period)^dim.
    ///
    /// `n` must be a power of two with n >= 8 so the FFT layout and the
    /// Nyquist bookkeeping stay simple; `dim` is 1 or 2.
    pub fn new(dim: usize, n: usize, half_period: f64) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("dim must be 1 or 2, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        if !(half_period.is_finite() && half_period > 0.0) {
            return Err(Error::Config(format!(
                "half-period must be positive and finite, got {half_period}"
            )));
        }
        Ok(Grid { dim, n, half_period })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_period(&self) -> f64 {
        self.half_period
    }

    /// Grid spacing h = 2L/n.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_period / self.n as f64
    }

    /// Total number of points n^dim.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume h^dim, the quadrature weight of one grid point.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Coordinate along one axis: x_j = -L + j h.
    pub fn axis_coordinate(&self, j: usize) -> f64 {
        -self.half_period + j as f64 * self.spacing()
    }

    /// Frequency along one axis in DFT order: ξ_k = πk/L with k wrapped to
    /// [-n/2, n/2).
    pub fn axis_frequency(&self, k: usize) -> f64 {
        let signed = if k < self.n / 2 {
            k as isize
        } else {
            k as isize - self.n as isize
        };
        std::f64::consts::PI * signed as f64 / self.half_period
    }

    /// Decomposes a flat index into per-axis indices (row-major, axis 0 slow).
    pub fn unflatten(&self, flat: usize) -> [usize; 2] {
        match self.dim {
            1 => [flat, 0],
            _ => [flat / self.n, flat % self.n],
        }
    }

    pub fn flatten(&self, idx: [usize; 2]) -> usize {
        match self.dim {
            1 => idx[0],
            _ => idx[0] * self.n + idx[1],
        }
    }

    /// Spatial point of a flat index.
    pub fn point(&self, flat: usize) -> [f64; 2] {
        let idx = self.unflatten(flat);
        match self.dim {
            1 => [self.axis_coordinate(idx[0]), 0.0],
            _ => [self.axis_coordinate(idx[0]), self.axis_coordinate(idx[1])],
        }
    }

    /// |ξ| of a flat spectral index.
    pub fn frequency_norm(&self, flat: usize) -> f64 {
        let idx = self.unflatten(flat);
        match self.dim {
            1 => self.axis_frequency(idx[0]).abs(),
            _ => {
                let a = self.axis_frequency(idx[0]);
                let b = self.axis_frequency(idx[1]);
                a.hypot(b)
            }
        }
    }

    /// Tabulates a radial spectral multiplier m(|ξ_k|) over all flat indices.
    pub fn multiplier_table<F: Fn(f64) -> f64>(&self, m: F) -> Vec<f64> {
        (0..self.len()).map(|k| m(self.frequency_norm(k))).collect()
    }

    pub(crate) fn require_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{what}: {:?} vs {:?}",
                self, other
            )));
        }
        Ok(())
    }
}

/// Real scalar field sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: Grid) -> GridFunction {
        GridFunction {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<GridFunction> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "value vector has {} entries, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite sample value".into()));
        }
        Ok(GridFunction { grid, values })
    }

    /// Samples a function of the spatial point.
    pub fn sample<F: Fn(&[f64]) -> f64>(grid: Grid, f: F) -> GridFunction {
        let values = (0..grid.len())
            .map(|j| {
                let p = grid.point(j);
                f(&p[..grid.dim()])
            })
            .collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// L² inner product with the grid quadrature weight h^dim.
    pub fn dot_l2(&self, other: &GridFunction) -> Result<f64> {
        self.grid.require_same(&other.grid, "dot_l2")?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn norm_l2(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add_scaled(&mut self, c: f64, other: &GridFunction) -> Result<()> {
        self.grid.require_same(&other.grid, "add_scaled")?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    /// Zeroes every sample outside `set`.
    pub fn restricted_to(&self, set: &IndexSet) -> Result<GridFunction> {
        self.grid.require_same(set.grid(), "restricted_to")?;
        let mut out = GridFunction::zeros(self.grid);
        for &j in set.indices() {
            out.values[j] = self.values[j];
        }
        Ok(out)
    }

    /// True when every sample off `set` is exactly zero-sized relative to the
    /// largest sample.
    pub fn supported_on(&self, set: &IndexSet) -> bool {
        if self.grid != *set.grid() {
            return false;
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return true;
        }
        let mut member = vec![false; self.grid.len()];
        for &j in set.indices() {
            member[j] = true;
        }
        self.values
            .iter()
            .enumerate()
            .all(|(j, v)| member[j] || v.abs() <= 1e-14 * scale)
    }
}

/// Role a point set plays in the exterior-value problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetLabel {
    Omega,
    Window,
    WindowLeft,
    WindowRight,
    Exterior,
}

/// Sorted set of flat grid indices with a role label.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSet {
    grid: Grid,
    label: SetLabel,
    indices: Vec<usize>,
}

impl IndexSet {
    pub fn new(grid: Grid, label: SetLabel, mut indices: Vec<usize>) -> Result<IndexSet> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::Config("index set is empty".into()));
        }
        if *indices.last().unwrap() >= grid.len() {
            return Err(Error::Config("index out of grid range".into()));
        }
        Ok(IndexSet { grid, label, indices })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn label(&self) -> SetLabel {
        self.label
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    pub fn is_disjoint_from(&self, other: &IndexSet) -> bool {
        self.indices.iter().all(|j| !other.contains(*j))
    }

    /// Complement of the set, labelled as exterior.
    pub fn complement(&self) -> IndexSet {
        let mut member = vec![false; self.grid.len()];
        for &j in &self.indices {
            member[j] = true;
        }
        let indices = (0..self.grid.len()).filter(|j| !member[*j]).collect();
        IndexSet {
            grid: self.grid,
            label: SetLabel::Exterior,
            indices,
        }
    }

    /// Gathers the samples of `f` on this set, in set order.
    pub fn gather(&self, f: &GridFunction) -> Result<Vec<f64>> {
        self.grid.require_same(f.grid(), "gather")?;
        Ok(self.indices.iter().map(|&j| f.values()[j]).collect())
    }

    /// Builds the grid function equal to `vals` on this set and zero elsewhere.
    pub fn scatter(&self, vals: &[f64]) -> Result<GridFunction> {
        if vals.len() != self.indices.len() {
            return Err(Error::GridMismatch(format!(
                "scatter: {} values for a set of {} points",
                vals.len(),
                self.indices.len()
            )));
        }
        let mut out = GridFunction::zeros(self.grid);
        for (&j, &v) in self.indices.iter().zip(vals) {
            out.values_mut()[j] = v;
        }
        Ok(out)
    }

    /// Indicator of a single member point.
    pub fn indicator(&self, position: usize) -> Result<GridFunction> {
        let j = *self
            .indices
            .get(position)
            .ok_or_else(|| Error::Config(format!("indicator position {position} out of set")))?;
        let mut out = GridFunction::zeros(self.grid);
        out.values_mut()[j] = 1.0;
        Ok(out)
    }
}

/// Geometry of a centered domain with observation windows in its exterior.
#[derive(Debug, Clone, Copy)]
pub struct DomainSpec {
    pub omega_radius: f64,
    pub gap: f64,
    pub window_radius: f64,
}

impl DomainSpec {
    fn validate(&self, grid: &Grid) -> Result<()> {
        let l = grid.half_period();
        if !(self.omega_radius > 0.0 && self.gap > 0.0 && self.window_radius > 0.0) {
            return Err(Error::Config(
                "omega radius, gap, and window radius must all be positive".into(),
            ));
        }
        let reach = self.omega_radius + self.gap + 2.0 * self.window_radius;
        if reach >= l {
            return Err(Error::Config(format!(
                "domain and window reach {reach} but the half-period is only {l}; enlarge the box"
            )));
        }
        let h = grid.spacing();
        if self.gap < 2.0 * h {
            return Err(Error::Config(format!(
                "gap {} is below two grid cells ({}); domain and window would touch",
                self.gap,
                2.0 * h
            )));
        }
        Ok(())
    }

    fn box_set(
        &self,
        grid: Grid,
        label: SetLabel,
        center: [f64; 2],
        radius: f64,
    ) -> Result<IndexSet> {
        let tol = 1e-12 * grid.spacing();
        let indices = (0..grid.len())
            .filter(|&j| {
                let p = grid.point(j);
                (0..grid.dim()).all(|a| (p[a] - center[a]).abs() <= radius + tol)
            })
            .collect::<Vec<_>>();
        if indices.len() < 2 {
            return Err(Error::Config(
                "requested set contains fewer than two grid points; refine the grid".into(),
            ));
        }
        IndexSet::new(grid, label, indices)
    }
}

/// Builds Ω (a centered box of the given radius) and one observation window W
/// to its right, separated by `gap`.
pub fn make_domains(grid: Grid, spec: DomainSpec) -> Result<(IndexSet, IndexSet)> {
    spec.validate(&grid)?;
    let omega = spec.box_set(grid, SetLabel::Omega, [0.0, 0.0], spec.omega_radius)?;
    let c = spec.omega_radius + spec.gap + spec.window_radius;
    let window = spec.box_set(grid, SetLabel::Window, [c, 0.0], spec.window_radius)?;
    check_separated(&omega, &window)?;
    Ok((omega, window))
}

/// Two-window variant: W₁ mirrored to the left of Ω, W₂ to the right.
pub fn make_domains_two_windows(
    grid: Grid,
    spec: DomainSpec,
) -> Result<(IndexSet, IndexSet, IndexSet)> {
    spec.validate(&grid)?;
    let omega = spec.box_set(grid, SetLabel::Omega, [0.0, 0.0], spec.omega_radius)?;
    let c = spec.omega_radius + spec.gap + spec.window_radius;
    let w1 = spec.box_set(grid, SetLabel::WindowLeft, [-c, 0.0], spec.window_radius)?;
    let w2 = spec.box_set(grid, SetLabel::WindowRight, [c, 0.0], spec.window_radius)?;
    check_separated(&omega, &w1)?;
    check_separated(&omega, &w2)?;
    if !w1.is_disjoint_from(&w2) {
        return Err(Error::Config("the two windows overlap".into()));
    }
    Ok((omega, w1, w2))
}

/// Disjointness with at least one empty grid cell between the sets.
fn check_separated(omega: &IndexSet, window: &IndexSet) -> Result<()> {
    if !omega.is_disjoint_from(window) {
        return Err(Error::Config("domain and window overlap".into()));
    }
    let grid = omega.grid();
    let n = grid.n() as isize;
    for &j in window.indices() {
        let wj = grid.unflatten(j);
        for &i in omega.indices() {
            let oi = grid.unflatten(i);
            let adjacent = (0..grid.dim()).all(|a| {
                let d = (wj[a] as isize - oi[a] as isize).rem_euclid(n);
                d <= 1 || d >= n - 1
            });
            if adjacent {
                return Err(Error::Config(
                    "domain and window are adjacent; leave at least one empty cell".into(),
                ));
            }
        }
    }
    Ok(())
}
