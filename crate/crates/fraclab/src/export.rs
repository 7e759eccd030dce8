//! Artifact writers: CSV tables, grid profiles, DN matrices, singular
//! systems, and experiment records, in formats stable enough to serve as
//! regression fixtures.
//!
//! Every float is printed with 17 significant digits, which is exactly
//! enough for a lossless `f64` round trip, and rows follow fixed orders, so
//! a rerun of the same computation reproduces every artifact byte for byte.
//! Wall-clock readings are confined to the JSON summaries; the CSV tables
//! never contain them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::control::{ControlResult, ForwardOperator, GsvdResult};
use crate::cs::Extension;
use crate::dn::DnMatrix;
use crate::error::Result;
use crate::grid::GridFunction;
use crate::lab::{Assertion, ExperimentRecord, FitReport, LabConfig};

/// 17 significant digits, the smallest count that round-trips every `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn axis_headers(dim: usize) -> Vec<String> {
    (0..dim).map(|a| format!("x{a} (length)")).collect()
}

/// One grid function as `index,x...,<label>` rows in flat-index order.
pub fn write_profile(path: &Path, f: &GridFunction, label: &str) -> Result<()> {
    let grid = f.grid();
    let mut text = format!("index,{},{label}\n", axis_headers(grid.dim()).join(","));
    for j in 0..grid.len() {
        let p = grid.point(j);
        write!(text, "{j}").unwrap();
        for &c in &p[..grid.dim()] {
            write!(text, ",{}", fmt_float(c)).unwrap();
        }
        writeln!(text, ",{}", fmt_float(f.values()[j])).unwrap();
    }
    fs::write(path, text)?;
    Ok(())
}

/// Extension slices as `x...,y,u` rows: the trace at height zero first,
/// then each stored level in ascending order.
pub fn write_extension(path: &Path, ext: &Extension) -> Result<()> {
    let grid = ext.trace().grid();
    let mut text = format!("{},y (length),u (1)\n", axis_headers(grid.dim()).join(","));
    let mut slab = |height: f64, slice: &GridFunction| {
        for j in 0..grid.len() {
            let p = grid.point(j);
            for &c in &p[..grid.dim()] {
                write!(text, "{},", fmt_float(c)).unwrap();
            }
            writeln!(text, "{},{}", fmt_float(height), fmt_float(slice.values()[j])).unwrap();
        }
    };
    slab(0.0, ext.trace());
    for (i, &y) in ext.levels().iter().enumerate() {
        slab(y, ext.slice(i));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Dense DN matrix with an index-map header: row r and column c of the
/// matrix belong to the exterior grid points named by the map, in order.
pub fn write_dn_matrix(path: &Path, dn: &DnMatrix) -> Result<()> {
    let map: Vec<String> = dn.exterior().indices().iter().map(|j| j.to_string()).collect();
    let mut text = String::from(
        "# dirichlet-to-neumann matrix; rows and columns follow the exterior index map\n",
    );
    writeln!(text, "# index_map: {}", map.join(",")).unwrap();
    let m = dn.matrix();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| fmt_float(m[(r, c)])).collect();
        writeln!(text, "{}", row.join(",")).unwrap();
    }
    fs::write(path, text)?;
    Ok(())
}

/// The full computed singular-value list, one `j,sigma_j` row per triple.
pub fn write_sigma(path: &Path, g: &GsvdResult) -> Result<()> {
    let mut text = String::from("j (index),sigma_j (dimensionless)\n");
    for (j, &s) in g.sigma().iter().enumerate() {
        writeln!(text, "{j},{}", fmt_float(s)).unwrap();
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct MatrixBlock {
    rows: usize,
    cols: usize,
    byte_offset: usize,
}

#[derive(Serialize)]
struct VectorHeader<'a> {
    dtype: &'static str,
    byte_order: &'static str,
    layout: &'static str,
    triples: usize,
    numerical_rank: usize,
    phi: MatrixBlock,
    w: MatrixBlock,
    window_index_map: &'a [usize],
    omega_index_map: &'a [usize],
}

/// Singular vectors as raw little-endian `f64` columns (Φ block then W
/// block, both column-major) plus a JSON header describing the layout and
/// naming the grid points behind each coefficient.
pub fn write_gsvd_vectors(
    bin_path: &Path,
    json_path: &Path,
    fwd: &ForwardOperator,
    g: &GsvdResult,
) -> Result<()> {
    let phi = g.phi();
    let w = g.w();
    let mut bytes = Vec::with_capacity(8 * (phi.len() + w.len()));
    for v in phi.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in w.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let header = VectorHeader {
        dtype: "f64",
        byte_order: "little_endian",
        layout: "column_major",
        triples: g.len(),
        numerical_rank: g.numerical_rank(),
        phi: MatrixBlock {
            rows: phi.nrows(),
            cols: phi.ncols(),
            byte_offset: 0,
        },
        w: MatrixBlock {
            rows: w.nrows(),
            cols: w.ncols(),
            byte_offset: 8 * phi.len(),
        },
        window_index_map: fwd.window().indices(),
        omega_index_map: fwd.omega().indices(),
    };
    fs::write(bin_path, bytes)?;
    write_json(json_path, &header)
}

#[derive(Serialize)]
struct ControlSummary<'a> {
    method: &'a str,
    parameter: f64,
    approx_error: f64,
    cost: f64,
}

/// The window datum as a profile CSV next to a JSON error/cost summary.
pub fn write_control(csv_path: &Path, json_path: &Path, res: &ControlResult) -> Result<()> {
    write_profile(csv_path, &res.f, "f (window datum)")?;
    write_json(
        json_path,
        &ControlSummary {
            method: res.method.tag(),
            parameter: res.parameter,
            approx_error: res.approx_error,
            cost: res.cost,
        },
    )
}

#[derive(Serialize)]
struct ExperimentSummary<'a> {
    name: &'a str,
    all_passed: bool,
    config: &'a LabConfig,
    fits: &'a [FitReport],
    assertions: &'a [Assertion],
    notes: &'a [String],
    wall_time_seconds: f64,
    table: String,
}

/// One experiment as `<name>.csv` (the measured table, units in the header
/// row) and `<name>.json` (fits, assertion verdicts, notes, wall time).
pub fn write_experiment(dir: &Path, rec: &ExperimentRecord) -> Result<(PathBuf, PathBuf)> {
    let csv_path = dir.join(format!("{}.csv", rec.name));
    let json_path = dir.join(format!("{}.json", rec.name));
    let mut text = format!("{}\n", rec.columns.join(","));
    for row in &rec.rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt_float(v)).collect();
        writeln!(text, "{}", cells.join(",")).unwrap();
    }
    fs::write(&csv_path, text)?;
    write_json(
        &json_path,
        &ExperimentSummary {
            name: &rec.name,
            all_passed: rec.all_passed(),
            config: &rec.config,
            fits: &rec.fits,
            assertions: &rec.assertions,
            notes: &rec.notes,
            wall_time_seconds: rec.wall_time,
            table: format!("{}.csv", rec.name),
        },
    )?;
    Ok((csv_path, json_path))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| crate::error::Error::Numerical(format!("json encoding failed: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{assemble_forward, gsvd, tikhonov_control, OmegaGeometry};
    use crate::cs::extend;
    use crate::dn::assemble_dn;
    use crate::lab::{bump_profile, LabConfig, PotentialKind};

    fn small_config() -> LabConfig {
        LabConfig {
            n: 64,
            ..LabConfig::default()
        }
    }

    #[test]
    fn floats_print_17_significant_digits_and_round_trip() {
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        for &x in &[std::f64::consts::PI, -3.25e-17, 6.9158e-2, 1e300] {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn profile_csv_reads_back_as_a_file_potential() {
        let config = small_config();
        let (grid, omega, _) = config.single().unwrap();
        let f = bump_profile(grid, 1.0).scaled(-0.7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        write_profile(&path, &f, "q (1)").unwrap();

        let kind = PotentialKind::File {
            path: path.to_string_lossy().into_owned(),
        };
        let q = kind.build(grid, 0.5, &omega, 1.0).unwrap();
        let want = f.restricted_to(&omega).unwrap();
        for j in 0..grid.len() {
            assert_eq!(q.values().values()[j], want.values()[j]);
        }
    }

    #[test]
    fn rewriting_the_same_artifacts_is_byte_identical() {
        let config = small_config();
        let (grid, omega, _) = config.single().unwrap();
        let op = config.operator(grid, &omega).unwrap();
        let dn = assemble_dn(&op, &omega).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_dn_matrix(&a, &dn).unwrap();
        write_dn_matrix(&b, &dn).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

        let head = fs::read_to_string(&a).unwrap();
        let map_line = head.lines().nth(1).unwrap();
        let listed = map_line.trim_start_matches("# index_map: ").split(',').count();
        assert_eq!(listed, dn.exterior().len());
        assert_eq!(head.lines().count(), 2 + dn.exterior().len());
    }

    #[test]
    fn extension_csv_covers_trace_and_every_level() {
        let config = small_config();
        let grid = config.grid().unwrap();
        let f = bump_profile(grid, 1.0);
        let ext = extend(&f, 0.5, &[0.25, 0.5, 1.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extension.csv");
        write_extension(&path, &ext).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * grid.len());
        assert!(text.lines().next().unwrap().contains("y (length)"));
    }

    #[test]
    fn gsvd_artifacts_describe_their_own_layout() {
        let config = small_config();
        let (grid, omega, window) = config.single().unwrap();
        let op = config.operator(grid, &omega).unwrap();
        let fwd = assemble_forward(&op, &omega, &window, OmegaGeometry::MassWeighted).unwrap();
        let g = gsvd(&fwd).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let sigma = dir.path().join("sigma.csv");
        let bin = dir.path().join("vectors.bin");
        let json = dir.path().join("vectors.json");
        write_sigma(&sigma, &g).unwrap();
        write_gsvd_vectors(&bin, &json, &fwd, &g).unwrap();

        let rows = fs::read_to_string(&sigma).unwrap().lines().count() - 1;
        assert_eq!(rows, g.len());

        let header: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
        let bytes = fs::read(&bin).unwrap().len();
        let expect = 8 * (g.phi().len() + g.w().len());
        assert_eq!(bytes, expect);
        assert_eq!(header["w"]["byte_offset"].as_u64().unwrap() as usize, 8 * g.phi().len());
        assert_eq!(
            header["omega_index_map"].as_array().unwrap().len(),
            omega.len()
        );
    }

    #[test]
    fn control_and_experiment_writers_emit_paired_artifacts() {
        let config = small_config();
        let (grid, omega, window) = config.single().unwrap();
        let op = config.operator(grid, &omega).unwrap();
        let fwd = assemble_forward(&op, &omega, &window, OmegaGeometry::MassWeighted).unwrap();
        let target = bump_profile(grid, 1.0).restricted_to(&omega).unwrap();
        let res = tikhonov_control(&fwd, &target, 1e-6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("control.csv");
        let json = dir.path().join("control.json");
        write_control(&csv, &json, &res).unwrap();
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(summary["method"], "tikhonov");
        assert!(summary["approx_error"].as_f64().unwrap() >= 0.0);
        assert!(summary["cost"].as_f64().unwrap() > 0.0);

        let rec = crate::lab::sv_decay_experiment(&config).unwrap();
        let (csv, json) = write_experiment(dir.path(), &rec).unwrap();
        let table = fs::read_to_string(&csv).unwrap();
        assert_eq!(table.lines().count(), 1 + rec.rows.len());
        assert_eq!(table.lines().next().unwrap(), rec.columns.join(","));
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(summary["name"], "sv-decay");
        assert!(summary["assertions"].as_array().unwrap().len() >= 2);
    }
}
