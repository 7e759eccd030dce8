//! Command-line driver: loads a key-grouped configuration file, applies
//! flag overrides on top, runs one solver, map assembly, control build, or
//! stability experiment, and leaves the artifacts in a timestamped output
//! directory together with the fully resolved `config.toml` snapshot.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 when the
//! requested problem is mathematically degenerate, 4 when the numerics
//! break down.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use fraclab::config::{RunConfig, OUTPUT_ENV};
use fraclab::control::{
    assemble_forward, gsvd, threshold_control, tikhonov_control, truncated_control, ControlResult,
    OmegaGeometry,
};
use fraclab::cs::extend;
use fraclab::dn::assemble_dn;
use fraclab::error::{Error, Result};
use fraclab::exterior::{solve_exterior_dirichlet, solve_source};
use fraclab::export;
use fraclab::grid::{Grid, GridFunction, IndexSet};
use fraclab::lab::{self, bump_profile, smooth_bump, ExperimentRecord, PotentialKind};

const EXPERIMENT_NAMES: [&str; 5] = ["sv-decay", "cost-curve", "quc", "dn-modulus", "recover"];
const POTENTIAL_KINDS: [&str; 6] = [
    "zero",
    "constant",
    "bump",
    "oscillatory",
    "eigenshift",
    "file",
];

#[derive(Parser)]
#[command(
    name = "fraclab",
    version,
    about = "Numerical laboratory for exterior-value problems of the fractional Laplacian",
    after_help = "Without --output or a [run] output entry, runs land under the directory \
                  named by the FRACLAB_OUT environment variable, or ./runs as a last resort.\n\
                  Every run directory contains config.toml, the fully resolved configuration; \
                  passing it back through --config replays the run with byte-identical CSVs."
)]
struct Cli {
    /// Key-grouped configuration file; flags below override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output root for the timestamped run directory.
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,

    /// Worker threads for the parallel assemblies.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Space dimension (1 or 2).
    #[arg(long, global = true, value_name = "D")]
    dim: Option<usize>,

    /// Grid points per axis.
    #[arg(long, global = true, value_name = "N")]
    n: Option<usize>,

    /// Half period L of the computational torus [-L, L)^dim.
    #[arg(long, global = true, value_name = "L")]
    half_period: Option<f64>,

    /// Fractional order s of the operator, strictly between 0 and 1.
    #[arg(long, global = true, value_name = "S")]
    order: Option<f64>,

    /// Half width of the interior box.
    #[arg(long, global = true, value_name = "R")]
    omega_radius: Option<f64>,

    /// Empty space between the interior box and the window.
    #[arg(long, global = true, value_name = "G")]
    gap: Option<f64>,

    /// Half width of the observation window.
    #[arg(long, global = true, value_name = "R")]
    window_radius: Option<f64>,

    /// Mirror a second window to the left of the interior box.
    #[arg(
        long,
        global = true,
        num_args = 0..=1,
        default_missing_value = "true",
        value_name = "BOOL"
    )]
    two_windows: Option<bool>,

    /// Potential kind: zero, constant, bump, oscillatory, eigenshift, file.
    #[arg(long, global = true, value_name = "KIND")]
    potential: Option<String>,

    /// Level of the constant potential.
    #[arg(long, global = true, value_name = "C")]
    level: Option<f64>,

    /// Amplitude of the bump or oscillatory potential.
    #[arg(long, global = true, value_name = "A")]
    amplitude: Option<f64>,

    /// Wavenumber of the oscillatory potential.
    #[arg(long, global = true, value_name = "K")]
    wavenumber: Option<f64>,

    /// First interior eigenvalue after the eigenshift potential; 0 makes
    /// the problem degenerate on purpose.
    #[arg(long, global = true, value_name = "LAMBDA")]
    offset: Option<f64>,

    /// CSV file of full-grid samples for the file potential.
    #[arg(long, global = true, value_name = "FILE")]
    potential_file: Option<PathBuf>,

    /// Seed for every random draw inside the run.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one exterior-value or interior source problem and write u.csv.
    Solve {
        /// dirichlet (exterior data on the window) or source (interior load).
        #[arg(long, value_name = "MODE")]
        mode: Option<String>,
    },
    /// Extend a trace harmonically into the upper half space.
    Extend {
        /// Comma-separated heights, strictly ascending.
        #[arg(long, value_delimiter = ',', value_name = "Y1,Y2,...")]
        levels: Option<Vec<f64>>,
    },
    /// Assemble the Dirichlet-to-Neumann matrix over the exterior.
    Dn,
    /// Compute the singular system of the window-to-interior map.
    Svd,
    /// Build an approximate control steering the interior restriction to a
    /// bump target.
    Control {
        /// truncated, threshold, or tikhonov.
        #[arg(long, value_name = "METHOD")]
        method: Option<String>,
        /// Regularization weight for the tikhonov method.
        #[arg(long, value_name = "ALPHA")]
        alpha: Option<f64>,
        /// Number of singular triples for the truncated method.
        #[arg(long, value_name = "L")]
        terms: Option<usize>,
        /// Singular-value cutoff for the threshold method.
        #[arg(long, value_name = "TAU")]
        threshold: Option<f64>,
    },
    /// Run one named stability experiment.
    Experiment {
        /// One of: sv-decay, cost-curve, quc, dn-modulus, recover.
        #[arg(value_name = "NAME")]
        name: Option<String>,
    },
}

impl Command {
    fn tag(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Extend { .. } => "extend",
            Command::Dn => "dn",
            Command::Svd => "svd",
            Command::Control { .. } => "control",
            Command::Experiment { .. } => "experiment",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let config = resolve(cli)?;
    size_worker_pool(cli)?;
    config.validate()?;

    let dir = make_run_dir(&config.output_root(), cli.command.tag())?;
    std::fs::write(dir.join("config.toml"), config.to_toml()?)?;

    match &cli.command {
        Command::Solve { .. } => cmd_solve(&config, &dir)?,
        Command::Extend { .. } => cmd_extend(&config, &dir)?,
        Command::Dn => cmd_dn(&config, &dir)?,
        Command::Svd => cmd_svd(&config, &dir)?,
        Command::Control { .. } => cmd_control(&config, &dir)?,
        Command::Experiment { .. } => cmd_experiment(&config, &dir)?,
    }
    println!("run directory: {}", dir.display());
    Ok(())
}

/// File configuration with every given flag folded on top.
fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };

    if let Some(v) = cli.dim {
        config.grid.dim = v;
    }
    if let Some(v) = cli.n {
        config.grid.n = v;
    }
    if let Some(v) = cli.half_period {
        config.grid.half_period = v;
    }
    if let Some(v) = cli.order {
        config.operator.order = v;
    }
    if let Some(v) = cli.omega_radius {
        config.geometry.omega_radius = v;
    }
    if let Some(v) = cli.gap {
        config.geometry.gap = v;
    }
    if let Some(v) = cli.window_radius {
        config.geometry.window_radius = v;
    }
    if let Some(v) = cli.two_windows {
        config.geometry.two_windows = v;
    }
    if let Some(v) = cli.seed {
        config.run.seed = v;
    }
    if let Some(v) = &cli.output {
        config.run.output = Some(v.clone());
    }

    let touches_potential = cli.potential.is_some()
        || cli.level.is_some()
        || cli.amplitude.is_some()
        || cli.wavenumber.is_some()
        || cli.offset.is_some()
        || cli.potential_file.is_some();
    if touches_potential {
        config.potential = merge_potential(cli, &config.potential)?;
    }

    match &cli.command {
        Command::Solve { mode: Some(m) } => config.run.solve_mode = m.clone(),
        Command::Extend { levels: Some(l) } => config.run.extend_levels = l.clone(),
        Command::Control {
            method,
            alpha,
            terms,
            threshold,
        } => {
            if let Some(m) = method {
                config.run.control_method = m.clone();
            }
            if let Some(a) = alpha {
                config.tolerances.tikhonov_alpha = *a;
            }
            if let Some(l) = terms {
                config.tolerances.truncation_terms = *l;
            }
            if let Some(t) = threshold {
                config.tolerances.threshold = *t;
            }
        }
        Command::Experiment { name: Some(n) } => config.run.experiment = Some(n.clone()),
        _ => {}
    }
    Ok(config)
}

/// The potential implied by the flags, with unset parameters taken from the
/// configured potential when the kind matches, and plain defaults last.
fn merge_potential(cli: &Cli, current: &PotentialKind) -> Result<PotentialKind> {
    let kind = match &cli.potential {
        Some(k) => k.as_str(),
        None => match current {
            PotentialKind::Zero => "zero",
            PotentialKind::Constant { .. } => "constant",
            PotentialKind::Bump { .. } => "bump",
            PotentialKind::Oscillatory { .. } => "oscillatory",
            PotentialKind::Eigenshift { .. } => "eigenshift",
            PotentialKind::File { .. } => "file",
        },
    };
    Ok(match kind {
        "zero" => PotentialKind::Zero,
        "constant" => {
            let old = match current {
                PotentialKind::Constant { level } => Some(*level),
                _ => None,
            };
            PotentialKind::Constant {
                level: cli.level.or(old).unwrap_or(1.0),
            }
        }
        "bump" => {
            let old = match current {
                PotentialKind::Bump { amplitude } => Some(*amplitude),
                _ => None,
            };
            PotentialKind::Bump {
                amplitude: cli.amplitude.or(old).unwrap_or(1.0),
            }
        }
        "oscillatory" => {
            let old = match current {
                PotentialKind::Oscillatory {
                    amplitude,
                    wavenumber,
                } => Some((*amplitude, *wavenumber)),
                _ => None,
            };
            PotentialKind::Oscillatory {
                amplitude: cli.amplitude.or(old.map(|p| p.0)).unwrap_or(1.0),
                wavenumber: cli.wavenumber.or(old.map(|p| p.1)).unwrap_or(4.0),
            }
        }
        "eigenshift" => {
            let old = match current {
                PotentialKind::Eigenshift { offset } => Some(*offset),
                _ => None,
            };
            PotentialKind::Eigenshift {
                offset: cli.offset.or(old).unwrap_or(0.0),
            }
        }
        "file" => {
            let old = match current {
                PotentialKind::File { path } => Some(path.clone()),
                _ => None,
            };
            let path = match &cli.potential_file {
                Some(p) => p.to_string_lossy().into_owned(),
                None => old.ok_or_else(|| {
                    Error::Config("potential kind \"file\" needs --potential-file".into())
                })?,
            };
            PotentialKind::File { path }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown potential kind {other:?}; valid kinds: {}",
                POTENTIAL_KINDS.join(", ")
            )))
        }
    })
}

#[cfg(feature = "parallel")]
fn size_worker_pool(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the worker pool: {e}")))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn size_worker_pool(cli: &Cli) -> Result<()> {
    if cli.jobs.is_some() {
        eprintln!("warning: built without the parallel feature; --jobs has no effect");
    }
    Ok(())
}

fn make_run_dir(root: &Path, command: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(root).map_err(|e| {
        Error::Config(format!(
            "cannot create output root {} (from --output, [run] output, or ${OUTPUT_ENV}): {e}",
            root.display()
        ))
    })?;
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut k = 0u32;
    loop {
        let name = if k == 0 {
            format!("{command}-{stamp}")
        } else {
            format!("{command}-{stamp}-{k}")
        };
        let dir = root.join(&name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => k += 1,
            Err(e) => {
                return Err(Error::Config(format!(
                    "cannot create run directory {}: {e}",
                    dir.display()
                )))
            }
        }
    }
}

fn wrote(path: &Path) {
    println!("wrote {}", path.display());
}

/// Smooth bump centered on the observation window, the stock exterior datum.
fn window_bump(grid: Grid, config: &RunConfig, window: &IndexSet) -> Result<GridFunction> {
    let geo = &config.geometry;
    let center = geo.omega_radius + geo.gap + geo.window_radius;
    let r = geo.window_radius;
    let f = GridFunction::sample(grid, |x| {
        x.iter()
            .enumerate()
            .map(|(a, &xa)| {
                let c = if a == 0 { center } else { 0.0 };
                smooth_bump((xa - c) / r)
            })
            .product()
    });
    f.restricted_to(window)
}

fn cmd_solve(config: &RunConfig, dir: &Path) -> Result<()> {
    let (grid, omega, window) = config.domains()?;
    let op = config.lab_config().operator(grid, &omega)?;
    let u = match config.run.solve_mode.as_str() {
        "dirichlet" => {
            let f = window_bump(grid, config, &window)?;
            solve_exterior_dirichlet(&op, &omega, &f)?.u
        }
        "source" => {
            let v = bump_profile(grid, config.geometry.omega_radius).restricted_to(&omega)?;
            solve_source(&op, &omega, &v)?.w
        }
        other => {
            return Err(Error::Config(format!(
                "unknown solve mode {other:?}; valid modes: dirichlet, source"
            )))
        }
    };
    let path = dir.join("u.csv");
    export::write_profile(&path, &u, "u (1)")?;
    wrote(&path);
    Ok(())
}

fn cmd_extend(config: &RunConfig, dir: &Path) -> Result<()> {
    let grid = config.lab_config().grid()?;
    let trace = bump_profile(grid, config.geometry.omega_radius);
    let ext = extend(&trace, config.operator.order, &config.run.extend_levels)?;
    if ext.wrap_risk() {
        eprintln!(
            "warning: extension heights beyond a quarter period; periodic images \
             start to pollute the slices"
        );
    }
    let path = dir.join("extension.csv");
    export::write_extension(&path, &ext)?;
    wrote(&path);
    Ok(())
}

fn cmd_dn(config: &RunConfig, dir: &Path) -> Result<()> {
    let (grid, omega, _) = config.domains()?;
    let op = config.lab_config().operator(grid, &omega)?;
    let dn = assemble_dn(&op, &omega)?;
    let path = dir.join("dn.csv");
    export::write_dn_matrix(&path, &dn)?;
    wrote(&path);
    Ok(())
}

fn cmd_svd(config: &RunConfig, dir: &Path) -> Result<()> {
    let (grid, omega, window) = config.domains()?;
    let op = config.lab_config().operator(grid, &omega)?;
    let fwd = assemble_forward(&op, &omega, &window, OmegaGeometry::MassWeighted)?;
    let g = gsvd(&fwd)?;
    let sigma = dir.join("sigma.csv");
    let bin = dir.join("vectors.bin");
    let json = dir.join("vectors.json");
    export::write_sigma(&sigma, &g)?;
    export::write_gsvd_vectors(&bin, &json, &fwd, &g)?;
    wrote(&sigma);
    wrote(&bin);
    wrote(&json);
    println!(
        "numerical rank {} of {} computed triples",
        g.numerical_rank(),
        g.len()
    );
    Ok(())
}

fn cmd_control(config: &RunConfig, dir: &Path) -> Result<()> {
    let (grid, omega, window) = config.domains()?;
    let op = config.lab_config().operator(grid, &omega)?;
    let fwd = assemble_forward(&op, &omega, &window, OmegaGeometry::MassWeighted)?;
    let target = bump_profile(grid, config.geometry.omega_radius).restricted_to(&omega)?;
    let tol = &config.tolerances;
    let res: ControlResult = match config.run.control_method.as_str() {
        "truncated" => {
            let g = gsvd(&fwd)?;
            truncated_control(&fwd, &g, &target, tol.truncation_terms)?
        }
        "threshold" => {
            let g = gsvd(&fwd)?;
            threshold_control(&fwd, &g, &target, tol.threshold)?
        }
        "tikhonov" => tikhonov_control(&fwd, &target, tol.tikhonov_alpha)?,
        other => {
            return Err(Error::Config(format!(
                "unknown control method {other:?}; valid methods: truncated, threshold, tikhonov"
            )))
        }
    };
    let csv = dir.join("control.csv");
    let json = dir.join("control.json");
    export::write_control(&csv, &json, &res)?;
    wrote(&csv);
    wrote(&json);
    println!(
        "method {} (parameter {:e}): error {:e}, cost {:e}",
        res.method.tag(),
        res.parameter,
        res.approx_error,
        res.cost
    );
    Ok(())
}

fn cmd_experiment(config: &RunConfig, dir: &Path) -> Result<()> {
    let name = config.run.experiment.as_deref().ok_or_else(|| {
        Error::Config(format!(
            "no experiment named; valid names: {}",
            EXPERIMENT_NAMES.join(", ")
        ))
    })?;
    let lab_config = config.lab_config();
    let record: ExperimentRecord = match name {
        "sv-decay" => lab::sv_decay_experiment(&lab_config)?,
        "cost-curve" => {
            let target = lab::default_cost_target(&lab_config)?;
            lab::cost_curve_experiment(&lab_config, &target, &lab::default_epsilons())?
        }
        "quc" => {
            let samples = lab::default_quc_samples(&lab_config)?;
            lab::quc_experiment(&lab_config, &samples)?
        }
        "dn-modulus" => lab::dn_modulus_experiment(&lab_config, &lab::default_wavenumbers())?,
        "recover" => lab::recover_experiment(&lab_config)?,
        other => {
            return Err(Error::Config(format!(
                "unknown experiment {other:?}; valid names: {}",
                EXPERIMENT_NAMES.join(", ")
            )))
        }
    };
    let (csv, json) = export::write_experiment(dir, &record)?;
    wrote(&csv);
    wrote(&json);
    for a in &record.assertions {
        println!(
            "assertion {}: {} ({})",
            a.name,
            if a.passed { "PASS" } else { "FAIL" },
            a.detail
        );
    }
    Ok(())
}
