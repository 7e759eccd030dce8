//! Run configuration for the command-line driver: a key-grouped TOML file
//! covering grid, geometry, operator order, potential, dispatch choices,
//! and numeric knobs.
//!
//! Every run writes its fully resolved configuration back into the output
//! directory as `config.toml`, and feeding that snapshot back in reproduces
//! the run's CSV artifacts byte for byte. Command-line flags override file
//! values field by field, so the snapshot is always the merged result, not
//! the file as given.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, IndexSet};
use crate::lab::{LabConfig, PotentialKind};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "FRACLAB_OUT";

/// Periodic grid parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub n: usize,
    pub half_period: f64,
}

impl Default for GridSection {
    fn default() -> GridSection {
        GridSection {
            dim: 1,
            n: 256,
            half_period: 8.0,
        }
    }
}

/// Interior region and observation windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub omega_radius: f64,
    pub gap: f64,
    pub window_radius: f64,
    /// Mirror a second window to the left of the interior region.
    pub two_windows: bool,
}

impl Default for GeometrySection {
    fn default() -> GeometrySection {
        GeometrySection {
            omega_radius: 1.0,
            gap: 1.0,
            window_radius: 1.0,
            two_windows: false,
        }
    }
}

/// Fractional order of the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorSection {
    pub order: f64,
}

impl Default for OperatorSection {
    fn default() -> OperatorSection {
        OperatorSection { order: 0.5 }
    }
}

/// What to run and where to put it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Experiment name for the `experiment` subcommand.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    /// Output root; the flag, then this field, then the environment
    /// variable, then `runs` are consulted in that order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub seed: u64,
    /// `dirichlet` (exterior data) or `source` (interior load).
    pub solve_mode: String,
    /// Heights for the `extend` subcommand, strictly ascending.
    pub extend_levels: Vec<f64>,
    /// `truncated`, `threshold`, or `tikhonov`.
    pub control_method: String,
}

impl Default for RunSection {
    fn default() -> RunSection {
        RunSection {
            experiment: None,
            output: None,
            seed: 7,
            solve_mode: "dirichlet".into(),
            extend_levels: vec![0.25, 0.5, 1.0, 2.0],
            control_method: "tikhonov".into(),
        }
    }
}

/// Numeric knobs for the control methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSection {
    pub truncation_terms: usize,
    pub threshold: f64,
    pub tikhonov_alpha: f64,
}

impl Default for ToleranceSection {
    fn default() -> ToleranceSection {
        ToleranceSection {
            truncation_terms: 12,
            threshold: 1e-6,
            tikhonov_alpha: 1e-6,
        }
    }
}

/// Complete, serializable description of one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub geometry: GeometrySection,
    pub operator: OperatorSection,
    pub potential: PotentialKind,
    pub run: RunSection,
    pub tolerances: ToleranceSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
            .map_err(|e| Error::Config(format!("in {}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Numerical(format!("config encoding failed: {e}")))
    }

    /// The experiment-facing subset.
    pub fn lab_config(&self) -> LabConfig {
        LabConfig {
            dim: self.grid.dim,
            n: self.grid.n,
            half_period: self.grid.half_period,
            order: self.operator.order,
            omega_radius: self.geometry.omega_radius,
            gap: self.geometry.gap,
            window_radius: self.geometry.window_radius,
            potential: self.potential.clone(),
            seed: self.run.seed,
        }
    }

    /// Checks the structural preconditions shared by every subcommand:
    /// a valid order, a constructible grid, and non-overlapping domains.
    pub fn validate(&self) -> Result<()> {
        if !(self.operator.order > 0.0 && self.operator.order < 1.0) {
            return Err(Error::Config(format!(
                "order must lie strictly between 0 and 1, got {}",
                self.operator.order
            )));
        }
        let lab = self.lab_config();
        if self.geometry.two_windows {
            lab.two_windows()?;
        } else {
            lab.single()?;
        }
        Ok(())
    }

    /// Interior region plus the window the single-window commands use.
    pub fn domains(&self) -> Result<(Grid, IndexSet, IndexSet)> {
        self.lab_config().single()
    }

    /// Output root after the fallback chain: explicit field, environment
    /// variable, then `runs` in the working directory.
    pub fn output_root(&self) -> PathBuf {
        if let Some(dir) = &self.run.output {
            return dir.clone();
        }
        if let Some(dir) = std::env::var_os(OUTPUT_ENV) {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        PathBuf::from("runs")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = RunConfig::default();
        let text = config.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, config);
        assert!(text.contains("[grid]"));
        assert!(text.contains("[potential]"));
        assert!(text.contains("kind = \"zero\""));
    }

    #[test]
    fn key_grouped_file_with_overrides_parses() {
        let text = r#"
            [grid]
            n = 128

            [geometry]
            gap = 0.5
            two_windows = true

            [operator]
            order = 0.75

            [potential]
            kind = "oscillatory"
            amplitude = 0.2
            wavenumber = 6.0

            [run]
            experiment = "quc"
            seed = 11
        "#;
        let config = RunConfig::from_toml(text).unwrap();
        assert_eq!(config.grid.n, 128);
        assert_eq!(config.grid.dim, 1);
        assert_eq!(config.geometry.gap, 0.5);
        assert!(config.geometry.two_windows);
        assert_eq!(config.operator.order, 0.75);
        assert_eq!(
            config.potential,
            PotentialKind::Oscillatory {
                amplitude: 0.2,
                wavenumber: 6.0
            }
        );
        assert_eq!(config.run.experiment.as_deref(), Some("quc"));
        assert_eq!(config.run.seed, 11);
        assert_eq!(config.tolerances, ToleranceSection::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("[grid]\nresolution = 4\n").unwrap_err();
        match err {
            Error::Config(msg) => assert!(msg.contains("resolution"), "{msg}"),
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn validate_catches_overlap_and_bad_order() {
        let mut config = RunConfig::default();
        config.geometry.gap = 0.0;
        let err = config.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);

        let mut config = RunConfig::default();
        config.operator.order = 1.5;
        assert!(config.validate().is_err());
    }

    #[test]
    fn file_potential_round_trips() {
        let config = RunConfig {
            potential: PotentialKind::File {
                path: "q.csv".into(),
            },
            ..RunConfig::default()
        };
        let text = config.to_toml().unwrap();
        assert!(text.contains("kind = \"file\""));
        assert_eq!(RunConfig::from_toml(&text).unwrap(), config);
    }

    #[test]
    fn output_root_fallback_chain() {
        let mut config = RunConfig::default();
        assert_eq!(config.output_root(), PathBuf::from("runs"));
        config.run.output = Some(PathBuf::from("elsewhere"));
        assert_eq!(config.output_root(), PathBuf::from("elsewhere"));
    }
}
