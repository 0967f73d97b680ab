//! Run manifests: TOML files naming the command, shape, model and settings.
//! Unknown keys are rejected.

use convexppp::geometry::ShapeConfig;
use convexppp::testing::{Divisor, EnvelopeKind, ExperimentSpec, ModelSpec, PowerManifest, TestConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Curves,
    Test,
    Power,
    ShapeInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ShapeConfig>,
    /// Generator for `simulate`, and for `curves`/`test` when no pattern
    /// file is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    /// Pattern CSV, relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<PathBuf>,
    /// Known constant intensity on `D` for the K̂, F̂, Ĥ and Ĵ curves;
    /// `N/λ_D(D)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default = "default_step")]
    pub r_step: f64,
    /// Size of the Fibonacci reference grid for F̂.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_nsim")]
    pub nsim: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub envelope: EnvelopeKind,
    #[serde(default)]
    pub keep_null_curves: bool,
    /// `variance` (default) or `std-dev`.
    #[serde(default)]
    pub divisor: Divisor,
    /// Observed patterns per power experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub experiments: Vec<ExperimentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_step() -> f64 {
    0.02
}
fn default_grid_points() -> usize {
    1000
}
fn default_nsim() -> usize {
    199
}
fn default_alpha() -> f64 {
    0.05
}

impl Default for RunManifest {
    fn default() -> Self {
        toml::from_str("").expect("empty manifest parses")
    }
}

impl RunManifest {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("manifest: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut m = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(p) = &m.pattern {
            if p.is_relative() {
                m.pattern = Some(base.join(p));
            }
        }
        Ok(m)
    }

    /// Hex SHA-256 of the manifest in canonical JSON form.
    pub fn hash(&self) -> String {
        convexppp::io::sha256_hex(serde_json::to_string(self).expect("manifest serializes").as_bytes())
    }

    pub fn test_config(&self) -> TestConfig {
        TestConfig {
            nsim: self.nsim,
            alpha: self.alpha,
            envelope: self.envelope,
            r_step: self.r_step,
            keep_null_curves: self.keep_null_curves,
            divisor: self.divisor,
        }
    }

    pub fn power_manifest(&self) -> Result<PowerManifest, String> {
        let trials = self.trials.ok_or("power needs `trials`")?;
        if self.experiments.is_empty() {
            return Err("power needs at least one [[experiments]] entry".into());
        }
        Ok(PowerManifest {
            trials,
            nsim: self.nsim,
            alpha: self.alpha,
            seed: self.seed,
            r_step: self.r_step,
            divisor: self.divisor,
            experiments: self.experiments.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_unknown_keys() {
        let m = RunManifest::default();
        assert_eq!((m.nsim, m.alpha, m.r_step), (199, 0.05, 0.02));
        assert!(RunManifest::parse("nsims = 3").is_err());
        assert!(RunManifest::parse("[shape]\nkind = \"sphere\"\nradius = 2").is_err());
    }

    #[test]
    fn full_manifest_parses() {
        let m = RunManifest::parse(
            r#"
command = "power"
seed = 7
trials = 10
nsim = 19

[[experiments]]
id = "1a"
shape = { prolate_a = 1.0 }
model = { type = "csr", rho = 10.0 }

[[experiments]]
id = "3a"
shape = { kind = "ellipsoid", a = 1.0, b = 1.0, c = 2.0 }
model = { type = "thomas", mu = 150.0, offspring = 5.0, kappa = 0.5, bridge = "bandwidth" }
"#,
        )
        .unwrap();
        assert_eq!(m.command, Some(Command::Power));
        assert_eq!(m.power_manifest().unwrap().experiments.len(), 2);
        assert_ne!(m.hash(), RunManifest::default().hash());
    }
}
