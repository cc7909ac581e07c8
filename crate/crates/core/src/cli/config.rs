//! Run configuration.
//!
//! A config file is TOML with top-level keys and one table per module:
//!
//! ```toml
//! subcommand = "sweep"
//! beta = 1.2
//! lambda = 2
//! depth = 2
//! mode = "desk"
//! threads = 1
//!
//! [desk]
//! time_prefactor = 0.25
//!
//! [sweep]
//! kappas = [0.136, 0.049, 0.0245]
//! t_end = 1.0
//! ```
//!
//! Unknown keys are rejected. Every key can be overridden from the
//! environment: `HOMCASCADE_BETA=1.25` sets a top-level key and
//! `HOMCASCADE_SWEEP__T_END=0.5` a key inside a table. Values are parsed as
//! TOML and fall back to plain strings.

use crate::error::{Error, Result};
use crate::params::{DeskOverrides, Mode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const ENV_PREFIX: &str = "HOMCASCADE_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub subcommand: Option<String>,
    pub beta: f64,
    pub lambda: u64,
    pub depth: usize,
    pub mode: Mode,
    /// Upper bound on worker threads used by any stage.
    pub threads: usize,
    /// Run directory; defaults to `runs/<subcommand>`.
    pub out: Option<PathBuf>,
    pub desk: DeskOverrides,
    pub cutoffs: CutoffsConfig,
    pub field: FieldConfig,
    pub flow: FlowConfig,
    pub correctors: CorrectorsConfig,
    pub cascade: CascadeConfig,
    pub solve: SolveConfig,
    pub stepdown: StepdownConfig,
    pub sweep: SweepConfig,
    pub ergodic: ErgodicConfig,
    pub drift: DriftConfig,
    pub euler: EulerConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            subcommand: None,
            beta: 1.2,
            lambda: 2,
            depth: 2,
            mode: Mode::Desk,
            threads: 1,
            out: None,
            desk: DeskOverrides::default(),
            cutoffs: CutoffsConfig::default(),
            field: FieldConfig::default(),
            flow: FlowConfig::default(),
            correctors: CorrectorsConfig::default(),
            cascade: CascadeConfig::default(),
            solve: SolveConfig::default(),
            stepdown: StepdownConfig::default(),
            sweep: SweepConfig::default(),
            ergodic: ErgodicConfig::default(),
            drift: DriftConfig::default(),
            euler: EulerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffsConfig {
    /// Target value of `int zeta^2`.
    pub target: f64,
    pub tol: f64,
    /// Sample count of the family verification.
    pub samples: usize,
}

impl Default for CutoffsConfig {
    fn default() -> Self {
        CutoffsConfig { target: 0.9, tol: 1e-6, samples: 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    /// Snapshot grid; 0 picks the smallest 2^a 3^b size with 8 points per
    /// finest eps.
    pub grid_n: usize,
    pub times: Vec<f64>,
    /// Also write snapshots as CSV grids.
    pub csv: bool,
    /// Hölder samples per depth; 0 skips the estimate.
    pub holder_samples: usize,
    pub holder_seed: u64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig { grid_n: 0, times: vec![0.305], csv: true, holder_samples: 0, holder_seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub grid_n: usize,
    /// Flow level to check; 0 checks every level below the depth.
    pub level: usize,
    /// Window indices; empty means every window meeting [0, 1].
    pub windows: Vec<i64>,
    /// Largest tolerated node composition error.
    pub composition_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { grid_n: 32, level: 0, windows: vec![], composition_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectorsConfig {
    pub m: usize,
    /// Defaults to the permissible midpoint of level m.
    pub kappa: Option<f64>,
    pub samples: usize,
    pub trunc: usize,
    pub q_orders: usize,
    pub quad_tol: f64,
    /// Grid of the corrector residual check; 0 uses 32 points per eps.
    pub residual_grid: usize,
}

impl Default for CorrectorsConfig {
    fn default() -> Self {
        CorrectorsConfig { m: 1, kappa: None, samples: 512, trunc: 4, q_orders: 2, quad_tol: 1e-9, residual_grid: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    /// Starting diffusivities; empty means the permissible midpoint of every
    /// level.
    pub starts: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// `field`, `zero`, `steady` or `alternating`.
    pub velocity: String,
    /// Defaults to the permissible midpoint at the depth for `field`.
    pub kappa: Option<f64>,
    /// Shear amplitude, scale and half period for `steady`/`alternating`.
    pub a: f64,
    pub eps: f64,
    pub tau: f64,
    pub grid_n: usize,
    /// 0 picks `dt` from the CFL number 0.45.
    pub dt: f64,
    pub t_end: f64,
    /// 0 records about 50 outputs.
    pub output_every: usize,
    /// `default` or `mode:k1,k2` for `cos 2 pi (k1 x1 + k2 x2)`.
    pub theta0: String,
    pub cfl: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            velocity: "field".into(),
            kappa: None,
            a: 1.0,
            eps: 0.125,
            tau: 0.1,
            grid_n: 0,
            dt: 0.0,
            t_end: 1.0,
            output_every: 0,
            theta0: "default".into(),
            cfl: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepdownConfig {
    pub grid_n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub outputs: usize,
    /// Factors applied to the fine diffusivity for the mis-set runs.
    pub misset: Vec<f64>,
    pub ansatz: bool,
}

impl Default for StepdownConfig {
    fn default() -> Self {
        StepdownConfig { grid_n: 0, dt: 0.0, t_end: 1.0, outputs: 50, misset: vec![0.25, 4.0], ansatz: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Empty means the level-1 midpoint and the midpoint and lower end of
    /// the permissible interval at the depth.
    pub kappas: Vec<f64>,
    pub grid_n: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Also run the same diffusivities without velocity.
    pub baseline: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { kappas: vec![], grid_n: 0, dt: 0.0, t_end: 1.0, baseline: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicConfig {
    /// `l1`, `l2` or `hminus1`.
    pub regime: String,
    pub n: Vec<u32>,
    /// Also compare against the level-1 flow at `flow_time`.
    pub flow: bool,
    pub flow_time: f64,
    pub flow_n: Vec<u32>,
    pub fit_grid: usize,
    pub fit_order: usize,
}

impl Default for ErgodicConfig {
    fn default() -> Self {
        ErgodicConfig {
            regime: "l1".into(),
            n: (2..=12).collect(),
            flow: false,
            flow_time: 0.01,
            flow_n: (2..=16).step_by(2).collect(),
            fit_grid: 32,
            fit_order: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub a: f64,
    pub eps: f64,
    pub kappa: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub points: usize,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig { a: 1.0, eps: 0.125, kappa: 0.01, v_min: 10.0, v_max: 1000.0, points: 21 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EulerConfig {
    pub lambdas: Vec<u64>,
    /// Sample times over one full cutoff period of the finest level.
    pub samples: usize,
    pub grid_n: usize,
}

impl Default for EulerConfig {
    fn default() -> Self {
        EulerConfig { lambdas: vec![2, 3], samples: 16, grid_n: 0 }
    }
}

impl Config {
    /// Parses TOML text, reporting the line and key of any error.
    pub fn from_toml(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies environment overrides.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Self::with_env(&text, std::env::vars())
    }

    /// Parses `text` after applying overrides from `vars`.
    pub fn with_env(text: &str, vars: impl IntoIterator<Item = (String, String)>) -> Result<Config> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut applied = Vec::new();
        for (k, v) in vars {
            let Some(rest) = k.strip_prefix(ENV_PREFIX) else { continue };
            let path: Vec<String> = rest.split("__").map(|p| p.to_ascii_lowercase()).collect();
            if path.iter().any(|p| p.is_empty()) || path.len() > 2 {
                return Err(Error::Config(format!("malformed override variable {k}")));
            }
            let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or(toml::Value::String(v));
            let slot = if path.len() == 2 {
                let sub = table
                    .entry(path[0].clone())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                match sub {
                    toml::Value::Table(t) => t,
                    _ => return Err(Error::Config(format!("{k}: `{}` is not a table", path[0]))),
                }
            } else {
                &mut table
            };
            slot.insert(path[path.len() - 1].clone(), value);
            applied.push(k);
        }
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("after overrides {applied:?}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks that do not need a schedule.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::Config(format!("key `{key}`: {msg}")));
        if !(self.beta > 1.0 && self.beta < 4.0 / 3.0) {
            return bad("beta", "must lie in (1, 4/3)");
        }
        if self.lambda < 2 {
            return bad("lambda", "must be at least 2");
        }
        if self.threads == 0 {
            return bad("threads", "must be at least 1");
        }
        if let Some(s) = &self.subcommand {
            if !super::SUBCOMMANDS.contains(&s.as_str()) {
                return bad("subcommand", &format!("unknown subcommand `{s}`"));
            }
        }
        if !["field", "zero", "steady", "alternating"].contains(&self.solve.velocity.as_str()) {
            return bad("solve.velocity", "must be field, zero, steady or alternating");
        }
        if !["l1", "l2", "hminus1"].contains(&self.ergodic.regime.as_str()) {
            return bad("ergodic.regime", "must be l1, l2 or hminus1");
        }
        if self.solve.t_end < 0.0 || self.stepdown.t_end <= 0.0 || self.sweep.t_end <= 0.0 {
            return bad("t_end", "must be positive");
        }
        if self.drift.points < 2 || !(self.drift.v_min > 0.0 && self.drift.v_max > self.drift.v_min) {
            return bad("drift", "need at least two drifts with 0 < v_min < v_max");
        }
        if self.sweep.kappas.iter().chain(&self.cascade.starts).any(|k| !(*k > 0.0)) {
            return bad("kappas", "diffusivities must be positive");
        }
        super::commands::parse_theta0(&self.solve.theta0)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let c = Config::from_toml("subcommand = \"schedule\"\nbeta = 1.25\nlambda = 2\ndepth = 2\n").unwrap();
        assert_eq!(c.beta, 1.25);
        assert_eq!(c.sweep, SweepConfig::default());
    }

    #[test]
    fn unknown_key_names_the_line() {
        let e = Config::from_toml("beta = 1.2\n[sweep]\nkapas = [1.0]\n").unwrap_err().to_string();
        assert!(e.contains("kapas") && e.contains("line 3"), "{e}");
    }

    #[test]
    fn env_overrides_reach_tables() {
        let vars = vec![
            ("HOMCASCADE_SWEEP__T_END".to_string(), "0.5".to_string()),
            ("HOMCASCADE_MODE".to_string(), "strict".to_string()),
            ("OTHER".to_string(), "1".to_string()),
        ];
        let c = Config::with_env("beta = 1.2\n", vars).unwrap();
        assert_eq!(c.sweep.t_end, 0.5);
        assert_eq!(c.mode, Mode::Strict);
    }

    #[test]
    fn out_of_range_beta_is_a_config_error() {
        assert!(matches!(Config::from_toml("beta = 1.5\n"), Err(Error::Config(_))));
    }
}
