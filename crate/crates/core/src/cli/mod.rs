//! Experiment runner: configuration, orchestration, artifacts and reports.

pub mod commands;
pub mod config;
pub mod output;
pub mod report;

use crate::error::{Error, Result};
use crate::params::Mode;
use clap::{Parser, Subcommand};
use config::Config;
use output::{RunDir, RunManifest};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

pub const SUBCOMMANDS: [&str; 13] = [
    "calibrate-cutoffs",
    "schedule",
    "build-field",
    "flow-check",
    "correctors",
    "cascade",
    "solve",
    "stepdown",
    "sweep",
    "ergodic",
    "drift",
    "euler",
    "report",
];

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Exit status for a failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::NotPermissible { .. } => EXIT_CONFIG,
        Error::Invariant(_)
        | Error::Tolerance(_)
        | Error::FitQuality(_)
        | Error::Condition(_)
        | Error::Seam { .. }
        | Error::Infeasible(_) => EXIT_INVARIANT,
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Parser, Debug)]
#[command(name = "homcascade", version, about = "Fractal shear flows, renormalized diffusivities and desk-scale homogenization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Thread budget.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Schedule mode.
    #[arg(long, global = true, value_parser = ["strict", "desk"])]
    pub mode: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Calibrate the time cutoffs and verify the family.
    CalibrateCutoffs,
    /// Emit the parameter schedule and its checks.
    Schedule,
    /// Sample the velocity field on a grid.
    BuildField,
    /// Check the cached flow windows.
    FlowCheck,
    /// Corrector fluxes, energies and the averaged diffusivity.
    Correctors,
    /// Renormalized diffusivity cascades.
    Cascade,
    /// One advection-diffusion run.
    Solve,
    /// Step-down ratio and two-scale ansatz.
    Stepdown,
    /// Dissipation over several diffusivities.
    Sweep,
    /// Ergodic decay of fast oscillations.
    Ergodic,
    /// Enhancement under a mean drift.
    Drift,
    /// Almost-Euler residual of the field.
    Euler,
    /// Regenerate the summary and plots of a finished run.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CalibrateCutoffs => "calibrate-cutoffs",
            Command::Schedule => "schedule",
            Command::BuildField => "build-field",
            Command::FlowCheck => "flow-check",
            Command::Correctors => "correctors",
            Command::Cascade => "cascade",
            Command::Solve => "solve",
            Command::Stepdown => "stepdown",
            Command::Sweep => "sweep",
            Command::Ergodic => "ergodic",
            Command::Drift => "drift",
            Command::Euler => "euler",
            Command::Report => "report",
        }
    }
}

fn default_out(cmd: &str) -> PathBuf {
    Path::new("runs").join(cmd)
}

/// Runs `cmd` into `out`. On failure the manifest is still written, marked
/// failed, before the error is returned.
pub fn run_with(cmd: &str, cfg: &Config, out: &Path) -> Result<RunManifest> {
    if cmd == "report" {
        return rerun_report(out);
    }
    let mut dir = RunDir::create(out, RunManifest::new(cmd, cfg))?;
    let res = commands::pipeline(cmd, cfg, &mut dir);
    dir.manifest.status = match &res {
        Ok(()) => "ok".into(),
        Err(e) if exit_code(e) == EXIT_INVARIANT => "invariant-failed".into(),
        Err(_) => "failed".into(),
    };
    dir.manifest.error = res.as_ref().err().map(|e| e.to_string());
    let started = std::time::Instant::now();
    let report = report::emit_report(&dir.manifest, &dir.root);
    dir.manifest.stages.push(output::StageTiming { name: "report".into(), seconds: started.elapsed().as_secs_f64() });
    match report {
        Ok(arts) => {
            for a in arts {
                dir.manifest.artifacts.retain(|x| x.path != a.path);
                dir.manifest.artifacts.push(a);
            }
        }
        Err(e) => eprintln!("report skipped: {e}"),
    }
    dir.finish()?;
    res.map(|_| dir.manifest)
}

/// Regenerates the report of an existing run directory. A directory without
/// a manifest yields a report of empty sections.
pub fn rerun_report(out: &Path) -> Result<RunManifest> {
    let manifest = match RunManifest::read(out) {
        Ok(m) => m,
        Err(_) if !out.join(output::MANIFEST).exists() => {
            let mut m = RunManifest::new("report", &Config::default());
            m.status = "empty".into();
            m
        }
        Err(e) => return Err(e),
    };
    let mut dir = RunDir::create(out, manifest)?;
    let arts = report::emit_report(&dir.manifest, &dir.root)?;
    for a in arts {
        dir.manifest.artifacts.retain(|x| x.path != a.path);
        dir.manifest.artifacts.push(a);
    }
    dir.finish()?;
    Ok(dir.manifest)
}

/// Loads a config file and runs the subcommand it names.
pub fn run_experiment(config_path: &Path) -> Result<RunManifest> {
    let cfg = Config::load(config_path)?;
    let cmd = cfg
        .subcommand
        .clone()
        .ok_or_else(|| Error::Config(format!("{}: key `subcommand` is required", config_path.display())))?;
    let out = cfg.out.clone().unwrap_or_else(|| default_out(&cmd));
    run_with(&cmd, &cfg, &out)
}

fn resolve(cli: &Cli) -> Result<(Config, PathBuf)> {
    let cmd = cli.command.name();
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::with_env("", std::env::vars())?,
    };
    if let Some(s) = &cfg.subcommand {
        if s != cmd {
            return Err(Error::Config(format!("config names subcommand `{s}` but `{cmd}` was requested")));
        }
    }
    if let Some(m) = &cli.mode {
        cfg.mode = m.parse::<Mode>()?;
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        cfg.threads = t;
    }
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| default_out(cmd));
    cfg.out = Some(out.clone());
    Ok((cfg, out))
}

/// Entry point of the binary; returns the process exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let res = resolve(&cli).and_then(|(cfg, out)| run_with(cli.command.name(), &cfg, &out));
    match res {
        Ok(m) => {
            println!("{}: {} artifacts", m.subcommand, m.artifacts.len());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_match_the_list() {
        use clap::CommandFactory;
        let names: Vec<String> = Cli::command().get_subcommands().map(|s| s.get_name().to_string()).collect();
        assert_eq!(names, SUBCOMMANDS.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    }

    #[test]
    fn exit_codes_by_failure_kind() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Invariant("x".into())), EXIT_INVARIANT);
        assert_eq!(exit_code(&Error::Cfl { dt: 1.0, limit: 0.5 }), EXIT_NUMERICAL);
    }
}
