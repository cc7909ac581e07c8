//! The pipelines behind each subcommand.

use super::config::Config;
use super::output::{csv_bytes, fmt_f64, sha256_hex, RunDir};
use crate::analysis::{
    drift_enhancement, ergodic_decay_check, euler_residual_series, flow_degradation, ErgodicReport, FlowInput, Regime,
};
use crate::cascade::{check_cascade_bounds, permissible_midpoint, run_cascades};
use crate::correctors::{corrector_residual_level, Correctors, Level};
use crate::cutoffs::{calibrate_profiles, verify_family, CutoffFamily};
use crate::error::{Error, Result};
use crate::field::flow::{compute_flow_window, FlowSettings};
use crate::field::{divergence_ratio, holder_estimate, FieldM, FieldOptions};
use crate::params::{build_schedule_with, validate_schedule, CheckStatus, ParameterSchedule};
use crate::solver::{
    anomalous_sweep, solve_many, solve_with, stepdown_from_runs, two_scale_ansatz,
    AlternatingShear, RunDiagnostics, ScalarField, SolveOptions, SteadyShear, VelocityField, ZeroVelocity,
};
use std::f64::consts::PI;

/// Largest `dt sup|b| n` used when the step is chosen automatically.
const AUTO_CFL: f64 = 0.45;

pub struct Ctx<'a> {
    pub cfg: &'a Config,
    pub schedule: ParameterSchedule,
    pub cutoffs: CutoffFamily,
}

fn f(x: f64) -> String {
    fmt_f64(x)
}

/// Smallest `2^a 3^b >= max(lo, 32)`.
pub fn fft_size(lo: f64) -> usize {
    let target = lo.max(32.0).ceil() as usize;
    let mut best = usize::MAX;
    let mut p3 = 1usize;
    while p3 < 2 * target {
        let mut v = p3;
        while v < target {
            v *= 2;
        }
        best = best.min(v);
        p3 *= 3;
    }
    best
}

/// A grid with eight points per `eps`, or `requested` when nonzero.
pub fn resolve_grid(requested: usize, eps: f64) -> usize {
    if requested > 0 {
        requested
    } else {
        fft_size(8.0 / eps - 1e-9)
    }
}

/// A step dividing `t_end` with `dt speed n <= 0.45`, or `requested` when
/// nonzero.
pub fn resolve_dt(requested: f64, speed: f64, n: usize, t_end: f64) -> f64 {
    if requested > 0.0 {
        return requested;
    }
    if speed <= 0.0 {
        return t_end / 100.0;
    }
    t_end / (t_end * speed * n as f64 / AUTO_CFL).ceil().max(1.0)
}

fn output_every(dt: f64, t_end: f64, outputs: usize) -> usize {
    let steps = (t_end / dt).round().max(1.0);
    (steps / outputs.max(1) as f64).round().max(1.0) as usize
}

pub fn parse_theta0(spec: &str) -> Result<Option<(i64, i64)>> {
    if spec == "default" {
        return Ok(None);
    }
    let bad = || Error::Config(format!("key `solve.theta0`: expected `default` or `mode:k1,k2`, got `{spec}`"));
    let rest = spec.strip_prefix("mode:").ok_or_else(bad)?;
    let (a, b) = rest.split_once(',').ok_or_else(bad)?;
    let k = (a.trim().parse::<i64>().map_err(|_| bad())?, b.trim().parse::<i64>().map_err(|_| bad())?);
    if k == (0, 0) {
        return Err(bad());
    }
    Ok(Some(k))
}

fn initial(spec: &str, n: usize) -> Result<ScalarField> {
    match parse_theta0(spec)? {
        None => Ok(ScalarField::default_initial(n)),
        Some((k1, k2)) => ScalarField::from_fn(n, |x| (2.0 * PI * (k1 as f64 * x[0] + k2 as f64 * x[1])).cos()),
    }
}

pub fn schedule_table(s: &ParameterSchedule) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let rows = (0..=s.depth)
        .map(|m| vec![m.to_string(), s.eps_inv(m).to_string(), f(s.a[m]), f(s.tau[m]), f(s.tau_p[m]), f(s.tau_pp[m])])
        .collect();
    (vec!["m", "eps_inv", "a", "tau", "tau_p", "tau_pp"], rows)
}

/// Runs the calibration and schedule stages, then the subcommand.
pub fn pipeline(cmd: &str, cfg: &Config, dir: &mut RunDir) -> Result<()> {
    let cutoffs = dir.stage("calibrate", |_| calibrate_profiles(cfg.cutoffs.target, cfg.cutoffs.tol))?;
    dir.manifest.cutoffs = Some(cutoffs);
    let schedule =
        dir.stage("schedule", |_| build_schedule_with(cfg.beta, cfg.lambda, cfg.depth, cfg.mode, cfg.desk))?;
    let (h, rows) = schedule_table(&schedule);
    dir.manifest.schedule_digest = Some(sha256_hex(&csv_bytes(&h, &rows)?));
    let ctx = Ctx { cfg, schedule, cutoffs };
    dir.stage(cmd, |d| match cmd {
        "calibrate-cutoffs" => calibrate_cmd(&ctx, d),
        "schedule" => schedule_cmd(&ctx, d),
        "build-field" => build_field_cmd(&ctx, d),
        "flow-check" => flow_check_cmd(&ctx, d),
        "correctors" => correctors_cmd(&ctx, d),
        "cascade" => cascade_cmd(&ctx, d),
        "solve" => solve_cmd(&ctx, d),
        "stepdown" => stepdown_cmd(&ctx, d),
        "sweep" => sweep_cmd(&ctx, d),
        "ergodic" => ergodic_cmd(&ctx, d),
        "drift" => drift_cmd(&ctx, d),
        "euler" => euler_cmd(&ctx, d),
        other => Err(Error::Config(format!("unknown subcommand `{other}`"))),
    })
}

fn calibrate_cmd(ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let c = &ctx.cutoffs;
    dir.write_csv(
        "cutoff_params.csv",
        &["sigma", "sharpness", "deriv_cap", "h_l2sq", "zeta_l2sq", "target"],
        &[vec![f(c.sigma), f(c.sharpness), c.deriv_cap.to_string(), f(c.h_l2sq), f(c.zeta_l2sq), f(ctx.cfg.cutoffs.target)]],
    )?;
    let mut rows = Vec::new();
    let mut consts = Vec::new();
    let mut ok = true;
    for m in 1..=ctx.schedule.depth {
        let r = verify_family(c, &ctx.schedule, m, ctx.cfg.cutoffs.samples);
        ok &= r.passed();
        rows.push(vec![
            m.to_string(),
            f(r.partition_zeta),
            f(r.partition_xi),
            f(r.partition_xi_hat),
            f(r.evenness),
            r.support_violations.to_string(),
            f(r.overlap_distance),
            f(r.cross_overlap_max),
            r.passed().to_string(),
        ]);
        for (j, ((z, zh), xh)) in
            r.zeta_deriv_consts.iter().zip(&r.zeta_hat_deriv_consts).zip(&r.xi_hat_deriv_consts).enumerate()
        {
            consts.push(vec![m.to_string(), j.to_string(), f(*z), f(*zh), f(*xh)]);
        }
    }
    dir.write_csv(
        "cutoff_verification.csv",
        &[
            "m",
            "partition_zeta",
            "partition_xi",
            "partition_xi_hat",
            "evenness",
            "support_violations",
            "overlap_distance",
            "cross_overlap_max",
            "passed",
        ],
        &rows,
    )?;
    dir.write_csv("cutoff_derivative_constants.csv", &["m", "order", "zeta", "zeta_hat", "xi_hat"], &consts)?;
    if !ok {
        return Err(Error::Invariant("cutoff family verification failed".into()));
    }
    Ok(())
}

fn schedule_cmd(ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let (h, rows) = schedule_table(&ctx.schedule);
    dir.write_csv("schedule.csv", &h, &rows)?;
    let rep = validate_schedule(&ctx.schedule);
    let rows: Vec<Vec<String>> = rep
        .checks
        .iter()
        .map(|c| {
            let st = match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "fail",
                CheckStatus::Skipped => "skipped",
            };
            vec![c.name.clone(), st.to_string(), f(c.margin)]
        })
        .collect();
    dir.write_csv("schedule_checks.csv", &["check", "status", "margin"], &rows)?;
    if !rep.passed() {
        return Err(Error::Invariant("schedule validation failed".into()));
    }
    Ok(())
}

fn field_at_depth(ctx: &Ctx, depth: usize, grid_n: usize) -> Result<FieldM> {
    FieldM::new(&ctx.schedule, &ctx.cutoffs, depth, FieldOptions { grid_n, ..Default::default() })
}

fn build_field_cmd(ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let depth = ctx.schedule.depth;
    let n = resolve_grid(ctx.cfg.field.grid_n, ctx.schedule.eps[depth]);
    let field = field_at_depth(ctx, depth, n)?;
    let mut summary = Vec::new();
    for (idx, &t) in ctx.cfg.field.times.iter().enumerate() {
        let mut u1 = vec![0.0; n * n];
        let mut u2 = vec![0.0; n * n];
        field.sample(t, n, &mut u1, &mut u2)?;
        let mut bin = Vec::with_capacity(16 * n * n);
        for v in u1.iter().chain(&u2) {
            bin.extend_from_slice(&v.to_le_bytes());
        }
        let stem = format!("field_{idx}");
        dir.write_bytes(&format!("{stem}.bin"), &bin)?;
        let side = format!(
            "grid_n = {n}\ndepth = {depth}\ntime = {}\nlayout = \"b1 then b2, row-major index i*n+j at x = (i/n, j/n), little-endian f64\"\n",
            f(t)
        );
        dir.write_bytes(&format!("{stem}.toml"), side.as_bytes())?;
        if ctx.cfg.field.csv {
            let rows: Vec<Vec<String>> = (0..n * n)
                .map(|p| vec![f(t), f((p / n) as f64 / n as f64), f((p % n) as f64 / n as f64), f(u1[p]), f(u2[p])])
                .collect();
            dir.write_csv(&format!("{stem}.csv"), &["t", "x1", "x2", "b1", "b2"], &rows)?;
        }
        let speed = u1.iter().zip(&u2).map(|(a, b)| (a * a + b * b).sqrt()).fold(0.0, f64::max);
        summary.push(vec![f(t), f(divergence_ratio(&field, t, n)?), f(speed), f(field.speed_bound())]);
    }
    dir.write_csv("field_summary.csv", &["t", "divergence_ratio", "max_speed", "speed_bound"], &summary)?;
    if ctx.cfg.field.holder_samples > 0 {
        let alpha = (ctx.schedule.beta - 1.0) / 2.0;
        let mut rows = Vec::new();
        for d in 1..=depth {
            let fd = field_at_depth(ctx, d, 0)?;
            let h = holder_estimate(&fd, alpha, ctx.cfg.field.holder_samples, ctx.cfg.field.holder_seed)?;
            rows.push(vec![d.to_string(), f(alpha), f(h.spatial), f(h.temporal), h.evaluations.to_string()]);
        }
        dir.write_csv("holder.csv", &["depth", "alpha", "spatial", "temporal", "evaluations"], &rows)?;
    }
    Ok(())
}

fn flow_check_cmd(ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let s = &ctx.schedule;
    if s.depth < 2 {
        return Err(Error::Config("flow-check needs depth >= 2".into()));
    }
    let field = field_at_depth(ctx, s.depth, 0)?;
    let st = FlowSettings { with_forward: true, ..Default::default() };
    let levels: Vec<usize> = if ctx.cfg.flow.level == 0 { (1..s.depth).collect() } else { vec![ctx.cfg.flow.level] };
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for j in levels {
        let windows: Vec<i64> = if ctx.cfg.flow.windows.is_empty() {
            (0..=(1.0 / s.tau_pp[j + 1]).round() as i64).collect()
        } else {
            ctx.cfg.flow.windows.clone()
        };
        for l in windows {
            let r = compute_flow_window(&field, j, l, ctx.cfg.flow.grid_n, &st)?.report;
            worst = worst.max(r.node_composition_error);
            rows.push(vec![
                j.to_string(),
                l.to_string(),
                r.nodes.to_string(),
                r.grid_n.to_string(),
                f(r.max_det_error),
                f(r.composition_error),
                f(r.node_composition_error),
                f(r.bound_ratio),
                f(r.max_displacement),
            ]);
        }
    }
    dir.write_csv(
        "flow_windows.csv",
        &[
            "level",
            "window",
            "nodes",
            "grid_n",
            "max_det_error",
            "composition_error",
            "node_composition_error",
            "bound_ratio",
            "max_displacement",
        ],
        &rows,
    )?;
    if worst > ctx.cfg.flow.composition_tol {
        return Err(Error::Tolerance(format!(
            "node composition error {worst:.3e} exceeds {:.1e}",
            ctx.cfg.flow.composition_tol
        )));
    }
    Ok(())
}

fn correctors_cmd(ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let c = &ctx.cfg.correctors;
    let s = &ctx.schedule;
    if c.m == 0 || c.m > s.depth {
        return Err(Error::Config(format!("key `correctors.m`: must lie in 1..={}", s.depth)));
    }
    let kappa = c.kappa.unwrap_or_else(|| permissible_midpoint(s, c.m));
    let level = Level::from_schedule(s, c.m);
    let cor = Correctors::new(&ctx.cutoffs, level, kappa)?;
    // the decomposition needs eps^2/(kappa tau) <= 1/2; K is left blank otherwise
    let dec = match cor.decomposition(c.trunc.min(s.truncation()).max(1), c.samples, c.q_orders) {
        Ok(d) => Some(d),
        Err(Error::Condition(_)) => None,
        Err(e) => return Err(e),
    };
    let period = 4.0 * s.tau_pp[c.m];
    let rows: Vec<Vec<String>> = (0..c.samples)
        .map(|i| {
            let t = (i as f64 + 0.5) / c.samples as f64 * period;
            let j = cor.flux(t);
            let e = cor.energy(t);
            let k = dec.as_ref().map_or(f64::NAN, |d| d.samples[i].k);
            vec![f(t), f(j[0][0]), f(j[1][1]), f(k), f(k), f(e[0][0]), f(e[1][1])]
        })
        .collect();
    dir.write_csv("correctors.csv", &["t", "J11", "J22", "K11", "K22", "E11", "E22"], &rows)?;
    let kb = cor.kbar(c.quad_tol)?;
    let grid = if c.residual_grid > 0 { c.residual_grid } else { 32 * s.eps_inv(c.m) as usize };
    let residual = corrector_residual_level(&ctx.cutoffs, level, 1, kappa, grid, 9)?;
    dir.write_csv(
        "correctors_summary.csv",
        &[
            "m",
            "kappa",
            "kbar",
            "k11",
            "k22",
            "reference",
            "deviation",
            "envelope",
            "envelope_constant",
            "exprat",
            "ramp_fraction",
            "max_j_minus_jhat",
            "jhat_bound",
            "max_kbar_k_gap",
            "residual",
        ],
        &[vec![
            c.m.to_string(),
            f(kappa),
            f(kb.kbar),
            f(kb.k11),
            f(kb.k22),
            f(kb.reference),
            f(kb.deviation),
            f(kb.envelope),
            f(kb.envelope_ratio()),
            f(kb.exprat),
            f(kb.ramp_fraction),
            f(dec.as_ref().map_or(f64::NAN, |d| d.max_j_minus_jhat)),
            f(dec.as_ref().map_or(f64::NAN, |d| d.jhat_bound)),
            f(dec.as_ref().map_or(f64::NAN, |d| d.max_kbar_k_gap)),
            f(residual),
        ]],
    )?;
    Ok(())
}

fn cascade_cmd(ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let s = &ctx.schedule;
    let starts: Vec<f64> = if ctx.cfg.cascade.starts.is_empty() {
        (1..=s.depth).map(|m| permissible_midpoint(s, m)).collect()
    } else {
        ctx.cfg.cascade.starts.clone()
    };
    let mut results = Vec::new();
    for chunk in starts.chunks(ctx.cfg.threads.max(1)) {
        for r in run_cascades(s, &ctx.cutoffs, chunk) {
            results.push(r?);
        }
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (i, c) in results.iter().enumerate() {
        let b = check_cascade_bounds(c);
        for m in 0..=c.start_m {
            let kr = b.kappa_rows.iter().find(|r| r.m == m);
            let er = b.exprat_rows.iter().find(|r| r.m == m);
            let margin = |r: Option<&crate::cascade::BoundRow>, lower: bool| {
                r.map_or(f(f64::NAN), |r| f(if lower { r.lower_margin } else { r.upper_margin }))
            };
            rows.push(vec![
                i.to_string(),
                f(starts[i]),
                m.to_string(),
                f(c.kappa[m]),
                f(c.kappa_prime[m]),
                f(c.ratios[m]),
                f(c.exprat[m]),
                margin(kr, true),
                margin(kr, false),
                margin(er, true),
                margin(er, false),
            ]);
        }
        summary.push(vec![
            i.to_string(),
            f(starts[i]),
            c.start_m.to_string(),
            f(b.kappa_c),
            f(b.kappa_cc),
            f(b.exprat_c),
            f(b.exprat_cc),
            f(b.identity_c),
            f(b.max_relative_gap),
            b.passed.to_string(),
            c.warnings.join("; "),
        ]);
    }
    dir.write_csv(
        "cascade.csv",
        &[
            "start",
            "kappa_start",
            "m",
            "kappa",
            "kappa_prime",
            "ratio",
            "exprat",
            "kappa_margin_lower",
            "kappa_margin_upper",
            "exprat_margin_lower",
            "exprat_margin_upper",
        ],
        &rows,
    )?;
    dir.write_csv(
        "cascade_summary.csv",
        &[
            "start",
            "kappa_start",
            "start_m",
            "kappa_c",
            "kappa_cc",
            "exprat_c",
            "exprat_cc",
            "identity_c",
            "max_relative_gap",
            "passed",
            "warnings",
        ],
        &summary,
    )?;
    Ok(())
}

fn diagnostics_rows(d: &RunDiagnostics, label: Option<&str>) -> Vec<Vec<String>> {
    (0..d.times.len())
        .map(|i| {
            let mut r = vec![f(d.times[i]), f(d.l2sq[i]), f(d.cum_dissipation[i]), f(d.balance_residual[i])];
            if let Some(l) = label {
                r.insert(0, l.to_string());
            }
            r
        })
        .collect()
}

fn check_balance(diags: &[&RunDiagnostics]) -> Result<()> {
    for d in diags {
        let r = d.max_balance_residual();
        if r > 1e-4 {
            return Err(Error::Invariant(format!("energy balance residual {r:.3e} at kappa = {}", d.kappa)));
        }
    }
    Ok(())
}

fn solve_cmd(ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let c = &ctx.cfg.solve;
    let s = &ctx.schedule;
    let (vel, kappa): (Box<dyn VelocityField>, f64) = match c.velocity.as_str() {
        "field" => {
            let n = resolve_grid(c.grid_n, s.eps[s.depth]);
            (Box::new(field_at_depth(ctx, s.depth, n)?), c.kappa.unwrap_or_else(|| permissible_midpoint(s, s.depth)))
        }
        "zero" => (Box::new(ZeroVelocity), c.kappa.unwrap_or(0.01)),
        "steady" => (Box::new(SteadyShear { a: c.a, eps: c.eps, along_e1: false }), c.kappa.unwrap_or(0.01)),
        _ => (Box::new(AlternatingShear { a: c.a, eps: c.eps, tau: c.tau }), c.kappa.unwrap_or(0.01)),
    };
    let n = resolve_grid(c.grid_n, vel.finest_scale());
    let dt = resolve_dt(c.dt, vel.speed_bound(), n, c.t_end);
    let every = if c.output_every > 0 { c.output_every } else { output_every(dt, c.t_end, 50) };
    let opts = SolveOptions { dt, output_every: every, cfl: c.cfl, ..Default::default() };
    let theta0 = initial(&c.theta0, n)?;
    let (th, d) = solve_with(vel.as_ref(), kappa, &theta0, c.t_end, &opts)?;
    dir.write_csv("diagnostics.csv", &["t", "l2sq", "cum_diss", "residual"], &diagnostics_rows(&d, None))?;
    let vals = th.to_physical();
    let bin: Vec<u8> = vals.iter().flat_map(|v| v.to_le_bytes()).collect();
    dir.write_bytes("final_field.bin", &bin)?;
    let side = format!(
        "grid_n = {n}\ntime = {}\nkappa = {}\ndt = {}\nvelocity = \"{}\"\nlayout = \"theta, row-major index i*n+j at x = (i/n, j/n), little-endian f64\"\n",
        f(th.time),
        f(kappa),
        f(dt),
        vel.describe()
    );
    dir.write_bytes("final_field.toml", side.as_bytes())?;
    check_balance(&[&d])
}

fn stepdown_cmd(ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let c = &ctx.cfg.stepdown;
    let s = &ctx.schedule;
    let m = s.depth;
    let kappa_m = permissible_midpoint(s, m);
    let cascade = run_cascades(s, &ctx.cutoffs, &[kappa_m]).pop().expect("one start")?;
    let n = resolve_grid(c.grid_n, s.eps[m]);
    let fine = field_at_depth(ctx, m, n)?;
    let coarse = field_at_depth(ctx, m - 1, n)?;
    let dt = resolve_dt(c.dt, fine.speed_bound(), n, c.t_end);
    let opts = SolveOptions {
        dt,
        output_every: output_every(dt, c.t_end, c.outputs),
        keep_trajectory: c.ansatz,
        ..Default::default()
    };
    let theta0 = ScalarField::default_initial(n);
    let mut kappas = vec![cascade.kappa[m]];
    kappas.extend(c.misset.iter().map(|x| x * cascade.kappa[m]));
    let fine_runs = solve_many(&fine, &kappas, &theta0, c.t_end, &opts)?;
    let coarse_run = solve_with(&coarse, cascade.kappa[m - 1], &theta0, c.t_end, &opts)?.1;
    let mut rows = Vec::new();
    let mut diag_rows = diagnostics_rows(&coarse_run, Some("coarse"));
    let mut main = None;
    for (i, (_, d)) in fine_runs.into_iter().enumerate() {
        let label = if i == 0 { "matched".to_string() } else { format!("misset_{}", c.misset[i - 1]) };
        diag_rows.extend(diagnostics_rows(&d, Some(&label)));
        let r = stepdown_from_runs(d, coarse_run.clone());
        let rep = &r.report;
        rows.push(vec![
            label,
            f(rep.kappa_fine),
            f(rep.kappa_coarse),
            f(rep.dissipation_fine),
            f(rep.dissipation_coarse),
            f(rep.ratio),
            f((rep.ratio - 1.0).abs()),
            f(rep.balance_fine),
            f(rep.balance_coarse),
        ]);
        if i == 0 {
            main = Some(r);
        }
    }
    dir.write_csv(
        "stepdown.csv",
        &[
            "run",
            "kappa_fine",
            "kappa_coarse",
            "dissipation_fine",
            "dissipation_coarse",
            "ratio",
            "departure",
            "balance_fine",
            "balance_coarse",
        ],
        &rows,
    )?;
    dir.write_csv("stepdown_diagnostics.csv", &["run", "t", "l2sq", "cum_diss", "residual"], &diag_rows)?;
    let main = main.expect("matched run");
    if c.ansatz {
        let cor = Correctors::new(&ctx.cutoffs, Level::from_schedule(s, m), cascade.kappa[m])?;
        let (_, a) = two_scale_ansatz(&fine, m, &cor, &main.fine, &main.coarse)?;
        let rows: Vec<Vec<String>> = (0..a.times.len())
            .map(|i| vec![f(a.times[i]), f(a.l2_error[i]), f(a.l2_gap[i]), f(a.corrector_norm[i])])
            .collect();
        dir.write_csv("ansatz.csv", &["t", "l2_error", "l2_gap", "corrector_norm"], &rows)?;
    }
    check_balance(&[&main.fine, &main.coarse])
}

/// Diffusivities of the default sweep.
pub fn default_sweep_kappas(s: &ParameterSchedule) -> Vec<f64> {
    let mid = permissible_midpoint(s, s.depth);
    let mut v = vec![permissible_midpoint(s, 1), mid, s.permissible_interval(s.depth).0];
    v.dedup();
    v
}

fn sweep_cmd(ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let c = &ctx.cfg.sweep;
    let s = &ctx.schedule;
    let kappas = if c.kappas.is_empty() { default_sweep_kappas(s) } else { c.kappas.clone() };
    let n = resolve_grid(c.grid_n, s.eps[s.depth]);
    let field = field_at_depth(ctx, s.depth, n)?;
    let dt = resolve_dt(c.dt, field.speed_bound(), n, c.t_end);
    let opts = SolveOptions { dt, output_every: output_every(dt, c.t_end, 50), ..Default::default() };
    let theta0 = ScalarField::default_initial(n);
    let rows = anomalous_sweep(&field, s.depth, &kappas, &theta0, c.t_end, &opts);
    let base = if c.baseline { Some(anomalous_sweep(&ZeroVelocity, 0, &kappas, &theta0, c.t_end, &opts)) } else { None };
    let out: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                f(r.kappa),
                f(r.dissipation),
                f(base.as_ref().map_or(f64::NAN, |b| b[i].dissipation)),
                r.depth_used.to_string(),
                f(r.balance_residual),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    dir.write_csv(
        "sweep.csv",
        &["kappa", "dissipation", "baseline_dissipation", "depth_used", "balance_residual", "error"],
        &out,
    )?;
    if let Some(r) = rows.iter().find(|r| r.balance_residual > 1e-4) {
        return Err(Error::Invariant(format!("energy balance residual {:.3e} at kappa = {}", r.balance_residual, r.kappa)));
    }
    Ok(())
}

/// `1/(2 + cos 2 pi x) - 1/sqrt 3`, whose Fourier coefficients are
/// `(-(2 - sqrt 3))^|k| / sqrt 3` off zero.
pub fn analytic_profile(x: f64) -> f64 {
    1.0 / (2.0 + (2.0 * PI * x).cos()) - 1.0 / 3f64.sqrt()
}

/// Analyticity radius of [`analytic_profile`].
pub fn analytic_profile_radius() -> f64 {
    (2.0 + 3f64.sqrt()).ln() / (2.0 * PI)
}

fn ergodic_rows(label: &str, r: &ErgodicReport, rows: &mut Vec<Vec<String>>) {
    for i in 0..r.n_values.len() {
        rows.push(vec![
            label.to_string(),
            r.n_values[i].to_string(),
            f(r.gaps[i]),
            f(r.quad_errors[i]),
            r.quad_points[i].to_string(),
            f(r.fit.rate),
            f(r.fit.prefactor),
            f(r.fit.r_squared),
        ]);
    }
}

/// Plain and with-flow decay of `f = F(x1) + F(x2)` against
/// `g = cos 2 pi x1 + cos 2 pi x2`, with the flow of the level-1 field.
pub fn ergodic_flow_pair(
    schedule: &ParameterSchedule,
    cutoffs: &CutoffFamily,
    t: f64,
    n_list: &[u32],
    fit_grid: usize,
    fit_order: usize,
) -> Result<(ErgodicReport, ErgodicReport)> {
    let field = FieldM::new(schedule, cutoffs, 2.min(schedule.depth).max(1), FieldOptions::default())?;
    if field.depth < 2 {
        return Err(Error::Config("the with-flow check needs depth >= 2".into()));
    }
    let inv = field.inv_flow(1, 0, t)?;
    let map = |x: [f64; 2]| field.apply_inv(&inv, t, x).map(|m| m.y).unwrap_or([f64::NAN; 2]);
    let fx = |x: [f64; 2]| analytic_profile(x[0]) + analytic_profile(x[1]);
    let gx = |x: [f64; 2]| (2.0 * PI * x[0]).cos() + (2.0 * PI * x[1]).cos();
    let plain = ergodic_decay_check(&fx, &gx, n_list, Regime::L1, None)?;
    let fl = FlowInput { inverse: &map, r: analytic_profile_radius(), fit_grid, fit_order };
    let flowed = ergodic_decay_check(&fx, &gx, n_list, Regime::WithFlow, Some(&fl))?;
    Ok((plain, flowed))
}

fn ergodic_cmd(ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let c = &ctx.cfg.ergodic;
    let regime = match c.regime.as_str() {
        "l1" => Regime::L1,
        "l2" => Regime::L2,
        _ => Regime::Hminus1,
    };
    let fx = |x: [f64; 2]| analytic_profile(x[0]);
    let gx = |x: [f64; 2]| (2.0 * PI * x[0]).cos();
    let r = ergodic_decay_check(&fx, &gx, &c.n, regime, None)?;
    let mut rows = Vec::new();
    ergodic_rows(&c.regime, &r, &mut rows);
    let mut warnings: Vec<String> = r.warnings.clone();
    if c.flow {
        let (plain, flowed) =
            ergodic_flow_pair(&ctx.schedule, &ctx.cutoffs, c.flow_time, &c.flow_n, c.fit_grid, c.fit_order)?;
        ergodic_rows("plain2d", &plain, &mut rows);
        ergodic_rows("withflow", &flowed, &mut rows);
        warnings.extend(flowed.warnings.iter().cloned());
        let d = flow_degradation(&plain, &flowed)?;
        let an = flowed.flow.as_ref().expect("with-flow report carries constants");
        dir.write_csv(
            "ergodic_flow.csv",
            &["plain_rate", "flow_rate", "fitted_factor", "predicted_factor", "c_x", "radius", "n_min", "passed"],
            &[vec![
                f(d.plain_rate),
                f(d.flow_rate),
                f(d.fitted_factor),
                f(d.predicted_factor),
                f(an.c_x),
                f(an.radius),
                f(an.n_min),
                d.passed.to_string(),
            ]],
        )?;
    }
    dir.write_csv(
        "ergodic.csv",
        &["series", "N", "gap", "quad_error", "quad_points", "fit_rate", "fit_prefactor", "fit_r2"],
        &rows,
    )?;
    let w: Vec<Vec<String>> = warnings.into_iter().map(|w| vec![w]).collect();
    dir.write_csv("ergodic_warnings.csv", &["warning"], &w)?;
    Ok(())
}

/// `points` drifts spaced evenly in `log v` over `[v_min, v_max]`.
pub fn log_spaced(v_min: f64, v_max: f64, points: usize) -> Vec<f64> {
    let (a, b) = (v_min.ln(), v_max.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect()
}

fn drift_cmd(ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let c = &ctx.cfg.drift;
    let t = drift_enhancement(c.a, c.eps, c.kappa, &log_spaced(c.v_min, c.v_max, c.points))?;
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| vec![f(r.v), f(r.enhancement), f(r.closed_form), f(r.relative_error), f(t.slope), f(t.r_squared)])
        .collect();
    dir.write_csv("drift.csv", &["v", "enhancement", "closed_form", "relative_error", "slope", "r_squared"], &rows)?;
    Ok(())
}

fn euler_cmd(ctx: &Ctx, dir: &mut RunDir) -> Result<()> {
    let cfg = ctx.cfg;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &lambda in &cfg.euler.lambdas {
        let s = build_schedule_with(cfg.beta, lambda, cfg.depth, cfg.mode, cfg.desk)?;
        let d = s.depth;
        let n = resolve_grid(cfg.euler.grid_n, s.eps[d]);
        let field = FieldM::new(&s, &ctx.cutoffs, d, FieldOptions { grid_n: n, ..Default::default() })?;
        let period = 4.0 * s.tau_pp[d];
        // a quarter-sample offset keeps the equispaced times off the seams
        let t0 = 0.25 * period / cfg.euler.samples.max(1) as f64;
        let ser = euler_residual_series(&field, t0, t0 + period, cfg.euler.samples, n, 1e-3 * s.tau[d])?;
        for (t, r) in ser.times.iter().zip(&ser.residuals) {
            rows.push(vec![lambda.to_string(), f(*t), f(*r)]);
        }
        summary.push(vec![
            lambda.to_string(),
            n.to_string(),
            f(period),
            f(ser.mean),
            f(ser.max),
            ser.skipped.to_string(),
        ]);
    }
    dir.write_csv("euler.csv", &["lambda", "t", "residual"], &rows)?;
    dir.write_csv("euler_summary.csv", &["lambda", "grid_n", "period", "mean", "max", "skipped"], &summary)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_sizes_are_smooth_and_minimal() {
        assert_eq!(fft_size(184.0), 192);
        assert_eq!(fft_size(64.0), 64);
        assert_eq!(fft_size(65.0), 72);
        assert_eq!(fft_size(3.0), 32);
    }

    #[test]
    fn auto_step_divides_the_interval() {
        let dt = resolve_dt(0.0, 10.0, 64, 1.0);
        assert!(dt * 10.0 * 64.0 <= AUTO_CFL + 1e-12);
        assert!(((1.0 / dt) - (1.0 / dt).round()).abs() < 1e-9);
    }

    #[test]
    fn theta0_grammar() {
        assert_eq!(parse_theta0("default").unwrap(), None);
        assert_eq!(parse_theta0("mode:1, 2").unwrap(), Some((1, 2)));
        assert!(parse_theta0("mode:0,0").is_err());
        assert!(parse_theta0("sine").is_err());
    }
}
