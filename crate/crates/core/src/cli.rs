//! Command-line experiment runner: config loading, the pipeline stages, and
//! CSV/JSON artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, SecondsFormat, Utc};

use clap::{Parser, ValueEnum};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::coupling::{sample_endpoints, simulate, TrajectoryStats};
use crate::divergence::{divergence_report, harnack_check, kl_girsanov_estimate, HarnackReport};
use crate::error::Error;
use crate::potential::verify_certificate;
use crate::schedule::ScheduleParams;
use crate::verify::verify_schedule;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Number of standard errors allowed above a closed-form bound.
pub const BOUND_SIGMAS: f64 = 3.0;
/// Highest moment order checked by `schedule-verify`.
pub const VERIFY_K_MAX: u32 = 5;
pub const WORKERS_ENV: &str = "LANGEVIN_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    Constants,
    ScheduleVerify,
    PotentialCheck,
    Simulate,
    Bounds,
    Renyi,
    Harnack,
    All,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Constants => "constants",
            Subcommand::ScheduleVerify => "schedule-verify",
            Subcommand::PotentialCheck => "potential-check",
            Subcommand::Simulate => "simulate",
            Subcommand::Bounds => "bounds",
            Subcommand::Renyi => "renyi",
            Subcommand::Harnack => "harnack",
            Subcommand::All => "all",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "langevin-coupling",
    version,
    about = "Reflection-coupling and shifted-Girsanov experiments for overdamped Langevin dynamics"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub subcommand: Subcommand,
    /// JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config entry by dotted path, e.g. `--set potential.certificate.R=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads for path simulation.
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Use this label instead of a timestamp and drop runtime fields.
    #[arg(long)]
    pub fixed_label: Option<String>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Outcome of one stage: artifacts are already written; `pass` drives exit 3.
struct Stage {
    pass: bool,
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
    label: String,
    fixed: bool,
    started: Instant,
    timestamp: String,
}

impl Ctx {
    fn write(&self, sub: &str, csv: &str, body: Value) -> Result<(), Error> {
        let mut doc = serde_json::Map::new();
        doc.insert("subcommand".into(), json!(sub));
        doc.insert("label".into(), json!(self.label));
        doc.insert("config".into(), self.cfg.echo());
        if let Value::Object(m) = body {
            doc.extend(m);
        }
        let (ts, rt) = if self.fixed {
            (Value::Null, Value::Null)
        } else {
            (json!(self.timestamp), json!(self.started.elapsed().as_secs_f64()))
        };
        doc.insert("timestamp".into(), ts);
        doc.insert("runtime_s".into(), rt);
        let stem = format!("{sub}-{}", self.label);
        std::fs::write(self.out.join(format!("{stem}.csv")), csv)?;
        let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
        text.push('\n');
        std::fs::write(self.out.join(format!("{stem}.json")), text)?;
        Ok(())
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    let label = cli.fixed_label.clone().unwrap_or_else(|| compact_utc(Utc::now()));
    let sub = cli.subcommand.name();
    let mut cfg = match ExperimentConfig::load(&cli.config, &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            let (dir, raw) = raw_merged(cli);
            let out = cli.out.clone().unwrap_or(dir);
            return report_error(&out, sub, &label, raw, &e);
        }
    };
    if let Some(o) = &cli.out {
        cfg.out_dir = o.to_string_lossy().into_owned();
    }
    let out = PathBuf::from(&cfg.out_dir);
    if let Err(e) = std::fs::create_dir_all(&out) {
        return report_error(&out, sub, &label, Some(cfg.echo()), &Error::Io(e));
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => return report_error(&out, sub, &label, Some(cfg.echo()), &Error::Config(format!("worker pool: {e}"))),
    };
    let ctx = Ctx {
        cfg,
        out: out.clone(),
        label: label.clone(),
        fixed: cli.fixed_label.is_some(),
        started: Instant::now(),
        timestamp: rfc3339_utc(Utc::now()),
    };
    match pool.install(|| dispatch(&ctx, cli.subcommand)) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => report_error(&out, sub, &label, Some(ctx.cfg.echo()), &e),
    }
}

/// Best-effort merged JSON and `out_dir` for error reports when the config
/// does not validate.
fn raw_merged(cli: &Cli) -> (PathBuf, Option<Value>) {
    let mut v: Value = std::fs::read_to_string(&cli.config)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or(Value::Null);
    for o in &cli.overrides {
        let _ = crate::config::apply_override(&mut v, o);
    }
    let dir = PathBuf::from(v.get("out_dir").and_then(Value::as_str).unwrap_or("out"));
    (dir, (!v.is_null()).then_some(v))
}

fn report_error(out: &Path, sub: &str, label: &str, config: Option<Value>, e: &Error) -> i32 {
    let code = if e.is_validation() { EXIT_VALIDATION } else { EXIT_INTERNAL };
    let doc = json!({
        "subcommand": sub,
        "exit_code": code,
        "kind": if code == EXIT_VALIDATION { "validation" } else { "internal" },
        "message": e.to_string(),
        "config": config,
    });
    eprintln!("error: {e}");
    let written = std::fs::create_dir_all(out).and_then(|_| {
        std::fs::write(
            out.join(format!("error-{sub}-{label}.json")),
            serde_json::to_string_pretty(&doc).unwrap_or_default() + "\n",
        )
    });
    if let Err(w) = written {
        eprintln!("could not write error report to {}: {w}", out.display());
    }
    code
}

fn dispatch(ctx: &Ctx, sub: Subcommand) -> Result<bool, Error> {
    let stage = match sub {
        Subcommand::Constants => constants(ctx)?,
        Subcommand::ScheduleVerify => schedule_verify(ctx)?,
        Subcommand::PotentialCheck => potential_check(ctx)?,
        Subcommand::Simulate => simulate_stage(ctx)?.0,
        Subcommand::Bounds => bounds(ctx, None)?,
        Subcommand::Renyi => renyi(ctx, None)?,
        Subcommand::Harnack => harnack(ctx)?,
        Subcommand::All => {
            let mut pass = constants(ctx)?.pass;
            pass &= schedule_verify(ctx)?.pass;
            pass &= potential_check(ctx)?.pass;
            let (s, stats) = simulate_stage(ctx)?;
            pass &= s.pass;
            pass &= bounds(ctx, Some(&stats))?.pass;
            pass &= renyi(ctx, Some(&stats))?.pass;
            if ctx.cfg.harnack_check {
                pass &= harnack(ctx)?.pass;
            }
            Stage { pass }
        }
    };
    Ok(stage.pass)
}

/// Shortest round-trip decimal, switching to exponent form at extreme magnitudes.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn fmt_q(q: f64) -> String {
    format!("{q}")
}

fn constants(ctx: &Ctx) -> Result<Stage, Error> {
    let sp = ctx.cfg.schedule()?;
    let report = sp.bound_report(&ctx.cfg.q_list)?;
    let mut header = vec![
        "T".to_string(),
        "nu".into(),
        "c0".into(),
        "c1".into(),
        "m_xx".into(),
        "kl_bound".into(),
    ];
    let mut row = vec![sp.horizon, sp.nu, sp.c0, sp.c1, sp.m_xx, report.kl_bound];
    for &q in &ctx.cfg.q_list {
        header.push(format!("renyi_q{}", fmt_q(q)));
        row.push(report.renyi_bounds[&fmt_q(q)]);
    }
    header.extend(["alpha".into(), "beta".into(), "j_value".into()]);
    row.extend([report.alpha, report.beta, report.j_value]);
    let csv = csv_table(&header, &[row]);
    ctx.write(
        "constants",
        &csv,
        json!({
            "constants": {
                "T": sp.horizon, "nu": sp.nu, "c0": sp.c0, "c1": sp.c1, "m_xx": sp.m_xx, "dist": sp.dist,
                "kl_bound": report.kl_bound, "renyi_bounds": report.renyi_bounds,
                "alpha": report.alpha, "beta": report.beta, "j_value": report.j_value, "c_of_T": report.c_of_t,
            }
        }),
    )?;
    Ok(Stage { pass: true })
}

fn schedule_verify(ctx: &Ctx) -> Result<Stage, Error> {
    let sp = ctx.cfg.schedule()?;
    let v = verify_schedule(&sp, VERIFY_K_MAX);
    let mut csv = String::from("k,closed_form,quadrature,rel_error,alpha_beta_bound,below_bound\n");
    for m in &v.moments {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            m.k,
            fmt_num(m.closed_form),
            fmt_num(m.quadrature),
            fmt_num(m.rel_error),
            fmt_num(m.alpha_beta_bound),
            m.below_bound
        );
    }
    ctx.write("schedule-verify", &csv, json!({ "verification": v, "pass": v.pass }))?;
    Ok(Stage { pass: v.pass })
}

fn potential_check(ctx: &Ctx) -> Result<Stage, Error> {
    let p = ctx.cfg.potential_spec()?;
    let r = verify_certificate(
        &p,
        &ctx.cfg.potential.certificate,
        ctx.cfg.certificate_pairs,
        ctx.cfg.check_radius(),
        ctx.cfg.seed,
    )?;
    let csv = format!(
        "pass,worst_near_margin,worst_far_margin,n_pairs,n_stress_pairs,seed\n{},{},{},{},{},{}\n",
        r.pass,
        opt(r.worst_near_margin),
        opt(r.worst_far_margin),
        r.n_pairs,
        r.n_stress_pairs,
        r.seed
    );
    ctx.write("potential-check", &csv, json!({ "certificate_report": r, "pass": r.pass }))?;
    Ok(Stage { pass: r.pass })
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn run_simulation(ctx: &Ctx) -> Result<(TrajectoryStats, ScheduleParams), Error> {
    let sc = ctx.cfg.sim_config()?;
    let sp = ctx.cfg.schedule()?;
    Ok((simulate(&sc, &sp, ctx.cfg.grid_stride)?, sp))
}

fn simulate_stage(ctx: &Ctx) -> Result<(Stage, TrajectoryStats), Error> {
    let (stats, sp) = run_simulation(ctx)?;
    let kl = kl_girsanov_estimate(&stats, &sp)?;
    let mut csv = String::from("t,mean_abs_z,se_abs_z,mean_sqrt_f_z,se_sqrt_f_z,mean_f_z,envelope\n");
    for i in 0..stats.grid.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            fmt_num(stats.grid[i]),
            fmt_num(stats.mean_abs_z[i]),
            fmt_num(stats.se_abs_z[i]),
            fmt_num(stats.mean_sqrt_f_z[i]),
            fmt_num(stats.se_sqrt_f_z[i]),
            fmt_num(stats.mean_f_z[i]),
            fmt_num(stats.envelope[i])
        );
    }
    ctx.write(
        "simulate",
        &csv,
        json!({
            "seed": ctx.cfg.seed,
            "coupled_fraction_at_T": stats.coupled_fraction_at_t,
            "max_sup_z": stats.max_sup_z,
            "n_sup_exceed": stats.n_sup_exceed,
            "girsanov_integral": stats.girsanov_integral,
            "girsanov_se": stats.girsanov_se,
            "kl_mc": kl.value,
            "kl_mc_se": kl.se,
            "n_paths": stats.n_paths,
            "n_diverged": stats.n_diverged,
            "failed": stats.failed,
            "trajectory": stats,
        }),
    )?;
    Ok((Stage { pass: !stats.failed }, stats))
}

fn bounds(ctx: &Ctx, cached: Option<&TrajectoryStats>) -> Result<Stage, Error> {
    let sp = ctx.cfg.schedule()?;
    let owned;
    let stats = match cached {
        Some(s) => s,
        None => {
            owned = run_simulation(ctx)?.0;
            &owned
        }
    };
    let kl = kl_girsanov_estimate(stats, &sp)?;
    let kl_theorem = sp.kl_bound();
    let pass = !stats.failed && kl.value <= kl_theorem + BOUND_SIGMAS * kl.se;
    let csv = csv_table(
        &["T", "dist", "kl_mc", "kl_mc_se", "kl_theorem"].map(String::from),
        &[vec![sp.horizon, sp.dist, kl.value, kl.se, kl_theorem]],
    );
    ctx.write(
        "bounds",
        &csv,
        json!({
            "kl_mc": kl.value,
            "kl_mc_se": kl.se,
            "kl_theorem": kl_theorem,
            "sigmas": BOUND_SIGMAS,
            "coupled_fraction_at_T": stats.coupled_fraction_at_t,
            "pass": pass,
        }),
    )?;
    Ok(Stage { pass })
}

fn renyi(ctx: &Ctx, cached: Option<&TrajectoryStats>) -> Result<Stage, Error> {
    let sp = ctx.cfg.schedule()?;
    let owned;
    let stats = match cached {
        Some(s) => s,
        None => {
            owned = run_simulation(ctx)?.0;
            &owned
        }
    };
    let rep = divergence_report(
        stats,
        &sp,
        &ctx.cfg.q_list,
        ctx.cfg.bootstrap_resamples,
        bootstrap_seed(ctx.cfg.seed),
    )?;
    let mut csv = String::from("q,renyi_mc,ci_lo,ci_hi,renyi_theorem\n");
    let mut pass = !stats.failed;
    for &q in &ctx.cfg.q_list {
        let key = fmt_q(q);
        let mc = &rep.renyi_mc[&key];
        let th = rep.renyi_theorem[&key];
        pass &= mc.value <= th + (mc.ci_hi - mc.value);
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            key,
            fmt_num(mc.value),
            fmt_num(mc.ci_lo),
            fmt_num(mc.ci_hi),
            fmt_num(th)
        );
    }
    ctx.write("renyi", &csv, json!({ "divergence_report": rep, "pass": pass }))?;
    Ok(Stage { pass })
}

fn bootstrap_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

fn harnack(ctx: &Ctx) -> Result<Stage, Error> {
    let cfg = &ctx.cfg;
    let sp = cfg.schedule()?;
    let p = cfg.potential_spec()?;
    // independent chains: distinct seeds for the two starting points
    let xs = sample_endpoints(&p, &cfg.x0, cfg.horizon, cfg.dt, cfg.harnack_samples, cfg.seed.wrapping_add(1))?;
    let xps = sample_endpoints(
        &p,
        &cfg.x0_prime,
        cfg.horizon,
        cfg.dt,
        cfg.harnack_samples,
        cfg.seed.wrapping_add(2),
    )?;
    let phi = cfg.harnack_phi;
    let rep = harnack_check(&xs, &xps, &sp, |x| phi.eval(x), cfg.harnack_q_prime)?;
    let pass = rep.log_harnack.pass && rep.power_harnack.is_none_or(|s| s.pass);
    ctx.write("harnack", &harnack_csv(&rep), json!({ "harnack_report": rep, "pass": pass }))?;
    Ok(Stage { pass })
}

fn harnack_csv(rep: &HarnackReport) -> String {
    let mut csv = String::from("inequality,lhs,lhs_se,rhs,rhs_se,margin,combined_se,pass\n");
    let mut row = |name: &str, s: &crate::divergence::HarnackSide| {
        let cells = [s.lhs, s.lhs_se, s.rhs, s.rhs_se, s.margin, s.combined_se].map(fmt_num).join(",");
        let _ = writeln!(csv, "{name},{cells},{}", s.pass);
    };
    row("log", &rep.log_harnack);
    if let Some(s) = &rep.power_harnack {
        row("power", s);
    }
    csv
}

fn csv_table(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|&v| fmt_num(v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn compact_utc(t: DateTime<Utc>) -> String {
    t.format("%Y%m%dT%H%M%SZ").to_string()
}

fn rfc3339_utc(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}
