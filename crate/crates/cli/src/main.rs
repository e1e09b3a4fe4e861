//! `covert`: photon budgets, capacities, parameter sweeps and oracle verification.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or domain error.

mod config;
mod manifest;
mod sweep;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use covert_core::scalar_capacity::{covert_constants, ea_capacity, holevo_capacity, photon_budget, structured_receiver_covert_constant};
use covert_core::symplectic_gaussian::{ea_variance_closed, output_and_reference_cms};
use covert_core::verify::{Level, Suite};
use covert_core::{ChannelParams, QCalibration, TruncationConfig};
use serde_json::{json, Value};

use config::Config;
use manifest::{fmt_f64, RunManifest};
use sweep::{Axis, Fixed, Quantity, Spacing, SweepSpec};

const DEFAULT_DELTA: f64 = 1.0;
const DEFAULT_EPSILON: f64 = 0.1;
const DEFAULT_N: u64 = 1_000_000;
const DEFAULT_V: f64 = 1.0;

#[derive(Parser)]
#[command(name = "covert", version, about = "Covert communication over lossy thermal bosonic channels")]
struct Cli {
    /// Key-value config file (TOML); flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct ChannelArgs {
    /// Channel transmissivity, 0 < eta < 1.
    #[arg(long)]
    eta: Option<f64>,
    /// Environment mean photon number.
    #[arg(long = "nbar-b")]
    nbar_b: Option<f64>,
    /// Covertness parameter (relative-entropy bound on the warden). Default 1.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Per-mode photon budget for n channel uses.
    Budget {
        #[command(flatten)]
        ch: ChannelArgs,
        /// Blocklength.
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        json: bool,
    },
    /// Square-root-law constants; with --nbar-s also capacities and covariance matrices.
    Capacity {
        #[command(flatten)]
        ch: ChannelArgs,
        #[arg(long = "nbar-s")]
        nbar_s: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate quantities along one parameter axis and write CSV.
    Sweep(SweepArgs),
    /// Run the acceptance checks.
    Verify {
        #[arg(long, value_enum, default_value_t = LevelArg::Fast)]
        level: LevelArg,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: Axis,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', conflicts_with = "range", required_unless_present = "range", num_args = 0..)]
    values: Option<Vec<f64>>,
    /// start:stop:count
    #[arg(long)]
    range: Option<String>,
    #[arg(long, value_enum, default_value_t = Spacing::Linear)]
    spacing: Spacing,
    /// Comma-separated quantities.
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    quantities: Vec<Quantity>,
    #[command(flatten)]
    ch: ChannelArgs,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    n: Option<u64>,
    /// Fixed signal photon number; otherwise the photon budget of (delta, n).
    #[arg(long = "nbar-s")]
    nbar_s: Option<f64>,
    /// Structured-receiver parameter.
    #[arg(long)]
    v: Option<f64>,
    #[arg(long)]
    q0: Option<f64>,
    #[arg(long)]
    q1: Option<f64>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest path; defaults to <out>.manifest.json.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Fast,
    Full,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(String),
    Verification,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(format!("{e:#}"))
    }
}

impl From<covert_core::Error> for Failure {
    fn from(e: covert_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

struct Resolver<'a> {
    cfg: &'a Config,
    defaults: Vec<String>,
}

impl Resolver<'_> {
    fn required(&self, flag: Option<f64>, key: Option<f64>, name: &str) -> Result<f64, Failure> {
        flag.or(key).ok_or_else(|| Failure::Usage(format!("missing --{name} (flag or config key {})", name.replace('-', "_"))))
    }

    fn or_default<T: Copy>(&mut self, flag: Option<T>, key: Option<T>, default: T, name: &str) -> T {
        flag.or(key).unwrap_or_else(|| {
            self.defaults.push(name.to_string());
            default
        })
    }

    fn channel(&mut self, a: &ChannelArgs) -> Result<(ChannelParams, f64), Failure> {
        let eta = self.required(a.eta, self.cfg.eta, "eta")?;
        let nbar_b = self.required(a.nbar_b, self.cfg.nbar_b, "nbar-b")?;
        let delta = self.or_default(a.delta, self.cfg.delta, DEFAULT_DELTA, "delta");
        Ok((ChannelParams::new(eta, nbar_b)?, delta))
    }
}

fn emit_json(v: &Value) -> Outcome {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v).map_err(anyhow::Error::from)?;
    writeln!(out).map_err(anyhow::Error::from)?;
    Ok(())
}

fn budget(r: &mut Resolver, trunc: TruncationConfig, a: &ChannelArgs, n: Option<u64>, as_json: bool) -> Outcome {
    let (ch, delta) = r.channel(a)?;
    let n = n.or(r.cfg.n).ok_or_else(|| Failure::Usage("missing --n (flag or config key n)".into()))?;
    let b = photon_budget(&ch, delta, n)?;
    let c = covert_constants(&ch, delta)?;
    if as_json {
        let params = json!({"eta": ch.eta(), "nbar_b": ch.nbar_b(), "delta": delta, "n": n});
        let m = RunManifest::new("budget", params, r.defaults.clone(), None, trunc);
        emit_json(&json!({"manifest": m, "nbar_s": b.nbar_s, "c_cov": c.c_cov}))
    } else {
        println!("nbar_s = {}  photons/mode", fmt_f64(b.nbar_s));
        println!("c_cov  = {}", fmt_f64(c.c_cov));
        Ok(())
    }
}

fn capacity(r: &mut Resolver, trunc: TruncationConfig, a: &ChannelArgs, nbar_s: Option<f64>, as_json: bool) -> Outcome {
    let (ch, delta) = r.channel(a)?;
    let nbar_s = nbar_s.or(r.cfg.nbar_s);
    let c = covert_constants(&ch, delta)?;
    let sr = structured_receiver_covert_constant(&ch)?;
    let at_s = match nbar_s {
        Some(s) => {
            let (rho, sigma) = output_and_reference_cms(&ch, s)?;
            Some((s, holevo_capacity(&ch, s)?, ea_capacity(&ch, s)?, ea_variance_closed(&ch, s)?, rho, sigma))
        }
        None => None,
    };
    if as_json {
        let params = json!({"eta": ch.eta(), "nbar_b": ch.nbar_b(), "delta": delta, "nbar_s": nbar_s});
        let m = RunManifest::new("capacity", params, r.defaults.clone(), None, trunc);
        let mut v = json!({"manifest": m, "constants": c, "structured_receiver_constant": sr});
        if let Some((s, h, e, var, rho, sigma)) = &at_s {
            v["at_nbar_s"] = json!({"nbar_s": s, "holevo_capacity": h, "ea_capacity": e, "ea_variance": var});
            v["covariance"] = json!({"layout": "qqpp", "rho": rho.sigma_row_major(), "sigma": sigma.sigma_row_major()});
        }
        return emit_json(&v);
    }
    let rows = [
        ("c_cov", c.c_cov),
        ("c_rel_no_ea", c.c_rel_no_ea),
        ("c_rel_ea", c.c_rel_ea),
        ("L_no_ea", c.l_no_ea),
        ("K_no_ea", c.k_no_ea),
        ("L_ea", c.l_ea),
        ("K_ea", c.k_ea),
        ("L_structured", sr),
    ];
    for (k, v) in rows {
        println!("{k:<14} {}", fmt_f64(v));
    }
    if let Some((s, h, e, var, _, _)) = at_s {
        println!("{:<14} {}", "nbar_s", fmt_f64(s));
        println!("{:<14} {}  bits/mode", "holevo", fmt_f64(h));
        println!("{:<14} {}  bits/mode", "ea", fmt_f64(e));
        println!("{:<14} {}  bits^2/mode", "ea_variance", fmt_f64(var));
    }
    Ok(())
}

fn run_sweep(r: &mut Resolver, trunc: TruncationConfig, a: &SweepArgs) -> Outcome {
    let cfg = r.cfg;
    let on_axis = |ax: Axis| a.axis == ax;
    // The swept parameter need not be fixed; a placeholder is overwritten per point.
    let eta = if on_axis(Axis::Eta) { f64::NAN } else { r.required(a.ch.eta, cfg.eta, "eta")? };
    let nbar_b = if on_axis(Axis::NbarB) { f64::NAN } else { r.required(a.ch.nbar_b, cfg.nbar_b, "nbar-b")? };
    let delta = if on_axis(Axis::Delta) { f64::NAN } else { r.or_default(a.ch.delta, cfg.delta, DEFAULT_DELTA, "delta") };
    let epsilon = if on_axis(Axis::Epsilon) { f64::NAN } else { r.or_default(a.epsilon, cfg.epsilon, DEFAULT_EPSILON, "epsilon") };
    let nbar_s = if on_axis(Axis::NbarS) { None } else { a.nbar_s.or(cfg.nbar_s) };
    let n = if on_axis(Axis::N) { None } else { Some(r.or_default(a.n, cfg.n, DEFAULT_N, "n")) };
    let v = r.or_default(a.v, None, DEFAULT_V, "v");

    let values = match (&a.values, &a.range) {
        (Some(v), _) => v.clone(),
        (None, Some(range)) => sweep::range_values(range, a.spacing).map_err(Failure::Usage)?,
        (None, None) => Vec::new(),
    };
    if values.is_empty() {
        return Err(Failure::Usage("sweep needs at least one axis value".into()));
    }
    if let Some(bad) = values.iter().find(|x| !x.is_finite()) {
        return Err(Failure::Usage(format!("axis value {bad} is not finite")));
    }
    let spec = SweepSpec { axis: a.axis, values, fixed: Fixed { eta, nbar_b, delta, epsilon, n, nbar_s, v } };

    let given = match (a.q0.or(cfg.q0), a.q1.or(cfg.q1)) {
        (Some(q0), Some(q1)) => Some(QCalibration { q0, q1 }),
        (None, None) => None,
        _ => return Err(Failure::Usage("q0 and q1 must be given together".into())),
    };
    let cals = sweep::calibrations(&spec, &a.quantities, given, &trunc);
    let rows = sweep::run(&spec, &a.quantities, &cals);

    match &a.out {
        Some(path) => {
            let f = File::create(path).map_err(|e| anyhow::anyhow!("creating {}: {e}", path.display()))?;
            sweep::write_csv(BufWriter::new(f), &spec, &a.quantities, &rows).map_err(anyhow::Error::from)?;
        }
        None => sweep::write_csv(io::stdout().lock(), &spec, &a.quantities, &rows).map_err(anyhow::Error::from)?,
    }

    let manifest_path = a.manifest.clone().or_else(|| a.out.as_ref().map(|o| {
        let mut p = o.clone().into_os_string();
        p.push(".manifest.json");
        PathBuf::from(p)
    }));
    if let Some(path) = manifest_path {
        // Record the single calibration when it is shared by every point.
        let calibration = match cals.first() {
            Some(Some(Ok(c))) if !spec_channel_varies(a.axis) || given.is_some() => Some(*c),
            _ => None,
        };
        let params = json!({"sweep": spec, "quantities": a.quantities});
        let m = RunManifest::new("sweep", params, r.defaults.clone(), calibration, trunc);
        let f = File::create(&path).map_err(|e| anyhow::anyhow!("creating {}: {e}", path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &m).map_err(anyhow::Error::from)?;
    }
    let failed = rows.iter().filter(|r| !r.flags.is_empty()).count();
    if failed > 0 {
        eprintln!("covert: {failed} of {} points had errors (see error_flags column)", rows.len());
    }
    Ok(())
}

fn spec_channel_varies(axis: Axis) -> bool {
    matches!(axis, Axis::Eta | Axis::NbarB)
}

fn verify(trunc: TruncationConfig, level: LevelArg, as_json: bool) -> Outcome {
    let level = match level {
        LevelArg::Fast => Level::Fast,
        LevelArg::Full => Level::Full,
    };
    let report = Suite::new(trunc).run(level);
    if as_json {
        let m = RunManifest::new("verify", json!({"level": level}), Vec::new(), None, trunc);
        emit_json(&json!({"manifest": m, "report": report}))?;
    } else {
        for c in &report.criteria {
            for k in &c.checks {
                let note = k.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default();
                println!(
                    "{} {:>2} {}: {}: observed {:.9e}, expected {:.9e}, tol {}{note}",
                    if k.passed { "PASS" } else { "FAIL" },
                    c.id,
                    c.title,
                    k.name,
                    k.observed,
                    k.expected,
                    k.tolerance
                );
            }
        }
        let passed = report.criteria.iter().filter(|c| c.passed()).count();
        println!("{passed} of {} criteria passed in {:.2} s", report.criteria.len(), report.elapsed_s);
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn dispatch(cli: Cli) -> Outcome {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let trunc = cfg.truncation();
    let mut r = Resolver { cfg: &cfg, defaults: Vec::new() };
    match &cli.cmd {
        Cmd::Budget { ch, n, json } => budget(&mut r, trunc, ch, *n, *json),
        Cmd::Capacity { ch, nbar_s, json } => capacity(&mut r, trunc, ch, *nbar_s, *json),
        Cmd::Sweep(a) => run_sweep(&mut r, trunc, a),
        Cmd::Verify { level, json } => verify(trunc, *level, *json),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("covert: {msg}");
            ExitCode::from(2)
        }
    }
}
