//! Command-line front end.
//!
//! Every option can come from a `--config` file (`key=value` per line, keys
//! as in [`crate::config::KEYS`]); flags given on the command line win.
//! Exit codes: 0 success, 1 failed check or runtime error, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::analysis::{
    audit_run, convex_lower_bound_sweep, epoch_study, estimate_t_av, estimate_t_av_adaptive, estimate_t_van,
    estimate_t_van_adaptive, initial_vector, loglog_slope, resolve_rule, suggested_horizon, write_rows_csv,
    AnalysisError, CutFamily, EpochStudyConfig, EstimateConfig, SweepOptions, alg_a_scaling_sweep,
};
use crate::config::{format_family, ConfigError, ExperimentConfig};
use crate::engine::{simulate, SimConfig};
use crate::graph::{PartitionedGraph, Side};
use crate::rules::{RuleDescriptor, UpdateRule};
use crate::walks::{dominance_check, simple_walk_tail, TailBoundParams, TailProbability};

/// Events simulated when no stop criterion is configured.
pub const DEFAULT_MAX_EVENTS: u64 = 10_000;
/// Events audited by `check invariants` when `max-events` is unset.
pub const DEFAULT_AUDIT_EVENTS: u64 = 100_000;
/// Adaptive horizon doublings before giving up.
const MAX_DOUBLINGS: usize = 12;

#[derive(Debug, Parser)]
#[command(name = "cutgossip", version, about = "Gossip averaging across a sparse cut")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// barbell:N1,N2 | file:PATH | random:N1,N2,P1,P2,K12
    #[arg(long)]
    pub graph: Option<String>,
    /// vanilla | convex:a=ALPHA | algA:[P=..,]gamma=balanced|n1|VALUE,C=..
    #[arg(long)]
    pub rule: Option<String>,
    /// worst-cut | random[:DRAWS]
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub runs: Option<String>,
    /// Time horizon, or `auto` for a doubling search.
    #[arg(long)]
    pub horizon: Option<String>,
    /// Output file; `-` for stdout. Traces ending in `.csv` are written as
    /// CSV, anything else as JSON lines.
    #[arg(short, long)]
    pub out: Option<String>,
    /// Config file with `key=value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    /// Exact sub-Gaussian tail check of the simple walk, n <= 30.
    Tail,
    /// Empirical epoch increments against the dominating walk.
    Dominance,
    /// Conservation, locality and decomposition bounds on one run.
    Invariants,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write its trace.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        max_events: Option<String>,
        #[arg(long)]
        max_time: Option<String>,
        /// Stop once var/var0 falls to this ratio.
        #[arg(long)]
        target_ratio: Option<String>,
        #[arg(long)]
        sample_every: Option<String>,
    },
    /// Estimate the averaging time of a rule, or of one side with `--side`.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        /// 1 or 2: estimate vanilla averaging time of that side alone.
        #[arg(long)]
        side: Option<String>,
    },
    /// Averaging time over a family of sizes. CSV columns for convex-class
    /// rules: n,n1,e12,t_hat,bound,pass,mean_cut_ticks,required_cut_ticks,
    /// horizon,seed,first_stream,last_stream. For Algorithm A:
    /// n,n1,period,gamma,t_van1,t_van2,t_hat,ratio,n1_gamma_t_hat,horizon,seed,
    /// first_stream,last_stream. A final `#` line holds the log-log slope.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// barbell | matched
        #[arg(long)]
        family: Option<String>,
        /// Comma-separated sizes.
        #[arg(long)]
        n: Option<String>,
        /// Also estimate Algorithm A with gamma = n1 at each point.
        #[arg(long)]
        compare_n1: bool,
    },
    /// Run a named check; exits 1 if it fails.
    Check {
        kind: CheckKind,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        epochs: Option<String>,
        /// Quantile slack for dominance, or `auto` for 0.1 ln n.
        #[arg(long)]
        slack: Option<String>,
        /// Period constant for the default Algorithm A rule.
        #[arg(long)]
        c: Option<String>,
        /// Cut coefficient mode for the default Algorithm A rule.
        #[arg(long)]
        gamma: Option<String>,
        #[arg(long)]
        max_events: Option<String>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
    CheckFailed,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                2
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(Failure::CheckFailed) => {
            let _ = writeln!(stderr, "check FAILED");
            1
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            1
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            2
        }
    }
}

fn build_config(common: &CommonArgs, extra: &[(&str, &Option<String>)]) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.merge_text(&text)?;
    }
    let flags = [
        ("graph", &common.graph),
        ("rule", &common.rule),
        ("x0", &common.x0),
        ("seed", &common.seed),
        ("runs", &common.runs),
        ("horizon", &common.horizon),
        ("out", &common.out),
    ];
    for (key, value) in flags.iter().chain(extra) {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn open_out<'a>(path: &Option<PathBuf>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, Failure> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(stdout)),
    }
}

fn is_csv(path: &Option<PathBuf>) -> bool {
    path.as_deref().and_then(Path::extension).is_some_and(|e| e == "csv")
}

fn resolve(graph: &PartitionedGraph, cfg: &ExperimentConfig) -> Result<UpdateRule, Failure> {
    Ok(resolve_rule(graph, &cfg.rule, cfg.runs, cfg.seed)?.rule)
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Simulate { common, max_events, max_time, target_ratio, sample_every } => {
            let cfg = build_config(
                &common,
                &[
                    ("max-events", &max_events),
                    ("max-time", &max_time),
                    ("target-ratio", &target_ratio),
                    ("sample-every", &sample_every),
                ],
            )?;
            cmd_simulate(&cfg, stdout, stderr)
        }
        Command::Estimate { common, side } => {
            let cfg = build_config(&common, &[("side", &side)])?;
            cmd_estimate(&cfg, stdout)
        }
        Command::Sweep { common, family, n, compare_n1 } => {
            let flag = compare_n1.then(|| "true".to_string());
            let cfg = build_config(&common, &[("family", &family), ("n", &n), ("compare-n1", &flag)])?;
            cmd_sweep(&cfg, stdout)
        }
        Command::Check { kind, common, epochs, slack, c, gamma, max_events } => {
            let cfg = build_config(
                &common,
                &[("epochs", &epochs), ("slack", &slack), ("c", &c), ("gamma", &gamma), ("max-events", &max_events)],
            )?;
            let pass = match kind {
                CheckKind::Tail => cmd_check_tail(&cfg, stdout)?,
                CheckKind::Dominance => cmd_check_dominance(&cfg, stdout)?,
                CheckKind::Invariants => cmd_check_invariants(&cfg, stdout)?,
            };
            if pass {
                Ok(())
            } else {
                Err(Failure::CheckFailed)
            }
        }
    }
}

fn cmd_simulate(cfg: &ExperimentConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let graph = cfg.graph.build(cfg.seed)?;
    let rule = resolve(&graph, cfg)?;
    let x0 = initial_vector(&graph, cfg.x0, 0, cfg.seed);
    let mut sim_cfg = SimConfig {
        seed: cfg.seed,
        max_time: cfg.max_time,
        max_events: cfg.max_events,
        variance_ratio_target: cfg.target_ratio,
        sample_every: cfg.sample_every,
        record_events: false,
    };
    if sim_cfg.max_time.is_none() && sim_cfg.max_events.is_none() && sim_cfg.variance_ratio_target.is_none() {
        sim_cfg.max_events = Some(DEFAULT_MAX_EVENTS);
    }
    let output = simulate(&graph, &rule, &x0, &sim_cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut out = open_out(&cfg.out, stdout)?;
    if is_csv(&cfg.out) {
        output.trace.write_csv(&mut out)?;
    } else {
        output.trace.write_jsonl(&mut out)?;
    }
    out.flush()?;
    let last = output.trace.samples.last().expect("final sample");
    writeln!(
        stderr,
        "rule={rule} events={} time={:.6} var={:.6e} phases={}",
        output.trace.tick_counts.total(),
        last.t,
        last.var,
        output.trace.tick_counts.phases
    )?;
    Ok(())
}

fn cmd_estimate(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<(), Failure> {
    let graph = cfg.graph.build(cfg.seed)?;
    let report = if let Some(s) = cfg.side {
        let side = graph.side(if s == 1 { Side::One } else { Side::Two });
        let t_hat = match cfg.horizon {
            Some(h) => estimate_t_van(&side, cfg.runs, h, cfg.seed)?,
            None => estimate_t_van_adaptive(&side, cfg.runs, cfg.seed)?,
        };
        json!({
            "mode": "side",
            "side": s,
            "vertices": side.n,
            "t_hat": t_hat,
            "runs": cfg.runs,
            "horizon": cfg.horizon,
            "seed": cfg.seed,
        })
    } else {
        let rule = resolve(&graph, cfg)?;
        let est = match cfg.horizon {
            Some(h) => estimate_t_av(&graph, rule, cfg.x0, &EstimateConfig::new(cfg.runs, h, cfg.seed))?,
            None => {
                let base = EstimateConfig::new(cfg.runs, suggested_horizon(&graph, &rule), cfg.seed);
                estimate_t_av_adaptive(&graph, rule, cfg.x0, &base, MAX_DOUBLINGS)?
            }
        };
        json!({
            "mode": "graph",
            "graph": cfg.graph.to_string(),
            "graph_digest": graph.digest(),
            "rule": rule.to_string(),
            "t_hat": est.t_hat,
            "runs": est.runs,
            "horizon": est.horizon,
            "exceed_fraction": est.exceed_fraction_at_t_hat,
            "mean_cut_ticks": est.mean_cut_ticks(),
            "seed": cfg.seed,
        })
    };
    let mut out = open_out(&cfg.out, stdout)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("json"))?;
    out.flush()?;
    Ok(())
}

fn slope_summary(label: &str, points: &[(f64, f64)]) -> String {
    if points.iter().any(|p| !p.1.is_finite()) {
        format!("{label}=censored")
    } else {
        format!("{label}={:.4}", loglog_slope(points))
    }
}

fn cmd_sweep(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<(), Failure> {
    let opts = SweepOptions::new(cfg.runs, cfg.seed);
    let ns: Vec<f64> = cfg.n.iter().map(|&n| n as f64).collect();
    let tail = format!("rule={} family={} seed={} runs={}", cfg.rule, format_family(cfg.family), cfg.seed, cfg.runs);
    let mut out = open_out(&cfg.out, stdout)?;
    match cfg.rule {
        RuleDescriptor::AlgorithmA { period, gamma, c } => {
            if period.is_some() {
                return Err(Failure::Usage("sweep derives the period at each size; drop P= from the rule".into()));
            }
            if cfg.family != CutFamily::Barbell {
                return Err(Failure::Usage("the Algorithm A sweep runs on the barbell family only".into()));
            }
            let rows = alg_a_scaling_sweep(&cfg.n, c, gamma, cfg.compare_n1, &opts)?;
            let pts: Vec<(f64, f64)> = ns.iter().zip(&rows).map(|(&n, r)| (n, r.t_hat)).collect();
            let mut summary = format!("{} {tail}", slope_summary("loglog_slope", &pts));
            if cfg.compare_n1 {
                let n1_gamma: Vec<(f64, f64)> =
                    ns.iter().zip(&rows).map(|(&n, r)| (n, r.n1_gamma_t_hat.unwrap_or(f64::NAN))).collect();
                summary = format!("{summary} {}", slope_summary("n1_gamma_slope", &n1_gamma));
            }
            write_rows_csv(&mut out, &rows, &summary)?;
        }
        RuleDescriptor::Vanilla | RuleDescriptor::Convex { .. } => {
            let rule = match cfg.rule {
                RuleDescriptor::Convex { alpha } => UpdateRule::Convex { alpha },
                _ => UpdateRule::Vanilla,
            };
            let rows = convex_lower_bound_sweep(&cfg.n, cfg.family, rule, &opts)?;
            let pts: Vec<(f64, f64)> = ns.iter().zip(&rows).map(|(&n, r)| (n, r.t_hat)).collect();
            let all = rows.iter().all(|r| r.pass);
            write_rows_csv(&mut out, &rows, &format!("{} bound_ok={all} {tail}", slope_summary("loglog_slope", &pts)))?;
        }
    }
    out.flush()?;
    Ok(())
}

const TAIL_S_GRID: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 3.0];
const TAIL_MAX_N: u32 = 30;

fn cmd_check_tail(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<bool, Failure> {
    let params = TailBoundParams::default();
    let mut violations = Vec::new();
    let mut checked = 0usize;
    for n in 1..=TAIL_MAX_N {
        for &s in &TAIL_S_GRID {
            let (p, bound) = simple_walk_tail(n, s, &params, cfg.seed).map_err(|e| Failure::Runtime(e.to_string()))?;
            let TailProbability::Exact(p) = p else {
                return Err(Failure::Runtime(format!("expected exact tail at n={n}")));
            };
            checked += 1;
            if p > bound {
                violations.push(json!({ "n": n, "s": s, "probability": p, "bound": bound }));
            }
        }
    }
    let pass = violations.is_empty();
    let report = json!({
        "check": "tail",
        "c": params.c_const,
        "beta": params.beta_const,
        "max_n": TAIL_MAX_N,
        "s_grid": TAIL_S_GRID,
        "cases": checked,
        "violations": violations,
        "pass": pass,
    });
    let mut out = open_out(&cfg.out, stdout)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("json"))?;
    out.flush()?;
    Ok(pass)
}

/// Uses the configured rule if it is an Algorithm A rule, otherwise
/// Algorithm A built from the `c` and `gamma` keys.
fn cmd_check_dominance(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<bool, Failure> {
    let graph = cfg.graph.build(cfg.seed)?;
    let descriptor = if cfg.rule.is_convex_class() {
        RuleDescriptor::algorithm_a(None, cfg.gamma, cfg.c).map_err(|e| Failure::Usage(e.to_string()))?
    } else {
        cfg.rule
    };
    let rule = resolve_rule(&graph, &descriptor, cfg.runs, cfg.seed)?.rule;
    let x0 = initial_vector(&graph, cfg.x0, 0, cfg.seed);
    let study = epoch_study(
        &graph,
        rule,
        &x0,
        &EpochStudyConfig {
            epochs: cfg.epochs,
            seed: cfg.seed,
            stream: 0,
            with_operators: false,
            renormalize: true,
            max_time: cfg.max_time.unwrap_or(f64::INFINITY),
        },
    )?;
    let incs: Vec<f64> = study.iter().map(|r| r.increment()).collect();
    let n = graph.n() as f64;
    let slack = cfg.slack.unwrap_or(0.1 * n.ln());
    let grid: Vec<f64> = (1..20).map(|i| i as f64 * 0.05).collect();
    let report = dominance_check(&incs, n, &grid, slack).map_err(|e| Failure::Runtime(e.to_string()))?;
    let json = json!({
        "check": "dominance",
        "graph": cfg.graph.to_string(),
        "rule": rule.to_string(),
        "seed": cfg.seed,
        "epochs": study.len(),
        "report": report,
    });
    let mut out = open_out(&cfg.out, stdout)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&json).expect("json"))?;
    out.flush()?;
    Ok(report.pass)
}

fn cmd_check_invariants(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<bool, Failure> {
    let graph = cfg.graph.build(cfg.seed)?;
    let rule = resolve(&graph, cfg)?;
    let x0 = initial_vector(&graph, cfg.x0, 0, cfg.seed);
    let events = cfg.max_events.unwrap_or(DEFAULT_AUDIT_EVENTS);
    let report = audit_run(&graph, rule, &x0, events, cfg.sample_every, cfg.seed)?;
    let json = json!({
        "check": "invariants",
        "graph": cfg.graph.to_string(),
        "rule": rule.to_string(),
        "seed": cfg.seed,
        "report": report,
    });
    let mut out = open_out(&cfg.out, stdout)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&json).expect("json"))?;
    out.flush()?;
    Ok(report.pass)
}
