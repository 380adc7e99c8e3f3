//! Monte Carlo estimation of the averaging time.
//!
//! A run "exceeds" at time `t` when `var X(t) / var X(0) > threshold`. Since
//! the variance only changes at events, the supremum of exceeding times is
//! the time of the first event after the last exceeding state (or the
//! horizon, if the run is still exceeding there). The estimate is the
//! smallest such per-run time `t` for which fewer than `confidence * runs`
//! runs exceed anywhere in `(t, horizon]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::AnalysisError;
use crate::engine::{run_rng, Simulation};
use crate::graph::{PartitionedGraph, Side, SideGraph, Topology};
use crate::rules::{compute_period, RuleDescriptor, UpdateRule};

pub const MIN_RUNS: usize = 30;

/// Stream offset reserved for drawing random initial vectors.
const X0_SEED_SALT: u64 = 0x005e_ed0f_1a17;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum X0Policy {
    /// `1` on side one and `-n1/n2` on side two.
    WorstCut,
    /// Centered, unit-variance Gaussian vectors; the estimate is the maximum
    /// over `draws` independent vectors.
    Random { draws: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateConfig {
    pub runs: usize,
    pub horizon: f64,
    pub threshold: f64,
    pub confidence: f64,
    pub seed: u64,
    /// First stream index used; run `r` uses stream `stream_offset + r`.
    pub stream_offset: u64,
}

impl EstimateConfig {
    pub fn new(runs: usize, horizon: f64, seed: u64) -> Self {
        EstimateConfig {
            runs,
            horizon,
            threshold: (-2.0f64).exp(),
            confidence: (-1.0f64).exp(),
            seed,
            stream_offset: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    /// First time the ratio is at or below the threshold.
    pub first_crossing: Option<f64>,
    /// Supremum of exceeding times, capped at the horizon.
    pub last_exceedance: f64,
    /// Cut-edge ticks (all of `E12`) up to `last_exceedance`.
    pub cut_ticks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragingTimeEstimate {
    pub t_hat: f64,
    pub runs: usize,
    pub horizon: f64,
    /// Fraction of runs still exceeding after `t_hat`; always below the
    /// confidence level.
    pub exceed_fraction_at_t_hat: f64,
    pub first_crossings: Vec<Option<f64>>,
    pub last_exceedances: Vec<f64>,
    pub cut_ticks: Vec<u64>,
}

impl AveragingTimeEstimate {
    pub fn mean_cut_ticks(&self) -> f64 {
        self.cut_ticks.iter().sum::<u64>() as f64 / self.cut_ticks.len() as f64
    }
}

pub fn initial_vector(graph: &PartitionedGraph, policy: X0Policy, draw: u64, seed: u64) -> Vec<f64> {
    match policy {
        X0Policy::WorstCut => {
            let low = -(graph.n1() as f64) / graph.n2() as f64;
            (0..graph.n()).map(|i| if i < graph.n1() { 1.0 } else { low }).collect()
        }
        X0Policy::Random { .. } => random_unit_vector(graph.n(), draw, seed),
    }
}

fn random_unit_vector(n: usize, draw: u64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ X0_SEED_SALT);
    rng.set_stream(draw);
    let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = if var > 0.0 { var.sqrt().recip() } else { 1.0 };
    for v in &mut x {
        *v = (*v - mean) * scale;
    }
    x
}

fn run_once<T: Topology + ?Sized>(
    topo: &T,
    rule: UpdateRule,
    x0: &[f64],
    cfg: &EstimateConfig,
    run: u64,
) -> RunOutcome {
    let mut sim = Simulation::new(topo, rule, x0.to_vec(), run_rng(cfg.seed, cfg.stream_offset + run))
        .expect("x0 length checked by caller");
    // Convex-class rules never increase the variance, so the first crossing
    // is also the last exceedance.
    let monotone = rule.is_convex_class();
    let mut exceeding = sim.variance_ratio() > cfg.threshold;
    let mut out = RunOutcome {
        first_crossing: (!exceeding).then_some(0.0),
        last_exceedance: 0.0,
        cut_ticks: 0,
    };
    if !exceeding && monotone {
        return out;
    }
    loop {
        let (dt, edge) = sim.draw();
        let t = sim.time() + dt;
        if t > cfg.horizon {
            if exceeding {
                out.last_exceedance = cfg.horizon;
                out.cut_ticks = sim.counts().e12;
            }
            break;
        }
        sim.advance_with(dt, edge);
        if exceeding {
            out.last_exceedance = t;
            out.cut_ticks = sim.counts().e12;
        }
        exceeding = sim.variance_ratio() > cfg.threshold;
        if !exceeding {
            if out.first_crossing.is_none() {
                out.first_crossing = Some(t);
            }
            if monotone || sim.variance() == 0.0 {
                break;
            }
        }
    }
    out
}

fn check_runs(cfg: &EstimateConfig) -> Result<(), AnalysisError> {
    if cfg.runs < MIN_RUNS {
        return Err(AnalysisError::TooFewRuns { min: MIN_RUNS, got: cfg.runs });
    }
    Ok(())
}

fn variance(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64
}

fn outcomes<T: Topology + ?Sized>(
    topo: &T,
    rule: UpdateRule,
    x0: &[f64],
    cfg: &EstimateConfig,
) -> Result<Vec<RunOutcome>, AnalysisError> {
    if x0.len() != topo.vertex_count() {
        return Err(crate::engine::SimError::LengthMismatch { got: x0.len(), expected: topo.vertex_count() }.into());
    }
    if variance(x0) == 0.0 {
        return Err(AnalysisError::DegenerateInitial);
    }
    Ok((0..cfg.runs as u64)
        .into_par_iter()
        .map(|r| run_once(topo, rule, x0, cfg, r))
        .collect())
}

/// Turns per-run outcomes into an estimate, enforcing the horizon-adequacy
/// precondition: at least `1 - 1/(2e)` of runs must settle by `horizon / 2`.
pub fn estimate_from_outcomes(
    outcomes: &[RunOutcome],
    horizon: f64,
    confidence: f64,
) -> Result<AveragingTimeEstimate, AnalysisError> {
    let runs = outcomes.len();
    let settled = outcomes.iter().filter(|o| o.last_exceedance <= horizon / 2.0).count();
    let adequate_fraction = settled as f64 / runs as f64;
    if adequate_fraction < 1.0 - 0.5 * (-1.0f64).exp() {
        return Err(AnalysisError::HorizonTooShort { horizon, adequate_fraction });
    }
    let mut lasts: Vec<f64> = outcomes.iter().map(|o| o.last_exceedance).collect();
    lasts.sort_by(|a, b| b.total_cmp(a));
    // Largest count of runs allowed to exceed past t_hat: count < confidence * runs.
    let allowed = ((confidence * runs as f64).ceil() as usize).saturating_sub(1).min(runs - 1);
    let t_hat = lasts[allowed];
    let beyond = lasts.iter().filter(|&&l| l > t_hat).count();
    Ok(AveragingTimeEstimate {
        t_hat,
        runs,
        horizon,
        exceed_fraction_at_t_hat: beyond as f64 / runs as f64,
        first_crossings: outcomes.iter().map(|o| o.first_crossing).collect(),
        last_exceedances: outcomes.iter().map(|o| o.last_exceedance).collect(),
        cut_ticks: outcomes.iter().map(|o| o.cut_ticks).collect(),
    })
}

fn estimate_on<T: Topology + ?Sized>(
    topo: &T,
    rule: UpdateRule,
    x0s: &[Vec<f64>],
    cfg: &EstimateConfig,
) -> Result<AveragingTimeEstimate, AnalysisError> {
    check_runs(cfg)?;
    let mut best: Option<AveragingTimeEstimate> = None;
    for (d, x0) in x0s.iter().enumerate() {
        let mut draw_cfg = *cfg;
        draw_cfg.stream_offset = cfg.stream_offset + (d * cfg.runs) as u64;
        let outs = outcomes(topo, rule, x0, &draw_cfg)?;
        let est = estimate_from_outcomes(&outs, cfg.horizon, cfg.confidence)?;
        if best.as_ref().is_none_or(|b| est.t_hat > b.t_hat) {
            best = Some(est);
        }
    }
    Ok(best.expect("at least one initial vector"))
}

/// Estimates the averaging time of `rule` on `graph` from `x0` chosen by
/// `policy`.
pub fn estimate_t_av(
    graph: &PartitionedGraph,
    rule: UpdateRule,
    policy: X0Policy,
    cfg: &EstimateConfig,
) -> Result<AveragingTimeEstimate, AnalysisError> {
    let x0s: Vec<Vec<f64>> = match policy {
        X0Policy::WorstCut => vec![initial_vector(graph, policy, 0, cfg.seed)],
        X0Policy::Random { draws } => {
            (0..draws.max(1) as u64).map(|d| initial_vector(graph, policy, d, cfg.seed)).collect()
        }
    };
    estimate_on(graph, rule, &x0s, cfg)
}

/// Retries [`estimate_t_av`] with a doubled horizon while the horizon is too
/// short, up to `max_doublings` times.
pub fn estimate_t_av_adaptive(
    graph: &PartitionedGraph,
    rule: UpdateRule,
    policy: X0Policy,
    cfg: &EstimateConfig,
    max_doublings: usize,
) -> Result<AveragingTimeEstimate, AnalysisError> {
    let mut cfg = *cfg;
    for attempt in 0..=max_doublings {
        match estimate_t_av(graph, rule, policy, &cfg) {
            Err(AnalysisError::HorizonTooShort { .. }) if attempt < max_doublings => cfg.horizon *= 2.0,
            other => return other,
        }
    }
    unreachable!()
}

/// Vanilla averaging time of one side in isolation; zero for a single vertex.
/// Uses the maximum over three random centered initial vectors.
pub fn estimate_t_van(
    side: &SideGraph,
    runs: usize,
    horizon: f64,
    seed: u64,
) -> Result<f64, AnalysisError> {
    if side.n <= 1 {
        return Ok(0.0);
    }
    if !side.is_connected() {
        return Err(AnalysisError::DisconnectedSubgraph);
    }
    let x0s: Vec<Vec<f64>> = (0..3).map(|d| random_unit_vector(side.n, d, seed)).collect();
    let cfg = EstimateConfig::new(runs, horizon, seed);
    Ok(estimate_on(side, UpdateRule::Vanilla, &x0s, &cfg)?.t_hat)
}

pub fn estimate_t_van_adaptive(side: &SideGraph, runs: usize, seed: u64) -> Result<f64, AnalysisError> {
    let mut horizon = 1.0;
    loop {
        match estimate_t_van(side, runs, horizon, seed) {
            Err(AnalysisError::HorizonTooShort { .. }) if horizon < 1e9 => horizon *= 2.0,
            other => return other,
        }
    }
}

/// A rule ready to simulate, with the side averaging times used for its
/// period when they were estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedRule {
    pub rule: UpdateRule,
    pub t_van: Option<(f64, f64)>,
}

/// Fixes every graph-dependent parameter of `descriptor`. Algorithm A
/// descriptors without a period get `P = ceil(C (T_van(G1) + T_van(G2)) ln n)`
/// from estimated side averaging times.
pub fn resolve_rule(
    graph: &PartitionedGraph,
    descriptor: &RuleDescriptor,
    runs: usize,
    seed: u64,
) -> Result<ResolvedRule, AnalysisError> {
    match *descriptor {
        RuleDescriptor::AlgorithmA { period: None, c, .. } => {
            let t1 = estimate_t_van_adaptive(&graph.side(Side::One), runs, seed)?;
            let t2 = estimate_t_van_adaptive(&graph.side(Side::Two), runs, seed.wrapping_add(1))?;
            let period = compute_period(t1, t2, graph.n() as f64, c);
            Ok(ResolvedRule {
                rule: UpdateRule::from_descriptor(graph, descriptor, Some(period))?,
                t_van: Some((t1, t2)),
            })
        }
        _ => Ok(ResolvedRule { rule: UpdateRule::from_descriptor(graph, descriptor, None)?, t_van: None }),
    }
}

/// A starting horizon for adaptive estimation.
pub fn suggested_horizon(graph: &PartitionedGraph, rule: &UpdateRule) -> f64 {
    let cut = graph.edges_e12().len() as f64;
    match *rule {
        UpdateRule::Vanilla => 4.0 * (graph.n1() as f64 / cut + 1.0),
        UpdateRule::Convex { alpha } => {
            4.0 * (graph.n1() as f64 / cut + 1.0) / (2.0 * (1.0 - alpha)).max(1e-3)
        }
        UpdateRule::AlgorithmA { period, .. } => 4.0 * (period as f64 + 2.0),
    }
}
