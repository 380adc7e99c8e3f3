//! Continuous-time simulation of rate-1 Poisson edge clocks.
//!
//! The independent per-edge clocks are realized as one merged clock of rate
//! `m` (the edge count): each event waits `Exp(m)` and lands on a uniformly
//! chosen edge. Only the two endpoints of the ticking edge are touched.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::decompose_values;
use crate::graph::{EdgeClass, EdgeRole, PartitionedGraph, Topology};
use crate::rules::{UpdateCase, UpdateRule};

/// Identifier recorded in trace metadata for the generator behind every run.
pub const RNG_ALGORITHM: &str = "chacha8-stream";

pub type SimRng = ChaCha8Rng;

/// Generator for run `run_index` under `master_seed`.
///
/// The master seed keys a ChaCha8 generator and the run index selects its
/// 64-bit stream, so runs are independent and reproducible regardless of
/// the order in which they execute.
pub fn run_rng(master_seed: u64, run_index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_index);
    rng
}

/// Waiting time to the next tick of the merged clock and the edge it lands on.
pub fn next_event<R: Rng + ?Sized>(rng: &mut R, edge_count: usize) -> (f64, usize) {
    assert!(edge_count >= 1, "graph has no edges");
    let dt: f64 = rng.sample::<f64, _>(Exp1) / edge_count as f64;
    let edge = rng.random_range(0..edge_count);
    (dt, edge)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("initial vector has length {got}, graph has {expected} vertices")]
    LengthMismatch { got: usize, expected: usize },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub values: Vec<f64>,
    pub time: f64,
    pub initial_sum: f64,
}

impl StateVector {
    pub fn new(values: Vec<f64>) -> Self {
        let initial_sum = values.iter().sum();
        StateVector { values, time: 0.0, initial_sum }
    }

    pub fn average(&self) -> f64 {
        self.initial_sum / self.values.len() as f64
    }

    pub fn sum_drift(&self) -> f64 {
        self.values.iter().sum::<f64>() - self.initial_sum
    }
}

/// Per-class tick counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickCounts {
    pub e1: u64,
    pub e2: u64,
    /// All cut-edge ticks, designated edge included (`nu_t`).
    pub e12: u64,
    /// Ticks of the designated cut edge (`k`).
    pub designated: u64,
    /// Designated ticks on which the non-convex phase fired.
    pub phases: u64,
}

impl TickCounts {
    pub fn total(&self) -> u64 {
        self.e1 + self.e2 + self.e12
    }

    fn record(&mut self, role: EdgeRole) {
        match role.class() {
            EdgeClass::E1 => self.e1 += 1,
            EdgeClass::E2 => self.e2 += 1,
            EdgeClass::E12 => self.e12 += 1,
        }
        if role == EdgeRole::DesignatedCut {
            self.designated += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub edge: usize,
    pub endpoints: (usize, usize),
    pub case: UpdateCase,
}

/// Applies one tick of `edge` to `state`. Only the endpoints of `edge` change.
pub fn step<T: Topology + ?Sized>(
    state: &mut StateVector,
    topo: &T,
    rule: &UpdateRule,
    counts: &mut TickCounts,
    edge: usize,
) -> UpdateCase {
    let role = topo.role(edge);
    counts.record(role);
    let case = rule.dispatch(role, counts.designated);
    if matches!(case, UpdateCase::CutTransfer { .. }) {
        counts.phases += 1;
    }
    let (u, v) = topo.endpoints(edge);
    let (a, b) = case.apply(state.values[u], state.values[v]);
    state.values[u] = a;
    state.values[v] = b;
    case
}

const RESYNC_DROP: f64 = 1e-3;

/// A single run in progress. Tracks the squared deviation from the
/// (conserved) average incrementally so the variance is available per event.
pub struct Simulation<'a, T: Topology + ?Sized> {
    topo: &'a T,
    rule: UpdateRule,
    state: StateVector,
    counts: TickCounts,
    rng: SimRng,
    average: f64,
    sq_dev: f64,
    initial_sq_dev: f64,
    since_resync: usize,
    resync_every: usize,
    /// Recompute once the tracked value falls below this, since
    /// cancellation error scales with the value at the last recompute.
    resync_below: f64,
}

impl<'a, T: Topology + ?Sized> Simulation<'a, T> {
    pub fn new(topo: &'a T, rule: UpdateRule, x0: Vec<f64>, rng: SimRng) -> Result<Self, SimError> {
        if x0.len() != topo.vertex_count() {
            return Err(SimError::LengthMismatch { got: x0.len(), expected: topo.vertex_count() });
        }
        let state = StateVector::new(x0);
        let average = state.average();
        let sq_dev = sq_dev(&state.values, average);
        Ok(Simulation {
            topo,
            rule,
            resync_every: 16 * topo.vertex_count().max(64),
            state,
            counts: TickCounts::default(),
            rng,
            average,
            sq_dev,
            initial_sq_dev: sq_dev,
            since_resync: 0,
            resync_below: sq_dev * RESYNC_DROP,
        })
    }

    /// Draws the next event and applies it.
    pub fn advance(&mut self) -> EventRecord {
        let (dt, edge) = next_event(&mut self.rng, self.topo.edge_count());
        self.state.time += dt;
        self.apply(edge)
    }

    /// Applies a tick of `edge` at the current time without advancing it.
    pub fn apply(&mut self, edge: usize) -> EventRecord {
        let (u, v) = self.topo.endpoints(edge);
        let (xu, xv) = (self.state.values[u], self.state.values[v]);
        let case = step(&mut self.state, self.topo, &self.rule, &mut self.counts, edge);
        let (yu, yv) = (self.state.values[u], self.state.values[v]);
        let m = self.average;
        self.sq_dev += (yu - m).powi(2) + (yv - m).powi(2) - (xu - m).powi(2) - (xv - m).powi(2);
        self.since_resync += 1;
        if self.since_resync >= self.resync_every || self.sq_dev < self.resync_below {
            self.resync();
        }
        EventRecord { time: self.state.time, edge, endpoints: (u, v), case }
    }

    pub fn resync(&mut self) {
        self.sq_dev = sq_dev(&self.state.values, self.average);
        self.since_resync = 0;
        self.resync_below = self.sq_dev * RESYNC_DROP;
    }

    /// Peeks at the waiting time and edge of the next event without applying
    /// it. The draw is consumed: the next `advance_with` must use it.
    pub fn draw(&mut self) -> (f64, usize) {
        next_event(&mut self.rng, self.topo.edge_count())
    }

    /// Applies a previously drawn event.
    pub fn advance_with(&mut self, dt: f64, edge: usize) -> EventRecord {
        self.state.time += dt;
        self.apply(edge)
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn counts(&self) -> &TickCounts {
        &self.counts
    }

    pub fn rule(&self) -> &UpdateRule {
        &self.rule
    }

    /// Current variance about the initial average.
    pub fn variance(&self) -> f64 {
        self.sq_dev.max(0.0) / self.topo.vertex_count() as f64
    }

    pub fn initial_variance(&self) -> f64 {
        self.initial_sq_dev / self.topo.vertex_count() as f64
    }

    /// `var(t) / var(0)`; zero when the start is already at consensus.
    pub fn variance_ratio(&self) -> f64 {
        if self.initial_sq_dev > 0.0 {
            self.sq_dev.max(0.0) / self.initial_sq_dev
        } else {
            0.0
        }
    }

    /// Replaces the state by `scale * (x - mean)`, keeping time and counters.
    /// Used by epoch studies to keep long linear runs away from the
    /// floating-point floor; ratios of variances are unaffected.
    pub fn rescale(&mut self, scale: f64) {
        let mean = self.state.values.iter().sum::<f64>() / self.state.values.len() as f64;
        for x in &mut self.state.values {
            *x = scale * (*x - mean);
        }
        self.state.initial_sum = self.state.values.iter().sum();
        self.average = self.state.average();
        self.resync();
    }

    pub fn into_state(self) -> StateVector {
        self.state
    }
}

fn sq_dev(values: &[f64], average: f64) -> f64 {
    values.iter().map(|x| (x - average).powi(2)).sum()
}

/// Stopping and sampling controls. The run stops at whichever active
/// criterion triggers first; at least one must be set.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub max_time: Option<f64>,
    pub max_events: Option<u64>,
    pub variance_ratio_target: Option<f64>,
    /// Event stride between metric samples.
    pub sample_every: u64,
    pub record_events: bool,
}

impl SimConfig {
    pub fn events(seed: u64, max_events: u64) -> Self {
        SimConfig {
            seed,
            max_time: None,
            max_events: Some(max_events),
            variance_ratio_target: None,
            sample_every: 1,
            record_events: false,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.sample_every == 0 {
            return Err(SimError::InvalidConfig("sample_every must be at least 1".into()));
        }
        if self.max_time.is_none() && self.max_events.is_none() && self.variance_ratio_target.is_none() {
            return Err(SimError::InvalidConfig("no stop criterion".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub var: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
    pub nu_t: u64,
    pub k: u64,
    /// True when the non-convex phase fired at this sample's event.
    pub epoch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub seed: u64,
    pub rng: String,
    pub rule: String,
    pub graph_digest: String,
    pub n1: usize,
    pub n2: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub metadata: TraceMetadata,
    pub samples: Vec<Sample>,
    pub tick_counts: TickCounts,
    /// Times at which the non-convex phase fired.
    pub epoch_marks: Vec<f64>,
    pub event_log: Option<Vec<EventRecord>>,
}

impl SimTrace {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        serde_json::to_writer(&mut out, &self.metadata)?;
        writeln!(out)?;
        for s in &self.samples {
            serde_json::to_writer(&mut out, s)?;
            writeln!(out)?;
        }
        Ok(())
    }

    /// CSV with a `#`-prefixed metadata line ahead of the header row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let m = &self.metadata;
        writeln!(
            out,
            "# seed={} rng={} rule={} graph={} n1={} n2={}",
            m.seed, m.rng, m.rule, m.graph_digest, m.n1, m.n2
        )?;
        let mut w = csv::Writer::from_writer(out);
        for s in &self.samples {
            w.serialize(s).map_err(io::Error::other)?;
        }
        w.flush()
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: SimTrace,
    pub final_state: StateVector,
}

/// Runs one simulation from `x0` until a stop criterion of `config` fires.
pub fn simulate(
    graph: &PartitionedGraph,
    rule: &UpdateRule,
    x0: &[f64],
    config: &SimConfig,
) -> Result<SimOutput, SimError> {
    config.validate()?;
    let mut sim = Simulation::new(graph, *rule, x0.to_vec(), run_rng(config.seed, 0))?;
    let n1 = graph.n1();
    let sample_of = |sim: &Simulation<PartitionedGraph>, epoch: bool| {
        let d = decompose_values(&sim.state().values, n1);
        Sample {
            t: sim.time(),
            var: d.var,
            mu1: d.mu1,
            mu2: d.mu2,
            sigma: d.sigma,
            nu_t: sim.counts().e12,
            k: sim.counts().designated,
            epoch,
        }
    };

    let mut samples = vec![sample_of(&sim, false)];
    let mut epoch_marks = Vec::new();
    let mut log = config.record_events.then(Vec::new);
    let mut events: u64 = 0;
    loop {
        if config.max_events.is_some_and(|m| events >= m) {
            break;
        }
        if config.variance_ratio_target.is_some_and(|r| sim.variance_ratio() <= r) {
            break;
        }
        let (dt, edge) = sim.draw();
        if config.max_time.is_some_and(|t| sim.time() + dt > t) {
            break;
        }
        let rec = sim.advance_with(dt, edge);
        events += 1;
        let fired = matches!(rec.case, UpdateCase::CutTransfer { .. });
        if fired {
            epoch_marks.push(rec.time);
        }
        if let Some(log) = log.as_mut() {
            log.push(rec);
        }
        if fired || events.is_multiple_of(config.sample_every) {
            samples.push(sample_of(&sim, fired));
        }
    }
    if samples.last().map(|s| s.t) != Some(sim.time()) {
        samples.push(sample_of(&sim, false));
    }

    let trace = SimTrace {
        metadata: TraceMetadata {
            seed: config.seed,
            rng: RNG_ALGORITHM.to_string(),
            rule: rule.to_string(),
            graph_digest: graph.digest(),
            n1: graph.n1(),
            n2: graph.n2(),
        },
        samples,
        tick_counts: *sim.counts(),
        epoch_marks,
        event_log: log,
    };
    Ok(SimOutput { trace, final_state: sim.into_state() })
}
