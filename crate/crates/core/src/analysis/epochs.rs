//! Epoch operators: the linear map composed from all updates between two
//! consecutive firings of the non-convex phase.

use super::{decompose_values, AnalysisError};
use crate::engine::{run_rng, EventRecord, SimTrace, Simulation};
use crate::graph::PartitionedGraph;
use crate::rules::{UpdateCase, UpdateRule};

pub const DEFAULT_NORM_TOL: f64 = 1e-10;
pub const DEFAULT_NORM_MAX_ITER: usize = 100_000;

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Matrix { n, data }
    }

    /// Builds from rows; panics unless the rows form a square matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Matrix { n, data: rows.concat() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &yi) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        out
    }

    /// Left-multiplies by the pair map `[[a, b], [b, a]]` acting on rows `u`, `v`.
    fn apply_pair(&mut self, u: usize, v: usize, a: f64, b: f64) {
        let n = self.n;
        for j in 0..n {
            let (ru, rv) = (self.data[u * n + j], self.data[v * n + j]);
            self.data[u * n + j] = a * ru + b * rv;
            self.data[v * n + j] = b * ru + a * rv;
        }
    }

    /// `A (I - J/n)`: the map restricted to sum-zero vectors.
    pub fn centered(&self) -> Matrix {
        let n = self.n;
        let mut data = self.data.clone();
        for i in 0..n {
            let mean = self.row(i).iter().sum::<f64>() / n as f64;
            for j in 0..n {
                data[i * n + j] -= mean;
            }
        }
        Matrix { n, data }
    }
}

/// Product of the per-event pair maps, in event order.
pub fn compose_events(n: usize, events: &[EventRecord]) -> Matrix {
    let mut m = Matrix::identity(n);
    for ev in events {
        if ev.case == UpdateCase::Idle {
            continue;
        }
        let (a, b) = ev.case.pair_coefficients();
        m.apply_pair(ev.endpoints.0, ev.endpoints.1, a, b);
    }
    m
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest singular value by power iteration on `A^T A`.
///
/// Stops when the Gram residual `|G v - lambda v|` falls below
/// `tol * lambda`. Starts from a fixed vector and restarts from a basis
/// vector if the iterate collapses to zero.
pub fn spectral_norm(m: &Matrix, tol: f64, max_iter: usize) -> Result<f64, AnalysisError> {
    let n = m.dim();
    if n == 0 {
        return Ok(0.0);
    }
    let mut starts = (0..=n).map(|s| {
        if s == 0 {
            (0..n).map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_75).fract()).collect::<Vec<_>>()
        } else {
            let mut e = vec![0.0; n];
            e[s - 1] = 1.0;
            e
        }
    });
    let mut v = starts.next().unwrap();
    let mut iter = 0;
    loop {
        let len = norm(&v);
        if len == 0.0 {
            match starts.next() {
                Some(s) => {
                    v = s;
                    continue;
                }
                None => return Ok(0.0),
            }
        }
        v.iter_mut().for_each(|x| *x /= len);
        let gv = m.apply_transpose(&m.apply(&v));
        let lambda: f64 = gv.iter().zip(&v).map(|(a, b)| a * b).sum();
        let residual = norm(&gv.iter().zip(&v).map(|(g, x)| g - lambda * x).collect::<Vec<_>>());
        if lambda <= 0.0 {
            // Start vector lies in the null space.
            match starts.next() {
                Some(s) => {
                    v = s;
                    continue;
                }
                None => return Ok(0.0),
            }
        }
        if residual <= tol * lambda {
            return Ok(lambda.sqrt());
        }
        iter += 1;
        if iter >= max_iter {
            return Err(AnalysisError::NotConverged(max_iter));
        }
        v = gv;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochOperator {
    pub index: usize,
    pub matrix: Matrix,
    pub spectral_norm: f64,
}

impl EpochOperator {
    pub fn from_events(index: usize, n: usize, events: &[EventRecord]) -> Result<Self, AnalysisError> {
        let matrix = compose_events(n, events);
        let spectral_norm = spectral_norm(&matrix, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER)?;
        Ok(EpochOperator { index, matrix, spectral_norm })
    }

    /// Norm on the sum-zero subspace, where every averaging run lives once
    /// the mean is subtracted.
    pub fn centered_norm(&self) -> Result<f64, AnalysisError> {
        spectral_norm(&self.matrix.centered(), DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER)
    }
}

/// Splits a recorded event log into epochs. Epoch `k` runs from just after
/// the `k`-th phase firing through the `(k+1)`-th firing inclusive.
pub fn epoch_operators_from_trace(
    graph: &PartitionedGraph,
    trace: &SimTrace,
) -> Result<Vec<EpochOperator>, AnalysisError> {
    let log = trace.event_log.as_ref().ok_or(AnalysisError::MissingEventLog)?;
    let fired: Vec<usize> = log
        .iter()
        .enumerate()
        .filter(|(_, e)| matches!(e.case, UpdateCase::CutTransfer { .. }))
        .map(|(i, _)| i)
        .collect();
    fired
        .windows(2)
        .enumerate()
        .map(|(k, w)| EpochOperator::from_events(k, graph.n(), &log[w[0] + 1..=w[1]]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStudyConfig {
    pub epochs: usize,
    pub seed: u64,
    pub stream: u64,
    /// Build and store each epoch's operator.
    pub with_operators: bool,
    /// Recenter and rescale to unit variance at the start of every epoch.
    /// Linear dynamics make variance ratios invariant under this, and it keeps
    /// long runs away from the floating-point floor.
    pub renormalize: bool,
    /// Simulated-time budget for the whole study.
    pub max_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub index: usize,
    pub start_time: f64,
    pub end_time: f64,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub var_start: f64,
    pub var_end: f64,
    pub mu_start: f64,
    pub mu_end: f64,
    pub operator: Option<EpochOperator>,
}

impl EpochRecord {
    /// `log(var_end / var_start) / 2`: per-epoch growth of the centered
    /// Euclidean norm.
    pub fn increment(&self) -> f64 {
        0.5 * (self.var_end / self.var_start).ln()
    }
}

/// Runs Algorithm A from `x0` and records consecutive epochs, starting at the
/// first firing of the phase. Stops early if the state reaches exact
/// consensus or the time budget runs out.
pub fn epoch_study(
    graph: &PartitionedGraph,
    rule: UpdateRule,
    x0: &[f64],
    cfg: &EpochStudyConfig,
) -> Result<Vec<EpochRecord>, AnalysisError> {
    let n1 = graph.n1();
    let mut sim = Simulation::new(graph, rule, x0.to_vec(), run_rng(cfg.seed, cfg.stream))?;
    let fires = |e: &EventRecord| matches!(e.case, UpdateCase::CutTransfer { .. });
    loop {
        if sim.time() > cfg.max_time {
            return Err(AnalysisError::NoEpochs);
        }
        if fires(&sim.advance()) {
            break;
        }
    }
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut events = Vec::new();
    while records.len() < cfg.epochs {
        if cfg.renormalize {
            let d = decompose_values(&sim.state().values, n1);
            if d.var == 0.0 {
                break;
            }
            sim.rescale(d.var.sqrt().recip());
        }
        let start = sim.state().values.clone();
        let start_time = sim.time();
        let d_start = decompose_values(&start, n1);
        if d_start.var == 0.0 {
            break;
        }
        events.clear();
        loop {
            if sim.time() > cfg.max_time {
                return if records.is_empty() { Err(AnalysisError::NoEpochs) } else { Ok(records) };
            }
            let ev = sim.advance();
            let done = fires(&ev);
            if cfg.with_operators {
                events.push(ev);
            }
            if done {
                break;
            }
        }
        let end = sim.state().values.clone();
        let d_end = decompose_values(&end, n1);
        let operator = if cfg.with_operators {
            Some(EpochOperator::from_events(records.len(), graph.n(), &events)?)
        } else {
            None
        };
        records.push(EpochRecord {
            index: records.len(),
            start_time,
            end_time: sim.time(),
            start,
            end,
            var_start: d_start.var,
            var_end: d_end.var,
            mu_start: d_start.mu,
            mu_end: d_end.mu,
            operator,
        });
        if d_end.var == 0.0 {
            break;
        }
    }
    Ok(records)
}
