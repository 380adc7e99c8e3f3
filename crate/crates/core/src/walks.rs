//! Random-walk tools behind the stochastic-dominance argument.
//!
//! The dominating walk has i.i.d. increments `+ln n` and `-(3/2) ln n`, each
//! with probability 1/2. Empirical per-epoch increments of the log norm are
//! compared against it by quantiles, and the sub-Gaussian tail of the simple
//! ±1 walk is checked exactly by binomial summation.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{run_rng, SimTrace};

/// Largest `n` for which [`simple_walk_tail`] sums binomial terms exactly.
pub const EXACT_TAIL_MAX_N: u32 = 40;

/// Minimum sample size for [`dominance_check`].
pub const MIN_DOMINANCE_SAMPLES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("need n >= 2, got {0}")]
    SizeTooSmall(f64),
    #[error("trace has no recorded epochs")]
    NoEpochs,
    #[error("need at least {min} increments, got {got}")]
    InsufficientSamples { min: usize, got: usize },
    #[error("quantile {0} outside (0, 1)")]
    BadQuantile(f64),
    #[error("tail constants must satisfy c >= 1 and beta > 0")]
    BadParams,
    #[error("need n >= 1 and s > 0")]
    BadTailArgs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkPath {
    pub increments: Vec<f64>,
    /// Prefix sums, starting with `0`.
    pub positions: Vec<f64>,
}

impl WalkPath {
    pub fn from_increments(increments: Vec<f64>) -> Self {
        let mut positions = Vec::with_capacity(increments.len() + 1);
        let mut acc = 0.0;
        positions.push(acc);
        for d in &increments {
            acc += d;
            positions.push(acc);
        }
        WalkPath { increments, positions }
    }

    pub fn end(&self) -> f64 {
        *self.positions.last().unwrap()
    }
}

/// The two atoms of the dominating increment: `(-(3/2) ln n, ln n)`.
pub fn dominating_atoms(n: f64) -> (f64, f64) {
    let l = n.ln();
    (-1.5 * l, l)
}

/// Mean and variance of one dominating increment.
pub fn dominating_moments(n: f64) -> (f64, f64) {
    let l = n.ln();
    (-0.25 * l, (1.25 * l).powi(2))
}

pub fn dominating_walk<R: Rng + ?Sized>(steps: usize, n: f64, rng: &mut R) -> Result<WalkPath, WalkError> {
    if !(n >= 2.0) {
        return Err(WalkError::SizeTooSmall(n));
    }
    let (low, high) = dominating_atoms(n);
    let increments = (0..steps).map(|_| if rng.random::<bool>() { high } else { low }).collect();
    Ok(WalkPath::from_increments(increments))
}

/// Halved log-variance increments between consecutive epoch samples of a
/// trace. The list ends at the first epoch where the variance is exactly zero.
pub fn empirical_increments(trace: &SimTrace) -> Result<Vec<f64>, WalkError> {
    let vars: Vec<f64> = trace.samples.iter().filter(|s| s.epoch).map(|s| s.var).collect();
    if vars.len() < 2 {
        return Err(WalkError::NoEpochs);
    }
    Ok(increments_from_variances(&vars))
}

pub fn increments_from_variances(vars: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for w in vars.windows(2) {
        if w[0] == 0.0 || w[1] == 0.0 {
            break;
        }
        out.push(0.5 * (w[1] / w[0]).ln());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileRow {
    pub q: f64,
    pub empirical: f64,
    pub dominating: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub samples: usize,
    pub n: f64,
    pub slack: f64,
    pub quantiles: Vec<QuantileRow>,
    /// Fraction of increments at or above `-(3/2) ln n`.
    pub low_atom_fraction: f64,
    pub max_increment: f64,
    pub cap: f64,
    pub cap_ok: bool,
    pub pass: bool,
}

/// Quantile of the dominating increment: the lower atom up to `q = 1/2`,
/// the upper atom beyond.
pub fn dominating_quantile(q: f64, n: f64) -> f64 {
    let (low, high) = dominating_atoms(n);
    if q <= 0.5 {
        low
    } else {
        high
    }
}

/// Inverse-ECDF quantile of sorted data.
fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Quantile dominance of `increments` by the two-point walk, with `slack`
/// added to the dominating side. Any increment above `ln n` fails outright.
pub fn dominance_check(
    increments: &[f64],
    n: f64,
    grid: &[f64],
    slack: f64,
) -> Result<DominanceReport, WalkError> {
    if increments.len() < MIN_DOMINANCE_SAMPLES {
        return Err(WalkError::InsufficientSamples { min: MIN_DOMINANCE_SAMPLES, got: increments.len() });
    }
    if let Some(&q) = grid.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
        return Err(WalkError::BadQuantile(q));
    }
    let mut sorted = increments.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantiles: Vec<QuantileRow> = grid
        .iter()
        .map(|&q| {
            let empirical = empirical_quantile(&sorted, q);
            let dominating = dominating_quantile(q, n);
            QuantileRow { q, empirical, dominating, ok: empirical <= dominating + slack }
        })
        .collect();
    let (low, cap) = dominating_atoms(n);
    let max_increment = *sorted.last().unwrap();
    let cap_ok = max_increment <= cap;
    let low_atom_fraction = sorted.iter().filter(|&&x| x >= low).count() as f64 / sorted.len() as f64;
    let pass = cap_ok && quantiles.iter().all(|r| r.ok);
    Ok(DominanceReport {
        samples: sorted.len(),
        n,
        slack,
        quantiles,
        low_atom_fraction,
        max_increment,
        cap,
        cap_ok,
        pass,
    })
}

/// Constants of the tail bound `P[S_n >= s sqrt(n)] <= c exp(-beta s^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBoundParams {
    pub c_const: f64,
    pub beta_const: f64,
}

impl Default for TailBoundParams {
    /// Hoeffding's constants for a ±1 walk.
    fn default() -> Self {
        TailBoundParams { c_const: 1.0, beta_const: 0.5 }
    }
}

impl TailBoundParams {
    pub fn new(c_const: f64, beta_const: f64) -> Result<Self, WalkError> {
        if !(c_const >= 1.0 && beta_const > 0.0) {
            return Err(WalkError::BadParams);
        }
        Ok(TailBoundParams { c_const, beta_const })
    }

    pub fn bound(&self, s: f64) -> f64 {
        self.c_const * (-self.beta_const * s * s).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TailProbability {
    Exact(f64),
    MonteCarlo { estimate: f64, std_err: f64 },
}

impl TailProbability {
    pub fn value(&self) -> f64 {
        match *self {
            TailProbability::Exact(p) => p,
            TailProbability::MonteCarlo { estimate, .. } => estimate,
        }
    }
}

/// `binom(n, k)` as an exact float for `n <= 40`.
fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k as u64 {
        acc = acc * (n as u64 - i) / (i + 1);
    }
    acc as f64
}

/// Paths with `k` up-steps end at `2k - n`; sums `binom(n, k)` over those at
/// or above `s sqrt(n)`.
fn exact_tail(n: u32, s: f64) -> f64 {
    let level = s * (n as f64).sqrt();
    let hits: f64 = (0..=n).filter(|&k| (2 * k as i64 - n as i64) as f64 >= level).map(|k| binomial(n, k)).sum();
    hits / 2f64.powi(n as i32)
}

/// Monte Carlo samples used above [`EXACT_TAIL_MAX_N`].
const TAIL_MC_SAMPLES: u64 = 200_000;

/// `P[S_n >= s sqrt(n)]` for the simple symmetric walk, with the bound value
/// under `params`. Exact for `n <= 40`, Monte Carlo with a standard error
/// beyond.
pub fn simple_walk_tail(
    n: u32,
    s: f64,
    params: &TailBoundParams,
    seed: u64,
) -> Result<(TailProbability, f64), WalkError> {
    if n == 0 || !(s > 0.0) {
        return Err(WalkError::BadTailArgs);
    }
    let bound = params.bound(s);
    if n <= EXACT_TAIL_MAX_N {
        return Ok((TailProbability::Exact(exact_tail(n, s)), bound));
    }
    let level = s * (n as f64).sqrt();
    let batches = 16u64;
    let hits: u64 = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = run_rng(seed, b);
            (0..TAIL_MC_SAMPLES / batches)
                .filter(|_| {
                    let mut pos: i64 = 0;
                    let mut left = n;
                    while left > 0 {
                        let take = left.min(64);
                        let bits: u64 = rng.random();
                        let ups = (bits & (u64::MAX >> (64 - take))).count_ones() as i64;
                        pos += 2 * ups - take as i64;
                        left -= take;
                    }
                    pos as f64 >= level
                })
                .count() as u64
        })
        .sum();
    let p = hits as f64 / TAIL_MC_SAMPLES as f64;
    let std_err = (p * (1.0 - p) / TAIL_MC_SAMPLES as f64).sqrt();
    Ok((TailProbability::MonteCarlo { estimate: p, std_err }, bound))
}

/// `c exp(-beta (t0 + 1) / 4) / (1 - exp(-beta / 4))`: the tail
/// `sum_{T > t0} c exp(-beta T / 4)` in closed form.
pub fn geometric_tail(params: &TailBoundParams, t0: u64) -> f64 {
    let r = (-params.beta_const / 4.0).exp();
    params.c_const * r.powf(t0 as f64 + 1.0) / (1.0 - r)
}

/// Smallest integer `t0` with `sum_{T > t0} c exp(-beta T / 4) < 1 - target`.
/// The default target is `1 - 1/e`. No dependence on the graph size.
pub fn t0_bound(params: &TailBoundParams, target: f64) -> u64 {
    let budget = 1.0 - target;
    let r = (-params.beta_const / 4.0).exp();
    // c r^(t0+1) / (1 - r) < budget  <=>  t0 + 1 > ln(c / (budget (1 - r))) / (beta / 4)
    let guess = ((params.c_const / (budget * (1.0 - r))).ln() / (params.beta_const / 4.0) - 1.0).floor();
    let mut t0 = if guess.is_finite() && guess > 0.0 { guess as u64 } else { 0 };
    while t0 > 0 && geometric_tail(params, t0 - 1) < budget {
        t0 -= 1;
    }
    while geometric_tail(params, t0) >= budget {
        t0 += 1;
    }
    t0
}

/// Default target probability `1 - 1/e`.
pub fn default_t0_target() -> f64 {
    1.0 - (-1.0f64).exp()
}
