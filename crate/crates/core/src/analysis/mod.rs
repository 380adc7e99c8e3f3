//! Variance decomposition, averaging-time estimation, epoch operators and
//! the two scaling sweeps, plus an event-level invariant audit.

mod audit;
mod epochs;
mod estimate;
mod sweep;

pub use audit::{audit_run, check_sample, AuditReport, DRIFT_REL_TOL, IDENTITY_REL_TOL};
pub use epochs::{
    compose_events, epoch_operators_from_trace, epoch_study, spectral_norm, EpochOperator,
    EpochRecord, EpochStudyConfig, Matrix, DEFAULT_NORM_MAX_ITER, DEFAULT_NORM_TOL,
};
pub use estimate::{
    estimate_from_outcomes, estimate_t_av, estimate_t_av_adaptive, estimate_t_van,
    estimate_t_van_adaptive, initial_vector, resolve_rule, suggested_horizon, AveragingTimeEstimate,
    EstimateConfig, ResolvedRule, RunOutcome, X0Policy, MIN_RUNS,
};
pub use sweep::{
    alg_a_scaling_sweep, convex_lower_bound_sweep, family_graph, loglog_slope, write_rows_csv,
    CutFamily, LowerBoundRow, ScalingRow, SweepOptions,
};

use thiserror::Error;

use crate::engine::{SimError, StateVector};
use crate::graph::{GraphError, PartitionedGraph};
use crate::rules::RuleError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {min} runs, got {got}")]
    TooFewRuns { min: usize, got: usize },
    #[error(
        "horizon {horizon} too short: only {adequate_fraction:.3} of runs settle before horizon/2"
    )]
    HorizonTooShort { horizon: f64, adequate_fraction: f64 },
    #[error("initial vector has zero variance")]
    DegenerateInitial,
    #[error("trace has no event log")]
    MissingEventLog,
    #[error("no epochs recorded")]
    NoEpochs,
    #[error("power iteration did not converge in {0} iterations")]
    NotConverged(usize),
    #[error("subgraph is not connected")]
    DisconnectedSubgraph,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Split of the variance into side means and within-side spread.
///
/// All quantities are taken about the global average `x_av`, so
/// `var = sigma^2 + (n1 mu1^2 + n2 mu2^2) / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub mu1: f64,
    pub mu2: f64,
    /// `|mu1| + |mu2|`.
    pub mu: f64,
    pub sigma: f64,
    pub var: f64,
}

pub fn decompose(state: &StateVector, graph: &PartitionedGraph) -> Decomposition {
    decompose_values(&state.values, graph.n1())
}

/// Decomposition of `values` with side one `0..n1`. An empty second side
/// contributes `mu2 = 0`.
pub fn decompose_values(values: &[f64], n1: usize) -> Decomposition {
    let n = values.len();
    let avg = values.iter().sum::<f64>() / n as f64;
    let side_mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().map(|x| x - avg).sum::<f64>() / xs.len() as f64
        }
    };
    let (one, two) = values.split_at(n1);
    let mu1 = side_mean(one);
    let mu2 = side_mean(two);
    let spread = one.iter().map(|x| (x - avg - mu1).powi(2)).sum::<f64>()
        + two.iter().map(|x| (x - avg - mu2).powi(2)).sum::<f64>();
    let var = values.iter().map(|x| (x - avg).powi(2)).sum::<f64>() / n as f64;
    Decomposition { mu1, mu2, mu: mu1.abs() + mu2.abs(), sigma: (spread / n as f64).sqrt(), var }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_sides_at_their_means() {
        let d = decompose_values(&[1.0, 1.0, -1.0, -1.0], 2);
        assert_eq!((d.mu1, d.mu2, d.sigma, d.var), (1.0, -1.0, 0.0, 1.0));
        assert_eq!(d.mu, 2.0);
    }

    #[test]
    fn hand_worked_decomposition() {
        let d = decompose_values(&[2.0, 0.0, -1.0, -1.0], 2);
        assert_eq!((d.mu1, d.mu2), (1.0, -1.0));
        assert!((d.sigma.powi(2) - 0.5).abs() < 1e-15);
        assert_eq!(d.var, 1.5);
        // brute-force variance
        let brute = [2.0f64, 0.0, -1.0, -1.0].iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert_eq!(brute, d.var);
    }

    #[test]
    fn constant_vector() {
        let d = decompose_values(&[3.5; 6], 3);
        assert_eq!((d.mu1, d.mu2, d.sigma, d.var), (0.0, 0.0, 0.0, 0.0));
    }

    proptest! {
        #[test]
        fn identity_holds(values in prop::collection::vec(-100.0f64..100.0, 2..40), split in 0.0f64..1.0) {
            let n = values.len();
            let n1 = ((split * (n - 1) as f64) as usize).max(1);
            let d = decompose_values(&values, n1);
            let n2 = n - n1;
            let rhs = d.sigma.powi(2) + (n1 as f64 * d.mu1.powi(2) + n2 as f64 * d.mu2.powi(2)) / n as f64;
            let scale = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            prop_assert!((d.var - rhs).abs() <= 8.0 * n as f64 * f64::EPSILON * scale * scale);
            prop_assert!(d.var + 1e-12 >= n1 as f64 * d.mu1.powi(2) / n as f64);
            prop_assert!(d.sigma >= 0.0 && d.mu >= 0.0);
        }
    }
}
