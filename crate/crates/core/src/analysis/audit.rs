//! Event-by-event invariant audit of a single run.

use serde::Serialize;

use super::{decompose_values, AnalysisError};
use crate::engine::{run_rng, Simulation};
use crate::graph::{EdgeRole, PartitionedGraph, Topology};
use crate::rules::{UpdateCase, UpdateRule};

/// Relative tolerance for the decomposition identity.
pub const IDENTITY_REL_TOL: f64 = 1e-9;
/// Cumulative sum drift allowed, relative to the value scale of the run.
pub const DRIFT_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub events: u64,
    pub samples: u64,
    /// Largest `|sum(x) - sum(x0)|` seen, divided by the larger of the
    /// initial value range and the peak `|x|` of the run.
    pub max_rel_sum_drift: f64,
    /// Largest per-event change of the sum in units of `n eps max|x|`.
    pub max_event_drift_units: f64,
    /// Events that altered a coordinate off the ticking edge.
    pub locality_violations: u64,
    pub identity_violations: u64,
    pub max_identity_rel_err: f64,
    /// Samples with `var < n1 mu1^2 / n`.
    pub variance_bound_violations: u64,
    /// Samples violating `max(|x_n1 - mu1|, |x_n1+1 - mu2|) <= sqrt(n) sigma`.
    pub bridge_violations: u64,
    /// Convex class: a run minimum that decreased or maximum that increased.
    pub range_violations: u64,
    /// Convex class with `x0` in `[-1, 1]`: cut ticks moving the side-one
    /// mean by more than `2 / n1`.
    pub cut_drift_violations: u64,
    /// Algorithm A: side means moved on an event other than a phase firing.
    pub mean_violations: u64,
    /// Algorithm A: `max|x|` grew off-phase or by more than `2 gamma + 1`.
    pub expansion_violations: u64,
    pub pass: bool,
}

/// Runs `events` events from `x0`, checking every invariant after every
/// event; decomposition bounds are checked every `sample_every` events.
pub fn audit_run(
    graph: &PartitionedGraph,
    rule: UpdateRule,
    x0: &[f64],
    events: u64,
    sample_every: u64,
    seed: u64,
) -> Result<AuditReport, AnalysisError> {
    let n = graph.n();
    let n1 = graph.n1();
    let eps = f64::EPSILON;
    let mut sim = Simulation::new(graph, rule, x0.to_vec(), run_rng(seed, 0))?;
    let mut scale = {
        let (lo, hi) = min_max(x0);
        (hi - lo).max(f64::MIN_POSITIVE)
    };
    let in_unit_box = x0.iter().all(|x| x.abs() <= 1.0);
    let mut report = AuditReport::default();
    let mut prev = x0.to_vec();
    let (mut lo, mut hi) = min_max(x0);
    let mut prev_sum: f64 = prev.iter().sum();
    let mut prev_side = side_sums(&prev, n1);
    let mut prev_absmax = prev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let initial_sum = sim.state().initial_sum;

    check_sample(&prev, n1, &mut report);
    for event in 1..=events {
        let rec = sim.advance();
        let cur = &sim.state().values;
        let (u, v) = rec.endpoints;

        let touched_other = cur.iter().zip(&prev).enumerate().any(|(i, (a, b))| i != u && i != v && a.to_bits() != b.to_bits());
        if touched_other {
            report.locality_violations += 1;
        }

        let sum: f64 = cur.iter().sum();
        let absmax = cur.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let unit = n as f64 * eps * absmax.max(prev_absmax).max(f64::MIN_POSITIVE);
        report.max_event_drift_units = report.max_event_drift_units.max((sum - prev_sum).abs() / unit);
        scale = scale.max(absmax);
        report.max_rel_sum_drift = report.max_rel_sum_drift.max((sum - initial_sum).abs() / scale);

        let side = side_sums(cur, n1);
        let fired = matches!(rec.case, UpdateCase::CutTransfer { .. });
        if rule.is_convex_class() {
            let (l, h) = min_max(cur);
            if l < lo || h > hi {
                report.range_violations += 1;
            }
            lo = l;
            hi = h;
            let role = graph.role(rec.edge);
            if in_unit_box && matches!(role, EdgeRole::Cut | EdgeRole::DesignatedCut) {
                let dy = (side.0 - prev_side.0).abs() / n1 as f64;
                if dy > 2.0 / n1 as f64 * (1.0 + 1e-12) {
                    report.cut_drift_violations += 1;
                }
            }
        } else {
            let tol = 4.0 * n as f64 * eps * absmax.max(prev_absmax);
            if !fired && ((side.0 - prev_side.0).abs() > tol || (side.1 - prev_side.1).abs() > tol) {
                report.mean_violations += 1;
            }
            let gamma = rule.gamma().unwrap_or(1.0);
            let grew = absmax > prev_absmax * (1.0 + 4.0 * eps);
            if grew && (!fired || absmax > (2.0 * gamma + 1.0) * prev_absmax * (1.0 + 1e-12)) {
                report.expansion_violations += 1;
            }
        }

        if event % sample_every == 0 || event == events {
            check_sample(cur, n1, &mut report);
        }
        prev.clone_from(cur);
        prev_sum = sum;
        prev_side = side;
        prev_absmax = absmax;
    }
    report.events = events;
    report.pass = report.max_rel_sum_drift <= DRIFT_REL_TOL
        && report.max_event_drift_units <= 4.0
        && report.locality_violations == 0
        && report.identity_violations == 0
        && report.variance_bound_violations == 0
        && report.bridge_violations == 0
        && report.range_violations == 0
        && report.cut_drift_violations == 0
        && report.mean_violations == 0
        && report.expansion_violations == 0;
    Ok(report)
}

/// Decomposition identity, variance lower bound and bridge inequality on one
/// state. Returns the relative identity error.
pub fn check_sample(values: &[f64], n1: usize, report: &mut AuditReport) -> f64 {
    let n = values.len();
    let d = decompose_values(values, n1);
    let n2 = n - n1;
    let rhs = d.sigma.powi(2) + (n1 as f64 * d.mu1.powi(2) + n2 as f64 * d.mu2.powi(2)) / n as f64;
    let avg = values.iter().sum::<f64>() / n as f64;
    let absmax = values.iter().fold(0.0f64, |m, x| m.max((x - avg).abs()));
    let floor = 8.0 * n as f64 * f64::EPSILON * absmax * absmax;
    let err = (d.var - rhs).abs();
    let rel = if d.var > 0.0 { err / d.var } else { 0.0 };
    if err > IDENTITY_REL_TOL * d.var && err > floor {
        report.identity_violations += 1;
    }
    report.max_identity_rel_err = report.max_identity_rel_err.max(rel);
    if d.var + floor < n1 as f64 * d.mu1.powi(2) / n as f64 {
        report.variance_bound_violations += 1;
    }
    let bridge = (values[n1 - 1] - avg - d.mu1).abs().max(if n2 > 0 {
        (values[n1] - avg - d.mu2).abs()
    } else {
        0.0
    });
    if bridge > (n as f64).sqrt() * d.sigma * (1.0 + 1e-12) + floor.sqrt() {
        report.bridge_violations += 1;
    }
    report.samples += 1;
    rel
}

fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)))
}

fn side_sums(x: &[f64], n1: usize) -> (f64, f64) {
    (x[..n1].iter().sum(), x[n1..].iter().sum())
}
