//! Scaling sweeps over the barbell family.

use std::io::{self, Write};

use serde::Serialize;

use super::estimate::{
    estimate_t_av_adaptive, resolve_rule, suggested_horizon, EstimateConfig, X0Policy,
};
use super::AnalysisError;
use crate::graph::{EdgeClass, PartitionedGraph, Side};
use crate::rules::{GammaMode, RuleDescriptor, UpdateRule};

/// Graph family for sweeps; every member has `n1 = n2 = n / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutFamily {
    /// Two cliques joined by a single edge.
    Barbell,
    /// Two cliques joined by the perfect matching `(i, n1 + i)`.
    Matched,
}

pub fn family_graph(family: CutFamily, n: usize) -> Result<PartitionedGraph, AnalysisError> {
    let half = n / 2;
    match family {
        CutFamily::Barbell => Ok(PartitionedGraph::barbell(half, n - half)?),
        CutFamily::Matched => {
            let base = PartitionedGraph::barbell(half, half)?;
            let mut edges: Vec<(usize, usize, EdgeClass)> = base
                .edges_e1()
                .iter()
                .map(|&(u, v)| (u, v, EdgeClass::E1))
                .chain(base.edges_e2().iter().map(|&(u, v)| (u, v, EdgeClass::E2)))
                .collect();
            edges.extend((0..half).map(|i| (i, half + i, EdgeClass::E12)));
            let mut sides = vec![Side::One; half];
            sides.resize(2 * half, Side::Two);
            Ok(PartitionedGraph::from_edge_list(2 * half, &sides, &edges, (0, half))?.0)
        }
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|&(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub runs: usize,
    pub seed: u64,
    pub max_doublings: usize,
}

impl SweepOptions {
    pub fn new(runs: usize, seed: u64) -> Self {
        SweepOptions { runs, seed, max_doublings: 12 }
    }

    fn config(&self, point: usize, horizon: f64) -> EstimateConfig {
        let mut cfg = EstimateConfig::new(self.runs, horizon, self.seed);
        cfg.stream_offset = (point as u64) << 32;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundRow {
    pub n: usize,
    pub n1: usize,
    pub e12: usize,
    pub t_hat: f64,
    pub bound: f64,
    pub pass: bool,
    /// Mean cut-edge ticks up to each run's last exceedance.
    pub mean_cut_ticks: f64,
    /// `(1 - 1/e) n1 / 4`.
    pub required_cut_ticks: f64,
    pub horizon: f64,
    pub seed: u64,
    pub first_stream: u64,
    pub last_stream: u64,
}

/// Averaging time of a convex-class rule from the worst-cut start, against
/// the bound `0.1 n1 / |E12|`.
pub fn convex_lower_bound_sweep(
    ns: &[usize],
    family: CutFamily,
    rule: UpdateRule,
    opts: &SweepOptions,
) -> Result<Vec<LowerBoundRow>, AnalysisError> {
    ns.iter()
        .enumerate()
        .map(|(point, &n)| {
            let graph = family_graph(family, n)?;
            let cfg = opts.config(point, suggested_horizon(&graph, &rule));
            let est = estimate_t_av_adaptive(&graph, rule, X0Policy::WorstCut, &cfg, opts.max_doublings)?;
            let e12 = graph.edges_e12().len();
            let bound = 0.1 * graph.n1() as f64 / e12 as f64;
            Ok(LowerBoundRow {
                n,
                n1: graph.n1(),
                e12,
                t_hat: est.t_hat,
                bound,
                pass: est.t_hat >= bound,
                mean_cut_ticks: est.mean_cut_ticks(),
                required_cut_ticks: (1.0 - (-1.0f64).exp()) * graph.n1() as f64 / 4.0,
                horizon: est.horizon,
                seed: opts.seed,
                first_stream: cfg.stream_offset,
                last_stream: cfg.stream_offset + opts.runs as u64 - 1,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub n1: usize,
    pub period: u64,
    pub gamma: f64,
    pub t_van1: f64,
    pub t_van2: f64,
    /// Infinite when the rule never settled within the largest horizon.
    pub t_hat: f64,
    /// `t_hat / (ln n (T_van1 + T_van2) + 1)`.
    pub ratio: f64,
    /// Comparison estimate with `gamma = n1`. `None` when it was not
    /// requested; `Some(f64::INFINITY)` when it never settled within the
    /// largest horizon tried.
    pub n1_gamma_t_hat: Option<f64>,
    pub horizon: f64,
    pub seed: u64,
    pub first_stream: u64,
    pub last_stream: u64,
}

/// Averaging time of Algorithm A over the family, with its period derived
/// from estimated side averaging times.
pub fn alg_a_scaling_sweep(
    ns: &[usize],
    c: f64,
    gamma_mode: GammaMode,
    compare_n1: bool,
    opts: &SweepOptions,
) -> Result<Vec<ScalingRow>, AnalysisError> {
    let descriptor = RuleDescriptor::algorithm_a(None, gamma_mode, c)?;
    ns.iter()
        .enumerate()
        .map(|(point, &n)| {
            let graph = family_graph(CutFamily::Barbell, n)?;
            let resolved = resolve_rule(&graph, &descriptor, opts.runs, opts.seed ^ (n as u64))?;
            let (t1, t2) = resolved.t_van.expect("period was estimated");
            let UpdateRule::AlgorithmA { period, gamma } = resolved.rule else { unreachable!() };
            let cfg = opts.config(point, suggested_horizon(&graph, &resolved.rule));
            // A rule that never settles (gamma = n1 on equal sides) is
            // reported as censored rather than aborting the sweep.
            let (t_hat, horizon) =
                match estimate_t_av_adaptive(&graph, resolved.rule, X0Policy::WorstCut, &cfg, opts.max_doublings) {
                    Ok(est) => (est.t_hat, est.horizon),
                    Err(AnalysisError::HorizonTooShort { horizon, .. }) => (f64::INFINITY, horizon),
                    Err(e) => return Err(e),
                };
            let n1_gamma_t_hat = if compare_n1 {
                let literal = UpdateRule::AlgorithmA { period, gamma: graph.n1() as f64 };
                let literal_cfg = opts.config(point, horizon);
                match estimate_t_av_adaptive(&graph, literal, X0Policy::WorstCut, &literal_cfg, 3) {
                    Ok(e) => Some(e.t_hat),
                    Err(AnalysisError::HorizonTooShort { .. }) => Some(f64::INFINITY),
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            Ok(ScalingRow {
                n,
                n1: graph.n1(),
                period,
                gamma,
                t_van1: t1,
                t_van2: t2,
                t_hat,
                ratio: t_hat / ((n as f64).ln() * (t1 + t2) + 1.0),
                n1_gamma_t_hat,
                horizon,
                seed: opts.seed,
                first_stream: cfg.stream_offset,
                last_stream: cfg.stream_offset + opts.runs as u64 - 1,
            })
        })
        .collect()
}

/// Writes rows as CSV, followed by a `#` comment line carrying `summary`.
pub fn write_rows_csv<W: Write, R: Serialize>(out: W, rows: &[R], summary: &str) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(io::Error::other)?;
    }
    w.flush()?;
    let mut out = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    writeln!(out, "# {summary}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(0.75))).collect();
        assert!((loglog_slope(&pts) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn matched_family_cut_width() {
        let g = family_graph(CutFamily::Matched, 8).unwrap();
        assert_eq!(g.edges_e12().len(), 4);
        assert_eq!(g.cut_edge(), (3, 4));
        let b = family_graph(CutFamily::Barbell, 8).unwrap();
        assert_eq!(b.edges_e12().len(), 1);
    }

    #[test]
    fn vanilla_bound_on_small_barbell() {
        let rows = convex_lower_bound_sweep(&[16], CutFamily::Barbell, UpdateRule::Vanilla, &SweepOptions::new(100, 4))
            .unwrap();
        assert!(rows[0].t_hat >= 0.8, "{}", rows[0].t_hat);
        assert!(rows[0].pass);
        assert_eq!((rows[0].first_stream, rows[0].last_stream), (0, 99));
    }

    #[test]
    fn many_cut_edges_collapse_bound() {
        let rows = convex_lower_bound_sweep(&[16], CutFamily::Matched, UpdateRule::Vanilla, &SweepOptions::new(40, 5))
            .unwrap();
        assert_eq!(rows[0].bound, 0.1);
        assert!(rows[0].pass);
    }

    #[test]
    fn csv_rows_with_summary() {
        let rows = vec![LowerBoundRow {
            n: 16,
            n1: 8,
            e12: 1,
            t_hat: 9.5,
            bound: 0.8,
            pass: true,
            mean_cut_ticks: 7.0,
            required_cut_ticks: 1.26,
            horizon: 40.0,
            seed: 1,
            first_stream: 0,
            last_stream: 99,
        }];
        let mut out = Vec::new();
        write_rows_csv(&mut out, &rows, "slope=1.00").unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "n,n1,e12,t_hat,bound,pass,mean_cut_ticks,required_cut_ticks,horizon,seed,first_stream,last_stream\n\
             16,8,1,9.5,0.8,true,7.0,1.26,40.0,1,0,99\n# slope=1.00\n"
        );
    }
}
