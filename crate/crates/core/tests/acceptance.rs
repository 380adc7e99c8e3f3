//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use cutgossip::analysis::{
    alg_a_scaling_sweep, audit_run, check_sample, convex_lower_bound_sweep, epoch_study, estimate_t_av,
    initial_vector, loglog_slope, resolve_rule, spectral_norm, AuditReport, CutFamily, EpochRecord,
    EpochStudyConfig, EstimateConfig, LowerBoundRow, ScalingRow, SweepOptions, X0Policy, DEFAULT_NORM_MAX_ITER,
    DEFAULT_NORM_TOL,
};
use cutgossip::engine::{run_rng, Simulation};
use cutgossip::graph::{PartitionedGraph, Topology};
use cutgossip::rules::{GammaMode, RuleDescriptor, UpdateRule, DEFAULT_C};
use cutgossip::walks::{dominance_check, simple_walk_tail, TailBoundParams, TailProbability};

const SIZES: [usize; 4] = [16, 32, 64, 128];
const SWEEP_RUNS: usize = 100;
const SWEEP_SEED: u64 = 20_240_601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn tag(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn fmt_points(points: &[(usize, f64)]) -> String {
    points.iter().map(|(n, t)| format!("{n}:{t:.3}")).collect::<Vec<_>>().join(" ")
}

fn criterion_1(rows: &[LowerBoundRow]) -> Verdict {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.t_hat)).collect();
    let slope = loglog_slope(&pts);
    let bounds_ok = rows.iter().all(|r| r.t_hat >= 0.1 * r.n1 as f64);
    verdict(
        bounds_ok && slope >= 0.7,
        format!(
            "T_av {} | all >= 0.1 n1: {bounds_ok} | slope {slope:.3} (need >= 0.7)",
            fmt_points(&rows.iter().map(|r| (r.n, r.t_hat)).collect::<Vec<_>>())
        ),
    )
}

fn criterion_2(alg: &[ScalingRow], vanilla: &[LowerBoundRow]) -> Verdict {
    let pts: Vec<(f64, f64)> = alg.iter().map(|r| (r.n as f64, r.t_hat)).collect();
    let slope = loglog_slope(&pts);
    let speedup = vanilla.last().unwrap().t_hat / alg.last().unwrap().t_hat;
    let periods: Vec<String> = alg.iter().map(|r| format!("{}:P={}", r.n, r.period)).collect();
    verdict(
        slope <= 0.4 && speedup >= 5.0,
        format!(
            "T_av {} | {} | slope {slope:.3} (need <= 0.4) | vanilla/algA at 128 = {speedup:.2} (need >= 5)",
            fmt_points(&alg.iter().map(|r| (r.n, r.t_hat)).collect::<Vec<_>>()),
            periods.join(" ")
        ),
    )
}

fn criterion_3() -> Verdict {
    let g = PartitionedGraph::barbell(1, 1).unwrap();
    let est = estimate_t_av(&g, UpdateRule::Vanilla, X0Policy::WorstCut, &EstimateConfig::new(10_000, 20.0, 3))
        .unwrap();
    verdict((est.t_hat - 1.0).abs() <= 0.15, format!("t_hat {:.4} (need 1.0 +/- 0.15)", est.t_hat))
}

fn criterion_4() -> Verdict {
    let g = PartitionedGraph::barbell(16, 16).unwrap();
    let x0 = initial_vector(&g, X0Policy::WorstCut, 0, 0);
    let alg = resolve_rule(&g, &RuleDescriptor::algorithm_a(None, GammaMode::Balanced, DEFAULT_C).unwrap(), 100, 4)
        .unwrap()
        .rule;
    let mut parts = Vec::new();
    let mut pass = true;
    for rule in [UpdateRule::Vanilla, UpdateRule::Convex { alpha: 0.75 }, alg] {
        let r = audit_run(&g, rule, &x0, 1_000_000, 1_000, 41).unwrap();
        let ok = r.max_rel_sum_drift <= 1e-9 && r.locality_violations == 0;
        pass &= ok;
        parts.push(format!(
            "{rule}: drift {:.2e}, off-edge changes {} ({})",
            r.max_rel_sum_drift,
            r.locality_violations,
            tag(ok)
        ));
    }
    verdict(pass, parts.join(" | "))
}

/// Replays every run behind the Algorithm A sweep and checks each state
/// after every event up to the estimation horizon.
fn criterion_5(alg: &[ScalingRow]) -> Verdict {
    let mut report = AuditReport::default();
    for row in alg {
        let g = PartitionedGraph::barbell(row.n1, row.n - row.n1).unwrap();
        let rule = UpdateRule::AlgorithmA { period: row.period, gamma: row.gamma };
        let x0 = initial_vector(&g, X0Policy::WorstCut, 0, row.seed);
        for stream in row.first_stream..=row.last_stream {
            let mut sim = Simulation::new(&g, rule, x0.clone(), run_rng(row.seed, stream)).unwrap();
            check_sample(&sim.state().values, g.n1(), &mut report);
            while sim.time() < row.horizon {
                sim.advance();
                check_sample(&sim.state().values, g.n1(), &mut report);
            }
        }
    }
    let identity_ok = report.max_identity_rel_err <= 1e-9;
    let pass = identity_ok && report.variance_bound_violations == 0 && report.bridge_violations == 0;
    verdict(
        pass,
        format!(
            "{} states | identity max rel err {:.2e} | var >= n1 mu1^2/n violations {} | bridge violations {}",
            report.samples, report.max_identity_rel_err, report.variance_bound_violations, report.bridge_violations
        ),
    )
}

fn vec_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn criterion_6(records: &[EpochRecord], gamma: f64, n: usize) -> Verdict {
    let cap = 1f64.max(2.0 * gamma - 1.0);
    let mut worst_norm = 0.0f64;
    let mut worst_err = 0.0f64;
    let mut big_full = 0usize;
    let mut big_centered = 0usize;
    let mut min_centered = f64::INFINITY;
    let threshold = (n as f64).powi(-3);
    for rec in records {
        let op = rec.operator.as_ref().expect("operators recorded");
        worst_norm = worst_norm.max(op.spectral_norm);
        let image = op.matrix.apply(&rec.start);
        let diff: Vec<f64> = image.iter().zip(&rec.end).map(|(a, b)| a - b).collect();
        worst_err = worst_err.max(vec_norm(&diff) / vec_norm(&rec.start).max(vec_norm(&rec.end)));
        if op.spectral_norm.powi(2) >= threshold {
            big_full += 1;
        }
        let c = spectral_norm(&op.matrix.centered(), DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER).unwrap();
        min_centered = min_centered.min(c);
        if c * c >= threshold {
            big_centered += 1;
        }
    }
    let k = records.len();
    let count_ok = k >= 200;
    let norm_ok = worst_norm <= cap * (1.0 + 1e-9) && cap <= n as f64;
    let faithful = worst_err <= 1e-9;
    let frac_full = big_full as f64 / k as f64;
    let frac_centered = big_centered as f64 / k as f64;
    let fraction_ok = frac_centered <= 0.6;
    verdict(
        count_ok && norm_ok && faithful && fraction_ok,
        format!(
            "{k} epochs | max ||A_k|| {worst_norm:.4} <= max(1, 2g-1) = {cap:.4} <= n: {} | reproduction err {worst_err:.2e}: {} \
             | fraction ||A_k||^2 >= 1/n^3: {frac_centered:.3} on sum-zero vectors (min norm {min_centered:.3}), \
             {frac_full:.3} on all vectors, need <= 0.6: {}",
            tag(norm_ok),
            tag(faithful),
            tag(fraction_ok)
        ),
    )
}

fn criterion_7(records: &[EpochRecord], n: usize) -> Verdict {
    let incs: Vec<f64> = records.iter().map(EpochRecord::increment).collect();
    let n = n as f64;
    let grid: Vec<f64> = (1..20).map(|i| i as f64 * 0.05).collect();
    let r = dominance_check(&incs, n, &grid, 0.1 * n.ln()).unwrap();
    let worst = r
        .quantiles
        .iter()
        .map(|q| q.empirical - q.dominating)
        .fold(f64::NEG_INFINITY, f64::max);
    verdict(
        r.pass,
        format!(
            "{} increments | max increment {:.3} vs cap ln n = {:.3} | worst quantile excess {worst:.3} vs slack {:.3}",
            r.samples, r.max_increment, r.cap, r.slack
        ),
    )
}

/// `P[S_n >= level]` from integer binomial counts.
fn tail_by_counts(n: u32, s: f64) -> f64 {
    let level = s * (n as f64).sqrt();
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = vec![1u128; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    let hits: u128 = (0..=n).filter(|&k| (2 * k as i64 - n as i64) as f64 >= level).map(|k| row[k as usize]).sum();
    hits as f64 / (1u128 << n) as f64
}

fn criterion_8() -> Verdict {
    let params = TailBoundParams::new(1.0, 0.5).unwrap();
    let mut violations = 0;
    let mut mismatches = 0;
    let mut cases = 0;
    for n in 1..=30u32 {
        for s in [0.5, 1.0, 1.5, 2.0, 3.0] {
            let (p, bound) = simple_walk_tail(n, s, &params, 0).unwrap();
            let TailProbability::Exact(p) = p else { panic!("not exact") };
            let oracle = tail_by_counts(n, s);
            cases += 1;
            if (p - oracle).abs() > 1e-15 {
                mismatches += 1;
            }
            if oracle > bound {
                violations += 1;
            }
        }
    }
    let spot = simple_walk_tail(4, 1.0, &params, 0).unwrap().0.value();
    let spot_ok = spot == 5.0 / 16.0;
    verdict(
        violations == 0 && mismatches == 0 && spot_ok,
        format!("{cases} cases | violations {violations} | oracle mismatches {mismatches} | P[S_4 >= 2] = {spot}"),
    )
}

/// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
fn ks_p_value(d: f64, samples: usize) -> f64 {
    let sn = (samples as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let sum: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    (2.0 * sum).clamp(0.0, 1.0)
}

fn criterion_9() -> Verdict {
    let g = PartitionedGraph::barbell(3, 4).unwrap();
    let m = g.edge_count();
    let samples = 10_000;
    let mut sim = Simulation::new(&g, UpdateRule::Vanilla, vec![0.0; g.n()], run_rng(9, 0)).unwrap();
    let mut gaps = Vec::with_capacity(samples);
    let mut counts = vec![0usize; m];
    let mut last = 0.0;
    for _ in 0..samples {
        let ev = sim.advance();
        gaps.push(ev.time - last);
        last = ev.time;
        counts[ev.edge] += 1;
    }
    gaps.sort_by(f64::total_cmp);
    let rate = m as f64;
    let d = gaps
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = 1.0 - (-rate * x).exp();
            (cdf - i as f64 / samples as f64).abs().max((i + 1) as f64 / samples as f64 - cdf)
        })
        .fold(0.0, f64::max);
    let p = ks_p_value(d, samples);
    let mean = samples as f64 / m as f64;
    let sd = (samples as f64 * (1.0 / m as f64) * (1.0 - 1.0 / m as f64)).sqrt();
    let worst_z = counts.iter().map(|&c| (c as f64 - mean).abs() / sd).fold(0.0, f64::max);
    verdict(
        m == 10 && p >= 1e-3 && worst_z <= 3.0,
        format!("{m} edges | KS D {d:.4}, p {p:.3} (need >= 1e-3) | worst edge count {worst_z:.2} sd (need <= 3)"),
    )
}

fn criterion_10() -> Verdict {
    let g = PartitionedGraph::barbell(16, 16).unwrap();
    let desc = RuleDescriptor::algorithm_a(None, GammaMode::N1, DEFAULT_C).unwrap();
    let rule = resolve_rule(&g, &desc, 100, 10).unwrap().rule;
    let x0 = initial_vector(&g, X0Policy::WorstCut, 0, 0);
    let runs = 50u64;
    let mut ratios: Vec<f64> = (0..runs)
        .map(|stream| {
            let recs = epoch_study(
                &g,
                rule,
                &x0,
                &EpochStudyConfig {
                    epochs: 20,
                    seed: 10,
                    stream,
                    with_operators: false,
                    renormalize: false,
                    max_time: f64::INFINITY,
                },
            )
            .unwrap();
            assert_eq!(recs.len(), 20);
            recs[19].mu_end / recs[0].mu_end
        })
        .collect();
    ratios.sort_by(f64::total_cmp);
    let median = 0.5 * (ratios[24] + ratios[25]);
    verdict(median >= 0.5, format!("{rule} | median |mu| ratio epoch 20 / epoch 1 = {median:.3} over {runs} runs (need >= 0.5)"))
}

fn main() -> ExitCode {
    let mut results: Vec<(String, Verdict)> = Vec::new();
    let mut report = |id: &str, start: Instant, v: Verdict| {
        println!("criterion {id}: {} [{:.1}s] {}", tag(v.pass), start.elapsed().as_secs_f64(), v.detail);
        results.push((id.to_string(), v));
    };

    let t = Instant::now();
    let vanilla =
        convex_lower_bound_sweep(&SIZES, CutFamily::Barbell, UpdateRule::Vanilla, &SweepOptions::new(SWEEP_RUNS, SWEEP_SEED))
            .unwrap();
    report("1", t, criterion_1(&vanilla));

    let t = Instant::now();
    let alg = alg_a_scaling_sweep(&SIZES, DEFAULT_C, GammaMode::Balanced, false, &SweepOptions::new(SWEEP_RUNS, SWEEP_SEED))
        .unwrap();
    report("2", t, criterion_2(&alg, &vanilla));

    let t = Instant::now();
    report("3", t, criterion_3());

    let t = Instant::now();
    report("4", t, criterion_4());

    let t = Instant::now();
    report("5", t, criterion_5(&alg));

    let t = Instant::now();
    let g = PartitionedGraph::barbell(16, 16).unwrap();
    let resolved = resolve_rule(&g, &RuleDescriptor::algorithm_a(None, GammaMode::Balanced, DEFAULT_C).unwrap(), 100, 6)
        .unwrap()
        .rule;
    let gamma = resolved.gamma().unwrap();
    let records = epoch_study(
        &g,
        resolved,
        &initial_vector(&g, X0Policy::WorstCut, 0, 0),
        &EpochStudyConfig {
            epochs: 200,
            seed: 6,
            stream: 0,
            with_operators: true,
            renormalize: true,
            max_time: f64::INFINITY,
        },
    )
    .unwrap();
    report("6", t, criterion_6(&records, gamma, g.n()));

    let t = Instant::now();
    report("7", t, criterion_7(&records, g.n()));

    let t = Instant::now();
    report("8", t, criterion_8());

    let t = Instant::now();
    report("9", t, criterion_9());

    let t = Instant::now();
    report("10", t, criterion_10());

    let failed: Vec<&str> = results.iter().filter(|(_, v)| !v.pass).map(|(id, _)| id.as_str()).collect();
    println!("acceptance: {}/{} PASS", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
