//! Pairwise update rules: vanilla averaging, the convex family, and the
//! periodic non-convex transfer across the designated cut edge.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::graph::{EdgeRole, PartitionedGraph};

/// Default multiplier in the phase period `ceil(C * (T1 + T2) * ln n)`.
pub const DEFAULT_C: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("convex weight {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("cut coefficient must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("phase period must be at least 1")]
    ZeroPeriod,
    #[error("period multiplier C must be positive, got {0}")]
    NonPositiveC(f64),
    #[error("cannot parse rule {text:?}: {reason}")]
    Parse { text: String, reason: String },
}

/// How the cut coefficient is chosen for the non-convex phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaMode {
    /// `gamma = n1`, the literal coefficient.
    N1,
    /// `gamma = n1 * n2 / n`; zeroes the side-mean imbalance exactly when both
    /// sides sit at their means.
    Balanced,
    Explicit(f64),
}

impl fmt::Display for GammaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaMode::N1 => f.write_str("n1"),
            GammaMode::Balanced => f.write_str("balanced"),
            GammaMode::Explicit(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for GammaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n1" | "paper" => Ok(GammaMode::N1),
            "balanced" => Ok(GammaMode::Balanced),
            other => other
                .parse::<f64>()
                .map(GammaMode::Explicit)
                .map_err(|_| format!("unknown gamma mode {other:?}")),
        }
    }
}

/// Which rule family governs a run, before graph-dependent resolution.
///
/// Text forms: `vanilla`, `convex:a=0.75`, `algA:P=20,gamma=balanced,C=4`.
/// For Algorithm A the period may be omitted, in which case it is derived
/// from estimated side averaging times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleDescriptor {
    Vanilla,
    Convex { alpha: f64 },
    AlgorithmA { period: Option<u64>, gamma: GammaMode, c: f64 },
}

impl RuleDescriptor {
    pub fn convex(alpha: f64) -> Result<Self, RuleError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(RuleError::AlphaOutOfRange(alpha));
        }
        Ok(RuleDescriptor::Convex { alpha })
    }

    pub fn algorithm_a(period: Option<u64>, gamma: GammaMode, c: f64) -> Result<Self, RuleError> {
        if period == Some(0) {
            return Err(RuleError::ZeroPeriod);
        }
        if !(c > 0.0) {
            return Err(RuleError::NonPositiveC(c));
        }
        if let GammaMode::Explicit(v) = gamma {
            if !(v > 0.0) {
                return Err(RuleError::NonPositiveGamma(v));
            }
        }
        Ok(RuleDescriptor::AlgorithmA { period, gamma, c })
    }

    /// True for rules in the convex class, under which the variance never
    /// increases.
    pub fn is_convex_class(&self) -> bool {
        !matches!(self, RuleDescriptor::AlgorithmA { .. })
    }
}

impl fmt::Display for RuleDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleDescriptor::Vanilla => f.write_str("vanilla"),
            RuleDescriptor::Convex { alpha } => write!(f, "convex:a={alpha}"),
            RuleDescriptor::AlgorithmA { period, gamma, c } => {
                f.write_str("algA:")?;
                if let Some(p) = period {
                    write!(f, "P={p},")?;
                }
                write!(f, "gamma={gamma},C={c}")
            }
        }
    }
}

impl FromStr for RuleDescriptor {
    type Err = RuleError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let fail = |reason: &str| RuleError::Parse { text: text.to_string(), reason: reason.into() };
        let (kind, args) = match text.split_once(':') {
            Some((k, a)) => (k, a),
            None => (text, ""),
        };
        let mut pairs = Vec::new();
        for item in args.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| fail("expected key=value"))?;
            pairs.push((k.trim(), v.trim()));
        }
        let number = |v: &str| v.parse::<f64>().map_err(|_| fail(&format!("bad number {v:?}")));
        match kind {
            "vanilla" if pairs.is_empty() => Ok(RuleDescriptor::Vanilla),
            "vanilla" => Err(fail("vanilla takes no parameters")),
            "convex" => {
                let mut alpha = None;
                for (k, v) in pairs {
                    match k {
                        "a" | "alpha" => alpha = Some(number(v)?),
                        _ => return Err(fail(&format!("unknown key {k:?}"))),
                    }
                }
                RuleDescriptor::convex(alpha.ok_or_else(|| fail("missing a=<alpha>"))?)
            }
            "algA" => {
                let (mut period, mut gamma, mut c) = (None, GammaMode::Balanced, DEFAULT_C);
                for (k, v) in pairs {
                    match k {
                        "P" => {
                            period = Some(v.parse::<u64>().map_err(|_| fail("bad period"))?)
                        }
                        "gamma" => gamma = v.parse().map_err(|e: String| fail(&e))?,
                        "C" => c = number(v)?,
                        _ => return Err(fail(&format!("unknown key {k:?}"))),
                    }
                }
                RuleDescriptor::algorithm_a(period, gamma, c)
            }
            _ => Err(fail("unknown rule kind")),
        }
    }
}

/// A rule with every graph-dependent parameter fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule {
    Vanilla,
    Convex { alpha: f64 },
    AlgorithmA { period: u64, gamma: f64 },
}

/// The update actually applied on one clock tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateCase {
    Average,
    Convex { alpha: f64 },
    CutTransfer { gamma: f64 },
    Idle,
}

impl UpdateCase {
    /// The symmetric 2x2 map `[[a, b], [b, a]]` this case applies to the
    /// endpoint pair, returned as `(a, b)`.
    pub fn pair_coefficients(&self) -> (f64, f64) {
        match *self {
            UpdateCase::Average => (0.5, 0.5),
            UpdateCase::Convex { alpha } => (alpha, 1.0 - alpha),
            UpdateCase::CutTransfer { gamma } => (1.0 - gamma, gamma),
            UpdateCase::Idle => (1.0, 0.0),
        }
    }

    pub fn apply(&self, xi: f64, xj: f64) -> (f64, f64) {
        match *self {
            UpdateCase::Average => vanilla_update(xi, xj),
            UpdateCase::Convex { alpha } => convex_update(xi, xj, alpha),
            UpdateCase::CutTransfer { gamma } => nonconvex_cut_update(xi, xj, gamma),
            UpdateCase::Idle => (xi, xj),
        }
    }
}

/// Both endpoints take their arithmetic mean.
pub fn vanilla_update(xi: f64, xj: f64) -> (f64, f64) {
    let m = 0.5 * (xi + xj);
    (m, m)
}

/// `xi' = alpha xi + (1 - alpha) xj`, symmetrically for `xj`.
///
/// Computed as an antisymmetric transfer clamped to the input interval, so the
/// outputs never leave `[min(xi, xj), max(xi, xj)]`.
pub fn convex_update(xi: f64, xj: f64, alpha: f64) -> (f64, f64) {
    let t = (1.0 - alpha) * (xj - xi);
    let (lo, hi) = if xi <= xj { (xi, xj) } else { (xj, xi) };
    ((xi + t).clamp(lo, hi), (xj - t).clamp(lo, hi))
}

/// Moves `gamma * (x_hi - x_lo)` from the second endpoint to the first.
/// For `gamma > 1` the endpoints overshoot past each other.
pub fn nonconvex_cut_update(x_lo: f64, x_hi: f64, gamma: f64) -> (f64, f64) {
    let t = gamma * (x_hi - x_lo);
    (x_lo + t, x_hi - t)
}

pub fn resolve_gamma(graph: &PartitionedGraph, mode: GammaMode) -> Result<f64, RuleError> {
    match mode {
        GammaMode::N1 => Ok(graph.n1() as f64),
        GammaMode::Balanced => Ok((graph.n1() * graph.n2()) as f64 / graph.n() as f64),
        GammaMode::Explicit(v) if v > 0.0 => Ok(v),
        GammaMode::Explicit(v) => Err(RuleError::NonPositiveGamma(v)),
    }
}

/// `max(1, ceil(C * (t_van1 + t_van2) * ln n))`.
pub fn compute_period(t_van1: f64, t_van2: f64, n: f64, c: f64) -> u64 {
    let raw = (c * (t_van1 + t_van2) * n.ln()).ceil();
    if raw.is_finite() && raw >= 1.0 {
        raw as u64
    } else {
        1
    }
}

/// Algorithm A's case analysis. `k` counts `e_c` ticks including the current
/// one (the first tick is `k = 1`); the phase fires when `k mod P = P - 1`.
pub fn alg_a_dispatch(role: EdgeRole, k: u64, period: u64, gamma: f64) -> UpdateCase {
    match role {
        EdgeRole::DesignatedCut if k % period == period - 1 => UpdateCase::CutTransfer { gamma },
        EdgeRole::DesignatedCut | EdgeRole::Cut => UpdateCase::Idle,
        EdgeRole::Side1 | EdgeRole::Side2 => UpdateCase::Average,
    }
}

impl UpdateRule {
    /// Resolves a descriptor whose period is already known. Descriptors
    /// without a period go through `analysis::resolve_rule`.
    pub fn from_descriptor(
        graph: &PartitionedGraph,
        rule: &RuleDescriptor,
        period: Option<u64>,
    ) -> Result<Self, RuleError> {
        Ok(match *rule {
            RuleDescriptor::Vanilla => UpdateRule::Vanilla,
            RuleDescriptor::Convex { alpha } => RuleDescriptor::convex(alpha).map(|_| UpdateRule::Convex { alpha })?,
            RuleDescriptor::AlgorithmA { period: p, gamma, .. } => {
                let period = p.or(period).ok_or(RuleError::ZeroPeriod)?;
                if period == 0 {
                    return Err(RuleError::ZeroPeriod);
                }
                UpdateRule::AlgorithmA { period, gamma: resolve_gamma(graph, gamma)? }
            }
        })
    }

    /// Picks the case for a tick on an edge with `role`; `k` is the designated
    /// cut-edge tick count including this tick.
    pub fn dispatch(&self, role: EdgeRole, k: u64) -> UpdateCase {
        match *self {
            UpdateRule::Vanilla => UpdateCase::Average,
            UpdateRule::Convex { alpha } => UpdateCase::Convex { alpha },
            UpdateRule::AlgorithmA { period, gamma } => alg_a_dispatch(role, k, period, gamma),
        }
    }

    pub fn is_convex_class(&self) -> bool {
        !matches!(self, UpdateRule::AlgorithmA { .. })
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            UpdateRule::AlgorithmA { gamma, .. } => Some(gamma),
            _ => None,
        }
    }
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpdateRule::Vanilla => f.write_str("vanilla"),
            UpdateRule::Convex { alpha } => write!(f, "convex:a={alpha}"),
            UpdateRule::AlgorithmA { period, gamma } => write!(f, "algA:P={period},gamma={gamma}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vanilla_examples() {
        assert_eq!(vanilla_update(1.0, 3.0), (2.0, 2.0));
        assert_eq!(vanilla_update(0.0, 0.0), (0.0, 0.0));
        assert_eq!(vanilla_update(-1.0, 1.0), (0.0, 0.0));
    }

    #[test]
    fn convex_examples() {
        assert_eq!(convex_update(5.0, -2.0, 1.0), (5.0, -2.0));
        assert_eq!(convex_update(1.0, 3.0, 0.5), (2.0, 2.0));
        assert_eq!(convex_update(1.0, 3.0, 0.75), (1.5, 2.5));
        assert_eq!(RuleDescriptor::convex(1.5), Err(RuleError::AlphaOutOfRange(1.5)));
        assert!(RuleDescriptor::convex(-0.1).is_err());
    }

    #[test]
    fn nonconvex_examples() {
        assert_eq!(nonconvex_cut_update(1.0, -1.0, 2.0), (-3.0, 3.0));
        assert_eq!(nonconvex_cut_update(5.0, 5.0, 17.0), (5.0, 5.0));
        assert_eq!(nonconvex_cut_update(1.0, -1.0, 1.0), (-1.0, 1.0));
    }

    #[test]
    fn balanced_transfer_restores_side_means() {
        // barbell(2, 2), each side at its own mean: (1, 1 | -1, -1)
        let g = PartitionedGraph::barbell(2, 2).unwrap();
        let gamma = resolve_gamma(&g, GammaMode::Balanced).unwrap();
        let mut x = [1.0, 1.0, -1.0, -1.0];
        let (a, b) = nonconvex_cut_update(x[1], x[2], gamma);
        x[1] = a;
        x[2] = b;
        assert_eq!((x[0] + x[1]) / 2.0, 0.0);
        assert_eq!((x[2] + x[3]) / 2.0, 0.0);

        // unequal sides, 3 and 5, worst-cut start 1 / -3/5
        let g = PartitionedGraph::barbell(3, 5).unwrap();
        let gamma = resolve_gamma(&g, GammaMode::Balanced).unwrap();
        let (lo, _) = nonconvex_cut_update(1.0, -0.6, gamma);
        let mu1 = (2.0 + lo) / 3.0;
        assert!(mu1.abs() < 1e-15, "{mu1}");
    }

    #[test]
    fn gamma_modes() {
        let g22 = PartitionedGraph::barbell(2, 2).unwrap();
        assert_eq!(resolve_gamma(&g22, GammaMode::N1).unwrap(), 2.0);
        assert_eq!(resolve_gamma(&g22, GammaMode::Balanced).unwrap(), 1.0);
        let g35 = PartitionedGraph::barbell(3, 5).unwrap();
        assert_eq!(resolve_gamma(&g35, GammaMode::Balanced).unwrap(), 15.0 / 8.0);
        assert_eq!(resolve_gamma(&g35, GammaMode::Explicit(0.3)).unwrap(), 0.3);
        assert!(resolve_gamma(&g35, GammaMode::Explicit(0.0)).is_err());
    }

    #[test]
    fn period_examples() {
        assert_eq!(compute_period(1.0, 1.0, std::f64::consts::E, 10.0), 20);
        assert_eq!(compute_period(0.0, 0.0, 100.0, 4.0), 1);
        assert_eq!(compute_period(0.25, 0.25, 16.0, 4.0), 6);
    }

    #[test]
    fn dispatch_cases() {
        let g = 1.5;
        assert_eq!(
            alg_a_dispatch(EdgeRole::DesignatedCut, 2, 3, g),
            UpdateCase::CutTransfer { gamma: g }
        );
        assert_eq!(alg_a_dispatch(EdgeRole::DesignatedCut, 3, 3, g), UpdateCase::Idle);
        assert_eq!(alg_a_dispatch(EdgeRole::DesignatedCut, 5, 3, g), UpdateCase::CutTransfer { gamma: g });
        assert_eq!(alg_a_dispatch(EdgeRole::Cut, 2, 3, g), UpdateCase::Idle);
        for k in 0..7 {
            assert_eq!(alg_a_dispatch(EdgeRole::Side1, k, 3, g), UpdateCase::Average);
            assert_eq!(alg_a_dispatch(EdgeRole::Side2, k, 3, g), UpdateCase::Average);
            // P = 1 fires on every designated tick
            assert_eq!(
                alg_a_dispatch(EdgeRole::DesignatedCut, k, 1, g),
                UpdateCase::CutTransfer { gamma: g }
            );
        }
    }

    #[test]
    fn descriptor_text() {
        for text in ["vanilla", "convex:a=0.75", "algA:P=20,gamma=balanced,C=4", "algA:gamma=n1,C=2.5"] {
            let rule: RuleDescriptor = text.parse().unwrap();
            assert_eq!(rule.to_string(), text);
        }
        let rule: RuleDescriptor = "algA:C=4,gamma=balanced".parse().unwrap();
        assert_eq!(rule, RuleDescriptor::AlgorithmA { period: None, gamma: GammaMode::Balanced, c: 4.0 });
        let rule: RuleDescriptor = "algA:gamma=3".parse().unwrap();
        assert!(matches!(rule, RuleDescriptor::AlgorithmA { gamma: GammaMode::Explicit(g), .. } if g == 3.0));
        for bad in ["", "vanila", "convex", "convex:a=2", "convex:b=0.5", "algA:P=0", "algA:gamma=-1", "algA:C=0", "algA:P"] {
            assert!(bad.parse::<RuleDescriptor>().is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn convex_stays_in_range(xi in -1e6f64..1e6, xj in -1e6f64..1e6, alpha in 0.0f64..=1.0) {
            let (a, b) = convex_update(xi, xj, alpha);
            let (lo, hi) = (xi.min(xj), xi.max(xj));
            prop_assert!(lo <= a && a <= hi && lo <= b && b <= hi);
            let scale = xi.abs().max(xj.abs());
            prop_assert!(((a + b) - (xi + xj)).abs() <= 4.0 * f64::EPSILON * scale);
        }

        #[test]
        fn updates_preserve_pair_sum(xi in -1e3f64..1e3, xj in -1e3f64..1e3, gamma in 0.01f64..64.0) {
            let scale = xi.abs().max(xj.abs());
            let (a, b) = vanilla_update(xi, xj);
            prop_assert!(((a + b) - (xi + xj)).abs() <= 2.0 * f64::EPSILON * scale);
            let (a, b) = nonconvex_cut_update(xi, xj, gamma);
            let out_scale = a.abs().max(b.abs()).max(scale);
            prop_assert!(((a + b) - (xi + xj)).abs() <= 4.0 * f64::EPSILON * out_scale);
            prop_assert!(a.abs().max(b.abs()) <= (2.0 * gamma + 1.0) * scale * (1.0 + 1e-12));
        }

        #[test]
        fn case_matches_pair_matrix(xi in -10.0f64..10.0, xj in -10.0f64..10.0, alpha in 0.0f64..=1.0, gamma in 0.1f64..20.0) {
            for case in [UpdateCase::Average, UpdateCase::Convex { alpha }, UpdateCase::CutTransfer { gamma }, UpdateCase::Idle] {
                let (a, b) = case.pair_coefficients();
                let (u, v) = case.apply(xi, xj);
                prop_assert!((u - (a * xi + b * xj)).abs() < 1e-9);
                prop_assert!((v - (b * xi + a * xj)).abs() < 1e-9);
            }
        }
    }
}
