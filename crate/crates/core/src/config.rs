//! Experiment configuration: flat `key=value` files whose keys match the
//! command-line flags.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::analysis::{CutFamily, X0Policy};
use crate::graph::{random_partitioned, GraphError, PartitionedGraph, RandomPartitionParams};
use crate::rules::{GammaMode, RuleDescriptor, DEFAULT_C};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {msg}")]
    InvalidValue { key: String, msg: String },
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
}

/// Where the graph comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    Barbell { n1: usize, n2: usize },
    File(PathBuf),
    /// Random two-sided graph, drawn from the experiment seed.
    Random(RandomPartitionParams),
}

impl GraphSource {
    pub fn build(&self, seed: u64) -> Result<PartitionedGraph, ConfigError> {
        match self {
            GraphSource::Barbell { n1, n2 } => Ok(PartitionedGraph::barbell(*n1, *n2)?),
            GraphSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
                    path: path.display().to_string(),
                    msg: e.to_string(),
                })?;
                Ok(PartitionedGraph::parse(&text)?.0)
            }
            GraphSource::Random(params) => Ok(random_partitioned(*params, seed)?),
        }
    }
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSource::Barbell { n1, n2 } => write!(f, "barbell:{n1},{n2}"),
            GraphSource::File(p) => write!(f, "file:{}", p.display()),
            GraphSource::Random(p) => write!(f, "random:{},{},{},{},{}", p.n1, p.n2, p.p1, p.p2, p.k12),
        }
    }
}

impl FromStr for GraphSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').ok_or_else(|| format!("expected kind:args, got {s:?}"))?;
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        let int = |t: &str| t.parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
        let real = |t: &str| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
        match (kind, parts.as_slice()) {
            ("barbell", [a, b]) => Ok(GraphSource::Barbell { n1: int(a)?, n2: int(b)? }),
            ("file", _) if !rest.is_empty() => Ok(GraphSource::File(PathBuf::from(rest))),
            ("random", [a, b, p1, p2, k]) => Ok(GraphSource::Random(RandomPartitionParams {
                n1: int(a)?,
                n2: int(b)?,
                p1: real(p1)?,
                p2: real(p2)?,
                k12: int(k)?,
            })),
            _ => Err(format!("unrecognised graph source {s:?}")),
        }
    }
}

pub fn format_x0(p: X0Policy) -> String {
    match p {
        X0Policy::WorstCut => "worst-cut".into(),
        X0Policy::Random { draws } => format!("random:{draws}"),
    }
}

pub fn parse_x0(s: &str) -> Result<X0Policy, String> {
    match s {
        "worst-cut" => Ok(X0Policy::WorstCut),
        "random" => Ok(X0Policy::Random { draws: 3 }),
        _ => match s.strip_prefix("random:").map(str::parse::<usize>) {
            Some(Ok(d)) if d > 0 => Ok(X0Policy::Random { draws: d }),
            _ => Err(format!("expected worst-cut, random or random:<draws>, got {s:?}")),
        },
    }
}

pub fn parse_family(s: &str) -> Result<CutFamily, String> {
    match s {
        "barbell" => Ok(CutFamily::Barbell),
        "matched" => Ok(CutFamily::Matched),
        _ => Err(format!("unknown family {s:?}")),
    }
}

pub fn format_family(f: CutFamily) -> &'static str {
    match f {
        CutFamily::Barbell => "barbell",
        CutFamily::Matched => "matched",
    }
}

/// Every option any subcommand reads. Keys and defaults:
///
/// | key | default |
/// |---|---|
/// | `graph` | `barbell:8,8` |
/// | `rule` | `vanilla` |
/// | `x0` | `worst-cut` |
/// | `runs` | `100` |
/// | `horizon` | `auto` (doubling search) |
/// | `seed` | `1` |
/// | `out` | `-` (stdout) |
/// | `n` | `16,32,64,128` |
/// | `c` | `4` |
/// | `gamma` | `balanced` |
/// | `family` | `barbell` |
/// | `max-events` | `none` |
/// | `max-time` | `none` |
/// | `target-ratio` | `none` |
/// | `sample-every` | `1` |
/// | `side` | `none` |
/// | `epochs` | `200` |
/// | `slack` | `auto` (`0.1 ln n`) |
/// | `compare-n1` | `false` |
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub rule: RuleDescriptor,
    pub x0: X0Policy,
    pub runs: usize,
    pub horizon: Option<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub n: Vec<usize>,
    pub c: f64,
    pub gamma: GammaMode,
    pub family: CutFamily,
    pub max_events: Option<u64>,
    pub max_time: Option<f64>,
    pub target_ratio: Option<f64>,
    pub sample_every: u64,
    pub side: Option<u8>,
    pub epochs: usize,
    pub slack: Option<f64>,
    pub compare_n1: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            graph: GraphSource::Barbell { n1: 8, n2: 8 },
            rule: RuleDescriptor::Vanilla,
            x0: X0Policy::WorstCut,
            runs: 100,
            horizon: None,
            seed: 1,
            out: None,
            n: vec![16, 32, 64, 128],
            c: DEFAULT_C,
            gamma: GammaMode::Balanced,
            family: CutFamily::Barbell,
            max_events: None,
            max_time: None,
            target_ratio: None,
            sample_every: 1,
            side: None,
            epochs: 200,
            slack: None,
            compare_n1: false,
        }
    }
}

pub const KEYS: &[&str] = &[
    "graph",
    "rule",
    "x0",
    "runs",
    "horizon",
    "seed",
    "out",
    "n",
    "c",
    "gamma",
    "family",
    "max-events",
    "max-time",
    "target-ratio",
    "sample-every",
    "side",
    "epochs",
    "slack",
    "compare-n1",
];

fn opt<T: FromStr>(v: &str, auto: &str) -> Result<Option<T>, String>
where
    T::Err: fmt::Display,
{
    if v == auto {
        Ok(None)
    } else {
        v.parse().map(Some).map_err(|e: T::Err| e.to_string())
    }
}

fn show<T: fmt::Display>(v: &Option<T>, auto: &str) -> String {
    v.as_ref().map_or_else(|| auto.to_string(), T::to_string)
}

impl ExperimentConfig {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let bad = |msg: String| ConfigError::InvalidValue { key: key.to_string(), msg };
        fn num<T: FromStr>(v: &str) -> Result<T, String>
        where
            T::Err: fmt::Display,
        {
            v.parse().map_err(|e: T::Err| e.to_string())
        }
        match key {
            "graph" => self.graph = value.parse().map_err(bad)?,
            "rule" => self.rule = value.parse().map_err(|e: crate::rules::RuleError| bad(e.to_string()))?,
            "x0" => self.x0 = parse_x0(value).map_err(bad)?,
            "runs" => self.runs = num(value).map_err(bad)?,
            "horizon" => self.horizon = opt(value, "auto").map_err(bad)?,
            "seed" => self.seed = num(value).map_err(bad)?,
            "out" => self.out = if value == "-" { None } else { Some(PathBuf::from(value)) },
            "n" => {
                self.n = value.split(',').map(|t| num(t.trim())).collect::<Result<_, _>>().map_err(bad)?;
                if self.n.is_empty() || self.n.iter().any(|&v| v < 2) {
                    return Err(bad("every n must be at least 2".into()));
                }
            }
            "c" => self.c = num(value).map_err(bad)?,
            "gamma" => self.gamma = value.parse().map_err(bad)?,
            "family" => self.family = parse_family(value).map_err(bad)?,
            "max-events" => self.max_events = opt(value, "none").map_err(bad)?,
            "max-time" => self.max_time = opt(value, "none").map_err(bad)?,
            "target-ratio" => self.target_ratio = opt(value, "none").map_err(bad)?,
            "sample-every" => self.sample_every = num(value).map_err(bad)?,
            "side" => {
                self.side = opt(value, "none").map_err(bad)?;
                if !matches!(self.side, None | Some(1) | Some(2)) {
                    return Err(bad("side must be 1 or 2".into()));
                }
            }
            "epochs" => self.epochs = num(value).map_err(bad)?,
            "slack" => self.slack = opt(value, "auto").map_err(bad)?,
            "compare-n1" => self.compare_n1 = num(value).map_err(bad)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Text value of one key, in the form `set` accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "graph" => self.graph.to_string(),
            "rule" => self.rule.to_string(),
            "x0" => format_x0(self.x0),
            "runs" => self.runs.to_string(),
            "horizon" => show(&self.horizon, "auto"),
            "seed" => self.seed.to_string(),
            "out" => self.out.as_ref().map_or_else(|| "-".into(), |p| p.display().to_string()),
            "n" => self.n.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
            "c" => self.c.to_string(),
            "gamma" => self.gamma.to_string(),
            "family" => format_family(self.family).into(),
            "max-events" => show(&self.max_events, "none"),
            "max-time" => show(&self.max_time, "none"),
            "target-ratio" => show(&self.target_ratio, "none"),
            "sample-every" => self.sample_every.to_string(),
            "side" => show(&self.side, "none"),
            "epochs" => self.epochs.to_string(),
            "slack" => show(&self.slack, "auto"),
            "compare-n1" => self.compare_n1.to_string(),
            _ => return None,
        })
    }

    /// Applies a config file's text on top of `self`. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn merge_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        cfg.merge_text(text)?;
        Ok(cfg)
    }

    /// All keys, one per line.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{k}={}\n", self.get(k).expect("known key"))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn every_key_round_trips() {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in [
            ("graph", "random:5,6,0.5,0.7,3"),
            ("rule", "algA:P=7,gamma=n1,C=2"),
            ("x0", "random:4"),
            ("runs", "40"),
            ("horizon", "12.5"),
            ("seed", "99"),
            ("out", "results/a.csv"),
            ("n", "8,16"),
            ("c", "3"),
            ("gamma", "0.25"),
            ("family", "matched"),
            ("max-events", "1000"),
            ("max-time", "2.5"),
            ("target-ratio", "0.01"),
            ("sample-every", "10"),
            ("side", "2"),
            ("epochs", "50"),
            ("slack", "0.3"),
            ("compare-n1", "true"),
        ] {
            cfg.set(k, v).unwrap();
            assert_eq!(cfg.get(k).unwrap(), v, "{k}");
        }
        let text = cfg.to_text();
        let back = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn order_and_comments_do_not_matter() {
        let a = ExperimentConfig::parse("# note\nseed=5\n\nrule = convex:a=0.5\n").unwrap();
        let b = ExperimentConfig::parse("rule=convex:a=0.5\nseed=5").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(ExperimentConfig::parse("bogus=1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(ExperimentConfig::parse("seed"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(ExperimentConfig::parse("rule=algB"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(ExperimentConfig::parse("side=3"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(ExperimentConfig::parse("graph=ring:4"), Err(ConfigError::InvalidValue { .. })));
    }

    #[test]
    fn barbell_source_builds() {
        let g: GraphSource = "barbell:3,4".parse().unwrap();
        assert_eq!(g.build(0).unwrap().n(), 7);
    }
}
