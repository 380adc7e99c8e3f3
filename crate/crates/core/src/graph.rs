//! Partitioned graphs with one designated sparse cut.
//!
//! Vertices are `0..n` internally, with `V1 = 0..n1` and `V2 = n1..n`. Every
//! constructor relabels its input so that the designated cut edge joins
//! vertex `n1 - 1` (last of `V1`) to vertex `n1` (first of `V2`), and so that
//! `n1 <= n2`. The text format uses 1-based ids, so the cut edge is written
//! `cut n1 n1+1`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Maximum number of redraws per side in [`random_partitioned`].
pub const CONNECTIVITY_RETRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    One,
    Two,
}

impl Side {
    fn other(self) -> Side {
        match self {
            Side::One => Side::Two,
            Side::Two => Side::One,
        }
    }
}

/// Edge classes of the partition: `E1`, `E2` and the cut set `E12`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeClass {
    E1,
    E2,
    E12,
}

impl EdgeClass {
    pub fn tag(self) -> &'static str {
        match self {
            EdgeClass::E1 => "E1",
            EdgeClass::E2 => "E2",
            EdgeClass::E12 => "E12",
        }
    }

    fn parse(tag: &str) -> Option<EdgeClass> {
        match tag {
            "E1" => Some(EdgeClass::E1),
            "E2" => Some(EdgeClass::E2),
            "E12" => Some(EdgeClass::E12),
            _ => None,
        }
    }
}

/// What an edge is, as seen by an update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeRole {
    Side1,
    Side2,
    /// A cut edge other than the designated one.
    Cut,
    /// The designated cut edge `e_c`.
    DesignatedCut,
}

impl EdgeRole {
    pub fn class(self) -> EdgeClass {
        match self {
            EdgeRole::Side1 => EdgeClass::E1,
            EdgeRole::Side2 => EdgeClass::E2,
            EdgeRole::Cut | EdgeRole::DesignatedCut => EdgeClass::E12,
        }
    }

    pub fn is_intra(self) -> bool {
        matches!(self, EdgeRole::Side1 | EdgeRole::Side2)
    }
}

/// Read-only view of an edge set that the simulation engine can drive.
pub trait Topology: Sync {
    fn vertex_count(&self) -> usize;
    fn edge_count(&self) -> usize;
    fn endpoints(&self, edge: usize) -> (usize, usize);
    fn role(&self, edge: usize) -> EdgeRole;
    /// Number of vertices on side one; `V1 = 0..split()`.
    fn split(&self) -> usize;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("side sizes must be positive (got n1={n1}, n2={n2})")]
    EmptySide { n1: usize, n2: usize },
    #[error("vertex {0} out of range")]
    VertexOutOfRange(usize),
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({u}, {v}) tagged {tag} does not match its endpoint sides")]
    MislabeledEdge { u: usize, v: usize, tag: &'static str },
    #[error("side {0:?} is not connected")]
    SideDisconnected(Side),
    #[error("graph is not connected")]
    Disconnected,
    #[error("cut edge choice ({0}, {1}) is not in E12")]
    CutEdgeNotInCut(usize, usize),
    #[error("side label list has length {got}, expected {expected}")]
    SideLabelCount { got: usize, expected: usize },
    #[error("edge probability {0} outside (0, 1]")]
    InvalidProbability(f64),
    #[error("cut width {k12} invalid for sides of size {n1} and {n2}")]
    InvalidCutWidth { k12: usize, n1: usize, n2: usize },
    #[error("no connected draw for side {side:?} after {attempts} attempts")]
    RetryBudgetExhausted { side: Side, attempts: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Maps input vertex ids onto canonical ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relabeling {
    /// `forward[old] = new`.
    pub forward: Vec<usize>,
    /// True when the input's first side was larger and the sides were exchanged.
    pub swapped: bool,
}

impl Relabeling {
    pub fn map(&self, old: usize) -> usize {
        self.forward[old]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionedGraph {
    n1: usize,
    n2: usize,
    /// `E1 ++ E2 ++ E12`, each block sorted, each edge `(u, v)` with `u < v`.
    edges: Vec<(usize, usize)>,
    e1_len: usize,
    e2_len: usize,
    /// Absolute index of `e_c` in `edges`.
    cut_edge: usize,
}

impl PartitionedGraph {
    /// Two complete graphs on `n1` and `n2` vertices joined by a single edge.
    pub fn barbell(n1: usize, n2: usize) -> Result<Self, GraphError> {
        if n1 == 0 || n2 == 0 {
            return Err(GraphError::EmptySide { n1, n2 });
        }
        let n = n1 + n2;
        let mut sides = vec![Side::One; n1];
        sides.resize(n, Side::Two);
        let mut edges = Vec::new();
        for (lo, hi, class) in [(0, n1, EdgeClass::E1), (n1, n, EdgeClass::E2)] {
            for u in lo..hi {
                for v in u + 1..hi {
                    edges.push((u, v, class));
                }
            }
        }
        edges.push((n1 - 1, n1, EdgeClass::E12));
        let (g, _) = Self::from_edge_list(n, &sides, &edges, (n1 - 1, n1))?;
        Ok(g)
    }

    /// Validates a labeled edge list and relabels it into canonical order.
    ///
    /// `sides[v]` gives the side of input vertex `v`; `cut` names the chosen
    /// `e_c` by its endpoints (either order).
    pub fn from_edge_list(
        vertex_count: usize,
        sides: &[Side],
        edges: &[(usize, usize, EdgeClass)],
        cut: (usize, usize),
    ) -> Result<(Self, Relabeling), GraphError> {
        if sides.len() != vertex_count {
            return Err(GraphError::SideLabelCount { got: sides.len(), expected: vertex_count });
        }
        let count_one = sides.iter().filter(|&&s| s == Side::One).count();
        let count_two = vertex_count - count_one;
        if count_one == 0 || count_two == 0 {
            return Err(GraphError::EmptySide { n1: count_one, n2: count_two });
        }

        let mut seen = BTreeSet::new();
        for &(u, v, class) in edges {
            for w in [u, v] {
                if w >= vertex_count {
                    return Err(GraphError::VertexOutOfRange(w));
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(GraphError::DuplicateEdge(u, v));
            }
            let consistent = match class {
                EdgeClass::E1 => sides[u] == Side::One && sides[v] == Side::One,
                EdgeClass::E2 => sides[u] == Side::Two && sides[v] == Side::Two,
                EdgeClass::E12 => sides[u] != sides[v],
            };
            if !consistent {
                return Err(GraphError::MislabeledEdge { u, v, tag: class.tag() });
            }
        }
        let (cu, cv) = cut;
        let cut_present = edges.iter().any(|&(u, v, class)| {
            class == EdgeClass::E12 && ((u, v) == (cu, cv) || (u, v) == (cv, cu))
        });
        if !cut_present {
            return Err(GraphError::CutEdgeNotInCut(cu, cv));
        }

        let swapped = count_one > count_two;
        let first = if swapped { Side::Two } else { Side::One };
        let (cut_first, cut_second) = if sides[cu] == first { (cu, cv) } else { (cv, cu) };

        // First side: non-cut vertices in input order, then the cut endpoint.
        // Second side: the cut endpoint, then the rest in input order.
        let mut order: Vec<usize> = (0..vertex_count)
            .filter(|&v| sides[v] == first && v != cut_first)
            .collect();
        order.push(cut_first);
        order.push(cut_second);
        order.extend((0..vertex_count).filter(|&v| sides[v] == first.other() && v != cut_second));
        let mut forward = vec![0; vertex_count];
        for (new, &old) in order.iter().enumerate() {
            forward[old] = new;
        }
        let n1 = if swapped { count_two } else { count_one };
        let n2 = vertex_count - n1;

        let mut e1 = Vec::new();
        let mut e2 = Vec::new();
        let mut e12 = Vec::new();
        for &(u, v, _) in edges {
            let (a, b) = (forward[u], forward[v]);
            let e = (a.min(b), a.max(b));
            match (e.0 < n1, e.1 < n1) {
                (true, true) => e1.push(e),
                (false, false) => e2.push(e),
                _ => e12.push(e),
            }
        }
        e1.sort_unstable();
        e2.sort_unstable();
        e12.sort_unstable();
        let cut_pos = e12
            .iter()
            .position(|&e| e == (n1 - 1, n1))
            .expect("relabeled cut edge is present");

        let e1_len = e1.len();
        let e2_len = e2.len();
        let mut all = e1;
        all.extend(e2);
        all.extend(e12);
        let graph = PartitionedGraph {
            n1,
            n2,
            edges: all,
            e1_len,
            e2_len,
            cut_edge: e1_len + e2_len + cut_pos,
        };
        graph.validate()?;
        Ok((graph, Relabeling { forward, swapped }))
    }

    /// Checks every structural invariant: side labels, connectivity of both
    /// sides and of the whole graph, and the canonical position of `e_c`.
    pub fn validate(&self) -> Result<(), GraphError> {
        let (n1, n) = (self.n1, self.n());
        if self.n1 == 0 || self.n2 == 0 || self.n1 > self.n2 {
            return Err(GraphError::EmptySide { n1: self.n1, n2: self.n2 });
        }
        let mut seen = BTreeSet::new();
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            if u >= v || v >= n {
                return Err(GraphError::VertexOutOfRange(v));
            }
            if !seen.insert((u, v)) {
                return Err(GraphError::DuplicateEdge(u, v));
            }
            let class = self.role(i).class();
            let ok = match class {
                EdgeClass::E1 => v < n1,
                EdgeClass::E2 => u >= n1,
                EdgeClass::E12 => u < n1 && v >= n1,
            };
            if !ok {
                return Err(GraphError::MislabeledEdge { u, v, tag: class.tag() });
            }
        }
        if self.edges[self.cut_edge] != (n1 - 1, n1) {
            let (u, v) = self.edges[self.cut_edge];
            return Err(GraphError::CutEdgeNotInCut(u, v));
        }
        if !is_connected(n1, self.edges_e1().iter().copied()) {
            return Err(GraphError::SideDisconnected(Side::One));
        }
        if !is_connected(self.n2, self.edges_e2().iter().map(|&(u, v)| (u - n1, v - n1))) {
            return Err(GraphError::SideDisconnected(Side::Two));
        }
        if !is_connected(n, self.edges.iter().copied()) {
            return Err(GraphError::Disconnected);
        }
        Ok(())
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edges_e1(&self) -> &[(usize, usize)] {
        &self.edges[..self.e1_len]
    }

    pub fn edges_e2(&self) -> &[(usize, usize)] {
        &self.edges[self.e1_len..self.e1_len + self.e2_len]
    }

    pub fn edges_e12(&self) -> &[(usize, usize)] {
        &self.edges[self.e1_len + self.e2_len..]
    }

    /// Absolute edge index of `e_c`.
    pub fn cut_edge_index(&self) -> usize {
        self.cut_edge
    }

    /// Endpoints of `e_c`: always `(n1 - 1, n1)`.
    pub fn cut_edge(&self) -> (usize, usize) {
        self.edges[self.cut_edge]
    }

    /// One side as a standalone graph with vertices renumbered from zero.
    pub fn side(&self, side: Side) -> SideGraph {
        match side {
            Side::One => SideGraph { n: self.n1, edges: self.edges_e1().to_vec() },
            Side::Two => SideGraph {
                n: self.n2,
                edges: self.edges_e2().iter().map(|&(u, v)| (u - self.n1, v - self.n1)).collect(),
            },
        }
    }

    /// Canonical text form (1-based ids).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {}", self.n1, self.n2).unwrap();
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            writeln!(out, "{} {} {}", u + 1, v + 1, self.role(i).class().tag()).unwrap();
        }
        let (u, v) = self.cut_edge();
        writeln!(out, "cut {} {}", u + 1, v + 1).unwrap();
        out
    }

    /// Parses the line-oriented text form. Vertices `1..=n1` of the header
    /// form side one; the result is relabeled canonically.
    pub fn parse(text: &str) -> Result<(Self, Relabeling), GraphError> {
        let mut header: Option<(usize, usize)> = None;
        let mut edges = Vec::new();
        let mut cut: Option<(usize, usize)> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |msg: &str| GraphError::Parse { line, msg: msg.to_string() };
            let fields: Vec<&str> = content.split_whitespace().collect();
            if cut.is_some() {
                return Err(err("content after cut footer"));
            }
            let id = |s: &str| -> Result<usize, GraphError> {
                match s.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(err(&format!("bad vertex id {s:?}"))),
                }
            };
            match (header, fields.as_slice()) {
                (None, [a, b]) => {
                    let n1 = a.parse().map_err(|_| err("bad header"))?;
                    let n2 = b.parse().map_err(|_| err("bad header"))?;
                    header = Some((n1, n2));
                }
                (None, _) => return Err(err("expected header `n1 n2`")),
                (Some(_), ["cut", u, v]) => cut = Some((id(u)?, id(v)?)),
                (Some(_), [u, v, tag]) => {
                    let class = EdgeClass::parse(tag)
                        .ok_or_else(|| err(&format!("unknown edge tag {tag:?}")))?;
                    edges.push((id(u)?, id(v)?, class));
                }
                (Some(_), _) => return Err(err("expected `u v tag` or `cut u v`")),
            }
        }
        let eof = text.lines().count() + 1;
        let (n1, n2) = header.ok_or(GraphError::Parse { line: eof, msg: "missing header".into() })?;
        let cut = cut.ok_or(GraphError::Parse { line: eof, msg: "missing cut footer".into() })?;
        let mut sides = vec![Side::One; n1];
        sides.resize(n1 + n2, Side::Two);
        Self::from_edge_list(n1 + n2, &sides, &edges, cut)
    }

    /// Short hex digest of the canonical text form.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_text().as_bytes());
        hex::encode(&hash[..8])
    }
}

impl Topology for PartitionedGraph {
    fn vertex_count(&self) -> usize {
        self.n()
    }

    fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn endpoints(&self, edge: usize) -> (usize, usize) {
        self.edges[edge]
    }

    fn role(&self, edge: usize) -> EdgeRole {
        if edge < self.e1_len {
            EdgeRole::Side1
        } else if edge < self.e1_len + self.e2_len {
            EdgeRole::Side2
        } else if edge == self.cut_edge {
            EdgeRole::DesignatedCut
        } else {
            EdgeRole::Cut
        }
    }

    fn split(&self) -> usize {
        self.n1
    }
}

/// A single side of a partitioned graph, used to measure its vanilla
/// averaging time in isolation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl SideGraph {
    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        SideGraph { n, edges }
    }

    pub fn is_connected(&self) -> bool {
        is_connected(self.n, self.edges.iter().copied())
    }
}

impl Topology for SideGraph {
    fn vertex_count(&self) -> usize {
        self.n
    }

    fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn endpoints(&self, edge: usize) -> (usize, usize) {
        self.edges[edge]
    }

    fn role(&self, _edge: usize) -> EdgeRole {
        EdgeRole::Side1
    }

    fn split(&self) -> usize {
        self.n
    }
}

fn is_connected(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> bool {
    if n <= 1 {
        return true;
    }
    let mut adj = vec![Vec::new(); n];
    for (u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut visited = vec![false; n];
    let mut queue = VecDeque::from([0]);
    visited[0] = true;
    let mut reached = 1;
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if !visited[w] {
                visited[w] = true;
                reached += 1;
                queue.push_back(w);
            }
        }
    }
    reached == n
}

/// Parameters of the random two-sided family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomPartitionParams {
    pub n1: usize,
    pub n2: usize,
    pub p1: f64,
    pub p2: f64,
    pub k12: usize,
}

/// Erdős–Rényi sides, each redrawn until connected, joined by `k12`
/// uniformly chosen cut edges. The first chosen cut edge becomes `e_c`.
pub fn random_partitioned(
    params: RandomPartitionParams,
    seed: u64,
) -> Result<PartitionedGraph, GraphError> {
    let RandomPartitionParams { n1, n2, p1, p2, k12 } = params;
    if n1 == 0 || n2 == 0 {
        return Err(GraphError::EmptySide { n1, n2 });
    }
    for p in [p1, p2] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(GraphError::InvalidProbability(p));
        }
    }
    if k12 == 0 || k12 > n1 * n2 {
        return Err(GraphError::InvalidCutWidth { k12, n1, n2 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for (side, offset, size, p) in [(Side::One, 0, n1, p1), (Side::Two, n1, n2, p2)] {
        let class = if side == Side::One { EdgeClass::E1 } else { EdgeClass::E2 };
        let drawn = draw_connected(&mut rng, size, p)
            .ok_or(GraphError::RetryBudgetExhausted { side, attempts: CONNECTIVITY_RETRIES })?;
        edges.extend(drawn.into_iter().map(|(u, v)| (u + offset, v + offset, class)));
    }
    let picks = index::sample(&mut rng, n1 * n2, k12);
    let mut cut = None;
    for flat in picks.iter() {
        let (u, v) = (flat / n2, n1 + flat % n2);
        cut.get_or_insert((u, v));
        edges.push((u, v, EdgeClass::E12));
    }
    let mut sides = vec![Side::One; n1];
    sides.resize(n1 + n2, Side::Two);
    let (g, _) = PartitionedGraph::from_edge_list(n1 + n2, &sides, &edges, cut.unwrap())?;
    Ok(g)
}

fn draw_connected(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Option<Vec<(usize, usize)>> {
    for _ in 0..CONNECTIVITY_RETRIES {
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|_| rng.random::<f64>() < p)
            .collect();
        if is_connected(n, edges.iter().copied()) {
            return Some(edges);
        }
    }
    None
}
