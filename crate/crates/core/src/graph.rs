//! Network topologies and MIS checks.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamKey};

/// Dense node identifier in `[0, n)`. Doubles as the node's public identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(u32::try_from(i).expect("node index exceeds u32"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Undirected simple graph with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<NodeId>>,
}

impl Graph {
    /// Builds a graph from an edge list, deduplicating repeated edges.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("graph needs at least one node".into()));
        }
        let mut sets = vec![BTreeSet::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Parameter(format!(
                    "edge ({u},{v}) out of range for n={n}"
                )));
            }
            if u == v {
                return Err(Error::Parameter(format!("self-loop at node {u}")));
            }
            sets[u].insert(NodeId::from(v));
            sets[v].insert(NodeId::from(u));
        }
        Ok(Self {
            adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn edgeless(n: usize) -> Result<Self> {
        Self::from_edges(n, std::iter::empty())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    #[inline]
    pub fn neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.adjacency[i.idx()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n()).map(NodeId::from)
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.adjacency[i.idx()].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes().flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Re-checks symmetry, absence of self-loops, range and sortedness.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            if nbrs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Contract(format!(
                    "adjacency of {i} not strictly sorted"
                )));
            }
            for &j in nbrs {
                if j.idx() >= n {
                    return Err(Error::Contract(format!(
                        "neighbour {j} of {i} out of range"
                    )));
                }
                if j.idx() == i {
                    return Err(Error::Contract(format!("self-loop at {i}")));
                }
                if !self.has_edge(j, NodeId::from(i)) {
                    return Err(Error::Contract(format!("edge {i}->{j} not symmetric")));
                }
            }
        }
        Ok(())
    }

    pub fn is_independent_set(&self, s: &[NodeId]) -> bool {
        let members = self.membership(s);
        self.edges()
            .all(|(u, v)| !(members[u.idx()] && members[v.idx()]))
    }

    pub fn is_maximal_independent_set(&self, s: &[NodeId]) -> bool {
        if !self.is_independent_set(s) {
            return false;
        }
        let members = self.membership(s);
        self.nodes()
            .all(|i| members[i.idx()] || self.neighbors(i).iter().any(|j| members[j.idx()]))
    }

    fn membership(&self, s: &[NodeId]) -> Vec<bool> {
        let mut members = vec![false; self.n()];
        for &i in s {
            members[i.idx()] = true;
        }
        members
    }

    /// Parses whitespace-separated `u v` pairs, one per line. Lines starting
    /// with `#` and blank lines are ignored.
    pub fn load_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut max_id = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let line_err = |msg: String| Error::Format {
                line: lineno + 1,
                msg,
            };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != 2 {
                return Err(line_err(format!(
                    "expected two ids, found {}",
                    tokens.len()
                )));
            }
            let parse = |t: &str| {
                t.parse::<u32>()
                    .map_err(|_| line_err(format!("not a node id: {t:?}")))
            };
            let (u, v) = (parse(tokens[0])?, parse(tokens[1])?);
            if u == v {
                return Err(line_err(format!("self-loop {u} {v}")));
            }
            max_id = max_id.max(Some(u.max(v)));
            edges.push((u as usize, v as usize));
        }
        let n = max_id
            .map(|m| m as usize + 1)
            .ok_or_else(|| Error::Format {
                line: 0,
                msg: "edge list contains no edges".into(),
            })?;
        Self::from_edges(n, edges)
    }

    pub fn to_edge_list(&self) -> String {
        self.edges().map(|(u, v)| format!("{u} {v}\n")).collect()
    }
}

/// Edge probability for Erdős–Rényi graphs: either absolute, or `k/n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EdgeProb {
    Fixed(f64),
    PerNode(f64),
}

impl EdgeProb {
    pub fn resolve(self, n: usize) -> f64 {
        match self {
            EdgeProb::Fixed(p) => p,
            EdgeProb::PerNode(k) => k / n as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FamilyKind {
    Path,
    Cycle,
    Complete,
    Star,
    Edgeless,
    RandomRegular { degree: usize },
    ErdosRenyi { p: EdgeProb },
}

/// A parameterised graph family instance, e.g. `cycle:16` or `erdos_renyi:8/n:256`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFamily {
    pub kind: FamilyKind,
    pub n: usize,
}

impl GraphFamily {
    pub fn new(kind: FamilyKind, n: usize) -> Self {
        Self { kind, n }
    }

    pub fn is_random(&self) -> bool {
        matches!(
            self.kind,
            FamilyKind::RandomRegular { .. } | FamilyKind::ErdosRenyi { .. }
        )
    }

    /// Builds the graph. Deterministic given `(self, seed)`; the seed is
    /// ignored by the deterministic families.
    pub fn build(&self, seed: u64) -> Result<Graph> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Parameter("family needs n >= 1".into()));
        }
        match self.kind {
            FamilyKind::Path => Graph::from_edges(n, (1..n).map(|i| (i - 1, i))),
            FamilyKind::Cycle => {
                let closing = (n > 2).then_some((n - 1, 0));
                Graph::from_edges(n, (1..n).map(|i| (i - 1, i)).chain(closing))
            }
            FamilyKind::Complete => {
                Graph::from_edges(n, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))))
            }
            FamilyKind::Star => Graph::from_edges(n, (1..n).map(|i| (0, i))),
            FamilyKind::Edgeless => Graph::edgeless(n),
            FamilyKind::RandomRegular { degree } => random_regular(n, degree, seed),
            FamilyKind::ErdosRenyi { p } => {
                let p = p.resolve(n);
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Parameter(format!(
                        "edge probability {p} outside [0,1]"
                    )));
                }
                let mut rng = StreamKey::new(seed).stream(NodeId(0), n as u64, Purpose::Graph);
                let mut edges = Vec::new();
                for u in 0..n {
                    for v in u + 1..n {
                        if rng.gen::<f64>() < p {
                            edges.push((u, v));
                        }
                    }
                }
                Graph::from_edges(n, edges)
            }
        }
    }
}

/// Random d-regular graph by the pairing model with local rejection and
/// restarts.
fn random_regular(n: usize, d: usize, seed: u64) -> Result<Graph> {
    if d >= n {
        return Err(Error::Parameter(format!(
            "random_regular needs d < n (d={d}, n={n})"
        )));
    }
    if (n * d) % 2 == 1 {
        return Err(Error::Parameter(format!(
            "random_regular needs n*d even (n={n}, d={d})"
        )));
    }
    if d == n - 1 {
        return GraphFamily::new(FamilyKind::Complete, n).build(seed);
    }
    let key = StreamKey::new(seed);
    for attempt in 0..10_000u64 {
        let mut rng = key.stream(NodeId(d as u32), attempt, Purpose::Graph);
        let mut points: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
        points.shuffle(&mut rng);
        let mut adj = vec![BTreeSet::new(); n];
        let mut stuck = false;
        while !points.is_empty() && !stuck {
            let mut paired = false;
            for _ in 0..64 {
                let a = rng.gen_range(0..points.len());
                let b = rng.gen_range(0..points.len());
                let (u, v) = (points[a], points[b]);
                if a != b && u != v && !adj[u].contains(&v) {
                    adj[u].insert(v);
                    adj[v].insert(u);
                    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
                    points.swap_remove(hi);
                    points.swap_remove(lo);
                    paired = true;
                    break;
                }
            }
            if !paired {
                // Exhaustive check before giving up on this attempt.
                let found = (0..points.len()).find_map(|a| {
                    (a + 1..points.len())
                        .find(|&b| {
                            let (u, v) = (points[a], points[b]);
                            u != v && !adj[u].contains(&v)
                        })
                        .map(|b| (a, b))
                });
                match found {
                    Some((a, b)) => {
                        let (u, v) = (points[a], points[b]);
                        adj[u].insert(v);
                        adj[v].insert(u);
                        points.swap_remove(b);
                        points.swap_remove(a);
                    }
                    None => stuck = true,
                }
            }
        }
        if !stuck {
            let edges = adj
                .iter()
                .enumerate()
                .flat_map(|(u, s)| s.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
                .collect::<Vec<_>>();
            return Graph::from_edges(n, edges);
        }
    }
    Err(Error::Parameter(format!(
        "could not sample a {d}-regular graph on {n} nodes"
    )))
}

impl FromStr for GraphFamily {
    type Err = Error;

    /// Accepts `path:N`, `cycle:N`, `complete:N`, `star:N`, `edgeless:N`,
    /// `random_regular:D:N` and `erdos_renyi:P:N` where `P` is a float or `K/n`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognised graph family {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        let parse_n = |t: &str| t.parse::<usize>().map_err(|_| bad());
        let kind_name = parts.first().copied().unwrap_or_default();
        let family = match (kind_name, parts.len()) {
            ("path", 2) => GraphFamily::new(FamilyKind::Path, parse_n(parts[1])?),
            ("cycle", 2) => GraphFamily::new(FamilyKind::Cycle, parse_n(parts[1])?),
            ("complete", 2) => GraphFamily::new(FamilyKind::Complete, parse_n(parts[1])?),
            ("star", 2) => GraphFamily::new(FamilyKind::Star, parse_n(parts[1])?),
            ("edgeless", 2) => GraphFamily::new(FamilyKind::Edgeless, parse_n(parts[1])?),
            ("random_regular", 3) => GraphFamily::new(
                FamilyKind::RandomRegular {
                    degree: parse_n(parts[1])?,
                },
                parse_n(parts[2])?,
            ),
            ("erdos_renyi", 3) => {
                let p = match parts[1].strip_suffix("/n") {
                    Some(k) => EdgeProb::PerNode(k.parse().map_err(|_| bad())?),
                    None => EdgeProb::Fixed(parts[1].parse().map_err(|_| bad())?),
                };
                GraphFamily::new(FamilyKind::ErdosRenyi { p }, parse_n(parts[2])?)
            }
            _ => return Err(bad()),
        };
        if family.n == 0 {
            return Err(Error::Config("graph family needs n >= 1".into()));
        }
        Ok(family)
    }
}

impl fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.n;
        match self.kind {
            FamilyKind::Path => write!(f, "path:{n}"),
            FamilyKind::Cycle => write!(f, "cycle:{n}"),
            FamilyKind::Complete => write!(f, "complete:{n}"),
            FamilyKind::Star => write!(f, "star:{n}"),
            FamilyKind::Edgeless => write!(f, "edgeless:{n}"),
            FamilyKind::RandomRegular { degree } => write!(f, "random_regular:{degree}:{n}"),
            FamilyKind::ErdosRenyi {
                p: EdgeProb::Fixed(p),
            } => write!(f, "erdos_renyi:{p}:{n}"),
            FamilyKind::ErdosRenyi {
                p: EdgeProb::PerNode(k),
            } => {
                write!(f, "erdos_renyi:{k}/n:{n}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    fn fam(s: &str) -> Graph {
        s.parse::<GraphFamily>().unwrap().build(0).unwrap()
    }

    #[test]
    fn cycle_four() {
        let g = fam("cycle:4");
        let edges: Vec<_> = g.edges().map(|(u, v)| (u.0, v.0)).collect();
        assert_eq!(edges, vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
    }

    #[test]
    fn complete_three_is_triangle() {
        let g = fam("complete:3");
        assert_eq!(g.edge_count(), 3);
        assert!(g.has_edge(NodeId(0), NodeId(2)));
    }

    #[test]
    fn regular_parity_rejected() {
        let err = GraphFamily::new(FamilyKind::RandomRegular { degree: 3 }, 5).build(1);
        assert!(matches!(err, Err(Error::Parameter(_))));
        let err = GraphFamily::new(FamilyKind::RandomRegular { degree: 4 }, 4).build(1);
        assert!(matches!(err, Err(Error::Parameter(_))));
    }

    #[test]
    fn random_regular_is_regular() {
        let g = fam("random_regular:3:128");
        g.validate().unwrap();
        assert!(g.nodes().all(|i| g.degree(i) == 3));
    }

    #[test]
    fn edge_list_parsing() {
        let g = Graph::load_edge_list("0 1\n1 2").unwrap();
        assert_eq!(g, fam("path:3"));
        let g = Graph::load_edge_list("# comment\n0 1\n1 0\n\n").unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.edge_count(), 1);
        assert!(matches!(
            Graph::load_edge_list("0 0"),
            Err(Error::Format { line: 1, .. })
        ));
        assert!(matches!(
            Graph::load_edge_list("0 x"),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            Graph::load_edge_list("0 1 2"),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn max_degree_examples() {
        assert_eq!(fam("cycle:5").max_degree(), 2);
        assert_eq!(fam("star:6").max_degree(), 5);
        assert_eq!(fam("edgeless:3").max_degree(), 0);
    }

    #[test]
    fn independence_examples() {
        let k3 = fam("complete:3");
        assert!(k3.is_independent_set(&ids(&[0])));
        assert!(!k3.is_independent_set(&ids(&[0, 1])));
        assert!(fam("edgeless:3").is_independent_set(&ids(&[0, 1, 2])));
    }

    #[test]
    fn maximality_examples() {
        let p3 = fam("path:3");
        assert!(p3.is_maximal_independent_set(&ids(&[1])));
        assert!(!p3.is_maximal_independent_set(&ids(&[0])));
        assert!(p3.is_maximal_independent_set(&ids(&[0, 2])));
    }

    #[test]
    fn family_strings_round_trip() {
        for s in [
            "path:7",
            "cycle:16",
            "complete:3",
            "star:6",
            "edgeless:2",
            "random_regular:3:128",
            "erdos_renyi:8/n:256",
            "erdos_renyi:0.25:10",
        ] {
            assert_eq!(s.parse::<GraphFamily>().unwrap().to_string(), s);
        }
        assert!("cycle".parse::<GraphFamily>().is_err());
        assert!("cycle:0".parse::<GraphFamily>().is_err());
    }

    fn family_strategy() -> impl Strategy<Value = GraphFamily> {
        let n = 1usize..40;
        prop_oneof![
            n.clone()
                .prop_map(|n| GraphFamily::new(FamilyKind::Path, n)),
            n.clone()
                .prop_map(|n| GraphFamily::new(FamilyKind::Cycle, n)),
            n.clone()
                .prop_map(|n| GraphFamily::new(FamilyKind::Complete, n)),
            n.clone()
                .prop_map(|n| GraphFamily::new(FamilyKind::Star, n)),
            (2usize..20)
                .prop_map(|h| GraphFamily::new(FamilyKind::RandomRegular { degree: 3 }, 2 * h)),
            (n, 0.0f64..1.0).prop_map(|(n, p)| GraphFamily::new(
                FamilyKind::ErdosRenyi {
                    p: EdgeProb::Fixed(p)
                },
                n
            )),
        ]
    }

    proptest! {
        #[test]
        fn generated_graphs_validate(f in family_strategy(), seed in any::<u64>()) {
            let g = f.build(seed).unwrap();
            prop_assert_eq!(g.n(), f.n);
            g.validate().unwrap();
            prop_assert_eq!(&g, &f.build(seed).unwrap());
            prop_assert_eq!(Graph::load_edge_list(&g.to_edge_list()).ok().filter(|h| h.n() == g.n())
                .is_none_or(|h| h == g), true);
        }

        #[test]
        fn maximal_implies_independent(f in family_strategy(), mask in any::<u64>()) {
            let g = f.build(3).unwrap();
            let s: Vec<NodeId> = g.nodes().filter(|i| mask >> (i.0 % 64) & 1 == 1).collect();
            if g.is_maximal_independent_set(&s) {
                prop_assert!(g.is_independent_set(&s));
            }
        }
    }
}
