//! Exact outcome distribution for graphs with at most three nodes.
//!
//! The state is the set of undecided nodes at the start of an iteration. For
//! each state every joint per-iteration outcome is enumerated (rps: the 9 move
//! pairs of every edge; rank: the weak orders of the ranks), giving the set of
//! nodes that join. Their neighbours drop out and the rest carry over. An
//! iteration in which nobody joins returns to the same state, which is summed
//! as a geometric series.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::deviations::{DeviationKind, DeviationSpec};
use crate::engine::{Move, Protocol};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

pub const MAX_ORACLE_NODES: usize = 3;
/// Largest `M^m` for the per-tuple rank enumeration used with biased shares.
const MAX_RANK_TUPLES: u64 = 1 << 18;

pub type Rational = BigRational;
type Q = Rational;
type Mask = u8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    #[serde(serialize_with = "ser_vec")]
    pub inclusion: Vec<Q>,
    #[serde(serialize_with = "ser_one")]
    pub expected_iterations: Q,
    /// Probability that each node joins in the first iteration.
    #[serde(serialize_with = "ser_vec")]
    pub first_iteration_join: Vec<Q>,
    #[serde(serialize_with = "ser_vec")]
    pub expected_utility: Vec<Q>,
}

fn ser_one<S: serde::Serializer>(q: &Q, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&q.to_string())
}

fn ser_vec<S: serde::Serializer>(qs: &[Q], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(qs.iter().map(|q| q.to_string()))
}

pub fn to_f64(q: &Q) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

fn q(x: f64) -> Result<Q> {
    Q::from_float(x).ok_or_else(|| Error::Parameter(format!("{x} is not a finite number")))
}

fn int(x: u64) -> Q {
    Q::from_integer(BigInt::from(x))
}

fn pow2(bits: u32) -> Q {
    Q::from_integer(BigInt::one() << bits)
}

/// One possible iteration: probability and the set of nodes that join.
struct Branch {
    p: Q,
    joined: Mask,
}

struct Model<'a> {
    g: &'a Graph,
    protocol: Protocol,
    rank_bits: u32,
    deviation: Option<&'a DeviationSpec>,
}

impl Model<'_> {
    fn n(&self) -> usize {
        self.g.n()
    }

    fn nbr_mask(&self, i: usize, u: Mask) -> Mask {
        self.g
            .neighbors(NodeId::from(i))
            .iter()
            .map(|j| 1 << j.idx())
            .fold(0, |a, b| a | b)
            & u
    }

    fn members(&self, u: Mask) -> Vec<usize> {
        (0..self.n()).filter(|i| u & (1 << i) != 0).collect()
    }

    fn deviator(&self) -> Option<usize> {
        self.deviation.map(|d| d.node.idx())
    }

    fn branches(&self, u: Mask) -> Result<Vec<Branch>> {
        match self.protocol {
            Protocol::Rps => self.rps_branches(u),
            Protocol::Rank => self.rank_branches(u),
        }
    }

    fn move_dist(&self, i: usize) -> Result<[Q; 3]> {
        if self.deviator() == Some(i) {
            if let Some(DeviationKind::BiasedMoves {
                rock,
                paper,
                scissors,
            }) = self.deviation.map(|d| &d.kind)
            {
                return Ok([q(*rock)?, q(*paper)?, q(*scissors)?]);
            }
        }
        let third = Q::new(BigInt::one(), BigInt::from(3));
        Ok([third.clone(), third.clone(), third])
    }

    fn rps_branches(&self, u: Mask) -> Result<Vec<Branch>> {
        let nodes = self.members(u);
        let edges: Vec<(usize, usize)> = nodes
            .iter()
            .flat_map(|&a| nodes.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a < b && self.g.has_edge(NodeId::from(a), NodeId::from(b)))
            .collect();
        let dists: Vec<[Q; 3]> = (0..self.n())
            .map(|i| self.move_dist(i))
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        let combos = 9usize.pow(edges.len() as u32);
        for code in 0..combos {
            let mut p = Q::one();
            // lost[i]: node i failed to win some game.
            let mut lost: Mask = 0;
            let mut c = code;
            for &(a, b) in &edges {
                let (ma, mb) = (c % 3, (c / 3) % 3);
                c /= 9;
                p *= &dists[a][ma] * &dists[b][mb];
                let (x, y) = (Move::ALL[ma], Move::ALL[mb]);
                if !x.beats(y) {
                    lost |= 1 << a;
                }
                if !y.beats(x) {
                    lost |= 1 << b;
                }
            }
            if !p.is_zero() {
                out.push(Branch {
                    p,
                    joined: u & !lost,
                });
            }
        }
        Ok(out)
    }

    fn rank_branches(&self, u: Mask) -> Result<Vec<Branch>> {
        match self.deviation.map(|d| &d.kind) {
            None => Ok(self.rank_weak_orders(u)),
            Some(DeviationKind::BiasedRand { p_one }) => self.rank_tuples(u, q(*p_one)?),
            Some(_) => unreachable!("filtered by exact_small_oracle"),
        }
    }

    /// Ranks are i.i.d. uniform on `M = 2^L` values, so every ordered set
    /// partition with `k` blocks has probability `C(M, k) / M^m`.
    fn rank_weak_orders(&self, u: Mask) -> Vec<Branch> {
        let nodes = self.members(u);
        let m = nodes.len();
        let big_m = BigInt::one() << self.rank_bits;
        let denom = Q::from_integer(big_m.pow(m as u32));
        let choose = |k: usize| {
            let mut acc = BigInt::one();
            for t in 0..k {
                acc = acc * (&big_m - t) / (t + 1);
            }
            acc
        };
        let mut out = Vec::new();
        for code in 0..m.pow(m as u32) {
            let levels: Vec<usize> = (0..m).map(|t| code / m.pow(t as u32) % m).collect();
            let k = levels.iter().max().map_or(0, |x| x + 1);
            if (0..k).any(|l| !levels.contains(&l)) {
                continue;
            }
            let p = Q::from_integer(choose(k)) / &denom;
            if p.is_zero() {
                continue;
            }
            let level_of = |i: usize| levels[nodes.iter().position(|&x| x == i).unwrap()];
            let joined = nodes
                .iter()
                .filter(|&&i| {
                    self.members(self.nbr_mask(i, u))
                        .iter()
                        .all(|&j| level_of(i) < level_of(j))
                })
                .fold(0, |a, &i| a | (1 << i));
            out.push(Branch { p, joined });
        }
        out
    }

    fn bits_dist(&self, p_one: Option<&Q>) -> Vec<Q> {
        let size = 1usize << self.rank_bits;
        match p_one {
            None => vec![Q::new(BigInt::one(), BigInt::from(size)); size],
            Some(p) => {
                let zero = Q::one() - p;
                (0..size)
                    .map(|v| {
                        let ones = (v as u64).count_ones();
                        num_traits::pow(p.clone(), ones as usize)
                            * num_traits::pow(zero.clone(), (self.rank_bits - ones) as usize)
                    })
                    .collect()
            }
        }
    }

    /// Exact enumeration over rank values when the deviator biases its own
    /// string and the shares it issues.
    fn rank_tuples(&self, u: Mask, p_one: Q) -> Result<Vec<Branch>> {
        let nodes = self.members(u);
        let size = 1usize << self.rank_bits;
        let dev = self.deviator();
        if (size as u64)
            .checked_pow(nodes.len() as u32)
            .is_none_or(|t| t > MAX_RANK_TUPLES)
        {
            return Err(Error::Unsupported(format!(
                "rank enumeration with L={} over {} nodes is too large",
                self.rank_bits,
                nodes.len()
            )));
        }
        let uniform = self.bits_dist(None);
        let biased = self.bits_dist(Some(&p_one));
        let pick = |i: usize| if dev == Some(i) { &biased } else { &uniform };
        let xor_conv = |a: &[Q], b: &[Q]| {
            let mut out = vec![Q::zero(); size];
            for (x, pa) in a.iter().enumerate() {
                for (y, pb) in b.iter().enumerate() {
                    out[x ^ y] += pa * pb;
                }
            }
            out
        };
        // Per-node rank distribution, mixing over the uniformly chosen opponent.
        let mut rank_dist: Vec<Vec<Q>> = Vec::new();
        for &i in &nodes {
            let opps = self.members(self.nbr_mask(i, u));
            if opps.is_empty() {
                rank_dist.push(uniform.clone());
                continue;
            }
            let w = Q::new(BigInt::one(), BigInt::from(opps.len()));
            let mut d = vec![Q::zero(); size];
            for &j in &opps {
                for (acc, x) in d.iter_mut().zip(xor_conv(pick(i), pick(j))) {
                    *acc += &w * x;
                }
            }
            rank_dist.push(d);
        }
        let mut by_joined: HashMap<Mask, Q> = HashMap::new();
        let m = nodes.len();
        for code in 0..size.pow(m as u32) {
            let ranks: Vec<usize> = (0..m).map(|t| code / size.pow(t as u32) % size).collect();
            let mut p = Q::one();
            for (t, &r) in ranks.iter().enumerate() {
                p *= &rank_dist[t][r];
            }
            if p.is_zero() {
                continue;
            }
            let pos = |i: usize| nodes.iter().position(|&x| x == i).unwrap();
            let joined = nodes
                .iter()
                .filter(|&&i| {
                    self.members(self.nbr_mask(i, u))
                        .iter()
                        .all(|&j| ranks[pos(i)] < ranks[pos(j)])
                })
                .fold(0, |a, &i| a | (1 << i));
            *by_joined.entry(joined).or_insert_with(Q::zero) += p;
        }
        Ok(by_joined
            .into_iter()
            .map(|(joined, p)| Branch { p, joined })
            .collect())
    }
}

#[derive(Clone)]
struct StateValue {
    inclusion: Vec<Q>,
    iterations: Q,
}

fn solve(model: &Model<'_>, u: Mask, memo: &mut HashMap<Mask, StateValue>) -> Result<StateValue> {
    let n = model.n();
    if u == 0 {
        return Ok(StateValue {
            inclusion: vec![Q::zero(); n],
            iterations: Q::zero(),
        });
    }
    if let Some(v) = memo.get(&u) {
        return Ok(v.clone());
    }
    let mut stay = Q::zero();
    let mut inclusion = vec![Q::zero(); n];
    let mut iterations = Q::one();
    for b in model.branches(u)? {
        if b.joined == 0 {
            stay += b.p;
            continue;
        }
        let removed = model
            .members(b.joined)
            .iter()
            .fold(b.joined, |a, &i| a | model.nbr_mask(i, u));
        let next = solve(model, u & !removed, memo)?;
        for (i, inc) in inclusion.iter_mut().enumerate() {
            if b.joined & (1 << i) != 0 {
                *inc += &b.p;
            } else {
                *inc += &b.p * &next.inclusion[i];
            }
        }
        iterations += &b.p * next.iterations;
    }
    let leave = Q::one() - stay;
    if leave.is_zero() {
        return Err(Error::Unsupported("state never makes progress".into()));
    }
    let value = StateValue {
        inclusion: inclusion.into_iter().map(|x| x / &leave).collect(),
        iterations: iterations / &leave,
    };
    memo.insert(u, value.clone());
    Ok(value)
}

/// Exact inclusion probabilities, expected iteration count and expected
/// utilities for `g` with at most three nodes.
///
/// Supported deviations (activation round 0 only): `BiasedMoves` under rps
/// and `BiasedRand` under rank. Everything else is `Error::Unsupported`.
pub fn exact_small_oracle(
    g: &Graph,
    protocol: Protocol,
    deviation: Option<&DeviationSpec>,
    rank_bits: u32,
    payoffs: Option<&[f64]>,
) -> Result<OracleResult> {
    let n = g.n();
    if n > MAX_ORACLE_NODES {
        return Err(Error::Unsupported(format!(
            "oracle handles at most {MAX_ORACLE_NODES} nodes, got {n}"
        )));
    }
    if protocol == Protocol::Rank && !(1..=16).contains(&rank_bits) {
        return Err(Error::Unsupported(format!(
            "oracle handles rank bits 1..=16, got {rank_bits}"
        )));
    }
    if let Some(d) = deviation {
        d.validate_for(protocol)?;
        let supported = matches!(
            (protocol, &d.kind),
            (Protocol::Rps, DeviationKind::BiasedMoves { .. })
                | (Protocol::Rank, DeviationKind::BiasedRand { .. })
        );
        if !supported || d.activation_round != 0 || d.node.idx() >= n {
            return Err(Error::Unsupported(format!(
                "oracle does not model deviation {d}"
            )));
        }
    }
    let v: Vec<Q> = match payoffs {
        Some(p) if p.len() != n => {
            return Err(Error::Parameter(format!(
                "{} payoffs for {n} nodes",
                p.len()
            )))
        }
        Some(p) => p.iter().map(|&x| q(x)).collect::<Result<_>>()?,
        None => vec![Q::one(); n],
    };
    let model = Model {
        g,
        protocol,
        rank_bits,
        deviation,
    };
    let all: Mask = ((1u16 << n) - 1) as Mask;
    let mut memo = HashMap::new();
    let root = solve(&model, all, &mut memo)?;

    let branches = model.branches(all)?;
    let first_iteration_join = (0..n)
        .map(|i| {
            branches
                .iter()
                .filter(|b| b.joined & (1 << i) != 0)
                .fold(Q::zero(), |a, b| a + &b.p)
        })
        .collect();
    // Honest-path outcomes are always a valid MIS, so utility is v_i on inclusion.
    let expected_utility = root.inclusion.iter().zip(&v).map(|(p, v)| p * v).collect();
    Ok(OracleResult {
        inclusion: root.inclusion,
        expected_iterations: root.iterations,
        first_iteration_join,
        expected_utility,
    })
}

/// `(1 - 2^-L) / 2`, the per-iteration join probability of each node on K2.
pub fn k2_rank_join(rank_bits: u32) -> Q {
    let m = pow2(rank_bits);
    (Q::one() - m.recip()) / int(2)
}
