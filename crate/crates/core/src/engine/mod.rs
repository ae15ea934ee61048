//! Synchronous round executor.
//!
//! Each round the engine shows every undecided node the same snapshot (its
//! inbox and the outputs committed in earlier rounds), collects all actions,
//! and only then commits outputs and queues messages for delivery in the next
//! round. Decided nodes never act again.

mod message;
mod observation;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use message::{Action, Addressing, Message, Move, OutputValue, Payload};
pub use observation::Observation;

use crate::deviations::{DeviantBehavior, DeviationSpec};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rank::{HonestRankNode, RankNode};
use crate::rng::{Purpose, StreamKey, StreamRng};
use crate::rps::{HonestRpsNode, RpsNode};
use crate::signing::{KeyRegistry, Signature, SignatureBackend};
use crate::utility::{evaluate_all, UtilityValue};

/// Default multiplier `c` in `L = ceil(c * log2 n)`.
pub const DEFAULT_RANK_BITS_C: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Rps,
    Rank,
}

impl Protocol {
    pub fn rounds_per_iteration(self) -> u64 {
        match self {
            Protocol::Rps => 3,
            Protocol::Rank => 5,
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rps" => Ok(Protocol::Rps),
            "rank" => Ok(Protocol::Rank),
            _ => Err(Error::Config(format!(
                "unknown protocol {s:?} (expected rps or rank)"
            ))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Rps => "rps",
            Protocol::Rank => "rank",
        })
    }
}

/// Full strategy with every deviation-handling branch, or the stripped-down
/// honest-path implementation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Full,
    Honest,
}

/// Latched "from now on, output X while undecided" modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForcedOutput {
    AlwaysBot,
    AlwaysZero,
    AlwaysOne,
}

impl ForcedOutput {
    pub fn output(self) -> OutputValue {
        match self {
            ForcedOutput::AlwaysBot => OutputValue::Bot,
            ForcedOutput::AlwaysZero => OutputValue::Zero,
            ForcedOutput::AlwaysOne => OutputValue::One,
        }
    }
}

fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// `max(1, ceil(c * log2 n))`.
pub fn rank_bits_for(n: usize, c: f64) -> u32 {
    let bits = (c * (n.max(1) as f64).log2()).ceil();
    if bits.is_nan() || bits < 1.0 {
        1
    } else if bits > f64::from(u32::MAX) {
        u32::MAX
    } else {
        bits as u32
    }
}

/// `60 * ceil(log2 n) * 3^(2 * max_degree)` rounds for rps and
/// `60 * ceil(log2 n)` for rank, with `ceil(log2 n)` floored at 1.
pub fn default_round_cap(protocol: Protocol, graph: &Graph) -> u64 {
    let log = u64::from(ceil_log2(graph.n()).max(1));
    match protocol {
        Protocol::Rank => 60 * log,
        Protocol::Rps => {
            let exp = u32::try_from(2 * graph.max_degree()).unwrap_or(u32::MAX);
            3u64.checked_pow(exp)
                .and_then(|p| p.checked_mul(60 * log))
                .unwrap_or(u64::MAX)
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub graph: Arc<Graph>,
    pub protocol: Protocol,
    pub variant: Variant,
    pub master_seed: u64,
    /// `None` selects [`default_round_cap`].
    pub round_cap: Option<u64>,
    /// `None` selects `ceil(3 log2 n)`.
    pub rank_bits: Option<u32>,
    /// Per-node payoff for joining; `None` means 1 for every node.
    pub payoffs: Option<Vec<f64>>,
    pub deviations: Vec<DeviationSpec>,
    pub record_trace: bool,
    pub signatures: SignatureBackend,
}

impl RunConfig {
    pub fn new(graph: Arc<Graph>, protocol: Protocol) -> Self {
        Self {
            graph,
            protocol,
            variant: Variant::Full,
            master_seed: 0,
            round_cap: None,
            rank_bits: None,
            payoffs: None,
            deviations: Vec::new(),
            record_trace: false,
            signatures: SignatureBackend::Ideal,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            master_seed: seed,
            ..self.clone()
        }
    }

    pub fn effective_round_cap(&self) -> u64 {
        self.round_cap
            .unwrap_or_else(|| default_round_cap(self.protocol, &self.graph))
    }

    pub fn effective_rank_bits(&self) -> u32 {
        self.rank_bits
            .unwrap_or_else(|| rank_bits_for(self.graph.n(), DEFAULT_RANK_BITS_C))
    }

    pub fn payoff(&self, i: NodeId) -> f64 {
        self.payoffs.as_ref().map_or(1.0, |v| v[i.idx()])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.n();
        if self.round_cap == Some(0) {
            return Err(Error::Config("round_cap must be at least 1".into()));
        }
        let bits = self.effective_rank_bits();
        if !(1..=crate::rank::RankBits::MAX_LEN).contains(&bits) {
            return Err(Error::Config(format!(
                "rank bit length {bits} outside 1..=64"
            )));
        }
        if let Some(v) = &self.payoffs {
            if v.len() != n {
                return Err(Error::Config(format!("{} payoffs for {n} nodes", v.len())));
            }
            if let Some(bad) = v.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::Config(format!(
                    "payoff {bad} is not a positive number"
                )));
            }
        }
        if !self.deviations.is_empty() && self.variant == Variant::Honest {
            return Err(Error::Config(
                "deviations require the full strategy variant".into(),
            ));
        }
        for spec in &self.deviations {
            if spec.node.idx() >= n {
                return Err(Error::Config(format!(
                    "deviator {} not in graph",
                    spec.node
                )));
            }
            spec.validate_for(self.protocol)?;
        }
        Ok(())
    }
}

/// What a node's strategy sees of the outside world besides its observation.
pub struct NodeContext<'a> {
    node: NodeId,
    round: u64,
    rank_bits: u32,
    key: &'a StreamKey,
    registry: Option<&'a mut KeyRegistry>,
    fault: Option<Error>,
}

impl NodeContext<'_> {
    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn rank_bits(&self) -> u32 {
        self.rank_bits
    }

    /// The node's private stream for this round and purpose.
    pub fn rng(&self, purpose: Purpose) -> StreamRng {
        self.key.stream(self.node, self.round, purpose)
    }

    /// Signs with this node's own key. Nodes cannot sign as anyone else.
    pub fn sign(&mut self, msg: &[u8]) -> Signature {
        let result = match self.registry.as_deref_mut() {
            Some(reg) => reg.sign_as(self.node, msg),
            None => Err(Error::Config("this protocol has no key registry".into())),
        };
        result.unwrap_or_else(|e| {
            self.fault.get_or_insert(e);
            Signature(Vec::new())
        })
    }

    pub fn verify(&self, signer: NodeId, msg: &[u8], sig: &Signature) -> bool {
        self.registry
            .as_deref()
            .is_some_and(|reg| reg.verify_as(signer, msg, sig))
    }
}

/// A node's strategy. Only undecided nodes are asked to act.
pub trait NodeBehavior: Send {
    fn act(&mut self, obs: &Observation<'_>, ctx: &mut NodeContext<'_>) -> Action;

    /// Called with the action the node actually emitted this round, which
    /// differs from what `act` returned when a deviation wraps the strategy.
    fn observe_sent(&mut self, _action: &Action) {}

    fn been_cheated(&self) -> bool {
        false
    }

    fn deviation_stats(&self) -> Option<DeviationStats> {
        None
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DeviationStats {
    pub fired_rounds: u64,
    pub first_fired_round: Option<u64>,
}

/// Hook invoked as the run progresses.
pub trait RoundObserver {
    fn on_action(&mut self, _round: u64, _node: NodeId, _action: &Action) {}
    fn on_round_end(&mut self, _round: u64, _outputs: &[Option<OutputValue>]) {}
}

impl RoundObserver for () {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub round: u64,
    pub node: NodeId,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub node: NodeId,
    pub strategy: String,
    pub activation_round: u64,
    /// Rounds in which the emitted action differed from the honest one.
    pub fired_rounds: u64,
    pub first_fired_round: Option<u64>,
    /// Some honest neighbour of the deviator ended with its cheat flag set.
    pub detected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub protocol: Protocol,
    pub terminated: bool,
    pub rounds_used: u64,
    pub iterations_used: u64,
    pub outputs: Vec<Option<OutputValue>>,
    /// Round in which each output was committed.
    pub output_rounds: Vec<Option<u64>>,
    pub utilities: Vec<UtilityValue>,
    pub cheat_flags: Vec<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deviations: Vec<DeviationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
}

impl RunRecord {
    pub fn ones(&self) -> Vec<NodeId> {
        self.outputs
            .iter()
            .enumerate()
            .filter(|(_, o)| **o == Some(OutputValue::One))
            .map(|(i, _)| NodeId::from(i))
            .collect()
    }

    pub fn is_valid_mis(&self, g: &Graph) -> bool {
        self.terminated
            && self
                .outputs
                .iter()
                .all(|o| matches!(o, Some(OutputValue::One | OutputValue::Zero)))
            && g.is_maximal_independent_set(&self.ones())
    }

    pub fn bot_count(&self) -> usize {
        self.outputs
            .iter()
            .filter(|o| **o == Some(OutputValue::Bot))
            .count()
    }

    pub fn neg_inf_count(&self) -> usize {
        self.utilities.iter().filter(|u| u.is_neg_inf()).count()
    }

    /// Iteration (1-based) containing `round`.
    pub fn iteration_of(&self, round: u64) -> u64 {
        round / self.protocol.rounds_per_iteration() + 1
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("run records always serialise")
    }
}

pub(crate) fn make_behavior(config: &RunConfig, node: NodeId) -> Box<dyn NodeBehavior> {
    let g = &config.graph;
    let nbrs = g.neighbors(node);
    let bits = config.effective_rank_bits();
    let base: Box<dyn NodeBehavior> = match (config.protocol, config.variant) {
        (Protocol::Rps, Variant::Full) => Box::new(RpsNode::new(node, nbrs)),
        (Protocol::Rps, Variant::Honest) => Box::new(HonestRpsNode::new(node, nbrs)),
        (Protocol::Rank, Variant::Full) => Box::new(RankNode::new(node, nbrs, g.n(), bits)),
        (Protocol::Rank, Variant::Honest) => Box::new(HonestRankNode::new(node, nbrs, bits)),
    };
    match config.deviations.iter().find(|d| d.node == node) {
        Some(spec) => Box::new(DeviantBehavior::new(base, spec.clone(), config.protocol)),
        None => base,
    }
}

pub fn run(config: &RunConfig) -> Result<RunRecord> {
    run_observed(config, &mut ())
}

pub fn run_observed(config: &RunConfig, observer: &mut dyn RoundObserver) -> Result<RunRecord> {
    config.validate()?;
    let g = &*config.graph;
    let n = g.n();
    let cap = config.effective_round_cap();
    let rank_bits = config.effective_rank_bits();
    let key = StreamKey::new(config.master_seed);
    let mut registry = match config.protocol {
        Protocol::Rank => Some(KeyRegistry::for_nodes(config.signatures, n, &key)?),
        Protocol::Rps => None,
    };
    let mut nodes: Vec<Box<dyn NodeBehavior>> =
        g.nodes().map(|i| make_behavior(config, i)).collect();

    let mut outputs: Vec<Option<OutputValue>> = vec![None; n];
    let mut output_rounds: Vec<Option<u64>> = vec![None; n];
    let mut pool: Vec<Message> = Vec::new();
    let mut next_pool: Vec<Message> = Vec::new();
    let mut inbox: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut next_inbox: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut active: Vec<NodeId> = g.nodes().collect();
    let mut committed: Vec<(NodeId, OutputValue)> = Vec::new();
    let mut trace = config.record_trace.then(Vec::new);
    let mut round = 0u64;

    while !active.is_empty() && round < cap {
        next_pool.clear();
        committed.clear();
        for &i in &active {
            let obs = Observation::new(round, i, g.neighbors(i), &outputs, &pool, &inbox[i.idx()]);
            let mut ctx = NodeContext {
                node: i,
                round,
                rank_bits,
                key: &key,
                registry: registry.as_mut(),
                fault: None,
            };
            let action = nodes[i.idx()].act(&obs, &mut ctx);
            if let Some(e) = ctx.fault {
                return Err(Error::EngineFault(format!(
                    "node {i} in round {round}: {e}"
                )));
            }
            check_action(config.protocol, g, i, round, &action)?;
            nodes[i.idx()].observe_sent(&action);
            observer.on_action(round, i, &action);
            if let Some(t) = trace.as_mut() {
                t.push(TraceEntry {
                    round,
                    node: i,
                    action: action.clone(),
                });
            }
            if let Some(o) = action.output {
                committed.push((i, o));
            }
            next_pool.extend(action.outbound);
        }
        for &(i, o) in &committed {
            if outputs[i.idx()].is_some() {
                return Err(Error::EngineFault(format!("node {i} overwrote its output")));
            }
            outputs[i.idx()] = Some(o);
            output_rounds[i.idx()] = Some(round);
        }
        for &i in &active {
            inbox[i.idx()].clear();
        }
        for (k, m) in next_pool.iter().enumerate() {
            let k = u32::try_from(k).expect("message pool exceeds u32");
            match m.to {
                Addressing::Broadcast => {
                    for &j in g.neighbors(m.sender) {
                        if outputs[j.idx()].is_none() {
                            next_inbox[j.idx()].push(k);
                        }
                    }
                }
                Addressing::Unicast(j) => {
                    if outputs[j.idx()].is_none() {
                        next_inbox[j.idx()].push(k);
                    }
                }
            }
        }
        std::mem::swap(&mut pool, &mut next_pool);
        std::mem::swap(&mut inbox, &mut next_inbox);
        active.retain(|i| outputs[i.idx()].is_none());
        observer.on_round_end(round, &outputs);
        round += 1;
    }

    let terminated = active.is_empty();
    let utilities = if terminated {
        let v: Vec<f64> = g.nodes().map(|i| config.payoff(i)).collect();
        evaluate_all(g, &outputs, &v)?
    } else {
        vec![UtilityValue::Finite(0.0); n]
    };
    let cheat_flags: Vec<bool> = nodes.iter().map(|b| b.been_cheated()).collect();
    let deviations = config
        .deviations
        .iter()
        .map(|spec| {
            let stats = nodes[spec.node.idx()].deviation_stats().unwrap_or_default();
            let detected = g
                .neighbors(spec.node)
                .iter()
                .any(|&j| cheat_flags[j.idx()] && !config.deviations.iter().any(|d| d.node == j));
            DeviationReport {
                node: spec.node,
                strategy: spec.kind.name().to_string(),
                activation_round: spec.activation_round,
                fired_rounds: stats.fired_rounds,
                first_fired_round: stats.first_fired_round,
                detected,
            }
        })
        .collect();
    let period = config.protocol.rounds_per_iteration();
    Ok(RunRecord {
        seed: config.master_seed,
        protocol: config.protocol,
        terminated,
        rounds_used: round,
        iterations_used: if round == 0 {
            0
        } else {
            (round - 1) / period + 1
        },
        outputs,
        output_rounds,
        utilities,
        cheat_flags,
        deviations,
        trace,
    })
}

fn check_action(
    protocol: Protocol,
    g: &Graph,
    i: NodeId,
    round: u64,
    action: &Action,
) -> Result<()> {
    for m in &action.outbound {
        if m.sender != i {
            return Err(Error::EngineFault(format!(
                "node {i} sent a message as {}",
                m.sender
            )));
        }
        if m.round_sent != round {
            return Err(Error::EngineFault(format!(
                "node {i} stamped round {} in round {round}",
                m.round_sent
            )));
        }
        if let Addressing::Unicast(j) = m.to {
            if protocol == Protocol::Rank {
                return Err(Error::EngineFault(format!(
                    "node {i} used unicast under rank"
                )));
            }
            if !g.has_edge(i, j) {
                return Err(Error::EngineFault(format!(
                    "node {i} addressed non-neighbour {j}"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphFamily;

    fn graph(s: &str) -> Arc<Graph> {
        Arc::new(s.parse::<GraphFamily>().unwrap().build(0).unwrap())
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(5), 3);
        assert_eq!(ceil_log2(1024), 10);
    }

    #[test]
    fn rank_bits_defaults() {
        assert_eq!(rank_bits_for(1, 3.0), 1);
        assert_eq!(rank_bits_for(2, 3.0), 3);
        assert_eq!(rank_bits_for(3, 3.0), 5);
        assert_eq!(rank_bits_for(256, 3.0), 24);
        assert_eq!(rank_bits_for(4096, 3.0), 36);
    }

    #[test]
    fn round_caps() {
        let c5 = graph("cycle:5");
        assert_eq!(default_round_cap(Protocol::Rank, &c5), 180);
        assert_eq!(default_round_cap(Protocol::Rps, &c5), 180 * 81);
        let k1 = graph("edgeless:1");
        assert_eq!(default_round_cap(Protocol::Rps, &k1), 60);
        assert_eq!(
            default_round_cap(Protocol::Rps, &graph("star:200")),
            u64::MAX
        );
    }

    struct Fixed(Action);

    impl NodeBehavior for Fixed {
        fn act(&mut self, _: &Observation<'_>, _: &mut NodeContext<'_>) -> Action {
            self.0.clone()
        }
    }

    fn step_with(protocol: Protocol, action: Action) -> Result<()> {
        let g = graph("path:3");
        let key = StreamKey::new(0);
        let mut ctx = NodeContext {
            node: NodeId(0),
            round: 0,
            rank_bits: 4,
            key: &key,
            registry: None,
            fault: None,
        };
        let outputs = vec![None; 3];
        let obs = Observation::new(0, NodeId(0), g.neighbors(NodeId(0)), &outputs, &[], &[]);
        let a = Fixed(action).act(&obs, &mut ctx);
        check_action(protocol, &g, NodeId(0), 0, &a)
    }

    #[test]
    fn engine_rejects_bad_addressing() {
        let mv = Payload::RpsMove(Move::Rock);
        let spoof = Message::unicast(NodeId(1), NodeId(0), 0, mv.clone());
        assert!(matches!(
            step_with(
                Protocol::Rps,
                Action {
                    outbound: vec![spoof],
                    output: None
                }
            ),
            Err(Error::EngineFault(_))
        ));
        let far = Message::unicast(NodeId(0), NodeId(2), 0, mv.clone());
        assert!(step_with(
            Protocol::Rps,
            Action {
                outbound: vec![far],
                output: None
            }
        )
        .is_err());
        let uni = Message::unicast(NodeId(0), NodeId(1), 0, mv.clone());
        assert!(step_with(
            Protocol::Rps,
            Action {
                outbound: vec![uni.clone()],
                output: None
            }
        )
        .is_ok());
        assert!(step_with(
            Protocol::Rank,
            Action {
                outbound: vec![uni],
                output: None
            }
        )
        .is_err());
        let late = Message::broadcast(NodeId(0), 3, mv);
        assert!(step_with(
            Protocol::Rank,
            Action {
                outbound: vec![late],
                output: None
            }
        )
        .is_err());
    }

    #[test]
    fn config_validation() {
        let g = graph("complete:2");
        let mut c = RunConfig::new(g, Protocol::Rps);
        c.round_cap = Some(0);
        assert!(matches!(run(&c), Err(Error::Config(_))));
        c.round_cap = None;
        c.payoffs = Some(vec![1.0, 0.0]);
        assert!(run(&c).is_err());
        c.payoffs = Some(vec![1.0]);
        assert!(run(&c).is_err());
        c.payoffs = None;
        c.rank_bits = Some(65);
        assert!(run(&c).is_err());
    }
}
