//! Signed-rank strategy.
//!
//! Iterations have five rounds: announce an opponent, exchange random shares
//! (the share issued to a challenger is signed), forward the opponent's signed
//! share, compute every neighbour's rank and join if strictly smallest, then
//! react to neighbours' decisions. A node's rank is its own share XOR the
//! share its opponent issued to it, so neither party controls it alone.

mod bits;
mod honest;

pub use bits::RankBits;
pub use honest::HonestRankNode;

use rand::Rng;

use crate::engine::{
    Action, ForcedOutput, Message, NodeBehavior, NodeContext, Observation, OutputValue, Payload,
};
use crate::graph::NodeId;
use crate::rng::Purpose;
use crate::signing::{Signature, SigningInput};

/// The single message of the given kind that `j` sent this round.
fn single<'a, T>(
    obs: &Observation<'a>,
    j: NodeId,
    pick: impl Fn(&'a Payload) -> Option<T>,
) -> Option<T> {
    let mut found = obs.from(j).filter_map(|m| pick(&m.payload));
    match (found.next(), found.next()) {
        (Some(x), None) => Some(x),
        _ => None,
    }
}

#[derive(Clone, Debug)]
pub struct RankNode {
    id: NodeId,
    n: usize,
    len: u32,
    isolated: bool,
    undecided: Vec<NodeId>,
    been_cheated: bool,
    forced: Option<ForcedOutput>,
    iteration: u64,
    last_round: u64,
    /// Opponent this node validly announced in round 1.
    opp: Option<NodeId>,
    /// Opponent each undecided neighbour announced, if any.
    announced: Vec<(NodeId, Option<NodeId>)>,
    self_rand: Option<RankBits>,
    received: Option<(RankBits, Signature)>,
    own_rank_ones: bool,
    rank: RankBits,
    nbr_self_rand: Vec<(NodeId, Option<RankBits>)>,
    preset_ones: Vec<NodeId>,
    nbr_rank: Vec<(NodeId, RankBits)>,
}

impl RankNode {
    pub fn new(id: NodeId, neighbors: &[NodeId], n: usize, len: u32) -> Self {
        Self {
            id,
            n,
            len,
            isolated: neighbors.is_empty(),
            undecided: neighbors.to_vec(),
            been_cheated: false,
            forced: None,
            iteration: 0,
            last_round: 0,
            opp: None,
            announced: Vec::new(),
            self_rand: None,
            received: None,
            own_rank_ones: false,
            rank: RankBits::ones(len),
            nbr_self_rand: Vec::new(),
            preset_ones: Vec::new(),
            nbr_rank: Vec::new(),
        }
    }

    pub fn undecided_neighbors(&self) -> &[NodeId] {
        &self.undecided
    }

    pub fn forced(&self) -> Option<ForcedOutput> {
        self.forced
    }

    pub fn rank(&self) -> RankBits {
        self.rank
    }

    /// This node's view of neighbour `j`'s rank in the current iteration.
    pub fn rank_of(&self, j: NodeId) -> Option<RankBits> {
        self.nbr_rank.iter().find(|(k, _)| *k == j).map(|(_, r)| *r)
    }

    fn force(&mut self, mode: ForcedOutput) -> Action {
        self.forced = Some(mode);
        Action::output(mode.output())
    }

    fn prune_zeros(&mut self, obs: &Observation<'_>) {
        self.undecided
            .retain(|&j| obs.neighbor_output(j) != Some(OutputValue::Zero));
    }

    /// Aborts if an undecided neighbour has already output 1 or abort.
    fn abort_on_early_output(&mut self, obs: &Observation<'_>) -> Option<Action> {
        let mut early = false;
        for &j in &self.undecided {
            match obs.neighbor_output(j) {
                Some(OutputValue::One) => {
                    self.been_cheated = true;
                    early = true;
                }
                Some(OutputValue::Bot) => early = true,
                _ => {}
            }
        }
        early.then(|| self.force(ForcedOutput::AlwaysBot))
    }

    fn select_opponent(&mut self, obs: &Observation<'_>, ctx: &NodeContext<'_>) -> Action {
        self.prune_zeros(obs);
        if let Some(a) = self.abort_on_early_output(obs) {
            return a;
        }
        if self.undecided.is_empty() {
            return self.force(ForcedOutput::AlwaysOne);
        }
        self.opp = None;
        self.announced.clear();
        self.self_rand = None;
        self.received = None;
        self.own_rank_ones = false;
        self.rank = RankBits::ones(self.len);
        self.nbr_self_rand.clear();
        self.preset_ones.clear();
        self.nbr_rank.clear();
        let k = self.undecided[ctx
            .rng(Purpose::Opponent)
            .gen_range(0..self.undecided.len())];
        Action {
            outbound: vec![Message::broadcast(
                self.id,
                obs.round,
                Payload::OpponentChoice(k),
            )],
            output: None,
        }
    }

    fn generate(&mut self, obs: &Observation<'_>, ctx: &mut NodeContext<'_>) -> Action {
        let n = self.n;
        for &j in &self.undecided {
            let choice = single(obs, j, |p| match p {
                Payload::OpponentChoice(k) if *k != j && k.idx() < n => Some(*k),
                _ => None,
            });
            self.announced.push((j, choice));
        }
        if self.opp.is_none() {
            self.own_rank_ones = true;
        }
        let mut outbound = Vec::new();
        let mine = RankBits::uniform(&mut ctx.rng(Purpose::SelfRand), self.len);
        outbound.push(Message::broadcast(
            self.id,
            obs.round,
            Payload::SelfRand(mine),
        ));
        for &(j, choice) in &self.announced {
            if choice == Some(self.id) {
                let bits = RankBits::uniform(&mut ctx.rng(Purpose::PairRand(j)), self.len);
                let sig = ctx.sign(&SigningInput::new(self.iteration, self.id, j, bits));
                outbound.push(Message::broadcast(
                    self.id,
                    obs.round,
                    Payload::PairRand {
                        iteration: self.iteration,
                        from: self.id,
                        to: j,
                        bits,
                        sig,
                    },
                ));
            }
        }
        for &(j, choice) in &self.announced {
            if choice.is_none() && obs.neighbor_output(j).is_none() {
                self.preset_ones.push(j);
                self.been_cheated = true;
            }
        }
        Action {
            outbound,
            output: None,
        }
    }

    fn forward(&mut self, obs: &Observation<'_>, ctx: &NodeContext<'_>) -> Action {
        let len = self.len;
        for &j in &self.undecided {
            let r = single(obs, j, |p| match p {
                Payload::SelfRand(b) if b.len() == len => Some(*b),
                _ => None,
            });
            self.nbr_self_rand.push((j, r));
        }
        let Some(k) = self.opp else {
            return Action::default();
        };
        let (iter, me) = (self.iteration, self.id);
        let share = obs.from(k).find_map(|m| match &m.payload {
            Payload::PairRand {
                iteration,
                from,
                to,
                bits,
                sig,
            } if *iteration == iter
                && *from == k
                && *to == me
                && bits.len() == len
                && ctx.verify(k, &SigningInput::new(iter, k, me, *bits), sig) =>
            {
                Some((*bits, sig.clone()))
            }
            _ => None,
        });
        match share {
            Some((bits, sig)) => {
                self.received = Some((bits, sig.clone()));
                let fwd = Payload::ForwardedPairRand {
                    iteration: iter,
                    opponent: k,
                    bits,
                    sig,
                };
                Action {
                    outbound: vec![Message::broadcast(me, obs.round, fwd)],
                    output: None,
                }
            }
            None => {
                self.been_cheated = true;
                self.own_rank_ones = true;
                Action::default()
            }
        }
    }

    fn compute_and_join(&mut self, obs: &Observation<'_>, ctx: &NodeContext<'_>) -> Action {
        if let Some(a) = self.abort_on_early_output(obs) {
            return a;
        }
        self.prune_zeros(obs);
        self.rank = match (self.own_rank_ones, self.self_rand, &self.received) {
            (false, Some(mine), Some((theirs, _))) => mine.xor(*theirs),
            _ => RankBits::ones(self.len),
        };
        let (iter, len) = (self.iteration, self.len);
        self.nbr_rank.clear();
        for idx in 0..self.undecided.len() {
            let j = self.undecided[idx];
            if self.preset_ones.contains(&j) {
                self.nbr_rank.push((j, RankBits::ones(len)));
                continue;
            }
            let opp_j = self
                .announced
                .iter()
                .find(|(k, _)| *k == j)
                .and_then(|(_, c)| *c);
            let self_j = self
                .nbr_self_rand
                .iter()
                .find(|(k, _)| *k == j)
                .and_then(|(_, r)| *r);
            let fwd = single(obs, j, |p| match p {
                Payload::ForwardedPairRand {
                    iteration,
                    opponent,
                    bits,
                    sig,
                } => Some((*iteration, *opponent, *bits, sig)),
                _ => None,
            });
            let rank_j = match (opp_j, self_j, fwd) {
                (Some(k), Some(own), Some((it, o, bits, sig)))
                    if it == iter
                        && o == k
                        && bits.len() == len
                        && ctx.verify(k, &SigningInput::new(iter, k, j, bits), sig) =>
                {
                    Some(own.xor(bits))
                }
                _ => None,
            };
            let rank_j = rank_j.unwrap_or_else(|| {
                self.been_cheated = true;
                RankBits::ones(len)
            });
            self.nbr_rank.push((j, rank_j));
        }
        if self.nbr_rank.iter().all(|(_, r)| self.rank < *r) {
            Action::output(OutputValue::One)
        } else {
            Action::default()
        }
    }

    fn react(&mut self, obs: &Observation<'_>) -> Action {
        let visible = |j: &NodeId| obs.neighbor_output(*j);
        if self
            .undecided
            .iter()
            .any(|j| visible(j) == Some(OutputValue::Bot))
        {
            return self.force(ForcedOutput::AlwaysBot);
        }
        let winners: Vec<NodeId> = self
            .undecided
            .iter()
            .copied()
            .filter(|j| visible(j) == Some(OutputValue::One))
            .collect();
        if !winners.is_empty() {
            let all_smaller = winners
                .iter()
                .all(|&j| self.rank_of(j).is_some_and(|r| r < self.rank));
            if !all_smaller {
                self.been_cheated = true;
            }
            let mode = if self.been_cheated {
                ForcedOutput::AlwaysBot
            } else {
                ForcedOutput::AlwaysZero
            };
            return self.force(mode);
        }
        self.prune_zeros(obs);
        if self.undecided.is_empty() {
            return self.force(ForcedOutput::AlwaysOne);
        }
        Action::default()
    }
}

impl NodeBehavior for RankNode {
    fn act(&mut self, obs: &Observation<'_>, ctx: &mut NodeContext<'_>) -> Action {
        if let Some(mode) = self.forced {
            return Action::output(mode.output());
        }
        if self.isolated {
            return self.force(ForcedOutput::AlwaysOne);
        }
        self.iteration = obs.round / 5 + 1;
        self.last_round = obs.round;
        match obs.round % 5 {
            0 => self.select_opponent(obs, ctx),
            1 => self.generate(obs, ctx),
            2 => self.forward(obs, ctx),
            3 => self.compute_and_join(obs, ctx),
            _ => self.react(obs),
        }
    }

    /// Tracks what this node really announced, so that a node whose own
    /// messages went missing or were malformed adopts the all-ones rank its
    /// neighbours will assign it.
    fn observe_sent(&mut self, action: &Action) {
        if self.forced.is_some() {
            return;
        }
        let sent = || action.outbound.iter().map(|m| &m.payload);
        match self.last_round % 5 {
            0 => {
                let mut choices = sent().filter_map(|p| match p {
                    Payload::OpponentChoice(k) => Some(*k),
                    _ => None,
                });
                self.opp = match (choices.next(), choices.next()) {
                    (Some(k), None) if self.undecided.contains(&k) => Some(k),
                    _ => None,
                };
            }
            1 => {
                let len = self.len;
                let mut mine = sent().filter_map(|p| match p {
                    Payload::SelfRand(b) => Some(*b),
                    _ => None,
                });
                self.self_rand = match (mine.next(), mine.next()) {
                    (Some(b), None) if b.len() == len => Some(b),
                    _ => None,
                };
                if self.self_rand.is_none() {
                    self.own_rank_ones = true;
                }
            }
            2 => {
                if let (Some((bits, sig)), Some(k)) = (&self.received, self.opp) {
                    let iter = self.iteration;
                    let mut fwds =
                        sent().filter(|p| matches!(p, Payload::ForwardedPairRand { .. }));
                    let ok = match (fwds.next(), fwds.next()) {
                        (
                            Some(Payload::ForwardedPairRand {
                                iteration,
                                opponent,
                                bits: b,
                                sig: s,
                            }),
                            None,
                        ) => *iteration == iter && *opponent == k && b == bits && s == sig,
                        _ => false,
                    };
                    if !ok {
                        self.own_rank_ones = true;
                    }
                }
            }
            _ => {}
        }
    }

    fn been_cheated(&self) -> bool {
        self.been_cheated
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, Protocol, RunConfig};
    use crate::graph::GraphFamily;
    use std::sync::Arc;

    fn config(s: &str) -> RunConfig {
        let g = s.parse::<GraphFamily>().unwrap().build(0).unwrap();
        RunConfig::new(Arc::new(g), Protocol::Rank)
    }

    #[test]
    fn isolated_node_joins() {
        let rec = run(&config("edgeless:2")).unwrap();
        assert_eq!(rec.outputs, vec![Some(OutputValue::One); 2]);
        assert_eq!(rec.rounds_used, 1);
    }

    #[test]
    fn k2_resolves_with_one_winner() {
        let c = config("complete:2");
        for seed in 0..200 {
            let rec = run(&c.with_seed(seed)).unwrap();
            assert!(rec.terminated);
            assert_eq!(rec.ones().len(), 1);
            assert!(rec.cheat_flags.iter().all(|f| !f));
            let w = rec.ones()[0];
            assert_eq!(
                rec.output_rounds[w.idx()].unwrap() % 5,
                3,
                "joins in round four"
            );
        }
    }

    #[test]
    fn broadcasts_only() {
        let mut c = config("cycle:6");
        c.record_trace = true;
        let rec = run(&c.with_seed(1)).unwrap();
        for e in rec.trace.unwrap() {
            for m in e.action.outbound {
                assert_eq!(m.to, crate::engine::Addressing::Broadcast);
            }
        }
    }
}
