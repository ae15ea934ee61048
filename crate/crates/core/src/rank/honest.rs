use rand::Rng;

use super::RankBits;
use crate::engine::{
    Action, Message, NodeBehavior, NodeContext, Observation, OutputValue, Payload,
};
use crate::graph::NodeId;
use crate::rng::Purpose;
use crate::signing::SigningInput;

/// Honest-path rank strategy: trusts every message, verifies no signatures
/// and never aborts.
#[derive(Clone, Debug)]
pub struct HonestRankNode {
    id: NodeId,
    len: u32,
    isolated: bool,
    undecided: Vec<NodeId>,
    opp: NodeId,
    self_rand: RankBits,
    rank: RankBits,
    nbr_self_rand: Vec<(NodeId, RankBits)>,
}

impl HonestRankNode {
    pub fn new(id: NodeId, neighbors: &[NodeId], len: u32) -> Self {
        Self {
            id,
            len,
            isolated: neighbors.is_empty(),
            undecided: neighbors.to_vec(),
            opp: id,
            self_rand: RankBits::zeros(len),
            rank: RankBits::ones(len),
            nbr_self_rand: Vec::new(),
        }
    }
}

impl NodeBehavior for HonestRankNode {
    fn act(&mut self, obs: &Observation<'_>, ctx: &mut NodeContext<'_>) -> Action {
        if self.isolated {
            return Action::output(OutputValue::One);
        }
        let iteration = obs.round / 5 + 1;
        let me = self.id;
        let send = |payload| Message::broadcast(me, obs.round, payload);
        match obs.round % 5 {
            0 => {
                self.undecided
                    .retain(|&j| obs.neighbor_output(j) != Some(OutputValue::Zero));
                if self.undecided.is_empty() {
                    return Action::output(OutputValue::One);
                }
                let pick = ctx
                    .rng(Purpose::Opponent)
                    .gen_range(0..self.undecided.len());
                self.opp = self.undecided[pick];
                Action {
                    outbound: vec![send(Payload::OpponentChoice(self.opp))],
                    output: None,
                }
            }
            1 => {
                self.self_rand = RankBits::uniform(&mut ctx.rng(Purpose::SelfRand), self.len);
                let mut outbound = vec![send(Payload::SelfRand(self.self_rand))];
                for &j in &self.undecided {
                    let chose_me = obs
                        .from(j)
                        .any(|m| m.payload == Payload::OpponentChoice(me));
                    if chose_me {
                        let bits = RankBits::uniform(&mut ctx.rng(Purpose::PairRand(j)), self.len);
                        let sig = ctx.sign(&SigningInput::new(iteration, me, j, bits));
                        outbound.push(send(Payload::PairRand {
                            iteration,
                            from: me,
                            to: j,
                            bits,
                            sig,
                        }));
                    }
                }
                Action {
                    outbound,
                    output: None,
                }
            }
            2 => {
                self.nbr_self_rand.clear();
                for m in obs.inbox() {
                    if let Payload::SelfRand(b) = m.payload {
                        self.nbr_self_rand.push((m.sender, b));
                    }
                }
                let opp = self.opp;
                let share = obs.from(opp).find_map(|m| match &m.payload {
                    Payload::PairRand { to, bits, sig, .. } if *to == me => {
                        Some((*bits, sig.clone()))
                    }
                    _ => None,
                });
                // Only reachable off the honest path; keep the worst rank.
                let Some((bits, sig)) = share else {
                    self.rank = RankBits::ones(self.len);
                    return Action::default();
                };
                self.rank = self.self_rand.xor(bits);
                let fwd = Payload::ForwardedPairRand {
                    iteration,
                    opponent: opp,
                    bits,
                    sig,
                };
                Action {
                    outbound: vec![send(fwd)],
                    output: None,
                }
            }
            3 => {
                let smallest = self.undecided.iter().all(|&j| {
                    let own = self
                        .nbr_self_rand
                        .iter()
                        .find(|(k, _)| *k == j)
                        .map(|(_, b)| *b);
                    let fwd = obs.from(j).find_map(|m| match m.payload {
                        Payload::ForwardedPairRand { bits, .. } => Some(bits),
                        _ => None,
                    });
                    let theirs = match (own, fwd) {
                        (Some(a), Some(b)) => a.xor(b),
                        _ => RankBits::ones(self.len),
                    };
                    self.rank < theirs
                });
                if smallest {
                    Action::output(OutputValue::One)
                } else {
                    Action::default()
                }
            }
            _ => {
                if self
                    .undecided
                    .iter()
                    .any(|&j| obs.neighbor_output(j) == Some(OutputValue::One))
                {
                    return Action::output(OutputValue::Zero);
                }
                self.undecided
                    .retain(|&j| obs.neighbor_output(j) != Some(OutputValue::Zero));
                if self.undecided.is_empty() {
                    Action::output(OutputValue::One)
                } else {
                    Action::default()
                }
            }
        }
    }
}
