//! Rock-paper-scissors tournament strategy.
//!
//! Iterations have three rounds: play one independent game against each
//! undecided neighbour, join if every game was won, then react to what the
//! neighbours did. [`RpsNode`] carries every deviation-handling branch;
//! [`HonestRpsNode`] is the same strategy on the honest path only.

mod honest;

pub use honest::HonestRpsNode;

use serde::{Deserialize, Serialize};

pub use crate::engine::Move;
use crate::engine::{
    Action, Addressing, ForcedOutput, Message, NodeBehavior, NodeContext, Observation, OutputValue,
    Payload,
};
use crate::graph::NodeId;
use crate::rng::Purpose;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    IWins,
    JWins,
    Tie,
}

/// Result of one game. `None` is an invalid or missing move, which loses to
/// any valid move and ties with another invalid one.
pub fn rps_outcome(s_i: Option<Move>, s_j: Option<Move>) -> Outcome {
    match (s_i, s_j) {
        (Some(a), Some(b)) if a.beats(b) => Outcome::IWins,
        (Some(a), Some(b)) if b.beats(a) => Outcome::JWins,
        (Some(_), None) => Outcome::IWins,
        (None, Some(_)) => Outcome::JWins,
        _ => Outcome::Tie,
    }
}

/// The single valid move `j` sent to this node, if it sent exactly one
/// message and that message is a move.
pub(crate) fn move_from(obs: &Observation<'_>, j: NodeId) -> Option<Move> {
    let mut msgs = obs.from(j);
    match (msgs.next(), msgs.next()) {
        (Some(m), None) => match m.payload {
            Payload::RpsMove(mv) => Some(mv),
            _ => None,
        },
        _ => None,
    }
}

#[derive(Clone, Debug)]
pub struct RpsNode {
    id: NodeId,
    isolated: bool,
    undecided: Vec<NodeId>,
    been_cheated: bool,
    forced: Option<ForcedOutput>,
    iteration: u64,
    last_round: u64,
    sent: Vec<(NodeId, Option<Move>)>,
    outcomes: Vec<(NodeId, Outcome)>,
}

impl RpsNode {
    pub fn new(id: NodeId, neighbors: &[NodeId]) -> Self {
        Self {
            id,
            isolated: neighbors.is_empty(),
            undecided: neighbors.to_vec(),
            been_cheated: false,
            forced: None,
            iteration: 0,
            last_round: 0,
            sent: Vec::new(),
            outcomes: Vec::new(),
        }
    }

    pub fn undecided_neighbors(&self) -> &[NodeId] {
        &self.undecided
    }

    pub fn forced(&self) -> Option<ForcedOutput> {
        self.forced
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn outcome_against(&self, j: NodeId) -> Option<Outcome> {
        self.outcomes.iter().find(|(k, _)| *k == j).map(|(_, o)| *o)
    }

    fn force(&mut self, mode: ForcedOutput) -> Action {
        self.forced = Some(mode);
        Action::output(mode.output())
    }

    fn prune_zeros(&mut self, obs: &Observation<'_>) {
        self.undecided
            .retain(|&j| obs.neighbor_output(j) != Some(OutputValue::Zero));
    }

    fn play(&mut self, obs: &Observation<'_>, ctx: &NodeContext<'_>) -> Action {
        self.prune_zeros(obs);
        let outbound = self
            .undecided
            .iter()
            .filter(|&&j| obs.neighbor_output(j).is_none())
            .map(|&j| {
                let mv = Move::uniform(&mut ctx.rng(Purpose::Move(j)));
                Message::unicast(self.id, j, obs.round, Payload::RpsMove(mv))
            })
            .collect();
        Action {
            outbound,
            output: None,
        }
    }

    fn join(&mut self, obs: &Observation<'_>) -> Action {
        let mut premature_one = false;
        let mut early = false;
        for &j in &self.undecided {
            match obs.neighbor_output(j) {
                Some(OutputValue::One) => {
                    premature_one = true;
                    early = true;
                }
                Some(OutputValue::Bot) => early = true,
                _ => {}
            }
        }
        if early {
            self.been_cheated |= premature_one;
            return self.force(ForcedOutput::AlwaysBot);
        }
        self.prune_zeros(obs);
        self.outcomes.clear();
        for &j in &self.undecided {
            let theirs = move_from(obs, j);
            if theirs.is_none() {
                self.been_cheated = true;
            }
            let mine = self
                .sent
                .iter()
                .find(|(k, _)| *k == j)
                .and_then(|(_, m)| *m);
            self.outcomes.push((j, rps_outcome(mine, theirs)));
        }
        if self.outcomes.iter().all(|(_, o)| *o == Outcome::IWins) {
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
            if winners
                .iter()
                .any(|&j| self.outcome_against(j) != Some(Outcome::JWins))
            {
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

impl NodeBehavior for RpsNode {
    fn act(&mut self, obs: &Observation<'_>, ctx: &mut NodeContext<'_>) -> Action {
        if let Some(mode) = self.forced {
            return Action::output(mode.output());
        }
        if self.isolated {
            return self.force(ForcedOutput::AlwaysOne);
        }
        self.iteration = obs.round / 3 + 1;
        self.last_round = obs.round;
        match obs.round % 3 {
            0 => self.play(obs, ctx),
            1 => self.join(obs),
            _ => self.react(obs),
        }
    }

    /// Records the moves that actually left this node, so a node whose own
    /// move went missing scores that game as invalid.
    fn observe_sent(&mut self, action: &Action) {
        if !self.last_round.is_multiple_of(3) || self.forced.is_some() {
            return;
        }
        self.sent.clear();
        for &j in &self.undecided {
            let mut moves = action.outbound.iter().filter(|m| {
                matches!(m.to, Addressing::Broadcast) || m.to == Addressing::Unicast(j)
            });
            let mv = match (moves.next(), moves.next()) {
                (Some(m), None) => match m.payload {
                    Payload::RpsMove(mv) => Some(mv),
                    _ => None,
                },
                _ => None,
            };
            self.sent.push((j, mv));
        }
    }

    fn been_cheated(&self) -> bool {
        self.been_cheated
    }
}
