use crate::engine::{
    Action, Message, Move, NodeBehavior, NodeContext, Observation, OutputValue, Payload,
};
use crate::graph::NodeId;
use crate::rng::Purpose;

/// Honest-path rps strategy: assumes every neighbour follows the protocol,
/// so it never validates moves or checks for premature outputs.
#[derive(Clone, Debug)]
pub struct HonestRpsNode {
    id: NodeId,
    isolated: bool,
    undecided: Vec<NodeId>,
    my_moves: Vec<(NodeId, Move)>,
}

impl HonestRpsNode {
    pub fn new(id: NodeId, neighbors: &[NodeId]) -> Self {
        Self {
            id,
            isolated: neighbors.is_empty(),
            undecided: neighbors.to_vec(),
            my_moves: Vec::new(),
        }
    }
}

impl NodeBehavior for HonestRpsNode {
    fn act(&mut self, obs: &Observation<'_>, ctx: &mut NodeContext<'_>) -> Action {
        if self.isolated {
            return Action::output(OutputValue::One);
        }
        match obs.round % 3 {
            0 => {
                self.undecided
                    .retain(|&j| obs.neighbor_output(j) != Some(OutputValue::Zero));
                self.my_moves = self
                    .undecided
                    .iter()
                    .map(|&j| (j, Move::uniform(&mut ctx.rng(Purpose::Move(j)))))
                    .collect();
                let outbound = self
                    .my_moves
                    .iter()
                    .map(|&(j, mv)| Message::unicast(self.id, j, obs.round, Payload::RpsMove(mv)))
                    .collect();
                Action {
                    outbound,
                    output: None,
                }
            }
            1 => {
                let won_all = self.my_moves.iter().all(|&(j, mine)| {
                    obs.from(j).any(
                        |m| matches!(m.payload, Payload::RpsMove(theirs) if mine.beats(theirs)),
                    )
                });
                if won_all {
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
