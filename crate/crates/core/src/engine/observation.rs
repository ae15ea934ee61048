use super::message::{Message, OutputValue};
use crate::graph::NodeId;

/// Everything a node sees at the start of a round: its inbox and the outputs
/// its neighbours committed in earlier rounds.
#[derive(Clone, Copy, Debug)]
pub struct Observation<'a> {
    pub round: u64,
    pub node: NodeId,
    neighbors: &'a [NodeId],
    outputs: &'a [Option<OutputValue>],
    pool: &'a [Message],
    inbox: &'a [u32],
}

impl<'a> Observation<'a> {
    pub(crate) fn new(
        round: u64,
        node: NodeId,
        neighbors: &'a [NodeId],
        outputs: &'a [Option<OutputValue>],
        pool: &'a [Message],
        inbox: &'a [u32],
    ) -> Self {
        Self {
            round,
            node,
            neighbors,
            outputs,
            pool,
            inbox,
        }
    }

    pub fn neighbors(&self) -> &'a [NodeId] {
        self.neighbors
    }

    /// Messages delivered to this node this round, in sender order.
    pub fn inbox(&self) -> impl Iterator<Item = &'a Message> + 'a {
        let pool = self.pool;
        self.inbox.iter().map(move |&k| &pool[k as usize])
    }

    pub fn from(&self, sender: NodeId) -> impl Iterator<Item = &'a Message> + 'a {
        self.inbox().filter(move |m| m.sender == sender)
    }

    pub fn neighbor_output(&self, j: NodeId) -> Option<OutputValue> {
        debug_assert!(
            self.neighbors.binary_search(&j).is_ok(),
            "{j} is not a neighbour"
        );
        self.outputs[j.idx()]
    }

    pub fn neighbor_outputs(&self) -> impl Iterator<Item = (NodeId, Option<OutputValue>)> + 'a {
        let outputs = self.outputs;
        self.neighbors.iter().map(move |&j| (j, outputs[j.idx()]))
    }
}
