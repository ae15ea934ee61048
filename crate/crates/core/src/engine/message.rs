use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::NodeId;
use crate::rank::RankBits;
use crate::signing::Signature;

/// Committed output of a node. Undecided nodes have no output at all.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputValue {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "bot")]
    Bot,
}

/// Rock-paper-scissors move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Rock,
    Paper,
    Scissors,
}

impl Move {
    pub const ALL: [Move; 3] = [Move::Rock, Move::Paper, Move::Scissors];

    pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Move {
        Move::ALL[rng.gen_range(0..3)]
    }

    /// True when `self` beats `other` under the usual rules.
    pub fn beats(self, other: Move) -> bool {
        matches!(
            (self, other),
            (Move::Rock, Move::Scissors)
                | (Move::Paper, Move::Rock)
                | (Move::Scissors, Move::Paper)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Addressing {
    Broadcast,
    Unicast(NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Payload {
    RpsMove(Move),
    OpponentChoice(NodeId),
    SelfRand(RankBits),
    PairRand {
        iteration: u64,
        from: NodeId,
        to: NodeId,
        bits: RankBits,
        sig: Signature,
    },
    ForwardedPairRand {
        iteration: u64,
        opponent: NodeId,
        bits: RankBits,
        sig: Signature,
    },
    Garbage(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub sender: NodeId,
    pub to: Addressing,
    pub round_sent: u64,
    pub payload: Payload,
}

impl Message {
    pub fn broadcast(sender: NodeId, round: u64, payload: Payload) -> Self {
        Self {
            sender,
            to: Addressing::Broadcast,
            round_sent: round,
            payload,
        }
    }

    pub fn unicast(sender: NodeId, to: NodeId, round: u64, payload: Payload) -> Self {
        Self {
            sender,
            to: Addressing::Unicast(to),
            round_sent: round,
            payload,
        }
    }
}

/// What a node does in one round.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub outbound: Vec<Message>,
    pub output: Option<OutputValue>,
}

impl Action {
    pub fn output(value: OutputValue) -> Self {
        Self {
            outbound: Vec::new(),
            output: Some(value),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.outbound.is_empty() && self.output.is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamKey};

    #[test]
    fn beats_is_a_cycle() {
        for a in Move::ALL {
            assert!(!a.beats(a));
            let wins = Move::ALL.iter().filter(|&&b| a.beats(b)).count();
            assert_eq!(wins, 1);
            for b in Move::ALL {
                assert!(!(a.beats(b) && b.beats(a)));
            }
        }
    }

    #[test]
    fn uniform_moves() {
        let key = StreamKey::new(11);
        let mut counts = [0u32; 3];
        for round in 0..30_000 {
            let m = Move::uniform(&mut key.stream(NodeId(0), round, Purpose::Move(NodeId(1))));
            counts[m as usize] += 1;
        }
        for c in counts {
            assert!(
                (f64::from(c) / 30_000.0 - 1.0 / 3.0).abs() < 0.01,
                "{counts:?}"
            );
        }
    }

    #[test]
    fn output_serialises_compactly() {
        assert_eq!(serde_json::to_string(&OutputValue::Bot).unwrap(), "\"bot\"");
        assert_eq!(serde_json::to_string(&OutputValue::One).unwrap(), "\"1\"");
    }
}
