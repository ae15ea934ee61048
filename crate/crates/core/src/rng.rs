//! Keyed, counter-based random streams.
//!
//! Every random decision in a run draws from a stream addressed by
//! `(master_seed, node, round, purpose)`. Streams never share state, so an
//! honest node's draws are identical whether or not some other node deviates.
//! The generator is SplitMix64 over a keyed stream offset; it is not
//! cryptographically secure.

use rand::{Error as RandError, RngCore, SeedableRng};

use crate::graph::NodeId;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a stream is used for. Distinct purposes never collide for the same
/// `(node, round)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// RPS move played against the given neighbour.
    Move(NodeId),
    /// Opponent selection in the rank protocol.
    Opponent,
    /// The node's own rank share `r_{i->i}`.
    SelfRand,
    /// The share `r_{i->j}` issued to the given neighbour.
    PairRand(NodeId),
    /// Key material.
    KeyGen,
    /// Randomness consumed by an injected deviation.
    Deviation(u32),
    /// Graph generation.
    Graph,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Move(j) => (1 << 40) | u64::from(j.0),
            Purpose::Opponent => 2 << 40,
            Purpose::SelfRand => 3 << 40,
            Purpose::PairRand(j) => (4 << 40) | u64::from(j.0),
            Purpose::KeyGen => 5 << 40,
            Purpose::Deviation(k) => (6 << 40) | u64::from(k),
            Purpose::Graph => 7 << 40,
        }
    }
}

/// Derives independent streams from a master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    key: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        Self {
            key: mix64(master_seed ^ 0x005E_ED0F_7A11_DA7A),
        }
    }

    pub fn stream(&self, node: NodeId, round: u64, purpose: Purpose) -> StreamRng {
        let mut h = mix64(self.key ^ u64::from(node.0).wrapping_mul(GOLDEN));
        h = mix64(h ^ round.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        h = mix64(h ^ purpose.tag());
        StreamRng { state: h }
    }
}

/// SplitMix64 stream.
#[derive(Clone, Debug)]
pub struct StreamRng {
    state: u64,
}

impl RngCore for StreamRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.fill_bytes(dest);
        Ok(())
    }
}

impl SeedableRng for StreamRng {
    type Seed = [u8; 8];

    fn from_seed(seed: Self::Seed) -> Self {
        Self {
            state: mix64(u64::from_le_bytes(seed)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible() {
        let k = StreamKey::new(42);
        let draw = || {
            let mut r = k.stream(NodeId(3), 7, Purpose::SelfRand);
            (0..4).map(|_| r.next_u64()).collect::<Vec<_>>()
        };
        let (a, b) = (draw(), draw());
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_addresses_give_distinct_streams() {
        let k = StreamKey::new(1);
        let first = |n, r, p| k.stream(NodeId(n), r, p).next_u64();
        let base = first(0, 0, Purpose::SelfRand);
        assert_ne!(base, first(1, 0, Purpose::SelfRand));
        assert_ne!(base, first(0, 1, Purpose::SelfRand));
        assert_ne!(base, first(0, 0, Purpose::Opponent));
        assert_ne!(
            first(0, 0, Purpose::Move(NodeId(1))),
            first(0, 0, Purpose::Move(NodeId(2)))
        );
        assert_ne!(
            base,
            StreamKey::new(2)
                .stream(NodeId(0), 0, Purpose::SelfRand)
                .next_u64()
        );
    }

    #[test]
    fn uniform_bits() {
        let k = StreamKey::new(9);
        let mut ones = 0u32;
        for round in 0..2000 {
            let v = k.stream(NodeId(0), round, Purpose::SelfRand).gen::<u64>();
            ones += v.count_ones();
        }
        let freq = f64::from(ones) / (2000.0 * 64.0);
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }
}
