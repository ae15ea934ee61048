use std::cmp::Ordering;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// An `L`-bit string, `1 <= L <= 64`, stored in the low bits of a `u64`.
/// Ordering is big-endian unsigned, i.e. plain integer order on `value`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RankBits {
    value: u64,
    len: u32,
}

impl RankBits {
    pub const MAX_LEN: u32 = 64;

    fn mask(len: u32) -> u64 {
        if len >= 64 {
            u64::MAX
        } else {
            (1u64 << len) - 1
        }
    }

    /// Truncates `value` to its low `len` bits.
    pub fn new(value: u64, len: u32) -> Self {
        assert!(
            (1..=Self::MAX_LEN).contains(&len),
            "bit length {len} out of range"
        );
        Self {
            value: value & Self::mask(len),
            len,
        }
    }

    pub fn ones(len: u32) -> Self {
        Self::new(u64::MAX, len)
    }

    pub fn zeros(len: u32) -> Self {
        Self::new(0, len)
    }

    pub fn uniform<R: Rng + ?Sized>(rng: &mut R, len: u32) -> Self {
        Self::new(rng.gen(), len)
    }

    /// Each bit is 1 independently with probability `p_one`.
    pub fn biased<R: Rng + ?Sized>(rng: &mut R, len: u32, p_one: f64) -> Self {
        let value = (0..len).fold(0u64, |acc, k| acc | (u64::from(rng.gen_bool(p_one)) << k));
        Self::new(value, len)
    }

    pub fn value(self) -> u64 {
        self.value
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> u32 {
        self.len
    }

    pub fn xor(self, other: Self) -> Self {
        assert_eq!(self.len, other.len, "xor of strings with different lengths");
        Self {
            value: self.value ^ other.value,
            len: self.len,
        }
    }

    pub fn flip_low_bit(self) -> Self {
        Self {
            value: self.value ^ 1,
            len: self.len,
        }
    }
}

impl PartialOrd for RankBits {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RankBits {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value.cmp(&other.value).then(self.len.cmp(&other.len))
    }
}

impl fmt::Debug for RankBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$b}", self.value, width = self.len as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeId;
    use crate::rng::{Purpose, StreamKey};

    #[test]
    fn xor_example() {
        let r = RankBits::new(0b0101, 4).xor(RankBits::new(0b0011, 4));
        assert_eq!(r, RankBits::new(0b0110, 4));
        assert_eq!(format!("{r:?}"), "0110");
    }

    #[test]
    fn ordering_is_unsigned() {
        assert!(RankBits::new(0b0010, 4) < RankBits::new(0b1000, 4));
        assert!(RankBits::ones(4) > RankBits::new(0b1110, 4));
        assert_eq!(RankBits::ones(64).value(), u64::MAX);
        assert_eq!(RankBits::new(0xff, 4).value(), 0xf);
    }

    #[test]
    fn uniform_bit_frequency() {
        let key = StreamKey::new(3);
        let mut ones = 0u32;
        let draws = 100_000 / 20;
        for round in 0..draws {
            let r = RankBits::uniform(&mut key.stream(NodeId(1), round, Purpose::SelfRand), 20);
            ones += r.value().count_ones();
        }
        let freq = f64::from(ones) / f64::from(draws as u32 * 20);
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn biased_extremes() {
        let mut rng = StreamKey::new(0).stream(NodeId(0), 0, Purpose::Deviation(0));
        assert_eq!(RankBits::biased(&mut rng, 8, 1.0), RankBits::ones(8));
        assert_eq!(RankBits::biased(&mut rng, 8, 0.0), RankBits::zeros(8));
    }
}
