//! Catalog of unilateral deviations.
//!
//! A [`DeviantBehavior`] wraps a node's full strategy: every round it asks the
//! strategy for the honest action, rewrites it according to the deviation, and
//! reports the action actually sent back to the strategy so its bookkeeping
//! matches what the neighbours saw.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::engine::{
    Action, DeviationStats, Move, NodeBehavior, NodeContext, Observation, OutputValue, Payload,
    Protocol,
};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::rank::RankBits;
use crate::rng::Purpose;
use crate::signing::{Signature, SigningInput};

/// Upper bound on the size of an injected garbage payload.
pub const MAX_GARBAGE_LEN: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum DeviationKind {
    /// Moves drawn with the given probabilities instead of uniformly.
    BiasedMoves {
        rock: f64,
        paper: f64,
        scissors: f64,
    },
    /// Sends nothing; outputs are unchanged.
    Silent,
    /// Replaces payloads with random bytes and signatures with random blobs.
    GarbageSender {
        len: usize,
    },
    EarlyOne,
    EarlyZero,
    EarlyBot,
    /// Own and issued rank shares with bits that are 1 with probability `p_one`.
    BiasedRand {
        p_one: f64,
    },
    /// Forwards the previous iteration's signed share.
    StaleForward,
    /// Forwards bits that would give this node rank zero, under the real signature.
    WrongForward,
}

impl DeviationKind {
    pub fn name(&self) -> &'static str {
        match self {
            DeviationKind::BiasedMoves { .. } => "biased_moves",
            DeviationKind::Silent => "silent",
            DeviationKind::GarbageSender { .. } => "garbage_sender",
            DeviationKind::EarlyOne => "early_one",
            DeviationKind::EarlyZero => "early_zero",
            DeviationKind::EarlyBot => "early_bot",
            DeviationKind::BiasedRand { .. } => "biased_rand",
            DeviationKind::StaleForward => "stale_forward",
            DeviationKind::WrongForward => "wrong_forward",
        }
    }

    pub fn applies_to(&self, protocol: Protocol) -> bool {
        match self {
            DeviationKind::BiasedMoves { .. } => protocol == Protocol::Rps,
            DeviationKind::BiasedRand { .. }
            | DeviationKind::StaleForward
            | DeviationKind::WrongForward => protocol == Protocol::Rank,
            _ => true,
        }
    }

    /// Whether some honest neighbour can prove the deviation happened.
    pub fn is_detectable(&self) -> bool {
        matches!(
            self,
            DeviationKind::Silent
                | DeviationKind::GarbageSender { .. }
                | DeviationKind::EarlyOne
                | DeviationKind::StaleForward
                | DeviationKind::WrongForward
        )
    }

    /// Every catalog entry applicable to `protocol`, with default parameters.
    pub fn catalog(protocol: Protocol) -> Vec<DeviationKind> {
        let all = [
            DeviationKind::BiasedMoves {
                rock: 1.0,
                paper: 0.0,
                scissors: 0.0,
            },
            DeviationKind::Silent,
            DeviationKind::GarbageSender { len: 8 },
            DeviationKind::EarlyOne,
            DeviationKind::EarlyZero,
            DeviationKind::EarlyBot,
            DeviationKind::BiasedRand { p_one: 0.1 },
            DeviationKind::StaleForward,
            DeviationKind::WrongForward,
        ];
        all.into_iter().filter(|k| k.applies_to(protocol)).collect()
    }

    fn validate(&self) -> Result<()> {
        match *self {
            DeviationKind::BiasedMoves {
                rock,
                paper,
                scissors,
            } => {
                let ps = [rock, paper, scissors];
                if ps.iter().any(|p| !(0.0..=1.0).contains(p))
                    || ((rock + paper + scissors) - 1.0).abs() > 1e-9
                {
                    return Err(Error::Config(format!(
                        "move probabilities ({rock}, {paper}, {scissors}) are not a distribution"
                    )));
                }
            }
            DeviationKind::GarbageSender { len } if len == 0 || len > MAX_GARBAGE_LEN => {
                return Err(Error::Config(format!(
                    "garbage length {len} outside 1..={MAX_GARBAGE_LEN}"
                )));
            }
            DeviationKind::BiasedRand { p_one } if !(0.0..=1.0).contains(&p_one) => {
                return Err(Error::Config(format!(
                    "bit probability {p_one} outside [0,1]"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationSpec {
    pub node: NodeId,
    pub kind: DeviationKind,
    /// First round in which the deviation is applied.
    #[serde(default)]
    pub activation_round: u64,
}

impl DeviationSpec {
    pub fn new(node: NodeId, kind: DeviationKind) -> Self {
        Self {
            node,
            kind,
            activation_round: 0,
        }
    }

    pub fn validate_for(&self, protocol: Protocol) -> Result<()> {
        if !self.kind.applies_to(protocol) {
            return Err(Error::Config(format!(
                "deviation {} does not apply to the {protocol} protocol",
                self.kind.name()
            )));
        }
        self.kind.validate()
    }
}

/// `node=0,strategy=biased_moves,rock=1,paper=0,scissors=0,activation=3`.
/// Parameters: `rock`, `paper`, `scissors` (biased_moves), `len`
/// (garbage_sender, default 8), `p` (biased_rand, default 0.1).
impl FromStr for DeviationSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut node = None;
        let mut strategy = None;
        let mut activation = 0u64;
        let mut params: Vec<(&str, f64)> = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, found {part:?}")))?;
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad number {v:?} for {k}")))
            };
            let int = |v: &str| {
                v.parse::<u64>()
                    .map_err(|_| Error::Config(format!("bad integer {v:?} for {k}")))
            };
            match k {
                "node" => {
                    node = Some(NodeId(
                        u32::try_from(int(v)?)
                            .map_err(|_| Error::Config("node id too large".into()))?,
                    ))
                }
                "strategy" => strategy = Some(v),
                "activation" => activation = int(v)?,
                "rock" | "paper" | "scissors" | "len" | "p" => params.push((k, num(v)?)),
                _ => return Err(Error::Config(format!("unknown deviation key {k:?}"))),
            }
        }
        let param = |name: &str, default: f64| {
            params
                .iter()
                .find(|(k, _)| *k == name)
                .map_or(default, |(_, v)| *v)
        };
        let node = node.ok_or_else(|| Error::Config("deviation needs node=<id>".into()))?;
        let strategy =
            strategy.ok_or_else(|| Error::Config("deviation needs strategy=<name>".into()))?;
        let kind = match strategy {
            "biased_moves" => DeviationKind::BiasedMoves {
                rock: param("rock", 1.0),
                paper: param("paper", 0.0),
                scissors: param("scissors", 0.0),
            },
            "silent" => DeviationKind::Silent,
            "garbage_sender" => {
                let len = param("len", 8.0);
                if len.fract() != 0.0 || len < 0.0 {
                    return Err(Error::Config(format!(
                        "garbage length {len} is not an integer"
                    )));
                }
                DeviationKind::GarbageSender { len: len as usize }
            }
            "early_one" => DeviationKind::EarlyOne,
            "early_zero" => DeviationKind::EarlyZero,
            "early_bot" => DeviationKind::EarlyBot,
            "biased_rand" => DeviationKind::BiasedRand {
                p_one: param("p", 0.1),
            },
            "stale_forward" => DeviationKind::StaleForward,
            "wrong_forward" => DeviationKind::WrongForward,
            other => {
                return Err(Error::Config(format!(
                    "unknown deviation strategy {other:?}"
                )))
            }
        };
        kind.validate()?;
        Ok(DeviationSpec {
            node,
            kind,
            activation_round: activation,
        })
    }
}

impl fmt::Display for DeviationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node={},strategy={}", self.node, self.kind.name())?;
        match self.kind {
            DeviationKind::BiasedMoves {
                rock,
                paper,
                scissors,
            } => write!(f, ",rock={rock},paper={paper},scissors={scissors}")?,
            DeviationKind::GarbageSender { len } => write!(f, ",len={len}")?,
            DeviationKind::BiasedRand { p_one } => write!(f, ",p={p_one}")?,
            _ => {}
        }
        if self.activation_round != 0 {
            write!(f, ",activation={}", self.activation_round)?;
        }
        Ok(())
    }
}

pub struct DeviantBehavior {
    inner: Box<dyn NodeBehavior>,
    spec: DeviationSpec,
    protocol: Protocol,
    last_self_rand: Option<RankBits>,
    last_forward: Option<(u64, NodeId, RankBits, Signature)>,
    stats: DeviationStats,
}

impl DeviantBehavior {
    pub fn new(inner: Box<dyn NodeBehavior>, spec: DeviationSpec, protocol: Protocol) -> Self {
        Self {
            inner,
            spec,
            protocol,
            last_self_rand: None,
            last_forward: None,
            stats: DeviationStats::default(),
        }
    }

    fn apply(
        &mut self,
        mut action: Action,
        obs: &Observation<'_>,
        ctx: &mut NodeContext<'_>,
    ) -> Action {
        let mut rng = ctx.rng(Purpose::Deviation(0));
        match self.spec.kind {
            DeviationKind::BiasedMoves { rock, paper, .. } => {
                for m in &mut action.outbound {
                    if let Payload::RpsMove(mv) = &mut m.payload {
                        let u: f64 = rng.gen();
                        *mv = if u < rock {
                            Move::Rock
                        } else if u < rock + paper {
                            Move::Paper
                        } else {
                            Move::Scissors
                        };
                    }
                }
            }
            DeviationKind::Silent => action.outbound.clear(),
            DeviationKind::GarbageSender { len } => {
                for m in &mut action.outbound {
                    match &mut m.payload {
                        Payload::RpsMove(_) | Payload::OpponentChoice(_) | Payload::SelfRand(_) => {
                            let mut bytes = vec![0u8; len];
                            rng.fill_bytes(&mut bytes);
                            m.payload = Payload::Garbage(bytes);
                        }
                        Payload::PairRand { sig, .. } | Payload::ForwardedPairRand { sig, .. } => {
                            let mut bytes = vec![0u8; 64];
                            rng.fill_bytes(&mut bytes);
                            *sig = Signature(bytes);
                        }
                        Payload::Garbage(_) => {}
                    }
                }
            }
            DeviationKind::EarlyOne => action.output = Some(OutputValue::One),
            DeviationKind::EarlyZero => action.output = Some(OutputValue::Zero),
            DeviationKind::EarlyBot => action.output = Some(OutputValue::Bot),
            DeviationKind::BiasedRand { p_one } => {
                let len = ctx.rank_bits();
                for m in &mut action.outbound {
                    match &mut m.payload {
                        Payload::SelfRand(bits) => *bits = RankBits::biased(&mut rng, len, p_one),
                        Payload::PairRand {
                            iteration,
                            from,
                            to,
                            bits,
                            sig,
                        } => {
                            *bits = RankBits::biased(&mut rng, len, p_one);
                            *sig = ctx.sign(&SigningInput::new(*iteration, *from, *to, *bits));
                        }
                        _ => {}
                    }
                }
            }
            DeviationKind::StaleForward => {
                for m in &mut action.outbound {
                    if let Payload::ForwardedPairRand {
                        iteration,
                        opponent,
                        bits,
                        sig,
                    } = &mut m.payload
                    {
                        match &self.last_forward {
                            Some((it, o, b, s)) if *it < *iteration => {
                                (*iteration, *opponent, *bits, *sig) = (*it, *o, *b, s.clone());
                            }
                            _ => *iteration = iteration.saturating_sub(1),
                        }
                    }
                }
            }
            DeviationKind::WrongForward => {
                for m in &mut action.outbound {
                    if let Payload::ForwardedPairRand { bits, .. } = &mut m.payload {
                        let claimed = self.last_self_rand.unwrap_or(*bits);
                        *bits = if claimed == *bits {
                            claimed.flip_low_bit()
                        } else {
                            claimed
                        };
                    }
                }
            }
        }
        let _ = obs;
        action
    }

    fn remember(&mut self, action: &Action) {
        for m in &action.outbound {
            match &m.payload {
                Payload::SelfRand(b) => self.last_self_rand = Some(*b),
                Payload::ForwardedPairRand {
                    iteration,
                    opponent,
                    bits,
                    sig,
                } => {
                    self.last_forward = Some((*iteration, *opponent, *bits, sig.clone()));
                }
                _ => {}
            }
        }
    }
}

impl NodeBehavior for DeviantBehavior {
    fn act(&mut self, obs: &Observation<'_>, ctx: &mut NodeContext<'_>) -> Action {
        let honest = self.inner.act(obs, ctx);
        if obs.round < self.spec.activation_round {
            self.remember(&honest);
            return honest;
        }
        let deviant = self.apply(honest.clone(), obs, ctx);
        // Remember the honest forward, so a stale replay is a genuine old signature.
        self.remember(&honest);
        if deviant != honest {
            self.stats.fired_rounds += 1;
            self.stats.first_fired_round.get_or_insert(obs.round);
        }
        deviant
    }

    fn observe_sent(&mut self, action: &Action) {
        self.inner.observe_sent(action);
    }

    fn been_cheated(&self) -> bool {
        self.inner.been_cheated()
    }

    fn deviation_stats(&self) -> Option<DeviationStats> {
        debug_assert!(self.spec.kind.applies_to(self.protocol));
        Some(self.stats)
    }
}
