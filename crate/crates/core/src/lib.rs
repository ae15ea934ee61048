//! Deterministic simulator and analysis harness for maximal independent set
//! protocols run by rational (payoff-maximising) nodes.
//!
//! Two strategy algorithms are implemented on top of a synchronous LOCAL-model
//! engine:
//!
//! * [`rps`]: every undecided node plays an independent rock-paper-scissors game
//!   with each undecided neighbour and joins the set when it wins all of them.
//! * [`rank`]: every node draws a rank jointly with a chosen opponent; the
//!   opponent's share is signed and forwarded so neighbours can verify it.
//!
//! Both come in a full variant (with every deviation-handling branch) and an
//! independently written honest variant used for differential testing. The
//! [`deviations`] catalog injects unilateral deviations and [`analysis`]
//! aggregates Monte-Carlo trials and provides an exact oracle for graphs with
//! at most three nodes.

pub mod analysis;
pub mod deviations;
pub mod engine;
pub mod error;
pub mod graph;
pub mod rank;
pub mod rng;
pub mod rps;
pub mod signing;
pub mod utility;

pub use engine::{
    run, run_observed, Action, Addressing, Message, OutputValue, Payload, Protocol, RunConfig,
    RunRecord, Variant,
};
pub use error::{Error, Result};
pub use graph::{Graph, GraphFamily, NodeId};
pub use utility::UtilityValue;
