//! Repeat-authenticate multicast of blockchain headers to IoT clients.
//!
//! A base station multicasts each new block header `k` times (a repetition
//! code) together with `s` server signatures per period. Clients chain the
//! headers they receive and authenticate a whole prefix with one trusted
//! signature. A client whose authenticated lag exceeds the deadline `d`
//! sends a one-bit feedback and is resynchronized by unicast.
//!
//! - [`analysis`]: closed-form QoS model and its enumeration oracle.
//! - [`chain`]: per-client header chain and lag tracking.
//! - [`codec`]: wire formats, header digest and signature schemes.
//! - [`sim`]: seeded Monte Carlo simulator of the full protocol.

pub mod analysis;
pub mod chain;
pub mod codec;
pub mod sim;

pub use analysis::{qos, ChannelProbs, ParamError, SystemParams, TransitionModel};
pub use sim::{run, SimConfig, SimReport};
