//! Closed-form QoS model of the repeat-authenticate scheme.
//!
//! A client is tracked by a renewal process over states `{0, 1, ..., d}`:
//! in state 1 it checks whether the block generated `d` periods ago is
//! authenticated. It fails (state 0, unicast resync) or moves to the state
//! `j` given by the oldest chained trusted signature in the window.
//! [`transition_probs`] gives the exit probabilities of state 1,
//! [`time_in_state_one`] the long-run fraction of time spent there, and
//! [`average_failures`] the mean number of resyncs per period over `U`
//! clients.

mod binomial;
mod enumerate;
mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binomial::{binomial_exact, hypergeometric_pmf, ln_binomial};
pub use enumerate::{enumerate_transition_probs, ENUMERATION_LIMIT};
pub use model::{
    average_failures, grouped_chain, qos, time_in_state_one, transition_probs,
    trusted_signature_prob, GroupedChain, TransitionModel, TransitionVector,
};

use crate::codec::{HEADER_BITS, SIGNATURE_BITS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error(
        "budget of {budget_bits} bits leaves no room for a signature after {repetitions} blocks \
         of {block_bits} bits (signature {signature_bits} bits)"
    )]
    InsufficientBudget {
        budget_bits: u32,
        repetitions: u32,
        block_bits: u32,
        signature_bits: u32,
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("enumeration over {outcomes} outcomes exceeds the limit of {limit}")]
    TooLarge { outcomes: u128, limit: u128 },
}

fn invalid(msg: impl Into<String>) -> ParamError {
    ParamError::InvalidParams(msg.into())
}

/// Scalar model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// V: number of servers.
    pub servers: u32,
    /// U: number of clients.
    pub clients: u32,
    /// b: multicast bits per block period.
    pub budget_bits: u32,
    /// k: repetitions of each block.
    pub repetitions: u32,
    /// d: maximum tolerated authentication delay, in block periods.
    pub deadline: u32,
    /// l_b: block packet length in bits.
    pub block_bits: u32,
    /// l_s: signature packet length in bits.
    pub signature_bits: u32,
    /// P_bit: per-bit error probability.
    pub bit_error: f64,
    /// V_u: servers trusted by each client.
    pub trusted_per_client: u32,
}

impl SystemParams {
    /// Common defaults: b = 8000, d = 10, wire packet lengths, one trusted server.
    pub fn with_defaults(servers: u32, clients: u32, repetitions: u32, bit_error: f64) -> Self {
        SystemParams {
            servers,
            clients,
            budget_bits: 8000,
            repetitions,
            deadline: 10,
            block_bits: HEADER_BITS,
            signature_bits: SIGNATURE_BITS,
            bit_error,
            trusted_per_client: 1,
        }
    }

    /// Checks every invariant, including that at least one signature fits.
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.servers == 0 || self.servers > u16::MAX as u32 {
            return Err(invalid(format!(
                "servers must be in 1..=65535, got {}",
                self.servers
            )));
        }
        if self.clients == 0 {
            return Err(invalid("clients must be at least 1"));
        }
        if self.budget_bits == 0 || self.block_bits == 0 || self.signature_bits == 0 {
            return Err(invalid("budget and packet lengths must be positive"));
        }
        if self.repetitions == 0 || self.repetitions > self.deadline {
            return Err(invalid(format!(
                "repetitions must satisfy 1 <= k <= d, got k={} d={}",
                self.repetitions, self.deadline
            )));
        }
        if self.trusted_per_client == 0 || self.trusted_per_client > self.servers {
            return Err(invalid(format!(
                "trusted servers per client must be in 1..=V, got {} with V={}",
                self.trusted_per_client, self.servers
            )));
        }
        if !(0.0..=1.0).contains(&self.bit_error) {
            return Err(invalid(format!(
                "bit error probability {} outside [0, 1]",
                self.bit_error
            )));
        }
        self.signatures().map(|_| ())
    }

    /// Signatures multicast per period, clamped to the V available.
    pub fn signatures(&self) -> Result<u32, ParamError> {
        signatures_per_period(
            self.budget_bits,
            self.repetitions,
            self.block_bits,
            self.signature_bits,
        )
        .map(|s| s.min(self.servers))
    }

    pub fn channel(&self) -> ChannelProbs {
        packet_loss_probs(self.bit_error, self.block_bits, self.signature_bits)
    }

    /// `V / s > d`: each server's signature is multicast at least once per
    /// deadline window on average.
    pub fn is_valid_region(&self) -> Result<bool, ParamError> {
        let s = self.signatures()?;
        Ok(self.servers as u64 > self.deadline as u64 * s as u64)
    }
}

/// Number of signatures that fit in the multicast budget after `k` blocks:
/// `floor((b - k l_b) / l_s)`.
pub fn signatures_per_period(
    budget_bits: u32,
    repetitions: u32,
    block_bits: u32,
    signature_bits: u32,
) -> Result<u32, ParamError> {
    let insufficient = ParamError::InsufficientBudget {
        budget_bits,
        repetitions,
        block_bits,
        signature_bits,
    };
    if signature_bits == 0 {
        return Err(invalid("signature length must be positive"));
    }
    let blocks = repetitions as u64 * block_bits as u64;
    let left = (budget_bits as u64)
        .checked_sub(blocks)
        .ok_or(insufficient.clone())?;
    let s = left / signature_bits as u64;
    if s < 1 {
        return Err(insufficient);
    }
    Ok(s as u32)
}

/// Packet loss probabilities of the downlink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelProbs {
    /// Block packet loss probability.
    pub block_loss: f64,
    /// Signature packet loss probability.
    pub signature_loss: f64,
}

/// `1 - (1 - P_bit)^l` for both packet lengths.
pub fn packet_loss_probs(bit_error: f64, block_bits: u32, signature_bits: u32) -> ChannelProbs {
    // -expm1(l * ln(1 - p)) keeps precision for small p.
    let loss = |bits: u32| -> f64 {
        if bit_error >= 1.0 {
            return 1.0;
        }
        (-(bits as f64 * (-bit_error).ln_1p()).exp_m1()).clamp(0.0, 1.0)
    };
    ChannelProbs {
        block_loss: loss(block_bits),
        signature_loss: loss(signature_bits),
    }
}
