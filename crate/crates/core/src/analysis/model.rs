use std::ops::Index;

use serde::{Deserialize, Serialize};

use super::binomial::hypergeometric_pmf;
use super::{invalid, ChannelProbs, ParamError, SystemParams};

/// Probability that a client receives at least one signature from a server
/// it trusts in one period, when `s` of the `V` signatures are drawn
/// uniformly without replacement and each is lost with `signature_loss`.
pub fn trusted_signature_prob(
    servers: u32,
    trusted: u32,
    signatures: u32,
    signature_loss: f64,
) -> Result<f64, ParamError> {
    if servers == 0 || trusted == 0 || trusted > servers {
        return Err(invalid(format!(
            "need 1 <= V_u <= V, got V_u={trusted} V={servers}"
        )));
    }
    if signatures == 0 || signatures > servers {
        return Err(invalid(format!(
            "need 1 <= s <= V, got s={signatures} V={servers}"
        )));
    }
    check_prob("signature loss", signature_loss)?;
    // Sum the miss probability instead of p_s itself, normalized by the
    // total weight. Small misses keep their relative precision, and both
    // endpoints (a certain hit, a certain loss) come out exact.
    let (mut miss, mut total) = (0.0, 0.0);
    for j in 0..=trusted.min(signatures) {
        let weight =
            hypergeometric_pmf(servers as u64, trusted as u64, signatures as u64, j as u64);
        miss += weight * signature_loss.powi(j as i32);
        total += weight;
    }
    Ok((1.0 - miss / total).clamp(0.0, 1.0))
}

fn check_prob(name: &str, p: f64) -> Result<(), ParamError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(format!("{name} probability {p} outside [0, 1]")))
    }
}

/// Exit probabilities of state 1, indexed by the destination state
/// `0..=d`. Entry 0 is the failure probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionVector(Vec<f64>);

impl TransitionVector {
    /// Wraps a raw vector; fails unless it has at least two entries in
    /// `[0, 1]` (up to 1e-12 of rounding, which is clamped away) summing to
    /// one within 1e-9.
    pub fn new(mut probs: Vec<f64>) -> Result<Self, ParamError> {
        if probs.len() < 2 {
            return Err(invalid("transition vector needs d >= 1"));
        }
        for p in &mut probs {
            if (-1e-12..=1.0 + 1e-12).contains(p) {
                *p = p.clamp(0.0, 1.0);
            }
            check_prob("transition", *p)?;
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("transition vector sums to {total}")));
        }
        Ok(TransitionVector(probs))
    }

    pub fn deadline(&self) -> u32 {
        (self.0.len() - 1) as u32
    }

    /// p_{1,0}.
    pub fn failure(&self) -> f64 {
        self.0[0]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Index<usize> for TransitionVector {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

// Blocks 1..=d-k+1 of the window have had all k repetitions; block i beyond
// that has had d-i+1.
fn first_branch(p_s: f64, block_ok: f64, j: u32) -> f64 {
    p_s * (1.0 - p_s).powi(j as i32 - 1) * block_ok.powi(j as i32)
}

fn second_branch(p_s: f64, block_loss: f64, k: u32, d: u32, j: u32) -> f64 {
    let full = d - k + 1;
    let block_ok = 1.0 - block_loss.powi(k as i32);
    let partial: f64 = (full + 1..=j)
        .map(|i| 1.0 - block_loss.powi((d - i + 1) as i32))
        .product();
    p_s * (1.0 - p_s).powi(j as i32 - 1) * block_ok.powi(full as i32) * partial
}

/// Closed-form transition probabilities out of state 1.
///
/// For `1 <= j <= d-k+1`: `p_s (1-p_s)^(j-1) (1-p_eb^k)^j`; for larger `j`
/// the newest blocks contribute `1 - p_eb^(d-i+1)` each. The failure entry
/// is one minus the rest.
pub fn transition_probs(
    p_s: f64,
    block_loss: f64,
    repetitions: u32,
    deadline: u32,
) -> Result<TransitionVector, ParamError> {
    check_window(p_s, block_loss, repetitions, deadline)?;
    let (k, d) = (repetitions, deadline);
    let block_ok = 1.0 - block_loss.powi(k as i32);
    let mut probs = vec![0.0; d as usize + 1];
    for j in 1..=d {
        probs[j as usize] = if j <= d - k + 1 {
            first_branch(p_s, block_ok, j)
        } else {
            second_branch(p_s, block_loss, k, d, j)
        };
    }
    let rest: f64 = probs[1..].iter().sum();
    probs[0] = (1.0 - rest).max(0.0);
    Ok(TransitionVector(probs))
}

pub(super) fn check_window(p_s: f64, block_loss: f64, k: u32, d: u32) -> Result<(), ParamError> {
    check_prob("trusted signature", p_s)?;
    check_prob("block loss", block_loss)?;
    if k == 0 || k > d {
        return Err(invalid(format!("need 1 <= k <= d, got k={k} d={d}")));
    }
    Ok(())
}

/// Three-state chain over {0, 1, G} with every state `j >= 2` lumped into G.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedChain {
    /// Row-stochastic transition matrix, rows and columns ordered (0, 1, G).
    pub transition: [[f64; 3]; 3],
    /// Relative visit frequencies `(p_{1,0}, 1, sum_{j>=2} p_{1,j})`; every
    /// visit to 0 or G is followed by a visit to 1, so these count visits
    /// per visit to state 1 and are not normalized.
    pub visits: [f64; 3],
}

pub fn grouped_chain(p: &TransitionVector) -> GroupedChain {
    let grouped: f64 = p.as_slice()[2..].iter().sum();
    GroupedChain {
        transition: [[0.0, 1.0, 0.0], [p[0], p[1], grouped], [0.0, 1.0, 0.0]],
        visits: [p[0], 1.0, grouped],
    }
}

/// Long-run fraction of periods in which the client is in state 1:
/// `1 / (d p_{1,0} + p_{1,1} + sum_{j>=2} j p_{1,j})`.
pub fn time_in_state_one(p: &TransitionVector) -> f64 {
    let d = p.deadline() as f64;
    let weighted: f64 = p.as_slice()[1..]
        .iter()
        .enumerate()
        .map(|(i, &pj)| (i + 1) as f64 * pj)
        .sum();
    1.0 / (d * p.failure() + weighted)
}

/// Average failures per period, `U T p_{1,0}`.
pub fn average_failures(clients: u32, time_in_state_one: f64, failure: f64) -> f64 {
    clients as f64 * time_in_state_one * failure
}

/// Every quantity of the model for one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub params: SystemParams,
    /// s after clamping to V.
    pub signatures: u32,
    pub channel: ChannelProbs,
    /// p_s.
    pub trusted_signature: f64,
    pub transitions: TransitionVector,
    /// T.
    pub time_in_state_one: f64,
    /// Φ.
    pub phi: f64,
    /// `V / s > d`.
    pub valid: bool,
    /// Set when only one signature fits per period.
    pub single_signature: bool,
}

pub fn qos(params: &SystemParams) -> Result<TransitionModel, ParamError> {
    params.validate()?;
    let signatures = params.signatures()?;
    if signatures == 1 {
        log::warn!(
            "only one signature per period fits in {} bits",
            params.budget_bits
        );
    }
    let channel = params.channel();
    let trusted_signature = trusted_signature_prob(
        params.servers,
        params.trusted_per_client,
        signatures,
        channel.signature_loss,
    )?;
    let transitions = transition_probs(
        trusted_signature,
        channel.block_loss,
        params.repetitions,
        params.deadline,
    )?;
    let time = time_in_state_one(&transitions);
    let phi = average_failures(params.clients, time, transitions.failure());
    Ok(TransitionModel {
        params: *params,
        signatures,
        channel,
        trusted_signature,
        transitions,
        time_in_state_one: time,
        phi,
        valid: params.is_valid_region()?,
        single_signature: signatures == 1,
    })
}
