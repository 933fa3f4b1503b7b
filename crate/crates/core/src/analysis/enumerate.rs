//! Brute-force evaluation of the state-1 exit distribution.
//!
//! Window index `i = 1..=d` is the block generated `d - i + 1` periods before
//! the check, together with the trusted signature sent alongside it. Block
//! `i` has had `min(k, d - i + 1)` transmissions and is lost only if all of
//! them failed; its signature arrives with probability `p_s`. Every joint
//! outcome of the `2d` events is enumerated and its probability is added to
//! the state it leads to: the smallest `i` whose signature arrived with
//! blocks `1..=i` all held, or 0 if there is none.

use super::model::{check_window, TransitionVector};
use super::ParamError;

/// Upper bound on enumerated outcomes (`4^d`); admits `d <= 11`.
pub const ENUMERATION_LIMIT: u128 = 1 << 22;

pub fn enumerate_transition_probs(
    p_s: f64,
    block_loss: f64,
    repetitions: u32,
    deadline: u32,
) -> Result<TransitionVector, ParamError> {
    check_window(p_s, block_loss, repetitions, deadline)?;
    let d = deadline as usize;
    let outcomes = 1u128.checked_shl(2 * deadline).unwrap_or(u128::MAX);
    if outcomes > ENUMERATION_LIMIT {
        return Err(ParamError::TooLarge {
            outcomes,
            limit: ENUMERATION_LIMIT,
        });
    }

    let block_held: Vec<f64> = (1..=d)
        .map(|i| {
            let sends = (repetitions as usize).min(d - i + 1);
            1.0 - (0..sends).map(|_| block_loss).product::<f64>()
        })
        .collect();

    let mut probs = vec![0.0; d + 1];
    // Low d bits: block received; high d bits: signature received.
    for mask in 0u64..(outcomes as u64) {
        let mut weight = 1.0;
        for (i, &held) in block_held.iter().enumerate() {
            let block = mask >> i & 1 == 1;
            let sig = mask >> (d + i) & 1 == 1;
            weight *= if block { held } else { 1.0 - held };
            weight *= if sig { p_s } else { 1.0 - p_s };
        }
        if weight == 0.0 {
            continue;
        }
        let mut state = 0;
        for i in 0..d {
            if mask >> i & 1 == 0 {
                break;
            }
            if mask >> (d + i) & 1 == 1 {
                state = i + 1;
                break;
            }
        }
        probs[state] += weight;
    }
    TransitionVector::new(probs)
}
