//! Discrete-time Monte Carlo simulation of the repeat-authenticate scheme.
//!
//! One step is one block period `t`:
//!
//! 1. the base station appends block `t`;
//! 2. every client whose authenticated lag now exceeds `d` sends its
//!    feedback bit and is resynchronized over a reliable unicast carrying
//!    heights `t-d..=t` and one signature from its registered server;
//! 3. the base station multicasts blocks `t-k+1..=t` and the signatures of
//!    `s` servers drawn uniformly without replacement, all over block `t`,
//!    and each client receives each packet independently.
//!
//! The lag check in step 2 sees what was received up to period `t-1`, which
//! is the instant at which the analytical model inspects block `t-d`.
//!
//! Randomness comes from one master seed split into ChaCha8 streams:
//! stream 0 samples trusted sets, stream 1 drives the base station's
//! signature draws, and stream `2 + u` drives client `u`'s channel. Adding
//! clients leaves the existing streams untouched.

use std::collections::VecDeque;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{ChannelProbs, ParamError, SystemParams};
use crate::chain::{sign_header, AuthTracker, BlockHeader, SignatureRecord};
use crate::codec::MockScheme;

pub const TRUST_STREAM: u64 = 0;
pub const SCHEDULE_STREAM: u64 = 1;
pub const CLIENT_STREAM_BASE: u64 = 2;

/// Independent generator for one purpose under a master seed.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("invalid simulation config: {0}")]
    Config(String),
}

/// How each client's trusted servers are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustAssignment {
    /// `V_u` servers drawn uniformly without replacement per client.
    Uniform,
    /// Client `u` trusts servers `u+1, u+2, ...` (mod V), so with `U = V`
    /// and `V_u = 1` every client trusts a different server.
    Distinct,
    /// Explicit server ids per client.
    Explicit(Vec<Vec<u16>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: SystemParams,
    pub trust: TrustAssignment,
    /// Total block periods simulated, warm-up included.
    pub periods: u64,
    /// Leading periods excluded from measurement.
    pub warmup: u64,
    pub seed: u64,
    /// Replaces the loss probabilities derived from `bit_error`.
    #[serde(default)]
    pub channel_override: Option<ChannelProbs>,
}

impl SimConfig {
    /// Uniform trust and a warm-up of `10 d` periods before `measured`
    /// measured ones.
    pub fn new(params: SystemParams, measured: u64, seed: u64) -> Self {
        let warmup = 10 * params.deadline as u64;
        SimConfig {
            params,
            trust: TrustAssignment::Uniform,
            periods: warmup + measured,
            warmup,
            seed,
            channel_override: None,
        }
    }

    pub fn measured_periods(&self) -> u64 {
        self.periods.saturating_sub(self.warmup)
    }

    pub fn channel(&self) -> ChannelProbs {
        self.channel_override
            .unwrap_or_else(|| self.params.channel())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        if self.warmup < self.params.deadline as u64 || self.periods <= self.warmup {
            return Err(SimError::Config(format!(
                "need periods > warmup >= d, got periods={} warmup={} d={}",
                self.periods, self.warmup, self.params.deadline
            )));
        }
        if let Some(c) = self.channel_override {
            for p in [c.block_loss, c.signature_loss] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(SimError::Config(format!(
                        "loss probability {p} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Materializes the trusted set of every client; the first entry is the
    /// server registered with the base station.
    pub fn trusted_sets(&self) -> Result<Vec<Vec<u16>>, SimError> {
        let p = &self.params;
        let (v, u, vu) = (
            p.servers as usize,
            p.clients as usize,
            p.trusted_per_client as usize,
        );
        match &self.trust {
            TrustAssignment::Uniform => {
                let mut rng = substream(self.seed, TRUST_STREAM);
                Ok((0..u)
                    .map(|_| {
                        index::sample(&mut rng, v, vu)
                            .iter()
                            .map(|i| i as u16 + 1)
                            .collect()
                    })
                    .collect())
            }
            TrustAssignment::Distinct => Ok((0..u)
                .map(|c| (0..vu).map(|i| ((c + i) % v) as u16 + 1).collect())
                .collect()),
            TrustAssignment::Explicit(sets) => {
                if sets.len() != u {
                    return Err(SimError::Config(format!(
                        "{} trusted sets for {u} clients",
                        sets.len()
                    )));
                }
                for set in sets {
                    if set.is_empty() || set.iter().any(|&s| s == 0 || s as usize > v) {
                        return Err(SimError::Config(format!(
                            "trusted set {set:?} not a nonempty subset of 1..={v}"
                        )));
                    }
                }
                Ok(sets.clone())
            }
        }
    }
}

/// What the base station multicasts in one period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodSchedule {
    pub period: u64,
    /// Heights `t-k+1..=t`, truncated at genesis.
    pub block_heights: std::ops::RangeInclusive<u64>,
    /// Distinct servers whose signature over block `t` is sent, ascending.
    pub signature_servers: Vec<u16>,
}

pub fn schedule_period<R: Rng + ?Sized>(
    t: u64,
    repetitions: u32,
    servers: u32,
    signatures: u32,
    rng: &mut R,
) -> PeriodSchedule {
    let first = (t + 1).saturating_sub(repetitions as u64);
    let mut chosen: Vec<u16> = index::sample(rng, servers as usize, signatures as usize)
        .iter()
        .map(|i| i as u16 + 1)
        .collect();
    chosen.sort_unstable();
    PeriodSchedule {
        period: t,
        block_heights: first..=t,
        signature_servers: chosen,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Packet {
    Block { height: u64 },
    Signature { server_id: u16, height: u64 },
}

/// Downlink from the base station to the clients.
pub trait Channel {
    fn deliver(&mut self, packet: Packet, client: usize, period: u64) -> bool;
}

/// Any `FnMut(packet, client, period) -> bool` is a scripted channel.
impl<F: FnMut(Packet, usize, u64) -> bool> Channel for F {
    fn deliver(&mut self, packet: Packet, client: usize, period: u64) -> bool {
        self(packet, client, period)
    }
}

/// One independent Bernoulli draw: `true` if the packet gets through.
pub fn deliver<R: Rng + ?Sized>(packet: Packet, channel: &ChannelProbs, rng: &mut R) -> bool {
    let loss = match packet {
        Packet::Block { .. } => channel.block_loss,
        Packet::Signature { .. } => channel.signature_loss,
    };
    rng.random::<f64>() >= loss
}

/// Independent losses per packet, per client, per period.
#[derive(Debug, Clone)]
pub struct LossyChannel {
    probs: ChannelProbs,
    rngs: Vec<ChaCha8Rng>,
}

impl LossyChannel {
    pub fn new(probs: ChannelProbs, clients: usize, seed: u64) -> Self {
        LossyChannel {
            probs,
            rngs: (0..clients as u64)
                .map(|u| substream(seed, CLIENT_STREAM_BASE + u))
                .collect(),
        }
    }
}

impl Channel for LossyChannel {
    fn deliver(&mut self, packet: Packet, client: usize, _period: u64) -> bool {
        deliver(packet, &self.probs, &mut self.rngs[client])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PeriodStats {
    pub period: u64,
    /// Feedback bits received by the base station.
    pub failures: u32,
    pub resyncs: u32,
    /// Clients resynchronized this period.
    pub resynced: Vec<usize>,
}

/// Base station, clients and channel.
pub struct World<C> {
    params: SystemParams,
    signatures: u32,
    scheme: MockScheme,
    /// The newest `d + 1` headers.
    recent: VecDeque<BlockHeader>,
    clients: Vec<AuthTracker>,
    schedule_rng: ChaCha8Rng,
    channel: C,
    period: u64,
}

impl<C: Channel> World<C> {
    /// All clients start synchronized at genesis.
    pub fn new(
        params: SystemParams,
        trusted_sets: &[Vec<u16>],
        channel: C,
        seed: u64,
    ) -> Result<Self, SimError> {
        params.validate()?;
        if trusted_sets.len() != params.clients as usize {
            return Err(SimError::Config(format!(
                "{} trusted sets for {} clients",
                trusted_sets.len(),
                params.clients
            )));
        }
        let genesis = BlockHeader::genesis();
        let clients = trusted_sets
            .iter()
            .map(|set| {
                let registered = *set
                    .first()
                    .ok_or_else(|| SimError::Config("empty trusted set".into()))?;
                AuthTracker::new(&genesis, set.iter().copied(), registered, params.deadline)
                    .map_err(|e| SimError::Config(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(World {
            signatures: params.signatures()?,
            scheme: MockScheme::new(params.servers as u16, seed),
            recent: VecDeque::from([genesis]),
            clients,
            schedule_rng: substream(seed, SCHEDULE_STREAM),
            channel,
            period: 0,
            params,
        })
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn clients(&self) -> &[AuthTracker] {
        &self.clients
    }

    pub fn signatures(&self) -> u32 {
        self.signatures
    }

    fn header(&self, height: u64) -> &BlockHeader {
        let oldest = self
            .recent
            .front()
            .expect("history is never empty")
            .height();
        &self.recent[(height - oldest) as usize]
    }

    /// Runs one block period.
    pub fn step(&mut self) -> PeriodStats {
        let t = self.period + 1;
        let d = self.params.deadline;
        let tip = self.recent.back().expect("history is never empty").next();
        self.recent.push_back(tip);
        if self.recent.len() > d as usize + 1 {
            self.recent.pop_front();
        }
        self.period = t;

        let mut stats = PeriodStats {
            period: t,
            ..PeriodStats::default()
        };
        for (u, client) in self.clients.iter_mut().enumerate() {
            client.advance_to(t);
            if !client.needs_feedback(d) {
                continue;
            }
            stats.failures += 1;
            let window: Vec<BlockHeader> = self.recent.iter().copied().collect();
            let sig = sign_header(&self.scheme, client.registered_server(), &tip)
                .expect("registered server is in the key table");
            client
                .resync(&window, &sig, &self.scheme)
                .expect("base station copy is consistent");
            stats.resyncs += 1;
            stats.resynced.push(u);
        }

        let schedule = schedule_period(
            t,
            self.params.repetitions,
            self.params.servers,
            self.signatures,
            &mut self.schedule_rng,
        );
        let sigs: Vec<SignatureRecord> = schedule
            .signature_servers
            .iter()
            .map(|&id| sign_header(&self.scheme, id, &tip).expect("server is in the key table"))
            .collect();
        let blocks: Vec<BlockHeader> = schedule
            .block_heights
            .clone()
            .map(|h| *self.header(h))
            .collect();

        for (u, client) in self.clients.iter_mut().enumerate() {
            for block in &blocks {
                if self.channel.deliver(
                    Packet::Block {
                        height: block.height(),
                    },
                    u,
                    t,
                ) {
                    client
                        .record_block(block, &self.scheme)
                        .expect("base station headers link");
                }
            }
            // Signatures from untrusted servers cannot change the tracker,
            // so they are not drawn.
            for sig in &sigs {
                if !client.trusted().contains(&sig.server_id) {
                    continue;
                }
                let packet = Packet::Signature {
                    server_id: sig.server_id,
                    height: sig.height,
                };
                if self.channel.deliver(packet, u, t) {
                    client
                        .record_signature(sig, &self.scheme)
                        .expect("base station signatures verify");
                }
            }
        }
        stats
    }
}

impl World<LossyChannel> {
    pub fn from_config(config: &SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let sets = config.trusted_sets()?;
        let channel = LossyChannel::new(config.channel(), sets.len(), config.seed);
        World::new(config.params, &sets, channel, config.seed)
    }
}

/// Result of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub params: SystemParams,
    pub seed: u64,
    pub periods: u64,
    pub warmup: u64,
    /// Lag compared against the deadline when counting failures.
    pub lag_metric: String,
    /// Mean feedback events per measured period.
    pub phi_empirical: f64,
    /// Half-width of the normal 95% interval of `phi_empirical`, treating
    /// periods as independent.
    pub ci95: f64,
    pub resync_count: u64,
    pub per_period_failures: Vec<u32>,
}

/// Sample mean and 95% half-width.
pub fn mean_ci95(samples: &[u32]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let mean = samples.iter().map(|&x| x as f64).sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples
        .iter()
        .map(|&x| (x as f64 - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

pub fn run(config: &SimConfig) -> Result<SimReport, SimError> {
    let mut world = World::from_config(config)?;
    let mut per_period_failures = Vec::with_capacity(config.measured_periods() as usize);
    let mut resync_count = 0;
    for _ in 0..config.periods {
        let stats = world.step();
        if stats.period > config.warmup {
            per_period_failures.push(stats.failures);
            resync_count += stats.resyncs as u64;
        }
    }
    let (phi_empirical, ci95) = mean_ci95(&per_period_failures);
    Ok(SimReport {
        params: config.params,
        seed: config.seed,
        periods: config.periods,
        warmup: config.warmup,
        lag_metric: "authenticated".to_string(),
        phi_empirical,
        ci95,
        resync_count,
        per_period_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(v: u32, k: u32, p: f64) -> SystemParams {
        SystemParams::with_defaults(v, v, k, p)
    }

    #[test]
    fn schedule_examples() {
        let mut rng = substream(1, SCHEDULE_STREAM);
        let s = schedule_period(10, 3, 20, 9, &mut rng);
        assert_eq!(s.block_heights, 8..=10);
        assert_eq!(s.signature_servers.len(), 9);
        assert!(s.signature_servers.windows(2).all(|w| w[0] < w[1]));
        assert!(s.signature_servers.iter().all(|&id| (1..=20).contains(&id)));
        assert_eq!(schedule_period(0, 3, 20, 9, &mut rng).block_heights, 0..=0);
        assert_eq!(schedule_period(1, 3, 20, 9, &mut rng).block_heights, 0..=1);
    }

    #[test]
    fn deliver_limits() {
        let mut rng = substream(5, 9);
        let never = ChannelProbs {
            block_loss: 1.0,
            signature_loss: 1.0,
        };
        let always = ChannelProbs {
            block_loss: 0.0,
            signature_loss: 0.0,
        };
        for _ in 0..1000 {
            assert!(!deliver(Packet::Block { height: 0 }, &never, &mut rng));
            assert!(deliver(Packet::Block { height: 0 }, &always, &mut rng));
        }
    }

    #[test]
    fn substreams_differ_and_repeat() {
        let a: Vec<u64> = (0..4).map(|_| substream(7, 2).random()).collect();
        let b: u64 = substream(7, 3).random();
        assert!(a.iter().all(|&x| x == a[0]));
        assert_ne!(a[0], b);
    }

    #[test]
    fn trust_assignments() {
        let mut c = SimConfig::new(params(20, 2, 0.0), 100, 3);
        c.params.trusted_per_client = 5;
        let sets = c.trusted_sets().unwrap();
        assert_eq!(sets.len(), 20);
        for s in &sets {
            let mut sorted = s.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), 5);
        }
        c.trust = TrustAssignment::Distinct;
        c.params.trusted_per_client = 1;
        let sets = c.trusted_sets().unwrap();
        let firsts: Vec<u16> = sets.iter().map(|s| s[0]).collect();
        assert_eq!(firsts, (1..=20).collect::<Vec<_>>());
        c.trust = TrustAssignment::Explicit(vec![vec![21]; 20]);
        assert!(c.trusted_sets().is_err());
        c.trust = TrustAssignment::Explicit(vec![vec![1]; 3]);
        assert!(c.trusted_sets().is_err());
    }

    #[test]
    fn uniform_trust_is_stable_when_clients_are_added() {
        let mut small = SimConfig::new(params(20, 2, 0.0), 100, 11);
        small.params.trusted_per_client = 3;
        let mut large = small.clone();
        large.params.clients = 30;
        let a = small.trusted_sets().unwrap();
        let b = large.trusted_sets().unwrap();
        assert_eq!(a[..], b[..20]);
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig::new(params(20, 2, 0.0), 100, 1);
        c.warmup = 5;
        assert!(matches!(c.validate(), Err(SimError::Config(_))));
        c.warmup = 100;
        c.periods = 100;
        assert!(c.validate().is_err());
        let mut c = SimConfig::new(params(20, 2, 0.0), 100, 1);
        c.params.repetitions = 11;
        assert!(matches!(c.validate(), Err(SimError::Params(_))));
    }

    #[test]
    fn no_trusted_signature_fails_every_d_plus_one() {
        let p = params(4, 1, 0.0);
        let d = p.deadline as u64;
        let blocks_only = |pkt: Packet, _: usize, _: u64| matches!(pkt, Packet::Block { .. });
        let sets = vec![vec![1]; 4];
        let mut world = World::new(p, &sets, blocks_only, 0).unwrap();
        let mut events = Vec::new();
        for _ in 0..(5 * (d + 1)) {
            let s = world.step();
            if s.failures > 0 {
                assert_eq!(s.failures, 4);
                events.push(s.period);
            }
        }
        let expected: Vec<u64> = (1..=5).map(|i| i * (d + 1)).collect();
        assert_eq!(events, expected);
    }

    #[test]
    fn error_free_full_trust_never_fails() {
        let mut p = params(20, 2, 0.0);
        p.trusted_per_client = 20;
        let report = run(&SimConfig::new(p, 2_000, 4)).unwrap();
        assert_eq!(report.phi_empirical, 0.0);
        assert_eq!(report.resync_count, 0);
        assert_eq!(report.per_period_failures.len(), 2_000);
    }

    #[test]
    fn run_is_deterministic() {
        let c = SimConfig::new(params(20, 2, 6e-4), 3_000, 77);
        assert_eq!(run(&c).unwrap(), run(&c).unwrap());
        let mut other = c.clone();
        other.seed = 78;
        assert_ne!(
            run(&c).unwrap().per_period_failures,
            run(&other).unwrap().per_period_failures
        );
    }

    #[test]
    fn mean_ci95_basics() {
        assert_eq!(mean_ci95(&[]), (0.0, 0.0));
        assert_eq!(mean_ci95(&[3]), (3.0, 0.0));
        let (m, ci) = mean_ci95(&[0, 2, 0, 2]);
        assert_eq!(m, 1.0);
        assert!((ci - 1.96 * (4.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
