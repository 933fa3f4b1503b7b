//! Experiment description: sweep axes, fixed parameters and simulation
//! controls, read from TOML and overridable from the command line.
//!
//! ```toml
//! mode = "compare"            # analyze | simulate | compare
//! out = "results.csv"         # optional, stdout otherwise
//!
//! [grid]
//! servers = [10, 20]          # V
//! clients = []                # U; empty means U = V for each V
//! trusted_per_client = [1]    # V_u
//! repetitions = [2, 5]        # k
//! bit_error = [1e-4, 4e-4]    # P_bit
//!
//! [fixed]
//! budget_bits = 8000          # b
//! deadline = 10               # d
//! block_bits = 640            # l_b
//! signature_bits = 512        # l_s
//!
//! [sim]
//! periods = 200000            # measured periods, warm-up excluded
//! warmup = 100                # defaults to 10 d
//! seeds = [1]
//! trust = "distinct"          # distinct | uniform
//!
//! [compare]
//! relative_tolerance = 0.10
//! ci_multiplier = 3.0
//! analysis_deadline = 10      # optional; only the analysis uses it
//! ```

use std::path::{Path, PathBuf};

use repauth::sim::TrustAssignment;
use repauth::SystemParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Analyze,
    Simulate,
    Compare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub servers: Vec<u32>,
    /// Empty pairs every `V` with `U = V`.
    pub clients: Vec<u32>,
    pub trusted_per_client: Vec<u32>,
    pub repetitions: Vec<u32>,
    pub bit_error: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            servers: vec![10, 20, 40],
            clients: Vec::new(),
            trusted_per_client: vec![1],
            repetitions: vec![2, 5],
            bit_error: (1..=10).map(|i| i as f64 / 1e4).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fixed {
    pub budget_bits: u32,
    pub deadline: u32,
    pub block_bits: u32,
    pub signature_bits: u32,
}

impl Default for Fixed {
    fn default() -> Self {
        Fixed {
            budget_bits: 8000,
            deadline: 10,
            block_bits: 640,
            signature_bits: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trust {
    #[default]
    Distinct,
    Uniform,
}

impl From<Trust> for TrustAssignment {
    fn from(t: Trust) -> Self {
        match t {
            Trust::Distinct => TrustAssignment::Distinct,
            Trust::Uniform => TrustAssignment::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimControls {
    /// Measured periods per run, warm-up excluded.
    pub periods: u64,
    /// `None` means `10 d`.
    pub warmup: Option<u64>,
    pub seeds: Vec<u64>,
    pub trust: Trust,
}

impl Default for SimControls {
    fn default() -> Self {
        SimControls {
            periods: 200_000,
            warmup: None,
            seeds: vec![1],
            trust: Trust::Distinct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareControls {
    pub relative_tolerance: f64,
    pub ci_multiplier: f64,
    /// Deadline handed to the analysis instead of `fixed.deadline`. Used as a
    /// negative control: a mismatched value should make points fail.
    pub analysis_deadline: Option<u32>,
}

impl Default for CompareControls {
    fn default() -> Self {
        CompareControls {
            relative_tolerance: 0.10,
            ci_multiplier: 3.0,
            analysis_deadline: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub out: Option<PathBuf>,
    pub grid: Grid,
    pub fixed: Fixed,
    pub sim: SimControls,
    pub compare: CompareControls,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Curves of the bit-error figure: `V = U` in {10, 20, 40}, `k` in {2, 5}.
    pub fn fig7() -> Self {
        ExperimentSpec {
            mode: Mode::Compare,
            ..Self::default()
        }
    }

    /// Trust-diversity figure: `V = U = 200`, `k = 1..=10`, `V_u` in {1, 5},
    /// `P_bit = 4e-4`. Two hundred servers keep `V/s > d` at every `k`.
    pub fn fig8() -> Self {
        ExperimentSpec {
            mode: Mode::Compare,
            grid: Grid {
                servers: vec![200],
                clients: Vec::new(),
                trusted_per_client: vec![1, 5],
                repetitions: (1..=10).collect(),
                bit_error: vec![4e-4],
            },
            sim: SimControls {
                periods: 20_000,
                ..SimControls::default()
            },
            ..Self::default()
        }
    }

    pub fn warmup(&self) -> u64 {
        self.sim.warmup.unwrap_or(10 * self.fixed.deadline as u64)
    }

    /// Every grid point, ordered by (V, U, V_u, k, P_bit) ascending with
    /// duplicates removed. Points are not validated here.
    pub fn points(&self) -> Vec<SystemParams> {
        let servers = sorted(&self.grid.servers);
        let clients = sorted(&self.grid.clients);
        let trusted = sorted(&self.grid.trusted_per_client);
        let reps = sorted(&self.grid.repetitions);
        let mut bit_errors = self.grid.bit_error.clone();
        bit_errors.sort_by(f64::total_cmp);
        bit_errors.dedup();

        let mut out = Vec::new();
        for &v in &servers {
            let us = if clients.is_empty() {
                vec![v]
            } else {
                clients.clone()
            };
            for &u in &us {
                for &vu in &trusted {
                    for &k in &reps {
                        for &p in &bit_errors {
                            out.push(SystemParams {
                                servers: v,
                                clients: u,
                                budget_bits: self.fixed.budget_bits,
                                repetitions: k,
                                deadline: self.fixed.deadline,
                                block_bits: self.fixed.block_bits,
                                signature_bits: self.fixed.signature_bits,
                                bit_error: p,
                                trusted_per_client: vu,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

fn sorted(xs: &[u32]) -> Vec<u32> {
    let mut v = xs.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Seeds given on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedRange(pub Vec<u64>);

/// Parses `N..M` (exclusive), `N..=M` (inclusive) or a single `N`.
pub fn parse_seed_range(s: &str) -> Result<SeedRange, String> {
    parse_seeds(s).map(SeedRange)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<u64>()
            .map_err(|e| format!("bad seed `{t}`: {e}"))
    };
    if let Some((a, b)) = s.split_once("..=") {
        let (a, b) = (num(a)?, num(b)?);
        if a > b {
            return Err(format!("empty seed range {s}"));
        }
        return Ok((a..=b).collect());
    }
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if a >= b {
            return Err(format!("empty seed range {s}"));
        }
        return Ok((a..b).collect());
    }
    Ok(vec![num(s)?])
}
