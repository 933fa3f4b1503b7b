//! Runs the analytical engine and the simulator over a spec's grid.
//!
//! Grid points are independent, so they are evaluated on a rayon pool; the
//! output order is the grid order from [`ExperimentSpec::points`] followed by
//! the seed order, never completion order.

use std::time::Instant;

use rayon::prelude::*;
use repauth::analysis::ParamError;
use repauth::sim::{SimConfig, SimError};
use repauth::{qos, SystemParams, TransitionModel};

use crate::output::{fmt_f64, Table};
use crate::spec::ExperimentSpec;
use crate::CliError;

pub const ANALYZE_HEADER: &[&str] = &[
    "servers",
    "clients",
    "trusted_per_client",
    "repetitions",
    "bit_error",
    "budget_bits",
    "deadline",
    "block_bits",
    "signature_bits",
    "signatures",
    "block_loss",
    "signature_loss",
    "trusted_signature",
    "p10",
    "time_in_state_one",
    "phi",
    "valid",
    "error",
];

pub const SIMULATE_HEADER: &[&str] = &[
    "servers",
    "clients",
    "trusted_per_client",
    "repetitions",
    "bit_error",
    "budget_bits",
    "deadline",
    "block_bits",
    "signature_bits",
    "seed",
    "periods",
    "warmup",
    "phi_empirical",
    "ci95",
    "resync_count",
    "error",
];

pub const COMPARE_HEADER: &[&str] = &[
    "servers",
    "clients",
    "trusted_per_client",
    "repetitions",
    "bit_error",
    "budget_bits",
    "deadline",
    "block_bits",
    "signature_bits",
    "seed",
    "periods",
    "signatures",
    "valid",
    "phi_analytic",
    "phi_empirical",
    "ci95",
    "abs_error",
    "rel_error",
    "tolerance",
    "pass",
    "error",
];

/// Short machine-readable code for a row that could not be evaluated.
pub fn param_error_code(e: &ParamError) -> &'static str {
    match e {
        ParamError::InsufficientBudget { .. } => "insufficient_budget",
        ParamError::InvalidParams(_) => "invalid_params",
        ParamError::TooLarge { .. } => "too_large",
    }
}

pub fn sim_error_code(e: &SimError) -> &'static str {
    match e {
        SimError::Params(p) => param_error_code(p),
        SimError::Config(_) => "invalid_sim_config",
    }
}

/// The nine leading input columns shared by every table.
fn input_cells(p: &SystemParams) -> Vec<String> {
    vec![
        p.servers.to_string(),
        p.clients.to_string(),
        p.trusted_per_client.to_string(),
        p.repetitions.to_string(),
        fmt_f64(p.bit_error),
        p.budget_bits.to_string(),
        p.deadline.to_string(),
        p.block_bits.to_string(),
        p.signature_bits.to_string(),
    ]
}

/// Runs `f` on a pool of `jobs` threads, or rayon's default when `None`.
pub fn with_jobs<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone)]
pub struct AnalysisRow {
    pub params: SystemParams,
    pub result: Result<TransitionModel, ParamError>,
}

pub fn analyze(spec: &ExperimentSpec) -> Vec<AnalysisRow> {
    spec.points()
        .into_par_iter()
        .map(|params| AnalysisRow {
            params,
            result: qos(&params),
        })
        .collect()
}

pub fn analysis_table(rows: &[AnalysisRow]) -> Table {
    let mut t = Table::new(ANALYZE_HEADER);
    for row in rows {
        let mut cells = input_cells(&row.params);
        match &row.result {
            Ok(m) => {
                cells.extend([
                    m.signatures.to_string(),
                    fmt_f64(m.channel.block_loss),
                    fmt_f64(m.channel.signature_loss),
                    fmt_f64(m.trusted_signature),
                    fmt_f64(m.transitions.failure()),
                    fmt_f64(m.time_in_state_one),
                    fmt_f64(m.phi),
                    m.valid.to_string(),
                    String::new(),
                ]);
            }
            Err(e) => {
                cells.extend(std::iter::repeat_n(String::new(), 8));
                cells.push(param_error_code(e).to_string());
            }
        }
        t.push(cells);
    }
    t
}

/// What the CSV keeps from a [`repauth::SimReport`]; the per-period trace
/// is dropped once summarized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSummary {
    pub measured: u64,
    pub warmup: u64,
    pub phi_empirical: f64,
    pub ci95: f64,
    pub resync_count: u64,
}

#[derive(Debug, Clone)]
pub struct SimRow {
    pub params: SystemParams,
    pub seed: u64,
    pub result: Result<SimSummary, SimError>,
}

fn sim_config(spec: &ExperimentSpec, params: SystemParams, seed: u64) -> SimConfig {
    let warmup = spec.warmup();
    SimConfig {
        params,
        trust: spec.sim.trust.into(),
        periods: warmup + spec.sim.periods,
        warmup,
        seed,
        channel_override: None,
    }
}

fn simulate_one(spec: &ExperimentSpec, params: SystemParams, seed: u64) -> SimRow {
    let started = Instant::now();
    let config = sim_config(spec, params, seed);
    let result = repauth::run(&config).map(|r| SimSummary {
        measured: config.measured_periods(),
        warmup: r.warmup,
        phi_empirical: r.phi_empirical,
        ci95: r.ci95,
        resync_count: r.resync_count,
    });
    log::info!(
        "simulated V={} U={} V_u={} k={} P_bit={:e} seed={seed} in {:.1}s",
        params.servers,
        params.clients,
        params.trusted_per_client,
        params.repetitions,
        params.bit_error,
        started.elapsed().as_secs_f64()
    );
    SimRow {
        params,
        seed,
        result,
    }
}

fn jobs_of(spec: &ExperimentSpec) -> Vec<(SystemParams, u64)> {
    spec.points()
        .into_iter()
        .flat_map(|p| spec.sim.seeds.iter().map(move |&s| (p, s)))
        .collect()
}

pub fn simulate(spec: &ExperimentSpec) -> Vec<SimRow> {
    jobs_of(spec)
        .into_par_iter()
        .map(|(p, s)| simulate_one(spec, p, s))
        .collect()
}

pub fn simulation_table(rows: &[SimRow]) -> Table {
    let mut t = Table::new(SIMULATE_HEADER);
    for row in rows {
        let mut cells = input_cells(&row.params);
        cells.push(row.seed.to_string());
        match &row.result {
            Ok(s) => cells.extend([
                s.measured.to_string(),
                s.warmup.to_string(),
                fmt_f64(s.phi_empirical),
                fmt_f64(s.ci95),
                s.resync_count.to_string(),
                String::new(),
            ]),
            Err(e) => {
                cells.extend(std::iter::repeat_n(String::new(), 5));
                cells.push(sim_error_code(e).to_string());
            }
        }
        t.push(cells);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub signatures: u32,
    pub valid: bool,
    pub phi_analytic: f64,
    pub sim: SimSummary,
    pub abs_error: f64,
    pub rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct CompareRow {
    pub params: SystemParams,
    pub seed: u64,
    /// Error code when either engine rejected the point.
    pub result: Result<Comparison, &'static str>,
}

/// Acceptance band around the analytical value.
pub fn tolerance(spec: &ExperimentSpec, phi_analytic: f64, ci95: f64) -> f64 {
    (spec.compare.relative_tolerance * phi_analytic.abs()).max(spec.compare.ci_multiplier * ci95)
}

fn join(
    spec: &ExperimentSpec,
    model: &Result<TransitionModel, ParamError>,
    sim: SimRow,
) -> CompareRow {
    let result = match (model, &sim.result) {
        (Err(e), _) => Err(param_error_code(e)),
        (_, Err(e)) => Err(sim_error_code(e)),
        (Ok(m), Ok(s)) => {
            let abs_error = (s.phi_empirical - m.phi).abs();
            let rel_error = if abs_error == 0.0 {
                0.0
            } else {
                abs_error / m.phi.abs()
            };
            let tolerance = tolerance(spec, m.phi, s.ci95);
            Ok(Comparison {
                signatures: m.signatures,
                valid: m.valid,
                phi_analytic: m.phi,
                sim: *s,
                abs_error,
                rel_error,
                tolerance,
                pass: abs_error <= tolerance,
            })
        }
    };
    CompareRow {
        params: sim.params,
        seed: sim.seed,
        result,
    }
}

pub fn compare(spec: &ExperimentSpec) -> Vec<CompareRow> {
    jobs_of(spec)
        .into_par_iter()
        .map(|(params, seed)| {
            let mut analysis_params = params;
            if let Some(d) = spec.compare.analysis_deadline {
                analysis_params.deadline = d;
            }
            let model = qos(&analysis_params);
            // a point the analysis rejects is not simulated either
            let sim = match &model {
                Err(e) => SimRow {
                    params,
                    seed,
                    result: Err(SimError::Params(e.clone())),
                },
                Ok(_) => simulate_one(spec, params, seed),
            };
            join(spec, &model, sim)
        })
        .collect()
}

pub fn comparison_table(rows: &[CompareRow]) -> Table {
    let mut t = Table::new(COMPARE_HEADER);
    for row in rows {
        let mut cells = input_cells(&row.params);
        cells.push(row.seed.to_string());
        match &row.result {
            Ok(c) => cells.extend([
                c.sim.measured.to_string(),
                c.signatures.to_string(),
                c.valid.to_string(),
                fmt_f64(c.phi_analytic),
                fmt_f64(c.sim.phi_empirical),
                fmt_f64(c.sim.ci95),
                fmt_f64(c.abs_error),
                fmt_f64(c.rel_error),
                fmt_f64(c.tolerance),
                c.pass.to_string(),
                String::new(),
            ]),
            Err(code) => {
                cells.extend(std::iter::repeat_n(String::new(), 10));
                cells.push(code.to_string());
            }
        }
        t.push(cells);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CompareSummary {
    pub rows: usize,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
}

impl CompareSummary {
    pub fn of(rows: &[CompareRow]) -> Self {
        let mut s = CompareSummary {
            rows: rows.len(),
            ..Self::default()
        };
        for row in rows {
            match &row.result {
                Ok(c) if c.pass => s.passed += 1,
                Ok(_) => s.failed += 1,
                Err(_) => s.errors += 1,
            }
        }
        s
    }

    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

impl std::fmt::Display for CompareSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} rows: {} passed, {} failed, {} not evaluated",
            self.rows, self.passed, self.failed, self.errors
        )
    }
}
