//! Command-line front end. Exit codes: 0 success, 1 I/O or configuration
//! error, 2 when `compare` finds a point outside tolerance.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::output::Table;
use crate::plot::{gnuplot_script, Figure};
use crate::run::{self, CompareSummary};
use crate::spec::{parse_seed_range, ExperimentSpec, Mode, SeedRange};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "repauth",
    version,
    about = "Analysis and simulation of repeat-authenticate header multicast"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the analytical model on every grid point.
    Analyze(CommonArgs),
    /// Simulate every grid point for every seed.
    Simulate(CommonArgs),
    /// Simulate and analyze, then check agreement (exit 2 on any failure).
    Compare(CommonArgs),
    /// Bit-error sweep preset: V = U in {10, 20, 40}, k in {2, 5}.
    Fig7(FigArgs),
    /// Trust-diversity preset: V = U = 200, k = 1..10, V_u in {1, 5}.
    Fig8(FigArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML experiment spec; for fig7/fig8 it replaces the preset.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// CSV destination (stdout when absent).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Single simulation seed.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Seed range, `N..M` (exclusive) or `N..=M`.
    #[arg(long, value_name = "N..M", value_parser = parse_seed_range)]
    pub seeds: Option<SeedRange>,
    /// Measured periods per simulation, warm-up excluded.
    #[arg(long)]
    pub periods: Option<u64>,
    /// Warm-up periods excluded from measurement (default 10 d).
    #[arg(long)]
    pub warmup: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Omit the `# generated_unix=...` first line.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FigArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Also write a gnuplot script for the CSV.
    #[arg(long, value_name = "PATH")]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    CompareFailed,
}

impl CommonArgs {
    fn spec(&self, preset: Option<ExperimentSpec>) -> Result<ExperimentSpec, CliError> {
        let mut spec = match (&self.config, preset) {
            (Some(path), _) => ExperimentSpec::load(path)?,
            (None, Some(p)) => p,
            (None, None) => ExperimentSpec::default(),
        };
        if let Some(out) = &self.out {
            spec.out = Some(out.clone());
        }
        if let Some(seed) = self.seed {
            spec.sim.seeds = vec![seed];
        }
        if let Some(seeds) = &self.seeds {
            spec.sim.seeds = seeds.0.clone();
        }
        if let Some(p) = self.periods {
            spec.sim.periods = p;
        }
        if let Some(w) = self.warmup {
            spec.sim.warmup = Some(w);
        }
        Ok(spec)
    }
}

fn write_table(table: &Table, out: Option<&Path>, timestamp: bool) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            table.write(BufWriter::new(file), timestamp)
        }
        None => table.write(std::io::stdout().lock(), timestamp),
    }
}

fn write_plot(
    path: &Path,
    figure: Figure,
    csv: Option<&Path>,
    rows: &[run::CompareRow],
) -> Result<(), CliError> {
    let csv_name = csv
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "data.csv".to_string());
    let image = path.with_extension("png").display().to_string();
    let script = gnuplot_script(figure, &csv_name, &image, rows);
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(script.as_bytes())
        .map_err(|e| CliError::io(path, e))
}

/// Runs a parsed command line.
pub fn execute(cli: Cli) -> Result<Outcome, CliError> {
    let (common, mode, figure, preset, plot) = match cli.command {
        Command::Analyze(c) => (c, Some(Mode::Analyze), None, None, None),
        Command::Simulate(c) => (c, Some(Mode::Simulate), None, None, None),
        Command::Compare(c) => (c, Some(Mode::Compare), None, None, None),
        Command::Fig7(f) => (
            f.common,
            None,
            Some(Figure::BitError),
            Some(ExperimentSpec::fig7()),
            f.plot,
        ),
        Command::Fig8(f) => (
            f.common,
            None,
            Some(Figure::TrustDiversity),
            Some(ExperimentSpec::fig8()),
            f.plot,
        ),
    };
    let mut spec = common.spec(preset)?;
    if let Some(m) = mode {
        spec.mode = m;
    }
    let timestamp = !common.no_timestamp;
    let out = spec.out.clone();

    run::with_jobs(common.jobs, || -> Result<Outcome, CliError> {
        match spec.mode {
            Mode::Analyze => {
                let table = run::analysis_table(&run::analyze(&spec));
                write_table(&table, out.as_deref(), timestamp)?;
                Ok(Outcome::Success)
            }
            Mode::Simulate => {
                let table = run::simulation_table(&run::simulate(&spec));
                write_table(&table, out.as_deref(), timestamp)?;
                Ok(Outcome::Success)
            }
            Mode::Compare => {
                let rows = run::compare(&spec);
                write_table(&run::comparison_table(&rows), out.as_deref(), timestamp)?;
                if let (Some(fig), Some(path)) = (figure, &plot) {
                    write_plot(path, fig, out.as_deref(), &rows)?;
                }
                let summary = CompareSummary::of(&rows);
                eprintln!("compare: {summary}");
                // figure presets report agreement but only compare gates on it
                if figure.is_none() && !summary.all_passed() {
                    return Ok(Outcome::CompareFailed);
                }
                Ok(Outcome::Success)
            }
        }
    })?
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::CompareFailed) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
