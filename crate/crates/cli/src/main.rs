//! Batch front end: run experiments from JSON configurations, self-check the
//! installed binary, list the connection presets, and run closed-form
//! cross-validations that bypass the flow entirely.
//!
//! Exit codes: 0 converged or success, 10 blow-up (an expected outcome, not
//! a failure), 20 horizon or step cap, 1 malformed input, 2 failed
//! validation or a breached self-check.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nhym_core::config::ExperimentConfig;
use nhym_core::connection::phi;
use nhym_core::conventions::ledger_checksum;
use nhym_core::error::NhymError;
use nhym_core::experiment::{harmonic_comparison, run_experiment};
use nhym_core::fields::MetricField;
use nhym_core::flow::{normalize_initial, phi_norms};
use nhym_core::geometry::{Scheme, SpectralEngine};
use nhym_core::presets;
use nhym_core::suite::{check_suite, SuiteOptions};

#[derive(Parser)]
#[command(
    name = "nhym",
    version,
    about = "Harmonic metric heat flow on holomorphic bundles over flat complex tori"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write its artifacts.
    Run(RunArgs),
    /// Calibration, identity, and functional self-checks.
    Check(CheckArgs),
    /// Inspect the built-in connection presets.
    Presets {
        #[command(subcommand)]
        action: PresetsAction,
    },
    /// Closed-form cross-validations.
    Oracle {
        #[command(subcommand)]
        action: OracleAction,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration, JSON.
    config: PathBuf,
    /// Directory for series.csv, summary.json, and optional snapshots.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// Seed for the randomized stages.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run the two-dimensional stages at axis size 32 instead of 16.
    #[arg(long)]
    full: bool,
    /// Debug lever: flip the d^c sign convention. The calibration stage must
    /// catch this and fail, proving the suite has teeth.
    #[arg(long, hide = true)]
    flip_dc: bool,
}

#[derive(Subcommand)]
enum PresetsAction {
    /// Print the preset catalog.
    List,
}

#[derive(Subcommand)]
enum OracleAction {
    /// Solve the rank-1 harmonic metric directly with one Poisson solve and
    /// report the residual of the flow's stationarity condition at it.
    Poisson {
        /// Experiment configuration, JSON; the connection must be rank 1.
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Honor the NHYM_THREADS override before any field operation spins up the
/// global worker pool.
fn init_threads() {
    if let Ok(raw) = std::env::var("NHYM_THREADS") {
        if let Ok(k) = raw.trim().parse::<usize>() {
            if k >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, NhymError> {
    match cli.command {
        Command::Run(args) => run_cmd(&args),
        Command::Check(args) => check_cmd(&args),
        Command::Presets { action: PresetsAction::List } => {
            print!("{}", preset_catalog());
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { action: OracleAction::Poisson { config } } => poisson_cmd(&config),
    }
}

fn run_cmd(args: &RunArgs) -> Result<ExitCode, NhymError> {
    let text = std::fs::read_to_string(&args.config)?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let artifacts = run_experiment(&cfg)?;
    artifacts.write_to_dir(&args.out)?;
    let status = serde_json::to_value(artifacts.summary.status)?;
    println!(
        "status={} t_end={:.6e} steps={} wrote {}",
        status.as_str().unwrap_or("unknown"),
        artifacts.summary.t_end,
        artifacts.summary.steps,
        args.out.join("summary.json").display()
    );
    Ok(ExitCode::from(artifacts.summary.exit_code as u8))
}

fn check_cmd(args: &CheckArgs) -> Result<ExitCode, NhymError> {
    let opts = SuiteOptions {
        seed: args.seed,
        flip_dc: args.flip_dc,
        n2_size: if args.full { 32 } else { 16 },
        ..Default::default()
    };
    let report = check_suite(&opts)?;
    print!("{}", report.to_json());
    if report.passed {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn poisson_cmd(config: &PathBuf) -> Result<ExitCode, NhymError> {
    let text = std::fs::read_to_string(config)?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let geo = cfg.geometry.build()?;
    let eng = SpectralEngine::new(geo, Scheme::Spectral);
    let built = presets::build(eng.geometry(), &cfg.connection)?;
    let conn = built.connection;
    if conn.rank() != 1 {
        return Err(NhymError::Validation(format!(
            "the direct harmonic solve needs a rank-1 connection, got rank {}",
            conn.rank()
        )));
    }

    let ident = MetricField::identity(conn.nodes(), 1);
    let h = normalize_initial(&eng, &conn, &ident)?;
    let h_inv = h.inverse()?;
    let driver = phi(&eng, &conn, &h, &h_inv);
    let (sup, l2) = phi_norms(&eng, &driver, &h, &h_inv);
    let potential_sup_error =
        built.scalar_potential.as_ref().map(|f| harmonic_comparison(&eng, f, &h));

    let doc = serde_json::json!({
        "harmonic_residual_sup": sup,
        "harmonic_residual_l2": l2,
        "potential_sup_error": potential_sup_error,
        "ledger_checksum": ledger_checksum(),
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(ExitCode::SUCCESS)
}

fn preset_catalog() -> String {
    let rows: [(&str, &str, &str); 9] = [
        ("unitary_const", "b", "A = B dz1 - B* dzbar1; flat, unitary when B is anti-Hermitian"),
        ("normal_const", "b", "A = B dz1; flat, harmonic at the identity when B is normal"),
        ("nonnormal_simple", "-", "A = B dz1 with B = [[1,1],[0,2]]; flat, non-normal, semisimple"),
        ("nilpotent", "-", "A = N dz1 with N = [[0,1],[0,0]]; flat, non-semisimple, blows up"),
        ("scalar_exact", "max_mode, amplitude, seed", "rank 1, A = df; harmonic limit exp(2(f - mean f))"),
        ("scalar_character", "re, im", "rank 1, A = c dz1; harmonic at the identity"),
        ("block_sum", "first, second", "block-diagonal direct sum of two presets on one base"),
        ("nonflat_n2", "-", "n = 2, A = s+ dz1 + s- dzbar2; curvature does not vanish"),
        ("inline", "dz, dzbar", "constant coefficient matrices, one per complex axis"),
    ];
    let mut out = String::new();
    for (name, params, what) in rows {
        out.push_str(&format!("{name:<18} {params:<28} {what}\n"));
    }
    out
}
