//! collapse-sim: run collapse-model ensembles from TOML configs, verify the
//! library's dynamical invariants, print the config schema, and convert
//! collapse parameters between CGS and natural units.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime or numerical
//! failure, 3 verification-suite failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use collapse_cli::config::{load_config, SCHEMA_TEXT};
use collapse_cli::output::{render, Format};
use collapse_cli::runner::run_experiment;
use collapse_cli::verify::{run_verify, Fault};
use collapse_core::units::UnitSystem;
use collapse_core::{gamma_from_lambda, gamma_from_lambda_3d};

#[derive(Parser)]
#[command(
    name = "collapse-sim",
    version,
    about = "Collapse-model trajectory ensembles: run experiments, verify invariants"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        /// Path to the experiment config.
        config_path: PathBuf,
        /// Override the config's master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = one per core); never changes the output.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Write the result here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Result format.
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Run the self-verification suite (exit 3 on any failed check).
    Verify {
        /// Only run checks whose name contains this substring.
        #[arg(long)]
        subset: Option<String>,
        /// Inject a deliberate defect (e.g. lambda-doubled) to demonstrate
        /// the suite catches it.
        #[arg(long, value_name = "FAULT")]
        inject_fault: Option<String>,
    },
    /// Print the experiment configuration schema.
    Schema,
    /// Convert collapse parameters from CGS to natural units.
    ConvertUnits {
        /// Per-nucleon collapse rate lambda in 1/s.
        #[arg(long, default_value_t = 1e-17)]
        lambda_per_s: f64,
        /// Localization length r_c in cm.
        #[arg(long, default_value_t = 1e-5)]
        r_c_cm: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run {
            config_path,
            seed,
            workers,
            output,
            format,
        } => cmd_run(&config_path, seed, workers, output.as_deref(), format),
        Command::Verify {
            subset,
            inject_fault,
        } => cmd_verify(subset.as_deref(), inject_fault.as_deref()),
        Command::Schema => {
            print!("{SCHEMA_TEXT}");
            ExitCode::SUCCESS
        }
        Command::ConvertUnits {
            lambda_per_s,
            r_c_cm,
        } => cmd_convert_units(lambda_per_s, r_c_cm),
    }
}

fn cmd_run(
    config_path: &std::path::Path,
    seed: Option<u64>,
    workers: usize,
    output: Option<&std::path::Path>,
    format: Format,
) -> ExitCode {
    let text = match std::fs::read_to_string(config_path) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return ExitCode::from(1);
        }
    };
    let mut config = match load_config(&text) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    let result = match run_experiment(&config, workers) {
        Ok(result) => result,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let rendered = render(&config, &result, format);
    match output {
        None => {
            print!("{rendered}");
            ExitCode::SUCCESS
        }
        Some(path) => match std::fs::write(path, rendered) {
            Ok(()) => {
                eprintln!("wrote {}", path.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: cannot write {}: {e}", path.display());
                ExitCode::from(2)
            }
        },
    }
}

fn cmd_verify(subset: Option<&str>, inject_fault: Option<&str>) -> ExitCode {
    let fault = match inject_fault {
        None => None,
        Some(text) => match text.parse::<Fault>() {
            Ok(fault) => Some(fault),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        },
    };
    let report = run_verify(subset, fault);
    print!("{}", report.render());
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}

fn cmd_convert_units(lambda_per_s: f64, r_c_cm: f64) -> ExitCode {
    if !(lambda_per_s >= 0.0 && lambda_per_s.is_finite()) {
        eprintln!("error: lambda_per_s: must be non-negative and finite");
        return ExitCode::from(1);
    }
    if !(r_c_cm > 0.0 && r_c_cm.is_finite()) {
        eprintln!("error: r_c_cm: must be strictly positive and finite");
        return ExitCode::from(1);
    }
    let units = UnitSystem {
        r_c_cm,
        ..UnitSystem::default()
    };
    let time_unit_s = units.time_unit_s();
    let lambda_natural = units.time_to_s(1.0) * lambda_per_s;
    println!("# collapse parameter conversion (natural units: hbar = m0 = r_c = 1)");
    println!("lambda = {lambda_per_s:.12e} 1/s");
    println!("r_c = {r_c_cm:.12e} cm");
    println!("time_unit = {time_unit_s:.12e} s");
    println!("lambda_natural = {lambda_natural:.12e} per time unit");
    println!(
        "gamma_1d_natural = {:.12e} (lambda_natural * sqrt(4 pi) * r_c)",
        gamma_from_lambda(lambda_natural, 1.0)
    );
    println!(
        "gamma_1d_cgs = {:.12e} cm/s",
        gamma_from_lambda(lambda_per_s, r_c_cm)
    );
    println!(
        "gamma_3d_cgs = {:.12e} cm^3/s (lambda * (4 pi r_c^2)^(3/2))",
        gamma_from_lambda_3d(lambda_per_s, r_c_cm)
    );
    ExitCode::SUCCESS
}
