use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dualrep_core::suite::{
    explain_record, find_case, report_path, run_suites, SuiteConfig, REPORT_DIR_ENV,
};

/// Verify dual representations of increasing convex functionals.
#[derive(Parser)]
#[command(name = "dualrep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites selected by a TOML config.
    Run {
        config: PathBuf,
        /// n = 4 and truncation ladder capped at 2^6.
        #[arg(long)]
        quick: bool,
        /// Run only this suite.
        #[arg(long)]
        suite: Option<String>,
        /// Report file (default: $DUALREP_REPORT_DIR/dualrep-report.jsonl).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the stored record of one case.
    Explain {
        case_id: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            quick,
            suite,
            report,
            seed,
        } => {
            let mut cfg = match SuiteConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if quick {
                cfg = cfg.quick();
            }
            let rep = match run_suites(&cfg, suite.as_deref()) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            let path = report_path(report.as_deref());
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                if let Err(e) = fs::create_dir_all(dir) {
                    eprintln!("cannot create {} ({REPORT_DIR_ENV}?): {e}", dir.display());
                    return ExitCode::from(2);
                }
            }
            if let Err(e) = fs::write(&path, rep.to_jsonl()) {
                eprintln!("cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
            print!("{}", rep.text_summary());
            println!("report: {}", path.display());
            if rep.failing().is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Explain { case_id, report } => {
            let path = report_path(report.as_deref());
            match find_case(&path, &case_id) {
                Ok(Some(r)) => {
                    print!("{}", explain_record(&r));
                    ExitCode::SUCCESS
                }
                Ok(None) => {
                    eprintln!("unknown case id `{case_id}` in {}", path.display());
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("cannot read {}: {e}", path.display());
                    ExitCode::from(2)
                }
            }
        }
    }
}
