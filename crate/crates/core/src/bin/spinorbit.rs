use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinorbit::run::{run_file, run_preset, RunOptions, RunReport};
use spinorbit::{presets, Error};

/// Spin-orbit coupled neutron dynamical diffraction.
#[derive(Parser)]
#[command(name = "spinorbit", version)]
struct Cli {
    /// Worker threads for grid builds (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed of the Monte-Carlo sections.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file.
    Run { config: PathBuf },
    /// Run a shipped preset.
    Preset {
        name: String,
        /// Output directory (default: the preset's own, `out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the shipped presets.
    ListPresets,
}

fn report_error(e: &Error) -> ExitCode {
    let kind = e.kind();
    let mut doc = serde_json::json!({
        "error": kind,
        "exit_code": kind.exit_code(),
        "message": e.to_string(),
    });
    if let Error::Config { key, .. } = e {
        doc["key"] = serde_json::Value::from(key.as_str());
    }
    eprintln!("{doc}");
    ExitCode::from(kind.exit_code() as u8)
}

fn print_report(r: &RunReport) {
    for s in &r.sections {
        println!("{}", s.summary_line());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", serde_json::json!({"error": "config", "exit_code": 2, "message": e.to_string()}));
            return ExitCode::from(2);
        }
    }
    let opts = RunOptions {
        out_dir: None,
        seed: cli.seed,
    };
    let result = match cli.command {
        Command::ListPresets => {
            for n in presets::list_presets() {
                println!("{n}");
            }
            return ExitCode::SUCCESS;
        }
        Command::Run { config } => run_file(&config, &opts),
        Command::Preset { name, out } => run_preset(&name, &RunOptions { out_dir: out, ..opts }),
    };
    match result {
        Ok(r) => {
            print_report(&r);
            ExitCode::SUCCESS
        }
        Err(e) => report_error(&e),
    }
}
