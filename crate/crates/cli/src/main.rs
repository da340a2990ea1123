use clap::{Parser, Subcommand};
use rbx::{run_experiment, verify, ExperimentConfig, HarnessError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rbx", version, about = "Reduced-basis greedy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the methods listed in a JSON config and write CSV/JSON artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for estimator sweeps.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run the oracle checks.
    Verify {
        /// Smaller problems and fewer samples.
        #[arg(long)]
        quick: bool,
    },
    /// List the built-in problems.
    Problems,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, workers } => match run(&config, out, workers) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("rbx: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Verify { quick } => {
            let checks = verify(quick);
            for c in &checks {
                println!("{c}");
            }
            if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Problems => {
            print_problems();
            ExitCode::SUCCESS
        }
    }
}

fn run(config: &Path, out: Option<PathBuf>, workers: usize) -> Result<(), HarnessError> {
    let config = ExperimentConfig::from_path(config)?;
    let report = run_experiment(&config, out.as_deref(), workers)?;
    for s in &report.summaries {
        let mut line = format!(
            "{:<9} N = {:>3}  wall {:>10.1} ms  global estimate {:.3e}",
            s.method.name(),
            s.final_n,
            s.total_wall_ms,
            s.final_global_delta
        );
        if let Some(sp) = s.speedup {
            line += &format!("  speedup {sp:.2}");
        }
        if let Some(c) = &s.cost_ratio {
            line += &format!("  eval ratio {:.4} (bound {:.4})", c.measured, c.bound);
        }
        println!("{line}");
    }
    if let Some(dir) = &report.output_dir {
        println!("artifacts written to {}", dir.display());
    }
    Ok(())
}

fn print_problems() {
    let problems = [
        (
            "diffusion2d",
            r#"{"kind": "diffusion2d", "n_x": 35}"#,
            "Chebyshev collocation of (1 + mu1 x) u_xx + (1 + mu2 y) u_yy = exp(4xy) on [-1,1]^2, u = 0 on the boundary, mu in [-0.99,0.99]^2",
        ),
        (
            "thermalblock",
            r#"{"kind": "thermalblock", "nodes_per_side": 19}"#,
            "P1 thermal block, 3x3 conductivities mu in [0.1,10]^9, output = integral of u over the bottom edge",
        ),
    ];
    for (name, json, what) in problems {
        println!("{name}\n    {what}\n    problem: {json}");
    }
}
