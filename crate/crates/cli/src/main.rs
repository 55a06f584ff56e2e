use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rtr_core::harness::{cmd_repeat, cmd_report, cmd_teach, HarnessError, RunConfig, EXIT_CONFIG, EXIT_HALT, EXIT_OK};

#[derive(Parser)]
#[command(name = "rtr", version, about = "Radar teach-and-repeat simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drive the teach route and save the pose graph.
    Teach(RunArgs),
    /// Repeat a taught route from a saved pose graph.
    Repeat {
        #[command(flatten)]
        run: RunArgs,
        /// Pose-graph archive; defaults to graph.rtrg in the output directory.
        #[arg(long)]
        archive: Option<PathBuf>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Aggregate repeat outputs into a summary table.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the table as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    ideal_sensor: bool,
    #[arg(long)]
    no_gyro: bool,
    #[arg(long)]
    artifacts: bool,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = &self.scenario {
            cfg.scenario = s.clone();
            cfg.world_file = None;
            cfg.waypoints = None;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.ideal_sensor |= self.ideal_sensor;
        cfg.no_gyro |= self.no_gyro;
        cfg.artifacts |= self.artifacts;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Teach(args) => {
            let cfg = args.config()?;
            let out = cmd_teach(&cfg)?;
            let r = &out.report;
            println!(
                "teach {} ({}): {} scans, {} vertices, {:.1} m, heading drift {:.4} rad/100 m",
                r.scenario, r.mode, r.scans, r.vertices, r.distance, r.heading_drift_per_100m
            );
            println!("archive written to {}", cfg.output_dir.join("graph.rtrg").display());
            Ok(EXIT_OK)
        }
        Command::Repeat { run, archive, repeats } => {
            let mut cfg = run.config()?;
            if let Some(n) = repeats {
                cfg.repeats = n;
            }
            let archive = archive.unwrap_or_else(|| cfg.output_dir.join("graph.rtrg"));
            let outcomes = cmd_repeat(&cfg, &archive)?;
            let mut halted = false;
            for o in &outcomes {
                for w in &o.warnings {
                    eprintln!("warning: {w}");
                }
                let r = &o.report;
                println!(
                    "repeat {}: measured rmse {:.4} m (max {:.4}), estimated rmse {:.4} m, {} localization failures",
                    o.repeat, r.measured_rmse, r.measured_max_abs, r.estimated_rmse, o.localization_failures
                );
                if let Some(h) = &o.halt {
                    halted = true;
                    println!("  halted at t={:.2} s ({:.2}, {:.2}): {}", h.time, h.x, h.y, h.reason);
                }
            }
            Ok(if halted { EXIT_HALT } else { EXIT_OK })
        }
        Command::Report { dirs, json } => {
            let table = cmd_report(&dirs)?;
            print!("{}", table.to_text());
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&table).expect("table serializes");
                std::fs::write(&path, text).map_err(|e| HarnessError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { EXIT_OK as u8 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
