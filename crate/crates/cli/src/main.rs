use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use aqmsim_cli::{compare, load_scenario, CliError, Emit, PresetChoice, RunManifest};
use aqmsim_core::aqm::AqmKind;
use aqmsim_core::netsim::{Preset, ScenarioConfig};
use aqmsim_core::units::parse_duration;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aqmsim", version, about = "Bottleneck AQM simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of seeded replications of one scenario.
    Run {
        #[arg(long)]
        preset: Option<Preset>,
        /// dt, pie, madpie or codel.
        #[arg(long)]
        aqm: Option<AqmKind>,
        /// Bottleneck one-way delay, e.g. 48ms.
        #[arg(long, value_parser = parse_duration)]
        owd: Option<Duration>,
        #[arg(long, value_parser = parse_duration)]
        duration: Option<Duration>,
        #[arg(long, default_value_t = 20)]
        reps: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// JSON scenario file; its keys override the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Emit::Both)]
        emit: Emit,
        /// Concurrent replications (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Compare the aggregates of two result directories.
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the built-in presets and their parameters.
    Presets,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            preset,
            aqm,
            owd,
            duration,
            reps,
            seed,
            out,
            config,
            emit,
            jobs,
        } => {
            let text = config
                .map(|p| std::fs::read_to_string(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))))
                .transpose()?;
            let mut scenario = load_scenario(
                text.as_deref(),
                PresetChoice {
                    preset,
                    aqm,
                    bottleneck_owd: owd,
                },
            )?;
            if let Some(d) = duration {
                scenario.duration = d;
            }
            let manifest = RunManifest {
                scenario,
                replications: reps,
                base_seed: seed,
                output_dir: out,
                emit,
                jobs,
            };
            let agg = aqmsim_cli::run(&manifest)?;
            let s = &agg.summary;
            if let Some(q) = &s.qdelay {
                println!(
                    "qdelay ms: p50 {:.1}  p90 {:.1}  max {:.1}",
                    q.p50_ns as f64 / 1e6,
                    q.p90_ns as f64 / 1e6,
                    q.max_ns as f64 / 1e6
                );
            }
            if let Some(u) = &s.utilization {
                println!("utilization: {:.4}", u.mean);
            }
            println!("drops: {}", s.drops.attribution.n_tot);
            println!("results in {}", manifest.output_dir.display());
            Ok(())
        }
        Command::Compare { dir_a, dir_b, out } => {
            let report = compare(&dir_a, &dir_b, &out)?;
            if let Some(max) = report.qdelay.get("all").and_then(|m| m.get("max_ns")) {
                println!("max qdelay delta: {:+.1} ms", max.delta / 1e6);
            }
            if let Some(u) = report.utilization_mean {
                println!("utilization delta: {:+.4}", u.delta);
            }
            println!("comparison in {}", out.display());
            Ok(())
        }
        Command::Presets => {
            let mut text = String::new();
            for preset in Preset::ALL {
                let cfg = ScenarioConfig::preset(preset, AqmKind::Pie, Duration::from_millis(48));
                text.push_str(&format!("{}: {}\n", preset.name(), preset.description()));
                let json = serde_json::to_string_pretty(&cfg).expect("scenario serializes");
                for line in json.lines() {
                    text.push_str(&format!("    {line}\n"));
                }
            }
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aqmsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
