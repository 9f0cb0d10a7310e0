use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use rhodrift::config::RunConfig;
use rhodrift::generator::{generate, StreamSpec};
use rhodrift::io::write_stream;
use rhodrift::pipeline::run;
use rhodrift::report::{report, MetricsLog};

#[derive(Parser)]
#[command(
    name = "rhodrift",
    version,
    about = "Concept-drift detection and adaptation over streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic stream from a TOML spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Leave ground-truth labels out of the output.
        #[arg(long)]
        no_truth: bool,
    },
    /// Run the pipeline described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Summarize the metrics files of a finished run.
    Report {
        #[arg(long)]
        metrics: PathBuf,
        /// Where to write the series, detections and summary (defaults to
        /// the metrics directory).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Generate {
            spec,
            output,
            no_truth,
        } => {
            let text = std::fs::read_to_string(&spec)
                .with_context(|| format!("reading {}", spec.display()))?;
            let spec = StreamSpec::from_toml(&text)?;
            let stream = generate(&spec)?;
            let truth = (!no_truth).then_some(stream.truth.as_slice());
            write_stream(&output, &stream.records, truth)
                .with_context(|| format!("writing {}", output.display()))?;
            println!(
                "wrote {} records to {}",
                stream.records.len(),
                output.display()
            );
        }
        Command::Run { config, resume } => {
            let cfg = RunConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let summary = run(&cfg, resume.as_deref())?;
            info!("metrics in {}", cfg.output_dir.display());
            println!(
                "{} windows, {} detections, {} models, {} malformed records skipped",
                summary.windows, summary.detections, summary.models, summary.malformed
            );
        }
        Command::Report { metrics, output } => {
            let log = MetricsLog::read_dir(&metrics)
                .with_context(|| format!("reading metrics from {}", metrics.display()))?;
            let rep = report(&log);
            let dir = output.unwrap_or(metrics);
            rep.write_dir(&dir)?;
            print!("{}", rep.summary);
        }
    }
    Ok(())
}
