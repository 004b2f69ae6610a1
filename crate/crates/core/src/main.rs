use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use attrib_bench::harness::{self, MetricEntry, RunConfig};
use attrib_bench::Error;
use clap::{Parser, Subcommand};

/// Benchmark feature attribution methods on small image classifiers.
///
/// Relative output directories resolve against $ATTRIB_BENCH_OUTPUT when set.
#[derive(Parser)]
#[command(name = "attrib-bench", version)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(short, long, global = true, default_value = "run.json")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the model (or reuse a cached one) and report test accuracy.
    Train,
    /// Compute and cache attribution maps for the cohort.
    Attribute,
    /// Score every configured metric on a small cohort and select metrics.
    Pilot {
        #[arg(long)]
        size: Option<usize>,
    },
    /// Full-cohort scores and the significance grid against the baseline.
    Benchmark {
        /// Comma-separated metric keys such as Del_MoRF/blur,INFD_NB.
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<String>>,
    },
    /// Pairwise Wilcoxon and CLES between two methods.
    Compare {
        a: String,
        b: String,
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<String>>,
    },
    /// Repeated evaluation of stochastic metrics: SNR and noise fraction.
    Stability {
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<String>>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Rebuild statistics and plots from scores.csv.
    Report,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Shape(_) | Error::Unsupported(_) | Error::Json(_) => 2,
        Error::Format { .. } | Error::CountMismatch { .. } | Error::Io { .. } | Error::Cohort { .. } | Error::Csv(_) => 3,
        Error::Degenerate(_) | Error::Training { .. } | Error::IllConditioned(_) => 4,
    }
}

fn parse_metrics(keys: Option<Vec<String>>) -> attrib_bench::Result<Option<Vec<MetricEntry>>> {
    keys.map(|v| v.iter().map(|k| k.parse()).collect()).transpose()
}

fn run(cli: Cli) -> attrib_bench::Result<String> {
    let config = RunConfig::load(&cli.config)?;
    let out = config.output_path();
    Ok(match cli.command {
        Command::Train => {
            let s = harness::cmd_train(&config)?;
            format!("test accuracy {:.4}, model {}", s.test_accuracy, s.model_path.display())
        }
        Command::Attribute => {
            let s = harness::cmd_attribute(&config)?;
            format!("{} maps for {} images", s.digests.len(), s.cohort.len())
        }
        Command::Pilot { size } => {
            let r = harness::cmd_pilot(&config, size)?;
            let mut lines: Vec<String> = r
                .decisions
                .iter()
                .map(|d| {
                    let alpha = d.alpha.map_or("undefined".into(), |a| format!("{a:.3}"));
                    format!("{:<24} alpha {alpha:<9} {}", d.metric, d.rationale)
                })
                .collect();
            for p in &r.redundant_pairs {
                lines.push(format!("redundant candidate: {} / {}", p.morf, p.lerf));
            }
            lines.join("\n")
        }
        Command::Benchmark { metrics } => {
            let o = harness::cmd_benchmark(&config, parse_metrics(metrics)?)?;
            let significant = o.report.grid.cells.iter().filter(|c| c.outcome.as_ref().is_some_and(|x| x.significant)).count();
            format!(
                "{} scores, {significant} significant cells, {} exclusions; outputs in {}",
                o.records.len(),
                o.report.exclusions.len(),
                out.display()
            )
        }
        Command::Compare { a, b, metrics } => {
            serde_json::to_string_pretty(&harness::cmd_compare(&config, &a, &b, parse_metrics(metrics)?)?)?
        }
        Command::Stability { metrics, repeats } => {
            let s = harness::cmd_stability(&config, parse_metrics(metrics)?, repeats)?;
            s.rows
                .iter()
                .map(|r| format!("{:<24} median SNR {:.4}  noise fraction {:.4}", r.metric, r.median_snr, r.noise_fraction))
                .collect::<Vec<_>>()
                .join("\n")
        }
        Command::Report => {
            let r = harness::cmd_report(&config)?;
            format!("report for {} metrics written to {}", r.grid.metrics.len(), out.display())
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            // A closed pipe (e.g. `| head`) is not a failure of the run.
            let _ = writeln!(std::io::stdout(), "{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
