use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ehrqa::corpus::compute_stats;
use ehrqa::run::{
    evaluate_file, load_corpus, Overrides, Pipeline, RunConfig, RunManifest, Subtask,
};
use ehrqa::{Error, Result};

/// Evidence-grounded question answering over clinical note excerpts.
#[derive(Parser)]
#[command(name = "ehrqa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Corpus split named in the config.
    #[arg(long, default_value = "dev")]
    split: String,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Response cache directory.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Cases (or sentence pairs) processed concurrently.
    #[arg(long)]
    fanout: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        base.layered(&Overrides {
            output_dir: self.out.clone(),
            cache_dir: self.cache.clone(),
            fanout: self.fanout,
            seed: self.seed,
        })
    }

    fn pipeline(&self) -> Result<Pipeline> {
        Pipeline::new(self.config()?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Subtask 1: rewrite patient questions as clinician questions.
    Interpret(RunArgs),
    /// Subtask 2: select evidence sentences.
    Evidence(RunArgs),
    /// Subtask 3: generate grounded answers.
    Answer(RunArgs),
    /// Subtask 4: align answer sentences to note sentences.
    Align(RunArgs),
    /// Generate synthetic labeled cases from the split's cases.
    Synth(RunArgs),
    /// Sweep the evidence threshold on a labeled split.
    Calibrate(RunArgs),
    /// Score a prediction file against a labeled corpus.
    Evaluate(EvaluateArgs),
    /// Print corpus statistics.
    Stats(StatsArgs),
}

#[derive(Args)]
struct EvaluateArgs {
    /// Subtask whose submission format the predictions follow.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    subtask: u8,
    #[arg(long)]
    predictions: PathBuf,
    /// Gold corpus file, or `builtin:sample` / `builtin:dev-shaped`.
    #[arg(long)]
    gold: String,
    /// Externally computed metric, e.g. `alignscore=0.61`. Repeatable.
    #[arg(long = "external", value_parser = parse_external)]
    external: Vec<(String, f64)>,
    /// Config whose `[evaluate]` section sets the SARI source texts.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Corpus file, or `builtin:sample` / `builtin:dev-shaped`.
    corpus: String,
    #[arg(long)]
    json: bool,
}

fn parse_external(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected name=value")?;
    let value: f64 = value
        .parse()
        .map_err(|_| format!("`{value}` is not a number"))?;
    Ok((name.trim().to_string(), value))
}

fn print_manifest(m: &RunManifest) {
    println!("{} on split {}", m.task, m.split);
    if let Some(c) = &m.calibration {
        println!(
            "  threshold {:.6} on {}: P {:.2} R {:.2} F1 {:.2} (all-relevant F1 {:.2})",
            c.best_t,
            c.calibrated_on,
            c.best.precision * 100.0,
            c.best.recall * 100.0,
            c.best.f1 * 100.0,
            c.baseline_f1 * 100.0
        );
    }
    if let Some(s) = &m.synth {
        println!(
            "  synthetic: {} accepted, {} rejected, {} failed from {} seed(s)",
            s.accepted, s.rejected, s.failed, s.seeds
        );
    }
    println!(
        "  backend calls {}, cache hits {} (ratio {:.2})",
        m.total_backend_calls, m.cache_hits, m.cache_hit_ratio
    );
    for (name, digest) in &m.outputs {
        println!("  wrote {name} sha256:{}", &digest[..16]);
    }
}

fn run(cli: Cli) -> Result<()> {
    let subtask = |args: &RunArgs, s: Subtask| -> Result<()> {
        let manifest = args.pipeline()?.run_subtask(s, &args.split)?;
        print_manifest(&manifest);
        Ok(())
    };
    match cli.command {
        Command::Interpret(a) => subtask(&a, Subtask::Interpret),
        Command::Evidence(a) => subtask(&a, Subtask::Evidence),
        Command::Answer(a) => subtask(&a, Subtask::Answer),
        Command::Align(a) => subtask(&a, Subtask::Align),
        Command::Synth(a) => {
            print_manifest(&a.pipeline()?.synthesize(&a.split)?);
            Ok(())
        }
        Command::Calibrate(a) => {
            print_manifest(&a.pipeline()?.calibrate(&a.split)?);
            Ok(())
        }
        Command::Evaluate(a) => {
            let mut options = match &a.config {
                Some(path) => RunConfig::from_file(path)?.evaluate,
                None => Default::default(),
            };
            options.external = a.external.into_iter().collect();
            let gold = load_corpus(&a.gold)?;
            let report = evaluate_file(
                &a.predictions,
                &gold,
                Subtask::from_number(a.subtask)?,
                &options,
            )?;
            if a.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                );
            } else {
                print!("{}", report.to_table());
            }
            Ok(())
        }
        Command::Stats(a) => {
            let stats = compute_stats(&load_corpus(&a.corpus)?)?;
            if a.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&stats).expect("stats serialize")
                );
            } else {
                print!("{}", stats.to_table());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e);
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}

fn report_error(e: &Error) {
    eprintln!("error ({:?}): {e}", e.class());
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        eprintln!("  caused by: {s}");
        source = s.source();
    }
}
