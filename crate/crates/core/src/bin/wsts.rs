//! Thin CLI over the library pipeline: batch generation, model training,
//! MPC evaluation, strategy comparison, and report rendering. Every
//! capability here is also available as a library call (see `examples/`).

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use wsts::harness::{
    canonical_json, compare_strategies, comparison_csv, eval_csv, output_dir, render_comparison,
    render_eval, run_strategy, ComparisonReport, EvalReport, HarnessConfig, MpcRunner, Pipeline,
};
use wsts::model::TabularMarkovModel;
use wsts::planner::strategy_by_name;
use wsts::trajectory::OfflineBatch;

#[derive(Parser)]
#[command(
    name = "wsts",
    version,
    about = "Risk-aware beam-search planning over learned trajectory models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an offline batch from the configured environment and policy.
    GenBatch {
        /// TOML config file.
        #[arg(long)]
        config: PathBuf,
        /// Output file (default `<out-dir>/batch.txt`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output directory (default `$WSTS_OUT_DIR`, then `wsts-out`).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train the tabular sequence model on a batch file.
    TrainModel {
        #[arg(long)]
        config: PathBuf,
        /// Batch file produced by `gen-batch`.
        #[arg(long)]
        batch: PathBuf,
        /// Output file (default `<out-dir>/model.txt`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run MPC episodes for one strategy and write an evaluation report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        batch: PathBuf,
        /// Trained model file; retrained from the batch when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        /// wsts | embs | topk
        #[arg(long, default_value = "wsts")]
        strategy: String,
        /// Report file (default `<out-dir>/report.json`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Write per-step planning traces as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Embed wall-clock timings in the report (breaks byte-for-byte
        /// reproducibility of the output file).
        #[arg(long)]
        timings: bool,
    },
    /// Compare WSTS against EM-BS end to end over the delta sweep grid.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        timings: bool,
    },
    /// Render a report file (evaluation or comparison) as a table.
    Report {
        /// Report JSON produced by `run` or `compare`.
        #[arg(long)]
        input: PathBuf,
        /// Also write the aggregate table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenBatch { config, out, out_dir } => gen_batch(config, out, out_dir),
        Command::TrainModel { config, batch, out, out_dir } => {
            train_model(config, batch, out, out_dir)
        }
        Command::Run {
            config,
            batch,
            model,
            strategy,
            out,
            out_dir,
            trace,
            timings,
        } => run(config, batch, model, strategy, out, out_dir, trace, timings),
        Command::Compare { config, out_dir, timings } => compare(config, out_dir, timings),
        Command::Report { input, csv } => report(input, csv),
    }
}

fn load_config(path: &PathBuf) -> Result<HarnessConfig> {
    HarnessConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn resolve_out(out: Option<PathBuf>, out_dir: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    let path = match out {
        Some(p) => p,
        None => output_dir(out_dir).join(name),
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(path)
}

fn gen_batch(config: PathBuf, out: Option<PathBuf>, out_dir: Option<PathBuf>) -> Result<()> {
    let config = load_config(&config)?;
    let pipeline = Pipeline::prepare(&config)?;
    let path = resolve_out(out, out_dir, "batch.txt")?;
    pipeline.batch.save(&path)?;
    println!(
        "wrote {} ({} episodes, {} transitions, policy {}, config {})",
        path.display(),
        pipeline.batch.trajectories().len(),
        pipeline.batch.num_transitions(),
        pipeline.batch.provenance().policy_label,
        &pipeline.config_hash[..12],
    );
    Ok(())
}

fn train_model(
    config: PathBuf,
    batch: PathBuf,
    out: Option<PathBuf>,
    out_dir: Option<PathBuf>,
) -> Result<()> {
    let config = load_config(&config)?;
    let batch_data =
        OfflineBatch::load(&batch).with_context(|| format!("loading batch {}", batch.display()))?;
    if batch_data.gamma() != config.planner.gamma {
        eprintln!(
            "warning: batch gamma {} differs from planner.gamma {}",
            batch_data.gamma(),
            config.planner.gamma
        );
    }
    let pipeline = Pipeline::from_artifacts(&config, batch_data, None)?;
    let path = resolve_out(out, out_dir, "model.txt")?;
    pipeline.model.save(&path)?;
    println!(
        "wrote {} (k = {}, alpha = {}, {} contexts, config {})",
        path.display(),
        pipeline.model.order(),
        pipeline.model.alpha(),
        pipeline.model.num_contexts(),
        &pipeline.config_hash[..12],
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run(
    config: PathBuf,
    batch: PathBuf,
    model: Option<PathBuf>,
    strategy: String,
    out: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    trace: Option<PathBuf>,
    timings: bool,
) -> Result<()> {
    let config = load_config(&config)?;
    let batch_data =
        OfflineBatch::load(&batch).with_context(|| format!("loading batch {}", batch.display()))?;
    let model_data = match &model {
        Some(path) => Some(
            TabularMarkovModel::load(path)
                .with_context(|| format!("loading model {}", path.display()))?,
        ),
        None => None,
    };
    let started = std::time::Instant::now();
    let pipeline = Pipeline::from_artifacts(&config, batch_data, model_data)?;
    let mut report = run_strategy(&pipeline, &strategy)?;
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    eprintln!("evaluation took {elapsed_ms:.1} ms");
    if timings {
        report.timings_ms = Some([("total".to_string(), elapsed_ms)].into_iter().collect());
        let path = resolve_out(out, out_dir, "report.json")?;
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        fs::write(&path, text)?;
        println!("wrote {}", path.display());
    } else {
        let path = resolve_out(out, out_dir, "report.json")?;
        fs::write(&path, canonical_json(&report))?;
        println!("wrote {}", path.display());
    }
    print!("{}", render_eval(&report));

    if let Some(trace_path) = trace {
        write_traces(&pipeline, &strategy, &trace_path)?;
        println!("wrote {}", trace_path.display());
    }
    Ok(())
}

/// Re-run each evaluation seed with tracing enabled (episodes are
/// deterministic, so the traces match the reported scores) and stream one
/// JSON line per executed step.
fn write_traces(pipeline: &Pipeline, strategy_name: &str, path: &PathBuf) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let strategy = strategy_by_name(strategy_name)?;
    let mut file = fs::File::create(path)?;
    for seed in 0..pipeline.config.eval.seeds as u64 {
        let mut runner = MpcRunner::new(
            pipeline.chain.clone(),
            &pipeline.model,
            &pipeline.discretizer,
            strategy.as_ref(),
            pipeline.config.planner_config(pipeline.config.planner.delta, 0),
        )?;
        let (_, steps) = runner.run_episode_traced(seed)?;
        for step in steps {
            let line = serde_json::json!({
                "seed": seed,
                "step": step.step,
                "state": step.state,
                "action": step.action,
                "reward": step.reward,
                "planning": step.planning,
            });
            writeln!(file, "{line}")?;
        }
    }
    Ok(())
}

fn compare(config: PathBuf, out_dir: Option<PathBuf>, timings: bool) -> Result<()> {
    let config = load_config(&config)?;
    let (mut report, measured) = compare_strategies(&config)?;
    for (phase, ms) in &measured {
        eprintln!("{phase}: {ms:.1} ms");
    }
    let dir = output_dir(out_dir);
    fs::create_dir_all(&dir)?;
    let json_path = dir.join("compare.json");
    if timings {
        report.timings_ms = Some(measured);
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        fs::write(&json_path, text)?;
    } else {
        fs::write(&json_path, canonical_json(&report))?;
    }
    let csv_path = dir.join("compare.csv");
    fs::write(&csv_path, comparison_csv(&report))?;
    println!("wrote {}", json_path.display());
    println!("wrote {}", csv_path.display());
    print!("{}", render_comparison(&report));
    Ok(())
}

fn report(input: PathBuf, csv: Option<PathBuf>) -> Result<()> {
    let text =
        fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    if let Ok(comparison) = serde_json::from_str::<ComparisonReport>(&text) {
        print!("{}", render_comparison(&comparison));
        if let Some(path) = csv {
            fs::write(&path, comparison_csv(&comparison))?;
            println!("wrote {}", path.display());
        }
        return Ok(());
    }
    if let Ok(eval) = serde_json::from_str::<EvalReport>(&text) {
        print!("{}", render_eval(&eval));
        if let Some(path) = csv {
            fs::write(&path, eval_csv(&eval))?;
            println!("wrote {}", path.display());
        }
        return Ok(());
    }
    bail!("{} is neither a comparison nor an evaluation report", input.display());
}
