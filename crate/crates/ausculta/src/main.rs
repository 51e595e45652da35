//! Command-line front end for the body-sound representation pipeline.
//!
//! Thin orchestration only: every subcommand parses arguments, calls the
//! library, writes a run manifest next to its outputs, and exits with a
//! code that encodes the failure class (1 config/usage, 2 data/io,
//! 3 numeric).

use std::path::{Path, PathBuf};
use std::process;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use ausculta::config::{self, ProbeConfig, ProbeMode, TrainConfig};
use ausculta::corpus::{self, FixtureSpec};
use ausculta::metrics::{self, Prediction};
use ausculta::rank::{self, Grouping, ScoreTable};
use ausculta::report::{bar_chart, radar_chart, RunManifest};
use ausculta::{audio, pretrain, probe, tasks, Error, Result};

#[derive(Parser)]
#[command(
    name = "ausculta",
    version,
    about = "Self-supervised body-sound representation learning and benchmarking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode, standardize, and featurize a corpus manifest.
    Preprocess(PreprocessArgs),
    /// Contrastive pretraining on preprocessed features.
    Pretrain(PretrainArgs),
    /// Train and evaluate a task probe on a pretrained checkpoint.
    Probe(ProbeArgs),
    /// Re-score a predictions file against a task's metrics.
    Eval(EvalArgs),
    /// Aggregate a score table into MRR and Borda rankings.
    Rank(RankArgs),
    /// List the benchmark task registry.
    Tasks(TasksArgs),
    /// Generate a small synthetic corpus for smoke tests.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Corpus manifest (JSONL).
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for audio/ and features/.
    #[arg(long)]
    out: PathBuf,
    /// Silence-trim threshold in dBFS.
    #[arg(long, default_value_t = audio::TRIM_DB_DEFAULT, allow_hyphen_values = true)]
    trim_db: f64,
    /// Fail on the first undecodable record instead of skipping it.
    #[arg(long)]
    strict: bool,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct PretrainArgs {
    /// Training configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Also export per-record embeddings to out_dir/embeddings.abcp.
    #[arg(long)]
    export_embeddings: bool,
}

#[derive(Args)]
struct ProbeArgs {
    /// Probe configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Merge the resulting metrics into this score-table JSON.
    #[arg(long)]
    merge_scores: Option<PathBuf>,
    /// Model name to file the metrics under when merging.
    #[arg(long, default_value = "ausculta")]
    model_name: String,
}

#[derive(Args)]
struct EvalArgs {
    /// Predictions file (JSONL with record_id, output, label).
    #[arg(long)]
    predictions: PathBuf,
    /// Task id from the registry (T1..T16).
    #[arg(long)]
    task: String,
    /// Write the evaluation report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    /// Score table JSON (bare map or wrapped with notes).
    #[arg(long)]
    scores: PathBuf,
    /// Metric to rank on: macro_f1, micro_f1, or accuracy.
    #[arg(long, default_value = "macro_f1")]
    metric: String,
    /// Task grouping: function, sound, or tasktype.
    #[arg(long, default_value = "function")]
    group: String,
    /// Output directory for the report and charts.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TasksArgs {
    /// Emit the registry as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FixtureArgs {
    /// Output directory for manifest.jsonl and audio/.
    #[arg(long)]
    out: PathBuf,
    /// Number of synthetic datasets.
    #[arg(long, default_value_t = 1)]
    datasets: usize,
    /// Recordings per class per dataset.
    #[arg(long, default_value_t = 8)]
    records_per_class: usize,
    /// WAV sample rate (8 kHz by default to exercise resampling).
    #[arg(long, default_value_t = 8000)]
    sample_rate: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            process::exit(code);
        }
    };

    if let Err(err) = run(cli.command) {
        eprintln!("error: {err}");
        process::exit(err.exit_code());
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Pretrain(args) => cmd_pretrain(args),
        Command::Probe(args) => cmd_probe(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Rank(args) => cmd_rank(args),
        Command::Tasks(args) => cmd_tasks(args),
        Command::Fixture(args) => cmd_fixture(args),
    }
}

fn cmd_preprocess(args: PreprocessArgs) -> Result<()> {
    let started = Instant::now();
    let records = corpus::load_manifest(&args.manifest)?;
    let manifest_dir = args.manifest.parent().unwrap_or(Path::new("."));
    let summary = corpus::preprocess(
        &records,
        manifest_dir,
        &args.out,
        args.trim_db,
        args.strict,
        args.jobs,
    )?;

    let mut manifest = RunManifest::new(
        "preprocess",
        0,
        &serde_json::json!({"trim_db": args.trim_db, "strict": args.strict}),
    )
    .input(&args.manifest)
    .output(&args.out.join("audio"))
    .output(&args.out.join("features"));
    manifest.finish(started);
    manifest.write(&args.out)?;

    println!(
        "preprocessed {} records -> {} ({} skipped)",
        summary.processed,
        args.out.display(),
        summary.skipped.len()
    );
    for (id, reason) in &summary.skipped {
        println!("  skipped {id}: {reason}");
    }
    Ok(())
}

fn cmd_pretrain(args: PretrainArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg: TrainConfig = config::load_json(&args.config)?;
    cfg.seed = config::effective_seed(cfg.seed)?;
    let outcome = pretrain::run_pretraining(&cfg)?;

    let mut outputs = vec![
        cfg.out_dir.join("checkpoint.abcp"),
        cfg.out_dir.join("training_log.jsonl"),
    ];
    if args.export_embeddings {
        let mut records = corpus::load_manifest(&cfg.manifest)?;
        corpus::split_validation(&mut records, cfg.seed);
        let features = pretrain::load_feature_map(&cfg.data_dir, &records)?;
        let path = cfg.out_dir.join("embeddings.abcp");
        pretrain::export_embeddings(&outcome.model, &records, &features, &path)?;
        outputs.push(path);
    }

    let mut manifest = RunManifest::new("pretrain", cfg.seed, &cfg).input(&args.config);
    for out in &outputs {
        manifest = manifest.output(out);
    }
    manifest.finish(started);
    manifest.write(&cfg.out_dir)?;

    if let Some(last) = outcome.stats.last() {
        println!(
            "pretrained {} epochs: train loss {:.4} acc {:.3}, val loss {:.4} acc {:.3}",
            outcome.stats.len(),
            last.train_loss,
            last.train_accuracy,
            last.val_loss,
            last.val_accuracy
        );
    }
    println!("checkpoint: {}", cfg.out_dir.join("checkpoint.abcp").display());
    Ok(())
}

fn cmd_probe(args: ProbeArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg: ProbeConfig = config::load_json(&args.config)?;
    cfg.seed = config::effective_seed(cfg.seed)?;
    let outcome = probe::run_probe(&cfg)?;

    let mut manifest = RunManifest::new("probe", cfg.seed, &cfg)
        .input(&args.config)
        .input(&cfg.checkpoint)
        .output(&cfg.out_dir.join(format!("head_{}.abcp", outcome.task_id)))
        .output(&cfg.out_dir.join("predictions.jsonl"))
        .output(&cfg.out_dir.join("eval.json"));

    if let Some(scores_path) = &args.merge_scores {
        let mut table = if scores_path.exists() {
            ScoreTable::load(scores_path)?
        } else {
            ScoreTable::default()
        };
        for (metric, value) in &outcome.report.metrics {
            table.insert(&args.model_name, &outcome.task_id, metric, *value);
        }
        table.save(scores_path)?;
        manifest = manifest.output(scores_path);
    }
    manifest.finish(started);
    manifest.write(&cfg.out_dir)?;

    let mode = match outcome.mode {
        ProbeMode::Linear => "linear",
        ProbeMode::Full => "full",
    };
    println!(
        "probe {} ({mode}): {} train records ({} segments), {} eval records",
        outcome.task_id, outcome.n_train_records, outcome.n_train_segments, outcome.report.n_eval
    );
    for (metric, value) in &outcome.report.metrics {
        println!("  {metric}: {value:.4}");
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let task = tasks::find(&args.task)?;
    let text = std::fs::read_to_string(&args.predictions)
        .map_err(|e| Error::io(&args.predictions, e))?;
    let mut preds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(line).map_err(|e| {
            Error::data(format!("{}:{}: {e}", args.predictions.display(), i + 1))
        })?;
        preds.push(p);
    }
    let report = metrics::evaluate(task, &preds)?;
    let json = serde_json::to_vec_pretty(&report).expect("report serializes");
    match &args.out {
        Some(path) => {
            audio::atomic_write(path, &json)?;
            println!("wrote {}", path.display());
        }
        None => println!("{}", String::from_utf8_lossy(&json)),
    }
    Ok(())
}

fn cmd_rank(args: RankArgs) -> Result<()> {
    let started = Instant::now();
    let table = ScoreTable::load(&args.scores)?;
    let grouping: Grouping = args.group.parse()?;
    let report = rank::rank_report(&table, grouping, &args.metric)?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let report_path = args.out.join("rank_report.json");
    let json = serde_json::to_vec_pretty(&report).expect("report serializes");
    audio::atomic_write(&report_path, &json)?;

    // One grouped bar chart of MRRs across groups, plus a radar over
    // per-group MRR for each model.
    let group_names: Vec<String> = report.groups.iter().map(|g| g.name.clone()).collect();
    let series: Vec<(String, Vec<f64>)> = report
        .models
        .iter()
        .map(|m| {
            (
                m.clone(),
                report.groups.iter().map(|g| g.mrr[m]).collect::<Vec<f64>>(),
            )
        })
        .collect();
    let bar_path = args.out.join("mrr_bars.svg");
    audio::atomic_write(
        &bar_path,
        bar_chart(
            &format!("Mean reciprocal rank by group ({})", report.metric),
            &group_names,
            &series,
        )
        .as_bytes(),
    )?;
    let radar_path = args.out.join("mrr_radar.svg");
    audio::atomic_write(
        &radar_path,
        radar_chart(
            &format!("MRR profile ({})", report.metric),
            &group_names,
            &series,
        )
        .as_bytes(),
    )?;

    let mut manifest = RunManifest::new(
        "rank",
        0,
        &serde_json::json!({"metric": args.metric, "group": args.group}),
    )
    .input(&args.scores)
    .output(&report_path)
    .output(&bar_path)
    .output(&radar_path);
    manifest.finish(started);
    manifest.write(&args.out)?;

    for group in &report.groups {
        println!("{} ({} tasks)", group.name, group.tasks.len());
        let mut rows: Vec<(&String, f64)> = group.mrr.iter().map(|(m, &v)| (m, v)).collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        for (model, mrr) in rows {
            println!("  {model:<12} mrr {mrr:.4}  borda {:.1}", group.borda[model]);
        }
    }
    println!("report: {}", report_path.display());
    Ok(())
}

fn cmd_tasks(args: TasksArgs) -> Result<()> {
    if args.json {
        let json = serde_json::to_string_pretty(tasks::registry()).expect("registry serializes");
        println!("{json}");
        return Ok(());
    }
    println!(
        "{:<5} {:<24} {:<6} {:<5} {:<22} {:>7} {:>6}",
        "id", "dataset", "sound", "kind", "group", "classes", "chunk"
    );
    for task in tasks::registry() {
        println!(
            "{:<5} {:<24} {:<6} {:<5} {:<22} {:>7} {:>5}s",
            task.id,
            task.dataset,
            format!("{:?}", task.sound),
            format!("{:?}", task.kind).to_uppercase(),
            task.group.label(),
            task.classes.len(),
            task.chunk_secs,
        );
    }
    Ok(())
}

fn cmd_fixture(args: FixtureArgs) -> Result<()> {
    let started = Instant::now();
    let spec = FixtureSpec {
        datasets: args.datasets,
        records_per_class: args.records_per_class,
        sample_rate: args.sample_rate,
        seed: config::effective_seed(args.seed)?,
    };
    let records = corpus::make_fixture(&args.out, &spec)?;

    let mut manifest = RunManifest::new("fixture", spec.seed, &spec)
        .output(&args.out.join("manifest.jsonl"))
        .output(&args.out.join("audio"));
    manifest.finish(started);
    manifest.write(&args.out)?;

    println!(
        "fixture: {} records across {} dataset(s) -> {}",
        records.len(),
        spec.datasets,
        args.out.display()
    );
    Ok(())
}
