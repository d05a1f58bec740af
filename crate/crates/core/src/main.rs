use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use reqclass::cli::experiment::{checkpoint_path, load_preprocessor, load_vectors};
use reqclass::cli::{
    parse_assignment, parse_config, render_report, run_experiment, run_job, ExperimentConfig, RepetitionData,
    ReportFormat,
};
use reqclass::corpus::{class_summary, load_csv, Label, RequirementRecord};
use reqclass::evaluation::{confusion, weighted_metrics, MetricsReport};
use reqclass::models::{predict_batch, toy_gradient_check, Checkpoint, ModelKind, GRADCHECK_TOLERANCE};
use reqclass::textprep::{Preprocessor, StopwordList, TokenSequence};
use reqclass::vocab_embed::encode;
use reqclass::{Error, Result};

/// Functional / non-functional requirement classification experiments.
#[derive(Parser)]
#[command(name = "reqclass", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess a corpus and write the token cache.
    Prep(PrepArgs),
    /// Train one model on one repetition's split and save its checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a labelled corpus.
    Eval(EvalArgs),
    /// Run every model and both ensembles over all repetitions and modes.
    Experiment(ConfigArgs),
    /// Gradient check of every architecture at toy size.
    Gradcheck(GradcheckArgs),
}

/// Settings shared by `train` and `experiment`. Explicit flags override the
/// config file; `--set` assignments apply last.
#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    /// corpus, pretrained or both.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    glove_path: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    validation_split: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    filters: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<String>,
    /// Any config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_parser = parse_assignment)]
    set: Vec<(String, String)>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let flags = [
            ("data", &self.data),
            ("mode", &self.mode),
            ("glove_path", &self.glove_path),
            ("reps", &self.reps),
            ("seed", &self.seed),
            ("batch_size", &self.batch_size),
            ("epochs", &self.epochs),
            ("validation_split", &self.validation_split),
            ("hidden", &self.hidden),
            ("filters", &self.filters),
            ("out", &self.out),
            ("workers", &self.workers),
        ];
        let mut overrides: Vec<(String, String)> = flags
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        overrides.extend(self.set.iter().cloned());
        parse_config(self.config.as_deref(), &overrides)
    }
}

#[derive(Args)]
struct PrepArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output CSV with `label,tokens` columns.
    #[arg(long)]
    out: PathBuf,
    /// One stopword per line; defaults to the built-in English list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// lstm, bilstm, gru, bigru or cnn.
    #[arg(long)]
    model: ModelKind,
    /// Repetition whose split and seeds are used.
    #[arg(long, default_value_t = 0)]
    rep: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Write `label,probability` per record to this file.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn load_records(config: &ExperimentConfig) -> Result<Vec<RequirementRecord>> {
    let path = config
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("data path is required".into()))?;
    load_csv(path)
}

fn preprocessor_from(stopwords: Option<&Path>) -> Result<Preprocessor> {
    let list = match stopwords {
        Some(p) => StopwordList::from_file(p)?,
        None => StopwordList::english(),
    };
    Ok(Preprocessor::new(list))
}

fn print_metrics(m: &MetricsReport) {
    for (name, v) in MetricsReport::NAMES.iter().zip(m.values()) {
        println!("  {name:<10} {v:.2}");
    }
}

fn prep(args: &PrepArgs) -> Result<bool> {
    let records = load_csv(&args.data)?;
    let pre = preprocessor_from(args.stopwords.as_deref())?;
    let mut w = csv::Writer::from_path(&args.out).map_err(|e| Error::Schema(e.to_string()))?;
    w.write_record(["label", "tokens"]).map_err(|e| Error::Schema(e.to_string()))?;
    let mut empty = 0;
    for r in &records {
        let tokens = pre.preprocess(&r.text);
        empty += usize::from(tokens.is_empty());
        w.write_record([r.label.to_string(), tokens.join(" ")])
            .map_err(|e| Error::Schema(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&args.out, e))?;
    let s = class_summary(&records);
    println!("{} records ({} FR, {} NFR) -> {}", s.total, s.fr, s.nfr, args.out.display());
    if empty > 0 {
        println!("{empty} records have no tokens after preprocessing");
    }
    Ok(true)
}

fn train_one(args: &TrainArgs) -> Result<bool> {
    let config = args.config.resolve()?;
    if args.rep >= config.reps {
        return Err(Error::Config(format!("rep {} is outside 0..{}", args.rep, config.reps)));
    }
    let mode = config.modes[0];
    let records = load_records(&config)?;
    let pre = load_preprocessor(&config)?;
    let tokens: Vec<TokenSequence> = records.iter().map(|r| pre.preprocess(&r.text)).collect();
    let vectors = load_vectors(&config, &tokens)?;
    let data = RepetitionData::prepare(&records, &tokens, &config, args.rep)?;
    let started = Instant::now();
    let job = run_job(&config, &data, args.model, mode, vectors.as_ref())?;
    let preds: Vec<Label> = job.test_probs.iter().map(|&p| Label::from_probability(p)).collect();
    let metrics = weighted_metrics(&confusion(&preds, &data.test_y)?)?;

    println!(
        "{} ({}), repetition {}, {} train / {} test, {:.1}s",
        args.model,
        mode.name(),
        args.rep,
        data.train_x.len(),
        data.test_x.len(),
        started.elapsed().as_secs_f64()
    );
    for e in &job.trace.epochs {
        match e.validation_loss {
            Some(v) => println!("  epoch {}: loss {:.4}, val_loss {:.4}", e.epoch + 1, e.train_loss, v),
            None => println!("  epoch {}: loss {:.4}", e.epoch + 1, e.train_loss),
        }
    }
    print_metrics(&metrics);
    let dir = config.out.join("checkpoints");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = checkpoint_path(&dir, mode, args.model, args.rep);
    Checkpoint {
        spec: job.spec,
        vocab: data.vocab,
        params: job.params,
    }
    .save(&path)?;
    println!("checkpoint: {}", path.display());
    Ok(true)
}

fn eval(args: &EvalArgs) -> Result<bool> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let records = load_csv(&args.data)?;
    let pre = preprocessor_from(args.stopwords.as_deref())?;
    let seqs = records
        .iter()
        .map(|r| encode(&pre.preprocess(&r.text), &ckpt.vocab, ckpt.spec.max_len))
        .collect::<Result<Vec<_>>>()?;
    let probs = predict_batch(&seqs, &ckpt.params, &ckpt.spec)?;
    let preds: Vec<Label> = probs.iter().map(|&p| Label::from_probability(p)).collect();
    let truth: Vec<Label> = records.iter().map(|r| r.label).collect();
    let counts = confusion(&preds, &truth)?;
    println!("{} ({}) on {} records", ckpt.spec.kind, ckpt.spec.embedding_mode.name(), records.len());
    print_metrics(&weighted_metrics(&counts)?);
    println!("  accuracy   {:.2}", 100.0 * counts.accuracy());
    if let Some(path) = &args.predictions {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Schema(e.to_string()))?;
        w.write_record(["label", "probability"]).map_err(|e| Error::Schema(e.to_string()))?;
        for (l, p) in preds.iter().zip(&probs) {
            w.write_record([l.to_string(), p.to_string()])
                .map_err(|e| Error::Schema(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(true)
}

fn experiment(args: &ConfigArgs) -> Result<bool> {
    let config = args.resolve()?;
    let records = load_records(&config)?;
    let ckpt_dir = config.out.join("checkpoints");
    let (report, timings) = run_experiment(&config, &records, Some(&ckpt_dir))?;
    render_report(
        &report,
        Some(&timings),
        &config.out,
        &[ReportFormat::Text, ReportFormat::Structured],
    )?;
    print!("{}", reqclass::cli::render_text(&report));
    println!(
        "\n{} jobs in {:.1}s on {} workers; reports in {}",
        report.jobs_total,
        timings.total_seconds,
        timings.workers,
        config.out.display()
    );
    Ok(report.all_completed())
}

fn gradcheck(args: &GradcheckArgs) -> Result<bool> {
    let started = Instant::now();
    let mut ok = true;
    for kind in ModelKind::ALL {
        let r = toy_gradient_check(kind, args.seed)?;
        ok &= r.passed;
        println!(
            "{:<7} max relative error {:.3e} over {} entries  {}",
            kind.name(),
            r.max_relative_error,
            r.entries_checked,
            if r.passed { "ok" } else { "FAILED" }
        );
    }
    println!("tolerance {GRADCHECK_TOLERANCE:e}, {:.2}s", started.elapsed().as_secs_f64());
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Prep(a) => prep(a),
        Command::Train(a) => train_one(a),
        Command::Eval(a) => eval(a),
        Command::Experiment(a) => experiment(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
