//! Repetitions × embedding modes × models, plus the two ensembles.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CheckpointPolicy, ExperimentConfig, SplitMode};
use crate::corpus::{class_summary, stratified_split_indices, ClassSummary, Label, RequirementRecord};
use crate::ensemble::vote_columns;
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, confusion, format_cell, round2, weighted_metrics, MetricsReport};
use crate::models::{predict_batch, Checkpoint, ModelKind, ModelSpec, ParameterSet};
use crate::textprep::{Preprocessor, StopwordList, TokenSequence};
use crate::training::{train, TrainingTrace};
use crate::vocab_embed::{
    encode, init_corpus_trained, length_percentile, EmbeddingMode, EncodedSequence, PretrainedVectors,
    Vocabulary,
};

/// Report rows, in table order.
pub const ROW_NAMES: [&str; 7] = ["LSTM", "BiLSTM", "GRU", "BiGRU", "CNN", "Hard voting", "Soft voting"];

pub const LENGTH_PERCENTILE: f64 = 0.95;
pub const MAX_LEN_CAP: usize = 100;

/// Expected F-score band per mode. Results outside it are flagged, not failed.
pub fn expected_band(mode: EmbeddingMode) -> (f64, f64) {
    match mode {
        EmbeddingMode::CorpusTrained => (70.0, 85.0),
        EmbeddingMode::PretrainedStatic => (68.0, 80.0),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of repetition `rep`.
pub fn repetition_seed(master: u64, rep: usize) -> u64 {
    master.wrapping_add(rep as u64)
}

/// Seed of one model's job within a repetition.
pub fn job_seed(rep_seed: u64, model_index: usize) -> u64 {
    splitmix64(splitmix64(rep_seed) ^ (model_index as u64 + 1))
}

/// Split, vocabulary and encodings of one repetition.
#[derive(Debug, Clone)]
pub struct RepetitionData {
    pub rep: usize,
    pub seed: u64,
    pub vocab: Vocabulary,
    pub max_len: usize,
    pub train_x: Vec<EncodedSequence>,
    pub train_y: Vec<Label>,
    pub test_x: Vec<EncodedSequence>,
    pub test_y: Vec<Label>,
}

impl RepetitionData {
    /// Splits with the repetition's seed (or the master seed in fixed-split
    /// mode) and builds the vocabulary from the training side only.
    pub fn prepare(
        records: &[RequirementRecord],
        tokens: &[TokenSequence],
        config: &ExperimentConfig,
        rep: usize,
    ) -> Result<Self> {
        let seed = repetition_seed(config.seed, rep);
        let split_seed = match config.split_mode {
            SplitMode::Resplit => seed,
            SplitMode::Fixed => config.seed,
        };
        let (train_idx, test_idx) = stratified_split_indices(records, config.test_fraction, split_seed)?;
        let vocab = Vocabulary::build(train_idx.iter().map(|&i| &tokens[i]));
        let max_len = config.max_len.unwrap_or_else(|| {
            let lengths: Vec<usize> = train_idx.iter().map(|&i| tokens[i].len()).collect();
            length_percentile(&lengths, LENGTH_PERCENTILE, MAX_LEN_CAP, config.conv_width)
        });
        let enc = |idx: &[usize]| -> Result<Vec<EncodedSequence>> {
            idx.iter().map(|&i| encode(&tokens[i], &vocab, max_len)).collect()
        };
        Ok(RepetitionData {
            rep,
            seed,
            max_len,
            train_x: enc(&train_idx)?,
            train_y: train_idx.iter().map(|&i| records[i].label).collect(),
            test_x: enc(&test_idx)?,
            test_y: test_idx.iter().map(|&i| records[i].label).collect(),
            vocab,
        })
    }
}

pub fn spec_for(config: &ExperimentConfig, kind: ModelKind, mode: EmbeddingMode, embed_dim: usize, max_len: usize) -> ModelSpec {
    ModelSpec {
        kind,
        embedding_mode: mode,
        embed_dim,
        hidden: config.hidden,
        conv_filters: config.filters,
        conv_width: config.conv_width,
        max_len,
    }
}

/// A trained model and its test-set probabilities.
pub struct JobOutput {
    pub spec: ModelSpec,
    pub params: ParameterSet,
    pub trace: TrainingTrace,
    pub test_probs: Vec<f64>,
}

/// Initializes, trains and scores one model.
pub fn run_job(
    config: &ExperimentConfig,
    data: &RepetitionData,
    kind: ModelKind,
    mode: EmbeddingMode,
    vectors: Option<&PretrainedVectors>,
) -> Result<JobOutput> {
    let model_index = ModelKind::ALL.iter().position(|&k| k == kind).expect("known model");
    let mut rng = ChaCha8Rng::seed_from_u64(job_seed(data.seed, model_index));
    let embedding = match mode {
        EmbeddingMode::CorpusTrained => init_corpus_trained(&data.vocab, config.embed_dim, rng.gen())?,
        EmbeddingMode::PretrainedStatic => vectors
            .ok_or_else(|| Error::Config("pretrained mode requires glove_path".into()))?
            .table_for(&data.vocab)?,
    };
    let spec = spec_for(config, kind, mode, embedding.dim(), data.max_len);
    let params = ParameterSet::init(&spec, embedding, &mut rng)?;
    let mut training = config.training;
    training.seed = rng.gen();
    let (params, trace) = train(&spec, params, &data.train_x, &data.train_y, &training)?;
    let test_probs = predict_batch(&data.test_x, &params, &spec)?;
    Ok(JobOutput {
        spec,
        params,
        trace,
        test_probs,
    })
}

/// One repetition's outcome for one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub rep: usize,
    pub metrics: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace: Option<TrainingTrace>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Mean and (when at least two values exist) sample std of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub mean: f64,
    pub std: Option<f64>,
    pub count: usize,
}

impl ReportCell {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        match values.len() {
            0 => None,
            1 => Some(ReportCell { mean: values[0], std: None, count: 1 }),
            n => {
                let a = aggregate(values).expect("at least two values");
                Some(ReportCell { mean: a.mean, std: Some(a.std), count: n })
            }
        }
    }

    /// `MM.MM(S.SS)`, or `MM.MM(n/a)` for a single value.
    pub fn render(&self) -> String {
        match self.std {
            Some(std) => format_cell(self.mean, std),
            None => format!("{}(n/a)", round2(self.mean)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowReport {
    pub name: String,
    pub runs: Vec<RunEntry>,
    pub completed: usize,
    /// Precision, recall, F-score over completed runs.
    pub cells: Option<[ReportCell; 3]>,
    /// Mean F-score lies outside the expected band.
    pub outside_band: bool,
}

impl RowReport {
    fn from_runs(name: &str, runs: Vec<RunEntry>, band: (f64, f64)) -> Self {
        let done: Vec<&MetricsReport> = runs.iter().filter_map(|r| r.metrics.as_ref()).collect();
        let column = |j: usize| -> Vec<f64> { done.iter().map(|m| m.values()[j]).collect() };
        let cells = match (
            ReportCell::from_values(&column(0)),
            ReportCell::from_values(&column(1)),
            ReportCell::from_values(&column(2)),
        ) {
            (Some(p), Some(r), Some(f)) => Some([p, r, f]),
            _ => None,
        };
        let outside_band = cells.is_some_and(|c| c[2].mean < band.0 || c[2].mean > band.1);
        RowReport {
            name: name.to_string(),
            completed: done.len(),
            runs,
            cells,
            outside_band,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionInfo {
    pub rep: usize,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub embed_dim: usize,
    /// Share of vocabulary tokens found in the vector file.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: EmbeddingMode,
    pub band: (f64, f64),
    pub repetitions: Vec<RepetitionInfo>,
    pub rows: Vec<RowReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub dataset: ClassSummary,
    pub modes: Vec<ModeReport>,
    pub jobs_total: usize,
    pub jobs_failed: usize,
    /// Rows whose mean F-score falls outside the expected band.
    pub band_divergences: Vec<String>,
}

impl RunReport {
    pub fn all_completed(&self) -> bool {
        self.jobs_failed == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobTiming {
    pub mode: EmbeddingMode,
    pub model: ModelKind,
    pub rep: usize,
    pub seconds: f64,
}

/// Wall-clock measurements, kept apart from the reproducible report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub workers: usize,
    pub jobs: Vec<JobTiming>,
}

pub fn load_preprocessor(config: &ExperimentConfig) -> Result<Preprocessor> {
    let stopwords = match &config.stopwords {
        Some(path) => StopwordList::from_file(path)?,
        None => StopwordList::english(),
    };
    Ok(Preprocessor::new(stopwords))
}

/// Vectors for every token the corpus can produce.
pub fn load_vectors(config: &ExperimentConfig, tokens: &[TokenSequence]) -> Result<Option<PretrainedVectors>> {
    if !config.modes.contains(&EmbeddingMode::PretrainedStatic) {
        return Ok(None);
    }
    let path = config
        .glove_path
        .as_ref()
        .ok_or_else(|| Error::Config("pretrained mode requires glove_path".into()))?;
    let wanted: HashSet<String> = tokens.iter().flat_map(|t| t.iter().map(str::to_string)).collect();
    PretrainedVectors::load(path, Some(&wanted)).map(Some)
}

pub fn checkpoint_path(dir: &Path, mode: EmbeddingMode, kind: ModelKind, rep: usize) -> PathBuf {
    dir.join(format!("{}_{}_rep{rep:02}.ckpt", mode.name(), kind.name().to_lowercase()))
}

/// Runs the full protocol on `records`. Checkpoints go to `checkpoint_dir`
/// when one is given and the config's policy selects them.
pub fn run_experiment(
    config: &ExperimentConfig,
    records: &[RequirementRecord],
    checkpoint_dir: Option<&Path>,
) -> Result<(RunReport, Timings)> {
    config.validate()?;
    let started = Instant::now();
    let preprocessor = load_preprocessor(config)?;
    let tokens: Vec<TokenSequence> = records.iter().map(|r| preprocessor.preprocess(&r.text)).collect();
    let vectors = load_vectors(config, &tokens)?;
    let reps: Vec<RepetitionData> = (0..config.reps)
        .into_par_iter()
        .map(|rep| RepetitionData::prepare(records, &tokens, config, rep))
        .collect::<Result<_>>()?;
    if let Some(dir) = checkpoint_dir {
        if config.checkpoints != CheckpointPolicy::None {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }

    let jobs: Vec<(EmbeddingMode, usize, ModelKind)> = config
        .modes
        .iter()
        .flat_map(|&m| (0..config.reps).flat_map(move |r| ModelKind::ALL.into_iter().map(move |k| (m, r, k))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let workers = pool.current_num_threads();
    let outcomes: Vec<(Result<(TrainingTrace, Vec<f64>)>, f64)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(mode, rep, kind)| {
                let t0 = Instant::now();
                let out = run_job(config, &reps[rep], kind, mode, vectors.as_ref()).and_then(|job| {
                    let keep = match config.checkpoints {
                        CheckpointPolicy::None => false,
                        CheckpointPolicy::Last => rep + 1 == config.reps,
                        CheckpointPolicy::All => true,
                    };
                    if let (true, Some(dir)) = (keep, checkpoint_dir) {
                        Checkpoint {
                            spec: job.spec,
                            vocab: reps[rep].vocab.clone(),
                            params: job.params,
                        }
                        .save(checkpoint_path(dir, mode, kind, rep))?;
                    }
                    Ok((job.trace, job.test_probs))
                });
                (out, t0.elapsed().as_secs_f64())
            })
            .collect()
    });

    let mut timings = Timings {
        total_seconds: 0.0,
        workers,
        jobs: Vec::with_capacity(jobs.len()),
    };
    let mut jobs_failed = 0;
    let mut modes = Vec::new();
    let mut band_divergences = Vec::new();
    let mut outcomes = outcomes.into_iter();
    for &mode in &config.modes {
        let band = expected_band(mode);
        let mut runs: Vec<Vec<RunEntry>> = vec![Vec::new(); ROW_NAMES.len()];
        let mut repetitions = Vec::new();
        for data in &reps {
            let mut columns = Vec::with_capacity(ModelKind::ALL.len());
            let mut member_failed = false;
            for (m, kind) in ModelKind::ALL.into_iter().enumerate() {
                let (out, seconds) = outcomes.next().expect("one outcome per job");
                timings.jobs.push(JobTiming { mode, model: kind, rep: data.rep, seconds });
                let entry = match out {
                    Ok((trace, probs)) => {
                        let preds: Vec<Label> = probs.iter().map(|&p| Label::from_probability(p)).collect();
                        let metrics = weighted_metrics(&confusion(&preds, &data.test_y)?)?;
                        columns.push(probs);
                        RunEntry { rep: data.rep, metrics: Some(metrics), trace: Some(trace), error: None }
                    }
                    Err(e) => {
                        jobs_failed += 1;
                        member_failed = true;
                        RunEntry { rep: data.rep, metrics: None, trace: None, error: Some(e.to_string()) }
                    }
                };
                runs[m].push(entry);
            }
            let ensemble = if member_failed {
                let msg = "a member model failed in this repetition".to_string();
                [Err(msg.clone()), Err(msg)]
            } else {
                let (hard, soft) = vote_columns(&columns)?;
                [
                    Ok(weighted_metrics(&confusion(&hard, &data.test_y)?)?),
                    Ok(weighted_metrics(&confusion(&soft, &data.test_y)?)?),
                ]
            };
            for (slot, result) in ensemble.into_iter().enumerate() {
                let (metrics, error) = match result {
                    Ok(m) => (Some(m), None),
                    Err(e) => (None, Some(e)),
                };
                runs[ModelKind::ALL.len() + slot].push(RunEntry { rep: data.rep, metrics, trace: None, error });
            }
            repetitions.push(RepetitionInfo {
                rep: data.rep,
                seed: data.seed,
                train_size: data.train_x.len(),
                test_size: data.test_x.len(),
                vocab_size: data.vocab.size(),
                max_len: data.max_len,
                embed_dim: match mode {
                    EmbeddingMode::CorpusTrained => config.embed_dim,
                    EmbeddingMode::PretrainedStatic => vectors.as_ref().map_or(0, |v| v.dim),
                },
                coverage: match mode {
                    EmbeddingMode::CorpusTrained => None,
                    EmbeddingMode::PretrainedStatic => vectors.as_ref().map(|v| v.coverage(&data.vocab)),
                },
            });
        }
        let rows: Vec<RowReport> = ROW_NAMES
            .iter()
            .zip(runs)
            .map(|(name, r)| RowReport::from_runs(name, r, band))
            .collect();
        for row in rows.iter().filter(|r| r.outside_band) {
            let f = row.cells.expect("flagged rows have cells")[2].mean;
            band_divergences.push(format!(
                "{} / {}: mean F-score {} outside expected band {}-{}",
                mode.name(),
                row.name,
                round2(f),
                band.0,
                band.1
            ));
        }
        modes.push(ModeReport { mode, band, repetitions, rows });
    }
    timings.total_seconds = started.elapsed().as_secs_f64();
    Ok((
        RunReport {
            config: config.clone(),
            dataset: class_summary(records),
            modes,
            jobs_total: jobs.len(),
            jobs_failed,
            band_divergences,
        },
        timings,
    ))
}
