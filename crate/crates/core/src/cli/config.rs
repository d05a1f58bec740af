//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{DEFAULT_CONV_WIDTH, DEFAULT_EMBED_DIM, DEFAULT_FILTERS, DEFAULT_HIDDEN};
use crate::training::TrainingConfig;
use crate::vocab_embed::EmbeddingMode;

/// How repetitions differ from each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Every repetition draws a fresh split and fresh initial weights.
    Resplit,
    /// One split (from the master seed) shared by all repetitions; only
    /// initial weights and batch order change.
    Fixed,
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "resplit" => Ok(SplitMode::Resplit),
            "fixed" => Ok(SplitMode::Fixed),
            _ => Err(Error::Config(format!("split_mode must be resplit or fixed, got {s:?}"))),
        }
    }
}

/// Which trained models are written to disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointPolicy {
    None,
    /// The five models of the final repetition, per mode.
    Last,
    All,
}

impl FromStr for CheckpointPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(CheckpointPolicy::None),
            "last" => Ok(CheckpointPolicy::Last),
            "all" => Ok(CheckpointPolicy::All),
            _ => Err(Error::Config(format!("checkpoints must be none, last or all, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub modes: Vec<EmbeddingMode>,
    pub glove_path: Option<PathBuf>,
    pub reps: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub training: TrainingConfig,
    pub hidden: usize,
    pub filters: usize,
    pub conv_width: usize,
    /// Width of corpus-trained embeddings. Pretrained width comes from the file.
    pub embed_dim: usize,
    /// Fixed sequence length; `None` derives it from the training split.
    pub max_len: Option<usize>,
    pub split_mode: SplitMode,
    pub stopwords: Option<PathBuf>,
    pub checkpoints: CheckpointPolicy,
    #[serde(skip)]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(skip)]
    pub workers: usize,
}

pub const DEFAULT_SEED: u64 = 2024;

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: None,
            modes: vec![EmbeddingMode::CorpusTrained],
            glove_path: None,
            reps: 10,
            seed: DEFAULT_SEED,
            test_fraction: 0.2,
            training: TrainingConfig::default(),
            hidden: DEFAULT_HIDDEN,
            filters: DEFAULT_FILTERS,
            conv_width: DEFAULT_CONV_WIDTH,
            embed_dim: DEFAULT_EMBED_DIM,
            max_len: None,
            split_mode: SplitMode::Resplit,
            stopwords: None,
            checkpoints: CheckpointPolicy::Last,
            out: PathBuf::from("out"),
            workers: 0,
        }
    }
}

pub const KEYS: [&str; 20] = [
    "data",
    "mode",
    "glove_path",
    "reps",
    "seed",
    "batch_size",
    "epochs",
    "validation_split",
    "hidden",
    "filters",
    "out",
    "test_fraction",
    "embed_dim",
    "conv_width",
    "max_len",
    "split_mode",
    "stopwords",
    "checkpoints",
    "workers",
    "lr",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_modes(value: &str) -> Result<Vec<EmbeddingMode>> {
    match value.trim().to_ascii_lowercase().as_str() {
        "both" | "all" => Ok(vec![EmbeddingMode::CorpusTrained, EmbeddingMode::PretrainedStatic]),
        _ => {
            let mut modes = Vec::new();
            for part in value.split(',') {
                let mode: EmbeddingMode = part
                    .parse()
                    .map_err(|e| Error::Config(format!("mode: {e}")))?;
                if !modes.contains(&mode) {
                    modes.push(mode);
                }
            }
            Ok(modes)
        }
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "data" => self.data = Some(PathBuf::from(value)),
            "mode" => self.modes = parse_modes(value)?,
            "glove_path" => self.glove_path = Some(PathBuf::from(value)),
            "reps" => self.reps = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "batch_size" => self.training.batch_size = parse_num(key, value)?,
            "epochs" => self.training.epochs = parse_num(key, value)?,
            "validation_split" => self.training.validation_split = parse_num(key, value)?,
            "lr" => self.training.adam.lr = parse_num(key, value)?,
            "hidden" => self.hidden = parse_num(key, value)?,
            "filters" => self.filters = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "test_fraction" => self.test_fraction = parse_num(key, value)?,
            "embed_dim" => self.embed_dim = parse_num(key, value)?,
            "conv_width" => self.conv_width = parse_num(key, value)?,
            "max_len" => {
                self.max_len = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "split_mode" => self.split_mode = value.parse()?,
            "stopwords" => self.stopwords = Some(PathBuf::from(value)),
            "checkpoints" => self.checkpoints = value.parse()?,
            "workers" => self.workers = parse_num(key, value)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown key {other:?} (known keys: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Reads `key = value` lines. `#` starts a comment; blank lines are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.modes.is_empty() {
            return bad("at least one embedding mode is required".into());
        }
        if self.modes.contains(&EmbeddingMode::PretrainedStatic) && self.glove_path.is_none() {
            return bad("pretrained mode requires glove_path".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if !(0.0..1.0).contains(&self.training.validation_split) {
            return bad(format!(
                "validation_split must lie in [0, 1), got {}",
                self.training.validation_split
            ));
        }
        if self.training.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.training.adam.lr > 0.0 && self.training.adam.lr.is_finite()) {
            return bad("lr must be positive and finite".into());
        }
        for (name, v) in [
            ("hidden", self.hidden),
            ("filters", self.filters),
            ("conv_width", self.conv_width),
            ("embed_dim", self.embed_dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if let Some(t) = self.max_len {
            if t < self.conv_width {
                return bad(format!("max_len {t} is shorter than conv_width {}", self.conv_width));
            }
        }
        Ok(())
    }
}

/// Defaults, then the file (if any), then `overrides` in order.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        config.apply_text(&text)?;
    }
    for (k, v) in overrides {
        config.set(k, v)?;
    }
    config.validate()?;
    Ok(config)
}

/// Splits a `key=value` flag argument.
pub fn parse_assignment(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn kv(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn defaults() {
        let c = parse_config(None, &[]).unwrap();
        assert_eq!(c.training.batch_size, 64);
        assert_eq!(c.training.epochs, 3);
        assert_eq!(c.training.validation_split, 0.2);
        assert_eq!(c.reps, 10);
        assert_eq!(c.test_fraction, 0.2);
        assert_eq!(c.training.adam.lr, 0.001);
    }

    #[test]
    fn flags_override_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# experiment\nepochs = 5  # more\n\nhidden=32\nmode = corpus").unwrap();
        let c = parse_config(Some(f.path()), &[kv("epochs", "7")]).unwrap();
        assert_eq!(c.training.epochs, 7);
        assert_eq!(c.hidden, 32);
        let c = parse_config(Some(f.path()), &[]).unwrap();
        assert_eq!(c.training.epochs, 5);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_config(None, &[kv("mode", "pretrained")]), Err(Error::Config(_))));
        assert!(matches!(parse_config(None, &[kv("mode", "both")]), Err(Error::Config(_))));
        assert!(parse_config(None, &[kv("mode", "both"), kv("glove_path", "g.txt")]).is_ok());
        assert!(matches!(parse_config(None, &[kv("colour", "blue")]), Err(Error::Config(_))));
        assert!(parse_config(None, &[kv("reps", "zero")]).is_err());
        assert!(parse_config(None, &[kv("reps", "0")]).is_err());
        assert!(parse_config(None, &[kv("lr", "inf")]).is_err());
        let mut c = ExperimentConfig::default();
        assert!(c.apply_text("epochs 3").is_err());
        assert!(c.apply_text("split_mode = sometimes").is_err());
    }

    #[test]
    fn modes_and_assignments() {
        let c = parse_config(None, &[kv("mode", "pretrained,corpus"), kv("glove_path", "x")]).unwrap();
        assert_eq!(c.modes, vec![EmbeddingMode::PretrainedStatic, EmbeddingMode::CorpusTrained]);
        assert_eq!(parse_assignment("a = b").unwrap(), kv("a", "b"));
        assert!(parse_assignment("ab").is_err());
    }
}
