//! Labeled requirement records: CSV loading, class counts and the
//! stratified train/test split.

use std::fmt;
use std::io::Read;
use std::ops::Add;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Requirement class. `Fr` is the positive class (label 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "FR")]
    Fr,
    #[serde(rename = "NFR")]
    Nfr,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Fr, Label::Nfr];

    /// 1.0 for FR, 0.0 for NFR.
    pub fn target(self) -> f64 {
        match self {
            Label::Fr => 1.0,
            Label::Nfr => 0.0,
        }
    }

    pub fn from_probability(p: f64) -> Label {
        if p >= 0.5 {
            Label::Fr
        } else {
            Label::Nfr
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Fr => Label::Nfr,
            Label::Nfr => Label::Fr,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Fr => "FR",
            Label::Nfr => "NFR",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FR" => Ok(Label::Fr),
            "NFR" => Ok(Label::Nfr),
            other => Err(format!("unknown label {other:?} (expected FR or NFR)")),
        }
    }
}

/// One requirement text and its class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementRecord {
    pub text: String,
    pub label: Label,
}

impl RequirementRecord {
    pub fn new(text: impl Into<String>, label: Label) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidArgument("requirement text is empty".into()));
        }
        Ok(RequirementRecord { text, label })
    }
}

/// Reads a `text,label` CSV file. Records come back in file order.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<RequirementRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

/// Same as [`load_csv`] but over any reader.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<RequirementRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}').eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Schema(format!("missing column {name:?} in header {headers:?}")))
    };
    let text_col = column("text")?;
    let label_col = column("label")?;

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| match e.position() {
            Some(pos) => Error::Row {
                line: pos.line(),
                message: e.to_string(),
            },
            None => Error::Schema(e.to_string()),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let text = row.get(text_col).unwrap_or_default();
        if text.trim().is_empty() {
            return Err(Error::Row {
                line,
                message: "empty requirement text".into(),
            });
        }
        let label = row
            .get(label_col)
            .unwrap_or_default()
            .parse::<Label>()
            .map_err(|message| Error::Row { line, message })?;
        out.push(RequirementRecord {
            text: text.to_string(),
            label,
        });
    }
    Ok(out)
}

/// Writes records as a `text,label` CSV.
pub fn write_csv(path: impl AsRef<Path>, records: &[RequirementRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Schema(e.to_string()))?;
    let to_err = |e: csv::Error| Error::Schema(e.to_string());
    w.write_record(["text", "label"]).map_err(to_err)?;
    for r in records {
        w.write_record([r.text.as_str(), &r.label.to_string()])
            .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub total: usize,
    #[serde(rename = "FR")]
    pub fr: usize,
    #[serde(rename = "NFR")]
    pub nfr: usize,
}

impl ClassSummary {
    pub fn count(&self, label: Label) -> usize {
        match label {
            Label::Fr => self.fr,
            Label::Nfr => self.nfr,
        }
    }
}

impl Add for ClassSummary {
    type Output = ClassSummary;

    fn add(self, rhs: ClassSummary) -> ClassSummary {
        ClassSummary {
            total: self.total + rhs.total,
            fr: self.fr + rhs.fr,
            nfr: self.nfr + rhs.nfr,
        }
    }
}

pub fn class_summary(records: &[RequirementRecord]) -> ClassSummary {
    let fr = records.iter().filter(|r| r.label == Label::Fr).count();
    ClassSummary {
        total: records.len(),
        fr,
        nfr: records.len() - fr,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<RequirementRecord>,
    pub test: Vec<RequirementRecord>,
    /// Fraction of `train` held out for validation while fitting.
    pub validation_fraction: f64,
}

/// Number of records of a class of size `n` that go to the test side.
pub fn test_count(n: usize, test_fraction: f64) -> usize {
    ((test_fraction * n as f64) + 0.5).floor() as usize
}

/// Per-class seeded split. Each class contributes `round(test_fraction * n_c)`
/// records (half rounds up) to the test side; both sides keep file order.
pub fn stratified_split(
    records: &[RequirementRecord],
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    let (train, test) = stratified_split_indices(records, test_fraction, seed)?;
    Ok(DatasetSplit {
        train: train.iter().map(|&i| records[i].clone()).collect(),
        test: test.iter().map(|&i| records[i].clone()).collect(),
        validation_fraction: 0.2,
    })
}

/// [`stratified_split`] as ascending (train, test) index lists.
pub fn stratified_split_indices(
    records: &[RequirementRecord],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; records.len()];
    for label in Label::ALL {
        let mut idx: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(Error::DegenerateClass(label.to_string()));
        }
        idx.shuffle(&mut rng);
        for &i in &idx[..test_count(idx.len(), test_fraction)] {
            in_test[i] = true;
        }
    }
    Ok((0..records.len()).partition(|&i| !in_test[i]))
}

/// Words that only ever appear in FR records of [`keyword_corpus`].
pub const FR_KEYWORDS: [&str; 8] = [
    "display", "record", "print", "export", "upload", "search", "delete", "calculate",
];
/// Words that only ever appear in NFR records of [`keyword_corpus`].
pub const NFR_KEYWORDS: [&str; 8] = [
    "secure", "fast", "reliable", "scalable", "usable", "portable", "robust", "available",
];
/// Shared filler vocabulary.
pub const FILLER_WORDS: [&str; 16] = [
    "system", "user", "data", "report", "module", "screen", "account", "file", "server",
    "interface", "manager", "customer", "order", "product", "network", "database",
];

/// Shape of a synthetic two-class corpus that is linearly separable on
/// keyword presence: FR records draw keywords from [`FR_KEYWORDS`], NFR
/// records from [`NFR_KEYWORDS`], and both share [`FILLER_WORDS`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeywordCorpus {
    pub records: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Chance that a word is a class keyword rather than filler.
    pub keyword_rate: f64,
    /// How many words of each keyword list are in use.
    pub keywords: usize,
    pub fr_share: f64,
}

impl KeywordCorpus {
    /// Equal-length records built from two keywords per class. Padding and
    /// filler both slow down the bidirectional models under the short
    /// default training schedule.
    pub fn new(records: usize) -> Self {
        KeywordCorpus {
            records,
            min_words: 12,
            max_words: 12,
            keyword_rate: 1.0,
            keywords: 2,
            fr_share: 0.56,
        }
    }

    /// Every record holds at least one keyword of its class.
    pub fn generate(&self, seed: u64) -> Vec<RequirementRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.records)
            .map(|_| {
                let label = if rng.gen_bool(self.fr_share) { Label::Fr } else { Label::Nfr };
                let pool: &[&str] = match label {
                    Label::Fr => &FR_KEYWORDS,
                    Label::Nfr => &NFR_KEYWORDS,
                };
                let keys = &pool[..self.keywords.clamp(1, pool.len())];
                let len = rng.gen_range(self.min_words.max(1)..=self.max_words.max(self.min_words.max(1)));
                let mut words: Vec<&str> = (0..len)
                    .map(|_| {
                        if rng.gen_bool(self.keyword_rate) {
                            *keys.choose(&mut rng).expect("non-empty")
                        } else {
                            *FILLER_WORDS.choose(&mut rng).expect("non-empty")
                        }
                    })
                    .collect();
                if !words.iter().any(|w| keys.contains(w)) {
                    words[0] = keys.choose(&mut rng).expect("non-empty");
                }
                RequirementRecord {
                    text: format!("The {}.", words.join(" ")),
                    label,
                }
            })
            .collect()
    }
}

/// [`KeywordCorpus::new`] with default shape.
pub fn keyword_corpus(n: usize, seed: u64) -> Vec<RequirementRecord> {
    KeywordCorpus::new(n).generate(seed)
}
