use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab_embed::EmbeddingMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "BiLSTM")]
    BiLstm,
    #[serde(rename = "GRU")]
    Gru,
    #[serde(rename = "BiGRU")]
    BiGru,
    #[serde(rename = "CNN")]
    Cnn,
}

impl ModelKind {
    /// Canonical report order.
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Lstm,
        ModelKind::BiLstm,
        ModelKind::Gru,
        ModelKind::BiGru,
        ModelKind::Cnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "LSTM",
            ModelKind::BiLstm => "BiLSTM",
            ModelKind::Gru => "GRU",
            ModelKind::BiGru => "BiGRU",
            ModelKind::Cnn => "CNN",
        }
    }

    pub fn is_bidirectional(self) -> bool {
        matches!(self, ModelKind::BiLstm | ModelKind::BiGru)
    }

    pub fn cell(self) -> Option<CellKind> {
        match self {
            ModelKind::Lstm | ModelKind::BiLstm => Some(CellKind::Lstm),
            ModelKind::Gru | ModelKind::BiGru => Some(CellKind::Gru),
            ModelKind::Cnn => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown model {s:?} (expected one of LSTM, BiLSTM, GRU, BiGRU, CNN)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    /// Number of stacked gate blocks in the input projection.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub embedding_mode: EmbeddingMode,
    pub embed_dim: usize,
    pub hidden: usize,
    pub conv_filters: usize,
    pub conv_width: usize,
    pub max_len: usize,
}

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_FILTERS: usize = 128;
pub const DEFAULT_CONV_WIDTH: usize = 5;
pub const DEFAULT_EMBED_DIM: usize = 100;

impl ModelSpec {
    pub fn new(kind: ModelKind, embedding_mode: EmbeddingMode, embed_dim: usize, max_len: usize) -> Self {
        ModelSpec {
            kind,
            embedding_mode,
            embed_dim,
            hidden: DEFAULT_HIDDEN,
            conv_filters: DEFAULT_FILTERS,
            conv_width: DEFAULT_CONV_WIDTH,
            max_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("{}: {m}", self.kind)));
        if self.embed_dim == 0 {
            return bad("embed_dim must be at least 1");
        }
        if self.max_len == 0 {
            return bad("max_len must be at least 1");
        }
        match self.kind {
            ModelKind::Cnn => {
                if self.conv_filters == 0 || self.conv_width == 0 {
                    return bad("conv_filters and conv_width must be at least 1");
                }
                if self.conv_width > self.max_len {
                    return bad("conv_width exceeds max_len");
                }
            }
            _ => {
                if self.hidden == 0 {
                    return bad("hidden must be at least 1");
                }
            }
        }
        Ok(())
    }

    /// Width of the vector fed to the output layer.
    pub fn feature_width(&self) -> usize {
        match self.kind {
            ModelKind::Lstm | ModelKind::Gru => self.hidden,
            ModelKind::BiLstm | ModelKind::BiGru => 2 * self.hidden,
            ModelKind::Cnn => self.conv_filters,
        }
    }

    /// Names and shapes of every weight besides the embedding, in storage order.
    pub fn shape_table(&self) -> Vec<(String, [usize; 2])> {
        let (d, h) = (self.embed_dim, self.hidden);
        let mut out = Vec::new();
        match self.kind.cell() {
            Some(cell) => {
                let g = cell.gates();
                let dirs: &[&str] = if self.kind.is_bidirectional() {
                    &["fw", "bw"]
                } else {
                    &["fw"]
                };
                for dir in dirs {
                    let p = format!("{}_{dir}", cell.prefix());
                    out.push((format!("{p}.w_x"), [d, g * h]));
                    out.push((format!("{p}.w_h"), [h, g * h]));
                    out.push((format!("{p}.b"), [1, g * h]));
                }
            }
            None => {
                out.push(("conv.w".to_string(), [self.conv_width * d, self.conv_filters]));
                out.push(("conv.b".to_string(), [1, self.conv_filters]));
            }
        }
        out.push(("dense.w".to_string(), [self.feature_width(), 1]));
        out.push(("dense.b".to_string(), [1, 1]));
        out
    }

    /// Closed-form parameter count, embedding included.
    pub fn parameter_count(&self, vocab_size: usize) -> usize {
        let (d, h) = (self.embed_dim, self.hidden);
        let body = match self.kind {
            ModelKind::Lstm => 4 * h * (d + h + 1),
            ModelKind::BiLstm => 2 * 4 * h * (d + h + 1),
            ModelKind::Gru => 3 * h * (d + h + 1),
            ModelKind::BiGru => 2 * 3 * h * (d + h + 1),
            ModelKind::Cnn => self.conv_filters * (self.conv_width * d + 1),
        };
        vocab_size * d + body + self.feature_width() + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_shape_table() {
        for kind in ModelKind::ALL {
            let spec = ModelSpec::new(kind, EmbeddingMode::CorpusTrained, 7, 12);
            let enumerated: usize = spec.shape_table().iter().map(|(_, s)| s[0] * s[1]).sum();
            assert_eq!(enumerated + 50 * 7, spec.parameter_count(50), "{kind}");
        }
    }

    #[test]
    fn bidirectional_blocks_are_disjoint() {
        let spec = ModelSpec::new(ModelKind::BiGru, EmbeddingMode::CorpusTrained, 4, 6);
        let names: Vec<_> = spec.shape_table().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"gru_fw.w_x".to_string()));
        assert!(names.contains(&"gru_bw.w_x".to_string()));
        let unique: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
    }

    #[test]
    fn kind_names_parse() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().to_lowercase().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("rnn".parse::<ModelKind>().is_err());
    }

    #[test]
    fn validation() {
        let mut spec = ModelSpec::new(ModelKind::Cnn, EmbeddingMode::CorpusTrained, 4, 3);
        assert!(spec.validate().is_err());
        spec.max_len = 5;
        assert!(spec.validate().is_ok());
    }
}
