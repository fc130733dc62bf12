//! Tagger heads: nonconstructive MLP classifiers, a per-tag sequential RNN,
//! and the tree-structured TreeRNN and AddrMLP decoders.

mod features;
mod inventory;
mod model;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::category::{
    from_prefix_tokens, Address, Category, Malformed, NodeLabel, DEFAULT_MAX_DEPTH, MAX_ADDRESS_DEPTH,
};
use crate::corpus::{CorpusError, UNKNOWN_SYMBOL};
use crate::encoder::{EncoderConfig, EncoderError};

pub use features::addrmlp_features;
pub use inventory::{LabelInventory, BACKWARD_INDEX, FORWARD_INDEX};
pub use model::{ScoredDecision, Tagger, MODEL_FORMAT, MODEL_VERSION};

pub const MALFORMED_PREFIX: &str = "!MALFORMED!";

#[derive(Debug, Error)]
pub enum DecoderError {
    #[error("category depth {depth} exceeds the maximum {max}")]
    DepthExceeded { depth: usize, max: usize },
    #[error("gold sequence of {len} labels exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("label {0} is not in the inventory")]
    UnknownLabel(String),
    #[error("{0}")]
    InvalidConfig(String),
    #[error("{sentences} sentences but {inputs} encoder inputs")]
    InputMismatch { sentences: usize, inputs: usize },
    #[error("sentence has {tokens} tokens but {golds} gold categories")]
    GoldMismatch { tokens: usize, golds: usize },
    #[error("no embeddings supplied for an external-embedding model")]
    MissingEmbeddings,
    #[error("checkpoint inventory fingerprint {found} does not match {expected}")]
    InventoryMismatch { expected: String, found: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecoderVariant {
    #[serde(rename = "MLP_Thresholded")]
    MlpThresholded,
    #[serde(rename = "MLP_Full")]
    MlpFull,
    SeqRNN,
    TreeRNN,
    AddrMLP,
}

impl DecoderVariant {
    pub const ALL: [DecoderVariant; 5] = [
        Self::MlpThresholded,
        Self::MlpFull,
        Self::SeqRNN,
        Self::TreeRNN,
        Self::AddrMLP,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::MlpThresholded => "MLP_Thresholded",
            Self::MlpFull => "MLP_Full",
            Self::SeqRNN => "SeqRNN",
            Self::TreeRNN => "TreeRNN",
            Self::AddrMLP => "AddrMLP",
        }
    }

    /// Builds categories from node labels rather than picking whole categories.
    pub fn is_constructive(self) -> bool {
        !matches!(self, Self::MlpThresholded | Self::MlpFull)
    }

    /// Tree decoders mask slashes at maximum depth and cannot emit malformed output.
    pub fn is_tree(self) -> bool {
        matches!(self, Self::TreeRNN | Self::AddrMLP)
    }
}

impl fmt::Display for DecoderVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown decoder variant {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub variant: DecoderVariant,
    pub use_attention: bool,
    pub max_depth: usize,
    /// Output length cap for SeqRNN.
    pub max_seq_len: usize,
    /// Category frequency threshold for MLP_Thresholded.
    pub mlp_threshold: usize,
}

impl DecoderConfig {
    pub fn new(variant: DecoderVariant) -> Self {
        Self {
            variant,
            use_attention: false,
            max_depth: DEFAULT_MAX_DEPTH,
            max_seq_len: (1 << (DEFAULT_MAX_DEPTH + 1)) - 1,
            mlp_threshold: 10,
        }
    }

    /// Threshold used to build the category vocabulary.
    pub fn vocab_threshold(&self) -> usize {
        match self.variant {
            DecoderVariant::MlpThresholded => self.mlp_threshold,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), DecoderError> {
        let bad = |m: String| Err(DecoderError::InvalidConfig(m));
        let d = &self.decoder;
        if d.max_depth == 0 || d.max_depth > MAX_ADDRESS_DEPTH {
            return bad(format!("max_depth must be in 1..={MAX_ADDRESS_DEPTH}, got {}", d.max_depth));
        }
        if d.max_seq_len == 0 {
            return bad("max_seq_len must be at least 1".into());
        }
        if d.variant == DecoderVariant::MlpThresholded && d.mlp_threshold < 2 {
            return bad(format!("mlp_threshold must be at least 2, got {}", d.mlp_threshold));
        }
        if self.encoder.hidden_dim == 0 || self.encoder.embed_dim == 0 {
            return bad("embed_dim and hidden_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }
}

/// One token's decoded output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prediction {
    Category(Category),
    /// Only SeqRNN can produce this, when it reaches its length cap.
    Malformed(Malformed),
    /// The thresholded classifier's stand-in class.
    Unknown,
}

impl Prediction {
    pub fn category(&self) -> Option<&Category> {
        match self {
            Self::Category(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_malformed(&self) -> bool {
        matches!(self, Self::Malformed(_))
    }

    /// Text for the category slot of an output corpus line. Malformed output
    /// keeps its raw tokens, each wrapped in parentheses.
    pub fn to_field(&self) -> String {
        match self {
            Self::Category(c) => c.to_infix(),
            Self::Unknown => UNKNOWN_SYMBOL.to_string(),
            Self::Malformed(m) => {
                let mut s = MALFORMED_PREFIX.to_string();
                for t in &m.tokens {
                    s.push('(');
                    s.push_str(&t.to_string());
                    s.push(')');
                }
                s
            }
        }
    }

    pub fn parse_field(field: &str) -> Result<Self, String> {
        if field == UNKNOWN_SYMBOL {
            return Ok(Self::Unknown);
        }
        let Some(rest) = field.strip_prefix(MALFORMED_PREFIX) else {
            return crate::category::parse_infix_with_max_depth(field, usize::MAX)
                .map(Self::Category)
                .map_err(|e| e.to_string());
        };
        let mut tokens = Vec::new();
        let mut rest = rest;
        while !rest.is_empty() {
            let close = rest
                .strip_prefix('(')
                .and_then(|r| r.find(')').map(|i| (&r[..i], &r[i + 1..])))
                .ok_or_else(|| format!("bad malformed-token list {field:?}"))?;
            tokens.push(NodeLabel::parse(close.0).map_err(|e| e.to_string())?);
            rest = close.1;
        }
        match from_prefix_tokens(&tokens) {
            Err(m) => Ok(Self::Malformed(m)),
            Ok(_) => Err(format!("{field:?} is marked malformed but is a category")),
        }
    }
}

/// Greedy choice; ties go to the lowest index.
pub(crate) fn argmax(row: &[f64], banned: Option<&[bool]>) -> usize {
    let mut best: Option<usize> = None;
    for (j, &v) in row.iter().enumerate() {
        if banned.is_some_and(|b| b[j]) {
            continue;
        }
        if best.is_none_or(|b| v > row[b]) {
            best = Some(j);
        }
    }
    best.expect("at least one label is allowed")
}

/// Node addresses in pre-order, the order SeqRNN emits labels.
pub(crate) fn prefix_addresses(cat: &Category) -> Vec<Address> {
    fn walk(cat: &Category, at: Address, out: &mut Vec<Address>) {
        out.push(at);
        if let Category::Functor { result, argument, .. } = cat {
            walk(result, at.result_child(), out);
            walk(argument, at.argument_child(), out);
        }
    }
    let mut out = Vec::with_capacity(cat.size());
    walk(cat, Address::ROOT, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::{parse_infix, to_prefix_tokens};

    #[test]
    fn argmax_ties_and_masks() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0], None), 1);
        assert_eq!(argmax(&[5.0, 5.0, 1.0], Some(&[true, true, false])), 2);
        assert_eq!(argmax(&[0.0; 4], None), 0);
    }

    #[test]
    fn variant_names() {
        for v in DecoderVariant::ALL {
            assert_eq!(v.name().parse::<DecoderVariant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
        assert!("TreeRnn".parse::<DecoderVariant>().is_err());
    }

    #[test]
    fn prefix_addresses_follow_preorder() {
        let cat = parse_infix("(S\\NP)/NP").unwrap();
        let codes: Vec<u64> = prefix_addresses(&cat).into_iter().map(Address::code).collect();
        assert_eq!(codes, [1, 2, 4, 5, 3]);
        let labels: Vec<NodeLabel> = prefix_addresses(&cat).into_iter().map(|a| cat.node_at(a).unwrap()).collect();
        assert_eq!(labels, to_prefix_tokens(&cat));
    }

    #[test]
    fn prediction_fields_round_trip() {
        let cat = Prediction::Category(parse_infix("(S[b]\\NP)/NP").unwrap());
        let tokens: Vec<NodeLabel> = ["/", "/", "\\", "S[b]", "NP", "\\", "NP"]
            .iter()
            .map(|t| NodeLabel::parse(t).unwrap())
            .collect();
        let malformed = Prediction::Malformed(from_prefix_tokens(&tokens).unwrap_err());
        assert_eq!(malformed.to_field(), "!MALFORMED!(/)(/)(\\)(S[b])(NP)(\\)(NP)");
        for p in [cat, malformed, Prediction::Unknown] {
            assert_eq!(Prediction::parse_field(&p.to_field()).unwrap(), p);
        }
        assert!(Prediction::parse_field("!MALFORMED!(NP)").is_err());
        assert!(Prediction::parse_field("!MALFORMED!(NP").is_err());
        assert!(Prediction::parse_field("(S").is_err());
    }

    #[test]
    fn config_validation() {
        let enc = EncoderConfig {
            mode: crate::encoder::EncoderMode::TrainableBiRecurrent,
            embed_dim: 4,
            hidden_dim: 4,
        };
        let mut cfg = ModelConfig {
            encoder: enc,
            decoder: DecoderConfig::new(DecoderVariant::AddrMLP),
            dropout: 0.2,
        };
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.decoder.max_seq_len, 127);
        cfg.decoder.max_depth = 0;
        assert!(cfg.validate().is_err());
        cfg.decoder.max_depth = 6;
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
    }
}
