//! Token-level evaluation: binned accuracies, depth confusions and the
//! structural error taxonomy.

mod predictions;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::category::{diff, Category, Relation};
use crate::corpus::{frequency_bin, CategoryVocab, Corpus, FrequencyBin};
use crate::decoders::Prediction;

pub use predictions::{align_predictions, format_predictions, load_predictions, parse_predictions, PredictedSentence};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("alignment: {0}")]
    Alignment(String),
    #[error("reports were computed on different corpora")]
    CorpusMismatch,
    #[error("predictions line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Gold depth bins. Depths beyond 6 land in the overflow bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DepthBin {
    D0,
    D1to2,
    D3to6,
    Over6,
}

impl DepthBin {
    pub const ALL: [DepthBin; 4] = [Self::D0, Self::D1to2, Self::D3to6, Self::Over6];

    pub fn of_depth(depth: usize) -> Self {
        match depth {
            0 => Self::D0,
            1..=2 => Self::D1to2,
            3..=6 => Self::D3to6,
            _ => Self::Over6,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::D0 => "0",
            Self::D1to2 => "1-2",
            Self::D3to6 => "3-6",
            Self::Over6 => ">6",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinScore {
    pub bin: String,
    pub tokens: usize,
    pub types: usize,
    pub correct: usize,
    /// `null` when the bin is empty or no prediction could ever be correct in it.
    pub accuracy: Option<f64>,
}

/// Rows are gold depths, columns predicted depths, each 0..=6 plus `>6`.
/// Two extra columns count malformed and unknown predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthConfusion {
    pub counts: Vec<Vec<usize>>,
}

pub const CONFUSION_DEPTHS: usize = 8;
pub const MALFORMED_COLUMN: usize = CONFUSION_DEPTHS;
pub const UNKNOWN_COLUMN: usize = CONFUSION_DEPTHS + 1;

fn depth_slot(depth: usize) -> usize {
    depth.min(CONFUSION_DEPTHS - 1)
}

pub fn depth_label(slot: usize) -> String {
    match slot {
        s if s < CONFUSION_DEPTHS - 1 => s.to_string(),
        MALFORMED_COLUMN => "malformed".into(),
        UNKNOWN_COLUMN => "unknown".into(),
        _ => ">6".into(),
    }
}

impl DepthConfusion {
    pub fn new() -> Self {
        Self {
            counts: vec![vec![0; CONFUSION_DEPTHS + 2]; CONFUSION_DEPTHS],
        }
    }

    pub fn record(&mut self, gold: &Category, pred: &Prediction) {
        let column = match pred {
            Prediction::Category(c) => depth_slot(c.depth()),
            Prediction::Malformed(_) => MALFORMED_COLUMN,
            Prediction::Unknown => UNKNOWN_COLUMN,
        };
        self.counts[depth_slot(gold.depth())][column] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> usize {
        (0..CONFUSION_DEPTHS).map(|d| self.counts[d][d]).sum()
    }

    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["gold\\pred".to_string()];
        header.extend((0..CONFUSION_DEPTHS + 2).map(depth_label));
        w.write_record(&header)?;
        for (d, row) in self.counts.iter().enumerate() {
            let mut record = vec![depth_label(d)];
            record.extend(row.iter().map(ToString::to_string));
            w.write_record(&record)?;
        }
        let bytes = w.into_inner().map_err(|e| EvalError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

impl Default for DepthConfusion {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub correct: usize,
    pub same_structure: usize,
    /// Includes unknown-class predictions.
    pub well_formed_other: usize,
    pub malformed: usize,
}

impl Taxonomy {
    pub fn total(&self) -> usize {
        self.correct + self.same_structure + self.well_formed_other + self.malformed
    }
}

/// Same-structure errors by what differs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineGrained {
    pub single_attribute: usize,
    pub single_atom: usize,
    pub single_slash: usize,
    pub multiple: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Invented {
    /// Predictions whose category never occurs in training.
    pub predicted_unseen: usize,
    pub correct_unseen: usize,
    pub novel_precision: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnknownStats {
    pub predicted: usize,
    /// Unknown predictions whose gold category is below the vocabulary threshold.
    pub gold_sub_threshold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tokens: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
    pub frequency_bins: Vec<BinScore>,
    pub depth_bins: Vec<BinScore>,
    pub confusion: DepthConfusion,
    pub taxonomy: Taxonomy,
    pub fine_grained: FineGrained,
    pub invented: Invented,
    pub unknown: UnknownStats,
    /// sha256 over the gold tokens, used to check two reports are comparable.
    pub gold_fingerprint: String,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

fn check_alignment(pred: &[Vec<Prediction>], gold: &Corpus) -> Result<(), EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::Alignment(format!(
            "{} predicted sentences, {} gold sentences",
            pred.len(),
            gold.len()
        )));
    }
    for (i, (p, s)) in pred.iter().zip(&gold.sentences).enumerate() {
        if p.len() != s.len() {
            return Err(EvalError::Alignment(format!(
                "sentence {i}: {} predicted tokens, {} gold tokens",
                p.len(),
                s.len()
            )));
        }
    }
    Ok(())
}

pub fn gold_fingerprint(gold: &Corpus) -> String {
    let mut h = Sha256::new();
    for s in &gold.sentences {
        h.update(s.to_line().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Highest training frequency a bin can contain.
fn bin_ceiling(bin: FrequencyBin) -> usize {
    match bin {
        FrequencyBin::GE100 => usize::MAX,
        FrequencyBin::F10to99 => 99,
        FrequencyBin::F1to9 => 9,
        FrequencyBin::OOV => 0,
    }
}

/// Scores `pred` against `gold`. Bins use training frequencies from `vocab`;
/// when the vocabulary is thresholded, bins lying wholly below the threshold
/// report a `null` accuracy.
pub fn evaluate(pred: &[Vec<Prediction>], gold: &Corpus, vocab: &CategoryVocab) -> Result<EvalReport, EvalError> {
    check_alignment(pred, gold)?;
    #[derive(Default)]
    struct Tally<'a> {
        tokens: usize,
        correct: usize,
        types: HashSet<&'a Category>,
    }
    let mut freq_tally: Vec<Tally> = FrequencyBin::ALL.iter().map(|_| Tally::default()).collect();
    let mut depth_tally: Vec<Tally> = DepthBin::ALL.iter().map(|_| Tally::default()).collect();
    let mut confusion = DepthConfusion::new();
    let mut taxonomy = Taxonomy::default();
    let mut fine = FineGrained::default();
    let mut invented = Invented::default();
    let mut unknown = UnknownStats::default();

    for (p, token) in pred.iter().flatten().zip(gold.tokens()) {
        let g = &token.gold;
        let correct = p.category() == Some(g);
        let fb = FrequencyBin::ALL.iter().position(|b| *b == frequency_bin(g, vocab)).unwrap();
        let db = DepthBin::ALL.iter().position(|b| *b == DepthBin::of_depth(g.depth())).unwrap();
        for t in [&mut freq_tally[fb], &mut depth_tally[db]] {
            t.tokens += 1;
            t.correct += usize::from(correct);
            t.types.insert(g);
        }
        confusion.record(g, p);
        match p {
            Prediction::Category(c) => {
                if vocab.frequency(c) == 0 {
                    invented.predicted_unseen += 1;
                    invented.correct_unseen += usize::from(correct);
                }
                let d = diff(g, c);
                match d.relation {
                    Relation::Identical => taxonomy.correct += 1,
                    Relation::SameStructure => {
                        taxonomy.same_structure += 1;
                        match (d.atom_errors, d.attribute_errors, d.slash_errors) {
                            (0, 1, 0) => fine.single_attribute += 1,
                            (1, 0, 0) => fine.single_atom += 1,
                            (0, 0, 1) => fine.single_slash += 1,
                            _ => fine.multiple += 1,
                        }
                    }
                    Relation::WellFormedDifferentStructure => taxonomy.well_formed_other += 1,
                }
            }
            Prediction::Malformed(_) => taxonomy.malformed += 1,
            Prediction::Unknown => {
                taxonomy.well_formed_other += 1;
                unknown.predicted += 1;
                unknown.gold_sub_threshold += usize::from(vocab.frequency(g) < vocab.threshold());
            }
        }
    }
    invented.novel_precision = ratio(invented.correct_unseen, invented.predicted_unseen);

    let score = |label: &str, t: &Tally, reachable: bool| BinScore {
        bin: label.to_string(),
        tokens: t.tokens,
        types: t.types.len(),
        correct: t.correct,
        accuracy: if reachable { ratio(t.correct, t.tokens) } else { None },
    };
    let frequency_bins = FrequencyBin::ALL
        .iter()
        .zip(&freq_tally)
        .map(|(b, t)| score(b.label(), t, !vocab.has_unknown() || bin_ceiling(*b) >= vocab.threshold()))
        .collect();
    let depth_bins = DepthBin::ALL
        .iter()
        .zip(&depth_tally)
        .map(|(b, t)| score(b.label(), t, true))
        .collect();
    let tokens = gold.token_count();
    Ok(EvalReport {
        tokens,
        correct: taxonomy.correct,
        accuracy: ratio(taxonomy.correct, tokens),
        frequency_bins,
        depth_bins,
        confusion,
        taxonomy,
        fine_grained: fine,
        invented,
        unknown,
        gold_fingerprint: gold_fingerprint(gold),
    })
}

/// Exact-match token accuracy; 0 for an empty corpus.
pub fn token_accuracy(pred: &[Vec<Prediction>], gold: &Corpus) -> Result<f64, EvalError> {
    check_alignment(pred, gold)?;
    let correct = pred
        .iter()
        .flatten()
        .zip(gold.tokens())
        .filter(|(p, t)| p.category() == Some(&t.gold))
        .count();
    Ok(ratio(correct, gold.token_count()).unwrap_or(0.0))
}

pub fn depth_confusion(pred: &[Vec<Prediction>], gold: &Corpus) -> Result<DepthConfusion, EvalError> {
    check_alignment(pred, gold)?;
    let mut m = DepthConfusion::new();
    for (p, t) in pred.iter().flatten().zip(gold.tokens()) {
        m.record(&t.gold, p);
    }
    Ok(m)
}

/// Signed differences `a − b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDiff {
    pub accuracy: Option<f64>,
    pub frequency_bins: Vec<(String, Option<f64>)>,
    pub depth_bins: Vec<(String, Option<f64>)>,
    pub confusion: Vec<Vec<i64>>,
}

pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<ReportDiff, EvalError> {
    if a.gold_fingerprint != b.gold_fingerprint {
        return Err(EvalError::CorpusMismatch);
    }
    let sub = |x: Option<f64>, y: Option<f64>| x.zip(y).map(|(x, y)| x - y);
    let bins = |xs: &[BinScore], ys: &[BinScore]| {
        xs.iter()
            .zip(ys)
            .map(|(x, y)| (x.bin.clone(), sub(x.accuracy, y.accuracy)))
            .collect()
    };
    Ok(ReportDiff {
        accuracy: sub(a.accuracy, b.accuracy),
        frequency_bins: bins(&a.frequency_bins, &b.frequency_bins),
        depth_bins: bins(&a.depth_bins, &b.depth_bins),
        confusion: a
            .confusion
            .counts
            .iter()
            .zip(&b.confusion.counts)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| *p as i64 - *q as i64).collect())
            .collect(),
    })
}
