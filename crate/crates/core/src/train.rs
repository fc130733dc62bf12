//! Teacher-forced training with word-normalized loss, early stopping on dev
//! accuracy, and aggregation over restarts.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use accurate::sum::i_fast_sum_in_place;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::autodiff::{AdamWConfig, Gradients, Mode};
use crate::corpus::Corpus;
use crate::decoders::{DecoderError, ModelConfig, Tagger};
use crate::encoder::{ExternalEmbeddings, SentenceInput};
use crate::eval::{evaluate, token_accuracy, EvalError, EvalReport};

/// The seeds used for the three restarts.
pub const DEFAULT_SEEDS: [u64; 3] = [14112, 36125, 92225];

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0}")]
    InvalidConfig(String),
    #[error("{0} corpus is empty")]
    EmptyCorpus(&'static str),
    #[error("non-finite {what} in epoch {epoch}, batch {batch} (sentence {sentence})")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        batch: usize,
        sentence: usize,
    },
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Sentences per optimizer step.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub optimizer: AdamWConfig,
    pub seeds: Vec<u64>,
    /// Stop once this many epochs pass without a new best dev accuracy.
    pub patience: Option<usize>,
    /// Stop as soon as dev accuracy reaches this value.
    pub target_accuracy: Option<f64>,
    /// Compute a batch's sentences in parallel. Gradients are still reduced
    /// in sentence order, so results match the sequential run bit for bit.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            max_epochs: 10,
            optimizer: AdamWConfig::default(),
            seeds: DEFAULT_SEEDS.to_vec(),
            patience: None,
            target_accuracy: None,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if !(self.optimizer.lr > 0.0 && self.optimizer.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.optimizer.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Sum of decision cross-entropies over the epoch divided by its token count.
    pub train_loss: f64,
    pub dev_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
}

/// A corpus plus the precomputed embeddings an external-encoder model needs.
#[derive(Debug, Clone, Copy)]
pub struct Split<'a> {
    pub corpus: &'a Corpus,
    pub external: Option<&'a ExternalEmbeddings>,
}

impl<'a> Split<'a> {
    pub fn new(corpus: &'a Corpus) -> Self {
        Self { corpus, external: None }
    }
}

fn dropout_seed(seed: u64, epoch: usize, sentence: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((epoch as u64) << 32) ^ sentence as u64
}

/// Trains `tagger` in place and leaves it holding the parameters of its best
/// dev epoch. Ties keep the earlier epoch.
pub fn train(
    tagger: &mut Tagger,
    train: Split,
    dev: Split,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainLog, TrainError> {
    cfg.validate()?;
    if train.corpus.is_empty() {
        return Err(TrainError::EmptyCorpus("training"));
    }
    if dev.corpus.is_empty() {
        return Err(TrainError::EmptyCorpus("development"));
    }
    let train_inputs = tagger.prepare(train.corpus, train.external)?;
    let dev_inputs = tagger.prepare(dev.corpus, dev.external)?;
    let dropout = tagger.config().dropout;
    let mut log = TrainLog {
        seed,
        epochs: Vec::new(),
        best_epoch: 0,
        best_dev_accuracy: f64::NEG_INFINITY,
    };
    let mut best = tagger.store.snapshot();
    let mut order: Vec<usize> = (0..train.corpus.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let mut losses = Vec::with_capacity(order.len());
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let tokens: usize = batch.iter().map(|&i| train.corpus.sentences[i].len()).sum();
            let scale = 1.0 / tokens as f64;
            let run = |&i: &usize| -> Result<(f64, Gradients), DecoderError> {
                let mut mode = Mode::train(dropout, dropout_seed(seed, epoch, i));
                tagger.sentence_gradients(&train_inputs[i], &train.corpus.sentences[i], &mut mode, scale)
            };
            let results: Vec<(f64, Gradients)> = if cfg.parallel {
                batch.par_iter().map(run).collect::<Result<_, _>>()?
            } else {
                batch.iter().map(run).collect::<Result<_, _>>()?
            };
            for (&i, (loss, grads)) in batch.iter().zip(&results) {
                let what = match (loss.is_finite(), grads.is_finite()) {
                    (false, _) => "loss",
                    (_, false) => "gradient",
                    _ => {
                        tagger.store.accumulate(grads);
                        losses.push(*loss);
                        continue;
                    }
                };
                return Err(TrainError::NonFinite {
                    what,
                    epoch,
                    batch: b,
                    sentence: i,
                });
            }
            tagger.store.adamw_step(&cfg.optimizer);
        }

        let predictions = tagger.tag_corpus(&dev_inputs)?;
        let dev_accuracy = token_accuracy(&predictions, dev.corpus)?;
        let entry = EpochLog {
            epoch,
            train_loss: i_fast_sum_in_place(&mut losses) / train.corpus.token_count() as f64,
            dev_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.epochs.push(entry);
        if dev_accuracy > log.best_dev_accuracy {
            log.best_dev_accuracy = dev_accuracy;
            log.best_epoch = epoch;
            best = tagger.store.snapshot();
        }
        if cfg.target_accuracy.is_some_and(|t| dev_accuracy >= t) {
            break;
        }
        if cfg.patience.is_some_and(|p| epoch - log.best_epoch >= p) {
            break;
        }
    }
    tagger
        .store
        .restore(&best)
        .expect("snapshot taken from the same store");
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Seeds for which the metric is defined.
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation, defined for n ≥ 2.
    pub stdev: Option<f64>,
}

pub fn mean_stdev(values: &[f64]) -> MetricSummary {
    let n = values.len();
    let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
    let stdev = mean.filter(|_| n >= 2).map(|m| {
        let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    MetricSummary { n, mean, stdev }
}

/// Numeric leaves of a report, keyed by dotted path. Array elements that
/// carry a `bin` name are keyed by it, others by position.
pub fn flatten_metrics(report: &EvalReport) -> BTreeMap<String, Option<f64>> {
    fn walk(prefix: &str, v: &Value, out: &mut BTreeMap<String, Option<f64>>) {
        let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            Value::Number(n) => {
                out.insert(prefix.to_string(), n.as_f64());
            }
            Value::Null => {
                out.insert(prefix.to_string(), None);
            }
            Value::Object(m) => {
                for (k, v) in m {
                    if k != "bin" {
                        walk(&join(k), v, out);
                    }
                }
            }
            Value::Array(items) => {
                for (i, item) in items.iter().enumerate() {
                    let key = item.get("bin").and_then(Value::as_str).map_or(i.to_string(), str::to_string);
                    walk(&join(&key), item, out);
                }
            }
            Value::String(_) | Value::Bool(_) => {}
        }
    }
    let mut out = BTreeMap::new();
    walk("", &serde_json::to_value(report).expect("reports serialize"), &mut out);
    out
}

/// Mean and sample standard deviation of every report metric across runs.
/// Undefined (`null`) values are left out of their metric's summary.
pub fn aggregate_reports(reports: &[EvalReport]) -> BTreeMap<String, MetricSummary> {
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for (k, v) in flatten_metrics(r) {
            let column = columns.entry(k).or_default();
            column.extend(v);
        }
    }
    columns.into_iter().map(|(k, v)| (k, mean_stdev(&v))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub log: TrainLog,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRestartReport {
    pub runs: Vec<RunResult>,
    pub aggregate: BTreeMap<String, MetricSummary>,
}

/// Trains one model per seed, evaluates each on `test`, and aggregates.
/// With `out_dir`, each best model is saved to `{out_dir}/{seed}/best.ckpt`.
pub fn multi_restart(
    config: ModelConfig,
    train_split: Split,
    dev: Split,
    test: Split,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(u64, &EpochLog),
) -> Result<MultiRestartReport, TrainError> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut tagger = Tagger::new(config, train_split.corpus, seed)?;
        let log = train(&mut tagger, train_split, dev, cfg, seed, |e| on_epoch(seed, e))?;
        let inputs: Vec<SentenceInput> = tagger.prepare(test.corpus, test.external)?;
        let predictions = tagger.tag_corpus(&inputs)?;
        let report = evaluate(&predictions, test.corpus, tagger.vocab())?;
        if let Some(dir) = out_dir {
            tagger.save(&dir.join(seed.to_string()).join("best.ckpt"))?;
        }
        runs.push(RunResult { seed, log, report });
    }
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    Ok(MultiRestartReport {
        aggregate: aggregate_reports(&reports),
        runs,
    })
}
