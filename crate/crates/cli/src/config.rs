//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory holding the config file. Unknown and
//! repeated keys are errors.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use treetag::autodiff::AdamWConfig;
use treetag::decoders::{DecoderConfig, DecoderVariant, ModelConfig};
use treetag::encoder::{EncoderConfig, EncoderMode};
use treetag::train::TrainConfig;

/// Every accepted key with its default and meaning, as printed by
/// `treetag train --help`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("train", "(required)", "training corpus"),
    ("dev", "(required)", "development corpus, used for early stopping"),
    ("test", "dev", "corpus the final models are evaluated on"),
    ("out_dir", "(required)", "checkpoints go to <out_dir>/<seed>/best.ckpt, the report to <out_dir>/report.json"),
    ("train_embeddings", "none", "precomputed embeddings for train (encoder = external)"),
    ("dev_embeddings", "none", "precomputed embeddings for dev (encoder = external)"),
    ("test_embeddings", "none", "precomputed embeddings for test (encoder = external)"),
    ("variant", "AddrMLP", "MLP_Thresholded, MLP_Full, SeqRNN, TreeRNN or AddrMLP"),
    ("attention", "false", "mix attention over the sentence into the head input"),
    ("max_depth", "6", "deepest category the tree decoders may build"),
    ("max_seq_len", "127", "longest token sequence SeqRNN may emit"),
    ("mlp_threshold", "10", "minimum training frequency of an MLP_Thresholded class"),
    ("encoder", "birnn", "birnn (trainable BiGRU) or external"),
    ("embed_dim", "64", "word embedding size of the BiGRU encoder"),
    ("hidden_dim", "64", "model dimension shared by encoder and decoder"),
    ("dropout", "0.2", "dropout rate"),
    ("batch_size", "8", "sentences per optimizer step"),
    ("max_epochs", "10", "upper bound on training epochs"),
    ("patience", "none", "stop after this many epochs without dev improvement"),
    ("target_accuracy", "none", "stop once dev accuracy reaches this value"),
    ("lr", "1e-4", "AdamW learning rate"),
    ("beta1", "0.9", "AdamW first moment decay"),
    ("beta2", "0.999", "AdamW second moment decay"),
    ("eps", "1e-6", "AdamW epsilon"),
    ("weight_decay", "0.01", "AdamW decoupled weight decay"),
    ("seeds", "14112,36125,92225", "comma-separated restart seeds"),
    ("parallel", "false", "compute each batch's sentences in parallel"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "key `{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    pub out_dir: PathBuf,
    pub train_embeddings: Option<PathBuf>,
    pub dev_embeddings: Option<PathBuf>,
    pub test_embeddings: Option<PathBuf>,
    pub model: ModelConfig,
    pub training: TrainConfig,
}

fn err(line: usize, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: Some(line),
        key: Some(key.to_string()),
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| err(line, key, format!("cannot parse `{value}`")))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(line, key, format!("expected true or false, got `{value}`"))),
    }
}

fn optional<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<Option<T>, ConfigError> {
    if value == "none" {
        Ok(None)
    } else {
        parse_num(line, key, value).map(Some)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            key: None,
            message: format!("{}: {e}", path.display()),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut seen = HashSet::new();
        let mut train = None;
        let mut dev = None;
        let mut test = None;
        let mut out_dir = None;
        let mut embeddings: [Option<PathBuf>; 3] = [None, None, None];
        let mut decoder = DecoderConfig::new(DecoderVariant::AddrMLP);
        let mut encoder = EncoderConfig {
            mode: EncoderMode::TrainableBiRecurrent,
            embed_dim: 64,
            hidden_dim: 64,
        };
        let mut dropout = 0.2;
        let mut training = TrainConfig {
            optimizer: AdamWConfig::default(),
            ..TrainConfig::default()
        };

        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError {
                    line: Some(n),
                    key: None,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _, _)| *k == key) {
                return Err(err(n, key, "unknown key"));
            }
            if !seen.insert(key.to_string()) {
                return Err(err(n, key, "given more than once"));
            }
            if value.is_empty() {
                return Err(err(n, key, "missing value"));
            }
            let path = || Some(base.join(value));
            match key {
                "train" => train = path(),
                "dev" => dev = path(),
                "test" => test = path(),
                "out_dir" => out_dir = path(),
                "train_embeddings" => embeddings[0] = path(),
                "dev_embeddings" => embeddings[1] = path(),
                "test_embeddings" => embeddings[2] = path(),
                "variant" => {
                    decoder.variant = value.parse().map_err(|e: String| err(n, key, e))?;
                }
                "attention" => decoder.use_attention = parse_bool(n, key, value)?,
                "max_depth" => decoder.max_depth = parse_num(n, key, value)?,
                "max_seq_len" => decoder.max_seq_len = parse_num(n, key, value)?,
                "mlp_threshold" => decoder.mlp_threshold = parse_num(n, key, value)?,
                "encoder" => {
                    encoder.mode = match value {
                        "birnn" => EncoderMode::TrainableBiRecurrent,
                        "external" => EncoderMode::ExternalEmbeddings,
                        _ => return Err(err(n, key, format!("expected birnn or external, got `{value}`"))),
                    }
                }
                "embed_dim" => encoder.embed_dim = parse_num(n, key, value)?,
                "hidden_dim" => encoder.hidden_dim = parse_num(n, key, value)?,
                "dropout" => dropout = parse_num(n, key, value)?,
                "batch_size" => training.batch_size = parse_num(n, key, value)?,
                "max_epochs" => training.max_epochs = parse_num(n, key, value)?,
                "patience" => training.patience = optional(n, key, value)?,
                "target_accuracy" => training.target_accuracy = optional(n, key, value)?,
                "lr" => training.optimizer.lr = parse_num(n, key, value)?,
                "beta1" => training.optimizer.beta1 = parse_num(n, key, value)?,
                "beta2" => training.optimizer.beta2 = parse_num(n, key, value)?,
                "eps" => training.optimizer.eps = parse_num(n, key, value)?,
                "weight_decay" => training.optimizer.weight_decay = parse_num(n, key, value)?,
                "seeds" => {
                    training.seeds = value
                        .split(',')
                        .map(|s| parse_num(n, key, s.trim()))
                        .collect::<Result<_, _>>()?;
                }
                "parallel" => training.parallel = parse_bool(n, key, value)?,
                _ => unreachable!("key table and match arms disagree"),
            }
        }

        let required = |v: Option<PathBuf>, key: &str| {
            v.ok_or_else(|| ConfigError {
                line: None,
                key: Some(key.to_string()),
                message: "required".into(),
            })
        };
        let train = required(train, "train")?;
        let dev = required(dev, "dev")?;
        let out_dir = required(out_dir, "out_dir")?;
        let [train_embeddings, dev_embeddings, test_embeddings] = embeddings;
        let cfg = Self {
            test: test.unwrap_or_else(|| dev.clone()),
            train,
            dev,
            out_dir,
            train_embeddings,
            dev_embeddings,
            test_embeddings,
            model: ModelConfig {
                encoder,
                decoder,
                dropout,
            },
            training,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let whole = |message: String| ConfigError {
            line: None,
            key: None,
            message,
        };
        self.model.validate().map_err(|e| whole(e.to_string()))?;
        self.training.validate().map_err(|e| whole(e.to_string()))?;
        let external = self.model.encoder.mode == EncoderMode::ExternalEmbeddings;
        for (key, value) in [
            ("train_embeddings", &self.train_embeddings),
            ("dev_embeddings", &self.dev_embeddings),
        ] {
            if external && value.is_none() {
                return Err(ConfigError {
                    line: None,
                    key: Some(key.into()),
                    message: "required when encoder = external".into(),
                });
            }
        }
        if external && self.test != self.dev && self.test_embeddings.is_none() {
            return Err(ConfigError {
                line: None,
                key: Some("test_embeddings".into()),
                message: "required when encoder = external and test differs from dev".into(),
            });
        }
        Ok(())
    }
}

/// Rendering of [`KEYS`] for help output.
pub fn key_help() -> String {
    let mut s = String::from("Config keys (key = value, one per line, # starts a comment):\n");
    for (k, default, doc) in KEYS {
        s.push_str(&format!("  {k:<18} [default: {default}] {doc}\n"));
    }
    s
}
