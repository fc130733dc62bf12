mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::RunConfig;
use treetag::corpus::{build_vocab, corpus_stats, load_corpus, redistribute_split, Corpus, CorpusError};
use treetag::decoders::{DecoderError, LabelInventory, Tagger};
use treetag::encoder::{EncoderError, ExternalEmbeddings};
use treetag::eval::{align_predictions, evaluate, format_predictions, load_predictions, EvalError};
use treetag::train::{multi_restart, Split, TrainError};

#[derive(Parser)]
#[command(name = "treetag", version, about = "Constructive CCG supertagging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print corpus statistics as JSON.
    Stats {
        corpus: PathBuf,
        /// Count frequency bands against this corpus instead of the input.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Move every sentence holding a category rarer than THRESHOLD to a test file.
    Split {
        corpus: PathBuf,
        #[arg(long)]
        threshold: usize,
        /// Where `<name>.train` and `<name>.test` are written [default: next to CORPUS].
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train one model per configured seed and print the aggregated report.
    #[command(after_long_help = config::key_help())]
    Train { config: PathBuf },
    /// Tag a corpus with a saved model, writing the corpus format.
    Tag {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Precomputed embeddings, required by external-encoder models.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Fail unless the checkpoint's label inventory matches this training corpus.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Output file [default: stdout].
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score predictions against gold and print the report as JSON.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Training corpus the frequency bins are computed from.
        #[arg(long)]
        train: PathBuf,
        /// Class threshold of the evaluated model; bins it cannot reach report null.
        #[arg(long, default_value_t = 1)]
        threshold: usize,
        /// Also write the depth confusion matrix as CSV.
        #[arg(long)]
        confusion_csv: Option<PathBuf>,
    },
}

/// A failure reported as `error[<code>]: <message>` with a matching exit status.
struct Failure {
    code: &'static str,
    status: u8,
    message: String,
}

const USAGE: u8 = 1;
const DATA: u8 = 2;
const NUMERIC: u8 = 3;

impl Failure {
    fn new(code: &'static str, status: u8, message: impl ToString) -> Self {
        Self {
            code,
            status,
            message: message.to_string(),
        }
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        let code = match e {
            CorpusError::Io { .. } => "io",
            CorpusError::InvalidThreshold(_) => "usage",
            _ => "corpus",
        };
        let status = if code == "usage" { USAGE } else { DATA };
        Self::new(code, status, e)
    }
}

impl From<EncoderError> for Failure {
    fn from(e: EncoderError) -> Self {
        let code = if matches!(e, EncoderError::Io { .. }) { "io" } else { "embeddings" };
        Self::new(code, DATA, e)
    }
}

impl From<DecoderError> for Failure {
    fn from(e: DecoderError) -> Self {
        match e {
            DecoderError::Corpus(e) => e.into(),
            DecoderError::Encoder(e) => e.into(),
            DecoderError::Io { .. } => Self::new("io", DATA, e),
            DecoderError::InventoryMismatch { .. } => Self::new("inventory", DATA, e),
            DecoderError::Checkpoint(_) | DecoderError::Json(_) => Self::new("checkpoint", DATA, e),
            DecoderError::InvalidConfig(_) => Self::new("config", USAGE, e),
            _ => Self::new("model", DATA, e),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let code = match e {
            EvalError::Alignment(_) | EvalError::CorpusMismatch => "alignment",
            EvalError::Format { .. } => "predictions",
            EvalError::Io { .. } | EvalError::Csv(_) => "io",
        };
        Self::new(code, DATA, e)
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => Self::new("numeric", NUMERIC, e),
            TrainError::InvalidConfig(_) => Self::new("config", USAGE, e),
            TrainError::EmptyCorpus(_) => Self::new("corpus", DATA, e),
            TrainError::Decoder(e) => e.into(),
            TrainError::Eval(e) => e.into(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new("io", DATA, format!("{}: {e}", path.display()))
}

fn print_json(value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::new("io", DATA, e))?;
    println!("{text}");
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn load_embeddings(path: Option<&Path>) -> Result<Option<ExternalEmbeddings>, Failure> {
    Ok(path.map(ExternalEmbeddings::load).transpose()?)
}

fn stats(corpus: &Path, reference: Option<&Path>) -> Result<(), Failure> {
    let c = load_corpus(corpus)?;
    let vocab = match reference {
        Some(r) => Some(build_vocab(&load_corpus(r)?, 1)?),
        None => None,
    };
    print_json(&corpus_stats(&c, vocab.as_ref()))
}

#[derive(Serialize)]
struct SplitSummary {
    train: PathBuf,
    test: PathBuf,
    train_sentences: usize,
    test_sentences: usize,
}

fn split(corpus: &Path, threshold: usize, out_dir: Option<&Path>) -> Result<(), Failure> {
    let c = load_corpus(corpus)?;
    let (train, test) = redistribute_split(&c, threshold)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| corpus.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let summary = SplitSummary {
        train: dir.join(&train.name),
        test: dir.join(&test.name),
        train_sentences: train.len(),
        test_sentences: test.len(),
    };
    write_file(&summary.train, &train.to_text())?;
    write_file(&summary.test, &test.to_text())?;
    print_json(&summary)
}

fn with_embeddings<'a>(corpus: &'a Corpus, external: &'a Option<ExternalEmbeddings>) -> Split<'a> {
    Split {
        corpus,
        external: external.as_ref(),
    }
}

fn train(config_path: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config_path).map_err(|e| Failure::new("config", USAGE, e))?;
    let train = load_corpus(&cfg.train)?;
    let dev = load_corpus(&cfg.dev)?;
    let test = if cfg.test == cfg.dev { dev.clone() } else { load_corpus(&cfg.test)? };
    let train_emb = load_embeddings(cfg.train_embeddings.as_deref())?;
    let dev_emb = load_embeddings(cfg.dev_embeddings.as_deref())?;
    let test_emb = match &cfg.test_embeddings {
        Some(p) => Some(ExternalEmbeddings::load(p)?),
        None if cfg.test == cfg.dev => dev_emb.clone(),
        None => None,
    };
    let mut stderr = std::io::stderr();
    let report = multi_restart(
        cfg.model,
        with_embeddings(&train, &train_emb),
        with_embeddings(&dev, &dev_emb),
        with_embeddings(&test, &test_emb),
        &cfg.training,
        Some(&cfg.out_dir),
        |seed, epoch| {
            let line = serde_json::json!({ "seed": seed, "epoch": epoch });
            let _ = writeln!(stderr, "{line}");
        },
    )?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::new("io", DATA, e))?;
    write_file(&cfg.out_dir.join("report.json"), &text)?;
    println!("{text}");
    Ok(())
}

fn tag(
    checkpoint: &Path,
    corpus: &Path,
    embeddings: Option<&Path>,
    train: Option<&Path>,
    output: Option<&Path>,
) -> Result<(), Failure> {
    let tagger = Tagger::load(checkpoint)?;
    if let Some(train) = train {
        let expected = LabelInventory::from_corpus(&load_corpus(train)?).fingerprint();
        let found = tagger.inventory().fingerprint();
        if expected != found {
            return Err(DecoderError::InventoryMismatch { expected, found }.into());
        }
    }
    let c = load_corpus(corpus)?;
    let external = load_embeddings(embeddings)?;
    let inputs = tagger.prepare(&c, external.as_ref())?;
    let predictions = tagger.tag_corpus(&inputs)?;
    let text = format_predictions(
        c.sentences
            .iter()
            .zip(&predictions)
            .map(|(s, p)| (s.words().collect(), p.as_slice())),
    );
    match output {
        Some(path) => write_file(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn eval(gold: &Path, pred: &Path, train: &Path, threshold: usize, csv: Option<&Path>) -> Result<(), Failure> {
    let gold = load_corpus(gold)?;
    let vocab = build_vocab(&load_corpus(train)?, threshold)?;
    let predictions = align_predictions(load_predictions(pred)?, &gold)?;
    let report = evaluate(&predictions, &gold, &vocab)?;
    if let Some(path) = csv {
        write_file(path, &report.confusion.to_csv()?)?;
    }
    print_json(&report)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Stats { corpus, reference } => stats(&corpus, reference.as_deref()),
        Command::Split {
            corpus,
            threshold,
            out_dir,
        } => split(&corpus, threshold, out_dir.as_deref()),
        Command::Train { config } => train(&config),
        Command::Tag {
            checkpoint,
            corpus,
            embeddings,
            train,
            output,
        } => tag(&checkpoint, &corpus, embeddings.as_deref(), train.as_deref(), output.as_deref()),
        Command::Eval {
            gold,
            pred,
            train,
            threshold,
            confusion_csv,
        } => eval(&gold, &pred, &train, threshold, confusion_csv.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&text).trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(USAGE);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let message = f.message.split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("error[{}]: {message}", f.code);
            ExitCode::from(f.status)
        }
    }
}
