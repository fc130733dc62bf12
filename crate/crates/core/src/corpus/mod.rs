//! Supertagged corpora: one sentence per line, tokens `word|category`
//! separated by single spaces.

mod split;
mod stats;
mod vocab;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::category::{parse_infix_with_max_depth, Category, CategoryError};

pub use split::redistribute_split;
pub use stats::{corpus_stats, BandCounts, DepthCount, FrequencyBands, StatsReport};
pub use vocab::{build_vocab, frequency_bin, CategoryVocab, FrequencyBin, UNKNOWN_SYMBOL};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Format { line: usize, column: usize, message: String },
    #[error("line {line}, column {column}: {source}")]
    Category {
        line: usize,
        column: usize,
        #[source]
        source: CategoryError,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid threshold {0}")]
    InvalidThreshold(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub word: String,
    pub gold: Category,
}

impl Token {
    pub fn new(word: impl Into<String>, gold: Category) -> Self {
        Self { word: word.into(), gold }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<Token>,
}

impl Sentence {
    /// Panics on an empty token list.
    pub fn new(tokens: Vec<Token>) -> Self {
        assert!(!tokens.is_empty(), "a sentence has at least one token");
        Self { tokens }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.word.as_str())
    }

    pub fn categories(&self) -> impl Iterator<Item = &Category> {
        self.tokens.iter().map(|t| &t.gold)
    }

    pub fn to_line(&self) -> String {
        let mut line = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{}|{}", t.word, t.gold);
        }
        line
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub name: String,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        Self {
            name: name.into(),
            sentences,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&s.to_line());
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_text()).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Reads a corpus file. The corpus is named after the file stem.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_corpus(&name, &text)
}

/// Parses corpus text. Lines and columns in errors are 1-based; columns count bytes.
/// Gold categories are not depth-limited here.
pub fn parse_corpus(name: &str, text: &str) -> Result<Corpus, CorpusError> {
    let mut sentences = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        sentences.push(parse_line(line, i + 1)?);
    }
    Ok(Corpus::new(name, sentences))
}

fn parse_line(line: &str, line_no: usize) -> Result<Sentence, CorpusError> {
    let format = |column: usize, message: &str| CorpusError::Format {
        line: line_no,
        column,
        message: message.to_string(),
    };
    let mut tokens = Vec::new();
    let mut start = 0;
    for piece in line.split(' ') {
        let column = start + 1;
        if piece.is_empty() {
            return Err(format(column, "empty token (tokens are separated by single spaces)"));
        }
        let bar = piece
            .rfind('|')
            .ok_or_else(|| format(column, "token has no '|' separator"))?;
        let (word, cat) = (&piece[..bar], &piece[bar + 1..]);
        if word.is_empty() {
            return Err(format(column, "empty word"));
        }
        if word.contains('|') {
            return Err(format(column, "word contains '|'"));
        }
        let gold = parse_infix_with_max_depth(cat, usize::MAX).map_err(|source| CorpusError::Category {
            line: line_no,
            column: column + bar + 1,
            source,
        })?;
        tokens.push(Token::new(word, gold));
        start += piece.len() + 1;
    }
    Ok(Sentence::new(tokens))
}
