//! Word-level contextual encodings: one `d`-dimensional row per word.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, GruCell, Linear, Mode, ParamId, ParameterStore, Tensor, Var};
use crate::corpus::Corpus;

pub const UNK_WORD: &str = "<unk>";

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("sentence {sentence}: expected {expected} embedding rows, found {found}")]
    LengthMismatch { sentence: usize, expected: usize, found: usize },
    #[error("sentence {sentence}, token {token}: embedding file has {found:?}, corpus has {expected:?}")]
    WordMismatch {
        sentence: usize,
        token: usize,
        expected: String,
        found: String,
    },
    #[error("embedding width {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("encoder mode does not accept this input")]
    WrongInput,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Word types seen in training. Index 0 is the unknown word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl WordVocab {
    /// Words in order of first occurrence.
    pub fn build(corpus: &Corpus) -> Self {
        Self::from_words(corpus.tokens().map(|t| t.word.clone()))
    }

    fn from_words(words: impl IntoIterator<Item = String>) -> Self {
        let mut vocab = Self {
            words: vec![UNK_WORD.to_string()],
            index: HashMap::from([(UNK_WORD.to_string(), 0)]),
        };
        for w in words {
            if !vocab.index.contains_key(&w) {
                vocab.index.insert(w.clone(), vocab.words.len());
                vocab.words.push(w);
            }
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.words.get(index).map(String::as_str)
    }
}

impl Serialize for WordVocab {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.words[1..].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WordVocab {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let words = Vec::<String>::deserialize(deserializer)?;
        let vocab = Self::from_words(words.iter().cloned());
        if vocab.len() != words.len() + 1 {
            return Err(serde::de::Error::custom("duplicate or reserved word in vocabulary"));
        }
        Ok(vocab)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderMode {
    TrainableBiRecurrent,
    ExternalEmbeddings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub mode: EncoderMode,
    pub embed_dim: usize,
    /// Model dimension `d`, shared with the decoders.
    pub hidden_dim: usize,
}

/// What the encoder reads for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub enum SentenceInput {
    Words(Vec<usize>),
    Embeddings(Tensor),
}

impl SentenceInput {
    pub fn len(&self) -> usize {
        match self {
            Self::Words(w) => w.len(),
            Self::Embeddings(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Encoder {
    /// Embedding lookup, a GRU in each direction, then `[fwd; bwd]` projected to `d`.
    BiGru {
        embeddings: ParamId,
        forward: GruCell,
        backward: GruCell,
        projection: Linear,
    },
    /// Rows supplied by the caller.
    External { dim: usize },
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        cfg: &EncoderConfig,
        vocab_size: usize,
        rng: &mut R,
    ) -> Result<Self, AutodiffError> {
        match cfg.mode {
            EncoderMode::ExternalEmbeddings => Ok(Self::External { dim: cfg.hidden_dim }),
            EncoderMode::TrainableBiRecurrent => {
                let table = (0..vocab_size * cfg.embed_dim).map(|_| rng.gen_range(-0.1..0.1)).collect();
                let embeddings = store.add("encoder.embed", Tensor::from_vec(vocab_size, cfg.embed_dim, table))?;
                let d = cfg.hidden_dim;
                Ok(Self::BiGru {
                    embeddings,
                    forward: GruCell::new(store, "encoder.fwd", cfg.embed_dim, d, rng)?,
                    backward: GruCell::new(store, "encoder.bwd", cfg.embed_dim, d, rng)?,
                    projection: Linear::new(store, "encoder.proj", 2 * d, d, rng)?,
                })
            }
        }
    }

    pub fn from_store(store: &ParameterStore, cfg: &EncoderConfig) -> Result<Self, AutodiffError> {
        match cfg.mode {
            EncoderMode::ExternalEmbeddings => Ok(Self::External { dim: cfg.hidden_dim }),
            EncoderMode::TrainableBiRecurrent => Ok(Self::BiGru {
                embeddings: store
                    .id("encoder.embed")
                    .ok_or_else(|| AutodiffError::UnknownParameter("encoder.embed".into()))?,
                forward: GruCell::from_store(store, "encoder.fwd")?,
                backward: GruCell::from_store(store, "encoder.bwd")?,
                projection: Linear::from_store(store, "encoder.proj")?,
            }),
        }
    }

    /// `H₀`, one row per word.
    pub fn encode(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        input: &SentenceInput,
        mode: &mut Mode,
    ) -> Result<Var, EncoderError> {
        match (self, input) {
            (Self::External { dim }, SentenceInput::Embeddings(rows)) => {
                if rows.cols() != *dim {
                    return Err(EncoderError::DimensionMismatch {
                        expected: *dim,
                        found: rows.cols(),
                    });
                }
                Ok(g.input(rows.clone()))
            }
            (
                Self::BiGru {
                    embeddings,
                    forward,
                    backward,
                    projection,
                },
                SentenceInput::Words(ids),
            ) => {
                let e = g.embed(store, *embeddings, ids)?;
                let e = mode.dropout(g, e);
                let n = ids.len();
                let d = forward.hidden_dim(store);
                let rows: Vec<Var> = (0..n).map(|i| g.gather_rows(e, &[i])).collect::<Result<_, _>>()?;

                let mut fwd = Vec::with_capacity(n);
                let mut h = g.input(Tensor::zeros(1, d));
                for &x in &rows {
                    h = forward.forward(g, store, x, h)?;
                    fwd.push(h);
                }
                let mut bwd = vec![h; n];
                let mut h = g.input(Tensor::zeros(1, d));
                for i in (0..n).rev() {
                    h = backward.forward(g, store, rows[i], h)?;
                    bwd[i] = h;
                }
                let fwd = g.concat_rows(&fwd)?;
                let bwd = g.concat_rows(&bwd)?;
                let both = g.concat_cols(fwd, bwd)?;
                Ok(projection.forward(g, store, both)?)
            }
            _ => Err(EncoderError::WrongInput),
        }
    }
}

/// Precomputed word vectors, one block per sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalEmbeddings {
    pub sentences: Vec<(Vec<String>, Tensor)>,
}

impl ExternalEmbeddings {
    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        let text = fs::read_to_string(path).map_err(|source| EncoderError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Blocks are separated by blank lines; each line is a word followed by
    /// its whitespace-separated components. All rows share one width.
    pub fn parse(text: &str) -> Result<Self, EncoderError> {
        let mut sentences = Vec::new();
        let mut words = Vec::new();
        let mut values = Vec::new();
        let mut width = None;
        let mut flush = |words: &mut Vec<String>, values: &mut Vec<f64>, width: Option<usize>| {
            if !words.is_empty() {
                let n = words.len();
                sentences.push((std::mem::take(words), Tensor::from_vec(n, width.unwrap_or(0), std::mem::take(values))));
            }
        };
        for (i, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else {
                flush(&mut words, &mut values, width);
                continue;
            };
            let row: Vec<f64> = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|_| EncoderError::Format {
                        line: i + 1,
                        message: format!("not a number: {f:?}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            if row.is_empty() || width.is_some_and(|w| w != row.len()) {
                return Err(EncoderError::Format {
                    line: i + 1,
                    message: format!("row has {} components", row.len()),
                });
            }
            width = Some(row.len());
            words.push(word.to_string());
            values.extend(row);
        }
        flush(&mut words, &mut values, width);
        Ok(Self { sentences })
    }

    pub fn dim(&self) -> Option<usize> {
        self.sentences.first().map(|(_, t)| t.cols())
    }

    /// Checks the blocks line up with the corpus, sentence by sentence and word by word.
    pub fn align(&self, corpus: &Corpus) -> Result<Vec<Tensor>, EncoderError> {
        if self.sentences.len() != corpus.len() {
            return Err(EncoderError::LengthMismatch {
                sentence: self.sentences.len().min(corpus.len()),
                expected: corpus.len(),
                found: self.sentences.len(),
            });
        }
        let mut out = Vec::with_capacity(corpus.len());
        for (s, (sentence, (words, rows))) in corpus.sentences.iter().zip(&self.sentences).enumerate() {
            if sentence.len() != rows.rows() {
                return Err(EncoderError::LengthMismatch {
                    sentence: s,
                    expected: sentence.len(),
                    found: rows.rows(),
                });
            }
            for (t, (expected, found)) in sentence.words().zip(words).enumerate() {
                if expected != found {
                    return Err(EncoderError::WordMismatch {
                        sentence: s,
                        token: t,
                        expected: expected.to_string(),
                        found: found.clone(),
                    });
                }
            }
            out.push(rows.clone());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bigru(store: &mut ParameterStore, vocab: usize) -> Encoder {
        let cfg = EncoderConfig {
            mode: EncoderMode::TrainableBiRecurrent,
            embed_dim: 5,
            hidden_dim: 4,
        };
        Encoder::new(store, &cfg, vocab, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn word_vocab() {
        let c = parse_corpus("t", "the|NP/N dog|N\nthe|NP/N cat|N").unwrap();
        let v = WordVocab::build(&c);
        assert_eq!(v.len(), 4);
        assert_eq!(v.index_of("the"), 1);
        assert_eq!(v.index_of("cat"), 3);
        assert_eq!(v.index_of("zebra"), 0);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"["the","dog","cat"]"#);
        assert_eq!(serde_json::from_str::<WordVocab>(&json).unwrap(), v);
        assert!(serde_json::from_str::<WordVocab>(r#"["a","a"]"#).is_err());
    }

    #[test]
    fn zero_recurrent_weights_leave_projection_bias() {
        let mut store = ParameterStore::new();
        let enc = bigru(&mut store, 3);
        for id in store.ids().collect::<Vec<_>>() {
            if store.name(id).starts_with("encoder.fwd") || store.name(id).starts_with("encoder.bwd") {
                store.value_mut(id).fill(0.0);
            }
        }
        let Encoder::BiGru { projection, .. } = &enc else { unreachable!() };
        let bias = store.value(projection.b).clone();
        let mut g = Graph::new();
        let h0 = enc.encode(&mut g, &store, &SentenceInput::Words(vec![2]), &mut Mode::eval()).unwrap();
        assert_eq!(g.value(h0), &bias);
    }

    #[test]
    fn rows_are_contextual_and_deterministic() {
        let mut store = ParameterStore::new();
        let enc = bigru(&mut store, 6);
        let run = |ids: Vec<usize>| {
            let mut g = Graph::new();
            let h0 = enc.encode(&mut g, &store, &SentenceInput::Words(ids), &mut Mode::eval()).unwrap();
            g.value(h0).clone()
        };
        let a = run(vec![1, 2, 3]);
        let b = run(vec![4, 2, 5]);
        assert_eq!(a.shape(), (3, 4));
        assert!(a.is_finite());
        assert_ne!(a.row(1), b.row(1));
        assert_eq!(a, run(vec![1, 2, 3]));
    }

    #[test]
    fn gradients_reach_every_encoder_parameter() {
        let mut store = ParameterStore::new();
        let enc = bigru(&mut store, 6);
        let mut g = Graph::new();
        let h0 = enc.encode(&mut g, &store, &SentenceInput::Words(vec![1, 2, 3]), &mut Mode::eval()).unwrap();
        let w = Tensor::from_vec(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect());
        let loss = g.weighted_sum(h0, w).unwrap();
        let grads = g.backward(loss, 1.0).unwrap();
        store.accumulate(&grads);
        for id in store.ids() {
            assert!(store.grad_norm_of(id) > 0.0, "{}", store.name(id));
        }
    }

    #[test]
    fn round_trip_through_store() {
        let mut store = ParameterStore::new();
        let cfg = EncoderConfig {
            mode: EncoderMode::TrainableBiRecurrent,
            embed_dim: 5,
            hidden_dim: 4,
        };
        let enc = bigru(&mut store, 6);
        let again = Encoder::from_store(&store, &cfg).unwrap();
        let input = SentenceInput::Words(vec![1, 0, 5]);
        let mut g1 = Graph::new();
        let mut g2 = Graph::new();
        let a = enc.encode(&mut g1, &store, &input, &mut Mode::eval()).unwrap();
        let b = again.encode(&mut g2, &store, &input, &mut Mode::eval()).unwrap();
        assert_eq!(g1.value(a), g2.value(b));
    }

    #[test]
    fn external_rows_pass_through() {
        let text = "Mary 0.5 1 -2\nsaw 0 0 0\nJohn 1e-3 2.5 3\n\n\nok 1 1 1\n";
        let ext = ExternalEmbeddings::parse(text).unwrap();
        assert_eq!(ext.sentences.len(), 2);
        assert_eq!(ext.dim(), Some(3));
        let corpus = parse_corpus("t", "Mary|NP saw|(S\\NP)/NP John|NP\nok|S").unwrap();
        let rows = ext.align(&corpus).unwrap();
        let enc = Encoder::External { dim: 3 };
        let mut g = Graph::new();
        let store = ParameterStore::new();
        let h0 = enc
            .encode(&mut g, &store, &SentenceInput::Embeddings(rows[0].clone()), &mut Mode::eval())
            .unwrap();
        assert_eq!(g.value(h0).data(), &[0.5, 1.0, -2.0, 0.0, 0.0, 0.0, 1e-3, 2.5, 3.0]);
    }

    #[test]
    fn external_errors() {
        assert!(matches!(
            ExternalEmbeddings::parse("a 1 2\nb 1\n"),
            Err(EncoderError::Format { line: 2, .. })
        ));
        assert!(matches!(ExternalEmbeddings::parse("a x\n"), Err(EncoderError::Format { line: 1, .. })));
        let ext = ExternalEmbeddings::parse("a 1\nb 1\n").unwrap();
        let corpus = parse_corpus("t", "a|NP b|S c|N").unwrap();
        assert!(matches!(
            ext.align(&corpus),
            Err(EncoderError::LengthMismatch { sentence: 0, expected: 3, found: 2 })
        ));
        let corpus = parse_corpus("t", "a|NP c|S").unwrap();
        assert!(matches!(ext.align(&corpus), Err(EncoderError::WordMismatch { token: 1, .. })));
        let enc = Encoder::External { dim: 2 };
        let mut g = Graph::new();
        let err = enc.encode(&mut g, &ParameterStore::new(), &SentenceInput::Words(vec![1]), &mut Mode::eval());
        assert!(matches!(err, Err(EncoderError::WrongInput)));
    }
}
