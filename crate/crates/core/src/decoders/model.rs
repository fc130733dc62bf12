use std::collections::HashMap;
use std::fs;
use std::path::Path;

use accurate::sum::i_fast_sum_in_place;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    addrmlp_features, argmax, prefix_addresses, DecoderError, DecoderVariant, LabelInventory, ModelConfig, Prediction,
};
use crate::autodiff::{
    attention_mix, masked_softmax, Gradients, Graph, GruCell, Linear, Mlp2, Mode, ParameterCheckpoint,
    ParameterStore, RowMask, Tensor, Var,
};
use crate::category::{from_prefix_tokens, Address, Category, NodeLabel, Slash};
use crate::corpus::{build_vocab, CategoryVocab, Corpus, Sentence};
use crate::encoder::{Encoder, EncoderMode, ExternalEmbeddings, SentenceInput, WordVocab};

pub const MODEL_FORMAT: &str = "treetag-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone)]
enum Head {
    Mlp { mlp: Mlp2 },
    SeqRnn { mlp: Mlp2, step: GruCell },
    TreeRnn { mlp: Mlp2, left: GruCell, right: GruCell },
    AddrMlp { mlp: Mlp2, features: Linear },
}

impl Head {
    fn new(
        store: &mut ParameterStore,
        config: &ModelConfig,
        labels: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, DecoderError> {
        let d = config.encoder.hidden_dim;
        let mlp = Mlp2::new(store, "head.mlp", d, labels, rng)?;
        Ok(match config.decoder.variant {
            DecoderVariant::MlpThresholded | DecoderVariant::MlpFull => Head::Mlp { mlp },
            DecoderVariant::SeqRNN => Head::SeqRnn {
                mlp,
                step: GruCell::new(store, "head.step", d, d, rng)?,
            },
            DecoderVariant::TreeRNN => Head::TreeRnn {
                mlp,
                left: GruCell::new(store, "head.left", d, d, rng)?,
                right: GruCell::new(store, "head.right", d, d, rng)?,
            },
            DecoderVariant::AddrMLP => Head::AddrMlp {
                mlp,
                features: Linear::new(store, "head.features", 2 * config.decoder.max_depth, d, rng)?,
            },
        })
    }

    fn from_store(store: &ParameterStore, config: &ModelConfig) -> Result<Self, DecoderError> {
        let mlp = Mlp2::from_store(store, "head.mlp")?;
        Ok(match config.decoder.variant {
            DecoderVariant::MlpThresholded | DecoderVariant::MlpFull => Head::Mlp { mlp },
            DecoderVariant::SeqRNN => Head::SeqRnn {
                mlp,
                step: GruCell::from_store(store, "head.step")?,
            },
            DecoderVariant::TreeRNN => Head::TreeRnn {
                mlp,
                left: GruCell::from_store(store, "head.left")?,
                right: GruCell::from_store(store, "head.right")?,
            },
            DecoderVariant::AddrMLP => Head::AddrMlp {
                mlp,
                features: Linear::from_store(store, "head.features")?,
            },
        })
    }

    fn mlp(&self) -> &Mlp2 {
        match self {
            Head::Mlp { mlp } | Head::SeqRnn { mlp, .. } | Head::TreeRnn { mlp, .. } | Head::AddrMlp { mlp, .. } => mlp,
        }
    }
}

/// One teacher-forced decision: the distribution at a node given gold ancestors.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDecision {
    pub address: Address,
    pub distribution: Vec<f64>,
    /// Gold label (constructive) or class (MLP). `None` when the gold
    /// category has no class in a non-thresholded vocabulary.
    pub gold: Option<usize>,
}

/// Output of a teacher-forced pass over one sentence: one logit row per decision.
struct Forced {
    logits: Var,
    targets: Vec<Option<usize>>,
    /// Rows where slashes are banned.
    masked: Vec<bool>,
    sites: Vec<(usize, Address)>,
}

/// A complete tagging model: encoder, head, label sets and parameters.
#[derive(Debug, Clone)]
pub struct Tagger {
    config: ModelConfig,
    inventory: LabelInventory,
    vocab: CategoryVocab,
    words: WordVocab,
    pub store: ParameterStore,
    encoder: Encoder,
    head: Head,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    inventory: LabelInventory,
    inventory_fingerprint: String,
    category_vocab: CategoryVocab,
    word_vocab: WordVocab,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    header: CheckpointHeader,
    parameters: ParameterCheckpoint,
}

impl Tagger {
    /// Label sets come from `train`; parameters are initialized from `seed`.
    pub fn new(config: ModelConfig, train: &Corpus, seed: u64) -> Result<Self, DecoderError> {
        config.validate()?;
        let vocab = build_vocab(train, config.decoder.vocab_threshold())?;
        let inventory = LabelInventory::from_corpus(train);
        let words = WordVocab::build(train);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let encoder = Encoder::new(&mut store, &config.encoder, words.len(), &mut rng)?;
        let labels = match config.decoder.variant.is_constructive() {
            true => inventory.len(),
            false => vocab.class_count(),
        };
        let head = Head::new(&mut store, &config, labels, &mut rng)?;
        Ok(Self {
            config,
            inventory,
            vocab,
            words,
            store,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> DecoderVariant {
        self.config.decoder.variant
    }

    pub fn inventory(&self) -> &LabelInventory {
        &self.inventory
    }

    pub fn vocab(&self) -> &CategoryVocab {
        &self.vocab
    }

    pub fn words(&self) -> &WordVocab {
        &self.words
    }

    /// Output weight of the final MLP layer, whose rows embed labels.
    pub fn output_weight(&self) -> &Tensor {
        self.store.value(self.head.mlp().output.w)
    }

    /// Embeddings of `labels` as seen by the recurrent heads.
    pub fn label_embeddings(&self, labels: &[usize]) -> Result<Tensor, DecoderError> {
        let mut g = Graph::new();
        let e = self.head.mlp().label_embeddings(&mut g, &self.store, labels)?;
        Ok(g.value(e).clone())
    }

    pub fn sentence_input(&self, sentence: &Sentence, external: Option<&Tensor>) -> Result<SentenceInput, DecoderError> {
        match self.config.encoder.mode {
            EncoderMode::TrainableBiRecurrent => {
                Ok(SentenceInput::Words(sentence.words().map(|w| self.words.index_of(w)).collect()))
            }
            EncoderMode::ExternalEmbeddings => {
                let rows = external.ok_or(DecoderError::MissingEmbeddings)?;
                if rows.rows() != sentence.len() {
                    return Err(DecoderError::GoldMismatch {
                        tokens: rows.rows(),
                        golds: sentence.len(),
                    });
                }
                Ok(SentenceInput::Embeddings(rows.clone()))
            }
        }
    }

    /// Encoder inputs for every sentence of `corpus`.
    pub fn prepare(&self, corpus: &Corpus, external: Option<&ExternalEmbeddings>) -> Result<Vec<SentenceInput>, DecoderError> {
        let aligned = match (self.config.encoder.mode, external) {
            (EncoderMode::ExternalEmbeddings, Some(e)) => Some(e.align(corpus)?),
            (EncoderMode::ExternalEmbeddings, None) => return Err(DecoderError::MissingEmbeddings),
            _ => None,
        };
        corpus
            .sentences
            .iter()
            .enumerate()
            .map(|(i, s)| self.sentence_input(s, aligned.as_ref().map(|a| &a[i])))
            .collect()
    }

    fn mix(&self, g: &mut Graph, h: Var, h0: Var) -> Result<Var, DecoderError> {
        Ok(match self.config.decoder.use_attention {
            true => attention_mix(g, h, h0)?,
            false => h,
        })
    }

    fn label_index(&self, label: &NodeLabel) -> Result<usize, DecoderError> {
        self.inventory
            .index_of(label)
            .ok_or_else(|| DecoderError::UnknownLabel(label.to_string()))
    }

    fn check_depth(&self, gold: &Category) -> Result<(), DecoderError> {
        let max = self.config.decoder.max_depth;
        match gold.depth() {
            depth if depth > max && self.variant().is_constructive() => Err(DecoderError::DepthExceeded { depth, max }),
            _ => Ok(()),
        }
    }

    fn forced(&self, g: &mut Graph, input: &SentenceInput, golds: &[&Category], mode: &mut Mode) -> Result<Forced, DecoderError> {
        if golds.len() != input.len() {
            return Err(DecoderError::GoldMismatch {
                tokens: input.len(),
                golds: golds.len(),
            });
        }
        for gold in golds {
            self.check_depth(gold)?;
        }
        let store = &self.store;
        let max_depth = self.config.decoder.max_depth;
        let h0 = self.encoder.encode(g, store, input, mode)?;
        let n = golds.len();
        match &self.head {
            Head::Mlp { mlp } => {
                let x = self.mix(g, h0, h0)?;
                let logits = mlp.logits(g, store, x, mode)?;
                Ok(Forced {
                    logits,
                    targets: golds.iter().map(|c| self.vocab.class_of(c)).collect(),
                    masked: vec![false; n],
                    sites: (0..n).map(|k| (k, Address::ROOT)).collect(),
                })
            }
            Head::AddrMlp { mlp, features } => {
                let mut sites = Vec::new();
                let mut targets = Vec::new();
                let mut rows = Vec::new();
                let mut feats = Vec::new();
                for (k, gold) in golds.iter().enumerate() {
                    for (address, label) in gold.enumerate_addresses() {
                        let slashes = ancestor_slashes(gold, address);
                        feats.extend(addrmlp_features(address, &slashes, max_depth)?);
                        rows.push(k);
                        targets.push(Some(self.label_index(&label)?));
                        sites.push((k, address));
                    }
                }
                let f = g.input(Tensor::from_vec(rows.len(), 2 * max_depth, feats));
                let proj = features.forward(g, store, f)?;
                let base = g.gather_rows(h0, &rows)?;
                let hidden = g.add(base, proj)?;
                let x = self.mix(g, hidden, h0)?;
                let logits = mlp.logits(g, store, x, mode)?;
                let masked = sites.iter().map(|(_, a)| a.depth() == max_depth).collect();
                Ok(Forced {
                    logits,
                    targets,
                    masked,
                    sites,
                })
            }
            Head::TreeRnn { mlp, left, right } => {
                let mut level: Vec<(usize, Address)> = (0..n).map(|k| (k, Address::ROOT)).collect();
                let mut hidden = h0;
                let mut parts = Vec::new();
                let mut out = Forced {
                    logits: h0,
                    targets: Vec::new(),
                    masked: Vec::new(),
                    sites: Vec::new(),
                };
                while !level.is_empty() {
                    let x = self.mix(g, hidden, h0)?;
                    parts.push(mlp.logits(g, store, x, mode)?);
                    let mut slash_rows = Vec::new();
                    let mut slash_labels = Vec::new();
                    for (i, &(k, address)) in level.iter().enumerate() {
                        let label = golds[k].node_at(address).expect("gold node exists");
                        let index = self.label_index(&label)?;
                        if label.is_slash() {
                            slash_rows.push(i);
                            slash_labels.push(index);
                        }
                        out.targets.push(Some(index));
                        out.masked.push(address.depth() == max_depth);
                        out.sites.push((k, address));
                    }
                    if slash_rows.is_empty() {
                        break;
                    }
                    let (next, h) = self.tree_children(g, left, right, mlp, hidden, &level, &slash_rows, &slash_labels)?;
                    level = next;
                    hidden = h;
                }
                out.logits = g.concat_rows(&parts)?;
                Ok(out)
            }
            Head::SeqRnn { mlp, step } => {
                let mut seqs = Vec::with_capacity(n);
                let mut addrs = Vec::with_capacity(n);
                for gold in golds {
                    let addresses = prefix_addresses(gold);
                    if addresses.len() > self.config.decoder.max_seq_len {
                        return Err(DecoderError::SequenceTooLong {
                            len: addresses.len(),
                            max: self.config.decoder.max_seq_len,
                        });
                    }
                    let labels = addresses
                        .iter()
                        .map(|a| self.label_index(&gold.node_at(*a).expect("gold node exists")))
                        .collect::<Result<Vec<_>, _>>()?;
                    seqs.push(labels);
                    addrs.push(addresses);
                }
                let mut active: Vec<usize> = (0..n).collect();
                let mut hidden = h0;
                let mut parts = Vec::new();
                let mut out = Forced {
                    logits: h0,
                    targets: Vec::new(),
                    masked: Vec::new(),
                    sites: Vec::new(),
                };
                for t in 0.. {
                    let x = self.mix(g, hidden, h0)?;
                    parts.push(mlp.logits(g, store, x, mode)?);
                    for &k in &active {
                        out.targets.push(Some(seqs[k][t]));
                        out.masked.push(false);
                        out.sites.push((k, addrs[k][t]));
                    }
                    let keep: Vec<usize> = (0..active.len()).filter(|&i| seqs[active[i]].len() > t + 1).collect();
                    if keep.is_empty() {
                        break;
                    }
                    let prev: Vec<usize> = keep.iter().map(|&i| seqs[active[i]][t]).collect();
                    let emb = mlp.label_embeddings(g, store, &prev)?;
                    let h = g.gather_rows(hidden, &keep)?;
                    hidden = step.forward(g, store, emb, h)?;
                    active = keep.iter().map(|&i| active[i]).collect();
                }
                out.logits = g.concat_rows(&parts)?;
                Ok(out)
            }
        }
    }

    /// Children hidden states for the slash rows of a TreeRNN level: all
    /// result children, then all argument children.
    #[allow(clippy::too_many_arguments)]
    fn tree_children(
        &self,
        g: &mut Graph,
        left: &GruCell,
        right: &GruCell,
        mlp: &Mlp2,
        hidden: Var,
        level: &[(usize, Address)],
        slash_rows: &[usize],
        slash_labels: &[usize],
    ) -> Result<(Vec<(usize, Address)>, Var), DecoderError> {
        let store = &self.store;
        let parents = g.gather_rows(hidden, slash_rows)?;
        let emb = mlp.label_embeddings(g, store, slash_labels)?;
        let l = left.forward(g, store, emb, parents)?;
        let r = right.forward(g, store, emb, parents)?;
        let h = g.concat_rows(&[l, r])?;
        let mut next: Vec<(usize, Address)> = slash_rows.iter().map(|&i| (level[i].0, level[i].1.result_child())).collect();
        next.extend(slash_rows.iter().map(|&i| (level[i].0, level[i].1.argument_child())));
        Ok((next, h))
    }

    /// Unnormalized sum of every decision's cross-entropy for one sentence.
    /// Decisions with no target (an MLP gold outside the class set) are skipped.
    pub fn sentence_loss(
        &self,
        g: &mut Graph,
        input: &SentenceInput,
        golds: &[&Category],
        mode: &mut Mode,
    ) -> Result<Var, DecoderError> {
        let forced = self.forced(g, input, golds, mode)?;
        let keep: Vec<usize> = (0..forced.targets.len()).filter(|&i| forced.targets[i].is_some()).collect();
        let (logits, targets, masked) = if keep.len() == forced.targets.len() {
            (forced.logits, forced.targets.iter().flatten().copied().collect(), forced.masked)
        } else {
            (
                g.gather_rows(forced.logits, &keep)?,
                keep.iter().map(|&i| forced.targets[i].unwrap()).collect::<Vec<_>>(),
                keep.iter().map(|&i| forced.masked[i]).collect(),
            )
        };
        let banned = self.inventory.slash_mask();
        let mask = self.variant().is_tree().then_some(RowMask {
            banned: &banned,
            rows: &masked,
        });
        Ok(g.cross_entropy_rows(logits, &targets, mask)?)
    }

    /// Loss value and gradients for one sentence, with the loss scaled by `scale`.
    pub fn sentence_gradients(
        &self,
        input: &SentenceInput,
        sentence: &Sentence,
        mode: &mut Mode,
        scale: f64,
    ) -> Result<(f64, Gradients), DecoderError> {
        let golds: Vec<&Category> = sentence.categories().collect();
        let mut g = Graph::new();
        let loss = self.sentence_loss(&mut g, input, &golds, mode)?;
        let value = g.value(loss).data()[0];
        Ok((value, g.backward(loss, scale)?))
    }

    /// Sum of all decision cross-entropies divided by the number of tokens,
    /// evaluated without dropout. Sentence losses are summed with correct
    /// rounding, so the result does not depend on sentence order.
    pub fn batch_loss(&self, batch: &[(&SentenceInput, &Sentence)]) -> Result<f64, DecoderError> {
        let tokens: usize = batch.iter().map(|(_, s)| s.len()).sum();
        let mut losses = Vec::with_capacity(batch.len());
        for (input, sentence) in batch {
            let golds: Vec<&Category> = sentence.categories().collect();
            let mut g = Graph::new();
            let loss = self.sentence_loss(&mut g, input, &golds, &mut Mode::eval())?;
            losses.push(g.value(loss).data()[0]);
        }
        let total = i_fast_sum_in_place(&mut losses);
        Ok(if tokens == 0 { 0.0 } else { total / tokens as f64 })
    }

    /// Per-decision distributions for token `token`, conditioned on gold
    /// ancestors. Tree decoders list nodes breadth-first, SeqRNN in emission order.
    pub fn teacher_forced_score(
        &self,
        input: &SentenceInput,
        golds: &[&Category],
        token: usize,
    ) -> Result<Vec<ScoredDecision>, DecoderError> {
        let mut g = Graph::new();
        let forced = self.forced(&mut g, input, golds, &mut Mode::eval())?;
        let banned = self.inventory.slash_mask();
        let logits = g.value(forced.logits);
        let mut out: Vec<ScoredDecision> = forced
            .sites
            .iter()
            .enumerate()
            .filter(|(_, (k, _))| *k == token)
            .map(|(i, &(_, address))| ScoredDecision {
                address,
                distribution: masked_softmax(logits.row(i), forced.masked[i].then_some(&banned[..])),
                gold: forced.targets[i],
            })
            .collect();
        if self.variant().is_tree() {
            out.sort_by_key(|d| d.address);
        }
        Ok(out)
    }

    /// Greedy decoding of every token in a sentence.
    pub fn tag(&self, input: &SentenceInput) -> Result<Vec<Prediction>, DecoderError> {
        let mut g = Graph::new();
        let store = &self.store;
        let mut mode = Mode::eval();
        let h0 = self.encoder.encode(&mut g, store, input, &mut mode)?;
        let n = input.len();
        match &self.head {
            Head::Mlp { mlp } => {
                let x = self.mix(&mut g, h0, h0)?;
                let logits = mlp.logits(&mut g, store, x, &mut mode)?;
                Ok((0..n)
                    .map(|k| {
                        let i = argmax(g.value(logits).row(k), None);
                        match self.vocab.class_category(i) {
                            Some(c) => Prediction::Category(c.clone()),
                            None => Prediction::Unknown,
                        }
                    })
                    .collect())
            }
            Head::TreeRnn { .. } | Head::AddrMlp { .. } => self.decode_tree(&mut g, h0, n),
            Head::SeqRnn { mlp, step } => {
                let cap = self.config.decoder.max_seq_len;
                let mut seqs: Vec<Vec<NodeLabel>> = vec![Vec::new(); n];
                let mut open = vec![1usize; n];
                let mut active: Vec<usize> = (0..n).collect();
                let mut hidden = h0;
                loop {
                    let x = self.mix(&mut g, hidden, h0)?;
                    let logits = mlp.logits(&mut g, store, x, &mut mode)?;
                    let mut chosen = Vec::with_capacity(active.len());
                    for (i, &k) in active.iter().enumerate() {
                        let y = argmax(g.value(logits).row(i), None);
                        let label = self.inventory.label(y).clone();
                        open[k] = open[k] - 1 + if label.is_slash() { 2 } else { 0 };
                        seqs[k].push(label);
                        chosen.push(y);
                    }
                    let keep: Vec<usize> = (0..active.len())
                        .filter(|&i| open[active[i]] > 0 && seqs[active[i]].len() < cap)
                        .collect();
                    if keep.is_empty() {
                        break;
                    }
                    let prev: Vec<usize> = keep.iter().map(|&i| chosen[i]).collect();
                    let emb = mlp.label_embeddings(&mut g, store, &prev)?;
                    let h = g.gather_rows(hidden, &keep)?;
                    hidden = step.forward(&mut g, store, emb, h)?;
                    active = keep.iter().map(|&i| active[i]).collect();
                }
                Ok(seqs
                    .into_iter()
                    .map(|s| match from_prefix_tokens(&s) {
                        Ok(c) => Prediction::Category(c),
                        Err(m) => Prediction::Malformed(m),
                    })
                    .collect())
            }
        }
    }

    /// Top-down breadth-first decoding shared by TreeRNN and AddrMLP. Slashes
    /// are banned at maximum depth, so every token ends in a category.
    fn decode_tree(&self, g: &mut Graph, h0: Var, n: usize) -> Result<Vec<Prediction>, DecoderError> {
        let store = &self.store;
        let max_depth = self.config.decoder.max_depth;
        let banned = self.inventory.slash_mask();
        let mut mode = Mode::eval();
        let mut nodes: Vec<HashMap<Address, NodeLabel>> = vec![HashMap::new(); n];
        let mut level: Vec<(usize, Address)> = (0..n).map(|k| (k, Address::ROOT)).collect();
        let mut slashes: Vec<Vec<Slash>> = vec![Vec::new(); n];
        let mut hidden = h0;
        while !level.is_empty() {
            let h = match &self.head {
                Head::AddrMlp { features, .. } => {
                    let mut feats = Vec::with_capacity(level.len() * 2 * max_depth);
                    for (i, &(_, address)) in level.iter().enumerate() {
                        feats.extend(addrmlp_features(address, &slashes[i], max_depth)?);
                    }
                    let f = g.input(Tensor::from_vec(level.len(), 2 * max_depth, feats));
                    let proj = features.forward(g, store, f)?;
                    let rows: Vec<usize> = level.iter().map(|(k, _)| *k).collect();
                    let base = g.gather_rows(h0, &rows)?;
                    g.add(base, proj)?
                }
                _ => hidden,
            };
            let mlp = self.head.mlp();
            let x = self.mix(g, h, h0)?;
            let logits = mlp.logits(g, store, x, &mut mode)?;
            let mut slash_rows = Vec::new();
            let mut slash_labels = Vec::new();
            for (i, &(k, address)) in level.iter().enumerate() {
                let mask = (address.depth() == max_depth).then_some(&banned[..]);
                let y = argmax(g.value(logits).row(i), mask);
                let label = self.inventory.label(y).clone();
                if label.is_slash() {
                    slash_rows.push(i);
                    slash_labels.push(y);
                }
                nodes[k].insert(address, label);
            }
            if slash_rows.is_empty() {
                break;
            }
            // children are ordered all result children, then all argument children
            let mut next_slashes: Vec<Vec<Slash>> = slash_rows
                .iter()
                .zip(&slash_labels)
                .map(|(&i, &y)| {
                    let mut s = slashes[i].clone();
                    s.push(if y == super::FORWARD_INDEX { Slash::Forward } else { Slash::Backward });
                    s
                })
                .collect();
            next_slashes.extend_from_within(..);
            match &self.head {
                Head::TreeRnn { left, right, .. } => {
                    let (next, h) = self.tree_children(g, left, right, mlp, hidden, &level, &slash_rows, &slash_labels)?;
                    level = next;
                    hidden = h;
                }
                _ => {
                    let mut next: Vec<(usize, Address)> =
                        slash_rows.iter().map(|&i| (level[i].0, level[i].1.result_child())).collect();
                    next.extend(slash_rows.iter().map(|&i| (level[i].0, level[i].1.argument_child())));
                    level = next;
                }
            }
            slashes = next_slashes;
        }
        Ok(nodes
            .iter()
            .map(|labels| Prediction::Category(assemble(labels, Address::ROOT)))
            .collect())
    }

    /// Greedy predictions for every sentence, computed in parallel.
    pub fn tag_corpus(&self, inputs: &[SentenceInput]) -> Result<Vec<Vec<Prediction>>, DecoderError> {
        inputs.par_iter().map(|input| self.tag(input)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), DecoderError> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            header: CheckpointHeader {
                config: self.config,
                inventory: self.inventory.clone(),
                inventory_fingerprint: self.inventory.fingerprint(),
                category_vocab: self.vocab.clone(),
                word_vocab: self.words.clone(),
            },
            parameters: self.store.to_checkpoint(),
        };
        let io = |source| DecoderError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        fs::write(path, serde_json::to_string(&file)?).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, DecoderError> {
        let text = fs::read_to_string(path).map_err(|source| DecoderError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(DecoderError::Checkpoint(format!(
                "unsupported format {:?} version {}",
                file.format, file.version
            )));
        }
        let header = file.header;
        let expected = header.inventory.fingerprint();
        if header.inventory_fingerprint != expected {
            return Err(DecoderError::InventoryMismatch {
                expected,
                found: header.inventory_fingerprint,
            });
        }
        header.config.validate()?;
        let store = ParameterStore::from_checkpoint(&file.parameters)?;
        let encoder = Encoder::from_store(&store, &header.config.encoder)?;
        let head = Head::from_store(&store, &header.config)?;
        let labels = match header.config.decoder.variant.is_constructive() {
            true => header.inventory.len(),
            false => header.category_vocab.class_count(),
        };
        let rows = store.value(head.mlp().output.w).rows();
        if rows != labels {
            return Err(DecoderError::Checkpoint(format!(
                "output layer has {rows} rows but the label set has {labels}"
            )));
        }
        Ok(Self {
            config: header.config,
            inventory: header.inventory,
            vocab: header.category_vocab,
            words: header.word_vocab,
            store,
            encoder,
            head,
        })
    }
}

fn ancestor_slashes(cat: &Category, address: Address) -> Vec<Slash> {
    address
        .ancestors()
        .into_iter()
        .map(|a| match cat.node_at(a) {
            Ok(NodeLabel::Slash(s)) => s,
            _ => unreachable!("ancestors of a node are slashes"),
        })
        .collect()
}

fn assemble(labels: &HashMap<Address, NodeLabel>, at: Address) -> Category {
    match &labels[&at] {
        NodeLabel::Atom(a) => Category::Atom(a.clone()),
        NodeLabel::Slash(s) => Category::functor(
            *s,
            assemble(labels, at.result_child()),
            assemble(labels, at.argument_child()),
        ),
    }
}
