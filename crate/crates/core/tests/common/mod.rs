#![allow(dead_code)]

use treetag::corpus::{parse_corpus, Corpus};
use treetag::decoders::{DecoderConfig, DecoderVariant, ModelConfig, Tagger};
use treetag::encoder::{EncoderConfig, EncoderMode};

pub fn corpus(lines: &[&str]) -> Corpus {
    parse_corpus("fixture", &lines.join("\n")).unwrap()
}

pub fn config(variant: DecoderVariant, dim: usize) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            mode: EncoderMode::TrainableBiRecurrent,
            embed_dim: dim,
            hidden_dim: dim,
        },
        decoder: DecoderConfig::new(variant),
        dropout: 0.0,
    }
}

pub fn tagger(variant: DecoderVariant, train: &Corpus, seed: u64) -> Tagger {
    Tagger::new(config(variant, 8), train, seed).unwrap()
}

/// Sets every parameter of the output layer to zero and its bias from `bias`.
pub fn force_output_bias(t: &mut Tagger, bias: &[f64]) {
    let w = t.store.id("head.mlp.output.w").unwrap();
    let b = t.store.id("head.mlp.output.b").unwrap();
    t.store.value_mut(w).fill(0.0);
    t.store.value_mut(b).data_mut().copy_from_slice(bias);
}
