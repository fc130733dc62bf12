use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Corpus, CategoryVocab, FrequencyBin};
use crate::category::Category;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandCounts {
    pub types: usize,
    pub tokens: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyBands {
    pub ge100: BandCounts,
    pub f10to99: BandCounts,
    pub f1to9: BandCounts,
    pub oov: BandCounts,
}

impl FrequencyBands {
    pub fn get_mut(&mut self, bin: FrequencyBin) -> &mut BandCounts {
        match bin {
            FrequencyBin::GE100 => &mut self.ge100,
            FrequencyBin::F10to99 => &mut self.f10to99,
            FrequencyBin::F1to9 => &mut self.f1to9,
            FrequencyBin::OOV => &mut self.oov,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthCount {
    pub depth: usize,
    pub types: usize,
    pub tokens: usize,
}

/// Summary of a corpus, serialized with these exact field names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub name: String,
    pub sentences: usize,
    pub tokens: usize,
    pub types: usize,
    pub atomic_types: usize,
    /// Frequencies come from the reference vocabulary when one is given,
    /// otherwise from the corpus itself (and `oov` stays zero).
    pub frequency_bands: FrequencyBands,
    /// One entry per depth from 0 to the deepest category present.
    pub depths: Vec<DepthCount>,
}

pub fn corpus_stats(c: &Corpus, reference: Option<&CategoryVocab>) -> StatsReport {
    let mut freq: HashMap<&Category, usize> = HashMap::new();
    for t in c.tokens() {
        *freq.entry(&t.gold).or_insert(0) += 1;
    }
    let mut bands = FrequencyBands::default();
    let mut by_depth: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (&cat, &n) in &freq {
        let f = reference.map_or(n, |v| v.frequency(cat));
        let band = bands.get_mut(FrequencyBin::of_frequency(f));
        band.types += 1;
        band.tokens += n;
        let d = by_depth.entry(cat.depth()).or_default();
        d.0 += 1;
        d.1 += n;
    }
    let max_depth = by_depth.keys().next_back().copied();
    let depths = max_depth.map_or(Vec::new(), |m| {
        (0..=m)
            .map(|depth| {
                let (types, tokens) = by_depth.get(&depth).copied().unwrap_or_default();
                DepthCount { depth, types, tokens }
            })
            .collect()
    });
    StatsReport {
        name: c.name.clone(),
        sentences: c.len(),
        tokens: c.token_count(),
        types: freq.len(),
        atomic_types: freq.keys().filter(|c| c.is_atomic()).count(),
        frequency_bands: bands,
        depths,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;
    use crate::corpus::fixtures::corpus;

    #[test]
    fn empty_corpus_is_all_zeros() {
        let r = corpus_stats(&Corpus::new("e", vec![]), None);
        assert_eq!((r.sentences, r.tokens, r.types, r.atomic_types), (0, 0, 0, 0));
        assert_eq!(r.frequency_bands, FrequencyBands::default());
        assert!(r.depths.is_empty());
    }

    #[test]
    fn three_sentence_fixture() {
        let c = corpus(&[
            "Mary|NP saw|(S\\NP)/NP John|NP",
            "John|NP slept|S\\NP",
            "the|NP/N dog|N barked|S\\NP",
        ]);
        let r = corpus_stats(&c, None);
        assert_eq!(r.sentences, 3);
        assert_eq!(r.tokens, 8);
        // NP x3, (S\NP)/NP, S\NP x2, NP/N, N
        assert_eq!(r.types, 5);
        assert_eq!(r.atomic_types, 2);
        assert_eq!(r.frequency_bands.f1to9, BandCounts { types: 5, tokens: 8 });
        assert_eq!(
            r.depths,
            vec![
                DepthCount { depth: 0, types: 2, tokens: 4 },
                DepthCount { depth: 1, types: 2, tokens: 3 },
                DepthCount { depth: 2, types: 1, tokens: 1 },
            ]
        );
        let json = serde_json::to_value(&r).unwrap();
        for key in ["name", "sentences", "tokens", "types", "atomic_types", "frequency_bands", "depths"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn reference_vocab_bins_by_training_frequency() {
        let train_line = ["w|NP"; 12].join(" ");
        let train = corpus(&[&train_line, "x|S"]);
        let v = build_vocab(&train, 1).unwrap();
        let test = corpus(&["a|NP b|S c|N"]);
        let r = corpus_stats(&test, Some(&v));
        assert_eq!(r.frequency_bands.f10to99, BandCounts { types: 1, tokens: 1 });
        assert_eq!(r.frequency_bands.f1to9, BandCounts { types: 1, tokens: 1 });
        assert_eq!(r.frequency_bands.oov, BandCounts { types: 1, tokens: 1 });
    }
}
