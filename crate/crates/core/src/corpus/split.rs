use std::collections::HashMap;

use super::{Corpus, CorpusError};
use crate::category::Category;

/// Moves every sentence with a token whose type occurs fewer than `threshold`
/// times in `corpus` to a new test side. Frequencies are counted once, before
/// any sentence moves. Order is preserved on both sides.
pub fn redistribute_split(corpus: &Corpus, threshold: usize) -> Result<(Corpus, Corpus), CorpusError> {
    if threshold < 2 {
        return Err(CorpusError::InvalidThreshold(threshold));
    }
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut freq: HashMap<&Category, usize> = HashMap::new();
    for t in corpus.tokens() {
        *freq.entry(&t.gold).or_insert(0) += 1;
    }
    let (test, train): (Vec<_>, Vec<_>) = corpus
        .sentences
        .iter()
        .cloned()
        .partition(|s| s.categories().any(|c| freq[c] < threshold));
    Ok((
        Corpus::new(format!("{}.train", corpus.name), train),
        Corpus::new(format!("{}.test", corpus.name), test),
    ))
}


#[cfg(test)]
mod tests {
    use super::strategies::corpus_strategy;
    use super::*;
    use crate::corpus::build_vocab;
    use crate::corpus::fixtures::corpus;
    use proptest::prelude::*;

    #[test]
    fn singleton_goes_to_test() {
        let c = corpus(&["a|NP b|S", "c|Z d|NP", "e|NP f|S", "g|S h|NP"]);
        let (train, test) = redistribute_split(&c, 2).unwrap();
        assert_eq!(test.sentences, vec![c.sentences[1].clone()]);
        assert_eq!(train.sentences, vec![c.sentences[0].clone(), c.sentences[2].clone(), c.sentences[3].clone()]);
        assert_eq!(train.name, "fixture.train");
        assert_eq!(test.name, "fixture.test");
    }

    #[test]
    fn threshold_above_all_frequencies() {
        let c = corpus(&["a|NP b|S", "c|NP"]);
        let (train, test) = redistribute_split(&c, 100).unwrap();
        assert!(train.is_empty());
        assert_eq!(test.len(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        let c = corpus(&["a|NP"]);
        assert!(matches!(redistribute_split(&c, 1), Err(CorpusError::InvalidThreshold(1))));
        assert!(matches!(redistribute_split(&Corpus::default(), 10), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn ten_sentence_fixture() {
        // frequencies: NP 8, S 5, N 3, PP 2, S/NP 1, (S\NP)/NP 1
        let lines = [
            "a|NP b|S",
            "c|NP d|N",
            "e|PP f|NP",
            "g|S h|S/NP",
            "i|NP",
            "j|N k|N l|S",
            "m|NP n|(S\\NP)/NP o|NP",
            "p|PP q|S",
            "r|NP s|NP",
            "t|S",
        ];
        let c = corpus(&lines);
        let (train, test) = redistribute_split(&c, 3).unwrap();
        let idx = |side: &Corpus| -> Vec<usize> {
            side.sentences
                .iter()
                .map(|s| c.sentences.iter().position(|x| x == s).unwrap())
                .collect()
        };
        assert_eq!(idx(&test), [2, 3, 6, 7]);
        assert_eq!(idx(&train), [0, 1, 4, 5, 8, 9]);
    }

    proptest! {
        #[test]
        fn split_partitions_by_definition(c in corpus_strategy(12), threshold in 2usize..5) {
            prop_assume!(!c.is_empty());
            let (train, test) = redistribute_split(&c, threshold).unwrap();
            prop_assert_eq!(train.len() + test.len(), c.len());
            // brute-force recount
            let count = |cat: &Category| c.tokens().filter(|t| &t.gold == cat).count();
            let rare = |s: &crate::corpus::Sentence| s.categories().any(|cat| count(cat) < threshold);
            prop_assert!(test.sentences.iter().all(rare));
            prop_assert!(!train.sentences.iter().any(rare));
            // order-preserving merge reproduces the input
            let (mut i, mut j) = (0, 0);
            for s in &c.sentences {
                if i < train.len() && &train.sentences[i] == s && !rare(s) {
                    i += 1;
                } else {
                    prop_assert_eq!(&test.sentences[j], s);
                    j += 1;
                }
            }
        }

        #[test]
        fn vocab_frequencies_sum_to_tokens(c in corpus_strategy(12), threshold in 1usize..4) {
            prop_assume!(!c.is_empty());
            let v = build_vocab(&c, threshold).unwrap();
            prop_assert_eq!(v.frequencies().map(|(_, f)| f).sum::<usize>(), c.token_count());
            prop_assert!(v.frequencies().all(|(_, f)| f >= 1));
            prop_assert!(v.classes().iter().all(|cat| v.frequency(cat) >= threshold));
            let excluded = v.frequencies().filter(|(_, f)| *f < threshold).count();
            prop_assert_eq!(v.classes().len() + excluded, v.type_count());
        }
    }
}
