use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError};
use crate::category::{parse_infix_with_max_depth, Category};

/// Stand-in class for sub-threshold categories. The brackets keep it from
/// parsing as a category.
pub const UNKNOWN_SYMBOL: &str = "[UNKNOWN]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyBin {
    GE100,
    F10to99,
    F1to9,
    OOV,
}

impl FrequencyBin {
    pub const ALL: [FrequencyBin; 4] = [Self::GE100, Self::F10to99, Self::F1to9, Self::OOV];

    pub fn of_frequency(freq: usize) -> Self {
        match freq {
            0 => Self::OOV,
            1..=9 => Self::F1to9,
            10..=99 => Self::F10to99,
            _ => Self::GE100,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::GE100 => ">=100",
            Self::F10to99 => "10-99",
            Self::F1to9 => "1-9",
            Self::OOV => "OOV",
        }
    }
}

/// Training frequencies of category types plus the closed class set a
/// nonconstructive tagger predicts from.
///
/// Classes are the types with frequency >= threshold, by descending frequency
/// and then infix string. When threshold > 1 an unknown class follows them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryVocab {
    frequencies: HashMap<Category, usize>,
    threshold: usize,
    classes: Vec<Category>,
    class_index: HashMap<Category, usize>,
    token_count: usize,
}

impl CategoryVocab {
    pub fn from_frequencies(frequencies: HashMap<Category, usize>, threshold: usize) -> Result<Self, CorpusError> {
        if threshold == 0 {
            return Err(CorpusError::InvalidThreshold(threshold));
        }
        let mut classes: Vec<(Category, usize, String)> = frequencies
            .iter()
            .filter(|(_, &f)| f >= threshold)
            .map(|(c, &f)| (c.clone(), f, c.to_infix()))
            .collect();
        classes.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.2.cmp(&b.2)));
        let classes: Vec<Category> = classes.into_iter().map(|(c, _, _)| c).collect();
        let class_index = classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        let token_count = frequencies.values().sum();
        Ok(Self {
            frequencies,
            threshold,
            classes,
            class_index,
            token_count,
        })
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn frequency(&self, cat: &Category) -> usize {
        self.frequencies.get(cat).copied().unwrap_or(0)
    }

    pub fn contains(&self, cat: &Category) -> bool {
        self.frequencies.contains_key(cat)
    }

    pub fn type_count(&self) -> usize {
        self.frequencies.len()
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    pub fn frequencies(&self) -> impl Iterator<Item = (&Category, usize)> {
        self.frequencies.iter().map(|(c, &f)| (c, f))
    }

    pub fn has_unknown(&self) -> bool {
        self.threshold > 1
    }

    /// Predictable categories, excluding the unknown class.
    pub fn classes(&self) -> &[Category] {
        &self.classes
    }

    /// Number of output classes including the unknown class.
    pub fn class_count(&self) -> usize {
        self.classes.len() + usize::from(self.has_unknown())
    }

    pub fn unknown_index(&self) -> Option<usize> {
        self.has_unknown().then_some(self.classes.len())
    }

    /// Training target for a gold category: its own class, the unknown class
    /// when it is sub-threshold, or `None` when there is no unknown class.
    pub fn class_of(&self, cat: &Category) -> Option<usize> {
        self.class_index.get(cat).copied().or(self.unknown_index())
    }

    /// `None` for the unknown class.
    pub fn class_category(&self, index: usize) -> Option<&Category> {
        self.classes.get(index)
    }

    pub fn class_label(&self, index: usize) -> String {
        match self.classes.get(index) {
            Some(c) => c.to_infix(),
            None => UNKNOWN_SYMBOL.to_string(),
        }
    }
}

pub fn build_vocab(train: &Corpus, threshold: usize) -> Result<CategoryVocab, CorpusError> {
    if train.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut frequencies = HashMap::new();
    for t in train.tokens() {
        *frequencies.entry(t.gold.clone()).or_insert(0) += 1;
    }
    CategoryVocab::from_frequencies(frequencies, threshold)
}

pub fn frequency_bin(cat: &Category, vocab: &CategoryVocab) -> FrequencyBin {
    FrequencyBin::of_frequency(vocab.frequency(cat))
}

#[derive(Serialize, Deserialize)]
struct VocabRecord {
    threshold: usize,
    frequencies: Vec<(String, usize)>,
}

impl Serialize for CategoryVocab {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut frequencies: Vec<(String, usize)> =
            self.frequencies.iter().map(|(c, &f)| (c.to_infix(), f)).collect();
        frequencies.sort();
        VocabRecord {
            threshold: self.threshold,
            frequencies,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CategoryVocab {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let record = VocabRecord::deserialize(deserializer)?;
        let mut frequencies = HashMap::new();
        for (text, f) in record.frequencies {
            let cat = parse_infix_with_max_depth(&text, usize::MAX).map_err(D::Error::custom)?;
            if f == 0 || frequencies.insert(cat, f).is_some() {
                return Err(D::Error::custom(format!("bad vocabulary entry {text}")));
            }
        }
        CategoryVocab::from_frequencies(frequencies, record.threshold).map_err(D::Error::custom)
    }
}
