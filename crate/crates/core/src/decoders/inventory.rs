use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::category::{CategoryError, NodeLabel, Slash};
use crate::corpus::Corpus;

pub const FORWARD_INDEX: usize = 0;
pub const BACKWARD_INDEX: usize = 1;

/// Node labels a constructive decoder chooses from: the two slashes at
/// indices 0 and 1, then every training atom in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelInventory {
    labels: Vec<NodeLabel>,
    index: HashMap<NodeLabel, usize>,
}

impl LabelInventory {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let atoms = corpus
            .tokens()
            .flat_map(|t| t.gold.atoms())
            .map(|a| NodeLabel::Atom(a.clone()));
        Self::from_labels(atoms)
    }

    /// Slashes are always added; duplicates are dropped.
    pub fn from_labels(labels: impl IntoIterator<Item = NodeLabel>) -> Self {
        let mut atoms: Vec<(String, NodeLabel)> = labels
            .into_iter()
            .filter(|l| !l.is_slash())
            .map(|l| (l.to_string(), l))
            .collect();
        atoms.sort();
        atoms.dedup();
        let mut labels = vec![NodeLabel::Slash(Slash::Forward), NodeLabel::Slash(Slash::Backward)];
        labels.extend(atoms.into_iter().map(|(_, l)| l));
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Self { labels, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[NodeLabel] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &NodeLabel {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &NodeLabel) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn slash_index(slash: Slash) -> usize {
        match slash {
            Slash::Forward => FORWARD_INDEX,
            Slash::Backward => BACKWARD_INDEX,
        }
    }

    /// `true` at the slash positions: the labels banned at maximum depth.
    pub fn slash_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| i < 2).collect()
    }

    pub fn tokens(&self) -> Vec<String> {
        self.labels.iter().map(ToString::to_string).collect()
    }

    /// Hex sha256 over the label tokens, newline-terminated.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in self.tokens() {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn from_tokens(tokens: &[String]) -> Result<Self, CategoryError> {
        let labels = tokens.iter().map(|t| NodeLabel::parse(t)).collect::<Result<Vec<_>, _>>()?;
        let inv = Self::from_labels(labels.iter().cloned());
        if inv.labels != labels {
            return Err(CategoryError::InvalidAtom(format!(
                "inventory tokens are not in canonical order: {}",
                tokens.join(" ")
            )));
        }
        Ok(inv)
    }
}

impl Serialize for LabelInventory {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.tokens().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LabelInventory {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(deserializer)?;
        Self::from_tokens(&tokens).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;

    #[test]
    fn slashes_first_then_sorted_atoms() {
        let c = parse_corpus("t", "Mary|NP saw|(S[dcl]\\NP)/NP ,|, x|N").unwrap();
        let inv = LabelInventory::from_corpus(&c);
        assert_eq!(inv.tokens(), ["/", "\\", ",", "N", "NP", "S[dcl]"]);
        assert_eq!(inv.index_of(&NodeLabel::parse("NP").unwrap()), Some(4));
        assert_eq!(inv.index_of(&NodeLabel::parse("S").unwrap()), None);
        assert_eq!(inv.slash_mask(), [true, true, false, false, false, false]);
    }

    #[test]
    fn serde_and_fingerprint() {
        let c = parse_corpus("t", "a|S/NP b|NP").unwrap();
        let inv = LabelInventory::from_corpus(&c);
        let json = serde_json::to_string(&inv).unwrap();
        let back: LabelInventory = serde_json::from_str(&json).unwrap();
        assert_eq!(back, inv);
        assert_eq!(back.fingerprint(), inv.fingerprint());
        assert_eq!(inv.fingerprint().len(), 64);
        let other = LabelInventory::from_labels([NodeLabel::parse("N").unwrap()]);
        assert_ne!(other.fingerprint(), inv.fingerprint());
        assert!(serde_json::from_str::<LabelInventory>(r#"["NP","/","\\"]"#).is_err());
    }
}
