//! CCG category algebra.
//!
//! A [`Category`] is a binary tree whose internal nodes are slashes and whose
//! leaves are atomic labels. The left child of a slash is the *result*, the
//! right child is the *argument*, so `(S\NP)/NP` is the tree
//!
//! ```text
//!         /
//!       /   \
//!      \     NP
//!     / \
//!    S   NP
//! ```
//!
//! This module provides the infix notation used in corpora, the prefix
//! (pre-order) token serialization used by sequential decoders, binary node
//! addressing, and structural comparison of two categories.

mod address;
mod diff;
mod infix;
mod prefix;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use address::{Address, MAX_ADDRESS_DEPTH};
pub use diff::{diff, CategoryDiff, Relation};
pub use infix::{parse_infix, parse_infix_with_max_depth, to_infix};
pub use prefix::{format_prefix_tokens, from_prefix_tokens, to_prefix_tokens, Malformed, MalformedKind};

/// Default upper bound on category depth.
pub const DEFAULT_MAX_DEPTH: usize = 6;

const RESERVED: [char; 7] = ['(', ')', '/', '\\', '[', ']', '|'];

pub(crate) fn is_reserved(c: char) -> bool {
    RESERVED.contains(&c) || c.is_whitespace()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CategoryError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("category depth {depth} exceeds the maximum of {max}")]
    DepthExceeded { depth: usize, max: usize },
    #[error("no node at address {0}")]
    NoSuchNode(Address),
    #[error("invalid atom label {0:?}")]
    InvalidAtom(String),
}

/// An atomic category such as `NP` or `S[dcl]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AtomLabel {
    base: String,
    attribute: Option<String>,
}

impl AtomLabel {
    pub fn new(base: &str, attribute: Option<&str>) -> Result<Self, CategoryError> {
        let valid = |s: &str| !s.is_empty() && !s.chars().any(is_reserved);
        if !valid(base) || attribute.is_some_and(|a| !valid(a)) {
            let shown = match attribute {
                Some(a) => format!("{base}[{a}]"),
                None => base.to_string(),
            };
            return Err(CategoryError::InvalidAtom(shown));
        }
        Ok(Self {
            base: base.to_string(),
            attribute: attribute.map(str::to_string),
        })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn attribute(&self) -> Option<&str> {
        self.attribute.as_deref()
    }
}

impl fmt::Display for AtomLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.attribute {
            Some(attr) => write!(f, "{}[{}]", self.base, attr),
            None => f.write_str(&self.base),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slash {
    Forward,
    Backward,
}

impl Slash {
    pub fn symbol(self) -> char {
        match self {
            Slash::Forward => '/',
            Slash::Backward => '\\',
        }
    }
}

impl fmt::Display for Slash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// The label carried by a single tree node: a slash or an atom.
///
/// This is also the token type of the prefix serialization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeLabel {
    Slash(Slash),
    Atom(AtomLabel),
}

impl NodeLabel {
    pub fn is_slash(&self) -> bool {
        matches!(self, NodeLabel::Slash(_))
    }

    /// Parses a single prefix token: `/`, `\` or an atom.
    pub fn parse(token: &str) -> Result<Self, CategoryError> {
        match token {
            "/" => Ok(NodeLabel::Slash(Slash::Forward)),
            "\\" => Ok(NodeLabel::Slash(Slash::Backward)),
            _ => match parse_infix_with_max_depth(token, 0)? {
                Category::Atom(atom) => Ok(NodeLabel::Atom(atom)),
                Category::Functor { .. } => Err(CategoryError::InvalidAtom(token.to_string())),
            },
        }
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeLabel::Slash(s) => write!(f, "{s}"),
            NodeLabel::Atom(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Atom(AtomLabel),
    Functor {
        slash: Slash,
        result: Box<Category>,
        argument: Box<Category>,
    },
}

impl Category {
    pub fn atom(base: &str) -> Self {
        Category::Atom(AtomLabel::new(base, None).expect("valid atom base"))
    }

    pub fn functor(slash: Slash, result: Category, argument: Category) -> Self {
        Category::Functor {
            slash,
            result: Box::new(result),
            argument: Box::new(argument),
        }
    }

    pub fn forward(result: Category, argument: Category) -> Self {
        Self::functor(Slash::Forward, result, argument)
    }

    pub fn backward(result: Category, argument: Category) -> Self {
        Self::functor(Slash::Backward, result, argument)
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Category::Atom(_))
    }

    /// Length of the longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        match self {
            Category::Atom(_) => 0,
            Category::Functor { result, argument, .. } => 1 + result.depth().max(argument.depth()),
        }
    }

    /// Total node count (slashes plus atoms).
    pub fn size(&self) -> usize {
        match self {
            Category::Atom(_) => 1,
            Category::Functor { result, argument, .. } => 1 + result.size() + argument.size(),
        }
    }

    pub fn slash_count(&self) -> usize {
        (self.size() - 1) / 2
    }

    pub fn label(&self) -> NodeLabel {
        match self {
            Category::Atom(a) => NodeLabel::Atom(a.clone()),
            Category::Functor { slash, .. } => NodeLabel::Slash(*slash),
        }
    }

    /// Visits every atom label, left to right.
    pub fn atoms(&self) -> Vec<&AtomLabel> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                Category::Atom(a) => out.push(a),
                Category::Functor { result, argument, .. } => {
                    stack.push(argument);
                    stack.push(result);
                }
            }
        }
        out
    }

    /// Label at `address`: bit 0 descends to the result, bit 1 to the argument.
    pub fn node_at(&self, address: Address) -> Result<NodeLabel, CategoryError> {
        self.subtree_at(address).map(Category::label)
    }

    pub fn subtree_at(&self, address: Address) -> Result<&Category, CategoryError> {
        let mut node = self;
        for bit in address.bits() {
            node = match node {
                Category::Functor { result, argument, .. } => {
                    if bit {
                        argument
                    } else {
                        result
                    }
                }
                Category::Atom(_) => return Err(CategoryError::NoSuchNode(address)),
            };
        }
        Ok(node)
    }

    /// All nodes in breadth-first order with their addresses.
    pub fn enumerate_addresses(&self) -> Vec<(Address, NodeLabel)> {
        let mut out = Vec::with_capacity(self.size());
        let mut queue = std::collections::VecDeque::from([(Address::ROOT, self)]);
        while let Some((addr, node)) = queue.pop_front() {
            out.push((addr, node.label()));
            if let Category::Functor { result, argument, .. } = node {
                queue.push_back((addr.result_child(), result));
                queue.push_back((addr.argument_child(), argument));
            }
        }
        out
    }

    pub fn to_infix(&self) -> String {
        to_infix(self)
    }

    pub fn to_prefix_tokens(&self) -> Vec<NodeLabel> {
        to_prefix_tokens(self)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_infix(self))
    }
}

impl std::str::FromStr for Category {
    type Err = CategoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_infix(s)
    }
}

impl Serialize for Category {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&to_infix(self))
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_infix_with_max_depth(&text, usize::MAX).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use proptest::prelude::*;

    pub fn atom_strategy() -> impl Strategy<Value = AtomLabel> {
        prop_oneof![
            Just(AtomLabel::new("S", None).unwrap()),
            Just(AtomLabel::new("NP", None).unwrap()),
            Just(AtomLabel::new("N", None).unwrap()),
            Just(AtomLabel::new("PP", None).unwrap()),
            Just(AtomLabel::new(",", None).unwrap()),
            Just(AtomLabel::new("S", Some("dcl")).unwrap()),
            Just(AtomLabel::new("S", Some("b")).unwrap()),
            Just(AtomLabel::new("NP", Some("nb")).unwrap()),
        ]
    }

    pub fn category_strategy(max_depth: u32) -> impl Strategy<Value = Category> {
        atom_strategy()
            .prop_map(Category::Atom)
            .prop_recursive(max_depth, 127, 2, |inner| {
                (any::<bool>(), inner.clone(), inner).prop_map(|(fwd, r, a)| {
                    let slash = if fwd { Slash::Forward } else { Slash::Backward };
                    Category::functor(slash, r, a)
                })
            })
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::category_strategy;
    use super::*;
    use proptest::prelude::*;

    fn cat(s: &str) -> Category {
        parse_infix(s).unwrap()
    }

    #[test]
    fn depth_examples() {
        assert_eq!(cat("NP").depth(), 0);
        assert_eq!(cat("(S\\NP)/NP").depth(), 2);
        assert_eq!(cat("((N\\N)\\(N\\N))/NP").depth(), 3);
    }

    #[test]
    fn size_examples() {
        assert_eq!(cat("(S\\NP)/NP").size(), 5);
        assert_eq!(cat("NP").size(), 1);
    }

    #[test]
    fn node_at_inner_argument() {
        let c = cat("(S\\NP)/NP");
        let addr = Address::from_bits(&[false, true]).unwrap();
        assert_eq!(addr.code(), 0b101);
        assert_eq!(c.node_at(addr).unwrap(), NodeLabel::Atom(AtomLabel::new("NP", None).unwrap()));
        assert_eq!(c.node_at(Address::ROOT).unwrap(), NodeLabel::Slash(Slash::Forward));
        let past_leaf = Address::from_bits(&[true, false]).unwrap();
        assert_eq!(c.node_at(past_leaf), Err(CategoryError::NoSuchNode(past_leaf)));
    }

    #[test]
    fn enumerate_addresses_bfs() {
        let c = cat("(S\\NP)/NP");
        let got: Vec<(u64, String)> = c
            .enumerate_addresses()
            .into_iter()
            .map(|(a, l)| (a.code(), l.to_string()))
            .collect();
        let want = vec![
            (0b1, "/".to_string()),
            (0b10, "\\".to_string()),
            (0b11, "NP".to_string()),
            (0b100, "S".to_string()),
            (0b101, "NP".to_string()),
        ];
        assert_eq!(got, want);
        assert_eq!(cat("NP").enumerate_addresses().len(), 1);
    }

    #[test]
    fn invalid_atoms_rejected() {
        assert!(AtomLabel::new("", None).is_err());
        assert!(AtomLabel::new("N P", None).is_err());
        assert!(AtomLabel::new("S", Some("")).is_err());
        assert!(AtomLabel::new("S", Some("a]")).is_err());
        assert!(AtomLabel::new("conj", None).is_ok());
    }

    #[test]
    fn serde_uses_infix() {
        let c = cat("(S[dcl]\\NP)/NP");
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, "\"(S[dcl]\\\\NP)/NP\"");
        let back: Category = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    fn naive_node_at(c: &Category, bits: &[bool]) -> Option<NodeLabel> {
        match (c, bits.split_first()) {
            (_, None) => Some(c.label()),
            (Category::Atom(_), Some(_)) => None,
            (Category::Functor { result, argument, .. }, Some((b, rest))) => {
                naive_node_at(if *b { argument } else { result }, rest)
            }
        }
    }

    proptest! {
        #[test]
        fn size_is_odd_and_bounds_depth(c in category_strategy(6)) {
            prop_assert_eq!(c.size(), 1 + 2 * c.slash_count());
            prop_assert!(c.depth() < c.size());
            if c.size() >= 3 {
                prop_assert!(c.depth() < c.size() - 1);
            }
        }

        #[test]
        fn node_at_matches_naive_descent(c in category_strategy(3), code in 1u64..64) {
            let addr = Address::from_code(code).unwrap();
            let bits: Vec<bool> = addr.bits().collect();
            prop_assert_eq!(c.node_at(addr).ok(), naive_node_at(&c, &bits));
        }

        #[test]
        fn addresses_follow_heap_numbering(c in category_strategy(6)) {
            let nodes = c.enumerate_addresses();
            prop_assert_eq!(nodes.len(), c.size());
            for pair in nodes.windows(2) {
                prop_assert!(pair[0].0.code() < pair[1].0.code());
            }
            let codes: std::collections::HashSet<u64> = nodes.iter().map(|(a, _)| a.code()).collect();
            for (addr, label) in &nodes {
                if addr.code() > 1 {
                    prop_assert!(codes.contains(&(addr.code() / 2)));
                }
                let has_children = codes.contains(&(addr.code() * 2));
                prop_assert_eq!(has_children, label.is_slash());
                prop_assert_eq!(has_children, codes.contains(&(addr.code() * 2 + 1)));
            }
        }
    }
}
