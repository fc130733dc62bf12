//! Prefix (pre-order) serialization: `(S\NP)/NP` ↔ `/ \ S NP NP`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Category, NodeLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MalformedKind {
    /// The sequence ended while result/argument slots were still open.
    SurplusSlashes,
    /// A complete tree was read but tokens remain.
    TrailingTokens,
}

/// A token sequence that is not the pre-order serialization of any category.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Malformed {
    pub kind: MalformedKind,
    pub tokens: Vec<NodeLabel>,
    /// Open slots at end of input (SurplusSlashes) or the index of the first
    /// surplus token (TrailingTokens).
    pub detail: usize,
}

impl fmt::Display for Malformed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            MalformedKind::SurplusSlashes => {
                write!(f, "{} open slot(s) remain after ", self.detail)?
            }
            MalformedKind::TrailingTokens => {
                write!(f, "trailing tokens from position {} in ", self.detail)?
            }
        }
        f.write_str(&format_prefix_tokens(&self.tokens))
    }
}

impl std::error::Error for Malformed {}

pub fn to_prefix_tokens(cat: &Category) -> Vec<NodeLabel> {
    let mut out = Vec::with_capacity(cat.size());
    let mut stack = vec![cat];
    while let Some(node) = stack.pop() {
        out.push(node.label());
        if let Category::Functor { result, argument, .. } = node {
            stack.push(argument);
            stack.push(result);
        }
    }
    out
}

/// Space-separated rendering, e.g. `/ \ S NP NP`.
pub fn format_prefix_tokens(tokens: &[NodeLabel]) -> String {
    tokens.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

/// Rebuilds the unique category whose pre-order serialization is `tokens`.
pub fn from_prefix_tokens(tokens: &[NodeLabel]) -> Result<Category, Malformed> {
    let malformed = |kind, detail| Malformed {
        kind,
        tokens: tokens.to_vec(),
        detail,
    };
    // Slot counting decides well-formedness before any tree is built.
    let mut open = 1usize;
    for (i, token) in tokens.iter().enumerate() {
        if open == 0 {
            return Err(malformed(MalformedKind::TrailingTokens, i));
        }
        open = if token.is_slash() { open + 1 } else { open - 1 };
    }
    if open > 0 {
        return Err(malformed(MalformedKind::SurplusSlashes, open));
    }

    // Build bottom-up by scanning right to left.
    let mut stack: Vec<Category> = Vec::new();
    for token in tokens.iter().rev() {
        match token {
            NodeLabel::Atom(atom) => stack.push(Category::Atom(atom.clone())),
            NodeLabel::Slash(slash) => {
                let result = stack.pop().expect("slot count checked");
                let argument = stack.pop().expect("slot count checked");
                stack.push(Category::functor(*slash, result, argument));
            }
        }
    }
    debug_assert_eq!(stack.len(), 1);
    Ok(stack.pop().expect("slot count checked"))
}
