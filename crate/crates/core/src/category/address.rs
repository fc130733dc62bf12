use std::fmt;

use serde::{Deserialize, Serialize};

/// Deepest address representable.
pub const MAX_ADDRESS_DEPTH: usize = 62;

/// Position of a node inside a category tree.
///
/// Stored as the binary number formed by a leading placeholder `1` followed by
/// one bit per edge (0 = result/left, 1 = argument/right). Read this way,
/// addresses enumerate nodes in breadth-first order and the children of `v`
/// are `2v` and `2v + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Address(u64);

impl Address {
    pub const ROOT: Address = Address(1);

    pub fn from_code(code: u64) -> Option<Self> {
        (code >= 1 && (63 - code.leading_zeros() as usize) <= MAX_ADDRESS_DEPTH).then_some(Self(code))
    }

    pub fn from_bits(bits: &[bool]) -> Option<Self> {
        if bits.len() > MAX_ADDRESS_DEPTH {
            return None;
        }
        Some(Self(bits.iter().fold(1u64, |acc, &b| (acc << 1) | b as u64)))
    }

    /// Binary value including the leading placeholder bit.
    pub fn code(self) -> u64 {
        self.0
    }

    /// Number of bits after the placeholder, i.e. the node's depth.
    pub fn depth(self) -> usize {
        63 - self.0.leading_zeros() as usize
    }

    /// Bits after the placeholder, root to node.
    pub fn bits(self) -> impl Iterator<Item = bool> {
        let depth = self.depth();
        (0..depth).rev().map(move |shift| (self.0 >> shift) & 1 == 1)
    }

    pub fn result_child(self) -> Self {
        debug_assert!(self.depth() < MAX_ADDRESS_DEPTH);
        Self(self.0 << 1)
    }

    pub fn argument_child(self) -> Self {
        debug_assert!(self.depth() < MAX_ADDRESS_DEPTH);
        Self((self.0 << 1) | 1)
    }

    pub fn parent(self) -> Option<Self> {
        (self.0 > 1).then_some(Self(self.0 >> 1))
    }

    /// Ancestor addresses from the root down, excluding `self`.
    pub fn ancestors(self) -> Vec<Address> {
        let depth = self.depth();
        (1..=depth).rev().map(|shift| Address(self.0 >> shift)).collect()
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:b}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_and_children() {
        assert_eq!(Address::ROOT.depth(), 0);
        assert_eq!(Address::ROOT.bits().count(), 0);
        let inner = Address::ROOT.result_child().argument_child();
        assert_eq!(inner.to_string(), "101");
        assert_eq!(inner.bits().collect::<Vec<_>>(), vec![false, true]);
        assert_eq!(inner.parent(), Some(Address::from_code(0b10).unwrap()));
        assert_eq!(
            inner.ancestors(),
            vec![Address::ROOT, Address::from_code(0b10).unwrap()]
        );
    }

    #[test]
    fn rejects_zero_and_overlong() {
        assert!(Address::from_code(0).is_none());
        assert!(Address::from_bits(&[true; MAX_ADDRESS_DEPTH + 1]).is_none());
        assert_eq!(Address::from_bits(&[true; MAX_ADDRESS_DEPTH]).unwrap().depth(), MAX_ADDRESS_DEPTH);
    }
}
