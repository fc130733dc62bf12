use crate::category::{Address, Slash};

use super::DecoderError;

/// AddrMLP position features, length `2 * max_depth`.
///
/// The first half holds the address bits below the root (0 → +1, 1 → −1),
/// the second half the ancestor slashes from the root down (/ → +1, \ → −1).
/// Both halves are zero-padded.
pub fn addrmlp_features(address: Address, ancestor_slashes: &[Slash], max_depth: usize) -> Result<Vec<f64>, DecoderError> {
    let depth = address.depth();
    if depth > max_depth {
        return Err(DecoderError::DepthExceeded { depth, max: max_depth });
    }
    assert_eq!(ancestor_slashes.len(), depth, "one ancestor slash per address bit");
    let mut f = vec![0.0; 2 * max_depth];
    for (t, bit) in address.bits().enumerate() {
        f[t] = if bit { -1.0 } else { 1.0 };
    }
    for (t, s) in ancestor_slashes.iter().enumerate() {
        f[max_depth + t] = match s {
            Slash::Forward => 1.0,
            Slash::Backward => -1.0,
        };
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::parse_infix;

    #[test]
    fn root_is_all_zeros() {
        assert_eq!(addrmlp_features(Address::ROOT, &[], 6).unwrap(), vec![0.0; 12]);
    }

    #[test]
    fn inner_argument_of_transitive_verb() {
        let cat = parse_infix("(S\\NP)/NP").unwrap();
        let a = Address::from_code(0b101).unwrap();
        assert_eq!(cat.node_at(a).unwrap().to_string(), "NP");
        let slashes: Vec<Slash> = a
            .ancestors()
            .into_iter()
            .map(|anc| match cat.node_at(anc).unwrap() {
                crate::category::NodeLabel::Slash(s) => s,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(slashes, [Slash::Forward, Slash::Backward]);
        let f = addrmlp_features(a, &slashes, 6).unwrap();
        assert_eq!(f, [1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn same_depth_different_slashes_differ() {
        let a = Address::from_code(0b10).unwrap();
        let f = addrmlp_features(a, &[Slash::Forward], 3).unwrap();
        let b = addrmlp_features(a, &[Slash::Backward], 3).unwrap();
        assert_ne!(f, b);
        assert_ne!(f, addrmlp_features(Address::from_code(0b11).unwrap(), &[Slash::Forward], 3).unwrap());
    }

    #[test]
    fn too_deep() {
        let a = Address::from_code(0b1000).unwrap();
        let err = addrmlp_features(a, &[Slash::Forward; 3], 2).unwrap_err();
        assert!(matches!(err, DecoderError::DepthExceeded { depth: 3, max: 2 }));
    }
}
