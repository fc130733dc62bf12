use serde::{Deserialize, Serialize};

use super::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Identical,
    /// Same arrangement of slashes, results and arguments; labels differ.
    SameStructure,
    WellFormedDifferentStructure,
}

/// Structural comparison of a predicted category against gold.
///
/// Error counts are only meaningful when the relation is `Identical` or
/// `SameStructure`; they are zero otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryDiff {
    pub relation: Relation,
    pub atom_errors: usize,
    pub attribute_errors: usize,
    pub slash_errors: usize,
}

impl CategoryDiff {
    pub fn between(gold: &Category, pred: &Category) -> Self {
        let mut counts = Counts::default();
        if !walk(gold, pred, &mut counts) {
            return Self {
                relation: Relation::WellFormedDifferentStructure,
                atom_errors: 0,
                attribute_errors: 0,
                slash_errors: 0,
            };
        }
        let relation = if counts.total() == 0 {
            Relation::Identical
        } else {
            Relation::SameStructure
        };
        Self {
            relation,
            atom_errors: counts.atom,
            attribute_errors: counts.attribute,
            slash_errors: counts.slash,
        }
    }

    pub fn total_errors(&self) -> usize {
        self.atom_errors + self.attribute_errors + self.slash_errors
    }
}

pub fn diff(gold: &Category, pred: &Category) -> CategoryDiff {
    CategoryDiff::between(gold, pred)
}

#[derive(Default)]
struct Counts {
    atom: usize,
    attribute: usize,
    slash: usize,
}

impl Counts {
    fn total(&self) -> usize {
        self.atom + self.attribute + self.slash
    }
}

/// Returns false as soon as the shapes diverge.
fn walk(gold: &Category, pred: &Category, counts: &mut Counts) -> bool {
    match (gold, pred) {
        (Category::Atom(g), Category::Atom(p)) => {
            if g.base() != p.base() {
                counts.atom += 1;
            } else if g.attribute() != p.attribute() {
                counts.attribute += 1;
            }
            true
        }
        (
            Category::Functor { slash: gs, result: gr, argument: ga },
            Category::Functor { slash: ps, result: pr, argument: pa },
        ) => {
            if gs != ps {
                counts.slash += 1;
            }
            walk(gr, pr, counts) && walk(ga, pa, counts)
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::parse_infix;
    use crate::category::testutil::category_strategy;
    use proptest::prelude::*;

    fn diff(g: &str, p: &str) -> CategoryDiff {
        CategoryDiff::between(&parse_infix(g).unwrap(), &parse_infix(p).unwrap())
    }

    #[test]
    fn attribute_error() {
        let d = diff("(S[b]\\NP)/NP", "(S\\NP)/NP");
        assert_eq!(d.relation, Relation::SameStructure);
        assert_eq!((d.attribute_errors, d.atom_errors, d.slash_errors), (1, 0, 0));
    }

    #[test]
    fn atom_error() {
        let d = diff("(S[ng]\\NP)/PR", "(S[ng]\\NP)/PP");
        assert_eq!(d.relation, Relation::SameStructure);
        assert_eq!((d.attribute_errors, d.atom_errors, d.slash_errors), (0, 1, 0));
    }

    #[test]
    fn slash_error_and_multiple() {
        let d = diff("(S\\NP)/NP", "(S/NP)/NP");
        assert_eq!((d.relation, d.slash_errors), (Relation::SameStructure, 1));
        let d = diff("(S[dcl]\\NP)/NP", "(S\\PP)\\NP");
        assert_eq!((d.attribute_errors, d.atom_errors, d.slash_errors), (1, 1, 1));
    }

    #[test]
    fn different_structure() {
        let d = diff("(NP\\NP)/NP", "S/NP");
        assert_eq!(d.relation, Relation::WellFormedDifferentStructure);
        assert_eq!(d.total_errors(), 0);
        assert_eq!(diff("NP", "S/NP").relation, Relation::WellFormedDifferentStructure);
    }

    fn same_shape(a: &Category, b: &Category) -> bool {
        a.enumerate_addresses().iter().map(|(addr, _)| addr.code()).collect::<Vec<_>>()
            == b.enumerate_addresses().iter().map(|(addr, _)| addr.code()).collect::<Vec<_>>()
    }

    proptest! {
        #[test]
        fn identical_iff_equal(a in category_strategy(4), b in category_strategy(4)) {
            prop_assert_eq!(CategoryDiff::between(&a, &a).relation, Relation::Identical);
            let ab = CategoryDiff::between(&a, &b);
            let ba = CategoryDiff::between(&b, &a);
            prop_assert_eq!(ab.relation, ba.relation);
            prop_assert_eq!(ab.relation == Relation::Identical, a == b);
            prop_assert_eq!(ab.relation != Relation::WellFormedDifferentStructure, same_shape(&a, &b));
        }
    }
}
