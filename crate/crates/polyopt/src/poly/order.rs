//! Monomial orders: graded reverse lexicographic and block elimination.

use std::cmp::Ordering;

/// Total order on exponent vectors of equal length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonomialOrder {
    /// Graded reverse lexicographic: compare total degree first; on ties the
    /// monomial whose trailing exponent difference is negative is larger.
    GrevLex,
    /// Elimination order for the variables with index >= `split`: the tail
    /// block is compared (grevlex) before the leading block, so any monomial
    /// involving an eliminated variable dominates every monomial free of
    /// them. A Groebner basis under this order intersects cleanly with the
    /// subring in the first `split` variables.
    Block { split: usize },
}

impl MonomialOrder {
    pub fn cmp(&self, a: &[u16], b: &[u16]) -> Ordering {
        debug_assert_eq!(a.len(), b.len());
        match *self {
            MonomialOrder::GrevLex => grevlex(a, b),
            MonomialOrder::Block { split } => grevlex(&a[split..], &b[split..])
                .then_with(|| grevlex(&a[..split], &b[..split])),
        }
    }

    /// True when leading terms free of the eliminated block certify
    /// membership in the subring of the first `keep` variables.
    pub fn eliminates_from(&self, keep: usize) -> bool {
        matches!(self, MonomialOrder::Block { split } if *split == keep)
    }
}

fn grevlex(a: &[u16], b: &[u16]) -> Ordering {
    let da: u64 = a.iter().map(|&e| u64::from(e)).sum();
    let db: u64 = b.iter().map(|&e| u64::from(e)).sum();
    match da.cmp(&db) {
        Ordering::Equal => {}
        ord => return ord,
    }
    for i in (0..a.len()).rev() {
        match a[i].cmp(&b[i]) {
            Ordering::Equal => {}
            // rightmost difference negative => a is the larger monomial
            Ordering::Less => return Ordering::Greater,
            Ordering::Greater => return Ordering::Less,
        }
    }
    Ordering::Equal
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grevlex_degree_dominates() {
        let ord = MonomialOrder::GrevLex;
        assert_eq!(ord.cmp(&[3, 0], &[1, 1]), Ordering::Greater);
        assert_eq!(ord.cmp(&[0, 0], &[0, 1]), Ordering::Less);
    }

    #[test]
    fn grevlex_tie_break() {
        let ord = MonomialOrder::GrevLex;
        // x^2 > x y > y^2 in two variables
        assert_eq!(ord.cmp(&[2, 0], &[1, 1]), Ordering::Greater);
        assert_eq!(ord.cmp(&[1, 1], &[0, 2]), Ordering::Greater);
        // three variables: x^2 > x y > y^2 > x z > y z > z^2
        let seq: [[u16; 3]; 6] = [
            [2, 0, 0],
            [1, 1, 0],
            [0, 2, 0],
            [1, 0, 1],
            [0, 1, 1],
            [0, 0, 2],
        ];
        for w in seq.windows(2) {
            assert_eq!(ord.cmp(&w[0], &w[1]), Ordering::Greater);
        }
    }

    #[test]
    fn block_order_eliminates_tail() {
        // variables (x, y | u); any monomial containing u dominates all
        // monomials in (x, y) alone.
        let ord = MonomialOrder::Block { split: 2 };
        assert_eq!(ord.cmp(&[0, 0, 1], &[5, 5, 0]), Ordering::Greater);
        assert_eq!(ord.cmp(&[1, 0, 1], &[0, 0, 1]), Ordering::Greater);
        // ties in the tail fall back to the base block
        assert_eq!(ord.cmp(&[2, 0, 1], &[1, 1, 1]), Ordering::Greater);
        assert!(ord.eliminates_from(2));
        assert!(!ord.eliminates_from(1));
    }
}
