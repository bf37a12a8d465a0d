//! Desk-scale Buchberger engine over exact rationals, with block elimination
//! orders. Used to project lifted stationarity ideals onto the base
//! variables and to detect the unit ideal symbolically.
//!
//! Pair selection follows the normal strategy (smallest lcm degree first)
//! with Buchberger's coprime-leading-term and chain criteria. Coefficient
//! growth is controlled by stripping rational content after every reduction.
//! Instances that exceed the configured pair or degree budget return a
//! structured error instead of hanging; callers fall back to minor-based
//! constructions in that case.

use crate::poly::{MonomialOrder, Poly, QPoly};
use num_rational::BigRational;
use num_traits::One;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroebnerError {
    #[error("pair-reduction budget exceeded ({limit} reductions); instance beyond desk scale")]
    PairBudget { limit: usize },
    #[error("generator degree {degree} exceeds budget {limit}; instance beyond desk scale")]
    DegreeBudget { degree: usize, limit: usize },
    #[error("basis order {order:?} cannot eliminate down to the first {keep} variables")]
    IncompatibleOrder { order: MonomialOrder, keep: usize },
}

/// Hard limits keeping elimination runs interruptible.
#[derive(Debug, Clone, Copy)]
pub struct BuchbergerBudget {
    pub max_pair_reductions: usize,
    pub max_degree: usize,
}

impl Default for BuchbergerBudget {
    fn default() -> Self {
        BuchbergerBudget {
            max_pair_reductions: 5000,
            max_degree: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroebnerBasis {
    pub generators: Vec<QPoly>,
    pub order: MonomialOrder,
    pub reduced: bool,
}

impl GroebnerBasis {
    /// True iff the ideal is the whole ring (reduced basis {1}).
    pub fn contains_one(&self) -> bool {
        self.generators
            .iter()
            .any(|g| !g.is_zero() && g.is_constant())
    }
}

fn lcm_exp(a: &[u16], b: &[u16]) -> Vec<u16> {
    a.iter().zip(b).map(|(&x, &y)| x.max(y)).collect()
}

fn divides(a: &[u16], b: &[u16]) -> bool {
    a.iter().zip(b).all(|(&x, &y)| x <= y)
}

fn exp_deg(e: &[u16]) -> usize {
    e.iter().map(|&x| usize::from(x)).sum()
}

fn sub_exp(a: &[u16], b: &[u16]) -> Vec<u16> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// Full normal form of `p` modulo `basis`: no remaining term is divisible by
/// any basis leading term. Reducer choice is positional, so runs are
/// deterministic.
pub fn reduce(p: &QPoly, basis: &[QPoly], order: MonomialOrder) -> QPoly {
    let nv = p.nvars();
    let mut work = p.clone();
    let mut remainder = QPoly::zero(nv);
    let leads: Vec<(Vec<u16>, BigRational)> = basis
        .iter()
        .map(|b| {
            let (e, c) = b.leading(order).expect("basis members are nonzero");
            (e.to_vec(), c.clone())
        })
        .collect();
    while !work.is_zero() {
        let (le, lc) = {
            let (e, c) = work.leading(order).unwrap();
            (e.to_vec(), c.clone())
        };
        let mut reduced = false;
        for (g, (ge, gc)) in basis.iter().zip(&leads) {
            if divides(ge, &le) {
                let factor = Poly::monomial(sub_exp(&le, ge), lc.clone() / gc.clone());
                work = &work - &(&factor * g);
                reduced = true;
                break;
            }
        }
        if !reduced {
            let head = Poly::monomial(le.clone(), lc.clone());
            remainder = &remainder + &head;
            work = &work - &head;
        }
    }
    remainder
}

/// S-polynomial of (f, g), normalized to cancel both leading terms.
fn s_poly(f: &QPoly, g: &QPoly, order: MonomialOrder) -> QPoly {
    let (fe, fc) = f.leading(order).unwrap();
    let (ge, gc) = g.leading(order).unwrap();
    let l = lcm_exp(fe, ge);
    let mf = Poly::monomial(sub_exp(&l, fe), BigRational::one() / fc.clone());
    let mg = Poly::monomial(sub_exp(&l, ge), BigRational::one() / gc.clone());
    &(&mf * f) - &(&mg * g)
}

/// Compute a reduced Groebner basis of the ideal generated by `gens`.
pub fn buchberger(
    gens: &[QPoly],
    order: MonomialOrder,
    budget: &BuchbergerBudget,
) -> Result<GroebnerBasis, GroebnerError> {
    let mut basis: Vec<QPoly> = gens
        .iter()
        .filter(|g| !g.is_zero())
        .map(|g| g.primitive_part())
        .collect();
    basis.dedup();
    if basis.is_empty() {
        // the zero ideal
        return Ok(GroebnerBasis {
            generators: Vec::new(),
            order,
            reduced: true,
        });
    }
    for g in &basis {
        check_degree(g, budget)?;
    }

    // pending S-pairs plus the set of pairs already treated (for the chain
    // criterion); indices reference `basis`
    let mut pending: Vec<(usize, usize)> = Vec::new();
    let mut treated: std::collections::BTreeSet<(usize, usize)> = std::collections::BTreeSet::new();
    for i in 0..basis.len() {
        for j in (i + 1)..basis.len() {
            pending.push((i, j));
        }
    }
    let mut reductions = 0usize;

    while !pending.is_empty() {
        // normal selection: smallest lcm degree first, index order on ties
        let mut best = 0;
        let mut best_key = usize::MAX;
        for (idx, &(i, j)) in pending.iter().enumerate() {
            let (ei, _) = basis[i].leading(order).unwrap();
            let (ej, _) = basis[j].leading(order).unwrap();
            let key = exp_deg(&lcm_exp(ei, ej));
            if key < best_key {
                best_key = key;
                best = idx;
            }
        }
        let (i, j) = pending.swap_remove(best);
        treated.insert((i, j));

        let (ei, _) = basis[i].leading(order).unwrap();
        let (ej, _) = basis[j].leading(order).unwrap();
        let (ei, ej) = (ei.to_vec(), ej.to_vec());
        let l = lcm_exp(&ei, &ej);
        // first criterion: coprime leading terms reduce to zero
        if exp_deg(&l) == exp_deg(&ei) + exp_deg(&ej) {
            continue;
        }
        // chain criterion: some k with LT(k) | lcm and both (i,k), (j,k) done
        let chain = (0..basis.len()).any(|k| {
            if k == i || k == j {
                return false;
            }
            let (ek, _) = basis[k].leading(order).unwrap();
            divides(ek, &l)
                && treated.contains(&key(i, k))
                && treated.contains(&key(j, k))
        });
        if chain {
            continue;
        }

        reductions += 1;
        if reductions > budget.max_pair_reductions {
            return Err(GroebnerError::PairBudget {
                limit: budget.max_pair_reductions,
            });
        }
        let s = s_poly(&basis[i], &basis[j], order);
        let r = reduce(&s, &basis, order);
        if r.is_zero() {
            continue;
        }
        let r = r.primitive_part();
        check_degree(&r, budget)?;
        let new_idx = basis.len();
        basis.push(r);
        for t in 0..new_idx {
            pending.push((t, new_idx));
        }
    }

    Ok(GroebnerBasis {
        generators: interreduce(basis, order),
        order,
        reduced: true,
    })
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn check_degree(p: &QPoly, budget: &BuchbergerBudget) -> Result<(), GroebnerError> {
    let degree = p.degree().unwrap_or(0);
    if degree > budget.max_degree {
        return Err(GroebnerError::DegreeBudget {
            degree,
            limit: budget.max_degree,
        });
    }
    Ok(())
}

/// Minimalize (drop generators whose leading term is divisible by another's)
/// and fully reduce each survivor; make everything monic and sort by leading
/// monomial so the output is the unique reduced basis.
fn interreduce(mut basis: Vec<QPoly>, order: MonomialOrder) -> Vec<QPoly> {
    // minimal set of leading terms
    let mut keep = vec![true; basis.len()];
    for i in 0..basis.len() {
        if !keep[i] {
            continue;
        }
        let (ei, _) = basis[i].leading(order).unwrap();
        let ei = ei.to_vec();
        for j in 0..basis.len() {
            if i == j || !keep[j] {
                continue;
            }
            let (ej, _) = basis[j].leading(order).unwrap();
            if divides(&ej.to_vec(), &ei) && (!divides(&ei, ej) || j < i) {
                keep[i] = false;
                break;
            }
        }
    }
    let minimal: Vec<QPoly> = basis
        .drain(..)
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(g, _)| g)
        .collect();
    let mut reduced: Vec<QPoly> = Vec::with_capacity(minimal.len());
    for i in 0..minimal.len() {
        let others: Vec<QPoly> = minimal
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, g)| g.clone())
            .collect();
        let r = reduce(&minimal[i], &others, order);
        if !r.is_zero() {
            reduced.push(r.monic(order));
        }
    }
    reduced.sort_by(|a, b| {
        let (ea, _) = a.leading(order).unwrap();
        let (eb, _) = b.leading(order).unwrap();
        order.cmp(ea, eb)
    });
    reduced
}

/// Generators of the intersection with the subring in the first `keep`
/// variables. Requires a basis computed under the matching block order
/// (or no elimination at all when `keep` equals the variable count).
pub fn elimination_ideal(
    basis: &GroebnerBasis,
    keep: usize,
) -> Result<Vec<QPoly>, GroebnerError> {
    let nvars = basis
        .generators
        .first()
        .map(|g| g.nvars())
        .unwrap_or(keep);
    if keep == nvars {
        return Ok(basis.generators.clone());
    }
    if !basis.order.eliminates_from(keep) {
        return Err(GroebnerError::IncompatibleOrder {
            order: basis.order,
            keep,
        });
    }
    Ok(basis
        .generators
        .iter()
        .filter_map(|g| g.project_to(keep))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{parse_poly, VarSpace};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn gb(gens: &[QPoly], order: MonomialOrder) -> GroebnerBasis {
        buchberger(gens, order, &BuchbergerBudget::default()).unwrap()
    }

    #[test]
    fn hand_reduction_example() {
        let vars = VarSpace::new(vec!["x", "y"]).unwrap();
        let gens = vec![
            parse_poly("x - 1", &vars).unwrap(),
            parse_poly("x*y", &vars).unwrap(),
        ];
        let basis = gb(&gens, MonomialOrder::GrevLex);
        let expect = vec![
            parse_poly("y", &vars).unwrap(),
            parse_poly("x - 1", &vars).unwrap(),
        ];
        assert_eq!(basis.generators, expect);
        assert!(!basis.contains_one());
    }

    #[test]
    fn unit_ideal_is_fixed_point() {
        let one: QPoly = Poly::one(2);
        let basis = gb(&[one.clone()], MonomialOrder::GrevLex);
        assert_eq!(basis.generators, vec![one]);
        assert!(basis.contains_one());
    }

    #[test]
    fn kkt_system_of_cubic_halfline_collapses() {
        // stationarity of (min x subject to x^3 >= 0) in variables (x, v)
        let vars = VarSpace::new(vec!["x", "v"]).unwrap();
        let gens = vec![
            parse_poly("1 - 3*v*x^2", &vars).unwrap(),
            parse_poly("v*x^3", &vars).unwrap(),
        ];
        let basis = gb(&gens, MonomialOrder::Block { split: 1 });
        assert!(basis.contains_one());
        assert_eq!(basis.generators.len(), 1);
        let elim = elimination_ideal(&basis, 1).unwrap();
        assert_eq!(elim, vec![Poly::one(1)]);
    }

    #[test]
    fn elimination_keeps_base_generators() {
        // f = 0 on the circle: multipliers only scale the circle equation
        let vars = VarSpace::new(vec!["x", "y", "u"]).unwrap();
        let gens = vec![
            // u * (circle gradient) entries
            parse_poly("2*u*x", &vars).unwrap(),
            parse_poly("2*u*y", &vars).unwrap(),
            parse_poly("x^2 + y^2 - 1", &vars).unwrap(),
        ];
        let basis = gb(&gens, MonomialOrder::Block { split: 2 });
        let elim = elimination_ideal(&basis, 2).unwrap();
        let circle2 = VarSpace::new(vec!["x", "y"]).unwrap();
        assert_eq!(elim, vec![parse_poly("x^2 + y^2 - 1", &circle2).unwrap()]);
    }

    #[test]
    fn eliminate_nothing_returns_basis() {
        let vars = VarSpace::new(vec!["x", "y"]).unwrap();
        let gens = vec![parse_poly("x^2 - y", &vars).unwrap()];
        let basis = gb(&gens, MonomialOrder::GrevLex);
        let elim = elimination_ideal(&basis, 2).unwrap();
        assert_eq!(elim, basis.generators);
        assert!(elimination_ideal(&basis, 1).is_err());
    }

    #[test]
    fn every_input_reduces_to_zero() {
        let vars = VarSpace::new(vec!["x", "y", "z"]).unwrap();
        let gens = vec![
            parse_poly("x^2 + y + z - 1", &vars).unwrap(),
            parse_poly("x + y^2 + z - 1", &vars).unwrap(),
            parse_poly("x + y + z^2 - 1", &vars).unwrap(),
        ];
        let basis = gb(&gens, MonomialOrder::GrevLex);
        for g in &gens {
            assert!(reduce(g, &basis.generators, basis.order).is_zero());
        }
        // and all S-polynomials of the result reduce to zero
        for i in 0..basis.generators.len() {
            for j in (i + 1)..basis.generators.len() {
                let s = s_poly(&basis.generators[i], &basis.generators[j], basis.order);
                assert!(reduce(&s, &basis.generators, basis.order).is_zero());
            }
        }
    }

    #[test]
    fn elimination_generators_reduce_in_full_ring() {
        let vars = VarSpace::new(vec!["x", "y", "v"]).unwrap();
        let gens = vec![
            parse_poly("v*x - 1", &vars).unwrap(),
            parse_poly("x^2 - y", &vars).unwrap(),
        ];
        let basis = gb(&gens, MonomialOrder::Block { split: 2 });
        let elim = elimination_ideal(&basis, 2).unwrap();
        assert!(!elim.is_empty());
        for g in &elim {
            let lifted = g.extend_vars(3);
            assert!(reduce(&lifted, &basis.generators, basis.order).is_zero());
        }
    }

    #[test]
    fn random_bases_pass_spoly_and_membership_checks() {
        let mut rng = StdRng::seed_from_u64(0xb0b);
        for _ in 0..50 {
            let nv = rng.gen_range(2..=3);
            let basis_monos = crate::poly::monomial_basis(nv, 2);
            let mut gens = Vec::new();
            for _ in 0..rng.gen_range(1..=3) {
                let mut terms = Vec::new();
                for e in &basis_monos {
                    if rng.gen_bool(0.35) {
                        terms.push((
                            e.clone(),
                            BigRational::from_integer(rng.gen_range(-4i64..=4).into()),
                        ));
                    }
                }
                let p = QPoly::from_terms(nv, terms);
                if !p.is_zero() {
                    gens.push(p);
                }
            }
            if gens.is_empty() {
                continue;
            }
            let basis = gb(&gens, MonomialOrder::GrevLex);
            for g in &gens {
                assert!(reduce(g, &basis.generators, basis.order).is_zero());
            }
            for i in 0..basis.generators.len() {
                for j in (i + 1)..basis.generators.len() {
                    let s = s_poly(&basis.generators[i], &basis.generators[j], basis.order);
                    assert!(reduce(&s, &basis.generators, basis.order).is_zero());
                }
            }
        }
    }

    #[test]
    fn budget_errors_are_structured() {
        let vars = VarSpace::new(vec!["x", "y"]).unwrap();
        let gens = vec![
            parse_poly("x^5 - y^4 + 1", &vars).unwrap(),
            parse_poly("x^3*y^3 - x - 2", &vars).unwrap(),
        ];
        let tight = BuchbergerBudget {
            max_pair_reductions: 1,
            max_degree: 40,
        };
        match buchberger(&gens, MonomialOrder::GrevLex, &tight) {
            Err(GroebnerError::PairBudget { limit: 1 }) => {}
            other => panic!("expected pair budget error, got {other:?}"),
        }
        let low_degree = BuchbergerBudget {
            max_pair_reductions: 5000,
            max_degree: 4,
        };
        match buchberger(&gens, MonomialOrder::GrevLex, &low_degree) {
            Err(GroebnerError::DegreeBudget { .. }) => {}
            other => panic!("expected degree budget error, got {other:?}"),
        }
    }
}
