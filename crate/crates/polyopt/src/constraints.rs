//! Constraint-system constructions for polynomial minimization.
//!
//! Starting from an instance (f; equalities; inequalities) this module
//! builds the derived systems whose real zero sets carry the minimizers:
//! the lifted stationarity system with multipliers, its projection onto the
//! base variables, two determinantal first-order systems (raw minors and a
//! Gram-determinant variant), the singular-locus system used for the
//! recursive branch, and the square-free inequality products that index the
//! localizing blocks of a relaxation.

use crate::groebner::{buchberger, elimination_ideal, BuchbergerBudget, GroebnerError};
use crate::poly::calculus::{combinations, gradient, gram_determinant, jacobian_minors};
use crate::poly::{MonomialOrder, Poly, PolyError, QPoly, VarSpace};
use num_rational::BigRational;
use serde::Serialize;
use thiserror::Error;

/// Default cap on the inequality count when forming all square-free
/// products (2^k localizing blocks).
pub const PREORDERING_BOUND: usize = 6;

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Groebner(#[from] GroebnerError),
    #[error("{count} inequalities would need {products} localizing blocks; bound is 2^{bound}")]
    TooManyInequalities {
        count: usize,
        products: usize,
        bound: usize,
    },
    #[error("rank bound {m} exceeds the equality count {n1}")]
    RankBound { m: usize, n1: usize },
    #[error("Gram determinants assume the full equality rank {n1}; got rank bound {m}")]
    GramRank { m: usize, n1: usize },
}

/// A minimization instance: objective, equality and inequality constraints,
/// all over one variable space.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub vars: VarSpace,
    pub objective: QPoly,
    pub equalities: Vec<QPoly>,
    pub inequalities: Vec<QPoly>,
}

impl ProblemInstance {
    /// Zero constraints are dropped; every polynomial must live in `vars`.
    pub fn new(
        vars: VarSpace,
        objective: QPoly,
        equalities: Vec<QPoly>,
        inequalities: Vec<QPoly>,
    ) -> Result<Self, ConstraintError> {
        let n = vars.len();
        for p in std::iter::once(&objective)
            .chain(&equalities)
            .chain(&inequalities)
        {
            if p.nvars() != n {
                return Err(PolyError::MixedSpaces {
                    left: n,
                    right: p.nvars(),
                }
                .into());
            }
        }
        Ok(ProblemInstance {
            vars,
            objective,
            equalities: equalities.into_iter().filter(|p| !p.is_zero()).collect(),
            inequalities: inequalities.into_iter().filter(|p| !p.is_zero()).collect(),
        })
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    /// True when some equality is a nonzero constant, so the feasible set is
    /// empty before any relaxation is attempted.
    pub fn symbolically_inconsistent(&self) -> bool {
        self.equalities
            .iter()
            .any(|p| p.is_constant() && !p.is_zero())
    }
}

/// Which construction produced a constraint set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    KktLifted,
    KktEliminated,
    FjMinors,
    FjGram,
    Singular,
    Direct,
    Gradient,
    KnownMinimum,
    RealRadical,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Provenance::KktLifted => "kkt-lifted",
            Provenance::KktEliminated => "kkt-eliminated",
            Provenance::FjMinors => "fj-minors",
            Provenance::FjGram => "fj-gram",
            Provenance::Singular => "singular",
            Provenance::Direct => "direct",
            Provenance::Gradient => "gradient",
            Provenance::KnownMinimum => "known-minimum",
            Provenance::RealRadical => "real-radical",
        };
        f.write_str(s)
    }
}

/// A derived constraint system: the relaxation runs over the variety of
/// `equalities` intersected with the region where `inequalities` are
/// nonnegative.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub vars: VarSpace,
    pub equalities: Vec<QPoly>,
    pub inequalities: Vec<QPoly>,
    pub provenance: Provenance,
    /// Set when an equality is a nonzero constant: the system has no
    /// solutions and no SDP needs to run.
    pub symbolically_infeasible: bool,
}

impl ConstraintSet {
    pub fn new(
        vars: VarSpace,
        equalities: Vec<QPoly>,
        inequalities: Vec<QPoly>,
        provenance: Provenance,
    ) -> Self {
        let equalities = dedup_nonzero(equalities);
        let inequalities = dedup_nonzero(inequalities);
        let symbolically_infeasible = equalities.iter().any(|p| p.is_constant() && !p.is_zero());
        ConstraintSet {
            vars,
            equalities,
            inequalities,
            provenance,
            symbolically_infeasible,
        }
    }

    /// The instance's own constraints, unchanged.
    pub fn from_instance(p: &ProblemInstance, provenance: Provenance) -> Self {
        ConstraintSet::new(
            p.vars.clone(),
            p.equalities.clone(),
            p.inequalities.clone(),
            provenance,
        )
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }
}

fn dedup_nonzero(polys: Vec<QPoly>) -> Vec<QPoly> {
    let mut out: Vec<QPoly> = Vec::with_capacity(polys.len());
    for p in polys {
        if !p.is_zero() && !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// All subsets of {0, …, n-1}, ordered by size then lexicographically.
fn subsets_by_size(n: usize) -> Vec<Vec<usize>> {
    (0..=n).flat_map(|s| combinations(n, s)).collect()
}

fn complement_product(inequalities: &[QPoly], nu: &[usize], nvars: usize) -> QPoly {
    let mut prod = QPoly::one(nvars);
    for (j, g) in inequalities.iter().enumerate() {
        if !nu.contains(&j) {
            prod = &prod * g;
        }
    }
    prod
}

/// Stationarity system in the lifted space (x, u, v): for each base variable
/// the balance F_i = ∂f/∂x_i − Σ_j u_j ∂e_j/∂x_i − Σ_j v_j ∂q_j/∂x_i, plus
/// the equalities themselves and the complementarity products v_j q_j.
/// Inequalities stay as they are (they only mention base variables).
pub fn build_kkt_lifted(p: &ProblemInstance) -> ConstraintSet {
    let n = p.nvars();
    let n1 = p.equalities.len();
    let n2 = p.inequalities.len();
    let vars = p.vars.extended("u", n1).extended("v", n2);
    let nv = vars.len();
    let grad_f = gradient(&p.objective);
    let grads_e: Vec<Vec<QPoly>> = p.equalities.iter().map(|g| gradient(g)).collect();
    let grads_q: Vec<Vec<QPoly>> = p.inequalities.iter().map(|g| gradient(g)).collect();

    let mut c0: Vec<QPoly> = Vec::with_capacity(n + n1 + n2);
    for i in 0..n {
        let mut fi = grad_f[i].extend_vars(nv);
        for (j, ge) in grads_e.iter().enumerate() {
            let uj = QPoly::var(nv, n + j).expect("multiplier index in range");
            fi = &fi - &(&uj * &ge[i].extend_vars(nv));
        }
        for (j, gq) in grads_q.iter().enumerate() {
            let vj = QPoly::var(nv, n + n1 + j).expect("multiplier index in range");
            fi = &fi - &(&vj * &gq[i].extend_vars(nv));
        }
        c0.push(fi);
    }
    for g in &p.equalities {
        c0.push(g.extend_vars(nv));
    }
    for (j, g) in p.inequalities.iter().enumerate() {
        let vj = QPoly::var(nv, n + n1 + j).expect("multiplier index in range");
        c0.push(&vj * &g.extend_vars(nv));
    }
    let cplus = p.inequalities.iter().map(|g| g.extend_vars(nv)).collect();
    ConstraintSet::new(vars, c0, cplus, Provenance::KktLifted)
}

/// Projection of the lifted stationarity ideal onto the base variables via a
/// block-elimination Groebner basis. Shortcuts: with no constraints the
/// projection is the gradient itself; with a zero objective it is the
/// equality set. When the projection is the unit ideal the result carries
/// the symbolically-infeasible marker.
pub fn build_kkt_eliminated(
    p: &ProblemInstance,
    budget: &BuchbergerBudget,
) -> Result<ConstraintSet, ConstraintError> {
    let n = p.nvars();
    if p.equalities.is_empty() && p.inequalities.is_empty() {
        return Ok(ConstraintSet::new(
            p.vars.clone(),
            gradient(&p.objective),
            Vec::new(),
            Provenance::KktEliminated,
        ));
    }
    if p.objective.is_zero() {
        return Ok(ConstraintSet::new(
            p.vars.clone(),
            p.equalities.clone(),
            p.inequalities.clone(),
            Provenance::KktEliminated,
        ));
    }
    let lifted = build_kkt_lifted(p);
    let basis = buchberger(
        &lifted.equalities,
        MonomialOrder::Block { split: n },
        budget,
    )?;
    let c0 = if basis.contains_one() {
        vec![QPoly::one(n)]
    } else {
        elimination_ideal(&basis, n)?
    };
    Ok(ConstraintSet::new(
        p.vars.clone(),
        c0,
        p.inequalities.clone(),
        Provenance::KktEliminated,
    ))
}

/// Determinantal first-order system: for every subset ν of the inequalities
/// (active set candidate), the anchored (m+|ν|+1)-minors of the matrix with
/// columns [∇f, all ∇e_j, ∇q_j for j ∈ ν], each multiplied by the product
/// of the inactive inequalities. `rank_bound` defaults to the equality
/// count. Subsets with no minors of that size are skipped. Coefficients are
/// kept verbatim so emitted systems reproduce hand-derived ones exactly.
pub fn build_fj_minors(
    p: &ProblemInstance,
    rank_bound: Option<usize>,
) -> Result<ConstraintSet, ConstraintError> {
    let n = p.nvars();
    let n1 = p.equalities.len();
    let n2 = p.inequalities.len();
    let m = rank_bound.unwrap_or(n1);
    if m > n1 {
        return Err(ConstraintError::RankBound { m, n1 });
    }
    let grad_f = gradient(&p.objective);
    let grads_e: Vec<Vec<QPoly>> = p.equalities.iter().map(|g| gradient(g)).collect();
    let grads_q: Vec<Vec<QPoly>> = p.inequalities.iter().map(|g| gradient(g)).collect();

    let mut c0 = p.equalities.clone();
    for nu in subsets_by_size(n2) {
        if n <= m + nu.len() {
            continue;
        }
        let k = m + nu.len() + 1;
        let mut cols = vec![grad_f.clone()];
        cols.extend(grads_e.iter().cloned());
        for &j in &nu {
            cols.push(grads_q[j].clone());
        }
        if k > cols.len() {
            continue;
        }
        let complement = complement_product(&p.inequalities, &nu, n);
        for d in jacobian_minors(&cols, k, true)? {
            c0.push(&d * &complement);
        }
    }
    Ok(ConstraintSet::new(
        p.vars.clone(),
        c0,
        p.inequalities.clone(),
        Provenance::FjMinors,
    ))
}

/// Gram-determinant variant of the first-order system: one polynomial per
/// active set ν, the determinant of the Gram matrix of [∇f, ∇e_j, ∇q_{j∈ν}]
/// times the inactive-inequality product. Equals the sum of squares of the
/// corresponding minors, so it cuts out the same real locus with fewer,
/// denser polynomials. Only meaningful with the full equality rank.
pub fn build_fj_gram(
    p: &ProblemInstance,
    rank_bound: Option<usize>,
) -> Result<ConstraintSet, ConstraintError> {
    let n = p.nvars();
    let n1 = p.equalities.len();
    let n2 = p.inequalities.len();
    let m = rank_bound.unwrap_or(n1);
    if m != n1 {
        return Err(ConstraintError::GramRank { m, n1 });
    }
    let grad_f = gradient(&p.objective);
    let grads_e: Vec<Vec<QPoly>> = p.equalities.iter().map(|g| gradient(g)).collect();
    let grads_q: Vec<Vec<QPoly>> = p.inequalities.iter().map(|g| gradient(g)).collect();

    let mut c0 = p.equalities.clone();
    for nu in subsets_by_size(n2) {
        if n <= n1 + nu.len() {
            continue;
        }
        let mut cols = vec![grad_f.clone()];
        cols.extend(grads_e.iter().cloned());
        for &j in &nu {
            cols.push(grads_q[j].clone());
        }
        let complement = complement_product(&p.inequalities, &nu, n);
        let delta = gram_determinant(&cols)?;
        if !delta.is_zero() {
            c0.push(&delta * &complement);
        }
    }
    Ok(ConstraintSet::new(
        p.vars.clone(),
        c0,
        p.inequalities.clone(),
        Provenance::FjGram,
    ))
}

/// Instance whose feasible set is the singular locus of the original one:
/// points where the active constraint gradients drop below the rank bound.
/// For each subset ν the (m+|ν|)-minors of [all ∇e_j, ∇q_{j∈ν}] are
/// multiplied by the inactive-inequality product and reduced to primitive
/// part. The empty minor (size 0) counts as the constant 1, so with no
/// equalities the ν = ∅ row is the product of all inequalities, and with no
/// constraints at all the system is inconsistent and the branch dies.
pub fn build_singular(
    p: &ProblemInstance,
    rank_bound: Option<usize>,
) -> Result<ProblemInstance, ConstraintError> {
    let n = p.nvars();
    let n1 = p.equalities.len();
    let n2 = p.inequalities.len();
    let m = rank_bound.unwrap_or(n1);
    if m > n1 {
        return Err(ConstraintError::RankBound { m, n1 });
    }
    let grads_e: Vec<Vec<QPoly>> = p.equalities.iter().map(|g| gradient(g)).collect();
    let grads_q: Vec<Vec<QPoly>> = p.inequalities.iter().map(|g| gradient(g)).collect();

    let mut eqs = p.equalities.clone();
    for nu in subsets_by_size(n2) {
        let k = m + nu.len();
        let complement = complement_product(&p.inequalities, &nu, n);
        if k == 0 {
            eqs.push(complement.primitive_part());
            continue;
        }
        if k > n {
            continue;
        }
        let mut cols: Vec<Vec<QPoly>> = grads_e.to_vec();
        for &j in &nu {
            cols.push(grads_q[j].clone());
        }
        if k > cols.len() {
            continue;
        }
        for d in jacobian_minors(&cols, k, false)? {
            let sigma = &d * &complement;
            if !sigma.is_zero() {
                eqs.push(sigma.primitive_part());
            }
        }
    }
    ProblemInstance::new(
        p.vars.clone(),
        p.objective.clone(),
        dedup_nonzero(eqs),
        p.inequalities.clone(),
    )
}

/// All 2^k square-free products of the inequalities, mask order (the empty
/// product, the constant 1, comes first). Each product indexes one
/// localizing block of the relaxation.
pub fn preordering_products(
    nvars: usize,
    inequalities: &[QPoly],
    bound: usize,
) -> Result<Vec<QPoly>, ConstraintError> {
    let n2 = inequalities.len();
    if n2 > bound {
        return Err(ConstraintError::TooManyInequalities {
            count: n2,
            products: 1usize << n2,
            bound,
        });
    }
    let mut out = Vec::with_capacity(1 << n2);
    for mask in 0..(1usize << n2) {
        let mut prod = QPoly::one(nvars);
        for (j, g) in inequalities.iter().enumerate() {
            if mask & (1 << j) != 0 {
                prod = &prod * g;
            }
        }
        out.push(prod);
    }
    Ok(out)
}

/// Pin the objective to a known optimal value: the instance gains the
/// equality f − f*, so its feasible set is exactly the minimizer set.
pub fn apply_known_minimum(p: &ProblemInstance, fstar: &BigRational) -> ProblemInstance {
    let shift = Poly::constant(p.nvars(), fstar.clone());
    let pinned = &p.objective - &shift;
    let mut equalities = p.equalities.clone();
    if !pinned.is_zero() {
        equalities.push(pinned);
    }
    ProblemInstance {
        vars: p.vars.clone(),
        objective: p.objective.clone(),
        equalities: dedup_nonzero(equalities),
        inequalities: p.inequalities.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::calculus::{determinant, partial_derivative};
    use crate::poly::parse_poly;
    use num_traits::Zero;

    fn vars(names: &[&str]) -> VarSpace {
        VarSpace::new(names.to_vec()).unwrap()
    }

    fn qp(src: &str, vs: &VarSpace) -> QPoly {
        parse_poly(src, vs).unwrap()
    }

    fn cubic_halfline() -> ProblemInstance {
        let vs = vars(&["x"]);
        ProblemInstance::new(
            vs.clone(),
            qp("x", &vs),
            vec![],
            vec![qp("x^3", &vs)],
        )
        .unwrap()
    }

    fn torus() -> ProblemInstance {
        let vs = vars(&["x", "y", "z"]);
        ProblemInstance::new(
            vs.clone(),
            qp("z", &vs),
            vec![qp("(x^2 + y^2 + z^2 + 3)^2 - 16*x^2 - 16*y^2", &vs)],
            vec![],
        )
        .unwrap()
    }

    fn perturbed_form_on_ball() -> ProblemInstance {
        let vs = vars(&["x", "y", "z"]);
        ProblemInstance::new(
            vs.clone(),
            qp(
                "x^4*y^2 + x^2*y^4 - 3*x^2*y^2*z^2 + z^6 + 0.005*x^6 + 0.005*y^6 + 0.005*z^6",
                &vs,
            ),
            vec![],
            vec![qp("1 - x^2 - y^2 - z^2", &vs)],
        )
        .unwrap()
    }

    fn sextic_form_on_ball() -> ProblemInstance {
        let vs = vars(&["x", "y", "z"]);
        ProblemInstance::new(
            vs.clone(),
            qp("x^4*y^2 + x^2*y^4 - 3*x^2*y^2*z^2 + z^6", &vs),
            vec![],
            vec![qp("1 - x^2 - y^2 - z^2", &vs)],
        )
        .unwrap()
    }

    #[test]
    fn lifted_system_of_cubic_halfline() {
        let set = build_kkt_lifted(&cubic_halfline());
        let lifted = vars(&["x", "v1"]);
        assert_eq!(set.vars.names(), lifted.names());
        assert_eq!(
            set.equalities,
            vec![qp("1 - 3*v1*x^2", &lifted), qp("v1*x^3", &lifted)]
        );
        assert_eq!(set.inequalities, vec![qp("x^3", &lifted)]);
        assert!(!set.symbolically_infeasible);
    }

    #[test]
    fn lifted_system_without_constraints_is_the_gradient() {
        let vs = vars(&["x", "y"]);
        let p = ProblemInstance::new(
            vs.clone(),
            qp("x^4*y^2 + x^2*y^4 - 3*x^2*y^2 + 1", &vs),
            vec![],
            vec![],
        )
        .unwrap();
        let set = build_kkt_lifted(&p);
        assert_eq!(set.equalities, gradient(&p.objective));
        assert!(set.inequalities.is_empty());
    }

    #[test]
    fn lifted_torus_matches_differentiation_oracle() {
        let p = torus();
        let set = build_kkt_lifted(&p);
        let lifted = p.vars.extended("u", 1);
        let u1 = QPoly::var(4, 3).unwrap();
        let g = p.equalities[0].extend_vars(4);
        let mut expect = Vec::new();
        for i in 0..3 {
            let dg = partial_derivative(&g, i).unwrap();
            let df = partial_derivative(&p.objective.extend_vars(4), i).unwrap();
            expect.push(&df - &(&u1 * &dg));
        }
        expect.push(g);
        assert_eq!(set.vars.names(), lifted.names());
        assert_eq!(set.equalities, expect);
    }

    #[test]
    fn lifted_members_are_affine_in_the_multipliers() {
        for p in [cubic_halfline(), torus(), perturbed_form_on_ball()] {
            let n = p.nvars();
            let n1 = p.equalities.len();
            let n2 = p.inequalities.len();
            let set = build_kkt_lifted(&p);
            for (idx, poly) in set.equalities.iter().enumerate() {
                for (exps, _) in poly.terms() {
                    let lifted_deg: u16 = exps[n..].iter().sum();
                    assert!(lifted_deg <= 1, "multiplier degree above 1 in member {idx}");
                    if idx >= n + n1 {
                        // complementarity rows are exactly linear in (u, v)
                        assert_eq!(lifted_deg, 1);
                    }
                }
            }
            assert_eq!(set.equalities.len(), n + n1 + n2);
        }
    }

    #[test]
    fn eliminated_cubic_halfline_is_symbolically_infeasible() {
        let set = build_kkt_eliminated(&cubic_halfline(), &BuchbergerBudget::default()).unwrap();
        assert!(set.symbolically_infeasible);
        assert_eq!(set.equalities, vec![QPoly::one(1)]);
        assert_eq!(set.provenance, Provenance::KktEliminated);
    }

    #[test]
    fn eliminated_zero_objective_returns_equalities() {
        let vs = vars(&["x", "y"]);
        let circle = qp("x^2 + y^2 - 1", &vs);
        let p = ProblemInstance::new(
            vs.clone(),
            QPoly::zero(2),
            vec![circle.clone()],
            vec![qp("x", &vs)],
        )
        .unwrap();
        let set = build_kkt_eliminated(&p, &BuchbergerBudget::default()).unwrap();
        assert_eq!(set.equalities, vec![circle]);
        assert_eq!(set.inequalities, vec![qp("x", &vs)]);
    }

    #[test]
    fn eliminated_unconstrained_is_the_gradient() {
        let vs = vars(&["x", "y"]);
        let p =
            ProblemInstance::new(vs.clone(), qp("x^4 + y^4", &vs), vec![], vec![]).unwrap();
        let set = build_kkt_eliminated(&p, &BuchbergerBudget::default()).unwrap();
        assert_eq!(set.equalities, vec![qp("4*x^3", &vs), qp("4*y^3", &vs)]);
    }

    #[test]
    fn minor_system_of_perturbed_form_lists_hand_values() {
        let p = perturbed_form_on_ball();
        let set = build_fj_minors(&p, None).unwrap();
        let vs = &p.vars;
        // three gradient rows times the ball polynomial, then three minors
        assert_eq!(set.equalities.len(), 6);
        let h = &p.inequalities[0];
        for i in 0..3 {
            let expected = &partial_derivative(&p.objective, i).unwrap() * h;
            assert!(set.equalities.contains(&expected), "missing row {i}");
        }
        let quoted = qp(
            "-4*x^4*y*z - 20*x^2*y^3*z + 12*x^2*y*z^3 - 0.06*y^5*z + 12.06*y*z^5",
            vs,
        );
        assert!(set.equalities.contains(&quoted));
    }

    #[test]
    fn minor_system_of_sextic_form_lists_hand_values() {
        let p = sextic_form_on_ball();
        let set = build_fj_minors(&p, None).unwrap();
        assert_eq!(set.equalities.len(), 6);
        let quoted = qp("4*x^5*y - 4*x*y^5 + 12*x*y^3*z^2 - 12*x^3*y*z^2", &p.vars);
        assert!(set.equalities.contains(&quoted));
    }

    #[test]
    fn minor_system_without_constraints_is_the_gradient() {
        let vs = vars(&["x", "y"]);
        let p = ProblemInstance::new(vs.clone(), qp("x^2 + y^2", &vs), vec![], vec![]).unwrap();
        let set = build_fj_minors(&p, None).unwrap();
        assert_eq!(set.equalities, vec![qp("2*x", &vs), qp("2*y", &vs)]);
    }

    #[test]
    fn gram_system_of_unconstrained_pair_is_gradient_norm() {
        let vs = vars(&["x", "y"]);
        let p = ProblemInstance::new(vs.clone(), qp("x^2 + y^2", &vs), vec![], vec![]).unwrap();
        let set = build_fj_gram(&p, None).unwrap();
        assert_eq!(set.equalities, vec![qp("4*x^2 + 4*y^2", &vs)]);
    }

    #[test]
    fn gram_system_skips_full_rank_varieties() {
        // three equalities in three variables leave no room for minors
        let vs = vars(&["x", "y", "z"]);
        let eqs = vec![
            qp("x^2 - y + 1", &vs),
            qp("z - x*y + x", &vs),
            qp("x*z - y^2 + 2*y - 1", &vs),
        ];
        let p = ProblemInstance::new(
            vs.clone(),
            qp("x^2 + y^2 + z^2", &vs),
            eqs.clone(),
            vec![],
        )
        .unwrap();
        let set = build_fj_gram(&p, None).unwrap();
        assert_eq!(set.equalities, eqs);
        assert!(build_fj_gram(&p, Some(1)).is_err());
    }

    #[test]
    fn gram_determinant_is_sum_of_squared_minors() {
        // Cauchy-Binet oracle on the torus and ball instances
        for p in [torus(), perturbed_form_on_ball()] {
            let mut cols = vec![gradient(&p.objective)];
            for g in &p.equalities {
                cols.push(gradient(g));
            }
            for g in &p.inequalities {
                cols.push(gradient(g));
            }
            let k = cols.len();
            let gram = gram_determinant(&cols).unwrap();
            let mut sum = QPoly::zero(p.nvars());
            for rows in combinations(p.nvars(), k) {
                let sub: Vec<Vec<QPoly>> = rows
                    .iter()
                    .map(|&r| cols.iter().map(|c| c[r].clone()).collect())
                    .collect();
                let d = determinant(&sub);
                sum = &sum + &(&d * &d);
            }
            assert_eq!(gram, sum);
        }
    }

    #[test]
    fn singular_system_of_cubic_halfline() {
        let p = cubic_halfline();
        let s = build_singular(&p, None).unwrap();
        let vs = &p.vars;
        let mut got = s.equalities.clone();
        got.sort_by_key(|q| q.degree());
        assert_eq!(got, vec![qp("x^2", vs), qp("x^3", vs)]);
        assert_eq!(s.objective, p.objective);
        assert_eq!(s.inequalities, p.inequalities);
    }

    #[test]
    fn singular_system_without_constraints_is_inconsistent() {
        let vs = vars(&["x", "y"]);
        let p = ProblemInstance::new(vs.clone(), qp("x^2 + y^2", &vs), vec![], vec![]).unwrap();
        let s = build_singular(&p, None).unwrap();
        assert_eq!(s.equalities, vec![QPoly::one(2)]);
        assert!(s.symbolically_inconsistent());
    }

    #[test]
    fn singular_minors_are_primitive() {
        // gradients scale the minors by constants; emitted rows are primitive
        let p = torus();
        let s = build_singular(&p, None).unwrap();
        for q in &s.equalities {
            assert_eq!(q.primitive_part(), q.clone());
        }
        // the torus itself is smooth, so its singular rows are the torus
        // polynomial plus the primitive gradient entries
        assert!(s.equalities.len() > 1);
    }

    #[test]
    fn preordering_products_enumerate_masks() {
        let vs = vars(&["x", "y"]);
        let g1 = qp("x", &vs);
        let g2 = qp("1 - y", &vs);
        assert_eq!(
            preordering_products(2, &[], PREORDERING_BOUND).unwrap(),
            vec![QPoly::one(2)]
        );
        assert_eq!(
            preordering_products(2, &[g1.clone()], PREORDERING_BOUND).unwrap(),
            vec![QPoly::one(2), g1.clone()]
        );
        assert_eq!(
            preordering_products(2, &[g1.clone(), g2.clone()], PREORDERING_BOUND).unwrap(),
            vec![QPoly::one(2), g1.clone(), g2.clone(), &g1 * &g2]
        );
        let seven = vec![g1; 7];
        assert!(matches!(
            preordering_products(2, &seven, PREORDERING_BOUND),
            Err(ConstraintError::TooManyInequalities { count: 7, .. })
        ));
    }

    #[test]
    fn known_minimum_pins_the_objective() {
        let vs = vars(&["x", "y"]);
        let motzkin = qp("x^4*y^2 + x^2*y^4 - 3*x^2*y^2 + 1", &vs);
        let p = ProblemInstance::new(vs.clone(), motzkin.clone(), vec![], vec![]).unwrap();
        let pinned = apply_known_minimum(&p, &BigRational::zero());
        assert_eq!(pinned.equalities, vec![motzkin]);

        let t = torus();
        let pinned = apply_known_minimum(&t, &BigRational::from_integer((-1).into()));
        assert_eq!(pinned.equalities.len(), 2);
        assert_eq!(pinned.equalities[1], qp("z + 1", &t.vars));

        let c = ProblemInstance::new(
            vs.clone(),
            QPoly::constant(2, BigRational::from_integer(5.into())),
            vec![],
            vec![],
        )
        .unwrap();
        let pinned = apply_known_minimum(&c, &BigRational::from_integer(5.into()));
        assert!(pinned.equalities.is_empty());
    }
}
