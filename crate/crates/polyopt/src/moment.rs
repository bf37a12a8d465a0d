//! Assembly of truncated moment relaxations.
//!
//! The order-t relaxation of an instance minimizes a linear functional Λ over
//! pseudo-moment sequences: Λ(1) = 1, the localizing matrix of every
//! square-free inequality product is positive semidefinite, and Λ annihilates
//! every equality times every monomial that fits the degree budget. Moment
//! variables are indexed by the canonical ascending monomial list of degree
//! at most 2t; the constant moment is pinned to one and excluded from the
//! variable vector.

use crate::constraints::{preordering_products, ConstraintError, ConstraintSet};
use crate::poly::{monomial_basis, FPoly, QPoly, VarSpace};
use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MomentError {
    #[error("order {order} is too small: {polynomial} has degree {degree} > 2t = {max}")]
    OrderTooSmall {
        order: usize,
        degree: usize,
        max: usize,
        polynomial: String,
    },
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

/// Sorted monomial list with reverse lookup.
#[derive(Debug, Clone)]
pub struct MonomialTable {
    nvars: usize,
    monos: Vec<Vec<u16>>,
    index: BTreeMap<Vec<u16>, usize>,
}

impl MonomialTable {
    pub fn new(nvars: usize, degree: usize) -> Self {
        let monos = monomial_basis(nvars, degree);
        let index = monos
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        MonomialTable {
            nvars,
            monos,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.monos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monos.is_empty()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn monomial(&self, i: usize) -> &[u16] {
        &self.monos[i]
    }

    pub fn monomials(&self) -> &[Vec<u16>] {
        &self.monos
    }

    pub fn index_of(&self, exponents: &[u16]) -> Option<usize> {
        self.index.get(exponents).copied()
    }
}

/// A pseudo-moment sequence: values y_α for all |α| ≤ 2t, with y_0 = 1.
#[derive(Debug, Clone)]
pub struct LinearForm {
    order: usize,
    table: MonomialTable,
    values: Vec<f64>,
}

impl LinearForm {
    /// Wrap a solver moment vector (which excludes the constant) into a
    /// linear form with y_0 = 1.
    pub fn from_moment_vars(nvars: usize, order: usize, vars: &[f64]) -> Self {
        let table = MonomialTable::new(nvars, 2 * order);
        assert_eq!(vars.len() + 1, table.len(), "moment vector length mismatch");
        let mut values = Vec::with_capacity(table.len());
        values.push(1.0);
        values.extend_from_slice(vars);
        LinearForm {
            order,
            table,
            values,
        }
    }

    /// The evaluation functional p ↦ p(point): y_α = point^α.
    pub fn evaluation(point: &[f64], order: usize) -> Self {
        let table = MonomialTable::new(point.len(), 2 * order);
        let values = table
            .monomials()
            .iter()
            .map(|m| {
                m.iter()
                    .zip(point)
                    .map(|(&e, &x)| x.powi(i32::from(e)))
                    .product()
            })
            .collect();
        LinearForm {
            order,
            table,
            values,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nvars(&self) -> usize {
        self.table.nvars()
    }

    pub fn moment(&self, exponents: &[u16]) -> f64 {
        let i = self
            .table
            .index_of(exponents)
            .expect("moment degree exceeds 2t");
        self.values[i]
    }

    /// Λ applied to a float polynomial.
    pub fn apply(&self, p: &FPoly) -> f64 {
        p.terms().map(|(e, c)| c * self.moment(e)).sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Dense truncated moment matrix M^t_Λ: entry (α, β) = y_{α+β}.
#[derive(Debug, Clone)]
pub struct MomentMatrix {
    pub order: usize,
    pub basis: Vec<Vec<u16>>,
    pub mat: DMatrix<f64>,
}

/// The matrix over the degree-≤ t' basis. Needs 2t' worth of moments.
pub fn moment_matrix(lf: &LinearForm, order: usize) -> MomentMatrix {
    assert!(order <= lf.order(), "sub-order exceeds the form's order");
    let basis = monomial_basis(lf.nvars(), order);
    let s = basis.len();
    let mut mat = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in i..s {
            let sum: Vec<u16> = basis[i]
                .iter()
                .zip(&basis[j])
                .map(|(&a, &b)| a + b)
                .collect();
            let v = lf.moment(&sum);
            mat[(i, j)] = v;
            mat[(j, i)] = v;
        }
    }
    MomentMatrix { order, basis, mat }
}

/// One PSD block: the localizing matrix of a product q, over the monomial
/// basis of degree ≤ t − ⌈deg q / 2⌉. Entries are affine in the moment
/// variables; the constant part comes from terms landing on y_0. Only the
/// upper triangle is stored.
#[derive(Debug, Clone)]
pub struct LocalizingBlock {
    pub product_index: usize,
    pub size: usize,
    pub sub_basis: Vec<Vec<u16>>,
    pub c0_entries: Vec<(usize, usize, f64)>,
    /// entries[v] lists the (i, j, coeff) contributions of moment variable v.
    pub entries: Vec<Vec<(usize, usize, f64)>>,
}

/// One linear equality Λ(x^α c) = 0, expanded over the moment variables.
/// The y_0 contribution is moved to the right-hand side. Coefficients stay
/// exact so rows can be preprocessed without rounding.
#[derive(Debug, Clone)]
pub struct EqualityRow {
    pub c_index: usize,
    pub alpha: Vec<u16>,
    pub coeffs: Vec<BigRational>,
    pub rhs: BigRational,
}

/// The assembled order-t relaxation.
#[derive(Debug, Clone)]
pub struct MomentRelaxation {
    pub vars: VarSpace,
    pub order: usize,
    pub table: MonomialTable,
    pub products: Vec<QPoly>,
    pub blocks: Vec<LocalizingBlock>,
    pub equalities: Vec<EqualityRow>,
    /// Objective Λ(f) = offset + coeffs · y over the moment variables.
    pub objective: Vec<BigRational>,
    pub objective_offset: BigRational,
    pub quadratic_module: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AssembleOptions {
    /// Use only {1} and the individual inequalities as localizing products
    /// instead of all square-free products.
    pub quadratic_module: bool,
    pub product_bound: usize,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions {
            quadratic_module: false,
            product_bound: crate::constraints::PREORDERING_BOUND,
        }
    }
}

/// Build the order-t relaxation of minimizing `f` over the constraint set.
pub fn assemble(
    f: &QPoly,
    set: &ConstraintSet,
    order: usize,
    opts: &AssembleOptions,
) -> Result<MomentRelaxation, MomentError> {
    let n = set.nvars();
    let max_deg = 2 * order;
    let check = |p: &QPoly, label: Option<&str>| -> Result<(), MomentError> {
        let degree = p.degree().unwrap_or(0);
        if degree > max_deg {
            let polynomial = match label {
                Some(l) => format!("{l} {}", p.display(&set.vars)),
                None => format!("{}", p.display(&set.vars)),
            };
            return Err(MomentError::OrderTooSmall {
                order,
                degree,
                max: max_deg,
                polynomial,
            });
        }
        Ok(())
    };
    check(f, Some("objective"))?;
    for c in set.equalities.iter().chain(&set.inequalities) {
        check(c, None)?;
    }

    let table = MonomialTable::new(n, max_deg);
    let nv = table.len() - 1;

    let products = if opts.quadratic_module {
        let mut p = vec![QPoly::one(n)];
        p.extend(set.inequalities.iter().cloned());
        p
    } else {
        preordering_products(n, &set.inequalities, opts.product_bound)?
    };

    let mut blocks = Vec::new();
    for (pi, q) in products.iter().enumerate() {
        let dq = q.degree().unwrap_or(0).div_ceil(2);
        if dq > order {
            // the product outgrows this order; higher orders pick it up
            continue;
        }
        let sub_basis = monomial_basis(n, order - dq);
        let size = sub_basis.len();
        let mut c0_entries = Vec::new();
        let mut entries = vec![Vec::new(); nv];
        for i in 0..size {
            for j in i..size {
                for (e, c) in q.terms() {
                    let target: Vec<u16> = sub_basis[i]
                        .iter()
                        .zip(&sub_basis[j])
                        .zip(e)
                        .map(|((&a, &b), &t)| a + b + t)
                        .collect();
                    let idx = table.index_of(&target).expect("entry within 2t");
                    let cf = c.to_f64().expect("finite coefficient");
                    if idx == 0 {
                        c0_entries.push((i, j, cf));
                    } else {
                        entries[idx - 1].push((i, j, cf));
                    }
                }
            }
        }
        blocks.push(LocalizingBlock {
            product_index: pi,
            size,
            sub_basis,
            c0_entries,
            entries,
        });
    }

    let mut equalities: Vec<EqualityRow> = Vec::new();
    let mut seen: std::collections::BTreeSet<Vec<BigRational>> = std::collections::BTreeSet::new();
    for (ci, c) in set.equalities.iter().enumerate() {
        let dc = c.degree().unwrap_or(0);
        for alpha in monomial_basis(n, max_deg - dc) {
            let mut coeffs = vec![BigRational::zero(); nv];
            let mut rhs = BigRational::zero();
            for (e, cf) in c.terms() {
                let target: Vec<u16> = alpha.iter().zip(e).map(|(&a, &b)| a + b).collect();
                let idx = table.index_of(&target).expect("row within 2t");
                if idx == 0 {
                    rhs -= cf.clone();
                } else {
                    coeffs[idx - 1] += cf.clone();
                }
            }
            if coeffs.iter().all(|c| c.is_zero()) && rhs.is_zero() {
                continue;
            }
            // normalize by the first nonzero coefficient so scalar multiples
            // of the same row deduplicate
            let pivot = coeffs
                .iter()
                .chain(std::iter::once(&rhs))
                .find(|c| !c.is_zero())
                .cloned()
                .unwrap();
            let mut normalized: Vec<BigRational> =
                coeffs.iter().map(|c| c / &pivot).collect();
            normalized.push(&rhs / &pivot);
            if seen.insert(normalized) {
                equalities.push(EqualityRow {
                    c_index: ci,
                    alpha,
                    coeffs,
                    rhs,
                });
            }
        }
    }

    let mut objective = vec![BigRational::zero(); nv];
    let mut objective_offset = BigRational::zero();
    for (e, cf) in f.terms() {
        let idx = table.index_of(e).expect("objective within 2t");
        if idx == 0 {
            objective_offset += cf.clone();
        } else {
            objective[idx - 1] += cf.clone();
        }
    }

    let mut warnings = Vec::new();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for p in std::iter::once(f)
        .chain(&set.equalities)
        .chain(&set.inequalities)
    {
        for (_, c) in p.terms() {
            let a = c.to_f64().unwrap_or(0.0).abs();
            if a > 0.0 {
                lo = lo.min(a);
                hi = hi.max(a);
            }
        }
    }
    if hi > 0.0 && hi / lo > 1e10 {
        warnings.push(format!(
            "coefficient magnitudes span {:.1e}..{:.1e}; the relaxation may be ill-conditioned",
            lo, hi
        ));
    }

    Ok(MomentRelaxation {
        vars: set.vars.clone(),
        order,
        table,
        products,
        blocks,
        equalities,
        objective,
        objective_offset,
        quadratic_module: opts.quadratic_module,
        warnings,
    })
}

impl MomentRelaxation {
    pub fn num_moment_vars(&self) -> usize {
        self.table.len() - 1
    }

    /// Value of the block's localizing matrix under a given form.
    pub fn block_matrix(&self, b: usize, lf: &LinearForm) -> DMatrix<f64> {
        let block = &self.blocks[b];
        let s = block.size;
        let mut m = DMatrix::zeros(s, s);
        for &(i, j, c) in &block.c0_entries {
            m[(i, j)] += c;
        }
        for (v, contribs) in block.entries.iter().enumerate() {
            if contribs.is_empty() {
                continue;
            }
            let y = lf.moment(self.table.monomial(v + 1));
            for &(i, j, c) in contribs {
                m[(i, j)] += c * y;
            }
        }
        for i in 0..s {
            for j in (i + 1)..s {
                m[(j, i)] = m[(i, j)];
            }
        }
        m
    }

    /// Largest violation of the equality rows under a given form.
    pub fn equality_residual(&self, lf: &LinearForm) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.equalities {
            let mut acc = -row.rhs.to_f64().unwrap();
            for (v, c) in row.coeffs.iter().enumerate() {
                if !c.is_zero() {
                    acc += c.to_f64().unwrap() * lf.moment(self.table.monomial(v + 1));
                }
            }
            worst = worst.max(acc.abs());
        }
        worst
    }

    /// Smallest eigenvalue over all localizing blocks under a given form.
    pub fn min_block_eigenvalue(&self, lf: &LinearForm) -> f64 {
        let mut min = f64::INFINITY;
        for b in 0..self.blocks.len() {
            let m = self.block_matrix(b, lf);
            let eig = m.symmetric_eigen();
            for v in eig.eigenvalues.iter() {
                min = min.min(*v);
            }
        }
        min
    }

    /// Λ(f) under a given form.
    pub fn objective_value(&self, lf: &LinearForm) -> f64 {
        let mut acc = self.objective_offset.to_f64().unwrap();
        for (v, c) in self.objective.iter().enumerate() {
            if !c.is_zero() {
                acc += c.to_f64().unwrap() * lf.moment(self.table.monomial(v + 1));
            }
        }
        acc
    }
}
