//! Sparse multivariate polynomials over exact rational and floating
//! coefficient domains.
//!
//! Every symbolic construction in this crate (derivatives, minors, Groebner
//! bases, relaxation rows) runs over `QPoly` with arbitrary-precision
//! rational coefficients; `FPoly` with `f64` coefficients appears only on the
//! numerical side. The conversion is explicit and one-way (`QPoly::to_float`).

pub mod calculus;
pub mod order;
pub mod parse;

pub use order::MonomialOrder;
pub use parse::{parse_poly, ParseError};

use num_rational::BigRational;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use thiserror::Error;

/// Shared requirements on a coefficient domain: a field with explicit zero
/// and one, closed under the four operations, with conversion from small
/// integers (needed when a derivative multiplies by an exponent).
pub trait Coeff:
    Clone
    + PartialEq
    + fmt::Debug
    + Zero
    + One
    + Neg<Output = Self>
    + Sub<Output = Self>
    + Div<Output = Self>
    + FromPrimitive
{
}

impl<T> Coeff for T where
    T: Clone
        + PartialEq
        + fmt::Debug
        + Zero
        + One
        + Neg<Output = T>
        + Sub<Output = T>
        + Div<Output = T>
        + FromPrimitive
{
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("variable index {index} out of range for {nvars} variables")]
    UnknownVariable { index: usize, nvars: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("minor size {k} exceeds matrix dimensions {rows}x{cols}")]
    MinorSize { k: usize, rows: usize, cols: usize },
    #[error("polynomials live in different variable counts ({left} vs {right})")]
    MixedSpaces { left: usize, right: usize },
    #[error("invalid variable name {name:?}: {reason}")]
    BadVariableName { name: String, reason: String },
}

/// Ordered list of variable names. Base variables come first; lifted
/// multiplier variables are appended on demand and never collide with
/// existing names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarSpace {
    names: Vec<String>,
}

impl VarSpace {
    pub fn new<S: Into<String>>(names: Vec<S>) -> Result<Self, PolyError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(PolyError::BadVariableName {
                name: String::new(),
                reason: "at least one variable is required".into(),
            });
        }
        for n in &names {
            if !is_identifier(n) {
                return Err(PolyError::BadVariableName {
                    name: n.clone(),
                    reason: "not an identifier".into(),
                });
            }
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(PolyError::BadVariableName {
                    name: n.clone(),
                    reason: "duplicate variable".into(),
                });
            }
        }
        Ok(VarSpace { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Append `count` fresh variables named `stem1..stemN`, prefixing
    /// underscores until the names avoid every existing one.
    pub fn extended(&self, stem: &str, count: usize) -> VarSpace {
        let mut names = self.names.clone();
        for k in 1..=count {
            let mut candidate = format!("{stem}{k}");
            while names.contains(&candidate) {
                candidate.insert(0, '_');
            }
            names.push(candidate);
        }
        VarSpace { names }
    }

    /// Keep only the first `keep` variables (projection onto the base block).
    pub fn restricted(&self, keep: usize) -> VarSpace {
        VarSpace {
            names: self.names[..keep].to_vec(),
        }
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Sparse multivariate polynomial.
///
/// Invariants: every exponent key has length `nvars`; no zero coefficient is
/// stored (the zero polynomial has an empty term map, and its degree is
/// `None`). Term iteration order is the structural order of the exponent
/// vectors, which is deterministic but unrelated to any monomial order.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<C> {
    nvars: usize,
    terms: BTreeMap<Vec<u16>, C>,
}

pub type QPoly = Poly<BigRational>;
pub type FPoly = Poly<f64>;

impl<C: Coeff> Poly<C> {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: C) -> Self {
        let mut p = Poly::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    pub fn one(nvars: usize) -> Self {
        Poly::constant(nvars, C::one())
    }

    /// The variable x_i as a polynomial.
    pub fn var(nvars: usize, i: usize) -> Result<Self, PolyError> {
        if i >= nvars {
            return Err(PolyError::UnknownVariable { index: i, nvars });
        }
        let mut e = vec![0u16; nvars];
        e[i] = 1;
        let mut p = Poly::zero(nvars);
        p.terms.insert(e, C::one());
        Ok(p)
    }

    pub fn monomial(exponents: Vec<u16>, c: C) -> Self {
        let nvars = exponents.len();
        let mut p = Poly::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(exponents, c);
        }
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Vec<u16>, C)>) -> Self {
        let mut p = Poly::zero(nvars);
        for (e, c) in terms {
            debug_assert_eq!(e.len(), nvars);
            p.add_term(e, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u16], &C)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), c))
    }

    pub fn coeff(&self, exponents: &[u16]) -> Option<&C> {
        self.terms.get(exponents)
    }

    pub fn constant_term(&self) -> C {
        self.terms
            .get(vec![0u16; self.nvars].as_slice())
            .cloned()
            .unwrap_or_else(C::zero)
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&x| usize::from(x)).sum())
            .max()
    }

    /// True when the polynomial is a (possibly zero) constant.
    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&x| x == 0))
    }

    fn add_term(&mut self, e: Vec<u16>, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().clone() + c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn scale(&self, c: &C) -> Self {
        if c.is_zero() {
            return Poly::zero(self.nvars);
        }
        let mut out = Poly::zero(self.nvars);
        for (e, v) in &self.terms {
            out.add_term(e.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut acc = Poly::one(self.nvars);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Leading term under `ord`.
    pub fn leading(&self, ord: MonomialOrder) -> Option<(&[u16], &C)> {
        self.terms
            .iter()
            .max_by(|(a, _), (b, _)| ord.cmp(a, b))
            .map(|(e, c)| (e.as_slice(), c))
    }

    /// Direct term-sum evaluation (no Horner scheme).
    pub fn evaluate(&self, point: &[C]) -> Result<C, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: point.len(),
            });
        }
        let mut total = C::zero();
        for (e, c) in &self.terms {
            let mut term = c.clone();
            for (i, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    term = term * point[i].clone();
                }
            }
            total = total + term;
        }
        Ok(total)
    }

    /// Reinterpret in a larger variable space; new exponents are zero.
    pub fn extend_vars(&self, nvars: usize) -> Self {
        assert!(nvars >= self.nvars, "cannot shrink a variable space");
        let mut out = Poly::zero(nvars);
        for (e, c) in &self.terms {
            let mut e2 = e.clone();
            e2.resize(nvars, 0);
            out.terms.insert(e2, c.clone());
        }
        out
    }

    /// Project onto the first `keep` variables; `None` when the polynomial
    /// actually involves a dropped variable.
    pub fn project_to(&self, keep: usize) -> Option<Self> {
        let mut out = Poly::zero(keep);
        for (e, c) in &self.terms {
            if e[keep..].iter().any(|&x| x != 0) {
                return None;
            }
            out.terms.insert(e[..keep].to_vec(), c.clone());
        }
        Some(out)
    }

    /// Render using the given variable names.
    pub fn display<'a>(&'a self, vars: &'a VarSpace) -> PolyDisplay<'a, C> {
        assert_eq!(vars.len(), self.nvars);
        PolyDisplay { poly: self, vars }
    }
}

impl QPoly {
    /// One-way conversion into the floating domain.
    pub fn to_float(&self) -> FPoly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            out.terms
                .insert(e.clone(), c.to_f64().expect("rational out of f64 range"));
        }
        out
    }

    /// Divide by the rational content and normalize the sign so the leading
    /// grevlex coefficient is positive: the unique primitive integer form.
    pub fn primitive_part(&self) -> QPoly {
        use num_bigint::BigInt;
        use num_integer::Integer as _;
        if self.is_zero() {
            return self.clone();
        }
        let mut denom_lcm = BigInt::from(1);
        for c in self.terms.values() {
            denom_lcm = denom_lcm.lcm(c.denom());
        }
        let mut numer_gcd = BigInt::from(0);
        for c in self.terms.values() {
            let scaled = c.numer() * (&denom_lcm / c.denom());
            numer_gcd = numer_gcd.gcd(&scaled);
        }
        let content = BigRational::new(numer_gcd, denom_lcm);
        let mut out = self.scale(&content.recip());
        let (_, lc) = out.leading(MonomialOrder::GrevLex).expect("nonzero");
        if lc < &BigRational::zero() {
            out = -&out;
        }
        out
    }

    /// Divide by the leading coefficient under `ord`.
    pub fn monic(&self, ord: MonomialOrder) -> QPoly {
        match self.leading(ord) {
            None => self.clone(),
            Some((_, lc)) => {
                let inv = lc.clone().recip();
                self.scale(&inv)
            }
        }
    }
}

impl FPoly {
    /// Euclidean norm of the coefficient vector.
    pub fn coeff_norm(&self) -> f64 {
        self.terms.values().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Largest coefficient magnitude.
    pub fn coeff_max(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Drop terms with |coefficient| <= tol.
    pub fn clip(&self, tol: f64) -> FPoly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if c.abs() > tol {
                out.terms.insert(e.clone(), *c);
            }
        }
        out
    }
}

impl<C: Coeff> Add for &Poly<C> {
    type Output = Poly<C>;
    fn add(self, rhs: &Poly<C>) -> Poly<C> {
        assert_eq!(self.nvars, rhs.nvars, "mixed variable spaces");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl<C: Coeff> Sub for &Poly<C> {
    type Output = Poly<C>;
    fn sub(self, rhs: &Poly<C>) -> Poly<C> {
        assert_eq!(self.nvars, rhs.nvars, "mixed variable spaces");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }
}

impl<C: Coeff> Neg for &Poly<C> {
    type Output = Poly<C>;
    fn neg(self) -> Poly<C> {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            out.terms.insert(e.clone(), -c.clone());
        }
        out
    }
}

impl<C: Coeff> Mul for &Poly<C> {
    type Output = Poly<C>;
    fn mul(self, rhs: &Poly<C>) -> Poly<C> {
        assert_eq!(self.nvars, rhs.nvars, "mixed variable spaces");
        let mut out = Poly::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Vec<u16> = ea
                    .iter()
                    .zip(eb)
                    .map(|(&x, &y)| x.checked_add(y).expect("exponent overflow"))
                    .collect();
                out.add_term(e, ca.clone() * cb.clone());
            }
        }
        out
    }
}

/// Sign-aware coefficient rendering for the term printer.
pub trait CoeffDisplay {
    fn is_neg(&self) -> bool;
    fn fmt_abs(&self) -> String;
    fn is_one_abs(&self) -> bool;
}

impl CoeffDisplay for BigRational {
    fn is_neg(&self) -> bool {
        self < &BigRational::zero()
    }
    // prefer a form the polynomial grammar can read back: integers and
    // finite decimals; fall back to p/q only for infinite expansions
    fn fmt_abs(&self) -> String {
        use num_bigint::BigInt;
        let a = if self.is_neg() { -self } else { self.clone() };
        if a.denom() == &BigInt::from(1) {
            return a.numer().to_string();
        }
        let mut pow10 = BigInt::from(10);
        for k in 1..=24u32 {
            if (&pow10 % a.denom()) == BigInt::from(0) {
                let scaled = a.numer() * (&pow10 / a.denom());
                let s = scaled.to_string();
                let k = k as usize;
                let (int_part, frac_part) = if s.len() > k {
                    (s[..s.len() - k].to_string(), s[s.len() - k..].to_string())
                } else {
                    ("0".to_string(), format!("{s:0>k$}"))
                };
                return format!("{int_part}.{frac_part}");
            }
            pow10 *= 10;
        }
        format!("{}/{}", a.numer(), a.denom())
    }
    fn is_one_abs(&self) -> bool {
        self == &BigRational::one() || self == &(-BigRational::one())
    }
}

impl CoeffDisplay for f64 {
    fn is_neg(&self) -> bool {
        *self < 0.0
    }
    fn fmt_abs(&self) -> String {
        format!("{}", self.abs())
    }
    fn is_one_abs(&self) -> bool {
        self.abs() == 1.0
    }
}

pub struct PolyDisplay<'a, C> {
    poly: &'a Poly<C>,
    vars: &'a VarSpace,
}

impl<C: Coeff + CoeffDisplay> fmt::Display for PolyDisplay<'_, C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_zero() {
            return write!(f, "0");
        }
        // descending grevlex for readability
        let mut terms: Vec<(&Vec<u16>, &C)> = self.poly.terms.iter().collect();
        terms.sort_by(|(a, _), (b, _)| MonomialOrder::GrevLex.cmp(b, a));
        for (idx, (e, c)) in terms.iter().enumerate() {
            let neg = c.is_neg();
            if idx == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let is_const = e.iter().all(|&x| x == 0);
            let mut wrote = false;
            if !c.is_one_abs() || is_const {
                write!(f, "{}", c.fmt_abs())?;
                wrote = true;
            }
            for (i, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                if wrote {
                    write!(f, "*")?;
                }
                write!(f, "{}", self.vars.name(i))?;
                if k > 1 {
                    write!(f, "^{k}")?;
                }
                wrote = true;
            }
        }
        Ok(())
    }
}

/// All monomials of total degree <= t in n variables, ascending grevlex
/// (constant first). Cardinality C(n+t, t).
pub fn monomial_basis(n: usize, t: usize) -> Vec<Vec<u16>> {
    assert!(n >= 1, "need at least one variable");
    let mut out = Vec::with_capacity(binomial(n + t, t));
    let mut current = vec![0u16; n];
    gen_monomials(&mut out, &mut current, 0, t);
    out.sort_by(|a, b| MonomialOrder::GrevLex.cmp(a, b));
    out
}

fn gen_monomials(out: &mut Vec<Vec<u16>>, current: &mut Vec<u16>, pos: usize, budget: usize) {
    if pos == current.len() {
        out.push(current.clone());
        return;
    }
    for k in 0..=budget {
        current[pos] = k as u16;
        gen_monomials(out, current, pos + 1, budget - k);
    }
    current[pos] = 0;
}

/// Binomial coefficient as usize; panics on overflow (sizes here are small).
pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    usize::try_from(acc).expect("binomial overflow")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn vars_xy() -> VarSpace {
        VarSpace::new(vec!["x", "y"]).unwrap()
    }

    #[test]
    fn zero_polynomial_has_no_degree() {
        let z: QPoly = Poly::zero(2);
        assert!(z.is_zero());
        assert_eq!(z.degree(), None);
        assert_eq!((&z + &z).degree(), None);
    }

    #[test]
    fn arithmetic_respects_invariants() {
        let x: QPoly = Poly::var(2, 0).unwrap();
        let y: QPoly = Poly::var(2, 1).unwrap();
        let p = &(&x * &x) - &(&y * &y);
        let r = &(&x * &x) + &(&y * &y);
        let sum = &p + &r;
        // x^2-y^2 + x^2+y^2 = 2x^2: the y^2 cancellation must not leave a
        // stored zero coefficient behind
        assert_eq!(sum.num_terms(), 1);
        assert_eq!(sum.coeff(&[2, 0]), Some(&q(2, 1)));
        let diff = &p - &p;
        assert!(diff.is_zero());
    }

    #[test]
    fn degree_is_additive_for_products() {
        let x: QPoly = Poly::var(2, 0).unwrap();
        let y: QPoly = Poly::var(2, 1).unwrap();
        let p = &(&x * &y) + &Poly::one(2);
        let q = &(&x * &x) - &y;
        let prod = &p * &q;
        assert_eq!(
            prod.degree().unwrap(),
            p.degree().unwrap() + q.degree().unwrap()
        );
    }

    #[test]
    fn evaluate_exact() {
        // motzkin at (1,1) is 0
        let vars = vars_xy();
        let f = parse_poly("1 + x^4*y^2 + x^2*y^4 - 3*x^2*y^2", &vars).unwrap();
        let v = f.evaluate(&[q(1, 1), q(1, 1)]).unwrap();
        assert!(v.is_zero());
        // constant term at the origin
        assert_eq!(f.evaluate(&[q(0, 1), q(0, 1)]).unwrap(), q(1, 1));
        assert!(f.evaluate(&[q(0, 1)]).is_err());
    }

    #[test]
    fn torus_point_on_surface() {
        let vars = VarSpace::new(vec!["x", "y", "z"]).unwrap();
        let g = parse_poly(
            "9 - 10*x^2 - 10*y^2 + 6*z^2 + x^4 + 2*x^2*y^2 + 2*x^2*z^2 + 2*y^2*z^2 + y^4 + z^4",
            &vars,
        )
        .unwrap();
        let v = g.evaluate(&[q(2, 1), q(0, 1), q(-1, 1)]).unwrap();
        assert!(v.is_zero(), "expected (2,0,-1) on the torus, got {v}");
    }

    #[test]
    fn monomial_basis_sizes() {
        assert_eq!(monomial_basis(3, 2).len(), 10);
        assert_eq!(monomial_basis(2, 4).len(), 15);
        assert_eq!(monomial_basis(4, 0), vec![vec![0, 0, 0, 0]]);
        for n in 1..=6 {
            for t in 0..=8 {
                assert_eq!(monomial_basis(n, t).len(), binomial(n + t, t));
            }
        }
    }

    #[test]
    fn monomial_basis_is_sorted_ascending() {
        let basis = monomial_basis(3, 3);
        assert_eq!(basis[0], vec![0, 0, 0]);
        for w in basis.windows(2) {
            assert_eq!(
                MonomialOrder::GrevLex.cmp(&w[0], &w[1]),
                std::cmp::Ordering::Less
            );
        }
    }

    #[test]
    fn primitive_part_strips_content_and_sign() {
        let vars = vars_xy();
        let p = parse_poly("3*x^2 - 6*y", &vars).unwrap();
        let pp = p.primitive_part();
        assert_eq!(pp, parse_poly("x^2 - 2*y", &vars).unwrap());
        let n = parse_poly("0 - 3*x^2 + 6*y", &vars).unwrap();
        assert_eq!(n.primitive_part(), pp);
        let frac = parse_poly("0.5*x^2 - 0.25*y", &vars).unwrap();
        assert_eq!(
            frac.primitive_part(),
            parse_poly("2*x^2 - y", &vars).unwrap()
        );
    }

    #[test]
    fn display_round_trips_through_parser() {
        let vars = vars_xy();
        let p = parse_poly("x^4*y^2 - 3*x^2*y^2 + 0.5*y - 7.25", &vars).unwrap();
        let s = p.display(&vars).to_string();
        assert_eq!(s, "x^4*y^2 - 3*x^2*y^2 + 0.5*y - 7.25");
        let back = parse_poly(&s, &vars).unwrap();
        assert_eq!(p, back);
        // non-decimal denominators stay readable even though the grammar
        // cannot re-ingest them
        let third = Poly::constant(2, q(1, 3));
        assert_eq!(third.display(&vars).to_string(), "1/3");
    }

    #[test]
    fn extend_and_project() {
        let x: QPoly = Poly::var(2, 0).unwrap();
        let lifted = x.extend_vars(4);
        assert_eq!(lifted.nvars(), 4);
        assert_eq!(lifted.project_to(2), Some(x));
        let u: QPoly = Poly::var(4, 3).unwrap();
        assert_eq!(u.project_to(2), None);
    }

    #[test]
    fn varspace_extension_avoids_collisions() {
        let vars = VarSpace::new(vec!["x", "u1"]).unwrap();
        let ext = vars.extended("u", 2);
        assert_eq!(ext.len(), 4);
        assert_eq!(ext.name(2), "_u1");
        assert_eq!(ext.name(3), "u2");
    }
}
