//! Polynomial calculus: partial derivatives, Jacobian minors, Gram
//! determinants. All exact; these feed the critical-point constraint systems.

use super::{Coeff, Poly, PolyError};

/// Term-by-term partial derivative with respect to variable `i`.
pub fn partial_derivative<C: Coeff>(p: &Poly<C>, i: usize) -> Result<Poly<C>, PolyError> {
    if i >= p.nvars() {
        return Err(PolyError::UnknownVariable {
            index: i,
            nvars: p.nvars(),
        });
    }
    let mut out = Vec::new();
    for (e, c) in p.terms() {
        let k = e[i];
        if k == 0 {
            continue;
        }
        let mut e2 = e.to_vec();
        e2[i] = k - 1;
        let factor = C::from_u16(k).expect("exponent representable in coefficient domain");
        out.push((e2, c.clone() * factor));
    }
    Ok(Poly::from_terms(p.nvars(), out))
}

/// The column vector (∂p/∂x_1, ..., ∂p/∂x_n).
pub fn gradient<C: Coeff>(p: &Poly<C>) -> Vec<Poly<C>> {
    (0..p.nvars())
        .map(|i| partial_derivative(p, i).expect("index in range"))
        .collect()
}

/// All k x k minors of the matrix whose columns are the given gradients
/// (rows are indexed by variables). With `anchored` set, only column subsets
/// containing column 0 are taken. Zero minors are dropped and duplicates
/// removed; the remaining order is deterministic (column subsets outer,
/// row subsets inner, both lexicographic).
pub fn jacobian_minors<C: Coeff>(
    cols: &[Vec<Poly<C>>],
    k: usize,
    anchored: bool,
) -> Result<Vec<Poly<C>>, PolyError> {
    if cols.is_empty() {
        return Ok(Vec::new());
    }
    let n = cols[0].len();
    for c in cols {
        if c.len() != n {
            return Err(PolyError::MixedSpaces {
                left: n,
                right: c.len(),
            });
        }
    }
    if k == 0 || k > n || k > cols.len() {
        return Err(PolyError::MinorSize {
            k,
            rows: n,
            cols: cols.len(),
        });
    }
    let col_sets: Vec<Vec<usize>> = combinations(cols.len(), k)
        .into_iter()
        .filter(|s| !anchored || s.contains(&0))
        .collect();
    let row_sets = combinations(n, k);
    let mut out: Vec<Poly<C>> = Vec::new();
    for cs in &col_sets {
        for rs in &row_sets {
            let sub: Vec<Vec<Poly<C>>> = rs
                .iter()
                .map(|&r| cs.iter().map(|&c| cols[c][r].clone()).collect())
                .collect();
            let d = determinant(&sub);
            if !d.is_zero() && !out.contains(&d) {
                out.push(d);
            }
        }
    }
    Ok(out)
}

/// Determinant of the Gram matrix of the given columns: entry (i, j) is the
/// polynomial inner product Σ_r cols[i][r]·cols[j][r]. Vanishes exactly where
/// the columns become linearly dependent over the reals.
pub fn gram_determinant<C: Coeff>(cols: &[Vec<Poly<C>>]) -> Result<Poly<C>, PolyError> {
    if cols.is_empty() {
        return Err(PolyError::MinorSize {
            k: 0,
            rows: 0,
            cols: 0,
        });
    }
    let n = cols[0].len();
    for c in cols {
        if c.len() != n {
            return Err(PolyError::MixedSpaces {
                left: n,
                right: c.len(),
            });
        }
    }
    let nv = cols[0][0].nvars();
    let m = cols.len();
    let mut gram = vec![vec![Poly::zero(nv); m]; m];
    for i in 0..m {
        for j in i..m {
            let mut acc = Poly::zero(nv);
            for r in 0..n {
                acc = &acc + &(&cols[i][r] * &cols[j][r]);
            }
            gram[i][j] = acc.clone();
            gram[j][i] = acc;
        }
    }
    Ok(determinant(&gram))
}

/// Cofactor expansion along the first row. Matrices here stay small (the
/// minor sizes are bounded by the variable count).
pub fn determinant<C: Coeff>(m: &[Vec<Poly<C>>]) -> Poly<C> {
    let k = m.len();
    let nv = m[0][0].nvars();
    if k == 1 {
        return m[0][0].clone();
    }
    let mut acc = Poly::zero(nv);
    for (j, pivot) in m[0].iter().enumerate() {
        if pivot.is_zero() {
            continue;
        }
        let sub: Vec<Vec<Poly<C>>> = m[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(c, _)| *c != j)
                    .map(|(_, p)| p.clone())
                    .collect()
            })
            .collect();
        let cof = &determinant(&sub) * pivot;
        if j % 2 == 0 {
            acc = &acc + &cof;
        } else {
            acc = &acc - &cof;
        }
    }
    acc
}

/// All k-subsets of {0, .., n-1} in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, start: usize, n: usize, k: usize) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(out, cur, i + 1, n, k);
            cur.pop();
        }
    }
    rec(&mut out, &mut cur, 0, n, k);
    out
}

/// Finite-difference directional derivative used by the convergence tests.
#[cfg(test)]
fn central_difference(p: &super::FPoly, i: usize, x0: &[f64], h: f64) -> f64 {
    let mut fwd = x0.to_vec();
    fwd[i] += h;
    let mut bwd = x0.to_vec();
    bwd[i] -= h;
    (p.evaluate(&fwd).unwrap() - p.evaluate(&bwd).unwrap()) / (2.0 * h)
}
