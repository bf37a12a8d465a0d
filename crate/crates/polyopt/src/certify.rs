//! Post-solve analysis of a moment form: numerical ranks, the flat
//! extension test, kernel polynomials and their minimal generating subset,
//! finite-variety point recovery, and residual verification of the
//! recovered minimizers.

use crate::constraints::{ConstraintSet, ProblemInstance};
use crate::moment::{moment_matrix, LinearForm};
use crate::poly::{FPoly, MonomialOrder, Poly};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// Residual above which a kernel member counts as a new generator rather
/// than a combination of the ones already kept.
const GENERATOR_KEEP_TOL: f64 = 1e-5;
/// Coefficients this close to a small rational are snapped for reporting.
const SNAP_TOL: f64 = 1e-6;
const SNAP_MAX_DENOM: i64 = 10_000;
/// Pass/fail gate for point and generator residuals.
const VERIFY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("relaxation order {order} is below the flatness gap {gap}")]
    OrderTooSmall { order: usize, gap: usize },
    #[error("eigenvalues of the random operator combination stayed clustered over {0} attempts")]
    ClusteredEigenvalues(usize),
    #[error("point extraction failed: {0}")]
    Extraction(String),
}

/// Count of eigenvalues above `tol` times the largest one, together with
/// the spectrum sorted descending. The matrix is assumed symmetric.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> (usize, Vec<f64>) {
    if m.nrows() == 0 {
        return (0, Vec::new());
    }
    let eig = m.clone().symmetric_eigen();
    let mut spectrum: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    spectrum.sort_by(|a, b| b.partial_cmp(a).expect("finite spectrum"));
    let lmax = spectrum[0];
    if lmax <= 0.0 {
        return (0, spectrum);
    }
    let rank = spectrum.iter().filter(|&&v| v > tol * lmax).count();
    (rank, spectrum)
}

/// The window d between the two moment matrices compared for flatness:
/// one, or half the degree of the deepest inequality rounded up, whichever
/// is larger. Equalities act through the kernel rather than through
/// localizing blocks, so they do not widen the window.
pub fn flatness_gap(set: &ConstraintSet) -> usize {
    set.inequalities
        .iter()
        .filter_map(|q| q.degree())
        .map(|dg| dg.div_ceil(2))
        .max()
        .unwrap_or(0)
        .max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlatVerdict {
    pub flat: bool,
    /// The window d used in the comparison.
    pub gap: usize,
    pub rank_full: usize,
    pub rank_sub: usize,
}

/// Rank comparison between M^t and M^{t-d}. Equal ranks mean the truncated
/// form extends to a measure supported on rank-many points.
pub fn flat_extension_check(
    lf: &LinearForm,
    set: &ConstraintSet,
    rank_tol: f64,
) -> Result<FlatVerdict, CertifyError> {
    let t = lf.order();
    let gap = flatness_gap(set);
    if t < gap {
        return Err(CertifyError::OrderTooSmall { order: t, gap });
    }
    let (rank_full, _) = numerical_rank(&moment_matrix(lf, t).mat, rank_tol);
    let (rank_sub, _) = numerical_rank(&moment_matrix(lf, t - gap).mat, rank_tol);
    Ok(FlatVerdict {
        flat: rank_full == rank_sub,
        gap,
        rank_full,
        rank_sub,
    })
}

fn divides(a: &[u16], b: &[u16]) -> bool {
    a.iter().zip(b).all(|(&x, &y)| x <= y)
}

/// Remainder of `p` under floating multivariate division by `gens` in
/// grevlex order. Each step cancels the largest divisible term and then
/// drops that exponent outright, so rounding residue cannot keep the term
/// alive and the loop terminates.
pub fn float_normal_form(p: &FPoly, gens: &[FPoly]) -> FPoly {
    let ord = MonomialOrder::GrevLex;
    let leads: Vec<(usize, Vec<u16>, f64)> = gens
        .iter()
        .enumerate()
        .filter_map(|(i, g)| g.leading(ord).map(|(e, &c)| (i, e.to_vec(), c)))
        .filter(|(_, _, c)| *c != 0.0)
        .collect();
    if leads.is_empty() {
        return p.clone();
    }
    let mut work = p.clone();
    loop {
        let target = work
            .terms()
            .filter(|(e, _)| leads.iter().any(|(_, le, _)| divides(le, e)))
            .max_by(|a, b| ord.cmp(a.0, b.0))
            .map(|(e, &c)| (e.to_vec(), c));
        let Some((e, c)) = target else {
            return work;
        };
        let (gi, le, lc) = leads
            .iter()
            .find(|(_, le, _)| divides(le, &e))
            .cloned()
            .expect("a divisor was just seen");
        let shift: Vec<u16> = e.iter().zip(&le).map(|(&a, &b)| a - b).collect();
        let correction = &gens[gi] * &Poly::monomial(shift, c / lc);
        let reduced = &work - &correction;
        work = Poly::from_terms(
            reduced.nvars(),
            reduced
                .terms()
                .filter(|(te, _)| *te != e.as_slice())
                .map(|(te, &tc)| (te.to_vec(), tc)),
        );
    }
}

/// Two floating generator sets describe the same ideal when every member
/// of each reduces to (near) zero against the other.
pub fn ideals_match(a: &[FPoly], b: &[FPoly], tol: f64) -> bool {
    let reduces = |ps: &[FPoly], gens: &[FPoly]| {
        ps.iter().all(|p| {
            let scale = p.coeff_max().max(1.0);
            float_normal_form(p, gens).coeff_max() <= tol * scale
        })
    };
    reduces(a, b) && reduces(b, a)
}

/// Best rational approximation with denominator at most `max_denom`, by
/// walking continued-fraction convergents.
fn best_rational(x: f64, max_denom: i64) -> (i64, i64) {
    let neg = x < 0.0;
    let mut a = x.abs();
    let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
    for _ in 0..64 {
        let fl = a.floor();
        if fl > i64::MAX as f64 / 2.0 {
            break;
        }
        let ai = fl as i64;
        let p2 = ai.saturating_mul(p1).saturating_add(p0);
        let q2 = ai.saturating_mul(q1).saturating_add(q0);
        if q2 > max_denom || p2 < 0 || q2 < 0 {
            break;
        }
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
        let frac = a - fl;
        if frac < 1e-12 {
            break;
        }
        a = 1.0 / frac;
    }
    if q1 == 0 {
        (0, 1)
    } else if neg {
        (-p1, q1)
    } else {
        (p1, q1)
    }
}

/// Round coefficients to nearby rationals with denominator ≤ 10^4 when the
/// rounding error stays within `SNAP_TOL`; anything else is left floating.
pub fn snap_coefficients(p: &FPoly) -> FPoly {
    snap_coefficients_with(p, SNAP_TOL)
}

/// Snap with an explicit tolerance. Callers that can validate the result
/// against independent data (the moment matrix, say) may pass a loose
/// tolerance and reject the snap when the validation worsens.
pub fn snap_coefficients_with(p: &FPoly, tol: f64) -> FPoly {
    Poly::from_terms(
        p.nvars(),
        p.terms().map(|(e, &c)| {
            let (num, den) = best_rational(c, SNAP_MAX_DENOM);
            let r = num as f64 / den as f64;
            (e.to_vec(), if (c - r).abs() <= tol { r } else { c })
        }),
    )
}

/// Snap every coefficient of every generator, or nothing. `None` means at
/// least one coefficient refused to move within `tol`, so the caller can
/// tell a fully rational set from a partial one. Coefficients that snap to
/// zero drop their term.
pub fn snap_generators(gens: &[FPoly], tol: f64) -> Option<Vec<FPoly>> {
    gens.iter()
        .map(|g| {
            let mut terms = Vec::with_capacity(g.terms().count());
            for (e, &c) in g.terms() {
                let (num, den) = best_rational(c, SNAP_MAX_DENOM);
                let r = num as f64 / den as f64;
                if (c - r).abs() > tol {
                    return None;
                }
                terms.push((e.to_vec(), r));
            }
            Some(Poly::from_terms(g.nvars(), terms.into_iter()))
        })
        .collect()
}

/// Orthonormal kernel vectors of M^t as polynomials over the degree-≤ t
/// monomial basis. Eigenvalues at or below `rank_tol` times the largest
/// count as zero.
pub fn kernel_basis(lf: &LinearForm, rank_tol: f64) -> Vec<FPoly> {
    let mm = moment_matrix(lf, lf.order());
    let eig = mm.mat.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |acc, &v| acc.max(v));
    let mut out = Vec::new();
    for i in 0..eig.eigenvalues.len() {
        if eig.eigenvalues[i] <= rank_tol * lmax {
            let col = eig.eigenvectors.column(i);
            out.push(Poly::from_terms(
                lf.nvars(),
                mm.basis.iter().cloned().zip(col.iter().copied()),
            ));
        }
    }
    out
}

/// Minimal generating subset of a list of kernel polynomials. Raw
/// orthonormal kernel vectors smear noise over every monomial, so their
/// nominal leading terms are meaningless; a column echelon pass over the
/// monomials in descending grevlex order first rebuilds a staircase basis
/// whose leading monomials are magnitude-pivoted and distinct. The
/// staircase members are then taken lowest first and kept only when they
/// do not reduce to zero against the ones already chosen.
pub fn reduce_generators(kernel: &[FPoly], drop_tol: f64) -> Vec<FPoly> {
    let ord = MonomialOrder::GrevLex;
    let nz: Vec<&FPoly> = kernel.iter().filter(|q| !q.is_zero()).collect();
    let Some(first) = nz.first() else {
        return Vec::new();
    };
    let nvars = first.nvars();
    let mut monos: Vec<Vec<u16>> = nz
        .iter()
        .flat_map(|q| q.terms().map(|(e, _)| e.to_vec()))
        .collect();
    monos.sort_by(|a, b| ord.cmp(b, a));
    monos.dedup();
    let rows = monos.len();
    let k = nz.len();
    let index: BTreeMap<&[u16], usize> = monos
        .iter()
        .enumerate()
        .map(|(i, m)| (m.as_slice(), i))
        .collect();
    let mut km = DMatrix::<f64>::zeros(rows, k);
    for (c, q) in nz.iter().enumerate() {
        for (e, &v) in q.terms() {
            km[(*index.get(e).expect("monomial was collected"), c)] = v;
        }
    }

    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut col = 0;
    for row in 0..rows {
        if col == k {
            break;
        }
        let mut remaining_max = 0.0f64;
        for r in 0..rows {
            for c in col..k {
                remaining_max = remaining_max.max(km[(r, c)].abs());
            }
        }
        let (mut best, mut mag) = (col, 0.0f64);
        for c in col..k {
            let v = km[(row, c)].abs();
            if v > mag {
                best = c;
                mag = v;
            }
        }
        // a monomial whose best entry is noise-level is not a leading term;
        // the optimal face can leave moments undetermined well above the
        // solver accuracy, so the cut is deliberately coarse
        if mag <= 1e-4 * remaining_max {
            continue;
        }
        // normalizing by a pivot far below its own column's magnitude would
        // mint a polynomial that is all amplified noise
        let col_max = (0..rows).fold(0.0f64, |acc, r| acc.max(km[(r, best)].abs()));
        if mag <= 1e-4 * col_max {
            continue;
        }
        km.swap_columns(col, best);
        let piv = km[(row, col)];
        for r in 0..rows {
            km[(r, col)] /= piv;
        }
        for c in 0..k {
            if c == col {
                continue;
            }
            let f = km[(row, c)];
            if f != 0.0 {
                for r in 0..rows {
                    km[(r, c)] -= f * km[(r, col)];
                }
            }
        }
        pivot_cols.push(col);
        col += 1;
    }

    // staircase polynomials, lowest leading monomial first. Pivot
    // normalization amplifies eigenvector noise into small junk terms; they
    // must be clipped relative to the stair's own magnitude or they pollute
    // the leading-term bookkeeping below
    let mut stairs: Vec<FPoly> = pivot_cols
        .iter()
        .map(|&c| {
            let p = Poly::from_terms(
                nvars,
                (0..rows).map(|r| (monos[r].clone(), km[(r, c)])),
            );
            let cut = 1e-7 * p.coeff_max();
            p.clip(cut.max(1e-12))
        })
        .collect();
    stairs.sort_by(|a, b| {
        let da = a.degree().unwrap_or(0);
        let db = b.degree().unwrap_or(0);
        da.cmp(&db).then_with(|| {
            let (ea, _) = a.leading(ord).expect("staircase member is nonzero");
            let (eb, _) = b.leading(ord).expect("staircase member is nonzero");
            ord.cmp(ea, eb)
        })
    });

    let mut gens: Vec<FPoly> = Vec::new();
    for q in stairs {
        let rem = float_normal_form(&q, &gens);
        if rem.coeff_max() > drop_tol {
            let (_, &lc) = rem.leading(ord).expect("residual above tolerance");
            // a residual led by a noise-level coefficient is numerically
            // dependent on the generators already chosen; normalizing by it
            // would amplify the noise into the leading position
            if lc.abs() <= 1e-4 * rem.coeff_max() {
                continue;
            }
            gens.push(rem.scale(&(1.0 / lc)).clip(1e-10));
        }
    }
    gens
}

/// The published generators of the annihilating ideal: kernel vectors
/// reduced to a minimal generating subset with snapped coefficients.
pub fn kernel_ideal(lf: &LinearForm, rank_tol: f64) -> Vec<FPoly> {
    validated_generators(lf, &kernel_basis(lf, rank_tol))
}

/// Staircase generators of the kernel polynomials, each validated against
/// the moment matrix. Two numerical hazards are handled here: a noise pivot
/// in the staircase can mint a "generator" far outside the kernel (dropped
/// outright), and coefficients carry junk at the level the optimal face
/// leaves the moment values undetermined, which can be well above the
/// solver accuracy. Snapping is therefore tried from loose to tight and a
/// snap is kept only when the moment-matrix residual does not worsen.
fn validated_generators(lf: &LinearForm, kernel: &[FPoly]) -> Vec<FPoly> {
    let gens = reduce_generators(kernel, GENERATOR_KEEP_TOL);
    if gens.is_empty() {
        return gens;
    }
    let mm = moment_matrix(lf, lf.order());
    let scale = mm.mat.amax().max(f64::MIN_POSITIVE);
    let residual = |g: &FPoly| -> Option<f64> {
        let v = coefficient_vector(g, &mm.basis)?;
        Some((&mm.mat * &v).amax() / v.amax().max(f64::MIN_POSITIVE))
    };
    let mut out = Vec::new();
    for g in &gens {
        // a leading-normalized generator with enormous coefficients is
        // amplified noise even when M annihilates it, because the residual
        // is measured relative to the coefficient norm
        if g.coeff_max() > 1e6 {
            continue;
        }
        let Some(raw) = residual(g) else {
            continue;
        };
        if raw > 1e-3 * scale {
            continue;
        }
        let allowed = (2.0 * raw).max(1e-7 * scale);
        let mut kept = g.clone();
        for tol in [5e-3, 1e-4, SNAP_TOL] {
            let s = snap_coefficients_with(g, tol);
            if s.is_zero() {
                continue;
            }
            if residual(&s).is_some_and(|r| r <= allowed) {
                kept = s;
                break;
            }
        }
        out.push(kept);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractedPoint {
    pub coords: Vec<f64>,
    pub multiplicity: usize,
}

/// Recover the atoms of a flat moment form. The rank-r factor of M^t is
/// column-echelonized to pick r basis monomials of degree ≤ t − d, the
/// per-variable multiplication operators are read off in that basis, and a
/// seeded random combination is Schur-decomposed; the coordinates appear
/// on the diagonals of the rotated operators. Clustered or complex
/// eigenvalues trigger a fresh combination, three failures give up.
pub fn extract_points(
    lf: &LinearForm,
    gap: usize,
    rank_tol: f64,
    seed: u64,
) -> Result<Vec<ExtractedPoint>, CertifyError> {
    let t = lf.order();
    if t < gap {
        return Err(CertifyError::OrderTooSmall { order: t, gap });
    }
    let n = lf.nvars();
    let mm = moment_matrix(lf, t);
    let s = mm.basis.len();
    let eig = mm.mat.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |acc, &v| acc.max(v));
    if lmax <= 0.0 {
        return Err(CertifyError::Extraction("moment matrix has no mass".into()));
    }
    let keep: Vec<usize> = (0..s)
        .filter(|&i| eig.eigenvalues[i] > rank_tol * lmax)
        .collect();
    let r = keep.len();
    let mut u = DMatrix::zeros(s, r);
    for (c, &i) in keep.iter().enumerate() {
        let w = eig.eigenvalues[i].sqrt();
        for row in 0..s {
            u[(row, c)] = eig.eigenvectors[(row, i)] * w;
        }
    }

    // column echelon form, scanning rows in ascending degree order so the
    // pivot monomials are as low as possible
    let drop = 1e-8 * lmax.sqrt();
    let mut pivot_rows: Vec<usize> = Vec::with_capacity(r);
    let mut col = 0;
    for row in 0..s {
        if col == r {
            break;
        }
        let (mut best, mut mag) = (col, 0.0f64);
        for c2 in col..r {
            let v = u[(row, c2)].abs();
            if v > mag {
                best = c2;
                mag = v;
            }
        }
        if mag <= drop {
            continue;
        }
        u.swap_columns(col, best);
        let piv = u[(row, col)];
        for rr in 0..s {
            u[(rr, col)] /= piv;
        }
        for c2 in 0..r {
            if c2 == col {
                continue;
            }
            let f = u[(row, c2)];
            if f != 0.0 {
                for rr in 0..s {
                    u[(rr, c2)] -= f * u[(rr, col)];
                }
            }
        }
        pivot_rows.push(row);
        col += 1;
    }
    if pivot_rows.len() < r {
        return Err(CertifyError::Extraction(format!(
            "column space basis stopped at {} of {} monomials",
            pivot_rows.len(),
            r
        )));
    }
    for &row in &pivot_rows {
        let dg: usize = mm.basis[row].iter().map(|&e| usize::from(e)).sum();
        if dg > t - gap {
            return Err(CertifyError::Extraction(format!(
                "pivot monomial of degree {dg} falls outside the rank-stable window (≤ {})",
                t - gap
            )));
        }
    }

    // multiplication operator per variable: the row of x_k · b_i in the
    // echelon form holds its coordinates in the pivot basis
    let index: BTreeMap<&[u16], usize> = mm
        .basis
        .iter()
        .enumerate()
        .map(|(i, m)| (m.as_slice(), i))
        .collect();
    let mut ops: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut nk = DMatrix::zeros(r, r);
        for (i, &row) in pivot_rows.iter().enumerate() {
            let mut m = mm.basis[row].clone();
            m[k] += 1;
            let ri = *index
                .get(m.as_slice())
                .expect("shifted pivot stays inside the basis");
            for c2 in 0..r {
                nk[(i, c2)] = u[(ri, c2)];
            }
        }
        ops.push(nk);
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let attempts = 3;
    for _ in 0..attempts {
        let mut mix = DMatrix::zeros(r, r);
        for op in &ops {
            mix += op * rng.gen_range(0.1..1.0);
        }
        let Some(schur) = nalgebra::linalg::Schur::try_new(mix, 1e-12, 10_000) else {
            continue;
        };
        let (q, tri) = schur.unpack();
        let scale = if r == 0 { 1.0 } else { tri.amax().max(1.0) };
        let mut real = true;
        for i in 0..r.saturating_sub(1) {
            if tri[(i + 1, i)].abs() > 1e-7 * scale {
                real = false;
                break;
            }
        }
        if !real {
            continue;
        }
        let mut pts: Vec<Vec<f64>> = vec![vec![0.0; n]; r];
        for (k, op) in ops.iter().enumerate() {
            let rot = q.transpose() * op * &q;
            for (i, p) in pts.iter_mut().enumerate() {
                p[k] = rot[(i, i)];
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        let span = pts
            .iter()
            .flat_map(|p| p.iter())
            .fold(0.0f64, |acc, &v| acc.max(v.abs()));
        let tol = 1e-6 * (1.0 + span);
        let mut out: Vec<ExtractedPoint> = Vec::new();
        for p in pts {
            if let Some(last) = out.last_mut() {
                if last.coords.iter().zip(&p).all(|(&a, &b)| (a - b).abs() <= tol) {
                    last.multiplicity += 1;
                    continue;
                }
            }
            out.push(ExtractedPoint {
                coords: p,
                multiplicity: 1,
            });
        }
        return Ok(out);
    }
    Err(CertifyError::ClusteredEigenvalues(attempts))
}

/// Newton-polish extracted points on the generator system. Extraction
/// accuracy is limited by the solved moments (roughly the square root of
/// the feasibility level on degenerate problems), while the snapped
/// generators are usually exact, so a least-squares Newton step recovers
/// the lost digits. Steps that fail to shrink the residual are discarded.
pub fn polish_points(points: &mut [ExtractedPoint], generators: &[FPoly]) {
    if generators.is_empty() {
        return;
    }
    let grads: Vec<Vec<FPoly>> = generators
        .iter()
        .map(crate::poly::calculus::gradient)
        .collect();
    let k = generators.len();
    for pt in points {
        let n = pt.coords.len();
        for _ in 0..5 {
            let res = DVector::from_fn(k, |i, _| {
                generators[i].evaluate(&pt.coords).unwrap_or(f64::NAN)
            });
            let worst = res.amax();
            if !worst.is_finite() || worst < 1e-14 {
                break;
            }
            let jac = DMatrix::from_fn(k, n, |i, j| {
                grads[i][j].evaluate(&pt.coords).unwrap_or(f64::NAN)
            });
            let svd = jac.svd(true, true);
            let Ok(step) = svd.solve(&res, 1e-12) else {
                break;
            };
            let candidate: Vec<f64> = pt
                .coords
                .iter()
                .zip(step.iter())
                .map(|(c, s)| c - s)
                .collect();
            let new_worst = generators
                .iter()
                .map(|g| g.evaluate(&candidate).unwrap_or(f64::NAN).abs())
                .fold(0.0f64, f64::max);
            if !new_worst.is_finite() || new_worst >= worst {
                break;
            }
            pt.coords = candidate;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointCheck {
    pub point: Vec<f64>,
    pub objective_gap: f64,
    pub equality_residual: f64,
    /// None when the problem has no inequality constraints.
    pub min_inequality: Option<f64>,
    pub generator_residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<PointCheck>,
    pub pass: bool,
    /// True when there were no points to check; the report passes but the
    /// caller should surface a warning.
    pub vacuous: bool,
}

/// Residual audit of extracted minimizers against the original problem:
/// objective value at the claimed optimum, constraint feasibility, and
/// generator vanishing, each gated at 1e-6. An empty point list passes
/// vacuously so positive dimensional certificates are not failed for
/// having no atoms.
pub fn verify(
    points: &[ExtractedPoint],
    generators: &[FPoly],
    instance: &ProblemInstance,
    optimum: f64,
) -> VerifyReport {
    let f = instance.objective.to_float();
    let eqs: Vec<FPoly> = instance.equalities.iter().map(|q| q.to_float()).collect();
    let ineqs: Vec<FPoly> = instance.inequalities.iter().map(|q| q.to_float()).collect();
    let mut pass = true;
    let mut checks = Vec::with_capacity(points.len());
    for pt in points {
        let x = &pt.coords;
        let at = |p: &FPoly| p.evaluate(x).expect("point and problem share a space");
        let objective_gap = (at(&f) - optimum).abs();
        let equality_residual = eqs.iter().map(|q| at(q).abs()).fold(0.0f64, f64::max);
        let min_inequality = ineqs
            .iter()
            .map(at)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
        let generator_residual = generators.iter().map(|g| at(g).abs()).fold(0.0f64, f64::max);
        let ok = objective_gap <= VERIFY_TOL
            && equality_residual <= VERIFY_TOL
            && min_inequality.is_none_or(|v| v >= -VERIFY_TOL)
            && generator_residual <= VERIFY_TOL;
        pass &= ok;
        checks.push(PointCheck {
            point: x.clone(),
            objective_gap,
            equality_residual,
            min_inequality,
            generator_residual,
            pass: ok,
        });
    }
    VerifyReport {
        checks,
        pass,
        vacuous: points.is_empty(),
    }
}

/// Everything the optimizer reports about one solved relaxation order.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub order: usize,
    /// Rank of M^t' for t' = 0..=t; non-decreasing for a genuine form.
    pub rank_profile: Vec<usize>,
    /// None when the order is below the flatness gap.
    pub flat: Option<FlatVerdict>,
    pub kernel_basis: Vec<FPoly>,
    pub generators: Vec<FPoly>,
    /// Present only when the flat test holds and extraction succeeded.
    pub points: Vec<ExtractedPoint>,
    /// Why extraction was skipped or failed, when it was.
    pub extraction_note: Option<String>,
    pub optimum: f64,
}

/// Assemble the certificate for a solved order: rank profile over all
/// sub-orders, flatness verdict, annihilator generators, and, when the
/// form is flat, the recovered atoms.
pub fn certificate(
    lf: &LinearForm,
    set: &ConstraintSet,
    optimum: f64,
    rank_tol: f64,
    seed: u64,
) -> Certificate {
    let t = lf.order();
    let rank_profile: Vec<usize> = (0..=t)
        .map(|tp| numerical_rank(&moment_matrix(lf, tp).mat, rank_tol).0)
        .collect();
    let flat = flat_extension_check(lf, set, rank_tol).ok();
    let kernel = kernel_basis(lf, rank_tol);
    let generators = validated_generators(lf, &kernel);
    let (mut points, extraction_note) = match &flat {
        Some(v) if v.flat => match extract_points(lf, v.gap, rank_tol, seed) {
            Ok(p) => (p, None),
            Err(e) => (Vec::new(), Some(e.to_string())),
        },
        _ => (Vec::new(), None),
    };
    polish_points(&mut points, &generators);
    Certificate {
        order: t,
        rank_profile,
        flat,
        kernel_basis: kernel,
        generators,
        points,
        extraction_note,
        optimum,
    }
}

/// Coefficient vector of `p` over a monomial basis, for residual checks.
pub fn coefficient_vector(p: &FPoly, basis: &[Vec<u16>]) -> Option<DVector<f64>> {
    let index: BTreeMap<&[u16], usize> = basis
        .iter()
        .enumerate()
        .map(|(i, m)| (m.as_slice(), i))
        .collect();
    let mut v = DVector::zeros(basis.len());
    for (e, &c) in p.terms() {
        v[*index.get(e)?] = c;
    }
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::Provenance;
    use crate::poly::{parse_poly, VarSpace};

    fn mixture(points: &[Vec<f64>], order: usize) -> LinearForm {
        let n = points[0].len();
        let forms: Vec<LinearForm> = points
            .iter()
            .map(|p| LinearForm::evaluation(p, order))
            .collect();
        let len = forms[0].values().len();
        let mut avg = vec![0.0; len];
        for f in &forms {
            for (a, v) in avg.iter_mut().zip(f.values()) {
                *a += v / points.len() as f64;
            }
        }
        LinearForm::from_moment_vars(n, order, &avg[1..])
    }

    fn sign_points() -> Vec<Vec<f64>> {
        vec![
            vec![1.0, 1.0],
            vec![1.0, -1.0],
            vec![-1.0, 1.0],
            vec![-1.0, -1.0],
        ]
    }

    fn empty_set(names: Vec<&str>) -> ConstraintSet {
        ConstraintSet::new(
            VarSpace::new(names).unwrap(),
            Vec::new(),
            Vec::new(),
            Provenance::Direct,
        )
    }

    #[test]
    fn evaluation_form_has_rank_one_at_every_order() {
        let lf = LinearForm::evaluation(&[0.5, -1.25], 3);
        for t in 0..=3 {
            let (r, spectrum) = numerical_rank(&moment_matrix(&lf, t).mat, 1e-6);
            assert_eq!(r, 1, "order {t}");
            assert!(spectrum[0] > 0.0);
        }
    }

    #[test]
    fn numerical_rank_cuts_at_the_relative_threshold() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1e-3, 1e-9, 0.0]));
        let (r, spectrum) = numerical_rank(&m, 1e-6);
        assert_eq!(r, 2);
        assert_eq!(spectrum.len(), 4);
        assert!((spectrum[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flatness_needs_one_extra_order_for_the_four_atom_form() {
        let set = empty_set(vec!["x", "y"]);
        // rank M^2 = 4 but rank M^1 = 3: the sign points are not separated
        // by degree one monomials yet
        let low = mixture(&sign_points(), 2);
        let v2 = flat_extension_check(&low, &set, 1e-6).unwrap();
        assert!(!v2.flat);
        assert_eq!((v2.rank_full, v2.rank_sub), (4, 3));
        let high = mixture(&sign_points(), 3);
        let v3 = flat_extension_check(&high, &set, 1e-6).unwrap();
        assert!(v3.flat);
        assert_eq!(v3.rank_full, 4);
        assert_eq!(v3.gap, 1);
    }

    #[test]
    fn deep_inequalities_widen_the_flatness_window() {
        let vs = VarSpace::new(vec!["x", "y"]).unwrap();
        let ball = parse_poly("4 - x^2 - y^2", &vs).unwrap();
        let quartic = parse_poly("1 - x^4 - y^4", &vs).unwrap();
        let set = ConstraintSet::new(vs, Vec::new(), vec![ball, quartic], Provenance::Direct);
        assert_eq!(flatness_gap(&set), 2);
        let lf = LinearForm::evaluation(&[0.1, 0.2], 1);
        match flat_extension_check(&lf, &set, 1e-6) {
            Err(CertifyError::OrderTooSmall { order: 1, gap: 2 }) => {}
            other => panic!("expected an order-too-small error, got {other:?}"),
        }
    }

    #[test]
    fn normal_form_eliminates_divisible_terms() {
        let vs = VarSpace::new(vec!["x", "y"]).unwrap();
        let p = parse_poly("x^2*y + y", &vs).unwrap().to_float();
        let g = parse_poly("x^2 - 1", &vs).unwrap().to_float();
        let rem = float_normal_form(&p, &[g]);
        let want = parse_poly("2*y", &vs).unwrap().to_float();
        assert!((&rem - &want).coeff_max() < 1e-12);
    }

    #[test]
    fn snapping_recovers_small_rationals_and_leaves_noise_alone() {
        let p = Poly::from_terms(
            1,
            vec![
                (vec![0u16], 0.333_333_333_333_4),
                (vec![1u16], 1.0 + 3e-7),
                (vec![2u16], 1e-5),
            ],
        );
        let snapped = snap_coefficients(&p);
        assert_eq!(snapped.coeff(&[0]).copied(), Some(1.0 / 3.0));
        assert_eq!(snapped.coeff(&[1]).copied(), Some(1.0));
        // 1e-5 has no rational with denominator ≤ 10^4 within 1e-6
        assert_eq!(snapped.coeff(&[2]).copied(), Some(1e-5));
    }

    #[test]
    fn four_atom_form_yields_the_square_generators_and_the_atoms() {
        let lf = mixture(&sign_points(), 4);
        let vs = VarSpace::new(vec!["x", "y"]).unwrap();
        let gens = kernel_ideal(&lf, 1e-6);
        let want = vec![
            parse_poly("x^2 - 1", &vs).unwrap().to_float(),
            parse_poly("y^2 - 1", &vs).unwrap().to_float(),
        ];
        assert!(
            ideals_match(&gens, &want, 1e-5),
            "generators {:?}",
            gens.iter().map(|g| g.display(&vs).to_string()).collect::<Vec<_>>()
        );

        let points = extract_points(&lf, 1, 1e-6, 7).unwrap();
        assert_eq!(points.len(), 4);
        for pt in &points {
            assert_eq!(pt.multiplicity, 1);
            for &c in &pt.coords {
                assert!((c.abs() - 1.0).abs() <= 1e-8, "coordinate {c}");
            }
        }

        // every kernel vector vanishes on every atom
        for q in kernel_basis(&lf, 1e-6) {
            for pt in &points {
                assert!(q.evaluate(&pt.coords).unwrap().abs() <= 1e-8);
            }
        }

        // the equal-weight mixture over the recovered atoms reproduces the
        // moments it came from
        let resynth = mixture(&points.iter().map(|p| p.coords.clone()).collect::<Vec<_>>(), 4);
        for (a, b) in lf.values().iter().zip(resynth.values()) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn kernel_vectors_are_sound_against_the_moment_matrix() {
        let lf = mixture(&sign_points(), 4);
        let mm = moment_matrix(&lf, 4);
        let scale = numerical_rank(&mm.mat, 1e-6).1[0];
        for q in kernel_basis(&lf, 1e-6) {
            let v = coefficient_vector(&q, &mm.basis).unwrap();
            assert!((&mm.mat * v).norm() <= 1e-6 * scale);
        }
    }

    #[test]
    fn single_atom_kernel_reduces_to_coordinate_shifts() {
        let lf = LinearForm::evaluation(&[0.0, 1.0, 0.0], 2);
        let vs = VarSpace::new(vec!["x", "y", "z"]).unwrap();
        let gens = kernel_ideal(&lf, 1e-6);
        let want = vec![
            parse_poly("x", &vs).unwrap().to_float(),
            parse_poly("y - 1", &vs).unwrap().to_float(),
            parse_poly("z", &vs).unwrap().to_float(),
        ];
        assert!(ideals_match(&gens, &want, 1e-5));
        let points = extract_points(&lf, 1, 1e-6, 1).unwrap();
        assert_eq!(points.len(), 1);
        for (c, want) in points[0].coords.iter().zip([0.0, 1.0, 0.0]) {
            assert!((c - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn extraction_is_reproducible_for_a_fixed_seed() {
        let lf = mixture(&sign_points(), 4);
        let a = extract_points(&lf, 1, 1e-6, 11).unwrap();
        let b = extract_points(&lf, 1, 1e-6, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn verify_flags_violations_and_passes_vacuously() {
        let vs = VarSpace::new(vec!["x", "y"]).unwrap();
        let instance = ProblemInstance::new(
            vs.clone(),
            parse_poly("x^2 + y^2", &vs).unwrap(),
            vec![parse_poly("x - y", &vs).unwrap()],
            vec![parse_poly("x + 1", &vs).unwrap()],
        )
        .unwrap();
        let gens = vec![
            parse_poly("x", &vs).unwrap().to_float(),
            parse_poly("y", &vs).unwrap().to_float(),
        ];
        let good = ExtractedPoint {
            coords: vec![0.0, 0.0],
            multiplicity: 1,
        };
        let report = verify(&[good.clone()], &gens, &instance, 0.0);
        assert!(report.pass && !report.vacuous);
        assert_eq!(report.checks[0].min_inequality, Some(1.0));

        let bad = ExtractedPoint {
            coords: vec![1.0, 0.5],
            multiplicity: 1,
        };
        let report = verify(&[good, bad], &gens, &instance, 0.0);
        assert!(!report.pass);
        assert!(report.checks[0].pass && !report.checks[1].pass);

        let empty = verify(&[], &gens, &instance, 0.0);
        assert!(empty.pass && empty.vacuous);
    }

    #[test]
    fn certificate_collects_profile_flatness_and_points() {
        let lf = mixture(&sign_points(), 4);
        let set = empty_set(vec!["x", "y"]);
        let cert = certificate(&lf, &set, 0.0, 1e-6, 3);
        assert_eq!(cert.rank_profile, vec![1, 3, 4, 4, 4]);
        let flat = cert.flat.expect("order is above the gap");
        assert!(flat.flat);
        assert_eq!(cert.points.len(), 4);
        assert!(cert.extraction_note.is_none());
        // profile never decreases
        assert!(cert.rank_profile.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn mixture_helper_is_a_probability_form() {
        // guard against the helper itself drifting: unit mass and exactness
        let lf = mixture(&sign_points(), 2);
        assert!((lf.moment(&[0, 0]) - 1.0).abs() < 1e-15);
        assert!((lf.moment(&[2, 0]) - 1.0).abs() < 1e-15);
        assert!(lf.moment(&[1, 0]).abs() < 1e-15);
    }
}
