//! Primal-dual interior-point core.
//!
//! Solves min cᵀy subject to Ay = b and C0 + Σ y_v A_v ⪰ 0 (block diagonal)
//! through the homogeneous self-dual embedding: the iterate carries (y, λ,
//! X, Z, τ, κ) and drives the residuals
//!
//!   r_p = Ay − bτ,  r_x = C0τ + B(y) − X,
//!   r_d = B*(Z) + Aᵀλ − cτ,  r_g = cᵀy − bᵀλ + ⟨C0, Z⟩ + κ
//!
//! to zero along the central path. τ → positive yields an optimal pair
//! after division by τ; τ → 0 with κ > 0 yields an improving ray that
//! certifies primal infeasibility or an unbounded objective. Search
//! directions use Mehrotra's predictor-corrector with the
//! Monteiro-Zhang/HKM scaling: the centrality equation ΔX + T(ΔZ) = R with
//! T(U) = ½(XUZ⁻¹ + Z⁻¹UX), whose inverse is applied spectrally through
//! P = Qᵀ Z^{1/2} where Z^{1/2} X Z^{1/2} = Q Λ Qᵀ. The reduced Newton
//! system is solved with a Cholesky of H = B* T⁻¹ B and a Schur complement
//! over the equality rows.
//!
//! Because the barrier keeps every iterate in the relative interior, the
//! limit point maximizes the rank of the primal block among all optima;
//! callers rely on that to read kernel dimensions off the solution.

use super::kernels;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            gap_tol: 1e-9,
            feas_tol: 1e-9,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    PrimalInfeasible,
    DualUnbounded,
    MaxIterations,
    NumericalFailure,
}

/// One PSD block of the native form: X = C0 + Σ y_v A_v over the listed
/// variables, with each A matrix stored as upper-triangle triplets.
#[derive(Debug, Clone)]
pub struct SdpBlock {
    pub size: usize,
    pub c0: DMatrix<f64>,
    pub var_index: Vec<usize>,
    pub coeffs: Vec<Vec<(usize, usize, f64)>>,
}

impl SdpBlock {
    /// Σ y_v A_v for this block (dense symmetric).
    pub fn combine(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for (k, entries) in self.coeffs.iter().enumerate() {
            let w = y[self.var_index[k]];
            if w == 0.0 {
                continue;
            }
            for &(i, j, c) in entries {
                m[(i, j)] += c * w;
                if i != j {
                    m[(j, i)] += c * w;
                }
            }
        }
        m
    }

    /// ⟨A_k, W⟩ for a symmetric dense W, using the triplet layout.
    fn pair(&self, k: usize, w: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for &(i, j, c) in &self.coeffs[k] {
            acc += c * w[(i, j)];
            if i != j {
                acc += c * w[(j, i)];
            }
        }
        acc
    }
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub nvars: usize,
    pub obj: Vec<f64>,
    pub obj_offset: f64,
    /// Equality rows Ay = b; may be 0×n.
    pub eq: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub blocks: Vec<SdpBlock>,
}

#[derive(Debug, Clone)]
pub struct RawSolution {
    pub status: SdpStatus,
    /// Moment vector on Optimal; improving ray on DualUnbounded.
    pub y: Vec<f64>,
    /// Equality multipliers; part of the infeasibility ray on
    /// PrimalInfeasible.
    pub lam: Vec<f64>,
    pub x_blocks: Vec<DMatrix<f64>>,
    pub z_blocks: Vec<DMatrix<f64>>,
    /// cᵀy and bᵀλ − ⟨C0, Z⟩, without the caller's constant offset.
    pub pobj: f64,
    pub dobj: f64,
    pub iterations: usize,
    pub rel_gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub failure: Option<String>,
}

struct Scaling {
    /// P = Qᵀ Z^{1/2}; T⁻¹(V) = Pᵀ (2 (P V Pᵀ) ⊘ (λ_i + λ_j)) P.
    p: DMatrix<f64>,
    lam: DVector<f64>,
    zinv: DMatrix<f64>,
}

impl Scaling {
    fn of(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
        // eigenvalues of a barely positive definite matrix can round below
        // zero; floor them at spectral noise level instead of aborting,
        // since the step acceptance already vouched for the iterate
        let ez = z.clone().symmetric_eigen();
        let zmax = ez.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
        if zmax <= 0.0 || !zmax.is_finite() {
            return None;
        }
        let zfloor = 1e-15 * zmax;
        let mut dz_half = ez.eigenvalues.clone();
        let mut dz_inv = ez.eigenvalues.clone();
        for i in 0..dz_half.len() {
            let v = ez.eigenvalues[i].max(zfloor);
            if !v.is_finite() {
                return None;
            }
            dz_half[i] = v.sqrt();
            dz_inv[i] = 1.0 / v;
        }
        let q = &ez.eigenvectors;
        let zhalf = q * DMatrix::from_diagonal(&dz_half) * q.transpose();
        let zinv = q * DMatrix::from_diagonal(&dz_inv) * q.transpose();
        let mut s = &zhalf * x * &zhalf;
        symmetrize(&mut s);
        let es = s.symmetric_eigen();
        let smax = es.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
        if smax <= 0.0 || !smax.is_finite() {
            return None;
        }
        let sfloor = 1e-15 * smax;
        let lam = es.eigenvalues.map(|v| v.max(sfloor));
        if lam.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let p = es.eigenvectors.transpose() * zhalf;
        Some(Scaling { p, lam, zinv })
    }

    /// T⁻¹(V) for symmetric V.
    fn apply_tinv(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut w = &self.p * v * self.p.transpose();
        let s = w.nrows();
        for i in 0..s {
            for j in 0..s {
                w[(i, j)] *= 2.0 / (self.lam[i] + self.lam[j]);
            }
        }
        self.p.transpose() * w * &self.p
    }
}

struct Residuals {
    rp: DVector<f64>,
    rx: Vec<DMatrix<f64>>,
    rd: DVector<f64>,
    rg: f64,
}

struct Direction {
    dy: DVector<f64>,
    dlam: DVector<f64>,
    dx: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
    dtau: f64,
    dkappa: f64,
}

pub fn solve_problem(p: &SdpProblem, opts: &SdpOptions) -> RawSolution {
    Ipm::new(p, *opts).run()
}

/// Gram matrix of the constraint matrices across all blocks. Grouping by
/// matrix cell keeps this linear in the number of stored triplets; a BTreeMap
/// fixes the accumulation order so repeat solves stay bitwise identical.
fn constraint_gram(p: &SdpProblem) -> Option<DMatrix<f64>> {
    if p.nvars == 0 {
        return None;
    }
    let mut g = DMatrix::zeros(p.nvars, p.nvars);
    for blk in &p.blocks {
        let mut cells: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
        for (k, entries) in blk.coeffs.iter().enumerate() {
            for &(i, j, c) in entries {
                cells.entry((i, j)).or_default().push((blk.var_index[k], c));
            }
        }
        for ((i, j), touch) in cells {
            let weight = if i == j { 1.0 } else { 2.0 };
            for &(v, cv) in &touch {
                for &(w, cw) in &touch {
                    g[(v, w)] += weight * cv * cw;
                }
            }
        }
    }
    Some(g)
}

struct Ipm<'a> {
    p: &'a SdpProblem,
    opts: SdpOptions,
    m: usize,
    rows: usize,
    nu: f64,
    c: DVector<f64>,
    b: DVector<f64>,
    c0_norm: f64,
    /// Cholesky of the constant Gram G_vw = Σ_b ⟨A_v, A_w⟩, used to pull
    /// each ΔZ back onto the dual linearization.
    chol_g: Option<Cholesky<f64, Dyn>>,
    y: DVector<f64>,
    lam: DVector<f64>,
    x: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    tau: f64,
    kappa: f64,
}

impl<'a> Ipm<'a> {
    fn new(p: &'a SdpProblem, opts: SdpOptions) -> Self {
        let m = p.nvars;
        let rows = p.eq.nrows();
        let nu: f64 = p.blocks.iter().map(|b| b.size as f64).sum();
        let c0_norm = p
            .blocks
            .iter()
            .map(|b| b.c0.amax())
            .fold(0.0f64, f64::max);
        Ipm {
            p,
            opts,
            m,
            rows,
            nu,
            c: DVector::from_vec(p.obj.clone()),
            b: p.rhs.clone(),
            c0_norm,
            chol_g: constraint_gram(p).and_then(Cholesky::new),
            y: DVector::zeros(m),
            lam: DVector::zeros(rows),
            x: p.blocks.iter().map(|b| DMatrix::identity(b.size, b.size)).collect(),
            z: p.blocks.iter().map(|b| DMatrix::identity(b.size, b.size)).collect(),
            tau: 1.0,
            kappa: 1.0,
        }
    }

    fn bstar_z(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (b, blk) in self.p.blocks.iter().enumerate() {
            for k in 0..blk.var_index.len() {
                out[blk.var_index[k]] += blk.pair(k, &self.z[b]);
            }
        }
        out
    }

    fn residuals(&self) -> Residuals {
        let y_slice: Vec<f64> = self.y.iter().copied().collect();
        let rp = &self.p.eq * &self.y - &self.b * self.tau;
        let rx = self
            .p
            .blocks
            .iter()
            .zip(&self.x)
            .map(|(blk, x)| &blk.c0 * self.tau + blk.combine(&y_slice) - x)
            .collect();
        let rd = self.bstar_z() + self.p.eq.transpose() * &self.lam - &self.c * self.tau;
        let c0z: f64 = self
            .p
            .blocks
            .iter()
            .zip(&self.z)
            .map(|(blk, z)| frob(&blk.c0, z))
            .sum();
        let rg = self.c.dot(&self.y) - self.b.dot(&self.lam) + c0z + self.kappa;
        Residuals { rp, rx, rd, rg }
    }

    fn mu(&self) -> f64 {
        let xz: f64 = self.x.iter().zip(&self.z).map(|(x, z)| frob(x, z)).sum();
        (xz + self.tau * self.kappa) / (self.nu + 1.0)
    }

    fn run(mut self) -> RawSolution {
        let mut stalls = 0usize;
        for iter in 0..self.opts.max_iter {
            let res = self.residuals();
            let mu = self.mu();

            // scaled convergence measures on the dehomogenized iterate
            let pobj = self.c.dot(&self.y) / self.tau;
            let c0z: f64 = self
                .p
                .blocks
                .iter()
                .zip(&self.z)
                .map(|(blk, z)| frob(&blk.c0, z))
                .sum();
            let dobj = (self.b.dot(&self.lam) - c0z) / self.tau;
            let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()));
            let mut pres = vec_amax(&res.rp) / (self.tau * (1.0 + vec_amax(&self.b)));
            for rx in &res.rx {
                pres = pres.max(rx.amax() / (self.tau * (1.0 + self.c0_norm)));
            }
            let dres = vec_amax(&res.rd) / (self.tau * (1.0 + vec_amax(&self.c)));

            if rel_gap <= self.opts.gap_tol
                && pres <= self.opts.feas_tol
                && dres <= self.opts.feas_tol
            {
                return self.finish(SdpStatus::Optimal, iter, rel_gap, pres, dres, None);
            }

            if self.tau < 1e-8 * self.kappa.max(1.0) {
                return self.classify_ray(iter);
            }

            let scalings: Option<Vec<Scaling>> = self
                .x
                .iter()
                .zip(&self.z)
                .map(|(x, z)| Scaling::of(x, z))
                .collect();
            let Some(scalings) = scalings else {
                return self.breakdown(
                    iter,
                    rel_gap,
                    pres,
                    dres,
                    "scaling matrix lost positive definiteness",
                );
            };

            let Some(kkt) = self.factor(&scalings) else {
                return self.breakdown(iter, rel_gap, pres, dres, "Newton system Cholesky failed");
            };

            // predictor: pure Newton step toward feasibility and zero product
            let rc_aff: Vec<DMatrix<f64>> = self.x.iter().map(|x| -x).collect();
            let Some(aff) = self.direction(&kkt, &scalings, &res, &rc_aff, 1.0, -self.tau * self.kappa)
            else {
                return self.breakdown(
                    iter,
                    rel_gap,
                    pres,
                    dres,
                    "singular reduced system in predictor",
                );
            };
            let alpha_aff = self.max_step(&aff).min(1.0);

            // centering weight from the affine trial point
            let mut xz_aff = 0.0;
            for b in 0..self.x.len() {
                let xa = &self.x[b] + &aff.dx[b] * alpha_aff;
                let za = &self.z[b] + &aff.dz[b] * alpha_aff;
                xz_aff += frob(&xa, &za);
            }
            let tau_aff = self.tau + alpha_aff * aff.dtau;
            let kappa_aff = self.kappa + alpha_aff * aff.dkappa;
            let mu_aff = (xz_aff + tau_aff * kappa_aff) / (self.nu + 1.0);
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

            // corrector with second-order complementarity terms
            let eta = 1.0 - sigma;
            let mut rc = Vec::with_capacity(self.x.len());
            for b in 0..self.x.len() {
                let second = 0.5
                    * (&aff.dx[b] * &aff.dz[b] * &scalings[b].zinv
                        + &scalings[b].zinv * &aff.dz[b] * &aff.dx[b]);
                rc.push(&scalings[b].zinv * (sigma * mu) - &self.x[b] - second);
            }
            let rtk = sigma * mu - self.tau * self.kappa - aff.dtau * aff.dkappa;
            let Some(dir) = self.direction(&kkt, &scalings, &res, &rc, eta, rtk) else {
                return self.breakdown(
                    iter,
                    rel_gap,
                    pres,
                    dres,
                    "singular reduced system in corrector",
                );
            };

            let mut alpha = self.verified_step(&dir);
            let mut chosen = dir;

            if alpha < 1e-7 {
                // the Mehrotra step has no room, which happens when the
                // iterate drifts off-center near a rank-deficient optimum;
                // a pure centering step (η = 0, target μ) keeps the tiny
                // residuals and buys back boundary distance
                let rc_center: Vec<DMatrix<f64>> = (0..self.x.len())
                    .map(|b| &scalings[b].zinv * mu - &self.x[b])
                    .collect();
                let rtk_center = mu - self.tau * self.kappa;
                if let Some(center) =
                    self.direction(&kkt, &scalings, &res, &rc_center, 0.0, rtk_center)
                {
                    let alpha_center = self.verified_step(&center);
                    if alpha_center > alpha {
                        alpha = alpha_center;
                        chosen = center;
                    }
                }
            }

            if alpha < 1e-7 {
                stalls += 1;
                if stalls >= 2 {
                    return self.breakdown(
                        iter,
                        rel_gap,
                        pres,
                        dres,
                        &format!("step length collapsed ({alpha:.2e})"),
                    );
                }
            } else {
                stalls = 0;
            }

            self.y += &chosen.dy * alpha;
            self.lam += &chosen.dlam * alpha;
            for b in 0..self.x.len() {
                self.x[b] += &chosen.dx[b] * alpha;
                self.z[b] += &chosen.dz[b] * alpha;
                symmetrize(&mut self.x[b]);
                symmetrize(&mut self.z[b]);
            }
            self.tau += alpha * chosen.dtau;
            self.kappa += alpha * chosen.dkappa;
        }

        let res = self.residuals();
        let rel_gap = self.rel_gap();
        let pres = vec_amax(&res.rp) / (self.tau * (1.0 + vec_amax(&self.b)));
        let dres = vec_amax(&res.rd) / (self.tau * (1.0 + vec_amax(&self.c)));
        let budget = self.opts.max_iter;
        self.finish(
            SdpStatus::MaxIterations,
            budget,
            rel_gap,
            pres,
            dres,
            Some("iteration budget exhausted".into()),
        )
    }

    fn rel_gap(&self) -> f64 {
        let pobj = self.c.dot(&self.y) / self.tau;
        let c0z: f64 = self
            .p
            .blocks
            .iter()
            .zip(&self.z)
            .map(|(blk, z)| frob(&blk.c0, z))
            .sum();
        let dobj = (self.b.dot(&self.lam) - c0z) / self.tau;
        (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()))
    }

    /// τ collapsed: decide between an infeasibility certificate and an
    /// unbounded objective from the homogeneous ray. Both verdicts are
    /// checked against the actual iterate before being reported; τ can also
    /// collapse on problems whose infimum is not attained along any ray, and
    /// the leftover iterate is then not a certificate of anything.
    fn classify_ray(self, iter: usize) -> RawSolution {
        let c0z: f64 = self
            .p
            .blocks
            .iter()
            .zip(&self.z)
            .map(|(blk, z)| frob(&blk.c0, z))
            .sum();
        let p_cert = self.b.dot(&self.lam) - c0z;
        let d_cert = -self.c.dot(&self.y);
        if p_cert > d_cert.max(1e-10) && self.farkas_pair_is_genuine() {
            return self.finish(
                SdpStatus::PrimalInfeasible,
                iter,
                f64::NAN,
                f64::NAN,
                f64::NAN,
                Some(format!("improving ray with bᵀλ − ⟨C0,Z⟩ = {p_cert:.3e} > 0")),
            );
        }
        if d_cert > 1e-10 && self.descent_ray_is_genuine() {
            return self.finish(
                SdpStatus::DualUnbounded,
                iter,
                f64::NAN,
                f64::NAN,
                f64::NAN,
                Some(format!("feasible ray with cᵀy = {:.3e} < 0", -d_cert)),
            );
        }
        self.finish(
            SdpStatus::NumericalFailure,
            iter,
            f64::NAN,
            f64::NAN,
            f64::NAN,
            Some("τ and κ collapsed without a verifiable certificate".into()),
        )
    }

    /// (λ, Z) proves infeasibility when Z ⪰ 0, B*(Z) + Aᵀλ ≈ 0 and
    /// bᵀλ − ⟨C0, Z⟩ > 0, all judged after normalizing the pair.
    fn farkas_pair_is_genuine(&self) -> bool {
        let scale = self
            .z
            .iter()
            .map(mat_amax)
            .fold(vec_amax(&self.lam), f64::max);
        if !scale.is_finite() || scale <= 0.0 {
            return false;
        }
        let rd = self.bstar_z() + self.p.eq.transpose() * &self.lam;
        if vec_amax(&rd) > 1e-6 * scale {
            return false;
        }
        for z in &self.z {
            if min_eigenvalue(z) < -1e-7 * scale {
                return false;
            }
        }
        let c0z: f64 = self
            .p
            .blocks
            .iter()
            .zip(&self.z)
            .map(|(blk, z)| frob(&blk.c0, z))
            .sum();
        self.b.dot(&self.lam) - c0z > 1e-8 * scale
    }

    /// y is a descent ray when Ay ≈ 0, B(y) ⪰ 0 and cᵀy < 0; adding it to
    /// any feasible point then drives the objective down forever.
    fn descent_ray_is_genuine(&self) -> bool {
        let scale = vec_amax(&self.y);
        if !scale.is_finite() || scale <= 0.0 {
            return false;
        }
        let yhat: Vec<f64> = self.y.iter().map(|v| v / scale).collect();
        let ray_eq = &self.p.eq * DVector::from_vec(yhat.clone());
        if vec_amax(&ray_eq) > 1e-6 {
            return false;
        }
        for blk in &self.p.blocks {
            let by = blk.combine(&yhat);
            if min_eigenvalue(&by) < -1e-6 * (1.0 + mat_amax(&by)) {
                return false;
            }
        }
        self.c.dot(&self.y) / scale < -1e-8 * (1.0 + vec_amax(&self.c))
    }

    /// The iteration cannot continue. Degenerate optimal faces floor the
    /// reachable gap in double precision, so a feasibility-clean iterate is
    /// handed back as a usable bound under MaxIterations; anything else is a
    /// numerical failure.
    fn breakdown(
        self,
        iter: usize,
        rel_gap: f64,
        pres: f64,
        dres: f64,
        why: &str,
    ) -> RawSolution {
        if pres <= 1e-6 && dres <= 1e-6 {
            return self.finish(
                SdpStatus::MaxIterations,
                iter,
                rel_gap,
                pres,
                dres,
                Some(format!("{why}; returning the last feasible iterate")),
            );
        }
        self.finish(
            SdpStatus::NumericalFailure,
            iter,
            rel_gap,
            pres,
            dres,
            Some(why.to_string()),
        )
    }

    fn finish(
        self,
        status: SdpStatus,
        iterations: usize,
        rel_gap: f64,
        pres: f64,
        dres: f64,
        failure: Option<String>,
    ) -> RawSolution {
        // rays stay unscaled; everything else dehomogenizes by τ
        let scale = match status {
            SdpStatus::PrimalInfeasible | SdpStatus::DualUnbounded => 1.0,
            _ => self.tau.max(f64::MIN_POSITIVE),
        };
        let y: Vec<f64> = self.y.iter().map(|v| v / scale).collect();
        let lam: Vec<f64> = self.lam.iter().map(|v| v / scale).collect();
        let x_blocks: Vec<DMatrix<f64>> = self.x.iter().map(|m| m / scale).collect();
        let z_blocks: Vec<DMatrix<f64>> = self.z.iter().map(|m| m / scale).collect();
        let c0z: f64 = self
            .p
            .blocks
            .iter()
            .zip(&z_blocks)
            .map(|(blk, z)| frob(&blk.c0, z))
            .sum();
        let pobj = self.c.dot(&DVector::from_vec(y.clone()));
        let dobj = self.b.dot(&DVector::from_vec(lam.clone())) - c0z;
        RawSolution {
            status,
            y,
            lam,
            x_blocks,
            z_blocks,
            pobj,
            dobj,
            iterations,
            rel_gap,
            primal_residual: pres,
            dual_residual: dres,
            failure,
        }
    }

    /// Per-iteration factorizations: H = B*T⁻¹B via the Gram kernel, its
    /// Cholesky, the Schur complement over the equality rows, and the
    /// τ-column solve shared by predictor and corrector.
    fn factor(&self, scalings: &[Scaling]) -> Option<Kkt> {
        let m = self.m;
        let mut h = DMatrix::zeros(m, m);
        let mut h_c = DVector::zeros(m);
        let mut g_c = 0.0;
        let mut w_c_blocks = Vec::with_capacity(self.p.blocks.len());
        for (bi, blk) in self.p.blocks.iter().enumerate() {
            let sc = &scalings[bi];
            let s = blk.size;
            let k = blk.var_index.len();
            // columns of P A_k Pᵀ scaled by sqrt(2/(λ_i+λ_j)), flattened
            let mut f = vec![0.0f64; s * s * k];
            for (kk, entries) in blk.coeffs.iter().enumerate() {
                let e = &mut f[kk * s * s..(kk + 1) * s * s];
                for &(i, j, c) in entries {
                    // A_v = Σ c (e_i e_jᵀ + e_j e_iᵀ) over i < j plus the
                    // plain diagonal, so halve c when i == j to avoid
                    // counting p_i p_iᵀ twice
                    let cc = if i == j { 0.5 * c } else { c };
                    let pi = sc.p.column(i);
                    let pj = sc.p.column(j);
                    for col in 0..s {
                        for row in 0..s {
                            e[col * s + row] += cc * (pi[row] * pj[col] + pj[row] * pi[col]);
                        }
                    }
                }
            }
            // wait-free scaling by the spectral factor
            for kk in 0..k {
                let e = &mut f[kk * s * s..(kk + 1) * s * s];
                for col in 0..s {
                    for row in 0..s {
                        e[col * s + row] *= (2.0 / (sc.lam[row] + sc.lam[col])).sqrt();
                    }
                }
            }
            let g = kernels::gram(&f, s * s, k);
            for a in 0..k {
                for bcol in 0..k {
                    h[(blk.var_index[a], blk.var_index[bcol])] += g[bcol * k + a];
                }
            }
            let w_c = sc.apply_tinv(&blk.c0);
            for kk in 0..k {
                h_c[blk.var_index[kk]] += blk.pair(kk, &w_c);
            }
            g_c += frob(&blk.c0, &w_c);
            w_c_blocks.push(w_c);
        }

        let chol_h = robust_cholesky(&h)?;
        let (chol_s, hi_at) = if self.rows > 0 {
            let hi_at = chol_h.solve(&self.p.eq.transpose());
            let s_mat = &self.p.eq * &hi_at;
            (Some(robust_cholesky(&s_mat)?), hi_at)
        } else {
            (None, DMatrix::zeros(m, 0))
        };

        // shared τ-column solve: K [u2; w2] = [h_C + c; −b]
        let p2 = &h_c + &self.c;
        let q2 = -&self.b;
        let (u2, w2) = solve_kkt(&chol_h, chol_s.as_ref(), &hi_at, &h, &self.p.eq, &p2, &q2);

        Some(Kkt {
            h,
            chol_h,
            chol_s,
            hi_at,
            h_c,
            g_c,
            u2,
            w2,
        })
    }

    /// Build one search direction for the given centrality target R_c,
    /// residual weight η, and τκ target.
    fn direction(
        &self,
        kkt: &Kkt,
        scalings: &[Scaling],
        res: &Residuals,
        rc: &[DMatrix<f64>],
        eta: f64,
        rtk: f64,
    ) -> Option<Direction> {
        let nblocks = self.p.blocks.len();
        // W_R per block: T⁻¹(R_c − η r_x)
        let mut h_r = DVector::zeros(self.m);
        let mut g_r = 0.0;
        let mut w_r_blocks = Vec::with_capacity(nblocks);
        for (bi, blk) in self.p.blocks.iter().enumerate() {
            let rhs = &rc[bi] - &res.rx[bi] * eta;
            let w_r = scalings[bi].apply_tinv(&rhs);
            for kk in 0..blk.var_index.len() {
                h_r[blk.var_index[kk]] += blk.pair(kk, &w_r);
            }
            g_r += frob(&blk.c0, &w_r);
            w_r_blocks.push(w_r);
        }

        let p1 = &h_r + &res.rd * eta;
        let q1 = -&res.rp * eta;
        let (u1, w1) = solve_kkt(
            &kkt.chol_h,
            kkt.chol_s.as_ref(),
            &kkt.hi_at,
            &kkt.h,
            &self.p.eq,
            &p1,
            &q1,
        );

        let rhs3 = -eta * res.rg - g_r - rtk / self.tau;
        let c_minus_hc = &self.c - &kkt.h_c;
        let den = -c_minus_hc.dot(&kkt.u2) + self.b.dot(&kkt.w2) - (kkt.g_c + self.kappa / self.tau);
        if den.abs() < 1e-300 || !den.is_finite() {
            return None;
        }
        let num = rhs3 - c_minus_hc.dot(&u1) + self.b.dot(&w1);
        let dtau = num / den;

        let dy = &u1 - &kkt.u2 * dtau;
        let dlam = &w1 - &kkt.w2 * dtau;
        let dkappa = (rtk - self.kappa * dtau) / self.tau;

        let dy_slice: Vec<f64> = dy.iter().copied().collect();
        let mut dx = Vec::with_capacity(nblocks);
        let mut dz = Vec::with_capacity(nblocks);
        for (bi, blk) in self.p.blocks.iter().enumerate() {
            let bdy = blk.combine(&dy_slice) + &blk.c0 * dtau;
            let mut dzb = &w_r_blocks[bi] - scalings[bi].apply_tinv(&bdy);
            let mut dxb = bdy + &res.rx[bi] * eta;
            symmetrize(&mut dzb);
            symmetrize(&mut dxb);
            dx.push(dxb);
            dz.push(dzb);
        }

        // the eigen-route ΔZ and the Gram-route Δy agree only up to rounding
        // amplified by T⁻¹, which floors the dual residual near a
        // rank-deficient optimum; pull ΔZ back onto
        // B*(ΔZ) + AᵀΔλ − cΔτ = −η r_d with the minimum-norm correction
        if let Some(chol_g) = &self.chol_g {
            let mut bstar_dz = DVector::zeros(self.m);
            for (bi, blk) in self.p.blocks.iter().enumerate() {
                for kk in 0..blk.var_index.len() {
                    bstar_dz[blk.var_index[kk]] += blk.pair(kk, &dz[bi]);
                }
            }
            let target = &self.c * dtau - self.p.eq.transpose() * &dlam - &res.rd * eta;
            let xi = chol_g.solve(&(target - bstar_dz));
            let xi_slice: Vec<f64> = xi.iter().copied().collect();
            for (bi, blk) in self.p.blocks.iter().enumerate() {
                dz[bi] += blk.combine(&xi_slice);
            }
        }
        Some(Direction {
            dy,
            dlam,
            dx,
            dz,
            dtau,
            dkappa,
        })
    }

    /// Largest α keeping X + αΔX ≻ 0, Z + αΔZ ≻ 0, τ + αΔτ > 0, κ + αΔκ > 0.
    fn max_step(&self, dir: &Direction) -> f64 {
        let mut alpha = f64::INFINITY;
        for b in 0..self.x.len() {
            alpha = alpha.min(step_to_boundary(&self.x[b], &dir.dx[b]));
            alpha = alpha.min(step_to_boundary(&self.z[b], &dir.dz[b]));
        }
        if dir.dtau < 0.0 {
            alpha = alpha.min(-self.tau / dir.dtau);
        }
        if dir.dkappa < 0.0 {
            alpha = alpha.min(-self.kappa / dir.dkappa);
        }
        alpha
    }

    /// 0.99 of the boundary step, backed off until the trial iterate is
    /// verifiably usable; 0.0 when no step survives.
    fn verified_step(&self, dir: &Direction) -> f64 {
        let mut alpha = (0.99 * self.max_step(dir)).min(1.0);
        while alpha >= 1e-12 && !self.step_stays_interior(dir, alpha) {
            alpha *= 0.5;
        }
        if alpha < 1e-12 {
            0.0
        } else {
            alpha
        }
    }

    /// Accept a trial iterate only if the next iteration's scaling can be
    /// built from it; checking with the same factorization avoids dying one
    /// iteration later inside the scaling eigendecomposition.
    fn step_stays_interior(&self, dir: &Direction, alpha: f64) -> bool {
        if self.tau + alpha * dir.dtau <= 0.0 || self.kappa + alpha * dir.dkappa <= 0.0 {
            return false;
        }
        for b in 0..self.x.len() {
            let mut xt = &self.x[b] + &dir.dx[b] * alpha;
            symmetrize(&mut xt);
            let mut zt = &self.z[b] + &dir.dz[b] * alpha;
            symmetrize(&mut zt);
            if Cholesky::new(xt.clone()).is_none() || Cholesky::new(zt.clone()).is_none() {
                return false;
            }
            if Scaling::of(&xt, &zt).is_none() {
                return false;
            }
        }
        true
    }
}

struct Kkt {
    h: DMatrix<f64>,
    chol_h: Cholesky<f64, Dyn>,
    chol_s: Option<Cholesky<f64, Dyn>>,
    hi_at: DMatrix<f64>,
    h_c: DVector<f64>,
    g_c: f64,
    u2: DVector<f64>,
    w2: DVector<f64>,
}

/// Solve H u − Aᵀ w = p, A u = q through the Schur complement S = A H⁻¹ Aᵀ,
/// with one round of iterative refinement. H gets badly conditioned as the
/// iterates approach a rank-deficient optimum, and the refinement step buys
/// back the digits the normal equations lose there.
fn solve_kkt(
    chol_h: &Cholesky<f64, Dyn>,
    chol_s: Option<&Cholesky<f64, Dyn>>,
    hi_at: &DMatrix<f64>,
    h: &DMatrix<f64>,
    a: &DMatrix<f64>,
    p: &DVector<f64>,
    q: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let solve_once = |p: &DVector<f64>, q: &DVector<f64>| {
        let hip = chol_h.solve(p);
        match chol_s {
            Some(chol_s) => {
                let w = chol_s.solve(&(q - a * &hip));
                // u = H⁻¹p + H⁻¹Aᵀ w; reuse the prefactored H⁻¹Aᵀ
                let u = &hip + hi_at * &w;
                (u, w)
            }
            None => (hip, DVector::zeros(0)),
        }
    };
    let (mut u, mut w) = solve_once(p, q);
    for _ in 0..2 {
        let rp = p - (h * &u - a.transpose() * &w);
        let rq = q - a * &u;
        let (du, dw) = solve_once(&rp, &rq);
        u += du;
        w += dw;
    }
    (u, w)
}

fn mat_amax(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.amax()
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigen().eigenvalues.min()
}

/// amax that tolerates zero-length vectors (problems without equality rows).
fn vec_amax(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.amax()
    }
}

/// Cholesky with an escalating diagonal jitter; the scale follows the
/// largest diagonal entry so the perturbation stays relative.
fn robust_cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = (0..m.nrows())
        .map(|i| m[(i, i)].abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    for jitter in [1e-14, 1e-10, 1e-6] {
        let jittered = m + DMatrix::identity(m.nrows(), m.ncols()) * (jitter * scale);
        if let Some(c) = Cholesky::new(jittered) {
            return Some(c);
        }
    }
    None
}

/// Largest α with M + αΔ ⪰ 0 for symmetric PD M.
fn step_to_boundary(m: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let chol = match Cholesky::new(m.clone()) {
        Some(c) => c,
        None => match robust_cholesky(m) {
            Some(c) => c,
            None => return 0.0,
        },
    };
    // W = L⁻¹ Δ L⁻ᵀ; boundary at −1/λ_min(W)
    let li_d = chol.l().solve_lower_triangular(d).expect("L invertible");
    let w = chol
        .l()
        .solve_lower_triangular(&li_d.transpose())
        .expect("L invertible");
    let sym = (&w + w.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut min = f64::INFINITY;
    for &v in eig.eigenvalues.iter() {
        min = min.min(v);
    }
    if min >= -1e-14 {
        f64::INFINITY
    } else {
        -1.0 / min
    }
}

fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
