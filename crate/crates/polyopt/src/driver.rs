//! The optimization loop: strategy selection, the per-order
//! assemble/solve/certify cycle, recursion from the stationary branch into
//! the singular one, and the problem-file front end.

use crate::certify::{self, Certificate};
use crate::constraints::{
    apply_known_minimum, build_fj_gram, build_fj_minors, build_kkt_eliminated, build_singular,
    ConstraintError, ConstraintSet, ProblemInstance, Provenance,
};
use crate::groebner::BuchbergerBudget;
use crate::moment::{
    assemble, moment_matrix, AssembleOptions, LinearForm, MomentError, MomentRelaxation,
};
use crate::poly::calculus::gradient;
use crate::poly::{parse_poly, FPoly, Poly, QPoly, VarSpace};
use crate::report::{BranchReport, BranchStatus, OrderLog, PointReport, RunReport};
use crate::sdp::{
    problem_from_relaxation, reduce_equality_rows, solve_relaxation, solve_relaxation_low_rank,
    solve_relaxation_pinned, solve_relaxation_steered, MomentFunctional, RowReduction, SdpOptions,
    SdpSolution, SdpStatus,
};
use num_rational::BigRational;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

/// A stalled-but-feasible solve is still usable as a certificate source
/// when its duality gap and residuals sit below these levels.
const USABLE_GAP: f64 = 1e-5;
const USABLE_FEAS: f64 = 1e-6;
/// Kernel ideals at consecutive orders must mutually reduce below this.
const IDEAL_MATCH_TOL: f64 = 1e-5;
/// Optimum drift allowed across consecutive orders for stabilization.
const STABLE_OPT_TOL: f64 = 1e-7;
/// Coefficient snap radius when comparing kernel ideals across orders.
const STABLE_SNAP_TOL: f64 = 5e-3;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("problem file: {0}")]
    Parse(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error("export: {0}")]
    Export(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Auto,
    Gradient,
    KktElim,
    FjMinors,
    FjGram,
    Direct,
    KnownMinimum,
    RealRadical,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Auto => "auto",
            Strategy::Gradient => "gradient",
            Strategy::KktElim => "kkt-elim",
            Strategy::FjMinors => "fj-minors",
            Strategy::FjGram => "fj-gram",
            Strategy::Direct => "direct",
            Strategy::KnownMinimum => "known-minimum",
            Strategy::RealRadical => "real-radical",
        }
    }

    /// Strategies whose constraint sets describe first-order conditions, so
    /// an infeasible verdict licenses the singular fallback.
    fn stationary_family(self) -> bool {
        matches!(
            self,
            Strategy::Gradient | Strategy::KktElim | Strategy::FjMinors | Strategy::FjGram
        )
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "auto" => Strategy::Auto,
            "gradient" => Strategy::Gradient,
            "kkt-elim" => Strategy::KktElim,
            "fj-minors" => Strategy::FjMinors,
            "fj-gram" => Strategy::FjGram,
            "direct" => Strategy::Direct,
            "known-minimum" => Strategy::KnownMinimum,
            "real-radical" => Strategy::RealRadical,
            other => {
                return Err(format!(
                    "unknown strategy '{other}' (expected auto, gradient, kkt-elim, fj-minors, \
                     fj-gram, direct, known-minimum or real-radical)"
                ))
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub strategy: Strategy,
    /// Hierarchy cap; defaults to the starting order plus two.
    pub max_order: Option<usize>,
    pub rank_tol: f64,
    pub sdp: SdpOptions,
    /// Depth limit for the singular recursion.
    pub recursion_limit: usize,
    /// Required by the known-minimum strategy.
    pub known_minimum: Option<BigRational>,
    /// Explore the singular branch even when the stationary one succeeds.
    pub full_fj: bool,
    /// Jacobian rank bound for the minor systems; defaults to the equality
    /// count, lower it for smooth varieties of known codimension.
    pub fj_rank: Option<usize>,
    /// Localize only individual inequalities instead of all products.
    pub quadratic_module: bool,
    /// Re-solve with a pinned objective and a random direction to confirm
    /// the moment matrix rank is maximal over the optimal face.
    pub max_rank_check: bool,
    pub seed: u64,
    pub export_sdpa: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            strategy: Strategy::Auto,
            max_order: None,
            rank_tol: 1e-6,
            sdp: SdpOptions::default(),
            recursion_limit: 3,
            known_minimum: None,
            full_fj: false,
            fj_rank: None,
            quadratic_module: false,
            max_rank_check: false,
            seed: 0,
            export_sdpa: None,
        }
    }
}

/// Everything a caller may want beyond the serializable report.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Certificate of the winning branch, when one found a minimum.
    pub certificate: Option<Certificate>,
}

fn status_label(s: SdpStatus) -> &'static str {
    match s {
        SdpStatus::Optimal => "optimal",
        SdpStatus::PrimalInfeasible => "primal-infeasible",
        SdpStatus::DualUnbounded => "dual-unbounded",
        SdpStatus::MaxIterations => "max-iterations",
        SdpStatus::NumericalFailure => "numerical-failure",
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn usable(sol: &SdpSolution) -> bool {
    if sol.linear_form.is_none() {
        return false;
    }
    match sol.status {
        SdpStatus::Optimal => true,
        SdpStatus::MaxIterations => {
            sol.rel_gap <= USABLE_GAP
                && sol.primal_residual <= USABLE_FEAS
                && sol.dual_residual <= USABLE_FEAS
        }
        _ => false,
    }
}

fn push_note(slot: &mut Option<String>, note: &str) {
    match slot {
        Some(old) => {
            old.push_str("; ");
            old.push_str(note);
        }
        None => *slot = Some(note.to_string()),
    }
}

/// A certificate closes the branch only if it is flat, extraction produced
/// points, and every point checks out against the original problem.
fn passing_verification(
    cert: &Certificate,
    p: &ProblemInstance,
    value: f64,
) -> Option<certify::VerifyReport> {
    if cert.flat.map_or(false, |v| v.flat) && cert.extraction_note.is_none() && !cert.points.is_empty()
    {
        let verification = certify::verify(&cert.points, &cert.generators, p, value);
        if verification.pass {
            return Some(verification);
        }
    }
    None
}

/// Close out a branch whose certificate verified. The polished points are
/// feasible and agree with the relaxation value, so their objective is the
/// sharper number; the SDP value stays in the order log.
#[allow(clippy::too_many_arguments)]
fn branch_success(
    mut report: BranchReport,
    mut log: OrderLog,
    mut cert: Certificate,
    verification: certify::VerifyReport,
    value: f64,
    dual_bound: Option<f64>,
    t: usize,
    set: &ConstraintSet,
    p: &ProblemInstance,
    start: Instant,
    t0: Instant,
) -> (BranchReport, Option<Certificate>) {
    log.elapsed_ms = t0.elapsed().as_millis() as u64;
    report.orders.push(log);
    let obj = p.objective.to_float();
    let point_value = cert
        .points
        .iter()
        .filter_map(|pt| obj.evaluate(&pt.coords).ok())
        .fold(f64::INFINITY, f64::min);
    cert.optimum = if point_value.is_finite() {
        point_value
    } else {
        value
    };
    report.status = BranchStatus::MinimumFound;
    report.optimum = Some(cert.optimum);
    report.dual_bound = dual_bound;
    report.certificate_order = Some(t);
    report.generators = generator_strings(&cert.generators, &set.vars);
    report.points = point_reports(&cert, &verification);
    report.elapsed_ms = start.elapsed().as_millis() as u64;
    (report, Some(cert))
}

/// Uniform mixture of evaluation functionals at the given points.
fn average_evaluation(atoms: &[Vec<f64>], nvars: usize, order: usize) -> LinearForm {
    let mut avg: Option<Vec<f64>> = None;
    for a in atoms {
        let form = LinearForm::evaluation(a, order);
        match &mut avg {
            Some(acc) => {
                for (s, v) in acc.iter_mut().zip(form.values()) {
                    *s += v;
                }
            }
            None => avg = Some(form.values().to_vec()),
        }
    }
    let mut avg = avg.expect("at least one atom");
    let k = atoms.len() as f64;
    for s in avg.iter_mut() {
        *s /= k;
    }
    LinearForm::from_moment_vars(nvars, order, &avg[1..])
}

/// Trace minimization steers toward atoms with small moments, so the flat
/// certificate it finds can cover only part of the minimizer set. Probe for
/// the rest: maximize the moment of q = Σ gᵢ² (which vanishes exactly on
/// the variety found so far) over the optimal face, and if mass shows up,
/// concentrate there, extract, verify, and take the union. The final
/// certificate is rebuilt from the uniform mixture over all verified atoms.
/// Every atom is verified against the original problem, so a partial union
/// never produces a wrong certificate, only a smaller reported set.
fn complete_minimizer_set(
    rel: &MomentRelaxation,
    set: &ConstraintSet,
    p: &ProblemInstance,
    cfg: &RunConfig,
    value: f64,
    base: Certificate,
    base_verification: certify::VerifyReport,
) -> (Certificate, certify::VerifyReport, Option<String>) {
    let slack = 1e-7 * (1.0 + value.abs());
    let f_pin = (MomentFunctional::objective(rel), value + slack);
    let mut atoms: Vec<Vec<f64>> = base.points.iter().map(|pt| pt.coords.clone()).collect();
    let mut gens = base.generators.clone();
    let mut grew = false;
    for _ in 0..2 {
        let mut q = FPoly::zero(p.vars.len());
        for g in &gens {
            q = &q + &(g * g);
        }
        if q.is_zero() {
            break;
        }
        let Some(qfun) = MomentFunctional::from_poly(rel, &q) else {
            break;
        };
        let Some(probe) = solve_relaxation_steered(
            rel,
            &cfg.sdp,
            std::slice::from_ref(&f_pin),
            &qfun.negated(),
        ) else {
            break;
        };
        if !usable(&probe) {
            break;
        }
        let qmax = probe
            .linear_form
            .as_ref()
            .expect("usable implies a form")
            .apply(&q);
        if qmax <= 1e-4 * (1.0 + q.coeff_max()) {
            break;
        }
        let pins = [
            f_pin.clone(),
            (qfun, qmax - 1e-7 * (1.0 + qmax.abs())),
        ];
        let Some(far) = solve_relaxation_steered(rel, &cfg.sdp, &pins, &MomentFunctional::trace(rel))
        else {
            break;
        };
        if !usable(&far) {
            break;
        }
        let lf = far.linear_form.as_ref().expect("usable implies a form");
        let cert = certify::certificate(lf, set, value, cfg.rank_tol, cfg.seed);
        if passing_verification(&cert, p, value).is_none() {
            break;
        }
        let mut news = 0usize;
        for pt in &cert.points {
            let dup = atoms.iter().any(|a| {
                a.iter()
                    .zip(&pt.coords)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0f64, f64::max)
                    <= 1e-6
            });
            if !dup {
                atoms.push(pt.coords.clone());
                news += 1;
            }
        }
        if news == 0 {
            break;
        }
        grew = true;
        let avg = average_evaluation(&atoms, p.vars.len(), rel.order);
        gens = certify::kernel_ideal(&avg, cfg.rank_tol);
    }
    // rebuild from the uniform mixture even when nothing new was found: the
    // explicit evaluation moments are far cleaner numerically than the
    // solver iterate, so the kernel ideal comes out exact
    let avg = average_evaluation(&atoms, p.vars.len(), rel.order);
    let cert = certify::certificate(&avg, set, value, cfg.rank_tol, cfg.seed);
    if let Some(verification) = passing_verification(&cert, p, value) {
        let note = grew.then(|| {
            format!(
                "minimizer set completed by steering off the found variety; {} points",
                cert.points.len()
            )
        });
        return (cert, verification, note);
    }
    (base, base_verification, None)
}

/// Starting order ⌈max deg / 2⌉ over the objective and every constraint.
fn starting_order(f: &QPoly, set: &ConstraintSet) -> usize {
    let mut d = f.degree().unwrap_or(0);
    for q in set.equalities.iter().chain(&set.inequalities) {
        d = d.max(q.degree().unwrap_or(0));
    }
    d.div_ceil(2).max(1)
}

fn gradient_set(p: &ProblemInstance) -> ConstraintSet {
    ConstraintSet::new(
        p.vars.clone(),
        gradient(&p.objective),
        Vec::new(),
        Provenance::Gradient,
    )
}

/// Resolve the configured strategy into the instance actually minimized
/// and its constraint set. Auto picks per the problem shape and falls back
/// from elimination to minors when the basis computation blows its budget.
fn resolve_strategy(
    p: &ProblemInstance,
    cfg: &RunConfig,
    warnings: &mut Vec<String>,
) -> Result<(Strategy, ProblemInstance, ConstraintSet), DriverError> {
    match cfg.strategy {
        Strategy::Auto => {
            if p.equalities.is_empty() && p.inequalities.is_empty() {
                return Ok((Strategy::Gradient, p.clone(), gradient_set(p)));
            }
            match build_kkt_eliminated(p, &BuchbergerBudget::default()) {
                Ok(set) => Ok((Strategy::KktElim, p.clone(), set)),
                Err(ConstraintError::Groebner(e)) => {
                    warnings.push(format!("kkt-elim abandoned ({e}); falling back to fj-minors"));
                    Ok((
                        Strategy::FjMinors,
                        p.clone(),
                        build_fj_minors(p, cfg.fj_rank)?,
                    ))
                }
                Err(e) => Err(e.into()),
            }
        }
        Strategy::Gradient => {
            if !p.equalities.is_empty() || !p.inequalities.is_empty() {
                return Err(DriverError::Config(
                    "the gradient strategy applies to unconstrained problems only".into(),
                ));
            }
            Ok((Strategy::Gradient, p.clone(), gradient_set(p)))
        }
        Strategy::KktElim => Ok((
            Strategy::KktElim,
            p.clone(),
            build_kkt_eliminated(p, &BuchbergerBudget::default())?,
        )),
        Strategy::FjMinors => Ok((
            Strategy::FjMinors,
            p.clone(),
            build_fj_minors(p, cfg.fj_rank)?,
        )),
        Strategy::FjGram => Ok((Strategy::FjGram, p.clone(), build_fj_gram(p, cfg.fj_rank)?)),
        Strategy::Direct => Ok((
            Strategy::Direct,
            p.clone(),
            ConstraintSet::from_instance(p, Provenance::Direct),
        )),
        Strategy::KnownMinimum => {
            let Some(fstar) = &cfg.known_minimum else {
                return Err(DriverError::Config(
                    "the known-minimum strategy needs the optimum value".into(),
                ));
            };
            let pinned = apply_known_minimum(p, fstar);
            let set = ConstraintSet::from_instance(&pinned, Provenance::KnownMinimum);
            Ok((Strategy::KnownMinimum, pinned, set))
        }
        Strategy::RealRadical => {
            let zeroed = ProblemInstance {
                vars: p.vars.clone(),
                objective: QPoly::zero(p.nvars()),
                equalities: p.equalities.clone(),
                inequalities: p.inequalities.clone(),
            };
            let set = ConstraintSet::from_instance(&zeroed, Provenance::RealRadical);
            Ok((Strategy::RealRadical, zeroed, set))
        }
    }
}

fn export_relaxation(
    rel: &MomentRelaxation,
    dir: &Path,
    label: &str,
    order: usize,
) -> Result<(), DriverError> {
    let nv = rel.num_moment_vars();
    let RowReduction::Reduced { a, b, .. } = reduce_equality_rows(&rel.equalities, nv) else {
        // exactly inconsistent rows have no SDP to write
        return Ok(());
    };
    let prob = problem_from_relaxation(rel, a, b);
    std::fs::create_dir_all(dir).map_err(|e| DriverError::Export(e.to_string()))?;
    let name = format!("{}-order-{order}.dat-s", label.replace('/', "-"));
    let file =
        std::fs::File::create(dir.join(name)).map_err(|e| DriverError::Export(e.to_string()))?;
    crate::sdpa::write_sdpa(&prob, std::io::BufWriter::new(file))
        .map_err(|e| DriverError::Export(e.to_string()))
}

fn point_reports(cert: &Certificate, verification: &certify::VerifyReport) -> Vec<PointReport> {
    cert.points
        .iter()
        .zip(&verification.checks)
        .map(|(pt, chk)| PointReport {
            coords: pt.coords.clone(),
            multiplicity: pt.multiplicity,
            objective_gap: chk.objective_gap,
            equality_residual: chk.equality_residual,
            min_inequality: chk.min_inequality,
            generator_residual: chk.generator_residual,
            pass: chk.pass,
        })
        .collect()
}

fn generator_strings(gens: &[FPoly], vars: &VarSpace) -> Vec<String> {
    gens.iter().map(|g| g.display(vars).to_string()).collect()
}

/// One hierarchy run over a fixed constraint set: solve orders t_start and
/// up until a flat certificate verifies, the kernel ideal stabilizes, the
/// relaxation proves infeasibility, or the order budget runs out.
fn run_branch(
    p: &ProblemInstance,
    strategy: Strategy,
    set: &ConstraintSet,
    label: &str,
    cfg: &RunConfig,
) -> Result<(BranchReport, Option<Certificate>), DriverError> {
    let start = Instant::now();
    let mut report = BranchReport {
        label: label.to_string(),
        strategy: strategy.to_string(),
        status: BranchStatus::OrderExhausted,
        optimum: None,
        dual_bound: None,
        certificate_order: None,
        stabilized: false,
        generators: Vec::new(),
        points: Vec::new(),
        orders: Vec::new(),
        note: None,
        elapsed_ms: 0,
    };

    if set.symbolically_infeasible {
        report.status = BranchStatus::InfeasibleNoKktMinimizer;
        report.note = Some(
            "constraint set contains a nonzero constant; infeasible before any relaxation".into(),
        );
        report.elapsed_ms = start.elapsed().as_millis() as u64;
        return Ok((report, None));
    }

    let t_start = starting_order(&p.objective, set);
    let t_max = match cfg.max_order {
        Some(m) if m < t_start => {
            return Err(DriverError::Config(format!(
                "max order {m} is below the starting order {t_start}"
            )))
        }
        Some(m) => m,
        None => t_start + 2,
    };
    let opts = AssembleOptions {
        quadratic_module: cfg.quadratic_module,
        ..AssembleOptions::default()
    };

    // last usable order's optimum, certificate and verification
    let mut prev: Option<(f64, Certificate, certify::VerifyReport)> = None;
    for t in t_start..=t_max {
        let t0 = Instant::now();
        let rel = assemble(&p.objective, set, t, &opts)?;
        if let Some(dir) = &cfg.export_sdpa {
            export_relaxation(&rel, dir, label, t)?;
        }
        let sol = solve_relaxation(&rel, &cfg.sdp);
        let mut log = OrderLog {
            order: t,
            block_sizes: rel.blocks.iter().map(|b| b.size).collect(),
            equality_rows: rel.equalities.len(),
            status: status_label(sol.status).to_string(),
            primal_value: finite(sol.objective),
            dual_value: finite(sol.dual_objective),
            iterations: sol.iterations,
            rel_gap: sol.rel_gap,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            rank_profile: Vec::new(),
            flat: None,
            note: None,
            elapsed_ms: 0,
        };

        if sol.status == SdpStatus::PrimalInfeasible {
            log.note = sol.infeasibility_certificate.clone();
            log.elapsed_ms = t0.elapsed().as_millis() as u64;
            report.orders.push(log);
            report.status = BranchStatus::InfeasibleNoKktMinimizer;
            report.note = Some(format!("infeasible up to order {t}"));
            report.elapsed_ms = start.elapsed().as_millis() as u64;
            return Ok((report, None));
        }

        if !usable(&sol) {
            log.note = Some(match (&sol.failure, sol.status) {
                (Some(f), _) => f.clone(),
                (None, SdpStatus::DualUnbounded) => {
                    "relaxation unbounded below at this order".into()
                }
                (None, _) => "no usable iterate at this order".into(),
            });
            log.elapsed_ms = t0.elapsed().as_millis() as u64;
            report.orders.push(log);
            // a failed order breaks the consecutive-order comparison
            prev = None;
            continue;
        }

        let lf = sol.linear_form.as_ref().expect("usable implies a form");
        let cert = certify::certificate(lf, set, sol.objective, cfg.rank_tol, cfg.seed);
        log.rank_profile = cert.rank_profile.clone();
        log.flat = cert.flat;
        if let Some(f) = &sol.failure {
            log.note = Some(f.clone());
        }

        if let Some(verification) = passing_verification(&cert, p, sol.objective) {
            if cfg.max_rank_check {
                push_note(&mut log.note, &max_rank_note(&rel, &sol, &cert, cfg));
            }
            return Ok(branch_success(
                report,
                log,
                cert,
                verification,
                sol.objective,
                finite(sol.dual_objective),
                t,
                set,
                p,
                start,
                t0,
            ));
        }
        if let Some(note) = &cert.extraction_note {
            push_note(&mut log.note, &format!("extraction failed: {note}"));
        } else if cert.flat.map_or(false, |v| v.flat) {
            push_note(
                &mut log.note,
                "flat, but the extracted points failed verification",
            );
        }

        if let Some((popt, pcert, _)) = &prev {
            if (sol.objective - popt).abs() <= STABLE_OPT_TOL {
                // kernel directions pinned only tangentially pick up
                // square-root level solver noise, so raw coefficients can
                // disagree across orders even when the underlying ideal is
                // the same. Two orders independently rounding to one
                // rational ideal is stronger evidence than either raw
                // kernel alone, so that counts as a match too.
                let raw_match =
                    certify::ideals_match(&pcert.generators, &cert.generators, IDEAL_MATCH_TOL);
                let snapped = if raw_match {
                    None
                } else {
                    certify::snap_generators(&pcert.generators, STABLE_SNAP_TOL)
                        .zip(certify::snap_generators(&cert.generators, STABLE_SNAP_TOL))
                        .filter(|(a, b)| certify::ideals_match(a, b, 1e-9))
                        .map(|(a, _)| a)
                };
                if raw_match || snapped.is_some() {
                    let gens = snapped.clone().unwrap_or_else(|| pcert.generators.clone());
                    let verification = certify::verify(&pcert.points, &gens, p, *popt);
                    if verification.pass {
                        log.elapsed_ms = t0.elapsed().as_millis() as u64;
                        report.orders.push(log);
                        let (popt, mut pcert, verification) = prev.take().expect("checked above");
                        pcert.generators = gens;
                        report.status = BranchStatus::MinimumFound;
                        report.optimum = Some(popt);
                        report.dual_bound = finite(sol.dual_objective);
                        report.certificate_order = Some(pcert.order);
                        report.stabilized = true;
                        report.generators = generator_strings(&pcert.generators, &set.vars);
                        report.points = point_reports(&pcert, &verification);
                        report.note = Some(format!(
                            "kernel ideal stabilized across orders {} and {t}",
                            pcert.order
                        ));
                        report.elapsed_ms = start.elapsed().as_millis() as u64;
                        return Ok((report, Some(pcert)));
                    }
                }
            }
        }

        // the interior-point iterate sits at the maximum-rank end of the
        // optimal face; re-solving for minimal moment-matrix trace lands at
        // the measure-like end, where flatness actually shows up. Skipped in
        // radical mode: there the whole variety is the answer and a
        // concentrated measure would shrink it to a few atoms.
        if strategy != Strategy::RealRadical {
            if let Some(lr) = solve_relaxation_low_rank(&rel, &cfg.sdp, sol.objective) {
                if usable(&lr) {
                    let lf2 = lr.linear_form.as_ref().expect("usable implies a form");
                    let value = lf2.apply(&p.objective.to_float());
                    let cert2 = certify::certificate(lf2, set, value, cfg.rank_tol, cfg.seed);
                    if let Some(verification) = passing_verification(&cert2, p, value) {
                        push_note(
                            &mut log.note,
                            &format!(
                                "trace-minimizing re-solve is flat (ranks {:?})",
                                cert2.rank_profile
                            ),
                        );
                        let (cert2, verification, completion) =
                            complete_minimizer_set(&rel, set, p, cfg, value, cert2, verification);
                        log.flat = cert2.flat;
                        if let Some(n) = completion {
                            push_note(&mut log.note, &n);
                        }
                        if cfg.max_rank_check {
                            push_note(&mut log.note, &max_rank_note(&rel, &sol, &cert2, cfg));
                        }
                        return Ok(branch_success(
                            report,
                            log,
                            cert2,
                            verification,
                            value,
                            finite(sol.dual_objective),
                            t,
                            set,
                            p,
                            start,
                            t0,
                        ));
                    }
                }
            }
        }

        log.elapsed_ms = t0.elapsed().as_millis() as u64;
        report.orders.push(log);
        let verification = certify::verify(&cert.points, &cert.generators, p, sol.objective);
        prev = Some((sol.objective, cert, verification));
    }

    report.status = BranchStatus::OrderExhausted;
    report.note = Some(format!("no certificate up to order {t_max}"));
    if let Some((popt, pcert, _)) = prev {
        // hand back the deepest bound even without a certificate
        report.optimum = Some(popt);
        report.certificate_order = Some(pcert.order);
        report.generators = generator_strings(&pcert.generators, &set.vars);
    }
    report.elapsed_ms = start.elapsed().as_millis() as u64;
    Ok((report, None))
}

/// Confirm the solved form has maximal rank over the optimal face: re-solve
/// with the objective pinned and a seeded random direction, then compare
/// moment matrix ranks.
fn max_rank_note(
    rel: &MomentRelaxation,
    sol: &SdpSolution,
    cert: &Certificate,
    cfg: &RunConfig,
) -> String {
    let base_rank = *cert.rank_profile.last().unwrap_or(&0);
    let Some(pinned) = solve_relaxation_pinned(rel, &cfg.sdp, sol.objective, cfg.seed) else {
        return "max-rank check skipped: rows are exactly inconsistent".into();
    };
    let Some(plf) = &pinned.linear_form else {
        return "max-rank check inconclusive: pinned re-solve returned no iterate".into();
    };
    let (pin_rank, _) = certify::numerical_rank(&moment_matrix(plf, rel.order).mat, cfg.rank_tol);
    if pin_rank > base_rank {
        format!("max-rank check: pinned re-solve reached rank {pin_rank} > {base_rank}; the reported kernel may be too large")
    } else {
        format!("max-rank check passed: pinned re-solve rank {pin_rank} ≤ {base_rank}")
    }
}

fn push_depth_branch(label: String, out: &mut Vec<(BranchReport, Option<Certificate>)>) {
    out.push((
        BranchReport {
            label,
            strategy: "singular".into(),
            status: BranchStatus::BudgetExhausted,
            optimum: None,
            dual_bound: None,
            certificate_order: None,
            stabilized: false,
            generators: Vec::new(),
            points: Vec::new(),
            orders: Vec::new(),
            note: Some("recursion depth limit reached before the singular system settled".into()),
            elapsed_ms: 0,
        },
        None,
    ));
}

fn minimize_into(
    p: &ProblemInstance,
    cfg: &RunConfig,
    prefix: &str,
    depth: usize,
    out: &mut Vec<(BranchReport, Option<Certificate>)>,
    warnings: &mut Vec<String>,
) -> Result<(), DriverError> {
    let label = format!("{prefix}kkt");
    let (strategy, instance, set) = match resolve_strategy(p, cfg, warnings) {
        Ok(r) => r,
        Err(DriverError::Constraint(ConstraintError::Groebner(e))) => {
            out.push((
                BranchReport {
                    label,
                    strategy: cfg.strategy.to_string(),
                    status: BranchStatus::BudgetExhausted,
                    optimum: None,
                    dual_bound: None,
                    certificate_order: None,
                    stabilized: false,
                    generators: Vec::new(),
                    points: Vec::new(),
                    orders: Vec::new(),
                    note: Some(e.to_string()),
                    elapsed_ms: 0,
                },
                None,
            ));
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    let (rep, cert) = run_branch(&instance, strategy, &set, &label, cfg)?;
    let infeasible = rep.status == BranchStatus::InfeasibleNoKktMinimizer;
    out.push((rep, cert));

    if strategy.stationary_family() && (infeasible || cfg.full_fj) {
        let sing = build_singular(p, cfg.fj_rank)?;
        let self_stable = sing.equalities.iter().all(|e| p.equalities.contains(e));
        if self_stable {
            let set = ConstraintSet::from_instance(&sing, Provenance::Singular);
            let (mut rep, cert) =
                run_branch(&sing, Strategy::Direct, &set, &format!("{prefix}singular"), cfg)?;
            rep.strategy = "singular".into();
            rep.note = Some(match rep.note {
                Some(n) => format!("singular system is self-stable; solved directly. {n}"),
                None => "singular system is self-stable; solved directly".into(),
            });
            out.push((rep, cert));
        } else if depth == 0 {
            push_depth_branch(format!("{prefix}singular"), out);
        } else {
            minimize_into(
                &sing,
                cfg,
                &format!("{prefix}singular/"),
                depth - 1,
                out,
                warnings,
            )?;
        }
    }
    Ok(())
}

/// Minimize the instance: run the stationary branch, explore the singular
/// locus when that branch is infeasible (or unconditionally with full FJ
/// coverage), and report the least optimum over all successful branches.
pub fn minimize(p: &ProblemInstance, cfg: &RunConfig) -> Result<RunOutcome, DriverError> {
    let start = Instant::now();
    let mut warnings = Vec::new();
    let mut branches: Vec<(BranchReport, Option<Certificate>)> = Vec::new();
    minimize_into(p, cfg, "", cfg.recursion_limit, &mut branches, &mut warnings)?;
    Ok(aggregate(branches, warnings, start, cfg))
}

/// Compute generators of the ideal of the real points cut out by the
/// constraints: the hierarchy with a zero objective, reported once the
/// kernel ideal stabilizes (or a flat certificate appears).
pub fn real_radical_mode(p: &ProblemInstance, cfg: &RunConfig) -> Result<RunOutcome, DriverError> {
    let start = Instant::now();
    let mut warnings = Vec::new();
    let radical_cfg = RunConfig {
        strategy: Strategy::RealRadical,
        ..cfg.clone()
    };
    let (strategy, instance, set) = resolve_strategy(p, &radical_cfg, &mut warnings)?;
    let (rep, cert) = run_branch(&instance, strategy, &set, "radical", &radical_cfg)?;
    Ok(aggregate(vec![(rep, cert)], warnings, start, &radical_cfg))
}

fn aggregate(
    branches: Vec<(BranchReport, Option<Certificate>)>,
    warnings: Vec<String>,
    start: Instant,
    cfg: &RunConfig,
) -> RunOutcome {
    let mut best: Option<usize> = None;
    for (i, (rep, _)) in branches.iter().enumerate() {
        if rep.status != BranchStatus::MinimumFound {
            continue;
        }
        let better = match best {
            None => true,
            Some(j) => {
                rep.optimum.unwrap_or(f64::INFINITY)
                    < branches[j].0.optimum.unwrap_or(f64::INFINITY)
            }
        };
        if better {
            best = Some(i);
        }
    }

    let strategy = branches
        .first()
        .map(|(r, _)| r.strategy.clone())
        .unwrap_or_else(|| cfg.strategy.to_string());

    let (status, optimum, generators, points, note, certificate) = match best {
        Some(i) => {
            let winner = &branches[i].0;
            let note = (branches.len() > 1).then(|| format!("minimum from branch {}", winner.label));
            (
                BranchStatus::MinimumFound,
                winner.optimum,
                winner.generators.clone(),
                winner.points.clone(),
                note,
                branches[i].1.clone(),
            )
        }
        None => {
            let all_infeasible = branches
                .iter()
                .all(|(r, _)| r.status == BranchStatus::InfeasibleNoKktMinimizer);
            if all_infeasible {
                (
                    BranchStatus::InfeasibleNoKktMinimizer,
                    None,
                    Vec::new(),
                    Vec::new(),
                    Some("no stationary or singular minimizer exists at the explored depth".into()),
                    None,
                )
            } else {
                let any_orders = branches
                    .iter()
                    .any(|(r, _)| r.status == BranchStatus::OrderExhausted);
                let status = if any_orders {
                    BranchStatus::OrderExhausted
                } else {
                    BranchStatus::BudgetExhausted
                };
                (
                    status,
                    None,
                    Vec::new(),
                    Vec::new(),
                    Some("no branch produced a certificate within its budget".into()),
                    None,
                )
            }
        }
    };

    let report = RunReport {
        status,
        strategy,
        optimum,
        generators,
        points,
        branches: branches.into_iter().map(|(r, _)| r).collect(),
        warnings,
        note,
        seed: cfg.seed,
        total_ms: start.elapsed().as_millis() as u64,
    };
    RunOutcome {
        report,
        certificate,
    }
}

/// Parse the line-oriented problem format: `vars x y z`, `minimize <poly>`,
/// `eq <poly>`, `geq <poly>`, `#` comments. A missing minimize line means a
/// zero objective, which is what radical runs use.
pub fn parse_problem(text: &str) -> Result<ProblemInstance, DriverError> {
    let mut vars: Option<VarSpace> = None;
    let mut objective: Option<QPoly> = None;
    let mut eqs: Vec<QPoly> = Vec::new();
    let mut geqs: Vec<QPoly> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (kw, rest) = match line.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (line, ""),
        };
        match kw {
            "vars" => {
                if vars.is_some() {
                    return Err(DriverError::Parse(format!(
                        "line {lineno}: duplicate vars line"
                    )));
                }
                let names: Vec<&str> = rest.split_whitespace().collect();
                if names.is_empty() {
                    return Err(DriverError::Parse(format!(
                        "line {lineno}: vars needs at least one name"
                    )));
                }
                vars = Some(VarSpace::new(names).map_err(|e| {
                    DriverError::Parse(format!("line {lineno}: {e}"))
                })?);
            }
            "minimize" | "eq" | "geq" => {
                let vs = vars.as_ref().ok_or_else(|| {
                    DriverError::Parse(format!("line {lineno}: vars must come before {kw}"))
                })?;
                let p = parse_poly(rest, vs)
                    .map_err(|e| DriverError::Parse(format!("line {lineno}: {e}")))?;
                match kw {
                    "minimize" => {
                        if objective.is_some() {
                            return Err(DriverError::Parse(format!(
                                "line {lineno}: duplicate minimize line"
                            )));
                        }
                        objective = Some(p);
                    }
                    "eq" => eqs.push(p),
                    _ => geqs.push(p),
                }
            }
            other => {
                return Err(DriverError::Parse(format!(
                    "line {lineno}: unknown directive '{other}'"
                )))
            }
        }
    }
    let vs = vars.ok_or_else(|| DriverError::Parse("missing vars line".into()))?;
    let n = vs.len();
    let objective = objective.unwrap_or_else(|| Poly::zero(n));
    ProblemInstance::new(vs, objective, eqs, geqs)
        .map_err(|e| DriverError::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::ideals_match;

    fn parse(src: &str) -> ProblemInstance {
        parse_problem(src).expect("fixture parses")
    }

    fn float_gens(gens: &[&str], vs: &VarSpace) -> Vec<FPoly> {
        gens.iter()
            .map(|g| parse_poly(g, vs).unwrap().to_float())
            .collect()
    }

    #[test]
    fn problem_files_parse_with_comments_and_defaults() {
        let p = parse(
            "# closest point\nvars x y\nminimize x^2 + y^2  # objective\n\neq x - 1\ngeq y\n",
        );
        assert_eq!(p.nvars(), 2);
        assert_eq!(p.equalities.len(), 1);
        assert_eq!(p.inequalities.len(), 1);

        let radical = parse("vars x\neq x^2\n");
        assert!(radical.objective.is_zero());
    }

    #[test]
    fn problem_file_errors_name_the_line() {
        let missing = parse_problem("minimize x\n").unwrap_err();
        assert!(missing.to_string().contains("vars must come before"));
        let unknown = parse_problem("vars x\nmaximize x\n").unwrap_err();
        assert!(unknown.to_string().contains("unknown directive"));
        let dup = parse_problem("vars x\nminimize x\nminimize x\n").unwrap_err();
        assert!(dup.to_string().contains("duplicate minimize"));
    }

    #[test]
    fn convex_quadratic_minimum_is_found_at_the_first_order() {
        let p = parse("vars x y\nminimize (x - 1)^2 + (y + 2)^2\n");
        let out = minimize(&p, &RunConfig::default()).unwrap();
        let rep = &out.report;
        assert_eq!(rep.status, BranchStatus::MinimumFound);
        assert_eq!(rep.strategy, "gradient");
        assert!(rep.optimum.unwrap().abs() <= 1e-7);
        assert_eq!(rep.points.len(), 1);
        let pt = &rep.points[0];
        assert!((pt.coords[0] - 1.0).abs() <= 1e-6);
        assert!((pt.coords[1] + 2.0).abs() <= 1e-6);
        assert_eq!(rep.branches[0].certificate_order, Some(1));
    }

    #[test]
    fn cubic_halfline_needs_the_singular_branch() {
        let p = parse("vars x\nminimize x\ngeq x^3\n");
        let out = minimize(&p, &RunConfig::default()).unwrap();
        let rep = &out.report;
        assert_eq!(rep.status, BranchStatus::MinimumFound);
        assert!(rep.optimum.unwrap().abs() <= 1e-8);

        let labels: Vec<&str> = rep.branches.iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, vec!["kkt", "singular/kkt", "singular/singular"]);
        assert_eq!(
            rep.branches[0].status,
            BranchStatus::InfeasibleNoKktMinimizer
        );
        assert_eq!(
            rep.branches[1].status,
            BranchStatus::InfeasibleNoKktMinimizer
        );
        assert_eq!(rep.branches[2].status, BranchStatus::MinimumFound);
        assert_eq!(rep.points.len(), 1);
        assert!(rep.points[0].coords[0].abs() <= 1e-8);
    }

    // The rank-one locus of the cyclic matrix [[a,b,c],[b,c,a]] with
    // a = x+z+1, b = x+y, c = y+z is the real line {a = b = c}, that is
    // {(t, t+1, t)}. The squared distance 3t^2+2t+1 bottoms out at t = -1/3.
    #[test]
    fn minor_strategy_certifies_the_closest_point_on_the_rank_one_line() {
        let p = parse(
            "vars x y z\nminimize x^2 + y^2 + z^2\n\
             eq (x + z + 1)*(y + z) - (x + y)^2\n\
             eq (x + z + 1)^2 - (y + z)*(x + y)\n\
             eq (x + z + 1)*(x + y) - (y + z)^2\n",
        );
        let cfg = RunConfig {
            strategy: Strategy::FjMinors,
            // the line is smooth of codimension two
            fj_rank: Some(2),
            ..RunConfig::default()
        };
        let out = minimize(&p, &cfg).unwrap();
        let rep = &out.report;
        assert_eq!(rep.status, BranchStatus::MinimumFound, "{}", rep.render());
        assert!((rep.optimum.unwrap() - 2.0 / 3.0).abs() <= 1e-5, "{}", rep.render());
        assert_eq!(rep.points.len(), 1);
        let pt = &rep.points[0].coords;
        assert!((pt[0] + 1.0 / 3.0).abs() <= 1e-5);
        assert!((pt[1] - 2.0 / 3.0).abs() <= 1e-5);
        assert!((pt[2] + 1.0 / 3.0).abs() <= 1e-5);

        let cert = out.certificate.expect("minimum carries a certificate");
        let want = float_gens(&["3*x + 1", "3*y - 2", "3*z + 1"], &p.vars);
        assert!(ideals_match(&cert.generators, &want, 1e-5));
    }

    #[test]
    fn identical_seeds_give_bitwise_identical_reports() {
        let p = parse("vars x y\nminimize (x - 1)^2 + (y + 2)^2\n");
        let cfg = RunConfig::default();
        let a = minimize(&p, &cfg).unwrap().report.normalized().to_json();
        let b = minimize(&p, &cfg).unwrap().report.normalized().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn real_radical_recovers_coordinate_ideals() {
        let cfg = RunConfig::default();

        let single = parse("vars x\neq x^2\n");
        let out = real_radical_mode(&single, &cfg).unwrap();
        assert_eq!(out.report.status, BranchStatus::MinimumFound);
        let cert = out.certificate.unwrap();
        let want = float_gens(&["x"], &single.vars);
        assert!(ideals_match(&cert.generators, &want, 1e-5));

        let circle_point = parse("vars x y\neq x^2 + y^2\n");
        let out = real_radical_mode(&circle_point, &cfg).unwrap();
        let cert = out.certificate.unwrap();
        let want = float_gens(&["x", "y"], &circle_point.vars);
        assert!(ideals_match(&cert.generators, &want, 1e-5));
    }

    #[test]
    fn real_radical_of_no_constraints_is_empty() {
        let free = parse("vars x\n");
        let out = real_radical_mode(&free, &RunConfig::default()).unwrap();
        assert_eq!(out.report.status, BranchStatus::MinimumFound, "{}", out.report.render());
        let cert = out.certificate.unwrap();
        assert!(cert.generators.is_empty());
    }

    #[test]
    fn max_order_below_the_starting_order_is_rejected() {
        let p = parse("vars x y\nminimize x^4*y^2 + x^2*y^4\n");
        let cfg = RunConfig {
            max_order: Some(1),
            ..RunConfig::default()
        };
        match minimize(&p, &cfg) {
            Err(DriverError::Config(msg)) => assert!(msg.contains("starting order")),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn known_minimum_strategy_needs_the_value() {
        let p = parse("vars x\nminimize x^2\n");
        let cfg = RunConfig {
            strategy: Strategy::KnownMinimum,
            ..RunConfig::default()
        };
        match minimize(&p, &cfg) {
            Err(DriverError::Config(msg)) => assert!(msg.contains("known-minimum")),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            Strategy::Auto,
            Strategy::Gradient,
            Strategy::KktElim,
            Strategy::FjMinors,
            Strategy::FjGram,
            Strategy::Direct,
            Strategy::KnownMinimum,
            Strategy::RealRadical,
        ] {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert!("fancy".parse::<Strategy>().is_err());
    }
}
