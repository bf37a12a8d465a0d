//! Global polynomial optimization over basic closed semi-algebraic sets.
//!
//! Given a polynomial objective `f` and constraints `g⁰ = 0`, `g⁺ ≥ 0`, this
//! crate computes the infimum of `f` over the feasible set, certifies finite
//! convergence of the moment relaxation hierarchy by a flat-extension (rank
//! stabilization) test, and recovers the generators of the minimizer ideal
//! together with the minimizer points when there are finitely many.
//!
//! The pipeline:
//!
//! 1. **Symbolic preprocessing** ([`constraints`]): the critical-point
//!    structure of the problem is encoded as a new constraint set, either
//!    through the KKT ideal (multiplier elimination via Groebner bases,
//!    [`groebner`]) or through Fritz-John Jacobian minor systems that avoid
//!    multipliers entirely. Singular loci of the constraints are handled by a
//!    recursive branch.
//! 2. **Moment relaxation** ([`moment`]): for increasing orders `t`, a
//!    semidefinite program over the truncated moment cone is assembled, with
//!    one localizing block per square-free product of the inequalities.
//! 3. **SDP solve** ([`sdp`]): a self-contained primal-dual interior-point
//!    solver on the homogeneous self-dual embedding, so infeasible
//!    relaxations are detected rather than guessed at.
//! 4. **Certification** ([`certify`]): numerical rank profile of the optimal
//!    moment matrix, flat-extension verdict, kernel-basis polynomials reduced
//!    to ideal generators, and point extraction via multiplication-operator
//!    eigenvalues, all cross-verified against the original problem.
//!
//! Exact rational arithmetic is used for every symbolic step; floating point
//! enters only when the SDP is assembled. See [`driver`] for the outer loop
//! and the problem-file front end.

pub mod certify;
pub mod constraints;
pub mod driver;
pub mod groebner;
pub mod moment;
pub mod poly;
pub mod report;
pub mod sdp;
pub mod sdpa;

pub use constraints::{ConstraintSet, ProblemInstance, Provenance};
pub use driver::{minimize, parse_problem, real_radical_mode, RunConfig, RunOutcome, Strategy};
pub use poly::{FPoly, MonomialOrder, Poly, QPoly, VarSpace};
pub use report::{BranchStatus, RunReport};
