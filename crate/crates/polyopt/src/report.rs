//! Structured run reports with a plain-text rendering. Timing values live
//! in dedicated fields so that determinism checks can zero them out and
//! compare the rest bit for bit.

use crate::certify::FlatVerdict;
use serde::Serialize;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchStatus {
    MinimumFound,
    InfeasibleNoKktMinimizer,
    OrderExhausted,
    BudgetExhausted,
}

impl BranchStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            BranchStatus::MinimumFound => "minimum-found",
            BranchStatus::InfeasibleNoKktMinimizer => "infeasible-no-kkt-minimizer",
            BranchStatus::OrderExhausted => "order-exhausted",
            BranchStatus::BudgetExhausted => "budget-exhausted",
        }
    }
}

impl std::fmt::Display for BranchStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One solved relaxation order inside a branch.
#[derive(Debug, Clone, Serialize)]
pub struct OrderLog {
    pub order: usize,
    pub block_sizes: Vec<usize>,
    pub equality_rows: usize,
    pub status: String,
    pub primal_value: Option<f64>,
    pub dual_value: Option<f64>,
    pub iterations: usize,
    pub rel_gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Rank of M^t' for t' = 0..=t; empty when no usable form came back.
    pub rank_profile: Vec<usize>,
    pub flat: Option<FlatVerdict>,
    pub note: Option<String>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointReport {
    pub coords: Vec<f64>,
    pub multiplicity: usize,
    pub objective_gap: f64,
    pub equality_residual: f64,
    pub min_inequality: Option<f64>,
    pub generator_residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchReport {
    /// Position in the branch tree, e.g. "kkt" or "singular/kkt".
    pub label: String,
    /// Constraint construction that fed the hierarchy.
    pub strategy: String,
    pub status: BranchStatus,
    pub optimum: Option<f64>,
    pub dual_bound: Option<f64>,
    /// Order whose certificate is reported.
    pub certificate_order: Option<usize>,
    /// True when success came from kernel-ideal stabilization rather than a
    /// flat extension.
    pub stabilized: bool,
    pub generators: Vec<String>,
    pub points: Vec<PointReport>,
    pub orders: Vec<OrderLog>,
    pub note: Option<String>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub status: BranchStatus,
    pub strategy: String,
    pub optimum: Option<f64>,
    pub generators: Vec<String>,
    pub points: Vec<PointReport>,
    pub branches: Vec<BranchReport>,
    pub warnings: Vec<String>,
    pub note: Option<String>,
    pub seed: u64,
    pub total_ms: u64,
}

impl RunReport {
    /// Copy with every timing field zeroed, for run-to-run comparisons.
    pub fn normalized(&self) -> RunReport {
        let mut out = self.clone();
        out.total_ms = 0;
        for b in &mut out.branches {
            b.elapsed_ms = 0;
            for o in &mut b.orders {
                o.elapsed_ms = 0;
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable rendering of the full branch tree.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "status: {}", self.status);
        let _ = writeln!(s, "strategy: {}", self.strategy);
        match self.optimum {
            Some(v) => {
                let _ = writeln!(s, "optimum: {v}");
            }
            None => {
                let _ = writeln!(s, "optimum: none");
            }
        }
        if let Some(note) = &self.note {
            let _ = writeln!(s, "note: {note}");
        }
        if !self.generators.is_empty() {
            let _ = writeln!(s, "generators:");
            for g in &self.generators {
                let _ = writeln!(s, "  {g}");
            }
        }
        if !self.points.is_empty() {
            let _ = writeln!(s, "points:");
            for p in &self.points {
                let coords = p
                    .coords
                    .iter()
                    .map(|c| format!("{c:.9}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                let _ = writeln!(
                    s,
                    "  ({coords})  multiplicity {}  residuals: objective {:.2e}, constraints {:.2e}, generators {:.2e}{}",
                    p.multiplicity,
                    p.objective_gap,
                    p.equality_residual,
                    p.generator_residual,
                    if p.pass { "" } else { "  FAILED" }
                );
            }
        }
        for b in &self.branches {
            let _ = writeln!(
                s,
                "branch {} [{}]: {}{}",
                b.label,
                b.strategy,
                b.status,
                match b.optimum {
                    Some(v) => format!(", optimum {v}"),
                    None => String::new(),
                }
            );
            if let Some(note) = &b.note {
                let _ = writeln!(s, "  note: {note}");
            }
            for o in &b.orders {
                let sizes = o
                    .block_sizes
                    .iter()
                    .map(|z| z.to_string())
                    .collect::<Vec<_>>()
                    .join("x");
                let _ = write!(
                    s,
                    "  order {}: {}  blocks [{sizes}]  rows {}  iters {}",
                    o.order, o.status, o.equality_rows, o.iterations
                );
                if let Some(v) = o.primal_value {
                    let _ = write!(s, "  primal {v:.9}");
                }
                if let Some(v) = o.dual_value {
                    let _ = write!(s, "  dual {v:.9}");
                }
                if !o.rank_profile.is_empty() {
                    let _ = write!(s, "  ranks {:?}", o.rank_profile);
                }
                if let Some(fv) = &o.flat {
                    let _ = write!(
                        s,
                        "  flat {} (d={}, {} vs {})",
                        if fv.flat { "yes" } else { "no" },
                        fv.gap,
                        fv.rank_full,
                        fv.rank_sub
                    );
                }
                if let Some(n) = &o.note {
                    let _ = write!(s, "  [{n}]");
                }
                let _ = writeln!(s, "  ({} ms)", o.elapsed_ms);
            }
        }
        if !self.warnings.is_empty() {
            let _ = writeln!(s, "warnings:");
            for w in &self.warnings {
                let _ = writeln!(s, "  {w}");
            }
        }
        let _ = writeln!(s, "total: {} ms", self.total_ms);
        s
    }
}
