//! Sparse SDPA text format (".dat-s") reader and writer.
//!
//! The file encodes min cᵀx subject to X = Σ x_i F_i − F_0 ⪰ 0 over block
//! diagonal X: header lines give the variable count, the block count and the
//! block sizes (negative size = diagonal block), then the objective row,
//! then one "matno blkno i j value" quintuple per stored entry with 1-based
//! upper-triangular indices.
//!
//! Our problems carry equality rows and the format has none, so the writer
//! eliminates them first: with the rows in reduced echelon form, the
//! feasible set {y : Ay = b} is y_p + V z over the free columns, and the
//! exported problem optimizes (Vᵀc)ᵀz with the constant cᵀy_p folded into
//! the objective offset. The offset travels in a comment line so a
//! round-trip through the file preserves optimal values, not just optimal
//! points.

use crate::sdp::{SdpBlock, SdpProblem};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpaError {
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("malformed SDPA input: {0}")]
    Parse(String),
    #[error("equality rows are not in reduced echelon form")]
    NotReduced,
}

/// Marker prefix for the objective-offset comment emitted by the writer.
const OFFSET_TAG: &str = "objective offset";

struct Tokens {
    tokens: Vec<String>,
    pos: usize,
}

impl Tokens {
    fn next<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, SdpaError> {
        let t = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| SdpaError::Parse(format!("unexpected end of file reading {what}")))?;
        self.pos += 1;
        t.parse()
            .map_err(|_| SdpaError::Parse(format!("bad {what}: {t}")))
    }

    fn done(&self) -> bool {
        self.pos >= self.tokens.len()
    }
}

/// Write `p` in sparse SDPA format, eliminating equality rows through the
/// nullspace parametrization. Requires `p.eq` in reduced echelon form with
/// unit pivots, which is how the assembly pipeline produces it.
pub fn write_sdpa<W: Write>(p: &SdpProblem, mut out: W) -> Result<(), SdpaError> {
    let nv = p.nvars;
    let rows = p.eq.nrows();

    // pivot column of each row = first nonzero, which must be a unit
    let mut pivots = Vec::with_capacity(rows);
    for r in 0..rows {
        let Some(j) = (0..nv).find(|&j| p.eq[(r, j)] != 0.0) else {
            return Err(SdpaError::NotReduced);
        };
        if (p.eq[(r, j)] - 1.0).abs() > 1e-12 || pivots.contains(&j) {
            return Err(SdpaError::NotReduced);
        }
        pivots.push(j);
    }
    let free: Vec<usize> = (0..nv).filter(|j| !pivots.contains(j)).collect();

    // particular solution: pivot vars take the row rhs, free vars zero
    let mut y_p = vec![0.0f64; nv];
    for (r, &pj) in pivots.iter().enumerate() {
        y_p[pj] = p.rhs[r];
    }
    // nullspace direction for free column f: v[f] = 1, v[pivot_r] = −A[r][f]
    let direction = |f: usize| {
        let mut v = vec![0.0f64; nv];
        v[f] = 1.0;
        for (r, &pj) in pivots.iter().enumerate() {
            v[pj] = -p.eq[(r, f)];
        }
        v
    };

    let mdim = free.len();
    let mut c_red = Vec::with_capacity(mdim);
    for &f in &free {
        let v = direction(f);
        c_red.push(v.iter().zip(&p.obj).map(|(a, b)| a * b).sum::<f64>());
    }
    let offset = p.obj_offset + y_p.iter().zip(&p.obj).map(|(a, b)| a * b).sum::<f64>();

    writeln!(out, "\" {OFFSET_TAG} {offset:e}")?;
    writeln!(out, "{mdim}")?;
    writeln!(out, "{}", p.blocks.len())?;
    let sizes: Vec<String> = p.blocks.iter().map(|b| b.size.to_string()).collect();
    writeln!(out, "{}", sizes.join(" "))?;
    let crow: Vec<String> = c_red.iter().map(|v| format!("{v:e}")).collect();
    writeln!(out, "{}", crow.join(" "))?;

    let mut emit = |matno: usize, blkno: usize, m: &DMatrix<f64>| -> Result<(), SdpaError> {
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    writeln!(out, "{matno} {blkno} {} {} {v:e}", i + 1, j + 1)?;
                }
            }
        }
        Ok(())
    };

    for (bi, blk) in p.blocks.iter().enumerate() {
        let f0 = -(&blk.c0 + blk.combine(&y_p));
        emit(0, bi + 1, &f0)?;
    }
    for (k, &f) in free.iter().enumerate() {
        let v = direction(f);
        for (bi, blk) in p.blocks.iter().enumerate() {
            emit(k + 1, bi + 1, &blk.combine(&v))?;
        }
    }
    Ok(())
}

/// Read a sparse SDPA file into an equality-free problem. Negative block
/// sizes expand into dense blocks whose off-diagonal entries stay zero,
/// which keeps the downstream solver oblivious to the distinction.
pub fn read_sdpa<R: BufRead>(inp: R) -> Result<SdpProblem, SdpaError> {
    let mut offset = 0.0f64;
    let mut tokens: Vec<String> = Vec::new();
    for line in inp.lines() {
        let line = line?;
        let trimmed = line.trim_start();
        if trimmed.starts_with('"') || trimmed.starts_with('*') {
            let body = trimmed.trim_start_matches(['"', '*']).trim();
            if let Some(rest) = body.strip_prefix(OFFSET_TAG) {
                offset = rest
                    .trim()
                    .parse()
                    .map_err(|_| SdpaError::Parse(format!("bad offset comment: {line}")))?;
            }
            continue;
        }
        // block-structure lines in the wild use {, }, ( ) and commas
        tokens.extend(
            line.split(|ch: char| ch.is_whitespace() || matches!(ch, '{' | '}' | '(' | ')' | ','))
                .filter(|t| !t.is_empty())
                .map(str::to_string),
        );
    }
    let mut cur = Tokens { tokens, pos: 0 };

    let mdim: usize = cur.next("variable count")?;
    let nblocks: usize = cur.next("block count")?;
    let mut sizes = Vec::with_capacity(nblocks);
    let mut diagonal = Vec::with_capacity(nblocks);
    for _ in 0..nblocks {
        let s: i64 = cur.next("block size")?;
        if s == 0 {
            return Err(SdpaError::Parse("zero block size".into()));
        }
        sizes.push(s.unsigned_abs() as usize);
        diagonal.push(s < 0);
    }
    let mut obj = Vec::with_capacity(mdim);
    for _ in 0..mdim {
        obj.push(cur.next::<f64>("objective entry")?);
    }

    let mut c0: Vec<DMatrix<f64>> = sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
    let mut per_var: Vec<BTreeMap<usize, Vec<(usize, usize, f64)>>> =
        vec![BTreeMap::new(); nblocks];
    while !cur.done() {
        let matno: usize = cur.next("matrix number")?;
        let blkno: usize = cur.next("block number")?;
        let i: usize = cur.next("row index")?;
        let j: usize = cur.next("column index")?;
        let v: f64 = cur.next("entry value")?;
        if matno > mdim {
            return Err(SdpaError::Parse(format!("matrix number {matno} > {mdim}")));
        }
        if blkno == 0 || blkno > nblocks {
            return Err(SdpaError::Parse(format!("block number {blkno} out of range")));
        }
        let b = blkno - 1;
        let s = sizes[b];
        if i == 0 || j == 0 || i > s || j > s {
            return Err(SdpaError::Parse(format!(
                "entry ({i},{j}) outside block {blkno} of size {s}"
            )));
        }
        if diagonal[b] && i != j {
            return Err(SdpaError::Parse(format!(
                "off-diagonal entry ({i},{j}) in diagonal block {blkno}"
            )));
        }
        let (lo, hi) = (i.min(j) - 1, i.max(j) - 1);
        if matno == 0 {
            // X = Σ x_i F_i − F_0 against our X = C0 + Σ y_v A_v
            c0[b][(lo, hi)] = -v;
            c0[b][(hi, lo)] = -v;
        } else {
            per_var[b].entry(matno - 1).or_default().push((lo, hi, v));
        }
    }

    let blocks = (0..nblocks)
        .map(|b| {
            let mut var_index = Vec::new();
            let mut coeffs = Vec::new();
            for (v, entries) in std::mem::take(&mut per_var[b]) {
                var_index.push(v);
                coeffs.push(entries);
            }
            SdpBlock {
                size: sizes[b],
                c0: std::mem::replace(&mut c0[b], DMatrix::zeros(0, 0)),
                var_index,
                coeffs,
            }
        })
        .collect();

    Ok(SdpProblem {
        nvars: mdim,
        obj,
        obj_offset: offset,
        eq: DMatrix::zeros(0, mdim),
        rhs: DVector::zeros(0),
        blocks,
    })
}
