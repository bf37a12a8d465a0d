//! Dense kernels on column-major buffers. The Gram product FᵀF dominates
//! solver run time (it forms the Schur matrix of the Newton system), so it
//! exists in a sequential and a thread-parallel variant. Both call the same
//! per-pair dot product in the same order, so results are bitwise identical
//! whichever variant runs and however many threads are available.

/// Fixed-order four-lane dot product. The lane split is part of the numeric
/// contract: gram_seq and gram_par must agree bit for bit.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut rest = 0.0;
    for i in (4 * chunks)..a.len() {
        rest += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest
}

/// Gram matrix G = FᵀF of a column-major rows×cols buffer, returned
/// column-major cols×cols (symmetric, both halves filled).
pub fn gram_seq(f: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    assert_eq!(f.len(), rows * cols);
    let mut g = vec![0.0; cols * cols];
    for j in 0..cols {
        let fj = &f[j * rows..(j + 1) * rows];
        for i in 0..=j {
            let v = dot(&f[i * rows..(i + 1) * rows], fj);
            g[j * cols + i] = v;
            g[i * cols + j] = v;
        }
    }
    g
}

/// Parallel Gram matrix, split over output columns. Each entry is produced
/// by the same `dot` as gram_seq, so the result is identical.
#[cfg(feature = "parallel")]
pub fn gram_par(f: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    use rayon::prelude::*;
    assert_eq!(f.len(), rows * cols);
    let columns: Vec<Vec<f64>> = (0..cols)
        .into_par_iter()
        .map(|j| {
            let fj = &f[j * rows..(j + 1) * rows];
            (0..=j)
                .map(|i| dot(&f[i * rows..(i + 1) * rows], fj))
                .collect()
        })
        .collect();
    let mut g = vec![0.0; cols * cols];
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            g[j * cols + i] = v;
            g[i * cols + j] = v;
        }
    }
    g
}

/// Without the parallel feature the "parallel" entry point is the
/// sequential kernel, so callers and benches link either way.
#[cfg(not(feature = "parallel"))]
pub fn gram_par(f: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    gram_seq(f, rows, cols)
}

/// Feature-dispatched default used by the solver.
pub fn gram(f: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        gram_par(f, rows, cols)
    }
    #[cfg(not(feature = "parallel"))]
    {
        gram_seq(f, rows, cols)
    }
}
