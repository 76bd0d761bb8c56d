//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! nalgebra ships a complex Schur decomposition but no eigenvectors for
//! non-Hermitian matrices, so they are recovered here by back-substitution on
//! the triangular factor (the same recurrence LAPACK's `*trevc` uses).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub(crate) type C64 = Complex64;

/// Diagonal similarity `D^{-1} m D` with power-of-two entries that roughly
/// equalizes row and column norms (Parlett-Reinsch, as in LAPACK's `*gebal`).
/// Returns the balanced matrix and the diagonal of `D`.
pub(crate) fn balance(m: &DMatrix<C64>) -> (DMatrix<C64>, Vec<f64>) {
    const RADIX: f64 = 2.0;
    let n = m.nrows();
    let mut b = m.clone();
    let mut d = vec![1.0; n];
    for _ in 0..100 {
        let mut converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].norm();
                    r += b[(i, j)].norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let total = c + r;
            let mut f = 1.0;
            let (mut c2, mut r2) = (c, r);
            while c2 < r2 / RADIX {
                c2 *= RADIX;
                r2 /= RADIX;
                f *= RADIX;
            }
            while c2 >= r2 * RADIX {
                c2 /= RADIX;
                r2 *= RADIX;
                f /= RADIX;
            }
            if c2 + r2 < 0.95 * total {
                converged = false;
                d[i] *= f;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
    (b, d)
}

/// Eigenvalues and right eigenvectors (unit columns) of a square complex matrix.
pub(crate) fn eigen(m: &DMatrix<C64>) -> Option<(Vec<C64>, DMatrix<C64>)> {
    let n = m.nrows();
    if n == 0 {
        return Some((Vec::new(), DMatrix::zeros(0, 0)));
    }
    if n == 1 {
        return Some((
            vec![m[(0, 0)]],
            DMatrix::from_element(1, 1, C64::new(1.0, 0.0)),
        ));
    }
    let (m, d) = balance(m);
    let scale = m.norm();
    let schur = m.clone().try_schur(f64::EPSILON, 1000 * n)?;
    let (q, t) = schur.unpack();
    let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    if values
        .iter()
        .any(|v| !v.re.is_finite() || !v.im.is_finite())
    {
        return None;
    }

    let small = (f64::EPSILON * scale).max(f64::MIN_POSITIVE);
    let mut x = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let lambda = values[k];
        x[(k, k)] = C64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for l in (j + 1)..=k {
                acc += t[(j, l)] * x[(l, k)];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < small {
                denom = C64::new(small, 0.0);
            }
            x[(j, k)] = -acc / denom;
        }
        let norm = x.column(k).norm();
        if norm > 0.0 && norm.is_finite() {
            x.column_mut(k).unscale_mut(norm);
        }
    }
    let mut v = q * x;
    for (i, mut row) in v.row_iter_mut().enumerate() {
        row.scale_mut(d[i]);
    }
    for mut col in v.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 && norm.is_finite() {
            col.unscale_mut(norm);
        }
    }
    Some((values, v))
}

/// Modal (pole-residue) terms of `c (sI - a)^{-1} b`.
///
/// Returns `None` when the eigen-decomposition fails or the eigenvector
/// matrix cannot be inverted (defective `a`).
pub(crate) fn modal_terms(
    a: &DMatrix<C64>,
    b: &DVector<C64>,
    c: &DVector<C64>,
) -> Option<(Vec<C64>, Vec<C64>)> {
    let (values, v) = eigen(a)?;
    let w = v.clone().try_inverse()?;
    let wb = &w * b;
    let residues = (0..values.len())
        .map(|k| v.column(k).dot(c) * wb[k])
        .collect();
    Some((values, residues))
}

/// Numerical rank by multiplicative singular-value gaps.
///
/// `sv` must be sorted in descending order. A gap at position `k` is
/// `sv[k-1] / sv[k]`; only gaps whose upper value lies above `floor` count.
/// The rank is the position of the last gap exceeding `threshold`, so every
/// value that is both above the floor and separated from the tail is kept.
/// When no gap qualifies, the rank is the number of values above `floor`,
/// provided at least one value falls below it. Otherwise the rank is
/// ambiguous and `None` is returned.
pub(crate) fn rank_by_gap(sv: &[f64], threshold: f64, floor: f64) -> Option<usize> {
    let above = sv.iter().take_while(|&&s| s > floor).count();
    if above == 0 {
        return Some(0);
    }
    let mut last = None;
    for k in 1..=above.min(sv.len() - 1) {
        let ratio = sv[k - 1] / sv[k].max(f64::MIN_POSITIVE);
        if ratio > threshold {
            last = Some(k);
        }
    }
    match last {
        Some(k) => Some(k),
        None if above < sv.len() => Some(above),
        None => None,
    }
}

/// Singular values of a real matrix in descending order.
pub(crate) fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}
