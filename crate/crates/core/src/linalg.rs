//! Dense symmetric eigensolver wrapper and a few matrix helpers on `faer::Mat`.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::{Mat, MatRef, Par};

/// Eigen-decomposition of a symmetric matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns. Only the lower triangle is read.
pub fn symmetric_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>), String> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigensolver needs a square matrix");
    if a.col_iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(format!("{n}x{n} matrix has non-finite entries"));
    }
    let mut u = Mat::<f64>::zeros(n, n);
    let mut s = faer::diag::Diag::<f64>::zeros(n);
    let par = Par::Seq;
    let mut mem = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
        n,
        ComputeEigenvectors::Yes,
        par,
        Default::default(),
    ));
    evd::self_adjoint_evd(
        a,
        s.as_mut(),
        Some(u.as_mut()),
        par,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|e| format!("eigendecomposition of {n}x{n} matrix failed: {e:?}"))?;
    let values = (0..n).map(|i| s[i]).collect();
    Ok((values, u))
}

/// Ascending eigenvalues only.
pub fn symmetric_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>, String> {
    let n = a.nrows();
    let mut s = faer::diag::Diag::<f64>::zeros(n);
    let par = Par::Seq;
    let mut mem = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
        n,
        ComputeEigenvectors::No,
        par,
        Default::default(),
    ));
    evd::self_adjoint_evd(a, s.as_mut(), None, par, MemStack::new(&mut mem), Default::default())
        .map_err(|e| format!("eigendecomposition of {n}x{n} matrix failed: {e:?}"))?;
    Ok((0..n).map(|i| s[i]).collect())
}

/// Flips each column so its largest-magnitude entry is positive (first index
/// wins ties).
pub fn fix_column_signs(u: &mut Mat<f64>) {
    for j in 0..u.ncols() {
        let mut best = 0;
        for i in 1..u.nrows() {
            if u[(i, j)].abs() > u[(best, j)].abs() {
                best = i;
            }
        }
        if u[(best, j)] < 0.0 {
            for i in 0..u.nrows() {
                u[(i, j)] = -u[(i, j)];
            }
        }
    }
}

/// Copies the upper triangle onto the lower one.
pub fn symmetrize_from_upper(a: &mut Mat<f64>) {
    for j in 0..a.ncols() {
        for i in j + 1..a.nrows() {
            a[(i, j)] = a[(j, i)];
        }
    }
}

/// tr(AᵀB) for equally shaped matrices.
pub fn frobenius_inner(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)] * b[(i, j)];
        }
    }
    acc
}

/// Largest absolute entry of UᵀU − I.
pub fn orthonormality_defect(u: MatRef<'_, f64>) -> f64 {
    let g = u.transpose() * u;
    let mut worst = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}
