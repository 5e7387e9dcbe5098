//! Ordered residual kernel (ORK) affinities.
//!
//! Each point keeps the indices of its `h` smallest finite residuals as a
//! binary inlier set; the affinity of two points is the size of the overlap,
//! divided by the number of frames in which both are visible.

use std::io::{Read, Write};

use faer::Mat;
use rayon::prelude::*;
use thiserror::Error;

use crate::binio::{self, BinError, KERNEL_MAGIC};
use crate::geometry::ModelKind;
use crate::hypgen::ResidualMatrix;
use crate::stats::quantile_type7;
use crate::trajdata::TrackSet;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("residual matrix has {0} points but the track set has {1}")]
    SizeMismatch(usize, usize),
    #[error("h_frac must lie in (0, 1], got {0}")]
    BadHFrac(f64),
    #[error("eps_quantile must lie in [0, 1), got {0}")]
    BadQuantile(f64),
    #[error("kernel is not square, symmetric and non-negative: {0}")]
    Invalid(String),
    #[error("kernel file: {0}")]
    Bin(#[from] BinError),
}

/// Symmetric non-negative N×N affinity matrix with cached row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityKernel {
    kind: Option<ModelKind>,
    matrix: Mat<f64>,
    degree: Vec<f64>,
}

impl AffinityKernel {
    /// Validates and wraps a dense matrix. Symmetry must be exact.
    pub fn from_matrix(kind: Option<ModelKind>, matrix: Mat<f64>) -> Result<Self, KernelError> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(KernelError::Invalid(format!("{}x{} matrix", n, matrix.ncols())));
        }
        for j in 0..n {
            for i in 0..n {
                let v = matrix[(i, j)];
                if !(v.is_finite() && v >= 0.0) {
                    return Err(KernelError::Invalid(format!("entry ({i}, {j}) = {v}")));
                }
                if v != matrix[(j, i)] {
                    return Err(KernelError::Invalid(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self::from_matrix_unchecked(kind, matrix))
    }

    fn from_matrix_unchecked(kind: Option<ModelKind>, matrix: Mat<f64>) -> Self {
        let n = matrix.nrows();
        let degree = (0..n).map(|i| (0..n).map(|j| matrix[(i, j)]).sum()).collect();
        AffinityKernel { kind, matrix, degree }
    }

    pub fn kind(&self) -> Option<ModelKind> {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Row sums, diagonal included.
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm_l2()
    }

    /// Element-wise sum of kernels over the same points.
    pub fn sum(kernels: &[AffinityKernel]) -> Result<AffinityKernel, KernelError> {
        let first = kernels
            .first()
            .ok_or_else(|| KernelError::Invalid("no kernels to add".into()))?;
        let n = first.len();
        let mut acc = Mat::<f64>::zeros(n, n);
        for k in kernels {
            if k.len() != n {
                return Err(KernelError::SizeMismatch(k.len(), n));
            }
            acc += &k.matrix;
        }
        let kind = if kernels.iter().all(|k| k.kind == first.kind) { first.kind } else { None };
        Ok(Self::from_matrix_unchecked(kind, acc))
    }

    /// Conjugate permutation: entry (i, j) of the result is entry
    /// (perm[i], perm[j]) of `self`.
    pub fn permuted(&self, perm: &[usize]) -> AffinityKernel {
        let n = self.len();
        let m = Mat::from_fn(n, n, |i, j| self.matrix[(perm[i], perm[j])]);
        Self::from_matrix_unchecked(self.kind, m)
    }

    /// Writes `RSKN`, kind, N, then row-major values.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), KernelError> {
        let n = self.len();
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(self.matrix[(i, j)]);
            }
        }
        binio::write_matrix(w, KERNEL_MAGIC, self.kind, &[n as u64], &values)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<AffinityKernel, KernelError> {
        let raw = binio::read_matrix(r, KERNEL_MAGIC, 1)?;
        let n = raw.dims[0] as usize;
        let m = Mat::from_fn(n, n, |i, j| raw.values[i * n + j]);
        AffinityKernel::from_matrix(raw.kind, m)
    }
}

/// Output of [`build_ork_kernel`].
#[derive(Debug, Clone)]
pub struct OrkOutput {
    pub kernel: AffinityKernel,
    /// Inlier-set size `h_i` per point (0 for points with no finite residual).
    pub set_sizes: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Number of inliers kept from `finite` residuals.
pub fn top_h(h_frac: f64, finite: usize) -> usize {
    let raw = (h_frac * finite as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(finite)
}

/// Indices of the `h` smallest finite residuals of a row; ties broken by index.
pub fn inlier_set(row: &[f64], h_frac: f64) -> Vec<usize> {
    let mut finite: Vec<(f64, usize)> = row
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(k, v)| (*v, k))
        .collect();
    if finite.is_empty() {
        return Vec::new();
    }
    let h = top_h(h_frac, finite.len());
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if h < finite.len() {
        finite.select_nth_unstable_by(h - 1, cmp);
        finite.truncate(h);
    }
    let mut idx: Vec<usize> = finite.into_iter().map(|(_, k)| k).collect();
    idx.sort_unstable();
    idx
}

/// Builds the co-visibility-normalized ORK kernel with zero diagonal.
pub fn build_ork_kernel(rm: &ResidualMatrix, ts: &TrackSet, h_frac: f64) -> Result<OrkOutput, KernelError> {
    if !(h_frac > 0.0 && h_frac <= 1.0) {
        return Err(KernelError::BadHFrac(h_frac));
    }
    let n = ts.num_points();
    if rm.num_points() != n {
        return Err(KernelError::SizeMismatch(rm.num_points(), n));
    }
    let words = rm.num_hypotheses().div_ceil(64);
    let sets: Vec<(usize, Vec<u64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let members = inlier_set(rm.row(i), h_frac);
            let mut bits = vec![0u64; words];
            for k in &members {
                bits[k / 64] |= 1 << (k % 64);
            }
            (members.len(), bits)
        })
        .collect();

    let mut warnings = Vec::new();
    for (i, (h, _)) in sets.iter().enumerate() {
        if *h == 0 {
            warnings.push(format!("point {i} has no finite residual, its affinities are zero"));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (_, bi) = &sets[i];
            (i + 1..n)
                .map(|j| {
                    let covis = ts.covisible_frames(i, j);
                    if covis == 0 {
                        return 0.0;
                    }
                    let shared: u32 = bi.iter().zip(&sets[j].1).map(|(a, b)| (a & b).count_ones()).sum();
                    f64::from(shared) / covis as f64
                })
                .collect()
        })
        .collect();

    let mut m = Mat::<f64>::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, v) in row.iter().enumerate() {
            let j = i + 1 + off;
            m[(i, j)] = *v;
            m[(j, i)] = *v;
        }
    }
    Ok(OrkOutput {
        kernel: AffinityKernel::from_matrix_unchecked(Some(rm.kind()), m),
        set_sizes: sets.iter().map(|(h, _)| *h).collect(),
        warnings,
    })
}

/// Zeroes off-diagonal entries strictly below the `eps_quantile` quantile of
/// the positive off-diagonal entries (upper triangle, type-7).
pub fn sparsify(kern: &AffinityKernel, eps_quantile: f64) -> Result<AffinityKernel, KernelError> {
    if !(0.0..1.0).contains(&eps_quantile) {
        return Err(KernelError::BadQuantile(eps_quantile));
    }
    let n = kern.len();
    let mut positive: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| kern.matrix[(i, j)])
        .filter(|v| *v > 0.0)
        .collect();
    if positive.is_empty() {
        log::warn!("sparsify: kernel has no positive off-diagonal entry, returned unchanged");
        return Ok(kern.clone());
    }
    positive.sort_by(f64::total_cmp);
    let threshold = quantile_type7(&positive, eps_quantile);
    let mut m = kern.matrix.clone();
    for i in 0..n {
        for j in i + 1..n {
            if m[(i, j)] < threshold {
                m[(i, j)] = 0.0;
                m[(j, i)] = 0.0;
            }
        }
    }
    Ok(AffinityKernel::from_matrix_unchecked(kern.kind, m))
}
