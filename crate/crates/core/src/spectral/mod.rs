//! Spectral clustering on ORK affinities: normalized Laplacians, spectral
//! embeddings, k-means on embedding rows, and the multi-model fusion schemes.

mod fusion;
mod kmeans;

pub use fusion::{
    coreg_cost, coreg_embeddings, concat_embeddings, fuse_coreg, fuse_kernel_addition, fuse_subset,
    single_model, subset_constraint, subset_embeddings, AlternatingResult, ClusterOptions, IterOptions,
    IterativeFusion, cluster_with, Fusion, FusionOutcome, FusionParams,
};
pub use kmeans::{cluster_kmeans, count_distinct_rows, kmeans_run, normalize_rows, KMeansRun};

use faer::Mat;
use thiserror::Error;

use crate::geometry::ModelKind;
use crate::linalg::{fix_column_signs, symmetric_eigen};
use crate::ork::AffinityKernel;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("embedding dimension {m} outside [1, {n}]")]
    BadDimension { m: usize, n: usize },
    #[error("eigensolver failure: {0}")]
    Eigen(String),
    #[error("kernels disagree on size ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("{scheme} needs {needed} kernels, got {got}")]
    KernelCount {
        scheme: &'static str,
        needed: &'static str,
        got: usize,
    },
    #[error("cannot form {m} clusters from {distinct} distinct embedding rows")]
    TooFewDistinctRows { m: usize, distinct: usize },
    #[error("invalid assignment: {0}")]
    BadAssignment(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

/// Cluster labels in `1..=M` for N points.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    labels: Vec<usize>,
    num_clusters: usize,
}

impl Assignment {
    pub fn new(labels: Vec<usize>, num_clusters: usize) -> Result<Self, SpectralError> {
        if num_clusters == 0 {
            return Err(SpectralError::BadAssignment("zero clusters".into()));
        }
        if let Some(bad) = labels.iter().find(|l| **l == 0 || **l > num_clusters) {
            return Err(SpectralError::BadAssignment(format!("label {bad} outside [1, {num_clusters}]")));
        }
        Ok(Assignment { labels, num_clusters })
    }

    /// Relabels arbitrary ids to `1..=M` in order of first appearance.
    pub fn from_raw_labels<T: Ord + Copy>(raw: &[T]) -> Self {
        let mut seen: Vec<T> = Vec::new();
        let labels = raw
            .iter()
            .map(|l| match seen.iter().position(|s| s == l) {
                Some(p) => p + 1,
                None => {
                    seen.push(*l);
                    seen.len()
                }
            })
            .collect();
        Assignment {
            labels,
            num_clusters: seen.len().max(1),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    /// |A_m| for m = 1..=M.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for l in &self.labels {
            sizes[l - 1] += 1;
        }
        sizes
    }

    /// Binary N×M indicator matrix X.
    pub fn indicator(&self) -> Mat<f64> {
        let mut x = Mat::zeros(self.labels.len(), self.num_clusters);
        for (i, l) in self.labels.iter().enumerate() {
            x[(i, l - 1)] = 1.0;
        }
        x
    }

    /// Partition equality up to relabeling.
    pub fn same_partition(&self, other: &Assignment) -> bool {
        self.len() == other.len()
            && Assignment::from_raw_labels(&self.labels).labels == Assignment::from_raw_labels(&other.labels).labels
    }
}

/// Normalized Laplacian I − D^{-1/2} K D^{-1/2}, diagonal affinities ignored.
/// Isolated points (zero degree) get an identity row and column.
#[derive(Debug, Clone)]
pub struct Laplacian {
    pub kind: Option<ModelKind>,
    pub matrix: Mat<f64>,
}

pub fn laplacian(kern: &AffinityKernel) -> Laplacian {
    let n = kern.len();
    let k = kern.matrix();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = (0..n).filter(|&j| j != i).map(|j| k[(i, j)]).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut l = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            l[(i, j)] = if i == j { 1.0 } else { -k[(i, j)] * inv_sqrt[i] * inv_sqrt[j] };
        }
    }
    Laplacian {
        kind: kern.kind(),
        matrix: l,
    }
}

/// Full ascending spectrum of a Laplacian, reusable across embedding sizes.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub kind: Option<ModelKind>,
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

impl Spectrum {
    pub fn of(lap: &Laplacian) -> Result<Self, SpectralError> {
        let (values, vectors) = symmetric_eigen(lap.matrix.as_ref()).map_err(SpectralError::Eigen)?;
        Ok(Spectrum {
            kind: lap.kind,
            values,
            vectors,
        })
    }

    /// Eigenvectors of the `m` smallest eigenvalues, sign-fixed.
    pub fn embedding(&self, m: usize) -> Result<SpectralEmbedding, SpectralError> {
        let n = self.values.len();
        if m == 0 || m > n {
            return Err(SpectralError::BadDimension { m, n });
        }
        let mut u = self.vectors.subcols(0, m).to_owned();
        fix_column_signs(&mut u);
        Ok(SpectralEmbedding {
            kind: self.kind,
            u,
            eigenvalues: self.values[..m].to_vec(),
        })
    }
}

/// N×M embedding with orthonormal columns.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    pub kind: Option<ModelKind>,
    pub u: Mat<f64>,
    pub eigenvalues: Vec<f64>,
}

impl SpectralEmbedding {
    pub fn dim(&self) -> usize {
        self.u.ncols()
    }

    /// Writes `RSEM`, kind, N, M, row-major values.
    pub fn write_to<W: std::io::Write>(&self, w: &mut W) -> Result<(), crate::binio::BinError> {
        let (n, m) = (self.u.nrows(), self.u.ncols());
        let values: Vec<f64> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| self.u[(i, j)]).collect();
        crate::binio::write_matrix(w, crate::binio::EMBEDDING_MAGIC, self.kind, &[n as u64, m as u64], &values)
    }
}

/// Smallest-M eigenvectors of the Laplacian.
pub fn embed(lap: &Laplacian, m: usize) -> Result<SpectralEmbedding, SpectralError> {
    let n = lap.matrix.nrows();
    if m == 0 || m > n {
        return Err(SpectralError::BadDimension { m, n });
    }
    Spectrum::of(lap)?.embedding(m)
}

/// tr(UᵀAU).
pub fn trace_quadratic(a: &Mat<f64>, u: &Mat<f64>) -> f64 {
    let au = a * u;
    crate::linalg::frobenius_inner(u.as_ref(), au.as_ref())
}
