//! Single-model clustering and the multi-model fusion schemes: kernel
//! addition, pairwise co-regularization and subset-constrained clustering.

use faer::Mat;

use super::{cluster_kmeans, laplacian, trace_quadratic, Assignment, Laplacian, SpectralError, Spectrum};
use crate::geometry::ModelKind;
use crate::linalg::{fix_column_signs, frobenius_inner, symmetric_eigen};
use crate::ork::AffinityKernel;

/// k-means settings shared by every scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterOptions {
    pub restarts: usize,
    pub seed: u64,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions { restarts: 20, seed: 0 }
    }
}

/// Stopping rule for the alternating schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterOptions {
    pub max_iters: usize,
    /// Relative cost change below which the loop stops.
    pub tol: f64,
}

impl Default for IterOptions {
    fn default() -> Self {
        IterOptions { max_iters: 50, tol: 1e-6 }
    }
}

/// Result of an alternating fusion run.
#[derive(Debug, Clone)]
pub struct IterativeFusion {
    pub assignment: Assignment,
    /// Per-view embeddings of the returned (lowest-cost) iterate.
    pub embeddings: Vec<Mat<f64>>,
    /// Cost after initialization, then after every sweep.
    pub cost_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Embeddings plus bookkeeping, before k-means.
#[derive(Debug, Clone)]
pub struct AlternatingResult {
    pub embeddings: Vec<Mat<f64>>,
    pub cost_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn check_sizes(kernels: &[AffinityKernel]) -> Result<usize, SpectralError> {
    let n = kernels.first().map_or(0, AffinityKernel::len);
    for k in kernels {
        if k.len() != n {
            return Err(SpectralError::SizeMismatch(k.len(), n));
        }
    }
    Ok(n)
}

fn check_m(m: usize, n: usize) -> Result<(), SpectralError> {
    if m == 0 || m > n {
        return Err(SpectralError::BadDimension { m, n });
    }
    Ok(())
}

/// Eigenvectors of the `m` smallest eigenvalues of a symmetric matrix, sign-fixed.
fn smallest_eigvecs(a: &Mat<f64>, m: usize) -> Result<Mat<f64>, SpectralError> {
    let (_, vecs) = symmetric_eigen(a.as_ref()).map_err(SpectralError::Eigen)?;
    let mut u = vecs.subcols(0, m).to_owned();
    fix_column_signs(&mut u);
    Ok(u)
}

/// Column-wise concatenation [U_1 | U_2 | ...].
pub fn concat_embeddings(us: &[Mat<f64>]) -> Mat<f64> {
    let n = us.first().map_or(0, Mat::nrows);
    let total: usize = us.iter().map(Mat::ncols).sum();
    let mut out = Mat::zeros(n, total);
    let mut off = 0;
    for u in us {
        for j in 0..u.ncols() {
            for i in 0..n {
                out[(i, off + j)] = u[(i, j)];
            }
        }
        off += u.ncols();
    }
    out
}

/// Laplacian, embedding and k-means on one kernel.
pub fn single_model(kern: &AffinityKernel, m: usize, opts: &ClusterOptions) -> Result<Assignment, SpectralError> {
    check_m(m, kern.len())?;
    let emb = Spectrum::of(&laplacian(kern))?.embedding(m)?;
    cluster_kmeans(emb.u.as_ref(), m, opts.restarts, opts.seed)
}

/// Sums the kernels and clusters the result as a single model.
pub fn fuse_kernel_addition(
    kernels: &[AffinityKernel],
    m: usize,
    opts: &ClusterOptions,
) -> Result<Assignment, SpectralError> {
    if kernels.is_empty() {
        return Err(SpectralError::KernelCount {
            scheme: "kernel addition",
            needed: "at least 1",
            got: 0,
        });
    }
    check_sizes(kernels)?;
    let fused = AffinityKernel::sum(kernels).map_err(|e| SpectralError::BadParameter(e.to_string()))?;
    single_model(&fused, m, opts)
}

/// Σ_v tr(U_vᵀL_vU_v) − λ Σ_{v<w} tr(U_vU_vᵀU_wU_wᵀ).
pub fn coreg_cost(laps: &[Laplacian], us: &[Mat<f64>], lambda: f64) -> f64 {
    let mut cost: f64 = laps.iter().zip(us).map(|(l, u)| trace_quadratic(&l.matrix, u)).sum();
    for v in 0..us.len() {
        for w in v + 1..us.len() {
            let c = us[v].transpose() * &us[w];
            cost -= lambda * frobenius_inner(c.as_ref(), c.as_ref());
        }
    }
    cost
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    (prev - cur).abs() / prev.abs().max(1e-9)
}

/// Alternating co-regularized embeddings, swept in view order.
pub fn coreg_embeddings(
    laps: &[Laplacian],
    m: usize,
    lambda: f64,
    iter: &IterOptions,
) -> Result<AlternatingResult, SpectralError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SpectralError::BadParameter(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let mut us = laps
        .iter()
        .map(|l| Spectrum::of(l)?.embedding(m).map(|e| e.u))
        .collect::<Result<Vec<_>, _>>()?;
    let mut trace = vec![coreg_cost(laps, &us, lambda)];
    let mut best = (trace[0], us.clone());
    let mut converged = false;
    let mut iterations = 0;
    while iterations < iter.max_iters {
        iterations += 1;
        for v in 0..laps.len() {
            let mut a = laps[v].matrix.clone();
            for (w, uw) in us.iter().enumerate() {
                if w != v {
                    a -= lambda * (uw * uw.transpose());
                }
            }
            us[v] = smallest_eigvecs(&a, m)?;
        }
        let cost = coreg_cost(laps, &us, lambda);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(cost);
        if cost < best.0 {
            best = (cost, us.clone());
        }
        if relative_change(prev, cost) < iter.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("co-regularization did not converge in {} sweeps", iter.max_iters);
    }
    Ok(AlternatingResult {
        embeddings: if converged { us } else { best.1 },
        cost_trace: trace,
        converged,
        iterations,
    })
}

/// Co-regularized multi-view clustering on two or more kernels.
pub fn fuse_coreg(
    kernels: &[AffinityKernel],
    m: usize,
    lambda: f64,
    iter: &IterOptions,
    opts: &ClusterOptions,
) -> Result<IterativeFusion, SpectralError> {
    if kernels.len() < 2 {
        return Err(SpectralError::KernelCount {
            scheme: "co-regularization",
            needed: "at least 2",
            got: kernels.len(),
        });
    }
    let n = check_sizes(kernels)?;
    check_m(m, n)?;
    let laps: Vec<Laplacian> = kernels.iter().map(laplacian).collect();
    let res = coreg_embeddings(&laps, m, lambda, iter)?;
    finish(res, m, opts)
}

fn finish(res: AlternatingResult, m: usize, opts: &ClusterOptions) -> Result<IterativeFusion, SpectralError> {
    let cat = concat_embeddings(&res.embeddings);
    let assignment = cluster_kmeans(cat.as_ref(), m, opts.restarts, opts.seed)?;
    Ok(IterativeFusion {
        assignment,
        embeddings: res.embeddings,
        cost_trace: res.cost_trace,
        converged: res.converged,
        iterations: res.iterations,
    })
}

fn positive_part(a: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].max(0.0))
}

fn negative_part(a: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].min(0.0))
}

/// Constraint matrix Q_v (v zero-based: affine, homography, fundamental)
/// built from the reconstructed affinities U_wU_wᵀ of the neighbouring views.
pub fn subset_constraint(v: usize, us: &[Mat<f64>]) -> Mat<f64> {
    let recon = |w: usize| &us[w] * us[w].transpose();
    match v {
        0 => negative_part(&recon(1)),
        1 => positive_part(&recon(0)) + negative_part(&recon(2)),
        2 => positive_part(&recon(1)),
        _ => panic!("subset constraint defined for three views, got view {v}"),
    }
}

fn subset_cost(laps: &[Laplacian], us: &[Mat<f64>], gamma: f64) -> f64 {
    (0..3)
        .map(|v| {
            let lt = &laps[v].matrix - gamma * subset_constraint(v, us);
            trace_quadratic(&lt, &us[v])
        })
        .sum()
}

/// Alternating subset-constrained embeddings for the views [A, H, F].
pub fn subset_embeddings(
    laps: &[Laplacian],
    m: usize,
    gamma: f64,
    iter: &IterOptions,
) -> Result<AlternatingResult, SpectralError> {
    if laps.len() != 3 {
        return Err(SpectralError::KernelCount {
            scheme: "subset",
            needed: "exactly 3",
            got: laps.len(),
        });
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(SpectralError::BadParameter(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    let mut us = laps
        .iter()
        .map(|l| Spectrum::of(l)?.embedding(m).map(|e| e.u))
        .collect::<Result<Vec<_>, _>>()?;
    let mut trace = vec![subset_cost(laps, &us, gamma)];
    let mut best = (trace[0], us.clone());
    let mut converged = false;
    let mut iterations = 0;
    while iterations < iter.max_iters {
        iterations += 1;
        for v in 0..3 {
            let lt = &laps[v].matrix - gamma * subset_constraint(v, &us);
            us[v] = smallest_eigvecs(&lt, m)?;
        }
        let cost = subset_cost(laps, &us, gamma);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(cost);
        if cost < best.0 {
            best = (cost, us.clone());
        }
        if relative_change(prev, cost) < iter.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("subset-constrained clustering did not converge in {} sweeps", iter.max_iters);
    }
    Ok(AlternatingResult {
        embeddings: if converged { us } else { best.1 },
        cost_trace: trace,
        converged,
        iterations,
    })
}

/// Subset-constrained multi-model clustering on kernels ordered [A, H, F].
pub fn fuse_subset(
    kernels: &[AffinityKernel],
    m: usize,
    gamma: f64,
    iter: &IterOptions,
    opts: &ClusterOptions,
) -> Result<IterativeFusion, SpectralError> {
    if kernels.len() != 3 {
        return Err(SpectralError::KernelCount {
            scheme: "subset",
            needed: "exactly 3",
            got: kernels.len(),
        });
    }
    let order = [ModelKind::Affine, ModelKind::Homography, ModelKind::Fundamental];
    for (k, want) in kernels.iter().zip(order) {
        if let Some(kind) = k.kind() {
            if kind != want {
                return Err(SpectralError::BadParameter(format!(
                    "subset fusion needs kernels ordered affine, homography, fundamental; found {kind} where {want} belongs"
                )));
            }
        }
    }
    let n = check_sizes(kernels)?;
    check_m(m, n)?;
    let laps: Vec<Laplacian> = kernels.iter().map(laplacian).collect();
    let res = subset_embeddings(&laps, m, gamma, iter)?;
    finish(res, m, opts)
}

/// Clustering scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    Single,
    KerAdd,
    CoReg,
    Subset,
}

impl Fusion {
    pub const ALL: [Fusion; 4] = [Fusion::Single, Fusion::KerAdd, Fusion::CoReg, Fusion::Subset];

    pub fn name(self) -> &'static str {
        match self {
            Fusion::Single => "single",
            Fusion::KerAdd => "keradd",
            Fusion::CoReg => "coreg",
            Fusion::Subset => "subset",
        }
    }
}

impl std::fmt::Display for Fusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Fusion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Fusion::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown fusion scheme {s:?} (expected single, keradd, coreg or subset)"))
    }
}

/// Every tunable of the clustering schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    pub lambda: f64,
    pub gamma: f64,
    pub iter: IterOptions,
    pub cluster: ClusterOptions,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            lambda: 1e-2,
            gamma: 1e-2,
            iter: IterOptions::default(),
            cluster: ClusterOptions::default(),
        }
    }
}

/// Assignment plus the alternating-loop diagnostics when there are any.
#[derive(Debug, Clone)]
pub struct FusionOutcome {
    pub assignment: Assignment,
    pub cost_trace: Vec<f64>,
    pub converged: bool,
}

/// Runs `fusion` on `kernels`. `Single` expects exactly one kernel.
pub fn cluster_with(
    fusion: Fusion,
    kernels: &[AffinityKernel],
    m: usize,
    params: &FusionParams,
) -> Result<FusionOutcome, SpectralError> {
    let plain = |assignment| FusionOutcome {
        assignment,
        cost_trace: Vec::new(),
        converged: true,
    };
    let iterative = |r: IterativeFusion| FusionOutcome {
        assignment: r.assignment,
        cost_trace: r.cost_trace,
        converged: r.converged,
    };
    match fusion {
        Fusion::Single => match kernels {
            [k] => single_model(k, m, &params.cluster).map(plain),
            _ => Err(SpectralError::KernelCount {
                scheme: "single",
                needed: "exactly 1",
                got: kernels.len(),
            }),
        },
        Fusion::KerAdd => fuse_kernel_addition(kernels, m, &params.cluster).map(plain),
        Fusion::CoReg => fuse_coreg(kernels, m, params.lambda, &params.iter, &params.cluster).map(iterative),
        Fusion::Subset => fuse_subset(kernels, m, params.gamma, &params.iter, &params.cluster).map(iterative),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks(sizes: &[usize], noise: f64) -> AffinityKernel {
        let n: usize = sizes.iter().sum();
        let label: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| vec![b; s]).collect();
        let m = Mat::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else if label[i] == label[j] {
                1.0
            } else {
                noise * (((i * 7 + j * 7) % 5) as f64 / 5.0)
            }
        });
        AffinityKernel::from_matrix(None, m).unwrap()
    }

    #[test]
    fn schemes_recover_blocks() {
        let k = blocks(&[5, 6, 4], 0.05);
        let truth = Assignment::from_raw_labels(&[[0; 5].as_slice(), &[1; 6], &[2; 4]].concat());
        let opts = ClusterOptions::default();
        let it = IterOptions::default();
        assert!(single_model(&k, 3, &opts).unwrap().same_partition(&truth));
        let ks = vec![k.clone(), k.clone()];
        assert!(fuse_kernel_addition(&ks, 3, &opts).unwrap().same_partition(&truth));
        assert!(fuse_coreg(&ks, 3, 1e-2, &it, &opts).unwrap().assignment.same_partition(&truth));
        let ks3 = vec![k.clone(), k.clone(), k];
        let res = fuse_subset(&ks3, 3, 1e-2, &it, &opts).unwrap();
        assert!(res.assignment.same_partition(&truth));
        assert!(res.converged);
    }

    #[test]
    fn constraint_signs() {
        let us: Vec<Mat<f64>> = (0..3)
            .map(|v| Mat::from_fn(4, 2, |i, j| ((i + 2 * j + v) as f64).sin()))
            .collect();
        let q0 = subset_constraint(0, &us);
        let q2 = subset_constraint(2, &us);
        assert!(q0.col_iter().all(|c| c.iter().all(|x| *x <= 0.0)));
        assert!(q2.col_iter().all(|c| c.iter().all(|x| *x >= 0.0)));
    }

    #[test]
    fn kernel_count_errors() {
        let k = blocks(&[2, 2], 0.0);
        let opts = ClusterOptions::default();
        let it = IterOptions::default();
        assert!(matches!(
            fuse_coreg(std::slice::from_ref(&k), 2, 0.1, &it, &opts),
            Err(SpectralError::KernelCount { .. })
        ));
        assert!(matches!(
            fuse_subset(&[k.clone(), k], 2, 0.1, &it, &opts),
            Err(SpectralError::KernelCount { .. })
        ));
    }
}
