//! Model selection for the number of motions: normalized cut plus affinity
//! reconstruction error (NCRE), and the eigengap baseline.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ork::AffinityKernel;
use crate::spectral::{
    cluster_kmeans, cluster_with, laplacian, Assignment, Fusion, FusionParams, SpectralError, Spectrum,
};

#[derive(Debug, Error)]
pub enum ModelSelError {
    #[error("assignment has {0} points but the kernel has {1}")]
    SizeMismatch(usize, usize),
    #[error("kernel is all zero")]
    ZeroKernel,
    #[error("invalid model range [{m_min}, {m_max}] for {n} points")]
    BadRange { m_min: usize, m_max: usize, n: usize },
    #[error("delta must be finite and >= 0, got {0}")]
    BadDelta(f64),
    #[error("no candidate number of motions produced a finite residual")]
    NoCandidate,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

fn check_len(x: &Assignment, kern: &AffinityKernel) -> Result<(), ModelSelError> {
    if x.len() != kern.len() {
        return Err(ModelSelError::SizeMismatch(x.len(), kern.len()));
    }
    Ok(())
}

/// tr(XXᵀK) / (‖XXᵀ‖_F ‖K‖_F), accumulated per cluster without forming XXᵀ.
pub fn reconstruction_similarity(x: &Assignment, kern: &AffinityKernel) -> Result<f64, ModelSelError> {
    check_len(x, kern)?;
    let norm_k = kern.frobenius_norm();
    if norm_k == 0.0 {
        return Err(ModelSelError::ZeroKernel);
    }
    let labels = x.labels();
    let k = kern.matrix();
    let mut within = 0.0;
    for j in 0..labels.len() {
        for i in 0..labels.len() {
            if labels[i] == labels[j] {
                within += k[(i, j)];
            }
        }
    }
    let norm_x = x.cluster_sizes().iter().map(|&s| (s * s) as f64).sum::<f64>().sqrt();
    Ok(within / (norm_x * norm_k))
}

/// ε = 2 − 2·tr(XXᵀK) / (‖XXᵀ‖_F ‖K‖_F), in [0, 2].
pub fn reconstruction_error(x: &Assignment, kern: &AffinityKernel) -> Result<f64, ModelSelError> {
    Ok(2.0 - 2.0 * reconstruction_similarity(x, kern)?)
}

/// Σ_m cut(A_m, Ā_m) / vol(A_m); +∞ if some cluster has zero volume.
pub fn normalized_cut(x: &Assignment, kern: &AffinityKernel) -> Result<f64, ModelSelError> {
    check_len(x, kern)?;
    let m = x.num_clusters();
    let labels = x.labels();
    let k = kern.matrix();
    let mut cut = vec![0.0; m];
    let mut vol = vec![0.0; m];
    for (i, &li) in labels.iter().enumerate() {
        vol[li - 1] += kern.degree()[i];
        for (j, &lj) in labels.iter().enumerate() {
            if li != lj {
                cut[li - 1] += k[(i, j)];
            }
        }
    }
    Ok(ratio_sum(&cut, &vol))
}

fn ratio_sum(num: &[f64], vol: &[f64]) -> f64 {
    if vol.iter().any(|v| *v <= 0.0) {
        return f64::INFINITY;
    }
    num.iter().zip(vol).map(|(c, v)| c / v).sum()
}

/// The same quantity as tr((XᵀDX)⁻¹ XᵀLX) with L = D − K.
pub fn normalized_cut_trace(x: &Assignment, kern: &AffinityKernel) -> Result<f64, ModelSelError> {
    check_len(x, kern)?;
    let xm = x.indicator();
    let n = kern.len();
    let d = kern.degree();
    let l = faer::Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 } - kern.get(i, j));
    let xtlx = xm.transpose() * &l * &xm;
    let xtdx = faer::Mat::from_fn(xm.ncols(), xm.ncols(), |a, b| {
        (0..n).map(|i| xm[(i, a)] * d[i] * xm[(i, b)]).sum::<f64>()
    });
    // XᵀDX is diagonal for a hard assignment, so its inverse is elementwise.
    let num: Vec<f64> = (0..xm.ncols()).map(|a| xtlx[(a, a)]).collect();
    let vol: Vec<f64> = (0..xm.ncols()).map(|a| xtdx[(a, a)]).collect();
    Ok(ratio_sum(&num, &vol))
}

/// Score of one candidate number of motions.
#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub m: usize,
    /// Σ_v Ncut_v.
    #[serde(serialize_with = "finite_or_null")]
    pub ncut: f64,
    /// Σ_v ε_v.
    #[serde(serialize_with = "finite_or_null")]
    pub recon: f64,
    /// r_M = Σ_v Ncut_v − δ Σ_v 2·tr(XXᵀK_v)/(‖XXᵀ‖‖K_v‖); +∞ marks a rejected candidate.
    #[serde(serialize_with = "finite_or_null")]
    pub r: f64,
    #[serde(skip)]
    pub assignment: Option<Assignment>,
}

fn finite_or_null<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub best_m: usize,
    pub delta: f64,
    pub candidates: Vec<Candidate>,
}

impl SelectionResult {
    pub fn best(&self) -> &Candidate {
        self.candidates
            .iter()
            .find(|c| c.m == self.best_m)
            .expect("best_m is one of the candidates")
    }

    pub fn best_assignment(&self) -> &Assignment {
        self.best().assignment.as_ref().expect("best candidate has an assignment")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("selection report serializes")
    }

    /// `m,ncut,recon,r` rows; rejected candidates have empty fields.
    pub fn to_csv(&self) -> String {
        let f = |v: f64| if v.is_finite() { format!("{v}") } else { String::new() };
        let mut out = String::from("m,ncut,recon,r\n");
        for c in &self.candidates {
            out.push_str(&format!("{},{},{},{}\n", c.m, f(c.ncut), f(c.recon), f(c.r)));
        }
        out
    }
}

fn score(m: usize, x: Assignment, kernels: &[AffinityKernel], delta: f64) -> Result<Candidate, ModelSelError> {
    let mut ncut = 0.0;
    let mut recon = 0.0;
    let mut sim = 0.0;
    for k in kernels {
        ncut += normalized_cut(&x, k)?;
        let s = reconstruction_similarity(&x, k)?;
        sim += 2.0 * s;
        recon += 2.0 - 2.0 * s;
    }
    let r = ncut - delta * sim;
    Ok(Candidate {
        m,
        ncut,
        recon,
        r: if r.is_finite() { r } else { f64::INFINITY },
        assignment: Some(x),
    })
}

fn rejected(m: usize, why: &dyn std::fmt::Display) -> Candidate {
    log::info!("model selection: M = {m} rejected ({why})");
    Candidate {
        m,
        ncut: f64::INFINITY,
        recon: f64::INFINITY,
        r: f64::INFINITY,
        assignment: None,
    }
}

/// Clusters for every M in `[m_min, m_max]` with `fusion` and keeps the M
/// minimizing r_M (ties go to the smaller M). For `Single` the kernel list
/// must hold one kernel; the other schemes score against every view.
pub fn select_model(
    kernels: &[AffinityKernel],
    delta: f64,
    m_min: usize,
    m_max: usize,
    fusion: Fusion,
    params: &FusionParams,
) -> Result<SelectionResult, ModelSelError> {
    let n = kernels.first().map_or(0, AffinityKernel::len);
    if m_min == 0 || m_min > m_max || m_max > n {
        return Err(ModelSelError::BadRange { m_min, m_max, n });
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(ModelSelError::BadDelta(delta));
    }
    if fusion == Fusion::Single && kernels.len() != 1 {
        return Err(SpectralError::KernelCount {
            scheme: "single",
            needed: "exactly 1",
            got: kernels.len(),
        }
        .into());
    }
    for k in kernels {
        if k.len() != n {
            return Err(SpectralError::SizeMismatch(k.len(), n).into());
        }
        if k.frobenius_norm() == 0.0 {
            return Err(ModelSelError::ZeroKernel);
        }
    }

    // The fixed-Laplacian schemes share one eigen-decomposition across M.
    let cached = match fusion {
        Fusion::Single => Some(Spectrum::of(&laplacian(&kernels[0]))?),
        Fusion::KerAdd => {
            let sum = AffinityKernel::sum(kernels).map_err(|e| SpectralError::BadParameter(e.to_string()))?;
            Some(Spectrum::of(&laplacian(&sum))?)
        }
        Fusion::CoReg | Fusion::Subset => None,
    };

    let candidates: Vec<Candidate> = (m_min..=m_max)
        .into_par_iter()
        .map(|m| {
            let x = if m == 1 {
                Assignment::new(vec![1; n], 1)
            } else if let Some(spec) = &cached {
                spec.embedding(m)
                    .and_then(|e| cluster_kmeans(e.u.as_ref(), m, params.cluster.restarts, params.cluster.seed))
            } else {
                cluster_with(fusion, kernels, m, params).map(|o| o.assignment)
            };
            match x {
                Ok(x) if x.cluster_sizes().contains(&0) => rejected(m, &"empty cluster"),
                Ok(x) => score(m, x, kernels, delta).unwrap_or_else(|e| rejected(m, &e)),
                Err(e) => rejected(m, &e),
            }
        })
        .collect();

    let mut best: Option<&Candidate> = None;
    for c in &candidates {
        if c.r.is_finite() && best.is_none_or(|b| c.r < b.r) {
            best = Some(c);
        }
    }
    let best_m = best.ok_or(ModelSelError::NoCandidate)?.m;
    Ok(SelectionResult {
        best_m,
        delta,
        candidates,
    })
}

/// argmax over m ∈ [1, M_max] of σ_{m+1} − σ_m on the normalized Laplacian
/// spectrum (ties go to the smaller m). M_max is clamped to N − 1.
pub fn gap_heuristic(kern: &AffinityKernel, m_max: usize) -> Result<usize, ModelSelError> {
    let n = kern.len();
    if n < 2 {
        return Ok(1);
    }
    let lap = laplacian(kern);
    let sigma = crate::linalg::symmetric_eigenvalues(lap.matrix.as_ref()).map_err(SpectralError::Eigen)?;
    let top = m_max.clamp(1, n - 1);
    let mut best = (1, f64::NEG_INFINITY);
    for m in 1..=top {
        let gap = sigma[m] - sigma[m - 1];
        if gap > best.1 {
            best = (m, gap);
        }
    }
    Ok(best.0)
}
