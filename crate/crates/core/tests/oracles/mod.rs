//! Brute-force reference implementations for the integration tests. Nothing
//! here calls into the production code paths it is compared against.

#![allow(dead_code)]

use std::collections::HashSet;

/// Dense N×N matrix as nested rows.
pub type Dense = Vec<Vec<f64>>;

pub fn dense_from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Dense {
    (0..n).map(|i| (0..n).map(|j| f(i, j)).collect()).collect()
}

/// 2 − 2·tr(XXᵀK)/(‖XXᵀ‖_F‖K‖_F) with XXᵀ formed explicitly.
pub fn reconstruction_error_dense(labels: &[usize], k: &Dense) -> f64 {
    let n = labels.len();
    let xxt = dense_from_fn(n, |i, j| if labels[i] == labels[j] { 1.0 } else { 0.0 });
    let mut trace = 0.0;
    for i in 0..n {
        for j in 0..n {
            trace += xxt[i][j] * k[j][i];
        }
    }
    let fro = |a: &Dense| a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    2.0 - 2.0 * trace / (fro(&xxt) * fro(k))
}

/// Σ_m cut(A_m, Ā_m)/vol(A_m) by literal loops over every edge.
pub fn ncut_bruteforce(labels: &[usize], k: &Dense) -> f64 {
    let n = labels.len();
    assert!(n <= 10, "brute-force Ncut oracle is limited to N <= 10, got {n}");
    let mut clusters: Vec<usize> = labels.to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    let mut total = 0.0;
    for c in clusters {
        let mut cut = 0.0;
        let mut vol = 0.0;
        for i in 0..n {
            if labels[i] != c {
                continue;
            }
            for j in 0..n {
                vol += k[i][j];
                if labels[j] != c {
                    cut += k[i][j];
                }
            }
        }
        if vol <= 0.0 {
            return f64::INFINITY;
        }
        total += cut / vol;
    }
    total
}

/// Minimal misclassified fraction over every injective partial map from
/// predicted clusters to truth groups, by exhaustive enumeration.
pub fn classification_error_exhaustive(pred: &[usize], truth: &[u32]) -> f64 {
    let mut ps: Vec<usize> = pred.to_vec();
    ps.sort_unstable();
    ps.dedup();
    let mut ts: Vec<u32> = truth.to_vec();
    ts.sort_unstable();
    ts.dedup();
    assert!(ps.len() <= 5 && ts.len() <= 5, "exhaustive matching limited to 5 clusters");

    fn go(p: usize, ps: &[usize], ts: &[u32], used: &mut Vec<bool>, map: &mut Vec<Option<u32>>, pred: &[usize], truth: &[u32], best: &mut usize) {
        if p == ps.len() {
            let agree = pred
                .iter()
                .zip(truth)
                .filter(|(a, b)| {
                    let idx = ps.iter().position(|x| x == *a).unwrap();
                    map[idx] == Some(**b)
                })
                .count();
            *best = (*best).max(agree);
            return;
        }
        map.push(None);
        go(p + 1, ps, ts, used, map, pred, truth, best);
        map.pop();
        for t in 0..ts.len() {
            if !used[t] {
                used[t] = true;
                map.push(Some(ts[t]));
                go(p + 1, ps, ts, used, map, pred, truth, best);
                map.pop();
                used[t] = false;
            }
        }
    }

    let mut best = 0;
    go(0, &ps, &ts, &mut vec![false; ts.len()], &mut Vec::new(), pred, truth, &mut best);
    1.0 - best as f64 / truth.len() as f64
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &Dense) -> Vec<f64> {
    let n = a.len();
    assert!(n <= 30, "Jacobi oracle is limited to N <= 30");
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let (mrp, mrq) = (m[r][p], m[r][q]);
                    m[r][p] = c * mrp - s * mrq;
                    m[r][q] = s * mrp + c * mrq;
                }
                for r in 0..n {
                    let (mpr, mqr) = (m[p][r], m[q][r]);
                    m[p][r] = c * mpr - s * mqr;
                    m[q][r] = s * mpr + c * mqr;
                }
            }
        }
    }
    let mut values: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    values.sort_by(f64::total_cmp);
    values
}

/// I − D^{-1/2}KD^{-1/2} from the off-diagonal degree; isolated rows are identity.
pub fn normalized_laplacian(k: &Dense) -> Dense {
    let n = k.len();
    let deg: Vec<f64> = (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| k[i][j]).sum()).collect();
    dense_from_fn(n, |i, j| {
        if i == j {
            1.0
        } else if deg[i] > 0.0 && deg[j] > 0.0 {
            -k[i][j] / (deg[i] * deg[j]).sqrt()
        } else {
            0.0
        }
    })
}

/// Textbook Sampson distance for x2ᵀFx1 = 0.
pub fn sampson_fundamental(f: &[[f64; 3]; 3], x1: [f64; 2], x2: [f64; 2]) -> f64 {
    let p = [x1[0], x1[1], 1.0];
    let q = [x2[0], x2[1], 1.0];
    let fp: Vec<f64> = (0..3).map(|r| (0..3).map(|c| f[r][c] * p[c]).sum()).collect();
    let ftq: Vec<f64> = (0..3).map(|c| (0..3).map(|r| f[r][c] * q[r]).sum()).collect();
    let e: f64 = (0..3).map(|r| q[r] * fp[r]).sum();
    e * e / (fp[0] * fp[0] + fp[1] * fp[1] + ftq[0] * ftq[0] + ftq[1] * ftq[1])
}

/// Sampson distance of the transfer constraint x2 × Hx1 = 0 (first two rows).
/// The residual is bilinear in the coordinates, so central differences give
/// its Jacobian exactly up to rounding.
pub fn sampson_transfer(h: &[[f64; 3]; 3], x1: [f64; 2], x2: [f64; 2]) -> f64 {
    let resid = |z: [f64; 4]| -> [f64; 2] {
        let p = [z[0], z[1], 1.0];
        let hp: Vec<f64> = (0..3).map(|r| (0..3).map(|c| h[r][c] * p[c]).sum()).collect();
        let q = [z[2], z[3], 1.0];
        // Rows 0 and 1 of q × hp.
        [q[1] * hp[2] - q[2] * hp[1], q[2] * hp[0] - q[0] * hp[2]]
    };
    let z = [x1[0], x1[1], x2[0], x2[1]];
    let e = resid(z);
    let mut jac = [[0.0; 4]; 2];
    for c in 0..4 {
        let step = 1.0;
        let (mut zp, mut zm) = (z, z);
        zp[c] += step;
        zm[c] -= step;
        let (rp, rm) = (resid(zp), resid(zm));
        for r in 0..2 {
            jac[r][c] = (rp[r] - rm[r]) / (2.0 * step);
        }
    }
    let s = |a: usize, b: usize| (0..4).map(|c| jac[a][c] * jac[b][c]).sum::<f64>();
    let (s11, s12, s22) = (s(0, 0), s(0, 1), s(1, 1));
    let det = s11 * s22 - s12 * s12;
    (s22 * e[0] * e[0] - 2.0 * s12 * e[0] * e[1] + s11 * e[1] * e[1]) / det
}

/// Indices of the ⌈h_frac·K_finite⌉ smallest finite residuals, by full sort.
pub fn top_h_set(row: &[f64], h_frac: f64) -> HashSet<usize> {
    let mut finite: Vec<(f64, usize)> = row.iter().copied().enumerate().filter(|(_, v)| v.is_finite()).map(|(k, v)| (v, k)).collect();
    if finite.is_empty() {
        return HashSet::new();
    }
    finite.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let h = ((h_frac * finite.len() as f64 - 1e-9).ceil().max(1.0) as usize).min(finite.len());
    finite[..h].iter().map(|(_, k)| *k).collect()
}

/// ORK affinity |S_i ∩ S_j| / covis(i, j) with zero diagonal, via hash sets.
pub fn ork_kernel(rows: &[Vec<f64>], covis: impl Fn(usize, usize) -> usize, h_frac: f64) -> Dense {
    let sets: Vec<HashSet<usize>> = rows.iter().map(|r| top_h_set(r, h_frac)).collect();
    dense_from_fn(rows.len(), |i, j| {
        let c = covis(i, j);
        if i == j || c == 0 {
            0.0
        } else {
            sets[i].intersection(&sets[j]).count() as f64 / c as f64
        }
    })
}

/// Type-7 quantile by sorting.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
