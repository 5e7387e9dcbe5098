//! Shared fixtures for the integration tests.

#![allow(dead_code)]

use faer::Mat;
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rigidseg::geometry::{Correspondence, ModelKind};
use rigidseg::ork::AffinityKernel;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric non-negative kernel with zero diagonal.
pub fn random_kernel(rng: &mut ChaCha8Rng, n: usize, density: f64) -> AffinityKernel {
    let mut m = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                let v = rng.random_range(0.01..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    AffinityKernel::from_matrix(None, m).unwrap()
}

/// Kernel with strong within-block and weak between-block affinities.
pub fn block_kernel(rng: &mut ChaCha8Rng, sizes: &[usize], within: f64, between: f64, jitter: f64) -> AffinityKernel {
    let label: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| vec![b; s]).collect();
    let n = label.len();
    let mut m = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let base = if label[i] == label[j] { within } else { between };
            let v = if base > 0.0 { (base + jitter * rng.random_range(-1.0..1.0)).max(0.0) } else { 0.0 };
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    AffinityKernel::from_matrix(None, m).unwrap()
}

pub fn block_labels(sizes: &[usize]) -> Vec<u32> {
    sizes.iter().enumerate().flat_map(|(b, &s)| vec![b as u32 + 1; s]).collect()
}

pub fn dense(k: &AffinityKernel) -> Vec<Vec<f64>> {
    let n = k.len();
    (0..n).map(|i| (0..n).map(|j| k.get(i, j)).collect()).collect()
}

pub fn to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]
}

fn intrinsics() -> Matrix3<f64> {
    Matrix3::new(800.0, 0.0, 320.0, 0.0, 800.0, 240.0, 0.0, 0.0, 1.0)
}

fn project(k: &Matrix3<f64>, p: &Vector3<f64>) -> [f64; 2] {
    let q = k * p;
    [q[0] / q[2], q[1] / q[2]]
}

/// A random ground-truth model of `kind` and `count` exact correspondences.
pub fn exact_model(rng: &mut ChaCha8Rng, kind: ModelKind, count: usize) -> (Matrix3<f64>, Vec<Correspondence>) {
    let k = intrinsics();
    match kind {
        ModelKind::Affine | ModelKind::Homography => {
            let mut h = Matrix3::from_fn(|r, c| if r == c { 1.0 } else { 0.0 } + rng.random_range(-0.2..0.2));
            h[(0, 2)] = rng.random_range(-30.0..30.0);
            h[(1, 2)] = rng.random_range(-30.0..30.0);
            if kind == ModelKind::Affine {
                h[(2, 0)] = 0.0;
                h[(2, 1)] = 0.0;
                h[(2, 2)] = 1.0;
            } else {
                h[(2, 0)] = rng.random_range(-3e-4..3e-4);
                h[(2, 1)] = rng.random_range(-3e-4..3e-4);
            }
            let corr = (0..count)
                .map(|_| {
                    let x = [rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)];
                    let q = h * Vector3::new(x[0], x[1], 1.0);
                    (x, [q[0] / q[2], q[1] / q[2]])
                })
                .collect();
            (h, corr)
        }
        ModelKind::Fundamental => {
            let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let rot = Rotation3::from_scaled_axis(axis.normalize() * rng.random_range(0.02..0.15));
            let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5), rng.random_range(-0.3..0.3));
            let tx = t.cross_matrix();
            let kinv = k.try_inverse().unwrap();
            let f = kinv.transpose() * tx * rot.matrix() * kinv;
            let corr = (0..count)
                .map(|_| {
                    let p = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5), rng.random_range(4.0..9.0));
                    let p2 = rot * p + t;
                    (project(&k, &p), project(&k, &p2))
                })
                .collect();
            (f, corr)
        }
    }
}
