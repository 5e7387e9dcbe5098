mod common;
mod oracles;

use common::{block_kernel, block_labels, dense, random_kernel, rng};
use proptest::prelude::*;
use rand::Rng;
use rigidseg::eval::classification_error;
use rigidseg::linalg::orthonormality_defect;
use rigidseg::ork::AffinityKernel;
use rigidseg::spectral::*;

#[test]
fn embedding_objective_is_partial_eigensum() {
    let mut r = rng(31);
    for trial in 0..60 {
        let n = r.random_range(3..=30);
        let k = random_kernel(&mut r, n, 0.6);
        let lap = laplacian(&k);
        let all = oracles::jacobi_eigenvalues(&oracles::normalized_laplacian(&dense(&k)));
        for m in [1, 2, n / 2, n].into_iter().filter(|m| *m >= 1) {
            let emb = embed(&lap, m).unwrap();
            assert!(orthonormality_defect(emb.u.as_ref()) < 1e-8);
            let value = trace_quadratic(&lap.matrix, &emb.u);
            let want: f64 = all[..m].iter().sum();
            assert!((value - want).abs() < 1e-9, "trial {trial} n={n} m={m}: {value} vs {want}");
        }
    }
}

#[test]
fn components_give_zero_eigenvalues() {
    let mut r = rng(32);
    for k in 1..=5 {
        let sizes: Vec<usize> = (0..k).map(|_| r.random_range(2..6)).collect();
        let kern = block_kernel(&mut r, &sizes, 0.7, 0.0, 0.25);
        let spec = Spectrum::of(&laplacian(&kern)).unwrap();
        let zeros = spec.values.iter().filter(|v| v.abs() < 1e-9).count();
        assert_eq!(zeros, k, "{:?}", &spec.values[..k + 1]);
        let oracle = oracles::jacobi_eigenvalues(&oracles::normalized_laplacian(&dense(&kern)));
        assert_eq!(oracle.iter().filter(|v| v.abs() < 1e-9).count(), k);
    }
}

#[test]
fn coreg_cost_never_increases() {
    let mut r = rng(33);
    for trial in 0..50 {
        let views = r.random_range(2..=3);
        let n = r.random_range(8..=30);
        let m = r.random_range(2..=4);
        let laps: Vec<Laplacian> = (0..views).map(|_| laplacian(&random_kernel(&mut r, n, 0.5))).collect();
        for lambda in [1e-3, 1e-2, 1e-1] {
            let res = coreg_embeddings(&laps, m, lambda, &IterOptions::default()).unwrap();
            for w in res.cost_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "trial {trial} lambda {lambda}: {:?}", res.cost_trace);
            }
        }
    }
}

#[test]
fn subset_constraints_have_expected_signs() {
    let mut r = rng(34);
    let laps: Vec<Laplacian> = (0..3).map(|_| laplacian(&random_kernel(&mut r, 12, 0.5))).collect();
    let us: Vec<_> = laps.iter().map(|l| embed(l, 3).unwrap().u).collect();
    let q0 = subset_constraint(0, &us);
    let q2 = subset_constraint(2, &us);
    for i in 0..12 {
        for j in 0..12 {
            assert!(q0[(i, j)] <= 0.0);
            assert!(q2[(i, j)] >= 0.0);
        }
    }
}

#[test]
fn keradd_and_strong_coreg_agree_on_identical_views() {
    let mut r = rng(35);
    let sizes = [12, 9, 15];
    let k = block_kernel(&mut r, &sizes, 0.8, 0.05, 0.1);
    let views = vec![k.clone(), k.clone(), k];
    let opts = ClusterOptions::default();
    let ka = fuse_kernel_addition(&views, 3, &opts).unwrap();
    let co = fuse_coreg(&views, 3, 10.0, &IterOptions::default(), &opts).unwrap();
    assert!(ka.same_partition(&co.assignment));
    assert_eq!(classification_error(&ka, &block_labels(&sizes)).unwrap(), 0.0);
}

fn permute(k: &AffinityKernel, perm: &[usize]) -> AffinityKernel {
    k.permuted(perm)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fusion_is_permutation_invariant(seed in any::<u64>(), m in 2usize..=4) {
        let mut r = rng(seed);
        let sizes: Vec<usize> = (0..m).map(|_| r.random_range(6..14)).collect();
        let kernels: Vec<AffinityKernel> = (0..3).map(|_| block_kernel(&mut r, &sizes, 0.7, 0.08, 0.2)).collect();
        let n: usize = sizes.iter().sum();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let permuted: Vec<AffinityKernel> = kernels.iter().map(|k| permute(k, &perm)).collect();
        let params = FusionParams::default();
        for fusion in [Fusion::KerAdd, Fusion::CoReg, Fusion::Subset] {
            let a = cluster_with(fusion, &kernels, m, &params).unwrap().assignment;
            let b = cluster_with(fusion, &permuted, m, &params).unwrap().assignment;
            let back: Vec<usize> = {
                let mut v = vec![0; n];
                for (k, &i) in perm.iter().enumerate() {
                    v[i] = b.labels()[k];
                }
                v
            };
            prop_assert!(a.same_partition(&Assignment::new(back, m).unwrap()), "{}", fusion);
        }
        let single = cluster_with(Fusion::Single, &kernels[..1], m, &params).unwrap().assignment;
        let single_p = cluster_with(Fusion::Single, &permuted[..1], m, &params).unwrap().assignment;
        for (k, &i) in perm.iter().enumerate() {
            for (k2, &i2) in perm.iter().enumerate() {
                prop_assert_eq!(single.labels()[i] == single.labels()[i2], single_p.labels()[k] == single_p.labels()[k2]);
            }
        }
    }

    #[test]
    fn embedding_columns_are_orthonormal(seed in any::<u64>(), n in 2usize..25) {
        let mut r = rng(seed);
        let k = random_kernel(&mut r, n, 0.7);
        let m = r.random_range(1..=n);
        let emb = embed(&laplacian(&k), m).unwrap();
        prop_assert!(orthonormality_defect(emb.u.as_ref()) < 1e-8);
    }
}
