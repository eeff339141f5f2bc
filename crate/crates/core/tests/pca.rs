mod oracles;

use lsdhm_core::{fit_pca, DescriptorSet};
use nalgebra::{DMatrix, SymmetricEigen};
use oracles::rng;
use proptest::prelude::*;
use rand::Rng;

/// Correlated data: random linear mix of independent uniforms plus an offset.
fn correlated(seed: u64, t: usize, dim: usize) -> DescriptorSet {
    let mut r = rng(seed);
    let mix: Vec<f64> = (0..dim * dim).map(|_| r.random_range(-1.0..1.0)).collect();
    let scales: Vec<f64> = (0..dim).map(|i| 3.0 / (i + 1) as f64).collect();
    let mut data = Vec::with_capacity(t * dim);
    for _ in 0..t {
        let z: Vec<f64> = scales.iter().map(|s| s * r.random_range(-1.0..1.0)).collect();
        for i in 0..dim {
            data.push(2.0 + (0..dim).map(|j| mix[i * dim + j] * z[j]).sum::<f64>());
        }
    }
    DescriptorSet::new(dim, data).unwrap()
}

fn nalgebra_reference(set: &DescriptorSet) -> (Vec<f64>, DMatrix<f64>) {
    let (t, dim) = (set.count(), set.dim());
    let x = DMatrix::from_row_slice(t, dim, set.as_flat());
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.transpose() * &centered / t as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

#[test]
fn matches_nalgebra_eigendecomposition() {
    for seed in 0..5 {
        let set = correlated(seed, 500, 8);
        let (values, vectors) = nalgebra_reference(&set);
        let pca = fit_pca(&set, 5).unwrap();
        for i in 0..5 {
            assert!((pca.explained_variance()[i] - values[i]).abs() < 1e-9 * values[0]);
            // eigenvectors agree up to sign
            let dot: f64 = (0..8).map(|j| pca.row(i)[j] * vectors[(j, i)]).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-8, "component {i}: |dot| = {}", dot.abs());
        }
    }
}

#[test]
fn projection_matches_manual_formula() {
    let set = correlated(3, 200, 6);
    let pca = fit_pca(&set, 3).unwrap();
    let x = set.get(17);
    let p = pca.project(x).unwrap();
    for i in 0..3 {
        let want: f64 = (0..6).map(|j| pca.row(i)[j] * (x[j] - pca.mean()[j])).sum();
        assert!((p[i] - want).abs() < 1e-12);
    }
}

#[test]
fn projected_data_is_decorrelated() {
    let set = correlated(8, 1000, 5);
    let pca = fit_pca(&set, 5).unwrap();
    let proj = pca.project_set(&set).unwrap();
    for a in 0..5 {
        for b in 0..5 {
            let cov: f64 = proj.iter().map(|p| p[a] * p[b]).sum::<f64>() / 1000.0;
            let want = if a == b { pca.explained_variance()[a] } else { 0.0 };
            assert!((cov - want).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn basis_is_orthonormal_and_sorted(seed in any::<u64>(), dim in 2usize..10) {
        let set = correlated(seed, 100, dim);
        let m = dim.div_ceil(2);
        let pca = fit_pca(&set, m).unwrap();
        for i in 0..m {
            for j in 0..m {
                let d: f64 = pca.row(i).iter().zip(pca.row(j)).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((d - want).abs() < 1e-9);
            }
        }
        let v = pca.explained_variance();
        prop_assert!(v.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn full_rank_reconstruction(seed in any::<u64>()) {
        let set = correlated(seed, 50, 4);
        let pca = fit_pca(&set, 4).unwrap();
        for x in set.iter().take(5) {
            let back = pca.reconstruct(&pca.project(x).unwrap()).unwrap();
            for (a, b) in x.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
