//! Seeded k-means (k-means++ seeding, Lloyd refinement).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::DescriptorSet;

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center (ties go to the lowest index) and its squared distance.
pub fn nearest_center(centers: &[f64], dim: usize, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.chunks_exact(dim).enumerate() {
        let d = squared_distance(c, x);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Row-major `k x dim` centers.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub k: usize,
    pub dim: usize,
    pub centers: Vec<f64>,
}

pub fn kmeans(set: &DescriptorSet, k: usize, iters: usize, seed: u64) -> Result<KMeans> {
    if set.is_empty() {
        return Err(Error::Empty("k-means input"));
    }
    if k == 0 || set.count() < k {
        return Err(Error::config(format!(
            "k-means needs 1 <= k <= {} points, got k = {k}",
            set.count()
        )));
    }
    let dim = set.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus(set, k, &mut rng);

    for _ in 0..iters {
        let assign: Vec<usize> = set
            .as_flat()
            .par_chunks(dim)
            .map(|x| nearest_center(&centers, dim, x).0)
            .collect();
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (x, &a) in set.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut moved = false;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let n = counts[c] as f64;
            for j in 0..dim {
                let v = sums[c * dim + j] / n;
                if v != centers[c * dim + j] {
                    moved = true;
                }
                centers[c * dim + j] = v;
            }
        }
        if !moved {
            break;
        }
    }
    Ok(KMeans { k, dim, centers })
}

fn plus_plus(set: &DescriptorSet, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = set.count();
    let dim = set.dim();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = set.iter().map(|x| squared_distance(x, set.get(chosen[0]))).collect();

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // every point coincides with a center; take unused indices in order
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        let c = set.get(next);
        d2.par_iter_mut()
            .zip(set.as_flat().par_chunks(dim))
            .for_each(|(d, x)| *d = d.min(squared_distance(x, c)));
    }
    chosen.iter().flat_map(|&i| set.get(i).to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_blobs() {
        let mut rows = Vec::new();
        for i in 0..20 {
            let e = i as f64 * 0.01;
            rows.push([e, -e]);
            rows.push([10.0 + e, 10.0 - e]);
        }
        let set = DescriptorSet::from_rows(2, &rows).unwrap();
        let km = kmeans(&set, 2, 20, 7).unwrap();
        let mut xs: Vec<f64> = km.centers.chunks(2).map(|c| c[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] - 0.095).abs() < 1e-9);
        assert!((xs[1] - 10.095).abs() < 1e-9);
    }

    #[test]
    fn identical_points_do_not_panic() {
        let set = DescriptorSet::from_rows(1, vec![[1.0]; 5]).unwrap();
        let km = kmeans(&set, 3, 5, 0).unwrap();
        assert!(km.centers.iter().all(|&c| c == 1.0));
    }

    #[test]
    fn nearest_center_ties_pick_lowest() {
        let centers = [1.0, -1.0];
        assert_eq!(nearest_center(&centers, 1, &[0.0]).0, 0);
    }
}
