use super::knn::knn_lists;
use super::{DistanceMatrix, WeightedEdgeSet};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Search interval for the per-point bandwidth.
pub const UMAP_BANDWIDTH_BRACKET: (f64, f64) = (1e-6, 1e6);
const MAX_BISECTION_STEPS: usize = 64;
const ROW_SUM_TOL: f64 = 1e-8;

/// Fuzzy kNN graph in the style of UMAP.
///
/// For each point `i` with nearest-neighbour distance `rho_i`, the directed
/// weights over its `k` nearest neighbours are
/// `w_ij = exp(-max(0, d_ij - rho_i) / sigma_i)` with `sigma_i` found by
/// bisection so that `sum_j w_ij = log2(k)`. The nearest neighbour always gets
/// weight 1. Weights are symmetrized as `w_ij + w_ji - w_ij * w_ji`.
pub fn umap_weighted_graph<T: Real>(d: &DistanceMatrix<T>, k: usize) -> Result<WeightedEdgeSet<T>> {
    if k < 2 {
        return Err(Error::invalid(format!("UMAP graph needs k >= 2, got {k}")));
    }
    let n = d.n();
    let lists = knn_lists(d, k)?;
    let target = (k as f64).log2();

    let mut directed: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for (i, nbrs) in lists.iter().enumerate() {
        let dists: Vec<f64> = nbrs.iter().map(|&j| d.get(i, j).as_f64()).collect();
        let rho = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let sigma = solve_bandwidth(&dists, rho, target).ok_or(Error::Bisection { point: i })?;
        directed.push(
            nbrs.iter()
                .zip(&dists)
                .map(|(&j, &dij)| (j, row_weight(dij, rho, sigma)))
                .collect(),
        );
    }

    let mut pairs: Vec<(usize, usize, f64, f64)> = Vec::new();
    for (i, row) in directed.iter().enumerate() {
        for &(j, w) in row {
            let (a, b) = (i.min(j), i.max(j));
            // Store w_ab in slot 2 and w_ba in slot 3.
            if i == a {
                pairs.push((a, b, w, 0.0));
            } else {
                pairs.push((a, b, 0.0, w));
            }
        }
    }
    pairs.sort_by_key(|x| (x.0, x.1));
    let mut edges: Vec<(usize, usize, T)> = Vec::new();
    let mut k = 0;
    while k < pairs.len() {
        let (a, b) = (pairs[k].0, pairs[k].1);
        let (mut wab, mut wba) = (0.0, 0.0);
        while k < pairs.len() && (pairs[k].0, pairs[k].1) == (a, b) {
            wab += pairs[k].2;
            wba += pairs[k].3;
            k += 1;
        }
        let w = wab + wba - wab * wba;
        edges.push((a, b, T::lit(w.clamp(0.0, 1.0))));
    }
    Ok(WeightedEdgeSet::new(n, edges))
}

#[inline]
fn row_weight(d: f64, rho: f64, sigma: f64) -> f64 {
    (-(d - rho).max(0.0) / sigma).exp()
}

fn row_sum(dists: &[f64], rho: f64, sigma: f64) -> f64 {
    dists.iter().map(|&d| row_weight(d, rho, sigma)).sum()
}

/// Geometric bisection for sigma; the row sum is nondecreasing in sigma.
fn solve_bandwidth(dists: &[f64], rho: f64, target: f64) -> Option<f64> {
    let (mut lo, mut hi) = UMAP_BANDWIDTH_BRACKET;
    let f_lo = row_sum(dists, rho, lo) - target;
    let f_hi = row_sum(dists, rho, hi) - target;
    if f_lo.abs() <= ROW_SUM_TOL {
        return Some(lo);
    }
    if f_hi.abs() <= ROW_SUM_TOL {
        return Some(hi);
    }
    if f_lo > 0.0 || f_hi < 0.0 {
        return None;
    }
    let mut best = (f64::INFINITY, lo);
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = (lo * hi).sqrt();
        let f = row_sum(dists, rho, mid) - target;
        if f.abs() < best.0 {
            best = (f.abs(), mid);
        }
        if f.abs() <= ROW_SUM_TOL {
            return Some(mid);
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Geometric halving reaches machine precision well before the cap.
    (best.0 <= 1e-6).then_some(best.1)
}

/// Directed row sums, exposed for residual checks.
pub fn umap_row_sums<T: Real>(d: &DistanceMatrix<T>, k: usize) -> Result<Vec<f64>> {
    let lists = knn_lists(d, k)?;
    let target = (k as f64).log2();
    let mut sums = Vec::with_capacity(lists.len());
    for (i, nbrs) in lists.iter().enumerate() {
        let dists: Vec<f64> = nbrs.iter().map(|&j| d.get(i, j).as_f64()).collect();
        let rho = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let sigma = solve_bandwidth(&dists, rho, target).ok_or(Error::Bisection { point: i })?;
        sums.push(row_sum(&dists, rho, sigma));
    }
    Ok(sums)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> DistanceMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Matrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        DistanceMatrix::euclidean(&p)
    }

    #[test]
    fn row_sums_hit_log2_k() {
        for k in [2, 4, 9] {
            let d = random_points(40, k as u64);
            for s in umap_row_sums(&d, k).unwrap() {
                assert!((s - (k as f64).log2()).abs() <= 1e-6, "k={k}: {s}");
            }
        }
    }

    #[test]
    fn symmetric_weights_in_unit_interval() {
        let d = random_points(50, 11);
        let g = umap_weighted_graph(&d, 4).unwrap();
        for &(i, j, w) in g.edges() {
            assert!(i < j);
            assert!((0.0..=1.0).contains(&w));
            assert_eq!(g.weight(j, i), Some(w));
        }
        // the nearest neighbour of every point carries directed weight 1,
        // hence symmetric weight 1 as well
        let lists = knn_lists(&d, 1).unwrap();
        for (i, l) in lists.iter().enumerate() {
            let w = g.weight(i, l[0]).unwrap();
            assert!((w - 1.0).abs() <= 1e-15, "{w}");
        }
    }

    #[test]
    fn unbracketable_rows_error() {
        // Every neighbour ties at the minimum, so the sum is k > log2 k for
        // any bandwidth.
        let n = 6;
        let m = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
        let d = DistanceMatrix::from_matrix(m).unwrap();
        assert!(matches!(umap_weighted_graph(&d, 4), Err(Error::Bisection { point: 0 })));
    }
}
