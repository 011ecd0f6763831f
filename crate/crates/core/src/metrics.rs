//! Embedding quality: trustworthiness, continuity, MRRE in both directions
//! and distance correlation, with the posterior-sampling protocol.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;

use crate::diffmath::Matrix;
use crate::error::{Error, Result};
use crate::graphs::DistanceMatrix;
use crate::models::Model;
use crate::scalar::Real;

pub const DEFAULT_K: usize = 9;
pub const DEFAULT_DRAWS: usize = 50;
pub const DEFAULT_PEARSON_POINTS: usize = 1024;

/// `rank(i, j)`: position of `j` among the neighbours of `i` by ascending
/// distance, from 1, ties broken by index. The diagonal holds 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankMatrix {
    n: usize,
    ranks: Vec<u32>,
}

impl RankMatrix {
    pub fn from_distances<T: Real>(d: &DistanceMatrix<T>) -> Result<Self> {
        let n = d.n();
        if n < 2 {
            return Err(Error::invalid("rank matrix needs n >= 2"));
        }
        let mut ranks = vec![0u32; n * n];
        let mut order: Vec<usize> = Vec::with_capacity(n);
        for i in 0..n {
            let row = d.row(i);
            order.clear();
            order.extend((0..n).filter(|&j| j != i));
            order.sort_by(|&a, &b| row[a].as_f64().total_cmp(&row[b].as_f64()).then(a.cmp(&b)));
            for (r, &j) in order.iter().enumerate() {
                ranks[i * n + j] = r as u32 + 1;
            }
        }
        Ok(RankMatrix { n, ranks })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.ranks[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ranks[i * self.n..(i + 1) * self.n]
    }
}

fn check_pair(rx: &RankMatrix, rz: &RankMatrix) -> Result<usize> {
    if rx.n != rz.n {
        return Err(Error::invalid(format!("rank matrices of size {} and {}", rx.n, rz.n)));
    }
    Ok(rx.n)
}

/// Trustworthiness from precomputed ranks.
pub fn trustworthiness_ranks(rx: &RankMatrix, rz: &RankMatrix, k: usize) -> Result<f64> {
    let n = check_pair(rx, rz)?;
    if k == 0 || 2 * k >= n {
        return Err(Error::invalid(format!("trustworthiness needs 1 <= k < n/2, got k={k}, n={n}")));
    }
    let k32 = k as u32;
    let mut penalty: u64 = 0;
    for i in 0..n {
        let (x, z) = (rx.row(i), rz.row(i));
        for j in 0..n {
            if j != i && z[j] <= k32 && x[j] > k32 {
                penalty += u64::from(x[j] - k32);
            }
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * penalty as f64)
}

/// Continuity from precomputed ranks: trustworthiness with the spaces swapped.
pub fn continuity_ranks(rx: &RankMatrix, rz: &RankMatrix, k: usize) -> Result<f64> {
    trustworthiness_ranks(rz, rx, k)
}

pub fn trustworthiness<T: Real>(dx: &DistanceMatrix<T>, dz: &DistanceMatrix<T>, k: usize) -> Result<f64> {
    trustworthiness_ranks(&RankMatrix::from_distances(dx)?, &RankMatrix::from_distances(dz)?, k)
}

pub fn continuity<T: Real>(dx: &DistanceMatrix<T>, dz: &DistanceMatrix<T>, k: usize) -> Result<f64> {
    trustworthiness(dz, dx, k)
}

/// Which space supplies the baseline neighbourhoods.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MrreDirection {
    /// Data-space kNN baseline, relative to data ranks.
    XToZ,
    /// Latent-space kNN baseline, relative to latent ranks.
    ZToX,
}

/// `sum_{l=1..k} |n - 2l + 1| / l`, the largest value of the inner sum for
/// one point.
pub fn mrre_normalizer(n: usize, k: usize) -> f64 {
    (1..=k).map(|l| (n as f64 - 2.0 * l as f64 + 1.0).abs() / l as f64).sum()
}

pub fn mrre_ranks(rx: &RankMatrix, rz: &RankMatrix, k: usize, direction: MrreDirection) -> Result<f64> {
    let n = check_pair(rx, rz)?;
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("mrre needs 1 <= k < n, got k={k}, n={n}")));
    }
    let (base, other) = match direction {
        MrreDirection::XToZ => (rx, rz),
        MrreDirection::ZToX => (rz, rx),
    };
    let k32 = k as u32;
    let mut total = 0.0;
    for i in 0..n {
        let (b, o) = (base.row(i), other.row(i));
        for j in 0..n {
            if j != i && b[j] <= k32 {
                total += f64::from(b[j].abs_diff(o[j])) / f64::from(b[j]);
            }
        }
    }
    Ok(total / (n as f64 * mrre_normalizer(n, k)))
}

pub fn mrre<T: Real>(
    dx: &DistanceMatrix<T>,
    dz: &DistanceMatrix<T>,
    k: usize,
    direction: MrreDirection,
) -> Result<f64> {
    mrre_ranks(&RankMatrix::from_distances(dx)?, &RankMatrix::from_distances(dz)?, k, direction)
}

/// Sample Pearson correlation, computed in two passes.
pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid(format!("pearson_r needs equal lengths >= 2, got {} and {}", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::invalid("pearson_r: zero variance"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Upper triangle of a distance matrix, row-major.
pub fn upper_triangle<T: Real>(d: &DistanceMatrix<T>) -> Vec<f64> {
    let n = d.n();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(d.get(i, j).as_f64());
        }
    }
    out
}

/// Reference distances for the correlation score: a subset of test points
/// and their pairwise distances (upper triangle), either Euclidean in data
/// space or from a ground-truth oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceReference {
    pub points: Vec<usize>,
    pub distances: Vec<f64>,
}

impl DistanceReference {
    /// Picks `min(m, n)` of `n` points uniformly without replacement, sorted.
    pub fn choose_points<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<usize> {
        let mut idx = sample(rng, n, m.min(n)).into_vec();
        idx.sort_unstable();
        idx
    }

    pub fn euclidean<T: Real>(x: &Matrix<T>, points: Vec<usize>) -> Self {
        let d = DistanceMatrix::euclidean(&x.select_rows(&points));
        DistanceReference {
            distances: upper_triangle(&d),
            points,
        }
    }
}

/// Scores of a single embedding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbeddingScores {
    pub mrre_zx: f64,
    pub mrre_xz: f64,
    pub trustworthiness: f64,
    pub continuity: f64,
    pub pearson_r: f64,
}

pub fn score_embedding<T: Real>(
    rx: &RankMatrix,
    z: &Matrix<T>,
    k: usize,
    reference: &DistanceReference,
) -> Result<EmbeddingScores> {
    let rz = RankMatrix::from_distances(&DistanceMatrix::euclidean(z))?;
    let zd = upper_triangle(&DistanceMatrix::euclidean(&z.select_rows(&reference.points)));
    Ok(EmbeddingScores {
        mrre_zx: mrre_ranks(rx, &rz, k, MrreDirection::ZToX)?,
        mrre_xz: mrre_ranks(rx, &rz, k, MrreDirection::XToZ)?,
        trustworthiness: trustworthiness_ranks(rx, &rz, k)?,
        continuity: continuity_ranks(rx, &rz, k)?,
        pearson_r: pearson_r(&zd, &reference.distances)?,
    })
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub mrre_zx: Summary,
    pub mrre_xz: Summary,
    pub trustworthiness: Summary,
    pub continuity: Summary,
    pub pearson_r: Summary,
    pub k: usize,
    pub n_draws: usize,
}

pub const REPORT_KEYS: [&str; 12] = [
    "mrre_zx_mean",
    "mrre_zx_std",
    "mrre_xz_mean",
    "mrre_xz_std",
    "trustworthiness_mean",
    "trustworthiness_std",
    "continuity_mean",
    "continuity_std",
    "pearson_r_mean",
    "pearson_r_std",
    "k",
    "n_draws",
];

impl MetricsReport {
    pub fn from_draws(draws: &[EmbeddingScores], k: usize) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::invalid("no draws to summarize"));
        }
        let col = |f: fn(&EmbeddingScores) -> f64| Summary::of(&draws.iter().map(f).collect::<Vec<_>>());
        Ok(MetricsReport {
            mrre_zx: col(|s| s.mrre_zx),
            mrre_xz: col(|s| s.mrre_xz),
            trustworthiness: col(|s| s.trustworthiness),
            continuity: col(|s| s.continuity),
            pearson_r: col(|s| s.pearson_r),
            k,
            n_draws: draws.len(),
        })
    }

    fn summaries(&self) -> [(&'static str, Summary); 5] {
        [
            ("mrre_zx", self.mrre_zx),
            ("mrre_xz", self.mrre_xz),
            ("trustworthiness", self.trustworthiness),
            ("continuity", self.continuity),
            ("pearson_r", self.pearson_r),
        ]
    }

    /// Flat JSON object with the keys in [`REPORT_KEYS`].
    pub fn to_json(&self) -> String {
        let mut m = serde_json::Map::new();
        for (name, s) in self.summaries() {
            m.insert(format!("{name}_mean"), serde_json::json!(s.mean));
            m.insert(format!("{name}_std"), serde_json::json!(s.std));
        }
        m.insert("k".into(), serde_json::json!(self.k));
        m.insert("n_draws".into(), serde_json::json!(self.n_draws));
        let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(m)).expect("plain map serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: BTreeMap<String, serde_json::Value> =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("metrics json: {e}")))?;
        let num = |key: &str| {
            v.get(key)
                .and_then(serde_json::Value::as_f64)
                .ok_or_else(|| Error::invalid(format!("metrics json lacks '{key}'")))
        };
        let sum = |name: &str| -> Result<Summary> {
            Ok(Summary {
                mean: num(&format!("{name}_mean"))?,
                std: num(&format!("{name}_std"))?,
            })
        };
        Ok(MetricsReport {
            mrre_zx: sum("mrre_zx")?,
            mrre_xz: sum("mrre_xz")?,
            trustworthiness: sum("trustworthiness")?,
            continuity: sum("continuity")?,
            pearson_r: sum("pearson_r")?,
            k: num("k")? as usize,
            n_draws: num("n_draws")? as usize,
        })
    }
}

/// Scores `n_draws` posterior samples `z ~ q(z|x)` of the test set against
/// the data-space ranks. A deterministic AE is scored once.
pub fn evaluate_stochastic<T: Real, R: Rng + ?Sized>(
    model: &Model<T>,
    x: &Matrix<T>,
    k: usize,
    n_draws: usize,
    reference: &DistanceReference,
    rng: &mut R,
) -> Result<MetricsReport> {
    if n_draws == 0 {
        return Err(Error::invalid("n_draws must be >= 1"));
    }
    let draws = if model.vae().is_some() { n_draws } else { 1 };
    let rx = RankMatrix::from_distances(&DistanceMatrix::euclidean(x))?;
    let mut scores = Vec::with_capacity(draws);
    for d in 0..draws {
        let z = model.encode_sample(x, rng)?;
        let s = score_embedding(&rx, &z, k, reference)?;
        log::debug!("draw {d}: {s:?}");
        scores.push(s);
    }
    MetricsReport::from_draws(&scores, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dm(rows: &[[f64; 2]]) -> DistanceMatrix<f64> {
        DistanceMatrix::euclidean(&Matrix::from_rows(rows).unwrap())
    }

    #[test]
    fn collinear_ranks() {
        let d = DistanceMatrix::euclidean(&Matrix::from_rows(&[[0.0], [1.0], [3.0]]).unwrap());
        let r = RankMatrix::from_distances(&d).unwrap();
        assert_eq!(r.row(0), &[0, 1, 2]);
        assert_eq!(r.row(1), &[1, 0, 2]);
        assert_eq!(r.row(2), &[2, 1, 0]);
    }

    #[test]
    fn ties_follow_index_order() {
        let n = 6;
        let d = DistanceMatrix::from_matrix(Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 })).unwrap();
        let r = RankMatrix::from_distances(&d).unwrap();
        assert_eq!(r.row(3), &[1, 2, 3, 0, 4, 5]);
        for i in 0..n {
            let s: u32 = r.row(i).iter().sum();
            assert_eq!(s as usize, (n - 1) * n / 2);
        }
        assert!(RankMatrix::from_distances(&DistanceMatrix::euclidean(&Matrix::<f64>::zeros(1, 2))).is_err());
    }

    #[test]
    fn swapped_pair_hand_values() {
        // Points 0..6 on a line; the embedding swaps points 0 and 1.
        let x: Vec<[f64; 2]> = (0..6).map(|i| [i as f64, 0.0]).collect();
        let mut z = x.clone();
        z.swap(0, 1);
        let (dx, dz) = (dm(&x), dm(&z));
        let t = trustworthiness(&dx, &dz, 1).unwrap();
        // Latent nearest neighbours, ties by index: 0->1, 1->0, 2->0 (tied
        // with 3), 3->2, 4->3, 5->4. Only 2->0 is an intruder; data rank of
        // 0 from 2 is 3 (after 1 and 3), penalty 3 - 1 = 2.
        // Scale 2 / (6 * 1 * (12 - 3 - 1)) = 1/24.
        assert!((t - (1.0 - 2.0 / 24.0)).abs() < 1e-15, "{t}");
        assert_eq!(continuity(&dx, &dz, 1).unwrap(), trustworthiness(&dz, &dx, 1).unwrap());
    }

    #[test]
    fn identity_embedding_is_perfect() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::from_fn(40, 3, |_, _| rng.random::<f64>());
        // rotation + translation in the first two coordinates
        let (c, s) = (0.6f64, 0.8f64);
        let z = Matrix::from_fn(40, 3, |i, j| match j {
            0 => c * x[(i, 0)] - s * x[(i, 1)] + 2.0,
            1 => s * x[(i, 0)] + c * x[(i, 1)] - 1.0,
            _ => x[(i, 2)],
        });
        let (dx, dz) = (DistanceMatrix::euclidean(&x), DistanceMatrix::euclidean(&z));
        for k in [1, 5, 9, 19] {
            assert_eq!(trustworthiness(&dx, &dx, k).unwrap(), 1.0);
            assert_eq!(mrre(&dx, &dx, k, MrreDirection::XToZ).unwrap(), 0.0);
            // rotated copy: ranks agree unless roundoff reorders near-ties
            assert!(trustworthiness(&dx, &dz, k).unwrap() > 0.999);
            assert!(mrre(&dx, &dz, k, MrreDirection::ZToX).unwrap() < 1e-3);
        }
    }

    #[test]
    fn k_out_of_range() {
        let d = dm(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0]]);
        assert!(trustworthiness(&d, &d, 2).is_err());
        assert!(trustworthiness(&d, &d, 0).is_err());
        assert!(mrre(&d, &d, 4, MrreDirection::XToZ).is_err());
        assert!(mrre(&d, &d, 3, MrreDirection::XToZ).is_ok());
    }

    #[test]
    fn mrre_normalizer_small_case() {
        // n = 5, k = 2: |5-1|/1 + |5-3|/2 = 5
        assert_eq!(mrre_normalizer(5, 2), 5.0);
    }

    #[test]
    fn pearson_affine_and_errors() {
        let a = [1.0, 2.0, 4.0, 8.0, 9.5];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pearson_r(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let c: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((pearson_r(&a, &c).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson_r(&a, &[1.0; 5]).is_err());
        assert!(pearson_r(&a[..1], &b[..1]).is_err());
        assert!(pearson_r(&a, &b[..4]).is_err());
    }

    #[test]
    fn summary_population_std() {
        let s = Summary::of(&[1.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert_eq!(Summary::of(&[0.25]).std, 0.0);
    }

    #[test]
    fn report_json_keys_and_round_trip() {
        let s = EmbeddingScores {
            mrre_zx: 0.01,
            mrre_xz: 0.02,
            trustworthiness: 0.99,
            continuity: 0.98,
            pearson_r: 0.97,
        };
        let r = MetricsReport::from_draws(&[s, s], 9).unwrap();
        let text = r.to_json();
        let v: BTreeMap<String, serde_json::Value> = serde_json::from_str(&text).unwrap();
        let mut keys: Vec<&str> = v.keys().map(String::as_str).collect();
        let mut want = REPORT_KEYS.to_vec();
        keys.sort_unstable();
        want.sort_unstable();
        assert_eq!(keys, want);
        assert_eq!(MetricsReport::from_json(&text).unwrap(), r);
        assert!(MetricsReport::from_draws(&[], 9).is_err());
    }

    #[test]
    fn reference_points_sorted_and_capped() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = DistanceReference::choose_points(50, 10, &mut rng);
        assert_eq!(p.len(), 10);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(DistanceReference::choose_points(5, 10, &mut rng), vec![0, 1, 2, 3, 4]);
    }
}
