//! Synthetic generators, the Swiss-roll geodesic oracles, CSV I/O and
//! preprocessing.

mod csv_io;
mod grid;
mod swiss_roll;
mod two_boxes;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diffmath::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub use csv_io::{format_value, load_csv, read_csv, save_csv, write_csv};
pub use grid::{swiss_roll_grid_geodesic, GridSpec};
pub use swiss_roll::{
    shoot, swiss_roll, swiss_roll_embed, swiss_roll_geodesic, swiss_roll_geodesic_with, swiss_roll_pair_geodesics,
    Geodesic, ShootingConfig, S_MAX, S_MIN, T_MAX, T_MIN,
};
pub use two_boxes::{two_boxes, two_boxes_with, BoxComponent, TwoBoxes};

/// Feature matrix with optional per-row metadata (ground truth or labels).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T: Real> {
    pub x: Matrix<T>,
    pub meta: Option<Matrix<f64>>,
    pub meta_names: Vec<String>,
}

impl<T: Real> LabeledDataset<T> {
    pub fn new(x: Matrix<T>) -> Self {
        LabeledDataset {
            x,
            meta: None,
            meta_names: Vec::new(),
        }
    }

    pub fn with_meta(x: Matrix<T>, meta: Matrix<f64>, names: Vec<String>) -> Result<Self> {
        if meta.rows() != x.rows() || names.len() != meta.cols() {
            return Err(Error::invalid(format!(
                "metadata {:?} with {} names for {} rows",
                meta.shape(),
                names.len(),
                x.rows()
            )));
        }
        Ok(LabeledDataset {
            x,
            meta: Some(meta),
            meta_names: names,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        LabeledDataset {
            x: self.x.select_rows(idx),
            meta: self.meta.as_ref().map(|m| m.select_rows(idx)),
            meta_names: self.meta_names.clone(),
        }
    }

    /// Metadata column by name.
    pub fn meta_column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.meta_names.iter().position(|n| n == name)?;
        let m = self.meta.as_ref()?;
        Some((0..m.rows()).map(|i| m[(i, k)]).collect())
    }

    pub fn cast<U: Real>(&self) -> LabeledDataset<U> {
        LabeledDataset {
            x: self.x.cast(),
            meta: self.meta.clone(),
            meta_names: self.meta_names.clone(),
        }
    }
}

/// Seeded uniform split; `round(fraction * n)` rows go to training.
pub fn train_test_split<T: Real>(
    d: &LabeledDataset<T>,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let n = d.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * n as f64).round() as usize;
    let (a, b) = idx.split_at(n_train.min(n));
    Ok((d.select(a), d.select(b)))
}

/// Per-feature min-max scaling fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit<T: Real>(x: &Matrix<T>) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::invalid("cannot fit a scaler on no rows"));
        }
        let mut min = vec![f64::INFINITY; x.cols()];
        let mut max = vec![f64::NEG_INFINITY; x.cols()];
        for r in x.iter_rows() {
            for (j, v) in r.iter().enumerate() {
                min[j] = min[j].min(v.as_f64());
                max[j] = max[j].max(v.as_f64());
            }
        }
        for (j, (lo, hi)) in min.iter().zip(&max).enumerate() {
            if lo == hi {
                log::warn!("feature {j} is constant ({lo}); it will be mapped to 0");
            }
        }
        Ok(MinMaxScaler { min, max })
    }

    pub fn transform<T: Real>(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.min.len() {
            return Err(Error::invalid(format!(
                "scaler fitted on {} features, data has {}",
                self.min.len(),
                x.cols()
            )));
        }
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            let range = self.max[j] - self.min[j];
            if range > 0.0 {
                T::lit((x[(i, j)].as_f64() - self.min[j]) / range)
            } else {
                T::zero()
            }
        }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub scale_to_unit: bool,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Scales both splits with training statistics, then adds Gaussian noise to
/// the training split only.
pub fn preprocess<T: Real>(
    train: &LabeledDataset<T>,
    test: Option<&LabeledDataset<T>>,
    cfg: &PreprocessConfig,
) -> Result<(LabeledDataset<T>, Option<LabeledDataset<T>>)> {
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(Error::invalid(format!("noise_sigma {} must be >= 0", cfg.noise_sigma)));
    }
    let mut tr = train.clone();
    let mut te = test.cloned();
    if cfg.scale_to_unit {
        let scaler = MinMaxScaler::fit(&train.x)?;
        tr.x = scaler.transform(&tr.x)?;
        if let Some(t) = te.as_mut() {
            t.x = scaler.transform(&t.x)?;
        }
    }
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for v in tr.x.as_mut_slice() {
            *v += T::lit(normal.sample(&mut rng));
        }
    }
    Ok((tr, te))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> LabeledDataset<f64> {
        let x = Matrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64);
        let meta = Matrix::from_fn(n, 1, |i, _| i as f64);
        LabeledDataset::with_meta(x, meta, vec!["id".into()]).unwrap()
    }

    #[test]
    fn split_sizes_and_partition() {
        let d = toy(10);
        let (a, b) = train_test_split(&d, 0.8, 3).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let mut ids: Vec<f64> = a.meta_column("id").unwrap();
        ids.extend(b.meta_column("id").unwrap());
        ids.sort_by(f64::total_cmp);
        assert_eq!(ids, (0..10).map(|i| i as f64).collect::<Vec<_>>());
        // metadata stays attached to its row
        for i in 0..a.len() {
            let id = a.meta.as_ref().unwrap()[(i, 0)];
            assert_eq!(a.x[(i, 0)], 2.0 * id);
        }
        let (a2, _) = train_test_split(&d, 0.8, 3).unwrap();
        assert_eq!(a, a2);
        assert!(train_test_split(&d, 1.0, 3).is_err());
        assert!(train_test_split(&d, 0.0, 3).is_err());
    }

    #[test]
    fn scaling_uses_training_statistics() {
        let train = LabeledDataset::new(Matrix::from_rows(&[[0.0, 5.0], [2.0, 5.0], [4.0, 5.0]]).unwrap());
        let test = LabeledDataset::new(Matrix::from_rows(&[[6.0, 1.0]]).unwrap());
        let cfg = PreprocessConfig {
            scale_to_unit: true,
            noise_sigma: 0.0,
            seed: 0,
        };
        let (tr, te) = preprocess(&train, Some(&test), &cfg).unwrap();
        assert_eq!(tr.x.as_slice(), &[0.0, 0.0, 0.5, 0.0, 1.0, 0.0]);
        // test data scaled with training min/max, constant feature -> 0
        assert_eq!(te.unwrap().x.as_slice(), &[1.5, 0.0]);
    }

    #[test]
    fn noise_only_on_training_split() {
        let d = crate::datasets::swiss_roll(500, 2).unwrap();
        let (train, test) = train_test_split(&d, 0.8, 1).unwrap();
        let sigma = 0.03;
        let cfg = PreprocessConfig {
            scale_to_unit: true,
            noise_sigma: sigma,
            seed: 5,
        };
        let (tr, te) = preprocess(&train, Some(&test), &cfg).unwrap();
        let clean = preprocess(&train, Some(&test), &PreprocessConfig { noise_sigma: 0.0, ..cfg }).unwrap();
        assert_eq!(te, clean.1);
        assert_ne!(tr.x, clean.0.x);
        for v in clean.0.x.as_slice() {
            assert!((0.0..=1.0).contains(v));
        }
        for v in tr.x.as_slice() {
            assert!(*v >= -5.0 * sigma && *v <= 1.0 + 5.0 * sigma);
        }
    }

    #[test]
    fn negative_noise_rejected() {
        let d = toy(4);
        let cfg = PreprocessConfig {
            scale_to_unit: false,
            noise_sigma: -1.0,
            seed: 0,
        };
        assert!(preprocess(&d, None, &cfg).is_err());
    }
}
