use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LabeledDataset;
use crate::diffmath::Matrix;
use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]` with a mixture weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxComponent {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub weight: f64,
}

/// Two uniform boxes of unequal density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoBoxes {
    pub boxes: [BoxComponent; 2],
}

impl Default for TwoBoxes {
    /// Unit square with 75% of the mass, `[1.5, 2.5] x [0, 1]` with 25%.
    fn default() -> Self {
        TwoBoxes {
            boxes: [
                BoxComponent {
                    x: (0.0, 1.0),
                    y: (0.0, 1.0),
                    weight: 0.75,
                },
                BoxComponent {
                    x: (1.5, 2.5),
                    y: (0.0, 1.0),
                    weight: 0.25,
                },
            ],
        }
    }
}

impl TwoBoxes {
    pub fn contains(&self, p: [f64; 2]) -> Option<usize> {
        self.boxes
            .iter()
            .position(|b| (b.x.0..=b.x.1).contains(&p[0]) && (b.y.0..=b.y.1).contains(&p[1]))
    }
}

pub fn two_boxes(n: usize, seed: u64) -> Result<LabeledDataset<f64>> {
    two_boxes_with(n, seed, &TwoBoxes::default())
}

/// Draws `n` points; metadata column `box` holds the component index.
pub fn two_boxes_with(n: usize, seed: u64, geometry: &TwoBoxes) -> Result<LabeledDataset<f64>> {
    if n < 2 {
        return Err(Error::invalid("two_boxes needs n >= 2"));
    }
    let total: f64 = geometry.boxes.iter().map(|b| b.weight).sum();
    if geometry.boxes.iter().any(|b| b.weight < 0.0 || b.x.0 > b.x.1 || b.y.0 > b.y.1) || total <= 0.0 {
        return Err(Error::invalid(format!("invalid box geometry {geometry:?}")));
    }
    let p0 = geometry.boxes[0].weight / total;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::zeros(n, 2);
    let mut meta = Matrix::zeros(n, 1);
    for i in 0..n {
        let c = usize::from(rng.random::<f64>() >= p0);
        let b = &geometry.boxes[c];
        x[(i, 0)] = rng.random_range(b.x.0..=b.x.1);
        x[(i, 1)] = rng.random_range(b.y.0..=b.y.1);
        meta[(i, 0)] = c as f64;
    }
    LabeledDataset::with_meta(x, meta, vec!["box".into()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{cknn_graph, connected_components, DistanceMatrix};

    #[test]
    fn support_and_labels() {
        let g = TwoBoxes::default();
        let d = two_boxes(2000, 1).unwrap();
        let meta = d.meta.as_ref().unwrap();
        for i in 0..2000 {
            let p = [d.x[(i, 0)], d.x[(i, 1)]];
            assert_eq!(g.contains(p), Some(meta[(i, 0)] as usize));
        }
    }

    #[test]
    fn mass_ratio_three_to_one() {
        let n = 10_000;
        let d = two_boxes(n, 2).unwrap();
        let big = d.meta.unwrap().as_slice().iter().filter(|&&c| c == 0.0).count() as f64;
        let se = (n as f64 * 0.75 * 0.25).sqrt();
        assert!((big - 0.75 * n as f64).abs() <= 3.0 * se, "{big}");
    }

    #[test]
    fn cknn_usually_finds_two_components() {
        // Components of CkNN(k=10, delta=0.9) over 320 points, across seeds.
        let mut twos = 0;
        for seed in 0..20 {
            let d = two_boxes(320, seed).unwrap();
            let g = cknn_graph(&DistanceMatrix::euclidean(&d.x), 10, 0.9).unwrap();
            if connected_components(&g).count == 2 {
                twos += 1;
            }
        }
        assert!(twos >= 15, "{twos}/20");
    }

    #[test]
    fn too_small_is_error() {
        assert!(two_boxes(1, 0).is_err());
    }
}
