//! Differentiable training losses built on the tape.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diffmath::{Matrix, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::graphs::{DistanceMatrix, EdgeSet};
use crate::scalar::Real;

/// Probability floor applied before logs in [`sne_loss`].
pub const PROB_FLOOR: f64 = 1e-12;

/// How edges present in both graphs enter the topological loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CountMode {
    /// Shared edges count once (CkNN graphs).
    #[default]
    IntersectionOnce,
    /// Shared edges count twice (Vietoris-Rips style).
    IntersectionTwice,
}

/// The loss is always the mean over the combined edge multiset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct TopoLossConfig {
    pub count_mode: CountMode,
}

/// Learned latent scale `gamma = exp(log_gamma)`, initialized at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GammaParam {
    pub id: ParamId,
}

impl GammaParam {
    pub fn new<T: Real>(store: &mut ParamStore<T>) -> Self {
        GammaParam {
            id: store.add("log_gamma", Matrix::scalar(T::zero())),
        }
    }

    pub fn gamma<T: Real>(&self, store: &ParamStore<T>) -> f64 {
        store.value(self.id).item().as_f64().exp()
    }

    /// Places `log_gamma` on the tape.
    pub fn log_gamma_var<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> Result<Var> {
        tape.param(store, self.id)
    }
}

/// Combined edge multiset as `(edge, multiplicity)`.
pub fn combined_edges(gx: &EdgeSet, gz: &EdgeSet, mode: CountMode) -> Result<Vec<((usize, usize), u32)>> {
    if gx.n() != gz.n() {
        return Err(Error::invalid(format!(
            "graphs over {} and {} vertices",
            gx.n(),
            gz.n()
        )));
    }
    let shared = match mode {
        CountMode::IntersectionOnce => 1,
        CountMode::IntersectionTwice => 2,
    };
    Ok(gx
        .union(gz)
        .iter()
        .map(|(i, j)| {
            let m = if gx.contains(i, j) && gz.contains(i, j) { shared } else { 1 };
            ((i, j), m)
        })
        .collect())
}

/// Mean over the combined edge multiset of `(d_X - gamma * d_Z)^2`.
///
/// `log_gamma` must be a `1 x 1` node; `z` holds one latent row per batch
/// point.
pub fn topo_loss<T: Real>(
    tape: &mut Tape<T>,
    dx: &DistanceMatrix<T>,
    z: Var,
    gx: &EdgeSet,
    gz: &EdgeSet,
    log_gamma: Var,
    cfg: TopoLossConfig,
) -> Result<Var> {
    let n = tape.shape(z).0;
    if dx.n() != n || gx.n() != n {
        return Err(Error::invalid(format!(
            "batch of {n} latent rows but {} data points and a graph over {}",
            dx.n(),
            gx.n()
        )));
    }
    let edges = combined_edges(gx, gz, cfg.count_mode)?;
    if edges.is_empty() {
        return Err(Error::EmptyEdgeSet);
    }
    let total: u32 = edges.iter().map(|e| e.1).sum();
    let idx: Arc<[(usize, usize)]> = edges.iter().map(|e| e.0).collect();
    let target = Matrix::from_fn(edges.len(), 1, |e, _| {
        let (i, j) = edges[e].0;
        dx.get(i, j)
    });
    let weights = Matrix::from_fn(edges.len(), 1, |e, _| T::lit(edges[e].1 as f64));

    let d2 = tape.pairwise_sqdist(z)?;
    let d2e = tape.gather(d2, idx)?;
    let dz = tape.sqrt(d2e)?;
    let gamma = tape.exp(log_gamma)?;
    let scaled = tape.mul_scalar(dz, gamma)?;
    let target = tape.constant(target)?;
    let diff = tape.sub(target, scaled)?;
    let sq = tape.square(diff)?;
    let weights = tape.constant(weights)?;
    let weighted = tape.mul(sq, weights)?;
    let s = tape.sum(weighted)?;
    tape.scale(s, 1.0 / total as f64)
}

fn cauchy_conditionals(d2: &Matrix<f64>, delta: f64) -> Matrix<f64> {
    let n = d2.rows();
    let inv = 1.0 / (delta * delta);
    let mut p = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 / (1.0 + inv * d2[(i, j)]) });
    for i in 0..n {
        let s: f64 = p.row(i).iter().sum();
        for v in p.row_mut(i) {
            *v /= s;
        }
    }
    p
}

/// Symmetrized KL between per-row Cauchy-kernel neighbour distributions of
/// the data and latent batches.
///
/// The result is `0.5 * sum_i (KL(pX_i || pZ_i) + KL(pZ_i || pX_i))`, which
/// equals `0.5 * sum_ij (p - q) (log p - log q)`. Both distributions are
/// floored at [`PROB_FLOOR`]; the floored diagonal contributes zero.
pub fn sne_loss<T: Real>(tape: &mut Tape<T>, dx: &DistanceMatrix<T>, z: Var, kernel_delta: f64) -> Result<Var> {
    let n = tape.shape(z).0;
    if n < 2 {
        return Err(Error::invalid("SNE loss needs a batch of at least 2"));
    }
    if kernel_delta <= 0.0 || !kernel_delta.is_finite() {
        return Err(Error::invalid(format!("kernel_delta must be positive, got {kernel_delta}")));
    }
    if dx.n() != n {
        return Err(Error::invalid(format!("batch of {n} latent rows but {} data points", dx.n())));
    }
    let dx2 = dx.as_matrix().cast::<f64>().map(|v| v * v);
    let px = cauchy_conditionals(&dx2, kernel_delta).map(|v| v.max(PROB_FLOOR));
    let log_px = px.map(f64::ln);

    let d2 = tape.pairwise_sqdist(z)?;
    let u = tape.scale(d2, 1.0 / (kernel_delta * kernel_delta))?;
    let u = tape.offset(u, 1.0)?;
    let kern = tape.recip(u)?;
    let kern = tape.zero_diag(kern)?;
    let rows = tape.sum_rows(kern)?;
    let q = tape.div_col(kern, rows)?;
    let q = tape.clamp(q, PROB_FLOOR, 1.0)?;
    let log_q = tape.log(q)?;

    let p = tape.constant(px.cast())?;
    let log_p = tape.constant(log_px.cast())?;
    let dp = tape.sub(p, q)?;
    let dl = tape.sub(log_p, log_q)?;
    let prod = tape.mul(dp, dl)?;
    let s = tape.sum(prod)?;
    tape.scale(s, 0.5)
}

/// Squared error summed over features and averaged over the batch.
pub fn reconstruction_loss<T: Real>(tape: &mut Tape<T>, x: Var, xhat: Var) -> Result<Var> {
    let n = tape.shape(x).0;
    let diff = tape.sub(xhat, x)?;
    let sq = tape.square(diff)?;
    let s = tape.sum(sq)?;
    tape.scale(s, 1.0 / n.max(1) as f64)
}

/// `KL(N(mu, diag exp(logvar)) || N(0, I))`, averaged over the batch.
pub fn kl_standard_gaussian<T: Real>(tape: &mut Tape<T>, mu: Var, logvar: Var) -> Result<Var> {
    let n = tape.shape(mu).0;
    let var = tape.exp(logvar)?;
    let mu2 = tape.square(mu)?;
    let a = tape.add(var, mu2)?;
    let b = tape.sub(a, logvar)?;
    let c = tape.offset(b, -1.0)?;
    let s = tape.sum(c)?;
    tape.scale(s, 0.5 / n.max(1) as f64)
}

/// Reparameterized sample `mu + exp(logvar / 2) * eps` with fresh
/// standard-normal `eps`.
pub fn reparameterize<T: Real, R: Rng + ?Sized>(tape: &mut Tape<T>, mu: Var, logvar: Var, rng: &mut R) -> Result<Var> {
    let (r, c) = tape.shape(mu);
    let eps = Matrix::from_fn(r, c, |_, _| T::lit(StandardNormal.sample(rng)));
    let eps = tape.constant(eps)?;
    let half = tape.scale(logvar, 0.5)?;
    let std = tape.exp(half)?;
    let noise = tape.mul(std, eps)?;
    tape.add(mu, noise)
}

/// Monte-Carlo KL against a learned prior.
///
/// `E_q[log q]` is analytic (the negative Gaussian entropy); `E_q[log p]`
/// is averaged over `n_samples` reparameterized draws. `prior_logprob`
/// maps an `n x m` latent node to an `n x 1` column of log densities.
pub fn kl_learned_prior<T, R, F>(
    tape: &mut Tape<T>,
    mu: Var,
    logvar: Var,
    mut prior_logprob: F,
    n_samples: usize,
    rng: &mut R,
) -> Result<Var>
where
    T: Real,
    R: Rng + ?Sized,
    F: FnMut(&mut Tape<T>, Var) -> Result<Var>,
{
    if n_samples == 0 {
        return Err(Error::invalid("kl_learned_prior needs n_samples >= 1"));
    }
    let (n, m) = tape.shape(mu);
    // E_q[log q] = -0.5 * sum_dim (log(2 pi) + 1 + logvar), batch mean.
    let lv_sum = tape.sum(logvar)?;
    let neg_entropy = tape.scale(lv_sum, -0.5 / n as f64)?;
    let neg_entropy = tape.offset(neg_entropy, -0.5 * m as f64 * (1.0 + (2.0 * std::f64::consts::PI).ln()))?;

    let mut total: Option<Var> = None;
    for _ in 0..n_samples {
        let z = reparameterize(tape, mu, logvar, rng)?;
        let lp = prior_logprob(tape, z)?;
        if tape.shape(lp) != (n, 1) {
            return Err(Error::invalid(format!(
                "prior logprob returned {:?}, expected ({n}, 1)",
                tape.shape(lp)
            )));
        }
        let lp = tape.mean(lp)?;
        total = Some(match total {
            None => lp,
            Some(t) => tape.add(t, lp)?,
        });
    }
    let cross = tape.scale(total.expect("n_samples >= 1"), 1.0 / n_samples as f64)?;
    tape.sub(neg_entropy, cross)
}

/// Standard-normal log density per row; `n x 1`.
pub fn standard_normal_logprob<T: Real>(tape: &mut Tape<T>, z: Var) -> Result<Var> {
    let m = tape.shape(z).1;
    let sq = tape.square(z)?;
    let s = tape.sum_rows(sq)?;
    let s = tape.scale(s, -0.5)?;
    tape.offset(s, -0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn eval_topo(x: &Matrix<f64>, z: &Matrix<f64>, gx: &EdgeSet, gz: &EdgeSet, lg: f64, mode: CountMode) -> f64 {
        let mut t = Tape::new();
        let zv = t.constant(z.clone()).unwrap();
        let lg = t.constant_scalar(lg).unwrap();
        let dx = DistanceMatrix::euclidean(x);
        let cfg = TopoLossConfig { count_mode: mode };
        let l = topo_loss(&mut t, &dx, zv, gx, gz, lg, cfg).unwrap();
        t.scalar(l)
    }

    #[test]
    fn topo_single_edge() {
        let x = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let z = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let g = EdgeSet::from_pairs(2, [(0, 1)]).unwrap();
        assert_eq!(eval_topo(&x, &z, &g, &g, 0.0, CountMode::IntersectionOnce), 1.0);
        assert_eq!(eval_topo(&x, &z, &g, &g, 0.0, CountMode::IntersectionTwice), 1.0);
        // gamma = 2 matches exactly
        assert!(eval_topo(&x, &z, &g, &g, 2f64.ln(), CountMode::IntersectionOnce).abs() < 1e-15);
    }

    #[test]
    fn topo_multiset_weights() {
        // x on a line, z compressed by half except point 2
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let z = Matrix::from_rows(&[[0.0], [1.0], [4.0]]).unwrap();
        let gx = EdgeSet::from_pairs(3, [(0, 1), (1, 2)]).unwrap();
        let gz = EdgeSet::from_pairs(3, [(0, 1)]).unwrap();
        // per-edge squared residuals: (0,1) -> 0, (1,2) -> 4
        let once = eval_topo(&x, &z, &gx, &gz, 0.0, CountMode::IntersectionOnce);
        let twice = eval_topo(&x, &z, &gx, &gz, 0.0, CountMode::IntersectionTwice);
        assert!((once - 4.0 / 2.0).abs() < 1e-15);
        assert!((twice - 4.0 / 3.0).abs() < 1e-15);
        // symmetric in which graph contributes the shared edge
        let swapped = eval_topo(&x, &z, &gz, &gx, 0.0, CountMode::IntersectionOnce);
        assert_eq!(once, swapped);
    }

    #[test]
    fn topo_empty_is_error() {
        let x = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let mut t = Tape::new();
        let z = t.constant(x.clone()).unwrap();
        let lg = t.constant_scalar(0.0).unwrap();
        let g = EdgeSet::empty(2);
        let dx = DistanceMatrix::euclidean(&x);
        let r = topo_loss(&mut t, &dx, z, &g, &g, lg, TopoLossConfig::default());
        assert!(matches!(r, Err(Error::EmptyEdgeSet)));
    }

    #[test]
    fn topo_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [CountMode::IntersectionOnce, CountMode::IntersectionTwice] {
            let x = random(8, 3, &mut rng);
            let dx = DistanceMatrix::euclidean(&x);
            let gx = crate::graphs::cknn_graph(&dx, 3, 1.0).unwrap();
            let mut store = ParamStore::new();
            let zid = store.add("z", random(8, 2, &mut rng));
            let gamma = GammaParam::new(&mut store);
            store.get_mut(gamma.id).value = Matrix::scalar(0.3);
            let z0 = store.value(zid).clone();
            let gz = crate::graphs::cknn_graph(&DistanceMatrix::euclidean(&z0), 3, 1.0).unwrap();
            let err = grad_check(&mut store, 1e-6, 64, |t, s| {
                let z = t.param(s, zid)?;
                let lg = gamma.log_gamma_var(t, s)?;
                topo_loss(t, &dx, z, &gx, &gz, lg, TopoLossConfig { count_mode: mode })
            })
            .unwrap();
            assert!(err <= 1e-5, "{mode:?}: {err}");
        }
    }

    fn sne_value(x: &Matrix<f64>, z: &Matrix<f64>, delta: f64) -> f64 {
        let mut t = Tape::new();
        let zv = t.constant(z.clone()).unwrap();
        let l = sne_loss(&mut t, &DistanceMatrix::euclidean(x), zv, delta).unwrap();
        t.scalar(l)
    }

    #[test]
    fn sne_isometric_copy_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(10, 2, &mut rng);
        // rotation by 90 degrees plus a shift
        let z = Matrix::from_fn(10, 2, |i, j| if j == 0 { -x[(i, 1)] + 3.0 } else { x[(i, 0)] });
        assert!(sne_value(&x, &z, 0.7).abs() < 1e-14);
    }

    #[test]
    fn sne_three_point_hand_oracle() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]).unwrap();
        let z = Matrix::from_rows(&[[0.0, 0.0], [0.5, 0.0], [3.0, 0.0]]).unwrap();
        let delta: f64 = 1.5;
        let k = |d2: f64| 1.0 / (1.0 + d2 / (delta * delta));
        let cond = |pts: &[[f64; 2]; 3]| {
            let mut out = [[0.0; 3]; 3];
            for i in 0..3 {
                let mut w = [0.0; 3];
                for j in 0..3 {
                    if i != j {
                        let d2 = (pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2);
                        w[j] = k(d2);
                    }
                }
                let s: f64 = w.iter().sum();
                for j in 0..3 {
                    out[i][j] = w[j] / s;
                }
            }
            out
        };
        let p = cond(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]);
        let q = cond(&[[0.0, 0.0], [0.5, 0.0], [3.0, 0.0]]);
        let mut expect = 0.0;
        for i in 0..3 {
            let mut kl_pq = 0.0;
            let mut kl_qp = 0.0;
            for j in 0..3 {
                if i != j {
                    kl_pq += p[i][j] * (p[i][j] / q[i][j]).ln();
                    kl_qp += q[i][j] * (q[i][j] / p[i][j]).ln();
                }
            }
            expect += 0.5 * (kl_pq + kl_qp);
        }
        let got = sne_value(&x, &z, delta);
        assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
        assert!(got > 0.0);
        // swapping roles gives the same value
        assert!((sne_value(&z, &x, delta) - got).abs() < 1e-12);
    }

    #[test]
    fn sne_rejects_singleton_batch() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let mut t = Tape::new();
        let z = t.constant(x.clone()).unwrap();
        assert!(sne_loss(&mut t, &DistanceMatrix::euclidean(&x), z, 1.0).is_err());
    }

    #[test]
    fn sne_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(8, 3, &mut rng);
        let dx = DistanceMatrix::euclidean(&x);
        let mut store = ParamStore::new();
        let zid = store.add("z", random(8, 2, &mut rng));
        let err = grad_check(&mut store, 1e-6, 64, |t, s| {
            let z = t.param(s, zid)?;
            sne_loss(t, &dx, z, 0.8)
        })
        .unwrap();
        assert!(err <= 1e-5, "{err}");
    }

    fn recon(x: &[&[f64]], xh: &[&[f64]]) -> f64 {
        let mut t = Tape::new();
        let a = t.constant(Matrix::from_rows(x).unwrap()).unwrap();
        let b = t.constant(Matrix::from_rows(xh).unwrap()).unwrap();
        let l = reconstruction_loss(&mut t, a, b).unwrap();
        t.scalar(l)
    }

    #[test]
    fn reconstruction_examples() {
        assert_eq!(recon(&[&[1.0, 2.0]], &[&[1.0, 2.0]]), 0.0);
        assert_eq!(recon(&[&[0.0, 0.0]], &[&[3.0, 4.0]]), 25.0);
        assert_eq!(recon(&[&[0.0; 3], &[0.0; 3]], &[&[1.0, 0.0, 0.0], &[1.0, 1.0, -1.0]]), 2.0);
        let mut t = Tape::<f64>::new();
        let a = t.constant(Matrix::zeros(2, 2)).unwrap();
        let b = t.constant(Matrix::zeros(2, 3)).unwrap();
        assert!(matches!(reconstruction_loss(&mut t, a, b), Err(Error::Shape { .. })));
    }

    fn kl_std(mu: Matrix<f64>, lv: Matrix<f64>) -> f64 {
        let mut t = Tape::new();
        let m = t.constant(mu).unwrap();
        let l = t.constant(lv).unwrap();
        let k = kl_standard_gaussian(&mut t, m, l).unwrap();
        t.scalar(k)
    }

    #[test]
    fn kl_standard_closed_forms() {
        assert_eq!(kl_std(Matrix::zeros(3, 2), Matrix::zeros(3, 2)), 0.0);
        assert_eq!(kl_std(Matrix::scalar(1.0), Matrix::scalar(0.0)), 0.5);
    }

    #[test]
    fn kl_standard_matches_monte_carlo() {
        // Single-row posterior; MC estimate of E_q[log q - log p].
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mu = [0.3, -0.8];
        let lv = [-0.5, 0.4];
        let analytic = kl_std(
            Matrix::from_rows(&[mu]).unwrap(),
            Matrix::from_rows(&[lv]).unwrap(),
        );
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let mut v = 0.0;
            for d in 0..2 {
                let e: f64 = StandardNormal.sample(&mut rng);
                let sd = (0.5 * lv[d]).exp();
                let z = mu[d] + sd * e;
                let log_q = -0.5 * e * e - sd.ln();
                let log_p = -0.5 * z * z;
                v += log_q - log_p;
            }
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - analytic).abs() <= 3.0 * se, "{mean} vs {analytic} (se {se})");
    }

    #[test]
    fn kl_learned_prior_agrees_with_analytic_for_standard_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mu = random(4, 2, &mut rng);
        let lv = random(4, 2, &mut rng);
        let analytic = kl_std(mu.clone(), lv.clone());
        // Estimate spread from independent single-sample estimates.
        let reps = 4000;
        let mut vals = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut t = Tape::new();
            let m = t.constant(mu.clone()).unwrap();
            let l = t.constant(lv.clone()).unwrap();
            let k = kl_learned_prior(&mut t, m, l, standard_normal_logprob, 1, &mut rng).unwrap();
            vals.push(t.scalar(k));
        }
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!((mean - analytic).abs() <= 3.0 * se, "{mean} vs {analytic} (se {se})");
    }

    #[test]
    fn kl_learned_prior_rejects_zero_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = Tape::<f64>::new();
        let m = t.constant(Matrix::zeros(1, 1)).unwrap();
        let l = t.constant(Matrix::zeros(1, 1)).unwrap();
        assert!(kl_learned_prior(&mut t, m, l, standard_normal_logprob, 0, &mut rng).is_err());
    }

    #[test]
    fn kl_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut store = ParamStore::new();
        let mu = store.add("mu", random(5, 3, &mut rng));
        let lv = store.add("lv", random(5, 3, &mut rng));
        let err = grad_check(&mut store, 1e-6, 64, |t, s| {
            let m = t.param(s, mu)?;
            let l = t.param(s, lv)?;
            kl_standard_gaussian(t, m, l)
        })
        .unwrap();
        assert!(err <= 1e-5, "{err}");
        // fixed noise: reseed inside the closure so every evaluation sees
        // the same eps
        let err = grad_check(&mut store, 1e-6, 64, |t, s| {
            let m = t.param(s, mu)?;
            let l = t.param(s, lv)?;
            let mut r = ChaCha8Rng::seed_from_u64(99);
            kl_learned_prior(t, m, l, standard_normal_logprob, 3, &mut r)
        })
        .unwrap();
        assert!(err <= 1e-5, "{err}");
        let x = random(5, 3, &mut rng);
        let xh = store.add("xh", random(5, 3, &mut rng));
        let err = grad_check(&mut store, 1e-6, 64, |t, s| {
            let a = t.constant(x.clone())?;
            let b = t.param(s, xh)?;
            reconstruction_loss(t, a, b)
        })
        .unwrap();
        assert!(err <= 1e-5, "{err}");
    }
}
