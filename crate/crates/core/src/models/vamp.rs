use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::autoencoder::Vae;
use crate::diffmath::{Matrix, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Mixture prior `p(z) = (1/K) sum_k q(z; y_k)` over learned pseudo-inputs
/// `y_k` pushed through the VAE encoder.
#[derive(Clone, Debug)]
pub struct VampPrior {
    pub k: usize,
    pub pseudo_inputs: ParamId,
}

impl VampPrior {
    /// Pseudo-inputs start at `k` distinct random rows of `data`.
    pub fn from_data<T: Real, R: Rng + ?Sized>(
        k: usize,
        data: &Matrix<T>,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("VAMP prior needs K >= 1"));
        }
        if data.rows() < k {
            return Err(Error::invalid(format!("{} data rows cannot seed {k} pseudo-inputs", data.rows())));
        }
        let idx = rand::seq::index::sample(rng, data.rows(), k).into_vec();
        Ok(Self::from_rows(data.select_rows(&idx), store))
    }

    pub fn from_rows<T: Real>(rows: Matrix<T>, store: &mut ParamStore<T>) -> Self {
        let k = rows.rows();
        VampPrior {
            k,
            pseudo_inputs: store.add("vamp.pseudo", rows),
        }
    }

    /// Component means and log-variances, each `K x m`.
    pub fn components<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, vae: &Vae) -> Result<(Var, Var)> {
        if self.k == 0 {
            return Err(Error::invalid("VAMP prior needs K >= 1"));
        }
        let y = tape.param(store, self.pseudo_inputs)?;
        vae.encode(tape, store, y)
    }

    /// `n x K` matrix of per-component Gaussian log densities.
    pub fn component_logprobs<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        vae: &Vae,
        z: Var,
    ) -> Result<Var> {
        let (mu, lv) = self.components(tape, store, vae)?;
        let m = tape.shape(mu).1;
        if tape.shape(z).1 != m {
            return Err(Error::Shape {
                node: z.id(),
                op: "vamp",
                detail: format!("latent width {}, components have {m}", tape.shape(z).1),
            });
        }
        // sum_d (z_d - mu_kd)^2 exp(-lv_kd) from explicit differences
        let mut acc: Option<Var> = None;
        for d in 0..m {
            let zc = tape.slice_cols(z, d, d + 1)?;
            let mc = tape.slice_cols(mu, d, d + 1)?;
            let mr = tape.transpose(mc)?;
            let diff = tape.sub_outer(zc, mr)?;
            let sq = tape.square(diff)?;
            let lc = tape.slice_cols(lv, d, d + 1)?;
            let lr = tape.transpose(lc)?;
            let nl = tape.neg(lr)?;
            let prec = tape.exp(nl)?;
            let term = tape.mul_row(sq, prec)?;
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term)?,
            });
        }
        let lv_sum = tape.sum_rows(lv)?;
        let lv_row = tape.transpose(lv_sum)?;
        let a = tape.add_row(acc.expect("m >= 1"), lv_row)?;
        let a = tape.offset(a, m as f64 * (2.0 * std::f64::consts::PI).ln())?;
        tape.scale(a, -0.5)
    }

    /// Per-row mixture log density, `n x 1`.
    pub fn logprob<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, vae: &Vae, z: Var) -> Result<Var> {
        let comps = self.component_logprobs(tape, store, vae, z)?;
        let lse = tape.logsumexp_rows(comps)?;
        tape.offset(lse, -(self.k as f64).ln())
    }

    /// Uniform component choice, then a draw from that Gaussian.
    pub fn sample<T: Real, R: Rng + ?Sized>(
        &self,
        store: &ParamStore<T>,
        vae: &Vae,
        n: usize,
        rng: &mut R,
    ) -> Result<Matrix<T>> {
        let (mu, lv) = self.component_values(store, vae)?;
        let m = mu.cols();
        let mut out = Matrix::zeros(n, m);
        for i in 0..n {
            let k = rng.random_range(0..self.k);
            for d in 0..m {
                let e: f64 = StandardNormal.sample(rng);
                let sd = (0.5 * lv[(k, d)].as_f64()).exp();
                out[(i, d)] = T::lit(mu[(k, d)].as_f64() + sd * e);
            }
        }
        Ok(out)
    }

    pub fn component_values<T: Real>(&self, store: &ParamStore<T>, vae: &Vae) -> Result<(Matrix<T>, Matrix<T>)> {
        let mut tape = Tape::new();
        let (mu, lv) = self.components(&mut tape, store, vae)?;
        Ok((tape.value(mu).clone(), tape.value(lv).clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::grad_check;
    use crate::models::{Activation, Mlp, MlpSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(k: usize, seed: u64) -> (Vae, VampPrior, ParamStore<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let enc = Mlp::new("enc", MlpSpec::uniform(3, 8, 2, 4, Activation::Tanh).unwrap(), &mut store, &mut rng).unwrap();
        let dec = Mlp::new("dec", MlpSpec::uniform(2, 8, 2, 3, Activation::Tanh).unwrap(), &mut store, &mut rng).unwrap();
        let vae = Vae::new(enc, dec).unwrap();
        let data = Matrix::from_fn(40, 3, |_, _| rng.random_range(-1.0..1.0));
        let prior = VampPrior::from_data(k, &data, &mut store, &mut rng).unwrap();
        (vae, prior, store)
    }

    fn gauss_density(z: &[f64], mu: &[f64], lv: &[f64]) -> f64 {
        z.iter()
            .zip(mu)
            .zip(lv)
            .map(|((z, m), l)| (-(z - m).powi(2) / (2.0 * l.exp())).exp() / (2.0 * std::f64::consts::PI * l.exp()).sqrt())
            .product()
    }

    fn logprob_values(vae: &Vae, prior: &VampPrior, store: &ParamStore<f64>, z: &Matrix<f64>) -> Matrix<f64> {
        let mut t = Tape::new();
        let zv = t.constant(z.clone()).unwrap();
        let lp = prior.logprob(&mut t, store, vae, zv).unwrap();
        t.value(lp).clone()
    }

    #[test]
    fn matches_direct_mixture_sum() {
        let (vae, prior, store) = setup(7, 1);
        let (mu, lv) = prior.component_values(&store, &vae).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = Matrix::from_fn(20, 2, |_, _| rng.random_range(-1.5..1.5));
        let lp = logprob_values(&vae, &prior, &store, &z);
        for i in 0..20 {
            let p: f64 = (0..7).map(|k| gauss_density(z.row(i), mu.row(k), lv.row(k))).sum::<f64>() / 7.0;
            assert!((lp[(i, 0)] - p.ln()).abs() <= 1e-10);
        }
    }

    #[test]
    fn single_component_is_its_gaussian() {
        let (vae, prior, store) = setup(1, 3);
        let (mu, lv) = prior.component_values(&store, &vae).unwrap();
        let z = Matrix::from_rows(&[[0.2, -0.4]]).unwrap();
        let lp = logprob_values(&vae, &prior, &store, &z);
        assert!((lp[(0, 0)] - gauss_density(z.row(0), mu.row(0), lv.row(0)).ln()).abs() < 1e-12);
    }

    #[test]
    fn pseudo_input_permutation_invariance() {
        let (vae, prior, mut store) = setup(6, 4);
        let z = Matrix::from_fn(9, 2, |i, j| (i as f64 * 0.3) - (j as f64 * 0.5));
        let before = logprob_values(&vae, &prior, &store, &z);
        let perm = [3, 0, 5, 1, 4, 2];
        let y = store.value(prior.pseudo_inputs).select_rows(&perm);
        store.get_mut(prior.pseudo_inputs).value = y;
        let after = logprob_values(&vae, &prior, &store, &z);
        for i in 0..9 {
            assert!((before[(i, 0)] - after[(i, 0)]).abs() <= 1e-12);
        }
    }

    #[test]
    fn lse_lower_bound() {
        let (vae, prior, store) = setup(5, 5);
        let z = Matrix::from_fn(6, 2, |i, j| (i + 2 * j) as f64 * 0.25 - 1.0);
        let mut t = Tape::new();
        let zv = t.constant(z).unwrap();
        let comps = prior.component_logprobs(&mut t, &store, &vae, zv).unwrap();
        let lp = prior.logprob(&mut t, &store, &vae, zv).unwrap();
        for i in 0..6 {
            let best = t.value(comps).row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(t.value(lp)[(i, 0)] >= best - 5f64.ln() - 1e-12);
        }
    }

    #[test]
    fn zero_components_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        assert!(VampPrior::from_data(0, &Matrix::zeros(3, 3), &mut store, &mut rng).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (vae, prior, mut store) = setup(4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let zid = store.add("z", Matrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0)));
        let err = grad_check(&mut store, 1e-6, 12, |t, s| {
            let z = t.param(s, zid)?;
            let lp = prior.logprob(t, s, &vae, z)?;
            t.mean(lp)
        })
        .unwrap();
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn sample_component_frequencies_uniform() {
        // Components far apart so each draw is attributable.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut store = ParamStore::<f64>::new();
        let enc = Mlp::new("enc", MlpSpec::uniform(1, 4, 1, 2, Activation::Relu).unwrap(), &mut store, &mut rng).unwrap();
        let dec = Mlp::new("dec", MlpSpec::uniform(1, 4, 1, 1, Activation::Relu).unwrap(), &mut store, &mut rng).unwrap();
        // encoder: mu = 10 * y, logvar = -10 (relu hidden passes y >= 0)
        store.get_mut(enc.weights[0]).value = Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0]]).unwrap();
        store.get_mut(enc.weights[1]).value = Matrix::from_rows(&[[10.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]).unwrap();
        store.get_mut(enc.biases[1]).value = Matrix::from_rows(&[[0.0, -10.0]]).unwrap();
        let vae = Vae::new(enc, dec).unwrap();
        let prior = VampPrior::from_rows(Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap(), &mut store);
        let n = 10_000;
        let s = prior.sample(&store, &vae, n, &mut rng).unwrap();
        assert_eq!(s.shape(), (n, 1));
        let mut counts = [0usize; 4];
        for v in s.as_slice() {
            counts[(v / 10.0).round() as usize] += 1;
        }
        let p: f64 = 0.25;
        let se = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * se, "{counts:?}");
        }
    }
}
