use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mlp::{Activation, Mlp, MlpSpec};
use crate::diffmath::{Matrix, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::losses::standard_normal_logprob;
use crate::scalar::Real;

/// Shape of a realNVP flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RealNvpSpec {
    pub dim: usize,
    pub couplings: usize,
    pub hidden: usize,
    pub depth: usize,
}

impl RealNvpSpec {
    /// Six couplings, each conditioner three residual layers of 256.
    pub fn standard(dim: usize) -> Self {
        RealNvpSpec {
            dim,
            couplings: 6,
            hidden: 256,
            depth: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.couplings == 0 || self.hidden == 0 || self.depth == 0 {
            return Err(Error::invalid(format!("degenerate realNVP spec {self:?}")));
        }
        if self.dim > 1 && self.couplings < 2 {
            return Err(Error::invalid("realNVP needs at least two couplings to touch every coordinate"));
        }
        Ok(())
    }
}

/// One affine coupling. Coordinates with `mask[d] == true` pass through and
/// condition the scale and shift of the others.
#[derive(Clone, Debug)]
pub struct Coupling {
    pub mask: Vec<bool>,
    pub net: Mlp,
    pub bound: ParamId,
}

/// Normalizing-flow prior `z = h(eps)`, `eps ~ N(0, I)`.
#[derive(Clone, Debug)]
pub struct RealNvpPrior {
    pub spec: RealNvpSpec,
    pub couplings: Vec<Coupling>,
}

struct MaskRows<T: Real> {
    keep: Matrix<T>,
    free: Matrix<T>,
}

impl Coupling {
    fn mask_rows<T: Real>(&self) -> MaskRows<T> {
        let m = self.mask.len();
        MaskRows {
            keep: Matrix::from_fn(1, m, |_, d| if self.mask[d] { T::one() } else { T::zero() }),
            free: Matrix::from_fn(1, m, |_, d| if self.mask[d] { T::zero() } else { T::one() }),
        }
    }

    /// Masked scale `s` and shift `t` for input `y`; both vanish on the
    /// pass-through coordinates.
    fn scale_shift<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, y: Var) -> Result<(Var, Var)> {
        let m = self.mask.len();
        let rows = self.mask_rows::<T>();
        let keep = tape.constant(rows.keep)?;
        let free = tape.constant(rows.free)?;
        let inp = tape.mul_row(y, keep)?;
        let out = self.net.forward(tape, store, inp)?;
        let parts = tape.split_cols(out, &[m, m])?;
        let bound = tape.param(store, self.bound)?;
        let s = tape.tanh(parts[0])?;
        let s = tape.mul_scalar(s, bound)?;
        let s = tape.mul_row(s, free)?;
        let t = tape.mul_row(parts[1], free)?;
        Ok((s, t))
    }

    /// `z -> eps` direction: `(y - t) * exp(-s)`; returns the output and the
    /// per-row log-determinant `-sum(s)`.
    fn inverse<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, y: Var) -> Result<(Var, Var)> {
        let (s, t) = self.scale_shift(tape, store, y)?;
        let shifted = tape.sub(y, t)?;
        let neg_s = tape.neg(s)?;
        let factor = tape.exp(neg_s)?;
        let out = tape.mul(shifted, factor)?;
        let ld = tape.sum_rows(neg_s)?;
        Ok((out, ld))
    }

    /// `eps -> z` direction: `y * exp(s) + t`.
    fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, y: Var) -> Result<Var> {
        let (s, t) = self.scale_shift(tape, store, y)?;
        let factor = tape.exp(s)?;
        let scaled = tape.mul(y, factor)?;
        tape.add(scaled, t)
    }
}

impl RealNvpPrior {
    /// Builds the flow with zero output layers, so it starts as the identity
    /// map and its density is the standard normal.
    pub fn new<T: Real, R: Rng + ?Sized>(spec: RealNvpSpec, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut couplings = Vec::with_capacity(spec.couplings);
        for c in 0..spec.couplings {
            let mask: Vec<bool> = (0..spec.dim).map(|d| (d + c) % 2 == 0).collect();
            let net_spec = MlpSpec::uniform(spec.dim, spec.hidden, spec.depth, 2 * spec.dim, Activation::Softsign)?
                .with_residual(true);
            let net = Mlp::new(&format!("nvp{c}"), net_spec, store, rng)?;
            net.zero_output_layer(store);
            let bound = store.add(format!("nvp{c}.bound"), Matrix::scalar(T::one()));
            couplings.push(Coupling { mask, net, bound });
        }
        Ok(RealNvpPrior { spec, couplings })
    }

    pub fn params(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.couplings
            .iter()
            .flat_map(|c| c.net.params().chain(std::iter::once(c.bound)))
    }

    fn check_width<T: Real>(&self, tape: &Tape<T>, z: Var) -> Result<()> {
        let w = tape.shape(z).1;
        if w != self.spec.dim {
            return Err(Error::Shape {
                node: z.id(),
                op: "realnvp",
                detail: format!("latent width {w}, flow dimension {}", self.spec.dim),
            });
        }
        Ok(())
    }

    /// Maps `z` to `eps`; returns `(eps, log|det d eps / d z|)` with the
    /// log-determinant as an `n x 1` column.
    pub fn inverse<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, z: Var) -> Result<(Var, Var)> {
        self.check_width(tape, z)?;
        let mut y = z;
        let mut logdet: Option<Var> = None;
        for c in &self.couplings {
            let (out, ld) = c.inverse(tape, store, y)?;
            y = out;
            logdet = Some(match logdet {
                None => ld,
                Some(acc) => tape.add(acc, ld)?,
            });
        }
        Ok((y, logdet.expect("at least one coupling")))
    }

    /// Maps `eps` to `z`.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, eps: Var) -> Result<Var> {
        self.check_width(tape, eps)?;
        let mut y = eps;
        for c in self.couplings.iter().rev() {
            y = c.forward(tape, store, y)?;
        }
        Ok(y)
    }

    /// Per-row `log p(z) = log N(eps(z); 0, I) + log|det d eps / d z|`.
    pub fn logprob<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, z: Var) -> Result<Var> {
        let (eps, logdet) = self.inverse(tape, store, z)?;
        let base = standard_normal_logprob(tape, eps)?;
        tape.add(base, logdet)
    }

    pub fn logprob_values<T: Real>(&self, store: &ParamStore<T>, z: &Matrix<T>) -> Result<Matrix<T>> {
        let mut tape = Tape::new();
        let zv = tape.constant(z.clone())?;
        let lp = self.logprob(&mut tape, store, zv)?;
        Ok(tape.value(lp).clone())
    }

    pub fn forward_values<T: Real>(&self, store: &ParamStore<T>, eps: &Matrix<T>) -> Result<Matrix<T>> {
        let mut tape = Tape::new();
        let e = tape.constant(eps.clone())?;
        let z = self.forward(&mut tape, store, e)?;
        Ok(tape.value(z).clone())
    }

    pub fn inverse_values<T: Real>(&self, store: &ParamStore<T>, z: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        let mut tape = Tape::new();
        let zv = tape.constant(z.clone())?;
        let (e, ld) = self.inverse(&mut tape, store, zv)?;
        Ok((tape.value(e).clone(), tape.value(ld).clone()))
    }

    pub fn sample<T: Real, R: Rng + ?Sized>(&self, store: &ParamStore<T>, n: usize, rng: &mut R) -> Result<Matrix<T>> {
        let eps = Matrix::from_fn(n, self.spec.dim, |_, _| T::lit(StandardNormal.sample(rng)));
        self.forward_values(store, &eps)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::diffmath::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Small flow with every parameter perturbed away from the identity.
    pub(crate) fn random_flow(dim: usize, hidden: usize, seed: u64, scale: f64) -> (RealNvpPrior, ParamStore<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let spec = RealNvpSpec {
            dim,
            couplings: 6,
            hidden,
            depth: 3,
        };
        let flow = RealNvpPrior::new(spec, &mut store, &mut rng).unwrap();
        for cp in &flow.couplings {
            let w = *cp.net.weights.last().unwrap();
            let b = *cp.net.biases.last().unwrap();
            let (r, c) = store.value(w).shape();
            store.get_mut(w).value = Matrix::from_fn(r, c, |_, _| scale * rng.random_range(-1.0..1.0));
            let (r, c) = store.value(b).shape();
            store.get_mut(b).value = Matrix::from_fn(r, c, |_, _| scale * rng.random_range(-1.0..1.0));
            store.get_mut(cp.bound).value = Matrix::scalar(rng.random_range(0.5..1.5));
        }
        (flow, store)
    }

    #[test]
    fn masks_alternate_and_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        let flow = RealNvpPrior::new(RealNvpSpec::standard(3), &mut store, &mut rng).unwrap();
        assert_eq!(flow.couplings.len(), 6);
        for d in 0..3 {
            assert!(flow.couplings.iter().any(|c| !c.mask[d]));
        }
        assert_eq!(flow.couplings[0].mask, vec![true, false, true]);
        assert_eq!(flow.couplings[1].mask, vec![false, true, false]);
    }

    #[test]
    fn identity_flow_is_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f64>::new();
        let flow = RealNvpPrior::new(RealNvpSpec { dim: 2, couplings: 4, hidden: 16, depth: 3 }, &mut store, &mut rng).unwrap();
        let z = Matrix::from_fn(5, 2, |_, _| rng.random_range(-3.0..3.0));
        let lp = flow.logprob_values(&store, &z).unwrap();
        for i in 0..5 {
            let r = z.row(i);
            let expect = -0.5 * (r[0] * r[0] + r[1] * r[1]) - (2.0 * std::f64::consts::PI).ln();
            assert!((lp[(i, 0)] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn round_trip_is_tight() {
        let (flow, store) = random_flow(2, 16, 2, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let eps = Matrix::from_fn(50, 2, |_, _| StandardNormal.sample(&mut rng));
        let z = flow.forward_values(&store, &eps).unwrap();
        let (back, _) = flow.inverse_values(&store, &z).unwrap();
        let err = back.zip_map(&eps, |a, b| (a - b).abs()).max_abs();
        assert!(err <= 1e-12, "{err}");
        // the flow actually moved the points
        assert!(z.zip_map(&eps, |a, b| (a - b).abs()).max_abs() > 0.1);
    }

    #[test]
    fn logdet_matches_numeric_jacobian() {
        let (flow, store) = random_flow(2, 16, 4, 0.5);
        let h = 1e-6;
        for p in [[0.3, -0.2], [1.5, 0.7], [-2.0, 2.5]] {
            let (_, ld) = flow.inverse_values(&store, &Matrix::from_rows(&[p]).unwrap()).unwrap();
            let mut jac = [[0.0; 2]; 2];
            for j in 0..2 {
                let mut a = p;
                let mut b = p;
                a[j] += h;
                b[j] -= h;
                let (ea, _) = flow.inverse_values(&store, &Matrix::from_rows(&[a]).unwrap()).unwrap();
                let (eb, _) = flow.inverse_values(&store, &Matrix::from_rows(&[b]).unwrap()).unwrap();
                for i in 0..2 {
                    jac[i][j] = (ea[(0, i)] - eb[(0, i)]) / (2.0 * h);
                }
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            assert!((ld[(0, 0)] - det.abs().ln()).abs() <= 1e-5, "{} vs {}", ld[(0, 0)], det.abs().ln());
        }
    }

    #[test]
    fn logprob_gradients_match_finite_differences() {
        let (flow, mut store) = random_flow(2, 8, 5, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = Matrix::from_fn(4, 2, |_, _| rng.random_range(-2.0..2.0));
        let zid = store.add("z", z);
        let err = grad_check(&mut store, 1e-6, 12, |t, s| {
            let zv = t.param(s, zid)?;
            let lp = flow.logprob(t, s, zv)?;
            t.mean(lp)
        })
        .unwrap();
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn wrong_width_is_rejected() {
        let (flow, store) = random_flow(2, 8, 7, 0.3);
        assert!(flow.logprob_values(&store, &Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn samples_have_flow_width() {
        let (flow, store) = random_flow(2, 8, 8, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(flow.sample(&store, 7, &mut rng).unwrap().shape(), (7, 2));
    }
}
