use rand::Rng;

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Handle to a parameter held in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor with its gradient accumulator and Adam moments.
#[derive(Clone, Debug)]
pub struct Param<T: Real> {
    pub name: String,
    pub value: Matrix<T>,
    pub grad: Matrix<T>,
    m: Matrix<T>,
    v: Matrix<T>,
    step: u64,
}

impl<T: Real> Param<T> {
    fn new(name: String, value: Matrix<T>) -> Self {
        let (r, c) = value.shape();
        Param {
            name,
            grad: Matrix::zeros(r, c),
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
            value,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Owns every parameter of a model, in declaration order.
///
/// Declaration order is also the serialization order of checkpoints.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Real> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix<T>) -> ParamId {
        self.params.push(Param::new(name.into(), value));
        ParamId(self.params.len() - 1)
    }

    /// Glorot-uniform weights: U[-a, a] with a = sqrt(6 / (fan_in + fan_out)).
    pub fn add_glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let value = Matrix::from_fn(fan_in, fan_out, |_, _| T::lit(rng.random_range(-a..=a)));
        self.add(name, value)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix<T> {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.as_slice())
            .map(|g| g.as_f64() * g.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their joint L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm.is_finite() {
            let s = T::lit(max_norm / norm);
            for p in &mut self.params {
                p.grad.as_mut_slice().iter_mut().for_each(|g| *g *= s);
            }
        }
        norm
    }
}

/// Adam optimizer with bias correction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Adam {
            lr,
            ..Adam::default()
        }
    }

    /// Applies one update to every parameter and zeroes the gradients.
    ///
    /// All gradients are checked for finiteness before anything is mutated.
    pub fn step<T: Real>(&self, store: &mut ParamStore<T>) -> Result<()> {
        if let Some(p) = store.params.iter().find(|p| !p.grad.all_finite()) {
            return Err(Error::NonFiniteGradient {
                param: p.name.clone(),
            });
        }
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (one, eps) = (T::one(), T::lit(self.eps));
        for p in &mut store.params {
            p.step += 1;
            let t = p.step as i32;
            let c1 = T::lit(1.0 - self.beta1.powi(t));
            let c2 = T::lit(1.0 - self.beta2.powi(t));
            let lr = T::lit(self.lr);
            let grads = p.grad.as_slice();
            let ms = p.m.as_mut_slice();
            let vs = p.v.as_mut_slice();
            let xs = p.value.as_mut_slice();
            for i in 0..xs.len() {
                let g = grads[i];
                ms[i] = b1 * ms[i] + (one - b1) * g;
                vs[i] = b2 * vs[i] + (one - b2) * g * g;
                let mhat = ms[i] / c1;
                let vhat = vs[i] / c2;
                xs[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
            p.grad.fill(T::zero());
        }
        Ok(())
    }
}
