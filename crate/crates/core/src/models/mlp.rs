use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::diffmath::{Matrix, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
    Tanh,
    Softsign,
}

impl Activation {
    pub fn apply<T: Real>(self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu => tape.leaky_relu(x, LEAKY_SLOPE),
            Activation::Tanh => tape.tanh(x),
            Activation::Softsign => tape.softsign(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky-relu",
            Activation::Tanh => "tanh",
            Activation::Softsign => "softsign",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => Activation::Identity,
            "relu" => Activation::Relu,
            "leaky-relu" | "leaky_relu" => Activation::LeakyRelu,
            "tanh" => Activation::Tanh,
            "softsign" => Activation::Softsign,
            other => return Err(Error::invalid(format!("unknown activation '{other}'"))),
        })
    }
}

/// Fully connected network layout.
///
/// `widths` lists the input width, each hidden width, then the output
/// width. With `residual` set, hidden layers whose input and output widths
/// agree add their input back after the activation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub output_activation: Activation,
    pub residual: bool,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = MlpSpec {
            widths,
            activation,
            output_activation: Activation::Identity,
            residual: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `input -> hidden^depth -> output`.
    pub fn uniform(input: usize, hidden: usize, depth: usize, output: usize, activation: Activation) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(hidden, depth));
        widths.push(output);
        MlpSpec::new(widths, activation)
    }

    pub fn with_residual(mut self, residual: bool) -> Self {
        self.residual = residual;
        self
    }

    pub fn with_output_activation(mut self, act: Activation) -> Result<Self> {
        if matches!(act, Activation::Relu | Activation::LeakyRelu) {
            return Err(Error::invalid(format!("output activation {act} not supported")));
        }
        self.output_activation = act;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(Error::invalid("an MLP needs at least one hidden layer"));
        }
        if self.widths.contains(&0) {
            return Err(Error::invalid(format!("zero width in {:?}", self.widths)));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Compact text form, e.g. `3-512-512-2 relu/identity res=0`.
    pub fn to_text(&self) -> String {
        let w: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        format!(
            "{} {}/{} res={}",
            w.join("-"),
            self.activation,
            self.output_activation,
            u8::from(self.residual)
        )
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("malformed MLP spec '{s}'"));
        let mut parts = s.split_whitespace();
        let widths = parts
            .next()
            .ok_or_else(bad)?
            .split('-')
            .map(|w| w.parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let (act, out) = parts.next().ok_or_else(bad)?.split_once('/').ok_or_else(bad)?;
        let residual = match parts.next().ok_or_else(bad)? {
            "res=0" => false,
            "res=1" => true,
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        let spec = MlpSpec {
            widths,
            activation: act.parse()?,
            output_activation: out.parse()?,
            residual,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// An MLP whose weights live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub weights: Vec<ParamId>,
    pub biases: Vec<ParamId>,
}

impl Mlp {
    /// Glorot-uniform weights and zero biases.
    pub fn new<T: Real, R: Rng + ?Sized>(name: &str, spec: MlpSpec, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut weights = Vec::with_capacity(spec.num_layers());
        let mut biases = Vec::with_capacity(spec.num_layers());
        for (l, w) in spec.widths.windows(2).enumerate() {
            weights.push(store.add_glorot(format!("{name}.w{l}"), w[0], w[1], rng));
            biases.push(store.add(format!("{name}.b{l}"), Matrix::zeros(1, w[1])));
        }
        Ok(Mlp { spec, weights, biases })
    }

    /// Sets the last layer's weights and biases to zero, so the network
    /// outputs `output_activation(0)` for every input.
    pub fn zero_output_layer<T: Real>(&self, store: &mut ParamStore<T>) {
        let w = *self.weights.last().expect("validated");
        let b = *self.biases.last().expect("validated");
        store.get_mut(w).value.fill(T::zero());
        store.get_mut(b).value.fill(T::zero());
    }

    pub fn params(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [*w, *b])
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let width = tape.shape(x).1;
        if width != self.spec.input_width() {
            return Err(Error::Shape {
                node: x.id(),
                op: "mlp_input",
                detail: format!("input width {width}, network expects {}", self.spec.input_width()),
            });
        }
        let last = self.spec.num_layers() - 1;
        let mut h = x;
        for l in 0..=last {
            let w = tape.param(store, self.weights[l])?;
            let b = tape.param(store, self.biases[l])?;
            let a = tape.matmul(h, w)?;
            let a = tape.add_row(a, b)?;
            if l == last {
                h = self.spec.output_activation.apply(tape, a)?;
            } else {
                let a = self.spec.activation.apply(tape, a)?;
                let skip = self.spec.residual && l > 0 && self.spec.widths[l] == self.spec.widths[l + 1];
                h = if skip { tape.add(a, h)? } else { a };
            }
        }
        Ok(h)
    }

    /// Forward pass on a plain matrix, returning the output values.
    pub fn eval<T: Real>(&self, store: &ParamStore<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone())?;
        let out = self.forward(&mut tape, store, xv)?;
        Ok(tape.value(out).clone())
    }
}
