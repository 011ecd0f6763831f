use rand::Rng;

use super::mlp::Mlp;
use crate::diffmath::{ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::losses::reparameterize;
use crate::scalar::Real;

/// Posterior log-variance is clamped into this interval.
pub const LOGVAR_CLAMP: (f64, f64) = (-10.0, 10.0);

/// Deterministic encoder/decoder pair.
#[derive(Clone, Debug)]
pub struct Autoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl Autoencoder {
    pub fn new(encoder: Mlp, decoder: Mlp) -> Result<Self> {
        if encoder.spec.output_width() != decoder.spec.input_width() {
            return Err(Error::invalid(format!(
                "encoder emits {} latent dims, decoder takes {}",
                encoder.spec.output_width(),
                decoder.spec.input_width()
            )));
        }
        Ok(Autoencoder { encoder, decoder })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.spec.output_width()
    }

    /// Returns `(Z, Xhat)`, both on the tape.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<(Var, Var)> {
        let z = self.encoder.forward(tape, store, x)?;
        let xhat = self.decoder.forward(tape, store, z)?;
        Ok((z, xhat))
    }
}

/// Gaussian VAE: the encoder emits `[mu | logvar]` of width `2m`.
#[derive(Clone, Debug)]
pub struct Vae {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

#[derive(Clone, Copy, Debug)]
pub struct VaeOutput {
    pub mu: Var,
    pub logvar: Var,
    pub z: Var,
    pub xhat: Var,
}

impl Vae {
    pub fn new(encoder: Mlp, decoder: Mlp) -> Result<Self> {
        let out = encoder.spec.output_width();
        if !out.is_multiple_of(2) || out / 2 != decoder.spec.input_width() {
            return Err(Error::invalid(format!(
                "encoder width {out} must be twice the decoder input width {}",
                decoder.spec.input_width()
            )));
        }
        Ok(Vae { encoder, decoder })
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.spec.input_width()
    }

    /// Posterior parameters `(mu, logvar)` with the clamp applied.
    pub fn encode<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<(Var, Var)> {
        let m = self.latent_dim();
        let h = self.encoder.forward(tape, store, x)?;
        let parts = tape.split_cols(h, &[m, m])?;
        let logvar = tape.clamp(parts[1], LOGVAR_CLAMP.0, LOGVAR_CLAMP.1)?;
        Ok((parts[0], logvar))
    }

    pub fn forward<T: Real, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        rng: &mut R,
    ) -> Result<VaeOutput> {
        let (mu, logvar) = self.encode(tape, store, x)?;
        let z = reparameterize(tape, mu, logvar, rng)?;
        let xhat = self.decoder.forward(tape, store, z)?;
        Ok(VaeOutput { mu, logvar, z, xhat })
    }
}
