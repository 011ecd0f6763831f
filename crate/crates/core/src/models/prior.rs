use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::autoencoder::Vae;
use super::realnvp::{RealNvpPrior, RealNvpSpec};
use super::vamp::VampPrior;
use crate::diffmath::{Matrix, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::losses::standard_normal_logprob;
use crate::scalar::Real;

/// Which latent prior a VAE uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    StandardNormal,
    RealNvp,
    Vamp,
}

impl PriorKind {
    pub fn name(self) -> &'static str {
        match self {
            PriorKind::StandardNormal => "gaussian",
            PriorKind::RealNvp => "realnvp",
            PriorKind::Vamp => "vamp",
        }
    }
}

impl fmt::Display for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" | "standard" => Ok(PriorKind::StandardNormal),
            "realnvp" | "nvp" => Ok(PriorKind::RealNvp),
            "vamp" => Ok(PriorKind::Vamp),
            "vhp" => Err(Error::UnsupportedPrior(
                "the hierarchical VHP prior is not implemented".into(),
            )),
            other => Err(Error::UnsupportedPrior(format!("unknown prior '{other}'"))),
        }
    }
}

/// A constructed prior.
#[derive(Clone, Debug)]
pub enum Prior {
    StandardNormal { dim: usize },
    RealNvp(RealNvpPrior),
    Vamp(VampPrior),
}

impl Prior {
    pub fn kind(&self) -> PriorKind {
        match self {
            Prior::StandardNormal { .. } => PriorKind::StandardNormal,
            Prior::RealNvp(_) => PriorKind::RealNvp,
            Prior::Vamp(_) => PriorKind::Vamp,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        match self {
            Prior::StandardNormal { .. } => Vec::new(),
            Prior::RealNvp(f) => f.params().collect(),
            Prior::Vamp(v) => vec![v.pseudo_inputs],
        }
    }

    /// Builds a prior of the given kind. VAMP pseudo-inputs are seeded from
    /// `data` when given, otherwise zeros of width `data_dim`.
    #[allow(clippy::too_many_arguments)]
    pub fn build<T: Real, R: Rng + ?Sized>(
        kind: PriorKind,
        latent_dim: usize,
        data_dim: usize,
        nvp: RealNvpSpec,
        vamp_k: usize,
        data: Option<&Matrix<T>>,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(match kind {
            PriorKind::StandardNormal => Prior::StandardNormal { dim: latent_dim },
            PriorKind::RealNvp => {
                if nvp.dim != latent_dim {
                    return Err(Error::invalid(format!(
                        "flow dimension {} differs from latent dimension {latent_dim}",
                        nvp.dim
                    )));
                }
                Prior::RealNvp(RealNvpPrior::new(nvp, store, rng)?)
            }
            PriorKind::Vamp => match data {
                Some(d) => Prior::Vamp(VampPrior::from_data(vamp_k, d, store, rng)?),
                None => {
                    if vamp_k == 0 {
                        return Err(Error::invalid("VAMP prior needs K >= 1"));
                    }
                    Prior::Vamp(VampPrior::from_rows(Matrix::zeros(vamp_k, data_dim), store))
                }
            },
        })
    }

    /// Per-row log density, `n x 1`.
    pub fn logprob<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, vae: &Vae, z: Var) -> Result<Var> {
        match self {
            Prior::StandardNormal { .. } => standard_normal_logprob(tape, z),
            Prior::RealNvp(f) => f.logprob(tape, store, z),
            Prior::Vamp(v) => v.logprob(tape, store, vae, z),
        }
    }

    pub fn sample<T: Real, R: Rng + ?Sized>(
        &self,
        store: &ParamStore<T>,
        vae: &Vae,
        n: usize,
        rng: &mut R,
    ) -> Result<Matrix<T>> {
        match self {
            Prior::StandardNormal { dim } => Ok(Matrix::from_fn(n, *dim, |_, _| T::lit(StandardNormal.sample(rng)))),
            Prior::RealNvp(f) => f.sample(store, n, rng),
            Prior::Vamp(v) => v.sample(store, vae, n, rng),
        }
    }
}
