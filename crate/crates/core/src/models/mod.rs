//! Encoders, decoders and learned latent priors.

mod autoencoder;
mod mlp;
mod model;
mod prior;
mod realnvp;
mod vamp;

pub use autoencoder::{Autoencoder, Vae, VaeOutput, LOGVAR_CLAMP};
pub use mlp::{Activation, Mlp, MlpSpec};
pub use model::{Model, ModelKind, ModelSpec, Network, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use prior::{Prior, PriorKind};
pub use realnvp::{Coupling, RealNvpPrior, RealNvpSpec};
pub use vamp::VampPrior;
