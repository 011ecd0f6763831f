use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::autoencoder::{Autoencoder, Vae, LOGVAR_CLAMP};
use super::mlp::{Activation, Mlp, MlpSpec};
use super::prior::{Prior, PriorKind};
use super::realnvp::RealNvpSpec;
use crate::diffmath::{Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::losses::GammaParam;
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MPRS";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Ae,
    Vae,
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub encoder: MlpSpec,
    pub decoder: MlpSpec,
    pub prior: PriorKind,
    pub nvp: RealNvpSpec,
    pub vamp_k: usize,
}

impl ModelSpec {
    /// `input -> (hidden)^enc_depth -> latent` and
    /// `latent -> (hidden)^dec_depth -> input` with ReLU. For a VAE the
    /// encoder emits `2 * latent` columns.
    pub fn mlp_pair(
        kind: ModelKind,
        input: usize,
        latent: usize,
        hidden: usize,
        enc_depth: usize,
        dec_depth: usize,
    ) -> Result<Self> {
        let enc_out = match kind {
            ModelKind::Ae => latent,
            ModelKind::Vae => 2 * latent,
        };
        Ok(ModelSpec {
            kind,
            encoder: MlpSpec::uniform(input, hidden, enc_depth, enc_out, Activation::Relu)?,
            decoder: MlpSpec::uniform(latent, hidden, dec_depth, input, Activation::Relu)?,
            prior: PriorKind::StandardNormal,
            nvp: RealNvpSpec::standard(latent),
            vamp_k: 0,
        })
    }

    /// The Swiss-roll layout: three hidden layers of 512 in the encoder,
    /// two in the decoder.
    pub fn swiss_roll(kind: ModelKind, latent: usize) -> Result<Self> {
        Self::mlp_pair(kind, 3, latent, 512, 3, 2)
    }

    pub fn with_prior(mut self, prior: PriorKind) -> Self {
        self.prior = prior;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.input_width()
    }

    pub fn to_text(&self) -> String {
        let kind = match self.kind {
            ModelKind::Ae => "ae",
            ModelKind::Vae => "vae",
        };
        format!(
            "kind = {kind}\nencoder = {}\ndecoder = {}\nprior = {}\nnvp = {} {} {} {}\nvamp_k = {}\n",
            self.encoder.to_text(),
            self.decoder.to_text(),
            self.prior,
            self.nvp.dim,
            self.nvp.couplings,
            self.nvp.hidden,
            self.nvp.depth,
            self.vamp_k
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut encoder = None;
        let mut decoder = None;
        let mut prior = None;
        let mut nvp = None;
        let mut vamp_k = None;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: ln + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| perr(format!("expected 'key = value', got '{line}'")))?;
            let v = v.trim();
            match k.trim() {
                "kind" => {
                    kind = Some(match v {
                        "ae" => ModelKind::Ae,
                        "vae" => ModelKind::Vae,
                        _ => return Err(perr(format!("unknown model kind '{v}'"))),
                    })
                }
                "encoder" => encoder = Some(MlpSpec::from_text(v).map_err(|e| perr(e.to_string()))?),
                "decoder" => decoder = Some(MlpSpec::from_text(v).map_err(|e| perr(e.to_string()))?),
                "prior" => prior = Some(v.parse::<PriorKind>()?),
                "nvp" => {
                    let f: Vec<usize> = v
                        .split_whitespace()
                        .map(|x| x.parse().map_err(|_| perr(format!("bad flow shape '{v}'"))))
                        .collect::<Result<_>>()?;
                    if f.len() != 4 {
                        return Err(perr(format!("flow shape needs 4 numbers, got '{v}'")));
                    }
                    nvp = Some(RealNvpSpec {
                        dim: f[0],
                        couplings: f[1],
                        hidden: f[2],
                        depth: f[3],
                    });
                }
                "vamp_k" => vamp_k = Some(v.parse().map_err(|_| perr(format!("bad vamp_k '{v}'")))?),
                other => return Err(perr(format!("unknown key '{other}'"))),
            }
        }
        let missing = |k: &str| Error::Checkpoint(format!("model spec lacks '{k}'"));
        Ok(ModelSpec {
            kind: kind.ok_or_else(|| missing("kind"))?,
            encoder: encoder.ok_or_else(|| missing("encoder"))?,
            decoder: decoder.ok_or_else(|| missing("decoder"))?,
            prior: prior.ok_or_else(|| missing("prior"))?,
            nvp: nvp.ok_or_else(|| missing("nvp"))?,
            vamp_k: vamp_k.ok_or_else(|| missing("vamp_k"))?,
        })
    }
}

#[derive(Clone, Debug)]
pub enum Network {
    Ae(Autoencoder),
    Vae(Vae),
}

/// Network, prior, latent scale, and the parameters they share.
#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    pub spec: ModelSpec,
    pub network: Network,
    pub prior: Option<Prior>,
    pub gamma: GammaParam,
    pub store: ParamStore<T>,
}

impl<T: Real> Model<T> {
    /// Fresh parameters. `data` seeds VAMP pseudo-inputs when present.
    pub fn new<R: Rng + ?Sized>(spec: ModelSpec, data: Option<&Matrix<T>>, rng: &mut R) -> Result<Self> {
        let mut store = ParamStore::new();
        let encoder = Mlp::new("enc", spec.encoder.clone(), &mut store, rng)?;
        let decoder = Mlp::new("dec", spec.decoder.clone(), &mut store, rng)?;
        let (network, prior) = match spec.kind {
            ModelKind::Ae => (Network::Ae(Autoencoder::new(encoder, decoder)?), None),
            ModelKind::Vae => {
                let vae = Vae::new(encoder, decoder)?;
                let prior = Prior::build(
                    spec.prior,
                    vae.latent_dim(),
                    spec.input_dim(),
                    spec.nvp,
                    spec.vamp_k,
                    data,
                    &mut store,
                    rng,
                )?;
                (Network::Vae(vae), Some(prior))
            }
        };
        let gamma = GammaParam::new(&mut store);
        Ok(Model {
            spec,
            network,
            prior,
            gamma,
            store,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.latent_dim()
    }

    pub fn vae(&self) -> Option<&Vae> {
        match &self.network {
            Network::Vae(v) => Some(v),
            Network::Ae(_) => None,
        }
    }

    pub fn prior_params(&self) -> Vec<ParamId> {
        self.prior.as_ref().map(Prior::params).unwrap_or_default()
    }

    /// Posterior parameters `(mu, logvar)`; for an AE, `logvar` is `None`.
    pub fn posterior(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Option<Matrix<T>>)> {
        match &self.network {
            Network::Ae(ae) => Ok((ae.encoder.eval(&self.store, x)?, None)),
            Network::Vae(vae) => {
                let h = vae.encoder.eval(&self.store, x)?;
                let m = vae.latent_dim();
                let (lo, hi) = (T::lit(LOGVAR_CLAMP.0), T::lit(LOGVAR_CLAMP.1));
                let logvar = h.slice_cols(m, 2 * m).map(|v| v.max(lo).min(hi));
                Ok((h.slice_cols(0, m), Some(logvar)))
            }
        }
    }

    /// Deterministic embedding: `f(x)` for an AE, the posterior mean for a VAE.
    pub fn encode_mean(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.posterior(x)?.0)
    }

    /// One draw `z ~ q(z|x)`; identical to [`Model::encode_mean`] for an AE.
    pub fn encode_sample<R: Rng + ?Sized>(&self, x: &Matrix<T>, rng: &mut R) -> Result<Matrix<T>> {
        let (mu, logvar) = self.posterior(x)?;
        Ok(match logvar {
            None => mu,
            Some(lv) => Matrix::from_fn(mu.rows(), mu.cols(), |i, j| {
                let e: f64 = StandardNormal.sample(rng);
                mu[(i, j)] + (lv[(i, j)] * T::lit(0.5)).exp() * T::lit(e)
            }),
        })
    }

    pub fn decode(&self, z: &Matrix<T>) -> Result<Matrix<T>> {
        match &self.network {
            Network::Ae(ae) => ae.decoder.eval(&self.store, z),
            Network::Vae(vae) => vae.decoder.eval(&self.store, z),
        }
    }

    /// `n` latent samples from the prior; `None` for an AE.
    pub fn sample_prior<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Option<Matrix<T>>> {
        match (&self.prior, self.vae()) {
            (Some(p), Some(vae)) => Ok(Some(p.sample(&self.store, vae, n, rng)?)),
            _ => Ok(None),
        }
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let spec = self.spec.to_text();
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(spec.len() as u32).to_le_bytes())?;
        w.write_all(spec.as_bytes())?;
        w.write_all(&(self.store.len() as u32).to_le_bytes())?;
        for p in self.store.iter() {
            w.write_all(&(p.value.rows() as u32).to_le_bytes())?;
            w.write_all(&(p.value.cols() as u32).to_le_bytes())?;
            for v in p.value.as_slice() {
                w.write_all(&v.as_f64().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.save(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load<Rd: Read>(mut r: Rd) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let len = read_u32(&mut r)? as usize;
        let mut text = vec![0u8; len];
        read_exact(&mut r, &mut text)?;
        let text = String::from_utf8(text).map_err(|_| Error::Checkpoint("spec is not UTF-8".into()))?;
        let spec = ModelSpec::from_text(&text)?;
        // Layout only; every value is overwritten below.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut model = Model::new(spec, None, &mut rng)?;
        let count = read_u32(&mut r)? as usize;
        if count != model.store.len() {
            return Err(Error::Checkpoint(format!(
                "{count} tensors stored, layout has {}",
                model.store.len()
            )));
        }
        for p in model.store.iter_mut() {
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            if (rows, cols) != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} is {rows}x{cols}, expected {:?}",
                    p.name,
                    p.value.shape()
                )));
            }
            let mut buf = [0u8; 8];
            for v in p.value.as_mut_slice() {
                read_exact(&mut r, &mut buf)?;
                *v = T::lit(f64::from_le_bytes(buf));
            }
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(model)
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(f))
    }
}

fn read_exact<Rd: Read>(r: &mut Rd, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("truncated checkpoint".into()),
        _ => Error::Io(e),
    })
}

fn read_u32<Rd: Read>(r: &mut Rd) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
