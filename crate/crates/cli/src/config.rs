//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use cknn_ae::models::{ModelKind, ModelSpec, PriorKind, RealNvpSpec};
use cknn_ae::trainer::{Mode, TrainConfig};
#[cfg(test)]
use cknn_ae::trainer::GraphMethod;
use cknn_ae::{Error, Result};

/// Where training and test rows come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    SwissRoll,
    TwoBoxes,
    /// CSV files with a header; the last `meta_columns` columns are metadata.
    Csv {
        train: PathBuf,
        test: Option<PathBuf>,
        meta_columns: usize,
    },
}

impl DatasetSource {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSource::SwissRoll => "swiss-roll",
            DatasetSource::TwoBoxes => "two-boxes",
            DatasetSource::Csv { .. } => "csv",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub n_train: usize,
    pub n_test: usize,
    pub scale: bool,
    pub noise_sigma: f64,

    pub prior: PriorKind,
    pub latent_dim: usize,
    pub hidden: usize,
    pub enc_depth: usize,
    pub dec_depth: usize,
    pub nvp_couplings: usize,
    pub nvp_hidden: usize,
    pub nvp_depth: usize,
    pub vamp_k: usize,

    pub train: TrainConfig,

    pub eval_k: usize,
    /// `None`: 50 for a VAE, 1 for an AE.
    pub n_draws: Option<usize>,
    /// `None`: on whenever the test set carries `t, s` columns.
    pub geodesic: Option<bool>,
    pub pearson_points: usize,
    pub prior_samples: usize,
}

impl Default for ExperimentConfig {
    /// Swiss-roll AE with CkNN graphs at desk scale.
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::SwissRoll,
            n_train: 1 << 14,
            n_test: 2048,
            scale: false,
            noise_sigma: 0.0,
            prior: PriorKind::StandardNormal,
            latent_dim: 2,
            hidden: 512,
            enc_depth: 3,
            dec_depth: 2,
            nvp_couplings: 6,
            nvp_hidden: 256,
            nvp_depth: 3,
            vamp_k: 64,
            train: TrainConfig::default(),
            eval_k: 9,
            n_draws: None,
            geodesic: None,
            pearson_points: 1024,
            prior_samples: 1024,
        }
    }
}

fn parse_value<V: FromStr>(key: &str, v: &str) -> std::result::Result<V, String> {
    v.parse().map_err(|_| format!("bad value '{v}' for '{key}'"))
}

fn parse_bool(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("bad boolean '{v}' for '{key}'")),
    }
}

fn parse_auto<V>(v: &str, f: impl FnOnce(&str) -> std::result::Result<V, String>) -> std::result::Result<Option<V>, String> {
    if v.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        let mut csv_train: Option<PathBuf> = None;
        let mut csv_test: Option<PathBuf> = None;
        let mut meta_columns = 0usize;
        let mut dataset_name = String::from("swiss-roll");
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: ln + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| perr(format!("expected 'key = value', got '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            c.apply(k, v, &mut dataset_name, &mut csv_train, &mut csv_test, &mut meta_columns)
                .map_err(perr)?;
        }
        c.dataset = match dataset_name.as_str() {
            "swiss-roll" => DatasetSource::SwissRoll,
            "two-boxes" => DatasetSource::TwoBoxes,
            "csv" => DatasetSource::Csv {
                train: csv_train.ok_or_else(|| Error::Parse {
                    line: 0,
                    msg: "dataset = csv needs train_csv".into(),
                })?,
                test: csv_test,
                meta_columns,
            },
            other => {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("unknown dataset '{other}' (swiss-roll, two-boxes, csv)"),
                })
            }
        };
        c.validate()?;
        Ok(c)
    }

    fn apply(
        &mut self,
        k: &str,
        v: &str,
        dataset: &mut String,
        csv_train: &mut Option<PathBuf>,
        csv_test: &mut Option<PathBuf>,
        meta_columns: &mut usize,
    ) -> std::result::Result<(), String> {
        let t = &mut self.train;
        let cc = &mut t.constraints;
        match k {
            "dataset" => *dataset = v.to_ascii_lowercase(),
            "train_csv" => *csv_train = Some(PathBuf::from(v)),
            "test_csv" => *csv_test = Some(PathBuf::from(v)),
            "meta_columns" => *meta_columns = parse_value(k, v)?,
            "n_train" => self.n_train = parse_value(k, v)?,
            "n_test" => self.n_test = parse_value(k, v)?,
            "scale" => self.scale = parse_bool(k, v)?,
            "noise_sigma" => self.noise_sigma = parse_value(k, v)?,

            "mode" => t.mode = v.parse().map_err(|e: Error| e.to_string())?,
            "graph" => t.graph = v.parse().map_err(|e: Error| e.to_string())?,
            "prior" => self.prior = v.parse().map_err(|e: Error| e.to_string())?,
            "latent_dim" => self.latent_dim = parse_value(k, v)?,
            "hidden" => self.hidden = parse_value(k, v)?,
            "enc_depth" => self.enc_depth = parse_value(k, v)?,
            "dec_depth" => self.dec_depth = parse_value(k, v)?,
            "nvp_couplings" => self.nvp_couplings = parse_value(k, v)?,
            "nvp_hidden" => self.nvp_hidden = parse_value(k, v)?,
            "nvp_depth" => self.nvp_depth = parse_value(k, v)?,
            "vamp_k" => self.vamp_k = parse_value(k, v)?,

            "k" => t.k = parse_value(k, v)?,
            "delta" => t.delta = parse_value(k, v)?,
            "kernel_delta" => t.kernel_delta = parse_value(k, v)?,
            "batch_size" => t.batch_size = parse_value(k, v)?,
            "epochs" => t.epochs = parse_value(k, v)?,
            "seed" => t.seed = parse_value(k, v)?,
            "lr" => t.lr = parse_value(k, v)?,
            "kl_samples" => t.kl_samples = parse_value(k, v)?,
            "grad_clip" => {
                t.grad_clip = if v.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(parse_value(k, v)?)
                }
            }
            "initial_phase_kl" => t.initial_phase_kl = parse_auto(v, |v| parse_bool(k, v))?,
            "xi_rec" => cc.xi_rec = parse_value(k, v)?,
            "xi_topo" => cc.xi_topo = parse_value(k, v)?,
            "eta_rec" => cc.eta_rec = parse_value(k, v)?,
            "eta_topo" => cc.eta_topo = parse_value(k, v)?,
            "alpha" => cc.alpha = parse_value(k, v)?,
            "lambda0_rec" => cc.lambda0_rec = parse_value(k, v)?,
            "lambda0_topo" => cc.lambda0_topo = parse_value(k, v)?,
            "lambda_max" => cc.lambda_max = parse_value(k, v)?,

            "eval_k" => self.eval_k = parse_value(k, v)?,
            "n_draws" => self.n_draws = parse_auto(v, |v| parse_value(k, v))?,
            "geodesic" => self.geodesic = parse_auto(v, |v| parse_bool(k, v))?,
            "pearson_points" => self.pearson_points = parse_value(k, v)?,
            "prior_samples" => self.prior_samples = parse_value(k, v)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_train < self.train.batch_size {
            return bad("n_train must be at least batch_size");
        }
        if self.n_test < 2 * self.eval_k + 1 {
            return bad("n_test must exceed 2 * eval_k");
        }
        if self.eval_k == 0 {
            return bad("eval_k must be >= 1");
        }
        if self.n_draws == Some(0) {
            return bad("n_draws must be >= 1");
        }
        if self.pearson_points < 2 {
            return bad("pearson_points must be >= 2");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0");
        }
        if self.train.mode == Mode::Vae && self.prior == PriorKind::Vamp && self.vamp_k == 0 {
            return bad("vamp prior needs vamp_k >= 1");
        }
        self.model_spec(3)?;
        Ok(())
    }

    pub fn model_spec(&self, input_dim: usize) -> Result<ModelSpec> {
        let kind = match self.train.mode {
            Mode::Ae => ModelKind::Ae,
            Mode::Vae => ModelKind::Vae,
        };
        let mut spec = ModelSpec::mlp_pair(kind, input_dim, self.latent_dim, self.hidden, self.enc_depth, self.dec_depth)?
            .with_prior(self.prior);
        spec.nvp = RealNvpSpec {
            dim: self.latent_dim,
            couplings: self.nvp_couplings,
            hidden: self.nvp_hidden,
            depth: self.nvp_depth,
        };
        spec.vamp_k = self.vamp_k;
        Ok(spec)
    }

    pub fn n_draws_for(&self, mode: Mode) -> usize {
        match mode {
            Mode::Ae => 1,
            Mode::Vae => self.n_draws.unwrap_or(cknn_ae::metrics::DEFAULT_DRAWS),
        }
    }

    /// Every setting, one per line; parsing the result gives back `self`.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let c = &t.constraints;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("dataset", self.dataset.name().into());
        if let DatasetSource::Csv {
            train,
            test,
            meta_columns,
        } = &self.dataset
        {
            kv("train_csv", train.display().to_string());
            if let Some(p) = test {
                kv("test_csv", p.display().to_string());
            }
            kv("meta_columns", meta_columns.to_string());
        }
        kv("n_train", self.n_train.to_string());
        kv("n_test", self.n_test.to_string());
        kv("scale", self.scale.to_string());
        kv("noise_sigma", format!("{:?}", self.noise_sigma));
        kv("mode", t.mode.to_string());
        kv("graph", t.graph.to_string());
        kv("prior", self.prior.to_string());
        kv("latent_dim", self.latent_dim.to_string());
        kv("hidden", self.hidden.to_string());
        kv("enc_depth", self.enc_depth.to_string());
        kv("dec_depth", self.dec_depth.to_string());
        kv("nvp_couplings", self.nvp_couplings.to_string());
        kv("nvp_hidden", self.nvp_hidden.to_string());
        kv("nvp_depth", self.nvp_depth.to_string());
        kv("vamp_k", self.vamp_k.to_string());
        kv("k", t.k.to_string());
        kv("delta", format!("{:?}", t.delta));
        kv("kernel_delta", format!("{:?}", t.kernel_delta));
        kv("batch_size", t.batch_size.to_string());
        kv("epochs", t.epochs.to_string());
        kv("seed", t.seed.to_string());
        kv("lr", format!("{:?}", t.lr));
        kv("kl_samples", t.kl_samples.to_string());
        kv("grad_clip", t.grad_clip.map_or("none".into(), |g| format!("{g:?}")));
        kv("initial_phase_kl", t.initial_phase_kl.map_or("auto".into(), |b| b.to_string()));
        kv("xi_rec", format!("{:?}", c.xi_rec));
        kv("xi_topo", format!("{:?}", c.xi_topo));
        kv("eta_rec", format!("{:?}", c.eta_rec));
        kv("eta_topo", format!("{:?}", c.eta_topo));
        kv("alpha", format!("{:?}", c.alpha));
        kv("lambda0_rec", format!("{:?}", c.lambda0_rec));
        kv("lambda0_topo", format!("{:?}", c.lambda0_topo));
        kv("lambda_max", format!("{:?}", c.lambda_max));
        kv("eval_k", self.eval_k.to_string());
        kv("n_draws", self.n_draws.map_or("auto".into(), |n| n.to_string()));
        kv("geodesic", self.geodesic.map_or("auto".into(), |b| b.to_string()));
        kv("pearson_points", self.pearson_points.to_string());
        kv("prior_samples", self.prior_samples.to_string());
        s
    }
}
