//! Constrained training: Lagrangian assembly, exponential multiplier
//! updates on smoothed violations, and initial-phase gating.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffmath::{Adam, Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::graphs::{cknn_graph, mst_graph, DistanceMatrix, EdgeSet};
use crate::losses::{
    kl_learned_prior, kl_standard_gaussian, reconstruction_loss, sne_loss, topo_loss, CountMode, TopoLossConfig,
};
use crate::models::{Model, Network, Prior, PriorKind};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Ae,
    Vae,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ae" => Ok(Mode::Ae),
            "vae" => Ok(Mode::Vae),
            _ => Err(Error::invalid(format!("unknown mode '{s}' (ae, vae)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ae => "ae",
            Mode::Vae => "vae",
        })
    }
}

/// Source of the local-structure term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphMethod {
    /// CkNN graphs, intersection edges counted once.
    Cknn,
    /// Minimum spanning trees, intersection edges counted twice.
    Vr,
    /// Fully connected symmetrized-KL loss; no graphs.
    Sne,
    /// No structure term.
    None,
}

impl GraphMethod {
    pub fn name(self) -> &'static str {
        match self {
            GraphMethod::Cknn => "cknn",
            GraphMethod::Vr => "vr",
            GraphMethod::Sne => "sne",
            GraphMethod::None => "none",
        }
    }
}

impl FromStr for GraphMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cknn" => Ok(GraphMethod::Cknn),
            "vr" | "mst" => Ok(GraphMethod::Vr),
            "sne" => Ok(GraphMethod::Sne),
            "none" => Ok(GraphMethod::None),
            _ => Err(Error::invalid(format!("unknown graph method '{s}' (cknn, vr, sne, none)"))),
        }
    }
}

impl fmt::Display for GraphMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bounds, rates and constants of the multiplier dynamics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintConfig {
    pub xi_rec: f64,
    pub xi_topo: f64,
    pub eta_rec: f64,
    pub eta_topo: f64,
    pub alpha: f64,
    pub lambda0_rec: f64,
    pub lambda0_topo: f64,
    pub lambda_max: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        ConstraintConfig {
            xi_rec: 0.0,
            xi_topo: 0.0,
            eta_rec: 0.01,
            eta_topo: 0.01,
            alpha: 0.1,
            lambda0_rec: 1.0,
            lambda0_topo: 1.0,
            lambda_max: 1e4,
        }
    }
}

impl ConstraintConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.alpha <= 1.0
            && self.lambda0_rec > 0.0
            && self.lambda0_topo > 0.0
            && self.lambda_max >= self.lambda0_rec.max(self.lambda0_topo)
            && self.eta_rec >= 0.0
            && self.eta_topo >= 0.0
            && [self.xi_rec, self.xi_topo, self.eta_rec, self.eta_topo, self.lambda_max]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid constraint settings {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    Rec,
    Topo,
}

/// Multipliers, smoothed violations and phase flags.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintState {
    pub cfg: ConstraintConfig,
    pub lambda_rec: f64,
    pub lambda_topo: f64,
    /// `None` until the first violation seeds the average.
    pub c_hat_rec: Option<f64>,
    pub c_hat_topo: Option<f64>,
    pub initial_phase_rec: bool,
    pub initial_phase_topo: bool,
    pub initial_phase_kl: bool,
}

impl ConstraintState {
    pub fn new(cfg: ConstraintConfig, initial_phase_kl: bool) -> Self {
        ConstraintState {
            cfg,
            lambda_rec: cfg.lambda0_rec,
            lambda_topo: cfg.lambda0_topo,
            c_hat_rec: None,
            c_hat_topo: None,
            initial_phase_rec: true,
            initial_phase_topo: true,
            initial_phase_kl,
        }
    }

    /// `c_hat <- (1 - alpha) c_hat + alpha c`, seeded with the first `c`.
    pub fn smooth(&mut self, which: Constraint, c_raw: f64) -> f64 {
        let alpha = self.cfg.alpha;
        let slot = match which {
            Constraint::Rec => &mut self.c_hat_rec,
            Constraint::Topo => &mut self.c_hat_topo,
        };
        let next = match *slot {
            None => c_raw,
            Some(prev) => (1.0 - alpha) * prev + alpha * c_raw,
        };
        *slot = Some(next);
        next
    }

    /// `lambda <- min(lambda * exp(eta * c_hat), lambda_max)`.
    pub fn update_multiplier(&mut self, which: Constraint) {
        let (lambda, eta, c_hat) = match which {
            Constraint::Rec => (&mut self.lambda_rec, self.cfg.eta_rec, self.c_hat_rec),
            Constraint::Topo => (&mut self.lambda_topo, self.cfg.eta_topo, self.c_hat_topo),
        };
        let c = c_hat.unwrap_or(0.0);
        // Keep the multiplier a positive normal number even after long decay.
        *lambda = (*lambda * (eta * c).exp()).min(self.cfg.lambda_max).max(f64::MIN_POSITIVE);
    }

    /// One round of the bookkeeping that precedes the loss: smoothing,
    /// phase flags, then multiplier updates for constraints past their
    /// initial phase. `c_topo` is `None` when there is no topo constraint.
    pub fn observe(&mut self, c_rec: f64, c_topo: Option<f64>) {
        self.smooth(Constraint::Rec, c_rec);
        if c_rec < 0.0 {
            self.initial_phase_rec = false;
        }
        match c_topo {
            Some(c) => {
                self.smooth(Constraint::Topo, c);
                if c < 0.0 {
                    self.initial_phase_topo = false;
                }
            }
            None => self.initial_phase_topo = false,
        }
        if self.initial_phase_kl && !self.initial_phase_rec && !self.initial_phase_topo {
            self.initial_phase_kl = false;
        }
        if !self.initial_phase_rec {
            self.update_multiplier(Constraint::Rec);
        }
        if c_topo.is_some() && !self.initial_phase_topo {
            self.update_multiplier(Constraint::Topo);
        }
    }
}

/// Everything the training loop needs besides the model.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub graph: GraphMethod,
    pub k: usize,
    pub delta: f64,
    pub kernel_delta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    pub constraints: ConstraintConfig,
    /// `None` picks the default for the prior: on for VAMP, off otherwise.
    pub initial_phase_kl: Option<bool>,
    /// Posterior draws per KL estimate for learned priors.
    pub kl_samples: usize,
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Ae,
            graph: GraphMethod::Cknn,
            k: 9,
            delta: 1.0,
            kernel_delta: 1.0,
            batch_size: 256,
            epochs: 10,
            seed: 0,
            lr: 1e-3,
            constraints: ConstraintConfig::default(),
            initial_phase_kl: None,
            kl_samples: 1,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.constraints.validate()?;
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be >= 2"));
        }
        if matches!(self.graph, GraphMethod::Cknn) && (self.k == 0 || self.k >= self.batch_size) {
            return Err(Error::invalid(format!("k = {} must lie in 1..batch_size", self.k)));
        }
        if !(self.delta > 0.0 && self.kernel_delta > 0.0 && self.lr > 0.0) {
            return Err(Error::invalid("delta, kernel_delta and lr must be positive"));
        }
        if self.kl_samples == 0 {
            return Err(Error::invalid("kl_samples must be >= 1"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::invalid("grad_clip must be positive"));
            }
        }
        Ok(())
    }

    pub fn initial_phase_kl_for(&self, prior: PriorKind) -> bool {
        self.initial_phase_kl.unwrap_or(prior == PriorKind::Vamp)
    }
}

/// Per-step losses and state, one history row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_rec: f64,
    pub loss_topo_or_sne: f64,
    pub loss_kl: f64,
    pub lambda_rec: f64,
    pub lambda_topo: f64,
    pub gamma: f64,
    pub phase_rec: bool,
    pub phase_topo: bool,
    pub phase_kl: bool,
}

pub const HISTORY_COLUMNS: [&str; 12] = [
    "step",
    "epoch",
    "loss_total",
    "loss_rec",
    "loss_topo_or_sne",
    "loss_kl",
    "lambda_rec",
    "lambda_topo",
    "gamma",
    "phase_rec",
    "phase_topo",
    "phase_kl",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<StepRecord>,
}

impl History {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{}", HISTORY_COLUMNS.join(","))?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
                r.step,
                r.epoch,
                r.loss_total,
                r.loss_rec,
                r.loss_topo_or_sne,
                r.loss_kl,
                r.lambda_rec,
                r.lambda_topo,
                r.gamma,
                u8::from(r.phase_rec),
                u8::from(r.phase_topo),
                u8::from(r.phase_kl)
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn build_graph<T: Real>(method: GraphMethod, d: &DistanceMatrix<T>, k: usize, delta: f64) -> Result<EdgeSet> {
    match method {
        GraphMethod::Cknn => cknn_graph(d, k, delta),
        GraphMethod::Vr => Ok(mst_graph(d)),
        GraphMethod::Sne | GraphMethod::None => Err(Error::invalid(format!("{method} uses no graphs"))),
    }
}

/// Structure term between a data batch and its latent codes.
fn structure_loss<T: Real>(
    tape: &mut Tape<T>,
    model: &Model<T>,
    cfg: &TrainConfig,
    dx: &DistanceMatrix<T>,
    z: Var,
) -> Result<Option<Var>> {
    match cfg.graph {
        GraphMethod::None => Ok(None),
        GraphMethod::Sne => sne_loss(tape, dx, z, cfg.kernel_delta).map(Some),
        method => {
            let gx = build_graph(method, dx, cfg.k, cfg.delta)?;
            let dz = DistanceMatrix::euclidean(tape.value(z));
            let gz = build_graph(method, &dz, cfg.k, cfg.delta)?;
            let count_mode = if method == GraphMethod::Vr {
                CountMode::IntersectionTwice
            } else {
                CountMode::IntersectionOnce
            };
            let lg = model.gamma.log_gamma_var(tape, &model.store)?;
            topo_loss(tape, dx, z, &gx, &gz, lg, TopoLossConfig { count_mode }).map(Some)
        }
    }
}

/// Losses of one step, before the optimizer update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub total: f64,
    pub rec: f64,
    pub topo_or_sne: f64,
    pub kl: f64,
}

/// One AE step: `L_topo + lambda_rec (L_rec - xi_rec)`, with the structure
/// objective zeroed until the reconstruction constraint first holds. With
/// no structure term the plain reconstruction loss is minimized.
pub fn train_step_ae<T: Real>(
    model: &mut Model<T>,
    state: &mut ConstraintState,
    x: &Matrix<T>,
    cfg: &TrainConfig,
    opt: &Adam,
) -> Result<StepLosses> {
    let ae = match &model.network {
        Network::Ae(ae) => ae,
        Network::Vae(_) => return Err(Error::invalid("train_step_ae needs an AE model")),
    };
    if x.rows() < 2 {
        return Err(Error::invalid("batch needs at least 2 rows"));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone())?;
    let (z, xhat) = ae.forward(&mut tape, &model.store, xv)?;
    let rec = reconstruction_loss(&mut tape, xv, xhat)?;
    let dx = DistanceMatrix::euclidean(x);
    let topo = structure_loss(&mut tape, model, cfg, &dx, z)?;

    let rec_v = tape.scalar(rec).as_f64();
    let topo_v = topo.map(|t| tape.scalar(t).as_f64()).unwrap_or(0.0);
    let loss = match topo {
        None => rec,
        Some(topo) => {
            state.observe(rec_v - state.cfg.xi_rec, None);
            let pen = tape.offset(rec, -state.cfg.xi_rec)?;
            let pen = tape.scale(pen, state.lambda_rec)?;
            if state.initial_phase_rec {
                pen
            } else {
                tape.add(topo, pen)?
            }
        }
    };
    finish_step(model, &tape, loss, cfg, opt)?;
    Ok(StepLosses {
        total: tape.scalar(loss).as_f64(),
        rec: rec_v,
        topo_or_sne: topo_v,
        kl: 0.0,
    })
}

/// One VAE step: `lambda_rec (L_rec - xi_rec) + lambda_topo (L_topo -
/// xi_topo)`, plus the KL once the initial phase is over.
pub fn train_step_vae<T: Real, R: Rng + ?Sized>(
    model: &mut Model<T>,
    state: &mut ConstraintState,
    x: &Matrix<T>,
    cfg: &TrainConfig,
    opt: &Adam,
    rng: &mut R,
) -> Result<StepLosses> {
    let (vae, prior) = match (&model.network, &model.prior) {
        (Network::Vae(v), Some(p)) => (v, p),
        _ => return Err(Error::invalid("train_step_vae needs a VAE model with a prior")),
    };
    if x.rows() < 2 {
        return Err(Error::invalid("batch needs at least 2 rows"));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone())?;
    let out = vae.forward(&mut tape, &model.store, xv, rng)?;
    let rec = reconstruction_loss(&mut tape, xv, out.xhat)?;
    let dx = DistanceMatrix::euclidean(x);
    let topo = structure_loss(&mut tape, model, cfg, &dx, out.z)?;
    let kl = match prior {
        Prior::StandardNormal { .. } => kl_standard_gaussian(&mut tape, out.mu, out.logvar)?,
        p => {
            let store = &model.store;
            kl_learned_prior(
                &mut tape,
                out.mu,
                out.logvar,
                |t, z| p.logprob(t, store, vae, z),
                cfg.kl_samples,
                rng,
            )?
        }
    };

    let rec_v = tape.scalar(rec).as_f64();
    let topo_v = topo.map(|t| tape.scalar(t).as_f64());
    let c = state.cfg;
    state.observe(rec_v - c.xi_rec, topo_v.map(|t| t - c.xi_topo));

    let pen = tape.offset(rec, -c.xi_rec)?;
    let mut loss = tape.scale(pen, state.lambda_rec)?;
    if let Some(topo) = topo {
        let pen = tape.offset(topo, -c.xi_topo)?;
        let pen = tape.scale(pen, state.lambda_topo)?;
        loss = tape.add(loss, pen)?;
    }
    if !state.initial_phase_kl {
        loss = tape.add(loss, kl)?;
    }
    finish_step(model, &tape, loss, cfg, opt)?;
    Ok(StepLosses {
        total: tape.scalar(loss).as_f64(),
        rec: rec_v,
        topo_or_sne: topo_v.unwrap_or(0.0),
        kl: tape.scalar(kl).as_f64(),
    })
}

fn finish_step<T: Real>(model: &mut Model<T>, tape: &Tape<T>, loss: Var, cfg: &TrainConfig, opt: &Adam) -> Result<()> {
    model.store.zero_grads();
    tape.backward_into(loss, &mut model.store)?;
    if let Some(c) = cfg.grad_clip {
        model.store.clip_grad_norm(c);
    }
    opt.step(&mut model.store)
}

/// Mode dispatch for a single step.
pub fn train_step<T: Real, R: Rng + ?Sized>(
    model: &mut Model<T>,
    state: &mut ConstraintState,
    x: &Matrix<T>,
    cfg: &TrainConfig,
    opt: &Adam,
    rng: &mut R,
) -> Result<StepLosses> {
    match cfg.mode {
        Mode::Ae => train_step_ae(model, state, x, cfg, opt),
        Mode::Vae => train_step_vae(model, state, x, cfg, opt, rng),
    }
}

/// Initial constraint state for a model and config.
pub fn initial_state<T: Real>(model: &Model<T>, cfg: &TrainConfig) -> ConstraintState {
    let kl = match cfg.mode {
        Mode::Ae => false,
        Mode::Vae => cfg.initial_phase_kl_for(model.spec.prior),
    };
    ConstraintState::new(cfg.constraints, kl)
}

/// Per-step progress hook: `(record, state)`.
pub type StepHook<'a> = dyn FnMut(&StepRecord, &ConstraintState) + 'a;

/// Trains for `cfg.epochs` epochs of `floor(N / batch_size)` seeded,
/// shuffled batches. Returns the history and the final constraint state.
pub fn train<T: Real>(model: &mut Model<T>, data: &Matrix<T>, cfg: &TrainConfig) -> Result<(History, ConstraintState)> {
    train_with_hook(model, data, cfg, &mut |_, _| {})
}

pub fn train_with_hook<T: Real>(
    model: &mut Model<T>,
    data: &Matrix<T>,
    cfg: &TrainConfig,
    hook: &mut StepHook<'_>,
) -> Result<(History, ConstraintState)> {
    cfg.validate()?;
    let expected = match cfg.mode {
        Mode::Ae => matches!(model.network, Network::Ae(_)),
        Mode::Vae => matches!(model.network, Network::Vae(_)),
    };
    if !expected {
        return Err(Error::invalid(format!("config mode {} does not match the model", cfg.mode)));
    }
    if data.cols() != model.spec.input_dim() {
        return Err(Error::invalid(format!(
            "data has {} columns, model expects {}",
            data.cols(),
            model.spec.input_dim()
        )));
    }
    let n = data.rows();
    if n < cfg.batch_size {
        return Err(Error::invalid(format!("{n} rows is fewer than one batch of {}", cfg.batch_size)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let opt = Adam::with_lr(cfg.lr);
    let mut state = initial_state(model, cfg);
    let mut history = History::default();
    let batches = n / cfg.batch_size;
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for b in 0..batches {
            let idx = &order[b * cfg.batch_size..(b + 1) * cfg.batch_size];
            let x = data.select_rows(idx);
            let losses = train_step(model, &mut state, &x, cfg, &opt, &mut rng).map_err(|e| Error::Step {
                step,
                source: Box::new(e),
            })?;
            let (phase_topo, phase_kl) = match cfg.mode {
                // The AE has no topo constraint; its structure objective is
                // gated by the reconstruction phase.
                Mode::Ae => (state.initial_phase_rec, false),
                Mode::Vae => (state.initial_phase_topo, state.initial_phase_kl),
            };
            let rec = StepRecord {
                step,
                epoch,
                loss_total: losses.total,
                loss_rec: losses.rec,
                loss_topo_or_sne: losses.topo_or_sne,
                loss_kl: losses.kl,
                lambda_rec: state.lambda_rec,
                lambda_topo: state.lambda_topo,
                gamma: model.gamma.gamma(&model.store),
                phase_rec: state.initial_phase_rec,
                phase_topo,
                phase_kl,
            };
            hook(&rec, &state);
            history.records.push(rec);
            step += 1;
        }
        if let Some(r) = history.last() {
            log::info!(
                "epoch {epoch}: total {:.6} rec {:.6} topo {:.6} kl {:.6} lambda_rec {:.4} lambda_topo {:.4} gamma {:.4}",
                r.loss_total,
                r.loss_rec,
                r.loss_topo_or_sne,
                r.loss_kl,
                r.lambda_rec,
                r.lambda_topo,
                r.gamma
            );
        }
    }
    Ok((history, state))
}
