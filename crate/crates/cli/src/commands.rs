//! The four subcommands as library functions.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cknn_ae::datasets::{
    format_value, load_csv, preprocess, save_csv, swiss_roll, swiss_roll_pair_geodesics, train_test_split, two_boxes,
    LabeledDataset, PreprocessConfig,
};
use cknn_ae::diffmath::Matrix;
use cknn_ae::graphs::{bench_graph_build, Builder};
use cknn_ae::metrics::{evaluate_stochastic, upper_triangle, DistanceReference, MetricsReport};
use cknn_ae::models::Model;
use cknn_ae::trainer::{train_with_hook, History};
use cknn_ae::{Error, Result};

use crate::config::{DatasetSource, ExperimentConfig};

pub const CONFIG_FILE: &str = "config.txt";
pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LATENT_FILE: &str = "latent.csv";
pub const PRIOR_SAMPLES_FILE: &str = "prior_samples.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const DIST_PAIRS_FILE: &str = "dist_pairs.csv";
pub const BENCH_FILE: &str = "bench.csv";

/// Seed offset separating the test draw from the training draw.
const TEST_SEED_OFFSET: u64 = 0x5eed_7e57;

// Independent ChaCha streams derived from one seed.
const STREAM_INIT: u64 = 0;
const STREAM_EVAL: u64 = 2;
const STREAM_PRIOR: u64 = 3;

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Raw generated or loaded splits, before preprocessing.
pub fn raw_splits(cfg: &ExperimentConfig) -> Result<(LabeledDataset<f64>, LabeledDataset<f64>)> {
    let seed = cfg.train.seed;
    let test_seed = seed.wrapping_add(TEST_SEED_OFFSET);
    match &cfg.dataset {
        DatasetSource::SwissRoll => Ok((swiss_roll(cfg.n_train, seed)?, swiss_roll(cfg.n_test, test_seed)?)),
        DatasetSource::TwoBoxes => Ok((two_boxes(cfg.n_train, seed)?, two_boxes(cfg.n_test, test_seed)?)),
        DatasetSource::Csv {
            train,
            test,
            meta_columns,
        } => {
            let tr = load_csv(train, true, *meta_columns)?;
            match test {
                Some(p) => Ok((tr, load_csv(p, true, *meta_columns)?)),
                None => train_test_split(&tr, 0.8, seed),
            }
        }
    }
}

/// Preprocessed splits: scaling fitted on train, noise on train only.
pub fn prepared_splits(cfg: &ExperimentConfig) -> Result<(LabeledDataset<f64>, LabeledDataset<f64>)> {
    let (train, test) = raw_splits(cfg)?;
    let pc = PreprocessConfig {
        scale_to_unit: cfg.scale,
        noise_sigma: cfg.noise_sigma,
        seed: cfg.train.seed,
    };
    let (train, test) = preprocess(&train, Some(&test), &pc)?;
    Ok((train, test.expect("test split passed in")))
}

/// Writes `train.csv` and `test.csv` for a generator config.
pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<(PathBuf, PathBuf)> {
    if matches!(cfg.dataset, DatasetSource::Csv { .. }) {
        return Err(Error::InvalidArgument("gen-data needs a generator dataset (swiss-roll, two-boxes)".into()));
    }
    fs::create_dir_all(out)?;
    let (train, test) = raw_splits(cfg)?;
    let (tp, sp) = (out.join("train.csv"), out.join("test.csv"));
    save_csv(&train, &tp, true)?;
    save_csv(&test, &sp, true)?;
    Ok((tp, sp))
}

/// Writes rows of `z` with header `z0, z1, ...` followed by metadata.
fn write_latent(path: &Path, z: &Matrix<f64>, meta: Option<(&Matrix<f64>, &[String])>) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    let mut header: Vec<String> = (0..z.cols()).map(|j| format!("z{j}")).collect();
    if let Some((_, names)) = meta {
        header.extend(names.iter().cloned());
    }
    writeln!(w, "{}", header.join(","))?;
    for i in 0..z.rows() {
        let mut cells: Vec<String> = z.row(i).iter().map(|&v| format_value(v)).collect();
        if let Some((m, _)) = meta {
            cells.extend(m.row(i).iter().map(|&v| format_value(v)));
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub struct TrainOutcome {
    pub model: Model<f64>,
    pub history: History,
    pub run_dir: PathBuf,
}

/// Trains a model and writes the run directory.
pub fn train_run(cfg: &ExperimentConfig, out: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_text())?;
    let (train, test) = prepared_splits(cfg)?;
    let spec = cfg.model_spec(train.x.cols())?;
    let mut init = rng_stream(cfg.train.seed, STREAM_INIT);
    let mut model = Model::new(spec, Some(&train.x), &mut init)?;
    let started = std::time::Instant::now();
    let (history, _) = train_with_hook(&mut model, &train.x, &cfg.train, &mut |r, _| {
        if r.step % 500 == 0 {
            log::debug!("step {} loss {:.6} ({:.1?})", r.step, r.loss_total, started.elapsed());
        }
    })?;
    log::info!("trained {} steps in {:.1?}", history.len(), started.elapsed());
    history.save_csv(&out.join(HISTORY_FILE))?;
    model.save_file(&out.join(CHECKPOINT_FILE))?;

    let z = model.encode_mean(&test.x)?;
    let meta = test.meta.as_ref().map(|m| (m, test.meta_names.as_slice()));
    write_latent(&out.join(LATENT_FILE), &z, meta)?;
    let mut prng = rng_stream(cfg.train.seed, STREAM_PRIOR);
    if let Some(samples) = model.sample_prior(cfg.prior_samples, &mut prng)? {
        write_latent(&out.join(PRIOR_SAMPLES_FILE), &samples, None)?;
    }
    Ok(TrainOutcome {
        model,
        history,
        run_dir: out.to_path_buf(),
    })
}

/// Reads the stored config of a run directory.
pub fn load_run_config(run: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(run.join(CONFIG_FILE))?;
    ExperimentConfig::parse(&text)
}

pub struct EvalOutcome {
    pub report: MetricsReport,
    /// Whether the correlation used ground-truth geodesics.
    pub geodesic: bool,
}

/// Scores a trained run on its test split and writes `metrics.json` (and
/// `dist_pairs.csv` when geodesics are available) into `out`.
pub fn eval_run(run: &Path, out: &Path, test_csv: Option<&Path>, seed: Option<u64>) -> Result<EvalOutcome> {
    let cfg = load_run_config(run)?;
    let model = Model::<f64>::load_file(&run.join(CHECKPOINT_FILE))?;
    let test = match test_csv {
        Some(p) => {
            let meta = match &cfg.dataset {
                DatasetSource::Csv { meta_columns, .. } => *meta_columns,
                DatasetSource::SwissRoll => 2,
                DatasetSource::TwoBoxes => 1,
            };
            let raw = load_csv(p, true, meta)?;
            if cfg.scale || cfg.noise_sigma > 0.0 {
                let (train, _) = raw_splits(&cfg)?;
                let pc = PreprocessConfig {
                    scale_to_unit: cfg.scale,
                    noise_sigma: 0.0,
                    seed: 0,
                };
                preprocess(&train, Some(&raw), &pc)?.1.expect("test split passed in")
            } else {
                raw
            }
        }
        None => prepared_splits(&cfg)?.1,
    };
    if test.x.cols() != model.spec.input_dim() {
        return Err(Error::InvalidArgument(format!(
            "test data has {} columns, model expects {}",
            test.x.cols(),
            model.spec.input_dim()
        )));
    }
    let mut rng = rng_stream(seed.unwrap_or(cfg.train.seed), STREAM_EVAL);
    let points = DistanceReference::choose_points(test.len(), cfg.pearson_points, &mut rng);
    let ts = match (test.meta_column("t"), test.meta_column("s")) {
        (Some(t), Some(s)) if cfg.geodesic != Some(false) => Some((t, s)),
        _ => None,
    };
    if cfg.geodesic == Some(true) && ts.is_none() {
        return Err(Error::InvalidArgument("geodesic = true but the test set has no t, s columns".into()));
    }
    let reference = match &ts {
        Some((t, s)) => {
            let params = Matrix::from_fn(points.len(), 2, |i, j| if j == 0 { t[points[i]] } else { s[points[i]] });
            let started = std::time::Instant::now();
            let distances = swiss_roll_pair_geodesics(&params)?;
            log::info!("{} geodesics in {:.1?}", distances.len(), started.elapsed());
            DistanceReference { points, distances }
        }
        None => DistanceReference::euclidean(&test.x, points),
    };
    fs::create_dir_all(out)?;
    let n_draws = cfg.n_draws_for(cfg.train.mode);
    let report = evaluate_stochastic(&model, &test.x, cfg.eval_k, n_draws, &reference, &mut rng)?;
    fs::write(out.join(METRICS_FILE), report.to_json())?;
    if ts.is_some() {
        let z = model.encode_mean(&test.x)?.select_rows(&reference.points);
        let zd = upper_triangle(&cknn_ae::graphs::DistanceMatrix::euclidean(&z));
        let mut w = std::io::BufWriter::new(fs::File::create(out.join(DIST_PAIRS_FILE))?);
        writeln!(w, "latent_distance,geodesic_distance")?;
        for (a, b) in zd.iter().zip(&reference.distances) {
            writeln!(w, "{},{}", format_value(*a), format_value(*b))?;
        }
        w.flush()?;
    }
    Ok(EvalOutcome {
        report,
        geodesic: ts.is_some(),
    })
}

pub const DEFAULT_BENCH_SIZES: [usize; 6] = [64, 128, 256, 512, 1024, 2048];

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub method: &'static str,
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

/// Times CkNN and MST construction per batch size; writes `bench.csv`.
pub fn bench_graphs(sizes: &[usize], reps: usize, k: usize, seed: u64, out: &Path) -> Result<Vec<BenchRow>> {
    if let Some(&s) = sizes.iter().find(|&&s| s < 2 || s <= k) {
        return Err(Error::InvalidArgument(format!("batch size {s} too small for k = {k}")));
    }
    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for &size in sizes {
        for builder in [Builder::Cknn { k }, Builder::Mst] {
            let t = bench_graph_build(size, builder, reps, seed)?;
            log::info!("{size} {}: {:.3e} s", builder.name(), t.mean_seconds);
            rows.push(BenchRow {
                size,
                method: builder.name(),
                mean_seconds: t.mean_seconds,
                std_seconds: t.std_seconds,
            });
        }
    }
    let mut w = std::io::BufWriter::new(fs::File::create(out.join(BENCH_FILE))?);
    writeln!(w, "size,method,mean_seconds,std_seconds")?;
    for r in &rows {
        writeln!(w, "{},{},{},{}", r.size, r.method, format_value(r.mean_seconds), format_value(r.std_seconds))?;
    }
    w.flush()?;
    Ok(rows)
}
