use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{cknn_graph, mst_graph, DistanceMatrix};
use crate::diffmath::Matrix;
use crate::error::{Error, Result};

/// Graph construction method timed by [`bench_graph_build`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builder {
    Cknn { k: usize },
    Mst,
}

impl Builder {
    pub fn name(&self) -> &'static str {
        match self {
            Builder::Cknn { .. } => "cknn",
            Builder::Mst => "mst",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchTiming {
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

/// Default repetitions per measurement.
pub const BENCH_REPS: usize = 20;

/// Input dimension of the standard-normal benchmark points.
pub const BENCH_DIM: usize = 16;

/// Times graph construction from a precomputed distance matrix on i.i.d.
/// standard-normal points. The distance computation is excluded; a fresh
/// batch is drawn for every repetition.
pub fn bench_graph_build(n_batch: usize, builder: Builder, reps: usize, seed: u64) -> Result<BenchTiming> {
    if n_batch < 2 || reps == 0 {
        return Err(Error::invalid("benchmark needs n_batch >= 2 and reps >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = Vec::with_capacity(reps);
    let mut sink = 0usize;
    for _ in 0..reps {
        let x = Matrix::<f64>::from_fn(n_batch, BENCH_DIM, |_, _| StandardNormal.sample(&mut rng));
        let d = DistanceMatrix::euclidean(&x);
        let start = Instant::now();
        let g = match builder {
            Builder::Cknn { k } => cknn_graph(&d, k.min(n_batch - 1), 1.0)?,
            Builder::Mst => mst_graph(&d),
        };
        times.push(start.elapsed().as_secs_f64());
        sink = sink.wrapping_add(g.len());
    }
    std::hint::black_box(sink);
    let mean = times.iter().sum::<f64>() / reps as f64;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / reps as f64;
    Ok(BenchTiming {
        mean_seconds: mean,
        std_seconds: var.sqrt(),
    })
}
