//! Dense matrices, a reverse-mode tape, parameters and the Adam optimizer.

mod gradcheck;
mod matrix;
mod param;
mod tape;

pub use gradcheck::grad_check;
pub use matrix::Matrix;
pub use param::{Adam, Param, ParamId, ParamStore};
pub use tape::{logsumexp, pairwise_sqdist, Adjoints, Tape, Var, SQRT_EPS};
