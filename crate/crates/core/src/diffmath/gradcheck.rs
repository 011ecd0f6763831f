use super::{ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Compares reverse-mode gradients against central differences.
///
/// `loss` must build a scalar on a fresh tape from the current parameter
/// values. Up to `max_coords` coordinates per parameter are probed (evenly
/// strided when a parameter is larger). Returns the largest
/// `|analytic - numeric| / max(1, |numeric|)` over all probed coordinates.
pub fn grad_check<T, F>(store: &mut ParamStore<T>, h: f64, max_coords: usize, loss: F) -> Result<f64>
where
    T: Real,
    F: Fn(&mut Tape<T>, &ParamStore<T>) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    store.zero_grads();
    let mut tape = Tape::new();
    let out = loss(&mut tape, store)?;
    tape.backward_into(out, store)?;
    let analytic: Vec<Vec<T>> = store.iter().map(|p| p.grad.as_slice().to_vec()).collect();
    store.zero_grads();

    let eval = |store: &ParamStore<T>| -> Result<f64> {
        let mut t = Tape::new();
        let o = loss(&mut t, store)?;
        Ok(t.scalar(o).as_f64())
    };

    let mut worst = 0.0f64;
    let ids: Vec<_> = store.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        let n = store.value(id).len();
        let stride = n.div_ceil(max_coords.max(1)).max(1);
        for k in (0..n).step_by(stride) {
            let orig = store.value(id).as_slice()[k];
            store.get_mut(id).value.as_mut_slice()[k] = orig + T::lit(h);
            let plus = eval(store)?;
            store.get_mut(id).value.as_mut_slice()[k] = orig - T::lit(h);
            let minus = eval(store)?;
            store.get_mut(id).value.as_mut_slice()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi][k].as_f64();
            let err = (a - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn quadratic_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let a = store.add("a", random(3, 4, &mut rng));
        let err = grad_check(&mut store, 1e-5, 100, |t, s| {
            let x = t.param(s, a)?;
            let q = t.square(x)?;
            t.sum(q)
        })
        .unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn tanh_mlp_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let w1 = store.add("w1", random(3, 5, &mut rng));
        let b1 = store.add("b1", random(1, 5, &mut rng));
        let w2 = store.add("w2", random(5, 2, &mut rng));
        let x = random(4, 3, &mut rng);
        let err = grad_check(&mut store, 1e-5, 100, |t, s| {
            let xv = t.constant(x.clone())?;
            let w1 = t.param(s, w1)?;
            let b1 = t.param(s, b1)?;
            let w2 = t.param(s, w2)?;
            let h = t.matmul(xv, w1)?;
            let h = t.add_row(h, b1)?;
            let h = t.tanh(h)?;
            let o = t.matmul(h, w2)?;
            let o = t.tanh(o)?;
            let o = t.square(o)?;
            t.mean(o)
        })
        .unwrap();
        assert!(err <= 1e-5, "{err}");
    }
    #[test]
    fn broadcast_and_reduction_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let a = store.add("a", random(4, 3, &mut rng));
        let r = store.add("r", random(1, 3, &mut rng));
        let c = store.add("c", random(4, 1, &mut rng));
        let err = grad_check(&mut store, 1e-6, 100, |t, s| {
            let a = t.param(s, a)?;
            let r = t.param(s, r)?;
            let c = t.param(s, c)?;
            let m = t.mul_row(a, r)?;
            let o = t.sub_outer(c, r)?;
            let o = t.softsign(o)?;
            let x = t.concat_cols(&[m, o])?;
            let x = t.leaky_relu(x, 0.1)?;
            let l = t.logsumexp_rows(x)?;
            let e = t.exp(a)?;
            let rs = t.sum_rows(e)?;
            let q = t.div_col(e, rs)?;
            let q = t.log(q)?;
            let tq = t.transpose(q)?;
            let sc = t.sum_cols(tq)?;
            let sq = t.square(sc)?;
            let sq = t.offset(sq, 1.0)?;
            let sq = t.sqrt(sq)?;
            let sq = t.recip(sq)?;
            let s1 = t.sum(sq)?;
            let s2 = t.mean(l)?;
            t.add(s1, s2)
        })
        .unwrap();
        assert!(err <= 1e-6, "{err}");
    }
}
