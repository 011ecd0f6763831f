use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::{swiss_roll_grid_geodesic, GridSpec};
use super::LabeledDataset;
use crate::diffmath::Matrix;
use crate::error::{Error, Result};

pub const T_MIN: f64 = 1.5 * PI;
pub const T_MAX: f64 = 3.0 * PI;
pub const S_MIN: f64 = 0.0;
pub const S_MAX: f64 = 21.0;

/// Embedding of the parameter point `(t, s)`.
#[inline]
pub fn swiss_roll_embed(t: f64, s: f64) -> [f64; 3] {
    [t * t.cos(), s, t * t.sin()]
}

/// `n` i.i.d. points with `(t, s)` uniform on the parameter rectangle; the
/// parameters are kept as metadata columns `t, s`.
pub fn swiss_roll(n: usize, seed: u64) -> Result<LabeledDataset<f64>> {
    if n == 0 {
        return Err(Error::invalid("swiss_roll needs n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::zeros(n, 3);
    let mut meta = Matrix::zeros(n, 2);
    for i in 0..n {
        let t = rng.random_range(T_MIN..=T_MAX);
        let s = rng.random_range(S_MIN..=S_MAX);
        x.row_mut(i).copy_from_slice(&swiss_roll_embed(t, s));
        meta.row_mut(i).copy_from_slice(&[t, s]);
    }
    LabeledDataset::with_meta(x, meta, vec!["t".into(), "s".into()])
}

/// Outcome of a geodesic query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geodesic {
    pub length: f64,
    /// Secant iterations used by the shooting solver.
    pub iterations: usize,
    /// Set when shooting failed and the grid oracle supplied the length.
    pub fallback: bool,
}

/// Shooting-solver settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShootingConfig {
    pub rk4_steps: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        ShootingConfig {
            rk4_steps: 256,
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

/// Right-hand side for state `(t, t', L)` on `u in [0, 1]`: the
/// Euler-Lagrange equation `t t'^2 + (1 + t^2) t'' = 0` of the energy with
/// metric `(1 + t^2) dt^2 + ds^2`, plus the arc-length integrand.
#[inline]
fn rhs(state: [f64; 3], ds2: f64) -> [f64; 3] {
    let [t, v, _] = state;
    let g = 1.0 + t * t;
    [v, -t * v * v / g, (g * v * v + ds2).sqrt()]
}

fn integrate(t0: f64, v0: f64, ds2: f64, steps: usize) -> [f64; 3] {
    let h = 1.0 / steps as f64;
    let mut y = [t0, v0, 0.0];
    let add = |y: [f64; 3], k: [f64; 3], c: f64| [y[0] + c * k[0], y[1] + c * k[1], y[2] + c * k[2]];
    for _ in 0..steps {
        let k1 = rhs(y, ds2);
        let k2 = rhs(add(y, k1, 0.5 * h), ds2);
        let k3 = rhs(add(y, k2, 0.5 * h), ds2);
        let k4 = rhs(add(y, k3, h), ds2);
        for d in 0..3 {
            y[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
    }
    y
}

/// Shooting on the initial slope `t'(0)` with secant updates. Returns the
/// arc length and iteration count, or `None` without convergence.
pub fn shoot(p0: (f64, f64), p1: (f64, f64), cfg: &ShootingConfig) -> Option<(f64, usize)> {
    let (t0, s0) = p0;
    let (t1, s1) = p1;
    let ds2 = (s1 - s0) * (s1 - s0);
    if t0 == t1 {
        // t' = 0 solves the equation; the path is an axial line.
        return Some(((s1 - s0).abs(), 0));
    }
    let miss = |v: f64| {
        let y = integrate(t0, v, ds2, cfg.rk4_steps);
        (y[0] - t1, y[2])
    };
    // Straight line in t, then a slightly steeper second guess.
    let mut va = t1 - t0;
    let (mut fa, la) = miss(va);
    if fa.abs() <= cfg.tolerance {
        return Some((la, 1));
    }
    let mut vb = va * 1.1;
    for it in 1..=cfg.max_iterations {
        let (fb, lb) = miss(vb);
        if !fb.is_finite() {
            return None;
        }
        if fb.abs() <= cfg.tolerance {
            return Some((lb, it + 1));
        }
        let denom = fb - fa;
        if denom == 0.0 {
            return None;
        }
        let vn = vb - fb * (vb - va) / denom;
        va = vb;
        fa = fb;
        vb = vn;
    }
    None
}

fn check_domain(p: (f64, f64)) -> Result<()> {
    let eps = 1e-9;
    if !(T_MIN - eps..=T_MAX + eps).contains(&p.0) || !(S_MIN - eps..=S_MAX + eps).contains(&p.1) {
        return Err(Error::invalid(format!("({}, {}) outside the Swiss-roll parameter domain", p.0, p.1)));
    }
    Ok(())
}

/// Geodesic distance on the Swiss-roll surface between parameter points.
///
/// The `s` component of a geodesic is linear, so only `t(u)` is solved for,
/// by RK4 shooting. Non-convergence falls back to the default grid oracle
/// and sets [`Geodesic::fallback`].
pub fn swiss_roll_geodesic(p0: (f64, f64), p1: (f64, f64)) -> Result<Geodesic> {
    swiss_roll_geodesic_with(p0, p1, &ShootingConfig::default())
}

pub fn swiss_roll_geodesic_with(p0: (f64, f64), p1: (f64, f64), cfg: &ShootingConfig) -> Result<Geodesic> {
    check_domain(p0)?;
    check_domain(p1)?;
    match shoot(p0, p1, cfg) {
        Some((length, iterations)) => Ok(Geodesic {
            length,
            iterations,
            fallback: false,
        }),
        None => {
            log::warn!("geodesic shooting did not converge for {p0:?} -> {p1:?}; using the grid oracle");
            Ok(Geodesic {
                length: swiss_roll_grid_geodesic(p0, p1, &GridSpec::default())?,
                iterations: cfg.max_iterations,
                fallback: true,
            })
        }
    }
}

/// Geodesic distances between all pairs of `params` rows (`t, s`), as the
/// upper triangle in row-major order `(0,1), (0,2), ..., (n-2,n-1)`.
pub fn swiss_roll_pair_geodesics(params: &Matrix<f64>) -> Result<Vec<f64>> {
    let n = params.rows();
    let cfg = ShootingConfig::default();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    let mut fallbacks = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let g = swiss_roll_geodesic_with(
                (params[(i, 0)], params[(i, 1)]),
                (params[(j, 0)], params[(j, 1)]),
                &cfg,
            )?;
            fallbacks += usize::from(g.fallback);
            out.push(g.length);
        }
    }
    if fallbacks > 0 {
        log::warn!("{fallbacks} geodesic pairs used the grid fallback");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed form: the surface is developable, unrolling `t` by the arc
    /// length of the spiral `sigma(t) = (t sqrt(1+t^2) + asinh t) / 2`.
    fn unrolled(p0: (f64, f64), p1: (f64, f64)) -> f64 {
        let sigma = |t: f64| 0.5 * (t * (1.0 + t * t).sqrt() + t.asinh());
        (sigma(p1.0) - sigma(p0.0)).hypot(p1.1 - p0.1)
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn generated_points_lie_on_the_roll() {
        let d = swiss_roll(500, 3).unwrap();
        let meta = d.meta.as_ref().unwrap();
        for i in 0..500 {
            let (t, s) = (meta[(i, 0)], meta[(i, 1)]);
            let r = d.x.row(i);
            assert!((r[0] * r[0] + r[2] * r[2] - t * t).abs() < 1e-12);
            assert_eq!(r[1], s);
            assert!((T_MIN..=T_MAX).contains(&t) && (S_MIN..=S_MAX).contains(&s));
        }
        assert_eq!(swiss_roll(50, 9).unwrap().x, swiss_roll(50, 9).unwrap().x);
    }

    #[test]
    fn axial_pair_is_exact() {
        let g = swiss_roll_geodesic((6.0, 2.0), (6.0, 17.5)).unwrap();
        assert_eq!(g.length, 15.5);
        assert!(!g.fallback);
        assert_eq!(swiss_roll_geodesic((7.0, 3.0), (7.0, 3.0)).unwrap().length, 0.0);
    }

    #[test]
    fn spiral_arc_matches_quadrature() {
        let g = swiss_roll_geodesic((T_MIN, 4.0), (2.0 * PI, 4.0)).unwrap();
        let q = simpson(|t| (1.0 + t * t).sqrt(), T_MIN, 2.0 * PI, 2000);
        assert!((g.length - q).abs() < 1e-8, "{} vs {q}", g.length);
    }

    #[test]
    fn shooting_matches_unrolled_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let p0 = (rng.random_range(T_MIN..T_MAX), rng.random_range(S_MIN..S_MAX));
            let p1 = (rng.random_range(T_MIN..T_MAX), rng.random_range(S_MIN..S_MAX));
            let g = swiss_roll_geodesic(p0, p1).unwrap();
            assert!(!g.fallback);
            assert!(g.iterations <= 20, "{}", g.iterations);
            let exact = unrolled(p0, p1);
            assert!((g.length - exact).abs() <= 1e-7 * exact.max(1.0), "{} vs {exact}", g.length);
            // symmetric and above the chord
            let back = swiss_roll_geodesic(p1, p0).unwrap().length;
            assert!((back - g.length).abs() <= 1e-7 * exact.max(1.0));
            let (a, b) = (swiss_roll_embed(p0.0, p0.1), swiss_roll_embed(p1.0, p1.1));
            let chord = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            assert!(g.length >= chord - 1e-9);
        }
    }

    #[test]
    fn rejects_points_off_domain() {
        assert!(swiss_roll_geodesic((1.0, 0.0), (5.0, 1.0)).is_err());
        assert!(swiss_roll_geodesic((5.0, 0.0), (5.0, 22.0)).is_err());
    }

    #[test]
    fn non_convergence_falls_back_to_grid() {
        let cfg = ShootingConfig {
            rk4_steps: 64,
            tolerance: 1e-8,
            max_iterations: 0,
        };
        let g = swiss_roll_geodesic_with((5.0, 1.0), (8.0, 9.0), &cfg).unwrap();
        assert!(g.fallback);
        let exact = unrolled((5.0, 1.0), (8.0, 9.0));
        assert!((g.length - exact).abs() <= 0.01 * exact);
    }

    #[test]
    fn pair_geodesics_upper_triangle_order() {
        let p = Matrix::from_rows(&[[5.0, 0.0], [5.0, 3.0], [5.0, 10.0]]).unwrap();
        assert_eq!(swiss_roll_pair_geodesics(&p).unwrap(), vec![3.0, 10.0, 7.0]);
    }
}
