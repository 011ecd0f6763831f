use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::swiss_roll::{swiss_roll_embed, S_MAX, S_MIN, T_MAX, T_MIN};
use crate::error::{Error, Result};

/// Discretization for the grid geodesic oracle.
///
/// Nodes sit on an `nt x ns` lattice over the parameter rectangle. Each
/// node links to the nodes at every primitive offset `(a, b)` with
/// `|a| <= reach_t`, `|b| <= reach_s`; reach `(1, 1)` is the plain
/// 8-neighbour lattice. Edge lengths are embedded Euclidean chords.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub nt: usize,
    pub ns: usize,
    pub reach_t: usize,
    pub reach_s: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            nt: 400,
            ns: 100,
            reach_t: 16,
            reach_s: 4,
        }
    }
}

impl GridSpec {
    pub fn eight_neighbour(nt: usize, ns: usize) -> Self {
        GridSpec {
            nt,
            ns,
            reach_t: 1,
            reach_s: 1,
        }
    }

    fn offsets(&self) -> Vec<(isize, isize)> {
        let (rt, rs) = (self.reach_t as isize, self.reach_s as isize);
        let mut out = Vec::new();
        for a in -rt..=rt {
            for b in -rs..=rs {
                if (a, b) != (0, 0) && gcd(a.unsigned_abs(), b.unsigned_abs()) == 1 {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Shortest path between two parameter points on the discretized surface.
///
/// Endpoints need not be lattice nodes: each is attached to every lattice
/// node within one reach window of its cell.
pub fn swiss_roll_grid_geodesic(p0: (f64, f64), p1: (f64, f64), grid: &GridSpec) -> Result<f64> {
    if grid.nt < 50 || grid.ns < 20 {
        return Err(Error::invalid(format!("grid {}x{} is below the 50x20 minimum", grid.nt, grid.ns)));
    }
    if grid.reach_t == 0 || grid.reach_s == 0 {
        return Err(Error::invalid("grid reach must be at least 1"));
    }
    if p0 == p1 {
        return Ok(0.0);
    }
    let (nt, ns) = (grid.nt, grid.ns);
    let dt = (T_MAX - T_MIN) / (nt - 1) as f64;
    let ds = (S_MAX - S_MIN) / (ns - 1) as f64;
    let pos: Vec<[f64; 3]> = (0..nt * ns)
        .map(|k| swiss_roll_embed(T_MIN + (k / ns) as f64 * dt, S_MIN + (k % ns) as f64 * ds))
        .collect();

    // Fractional lattice coordinates and attachment windows.
    let frac = |p: (f64, f64)| ((p.0 - T_MIN) / dt, (p.1 - S_MIN) / ds);
    let window = |p: (f64, f64)| {
        let (fi, fj) = frac(p);
        let clampi = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
        let i0 = clampi(fi.floor() - grid.reach_t as f64, nt - 1);
        let i1 = clampi(fi.floor() + 1.0 + grid.reach_t as f64, nt - 1);
        let j0 = clampi(fj.floor() - grid.reach_s as f64, ns - 1);
        let j1 = clampi(fj.floor() + 1.0 + grid.reach_s as f64, ns - 1);
        (i0, i1, j0, j1)
    };
    let (src_pos, dst_pos) = (swiss_roll_embed(p0.0, p0.1), swiss_roll_embed(p1.0, p1.1));
    let (di0, di1, dj0, dj1) = window(p1);
    let in_dst_window = |k: usize| {
        let (i, j) = (k / ns, k % ns);
        (di0..=di1).contains(&i) && (dj0..=dj1).contains(&j)
    };

    let n = nt * ns;
    let dst = n + 1;
    let mut best = vec![f64::INFINITY; n + 2];
    let mut heap = BinaryHeap::new();
    let (si0, si1, sj0, sj1) = window(p0);
    for i in si0..=si1 {
        for j in sj0..=sj1 {
            let k = i * ns + j;
            best[k] = dist(src_pos, pos[k]);
            heap.push(Item(best[k], k));
        }
    }
    let (f0, f1) = (frac(p0), frac(p1));
    if (f0.0 - f1.0).abs() <= (grid.reach_t + 1) as f64 && (f0.1 - f1.1).abs() <= (grid.reach_s + 1) as f64 {
        best[dst] = dist(src_pos, dst_pos);
        heap.push(Item(best[dst], dst));
    }

    let offsets = grid.offsets();
    while let Some(Item(du, u)) = heap.pop() {
        if u == dst {
            return Ok(du);
        }
        if du > best[u] {
            continue;
        }
        let (ui, uj) = ((u / ns) as isize, (u % ns) as isize);
        for &(a, b) in &offsets {
            let (vi, vj) = (ui + a, uj + b);
            if vi < 0 || vj < 0 || vi >= nt as isize || vj >= ns as isize {
                continue;
            }
            let v = vi as usize * ns + vj as usize;
            let nd = du + dist(pos[u], pos[v]);
            if nd < best[v] {
                best[v] = nd;
                heap.push(Item(nd, v));
            }
        }
        if in_dst_window(u) {
            let nd = du + dist(pos[u], dst_pos);
            if nd < best[dst] {
                best[dst] = nd;
                heap.push(Item(nd, dst));
            }
        }
    }
    Err(Error::Numeric {
        what: "grid geodesic: target unreachable".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unrolled(p0: (f64, f64), p1: (f64, f64)) -> f64 {
        let sigma = |t: f64| 0.5 * (t * (1.0 + t * t).sqrt() + t.asinh());
        (sigma(p1.0) - sigma(p0.0)).hypot(p1.1 - p0.1)
    }

    #[test]
    fn primitive_offsets() {
        let g = GridSpec::eight_neighbour(50, 20);
        assert_eq!(g.offsets().len(), 8);
        let g = GridSpec {
            reach_t: 2,
            reach_s: 2,
            ..g
        };
        // 24 nonzero offsets minus (0,+-2), (+-2,0), (+-2,+-2)
        assert_eq!(g.offsets().len(), 16);
    }

    #[test]
    fn same_point_and_axial() {
        let g = GridSpec::default();
        assert_eq!(swiss_roll_grid_geodesic((6.0, 3.0), (6.0, 3.0), &g).unwrap(), 0.0);
        let ds = 21.0 / 99.0;
        let l = swiss_roll_grid_geodesic((6.0, 1.0), (6.0, 15.0), &g).unwrap();
        assert!((l - 14.0).abs() <= ds, "{l}");
    }

    #[test]
    fn rejects_coarse_grid() {
        let g = GridSpec::eight_neighbour(40, 20);
        assert!(swiss_roll_grid_geodesic((6.0, 3.0), (7.0, 3.0), &g).is_err());
    }

    #[test]
    fn default_grid_within_one_percent_of_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = GridSpec::default();
        for _ in 0..10 {
            let p0 = (rng.random_range(T_MIN..T_MAX), rng.random_range(S_MIN..S_MAX));
            let p1 = (rng.random_range(T_MIN..T_MAX), rng.random_range(S_MIN..S_MAX));
            let l = swiss_roll_grid_geodesic(p0, p1, &g).unwrap();
            let e = unrolled(p0, p1);
            assert!((l - e).abs() <= 0.01 * e, "{l} vs {e}");
        }
    }

    #[test]
    fn refinement_converges() {
        let pairs = [((5.0, 2.0), (8.5, 14.0)), ((4.9, 19.0), (9.0, 1.0)), ((6.0, 5.0), (6.7, 7.0))];
        for (p0, p1) in pairs {
            let e = unrolled(p0, p1);
            let errs: Vec<f64> = [(100, 25), (200, 50), (400, 100)]
                .iter()
                .map(|&(nt, ns)| {
                    let g = GridSpec {
                        nt,
                        ns,
                        reach_t: 16,
                        reach_s: 4,
                    };
                    (swiss_roll_grid_geodesic(p0, p1, &g).unwrap() - e).abs()
                })
                .collect();
            assert!(errs[2] <= errs[0], "{errs:?}");
            assert!(errs[2] <= 0.01 * e);
        }
    }
}
