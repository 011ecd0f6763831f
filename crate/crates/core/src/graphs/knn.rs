use std::cmp::Ordering;

use super::{DistanceMatrix, EdgeSet};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// How a directed kNN relation becomes an undirected graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetrize {
    /// Edge if either endpoint lists the other.
    Union,
    /// Edge only for mutual neighbours.
    Intersection,
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k = {k} outside 1..={}", n.saturating_sub(1))));
    }
    Ok(())
}

#[inline]
fn by_dist_then_index<T: Real>(a: &(T, usize), b: &(T, usize)) -> Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

/// Distance from each point to its `k`-th nearest other point.
///
/// The point itself is never counted, so `k = 1` is the nearest-neighbour
/// distance.
pub fn knn_radii<T: Real>(d: &DistanceMatrix<T>, k: usize) -> Result<Vec<T>> {
    let n = d.n();
    check_k(n, k)?;
    let mut radii = Vec::with_capacity(n);
    if k <= 32 {
        // Sorted buffer of the k smallest values seen so far.
        let mut buf = vec![T::infinity(); k];
        for i in 0..n {
            buf.iter_mut().for_each(|v| *v = T::infinity());
            let row = d.row(i);
            for (j, &v) in row.iter().enumerate() {
                if j == i || v >= buf[k - 1] {
                    continue;
                }
                let mut pos = k - 1;
                while pos > 0 && buf[pos - 1] > v {
                    buf[pos] = buf[pos - 1];
                    pos -= 1;
                }
                buf[pos] = v;
            }
            radii.push(buf[k - 1]);
        }
    } else {
        let mut scratch = Vec::with_capacity(n);
        for i in 0..n {
            scratch.clear();
            scratch.extend(d.row(i).iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v));
            let (_, kth, _) =
                scratch.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
            radii.push(*kth);
        }
    }
    Ok(radii)
}

/// The `k` nearest other points of every point, nearest first; ties go to
/// the smaller index.
pub fn knn_lists<T: Real>(d: &DistanceMatrix<T>, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = d.n();
    check_k(n, k)?;
    let mut out = Vec::with_capacity(n);
    let mut scratch: Vec<(T, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        scratch.clear();
        scratch.extend(
            d.row(i)
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, &v)| (v, j)),
        );
        if k < scratch.len() {
            scratch.select_nth_unstable_by(k - 1, by_dist_then_index);
        }
        let head = &mut scratch[..k];
        head.sort_unstable_by(by_dist_then_index);
        out.push(head.iter().map(|&(_, j)| j).collect());
    }
    Ok(out)
}

/// Continuous kNN graph: `(i, j)` is an edge iff
/// `d(i, j)^2 <= delta^2 * r_i * r_j`, with `r` the k-th neighbour radius.
pub fn cknn_graph<T: Real>(d: &DistanceMatrix<T>, k: usize, delta: f64) -> Result<EdgeSet> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("delta must be positive, got {delta}")));
    }
    let n = d.n();
    check_k(n, k)?;
    if k <= 32 {
        return Ok(cknn_single_pass(d, k, delta));
    }
    let radii: Vec<f64> = knn_radii(d, k)?.into_iter().map(Real::as_f64).collect();
    let delta2 = delta * delta;
    let scaled: Vec<f64> = radii.iter().map(|r| delta2 * r).collect();
    let mut edges = Vec::new();
    for (i, &si) in scaled.iter().enumerate() {
        let row = d.row(i);
        for j in (i + 1)..n {
            let dij = row[j].as_f64();
            if dij * dij <= si * radii[j] {
                edges.push((i, j));
            }
        }
    }
    Ok(EdgeSet::from_sorted_unchecked(n, edges))
}

/// Replaces the largest entry of `buf` (at `arg`) with `v` and returns the
/// new largest entry and its position. The buffer is left unsorted.
#[inline]
fn replace_max(buf: &mut [f64], arg: usize, v: f64) -> (f64, usize) {
    buf[arg] = v;
    let (mut best, mut at) = (buf[0], 0);
    for (t, &x) in buf.iter().enumerate().skip(1) {
        let gt = x > best;
        best = if gt { x } else { best };
        at = if gt { t } else { at };
    }
    (best, at)
}

const CHUNK: usize = 16;

/// Running state of the single-pass CkNN sweep.
struct Sweep {
    k: usize,
    delta2: f64,
    /// The k smallest values seen so far per point, unordered.
    bufs: Vec<f64>,
    /// Position of the largest entry in each buffer.
    arg: Vec<usize>,
    /// Largest buffered value per point: an upper bound on its final
    /// radius that only shrinks.
    kth: Vec<f64>,
    candidates: Vec<(usize, usize)>,
}

impl Sweep {
    fn push_value(&mut self, p: usize, v: f64) {
        let k = self.k;
        (self.kth[p], self.arg[p]) = replace_max(&mut self.bufs[p * k..(p + 1) * k], self.arg[p], v);
    }

    #[inline]
    fn visit(&mut self, i: usize, j: usize, v: f64) {
        if v < self.kth[i] {
            self.push_value(i, v);
        }
        if v < self.kth[j] {
            self.push_value(j, v);
        }
        // `inf * 0` is NaN while a buffer is still filling; keep the pair.
        if !(v * v > self.delta2 * self.kth[i] * self.kth[j]) {
            self.candidates.push((i, j));
        }
    }
}

/// Per-entry margins for one chunk of row `i`; an entry can matter only if
/// its margin is non-negative or NaN.
#[inline]
fn screen<T: Real>(v: &[T; CHUNK], kth: &[f64; CHUNK], ki: f64, ci: f64) -> [f64; CHUNK] {
    let mut m = [0.0; CHUNK];
    for t in 0..CHUNK {
        let x = v[t].as_f64();
        let a = if ki > kth[t] { ki } else { kth[t] } - x;
        let b = ci * kth[t] - x * x;
        m[t] = if a > b { a } else { b };
    }
    m
}

/// CkNN in one sweep of the upper triangle.
///
/// Each entry feeds the k-smallest buffers of both endpoints. A pair is
/// kept as a candidate when it passes the edge test against the running
/// radius bounds; bounds only shrink, so the final edges are a subset of
/// the candidates.
fn cknn_single_pass<T: Real>(d: &DistanceMatrix<T>, k: usize, delta: f64) -> EdgeSet {
    let n = d.n();
    let mut st = Sweep {
        k,
        delta2: delta * delta,
        bufs: vec![f64::INFINITY; n * k],
        arg: vec![0; n],
        kth: vec![f64::INFINITY; n],
        candidates: Vec::new(),
    };
    for i in 0..n {
        let row = &d.row(i)[i + 1..];
        let full = row.len() / CHUNK * CHUNK;
        for j0 in (0..full).step_by(CHUNK) {
            let cols = i + 1 + j0;
            // Row thresholds only shrink while the chunk is visited, so an
            // entry screened out here stays irrelevant.
            let margin = screen(
                row[j0..j0 + CHUNK].try_into().expect("chunk width"),
                st.kth[cols..cols + CHUNK].try_into().expect("chunk width"),
                st.kth[i],
                st.delta2 * st.kth[i],
            );
            let mut mask = 0u32;
            for (t, &mt) in margin.iter().enumerate() {
                mask |= u32::from(!(mt < 0.0)) << t;
            }
            while mask != 0 {
                let t = mask.trailing_zeros() as usize;
                mask &= mask - 1;
                st.visit(i, cols + t, row[j0 + t].as_f64());
            }
        }
        for (t, v) in row[full..].iter().enumerate() {
            st.visit(i, i + 1 + full + t, v.as_f64());
        }
    }
    let Sweep {
        kth, delta2, mut candidates, ..
    } = st;
    candidates.retain(|&(i, j)| {
        let v = d.get(i, j).as_f64();
        v * v <= delta2 * kth[i] * kth[j]
    });
    EdgeSet::from_sorted_unchecked(n, candidates)
}

/// Unweighted kNN graph symmetrized by union or intersection.
pub fn knn_graph<T: Real>(d: &DistanceMatrix<T>, k: usize, mode: Symmetrize) -> Result<EdgeSet> {
    let n = d.n();
    let lists = knn_lists(d, k)?;
    let mut directed = vec![Vec::new(); n];
    for (i, l) in lists.iter().enumerate() {
        let mut s = l.clone();
        s.sort_unstable();
        directed[i] = s;
    }
    let mut pairs = Vec::new();
    for (i, l) in directed.iter().enumerate() {
        for &j in l {
            let back = directed[j].binary_search(&i).is_ok();
            match mode {
                Symmetrize::Union => pairs.push((i, j)),
                Symmetrize::Intersection if back => pairs.push((i, j)),
                Symmetrize::Intersection => {}
            }
        }
    }
    EdgeSet::from_pairs(n, pairs)
}

/// All `n (n - 1) / 2` pairs.
pub fn full_graph(n: usize) -> EdgeSet {
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((i, j));
        }
    }
    EdgeSet::from_sorted_unchecked(n, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::Matrix;

    fn line(xs: &[f64]) -> DistanceMatrix<f64> {
        let p = Matrix::from_fn(xs.len(), 1, |i, _| xs[i]);
        DistanceMatrix::euclidean(&p)
    }

    #[test]
    fn radii_on_collinear_points() {
        assert_eq!(knn_radii(&line(&[0.0, 1.0, 3.0]), 1).unwrap(), vec![1.0, 1.0, 2.0]);
        assert_eq!(knn_radii(&line(&[2.0, 2.0]), 1).unwrap(), vec![0.0, 0.0]);
        let d = line(&[0.0, 1.0, 3.0, 7.5]);
        let r = knn_radii(&d, 3).unwrap();
        for (i, ri) in r.iter().enumerate() {
            let m = d.row(i).iter().cloned().fold(0.0, f64::max);
            assert_eq!(*ri, m);
        }
        assert!(knn_radii(&d, 0).is_err());
        assert!(knn_radii(&d, 4).is_err());
    }

    #[test]
    fn large_k_uses_selection() {
        let xs: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin() * 10.0).collect();
        let d = line(&xs);
        let r = knn_radii(&d, 40).unwrap();
        for (i, &ri) in r.iter().enumerate() {
            let mut row: Vec<f64> = (0..xs.len()).filter(|&j| j != i).map(|j| d.get(i, j)).collect();
            row.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(ri, row[39]);
        }
    }

    #[test]
    fn cknn_on_collinear_points() {
        let g = cknn_graph(&line(&[0.0, 1.0, 3.0]), 1, 1.0).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        let all = cknn_graph(&line(&[0.0, 1.0, 3.0]), 1, 1e6).unwrap();
        assert_eq!(all, full_graph(3));
        assert!(cknn_graph(&line(&[0.0, 1.0]), 1, 0.0).is_err());
    }

    #[test]
    fn coincident_points_connect() {
        let g = cknn_graph(&line(&[5.0, 5.0, 9.0]), 1, 0.5).unwrap();
        assert!(g.contains(0, 1));
    }

    /// Edge test evaluated directly on the final radii.
    fn cknn_from_radii(d: &DistanceMatrix<f64>, k: usize, delta: f64) -> Vec<(usize, usize)> {
        let r = knn_radii(d, k).unwrap();
        let n = d.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if d.get(i, j).powi(2) <= delta * delta * r[i] * r[j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn sweep_matches_radii_with_duplicates() {
        // Many repeated points give zero radii while other buffers are
        // still empty; the sweep must not lose those pairs.
        let xs: Vec<f64> = (0..70).map(|i| ((i * 7) % 5) as f64).collect();
        let d = line(&xs);
        for k in [1, 3, 9, 20] {
            for delta in [0.5, 1.0, 1.7] {
                assert_eq!(cknn_graph(&d, k, delta).unwrap().edges(), cknn_from_radii(&d, k, delta).as_slice());
            }
        }
        let ys: Vec<f64> = (0..90).map(|i| (i as f64 * 0.61).sin() * 4.0).collect();
        let d = line(&ys);
        for k in [1, 2, 8, 31] {
            assert_eq!(cknn_graph(&d, k, 1.0).unwrap().edges(), cknn_from_radii(&d, k, 1.0).as_slice());
        }
    }

    #[test]
    fn knn_union_and_intersection() {
        let d = line(&[0.0, 1.0, 3.0]);
        assert_eq!(knn_graph(&d, 1, Symmetrize::Union).unwrap().edges(), &[(0, 1), (1, 2)]);
        assert_eq!(knn_graph(&d, 1, Symmetrize::Intersection).unwrap().edges(), &[(0, 1)]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let n = 5;
        let m = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
        let d = DistanceMatrix::from_matrix(m).unwrap();
        let lists = knn_lists(&d, 2).unwrap();
        assert_eq!(lists[0], vec![1, 2]);
        assert_eq!(lists[3], vec![0, 1]);
        assert_eq!(lists[1], vec![0, 2]);
    }

    #[test]
    fn full_graph_counts() {
        assert_eq!(full_graph(3).edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert!(full_graph(1).is_empty());
        for n in [2, 7, 30] {
            assert_eq!(full_graph(n).len(), n * (n - 1) / 2);
        }
    }
}
