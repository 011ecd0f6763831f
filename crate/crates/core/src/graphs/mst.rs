use super::{DistanceMatrix, EdgeSet};
use crate::scalar::Real;

/// Minimum spanning tree by Prim's algorithm on the dense matrix, O(n^2).
///
/// These are the 0-dimensional persistence pairs of the Vietoris-Rips
/// filtration. Ties resolve to the lowest vertex index.
pub fn mst_graph<T: Real>(d: &DistanceMatrix<T>) -> EdgeSet {
    let n = d.n();
    if n <= 1 {
        return EdgeSet::empty(n);
    }
    // `remaining` holds vertices not yet in the tree; swap-remove keeps the
    // scan proportional to the shrinking frontier.
    let mut key = vec![T::infinity(); n];
    let mut parent = vec![0usize; n];
    let mut remaining: Vec<usize> = (1..n).collect();
    let mut edges = Vec::with_capacity(n - 1);
    let mut last = 0usize;
    while !remaining.is_empty() {
        let row = d.row(last);
        let mut best_pos = 0;
        let mut best_key = T::infinity();
        let mut best_v = usize::MAX;
        for (pos, &v) in remaining.iter().enumerate() {
            let w = row[v];
            if w < key[v] {
                key[v] = w;
                parent[v] = last;
            }
            let kv = key[v];
            if kv < best_key || (kv == best_key && v < best_v) {
                best_key = kv;
                best_pos = pos;
                best_v = v;
            }
        }
        remaining.swap_remove(best_pos);
        let p = parent[best_v];
        edges.push((p.min(best_v), p.max(best_v)));
        last = best_v;
    }
    edges.sort_unstable();
    EdgeSet::from_sorted_unchecked(n, edges)
}

/// Total weight of a graph under `d`.
pub fn total_weight<T: Real>(g: &EdgeSet, d: &DistanceMatrix<T>) -> f64 {
    g.iter().map(|(i, j)| d.get(i, j).as_f64()).sum()
}
