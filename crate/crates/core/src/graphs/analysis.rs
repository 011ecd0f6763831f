use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{DistanceMatrix, EdgeSet};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Component count and per-vertex labels (`0..count`, numbered by the
/// smallest vertex in each component).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Components {
    pub count: usize,
    pub labels: Vec<usize>,
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

pub fn connected_components(g: &EdgeSet) -> Components {
    let n = g.n();
    let mut uf = UnionFind::new(n);
    for (i, j) in g.iter() {
        uf.union(i, j);
    }
    let mut root_label = vec![usize::MAX; n];
    let mut labels = vec![0; n];
    let mut count = 0;
    for (v, label) in labels.iter_mut().enumerate() {
        let r = uf.find(v);
        if root_label[r] == usize::MAX {
            root_label[r] = count;
            count += 1;
        }
        *label = root_label[r];
    }
    Components { count, labels }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance.
        other
            .0
            .partial_cmp(&self.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from `source` with edge lengths taken from `d`.
/// Unreachable vertices get `+inf`.
pub fn graph_shortest_paths<T: Real>(g: &EdgeSet, d: &DistanceMatrix<T>, source: usize) -> Result<Vec<f64>> {
    let n = g.n();
    if source >= n {
        return Err(Error::invalid(format!("source {source} outside 0..{n}")));
    }
    if d.n() != n {
        return Err(Error::invalid(format!("graph has {n} vertices, distances {}", d.n())));
    }
    let adj = g.adjacency();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapItem(0.0, source));
    while let Some(HeapItem(du, u)) = heap.pop() {
        if du > dist[u] {
            continue;
        }
        for &v in &adj[u] {
            let nd = du + d.get(u, v).as_f64();
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapItem(nd, v));
            }
        }
    }
    Ok(dist)
}

/// Breadth-first component count, independent of union-find.
pub fn bfs_component_count(g: &EdgeSet) -> usize {
    let adj = g.adjacency();
    let mut seen = vec![false; g.n()];
    let mut count = 0;
    for s in 0..g.n() {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    count
}
