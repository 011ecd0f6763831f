use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Undirected graph over `0..n` stored as canonical `(i, j)` pairs with
/// `i < j`, sorted and free of duplicates.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct EdgeSet {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl EdgeSet {
    pub fn empty(n: usize) -> Self {
        EdgeSet { n, edges: Vec::new() }
    }

    /// Canonicalizes arbitrary pairs. Self-loops and out-of-range indices are
    /// rejected; duplicates (in either orientation) collapse.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut edges = Vec::new();
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) outside 0..{n}")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at {a}")));
            }
            edges.push((a.min(b), a.max(b)));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(EdgeSet { n, edges })
    }

    /// Builds from pairs already known to be canonical, sorted and unique.
    pub(crate) fn from_sorted_unchecked(n: usize, edges: Vec<(usize, usize)>) -> Self {
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(edges.iter().all(|&(i, j)| i < j && j < n));
        EdgeSet { n, edges }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    pub fn union(&self, other: &EdgeSet) -> EdgeSet {
        let mut edges = Vec::with_capacity(self.len() + other.len());
        let (mut a, mut b) = (self.edges.iter().peekable(), other.edges.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(x), Some(y)) => {
                    if x < y {
                        edges.push(*a.next().unwrap());
                    } else if y < x {
                        edges.push(*b.next().unwrap());
                    } else {
                        edges.push(*a.next().unwrap());
                        b.next();
                    }
                }
                (Some(_), None) => edges.push(*a.next().unwrap()),
                (None, Some(_)) => edges.push(*b.next().unwrap()),
                (None, None) => break,
            }
        }
        EdgeSet {
            n: self.n.max(other.n),
            edges,
        }
    }

    pub fn intersection(&self, other: &EdgeSet) -> EdgeSet {
        let edges = self
            .edges
            .iter()
            .filter(|e| other.edges.binary_search(e).is_ok())
            .copied()
            .collect();
        EdgeSet {
            n: self.n.max(other.n),
            edges,
        }
    }

    pub fn is_subset_of(&self, other: &EdgeSet) -> bool {
        self.edges.iter().all(|e| other.edges.binary_search(e).is_ok())
    }

    /// Adjacency lists, each sorted ascending.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    /// Text form: a header line `n <count>` followed by one `i j` line per
    /// edge in ascending lexicographic order.
    pub fn to_text(&self) -> String {
        let mut s = format!("n {}\n", self.n);
        for &(i, j) in &self.edges {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let n = header
            .strip_prefix("n ")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or(Error::Parse {
                line: 1,
                msg: format!("expected `n <count>`, got `{header}`"),
            })?;
        let mut pairs = Vec::new();
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) => pairs.push((i, j)),
                _ => {
                    return Err(Error::Parse {
                        line: ln + 1,
                        msg: format!("expected `i j`, got `{line}`"),
                    })
                }
            }
        }
        EdgeSet::from_pairs(n, pairs)
    }
}

/// Undirected weighted graph with weights in `[0, 1]`, canonical `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedEdgeSet<T: Real> {
    n: usize,
    edges: Vec<(usize, usize, T)>,
}

impl<T: Real> WeightedEdgeSet<T> {
    pub(crate) fn new(n: usize, edges: Vec<(usize, usize, T)>) -> Self {
        WeightedEdgeSet { n, edges }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> &[(usize, usize, T)] {
        &self.edges
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<T> {
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .ok()
            .map(|k| self.edges[k].2)
    }

    /// Unweighted support of the graph.
    pub fn support(&self) -> EdgeSet {
        EdgeSet::from_sorted_unchecked(self.n, self.edges.iter().map(|&(i, j, _)| (i, j)).collect())
    }
}
