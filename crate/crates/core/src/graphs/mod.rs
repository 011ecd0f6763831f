//! Batch-level neighbourhood graphs and their analysis.

mod analysis;
mod bench;
mod distance;
mod edges;
mod knn;
mod mst;
mod umap;

pub use analysis::{bfs_component_count, connected_components, graph_shortest_paths, Components};
pub use bench::{bench_graph_build, BenchTiming, Builder, BENCH_DIM, BENCH_REPS};
pub use distance::DistanceMatrix;
pub use edges::{EdgeSet, WeightedEdgeSet};
pub use knn::{cknn_graph, full_graph, knn_graph, knn_lists, knn_radii, Symmetrize};
pub use mst::{mst_graph, total_weight};
pub use umap::{umap_row_sums, umap_weighted_graph, UMAP_BANDWIDTH_BRACKET};
