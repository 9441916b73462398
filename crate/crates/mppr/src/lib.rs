//! Motif-based personalized PageRank propagation for graph learning.
//!
//! The crate decomposes a directed graph into its seven triangle-motif
//! adjacency matrices, blends a chosen motif with the edge adjacency,
//! derives a personalized-PageRank diffusion operator from the blend, and
//! trains small feature-transformation networks that propagate their
//! predictions through that operator. Two end-to-end pipelines are
//! provided: semi-supervised node classification and link prediction.

pub mod error;
pub mod graph;
pub mod motif;
pub mod neural;
pub mod ppr;
pub mod sparse;
pub mod synthetic;
pub mod tasks;

pub use error::{Error, Result};
pub use graph::{load_graph, normalize_sym, row_stochastic, to_adjacency, Graph};
pub use motif::{blend, motif_adjacency, split_uni_bi, BlendedAdjacency, MotifAdjacency, MotifId};
pub use ppr::{
    apply_beta, build_operator, mppr_matrix, pagerank, ppr_matrix_direct, ppr_matrix_neumann,
    PprMatrix, PropagationOperator, SolverChoice, SolverConfig,
};
pub use sparse::SparseMatrix;
