//! Similarity structure, clustering, probes and reconstructions over a
//! trained model.

pub mod cluster;
pub mod probe;
pub mod reconstruct;
pub mod similarity;
pub mod stats;

pub use cluster::{hierarchical_cluster, Dendrogram, Merge};
pub use probe::{recoverability_probe, ProbeConfig, ProbeResult};
pub use reconstruct::{
    class_mean_images, reconstruct_digit, reconstruction_cells, reconstruction_grid,
    ReconstructConfig, Reconstruction, SigmaMode,
};
pub use similarity::{
    context_similarity_matrix, intra_inter_similarity, suite_context_similarity,
    IntraInterSummary, RepresentationBank, SimilarityKind, SimilarityReport,
};
pub use stats::{bootstrap_mean_difference, pearson, spearman, BootstrapInterval, Correlation};
