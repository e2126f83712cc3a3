//! Action-window embedding: fixed windows over the driving log, exact t-SNE
//! to two dimensions, k-means over the embedded points, and the τ-shift
//! lookup that turns a sample index into a subroutine centroid.

pub mod artifact;
pub mod kmeans;
pub mod lookup;
pub mod report;
pub mod tsne;
pub mod window;

pub use artifact::{window_hash, EmbeddedWindow, Embedding};
pub use kmeans::{kmeans, kmeans_coords, purity, CentroidSet, DEFAULT_K};
pub use lookup::{serving_window, subroutine_lookup};
pub use report::cluster_report;
pub use tsne::{
    kl_divergence, tsne_embed, tsne_embed_vectors, EmbeddedPoint, TsneConfig, TsneDiagnostics,
    TsneResult,
};
pub use window::{make_windows, window_sign_label, ActionWindow, SignLabel, DEFAULT_ZERO_BAND};
