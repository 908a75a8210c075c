//! Failure-mode diagnostics: drift of the learned velocity toward training
//! actions, and numerical probes of Lipschitz blow-up and curvature.

mod drift;
mod knn;
mod probes;

pub use drift::{cosine, drift_curves, linear_grid, DriftConfig, DriftReport, KnnQuery, StatePath};
pub use knn::{build_knn_index, KnnIndex, Neighbour};
pub use probes::{
    curvature_csv, curvature_probe, default_probe_pairs, lipschitz_csv, lipschitz_probe,
    truncation_csv, truncation_probe, CurvatureEstimate, LipschitzEstimate, ProbePair,
    TruncationRow,
};
