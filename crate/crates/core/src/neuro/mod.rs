//! Neural analysis: tuning and selectivity, representational similarity,
//! PCA geometry, rotational dynamics and Grad-CAM.

pub mod analyze;
pub mod gradcam;
pub mod jpca;
pub mod pca;
pub mod rsa;
pub mod stats;
pub mod tuning;

pub use analyze::{
    analyze_run, collect_traces, read_summary, AnalysisOptions, AnalysisSummary, CheckpointChoice, JpcaSummary,
    LayerSummary, ANALYSIS_DIR, SUMMARY_FILE,
};
pub use gradcam::{grad_cam, grad_cam_map, upsample_bilinear, write_pgm};
pub use jpca::{
    condition_averages, fit_linear_dynamics, jpca_analysis, jpca_plane, project_to_plane, rotation_quality,
    terminal_phase_regression, JpcaFit, JpcaPlane, LinearDynamics, PhaseRegression, JPCA_DIMS,
};
pub use pca::{pca, Pca};
pub use rsa::{compute_rdm, distance_structure, rdm_from_means, rsa_spearman, DistanceStructure, Rdm, RsaResult};
pub use stats::{linear_fit, log_fit, pearson, spearman, spearman_test, weber_fit, LinearFit, WeberFit};
pub use tuning::{
    class_means, classify_detectors, flag_selective, preferred_numerosity, selectivity, tuning_curves, DetectorClass,
    DetectorSummary, TuningCurve,
};
