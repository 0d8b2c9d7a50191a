//! Evaluation and feature-space applications: mIoU, similarity maps,
//! cosegmentation, correspondence and annotation-driven segmentation.

mod logreg;
mod metrics;
mod report;
mod similarity;

pub use logreg::{fit_logreg, logreg_objective, predict, Annotation, LogRegModel, DEFAULT_LAMBDA};
pub use metrics::{best_of_scales, miou, GroundTruth, MiouReport, PartIou};
pub use report::{evaluation_report, partnete_group, EvaluationReport, ShapeEval, PARTNETE_GROUPS};
pub use similarity::{
    cosegment, nn_correspondence, similarity_map, similarity_map_cross, transfer_to_faces, warn_if_not_normalized,
};
