//! Part-aware feature fields on 3D shapes.
//!
//! A shape is normalized into `[-1, 1]^3`, sampled into a canonical point set,
//! and supervised with part proposals (3D labels or 2D masks projected through
//! a camera). A triplane feature field is fitted per shape by minimizing a
//! relative triplet contrastive objective with uniform, Euclidean-hard and
//! feature-hard negatives. The fitted field is then averaged per mesh face and
//! clustered into a merge tree whose cuts give hierarchical part
//! decompositions.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`]: meshes, point sets, normalization, sampling, BVH ray casting
//!   and depth/id rendering.
//! * [`proposals`]: part proposals from label sets and masks.
//! * [`sampler`]: positive pairs and the three negative mining strategies.
//! * [`field`]: the triplane field, its adjoint, and file formats.
//! * [`loss`], [`optim`], [`fit`]: the contrastive objective, Adam, and the
//!   per-shape fitting loop.
//! * [`clustering`]: agglomerative merge trees, tree cuts and k-means.
//! * [`analysis`]: mIoU evaluation, similarity maps, cosegmentation,
//!   correspondence and interactive logistic-regression segmentation.

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod clustering;
pub mod error;
pub mod field;
pub mod fit;
pub mod geometry;
mod kernels;
pub mod loss;
pub mod optim;
pub mod proposals;
mod rng;
pub mod sampler;

pub use analysis::{miou, GroundTruth, MiouReport};
pub use clustering::{agglomerate, cut_tree, ClusterOptions, MergeTree, Segmentation};
pub use error::{Error, Result};
pub use field::{ElementKind, FeatureSet, TriplaneField};
pub use fit::{fit_field, FitConfig, FitReport};
pub use geometry::{Camera, NormalizationTransform, PointSet, TriMesh};
pub use proposals::{LabelSet, PartProposal, ProposalSource};
pub use sampler::{SamplerConfig, TripletBatch};

/// Re-exported so downstream crates share one vector type.
pub use glam::DVec3;
