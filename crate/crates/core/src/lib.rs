//! Self-supervised pre-training for raw point clouds by voxel shuffling.
//!
//! A point cloud is split into `k^3` voxels; the voxels are randomly
//! rearranged and a permutation-invariant segmentation network learns to
//! predict each point's original voxel. The pooled features this task
//! induces transfer to object classification and part segmentation, which
//! the [`downstream`] module evaluates with a linear classifier, a few-shot
//! sampling protocol, and the usual metrics.

pub mod cli;
pub mod cloud;
pub mod dataset;
pub mod downstream;
pub mod error;
pub mod io;
pub mod jigsaw;
pub mod net;
pub mod rng;
pub mod selfcheck;
pub mod synth;
pub mod train;

pub use cloud::{Point3, PointCloud};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use jigsaw::{JigsawConfig, JigsawSample, VoxelId, VoxelPermutation};
pub use net::{NetworkConfig, Parameters};
pub use rng::Rng;
pub use train::{TaskKind, TrainConfig, TrainLog};
