//! Field encoding, training losses, field decoding and evaluation for joint
//! ball detection, player instance segmentation and pose estimation on
//! team-sport images.
//!
//! Every tensor lives on a [`GridSpec`]: a high-resolution pixel grid and a
//! low-resolution cell grid `stride` times coarser. [`encode::encode`] turns
//! an annotated [`Scene`] into a [`FieldSet`], [`decode::decode`] turns a
//! `FieldSet` back into a ball, masks and skeletons, and [`metrics`] and
//! [`breakdown`] score the result.

pub mod breakdown;
pub mod cli;
pub mod decode;
pub mod encode;
pub mod error;
pub mod fields;
pub mod harness;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use fields::{FieldSet, TensorKind};
pub use types::{
    cell_center, patch_cells, Cell, GridSpec, InstanceMask, Keypoint, KeypointType, Player, Point, Scene, Skeleton,
    NUM_BODY_PARTS, NUM_KEYPOINT_TYPES,
};
