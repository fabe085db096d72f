//! File formats: run-length encoded masks, JSON scene documents and the
//! binary field container.

pub mod fieldfile;
pub mod rle;
pub mod scenefile;

pub use fieldfile::{read_field_file, read_fieldset, write_field_file, write_fieldset};
pub use rle::{decode_rle, encode_rle};
pub use scenefile::{parse_scene, read_scene_file, write_scene_file, DetectionDoc, KeypointDoc, PlayerDoc, SceneDoc};
