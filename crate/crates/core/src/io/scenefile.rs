//! JSON scene documents: ground-truth scenes and decoded results share one
//! schema.
//!
//! ```json
//! {
//!   "grid": {"width": 64, "height": 48, "stride": 8},
//!   "court": [[0, 0], [63, 0], [63, 47]],
//!   "ball": [[1030, 3], [1094, 3]],
//!   "ball_detection": {"x": 7.0, "y": 16.5, "confidence": 0.93},
//!   "players": [
//!     {"id": 0, "mask": [[200, 4]],
//!      "keypoints": [{"type": "left_ankle", "x": 10.5, "y": 4.0}],
//!      "center": {"x": 9.0, "y": 3.0, "confidence": 1.0}}
//!   ]
//! }
//! ```
//!
//! Masks are run-length encoded (see [`super::rle`]). Keypoint confidence
//! defaults to 1. Unknown fields are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rle::{decode_rle, encode_rle};
use crate::decode::DecodeResult;
use crate::error::{Error, Result};
use crate::types::{GridSpec, InstanceMask, Keypoint, KeypointType, Player, Point, Scene, Skeleton};

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointDoc {
    #[serde(rename = "type")]
    pub kind: KeypointType,
    pub x: f64,
    pub y: f64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionDoc {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerDoc {
    pub id: u32,
    pub mask: Vec<[u32; 2]>,
    #[serde(default)]
    pub keypoints: Vec<KeypointDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<DetectionDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDoc {
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub court: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball: Option<Vec<[u32; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball_detection: Option<DetectionDoc>,
    #[serde(default)]
    pub players: Vec<PlayerDoc>,
}

fn keypoint_doc(kp: &Keypoint) -> KeypointDoc {
    KeypointDoc { kind: kp.kind, x: kp.x, y: kp.y, confidence: kp.confidence }
}

fn detection_doc(kp: &Keypoint) -> DetectionDoc {
    DetectionDoc { x: kp.x, y: kp.y, confidence: kp.confidence }
}

impl SceneDoc {
    pub fn from_scene(scene: &Scene) -> Self {
        SceneDoc {
            grid: scene.grid,
            court: scene.court.as_ref().map(|c| c.iter().map(|p| [p.x, p.y]).collect()),
            ball: scene.ball_mask.as_deref().map(encode_rle),
            ball_detection: None,
            players: scene
                .players
                .iter()
                .map(|p| PlayerDoc {
                    id: p.mask.instance_id,
                    mask: encode_rle(p.mask.pixels()),
                    keypoints: p.skeleton.keypoints().map(keypoint_doc).collect(),
                    center: None,
                })
                .collect(),
        }
    }

    /// Decoded output. Skeletons attach to the mask with the same instance id;
    /// centers are listed in mask order.
    pub fn from_decode(result: &DecodeResult, grid: GridSpec) -> Self {
        SceneDoc {
            grid,
            court: None,
            ball: None,
            ball_detection: result.ball.as_ref().map(detection_doc),
            players: result
                .masks
                .iter()
                .enumerate()
                .map(|(i, m)| PlayerDoc {
                    id: m.instance_id,
                    mask: encode_rle(m.pixels()),
                    keypoints: result
                        .skeletons
                        .iter()
                        .find(|s| s.instance_id == m.instance_id)
                        .map(|s| s.keypoints().map(keypoint_doc).collect())
                        .unwrap_or_default(),
                    center: result.centers.get(i).map(detection_doc),
                })
                .collect(),
        }
    }

    /// Converts to a validated [`Scene`]. The ball detection and centers are
    /// not part of a scene; see [`SceneDoc::ball_keypoint`].
    pub fn to_scene(&self) -> Result<Scene> {
        let schema = |e: Error| match e {
            Error::Schema(m) => Error::Schema(m),
            other => Error::Schema(other.to_string()),
        };
        self.grid.validate().map_err(schema)?;
        let n = self.grid.pixel_count();
        let court = match &self.court {
            None => None,
            Some(c) => {
                if c.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::schema("court vertices must be finite"));
                }
                Some(c.iter().map(|&[x, y]| Point::new(x, y)).collect())
            }
        };
        let ball_mask = match &self.ball {
            None => None,
            Some(runs) => Some(decode_rle(runs, n).map_err(|e| Error::schema(format!("ball: {e}")))?),
        };
        let mut players = Vec::with_capacity(self.players.len());
        let mut ids = std::collections::BTreeSet::new();
        for p in &self.players {
            if !ids.insert(p.id) {
                return Err(Error::schema(format!("duplicate player id {}", p.id)));
            }
            let pixels = decode_rle(&p.mask, n).map_err(|e| Error::schema(format!("player {}: {e}", p.id)))?;
            let mut seen = [false; crate::types::NUM_KEYPOINT_TYPES];
            let mut kps = Vec::with_capacity(p.keypoints.len());
            for k in &p.keypoints {
                if !k.kind.is_body_part() {
                    return Err(Error::schema(format!("player {}: {} is not a body part", p.id, k.kind)));
                }
                if std::mem::replace(&mut seen[k.kind.id()], true) {
                    return Err(Error::schema(format!("player {}: duplicate {}", p.id, k.kind)));
                }
                if !(k.x.is_finite() && k.y.is_finite() && k.confidence.is_finite() && k.confidence >= 0.0) {
                    return Err(Error::schema(format!("player {}: bad {} values", p.id, k.kind)));
                }
                kps.push(Keypoint::new(k.kind, k.x, k.y, k.confidence));
            }
            players.push(Player {
                mask: InstanceMask::new(p.id, pixels),
                skeleton: Skeleton::from_keypoints(p.id, kps).map_err(schema)?,
            });
        }
        let scene = Scene { grid: self.grid, ball_mask, players, court };
        scene.validate().map_err(schema)?;
        Ok(scene)
    }

    pub fn ball_keypoint(&self) -> Result<Option<Keypoint>> {
        match self.ball_detection {
            None => Ok(None),
            Some(d) if d.x.is_finite() && d.y.is_finite() && d.confidence.is_finite() => {
                Ok(Some(Keypoint::new(KeypointType::Ball, d.x, d.y, d.confidence)))
            }
            Some(_) => Err(Error::schema("ball detection must be finite")),
        }
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene documents always serialize");
        s.push('\n');
        s
    }
}

/// Parses and schema-checks a document.
pub fn parse_scene(text: &str) -> Result<SceneDoc> {
    let doc: SceneDoc = serde_json::from_str(text)?;
    doc.to_scene()?;
    doc.ball_keypoint()?;
    Ok(doc)
}

pub fn read_scene_file(path: impl AsRef<Path>) -> Result<SceneDoc> {
    parse_scene(&std::fs::read_to_string(path)?)
}

pub fn write_scene_file(path: impl AsRef<Path>, doc: &SceneDoc) -> Result<()> {
    std::fs::write(path, doc.to_json())?;
    Ok(())
}
