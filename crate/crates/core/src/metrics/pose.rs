//! Pose quality on the four-part skeleton format (head, hip, two feet).
//!
//! Predicted 17-part skeletons are reduced with [`convert_skeleton`]. Feet are
//! unlabelled: every comparison tries both foot assignments and keeps the
//! better one.

use std::fmt;

use serde::Serialize;

use crate::breakdown::ks;
use crate::error::{Error, Result};
use crate::types::{KeypointType, Point, Skeleton};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeepSportPart {
    Head = 0,
    Hip,
    Foot1,
    Foot2,
}

impl DeepSportPart {
    pub const ALL: [DeepSportPart; 4] = [
        DeepSportPart::Head,
        DeepSportPart::Hip,
        DeepSportPart::Foot1,
        DeepSportPart::Foot2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DeepSportPart::Head => "head",
            DeepSportPart::Hip => "hip",
            DeepSportPart::Foot1 => "foot1",
            DeepSportPart::Foot2 => "foot2",
        }
    }

    pub fn is_foot(self) -> bool {
        matches!(self, DeepSportPart::Foot1 | DeepSportPart::Foot2)
    }
}

impl fmt::Display for DeepSportPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartPoint {
    pub point: Point,
    pub confidence: f64,
}

/// Head, hip and two interchangeable feet.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeepSportSkeleton {
    pub parts: [Option<PartPoint>; 4],
    pub confidence: f64,
}

impl DeepSportSkeleton {
    pub fn get(&self, part: DeepSportPart) -> Option<&PartPoint> {
        self.parts[part as usize].as_ref()
    }

    pub fn annotated(&self) -> usize {
        self.parts.iter().flatten().count()
    }

    /// The same skeleton with foot 1 and foot 2 exchanged.
    pub fn feet_swapped(&self) -> Self {
        let mut out = *self;
        out.parts.swap(2, 3);
        out
    }

    /// Mean position of the present parts.
    pub fn reference_point(&self) -> Option<Point> {
        let pts: Vec<Point> = self.parts.iter().flatten().map(|p| p.point).collect();
        if pts.is_empty() {
            return None;
        }
        let n = pts.len() as f64;
        Some(Point::new(
            pts.iter().map(|p| p.x).sum::<f64>() / n,
            pts.iter().map(|p| p.y).sum::<f64>() / n,
        ))
    }

    /// Square root of the area of the tight bounding box of the parts,
    /// floored at 1 pixel.
    pub fn scale(&self) -> f64 {
        let pts: Vec<Point> = self.parts.iter().flatten().map(|p| p.point).collect();
        if pts.is_empty() {
            return 1.0;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &pts {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        ((x1 - x0) * (y1 - y0)).sqrt().max(1.0)
    }

    /// Embeds the skeleton in the 17-part vocabulary with both ears at the
    /// head, both hips at the hip, and the feet at the ankles.
    pub fn to_coco(&self, instance_id: u32) -> Skeleton {
        let mut kps = Vec::new();
        let mut put = |part: DeepSportPart, kinds: &[KeypointType]| {
            if let Some(p) = self.get(part) {
                for &k in kinds {
                    kps.push(crate::types::Keypoint::new(k, p.point.x, p.point.y, p.confidence));
                }
            }
        };
        put(DeepSportPart::Head, &[KeypointType::LeftEar, KeypointType::RightEar]);
        put(DeepSportPart::Hip, &[KeypointType::LeftHip, KeypointType::RightHip]);
        put(DeepSportPart::Foot1, &[KeypointType::LeftAnkle]);
        put(DeepSportPart::Foot2, &[KeypointType::RightAnkle]);
        Skeleton::from_keypoints(instance_id, kps).expect("body parts only")
    }
}

/// Reduces a 17-part skeleton: head and hip are the midpoints of the ears and
/// of the hips (absent if either source is), feet are the left and right
/// ankles. Derived confidences average their sources; the skeleton keeps the
/// source skeleton's confidence.
pub fn convert_skeleton(coco: &Skeleton) -> DeepSportSkeleton {
    let mid = |a: KeypointType, b: KeypointType| -> Option<PartPoint> {
        let (a, b) = (coco.get(a)?, coco.get(b)?);
        Some(PartPoint {
            point: a.point().midpoint(b.point()),
            confidence: 0.5 * (a.confidence + b.confidence),
        })
    };
    let one = |k: KeypointType| {
        coco.get(k).map(|kp| PartPoint { point: kp.point(), confidence: kp.confidence })
    };
    DeepSportSkeleton {
        parts: [
            mid(KeypointType::LeftEar, KeypointType::RightEar),
            mid(KeypointType::LeftHip, KeypointType::RightHip),
            one(KeypointType::LeftAnkle),
            one(KeypointType::RightAnkle),
        ],
        confidence: coco.confidence(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OksConfig {
    /// Falloff per part: head, hip, foot1, foot2.
    pub kappa: [f64; 4],
    pub oks_thresholds: Vec<f64>,
}

pub const DEFAULT_OKS_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

impl Default for OksConfig {
    fn default() -> Self {
        OksConfig {
            kappa: [0.15, 0.2, 0.2, 0.2],
            oks_thresholds: DEFAULT_OKS_THRESHOLDS.to_vec(),
        }
    }
}

impl OksConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kappa.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(Error::domain("kappa values must be positive"));
        }
        let t = &self.oks_thresholds;
        if t.is_empty() || t.iter().any(|v| !(*v > 0.0 && *v < 1.0)) || t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("OKS thresholds must be strictly increasing in (0, 1)"));
        }
        Ok(())
    }

    pub fn kappa(&self, part: DeepSportPart) -> f64 {
        self.kappa[part as usize]
    }
}

/// OKS for a fixed foot assignment.
fn oks_fixed(pred: &DeepSportSkeleton, gt: &DeepSportSkeleton, s: f64, cfg: &OksConfig) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for part in DeepSportPart::ALL {
        let Some(g) = gt.get(part) else { continue };
        n += 1;
        if let Some(p) = pred.get(part) {
            total += ks(p.point, g.point, s, cfg.kappa(part));
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// OKS under the better foot assignment, and the prediction re-labelled to
/// that assignment. Ties keep the original labels.
pub fn oks_aligned(pred: &DeepSportSkeleton, gt: &DeepSportSkeleton, cfg: &OksConfig) -> (f64, DeepSportSkeleton) {
    let s = gt.scale();
    let straight = oks_fixed(pred, gt, s, cfg);
    let swapped_pred = pred.feet_swapped();
    let swapped = oks_fixed(&swapped_pred, gt, s, cfg);
    if swapped > straight {
        (swapped, swapped_pred)
    } else {
        (straight, *pred)
    }
}

/// Object keypoint similarity averaged over the ground truth's annotated
/// parts, maximised over the two foot assignments. 0 when the ground truth
/// has no parts.
pub fn oks(pred: &DeepSportSkeleton, gt: &DeepSportSkeleton, cfg: &OksConfig) -> f64 {
    oks_aligned(pred, gt, cfg).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoseMatch {
    pub image: usize,
    pub pred: usize,
    pub gt: usize,
    pub oks: f64,
}

/// Greedy OKS matching within one image.
///
/// Predictions are visited by descending confidence (ties by index); each
/// claims the still-unmatched ground truth with the highest positive OKS
/// (ties by lower index). Ground truths without annotated parts are ignored.
pub fn match_poses(image: usize, preds: &[DeepSportSkeleton], gts: &[DeepSportSkeleton], cfg: &OksConfig) -> Vec<PoseMatch> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
    let mut taken: Vec<bool> = gts.iter().map(|g| g.annotated() == 0).collect();
    let mut out = Vec::new();
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let o = oks(&preds[i], g, cfg);
            if o > 0.0 && best.map_or(true, |(_, b)| o > b) {
                best = Some((j, o));
            }
        }
        if let Some((j, o)) = best {
            taken[j] = true;
            out.push(PoseMatch { image, pred: i, gt: j, oks: o });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub tau: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoseQuality {
    pub ap: f64,
    pub ar: f64,
    pub f1: f64,
    pub per_threshold: Vec<ThresholdRow>,
    pub matches: Vec<PoseMatch>,
}

/// Precision and recall per OKS threshold from a finished matching, and
/// their means. `F1` is the harmonic mean of AP and AR.
pub fn pose_quality(matches: Vec<PoseMatch>, n_pred: usize, n_gt: usize, thresholds: &[f64]) -> PoseQuality {
    let ratio = |tp: usize, n: usize| if n == 0 { 0.0 } else { tp as f64 / n as f64 };
    let per_threshold: Vec<ThresholdRow> = thresholds
        .iter()
        .map(|&tau| {
            let tp = matches.iter().filter(|m| m.oks >= tau).count();
            ThresholdRow { tau, precision: ratio(tp, n_pred), recall: ratio(tp, n_gt) }
        })
        .collect();
    let mean = |f: fn(&ThresholdRow) -> f64| {
        if per_threshold.is_empty() {
            0.0
        } else {
            per_threshold.iter().map(f).sum::<f64>() / per_threshold.len() as f64
        }
    };
    let ap = mean(|r| r.precision);
    let ar = mean(|r| r.recall);
    let f1 = if ap + ar > 0.0 { 2.0 * ap * ar / (ap + ar) } else { 0.0 };
    PoseQuality { ap, ar, f1, per_threshold, matches }
}

/// Pose estimation quality over many images (one list per image).
pub fn peq(preds: &[Vec<DeepSportSkeleton>], gts: &[Vec<DeepSportSkeleton>], cfg: &OksConfig) -> Result<PoseQuality> {
    cfg.validate()?;
    if preds.len() != gts.len() {
        return Err(Error::shape("prediction and ground-truth image counts differ"));
    }
    let mut matches = Vec::new();
    for (i, (p, g)) in preds.iter().zip(gts).enumerate() {
        matches.extend(match_poses(i, p, g, cfg));
    }
    let n_pred = preds.iter().map(Vec::len).sum();
    let n_gt = gts.iter().flatten().filter(|g| g.annotated() > 0).count();
    Ok(pose_quality(matches, n_pred, n_gt, &cfg.oks_thresholds))
}
