//! Ball detection quality: ROC of top-1 detections over a confidence sweep.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{GridSpec, Keypoint};

/// Outcome of the top-1 ball detection on one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallRecord {
    /// Detection confidence, `None` when nothing was detected.
    pub confidence: Option<f64>,
    /// Whether the detection falls inside the annotated ball mask.
    pub inside: bool,
    /// Whether the image has an annotated ball.
    pub annotated: bool,
}

impl BallRecord {
    /// A detection is inside when its nearest pixel belongs to the mask.
    pub fn new(detection: Option<&Keypoint>, ball_mask: Option<&[u32]>, grid: &GridSpec) -> Self {
        let inside = match (detection, ball_mask) {
            (Some(d), Some(mask)) => grid
                .nearest_pixel(d.point())
                .is_some_and(|p| mask.binary_search(&p).is_ok()),
            _ => false,
        };
        BallRecord {
            confidence: detection.map(|d| d.confidence),
            inside,
            annotated: ball_mask.is_some(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    /// Confidence threshold; `+inf` for the origin sentinel, written as the
    /// string `"inf"` in JSON.
    #[serde(serialize_with = "tau_json")]
    pub tau: f64,
    pub fpr: f64,
    pub tpr: f64,
}

fn tau_json<S: serde::Serializer>(tau: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if tau.is_finite() {
        s.serialize_f64(*tau)
    } else {
        s.serialize_str("inf")
    }
}

/// ROC curve and its area.
///
/// The curve is swept over `+inf`, every distinct detection confidence in
/// descending order, and `0`. At threshold `tau` a detection with confidence
/// `>= tau` is a true positive when inside the annotated mask and a false
/// positive otherwise. TPr is normalised by the number of images with an
/// annotated ball, FPr by the number of images.
///
/// The area is the trapezoidal integral of the curve, closed by a horizontal
/// segment from the last point out to `FPr = 1`.
pub fn ball_roc(records: &[BallRecord]) -> Result<(Vec<RocPoint>, f64)> {
    if records.is_empty() {
        return Err(Error::domain("ball ROC needs at least one image"));
    }
    let n_images = records.len() as f64;
    let n_annotated = records.iter().filter(|r| r.annotated).count() as f64;
    let rate = |count: usize, denom: f64| if denom > 0.0 { count as f64 / denom } else { 0.0 };

    let mut detections: Vec<(f64, bool)> = records
        .iter()
        .filter_map(|r| r.confidence.map(|c| (c, r.inside)))
        .collect();
    detections.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut roc = vec![RocPoint { tau: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < detections.len() {
        let tau = detections[i].0;
        while i < detections.len() && detections[i].0 == tau {
            if detections[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if tau < 0.0 {
            break;
        }
        roc.push(RocPoint { tau, fpr: rate(fp, n_images), tpr: rate(tp, n_annotated) });
    }
    if roc.last().map_or(true, |p| p.tau != 0.0) {
        let tp0 = detections.iter().filter(|d| d.0 >= 0.0 && d.1).count();
        let fp0 = detections.iter().filter(|d| d.0 >= 0.0 && !d.1).count();
        roc.push(RocPoint { tau: 0.0, fpr: rate(fp0, n_images), tpr: rate(tp0, n_annotated) });
    }

    let mut auc = 0.0;
    for w in roc.windows(2) {
        auc += (w[1].fpr - w[0].fpr) * 0.5 * (w[0].tpr + w[1].tpr);
    }
    let last = roc.last().expect("non-empty curve");
    auc += (1.0 - last.fpr) * last.tpr;
    Ok((roc, auc))
}
