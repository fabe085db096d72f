//! Keypoint error taxonomy: every annotated ground-truth part is labelled
//! Good, Jitter, Swap, Miss or FN KP from its keypoint similarity.

use std::fmt;

use serde::Serialize;

use crate::metrics::pose::{oks_aligned, DeepSportPart, DeepSportSkeleton, OksConfig};
use crate::types::Point;

/// KS at or above which a keypoint is Good.
pub const GOOD_KS: f64 = 0.85;
/// KS at or above which a keypoint is at least Jitter, and the cross-skeleton
/// KS at or above which a miss counts as a Swap.
pub const JITTER_KS: f64 = 0.5;
/// Round-off allowance on the boundaries: a KS within this of a threshold
/// counts as reaching it.
pub const KS_TOLERANCE: f64 = 1e-12;

fn reaches(ks: f64, threshold: f64) -> bool {
    ks >= threshold - KS_TOLERANCE
}

/// Keypoint similarity `exp(-d^2 / (2 s^2 kappa^2))`.
pub fn ks(pred: Point, gt: Point, s: f64, kappa: f64) -> f64 {
    let d2 = pred.distance_sq(gt);
    (-d2 / (2.0 * s * s * kappa * kappa)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ErrorCategory {
    Good = 0,
    Jitter,
    Swap,
    Miss,
    FnKp,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 5] = [
        ErrorCategory::Good,
        ErrorCategory::Jitter,
        ErrorCategory::Swap,
        ErrorCategory::Miss,
        ErrorCategory::FnKp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::Good => "good",
            ErrorCategory::Jitter => "jitter",
            ErrorCategory::Swap => "swap",
            ErrorCategory::Miss => "miss",
            ErrorCategory::FnKp => "fn_kp",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BreakdownReport {
    /// `counts[category][part]`.
    pub counts: [[u64; 4]; 5],
}

impl BreakdownReport {
    pub fn add(&mut self, category: ErrorCategory, part: DeepSportPart) {
        self.counts[category as usize][part as usize] += 1;
    }

    pub fn by_category(&self, category: ErrorCategory) -> u64 {
        self.counts[category as usize].iter().sum()
    }

    pub fn by_type(&self, part: DeepSportPart, category: ErrorCategory) -> u64 {
        self.counts[category as usize][part as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn merge(&mut self, other: &BreakdownReport) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }

    /// `category,keypoint_type,count`, one row per pair in fixed order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,keypoint_type,count\n");
        for c in ErrorCategory::ALL {
            for p in DeepSportPart::ALL {
                out.push_str(&format!("{},{},{}\n", c, p, self.by_type(p, c)));
            }
        }
        out
    }
}

/// One image: predicted and ground-truth skeletons with the skeleton-level
/// matching as `(pred, gt)` index pairs.
#[derive(Debug, Clone, Copy)]
pub struct BreakdownImage<'a> {
    pub preds: &'a [DeepSportSkeleton],
    pub gts: &'a [DeepSportSkeleton],
    pub matches: &'a [(usize, usize)],
}

/// Labels one predicted part against its ground truth.
///
/// `others` are the remaining ground-truth skeletons of the image. For feet,
/// either foot of another skeleton can be the swap partner.
pub fn categorize(
    pred: Option<Point>,
    gt: Point,
    part: DeepSportPart,
    s: f64,
    others: &[&DeepSportSkeleton],
    cfg: &OksConfig,
) -> ErrorCategory {
    let Some(pred) = pred else {
        return ErrorCategory::FnKp;
    };
    let kappa = cfg.kappa(part);
    let k = ks(pred, gt, s, kappa);
    if reaches(k, GOOD_KS) {
        return ErrorCategory::Good;
    }
    if reaches(k, JITTER_KS) {
        return ErrorCategory::Jitter;
    }
    let partners: &[DeepSportPart] = if part.is_foot() {
        &[DeepSportPart::Foot1, DeepSportPart::Foot2]
    } else {
        std::slice::from_ref(match part {
            DeepSportPart::Head => &DeepSportPart::Head,
            _ => &DeepSportPart::Hip,
        })
    };
    let swapped = others.iter().any(|other| {
        let so = other.scale();
        partners
            .iter()
            .filter_map(|&q| other.get(q))
            .any(|o| reaches(ks(pred, o.point, so, kappa), JITTER_KS))
    });
    if swapped {
        ErrorCategory::Swap
    } else {
        ErrorCategory::Miss
    }
}

/// Classifies every annotated part of every ground-truth skeleton.
///
/// A matched prediction is first re-labelled to its better foot assignment.
/// Parts of unmatched ground truths, and parts the matched prediction lacks,
/// are FN KP. Unmatched predictions are not counted.
pub fn classify_image(image: &BreakdownImage<'_>, cfg: &OksConfig) -> BreakdownReport {
    let mut report = BreakdownReport::default();
    let mut matched: Vec<Option<usize>> = vec![None; image.gts.len()];
    for &(p, g) in image.matches {
        if g < matched.len() && p < image.preds.len() {
            matched[g] = Some(p);
        }
    }
    for (gi, gt) in image.gts.iter().enumerate() {
        let s = gt.scale();
        let aligned = matched[gi].map(|p| oks_aligned(&image.preds[p], gt, cfg).1);
        let others: Vec<&DeepSportSkeleton> = image
            .gts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != gi)
            .map(|(_, g)| g)
            .collect();
        for part in DeepSportPart::ALL {
            let Some(g) = gt.get(part) else { continue };
            let pred = aligned.as_ref().and_then(|a| a.get(part)).map(|p| p.point);
            report.add(categorize(pred, g.point, part, s, &others, cfg), part);
        }
    }
    report
}

pub fn classify(images: &[BreakdownImage<'_>], cfg: &OksConfig) -> BreakdownReport {
    let mut total = BreakdownReport::default();
    for im in images {
        total.merge(&classify_image(im, cfg));
    }
    total
}
