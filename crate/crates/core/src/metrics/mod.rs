//! Evaluation: ball detection (bDQ), player segmentation (pSQ, pDQ, PQ) and
//! pose estimation (AP, AR, F1 over OKS thresholds).

pub mod ball;
pub mod court;
pub mod pose;
pub mod segmentation;

use rayon::prelude::*;
use serde::Serialize;

pub use ball::{ball_roc, BallRecord, RocPoint};
pub use court::{filter_court, Court};
pub use pose::{
    convert_skeleton, match_poses, oks, oks_aligned, peq, pose_quality, DeepSportPart, DeepSportSkeleton, OksConfig,
    PartPoint, PoseMatch, PoseQuality, ThresholdRow,
};
pub use segmentation::{match_masks, psq_pdq, MaskMatching, MaskPair, SegmentationQuality};

use crate::error::{Error, Result};
use crate::types::{GridSpec, InstanceMask, Keypoint};

/// Everything needed to score one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEval {
    pub grid: GridSpec,
    pub gt_ball: Option<Vec<u32>>,
    pub pred_ball: Option<Keypoint>,
    pub gt_masks: Vec<InstanceMask>,
    pub pred_masks: Vec<InstanceMask>,
    pub gt_poses: Vec<DeepSportSkeleton>,
    pub pred_poses: Vec<DeepSportSkeleton>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub images: usize,
    pub bdq: f64,
    pub psq: f64,
    pub pdq: f64,
    pub pq: f64,
    pub ap: f64,
    pub ar: f64,
    pub f1: f64,
    pub segmentation: SegmentationQuality,
    pub roc: Vec<RocPoint>,
    pub per_threshold: Vec<ThresholdRow>,
    pub pose_matches: Vec<PoseMatch>,
    pub mask_matches: Vec<MaskMatching>,
}

impl EvalReport {
    /// `tau,fpr,tpr` rows; the origin sentinel is written as `inf`.
    pub fn roc_csv(&self) -> String {
        let mut out = String::from("tau,fpr,tpr\n");
        for p in &self.roc {
            out.push_str(&format!("{},{},{}\n", p.tau, p.fpr, p.tpr));
        }
        out
    }

    /// `tau,precision,recall` rows.
    pub fn pr_csv(&self) -> String {
        let mut out = String::from("tau,precision,recall\n");
        for r in &self.per_threshold {
            out.push_str(&format!("{},{},{}\n", r.tau, r.precision, r.recall));
        }
        out
    }
}

/// Scores a set of images. Per-image matching runs in parallel; results are
/// reduced in image order.
pub fn evaluate(images: &[ImageEval], cfg: &OksConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::domain("nothing to evaluate"));
    }
    let per_image: Vec<(BallRecord, MaskMatching, Vec<PoseMatch>)> = images
        .par_iter()
        .enumerate()
        .map(|(i, im)| {
            (
                BallRecord::new(im.pred_ball.as_ref(), im.gt_ball.as_deref(), &im.grid),
                match_masks(&im.pred_masks, &im.gt_masks),
                match_poses(i, &im.pred_poses, &im.gt_poses, cfg),
            )
        })
        .collect();

    let records: Vec<BallRecord> = per_image.iter().map(|r| r.0).collect();
    let (roc, bdq) = ball_roc(&records)?;

    let mask_matches: Vec<MaskMatching> = per_image.iter().map(|r| r.1.clone()).collect();
    let seg = psq_pdq(&mask_matches);

    let matches: Vec<PoseMatch> = per_image.into_iter().flat_map(|r| r.2).collect();
    let n_pred = images.iter().map(|im| im.pred_poses.len()).sum();
    let n_gt = images
        .iter()
        .flat_map(|im| &im.gt_poses)
        .filter(|g| g.annotated() > 0)
        .count();
    let pose = pose_quality(matches, n_pred, n_gt, &cfg.oks_thresholds);

    Ok(EvalReport {
        images: images.len(),
        bdq,
        psq: seg.psq,
        pdq: seg.pdq,
        pq: seg.pq,
        ap: pose.ap,
        ar: pose.ar,
        f1: pose.f1,
        segmentation: seg,
        roc,
        per_threshold: pose.per_threshold,
        pose_matches: pose.matches,
        mask_matches,
    })
}
