//! Player segmentation quality: IoU matching of instance masks.

use serde::Serialize;

use crate::types::InstanceMask;

/// IoU at or above which a predicted mask is a true positive.
pub const MASK_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaskPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MaskMatching {
    pub pairs: Vec<MaskPair>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
}

impl MaskMatching {
    pub fn n_pred(&self) -> usize {
        self.pairs.len() + self.unmatched_pred.len()
    }

    pub fn n_gt(&self) -> usize {
        self.pairs.len() + self.unmatched_gt.len()
    }
}

/// One-to-one matching of predicted and ground-truth masks of one image.
///
/// Candidate pairs with IoU >= 0.5 are accepted greedily in descending IoU
/// (ties by predicted then ground-truth index). Above 0.5 a mask has at most
/// one partner, so the result is the unique optimal matching. Pairs are
/// returned sorted by predicted index.
pub fn match_masks(pred: &[InstanceMask], gt: &[InstanceMask]) -> MaskMatching {
    let mut candidates = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let iou = p.iou(g);
            if iou >= MASK_IOU_THRESHOLD {
                candidates.push(MaskPair { pred: i, gt: j, iou });
            }
        }
    }
    candidates.sort_by(|a, b| b.iou.total_cmp(&a.iou).then(a.pred.cmp(&b.pred)).then(a.gt.cmp(&b.gt)));
    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !pred_used[c.pred] && !gt_used[c.gt] {
            pred_used[c.pred] = true;
            gt_used[c.gt] = true;
            pairs.push(c);
        }
    }
    pairs.sort_by_key(|p| p.pred);
    MaskMatching {
        pairs,
        unmatched_pred: (0..pred.len()).filter(|&i| !pred_used[i]).collect(),
        unmatched_gt: (0..gt.len()).filter(|&j| !gt_used[j]).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentationQuality {
    pub psq: f64,
    pub pdq: f64,
    pub pq: f64,
    pub tp: usize,
    pub n_pred: usize,
    pub n_gt: usize,
}

/// Mean TP IoU, detection F1 `2|TP| / (N + N*)`, and their product, over the
/// matchings of all images.
pub fn psq_pdq(matchings: &[MaskMatching]) -> SegmentationQuality {
    let tp: usize = matchings.iter().map(|m| m.pairs.len()).sum();
    let n_pred: usize = matchings.iter().map(|m| m.n_pred()).sum();
    let n_gt: usize = matchings.iter().map(|m| m.n_gt()).sum();
    let iou_sum: f64 = matchings.iter().flat_map(|m| &m.pairs).map(|p| p.iou).sum();
    let psq = if tp == 0 { 0.0 } else { iou_sum / tp as f64 };
    let pdq = if n_pred + n_gt == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (n_pred + n_gt) as f64
    };
    SegmentationQuality { psq, pdq, pq: psq * pdq, tp, n_pred, n_gt }
}
