//! End-to-end drivers: scene pairs to evaluation inputs, and the
//! synth → encode → decode → eval roundtrip.

use serde::Serialize;

use crate::breakdown::{classify, BreakdownImage, BreakdownReport};
use crate::decode::{decode, DecodeConfig};
use crate::encode::{encode, EncodeConfig};
use crate::error::{Error, Result};
use crate::io::{read_fieldset, write_fieldset, SceneDoc};
use crate::metrics::{convert_skeleton, evaluate, filter_court, Court, EvalReport, ImageEval, OksConfig};
use crate::synth::{synth_scene, SynthConfig};
use crate::types::{Keypoint, Scene};

/// Builds the evaluation input of one image from a ground-truth scene and a
/// decoded scene. With `use_court` and a ground-truth court, masks are kept by
/// centroid and skeletons by mean part position, on both sides.
pub fn image_eval(gt: &Scene, pred: &Scene, pred_ball: Option<Keypoint>, use_court: bool) -> Result<ImageEval> {
    if gt.grid != pred.grid {
        return Err(Error::shape(format!("grids differ: {:?} vs {:?}", gt.grid, pred.grid)));
    }
    let grid = gt.grid;
    let court = match (&gt.court, use_court) {
        (Some(v), true) => Some(Court::new(v.clone())?),
        _ => None,
    };
    let masks = |s: &Scene| {
        let all = s.players.iter().map(|p| p.mask.clone()).collect();
        filter_court(all, court.as_ref(), |m: &crate::types::InstanceMask| m.centroid(&grid))
    };
    let poses = |s: &Scene| {
        let all = s.players.iter().map(|p| convert_skeleton(&p.skeleton)).collect();
        filter_court(all, court.as_ref(), |k: &crate::metrics::DeepSportSkeleton| k.reference_point())
    };
    Ok(ImageEval {
        grid,
        gt_ball: gt.ball_mask.clone(),
        pred_ball,
        gt_masks: masks(gt),
        pred_masks: masks(pred),
        gt_poses: poses(gt),
        pred_poses: poses(pred),
    })
}

/// Evaluation inputs from ground-truth and decoded documents.
pub fn image_eval_from_docs(gt: &SceneDoc, pred: &SceneDoc, use_court: bool) -> Result<ImageEval> {
    image_eval(&gt.to_scene()?, &pred.to_scene()?, pred.ball_keypoint()?, use_court)
}

/// Breakdown over evaluated images, reusing the skeleton matching of the
/// report.
pub fn breakdown_report(images: &[ImageEval], report: &EvalReport, cfg: &OksConfig) -> BreakdownReport {
    let pairs: Vec<Vec<(usize, usize)>> = (0..images.len())
        .map(|i| {
            report
                .pose_matches
                .iter()
                .filter(|m| m.image == i)
                .map(|m| (m.pred, m.gt))
                .collect()
        })
        .collect();
    let inputs: Vec<BreakdownImage<'_>> = images
        .iter()
        .zip(&pairs)
        .map(|(im, m)| BreakdownImage { preds: &im.pred_poses, gts: &im.gt_poses, matches: m })
        .collect();
    classify(&inputs, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundtripReport {
    pub seed: u64,
    pub players: usize,
    pub psq: f64,
    pub pdq: f64,
    pub min_oks: f64,
    /// Largest distance between an encoded keypoint (ball, centres, parts)
    /// and its decoded counterpart; infinite if one was not recovered.
    pub max_keypoint_error: f64,
    pub passed: bool,
}

pub const ROUNDTRIP_QUALITY_TOL: f64 = 1e-9;
pub const ROUNDTRIP_OKS_TOL: f64 = 1e-6;
pub const ROUNDTRIP_KEYPOINT_TOL: f64 = 0.5;

/// Synthesizes a scene, encodes it, passes the fields through the binary
/// container, decodes them and evaluates against the scene.
pub fn roundtrip(synth: &SynthConfig, decode_cfg: &DecodeConfig) -> Result<(RoundtripReport, EvalReport)> {
    let scene = synth_scene(synth)?;
    let fields = read_fieldset(&write_fieldset(&encode(&scene, &EncodeConfig::default())?))?;
    let result = decode(&fields, decode_cfg)?;
    let doc = SceneDoc::from_decode(&result, scene.grid);
    let pred = doc.to_scene()?;

    let cfg = OksConfig::default();
    let image = image_eval(&scene, &pred, doc.ball_keypoint()?, false)?;
    let report = evaluate(std::slice::from_ref(&image), &cfg)?;

    let n = scene.players.len();
    let mut max_err: f64 = 0.0;
    if let Some(c) = scene.ball_centroid() {
        max_err = max_err.max(result.ball.map_or(f64::INFINITY, |b| b.point().distance(c)));
    }
    let mut matched = vec![false; n];
    for pair in report.mask_matches.iter().flat_map(|m| &m.pairs) {
        matched[pair.gt] = true;
        let gt = &scene.players[pair.gt];
        let centroid = gt.mask.centroid(&scene.grid).expect("non-empty mask");
        max_err = max_err.max(result.centers[pair.pred].point().distance(centroid));
        let got = &pred.players[pair.pred].skeleton;
        for kp in gt.skeleton.keypoints() {
            let d = got.get(kp.kind).map_or(f64::INFINITY, |g| g.point().distance(kp.point()));
            max_err = max_err.max(d);
        }
    }
    if matched.iter().any(|m| !m) {
        max_err = f64::INFINITY;
    }

    let annotated = image.gt_poses.iter().filter(|p| p.annotated() > 0).count();
    let min_oks = if annotated == 0 {
        1.0
    } else if report.pose_matches.len() < annotated {
        0.0
    } else {
        report.pose_matches.iter().map(|m| m.oks).fold(1.0, f64::min)
    };
    let quality_ok = if n == 0 {
        report.segmentation.n_pred == 0
    } else {
        (report.psq - 1.0).abs() <= ROUNDTRIP_QUALITY_TOL && (report.pdq - 1.0).abs() <= ROUNDTRIP_QUALITY_TOL
    };
    let passed = quality_ok && min_oks >= 1.0 - ROUNDTRIP_OKS_TOL && max_err <= ROUNDTRIP_KEYPOINT_TOL;
    Ok((
        RoundtripReport {
            seed: synth.seed,
            players: n,
            psq: report.psq,
            pdq: report.pdq,
            min_oks,
            max_keypoint_error: max_err,
            passed,
        },
        report,
    ))
}
