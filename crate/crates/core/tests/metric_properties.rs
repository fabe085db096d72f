use proptest::prelude::*;

use courtside::breakdown::{classify, BreakdownImage};
use courtside::metrics::{
    ball_roc, match_masks, match_poses, oks, peq, psq_pdq, BallRecord, DeepSportSkeleton, OksConfig, PartPoint,
};
use courtside::{InstanceMask, Point};

fn part_strategy() -> impl Strategy<Value = Option<(f64, f64)>> {
    prop_oneof![1 => Just(None), 4 => (0.0f64..200.0, 0.0f64..200.0).prop_map(Some)]
}

fn skeleton_strategy() -> impl Strategy<Value = DeepSportSkeleton> {
    ([part_strategy(), part_strategy(), part_strategy(), part_strategy()], 0.05f64..1.0).prop_map(|(parts, c)| {
        DeepSportSkeleton {
            parts: parts.map(|p| p.map(|(x, y)| PartPoint { point: Point::new(x, y), confidence: c })),
            confidence: c,
        }
    })
}

fn scaled(s: &DeepSportSkeleton, k: f64) -> DeepSportSkeleton {
    let mut out = *s;
    for p in out.parts.iter_mut().flatten() {
        p.point = Point::new(p.point.x * k, p.point.y * k);
    }
    out
}

/// Categories re-derived from raw KS values, independent of the library's
/// control flow.
fn oracle_categories(preds: &[DeepSportSkeleton], gts: &[DeepSportSkeleton], matches: &[(usize, usize)], cfg: &OksConfig) -> [[u64; 4]; 5] {
    let ks = |a: Point, b: Point, s: f64, k: f64| (-(a.distance_sq(b)) / (2.0 * s * s * k * k)).exp();
    let mut counts = [[0u64; 4]; 5];
    for (gi, gt) in gts.iter().enumerate() {
        let s = gt.scale();
        let pred = matches.iter().find(|m| m.1 == gi).map(|m| preds[m.0]);
        // both feet assignments, scored by hand
        let aligned = pred.map(|p| {
            let score = |q: &DeepSportSkeleton| {
                let mut t = 0.0;
                for (i, g) in gt.parts.iter().enumerate() {
                    if let (Some(g), Some(pp)) = (g, q.parts[i]) {
                        t += ks(pp.point, g.point, s, cfg.kappa[i]);
                    }
                }
                t
            };
            let mut sw = p;
            sw.parts.swap(2, 3);
            if score(&sw) > score(&p) { sw } else { p }
        });
        for (i, g) in gt.parts.iter().enumerate() {
            let Some(g) = g else { continue };
            let cat = match aligned.and_then(|a| a.parts[i]) {
                None => 4,
                Some(pp) => {
                    let k = ks(pp.point, g.point, s, cfg.kappa[i]);
                    if k >= 0.85 - 1e-12 {
                        0
                    } else if k >= 0.5 - 1e-12 {
                        1
                    } else {
                        let partners: Vec<usize> = if i >= 2 { vec![2, 3] } else { vec![i] };
                        let swap = gts.iter().enumerate().filter(|(j, _)| *j != gi).any(|(_, o)| {
                            partners.iter().filter_map(|&q| o.parts[q]).any(|op| ks(pp.point, op.point, o.scale(), cfg.kappa[i]) >= 0.5 - 1e-12)
                        });
                        if swap { 2 } else { 3 }
                    }
                }
            };
            counts[cat][i] += 1;
        }
    }
    counts
}

proptest! {
    #[test]
    fn breakdown_matches_brute_force(
        gts in proptest::collection::vec(skeleton_strategy(), 0..=3),
        preds in proptest::collection::vec(skeleton_strategy(), 0..=3),
    ) {
        let cfg = OksConfig::default();
        let matches: Vec<(usize, usize)> = match_poses(0, &preds, &gts, &cfg).iter().map(|m| (m.pred, m.gt)).collect();
        let r = classify(&[BreakdownImage { preds: &preds, gts: &gts, matches: &matches }], &cfg);
        prop_assert_eq!(r.counts, oracle_categories(&preds, &gts, &matches, &cfg));
        let annotated: u64 = gts.iter().map(|g| g.annotated() as u64).sum();
        prop_assert_eq!(r.total(), annotated);
    }

    #[test]
    fn oks_and_breakdown_are_scale_invariant(
        gts in proptest::collection::vec(skeleton_strategy(), 1..=3),
        preds in proptest::collection::vec(skeleton_strategy(), 1..=3),
        k in prop_oneof![Just(0.5f64), Just(2.0), Just(4.0)],
    ) {
        let cfg = OksConfig::default();
        for p in &preds {
            for g in &gts {
                let (a, b) = (oks(p, g, &cfg), oks(&scaled(p, k), &scaled(g, k), &cfg));
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn recall_is_monotone_and_pq_is_product(
        gts in proptest::collection::vec(proptest::collection::vec(skeleton_strategy(), 0..4), 1..4),
        noise in proptest::collection::vec(-8.0f64..8.0, 16),
    ) {
        let cfg = OksConfig::default();
        let preds: Vec<Vec<DeepSportSkeleton>> = gts
            .iter()
            .map(|img| img.iter().enumerate().map(|(i, g)| {
                let mut p = *g;
                for (j, part) in p.parts.iter_mut().flatten().enumerate() {
                    part.point.x += noise[(i * 4 + j) % 16];
                }
                p
            }).collect())
            .collect();
        let q = peq(&preds, &gts, &cfg).unwrap();
        prop_assert!(q.per_threshold.windows(2).all(|w| w[1].recall <= w[0].recall));
        prop_assert!((0.0..=1.0).contains(&q.ap) && (0.0..=1.0).contains(&q.ar));

        let masks: Vec<InstanceMask> = (0..gts.len() as u32).map(|i| InstanceMask::new(i, (i * 10..i * 10 + 5 + i).collect())).collect();
        let preds_m: Vec<InstanceMask> = (0..gts.len() as u32).map(|i| InstanceMask::new(i, (i * 10 + 1..i * 10 + 6).collect())).collect();
        let s = psq_pdq(&[match_masks(&preds_m, &masks)]);
        prop_assert!((s.pq - s.psq * s.pdq).abs() < 1e-15);
    }

    #[test]
    fn roc_is_monotone(records in proptest::collection::vec((any::<bool>(), any::<bool>(), proptest::option::of(0u8..5)), 1..20)) {
        let recs: Vec<BallRecord> = records
            .iter()
            .map(|&(a, i, c)| BallRecord { confidence: c.map(|c| c as f64 / 4.0), inside: a && i && c.is_some(), annotated: a })
            .collect();
        let (roc, auc) = ball_roc(&recs).unwrap();
        prop_assert!(roc.windows(2).all(|w| w[1].tau < w[0].tau && w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
        prop_assert!((0.0..=1.0).contains(&auc));
    }
}

#[test]
fn peq_examples() {
    let cfg = OksConfig::default();
    let g = DeepSportSkeleton {
        parts: [Some(PartPoint { point: Point::new(10.0, 0.0), confidence: 1.0 }), Some(PartPoint { point: Point::new(10.0, 40.0), confidence: 1.0 }), None, None],
        confidence: 1.0,
    };
    let mut second = g;
    second.confidence = 0.8;
    second.parts[0].as_mut().unwrap().point.x += 0.5;
    let mut first = g;
    first.confidence = 0.9;
    let q = peq(&[vec![first, second]], &[vec![g]], &cfg).unwrap();
    assert!(q.per_threshold.iter().all(|r| r.precision == 0.5 && r.recall == 1.0));
    assert_eq!(q.matches.len(), 1);
    assert_eq!(q.matches[0].pred, 0);
}
