//! Benchmark metrics for region matches and dense flow.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::flowfield::FlowField;
use crate::geometry::{iou, BBox};
use crate::matching::{MatchSet, ProposalSet};
use crate::rng::SplitMix64;
use crate::tps::{tps_apply, tps_fit, GtCorrespondence, KeypointPair};

/// Default PCK tolerance as a fraction of the object box's larger side.
pub const DEFAULT_ALPHA: f64 = 0.1;
/// Number of PCR thresholds.
pub const PCR_SAMPLES: usize = 101;

/// Sampled metric curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// `PCR_SAMPLES` uniform thresholds over (0, 1], ending at 1.
pub fn pcr_thresholds() -> Vec<f64> {
    (1..=PCR_SAMPLES).map(|k| k as f64 / PCR_SAMPLES as f64).collect()
}

/// IoU between each ground-truth region's match and its ground truth, in
/// ground-truth order.
fn matched_ious(matches: &MatchSet, dst: &ProposalSet, gts: &[GtCorrespondence]) -> Result<Vec<(u32, f64, f64)>> {
    gts.iter()
        .map(|g| {
            let m = matches.get(g.src_region_id).ok_or(Error::MissingGt(g.src_region_id))?;
            let b = dst
                .regions
                .get(m.dst_id as usize)
                .ok_or_else(|| Error::Format(format!("match target {} out of range", m.dst_id)))?;
            Ok((g.src_region_id, m.score, iou(&b.bbox, &g.gt_box)))
        })
        .collect()
}

/// Probability of correct region: at each threshold, the fraction of
/// ground-truth regions with `1 - IoU(match, gt) < tau`.
pub fn pcr(matches: &MatchSet, dst: &ProposalSet, gts: &[GtCorrespondence], taus: &[f64]) -> Result<Curve> {
    if gts.is_empty() {
        return Err(Error::MissingGt(0));
    }
    let ious = matched_ious(matches, dst, gts)?;
    let n = ious.len() as f64;
    let y = taus
        .iter()
        .map(|&t| ious.iter().filter(|(_, _, v)| 1.0 - v < t).count() as f64 / n)
        .collect();
    Ok(Curve { x: taus.to_vec(), y })
}

/// Mean IoU of the `k` highest-scoring matches for `k = 1..=K`; ties by source id.
/// `k_max` defaults to the number of ground-truth regions.
pub fn miou_at_k(matches: &MatchSet, dst: &ProposalSet, gts: &[GtCorrespondence], k_max: Option<usize>) -> Result<Curve> {
    if gts.is_empty() {
        return Err(Error::MissingGt(0));
    }
    let mut ious = matched_ious(matches, dst, gts)?;
    ious.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let k_max = k_max.unwrap_or(ious.len()).min(ious.len()).max(1);
    let mut acc = 0.0;
    let mut x = Vec::with_capacity(k_max);
    let mut y = Vec::with_capacity(k_max);
    for (k, (_, _, v)) in ious.iter().take(k_max).enumerate() {
        acc += v;
        x.push((k + 1) as f64);
        y.push(acc / (k + 1) as f64);
    }
    Ok(Curve { x, y })
}

/// Trapezoidal area divided by the length of the sampled domain. A single
/// sample returns its value.
pub fn auc(curve: &Curve) -> Result<f64> {
    if curve.x.is_empty() || curve.x.len() != curve.y.len() {
        return Err(Error::EmptyInput);
    }
    if curve.x.len() == 1 {
        return Ok(curve.y[0]);
    }
    let span = curve.x[curve.x.len() - 1] - curve.x[0];
    if span <= 0.0 {
        return Err(Error::Config("curve domain must be increasing".into()));
    }
    let area: f64 = curve
        .x
        .windows(2)
        .zip(curve.y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum();
    Ok(area / span)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PckResult {
    pub alpha: f64,
    pub correct: u32,
    pub total: u32,
}

impl PckResult {
    pub fn pck(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            f64::from(self.correct) / f64::from(self.total)
        }
    }
}

/// Counts predictions strictly closer than `alpha * max(h, w)` of `bbox`.
pub fn pck_points(pred: &[(f64, f64)], truth: &[(f64, f64)], bbox: &BBox, alpha: f64) -> PckResult {
    let thresh = alpha * bbox.w.max(bbox.h);
    let correct = pred
        .iter()
        .zip(truth)
        .filter(|(p, t)| (p.0 - t.0).hypot(p.1 - t.1) < thresh)
        .count() as u32;
    PckResult { alpha, correct, total: pred.len().min(truth.len()) as u32 }
}

/// PCK of a dense flow at the source keypoints.
pub fn pck_flow(flow: &FlowField, pairs: &[KeypointPair], dst_bbox: &BBox, alpha: f64) -> Result<PckResult> {
    let (wmax, hmax) = (f64::from(flow.width) - 1.0, f64::from(flow.height) - 1.0);
    let mut pred = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (x, y) = p.src;
        if !(x >= 0.0 && y >= 0.0 && x <= wmax && y <= hmax) {
            return Err(Error::KeypointOutsideImage(x, y));
        }
        let (u, v) = flow.sample(x, y);
        pred.push((x + u, y + v));
    }
    let truth: Vec<(f64, f64)> = pairs.iter().map(|p| p.dst).collect();
    Ok(pck_points(&pred, &truth, dst_bbox, alpha))
}

/// Mean PCK of held-out keypoints predicted by a TPS fitted on the rest.
///
/// Each trial draws `n` held-out pairs with a seeded shuffle. The PCK
/// threshold uses `bbox` (default: tight box around all destination keypoints).
pub fn leave_n_out(
    pairs: &[KeypointPair],
    n: usize,
    trials: u32,
    alpha: f64,
    seed: u64,
    bbox: Option<&BBox>,
) -> Result<f64> {
    if n == 0 || n >= pairs.len() || pairs.len() - n < 3 {
        return Err(Error::TooFewKeypoints(format!(
            "leave-{n}-out needs 1 <= n and at least 3 retained of {} pairs",
            pairs.len()
        )));
    }
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let bbox = match bbox {
        Some(b) => *b,
        None => {
            let pts: Vec<(f64, f64)> = pairs.iter().map(|p| p.dst).collect();
            BBox::bounding(&pts)
                .ok_or_else(|| Error::TooFewKeypoints("destination keypoints span no area".into()))?
        }
    };
    let mut rng = SplitMix64::new(seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut total = 0.0;
    for _ in 0..trials {
        order.sort_unstable();
        rng.shuffle(&mut order);
        let (held, kept) = order.split_at(n);
        let train: Vec<KeypointPair> = kept.iter().map(|&i| pairs[i]).collect();
        let warp = tps_fit(&train)?;
        let pred: Vec<(f64, f64)> = held.iter().map(|&i| tps_apply(&warp, pairs[i].src)).collect();
        let truth: Vec<(f64, f64)> = held.iter().map(|&i| pairs[i].dst).collect();
        total += pck_points(&pred, &truth, &bbox, alpha).pck();
    }
    Ok(total / f64::from(trials))
}

/// Correct-region count at an IoU threshold, used with known true boxes.
pub fn count_correct(
    matches: &MatchSet,
    dst: &ProposalSet,
    truth: &HashMap<u32, BBox>,
    iou_thresh: f64,
) -> usize {
    matches
        .entries
        .iter()
        .filter(|m| {
            truth.get(&m.src_id).is_some_and(|t| {
                dst.regions.get(m.dst_id as usize).is_some_and(|r| iou(&r.bbox, t) >= iou_thresh)
            })
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::Match;

    fn dst_set(boxes: &[BBox]) -> ProposalSet {
        ProposalSet::from_parts(200, 200, "t", boxes.to_vec(), vec![vec![1.0]; boxes.len()]).unwrap()
    }

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox { x, y, w, h }
    }

    #[test]
    fn thresholds_grid() {
        let t = pcr_thresholds();
        assert_eq!(t.len(), 101);
        assert!(t[0] > 0.0);
        assert_eq!(*t.last().unwrap(), 1.0);
    }

    #[test]
    fn pcr_perfect_and_disjoint() {
        let boxes = [b(0., 0., 10., 10.), b(50., 50., 10., 10.)];
        let dst = dst_set(&boxes);
        let m = MatchSet { entries: vec![Match { src_id: 0, dst_id: 0, score: 1.0 }, Match { src_id: 1, dst_id: 1, score: 0.5 }] };
        let gts = vec![
            GtCorrespondence { src_region_id: 0, gt_box: boxes[0] },
            GtCorrespondence { src_region_id: 1, gt_box: boxes[1] },
        ];
        let c = pcr(&m, &dst, &gts, &pcr_thresholds()).unwrap();
        assert!(c.y.iter().all(|&v| v == 1.0));

        let far = vec![
            GtCorrespondence { src_region_id: 0, gt_box: b(100., 100., 5., 5.) },
            GtCorrespondence { src_region_id: 1, gt_box: b(150., 0., 5., 5.) },
        ];
        let c = pcr(&m, &dst, &far, &pcr_thresholds()).unwrap();
        // 1 - IoU = 1 is never strictly below tau <= 1
        assert!(c.y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pcr_strict_threshold() {
        // IoU = 1/3 -> 1 - IoU = 2/3
        let dst = dst_set(&[b(5., 0., 10., 10.)]);
        let m = MatchSet { entries: vec![Match { src_id: 0, dst_id: 0, score: 1.0 }] };
        let gts = [GtCorrespondence { src_region_id: 0, gt_box: b(0., 0., 10., 10.) }];
        let c = pcr(&m, &dst, &gts, &[0.5, 2.0 / 3.0, 0.7]).unwrap();
        assert_eq!(c.y, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn missing_gt_is_reported() {
        let dst = dst_set(&[b(5., 0., 10., 10.)]);
        let m = MatchSet { entries: vec![Match { src_id: 0, dst_id: 0, score: 1.0 }] };
        let gts = [GtCorrespondence { src_region_id: 3, gt_box: b(0., 0., 10., 10.) }];
        assert!(matches!(pcr(&m, &dst, &gts, &[0.5]), Err(Error::MissingGt(3))));
        assert!(matches!(miou_at_k(&m, &dst, &gts, None), Err(Error::MissingGt(3))));
    }

    #[test]
    fn miou_ranking() {
        let dst = dst_set(&[b(0., 0., 10., 10.), b(5., 0., 10., 10.)]);
        let m = MatchSet {
            entries: vec![
                Match { src_id: 0, dst_id: 1, score: 0.2 },
                Match { src_id: 1, dst_id: 0, score: 0.9 },
            ],
        };
        let gts = [
            GtCorrespondence { src_region_id: 0, gt_box: b(0., 0., 10., 10.) },
            GtCorrespondence { src_region_id: 1, gt_box: b(0., 0., 10., 10.) },
        ];
        let c = miou_at_k(&m, &dst, &gts, None).unwrap();
        assert_eq!(c.x, vec![1.0, 2.0]);
        assert_eq!(c.y[0], 1.0);
        assert!((c.y[1] - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn auc_examples() {
        let x: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(auc(&Curve { x: x.clone(), y: vec![1.0; 11] }).unwrap(), 1.0);
        assert_eq!(auc(&Curve { x: x.clone(), y: vec![0.0; 11] }).unwrap(), 0.0);
        assert!((auc(&Curve { x: x.clone(), y: x.clone() }).unwrap() - 0.5).abs() < 1e-15);
        assert!(auc(&Curve { x: vec![], y: vec![] }).is_err());
    }

    #[test]
    fn auc_refinement_invariant_for_piecewise_linear() {
        let coarse = Curve { x: vec![0.0, 0.3, 1.0], y: vec![0.1, 0.9, 0.4] };
        let f = |t: f64| if t <= 0.3 { 0.1 + (0.8 / 0.3) * t } else { 0.9 - 0.5 * (t - 0.3) / 0.7 };
        let mut fx: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        fx.push(0.3);
        fx.sort_by(f64::total_cmp);
        fx.dedup();
        let fine = Curve { y: fx.iter().map(|&t| f(t)).collect(), x: fx };
        assert!((auc(&coarse).unwrap() - auc(&fine).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn pck_examples() {
        let flow = FlowField::constant(50, 50, 0.0, 0.0);
        let pairs = [KeypointPair::new(3.0, 4.0, 3.0, 4.0), KeypointPair::new(10.5, 20.0, 10.5, 20.0)];
        let bbox = b(0., 0., 40., 20.);
        let r = pck_flow(&flow, &pairs, &bbox, 0.1).unwrap();
        assert_eq!((r.correct, r.total, r.pck()), (2, 2, 1.0));
        // exactly at the 4 px threshold: not counted
        let edge = [KeypointPair::new(3.0, 4.0, 7.0, 4.0)];
        assert_eq!(pck_flow(&flow, &edge, &bbox, 0.1).unwrap().correct, 0);
        let near = [KeypointPair::new(3.0, 4.0, 6.999, 4.0)];
        assert_eq!(pck_flow(&flow, &near, &bbox, 0.1).unwrap().correct, 1);
        let outside = [KeypointPair::new(50.0, 4.0, 7.0, 4.0)];
        assert!(matches!(pck_flow(&flow, &outside, &bbox, 0.1), Err(Error::KeypointOutsideImage(..))));
    }

    #[test]
    fn pck_translation_invariant() {
        let mut flow = FlowField::constant(40, 40, 0.0, 0.0);
        for (i, u) in flow.u.iter_mut().enumerate() {
            *u = (i % 7) as f64 * 0.9;
        }
        let pairs = [KeypointPair::new(3.0, 4.0, 5.0, 4.0), KeypointPair::new(20.0, 30.0, 24.0, 31.0), KeypointPair::new(7.5, 9.25, 9.0, 9.0)];
        let bbox = b(0., 0., 30., 30.);
        let base = pck_flow(&flow, &pairs, &bbox, 0.1).unwrap();
        let (tx, ty) = (6.0, -3.0);
        let mut moved_flow = flow.clone();
        moved_flow.u.iter_mut().for_each(|u| *u += tx);
        moved_flow.v.iter_mut().for_each(|v| *v += ty);
        let moved: Vec<_> = pairs.iter().map(|p| KeypointPair::new(p.src.0, p.src.1, p.dst.0 + tx, p.dst.1 + ty)).collect();
        let r = pck_flow(&moved_flow, &moved, &bbox.translate(tx, ty), 0.1).unwrap();
        assert_eq!(r, base);
    }

    #[test]
    fn leave_n_out_affine_is_perfect_and_deterministic() {
        let mut rng = SplitMix64::new(77);
        let pairs: Vec<KeypointPair> = (0..10)
            .map(|_| {
                let (x, y) = (rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0));
                KeypointPair::new(x, y, 0.8 * x + 0.1 * y + 12.0, -0.2 * x + 1.1 * y - 3.0)
            })
            .collect();
        for n in 1..=7 {
            assert_eq!(leave_n_out(&pairs, n, 5, 0.1, 3, None).unwrap(), 1.0);
        }
        let a = leave_n_out(&pairs, 2, 10, 0.05, 9, None).unwrap();
        assert_eq!(a, leave_n_out(&pairs, 2, 10, 0.05, 9, None).unwrap());
        assert!(matches!(leave_n_out(&pairs, 8, 1, 0.1, 0, None), Err(Error::TooFewKeypoints(_))));
        assert!(matches!(leave_n_out(&pairs, 0, 1, 0.1, 0, None), Err(Error::TooFewKeypoints(_))));
    }

    #[test]
    fn correct_count_uses_iou_threshold() {
        let dst = dst_set(&[b(0., 0., 10., 10.), b(5., 0., 10., 10.)]);
        let m = MatchSet {
            entries: vec![
                Match { src_id: 0, dst_id: 0, score: 1.0 },
                Match { src_id: 1, dst_id: 1, score: 1.0 },
                Match { src_id: 2, dst_id: 0, score: 1.0 },
            ],
        };
        let truth: HashMap<u32, BBox> = [(0, b(0., 0., 10., 10.)), (1, b(0., 0., 10., 10.))].into_iter().collect();
        assert_eq!(count_correct(&m, &dst, &truth, 0.5), 1);
        assert_eq!(count_correct(&m, &dst, &truth, 1.0 / 3.0), 2);
    }
}
