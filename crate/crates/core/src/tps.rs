//! Thin-plate-spline warps and keypoint-driven region ground truth.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::matching::ProposalSet;

/// Minimum fraction of a region's own area inside the object box for the
/// region to receive ground truth.
pub const RS_MIN_OVERLAP: f64 = 0.75;
/// Source keypoints closer than this are duplicates.
const DUPLICATE_EPS: f64 = 1e-6;
/// Warped regions thinner than this (px) count as collapsed.
const DEGENERATE_EXTENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointPair {
    pub src: (f64, f64),
    pub dst: (f64, f64),
}

impl KeypointPair {
    pub fn new(sx: f64, sy: f64, dx: f64, dy: f64) -> Self {
        Self { src: (sx, sy), dst: (dx, dy) }
    }
}

/// Fitted 2-D thin-plate spline. Each output coordinate is
/// `a0 + ax * x + ay * y + sum_i w_i U(|p - c_i|)` with `U(r) = r^2 ln r^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TpsWarp {
    pub control_points: Vec<(f64, f64)>,
    /// `[a0, ax, ay]` for the x and y outputs.
    pub affine: [[f64; 3]; 2],
    /// Nonlinear coefficients `[w_x, w_y]` per control point.
    pub weights: Vec<[f64; 2]>,
    pub lambda: f64,
}

/// `U(r) = r^2 ln r^2` expressed in terms of `r^2`; zero at the origin.
pub fn tps_kernel(r2: f64) -> f64 {
    if r2 <= 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

/// Interpolating fit (`lambda = 0`).
pub fn tps_fit(pairs: &[KeypointPair]) -> Result<TpsWarp> {
    tps_fit_regularized(pairs, 0.0)
}

/// Fit with `lambda` added to the kernel diagonal; `lambda = 0` interpolates.
pub fn tps_fit_regularized(pairs: &[KeypointPair], lambda: f64) -> Result<TpsWarp> {
    let m = pairs.len();
    if m < 3 {
        return Err(Error::TooFewKeypoints(format!("TPS needs at least 3 pairs, got {m}")));
    }
    if pairs.iter().any(|p| !(p.src.0.is_finite() && p.src.1.is_finite() && p.dst.0.is_finite() && p.dst.1.is_finite())) {
        return Err(Error::DegenerateControlPoints("non-finite keypoint".into()));
    }
    check_configuration(pairs)?;

    let n = m + 3;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DMatrix::<f64>::zeros(n, 2);
    for (i, pi) in pairs.iter().enumerate() {
        for (j, pj) in pairs.iter().enumerate() {
            let (dx, dy) = (pi.src.0 - pj.src.0, pi.src.1 - pj.src.1);
            a[(i, j)] = tps_kernel(dx * dx + dy * dy);
        }
        a[(i, i)] += lambda;
        for (k, v) in [1.0, pi.src.0, pi.src.1].into_iter().enumerate() {
            a[(i, m + k)] = v;
            a[(m + k, i)] = v;
        }
        b[(i, 0)] = pi.dst.0;
        b[(i, 1)] = pi.dst.1;
    }
    let lu = a.full_piv_lu();
    if !lu.is_invertible() {
        return Err(Error::DegenerateControlPoints("singular TPS system".into()));
    }
    let sol = lu
        .solve(&b)
        .ok_or_else(|| Error::DegenerateControlPoints("singular TPS system".into()))?;
    let col = |c: usize| -> DVector<f64> { sol.column(c).into_owned() };
    let (sx, sy) = (col(0), col(1));
    Ok(TpsWarp {
        control_points: pairs.iter().map(|p| p.src).collect(),
        affine: [[sx[m], sx[m + 1], sx[m + 2]], [sy[m], sy[m + 1], sy[m + 2]]],
        weights: (0..m).map(|i| [sx[i], sy[i]]).collect(),
        lambda,
    })
}

/// Rejects duplicate and collinear source points.
fn check_configuration(pairs: &[KeypointPair]) -> Result<()> {
    for (i, p) in pairs.iter().enumerate() {
        for q in &pairs[i + 1..] {
            if (p.src.0 - q.src.0).hypot(p.src.1 - q.src.1) < DUPLICATE_EPS {
                return Err(Error::DegenerateControlPoints(format!(
                    "duplicate source keypoint ({}, {})",
                    p.src.0, p.src.1
                )));
            }
        }
    }
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.src.0 / n, acc.1 + p.src.1 / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pairs {
        let (dx, dy) = (p.src.0 - mx, p.src.1 - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let trace = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    if trace == 0.0 || det <= 1e-12 * trace * trace {
        return Err(Error::DegenerateControlPoints("source keypoints are collinear".into()));
    }
    Ok(())
}

impl TpsWarp {
    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        tps_apply(self, p)
    }

    /// Largest absolute nonlinear coefficient.
    pub fn max_abs_weight(&self) -> f64 {
        self.weights.iter().flat_map(|w| w.iter()).fold(0.0, |a: f64, &b| a.max(b.abs()))
    }

    /// `[sum w, sum w x, sum w y]` for each output coordinate; zero for a valid fit.
    pub fn side_conditions(&self) -> [[f64; 3]; 2] {
        let mut out = [[0.0; 3]; 2];
        for (c, w) in self.control_points.iter().zip(&self.weights) {
            for k in 0..2 {
                out[k][0] += w[k];
                out[k][1] += w[k] * c.0;
                out[k][2] += w[k] * c.1;
            }
        }
        out
    }
}

pub fn tps_apply(w: &TpsWarp, p: (f64, f64)) -> (f64, f64) {
    let mut out = [
        w.affine[0][0] + w.affine[0][1] * p.0 + w.affine[0][2] * p.1,
        w.affine[1][0] + w.affine[1][1] * p.0 + w.affine[1][2] * p.1,
    ];
    for (c, wt) in w.control_points.iter().zip(&w.weights) {
        let (dx, dy) = (p.0 - c.0, p.1 - c.1);
        let u = tps_kernel(dx * dx + dy * dy);
        out[0] += wt[0] * u;
        out[1] += wt[1] * u;
    }
    (out[0], out[1])
}

/// Ids of regions with at least 75% of their own area inside `bbox`.
pub fn select_rs(set: &ProposalSet, bbox: &BBox) -> Vec<u32> {
    set.regions
        .iter()
        .filter(|r| r.bbox.intersection_area(bbox) / r.bbox.area() >= RS_MIN_OVERLAP)
        .map(|r| r.id)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtCorrespondence {
    pub src_region_id: u32,
    pub gt_box: BBox,
}

/// Tight axis-aligned rectangle around the warped corners of `region`.
pub fn gt_region(w: &TpsWarp, src_region_id: u32, region: &BBox) -> Result<GtCorrespondence> {
    let corners = [
        (region.x, region.y),
        (region.right(), region.y),
        (region.x, region.bottom()),
        (region.right(), region.bottom()),
    ];
    let warped: Vec<(f64, f64)> = corners.iter().map(|&c| tps_apply(w, c)).collect();
    let gt_box = BBox::bounding(&warped).ok_or(Error::DegenerateGt)?;
    if gt_box.w < DEGENERATE_EXTENT || gt_box.h < DEGENERATE_EXTENT {
        return Err(Error::DegenerateGt);
    }
    Ok(GtCorrespondence { src_region_id, gt_box })
}

/// Ground truth for every region selected by `src_bbox`. With `dst_bbox`, the
/// warped boxes must also pass the overlap rule against the destination box.
pub fn generate_gt(
    w: &TpsWarp,
    set: &ProposalSet,
    src_bbox: &BBox,
    dst_bbox: Option<&BBox>,
) -> Result<Vec<GtCorrespondence>> {
    let mut out = Vec::new();
    for id in select_rs(set, src_bbox) {
        let gt = gt_region(w, id, &set.regions[id as usize].bbox)?;
        if let Some(d) = dst_bbox {
            if gt.gt_box.intersection_area(d) / gt.gt_box.area() < RS_MIN_OVERLAP {
                continue;
            }
        }
        out.push(gt);
    }
    Ok(out)
}
