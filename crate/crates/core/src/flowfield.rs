//! Dense flow from region matches.
//!
//! Every pixel takes the best-scoring match among the proposals that cover
//! it (its anchor match) and is carried through the box-to-box map of that
//! match. When several pixels land on the same target pixel only the highest
//! scoring one survives; the remaining holes are filled by a normalized,
//! optionally edge-aware, average of valid flow.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::image::{bilinear_clamped, RasterImage};
use crate::matching::{MatchSet, ProposalSet};
use crate::par::map_indices;

/// Spatial bandwidth of hole filling, in pixels.
pub const FILL_SIGMA_SPATIAL: f64 = 4.0;
/// Guide-intensity bandwidth of hole filling, in gray levels.
pub const FILL_SIGMA_GUIDE: f64 = 10.0;
/// Half-width of the first hole-filling window (9x9).
const FILL_START_RADIUS: usize = 4;

/// Per-pixel displacement from the first image's grid into the second image.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: u32,
    pub height: u32,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub score: Vec<f64>,
    pub valid: Vec<bool>,
}

impl FlowField {
    /// All-invalid field of zeros.
    pub fn empty(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self { width, height, u: vec![0.0; n], v: vec![0.0; n], score: vec![0.0; n], valid: vec![false; n] }
    }

    /// Fully valid field with constant displacement.
    pub fn constant(width: u32, height: u32, u: f64, v: f64) -> Self {
        let n = width as usize * height as usize;
        Self { width, height, u: vec![u; n], v: vec![v; n], score: vec![0.0; n], valid: vec![true; n] }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Bilinear sample of `(u, v)` with edge clamping.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        let (w, h) = (self.width as usize, self.height as usize);
        (
            bilinear_clamped(w, h, x, y, |i| self.u[i]),
            bilinear_clamped(w, h, x, y, |i| self.v[i]),
        )
    }

    /// Largest absolute displacement component over valid pixels.
    pub fn max_abs_valid(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.v)
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .map(|((u, v), _)| u.abs().max(v.abs()))
            .fold(0.0, f64::max)
    }
}

/// Per-pixel covering region with the highest match score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorIndex {
    pub width: u32,
    pub height: u32,
    pub anchor: Vec<Option<u32>>,
}

/// Inclusive-exclusive integer range of pixel coordinates `p` with `lo <= p < hi`, clipped to `0..n`.
fn pixel_span(lo: f64, hi: f64, n: u32) -> std::ops::Range<u32> {
    let a = lo.ceil().max(0.0);
    let b = hi.ceil().min(f64::from(n)).max(a);
    a as u32..b as u32
}

pub fn build_anchor_index(src: &ProposalSet, matches: &MatchSet) -> AnchorIndex {
    let (w, h) = (src.image_width, src.image_height);
    let mut anchor: Vec<Option<u32>> = vec![None; w as usize * h as usize];
    let mut best = vec![f64::NEG_INFINITY; anchor.len()];
    // regions in ascending id order with strict improvement: ties keep the lowest id
    for r in &src.regions {
        let Some(m) = matches.get(r.id) else { continue };
        let b = &r.bbox;
        for py in pixel_span(b.y, b.bottom(), h) {
            for px in pixel_span(b.x, b.right(), w) {
                let i = py as usize * w as usize + px as usize;
                if m.score > best[i] {
                    best[i] = m.score;
                    anchor[i] = Some(r.id);
                }
            }
        }
    }
    AnchorIndex { width: w, height: h, anchor }
}

/// Carries anchored pixels through their anchor match's box map and removes
/// target collisions, keeping the highest score (earliest pixel on ties).
pub fn synthesize_flow(
    src: &ProposalSet,
    dst: &ProposalSet,
    matches: &MatchSet,
    anchors: &AnchorIndex,
) -> FlowField {
    let mut flow = FlowField::empty(anchors.width, anchors.height);
    let w = anchors.width as usize;
    let mut owner: HashMap<(i64, i64), usize> = HashMap::new();
    for (i, a) in anchors.anchor.iter().enumerate() {
        let Some(r) = a else { continue };
        let Some(m) = matches.get(*r) else { continue };
        let s = &src.regions[*r as usize].bbox;
        let t = &dst.regions[m.dst_id as usize].bbox;
        let (px, py) = ((i % w) as f64, (i / w) as f64);
        let tx = t.x + (px - s.x) * t.w / s.w;
        let ty = t.y + (py - s.y) * t.h / s.h;
        flow.u[i] = tx - px;
        flow.v[i] = ty - py;
        flow.score[i] = m.score;
        flow.valid[i] = true;
        let key = (tx.round() as i64, ty.round() as i64);
        match owner.get(&key) {
            Some(&prev) if flow.score[prev] >= m.score => flow.valid[i] = false,
            Some(&prev) => {
                flow.valid[prev] = false;
                owner.insert(key, i);
            }
            None => {
                owner.insert(key, i);
            }
        }
    }
    flow
}

/// Fills invalid pixels with the default bandwidths.
pub fn fill_holes(flow: &FlowField, guide: Option<&RasterImage>) -> Result<FlowField> {
    fill_holes_with(flow, guide, FILL_SIGMA_SPATIAL, FILL_SIGMA_GUIDE)
}

/// Every invalid pixel receives the normalized average of valid flow inside
/// the smallest window (9x9, then doubling the half-width) that holds any
/// valid pixel, weighted by `exp(-d^2 / 2 sigma_s^2)` and, with a guide, by
/// `exp(-(I(p) - I(q))^2 / 2 sigma_g^2)`. Only originally valid pixels
/// contribute, so the result does not depend on visiting order.
pub fn fill_holes_with(
    flow: &FlowField,
    guide: Option<&RasterImage>,
    sigma_s: f64,
    sigma_g: f64,
) -> Result<FlowField> {
    let (w, h) = (flow.width as usize, flow.height as usize);
    if let Some(g) = guide {
        if g.width != flow.width || g.height != flow.height {
            return Err(Error::Config(format!(
                "guide image {}x{} does not match flow {}x{}",
                g.width, g.height, flow.width, flow.height
            )));
        }
    }
    if flow.valid_count() == 0 {
        return Err(Error::NoValidFlow);
    }
    let lum = guide.map(|g| g.luminance());

    // summed-area table of validity for O(1) window occupancy queries
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0u32;
        for x in 0..w {
            row += u32::from(flow.valid[y * w + x]);
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let count = |x0: usize, y0: usize, x1: usize, y1: usize| {
        sat[(y1 + 1) * (w + 1) + x1 + 1] + sat[y0 * (w + 1) + x0]
            - sat[y0 * (w + 1) + x1 + 1]
            - sat[(y1 + 1) * (w + 1) + x0]
    };
    let inv_s = 1.0 / (2.0 * sigma_s * sigma_s);
    let inv_g = 1.0 / (2.0 * sigma_g * sigma_g);

    let filled = map_indices(h, |y| {
        let mut row = Vec::with_capacity(w);
        for x in 0..w {
            let p = y * w + x;
            if flow.valid[p] {
                row.push((flow.u[p], flow.v[p]));
                continue;
            }
            let mut r = FILL_START_RADIUS;
            let window = loop {
                let (x0, y0) = (x.saturating_sub(r), y.saturating_sub(r));
                let (x1, y1) = ((x + r).min(w - 1), (y + r).min(h - 1));
                if count(x0, y0, x1, y1) > 0 {
                    break (x0, y0, x1, y1);
                }
                r *= 2;
            };
            // accumulate deviations from a reference sample so a constant field is reproduced exactly
            let mut reference = None;
            let (mut su, mut sv, mut sw) = (0.0, 0.0, 0.0);
            for qy in window.1..=window.3 {
                for qx in window.0..=window.2 {
                    let q = qy * w + qx;
                    if !flow.valid[q] {
                        continue;
                    }
                    let dx = qx as f64 - x as f64;
                    let dy = qy as f64 - y as f64;
                    let mut e = (dx * dx + dy * dy) * inv_s;
                    if let Some(l) = &lum {
                        let di = l[p] - l[q];
                        e += di * di * inv_g;
                    }
                    let wt = (-e).exp();
                    let (ru, rv) = *reference.get_or_insert((flow.u[q], flow.v[q]));
                    su += wt * (flow.u[q] - ru);
                    sv += wt * (flow.v[q] - rv);
                    sw += wt;
                }
            }
            if let (true, Some((ru, rv))) = (sw > 0.0, reference) {
                row.push((ru + su / sw, rv + sv / sw));
            } else {
                // all weights underflowed: fall back to the nearest valid pixel
                row.push(nearest_valid(flow, x, y, window));
            }
        }
        row
    });

    let mut out = flow.clone();
    for (y, row) in filled.into_iter().enumerate() {
        for (x, (u, v)) in row.into_iter().enumerate() {
            let p = y * w + x;
            out.u[p] = u;
            out.v[p] = v;
            out.valid[p] = true;
        }
    }
    Ok(out)
}

fn nearest_valid(flow: &FlowField, x: usize, y: usize, win: (usize, usize, usize, usize)) -> (f64, f64) {
    let w = flow.width as usize;
    let mut best = (f64::INFINITY, (0.0, 0.0));
    for qy in win.1..=win.3 {
        for qx in win.0..=win.2 {
            let q = qy * w + qx;
            if flow.valid[q] {
                let d = (qx as f64 - x as f64).powi(2) + (qy as f64 - y as f64).powi(2);
                if d < best.0 {
                    best = (d, (flow.u[q], flow.v[q]));
                }
            }
        }
    }
    best.1
}

/// Pulls the second image back onto the first image's grid:
/// `out(p) = second(p + flow(p))`, bilinear and edge-clamped.
pub fn warp_image(second: &RasterImage, flow: &FlowField) -> RasterImage {
    let (w, h) = (flow.width as usize, flow.height as usize);
    let ch = second.channels;
    let mut pixels = Vec::with_capacity(w * h * ch as usize);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let (sx, sy) = (x as f64 + flow.u[p], y as f64 + flow.v[p]);
            for c in 0..ch {
                pixels.push(second.sample(sx, sy, c).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RasterImage { width: flow.width, height: flow.height, channels: ch, pixels }
}
