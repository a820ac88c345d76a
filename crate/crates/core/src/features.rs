//! Appearance features: the built-in HOG region descriptor and the
//! similarity functions used as appearance matching probabilities.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::image::{bilinear_clamped, RasterImage};

/// A descriptor vector tagged with the descriptor family it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVec {
    pub descriptor_id: Arc<str>,
    pub values: Vec<f64>,
}

impl FeatureVec {
    pub fn new(descriptor_id: impl Into<Arc<str>>, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite feature value {v}")));
        }
        Ok(Self { descriptor_id: descriptor_id.into(), values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn check_comparable(&self, other: &FeatureVec) -> Result<()> {
        if self.descriptor_id != other.descriptor_id {
            return Err(Error::DescriptorMismatch(format!(
                "{:?} vs {:?}",
                self.descriptor_id, other.descriptor_id
            )));
        }
        if self.values.len() != other.values.len() {
            return Err(Error::DescriptorMismatch(format!(
                "length {} vs {}",
                self.values.len(),
                other.values.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    /// Cosine similarity clipped at zero.
    RectifiedDot,
    /// `exp(-chi2 / temperature)` for nonnegative histograms.
    Chi2Kernel,
    /// `exp(-||f - g||^2 / temperature)`.
    L2Gaussian,
}

impl std::str::FromStr for SimilarityKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectified_dot" | "dot" => Ok(SimilarityKind::RectifiedDot),
            "chi2_kernel" | "chi2" => Ok(SimilarityKind::Chi2Kernel),
            "l2_gaussian" | "l2" => Ok(SimilarityKind::L2Gaussian),
            other => Err(Error::Config(format!("unknown similarity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityFn {
    pub kind: SimilarityKind,
    pub temperature: f64,
}

impl Default for SimilarityFn {
    fn default() -> Self {
        Self { kind: SimilarityKind::RectifiedDot, temperature: 1.0 }
    }
}

const CHI2_EPS: f64 = 1e-12;

impl SimilarityFn {
    pub fn new(kind: SimilarityKind, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self { kind, temperature })
    }

    pub fn rectified_dot() -> Self {
        Self::default()
    }

    /// Similarity in [0, 1].
    pub fn apply(&self, f: &FeatureVec, g: &FeatureVec) -> Result<f64> {
        f.check_comparable(g)?;
        let (a, b) = (&f.values, &g.values);
        let s = match self.kind {
            SimilarityKind::RectifiedDot => {
                let (na, nb) = (f.norm(), g.norm());
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                    (dot / (na * nb)).clamp(0.0, 1.0)
                }
            }
            SimilarityKind::Chi2Kernel => {
                if a.iter().chain(b.iter()).any(|&v| v < 0.0) {
                    return Err(Error::NegativeFeature);
                }
                let chi2: f64 = 0.5
                    * a.iter()
                        .zip(b)
                        .map(|(x, y)| (x - y) * (x - y) / (x + y + CHI2_EPS))
                        .sum::<f64>();
                (-chi2 / self.temperature).exp()
            }
            SimilarityKind::L2Gaussian => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / self.temperature).exp()
            }
        };
        Ok(s)
    }
}

/// Grid layout of the built-in HOG descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HogConfig {
    /// Cells per side of the resampled patch.
    pub grid: usize,
    /// Pixels per cell side.
    pub cell: usize,
    /// Unsigned orientation bins over [0, pi).
    pub bins: usize,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self { grid: 8, cell: 8, bins: 9 }
    }
}

impl HogConfig {
    pub const DESCRIPTOR_ID: &'static str = "hog";

    /// `(grid - 1)^2` overlapping 2x2 blocks of `bins`-bin cell histograms.
    pub fn descriptor_len(&self) -> usize {
        (self.grid - 1) * (self.grid - 1) * 4 * self.bins
    }
}

fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Describes `region` of `img` with an unsigned-gradient HOG.
///
/// The region is bilinearly resampled (edge-clamped) to a square
/// `grid*cell` patch; gradient magnitudes are voted into orientation bins with
/// linear interpolation between neighboring bin centers and bilinear
/// interpolation between neighboring cells.
pub fn hog_describe(img: &RasterImage, region: &BBox, cfg: &HogConfig) -> Result<FeatureVec> {
    if cfg.grid < 2 || cfg.cell == 0 || cfg.bins == 0 {
        return Err(Error::Config(format!("invalid HOG config {cfg:?}")));
    }
    let frame = BBox { x: 0.0, y: 0.0, w: f64::from(img.width), h: f64::from(img.height) };
    if region.intersection_area(&frame) <= 0.0 {
        return Err(Error::RegionOutsideImage);
    }
    let lum = img.luminance();
    let (iw, ih) = (img.width as usize, img.height as usize);
    let side = cfg.grid * cfg.cell;

    let mut patch = vec![0.0; side * side];
    for j in 0..side {
        let sy = region.y - 0.5 + (j as f64 + 0.5) * region.h / side as f64;
        for i in 0..side {
            let sx = region.x - 0.5 + (i as f64 + 0.5) * region.w / side as f64;
            patch[j * side + i] = bilinear_clamped(iw, ih, sx, sy, |k| lum[k]);
        }
    }

    let bin_width = std::f64::consts::PI / cfg.bins as f64;
    let mut cells = vec![0.0; cfg.grid * cfg.grid * cfg.bins];
    let at = |i: usize, j: usize| patch[j * side + i];
    let grid = cfg.grid as i64;
    for j in 0..side {
        for i in 0..side {
            let gx = at((i + 1).min(side - 1), j) - at(i.saturating_sub(1), j);
            let gy = at(i, (j + 1).min(side - 1)) - at(i, j.saturating_sub(1));
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let theta = gy.atan2(gx).rem_euclid(std::f64::consts::PI);
            let t = theta / bin_width - 0.5;
            let lo = t.floor();
            let frac = t - lo;
            let b0 = (lo as i64).rem_euclid(cfg.bins as i64) as usize;
            let b1 = (b0 + 1) % cfg.bins;
            // bilinear split between the four nearest cell centers
            let u = (i as f64 + 0.5) / cfg.cell as f64 - 0.5;
            let v = (j as f64 + 0.5) / cfg.cell as f64 - 0.5;
            let (u0, v0) = (u.floor(), v.floor());
            let (fu, fv) = (u - u0, v - v0);
            for (dy, wy) in [(0i64, 1.0 - fv), (1, fv)] {
                for (dx, wx) in [(0i64, 1.0 - fu), (1, fu)] {
                    let cx = u0 as i64 + dx;
                    let cy = v0 as i64 + dy;
                    if cx < 0 || cy < 0 || cx >= grid || cy >= grid || wx * wy == 0.0 {
                        continue;
                    }
                    let base = (cy as usize * cfg.grid + cx as usize) * cfg.bins;
                    let w = mag * wx * wy;
                    cells[base + b0] += w * (1.0 - frac);
                    cells[base + b1] += w * frac;
                }
            }
        }
    }

    let mut out = Vec::with_capacity(cfg.descriptor_len());
    let mut block = vec![0.0; 4 * cfg.bins];
    for by in 0..cfg.grid - 1 {
        for bx in 0..cfg.grid - 1 {
            for (k, (cx, cy)) in [(bx, by), (bx + 1, by), (bx, by + 1), (bx + 1, by + 1)]
                .into_iter()
                .enumerate()
            {
                let base = (cy * cfg.grid + cx) * cfg.bins;
                block[k * cfg.bins..(k + 1) * cfg.bins]
                    .copy_from_slice(&cells[base..base + cfg.bins]);
            }
            l2_normalize(&mut block);
            out.extend_from_slice(&block);
        }
    }
    l2_normalize(&mut out);
    FeatureVec::new(HogConfig::DESCRIPTOR_ID, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(v: Vec<f64>) -> FeatureVec {
        FeatureVec::new("t", v).unwrap()
    }

    fn step_image(w: u32, h: u32, edge_x: u32) -> RasterImage {
        let mut px = Vec::new();
        for _ in 0..h {
            for x in 0..w {
                px.push(if x < edge_x { 40 } else { 200 });
            }
        }
        RasterImage::new(w, h, 1, px).unwrap()
    }

    fn cosine(a: &FeatureVec, b: &FeatureVec) -> f64 {
        let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
        dot / (a.norm() * b.norm())
    }

    #[test]
    fn similarity_examples() {
        let dot = SimilarityFn::rectified_dot();
        let f = fv(vec![0.3, -1.0, 2.0]);
        assert!((dot.apply(&f, &f).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(dot.apply(&fv(vec![1.0, 0.0]), &fv(vec![0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(dot.apply(&fv(vec![1.0, 0.0]), &fv(vec![-1.0, 0.0])).unwrap(), 0.0);
        assert_eq!(dot.apply(&fv(vec![0.0, 0.0]), &fv(vec![1.0, 0.0])).unwrap(), 0.0);
        let l2 = SimilarityFn::new(SimilarityKind::L2Gaussian, 0.5).unwrap();
        assert_eq!(l2.apply(&f, &f).unwrap(), 1.0);
        let chi = SimilarityFn::new(SimilarityKind::Chi2Kernel, 2.0).unwrap();
        // chi2 = 0.5 * (1/1) = 0.5
        let v = chi.apply(&fv(vec![1.0, 0.0]), &fv(vec![0.0, 0.0])).unwrap();
        assert!((v - (-0.25f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn similarity_errors() {
        let dot = SimilarityFn::rectified_dot();
        let a = fv(vec![1.0, 2.0]);
        assert!(matches!(dot.apply(&a, &fv(vec![1.0])), Err(Error::DescriptorMismatch(_))));
        let other = FeatureVec::new("other", vec![1.0, 2.0]).unwrap();
        assert!(matches!(dot.apply(&a, &other), Err(Error::DescriptorMismatch(_))));
        let chi = SimilarityFn::new(SimilarityKind::Chi2Kernel, 1.0).unwrap();
        assert!(matches!(chi.apply(&a, &fv(vec![-1.0, 0.0])), Err(Error::NegativeFeature)));
        assert!(SimilarityFn::new(SimilarityKind::L2Gaussian, 0.0).is_err());
    }

    #[test]
    fn hog_flat_region_is_zero() {
        let img = RasterImage::filled(32, 32, 1, 90);
        let d = hog_describe(&img, &BBox { x: 2.0, y: 3.0, w: 20.0, h: 20.0 }, &HogConfig::default())
            .unwrap();
        assert_eq!(d.len(), HogConfig::default().descriptor_len());
        assert_eq!(d.len(), 49 * 36);
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hog_is_deterministic() {
        let img = step_image(40, 40, 17);
        let r = BBox { x: 1.5, y: 2.0, w: 33.0, h: 30.0 };
        let a = hog_describe(&img, &r, &HogConfig::default()).unwrap();
        let b = hog_describe(&img, &r, &HogConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hog_shifted_edge_is_closer_than_flat() {
        // 64x64 region maps 1:1 onto the patch, so a shift of 8 px is one cell.
        let cfg = HogConfig::default();
        let r = BBox { x: 0.0, y: 0.0, w: 64.0, h: 64.0 };
        let edge = hog_describe(&step_image(64, 64, 28), &r, &cfg).unwrap();
        let moved = hog_describe(&step_image(64, 64, 36), &r, &cfg).unwrap();
        let mut flat_px = vec![120u8; 64 * 64];
        flat_px[0] = 121;
        let flat = hog_describe(&RasterImage::new(64, 64, 1, flat_px).unwrap(), &r, &cfg).unwrap();
        let c_moved = cosine(&edge, &moved);
        let c_flat = cosine(&edge, &flat);
        assert!(c_moved < 1.0 - 1e-6, "shifted edge cosine {c_moved}");
        assert!(c_moved > c_flat, "{c_moved} <= {c_flat}");
    }

    #[test]
    fn hog_invariant_to_brightness_offset() {
        let img = step_image(48, 40, 20);
        let mut brighter = img.clone();
        brighter.pixels.iter_mut().for_each(|p| *p += 30);
        let r = BBox { x: 3.0, y: 4.0, w: 37.0, h: 29.0 };
        let a = hog_describe(&img, &r, &HogConfig::default()).unwrap();
        let b = hog_describe(&brighter, &r, &HogConfig::default()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn hog_region_outside_image() {
        let img = RasterImage::filled(10, 10, 1, 0);
        let r = BBox { x: 20.0, y: 0.0, w: 5.0, h: 5.0 };
        assert!(matches!(
            hog_describe(&img, &r, &HogConfig::default()),
            Err(Error::RegionOutsideImage)
        ));
        // partially outside is fine (edge clamped)
        let r = BBox { x: 8.0, y: -3.0, w: 5.0, h: 5.0 };
        assert!(hog_describe(&img, &r, &HogConfig::default()).is_ok());
    }

    fn arb_vec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0..3.0f64, 6)
    }

    proptest! {
        #[test]
        fn similarity_symmetric_and_bounded(a in arb_vec(), b in arb_vec(), t in 0.1..5.0f64) {
            for kind in [SimilarityKind::RectifiedDot, SimilarityKind::Chi2Kernel, SimilarityKind::L2Gaussian] {
                let s = SimilarityFn::new(kind, t).unwrap();
                let ab = s.apply(&fv(a.clone()), &fv(b.clone())).unwrap();
                let ba = s.apply(&fv(b.clone()), &fv(a.clone())).unwrap();
                prop_assert!((ab - ba).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&ab));
            }
        }

        #[test]
        fn rectified_dot_scale_invariant(a in arb_vec(), b in arb_vec(), k in 0.01..100.0f64) {
            let s = SimilarityFn::rectified_dot();
            let base = s.apply(&fv(a.clone()), &fv(b.clone())).unwrap();
            let scaled = s.apply(&fv(a.iter().map(|v| v * k).collect()), &fv(b)).unwrap();
            prop_assert!((base - scaled).abs() < 1e-12);
        }
    }
}
