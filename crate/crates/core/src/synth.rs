//! Seeded synthetic scenes with known correspondences.
//!
//! Objects are textured rectangles. Each object emits a cloud of part
//! proposals in the first image; the second image holds the same proposals
//! mapped through a global affine transform plus box jitter. Proposals of one
//! object share a latent appearance vector (so siblings look alike), each
//! proposal perturbs it, and each image adds independent feature noise.
//! Clutter proposals get independent boxes and features in both images.
//!
//! The random stream order is part of the fixture contract: objects, then
//! per-object proposals, then clutter for the first image, then clutter for
//! the second, then the two id shuffles.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::eval::count_correct;
use crate::geometry::BBox;
use crate::image::RasterImage;
use crate::matching::{MatchSet, ProposalSet};
use crate::rng::SplitMix64;
use crate::tps::KeypointPair;

pub const DESCRIPTOR_ID: &str = "synth";

/// `[[a, b, c], [d, e, f]]` mapping `(x, y)` to `(a x + b y + c, d x + e y + f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2(pub [[f64; 3]; 2]);

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);

    /// Uniform scale about the origin followed by a translation.
    pub fn scale_translate(s: f64, tx: f64, ty: f64) -> Self {
        Affine2([[s, 0.0, tx], [0.0, s, ty]])
    }

    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let m = &self.0;
        (m[0][0] * p.0 + m[0][1] * p.1 + m[0][2], m[1][0] * p.0 + m[1][1] * p.1 + m[1][2])
    }

    pub fn inverse(&self) -> Result<Affine2> {
        let m = &self.0;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-12 {
            return Err(Error::Config("global transform is singular".into()));
        }
        let (a, b, d, e) = (m[1][1] / det, -m[0][1] / det, -m[1][0] / det, m[0][0] / det);
        Ok(Affine2([
            [a, b, -(a * m[0][2] + b * m[1][2])],
            [d, e, -(d * m[0][2] + e * m[1][2])],
        ]))
    }

    /// Axis-aligned bounds of the mapped box corners.
    pub fn map_box(&self, b: &BBox) -> BBox {
        let m = &self.0;
        if m[0][1] == 0.0 && m[1][0] == 0.0 {
            let (w, h) = (m[0][0].abs() * b.w, m[1][1].abs() * b.h);
            let x = if m[0][0] >= 0.0 { m[0][0] * b.x + m[0][2] } else { m[0][0] * b.x + m[0][2] - w };
            let y = if m[1][1] >= 0.0 { m[1][1] * b.y + m[1][2] } else { m[1][1] * b.y + m[1][2] - h };
            return BBox { x, y, w, h };
        }
        let pts = [(b.x, b.y), (b.right(), b.y), (b.x, b.bottom()), (b.right(), b.bottom())].map(|p| self.apply(p));
        let x0 = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let x1 = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let y0 = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let y1 = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        BBox { x: x0, y: y0, w: x1 - x0, h: y1 - y0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub image_size: (u32, u32),
    pub n_objects: u32,
    pub proposals_per_object: u32,
    /// Clutter proposals per image.
    pub n_clutter: u32,
    pub feature_dim: u32,
    /// Per-coordinate std of the independent noise added in each image.
    pub feature_noise_sigma: f64,
    /// Std of per-coordinate proposal perturbations of the object latent.
    pub part_spread: f64,
    /// Std of the second-image box center jitter, px.
    pub trans_sigma: f64,
    /// Std of the second-image log-scale jitter.
    pub logscale_sigma: f64,
    pub global_transform: Affine2,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            image_size: (256, 256),
            n_objects: 2,
            proposals_per_object: 14,
            n_clutter: 12,
            feature_dim: 32,
            feature_noise_sigma: 0.1,
            part_spread: 0.5,
            trans_sigma: 0.0,
            logscale_sigma: 0.0,
            global_transform: Affine2::IDENTITY,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.image_size;
        if w < 16 || h < 16 {
            return Err(Error::Config(format!("image too small: {w}x{h}")));
        }
        if self.n_objects == 0 && self.n_clutter == 0 {
            return Err(Error::Config("scene has no proposals".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if self.n_objects > 0 && self.proposals_per_object == 0 {
            return Err(Error::Config("proposals_per_object must be positive".into()));
        }
        for (name, v) in [
            ("feature_noise_sigma", self.feature_noise_sigma),
            ("part_spread", self.part_spread),
            ("trans_sigma", self.trans_sigma),
            ("logscale_sigma", self.logscale_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        self.global_transform.inverse()?;
        Ok(())
    }
}

/// Seeds of the fixed clutter-robustness suite.
pub const CLUTTER_SUITE_SEEDS: std::ops::Range<u64> = 0..10;

/// Clutter-robustness scene: two objects of 14 parts each and 12 clutter
/// proposals per image (30% of each set), feature noise 0.1, and a
/// scale-plus-translation transform with mild box jitter.
pub fn clutter_suite_config(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        trans_sigma: 2.0,
        logscale_sigma: 0.05,
        global_transform: Affine2::scale_translate(1.2, 12.0, -8.0),
        ..SynthConfig::default()
    }
}

/// Appearance pattern of one object, defined in object-local coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    pub base: f64,
    pub checker_period: f64,
    pub stripe_period: f64,
    pub stripe_angle: f64,
}

impl Texture {
    /// Smooth checker (product of sines) plus oriented sinusoidal stripes.
    pub fn intensity(&self, lx: f64, ly: f64) -> f64 {
        let k = 2.0 * PI / self.checker_period;
        let checker = (k * lx).sin() * (k * ly).sin();
        let t = lx * self.stripe_angle.cos() + ly * self.stripe_angle.sin();
        let stripes = (2.0 * PI * t / self.stripe_period).sin();
        (self.base + 45.0 * checker + 35.0 * stripes).clamp(0.0, 255.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthObject {
    pub bbox: BBox,
    pub texture: Texture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair {
    pub config: SynthConfig,
    pub images: [RasterImage; 2],
    pub proposals: [ProposalSet; 2],
    /// Source id to destination id, defined on object proposals only.
    pub true_match: BTreeMap<u32, u32>,
    pub keypoints: Vec<KeypointPair>,
    /// Box around all objects in each image.
    pub bboxes: [BBox; 2],
    pub objects: Vec<SynthObject>,
}

impl SynthPair {
    /// True destination boxes keyed by source id.
    pub fn true_boxes(&self) -> BTreeMap<u32, BBox> {
        self.true_match
            .iter()
            .map(|(&s, &d)| (s, self.proposals[1].regions[d as usize].bbox))
            .collect()
    }

    /// Match set assigning every object proposal its true partner with score 1
    /// and every clutter proposal its first candidate with score 0.
    pub fn perfect_matches(&self) -> MatchSet {
        MatchSet {
            entries: self.proposals[0]
                .regions
                .iter()
                .map(|r| match self.true_match.get(&r.id) {
                    Some(&d) => crate::matching::Match { src_id: r.id, dst_id: d, score: 1.0 },
                    None => crate::matching::Match { src_id: r.id, dst_id: 0, score: 0.0 },
                })
                .collect(),
        }
    }
}

fn unit_normal(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn noisy(rng: &mut SplitMix64, base: &[f64], sigma: f64) -> Vec<f64> {
    base.iter().map(|&b| b + sigma * rng.normal()).collect()
}

fn fits(b: &BBox, w: f64, h: f64) -> bool {
    b.x >= 0.0 && b.y >= 0.0 && b.right() <= w && b.bottom() <= h
}

fn random_box(rng: &mut SplitMix64, w: f64, h: f64) -> BBox {
    let bw = rng.uniform(0.1, 0.4) * w;
    let bh = rng.uniform(0.1, 0.4) * h;
    BBox { x: rng.uniform(0.0, w - bw), y: rng.uniform(0.0, h - bh), w: bw, h: bh }
}

fn background(x: f64, y: f64) -> f64 {
    60.0 + 12.0 * (x / 23.0).sin() + 12.0 * (y / 31.0).cos()
}

const PLACEMENT_ATTEMPTS: usize = 1000;

pub fn generate(cfg: &SynthConfig) -> Result<SynthPair> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let (w, h) = (f64::from(cfg.image_size.0), f64::from(cfg.image_size.1));
    let dim = cfg.feature_dim as usize;
    let t = cfg.global_transform;

    let mut objects: Vec<SynthObject> = Vec::new();
    let mut latents = Vec::new();
    for _ in 0..cfg.n_objects {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let bw = rng.uniform(0.2, 0.35) * w;
            let bh = rng.uniform(0.2, 0.35) * h;
            let b = BBox { x: rng.uniform(0.0, w - bw), y: rng.uniform(0.0, h - bh), w: bw, h: bh };
            let padded = BBox { x: b.x - 4.0, y: b.y - 4.0, w: b.w + 8.0, h: b.h + 8.0 };
            let clear = objects.iter().all(|o| o.bbox.intersection_area(&padded) == 0.0);
            if clear && fits(&t.map_box(&b), w, h) {
                placed = Some(b);
                break;
            }
        }
        let bbox = placed.ok_or_else(|| {
            Error::Config(format!("could not place {} objects in a {w}x{h} image", cfg.n_objects))
        })?;
        let texture = Texture {
            base: rng.uniform(100.0, 160.0),
            checker_period: rng.uniform(20.0, 32.0),
            stripe_period: rng.uniform(18.0, 30.0),
            stripe_angle: rng.uniform(0.0, PI),
        };
        objects.push(SynthObject { bbox, texture });
        latents.push(unit_normal(&mut rng, dim));
    }

    // (src box, dst box, src feature, dst feature, is_object)
    let mut src_items: Vec<(BBox, Vec<f64>, Option<usize>)> = Vec::new();
    let mut dst_items: Vec<(BBox, Vec<f64>, Option<usize>)> = Vec::new();
    let part_sigma = cfg.part_spread / (dim as f64).sqrt();
    for (o, obj) in objects.iter().enumerate() {
        for _ in 0..cfg.proposals_per_object {
            let ob = obj.bbox;
            let pw = ob.w * rng.uniform(0.35, 1.0);
            let ph = ob.h * rng.uniform(0.35, 1.0);
            let sb = BBox { x: ob.x + rng.uniform(0.0, ob.w - pw), y: ob.y + rng.uniform(0.0, ob.h - ph), w: pw, h: ph };
            let latent = noisy(&mut rng, &latents[o], part_sigma);
            let fs = noisy(&mut rng, &latent, cfg.feature_noise_sigma);
            let fd = noisy(&mut rng, &latent, cfg.feature_noise_sigma);
            let mapped = t.map_box(&sb);
            let (jx, jy, js) = (
                cfg.trans_sigma * rng.normal(),
                cfg.trans_sigma * rng.normal(),
                (cfg.logscale_sigma * rng.normal()).exp(),
            );
            let (cx, cy) = mapped.center();
            let (dw, dh) = (mapped.w * js, mapped.h * js);
            let db = if cfg.trans_sigma == 0.0 && cfg.logscale_sigma == 0.0 {
                mapped
            } else {
                BBox { x: cx + jx - dw / 2.0, y: cy + jy - dh / 2.0, w: dw, h: dh }
            };
            let id = src_items.len();
            src_items.push((sb, fs, Some(id)));
            dst_items.push((db, fd, Some(id)));
        }
    }
    for items in [&mut src_items, &mut dst_items] {
        for _ in 0..cfg.n_clutter {
            let b = random_box(&mut rng, w, h);
            let f = unit_normal(&mut rng, dim);
            items.push((b, f, None));
        }
    }
    let mut src_order: Vec<usize> = (0..src_items.len()).collect();
    let mut dst_order: Vec<usize> = (0..dst_items.len()).collect();
    rng.shuffle(&mut src_order);
    rng.shuffle(&mut dst_order);

    // position of each item in the shuffled destination list
    let mut dst_pos_of_tag = BTreeMap::new();
    for (pos, &i) in dst_order.iter().enumerate() {
        if let Some(tag) = dst_items[i].2 {
            dst_pos_of_tag.insert(tag, pos as u32);
        }
    }
    let mut true_match = BTreeMap::new();
    for (pos, &i) in src_order.iter().enumerate() {
        if let Some(tag) = src_items[i].2 {
            true_match.insert(pos as u32, dst_pos_of_tag[&tag]);
        }
    }
    let build = |items: &[(BBox, Vec<f64>, Option<usize>)], order: &[usize]| {
        ProposalSet::from_parts(
            cfg.image_size.0,
            cfg.image_size.1,
            DESCRIPTOR_ID,
            order.iter().map(|&i| items[i].0).collect(),
            order.iter().map(|&i| items[i].1.clone()).collect(),
        )
    };
    let proposals = [build(&src_items, &src_order)?, build(&dst_items, &dst_order)?];

    let images = render(cfg, &objects)?;
    let keypoints = objects
        .iter()
        .flat_map(|o| {
            let b = o.bbox;
            [0.2, 0.5, 0.8].into_iter().flat_map(move |fy| {
                [0.2, 0.5, 0.8].into_iter().map(move |fx| {
                    let p = (b.x + fx * b.w, b.y + fy * b.h);
                    let q = t.apply(p);
                    KeypointPair { src: p, dst: q }
                })
            })
        })
        .collect();
    let union = |boxes: Vec<BBox>| -> BBox {
        let pts: Vec<(f64, f64)> = boxes.iter().flat_map(|b| [(b.x, b.y), (b.right(), b.bottom())]).collect();
        BBox::bounding(&pts).unwrap_or(BBox { x: 0.0, y: 0.0, w, h })
    };
    let bboxes = [
        union(objects.iter().map(|o| o.bbox).collect()),
        union(objects.iter().map(|o| t.map_box(&o.bbox)).collect()),
    ];
    Ok(SynthPair { config: cfg.clone(), images, proposals, true_match, keypoints, bboxes, objects })
}

fn render(cfg: &SynthConfig, objects: &[SynthObject]) -> Result<[RasterImage; 2]> {
    let (w, h) = cfg.image_size;
    let inv = cfg.global_transform.inverse()?;
    let shade = |p: (f64, f64)| -> f64 {
        for o in objects {
            if o.bbox.contains_pixel(p.0, p.1) {
                return o.texture.intensity(p.0 - o.bbox.x, p.1 - o.bbox.y);
            }
        }
        background(p.0, p.1)
    };
    let mut first = Vec::with_capacity((w * h) as usize);
    let mut second = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let p = (f64::from(x), f64::from(y));
            first.push(shade(p).round() as u8);
            let q = inv.apply(p);
            let inside = objects.iter().any(|o| o.bbox.contains_pixel(q.0, q.1));
            second.push(if inside { shade(q) } else { background(p.0, p.1) }.round() as u8);
        }
    }
    Ok([RasterImage::new(w, h, 1, first)?, RasterImage::new(w, h, 1, second)?])
}

/// Number of object sources whose assigned box overlaps the true box with IoU >= `iou_thresh`.
pub fn score_against_truth(matches: &MatchSet, truth: &SynthPair, iou_thresh: f64) -> usize {
    let boxes: std::collections::HashMap<u32, BBox> = truth.true_boxes().into_iter().collect();
    count_correct(matches, &truth.proposals[1], &boxes, iou_thresh)
}

/// Default sliding-window scales: five, log-spaced from 0.1 to 0.9 of the smaller image side.
pub fn default_scales(image_size: (u32, u32)) -> Vec<f64> {
    let m = f64::from(image_size.0.min(image_size.1));
    (0..5).map(|k| m * 0.1 * 9f64.powf(k as f64 / 4.0)).collect()
}

pub fn default_aspects() -> Vec<f64> {
    vec![0.5, 1.0 / SQRT_2, 1.0, SQRT_2, 2.0]
}

/// Regular grid of windows: for each scale `s` and aspect `a` (width/height),
/// a `s*sqrt(a) x s/sqrt(a)` window stepped by `stride_frac` of its size.
/// Windows larger than the image are clipped; exact duplicates are dropped.
pub fn sliding_window_proposals(
    image_size: (u32, u32),
    scales: &[f64],
    aspects: &[f64],
    stride_frac: f64,
) -> Result<Vec<BBox>> {
    if scales.is_empty() || aspects.is_empty() {
        return Err(Error::Config("scales and aspects must be nonempty".into()));
    }
    if !(stride_frac > 0.0 && stride_frac <= 1.0) {
        return Err(Error::Config(format!("stride_frac must be in (0, 1], got {stride_frac}")));
    }
    if scales.iter().chain(aspects).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Config("scales and aspects must be positive".into()));
    }
    let (iw, ih) = (f64::from(image_size.0), f64::from(image_size.1));
    let eps = 1e-9;
    let positions = |len: f64, total: f64| -> Vec<f64> {
        if len >= total - eps {
            return vec![0.0];
        }
        let step = stride_frac * len;
        let count = ((total - len) / step + eps).floor() as usize + 1;
        (0..count).map(|k| k as f64 * step).collect()
    };
    let mut out: Vec<BBox> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &s in scales {
        for &a in aspects {
            let bw = (s * a.sqrt()).min(iw);
            let bh = (s / a.sqrt()).min(ih);
            for y in positions(bh, ih) {
                for x in positions(bw, iw) {
                    let b = BBox { x, y, w: bw, h: bh };
                    if seen.insert([x.to_bits(), y.to_bits(), bw.to_bits(), bh.to_bits()]) {
                        out.push(b);
                    }
                }
            }
        }
    }
    Ok(out)
}
