//! Browser demo: synthetic scene matching, geometric median versus mean, and
//! a draggable thin-plate-spline grid. Every export takes and returns JSON
//! strings so the page needs no bindings beyond wasm-bindgen.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use propflow::matching::{geometric_median, LomConfig, DEFAULT_MAX_ITER, DEFAULT_TOL};
use propflow::synth::{self, Affine2, SynthConfig};
use propflow::tps::{tps_fit, KeypointPair};
use propflow::{KernelParams, Matcher, OffsetVector, PhmConfig, SimilarityFn};

#[derive(Serialize)]
struct SceneMatch {
    src: usize,
    dst: u32,
    score: f64,
    /// `None` for clutter sources.
    correct: Option<bool>,
}

#[derive(Serialize)]
struct Scene {
    width: u32,
    height: u32,
    src_pixels: Vec<u8>,
    dst_pixels: Vec<u8>,
    src_boxes: Vec<[f64; 4]>,
    dst_boxes: Vec<[f64; 4]>,
    matcher: &'static str,
    matches: Vec<SceneMatch>,
    /// Correct matches of NAM, PHM and LOM on the same scene.
    counts: [usize; 3],
    objects: usize,
}

fn boxes(set: &propflow::ProposalSet) -> Vec<[f64; 4]> {
    set.regions.iter().map(|r| [r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h]).collect()
}

fn to_js<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Generates a cluttered scene and matches it with `matcher` (`nam`, `phm` or `lom`).
pub fn scene(seed: u64, clutter: u32, noise: f64, scale: f64, matcher: &str) -> Result<String, String> {
    let cfg = SynthConfig {
        n_clutter: clutter,
        feature_noise_sigma: noise,
        global_transform: Affine2::scale_translate(scale, 12.0, -8.0),
        ..synth::clutter_suite_config(seed)
    };
    let pair = synth::generate(&cfg).map_err(|e| e.to_string())?;
    let (src, dst) = (&pair.proposals[0], &pair.proposals[1]);
    let sim = SimilarityFn::rectified_dot();
    let k = KernelParams::for_image(cfg.image_size.0, cfg.image_size.1);
    let all = [Matcher::Nam, Matcher::Phm(PhmConfig::binned(k)), Matcher::Lom(LomConfig::new(k))];
    let mut counts = [0; 3];
    let mut chosen = None;
    for (slot, m) in all.iter().enumerate() {
        let got = m.run(src, dst, &sim).map_err(|e| e.to_string())?;
        counts[slot] = synth::score_against_truth(&got, &pair, 0.5);
        if m.name() == matcher {
            chosen = Some((m.name(), got));
        }
    }
    let (name, got) = chosen.ok_or_else(|| format!("unknown matcher {matcher:?}"))?;
    let truth = pair.true_boxes();
    let matches = got
        .entries
        .iter()
        .map(|e| SceneMatch {
            src: e.src_id as usize,
            dst: e.dst_id,
            score: e.score,
            correct: truth
                .get(&e.src_id)
                .map(|t| propflow::geometry::iou(&dst.regions[e.dst_id as usize].bbox, t) >= 0.5),
        })
        .collect();
    to_js(&Scene {
        width: cfg.image_size.0,
        height: cfg.image_size.1,
        src_pixels: pair.images[0].pixels.clone(),
        dst_pixels: pair.images[1].pixels.clone(),
        src_boxes: boxes(src),
        dst_boxes: boxes(dst),
        matcher: name,
        matches,
        counts,
        objects: pair.true_match.len(),
    })
}

#[derive(Serialize)]
struct Centers {
    median: [f64; 2],
    mean: [f64; 2],
}

/// Geometric median and mean of 2-D points given as `[[x, y], ...]`.
pub fn median_vs_mean(points_json: &str) -> Result<String, String> {
    let pts: Vec<[f64; 2]> = serde_json::from_str(points_json).map_err(|e| e.to_string())?;
    if pts.is_empty() {
        return Err("no points".into());
    }
    let offsets: Vec<OffsetVector> = pts.iter().map(|p| OffsetVector::new(p[0], p[1], 0.0)).collect();
    let m = geometric_median(&offsets, DEFAULT_TOL, DEFAULT_MAX_ITER).map_err(|e| e.to_string())?;
    let n = pts.len() as f64;
    let mean = [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n];
    to_js(&Centers { median: [m.dx, m.dy], mean })
}

#[derive(Deserialize)]
struct GridRequest {
    /// `[[x1, y1, x2, y2], ...]`
    pairs: Vec<[f64; 4]>,
    width: f64,
    height: f64,
    lines: usize,
}

/// Polylines of a regular grid mapped through the TPS fitted to the pairs.
pub fn tps_grid(request_json: &str) -> Result<String, String> {
    let req: GridRequest = serde_json::from_str(request_json).map_err(|e| e.to_string())?;
    let pairs: Vec<KeypointPair> = req.pairs.iter().map(|p| KeypointPair::new(p[0], p[1], p[2], p[3])).collect();
    let warp = tps_fit(&pairs).map_err(|e| e.to_string())?;
    let lines = req.lines.clamp(2, 64);
    let samples = 48;
    let mut out: Vec<Vec<[f64; 2]>> = Vec::with_capacity(2 * lines);
    for i in 0..lines {
        let f = i as f64 / (lines - 1) as f64;
        for horizontal in [true, false] {
            let line = (0..=samples)
                .map(|s| {
                    let g = s as f64 / samples as f64;
                    let p = if horizontal { (g * req.width, f * req.height) } else { (f * req.width, g * req.height) };
                    let q = warp.apply(p);
                    [q.0, q.1]
                })
                .collect();
            out.push(line);
        }
    }
    to_js(&out)
}

#[wasm_bindgen(js_name = scene)]
pub fn scene_js(seed: u32, clutter: u32, noise: f64, scale: f64, matcher: &str) -> Result<String, JsError> {
    scene(u64::from(seed), clutter, noise, scale, matcher).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = medianVsMean)]
pub fn median_vs_mean_js(points_json: &str) -> Result<String, JsError> {
    median_vs_mean(points_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = tpsGrid)]
pub fn tps_grid_js(request_json: &str) -> Result<String, JsError> {
    tps_grid(request_json).map_err(|e| JsError::new(&e))
}
