use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use propflow::eval::{self, auc, count_correct, miou_at_k, pcr, pcr_thresholds};
use propflow::flowfield::{build_anchor_index, fill_holes, synthesize_flow, warp_image};
use propflow::features::{hog_describe, SimilarityKind};
use propflow::io::{self, KeypointFile, ProposalManifest};
use propflow::matching::{LomConfig, Match, MatchSet, PhmConfig, PhmMode};
use propflow::synth::{self, Affine2, SynthConfig};
use propflow::tps::{generate_gt, tps_fit};
use propflow::{BBox, Error, HogConfig, KernelParams, Matcher, ProposalSet, RasterImage, SimilarityFn};

use crate::{
    Cli, Command, EvalPckArgs, EvalRegionArgs, FlowArgs, GtgenArgs, LeaveNOutArgs, MatchArgs, SlidingArgs, SynthArgs,
};

pub const THREADS_ENV: &str = "PROPFLOW_THREADS";

/// `error kind=<Kind> message="<text>"`, with the kind taken from the first
/// library error in the chain.
pub fn error_line(e: &anyhow::Error) -> String {
    let kind = e.chain().find_map(|c| c.downcast_ref::<Error>()).map_or("Error", Error::kind);
    let message = format!("{e:#}").replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    format!("error kind={kind} message=\"{message}\"")
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let seed = cli.seed;
    let start = Instant::now();
    let name = match &cli.command {
        Command::Match(_) => "match",
        Command::Flow(_) => "flow",
        Command::Gtgen(_) => "gtgen",
        Command::EvalPcr(_) => "eval-pcr",
        Command::EvalMiou(_) => "eval-miou",
        Command::EvalPck(_) => "eval-pck",
        Command::LeaveNOut(_) => "leave-n-out",
        Command::Synth(_) => "synth",
        Command::SlidingWindows(_) => "sliding-windows",
    };
    eprintln!("propflow {name} seed={seed}");
    match cli.command {
        Command::Match(a) => cmd_match(&a)?,
        Command::Flow(a) => cmd_flow(&a)?,
        Command::Gtgen(a) => cmd_gtgen(&a)?,
        Command::EvalPcr(a) => cmd_eval_region(&a, false)?,
        Command::EvalMiou(a) => cmd_eval_region(&a, true)?,
        Command::EvalPck(a) => cmd_eval_pck(&a)?,
        Command::LeaveNOut(a) => cmd_leave_n_out(&a, seed)?,
        Command::Synth(a) => cmd_synth(&a, seed)?,
        Command::SlidingWindows(a) => cmd_sliding(&a)?,
    }
    eprintln!("propflow {name} elapsed_ms={}", start.elapsed().as_millis());
    Ok(())
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or_else(|| Path::new("."))
}

fn load_image(manifest: &ProposalManifest, manifest_path: &Path) -> Result<RasterImage> {
    let path = manifest.image_path(base_dir(manifest_path));
    let img = RasterImage::load(&path).with_context(|| format!("reading image {}", path.display()))?;
    if (img.width, img.height) != (manifest.width, manifest.height) {
        return Err(Error::Format(format!(
            "{}: image is {}x{} but manifest says {}x{}",
            path.display(),
            img.width,
            img.height,
            manifest.width,
            manifest.height
        ))
        .into());
    }
    Ok(img)
}

/// Proposal set restricted to the budget, with ids renumbered `0..k`, and
/// the manifest index of each kept proposal. Images without stored features
/// are described with the built-in HOG descriptor.
fn load_proposals(path: &Path, max_proposals: u32) -> Result<(ProposalSet, Vec<usize>)> {
    let m = io::read_manifest(path)?;
    let selection = m.selection(max_proposals as usize);
    let set = match m.load_features(base_dir(path))? {
        Some(features) => m.to_set(&features, &selection)?,
        None => {
            let img = load_image(&m, path)?;
            let boxes = m.bboxes()?;
            let cfg = HogConfig::default();
            let feats = selection
                .par_iter()
                .map(|&i| hog_describe(&img, &boxes[i], &cfg).map(|f| f.values))
                .collect::<propflow::Result<Vec<_>>>()?;
            let chosen = selection.iter().map(|&i| boxes[i]).collect();
            ProposalSet::from_parts(m.width, m.height, HogConfig::DESCRIPTOR_ID, chosen, feats)?
        }
    };
    Ok((set, selection))
}

/// Boxes of every proposal in a manifest, without features.
fn load_boxes(path: &Path) -> Result<(ProposalManifest, ProposalSet)> {
    let m = io::read_manifest(path)?;
    let boxes = m.bboxes()?;
    let n = boxes.len();
    let set = ProposalSet::from_parts(m.width, m.height, &m.descriptor_id, boxes, vec![Vec::new(); n])?;
    Ok((m, set))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_match(a: &MatchArgs) -> Result<()> {
    let p = &a.proposals;
    let (src, src_sel) = load_proposals(&p.src, p.max_proposals)?;
    let (dst, dst_sel) = load_proposals(&p.dst, p.max_proposals)?;
    let kind: SimilarityKind = a.similarity.parse()?;
    let sim = SimilarityFn::new(kind, a.temperature)?;
    let default_k = KernelParams::for_image(src.image_width, src.image_height);
    let kernel = KernelParams::new(a.sigma_xy.unwrap_or(default_k.sigma_xy), a.sigma_ls.unwrap_or(default_k.sigma_ls))?;
    let matcher = match a.matcher.as_str() {
        "nam" => Matcher::Nam,
        "phm" => {
            let mode: PhmMode = a.phm_mode.parse()?;
            let mut cfg = PhmConfig { mode, ..PhmConfig::binned(kernel) };
            cfg.bin_xy = a.bin_xy.unwrap_or(cfg.bin_xy);
            cfg.bin_ls = a.bin_ls.unwrap_or(cfg.bin_ls);
            if !(cfg.bin_xy > 0.0 && cfg.bin_ls > 0.0) {
                bail!(Error::Config("bin sizes must be positive".into()));
            }
            Matcher::Phm(cfg)
        }
        "lom" => Matcher::Lom(LomConfig::new(kernel)),
        other => bail!(Error::Config(format!("unknown matcher {other:?} (expected nam, phm or lom)"))),
    };
    let t = Instant::now();
    let local = matcher.run(&src, &dst, &sim)?;
    let elapsed = t.elapsed();
    let matches = MatchSet {
        entries: local
            .entries
            .iter()
            .map(|m| Match { src_id: src_sel[m.src_id as usize] as u32, dst_id: dst_sel[m.dst_id as usize] as u32, score: m.score })
            .collect(),
    };
    io::write_matches(&a.out, &matches).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!(
        "propflow match matcher={} n_src={} n_dst={} match_ms={}",
        matcher.name(),
        src.len(),
        dst.len(),
        elapsed.as_millis()
    );
    println!("matches={}", matches.len());
    Ok(())
}

fn check_match_ids(matches: &MatchSet, n_src: usize, n_dst: usize) -> Result<()> {
    for m in &matches.entries {
        if m.src_id as usize >= n_src || m.dst_id as usize >= n_dst {
            bail!(Error::Format(format!("match {} -> {} refers to a proposal outside the manifests", m.src_id, m.dst_id)));
        }
    }
    Ok(())
}

fn cmd_flow(a: &FlowArgs) -> Result<()> {
    let (_, src) = load_boxes(&a.src)?;
    let (dst_manifest, dst) = load_boxes(&a.dst)?;
    let matches = io::read_matches(&a.matches)?;
    check_match_ids(&matches, src.len(), dst.len())?;
    let guide = match &a.guide {
        Some(p) => Some(RasterImage::load(p).with_context(|| format!("reading guide {}", p.display()))?),
        None => None,
    };
    let anchors = build_anchor_index(&src, &matches);
    let raw = synthesize_flow(&src, &dst, &matches, &anchors);
    if raw.valid_count() == 0 {
        bail!(Error::NoValidFlow);
    }
    let covered = raw.valid_count();
    let flow = fill_holes(&raw, guide.as_ref())?;
    io::save_flo(&a.out, &flow).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(out) = &a.warp {
        let second = load_image(&dst_manifest, &a.dst)?;
        warp_image(&second, &flow).save(out).with_context(|| format!("writing {}", out.display()))?;
    }
    println!("flow_pixels={} anchored_pixels={covered}", flow.len());
    Ok(())
}

fn cmd_gtgen(a: &GtgenArgs) -> Result<()> {
    let kp = io::read_keypoints(&a.keypoints)?;
    let m = io::read_manifest(&a.src)?;
    let boxes = m.bboxes()?;
    let selection = m.selection(a.max_proposals as usize);
    let warp = tps_fit(&kp.keypoints())?;
    let chosen: Vec<BBox> = selection.iter().map(|&i| boxes[i]).collect();
    let n = chosen.len();
    let set = ProposalSet::from_parts(m.width, m.height, &m.descriptor_id, chosen, vec![Vec::new(); n])?;
    let dst_box = kp.dst_box()?;
    let mut gts = generate_gt(&warp, &set, &kp.src_box()?, a.dst_filter.then_some(&dst_box))?;
    for g in &mut gts {
        g.src_region_id = selection[g.src_region_id as usize] as u32;
    }
    gts.sort_by_key(|g| g.src_region_id);
    io::write_gt(&a.out, &gts).with_context(|| format!("writing {}", a.out.display()))?;
    println!("gt_regions={}", gts.len());
    Ok(())
}

fn cmd_eval_region(a: &EvalRegionArgs, miou: bool) -> Result<()> {
    let matches = io::read_matches(&a.matches)?;
    let gts = io::read_gt(&a.gt)?;
    let (_, dst) = load_boxes(&a.dst)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let (curve, stem, x_name, title) = if miou {
        (miou_at_k(&matches, &dst, &gts, None)?, "miou", "k", "mIoU@k")
    } else {
        (pcr(&matches, &dst, &gts, &pcr_thresholds())?, "pcr", "tau", "PCR")
    };
    let area = auc(&curve)?;
    write_text(&a.out.join(format!("{stem}.csv")), &io::format_curve(&curve, x_name))?;
    write_text(&a.out.join(format!("{stem}.svg")), &io::curve_svg(&curve, title, x_name))?;
    let truth = gts.iter().map(|g| (g.src_region_id, g.gt_box)).collect();
    let correct = count_correct(&matches, &dst, &truth, a.iou_thresh);
    println!("{stem}_auc={area}");
    println!("correct_at_iou={} iou_thresh={} gt_regions={}", correct as f64 / gts.len() as f64, a.iou_thresh, gts.len());
    Ok(())
}

fn cmd_eval_pck(a: &EvalPckArgs) -> Result<()> {
    let flow = io::load_flo(&a.flow)?;
    let kp = io::read_keypoints(&a.keypoints)?;
    let r = eval::pck_flow(&flow, &kp.keypoints(), &kp.dst_box()?, a.alpha)?;
    println!("pck={} correct={} total={} alpha={}", r.pck(), r.correct, r.total, r.alpha);
    Ok(())
}

fn cmd_leave_n_out(a: &LeaveNOutArgs, seed: u64) -> Result<()> {
    let kp = io::read_keypoints(&a.keypoints)?;
    let pairs = kp.keypoints();
    let bbox = kp.dst_box()?;
    for &n in &a.n {
        let v = eval::leave_n_out(&pairs, n, a.trials, a.alpha, seed, Some(&bbox))?;
        println!("n={n} pck={v}");
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let t: Vec<f64> = a
        .transform
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .ok()
        .filter(|t: &Vec<f64>| t.len() == 6 && t.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Config(format!("--transform needs six numbers a,b,c,d,e,f, got {:?}", a.transform)))?;
    let cfg = SynthConfig {
        seed,
        image_size: (a.width, a.height),
        n_objects: a.objects,
        proposals_per_object: a.proposals_per_object,
        n_clutter: a.clutter,
        feature_dim: a.feature_dim,
        feature_noise_sigma: a.noise,
        part_spread: a.part_spread,
        trans_sigma: a.trans_sigma,
        logscale_sigma: a.logscale_sigma,
        global_transform: Affine2([[t[0], t[1], t[2]], [t[3], t[4], t[5]]]),
    };
    let pair = synth::generate(&cfg)?;
    write_synth(&pair, &a.out)?;
    println!("proposals={} true_matches={} keypoints={}", pair.proposals[0].len(), pair.true_match.len(), pair.keypoints.len());
    Ok(())
}

/// Writes images, manifests with PFFT sidecars, keypoints and the truth CSV.
pub fn write_synth(pair: &synth::SynthPair, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (k, stem) in ["src", "dst"].into_iter().enumerate() {
        let image = format!("{stem}.pgm");
        let features = format!("{stem}.pfft");
        pair.images[k].save(&out.join(&image))?;
        let set = &pair.proposals[k];
        let rows: Vec<Vec<f64>> = set.regions.iter().map(|r| r.feature.values.clone()).collect();
        io::write_pfft(&out.join(&features), &rows)?;
        let mut m = ProposalManifest::from_set(set, &image);
        m.features = None;
        m.features_file = Some(features);
        io::write_manifest(&out.join(format!("{stem}.json")), &m)?;
    }
    let kp = KeypointFile::new("src.pgm", "dst.pgm", &pair.keypoints, &pair.bboxes[0], &pair.bboxes[1]);
    io::write_keypoints(&out.join("keypoints.json"), &kp)?;
    let mut truth = String::from("src_id,dst_id\n");
    for (s, d) in &pair.true_match {
        truth.push_str(&format!("{s},{d}\n"));
    }
    write_text(&out.join("truth.csv"), &truth)
}

fn cmd_sliding(a: &SlidingArgs) -> Result<()> {
    let img = RasterImage::load(&a.image).with_context(|| format!("reading image {}", a.image.display()))?;
    let size = (img.width, img.height);
    let scales = a.scales.clone().unwrap_or_else(|| synth::default_scales(size));
    let aspects = a.aspects.clone().unwrap_or_else(synth::default_aspects);
    let boxes = synth::sliding_window_proposals(size, &scales, &aspects, a.stride)?;
    let image: PathBuf = fs::canonicalize(&a.image).unwrap_or_else(|_| a.image.clone());
    let m = ProposalManifest {
        image: image.to_string_lossy().into_owned(),
        width: img.width,
        height: img.height,
        descriptor_id: HogConfig::DESCRIPTOR_ID.to_string(),
        boxes: boxes.iter().map(|b| [b.x, b.y, b.w, b.h]).collect(),
        features: None,
        features_file: None,
        scores: None,
    };
    io::write_manifest(&a.out, &m)?;
    println!("windows={}", boxes.len());
    Ok(())
}
