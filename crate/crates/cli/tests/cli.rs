use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use propflow::io;

fn propflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_propflow")).args(args).output().expect("spawn propflow")
}

fn ok(args: &[&str]) -> String {
    let out = propflow(args);
    assert!(
        out.status.success(),
        "propflow {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value(stdout: &str, key: &str) -> f64 {
    stdout
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {stdout:?}"))
        .parse()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

/// Match CSV assigning every object proposal its true partner.
fn truth_matches(dir: &Path) -> String {
    let truth = fs::read_to_string(dir.join("truth.csv")).unwrap();
    let mut csv = String::from("src_id,dst_id,score\n");
    for line in truth.lines().skip(1) {
        csv.push_str(&format!("{line},1\n"));
    }
    csv
}

#[test]
fn match_writes_one_row_per_source_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--seed", "3"]);
    let (src, dst) = (d.join("src.json"), d.join("dst.json"));
    let n = io::read_manifest(&src).unwrap().boxes.len();
    for matcher in ["nam", "phm", "lom"] {
        let out = d.join(format!("{matcher}.csv"));
        ok(&["match", "--src", p(&src), "--dst", p(&dst), "--matcher", matcher, "--out", p(&out)]);
        let m = io::read_matches(&out).unwrap();
        assert_eq!(m.len(), n);
        let again = d.join("again.csv");
        ok(&["match", "--src", p(&src), "--dst", p(&dst), "--matcher", matcher, "--out", p(&again)]);
        assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
    }
    let out = d.join("ten.csv");
    ok(&["match", "--src", p(&src), "--dst", p(&dst), "--max-proposals", "10", "--out", p(&out)]);
    assert_eq!(io::read_matches(&out).unwrap().len(), 10);
}

#[test]
fn exact_and_binned_phm_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--seed", "4", "--clutter", "0", "--noise", "0"]);
    let (src, dst) = (d.join("src.json"), d.join("dst.json"));
    let a = d.join("a.csv");
    let b = d.join("b.csv");
    ok(&["match", "--src", p(&src), "--dst", p(&dst), "--matcher", "phm", "--phm-mode", "exact", "--out", p(&a)]);
    ok(&[
        "match", "--src", p(&src), "--dst", p(&dst), "--matcher", "phm", "--phm-mode", "binned", "--bin-xy", "3.2",
        "--bin-ls", "0.08", "--sigma-xy", "12.8", "--sigma-ls", "0.35", "--similarity", "l2_gaussian", "--out", p(&b),
    ]);
    assert_eq!(io::read_matches(&a).unwrap().len(), io::read_matches(&b).unwrap().len());
}

#[test]
fn identity_pair_gives_zero_flow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--seed", "1", "--clutter", "0", "--noise", "0"]);
    let (src, dst) = (d.join("src.json"), d.join("dst.json"));
    let m = d.join("m.csv");
    ok(&["match", "--src", p(&src), "--dst", p(&dst), "--matcher", "lom", "--out", p(&m)]);
    let flo = d.join("f.flo");
    let warped = d.join("w.pgm");
    ok(&["flow", "--src", p(&src), "--dst", p(&dst), "--matches", p(&m), "--warp", p(&warped), "--out", p(&flo)]);
    let flow = io::load_flo(&flo).unwrap();
    assert_eq!(flow.valid_count(), flow.len());
    assert!(flow.max_abs_valid() < 1e-9);
    let first = propflow::RasterImage::load(&d.join("src.pgm")).unwrap();
    assert_eq!(propflow::RasterImage::load(&warped).unwrap(), first);
    let kp = d.join("keypoints.json");
    let out = ok(&["eval-pck", "--flow", p(&flo), "--keypoints", p(&kp), "--alpha", "0.1"]);
    assert_eq!(value(&out, "pck"), 1.0);
}

#[test]
fn affine_pair_with_true_matches_has_full_pck() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--seed", "2", "--transform", "1.15,0,6,0,1.15,-4"]);
    let m = d.join("m.csv");
    fs::write(&m, truth_matches(d)).unwrap();
    let flo = d.join("f.flo");
    let (src, dst) = (d.join("src.json"), d.join("dst.json"));
    ok(&["flow", "--src", p(&src), "--dst", p(&dst), "--matches", p(&m), "--guide", p(&d.join("src.pgm")), "--out", p(&flo)]);
    let out = ok(&["eval-pck", "--flow", p(&flo), "--keypoints", p(&d.join("keypoints.json"))]);
    assert_eq!(value(&out, "pck"), 1.0);
}

#[test]
fn gtgen_and_region_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--seed", "5", "--transform", "1.1,0,8,0,1.1,3"]);
    let (src, dst, kp) = (d.join("src.json"), d.join("dst.json"), d.join("keypoints.json"));
    let gt = d.join("gt.csv");
    let out = ok(&["gtgen", "--keypoints", p(&kp), "--src", p(&src), "--out", p(&gt)]);
    let gts = io::read_gt(&gt).unwrap();
    assert_eq!(value(&out, "gt_regions") as usize, gts.len());
    assert!(!gts.is_empty());

    // true matches score perfectly against TPS ground truth of an affine map
    let perfect = d.join("perfect.csv");
    fs::write(&perfect, truth_matches(d)).unwrap();
    let all = io::read_matches(&perfect).unwrap();
    let gt_ids: Vec<u32> = gts.iter().map(|g| g.src_region_id).collect();
    let covered: Vec<u32> = all.entries.iter().map(|m| m.src_id).filter(|s| gt_ids.contains(s)).collect();
    let gt_only = d.join("gt_only.csv");
    io::write_gt(&gt_only, &gts.iter().copied().filter(|g| covered.contains(&g.src_region_id)).collect::<Vec<_>>()).unwrap();
    let metrics = d.join("metrics");
    let out = ok(&["eval-pcr", "--matches", p(&perfect), "--gt", p(&gt_only), "--dst", p(&dst), "--out", p(&metrics)]);
    assert!((value(&out, "pcr_auc") - 1.0).abs() < 0.02, "{out}");
    assert_eq!(value(&out, "correct_at_iou"), 1.0);
    let out = ok(&["eval-miou", "--matches", p(&perfect), "--gt", p(&gt_only), "--dst", p(&dst), "--out", p(&metrics)]);
    assert!(value(&out, "miou_auc") > 0.999, "{out}");
    for f in ["pcr.csv", "pcr.svg", "miou.csv", "miou.svg"] {
        assert!(metrics.join(f).exists(), "{f}");
    }
    let curve = io::parse_curve(&fs::read_to_string(metrics.join("pcr.csv")).unwrap(), "tau").unwrap();
    assert_eq!(curve.x.len(), 101);

    // a lom run evaluated on the full ground truth
    let m = d.join("lom.csv");
    ok(&["match", "--src", p(&src), "--dst", p(&dst), "--out", p(&m)]);
    let out = ok(&["eval-pcr", "--matches", p(&m), "--gt", p(&gt), "--dst", p(&dst), "--iou-thresh", "0.5", "--out", p(&metrics)]);
    let v = value(&out, "pcr_auc");
    assert!((0.0..=1.0).contains(&v));
}

#[test]
fn missing_ground_truth_match_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--seed", "6"]);
    let gt = d.join("gt.csv");
    fs::write(&gt, "src_region_id,gt_x,gt_y,gt_w,gt_h\n999,1,1,5,5\n").unwrap();
    let m = d.join("m.csv");
    fs::write(&m, "src_id,dst_id,score\n0,0,1\n").unwrap();
    let out = propflow(&["eval-pcr", "--matches", p(&m), "--gt", p(&gt), "--dst", p(&d.join("dst.json")), "--out", p(d)]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.lines().last().unwrap().starts_with("error kind=MissingGt"), "{err}");
}

#[test]
fn leave_n_out_on_affine_keypoints() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--seed", "7", "--transform", "0.9,0.1,20,-0.05,1.0,10"]);
    let kp = d.join("keypoints.json");
    let out = ok(&["leave-n-out", "--keypoints", p(&kp), "--n", "1,3,5", "--trials", "10", "--seed", "11"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    for l in lines {
        assert_eq!(value(l, "pck"), 1.0, "{l}");
    }
}

#[test]
fn sliding_windows_then_hog_matching() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--seed", "8", "--width", "96", "--height", "96", "--objects", "1", "--clutter", "2"]);
    let src = d.join("sw_src.json");
    let dst = d.join("sw_dst.json");
    let out = ok(&["sliding-windows", "--image", p(&d.join("src.pgm")), "--scales", "48,96", "--aspects", "1", "--out", p(&src)]);
    assert_eq!(value(&out, "windows"), 10.0);
    ok(&["sliding-windows", "--image", p(&d.join("dst.pgm")), "--scales", "48,96", "--aspects", "1", "--out", p(&dst)]);
    let m = d.join("m.csv");
    ok(&["match", "--src", p(&src), "--dst", p(&dst), "--matcher", "nam", "--out", p(&m)]);
    let matches = io::read_matches(&m).unwrap();
    assert_eq!(matches.len(), 10);
    // identical images: every window finds itself
    let ident = d.join("ident.csv");
    ok(&["match", "--src", p(&src), "--dst", p(&src), "--matcher", "nam", "--out", p(&ident)]);
    for e in io::read_matches(&ident).unwrap().entries {
        assert_eq!(e.src_id, e.dst_id);
    }
    let out = ok(&["sliding-windows", "--image", p(&d.join("src.pgm")), "--out", p(&src)]);
    assert!(value(&out, "windows") > 10.0);
}

#[test]
fn errors_are_single_machine_readable_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases: Vec<(Vec<String>, &str)> = vec![
        (
            vec!["match".into(), "--src".into(), "nope.json".into(), "--dst".into(), "nope.json".into(), "--out".into(), "x.csv".into()],
            "IoError",
        ),
        (vec!["synth".into(), "--objects".into(), "40".into(), "--out".into(), p(d).into()], "ConfigError"),
        (vec!["synth".into(), "--noise".into(), "-1".into(), "--out".into(), p(d).into()], "ConfigError"),
        (vec!["bogus".into()], "UsageError"),
    ];
    for (args, kind) in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = propflow(&args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        let last = err.lines().last().unwrap();
        assert!(last.starts_with(&format!("error kind={kind} message=\"")), "{args:?}: {err}");
        assert!(!err.lines().any(|l| l.starts_with("error") && l != last));
    }

    synth(d, &["--seed", "9"]);
    let (src, dst) = (d.join("src.json"), d.join("dst.json"));
    let out = propflow(&["match", "--src", p(&src), "--dst", p(&dst), "--matcher", "xyz", "--out", p(&d.join("m.csv"))]);
    assert!(String::from_utf8(out.stderr).unwrap().contains("error kind=ConfigError"));
    let bad = d.join("bad.csv");
    fs::write(&bad, "src_id,dst_id,score\n0,0,1\n1,oops,1\n").unwrap();
    let out = propflow(&["flow", "--src", p(&src), "--dst", p(&dst), "--matches", p(&bad), "--out", p(&d.join("f.flo"))]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("error kind=FormatError") && err.contains("line 3"), "{err}");
    let empty = d.join("empty.csv");
    fs::write(&empty, "src_id,dst_id,score\n").unwrap();
    let out = propflow(&["flow", "--src", p(&src), "--dst", p(&dst), "--matches", p(&empty), "--out", p(&d.join("f.flo"))]);
    assert!(String::from_utf8(out.stderr).unwrap().contains("error kind=NoValidFlow"));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--seed", "10"]);
    let (src, dst) = (d.join("src.json"), d.join("dst.json"));
    let run = |threads: &str, out: &Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_propflow"))
            .env("PROPFLOW_THREADS", threads)
            .args(["match", "--src", p(&src), "--dst", p(&dst), "--out", p(out)])
            .output()
            .unwrap();
        status
    };
    let (a, b) = (d.join("a.csv"), d.join("b.csv"));
    assert!(run("1", &a).status.success());
    assert!(run("4", &b).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let out = run("zero", &a);
    assert!(String::from_utf8(out.stderr).unwrap().contains("error kind=ConfigError"));
}

#[test]
fn seed_is_echoed_and_synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = propflow(&["synth", "--seed", "77", "--out", p(a.path())]);
    assert!(String::from_utf8(out.stderr).unwrap().contains("seed=77"));
    synth(b.path(), &["--seed", "77"]);
    for f in ["src.pgm", "dst.pgm", "src.json", "dst.json", "src.pfft", "dst.pfft", "keypoints.json", "truth.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
