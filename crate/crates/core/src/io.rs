//! On-disk formats: proposal manifests, binary feature tables, match and
//! ground-truth CSVs, keypoint files, flow files and metric curves.
//!
//! Text formats print floats with Rust's shortest round-trip formatting, so
//! every `f64` survives write then read bit-exactly. Binary formats store
//! `f32`; values already representable as `f32` round-trip exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Curve;
use crate::features::FeatureVec;
use crate::flowfield::FlowField;
use crate::geometry::BBox;
use crate::matching::{Match, MatchSet, ProposalSet, Region};
use crate::tps::{GtCorrespondence, KeypointPair};

const PFFT_MAGIC: &[u8; 4] = b"PFFT";
const FLO_MAGIC: &[u8; 4] = b"PIEH";
/// Flow components above this magnitude mark unknown pixels in `.flo` files.
pub const FLO_UNKNOWN_THRESH: f32 = 1e9;
const FLO_UNKNOWN: f32 = 1e10;

fn box_to_array(b: &BBox) -> [f64; 4] {
    [b.x, b.y, b.w, b.h]
}

fn array_to_box(a: [f64; 4]) -> Result<BBox> {
    BBox::new(a[0], a[1], a[2], a[3])
}

/// Proposal file for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalManifest {
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub descriptor_id: String,
    pub boxes: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
    /// PFFT sidecar, relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

impl ProposalManifest {
    pub fn from_set(set: &ProposalSet, image: &str) -> Self {
        Self {
            image: image.to_string(),
            width: set.image_width,
            height: set.image_height,
            descriptor_id: set.regions.first().map_or_else(String::new, |r| r.feature.descriptor_id.to_string()),
            boxes: set.regions.iter().map(|r| box_to_array(&r.bbox)).collect(),
            features: Some(set.regions.iter().map(|r| r.feature.values.clone()).collect()),
            features_file: None,
            scores: None,
        }
    }

    pub fn bboxes(&self) -> Result<Vec<BBox>> {
        self.boxes
            .iter()
            .enumerate()
            .map(|(i, &b)| array_to_box(b).map_err(|e| Error::Format(format!("box {i}: {e}"))))
            .collect()
    }

    fn check(&self) -> Result<()> {
        let n = self.boxes.len();
        if let Some(s) = &self.scores {
            if s.len() != n {
                return Err(Error::Format(format!("{} scores for {n} boxes", s.len())));
            }
        }
        if self.features.is_some() && self.features_file.is_some() {
            return Err(Error::Format("both inline features and features_file given".into()));
        }
        Ok(())
    }

    /// Indices kept by a proposal budget: highest scores first (ties by file
    /// order) when scores exist, file order otherwise.
    pub fn selection(&self, max_proposals: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.boxes.len()).collect();
        if let Some(s) = &self.scores {
            idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        }
        idx.truncate(max_proposals);
        idx
    }

    /// Feature rows from inline data or the sidecar; `None` when the manifest carries none.
    pub fn load_features(&self, base_dir: &Path) -> Result<Option<Vec<Vec<f64>>>> {
        let rows = match (&self.features, &self.features_file) {
            (Some(f), _) => f.clone(),
            (None, Some(file)) => read_pfft(&base_dir.join(file))?,
            (None, None) => return Ok(None),
        };
        if rows.len() != self.boxes.len() {
            return Err(Error::Format(format!("{} feature rows for {} boxes", rows.len(), self.boxes.len())));
        }
        Ok(Some(rows))
    }

    /// Builds the proposal set for the chosen indices, renumbered `0..k`.
    pub fn to_set(&self, features: &[Vec<f64>], selection: &[usize]) -> Result<ProposalSet> {
        let id: Arc<str> = Arc::from(self.descriptor_id.as_str());
        let boxes = self.bboxes()?;
        let regions = selection
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                Ok(Region { id: k as u32, bbox: boxes[i], feature: FeatureVec::new(id.clone(), features[i].clone())? })
            })
            .collect::<Result<Vec<_>>>()?;
        ProposalSet::new(self.width, self.height, regions)
    }

    /// Image path resolved against the manifest's directory.
    pub fn image_path(&self, base_dir: &Path) -> PathBuf {
        base_dir.join(&self.image)
    }
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().unwrap_or_else(|| Path::new("."))
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Format(format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column()))
}

pub fn read_manifest(path: &Path) -> Result<ProposalManifest> {
    let text = fs::read_to_string(path)?;
    let m: ProposalManifest = serde_json::from_str(&text).map_err(|e| json_error(path, e))?;
    m.check().map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(m)
}

pub fn write_manifest(path: &Path, m: &ProposalManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(m).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads a manifest and its features. Returns `None` for the set when the
/// manifest has no features.
pub fn read_proposals(path: &Path) -> Result<(ProposalManifest, Option<ProposalSet>)> {
    let m = read_manifest(path)?;
    let set = match m.load_features(parent_dir(path))? {
        Some(f) => Some(m.to_set(&f, &(0..m.boxes.len()).collect::<Vec<_>>())?),
        None => None,
    };
    Ok((m, set))
}

pub fn encode_pfft(rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Format("feature rows differ in length".into()));
    }
    let mut out = Vec::with_capacity(12 + rows.len() * dim * 4);
    out.extend_from_slice(PFFT_MAGIC);
    out.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in rows.iter().flatten() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_pfft(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    if bytes.len() < 12 || &bytes[..4] != PFFT_MAGIC {
        return Err(Error::Format("missing PFFT header".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expect = n.checked_mul(d).and_then(|c| c.checked_mul(4)).and_then(|c| c.checked_add(12));
    if expect != Some(bytes.len()) {
        return Err(Error::Format(format!("PFFT size mismatch: header says {n}x{d}, file has {} bytes", bytes.len())));
    }
    Ok(bytes[12..]
        .chunks_exact(4 * d.max(1))
        .take(n)
        .map(|row| row.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect())
        .chain(std::iter::repeat_with(Vec::new).take(if d == 0 { n } else { 0 }))
        .collect())
}

pub fn read_pfft(path: &Path) -> Result<Vec<Vec<f64>>> {
    decode_pfft(&fs::read(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_pfft(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    fs::write(path, encode_pfft(rows)?)?;
    Ok(())
}

/// Data lines of a CSV with the given header, as (line number, fields).
fn csv_rows<'a>(text: &'a str, header: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((_, h)) => return Err(Error::Format(format!("line 1: expected header {header:?}, found {:?}", h.trim()))),
        None => return Err(Error::Format(format!("empty file, expected header {header:?}"))),
    }
    let cols = header.split(',').count();
    lines
        .map(|(i, l)| {
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            if fields.len() != cols {
                return Err(Error::Format(format!("line {}: expected {cols} fields, found {}", i + 1, fields.len())));
            }
            Ok((i + 1, fields))
        })
        .collect()
}

fn field<T: std::str::FromStr>(line: usize, name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format(format!("line {line}: bad {name} {s:?}")))
}

const MATCH_HEADER: &str = "src_id,dst_id,score";
const GT_HEADER: &str = "src_region_id,gt_x,gt_y,gt_w,gt_h";

pub fn format_matches(m: &MatchSet) -> String {
    let mut s = format!("{MATCH_HEADER}\n");
    for e in &m.entries {
        s.push_str(&format!("{},{},{}\n", e.src_id, e.dst_id, e.score));
    }
    s
}

pub fn parse_matches(text: &str) -> Result<MatchSet> {
    let entries = csv_rows(text, MATCH_HEADER)?
        .into_iter()
        .map(|(l, f)| {
            Ok(Match {
                src_id: field(l, "src_id", f[0])?,
                dst_id: field(l, "dst_id", f[1])?,
                score: field(l, "score", f[2])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MatchSet { entries })
}

pub fn read_matches(path: &Path) -> Result<MatchSet> {
    parse_matches(&fs::read_to_string(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_matches(path: &Path, m: &MatchSet) -> Result<()> {
    fs::write(path, format_matches(m))?;
    Ok(())
}

pub fn format_gt(gts: &[GtCorrespondence]) -> String {
    let mut s = format!("{GT_HEADER}\n");
    for g in gts {
        let b = g.gt_box;
        s.push_str(&format!("{},{},{},{},{}\n", g.src_region_id, b.x, b.y, b.w, b.h));
    }
    s
}

pub fn parse_gt(text: &str) -> Result<Vec<GtCorrespondence>> {
    csv_rows(text, GT_HEADER)?
        .into_iter()
        .map(|(l, f)| {
            let b = [
                field(l, "gt_x", f[1])?,
                field(l, "gt_y", f[2])?,
                field(l, "gt_w", f[3])?,
                field(l, "gt_h", f[4])?,
            ];
            Ok(GtCorrespondence {
                src_region_id: field(l, "src_region_id", f[0])?,
                gt_box: array_to_box(b).map_err(|e| Error::Format(format!("line {l}: {e}")))?,
            })
        })
        .collect()
}

pub fn read_gt(path: &Path) -> Result<Vec<GtCorrespondence>> {
    parse_gt(&fs::read_to_string(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_gt(path: &Path, gts: &[GtCorrespondence]) -> Result<()> {
    fs::write(path, format_gt(gts))?;
    Ok(())
}

/// Keypoint correspondences between two images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointFile {
    pub src_image: String,
    pub dst_image: String,
    pub pairs: Vec<[f64; 4]>,
    pub src_bbox: [f64; 4],
    pub dst_bbox: [f64; 4],
}

impl KeypointFile {
    pub fn new(src_image: &str, dst_image: &str, pairs: &[KeypointPair], src_bbox: &BBox, dst_bbox: &BBox) -> Self {
        Self {
            src_image: src_image.to_string(),
            dst_image: dst_image.to_string(),
            pairs: pairs.iter().map(|p| [p.src.0, p.src.1, p.dst.0, p.dst.1]).collect(),
            src_bbox: box_to_array(src_bbox),
            dst_bbox: box_to_array(dst_bbox),
        }
    }

    pub fn keypoints(&self) -> Vec<KeypointPair> {
        self.pairs.iter().map(|p| KeypointPair::new(p[0], p[1], p[2], p[3])).collect()
    }

    pub fn src_box(&self) -> Result<BBox> {
        array_to_box(self.src_bbox)
    }

    pub fn dst_box(&self) -> Result<BBox> {
        array_to_box(self.dst_bbox)
    }
}

pub fn read_keypoints(path: &Path) -> Result<KeypointFile> {
    let text = fs::read_to_string(path)?;
    let k: KeypointFile = serde_json::from_str(&text).map_err(|e| json_error(path, e))?;
    k.src_box().and(k.dst_box()).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(k)
}

pub fn write_keypoints(path: &Path, k: &KeypointFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(k).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes a `.flo` stream. Invalid pixels are stored as the unknown-flow marker.
pub fn write_flo<W: Write>(mut w: W, flow: &FlowField) -> Result<()> {
    let (width, height) = (i32::try_from(flow.width), i32::try_from(flow.height));
    let (Ok(width), Ok(height)) = (width, height) else {
        return Err(Error::Format("flow too large for .flo".into()));
    };
    let mut buf = Vec::with_capacity(12 + flow.len() * 8);
    buf.extend_from_slice(FLO_MAGIC);
    buf.extend_from_slice(&width.to_le_bytes());
    buf.extend_from_slice(&height.to_le_bytes());
    for i in 0..flow.len() {
        let (u, v) = if flow.valid[i] { (flow.u[i] as f32, flow.v[i] as f32) } else { (FLO_UNKNOWN, FLO_UNKNOWN) };
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_flo<R: Read>(mut r: R) -> Result<FlowField> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..4] != FLO_MAGIC {
        return Err(Error::Format("missing PIEH header".into()));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width < 0 || height < 0 {
        return Err(Error::Format(format!("negative flow size {width}x{height}")));
    }
    let n = width as usize * height as usize;
    if bytes.len() != 12 + n * 8 {
        return Err(Error::Format(format!("flow size mismatch: {width}x{height} needs {} bytes, found {}", 12 + n * 8, bytes.len())));
    }
    let mut flow = FlowField::empty(width as u32, height as u32);
    for (i, c) in bytes[12..].chunks_exact(8).enumerate() {
        let u = f32::from_le_bytes(c[..4].try_into().unwrap());
        let v = f32::from_le_bytes(c[4..].try_into().unwrap());
        if u.abs() > FLO_UNKNOWN_THRESH || v.abs() > FLO_UNKNOWN_THRESH || u.is_nan() || v.is_nan() {
            continue;
        }
        flow.u[i] = f64::from(u);
        flow.v[i] = f64::from(v);
        flow.valid[i] = true;
    }
    Ok(flow)
}

pub fn save_flo(path: &Path, flow: &FlowField) -> Result<()> {
    write_flo(fs::File::create(path)?, flow)
}

pub fn load_flo(path: &Path) -> Result<FlowField> {
    read_flo(fs::File::open(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        e => e,
    })
}

/// Two-column CSV, e.g. header `tau,value` or `k,value`.
pub fn format_curve(curve: &Curve, x_name: &str) -> String {
    let mut s = format!("{x_name},value\n");
    for (x, y) in curve.x.iter().zip(&curve.y) {
        s.push_str(&format!("{x},{y}\n"));
    }
    s
}

pub fn parse_curve(text: &str, x_name: &str) -> Result<Curve> {
    let rows = csv_rows(text, &format!("{x_name},value"))?;
    let mut curve = Curve { x: Vec::with_capacity(rows.len()), y: Vec::with_capacity(rows.len()) };
    for (l, f) in rows {
        curve.x.push(field(l, x_name, f[0])?);
        curve.y.push(field(l, "value", f[1])?);
    }
    Ok(curve)
}

/// Minimal standalone SVG line plot; the y axis spans [0, 1].
pub fn curve_svg(curve: &Curve, title: &str, x_label: &str) -> String {
    const W: f64 = 400.0;
    const H: f64 = 300.0;
    const M: f64 = 40.0;
    let (x0, x1) = match (curve.x.first(), curve.x.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a - 0.5, a + 0.5),
        _ => (0.0, 1.0),
    };
    let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |y: f64| H - M - y.clamp(0.0, 1.0) * (H - 2.0 * M);
    let points: Vec<String> =
        curve.x.iter().zip(&curve.y).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    let esc = |s: &str| s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
            "<text x=\"{cx}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
            "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
            "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
            "<text x=\"{cx}\" y=\"{lb}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{xl}</text>\n",
            "<text x=\"{m}\" y=\"{lb}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{x0}</text>\n",
            "<text x=\"{r}\" y=\"{lb}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{x1}</text>\n",
            "<text x=\"{tl}\" y=\"{b}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">0</text>\n",
            "<text x=\"{tl}\" y=\"{m}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">1</text>\n",
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{pts}\"/>\n",
            "</svg>\n"
        ),
        w = W,
        h = H,
        m = M,
        b = H - M,
        r = W - M,
        cx = W / 2.0,
        lb = H - M + 16.0,
        tl = M - 4.0,
        title = esc(title),
        xl = esc(x_label),
        x0 = x0,
        x1 = x1,
        pts = points.join(" "),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -1e3..1e3f64]
    }

    #[test]
    fn pfft_layout() {
        let bytes = encode_pfft(&[vec![1.0, 2.0], vec![0.5, -3.0]]).unwrap();
        assert_eq!(&bytes[..4], b"PFFT");
        assert_eq!(&bytes[4..12], &[2, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 12 + 16);
        assert!(decode_pfft(&bytes[..20]).is_err());
        assert!(decode_pfft(b"XXXX\0\0\0\0\0\0\0\0").is_err());
        assert_eq!(decode_pfft(&encode_pfft(&[]).unwrap()).unwrap(), Vec::<Vec<f64>>::new());
    }

    #[test]
    fn flo_layout_and_unknowns() {
        let mut f = FlowField::constant(3, 2, 1.5, -2.25);
        f.valid[4] = false;
        let mut bytes = Vec::new();
        write_flo(&mut bytes, &f).unwrap();
        assert_eq!(&bytes[..4], b"PIEH");
        assert_eq!(i32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(i32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 12 + 6 * 8);
        let back = read_flo(bytes.as_slice()).unwrap();
        assert_eq!(back.valid, f.valid);
        assert_eq!(back.u[0], 1.5);
        assert_eq!(back.v[5], -2.25);
        assert!(read_flo(&bytes[..30]).is_err());
    }

    #[test]
    fn csv_diagnostics() {
        let e = parse_matches("src_id,dst_id,score\n0,1,0.5\n1,x,0.2\n").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let e = parse_matches("a,b\n").unwrap_err();
        assert!(e.to_string().contains("line 1"), "{e}");
        let e = parse_gt("src_region_id,gt_x,gt_y,gt_w,gt_h\n0,1,2,3\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        let e = parse_gt("src_region_id,gt_x,gt_y,gt_w,gt_h\n0,1,2,-3,4\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn manifest_selection_and_validation() {
        let mut m = ProposalManifest {
            image: "a.pgm".into(),
            width: 10,
            height: 10,
            descriptor_id: "d".into(),
            boxes: vec![[0.0, 0.0, 1.0, 1.0]; 4],
            features: None,
            features_file: None,
            scores: Some(vec![0.1, 0.9, 0.5, 0.9]),
        };
        assert_eq!(m.selection(3), vec![1, 3, 2]);
        m.scores = None;
        assert_eq!(m.selection(2), vec![0, 1]);
        m.scores = Some(vec![1.0]);
        assert!(m.check().is_err());
    }

    #[test]
    fn manifest_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        write_pfft(&dir.path().join("f.pfft"), &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = ProposalManifest {
            image: "a.pgm".into(),
            width: 10,
            height: 10,
            descriptor_id: "d".into(),
            boxes: vec![[0.0, 0.0, 5.0, 5.0], [5.0, 5.0, 5.0, 5.0]],
            features: None,
            features_file: Some("f.pfft".into()),
            scores: None,
        };
        let path = dir.path().join("m.json");
        write_manifest(&path, &m).unwrap();
        let (back, set) = read_proposals(&path).unwrap();
        assert_eq!(back, m);
        let set = set.unwrap();
        assert_eq!(set.regions[1].feature.values, vec![0.0, 1.0]);
        assert_eq!(&*set.regions[1].feature.descriptor_id, "d");
        std::fs::write(&path, "{\"image\": 3}").unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Format(_))));
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let c = Curve { x: vec![0.0, 0.5, 1.0], y: vec![0.0, 1.0, 0.5] };
        let s = curve_svg(&c, "PCR <test>", "tau");
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("&lt;test&gt;"));
        assert_eq!(s.matches("<polyline").count(), 1);
    }

    proptest! {
        #[test]
        fn match_csv_round_trip(rows in prop::collection::vec((any::<u32>(), any::<u32>(), finite()), 0..20)) {
            let m = MatchSet { entries: rows.iter().map(|&(s, d, score)| Match { src_id: s, dst_id: d, score }).collect() };
            let back = parse_matches(&format_matches(&m)).unwrap();
            prop_assert_eq!(back.entries.len(), m.entries.len());
            for (a, b) in back.entries.iter().zip(&m.entries) {
                prop_assert_eq!((a.src_id, a.dst_id, a.score.to_bits()), (b.src_id, b.dst_id, b.score.to_bits()));
            }
        }

        #[test]
        fn pfft_round_trip(rows in prop::collection::vec(prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 3), 0..10)) {
            let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
            let back = decode_pfft(&encode_pfft(&rows).unwrap()).unwrap();
            prop_assert_eq!(back, rows);
        }

        #[test]
        fn flo_round_trip(w in 1u32..6, h in 1u32..6, vals in prop::collection::vec(-1e6f32..1e6, 72)) {
            let mut f = FlowField::empty(w, h);
            for i in 0..f.len() {
                f.u[i] = f64::from(vals[2 * i]);
                f.v[i] = f64::from(vals[2 * i + 1]);
                f.valid[i] = true;
            }
            let mut bytes = Vec::new();
            write_flo(&mut bytes, &f).unwrap();
            let back = read_flo(bytes.as_slice()).unwrap();
            prop_assert_eq!(back.u, f.u);
            prop_assert_eq!(back.v, f.v);
        }

        #[test]
        fn manifest_round_trip(
            boxes in prop::collection::vec((0.0..100.0f64, 0.0..100.0f64, 0.01..50.0f64, 0.01..50.0f64), 1..8),
            feat in finite(),
        ) {
            let m = ProposalManifest {
                image: "img.pgm".into(),
                width: 160,
                height: 120,
                descriptor_id: "hog".into(),
                boxes: boxes.iter().map(|&(x, y, w, h)| [x, y, w, h]).collect(),
                features: Some(boxes.iter().map(|_| vec![feat, -feat, 0.1]).collect()),
                features_file: None,
                scores: Some(boxes.iter().map(|b| b.0 / 7.0).collect()),
            };
            let text = serde_json::to_string(&m).unwrap();
            let back: ProposalManifest = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn gt_and_curve_round_trip(vals in prop::collection::vec((0.0..500.0f64, 0.001..100.0f64), 1..10)) {
            let gts: Vec<GtCorrespondence> = vals.iter().enumerate()
                .map(|(i, &(x, w))| GtCorrespondence { src_region_id: i as u32, gt_box: BBox { x, y: x / 3.0, w, h: w * 1.7 } })
                .collect();
            prop_assert_eq!(parse_gt(&format_gt(&gts)).unwrap(), gts);
            let c = Curve { x: vals.iter().map(|v| v.0).collect(), y: vals.iter().map(|v| v.1).collect() };
            prop_assert_eq!(parse_curve(&format_curve(&c, "tau"), "tau").unwrap(), c);
        }
    }
}
