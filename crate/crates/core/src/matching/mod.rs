//! Region matching between two proposal sets.
//!
//! Each strategy scores every candidate pair as appearance similarity times a
//! geometric consistency term and assigns every source region its best
//! candidate (ties go to the lowest candidate id):
//!
//! - NAM: geometry ignored.
//! - PHM: geometry is the density of appearance-weighted offset votes from all pairs.
//! - LOM: geometry is the kernel distance to a per-region local offset, the
//!   geometric median of the initial offsets of overlapping regions, scaled by
//!   the appearance support of that neighborhood.

mod hough;
mod median;

use std::sync::Arc;

pub use hough::{hough_binned, hough_exact};
pub use median::{geometric_median, median_objective, DEFAULT_MAX_ITER, DEFAULT_TOL};

use crate::error::{Error, Result};
use crate::features::{FeatureVec, SimilarityFn};
use crate::geometry::{offset, offset_kernel, BBox, KernelParams, OffsetVector};
use crate::par::map_indices;

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: u32,
    pub bbox: BBox,
    pub feature: FeatureVec,
}

/// Proposals of one image. Ids are `0..n` in order and share one descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSet {
    pub image_width: u32,
    pub image_height: u32,
    pub regions: Vec<Region>,
}

impl ProposalSet {
    pub fn new(image_width: u32, image_height: u32, regions: Vec<Region>) -> Result<Self> {
        for (i, r) in regions.iter().enumerate() {
            if r.id as usize != i {
                return Err(Error::Format(format!("region ids must be 0..n in order, found {} at {i}", r.id)));
            }
            r.bbox.validate()?;
        }
        if let Some(first) = regions.first() {
            for r in &regions[1..] {
                if r.feature.descriptor_id != first.feature.descriptor_id
                    || r.feature.len() != first.feature.len()
                {
                    return Err(Error::DescriptorMismatch(format!(
                        "region {} has descriptor {:?}/{} but region 0 has {:?}/{}",
                        r.id,
                        r.feature.descriptor_id,
                        r.feature.len(),
                        first.feature.descriptor_id,
                        first.feature.len()
                    )));
                }
            }
        }
        Ok(Self { image_width, image_height, regions })
    }

    /// Builds a set from parallel box and feature lists.
    pub fn from_parts(
        image_width: u32,
        image_height: u32,
        descriptor_id: &str,
        boxes: Vec<BBox>,
        features: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if boxes.len() != features.len() {
            return Err(Error::Format(format!("{} boxes but {} features", boxes.len(), features.len())));
        }
        let id: Arc<str> = Arc::from(descriptor_id);
        let regions = boxes
            .into_iter()
            .zip(features)
            .enumerate()
            .map(|(i, (bbox, f))| {
                Ok(Region { id: i as u32, bbox, feature: FeatureVec::new(id.clone(), f)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(image_width, image_height, regions)
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn boxes(&self) -> Vec<BBox> {
        self.regions.iter().map(|r| r.bbox).collect()
    }

    /// Keeps the first `n` regions (ids stay contiguous).
    pub fn truncated(&self, n: usize) -> ProposalSet {
        ProposalSet {
            image_width: self.image_width,
            image_height: self.image_height,
            regions: self.regions.iter().take(n).cloned().collect(),
        }
    }
}

/// Row-major `n x m` appearance similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceTable {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl AppearanceTable {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn appearance_table(src: &ProposalSet, dst: &ProposalSet, sim: &SimilarityFn) -> Result<AppearanceTable> {
    if let (Some(a), Some(b)) = (src.regions.first(), dst.regions.first()) {
        a.feature.check_comparable(&b.feature)?;
    }
    let m = dst.len();
    let rows = map_indices(src.len(), |i| {
        let f = &src.regions[i].feature;
        dst.regions
            .iter()
            .map(|q| sim.apply(f, &q.feature))
            .collect::<Result<Vec<f64>>>()
    });
    let mut data = Vec::with_capacity(src.len() * m);
    for r in rows {
        data.extend(r?);
    }
    Ok(AppearanceTable { rows: src.len(), cols: m, data })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub src_id: u32,
    pub dst_id: u32,
    pub score: f64,
}

/// One best match per source region, in source order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub entries: Vec<Match>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, src_id: u32) -> Option<&Match> {
        match self.entries.get(src_id as usize) {
            Some(m) if m.src_id == src_id => Some(m),
            _ => self.entries.iter().find(|m| m.src_id == src_id),
        }
    }

    pub fn assignment(&self) -> Vec<u32> {
        self.entries.iter().map(|m| m.dst_id).collect()
    }

    fn from_scores(rows: usize, cols: usize, score: impl Fn(usize, usize) -> f64 + Sync + Send) -> MatchSet {
        let entries = map_indices(rows, |i| {
            let (j, s) = argmax((0..cols).map(|j| score(i, j)));
            Match { src_id: i as u32, dst_id: j as u32, score: s }
        });
        MatchSet { entries }
    }
}

/// Index and value of the maximum; the first index wins ties.
fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, v) in values.enumerate() {
        if v > best.1 {
            best = (j, v);
        }
    }
    best
}

fn check_nonempty(src: &ProposalSet, dst: &ProposalSet) -> Result<()> {
    if src.is_empty() || dst.is_empty() {
        return Err(Error::EmptyProposalSet);
    }
    Ok(())
}

/// Per-source argmax of a precomputed appearance table.
pub fn nam_from_table(table: &AppearanceTable) -> MatchSet {
    MatchSet::from_scores(table.rows, table.cols, |i, j| table.get(i, j))
}

/// Naive appearance matching.
pub fn match_nam(src: &ProposalSet, dst: &ProposalSet, sim: &SimilarityFn) -> Result<MatchSet> {
    check_nonempty(src, dst)?;
    Ok(nam_from_table(&appearance_table(src, dst, sim)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhmMode {
    Exact,
    Binned,
}

impl std::str::FromStr for PhmMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(PhmMode::Exact),
            "binned" => Ok(PhmMode::Binned),
            other => Err(Error::Config(format!("unknown PHM mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhmConfig {
    pub mode: PhmMode,
    pub bin_xy: f64,
    pub bin_ls: f64,
    pub kernel: KernelParams,
}

impl PhmConfig {
    /// Binned evaluation with cells of half the kernel bandwidth.
    pub fn binned(kernel: KernelParams) -> Self {
        Self { mode: PhmMode::Binned, bin_xy: kernel.sigma_xy / 2.0, bin_ls: kernel.sigma_ls / 2.0, kernel }
    }

    pub fn exact(kernel: KernelParams) -> Self {
        Self { mode: PhmMode::Exact, ..Self::binned(kernel) }
    }
}

/// Geometric scores `geo[i * m + j]` for PHM under `cfg`.
pub fn phm_geometry(
    src: &ProposalSet,
    dst: &ProposalSet,
    table: &AppearanceTable,
    cfg: &PhmConfig,
) -> Result<Vec<f64>> {
    cfg.kernel.validate()?;
    match cfg.mode {
        PhmMode::Exact => Ok(hough_exact(src, dst, table, &cfg.kernel)),
        PhmMode::Binned => hough_binned(src, dst, table, &cfg.kernel, cfg.bin_xy, cfg.bin_ls),
    }
}

/// Probabilistic Hough matching.
pub fn match_phm(src: &ProposalSet, dst: &ProposalSet, sim: &SimilarityFn, cfg: &PhmConfig) -> Result<MatchSet> {
    check_nonempty(src, dst)?;
    let table = appearance_table(src, dst, sim)?;
    let geo = phm_geometry(src, dst, &table, cfg)?;
    let m = table.cols;
    Ok(MatchSet::from_scores(table.rows, m, |i, j| table.get(i, j) * geo[i * m + j]))
}

/// Overlap adjacency: `q` is a neighbor of `r` when their boxes share positive area.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    pub adjacency: Vec<Vec<u32>>,
}

impl NeighborGraph {
    pub fn neighbors(&self, r: usize) -> &[u32] {
        &self.adjacency[r]
    }
}

/// Sweep over boxes sorted by left edge; each list is sorted and contains the region itself.
pub fn neighbor_graph(set: &ProposalSet) -> NeighborGraph {
    let n = set.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.regions[a].bbox.x.total_cmp(&set.regions[b].bbox.x).then(a.cmp(&b)));
    let mut adjacency: Vec<Vec<u32>> = (0..n).map(|i| vec![i as u32]).collect();
    for (k, &a) in order.iter().enumerate() {
        let ba = &set.regions[a].bbox;
        for &b in &order[k + 1..] {
            let bb = &set.regions[b].bbox;
            if bb.x >= ba.right() {
                break;
            }
            if ba.intersection_area(bb) > 0.0 {
                adjacency[a].push(b as u32);
                adjacency[b].push(a as u32);
            }
        }
    }
    adjacency.iter_mut().for_each(|l| l.sort_unstable());
    NeighborGraph { adjacency }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LomConfig {
    pub kernel: KernelParams,
    pub median_tol: f64,
    pub median_max_iter: u32,
}

impl LomConfig {
    pub fn new(kernel: KernelParams) -> Self {
        Self { kernel, median_tol: DEFAULT_TOL, median_max_iter: DEFAULT_MAX_ITER }
    }
}

/// Intermediate quantities of local offset matching.
#[derive(Debug, Clone, PartialEq)]
pub struct LomState {
    /// Initial appearance-only assignment.
    pub initial: MatchSet,
    pub graph: NeighborGraph,
    /// Local offset per source region.
    pub local_offsets: Vec<OffsetVector>,
    /// Summed initial appearance scores over each neighborhood.
    pub support: Vec<f64>,
}

/// Local offsets and neighborhood supports.
///
/// The median is taken after scaling the offset axes by `1/sigma_xy` and
/// `1/sigma_ls`, so pixel and log-scale components are commensurate.
pub fn lom_state(src: &ProposalSet, dst: &ProposalSet, table: &AppearanceTable, cfg: &LomConfig) -> Result<LomState> {
    cfg.kernel.validate()?;
    let initial = nam_from_table(table);
    let graph = neighbor_graph(src);
    let scale = [1.0 / cfg.kernel.sigma_xy, 1.0 / cfg.kernel.sigma_xy, 1.0 / cfg.kernel.sigma_ls];
    let own: Vec<[f64; 3]> = initial
        .entries
        .iter()
        .map(|m| {
            let o = offset(&src.regions[m.src_id as usize].bbox, &dst.regions[m.dst_id as usize].bbox);
            [o.dx * scale[0], o.dy * scale[1], o.dls * scale[2]]
        })
        .collect();
    let per_region = map_indices(src.len(), |r| {
        let nbrs = graph.neighbors(r);
        let pts: Vec<[f64; 3]> = nbrs.iter().map(|&q| own[q as usize]).collect();
        let med = median::geometric_median_arr(&pts, cfg.median_tol, cfg.median_max_iter)?;
        let support: f64 = nbrs.iter().map(|&q| initial.entries[q as usize].score).sum();
        Ok::<_, Error>((OffsetVector::new(med[0] / scale[0], med[1] / scale[1], med[2] / scale[2]), support))
    });
    let mut local_offsets = Vec::with_capacity(src.len());
    let mut support = Vec::with_capacity(src.len());
    for item in per_region {
        let (o, s) = item?;
        local_offsets.push(o);
        support.push(s);
    }
    Ok(LomState { initial, graph, local_offsets, support })
}

/// Local offset matching.
pub fn match_lom(src: &ProposalSet, dst: &ProposalSet, sim: &SimilarityFn, cfg: &LomConfig) -> Result<MatchSet> {
    check_nonempty(src, dst)?;
    let table = appearance_table(src, dst, sim)?;
    let state = lom_state(src, dst, &table, cfg)?;
    Ok(lom_from_state(src, dst, &table, &state, &cfg.kernel))
}

pub fn lom_from_state(
    src: &ProposalSet,
    dst: &ProposalSet,
    table: &AppearanceTable,
    state: &LomState,
    kernel: &KernelParams,
) -> MatchSet {
    MatchSet::from_scores(table.rows, table.cols, |i, j| {
        let x = offset(&src.regions[i].bbox, &dst.regions[j].bbox);
        let geo = offset_kernel(&x, &state.local_offsets[i], kernel) * state.support[i];
        table.get(i, j) * geo
    })
}

/// Selects one of the three strategies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Matcher {
    Nam,
    Phm(PhmConfig),
    Lom(LomConfig),
}

impl Matcher {
    pub fn name(&self) -> &'static str {
        match self {
            Matcher::Nam => "nam",
            Matcher::Phm(_) => "phm",
            Matcher::Lom(_) => "lom",
        }
    }

    pub fn run(&self, src: &ProposalSet, dst: &ProposalSet, sim: &SimilarityFn) -> Result<MatchSet> {
        match self {
            Matcher::Nam => match_nam(src, dst, sim),
            Matcher::Phm(cfg) => match_phm(src, dst, sim, cfg),
            Matcher::Lom(cfg) => match_lom(src, dst, sim, cfg),
        }
    }
}
