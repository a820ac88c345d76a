//! Hough-space geometric scores for probabilistic Hough matching.
//!
//! Every candidate pair `(a, b)` votes for its offset with weight equal to its
//! appearance similarity. The geometric score of a pair is the vote density
//! at the pair's own offset, measured with the offset kernel.

use crate::error::{Error, Result};
use crate::geometry::{offset, offset_kernel, KernelParams, OffsetVector};
use crate::par::map_indices;

use super::{AppearanceTable, ProposalSet};

/// Dense `n x m` table of pairwise offsets `gamma(s_i) - gamma(s'_j)`.
pub(crate) fn pair_offsets(src: &ProposalSet, dst: &ProposalSet) -> Vec<OffsetVector> {
    let mut out = Vec::with_capacity(src.len() * dst.len());
    for r in &src.regions {
        for q in &dst.regions {
            out.push(offset(&r.bbox, &q.bbox));
        }
    }
    out
}

/// Exact vote density: `geo[i][j] = sum_(a,b) table[a][b] * K(off(i,j), off(a,b))`.
///
/// Costs O(n^2 m^2); intended as the reference path and for small sets.
pub fn hough_exact(
    src: &ProposalSet,
    dst: &ProposalSet,
    table: &AppearanceTable,
    k: &KernelParams,
) -> Vec<f64> {
    let offsets = pair_offsets(src, dst);
    let m = dst.len();
    let rows = map_indices(src.len(), |i| {
        (0..m)
            .map(|j| {
                let x = offsets[i * m + j];
                offsets
                    .iter()
                    .zip(&table.data)
                    .map(|(mu, &w)| if w == 0.0 { 0.0 } else { w * offset_kernel(&x, mu, k) })
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
    });
    rows.concat()
}

/// Largest histogram the binned evaluator will allocate.
const MAX_CELLS: usize = 64 << 20;

/// Binned vote density.
///
/// Votes are splatted trilinearly into a 3-D histogram with cells
/// `(bin_xy, bin_xy, bin_ls)`, smoothed with a separable Gaussian truncated at
/// three standard deviations, and read back at each pair's offset by
/// trilinear interpolation. Splatting and reading each widen the kernel by a
/// variance of `bin^2 / 6` per axis, so the smoothing bandwidth is reduced to
/// keep the total at the kernel's sigma, and the peak is rescaled to match the
/// unnormalized kernel. Accumulation runs in a fixed order.
pub fn hough_binned(
    src: &ProposalSet,
    dst: &ProposalSet,
    table: &AppearanceTable,
    k: &KernelParams,
    bin_xy: f64,
    bin_ls: f64,
) -> Result<Vec<f64>> {
    if !(bin_xy > 0.0 && bin_ls > 0.0) {
        return Err(Error::Config(format!("bin sizes must be positive: {bin_xy}, {bin_ls}")));
    }
    let offsets = pair_offsets(src, dst);
    let bins = [bin_xy, bin_xy, bin_ls];
    let sigmas = [k.sigma_xy, k.sigma_xy, k.sigma_ls];
    let smooth: Vec<f64> = (0..3)
        .map(|a| (sigmas[a] * sigmas[a] - bins[a] * bins[a] / 3.0).max(0.0625 * sigmas[a] * sigmas[a]).sqrt())
        .collect();
    let radius: Vec<usize> = (0..3).map(|a| (3.0 * smooth[a] / bins[a]).ceil() as usize).collect();

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for o in &offsets {
        for (a, v) in o.to_array().into_iter().enumerate() {
            lo[a] = lo[a].min(v);
            hi[a] = hi[a].max(v);
        }
    }
    // one spare cell for the trilinear neighbor plus the smoothing support
    let mut origin = [0.0; 3];
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let pad = radius[a] + 1;
        origin[a] = lo[a] - pad as f64 * bins[a];
        dims[a] = ((hi[a] - lo[a]) / bins[a]).floor() as usize + 2 * pad + 2;
    }
    let cells = dims[0].checked_mul(dims[1]).and_then(|v| v.checked_mul(dims[2]));
    match cells {
        Some(c) if c <= MAX_CELLS => {}
        _ => {
            return Err(Error::Config(format!(
                "Hough histogram {dims:?} too large; increase bin sizes"
            )))
        }
    }
    let idx = |i: usize, j: usize, l: usize| (l * dims[1] + j) * dims[0] + i;
    let locate = |o: &OffsetVector| -> ([usize; 3], [f64; 3]) {
        let v = o.to_array();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let t = (v[a] - origin[a]) / bins[a];
            let f = t.floor();
            base[a] = f as usize;
            frac[a] = t - f;
        }
        (base, frac)
    };

    let mut hist = vec![0.0; dims[0] * dims[1] * dims[2]];
    for (o, &w) in offsets.iter().zip(&table.data) {
        if w == 0.0 {
            continue;
        }
        let (b, f) = locate(o);
        for corner in 0..8 {
            let (cx, cy, cl) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            let wt = (if cx == 1 { f[0] } else { 1.0 - f[0] })
                * (if cy == 1 { f[1] } else { 1.0 - f[1] })
                * (if cl == 1 { f[2] } else { 1.0 - f[2] });
            hist[idx(b[0] + cx, b[1] + cy, b[2] + cl)] += w * wt;
        }
    }

    for a in 0..3 {
        let taps: Vec<f64> = (0..=radius[a])
            .map(|t| {
                let d = t as f64 * bins[a];
                (sigmas[a] / smooth[a]) * (-(d * d) / (2.0 * smooth[a] * smooth[a])).exp()
            })
            .collect();
        hist = convolve_axis(&hist, dims, a, &taps);
    }

    Ok(offsets
        .iter()
        .map(|o| {
            let (b, f) = locate(o);
            let mut v = 0.0;
            for corner in 0..8 {
                let (cx, cy, cl) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
                let wt = (if cx == 1 { f[0] } else { 1.0 - f[0] })
                    * (if cy == 1 { f[1] } else { 1.0 - f[1] })
                    * (if cl == 1 { f[2] } else { 1.0 - f[2] });
                v += wt * hist[idx(b[0] + cx, b[1] + cy, b[2] + cl)];
            }
            v.max(0.0)
        })
        .collect())
}

/// Symmetric 1-D convolution along `axis` with zero padding. `taps[0]` is the center.
fn convolve_axis(src: &[f64], dims: [usize; 3], axis: usize, taps: &[f64]) -> Vec<f64> {
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let len = dims[axis];
    let mut out = vec![0.0; src.len()];
    for (p, slot) in out.iter_mut().enumerate() {
        let pos = (p / stride) % len;
        let mut acc = taps[0] * src[p];
        for (t, &w) in taps.iter().enumerate().skip(1) {
            if pos >= t {
                acc += w * src[p - t * stride];
            }
            if pos + t < len {
                acc += w * src[p + t * stride];
            }
        }
        *slot = acc;
    }
    out
}
