//! Geometric median by Weiszfeld iteration.

use crate::error::{Error, Result};
use crate::geometry::OffsetVector;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: u32 = 200;
/// Distance under which an iterate is treated as sitting on a data point.
const COINCIDENT: f64 = 1e-9;

/// Sum of Euclidean distances from `x` to every point.
pub fn median_objective(x: &[f64; 3], points: &[[f64; 3]]) -> f64 {
    points.iter().map(|p| dist(x, p)).sum()
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Minimizer of `sum ||x - y||` over the input points.
///
/// Starts from the coordinatewise mean. When an iterate lands on a data point
/// the Vardi-Zhang modified step is used: the point is optimal if the pull of
/// the remaining points does not exceed its multiplicity, otherwise the
/// iterate moves off it.
pub fn geometric_median(points: &[OffsetVector], tol: f64, max_iter: u32) -> Result<OffsetVector> {
    let pts: Vec<[f64; 3]> = points.iter().map(|p| p.to_array()).collect();
    geometric_median_arr(&pts, tol, max_iter).map(OffsetVector::from_array)
}

pub(crate) fn geometric_median_arr(pts: &[[f64; 3]], tol: f64, max_iter: u32) -> Result<[f64; 3]> {
    if pts.is_empty() {
        return Err(Error::EmptyInput);
    }
    if pts.len() == 1 {
        return Ok(pts[0]);
    }
    let n = pts.len() as f64;
    let mut y = [0.0; 3];
    for p in pts {
        for k in 0..3 {
            y[k] += p[k];
        }
    }
    y.iter_mut().for_each(|v| *v /= n);

    for _ in 0..max_iter {
        let mut num = [0.0; 3];
        let mut denom = 0.0;
        let mut pull = [0.0; 3];
        let mut coincident = 0.0;
        for p in pts {
            let d = dist(&y, p);
            if d < COINCIDENT {
                coincident += 1.0;
                continue;
            }
            let inv = 1.0 / d;
            for k in 0..3 {
                num[k] += p[k] * inv;
                pull[k] += (p[k] - y[k]) * inv;
            }
            denom += inv;
        }
        if denom == 0.0 {
            // every point coincides with y
            return Ok(y);
        }
        let t = [num[0] / denom, num[1] / denom, num[2] / denom];
        let next = if coincident == 0.0 {
            t
        } else {
            let r = (pull[0] * pull[0] + pull[1] * pull[1] + pull[2] * pull[2]).sqrt();
            if r <= coincident {
                return Ok(y);
            }
            let a = coincident / r;
            [
                (1.0 - a) * t[0] + a * y[0],
                (1.0 - a) * t[1] + a * y[1],
                (1.0 - a) * t[2] + a * y[2],
            ]
        };
        let step = dist(&next, &y);
        y = next;
        if step < tol {
            break;
        }
    }
    Ok(y)
}
