//! Boxes, overlap, and the three-dimensional offset space shared by the matchers.
//!
//! A box is summarised by its location vector `(cx, cy, ln sqrt(w h))`. The
//! log-scale component makes a uniform rescale of the image an additive shift,
//! so translation and scale changes between matched boxes both appear as plain
//! differences of location vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel units: left, top, width, height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    /// Checked constructor; rejects non-finite values and non-positive extents.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite box {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "width and height must be positive, got {}x{}",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn translate(&self, tx: f64, ty: f64) -> BBox {
        BBox { x: self.x + tx, y: self.y + ty, ..*self }
    }

    /// Area of the intersection; zero when interiors are disjoint.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Pixel `(px, py)` lies in the box when `x <= px < x + w` and likewise in y.
    pub fn contains_pixel(&self, px: f64, py: f64) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }

    /// Smallest box containing all points; `None` for zero width or height.
    pub fn bounding(points: &[(f64, f64)]) -> Option<BBox> {
        let (first, rest) = points.split_first()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.0, first.1, first.0, first.1);
        for &(x, y) in rest {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let b = BBox { x: x0, y: y0, w: x1 - x0, h: y1 - y0 };
        b.validate().ok().map(|_| b)
    }
}

/// Intersection over union, in [0, 1].
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Position plus log-scale of a box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationVec {
    pub cx: f64,
    pub cy: f64,
    pub ls: f64,
}

/// Difference of two location vectors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OffsetVector {
    pub dx: f64,
    pub dy: f64,
    pub dls: f64,
}

impl OffsetVector {
    pub fn new(dx: f64, dy: f64, dls: f64) -> Self {
        Self { dx, dy, dls }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.dx, self.dy, self.dls]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self { dx: a[0], dy: a[1], dls: a[2] }
    }
}

impl std::ops::Neg for OffsetVector {
    type Output = OffsetVector;
    fn neg(self) -> OffsetVector {
        OffsetVector::new(-self.dx, -self.dy, -self.dls)
    }
}

impl std::ops::Sub for OffsetVector {
    type Output = OffsetVector;
    fn sub(self, o: OffsetVector) -> OffsetVector {
        OffsetVector::new(self.dx - o.dx, self.dy - o.dy, self.dls - o.dls)
    }
}

/// Bandwidths of the Gaussian kernel in offset space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub sigma_xy: f64,
    pub sigma_ls: f64,
}

impl KernelParams {
    pub fn new(sigma_xy: f64, sigma_ls: f64) -> Result<Self> {
        let k = KernelParams { sigma_xy, sigma_ls };
        k.validate()?;
        Ok(k)
    }

    /// `sigma_xy = 0.05 * max(width, height)` of the source image, `sigma_ls = ln(2) / 2`.
    pub fn for_image(width: u32, height: u32) -> Self {
        KernelParams {
            sigma_xy: 0.05 * f64::from(width.max(height)),
            sigma_ls: std::f64::consts::LN_2 / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_xy > 0.0 && self.sigma_xy.is_finite())
            || !(self.sigma_ls > 0.0 && self.sigma_ls.is_finite())
        {
            return Err(Error::Config(format!(
                "kernel bandwidths must be positive, got sigma_xy={} sigma_ls={}",
                self.sigma_xy, self.sigma_ls
            )));
        }
        Ok(())
    }
}

pub fn gamma(s: &BBox) -> LocationVec {
    let (cx, cy) = s.center();
    LocationVec { cx, cy, ls: (s.w * s.h).sqrt().ln() }
}

/// `gamma(s) - gamma(s_prime)`.
pub fn offset(s: &BBox, s_prime: &BBox) -> OffsetVector {
    let a = gamma(s);
    let b = gamma(s_prime);
    OffsetVector::new(a.cx - b.cx, a.cy - b.cy, a.ls - b.ls)
}

/// Unnormalized Gaussian in offset space, peak value 1 at `x == mu`.
pub fn offset_kernel(x: &OffsetVector, mu: &OffsetVector, k: &KernelParams) -> f64 {
    let dx = x.dx - mu.dx;
    let dy = x.dy - mu.dy;
    let dl = x.dls - mu.dls;
    let sxy2 = 2.0 * k.sigma_xy * k.sigma_xy;
    let sls2 = 2.0 * k.sigma_ls * k.sigma_ls;
    (-(dx * dx) / sxy2 - (dy * dy) / sxy2 - (dl * dl) / sls2).exp()
}
