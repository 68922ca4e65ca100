//! Quadrature nets over the half-plane and the cone `Γ = {|x| < y}`.
//!
//! The net is built from the squares `σ(i,j) = ((i-1) 2^j, i 2^j] x [2^j, 2^{j+1})`,
//! each split into `s x s` sub-squares with midpoint evaluation. Levels below
//! a boundary height are split twice as finely.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gridfn::GridSpec;

/// One horizontal strip of the net: heights `[y_lo, y_hi)` evaluated at `y`,
/// with sub-square width `hx` on the lattice `k * hx`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Row {
    pub level: i32,
    pub y_lo: f64,
    pub y_hi: f64,
    pub y: f64,
    pub dy: f64,
    pub hx: f64,
}

/// A quadrature cell of the cone net: evaluation point and area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NetCell {
    pub x: f64,
    pub y: f64,
    pub area: f64,
}

/// Truncated net over `Γ` (and, row-wise, over the half-plane).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeGrid {
    y_min: f64,
    y_max: f64,
    refinement: u32,
    fine_below: Option<f64>,
}

impl ConeGrid {
    pub fn new(y_min: f64, y_max: f64, refinement: u32) -> Result<Self> {
        if !(y_min > 0.0) {
            return Err(Error::NonPositiveHeight(y_min));
        }
        if !(y_max > y_min) || !y_max.is_finite() {
            return Err(Error::Truncation(format!("need 0 < y_min < y_max, got {y_min}, {y_max}")));
        }
        if refinement > 6 {
            return Err(Error::Truncation(format!("refinement {refinement} too large")));
        }
        Ok(Self { y_min, y_max, refinement, fine_below: None })
    }

    /// Default net for a grid: heights `[2^{-K-4}, 2^{J+3})`, extra split below `2^{-K}`.
    pub fn for_grid(grid: GridSpec, refinement: u32) -> Result<Self> {
        let y_min = 2f64.powi(-grid.k() - 4);
        let y_max = 2f64.powi(grid.j() + 3);
        Ok(Self::new(y_min, y_max, refinement)?.with_fine_below(2f64.powi(-grid.k())))
    }

    pub fn with_fine_below(mut self, y: f64) -> Self {
        self.fine_below = Some(y);
        self
    }

    pub fn with_y_min(mut self, y_min: f64) -> Result<Self> {
        if !(y_min > 0.0) || y_min >= self.y_max {
            return Err(Error::Truncation(format!("bad y_min {y_min}")));
        }
        self.y_min = y_min;
        Ok(self)
    }

    /// One refinement step: every square split once more per axis and one
    /// more level added at the bottom (`y_min` halved).
    pub fn refined(&self) -> Self {
        Self { refinement: self.refinement + 1, y_min: 0.5 * self.y_min, ..self.clone() }
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn refinement(&self) -> u32 {
        self.refinement
    }

    pub fn fine_below(&self) -> Option<f64> {
        self.fine_below
    }

    /// Short description for reports.
    pub fn describe(&self) -> String {
        format!(
            "net y=[{:e},{:e}) refine={} fine_below={}",
            self.y_min,
            self.y_max,
            self.refinement,
            self.fine_below.map(|v| format!("{v:e}")).unwrap_or_else(|| "none".into())
        )
    }

    /// Sub-squares per axis at level `j`.
    pub fn splits(&self, level: i32) -> u32 {
        let base = 1u32 << self.refinement;
        match self.fine_below {
            Some(yb) if 2f64.powi(level + 1) <= yb => base * 2,
            _ => base,
        }
    }

    pub fn levels(&self) -> (i32, i32) {
        let lo = self.y_min.log2().floor() as i32;
        let hi = self.y_max.log2().ceil() as i32 - 1;
        (lo, hi)
    }

    /// Strips covering `[y_min, y_max)`, bottom to top.
    pub fn rows(&self) -> Vec<Row> {
        let (lo, hi) = self.levels();
        let mut out = Vec::new();
        for j in lo..=hi {
            let base = 2f64.powi(j);
            let s = self.splits(j);
            let hs = base / s as f64;
            for r in 0..s {
                let a = (base + r as f64 * hs).max(self.y_min);
                let b = (base + (r + 1) as f64 * hs).min(self.y_max);
                if b > a {
                    out.push(Row { level: j, y_lo: a, y_hi: b, y: 0.5 * (a + b), dy: b - a, hx: hs });
                }
            }
        }
        out
    }

    /// Net cells of the cone `|x| < y`, clipped exactly; points are centroids.
    pub fn cone_cells(&self) -> Vec<NetCell> {
        let mut out = Vec::new();
        for row in self.rows() {
            let kmax = (row.y_hi / row.hx).ceil() as i64;
            for k in -kmax..kmax {
                let x0 = k as f64 * row.hx;
                let x1 = x0 + row.hx;
                if let Some(cell) = clip_to_cone(x0, x1, row.y_lo, row.y_hi) {
                    out.push(cell);
                }
            }
        }
        out
    }

    /// Net cells of `Γ` shifted up by `y0` (the cone `Γ(0, y0)`), truncated
    /// at `y_max`.
    pub fn shifted_cone_cells(&self, y0: f64) -> Result<Vec<NetCell>> {
        if y0 < 0.0 {
            return Err(Error::NonPositiveHeight(y0));
        }
        if y0 >= self.y_max {
            return Err(Error::Truncation(format!("y0 = {y0} is above the net top {}", self.y_max)));
        }
        Ok(self
            .cone_cells()
            .into_iter()
            .filter_map(|c| {
                let y = c.y + y0;
                (y < self.y_max).then_some(NetCell { x: c.x, y, area: c.area })
            })
            .collect())
    }

    /// Net cells of the Carleson box `I x (0, |I|]` for `I = (a, b]`, in
    /// absolute coordinates, clipped to `y_min`.
    pub fn box_cells(&self, a: f64, b: f64) -> Vec<NetCell> {
        let top = b - a;
        let mut out = Vec::new();
        for row in self.rows() {
            if row.y_lo >= top {
                break;
            }
            let y_hi = row.y_hi.min(top);
            let dy = y_hi - row.y_lo;
            let k0 = (a / row.hx).floor() as i64;
            let k1 = (b / row.hx).ceil() as i64;
            for k in k0..k1 {
                let x0 = (k as f64 * row.hx).max(a);
                let x1 = ((k + 1) as f64 * row.hx).min(b);
                if x1 > x0 {
                    out.push(NetCell { x: 0.5 * (x0 + x1), y: 0.5 * (row.y_lo + y_hi), area: (x1 - x0) * dy });
                }
            }
        }
        out
    }
}

/// Area and centroid of `[x0, x1] x [y0, y1]` intersected with `|x| < y`.
pub(crate) fn clip_to_cone(x0: f64, x1: f64, y0: f64, y1: f64) -> Option<NetCell> {
    let mut poly = vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
    // keep y - x >= 0, then y + x >= 0
    for sign in [-1.0, 1.0] {
        poly = clip_half_plane(&poly, |(x, y)| y + sign * x);
        if poly.len() < 3 {
            return None;
        }
    }
    let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..poly.len() {
        let (xa, ya) = poly[i];
        let (xb, yb) = poly[(i + 1) % poly.len()];
        let cross = xa * yb - xb * ya;
        a2 += cross;
        cx += (xa + xb) * cross;
        cy += (ya + yb) * cross;
    }
    let area = 0.5 * a2;
    if area <= 1e-300 {
        return None;
    }
    Some(NetCell { x: cx / (6.0 * area), y: cy / (6.0 * area), area })
}

fn clip_half_plane(poly: &[(f64, f64)], g: impl Fn((f64, f64)) -> f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (gp, gq) = (g(p), g(q));
        if gp >= 0.0 {
            out.push(p);
        }
        if (gp >= 0.0) != (gq >= 0.0) {
            let s = gp / (gp - gq);
            out.push((p.0 + s * (q.0 - p.0), p.1 + s * (q.1 - p.1)));
        }
    }
    out
}
