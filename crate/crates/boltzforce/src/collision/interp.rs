//! Lagrange stencils for off-grid velocity values.
//!
//! A value at an off-grid point p is rebuilt from the nearest `order + 1`
//! nodes per axis (centred on the nearest node, shifted inward at the box
//! edge). Points outside the box get no stencil, i.e. zero extension.

use crate::grids::VelocityGrid;

pub const MAX_POINTS: usize = 5;

/// Per-axis stencil: `order + 1` consecutive nodes starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisStencil {
    pub start: usize,
    pub w: [f64; MAX_POINTS],
}

/// Lagrange weights at fractional node coordinate `s` (node i sits at s = i).
pub fn axis_stencil(s: f64, n: usize, order: usize) -> AxisStencil {
    let m = order + 1;
    let half = order / 2;
    // Ties at half-integers are broken toward the grid centre so that
    // round-off never picks different stencils for the same point, and the
    // choice stays mirror-symmetric.
    let fl = s.floor();
    let near = if (s - fl - 0.5).abs() < 1e-7 {
        if fl + 0.5 < 0.5 * (n as f64 - 1.0) {
            fl as i64 + 1
        } else {
            fl as i64
        }
    } else {
        s.round() as i64
    };
    let start = (near - half as i64).clamp(0, n as i64 - m as i64) as usize;
    let mut w = [0.0; MAX_POINTS];
    for (i, wi) in w.iter_mut().enumerate().take(m) {
        let xi = (start + i) as f64;
        let mut p = 1.0;
        for j in 0..m {
            if j != i {
                let xj = (start + j) as f64;
                p *= (s - xj) / (xi - xj);
            }
        }
        *wi = p;
    }
    AxisStencil { start, w }
}

/// Fractional node coordinates of `p` (node i at i), or `None` outside
/// the box. Points on the box faces up to round-off count as inside.
pub fn fractional(grid: &VelocityGrid, p: &[f64; 3]) -> Option<[f64; 3]> {
    let mut s = [0.0; 3];
    for a in 0..grid.dim {
        if p[a].abs() > grid.radius + 1e-9 * grid.spacing {
            return None;
        }
        s[a] = (p[a] + grid.radius) / grid.spacing - 0.5;
    }
    Some(s)
}

/// Tensor-product stencil of a point in the velocity box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointStencil {
    pub axes: [AxisStencil; 3],
    pub points: usize,
    pub dim: usize,
}

/// Interpolation order actually usable on a grid with `n` nodes per axis.
pub fn effective_order(order: usize, n: usize) -> usize {
    let mut o = order.min(n.saturating_sub(1));
    if o % 2 == 1 {
        o -= 1;
    }
    o.max(1)
}

impl PointStencil {
    /// Stencil of `p`, or `None` when p leaves the box.
    pub fn new(grid: &VelocityGrid, p: &[f64; 3], order: usize) -> Option<PointStencil> {
        let order = effective_order(order, grid.n);
        let empty = AxisStencil {
            start: 0,
            w: [0.0; MAX_POINTS],
        };
        let mut axes = [empty; 3];
        let s = fractional(grid, p)?;
        for a in 0..grid.dim {
            axes[a] = axis_stencil(s[a], grid.n, order);
        }
        Some(PointStencil {
            axes,
            points: order + 1,
            dim: grid.dim,
        })
    }

    /// Calls `visit(node, weight)` for every node of the stencil.
    #[inline]
    pub fn for_each(&self, n: usize, mut visit: impl FnMut(usize, f64)) {
        let m = self.points;
        let [ax, ay, az] = &self.axes;
        match self.dim {
            1 => {
                for i in 0..m {
                    visit(ax.start + i, ax.w[i]);
                }
            }
            2 => {
                for i in 0..m {
                    let row = (ax.start + i) * n + ay.start;
                    for j in 0..m {
                        visit(row + j, ax.w[i] * ay.w[j]);
                    }
                }
            }
            _ => {
                for i in 0..m {
                    for j in 0..m {
                        let row = ((ax.start + i) * n + ay.start + j) * n + az.start;
                        let wij = ax.w[i] * ay.w[j];
                        for l in 0..m {
                            visit(row + l, wij * az.w[l]);
                        }
                    }
                }
            }
        }
    }

    /// Interpolated value of nodal data `f`.
    #[inline]
    pub fn eval(&self, f: &[f64], n: usize) -> f64 {
        let mut s = 0.0;
        self.for_each(n, |k, w| s += w * f[k]);
        s
    }
}
