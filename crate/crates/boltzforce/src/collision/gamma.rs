//! Γ[f, g] = Q(√M f, √M g)/√M on many spatial lanes at once.
//!
//! With the √M envelope the gain term of Γ at node k is
//! Σ_j Φ w b √M_j Σ_σ w_σ g(c + rσ) f(c − rσ) (symmetric in f, g for an
//! antipodal sphere rule), where c and r are the
//! midpoint and half-distance of (v_k, v_j) and the off-grid values are
//! plain Lagrange interpolants. Pairs sharing (c, r) share those
//! interpolants, so they are grouped once and the interpolation is done
//! for a whole block of lanes per group. The grouping does not depend on
//! M; only the per-pair coefficients do.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::interp::{axis_stencil, effective_order, fractional, AxisStencil, MAX_POINTS};
use super::{Angular, CollisionKernel};
use crate::equilibria::Maxwellian;
use crate::error::{Error, Result};
use crate::grids::VelocityGrid;

const LANE_BLOCK: usize = 64;

#[derive(Debug, Clone)]
pub struct GammaTable {
    dim: usize,
    n: usize,
    nv: usize,
    order: usize,
    sigma_w: Vec<f64>,
    antipode: Vec<usize>,
    /// Fractional node coordinates of c + rσ per (group, σ); NaN if outside.
    points: Vec<[f64; 3]>,
    offsets: Vec<u32>,
    member_k: Vec<u32>,
    member_j: Vec<u32>,
    /// Φ(|v_k − v_j|) w b per member.
    member_phi: Vec<f64>,
    sigma_total: f64,
}

/// M-dependent coefficients of a table.
#[derive(Debug, Clone)]
pub struct GammaCoefficients {
    pub maxwellian: Maxwellian,
    member: Vec<f64>,
    /// Λᵀ with Λ_kj = Φ w b̄ √M_j, for the loss term.
    loss_t: DMatrix<f64>,
}

impl GammaTable {
    pub fn new(kernel: &CollisionKernel, grid: &VelocityGrid) -> Result<Self> {
        let b0 = match kernel.angular {
            Angular::Constant { b0 } => b0,
            _ => return Err(Error::invalid("the grouped Gamma table needs a constant angular kernel")),
        };
        let antipode = kernel
            .sphere
            .antipodes()
            .ok_or_else(|| Error::invalid("sphere rule is not antipodal"))?;
        let nv = grid.len();
        let n = grid.n;
        let mut groups: HashMap<u64, u32> = HashMap::new();
        let mut tagged: Vec<(u32, u32, u32)> = Vec::with_capacity(nv * nv);
        let idx: Vec<[usize; 3]> = (0..nv).map(|k| grid.multi_index(k)).collect();
        let mut reps: Vec<(u32, u32)> = Vec::new();
        for k in 0..nv {
            for j in 0..nv {
                if j == k {
                    continue;
                }
                let (a, b) = (idx[k], idx[j]);
                let mut key = 0u64;
                let mut d2 = 0u64;
                for ax in 0..3 {
                    key |= ((a[ax] + b[ax]) as u64) << (12 * ax);
                    let dd = a[ax] as i64 - b[ax] as i64;
                    d2 += (dd * dd) as u64;
                }
                key |= d2 << 36;
                let next = groups.len() as u32;
                let g = *groups.entry(key).or_insert_with(|| {
                    reps.push((k as u32, j as u32));
                    next
                });
                tagged.push((g, k as u32, j as u32));
            }
        }
        tagged.sort_by_key(|t| t.0);
        let n_groups = reps.len();
        let mut offsets = vec![0u32; n_groups + 1];
        for t in &tagged {
            offsets[t.0 as usize + 1] += 1;
        }
        for g in 0..n_groups {
            offsets[g + 1] += offsets[g];
        }
        let pts = grid.points();
        let member_phi = tagged
            .iter()
            .map(|&(_, k, j)| kernel.phi(super::dist(&pts[k as usize], &pts[j as usize])) * grid.weight() * b0)
            .collect();
        let nsig = kernel.sphere.len();
        let mut points = Vec::with_capacity(n_groups * nsig);
        for &(k, j) in &reps {
            let (v, vs) = (pts[k as usize], pts[j as usize]);
            let r = 0.5 * super::dist(&v, &vs);
            for sig in &kernel.sphere.directions {
                let mut p = [0.0; 3];
                for ax in 0..grid.dim {
                    p[ax] = 0.5 * (v[ax] + vs[ax]) + r * sig[ax];
                }
                let s = fractional(grid, &p).unwrap_or([f64::NAN; 3]);
                points.push(s);
            }
        }
        Ok(GammaTable {
            dim: grid.dim,
            n,
            nv,
            order: effective_order(kernel.order, n),
            sigma_w: kernel.sphere.weights.clone(),
            antipode,
            points,
            offsets,
            member_k: tagged.iter().map(|t| t.1).collect(),
            member_j: tagged.iter().map(|t| t.2).collect(),
            member_phi,
            sigma_total: kernel.sphere.total_weight(),
        })
    }

    pub fn groups(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn velocity_len(&self) -> usize {
        self.nv
    }

    /// Coefficients for a given Maxwellian on the same grid.
    pub fn coefficients(&self, m: &Maxwellian, grid: &VelocityGrid) -> GammaCoefficients {
        let sm: Vec<f64> = (0..self.nv).map(|k| (0.5 * m.ln(grid.norm2(k), grid.dim)).exp()).collect();
        let member: Vec<f64> = self
            .member_phi
            .iter()
            .zip(&self.member_j)
            .map(|(p, &j)| p * sm[j as usize])
            .collect();
        let mut loss_t = DMatrix::zeros(self.nv, self.nv);
        for (i, c) in member.iter().enumerate() {
            let (k, j) = (self.member_k[i] as usize, self.member_j[i] as usize);
            loss_t[(j, k)] = c * self.sigma_total;
        }
        GammaCoefficients {
            maxwellian: *m,
            member,
            loss_t,
        }
    }

    /// Γ[f, g] on `lanes` lanes; all arrays are [velocity][lane].
    /// `g = None` means g = f.
    pub fn apply(&self, c: &GammaCoefficients, f: &[f64], g: Option<&[f64]>, lanes: usize, out: &mut [f64]) {
        let nv = self.nv;
        assert_eq!(f.len(), nv * lanes);
        assert_eq!(out.len(), nv * lanes);
        let gg = g.unwrap_or(f);
        let starts: Vec<usize> = (0..lanes).step_by(LANE_BLOCK).collect();
        let blocks: Vec<Vec<f64>> = starts
            .par_iter()
            .map(|&l0| {
                let b = LANE_BLOCK.min(lanes - l0);
                self.gain_block(c, f, gg, g.is_none(), lanes, l0, b)
            })
            .collect();
        for (&l0, blk) in starts.iter().zip(&blocks) {
            let b = LANE_BLOCK.min(lanes - l0);
            for k in 0..nv {
                out[k * lanes + l0..k * lanes + l0 + b].copy_from_slice(&blk[k * b..(k + 1) * b]);
            }
        }
        // Loss: ½[g_k (Λ f)_k + f_k (Λ g)_k]. Row-major [v][lane] is
        // column-major lanes × nv.
        let lf = DMatrix::from_column_slice(lanes, nv, f) * &c.loss_t;
        if g.is_none() {
            for (o, (fv, l)) in out.iter_mut().zip(f.iter().zip(lf.as_slice())) {
                *o -= fv * l;
            }
        } else {
            let lg = DMatrix::from_column_slice(lanes, nv, gg) * &c.loss_t;
            for (i, o) in out.iter_mut().enumerate() {
                *o -= 0.5 * (gg[i] * lf.as_slice()[i] + f[i] * lg.as_slice()[i]);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn gain_block(
        &self,
        c: &GammaCoefficients,
        f: &[f64],
        g: &[f64],
        same: bool,
        lanes: usize,
        l0: usize,
        b: usize,
    ) -> Vec<f64> {
        let nsig = self.sigma_w.len();
        let mut out = vec![0.0; self.nv * b];
        let mut fh = vec![0.0; nsig * b];
        let mut gh = vec![0.0; nsig * b];
        let mut h = vec![0.0; b];
        let mut inside = vec![false; nsig];
        for grp in 0..self.groups() {
            for s in 0..nsig {
                let p = &self.points[grp * nsig + s];
                inside[s] = !p[0].is_nan();
                if !inside[s] {
                    continue;
                }
                let fs = &mut fh[s * b..(s + 1) * b];
                fs.iter_mut().for_each(|x| *x = 0.0);
                if same {
                    self.interp(p, f, lanes, l0, fs);
                } else {
                    self.interp(p, f, lanes, l0, fs);
                    let gs = &mut gh[s * b..(s + 1) * b];
                    gs.iter_mut().for_each(|x| *x = 0.0);
                    self.interp(p, g, lanes, l0, gs);
                }
            }
            // With an antipodal rule Σ_σ g(c+rσ) f(c−rσ) already equals the
            // symmetrized ½Σ_σ [g(c+rσ) f(c−rσ) + f(c+rσ) g(c−rσ)].
            let gsrc = if same { &fh } else { &gh };
            h.iter_mut().for_each(|x| *x = 0.0);
            for s in 0..nsig {
                let a = self.antipode[s];
                if !inside[s] || !inside[a] {
                    continue;
                }
                let w = self.sigma_w[s];
                let gs = &gsrc[s * b..(s + 1) * b];
                let fa = &fh[a * b..(a + 1) * b];
                for ((hv, x), y) in h.iter_mut().zip(gs).zip(fa) {
                    *hv += w * x * y;
                }
            }
            let (m0, m1) = (self.offsets[grp] as usize, self.offsets[grp + 1] as usize);
            for m in m0..m1 {
                let k = self.member_k[m] as usize;
                let coef = c.member[m];
                for (o, hv) in out[k * b..(k + 1) * b].iter_mut().zip(&h) {
                    *o += coef * hv;
                }
            }
        }
        out
    }

    #[inline]
    fn interp(&self, p: &[f64; 3], f: &[f64], lanes: usize, l0: usize, acc: &mut [f64]) {
        let m = self.order + 1;
        let mut ax = [AxisStencil {
            start: 0,
            w: [0.0; MAX_POINTS],
        }; 3];
        for a in 0..self.dim {
            ax[a] = axis_stencil(p[a], self.n, self.order);
        }
        let n = self.n;
        let b = acc.len();
        let mut add = |node: usize, w: f64| {
            let src = &f[node * lanes + l0..node * lanes + l0 + b];
            for (x, y) in acc.iter_mut().zip(src) {
                *x += w * y;
            }
        };
        match self.dim {
            1 => (0..m).for_each(|i| add(ax[0].start + i, ax[0].w[i])),
            2 => {
                for i in 0..m {
                    let row = (ax[0].start + i) * n + ax[1].start;
                    for j in 0..m {
                        add(row + j, ax[0].w[i] * ax[1].w[j]);
                    }
                }
            }
            _ => {
                for i in 0..m {
                    for j in 0..m {
                        let row = ((ax[0].start + i) * n + ax[1].start + j) * n + ax[2].start;
                        let wij = ax[0].w[i] * ax[1].w[j];
                        for l in 0..m {
                            add(row + l, wij * ax[2].w[l]);
                        }
                    }
                }
            }
        }
    }
}

