//! Boltzmann collision operator on the velocity grid.
//!
//! Q is evaluated in strong form at every node. Off-grid values at the
//! post-collision velocities come from Lagrange interpolation of g/G
//! multiplied back by G(v′), with G a Gaussian envelope. With G = √M the
//! linearized and bilinear perturbative operators reduce to plain nodal
//! interpolation of f weighted by √M, which keeps L close to symmetric.

pub mod gamma;
pub mod interp;
pub mod linear;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{sphere_area, SphereQuadrature, VelocityGrid};
use interp::PointStencil;

pub use gamma::GammaTable;
pub use linear::{
    assemble_l_matrix, kernel_projection, linearized_l, KernelBasis, LinearizedOperator, Spectrum,
};

/// Default interpolation order (five nodes per axis).
pub const DEFAULT_ORDER: usize = 4;

/// Angular part b(cos θ) of the cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Angular {
    Constant { b0: f64 },
    /// b(z) = b0 + b1·z.
    Affine { b0: f64, b1: f64 },
}

impl Angular {
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Angular::Constant { b0 } => b0,
            Angular::Affine { b0, b1 } => b0 + b1 * z,
        }
    }

    pub fn derivative(&self, _z: f64) -> f64 {
        match *self {
            Angular::Constant { .. } => 0.0,
            Angular::Affine { b1, .. } => b1,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Angular::Constant { .. })
    }
}

/// Φ(|v−v*|) b(cos θ) with Φ(z) = C_Φ z^γ, plus the sphere rule and the
/// interpolation order used for off-grid values.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionKernel {
    pub gamma: f64,
    pub c_phi: f64,
    pub angular: Angular,
    pub sphere: SphereQuadrature,
    pub order: usize,
}

impl CollisionKernel {
    pub fn new(
        gamma: f64,
        c_phi: f64,
        angular: Angular,
        sphere: SphereQuadrature,
        order: usize,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        if !(c_phi > 0.0) {
            return Err(Error::invalid("C_Phi must be positive"));
        }
        if order != 2 && order != 4 {
            return Err(Error::invalid(format!("interpolation order must be 2 or 4, got {order}")));
        }
        if sphere.antipodes().is_none() {
            return Err(Error::invalid("sphere rule must be closed under sigma -> -sigma"));
        }
        let k = CollisionKernel {
            gamma,
            c_phi,
            angular,
            sphere,
            order,
        };
        let (lo, _) = k.angular_range();
        if lo < 0.0 {
            return Err(Error::invalid("angular function must be non-negative on [-1, 1]"));
        }
        Ok(k)
    }

    /// γ = 1, C_Φ = 1, b ≡ 1/|S^{d−1}|.
    pub fn hard_spheres(sphere: SphereQuadrature) -> Result<Self> {
        let b0 = 1.0 / sphere_area(sphere.dim);
        Self::new(1.0, 1.0, Angular::Constant { b0 }, sphere, DEFAULT_ORDER)
    }

    pub fn phi(&self, z: f64) -> f64 {
        if self.gamma == 0.0 {
            self.c_phi
        } else {
            self.c_phi * z.powf(self.gamma)
        }
    }

    /// (min b, max b) over a dense sample of [−1, 1].
    pub fn angular_range(&self) -> (f64, f64) {
        (0..=400)
            .map(|i| self.angular.eval(-1.0 + i as f64 / 200.0))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| (lo.min(b), hi.max(b)))
    }

    /// Sampled C_b = max(sup |b|, sup |b′|).
    pub fn angular_bound(&self) -> f64 {
        (0..=400)
            .map(|i| {
                let z = -1.0 + i as f64 / 200.0;
                self.angular.eval(z).abs().max(self.angular.derivative(z).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Σ_σ w_σ b(cos θ); independent of θ for constant b.
    pub fn angular_total(&self) -> f64 {
        match self.angular {
            Angular::Constant { b0 } => b0 * self.sphere.total_weight(),
            // The rule is antipodal, so the linear part integrates to 0.
            Angular::Affine { b0, .. } => b0 * self.sphere.total_weight(),
        }
    }

    fn check_grid(&self, grid: &VelocityGrid) -> Result<()> {
        if grid.dim != self.sphere.dim {
            return Err(Error::invalid(format!(
                "kernel is for d = {}, grid has d = {}",
                self.sphere.dim, grid.dim
            )));
        }
        Ok(())
    }
}

/// (v′, v′*) for a pair and a direction σ.
pub fn post_collision_velocities(v: &[f64; 3], vs: &[f64; 3], sigma: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let r = 0.5 * dist(v, vs);
    let mut vp = [0.0; 3];
    let mut vps = [0.0; 3];
    for a in 0..3 {
        let c = 0.5 * (v[a] + vs[a]);
        vp[a] = c + r * sigma[a];
        vps[a] = c - r * sigma[a];
    }
    (vp, vps)
}

pub(crate) fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    (d0 * d0 + d1 * d1 + d2 * d2).sqrt()
}

pub(crate) fn norm2(a: &[f64; 3]) -> f64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

/// cos θ between v − v* and σ.
pub(crate) fn cos_theta(v: &[f64; 3], vs: &[f64; 3], sigma: &[f64; 3]) -> f64 {
    let r = dist(v, vs);
    ((v[0] - vs[0]) * sigma[0] + (v[1] - vs[1]) * sigma[1] + (v[2] - vs[2]) * sigma[2]) / r
}

/// Gaussian envelope exp(−β|v|²/2) used to rebuild off-grid values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub beta: f64,
}

impl Envelope {
    /// √μ, the default for the plain bilinear operator.
    pub const SQRT_GLOBAL: Envelope = Envelope { beta: 0.5 };

    pub fn value(&self, v2: f64) -> f64 {
        (-0.5 * self.beta * v2).exp()
    }
}

/// Nodal data divided by the envelope, ready for interpolation.
fn reduce(g: &[f64], env: Envelope, grid: &VelocityGrid) -> Vec<f64> {
    g.iter()
        .enumerate()
        .map(|(k, v)| v / env.value(grid.norm2(k)))
        .collect()
}

/// Symmetric-form Q(g, h) at every node with the √μ envelope:
/// ½ Σ B [h′g′* + h′*g′ − h g* − h* g].
pub fn bilinear_q(g: &[f64], h: &[f64], kernel: &CollisionKernel, grid: &VelocityGrid) -> Result<Vec<f64>> {
    bilinear_q_with(g, h, kernel, grid, Envelope::SQRT_GLOBAL)
}

/// Q(g, h) at every node with an explicit envelope.
pub fn bilinear_q_with(
    g: &[f64],
    h: &[f64],
    kernel: &CollisionKernel,
    grid: &VelocityGrid,
    env: Envelope,
) -> Result<Vec<f64>> {
    kernel.check_grid(grid)?;
    let n = grid.len();
    if g.len() != n || h.len() != n {
        return Err(Error::invalid("bilinear_q: field length does not match the grid"));
    }
    let gr = reduce(g, env, grid);
    let hr = reduce(h, env, grid);
    let w = grid.weight();
    let pts = grid.points();
    let sph = &kernel.sphere;
    let out = (0..n)
        .into_par_iter()
        .map(|k| {
            let v = pts[k];
            let mut acc = 0.0;
            for j in 0..n {
                if j == k {
                    continue;
                }
                let vs = pts[j];
                let bw = kernel.phi(dist(&v, &vs)) * w;
                let mut s = 0.0;
                for (sig, ws) in sph.directions.iter().zip(&sph.weights) {
                    let b = kernel.angular.eval(cos_theta(&v, &vs, sig));
                    let (vp, vps) = post_collision_velocities(&v, &vs, sig);
                    let sp = PointStencil::new(grid, &vp, kernel.order);
                    let sps = PointStencil::new(grid, &vps, kernel.order);
                    let gain = match (sp, sps) {
                        (Some(a), Some(c)) => {
                            let ea = env.value(norm2(&vp));
                            let ec = env.value(norm2(&vps));
                            let (ha, ga) = (a.eval(&hr, grid.n) * ea, a.eval(&gr, grid.n) * ea);
                            let (hc, gc) = (c.eval(&hr, grid.n) * ec, c.eval(&gr, grid.n) * ec);
                            ha * gc + hc * ga
                        }
                        _ => 0.0,
                    };
                    s += ws * b * (gain - h[k] * g[j] - h[j] * g[k]);
                }
                acc += 0.5 * bw * s;
            }
            acc
        })
        .collect();
    Ok(out)
}

/// ν(v) = Σ_{v*} Σ_σ w* w_σ Φ(|v−v*|) b(cos θ) M(v*).
pub fn collision_frequency(m: &[f64], kernel: &CollisionKernel, grid: &VelocityGrid) -> Result<Vec<f64>> {
    kernel.check_grid(grid)?;
    let n = grid.len();
    if m.len() != n {
        return Err(Error::invalid("collision_frequency: field length does not match the grid"));
    }
    let pts = grid.points();
    let w = grid.weight();
    Ok((0..n)
        .into_par_iter()
        .map(|k| {
            let v = pts[k];
            // the self pair is kept: it cancels in Q but belongs to ν
            (0..n)
                .map(|j| {
                    let vs = pts[j];
                    if j == k {
                        return kernel.phi(0.0) * w * kernel.angular_total() * m[j];
                    }
                    let bsum: f64 = kernel
                        .sphere
                        .directions
                        .iter()
                        .zip(&kernel.sphere.weights)
                        .map(|(s, ws)| ws * kernel.angular.eval(cos_theta(&v, &vs, s)))
                        .sum();
                    kernel.phi(dist(&v, &vs)) * w * bsum * m[j]
                })
                .sum()
        })
        .collect())
}

/// Γ[f, g] = Q(√M f, √M g)/√M evaluated directly at every node.
pub fn bilinear_gamma(
    f: &[f64],
    g: &[f64],
    m: &crate::equilibria::Maxwellian,
    kernel: &CollisionKernel,
    grid: &VelocityGrid,
) -> Result<Vec<f64>> {
    let sm: Vec<f64> = (0..grid.len()).map(|k| (0.5 * m.ln(grid.norm2(k), grid.dim)).exp()).collect();
    let a: Vec<f64> = f.iter().zip(&sm).map(|(x, s)| x * s).collect();
    let b: Vec<f64> = g.iter().zip(&sm).map(|(x, s)| x * s).collect();
    let q = bilinear_q_with(&a, &b, kernel, grid, Envelope { beta: 0.5 * m.beta })?;
    Ok(q.iter().zip(&sm).map(|(x, s)| x / s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::build_sphere_quadrature;

    #[test]
    fn aligned_sigma_is_identity() {
        let v = [1.0, -0.5, 0.0];
        let vs = [-0.3, 2.0, 0.0];
        let d = dist(&v, &vs);
        let s = [(v[0] - vs[0]) / d, (v[1] - vs[1]) / d, 0.0];
        let (vp, vps) = post_collision_velocities(&v, &vs, &s);
        for a in 0..3 {
            assert!((vp[a] - v[a]).abs() < 1e-14 && (vps[a] - vs[a]).abs() < 1e-14);
        }
    }

    #[test]
    fn collisions_conserve_momentum_and_energy() {
        let v = [0.3, 1.7, -2.2];
        let vs = [-1.1, 0.4, 0.9];
        let t: f64 = 0.7;
        let s = [t.cos() * 0.6, t.sin() * 0.6, 0.8];
        let (vp, vps) = post_collision_velocities(&v, &vs, &s);
        for a in 0..3 {
            assert!((vp[a] + vps[a] - v[a] - vs[a]).abs() < 1e-14);
        }
        assert!((norm2(&vp) + norm2(&vps) - norm2(&v) - norm2(&vs)).abs() < 1e-12);
    }

    #[test]
    fn kernel_validation() {
        let s = build_sphere_quadrature(2, 8).unwrap();
        assert!(CollisionKernel::new(1.5, 1.0, Angular::Constant { b0: 1.0 }, s.clone(), 4).is_err());
        assert!(CollisionKernel::new(0.5, 0.0, Angular::Constant { b0: 1.0 }, s.clone(), 4).is_err());
        assert!(CollisionKernel::new(0.5, 1.0, Angular::Affine { b0: 0.1, b1: 1.0 }, s.clone(), 4).is_err());
        let k = CollisionKernel::new(0.5, 1.0, Angular::Affine { b0: 1.0, b1: 0.5 }, s, 4).unwrap();
        assert!((k.angular_bound() - 1.5).abs() < 1e-12);
    }
}
