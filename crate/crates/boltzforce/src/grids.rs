//! Spatial torus, truncated velocity box and sphere quadrature.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform grid on the torus [0, 2π)^d with d ∈ {1, 2}.
///
/// Fields are stored row-major: index = i0 * n + i1.
#[derive(Clone)]
pub struct SpatialGrid {
    pub dim: usize,
    pub n: usize,
    pub spacing: f64,
    nodes: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpatialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpatialGrid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .finish()
    }
}

impl PartialEq for SpatialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n
    }
}

pub fn build_spatial_grid(dim: usize, n: usize) -> Result<SpatialGrid> {
    if !(1..=2).contains(&dim) {
        return Err(Error::invalid(format!("spatial dimension must be 1 or 2, got {dim}")));
    }
    if n < 4 || n % 2 != 0 {
        return Err(Error::invalid(format!("N_x must be even and >= 4, got {n}")));
    }
    let spacing = 2.0 * PI / n as f64;
    let nodes = (0..n).map(|i| i as f64 * spacing).collect();
    let mut planner = FftPlanner::new();
    Ok(SpatialGrid {
        dim,
        n,
        spacing,
        nodes,
        fwd: planner.plan_fft_forward(n),
        inv: planner.plan_fft_inverse(n),
    })
}

impl SpatialGrid {
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node coordinates along one axis.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Coordinates of flat node `idx`; missing axes are 0.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.nodes[idx], 0.0],
            _ => [self.nodes[idx / self.n], self.nodes[idx % self.n]],
        }
    }

    /// Cell volume (2π/N)^d.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Torus volume (2π)^d.
    pub fn volume(&self) -> f64 {
        (2.0 * PI).powi(self.dim as i32)
    }

    /// Integer wavenumber of FFT slot `i`, in {−N/2+1, …, N/2}.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Wavenumbers in ascending order, {−N/2+1, …, N/2}.
    pub fn wavenumbers(&self) -> Vec<i64> {
        let h = self.n as i64 / 2;
        (-h + 1..=h).collect()
    }

    /// Wavevector of flat FFT slot `idx`; missing axes are 0.
    pub fn wavevector(&self, idx: usize) -> [i64; 2] {
        match self.dim {
            1 => [self.wavenumber(idx), 0],
            _ => [self.wavenumber(idx / self.n), self.wavenumber(idx % self.n)],
        }
    }

    /// True when any component sits on the Nyquist slot N/2.
    pub fn is_nyquist(&self, idx: usize) -> bool {
        let h = self.n as i64 / 2;
        let k = self.wavevector(idx);
        k[0] == h || (self.dim == 2 && k[1] == h)
    }

    /// Unnormalized forward DFT in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.fwd);
    }

    /// Inverse DFT in place, including the 1/N^d factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.inv);
        let s = 1.0 / self.len() as f64;
        for z in buf.iter_mut() {
            *z *= s;
        }
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(buf.len(), self.len());
        let n = self.n;
        plan.process(buf);
        if self.dim == 2 {
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = buf[i * n + j];
                }
                plan.process(&mut col);
                for i in 0..n {
                    buf[i * n + j] = col[i];
                }
            }
        }
    }

    pub fn to_spectral(&self, field: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    pub fn to_physical(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut spec);
        spec.into_iter().map(|z| z.re).collect()
    }

    /// Spectral ∂/∂x_axis. The Nyquist slot is dropped, so constants and
    /// resolved modes |k| ≤ N/2 − 1 are differentiated exactly.
    pub fn derivative(&self, field: &[f64], axis: usize) -> Vec<f64> {
        let mut spec = self.to_spectral(field);
        for (idx, z) in spec.iter_mut().enumerate() {
            if self.is_nyquist(idx) {
                *z = Complex64::new(0.0, 0.0);
                continue;
            }
            let k = self.wavevector(idx)[axis] as f64;
            *z *= Complex64::new(0.0, k);
        }
        self.to_physical(spec)
    }

    /// Grid quadrature ∫_𝕋 field dx.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        field.iter().sum::<f64>() * self.cell_volume()
    }

    /// Spatial average of a field.
    pub fn mean(&self, field: &[f64]) -> f64 {
        field.iter().sum::<f64>() / field.len() as f64
    }
}

/// Midpoint tensor grid on [−R, R]^d with uniform weights (2R/N)^d.
///
/// Flat index is row-major over axes, axis 0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    pub dim: usize,
    pub radius: f64,
    pub n: usize,
    pub spacing: f64,
    nodes: Vec<f64>,
    points: Vec<[f64; 3]>,
}

pub fn build_velocity_grid(dim: usize, radius: f64, n: usize) -> Result<VelocityGrid> {
    if !(1..=3).contains(&dim) {
        return Err(Error::invalid(format!("velocity dimension must be 1, 2 or 3, got {dim}")));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!("R_v must be positive, got {radius}")));
    }
    if n < 2 || n % 2 != 0 {
        return Err(Error::invalid(format!("N_v must be even, got {n}")));
    }
    let spacing = 2.0 * radius / n as f64;
    // upper half by negation so the grid is exactly symmetric
    let mut nodes: Vec<f64> = (0..n).map(|i| -radius + spacing * (i as f64 + 0.5)).collect();
    for i in 0..n / 2 {
        nodes[n - 1 - i] = -nodes[i];
    }
    let len = n.pow(dim as u32);
    let mut points = Vec::with_capacity(len);
    for k in 0..len {
        let mut p = [0.0; 3];
        let mut rem = k;
        for a in (0..dim).rev() {
            p[a] = nodes[rem % n];
            rem /= n;
        }
        points.push(p);
    }
    Ok(VelocityGrid {
        dim,
        radius,
        n,
        spacing,
        nodes,
        points,
    })
}

impl VelocityGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn point(&self, k: usize) -> [f64; 3] {
        self.points[k]
    }

    pub fn norm2(&self, k: usize) -> f64 {
        let p = &self.points[k];
        p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
    }

    /// Uniform quadrature weight of every node.
    pub fn weight(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn weights(&self) -> Vec<f64> {
        vec![self.weight(); self.len()]
    }

    /// Per-axis indices of flat node `k`.
    pub fn multi_index(&self, k: usize) -> [usize; 3] {
        let mut m = [0; 3];
        let mut rem = k;
        for a in (0..self.dim).rev() {
            m[a] = rem % self.n;
            rem /= self.n;
        }
        m
    }

    pub fn flat_index(&self, m: &[usize]) -> usize {
        m.iter().take(self.dim).fold(0, |acc, &i| acc * self.n + i)
    }

    /// Index of the node mirrored through the origin.
    pub fn mirror(&self, k: usize) -> usize {
        let m = self.multi_index(k);
        let mut r = [0; 3];
        for a in 0..self.dim {
            r[a] = self.n - 1 - m[a];
        }
        self.flat_index(&r)
    }

    /// Grid quadrature ∫ field dv.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        field.iter().sum::<f64>() * self.weight()
    }

    /// Same box, same N, every coordinate multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<VelocityGrid> {
        build_velocity_grid(self.dim, self.radius * s, self.n)
    }

    /// ⟨v⟩^γ = (1 + |v|²)^{γ/2} at every node.
    pub fn japanese_weight(&self, gamma: f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| (1.0 + self.norm2(k)).powf(0.5 * gamma))
            .collect()
    }
}

/// Quadrature on S^{d−1}.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereQuadrature {
    pub dim: usize,
    pub directions: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

pub fn build_sphere_quadrature(dim: usize, count: usize) -> Result<SphereQuadrature> {
    if count < 4 {
        return Err(Error::invalid(format!("N_sigma must be >= 4, got {count}")));
    }
    match dim {
        2 => {
            let w = 2.0 * PI / count as f64;
            let directions = (0..count)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / count as f64;
                    [t.cos(), t.sin(), 0.0]
                })
                .collect();
            Ok(SphereQuadrature {
                dim,
                directions,
                weights: vec![w; count],
            })
        }
        3 => {
            let (n_lat, n_lon) = split_sphere_count(count)?;
            let (z, wz) = gauss_legendre(n_lat);
            let mut directions = Vec::with_capacity(count);
            let mut weights = Vec::with_capacity(count);
            for (zi, wi) in z.iter().zip(&wz) {
                let s = (1.0 - zi * zi).max(0.0).sqrt();
                for j in 0..n_lon {
                    let phi = 2.0 * PI * j as f64 / n_lon as f64;
                    directions.push([s * phi.cos(), s * phi.sin(), *zi]);
                    weights.push(wi * 2.0 * PI / n_lon as f64);
                }
            }
            Ok(SphereQuadrature {
                dim,
                directions,
                weights,
            })
        }
        _ => Err(Error::invalid(format!("sphere quadrature needs d = 2 or 3, got {dim}"))),
    }
}

/// Latitude × longitude split of a 3D rule with an even longitude count,
/// roughly twice as many longitudes as latitudes.
fn split_sphere_count(count: usize) -> Result<(usize, usize)> {
    let target = ((count as f64) / 2.0).sqrt();
    (1..=count)
        .filter(|&l| count % l == 0 && (count / l) % 2 == 0 && l as f64 <= target + 1e-9)
        .max()
        .map(|l| (l, count / l))
        .ok_or_else(|| Error::invalid(format!("N_sigma = {count} has no even longitude split")))
}

impl SphereQuadrature {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Index of −σ for every σ, if the rule is closed under negation.
    pub fn antipodes(&self) -> Option<Vec<usize>> {
        self.directions
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| {
                self.directions.iter().zip(&self.weights).position(|(t, wt)| {
                    (s[0] + t[0]).abs() < 1e-12
                        && (s[1] + t[1]).abs() < 1e-12
                        && (s[2] + t[2]).abs() < 1e-12
                        && (w - wt).abs() < 1e-14 * w.abs().max(1.0)
                })
            })
            .collect()
    }
}

/// |S^{d−1}|: 2 for d = 1, 2π for d = 2, 4π for d = 3.
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}
