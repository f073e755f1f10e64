//! Norms, macroscopic moments, moment-balance residuals and monitors.
//!
//! Fields are `[velocity][x]` arrays on SpatialGrid × VelocityGrid.
//! x-derivatives are spectral (Nyquist dropped), v-derivatives use
//! fourth-order centred differences with one-sided five-point closures at
//! the box faces.

use std::io::Write;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::collision::KernelBasis;
use crate::equilibria::Maxwellian;
use crate::error::{Error, Result};
use crate::grids::{SpatialGrid, VelocityGrid};
use crate::kinetic_solver::{GlobalMoments, KineticSolver, KineticState, Mode};

/// (ρ_ε, u_ε, θ_ε) on the spatial grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroFields {
    pub rho: Vec<f64>,
    /// One field per velocity component.
    pub u: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
}

/// ε⁻¹∫(F − μ){1, v, (|v|² − d)/√(2d)} dv by grid quadrature.
pub fn moments(solver: &KineticSolver, state: &KineticState) -> MacroFields {
    let nx = solver.nx();
    let vel = &solver.vel;
    let d = vel.dim;
    let eps = solver.params.eps;
    let w = vel.weight();
    let mut out = MacroFields {
        rho: vec![0.0; nx],
        u: vec![vec![0.0; nx]; d],
        theta: vec![0.0; nx],
    };
    let norm_t = 1.0 / (2.0 * d as f64).sqrt();
    let mu = Maxwellian::GLOBAL;
    let m = solver.maxwellian(state.t);
    for k in 0..vel.len() {
        let v = vel.point(k);
        let v2 = vel.norm2(k);
        let row = &state.data[k * nx..(k + 1) * nx];
        // per-node (F − μ)/ε
        let (a, b) = match state.mode {
            Mode::Full => (-mu.value(v2, d) / eps, 1.0 / eps),
            Mode::Perturbative => {
                let ln = m.ln(v2, d);
                ((ln.exp() - mu.value(v2, d)) / eps, (0.5 * ln).exp())
            }
        };
        let tw = (v2 - d as f64) * norm_t;
        for x in 0..nx {
            let g = (a + b * row[x]) * w;
            out.rho[x] += g;
            for c in 0..d {
                out.u[c][x] += v[c] * g;
            }
            out.theta[x] += tw * g;
        }
    }
    out
}

/// The infinitesimal Maxwellian [ρ + u·v + (|v|²−d)/2 θ]√M as a field.
pub fn infinitesimal_maxwellian(
    rho: &[f64],
    u: &[Vec<f64>],
    theta: &[f64],
    m: &Maxwellian,
    vel: &VelocityGrid,
) -> Vec<f64> {
    let nx = rho.len();
    let d = vel.dim;
    let mut f = vec![0.0; vel.len() * nx];
    for k in 0..vel.len() {
        let v = vel.point(k);
        let v2 = vel.norm2(k);
        let sm = (0.5 * m.ln(v2, d)).exp();
        for x in 0..nx {
            let mut s = rho[x] + 0.5 * (v2 - d as f64) * theta[x];
            for (c, uc) in u.iter().enumerate().take(d) {
                s += uc[x] * v[c];
            }
            f[k * nx + x] = s * sm;
        }
    }
    f
}

// ----- global balances ---------------------------------------------------------

/// Cumulative residuals (r₀, r₁, r₂) of the mass, momentum and energy
/// balances at every sample after the first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentResiduals {
    pub times: Vec<f64>,
    pub r0: Vec<f64>,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    /// |∫∫F| at the first sample, for relative drifts.
    pub mass0: f64,
}

impl MomentResiduals {
    pub fn max_abs(&self) -> [f64; 3] {
        let m = |v: &Vec<f64>| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        [m(&self.r0), m(&self.r1), m(&self.r2)]
    }
}

/// r₀ = Δ∫∫F, r₁ = |Δ∫∫vF − ε∫∫∫E F dt|, r₂ = Δ∫∫|v|²F − 2ε∫∫∫E·vF dt with
/// trapezoidal time integrals over the samples.
pub fn global_moment_check(times: &[f64], samples: &[GlobalMoments], eps: f64) -> Result<MomentResiduals> {
    if times.len() < 2 || times.len() != samples.len() {
        return Err(Error::invalid("global_moment_check needs at least two matching samples"));
    }
    let s0 = &samples[0];
    let mut out = MomentResiduals {
        mass0: s0.mass.abs(),
        ..Default::default()
    };
    let mut imp = [0.0f64; 2];
    let mut work = 0.0;
    for i in 1..samples.len() {
        let dt = times[i] - times[i - 1];
        let (a, b) = (&samples[i - 1], &samples[i]);
        for c in 0..2 {
            imp[c] += 0.5 * dt * (a.force_mass[c] + b.force_mass[c]);
        }
        work += 0.5 * dt * (a.force_work + b.force_work);
        out.times.push(times[i]);
        out.r0.push(b.mass - s0.mass);
        let mut r1 = 0.0f64;
        for c in 0..3 {
            let src = if c < 2 { eps * imp[c] } else { 0.0 };
            r1 = r1.max((b.momentum[c] - s0.momentum[c] - src).abs());
        }
        out.r1.push(r1);
        out.r2.push(b.energy - s0.energy - 2.0 * eps * work);
    }
    Ok(out)
}

// ----- derivatives -------------------------------------------------------------

/// ∂^j_l f: `l` spatial and `j` velocity multi-indices.
pub fn mixed_derivative(f: &[f64], l: &[usize], j: &[usize], space: &SpatialGrid, vel: &VelocityGrid) -> Vec<f64> {
    let nx = space.len();
    let mut out = f.to_vec();
    if l.iter().any(|&o| o > 0) {
        for row in out.chunks_mut(nx) {
            let mut buf: Vec<Complex64> = row.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            space.forward(&mut buf);
            for (idx, z) in buf.iter_mut().enumerate() {
                if space.is_nyquist(idx) {
                    *z = Complex64::new(0.0, 0.0);
                    continue;
                }
                let kv = space.wavevector(idx);
                for (a, &o) in l.iter().enumerate().take(space.dim) {
                    *z *= Complex64::new(0.0, kv[a] as f64).powu(o as u32);
                }
            }
            space.inverse(&mut buf);
            for (x, z) in row.iter_mut().zip(&buf) {
                *x = z.re;
            }
        }
    }
    for (a, &o) in j.iter().enumerate().take(vel.dim) {
        for _ in 0..o {
            out = v_derivative4(&out, a, nx, vel);
        }
    }
    out
}

/// Fourth-order ∂/∂v_axis along one velocity axis, per lane.
pub fn v_derivative4(f: &[f64], axis: usize, nx: usize, vel: &VelocityGrid) -> Vec<f64> {
    const INTERIOR: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
    const EDGE0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
    const EDGE1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
    let n = vel.n;
    let stride = n.pow((vel.dim - 1 - axis) as u32);
    let inv = 1.0 / (12.0 * vel.spacing);
    let mut out = vec![0.0; f.len()];
    for k in 0..vel.len() {
        let i = (k / stride) % n;
        let base = k - i * stride;
        let (start, coef, sign) = if i >= 2 && i + 2 < n {
            (i - 2, INTERIOR, 1.0)
        } else if i == 0 {
            (0, EDGE0, 1.0)
        } else if i == 1 {
            (0, EDGE1, 1.0)
        } else if i == n - 1 {
            (n - 5, reversed(EDGE0), -1.0)
        } else {
            (n - 5, reversed(EDGE1), -1.0)
        };
        let o = &mut out[k * nx..(k + 1) * nx];
        for (m, c) in coef.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let src = base + (start + m) * stride;
            let row = &f[src * nx..(src + 1) * nx];
            for (ov, r) in o.iter_mut().zip(row) {
                *ov += sign * c * r * inv;
            }
        }
    }
    out
}

fn reversed(c: [f64; 5]) -> [f64; 5] {
    [c[4], c[3], c[2], c[1], c[0]]
}

/// All multi-indices of length `dim` with total order exactly `order`.
pub fn multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    if dim == 0 {
        return if order == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in (0..=order).rev() {
        for mut rest in multi_indices(dim - 1, order - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64], space: &SpatialGrid, vel: &VelocityGrid) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * space.cell_volume() * vel.weight()
}

/// ‖f‖²_{L²_{x,v}}.
pub fn l2_squared(f: &[f64], space: &SpatialGrid, vel: &VelocityGrid) -> f64 {
    dot(f, f, space, vel)
}

/// ‖f‖_{ℋ^s_ε}.
pub fn sobolev_eps_norm(f: &[f64], s: usize, eps: f64, space: &SpatialGrid, vel: &VelocityGrid) -> Result<f64> {
    if s > 4 {
        return Err(Error::invalid(format!("Sobolev order {s} is not supported (max 4)")));
    }
    if s > 0 && vel.n < 5 {
        return Err(Error::invalid("velocity derivatives need at least 5 nodes per axis"));
    }
    let mut total = 0.0;
    for order in 0..=s {
        for lo in 0..=order {
            let jo = order - lo;
            for l in multi_indices(space.dim, lo) {
                for j in multi_indices(vel.dim, jo) {
                    let d = mixed_derivative(f, &l, &j, space, vel);
                    let w = if jo == 0 { 1.0 } else { eps * eps };
                    total += w * l2_squared(&d, space, vel);
                }
            }
        }
    }
    Ok(total.sqrt())
}

/// (p, q, r) of the twisted terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistWeights {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl Default for TwistWeights {
    fn default() -> Self {
        TwistWeights { p: 4.0, q: 1.0, r: 1.0 }
    }
}

impl TwistWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.q > 0.0) || self.r * self.r > self.p * self.q || self.q > self.p {
            return Err(Error::invalid(format!(
                "twist weights need p, q > 0, r^2 <= pq and q <= p (got {:?})",
                self
            )));
        }
        Ok(())
    }
}

/// Q_{l,i}(f) = p‖∂⁰_{l+δᵢ}f‖² + qε²‖∂^{δᵢ}_l f‖² + εr⟨∂⁰_{l+δᵢ}f, ∂^{δᵢ}_l f⟩.
pub fn twisted_functional(
    f: &[f64],
    l: &[usize],
    i: usize,
    w: TwistWeights,
    eps: f64,
    space: &SpatialGrid,
    vel: &VelocityGrid,
) -> Result<f64> {
    w.validate()?;
    if i >= space.dim {
        return Err(Error::invalid(format!("direction {i} exceeds the spatial dimension")));
    }
    let mut lx = l.to_vec();
    lx.resize(space.dim, 0);
    lx[i] += 1;
    let mut jv = vec![0; vel.dim];
    jv[i] = 1;
    let a = mixed_derivative(f, &lx, &[], space, vel);
    let b = mixed_derivative(f, l, &jv, space, vel);
    Ok(w.p * l2_squared(&a, space, vel) + w.q * eps * eps * l2_squared(&b, space, vel) + eps * w.r * dot(&a, &b, space, vel))
}

/// Settings of the assembled ℋ^s functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunctionalSettings {
    pub s: usize,
    pub twist: TwistWeights,
    pub eta: f64,
    /// Common B_{j,l} weight of the pure higher velocity derivatives.
    pub b: f64,
}

impl Default for FunctionalSettings {
    fn default() -> Self {
        FunctionalSettings {
            s: 2,
            twist: TwistWeights::default(),
            eta: 1.0,
            b: 1.0,
        }
    }
}

/// Q₁(f) = Σᵢ Q_{0,i}(f) + qε²‖∂_{v_i} f‖² over velocity axes with no
/// spatial partner.
pub fn q1(f: &[f64], w: TwistWeights, eps: f64, space: &SpatialGrid, vel: &VelocityGrid) -> Result<f64> {
    let zero = vec![0; space.dim];
    let mut s = 0.0;
    for i in 0..space.dim {
        s += twisted_functional(f, &zero, i, w, eps, space, vel)?;
    }
    for i in space.dim..vel.dim {
        let mut j = vec![0; vel.dim];
        j[i] = 1;
        s += w.q * eps * eps * l2_squared(&mixed_derivative(f, &zero, &j, space, vel), space, vel);
    }
    Ok(s)
}

/// F_{s′}(f) = Σ_{|l|=s′−1} Σᵢ Q_{l,i}(f) + ε² B Σ_{|j|≥2, |l|+|j|=s′}‖∂^j_l f‖².
pub fn f_sprime(f: &[f64], sp: usize, cfg: &FunctionalSettings, eps: f64, space: &SpatialGrid, vel: &VelocityGrid) -> Result<f64> {
    let mut s = 0.0;
    for l in multi_indices(space.dim, sp - 1) {
        for i in 0..space.dim {
            s += twisted_functional(f, &l, i, cfg.twist, eps, space, vel)?;
        }
    }
    for jo in 2..=sp {
        for l in multi_indices(space.dim, sp - jo) {
            for j in multi_indices(vel.dim, jo) {
                s += eps * eps * cfg.b * l2_squared(&mixed_derivative(f, &l, &j, space, vel), space, vel);
            }
        }
    }
    Ok(s)
}

/// ‖f‖²_{L²} + Q₁(f) + η Σ_{s′=2..s} F_{s′}(f).
pub fn full_functional(f: &[f64], cfg: &FunctionalSettings, eps: f64, space: &SpatialGrid, vel: &VelocityGrid) -> Result<f64> {
    let mut s = l2_squared(f, space, vel) + q1(f, cfg.twist, eps, space, vel)?;
    for sp in 2..=cfg.s {
        s += cfg.eta * f_sprime(f, sp, cfg, eps, space, vel)?;
    }
    Ok(s)
}

/// ‖π⊥ f‖_{L²_γ} lane by lane.
pub fn perp_weighted_norm(f: &[f64], basis: &KernelBasis, gamma: f64, space: &SpatialGrid, vel: &VelocityGrid) -> f64 {
    let mut p = f.to_vec();
    crate::kinetic_solver::project_lanes_perp(basis, &mut p, space.len());
    let wt = vel.japanese_weight(gamma);
    let nx = space.len();
    let s: f64 = p
        .chunks(nx)
        .zip(&wt)
        .map(|(row, w)| w * row.iter().map(|x| x * x).sum::<f64>())
        .sum();
    (s * space.cell_volume() * vel.weight()).sqrt()
}

/// (‖π f‖², ‖∇ₓ π f‖² + |global moments|², ratio).
pub fn poincare_fluid_check(f: &[f64], basis: &KernelBasis, space: &SpatialGrid, vel: &VelocityGrid) -> (f64, f64, f64) {
    let nx = space.len();
    let nv = vel.len();
    let sw = 1.0 / vel.weight().sqrt();
    // coefficient fields c_i(x) = ⟨f(x), e_i⟩_v with e_i grid-orthonormal
    let r = basis.rank();
    let mut coef = vec![vec![0.0; nx]; r];
    for (i, c) in coef.iter_mut().enumerate() {
        for k in 0..nv {
            let e = basis.vectors[(k, i)] * sw * vel.weight();
            for x in 0..nx {
                c[x] += e * f[k * nx + x];
            }
        }
    }
    let lhs: f64 = coef.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>()).sum::<f64>() * space.cell_volume();
    let mut grad = 0.0;
    let mut glob = 0.0;
    for c in &coef {
        for a in 0..space.dim {
            let d = space.derivative(c, a);
            grad += d.iter().map(|x| x * x).sum::<f64>() * space.cell_volume();
        }
        let m = space.integrate(c);
        glob += m * m / space.volume();
    }
    let rhs = grad + glob;
    let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
    (lhs, rhs, ratio)
}

// ----- reports ------------------------------------------------------------------

/// One row of diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub t: f64,
    pub l2: f64,
    /// ‖f‖_{ℋ^s_ε}.
    pub hs_eps: f64,
    /// √ of the assembled ℋ^s functional.
    pub functional: f64,
    /// Q_{0,i} for every spatial direction i.
    pub twisted: Vec<f64>,
    pub perp_gamma: f64,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
    pub poincare: f64,
    pub gap: f64,
}

impl NormReport {
    /// Fixed column order of the CSV export.
    pub fn header(n_twisted: usize) -> Vec<String> {
        let mut h: Vec<String> = ["t", "l2", "hs_eps", "functional"].iter().map(|s| s.to_string()).collect();
        for i in 0..n_twisted {
            h.push(format!("q0_{}", i + 1));
        }
        for s in ["perp_gamma", "r0", "r1", "r2", "poincare", "gap"] {
            h.push(s.to_string());
        }
        h
    }

    pub fn row(&self) -> Vec<f64> {
        let mut r = vec![self.t, self.l2, self.hs_eps, self.functional];
        r.extend(&self.twisted);
        r.extend([self.perp_gamma, self.r0, self.r1, self.r2, self.poincare, self.gap]);
        r
    }
}

/// Diagnostics of one perturbative state.
pub fn norm_report(
    solver: &mut KineticSolver,
    state: &KineticState,
    cfg: &FunctionalSettings,
    residuals: [f64; 3],
) -> Result<NormReport> {
    let f = solver.to_perturbative(state);
    let eps = solver.params.eps;
    let (space, vel) = (solver.space.clone(), solver.vel.clone());
    let m = solver.maxwellian(state.t);
    let basis = KernelBasis::new(&m, &vel);
    let l2 = l2_squared(&f.data, &space, &vel).sqrt();
    let zero = vec![0; space.dim];
    let twisted = (0..space.dim)
        .map(|i| twisted_functional(&f.data, &zero, i, cfg.twist, eps, &space, &vel))
        .collect::<Result<Vec<_>>>()?;
    Ok(NormReport {
        t: state.t,
        l2,
        hs_eps: sobolev_eps_norm(&f.data, cfg.s, eps, &space, &vel)?,
        functional: full_functional(&f.data, cfg, eps, &space, &vel)?.max(0.0).sqrt(),
        twisted,
        perp_gamma: perp_weighted_norm(&f.data, &basis, solver.kernel.gamma, &space, &vel),
        r0: residuals[0],
        r1: residuals[1],
        r2: residuals[2],
        poincare: poincare_fluid_check(&f.data, &basis, &space, &vel).2,
        gap: solver.gap_at(state.t)?,
    })
}

/// Writes reports as CSV with the fixed header.
pub fn write_reports_csv(path: &std::path::Path, reports: &[NormReport]) -> Result<()> {
    let n = reports.first().map_or(0, |r| r.twisted.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    w.write_record(NormReport::header(n)).map_err(|e| Error::Io(e.into()))?;
    for r in reports {
        w.write_record(r.row().iter().map(|x| format!("{x:.12e}")))
            .map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Boundedness and decay summary of a norm series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub initial: f64,
    /// Smallest Ĉ with ‖f(t)‖ ≤ max{‖f_in‖, Ĉ}: the sup over t > 0.
    pub c_hat: f64,
    pub bounded: bool,
    pub monotone_nonincreasing: bool,
    /// Slope of log‖f‖ against log(1 + t).
    pub exponent: f64,
    pub r_squared: f64,
}

pub fn decay_monitor(times: &[f64], norms: &[f64]) -> Result<DecayReport> {
    if times.len() != norms.len() || norms.is_empty() {
        return Err(Error::invalid("decay_monitor needs matching, non-empty series"));
    }
    let initial = norms[0];
    let c_hat = norms.iter().skip(1).fold(0.0f64, |a, &x| a.max(x));
    let bounded = norms.iter().all(|x| x.is_finite() && *x <= initial.max(c_hat));
    let monotone = norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(norms)
        .filter(|(_, n)| **n > 0.0)
        .map(|(t, n)| ((1.0 + t).ln(), n.ln()))
        .collect();
    let (exponent, r_squared) = linear_fit(&pts);
    Ok(DecayReport {
        initial,
        c_hat,
        bounded,
        monotone_nonincreasing: monotone,
        exponent,
        r_squared,
    })
}

/// Least-squares slope and R² of y against x.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (0.0, 0.0);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, 0.0);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// JSON summary helper.
pub fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.into()))?;
    f.write_all(s.as_bytes())?;
    Ok(())
}
