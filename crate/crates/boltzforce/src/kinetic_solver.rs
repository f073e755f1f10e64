//! Time integration of the forced Boltzmann equation in perturbative form
//! F = M + ε√M f, with a full-F mode layered on top by conversion.
//!
//! One step of size dt is a Strang composition
//! transport(dt/2) ∘ force(dt/2) ∘ collision(dt) ∘ force(dt/2) ∘ transport(dt/2),
//! all written for F. The reference Maxwellian only enters through the
//! representation: inside a step f is taken relative to the Maxwellian the
//! collision operator was assembled around, and is re-referenced to M(t)
//! at both ends. That re-referencing is exact and accounts for the
//! ∂ₜM contributions of ℰ.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::collision::linear::{check_resolution, KernelBasis};
use crate::collision::{gamma::GammaCoefficients, bilinear_gamma, CollisionKernel, GammaTable, LinearizedOperator, Spectrum};
use crate::equilibria::{perturbative_force, ForceField, Maxwellian, ReferenceParams};
use crate::error::{Error, Result};
use crate::grids::{SpatialGrid, VelocityGrid};

mod run;
pub use run::{initial_state, run, FluidData, InitialData, RunSettings, Trajectory};

/// Which unknown a state carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// f with F = M + ε√M f.
    Perturbative,
    /// F itself.
    Full,
}

/// Discretization of E·∇_v.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForceScheme {
    /// Centred flux; keeps the discrete mass, momentum and energy balances.
    Centered,
    /// First-order upwind flux.
    Upwind,
}

/// A field on SpatialGrid × VelocityGrid stored `[velocity][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    pub t: f64,
    pub mode: Mode,
    pub data: Vec<f64>,
}

impl KineticState {
    pub fn zeros(t: f64, mode: Mode, nv: usize, nx: usize) -> Self {
        KineticState {
            t,
            mode,
            data: vec![0.0; nv * nx],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSettings {
    /// Rebuild L and the Γ coefficients every this many steps.
    pub n_reuse: usize,
    pub force_scheme: ForceScheme,
    pub inner_tol: f64,
    pub max_sweeps: usize,
    pub collisions: bool,
    pub force: bool,
}

impl Default for StepSettings {
    fn default() -> Self {
        StepSettings {
            n_reuse: 16,
            force_scheme: ForceScheme::Centered,
            inner_tol: 1e-10,
            max_sweeps: 50,
            collisions: true,
            force: true,
        }
    }
}

/// Operators assembled around one Maxwellian.
struct CollisionCache {
    center: Maxwellian,
    op: LinearizedOperator,
    /// (I − dt/(2ε²) L_eff)⁻¹ and the dt it was built for.
    a_inv: Option<(f64, DMatrix<f64>)>,
    coefs: Option<GammaCoefficients>,
}

/// Grids, parameters, kernel and force plus cached operators.
pub struct KineticSolver {
    pub space: SpatialGrid,
    pub vel: VelocityGrid,
    pub params: ReferenceParams,
    pub kernel: CollisionKernel,
    pub force: ForceField,
    pub settings: StepSettings,
    table: Option<GammaTable>,
    cache: Option<CollisionCache>,
    steps_since_assembly: usize,
    /// Spectrum of L_μ-shaped operator at the first assembly.
    base_spectrum: Option<(Maxwellian, Spectrum)>,
    /// Number of inner sweeps used by the last collision substep.
    pub last_sweeps: usize,
}

impl KineticSolver {
    pub fn new(
        space: SpatialGrid,
        vel: VelocityGrid,
        params: ReferenceParams,
        kernel: CollisionKernel,
        force: ForceField,
        settings: StepSettings,
    ) -> Result<Self> {
        params.validate()?;
        if kernel.sphere.dim != vel.dim {
            return Err(Error::invalid("kernel and velocity grid dimensions differ"));
        }
        if vel.dim < space.dim {
            return Err(Error::invalid("velocity dimension must be at least the spatial dimension"));
        }
        if settings.n_reuse == 0 || settings.max_sweeps == 0 {
            return Err(Error::invalid("n_reuse and max_sweeps must be positive"));
        }
        let table = if kernel.angular.is_constant() {
            Some(GammaTable::new(&kernel, &vel)?)
        } else {
            None
        };
        Ok(KineticSolver {
            space,
            vel,
            params,
            kernel,
            force,
            settings,
            table,
            cache: None,
            steps_since_assembly: 0,
            base_spectrum: None,
            last_sweeps: 0,
        })
    }

    pub fn nx(&self) -> usize {
        self.space.len()
    }

    pub fn nv(&self) -> usize {
        self.vel.len()
    }

    pub fn maxwellian(&self, t: f64) -> Maxwellian {
        self.params.maxwellian_shape(t)
    }

    /// √M(t) at every velocity node.
    pub fn sqrt_m(&self, m: &Maxwellian) -> Vec<f64> {
        (0..self.nv())
            .map(|k| (0.5 * m.ln(self.vel.norm2(k), self.vel.dim)).exp())
            .collect()
    }

    /// Assembles (or reuses) the operators around `m`, checking the kernel
    /// resolution on first use.
    fn ensure_cache(&mut self, m: Maxwellian) -> Result<()> {
        let fresh = match &self.cache {
            None => true,
            Some(c) => c.center != m && self.steps_since_assembly >= self.settings.n_reuse,
        };
        if !fresh {
            return Ok(());
        }
        let op = LinearizedOperator::new(&m, &self.kernel, &self.vel)?;
        if self.base_spectrum.is_none() {
            let spec = op.spectrum(self.kernel.gamma, &self.vel)?;
            check_resolution(&spec, self.vel.dim)?;
            self.base_spectrum = Some((m, spec));
        }
        let coefs = self.table.as_ref().map(|t| t.coefficients(&m, &self.vel));
        self.cache = Some(CollisionCache {
            center: m,
            op,
            a_inv: None,
            coefs,
        });
        self.steps_since_assembly = 0;
        Ok(())
    }

    /// Linearized operator currently in use (assembled around M(t) if none).
    pub fn operator(&mut self, t: f64) -> Result<&LinearizedOperator> {
        let m = self.maxwellian(t);
        self.ensure_cache(m)?;
        Ok(&self.cache.as_ref().unwrap().op)
    }

    /// Spectrum of the first assembled operator.
    pub fn spectrum(&mut self) -> Result<Spectrum> {
        if self.base_spectrum.is_none() {
            self.operator(0.0)?;
        }
        Ok(self.base_spectrum.as_ref().unwrap().1.clone())
    }

    /// Weighted gap at time t from the first assembly and the scaling
    /// relation λ(M) = e^{s} h^{−(γ+d)/2} λ(μ).
    pub fn gap_at(&mut self, t: f64) -> Result<f64> {
        let spec = self.spectrum()?;
        let (m0, _) = self.base_spectrum.as_ref().unwrap();
        let m = self.maxwellian(t);
        let e = 0.5 * (self.kernel.gamma + self.vel.dim as f64);
        let ratio = (m.log_scale - m0.log_scale).exp() * (m.beta / m0.beta).powf(-e);
        Ok(spec.weighted_gap * ratio)
    }

    /// dt = min(0.5 ε Δx / R_v, 0.1 ε² / λ̂).
    pub fn default_dt(&mut self) -> Result<f64> {
        let lam = self.gap_at(0.0)?;
        let eps = self.params.eps;
        Ok((0.5 * eps * self.space.spacing / self.vel.radius).min(0.1 * eps * eps / lam))
    }

    // ----- conversions ---------------------------------------------------

    /// F = M(t) + ε√M(t) f.
    pub fn to_full(&self, state: &KineticState) -> KineticState {
        match state.mode {
            Mode::Full => state.clone(),
            Mode::Perturbative => {
                let m = self.maxwellian(state.t);
                let nx = self.nx();
                let eps = self.params.eps;
                let mut data = state.data.clone();
                for k in 0..self.nv() {
                    let ln = m.ln(self.vel.norm2(k), self.vel.dim);
                    let (mv, sm) = (ln.exp(), (0.5 * ln).exp());
                    for x in &mut data[k * nx..(k + 1) * nx] {
                        *x = mv + eps * sm * *x;
                    }
                }
                KineticState {
                    t: state.t,
                    mode: Mode::Full,
                    data,
                }
            }
        }
    }

    /// f = (F − M(t)) / (ε√M(t)).
    pub fn to_perturbative(&self, state: &KineticState) -> KineticState {
        match state.mode {
            Mode::Perturbative => state.clone(),
            Mode::Full => {
                let m = self.maxwellian(state.t);
                let mut data = state.data.clone();
                self.shift_reference(&mut data, None, &m);
                KineticState {
                    t: state.t,
                    mode: Mode::Perturbative,
                    data,
                }
            }
        }
    }

    /// Rewrites f relative to `from` as f relative to `to` (same F). With
    /// `from = None` the input is F itself.
    fn shift_reference(&self, data: &mut [f64], from: Option<&Maxwellian>, to: &Maxwellian) {
        let nx = self.nx();
        let eps = self.params.eps;
        let d = self.vel.dim;
        for k in 0..self.nv() {
            let v2 = self.vel.norm2(k);
            let lt = to.ln(v2, d);
            let inv_st = (-0.5 * lt).exp() / eps;
            match from {
                None => {
                    let mt = lt.exp();
                    for x in &mut data[k * nx..(k + 1) * nx] {
                        *x = (*x - mt) * inv_st;
                    }
                }
                Some(fm) => {
                    let lf = fm.ln(v2, d);
                    let ratio = (0.5 * (lf - lt)).exp();
                    let shift = (lf.exp() - lt.exp()) * inv_st;
                    for x in &mut data[k * nx..(k + 1) * nx] {
                        *x = *x * ratio + shift;
                    }
                }
            }
        }
    }

    /// μ-based data F = μ + ε√μ f_in rewritten around M(0).
    pub fn from_mu_based(&self, f_in: &[f64]) -> KineticState {
        let mut data = f_in.to_vec();
        self.shift_reference(&mut data, Some(&Maxwellian::GLOBAL), &self.maxwellian(0.0));
        KineticState {
            t: 0.0,
            mode: Mode::Perturbative,
            data,
        }
    }

    // ----- building blocks -----------------------------------------------

    /// Exact free transport ∂ₜf = −(1/ε) v·∇ₓf over `tau`. The Nyquist slot
    /// is left untouched, so the map is invertible by −tau.
    pub fn transport(&self, data: &mut [f64], tau: f64) {
        let nx = self.nx();
        let eps = self.params.eps;
        let sdim = self.space.dim;
        let pts: Vec<[f64; 3]> = self.vel.points().to_vec();
        data.par_chunks_mut(nx).zip(pts.par_iter()).for_each(|(row, v)| {
            let mut buf: Vec<Complex64> = row.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            self.space.forward(&mut buf);
            for (idx, z) in buf.iter_mut().enumerate() {
                if self.space.is_nyquist(idx) {
                    continue;
                }
                let kv = self.space.wavevector(idx);
                let mut phase = 0.0;
                for a in 0..sdim {
                    phase += kv[a] as f64 * v[a];
                }
                let ang = -phase * tau / eps;
                *z *= Complex64::new(ang.cos(), ang.sin());
            }
            self.space.inverse(&mut buf);
            for (x, z) in row.iter_mut().zip(&buf) {
                *x = z.re;
            }
        });
    }

    /// (D_a F)_k per lane: flux-form approximation of ∂F/∂v_a with closed
    /// (zero-flux) box faces. `speed` selects the upwind side per lane.
    fn v_derivative(&self, field: &[f64], axis: usize, speed: Option<&[f64]>, out: &mut [f64]) {
        let nx = self.nx();
        let n = self.vel.n;
        let stride = n.pow((self.vel.dim - 1 - axis) as u32);
        let inv = 1.0 / self.vel.spacing;
        out.par_chunks_mut(nx).enumerate().for_each(|(k, o)| {
            let i = (k / stride) % n;
            let row = |kk: usize| &field[kk * nx..(kk + 1) * nx];
            let here = row(k);
            let plus = if i + 1 < n { Some(row(k + stride)) } else { None };
            let minus = if i > 0 { Some(row(k - stride)) } else { None };
            for x in 0..nx {
                // face values at i+½ and i−½
                let (fp, fm) = match speed {
                    None => (
                        plus.map_or(0.0, |p| 0.5 * (here[x] + p[x])),
                        minus.map_or(0.0, |m| 0.5 * (here[x] + m[x])),
                    ),
                    Some(c) => {
                        if c[x] >= 0.0 {
                            (plus.map_or(0.0, |_| here[x]), minus.map_or(0.0, |m| m[x]))
                        } else {
                            (plus.map_or(0.0, |p| p[x]), minus.map_or(0.0, |_| here[x]))
                        }
                    }
                };
                o[x] = (fp - fm) * inv;
            }
        });
    }

    /// −E_t·D(F) for F given on the grid, per lane.
    fn force_term(&self, t: f64, full: &[f64], out: &mut [f64]) {
        let e = self.force.sample(t, &self.space);
        let nv_axes = self.vel.dim.min(2);
        out.iter_mut().for_each(|x| *x = 0.0);
        let mut d = vec![0.0; full.len()];
        for a in 0..nv_axes {
            if e[a].iter().all(|x| *x == 0.0) {
                continue;
            }
            let speed = match self.settings.force_scheme {
                ForceScheme::Centered => None,
                ForceScheme::Upwind => Some(e[a].as_slice()),
            };
            self.v_derivative(full, a, speed, &mut d);
            let nx = self.nx();
            out.par_chunks_mut(nx).zip(d.par_chunks(nx)).for_each(|(o, dr)| {
                for x in 0..nx {
                    o[x] -= e[a][x] * dr[x];
                }
            });
        }
    }

    /// Force substep ∂ₜF = −ε E·∇_v F over [t, t+tau] on f relative to `m`,
    /// one classical RK4 step.
    fn force_substep(&self, data: &mut [f64], m: &Maxwellian, t: f64, tau: f64) {
        if !self.settings.force || self.force.is_zero() {
            return;
        }
        let nx = self.nx();
        let eps = self.params.eps;
        let sm = self.sqrt_m(m);
        let mv: Vec<f64> = sm.iter().map(|s| s * s).collect();
        // work on g = √M f; F = M + ε g, so ∂ₜg = −E·D(M) − ε E·D(g).
        let to_g = |f: &[f64]| -> Vec<f64> {
            let mut g = f.to_vec();
            g.par_chunks_mut(nx).zip(sm.par_iter()).for_each(|(r, s)| r.iter_mut().for_each(|x| *x *= s));
            g
        };
        let rhs = |g: &[f64], tt: f64| -> Vec<f64> {
            let mut full = g.to_vec();
            full.par_chunks_mut(nx).zip(mv.par_iter()).for_each(|(r, mm)| {
                r.iter_mut().for_each(|x| *x = mm + eps * *x);
            });
            let mut out = vec![0.0; g.len()];
            self.force_term(tt, &full, &mut out);
            out
        };
        let g0 = to_g(data);
        let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
        let k1 = rhs(&g0, t);
        let k2 = rhs(&axpy(&g0, 0.5 * tau, &k1), t + 0.5 * tau);
        let k3 = rhs(&axpy(&g0, 0.5 * tau, &k2), t + 0.5 * tau);
        let k4 = rhs(&axpy(&g0, tau, &k3), t + tau);
        data.par_chunks_mut(nx).enumerate().for_each(|(k, row)| {
            let inv = 1.0 / sm[k];
            for x in 0..nx {
                let i = k * nx + x;
                let g = g0[i] + tau / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                row[x] = g * inv;
            }
        });
    }

    /// P⊥Γ[f, f] on every lane, f relative to the cached centre.
    fn gamma_perp(&self, f: &[f64]) -> Result<Vec<f64>> {
        let cache = self.cache.as_ref().expect("collision cache");
        let nx = self.nx();
        let nv = self.nv();
        let mut out = vec![0.0; f.len()];
        match (&self.table, &cache.coefs) {
            (Some(t), Some(c)) => t.apply(c, f, None, nx, &mut out),
            _ => {
                for x in 0..nx {
                    let lane: Vec<f64> = (0..nv).map(|k| f[k * nx + x]).collect();
                    let g = bilinear_gamma(&lane, &lane, &cache.center, &self.kernel, &self.vel)?;
                    for k in 0..nv {
                        out[k * nx + x] = g[k];
                    }
                }
            }
        }
        project_lanes_perp(&cache.op.basis, &mut out, nx);
        Ok(out)
    }

    /// Implicit midpoint over dt for ∂ₜf = (1/ε²)L f + (1/ε)P⊥Γ[f, f].
    fn collision_substep(&mut self, data: &mut [f64], dt: f64) -> Result<()> {
        if !self.settings.collisions {
            return Ok(());
        }
        let eps = self.params.eps;
        let nx = self.nx();
        let nv = self.nv();
        {
            let cache = self.cache.as_mut().expect("collision cache");
            let stale = cache.a_inv.as_ref().is_none_or(|(d, _)| *d != dt);
            if stale {
                let a = DMatrix::identity(nv, nv) - &cache.op.effective * (0.5 * dt / (eps * eps));
                let inv = a
                    .cholesky()
                    .map(|c| c.inverse())
                    .ok_or_else(|| Error::numerical("implicit collision matrix is not positive definite"))?;
                cache.a_inv = Some((dt, inv));
            }
        }
        let f0 = data.to_vec();
        let solve = |rhs: &[f64], cache: &CollisionCache| -> Vec<f64> {
            // row-major [v][x] is column-major x × v, so A⁻¹ acts from the right.
            let x = DMatrix::from_column_slice(nx, nv, rhs);
            let y = x * &cache.a_inv.as_ref().unwrap().1;
            y.as_slice().to_vec()
        };
        let c = 0.5 * dt / eps;
        let mut m = solve(&f0, self.cache.as_ref().unwrap());
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < self.settings.max_sweeps {
            sweeps += 1;
            let g = self.gamma_perp(&m)?;
            let rhs: Vec<f64> = f0.iter().zip(&g).map(|(a, b)| a + c * b).collect();
            let next = solve(&rhs, self.cache.as_ref().unwrap());
            let diff = next.iter().zip(&m).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            let scale = next.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            m = next;
            if diff <= self.settings.inner_tol * scale.max(f64::MIN_POSITIVE) || scale == 0.0 {
                converged = true;
                break;
            }
        }
        self.last_sweeps = sweeps;
        if !converged {
            return Err(Error::numerical(format!(
                "collision inner iteration did not converge in {} sweeps",
                self.settings.max_sweeps
            )));
        }
        for (d, (mm, f)) in data.iter_mut().zip(m.iter().zip(&f0)) {
            *d = 2.0 * mm - f;
        }
        Ok(())
    }

    /// One Strang step of size dt.
    pub fn step(&mut self, state: &KineticState, dt: f64) -> Result<KineticState> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        let full = state.mode == Mode::Full;
        let mut s = self.to_perturbative(state);
        let t = s.t;
        let m_t = self.maxwellian(t);
        if self.settings.collisions {
            self.ensure_cache(m_t)?;
        }
        let center = self.cache.as_ref().map_or(m_t, |c| c.center);
        if center != m_t {
            self.shift_reference(&mut s.data, Some(&m_t), &center);
        }
        let h = 0.5 * dt;
        self.transport(&mut s.data, h);
        self.force_substep(&mut s.data, &center, t, h);
        self.collision_substep(&mut s.data, dt)?;
        self.force_substep(&mut s.data, &center, t + h, h);
        self.transport(&mut s.data, h);
        let m_next = self.maxwellian(t + dt);
        if center != m_next {
            self.shift_reference(&mut s.data, Some(&center), &m_next);
        }
        self.steps_since_assembly += 1;
        if s.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical(format!("non-finite value after step at t = {t}")));
        }
        s.t = t + dt;
        Ok(if full { self.to_full(&s) } else { s })
    }

    // ----- right-hand sides ------------------------------------------------

    /// S₁ + … + S₆ of the perturbative equation at the state's time.
    pub fn rhs_perturbative(&mut self, state: &KineticState) -> Result<Vec<f64>> {
        if state.mode != Mode::Perturbative {
            return Err(Error::invalid("rhs_perturbative needs a perturbative state"));
        }
        let t = state.t;
        let eps = self.params.eps;
        let nx = self.nx();
        let nv = self.nv();
        let m = self.maxwellian(t);
        let f = &state.data;
        let mut out = vec![0.0; f.len()];
        // S₁
        for k in 0..nv {
            let v = self.vel.point(k);
            let row = &f[k * nx..(k + 1) * nx];
            for a in 0..self.space.dim {
                if v[a] == 0.0 {
                    continue;
                }
                let d = self.space.derivative(row, a);
                for x in 0..nx {
                    out[k * nx + x] -= v[a] * d[x] / eps;
                }
            }
        }
        // S₂, S₃, S₆
        let e = self.force.sample(t, &self.space);
        let mut tmp = vec![0.0; f.len()];
        self.force_term(t, f, &mut tmp);
        let sm = self.sqrt_m(&m);
        for k in 0..nv {
            let v = self.vel.point(k);
            let v2 = self.vel.norm2(k);
            for x in 0..nx {
                let ev = e[0][x] * v[0] + if self.vel.dim > 1 { e[1][x] * v[1] } else { 0.0 };
                let cal = perturbative_force(t, ev, v2, &self.params);
                let i = k * nx + x;
                out[i] += eps * tmp[i] - eps * cal * f[i] - 2.0 * cal * sm[k];
            }
        }
        // S₄, S₅ around M(t) exactly.
        if self.settings.collisions {
            self.ensure_cache(m)?;
            if self.cache.as_ref().unwrap().center != m {
                self.force_reassembly(m)?;
            }
            let cache = self.cache.as_ref().unwrap();
            let lf = DMatrix::from_column_slice(nx, nv, f) * &cache.op.effective;
            let g = self.gamma_perp(f)?;
            for (i, o) in out.iter_mut().enumerate() {
                *o += lf.as_slice()[i] / (eps * eps) + g[i] / eps;
            }
        }
        Ok(out)
    }

    fn force_reassembly(&mut self, m: Maxwellian) -> Result<()> {
        self.steps_since_assembly = self.settings.n_reuse;
        self.cache = None;
        self.ensure_cache(m)
    }

    /// −(1/ε) v·∇ₓF − ε E·∇_v F + (1/ε²) Q(F, F) for a full state.
    pub fn rhs_full(&self, state: &KineticState) -> Result<Vec<f64>> {
        if state.mode != Mode::Full {
            return Err(Error::invalid("rhs_full needs a full state"));
        }
        let eps = self.params.eps;
        let nx = self.nx();
        let nv = self.nv();
        let big_f = &state.data;
        let mut out = vec![0.0; big_f.len()];
        for k in 0..nv {
            let v = self.vel.point(k);
            let row = &big_f[k * nx..(k + 1) * nx];
            for a in 0..self.space.dim {
                if v[a] == 0.0 {
                    continue;
                }
                let d = self.space.derivative(row, a);
                for x in 0..nx {
                    out[k * nx + x] -= v[a] * d[x] / eps;
                }
            }
        }
        let mut tmp = vec![0.0; big_f.len()];
        self.force_term(state.t, big_f, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += eps * t;
        }
        // Q(F, F) = √μ Γ_μ[F/√μ, F/√μ]
        let smu = self.sqrt_m(&Maxwellian::GLOBAL);
        let mut h = big_f.clone();
        for k in 0..nv {
            h[k * nx..(k + 1) * nx].iter_mut().for_each(|x| *x /= smu[k]);
        }
        let mut q = vec![0.0; h.len()];
        match &self.table {
            Some(t) => {
                let c = t.coefficients(&Maxwellian::GLOBAL, &self.vel);
                t.apply(&c, &h, None, nx, &mut q);
            }
            None => {
                for x in 0..nx {
                    let lane: Vec<f64> = (0..nv).map(|k| h[k * nx + x]).collect();
                    let g = bilinear_gamma(&lane, &lane, &Maxwellian::GLOBAL, &self.kernel, &self.vel)?;
                    for k in 0..nv {
                        q[k * nx + x] = g[k];
                    }
                }
            }
        }
        for k in 0..nv {
            for x in 0..nx {
                out[k * nx + x] += smu[k] * q[k * nx + x] / (eps * eps);
            }
        }
        Ok(out)
    }

    /// (∫∫F, ∫∫vF, ∫∫|v|²F, ∫∫E·F, ∫∫E·vF) for the state; vectors padded
    /// to three components.
    pub fn global_moments(&self, state: &KineticState) -> GlobalMoments {
        let full = self.to_full(state);
        let nx = self.nx();
        let e = self.force.sample(state.t, &self.space);
        let wv = self.vel.weight() * self.space.cell_volume();
        let mut gm = GlobalMoments::default();
        for k in 0..self.nv() {
            let v = self.vel.point(k);
            let v2 = self.vel.norm2(k);
            let row = &full.data[k * nx..(k + 1) * nx];
            let s: f64 = row.iter().sum::<f64>() * wv;
            gm.mass += s;
            for a in 0..3 {
                gm.momentum[a] += v[a] * s;
            }
            gm.energy += v2 * s;
            for x in 0..nx {
                let fx = row[x] * wv;
                gm.force_mass[0] += e[0][x] * fx;
                gm.force_mass[1] += e[1][x] * fx;
                let ev = e[0][x] * v[0] + e[1][x] * v[1];
                gm.force_work += ev * fx;
            }
        }
        if self.vel.dim == 1 {
            gm.force_mass[1] = 0.0;
        }
        gm
    }
}

/// Removes the kernel component of every lane.
pub(crate) fn project_lanes_perp(basis: &KernelBasis, data: &mut [f64], nx: usize) {
    let nv = basis.vectors.nrows();
    let x = DMatrix::from_column_slice(nx, nv, data);
    let c = &x * &basis.vectors;
    let y = x - c * basis.vectors.transpose();
    data.copy_from_slice(y.as_slice());
}

/// Global moments of F and the force integrals entering their balances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalMoments {
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
    /// ∫∫ E F.
    pub force_mass: [f64; 2],
    /// ∫∫ E·v F.
    pub force_work: f64,
}

// ----- snapshots -------------------------------------------------------------

/// Magic bytes of the snapshot container.
pub const SNAPSHOT_MAGIC: &[u8; 8] = b"BZFSNAP1";

/// Header of a snapshot file. All integers are u32 and all reals f64,
/// little-endian, in this order after the 8 magic bytes:
/// mode (0 perturbative, 1 full, 2 fluid), d_x, N_x, d_v, N_v, R_v, t,
/// ε, 𝚎, a, A, Λ, T₀, then the component count as u32. The payload follows
/// as `components × N_v^{d_v} × N_x^{d_x}` f64 values, row-major with the
/// velocity index slowest (for fluid snapshots N_v = 0 and the payload is
/// `components × N_x^{d_x}`).
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub mode: u32,
    pub dx: u32,
    pub nx: u32,
    pub dv: u32,
    pub nv: u32,
    pub rv: f64,
    pub t: f64,
    pub params: ReferenceParams,
    pub components: u32,
}

pub fn write_snapshot(path: &Path, header: &SnapshotHeader, payload: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(SNAPSHOT_MAGIC)?;
    for v in [header.mode, header.dx, header.nx, header.dv, header.nv] {
        w.write_all(&v.to_le_bytes())?;
    }
    let p = &header.params;
    for v in [header.rv, header.t, p.eps, p.e_exp, p.a, p.big_a, p.lambda, p.t0] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&header.components.to_le_bytes())?;
    for v in payload {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 + 5 * 4 + 8 * 8 + 4 || &bytes[..8] != SNAPSHOT_MAGIC {
        return Err(Error::invalid("not a snapshot file"));
    }
    let mut pos = 8;
    let mut u = || {
        let v = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        pos += 4;
        v
    };
    let (mode, dx, nx, dv, nv) = (u(), u(), u(), u(), u());
    let mut reals = [0.0; 8];
    for r in reals.iter_mut() {
        *r = f64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
        pos += 8;
    }
    let components = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
    pos += 4;
    let rest = &bytes[pos..];
    if rest.len() % 8 != 0 {
        return Err(Error::invalid("truncated snapshot payload"));
    }
    let payload: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let want = components as usize
        * (nv as usize).pow(dv).max(1)
        * (nx as usize).pow(dx);
    if payload.len() != want {
        return Err(Error::invalid(format!(
            "snapshot payload has {} values, header implies {want}",
            payload.len()
        )));
    }
    let header = SnapshotHeader {
        mode,
        dx,
        nx,
        dv,
        nv,
        rv: reals[0],
        t: reals[1],
        params: ReferenceParams {
            eps: reals[2],
            e_exp: reals[3],
            a: reals[4],
            big_a: reals[5],
            lambda: reals[6],
            t0: reals[7],
        },
        components,
    };
    Ok((header, payload))
}

impl KineticSolver {
    pub fn snapshot_header(&self, state: &KineticState) -> SnapshotHeader {
        SnapshotHeader {
            mode: match state.mode {
                Mode::Perturbative => 0,
                Mode::Full => 1,
            },
            dx: self.space.dim as u32,
            nx: self.space.n as u32,
            dv: self.vel.dim as u32,
            nv: self.vel.n as u32,
            rv: self.vel.radius,
            t: state.t,
            params: self.params,
            components: 1,
        }
    }
}
