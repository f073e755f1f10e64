//! Pseudo-spectral incompressible Navier–Stokes–Fourier solver on the
//! torus with the Boussinesq closure ρ = −θ, and the transport
//! coefficients of the discrete linearized operator.
//!
//! Time stepping is exponential (ETD) RK2: diffusion is integrated exactly
//! per Fourier mode, advection and force enter through the φ-functions,
//! so constant-in-time forcing and pure decay are reproduced exactly.
//! Quadratic terms are dealiased with the 2/3 rule.

use nalgebra::DVector;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::collision::{CollisionKernel, LinearizedOperator};
use crate::equilibria::{ForceField, Maxwellian};
use crate::error::{Error, Result};
use crate::grids::{SpatialGrid, VelocityGrid};
use crate::kinetic_solver::{write_snapshot, SnapshotHeader};

type C = Complex64;

/// Velocity and temperature on the spatial grid; ρ = −θ.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub t: f64,
    /// One field per velocity component (d_v of them).
    pub u: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
}

impl FluidState {
    pub fn zeros(components: usize, nx: usize) -> Self {
        FluidState {
            t: 0.0,
            u: vec![vec![0.0; nx]; components],
            theta: vec![0.0; nx],
        }
    }

    pub fn rho(&self) -> Vec<f64> {
        self.theta.iter().map(|t| -t).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub nu: f64,
    pub kappa: f64,
    /// Multiplier of E_t in the momentum equation.
    pub force_factor: f64,
}

impl FluidParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.kappa > 0.0) || !self.force_factor.is_finite() {
            return Err(Error::invalid("fluid viscosity and diffusivity must be positive"));
        }
        Ok(())
    }
}

/// û(k) ↦ (I − kkᵀ/|k|²)û(k) on the first d_x components; the zero mode
/// and extra velocity components are untouched.
pub fn leray_project(u: &[Vec<f64>], grid: &SpatialGrid) -> Vec<Vec<f64>> {
    let mut spec: Vec<Vec<C>> = u.iter().map(|c| grid.to_spectral(c)).collect();
    leray_spectral(&mut spec, grid);
    spec.into_iter().map(|s| grid.to_physical(s)).collect()
}

fn leray_spectral(spec: &mut [Vec<C>], grid: &SpatialGrid) {
    let dx = grid.dim.min(spec.len());
    let h = grid.n as i64 / 2;
    for idx in 0..grid.len() {
        // a Nyquist component has no sign, so it is treated as 0 like in ∂ₓ
        let k = grid.wavevector(idx).map(|x| if x == h { 0 } else { x });
        let k2: i64 = k[..dx].iter().map(|x| x * x).sum();
        if k2 == 0 {
            continue;
        }
        let mut dot = C::new(0.0, 0.0);
        for a in 0..dx {
            dot += spec[a][idx] * k[a] as f64;
        }
        for a in 0..dx {
            spec[a][idx] -= dot * (k[a] as f64 / k2 as f64);
        }
    }
}

/// ∇·u in physical space (first d_x components).
pub fn divergence(u: &[Vec<f64>], grid: &SpatialGrid) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for a in 0..grid.dim.min(u.len()) {
        let d = grid.derivative(&u[a], a);
        out.iter_mut().zip(&d).for_each(|(o, x)| *o += x);
    }
    out
}

/// Chapman–Enskog coefficients and the size of the kernel component of
/// the sources (zero up to round-off by parity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportCoefficients {
    pub nu: f64,
    pub kappa: f64,
    pub source_kernel_overlap: f64,
}

/// ν = −Σ⟨Āᵢⱼ, L⁻¹Āᵢⱼ⟩/((d−1)(d+2)) and κ = 2κ′/(d+2) with
/// κ′ = −(1/d)Σ⟨B̄ᵢ, L⁻¹B̄ᵢ⟩, where Āᵢⱼ = (vᵢvⱼ − δᵢⱼ|v|²/d)√μ and
/// B̄ᵢ = vᵢ(|v|² − (d+2))/2 √μ. In these units the limit equations read
/// ∂ₜu + u·∇u + ∇p = νΔu + E and ∂ₜθ + u·∇θ = κΔθ.
pub fn transport_coefficients(kernel: &CollisionKernel, grid: &VelocityGrid) -> Result<TransportCoefficients> {
    let op = LinearizedOperator::new(&Maxwellian::GLOBAL, kernel, grid)?;
    transport_from_operator(&op, grid)
}

pub fn transport_from_operator(op: &LinearizedOperator, grid: &VelocityGrid) -> Result<TransportCoefficients> {
    let d = grid.dim;
    if d < 2 {
        return Err(Error::invalid("transport coefficients need d_v >= 2"));
    }
    let n = grid.len();
    let w = grid.weight();
    let sm: Vec<f64> = (0..n).map(|k| Maxwellian::GLOBAL.value(grid.norm2(k), d).sqrt()).collect();
    let mut overlap = 0.0f64;
    let mut pair = |src: Vec<f64>| -> Result<f64> {
        let c = op.basis.vectors.tr_mul(&DVector::from_column_slice(&src));
        overlap = overlap.max(c.amax() * w.sqrt());
        let x = op.solve_perp(&op.basis.project_perp(&src))?;
        Ok(-src.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() * w)
    };
    let mut sa = 0.0;
    for i in 0..d {
        for j in 0..d {
            let src = (0..n)
                .map(|k| {
                    let v = grid.point(k);
                    let delta = if i == j { grid.norm2(k) / d as f64 } else { 0.0 };
                    (v[i] * v[j] - delta) * sm[k]
                })
                .collect();
            sa += pair(src)?;
        }
    }
    let mut sb = 0.0;
    for i in 0..d {
        let src = (0..n)
            .map(|k| grid.point(k)[i] * 0.5 * (grid.norm2(k) - (d + 2) as f64) * sm[k])
            .collect();
        sb += pair(src)?;
    }
    let nu = sa / ((d - 1) * (d + 2)) as f64;
    let kappa = 2.0 * (sb / d as f64) / (d + 2) as f64;
    if !(nu > 0.0 && kappa > 0.0) {
        return Err(Error::numerical(format!("non-positive transport coefficients ({nu}, {kappa})")));
    }
    Ok(TransportCoefficients {
        nu,
        kappa,
        source_kernel_overlap: overlap,
    })
}

/// Pseudo-spectral NSF integrator on one grid.
pub struct FluidSolver {
    pub grid: SpatialGrid,
    pub params: FluidParams,
    pub force: ForceField,
    /// 1 on modes kept by the 2/3 rule.
    keep: Vec<bool>,
    k2: Vec<f64>,
}

impl FluidSolver {
    pub fn new(grid: SpatialGrid, params: FluidParams, force: ForceField) -> Result<Self> {
        params.validate()?;
        let cut = grid.n as i64 / 3;
        let keep = (0..grid.len())
            .map(|i| {
                let k = grid.wavevector(i);
                !grid.is_nyquist(i) && k[..grid.dim].iter().all(|x| x.abs() <= cut)
            })
            .collect();
        let k2 = (0..grid.len())
            .map(|i| grid.wavevector(i)[..grid.dim].iter().map(|x| (x * x) as f64).sum())
            .collect();
        Ok(FluidSolver {
            grid,
            params,
            force,
            keep,
            k2,
        })
    }

    fn dealias(&self, s: &mut [C]) {
        for (z, k) in s.iter_mut().zip(&self.keep) {
            if !k {
                *z = C::new(0.0, 0.0);
            }
        }
    }

    fn deriv_spec(&self, s: &[C], axis: usize) -> Vec<f64> {
        let mut d: Vec<C> = s
            .iter()
            .enumerate()
            .map(|(i, z)| z * C::new(0.0, self.grid.wavevector(i)[axis] as f64))
            .collect();
        if self.grid.n % 2 == 0 {
            for (i, z) in d.iter_mut().enumerate() {
                if self.grid.is_nyquist(i) {
                    *z = C::new(0.0, 0.0);
                }
            }
        }
        self.grid.to_physical(d)
    }

    /// Explicit part: −P[(u·∇)u] + P[cE_t] and −(u·∇)θ, all spectral.
    fn explicit(&self, u: &[Vec<C>], th: &[C], t: f64) -> (Vec<Vec<C>>, Vec<C>) {
        let g = &self.grid;
        let dx = g.dim;
        let mut uf: Vec<Vec<C>> = u.to_vec();
        uf.iter_mut().for_each(|c| self.dealias(c));
        let mut tf = th.to_vec();
        self.dealias(&mut tf);
        let up: Vec<Vec<f64>> = uf.iter().map(|c| g.to_physical(c.clone())).collect();
        let adv = |s: &[C]| -> Vec<f64> {
            let mut out = vec![0.0; g.len()];
            for a in 0..dx {
                let d = self.deriv_spec(s, a);
                for ((o, ua), da) in out.iter_mut().zip(&up[a]).zip(&d) {
                    *o -= ua * da;
                }
            }
            out
        };
        let e = self.force.sample(t, g);
        let mut nu: Vec<Vec<C>> = uf
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let mut s = g.to_spectral(&adv(s));
                self.dealias(&mut s);
                if c < 2 {
                    let fe = g.to_spectral(&e[c]);
                    for (z, f) in s.iter_mut().zip(&fe) {
                        *z += f * self.params.force_factor;
                    }
                }
                s
            })
            .collect();
        leray_spectral(&mut nu, g);
        let mut nt = g.to_spectral(&adv(&tf));
        self.dealias(&mut nt);
        (nu, nt)
    }

    /// One ETD-RK2 step.
    pub fn step(&self, state: &FluidState, dt: f64) -> Result<FluidState> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        let g = &self.grid;
        let mut u: Vec<Vec<C>> = state.u.iter().map(|c| g.to_spectral(c)).collect();
        leray_spectral(&mut u, g);
        let th = g.to_spectral(&state.theta);
        let coef = |lam: f64| -> (f64, f64, f64) {
            let z = lam * dt;
            let e = (-z).exp();
            let (p1, p2) = if z.abs() < 1e-4 {
                (dt * (1.0 - z / 2.0 + z * z / 6.0), dt * (0.5 - z / 6.0 + z * z / 24.0))
            } else {
                ((1.0 - e) / lam, (e - 1.0 + z) / (lam * z))
            };
            (e, p1, p2)
        };
        let cu: Vec<(f64, f64, f64)> = self.k2.iter().map(|k| coef(self.params.nu * k)).collect();
        let ct: Vec<(f64, f64, f64)> = self.k2.iter().map(|k| coef(self.params.kappa * k)).collect();
        let (n0u, n0t) = self.explicit(&u, &th, state.t);
        let stage = |x: &[C], n: &[C], c: &[(f64, f64, f64)]| -> Vec<C> {
            x.iter().zip(n).zip(c).map(|((x, n), (e, p1, _))| x * *e + n * *p1).collect()
        };
        let au: Vec<Vec<C>> = u.iter().zip(&n0u).map(|(x, n)| stage(x, n, &cu)).collect();
        let at = stage(&th, &n0t, &ct);
        let (n1u, n1t) = self.explicit(&au, &at, state.t + dt);
        let fin = |a: &[C], n0: &[C], n1: &[C], c: &[(f64, f64, f64)]| -> Vec<C> {
            a.iter()
                .zip(n0.iter().zip(n1))
                .zip(c)
                .map(|((a, (n0, n1)), (_, _, p2))| a + (n1 - n0) * *p2)
                .collect()
        };
        let mut un: Vec<Vec<C>> = (0..u.len()).map(|c| fin(&au[c], &n0u[c], &n1u[c], &cu)).collect();
        leray_spectral(&mut un, g);
        let tn = fin(&at, &n0t, &n1t, &ct);
        let out = FluidState {
            t: state.t + dt,
            u: un.into_iter().map(|s| g.to_physical(s)).collect(),
            theta: g.to_physical(tn),
        };
        if out.u.iter().flatten().chain(&out.theta).any(|x| !x.is_finite()) {
            return Err(Error::numerical(format!("non-finite fluid state at t = {}", out.t)));
        }
        Ok(out)
    }

    /// dt·max|u|/Δx for the advective CFL number.
    pub fn cfl(&self, state: &FluidState, dt: f64) -> f64 {
        let umax = (0..self.grid.len())
            .map(|i| state.u.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        dt * umax / self.grid.spacing
    }
}

/// Fluid trajectory sampled at output times.
#[derive(Debug, Clone)]
pub struct FluidTrajectory {
    pub dt: f64,
    pub states: Vec<FluidState>,
    /// Largest divergence (sup norm) seen at any output.
    pub max_divergence: f64,
    /// True if the advective CFL number ever exceeded 1.
    pub cfl_warning: bool,
}

/// Integrates from `initial` to `t_end` with at most `dt_max` per step,
/// keeping every `n_out`-th state (plus the first and last).
pub fn nsf_run(solver: &FluidSolver, initial: FluidState, t_end: f64, dt_max: f64, n_out: usize) -> Result<FluidTrajectory> {
    if !(t_end > initial.t) || !(dt_max > 0.0) {
        return Err(Error::invalid("nsf_run needs t_end > t and dt > 0"));
    }
    let span = t_end - initial.t;
    let n_steps = (span / dt_max - 1e-9).ceil().max(1.0) as usize;
    let dt = span / n_steps as f64;
    let g = &solver.grid;
    let mut s = FluidState {
        u: leray_project(&initial.u, g),
        ..initial
    };
    let div = |s: &FluidState| divergence(&s.u, g).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut traj = FluidTrajectory {
        dt,
        max_divergence: div(&s),
        cfl_warning: false,
        states: vec![s.clone()],
    };
    for i in 1..=n_steps {
        if solver.cfl(&s, dt) > 1.0 {
            traj.cfl_warning = true;
        }
        s = solver.step(&s, dt)?;
        if i == n_steps || (n_out > 0 && i % n_out == 0) {
            traj.max_divergence = traj.max_divergence.max(div(&s));
            traj.states.push(s.clone());
        }
    }
    Ok(traj)
}

/// ½‖u‖² on the grid.
pub fn kinetic_energy(u: &[Vec<f64>], grid: &SpatialGrid) -> f64 {
    0.5 * u.iter().map(|c| grid.integrate(&c.iter().map(|x| x * x).collect::<Vec<_>>())).sum::<f64>()
}

/// Writes a fluid snapshot: components ρ, u₁…u_{d_v}, θ.
pub fn write_fluid_snapshot(path: &std::path::Path, s: &FluidState, grid: &SpatialGrid, params: crate::equilibria::ReferenceParams) -> Result<()> {
    let header = SnapshotHeader {
        mode: 2,
        dx: grid.dim as u32,
        nx: grid.n as u32,
        dv: s.u.len() as u32,
        nv: 0,
        rv: 0.0,
        t: s.t,
        params,
        components: (s.u.len() + 2) as u32,
    };
    let mut payload = s.rho();
    for c in &s.u {
        payload.extend(c);
    }
    payload.extend(&s.theta);
    write_snapshot(path, &header, &payload)
}
