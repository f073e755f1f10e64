//! Initial-data catalog and the trajectory driver.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{read_snapshot, write_snapshot, GlobalMoments, KineticSolver, KineticState, Mode};
use crate::diagnostics::{self, FunctionalSettings, NormReport};
use crate::equilibria::Maxwellian;
use crate::error::{Error, Result};
use crate::grids::SpatialGrid;

/// Macroscopic data (ρ, u, θ) of an infinitesimal Maxwellian.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidData {
    pub rho: Vec<f64>,
    /// Velocity components, `d_v` of them.
    pub u: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
}

/// Initial-data catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    Zero,
    /// Well-prepared Taylor–Green vortex with ρ = −θ:
    /// u = amp (sin x₁ cos x₂, −cos x₁ sin x₂), θ = amp_theta sin x₁ sin x₂.
    /// In d_x = 1 the vortex degenerates to the shear u = (0, amp sin x₁)
    /// and θ = amp_theta sin x₁.
    TaylorGreen { amp: f64, amp_theta: f64 },
    /// Smooth non-equilibrium profile with random coefficients.
    Smooth { amp: f64, seed: u64 },
    /// Perturbative snapshot file (μ-based).
    File { path: PathBuf },
}

impl InitialData {
    /// Fluid part, if the data are an infinitesimal Maxwellian.
    pub fn fluid(&self, space: &SpatialGrid, dv: usize) -> Option<FluidData> {
        let nx = space.len();
        match self {
            InitialData::Zero => Some(FluidData {
                rho: vec![0.0; nx],
                u: vec![vec![0.0; nx]; dv],
                theta: vec![0.0; nx],
            }),
            InitialData::TaylorGreen { amp, amp_theta } => {
                let mut u = vec![vec![0.0; nx]; dv];
                let mut theta = vec![0.0; nx];
                for i in 0..nx {
                    let p = space.point(i);
                    if space.dim == 1 {
                        if dv > 1 {
                            u[1][i] = amp * p[0].sin();
                        }
                        theta[i] = amp_theta * p[0].sin();
                    } else {
                        u[0][i] = amp * p[0].sin() * p[1].cos();
                        u[1][i] = -amp * p[0].cos() * p[1].sin();
                        theta[i] = amp_theta * p[0].sin() * p[1].sin();
                    }
                }
                let rho = theta.iter().map(|t| -t).collect();
                Some(FluidData { rho, u, theta })
            }
            _ => None,
        }
    }

    /// μ-based perturbation f_in with F = μ + ε√μ f_in.
    pub fn sample(&self, solver: &KineticSolver) -> Result<Vec<f64>> {
        let (space, vel) = (&solver.space, &solver.vel);
        let nx = space.len();
        if let Some(fl) = self.fluid(space, vel.dim) {
            return Ok(diagnostics::infinitesimal_maxwellian(&fl.rho, &fl.u, &fl.theta, &Maxwellian::GLOBAL, vel));
        }
        match self {
            InitialData::Smooth { amp, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let c: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mut f = vec![0.0; vel.len() * nx];
                for k in 0..vel.len() {
                    let v = vel.point(k);
                    let v2 = vel.norm2(k);
                    let sm = Maxwellian::GLOBAL.value(v2, vel.dim).sqrt();
                    for x in 0..nx {
                        let p = space.point(x);
                        let y = if space.dim > 1 { p[1] } else { 0.0 };
                        let a = c[0] * p[0].sin() + c[1] * (p[0] + y).cos();
                        let b = c[2] * (p[0] - 2.0 * y).sin() + c[3] * y.cos();
                        let poly = c[4] + c[5] * v[0] + c[6] * v[vel.dim - 1] * v[0] + c[7] * (v2 - vel.dim as f64);
                        f[k * nx + x] = amp * (a * poly + b * v[0] * (-0.1 * v2).exp()) * sm;
                    }
                }
                Ok(f)
            }
            InitialData::File { path } => {
                let (h, payload) = read_snapshot(path)?;
                if h.mode != 0
                    || h.dx as usize != space.dim
                    || h.nx as usize != space.n
                    || h.dv as usize != vel.dim
                    || h.nv as usize != vel.n
                    || h.components != 1
                {
                    return Err(Error::invalid(format!(
                        "initial-data snapshot {} does not match the configured grids",
                        path.display()
                    )));
                }
                Ok(payload)
            }
            _ => unreachable!("fluid data handled above"),
        }
    }
}

/// Driver settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub t_end: f64,
    /// Fixed step; `None` uses the solver's default.
    pub dt: Option<f64>,
    /// Snapshot every this many steps (0 = only the final state).
    pub n_out: usize,
    /// Norm report every this many steps.
    pub report_every: usize,
    pub diagnostics: FunctionalSettings,
    /// Also keep the macroscopic fields at every snapshot.
    pub keep_moments: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            t_end: 1.0,
            dt: None,
            n_out: 0,
            report_every: 1,
            diagnostics: FunctionalSettings::default(),
            keep_moments: true,
            output_dir: None,
        }
    }
}

/// Output of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    /// Time of every step boundary, starting at 0.
    pub times: Vec<f64>,
    pub global: Vec<GlobalMoments>,
    pub reports: Vec<NormReport>,
    pub snapshots: Vec<KineticState>,
    pub macro_fields: Vec<(f64, diagnostics::MacroFields)>,
    /// Largest inner-sweep count seen.
    pub max_sweeps: usize,
    /// Times at which ε‖f‖_∞ exceeded 1 (outside the perturbative regime).
    pub flagged: Vec<f64>,
    /// Diagnostic of a numerical abort; the last valid state is the last
    /// snapshot.
    pub aborted: Option<String>,
}

impl Trajectory {
    pub fn final_state(&self) -> &KineticState {
        self.snapshots.last().expect("trajectory holds the initial state")
    }

    pub fn residuals(&self, eps: f64) -> Result<diagnostics::MomentResiduals> {
        diagnostics::global_moment_check(&self.times, &self.global, eps)
    }
}

/// Integrates from `initial` to `settings.t_end`.
pub fn run(solver: &mut KineticSolver, initial: KineticState, settings: &RunSettings) -> Result<Trajectory> {
    if !(settings.t_end > initial.t) {
        return Err(Error::invalid("t_end must exceed the initial time"));
    }
    if settings.report_every == 0 {
        return Err(Error::invalid("report_every must be positive"));
    }
    let dt0 = match settings.dt {
        Some(d) if d > 0.0 => d,
        Some(_) => return Err(Error::invalid("dt must be positive")),
        None => solver.default_dt()?,
    };
    let span = settings.t_end - initial.t;
    let n_steps = (span / dt0 - 1e-9).ceil().max(1.0) as usize;
    let dt = span / n_steps as f64;
    if let Some(dir) = &settings.output_dir {
        std::fs::create_dir_all(dir)?;
    }
    let eps = solver.params.eps;
    let mut traj = Trajectory {
        dt,
        times: vec![initial.t],
        global: vec![solver.global_moments(&initial)],
        reports: Vec::new(),
        snapshots: Vec::new(),
        macro_fields: Vec::new(),
        max_sweeps: 0,
        flagged: Vec::new(),
        aborted: None,
    };
    let mut state = initial;
    record(solver, &state, &mut traj, settings, 0, true)?;
    for step in 1..=n_steps {
        let next = match solver.step(&state, dt) {
            Ok(s) => s,
            Err(e @ Error::Numerical(_)) => {
                traj.aborted = Some(e.to_string());
                save_snapshot(solver, &state, settings, "last_valid")?;
                if traj.snapshots.last().is_none_or(|s| s.t != state.t) {
                    traj.snapshots.push(state);
                }
                return Ok(traj);
            }
            Err(e) => return Err(e),
        };
        state = next;
        traj.max_sweeps = traj.max_sweeps.max(solver.last_sweeps);
        traj.times.push(state.t);
        traj.global.push(solver.global_moments(&state));
        let sup = state.data.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if state.mode == Mode::Perturbative && eps * sup > 1.0 {
            traj.flagged.push(state.t);
        }
        let snap = step == n_steps || (settings.n_out > 0 && step % settings.n_out == 0);
        let report = step == n_steps || step % settings.report_every == 0;
        if report {
            let r = traj.residuals(eps)?;
            let last = |v: &Vec<f64>| v.last().copied().unwrap_or(0.0);
            let res = [last(&r.r0), last(&r.r1), last(&r.r2)];
            traj.reports
                .push(diagnostics::norm_report(solver, &state, &settings.diagnostics, res)?);
        }
        if snap {
            record(solver, &state, &mut traj, settings, step, false)?;
        }
    }
    Ok(traj)
}

fn record(
    solver: &mut KineticSolver,
    state: &KineticState,
    traj: &mut Trajectory,
    settings: &RunSettings,
    step: usize,
    first: bool,
) -> Result<()> {
    if first {
        traj.reports
            .push(diagnostics::norm_report(solver, state, &settings.diagnostics, [0.0; 3])?);
    }
    if settings.keep_moments {
        traj.macro_fields.push((state.t, diagnostics::moments(solver, state)));
    }
    save_snapshot(solver, state, settings, &format!("snap_{step:06}"))?;
    traj.snapshots.push(state.clone());
    Ok(())
}

fn save_snapshot(solver: &KineticSolver, state: &KineticState, settings: &RunSettings, name: &str) -> Result<()> {
    if let Some(dir) = &settings.output_dir {
        write_snapshot(&dir.join(format!("{name}.bin")), &solver.snapshot_header(state), &state.data)?;
    }
    Ok(())
}

/// Initial state from the catalog in μ-based (corollary) form, rewritten
/// around M(0), and the size ‖f_M − f_μ‖_{L²} of that rewrite.
pub fn initial_state(solver: &KineticSolver, data: &InitialData) -> Result<(KineticState, f64)> {
    let f_in = data.sample(solver)?;
    let state = solver.from_mu_based(&f_in);
    let diff: Vec<f64> = state.data.iter().zip(&f_in).map(|(a, b)| a - b).collect();
    let gap = diagnostics::l2_squared(&diff, &solver.space, &solver.vel).sqrt();
    Ok((state, gap))
}
