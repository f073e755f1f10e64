//! Run configuration, experiment orchestration and report emission.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::linear::{scaling_defect, KERNEL_TOL};
use crate::collision::{bilinear_q, Angular, CollisionKernel, LinearizedOperator, DEFAULT_ORDER};
use crate::diagnostics::{self, FunctionalSettings, NormReport};
use crate::equilibria::{builtin_forces, select_constants, ForceField, Maxwellian, ReferenceParams, TabulatedForce};
use crate::error::{Error, Result};
use crate::fluid_solver::{self, FluidParams, FluidSolver, FluidState, TransportCoefficients};
use crate::grids::{build_spatial_grid, build_sphere_quadrature, build_velocity_grid, sphere_area, SpatialGrid, VelocityGrid};
use crate::kinetic_solver::{self, ForceScheme, InitialData, KineticSolver, RunSettings, StepSettings, Trajectory};

// ----- configuration -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dx: usize,
    pub nx: usize,
    pub dv: usize,
    pub nv: usize,
    pub rv: f64,
    pub n_sigma: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dx: 2,
            nx: 8,
            dv: 2,
            nv: 16,
            rv: 6.0,
            n_sigma: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub gamma: f64,
    pub c_phi: f64,
    /// Angular part; `None` means b ≡ 1/|S^{d−1}|.
    pub angular: Option<Angular>,
    /// Interpolation order for off-grid values (2 or 4).
    pub order: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            gamma: 1.0,
            c_phi: 1.0,
            angular: None,
            order: DEFAULT_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Strictly decreasing list for sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default = "half")]
    pub e: f64,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub t0: f64,
    /// Defaults to the selected constants for the configured force.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big_a: Option<f64>,
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

impl ReferenceConfig {
    /// The ε values of a sweep (or the single ε).
    pub fn eps_list(&self) -> Vec<f64> {
        match (&self.epsilons, self.epsilon) {
            (Some(l), _) => l.clone(),
            (None, Some(e)) => vec![e],
            (None, None) => Vec::new(),
        }
    }

    /// The ε of a single run: `epsilon`, else the first list entry.
    pub fn single_eps(&self) -> f64 {
        self.epsilon.unwrap_or_else(|| self.eps_list()[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForceConfig {
    /// Catalog name: zero, steady-shear, rotating, decaying.
    pub name: String,
    pub c_e: f64,
    /// Decay exponent of the `decaying` force.
    pub alpha: f64,
    /// Tabulated force (CSV); overrides `name`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Remove the spatial mean of the force.
    pub center: bool,
}

impl Default for ForceConfig {
    fn default() -> Self {
        ForceConfig {
            name: "zero".into(),
            c_e: 1.0,
            alpha: 2.0,
            file: None,
            center: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Fixed kinetic step; default min(0.5εΔx/R_v, 0.1ε²/λ̂).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub n_out: usize,
    pub n_reuse: usize,
    pub report_every: usize,
    /// Number of matched comparison intervals in a sweep.
    pub n_compare: usize,
    pub force_scheme: ForceScheme,
    pub inner_tol: f64,
    pub max_sweeps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        let s = StepSettings::default();
        IntegratorConfig {
            dt: None,
            n_out: 10,
            n_reuse: s.n_reuse,
            report_every: 1,
            n_compare: 10,
            force_scheme: s.force_scheme,
            inner_tol: s.inner_tol,
            max_sweeps: s.max_sweeps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluidConfig {
    pub force_factor: f64,
    /// Overrides of the computed transport coefficients.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl Default for FluidConfig {
    fn default() -> Self {
        FluidConfig {
            force_factor: 1.0,
            nu: None,
            kappa: None,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

/// Everything a run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub force: ForceConfig,
    #[serde(default = "default_initial")]
    pub initial: InitialData,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub diagnostics: FunctionalSettings,
    #[serde(default)]
    pub fluid: FluidConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_initial() -> InitialData {
    InitialData::Zero
}

/// Reads and validates a TOML config.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    // relative file references are taken relative to the config
    if let Some(dir) = path.parent() {
        if let Some(f) = &mut cfg.force.file {
            if f.is_relative() {
                *f = dir.join(&*f);
            }
        }
        if let InitialData::File { path: p } = &mut cfg.initial {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        if inner.contains("missing field `reference`") {
            return Error::config("reference.epsilon", "missing (no [reference] section)");
        }
        Error::config(path, inner.lines().next().unwrap_or("").trim().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Serializes a config back to TOML.
pub fn config_to_toml(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::invalid(e.to_string()))
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let r = &self.reference;
        if r.epsilon.is_none() && r.epsilons.is_none() {
            return Err(Error::config("reference.epsilon", "missing"));
        }
        if let Some(e) = r.epsilon {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::config("reference.epsilon", "must lie in (0, 1]"));
            }
        }
        if let Some(l) = &r.epsilons {
            if l.is_empty() {
                return Err(Error::config("reference.epsilons", "must not be empty"));
            }
            if l.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
                return Err(Error::config("reference.epsilons", "entries must lie in (0, 1]"));
            }
            if l.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::config("reference.epsilons", "must be strictly decreasing"));
            }
        }
        if !(r.e > 0.0 && r.e < 1.0) {
            return Err(Error::config("reference.e", "must lie in (0, 1)"));
        }
        if !(r.lambda > 0.0) {
            return Err(Error::config("reference.lambda", "must be positive"));
        }
        if !(r.t0 > 0.0) {
            return Err(Error::config("reference.t0", "must be positive"));
        }
        for (k, v) in [("reference.a", r.a), ("reference.big_a", r.big_a)] {
            if v.is_some_and(|x| !(x >= 0.0)) {
                return Err(Error::config(k, "must be non-negative"));
            }
        }
        let g = &self.grids;
        if !(1..=2).contains(&g.dx) {
            return Err(Error::config("grids.dx", "must be 1 or 2"));
        }
        if !(2..=3).contains(&g.dv) || g.dv < g.dx {
            return Err(Error::config("grids.dv", "must be 2 or 3 and at least grids.dx"));
        }
        if g.nx < 4 {
            return Err(Error::config("grids.nx", "must be at least 4"));
        }
        if g.nv < 5 {
            return Err(Error::config("grids.nv", "must be at least 5"));
        }
        if !(g.rv > 0.0) {
            return Err(Error::config("grids.rv", "must be positive"));
        }
        if g.n_sigma < 2 {
            return Err(Error::config("grids.n_sigma", "must be at least 2"));
        }
        let k = &self.kernel;
        if !(0.0..=1.0).contains(&k.gamma) {
            return Err(Error::config("kernel.gamma", "must lie in [0, 1]"));
        }
        if !(k.c_phi > 0.0) {
            return Err(Error::config("kernel.c_phi", "must be positive"));
        }
        if k.order != 2 && k.order != 4 {
            return Err(Error::config("kernel.order", "must be 2 or 4"));
        }
        if !(self.force.c_e >= 0.0) {
            return Err(Error::config("force.c_e", "must be non-negative"));
        }
        if self.force.file.is_none() && !["zero", "steady-shear", "rotating", "decaying"].contains(&self.force.name.as_str()) {
            return Err(Error::config("force.name", format!("unknown force `{}`", self.force.name)));
        }
        let it = &self.integrator;
        if it.dt.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::config("integrator.dt", "must be positive"));
        }
        if it.n_reuse == 0 {
            return Err(Error::config("integrator.n_reuse", "must be positive"));
        }
        if it.report_every == 0 {
            return Err(Error::config("integrator.report_every", "must be positive"));
        }
        if it.n_compare == 0 {
            return Err(Error::config("integrator.n_compare", "must be positive"));
        }
        if !(it.inner_tol > 0.0) || it.max_sweeps == 0 {
            return Err(Error::config("integrator.inner_tol", "tolerance and sweep cap must be positive"));
        }
        self.diagnostics
            .twist
            .validate()
            .map_err(|e| Error::config("diagnostics.twist", e.to_string()))?;
        if self.diagnostics.s > 4 {
            return Err(Error::config("diagnostics.s", "at most 4"));
        }
        if self.fluid.dt.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::config("fluid.dt", "must be positive"));
        }
        if self.fluid.nu.is_some_and(|d| !(d > 0.0)) || self.fluid.kappa.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::config("fluid.nu", "overrides must be positive"));
        }
        Ok(())
    }

    pub fn spatial_grid(&self) -> Result<SpatialGrid> {
        build_spatial_grid(self.grids.dx, self.grids.nx)
    }

    pub fn velocity_grid(&self) -> Result<VelocityGrid> {
        build_velocity_grid(self.grids.dv, self.grids.rv, self.grids.nv)
    }

    pub fn collision_kernel(&self) -> Result<CollisionKernel> {
        let sphere = build_sphere_quadrature(self.grids.dv, self.grids.n_sigma)?;
        let angular = self.kernel.angular.unwrap_or(Angular::Constant {
            b0: 1.0 / sphere_area(self.grids.dv),
        });
        CollisionKernel::new(self.kernel.gamma, self.kernel.c_phi, angular, sphere, self.kernel.order)
    }

    pub fn force_field(&self, space: &SpatialGrid) -> Result<ForceField> {
        let f = match &self.force.file {
            Some(p) => ForceField::Tabulated(TabulatedForce::from_csv(p, space)?),
            None => builtin_forces(&self.force.name, self.force.c_e, self.force.alpha)?,
        };
        Ok(if self.force.center {
            ForceField::Centered(Box::new(f), space.clone())
        } else {
            f
        })
    }

    /// Reference parameters at one ε; missing (a, A) come from the
    /// constant selection for the configured force bound.
    pub fn params(&self, eps: f64) -> ReferenceParams {
        let r = &self.reference;
        let bound = match &self.force.file {
            Some(_) => self.force.c_e,
            None if self.force.name == "zero" => 0.0,
            None => self.force.c_e,
        };
        let (a, big_a) = select_constants(r.t0, bound, r.lambda);
        ReferenceParams {
            eps,
            e_exp: r.e,
            a: r.a.unwrap_or(a),
            big_a: r.big_a.unwrap_or(big_a),
            lambda: r.lambda,
            t0: r.t0,
        }
    }

    pub fn step_settings(&self) -> StepSettings {
        let it = &self.integrator;
        StepSettings {
            n_reuse: it.n_reuse,
            force_scheme: it.force_scheme,
            inner_tol: it.inner_tol,
            max_sweeps: it.max_sweeps,
            ..StepSettings::default()
        }
    }

    pub fn kinetic_solver(&self, eps: f64) -> Result<KineticSolver> {
        let space = self.spatial_grid()?;
        let force = self.force_field(&space)?;
        KineticSolver::new(
            space,
            self.velocity_grid()?,
            self.params(eps),
            self.collision_kernel()?,
            force,
            self.step_settings(),
        )
    }

    /// Transport coefficients from the configured kernel and velocity
    /// grid, with config overrides applied.
    pub fn transport(&self) -> Result<TransportCoefficients> {
        let mut tc = match (self.fluid.nu, self.fluid.kappa) {
            (Some(nu), Some(kappa)) => TransportCoefficients {
                nu,
                kappa,
                source_kernel_overlap: 0.0,
            },
            _ => fluid_solver::transport_coefficients(&self.collision_kernel()?, &self.velocity_grid()?)?,
        };
        if let Some(nu) = self.fluid.nu {
            tc.nu = nu;
        }
        if let Some(k) = self.fluid.kappa {
            tc.kappa = k;
        }
        Ok(tc)
    }
}

// ----- report emission ---------------------------------------------------------

/// A named table of string cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn numeric(name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: rows.into_iter().map(|r| r.iter().map(|x| fmt_num(*x)).collect()).collect(),
        }
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x:.12e}")
}

/// Writes `<name>.csv` and a gnuplot-ready `<name>.dat` for every table
/// plus `summary.json`. Files are written to temporaries and renamed; on
/// failure the temporaries are removed.
pub fn emit_report<S: Serialize>(tables: &[Table], summary: &S, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut pending: Vec<(PathBuf, PathBuf)> = Vec::new();
    let result = (|| -> Result<()> {
        for t in tables {
            let csv_path = dir.join(format!("{}.csv", t.name));
            let tmp = dir.join(format!(".{}.csv.tmp", t.name));
            {
                let mut w = csv::Writer::from_path(&tmp).map_err(|e| Error::Io(e.into()))?;
                w.write_record(&t.header).map_err(|e| Error::Io(e.into()))?;
                for r in &t.rows {
                    w.write_record(r).map_err(|e| Error::Io(e.into()))?;
                }
                w.flush()?;
            }
            pending.push((tmp, csv_path));
            let dat_path = dir.join(format!("{}.dat", t.name));
            let tmp = dir.join(format!(".{}.dat.tmp", t.name));
            std::fs::write(&tmp, gnuplot_text(t))?;
            pending.push((tmp, dat_path));
        }
        let tmp = dir.join(".summary.json.tmp");
        diagnostics::write_json(&tmp, summary)?;
        pending.push((tmp, dir.join("summary.json")));
        Ok(())
    })();
    if let Err(e) = result {
        for (tmp, _) in &pending {
            let _ = std::fs::remove_file(tmp);
        }
        return Err(e);
    }
    for (tmp, dst) in pending {
        std::fs::rename(&tmp, &dst)?;
        written.push(dst);
    }
    Ok(written)
}

/// Whitespace-separated columns with a commented header.
pub fn gnuplot_text(t: &Table) -> String {
    let mut s = format!("# {}\n", t.header.join(" "));
    for r in &t.rows {
        s.push_str(&r.join(" "));
        s.push('\n');
    }
    s
}

/// Turns every CSV in `dir` into a `.dat` file and writes `plots.gp`
/// plotting each numeric column against the first.
pub fn export_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::invalid(format!("no CSV files in {}", dir.display())));
    }
    let mut script = String::from("set datafile commentschars '#'\nset key outside\n");
    let mut out = Vec::new();
    for p in entries {
        let mut rdr = csv::Reader::from_path(&p).map_err(|e| Error::Io(e.into()))?;
        let header: Vec<String> = rdr.headers().map_err(|e| Error::Io(e.into()))?.iter().map(String::from).collect();
        let rows: Vec<Vec<String>> = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Io(e.into()))?;
        let name = p.file_stem().unwrap().to_string_lossy().to_string();
        let t = Table { name: name.clone(), header: header.clone(), rows };
        let dat = dir.join(format!("{name}.dat"));
        std::fs::write(&dat, gnuplot_text(&t))?;
        out.push(dat);
        script.push_str(&format!("set title '{name}'\nplot "));
        let cols: Vec<String> = (2..=header.len())
            .map(|c| format!("'{name}.dat' using 1:{c} with lines title '{}'", header[c - 1]))
            .collect();
        script.push_str(&cols.join(", \\\n     "));
        script.push_str("\npause -1\n");
    }
    let gp = dir.join("plots.gp");
    std::fs::write(&gp, script)?;
    out.push(gp);
    Ok(out)
}

// ----- single runs ---------------------------------------------------------------

/// JSON summary of a kinetic run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KineticSummary {
    pub eps: f64,
    pub params: ReferenceParams,
    pub dt: f64,
    pub steps: usize,
    pub spectral_radius: f64,
    pub gap: f64,
    pub weighted_gap: f64,
    pub initial_discrepancy: f64,
    pub max_residuals: [f64; 3],
    pub relative_mass_drift: f64,
    pub decay: diagnostics::DecayReport,
    pub max_inner_sweeps: usize,
    pub flagged_steps: usize,
    pub aborted: Option<String>,
}

/// Runs the kinetic solver for one ε and returns the trajectory.
pub fn run_kinetic(cfg: &RunConfig, eps: f64, output_dir: Option<&Path>) -> Result<(KineticSolver, Trajectory, f64)> {
    let mut solver = cfg.kinetic_solver(eps)?;
    let (state, gap) = kinetic_solver::initial_state(&solver, &cfg.initial)?;
    let settings = RunSettings {
        t_end: cfg.reference.t0,
        dt: cfg.integrator.dt,
        n_out: cfg.integrator.n_out,
        report_every: cfg.integrator.report_every,
        diagnostics: cfg.diagnostics,
        keep_moments: true,
        output_dir: output_dir.map(|d| d.join("snapshots")),
    };
    let traj = kinetic_solver::run(&mut solver, state, &settings)?;
    Ok((solver, traj, gap))
}

pub fn norm_table(reports: &[NormReport]) -> Table {
    let n = reports.first().map_or(0, |r| r.twisted.len());
    let header = NormReport::header(n);
    Table {
        name: "norms".into(),
        header,
        rows: reports.iter().map(|r| r.row().iter().map(|x| fmt_num(*x)).collect()).collect(),
    }
}

fn macro_table(name: &str, fields: &[(f64, diagnostics::MacroFields)], space: &SpatialGrid) -> Table {
    let dv = fields.first().map_or(0, |f| f.1.u.len());
    let mut header = vec!["t".to_string(), "x1".into(), "x2".into(), "rho".into()];
    for c in 0..dv {
        header.push(format!("u{}", c + 1));
    }
    header.push("theta".into());
    let mut rows = Vec::new();
    for (t, m) in fields {
        for i in 0..space.len() {
            let p = space.point(i);
            let mut r = vec![*t, p[0], p[1], m.rho[i]];
            for c in 0..dv {
                r.push(m.u[c][i]);
            }
            r.push(m.theta[i]);
            rows.push(r.iter().map(|x| fmt_num(*x)).collect());
        }
    }
    Table {
        name: name.into(),
        header,
        rows,
    }
}

/// `simulate-kinetic`: runs at the config's ε and writes norms, global
/// moments, macroscopic fields, snapshots and a summary.
pub fn simulate_kinetic(cfg: &RunConfig, dir: &Path) -> Result<KineticSummary> {
    let eps = cfg.reference.single_eps();
    let (mut solver, traj, gap) = run_kinetic(cfg, eps, Some(dir))?;
    let spec = solver.spectrum()?;
    let res = if traj.times.len() >= 2 {
        traj.residuals(eps)?
    } else {
        Default::default()
    };
    let times: Vec<f64> = traj.reports.iter().map(|r| r.t).collect();
    let norms: Vec<f64> = traj.reports.iter().map(|r| r.hs_eps).collect();
    let summary = KineticSummary {
        eps,
        params: solver.params,
        dt: traj.dt,
        steps: traj.times.len() - 1,
        spectral_radius: spec.radius,
        gap: spec.gap,
        weighted_gap: spec.weighted_gap,
        initial_discrepancy: gap,
        max_residuals: res.max_abs(),
        relative_mass_drift: res.max_abs()[0] / res.mass0.max(f64::MIN_POSITIVE),
        decay: diagnostics::decay_monitor(&times, &norms)?,
        max_inner_sweeps: traj.max_sweeps,
        flagged_steps: traj.flagged.len(),
        aborted: traj.aborted.clone(),
    };
    let global = Table::numeric(
        "global_moments",
        &["t", "mass", "p1", "p2", "p3", "energy", "force_mass1", "force_mass2", "force_work"],
        traj.times.iter().zip(&traj.global).map(|(t, g)| {
            vec![
                *t,
                g.mass,
                g.momentum[0],
                g.momentum[1],
                g.momentum[2],
                g.energy,
                g.force_mass[0],
                g.force_mass[1],
                g.force_work,
            ]
        }),
    );
    let tables = vec![norm_table(&traj.reports), global, macro_table("moments", &traj.macro_fields, &solver.space)];
    emit_report(&tables, &summary, dir)?;
    if let Some(msg) = &traj.aborted {
        return Err(Error::numerical(msg.clone()));
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluidSummary {
    pub nu: f64,
    pub kappa: f64,
    pub force_factor: f64,
    pub dt: f64,
    pub max_divergence: f64,
    pub cfl_warning: bool,
}

/// Fluid data of the configured initial condition.
pub fn fluid_initial(cfg: &RunConfig, space: &SpatialGrid) -> Result<FluidState> {
    let fl = cfg
        .initial
        .fluid(space, cfg.grids.dv)
        .ok_or_else(|| Error::config("initial.kind", "the fluid solver needs well-prepared (infinitesimal Maxwellian) data"))?;
    Ok(FluidState {
        t: 0.0,
        u: fl.u,
        theta: fl.theta,
    })
}

/// Configured fluid step, else min(T₀/(20 n_compare), Δx/2).
fn fluid_dt(cfg: &RunConfig, space: &SpatialGrid) -> f64 {
    cfg.fluid
        .dt
        .unwrap_or_else(|| (cfg.reference.t0 / (cfg.integrator.n_compare as f64 * 20.0)).min(0.5 * space.spacing))
}

/// `simulate-fluid`: integrates the limit system from the configured
/// well-prepared data.
pub fn simulate_fluid(cfg: &RunConfig, dir: &Path) -> Result<FluidSummary> {
    let space = cfg.spatial_grid()?;
    let tc = cfg.transport()?;
    let params = FluidParams {
        nu: tc.nu,
        kappa: tc.kappa,
        force_factor: cfg.fluid.force_factor,
    };
    let solver = FluidSolver::new(space.clone(), params, cfg.force_field(&space)?)?;
    let init = fluid_initial(cfg, &space)?;
    let dt = fluid_dt(cfg, &space);
    let n_out = cfg.integrator.n_out.max(1);
    let traj = fluid_solver::nsf_run(&solver, init, cfg.reference.t0, dt, n_out)?;
    let snap = dir.join("snapshots");
    std::fs::create_dir_all(&snap)?;
    for (i, s) in traj.states.iter().enumerate() {
        fluid_solver::write_fluid_snapshot(&snap.join(format!("fluid_{i:06}.bin")), s, &space, cfg.params(cfg.reference.single_eps()))?;
    }
    let energy = Table::numeric(
        "fluid_energy",
        &["t", "kinetic_energy", "max_divergence", "theta_max"],
        traj.states.iter().map(|s| {
            vec![
                s.t,
                fluid_solver::kinetic_energy(&s.u, &space),
                fluid_solver::divergence(&s.u, &space).iter().fold(0.0f64, |m, x| m.max(x.abs())),
                s.theta.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            ]
        }),
    );
    let fields: Vec<(f64, diagnostics::MacroFields)> = traj
        .states
        .iter()
        .map(|s| {
            (
                s.t,
                diagnostics::MacroFields {
                    rho: s.rho(),
                    u: s.u.clone(),
                    theta: s.theta.clone(),
                },
            )
        })
        .collect();
    let summary = FluidSummary {
        nu: tc.nu,
        kappa: tc.kappa,
        force_factor: params.force_factor,
        dt: traj.dt,
        max_divergence: traj.max_divergence,
        cfl_warning: traj.cfl_warning,
    };
    emit_report(&[energy, macro_table("fluid_moments", &fields, &space)], &summary, dir)?;
    Ok(summary)
}

// ----- ε-sweep ---------------------------------------------------------------------

/// Column order of the convergence CSV.
pub const CONVERGENCE_COLUMNS: [&str; 13] = [
    "eps",
    "err_rho",
    "err_u",
    "err_theta",
    "boussinesq",
    "incompressibility",
    "order_rho",
    "order_u",
    "order_theta",
    "initial_discrepancy",
    "dt",
    "steps",
    "status",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub err_rho: f64,
    pub err_u: f64,
    pub err_theta: f64,
    /// ‖ρ_ε + √(2/d) θ_ε‖ in L²(t, x).
    pub boussinesq: f64,
    /// ‖∇·u_ε‖ in L²(t, x).
    pub incompressibility: f64,
    pub order_rho: Option<f64>,
    pub order_u: Option<f64>,
    pub order_theta: Option<f64>,
    /// ‖f_M(0) − f_μ(0)‖ of the corollary-mode initialization.
    pub initial_discrepancy: f64,
    pub dt: f64,
    pub steps: usize,
    /// "ok" or the abort diagnostic.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub nu: f64,
    pub kappa: f64,
    pub fluid_dt: f64,
    pub fluid_max_divergence: f64,
    /// ‖ρ + √(2/d)·√(d/2)θ‖ of the fluid reference (zero by construction).
    pub fluid_boussinesq: f64,
    pub compare_times: Vec<f64>,
}

impl ConvergenceTable {
    pub fn to_table(&self) -> Table {
        let o = |x: Option<f64>| x.map_or_else(String::new, fmt_num);
        Table {
            name: "convergence".into(),
            header: CONVERGENCE_COLUMNS.iter().map(|s| s.to_string()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| {
                    vec![
                        fmt_num(r.eps),
                        fmt_num(r.err_rho),
                        fmt_num(r.err_u),
                        fmt_num(r.err_theta),
                        fmt_num(r.boussinesq),
                        fmt_num(r.incompressibility),
                        o(r.order_rho),
                        o(r.order_u),
                        o(r.order_theta),
                        fmt_num(r.initial_discrepancy),
                        fmt_num(r.dt),
                        r.steps.to_string(),
                        r.status.clone(),
                    ]
                })
                .collect(),
        }
    }
}

/// Checks ∇·u = 0, ρ + θ = 0 and zero means of well-prepared data.
pub fn check_well_prepared(data: &kinetic_solver::FluidData, space: &SpatialGrid) -> Result<()> {
    let div = fluid_solver::divergence(&data.u, space).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let bous = data.rho.iter().zip(&data.theta).fold(0.0f64, |m, (r, t)| m.max((r + t).abs()));
    let means = [space.mean(&data.rho), space.mean(&data.theta)]
        .into_iter()
        .chain(data.u.iter().map(|c| space.mean(c)))
        .fold(0.0f64, |m, x| m.max(x.abs()));
    if div > 1e-10 || bous > 1e-12 || means > 1e-12 {
        return Err(Error::config(
            "initial",
            format!("data are not well prepared (div {div:.1e}, rho+theta {bous:.1e}, means {means:.1e})"),
        ));
    }
    Ok(())
}

/// Kinetic runs at every ε against one fluid reference.
pub fn eps_sweep(cfg: &RunConfig) -> Result<ConvergenceTable> {
    let space = cfg.spatial_grid()?;
    let dv = cfg.grids.dv;
    let data = cfg
        .initial
        .fluid(&space, dv)
        .ok_or_else(|| Error::config("initial.kind", "a sweep needs well-prepared data"))?;
    check_well_prepared(&data, &space)?;
    let t_end = cfg.reference.t0;
    let n_cmp = cfg.integrator.n_compare;
    let tc = cfg.transport()?;
    let fparams = FluidParams {
        nu: tc.nu,
        kappa: tc.kappa,
        force_factor: cfg.fluid.force_factor,
    };
    let fsolver = FluidSolver::new(space.clone(), fparams, cfg.force_field(&space)?)?;
    let fdt0 = fluid_dt(cfg, &space);
    let per = ((t_end / n_cmp as f64) / fdt0 - 1e-9).ceil().max(1.0) as usize;
    let fl = fluid_solver::nsf_run(&fsolver, fluid_initial(cfg, &space)?, t_end, t_end / (per * n_cmp) as f64, per)?;
    let compare_times: Vec<f64> = fl.states.iter().map(|s| s.t).collect();
    let scale_t = (dv as f64 / 2.0).sqrt();

    let rows: Vec<ConvergenceRow> = cfg
        .reference
        .eps_list()
        .par_iter()
        .map(|&eps| sweep_row(cfg, eps, &fl.states, scale_t).unwrap_or_else(|e| poisoned_row(eps, e)))
        .collect();
    let mut rows = rows;
    for i in 1..rows.len() {
        let (a, b) = (rows[i - 1].clone(), &mut rows[i]);
        let ord = |x: f64, y: f64| {
            let o = (y / x).ln() / (b.eps / a.eps).ln();
            o.is_finite().then_some(o)
        };
        b.order_rho = ord(a.err_rho, b.err_rho);
        b.order_u = ord(a.err_u, b.err_u);
        b.order_theta = ord(a.err_theta, b.err_theta);
    }
    Ok(ConvergenceTable {
        rows,
        nu: tc.nu,
        kappa: tc.kappa,
        fluid_dt: fl.dt,
        fluid_max_divergence: fl.max_divergence,
        fluid_boussinesq: 0.0,
        compare_times,
    })
}

fn poisoned_row(eps: f64, e: Error) -> ConvergenceRow {
    ConvergenceRow {
        eps,
        err_rho: f64::NAN,
        err_u: f64::NAN,
        err_theta: f64::NAN,
        boussinesq: f64::NAN,
        incompressibility: f64::NAN,
        order_rho: None,
        order_u: None,
        order_theta: None,
        initial_discrepancy: f64::NAN,
        dt: f64::NAN,
        steps: 0,
        status: e.to_string(),
    }
}

fn sweep_row(cfg: &RunConfig, eps: f64, fluid: &[FluidState], scale_t: f64) -> Result<ConvergenceRow> {
    let mut solver = cfg.kinetic_solver(eps)?;
    let (state, gap) = kinetic_solver::initial_state(&solver, &cfg.initial)?;
    let t_end = cfg.reference.t0;
    let n_cmp = fluid.len() - 1;
    let dt0 = match cfg.integrator.dt {
        Some(d) => d,
        None => solver.default_dt()?,
    };
    let per = ((t_end / n_cmp as f64) / dt0 - 1e-9).ceil().max(1.0) as usize;
    let settings = RunSettings {
        t_end,
        dt: Some(t_end / (per * n_cmp) as f64),
        n_out: per,
        report_every: per,
        diagnostics: cfg.diagnostics,
        keep_moments: true,
        output_dir: None,
    };
    let traj = kinetic_solver::run(&mut solver, state, &settings)?;
    if let Some(msg) = traj.aborted {
        return Err(Error::numerical(msg));
    }
    let space = &solver.space;
    let sq = |v: &[f64]| space.integrate(&v.iter().map(|x| x * x).collect::<Vec<_>>());
    let tw = t_end / n_cmp as f64;
    let (mut er, mut eu, mut et, mut eb, mut ed) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, ((tk, m), f)) in traj.macro_fields.iter().zip(fluid).enumerate() {
        if (tk - f.t).abs() > 1e-9 {
            return Err(Error::numerical(format!("kinetic and fluid output times differ ({tk} vs {})", f.t)));
        }
        let w = if i == 0 || i == n_cmp { 0.5 * tw } else { tw };
        let rho = f.rho();
        er += w * sq(&diff(&m.rho, &rho, 1.0));
        for (c, uc) in m.u.iter().enumerate() {
            eu += w * sq(&diff(uc, &f.u[c], 1.0));
        }
        et += w * sq(&diff(&m.theta, &f.theta, scale_t));
        let b: Vec<f64> = m.rho.iter().zip(&m.theta).map(|(r, t)| r + t / scale_t).collect();
        eb += w * sq(&b);
        ed += w * sq(&fluid_solver::divergence(&m.u, space));
    }
    Ok(ConvergenceRow {
        eps,
        err_rho: er.sqrt(),
        err_u: eu.sqrt(),
        err_theta: et.sqrt(),
        boussinesq: eb.sqrt(),
        incompressibility: ed.sqrt(),
        order_rho: None,
        order_u: None,
        order_theta: None,
        initial_discrepancy: gap,
        dt: traj.dt,
        steps: traj.times.len() - 1,
        status: "ok".into(),
    })
}

fn diff(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - s * y).collect()
}

// ----- operator checks -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
            detail: detail.into(),
        }
    }

    fn failed(name: &str, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            value: f64::NAN,
            threshold: f64::NAN,
            pass: false,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorReport {
    pub dv: usize,
    pub nv: usize,
    pub rv: f64,
    pub n_sigma: usize,
    pub gamma: f64,
    pub checks: Vec<Check>,
    pub all_pass: bool,
    pub seconds: f64,
    pub extra: BTreeMap<String, f64>,
}

/// Random smooth velocity profile: polynomial times a shifted Gaussian.
pub fn random_smooth(grid: &VelocityGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let shift: Vec<f64> = (0..grid.dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let width = rng.gen_range(0.8..1.2);
    (0..grid.len())
        .map(|k| {
            let v = grid.point(k);
            let mut r2 = 0.0;
            for a in 0..grid.dim {
                r2 += (v[a] - shift[a]).powi(2);
            }
            let poly = c[0] + c[1] * v[0] + c[2] * v[grid.dim - 1] + c[3] * v[0] * v[grid.dim - 1] + c[4] * grid.norm2(k) * 0.25;
            (poly + 0.3 * c[5]) * (-0.5 * r2 / (width * width)).exp()
        })
        .collect()
}

/// max over {1, v, |v|²} of |∫Q(f,f)φ| / ‖f‖²_{L²} for one f.
pub fn invariant_defect(f: &[f64], kernel: &CollisionKernel, grid: &VelocityGrid) -> Result<f64> {
    let q = bilinear_q(f, f, kernel, grid)?;
    let w = grid.weight();
    let nrm: f64 = f.iter().map(|x| x * x).sum::<f64>() * w;
    let mut worst = 0.0f64;
    let mut test = |phi: &dyn Fn(usize) -> f64| {
        let s: f64 = q.iter().enumerate().map(|(k, x)| x * phi(k)).sum::<f64>() * w;
        worst = worst.max(s.abs());
    };
    test(&|_| 1.0);
    for a in 0..grid.dim {
        test(&|k| grid.point(k)[a]);
    }
    test(&|k| grid.norm2(k));
    Ok(worst / nrm)
}

/// Kernel dimension, symmetry, gap, Dirichlet inequality, collision
/// invariants, Q(μ,μ), collision-frequency bounds and the scaling relation.
pub fn check_operators(cfg: &RunConfig) -> Result<OperatorReport> {
    let start = Instant::now();
    let grid = cfg.velocity_grid()?;
    let kernel = cfg.collision_kernel()?;
    let d = grid.dim;
    let mut checks = Vec::new();
    let mut extra = BTreeMap::new();
    let op = LinearizedOperator::new(&Maxwellian::GLOBAL, &kernel, &grid)?;
    let spec = op.spectrum(kernel.gamma, &grid)?;
    extra.insert("spectral_radius".into(), spec.radius);
    extra.insert("gap".into(), spec.gap);
    extra.insert("weighted_gap".into(), spec.weighted_gap);
    extra.insert("raw_asymmetry".into(), op.raw_asymmetry);
    extra.insert("kernel_ratio".into(), spec.kernel_ratio);
    let kernel_ok = spec.near_zero == d + 2;
    checks.push(Check {
        name: "kernel_dimension".into(),
        value: spec.near_zero as f64,
        threshold: (d + 2) as f64,
        pass: kernel_ok,
        detail: if kernel_ok {
            format!("{} eigenvalues within {KERNEL_TOL:.0e} of zero relative to the spectral radius", d + 2)
        } else {
            crate::collision::linear::check_resolution(&spec, d).unwrap_err().to_string()
        },
    });
    let negative = spec.positive == 0 && spec.eigenvalues.iter().skip(d + 2).all(|x| *x < 0.0);
    checks.push(Check {
        name: "negative_off_kernel".into(),
        value: spec.eigenvalues.get(d + 2).copied().unwrap_or(f64::NAN),
        threshold: 0.0,
        pass: negative,
        detail: "largest eigenvalue after the kernel block".into(),
    });
    let sym = (&op.effective - op.effective.transpose()).norm() / op.effective.norm();
    checks.push(Check::at_most(
        "self_adjointness",
        sym,
        1e-12,
        format!("operator in use; raw discretization asymmetry {:.2e}", op.raw_asymmetry),
    ));

    // Dirichlet inequality on random f.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let wts = grid.japanese_weight(kernel.gamma);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let f: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lf = op.apply_effective(&f);
        let dir: f64 = lf.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
        let p = op.basis.project_perp(&f);
        let wn: f64 = p.iter().zip(&wts).map(|(x, w)| w * x * x).sum();
        worst = worst.max(dir + spec.weighted_gap * wn * (1.0 - 1e-9));
    }
    checks.push(Check {
        name: "spectral_gap".into(),
        value: spec.weighted_gap,
        threshold: 0.0,
        pass: spec.weighted_gap > 0.0 && worst <= 0.0,
        detail: format!("<Lf,f> + lambda |f_perp|^2_gamma max over 200 samples = {worst:.3e}"),
    });

    // collision invariants
    let mut inv = 0.0f64;
    for _ in 0..20 {
        let f = random_smooth(&grid, &mut rng);
        inv = inv.max(invariant_defect(&f, &kernel, &grid)?);
    }
    checks.push(Check::at_most("collision_invariants", inv, 1e-4, "max |<Q(f,f), phi>| / |f|^2 over 20 smooth f"));
    let mu = Maxwellian::GLOBAL.sample(&grid);
    let q = bilinear_q(&mu, &mu, &kernel, &grid)?;
    let qmu = (q.iter().map(|x| x * x).sum::<f64>() / mu.iter().map(|x| x * x).sum::<f64>()).sqrt();
    checks.push(Check::at_most("q_mu_mu", qmu, 1e-4, "|Q(mu,mu)| / |mu|"));

    // collision frequency against <v>^gamma on the inner half of the box
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for k in 0..grid.len() {
        if grid.norm2(k).sqrt() <= 0.5 * grid.radius {
            let r = op.nu[k] / (1.0 + grid.norm2(k)).powf(0.5 * kernel.gamma);
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    extra.insert("nu_lower".into(), lo);
    extra.insert("nu_upper".into(), hi);
    if kernel.gamma == 0.0 {
        // ∫μ = 1 up to the Gaussian tail beyond R_v
        let exact = kernel.c_phi * kernel.angular_total();
        let spread = op.nu.iter().fold(0.0f64, |m, x| m.max((x - exact).abs())) / exact;
        checks.push(Check::at_most(
            "nu_constant",
            spread,
            1e-6,
            "gamma = 0: max |nu - C_Phi b0 |S|| relative",
        ));
    } else {
        checks.push(Check {
            name: "nu_bounds".into(),
            value: hi / lo,
            threshold: f64::INFINITY,
            pass: lo > 0.0 && hi.is_finite(),
            detail: format!("nu / <v>^gamma in [{lo:.4}, {hi:.4}] for |v| <= R/2"),
        });
    }

    // scaling relation at the selected constants
    let p = cfg.params(cfg.reference.single_eps());
    let mut sc = 0.0f64;
    for t in [0.0, 1.0, p.t0] {
        sc = sc.max(scaling_defect(&p.maxwellian_shape(t), &kernel, &grid)?);
    }
    checks.push(Check::at_most("scaling_relation", sc, 5e-3, "max over t in {0, 1, T0}"));

    let all_pass = checks.iter().all(|c| c.pass);
    Ok(OperatorReport {
        dv: d,
        nv: grid.n,
        rv: grid.radius,
        n_sigma: kernel.sphere.len(),
        gamma: kernel.gamma,
        checks,
        all_pass,
        seconds: start.elapsed().as_secs_f64(),
        extra,
    })
}

/// Runs a check and reports an unconstructible operator as a failed check.
pub fn check_operators_report(cfg: &RunConfig) -> OperatorReport {
    match check_operators(cfg) {
        Ok(r) => r,
        Err(e) => OperatorReport {
            dv: cfg.grids.dv,
            nv: cfg.grids.nv,
            rv: cfg.grids.rv,
            n_sigma: cfg.grids.n_sigma,
            gamma: cfg.kernel.gamma,
            checks: vec![Check::failed("assembly", e.to_string())],
            all_pass: false,
            seconds: 0.0,
            extra: BTreeMap::new(),
        },
    }
}
