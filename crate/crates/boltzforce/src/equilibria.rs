//! Global and time-dependent Maxwellians, external forces and the
//! perturbative multiplier ℰ.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{SpatialGrid, VelocityGrid};

/// (ε, 𝚎, a, A, Λ, T₀) of the reference state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceParams {
    pub eps: f64,
    pub e_exp: f64,
    pub a: f64,
    pub big_a: f64,
    pub lambda: f64,
    pub t0: f64,
}

impl ReferenceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::invalid(format!("epsilon must lie in (0, 1], got {}", self.eps)));
        }
        if !(self.e_exp > 0.0 && self.e_exp < 1.0) {
            return Err(Error::invalid(format!("e must lie in (0, 1), got {}", self.e_exp)));
        }
        if self.a < 0.0 || self.big_a < 0.0 {
            return Err(Error::invalid("a and A must be non-negative"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("Lambda must be positive"));
        }
        if !(self.t0 > 0.0) {
            return Err(Error::invalid("T0 must be positive"));
        }
        Ok(())
    }

    /// ε^{1+𝚎}.
    pub fn eps_pow(&self) -> f64 {
        self.eps.powf(1.0 + self.e_exp)
    }

    /// h(t) = 1 + ε^{1+𝚎} a/(1+t), the inverse temperature of M(t).
    pub fn h(&self, t: f64) -> f64 {
        1.0 + self.eps_pow() * self.a / (1.0 + t)
    }

    /// ε^{1+𝚎} A/(1+t), the scalar exponent of M(t).
    pub fn scalar_exponent(&self, t: f64) -> f64 {
        self.eps_pow() * self.big_a / (1.0 + t)
    }

    /// Reference Maxwellian at one velocity.
    pub fn maxwellian(&self, t: f64, v2: f64, dim: usize) -> f64 {
        self.maxwellian_shape(t).value(v2, dim)
    }

    pub fn maxwellian_shape(&self, t: f64) -> Maxwellian {
        Maxwellian {
            beta: self.h(t),
            log_scale: -self.scalar_exponent(t),
        }
    }

    /// True when M(t) ≡ μ for all t.
    pub fn is_global(&self) -> bool {
        self.a == 0.0 && self.big_a == 0.0
    }
}

/// (2π)^{−d/2} exp(log_scale) exp(−β|v|²/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maxwellian {
    pub beta: f64,
    pub log_scale: f64,
}

impl Maxwellian {
    pub const GLOBAL: Maxwellian = Maxwellian {
        beta: 1.0,
        log_scale: 0.0,
    };

    pub fn ln(&self, v2: f64, dim: usize) -> f64 {
        self.log_scale - 0.5 * dim as f64 * (2.0 * PI).ln() - 0.5 * self.beta * v2
    }

    pub fn value(&self, v2: f64, dim: usize) -> f64 {
        self.ln(v2, dim).exp()
    }

    pub fn sample(&self, grid: &VelocityGrid) -> Vec<f64> {
        (0..grid.len()).map(|k| self.value(grid.norm2(k), grid.dim)).collect()
    }

    /// Exact ∫ M dv over ℝ^d.
    pub fn mass(&self, dim: usize) -> f64 {
        self.log_scale.exp() * self.beta.powf(-0.5 * dim as f64)
    }
}

/// μ(v) = (2π)^{−d/2} e^{−|v|²/2} at every node.
pub fn global_maxwellian(grid: &VelocityGrid) -> Vec<f64> {
    Maxwellian::GLOBAL.sample(grid)
}

/// M(t, v) at every node.
pub fn reference_maxwellian(t: f64, p: &ReferenceParams, grid: &VelocityGrid) -> Vec<f64> {
    p.maxwellian_shape(t).sample(grid)
}

/// Exact ∫ M(t, ·) dv.
pub fn reference_mass(t: f64, p: &ReferenceParams, dim: usize) -> f64 {
    p.maxwellian_shape(t).mass(dim)
}

/// The (a, A) pair that makes ℰ dominate ε^𝚎Λ(1+|v|²) up to the
/// −1/(4ε^𝚎) slack, for forces bounded by `c_e` up to time `t0`.
pub fn select_constants(t0: f64, c_e: f64, lambda: f64) -> (f64, f64) {
    let s = (1.0 + t0) * (1.0 + t0);
    let a = 8.0 * s * (lambda + 0.25 * c_e * c_e);
    let big_a = 2.0 * s * (lambda + a * c_e * c_e);
    (a, big_a)
}

/// ℰ(t, x, v) = ½[ε^𝚎(A + a|v|²/2)/(1+t)² − h(t) E·v].
pub fn perturbative_force(t: f64, e_dot_v: f64, v2: f64, p: &ReferenceParams) -> f64 {
    let s = (1.0 + t) * (1.0 + t);
    0.5 * (p.eps.powf(p.e_exp) * (p.big_a + 0.5 * p.a * v2) / s - p.h(t) * e_dot_v)
}

/// Right-hand side of the positivity bound for ℰ.
pub fn positivity_floor(v2: f64, p: &ReferenceParams) -> f64 {
    let ee = p.eps.powf(p.e_exp);
    let slack = if p.eps < 1.0 { 0.25 / ee } else { 0.0 };
    ee * p.lambda * (1.0 + v2) - slack
}

/// Built-in force shapes; every one is mean-zero on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ForceKind {
    Zero,
    SteadyShear,
    Rotating,
    Decaying { alpha: f64, base: Box<ForceKind> },
}

/// E_t(x) with velocity-space components, bounded by `c_e`.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceField {
    Catalog { kind: ForceKind, c_e: f64 },
    Tabulated(TabulatedForce),
    /// Another field with its spatial mean removed.
    Centered(Box<ForceField>, SpatialGrid),
}

/// Named catalog lookup.
pub fn builtin_forces(name: &str, c_e: f64, alpha: f64) -> Result<ForceField> {
    let kind = match name {
        "zero" => ForceKind::Zero,
        "steady-shear" => ForceKind::SteadyShear,
        "rotating" => ForceKind::Rotating,
        "decaying" => ForceKind::Decaying {
            alpha,
            base: Box::new(ForceKind::SteadyShear),
        },
        other => return Err(Error::invalid(format!("unknown force `{other}`"))),
    };
    if !(c_e >= 0.0) {
        return Err(Error::invalid("force amplitude C_E must be non-negative"));
    }
    Ok(ForceField::Catalog { kind, c_e })
}

impl ForceKind {
    /// Unit-amplitude value; for d_x = 1 the second coordinate reuses x₁.
    fn eval(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        match self {
            ForceKind::Zero => [0.0, 0.0],
            ForceKind::SteadyShear => [x[1].sin(), 0.0],
            ForceKind::Rotating => [(x[1] + t).sin(), (x[0] - t).cos()],
            ForceKind::Decaying { alpha, base } => {
                let s = (1.0 + t).powf(-alpha);
                let e = base.eval(t, x);
                [s * e[0], s * e[1]]
            }
        }
    }
}

impl ForceField {
    pub fn zero() -> Self {
        ForceField::Catalog {
            kind: ForceKind::Zero,
            c_e: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ForceField::Catalog { kind, c_e } => *kind == ForceKind::Zero || *c_e == 0.0,
            ForceField::Tabulated(t) => t.values.iter().all(|v| *v == 0.0),
            ForceField::Centered(inner, _) => inner.is_zero(),
        }
    }

    /// The declared bound C_E.
    pub fn bound(&self) -> f64 {
        match self {
            ForceField::Catalog { c_e, .. } => *c_e,
            ForceField::Tabulated(t) => t.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * 2f64.sqrt(),
            ForceField::Centered(inner, _) => 2.0 * inner.bound(),
        }
    }

    /// E_t on every node of `grid`, as `[component][x]` with two components.
    pub fn sample(&self, t: f64, grid: &SpatialGrid) -> [Vec<f64>; 2] {
        match self {
            ForceField::Catalog { kind, c_e } => {
                let mut out = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
                for i in 0..grid.len() {
                    let p = grid.point(i);
                    let x = if grid.dim == 1 { [p[0], p[0]] } else { p };
                    let e = kind.eval(t, x);
                    out[0][i] = c_e * e[0];
                    out[1][i] = c_e * e[1];
                }
                out
            }
            ForceField::Tabulated(tab) => tab.sample(t, grid),
            ForceField::Centered(inner, g) => {
                let mut s = inner.sample(t, g);
                for comp in s.iter_mut() {
                    let m = g.mean(comp);
                    comp.iter_mut().for_each(|v| *v -= m);
                }
                s
            }
        }
    }

    /// max over the grid of |E_t(x)|.
    pub fn sup_norm(&self, t: f64, grid: &SpatialGrid) -> f64 {
        let s = self.sample(t, grid);
        (0..grid.len())
            .map(|i| (s[0][i] * s[0][i] + s[1][i] * s[1][i]).sqrt())
            .fold(0.0, f64::max)
    }

    /// Spatial average of E_t.
    pub fn mean(&self, t: f64, grid: &SpatialGrid) -> [f64; 2] {
        let s = self.sample(t, grid);
        [grid.mean(&s[0]), grid.mean(&s[1])]
    }
}

/// E′ = E − ⟨E⟩ and w_t = ∫₀ᵗ ⟨E_s⟩ ds by trapezoid on `times`.
pub fn mean_zero_reduction(
    force: &ForceField,
    grid: &SpatialGrid,
    times: &[f64],
) -> (ForceField, Vec<[f64; 2]>) {
    let mut w = Vec::with_capacity(times.len());
    let mut acc = [0.0, 0.0];
    let mut prev: Option<(f64, [f64; 2])> = None;
    for &t in times {
        let m = force.mean(t, grid);
        if let Some((tp, mp)) = prev {
            let dt = t - tp;
            acc[0] += 0.5 * dt * (m[0] + mp[0]);
            acc[1] += 0.5 * dt * (m[1] + mp[1]);
        }
        w.push(acc);
        prev = Some((t, m));
    }
    (ForceField::Centered(Box::new(force.clone()), grid.clone()), w)
}

/// Force samples on (time × spatial grid), linear in time between rows.
///
/// CSV layout: one row per (t, component) with columns
/// `t, component, x_0, …, x_{N−1}` where x runs over the flat spatial
/// index (row-major, axis 0 slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedForce {
    pub times: Vec<f64>,
    pub n_x: usize,
    /// `[time][component][x]` flattened.
    pub values: Vec<f64>,
}

impl TabulatedForce {
    pub fn from_csv(path: &std::path::Path, grid: &SpatialGrid) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::invalid(format!("force table {}: {e}", path.display())))?;
        let n_x = grid.len();
        let mut rows: Vec<(f64, usize, Vec<f64>)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::invalid(format!("force table: {e}")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("force table: bad number `{s}`")))
            };
            if rec.len() != n_x + 2 {
                return Err(Error::invalid(format!(
                    "force table row has {} columns, expected {}",
                    rec.len(),
                    n_x + 2
                )));
            }
            let t = parse(&rec[0])?;
            let c = parse(&rec[1])? as usize;
            if c > 1 {
                return Err(Error::invalid("force table component must be 0 or 1"));
            }
            let vals = (2..rec.len()).map(|i| parse(&rec[i])).collect::<Result<Vec<_>>>()?;
            rows.push((t, c, vals));
        }
        let mut times: Vec<f64> = rows.iter().map(|r| r.0).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        if times.is_empty() {
            return Err(Error::invalid("force table is empty"));
        }
        let mut values = vec![0.0; times.len() * 2 * n_x];
        for (t, c, vals) in rows {
            let ti = times.iter().position(|&s| s == t).unwrap();
            values[(ti * 2 + c) * n_x..(ti * 2 + c + 1) * n_x].copy_from_slice(&vals);
        }
        Ok(TabulatedForce {
            times,
            n_x,
            values,
        })
    }

    fn sample(&self, t: f64, grid: &SpatialGrid) -> [Vec<f64>; 2] {
        let n = self.n_x;
        assert_eq!(n, grid.len(), "tabulated force grid mismatch");
        let nt = self.times.len();
        let (i0, i1, s) = if t <= self.times[0] || nt == 1 {
            (0, 0, 0.0)
        } else if t >= self.times[nt - 1] {
            (nt - 1, nt - 1, 0.0)
        } else {
            let i = self.times.partition_point(|&s| s <= t) - 1;
            let s = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
            (i, i + 1, s)
        };
        let row = |ti: usize, c: usize| &self.values[(ti * 2 + c) * n..(ti * 2 + c + 1) * n];
        let mix = |c: usize| -> Vec<f64> {
            row(i0, c)
                .iter()
                .zip(row(i1, c))
                .map(|(a, b)| (1.0 - s) * a + s * b)
                .collect()
        };
        [mix(0), mix(1)]
    }
}
