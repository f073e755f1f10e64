//! Linearized operator L_M f = (1/√M)[Q(M, √M f) + Q(√M f, M)] as a dense
//! matrix, its kernel, projections and spectral gaps.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use super::interp::PointStencil;
use super::{cos_theta, dist, norm2, post_collision_velocities, CollisionKernel};
use crate::equilibria::Maxwellian;
use crate::error::{Error, Result};
use crate::grids::VelocityGrid;

/// Eigenvalues within `KERNEL_TOL · ρ(L)` of zero count as kernel.
pub const KERNEL_TOL: f64 = 1e-3;

/// Visits the raw row k of L_M as (column, coefficient) pairs.
fn visit_row(
    k: usize,
    m: &Maxwellian,
    kernel: &CollisionKernel,
    grid: &VelocityGrid,
    mut visit: impl FnMut(usize, f64),
) {
    let pts = grid.points();
    let d = grid.dim;
    let w = grid.weight();
    let v = pts[k];
    let ln_k = m.ln(norm2(&v), d);
    let mut nu = 0.0;
    for (j, vs) in pts.iter().enumerate() {
        if j == k {
            continue;
        }
        let bw = kernel.phi(dist(&v, vs)) * w;
        let ln_j = m.ln(norm2(vs), d);
        let mut bbar = 0.0;
        for (sig, ws) in kernel.sphere.directions.iter().zip(&kernel.sphere.weights) {
            let b = ws * kernel.angular.eval(cos_theta(&v, vs, sig));
            bbar += b;
            let (vp, vps) = post_collision_velocities(&v, vs, sig);
            if let Some(st) = PointStencil::new(grid, &vp, kernel.order) {
                let c = bw * b * (0.5 * (ln_j + m.ln(norm2(&vps), d))).exp();
                st.for_each(grid.n, |a, l| visit(a, c * l));
            }
            if let Some(st) = PointStencil::new(grid, &vps, kernel.order) {
                let c = bw * b * (0.5 * (ln_j + m.ln(norm2(&vp), d))).exp();
                st.for_each(grid.n, |a, l| visit(a, c * l));
            }
        }
        nu += bw * bbar * ln_j.exp();
        visit(j, -bw * bbar * (0.5 * (ln_k + ln_j)).exp());
    }
    visit(k, -nu);
}

/// L_M f evaluated node by node without forming the matrix.
pub fn linearized_l(f: &[f64], m: &Maxwellian, kernel: &CollisionKernel, grid: &VelocityGrid) -> Result<Vec<f64>> {
    if f.len() != grid.len() {
        return Err(Error::invalid("linearized_l: field length does not match the grid"));
    }
    kernel.check_grid(grid)?;
    Ok((0..grid.len())
        .into_par_iter()
        .map(|k| {
            let mut s = 0.0;
            visit_row(k, m, kernel, grid, |a, c| s += c * f[a]);
            s
        })
        .collect())
}

/// Raw (unsymmetrized) matrix of L_M.
pub fn raw_matrix(m: &Maxwellian, kernel: &CollisionKernel, grid: &VelocityGrid) -> Result<DMatrix<f64>> {
    kernel.check_grid(grid)?;
    let n = grid.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut row = vec![0.0; n];
            visit_row(k, m, kernel, grid, |a, c| row[a] += c);
            row
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(n, n, &flat))
}

/// Grid-orthonormal basis of ker L_M = span{1, v, |v|²}√M.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    /// n × (d+2), columns orthonormal in the plain Euclidean product
    /// (i.e. √w times the grid-orthonormal functions).
    pub vectors: DMatrix<f64>,
    pub weight: f64,
}

impl KernelBasis {
    pub fn new(m: &Maxwellian, grid: &VelocityGrid) -> KernelBasis {
        let n = grid.len();
        let d = grid.dim;
        let sw = grid.weight().sqrt();
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d + 2);
        let sm: Vec<f64> = (0..n).map(|k| (0.5 * m.ln(grid.norm2(k), d)).exp() * sw).collect();
        cols.push(sm.clone());
        for a in 0..d {
            cols.push((0..n).map(|k| grid.point(k)[a] * sm[k]).collect());
        }
        cols.push((0..n).map(|k| 0.5 * (m.beta * grid.norm2(k) - d as f64) * sm[k]).collect());
        // Two passes of modified Gram–Schmidt.
        for _ in 0..2 {
            for i in 0..cols.len() {
                for j in 0..i {
                    let p: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                    let cj = cols[j].clone();
                    cols[i].iter_mut().zip(&cj).for_each(|(a, b)| *a -= p * b);
                }
                let nrm = cols[i].iter().map(|a| a * a).sum::<f64>().sqrt();
                cols[i].iter_mut().for_each(|a| *a /= nrm);
            }
        }
        let flat: Vec<f64> = cols.into_iter().flatten().collect();
        KernelBasis {
            vectors: DMatrix::from_column_slice(n, d + 2, &flat),
            weight: grid.weight(),
        }
    }

    pub fn rank(&self) -> usize {
        self.vectors.ncols()
    }

    /// π f, the grid-orthogonal projection onto the kernel.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        let fv = DVector::from_column_slice(f);
        let c = self.vectors.tr_mul(&fv);
        (&self.vectors * c).as_slice().to_vec()
    }

    /// f − π f.
    pub fn project_perp(&self, f: &[f64]) -> Vec<f64> {
        let p = self.project(f);
        f.iter().zip(&p).map(|(a, b)| a - b).collect()
    }

    /// I − K Kᵀ.
    pub fn perp_matrix(&self) -> DMatrix<f64> {
        let n = self.vectors.nrows();
        DMatrix::identity(n, n) - &self.vectors * self.vectors.transpose()
    }
}

/// (π f, π⊥ f) with respect to the kernel of L_M.
pub fn kernel_projection(f: &[f64], m: &Maxwellian, grid: &VelocityGrid) -> (Vec<f64>, Vec<f64>) {
    let b = KernelBasis::new(m, grid);
    let p = b.project(f);
    let q = f.iter().zip(&p).map(|(a, b)| a - b).collect();
    (p, q)
}

/// Spectral summary of the symmetrized operator.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Eigenvalues, largest first.
    pub eigenvalues: Vec<f64>,
    pub radius: f64,
    /// Number of eigenvalues with |λ| ≤ KERNEL_TOL·ρ.
    pub near_zero: usize,
    /// Number of eigenvalues above KERNEL_TOL·ρ (zero for a dissipative L).
    pub positive: usize,
    /// max |λ|/ρ over the d+2 eigenvalues closest to zero.
    pub kernel_ratio: f64,
    /// −λ_{d+3}: distance from the kernel to the rest of the spectrum.
    pub gap: f64,
    /// Largest λ̂ with ⟨Lf, f⟩ ≤ −λ̂ ‖π⊥f‖²_γ on the grid.
    pub weighted_gap: f64,
}

/// The assembled operator and everything derived from it.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    pub maxwellian: Maxwellian,
    pub dim: usize,
    pub raw: DMatrix<f64>,
    /// ½(raw + rawᵀ).
    pub matrix: DMatrix<f64>,
    /// P⊥ matrix P⊥, exact kernel by construction.
    pub effective: DMatrix<f64>,
    pub nu: Vec<f64>,
    pub basis: KernelBasis,
    /// ‖raw − rawᵀ‖_F / ‖raw‖_F.
    pub raw_asymmetry: f64,
}

impl LinearizedOperator {
    pub fn new(m: &Maxwellian, kernel: &CollisionKernel, grid: &VelocityGrid) -> Result<Self> {
        let raw = raw_matrix(m, kernel, grid)?;
        let matrix = (&raw + raw.transpose()) * 0.5;
        let raw_asymmetry = (&raw - raw.transpose()).norm() / raw.norm().max(f64::MIN_POSITIVE);
        let basis = KernelBasis::new(m, grid);
        let p = basis.perp_matrix();
        let effective = &p * &matrix * &p;
        let effective = (&effective + effective.transpose()) * 0.5;
        let nu = (0..grid.len())
            .map(|k| {
                let mut s = 0.0;
                let v = grid.point(k);
                let w = grid.weight();
                for vs in grid.points() {
                    s += kernel.phi(dist(&v, vs)) * w * kernel.angular_total() * m.value(norm2(vs), grid.dim);
                }
                s
            })
            .collect();
        Ok(LinearizedOperator {
            maxwellian: *m,
            dim: grid.dim,
            raw,
            matrix,
            effective,
            nu,
            basis,
            raw_asymmetry,
        })
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(f)).as_slice().to_vec()
    }

    pub fn apply_effective(&self, f: &[f64]) -> Vec<f64> {
        (&self.effective * DVector::from_column_slice(f)).as_slice().to_vec()
    }

    /// K = L + ν, the compact part.
    pub fn compact_part(&self) -> DMatrix<f64> {
        let mut k = self.matrix.clone();
        for (i, nu) in self.nu.iter().enumerate() {
            k[(i, i)] += nu;
        }
        k
    }

    /// Eigen-analysis with the ⟨v⟩^γ weighted gap.
    pub fn spectrum(&self, gamma: f64, grid: &VelocityGrid) -> Result<Spectrum> {
        let n = self.len();
        let r = self.basis.rank();
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let radius = ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let near_zero = ev.iter().filter(|&&x| x.abs() <= KERNEL_TOL * radius).count();
        let positive = ev.iter().filter(|&&x| x > KERNEL_TOL * radius).count();
        let mut by_abs = ev.clone();
        by_abs.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
        let kernel_ratio = by_abs.iter().take(r).fold(0.0f64, |m, x| m.max(x.abs())) / radius;
        let gap = if n > r { -ev[r] } else { 0.0 };

        // min over f ⊥ ker of −⟨L f, f⟩/⟨W f, f⟩ as a generalized problem
        // with the kernel shifted away.
        let wts = grid.japanese_weight(gamma);
        let p = self.basis.perp_matrix();
        let kkt = &self.basis.vectors * self.basis.vectors.transpose();
        let wd = DMatrix::from_diagonal(&DVector::from_vec(wts));
        let b = &p * wd * &p + &kkt;
        let a = -&self.effective + &kkt * (10.0 * radius.max(1.0));
        let chol = b
            .cholesky()
            .ok_or_else(|| Error::numerical("weighted gap: metric is not positive definite"))?;
        let linv = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::numerical("weighted gap: singular factor"))?;
        let c = &linv * a * linv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let weighted_gap = SymmetricEigen::new(c).eigenvalues.iter().fold(f64::INFINITY, |m, &x| m.min(x));
        Ok(Spectrum {
            eigenvalues: ev,
            radius,
            near_zero,
            positive,
            kernel_ratio,
            gap,
            weighted_gap,
        })
    }

    /// Solves (L_eff − K Kᵀ) x = b, the kernel-regularized inverse.
    pub fn solve_perp(&self, b: &[f64]) -> Result<Vec<f64>> {
        let m = -(&self.effective - &self.basis.vectors * self.basis.vectors.transpose());
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::numerical("L restricted to the kernel complement is not negative definite"))?;
        let x = chol.solve(&DVector::from_column_slice(b));
        Ok(x.iter().map(|v| -v).collect())
    }
}

/// Rejects operators whose discrete kernel does not have dimension d+2.
pub fn check_resolution(spec: &Spectrum, dim: usize) -> Result<()> {
    let want = dim + 2;
    if spec.near_zero != want || spec.positive > 0 {
        return Err(Error::UnderResolved(format!(
            "{} eigenvalues within {:.0e} rho(L) of zero (expected {}), {} positive",
            spec.near_zero, KERNEL_TOL, want, spec.positive
        )));
    }
    Ok(())
}

/// Assembles L_{M(t)} and verifies the grid resolves its kernel.
pub fn assemble_l_matrix(
    t: f64,
    params: &crate::equilibria::ReferenceParams,
    kernel: &CollisionKernel,
    grid: &VelocityGrid,
) -> Result<(LinearizedOperator, Spectrum)> {
    let m = params.maxwellian_shape(t);
    let op = LinearizedOperator::new(&m, kernel, grid)?;
    let spec = op.spectrum(kernel.gamma, grid)?;
    check_resolution(&spec, grid.dim)?;
    Ok((op, spec))
}

/// ‖L_M − e^{s} h^{−(γ+d)/2} L_μ(√h grid)‖_F / ‖L_M‖_F. The identity is
/// exact on the discrete level because every stencil is scale-invariant.
pub fn scaling_defect(m: &Maxwellian, kernel: &CollisionKernel, grid: &VelocityGrid) -> Result<f64> {
    let h = m.beta;
    let lm = raw_matrix(m, kernel, grid)?;
    let g2 = grid.scaled(h.sqrt())?;
    let lmu = raw_matrix(&Maxwellian::GLOBAL, kernel, &g2)?;
    let factor = (m.log_scale - 0.5 * (kernel.gamma + grid.dim as f64) * h.ln()).exp();
    Ok((&lm - lmu * factor).norm() / lm.norm())
}
