use boltzforce::collision::KernelBasis;
use boltzforce::diagnostics::*;
use boltzforce::equilibria::ReferenceParams;
use boltzforce::grids::{build_spatial_grid, build_velocity_grid, SpatialGrid, VelocityGrid};
use boltzforce::kinetic_solver::GlobalMoments;

fn grids(dx: usize) -> (SpatialGrid, VelocityGrid) {
    (build_spatial_grid(dx, 8).unwrap(), build_velocity_grid(2, 6.0, 16).unwrap())
}

fn mu_params() -> ReferenceParams {
    ReferenceParams {
        eps: 0.5,
        e_exp: 0.5,
        a: 0.0,
        big_a: 0.0,
        lambda: 1.0,
        t0: 1.0,
    }
}

/// f(x, v) = a(x) g(v), laid out [velocity][x].
fn separable(space: &SpatialGrid, vel: &VelocityGrid, a: impl Fn([f64; 2]) -> f64, g: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
    let mut f = Vec::with_capacity(space.len() * vel.len());
    for k in 0..vel.len() {
        let gv = g(vel.point(k));
        for i in 0..space.len() {
            f.push(a(space.point(i)) * gv);
        }
    }
    f
}

fn smooth(space: &SpatialGrid, vel: &VelocityGrid) -> Vec<f64> {
    separable(
        space,
        vel,
        |p| p[0].sin() + 0.3 * (2.0 * p[1]).cos(),
        |v| (1.0 + 0.5 * v[0] - 0.2 * v[1] * v[1]) * (-0.25 * (v[0] * v[0] + v[1] * v[1])).exp(),
    )
}

#[test]
fn order_zero_norm_is_l2() {
    let (space, vel) = grids(2);
    let f = smooth(&space, &vel);
    let n = sobolev_eps_norm(&f, 0, 0.3, &space, &vel).unwrap();
    assert!((n * n - l2_squared(&f, &space, &vel)).abs() < 1e-12 * n * n);
}

#[test]
fn zero_field_has_zero_norms() {
    let (space, vel) = grids(2);
    let f = vec![0.0; space.len() * vel.len()];
    for s in 0..=3 {
        assert_eq!(sobolev_eps_norm(&f, s, 0.5, &space, &vel).unwrap(), 0.0);
    }
    let w = TwistWeights::default();
    assert_eq!(twisted_functional(&f, &[0, 0], 0, w, 0.5, &space, &vel).unwrap(), 0.0);
    assert_eq!(full_functional(&f, &FunctionalSettings::default(), 0.5, &space, &vel).unwrap(), 0.0);
}

#[test]
fn single_mode_h1_norm() {
    // ‖∂ₓ sin x‖ = ‖sin x‖ exactly on the grid, so with ε = 0 the ℋ¹ norm is √2 ‖f‖
    let (space, vel) = grids(1);
    let f = separable(&space, &vel, |p| p[0].sin(), |v| (-0.5 * (v[0] * v[0] + v[1] * v[1])).exp());
    let h1 = sobolev_eps_norm(&f, 1, 0.0, &space, &vel).unwrap();
    let l2 = l2_squared(&f, &space, &vel).sqrt();
    assert!((h1 - 2f64.sqrt() * l2).abs() < 1e-12 * l2);
}

#[test]
fn norms_grow_with_order() {
    let (space, vel) = grids(2);
    let f = smooth(&space, &vel);
    let mut prev = 0.0;
    for s in 0..=4 {
        let n = sobolev_eps_norm(&f, s, 0.5, &space, &vel).unwrap();
        assert!(n >= prev);
        prev = n;
    }
    assert!(sobolev_eps_norm(&f, 5, 0.5, &space, &vel).is_err());
}

#[test]
fn untwisted_functional_is_sum_of_squares() {
    let (space, vel) = grids(2);
    let f = smooth(&space, &vel);
    let w = TwistWeights { p: 2.0, q: 1.0, r: 0.0 };
    let eps = 0.4;
    for i in 0..2 {
        let q = twisted_functional(&f, &[0, 0], i, w, eps, &space, &vel).unwrap();
        let mut l = vec![0, 0];
        l[i] = 1;
        let mut j = vec![0, 0];
        j[i] = 1;
        let a = l2_squared(&mixed_derivative(&f, &l, &[], &space, &vel), &space, &vel);
        let b = l2_squared(&mixed_derivative(&f, &[0, 0], &j, &space, &vel), &space, &vel);
        assert!(q >= 0.0);
        assert!((q - (2.0 * a + eps * eps * b)).abs() < 1e-12 * q);
    }
}

#[test]
fn twisted_functional_is_nonnegative_for_admissible_weights() {
    let (space, vel) = grids(2);
    let f = smooth(&space, &vel);
    for r in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        let w = TwistWeights { p: 4.0, q: 1.0, r };
        assert!(twisted_functional(&f, &[1, 0], 1, w, 0.7, &space, &vel).unwrap() >= 0.0);
    }
}

#[test]
fn twist_weight_validation() {
    let (space, vel) = grids(2);
    let f = smooth(&space, &vel);
    let bad = [
        TwistWeights { p: 1.0, q: 1.0, r: 1.5 },
        TwistWeights { p: 1.0, q: 2.0, r: 0.0 },
        TwistWeights { p: 0.0, q: 0.0, r: 0.0 },
        TwistWeights { p: -1.0, q: 1.0, r: 0.0 },
    ];
    for w in bad {
        assert!(w.validate().is_err(), "{w:?}");
        assert!(twisted_functional(&f, &[0, 0], 0, w, 0.5, &space, &vel).is_err());
    }
    assert!(TwistWeights::default().validate().is_ok());
    assert!(twisted_functional(&f, &[0, 0], 2, TwistWeights::default(), 0.5, &space, &vel).is_err());
}

#[test]
fn velocity_derivative_exact_on_quartics() {
    let (space, vel) = grids(1);
    let nx = space.len();
    for axis in 0..2 {
        let p = |v: f64| 0.3 - v + 0.7 * v * v - 0.05 * v.powi(3) + 0.01 * v.powi(4);
        let dp = |v: f64| -1.0 + 1.4 * v - 0.15 * v * v + 0.04 * v.powi(3);
        let f = separable(&space, &vel, |x| 1.0 + x[0].cos(), |v| p(v[axis]));
        let d = v_derivative4(&f, axis, nx, &vel);
        let want = separable(&space, &vel, |x| 1.0 + x[0].cos(), |v| dp(v[axis]));
        let err = d.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "axis {axis}: {err}");
    }
}

#[test]
fn multi_index_enumeration() {
    assert_eq!(multi_indices(2, 0), vec![vec![0, 0]]);
    assert_eq!(multi_indices(2, 2).len(), 3);
    assert_eq!(multi_indices(3, 2).len(), 6);
    assert!(multi_indices(2, 3).iter().all(|m| m.iter().sum::<usize>() == 3));
}

#[test]
fn decay_monitor_recovers_power_law() {
    let times: Vec<f64> = (0..50).map(|i| 0.2 * i as f64).collect();
    let norms: Vec<f64> = times.iter().map(|t| 3.0 * (1.0 + t).powf(-0.75)).collect();
    let r = decay_monitor(&times, &norms).unwrap();
    assert!((r.exponent + 0.75).abs() < 1e-10);
    assert!(r.r_squared > 1.0 - 1e-12);
    assert!(r.bounded && r.monotone_nonincreasing);
    assert_eq!(r.initial, 3.0);
    assert!(r.c_hat < r.initial);
}

#[test]
fn decay_monitor_flags_growth() {
    let times = [0.0, 1.0, 2.0, 3.0];
    let norms = [1.0, 1.2, 1.1, 1.3];
    let r = decay_monitor(&times, &norms).unwrap();
    assert!(!r.monotone_nonincreasing);
    assert_eq!(r.c_hat, 1.3);
    assert!(r.exponent > 0.0);
    assert!(decay_monitor(&times, &norms[..2]).is_err());
    assert!(decay_monitor(&[], &[]).is_err());
}

#[test]
fn linear_fit_degenerate_inputs() {
    assert_eq!(linear_fit(&[(1.0, 2.0)]), (0.0, 0.0));
    assert_eq!(linear_fit(&[(1.0, 2.0), (1.0, 3.0)]), (0.0, 0.0));
    let (s, r2) = linear_fit(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]);
    assert!((s - 2.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
}

#[test]
fn moment_check_balances_forcing() {
    // momentum grows by ε ∫ force_mass, energy by 2ε ∫ force_work
    let eps = 0.5;
    let times: Vec<f64> = (0..11).map(|i| 0.1 * i as f64).collect();
    let samples: Vec<GlobalMoments> = times
        .iter()
        .map(|&t| GlobalMoments {
            mass: 2.0,
            momentum: [eps * t, -eps * t, 0.25],
            energy: 1.0 + 2.0 * eps * 3.0 * t,
            force_mass: [1.0, -1.0],
            force_work: 3.0,
        })
        .collect();
    let r = global_moment_check(&times, &samples, eps).unwrap();
    let [a, b, c] = r.max_abs();
    assert!(a < 1e-14 && b < 1e-14 && c < 1e-13, "{a} {b} {c}");
    assert_eq!(r.mass0, 2.0);
    assert!(global_moment_check(&times[..1], &samples[..1], eps).is_err());
}

#[test]
fn poincare_trivial_cases() {
    let (space, vel) = grids(2);
    let m = mu_params().maxwellian_shape(0.0);
    let basis = KernelBasis::new(&m, &vel);
    let zero = vec![0.0; space.len() * vel.len()];
    assert_eq!(poincare_fluid_check(&zero, &basis, &space, &vel), (0.0, 0.0, 0.0));
    // x-independent √μ: no gradient, the global-moment term carries it all
    let flat = separable(&space, &vel, |_| 1.0, |v| (-0.25 * (v[0] * v[0] + v[1] * v[1])).exp());
    let (lhs, rhs, ratio) = poincare_fluid_check(&flat, &basis, &space, &vel);
    assert!(lhs > 0.0);
    assert!((lhs - rhs).abs() < 1e-10 * lhs && (ratio - 1.0).abs() < 1e-10);
    // mean-zero in x: the ratio is bounded by the inverse of the smallest wavenumber²
    let wave = separable(&space, &vel, |p| p[0].sin(), |v| (1.0 + v[1]) * (-0.25 * (v[0] * v[0] + v[1] * v[1])).exp());
    let (_, _, ratio) = poincare_fluid_check(&wave, &basis, &space, &vel);
    assert!(ratio <= 1.0 + 1e-10);
}

#[test]
fn perp_norm_vanishes_on_kernel() {
    let (space, vel) = grids(2);
    let m = mu_params().maxwellian_shape(0.0);
    let basis = KernelBasis::new(&m, &vel);
    let f = separable(&space, &vel, |p| 1.0 + p[1].sin(), |v| {
        let v2 = v[0] * v[0] + v[1] * v[1];
        (0.5 + v[0] - 0.2 * v2) * (-0.25 * v2).exp()
    });
    assert!(perp_weighted_norm(&f, &basis, 1.0, &space, &vel) < 1e-10 * l2_squared(&f, &space, &vel).sqrt());
    let g = smooth(&space, &vel);
    assert!(perp_weighted_norm(&g, &basis, 1.0, &space, &vel) > 0.0);
}

#[test]
fn norm_report_header_matches_row() {
    let r = NormReport {
        t: 0.0,
        l2: 1.0,
        hs_eps: 1.0,
        functional: 1.0,
        twisted: vec![0.1, 0.2],
        perp_gamma: 0.0,
        r0: 0.0,
        r1: 0.0,
        r2: 0.0,
        poincare: 0.0,
        gap: 0.0,
    };
    let h = NormReport::header(2);
    assert_eq!(h.len(), r.row().len());
    assert_eq!(h[4], "q0_1");
    assert_eq!(h.last().unwrap(), "gap");
}
