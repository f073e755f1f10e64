use boltzforce::equilibria::{builtin_forces, ForceField};
use boltzforce::fluid_solver::*;
use boltzforce::grids::{build_spatial_grid, SpatialGrid};

fn solver(grid: &SpatialGrid, nu: f64, kappa: f64, force: ForceField) -> FluidSolver {
    FluidSolver::new(
        grid.clone(),
        FluidParams {
            nu,
            kappa,
            force_factor: 1.0,
        },
        force,
    )
    .unwrap()
}

fn field(grid: &SpatialGrid, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            let p = grid.point(i);
            f(p[0], p[1])
        })
        .collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn taylor_green(grid: &SpatialGrid) -> Vec<Vec<f64>> {
    vec![
        field(grid, |x, y| x.sin() * y.cos()),
        field(grid, |x, y| -x.cos() * y.sin()),
    ]
}

#[test]
fn single_mode_heat_decay() {
    let g = build_spatial_grid(2, 16).unwrap();
    let kappa = 0.7;
    let s = solver(&g, 0.3, kappa, ForceField::zero());
    let mut st = FluidState::zeros(2, g.len());
    st.theta = field(&g, |x, _| 0.8 * x.sin());
    let traj = nsf_run(&s, st, 1.0, 0.05, 1).unwrap();
    for s in &traj.states {
        let exact = field(&g, |x, _| 0.8 * (-kappa * s.t).exp() * x.sin());
        assert!(max_diff(&s.theta, &exact) < 1e-8 * 0.8, "t {}", s.t);
    }
}

#[test]
fn taylor_green_decays_at_twice_the_viscosity() {
    let g = build_spatial_grid(2, 32).unwrap();
    let nu = 0.2;
    let s = solver(&g, nu, 0.1, ForceField::zero());
    let mut st = FluidState::zeros(2, g.len());
    st.u = taylor_green(&g);
    let e0 = kinetic_energy(&st.u, &g);
    let traj = nsf_run(&s, st, 1.0, 0.02, 5).unwrap();
    assert!(traj.max_divergence <= 1e-10);
    for s in &traj.states {
        let rate = (-2.0 * nu * s.t).exp();
        let e = kinetic_energy(&s.u, &g);
        assert!((e / e0 - rate * rate).abs() <= 1e-6 * rate * rate);
        let exact = taylor_green(&g);
        for c in 0..2 {
            let want: Vec<f64> = exact[c].iter().map(|x| x * rate).collect();
            assert!(max_diff(&s.u[c], &want) < 1e-6 * rate);
        }
    }
}

#[test]
fn stokes_response_to_steady_shear() {
    let g = build_spatial_grid(2, 16).unwrap();
    let (nu, ce) = (0.4, 1.5);
    let s = solver(&g, nu, 0.2, builtin_forces("steady-shear", ce, 2.0).unwrap());
    let traj = nsf_run(&s, FluidState::zeros(2, g.len()), 1.0, 0.05, 2).unwrap();
    for st in &traj.states {
        // mode (0, 1): u₁' = −ν u₁ + C_E
        let amp = ce * (1.0 - (-nu * st.t).exp()) / nu;
        let exact = field(&g, |_, y| amp * y.sin());
        assert!(max_diff(&st.u[0], &exact) < 1e-8, "t {}", st.t);
        assert!(st.u[1].iter().all(|x| x.abs() < 1e-12));
    }
}

#[test]
fn zero_data_zero_force_stays_zero() {
    let g = build_spatial_grid(2, 8).unwrap();
    let s = solver(&g, 0.5, 0.5, ForceField::zero());
    let traj = nsf_run(&s, FluidState::zeros(2, g.len()), 1.0, 0.1, 1).unwrap();
    for st in &traj.states {
        assert!(st.u.iter().flatten().chain(&st.theta).all(|x| *x == 0.0));
    }
}

#[test]
fn forced_taylor_green_is_second_order() {
    let g = build_spatial_grid(2, 16).unwrap();
    let s = solver(&g, 0.1, 0.1, builtin_forces("rotating", 1.0, 2.0).unwrap());
    let mut st = FluidState::zeros(2, g.len());
    st.u = taylor_green(&g);
    st.theta = field(&g, |x, y| (x + y).sin());
    let end = |dt: f64| nsf_run(&s, st.clone(), 1.0, dt, 0).unwrap().states.pop().unwrap();
    let fine = end(0.0025);
    let err = |dt: f64| {
        let e = end(dt);
        max_diff(&e.u[0], &fine.u[0]).max(max_diff(&e.theta, &fine.theta))
    };
    let (e1, e2) = (err(0.04), err(0.02));
    let ratio = e1 / e2;
    assert!((3.0..5.5).contains(&ratio), "ratio {ratio} ({e1:.3e} / {e2:.3e})");
}

#[test]
fn leray_projection_cases() {
    let g = build_spatial_grid(2, 16).unwrap();
    // gradient of a mean-zero potential is removed
    let grad = vec![field(&g, |x, y| x.cos() * y.sin()), field(&g, |x, y| x.sin() * y.cos())];
    let p = leray_project(&grad, &g);
    assert!(p.iter().flatten().all(|x| x.abs() < 1e-12));
    // divergence-free fields are fixed
    let tg = taylor_green(&g);
    let p = leray_project(&tg, &g);
    for c in 0..2 {
        assert!(max_diff(&p[c], &tg[c]) < 1e-12);
    }
    // û = (1, 1) on k = (1, 0) keeps only the transverse part (0, 1)
    let one = vec![field(&g, |x, _| x.cos()), field(&g, |x, _| x.cos())];
    let p = leray_project(&one, &g);
    assert!(p[0].iter().all(|x| x.abs() < 1e-12));
    assert!(max_diff(&p[1], &one[1]) < 1e-12);
    assert!(divergence(&p, &g).iter().all(|x| x.abs() < 1e-12));
}

#[test]
fn rho_follows_boussinesq() {
    let g = build_spatial_grid(1, 8).unwrap();
    let mut st = FluidState::zeros(2, g.len());
    st.theta = field(&g, |x, _| x.cos());
    assert!(st.rho().iter().zip(&st.theta).all(|(r, t)| r + t == 0.0));
}

#[test]
fn invalid_parameters_are_rejected() {
    let g = build_spatial_grid(2, 8).unwrap();
    for (nu, kappa) in [(0.0, 1.0), (1.0, -1.0), (f64::NAN, 1.0)] {
        let p = FluidParams {
            nu,
            kappa,
            force_factor: 1.0,
        };
        assert!(FluidSolver::new(g.clone(), p, ForceField::zero()).is_err());
    }
}
