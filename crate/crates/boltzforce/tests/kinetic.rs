use boltzforce::collision::CollisionKernel;
use boltzforce::diagnostics::{infinitesimal_maxwellian, moments};
use boltzforce::equilibria::{builtin_forces, ForceField, Maxwellian, ReferenceParams};
use boltzforce::grids::{build_spatial_grid, build_sphere_quadrature, build_velocity_grid};
use boltzforce::kinetic_solver::*;
use boltzforce::Error;

fn params(eps: f64) -> ReferenceParams {
    ReferenceParams {
        eps,
        e_exp: 0.5,
        a: 0.0,
        big_a: 0.0,
        lambda: 1.0,
        t0: 1.0,
    }
}

fn solver_with(dx: usize, nx: usize, nv: usize, rv: f64, eps: f64, force: ForceField) -> KineticSolver {
    let kernel = CollisionKernel::hard_spheres(build_sphere_quadrature(2, 8).unwrap()).unwrap();
    KineticSolver::new(
        build_spatial_grid(dx, nx).unwrap(),
        build_velocity_grid(2, rv, nv).unwrap(),
        params(eps),
        kernel,
        force,
        StepSettings::default(),
    )
    .unwrap()
}

fn solver(force: ForceField) -> KineticSolver {
    solver_with(2, 8, 16, 6.0, 0.5, force)
}

fn tg(amp: f64) -> InitialData {
    InitialData::TaylorGreen { amp, amp_theta: amp }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[test]
fn rhs_vanishes_for_zero_data_without_force_or_source() {
    let mut s = solver(ForceField::zero());
    let z = KineticState::zeros(0.0, Mode::Perturbative, s.nv(), s.nx());
    assert!(s.rhs_perturbative(&z).unwrap().iter().all(|x| *x == 0.0));
}

#[test]
fn rhs_full_vanishes_at_global_equilibrium() {
    let s = solver(ForceField::zero());
    let mu = Maxwellian::GLOBAL.sample(&s.vel);
    let nx = s.nx();
    let data: Vec<f64> = mu.iter().flat_map(|m| std::iter::repeat_n(*m, nx)).collect();
    let st = KineticState {
        t: 0.0,
        mode: Mode::Full,
        data,
    };
    let r = s.rhs_full(&st).unwrap();
    // collision quadrature tolerance at N_v = 16, scaled by 1/ε²
    assert!(max_abs(&r) < 1e-3 * max_abs(&mu) / (0.5 * 0.5), "{}", max_abs(&r));
}

/// max |rhs_full/ε − √M rhs_perturbative| relative to max |√M rhs_perturbative|.
fn rhs_mismatch(nv: usize) -> f64 {
    let mut s = solver_with(2, 8, nv, 6.0, 0.5, builtin_forces("steady-shear", 1.0, 2.0).unwrap());
    let (st, _) = initial_state(&s, &tg(0.1)).unwrap();
    let rp = s.rhs_perturbative(&st).unwrap();
    let rf = s.rhs_full(&s.to_full(&st)).unwrap();
    // F = M + ε√M f with M = μ fixed, so ∂ₜF = ε√M ∂ₜf
    let nx = s.nx();
    let sm = s.sqrt_m(&s.maxwellian(0.0));
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for (i, (a, b)) in rf.iter().zip(&rp).enumerate() {
        err = err.max((a / 0.5 - b * sm[i / nx]).abs());
        scale = scale.max((b * sm[i / nx]).abs());
    }
    err / scale
}

#[test]
fn perturbative_and_full_right_hand_sides_agree() {
    // The perturbative form carries E·v√M analytically while the full
    // form differentiates μ with the discrete v-flux; the gap is the
    // flux error and must shrink under refinement (0.125 -> 0.079 from
    // N_v = 16 to 24).
    let coarse = rhs_mismatch(16);
    let fine = rhs_mismatch(24);
    assert!(coarse < 0.2, "{coarse}");
    assert!(fine < 0.7 * coarse, "{coarse} -> {fine}");
}

#[test]
fn transport_is_reversible() {
    let s = solver(ForceField::zero());
    let (st, _) = initial_state(&s, &InitialData::Smooth { amp: 0.1, seed: 3 }).unwrap();
    let mut d = st.data.clone();
    s.transport(&mut d, 0.37);
    assert!(max_abs(&d.iter().zip(&st.data).map(|(a, b)| a - b).collect::<Vec<_>>()) > 1e-3);
    s.transport(&mut d, -0.37);
    let diff: Vec<f64> = d.iter().zip(&st.data).map(|(a, b)| a - b).collect();
    assert!(max_abs(&diff) < 1e-12);
}

#[test]
fn equilibrium_is_a_fixed_point() {
    let mut s = solver(ForceField::zero());
    let mut st = KineticState::zeros(0.0, Mode::Perturbative, s.nv(), s.nx());
    for _ in 0..5 {
        st = s.step(&st, 0.05).unwrap();
    }
    assert!(st.data.iter().all(|x| x.abs() < 1e-14));
    assert!((st.t - 0.25).abs() < 1e-14);
}

#[test]
fn steps_conserve_mass_momentum_and_energy_without_force() {
    let mut s = solver(ForceField::zero());
    let (mut st, _) = initial_state(&s, &tg(0.2)).unwrap();
    let g0 = s.global_moments(&st);
    for _ in 0..6 {
        st = s.step(&st, 0.05).unwrap();
    }
    let g1 = s.global_moments(&st);
    assert!(((g1.mass - g0.mass) / g0.mass).abs() < 1e-12);
    assert!(((g1.energy - g0.energy) / g0.energy).abs() < 1e-12);
    for a in 0..2 {
        assert!((g1.momentum[a] - g0.momentum[a]).abs() < 1e-12);
    }
}

#[test]
fn moments_of_infinitesimal_maxwellian() {
    let s = solver_with(1, 8, 24, 8.0, 0.5, ForceField::zero());
    let nx = s.nx();
    let space = &s.space;
    let rho: Vec<f64> = (0..nx).map(|i| 0.3 * space.point(i)[0].cos()).collect();
    let u = vec![
        (0..nx).map(|i| 0.2 * space.point(i)[0].sin()).collect::<Vec<_>>(),
        vec![-0.1; nx],
    ];
    let theta: Vec<f64> = rho.iter().map(|r| -r).collect();
    let f = infinitesimal_maxwellian(&rho, &u, &theta, &Maxwellian::GLOBAL, &s.vel);
    let st = s.from_mu_based(&f);
    let m = moments(&s, &st);
    let half_d = (2.0f64 / 2.0).sqrt();
    for x in 0..nx {
        assert!((m.rho[x] - rho[x]).abs() < 1e-8);
        assert!((m.u[0][x] - u[0][x]).abs() < 1e-8);
        assert!((m.u[1][x] - u[1][x]).abs() < 1e-8);
        assert!((m.theta[x] - half_d * theta[x]).abs() < 1e-8);
    }
    // constant density only
    let f = infinitesimal_maxwellian(&vec![0.4; nx], &vec![vec![0.0; nx]; 2], &vec![0.0; nx], &Maxwellian::GLOBAL, &s.vel);
    let m = moments(&s, &s.from_mu_based(&f));
    assert!(m.rho.iter().all(|r| (r - 0.4).abs() < 1e-8));
    assert!(m.u.iter().flatten().chain(&m.theta).all(|x| x.abs() < 1e-8));
}

#[test]
fn moments_of_global_equilibrium_vanish() {
    let s = solver(ForceField::zero());
    let st = KineticState::zeros(0.0, Mode::Perturbative, s.nv(), s.nx());
    let m = moments(&s, &st);
    assert!(m.rho.iter().chain(m.u.iter().flatten()).chain(&m.theta).all(|x| *x == 0.0));
}

#[test]
fn splitting_is_second_order_in_time() {
    let mut s = solver_with(1, 8, 16, 6.0, 0.5, builtin_forces("steady-shear", 1.0, 2.0).unwrap());
    let (st0, _) = initial_state(&s, &tg(0.2)).unwrap();
    let mut end = |dt: f64| {
        let mut st = st0.clone();
        let n = (0.4 / dt).round() as usize;
        for _ in 0..n {
            st = s.step(&st, dt).unwrap();
        }
        st.data
    };
    let fine = end(0.0125);
    let e1 = max_abs(&end(0.1).iter().zip(&fine).map(|(a, b)| a - b).collect::<Vec<_>>());
    let e2 = max_abs(&end(0.05).iter().zip(&fine).map(|(a, b)| a - b).collect::<Vec<_>>());
    let ratio = e1 / e2;
    assert!((3.0..5.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn inner_iteration_failure_is_numerical() {
    let mut s = solver(ForceField::zero());
    s.settings.max_sweeps = 1;
    s.settings.inner_tol = 0.0;
    let (st, _) = initial_state(&s, &tg(0.5)).unwrap();
    match s.step(&st, 0.05) {
        Err(Error::Numerical(msg)) => assert!(msg.contains("sweep") || msg.contains("iteration"), "{msg}"),
        other => panic!("expected a numerical failure, got {:?}", other.map(|s| s.t)),
    }
    let traj = run(
        &mut s,
        st.clone(),
        &RunSettings {
            t_end: 0.2,
            dt: Some(0.05),
            ..RunSettings::default()
        },
    )
    .unwrap();
    assert!(traj.aborted.is_some());
    assert_eq!(traj.final_state(), &st);
}

#[test]
fn under_resolved_velocity_grid_is_rejected() {
    let mut s = solver_with(1, 8, 6, 6.0, 0.5, ForceField::zero());
    let st = KineticState::zeros(0.0, Mode::Perturbative, s.nv(), s.nx());
    assert!(matches!(s.step(&st, 0.05), Err(Error::UnderResolved(_))));
}

#[test]
fn snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = solver(ForceField::zero());
    let (st, _) = initial_state(&s, &tg(0.1)).unwrap();
    let settings = RunSettings {
        t_end: 0.1,
        dt: Some(0.05),
        n_out: 1,
        output_dir: Some(dir.path().to_path_buf()),
        ..RunSettings::default()
    };
    let traj = run(&mut s, st, &settings).unwrap();
    assert_eq!(traj.snapshots.len(), 3);
    let (h, payload) = read_snapshot(&dir.path().join("snap_000002.bin")).unwrap();
    assert_eq!(payload, traj.final_state().data);
    assert_eq!((h.mode, h.dx, h.nx, h.dv, h.nv, h.components), (0, 2, 8, 2, 16, 1));
    assert!((h.t - 0.1).abs() < 1e-14);
    assert_eq!(h.params, s.params);
    // a snapshot can seed a new run
    let back = InitialData::File {
        path: dir.path().join("snap_000000.bin"),
    };
    assert_eq!(back.sample(&s).unwrap(), traj.snapshots[0].data);
    // truncated files are rejected
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"BZFSNAP1\0\0").unwrap();
    assert!(read_snapshot(&bad).is_err());
}

#[test]
fn full_and_perturbative_modes_round_trip() {
    let s = solver(ForceField::zero());
    let (st, _) = initial_state(&s, &InitialData::Smooth { amp: 0.2, seed: 9 }).unwrap();
    let back = s.to_perturbative(&s.to_full(&st));
    let diff: Vec<f64> = back.data.iter().zip(&st.data).map(|(a, b)| a - b).collect();
    assert!(max_abs(&diff) < 1e-10);
}
