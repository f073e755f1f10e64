use boltzforce::equilibria::*;
use boltzforce::grids::build_spatial_grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn selected_constants_keep_the_force_term_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for &(t0, c_e, lambda) in &[(1.0, 1.0, 1.0), (2.0, 0.5, 1.0), (0.5, 2.0, 0.3)] {
        let (a, big_a) = select_constants(t0, c_e, lambda);
        for eps in [1.0, 0.5, 0.125] {
            let p = ReferenceParams {
                eps,
                e_exp: 0.5,
                a,
                big_a,
                lambda,
                t0,
            };
            p.validate().unwrap();
            for _ in 0..10_000 {
                let t = rng.gen_range(0.0..t0);
                let v: f64 = rng.gen_range(0.0..12.0);
                let e_dot_v = c_e * v * rng.gen_range(-1.0..1.0);
                let lhs = perturbative_force(t, e_dot_v, v * v, &p);
                assert!(lhs >= positivity_floor(v * v, &p) - 1e-12, "t {t} |v| {v} eps {eps}: {lhs}");
            }
        }
    }
}

#[test]
fn global_reference_is_mu() {
    let p = ReferenceParams {
        eps: 0.5,
        e_exp: 0.5,
        a: 0.0,
        big_a: 0.0,
        lambda: 1.0,
        t0: 1.0,
    };
    assert!(p.is_global());
    for t in [0.0, 0.7] {
        assert_eq!(p.maxwellian_shape(t), Maxwellian::GLOBAL);
        assert!((reference_mass(t, &p, 2) - 1.0).abs() < 1e-15);
    }
}

#[test]
fn mean_zero_reduction_of_a_drifting_force() {
    let grid = build_spatial_grid(2, 8).unwrap();
    let nx = grid.len();
    // E = (0.5 + sin x, −1) at t = 0 and (1.5 + sin x, −1) at t = 2
    let mut values = Vec::new();
    for shift in [0.5, 1.5] {
        values.extend((0..nx).map(|i| shift + grid.point(i)[0].sin()));
        values.extend(std::iter::repeat(-1.0).take(nx));
    }
    let tab = TabulatedForce {
        times: vec![0.0, 2.0],
        n_x: nx,
        values,
    };
    let force = ForceField::Tabulated(tab);
    let times: Vec<f64> = (0..=8).map(|i| 0.25 * i as f64).collect();
    let (centred, w) = mean_zero_reduction(&force, &grid, &times);
    for &t in &times {
        let m = centred.mean(t, &grid);
        assert!(m[0].abs() < 1e-14 && m[1].abs() < 1e-14);
    }
    // ⟨E_s⟩ = (0.5 + s/2, −1), so w_t = (t/2 + t²/4, −t) and the trapezoid is exact
    for (t, wt) in times.iter().zip(&w) {
        assert!((wt[0] - (0.5 * t + 0.25 * t * t)).abs() < 1e-13);
        assert!((wt[1] + t).abs() < 1e-13);
    }
    let s = centred.sample(1.0, &grid);
    for i in 0..nx {
        assert!((s[0][i] - grid.point(i)[0].sin()).abs() < 1e-13);
        assert!(s[1][i].abs() < 1e-14);
    }
}

#[test]
fn tabulated_force_from_csv() {
    let grid = build_spatial_grid(1, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("force.csv");
    std::fs::write(&path, "0,0,1,2,3,4\n0,1,0,0,0,0\n1,0,3,4,5,6\n1,1,1,1,1,1\n").unwrap();
    let f = ForceField::Tabulated(TabulatedForce::from_csv(&path, &grid).unwrap());
    let s = f.sample(0.5, &grid);
    assert_eq!(s[0], vec![2.0, 3.0, 4.0, 5.0]);
    assert_eq!(s[1], vec![0.5; 4]);
    assert!((f.sup_norm(1.0, &grid) - 37f64.sqrt()).abs() < 1e-14);

    std::fs::write(&path, "0,0,1,2\n").unwrap();
    assert!(TabulatedForce::from_csv(&path, &grid).is_err());
}
