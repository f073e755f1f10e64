use boltzforce::collision::interp::axis_stencil;
use boltzforce::collision::post_collision_velocities;
use boltzforce::fluid_solver::{divergence, leray_project};
use boltzforce::grids::build_spatial_grid;
use proptest::prelude::*;

fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn leray_is_idempotent_and_solenoidal(a in field(64), b in field(64)) {
        let grid = build_spatial_grid(2, 8).unwrap();
        let u = vec![a, b];
        let p = leray_project(&u, &grid);
        let pp = leray_project(&p, &grid);
        for (x, y) in p.iter().flatten().zip(pp.iter().flatten()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        let d = divergence(&p, &grid);
        prop_assert!(d.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn stencil_reproduces_polynomials(s in 0.0f64..15.0, order in prop::sample::select(vec![2usize, 4]), c in field(5)) {
        let n = 16;
        let st = axis_stencil(s, n, order);
        prop_assert!(st.start + order < n);
        let poly = |x: f64| c.iter().take(order + 1).rev().fold(0.0, |acc, ci| acc * x + ci);
        let approx: f64 = (0..=order).map(|i| st.w[i] * poly((st.start + i) as f64)).sum();
        prop_assert!((approx - poly(s)).abs() < 1e-9 * (1.0 + poly(s).abs()));
    }

    #[test]
    fn binary_collisions_conserve(v in field(3), vs in field(3), th in 0.0f64..6.3, ph in 0.0f64..3.15) {
        let v = [4.0 * v[0], 4.0 * v[1], 4.0 * v[2]];
        let vs = [4.0 * vs[0], 4.0 * vs[1], 4.0 * vs[2]];
        let sigma = [ph.sin() * th.cos(), ph.sin() * th.sin(), ph.cos()];
        let (vp, vps) = post_collision_velocities(&v, &vs, &sigma);
        let e = |a: &[f64; 3]| a.iter().map(|x| x * x).sum::<f64>();
        for k in 0..3 {
            prop_assert!((vp[k] + vps[k] - v[k] - vs[k]).abs() < 1e-12);
        }
        prop_assert!((e(&vp) + e(&vps) - e(&v) - e(&vs)).abs() < 1e-11);
    }
}
