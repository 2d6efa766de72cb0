use dfsl_core::aronson::{aronson_envelope, aronson_params, RegimeTest};
use dfsl_core::field::{
    cellular_vortex, lebesgue_norm, leray_project, mollify, mollify_scalar, windowed_cellular, MollifierSpec,
};
use dfsl_core::io::{decode, encode};
use dfsl_core::pde::{
    assemble, assemble_with, comparison_step_limit, evolve, evolve_with, DiffusionCoefficient, Discretization,
    EvolveOptions, Record,
};
use dfsl_core::resolvent::{resolve, resolvent_bounds};
use dfsl_core::{GridSpec, ScalarField, VectorField};
use proptest::prelude::*;

fn grid2() -> GridSpec {
    GridSpec::new(2, 16, 4.0).unwrap()
}

fn samples(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn vortex(grid: &GridSpec, amp: f64) -> VectorField {
    windowed_cellular(grid, amp, 2.0, 1.5).unwrap()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn leray_is_idempotent(a in samples(256), b in samples(256)) {
        let g = grid2();
        let v = VectorField::new(g, vec![a, b]).unwrap();
        let p = leray_project(&v);
        let pp = leray_project(&p);
        prop_assert!(p.is_certified());
        prop_assert!(pp.l2_distance(&p).unwrap() <= 1e-12 * (1.0 + v.l2_distance(&VectorField::zeros(g)).unwrap()));
    }

    #[test]
    fn leray_commutes_with_mollification(a in samples(256), b in samples(256), eps in 0.1f64..0.9) {
        let g = grid2();
        let v = VectorField::new(g, vec![a, b]).unwrap();
        let m = MollifierSpec::new(eps, &g).unwrap();
        let one = mollify(&leray_project(&v), &m).unwrap();
        let two = leray_project(&mollify(&v, &m).unwrap());
        prop_assert!(one.l2_distance(&two).unwrap() <= 1e-12 * (1.0 + one.l2_distance(&VectorField::zeros(g)).unwrap()));
    }

    #[test]
    fn mollifier_contracts_lp(u in samples(256), eps in 0.75f64..0.99, p in 1.0f64..6.0) {
        // Contraction needs a kernel that stays non-negative on the grid,
        // which holds once ε is a few grid spacings.
        let g = grid2();
        let f = ScalarField::new(g, u).unwrap();
        let m = MollifierSpec::new(eps, &g).unwrap();
        let smooth = mollify_scalar(&f, &m);
        prop_assert!(lebesgue_norm(&smooth, p).unwrap() <= lebesgue_norm(&f, p).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn lebesgue_norm_is_homogeneous(u in samples(256), c in -5.0f64..5.0, p in 1.0f64..8.0) {
        let f = ScalarField::new(grid2(), u).unwrap();
        let lhs = lebesgue_norm(&f.scaled(c), p).unwrap();
        let rhs = c.abs() * lebesgue_norm(&f, p).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
    }

    #[test]
    fn advection_is_skew(u in samples(256), v in samples(256), amp in 0.1f64..5.0) {
        let g = grid2();
        let op = assemble(&DiffusionCoefficient::identity(g), &vortex(&g, amp)).unwrap();
        let bu = op.apply_advection(&u);
        let bv = op.apply_advection(&v);
        let s: f64 = bu.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>() + bv.iter().zip(&u).map(|(x, y)| x * y).sum::<f64>();
        let scale = l2(&u) * l2(&v) * op.drift_max() / g.spacing();
        prop_assert!(s.abs() <= 1e-12 * scale);
    }

    #[test]
    fn diffusion_is_symmetric_nonpositive(u in samples(256), v in samples(256), strength in 0.0f64..2.0) {
        let g = grid2();
        let a = DiffusionCoefficient::smooth_anisotropic(g, strength, 1.5).unwrap();
        let op = assemble(&a, &VectorField::zeros(g)).unwrap();
        let du = op.apply_diffusion(&u);
        let dv = op.apply_diffusion(&v);
        let uv: f64 = du.iter().zip(&v).map(|(x, y)| x * y).sum();
        let vu: f64 = dv.iter().zip(&u).map(|(x, y)| x * y).sum();
        let uu: f64 = du.iter().zip(&u).map(|(x, y)| x * y).sum();
        let scale = l2(&du) * l2(&v) + l2(&dv) * l2(&u);
        prop_assert!((uv - vu).abs() <= 1e-12 * scale);
        prop_assert!(uu <= 1e-12 * l2(&du) * l2(&u));
    }

    #[test]
    fn evolution_conserves_mass_and_contracts(u in samples(256), amp in 0.0f64..4.0, theta in 0.5f64..1.0) {
        let g = grid2();
        let op = assemble(&DiffusionCoefficient::identity(g), &vortex(&g, amp)).unwrap();
        let u0 = ScalarField::new(g, u).unwrap();
        let traj = evolve(&op, &u0, 0.02, 0.005, theta).unwrap();
        let scale = u0.l1_norm().max(1e-300);
        for s in &traj.snapshots {
            prop_assert!((s.mass() - u0.mass()).abs() <= 1e-8 * scale);
            prop_assert!(s.l2_norm() <= u0.l2_norm() * (1.0 + 1e-8));
            prop_assert!(s.values().iter().all(|v| v.is_finite()));
        }
        prop_assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn semigroup_law_is_exact(u in samples(256), amp in 0.0f64..4.0, split in 1usize..6) {
        let g = grid2();
        let op = assemble(&DiffusionCoefficient::identity(g), &vortex(&g, amp)).unwrap();
        let u0 = ScalarField::new(g, u).unwrap();
        let dt = 0.004;
        let total = 8;
        let opts = EvolveOptions::new(dt, 0.5).record(Record::Final);
        let direct = evolve_with(&op, &u0, total as f64 * dt, &opts).unwrap().into_final();
        let first = evolve_with(&op, &u0, split as f64 * dt, &opts).unwrap().into_final();
        let both = evolve_with(&op, &first, (total - split) as f64 * dt, &opts).unwrap().into_final();
        prop_assert!(direct.sub(&both).unwrap().l2_norm() <= 1e-12 * direct.l2_norm());
    }

    #[test]
    fn implicit_compact_scheme_is_positive(u in prop::collection::vec(0.0f64..1.0, 256), amp in 0.0f64..3.0) {
        let g = grid2();
        let a = DiffusionCoefficient::identity(g);
        let op = assemble_with(&a, &vortex(&g, amp), Discretization::Compact).unwrap();
        let u0 = ScalarField::new(g, u).unwrap();
        let dt = comparison_step_limit(&g, a.lambda());
        let traj = evolve(&op, &u0, 10.0 * dt, dt, 1.0).unwrap();
        for s in &traj.snapshots {
            prop_assert!(s.min() >= -1e-8 * u0.max());
            prop_assert!(s.max() <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn resolvent_is_bounded(u in samples(256), amp in 0.0f64..4.0, log_alpha in -1.0f64..1.0) {
        let g = grid2();
        let op = assemble(&DiffusionCoefficient::identity(g), &vortex(&g, amp)).unwrap();
        let f = ScalarField::new(g, u).unwrap();
        let r = resolve(&op, 10f64.powf(log_alpha), &f).unwrap();
        prop_assert!(r.residual <= 1e-10);
        prop_assert!(resolvent_bounds(&r, 1.0).holds());
    }

    #[test]
    fn aronson_acceptance_matches_hypothesis(two_over_l in 0.0f64..1.9, n_over_q in 0.0f64..1.9) {
        let n = 3;
        let l = if two_over_l == 0.0 { f64::INFINITY } else { 2.0 / two_over_l };
        let q = if n_over_q == 0.0 { f64::INFINITY } else { n as f64 / n_over_q };
        let gamma = two_over_l + n_over_q;
        let admissible = l > 1.0 && q > 1.5 && (1.0..2.0).contains(&gamma);
        let p = aronson_params(l, q, n, 1.0, 1.0);
        prop_assert_eq!(p.is_ok(), admissible);
        if let Ok(p) = p {
            prop_assert!(p.mu >= 1.0);
            prop_assert!(p.nu > 0.0 && p.nu <= 1.0);
            prop_assert_eq!(p.mu == 1.0, q.is_infinite());
        }
    }

    #[test]
    fn gaussian_exponent_branches_agree(x in prop::array::uniform3(-3.0f64..3.0), dt in 0.01f64..1.0, c1 in 0.1f64..5.0, c2 in 0.5f64..8.0) {
        let p = aronson_params(f64::INFINITY, 3.0, 3, 1.0, 1.0).unwrap().with_constants(c1, c2);
        let xi = [0.2, -0.1, 0.4];
        let near = aronson_envelope(&p, dt, 0.0, &x, &xi, RegimeTest::Displacement).unwrap();
        let verbatim = aronson_envelope(&p, dt, 0.0, &x, &xi, RegimeTest::Position { origin: [0.0; 3] }).unwrap();
        prop_assert_eq!(near, verbatim);
        let d2: f64 = (0..3).map(|i| (x[i] - xi[i]).powi(2)).sum();
        let gauss = c1 / dt.powf(1.5) * (-d2 / dt / c2).exp();
        prop_assert!((near - gauss).abs() <= 1e-12 * gauss.max(1e-300));
    }

    #[test]
    fn dfsl_roundtrip(u in samples(256), w in samples(256)) {
        let g = grid2();
        let back = decode(&encode(&g, &[&u, &w])).unwrap();
        prop_assert_eq!(back.grid, g);
        prop_assert_eq!(back.components, vec![u, w]);
    }
}

#[test]
fn cellular_vortex_is_drift_neutral_for_constants() {
    let g = GridSpec::new(3, 8, 4.0).unwrap();
    let b = cellular_vortex(&g, 2.0, 1).unwrap();
    let op = assemble(&DiffusionCoefficient::identity(g), &b).unwrap();
    assert!(op.apply(&vec![1.0; g.len()]).iter().all(|v| v.abs() < 1e-12));
}
