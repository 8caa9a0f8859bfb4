use std::f64::consts::PI;

use ncdiff::analysis::{composite_simpson, hausdorff_semidistance};
use ncdiff::model::{phi_of_constant, validate_scenario, BoundsParameters, Which};
use ncdiff::{BasisTable, DomainSpec, HistoryBuffer, Scenario, ScenarioConfig, SpectralField};
use proptest::collection::vec;
use proptest::prelude::*;

fn basis_1d() -> BasisTable {
    BasisTable::build(&DomainSpec::interval(PI, 16)).unwrap()
}

fn basis_2d() -> BasisTable {
    BasisTable::build(&DomainSpec::rectangle([1.5, 1.0], [6, 5])).unwrap()
}

fn field(len: usize) -> impl Strategy<Value = SpectralField> {
    vec(-5.0..5.0_f64, len).prop_map(SpectralField::from_coeffs)
}

fn parseval_gap(basis: &BasisTable, f: &SpectralField) -> f64 {
    let p = basis.to_physical(f).unwrap();
    let quad: f64 = p.values.iter().map(|v| v * v).sum::<f64>() * basis.cell_volume();
    let direct: f64 = f.coeffs().iter().map(|c| c * c).sum();
    (quad - direct).abs() / (1.0 + direct)
}

proptest! {
    #[test]
    fn transform_roundtrip_1d(f in field(16)) {
        let b = basis_1d();
        let back = b.from_physical(&b.to_physical(&f).unwrap()).unwrap();
        prop_assert!(back.sub(&f).max_abs() <= 1e-12);
    }

    #[test]
    fn transform_roundtrip_2d(f in field(30)) {
        let b = basis_2d();
        let back = b.from_physical(&b.to_physical(&f).unwrap()).unwrap();
        prop_assert!(back.sub(&f).max_abs() <= 1e-12);
    }

    #[test]
    fn parseval(f in field(16), g in field(30)) {
        prop_assert!(parseval_gap(&basis_1d(), &f) <= 1e-10);
        prop_assert!(parseval_gap(&basis_2d(), &g) <= 1e-10);
    }

    #[test]
    fn sobolev_norms_increase_with_order(f in field(16), s in 0.0..2.0_f64) {
        let b = basis_1d();
        // λ₁ = 1 on (0, π), so ‖A^{s/2}f‖ is nondecreasing in s.
        prop_assert!(b.norm_sobolev_sq(&f, s) <= b.norm_sobolev_sq(&f, s + 0.5) * (1.0 + 1e-12));
    }

    #[test]
    fn nonlinearity_split_adds_up(f in field(32)) {
        let scn = Scenario::new(ScenarioConfig::default_nonlinear()).unwrap();
        let g = scn.nonlinearity_apply(&f, Which::G).unwrap();
        let g0 = scn.nonlinearity_apply(&f, Which::G0).unwrap();
        let g1 = scn.nonlinearity_apply(&f, Which::G1).unwrap();
        let gap = g.sub(&g0.add(&g1)).max_abs();
        prop_assert!(gap <= 1e-10 * (1.0 + g.max_abs()));
    }

    #[test]
    fn dissipative_part_opposes_the_state(u in -1e3..1e3_f64) {
        let split = ScenarioConfig::default_nonlinear().nonlinearity;
        prop_assert!(split.eval(Which::G0, u) * u <= 0.0);
        prop_assert_eq!(split.eval(Which::G, u), split.eval(Which::G0, u) + split.eval(Which::G1, u));
    }

    #[test]
    fn nonlocal_coefficient_within_bounds(f in field(32)) {
        let scn = Scenario::new(ScenarioConfig::default_nonlinear()).unwrap();
        let d = &scn.config.diffusion;
        let a = scn.nonlocal_coefficient(&f).unwrap();
        prop_assert!(a >= d.c_a1 && a <= d.c_a2);
    }

    #[test]
    fn delay_lipschitz(f in field(32), g in field(32), t in 0.0..10.0_f64) {
        let scn = Scenario::new(ScenarioConfig::default_nonlinear()).unwrap();
        let lhs = scn.basis.norm_sobolev_sq(
            &phi_of_constant(&scn, t, &f).unwrap().sub(&phi_of_constant(&scn, t, &g).unwrap()),
            0.0,
        );
        let rhs = scn.basis.norm_sobolev_sq(&f.sub(&g), 0.0);
        prop_assert!(lhs <= scn.config.delay.lipschitz * rhs * (1.0 + 1e-9) + 1e-14);
    }

    #[test]
    fn beta_identity_and_prefactor(
        lambda1 in 0.5..4.0_f64,
        bound_l in 0.3..3.0_f64,
        c_phi in 1e-4..0.3_f64,
        mu in 0.05..1.0_f64,
        zeta in 0.2..3.0_f64,
    ) {
        if let Ok(b) = BoundsParameters::optimize(lambda1, bound_l, c_phi, mu, zeta) {
            let gap = 2.0 * c_phi * (b.beta * mu).exp() / (1.0 + lambda1 * bound_l);
            prop_assert!((b.beta - b.beta1 - gap).abs() <= 1e-14 * (1.0 + b.beta));
            prop_assert!(b.beta > 0.0 && b.beta <= b.beta_cap() && b.beta1 > 0.0);
            let tol = 4.0 * f64::EPSILON * (1.0 + b.beta / (b.beta - b.beta1));
            prop_assert!((b.prefactor() - 2.0).abs() <= tol);
        }
    }

    #[test]
    fn beta_optimum_beats_neighbours(
        c_phi in 1e-3..0.2_f64,
        mu in 0.05..0.8_f64,
    ) {
        if let Ok(b) = BoundsParameters::optimize(1.0, 1.0, c_phi, mu, 1.0) {
            for k in 1..=20 {
                let beta = b.beta_cap() * k as f64 / 20.0;
                let other = BoundsParameters::with_beta(1.0, 1.0, c_phi, mu, 1.0, beta);
                prop_assert!(other.beta1 <= b.beta1 + 1e-12);
            }
        }
    }

    #[test]
    fn semidistance_properties(
        a in vec(field(4), 1..6),
        b in vec(field(4), 1..6),
        c in vec(field(4), 1..6),
    ) {
        let basis = BasisTable::build(&DomainSpec::interval(1.0, 4)).unwrap();
        let d = |x: &[SpectralField], y: &[SpectralField]| hausdorff_semidistance(x, y, &basis, 0.0).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        let mut wider = b.clone();
        wider.extend(c.iter().cloned());
        prop_assert!(d(&a, &wider) <= d(&a, &b));
    }

    #[test]
    fn hermite_reproduces_cubics(c in vec(-3.0..3.0_f64, 4), s in 0.0..1.0_f64) {
        let p = |t: f64| c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t;
        let dp = |t: f64| c[1] + 2.0 * c[2] * t + 3.0 * c[3] * t * t;
        let mut buf = HistoryBuffer::new(1.0, 0.25);
        for i in 0..=4 {
            let t = 0.25 * i as f64;
            buf.push(t, SpectralField::from_coeffs(vec![p(t)]), SpectralField::from_coeffs(vec![dp(t)])).unwrap();
        }
        let got = buf.sample_at(s).unwrap().coeffs()[0];
        prop_assert!((got - p(s)).abs() <= 1e-12 * (1.0 + p(s).abs()));
    }

    #[test]
    fn simpson_exact_on_cubics(c in vec(-3.0..3.0_f64, 4), n in 2usize..40) {
        let h = 1.0 / n as f64;
        let values: Vec<f64> = (0..=n)
            .map(|i| {
                let t = i as f64 * h;
                c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t
            })
            .collect();
        let exact = c[0] + c[1] / 2.0 + c[2] / 3.0 + c[3] / 4.0;
        prop_assert!((composite_simpson(&values, h) - exact).abs() <= 1e-12);
    }

    #[test]
    fn accepted_sigma_lies_in_range(sigma in -0.2..0.6_f64) {
        let mut cfg = ScenarioConfig::default_nonlinear();
        cfg.sigma = sigma;
        cfg.integration.horizon = 1.0;
        if validate_scenario(&cfg).is_ok() {
            prop_assert!(sigma > 0.0 && sigma < 1.0 / 3.0);
        }
    }
}

#[test]
fn window_sup_stable_under_subsample_refinement() {
    use ncdiff::history::window_norms;
    let scn = Scenario::new(ScenarioConfig::default_nonlinear()).unwrap();
    let eps = &scn.config.epsilon;
    let mut worst = 0.0_f64;
    ncdiff::simulate(&scn, 2.5, |v| {
        if v.step >= scn.config.integration.steps_per_delay {
            let coarse = window_norms(&v.buffers[0], v.t, &scn.basis, eps, 0.0, 4)?;
            let fine = window_norms(&v.buffers[0], v.t, &scn.basis, eps, 0.0, 8)?;
            worst = worst.max((fine.phase_sq() - coarse.phase_sq()).abs() / coarse.phase_sq());
        }
        Ok(())
    })
    .unwrap();
    assert!(worst <= 1e-8, "relative change {worst:e}");
}

#[test]
fn dense_output_continuous_at_knots() {
    let scn = Scenario::new(ScenarioConfig::default_nonlinear()).unwrap();
    let st = ncdiff::simulate(&scn, 1.0, |_| Ok(())).unwrap();
    let buf = &st.buffers[0];
    let knots: Vec<(f64, f64)> = buf
        .knots()
        .map(|k| (k.t, k.deriv_left.max_abs().max(k.deriv_right.max_abs())))
        .collect();
    let h = 1e-6 * scn.dt();
    for &(t, slope) in &knots[1..knots.len() - 1] {
        let (left, right) = (buf.sample_at(t - h).unwrap(), buf.sample_at(t + h).unwrap());
        let jump = left.sub(&right).max_abs();
        assert!(
            jump <= 1e-12 + 2.0 * h * slope * (1.0 + 1e-6),
            "jump {jump:e} at {t}"
        );
    }
}
