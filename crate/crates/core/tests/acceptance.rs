//! Acceptance gate: one line per criterion, nonzero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the criteria execute in
//! sequence and the runtime budgets are measured without contention.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use ncdiff::analysis::{
    check_absorption, continuity_factor, energy_experiment, hausdorff_semidistance,
    pullback_experiment, run_decomposition, run_regularity_split, self_convergence,
};
use ncdiff::model::{random_field, DelayKind, LagProfile, PointwiseMap};
use ncdiff::spectral::PhysicalSamples;
use ncdiff::{cli, simulate, validate_scenario, BasisTable, DomainSpec, Scenario, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn scenario(cfg: ScenarioConfig) -> Scenario {
    Scenario::new(cfg).expect("bundled scenario builds")
}

fn default_scenario() -> Scenario {
    scenario(ScenarioConfig::default_nonlinear())
}

fn closed_form() -> Verdict {
    let start = Instant::now();
    let scn = scenario(ScenarioConfig::linear_single_mode());
    let y0 = scn.initial.value(0.0).coeffs()[0];
    let mut worst = 0.0_f64;
    simulate(&scn, 5.0, |v| {
        let exact = y0 * (-(v.t - scn.config.tau)).exp();
        worst = worst.max(((v.states[0].coeffs()[0] - exact) / exact).abs());
        Ok(())
    })
    .expect("linear run");
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-8 && elapsed < Duration::from_secs(1),
        format!("max relative error {worst:.3e} (<= 1e-8), {elapsed:.2?} (< 1 s)"),
    )
}

fn order() -> Verdict {
    let start = Instant::now();
    let scn = default_scenario();
    let c = self_convergence(&scn, 10.0 * scn.mu(), &[10, 20], 320).expect("convergence run");
    let f = c.factors[0];
    let elapsed = start.elapsed();
    verdict(
        (8.0..=32.0).contains(&f) && elapsed < Duration::from_secs(30),
        format!(
            "errors {:.3e} -> {:.3e}, factor {f:.3} in [8, 32], {elapsed:.2?} (< 30 s)",
            c.errors[0], c.errors[1]
        ),
    )
}

fn energy_identity() -> Verdict {
    let scn = default_scenario();
    assert_eq!(scn.config.integration.steps_per_delay, 40);
    let e = energy_experiment(&scn, scn.config.integration.horizon).expect("energy run");
    verdict(
        e.max_relative <= 1e-6 && (8.0..=32.0).contains(&e.refinement_ratio),
        format!(
            "max relative residual {:.3e} (<= 1e-6) over {} intervals, halving ratio {:.3} in [8, 32]",
            e.max_relative,
            e.intervals.len(),
            e.refinement_ratio
        ),
    )
}

fn absorbing_bound() -> Verdict {
    let start = Instant::now();
    let scn = default_scenario();
    let bounds = validate_scenario(&scn.config).expect("default scenario validates");
    let r = check_absorption(&scn, &bounds, 20, 20.0 * scn.mu(), 42).expect("absorption run");
    let elapsed = start.elapsed();
    verdict(
        r.members.len() == 20
            && r.min_relative_margin_r0 >= -1e-8
            && elapsed < Duration::from_secs(120),
        format!(
            "20 members, min relative margin {:.3e} (>= -1e-8), {} violations, {elapsed:.2?} (< 2 min)",
            r.min_relative_margin_r0, r.violations
        ),
    )
}

/// The bundled scenario plus a sweep over delay strength, delay and `L`.
fn validated_with_delay() -> Vec<ScenarioConfig> {
    let mut out = vec![ScenarioConfig::default_nonlinear()];
    for c_phi in [0.001, 0.01, 0.05, 0.2] {
        for mu in [0.1, 0.25, 0.5] {
            for bound_l in [0.8, 1.0, 1.5] {
                let mut cfg = ScenarioConfig::default_nonlinear();
                cfg.delay.lipschitz = c_phi;
                cfg.delay.horizon = mu;
                cfg.delay.kind = DelayKind::Discrete {
                    response: PointwiseMap::Sine { coef: c_phi.sqrt() },
                    lag: LagProfile::Constant { value: mu },
                    min_lag: None,
                };
                cfg.epsilon.bound_l = bound_l;
                if validate_scenario(&cfg).is_ok() {
                    out.push(cfg);
                }
            }
        }
    }
    out
}

fn prefactor() -> Verdict {
    let configs = validated_with_delay();
    let mut worst = 0.0_f64;
    let mut ok = true;
    for cfg in &configs {
        let b = validate_scenario(cfg).expect("filtered above");
        let p = b.prefactor();
        let tol = 4.0 * f64::EPSILON * (1.0 + b.beta / (b.beta - b.beta1));
        worst = worst.max((p - 2.0).abs());
        ok &= b.c_phi > 0.0 && (p - 2.0).abs() <= tol;
    }
    verdict(
        ok && configs.len() > 1,
        format!(
            "{} validated scenarios, max |P - 2| = {worst:.3e}",
            configs.len()
        ),
    )
}

fn decomposition_criteria() -> (Verdict, Verdict) {
    let scn = default_scenario();
    let d = run_decomposition(&scn, 40.0 * scn.mu()).expect("decomposition run");
    let rate = d.decay_rate.unwrap_or(f64::NAN);
    let v1 = verdict(
        d.v1_window_max_increase <= 1e-10 && rate > 0.0 && d.v2_residual <= 1e-6,
        format!(
            "largest windowed increase {:.3e} (<= 1e-10), rate {rate:.4} (> 0), v2 residual {:.3e} (<= 1e-6)",
            d.v1_window_max_increase, d.v2_residual
        ),
    );
    let sigma_ok = validate_scenario(&scn.config).is_ok();
    let sigma = verdict(
        sigma_ok && d.sigma_sup_final_quarter <= d.sigma_sup && d.late_growth() <= 0.0,
        format!(
            "sigma {} validated; final-quarter sup {:.6e}, earlier sup {:.6e}, global sup {:.6e}",
            d.sigma, d.sigma_sup_final_quarter, d.sigma_sup_early, d.sigma_sup
        ),
    );
    (v1, sigma)
}

fn continuity() -> Verdict {
    let scn = default_scenario();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let dir = random_field(&scn.basis, &mut rng, 1.0);
    let eps = scn.config.epsilon.value(scn.config.tau).abs();
    let n =
        (scn.basis.norm_sobolev_sq(&dir, 0.0) + eps * scn.basis.norm_sobolev_sq(&dir, 1.0)).sqrt();
    let dir = dir.scaled(1.0 / n);
    let horizon = 40.0 * scn.mu();
    let run = |h: f64| {
        continuity_factor(&scn, &scn.initial, &scn.initial.perturbed(&dir, h), horizon)
            .expect("continuity run")
            .c_hat
    };
    let (coarse, fine) = (run(1e-3), run(1e-6));
    let ratio = coarse / fine;
    verdict(
        coarse.is_finite() && fine.is_finite() && (1.0 / 3.0..=3.0).contains(&ratio),
        format!("C at 1e-3: {coarse:.6}, at 1e-6: {fine:.6}, ratio {ratio:.6} within factor 3"),
    )
}

fn pullback() -> Verdict {
    let start = Instant::now();
    let lin = scenario(ScenarioConfig::linear_single_mode());
    let lin_bounds = validate_scenario(&lin.config).expect("linear scenario validates");
    let a = pullback_experiment(&lin, lin.config.tau, 6, 8, 42, Some(&lin_bounds), None)
        .expect("linear pullback");
    let scn = default_scenario();
    let b =
        pullback_experiment(&scn, scn.config.tau, 6, 8, 42, None, None).expect("default pullback");
    let elapsed = start.elapsed();
    let envelope = a.within_envelope() == Some(true);
    let last = b.final_value().unwrap_or(f64::NAN);
    verdict(
        envelope
            && b.nonincreasing_from(2)
            && last <= 1e-4
            && a.complete
            && b.complete
            && elapsed < Duration::from_secs(300),
        format!(
            "linear within envelope: {envelope}; default nonincreasing from n = 2: {}, final {last:.3e} (<= 1e-4); {elapsed:.2?} (< 5 min)",
            b.nonincreasing_from(2)
        ),
    )
}

fn regularity() -> Verdict {
    let scn = default_scenario();
    let r = run_regularity_split(&scn, 40.0 * scn.mu(), 1).expect("regularity run");
    verdict(
        r.late_slope <= 1e-3 && r.k1.is_finite() && r.k2.is_finite() && r.split_ratio <= 1.0,
        format!(
            "late slope {:.3e} (<= 1e-3), K1 {:.4e}, K2 {:.4e}, max split ratio {:.4} (<= 1)",
            r.late_slope, r.k1, r.k2, r.split_ratio
        ),
    )
}

fn roundtrip_and_parseval(domain: &DomainSpec, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let basis = BasisTable::build(domain).expect("basis");
    let mut roundtrip = 0.0_f64;
    let mut parseval = 0.0_f64;
    for _ in 0..20 {
        let f = random_field(&basis, rng, 3.0);
        let samples: PhysicalSamples = basis.to_physical(&f).expect("forward");
        let back = basis.from_physical(&samples).expect("inverse");
        roundtrip = roundtrip.max(back.sub(&f).max_abs());
        let quad: f64 = samples.values.iter().map(|v| v * v).sum::<f64>() * basis.cell_volume();
        let coeff_sq: f64 = f.coeffs().iter().map(|c| c * c).sum();
        parseval = parseval.max((quad - coeff_sq).abs() / coeff_sq);
    }
    (roundtrip, parseval)
}

/// `sup_a min_b |a − b|` by an explicit distance matrix.
fn brute_force_semidistance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let matrix: Vec<Vec<f64>> = a
        .iter()
        .map(|x| {
            b.iter()
                .map(|y| {
                    x.iter()
                        .zip(y)
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect();
    matrix
        .iter()
        .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("output directory")
        .map(|e| {
            let p = e.expect("entry").path();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read(&p).expect("artifact"))
        })
        .collect()
}

fn infrastructure() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (r1, p1) =
        roundtrip_and_parseval(&DomainSpec::interval(std::f64::consts::PI, 32), &mut rng);
    let (r2, p2) = roundtrip_and_parseval(&DomainSpec::rectangle([2.0, 1.0], [12, 9]), &mut rng);
    let (roundtrip, parseval) = (r1.max(r2), p1.max(p2));

    let basis = BasisTable::build(&DomainSpec::interval(1.0, 6)).expect("basis");
    let mut hausdorff_exact = true;
    for _ in 0..50 {
        let cloud = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..5)
                .map(|_| (0..basis.len()).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect()
        };
        let (a, b) = (cloud(&mut rng), cloud(&mut rng));
        let fields = |c: &[Vec<f64>]| -> Vec<ncdiff::SpectralField> {
            c.iter()
                .map(|v| ncdiff::SpectralField::from_coeffs(v.clone()))
                .collect()
        };
        let got =
            hausdorff_semidistance(&fields(&a), &fields(&b), &basis, 0.0).expect("semidistance");
        hausdorff_exact &= got == brute_force_semidistance(&a, &b);
    }

    let root = tempfile::tempdir().expect("temp dir");
    let scenario_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/default.json");
    let run = |name: &str| {
        let out = root.path().join(name);
        let code = cli::main_with_args([
            "ncdiff".into(),
            "run".into(),
            scenario_path.clone().into_os_string(),
            "--experiments".into(),
            "simulate,energy,absorption,pullback".into(),
            "--members".into(),
            "4".into(),
            "--pullback-levels".into(),
            "6".into(),
            "--horizon".into(),
            "2.5".into(),
            "--out".into(),
            out.clone().into_os_string(),
        ]);
        (code, artifacts(&out))
    };
    let (c1, first) = run("first");
    let (c2, second) = run("second");
    let identical = c1 == 0 && c2 == 0 && !first.is_empty() && first == second;

    verdict(
        roundtrip <= 1e-12 && parseval <= 1e-10 && hausdorff_exact && identical,
        format!(
            "roundtrip {roundtrip:.2e} (<= 1e-12), Parseval {parseval:.2e} (<= 1e-10), \
             Hausdorff exact: {hausdorff_exact}, {} artifacts byte-identical: {identical}",
            first.len()
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut record = |n: usize, name: &'static str, v: Verdict| {
        println!(
            "criterion {n:>2} {:<4} {name}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((n, name, v));
    };
    record(1, "closed-form linear decay", closed_form());
    record(2, "self-convergence order", order());
    record(3, "energy identity", energy_identity());
    record(4, "absorbing bound", absorbing_bound());
    record(5, "prefactor equals 2", prefactor());
    let (v1, sigma) = decomposition_criteria();
    record(6, "v1 decay and v2 residual", v1);
    record(7, "sigma-norm plateau", sigma);
    record(8, "continuity exponent", continuity());
    record(9, "pullback attraction", pullback());
    record(10, "regularity boundedness", regularity());
    record(11, "infrastructure", infrastructure());

    let failed: Vec<usize> = results
        .iter()
        .filter(|r| !r.2.passed)
        .map(|r| r.0)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
