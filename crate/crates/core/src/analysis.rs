//! Quantitative checks on simulated trajectories: the energy identity,
//! absorbing radii, the dissipative/forced decomposition, the regularity
//! split, continuous dependence on initial data and pullback attraction.

use std::time::{Duration, Instant};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::history::{window_norms, HistoryBuffer, WindowNorms};
use crate::integrator::{
    initialize, integrate, rhs, simulate, steps_for, DecompositionSystem, RegularitySystem,
    StepView,
};
use crate::model::{
    initial_energy, BoundsParameters, HistorySegment, Scenario, ScenarioConfig, Which,
};
use crate::spectral::{BasisTable, SpectralField};

// ---------------------------------------------------------------------------
// Quadrature and fitting helpers
// ---------------------------------------------------------------------------

/// Composite Simpson on equispaced samples; an odd interval count takes the
/// 3/8 rule on the last three intervals, a single interval the trapezoid.
pub fn composite_simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len().saturating_sub(1);
    match n {
        0 => 0.0,
        1 => 0.5 * h * (values[0] + values[1]),
        _ => {
            let simpson_end = if n.is_multiple_of(2) { n } else { n - 3 };
            let mut acc = 0.0;
            let mut i = 0;
            while i < simpson_end {
                acc += h / 3.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]);
                i += 2;
            }
            if simpson_end < n {
                let v = &values[simpson_end..];
                acc += 3.0 * h / 8.0 * (v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3]);
            }
            acc
        }
    }
}

/// Least-squares line `y ≈ intercept + slope · x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Fourth-order derivative estimates at every knot of an equispaced series.
/// Stencils never straddle a breaking point (every `period`-th knot).
fn knot_derivatives(series: &[SpectralField], h: f64, period: usize) -> Vec<Option<SpectralField>> {
    let n = series.len();
    let combo = |idx: [usize; 5], w: [f64; 5]| -> SpectralField {
        let mut out = SpectralField::zeros(series[0].len());
        for (i, c) in idx.iter().zip(w) {
            out.axpy(c / (12.0 * h), &series[*i]);
        }
        out
    };
    let breaking = |i: usize| period > 0 && i.is_multiple_of(period);
    let forward = [-25.0, 48.0, -36.0, 16.0, -3.0];
    (0..n)
        .map(|i| {
            if i >= 2 && i + 2 < n && !(i - 1..=i + 1).any(breaking) {
                Some(combo(
                    [i - 2, i - 1, i + 1, i + 2, i],
                    [1.0, -8.0, 8.0, -1.0, 0.0],
                ))
            } else if i + 4 < n && !(i + 1..i + 4).any(breaking) {
                Some(combo([i, i + 1, i + 2, i + 3, i + 4], forward))
            } else if i >= 4 && !(i - 3..i).any(breaking) {
                Some(combo([i, i - 1, i - 2, i - 3, i - 4], forward.map(|w| -w)))
            } else {
                None
            }
        })
        .collect()
}

fn l2(f: &SpectralField) -> f64 {
    f.coeffs().iter().map(|c| c * c).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Energy identity
// ---------------------------------------------------------------------------

/// Terms of the energy identity at one knot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub t: f64,
    /// `‖u‖²`
    pub l2_sq: f64,
    /// `‖∇u‖²`
    pub grad_sq: f64,
    pub eps: f64,
    pub eps_dot: f64,
    pub coefficient: f64,
    /// `(g(u) + φ(t, uₜ) + k(t), u)`
    pub source: f64,
}

impl EnergyRecord {
    pub fn from_view(scn: &Scenario, view: &StepView) -> Result<Self> {
        let u = &view.states[0];
        let (_, b) = rhs(scn, view.t, u, &view.buffers[0])?;
        let (eps, eps_dot) = scn.epsilon_at(view.t);
        let mut f = b.nonlinear.clone();
        f.axpy(1.0, &b.delay);
        f.axpy(1.0, &b.forcing);
        Ok(EnergyRecord {
            t: view.t,
            l2_sq: scn.basis.norm_sobolev_sq(u, 0.0),
            grad_sq: scn.basis.norm_sobolev_sq(u, 1.0),
            eps,
            eps_dot,
            coefficient: b.coefficient,
            source: crate::spectral::inner_product(&f, u)?,
        })
    }

    /// `‖u‖² + ε‖∇u‖²`
    pub fn energy(&self) -> f64 {
        self.l2_sq + self.eps * self.grad_sq
    }

    /// `(2a − ε')‖∇u‖² + 2ζ‖u‖²`
    fn dissipation(&self, zeta: f64) -> f64 {
        (2.0 * self.coefficient - self.eps_dot) * self.grad_sq + 2.0 * zeta * self.l2_sq
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntervalResidual {
    pub from: f64,
    pub to: f64,
    pub absolute: f64,
    pub relative: f64,
}

/// Per-knot energy terms along one trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub dt: f64,
    pub zeta: f64,
    pub records: Vec<EnergyRecord>,
}

impl EnergyLedger {
    pub fn new(dt: f64, zeta: f64) -> Self {
        EnergyLedger {
            dt,
            zeta,
            records: Vec::new(),
        }
    }

    /// `|E(t) + ∫(2a−ε')‖∇u‖² + 2ζ∫‖u‖² − E(s) − 2∫(g+φ+k, u)|` between
    /// knots `i0 ≤ i1`, with the scale used for the relative value.
    pub fn residual(&self, i0: usize, i1: usize) -> Result<(f64, f64)> {
        if i0 > i1 || i1 >= self.records.len() {
            return Err(Error::Argument(format!(
                "knot range [{i0}, {i1}] outside 0..{}",
                self.records.len()
            )));
        }
        let r = &self.records[i0..=i1];
        let diss: Vec<f64> = r.iter().map(|x| x.dissipation(self.zeta)).collect();
        let src: Vec<f64> = r.iter().map(|x| 2.0 * x.source).collect();
        let int_diss = composite_simpson(&diss, self.dt);
        let int_src = composite_simpson(&src, self.dt);
        let (es, et) = (r[0].energy(), r[r.len() - 1].energy());
        let residual = (et + int_diss - es - int_src).abs();
        let scale = 1.0
            + es.abs()
                .max(et.abs())
                .max(int_diss.abs())
                .max(int_src.abs());
        Ok((residual, scale))
    }

    /// Residual between times `s` and `t`, snapped to the nearest knots.
    pub fn residual_between(&self, s: f64, t: f64) -> Result<f64> {
        let t0 = self
            .records
            .first()
            .ok_or_else(|| Error::Argument("empty ledger".into()))?
            .t;
        let idx = |x: f64| -> usize {
            let k = ((x - t0) / self.dt).round().max(0.0) as usize;
            if ((x - t0) / self.dt - k as f64).abs() > 1e-9 {
                warn!("time {x} is off the step grid; using knot {k}");
            }
            k
        };
        Ok(self.residual(idx(s), idx(t))?.0)
    }

    /// Residuals over consecutive blocks of `steps_per_block` steps.
    pub fn interval_residuals(&self, steps_per_block: usize) -> Result<Vec<IntervalResidual>> {
        let mut out = Vec::new();
        let mut i0 = 0;
        while i0 + steps_per_block < self.records.len() {
            let i1 = i0 + steps_per_block;
            let (absolute, scale) = self.residual(i0, i1)?;
            out.push(IntervalResidual {
                from: self.records[i0].t,
                to: self.records[i1].t,
                absolute,
                relative: absolute / scale,
            });
            i0 = i1;
        }
        Ok(out)
    }
}

/// Records the energy ledger of the main equation over `horizon`.
pub fn energy_ledger(scn: &Scenario, horizon: f64) -> Result<EnergyLedger> {
    let mut ledger = EnergyLedger::new(scn.dt(), scn.config.zeta);
    simulate(scn, horizon, |v| {
        ledger.records.push(EnergyRecord::from_view(scn, v)?);
        Ok(())
    })?;
    Ok(ledger)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub dt: f64,
    pub intervals: Vec<IntervalResidual>,
    pub max_relative: f64,
    /// Same quantity at `2Δt`, and the ratio of the two maxima.
    pub coarse_max_relative: f64,
    pub refinement_ratio: f64,
}

/// Energy-identity residuals per delay interval, plus the ratio to a run
/// with twice the step.
pub fn energy_experiment(scn: &Scenario, horizon: f64) -> Result<EnergyReport> {
    let m = scn.config.integration.steps_per_delay;
    let fine = energy_ledger(scn, horizon)?;
    let intervals = fine.interval_residuals(m)?;
    let max_rel = intervals.iter().map(|r| r.relative).fold(0.0, f64::max);
    let coarse_max = if m.is_multiple_of(2) {
        let mut cfg = scn.config.clone();
        cfg.integration.steps_per_delay = m / 2;
        let coarse = Scenario::new(cfg)?.with_initial(scn.initial.clone());
        energy_ledger(&coarse, horizon)?
            .interval_residuals(m / 2)?
            .iter()
            .map(|r| r.relative)
            .fold(0.0, f64::max)
    } else {
        f64::NAN
    };
    Ok(EnergyReport {
        dt: scn.dt(),
        intervals,
        max_relative: max_rel,
        coarse_max_relative: coarse_max,
        refinement_ratio: coarse_max / max_rel,
    })
}

// ---------------------------------------------------------------------------
// Self-convergence
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub horizon: f64,
    pub steps_per_delay: Vec<usize>,
    pub reference_steps_per_delay: usize,
    /// `‖u_Δt(T) − u_ref(T)‖` in `L²`, one per entry of `steps_per_delay`.
    pub errors: Vec<f64>,
    /// `errors[i] / errors[i + 1]`
    pub factors: Vec<f64>,
}

/// Final-state error against a fine reference for a sequence of steps.
pub fn self_convergence(
    scn: &Scenario,
    horizon: f64,
    steps_per_delay: &[usize],
    reference: usize,
) -> Result<ConvergenceReport> {
    let final_state = |m: usize| -> Result<SpectralField> {
        let mut cfg = scn.config.clone();
        cfg.integration.steps_per_delay = m;
        let s = Scenario::new(cfg)?.with_initial(scn.initial.clone());
        Ok(simulate(&s, horizon, |_| Ok(()))?.states[0].clone())
    };
    let reference_state = final_state(reference)?;
    let errors = steps_per_delay
        .iter()
        .map(|&m| {
            Ok(scn
                .basis
                .norm_sobolev(&final_state(m)?.sub(&reference_state), 0.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    let factors = errors.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(ConvergenceReport {
        horizon,
        steps_per_delay: steps_per_delay.to_vec(),
        reference_steps_per_delay: reference,
        errors,
        factors,
    })
}

// ---------------------------------------------------------------------------
// Absorbing radii
// ---------------------------------------------------------------------------

/// `R₀²(t)`: the initial energy term decaying at `β₁` plus the forcing term,
/// with `k_integral = ∫_τ^t e^{−β₁(t−s)}‖k(s)‖² ds`.
pub fn compute_r0(
    bounds: &BoundsParameters,
    chi_energy: f64,
    elapsed: f64,
    k_integral: f64,
) -> Result<f64> {
    if !(bounds.beta1 > 0.0) {
        return Err(Error::InvalidBounds(format!("beta1 = {}", bounds.beta1)));
    }
    let p = bounds.prefactor();
    Ok(p * chi_energy * (-bounds.beta1 * elapsed).exp() + forcing_term(bounds, k_integral))
}

/// `R²(t) = 1 + (forcing term of R₀²)`.
pub fn compute_r_sq(bounds: &BoundsParameters, k_integral: f64) -> f64 {
    1.0 + forcing_term(bounds, k_integral)
}

fn forcing_term(bounds: &BoundsParameters, k_integral: f64) -> f64 {
    bounds.prefactor() * (bounds.beta * bounds.mu).exp() * k_integral / bounds.delta
}

/// Running value of `∫_τ^t e^{−β₁(t−s)}‖k(s)‖² ds`, advanced one step at a
/// time with Simpson's rule on each step.
#[derive(Clone, Copy, Debug)]
pub struct ForcingIntegral {
    beta1: f64,
    pub t: f64,
    pub value: f64,
}

impl ForcingIntegral {
    pub fn new(beta1: f64, tau: f64) -> Self {
        ForcingIntegral {
            beta1,
            t: tau,
            value: 0.0,
        }
    }

    pub fn advance(&mut self, scn: &Scenario, t_next: f64) {
        let h = t_next - self.t;
        let b = self.beta1;
        let local = h / 6.0
            * ((-b * h).exp() * scn.forcing_norm_sq(self.t)
                + 4.0 * (-b * 0.5 * h).exp() * scn.forcing_norm_sq(self.t + 0.5 * h)
                + scn.forcing_norm_sq(t_next));
        self.value = (-b * h).exp() * self.value + local;
        self.t = t_next;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RadiusSample {
    pub t: f64,
    pub observed: f64,
    pub r0_sq: f64,
    pub r_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemberMargin {
    pub chi_energy: f64,
    pub max_observed: f64,
    /// `min (R₀² − observed)/R₀²`
    pub min_relative_margin_r0: f64,
    /// Same against `R²`, over times where the initial term has dropped below 1.
    pub min_relative_margin_r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusReport {
    pub bounds: BoundsParameters,
    pub prefactor: f64,
    pub horizon: f64,
    pub members: Vec<MemberMargin>,
    /// Full series of the first member.
    pub series: Vec<RadiusSample>,
    pub min_relative_margin_r0: f64,
    pub violations: usize,
}

pub const RADIUS_SLACK: f64 = 1e-8;

/// `‖χ‖_{C_H} ≤ 1` random affine history.
pub fn random_unit_history(scn: &Scenario, rng: &mut ChaCha8Rng) -> HistorySegment {
    let chi = HistorySegment::random_affine(scn.basis.len(), scn.mu(), rng);
    let e = initial_energy(scn, &chi);
    let r: f64 = rng.gen_range(0.2..1.0);
    chi.scaled(r / e.sqrt())
}

fn dissipation_threshold(scn: &Scenario) -> f64 {
    1.5 + 0.5 * scn.config.epsilon.bound_l + 1.0 / (4.0 * scn.lambda1())
}

fn radius_run(
    scn: &Scenario,
    bounds: &BoundsParameters,
    chi: &HistorySegment,
    horizon: f64,
    keep_series: bool,
) -> Result<(MemberMargin, Vec<RadiusSample>)> {
    let scn = scn.clone().with_initial(chi.clone());
    let chi_energy = scn.initial_energy();
    let tau = scn.config.tau;
    let sub = scn.config.integration.subsamples;
    let p = bounds.prefactor();
    let absorbed_after = if p * chi_energy > 1.0 {
        (p * chi_energy).ln() / bounds.beta1
    } else {
        0.0
    };
    let mut integral = ForcingIntegral::new(bounds.beta1, tau);
    let mut series = Vec::new();
    let mut margin = MemberMargin {
        chi_energy,
        max_observed: 0.0,
        min_relative_margin_r0: f64::INFINITY,
        min_relative_margin_r: f64::INFINITY,
    };
    simulate(&scn, horizon, |v| {
        if v.t > integral.t {
            integral.advance(&scn, v.t);
        }
        let w = window_norms(
            &v.buffers[0],
            v.t,
            &scn.basis,
            &scn.config.epsilon,
            0.0,
            sub,
        )?;
        let observed = w.phase_sq();
        let r0 = compute_r0(bounds, chi_energy, v.t - tau, integral.value)?;
        let r = compute_r_sq(bounds, integral.value);
        margin.max_observed = margin.max_observed.max(observed);
        margin.min_relative_margin_r0 = margin.min_relative_margin_r0.min((r0 - observed) / r0);
        if v.t - tau >= absorbed_after {
            margin.min_relative_margin_r = margin.min_relative_margin_r.min((r - observed) / r);
        }
        if keep_series {
            series.push(RadiusSample {
                t: v.t,
                observed,
                r0_sq: r0,
                r_sq: r,
            });
        }
        Ok(())
    })?;
    Ok((margin, series))
}

/// Simulates `members` random histories and compares their windowed energy
/// with `R₀²(t)` and `R²(t)`.
pub fn check_absorption(
    scn: &Scenario,
    bounds: &BoundsParameters,
    members: usize,
    horizon: f64,
    seed: u64,
) -> Result<RadiusReport> {
    let need = dissipation_threshold(scn);
    if !(scn.config.diffusion.c_a1 > need) {
        return Err(Error::assumption(
            "C_a1 > 3/2 + L/2 + 1/(4 lambda1)",
            format!("C_a1 = {}, threshold = {need}", scn.config.diffusion.c_a1),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chis: Vec<HistorySegment> = (0..members)
        .map(|_| random_unit_history(scn, &mut rng))
        .collect();
    let results = chis
        .par_iter()
        .enumerate()
        .map(|(i, chi)| radius_run(scn, bounds, chi, horizon, i == 0))
        .collect::<Result<Vec<_>>>()?;
    let mut series = Vec::new();
    let mut out = Vec::with_capacity(members);
    for (i, (m, s)) in results.into_iter().enumerate() {
        if i == 0 {
            series = s;
        }
        out.push(m);
    }
    let min_margin = out
        .iter()
        .map(|m| m.min_relative_margin_r0)
        .fold(f64::INFINITY, f64::min);
    let violations = out
        .iter()
        .filter(|m| m.min_relative_margin_r0 < -RADIUS_SLACK)
        .count();
    if violations > 0 {
        warn!("{violations} ensemble members exceed R0^2(t)");
    }
    Ok(RadiusReport {
        bounds: *bounds,
        prefactor: bounds.prefactor(),
        horizon,
        members: out,
        series,
        min_relative_margin_r0: min_margin,
        violations,
    })
}

// ---------------------------------------------------------------------------
// Decomposition u = v₁ + v₂
// ---------------------------------------------------------------------------

/// Samples of a co-integrated pair stored at every knot.
struct PairSamples {
    times: Vec<f64>,
    first: Vec<SpectralField>,
    second: Vec<SpectralField>,
    mass: Vec<Vec<f64>>,
    coefficient: Vec<f64>,
    /// Right side of the difference equation, without the linear part.
    source: Vec<SpectralField>,
}

fn residual_of_difference(
    basis: &BasisTable,
    zeta: f64,
    samples: &PairSamples,
    dt: f64,
    period: usize,
) -> f64 {
    let diff: Vec<SpectralField> = samples
        .first
        .iter()
        .zip(&samples.second)
        .map(|(a, b)| a.sub(b))
        .collect();
    let derivs = knot_derivatives(&diff, dt, period);
    let lam = basis.eigenvalues();
    let mut worst = 0.0_f64;
    for (i, d) in derivs.iter().enumerate() {
        let Some(d) = d else { continue };
        let a = samples.coefficient[i];
        let inertia = SpectralField::from_coeffs(
            samples.mass[i]
                .iter()
                .zip(d.coeffs())
                .map(|(m, c)| m * c)
                .collect(),
        );
        let linear = SpectralField::from_coeffs(
            lam.iter()
                .zip(diff[i].coeffs())
                .map(|(l, c)| (a * l + zeta) * c)
                .collect(),
        );
        let residual = inertia.add(&linear).sub(&samples.source[i]);
        let scale = 1.0 + l2(&inertia) + l2(&linear) + l2(&samples.source[i]);
        worst = worst.max(l2(&residual) / scale);
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionRun {
    pub sigma: f64,
    pub times: Vec<f64>,
    /// `‖v₁‖² + |ε(t)|‖∇v₁‖²`
    pub v1_energy: Vec<f64>,
    /// `‖v₁ₜ‖²_{C_{L²}} + |ε(t)|‖∇v₁ₜ‖²_{C_{L²}}`
    pub v1_window_energy: Vec<f64>,
    /// Largest step-to-step increase of each series (≤ 0 means monotone).
    pub v1_max_increase: f64,
    pub v1_window_max_increase: f64,
    /// Least-squares `ln(window energy) ≈ intercept − rate · t` after one delay.
    pub decay_rate: Option<f64>,
    pub decay_intercept: Option<f64>,
    pub v2_residual: f64,
    /// Windowed `‖A^{σ/2}v₂‖² + |ε(t)|‖A^{(1+σ)/2}v₂‖²`.
    pub sigma_trace: Vec<f64>,
    pub sigma_sup: f64,
    pub sigma_sup_early: f64,
    pub sigma_sup_final_quarter: f64,
}

impl DecompositionRun {
    /// Final-quarter supremum exceeds the supremum before it by this much.
    pub fn late_growth(&self) -> f64 {
        self.sigma_sup_final_quarter - self.sigma_sup_early
    }
}

fn sup(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn max_increase(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Co-integrates `u` and `v₁` from the scenario's initial history.
pub fn run_decomposition(scn: &Scenario, horizon: f64) -> Result<DecompositionRun> {
    let system = DecompositionSystem { scn };
    let mut state = initialize(&system, &[scn.initial.clone(), scn.initial.clone()])?;
    let sigma = scn.config.sigma;
    let sub = scn.config.integration.subsamples;
    let eps = &scn.config.epsilon;
    let mut samples = PairSamples {
        times: Vec::new(),
        first: Vec::new(),
        second: Vec::new(),
        mass: Vec::new(),
        coefficient: Vec::new(),
        source: Vec::new(),
    };
    let (mut e1, mut w1, mut trace) = (Vec::new(), Vec::new(), Vec::new());
    integrate(&system, &mut state, steps_for(horizon, scn.dt())?, |v| {
        let (u, v1) = (&v.states[0], &v.states[1]);
        let (_, b) = rhs(scn, v.t, u, &v.buffers[0])?;
        let mut source = b.nonlinear.sub(&scn.nonlinearity_apply(v1, Which::G0)?);
        source.axpy(1.0, &b.delay);
        source.axpy(1.0, &b.forcing);
        let e = eps.value(v.t).abs();
        e1.push(scn.basis.norm_sobolev_sq(v1, 0.0) + e * scn.basis.norm_sobolev_sq(v1, 1.0));
        w1.push(window_norms(&v.buffers[1], v.t, &scn.basis, eps, sigma, sub)?.phase_sq());
        let v2_buf = v.buffers[0].difference(&v.buffers[1])?;
        trace.push(window_norms(&v2_buf, v.t, &scn.basis, eps, sigma, sub)?.fractional_sq());
        samples.times.push(v.t);
        samples.first.push(u.clone());
        samples.second.push(v1.clone());
        samples.mass.push(b.mass);
        samples.coefficient.push(b.coefficient);
        samples.source.push(source);
        Ok(())
    })?;

    let m = scn.config.integration.steps_per_delay;
    let v2_residual = residual_of_difference(&scn.basis, scn.config.zeta, &samples, scn.dt(), m);
    let tau = scn.config.tau;
    let (fx, fy): (Vec<f64>, Vec<f64>) = samples
        .times
        .iter()
        .zip(&w1)
        .filter(|(t, e)| **t >= tau + scn.mu() && **e > 0.0)
        .map(|(t, e)| (*t, e.ln()))
        .unzip();
    let fit = linear_fit(&fx, &fy);
    let n = trace.len();
    let q = (3 * n) / 4;
    Ok(DecompositionRun {
        sigma,
        times: samples.times,
        v1_max_increase: max_increase(&e1),
        v1_window_max_increase: max_increase(&w1),
        v1_energy: e1,
        v1_window_energy: w1,
        decay_rate: fit.map(|(s, _)| -s),
        decay_intercept: fit.map(|(_, c)| c),
        v2_residual,
        sigma_sup: sup(&trace),
        sigma_sup_early: sup(&trace[..q.max(1)]),
        sigma_sup_final_quarter: sup(&trace[q..]),
        sigma_trace: trace,
    })
}

// ---------------------------------------------------------------------------
// Regularity split u = u¹ + u²
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularitySplitRun {
    pub smoothing_modes: usize,
    /// `sup_t ‖k − k̃‖`
    pub r1: f64,
    pub times: Vec<f64>,
    /// `‖uₜ‖²_{C_{H¹}}` (current-time ε).
    pub u_norm: Vec<f64>,
    /// `K₁ = sup ‖u¹ₜ‖²_{C_{H¹}}`
    pub k1: f64,
    /// `K₂ = sup ‖u²ₜ‖²_{C_{H¹}}`
    pub k2: f64,
    pub k_bar: f64,
    /// `max_t ‖uₜ‖² / (2(‖u¹ₜ‖² + ‖u²ₜ‖²))`; at most 1 when the split inequality holds.
    pub split_ratio: f64,
    pub sup_u_norm: f64,
    /// Whether `sup ‖uₜ‖² ≤ K₁ + K₂` without the factor 2.
    pub literal_bound_holds: bool,
    /// Slope of a linear fit of `u_norm` over the last half of the run.
    pub late_slope: f64,
    pub u2_residual: f64,
    pub consistency_error: f64,
}

/// Co-integrates `u` and `u¹` and measures the regular norms of both parts.
pub fn run_regularity_split(
    scn: &Scenario,
    horizon: f64,
    smoothing_modes: usize,
) -> Result<RegularitySplitRun> {
    let need = dissipation_threshold(scn);
    if !(scn.config.diffusion.c_a1 > need) {
        return Err(Error::assumption(
            "C_a1 > 3/2 + L/2 + 1/(4 lambda1)",
            format!("C_a1 = {}, threshold = {need}", scn.config.diffusion.c_a1),
        ));
    }
    let system = RegularitySystem {
        scn,
        smoothing_modes,
    };
    let mut state = initialize(&system, &[scn.initial.clone(), scn.initial.clone()])?;
    let sub = scn.config.integration.subsamples;
    let eps = &scn.config.epsilon;
    let mut samples = PairSamples {
        times: Vec::new(),
        first: Vec::new(),
        second: Vec::new(),
        mass: Vec::new(),
        coefficient: Vec::new(),
        source: Vec::new(),
    };
    let (mut un, mut n1, mut n2) = (Vec::new(), Vec::new(), Vec::new());
    let mut r1 = 0.0_f64;
    let mut consistency = 0.0_f64;
    let mut split_ratio = 0.0_f64;
    integrate(&system, &mut state, steps_for(horizon, scn.dt())?, |v| {
        let (u, u1) = (&v.states[0], &v.states[1]);
        let (_, b) = rhs(scn, v.t, u, &v.buffers[0])?;
        let smooth = system.smoothed_forcing(v.t);
        r1 = r1.max(scn.basis.norm_sobolev(&b.forcing.sub(&smooth), 0.0));
        let mut source = b.nonlinear.clone();
        source.axpy(1.0, &b.delay);
        source.axpy(1.0, &smooth);
        let u2_buf = v.buffers[0].difference(&v.buffers[1])?;
        let nu = window_norms(&v.buffers[0], v.t, &scn.basis, eps, 0.0, sub)?.regular_sq();
        let a = window_norms(&v.buffers[1], v.t, &scn.basis, eps, 0.0, sub)?.regular_sq();
        let c = window_norms(&u2_buf, v.t, &scn.basis, eps, 0.0, sub)?.regular_sq();
        let recombined = u1.add(&u.sub(u1));
        consistency = consistency.max(recombined.sub(u).max_abs());
        if nu > 0.0 {
            split_ratio = split_ratio.max(nu / (2.0 * (a + c)));
        }
        un.push(nu);
        n1.push(a);
        n2.push(c);
        samples.times.push(v.t);
        samples.first.push(u.clone());
        samples.second.push(u1.clone());
        samples.mass.push(b.mass);
        samples.coefficient.push(b.coefficient);
        samples.source.push(source);
        Ok(())
    })?;
    let m = scn.config.integration.steps_per_delay;
    let u2_residual = residual_of_difference(&scn.basis, scn.config.zeta, &samples, scn.dt(), m);
    let k1 = sup(&n1);
    let k2 = sup(&n2);
    let sup_u = sup(&un);
    let half = un.len() / 2;
    let late_slope = linear_fit(&samples.times[half..], &un[half..])
        .map(|(s, _)| s)
        .unwrap_or(0.0);
    Ok(RegularitySplitRun {
        smoothing_modes,
        r1,
        times: samples.times,
        u_norm: un,
        k1,
        k2,
        k_bar: k1 + k2,
        split_ratio,
        sup_u_norm: sup_u,
        literal_bound_holds: sup_u <= k1 + k2,
        late_slope,
        u2_residual,
        consistency_error: consistency,
    })
}

// ---------------------------------------------------------------------------
// Continuous dependence
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuityReport {
    /// `sup_{t>τ} ln(E_diff(t)/D(τ))/(t − τ)`; `−∞` for identical data.
    pub c_hat: f64,
    /// `D(τ) = ‖χ¹ − χ²‖²_{C_{L²}} + |ε(τ)|‖∇(χ¹ − χ²)‖²_{C_{L²}}`
    pub initial_difference: f64,
    /// `‖u(t) − ū(t)‖² + |ε(t)|‖∇(u(t) − ū(t))‖²` at the end of the run.
    pub final_difference: f64,
    pub identical: bool,
}

/// Measured Lipschitz exponent of the solution map between two histories.
pub fn continuity_factor(
    scn: &Scenario,
    chi1: &HistorySegment,
    chi2: &HistorySegment,
    horizon: f64,
) -> Result<ContinuityReport> {
    let diff = match (chi1, chi2) {
        (a, b) if a == b => None,
        _ => Some(()),
    };
    let d0 = {
        let m = scn.config.integration.steps_per_delay;
        let sub = scn.config.integration.subsamples;
        let count = m * (sub + 1);
        let mu = scn.mu();
        let (mut a, mut g) = (0.0_f64, 0.0_f64);
        for i in 0..=count {
            let rho = -mu + mu * i as f64 / count as f64;
            let d = chi1.value(rho).sub(&chi2.value(rho));
            a = a.max(scn.basis.norm_sobolev_sq(&d, 0.0));
            g = g.max(scn.basis.norm_sobolev_sq(&d, 1.0));
        }
        a + scn.config.epsilon.value(scn.config.tau).abs() * g
    };
    if diff.is_none() || d0 == 0.0 {
        return Ok(ContinuityReport {
            c_hat: f64::NEG_INFINITY,
            initial_difference: 0.0,
            final_difference: 0.0,
            identical: true,
        });
    }
    let record = |chi: &HistorySegment| -> Result<Vec<SpectralField>> {
        let s = scn.clone().with_initial(chi.clone());
        let mut out = Vec::new();
        simulate(&s, horizon, |v| {
            out.push(v.states[0].clone());
            Ok(())
        })?;
        Ok(out)
    };
    let (a, b) = rayon::join(|| record(chi1), || record(chi2));
    let (a, b) = (a?, b?);
    let tau = scn.config.tau;
    let dt = scn.dt();
    let mut c_hat = f64::NEG_INFINITY;
    let mut last = 0.0;
    for (i, (x, y)) in a.iter().zip(&b).enumerate().skip(1) {
        let t = tau + i as f64 * dt;
        let d = x.sub(y);
        let e = scn.basis.norm_sobolev_sq(&d, 0.0)
            + scn.config.epsilon.value(t).abs() * scn.basis.norm_sobolev_sq(&d, 1.0);
        last = e;
        if e > 0.0 {
            c_hat = c_hat.max((e / d0).ln() / (t - tau));
        }
    }
    Ok(ContinuityReport {
        c_hat,
        initial_difference: d0,
        final_difference: last,
        identical: false,
    })
}

// ---------------------------------------------------------------------------
// Hausdorff semidistance and pullback attraction
// ---------------------------------------------------------------------------

/// `sup_{a∈A} inf_{b∈B} d(a, b)`.
pub fn semidistance_by<T, D>(a: &[T], b: &[T], dist: D) -> Result<f64>
where
    D: Fn(&T, &T) -> Result<f64>,
{
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("semidistance needs nonempty clouds".into()));
    }
    let mut worst = 0.0_f64;
    for x in a {
        let mut best = f64::INFINITY;
        for y in b {
            best = best.min(dist(x, y)?);
        }
        worst = worst.max(best);
    }
    Ok(worst)
}

/// Semidistance between spectral clouds in the `H^s` norm `‖A^{s/2}·‖`.
pub fn hausdorff_semidistance(
    a: &[SpectralField],
    b: &[SpectralField],
    basis: &BasisTable,
    s: f64,
) -> Result<f64> {
    semidistance_by(a, b, |x, y| {
        x.check_len(basis.len())?;
        y.check_len(basis.len())?;
        Ok(basis.norm_sobolev(&x.sub(y), s))
    })
}

/// `sup d(a, b)` over pairs within one cloud.
pub fn diameter_by<T, D>(a: &[T], dist: D) -> Result<f64>
where
    D: Fn(&T, &T) -> Result<f64>,
{
    let mut worst = 0.0_f64;
    for (i, x) in a.iter().enumerate() {
        for y in &a[i + 1..] {
            worst = worst.max(dist(x, y)?);
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PullbackReport {
    pub t_star: f64,
    pub n_max: usize,
    pub cloud_size: usize,
    pub taus: Vec<f64>,
    /// Semidistance of cloud `n` to cloud `n_max`, for `n < n_max`.
    pub to_reference: Vec<f64>,
    /// Semidistance of cloud `n` to cloud `n + 1`.
    pub successive: Vec<f64>,
    pub diameters: Vec<f64>,
    /// `max_i ‖χ_i‖²_{C_H}`
    pub max_chi_energy: f64,
    /// `2 max_i ‖χ_i‖² e^{−β₁ 2ⁿ μ}` for each `n < n_max`, when bounds are given.
    pub envelope: Option<Vec<f64>>,
    pub complete: bool,
}

impl PullbackReport {
    pub fn final_value(&self) -> Option<f64> {
        self.to_reference.last().copied()
    }

    /// Whether `to_reference` is nonincreasing from index `from` on.
    pub fn nonincreasing_from(&self, from: usize) -> bool {
        self.to_reference
            .iter()
            .skip(from)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1] <= w[0])
    }

    /// Whether every squared semidistance lies under the envelope.
    pub fn within_envelope(&self) -> Option<bool> {
        self.envelope
            .as_ref()
            .map(|env| self.to_reference.iter().zip(env).all(|(d, e)| d * d <= *e))
    }
}

/// Distance between two final windows in the phase-space norm.
fn window_distance(scn: &Scenario, a: &HistoryBuffer, b: &HistoryBuffer, t: f64) -> Result<f64> {
    let d = a.difference(b)?;
    let w: WindowNorms = window_norms(
        &d,
        t,
        &scn.basis,
        &scn.config.epsilon,
        0.0,
        scn.config.integration.subsamples,
    )?;
    Ok(w.phase_sq().sqrt())
}

/// Integrates a fixed random cloud from `τ_n = t* − 2ⁿμ` to `t*` for
/// `n = 0..=n_max` and measures how the clouds approach the most
/// pulled-back one.
pub fn pullback_experiment(
    scn: &Scenario,
    t_star: f64,
    n_max: usize,
    cloud_size: usize,
    seed: u64,
    bounds: Option<&BoundsParameters>,
    budget: Option<Duration>,
) -> Result<PullbackReport> {
    if cloud_size == 0 {
        return Err(Error::Argument("cloud size must be >= 1".into()));
    }
    let start = Instant::now();
    let mu = scn.mu();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chis: Vec<HistorySegment> = (0..cloud_size)
        .map(|_| random_unit_history(scn, &mut rng))
        .collect();
    let max_chi_energy = chis
        .iter()
        .map(|c| initial_energy(scn, c))
        .fold(0.0, f64::max);
    let mut clouds: Vec<Vec<HistoryBuffer>> = Vec::new();
    let mut taus = Vec::new();
    let mut complete = true;
    for n in 0..=n_max {
        if budget.is_some_and(|b| start.elapsed() > b) {
            warn!("pullback budget exhausted before n = {n}");
            complete = false;
            break;
        }
        let horizon = (1u64 << n) as f64 * mu;
        let tau = t_star - horizon;
        let mut cfg: ScenarioConfig = scn.config.clone();
        cfg.tau = tau;
        let shifted = Scenario::new(cfg)?;
        let cloud = chis
            .par_iter()
            .map(|chi| {
                let s = shifted.clone().with_initial(chi.clone());
                let st = simulate(&s, horizon, |_| Ok(()))?;
                Ok(st.buffers[0].clone())
            })
            .collect::<Result<Vec<_>>>()?;
        info!("pullback cloud n = {n} from tau = {tau} done");
        taus.push(tau);
        clouds.push(cloud);
    }
    let dist = |a: &HistoryBuffer, b: &HistoryBuffer| window_distance(scn, a, b, t_star);
    let reference = clouds.last().expect("n = 0 always runs");
    let last = clouds.len() - 1;
    let to_reference = clouds[..last]
        .iter()
        .map(|c| semidistance_by(c, reference, dist))
        .collect::<Result<Vec<_>>>()?;
    let successive = clouds
        .windows(2)
        .map(|w| semidistance_by(&w[0], &w[1], dist))
        .collect::<Result<Vec<_>>>()?;
    let diameters = clouds
        .iter()
        .map(|c| diameter_by(c, dist))
        .collect::<Result<Vec<_>>>()?;
    let envelope = bounds.map(|b| {
        (0..last)
            .map(|n| 2.0 * max_chi_energy * (-b.beta1 * (1u64 << n) as f64 * mu).exp())
            .collect()
    });
    Ok(PullbackReport {
        t_star,
        n_max,
        cloud_size,
        taus,
        to_reference,
        successive,
        diameters,
        max_chi_energy,
        envelope,
        complete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Forcing, InitialHistory, ScenarioConfig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_exact_for_cubics() {
        let h = 0.1;
        for n in [2usize, 3, 4, 5, 7] {
            let v: Vec<f64> = (0..=n).map(|i| (i as f64 * h).powi(3)).collect();
            let exact = (n as f64 * h).powi(4) / 4.0;
            assert_abs_diff_eq!(composite_simpson(&v, h), exact, epsilon = 1e-14);
        }
    }

    #[test]
    fn fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let (s, c) = linear_fit(&x, &y).unwrap();
        assert_abs_diff_eq!(s, -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(c, 3.0, epsilon = 1e-14);
    }

    #[test]
    fn knot_derivatives_avoid_breaks() {
        // f = t for t ≤ 1, f = t + (t − 1)² afterwards; break at knot 10.
        let h = 0.1;
        let f = |t: f64| t + if t > 1.0 { (t - 1.0).powi(2) } else { 0.0 };
        let fp = |t: f64| 1.0 + if t > 1.0 { 2.0 * (t - 1.0) } else { 0.0 };
        let series: Vec<SpectralField> = (0..=30)
            .map(|i| SpectralField::from_coeffs(vec![f(i as f64 * h)]))
            .collect();
        let d = knot_derivatives(&series, h, 10);
        for (i, v) in d.iter().enumerate() {
            let v = v.as_ref().unwrap();
            let t = i as f64 * h;
            assert!((v.coeffs()[0] - fp(t)).abs() < 1e-10, "knot {i}");
        }
    }

    #[test]
    fn zero_trajectory_has_zero_residual() {
        let mut cfg = ScenarioConfig::default_nonlinear();
        cfg.forcing = Forcing::None;
        cfg.initial_history = InitialHistory::Zero;
        let scn = Scenario::new(cfg).unwrap();
        let ledger = energy_ledger(&scn, 0.5).unwrap();
        assert_eq!(ledger.residual(0, 80).unwrap().0, 0.0);
    }

    #[test]
    fn prefactor_two_with_delay() {
        let b = crate::model::validate_scenario(&ScenarioConfig::default_nonlinear()).unwrap();
        let p = b.prefactor();
        let tol = 4.0 * f64::EPSILON * (1.0 + b.beta / (b.beta - b.beta1));
        assert!((p - 2.0).abs() <= tol, "{p}");
        let r0 = compute_r0(&b, 0.7, 0.0, 0.0).unwrap();
        assert!((r0 - 1.4).abs() < 1e-12);
    }

    #[test]
    fn r0_decays_without_forcing() {
        let b = crate::model::validate_scenario(&ScenarioConfig::default_nonlinear()).unwrap();
        assert!(compute_r0(&b, 1.0, 1e3, 0.0).unwrap() < 1e-300);
    }

    #[test]
    fn r0_rejects_nonpositive_beta1() {
        let mut b = BoundsParameters::with_beta(1.0, 1.0, 0.1, 0.5, 1.0, 1.0);
        b.beta1 = 0.0;
        assert!(matches!(
            compute_r0(&b, 1.0, 1.0, 0.0),
            Err(Error::InvalidBounds(_))
        ));
    }

    #[test]
    fn forcing_integral_constant_norm() {
        // ‖k‖² ≡ c gives ∫ e^{−β₁(t−s)} c ds = c (1 − e^{−β₁T}) / β₁
        let mut cfg = ScenarioConfig::default_nonlinear();
        cfg.forcing = Forcing::Separable {
            kappa: 0.5,
            profile: crate::model::TimeProfile::Constant { value: 1.0 },
            shape: crate::model::FieldSpec::single(1, 1.0),
        };
        let scn = Scenario::new(cfg).unwrap();
        let b = crate::model::validate_scenario(&scn.config).unwrap();
        let mut fi = ForcingIntegral::new(b.beta1, 0.0);
        let dt = scn.dt();
        let steps = 400;
        for i in 1..=steps {
            fi.advance(&scn, i as f64 * dt);
        }
        let t = steps as f64 * dt;
        let c = 0.25;
        let exact = c * (1.0 - (-b.beta1 * t).exp()) / b.beta1;
        assert!((fi.value - exact).abs() < 1e-9 * exact);
        let term = compute_r0(&b, 0.0, t, fi.value).unwrap();
        let closed =
            2.0 * c / b.delta * (b.beta * b.mu).exp() * (1.0 - (-b.beta1 * t).exp()) / b.beta1;
        assert!((term - closed).abs() < 1e-9 * closed);
    }

    #[test]
    fn semidistance_basic_cases() {
        let basis = BasisTable::build(&crate::spectral::DomainSpec::interval(
            std::f64::consts::PI,
            4,
        ))
        .unwrap();
        let e1 = SpectralField::unit(4, 0, 1.0);
        let e1x2 = SpectralField::unit(4, 0, 2.0);
        assert_eq!(
            hausdorff_semidistance(
                std::slice::from_ref(&e1),
                std::slice::from_ref(&e1x2),
                &basis,
                0.0
            )
            .unwrap(),
            1.0
        );
        let a = vec![e1.clone()];
        let b = vec![e1.clone(), e1x2];
        assert_eq!(hausdorff_semidistance(&a, &b, &basis, 0.0).unwrap(), 0.0);
        assert!(hausdorff_semidistance(&[], &b, &basis, 0.0).is_err());
    }

    #[test]
    fn identical_histories_give_sentinel() {
        let scn = Scenario::new(ScenarioConfig::linear_single_mode()).unwrap();
        let r = continuity_factor(&scn, &scn.initial, &scn.initial, 1.0).unwrap();
        assert!(r.identical);
        assert_eq!(r.c_hat, f64::NEG_INFINITY);
    }

    #[test]
    fn zero_history_gives_zero_v1() {
        let mut cfg = ScenarioConfig::default_nonlinear();
        cfg.initial_history = InitialHistory::Zero;
        let scn = Scenario::new(cfg).unwrap();
        let run = run_decomposition(&scn, 1.0).unwrap();
        assert!(run.v1_energy.iter().all(|&e| e == 0.0));
        assert!(run.decay_rate.is_none());
    }

    #[test]
    fn single_cloud_has_zero_diameter() {
        let scn = Scenario::new(ScenarioConfig::linear_single_mode()).unwrap();
        let r = pullback_experiment(&scn, 0.0, 2, 1, 1, None, None).unwrap();
        assert!(r.diameters.iter().all(|&d| d == 0.0));
        assert!(r.complete);
    }

    #[test]
    fn regularity_split_refuses_weak_diffusion() {
        let scn = Scenario::new(ScenarioConfig::linear_single_mode()).unwrap();
        assert!(matches!(
            run_regularity_split(&scn, 1.0, 1),
            Err(Error::Assumption { .. })
        ));
    }
}
