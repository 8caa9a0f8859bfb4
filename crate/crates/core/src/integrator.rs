//! Fixed-step classical Runge–Kutta for the projected system
//!
//! ```text
//! (1 + ε(t)λ_j) y_j' = −(a(l(u))λ_j + ζ) y_j + ⟨g(u) + φ(t, uₜ) + k(t), e_j⟩
//! ```
//!
//! marched by the method of steps with `Δt = μ/m`. Every accepted step
//! pushes a knot whose derivative is the right-hand side at the new state,
//! which is also the first stage of the next step.

use log::debug;

use crate::error::{Error, Result};
use crate::history::HistoryBuffer;
use crate::model::{HistorySegment, Scenario, Which};
use crate::spectral::SpectralField;

/// Terms of the projected equation before division by the mass diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct RHSBreakdown {
    /// `−a(l(u)) λ_j y_j`
    pub diffusion: SpectralField,
    /// `−ζ y_j`
    pub reaction: SpectralField,
    pub nonlinear: SpectralField,
    pub delay: SpectralField,
    pub forcing: SpectralField,
    /// `1 + ε(t) λ_j`
    pub mass: Vec<f64>,
    pub coefficient: f64,
}

impl RHSBreakdown {
    /// Sum of the terms divided by the mass diagonal.
    pub fn derivative(&self) -> SpectralField {
        let n = self.mass.len();
        SpectralField::from_coeffs(
            (0..n)
                .map(|j| {
                    (self.diffusion.coeffs()[j]
                        + self.reaction.coeffs()[j]
                        + self.nonlinear.coeffs()[j]
                        + self.delay.coeffs()[j]
                        + self.forcing.coeffs()[j])
                        / self.mass[j]
                })
                .collect(),
        )
    }
}

/// Linear part `−(a λ_j + ζ) y_j`, with the mass division folded in later.
fn damping(scn: &Scenario, a: f64, y: &SpectralField) -> SpectralField {
    let zeta = scn.config.zeta;
    SpectralField::from_coeffs(
        y.coeffs()
            .iter()
            .zip(scn.basis.eigenvalues())
            .map(|(c, l)| -(a * l + zeta) * c)
            .collect(),
    )
}

fn divide_by_mass(mut f: SpectralField, mass: &[f64]) -> SpectralField {
    for (c, m) in f.coeffs_mut().iter_mut().zip(mass) {
        *c /= m;
    }
    f
}

/// Right-hand side of the projected equation at `(t, u)` with history `buffer`.
pub fn rhs(
    scn: &Scenario,
    t: f64,
    u: &SpectralField,
    buffer: &HistoryBuffer,
) -> Result<(SpectralField, RHSBreakdown)> {
    u.check_len(scn.basis.len())?;
    let mass = scn.mass_diagonal(t)?;
    let a = scn.nonlocal_coefficient(u)?;
    let zeta = scn.config.zeta;
    let lam = scn.basis.eigenvalues();
    let diffusion = SpectralField::from_coeffs(
        u.coeffs()
            .iter()
            .zip(lam)
            .map(|(c, l)| -a * l * c)
            .collect(),
    );
    let reaction = u.scaled(-zeta);
    let nonlinear = scn.nonlinearity_apply(u, Which::G)?;
    let delay = scn.delay_apply(t, buffer)?;
    let forcing = scn.forcing_at(t);
    let b = RHSBreakdown {
        diffusion,
        reaction,
        nonlinear,
        delay,
        forcing,
        mass,
        coefficient: a,
    };
    let d = b.derivative();
    if !d.is_finite() {
        return Err(Error::Numeric(format!("non-finite derivative at t = {t}")));
    }
    Ok((d, b))
}

/// A system of spectral components advanced together. Component 0 is the
/// solution `u` of the full equation; later components may read its stage
/// value (for the shared coefficient `a(l(u))`) but not its history.
pub trait GalerkinSystem {
    fn scenario(&self) -> &Scenario;

    fn components(&self) -> usize;

    fn evaluate(
        &self,
        t: f64,
        states: &[SpectralField],
        buffers: &[HistoryBuffer],
    ) -> Result<Vec<SpectralField>>;
}

/// The equation itself.
pub struct MainSystem<'a> {
    pub scn: &'a Scenario,
}

impl GalerkinSystem for MainSystem<'_> {
    fn scenario(&self) -> &Scenario {
        self.scn
    }

    fn components(&self) -> usize {
        1
    }

    fn evaluate(
        &self,
        t: f64,
        states: &[SpectralField],
        buffers: &[HistoryBuffer],
    ) -> Result<Vec<SpectralField>> {
        Ok(vec![rhs(self.scn, t, &states[0], &buffers[0])?.0])
    }
}

/// `u` together with `v₁`, which carries only the dissipative part:
/// `(1 + ελ_j) v₁' = −(a(l(u))λ_j + ζ) v₁ + ⟨g₀(v₁), e_j⟩`.
pub struct DecompositionSystem<'a> {
    pub scn: &'a Scenario,
}

impl GalerkinSystem for DecompositionSystem<'_> {
    fn scenario(&self) -> &Scenario {
        self.scn
    }

    fn components(&self) -> usize {
        2
    }

    fn evaluate(
        &self,
        t: f64,
        states: &[SpectralField],
        buffers: &[HistoryBuffer],
    ) -> Result<Vec<SpectralField>> {
        let (du, b) = rhs(self.scn, t, &states[0], &buffers[0])?;
        let mut right = damping(self.scn, b.coefficient, &states[1]);
        right.axpy(1.0, &self.scn.nonlinearity_apply(&states[1], Which::G0)?);
        Ok(vec![du, divide_by_mass(right, &b.mass)])
    }
}

/// `u` together with `u¹`, driven by the high-mode part `k − k̃` of the
/// forcing, where `k̃` keeps the lowest `smoothing_modes` coefficients.
pub struct RegularitySystem<'a> {
    pub scn: &'a Scenario,
    pub smoothing_modes: usize,
}

impl RegularitySystem<'_> {
    pub fn smoothed_forcing(&self, t: f64) -> SpectralField {
        self.scn.forcing_at(t).truncated(self.smoothing_modes)
    }
}

impl GalerkinSystem for RegularitySystem<'_> {
    fn scenario(&self) -> &Scenario {
        self.scn
    }

    fn components(&self) -> usize {
        2
    }

    fn evaluate(
        &self,
        t: f64,
        states: &[SpectralField],
        buffers: &[HistoryBuffer],
    ) -> Result<Vec<SpectralField>> {
        let (du, b) = rhs(self.scn, t, &states[0], &buffers[0])?;
        let mut right = damping(self.scn, b.coefficient, &states[1]);
        right.axpy(1.0, &b.forcing.sub(&self.smoothed_forcing(t)));
        Ok(vec![du, divide_by_mass(right, &b.mass)])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub steps: usize,
    pub rhs_evaluations: usize,
}

/// Current time, states, derivatives and histories of every component.
///
/// Invariants: `t = τ + step·Δt`; each buffer's newest knot sits at `t`;
/// `derivs` is the right-hand side at `(t, states)`.
#[derive(Clone, Debug)]
pub struct GalerkinState {
    pub tau: f64,
    pub t: f64,
    pub dt: f64,
    pub states: Vec<SpectralField>,
    pub derivs: Vec<SpectralField>,
    pub buffers: Vec<HistoryBuffer>,
    pub stats: StepStats,
}

impl GalerkinState {
    pub fn u(&self) -> &SpectralField {
        &self.states[0]
    }

    pub fn step(&self) -> usize {
        self.stats.steps
    }

    pub fn view(&self) -> StepView<'_> {
        StepView {
            step: self.stats.steps,
            t: self.t,
            states: &self.states,
            derivs: &self.derivs,
            buffers: &self.buffers,
        }
    }
}

/// Read-only view handed to observers after every accepted step.
pub struct StepView<'a> {
    pub step: usize,
    pub t: f64,
    pub states: &'a [SpectralField],
    pub derivs: &'a [SpectralField],
    pub buffers: &'a [HistoryBuffer],
}

/// Seeds one buffer per component with its initial history sampled at the
/// knot spacing on `[τ − μ, τ]`.
pub fn initialize<S: GalerkinSystem>(
    system: &S,
    histories: &[HistorySegment],
) -> Result<GalerkinState> {
    let scn = system.scenario();
    let k = system.components();
    if histories.len() != k {
        return Err(Error::Shape {
            expected: k,
            got: histories.len(),
        });
    }
    let tau = scn.config.tau;
    let mu = scn.mu();
    let m = scn.config.integration.steps_per_delay;
    let dt = scn.dt();
    let mut buffers = Vec::with_capacity(k);
    for chi in histories {
        let mut b = HistoryBuffer::new(mu, dt);
        for i in 0..=m {
            let rho = -mu + i as f64 * dt;
            let rho = if i == m { 0.0 } else { rho };
            let value = chi.value(rho);
            value.check_len(scn.basis.len())?;
            b.push(tau + rho, value, chi.derivative(rho))?;
        }
        buffers.push(b);
    }
    let states: Vec<SpectralField> = histories.iter().map(|c| c.value(0.0)).collect();
    let derivs = system.evaluate(tau, &states, &buffers)?;
    for (b, d) in buffers.iter_mut().zip(&derivs) {
        b.set_newest_right_derivative(d.clone())?;
    }
    Ok(GalerkinState {
        tau,
        t: tau,
        dt,
        states,
        derivs,
        buffers,
        stats: StepStats {
            steps: 0,
            rhs_evaluations: 1,
        },
    })
}

fn combine(base: &[SpectralField], h: f64, k: &[SpectralField]) -> Vec<SpectralField> {
    base.iter()
        .zip(k)
        .map(|(y, d)| {
            let mut out = y.clone();
            out.axpy(h, d);
            out
        })
        .collect()
}

/// One classical four-stage step of size `Δt`.
pub fn step_once<S: GalerkinSystem>(system: &S, state: &mut GalerkinState) -> Result<()> {
    let t = state.t;
    let dt = state.dt;
    let wrap = |e: Error| Error::Step {
        t,
        source: Box::new(e),
    };
    let y = &state.states;
    let k1 = &state.derivs;
    let k2 = system
        .evaluate(t + 0.5 * dt, &combine(y, 0.5 * dt, k1), &state.buffers)
        .map_err(wrap)?;
    let k3 = system
        .evaluate(t + 0.5 * dt, &combine(y, 0.5 * dt, &k2), &state.buffers)
        .map_err(wrap)?;
    let k4 = system
        .evaluate(t + dt, &combine(y, dt, &k3), &state.buffers)
        .map_err(wrap)?;
    let next: Vec<SpectralField> = (0..y.len())
        .map(|c| {
            let mut out = y[c].clone();
            out.axpy(dt / 6.0, &k1[c]);
            out.axpy(dt / 3.0, &k2[c]);
            out.axpy(dt / 3.0, &k3[c]);
            out.axpy(dt / 6.0, &k4[c]);
            out
        })
        .collect();
    let steps = state.stats.steps + 1;
    let t_next = state.tau + steps as f64 * dt;
    // Provisional knot derivative k4 so a distributed delay can read
    // [t, t + Δt]; replaced by the exact right-hand side below.
    for (c, b) in state.buffers.iter_mut().enumerate() {
        b.push(t_next, next[c].clone(), k4[c].clone())
            .map_err(wrap)?;
    }
    let derivs = system
        .evaluate(t_next, &next, &state.buffers)
        .map_err(|e| Error::Step {
            t: t_next,
            source: Box::new(e),
        })?;
    for (b, d) in state.buffers.iter_mut().zip(&derivs) {
        b.set_newest_derivative(d.clone())?;
    }
    state.t = t_next;
    state.states = next;
    state.derivs = derivs;
    state.stats.steps = steps;
    state.stats.rhs_evaluations += 4;
    Ok(())
}

/// Advances `steps` steps, calling `observer` on the initial state and after
/// every accepted step.
pub fn integrate<S, F>(
    system: &S,
    state: &mut GalerkinState,
    steps: usize,
    mut observer: F,
) -> Result<()>
where
    S: GalerkinSystem,
    F: FnMut(&StepView) -> Result<()>,
{
    observer(&state.view())?;
    for _ in 0..steps {
        step_once(system, state)?;
        observer(&state.view())?;
    }
    debug!(
        "integrated to t = {} in {} steps ({} rhs evaluations)",
        state.t, state.stats.steps, state.stats.rhs_evaluations
    );
    Ok(())
}

/// Number of steps covering `horizon`, rounded to the nearest whole step.
pub fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon >= 0.0) {
        return Err(Error::Argument(format!("horizon {horizon} must be >= 0")));
    }
    Ok((horizon / dt).round() as usize)
}

/// Runs the main equation from `τ` over `horizon`, returning the final state.
pub fn simulate<F>(scn: &Scenario, horizon: f64, observer: F) -> Result<GalerkinState>
where
    F: FnMut(&StepView) -> Result<()>,
{
    let system = MainSystem { scn };
    let mut state = initialize(&system, std::slice::from_ref(&scn.initial))?;
    integrate(&system, &mut state, steps_for(horizon, scn.dt())?, observer)?;
    Ok(state)
}
