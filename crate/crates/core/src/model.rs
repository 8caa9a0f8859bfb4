//! Structural components of the equation
//!
//! ```text
//! ∂ₜu − ε(t) ∂ₜΔu − a(l(u)) Δu + ζu = g(u) + φ(t, uₜ) + k(t)
//! ```
//!
//! together with their configuration schema, the sampled assumption checks
//! and the derived decay constants.

use std::f64::consts::PI;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::HistoryBuffer;
use crate::spectral::{BasisTable, DomainSpec, SpectralField};

// ---------------------------------------------------------------------------
// ε(t)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonKind {
    Constant {
        value: f64,
    },
    /// `asymptote + amplitude / (1 + e^{rate t})`
    DecreasingLogistic {
        asymptote: f64,
        amplitude: f64,
        rate: f64,
    },
    /// `asymptote − amplitude / (1 + e^{rate t})`
    IncreasingLogistic {
        asymptote: f64,
        amplitude: f64,
        rate: f64,
    },
    /// Monotone C¹ cubic through the points, held constant outside.
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Monotonicity {
    Decreasing,
    Increasing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonProfile {
    #[serde(flatten)]
    pub kind: EpsilonKind,
    /// Lower threshold `α > 1/2` for the limit at `+∞`.
    pub alpha: f64,
    /// Bound `L` on `sup(|ε| + |ε'|)`.
    pub bound_l: f64,
}

impl EpsilonProfile {
    pub fn constant(value: f64, alpha: f64, bound_l: f64) -> Self {
        EpsilonProfile {
            kind: EpsilonKind::Constant { value },
            alpha,
            bound_l,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.at(t).0
    }

    /// `(ε(t), ε'(t))`
    pub fn at(&self, t: f64) -> (f64, f64) {
        match &self.kind {
            EpsilonKind::Constant { value } => (*value, 0.0),
            EpsilonKind::DecreasingLogistic {
                asymptote,
                amplitude,
                rate,
            } => {
                let s = logistic_complement(*rate, t);
                (asymptote + amplitude * s, -amplitude * rate * s * (1.0 - s))
            }
            EpsilonKind::IncreasingLogistic {
                asymptote,
                amplitude,
                rate,
            } => {
                let s = logistic_complement(*rate, t);
                (asymptote - amplitude * s, amplitude * rate * s * (1.0 - s))
            }
            EpsilonKind::Table { times, values } => table_eval(times, values, t),
        }
    }

    pub fn limit_at_infinity(&self) -> f64 {
        match &self.kind {
            EpsilonKind::Constant { value } => *value,
            EpsilonKind::DecreasingLogistic { asymptote, .. }
            | EpsilonKind::IncreasingLogistic { asymptote, .. } => *asymptote,
            EpsilonKind::Table { values, .. } => values.last().copied().unwrap_or(f64::NAN),
        }
    }

    pub fn monotonicity(&self) -> Result<Monotonicity> {
        match &self.kind {
            EpsilonKind::Constant { .. } | EpsilonKind::DecreasingLogistic { .. } => {
                Ok(Monotonicity::Decreasing)
            }
            EpsilonKind::IncreasingLogistic { .. } => Ok(Monotonicity::Increasing),
            EpsilonKind::Table { values, .. } => {
                if values.windows(2).all(|w| w[1] <= w[0]) {
                    Ok(Monotonicity::Decreasing)
                } else if values.windows(2).all(|w| w[1] >= w[0]) {
                    Ok(Monotonicity::Increasing)
                } else {
                    Err(Error::assumption(
                        "eps monotone",
                        "tabulated eps is neither nondecreasing nor nonincreasing",
                    ))
                }
            }
        }
    }

    fn check_structure(&self) -> Result<()> {
        match &self.kind {
            EpsilonKind::DecreasingLogistic { rate, .. }
            | EpsilonKind::IncreasingLogistic { rate, .. }
                if *rate <= 0.0 =>
            {
                Err(Error::Config("logistic eps needs rate > 0".into()))
            }
            EpsilonKind::Table { times, values } => {
                if times.len() < 2 || times.len() != values.len() {
                    return Err(Error::Config(
                        "eps table needs >= 2 matching times and values".into(),
                    ));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config("eps table times must increase".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// `1 / (1 + e^{rate t})`, without overflow.
fn logistic_complement(rate: f64, t: f64) -> f64 {
    let z = rate * t;
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

fn table_eval(times: &[f64], values: &[f64], t: f64) -> (f64, f64) {
    let n = times.len();
    if t <= times[0] {
        return (values[0], 0.0);
    }
    if t >= times[n - 1] {
        return (values[n - 1], 0.0);
    }
    let i = times.partition_point(|&x| x <= t) - 1;
    let slope = |k: usize| -> f64 {
        if k == 0 || k == n - 1 {
            return 0.0;
        }
        let d0 = (values[k] - values[k - 1]) / (times[k] - times[k - 1]);
        let d1 = (values[k + 1] - values[k]) / (times[k + 1] - times[k]);
        if d0 * d1 <= 0.0 {
            0.0
        } else {
            2.0 / (1.0 / d0 + 1.0 / d1)
        }
    };
    let h = times[i + 1] - times[i];
    let th = (t - times[i]) / h;
    let (y0, y1, m0, m1) = (values[i], values[i + 1], slope(i), slope(i + 1));
    let value = (1.0 + 2.0 * th) * (1.0 - th).powi(2) * y0
        + th * (1.0 - th).powi(2) * h * m0
        + th * th * (3.0 - 2.0 * th) * y1
        + th * th * (th - 1.0) * h * m1;
    let deriv = 6.0 * th * (th - 1.0) / h * (y0 - y1)
        + (1.0 - th) * (1.0 - 3.0 * th) * m0
        + th * (3.0 * th - 2.0) * m1;
    (value, deriv)
}

// ---------------------------------------------------------------------------
// Spectral field configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeValue {
    /// 1-based multi-index: `[j]` in 1D, `[j, k]` in 2D.
    pub mode: Vec<usize>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSpec {
    Sparse(Vec<ModeValue>),
    /// Coefficients in sorted-eigenvalue order; missing entries are zero.
    Dense(Vec<f64>),
}

impl FieldSpec {
    pub fn zero() -> Self {
        FieldSpec::Sparse(Vec::new())
    }

    pub fn single(mode: usize, value: f64) -> Self {
        FieldSpec::Sparse(vec![ModeValue {
            mode: vec![mode],
            value,
        }])
    }

    pub fn resolve(&self, basis: &BasisTable) -> Result<SpectralField> {
        let mut f = basis.zeros();
        match self {
            FieldSpec::Sparse(entries) => {
                for e in entries {
                    let pos = basis.position_of(&e.mode).ok_or_else(|| {
                        Error::Config(format!("mode {:?} is not in the basis", e.mode))
                    })?;
                    f.coeffs_mut()[pos] += e.value;
                }
            }
            FieldSpec::Dense(values) => {
                if values.len() > basis.len() {
                    return Err(Error::Shape {
                        expected: basis.len(),
                        got: values.len(),
                    });
                }
                f.coeffs_mut()[..values.len()].copy_from_slice(values);
            }
        }
        if !f.is_finite() {
            return Err(Error::Config("field coefficients must be finite".into()));
        }
        Ok(f)
    }
}

// ---------------------------------------------------------------------------
// a(l(u))
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionShape {
    Constant {
        value: f64,
    },
    /// `base + min(r², span)`
    SaturatingQuadratic {
        base: f64,
        span: f64,
    },
    /// `center + amplitude · tanh(r)`
    Tanh {
        center: f64,
        amplitude: f64,
    },
}

impl DiffusionShape {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            DiffusionShape::Constant { value } => *value,
            DiffusionShape::SaturatingQuadratic { base, span } => base + (r * r).min(*span),
            DiffusionShape::Tanh { center, amplitude } => center + amplitude * r.tanh(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlocalDiffusion {
    pub shape: DiffusionShape,
    /// `i` in `l(u) = ∫ i u dx`.
    pub weight: FieldSpec,
    pub c_a1: f64,
    pub c_a2: f64,
}

// ---------------------------------------------------------------------------
// g = g₀ + g₁
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DissipativePart {
    Zero,
    /// `−coef · u³`
    Cubic {
        coef: f64,
    },
}

impl DissipativePart {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            DissipativePart::Zero => 0.0,
            DissipativePart::Cubic { coef } => -coef * u * u * u,
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            DissipativePart::Zero => 0.0,
            DissipativePart::Cubic { coef } => -3.0 * coef * u * u,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubcriticalPart {
    Zero,
    /// `slope · u`
    Linear {
        slope: f64,
    },
    /// `amplitude · sin(u)`
    Sine {
        amplitude: f64,
    },
}

impl SubcriticalPart {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            SubcriticalPart::Zero => 0.0,
            SubcriticalPart::Linear { slope } => slope * u,
            SubcriticalPart::Sine { amplitude } => amplitude * u.sin(),
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            SubcriticalPart::Zero => 0.0,
            SubcriticalPart::Linear { slope } => *slope,
            SubcriticalPart::Sine { amplitude } => amplitude * u.cos(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    G,
    G0,
    G1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySplit {
    pub g0: DissipativePart,
    pub g1: SubcriticalPart,
    /// The constant `C` shared by the growth bounds.
    #[serde(default = "default_growth_constant")]
    pub growth_constant: f64,
    /// Exponent in `|g₁(u)| ≤ C(1 + |u|^γ)`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_growth_constant() -> f64 {
    10.0
}

fn default_gamma() -> f64 {
    1.0
}

impl NonlinearitySplit {
    pub fn eval(&self, which: Which, u: f64) -> f64 {
        match which {
            Which::G => self.g0.eval(u) + self.g1.eval(u),
            Which::G0 => self.g0.eval(u),
            Which::G1 => self.g1.eval(u),
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        self.g0.derivative(u) + self.g1.derivative(u)
    }

    /// Sampled `sup |g'|` on `[−range, range]`.
    pub fn lipschitz_estimate(&self, range: f64) -> f64 {
        (0..=2000)
            .map(|i| -range + 2.0 * range * i as f64 / 2000.0)
            .map(|u| self.derivative(u).abs())
            .fold(0.0, f64::max)
    }
}

/// Growth exponent `p = 4/(n − 2)`; in one and two dimensions every
/// polynomial growth is subcritical and `p = 2` (cubic-compatible) is used.
pub fn growth_exponent(dims: usize) -> f64 {
    if dims >= 3 {
        4.0 / (dims as f64 - 2.0)
    } else {
        2.0
    }
}

// ---------------------------------------------------------------------------
// φ(t, uₜ)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointwiseMap {
    Linear { coef: f64 },
    Sine { coef: f64 },
    Tanh { coef: f64 },
}

impl PointwiseMap {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            PointwiseMap::Linear { coef } => coef * u,
            PointwiseMap::Sine { coef } => coef * u.sin(),
            PointwiseMap::Tanh { coef } => coef * u.tanh(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            PointwiseMap::Linear { coef }
            | PointwiseMap::Sine { coef }
            | PointwiseMap::Tanh { coef } => coef.abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LagProfile {
    Constant {
        value: f64,
    },
    /// `mean + amplitude · sin(frequency · t)`
    Oscillating {
        mean: f64,
        amplitude: f64,
        frequency: f64,
    },
}

impl LagProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            LagProfile::Constant { value } => *value,
            LagProfile::Oscillating {
                mean,
                amplitude,
                frequency,
            } => mean + amplitude * (frequency * t).sin(),
        }
    }

    pub fn range(&self) -> (f64, f64) {
        match self {
            LagProfile::Constant { value } => (*value, *value),
            LagProfile::Oscillating {
                mean, amplitude, ..
            } => (mean - amplitude.abs(), mean + amplitude.abs()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayKernel {
    /// `G ≡ scale / μ`
    Uniform { scale: f64 },
    /// `G(s) = scale · rate · e^{rate s} / (1 − e^{−rate μ})`
    Exponential { scale: f64, rate: f64 },
}

impl DelayKernel {
    pub fn eval(&self, s: f64, mu: f64) -> f64 {
        match self {
            DelayKernel::Uniform { scale } => scale / mu,
            DelayKernel::Exponential { scale, rate } => {
                scale * rate * (rate * s).exp() / (1.0 - (-rate * mu).exp())
            }
        }
    }

    /// `∫_{−μ}^0 |G|`
    pub fn total_mass(&self) -> f64 {
        match self {
            DelayKernel::Uniform { scale } | DelayKernel::Exponential { scale, .. } => scale.abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayKind {
    None,
    /// `F(u(t − ρ(t)))`
    Discrete {
        response: PointwiseMap,
        lag: LagProfile,
        /// Lower bound on `ρ`; defaults to the integration step.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_lag: Option<f64>,
    },
    /// `∫_{−μ}^0 G(s) u(t + s) ds`
    Distributed {
        kernel: DelayKernel,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayOperator {
    /// `μ > 0`
    pub horizon: f64,
    /// `C_φ`
    pub lipschitz: f64,
    #[serde(flatten)]
    pub kind: DelayKind,
}

const GAUSS3_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

impl DelayOperator {
    /// `φ(t, uₜ)` read from the history buffer.
    pub fn apply(
        &self,
        basis: &BasisTable,
        t: f64,
        history: &HistoryBuffer,
    ) -> Result<SpectralField> {
        match &self.kind {
            DelayKind::None => Ok(basis.zeros()),
            DelayKind::Discrete { response, lag, .. } => {
                let delayed = history.sample_with_lookahead(t - lag.eval(t))?;
                match response {
                    PointwiseMap::Linear { coef } => Ok(delayed.scaled(*coef)),
                    _ => basis.map_pointwise(&delayed, |v| response.eval(v)),
                }
            }
            DelayKind::Distributed { kernel } => {
                let mu = self.horizon;
                let (start, end) = (t - mu, t);
                // Split [t − μ, t] at the knots so each Gauss panel sees one cubic.
                let mut nodes = vec![start];
                for k in history.knots() {
                    if k.t > start && k.t < end {
                        nodes.push(k.t);
                    }
                }
                nodes.push(end);
                let mut acc = basis.zeros();
                for w in nodes.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let half = 0.5 * (b - a);
                    let mid = 0.5 * (a + b);
                    for (x, wt) in GAUSS3_NODES.iter().zip(GAUSS3_WEIGHTS) {
                        let s = mid + half * x;
                        let u = history.sample_with_lookahead(s)?;
                        acc.axpy(wt * half * kernel.eval(s - t, mu), &u);
                    }
                }
                Ok(acc)
            }
        }
    }

    /// Declared lower bound on the discrete lag.
    pub fn min_lag(&self, dt: f64) -> Option<f64> {
        match &self.kind {
            DelayKind::Discrete { min_lag, .. } => Some(min_lag.unwrap_or(dt)),
            _ => None,
        }
    }

    /// Lipschitz bound implied by the components.
    pub fn analytic_lipschitz_sq(&self) -> f64 {
        match &self.kind {
            DelayKind::None => 0.0,
            DelayKind::Discrete { response, .. } => response.lipschitz().powi(2),
            DelayKind::Distributed { kernel } => kernel.total_mass().powi(2),
        }
    }
}

// ---------------------------------------------------------------------------
// k(t)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    Constant {
        value: f64,
    },
    /// `offset + amplitude · sin(frequency · t + phase)`
    Sine {
        offset: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeProfile::Constant { value } => *value,
            TimeProfile::Sine {
                offset,
                amplitude,
                frequency,
                phase,
            } => offset + amplitude * (frequency * t + phase).sin(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Forcing {
    None,
    /// `kappa · m(t) · shape(x)`
    Separable {
        kappa: f64,
        profile: TimeProfile,
        shape: FieldSpec,
    },
    /// Piecewise-linear in time between tabulated fields, constant outside.
    Table {
        times: Vec<f64>,
        fields: Vec<FieldSpec>,
    },
}

// ---------------------------------------------------------------------------
// χ
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialHistory {
    Zero,
    Constant {
        field: FieldSpec,
    },
    /// `χ(ϱ) = at_zero + ϱ · slope`
    Affine {
        at_zero: FieldSpec,
        slope: FieldSpec,
    },
    /// `χ(ϱ) = base + cos(frequency · ϱ) · amplitude`
    Oscillating {
        base: FieldSpec,
        amplitude: FieldSpec,
        frequency: f64,
    },
}

impl InitialHistory {
    pub fn resolve(&self, basis: &BasisTable) -> Result<HistorySegment> {
        Ok(match self {
            InitialHistory::Zero => HistorySegment::zero(basis.len()),
            InitialHistory::Constant { field } => HistorySegment::Affine {
                at_zero: field.resolve(basis)?,
                slope: basis.zeros(),
            },
            InitialHistory::Affine { at_zero, slope } => HistorySegment::Affine {
                at_zero: at_zero.resolve(basis)?,
                slope: slope.resolve(basis)?,
            },
            InitialHistory::Oscillating {
                base,
                amplitude,
                frequency,
            } => HistorySegment::Oscillating {
                base: base.resolve(basis)?,
                amplitude: amplitude.resolve(basis)?,
                frequency: *frequency,
            },
        })
    }
}

/// Resolved initial history `χ(ϱ)`, `ϱ ∈ [−μ, 0]`, with an analytic derivative.
#[derive(Clone, Debug, PartialEq)]
pub enum HistorySegment {
    Affine {
        at_zero: SpectralField,
        slope: SpectralField,
    },
    Oscillating {
        base: SpectralField,
        amplitude: SpectralField,
        frequency: f64,
    },
}

impl HistorySegment {
    pub fn zero(len: usize) -> Self {
        HistorySegment::Affine {
            at_zero: SpectralField::zeros(len),
            slope: SpectralField::zeros(len),
        }
    }

    pub fn constant(field: SpectralField) -> Self {
        let n = field.len();
        HistorySegment::Affine {
            at_zero: field,
            slope: SpectralField::zeros(n),
        }
    }

    pub fn value(&self, rho: f64) -> SpectralField {
        match self {
            HistorySegment::Affine { at_zero, slope } => {
                let mut v = at_zero.clone();
                v.axpy(rho, slope);
                v
            }
            HistorySegment::Oscillating {
                base,
                amplitude,
                frequency,
            } => {
                let mut v = base.clone();
                v.axpy((frequency * rho).cos(), amplitude);
                v
            }
        }
    }

    pub fn derivative(&self, rho: f64) -> SpectralField {
        match self {
            HistorySegment::Affine { slope, .. } => slope.clone(),
            HistorySegment::Oscillating {
                amplitude,
                frequency,
                ..
            } => amplitude.scaled(-frequency * (frequency * rho).sin()),
        }
    }

    /// `χ + h · direction` with the same time dependence added constantly.
    pub fn perturbed(&self, direction: &SpectralField, h: f64) -> HistorySegment {
        let mut out = self.clone();
        match &mut out {
            HistorySegment::Affine { at_zero, .. } => at_zero.axpy(h, direction),
            HistorySegment::Oscillating { base, .. } => base.axpy(h, direction),
        }
        out
    }

    pub fn scaled(&self, a: f64) -> HistorySegment {
        match self {
            HistorySegment::Affine { at_zero, slope } => HistorySegment::Affine {
                at_zero: at_zero.scaled(a),
                slope: slope.scaled(a),
            },
            HistorySegment::Oscillating {
                base,
                amplitude,
                frequency,
            } => HistorySegment::Oscillating {
                base: base.scaled(a),
                amplitude: amplitude.scaled(a),
                frequency: *frequency,
            },
        }
    }

    /// Random affine history with coefficients decaying like `1/j`.
    pub fn random_affine(len: usize, mu: f64, rng: &mut ChaCha8Rng) -> HistorySegment {
        let mut at_zero = SpectralField::zeros(len);
        let mut slope = SpectralField::zeros(len);
        for j in 0..len {
            let decay = 1.0 / (1.0 + j as f64);
            at_zero.coeffs_mut()[j] = decay * rng.gen_range(-1.0..1.0);
            slope.coeffs_mut()[j] = decay * rng.gen_range(-1.0..1.0) / mu;
        }
        HistorySegment::Affine { at_zero, slope }
    }
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    /// `m` in `Δt = μ / m`.
    pub steps_per_delay: usize,
    /// Run length `T − τ`.
    pub horizon: f64,
    /// Interior samples per knot interval for window maxima.
    #[serde(default = "default_subsamples")]
    pub subsamples: usize,
}

fn default_subsamples() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChecksConfig {
    /// Require the dissipation condition on `C_{a1}` used by the radius bounds.
    #[serde(default = "default_true")]
    pub absorbing_bound: bool,
    /// Half-width of the state range sampled by the nonlinearity checks.
    #[serde(default = "default_u_max")]
    pub u_max: f64,
}

fn default_true() -> bool {
    true
}

fn default_u_max() -> f64 {
    1e3
}

impl Default for ChecksConfig {
    fn default() -> Self {
        ChecksConfig {
            absorbing_bound: true,
            u_max: default_u_max(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub domain: DomainSpec,
    pub epsilon: EpsilonProfile,
    pub diffusion: NonlocalDiffusion,
    pub nonlinearity: NonlinearitySplit,
    pub delay: DelayOperator,
    pub forcing: Forcing,
    pub zeta: f64,
    pub tau: f64,
    pub initial_history: InitialHistory,
    pub sigma: f64,
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn mu(&self) -> f64 {
        self.delay.horizon
    }

    pub fn dt(&self) -> f64 {
        self.delay.horizon / self.integration.steps_per_delay as f64
    }

    /// Sets `Δt = μ / m`, rejecting steps that do not divide the delay.
    pub fn set_step(&mut self, dt: f64) -> Result<()> {
        let m = (self.mu() / dt).round();
        if m < 1.0 || ((self.mu() / m) - dt).abs() > 1e-9 * dt {
            return Err(Error::Config(format!(
                "step {dt} does not divide the delay horizon {}",
                self.mu()
            )));
        }
        self.integration.steps_per_delay = m as usize;
        Ok(())
    }
}

/// A [`ScenarioConfig`] with its basis and fields resolved.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub basis: BasisTable,
    weight: SpectralField,
    forcing_shape: Option<SpectralField>,
    forcing_table: Vec<SpectralField>,
    pub initial: HistorySegment,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        let basis = BasisTable::build(&config.domain)?;
        config.epsilon.check_structure()?;
        if config.integration.steps_per_delay == 0 {
            return Err(Error::Config("steps_per_delay must be >= 1".into()));
        }
        if !(config.delay.horizon > 0.0) {
            return Err(Error::Config("delay horizon mu must be > 0".into()));
        }
        let weight = config.diffusion.weight.resolve(&basis)?;
        let (forcing_shape, forcing_table) = match &config.forcing {
            Forcing::None => (None, Vec::new()),
            Forcing::Separable { shape, .. } => (Some(shape.resolve(&basis)?), Vec::new()),
            Forcing::Table { times, fields } => {
                if times.is_empty() || times.len() != fields.len() {
                    return Err(Error::Config(
                        "forcing table needs matching times and fields".into(),
                    ));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config("forcing table times must increase".into()));
                }
                let resolved = fields
                    .iter()
                    .map(|f| f.resolve(&basis))
                    .collect::<Result<Vec<_>>>()?;
                (None, resolved)
            }
        };
        let initial = config.initial_history.resolve(&basis)?;
        Ok(Scenario {
            config,
            basis,
            weight,
            forcing_shape,
            forcing_table,
            initial,
        })
    }

    pub fn with_initial(mut self, initial: HistorySegment) -> Self {
        self.initial = initial;
        self
    }

    pub fn mu(&self) -> f64 {
        self.config.delay.horizon
    }

    pub fn dt(&self) -> f64 {
        self.config.dt()
    }

    pub fn lambda1(&self) -> f64 {
        self.basis.lambda1()
    }

    pub fn epsilon_at(&self, t: f64) -> (f64, f64) {
        self.config.epsilon.at(t)
    }

    fn coefficient_floor(&self) -> Result<f64> {
        let d = &self.config.diffusion;
        Ok(match self.config.epsilon.monotonicity()? {
            Monotonicity::Decreasing => d.c_a1,
            Monotonicity::Increasing => d.c_a1 + self.config.epsilon.bound_l,
        })
    }

    /// `a(l(u))`, checked against the declared interval.
    pub fn nonlocal_coefficient(&self, u: &SpectralField) -> Result<f64> {
        let r = self.basis.functional(&self.weight, u)?;
        let a = self.config.diffusion.shape.eval(r);
        let lo = self.coefficient_floor()?;
        let hi = self.config.diffusion.c_a2;
        let slack = 1e-12 * hi.abs().max(1.0);
        if !(a >= lo - slack && a <= hi + slack) {
            return Err(Error::assumption(
                "coefficient bounds",
                format!("a(l(u)) = {a} outside [{lo}, {hi}] at l(u) = {r}"),
            ));
        }
        Ok(a)
    }

    pub fn weight(&self) -> &SpectralField {
        &self.weight
    }

    pub fn nonlinearity_apply(&self, u: &SpectralField, which: Which) -> Result<SpectralField> {
        let split = &self.config.nonlinearity;
        if let (Which::G1, SubcriticalPart::Linear { slope }) = (which, &split.g1) {
            return Ok(u.scaled(*slope));
        }
        let vanishes = match which {
            Which::G => split.g0 == DissipativePart::Zero && split.g1 == SubcriticalPart::Zero,
            Which::G0 => split.g0 == DissipativePart::Zero,
            Which::G1 => split.g1 == SubcriticalPart::Zero,
        };
        if vanishes {
            return Ok(self.basis.zeros());
        }
        self.basis.map_pointwise(u, |v| split.eval(which, v))
    }

    pub fn delay_apply(&self, t: f64, history: &HistoryBuffer) -> Result<SpectralField> {
        self.config.delay.apply(&self.basis, t, history)
    }

    pub fn forcing_at(&self, t: f64) -> SpectralField {
        match &self.config.forcing {
            Forcing::None => self.basis.zeros(),
            Forcing::Separable { kappa, profile, .. } => self
                .forcing_shape
                .as_ref()
                .expect("resolved with the config")
                .scaled(kappa * profile.eval(t)),
            Forcing::Table { times, .. } => {
                let f = &self.forcing_table;
                let n = times.len();
                if t <= times[0] {
                    return f[0].clone();
                }
                if t >= times[n - 1] {
                    return f[n - 1].clone();
                }
                let i = times.partition_point(|&x| x <= t) - 1;
                let th = (t - times[i]) / (times[i + 1] - times[i]);
                let mut out = f[i].scaled(1.0 - th);
                out.axpy(th, &f[i + 1]);
                out
            }
        }
    }

    pub fn forcing_norm_sq(&self, t: f64) -> f64 {
        self.basis.norm_sobolev_sq(&self.forcing_at(t), 0.0)
    }

    /// `sup_t ∫_t^{t+1} ‖k(s)‖² ds` sampled on `[from, to]`.
    pub fn translation_bound(&self, from: f64, to: f64) -> f64 {
        let samples = 200;
        let panels = 64;
        let mut best = 0.0_f64;
        for i in 0..=samples {
            let t0 = from + (to - from) * i as f64 / samples as f64;
            let h = 1.0 / panels as f64;
            let mut acc = 0.0;
            for p in 0..panels {
                let a = t0 + p as f64 * h;
                acc += h / 6.0
                    * (self.forcing_norm_sq(a)
                        + 4.0 * self.forcing_norm_sq(a + 0.5 * h)
                        + self.forcing_norm_sq(a + h));
            }
            best = best.max(acc);
        }
        best
    }

    /// Diagonal of the mass operator `1 + ε(t) λ_j`.
    pub fn mass_diagonal(&self, t: f64) -> Result<Vec<f64>> {
        let eps = self.config.epsilon.value(t);
        self.basis
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let m = 1.0 + eps * l;
                if m > 0.0 {
                    Ok(m)
                } else {
                    Err(Error::Stiffness {
                        t,
                        mode: j,
                        value: m,
                    })
                }
            })
            .collect()
    }

    /// `‖χ‖²_{C_{L²}} + |ε(τ)| ‖∇χ‖²_{C_{L²}}` sampled on the integration grid.
    pub fn initial_energy(&self) -> f64 {
        initial_energy(self, &self.initial)
    }
}

/// Phase-space energy of an initial history, on the same sampling grid the
/// window norms use.
pub fn initial_energy(scn: &Scenario, chi: &HistorySegment) -> f64 {
    let mu = scn.mu();
    let m = scn.config.integration.steps_per_delay;
    let sub = scn.config.integration.subsamples;
    let count = m * (sub + 1);
    let (mut l2, mut g) = (0.0_f64, 0.0_f64);
    for i in 0..=count {
        let rho = -mu + mu * i as f64 / count as f64;
        let v = chi.value(rho);
        l2 = l2.max(scn.basis.norm_sobolev_sq(&v, 0.0));
        g = g.max(scn.basis.norm_sobolev_sq(&v, 1.0));
    }
    l2 + scn.config.epsilon.value(scn.config.tau).abs() * g
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Decay constants of the absorbing-radius estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundsParameters {
    pub lambda1: f64,
    pub bound_l: f64,
    pub c_phi: f64,
    pub mu: f64,
    pub zeta: f64,
    pub delta: f64,
    pub delta_bar: f64,
    pub beta: f64,
    pub beta1: f64,
}

impl BoundsParameters {
    /// Constants for a given `β`, with `δ = λ₁/2` and `δ̄ = 2L`.
    pub fn with_beta(
        lambda1: f64,
        bound_l: f64,
        c_phi: f64,
        mu: f64,
        zeta: f64,
        beta: f64,
    ) -> Self {
        let mut b = BoundsParameters {
            lambda1,
            bound_l,
            c_phi,
            mu,
            zeta,
            delta: 0.5 * lambda1,
            delta_bar: 2.0 * bound_l,
            beta,
            beta1: 0.0,
        };
        b.beta1 = beta - b.delay_gap();
        b
    }

    /// `2 C_φ e^{βμ} / (1 + λ₁ L)`
    pub fn delay_gap(&self) -> f64 {
        self.delay_gap_at(self.beta)
    }

    fn delay_gap_at(&self, beta: f64) -> f64 {
        2.0 * self.c_phi / (1.0 + self.lambda1 * self.bound_l) * (beta * self.mu).exp()
    }

    /// Upper end of the admissible `β` range, `min{2ζ, δ̄/L}`.
    pub fn beta_cap(&self) -> f64 {
        (2.0 * self.zeta).min(self.delta_bar / self.bound_l)
    }

    /// Maximizes `β₁(β)` over `(0, min{2ζ, δ̄/L}]`.
    pub fn optimize(lambda1: f64, bound_l: f64, c_phi: f64, mu: f64, zeta: f64) -> Result<Self> {
        let probe = Self::with_beta(lambda1, bound_l, c_phi, mu, zeta, 0.0);
        let cap = probe.beta_cap();
        if !(cap > 0.0) {
            return Err(Error::InvalidBounds(format!("empty beta range (0, {cap}]")));
        }
        let beta1 = |b: f64| b - probe.delay_gap_at(b);
        // β₁ is concave in β: golden-section search, then compare with the cap.
        let (mut lo, mut hi) = (0.0, cap);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let (mut f1, mut f2) = (beta1(x1), beta1(x2));
        for _ in 0..200 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = beta1(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = beta1(x1);
            }
        }
        let interior = 0.5 * (lo + hi);
        let beta = if beta1(cap) >= beta1(interior) {
            cap
        } else {
            interior
        };
        let bounds = Self::with_beta(lambda1, bound_l, c_phi, mu, zeta, beta);
        if !(bounds.beta1 > 0.0) {
            return Err(Error::InvalidBounds(format!(
                "delay too strong: best beta1 = {} at beta = {beta}",
                bounds.beta1
            )));
        }
        Ok(bounds)
    }

    /// `1 + 2C_φ e^{βμ} / ((1 + λ₁L)(β − β₁))`; equals 1 without delay.
    pub fn prefactor(&self) -> f64 {
        if self.c_phi == 0.0 {
            return 1.0;
        }
        1.0 + 2.0 * self.c_phi * (self.beta * self.mu).exp()
            / ((1.0 + self.lambda1 * self.bound_l) * (self.beta - self.beta1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClauseCheck {
    pub clause: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub scenario: String,
    pub checks: Vec<ClauseCheck>,
    pub notices: Vec<String>,
    pub bounds: Option<BoundsParameters>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed) && self.bounds.is_some()
    }

    pub fn first_failure(&self) -> Option<&ClauseCheck> {
        self.checks.iter().find(|c| !c.passed)
    }

    fn record(&mut self, clause: &str, passed: bool, detail: String) {
        self.checks.push(ClauseCheck {
            clause: clause.to_string(),
            passed,
            detail,
        });
    }
}

fn state_samples(u_max: f64) -> Vec<f64> {
    let per_side = 400;
    let lo = 1e-6_f64.ln();
    let hi = u_max.max(1e-6).ln();
    let mut out = vec![0.0];
    for i in 0..per_side {
        let u = (lo + (hi - lo) * i as f64 / (per_side - 1) as f64).exp();
        out.push(u);
        out.push(-u);
    }
    out
}

/// Runs every sampled assumption check and derives the bounds constants.
pub fn assess_scenario(cfg: &ScenarioConfig) -> Result<ValidationReport> {
    let scn = Scenario::new(cfg.clone())?;
    let mut rep = ValidationReport {
        scenario: cfg.name.clone(),
        checks: Vec::new(),
        notices: Vec::new(),
        bounds: None,
    };
    let n = cfg.domain.dims;
    if n < 3 {
        let msg = format!(
            "dimension n = {n} < 3: growth exponent p = {} and the gamma range is unbounded",
            growth_exponent(n)
        );
        info!("{msg}");
        rep.notices.push(msg);
    }
    let lambda1 = scn.lambda1();
    let eps = &cfg.epsilon;
    let l = eps.bound_l;
    let mu = cfg.mu();
    let dt = cfg.dt();
    let (t_from, t_to) = (cfg.tau - mu, cfg.tau + cfg.integration.horizon);

    rep.record("zeta>0", cfg.zeta > 0.0, format!("zeta = {}", cfg.zeta));

    // ε
    let limit = eps.limit_at_infinity();
    rep.record(
        "lim eps > alpha > 1/2",
        limit > eps.alpha && eps.alpha > 0.5,
        format!("lim eps = {limit}, alpha = {}", eps.alpha),
    );
    let times: Vec<f64> = {
        let (a, b) = (t_from.min(-100.0) - 100.0, t_to.max(100.0) + 100.0);
        let count = 20_000;
        (0..=count)
            .map(|i| a + (b - a) * i as f64 / count as f64)
            .chain([t_from, cfg.tau, t_to])
            .collect()
    };
    let sup_sum = times
        .iter()
        .map(|&t| {
            let (v, d) = eps.at(t);
            v.abs() + d.abs()
        })
        .fold(0.0, f64::max);
    rep.record(
        "sup(|eps|+|eps'|) <= L",
        l > 0.0 && sup_sum <= l * (1.0 + 1e-12),
        format!("sampled sup = {sup_sum}, L = {l}"),
    );
    let h = 1e-6;
    let fd_err = times
        .iter()
        .step_by(37)
        .map(|&t| {
            let fd = (eps.value(t + h) - eps.value(t - h)) / (2.0 * h);
            (fd - eps.at(t).1).abs()
        })
        .fold(0.0, f64::max);
    rep.record(
        "eps in C1",
        fd_err <= 1e-6,
        format!("max |central difference - eps'| = {fd_err:.3e}"),
    );
    let mono = eps.monotonicity();
    match &mono {
        Ok(m) => {
            let sign_ok = times.iter().all(|&t| {
                let d = eps.at(t).1;
                match m {
                    Monotonicity::Decreasing => d <= 1e-12,
                    Monotonicity::Increasing => d >= -1e-12,
                }
            });
            rep.record(
                "eps monotone",
                sign_ok,
                format!("{m:?}; sampled eps' sign consistent: {sign_ok}"),
            );
        }
        Err(e) => rep.record("eps monotone", false, e.to_string()),
    }
    let eps_min = times
        .iter()
        .map(|&t| eps.value(t))
        .fold(f64::INFINITY, f64::min);
    let mass_min = (1.0 + eps_min * scn.basis.lambda_max()).min(1.0 + eps_min * lambda1);
    rep.record(
        "mass positivity 1+eps*lambda_j > 0",
        mass_min > 0.0,
        format!("min mass entry = {mass_min}"),
    );

    // a(l(u))
    let d = &cfg.diffusion;
    if let Ok(m) = mono {
        let lo = match m {
            Monotonicity::Decreasing => d.c_a1,
            Monotonicity::Increasing => d.c_a1 + l,
        };
        let (a_min, a_max) = state_samples(1e6)
            .iter()
            .map(|&r| d.shape.eval(r))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
        let clause = match m {
            Monotonicity::Decreasing => "C_a1 <= a <= C_a2",
            Monotonicity::Increasing => "C_a1 + L <= a <= C_a2",
        };
        rep.record(
            clause,
            d.c_a1 > 0.0 && a_min >= lo && a_max <= d.c_a2,
            format!(
                "sampled a in [{a_min}, {a_max}], required [{lo}, {}]",
                d.c_a2
            ),
        );
    }

    // g
    let split = &cfg.nonlinearity;
    let p = growth_exponent(n);
    let c = split.growth_constant;
    let us = state_samples(cfg.checks.u_max);
    rep.record(
        "g(0)=0",
        split.eval(Which::G, 0.0) == 0.0,
        format!("g(0) = {}", split.eval(Which::G, 0.0)),
    );
    let outer: Vec<f64> = us
        .iter()
        .copied()
        .filter(|u| u.abs() >= 0.1 * cfg.checks.u_max)
        .collect();
    let limsup = |w: Which| {
        outer
            .iter()
            .map(|&u| split.eval(w, u) / u)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (ls_g, ls_g1) = (limsup(Which::G), limsup(Which::G1));
    rep.record(
        "limsup g(u)/u < lambda1",
        ls_g < lambda1 && ls_g1 < lambda1,
        format!("outer-decade sup g/u = {ls_g:.4e}, g1/u = {ls_g1:.4e}, lambda1 = {lambda1}"),
    );
    let r7 = us
        .iter()
        .map(|&u| split.derivative(u).abs() / (1.0 + u.abs().powf(p)))
        .fold(0.0, f64::max);
    rep.record(
        "|g'(u)| <= C(1+|u|^p)",
        r7 <= c,
        format!("sup ratio = {r7:.4e}, C = {c}, p = {p}"),
    );
    let r8 = us
        .iter()
        .filter(|u| **u != 0.0)
        .map(|&u| split.g0.eval(u).abs() / (u.abs() + u.abs().powf(p + 1.0)))
        .fold(0.0, f64::max);
    rep.record(
        "|g0(u)| <= C(|u|+|u|^(p+1))",
        r8 <= c,
        format!("sup ratio = {r8:.4e}, C = {c}"),
    );
    let worst9 = us
        .iter()
        .map(|&u| split.g0.eval(u) * u)
        .fold(f64::NEG_INFINITY, f64::max);
    rep.record(
        "g0(u)u <= 0",
        worst9 <= 0.0,
        format!("sup g0(u)u = {worst9:.4e}"),
    );
    let gamma = split.gamma;
    let gamma_ok = gamma > 0.0 && (n < 3 || gamma < (n as f64 + 2.0) / (n as f64 - 2.0));
    let r10 = us
        .iter()
        .map(|&u| split.g1.eval(u).abs() / (1.0 + u.abs().powf(gamma)))
        .fold(0.0, f64::max);
    rep.record(
        "|g1(u)| <= C(1+|u|^gamma)",
        gamma_ok && r10 <= c,
        format!("sup ratio = {r10:.4e}, gamma = {gamma}, gamma admissible: {gamma_ok}"),
    );

    // φ
    let delay = &cfg.delay;
    let c_phi = delay.lipschitz;
    rep.record(
        "mu>0",
        mu > 0.0,
        format!(
            "mu = {mu}, dt = mu/{} = {dt}",
            cfg.integration.steps_per_delay
        ),
    );
    if let DelayKind::Discrete { lag, .. } = &delay.kind {
        let (lo, hi) = lag.range();
        let rho_min = delay.min_lag(dt).expect("discrete");
        rep.record(
            "rho in [rho_min, mu]",
            lo >= rho_min - 1e-12 && hi <= mu + 1e-12,
            format!("rho range [{lo}, {hi}], rho_min = {rho_min}, mu = {mu}"),
        );
        if rho_min < dt {
            let msg = format!(
                "rho_min = {rho_min} < dt = {dt}: stage values use extrapolated history (order caveat)"
            );
            warn!("{msg}");
            rep.notices.push(msg);
        }
    }
    let phi_zero = phi_of_constant(&scn, cfg.tau, &scn.basis.zeros())?;
    rep.record(
        "phi(t,0)=0",
        phi_zero.max_abs() == 0.0,
        format!("max |phi(t,0)| = {:e}", phi_zero.max_abs()),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    for i in 0..100 {
        let t = cfg.tau + i as f64 * 0.37;
        let u1 = random_field(&scn.basis, &mut rng, 2.0);
        let u2 = random_field(&scn.basis, &mut rng, 2.0);
        let lhs = scn.basis.norm_sobolev_sq(
            &phi_of_constant(&scn, t, &u1)?.sub(&phi_of_constant(&scn, t, &u2)?),
            0.0,
        );
        let rhs = scn.basis.norm_sobolev_sq(&u1.sub(&u2), 0.0);
        worst = worst.max(lhs / rhs);
    }
    rep.record(
        "|phi(u1)-phi(u2)|^2 <= C_phi |u1-u2|^2",
        c_phi >= 0.0 && worst <= c_phi * (1.0 + 1e-9) + 1e-14,
        format!("worst sampled ratio = {worst:.6e}, C_phi = {c_phi}"),
    );

    // k
    let tb = scn.translation_bound(t_from, t_to);
    rep.record(
        "k translation bounded",
        tb.is_finite(),
        format!("sup_t int_t^(t+1) |k|^2 = {tb:.6e}"),
    );

    // σ
    let sigma_cap = (1.0 / 3.0_f64).min((n as f64 + 2.0 - (n as f64 - 2.0) * gamma) / 2.0);
    rep.record(
        "0 < sigma < min{1/3, (n+2-(n-2)gamma)/2}",
        cfg.sigma > 0.0 && cfg.sigma < sigma_cap,
        format!("sigma = {}, cap = {sigma_cap}", cfg.sigma),
    );

    if cfg.checks.absorbing_bound {
        let need = 1.5 + 0.5 * l + 1.0 / (4.0 * lambda1);
        rep.record(
            "C_a1 > 3/2 + L/2 + 1/(4 lambda1)",
            d.c_a1 > need,
            format!("C_a1 = {}, threshold = {need}", d.c_a1),
        );
    }

    match BoundsParameters::optimize(lambda1, l, c_phi, mu, cfg.zeta) {
        Ok(b) => {
            rep.record(
                "beta1 > 0",
                true,
                format!("beta = {}, beta1 = {}", b.beta, b.beta1),
            );
            rep.bounds = Some(b);
        }
        Err(e) => rep.record("beta1 > 0", false, e.to_string()),
    }
    Ok(rep)
}

/// Validates a scenario and returns its bounds constants, or the first
/// violated clause.
pub fn validate_scenario(cfg: &ScenarioConfig) -> Result<BoundsParameters> {
    let rep = assess_scenario(cfg)?;
    if let Some(fail) = rep.first_failure() {
        if fail.clause == "beta1 > 0" {
            return Err(Error::InvalidBounds(fail.detail.clone()));
        }
        return Err(Error::assumption(fail.clause.clone(), fail.detail.clone()));
    }
    rep.bounds
        .ok_or_else(|| Error::InvalidBounds("no admissible beta".into()))
}

/// `φ(t, ·)` applied to the constant history `u`.
pub fn phi_of_constant(scn: &Scenario, t: f64, u: &SpectralField) -> Result<SpectralField> {
    let mu = scn.mu();
    let dt = scn.dt();
    let mut buf = HistoryBuffer::new(mu, dt);
    let zero = scn.basis.zeros();
    let m = scn.config.integration.steps_per_delay;
    for i in 0..=m + 2 {
        buf.push(t - mu - 2.0 * dt + i as f64 * dt, u.clone(), zero.clone())?;
    }
    scn.delay_apply(t, &buf)
}

pub fn random_field(basis: &BasisTable, rng: &mut ChaCha8Rng, scale: f64) -> SpectralField {
    SpectralField::from_coeffs(
        (0..basis.len())
            .map(|j| scale * rng.gen_range(-1.0..1.0) / (1.0 + j as f64))
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Bundled scenarios
// ---------------------------------------------------------------------------

impl ScenarioConfig {
    /// Nonlinear scenario with a discrete delay, decreasing ε and periodic forcing.
    pub fn default_nonlinear() -> Self {
        ScenarioConfig {
            name: "default".into(),
            domain: DomainSpec::interval(PI, 32),
            epsilon: EpsilonProfile {
                kind: EpsilonKind::DecreasingLogistic {
                    asymptote: 0.6,
                    amplitude: 0.4,
                    rate: 1.0,
                },
                alpha: 0.55,
                bound_l: 1.0,
            },
            diffusion: NonlocalDiffusion {
                shape: DiffusionShape::SaturatingQuadratic {
                    base: 2.5,
                    span: 1.0,
                },
                weight: FieldSpec::single(1, 1.0),
                c_a1: 2.5,
                c_a2: 3.5,
            },
            nonlinearity: NonlinearitySplit {
                g0: DissipativePart::Cubic { coef: 1.0 },
                g1: SubcriticalPart::Linear { slope: 0.5 },
                growth_constant: 10.0,
                gamma: 1.0,
            },
            delay: DelayOperator {
                horizon: 0.25,
                lipschitz: 0.01,
                kind: DelayKind::Discrete {
                    response: PointwiseMap::Sine { coef: 0.1 },
                    lag: LagProfile::Constant { value: 0.25 },
                    min_lag: None,
                },
            },
            forcing: Forcing::Separable {
                kappa: 0.2,
                profile: TimeProfile::Sine {
                    offset: 1.0,
                    amplitude: 0.5,
                    frequency: 2.0,
                    phase: 0.0,
                },
                shape: FieldSpec::Sparse(vec![
                    ModeValue {
                        mode: vec![1],
                        value: 1.0,
                    },
                    ModeValue {
                        mode: vec![2],
                        value: 0.5,
                    },
                ]),
            },
            zeta: 1.0,
            tau: 0.0,
            initial_history: InitialHistory::Affine {
                at_zero: FieldSpec::Sparse(vec![
                    ModeValue {
                        mode: vec![1],
                        value: 0.6,
                    },
                    ModeValue {
                        mode: vec![3],
                        value: 0.2,
                    },
                ]),
                slope: FieldSpec::single(2, 0.4),
            },
            sigma: 0.25,
            integration: IntegrationConfig {
                steps_per_delay: 40,
                horizon: 10.0,
                subsamples: 4,
            },
            checks: ChecksConfig::default(),
        }
    }

    /// Linear, delay-free scenario with `a ≡ 1`, `ε ≡ 1`, `ζ = 1` on `(0, π)`.
    pub fn linear_single_mode() -> Self {
        ScenarioConfig {
            name: "linear".into(),
            domain: DomainSpec::interval(PI, 8),
            epsilon: EpsilonProfile::constant(1.0, 0.6, 1.0),
            diffusion: NonlocalDiffusion {
                shape: DiffusionShape::Constant { value: 1.0 },
                weight: FieldSpec::single(1, 1.0),
                c_a1: 1.0,
                c_a2: 1.0,
            },
            nonlinearity: NonlinearitySplit {
                g0: DissipativePart::Zero,
                g1: SubcriticalPart::Zero,
                growth_constant: 10.0,
                gamma: 1.0,
            },
            delay: DelayOperator {
                horizon: 0.25,
                lipschitz: 0.0,
                kind: DelayKind::None,
            },
            forcing: Forcing::None,
            zeta: 1.0,
            tau: 0.0,
            initial_history: InitialHistory::Constant {
                field: FieldSpec::single(1, 1.0),
            },
            sigma: 0.25,
            integration: IntegrationConfig {
                steps_per_delay: 80,
                horizon: 5.0,
                subsamples: 4,
            },
            checks: ChecksConfig {
                absorbing_bound: false,
                u_max: 1e3,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_epsilon() {
        let e = EpsilonProfile::constant(1.0, 0.6, 1.0);
        assert_eq!(e.at(-3.0), (1.0, 0.0));
        assert_eq!(e.at(17.0), (1.0, 0.0));
    }

    #[test]
    fn decreasing_logistic_limit_and_derivative() {
        let e = ScenarioConfig::default_nonlinear().epsilon;
        assert_abs_diff_eq!(e.value(60.0), 0.6, epsilon = 1e-15);
        assert!(e.limit_at_infinity() > 0.5);
        let (_, d) = e.at(0.0);
        assert_abs_diff_eq!(d, -0.1, epsilon = 1e-15);
        let h = 1e-5;
        let fd = (e.value(h) - e.value(-h)) / (2.0 * h);
        assert!((fd - d).abs() < 1e-6);
        let (v, d) = e.at(-800.0);
        assert!(v.is_finite() && d.is_finite());
        assert!(v.abs() + d.abs() <= e.bound_l);
    }

    #[test]
    fn table_epsilon_is_c1_and_monotone() {
        let e = EpsilonProfile {
            kind: EpsilonKind::Table {
                times: vec![-2.0, 0.0, 1.0, 3.0],
                values: vec![1.0, 0.9, 0.7, 0.65],
            },
            alpha: 0.6,
            bound_l: 1.5,
        };
        assert_eq!(e.monotonicity().unwrap(), Monotonicity::Decreasing);
        for t in [-1.5, -0.3, 0.0, 0.5, 1.0, 2.2] {
            let h = 1e-6;
            let fd = (e.value(t + h) - e.value(t - h)) / (2.0 * h);
            assert!((fd - e.at(t).1).abs() < 1e-5, "t={t}");
            assert!(e.at(t).1 <= 1e-12);
        }
    }

    #[test]
    fn coefficient_examples() {
        let mut cfg = ScenarioConfig::default_nonlinear();
        cfg.diffusion.shape = DiffusionShape::Constant { value: 2.5 };
        let scn = Scenario::new(cfg).unwrap();
        let u = SpectralField::unit(32, 0, 3.0);
        assert_eq!(scn.nonlocal_coefficient(&u).unwrap(), 2.5);

        let scn = Scenario::new(ScenarioConfig::default_nonlinear()).unwrap();
        let u = SpectralField::unit(32, 0, 2.0);
        // l(u) = 2 → C_a1 + min(4, C_a2 − C_a1)
        assert_eq!(scn.nonlocal_coefficient(&u).unwrap(), 2.5 + 1.0);
        let u = SpectralField::unit(32, 0, 0.5);
        assert_eq!(scn.nonlocal_coefficient(&u).unwrap(), 2.5 + 0.25);
    }

    #[test]
    fn coefficient_outside_bounds_is_an_error() {
        let mut cfg = ScenarioConfig::default_nonlinear();
        cfg.diffusion.c_a2 = 3.0;
        let scn = Scenario::new(cfg).unwrap();
        let u = SpectralField::unit(32, 0, 2.0);
        assert!(matches!(
            scn.nonlocal_coefficient(&u),
            Err(Error::Assumption { .. })
        ));
    }

    #[test]
    fn nonlinearity_zero_and_split() {
        let scn = Scenario::new(ScenarioConfig::default_nonlinear()).unwrap();
        let z = scn.basis.zeros();
        assert_eq!(scn.nonlinearity_apply(&z, Which::G).unwrap(), z);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_field(&scn.basis, &mut rng, 1.0);
        let g = scn.nonlinearity_apply(&u, Which::G).unwrap();
        let g0 = scn.nonlinearity_apply(&u, Which::G0).unwrap();
        let g1 = scn.nonlinearity_apply(&u, Which::G1).unwrap();
        let diff = g.sub(&g0.add(&g1));
        assert!(diff.max_abs() <= 1e-12);
    }

    #[test]
    fn cubic_of_single_mode_matches_trig_identity() {
        // u = c e₁ = c (2/π)^{1/2} sin x and sin³x = (3/4) sin x − (1/4) sin 3x,
        // so −u³ = −c³ (2/π) ((3/4) e₁ − (1/4) e₃).
        let scn = Scenario::new(ScenarioConfig::default_nonlinear()).unwrap();
        let c = 0.7;
        let u = SpectralField::unit(32, 0, c);
        let g0 = scn.nonlinearity_apply(&u, Which::G0).unwrap();
        let k = c * c * c * 2.0 / PI;
        assert_abs_diff_eq!(g0.coeffs()[0], -0.75 * k, epsilon = 1e-13);
        assert_abs_diff_eq!(g0.coeffs()[2], 0.25 * k, epsilon = 1e-13);
        for (j, v) in g0.coeffs().iter().enumerate() {
            if j != 0 && j != 2 {
                assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-13);
            }
        }
    }

    fn constant_buffer(scn: &Scenario, t: f64, f: &SpectralField) -> HistoryBuffer {
        let mu = scn.mu();
        let dt = scn.dt();
        let mut b = HistoryBuffer::new(mu, dt);
        let m = scn.config.integration.steps_per_delay;
        for i in 0..=m {
            b.push(t - mu + i as f64 * dt, f.clone(), scn.basis.zeros())
                .unwrap();
        }
        b
    }

    #[test]
    fn delay_examples() {
        let mut cfg = ScenarioConfig::default_nonlinear();
        cfg.delay.kind = DelayKind::Discrete {
            response: PointwiseMap::Linear { coef: 1.0 },
            lag: LagProfile::Constant { value: 0.25 },
            min_lag: None,
        };
        let scn = Scenario::new(cfg.clone()).unwrap();
        let f = random_field(&scn.basis, &mut ChaCha8Rng::seed_from_u64(1), 1.0);
        let b = constant_buffer(&scn, 1.0, &f);
        assert_eq!(scn.delay_apply(1.0, &b).unwrap(), f);
        let zb = constant_buffer(&scn, 1.0, &scn.basis.zeros());
        assert_eq!(scn.delay_apply(1.0, &zb).unwrap(), scn.basis.zeros());

        cfg.delay.kind = DelayKind::Distributed {
            kernel: DelayKernel::Uniform { scale: 1.0 },
        };
        let scn = Scenario::new(cfg).unwrap();
        let phi = scn.delay_apply(1.0, &b).unwrap();
        assert!(phi.sub(&f).max_abs() <= 1e-8);
        assert_eq!(scn.delay_apply(1.0, &zb).unwrap(), scn.basis.zeros());
    }

    #[test]
    fn delay_coverage_gap() {
        let scn = Scenario::new(ScenarioConfig::default_nonlinear()).unwrap();
        let mut b = HistoryBuffer::new(scn.mu(), scn.dt());
        b.push(0.9, scn.basis.zeros(), scn.basis.zeros()).unwrap();
        b.push(1.0, scn.basis.zeros(), scn.basis.zeros()).unwrap();
        assert!(matches!(
            scn.delay_apply(1.0, &b),
            Err(Error::Coverage { .. })
        ));
    }

    #[test]
    fn default_scenario_validates() {
        let b = validate_scenario(&ScenarioConfig::default_nonlinear()).unwrap();
        assert!(b.beta1 > 0.0);
        assert_abs_diff_eq!(b.beta - b.beta1, b.delay_gap(), epsilon = 1e-15);
        assert_eq!(b.delta, 0.5);
        assert_eq!(b.delta_bar, 2.0);
    }

    #[test]
    fn no_delay_gives_beta1_equal_beta() {
        let b = validate_scenario(&ScenarioConfig::linear_single_mode()).unwrap();
        assert_eq!(b.beta, b.beta_cap());
        assert_eq!(b.beta1, b.beta);
        assert_eq!(b.beta - b.beta1, 0.0);
        assert_eq!(b.prefactor(), 1.0);
    }

    #[test]
    fn beta1_formula_at_beta_one() {
        let b = BoundsParameters::with_beta(1.0, 1.0, 0.1, 0.5, 1.0, 1.0);
        assert_eq!(b.delta_bar, 2.0);
        assert!(b.beta_cap() >= 1.0);
        assert_abs_diff_eq!(b.beta1, 1.0 - 0.1 * 0.5f64.exp(), epsilon = 1e-15);
        assert!(b.beta1 > 0.83 && b.beta1 < 0.84);
        let best = BoundsParameters::optimize(1.0, 1.0, 0.1, 0.5, 1.0).unwrap();
        assert!(best.beta1 >= b.beta1);
    }

    #[test]
    fn interior_optimum_found() {
        // unconstrained maximiser ln(1/(cμ))/μ lies inside the cap here
        let (c_phi, mu) = (0.1, 2.0);
        let b = BoundsParameters::optimize(1.0, 1.0, c_phi, mu, 1.0).unwrap();
        let c = c_phi;
        let expected = (1.0 / (c * mu)).ln() / mu;
        assert!((b.beta - expected).abs() < 1e-6, "{} vs {expected}", b.beta);
    }

    #[test]
    fn strong_delay_rejected() {
        assert!(matches!(
            BoundsParameters::optimize(1.0, 1.0, 5.0, 1.0, 1.0),
            Err(Error::InvalidBounds(_))
        ));
    }

    #[test]
    fn weak_diffusion_fails_dissipation_condition() {
        let mut cfg = ScenarioConfig::default_nonlinear();
        cfg.diffusion.shape = DiffusionShape::Constant { value: 1.0 };
        cfg.diffusion.c_a1 = 1.0;
        cfg.diffusion.c_a2 = 1.0;
        match validate_scenario(&cfg) {
            Err(Error::Assumption { clause, .. }) => assert!(clause.starts_with("C_a1 >")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zeta_must_be_positive() {
        let mut cfg = ScenarioConfig::default_nonlinear();
        cfg.zeta = 0.0;
        match validate_scenario(&cfg) {
            Err(Error::Assumption { clause, .. }) => assert_eq!(clause, "zeta>0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sign_condition_violation_detected() {
        let mut cfg = ScenarioConfig::default_nonlinear();
        cfg.nonlinearity.g0 = DissipativePart::Cubic { coef: -1.0 };
        let rep = assess_scenario(&cfg).unwrap();
        assert!(rep
            .checks
            .iter()
            .any(|c| c.clause.starts_with("g0(u)u") && !c.passed));
    }

    #[test]
    fn understated_lipschitz_constant_detected() {
        let mut cfg = ScenarioConfig::default_nonlinear();
        cfg.delay.lipschitz = 0.001;
        let rep = assess_scenario(&cfg).unwrap();
        assert!(rep
            .checks
            .iter()
            .any(|c| c.clause.starts_with("|phi(u1)") && !c.passed));
    }

    #[test]
    fn sigma_range() {
        let mut cfg = ScenarioConfig::default_nonlinear();
        cfg.sigma = 0.4;
        let rep = assess_scenario(&cfg).unwrap();
        assert!(rep
            .checks
            .iter()
            .any(|c| c.clause.contains("sigma") && !c.passed));
    }

    #[test]
    fn delay_lipschitz_spot_check_on_constant_histories() {
        let scn = Scenario::new(ScenarioConfig::default_nonlinear()).unwrap();
        let c_phi = scn.config.delay.lipschitz;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let u1 = random_field(&scn.basis, &mut rng, 3.0);
            let u2 = random_field(&scn.basis, &mut rng, 3.0);
            let d = phi_of_constant(&scn, 0.5, &u1)
                .unwrap()
                .sub(&phi_of_constant(&scn, 0.5, &u2).unwrap());
            let lhs = scn.basis.norm_sobolev_sq(&d, 0.0);
            let rhs = c_phi * scn.basis.norm_sobolev_sq(&u1.sub(&u2), 0.0);
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn json_roundtrip_of_bundled_configs() {
        for cfg in [
            ScenarioConfig::default_nonlinear(),
            ScenarioConfig::linear_single_mode(),
        ] {
            let text = cfg.to_json().unwrap();
            assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn set_step_requires_divisor() {
        let mut cfg = ScenarioConfig::default_nonlinear();
        cfg.set_step(0.25 / 80.0).unwrap();
        assert_eq!(cfg.integration.steps_per_delay, 80);
        assert!(cfg.set_step(0.1).is_err());
    }

    #[test]
    fn initial_history_derivatives() {
        let chi = HistorySegment::Oscillating {
            base: SpectralField::from_coeffs(vec![0.1, 0.0]),
            amplitude: SpectralField::from_coeffs(vec![0.0, 1.0]),
            frequency: 3.0,
        };
        let h = 1e-6;
        for r in [-0.2, -0.1, 0.0] {
            let fd = chi.value(r + h).sub(&chi.value(r - h)).scaled(0.5 / h);
            assert!(fd.sub(&chi.derivative(r)).max_abs() < 1e-8);
        }
    }
}
