//! Sliding-window record of a trajectory with cubic Hermite dense output.
//!
//! Each knot keeps a value and a one-sided derivative on each side, so a
//! derivative jump (the start time of a delay problem) does not pollute the
//! interpolant of the neighbouring intervals.

use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::EpsilonProfile;
use crate::spectral::{BasisTable, SpectralField};

/// Relative tolerance used when comparing times against knot positions.
const TIME_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Knot {
    pub t: f64,
    pub value: SpectralField,
    /// Derivative used by the interval ending at this knot.
    pub deriv_left: SpectralField,
    /// Derivative used by the interval starting at this knot.
    pub deriv_right: SpectralField,
}

#[derive(Clone, Debug)]
pub struct HistoryBuffer {
    knots: VecDeque<Knot>,
    window: f64,
    max_step: f64,
}

impl HistoryBuffer {
    pub fn new(window: f64, max_step: f64) -> Self {
        HistoryBuffer {
            knots: VecDeque::new(),
            window,
            max_step,
        }
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn knots(&self) -> impl Iterator<Item = &Knot> {
        self.knots.iter()
    }

    pub fn oldest_time(&self) -> Option<f64> {
        self.knots.front().map(|k| k.t)
    }

    pub fn newest_time(&self) -> Option<f64> {
        self.knots.back().map(|k| k.t)
    }

    pub fn newest(&self) -> Option<&Knot> {
        self.knots.back()
    }

    fn time_tol(&self) -> f64 {
        TIME_TOL * self.max_step.max(f64::MIN_POSITIVE)
    }

    /// Appends a knot and drops those older than `newest − μ − 2Δt`.
    pub fn push(&mut self, t: f64, state: SpectralField, derivative: SpectralField) -> Result<()> {
        if let Some(newest) = self.newest_time() {
            if t <= newest {
                return Err(Error::Ordering { t, newest });
            }
        }
        if let Some(first) = self.knots.front() {
            state.check_len(first.value.len())?;
            derivative.check_len(first.value.len())?;
        }
        self.knots.push_back(Knot {
            t,
            value: state,
            deriv_left: derivative.clone(),
            deriv_right: derivative,
        });
        let cutoff = t - self.window - 2.0 * self.max_step - self.time_tol();
        while self.knots.len() > 1 && self.knots.front().is_some_and(|k| k.t < cutoff) {
            self.knots.pop_front();
        }
        Ok(())
    }

    /// Replaces the derivative that the next interval will start from.
    pub fn set_newest_right_derivative(&mut self, derivative: SpectralField) -> Result<()> {
        let knot = self
            .knots
            .back_mut()
            .ok_or_else(|| Error::Argument("empty history buffer".into()))?;
        derivative.check_len(knot.value.len())?;
        knot.deriv_right = derivative;
        Ok(())
    }

    /// Replaces both one-sided derivatives of the newest knot.
    pub fn set_newest_derivative(&mut self, derivative: SpectralField) -> Result<()> {
        let knot = self
            .knots
            .back_mut()
            .ok_or_else(|| Error::Argument("empty history buffer".into()))?;
        derivative.check_len(knot.value.len())?;
        knot.deriv_left = derivative.clone();
        knot.deriv_right = derivative;
        Ok(())
    }

    pub fn covers(&self, from: f64, to: f64) -> bool {
        match (self.oldest_time(), self.newest_time()) {
            (Some(a), Some(b)) => a <= from + self.time_tol() && to <= b + self.time_tol(),
            _ => false,
        }
    }

    fn coverage_error(&self, s: f64) -> Error {
        Error::Coverage {
            t: s,
            from: self.oldest_time().unwrap_or(f64::NAN),
            to: self.newest_time().unwrap_or(f64::NAN),
        }
    }

    /// Cubic Hermite value at `s`, which must lie inside the knot range.
    pub fn sample_at(&self, s: f64) -> Result<SpectralField> {
        let (oldest, newest) = match (self.oldest_time(), self.newest_time()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(self.coverage_error(s)),
        };
        let tol = self.time_tol();
        if s < oldest - tol || s > newest + tol {
            return Err(self.coverage_error(s));
        }
        let s = s.clamp(oldest, newest);
        self.interpolate(s)
    }

    /// Like [`sample_at`](Self::sample_at), but allows up to one step past the
    /// newest knot by extending the last interval's cubic.
    pub fn sample_with_lookahead(&self, s: f64) -> Result<SpectralField> {
        let newest = self.newest_time().ok_or_else(|| self.coverage_error(s))?;
        if s <= newest {
            return self.sample_at(s);
        }
        if s > newest + self.max_step * (1.0 + 1e-9) || self.knots.len() < 2 {
            return Err(self.coverage_error(s));
        }
        let n = self.knots.len();
        Ok(hermite(&self.knots[n - 2], &self.knots[n - 1], s))
    }

    fn interpolate(&self, s: f64) -> Result<SpectralField> {
        let idx = self.knots.partition_point(|k| k.t <= s);
        // idx >= 1 because s >= oldest.
        let left = &self.knots[idx - 1];
        if left.t == s || idx == self.knots.len() {
            return Ok(left.value.clone());
        }
        Ok(hermite(left, &self.knots[idx], s))
    }

    /// Knot-wise difference of two buffers sharing the same knot times.
    pub fn difference(&self, other: &HistoryBuffer) -> Result<HistoryBuffer> {
        if self.knots.len() != other.knots.len() {
            return Err(Error::Argument(format!(
                "buffers have {} and {} knots",
                self.knots.len(),
                other.knots.len()
            )));
        }
        let mut knots = VecDeque::with_capacity(self.knots.len());
        for (a, b) in self.knots.iter().zip(&other.knots) {
            if (a.t - b.t).abs() > self.time_tol() {
                return Err(Error::Argument(format!(
                    "knot times differ: {} vs {}",
                    a.t, b.t
                )));
            }
            knots.push_back(Knot {
                t: a.t,
                value: a.value.sub(&b.value),
                deriv_left: a.deriv_left.sub(&b.deriv_left),
                deriv_right: a.deriv_right.sub(&b.deriv_right),
            });
        }
        Ok(HistoryBuffer {
            knots,
            window: self.window,
            max_step: self.max_step,
        })
    }

    /// Sampling times for window maxima: knots inside `[t − μ, t]`, the two
    /// window ends, and `subsamples` equispaced points inside each interval.
    pub fn window_grid(&self, t: f64, subsamples: usize) -> Result<Vec<f64>> {
        let start = t - self.window;
        if !self.covers(start, t) {
            return Err(Error::Coverage {
                t: start,
                from: self.oldest_time().unwrap_or(f64::NAN),
                to: self.newest_time().unwrap_or(f64::NAN),
            });
        }
        let tol = self.time_tol();
        let mut nodes = vec![start];
        for k in &self.knots {
            if k.t > start + tol && k.t < t - tol {
                nodes.push(k.t);
            }
        }
        if t > start {
            nodes.push(t);
        }
        let mut grid = Vec::with_capacity(nodes.len() * (subsamples + 1));
        for w in nodes.windows(2) {
            grid.push(w[0]);
            for i in 1..=subsamples {
                grid.push(w[0] + (w[1] - w[0]) * i as f64 / (subsamples + 1) as f64);
            }
        }
        grid.push(*nodes.last().expect("nonempty"));
        Ok(grid)
    }
}

fn hermite(a: &Knot, b: &Knot, s: f64) -> SpectralField {
    let h = b.t - a.t;
    let th = (s - a.t) / h;
    let om = 1.0 - th;
    let h00 = (1.0 + 2.0 * th) * om * om;
    let h10 = th * om * om * h;
    let h01 = th * th * (3.0 - 2.0 * th);
    let h11 = th * th * (th - 1.0) * h;
    let coeffs = a
        .value
        .coeffs()
        .iter()
        .zip(a.deriv_right.coeffs())
        .zip(b.value.coeffs().iter().zip(b.deriv_left.coeffs()))
        .map(|((y0, d0), (y1, d1))| h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1)
        .collect();
    SpectralField::from_coeffs(coeffs)
}

/// Norm selector for [`window_sup_norm`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum NormKind {
    L2,
    Gradient,
    Laplacian,
    /// `‖A^{s/2} u‖`
    Fractional(f64),
    /// `(max‖u‖² + |ε(t)| max‖∇u‖²)^{1/2}`
    Phase,
    /// `(max‖∇u‖² + |ε(t)| max‖Δu‖²)^{1/2}`
    PhaseRegular,
    /// `(max‖A^{σ/2}u‖² + |ε(t)| max‖A^{(1+σ)/2}u‖²)^{1/2}`
    PhaseFractional(f64),
}

/// Window maxima of the norms entering the phase-space norms.
///
/// The composite (`*_sq`) quantities pair the separate maxima with `|ε(t)|`
/// at the current time; the `pointwise_*` fields take the maximum of the
/// combined expression with `|ε(t + ϱ)|` instead.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct WindowNorms {
    pub sup_l2: f64,
    pub sup_grad: f64,
    pub sup_delta: f64,
    pub sigma: f64,
    pub sup_frac_sigma: f64,
    pub sup_frac_one_plus_sigma: f64,
    pub eps_now: f64,
    pub pointwise_phase_sq: f64,
    pub pointwise_regular_sq: f64,
    pub pointwise_fractional_sq: f64,
}

impl WindowNorms {
    pub fn phase_sq(&self) -> f64 {
        self.sup_l2.powi(2) + self.eps_now.abs() * self.sup_grad.powi(2)
    }

    pub fn regular_sq(&self) -> f64 {
        self.sup_grad.powi(2) + self.eps_now.abs() * self.sup_delta.powi(2)
    }

    pub fn fractional_sq(&self) -> f64 {
        self.sup_frac_sigma.powi(2) + self.eps_now.abs() * self.sup_frac_one_plus_sigma.powi(2)
    }
}

/// All window maxima over `[t − μ, t]` in one pass.
pub fn window_norms(
    buffer: &HistoryBuffer,
    t: f64,
    basis: &BasisTable,
    epsilon: &EpsilonProfile,
    sigma: f64,
    subsamples: usize,
) -> Result<WindowNorms> {
    let grid = buffer.window_grid(t, subsamples)?;
    let lam = basis.eigenvalues();
    let lam_s: Vec<f64> = lam.iter().map(|l| l.powf(sigma)).collect();
    let lam_1s: Vec<f64> = lam.iter().map(|l| l.powf(1.0 + sigma)).collect();
    let mut out = WindowNorms {
        sigma,
        eps_now: epsilon.value(t),
        ..WindowNorms::default()
    };
    let (mut l2, mut g, mut d, mut fs, mut f1s) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for &s in &grid {
        let u = buffer.sample_at(s)?;
        let (mut a, mut b, mut c, mut e, mut f) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (j, &y) in u.coeffs().iter().enumerate() {
            let y2 = y * y;
            a += y2;
            b += lam[j] * y2;
            c += lam[j] * lam[j] * y2;
            e += lam_s[j] * y2;
            f += lam_1s[j] * y2;
        }
        let eps = epsilon.value(s).abs();
        out.pointwise_phase_sq = out.pointwise_phase_sq.max(a + eps * b);
        out.pointwise_regular_sq = out.pointwise_regular_sq.max(b + eps * c);
        out.pointwise_fractional_sq = out.pointwise_fractional_sq.max(e + eps * f);
        l2 = l2.max(a);
        g = g.max(b);
        d = d.max(c);
        fs = fs.max(e);
        f1s = f1s.max(f);
    }
    out.sup_l2 = l2.sqrt();
    out.sup_grad = g.sqrt();
    out.sup_delta = d.sqrt();
    out.sup_frac_sigma = fs.sqrt();
    out.sup_frac_one_plus_sigma = f1s.sqrt();
    Ok(out)
}

/// Window maximum of a single norm kind.
pub fn window_sup_norm(
    buffer: &HistoryBuffer,
    t: f64,
    kind: NormKind,
    basis: &BasisTable,
    epsilon: &EpsilonProfile,
    subsamples: usize,
) -> Result<f64> {
    let sigma = match kind {
        NormKind::Fractional(s) => s,
        NormKind::PhaseFractional(s) => s,
        _ => 0.0,
    };
    let w = window_norms(buffer, t, basis, epsilon, sigma, subsamples)?;
    Ok(match kind {
        NormKind::L2 => w.sup_l2,
        NormKind::Gradient => w.sup_grad,
        NormKind::Laplacian => w.sup_delta,
        NormKind::Fractional(_) => w.sup_frac_sigma,
        NormKind::Phase => w.phase_sq().sqrt(),
        NormKind::PhaseRegular => w.regular_sq().sqrt(),
        NormKind::PhaseFractional(_) => w.fractional_sq().sqrt(),
    })
}

/// Column order of trajectory CSV dumps.
pub const TRAJECTORY_COLUMNS: [&str; 10] = [
    "t",
    "norm_l2",
    "norm_h1",
    "norm_delta",
    "win_l2",
    "win_h1",
    "win_delta",
    "win_phase_sq",
    "win_regular_sq",
    "win_phase_pointwise_sq",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub norm_l2: f64,
    pub norm_h1: f64,
    pub norm_delta: f64,
    pub win_l2: f64,
    pub win_h1: f64,
    pub win_delta: f64,
    pub win_phase_sq: f64,
    pub win_regular_sq: f64,
    pub win_phase_pointwise_sq: f64,
}

impl TrajectoryRow {
    pub fn new(t: f64, u: &SpectralField, basis: &BasisTable, w: &WindowNorms) -> Self {
        TrajectoryRow {
            t,
            norm_l2: basis.norm_sobolev(u, 0.0),
            norm_h1: basis.norm_sobolev(u, 1.0),
            norm_delta: basis.norm_sobolev(u, 2.0),
            win_l2: w.sup_l2,
            win_h1: w.sup_grad,
            win_delta: w.sup_delta,
            win_phase_sq: w.phase_sq(),
            win_regular_sq: w.regular_sq(),
            win_phase_pointwise_sq: w.pointwise_phase_sq,
        }
    }
}

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(writer);
    w.write_record(TRAJECTORY_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
