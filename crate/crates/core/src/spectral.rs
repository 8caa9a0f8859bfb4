//! Dirichlet sine eigenbasis on intervals and rectangles.
//!
//! Fields are stored as coefficient vectors in the L²-orthonormal eigenbasis
//! of `A = -Δ` with homogeneous Dirichlet conditions. Physical-space values
//! live on the interior nodes of a uniform grid, `x_m = m ℓ / (M + 1)` for
//! `m = 1..=M`. On that grid the sines are discretely orthogonal, so the
//! composite trapezoid rule (the boundary nodes vanish) projects exactly onto
//! every mode with index `≤ M`, and products of three resolved fields are
//! projected without aliasing whenever `M ≥ 2N`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Domain `(0, ℓ₁) × … ` with a truncation count and a quadrature grid per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dims: usize,
    pub lengths: Vec<f64>,
    pub modes: Vec<usize>,
    /// Interior grid nodes per axis; defaults to [`DomainSpec::default_quadrature`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_points: Option<Vec<usize>>,
}

impl DomainSpec {
    pub fn interval(length: f64, modes: usize) -> Self {
        DomainSpec {
            dims: 1,
            lengths: vec![length],
            modes: vec![modes],
            quadrature_points: None,
        }
    }

    pub fn rectangle(lengths: [f64; 2], modes: [usize; 2]) -> Self {
        DomainSpec {
            dims: 2,
            lengths: lengths.to_vec(),
            modes: modes.to_vec(),
            quadrature_points: None,
        }
    }

    pub fn with_quadrature(mut self, points: Vec<usize>) -> Self {
        self.quadrature_points = Some(points);
        self
    }

    /// 3/2-rule point count, raised to the `2N` floor needed for cubic terms.
    pub fn default_quadrature(modes: usize) -> usize {
        let three_halves = (3 * modes).div_ceil(2);
        three_halves.max(2 * modes)
    }

    pub fn resolved_quadrature(&self) -> Vec<usize> {
        match &self.quadrature_points {
            Some(points) => points.clone(),
            None => self
                .modes
                .iter()
                .map(|&n| Self::default_quadrature(n))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims != 1 && self.dims != 2 {
            return Err(Error::Config(format!(
                "dims must be 1 or 2, got {}",
                self.dims
            )));
        }
        if self.lengths.len() != self.dims || self.modes.len() != self.dims {
            return Err(Error::Config(format!(
                "expected {} lengths and modes, got {} and {}",
                self.dims,
                self.lengths.len(),
                self.modes.len()
            )));
        }
        if let Some(l) = self.lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::Config(format!("domain length must be > 0, got {l}")));
        }
        if self.modes.contains(&0) {
            return Err(Error::Config("modes must be >= 1 on every axis".into()));
        }
        let points = self.resolved_quadrature();
        if points.len() != self.dims {
            return Err(Error::Config(format!(
                "expected {} quadrature counts, got {}",
                self.dims,
                points.len()
            )));
        }
        for (&m, &n) in points.iter().zip(&self.modes) {
            if m < 2 * n {
                return Err(Error::Config(format!(
                    "quadrature points {m} below 2 x modes = {}",
                    2 * n
                )));
            }
        }
        Ok(())
    }

    pub fn total_modes(&self) -> usize {
        self.modes.iter().product()
    }
}

/// Coefficients `y_j` of a function in the eigenbasis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(len: usize) -> Self {
        SpectralField {
            coeffs: vec![0.0; len],
        }
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        SpectralField { coeffs }
    }

    /// `value · e_index` (0-based position in the sorted basis).
    pub fn unit(len: usize, index: usize, value: f64) -> Self {
        let mut f = Self::zeros(len);
        f.coeffs[index] = value;
        f
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn check_len(&self, expected: usize) -> Result<()> {
        if self.coeffs.len() != expected {
            return Err(Error::Shape {
                expected,
                got: self.coeffs.len(),
            });
        }
        Ok(())
    }

    /// `self += a · x`
    pub fn axpy(&mut self, a: f64, x: &SpectralField) {
        debug_assert_eq!(self.len(), x.len());
        for (s, v) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *s += a * v;
        }
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        SpectralField {
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        debug_assert_eq!(self.len(), other.len());
        SpectralField {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        debug_assert_eq!(self.len(), other.len());
        SpectralField {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Keeps the first `modes` coefficients and zeroes the rest.
    pub fn truncated(&self, modes: usize) -> SpectralField {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut().skip(modes) {
            *c = 0.0;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }
}

/// `(f, g)` in L². The basis is orthonormal, so this is the coefficient dot product.
pub fn inner_product(f: &SpectralField, g: &SpectralField) -> Result<f64> {
    g.check_len(f.len())?;
    Ok(f.coeffs.iter().zip(&g.coeffs).map(|(a, b)| a * b).sum())
}

/// Values on the interior quadrature grid, row-major with axis 0 slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalSamples {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl PhysicalSamples {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        PhysicalSamples {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PhysicalSamples {
        PhysicalSamples {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Eigenvalues, ordering and transform tables for one [`DomainSpec`].
#[derive(Clone, Debug)]
pub struct BasisTable {
    domain: DomainSpec,
    eigenvalues: Vec<f64>,
    /// 1-based multi-index per sorted mode; second entry is 0 in 1D.
    indices: Vec<[usize; 2]>,
    /// Product of the per-axis `sqrt(2/ℓ)` factors.
    normalization: f64,
    points: Vec<usize>,
    /// `sines[axis][(j - 1) * M + (m - 1)] = sin(j π x_m / ℓ)`.
    sines: Vec<Vec<f64>>,
    /// Grid spacing `ℓ / (M + 1)` per axis.
    weights: Vec<f64>,
    /// Sorted mode -> position in the dense `N₁ × N₂` coefficient table.
    dense_pos: Vec<usize>,
}

impl BasisTable {
    pub fn build(domain: &DomainSpec) -> Result<Self> {
        domain.validate()?;
        let points = domain.resolved_quadrature();
        let mut sines = Vec::with_capacity(domain.dims);
        let mut weights = Vec::with_capacity(domain.dims);
        let mut normalization = 1.0;
        for ((&len, &n), &m) in domain.lengths.iter().zip(&domain.modes).zip(&points) {
            let h = len / (m + 1) as f64;
            let mut table = Vec::with_capacity(n * m);
            for j in 1..=n {
                for node in 1..=m {
                    // Argument kept as an exact rational multiple of π.
                    let phase = ((j * node) % (2 * (m + 1))) as f64 / (m + 1) as f64;
                    table.push((PI * phase).sin());
                }
            }
            sines.push(table);
            weights.push(h);
            normalization *= (2.0 / len).sqrt();
        }

        let mut entries: Vec<(f64, [usize; 2], usize)> = Vec::with_capacity(domain.total_modes());
        match domain.dims {
            1 => {
                let kappa = PI / domain.lengths[0];
                for j in 1..=domain.modes[0] {
                    let k = j as f64 * kappa;
                    entries.push((k * k, [j, 0], j - 1));
                }
            }
            _ => {
                let (k1, k2) = (PI / domain.lengths[0], PI / domain.lengths[1]);
                let n2 = domain.modes[1];
                for j in 1..=domain.modes[0] {
                    for k in 1..=n2 {
                        let a = j as f64 * k1;
                        let b = k as f64 * k2;
                        entries.push((a * a + b * b, [j, k], (j - 1) * n2 + (k - 1)));
                    }
                }
            }
        }
        // Stable sort keeps lexicographic order among equal eigenvalues.
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));

        Ok(BasisTable {
            domain: domain.clone(),
            eigenvalues: entries.iter().map(|e| e.0).collect(),
            indices: entries.iter().map(|e| e.1).collect(),
            dense_pos: entries.iter().map(|e| e.2).collect(),
            normalization,
            points,
            sines,
            weights,
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// First Dirichlet eigenvalue `λ₁`.
    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("basis is nonempty")
    }

    pub fn multi_index(&self, pos: usize) -> [usize; 2] {
        self.indices[pos]
    }

    /// Sorted position of a 1-based multi-index (`[j]` or `[j, k]`).
    pub fn position_of(&self, index: &[usize]) -> Option<usize> {
        let key = match (self.domain.dims, index) {
            (1, [j]) => [*j, 0],
            (2, [j, k]) => [*j, *k],
            _ => return None,
        };
        self.indices.iter().position(|i| *i == key)
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn grid_shape(&self) -> Vec<usize> {
        self.points.clone()
    }

    /// Grid node coordinates along one axis.
    pub fn grid_nodes(&self, axis: usize) -> Vec<f64> {
        let h = self.weights[axis];
        (1..=self.points[axis]).map(|m| m as f64 * h).collect()
    }

    /// Product of the grid spacings: the quadrature weight of each node.
    pub fn cell_volume(&self) -> f64 {
        self.weights.iter().product()
    }

    pub fn zeros(&self) -> SpectralField {
        SpectralField::zeros(self.len())
    }

    /// Direct evaluation of `e_pos(x)` at an arbitrary point.
    pub fn eval_mode(&self, pos: usize, x: &[f64]) -> f64 {
        let idx = self.indices[pos];
        let mut v = self.normalization;
        for axis in 0..self.domain.dims {
            v *= (idx[axis] as f64 * PI * x[axis] / self.domain.lengths[axis]).sin();
        }
        v
    }

    pub fn to_physical(&self, field: &SpectralField) -> Result<PhysicalSamples> {
        field.check_len(self.len())?;
        let c = self.normalization;
        match self.domain.dims {
            1 => {
                let (n, m) = (self.domain.modes[0], self.points[0]);
                let s = &self.sines[0];
                let mut values = vec![0.0; m];
                for (j, &y) in field.coeffs().iter().enumerate().take(n) {
                    if y == 0.0 {
                        continue;
                    }
                    let row = &s[j * m..(j + 1) * m];
                    for (v, &sj) in values.iter_mut().zip(row) {
                        *v += y * sj;
                    }
                }
                for v in &mut values {
                    *v *= c;
                }
                Ok(PhysicalSamples {
                    shape: vec![m],
                    values,
                })
            }
            _ => {
                let (n1, n2) = (self.domain.modes[0], self.domain.modes[1]);
                let (m1, m2) = (self.points[0], self.points[1]);
                let mut dense = vec![0.0; n1 * n2];
                for (pos, &y) in field.coeffs().iter().enumerate() {
                    dense[self.dense_pos[pos]] = y;
                }
                // partial[j][b] = Σ_k dense[j][k] sin_k(y_b)
                let mut partial = vec![0.0; n1 * m2];
                for j in 0..n1 {
                    for k in 0..n2 {
                        let y = dense[j * n2 + k];
                        if y == 0.0 {
                            continue;
                        }
                        let row = &self.sines[1][k * m2..(k + 1) * m2];
                        let out = &mut partial[j * m2..(j + 1) * m2];
                        for (o, &s) in out.iter_mut().zip(row) {
                            *o += y * s;
                        }
                    }
                }
                let mut values = vec![0.0; m1 * m2];
                for j in 0..n1 {
                    let prow = &partial[j * m2..(j + 1) * m2];
                    for a in 0..m1 {
                        let s = c * self.sines[0][j * m1 + a];
                        let out = &mut values[a * m2..(a + 1) * m2];
                        for (o, &p) in out.iter_mut().zip(prow) {
                            *o += s * p;
                        }
                    }
                }
                Ok(PhysicalSamples {
                    shape: vec![m1, m2],
                    values,
                })
            }
        }
    }

    pub fn from_physical(&self, samples: &PhysicalSamples) -> Result<SpectralField> {
        let expected: usize = self.points.iter().product();
        if samples.values.len() != expected || samples.shape != self.points {
            return Err(Error::Shape {
                expected,
                got: samples.values.len(),
            });
        }
        let scale = self.normalization * self.cell_volume();
        match self.domain.dims {
            1 => {
                let (n, m) = (self.domain.modes[0], self.points[0]);
                let s = &self.sines[0];
                let coeffs = (0..n)
                    .map(|j| {
                        let row = &s[j * m..(j + 1) * m];
                        scale
                            * row
                                .iter()
                                .zip(&samples.values)
                                .map(|(a, b)| a * b)
                                .sum::<f64>()
                    })
                    .collect();
                Ok(SpectralField::from_coeffs(coeffs))
            }
            _ => {
                let (n1, n2) = (self.domain.modes[0], self.domain.modes[1]);
                let (m1, m2) = (self.points[0], self.points[1]);
                // partial[j][b] = Σ_a sin_j(x_a) f[a][b]
                let mut partial = vec![0.0; n1 * m2];
                for j in 0..n1 {
                    let out = &mut partial[j * m2..(j + 1) * m2];
                    for a in 0..m1 {
                        let s = self.sines[0][j * m1 + a];
                        let frow = &samples.values[a * m2..(a + 1) * m2];
                        for (o, &f) in out.iter_mut().zip(frow) {
                            *o += s * f;
                        }
                    }
                }
                let mut dense = vec![0.0; n1 * n2];
                for j in 0..n1 {
                    let prow = &partial[j * m2..(j + 1) * m2];
                    for k in 0..n2 {
                        let row = &self.sines[1][k * m2..(k + 1) * m2];
                        dense[j * n2 + k] =
                            scale * row.iter().zip(prow).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                let coeffs = self.dense_pos.iter().map(|&p| dense[p]).collect();
                Ok(SpectralField::from_coeffs(coeffs))
            }
        }
    }

    /// Pseudo-spectral application of a pointwise map.
    pub fn map_pointwise(
        &self,
        field: &SpectralField,
        f: impl Fn(f64) -> f64,
    ) -> Result<SpectralField> {
        let physical = self.to_physical(field)?;
        let mapped = physical.map(f);
        if let Some(v) = mapped.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("pointwise map produced {v}")));
        }
        self.from_physical(&mapped)
    }

    /// `‖A^{s/2} f‖ = (Σ λ_j^s y_j²)^{1/2}`.
    pub fn norm_sobolev(&self, field: &SpectralField, s: f64) -> f64 {
        self.norm_sobolev_sq(field, s).sqrt()
    }

    pub fn norm_sobolev_sq(&self, field: &SpectralField, s: f64) -> f64 {
        debug_assert_eq!(field.len(), self.len());
        let y = field.coeffs();
        if s == 0.0 {
            y.iter().map(|c| c * c).sum()
        } else if s == 1.0 {
            y.iter()
                .zip(&self.eigenvalues)
                .map(|(c, l)| l * c * c)
                .sum()
        } else if s == 2.0 {
            y.iter()
                .zip(&self.eigenvalues)
                .map(|(c, l)| l * l * c * c)
                .sum()
        } else {
            y.iter()
                .zip(&self.eigenvalues)
                .map(|(c, l)| l.powf(s) * c * c)
                .sum()
        }
    }

    /// `A^s f`, i.e. coefficients multiplied by `λ_j^s`.
    pub fn apply_power(&self, field: &SpectralField, s: f64) -> SpectralField {
        SpectralField::from_coeffs(
            field
                .coeffs()
                .iter()
                .zip(&self.eigenvalues)
                .map(|(c, l)| c * l.powf(s))
                .collect(),
        )
    }

    /// `l(u) = ∫ weight · u`.
    pub fn functional(&self, weight: &SpectralField, u: &SpectralField) -> Result<f64> {
        inner_product(weight, u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn interval_pi(n: usize) -> BasisTable {
        BasisTable::build(&DomainSpec::interval(PI, n)).unwrap()
    }

    #[test]
    fn eigenvalues_on_unit_interval_length_pi() {
        let b = interval_pi(5);
        assert_eq!(b.eigenvalues()[0], 1.0);
        assert_abs_diff_eq!(b.eigenvalues()[2], 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.lambda1(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rectangle_eigenvalue_of_mode_one_two() {
        let b = BasisTable::build(&DomainSpec::rectangle([PI, PI], [3, 3])).unwrap();
        let pos = b.position_of(&[1, 2]).unwrap();
        assert_abs_diff_eq!(b.eigenvalues()[pos], 5.0, epsilon = 1e-12);
        assert!(b.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        assert!(b.eigenvalues().iter().all(|&l| l > 0.0));
    }

    #[test]
    fn invalid_domains_rejected() {
        assert!(BasisTable::build(&DomainSpec::interval(PI, 0)).is_err());
        assert!(BasisTable::build(&DomainSpec::interval(-1.0, 3)).is_err());
        let mut d = DomainSpec::interval(PI, 3);
        d.dims = 3;
        assert!(BasisTable::build(&d).is_err());
        let d = DomainSpec::interval(PI, 4).with_quadrature(vec![7]);
        assert!(BasisTable::build(&d).is_err());
    }

    #[test]
    fn default_quadrature_respects_floor() {
        assert_eq!(DomainSpec::default_quadrature(32), 64);
        assert_eq!(DomainSpec::default_quadrature(1), 2);
    }

    #[test]
    fn zero_field_maps_to_zero_samples() {
        let b = interval_pi(8);
        let p = b.to_physical(&b.zeros()).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
        let back = b.from_physical(&p).unwrap();
        assert!(back.coeffs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_mode_samples_normalized_sine() {
        let b = interval_pi(4);
        let p = b.to_physical(&SpectralField::unit(4, 0, 1.0)).unwrap();
        for (x, v) in b.grid_nodes(0).iter().zip(&p.values) {
            assert_abs_diff_eq!(*v, (2.0 / PI).sqrt() * x.sin(), epsilon = 1e-14);
        }
    }

    #[test]
    fn second_mode_projects_to_unit_coefficient() {
        let b = interval_pi(6);
        let xs = b.grid_nodes(0);
        let samples = PhysicalSamples {
            shape: vec![xs.len()],
            values: xs
                .iter()
                .map(|x| (2.0 / PI).sqrt() * (2.0 * x).sin())
                .collect(),
        };
        let f = b.from_physical(&samples).unwrap();
        for (j, c) in f.coeffs().iter().enumerate() {
            let expect = if j == 1 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(*c, expect, epsilon = 1e-13);
        }
    }

    #[test]
    fn sine_cubed_matches_trig_identity() {
        // sin³x = (3/4) sin x − (1/4) sin 3x; with e_j = sqrt(2/π) sin(jx),
        // the coefficients are sqrt(π/2)·(3/4, 0, −1/4).
        let b = interval_pi(8);
        let xs = b.grid_nodes(0);
        let samples = PhysicalSamples {
            shape: vec![xs.len()],
            values: xs.iter().map(|x| x.sin().powi(3)).collect(),
        };
        let f = b.from_physical(&samples).unwrap();
        let r = (PI / 2.0).sqrt();
        assert_abs_diff_eq!(f.coeffs()[0], 0.75 * r, epsilon = 1e-13);
        assert_abs_diff_eq!(f.coeffs()[1], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(f.coeffs()[2], -0.25 * r, epsilon = 1e-13);
        for c in &f.coeffs()[3..] {
            assert_abs_diff_eq!(*c, 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn shape_errors() {
        let b = interval_pi(4);
        assert!(matches!(
            b.to_physical(&SpectralField::zeros(3)),
            Err(Error::Shape { .. })
        ));
        assert!(b.from_physical(&PhysicalSamples::zeros(vec![5])).is_err());
        assert!(inner_product(&SpectralField::zeros(3), &SpectralField::zeros(4)).is_err());
    }

    #[test]
    fn sobolev_norm_of_unit_modes() {
        let b = interval_pi(4);
        assert_abs_diff_eq!(b.norm_sobolev(&SpectralField::unit(4, 0, 1.0), 1.0), 1.0);
        let e2 = SpectralField::unit(4, 1, 1.0);
        for sigma in [0.1, 0.25, 0.5, 1.0, 1.7] {
            assert_abs_diff_eq!(
                b.norm_sobolev(&e2, sigma),
                2f64.powf(sigma),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn eigenrelation() {
        let b = interval_pi(6);
        for j in 0..6 {
            let e = SpectralField::unit(6, j, 1.0);
            let ae = b.apply_power(&e, 1.0);
            assert_eq!(b.norm_sobolev(&ae, 0.0), b.eigenvalues()[j]);
        }
    }

    #[test]
    fn orthogonality_and_self_product() {
        let e1 = SpectralField::unit(3, 0, 1.0);
        let e2 = SpectralField::unit(3, 1, 1.0);
        assert_eq!(inner_product(&e1, &e2).unwrap(), 0.0);
        let f = SpectralField::from_coeffs(vec![0.3, -1.2, 0.7]);
        let b = interval_pi(3);
        assert_abs_diff_eq!(
            inner_product(&f, &f).unwrap(),
            b.norm_sobolev(&f, 0.0).powi(2),
            epsilon = 1e-14
        );
    }
}
