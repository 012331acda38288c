//! Sine eigensystem of the Dirichlet Laplacian on (0,1).
//!
//! A [`SpectralField`] stores the coefficients of `x = Σ x_i e_i` with
//! `e_i(ξ) = √2 sin(iπξ)` and `-A e_i = λ_i e_i`, `λ_i = i²π²`. Every
//! operator in this module is diagonal in that basis.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Coefficients of a function on (0,1) in the orthonormal sine basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return invalid("spectral field needs at least one mode");
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return invalid(format!("non-finite coefficient at mode {}", i + 1));
        }
        Ok(Self { coeffs })
    }

    /// Skips the finiteness scan; callers guarantee finite input.
    pub(crate) fn from_vec_unchecked(coeffs: Vec<f64>) -> Self {
        debug_assert!(!coeffs.is_empty());
        Self { coeffs }
    }

    pub fn zeros(k: usize) -> Self {
        assert!(k > 0, "mode cutoff must be positive");
        Self { coeffs: vec![0.0; k] }
    }

    /// The basis function `e_mode` (1-based) in a `k`-mode field.
    pub fn basis(k: usize, mode: usize) -> Result<Self> {
        if mode == 0 || mode > k {
            return invalid(format!("mode {mode} outside 1..={k}"));
        }
        let mut f = Self::zeros(k);
        f.coeffs[mode - 1] = 1.0;
        Ok(f)
    }

    pub fn k(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            invalid("field has non-finite coefficients")
        }
    }

    pub(crate) fn check_same_k(&self, other: &Self) -> Result<()> {
        if self.k() != other.k() {
            return Err(Error::DimensionMismatch {
                expected: self.k(),
                got: other.k(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_k(other)?;
        Ok(Self::from_vec_unchecked(
            self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_k(other)?;
        Ok(Self::from_vec_unchecked(
            self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_vec_unchecked(self.coeffs.iter().map(|c| c * s).collect())
    }
}

/// `λ_i = i²π²`.
pub fn eigenvalue(i: usize) -> f64 {
    let x = i as f64 * PI;
    x * x
}

/// `e_i(ξ) = √2 sin(iπξ)`.
pub fn basis_value(i: usize, xi: f64) -> f64 {
    SQRT_2 * (i as f64 * PI * xi).sin()
}

/// The K-mode Dirichlet Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    eigenvalues: Vec<f64>,
}

impl OperatorSpec {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return invalid("mode cutoff K must be positive");
        }
        Ok(Self {
            eigenvalues: (1..=k).map(eigenvalue).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Diagonal of `E(t) = e^{tA}`.
    pub fn semigroup_factors(&self, t: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return invalid(format!("semigroup time must be >= 0, got {t}"));
        }
        Ok(self.eigenvalues.iter().map(|l| (-l * t).exp()).collect())
    }
}

/// `λ^r` evaluated as `exp(r ln λ)`.
fn lambda_pow(lambda: f64, r: f64) -> f64 {
    (r * lambda.ln()).exp()
}

/// `‖x‖_r = (Σ λ_i^r x_i²)^{1/2}` over the stored modes.
pub fn sobolev_norm(x: &SpectralField, r: f64) -> Result<f64> {
    x.check_finite()?;
    let s: f64 = x
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| lambda_pow(eigenvalue(i + 1), r) * c * c)
        .sum();
    Ok(s.sqrt())
}

/// `E(t)x`: mode `i` damped by `e^{-λ_i t}`.
pub fn apply_semigroup(x: &SpectralField, t: f64) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return invalid(format!("semigroup time must be >= 0, got {t}"));
    }
    Ok(SpectralField::from_vec_unchecked(
        x.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * (-eigenvalue(i + 1) * t).exp())
            .collect(),
    ))
}

/// `(-A)^{r/2} x`.
pub fn apply_fractional_power(x: &SpectralField, r: f64) -> Result<SpectralField> {
    x.check_finite()?;
    Ok(SpectralField::from_vec_unchecked(
        x.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * lambda_pow(eigenvalue(i + 1), 0.5 * r))
            .collect(),
    ))
}

/// `P_N x`: zero every coefficient above mode `n`.
pub fn project(x: &SpectralField, n: usize) -> Result<SpectralField> {
    if n == 0 || n > x.k() {
        return invalid(format!("projection order {n} outside 1..={}", x.k()));
    }
    let mut out = x.clone();
    project_in_place(out.coeffs_mut(), n);
    Ok(out)
}

pub(crate) fn project_in_place(coeffs: &mut [f64], n: usize) {
    for c in coeffs.iter_mut().skip(n) {
        *c = 0.0;
    }
}

/// Pointwise value `Σ x_i √2 sin(iπξ)` for `ξ ∈ (0,1)`.
pub fn eval_at(x: &SpectralField, xi: f64) -> Result<f64> {
    if !(xi > 0.0 && xi < 1.0) {
        return invalid(format!("evaluation point {xi} outside (0,1)"));
    }
    Ok(eval_coeffs(&x.coeffs, xi))
}

pub(crate) fn eval_coeffs(coeffs: &[f64], xi: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * basis_value(i + 1, xi))
        .sum()
}

/// Sup over the stored modes of `λ_i^r e^{-λ_i t}`, the diagonal norm of
/// `(-A)^r E(t)` restricted to K modes.
pub fn smoothing_sup(op: &OperatorSpec, r: f64, t: f64) -> f64 {
    op.eigenvalues()
        .iter()
        .map(|&l| lambda_pow(l, r) * (-l * t).exp())
        .fold(0.0, f64::max)
}

/// `(r/e)^r t^{-r}`: the maximum of `λ ↦ λ^r e^{-λt}` over `λ > 0`.
pub fn smoothing_constant(r: f64, t: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    (r / std::f64::consts::E).powf(r) * t.powf(-r)
}

/// Smoothness and integrability indices carried through the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub sigma: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eta: f64,
    pub p: u32,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            sigma: 0.9,
            alpha: 0.5,
            beta1: 0.5,
            beta2: 0.5,
            eta: 0.25,
            p: 4,
        }
    }
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<()> {
        let Self {
            sigma,
            alpha,
            beta1,
            beta2,
            eta,
            p,
        } = *self;
        let fail = |m: String| Err(Error::InvalidSpec(m));
        if !(sigma > 0.0 && sigma < 1.0) {
            return fail(format!("sigma = {sigma} not in (0,1)"));
        }
        if !(alpha >= 0.0 && alpha < sigma + 0.5) {
            return fail(format!("alpha = {alpha} not in [0, sigma + 1/2)"));
        }
        if !(beta1 > 0.0 && beta1 < 1.0) {
            return fail(format!("beta1 = {beta1} not in (0,1)"));
        }
        if !(beta2 > 0.0) {
            return fail(format!("beta2 = {beta2} must be > 0"));
        }
        if !(eta >= 0.0 && eta < sigma.min(1.0 - beta1)) {
            return fail(format!("eta = {eta} not in [0, min(sigma, 1 - beta1))"));
        }
        if p < 4 || p % 2 != 0 {
            return fail(format!("p = {p} must be an even integer >= 4"));
        }
        Ok(())
    }
}
