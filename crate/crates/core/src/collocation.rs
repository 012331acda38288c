//! Discrete sine transform pair and pseudospectral Nemytskii operators.
//!
//! Physical values live on the interior grid `ξ_j = j/(K+1)`, `j = 1..K`.
//! On that grid the sine basis is exactly orthogonal, so
//! `to_spectral ∘ to_physical` is the identity on K-mode fields.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Function values on the interior collocation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalField {
    values: Vec<f64>,
}

impl PhysicalField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Precomputed DST-I table for a fixed grid size.
#[derive(Debug, Clone)]
pub struct SineTransform {
    k: usize,
    // row i (mode i+1), column j (grid point j+1): √2 sin((i+1)π(j+1)/(k+1))
    table: Vec<f64>,
}

impl SineTransform {
    pub fn new(k: usize) -> Self {
        assert!(k > 0, "transform size must be positive");
        let n1 = (k + 1) as f64;
        let mut table = Vec::with_capacity(k * k);
        for i in 1..=k {
            for j in 1..=k {
                // Reduce the argument mod 2(k+1) so large tables keep full accuracy.
                let r = (i * j) % (2 * (k + 1));
                table.push(std::f64::consts::SQRT_2 * (std::f64::consts::PI * r as f64 / n1).sin());
            }
        }
        Self { k, table }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Grid point `ξ_j`, 1-based.
    pub fn node(&self, j: usize) -> f64 {
        j as f64 / (self.k + 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.k).map(|j| self.node(j)).collect()
    }

    /// `e_mode(ξ_j)` for 1-based mode and grid index.
    pub fn basis_at(&self, mode: usize, j: usize) -> f64 {
        self.table[(mode - 1) * self.k + (j - 1)]
    }

    /// Synthesis: `out[j] = Σ_i x_i e_i(ξ_j)`. `x` may have fewer than K modes.
    pub fn synthesize(&self, x: &[f64], out: &mut [f64]) {
        debug_assert!(x.len() <= self.k && out.len() == self.k);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (c, row) in x.iter().zip(self.table.chunks_exact(self.k)) {
            if *c == 0.0 {
                continue;
            }
            for (o, t) in out.iter_mut().zip(row) {
                *o += c * t;
            }
        }
    }

    /// Analysis: `out[i] = (1/(K+1)) Σ_j v_j e_i(ξ_j)`, for the first
    /// `out.len()` modes.
    pub fn analyze(&self, v: &[f64], out: &mut [f64]) {
        debug_assert!(v.len() == self.k && out.len() <= self.k);
        let scale = 1.0 / (self.k + 1) as f64;
        for (o, row) in out.iter_mut().zip(self.table.chunks_exact(self.k)) {
            let s: f64 = row.iter().zip(v).map(|(t, x)| t * x).sum();
            *o = s * scale;
        }
    }

    pub fn to_physical(&self, x: &SpectralField) -> Result<PhysicalField> {
        if x.k() > self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: x.k(),
            });
        }
        let mut out = vec![0.0; self.k];
        self.synthesize(x.coeffs(), &mut out);
        Ok(PhysicalField::new(out))
    }

    pub fn to_spectral(&self, v: &PhysicalField) -> Result<SpectralField> {
        if v.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.k];
        self.analyze(v.values(), &mut out);
        SpectralField::new(out)
    }
}

type PointMap = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Pointwise coefficient maps `f(ξ,y)`, `∂f/∂y`, `g(ξ,y)`, `∂g/∂y`.
#[derive(Clone)]
pub struct NemytskiiCoeffs {
    pub f: PointMap,
    pub df_dy: PointMap,
    pub g: PointMap,
    pub dg_dy: PointMap,
}

impl fmt::Debug for NemytskiiCoeffs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("NemytskiiCoeffs { .. }")
    }
}

impl NemytskiiCoeffs {
    pub fn new(
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        df_dy: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dg_dy: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            df_dy: Arc::new(df_dy),
            g: Arc::new(g),
            dg_dy: Arc::new(dg_dy),
        }
    }
}

/// Pseudospectral evaluator for Nemytskii operators on K modes.
///
/// With `dealias` set, products are formed on a `2K+1` point grid before
/// truncating back to K modes.
#[derive(Debug, Clone)]
pub struct Collocation {
    k: usize,
    grid: SineTransform,
}

impl Collocation {
    pub fn new(k: usize, dealias: bool) -> Self {
        let n = if dealias { 2 * k + 1 } else { k };
        Self {
            k,
            grid: SineTransform::new(n),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn transform(&self) -> &SineTransform {
        &self.grid
    }

    pub fn is_dealiased(&self) -> bool {
        self.grid.k() != self.k
    }

    fn check(&self, x: &SpectralField) -> Result<()> {
        if x.k() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: x.k(),
            });
        }
        Ok(())
    }

    fn physical(&self, x: &SpectralField) -> Vec<f64> {
        let mut v = vec![0.0; self.grid.k()];
        self.grid.synthesize(x.coeffs(), &mut v);
        v
    }

    fn back(&self, v: &[f64]) -> Result<SpectralField> {
        if let Some(index) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Evaluation { index: index + 1 });
        }
        let mut out = vec![0.0; self.k];
        self.grid.analyze(v, &mut out);
        Ok(SpectralField::from_vec_unchecked(out))
    }

    /// `F(x)`: `f(ξ_j, x(ξ_j))` projected onto K modes.
    pub fn apply_f(&self, nem: &NemytskiiCoeffs, x: &SpectralField) -> Result<SpectralField> {
        self.check(x)?;
        let xs = self.physical(x);
        let v: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(j, &y)| (nem.f)(self.grid.node(j + 1), y))
            .collect();
        self.back(&v)
    }

    /// `G(x)u`: `g(ξ, x(ξ)) u(ξ)`.
    pub fn apply_g(
        &self,
        nem: &NemytskiiCoeffs,
        x: &SpectralField,
        u: &SpectralField,
    ) -> Result<SpectralField> {
        self.check(x)?;
        self.check(u)?;
        let xs = self.physical(x);
        let us = self.physical(u);
        let v: Vec<f64> = xs
            .iter()
            .zip(&us)
            .enumerate()
            .map(|(j, (&y, &w))| (nem.g)(self.grid.node(j + 1), y) * w)
            .collect();
        self.back(&v)
    }

    /// `DF(x)u`: `∂f/∂y(ξ, x(ξ)) u(ξ)`.
    pub fn apply_df(
        &self,
        nem: &NemytskiiCoeffs,
        x: &SpectralField,
        u: &SpectralField,
    ) -> Result<SpectralField> {
        self.check(x)?;
        self.check(u)?;
        let xs = self.physical(x);
        let us = self.physical(u);
        let v: Vec<f64> = xs
            .iter()
            .zip(&us)
            .enumerate()
            .map(|(j, (&y, &w))| (nem.df_dy)(self.grid.node(j + 1), y) * w)
            .collect();
        self.back(&v)
    }

    /// `(DG(x)u)w`: `∂g/∂y(ξ, x(ξ)) u(ξ) w(ξ)`.
    pub fn apply_dg(
        &self,
        nem: &NemytskiiCoeffs,
        x: &SpectralField,
        u: &SpectralField,
        w: &SpectralField,
    ) -> Result<SpectralField> {
        self.check(x)?;
        self.check(u)?;
        self.check(w)?;
        let xs = self.physical(x);
        let us = self.physical(u);
        let ws = self.physical(w);
        let v: Vec<f64> = (0..xs.len())
            .map(|j| (nem.dg_dy)(self.grid.node(j + 1), xs[j]) * us[j] * ws[j])
            .collect();
        self.back(&v)
    }
}
