//! Built-in pointwise coefficients `f(ξ,y)`, `g(ξ,y)` with their
//! y-derivatives and declared bounds, plus the default heat-equation instance.

use serde::{Deserialize, Serialize};

use crate::collocation::NemytskiiCoeffs;
use crate::error::Result;
use crate::schemes::ProblemSpec;
use crate::spectral::SpectralField;
use crate::stochastics::{NemBounds, QSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum DriftKind {
    Zero,
    /// `f = sin(y)`
    Sin,
    /// `f = y/(1+y²)`
    Rational,
    /// `f = c·y`; handy for closed-form checks.
    Linear { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum DiffusionKind {
    /// `g = a2`
    Constant { a2: f64 },
    /// `g = a1·y + a2`
    Affine { a1: f64, a2: f64 },
    /// `g = tanh(y) + c`
    Tanh { c: f64 },
}

/// Bounds on `f`: (sup|f'|, sup|f''|, ∫|f(x,0)|²).
fn drift_bounds(f: DriftKind) -> (f64, f64, f64) {
    match f {
        DriftKind::Zero => (0.0, 0.0, 0.0),
        DriftKind::Sin => (1.0, 1.0, 0.0),
        // sup |f''| ≈ 1.4571, rounded up
        DriftKind::Rational => (1.0, 1.46, 0.0),
        DriftKind::Linear { c } => (c.abs(), 0.0, 0.0),
    }
}

/// Bounds on `g`: (sup|∂g/∂y|, sup|∂²g/∂y²|, sup|∂g/∂x|, sup|g(x,0)|).
fn diffusion_bounds(g: DiffusionKind) -> (f64, f64, f64, f64) {
    match g {
        DiffusionKind::Constant { a2 } => (0.0, 0.0, 0.0, a2.abs()),
        DiffusionKind::Affine { a1, a2 } => (a1.abs(), 0.0, 0.0, a2.abs()),
        // max |2 tanh sech²| = 4/(3√3)
        DiffusionKind::Tanh { c } => (1.0, 0.7698, 0.0, c.abs()),
    }
}

pub fn nemytskii(f: DriftKind, g: DiffusionKind) -> NemytskiiCoeffs {
    let (fv, dfv): (fn(f64, f64, f64) -> f64, fn(f64, f64, f64) -> f64) = match f {
        DriftKind::Zero => (|_, _, _| 0.0, |_, _, _| 0.0),
        DriftKind::Sin => (|_, y, _| y.sin(), |_, y, _| y.cos()),
        DriftKind::Rational => (
            |_, y, _| y / (1.0 + y * y),
            |_, y, _| {
                let s = 1.0 + y * y;
                (1.0 - y * y) / (s * s)
            },
        ),
        DriftKind::Linear { .. } => (|_, y, c| c * y, |_, _, c| c),
    };
    let c = match f {
        DriftKind::Linear { c } => c,
        _ => 0.0,
    };
    match g {
        DiffusionKind::Constant { a2 } => NemytskiiCoeffs::new(
            move |x, y| fv(x, y, c),
            move |x, y| dfv(x, y, c),
            move |_, _| a2,
            |_, _| 0.0,
        ),
        DiffusionKind::Affine { a1, a2 } => NemytskiiCoeffs::new(
            move |x, y| fv(x, y, c),
            move |x, y| dfv(x, y, c),
            move |_, y| a1 * y + a2,
            move |_, _| a1,
        ),
        DiffusionKind::Tanh { c: gc } => NemytskiiCoeffs::new(
            move |x, y| fv(x, y, c),
            move |x, y| dfv(x, y, c),
            move |_, y| y.tanh() + gc,
            |_, y| {
                let s = 1.0 / y.cosh();
                s * s
            },
        ),
    }
}

pub fn bounds(f: DriftKind, g: DiffusionKind) -> NemBounds {
    let (df, d2f, f0) = drift_bounds(f);
    let (dg, d2g, dgx, g0) = diffusion_bounds(g);
    NemBounds {
        df_dy: df,
        d2f_dy2: d2f,
        dg_dy: dg,
        d2g_dy2: d2g,
        dg_dx: dgx,
        g_at_zero: g0,
        f_at_zero_l2sq: f0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogEntry {
    pub kind: &'static str,
    pub name: &'static str,
    pub formula: &'static str,
    pub parameters: &'static [&'static str],
    pub bounds: NemBounds,
}

/// Every built-in coefficient, with bounds for representative parameters.
pub fn listing() -> Vec<CatalogEntry> {
    let f = |name, formula, parameters, kind| {
        let (df, d2f, f0) = drift_bounds(kind);
        CatalogEntry {
            kind: "f",
            name,
            formula,
            parameters,
            bounds: NemBounds {
                df_dy: df,
                d2f_dy2: d2f,
                f_at_zero_l2sq: f0,
                ..NemBounds::default()
            },
        }
    };
    let g = |name, formula, parameters, kind| {
        let (dg, d2g, dgx, g0) = diffusion_bounds(kind);
        CatalogEntry {
            kind: "g",
            name,
            formula,
            parameters,
            bounds: NemBounds {
                dg_dy: dg,
                d2g_dy2: d2g,
                dg_dx: dgx,
                g_at_zero: g0,
                ..NemBounds::default()
            },
        }
    };
    vec![
        f("zero", "0", &[], DriftKind::Zero),
        f("sin", "sin(y)", &[], DriftKind::Sin),
        f("rational", "y/(1+y^2)", &[], DriftKind::Rational),
        f("linear", "c*y", &["c"], DriftKind::Linear { c: 1.0 }),
        g("constant", "a2", &["a2"], DiffusionKind::Constant { a2: 1.0 }),
        g("affine", "a1*y + a2", &["a1", "a2"], DiffusionKind::Affine { a1: 0.5, a2: 1.0 }),
        g("tanh", "tanh(y) + c", &["c"], DiffusionKind::Tanh { c: 0.0 }),
    ]
}

/// The reference heat-equation instance: K = 64, T = 1, X₀ = e₁ + 0.2e₂,
/// f = sin, g = 0.5y + 1, q_i = e^{-0.1i} on 64 modes.
pub fn default_instance() -> Result<ProblemSpec> {
    default_instance_with(DriftKind::Sin, DiffusionKind::Affine { a1: 0.5, a2: 1.0 })
}

pub fn default_instance_with(f: DriftKind, g: DiffusionKind) -> Result<ProblemSpec> {
    let k = 64;
    let mut x0 = vec![0.0; k];
    x0[0] = 1.0;
    x0[1] = 0.2;
    ProblemSpec::new(
        SpectralField::new(x0)?,
        nemytskii(f, g),
        QSpec::exponential(0.1, k)?,
        1.0,
    )
}
