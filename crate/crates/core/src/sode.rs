//! Exponential Euler for finite-dimensional SDEs `dY = (LY + f(Y))dt + g(Y)dB`
//! with symmetric negative definite `L`, and the exact geometric Brownian
//! motion solution used as an oracle.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::stochastics::{pairwise_sum, BrownianIncrements};

/// `out = h(y)`.
pub type FieldMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `out = Dh(y)[v]`.
pub type DerivativeMap = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub struct SodeProblem {
    d: usize,
    m_noise: usize,
    l: DMatrix<f64>,
    pub y0: Vec<f64>,
    pub horizon: f64,
    /// `f(y)` in `ℝ^d`
    pub f: FieldMap,
    /// `Df(y)[v]` in `ℝ^d`
    pub df: DerivativeMap,
    /// `g(y)` as a row-major `d×m` matrix
    pub g: FieldMap,
    /// `Dg(y)[v]` as a row-major `d×m` matrix
    pub dg: DerivativeMap,
}

impl fmt::Debug for SodeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SodeProblem")
            .field("d", &self.d)
            .field("m_noise", &self.m_noise)
            .field("l", &self.l)
            .field("y0", &self.y0)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

fn check_symmetric(l: &DMatrix<f64>) -> Result<()> {
    if !l.is_square() {
        return invalid(format!("L is {}x{}, not square", l.nrows(), l.ncols()));
    }
    let scale = l.amax().max(1.0);
    for i in 0..l.nrows() {
        for j in 0..i {
            if (l[(i, j)] - l[(j, i)]).abs() > 1e-12 * scale {
                return invalid(format!("L is not symmetric at ({i},{j})"));
            }
        }
    }
    if l.iter().any(|v| !v.is_finite()) {
        return invalid("L has non-finite entries");
    }
    Ok(())
}

/// `e^{tL}` for symmetric `L`, via `V diag(e^{tμ}) Vᵀ`.
pub fn matrix_exp(l: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    check_symmetric(l)?;
    let eig = SymmetricEigen::new(l.clone());
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * (t * eig.eigenvalues[j]).exp());
    Ok(scaled * v.transpose())
}

impl SodeProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        l: DMatrix<f64>,
        y0: Vec<f64>,
        m_noise: usize,
        horizon: f64,
        f: FieldMap,
        df: DerivativeMap,
        g: FieldMap,
        dg: DerivativeMap,
    ) -> Result<Self> {
        check_symmetric(&l)?;
        let d = l.nrows();
        if d == 0 || m_noise == 0 {
            return invalid("state and noise dimensions must be positive");
        }
        if y0.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: y0.len(),
            });
        }
        let eig = SymmetricEigen::new(l.clone());
        if let Some(mu) = eig.eigenvalues.iter().find(|&&mu| !(mu < 0.0)) {
            return invalid(format!("L has eigenvalue {mu}, not negative definite"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return invalid(format!("horizon {horizon} must be positive and finite"));
        }
        Ok(Self {
            d,
            m_noise,
            l,
            y0,
            horizon,
            f,
            df,
            g,
            dg,
        })
    }

    /// Scalar `dY = λY dt + μY dB`.
    pub fn gbm(lambda: f64, mu: f64, y0: f64, horizon: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, lambda),
            vec![y0],
            1,
            horizon,
            Arc::new(|_, out| out[0] = 0.0),
            Arc::new(|_, _, out| out[0] = 0.0),
            Arc::new(move |y, out| out[0] = mu * y[0]),
            Arc::new(move |_, v, out| out[0] = mu * v[0]),
        )
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m_noise(&self) -> usize {
        self.m_noise
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `e^{τL}` row-major.
    pub(crate) fn propagator(&self, tau: f64) -> Vec<f64> {
        let e = matrix_exp(&self.l, tau).expect("L validated at construction");
        let mut out = Vec::with_capacity(self.d * self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                out.push(e[(i, j)]);
            }
        }
        out
    }

    pub(crate) fn check_increments(&self, incs: &BrownianIncrements) -> Result<()> {
        if incs.n_modes() != self.m_noise {
            return Err(Error::DimensionMismatch {
                expected: self.m_noise,
                got: incs.n_modes(),
            });
        }
        if incs.steps() == 0 {
            return invalid("no time steps");
        }
        Ok(())
    }
}

pub(crate) fn mat_vec(a: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, row) in out.iter_mut().zip(a.chunks_exact(n)) {
        *o = row.iter().zip(x).map(|(r, v)| r * v).sum();
    }
}

/// `Y_{n+1} = e^{τL}(Y_n + τf(Y_n) + g(Y_n)ΔB_n)` over `incs.steps()` steps.
/// Returns `Y_0..Y_m`.
pub fn sode_exp_euler(prob: &SodeProblem, incs: &BrownianIncrements) -> Result<Vec<Vec<f64>>> {
    let mut path = Vec::with_capacity(incs.steps() + 1);
    sode_march(prob, incs, &mut |_, y| path.push(y.to_vec()))?;
    Ok(path)
}

/// Terminal value of [`sode_exp_euler`] without storing the path.
pub fn sode_exp_euler_terminal(prob: &SodeProblem, incs: &BrownianIncrements) -> Result<Vec<f64>> {
    let mut last = Vec::new();
    let m = incs.steps();
    sode_march(prob, incs, &mut |n, y| {
        if n == m {
            last = y.to_vec();
        }
    })?;
    Ok(last)
}

fn sode_march(prob: &SodeProblem, incs: &BrownianIncrements, observe: &mut dyn FnMut(usize, &[f64])) -> Result<()> {
    prob.check_increments(incs)?;
    let (d, mn) = (prob.d, prob.m_noise);
    let tau = prob.horizon / incs.steps() as f64;
    let e = prob.propagator(tau);
    let mut y = prob.y0.clone();
    let mut fy = vec![0.0; d];
    let mut gy = vec![0.0; d * mn];
    let mut db = vec![0.0; mn];
    let mut acc = vec![0.0; d];
    observe(0, &y);
    for n in 0..incs.steps() {
        incs.step(n, &mut db);
        (prob.f)(&y, &mut fy);
        (prob.g)(&y, &mut gy);
        for i in 0..d {
            let noise: f64 = gy[i * mn..(i + 1) * mn].iter().zip(&db).map(|(g, b)| g * b).sum();
            acc[i] = y[i] + tau * fy[i] + noise;
        }
        mat_vec(&e, &acc, &mut y);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: n + 1 });
        }
        observe(n + 1, &y);
    }
    Ok(())
}

/// `Y(T) = Y₀ exp((λ − μ²/2)T + μB(T))` with `B(T)` the pairwise sum of
/// the increments.
pub fn gbm_exact(lambda: f64, mu: f64, y0: f64, horizon: f64, increments: &[f64]) -> f64 {
    y0 * ((lambda - 0.5 * mu * mu) * horizon + mu * pairwise_sum(increments)).exp()
}

/// Exact GBM at every grid point `t_n = nT/m` of the increments.
pub fn gbm_exact_path(lambda: f64, mu: f64, y0: f64, horizon: f64, increments: &[f64]) -> Vec<f64> {
    let tau = horizon / increments.len() as f64;
    let mut b = 0.0;
    let mut out = Vec::with_capacity(increments.len() + 1);
    out.push(y0);
    for (n, db) in increments.iter().enumerate() {
        b += db;
        out.push(y0 * ((lambda - 0.5 * mu * mu) * tau * (n + 1) as f64 + mu * b).exp());
    }
    out
}

/// `lim m·E[(Y^m(T) − Y(T))²] = (T²/2)μ⁴Y₀²e^{(2λ+μ²)T}` for scalar GBM.
pub fn gbm_limit_second_moment(lambda: f64, mu: f64, y0: f64, horizon: f64) -> f64 {
    0.5 * horizon * horizon * mu.powi(4) * y0 * y0 * ((2.0 * lambda + mu * mu) * horizon).exp()
}
