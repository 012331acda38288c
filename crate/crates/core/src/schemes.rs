//! Exponential Euler in time on K sine modes, spectral Galerkin truncation,
//! and coupled Monte Carlo estimators for strong and normalized errors.

use rayon::prelude::*;

use crate::collocation::{Collocation, NemytskiiCoeffs};
use crate::error::{invalid, Error, Result};
use crate::spectral::{eigenvalue, eval_at, sobolev_norm, AnalysisParams, SpectralField};
use crate::stats::mean_with_se;
use crate::stochastics::{BrownianIncrements, NoisePath, QSpec, Role};

/// Uniform grid `t_n = nT/m` on `[0,T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    m: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return invalid("step count must be positive");
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return invalid(format!("horizon {horizon} must be positive and finite"));
        }
        Ok(Self { horizon, m })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tau(&self) -> f64 {
        self.horizon / self.m as f64
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.horizon / self.m as f64
    }

    /// Index of the grid point at or below `s`.
    pub fn floor_index(&self, s: f64) -> usize {
        let v = self.m as f64 * s / self.horizon;
        let mut n = v.floor();
        // s = t_n may round to just below n
        if n + 1.0 - v < 1e-12 * v.max(1.0) {
            n += 1.0;
        }
        (n.max(0.0) as usize).min(self.m)
    }

    /// `κ_m(s) = ⌊ms/T⌋T/m`.
    pub fn kappa(&self, s: f64) -> f64 {
        self.t(self.floor_index(s))
    }

    /// `Some(n)` if `t` is the grid point `t_n`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let n = self.floor_index(t);
        ((self.t(n) - t).abs() <= 1e-12 * self.horizon).then_some(n)
    }
}

/// A parabolic SPDE on (0,1): `dX = (AX + F(X))dt + G(X)dW`, `X(0) = x0`,
/// with `A` the Dirichlet Laplacian truncated to `K = x0.k()` modes.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub x0: SpectralField,
    pub nem: NemytskiiCoeffs,
    pub qspec: QSpec,
    pub horizon: f64,
    pub params: AnalysisParams,
    /// Form nonlinear products on a `2K+1` point grid.
    pub dealias: bool,
}

impl ProblemSpec {
    pub fn new(x0: SpectralField, nem: NemytskiiCoeffs, qspec: QSpec, horizon: f64) -> Result<Self> {
        let p = Self {
            x0,
            nem,
            qspec,
            horizon,
            params: AnalysisParams::default(),
            dealias: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn k(&self) -> usize {
        self.x0.k()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return invalid(format!("horizon {} must be positive and finite", self.horizon));
        }
        if !self.x0.is_finite() {
            return invalid("initial datum is not finite");
        }
        self.qspec.validate()?;
        self.params.validate()
    }
}

/// `√q_i e_i(ξ_j)` on the interior grid `ξ_j = j/(n+1)`, for synthesizing
/// noise increments pointwise.
#[derive(Debug, Clone)]
pub struct NoiseSynth {
    points: usize,
    k_noise: usize,
    rows: Vec<f64>,
}

impl NoiseSynth {
    pub fn new(qspec: &QSpec, points: usize) -> Self {
        let n1 = points + 1;
        let mut rows = Vec::with_capacity(qspec.k_noise * points);
        for i in 1..=qspec.k_noise {
            let c = qspec.q(i).sqrt() * std::f64::consts::SQRT_2;
            for j in 1..=points {
                let r = (i * j) % (2 * n1);
                rows.push(c * (std::f64::consts::PI * r as f64 / n1 as f64).sin());
            }
        }
        Self {
            points,
            k_noise: qspec.k_noise,
            rows,
        }
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn k_noise(&self) -> usize {
        self.k_noise
    }

    /// `√q_i e_i(ξ_j)`, 1-based mode and point.
    pub fn coefficient(&self, mode: usize, j: usize) -> f64 {
        self.rows[(mode - 1) * self.points + j - 1]
    }

    /// `out[j] = Σ_i √q_i db[i] e_i(ξ_j)`.
    pub fn field(&self, db: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (b, row) in db.iter().zip(self.rows.chunks_exact(self.points)) {
            for (o, r) in out.iter_mut().zip(row) {
                *o += b * r;
            }
        }
    }
}

/// Precomputed transforms for stepping one problem.
#[derive(Debug, Clone)]
pub struct SchemeOps {
    pub(crate) coll: Collocation,
    pub(crate) nodes: Vec<f64>,
    pub(crate) noise: NoiseSynth,
}

impl SchemeOps {
    pub fn new(prob: &ProblemSpec) -> Self {
        let coll = Collocation::new(prob.k(), prob.dealias);
        let n = coll.transform().k();
        Self {
            nodes: coll.transform().nodes(),
            noise: NoiseSynth::new(&prob.qspec, n),
            coll,
        }
    }

    pub fn collocation(&self) -> &Collocation {
        &self.coll
    }

    /// Run `m` steps with per-step increments `incs`, keeping modes `1..=n_keep`.
    /// `observe(n, coeffs)` sees every state including the initial one.
    pub(crate) fn march(
        &self,
        prob: &ProblemSpec,
        incs: &BrownianIncrements,
        n_keep: usize,
        observe: &mut dyn FnMut(usize, &[f64]) -> Result<()>,
    ) -> Result<()> {
        let k = prob.k();
        let m = incs.steps();
        if incs.n_modes() < prob.qspec.k_noise {
            return invalid(format!(
                "{} noise modes supplied, K_noise = {}",
                incs.n_modes(),
                prob.qspec.k_noise
            ));
        }
        let tau = prob.horizon / m as f64;
        let factors: Vec<f64> = (1..=n_keep).map(|i| (-eigenvalue(i) * tau).exp()).collect();
        let grid = self.coll.transform();
        let np = grid.k();
        let nem = &prob.nem;

        let mut x = prob.x0.coeffs().to_vec();
        x[n_keep..].iter_mut().for_each(|c| *c = 0.0);
        let mut xp = vec![0.0; np];
        let mut dw = vec![0.0; np];
        let mut db = vec![0.0; incs.n_modes()];
        observe(0, &x)?;
        for n in 0..m {
            grid.synthesize(&x[..n_keep], &mut xp);
            incs.step(n, &mut db);
            self.noise.field(&db[..self.noise.k_noise()], &mut dw);
            for j in 0..np {
                let (xi, y) = (self.nodes[j], xp[j]);
                xp[j] = y + tau * (nem.f)(xi, y) + (nem.g)(xi, y) * dw[j];
            }
            grid.analyze(&xp, &mut x[..n_keep]);
            for (c, e) in x.iter_mut().zip(&factors) {
                *c *= e;
            }
            if x[..n_keep].iter().any(|c| !c.is_finite()) {
                return Err(Error::Divergence { step: n + 1 });
            }
            observe(n + 1, &x)?;
        }
        debug_assert!(k >= n_keep);
        Ok(())
    }
}

/// States `X̄_0..X̄_m` of a scheme on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemePath {
    pub grid: TimeGrid,
    pub states: Vec<SpectralField>,
}

impl SchemePath {
    pub fn final_state(&self) -> &SpectralField {
        self.states.last().expect("paths hold at least the initial state")
    }
}

fn driving_increments(prob: &ProblemSpec, grid: &TimeGrid, noise: &NoisePath) -> Result<BrownianIncrements> {
    if noise.m_fine % grid.m() != 0 {
        return invalid(format!(
            "grid m = {} does not divide m_fine = {}",
            grid.m(),
            noise.m_fine
        ));
    }
    if (noise.horizon - grid.horizon()).abs() > 1e-12 * grid.horizon() {
        return invalid("noise and grid horizons differ");
    }
    noise.brownian(Role::Driving, prob.qspec.k_noise).coarsen(grid.m())
}

fn record_path(prob: &ProblemSpec, grid: TimeGrid, incs: &BrownianIncrements, n_keep: usize) -> Result<SchemePath> {
    if incs.steps() != grid.m() {
        return invalid(format!("{} increments for {} steps", incs.steps(), grid.m()));
    }
    let ops = SchemeOps::new(prob);
    let mut states = Vec::with_capacity(grid.m() + 1);
    ops.march(prob, incs, n_keep, &mut |_, x| {
        states.push(SpectralField::from_vec_unchecked(x.to_vec()));
        Ok(())
    })?;
    Ok(SchemePath { grid, states })
}

/// `X̄_{n+1} = E(τ)(X̄_n + τF(X̄_n) + G(X̄_n)ΔW_n)` on `grid`, with `ΔW`
/// aggregated from the fine increments of `noise`.
pub fn exp_euler_path(prob: &ProblemSpec, grid: TimeGrid, noise: &NoisePath) -> Result<SchemePath> {
    prob.validate()?;
    let incs = driving_increments(prob, &grid, noise)?;
    record_path(prob, grid, &incs, prob.k())
}

/// As [`exp_euler_path`] with explicit per-step Brownian increments
/// (`incs.mode(i)` drives `√q_i e_i`).
pub fn exp_euler_path_with(prob: &ProblemSpec, grid: TimeGrid, incs: &BrownianIncrements) -> Result<SchemePath> {
    prob.validate()?;
    record_path(prob, grid, incs, prob.k())
}

/// Spectral Galerkin: the exponential Euler path with states, drift and
/// diffusion projected onto the first `n` modes every step.
pub fn galerkin_path(prob: &ProblemSpec, n: usize, grid: TimeGrid, noise: &NoisePath) -> Result<SchemePath> {
    prob.validate()?;
    if n == 0 || n > prob.k() {
        return invalid(format!("Galerkin dimension {n} outside 1..={}", prob.k()));
    }
    let incs = driving_increments(prob, &grid, noise)?;
    record_path(prob, grid, &incs, n)
}

/// Run `samples` noise streams in parallel, dropping diverged samples.
/// Results are in stream order regardless of the worker count.
pub fn run_streams<T, F>(samples: usize, first_stream: u64, f: F) -> Result<(Vec<T>, usize)>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..samples as u64)
        .into_par_iter()
        .map(|s| f(first_stream + s))
        .collect();
    let mut ok = Vec::with_capacity(samples);
    let mut aborted = 0;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(Error::Divergence { .. }) => aborted += 1,
            Err(e) => return Err(e),
        }
    }
    if aborted * 1000 > samples {
        return Err(Error::DivergenceRate {
            aborted,
            samples,
            limit: samples / 1000,
        });
    }
    Ok((ok, aborted))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
    pub first_stream: u64,
}

/// `(E|e|^p)^{1/p}` at one refinement level.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ErrorEstimate {
    /// Step count, Galerkin dimension, or inverse mesh width.
    pub level: usize,
    pub error: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub estimates: Vec<ErrorEstimate>,
    pub aborted: usize,
}

/// Moment estimate with a delta-method standard error from per-sample errors.
pub(crate) fn lp_estimate(level: usize, errors: &[f64], p: u32) -> ErrorEstimate {
    let powers: Vec<f64> = errors.iter().map(|e| e.powi(p as i32)).collect();
    let (mean, se) = mean_with_se(&powers);
    let error = mean.powf(1.0 / p as f64);
    let stderr = if mean > 0.0 {
        error / (p as f64 * mean) * se
    } else {
        0.0
    };
    ErrorEstimate {
        level,
        error,
        stderr,
        samples: errors.len(),
    }
}

/// Coupled strong error `(E max_n ‖X^m(t_n) − X^{m_ref}(t_n)‖_r^p)^{1/p}`
/// for each `m`, the maximum taken over the grid of `m`.
pub fn coupled_strong_error(
    prob: &ProblemSpec,
    m_list: &[usize],
    m_ref: usize,
    r: f64,
    mc: MonteCarlo,
) -> Result<ErrorReport> {
    prob.validate()?;
    if m_list.is_empty() {
        return invalid("empty m list");
    }
    if let Some(m) = m_list.iter().find(|&&m| m == 0 || m_ref % m != 0) {
        return invalid(format!("m = {m} does not divide m_ref = {m_ref}"));
    }
    if r > prob.params.sigma {
        return invalid(format!("r = {r} exceeds sigma = {}", prob.params.sigma));
    }
    let m_max = *m_list.iter().max().unwrap();
    let stride = m_ref / m_max;
    let ops = SchemeOps::new(prob);
    let k = prob.k();

    let (per_sample, aborted) = run_streams(mc.samples, mc.first_stream, |stream| {
        let path = NoisePath::new(mc.seed, stream, m_ref, prob.horizon)?;
        let fine = path.brownian(Role::Driving, prob.qspec.k_noise);
        let mut reference = Vec::with_capacity(m_max + 1);
        ops.march(prob, &fine, k, &mut |n, x| {
            if n % stride == 0 {
                reference.push(x.to_vec());
            }
            Ok(())
        })?;
        let mut maxima = Vec::with_capacity(m_list.len());
        for &m in m_list {
            let incs = fine.coarsen(m)?;
            let skip = m_max / m;
            let mut worst = 0.0f64;
            ops.march(prob, &incs, k, &mut |n, x| {
                let d: Vec<f64> = x.iter().zip(&reference[n * skip]).map(|(a, b)| a - b).collect();
                worst = worst.max(sobolev_norm(&SpectralField::from_vec_unchecked(d), r)?);
                Ok(())
            })?;
            maxima.push(worst);
        }
        Ok(maxima)
    })?;

    let estimates = m_list
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let errs: Vec<f64> = per_sample.iter().map(|s| s[i]).collect();
            lp_estimate(m, &errs, prob.params.p)
        })
        .collect();
    Ok(ErrorReport { estimates, aborted })
}

/// Sample values with the number of diverged streams that were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRun {
    pub values: Vec<f64>,
    pub aborted: usize,
}

/// Pointwise normalized error `√m (X^m(t,x) − X^{m_ref}(t,x))` per stream.
pub fn normalized_error_samples(
    prob: &ProblemSpec,
    m: usize,
    m_ref: usize,
    t_eval: f64,
    x_eval: f64,
    mc: MonteCarlo,
) -> Result<SampleRun> {
    prob.validate()?;
    if m == 0 || m_ref % m != 0 {
        return invalid(format!("m = {m} does not divide m_ref = {m_ref}"));
    }
    if !(x_eval > 0.0 && x_eval < 1.0) {
        return invalid(format!("x_eval = {x_eval} outside (0,1)"));
    }
    let grid = TimeGrid::new(prob.horizon, m)?;
    let Some(n_eval) = grid.index_of(t_eval) else {
        return invalid(format!("t_eval = {t_eval} is not on the grid of m = {m}"));
    };
    let ratio = m_ref / m;
    let ops = SchemeOps::new(prob);
    let k = prob.k();
    let scale = (m as f64).sqrt();

    let (values, aborted) = run_streams(mc.samples, mc.first_stream, |stream| {
        let path = NoisePath::new(mc.seed, stream, m_ref, prob.horizon)?;
        let fine = path.brownian(Role::Driving, prob.qspec.k_noise);
        let coarse = fine.coarsen(m)?;
        let eval = |target: usize, incs: &BrownianIncrements| -> Result<f64> {
            let mut v = f64::NAN;
            ops.march(prob, incs, k, &mut |n, x| {
                if n == target {
                    v = eval_at(&SpectralField::from_vec_unchecked(x.to_vec()), x_eval)?;
                }
                Ok(())
            })?;
            Ok(v)
        };
        if ratio == 1 {
            return Ok(0.0);
        }
        let reference = eval(n_eval * ratio, &fine)?;
        let approx = eval(n_eval, &coarse)?;
        Ok(scale * (approx - reference))
    })?;
    Ok(SampleRun { values, aborted })
}

/// `(E‖Y^N(T) − X(T)‖^p)^{1/p}` for each Galerkin dimension `N`, with both
/// paths on `m` steps of the same noise and `X` the full K-mode scheme.
pub fn galerkin_strong_error(prob: &ProblemSpec, n_list: &[usize], m: usize, mc: MonteCarlo) -> Result<ErrorReport> {
    prob.validate()?;
    if let Some(n) = n_list.iter().find(|&&n| n == 0 || n > prob.k()) {
        return invalid(format!("Galerkin dimension {n} outside 1..={}", prob.k()));
    }
    let ops = SchemeOps::new(prob);
    let k = prob.k();
    let (per_sample, aborted) = run_streams(mc.samples, mc.first_stream, |stream| {
        let path = NoisePath::new(mc.seed, stream, m, prob.horizon)?;
        let incs = path.brownian(Role::Driving, prob.qspec.k_noise);
        let terminal = |n_keep: usize| -> Result<Vec<f64>> {
            let mut out = Vec::new();
            ops.march(prob, &incs, n_keep, &mut |n, x| {
                if n == m {
                    out = x.to_vec();
                }
                Ok(())
            })?;
            Ok(out)
        };
        let reference = terminal(k)?;
        n_list
            .iter()
            .map(|&n| {
                let y = terminal(n)?;
                let d: Vec<f64> = y.iter().zip(&reference).map(|(a, b)| a - b).collect();
                sobolev_norm(&SpectralField::from_vec_unchecked(d), 0.0)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let estimates = n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let errs: Vec<f64> = per_sample.iter().map(|s| s[i]).collect();
            lp_estimate(n, &errs, prob.params.p)
        })
        .collect();
    Ok(ErrorReport { estimates, aborted })
}

/// Coefficients `x_n = n^{-3/2}(ln n)^{-γ}` (`x_1 = 0`) on `k` modes: a
/// field in `Ḣ¹` but in no `Ḣ^{1+r}`, `r > 0`.
pub fn slow_decay_field(gamma: f64, k: usize) -> Result<SpectralField> {
    if !(gamma > 0.5) {
        return invalid(format!("gamma = {gamma} must exceed 1/2"));
    }
    SpectralField::new((1..=k).map(|n| slow_decay_coeff(gamma, n)).collect())
}

fn slow_decay_coeff(gamma: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let n = n as f64;
    n.powf(-1.5) * n.ln().powf(-gamma)
}

/// Terms summed explicitly in [`slow_decay_tail_norms`].
pub const TAIL_TERMS: usize = 10_000_000;

/// `‖P_N x − x‖` for the slow-decay field at each `N`: the tail summed to
/// `10⁷` plus the integral bound `(ln M)^{-2γ}/(2M²)` on the remainder.
pub fn slow_decay_tail_norms(gamma: f64, ns: &[usize]) -> Result<Vec<f64>> {
    if !(gamma > 0.5) {
        return invalid(format!("gamma = {gamma} must exceed 1/2"));
    }
    if let Some(n) = ns.iter().find(|&&n| n == 0 || n >= TAIL_TERMS) {
        return invalid(format!("N = {n} outside 1..{TAIL_TERMS}"));
    }
    let big_m = TAIL_TERMS as f64;
    let remainder = big_m.ln().powf(-2.0 * gamma) / (2.0 * big_m * big_m);
    let mut order: Vec<usize> = (0..ns.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(ns[i]));
    let mut out = vec![0.0; ns.len()];
    // smallest terms first
    let mut acc = remainder;
    let mut n = TAIL_TERMS;
    for i in order {
        while n > ns[i] {
            let c = slow_decay_coeff(gamma, n);
            acc += c * c;
            n -= 1;
        }
        out[i] = acc.sqrt();
    }
    Ok(out)
}

/// `π/√(2γ−1)·(ln N)^{-(2γ−1)/2}·λ_{N+1}^{-1/2}`.
pub fn slow_decay_tail_bound(gamma: f64, n: usize) -> f64 {
    let e = gamma - 0.5;
    std::f64::consts::PI / (2.0 * e).sqrt() * (n as f64).ln().powf(-e) / eigenvalue(n + 1).sqrt()
}
