//! Simulation of the limit equations for the normalized error: the linear
//! SPDE for `U` driven by `W` and the auxiliary family `W̃_l`, and its
//! finite-dimensional analogue `M`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::schemes::{run_streams, MonteCarlo, ProblemSpec, SampleRun, SchemeOps, SchemePath};
use crate::sode::{gbm_exact, gbm_exact_path, mat_vec, sode_exp_euler_terminal, SodeProblem};
use crate::spectral::{eigenvalue, eval_at, SpectralField};
use crate::stochastics::{BrownianIncrements, NoisePath, Role};

/// How the auxiliary term `Σ_{l≤L} DG(X)[G(X)√q_l e_l] ΔW̃_l` is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxSampler {
    /// Draw every `Δβ̃_{k,l}`; cost `L·K_noise` normals per grid point and step.
    Exact,
    /// Draw the pointwise field `Z(ξ_j) = Σ_l c_l(ξ_j) ΔW̃_l(ξ_j)` directly
    /// from its Gaussian law, `Cov = τ·(C_L ∘ C)` with
    /// `C_L(a,b) = Σ_{l≤L} c_l(a)c_l(b)`, `c_l = √q_l e_l`.
    Covariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitConfig {
    /// Number of auxiliary processes `W̃_l` retained.
    pub l_aux: usize,
    pub m_sim: usize,
    pub sampler: AuxSampler,
}

impl LimitConfig {
    fn validate(&self, prob: &ProblemSpec) -> Result<()> {
        if self.l_aux > prob.qspec.k_noise {
            return invalid(format!(
                "L = {} exceeds K_noise = {}",
                self.l_aux, prob.qspec.k_noise
            ));
        }
        if self.m_sim == 0 {
            return invalid("m_sim must be positive");
        }
        Ok(())
    }
}

/// Per-step auxiliary draws on the `m_sim` grid.
#[derive(Debug, Clone, PartialEq)]
pub enum AuxDraws {
    /// `aux[l-1]` holds `Δβ̃_{k,l}` for `k = 1..K_noise`.
    Exact(Vec<BrownianIncrements>),
    /// Standard normals, `normals[j][n]` for grid point `j+1`.
    Covariance(Vec<Vec<f64>>),
}

impl AuxDraws {
    pub fn generate(prob: &ProblemSpec, cfg: &LimitConfig, noise: &NoisePath) -> Result<Self> {
        match cfg.sampler {
            AuxSampler::Exact => (1..=cfg.l_aux)
                .map(|l| {
                    noise
                        .brownian(Role::Auxiliary(l as u32), prob.qspec.k_noise)
                        .coarsen(cfg.m_sim)
                })
                .collect::<Result<Vec<_>>>()
                .map(AuxDraws::Exact),
            AuxSampler::Covariance => {
                let points = SchemeOps::new(prob).coll.transform().k();
                Ok(AuxDraws::Covariance(
                    (1..=points)
                        .map(|j| noise.normals(Role::AuxField, j, 0..cfg.m_sim))
                        .collect(),
                ))
            }
        }
    }
}

/// Transforms and the auxiliary covariance root for one problem; shared by
/// all samples.
#[derive(Debug, Clone)]
pub struct LimitOps {
    ops: SchemeOps,
    cfg: LimitConfig,
    /// Row-major symmetric root of `C_L ∘ C` on the collocation grid.
    cov_root: Vec<f64>,
}

impl LimitOps {
    pub fn new(prob: &ProblemSpec, cfg: LimitConfig) -> Result<Self> {
        prob.validate()?;
        cfg.validate(prob)?;
        let ops = SchemeOps::new(prob);
        let cov_root = match cfg.sampler {
            AuxSampler::Exact => Vec::new(),
            AuxSampler::Covariance => aux_covariance_root(&ops, cfg.l_aux),
        };
        Ok(Self { ops, cfg, cov_root })
    }

    pub fn config(&self) -> &LimitConfig {
        &self.cfg
    }
}

fn aux_covariance_root(ops: &SchemeOps, l_aux: usize) -> Vec<f64> {
    let syn = &ops.noise;
    let np = syn.points();
    let cov = DMatrix::from_fn(np, np, |a, b| {
        let c_l: f64 = (1..=l_aux)
            .map(|l| syn.coefficient(l, a + 1) * syn.coefficient(l, b + 1))
            .sum();
        let c: f64 = (1..=syn.k_noise())
            .map(|k| syn.coefficient(k, a + 1) * syn.coefficient(k, b + 1))
            .sum();
        c_l * c
    });
    let eig = SymmetricEigen::new(cov);
    let v = &eig.eigenvectors;
    // PSD up to rounding; clamp tiny negative eigenvalues
    let s: Vec<f64> = eig.eigenvalues.iter().map(|&e| e.max(0.0).sqrt()).collect();
    let root = DMatrix::from_fn(np, np, |i, j| v[(i, j)] * s[j]) * v.transpose();
    let mut out = Vec::with_capacity(np * np);
    for i in 0..np {
        for j in 0..np {
            out.push(root[(i, j)]);
        }
    }
    out
}

/// One exponential Euler integration of the `U` equation, fed the frozen
/// `X(t_n)` one step at a time.
struct LimitStepper<'a> {
    prob: &'a ProblemSpec,
    lops: &'a LimitOps,
    driving: &'a BrownianIncrements,
    aux: &'a AuxDraws,
    tau: f64,
    aux_scale: f64,
    factors: Vec<f64>,
    u: Vec<f64>,
    xp: Vec<f64>,
    up: Vec<f64>,
    dw: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    nz: Vec<f64>,
    db: Vec<f64>,
}

impl<'a> LimitStepper<'a> {
    fn new(
        prob: &'a ProblemSpec,
        lops: &'a LimitOps,
        driving: &'a BrownianIncrements,
        aux: &'a AuxDraws,
    ) -> Result<Self> {
        let m = lops.cfg.m_sim;
        if driving.steps() != m {
            return invalid(format!("{} driving increments for m_sim = {m}", driving.steps()));
        }
        let np = lops.ops.coll.transform().k();
        match aux {
            AuxDraws::Exact(v) => {
                if v.len() != lops.cfg.l_aux || v.iter().any(|b| b.steps() != m) {
                    return invalid("auxiliary increments do not match L and m_sim");
                }
                if lops.cfg.sampler != AuxSampler::Exact {
                    return invalid("exact auxiliary draws with a covariance sampler");
                }
            }
            AuxDraws::Covariance(v) => {
                if v.len() != np || v.iter().any(|z| z.len() != m) {
                    return invalid("auxiliary normals do not match the grid and m_sim");
                }
                if lops.cfg.sampler != AuxSampler::Covariance {
                    return invalid("covariance auxiliary draws with an exact sampler");
                }
            }
        }
        let k = prob.k();
        let tau = prob.horizon / m as f64;
        Ok(Self {
            prob,
            lops,
            driving,
            aux,
            tau,
            aux_scale: (prob.horizon / 2.0).sqrt(),
            factors: (1..=k).map(|i| (-eigenvalue(i) * tau).exp()).collect(),
            u: vec![0.0; k],
            xp: vec![0.0; np],
            up: vec![0.0; np],
            dw: vec![0.0; np],
            z: vec![0.0; np],
            w: vec![0.0; np],
            nz: vec![0.0; np],
            db: vec![0.0; prob.qspec.k_noise.max(driving.n_modes())],
        })
    }

    /// `U_{n+1}` from `U_n` and `X(t_n)`.
    fn step(&mut self, n: usize, x: &[f64]) -> Result<()> {
        let grid = self.lops.ops.coll.transform();
        let syn = &self.lops.ops.noise;
        let nodes = &self.lops.ops.nodes;
        let nem = &self.prob.nem;
        let np = grid.k();
        let kn = self.prob.qspec.k_noise;

        grid.synthesize(x, &mut self.xp);
        grid.synthesize(&self.u, &mut self.up);
        self.driving.step(n, &mut self.db);
        syn.field(&self.db[..kn], &mut self.dw);

        self.z.iter_mut().for_each(|v| *v = 0.0);
        match self.aux {
            AuxDraws::Exact(per_l) => {
                for (l, incs) in per_l.iter().enumerate() {
                    incs.step(n, &mut self.db);
                    syn.field(&self.db[..kn], &mut self.w);
                    for j in 0..np {
                        self.z[j] += syn.coefficient(l + 1, j + 1) * self.w[j];
                    }
                }
            }
            AuxDraws::Covariance(normals) => {
                let s = self.tau.sqrt();
                for (v, z) in self.nz.iter_mut().zip(normals) {
                    *v = z[n] * s;
                }
                mat_vec(&self.lops.cov_root, &self.nz, &mut self.z);
            }
        }

        for j in 0..np {
            let (xi, y, u) = (nodes[j], self.xp[j], self.up[j]);
            let dg = (nem.dg_dy)(xi, y);
            self.up[j] = u + self.tau * (nem.df_dy)(xi, y) * u + dg * u * self.dw[j]
                - self.aux_scale * dg * (nem.g)(xi, y) * self.z[j];
        }
        grid.analyze(&self.up, &mut self.u);
        for (c, e) in self.u.iter_mut().zip(&self.factors) {
            *c *= e;
        }
        if self.u.iter().any(|c| !c.is_finite()) {
            return Err(Error::Divergence { step: n + 1 });
        }
        Ok(())
    }
}

fn check_grids(noise: &NoisePath, m_sim: usize) -> Result<()> {
    if noise.m_fine % m_sim != 0 {
        return invalid(format!("m_sim = {m_sim} does not divide m_fine = {}", noise.m_fine));
    }
    Ok(())
}

/// `U(T)` along the frozen reference `xpath` (on the `m_sim` grid or a
/// refinement of it), driven by the same `W` as `xpath` plus `L`
/// independent auxiliary processes.
pub fn simulate_limit_spde(
    prob: &ProblemSpec,
    xpath: &SchemePath,
    noise: &NoisePath,
    cfg: LimitConfig,
) -> Result<SpectralField> {
    let lops = LimitOps::new(prob, cfg)?;
    check_grids(noise, cfg.m_sim)?;
    let driving = noise.brownian(Role::Driving, prob.qspec.k_noise).coarsen(cfg.m_sim)?;
    let aux = AuxDraws::generate(prob, &cfg, noise)?;
    simulate_limit_spde_with(prob, xpath, &lops, &driving, &aux)
}

/// As [`simulate_limit_spde`] with explicit increments on the `m_sim` grid.
pub fn simulate_limit_spde_with(
    prob: &ProblemSpec,
    xpath: &SchemePath,
    lops: &LimitOps,
    driving: &BrownianIncrements,
    aux: &AuxDraws,
) -> Result<SpectralField> {
    let m_sim = lops.cfg.m_sim;
    let mx = xpath.grid.m();
    if mx % m_sim != 0 || xpath.states.len() != mx + 1 {
        return invalid(format!("X path on {mx} steps is not a refinement of m_sim = {m_sim}"));
    }
    if xpath.states[0].k() != prob.k() {
        return Err(Error::DimensionMismatch {
            expected: prob.k(),
            got: xpath.states[0].k(),
        });
    }
    let stride = mx / m_sim;
    let mut st = LimitStepper::new(prob, lops, driving, aux)?;
    for n in 0..m_sim {
        st.step(n, xpath.states[n * stride].coeffs())?;
    }
    SpectralField::new(st.u)
}

/// `(X^{m_sim}(T), U(T))` with the reference path generated alongside `U`
/// instead of stored.
pub fn reference_and_limit(
    prob: &ProblemSpec,
    lops: &LimitOps,
    noise: &NoisePath,
) -> Result<(SpectralField, SpectralField)> {
    let cfg = lops.cfg;
    check_grids(noise, cfg.m_sim)?;
    let driving = noise.brownian(Role::Driving, prob.qspec.k_noise).coarsen(cfg.m_sim)?;
    let aux = AuxDraws::generate(prob, &cfg, noise)?;
    let mut st = LimitStepper::new(prob, lops, &driving, &aux)?;
    let mut x_final = Vec::new();
    lops.ops.march(prob, &driving, prob.k(), &mut |n, x| {
        if n < cfg.m_sim {
            st.step(n, x)
        } else {
            x_final = x.to_vec();
            Ok(())
        }
    })?;
    Ok((SpectralField::new(x_final)?, SpectralField::new(st.u)?))
}

/// `U(T, x_eval)` over independent streams.
pub fn limit_point_samples(prob: &ProblemSpec, cfg: LimitConfig, x_eval: f64, mc: MonteCarlo) -> Result<SampleRun> {
    if !(x_eval > 0.0 && x_eval < 1.0) {
        return invalid(format!("x_eval = {x_eval} outside (0,1)"));
    }
    let lops = LimitOps::new(prob, cfg)?;
    let (values, aborted) = run_streams(mc.samples, mc.first_stream, |stream| {
        let noise = NoisePath::new(mc.seed, stream, cfg.m_sim, prob.horizon)?;
        let (_, u) = reference_and_limit(prob, &lops, &noise)?;
        eval_at(&u, x_eval)
    })?;
    Ok(SampleRun { values, aborted })
}

/// `M(T)` for the SDE limit,
/// `M_{n+1} = e^{τL}(M_n + τDf(Y_n)M_n + Dg(Y_n)[M_n]ΔB_n
///            − √(T/2) Σ_j Dg(Y_n)[g_j(Y_n)]ΔB̃_{j,n})`, `M_0 = 0`.
///
/// `ypath` holds `Y(t_0..t_m)`; `aux[j]` are the increments of `B̃_{j+1}`.
pub fn simulate_limit_sode(
    prob: &SodeProblem,
    ypath: &[Vec<f64>],
    driving: &BrownianIncrements,
    aux: &[BrownianIncrements],
) -> Result<Vec<f64>> {
    let (d, mn) = (prob.d(), prob.m_noise());
    prob.check_increments(driving)?;
    let m = driving.steps();
    if ypath.len() != m + 1 {
        return Err(Error::DimensionMismatch {
            expected: m + 1,
            got: ypath.len(),
        });
    }
    if let Some(y) = ypath.iter().find(|y| y.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: y.len(),
        });
    }
    if aux.len() != mn {
        return Err(Error::DimensionMismatch {
            expected: mn,
            got: aux.len(),
        });
    }
    for a in aux {
        prob.check_increments(a)?;
        if a.steps() != m {
            return invalid("auxiliary and driving increments on different grids");
        }
    }
    let tau = prob.horizon / m as f64;
    let e = prob.propagator(tau);
    let c = (prob.horizon / 2.0).sqrt();
    let mut mv = vec![0.0; d];
    let mut acc = vec![0.0; d];
    let mut dfm = vec![0.0; d];
    let mut dgm = vec![0.0; d * mn];
    let mut gy = vec![0.0; d * mn];
    let mut gj = vec![0.0; d];
    let mut db = vec![0.0; mn];
    for n in 0..m {
        let y = &ypath[n];
        (prob.df)(y, &mv, &mut dfm);
        (prob.dg)(y, &mv, &mut dgm);
        driving.step(n, &mut db);
        for i in 0..d {
            acc[i] = mv[i] + tau * dfm[i] + dot(&dgm[i * mn..(i + 1) * mn], &db);
        }
        (prob.g)(y, &mut gy);
        for (j, a) in aux.iter().enumerate() {
            for i in 0..d {
                gj[i] = gy[i * mn + j];
            }
            (prob.dg)(y, &gj, &mut dgm);
            a.step(n, &mut db);
            for i in 0..d {
                acc[i] -= c * dot(&dgm[i * mn..(i + 1) * mn], &db);
            }
        }
        mat_vec(&e, &acc, &mut mv);
        if mv.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: n + 1 });
        }
    }
    Ok(mv)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scalar geometric Brownian motion `dY = λY dt + μY dB`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gbm {
    pub lambda: f64,
    pub mu: f64,
    pub y0: f64,
    pub horizon: f64,
}

impl Gbm {
    pub fn problem(&self) -> Result<SodeProblem> {
        SodeProblem::gbm(self.lambda, self.mu, self.y0, self.horizon)
    }
}

/// `√m (Y^m(T) − Y(T))` against the exact solution on the same path.
pub fn gbm_normalized_errors(gbm: Gbm, m: usize, mc: MonteCarlo) -> Result<SampleRun> {
    let prob = gbm.problem()?;
    let (values, aborted) = run_streams(mc.samples, mc.first_stream, |stream| {
        let noise = NoisePath::new(mc.seed, stream, m, gbm.horizon)?;
        let incs = noise.brownian(Role::Driving, 1);
        let approx = sode_exp_euler_terminal(&prob, &incs)?[0];
        let exact = gbm_exact(gbm.lambda, gbm.mu, gbm.y0, gbm.horizon, incs.mode(1));
        Ok((m as f64).sqrt() * (approx - exact))
    })?;
    Ok(SampleRun { values, aborted })
}

/// `M(T)` for GBM along exact paths on `m_sim` steps.
pub fn gbm_limit_samples(gbm: Gbm, m_sim: usize, mc: MonteCarlo) -> Result<SampleRun> {
    let prob = gbm.problem()?;
    let (values, aborted) = run_streams(mc.samples, mc.first_stream, |stream| {
        let noise = NoisePath::new(mc.seed, stream, m_sim, gbm.horizon)?;
        let driving = noise.brownian(Role::Driving, 1);
        let aux = noise.brownian(Role::Auxiliary(1), 1);
        let y: Vec<Vec<f64>> = gbm_exact_path(gbm.lambda, gbm.mu, gbm.y0, gbm.horizon, driving.mode(1))
            .into_iter()
            .map(|v| vec![v])
            .collect();
        Ok(simulate_limit_sode(&prob, &y, &driving, &[aux])?[0])
    })?;
    Ok(SampleRun { values, aborted })
}
