//! JSON experiment configuration and its precondition checks.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use expeuler::catalog::{self, DiffusionKind, DriftKind};
use expeuler::limit_law::{AuxSampler, Gbm, LimitConfig};
use expeuler::schemes::{slow_decay_field, TAIL_TERMS};
use expeuler::stochastics::QKind;
use expeuler::{AnalysisParams, ProblemSpec, QSpec, SpectralField, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    StrongOrder,
    SodeLimit,
    SheLimitPoint,
    GalerkinDecay,
    GalerkinNormalized,
    FemRate,
    FemFull,
    CheckConditions,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::StrongOrder => "strong-order",
            Self::SodeLimit => "sode-limit",
            Self::SheLimitPoint => "she-limit-point",
            Self::GalerkinDecay => "galerkin-decay",
            Self::GalerkinNormalized => "galerkin-normalized",
            Self::FemRate => "fem-rate",
            Self::FemFull => "fem-full",
            Self::CheckConditions => "check-conditions",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Leading sine coefficients; the rest are zero.
    Modes { coeffs: Vec<f64> },
    /// `x_n = n^{-3/2}(ln n)^{-γ}`.
    SlowDecay { gamma: f64 },
}

fn default_k() -> usize {
    64
}

fn default_horizon() -> f64 {
    1.0
}

fn default_x0() -> InitialSpec {
    InitialSpec::Modes { coeffs: vec![1.0, 0.2] }
}

fn default_drift() -> DriftKind {
    DriftKind::Sin
}

fn default_diffusion() -> DiffusionKind {
    DiffusionKind::Affine { a1: 0.5, a2: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_x0")]
    pub x0: InitialSpec,
    #[serde(default = "default_drift")]
    pub drift: DriftKind,
    #[serde(default = "default_diffusion")]
    pub diffusion: DiffusionKind,
    #[serde(default)]
    pub params: Option<AnalysisParams>,
    #[serde(default)]
    pub dealias: bool,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            k: default_k(),
            horizon: default_horizon(),
            x0: default_x0(),
            drift: default_drift(),
            diffusion: default_diffusion(),
            params: None,
            dealias: false,
        }
    }
}

// serde cannot combine flatten with deny_unknown_fields
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    #[serde(flatten)]
    pub q: QKind,
    pub k_noise: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            q: QKind::Exponential { rate: 0.1 },
            k_noise: 64,
            seed: 0,
        }
    }
}

/// Every field is optional; each experiment states which ones it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub m_list: Option<Vec<usize>>,
    pub m: Option<usize>,
    pub m_ref: Option<usize>,
    pub samples: Option<usize>,
    pub first_stream: Option<u64>,
    pub l_aux: Option<usize>,
    pub m_sim: Option<usize>,
    pub sampler: Option<AuxSampler>,
    pub t_eval: Option<f64>,
    pub x_eval: Option<f64>,
    /// Sobolev index of the error norm in strong-order.
    pub r: Option<f64>,
    pub n_list: Option<Vec<usize>>,
    pub gamma: Option<Vec<f64>>,
    pub elements: Option<Vec<usize>>,
    pub iota: Option<f64>,
    pub gbm: Option<Gbm>,
    pub output: Option<PathBuf>,
    pub tolerances: Option<Tolerances>,
}

/// Overrides for the acceptance thresholds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub slope_min: Option<f64>,
    pub slope_max: Option<f64>,
    pub ks_max: Option<f64>,
    pub moment_rel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))
}

/// A failed precondition, phrased as the constraint that does not hold.
#[derive(Debug, Clone, PartialEq)]
pub struct Precondition(pub String);

impl std::fmt::Display for Precondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<expeuler::Error> for Precondition {
    fn from(e: expeuler::Error) -> Self {
        Self(e.to_string())
    }
}

type Check<T> = Result<T, Precondition>;

fn fail<T>(msg: impl Into<String>) -> Check<T> {
    Err(Precondition(msg.into()))
}

fn need<T: Clone>(v: &Option<T>, name: &str) -> Check<T> {
    match v {
        Some(v) => Ok(v.clone()),
        None => fail(format!("run.{name} is required")),
    }
}

fn divides(m: usize, m_ref: usize) -> Check<()> {
    if m == 0 || m_ref % m != 0 {
        return fail(format!("m = {m} must divide m_ref = {m_ref}"));
    }
    Ok(())
}

fn strictly_increasing(xs: &[usize], name: &str) -> Check<()> {
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return fail(format!("run.{name} must be strictly increasing"));
    }
    Ok(())
}

/// Validated inputs of one experiment.
pub enum Plan {
    StrongOrder {
        prob: ProblemSpec,
        m_list: Vec<usize>,
        m_ref: usize,
        r: f64,
    },
    SodeLimit {
        gbm: Gbm,
        m: usize,
        m_sim: usize,
    },
    SheLimitPoint {
        prob: ProblemSpec,
        m: usize,
        m_ref: usize,
        limit: LimitConfig,
        t_eval: f64,
        x_eval: f64,
    },
    GalerkinDecay {
        gammas: Vec<f64>,
        n_list: Vec<usize>,
    },
    GalerkinNormalized {
        prob: ProblemSpec,
        n_list: Vec<usize>,
        m: usize,
    },
    FemRate {
        prob: ProblemSpec,
        elements: Vec<usize>,
        m: usize,
    },
    FemFull {
        prob: ProblemSpec,
        levels: Vec<(usize, usize)>,
        m_ref: usize,
        iota: f64,
    },
    CheckConditions {
        prob: ProblemSpec,
    },
}

impl ExperimentConfig {
    pub fn qspec(&self) -> Check<QSpec> {
        let q = QSpec {
            kind: self.noise.q.clone(),
            k_noise: self.noise.k_noise,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn problem(&self) -> Check<ProblemSpec> {
        let p = &self.problem;
        if p.k == 0 {
            return fail("problem.k must be positive");
        }
        let x0 = match &p.x0 {
            InitialSpec::Modes { coeffs } => {
                if coeffs.len() > p.k {
                    return fail(format!("{} initial coefficients exceed K = {}", coeffs.len(), p.k));
                }
                let mut c = coeffs.clone();
                c.resize(p.k, 0.0);
                SpectralField::new(c)?
            }
            InitialSpec::SlowDecay { gamma } => slow_decay_field(*gamma, p.k)?,
        };
        let mut prob = ProblemSpec::new(x0, catalog::nemytskii(p.drift, p.diffusion), self.qspec()?, p.horizon)?;
        if let Some(params) = p.params {
            prob.params = params;
        }
        prob.dealias = p.dealias;
        prob.validate()?;
        Ok(prob)
    }

    pub fn samples(&self) -> Check<usize> {
        let n = need(&self.run.samples, "samples")?;
        if n < 2 {
            return fail(format!("run.samples = {n} must be at least 2"));
        }
        Ok(n)
    }

    /// Checks every precondition of the experiment without simulating.
    pub fn plan(&self) -> Check<Plan> {
        let run = &self.run;
        match self.experiment {
            Experiment::StrongOrder => {
                let prob = self.problem()?;
                let m_list = need(&run.m_list, "m_list")?;
                let m_ref = need(&run.m_ref, "m_ref")?;
                let r = run.r.unwrap_or(0.0);
                self.samples()?;
                if m_list.len() < 3 {
                    return fail(format!("strong-order needs at least 3 m-values, got {}", m_list.len()));
                }
                strictly_increasing(&m_list, "m_list")?;
                for &m in &m_list {
                    divides(m, m_ref)?;
                    if m >= m_ref {
                        return fail(format!("m = {m} must be below m_ref = {m_ref}"));
                    }
                }
                if r > prob.params.sigma {
                    return fail(format!("r = {r} must not exceed sigma = {}", prob.params.sigma));
                }
                Ok(Plan::StrongOrder { prob, m_list, m_ref, r })
            }
            Experiment::SodeLimit => {
                let gbm = run.gbm.unwrap_or(Gbm {
                    lambda: -1.0,
                    mu: 0.5,
                    y0: 1.0,
                    horizon: 1.0,
                });
                gbm.problem()?;
                let m = need(&run.m, "m")?;
                let m_sim = need(&run.m_sim, "m_sim")?;
                self.samples()?;
                if m == 0 || m_sim == 0 {
                    return fail("run.m and run.m_sim must be positive");
                }
                Ok(Plan::SodeLimit { gbm, m, m_sim })
            }
            Experiment::SheLimitPoint => {
                let prob = self.problem()?;
                let m = need(&run.m, "m")?;
                let m_ref = need(&run.m_ref, "m_ref")?;
                divides(m, m_ref)?;
                self.samples()?;
                let limit = LimitConfig {
                    l_aux: run.l_aux.unwrap_or(prob.qspec.k_noise),
                    m_sim: need(&run.m_sim, "m_sim")?,
                    sampler: run.sampler.unwrap_or(AuxSampler::Covariance),
                };
                if limit.l_aux == 0 || limit.l_aux > prob.qspec.k_noise {
                    return fail(format!("L = {} must lie in 1..={}", limit.l_aux, prob.qspec.k_noise));
                }
                if limit.m_sim == 0 {
                    return fail("run.m_sim must be positive");
                }
                let t_eval = run.t_eval.unwrap_or(prob.horizon);
                let x_eval = run.x_eval.unwrap_or(0.5);
                if TimeGrid::new(prob.horizon, m)?.index_of(t_eval).is_none() {
                    return fail(format!("t_eval = {t_eval} must be a grid point of m = {m}"));
                }
                if t_eval != prob.horizon {
                    return fail(format!("t_eval = {t_eval} must equal T = {} for the limit simulator", prob.horizon));
                }
                if !(x_eval > 0.0 && x_eval < 1.0) {
                    return fail(format!("x_eval = {x_eval} must lie in (0,1)"));
                }
                Ok(Plan::SheLimitPoint {
                    prob,
                    m,
                    m_ref,
                    limit,
                    t_eval,
                    x_eval,
                })
            }
            Experiment::GalerkinDecay => {
                let gammas = run.gamma.clone().unwrap_or_else(|| vec![1.0]);
                let n_list = need(&run.n_list, "n_list")?;
                if let Some(g) = gammas.iter().find(|g| !(**g > 0.5)) {
                    return fail(format!("gamma = {g} must exceed 1/2"));
                }
                strictly_increasing(&n_list, "n_list")?;
                if let Some(n) = n_list.iter().find(|&&n| n < 2 || n >= TAIL_TERMS) {
                    return fail(format!("N = {n} must lie in 2..{TAIL_TERMS}"));
                }
                Ok(Plan::GalerkinDecay { gammas, n_list })
            }
            Experiment::GalerkinNormalized => {
                let prob = self.problem()?;
                let n_list = need(&run.n_list, "n_list")?;
                let m = need(&run.m, "m")?;
                self.samples()?;
                strictly_increasing(&n_list, "n_list")?;
                if let Some(n) = n_list.iter().find(|&&n| n == 0 || n >= prob.k()) {
                    return fail(format!("N = {n} must lie in 1..{}", prob.k()));
                }
                if m < 2 || m % 2 != 0 {
                    return fail(format!("m = {m} must be even for the temporal floor estimate"));
                }
                Ok(Plan::GalerkinNormalized { prob, n_list, m })
            }
            Experiment::FemRate => {
                let prob = self.problem()?;
                let elements = need(&run.elements, "elements")?;
                let m = need(&run.m, "m")?;
                self.samples()?;
                if elements.len() < 2 {
                    return fail("fem-rate needs at least 2 meshes");
                }
                strictly_increasing(&elements, "elements")?;
                if let Some(e) = elements.iter().find(|&&e| e < 2) {
                    return fail(format!("{e} elements leave no interior node"));
                }
                if m == 0 {
                    return fail("run.m must be positive");
                }
                Ok(Plan::FemRate { prob, elements, m })
            }
            Experiment::FemFull => {
                let prob = self.problem()?;
                let m_list = need(&run.m_list, "m_list")?;
                let m_ref = need(&run.m_ref, "m_ref")?;
                let iota = run.iota.unwrap_or(0.75);
                self.samples()?;
                if m_list.len() < 3 {
                    return fail(format!("fem-full needs at least 3 m-values, got {}", m_list.len()));
                }
                strictly_increasing(&m_list, "m_list")?;
                let floor = 1.0 / (2.0 * (1.0 + prob.params.sigma));
                if !(iota > floor) {
                    return fail(format!("iota = {iota} must exceed 1/(2(1+sigma)) = {floor:.4}"));
                }
                let mut levels = Vec::new();
                for &m in &m_list {
                    divides(m, m_ref)?;
                    let el = ((m as f64).powf(iota).round() as usize).max(2);
                    levels.push((m, el));
                }
                Ok(Plan::FemFull {
                    prob,
                    levels,
                    m_ref,
                    iota,
                })
            }
            Experiment::CheckConditions => Ok(Plan::CheckConditions { prob: self.problem()? }),
        }
    }
}
