//! Piecewise linear finite elements on a uniform mesh of (0,1) with
//! homogeneous Dirichlet conditions: assembly, Ritz and L² projections, the
//! exact discrete semigroup, and the fully discrete exponential Euler scheme.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::schemes::{run_streams, lp_estimate, ErrorReport, MonteCarlo, NoiseSynth, ProblemSpec, SchemeOps, TimeGrid};
use crate::spectral::{eigenvalue, eval_at, SpectralField};
use crate::stochastics::{BrownianIncrements, NoisePath, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FemMesh {
    interior: usize,
}

impl FemMesh {
    /// Mesh with `interior` nodes, `h = 1/(interior+1)`.
    pub fn new(interior: usize) -> Result<Self> {
        if interior == 0 {
            return invalid("mesh needs at least one interior node");
        }
        Ok(Self { interior })
    }

    /// Mesh with `1/h` elements.
    pub fn with_elements(elements: usize) -> Result<Self> {
        if elements < 2 {
            return invalid(format!("{elements} elements leave no interior node"));
        }
        Self::new(elements - 1)
    }

    pub fn interior(&self) -> usize {
        self.interior
    }

    pub fn elements(&self) -> usize {
        self.interior + 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.elements() as f64
    }

    /// Node `x_j = j·h`, `j = 0..=M_h+1`.
    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.elements() as f64
    }
}

/// Nodal values at the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FemField {
    values: Vec<f64>,
}

impl FemField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("nodal value {} is not finite", i + 1));
        }
        Ok(Self { values })
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

/// Tridiagonal symmetric matrix: constant diagonal `d`, off-diagonal `o`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tridiag {
    pub diag: f64,
    pub off: f64,
}

impl Tridiag {
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = v.len();
        for i in 0..n {
            let mut s = self.diag * v[i];
            if i > 0 {
                s += self.off * v[i - 1];
            }
            if i + 1 < n {
                s += self.off * v[i + 1];
            }
            out[i] = s;
        }
    }

    /// Thomas algorithm.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = self.diag;
        c[0] = self.off / denom;
        d[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag - self.off * c[i - 1];
            c[i] = self.off / denom;
            d[i] = (rhs[i] - self.off * d[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        d
    }

    fn dense(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => self.diag,
            1 => self.off,
            _ => 0.0,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FemOperators {
    mesh: FemMesh,
    pub mass: Tridiag,
    pub stiffness: Tridiag,
    /// Generalized eigenvalues `S v = μ M v`, increasing.
    mu: Vec<f64>,
    /// Column `j` is the M-orthonormal eigenvector of `mu[j]`.
    vecs: DMatrix<f64>,
}

/// `M = h/6·(1,4,1)`, `S = 1/h·(−1,2,−1)` and the eigenpairs of `S v = μ M v`.
pub fn assemble(mesh: FemMesh) -> FemOperators {
    let h = mesh.h();
    let n = mesh.interior();
    let mass = Tridiag {
        diag: 4.0 * h / 6.0,
        off: h / 6.0,
    };
    let stiffness = Tridiag {
        diag: 2.0 / h,
        off: -1.0 / h,
    };
    // M = LLᵀ; L⁻¹ S L⁻ᵀ w = μ w; v = L⁻ᵀ w
    let chol = mass.dense(n).cholesky().expect("mass matrix is positive definite");
    let l = chol.l();
    let linv = l.clone().try_inverse().expect("Cholesky factor is invertible");
    let c = &linv * stiffness.dense(n) * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mu: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let w = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    let mut vecs = linv.transpose() * w;
    // sign convention: positive first nonzero component
    for j in 0..n {
        let col = vecs.column(j);
        let first = col.iter().copied().find(|v| v.abs() > 1e-12).unwrap_or(1.0);
        if first < 0.0 {
            vecs.column_mut(j).neg_mut();
        }
    }
    FemOperators {
        mesh,
        mass,
        stiffness,
        mu,
        vecs,
    }
}

/// `μ_j = (6/h²)(1 − cos jπh)/(2 + cos jπh)`.
pub fn closed_form_eigenvalue(mesh: FemMesh, j: usize) -> f64 {
    let h = mesh.h();
    let c = (j as f64 * PI * h).cos();
    6.0 / (h * h) * (1.0 - c) / (2.0 + c)
}

impl FemOperators {
    pub fn mesh(&self) -> FemMesh {
        self.mesh
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.mu
    }

    pub fn eigenvector(&self, j: usize) -> FemField {
        FemField {
            values: self.vecs.column(j).iter().copied().collect(),
        }
    }

    fn check(&self, v: &FemField) -> Result<()> {
        if v.len() != self.mesh.interior() {
            return Err(Error::DimensionMismatch {
                expected: self.mesh.interior(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `vᵀ M w`.
    pub fn mass_inner(&self, v: &FemField, w: &FemField) -> Result<f64> {
        self.check(v)?;
        self.check(w)?;
        let mut mw = vec![0.0; w.len()];
        self.mass.apply(&w.values, &mut mw);
        Ok(v.values.iter().zip(&mw).map(|(a, b)| a * b).sum())
    }

    pub fn mass_norm(&self, v: &FemField) -> Result<f64> {
        Ok(self.mass_inner(v, v)?.max(0.0).sqrt())
    }

    /// `∫ x φ_j` for every interior hat function.
    pub fn load_l2(&self, x: &SpectralField) -> Vec<f64> {
        let h = self.mesh.h();
        (1..=self.mesh.interior())
            .map(|j| {
                let xj = self.mesh.node(j);
                x.coeffs()
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| {
                        let a = (i + 1) as f64 * PI;
                        c * SQRT_2 * (a * xj).sin() * 2.0 * (1.0 - (a * h).cos()) / (a * a * h)
                    })
                    .sum()
            })
            .collect()
    }

    /// `R_h x`: solves `S r = (⟨x, φ_j⟩₁)_j`, the load integrated exactly
    /// element by element as `(2x(x_j) − x(x_{j−1}) − x(x_{j+1}))/h`.
    pub fn ritz_project(&self, x: &SpectralField) -> Result<FemField> {
        let n = self.mesh.interior();
        let h = self.mesh.h();
        let mut vals = vec![0.0; n + 2];
        for (j, v) in vals.iter_mut().enumerate().take(n + 1).skip(1) {
            *v = eval_at(x, self.mesh.node(j))?;
        }
        let load: Vec<f64> = (1..=n).map(|j| (2.0 * vals[j] - vals[j - 1] - vals[j + 1]) / h).collect();
        FemField::new(self.stiffness.solve(&load))
    }

    /// `P̃_h x`: solves `M r = (∫ x φ_j)_j`.
    pub fn mass_project(&self, x: &SpectralField) -> Result<FemField> {
        FemField::new(self.mass.solve(&self.load_l2(x)))
    }

    /// `Ẽ_h(t) v` through the generalized eigenbasis.
    pub fn semigroup(&self, v: &FemField, t: f64) -> Result<FemField> {
        self.check(v)?;
        if !(t >= 0.0) {
            return invalid(format!("t = {t} must be >= 0"));
        }
        let factors: Vec<f64> = self.mu.iter().map(|m| (-m * t).exp()).collect();
        let mut out = vec![0.0; v.len()];
        self.propagate(&factors, &v.values, &mut out);
        FemField::new(out)
    }

    fn propagate(&self, factors: &[f64], v: &[f64], out: &mut [f64]) {
        let n = v.len();
        let mut mv = vec![0.0; n];
        self.mass.apply(v, &mut mv);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, f) in factors.iter().enumerate() {
            let col = self.vecs.column(j);
            let c: f64 = col.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>() * f;
            for (o, a) in out.iter_mut().zip(col.iter()) {
                *o += c * a;
            }
        }
    }

    /// Dense row-major `Ẽ_h(t) = V diag(e^{-μt}) Vᵀ M`.
    pub fn semigroup_matrix(&self, t: f64) -> Vec<f64> {
        let n = self.mesh.interior();
        let mut out = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        let factors: Vec<f64> = self.mu.iter().map(|m| (-m * t).exp()).collect();
        for k in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[k] = 1.0;
            self.propagate(&factors, &e, &mut col);
            for i in 0..n {
                out[i * n + k] = col[i];
            }
        }
        out
    }

    /// Exact `‖v − x‖_{L²}` for the piecewise linear `v` and the sine series `x`.
    pub fn l2_distance(&self, v: &FemField, x: &SpectralField) -> Result<f64> {
        let vv = self.mass_inner(v, v)?;
        let vx: f64 = v.values.iter().zip(self.load_l2(x)).map(|(a, b)| a * b).sum();
        let xx: f64 = x.coeffs().iter().map(|c| c * c).sum();
        Ok((vv - 2.0 * vx + xx).max(0.0).sqrt())
    }

    /// `x` evaluated at the interior nodes.
    pub fn nodal_values(&self, x: &SpectralField) -> Result<FemField> {
        let vals = (1..=self.mesh.interior())
            .map(|j| eval_at(x, self.mesh.node(j)))
            .collect::<Result<Vec<_>>>()?;
        FemField::new(vals)
    }

    /// Mass-matrix and trapezoidal norms of `v − x` at the nodes.
    pub fn nodal_distance(&self, v: &FemField, x: &SpectralField) -> Result<(f64, f64)> {
        let xn = self.nodal_values(x)?;
        let d = FemField::new(v.values.iter().zip(&xn.values).map(|(a, b)| a - b).collect())?;
        let trap = (self.mesh.h() * d.values.iter().map(|v| v * v).sum::<f64>()).sqrt();
        Ok((self.mass_norm(&d)?, trap))
    }
}

/// Fully discrete scheme `X_{n+1} = Ẽ_h(τ)(X_n + τf(X_n) + g(X_n)ΔW_n)`
/// with nodal coefficients, started from `P̃_h X₀`.
pub fn fem_exp_euler_path(
    prob: &ProblemSpec,
    ops: &FemOperators,
    grid: TimeGrid,
    noise: &NoisePath,
) -> Result<Vec<FemField>> {
    prob.validate()?;
    if noise.m_fine % grid.m() != 0 {
        return invalid(format!("grid m = {} does not divide m_fine = {}", grid.m(), noise.m_fine));
    }
    let incs = noise.brownian(Role::Driving, prob.qspec.k_noise).coarsen(grid.m())?;
    let synth = NoiseSynth::new(&prob.qspec, ops.mesh.interior());
    let e = ops.semigroup_matrix(grid.tau());
    let mut path = Vec::with_capacity(grid.m() + 1);
    fem_march(prob, ops, &synth, &e, &incs, &mut |_, v| path.push(FemField { values: v.to_vec() }))?;
    Ok(path)
}

fn fem_march(
    prob: &ProblemSpec,
    ops: &FemOperators,
    synth: &NoiseSynth,
    e: &[f64],
    incs: &BrownianIncrements,
    observe: &mut dyn FnMut(usize, &[f64]),
) -> Result<()> {
    let n = ops.mesh.interior();
    let tau = prob.horizon / incs.steps() as f64;
    let nodes: Vec<f64> = (1..=n).map(|j| ops.mesh.node(j)).collect();
    let mut x = ops.mass_project(&prob.x0)?.values;
    let mut acc = vec![0.0; n];
    let mut dw = vec![0.0; n];
    let mut db = vec![0.0; incs.n_modes()];
    let nem = &prob.nem;
    observe(0, &x);
    for step in 0..incs.steps() {
        incs.step(step, &mut db);
        synth.field(&db[..synth.k_noise()], &mut dw);
        for j in 0..n {
            let (xi, y) = (nodes[j], x[j]);
            acc[j] = y + tau * (nem.f)(xi, y) + (nem.g)(xi, y) * dw[j];
        }
        for (i, o) in x.iter_mut().enumerate() {
            *o = e[i * n..(i + 1) * n].iter().zip(&acc).map(|(a, b)| a * b).sum();
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: step + 1 });
        }
        observe(step + 1, &x);
    }
    Ok(())
}

/// Strong error of the fully discrete scheme at `T` against the spectral
/// exponential Euler reference on `m_ref` steps of the same noise, measured
/// in the nodal mass norm. One `(m, elements)` pair per level.
pub fn fem_strong_error(
    prob: &ProblemSpec,
    levels: &[(usize, usize)],
    m_ref: usize,
    mc: MonteCarlo,
) -> Result<ErrorReport> {
    prob.validate()?;
    if let Some((m, _)) = levels.iter().find(|(m, _)| *m == 0 || m_ref % m != 0) {
        return invalid(format!("m = {m} does not divide m_ref = {m_ref}"));
    }
    let fem: Vec<(FemOperators, NoiseSynth, Vec<f64>)> = levels
        .iter()
        .map(|&(m, el)| {
            let ops = assemble(FemMesh::with_elements(el)?);
            let synth = NoiseSynth::new(&prob.qspec, ops.mesh.interior());
            let e = ops.semigroup_matrix(prob.horizon / m as f64);
            Ok((ops, synth, e))
        })
        .collect::<Result<_>>()?;
    let spectral = SchemeOps::new(prob);
    let (per_sample, aborted) = run_streams(mc.samples, mc.first_stream, |stream| {
        let noise = NoisePath::new(mc.seed, stream, m_ref, prob.horizon)?;
        let fine = noise.brownian(Role::Driving, prob.qspec.k_noise);
        let mut reference = Vec::new();
        spectral.march(prob, &fine, prob.k(), &mut |n, x| {
            if n == m_ref {
                reference = x.to_vec();
            }
            Ok(())
        })?;
        let reference = SpectralField::new(reference)?;
        levels
            .iter()
            .zip(&fem)
            .map(|(&(m, _), (ops, synth, e))| {
                let incs = fine.coarsen(m)?;
                let mut last = Vec::new();
                fem_march(prob, ops, synth, e, &incs, &mut |n, v| {
                    if n == m {
                        last = v.to_vec();
                    }
                })?;
                Ok(ops.nodal_distance(&FemField::new(last)?, &reference)?.0)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let estimates = levels
        .iter()
        .enumerate()
        .map(|(i, &(_, el))| {
            let errs: Vec<f64> = per_sample.iter().map(|s| s[i]).collect();
            lp_estimate(el, &errs, prob.params.p)
        })
        .collect();
    Ok(ErrorReport { estimates, aborted })
}

/// `‖(Ẽ_h(t)P̃_h − E(t))e₁‖` for the mesh with `elements` elements.
pub fn semigroup_error_e1(elements: usize, t: f64) -> Result<f64> {
    let ops = assemble(FemMesh::with_elements(elements)?);
    let e1 = SpectralField::basis(1, 1)?;
    let v = ops.semigroup(&ops.mass_project(&e1)?, t)?;
    let exact = e1.scale((-eigenvalue(1) * t).exp());
    ops.l2_distance(&v, &exact)
}
