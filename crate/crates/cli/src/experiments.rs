//! One function per experiment: simulate, reduce, and judge.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use expeuler::catalog;
use expeuler::fem::fem_strong_error;
use expeuler::limit_law::{gbm_limit_samples, gbm_normalized_errors, limit_point_samples};
use expeuler::schemes::{
    coupled_strong_error, galerkin_strong_error, normalized_error_samples, slow_decay_tail_bound,
    slow_decay_tail_norms, ErrorReport,
};
use expeuler::sode::gbm_limit_second_moment;
use expeuler::spectral::eigenvalue;
use expeuler::stats::{fit_rate, fit_rate_with_errors, ks_two_sample, moment_summary};
use expeuler::stochastics::{check_conditions, Verdict};
use expeuler::{MonteCarlo, Result, SampleSet};

use crate::config::{ExperimentConfig, Plan, Tolerances};
use crate::report::{StreamRange, Table, ToleranceCheck};

pub struct Outcome {
    pub metrics: BTreeMap<String, Value>,
    pub checks: Vec<ToleranceCheck>,
    pub table: Table,
    pub samples: Vec<(String, SampleSet)>,
    pub streams: Option<StreamRange>,
    pub aborted: usize,
}

impl Outcome {
    fn new(table: Table) -> Self {
        Self {
            metrics: BTreeMap::new(),
            checks: Vec::new(),
            table,
            samples: Vec::new(),
            streams: None,
            aborted: 0,
        }
    }

    fn metric(&mut self, name: &str, v: impl Into<Value>) {
        self.metrics.insert(name.into(), v.into());
    }
}

fn errors(rep: &ErrorReport) -> Vec<f64> {
    rep.estimates.iter().map(|e| e.error).collect()
}

fn stderrs(rep: &ErrorReport) -> Vec<f64> {
    rep.estimates.iter().map(|e| e.stderr).collect()
}

fn streams(mc: MonteCarlo, count: usize) -> Option<StreamRange> {
    Some(StreamRange {
        first: mc.first_stream,
        count: count as u64,
    })
}

/// Moments of orders 1–4 of two samples side by side.
fn moment_table(a: &[f64], b: &[f64]) -> Result<Table> {
    let orders = [1, 2, 3, 4];
    let ma = moment_summary(a, &orders)?;
    let mb = moment_summary(b, &orders)?;
    let mut t = Table::new(&["order", "error_moment", "error_stderr", "limit_moment", "limit_stderr"]);
    for (x, y) in ma.iter().zip(&mb) {
        t.push(vec![x.order as f64, x.value, x.stderr, y.value, y.stderr]);
    }
    Ok(t)
}

/// Second-moment agreement and KS distance between error and limit samples.
fn compare_laws(out: &mut Outcome, err: &[f64], lim: &[f64], target: f64, tol: &Tolerances, ks_max: f64, rel_max: f64) -> Result<()> {
    let m2 = moment_summary(err, &[2])?[0];
    let rel = (m2.value - target).abs() / target;
    let ks = ks_two_sample(err, lim)?;
    out.metric("second_moment", m2.value);
    out.metric("second_moment_stderr", m2.stderr);
    out.metric("second_moment_target", target);
    out.metric("ks_statistic", ks.statistic);
    out.metric("ks_critical_5pct", ks.threshold);
    out.checks.push(ToleranceCheck::within(
        "second_moment_relative",
        rel,
        None,
        Some(tol.moment_rel.unwrap_or(rel_max)),
    ));
    out.checks.push(ToleranceCheck::within("ks_statistic", ks.statistic, None, Some(tol.ks_max.unwrap_or(ks_max))));
    Ok(())
}

pub fn execute(cfg: &ExperimentConfig, plan: Plan, seed: u64) -> Result<Outcome> {
    let tol = cfg.run.tolerances.clone().unwrap_or_default();
    let mc = |samples| MonteCarlo {
        samples,
        seed,
        first_stream: cfg.run.first_stream.unwrap_or(0),
    };
    match plan {
        Plan::StrongOrder { prob, m_list, m_ref, r } => {
            let n = cfg.samples().expect("validated");
            let rep = coupled_strong_error(&prob, &m_list, m_ref, r, mc(n))?;
            let mut out = Outcome::new(Table::new(&["m", "error", "stderr", "samples"]));
            for e in &rep.estimates {
                out.table.push(vec![e.level as f64, e.error, e.stderr, e.samples as f64]);
            }
            let xs: Vec<f64> = m_list.iter().map(|&m| m as f64).collect();
            let fit = fit_rate_with_errors(&xs, &errors(&rep), Some(&stderrs(&rep)))?;
            out.metric("slope", fit.slope);
            out.metric("slope_stderr", fit.slope_stderr);
            out.metric("intercept", fit.intercept);
            out.metric("p", prob.params.p);
            out.metric("r", r);
            out.metric(
                "contamination_bound",
                (*m_list.last().unwrap() as f64 / m_ref as f64).sqrt(),
            );
            out.checks.push(ToleranceCheck::within(
                "slope",
                fit.slope,
                Some(tol.slope_min.unwrap_or(-0.6)),
                Some(tol.slope_max.unwrap_or(-0.4)),
            ));
            out.streams = streams(mc(n), n);
            out.aborted = rep.aborted;
            Ok(out)
        }
        Plan::SodeLimit { gbm, m, m_sim } => {
            let n = cfg.samples().expect("validated");
            let err = gbm_normalized_errors(gbm, m, mc(n))?;
            let mut lim_mc = mc(n);
            lim_mc.first_stream += n as u64;
            let lim = gbm_limit_samples(gbm, m_sim, lim_mc)?;
            let mut out = Outcome::new(moment_table(&err.values, &lim.values)?);
            let target = gbm_limit_second_moment(gbm.lambda, gbm.mu, gbm.y0, gbm.horizon);
            compare_laws(&mut out, &err.values, &lim.values, target, &tol, 0.03, 0.10)?;
            out.metric("limit_second_moment", moment_summary(&lim.values, &[2])?[0].value);
            out.metric("m", m);
            out.metric("m_sim", m_sim);
            out.streams = streams(mc(n), 2 * n);
            out.aborted = err.aborted + lim.aborted;
            out.samples.push(("errors".into(), SampleSet::new(err.values, "sqrt(m)(Y^m(T)-Y(T))", format!("seed {seed}, streams from {}", mc(n).first_stream))?));
            out.samples.push(("limit".into(), SampleSet::new(lim.values, "M(T)", format!("seed {seed}, streams from {}", lim_mc.first_stream))?));
            Ok(out)
        }
        Plan::SheLimitPoint {
            prob,
            m,
            m_ref,
            limit,
            t_eval,
            x_eval,
        } => {
            let n = cfg.samples().expect("validated");
            let err = normalized_error_samples(&prob, m, m_ref, t_eval, x_eval, mc(n))?;
            let mut lim_mc = mc(n);
            lim_mc.first_stream += n as u64;
            let lim = limit_point_samples(&prob, limit, x_eval, lim_mc)?;
            let mut out = Outcome::new(moment_table(&err.values, &lim.values)?);
            let target = moment_summary(&lim.values, &[2])?[0].value;
            compare_laws(&mut out, &err.values, &lim.values, target, &tol, 0.08, 0.15)?;
            out.metric("contamination_bound", (m as f64 / m_ref as f64).sqrt());
            out.metric("m", m);
            out.metric("m_ref", m_ref);
            out.metric("l_aux", limit.l_aux);
            out.metric("m_sim", limit.m_sim);
            out.metric("x_eval", x_eval);
            out.streams = streams(mc(n), 2 * n);
            out.aborted = err.aborted + lim.aborted;
            out.samples.push(("errors".into(), SampleSet::new(err.values, "sqrt(m)(X^m(T,x)-X^m_ref(T,x))", format!("seed {seed}, streams from {}", mc(n).first_stream))?));
            out.samples.push(("limit".into(), SampleSet::new(lim.values, "U(T,x)", format!("seed {seed}, streams from {}", lim_mc.first_stream))?));
            Ok(out)
        }
        Plan::GalerkinDecay { gammas, n_list } => {
            let mut out = Outcome::new(Table::new(&["gamma", "N", "scaled_tail", "tail", "bound"]));
            for &gamma in &gammas {
                let tails = slow_decay_tail_norms(gamma, &n_list)?;
                let mut scaled = Vec::new();
                let mut below = true;
                for (&nn, &tail) in n_list.iter().zip(&tails) {
                    let bound = slow_decay_tail_bound(gamma, nn);
                    let s = eigenvalue(nn + 1).sqrt() * tail;
                    below &= tail <= bound;
                    scaled.push(s);
                    out.table.push(vec![gamma, nn as f64, s, tail, bound]);
                }
                out.checks.push(ToleranceCheck::flag(&format!("below_bound_gamma_{gamma}"), below));
                out.checks.push(ToleranceCheck::flag(
                    &format!("decreasing_gamma_{gamma}"),
                    scaled.windows(2).all(|w| w[1] < w[0]),
                ));
            }
            Ok(out)
        }
        Plan::GalerkinNormalized { prob, n_list, m } => {
            let n = cfg.samples().expect("validated");
            let rep = galerkin_strong_error(&prob, &n_list, m, mc(n))?;
            let floor = coupled_strong_error(&prob, &[m / 2], m, 0.0, mc(n))?;
            let sigma = prob.params.sigma;
            let mut out = Outcome::new(Table::new(&["N", "error", "stderr", "normalized"]));
            let mut scaled = Vec::new();
            for e in &rep.estimates {
                let s = eigenvalue(e.level + 1).powf((1.0 + sigma) / 2.0) * e.error;
                scaled.push(s);
                out.table.push(vec![e.level as f64, e.error, e.stderr, s]);
            }
            let lams: Vec<f64> = n_list.iter().map(|&nn| eigenvalue(nn + 1)).collect();
            let fit = fit_rate(&lams, &errors(&rep))?;
            out.metric("rate_in_lambda", fit.slope);
            out.metric("temporal_floor", floor.estimates[0].error);
            out.metric("sigma", sigma);
            out.checks.push(ToleranceCheck::within(
                "rate_in_lambda",
                fit.slope,
                None,
                Some(tol.slope_max.unwrap_or(-(1.0 + sigma) / 2.0 + 0.15)),
            ));
            out.checks.push(ToleranceCheck::flag("normalized_decreasing", scaled.windows(2).all(|w| w[1] < w[0])));
            out.streams = streams(mc(n), n);
            out.aborted = rep.aborted + floor.aborted;
            Ok(out)
        }
        Plan::FemRate { prob, elements, m } => {
            let n = cfg.samples().expect("validated");
            let levels: Vec<(usize, usize)> = elements.iter().map(|&e| (m, e)).collect();
            let rep = fem_strong_error(&prob, &levels, m, mc(n))?;
            let mut out = Outcome::new(Table::new(&["h", "error", "stderr"]));
            for e in &rep.estimates {
                out.table.push(vec![1.0 / e.level as f64, e.error, e.stderr]);
            }
            let xs: Vec<f64> = elements.iter().map(|&e| e as f64).collect();
            let fit = fit_rate(&xs, &errors(&rep))?;
            let sigma = prob.params.sigma;
            out.metric("slope_inverse_h", fit.slope);
            out.metric("m", m);
            out.checks.push(ToleranceCheck::within(
                "slope_inverse_h",
                fit.slope,
                None,
                Some(tol.slope_max.unwrap_or(-(1.0 + sigma) + 0.25)),
            ));
            out.streams = streams(mc(n), n);
            out.aborted = rep.aborted;
            Ok(out)
        }
        Plan::FemFull {
            prob,
            levels,
            m_ref,
            iota,
        } => {
            let n = cfg.samples().expect("validated");
            let rep = fem_strong_error(&prob, &levels, m_ref, mc(n))?;
            let mut out = Outcome::new(Table::new(&["m", "h", "error", "stderr"]));
            for (&(m, el), e) in levels.iter().zip(&rep.estimates) {
                out.table.push(vec![m as f64, 1.0 / el as f64, e.error, e.stderr]);
            }
            let xs: Vec<f64> = levels.iter().map(|&(m, _)| m as f64).collect();
            let fit = fit_rate(&xs, &errors(&rep))?;
            out.metric("slope", fit.slope);
            out.metric("iota", iota);
            out.checks.push(ToleranceCheck::within(
                "slope",
                fit.slope,
                Some(tol.slope_min.unwrap_or(-0.65)),
                Some(tol.slope_max.unwrap_or(-0.35)),
            ));
            out.streams = streams(mc(n), n);
            out.aborted = rep.aborted;
            Ok(out)
        }
        Plan::CheckConditions { prob } => {
            let bounds = catalog::bounds(cfg.problem.drift, cfg.problem.diffusion);
            let rep = check_conditions(&prob.qspec, &bounds)?;
            let mut out = Outcome::new(Table::new(&[
                "gamma_upper",
                "trace_partial",
                "trace_tail",
                "c1_partial",
                "c1_tail",
            ]));
            out.table.push(vec![
                rep.gamma_upper,
                rep.trace.partial,
                rep.trace.tail_bound.unwrap_or(f64::INFINITY),
                rep.c1_weighted.partial,
                rep.c1_weighted.tail_bound.unwrap_or(f64::INFINITY),
            ]);
            out.metric("gamma_range", json!([0.0, rep.gamma_upper]));
            out.metric("overall", serde_json::to_value(rep.overall()).unwrap_or(Value::Null));
            out.metric("conditions", serde_json::to_value(&rep.checks).unwrap_or(Value::Null));
            out.checks.push(ToleranceCheck::flag("no_failed_condition", rep.overall() != Verdict::Fail));
            Ok(out)
        }
    }
}
