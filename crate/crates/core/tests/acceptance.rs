//! Acceptance criteria 1–10. Each test prints one `PASS`/`FAIL` line.
//!
//! `EXPEULER_ACCEPTANCE_SCALE` (in (0, 1], default 1) scales every Monte
//! Carlo sample count down for smoke runs. Thresholds are unchanged.

use std::io::Write;

use expeuler::catalog::{default_instance, default_instance_with, DiffusionKind, DriftKind};
use expeuler::fem::semigroup_error_e1;
use expeuler::limit_law::{gbm_limit_samples, gbm_normalized_errors, limit_point_samples, AuxSampler, Gbm, LimitConfig};
use expeuler::schemes::{
    coupled_strong_error, galerkin_strong_error, normalized_error_samples, slow_decay_tail_bound,
    slow_decay_tail_norms, ErrorReport,
};
use expeuler::sode::gbm_limit_second_moment;
use expeuler::spectral::{eigenvalue, smoothing_constant, smoothing_sup};
use expeuler::stats::{fit_rate, ks_two_sample, mean_with_se, variance};
use expeuler::stochastics::{couple_to_coarse, pairwise_sum};
use expeuler::{MonteCarlo, NoisePath, OperatorSpec, QSpec, Role, SineTransform, SpectralField};

fn samples(full: usize) -> usize {
    let scale = std::env::var("EXPEULER_ACCEPTANCE_SCALE")
        .ok()
        .and_then(|s| s.parse::<f64>().ok())
        .filter(|s| *s > 0.0 && *s <= 1.0)
        .unwrap_or(1.0);
    ((full as f64 * scale).round() as usize).max(16)
}

fn mc(samples: usize, first_stream: u64) -> MonteCarlo {
    MonteCarlo {
        samples,
        seed: 20_240_601,
        first_stream,
    }
}

// written to the process stdout so the line survives test output capture
fn report(id: u32, pass: bool, detail: String) {
    let line = format!("{} criterion {id}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {id} failed: {detail}");
}

fn errors(rep: &ErrorReport) -> Vec<f64> {
    rep.estimates.iter().map(|e| e.error).collect()
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn second_moment(xs: &[f64]) -> (f64, f64) {
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    mean_with_se(&sq)
}

#[test]
fn criterion_01_temporal_strong_order() {
    let prob = default_instance().unwrap();
    let ms: Vec<usize> = (4..=9).map(|k| 1 << k).collect();
    let rep = coupled_strong_error(&prob, &ms, 1 << 12, 0.0, mc(samples(256), 0)).unwrap();
    let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    let fit = fit_rate(&xs, &errors(&rep)).unwrap();
    let pass = (-0.6..=-0.4).contains(&fit.slope);
    report(
        1,
        pass,
        format!(
            "slope {:.4} ± {:.4} in [-0.6, -0.4], errors {}, aborted {}",
            fit.slope,
            fit.slope_stderr,
            sci(&errors(&rep)),
            rep.aborted
        ),
    );
}

fn gbm() -> Gbm {
    Gbm {
        lambda: -1.0,
        mu: 0.5,
        y0: 1.0,
        horizon: 1.0,
    }
}

#[test]
fn criterion_02_sode_second_moment() {
    let g = gbm();
    let run = gbm_normalized_errors(g, 1 << 12, mc(samples(100_000), 0)).unwrap();
    let (m2, se) = second_moment(&run.values);
    let target = gbm_limit_second_moment(g.lambda, g.mu, g.y0, g.horizon);
    let rel = (m2 - target).abs() / target;
    report(
        2,
        rel <= 0.10,
        format!("m·E[err²] = {m2:.5e} ± {se:.1e}, target {target:.5e}, relative {rel:.4} <= 0.10"),
    );
}

#[test]
fn criterion_03_sode_limit_law() {
    let g = gbm();
    let n = samples(10_000);
    let err = gbm_normalized_errors(g, 1 << 12, mc(n, 0)).unwrap();
    let lim = gbm_limit_samples(g, 1 << 13, mc(n, n as u64)).unwrap();
    let ks = ks_two_sample(&err.values, &lim.values).unwrap();
    report(
        3,
        ks.statistic <= 0.03,
        format!(
            "KS D = {:.4} <= 0.03 (n = {n}, 5% critical {:.4})",
            ks.statistic, ks.threshold
        ),
    );
}

const M_POINT: usize = 1 << 8;
const M_REF_POINT: usize = 1 << 14;

#[test]
fn criterion_04_she_pointwise_limit_law() {
    let prob = default_instance().unwrap();
    let n = samples(4000);
    let err = normalized_error_samples(&prob, M_POINT, M_REF_POINT, prob.horizon, 0.5, mc(n, 0)).unwrap();
    let cfg = LimitConfig {
        l_aux: 64,
        m_sim: M_REF_POINT,
        sampler: AuxSampler::Covariance,
    };
    let lim = limit_point_samples(&prob, cfg, 0.5, mc(n, n as u64)).unwrap();
    let ks = ks_two_sample(&err.values, &lim.values).unwrap();
    let (a, sa) = second_moment(&err.values);
    let (b, sb) = second_moment(&lim.values);
    let rel = (a - b).abs() / b;
    let contamination = (M_POINT as f64 / M_REF_POINT as f64).sqrt();
    report(
        4,
        ks.statistic <= 0.08 && rel <= 0.15,
        format!(
            "KS D = {:.4} <= 0.08, E[err²] = {a:.4e} ± {sa:.1e} vs E[U²] = {b:.4e} ± {sb:.1e}, relative {rel:.4} <= 0.15, contamination bound {contamination:.4}, n = {n}",
            ks.statistic
        ),
    );
}

#[test]
fn criterion_05_degenerate_diffusion_null() {
    let n = samples(1000);
    let affine = default_instance().unwrap();
    let constant = default_instance_with(DriftKind::Sin, DiffusionKind::Constant { a2: 1.0 }).unwrap();
    let va = variance(
        &normalized_error_samples(&affine, M_POINT, M_REF_POINT, 1.0, 0.5, mc(n, 0))
            .unwrap()
            .values,
    );
    let vc = variance(
        &normalized_error_samples(&constant, M_POINT, M_REF_POINT, 1.0, 0.5, mc(n, 0))
            .unwrap()
            .values,
    );
    let cfg = LimitConfig {
        l_aux: 64,
        m_sim: 1 << 10,
        sampler: AuxSampler::Covariance,
    };
    let u = limit_point_samples(&constant, cfg, 0.5, mc(samples(64), 0)).unwrap();
    let u_zero = u.values.iter().all(|v| *v == 0.0);
    let ratio = vc / va;
    report(
        5,
        ratio < 0.10 && u_zero,
        format!("variance ratio constant/affine {ratio:.4} < 0.10 ({vc:.4e} / {va:.4e}), U(T,1/2) identically zero: {u_zero}"),
    );
}

#[test]
fn criterion_06_galerkin_deterministic_decay() {
    let ns: Vec<usize> = (4..=16).map(|k| 1 << k).collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for gamma in [1.0, 2.0] {
        let tails = slow_decay_tail_norms(gamma, &ns).unwrap();
        let scaled: Vec<f64> = ns.iter().zip(&tails).map(|(&n, t)| eigenvalue(n + 1).sqrt() * t).collect();
        let below = ns.iter().zip(&tails).all(|(&n, t)| *t <= slow_decay_tail_bound(gamma, n));
        let decreasing = scaled.windows(2).all(|w| w[1] < w[0]);
        pass &= below && decreasing;
        detail.push(format!(
            "γ={gamma}: below bound {below}, decreasing {decreasing}, first {:.4e} last {:.4e}",
            scaled[0],
            scaled[scaled.len() - 1]
        ));
    }
    report(6, pass, detail.join("; "));
}

#[test]
fn criterion_07_galerkin_vanishing_normalized_error() {
    let prob = default_instance().unwrap();
    assert_eq!(prob.params.sigma, 0.9);
    let ns = [4usize, 8, 16, 32];
    let rep = galerkin_strong_error(&prob, &ns, 1 << 12, mc(samples(128), 0)).unwrap();
    let scaled: Vec<f64> = ns
        .iter()
        .zip(errors(&rep))
        .map(|(&n, e)| eigenvalue(n + 1).powf((1.0 + prob.params.sigma) / 2.0) * e)
        .collect();
    let pass = scaled.windows(2).all(|w| w[1] < w[0]);
    report(7, pass, format!("λ_(N+1)^0.95·error over N = {ns:?}: {} decreasing", sci(&scaled)));
}

#[test]
fn criterion_08_fem_deterministic_rate() {
    let els = [8usize, 16, 32, 64, 128, 256];
    let xs: Vec<f64> = els.iter().map(|&e| e as f64).collect();
    let errs: Vec<f64> = els.iter().map(|&e| semigroup_error_e1(e, 0.1).unwrap()).collect();
    let fit = fit_rate(&xs, &errs).unwrap();
    report(
        8,
        (fit.slope + 2.0).abs() <= 0.2,
        format!("slope against 1/h {:.4} in -2 ± 0.2, errors {}", fit.slope, sci(&errs)),
    );
}

#[test]
fn criterion_09_semigroup_smoothing() {
    let op = OperatorSpec::new(4096).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for r in [0.5, 1.0] {
        for t in [0.01, 0.1, 1.0] {
            worst = worst.max(smoothing_sup(&op, r, t) - smoothing_constant(r, t));
        }
    }
    report(9, worst <= 1e-12, format!("max(sup − (r/e)^r t^-r) = {worst:.3e} <= 1e-12"));
}

fn round_trip_error() -> f64 {
    let mut worst: f64 = 0.0;
    for k in [3usize, 15, 63, 255] {
        let st = SineTransform::new(k);
        let x = SpectralField::new((1..=k).map(|i| ((i * 37 % 19) as f64 - 9.0) / i as f64).collect()).unwrap();
        let back = st.to_spectral(&st.to_physical(&x).unwrap()).unwrap();
        for (a, b) in back.coeffs().iter().zip(x.coeffs()) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

fn aggregation_exact() -> bool {
    let path = NoisePath::new(7, 3, 1024, 1.0).unwrap();
    let direct = couple_to_coarse(&path, 16).unwrap();
    let mut ok = true;
    for mode in [1usize, 5] {
        let fine = path.fine_increments(Role::Driving, mode, 0..1024).unwrap();
        for k in 0..16 {
            let want = pairwise_sum(&fine[k * 64..(k + 1) * 64]);
            ok &= direct.increment(Role::Driving, mode, k).unwrap().to_bits() == want.to_bits();
        }
    }
    let all = path.brownian(Role::Driving, 4);
    let two_level = all.coarsen(128).unwrap().coarsen(16).unwrap();
    let one_level = all.coarsen(16).unwrap();
    for i in 1..=4 {
        ok &= two_level
            .mode(i)
            .iter()
            .zip(one_level.mode(i))
            .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    ok
}

/// `E‖∫₀ᵗ E(t−s) dW(s)‖²` by midpoint weights on fine increments.
fn ito_isometry(n: usize) -> (f64, f64, f64) {
    let q = QSpec::exponential(0.1, 16).unwrap();
    let (t, m) = (1.0, 2048usize);
    let tau = t / m as f64;
    let values: Vec<f64> = (0..n as u64)
        .map(|stream| {
            let path = NoisePath::new(11, stream, m, t).unwrap();
            (1..=q.k_noise)
                .map(|i| {
                    let l = eigenvalue(i);
                    let inc = path.fine_increments(Role::Driving, i, 0..m).unwrap();
                    let s: f64 = inc
                        .iter()
                        .enumerate()
                        .map(|(k, d)| (-l * (t - (k as f64 + 0.5) * tau)).exp() * d)
                        .sum();
                    q.q(i) * s * s
                })
                .sum()
        })
        .collect();
    let (mean, se) = mean_with_se(&values);
    let exact: f64 = (1..=q.k_noise)
        .map(|i| {
            let l = eigenvalue(i);
            q.q(i) * (1.0 - (-2.0 * l * t).exp()) / (2.0 * l)
        })
        .sum();
    (mean, se, exact)
}

fn worker_bits(threads: usize) -> Vec<u64> {
    let prob = default_instance().unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let rep = coupled_strong_error(&prob, &[8, 16], 64, 0.0, mc(24, 0)).unwrap();
        rep.estimates
            .iter()
            .flat_map(|e| [e.error.to_bits(), e.stderr.to_bits()])
            .collect()
    })
}

#[test]
fn criterion_10_infrastructure_exactness() {
    let rt = round_trip_error();
    let agg = aggregation_exact();
    let (mean, se, exact) = ito_isometry(samples(10_000));
    let ito = (mean - exact).abs() <= 3.0 * se;
    let same = worker_bits(1) == worker_bits(4);
    report(
        10,
        rt <= 1e-12 && agg && ito && same,
        format!(
            "round trip {rt:.2e} <= 1e-12, aggregation exact {agg}, isometry {mean:.5e} vs {exact:.5e} within 3·{se:.1e} {ito}, 1 vs 4 workers identical {same}"
        ),
    );
}
