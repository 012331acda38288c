//! Monte Carlo reductions: batch-means errors, moments, two-sample
//! Kolmogorov–Smirnov, and log–log rate fits.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::stochastics::pairwise_sum;

pub const BATCHES: usize = 16;

/// Mean and its batch-means standard error (16 contiguous batches; fewer
/// when there are fewer samples).
pub fn mean_with_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    let b = BATCHES.min(n);
    if b < 2 {
        return (mean, f64::NAN);
    }
    // batch boundaries i·n/b keep every sample in exactly one batch
    let means: Vec<f64> = (0..b)
        .map(|i| {
            let chunk = &xs[i * n / b..(i + 1) * n / b];
            pairwise_sum(chunk) / chunk.len() as f64
        })
        .collect();
    let dev: Vec<f64> = means.iter().map(|m| (m - mean) * (m - mean)).collect();
    let var = pairwise_sum(&dev) / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    pairwise_sum(&dev) / (n - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    values: Vec<f64>,
    pub label: String,
    /// Seed and stream range the values came from, for regeneration.
    pub provenance: String,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, label: impl Into<String>, provenance: impl Into<String>) -> Result<Self> {
        if values.len() < 2 {
            return invalid(format!("sample set needs at least 2 values, got {}", values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("sample {i} is not finite"));
        }
        Ok(Self {
            values,
            label: label.into(),
            provenance: provenance.into(),
        })
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

    /// One value per line, full round-trip precision.
    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| crate::Error::InvalidInput(format!("{}: {e}", path.display()));
        let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
        for v in &self.values {
            writeln!(f, "{v:?}").map_err(io)?;
        }
        f.flush().map_err(io)
    }

    pub fn read(path: &Path, label: impl Into<String>) -> Result<Self> {
        let io = |e: std::io::Error| crate::Error::InvalidInput(format!("{}: {e}", path.display()));
        let f = BufReader::new(fs::File::open(path).map_err(io)?);
        let mut values = Vec::new();
        for (i, line) in f.lines().enumerate() {
            let line = line.map_err(io)?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) => return invalid(format!("{}:{}: not a number: {line}", path.display(), i + 1)),
            }
        }
        Self::new(values, label, format!("file {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    /// `c(α)·√((n+m)/(nm))`
    pub threshold: f64,
    pub alpha: f64,
}

/// `c(α) = √(−ln(α/2)/2)`.
pub fn ks_critical_value(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Two-sample KS statistic `sup |F_a − F_b|`, with the asymptotic
/// rejection threshold at level 0.05.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    ks_two_sample_at(a, b, 0.05)
}

pub fn ks_two_sample_at(a: &[f64], b: &[f64], alpha: f64) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return invalid("KS test needs two nonempty samples");
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return invalid("KS test input contains NaN");
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let (n, m) = (na as f64, nb as f64);
    Ok(KsResult {
        statistic: d,
        threshold: ks_critical_value(alpha) * ((n + m) / (n * m)).sqrt(),
        alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub order: u32,
    pub value: f64,
    pub stderr: f64,
}

/// Raw moments `E[x^k]` with batch-means standard errors.
pub fn moment_summary(xs: &[f64], orders: &[u32]) -> Result<Vec<MomentEstimate>> {
    if xs.len() < 2 {
        return invalid("moments need at least 2 samples");
    }
    Ok(orders
        .iter()
        .map(|&k| {
            let p: Vec<f64> = xs.iter().map(|x| x.powi(k as i32)).collect();
            let (value, stderr) = mean_with_se(&p);
            MomentEstimate { order: k, value, stderr }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the log₂ residuals.
    pub residual: f64,
    pub slope_stderr: f64,
    /// Standard error of each `log₂ y`, when supplied.
    pub point_stderr: Vec<f64>,
}

/// Least squares `log₂ y = slope·log₂ x + intercept`.
pub fn fit_rate(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    fit_rate_with_errors(xs, ys, None)
}

/// As [`fit_rate`]; `y_stderr` are converted to log₂ scale for the report.
pub fn fit_rate_with_errors(xs: &[f64], ys: &[f64], y_stderr: Option<&[f64]>) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return invalid("xs and ys differ in length");
    }
    if xs.len() < 2 {
        return invalid("rate fit needs at least 2 points");
    }
    if xs.windows(2).any(|w| !(w[0] < w[1])) {
        return invalid("xs must be strictly increasing");
    }
    if let Some(x) = xs.iter().find(|x| !(**x > 0.0)) {
        return invalid(format!("x = {x} is not positive"));
    }
    if let Some(y) = ys.iter().find(|y| !(**y > 0.0) || !y.is_finite()) {
        return invalid(format!("error value {y} is not positive"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.log2()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.log2()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_stderr = if lx.len() > 2 {
        (ss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let point_stderr = match y_stderr {
        Some(se) => se
            .iter()
            .zip(ys)
            .map(|(s, y)| s / (y * std::f64::consts::LN_2))
            .collect(),
        None => Vec::new(),
    };
    Ok(RateFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
        slope_stderr,
        point_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ks_examples() {
        let a = [0.3, 1.0, -2.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[5.0, 6.0]).unwrap().statistic, 1.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.5, 2.5]).unwrap().statistic, 0.5);
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn ks_threshold_formula() {
        let r = ks_two_sample(&[0.0; 100], &[0.0; 400]).unwrap();
        assert_relative_eq!(r.threshold, 1.358_101_515_740_62 * (500.0f64 / 40000.0).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn constant_samples_have_zero_error() {
        let m = moment_summary(&[2.0; 64], &[1, 2, 4]).unwrap();
        assert_eq!(m[0].value, 2.0);
        assert_eq!(m[1].value, 4.0);
        assert_eq!(m[2].value, 16.0);
        assert!(m.iter().all(|e| e.stderr == 0.0));
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let m = moment_summary(&xs, &[2, 4]).unwrap();
        assert!((m[0].value - 1.0).abs() < 3.0 * m[0].stderr, "{:?}", m[0]);
        assert!((m[1].value - 3.0).abs() < 3.0 * m[1].stderr, "{:?}", m[1]);
    }

    #[test]
    fn mirrored_samples_have_zero_odd_moments() {
        let xs = [0.1, 2.5, -0.7, 3.3, 1e-3, 7.0];
        let mut all = xs.to_vec();
        all.extend(xs.iter().map(|x| -x));
        let m = moment_summary(&all, &[1, 3]).unwrap();
        // the two halves of the pairwise tree cancel exactly
        assert_eq!((m[0].value, m[1].value), (0.0, 0.0));
    }

    #[test]
    fn rate_examples() {
        let xs = [16.0, 32.0, 64.0, 128.0];
        let f = fit_rate(&xs, &xs.map(|x: f64| x.powf(-0.5))).unwrap();
        assert_relative_eq!(f.slope, -0.5, epsilon = 1e-14);
        assert!(f.residual < 1e-14);
        assert_eq!(fit_rate(&xs, &[2.0; 4]).unwrap().slope, 0.0);
        let f = fit_rate(&xs, &xs.map(|x: f64| 3.0 * x.powi(-2))).unwrap();
        assert_relative_eq!(f.slope, -2.0, epsilon = 1e-13);
        assert_relative_eq!(f.intercept, 3f64.log2(), epsilon = 1e-12);
        assert!(fit_rate(&xs, &[1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(fit_rate(&[2.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn sample_file_round_trip() {
        let dir = std::env::temp_dir().join(format!("expeuler-stats-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("s.txt");
        let s = SampleSet::new(vec![0.1, -1e-300, 3.0 / 7.0], "x", "test").unwrap();
        s.write(&p).unwrap();
        let r = SampleSet::read(&p, "x").unwrap();
        assert_eq!(r.values(), s.values());
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn sample_set_invariants() {
        assert!(SampleSet::new(vec![1.0], "", "").is_err());
        assert!(SampleSet::new(vec![1.0, f64::NAN], "", "").is_err());
    }

    proptest! {
        #[test]
        fn ks_symmetric_and_transform_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 1..60),
            b in prop::collection::vec(-10.0f64..10.0, 1..60),
        ) {
            let d = ks_two_sample(&a, &b).unwrap().statistic;
            prop_assert_eq!(d, ks_two_sample(&b, &a).unwrap().statistic);
            let t = |v: &[f64]| v.iter().map(|x| x.exp() * 3.0 + 1.0).collect::<Vec<_>>();
            prop_assert!((d - ks_two_sample(&t(&a), &t(&b)).unwrap().statistic).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn rate_slope_scale_invariant(
            ys in prop::collection::vec(1e-6f64..1e3, 3..8),
            c in 1e-3f64..1e3,
        ) {
            let xs: Vec<f64> = (0..ys.len()).map(|i| 2f64.powi(i as i32 + 3)).collect();
            let a = fit_rate(&xs, &ys).unwrap();
            let scaled: Vec<f64> = ys.iter().map(|y| c * y).collect();
            let b = fit_rate(&xs, &scaled).unwrap();
            prop_assert!((a.slope - b.slope).abs() < 1e-10);
            prop_assert!((b.intercept - a.intercept - c.log2()).abs() < 1e-10);
        }

        #[test]
        fn batch_reduction_is_order_deterministic(xs in prop::collection::vec(-1e3f64..1e3, 2..300)) {
            let (m1, s1) = mean_with_se(&xs);
            let (m2, s2) = std::thread::spawn({
                let xs = xs.clone();
                move || mean_with_se(&xs)
            })
            .join()
            .unwrap();
            prop_assert_eq!(m1.to_bits(), m2.to_bits());
            prop_assert_eq!(s1.to_bits(), s2.to_bits());
            let naive = xs.iter().sum::<f64>() / xs.len() as f64;
            prop_assert!((m1 - naive).abs() <= 1e-12 * xs.iter().map(|x| x.abs()).sum::<f64>().max(1.0));
        }
    }
}
