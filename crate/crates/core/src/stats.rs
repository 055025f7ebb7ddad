//! Comparison machinery: KS and binned TV distances, histograms, spectral
//! unfolding, spacing surmises, weighted regression and jackknife errors.

use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;
use statrs::function::erf::erf;

use crate::ensemble::EnsembleKind;
use crate::error::{Error, Result};
use crate::spectral::Spectrum;
use crate::theory;

pub const HISTOGRAM_SCHEMA: &str = "histogram/v1";

/// Fraction of the spectrum cut from each edge before taking spacings.
pub const EDGE_FRACTION: f64 = 0.2;

/// One named pass/fail check: `pass = statistic <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub test: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub sample_sizes: Vec<usize>,
    pub seed: Option<u64>,
}

impl ComparisonReport {
    pub fn new(test: impl Into<String>, statistic: f64, threshold: f64, sample_sizes: Vec<usize>, seed: Option<u64>) -> Self {
        Self { test: test.into(), statistic, threshold, pass: statistic <= threshold, sample_sizes, seed }
    }
}

/// `sup |F_n - F|` between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Contract("KS distance needs at least one sample".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Equal-width histogram over `[lo, hi)`; the right edge is included in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub outside: u64,
}

impl Histogram {
    pub fn new(samples: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins == 0 || hi.is_nan() || lo.is_nan() || hi <= lo {
            return Err(Error::Contract(format!("bad histogram range [{lo}, {hi}) with {bins} bins")));
        }
        let mut counts = vec![0u64; bins];
        let mut outside = 0;
        let width = (hi - lo) / bins as f64;
        for &x in samples {
            if x < lo || x > hi || x.is_nan() {
                outside += 1;
                continue;
            }
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Ok(Self { lo, hi, counts, outside })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.outside
    }

    /// Counts normalized by total sample count and bin width.
    pub fn densities(&self) -> Vec<f64> {
        let scale = 1.0 / (self.total().max(1) as f64 * self.width());
        self.counts.iter().map(|&c| c as f64 * scale).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, header: &str) -> Result<()> {
        writeln!(w, "# schema={HISTOGRAM_SCHEMA} {header}")?;
        writeln!(w, "bin_left,bin_right,count,density")?;
        let width = self.width();
        for (k, (c, rho)) in self.counts.iter().zip(self.densities()).enumerate() {
            let left = self.lo + k as f64 * width;
            writeln!(w, "{left:.12e},{:.12e},{c},{rho:.12e}", left + width)?;
        }
        Ok(())
    }
}

/// Half-L1 distance between binned empirical distributions on a common range.
pub fn tv_empirical(a: &[f64], b: &[f64], bins: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("empirical TV needs non-empty samples".into()));
    }
    let (lo, hi) = a.iter().chain(b).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let ha = Histogram::new(a, bins, lo, hi)?;
    let hb = Histogram::new(b, bins, lo, hi)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let l1: f64 = ha.counts.iter().zip(&hb.counts).map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs()).sum();
    Ok((0.5 * l1).clamp(0.0, 1.0))
}

/// Unfolds `values` by `scale · cdf(λ)` and returns the spacings of the
/// indices left after cutting [`EDGE_FRACTION`] from each end.
pub fn unfold_spacings(values: &[f64], cdf: impl Fn(f64) -> f64, scale: f64) -> Vec<f64> {
    let n = values.len();
    let lo = (EDGE_FRACTION * n as f64).floor() as usize;
    let hi = n - lo;
    let unfolded: Vec<f64> = values[lo..hi].iter().map(|&x| scale * cdf(x)).collect();
    unfolded.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Bulk spacings of a batch of spectra unfolded with the analytic limiting
/// CDF of their kind. Antisymmetric spectra are unfolded on the positive
/// half, away from the mirror-symmetric zero region.
pub fn unfold_and_spacings(spectra: &[Spectrum], kind: EnsembleKind) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for s in spectra {
        if s.kind != kind {
            return Err(Error::Contract(format!("spectrum of {} in a batch of {}", s.kind, kind)));
        }
        let values: &[f64] = match kind {
            EnsembleKind::ImaginaryAntisymmetric { .. } => s.positive_half(),
            _ => &s.values,
        };
        let scale = s.len() as f64;
        out.extend(unfold_spacings(values, |x| theory::limiting_cdf(kind, x), scale));
    }
    Ok(out)
}

/// Wigner surmise for GOE, `(πs/2) exp(-πs²/4)`.
pub fn goe_surmise(s: f64) -> f64 {
    0.5 * PI * s * (-0.25 * PI * s * s).exp()
}

pub fn goe_surmise_cdf(s: f64) -> f64 {
    1.0 - (-0.25 * PI * s * s).exp()
}

/// Wigner surmise for GUE, `(32/π²) s² exp(-4s²/π)`.
pub fn gue_surmise(s: f64) -> f64 {
    32.0 / (PI * PI) * s * s * (-4.0 * s * s / PI).exp()
}

pub fn gue_surmise_cdf(s: f64) -> f64 {
    erf(2.0 * s / PI.sqrt()) - 4.0 * s / PI * (-4.0 * s * s / PI).exp()
}

pub fn poisson_spacing_cdf(s: f64) -> f64 {
    1.0 - (-s.max(0.0)).exp()
}

/// Result of a straight-line fit `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Weighted least squares of `y` on `x`. `weights = None` means equal weights.
pub fn linear_fit(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<LinearFit> {
    if x.len() != y.len() || weights.is_some_and(|w| w.len() != x.len()) {
        return Err(Error::Contract("regression inputs differ in length".into()));
    }
    if x.len() < 2 {
        return Err(Error::Contract("regression needs at least two points".into()));
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..x.len()).map(w).sum();
    let mx = (0..x.len()).map(|i| w(i) * x[i]).sum::<f64>() / sw;
    let my = (0..x.len()).map(|i| w(i) * y[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..x.len()).map(|i| w(i) * (x[i] - mx).powi(2)).sum();
    let sxy: f64 = (0..x.len()).map(|i| w(i) * (x[i] - mx) * (y[i] - my)).sum();
    let syy: f64 = (0..x.len()).map(|i| w(i) * (y[i] - my).powi(2)).sum();
    if !sxx.is_finite() || sxx <= 1e-300 * sw {
        return Err(Error::Singular("degenerate regression design: constant predictor".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).min(1.0) } else { 1.0 };
    Ok(LinearFit { slope, intercept, r2 })
}

/// Least squares through the origin, `y ≈ slope·x`; `r2` is the uncentred
/// coefficient of determination.
pub fn fit_through_origin(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<LinearFit> {
    if x.len() != y.len() || weights.is_some_and(|w| w.len() != x.len()) || x.is_empty() {
        return Err(Error::Contract("regression inputs differ in length or are empty".into()));
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let sxx: f64 = (0..x.len()).map(|i| w(i) * x[i] * x[i]).sum();
    let sxy: f64 = (0..x.len()).map(|i| w(i) * x[i] * y[i]).sum();
    let syy: f64 = (0..x.len()).map(|i| w(i) * y[i] * y[i]).sum();
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(Error::Singular("degenerate regression design: zero predictor".into()));
    }
    let slope = sxy / sxx;
    let rss = syy - slope * sxy;
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Ok(LinearFit { slope, intercept: 0.0, r2 })
}

/// Weighted regression of empirical drifts on theory drifts, weights `1/SE²`.
pub fn drift_regression(empirical: &[f64], std_err: &[f64], theory: &[f64]) -> Result<LinearFit> {
    if empirical.len() < 10 {
        return Err(Error::Contract(format!("need at least 10 bulk eigenvalues, got {}", empirical.len())));
    }
    if std_err.len() != empirical.len() {
        return Err(Error::Contract("standard errors differ in length".into()));
    }
    let weights: Vec<f64> = std_err.iter().map(|s| if *s > 0.0 { 1.0 / (s * s) } else { 1.0 }).collect();
    linear_fit(theory, empirical, Some(&weights))
}

/// Neumaier-compensated sum; the error stays at a few ulps of the result
/// regardless of the number of terms.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

/// Block-jackknife mean and standard error of `values` split into `blocks`
/// contiguous blocks.
pub fn jackknife(values: &[f64], blocks: usize) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    let blocks = blocks.min(n);
    if blocks < 2 {
        return (mean, f64::NAN);
    }
    let total: f64 = values.iter().sum();
    let bounds: Vec<usize> = (0..=blocks).map(|b| b * n / blocks).collect();
    let leave_out: Vec<f64> = bounds
        .windows(2)
        .map(|w| {
            let block: f64 = values[w[0]..w[1]].iter().sum();
            (total - block) / (n - (w[1] - w[0])) as f64
        })
        .collect();
    let lm = leave_out.iter().sum::<f64>() / blocks as f64;
    let var = leave_out.iter().map(|v| (v - lm).powi(2)).sum::<f64>() * (blocks - 1) as f64 / blocks as f64;
    (mean, var.sqrt())
}

/// Spearman rank correlation.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut k = 0;
        while k < idx.len() {
            let mut end = k;
            while end + 1 < idx.len() && v[idx[end + 1]] == v[idx[k]] {
                end += 1;
            }
            let avg = (k + end) as f64 / 2.0;
            for &i in &idx[k..=end] {
                r[i] = avg;
            }
            k = end + 1;
        }
        r
    }
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Contract("rank correlation needs two equal-length samples".into()));
    }
    let fit = linear_fit(&ranks(a), &ranks(b), None)?;
    Ok(fit.r2.sqrt() * fit.slope.signum())
}
