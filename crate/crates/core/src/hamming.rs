//! The Hamming-distance projection of the hypercube walk.
//!
//! Distance `X` from the start performs a birth–death chain on `0..=d_N`:
//! down with probability `X/(d_N+1)`, stay with `1/(d_N+1)`, up with
//! `(d_N-X)/(d_N+1)`. Its stationary law is `Binomial(d_N, 1/2)` and its
//! transition matrix has eigenvalues `Λ_j = 1 - 2j/(d_N+1)`, so the
//! approach to equilibrium is governed by `Λ_1` and shows a cutoff at
//! `t_crit = d_N ln(d_N) / 4`.
//!
//! Total-variation distances use the one-sided sum over `{P ≥ Q}`, which
//! equals half the L1 distance for two probability vectors.

use std::io::Write;

use num_rational::Rational64;
use serde::Serialize;
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::metawalk::WalkTrajectory;
use crate::stats::compensated_sum;

pub const TV_CURVE_SCHEMA: &str = "tv-curve/v1";

/// Probabilities of `X = 0..=d_N` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HammingDistribution {
    pub d_n: usize,
    pub probs: Vec<f64>,
    pub t: u64,
}

impl HammingDistribution {
    /// Point mass at distance `x`.
    pub fn delta(d_n: usize, x: usize) -> Result<Self> {
        check_distance(d_n, x)?;
        let mut probs = vec![0.0; d_n + 1];
        probs[x] = 1.0;
        Ok(Self { d_n, probs, t: 0 })
    }

    pub fn from_probs(probs: Vec<f64>, t: u64) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Contract("a Hamming distribution needs d_N >= 1".into()));
        }
        if probs.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(Error::Contract("probabilities must be non-negative".into()));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!("probabilities sum to {mass}")));
        }
        Ok(Self { d_n: probs.len() - 1, probs, t })
    }

    pub fn mass(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.probs.iter().enumerate().map(|(x, p)| x as f64 * p))
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        compensated_sum(self.probs.iter().enumerate().map(|(x, p)| (x as f64 - m).powi(2) * p))
    }

    /// Sum of absolute differences.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        check_support(self, other)?;
        Ok(self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum())
    }
}

fn check_distance(d_n: usize, x: usize) -> Result<()> {
    if d_n == 0 {
        return Err(Error::Contract("d_N must be at least 1".into()));
    }
    if x > d_n {
        return Err(Error::Contract(format!("distance {x} exceeds d_N = {d_n}")));
    }
    Ok(())
}

fn check_support(p: &HammingDistribution, q: &HammingDistribution) -> Result<()> {
    if p.probs.len() != q.probs.len() {
        return Err(Error::Contract(format!(
            "support mismatch: d_N = {} vs {}",
            p.d_n, q.d_n
        )));
    }
    Ok(())
}

/// `(down, stay, up)` probabilities from distance `x`, exactly.
pub fn transition_probs(d_n: usize, x: usize) -> Result<(Rational64, Rational64, Rational64)> {
    check_distance(d_n, x)?;
    let den = d_n as i64 + 1;
    Ok((
        Rational64::new(x as i64, den),
        Rational64::new(1, den),
        Rational64::new((d_n - x) as i64, den),
    ))
}

/// One step of the birth–death recursion.
pub fn evolve_distribution(p: &HammingDistribution) -> HammingDistribution {
    let d = p.d_n;
    let w = 1.0 / (d + 1) as f64;
    let probs = (0..=d)
        .map(|x| {
            let from_below = if x > 0 { p.probs[x - 1] * (d - x + 1) as f64 } else { 0.0 };
            let from_above = if x < d { p.probs[x + 1] * (x + 1) as f64 } else { 0.0 };
            (from_below + p.probs[x] + from_above) * w
        })
        .collect();
    HammingDistribution { d_n: d, probs, t: p.t + 1 }
}

pub fn evolve_steps(p: &HammingDistribution, steps: u64) -> HammingDistribution {
    let mut cur = p.clone();
    for _ in 0..steps {
        cur = evolve_distribution(&cur);
    }
    cur
}

/// `C(d_N, X) / 2^{d_N}`, built in log space outward from the mode so bulk
/// probabilities carry only a few ulps of error, then symmetrized so the mean
/// is `d_N/2` to rounding.
pub fn stationary(d_n: usize) -> Result<HammingDistribution> {
    check_distance(d_n, 0)?;
    let mode = d_n / 2;
    let mut logs = vec![0.0f64; d_n + 1];
    // ln(C(d,x+1)/C(d,x)) = ln(1 + (d-2x-1)/(x+1))
    for x in mode..d_n {
        logs[x + 1] = logs[x] + ((d_n as f64 - 2.0 * x as f64 - 1.0) / (x + 1) as f64).ln_1p();
    }
    for x in (1..=mode).rev() {
        logs[x - 1] = logs[x] - ((d_n as f64 - 2.0 * (x - 1) as f64 - 1.0) / x as f64).ln_1p();
    }
    let mut probs: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
    for x in 0..=d_n / 2 {
        let s = 0.5 * (probs[x] + probs[d_n - x]);
        probs[x] = s;
        probs[d_n - x] = s;
    }
    let total = compensated_sum(probs.iter().copied());
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(HammingDistribution { d_n, probs, t: 0 })
}

/// `Λ_j = 1 - 2j/(d_N+1)` for `j = 0..=d_N`, descending.
pub fn walk_operator_spectrum(d_n: usize) -> Result<Vec<Rational64>> {
    check_distance(d_n, 0)?;
    let den = d_n as i64 + 1;
    Ok((0..=d_n as i64).map(|j| Rational64::new(den - 2 * j, den)).collect())
}

/// One-sided total variation: `Σ_{P(X) ≥ Q(X)} (P(X) - Q(X))`.
pub fn tv_distance(p: &HammingDistribution, q: &HammingDistribution) -> Result<f64> {
    check_support(p, q)?;
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .filter(|(a, b)| a >= b)
        .map(|(a, b)| a - b)
        .sum())
}

/// `t_crit = d_N ln(d_N) / 4`.
pub fn t_crit(d_n: usize) -> f64 {
    let d = d_n as f64;
    d * d.ln() / 4.0
}

/// Exact TV distance to equilibrium for `t = 0..=t_max`, starting at `X = 0`.
pub fn tv_exact_curve(d_n: usize, t_max: u64) -> Result<Vec<f64>> {
    let target = stationary(d_n)?;
    let mut cur = HammingDistribution::delta(d_n, 0)?;
    let mut out = Vec::with_capacity(t_max as usize + 1);
    out.push(tv_distance(&cur, &target)?);
    for _ in 0..t_max {
        cur = evolve_distribution(&cur);
        out.push(tv_distance(&cur, &target)?);
    }
    Ok(out)
}

/// Cutoff-window asymptotics of the TV distance at time `t`.
///
/// `standard` is `erf(e^{-2c}/√8)` with the usual `erf`, whose large-`c`
/// tail is exactly `tail`. `literal` evaluates the same argument with the
/// kernel `e^{-z²}/(2π)`, i.e. `erf(x)/(4√π)`; that normalization does not
/// reproduce the tail and is kept only for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TvAsymptotic {
    /// `(t - t_crit) / d_N`.
    pub c: f64,
    pub standard: f64,
    pub literal: f64,
    /// `exp(-2(t - t_crit)/d_N) / √(2π)`.
    pub tail: f64,
}

pub fn tv_asymptotic(t: f64, d_n: usize) -> TvAsymptotic {
    let c = (t - t_crit(d_n)) / d_n as f64;
    let x = (-2.0 * c).exp() / 8f64.sqrt();
    let e = erf(x);
    TvAsymptotic {
        c,
        standard: e,
        literal: e / (4.0 * std::f64::consts::PI.sqrt()),
        tail: (-2.0 * c).exp() / (2.0 * std::f64::consts::PI).sqrt(),
    }
}

/// Writes `t,eta,tv_exact,tv_asymptotic,tail_form` rows for `t = 0..=t_max`.
pub fn write_tv_curve_csv<W: Write>(mut w: W, header: &str, d_n: usize, t_max: u64) -> Result<()> {
    let exact = tv_exact_curve(d_n, t_max)?;
    writeln!(w, "# schema={TV_CURVE_SCHEMA} d_n={d_n} {header}")?;
    writeln!(w, "t,eta,tv_exact,tv_asymptotic,tail_form")?;
    for (t, tv) in exact.iter().enumerate() {
        let a = tv_asymptotic(t as f64, d_n);
        writeln!(
            w,
            "{t},{:.6},{tv:.12e},{:.12e},{:.12e}",
            t as f64 / d_n as f64,
            a.standard,
            a.tail
        )?;
    }
    Ok(())
}

/// Ornstein–Uhlenbeck coefficients of `ξ = (X - d_N/2)/√d_N` in `η = t/d_N`:
/// `∂_η P = ½ ∂²_ξ P + 2 ∂_ξ(ξ P)`, i.e. drift `-2ξ` and diffusion `½`
/// (the second moment of `dξ/dη` is twice the diffusion).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuCoefficients {
    pub drift_slope: f64,
    pub diffusion: f64,
}

impl OuCoefficients {
    pub const LIMIT: Self = Self { drift_slope: -2.0, diffusion: 0.5 };

    pub fn drift(&self, xi: f64) -> f64 {
        self.drift_slope * xi
    }

    /// `D / |slope|`, the variance of the stationary Gaussian.
    pub fn stationary_variance(&self) -> f64 {
        self.diffusion / -self.drift_slope
    }
}

/// A distribution on the rescaled grid `ξ_X`, density `√d_N · P(X)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuProfile {
    pub xi: Vec<f64>,
    pub density: Vec<f64>,
    pub probs: Vec<f64>,
}

impl OuProfile {
    pub fn mean(&self) -> f64 {
        compensated_sum(self.xi.iter().zip(&self.probs).map(|(x, p)| x * p))
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        compensated_sum(self.xi.iter().zip(&self.probs).map(|(x, p)| (x - m).powi(2) * p))
    }
}

pub fn ou_limit(p: &HammingDistribution) -> OuProfile {
    let d = p.d_n as f64;
    let root = d.sqrt();
    OuProfile {
        xi: (0..=p.d_n).map(|x| (x as f64 - d / 2.0) / root).collect(),
        density: p.probs.iter().map(|q| q * root).collect(),
        probs: p.probs.clone(),
    }
}

/// `(ξ, Δξ/Δη)` pairs from consecutive samples of Hamming trajectories.
pub fn ou_increments(trajectories: &[WalkTrajectory]) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut rates = Vec::new();
    for traj in trajectories.iter().filter(|t| t.observable == "hamming") {
        let d = traj.d_n as f64;
        let xi = |x: f64| (x - d / 2.0) / d.sqrt();
        for k in 1..traj.times.len() {
            let deta = (traj.times[k] - traj.times[k - 1]) as f64 / d;
            let (a, b) = (xi(traj.values[k - 1][0]), xi(traj.values[k][0]));
            xs.push(a);
            rates.push((b - a) / deta);
        }
    }
    (xs, rates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn transition_examples() {
        assert_eq!(transition_probs(3, 0).unwrap(), (r(0, 1), r(1, 4), r(3, 4)));
        assert_eq!(transition_probs(3, 3).unwrap(), (r(3, 4), r(1, 4), r(0, 1)));
        let (down, _, _) = transition_probs(1275, 637).unwrap();
        assert!((*down.numer() as f64 / *down.denom() as f64 - 0.49922).abs() < 1e-5);
        for x in 0..=9 {
            let (a, b, c) = transition_probs(9, x).unwrap();
            assert_eq!(a + b + c, r(1, 1));
        }
        assert!(transition_probs(3, 4).is_err());
    }

    #[test]
    fn evolution_examples() {
        let p0 = HammingDistribution::delta(3, 0).unwrap();
        let p1 = evolve_distribution(&p0);
        assert_eq!(p1.probs, vec![0.25, 0.75, 0.0, 0.0]);
        assert_eq!(p1.t, 1);
        let p2 = evolve_distribution(&p1);
        assert_eq!(p2.probs, vec![4.0 / 16.0, 6.0 / 16.0, 6.0 / 16.0, 0.0]);
    }

    #[test]
    fn stationary_is_binomial_and_fixed() {
        let small = stationary(3).unwrap().probs;
        for (p, q) in small.iter().zip([0.125, 0.375, 0.375, 0.125]) {
            assert!((p - q).abs() < 1e-15, "{small:?}");
        }
        let s = stationary(1275).unwrap();
        assert!((s.mean() - 637.5).abs() < 1e-9);
        assert!((s.variance() - 1275.0 / 4.0).abs() < 1e-8);
        for d in [1usize, 2, 7, 50, 210, 1275] {
            let s = stationary(d).unwrap();
            let next = evolve_distribution(&s);
            let gap = s.probs.iter().zip(&next.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap <= 1e-13, "d={d}");
        }
        let s = stationary(1024).unwrap();
        let gauss = (2.0 / (std::f64::consts::PI * 1024.0)).sqrt();
        // Stirling: the centre term is √(2/(πd))(1 - 1/(4d) + …)
        assert!((s.probs[512] - gauss).abs() <= 2.0 * gauss / 1024.0);
    }

    #[test]
    fn mass_and_positivity_are_preserved() {
        let mut p = HammingDistribution::from_probs(vec![0.1, 0.0, 0.3, 0.2, 0.0, 0.4], 0).unwrap();
        for _ in 0..500 {
            let q = evolve_distribution(&p);
            assert!((q.mass() - p.mass()).abs() <= 1e-14);
            assert!(q.probs.iter().all(|&x| x >= 0.0));
            p = q;
        }
        assert!(HammingDistribution::from_probs(vec![0.5, 0.6], 0).is_err());
        assert!(HammingDistribution::from_probs(vec![-0.5, 1.5], 0).is_err());
    }

    #[test]
    fn operator_spectrum_matches_dense_eigensolve() {
        assert_eq!(walk_operator_spectrum(3).unwrap(), vec![r(1, 1), r(1, 2), r(0, 1), r(-1, 2)]);
        assert_eq!(walk_operator_spectrum(1275).unwrap()[1], r(1274, 1276));
        for d in [1usize, 5, 12, 40] {
            let mut t = DMatrix::<f64>::zeros(d + 1, d + 1);
            let w = 1.0 / (d + 1) as f64;
            for x in 0..=d {
                t[(x, x)] = w;
                if x > 0 {
                    t[(x - 1, x)] = x as f64 * w;
                }
                if x < d {
                    t[(x + 1, x)] = (d - x) as f64 * w;
                }
            }
            // similarity transform with the binomial weights makes the chain symmetric
            let pi = stationary(d).unwrap().probs;
            let s = DMatrix::from_fn(d + 1, d + 1, |i, j| t[(i, j)] * (pi[j] / pi[i]).sqrt());
            let sym = (&s + s.transpose()) * 0.5;
            let mut eig: Vec<f64> = sym.symmetric_eigenvalues().iter().cloned().collect();
            eig.sort_by(|a, b| b.total_cmp(a));
            let exact = walk_operator_spectrum(d).unwrap();
            for (e, q) in eig.iter().zip(&exact) {
                assert!((e - *q.numer() as f64 / *q.denom() as f64).abs() <= 1e-10, "d={d}");
            }
        }
    }

    #[test]
    fn tv_examples() {
        let s = stationary(3).unwrap();
        assert_eq!(tv_distance(&s, &s).unwrap(), 0.0);
        let d0 = HammingDistribution::delta(3, 0).unwrap();
        assert_eq!(tv_distance(&d0, &s).unwrap(), 0.875);
        assert!(tv_distance(&d0, &stationary(4).unwrap()).is_err());
        let half_l1 = 0.5 * d0.l1_distance(&s).unwrap();
        assert!((half_l1 - 0.875).abs() < 1e-15);
    }

    #[test]
    fn tv_crosses_half_near_t_crit() {
        let d = 210;
        let curve = tv_exact_curve(d, 600).unwrap();
        let cross = curve.iter().position(|&v| v < 0.5).unwrap() as f64;
        assert!((cross - t_crit(d)).abs() <= 0.15 * d as f64, "crossing at {cross}");
        assert!(curve.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn asymptotic_forms() {
        let d = 210;
        let tc = t_crit(d);
        let at = tv_asymptotic(tc, d);
        assert_eq!(at.c, 0.0);
        assert!((at.standard - erf(1.0 / 8f64.sqrt())).abs() < 1e-15);
        assert!((at.literal - erf(1.0 / 8f64.sqrt()) / (4.0 * std::f64::consts::PI.sqrt())).abs() < 1e-15);
        let one = tv_asymptotic(tc + d as f64, d);
        assert!((one.tail - (-2.0f64).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!((one.tail - 0.0538).abs() < 5e-4);
        assert!(tv_asymptotic(1e9, d).standard < 1e-12);
        // the erf form reduces to the tail form for large c
        let far = tv_asymptotic(tc + 4.0 * d as f64, d);
        assert!((far.standard / far.tail - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exact_curve_tracks_the_erf_asymptotics() {
        for d in [210usize, 1275] {
            let tc = t_crit(d);
            let lo = (tc - d as f64).ceil() as u64;
            let hi = (tc + 2.0 * d as f64).floor() as u64;
            let curve = tv_exact_curve(d, hi).unwrap();
            for t in lo..=hi {
                let gap = (curve[t as usize] - tv_asymptotic(t as f64, d).standard).abs();
                assert!(gap <= 0.05, "d={d} t={t} gap={gap}");
            }
        }
    }

    #[test]
    fn l1_decay_is_controlled_by_lambda_one() {
        let d = 50;
        let lambda1 = 1.0 - 2.0 / (d + 1) as f64;
        let target = stationary(d).unwrap();
        let mut cur = HammingDistribution::delta(d, 0).unwrap();
        let mut ratios = Vec::new();
        loop {
            let l1 = cur.l1_distance(&target).unwrap();
            if l1 < 1e-9 {
                break;
            }
            ratios.push(l1 / lambda1.powi(cur.t as i32));
            cur = evolve_distribution(&cur);
        }
        // one constant bounds the whole curve and the late curve runs parallel to Λ_1^t
        let a = ratios.iter().cloned().fold(0.0, f64::max);
        let tail = &ratios[ratios.len() - 100..];
        let (lo, hi) = tail.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
        assert!(a.is_finite() && hi <= a);
        assert!(hi / lo < 1.01, "late ratio spread {lo}..{hi}");
    }

    #[test]
    fn stationary_moments_exact_for_large_d() {
        for d in [1, 2, 7, 4096, 20_100, 80_000] {
            let p = stationary(d).unwrap();
            let ou = ou_limit(&p);
            assert!((p.mass() - 1.0).abs() < 1e-14, "d={d}");
            assert!(ou.mean().abs() < 1e-13, "d={d}");
            assert!((ou.variance() - 0.25).abs() < 1e-13, "d={d}: {}", ou.variance() - 0.25);
        }
    }

    #[test]
    fn ou_profile() {
        let p = ou_limit(&stationary(4096).unwrap());
        assert!(p.mean().abs() < 1e-9);
        assert!((p.variance() - 0.25).abs() < 1e-3);
        let dxi = p.xi[1] - p.xi[0];
        let mass: f64 = p.density.iter().map(|f| f * dxi).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        let g = |x: f64| (2.0 / std::f64::consts::PI).sqrt() * (-2.0 * x * x).exp();
        let centre = p.density[2048];
        assert!((centre - g(0.0)).abs() < 1e-3);
        assert_eq!(OuCoefficients::LIMIT.drift(0.5), -1.0);
        assert_eq!(OuCoefficients::LIMIT.stationary_variance(), 0.25);
    }
}
