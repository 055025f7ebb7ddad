//! The five subcommands. Each writes its artifacts through a [`Sink`] and
//! returns the pass/fail checks that decide the exit code.

use std::io::Write;

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use bernoulli_walk::ensemble::{EnsembleKind, ScaledMatrix, SignVector};
use bernoulli_walk::hamming::{self, HammingDistribution, OuCoefficients};
use bernoulli_walk::metawalk::{self, Observer, WalkTrajectory};
use bernoulli_walk::moments::{self, MomentConfig, MOMENTS_SCHEMA};
use bernoulli_walk::oracle::{self, FullStateDistribution, OracleCache, FLOAT_LIMIT, RATIONAL_LIMIT};
use bernoulli_walk::spectral::{eigenvalues, Spectrum};
use bernoulli_walk::stats::{self, ComparisonReport, Histogram};
use bernoulli_walk::theory;
use bernoulli_walk::error::Error;

use crate::config::RunConfig;
use crate::output::Sink;
use crate::Failure;

pub const HAMMING_SCHEMA: &str = "hamming-ou/v1";
pub const SPECTRA_SCHEMA: &str = "spectra-summary/v1";
pub const COMPARISON_SCHEMA: &str = "comparison/v1";
pub const ORACLE_SCHEMA: &str = "oracle/v1";
pub const STATIONARY_SCHEMA: &str = "stationary/v1";
pub const OU_CURVE_SCHEMA: &str = "ou-curve/v1";

const HISTOGRAM_BINS: usize = 80;
const DENSITY_POINTS: usize = 401;
const IDENTITY_TOL: f64 = 1e-12;
const ORACLE_TOL: f64 = 1e-13;
const SAMPLER_TV: f64 = 0.02;
/// Upper bound on recorded spectra per walker.
const MAX_TRAJECTORY_SAMPLES: u64 = 3_000;

fn steps_for(config: &RunConfig) -> u64 {
    (config.eta_max * config.kind.dimension() as f64).ceil() as u64
}

fn checked_spectrum(s: &SignVector) -> Vec<f64> {
    match eigenvalues(&ScaledMatrix::realize(s)) {
        Ok(sp) => sp.values,
        Err(_) => vec![f64::NAN; s.kind().spectrum_len()],
    }
}

fn stationary_spectra(kind: EnsembleKind, draws: usize, seed: u64) -> Result<Vec<Spectrum>, Failure> {
    metawalk::stationary_samples(kind, draws, seed)
        .par_iter()
        .map(|s| eigenvalues(&ScaledMatrix::realize(s)).map_err(<Failure as From<Error>>::from))
        .collect()
}

fn spacing_cdf(kind: EnsembleKind) -> (&'static str, fn(f64) -> f64) {
    match kind {
        EnsembleKind::ImaginaryAntisymmetric { .. } => ("gue", stats::gue_surmise_cdf),
        _ => ("goe", stats::goe_surmise_cdf),
    }
}

fn pooled_ks_limit(kind: EnsembleKind) -> f64 {
    match kind {
        EnsembleKind::Rectangular { .. } => 0.03,
        _ => 0.02,
    }
}

/// Histogram over a range that covers the support and every sample, so its
/// densities integrate to one.
fn pooled_histogram(kind: EnsembleKind, pooled: &[f64]) -> Result<Histogram, Failure> {
    let (lo, hi) = theory::limiting_support(kind);
    let lo = pooled.iter().copied().fold(lo, f64::min);
    let hi = pooled.iter().copied().fold(hi, f64::max);
    Ok(Histogram::new(pooled, HISTOGRAM_BINS, lo, hi)?)
}

#[derive(Serialize)]
struct StationaryHamming {
    mean_x: f64,
    variance_x: f64,
    mean_xi: f64,
    variance_xi: f64,
}

fn stationary_hamming(d: usize) -> Result<StationaryHamming, Failure> {
    let p = hamming::stationary(d)?;
    let ou = hamming::ou_limit(&p);
    Ok(StationaryHamming { mean_x: p.mean(), variance_x: p.variance(), mean_xi: ou.mean(), variance_xi: ou.variance() })
}

#[derive(Serialize)]
struct SimulatedOu {
    walkers: u64,
    /// Time average of `X/(d_N+1)` over the second half of the run.
    window: (f64, f64),
    time_average: f64,
    /// Least-squares slope of `Δξ/Δη` on `ξ` across all sampled increments.
    fitted_drift_slope: f64,
    /// The slope an exact OU process gives at the sampling stride, `(e^{-2Δη} - 1)/Δη`.
    expected_slope_at_stride: f64,
}

#[derive(Serialize)]
struct HammingReport {
    d_n: usize,
    t_crit: f64,
    eta_crit: f64,
    steps: u64,
    stride: u64,
    stationary: StationaryHamming,
    ou: OuCoefficients,
    ou_stationary_variance: f64,
    simulated: Option<SimulatedOu>,
    checks: Vec<ComparisonReport>,
}

fn simulated_ou(trajs: &[WalkTrajectory], walkers: u64, d: usize, eta_max: f64, stride: u64) -> Result<SimulatedOu, Failure> {
    let window = (eta_max / 2.0, eta_max);
    let (mut sum, mut count) = (0.0, 0usize);
    for tr in trajs {
        for (eta, v) in tr.etas().zip(&tr.values) {
            if eta >= window.0 && eta <= window.1 {
                sum += v[0] / (d + 1) as f64;
                count += 1;
            }
        }
    }
    let (xs, rates) = hamming::ou_increments(trajs);
    let fit = stats::linear_fit(&xs, &rates, None)?;
    let deta = stride as f64 / d as f64;
    Ok(SimulatedOu {
        walkers,
        window,
        time_average: sum / count.max(1) as f64,
        fitted_drift_slope: fit.slope,
        expected_slope_at_stride: ((-2.0 * deta).exp() - 1.0) / deta,
    })
}

/// Exact birth–death moments of `ξ` against the OU mean and variance from `X = 0`.
fn write_ou_curve(w: &mut impl std::io::Write, header: &str, d: usize, steps: u64, stride: u64) -> bernoulli_walk::error::Result<()> {
    writeln!(w, "# schema={OU_CURVE_SCHEMA} d_n={d} {header}")?;
    writeln!(w, "t,eta,mean_xi,ou_mean_xi,var_xi,ou_var_xi")?;
    let root = (d as f64).sqrt();
    let mut p = HammingDistribution::delta(d, 0)?;
    let mut t = 0;
    loop {
        let eta = t as f64 / d as f64;
        let prof = hamming::ou_limit(&p);
        let ou_mean = -root / 2.0 * (-2.0 * eta).exp();
        let ou_var = 0.25 * (1.0 - (-4.0 * eta).exp());
        writeln!(w, "{t},{eta:.6},{:.12e},{ou_mean:.12e},{:.12e},{ou_var:.12e}", prof.mean(), prof.variance())?;
        if t >= steps {
            break;
        }
        let chunk = stride.min(steps - t);
        p = hamming::evolve_steps(&p, chunk);
        t += chunk;
    }
    Ok(())
}

pub fn hamming(config: &RunConfig) -> Result<Vec<ComparisonReport>, Failure> {
    let kind = config.kind;
    let d = kind.dimension();
    let steps = steps_for(config);
    let stride = metawalk::default_stride(d);
    let mut sink = Sink::new(config)?;

    let simulated = if config.walkers > 0 {
        let start = metawalk::all_positive(kind);
        let observers = [Observer::hamming_from(start.clone())];
        let trajs = metawalk::run_walkers(&start, config.walkers, config.seed_or_zero(), steps, stride, &observers);
        sink.csv("hamming_trajectories.csv", |w, h| metawalk::write_trajectories_csv(w, h, &trajs))?;
        Some(simulated_ou(&trajs, config.walkers, d, config.eta_max, stride)?)
    } else {
        None
    };
    sink.csv("tv_curve.csv", |w, h| hamming::write_tv_curve_csv(w, h, d, steps))?;
    sink.csv("ou_curve.csv", |w, h| write_ou_curve(w, h, d, steps, stride))?;

    let stationary = stationary_hamming(d)?;
    let checks = vec![
        ComparisonReport::new("stationary |mean ξ|", stationary.mean_xi.abs(), IDENTITY_TOL, vec![d + 1], None),
        ComparisonReport::new("stationary |var ξ - 1/4|", (stationary.variance_xi - 0.25).abs(), IDENTITY_TOL, vec![d + 1], None),
    ];
    let ou = theory::ou_coefficients();
    let report = HammingReport {
        d_n: d,
        t_crit: hamming::t_crit(d),
        eta_crit: (d as f64).ln() / 4.0,
        steps,
        stride,
        stationary,
        ou,
        ou_stationary_variance: ou.stationary_variance(),
        simulated,
        checks: checks.clone(),
    };
    sink.json("hamming_ou.json", HAMMING_SCHEMA, &report)?;
    log::info!("wrote {} files", sink.written().len());
    Ok(checks)
}

#[derive(Serialize)]
struct SpectraReport {
    walkers: u64,
    steps: u64,
    stride: u64,
    draws: usize,
    pooled_eigenvalues: usize,
    pooled_ks: Option<f64>,
    histogram_integral: Option<f64>,
    histogram_outside: Option<u64>,
}

pub fn spectra(config: &RunConfig) -> Result<Vec<ComparisonReport>, Failure> {
    let kind = config.kind;
    let steps = steps_for(config);
    let stride = steps.div_ceil(MAX_TRAJECTORY_SAMPLES).max(1);
    let mut sink = Sink::new(config)?;

    if config.walkers > 0 {
        let start = metawalk::all_positive(kind);
        let observers = [Observer::new("spectrum", checked_spectrum)];
        let trajs = metawalk::run_walkers(&start, config.walkers, config.seed_or_zero(), steps, stride, &observers);
        if trajs.iter().flat_map(|t| t.values.iter().flatten()).any(|v| v.is_nan()) {
            return Err(Failure::Numerical("eigensolver failed along a trajectory".into()));
        }
        sink.csv("spectra_trajectories.csv", |w, h| metawalk::write_trajectories_csv(w, h, &trajs))?;
    }

    let mut report = SpectraReport {
        walkers: config.walkers,
        steps,
        stride,
        draws: config.draws,
        pooled_eigenvalues: 0,
        pooled_ks: None,
        histogram_integral: None,
        histogram_outside: None,
    };
    if config.draws > 0 {
        let pooled: Vec<f64> = stationary_spectra(kind, config.draws, config.seed_or_zero())?.into_iter().flat_map(|s| s.values).collect();
        let hist = pooled_histogram(kind, &pooled)?;
        sink.csv("histogram.csv", |w, h| hist.write_csv(w, h))?;
        sink.csv("density.csv", |w, h| theory::write_density_csv(w, h, kind, DENSITY_POINTS))?;
        report.pooled_eigenvalues = pooled.len();
        report.pooled_ks = Some(stats::ks_distance(&pooled, |x| theory::limiting_cdf(kind, x))?);
        report.histogram_integral = Some(hist.densities().iter().sum::<f64>() * hist.width());
        report.histogram_outside = Some(hist.outside);
    }
    sink.json("spectra_summary.json", SPECTRA_SCHEMA, &report)?;
    Ok(Vec::new())
}

#[derive(Serialize)]
struct MomentChecks<'a> {
    theory_diffusion_coefficient: f64,
    checks: &'a [ComparisonReport],
}

/// `N·M_νν` per unit of the theory prefactor: 8 and 4 for the square kinds;
/// 16 per unit `λ` for the rectangular kind.
fn diffusion_coefficient(kind: EnsembleKind) -> f64 {
    match kind {
        EnsembleKind::RealSymmetric { .. } => 8.0,
        EnsembleKind::ImaginaryAntisymmetric { .. } => 4.0,
        EnsembleKind::Rectangular { .. } => 16.0,
    }
}

pub fn moments(config: &RunConfig) -> Result<Vec<ComparisonReport>, Failure> {
    let kind = config.kind;
    let seed = config.seed_or_zero();
    let mc = MomentConfig { c_exponent: config.c, dt: config.dt, higher: true, ..MomentConfig::new(kind, config.samples, seed) };
    mc.validate()?;
    let est = moments::estimate(&mc, &metawalk::all_positive(kind))?;
    let report = moments::build_report(&mc, &est)?;
    let cmp = &report.comparison;
    let coef = diffusion_coefficient(kind);
    let sizes = vec![est.samples];

    let diffusion = match kind {
        EnsembleKind::Rectangular { .. } => {
            let slope = cmp.diffusion_line.map_or(f64::NAN, |f| f.slope);
            ComparisonReport::new("|k/16 - 1| for N·M_νν ≈ k·λ", (slope / coef - 1.0).abs(), 0.1, sizes.clone(), Some(seed))
        }
        _ => ComparisonReport::new(
            format!("|bulk mean N·M_νν / {coef} - 1|"),
            (cmp.scaled_diffusion_mean / coef - 1.0).abs(),
            0.1,
            sizes.clone(),
            Some(seed),
        ),
    };
    let checks = vec![
        diffusion,
        ComparisonReport::new("|drift slope - 1|", (cmp.drift_fit.slope - 1.0).abs(), 0.1, sizes.clone(), Some(seed)),
        ComparisonReport::new("1 - drift R²", 1.0 - cmp.drift_fit.r2, 0.05, sizes, Some(seed)),
    ];

    let mut sink = Sink::new(config)?;
    sink.json("moments.json", MOMENTS_SCHEMA, &report)?;
    sink.json("comparison.json", COMPARISON_SCHEMA, &MomentChecks { theory_diffusion_coefficient: coef, checks: &checks })?;
    sink.csv("moments_per_nu.csv", |w, h| {
        writeln!(w, "# schema={MOMENTS_SCHEMA} dt={} samples={} {h}", est.dt, est.samples)?;
        writeln!(w, "nu,lambda,drift,drift_se,diff,diff_se,theory_drift,theory_diff,bulk")?;
        for (nu, p) in report.per_nu.iter().enumerate() {
            let bulk = u8::from(cmp.bulk.contains(&nu));
            writeln!(
                w,
                "{nu},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{bulk}",
                p.lambda, p.drift, p.drift_se, p.diff, p.diff_se, p.theory_drift, p.theory_diff
            )?;
        }
        Ok(())
    })?;
    Ok(checks)
}

#[derive(Serialize)]
struct OracleReport {
    mode: &'static str,
    d_n: usize,
    atoms: usize,
    sampler: oracle::SamplerComparison,
    checks: Vec<ComparisonReport>,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Total variation expected from multinomial noise alone at `n` samples.
fn null_tv(weights: &[f64], n: usize) -> f64 {
    let scale = (2.0 / (std::f64::consts::PI * n as f64)).sqrt();
    0.5 * weights.iter().map(|w| (w * (1.0 - w)).sqrt() * scale).sum::<f64>()
}

/// `E[ΔB]` over one exact step from `state`, with `B = Σ b_ij`.
fn magnetization_drift(d: usize, state: u64) -> Result<(f64, f64), Failure> {
    let b = |v: u64| 2.0 * v.count_ones() as f64 - d as f64;
    let next = oracle::apply_walk_operator(&FullStateDistribution::delta(d, state)?)?;
    let mean: f64 = next.probs.iter().enumerate().map(|(v, p)| p * b(v as u64)).sum();
    Ok((mean - b(state), -2.0 * b(state) / (d + 1) as f64))
}

pub fn oracle_suite(config: &RunConfig) -> Result<Vec<ComparisonReport>, Failure> {
    let kind = config.kind;
    let d = kind.dimension();
    let limit = if config.exact { RATIONAL_LIMIT } else { FLOAT_LIMIT };
    if d > limit {
        return Err(Error::Guard { d, limit }.into());
    }
    let seed = config.seed_or_zero();
    let cache = OracleCache::new(config.out.join("cache"));
    let mut checks = Vec::new();

    let mut kernel_err: f64 = 0.0;
    let mut phi_err: f64 = 0.0;
    let mut mass_err: f64 = 0.0;
    for dt in 0..=d {
        let k = cache.kernel(kind, dt)?;
        kernel_err = kernel_err.max((k[dt] - metawalk::prob_max_distance(d, dt)?).abs());
        mass_err = mass_err.max((k.iter().sum::<f64>() - 1.0).abs());
        for l in 0..=d / 2 {
            let (lhs, rhs) = oracle::phi_assembly(&k, l, dt);
            phi_err = phi_err.max((lhs - rhs).abs());
        }
    }
    checks.push(ComparisonReport::new("kernel P(X = Δt) vs closed form", kernel_err, ORACLE_TOL, vec![d + 1], None));
    checks.push(ComparisonReport::new("Φ^(l) assembly", phi_err, ORACLE_TOL, vec![d + 1], None));
    checks.push(ComparisonReport::new("kernel mass", mass_err, ORACLE_TOL, vec![d + 1], None));

    let mut full = FullStateDistribution::delta(d, 0)?;
    let mut lumped = HammingDistribution::delta(d, 0)?;
    let mut marginal_err: f64 = 0.0;
    for _ in 0..=50 {
        marginal_err = marginal_err.max(max_abs_diff(&full.hamming_marginal(0), &lumped.probs));
        full = oracle::apply_walk_operator(&full)?;
        lumped = hamming::evolve_steps(&lumped, 1);
    }
    checks.push(ComparisonReport::new("full-state marginal vs birth–death, t ≤ 50", marginal_err, ORACLE_TOL, vec![51], None));

    let mut drift_err: f64 = 0.0;
    for state in [0, (1u64 << d) - 1, 0x5555_5555 & ((1u64 << d) - 1), 1] {
        let (got, want) = magnetization_drift(d, state)?;
        drift_err = drift_err.max((got - want).abs());
    }
    checks.push(ComparisonReport::new("E[ΔB] = -2B/(d_N+1)", drift_err, ORACLE_TOL, vec![4], None));

    if config.exact {
        let start = metawalk::all_positive(kind);
        let mut mismatches = 0usize;
        let mut float_err: f64 = 0.0;
        for dt in 0..=d {
            let exact = oracle::exact_transition_kernel_rational(&start, dt)?;
            let one = exact.iter().fold(BigRational::from_integer(BigInt::from(0)), |acc, p| acc + p);
            if exact[dt] != metawalk::prob_max_distance_exact(d, dt)? || one != BigRational::from_integer(BigInt::from(1)) {
                mismatches += 1;
            }
            let float = cache.kernel(kind, dt)?;
            let exact_f: Vec<f64> = exact.iter().map(|p| num_traits::ToPrimitive::to_f64(p).unwrap_or(f64::NAN)).collect();
            float_err = float_err.max(max_abs_diff(&float, &exact_f));
        }
        checks.push(ComparisonReport::new("rational kernel mismatches", mismatches as f64, 0.0, vec![d + 1], None));
        checks.push(ComparisonReport::new("float vs rational kernel", float_err, ORACLE_TOL, vec![d + 1], None));
    }

    let atoms = cache.measure(kind)?;
    let tc = hamming::t_crit(d);
    let (burn, thin) = ((10.0 * tc).ceil() as u64, (2.0 * tc).ceil() as u64);
    let sampler = oracle::compare_sampler(kind, &atoms, config.samples, burn, thin, seed)?;
    let weights: Vec<f64> = atoms.iter().map(|a| a.weight).collect();
    let tv_limit = SAMPLER_TV.max(2.0 * null_tv(&weights, config.samples));
    checks.push(ComparisonReport::new("sampler vs enumerated spectral measure (TV)", sampler.tv, tv_limit, vec![config.samples], Some(seed)));

    let mut sink = Sink::new(config)?;
    let report = OracleReport { mode: if config.exact { "exact" } else { "float" }, d_n: d, atoms: atoms.len(), sampler, checks: checks.clone() };
    sink.json("oracle.json", ORACLE_SCHEMA, &report)?;
    Ok(checks)
}

#[derive(Serialize)]
struct StationaryReport {
    hamming: StationaryHamming,
    draws: usize,
    pooled_eigenvalues: usize,
    spacings: usize,
    mean_spacing: f64,
    surmise: &'static str,
    spacing_ks_surmise: f64,
    spacing_ks_poisson: f64,
    checks: Vec<ComparisonReport>,
}

pub fn stationary(config: &RunConfig) -> Result<Vec<ComparisonReport>, Failure> {
    let kind = config.kind;
    let seed = config.seed_or_zero();
    if config.draws == 0 {
        return Err(Failure::Usage("stationary needs --draws >= 1".into()));
    }
    let spectra = stationary_spectra(kind, config.draws, seed)?;
    let spacings = stats::unfold_and_spacings(&spectra, kind)?;
    let pooled: Vec<f64> = spectra.into_iter().flat_map(|s| s.values).collect();
    let pooled_ks = stats::ks_distance(&pooled, |x| theory::limiting_cdf(kind, x))?;
    let (surmise, cdf) = spacing_cdf(kind);
    let ks_surmise = stats::ks_distance(&spacings, cdf)?;
    let ks_poisson = stats::ks_distance(&spacings, stats::poisson_spacing_cdf)?;

    let hamming = stationary_hamming(kind.dimension())?;
    let sizes = vec![config.draws];
    let checks = vec![
        ComparisonReport::new("stationary |mean ξ|", hamming.mean_xi.abs(), IDENTITY_TOL, vec![kind.dimension() + 1], None),
        ComparisonReport::new("stationary |var ξ - 1/4|", (hamming.variance_xi - 0.25).abs(), IDENTITY_TOL, vec![kind.dimension() + 1], None),
        ComparisonReport::new("pooled eigenvalues vs limiting CDF (KS)", pooled_ks, pooled_ks_limit(kind), sizes.clone(), Some(seed)),
        ComparisonReport::new(format!("spacing KS ratio {surmise} / poisson"), ks_surmise / ks_poisson, 1.0, sizes, Some(seed)),
    ];

    let mut sink = Sink::new(config)?;
    let hist = pooled_histogram(kind, &pooled)?;
    sink.csv("histogram.csv", |w, h| hist.write_csv(w, h))?;
    sink.csv("density.csv", |w, h| theory::write_density_csv(w, h, kind, DENSITY_POINTS))?;
    let spacing_hist = Histogram::new(&spacings, HISTOGRAM_BINS, 0.0, spacings.iter().copied().fold(4.0, f64::max))?;
    sink.csv("spacings.csv", |w, h| spacing_hist.write_csv(w, &format!("observable=unfolded-spacing {h}")))?;
    let report = StationaryReport {
        hamming,
        draws: config.draws,
        pooled_eigenvalues: pooled.len(),
        spacings: spacings.len(),
        mean_spacing: spacings.iter().sum::<f64>() / spacings.len().max(1) as f64,
        surmise,
        spacing_ks_surmise: ks_surmise,
        spacing_ks_poisson: ks_poisson,
        checks: checks.clone(),
    };
    sink.json("stationary.json", STATIONARY_SCHEMA, &report)?;
    Ok(checks)
}
