//! Monte Carlo estimates of the eigenvalue moments
//! `M_{ν₁…ν_k} = E[Δλ_{ν₁}⋯Δλ_{ν_k}] / Δη` over `Δt`-step bursts.
//!
//! Every burst restarts from the same equilibrated anchor matrix, walks
//! `Δt` steps on its own generator stream and records the sorted-order
//! eigenvalue change. The moments therefore belong to one anchor spectrum,
//! which is what the drift and diffusion formulas are functions of.
//! Per-burst increments are kept in burst order and reduced sequentially,
//! so estimates do not depend on the number of worker threads.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::{EnsembleKind, ScaledMatrix, SignVector};
use crate::error::{Error, Result};
use crate::metawalk::WalkState;
use crate::perturbation::wishart_increment;
use crate::spectral::{eigenvalues, spectrum, Spectrum};
use crate::stats::{self, jackknife, LinearFit};
use crate::theory;

pub const MOMENTS_SCHEMA: &str = "moments/v1";
pub const JACKKNIFE_BLOCKS: usize = 50;
pub const DEFAULT_C: f64 = 0.5;

/// Stream reserved for equilibrating the start vertex; bursts use `1..`.
const EQUILIBRATION_STREAM: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentConfig {
    pub kind: EnsembleKind,
    /// `Δt = round(N^c)` unless `dt` is given.
    pub c_exponent: f64,
    pub dt: Option<usize>,
    pub samples: usize,
    pub equilibration_steps: u64,
    pub seed: u64,
    /// Also accumulate `M_ννμ` and `M_ννμμ`.
    pub higher: bool,
}

impl MomentConfig {
    pub fn new(kind: EnsembleKind, samples: usize, seed: u64) -> Self {
        Self {
            kind,
            c_exponent: DEFAULT_C,
            dt: None,
            samples,
            equilibration_steps: default_equilibration(kind),
            seed,
            higher: false,
        }
    }

    pub fn steps(&self) -> usize {
        self.dt.unwrap_or_else(|| (self.kind.n() as f64).powf(self.c_exponent).round() as usize)
    }

    pub fn d_eta(&self) -> f64 {
        self.steps() as f64 / self.kind.dimension() as f64
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validated()?;
        if !(self.c_exponent > 0.0 && self.c_exponent < 1.0) {
            return Err(Error::Config(format!("c = {} must lie in (0, 1)", self.c_exponent)));
        }
        if self.samples < 100 {
            return Err(Error::Config(format!("need at least 100 bursts, got {}", self.samples)));
        }
        Ok(())
    }
}

/// Twice the mixing time, `d_N ln(d_N) / 2` steps.
pub fn default_equilibration(kind: EnsembleKind) -> u64 {
    let d = kind.dimension() as f64;
    (d * d.ln() / 2.0).ceil() as u64
}

/// Walks `steps` steps from `start` on the equilibration stream.
pub fn equilibrate(start: &SignVector, steps: u64, seed: u64) -> SignVector {
    let mut state = WalkState::new(start.clone(), seed, EQUILIBRATION_STREAM);
    state.advance(steps);
    state.signs
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentEstimate {
    pub kind: EnsembleKind,
    pub dt: usize,
    pub d_eta: f64,
    pub samples: usize,
    pub discarded: usize,
    /// Anchor spectrum the bursts start from.
    pub anchor: Vec<f64>,
    pub drift: Vec<f64>,
    pub drift_se: Vec<f64>,
    pub diffusion: Vec<f64>,
    pub diffusion_se: Vec<f64>,
    /// `M_νμ`, row-major `len × len`.
    pub second: Vec<f64>,
    /// `M_ννμ`, row-major, when requested.
    pub third: Option<Vec<f64>>,
    /// `M_ννμμ`, row-major, when requested.
    pub fourth: Option<Vec<f64>>,
    /// Largest `|ΣΔλ − Tr Δ|` over bursts.
    pub max_trace_error: f64,
    /// Largest relative drift of the fixed-trace sum over bursts.
    pub max_constraint_error: f64,
    /// Per-burst increments, one row per kept burst.
    #[serde(skip)]
    pub deltas: DMatrix<f64>,
}

impl MomentEstimate {
    pub fn len(&self) -> usize {
        self.anchor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchor.is_empty()
    }

    pub fn second_moment(&self, nu: usize, mu: usize) -> f64 {
        self.second[nu * self.len() + mu]
    }
}

struct Burst {
    delta: Vec<f64>,
    trace_error: f64,
    constraint_error: f64,
}

fn run_burst(kind: EnsembleKind, anchor: &SignVector, anchor_matrix: &ScaledMatrix, before: &Spectrum, dt: usize, seed: u64, burst: u64) -> Result<Burst> {
    let mut state = WalkState::new(anchor.clone(), seed, burst + 1);
    state.advance(dt as u64);
    let after_matrix = ScaledMatrix::realize(&state.signs);
    let after = eigenvalues(&after_matrix)?;
    let delta: Vec<f64> = after.values.iter().zip(&before.values).map(|(a, b)| a - b).collect();
    let increment = &after_matrix.entries - &anchor_matrix.entries;
    let trace_change = match kind {
        EnsembleKind::Rectangular { .. } => wishart_increment(&anchor_matrix.entries, &increment)?.trace(),
        _ => increment.trace(),
    };
    let trace_error = (delta.iter().sum::<f64>() - trace_change).abs();
    let target = before.trace2;
    let constraint_error = ((after.trace2 - target) / target).abs();
    Ok(Burst { delta, trace_error, constraint_error })
}

/// Runs `config.samples` bursts from the equilibrated `start`.
pub fn estimate(config: &MomentConfig, start: &SignVector) -> Result<MomentEstimate> {
    config.validate()?;
    if start.kind() != config.kind {
        return Err(Error::Contract(format!("start vertex of {} for a {} run", start.kind(), config.kind)));
    }
    let anchor = equilibrate(start, config.equilibration_steps, config.seed);
    estimate_at(config, &anchor)
}

/// Like [`estimate`] but uses `anchor` as given, without equilibration.
pub fn estimate_at(config: &MomentConfig, anchor: &SignVector) -> Result<MomentEstimate> {
    let kind = config.kind;
    let dt = config.steps();
    let d_eta = config.d_eta();
    let anchor_matrix = ScaledMatrix::realize(anchor);
    let before = eigenvalues(&anchor_matrix)?;
    let len = before.len();

    let bursts: Vec<Option<Burst>> = (0..config.samples as u64)
        .into_par_iter()
        .map(|b| match run_burst(kind, anchor, &anchor_matrix, &before, dt, config.seed, b) {
            Ok(burst) => Some(burst),
            Err(e) => {
                log::warn!("burst {b} discarded: {e}");
                None
            }
        })
        .collect();
    let discarded = bursts.iter().filter(|b| b.is_none()).count();
    if discarded * 100 > config.samples {
        return Err(Error::Numerical {
            message: format!("{discarded} of {} bursts failed", config.samples),
            matrix_hash: anchor.fingerprint(),
        });
    }
    let kept: Vec<Burst> = bursts.into_iter().flatten().collect();
    let s = kept.len();
    let deltas = DMatrix::from_fn(s, len, |b, nu| kept[b].delta[nu]);
    let max_trace_error = kept.iter().map(|b| b.trace_error).fold(0.0, f64::max);
    let max_constraint_error = kept.iter().map(|b| b.constraint_error).fold(0.0, f64::max);

    let scale = if d_eta > 0.0 { 1.0 / d_eta } else { 0.0 };
    let mut drift = Vec::with_capacity(len);
    let mut drift_se = Vec::with_capacity(len);
    let mut diffusion = Vec::with_capacity(len);
    let mut diffusion_se = Vec::with_capacity(len);
    for nu in 0..len {
        let col: Vec<f64> = deltas.column(nu).iter().map(|x| x * scale).collect();
        let (m, se) = jackknife(&col, JACKKNIFE_BLOCKS);
        drift.push(m);
        drift_se.push(se);
        let sq: Vec<f64> = deltas.column(nu).iter().map(|x| x * x * scale).collect();
        let (m, se) = jackknife(&sq, JACKKNIFE_BLOCKS);
        diffusion.push(m);
        diffusion_se.push(se);
    }
    let norm = scale / s.max(1) as f64;
    let second = (deltas.transpose() * &deltas * norm).transpose();
    let squares = deltas.map(|x| x * x);
    let (third, fourth) = if config.higher {
        let t = (squares.transpose() * &deltas * norm).transpose();
        let f = (squares.transpose() * &squares * norm).transpose();
        (Some(t.as_slice().to_vec()), Some(f.as_slice().to_vec()))
    } else {
        (None, None)
    };

    Ok(MomentEstimate {
        kind,
        dt,
        d_eta,
        samples: s,
        discarded,
        anchor: before.values.clone(),
        drift,
        drift_se,
        diffusion,
        diffusion_se,
        // nalgebra is column-major; the transposes above make these row-major
        second: second.as_slice().to_vec(),
        third,
        fourth,
        max_trace_error,
        max_constraint_error,
        deltas,
    })
}

/// Central 60% of the indices the moment formulas are checked on: the
/// whole spectrum for real symmetric and rectangular kinds, the positive
/// half for the antisymmetric kind.
pub fn bulk_indices(kind: EnsembleKind, len: usize) -> Vec<usize> {
    let (start, count) = match kind {
        EnsembleKind::ImaginaryAntisymmetric { .. } => (len.div_ceil(2), len / 2),
        _ => (0, len),
    };
    let cut = (stats::EDGE_FRACTION * count as f64).floor() as usize;
    (start + cut..start + count - cut).collect()
}

/// Theory drift and diffusion at every index of a spectrum. Antisymmetric
/// values are mirrored from the positive half; the zero mode gets `0`.
pub fn theory_full(spectrum: &Spectrum) -> Result<(Vec<f64>, Vec<f64>)> {
    let kind = spectrum.kind;
    let coords = theory::coordinates(spectrum);
    let d = theory::drift(kind, &coords)?;
    let g = theory::diffusion(kind, &coords)?;
    match kind {
        EnsembleKind::ImaginaryAntisymmetric { .. } => {
            let len = spectrum.len();
            let start = spectrum.positive_half_start();
            let mut drift = vec![0.0; len];
            let mut diff = vec![0.0; len];
            for (k, (dv, gv)) in d.iter().zip(&g).enumerate() {
                drift[start + k] = *dv;
                diff[start + k] = *gv;
                drift[len - 1 - start - k] = -dv;
                diff[len - 1 - start - k] = *gv;
            }
            Ok((drift, diff))
        }
        _ => Ok((d, g)),
    }
}

/// Summary of an estimate against theory over the bulk.
#[derive(Debug, Clone, Serialize)]
pub struct MomentComparison {
    pub bulk: Vec<usize>,
    pub theory_drift: Vec<f64>,
    pub theory_diffusion: Vec<f64>,
    pub drift_fit: LinearFit,
    /// Bulk mean of `N·M_νν` with its jackknife error.
    pub scaled_diffusion_mean: f64,
    pub scaled_diffusion_se: f64,
    /// Rectangular only: `N·M_νν ≈ k·λ`, through the origin and with intercept.
    pub diffusion_slope: Option<LinearFit>,
    pub diffusion_line: Option<LinearFit>,
}

pub fn compare(est: &MomentEstimate) -> Result<MomentComparison> {
    let kind = est.kind;
    let spectrum = Spectrum::from_values(kind, est.anchor.clone());
    let (theory_drift, theory_diffusion) = theory_full(&spectrum)?;
    let bulk = bulk_indices(kind, est.len());
    let pick = |v: &[f64]| bulk.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let drift_fit = stats::drift_regression(&pick(&est.drift), &pick(&est.drift_se), &pick(&theory_drift))?;

    let n = kind.n() as f64;
    let scale = if est.d_eta > 0.0 { n / est.d_eta } else { 0.0 };
    let per_burst: Vec<f64> = (0..est.deltas.nrows())
        .map(|b| bulk.iter().map(|&i| est.deltas[(b, i)].powi(2)).sum::<f64>() / bulk.len() as f64 * scale)
        .collect();
    let (scaled_diffusion_mean, scaled_diffusion_se) = jackknife(&per_burst, JACKKNIFE_BLOCKS);

    let (diffusion_slope, diffusion_line) = match kind {
        EnsembleKind::Rectangular { .. } => {
            let x = pick(&est.anchor);
            let y: Vec<f64> = pick(&est.diffusion).iter().map(|v| v * n).collect();
            let w: Vec<f64> = pick(&est.diffusion_se).iter().map(|s| 1.0 / (s * s * n * n)).collect();
            (Some(stats::fit_through_origin(&x, &y, Some(&w))?), Some(stats::linear_fit(&x, &y, Some(&w))?))
        }
        _ => (None, None),
    };
    Ok(MomentComparison {
        theory_drift: pick(&theory_drift),
        theory_diffusion: pick(&theory_diffusion),
        bulk,
        drift_fit,
        scaled_diffusion_mean,
        scaled_diffusion_se,
        diffusion_slope,
        diffusion_line,
    })
}

/// `E[ΔB̄] ≈ κ·Δη·B̄` and, for rectangular kinds, `E[⟨ν|ΔW|ν⟩]/Δη ≈ A(1-λ_ν)`.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixDriftReport {
    pub kappa: f64,
    pub kappa_se: f64,
    /// `((1 - 2/(d_N+1))^Δt - 1)/Δη`, the exact finite-`Δt` value of `κ`.
    pub kappa_exact: f64,
    pub wishart_a: Option<f64>,
    pub wishart_a_se: Option<f64>,
}

pub fn matrix_drift_check(anchor: &SignVector, samples: usize, dt: usize, seed: u64) -> Result<MatrixDriftReport> {
    let kind = anchor.kind();
    let d = kind.dimension();
    if dt == 0 {
        return Err(Error::Config("matrix drift needs Δt >= 1".into()));
    }
    let d_eta = dt as f64 / d as f64;
    let b = ScaledMatrix::realize(anchor);
    let norm = b.frobenius_sq();
    let wishart = match kind {
        EnsembleKind::Rectangular { .. } => Some(spectrum(&b)?),
        _ => None,
    };
    let rows: Vec<(f64, Vec<f64>)> = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let mut state = WalkState::new(anchor.clone(), seed, s + 1);
            state.advance(dt as u64);
            let inc = &ScaledMatrix::realize(&state.signs).entries - &b.entries;
            let kappa = inc.dot(&b.entries) / norm / d_eta;
            let diag = match &wishart {
                Some((_, basis)) => {
                    let dw = wishart_increment(&b.entries, &inc).expect("shapes match");
                    let u = &basis.real;
                    (0..u.ncols()).map(|nu| (u.column(nu).transpose() * &dw * u.column(nu))[(0, 0)] / d_eta).collect()
                }
                None => Vec::new(),
            };
            (kappa, diag)
        })
        .collect();
    let kappas: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let (kappa, kappa_se) = jackknife(&kappas, JACKKNIFE_BLOCKS);
    let kappa_exact = ((1.0 - 2.0 / (d + 1) as f64).powi(dt as i32) - 1.0) / d_eta;
    let (wishart_a, wishart_a_se) = match &wishart {
        Some((spec, _)) => {
            // per-burst slope of ⟨ν|ΔW|ν⟩/Δη against (1 - λ_ν), through the origin
            let x: Vec<f64> = spec.values.iter().map(|l| 1.0 - l).collect();
            let sxx: f64 = x.iter().map(|v| v * v).sum();
            let per: Vec<f64> = rows.iter().map(|r| r.1.iter().zip(&x).map(|(y, xv)| y * xv).sum::<f64>() / sxx).collect();
            let (a, se) = jackknife(&per, JACKKNIFE_BLOCKS);
            (Some(a), Some(se))
        }
        None => (None, None),
    };
    Ok(MatrixDriftReport { kappa, kappa_se, kappa_exact, wishart_a, wishart_a_se })
}

/// Off-diagonal second moments relative to the diagonal ones.
#[derive(Debug, Clone, Serialize)]
pub struct OffDiagonalReport {
    /// `max_{ν≠μ} |M_νμ| / mean_bulk M_νν`.
    pub max_ratio: f64,
    pub median_ratio: f64,
    /// Antisymmetric only: largest `|M_{ν,ν*} + M_νν|` relative to `M_νν`.
    pub pair_deviation: Option<f64>,
}

pub fn offdiag_suppression(est: &MomentEstimate) -> OffDiagonalReport {
    let len = est.len();
    let bulk = bulk_indices(est.kind, len);
    let mean_diag = bulk.iter().map(|&i| est.diffusion[i]).sum::<f64>() / bulk.len().max(1) as f64;
    let paired = |nu: usize| match est.kind {
        EnsembleKind::ImaginaryAntisymmetric { .. } => len - 1 - nu,
        _ => nu,
    };
    let mut ratios = Vec::new();
    for &nu in &bulk {
        for &mu in &bulk {
            if mu != nu && mu != paired(nu) {
                ratios.push(est.second_moment(nu, mu).abs() / mean_diag);
            }
        }
    }
    ratios.sort_by(f64::total_cmp);
    let pair_deviation = match est.kind {
        EnsembleKind::ImaginaryAntisymmetric { .. } => Some(
            bulk.iter()
                .map(|&nu| (est.second_moment(nu, paired(nu)) + est.diffusion[nu]).abs() / est.diffusion[nu].max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max),
        ),
        _ => None,
    };
    OffDiagonalReport {
        max_ratio: ratios.last().copied().unwrap_or(0.0),
        median_ratio: ratios.get(ratios.len() / 2).copied().unwrap_or(0.0),
        pair_deviation,
    }
}

/// Higher-moment magnitudes relative to `M_νν` at one `N`.
#[derive(Debug, Clone, Serialize)]
pub struct HigherMoments {
    pub n: usize,
    /// Median over bulk `ν ≠ μ` of `|M_ννμ| / M_νν`.
    pub third_ratio: f64,
    /// Median over bulk `ν ≠ μ` of `M_ννμμ / (M_νν M_μμ)`.
    pub fourth_ratio: f64,
}

pub fn higher_moments(est: &MomentEstimate) -> Result<HigherMoments> {
    let (Some(third), Some(fourth)) = (&est.third, &est.fourth) else {
        return Err(Error::Config("estimate was run without higher moments".into()));
    };
    let len = est.len();
    let bulk = bulk_indices(est.kind, len);
    let mut t = Vec::new();
    let mut f = Vec::new();
    for &nu in &bulk {
        for &mu in &bulk {
            if nu == mu {
                continue;
            }
            let (dn, dm) = (est.diffusion[nu], est.diffusion[mu]);
            if dn > 0.0 && dm > 0.0 {
                t.push(third[nu * len + mu].abs() / dn);
                f.push(fourth[nu * len + mu] / (dn * dm));
            }
        }
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.get(v.len() / 2).copied().unwrap_or(0.0)
    };
    Ok(HigherMoments { n: est.kind.n(), third_ratio: median(&mut t), fourth_ratio: median(&mut f) })
}

/// Log–log slopes of the higher-moment ratios against `N`.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub points: Vec<HigherMoments>,
    pub third_slope: f64,
    pub third_slope_se: f64,
    pub fourth_slope: f64,
    pub fourth_slope_se: f64,
}

fn slope_with_se(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let fit = stats::linear_fit(x, y, None)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - fit.slope * a - fit.intercept).powi(2)).sum();
    let se = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ok((fit.slope, se))
}

/// Runs one estimate per configuration (each must request higher moments)
/// and fits `log ratio = a + slope·log N`.
pub fn higher_moment_scaling(configs: &[MomentConfig]) -> Result<ScalingReport> {
    if configs.len() < 3 {
        return Err(Error::Config(format!("need at least 3 values of N, got {}", configs.len())));
    }
    let mut points = Vec::new();
    for cfg in configs {
        let cfg = MomentConfig { higher: true, ..cfg.clone() };
        let start = SignVector::uniform(cfg.kind, true);
        points.push(higher_moments(&estimate(&cfg, &start)?)?);
    }
    let x: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let t: Vec<f64> = points.iter().map(|p| p.third_ratio.ln()).collect();
    let f: Vec<f64> = points.iter().map(|p| p.fourth_ratio.ln()).collect();
    let (third_slope, third_slope_se) = slope_with_se(&x, &t)?;
    let (fourth_slope, fourth_slope_se) = slope_with_se(&x, &f)?;
    Ok(ScalingReport { points, third_slope, third_slope_se, fourth_slope, fourth_slope_se })
}

/// One `per_nu` entry of the JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct PerNu {
    pub lambda: f64,
    pub drift: f64,
    pub drift_se: f64,
    pub diff: f64,
    pub diff_se: f64,
    pub theory_drift: f64,
    pub theory_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub schema: &'static str,
    pub kind: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub c: f64,
    pub dt: usize,
    pub samples: usize,
    pub discarded: usize,
    pub per_nu: Vec<PerNu>,
    pub comparison: MomentComparison,
    pub offdiag_max_ratio: f64,
    pub offdiag: OffDiagonalReport,
    pub higher: Option<HigherMoments>,
    pub max_trace_error: f64,
    pub max_constraint_error: f64,
}

pub fn build_report(config: &MomentConfig, est: &MomentEstimate) -> Result<MomentReport> {
    let spectrum = Spectrum::from_values(est.kind, est.anchor.clone());
    let (td, tg) = theory_full(&spectrum)?;
    let per_nu = (0..est.len())
        .map(|i| PerNu {
            lambda: est.anchor[i],
            drift: est.drift[i],
            drift_se: est.drift_se[i],
            diff: est.diffusion[i],
            diff_se: est.diffusion_se[i],
            theory_drift: td[i],
            theory_diff: tg[i],
        })
        .collect();
    let offdiag = offdiag_suppression(est);
    Ok(MomentReport {
        schema: MOMENTS_SCHEMA,
        kind: est.kind.short_name().to_string(),
        n: est.kind.n(),
        m: est.kind.cols(),
        c: config.c_exponent,
        dt: est.dt,
        samples: est.samples,
        discarded: est.discarded,
        per_nu,
        comparison: compare(est)?,
        offdiag_max_ratio: offdiag.max_ratio,
        offdiag,
        higher: higher_moments(est).ok(),
        max_trace_error: est.max_trace_error,
        max_constraint_error: est.max_constraint_error,
    })
}
