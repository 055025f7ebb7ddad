//! Closed-form reference values: Fokker–Planck drift and diffusion per
//! ensemble, unnormalized fixed-trace log-densities, limiting spectral
//! densities and the Ornstein–Uhlenbeck coefficients of the Hamming chain.
//!
//! All functions take *theory coordinates*, see [`coordinates`]: the sorted
//! eigenvalues for real symmetric matrices, the W-eigenvalues for
//! rectangular ones, and the strictly positive half of the spectrum for
//! antisymmetric ones (the negative half mirrors it and the zero mode of odd
//! `N` stays fixed).

use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::ensemble::EnsembleKind;
use crate::error::{Error, Result};
use crate::hamming::OuCoefficients;
use crate::spectral::Spectrum;

pub const DENSITY_SCHEMA: &str = "density/v1";

/// Relative tolerance of the fixed-trace domain check in [`log_jpdf`].
pub const TRACE_TOLERANCE: f64 = 1e-8;

/// The values the formulas below are written in.
pub fn coordinates(spectrum: &Spectrum) -> Vec<f64> {
    match spectrum.kind {
        EnsembleKind::ImaginaryAntisymmetric { .. } => spectrum.positive_half().to_vec(),
        _ => spectrum.values.clone(),
    }
}

/// Number of theory coordinates for `kind`.
pub fn coordinate_count(kind: EnsembleKind) -> usize {
    match kind {
        EnsembleKind::RealSymmetric { n } => n,
        EnsembleKind::ImaginaryAntisymmetric { n } => n / 2,
        EnsembleKind::Rectangular { m, .. } => m,
    }
}

/// The constrained sum on the fixed-trace surface: `Σλ² = N+1` for real
/// symmetric, `Σλ² = d_N/N` over the positive half (the pair sum) for
/// antisymmetric, `Σλ = M` for rectangular.
pub fn trace_target(kind: EnsembleKind) -> f64 {
    match kind {
        EnsembleKind::ImaginaryAntisymmetric { .. } => kind.dimension() as f64 / kind.n() as f64,
        _ => kind.trace_constant(),
    }
}

pub fn trace_of(kind: EnsembleKind, coords: &[f64]) -> f64 {
    match kind {
        EnsembleKind::Rectangular { .. } => coords.iter().sum(),
        _ => coords.iter().map(|x| x * x).sum(),
    }
}

fn check_len(kind: EnsembleKind, coords: &[f64]) -> Result<()> {
    let want = coordinate_count(kind);
    if coords.len() != want {
        return Err(Error::Contract(format!("{kind} has {want} theory coordinates, got {}", coords.len())));
    }
    Ok(())
}

fn check_simple(kind: EnsembleKind, coords: &[f64]) -> Result<()> {
    check_len(kind, coords)?;
    for (i, a) in coords.iter().enumerate() {
        for b in &coords[i + 1..] {
            if a == b {
                return Err(Error::Singular(format!("coincident eigenvalues at {a}")));
            }
        }
    }
    if matches!(kind, EnsembleKind::ImaginaryAntisymmetric { .. }) && coords.iter().any(|&x| x <= 0.0) {
        return Err(Error::Singular("antisymmetric coordinates must be strictly positive".into()));
    }
    Ok(())
}

/// `M_ν`, the first moment of `Δλ_ν/Δη`.
pub fn drift(kind: EnsembleKind, coords: &[f64]) -> Result<Vec<f64>> {
    check_simple(kind, coords)?;
    let n = kind.n() as f64;
    let pair_sum = |nu: usize, f: &dyn Fn(f64, f64) -> f64| -> f64 {
        coords.iter().enumerate().filter(|&(mu, _)| mu != nu).map(|(_, &m)| f(coords[nu], m)).sum()
    };
    Ok((0..coords.len())
        .map(|nu| {
            let l = coords[nu];
            match kind {
                EnsembleKind::RealSymmetric { .. } => -2.0 * l + 4.0 / n * pair_sum(nu, &|a, b| 1.0 / (a - b)),
                EnsembleKind::ImaginaryAntisymmetric { n: size } => {
                    let zero_mode = if size % 2 == 1 { 4.0 / (n * l) } else { 0.0 };
                    -2.0 * l + 4.0 / n * pair_sum(nu, &|a, b| 1.0 / (a - b) + 1.0 / (a + b)) + zero_mode
                }
                EnsembleKind::Rectangular { .. } => {
                    4.0 * (1.0 - l) + 4.0 / n * pair_sum(nu, &|a, b| (a + b) / (a - b))
                }
            }
        })
        .collect())
}

/// `M_νν`, the second moment of `Δλ_ν/Δη`.
pub fn diffusion(kind: EnsembleKind, coords: &[f64]) -> Result<Vec<f64>> {
    check_len(kind, coords)?;
    let n = kind.n() as f64;
    Ok(coords
        .iter()
        .map(|&l| match kind {
            EnsembleKind::RealSymmetric { .. } => 8.0 / n,
            EnsembleKind::ImaginaryAntisymmetric { .. } => 4.0 / n,
            EnsembleKind::Rectangular { .. } => 16.0 * l / n,
        })
        .collect())
}

/// `∂M_νν/∂λ_ν`.
pub fn diffusion_derivative(kind: EnsembleKind) -> f64 {
    match kind {
        EnsembleKind::Rectangular { n, .. } => 16.0 / n as f64,
        _ => 0.0,
    }
}

fn wishart_exponent(kind: EnsembleKind) -> f64 {
    match kind {
        EnsembleKind::Rectangular { n, m } => (n as f64 - m as f64 + 1.0) / 2.0 - 1.0,
        _ => 0.0,
    }
}

/// The unnormalized log-density without the trace constraint. Coincident
/// eigenvalues give `-∞`.
pub fn log_jpdf_unconstrained(kind: EnsembleKind, coords: &[f64]) -> Result<f64> {
    check_len(kind, coords)?;
    let mut acc = 0.0;
    for (i, &a) in coords.iter().enumerate() {
        for &b in &coords[i + 1..] {
            acc += match kind {
                EnsembleKind::ImaginaryAntisymmetric { .. } => 2.0 * (a * a - b * b).abs().ln(),
                _ => (a - b).abs().ln(),
            };
        }
    }
    match kind {
        EnsembleKind::ImaginaryAntisymmetric { n } if n % 2 == 1 => {
            acc += coords.iter().map(|&l| 2.0 * l.ln()).sum::<f64>();
        }
        EnsembleKind::Rectangular { .. } => {
            let e = wishart_exponent(kind);
            if e != 0.0 {
                acc += coords.iter().map(|&l| e * l.ln()).sum::<f64>();
            }
        }
        _ => {}
    }
    Ok(if acc.is_nan() { f64::NEG_INFINITY } else { acc })
}

/// The unnormalized log-density on the fixed-trace surface. Only
/// differences are meaningful. For even-`N` antisymmetric ensembles the
/// zero-mode factor is absent and the formula is experimental.
pub fn log_jpdf(kind: EnsembleKind, coords: &[f64]) -> Result<f64> {
    check_len(kind, coords)?;
    let target = trace_target(kind);
    let trace = trace_of(kind, coords);
    if (trace - target).abs() > TRACE_TOLERANCE * target {
        return Err(Error::Domain(format!("trace {trace} is off the fixed-trace surface {target}")));
    }
    log_jpdf_unconstrained(kind, coords)
}

/// Gradient of the log of the unconstrained surrogate density
/// `Q̃ = exp(log_jpdf - V)` with confinement `V = NΣλ²/4` (real symmetric),
/// `NΣλ²/2` over the positive half (antisymmetric) or `NΣλ/2`
/// (rectangular). Satisfies
/// `drift = (diffusion/2)·gradient + ½·∂diffusion`.
pub fn surrogate_log_density_gradient(kind: EnsembleKind, coords: &[f64]) -> Result<Vec<f64>> {
    check_simple(kind, coords)?;
    let n = kind.n() as f64;
    Ok((0..coords.len())
        .map(|nu| {
            let l = coords[nu];
            let others = coords.iter().enumerate().filter(|&(mu, _)| mu != nu).map(|(_, &m)| m);
            match kind {
                EnsembleKind::RealSymmetric { .. } => others.map(|m| 1.0 / (l - m)).sum::<f64>() - n * l / 2.0,
                EnsembleKind::ImaginaryAntisymmetric { n: size } => {
                    let zero_mode = if size % 2 == 1 { 2.0 / l } else { 0.0 };
                    zero_mode + others.map(|m| 4.0 * l / (l * l - m * m)).sum::<f64>() - n * l
                }
                EnsembleKind::Rectangular { .. } => {
                    wishart_exponent(kind) / l + others.map(|m| 1.0 / (l - m)).sum::<f64>() - n / 2.0
                }
            }
        })
        .collect())
}

/// Drift, diffusion and log-density evaluated at one spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryPrediction {
    pub kind: EnsembleKind,
    pub coords: Vec<f64>,
    pub drift: Vec<f64>,
    pub diffusion: Vec<f64>,
    pub log_jpdf: Option<f64>,
}

pub fn predict(spectrum: &Spectrum) -> Result<TheoryPrediction> {
    let kind = spectrum.kind;
    let coords = coordinates(spectrum);
    Ok(TheoryPrediction {
        kind,
        drift: drift(kind, &coords)?,
        diffusion: diffusion(kind, &coords)?,
        log_jpdf: log_jpdf(kind, &coords).ok(),
        coords,
    })
}

/// The Wigner semicircle `√(4-λ²)/(2π)` on `[-2, 2]`.
pub fn semicircle_density(x: f64) -> f64 {
    if x.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - x * x).sqrt() / (2.0 * PI)
    }
}

pub fn semicircle_cdf(x: f64) -> f64 {
    if x <= -2.0 {
        0.0
    } else if x >= 2.0 {
        1.0
    } else {
        0.5 + x * (4.0 - x * x).sqrt() / (4.0 * PI) + (x / 2.0).asin() / PI
    }
}

/// Marchenko–Pastur law with aspect ratio `c = M/N ∈ (0, 1]` and unit mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarchenkoPastur {
    pub c: f64,
    pub lower: f64,
    pub upper: f64,
}

impl MarchenkoPastur {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::Config(format!("aspect ratio c = {c} must lie in (0, 1]")));
        }
        let r = c.sqrt();
        Ok(Self { c, lower: (1.0 - r).powi(2), upper: (1.0 + r).powi(2) })
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= self.lower || x >= self.upper || x <= 0.0 {
            return 0.0;
        }
        ((self.upper - x) * (x - self.lower)).sqrt() / (2.0 * PI * self.c * x)
    }

    // Antiderivative of `√((b-x)(x-a))/x`. The arcsines are written as
    // `atan2` with `√(1-u²)` factored exactly, which keeps full precision at
    // the edges where `u → ±1`.
    fn antiderivative(&self, x: f64) -> f64 {
        let (a, b, c) = (self.lower, self.upper, self.c);
        let r = ((b - x) * (x - a)).max(0.0).sqrt();
        let mut g = r + (1.0 + c) * (2.0 * x - a - b).atan2(2.0 * r);
        if c < 1.0 {
            g -= (1.0 - c) * ((a + b) * x - 2.0 * a * b).atan2(2.0 * (a * b).sqrt() * r);
        }
        g
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower {
            0.0
        } else if x >= self.upper {
            1.0
        } else {
            // the antiderivative equals -πc at the lower edge
            ((self.antiderivative(x) + PI * self.c) / (2.0 * PI * self.c)).clamp(0.0, 1.0)
        }
    }
}

fn marchenko_pastur_of(kind: EnsembleKind) -> Option<MarchenkoPastur> {
    match kind {
        EnsembleKind::Rectangular { n, m } => MarchenkoPastur::new(m as f64 / n as f64).ok(),
        _ => None,
    }
}

/// Large-`N` spectral density: semicircle for square kinds, Marchenko–Pastur
/// with `c = M/N` for rectangular.
pub fn limiting_density(kind: EnsembleKind, x: f64) -> f64 {
    match marchenko_pastur_of(kind) {
        Some(mp) => mp.density(x),
        None => semicircle_density(x),
    }
}

pub fn limiting_cdf(kind: EnsembleKind, x: f64) -> f64 {
    match marchenko_pastur_of(kind) {
        Some(mp) => mp.cdf(x),
        None => semicircle_cdf(x),
    }
}

/// Support `[lower, upper]` of the limiting density.
pub fn limiting_support(kind: EnsembleKind) -> (f64, f64) {
    match marchenko_pastur_of(kind) {
        Some(mp) => (mp.lower, mp.upper),
        None => (-2.0, 2.0),
    }
}

pub fn ou_coefficients() -> OuCoefficients {
    OuCoefficients::LIMIT
}

/// Writes `lambda,rho` rows on a uniform grid over the support.
pub fn write_density_csv<W: Write>(mut w: W, header: &str, kind: EnsembleKind, points: usize) -> Result<()> {
    let (lo, hi) = limiting_support(kind);
    writeln!(w, "# schema={DENSITY_SCHEMA} kind={} {header}", kind.short_name())?;
    writeln!(w, "lambda,rho")?;
    let points = points.max(2);
    for k in 0..points {
        let x = lo + (hi - lo) * k as f64 / (points - 1) as f64;
        writeln!(w, "{x:.12e},{:.12e}", limiting_density(kind, x))?;
    }
    Ok(())
}
