//! Browser bindings: exact mixing curves, a stationary spectral histogram and
//! eigenvalue paths along one walk. Every export returns a row-major [`Table`].

use wasm_bindgen::prelude::*;

use bernoulli_walk::ensemble::{EnsembleKind, ScaledMatrix};
use bernoulli_walk::hamming;
use bernoulli_walk::metawalk::{self, Observer};
use bernoulli_walk::spectral::eigenvalues;
use bernoulli_walk::stats::Histogram;
use bernoulli_walk::theory;

const MAX_N: usize = 200;
const MAX_DRAWS: usize = 5_000;
const MAX_ROWS: usize = 4_000;

/// A row-major table of `columns` floats per row.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: usize,
    data: Vec<f64>,
}

#[wasm_bindgen]
impl Table {
    #[wasm_bindgen(getter)]
    pub fn columns(&self) -> usize {
        self.columns
    }

    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> usize {
        self.data.len() / self.columns.max(1)
    }

    /// The cells as a `Float64Array`.
    #[wasm_bindgen(getter)]
    pub fn data(&self) -> Vec<f64> {
        self.data.clone()
    }
}

fn kind_of(name: &str, n: usize) -> Result<EnsembleKind, String> {
    if n > MAX_N {
        return Err(format!("N = {n} is above the demo limit of {MAX_N}"));
    }
    let kind = match name {
        "realsym" => EnsembleKind::RealSymmetric { n },
        "antisym" => EnsembleKind::ImaginaryAntisymmetric { n },
        "rect" => EnsembleKind::Rectangular { n, m: (n / 2).max(1) },
        other => return Err(format!("unknown ensemble {other:?}")),
    };
    kind.validated().map_err(|e| e.to_string())
}

/// Rows `(η, exact TV, erf asymptotic, exponential tail)` for `η ∈ [0, eta_max]`.
pub fn mixing_table(kind: &str, n: usize, eta_max: f64) -> Result<Table, String> {
    let d = kind_of(kind, n)?.dimension();
    let t_max = (eta_max.max(0.0) * d as f64).ceil() as u64;
    let tv = hamming::tv_exact_curve(d, t_max).map_err(|e| e.to_string())?;
    let step = tv.len().div_ceil(MAX_ROWS).max(1);
    let mut data = Vec::new();
    for t in (0..tv.len()).step_by(step) {
        let a = hamming::tv_asymptotic(t as f64, d);
        data.extend([t as f64 / d as f64, tv[t], a.standard, a.tail]);
    }
    Ok(Table { columns: 4, data })
}

/// Rows `(bin centre, empirical density, limiting density)` from `draws`
/// independent stationary matrices.
pub fn histogram_table(kind: &str, n: usize, draws: usize, bins: usize, seed: u64) -> Result<Table, String> {
    let kind = kind_of(kind, n)?;
    if draws == 0 || draws > MAX_DRAWS {
        return Err(format!("draws must lie in 1..={MAX_DRAWS}"));
    }
    let mut pooled = Vec::with_capacity(draws * kind.spectrum_len());
    for s in metawalk::stationary_samples(kind, draws, seed) {
        pooled.extend(eigenvalues(&ScaledMatrix::realize(&s)).map_err(|e| e.to_string())?.values);
    }
    let (lo, hi) = theory::limiting_support(kind);
    let lo = pooled.iter().copied().fold(lo, f64::min);
    let hi = pooled.iter().copied().fold(hi, f64::max);
    let hist = Histogram::new(&pooled, bins.max(1), lo, hi).map_err(|e| e.to_string())?;
    let width = hist.width();
    let mut data = Vec::with_capacity(3 * bins);
    for (k, rho) in hist.densities().into_iter().enumerate() {
        let x = lo + (k as f64 + 0.5) * width;
        data.extend([x, rho, theory::limiting_density(kind, x)]);
    }
    Ok(Table { columns: 3, data })
}

/// Rows `(η, λ_1, …, λ_L)` along one walk from the all-plus matrix.
pub fn paths_table(kind: &str, n: usize, eta_max: f64, seed: u64) -> Result<Table, String> {
    let kind = kind_of(kind, n)?;
    let d = kind.dimension();
    let steps = (eta_max.max(0.0) * d as f64).ceil() as u64;
    let stride = steps.div_ceil(MAX_ROWS as u64).max(1);
    let observer = Observer::new("spectrum", |s| eigenvalues(&ScaledMatrix::realize(s)).map(|sp| sp.values).unwrap_or_default());
    let start = metawalk::all_positive(kind);
    let traj = metawalk::run_walkers(&start, 1, seed, steps, stride, &[observer]).remove(0);
    let columns = kind.spectrum_len() + 1;
    let mut data = Vec::with_capacity(columns * traj.times.len());
    for (eta, values) in traj.etas().zip(&traj.values) {
        if values.len() + 1 != columns {
            return Err(format!("eigensolver failed at η = {eta:.4}"));
        }
        data.push(eta);
        data.extend(values);
    }
    Ok(Table { columns, data })
}

#[wasm_bindgen]
pub fn mixing_curves(kind: &str, n: usize, eta_max: f64) -> Result<Table, JsError> {
    mixing_table(kind, n, eta_max).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn spectrum_histogram(kind: &str, n: usize, draws: usize, bins: usize, seed: u64) -> Result<Table, JsError> {
    histogram_table(kind, n, draws, bins, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn eigenvalue_paths(kind: &str, n: usize, eta_max: f64, seed: u64) -> Result<Table, JsError> {
    paths_table(kind, n, eta_max, seed).map_err(|e| JsError::new(&e))
}
