//! Brute-force ground truth on hypercubes small enough to enumerate.
//!
//! States are indexed by the bit pattern of their sign vector, so flipping
//! entry `i` is `v ^ (1 << i)` and the Hamming distance between two states
//! is the popcount of their XOR.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::{EnsembleKind, ScaledMatrix, SignVector};
use crate::error::{Error, Result};
use crate::metawalk::WalkState;
use crate::spectral::eigenvalues;

pub const FLOAT_LIMIT: usize = 20;
pub const RATIONAL_LIMIT: usize = 12;
/// Largest `d_N` for two-step exhaustive moments.
pub const TWO_STEP_LIMIT: usize = 14;
/// Spectra closer than this in every coordinate are one atom.
pub const MERGE_RESOLUTION: f64 = 1e-9;

const CACHE_MAGIC: &[u8; 8] = b"BRWORCL1";
const CACHE_VERSION: u32 = 1;

fn guard(d: usize, limit: usize) -> Result<()> {
    if d > limit {
        return Err(Error::Guard { d, limit });
    }
    Ok(())
}

fn guarded_dimension(kind: EnsembleKind, limit: usize) -> Result<usize> {
    let d = kind.validated()?.dimension();
    guard(d, limit)?;
    Ok(d)
}

/// Probability of every one of the `2^d_N` states.
#[derive(Debug, Clone, PartialEq)]
pub struct FullStateDistribution {
    pub d_n: usize,
    pub probs: Vec<f64>,
}

impl FullStateDistribution {
    pub fn uniform(d_n: usize) -> Result<Self> {
        guard(d_n, FLOAT_LIMIT)?;
        let size = 1usize << d_n;
        Ok(Self { d_n, probs: vec![1.0 / size as f64; size] })
    }

    pub fn delta(d_n: usize, state: u64) -> Result<Self> {
        guard(d_n, FLOAT_LIMIT)?;
        let size = 1usize << d_n;
        if state as usize >= size {
            return Err(Error::Contract(format!("state {state} outside 2^{d_n}")));
        }
        let mut probs = vec![0.0; size];
        probs[state as usize] = 1.0;
        Ok(Self { d_n, probs })
    }

    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Distribution of the Hamming distance from `origin`, indexed `0..=d_N`.
    pub fn hamming_marginal(&self, origin: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.d_n + 1];
        for (v, p) in self.probs.iter().enumerate() {
            out[(v as u64 ^ origin).count_ones() as usize] += p;
        }
        out
    }

    /// `‖p − uniform‖₁`.
    pub fn l1_from_uniform(&self) -> f64 {
        let u = 1.0 / self.probs.len() as f64;
        self.probs.iter().map(|p| (p - u).abs()).sum()
    }

    /// `Σ_v a[v] b[v] / 2^d_N`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(a, b)| a * b).sum::<f64>() / self.probs.len() as f64
    }
}

/// One step of the lazy walk: `new[v] = (old[v] + Σ_{u~v} old[u]) / (d_N+1)`.
pub fn apply_walk_operator(dist: &FullStateDistribution) -> Result<FullStateDistribution> {
    let d = dist.d_n;
    guard(d, FLOAT_LIMIT)?;
    let old = &dist.probs;
    let w = 1.0 / (d + 1) as f64;
    let probs = (0..old.len())
        .into_par_iter()
        .map(|v| {
            let s: f64 = old[v] + (0..d).map(|k| old[v ^ (1 << k)]).sum::<f64>();
            s * w
        })
        .collect();
    Ok(FullStateDistribution { d_n: d, probs })
}

pub fn walk_operator_power(dist: &FullStateDistribution, t: usize) -> Result<FullStateDistribution> {
    let mut cur = dist.clone();
    for _ in 0..t {
        cur = apply_walk_operator(&cur)?;
    }
    Ok(cur)
}

/// Exact distribution stored as integer numerators over one common
/// denominator, so each step is integer addition.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    pub d_n: usize,
    pub numerators: Vec<BigUint>,
    pub denominator: BigUint,
}

impl ExactDistribution {
    pub fn delta(d_n: usize, state: u64) -> Result<Self> {
        guard(d_n, RATIONAL_LIMIT)?;
        let size = 1usize << d_n;
        if state as usize >= size {
            return Err(Error::Contract(format!("state {state} outside 2^{d_n}")));
        }
        let mut numerators = vec![BigUint::zero(); size];
        numerators[state as usize] = BigUint::one();
        Ok(Self { d_n, numerators, denominator: BigUint::one() })
    }

    pub fn uniform(d_n: usize) -> Result<Self> {
        guard(d_n, RATIONAL_LIMIT)?;
        let size = 1usize << d_n;
        Ok(Self { d_n, numerators: vec![BigUint::one(); size], denominator: BigUint::from(size) })
    }

    pub fn prob(&self, v: usize) -> BigRational {
        BigRational::new(BigInt::from(self.numerators[v].clone()), BigInt::from(self.denominator.clone()))
    }

    pub fn mass(&self) -> BigRational {
        let total: BigUint = self.numerators.iter().sum();
        BigRational::new(BigInt::from(total), BigInt::from(self.denominator.clone()))
    }

    pub fn to_float(&self) -> FullStateDistribution {
        let probs = (0..self.numerators.len()).map(|v| self.prob(v).to_f64().unwrap_or(0.0)).collect();
        FullStateDistribution { d_n: self.d_n, probs }
    }

    /// Exact `‖p − uniform‖₁`, rounded once at the end.
    pub fn l1_from_uniform(&self) -> f64 {
        let size = BigInt::from(self.numerators.len());
        let den = BigInt::from(self.denominator.clone());
        let total: BigInt = self.numerators.iter().map(|n| (BigInt::from(n.clone()) * &size - &den).magnitude().clone()).map(BigInt::from).sum();
        BigRational::new(total, den * size).to_f64().unwrap_or(f64::NAN)
    }
}

pub fn apply_walk_operator_exact(dist: &ExactDistribution) -> Result<ExactDistribution> {
    let d = dist.d_n;
    guard(d, RATIONAL_LIMIT)?;
    let old = &dist.numerators;
    let numerators = (0..old.len())
        .into_par_iter()
        .map(|v| {
            let mut s = old[v].clone();
            for k in 0..d {
                s += &old[v ^ (1 << k)];
            }
            s
        })
        .collect();
    Ok(ExactDistribution { d_n: d, numerators, denominator: &dist.denominator * BigUint::from(d + 1) })
}

/// `P_Δt(X)` for `X = 0..=d_N`: the Hamming distance from `start` after
/// `dt` steps, by operator powers and bucketing.
pub fn exact_transition_kernel(start: &SignVector, dt: usize) -> Result<Vec<f64>> {
    let d = start.len();
    guard(d, FLOAT_LIMIT)?;
    let origin = start.to_index().ok_or(Error::Guard { d, limit: FLOAT_LIMIT })?;
    let dist = walk_operator_power(&FullStateDistribution::delta(d, origin)?, dt)?;
    Ok(dist.hamming_marginal(origin))
}

/// Exact rational version of [`exact_transition_kernel`].
pub fn exact_transition_kernel_rational(start: &SignVector, dt: usize) -> Result<Vec<BigRational>> {
    let d = start.len();
    guard(d, RATIONAL_LIMIT)?;
    let origin = start.to_index().ok_or(Error::Guard { d, limit: RATIONAL_LIMIT })?;
    let mut dist = ExactDistribution::delta(d, origin)?;
    for _ in 0..dt {
        dist = apply_walk_operator_exact(&dist)?;
    }
    let mut out = vec![BigUint::zero(); d + 1];
    for (v, n) in dist.numerators.iter().enumerate() {
        out[(v as u64 ^ origin).count_ones() as usize] += n;
    }
    let den = BigInt::from(dist.denominator);
    Ok(out.into_iter().map(|n| BigRational::new(BigInt::from(n), den.clone())).collect())
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Both sides of the `Φ^(l)` identity: the kernel-weighted fraction of
/// distance-`X` paths through a fixed `l`-set, and its closed form
/// `2^{-l} Σ_j C(l,j)(-1)^j Λ_j^Δt` with `Λ_j = 1 − 2j/(d_N+1)`.
pub fn phi_assembly(kernel: &[f64], l: usize, dt: usize) -> (f64, f64) {
    let d = kernel.len() - 1;
    let lhs = (l..=d).map(|x| kernel[x] * binomial(d - l, x - l) / binomial(d, x)).sum();
    let rhs = (0..=l)
        .map(|j| {
            let lambda = 1.0 - 2.0 * j as f64 / (d + 1) as f64;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(l, j) * lambda.powi(dt as i32)
        })
        .sum::<f64>()
        / 2f64.powi(l as i32);
    (lhs, rhs)
}

/// One point of the discrete stationary spectral measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralAtom {
    pub values: Vec<f64>,
    pub count: u64,
    pub weight: f64,
}

/// Groups spectra that agree to [`MERGE_RESOLUTION`].
#[derive(Debug, Default)]
struct AtomIndex {
    keys: HashMap<Vec<i64>, usize>,
    atoms: Vec<SpectralAtom>,
}

impl AtomIndex {
    fn key(values: &[f64]) -> Vec<i64> {
        values.iter().map(|v| (v / MERGE_RESOLUTION).round() as i64).collect()
    }

    /// Keys of grid cells `values` could round into under last-digit noise.
    fn candidate_keys(values: &[f64]) -> Vec<Vec<i64>> {
        let mut out = vec![Self::key(values)];
        for (i, v) in values.iter().enumerate() {
            let x = v / MERGE_RESOLUTION;
            let frac = x - x.floor();
            if (frac - 0.5).abs() < 1e-3 {
                let alt = if x.round() == x.floor() { x.floor() as i64 + 1 } else { x.floor() as i64 };
                let extra: Vec<Vec<i64>> = out.iter().map(|k| {
                    let mut k = k.clone();
                    k[i] = alt;
                    k
                }).collect();
                out.extend(extra);
            }
        }
        out
    }

    fn find(&self, values: &[f64]) -> Option<usize> {
        Self::candidate_keys(values).iter().find_map(|k| self.keys.get(k).copied())
    }

    fn insert(&mut self, values: &[f64]) {
        match self.find(values) {
            Some(i) => self.atoms[i].count += 1,
            None => {
                self.keys.insert(Self::key(values), self.atoms.len());
                self.atoms.push(SpectralAtom { values: values.to_vec(), count: 1, weight: 0.0 });
            }
        }
    }

    fn finish(self, total: u64) -> Vec<SpectralAtom> {
        let mut atoms = self.atoms;
        for a in &mut atoms {
            a.weight = a.count as f64 / total as f64;
        }
        atoms.sort_by(|a, b| a.values.iter().zip(&b.values).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
        atoms
    }
}

/// Spectrum of every one of the `2^d_N` matrices, merged into atoms with
/// uniform weights.
pub fn exact_stationary_spectral_measure(kind: EnsembleKind) -> Result<Vec<SpectralAtom>> {
    let d = guarded_dimension(kind, FLOAT_LIMIT)?;
    let total = 1u64 << d;
    let spectra: Vec<Vec<f64>> = (0..total)
        .into_par_iter()
        .map(|v| -> Result<Vec<f64>> {
            let s = SignVector::from_index(kind, v)?;
            Ok(eigenvalues(&ScaledMatrix::realize(&s))?.values)
        })
        .collect::<Result<_>>()?;
    let mut index = AtomIndex::default();
    for s in &spectra {
        index.insert(s);
    }
    Ok(index.finish(total))
}

/// Result of sampling the stationary measure with the walk itself.
#[derive(Debug, Clone, Serialize)]
pub struct SamplerComparison {
    pub samples: usize,
    pub burn_in: u64,
    pub thin: u64,
    /// Samples whose spectrum matched no enumerated atom.
    pub unmatched: usize,
    pub tv: f64,
}

/// Runs one walker for `burn_in` steps, then records a spectrum every
/// `thin` steps, and compares the frequencies with `atoms` in total variation.
pub fn compare_sampler(kind: EnsembleKind, atoms: &[SpectralAtom], samples: usize, burn_in: u64, thin: u64, seed: u64) -> Result<SamplerComparison> {
    let mut index = AtomIndex::default();
    for a in atoms {
        index.keys.insert(AtomIndex::key(&a.values), index.atoms.len());
        index.atoms.push(SpectralAtom { count: 0, ..a.clone() });
    }
    let mut state = WalkState::new(SignVector::uniform(kind, true), seed, 0);
    state.advance(burn_in);
    let mut unmatched = 0;
    for _ in 0..samples {
        state.advance(thin);
        let values = eigenvalues(&ScaledMatrix::realize(&state.signs))?.values;
        match index.find(&values) {
            Some(i) => index.atoms[i].count += 1,
            None => unmatched += 1,
        }
    }
    let n = samples as f64;
    let tv = 0.5 * (index.atoms.iter().map(|a| (a.count as f64 / n - a.weight).abs()).sum::<f64>() + unmatched as f64 / n);
    Ok(SamplerComparison { samples, burn_in, thin, unmatched, tv })
}

/// Exact moments of the sorted eigenvalue increments over all
/// `(d_N+1)^Δt` equally likely step sequences.
#[derive(Debug, Clone, Serialize)]
pub struct ExactMoments {
    pub dt: usize,
    pub d_eta: f64,
    /// `E[Δλ_ν]/Δη`.
    pub drift: Vec<f64>,
    /// `E[Δλ_ν Δλ_μ]/Δη`, row-major.
    pub second: Vec<f64>,
    /// `E[ΔB̄]`, row-major in the matrix shape.
    pub mean_increment: Vec<f64>,
}

impl ExactMoments {
    pub fn second_moment(&self, nu: usize, mu: usize) -> f64 {
        self.second[nu * self.drift.len() + mu]
    }
}

struct Accumulator {
    sum: Vec<f64>,
    outer: DMatrix<f64>,
    increment: DMatrix<f64>,
}

impl Accumulator {
    fn new(len: usize, shape: (usize, usize)) -> Self {
        Self { sum: vec![0.0; len], outer: DMatrix::zeros(len, len), increment: DMatrix::zeros(shape.0, shape.1) }
    }

    fn add(&mut self, weight: f64, delta: &[f64], increment: &DMatrix<f64>) {
        for (s, x) in self.sum.iter_mut().zip(delta) {
            *s += weight * x;
        }
        let v = nalgebra::DVector::from_column_slice(delta);
        self.outer += &v * v.transpose() * weight;
        self.increment += increment * weight;
    }
}

fn spectral_change(anchor: &ScaledMatrix, before: &[f64], signs: &SignVector) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let after = ScaledMatrix::realize(signs);
    let values = eigenvalues(&after)?.values;
    let delta = values.iter().zip(before).map(|(a, b)| a - b).collect();
    Ok((delta, &after.entries - &anchor.entries))
}

pub fn exhaustive_moments(anchor: &SignVector, dt: usize) -> Result<ExactMoments> {
    let kind = anchor.kind();
    let d = kind.dimension();
    match dt {
        1 => guard(d, FLOAT_LIMIT)?,
        2 => guard(d, TWO_STEP_LIMIT)?,
        _ => return Err(Error::Config(format!("exhaustive moments support Δt = 1 or 2, got {dt}"))),
    }
    let b = ScaledMatrix::realize(anchor);
    let before = eigenvalues(&b)?.values;
    let len = before.len();
    let mut acc = Accumulator::new(len, b.entries.shape());
    let weight = 1.0 / ((d + 1) as f64).powi(dt as i32);
    // draw value d is the lazy stay
    let apply = |s: &mut SignVector, draw: usize| {
        if draw < d {
            s.flip(draw);
        }
    };
    for first in 0..=d {
        let mut s1 = anchor.clone();
        apply(&mut s1, first);
        if dt == 1 {
            let (delta, inc) = spectral_change(&b, &before, &s1)?;
            acc.add(weight, &delta, &inc);
            continue;
        }
        for second in 0..=d {
            let mut s2 = s1.clone();
            apply(&mut s2, second);
            let (delta, inc) = spectral_change(&b, &before, &s2)?;
            acc.add(weight, &delta, &inc);
        }
    }
    let d_eta = dt as f64 / d as f64;
    Ok(ExactMoments {
        dt,
        d_eta,
        drift: acc.sum.iter().map(|x| x / d_eta).collect(),
        second: (acc.outer / d_eta).transpose().as_slice().to_vec(),
        mean_increment: acc.increment.transpose().as_slice().to_vec(),
    })
}

/// Two-step second moments assembled from the distance kernel: every
/// distance-`X` flip set is equally likely, so only the `X ≤ 2` sets are
/// enumerated and weighted by `P_2(X)/C(d_N, X)`.
pub fn two_step_second_moments_by_distance(anchor: &SignVector) -> Result<Vec<f64>> {
    let kind = anchor.kind();
    let d = guarded_dimension(kind, TWO_STEP_LIMIT)?;
    let kernel = exact_transition_kernel(anchor, 2)?;
    let b = ScaledMatrix::realize(anchor);
    let before = eigenvalues(&b)?.values;
    let len = before.len();
    let mut acc = Accumulator::new(len, b.entries.shape());
    let w1 = kernel[1] / d as f64;
    let w2 = kernel[2] / binomial(d, 2);
    for i in 0..d {
        let s = anchor.flipped(i)?;
        let (delta, inc) = spectral_change(&b, &before, &s)?;
        acc.add(w1, &delta, &inc);
        for j in i + 1..d {
            let s = s.flipped(j)?;
            let (delta, inc) = spectral_change(&b, &before, &s)?;
            acc.add(w2, &delta, &inc);
        }
    }
    let d_eta = 2.0 / d as f64;
    Ok((acc.outer / d_eta).transpose().as_slice().to_vec())
}

/// Cached oracle results, one file per `(kind, N, M, Δt)`.
#[derive(Debug, Clone)]
pub struct OracleCache {
    dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Payload {
    Kernel = 1,
    Measure = 2,
}

impl OracleCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn path(&self, kind: EnsembleKind, dt: usize, payload: Payload) -> PathBuf {
        let tag = match payload {
            Payload::Kernel => "kernel",
            Payload::Measure => "measure",
        };
        self.dir.join(format!("{}-{}x{}-dt{}-{}.bin", kind.short_name(), kind.n(), kind.cols(), dt, tag))
    }

    fn header(kind: EnsembleKind, dt: usize, payload: Payload) -> Vec<u8> {
        let mut h = CACHE_MAGIC.to_vec();
        h.extend(CACHE_VERSION.to_le_bytes());
        h.push(payload as u8);
        h.extend(kind.short_name().len().to_le_bytes());
        h.extend(kind.short_name().as_bytes());
        for x in [kind.n(), kind.cols(), dt] {
            h.extend((x as u64).to_le_bytes());
        }
        h
    }

    fn read(&self, path: &Path, header: &[u8]) -> Option<Vec<u8>> {
        let mut bytes = Vec::new();
        fs::File::open(path).ok()?.read_to_end(&mut bytes).ok()?;
        if !bytes.starts_with(header) {
            log::warn!("ignoring stale oracle cache {}", path.display());
            return None;
        }
        Some(bytes.split_off(header.len()))
    }

    fn write(&self, path: &Path, header: &[u8], body: &[u8]) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(header)?;
        f.write_all(body)?;
        f.sync_all()?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    /// Distance kernel from the all-positive vertex.
    pub fn kernel(&self, kind: EnsembleKind, dt: usize) -> Result<Vec<f64>> {
        let path = self.path(kind, dt, Payload::Kernel);
        let header = Self::header(kind, dt, Payload::Kernel);
        if let Some(body) = self.read(&path, &header) {
            if let Some(v) = decode_f64s(&body) {
                return Ok(v);
            }
        }
        let kernel = exact_transition_kernel(&SignVector::uniform(kind, true), dt)?;
        self.write(&path, &header, &encode_f64s(&kernel))?;
        Ok(kernel)
    }

    pub fn measure(&self, kind: EnsembleKind) -> Result<Vec<SpectralAtom>> {
        let path = self.path(kind, 0, Payload::Measure);
        let header = Self::header(kind, 0, Payload::Measure);
        let len = kind.spectrum_len();
        let total = 1u64 << guarded_dimension(kind, FLOAT_LIMIT)?;
        if let Some(body) = self.read(&path, &header) {
            if let Some(atoms) = decode_atoms(&body, len, total) {
                return Ok(atoms);
            }
        }
        let atoms = exact_stationary_spectral_measure(kind)?;
        let mut body = (atoms.len() as u64).to_le_bytes().to_vec();
        for a in &atoms {
            body.extend(a.count.to_le_bytes());
            for v in &a.values {
                body.extend(v.to_le_bytes());
            }
        }
        self.write(&path, &header, &body)?;
        Ok(atoms)
    }
}

fn encode_f64s(v: &[f64]) -> Vec<u8> {
    let mut out = (v.len() as u64).to_le_bytes().to_vec();
    for x in v {
        out.extend(x.to_le_bytes());
    }
    out
}

fn read_u64(bytes: &[u8], at: &mut usize) -> Option<u64> {
    let v = u64::from_le_bytes(bytes.get(*at..*at + 8)?.try_into().ok()?);
    *at += 8;
    Some(v)
}

fn decode_f64s(bytes: &[u8]) -> Option<Vec<f64>> {
    let mut at = 0;
    let n = read_u64(bytes, &mut at)? as usize;
    let v = (0..n).map(|_| read_u64(bytes, &mut at).map(f64::from_bits)).collect::<Option<Vec<_>>>()?;
    (at == bytes.len()).then_some(v)
}

fn decode_atoms(bytes: &[u8], len: usize, total: u64) -> Option<Vec<SpectralAtom>> {
    let mut at = 0;
    let n = read_u64(bytes, &mut at)? as usize;
    let mut atoms = Vec::with_capacity(n);
    for _ in 0..n {
        let count = read_u64(bytes, &mut at)?;
        let values = (0..len).map(|_| read_u64(bytes, &mut at).map(f64::from_bits)).collect::<Option<Vec<_>>>()?;
        atoms.push(SpectralAtom { values, count, weight: count as f64 / total as f64 });
    }
    (at == bytes.len() && atoms.iter().map(|a| a.count).sum::<u64>() == total).then_some(atoms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamming::{evolve_steps, HammingDistribution};
    use crate::metawalk::{prob_max_distance, prob_max_distance_exact};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_is_stationary_and_delta_spreads() {
        let u = FullStateDistribution::uniform(6).unwrap();
        assert_eq!(apply_walk_operator(&u).unwrap(), u);
        let one = apply_walk_operator(&FullStateDistribution::delta(3, 0).unwrap()).unwrap();
        for v in [0usize, 1, 2, 4] {
            assert_eq!(one.probs[v], 0.25);
        }
        assert_eq!(one.probs.iter().filter(|&&p| p > 0.0).count(), 4);
    }

    #[test]
    fn guards_refuse_large_hypercubes() {
        assert!(matches!(FullStateDistribution::uniform(21), Err(Error::Guard { d: 21, limit: 20 })));
        assert!(matches!(ExactDistribution::uniform(13), Err(Error::Guard { d: 13, limit: 12 })));
        let big = SignVector::uniform(EnsembleKind::RealSymmetric { n: 6 }, true);
        assert!(exhaustive_moments(&big, 2).is_err());
        assert!(exhaustive_moments(&big, 3).is_err());
    }

    #[test]
    fn exact_mode_preserves_mass() {
        let mut dist = ExactDistribution::delta(10, 37).unwrap();
        for _ in 0..15 {
            dist = apply_walk_operator_exact(&dist).unwrap();
            assert!(dist.mass().is_one());
        }
        let float = walk_operator_power(&FullStateDistribution::delta(10, 37).unwrap(), 15).unwrap();
        let diff = dist.to_float().probs.iter().zip(&float.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-16);
        assert!(float.probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn kernel_matches_closed_forms() {
        // d_N = 3 via RealSymmetric(2)
        let s = SignVector::uniform(EnsembleKind::RealSymmetric { n: 2 }, true);
        let k = exact_transition_kernel(&s, 2).unwrap();
        assert!((k[2] - 0.375).abs() < 1e-15);
        assert_eq!(exact_transition_kernel(&s, 0).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);

        let kind = EnsembleKind::Rectangular { n: 4, m: 3 };
        let start = SignVector::from_index(kind, 0b1010_0110_0101).unwrap();
        for dt in 0..=12 {
            let k = exact_transition_kernel(&start, dt).unwrap();
            assert!((k[dt] - prob_max_distance(12, dt).unwrap()).abs() <= 1e-13);
            for l in 0..=4 {
                let (lhs, rhs) = phi_assembly(&k, l, dt);
                assert!((lhs - rhs).abs() <= 1e-13, "dt {dt} l {l}: {lhs} vs {rhs}");
            }
            if dt <= 10 {
                let mean: f64 = k.iter().enumerate().map(|(x, p)| x as f64 * p).sum();
                assert!(mean <= dt as f64 + 1e-12);
                if dt >= 2 {
                    assert!(dt as f64 * k[dt] < mean);
                }
            }
        }
        let exact = exact_transition_kernel_rational(&start, 5).unwrap();
        assert_eq!(exact[5], prob_max_distance_exact(12, 5).unwrap());
    }

    #[test]
    fn hamming_marginal_matches_the_birth_death_chain() {
        let d = 12;
        let mut full = FullStateDistribution::delta(d, 0).unwrap();
        let mut lumped = HammingDistribution::delta(d, 0).unwrap();
        for _ in 0..=50 {
            let marginal = full.hamming_marginal(0);
            let worst = marginal.iter().zip(&lumped.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-13, "t = {}: {worst}", lumped.t);
            full = apply_walk_operator(&full).unwrap();
            lumped = evolve_steps(&lumped, 1);
        }
    }

    #[test]
    fn operator_is_self_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 9;
        let random = |rng: &mut ChaCha8Rng| FullStateDistribution { d_n: d, probs: (0..1 << d).map(|_| rng.random::<f64>()).collect() };
        let u = random(&mut rng);
        let v = random(&mut rng);
        let lhs = u.inner(&apply_walk_operator(&v).unwrap());
        let rhs = apply_walk_operator(&u).unwrap().inner(&v);
        assert!((lhs - rhs).abs() < 1e-14 * lhs.abs());
    }

    #[test]
    fn l1_decay_rate_is_the_spectral_gap() {
        let d = 12;
        let lambda1 = 1.0 - 2.0 / (d + 1) as f64;
        let mut dist = ExactDistribution::delta(d, 0).unwrap();
        let (mut ts, mut logs) = (Vec::new(), Vec::new());
        for t in 1..=20 * d {
            dist = apply_walk_operator_exact(&dist).unwrap();
            if t >= 5 * d && t % d == 0 {
                ts.push(t as f64);
                logs.push(dist.l1_from_uniform().ln());
            }
        }
        let fit = crate::stats::linear_fit(&ts, &logs, None).unwrap();
        let rel = (fit.slope / lambda1.ln() - 1.0).abs();
        assert!(rel < 0.02, "slope {} vs {}", fit.slope, lambda1.ln());
    }

    #[test]
    fn enumerated_measure_of_the_two_by_two() {
        let kind = EnsembleKind::RealSymmetric { n: 2 };
        let atoms = exact_stationary_spectral_measure(kind).unwrap();
        assert!(atoms.len() <= 8);
        assert_eq!(atoms.iter().map(|a| a.count).sum::<u64>(), 8);
        assert!((atoms.iter().map(|a| a.weight).sum::<f64>() - 1.0).abs() < 1e-15);
        for a in &atoms {
            let t: f64 = a.values.iter().map(|x| x * x).sum();
            assert!((t - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn merging_absorbs_rounding_noise() {
        let mut index = AtomIndex::default();
        let x = 0.5 * MERGE_RESOLUTION;
        index.insert(&[x - 1e-18, 1.0]);
        index.insert(&[x + 1e-18, 1.0]);
        index.insert(&[x, 1.0 + 1e-15]);
        index.insert(&[x, 2.0]);
        let atoms = index.finish(4);
        assert_eq!(atoms.iter().map(|a| a.count).collect::<Vec<_>>(), vec![3, 1]);
    }

    #[test]
    fn sampler_agrees_with_enumeration_at_small_size() {
        let kind = EnsembleKind::ImaginaryAntisymmetric { n: 4 };
        let atoms = exact_stationary_spectral_measure(kind).unwrap();
        let cmp = compare_sampler(kind, &atoms, 20_000, 200, 6, 5).unwrap();
        assert_eq!(cmp.unmatched, 0);
        assert!(cmp.tv < 0.03, "{cmp:?}");
    }

    #[test]
    fn one_step_mean_increment_is_minus_two_b_over_d_plus_one() {
        let kind = EnsembleKind::RealSymmetric { n: 4 };
        let anchor = SignVector::from_index(kind, 0b10_1101_0011).unwrap();
        let exact = exhaustive_moments(&anchor, 1).unwrap();
        let b = ScaledMatrix::realize(&anchor);
        let expect = b.entries.transpose() * (-2.0 / 11.0);
        let worst = exact.mean_increment.iter().zip(expect.as_slice()).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-15);
        let trace: f64 = exact.drift.iter().sum::<f64>() * exact.d_eta;
        assert!((trace - b.entries.trace() * (-2.0 / 11.0)).abs() < 1e-14);
    }

    #[test]
    fn one_step_monte_carlo_within_three_standard_errors() {
        use crate::moments::{estimate_at, MomentConfig};
        let kind = EnsembleKind::RealSymmetric { n: 4 };
        let anchor = SignVector::from_index(kind, 0b01_1100_1010).unwrap();
        let exact = exhaustive_moments(&anchor, 1).unwrap();
        let cfg = MomentConfig { dt: Some(1), ..MomentConfig::new(kind, 40_000, 12) };
        let est = estimate_at(&cfg, &anchor).unwrap();
        for nu in 0..4 {
            assert!((est.drift[nu] - exact.drift[nu]).abs() <= 3.0 * est.drift_se[nu], "drift {nu}");
            assert!((est.diffusion[nu] - exact.second_moment(nu, nu)).abs() <= 3.0 * est.diffusion_se[nu], "diffusion {nu}");
        }
    }

    #[test]
    fn two_step_enumeration_matches_distance_assembly() {
        for kind in [EnsembleKind::RealSymmetric { n: 4 }, EnsembleKind::Rectangular { n: 4, m: 3 }] {
            let anchor = SignVector::from_index(kind, 0b01_1010_0101).unwrap();
            let exact = exhaustive_moments(&anchor, 2).unwrap();
            let assembled = two_step_second_moments_by_distance(&anchor).unwrap();
            let worst = exact.second.iter().zip(&assembled).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-13, "{kind}: {worst}");
        }
    }

    #[test]
    fn cache_round_trips_and_rejects_other_versions() {
        let dir = tempfile::tempdir().unwrap();
        let cache = OracleCache::new(dir.path());
        let kind = EnsembleKind::ImaginaryAntisymmetric { n: 4 };
        let fresh = cache.measure(kind).unwrap();
        assert_eq!(cache.measure(kind).unwrap(), fresh);
        let k = cache.kernel(kind, 3).unwrap();
        assert_eq!(cache.kernel(kind, 3).unwrap(), k);

        let path = cache.path(kind, 3, Payload::Kernel);
        let mut bytes = fs::read(&path).unwrap();
        bytes[8] = 99;
        fs::write(&path, bytes).unwrap();
        assert_eq!(cache.kernel(kind, 3).unwrap(), k);
        assert!(fs::read(&path).unwrap().starts_with(&OracleCache::header(kind, 3, Payload::Kernel)));
    }
}
