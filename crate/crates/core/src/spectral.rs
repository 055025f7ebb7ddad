//! Spectral vectors of scaled matrices and the eigenvector/gap diagnostics
//! the perturbative moment analysis relies on.

use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::ensemble::{EnsembleKind, ScaledMatrix};
use crate::error::{Error, Result};

/// Absolute threshold below which the middle eigenvalue of an odd-`N`
/// antisymmetric matrix counts as the zero mode.
pub const ZERO_MODE_TOL: f64 = 1e-10;

/// Spectra with a gap below this are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Ascending eigenvalues of `B̄`, `H` or `W = B̄ᵀB̄`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub kind: EnsembleKind,
    pub values: Vec<f64>,
    /// For the antisymmetric kind, `pair_index[i]` is the index of `-values[i]`.
    pub pair_index: Option<Vec<usize>>,
    /// `Σλ²` for square kinds, `Σλ` for the rectangular kind.
    pub trace2: f64,
}

impl Spectrum {
    pub fn from_values(kind: EnsembleKind, mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let trace2 = match kind {
            EnsembleKind::Rectangular { .. } => values.iter().sum(),
            _ => values.iter().map(|x| x * x).sum(),
        };
        let pair_index = matches!(kind, EnsembleKind::ImaginaryAntisymmetric { .. })
            .then(|| (0..values.len()).rev().collect());
        Self { kind, values, pair_index, trace2 }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Smallest consecutive difference (`+inf` for a single value).
    pub fn min_gap(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn is_simple(&self) -> bool {
        self.min_gap() > DEGENERACY_TOL
    }

    /// Index of the zero mode of an odd-`N` antisymmetric spectrum.
    pub fn zero_mode(&self) -> Option<usize> {
        match self.kind {
            EnsembleKind::ImaginaryAntisymmetric { n } if n % 2 == 1 => {
                let mid = n / 2;
                (self.values[mid].abs() <= ZERO_MODE_TOL).then_some(mid)
            }
            _ => None,
        }
    }

    /// Index of the first strictly positive member of the `±λ` pairs.
    pub fn positive_half_start(&self) -> usize {
        self.values.len().div_ceil(2)
    }

    /// The positive half `λ_1 < … < λ_{⌊N/2⌋}` of an antisymmetric spectrum.
    pub fn positive_half(&self) -> &[f64] {
        &self.values[self.positive_half_start()..]
    }

    /// Checks the ensemble's structural invariants (ordering, trace, pairing,
    /// zero mode, positivity).
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |what: String| Err(Error::Numerical { message: what, matrix_hash: 0 });
        if self.values.windows(2).any(|w| w[1] < w[0]) {
            return fail("spectrum not ascending".into());
        }
        let target = self.kind.trace_constant();
        if (self.trace2 - target).abs() > 1e-10 * target {
            return fail(format!("trace {} differs from {target}", self.trace2));
        }
        match self.kind {
            EnsembleKind::ImaginaryAntisymmetric { n } => {
                let scale = self.values.iter().fold(1.0f64, |a, x| a.max(x.abs()));
                for i in 0..n {
                    if (self.values[i] + self.values[n - 1 - i]).abs() > 1e-10 * scale {
                        return fail(format!("spectrum not symmetric at index {i}"));
                    }
                }
                let zeros = self.values.iter().filter(|x| x.abs() <= ZERO_MODE_TOL).count();
                if zeros != n % 2 {
                    return fail(format!("{zeros} zero modes for N = {n}"));
                }
            }
            EnsembleKind::Rectangular { .. } => {
                if self.values[0] < -1e-12 {
                    return fail(format!("negative W eigenvalue {}", self.values[0]));
                }
            }
            EnsembleKind::RealSymmetric { .. } => {}
        }
        Ok(())
    }
}

/// Orthonormal eigenvectors aligned with [`Spectrum::values`]. The
/// antisymmetric kind has complex eigenvectors, stored as real and
/// imaginary parts.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub real: DMatrix<f64>,
    pub imag: Option<DMatrix<f64>>,
    pub sup_norms: Vec<f64>,
}

impl EigenBasis {
    pub fn new(real: DMatrix<f64>, imag: Option<DMatrix<f64>>) -> Self {
        let sup_norms = (0..real.ncols())
            .map(|j| {
                (0..real.nrows())
                    .map(|p| {
                        let im = imag.as_ref().map_or(0.0, |m| m[(p, j)]);
                        real[(p, j)].hypot(im)
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        Self { real, imag, sup_norms }
    }

    pub fn dim(&self) -> usize {
        self.real.nrows()
    }

    pub fn count(&self) -> usize {
        self.real.ncols()
    }

    /// Eigenvectors as one complex matrix (zero imaginary part for real kinds).
    pub fn complex(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.dim(), self.count(), |p, j| {
            Complex64::new(self.real[(p, j)], self.imag.as_ref().map_or(0.0, |m| m[(p, j)]))
        })
    }

    /// `max |VᴴV - I|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let v = self.complex();
        let gram = v.adjoint() * &v;
        let mut worst = 0.0f64;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

fn matrix_hash(m: &ScaledMatrix) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for x in m.entries.iter() {
        x.to_bits().hash(&mut h);
    }
    h.finish()
}

fn hermitian(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|x| Complex64::new(0.0, x))
}

fn gram(m: &ScaledMatrix) -> DMatrix<f64> {
    let w = m.entries.transpose() * &m.entries;
    // exact symmetry keeps the eigensolver on the symmetric path
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| if i <= j { w[(i, j)] } else { w[(j, i)] })
}

fn finite_or_fail(values: &[f64], m: &ScaledMatrix) -> Result<()> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical {
            message: format!("non-finite eigenvalue for {}", m.kind),
            matrix_hash: matrix_hash(m),
        })
    }
}

/// Eigenvalues only; cheaper than [`spectrum`] when no eigenvectors are needed.
pub fn eigenvalues(m: &ScaledMatrix) -> Result<Spectrum> {
    let values: Vec<f64> = match m.kind {
        EnsembleKind::RealSymmetric { .. } => m.entries.symmetric_eigenvalues().iter().copied().collect(),
        EnsembleKind::ImaginaryAntisymmetric { .. } => {
            hermitian(&m.entries).symmetric_eigenvalues().iter().copied().collect()
        }
        EnsembleKind::Rectangular { .. } => gram(m).symmetric_eigenvalues().iter().copied().collect(),
    };
    finite_or_fail(&values, m)?;
    Ok(Spectrum::from_values(m.kind, values))
}

/// Full eigendecomposition, sorted ascending; ties keep their original order.
pub fn spectrum(m: &ScaledMatrix) -> Result<(Spectrum, EigenBasis)> {
    let (values, real, imag) = match m.kind {
        EnsembleKind::RealSymmetric { .. } => {
            let eig = SymmetricEigen::new(m.entries.clone());
            (eig.eigenvalues.iter().copied().collect::<Vec<_>>(), eig.eigenvectors, None)
        }
        EnsembleKind::Rectangular { .. } => {
            let eig = SymmetricEigen::new(gram(m));
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors, None)
        }
        EnsembleKind::ImaginaryAntisymmetric { .. } => {
            let eig = SymmetricEigen::new(hermitian(&m.entries));
            let re = eig.eigenvectors.map(|z| z.re);
            let im = eig.eigenvectors.map(|z| z.im);
            (eig.eigenvalues.iter().copied().collect(), re, Some(im))
        }
    };
    finite_or_fail(&values, m)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted: Vec<f64> = order.iter().map(|&j| values[j]).collect();
    let pick = |v: &DMatrix<f64>| DMatrix::from_fn(v.nrows(), order.len(), |p, j| v[(p, order[j])]);
    let basis = EigenBasis::new(pick(&real), imag.as_ref().map(pick));
    Ok((Spectrum::from_values(m.kind, sorted), basis))
}

/// Per-eigenvector localization measures.
#[derive(Debug, Clone, Serialize)]
pub struct DelocalizationReport {
    pub sup_norm: Vec<f64>,
    pub participation: Vec<f64>,
    /// Indices whose sup norm exceeds `threshold * sqrt(ln N / N)`.
    pub flagged: Vec<usize>,
    pub reference: f64,
}

pub fn delocalization_report(basis: &EigenBasis, threshold: f64) -> DelocalizationReport {
    let n = basis.dim() as f64;
    let reference = threshold * (n.ln().max(0.0) / n).sqrt();
    let participation = (0..basis.count())
        .map(|j| {
            let s: f64 = (0..basis.dim())
                .map(|p| {
                    let im = basis.imag.as_ref().map_or(0.0, |m| m[(p, j)]);
                    let a2 = basis.real[(p, j)].powi(2) + im * im;
                    a2 * a2
                })
                .sum();
            1.0 / s
        })
        .collect();
    let flagged = basis
        .sup_norms
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > reference)
        .map(|(j, _)| j)
        .collect();
    DelocalizationReport { sup_norm: basis.sup_norms.clone(), participation, flagged, reference }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub min_gap: f64,
    pub mean_gap: f64,
    pub gaps: Vec<f64>,
}

pub fn gap_report(values: &[f64]) -> Result<GapReport> {
    if values.len() < 2 {
        return Err(Error::Contract("gap report needs at least two eigenvalues".into()));
    }
    let gaps: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(GapReport {
        min_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        mean_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
        gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::SignVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn closed_form_small_spectra() {
        let m = ScaledMatrix::realize(&SignVector::uniform(EnsembleKind::RealSymmetric { n: 2 }, true));
        let (s, _) = spectrum(&m).unwrap();
        let h = 0.5f64.sqrt();
        assert!(close(s.values[0], 1.0 - h, 1e-14) && close(s.values[1], 1.0 + h, 1e-14));

        let m = ScaledMatrix::realize(&SignVector::uniform(
            EnsembleKind::ImaginaryAntisymmetric { n: 3 },
            true,
        ));
        let (s, basis) = spectrum(&m).unwrap();
        for (x, e) in s.values.iter().zip([-1.0, 0.0, 1.0]) {
            assert!(close(*x, e, 1e-14), "{:?}", s.values);
        }
        assert!(basis.imag.is_some());
        assert_eq!(s.zero_mode(), Some(1));
        s.check_invariants().unwrap();

        let kind = EnsembleKind::Rectangular { n: 2, m: 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = eigenvalues(&ScaledMatrix::realize(&SignVector::random(kind, &mut rng))).unwrap();
        assert!(close(s.values[0], 1.0, 1e-15));
    }

    #[test]
    fn decomposition_reconstructs_the_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3, 10, 60] {
            let m = ScaledMatrix::realize(&SignVector::random(EnsembleKind::RealSymmetric { n }, &mut rng));
            let (s, b) = spectrum(&m).unwrap();
            let rebuilt = &b.real * DMatrix::from_diagonal(&s.values.clone().into()) * b.real.transpose();
            assert!((rebuilt - &m.entries).amax() <= 1e-9);
            assert!(b.orthonormality_residual() <= 1e-10);
        }
    }

    #[test]
    fn antisymmetric_eigenvectors_diagonalize_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = ScaledMatrix::realize(&SignVector::random(
            EnsembleKind::ImaginaryAntisymmetric { n: 9 },
            &mut rng,
        ));
        let (s, b) = spectrum(&m).unwrap();
        let v = b.complex();
        let h = hermitian(&m.entries);
        let d = v.adjoint() * h * &v;
        for i in 0..9 {
            for j in 0..9 {
                let target = if i == j { s.values[i] } else { 0.0 };
                assert!((d[(i, j)] - Complex64::new(target, 0.0)).norm() < 1e-10);
            }
        }
        assert!(b.orthonormality_residual() <= 1e-10);
    }

    #[test]
    fn invariants_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in [
            EnsembleKind::RealSymmetric { n: 12 },
            EnsembleKind::ImaginaryAntisymmetric { n: 11 },
            EnsembleKind::ImaginaryAntisymmetric { n: 10 },
            EnsembleKind::Rectangular { n: 12, m: 7 },
        ] {
            for _ in 0..1000 {
                let s = eigenvalues(&ScaledMatrix::realize(&SignVector::random(kind, &mut rng))).unwrap();
                s.check_invariants().unwrap();
                if let EnsembleKind::ImaginaryAntisymmetric { .. } = kind {
                    let mut neg: Vec<f64> = s.values.iter().map(|x| -x).collect();
                    neg.sort_by(f64::total_cmp);
                    assert!(neg.iter().zip(&s.values).all(|(a, b)| (a - b).abs() <= 1e-10));
                }
            }
        }
    }

    #[test]
    fn delocalization_extremes() {
        let n = 16;
        let id = EigenBasis::new(DMatrix::identity(n, n), None);
        let r = delocalization_report(&id, 1.0);
        assert!(r.sup_norm.iter().all(|&s| s == 1.0));
        assert!(r.participation.iter().all(|&p| close(p, 1.0, 1e-12)));
        assert_eq!(r.flagged.len(), n);

        let u = EigenBasis::new(DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt()), None);
        let r = delocalization_report(&u, 1.0);
        assert!(close(r.sup_norm[0], 0.25, 1e-15));
        assert!(close(r.participation[0], n as f64, 1e-9));
    }

    #[test]
    fn gap_examples() {
        let r = gap_report(&[0.0, 1.0, 3.0]).unwrap();
        assert_eq!(r.min_gap, 1.0);
        assert_eq!(r.mean_gap, 1.5);
        assert!(gap_report(&[1.0]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = ScaledMatrix::realize(&SignVector::random(
            EnsembleKind::ImaginaryAntisymmetric { n: 5 },
            &mut rng,
        ));
        let g = gap_report(&eigenvalues(&m).unwrap().values).unwrap().gaps;
        for i in 0..g.len() {
            assert!(close(g[i], g[g.len() - 1 - i], 1e-12));
        }
    }

    #[test]
    fn bulk_spacing_and_delocalization_at_n200() {
        let n = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut medians = Vec::new();
        for _ in 0..3 {
            let m = ScaledMatrix::realize(&SignVector::random(EnsembleKind::RealSymmetric { n }, &mut rng));
            let (s, b) = spectrum(&m).unwrap();
            let bulk = &s.values[n / 5..n - n / 5];
            let g = gap_report(bulk).unwrap();
            let nf = n as f64;
            assert!(g.mean_gap >= 2.0 / nf && g.mean_gap <= 6.0 / nf, "mean gap {}", g.mean_gap);
            let mut sup = b.sup_norms.clone();
            sup.sort_by(f64::total_cmp);
            medians.push(sup[n / 2]);
        }
        let bound = 5.0 * ((n as f64).ln() / n as f64).sqrt();
        assert!(medians.iter().all(|&m| m <= bound), "{medians:?} vs {bound}");
    }
}
