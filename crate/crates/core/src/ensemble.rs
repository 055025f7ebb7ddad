//! The three Bernoulli ensembles as bijections between hypercube vertices
//! (sign vectors) and scaled matrices.
//!
//! Independent entries are enumerated row-major: `p <= q` for the real
//! symmetric ensemble (diagonal included), `p < q` for the imaginary
//! antisymmetric ensemble and every `(p, q)` for the rectangular ensemble.
//! Every entry carries the `1/sqrt(N)` scaling; diagonal entries of the real
//! symmetric ensemble are `±sqrt(2/N)`.
//!
//! Imaginary antisymmetric matrices `H = iA` are stored through their real
//! antisymmetric coefficient matrix `A`.

use std::fmt;
use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which Bernoulli ensemble, and its dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnsembleKind {
    /// `N x N` real symmetric, random diagonal.
    RealSymmetric { n: usize },
    /// `N x N` Hermitian with purely imaginary antisymmetric entries.
    ImaginaryAntisymmetric { n: usize },
    /// `N x M` real, `N >= M`; spectra are those of `W = BᵀB`.
    Rectangular { n: usize, m: usize },
}

impl EnsembleKind {
    pub fn real_symmetric(n: usize) -> Result<Self> {
        Self::RealSymmetric { n }.validated()
    }

    pub fn antisymmetric(n: usize) -> Result<Self> {
        Self::ImaginaryAntisymmetric { n }.validated()
    }

    pub fn rectangular(n: usize, m: usize) -> Result<Self> {
        Self::Rectangular { n, m }.validated()
    }

    /// Checks the dimension constraints and returns `self`.
    pub fn validated(self) -> Result<Self> {
        match self {
            Self::RealSymmetric { n } | Self::ImaginaryAntisymmetric { n } if n < 2 => Err(
                Error::Config(format!("square ensembles need N >= 2, got N = {n}")),
            ),
            Self::Rectangular { n, m } if m < 1 || m > n => Err(Error::Config(format!(
                "rectangular ensemble needs N >= M >= 1, got N = {n}, M = {m}"
            ))),
            _ => Ok(self),
        }
    }

    /// Row count `N`.
    pub fn n(&self) -> usize {
        match *self {
            Self::RealSymmetric { n }
            | Self::ImaginaryAntisymmetric { n }
            | Self::Rectangular { n, .. } => n,
        }
    }

    /// Column count (`N` for square kinds).
    pub fn cols(&self) -> usize {
        match *self {
            Self::Rectangular { m, .. } => m,
            _ => self.n(),
        }
    }

    /// Length of the spectral vector: `N` for square kinds, `M` for rectangular.
    pub fn spectrum_len(&self) -> usize {
        self.cols()
    }

    /// Number of independent ±1 entries, the hypercube dimension `d_N`.
    pub fn dimension(&self) -> usize {
        match *self {
            Self::RealSymmetric { n } => n * (n + 1) / 2,
            Self::ImaginaryAntisymmetric { n } => n * (n - 1) / 2,
            Self::Rectangular { n, m } => n * m,
        }
    }

    /// Value of the conserved trace: `Tr(B̄²)`, `Tr(H†H)` or `Tr(BᵀB)`.
    pub fn trace_constant(&self) -> f64 {
        match *self {
            Self::Rectangular { m, .. } => m as f64,
            _ => 2.0 * self.dimension() as f64 / self.n() as f64,
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            Self::RealSymmetric { .. } => "realsym",
            Self::ImaginaryAntisymmetric { .. } => "antisym",
            Self::Rectangular { .. } => "rect",
        }
    }

    /// Maps a flat index to its matrix position `(p, q)`.
    pub fn index_to_entry(&self, i: usize) -> Result<(usize, usize)> {
        let d = self.dimension();
        if i >= d {
            return Err(Error::Contract(format!("flat index {i} out of range 0..{d}")));
        }
        Ok(match *self {
            Self::RealSymmetric { n } => triangle_entry(n, i, 0),
            Self::ImaginaryAntisymmetric { n } => triangle_entry(n, i, 1),
            Self::Rectangular { m, .. } => (i / m, i % m),
        })
    }

    /// Inverse of [`index_to_entry`](Self::index_to_entry). Accepts either
    /// orientation of a symmetric pair.
    pub fn entry_to_index(&self, p: usize, q: usize) -> Result<usize> {
        let bad = || Error::Contract(format!("({p}, {q}) is not an independent entry of {self}"));
        match *self {
            Self::RealSymmetric { n } => {
                let (p, q) = (p.min(q), p.max(q));
                if q >= n {
                    return Err(bad());
                }
                Ok(triangle_index(n, p, q, 0))
            }
            Self::ImaginaryAntisymmetric { n } => {
                let (p, q) = (p.min(q), p.max(q));
                if q >= n || p == q {
                    return Err(bad());
                }
                Ok(triangle_index(n, p, q, 1))
            }
            Self::Rectangular { n, m } => {
                if p >= n || q >= m {
                    return Err(bad());
                }
                Ok(p * m + q)
            }
        }
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RealSymmetric { n } => write!(f, "RealSymmetric(N={n})"),
            Self::ImaginaryAntisymmetric { n } => write!(f, "ImaginaryAntisymmetric(N={n})"),
            Self::Rectangular { n, m } => write!(f, "Rectangular(N={n}, M={m})"),
        }
    }
}

// Row-major upper triangle; `offset` 0 includes the diagonal, 1 excludes it.
fn triangle_entry(n: usize, mut i: usize, offset: usize) -> (usize, usize) {
    let mut p = 0;
    loop {
        let row = n - p - offset;
        if i < row {
            return (p, p + offset + i);
        }
        i -= row;
        p += 1;
    }
}

fn triangle_index(n: usize, p: usize, q: usize, offset: usize) -> usize {
    // rows r < p hold n - offset - r entries each
    p * (n - offset) - p * p.saturating_sub(1) / 2 + (q - p - offset)
}

/// A vertex of the `d_N`-dimensional hypercube: one sign per independent
/// entry, packed 64 per word (bit set means `+1`).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SignVector {
    kind: EnsembleKind,
    words: Vec<u64>,
}

impl SignVector {
    /// All entries `+1` (`positive = true`) or all `-1`.
    pub fn uniform(kind: EnsembleKind, positive: bool) -> Self {
        let d = kind.dimension();
        let mut words = vec![if positive { u64::MAX } else { 0 }; d.div_ceil(64)];
        mask_tail(&mut words, d);
        Self { kind, words }
    }

    /// Uniformly random vertex.
    pub fn random<R: Rng + ?Sized>(kind: EnsembleKind, rng: &mut R) -> Self {
        let d = kind.dimension();
        let mut words: Vec<u64> = (0..d.div_ceil(64)).map(|_| rng.random()).collect();
        mask_tail(&mut words, d);
        Self { kind, words }
    }

    /// Vertex whose bit `i` is bit `i` of `index`; used to enumerate `2^d_N` states.
    pub fn from_index(kind: EnsembleKind, index: u64) -> Result<Self> {
        let d = kind.dimension();
        if d > 64 || (d < 64 && index >> d != 0) {
            return Err(Error::Contract(format!("state index {index} does not fit d_N = {d}")));
        }
        Ok(Self { kind, words: vec![index] })
    }

    /// Inverse of [`from_index`](Self::from_index); `None` when `d_N > 64`.
    pub fn to_index(&self) -> Option<u64> {
        (self.words.len() == 1).then(|| self.words[0])
    }

    /// Builds a vector from explicit signs (`true` = `+1`).
    pub fn from_signs(kind: EnsembleKind, signs: &[bool]) -> Result<Self> {
        let d = kind.dimension();
        if signs.len() != d {
            return Err(Error::Contract(format!("expected {d} signs, got {}", signs.len())));
        }
        let mut v = Self::uniform(kind, false);
        for (i, &s) in signs.iter().enumerate() {
            if s {
                v.words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(v)
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.kind.dimension()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `true` when entry `i` is `+1`.
    #[inline]
    pub fn is_positive(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    /// Sign of entry `i` as `±1.0`.
    #[inline]
    pub fn sign(&self, i: usize) -> f64 {
        if self.is_positive(i) {
            1.0
        } else {
            -1.0
        }
    }

    /// Flips entry `i` in place.
    #[inline]
    pub fn flip(&mut self, i: usize) {
        debug_assert!(i < self.len());
        self.words[i / 64] ^= 1 << (i % 64);
    }

    pub fn flipped(&self, i: usize) -> Result<Self> {
        self.check_index(i)?;
        let mut out = self.clone();
        out.flip(i);
        Ok(out)
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::Contract(format!("flat index {i} out of range 0..{}", self.len())));
        }
        Ok(())
    }

    /// Number of `+1` entries; the Hamming distance from the all-`-1` origin.
    pub fn count_positive(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// The `d_N` Hamming-1 neighbours.
    pub fn neighbours(&self) -> impl Iterator<Item = SignVector> + '_ {
        (0..self.len()).map(move |i| {
            let mut v = self.clone();
            v.flip(i);
            v
        })
    }

    /// Hex encoding of the bit string `b_0 b_1 … b_{d-1}` (1 = `+1`), most
    /// significant bit of the first digit holding index 0, zero-padded to a
    /// whole number of digits.
    pub fn to_hex(&self) -> String {
        let d = self.len();
        (0..d.div_ceil(4))
            .map(|digit| {
                let mut nibble = 0u32;
                for k in 0..4 {
                    let i = digit * 4 + k;
                    if i < d && self.is_positive(i) {
                        nibble |= 8 >> k;
                    }
                }
                char::from_digit(nibble, 16).expect("nibble < 16")
            })
            .collect()
    }

    pub fn from_hex(kind: EnsembleKind, hex: &str) -> Result<Self> {
        let d = kind.dimension();
        if hex.len() != d.div_ceil(4) {
            return Err(Error::Contract(format!(
                "hex string has {} digits, {} expected for d_N = {d}",
                hex.len(),
                d.div_ceil(4)
            )));
        }
        let mut v = Self::uniform(kind, false);
        for (digit, c) in hex.chars().enumerate() {
            let nibble = c
                .to_digit(16)
                .ok_or_else(|| Error::Contract(format!("invalid hex digit {c:?}")))?;
            for k in 0..4 {
                let i = digit * 4 + k;
                if nibble & (8 >> k) != 0 {
                    if i >= d {
                        return Err(Error::Contract("nonzero padding bits in hex string".into()));
                    }
                    v.flip(i);
                }
            }
        }
        Ok(v)
    }

    /// Stable 64-bit fingerprint, reported alongside numerical failures.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }
}

impl fmt::Debug for SignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SignVector({}, {})", self.kind, self.to_hex())
    }
}

fn mask_tail(words: &mut [u64], d: usize) {
    if !d.is_multiple_of(64) {
        if let Some(last) = words.last_mut() {
            *last &= (1u64 << (d % 64)) - 1;
        }
    }
}

/// A realized, scaled matrix of one of the ensembles.
///
/// For [`EnsembleKind::ImaginaryAntisymmetric`] `entries` holds the real
/// antisymmetric `A` with `H = iA`; for rectangular kinds it is `N x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMatrix {
    pub kind: EnsembleKind,
    pub entries: DMatrix<f64>,
}

impl ScaledMatrix {
    pub fn zeros(kind: EnsembleKind) -> Self {
        Self { kind, entries: DMatrix::zeros(kind.n(), kind.cols()) }
    }

    /// Builds the scaled matrix whose independent entries carry `signs`.
    pub fn realize(signs: &SignVector) -> Self {
        let kind = signs.kind();
        let n = kind.n();
        let off = (1.0 / n as f64).sqrt();
        let mut entries = DMatrix::zeros(n, kind.cols());
        let mut i = 0;
        match kind {
            EnsembleKind::RealSymmetric { .. } => {
                let diag = (2.0 / n as f64).sqrt();
                for p in 0..n {
                    entries[(p, p)] = signs.sign(i) * diag;
                    i += 1;
                    for q in p + 1..n {
                        let v = signs.sign(i) * off;
                        entries[(p, q)] = v;
                        entries[(q, p)] = v;
                        i += 1;
                    }
                }
            }
            EnsembleKind::ImaginaryAntisymmetric { .. } => {
                for p in 0..n {
                    for q in p + 1..n {
                        let v = signs.sign(i) * off;
                        entries[(p, q)] = v;
                        entries[(q, p)] = -v;
                        i += 1;
                    }
                }
            }
            EnsembleKind::Rectangular { m, .. } => {
                for p in 0..n {
                    for q in 0..m {
                        entries[(p, q)] = signs.sign(i) * off;
                        i += 1;
                    }
                }
            }
        }
        Self { kind, entries }
    }

    /// `realize(flip(signs, i)) - realize(signs)`.
    pub fn flip_delta(signs: &SignVector, i: usize) -> Result<Self> {
        signs.check_index(i)?;
        let kind = signs.kind();
        let n = kind.n();
        let (p, q) = kind.index_to_entry(i)?;
        let diagonal = matches!(kind, EnsembleKind::RealSymmetric { .. }) && p == q;
        let scale = if diagonal { (2.0 / n as f64).sqrt() } else { (1.0 / n as f64).sqrt() };
        let value = -2.0 * signs.sign(i) * scale;
        let mut delta = Self::zeros(kind);
        delta.entries[(p, q)] = value;
        match kind {
            EnsembleKind::RealSymmetric { .. } => delta.entries[(q, p)] = value,
            EnsembleKind::ImaginaryAntisymmetric { .. } => delta.entries[(q, p)] = -value,
            EnsembleKind::Rectangular { .. } => {}
        }
        Ok(delta)
    }

    /// Flips entry `i` in place, given the sign vector *before* the flip.
    pub fn apply_flip(&mut self, signs: &SignVector, i: usize) -> Result<()> {
        let delta = Self::flip_delta(signs, i)?;
        self.entries += delta.entries;
        Ok(())
    }

    /// `Tr(B̄ᵀB̄)`; equals the ensemble's trace constant for every vertex.
    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&x| x == 0.0)
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        if self.entries.shape() != other.entries.shape() {
            return Err(Error::Contract("matrix shapes differ".into()));
        }
        Ok(Self { kind: self.kind, entries: &self.entries + &other.entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kinds() -> Vec<EnsembleKind> {
        vec![
            EnsembleKind::RealSymmetric { n: 5 },
            EnsembleKind::ImaginaryAntisymmetric { n: 6 },
            EnsembleKind::Rectangular { n: 4, m: 3 },
        ]
    }

    #[test]
    fn dimensions() {
        assert_eq!(EnsembleKind::real_symmetric(50).unwrap().dimension(), 1275);
        assert_eq!(EnsembleKind::antisymmetric(4).unwrap().dimension(), 6);
        assert_eq!(EnsembleKind::rectangular(3, 2).unwrap().dimension(), 6);
        assert!(EnsembleKind::real_symmetric(1).is_err());
        assert!(EnsembleKind::antisymmetric(0).is_err());
        assert!(EnsembleKind::rectangular(2, 3).is_err());
        assert!(EnsembleKind::rectangular(2, 0).is_err());
    }

    #[test]
    fn index_examples() {
        let rs = EnsembleKind::RealSymmetric { n: 2 };
        assert_eq!(rs.index_to_entry(0).unwrap(), (0, 0));
        assert_eq!(rs.index_to_entry(1).unwrap(), (0, 1));
        assert_eq!(rs.index_to_entry(2).unwrap(), (1, 1));
        assert!(rs.index_to_entry(3).is_err());
        let rect = EnsembleKind::Rectangular { n: 3, m: 2 };
        assert_eq!(rect.index_to_entry(3).unwrap(), (1, 1));
    }

    #[test]
    fn index_round_trip() {
        for kind in [
            EnsembleKind::RealSymmetric { n: 7 },
            EnsembleKind::ImaginaryAntisymmetric { n: 7 },
            EnsembleKind::Rectangular { n: 7, m: 4 },
        ] {
            for i in 0..kind.dimension() {
                let (p, q) = kind.index_to_entry(i).unwrap();
                assert_eq!(kind.entry_to_index(p, q).unwrap(), i, "{kind} index {i}");
            }
        }
        let anti = EnsembleKind::ImaginaryAntisymmetric { n: 4 };
        assert!(anti.entry_to_index(2, 2).is_err());
    }

    #[test]
    fn realize_examples() {
        let h = 0.5f64.sqrt();
        let rs = ScaledMatrix::realize(&SignVector::uniform(EnsembleKind::RealSymmetric { n: 2 }, true));
        assert_eq!(rs.entries, DMatrix::from_row_slice(2, 2, &[1.0, h, h, 1.0]));

        let third = (1.0f64 / 3.0).sqrt();
        let an = ScaledMatrix::realize(&SignVector::uniform(
            EnsembleKind::ImaginaryAntisymmetric { n: 3 },
            true,
        ));
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, -1.0, 0.0, 1.0, -1.0, -1.0, 0.0]) * third;
        assert_eq!(an.entries, expected);

        let kind = EnsembleKind::Rectangular { n: 2, m: 1 };
        let col = ScaledMatrix::realize(&SignVector::from_signs(kind, &[true, false]).unwrap());
        assert_eq!(col.entries, DMatrix::from_column_slice(2, 1, &[h, -h]));
    }

    #[test]
    fn flip_delta_examples() {
        let s = SignVector::uniform(EnsembleKind::RealSymmetric { n: 2 }, true);
        let d = ScaledMatrix::flip_delta(&s, 0).unwrap();
        assert_eq!(d.entries, DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 0.0]));
        let d = ScaledMatrix::flip_delta(&s, 1).unwrap();
        let v = -2.0 * 0.5f64.sqrt();
        assert_eq!(d.entries, DMatrix::from_row_slice(2, 2, &[0.0, v, v, 0.0]));
        assert!(ScaledMatrix::flip_delta(&s, 3).is_err());
    }

    #[test]
    fn double_flip_cancels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in kinds() {
            let s = SignVector::random(kind, &mut rng);
            for i in 0..kind.dimension() {
                let once = s.flipped(i).unwrap();
                let d1 = ScaledMatrix::flip_delta(&s, i).unwrap();
                let d2 = ScaledMatrix::flip_delta(&once, i).unwrap();
                assert!(d1.sum(&d2).unwrap().is_zero());
            }
        }
    }

    #[test]
    fn trace_constraint_holds_for_random_vertices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [
            EnsembleKind::RealSymmetric { n: 9 },
            EnsembleKind::ImaginaryAntisymmetric { n: 9 },
            EnsembleKind::Rectangular { n: 9, m: 4 },
        ] {
            let target = kind.trace_constant();
            for _ in 0..1000 {
                let m = ScaledMatrix::realize(&SignVector::random(kind, &mut rng));
                assert!((m.frobenius_sq() - target).abs() <= 1e-12 * target);
            }
        }
        assert_eq!(EnsembleKind::RealSymmetric { n: 9 }.trace_constant(), 10.0);
        assert_eq!(EnsembleKind::ImaginaryAntisymmetric { n: 9 }.trace_constant(), 8.0);
    }

    #[test]
    fn neighbour_count_and_distance() {
        let kind = EnsembleKind::RealSymmetric { n: 4 };
        let s = SignVector::uniform(kind, false);
        let ns: Vec<_> = s.neighbours().collect();
        assert_eq!(ns.len(), kind.dimension());
        assert!(ns.iter().all(|n| n.hamming(&s) == 1));
        assert_eq!(s.hamming(&s), 0);
    }

    #[test]
    fn hex_layout() {
        let kind = EnsembleKind::Rectangular { n: 3, m: 2 };
        let v = SignVector::from_signs(kind, &[true, false, false, false, false, true]).unwrap();
        assert_eq!(v.to_hex(), "84");
        assert_eq!(SignVector::from_hex(kind, "84").unwrap(), v);
        assert!(SignVector::from_hex(kind, "85").is_err());
        assert!(SignVector::from_hex(kind, "8").is_err());
    }

    #[test]
    fn state_index_round_trip() {
        let kind = EnsembleKind::RealSymmetric { n: 4 };
        for idx in [0u64, 1, 513, 1023] {
            let v = SignVector::from_index(kind, idx).unwrap();
            assert_eq!(v.to_index(), Some(idx));
            assert_eq!(v.count_positive(), idx.count_ones() as usize);
        }
        assert!(SignVector::from_index(kind, 1024).is_err());
    }

    proptest! {
        #[test]
        fn neighbour_sum_is_minus_twice_the_matrix(seed in any::<u64>(), which in 0usize..3) {
            let kind = kinds()[which];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = SignVector::random(kind, &mut rng);
            let b = ScaledMatrix::realize(&s);
            let mut total = ScaledMatrix::zeros(kind);
            for i in 0..kind.dimension() {
                total = total.sum(&ScaledMatrix::flip_delta(&s, i).unwrap()).unwrap();
            }
            let err = (&total.entries + 2.0 * &b.entries).amax();
            prop_assert!(err <= 1e-12 * b.entries.amax());
        }

        #[test]
        fn flip_round_trip_is_bit_exact(seed in any::<u64>(), which in 0usize..3, raw in any::<usize>()) {
            let kind = kinds()[which];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = SignVector::random(kind, &mut rng);
            let i = raw % kind.dimension();
            let back = s.flipped(i).unwrap().flipped(i).unwrap();
            prop_assert_eq!(ScaledMatrix::realize(&back), ScaledMatrix::realize(&s));
            let moved = ScaledMatrix::realize(&s.flipped(i).unwrap());
            let delta = ScaledMatrix::flip_delta(&s, i).unwrap();
            prop_assert_eq!(ScaledMatrix::realize(&s).sum(&delta).unwrap(), moved);
        }

        #[test]
        fn hamming_is_a_metric(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
            let kind = EnsembleKind::Rectangular { n: 8, m: 8 };
            let [x, y, z] = [a, b, c].map(|s| SignVector::random(kind, &mut ChaCha8Rng::seed_from_u64(s)));
            prop_assert_eq!(x.hamming(&y), y.hamming(&x));
            prop_assert!(x.hamming(&z) <= x.hamming(&y) + y.hamming(&z));
            prop_assert_eq!(SignVector::from_hex(kind, &x.to_hex()).unwrap(), x);
        }
    }
}
