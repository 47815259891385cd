//! Pauli and Bell-basis encodings.
//!
//! A qubit pair is indexed by the Pauli operator applied to Bob's half of a
//! perfect `|Φ+⟩` pair: `B_k = (I ⊗ σ_k)|Φ+⟩`. The four `B_k` form the Bell
//! basis; a multi-pair Bell basis vector is a tensor product of `B_k`s and is
//! named by a [`PauliPattern`]. Computational-basis amplitudes order Alice's
//! qubit as the high bit within a pair, and pair 1 as the most significant
//! digit overall.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Single-qubit Pauli operator, numbered as σ_0=I, σ_1=X, σ_2=Y, σ_3=Z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Pauli {
    I = 0,
    X = 1,
    Y = 2,
    Z = 3,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn from_index(value: u8) -> Result<Self> {
        match value {
            0 => Ok(Pauli::I),
            1 => Ok(Pauli::X),
            2 => Ok(Pauli::Y),
            3 => Ok(Pauli::Z),
            other => Err(Error::InvalidPauli(other)),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// True when `(I ⊗ σ_k)|Φ+⟩` lies in the `{Ψ+, Ψ−}` subspace, i.e. the
    /// pair shows anticorrelated Z outcomes (detected by the Z-type check).
    pub fn has_bit_flip(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    /// True when `(I ⊗ σ_k)|Φ+⟩` lies in the `{Φ−, Ψ−}` subspace, i.e. the
    /// pair shows anticorrelated X outcomes (detected by the X-type check).
    pub fn has_phase_flip(self) -> bool {
        matches!(self, Pauli::Y | Pauli::Z)
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        };
        write!(f, "{c}")
    }
}

/// Assignment of one Pauli per qubit pair, naming a multi-pair Bell vector.
///
/// The length equals the number of pairs in whatever state the pattern
/// indexes (all 2n pairs during distribution, the n information pairs after
/// checking); callers validate it against context.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliPattern(Vec<Pauli>);

impl PauliPattern {
    pub fn new(entries: Vec<Pauli>) -> Self {
        PauliPattern(entries)
    }

    /// The all-identity pattern (every pair a perfect `|Φ+⟩`).
    pub fn identity(len: usize) -> Self {
        PauliPattern(vec![Pauli::I; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[Pauli] {
        &self.0
    }

    pub fn get(&self, pair: usize) -> Option<Pauli> {
        self.0.get(pair).copied()
    }

    /// Base-4 big-endian encoding: pair 1 is the most significant digit.
    ///
    /// Only defined while `4^len` fits in `usize`; long patterns (used by the
    /// sifting experiments) never index dense vectors.
    pub fn index(&self) -> Result<usize> {
        if self.0.len() * 2 >= usize::BITS as usize {
            return Err(Error::InvalidValue {
                what: "pattern index",
                why: format!("4^{} does not fit in usize", self.0.len()),
            });
        }
        Ok(self
            .0
            .iter()
            .fold(0usize, |acc, &k| (acc << 2) | k.index()))
    }

    /// Inverse of [`PauliPattern::index`] for length-`len` patterns.
    pub fn from_index(len: usize, index: usize) -> Result<Self> {
        let size = pattern_count(len)?;
        if index >= size {
            return Err(Error::IndexOutOfRange {
                what: "pattern index",
                index,
                size,
            });
        }
        let mut entries = vec![Pauli::I; len];
        let mut rest = index;
        for slot in entries.iter_mut().rev() {
            *slot = Pauli::from_index((rest & 0b11) as u8)?;
            rest >>= 2;
        }
        Ok(PauliPattern(entries))
    }

    /// Parse from base-4 digits, pair 1 first (the wire format, e.g. "0310").
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| {
                c.to_digit(4)
                    .map(|d| Pauli::from_index(d as u8))
                    .unwrap_or(Err(Error::InvalidValue {
                        what: "pattern digit",
                        why: format!("{c:?} is not a base-4 digit"),
                    }))
            })
            .collect::<Result<Vec<_>>>()
            .map(PauliPattern)
    }

    /// Sub-pattern on the given pair positions, in the order given.
    pub fn restrict(&self, pairs: &[usize]) -> Result<Self> {
        pairs
            .iter()
            .map(|&p| {
                self.get(p).ok_or(Error::IndexOutOfRange {
                    what: "pair",
                    index: p,
                    size: self.len(),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(PauliPattern)
    }
}

impl fmt::Display for PauliPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &k in &self.0 {
            write!(f, "{}", k.index())?;
        }
        Ok(())
    }
}

/// `4^len`, erroring when it would overflow `usize`.
pub fn pattern_count(len: usize) -> Result<usize> {
    if len * 2 >= usize::BITS as usize {
        return Err(Error::InvalidValue {
            what: "pattern count",
            why: format!("4^{len} does not fit in usize"),
        });
    }
    Ok(1usize << (2 * len))
}

/// Measurement bases for a single qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasurementBasis {
    Z,
    X,
    Y,
}

/// `(I ⊗ σ_k)|Φ+⟩` as amplitudes over `|00⟩,|01⟩,|10⟩,|11⟩` (Alice first).
///
/// k=0 gives `|Φ+⟩`, k=1 gives `|Ψ+⟩`, k=3 gives `|Φ−⟩`, and k=2 carries the
/// operator's global phase: `i|Ψ−⟩`.
pub fn bell_state(k: Pauli) -> [Complex64; 4] {
    let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let ri = Complex64::new(0.0, FRAC_1_SQRT_2);
    let zero = Complex64::ZERO;
    match k {
        Pauli::I => [r, zero, zero, r],
        Pauli::X => [zero, r, r, zero],
        Pauli::Y => [zero, ri, -ri, zero],
        Pauli::Z => [r, zero, zero, -r],
    }
}

/// The two orthonormal basis vectors of a single-qubit measurement basis,
/// as amplitudes over `|0⟩,|1⟩`.
pub fn single_qubit_basis(basis: MeasurementBasis) -> [[Complex64; 2]; 2] {
    let one = Complex64::ONE;
    let zero = Complex64::ZERO;
    let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let ri = Complex64::new(0.0, FRAC_1_SQRT_2);
    match basis {
        MeasurementBasis::Z => [[one, zero], [zero, one]],
        MeasurementBasis::X => [[r, r], [r, -r]],
        MeasurementBasis::Y => [[r, ri], [r, -ri]],
    }
}

/// Number of pairs `L` for a vector of length `4^L`.
fn pair_count_of_len(len: usize) -> Result<usize> {
    let mut l = 0usize;
    let mut size = 1usize;
    while size < len {
        size = size.checked_mul(4).ok_or_else(|| {
            Error::DimensionMismatch(format!("vector length {len} is not a power of 4"))
        })?;
        l += 1;
    }
    if size != len || len == 0 {
        return Err(Error::DimensionMismatch(format!(
            "vector length {len} is not a power of 4"
        )));
    }
    Ok(l)
}

/// Apply a 4×4 matrix to one pair axis of a `4^L`-dimensional vector.
fn apply_pair_matrix(amps: &mut [Complex64], l_pairs: usize, axis: usize, m: &[[Complex64; 4]; 4]) {
    let stride = 1usize << (2 * (l_pairs - 1 - axis));
    let outer = amps.len() / 4;
    for o in 0..outer {
        let base = (o / stride) * stride * 4 + (o % stride);
        let mut v = [Complex64::ZERO; 4];
        for (j, slot) in v.iter_mut().enumerate() {
            *slot = amps[base + j * stride];
        }
        for (i, row) in m.iter().enumerate() {
            let mut acc = Complex64::ZERO;
            for (j, &mij) in row.iter().enumerate() {
                acc += mij * v[j];
            }
            amps[base + i * stride] = acc;
        }
    }
}

/// 4×4 change-of-basis matrix with `m[c][k] = ⟨c|B_k⟩`.
fn bell_matrix() -> [[Complex64; 4]; 4] {
    let mut m = [[Complex64::ZERO; 4]; 4];
    for k in Pauli::ALL {
        let col = bell_state(k);
        for (c, &amp) in col.iter().enumerate() {
            m[c][k.index()] = amp;
        }
    }
    m
}

/// Conjugate transpose of [`bell_matrix`].
fn bell_matrix_dagger() -> [[Complex64; 4]; 4] {
    let b = bell_matrix();
    let mut m = [[Complex64::ZERO; 4]; 4];
    for (i, row) in b.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[j][i] = v.conj();
        }
    }
    m
}

/// Change of basis from Bell-pattern amplitudes to computational amplitudes.
///
/// The input is indexed by [`PauliPattern::index`] over `L` pairs; the output
/// by the computational index with Alice's bit high within each pair. Unitary,
/// so norms are preserved.
pub fn bell_to_computational(amps: &[Complex64]) -> Result<Vec<Complex64>> {
    let l = pair_count_of_len(amps.len())?;
    let m = bell_matrix();
    let mut out = amps.to_vec();
    for axis in 0..l {
        apply_pair_matrix(&mut out, l, axis, &m);
    }
    Ok(out)
}

/// Inverse of [`bell_to_computational`].
pub fn computational_to_bell(amps: &[Complex64]) -> Result<Vec<Complex64>> {
    let l = pair_count_of_len(amps.len())?;
    let m = bell_matrix_dagger();
    let mut out = amps.to_vec();
    for axis in 0..l {
        apply_pair_matrix(&mut out, l, axis, &m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    #[test]
    fn bell_state_matches_definitions() {
        let r = FRAC_1_SQRT_2;
        let phi_plus = bell_state(Pauli::I);
        assert_abs_diff_eq!(phi_plus[0].re, r, epsilon = 1e-15);
        assert_abs_diff_eq!(phi_plus[3].re, r, epsilon = 1e-15);
        assert_eq!(phi_plus[1], Complex64::ZERO);
        assert_eq!(phi_plus[2], Complex64::ZERO);

        let phi_minus = bell_state(Pauli::Z);
        assert_abs_diff_eq!(phi_minus[0].re, r, epsilon = 1e-15);
        assert_abs_diff_eq!(phi_minus[3].re, -r, epsilon = 1e-15);

        // (I ⊗ Y)|Φ+⟩ = i|Ψ−⟩, worked out by multiplying Y into |Φ+⟩.
        let y = bell_state(Pauli::Y);
        assert_eq!(y[0], Complex64::ZERO);
        assert_abs_diff_eq!(y[1].im, r, epsilon = 1e-15);
        assert_abs_diff_eq!(y[2].im, -r, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1].re, 0.0, epsilon = 1e-15);
        assert_eq!(y[3], Complex64::ZERO);
    }

    #[test]
    fn bell_states_are_orthonormal() {
        for a in Pauli::ALL {
            for b in Pauli::ALL {
                let ip = inner(&bell_state(a), &bell_state(b));
                let expected = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(ip.re, expected, epsilon = 1e-15);
                assert_abs_diff_eq!(ip.im, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn single_qubit_bases_match_conventions() {
        let z = single_qubit_basis(MeasurementBasis::Z);
        assert_eq!(z[0], [Complex64::ONE, Complex64::ZERO]);
        assert_eq!(z[1], [Complex64::ZERO, Complex64::ONE]);

        let x = single_qubit_basis(MeasurementBasis::X);
        assert_abs_diff_eq!(x[0][0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(x[0][1].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1][1].re, -FRAC_1_SQRT_2, epsilon = 1e-15);

        let y = single_qubit_basis(MeasurementBasis::Y);
        assert_abs_diff_eq!(y[0][1].im, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1][1].im, -FRAC_1_SQRT_2, epsilon = 1e-15);
        for basis in [MeasurementBasis::Z, MeasurementBasis::X, MeasurementBasis::Y] {
            let b = single_qubit_basis(basis);
            let ip = b[0].iter().zip(&b[1]).map(|(u, v)| u.conj() * v).sum::<Complex64>();
            assert_abs_diff_eq!(ip.norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn pattern_index_examples() {
        let p = PauliPattern::new(vec![Pauli::I, Pauli::I]);
        assert_eq!(p.index().unwrap(), 0);
        let p = PauliPattern::new(vec![Pauli::Z, Pauli::I]);
        assert_eq!(p.index().unwrap(), 12);
    }

    #[test]
    fn pattern_index_is_a_bijection_up_to_len_4() {
        for len in 0..=4 {
            let count = pattern_count(len).unwrap();
            let mut seen = vec![false; count];
            for idx in 0..count {
                let p = PauliPattern::from_index(len, idx).unwrap();
                assert_eq!(p.len(), len);
                let back = p.index().unwrap();
                assert_eq!(back, idx);
                assert!(!seen[back]);
                seen[back] = true;
            }
            assert!(PauliPattern::from_index(len, count).is_err());
        }
    }

    #[test]
    fn pattern_parse_and_display_roundtrip() {
        let p = PauliPattern::parse("0312").unwrap();
        assert_eq!(
            p.entries(),
            &[Pauli::I, Pauli::Z, Pauli::X, Pauli::Y]
        );
        assert_eq!(p.to_string(), "0312");
        assert!(PauliPattern::parse("04").is_err());
        assert!(PauliPattern::parse("0a").is_err());
    }

    #[test]
    fn delta_pattern_maps_to_tensor_product_of_bell_states() {
        // All 16 two-pair patterns.
        for idx in 0..16 {
            let pattern = PauliPattern::from_index(2, idx).unwrap();
            let mut amps = vec![Complex64::ZERO; 16];
            amps[idx] = Complex64::ONE;
            let comp = bell_to_computational(&amps).unwrap();

            let b0 = bell_state(pattern.get(0).unwrap());
            let b1 = bell_state(pattern.get(1).unwrap());
            for c0 in 0..4 {
                for c1 in 0..4 {
                    let expected = b0[c0] * b1[c1];
                    let got = comp[c0 * 4 + c1];
                    assert_abs_diff_eq!((got - expected).norm(), 0.0, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn single_pair_delta_is_the_bell_state() {
        let mut amps = vec![Complex64::ZERO; 4];
        amps[0] = Complex64::ONE;
        let comp = bell_to_computational(&amps).unwrap();
        let expected = bell_state(Pauli::I);
        for (g, e) in comp.iter().zip(expected.iter()) {
            assert_abs_diff_eq!((g - e).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn bell_transform_roundtrips_and_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut v: Vec<Complex64> = (0..16)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            for a in &mut v {
                *a /= norm;
            }
            let comp = bell_to_computational(&v).unwrap();
            let comp_norm = comp.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            assert_abs_diff_eq!(comp_norm, 1.0, epsilon = 1e-12);

            let back = computational_to_bell(&comp).unwrap();
            for (a, b) in v.iter().zip(back.iter()) {
                assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn bell_transform_rejects_bad_lengths() {
        let v = vec![Complex64::ZERO; 8];
        assert!(bell_to_computational(&v).is_err());
        assert!(bell_to_computational(&[]).is_err());
    }
}
