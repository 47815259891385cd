//! Dense pure states and density operators over labeled subsystem layouts.
//!
//! States carry a [`SubsystemLayout`] naming each tensor factor; indices are
//! mixed-radix with the first subsystem most significant. Everything here is
//! immutable after construction and safe to share across threads.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hermiticity / trace / norm tolerance for constructed states.
pub const STATE_TOL: f64 = 1e-10;
/// Eigenvalues in `[-EIG_CLIP, 0)` are treated as zero.
pub const EIG_CLIP: f64 = 1e-10;
/// Dense representation cap on the ambient dimension.
pub const DEFAULT_DIM_CAP: usize = 1 << 14;

/// Ordered list of labeled tensor factors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemLayout {
    subsystems: Vec<(String, usize)>,
}

impl SubsystemLayout {
    pub fn new(subsystems: Vec<(String, usize)>) -> Result<Self> {
        Self::with_cap(subsystems, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(subsystems: Vec<(String, usize)>, cap: usize) -> Result<Self> {
        if subsystems.is_empty() {
            return Err(Error::DimensionMismatch("layout has no subsystems".into()));
        }
        let mut dim = 1usize;
        for (label, d) in &subsystems {
            if *d == 0 {
                return Err(Error::DimensionMismatch(format!(
                    "subsystem {label:?} has dimension 0"
                )));
            }
            dim = dim.checked_mul(*d).ok_or_else(|| {
                Error::DimensionMismatch("ambient dimension overflows usize".into())
            })?;
        }
        if dim > cap {
            return Err(Error::DimensionMismatch(format!(
                "ambient dimension {dim} exceeds cap {cap}"
            )));
        }
        for (i, (label, _)) in subsystems.iter().enumerate() {
            if subsystems[..i].iter().any(|(l, _)| l == label) {
                return Err(Error::DimensionMismatch(format!(
                    "duplicate subsystem label {label:?}"
                )));
            }
        }
        Ok(SubsystemLayout { subsystems })
    }

    pub fn dim(&self) -> usize {
        self.subsystems.iter().map(|(_, d)| d).product()
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn subsystems(&self) -> impl Iterator<Item = (&str, usize)> {
        self.subsystems.iter().map(|(l, d)| (l.as_str(), *d))
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.subsystems.iter().map(|(l, _)| l.as_str())
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.subsystems.iter().position(|(l, _)| l == label)
    }

    pub fn dim_of(&self, label: &str) -> Option<usize> {
        self.subsystems
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, d)| *d)
    }

    /// Row-major strides: the first subsystem is the most significant digit.
    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.subsystems.len()];
        for i in (0..self.subsystems.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.subsystems[i + 1].1;
        }
        strides
    }

    /// Positions of `keep` labels, in original layout order.
    fn keep_positions(&self, keep: &[&str]) -> Result<Vec<usize>> {
        if keep.is_empty() {
            return Err(Error::DimensionMismatch("keep set is empty".into()));
        }
        let mut positions = Vec::with_capacity(keep.len());
        for label in keep {
            let pos = self
                .position(label)
                .ok_or_else(|| Error::UnknownLabel((*label).to_string()))?;
            if positions.contains(&pos) {
                return Err(Error::DimensionMismatch(format!(
                    "duplicate label {label:?} in keep set"
                )));
            }
            positions.push(pos);
        }
        positions.sort_unstable();
        Ok(positions)
    }

    fn sublayout(&self, positions: &[usize]) -> SubsystemLayout {
        SubsystemLayout {
            subsystems: positions
                .iter()
                .map(|&p| self.subsystems[p].clone())
                .collect(),
        }
    }

    /// Concatenation of two layouts (labels must stay distinct).
    pub fn join(&self, other: &SubsystemLayout) -> Result<SubsystemLayout> {
        let mut subsystems = self.subsystems.clone();
        subsystems.extend(other.subsystems.iter().cloned());
        SubsystemLayout::new(subsystems)
    }
}

/// Ambient offsets reachable by the subsystems at `positions` (all digit
/// combinations, first position most significant), plus the complementary
/// offsets. Any ambient index is `kept_offset + rest_offset` for exactly one
/// pair of table entries.
fn split_offsets(layout: &SubsystemLayout, positions: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let strides = layout.strides();
    let rest: Vec<usize> = (0..layout.len())
        .filter(|p| !positions.contains(p))
        .collect();
    (
        offset_table(layout, &strides, positions),
        offset_table(layout, &strides, &rest),
    )
}

fn offset_table(layout: &SubsystemLayout, strides: &[usize], positions: &[usize]) -> Vec<usize> {
    let dims: Vec<usize> = positions.iter().map(|&p| layout.subsystems[p].1).collect();
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total.max(1));
    for idx in 0..total.max(1) {
        let mut off = 0usize;
        let mut rest = idx;
        for pos in (0..dims.len()).rev() {
            off += (rest % dims[pos]) * strides[positions[pos]];
            rest /= dims[pos];
        }
        out.push(off);
    }
    out
}

/// Unit-norm complex amplitude vector over a layout.
#[derive(Debug, Clone)]
pub struct PureState {
    amplitudes: Vec<Complex64>,
    layout: SubsystemLayout,
}

impl PureState {
    /// Requires norm² within [`STATE_TOL`] of 1; the stored state is rescaled
    /// to exact unit norm.
    pub fn new(amplitudes: Vec<Complex64>, layout: SubsystemLayout) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::DimensionMismatch(format!(
                "amplitude vector length {} does not match layout dimension {}",
                amplitudes.len(),
                layout.dim()
            )));
        }
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > STATE_TOL {
            return Err(Error::NormViolation {
                what: "pure state",
                norm_sq,
                tolerance: STATE_TOL,
            });
        }
        Ok(Self::rescaled(amplitudes, layout, norm_sq))
    }

    /// Normalizes whatever comes in; errors only on (near-)zero norm.
    /// Used after projective collapse, where the norm is the outcome weight.
    pub fn normalized(amplitudes: Vec<Complex64>, layout: SubsystemLayout) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::DimensionMismatch(format!(
                "amplitude vector length {} does not match layout dimension {}",
                amplitudes.len(),
                layout.dim()
            )));
        }
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if norm_sq < 1e-300 {
            return Err(Error::ZeroProbabilityOutcome);
        }
        Ok(Self::rescaled(amplitudes, layout, norm_sq))
    }

    fn rescaled(mut amplitudes: Vec<Complex64>, layout: SubsystemLayout, norm_sq: f64) -> Self {
        let scale = 1.0 / norm_sq.sqrt();
        for a in &mut amplitudes {
            *a *= scale;
        }
        PureState { amplitudes, layout }
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn inner(&self, other: &PureState) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "inner product between dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|ψ⟩⟨ψ|` on the full layout.
    pub fn outer_product(&self) -> Result<DensityOperator> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = self.amplitudes[i] * self.amplitudes[j].conj();
            }
        }
        DensityOperator::new(m, self.layout.clone())
    }

    /// `|ψ⟩⊗|φ⟩` with concatenated layouts.
    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let layout = self.layout.join(&other.layout)?;
        let mut amplitudes = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amplitudes.push(a * b);
            }
        }
        PureState::new(amplitudes, layout)
    }

    /// Apply a `d×d` matrix to the named subsystem: `|ψ⟩ → (… ⊗ M ⊗ …)|ψ⟩`.
    /// The result is not renormalized; pass a unitary to stay a state, or use
    /// the raw output for projector statistics via [`PureState::raw_applied`].
    pub fn apply_to_subsystem(&self, label: &str, m: &DMatrix<Complex64>) -> Result<PureState> {
        let amplitudes = self.raw_applied(label, m)?;
        PureState::new(amplitudes, self.layout.clone())
    }

    /// Same as [`PureState::apply_to_subsystem`] but returns the raw (possibly
    /// sub-normalized) amplitude vector.
    pub fn raw_applied(&self, label: &str, m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
        let pos = self
            .layout
            .position(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        let d = self.layout.subsystems[pos].1;
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}×{}, subsystem {label:?} has dimension {d}",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut amps = self.amplitudes.clone();
        apply_axis(&mut amps, &self.layout, pos, m);
        Ok(amps)
    }

    /// Reduced density operator on the `keep` subsystems (original order).
    pub fn partial_trace(&self, keep: &[&str]) -> Result<DensityOperator> {
        let positions = self.layout.keep_positions(keep)?;
        let (keep_off, rest_off) = split_offsets(&self.layout, &positions);
        let k = keep_off.len();
        let mut m = DMatrix::zeros(k, k);
        for &r in &rest_off {
            for (i, &ki) in keep_off.iter().enumerate() {
                let ai = self.amplitudes[ki + r];
                if ai == Complex64::ZERO {
                    continue;
                }
                for (j, &kj) in keep_off.iter().enumerate() {
                    m[(i, j)] += ai * self.amplitudes[kj + r].conj();
                }
            }
        }
        DensityOperator::new(m, self.layout.sublayout(&positions))
    }
}

/// Apply a matrix along one tensor axis of a flat amplitude vector.
///
/// Exposed for callers that chain several sub-normalized projector
/// applications before reading off a probability.
pub fn apply_axis(
    amps: &mut [Complex64],
    layout: &SubsystemLayout,
    pos: usize,
    m: &DMatrix<Complex64>,
) {
    let strides = layout.strides();
    let d = layout.subsystems[pos].1;
    let stride = strides[pos];
    let outer = amps.len() / d;
    let mut v = vec![Complex64::ZERO; d];
    for o in 0..outer {
        let base = (o / stride) * stride * d + (o % stride);
        for (j, slot) in v.iter_mut().enumerate() {
            *slot = amps[base + j * stride];
        }
        for i in 0..d {
            let mut acc = Complex64::ZERO;
            for (j, &vj) in v.iter().enumerate() {
                acc += m[(i, j)] * vj;
            }
            amps[base + i * stride] = acc;
        }
    }
}

/// Hermitian, trace-one operator over a layout.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    matrix: DMatrix<Complex64>,
    layout: SubsystemLayout,
}

impl DensityOperator {
    /// Validates shape, Hermiticity, and unit trace (positivity is checked
    /// where the spectrum is actually consumed).
    pub fn new(matrix: DMatrix<Complex64>, layout: SubsystemLayout) -> Result<Self> {
        let d = layout.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}×{}, layout dimension is {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let mut asym = 0.0f64;
        for i in 0..d {
            for j in i..d {
                let delta = (matrix[(i, j)] - matrix[(j, i)].conj()).norm();
                asym = asym.max(delta);
            }
        }
        if asym > STATE_TOL {
            return Err(Error::NotHermitian(asym));
        }
        let trace: Complex64 = (0..d).map(|i| matrix[(i, i)]).sum();
        if (trace.re - 1.0).abs() > STATE_TOL || trace.im.abs() > STATE_TOL {
            return Err(Error::NormViolation {
                what: "density operator trace",
                norm_sq: trace.re,
                tolerance: STATE_TOL,
            });
        }
        Ok(DensityOperator { matrix, layout })
    }

    pub fn from_pure(psi: &PureState) -> Result<Self> {
        psi.outer_product()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)]).sum()
    }

    /// tr(ρ²); 1 for pure states.
    pub fn purity(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += (self.matrix[(i, j)] * self.matrix[(j, i)]).re;
            }
        }
        acc
    }

    /// Reduced operator on the `keep` subsystems (original order).
    pub fn partial_trace(&self, keep: &[&str]) -> Result<DensityOperator> {
        let positions = self.layout.keep_positions(keep)?;
        let (keep_off, rest_off) = split_offsets(&self.layout, &positions);
        let k = keep_off.len();
        let mut m = DMatrix::zeros(k, k);
        for (i, &ki) in keep_off.iter().enumerate() {
            for (j, &kj) in keep_off.iter().enumerate() {
                let mut acc = Complex64::ZERO;
                for &r in &rest_off {
                    acc += self.matrix[(ki + r, kj + r)];
                }
                m[(i, j)] = acc;
            }
        }
        DensityOperator::new(m, self.layout.sublayout(&positions))
    }

    /// Conjugate one subsystem by a unitary: `ρ → (U ⊗ I) ρ (U† ⊗ I)`.
    pub fn conjugate_subsystem(&self, label: &str, u: &DMatrix<Complex64>) -> Result<Self> {
        let pos = self
            .layout
            .position(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        let d = self.layout.subsystems[pos].1;
        if u.nrows() != d || u.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}×{}, subsystem {label:?} has dimension {d}",
                u.nrows(),
                u.ncols()
            )));
        }
        let dim = self.dim();
        let mut m = self.matrix.clone();
        // Rows: U acting on the ket index, column by column.
        let mut col = vec![Complex64::ZERO; dim];
        for j in 0..dim {
            for i in 0..dim {
                col[i] = m[(i, j)];
            }
            apply_axis(&mut col, &self.layout, pos, u);
            for i in 0..dim {
                m[(i, j)] = col[i];
            }
        }
        // Columns: conj(U) acting on the bra index, row by row.
        let u_conj = u.map(|v| v.conj());
        let mut row = vec![Complex64::ZERO; dim];
        for i in 0..dim {
            for j in 0..dim {
                row[j] = m[(i, j)];
            }
            apply_axis(&mut row, &self.layout, pos, &u_conj);
            for j in 0..dim {
                m[(i, j)] = row[j];
            }
        }
        DensityOperator::new(m, self.layout.clone())
    }

    /// Eigenvalues of the operator (real, unordered).
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect()
    }
}

/// Von Neumann entropy in bits, with `0·log 0 := 0`.
///
/// Eigenvalues in `[-EIG_CLIP, 0)` are clipped to zero; anything more
/// negative means the operator was not PSD and is rejected.
pub fn von_neumann_entropy(rho: &DensityOperator) -> Result<f64> {
    let mut s = 0.0;
    for lambda in rho.eigenvalues() {
        if lambda < -EIG_CLIP {
            return Err(Error::InvalidValue {
                what: "density operator spectrum",
                why: format!("negative eigenvalue {lambda:.3e}"),
            });
        }
        if lambda > 0.0 {
            s -= lambda * lambda.log2();
        }
    }
    // -0.0 shows up when all eigenvalues are 0 or 1.
    Ok(if s == 0.0 { 0.0 } else { s })
}

/// Squared-overlap fidelity `⟨ψ|ρ|ψ⟩`.
///
/// This convention makes fidelity linear in `ρ`, which the ensemble-average
/// identity in the security module relies on.
pub fn fidelity_to_pure(rho: &DensityOperator, psi: &PureState) -> Result<f64> {
    if rho.dim() != psi.dim() {
        return Err(Error::DimensionMismatch(format!(
            "fidelity between operator of dimension {} and state of dimension {}",
            rho.dim(),
            psi.dim()
        )));
    }
    let amps = psi.amplitudes();
    let mut acc = Complex64::ZERO;
    for i in 0..rho.dim() {
        if amps[i] == Complex64::ZERO {
            continue;
        }
        for j in 0..rho.dim() {
            acc += amps[i].conj() * rho.matrix[(i, j)] * amps[j];
        }
    }
    Ok(acc.re)
}

/// Largest von Neumann entropy (bits) of any `d`-dimensional state with
/// fidelity `f` to a fixed pure state: `h(f) + (1−f)·log2(d−1)`.
///
/// The maximum is attained by `f` on the target and the remaining mass spread
/// evenly over the orthogonal complement.
pub fn max_entropy_given_fidelity(f: f64, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidValue {
            what: "dimension",
            why: format!("d = {d}, need d ≥ 2"),
        });
    }
    if !(-1e-12..=1.0 + 1e-12).contains(&f) {
        return Err(Error::InvalidValue {
            what: "fidelity",
            why: format!("{f} outside [0, 1]"),
        });
    }
    let f = f.clamp(0.0, 1.0);
    Ok(binary_entropy(f) + (1.0 - f) * ((d - 1) as f64).log2())
}

/// `h(p) = −p·log2 p − (1−p)·log2(1−p)` with the endpoints at 0.
pub fn binary_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.log2();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).log2();
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{bell_state, Pauli};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qubit_pair_layout() -> SubsystemLayout {
        SubsystemLayout::new(vec![("A".into(), 2), ("B".into(), 2)]).unwrap()
    }

    fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut v {
            *a /= norm;
        }
        v
    }

    fn random_pure(rng: &mut ChaCha8Rng, layout: SubsystemLayout) -> PureState {
        let dim = layout.dim();
        PureState::new(random_unit(rng, dim), layout).unwrap()
    }

    #[test]
    fn tracing_half_of_a_bell_pair_gives_maximally_mixed() {
        let phi_plus = PureState::new(bell_state(Pauli::I).to_vec(), qubit_pair_layout()).unwrap();
        let rho_a = phi_plus.partial_trace(&["A"]).unwrap();
        assert_eq!(rho_a.dim(), 2);
        assert_abs_diff_eq!(rho_a.matrix()[(0, 0)].re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(rho_a.matrix()[(1, 1)].re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(rho_a.matrix()[(0, 1)].norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn tracing_a_product_factor_preserves_the_other() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let chi = random_pure(&mut rng, qubit_pair_layout());
        let eve = PureState::new(
            random_unit(&mut rng, 3),
            SubsystemLayout::new(vec![("eve".into(), 3)]).unwrap(),
        )
        .unwrap();
        let joint = chi.tensor(&eve).unwrap();
        let reduced = joint.partial_trace(&["A", "B"]).unwrap();
        let expected = chi.outer_product().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(
                    (reduced.matrix()[(i, j)] - expected.matrix()[(i, j)]).norm(),
                    0.0,
                    epsilon = 1e-12
                );
            }
        }
    }

    /// Independent oracle: contracts indices directly with nested loops over
    /// explicit (kept, traced) digit decompositions.
    fn naive_partial_trace(
        psi: &PureState,
        keep: &[usize],
        dims: &[usize],
    ) -> Vec<Vec<Complex64>> {
        let traced: Vec<usize> = (0..dims.len()).filter(|p| !keep.contains(p)).collect();
        let k_dim: usize = keep.iter().map(|&p| dims[p]).product();
        let t_dim: usize = traced.iter().map(|&p| dims[p]).product();
        let decompose = |mut idx: usize, positions: &[usize]| -> Vec<usize> {
            let mut digits = vec![0usize; dims.len()];
            for &p in positions.iter().rev() {
                digits[p] = idx % dims[p];
                idx /= dims[p];
            }
            digits
        };
        let compose = |digits: &[usize]| -> usize {
            let mut idx = 0usize;
            for (p, &d) in digits.iter().enumerate() {
                idx = idx * dims[p] + d;
            }
            idx
        };
        let mut rho = vec![vec![Complex64::ZERO; k_dim]; k_dim];
        for i in 0..k_dim {
            for j in 0..k_dim {
                for t in 0..t_dim {
                    let mut di = decompose(i, keep);
                    let dt = decompose(t, &traced);
                    for &p in &traced {
                        di[p] = dt[p];
                    }
                    let mut dj = decompose(j, keep);
                    for &p in &traced {
                        dj[p] = dt[p];
                    }
                    rho[i][j] +=
                        psi.amplitudes()[compose(&di)] * psi.amplitudes()[compose(&dj)].conj();
                }
            }
        }
        rho
    }

    #[test]
    fn partial_trace_matches_direct_contraction_and_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let layout = SubsystemLayout::new(vec![
            ("a".into(), 2),
            ("b".into(), 3),
            ("c".into(), 4),
        ])
        .unwrap();
        for _ in 0..20 {
            let psi = random_pure(&mut rng, layout.clone());

            let got = psi.partial_trace(&["b"]).unwrap();
            let want = naive_partial_trace(&psi, &[1], &[2, 3, 4]);
            for i in 0..3 {
                for j in 0..3 {
                    assert_abs_diff_eq!(
                        (got.matrix()[(i, j)] - want[i][j]).norm(),
                        0.0,
                        epsilon = 1e-12
                    );
                }
            }

            // Tracing two subsystems in one step equals tracing them one at a time.
            let two_step = psi
                .partial_trace(&["a", "b"])
                .unwrap()
                .partial_trace(&["a"])
                .unwrap();
            let one_step = psi.partial_trace(&["a"]).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert_abs_diff_eq!(
                        (two_step.matrix()[(i, j)] - one_step.matrix()[(i, j)]).norm(),
                        0.0,
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn partial_trace_rejects_unknown_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = random_pure(&mut rng, qubit_pair_layout());
        assert!(matches!(
            psi.partial_trace(&["nope"]),
            Err(Error::UnknownLabel(_))
        ));
        assert!(psi.partial_trace(&[]).is_err());
    }

    #[test]
    fn entropy_of_pure_and_mixed_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random_pure(&mut rng, qubit_pair_layout());
        let rho = psi.outer_product().unwrap();
        assert_abs_diff_eq!(von_neumann_entropy(&rho).unwrap(), 0.0, epsilon = 1e-9);

        let qubit = SubsystemLayout::new(vec![("q".into(), 2)]).unwrap();
        let mixed = DensityOperator::new(
            DMatrix::from_diagonal_element(2, 2, Complex64::new(0.5, 0.0)),
            qubit,
        )
        .unwrap();
        assert_abs_diff_eq!(von_neumann_entropy(&mixed).unwrap(), 1.0, epsilon = 1e-12);

        // Spectrum (1/2, 1/4, 1/8, 1/8): Shannon entropy by hand is
        // 0.5·1 + 0.25·2 + 2·(0.125·3) = 1.75 bits.
        let spectrum = [0.5, 0.25, 0.125, 0.125];
        let four = SubsystemLayout::new(vec![("pair".into(), 4)]).unwrap();
        let diag = DMatrix::from_fn(4, 4, |i, j| {
            if i == j {
                Complex64::new(spectrum[i], 0.0)
            } else {
                Complex64::ZERO
            }
        });
        let rho = DensityOperator::new(diag, four).unwrap();
        assert_abs_diff_eq!(von_neumann_entropy(&rho).unwrap(), 1.75, epsilon = 1e-12);
    }

    #[test]
    fn entropy_is_invariant_under_subsystem_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let layout = SubsystemLayout::new(vec![("a".into(), 2), ("b".into(), 3)]).unwrap();
        let psi = random_pure(
            &mut rng,
            layout.join(&SubsystemLayout::new(vec![("c".into(), 2)]).unwrap()).unwrap(),
        );
        let rho = psi.partial_trace(&["a", "b"]).unwrap();
        let s = von_neumann_entropy(&rho).unwrap();

        // Permute (a,b) -> (b,a) by explicit index remap.
        let dim = 6;
        let mut permuted = DMatrix::zeros(dim, dim);
        let remap = |idx: usize| -> usize {
            let (da, db) = (idx / 3, idx % 3);
            db * 2 + da
        };
        for i in 0..dim {
            for j in 0..dim {
                permuted[(remap(i), remap(j))] = rho.matrix()[(i, j)];
            }
        }
        let swapped_layout =
            SubsystemLayout::new(vec![("b".into(), 3), ("a".into(), 2)]).unwrap();
        let rho_p = DensityOperator::new(permuted, swapped_layout).unwrap();
        assert_abs_diff_eq!(von_neumann_entropy(&rho_p).unwrap(), s, epsilon = 1e-9);
    }

    #[test]
    fn pure_bipartition_entropies_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..10 {
            let layout = SubsystemLayout::new(vec![
                ("a".into(), 4),
                ("b".into(), 2),
                ("e".into(), 3),
            ])
            .unwrap();
            let psi = random_pure(&mut rng, layout);
            let s_ab = von_neumann_entropy(&psi.partial_trace(&["a", "b"]).unwrap()).unwrap();
            let s_e = von_neumann_entropy(&psi.partial_trace(&["e"]).unwrap()).unwrap();
            assert_abs_diff_eq!(s_ab, s_e, epsilon = 1e-9);
        }
    }

    #[test]
    fn fidelity_basics_and_linearity() {
        let phi_plus = PureState::new(bell_state(Pauli::I).to_vec(), qubit_pair_layout()).unwrap();
        let psi_minus_ish = PureState::new(bell_state(Pauli::Y).to_vec(), qubit_pair_layout()).unwrap();

        let rho_same = phi_plus.outer_product().unwrap();
        assert_abs_diff_eq!(fidelity_to_pure(&rho_same, &phi_plus).unwrap(), 1.0, epsilon = 1e-14);

        let rho_orth = psi_minus_ish.outer_product().unwrap();
        assert_abs_diff_eq!(fidelity_to_pure(&rho_orth, &phi_plus).unwrap(), 0.0, epsilon = 1e-14);

        // F(Σ pᵢ ρᵢ, ψ) = Σ pᵢ F(ρᵢ, ψ) on random 3-element mixtures.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let states: Vec<PureState> = (0..3)
                .map(|_| random_pure(&mut rng, qubit_pair_layout()))
                .collect();
            let mut probs: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = probs.iter().sum();
            for p in &mut probs {
                *p /= total;
            }
            let target = random_pure(&mut rng, qubit_pair_layout());

            let mut mix = DMatrix::zeros(4, 4);
            let mut f_avg = 0.0;
            for (p, s) in probs.iter().zip(&states) {
                let rho = s.outer_product().unwrap();
                mix += rho.matrix() * Complex64::new(*p, 0.0);
                f_avg += p * fidelity_to_pure(&rho, &target).unwrap();
            }
            let mixed = DensityOperator::new(mix, qubit_pair_layout()).unwrap();
            let f_mix = fidelity_to_pure(&mixed, &target).unwrap();
            assert_abs_diff_eq!(f_mix, f_avg, epsilon = 1e-12);
        }
    }

    #[test]
    fn entropy_fidelity_bound_closed_forms() {
        assert_abs_diff_eq!(max_entropy_given_fidelity(1.0, 7).unwrap(), 0.0, epsilon = 1e-14);
        // F = 1/d saturates at log2(d); d = 4 expands to h(1/4) + (3/4)·log2 3 = 2.
        assert_abs_diff_eq!(max_entropy_given_fidelity(0.25, 4).unwrap(), 2.0, epsilon = 1e-12);
        assert!(max_entropy_given_fidelity(1.5, 4).is_err());
        assert!(max_entropy_given_fidelity(0.5, 1).is_err());
    }

    #[test]
    fn entropy_fidelity_bound_dominates_random_spectra() {
        // Random diagonal spectra in d = 16 whose first entry is the fidelity.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let d = 16;
        for _ in 0..1000 {
            let f: f64 = rng.random();
            let mut rest: Vec<f64> = (0..d - 1).map(|_| -rng.random::<f64>().ln()).collect();
            let total: f64 = rest.iter().sum();
            for r in &mut rest {
                *r *= (1.0 - f) / total;
            }
            let mut s = 0.0;
            for &p in std::iter::once(&f).chain(rest.iter()) {
                if p > 0.0 {
                    s -= p * p.log2();
                }
            }
            let bound = max_entropy_given_fidelity(f, d).unwrap();
            assert!(
                s <= bound + 1e-9,
                "spectrum entropy {s} exceeds bound {bound} at F={f}"
            );
        }
    }

    #[test]
    fn density_operator_validation() {
        let layout = SubsystemLayout::new(vec![("q".into(), 2)]).unwrap();
        let mut bad = DMatrix::from_diagonal_element(2, 2, Complex64::new(0.5, 0.0));
        bad[(0, 1)] = Complex64::new(0.3, 0.0);
        assert!(matches!(
            DensityOperator::new(bad, layout.clone()),
            Err(Error::NotHermitian(_))
        ));

        let off_trace = DMatrix::from_diagonal_element(2, 2, Complex64::new(0.7, 0.0));
        assert!(DensityOperator::new(off_trace, layout).is_err());
    }

    #[test]
    fn conjugating_by_a_unitary_preserves_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let layout = SubsystemLayout::new(vec![("a".into(), 2), ("b".into(), 2)]).unwrap();
        let psi = random_pure(&mut rng, layout.join(&SubsystemLayout::new(vec![("c".into(), 2)]).unwrap()).unwrap());
        let rho = psi.partial_trace(&["a", "b"]).unwrap();

        // Random single-qubit unitary on "a" from a normalized 2×2 Gram-Schmidt.
        let c0 = random_unit(&mut rng, 2);
        let mut c1 = random_unit(&mut rng, 2);
        let overlap: Complex64 = c0.iter().zip(&c1).map(|(a, b)| a.conj() * b).sum();
        for (x, y) in c1.iter_mut().zip(&c0) {
            *x -= overlap * y;
        }
        let n1 = c1.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for x in &mut c1 {
            *x /= n1;
        }
        let u = DMatrix::from_fn(2, 2, |i, j| if j == 0 { c0[i] } else { c1[i] });

        let rotated = rho.conjugate_subsystem("a", &u).unwrap();
        let mut s1 = rho.eigenvalues();
        let mut s2 = rotated.eigenvalues();
        s1.sort_by(f64::total_cmp);
        s2.sort_by(f64::total_cmp);
        for (a, b) in s1.iter().zip(&s2) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }
}
