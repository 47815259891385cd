//! Eve's attack states.
//!
//! A general attack on the distributed pairs is a superposition over Pauli
//! error patterns, each entangled with a normalized (not necessarily
//! orthogonal) state of Eve's ancilla. Dropping the coherences between
//! patterns yields the Bell-diagonal counterpart with the same `|coefficient|²`
//! weights; the checking statistics of the two are provably identical, which
//! the verification suites confirm numerically.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bell::{bell_state, pattern_count, Pauli, PauliPattern};
use crate::error::{Error, Result};
use crate::qstate::{DensityOperator, PureState, SubsystemLayout};

/// Layout label of Eve's ancilla subsystem.
pub const EVE_LABEL: &str = "eve";
/// Input normalization slack: renormalize within this, reject beyond it.
pub const INPUT_NORM_TOL: f64 = 1e-8;
/// Largest supported dimension for Eve's ancilla.
pub const MAX_EVE_DIM: usize = 16;

/// Layout label of qubit pair `i` (0-based).
pub fn pair_label(i: usize) -> String {
    format!("p{i}")
}

/// One term of the attack superposition: a Pauli pattern, its complex
/// coefficient, and the Eve state attached to it.
#[derive(Debug, Clone)]
pub struct AttackTerm {
    pub pattern: PauliPattern,
    pub coeff: Complex64,
    pub eve_state: Vec<Complex64>,
}

/// The joint Alice-Bob-Eve pure state of a general attack.
///
/// Pair subsystems are four-dimensional and indexed in the Bell basis (the
/// amplitude at pattern `{k}` multiplies the Bell vector `⊗ᵢ B_{kᵢ}`); Eve's
/// ancilla is the last, least significant axis.
#[derive(Debug, Clone)]
pub struct PureAttackState {
    n_pairs: usize,
    eve_dim: usize,
    joint: PureState,
}

impl PureAttackState {
    /// Layout for `n_pairs` Bell-indexed pairs plus Eve's ancilla.
    pub fn layout(n_pairs: usize, eve_dim: usize) -> Result<SubsystemLayout> {
        let mut subsystems: Vec<(String, usize)> =
            (0..n_pairs).map(|i| (pair_label(i), 4)).collect();
        subsystems.push((EVE_LABEL.to_string(), eve_dim));
        SubsystemLayout::new(subsystems)
    }

    /// Wrap an already-built Bell-basis amplitude vector (normalized here).
    pub fn from_bell_amplitudes(
        n_pairs: usize,
        eve_dim: usize,
        amplitudes: Vec<Complex64>,
    ) -> Result<Self> {
        let layout = Self::layout(n_pairs, eve_dim)?;
        let joint = PureState::normalized(amplitudes, layout)?;
        Ok(PureAttackState {
            n_pairs,
            eve_dim,
            joint,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn eve_dim(&self) -> usize {
        self.eve_dim
    }

    /// The joint state, pair axes in the Bell basis.
    pub fn joint(&self) -> &PureState {
        &self.joint
    }

    pub fn pair_labels(&self) -> Vec<String> {
        (0..self.n_pairs).map(pair_label).collect()
    }

    /// Amplitude of (pattern, Eve basis index).
    pub fn amplitude(&self, pattern: &PauliPattern, eve_index: usize) -> Result<Complex64> {
        if pattern.len() != self.n_pairs {
            return Err(Error::PatternLength {
                got: pattern.len(),
                expected: self.n_pairs,
            });
        }
        if eve_index >= self.eve_dim {
            return Err(Error::IndexOutOfRange {
                what: "Eve basis index",
                index: eve_index,
                size: self.eve_dim,
            });
        }
        Ok(self.joint.amplitudes()[pattern.index()? * self.eve_dim + eve_index])
    }

    /// The same joint state with every pair axis rotated to the computational
    /// basis (Alice's qubit the high bit within a pair).
    pub fn to_computational(&self) -> Result<PureState> {
        let u = bell_unitary();
        let mut state = self.joint.clone();
        for label in self.pair_labels() {
            state = state.apply_to_subsystem(&label, &u)?;
        }
        Ok(state)
    }

    /// `Σ_e |amplitude(k, e)|²` for every pattern: the Bell-diagonal state
    /// with the same checking statistics.
    pub fn classicalize(&self) -> Result<BellDiagonalState> {
        let mut probs = BTreeMap::new();
        let amps = self.joint.amplitudes();
        let n_patterns = pattern_count(self.n_pairs)?;
        for p in 0..n_patterns {
            let mut mass = 0.0;
            for e in 0..self.eve_dim {
                mass += amps[p * self.eve_dim + e].norm_sqr();
            }
            if mass > 0.0 {
                probs.insert(PauliPattern::from_index(self.n_pairs, p)?, mass);
            }
        }
        BellDiagonalState::new(self.n_pairs, probs)
    }

    /// Density operator of the joint state (`keep = Abe`) or of Alice and
    /// Bob's pairs after tracing Eve out (`keep = Ab`), in the Bell basis.
    pub fn density_operator(&self, keep: Keep) -> Result<DensityOperator> {
        match keep {
            Keep::Abe => self.joint.outer_product(),
            Keep::Ab => {
                let labels = self.pair_labels();
                let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
                self.joint.partial_trace(&refs)
            }
        }
    }
}

/// Which subsystems a density operator should cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    Ab,
    Abe,
}

/// Probability distribution over Pauli patterns: a Bell-diagonal state.
///
/// Stored sparsely, so pattern length is unbounded (the sifting experiments
/// use single-pattern states over 50+ pairs).
#[derive(Debug, Clone, PartialEq)]
pub struct BellDiagonalState {
    n_pairs: usize,
    probs: BTreeMap<PauliPattern, f64>,
}

impl BellDiagonalState {
    pub fn new(n_pairs: usize, probs: BTreeMap<PauliPattern, f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidProbability(
                "Bell-diagonal state has empty support".into(),
            ));
        }
        let mut total = 0.0;
        for (pattern, &p) in &probs {
            if pattern.len() != n_pairs {
                return Err(Error::PatternLength {
                    got: pattern.len(),
                    expected: n_pairs,
                });
            }
            if p < -1e-12 {
                return Err(Error::InvalidProbability(format!(
                    "negative probability {p} at pattern {pattern}"
                )));
            }
            total += p.max(0.0);
        }
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidProbability(format!(
                "pattern probabilities sum to {total}"
            )));
        }
        let probs = probs
            .into_iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(k, p)| (k, p / total))
            .collect();
        Ok(BellDiagonalState { n_pairs, probs })
    }

    /// Build from unnormalized non-negative masses, rescaling to total one.
    /// Errors when the total mass is zero (a conditioning event of
    /// probability zero).
    pub fn renormalized(n_pairs: usize, probs: BTreeMap<PauliPattern, f64>) -> Result<Self> {
        let total: f64 = probs.values().sum();
        if total < 1e-300 {
            return Err(Error::ZeroProbabilityOutcome);
        }
        let probs = probs.into_iter().map(|(k, p)| (k, p / total)).collect();
        BellDiagonalState::new(n_pairs, probs)
    }

    /// Point mass on one pattern.
    pub fn delta(pattern: PauliPattern) -> Self {
        let n_pairs = pattern.len();
        let mut probs = BTreeMap::new();
        probs.insert(pattern, 1.0);
        BellDiagonalState { n_pairs, probs }
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn probs(&self) -> &BTreeMap<PauliPattern, f64> {
        &self.probs
    }

    pub fn prob(&self, pattern: &PauliPattern) -> f64 {
        self.probs.get(pattern).copied().unwrap_or(0.0)
    }

    /// Marginal distribution over the given pair positions (in that order).
    pub fn marginal_onto(&self, pairs: &[usize]) -> Result<BellDiagonalState> {
        let mut probs: BTreeMap<PauliPattern, f64> = BTreeMap::new();
        for (pattern, &p) in &self.probs {
            let sub = pattern.restrict(pairs)?;
            *probs.entry(sub).or_insert(0.0) += p;
        }
        BellDiagonalState::new(pairs.len(), probs)
    }

    /// Draw a pattern according to the distribution.
    pub fn sample_pattern<R: Rng + ?Sized>(&self, rng: &mut R) -> &PauliPattern {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = None;
        for (pattern, &p) in &self.probs {
            acc += p;
            last = Some(pattern);
            if u < acc {
                return pattern;
            }
        }
        last.expect("support is non-empty")
    }

    /// `Σ P_k |B_k⟩⟨B_k|` as a dense Bell-basis matrix over the pair axes
    /// (diagonal by construction). Fails when `4^n` exceeds the dense cap.
    pub fn density_operator(&self) -> Result<DensityOperator> {
        let dim = pattern_count(self.n_pairs)?;
        let subsystems: Vec<(String, usize)> =
            (0..self.n_pairs).map(|i| (pair_label(i), 4)).collect();
        let layout = SubsystemLayout::new(subsystems)?;
        let mut m = DMatrix::zeros(dim, dim);
        for (pattern, &p) in &self.probs {
            let idx = pattern.index()?;
            m[(idx, idx)] = Complex64::new(p, 0.0);
        }
        DensityOperator::new(m, layout)
    }
}

/// 4×4 unitary whose columns are the Bell vectors, mapping Bell-basis
/// amplitudes to computational ones on a single pair.
pub fn bell_unitary() -> DMatrix<Complex64> {
    DMatrix::from_fn(4, 4, |c, k| bell_state(Pauli::ALL[k])[c])
}

/// Build the joint pure state from attack terms.
///
/// Terms may repeat a pattern; their Eve vectors then add amplitude-wise.
/// Coefficients and Eve states are renormalized when within [`INPUT_NORM_TOL`]
/// of unit norm and rejected beyond it, as is the assembled joint state.
pub fn assemble_attack(
    terms: &[AttackTerm],
    n_pairs: usize,
    eve_dim: usize,
) -> Result<PureAttackState> {
    if terms.is_empty() {
        return Err(Error::EmptyAttack);
    }
    if eve_dim == 0 || eve_dim > MAX_EVE_DIM {
        return Err(Error::InvalidValue {
            what: "eve_dim",
            why: format!("{eve_dim} outside 1..={MAX_EVE_DIM}"),
        });
    }
    let coeff_norm_sq: f64 = terms.iter().map(|t| t.coeff.norm_sqr()).sum();
    if (coeff_norm_sq - 1.0).abs() > INPUT_NORM_TOL {
        return Err(Error::NormViolation {
            what: "attack coefficients",
            norm_sq: coeff_norm_sq,
            tolerance: INPUT_NORM_TOL,
        });
    }
    let coeff_scale = 1.0 / coeff_norm_sq.sqrt();

    let dim = pattern_count(n_pairs)?
        .checked_mul(eve_dim)
        .ok_or_else(|| Error::DimensionMismatch("attack dimension overflows usize".into()))?;
    let mut amps = vec![Complex64::ZERO; dim];
    for term in terms {
        if term.pattern.len() != n_pairs {
            return Err(Error::PatternLength {
                got: term.pattern.len(),
                expected: n_pairs,
            });
        }
        if term.eve_state.len() != eve_dim {
            return Err(Error::DimensionMismatch(format!(
                "Eve state has {} entries, eve_dim is {eve_dim}",
                term.eve_state.len()
            )));
        }
        let eve_norm_sq: f64 = term.eve_state.iter().map(|a| a.norm_sqr()).sum();
        if (eve_norm_sq - 1.0).abs() > INPUT_NORM_TOL {
            return Err(Error::NormViolation {
                what: "Eve state",
                norm_sq: eve_norm_sq,
                tolerance: INPUT_NORM_TOL,
            });
        }
        let scale = Complex64::new(coeff_scale / eve_norm_sq.sqrt(), 0.0);
        let base = term.pattern.index()? * eve_dim;
        for (e, &amp) in term.eve_state.iter().enumerate() {
            amps[base + e] += term.coeff * amp * scale;
        }
    }

    // Terms sharing a pattern can interfere; the result must still be a state.
    let norm_sq: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if (norm_sq - 1.0).abs() > INPUT_NORM_TOL {
        return Err(Error::NormViolation {
            what: "assembled attack state",
            norm_sq,
            tolerance: INPUT_NORM_TOL,
        });
    }
    PureAttackState::from_bell_amplitudes(n_pairs, eve_dim, amps)
}

/// Named Bell-diagonal attack families.
///
/// These are standard parameterizations of the attack classes, not claims of
/// optimality. `InterceptResend` models Eve scrambling an intercepted pair's
/// correlations completely: with probability `fraction` the pair's marginal is
/// uniform over all four Bell vectors. An exact measure-in-Z-and-resend attack
/// instead yields the 50/50 `{Φ+, Φ−}` mixture (covered by an oracle test);
/// the uniform choice is the harsher, basis-agnostic convention.
#[derive(Debug, Clone, PartialEq)]
pub enum NamedAttackKind {
    NoAttack,
    InterceptResend { fraction: f64 },
    PauliChannel { p_x: f64, p_y: f64, p_z: f64 },
    BellFlip { pattern: PauliPattern },
}

/// Largest materialized support for product-form named attacks.
const MAX_SUPPORT: usize = 1 << 20;

pub fn named_attack(kind: &NamedAttackKind, n_pairs: usize) -> Result<BellDiagonalState> {
    if n_pairs == 0 {
        return Err(Error::InvalidValue {
            what: "n_pairs",
            why: "must be positive".into(),
        });
    }
    match kind {
        NamedAttackKind::NoAttack => Ok(BellDiagonalState::delta(PauliPattern::identity(n_pairs))),
        NamedAttackKind::BellFlip { pattern } => {
            if pattern.len() != n_pairs {
                return Err(Error::PatternLength {
                    got: pattern.len(),
                    expected: n_pairs,
                });
            }
            Ok(BellDiagonalState::delta(pattern.clone()))
        }
        NamedAttackKind::InterceptResend { fraction } => {
            if !(0.0..=1.0).contains(fraction) {
                return Err(Error::InvalidProbability(format!(
                    "intercept fraction {fraction} outside [0, 1]"
                )));
            }
            let f = *fraction;
            product_distribution(n_pairs, [1.0 - 0.75 * f, 0.25 * f, 0.25 * f, 0.25 * f])
        }
        NamedAttackKind::PauliChannel { p_x, p_y, p_z } => {
            for (name, p) in [("p_x", p_x), ("p_y", p_y), ("p_z", p_z)] {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidProbability(format!(
                        "{name} = {p} outside [0, 1]"
                    )));
                }
            }
            let s = p_x + p_y + p_z;
            if s > 1.0 + 1e-12 {
                return Err(Error::InvalidProbability(format!(
                    "p_x + p_y + p_z = {s} exceeds 1"
                )));
            }
            product_distribution(n_pairs, [(1.0 - s).max(0.0), *p_x, *p_y, *p_z])
        }
    }
}

/// I.i.d. product of one single-pair marginal over all pairs.
fn product_distribution(n_pairs: usize, marginal: [f64; 4]) -> Result<BellDiagonalState> {
    let support: Vec<(Pauli, f64)> = Pauli::ALL
        .iter()
        .zip(marginal)
        .filter(|(_, p)| *p > 0.0)
        .map(|(&k, p)| (k, p))
        .collect();
    let total_support = support.len().checked_pow(n_pairs as u32);
    if total_support.is_none_or(|s| s > MAX_SUPPORT) {
        return Err(Error::InvalidValue {
            what: "named attack support",
            why: format!(
                "{}^{n_pairs} patterns exceed the materialization limit",
                support.len()
            ),
        });
    }
    let mut probs: BTreeMap<PauliPattern, f64> = BTreeMap::new();
    let mut stack: Vec<(Vec<Pauli>, f64)> = vec![(Vec::new(), 1.0)];
    for _ in 0..n_pairs {
        let mut next = Vec::with_capacity(stack.len() * support.len());
        for (prefix, p) in stack {
            for &(k, pk) in &support {
                let mut entries = prefix.clone();
                entries.push(k);
                next.push((entries, p * pk));
            }
        }
        stack = next;
    }
    for (entries, p) in stack {
        probs.insert(PauliPattern::new(entries), p);
    }
    BellDiagonalState::new(n_pairs, probs)
}

/// Either form of attack the protocol can face.
#[derive(Debug, Clone)]
pub enum ProtocolState {
    Pure(PureAttackState),
    Classical(BellDiagonalState),
}

impl ProtocolState {
    pub fn n_pairs(&self) -> usize {
        match self {
            ProtocolState::Pure(s) => s.n_pairs(),
            ProtocolState::Classical(s) => s.n_pairs(),
        }
    }

    /// Density operator in the Bell basis over pair axes.
    ///
    /// `Keep::Abe` is meaningless for a Bell-diagonal state (Eve is already
    /// traced out) and is rejected.
    pub fn density_operator(&self, keep: Keep) -> Result<DensityOperator> {
        match (self, keep) {
            (ProtocolState::Pure(s), keep) => s.density_operator(keep),
            (ProtocolState::Classical(s), Keep::Ab) => s.density_operator(),
            (ProtocolState::Classical(_), Keep::Abe) => Err(Error::InvalidValue {
                what: "keep",
                why: "Eve is already traced out of a Bell-diagonal state".into(),
            }),
        }
    }
}

/// Wire format for attack descriptions (see the repository README).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackDescription {
    pub n_pairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eve_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<TermSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub named: Option<NamedSpec>,
}

/// One superposition term: base-4 pattern digits (pair 1 first), complex
/// coefficient as `[re, im]`, Eve amplitudes likewise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub pattern: String,
    pub coeff: [f64; 2],
    pub eve_state: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum NamedSpec {
    None,
    InterceptResend { fraction: f64 },
    PauliChannel { p_x: f64, p_y: f64, p_z: f64 },
    BellFlip { pattern: String },
}

impl AttackDescription {
    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    /// Construct the state this description names.
    pub fn build(&self) -> Result<ProtocolState> {
        match (&self.terms, &self.named) {
            (Some(terms), None) => {
                let eve_dim = self.eve_dim.unwrap_or(4);
                let terms: Vec<AttackTerm> = terms
                    .iter()
                    .map(|t| {
                        Ok(AttackTerm {
                            pattern: PauliPattern::parse(&t.pattern)?,
                            coeff: Complex64::new(t.coeff[0], t.coeff[1]),
                            eve_state: t
                                .eve_state
                                .iter()
                                .map(|&[re, im]| Complex64::new(re, im))
                                .collect(),
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok(ProtocolState::Pure(assemble_attack(
                    &terms,
                    self.n_pairs,
                    eve_dim,
                )?))
            }
            (None, Some(named)) => {
                if self.eve_dim.is_some() {
                    return Err(Error::Config(
                        "eve_dim only applies to term-form attacks".into(),
                    ));
                }
                let kind = match named {
                    NamedSpec::None => NamedAttackKind::NoAttack,
                    NamedSpec::InterceptResend { fraction } => NamedAttackKind::InterceptResend {
                        fraction: *fraction,
                    },
                    NamedSpec::PauliChannel { p_x, p_y, p_z } => NamedAttackKind::PauliChannel {
                        p_x: *p_x,
                        p_y: *p_y,
                        p_z: *p_z,
                    },
                    NamedSpec::BellFlip { pattern } => NamedAttackKind::BellFlip {
                        pattern: PauliPattern::parse(pattern)?,
                    },
                };
                Ok(ProtocolState::Classical(named_attack(
                    &kind,
                    self.n_pairs,
                )?))
            }
            _ => Err(Error::Config(
                "attack description needs exactly one of `terms` or `named`".into(),
            )),
        }
    }
}

/// Random term-form attack: up to `max_terms` distinct patterns with complex
/// Gaussian-ish coefficients and random unit Eve vectors. Distinct patterns
/// keep the assembled norm exactly one. Used by the verification suites.
pub fn random_term_attack<R: Rng + ?Sized>(
    rng: &mut R,
    n_pairs: usize,
    eve_dim: usize,
    max_terms: usize,
) -> Result<PureAttackState> {
    let n_patterns = pattern_count(n_pairs)?;
    let n_terms = rng.random_range(1..=max_terms.min(n_patterns));
    let mut indices = Vec::with_capacity(n_terms);
    while indices.len() < n_terms {
        let idx = rng.random_range(0..n_patterns);
        if !indices.contains(&idx) {
            indices.push(idx);
        }
    }
    let mut coeffs: Vec<Complex64> = (0..n_terms)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let norm = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for c in &mut coeffs {
        *c /= norm;
    }
    let terms: Vec<AttackTerm> = indices
        .iter()
        .zip(coeffs)
        .map(|(&idx, coeff)| {
            let mut eve: Vec<Complex64> = (0..eve_dim)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let n = eve.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            for a in &mut eve {
                *a /= n;
            }
            Ok(AttackTerm {
                pattern: PauliPattern::from_index(n_pairs, idx)?,
                coeff,
                eve_state: eve,
            })
        })
        .collect::<Result<_>>()?;
    assemble_attack(&terms, n_pairs, eve_dim)
}
