//! Security quantities.
//!
//! For a pure joint state the two sides of the Alice-Bob / Eve bipartition
//! carry equal entropy, and Eve's information about the sifted key is bounded
//! by the Holevo quantity of the key variable against her quantum side
//! information. The refined-information machinery (labeled ensembles, the
//! fidelity-average identity, purification with an index register) shows that
//! handing Eve the ensemble label does not buy her anything beyond that bound.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::attack::{pair_label, random_term_attack, Keep, PureAttackState, EVE_LABEL};
use crate::bell::pattern_count;
use crate::error::{Error, Result};
use crate::qstate::{
    fidelity_to_pure, max_entropy_given_fidelity, von_neumann_entropy, DensityOperator, PureState,
    SubsystemLayout,
};

/// Tolerance for the entropy identities and inequalities.
pub const SECURITY_TOL: f64 = 1e-9;
/// Layout label of the ensemble index register.
pub const REGISTER_LABEL: &str = "reg";

/// The measurement defining the key variable.
///
/// The default is Alice measuring her half of every information pair in Z;
/// Bob's outcomes agree with hers up to the error pattern and are not part of
/// the key variable. Additional key maps slot in as new variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyMeasurement {
    AliceZ,
}

/// Entropies, Holevo quantity, and the fidelity bound for one attack.
#[derive(Debug, Clone, Copy)]
pub struct SecurityReport {
    /// Entropy of Alice and Bob's reduced state, bits.
    pub s_ab: f64,
    /// Entropy of Eve's reduced state, bits.
    pub s_e: f64,
    /// Holevo quantity of the key variable against Eve, bits.
    pub chi: f64,
    /// Fidelity of the AB state to the all-`Φ+` target.
    pub fidelity: f64,
    /// Largest entropy any state with that fidelity can have, bits.
    pub entropy_bound: f64,
}

impl SecurityReport {
    /// The three relations every report must satisfy: `S_AB = S_E` (pure
    /// joint state), `0 ≤ χ ≤ S_E`, and `S_AB` below the fidelity bound.
    pub fn check_invariants(&self) -> Result<()> {
        if (self.s_ab - self.s_e).abs() > SECURITY_TOL {
            return Err(Error::InvalidValue {
                what: "security report",
                why: format!("S_AB = {} differs from S_E = {}", self.s_ab, self.s_e),
            });
        }
        if self.chi < -SECURITY_TOL || self.chi > self.s_e + SECURITY_TOL {
            return Err(Error::InvalidValue {
                what: "security report",
                why: format!("chi = {} outside [0, S_E = {}]", self.chi, self.s_e),
            });
        }
        if self.s_ab > self.entropy_bound + SECURITY_TOL {
            return Err(Error::InvalidValue {
                what: "security report",
                why: format!(
                    "S_AB = {} exceeds the fidelity bound {}",
                    self.s_ab, self.entropy_bound
                ),
            });
        }
        Ok(())
    }
}

/// Compute the full security report for a pure attack state.
pub fn holevo_report(attack: &PureAttackState, key: KeyMeasurement) -> Result<SecurityReport> {
    let rho_ab = attack.density_operator(Keep::Ab)?;
    let s_ab = von_neumann_entropy(&rho_ab)?;
    let rho_e = attack.joint().partial_trace(&[EVE_LABEL])?;
    let s_e = von_neumann_entropy(&rho_e)?;

    // The all-Φ+ target is the Bell-basis delta at the identity pattern.
    let target = legitimate_target(attack.n_pairs())?;
    let fidelity = fidelity_to_pure(&rho_ab, &target)?;
    let entropy_bound = max_entropy_given_fidelity(fidelity.clamp(0.0, 1.0), rho_ab.dim())?;

    let chi = holevo_quantity(attack, key, &rho_e, s_e)?;
    Ok(SecurityReport {
        s_ab,
        s_e,
        chi,
        fidelity,
        entropy_bound,
    })
}

/// `|Φ+⟩^⊗n` in the Bell-basis pair representation.
pub fn legitimate_target(n_pairs: usize) -> Result<PureState> {
    let dim = pattern_count(n_pairs)?;
    let subsystems: Vec<(String, usize)> = (0..n_pairs).map(|i| (pair_label(i), 4)).collect();
    let layout = SubsystemLayout::new(subsystems)?;
    let mut amps = vec![Complex64::ZERO; dim];
    amps[0] = Complex64::ONE;
    PureState::new(amps, layout)
}

/// `χ = S(ρ_E) − Σ_x p_x S(ρ_E|x)` for the key variable.
fn holevo_quantity(
    attack: &PureAttackState,
    key: KeyMeasurement,
    rho_e: &DensityOperator,
    s_e: f64,
) -> Result<f64> {
    let KeyMeasurement::AliceZ = key;
    let comp = attack.to_computational()?;
    let n = attack.n_pairs();
    let d_e = attack.eve_dim();
    let amps = comp.amplitudes();
    let n_keys = 1usize << n;

    // Unnormalized Eve blocks per key outcome; p_x is the trace.
    let mut blocks: Vec<DMatrix<Complex64>> = vec![DMatrix::zeros(d_e, d_e); n_keys];
    let ab_dim = amps.len() / d_e;
    for ab in 0..ab_dim {
        // Alice's bit of pair i is the high bit of that pair's digit.
        let mut key_index = 0usize;
        for pair in 0..n {
            let digit = (ab >> (2 * (n - 1 - pair))) & 0b11;
            key_index |= (digit >> 1) << pair;
        }
        let block = &mut blocks[key_index];
        let base = ab * d_e;
        for e1 in 0..d_e {
            let a1 = amps[base + e1];
            if a1 == Complex64::ZERO {
                continue;
            }
            for e2 in 0..d_e {
                block[(e1, e2)] += a1 * amps[base + e2].conj();
            }
        }
    }

    let eve_layout = SubsystemLayout::new(vec![(EVE_LABEL.to_string(), d_e)])?;
    let mut conditional = 0.0;
    for block in blocks {
        let p: f64 = (0..d_e).map(|i| block[(i, i)].re).sum();
        if p <= 1e-15 {
            continue;
        }
        let rho = DensityOperator::new(block / Complex64::new(p, 0.0), eve_layout.clone())?;
        conditional += p * von_neumann_entropy(&rho)?;
    }
    let _ = rho_e;
    Ok(s_e - conditional)
}

/// An ensemble of pure attack states with classical labels Eve may hold.
#[derive(Debug, Clone)]
pub struct LabeledEnsemble {
    elements: Vec<(f64, PureAttackState)>,
}

impl LabeledEnsemble {
    pub fn new(elements: Vec<(f64, PureAttackState)>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidValue {
                what: "ensemble",
                why: "no elements".into(),
            });
        }
        let (n_pairs, eve_dim) = (elements[0].1.n_pairs(), elements[0].1.eve_dim());
        let mut total = 0.0;
        for (p, state) in &elements {
            if *p < 0.0 {
                return Err(Error::InvalidProbability(format!(
                    "negative ensemble weight {p}"
                )));
            }
            if state.n_pairs() != n_pairs || state.eve_dim() != eve_dim {
                return Err(Error::DimensionMismatch(
                    "ensemble elements live on different layouts".into(),
                ));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidProbability(format!(
                "ensemble weights sum to {total}"
            )));
        }
        let elements = elements
            .into_iter()
            .map(|(p, s)| (p / total, s))
            .collect();
        Ok(LabeledEnsemble { elements })
    }

    pub fn elements(&self) -> &[(f64, PureAttackState)] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn n_pairs(&self) -> usize {
        self.elements[0].1.n_pairs()
    }

    pub fn eve_dim(&self) -> usize {
        self.elements[0].1.eve_dim()
    }
}

/// `ρ_AB = Σ_i p_i tr_E(ψ_i ψ_i†)`, Bell basis.
pub fn mix_ensemble(ens: &LabeledEnsemble) -> Result<DensityOperator> {
    let mut acc: Option<DMatrix<Complex64>> = None;
    let mut layout = None;
    for (p, state) in ens.elements() {
        let rho = state.density_operator(Keep::Ab)?;
        let weighted = rho.matrix() * Complex64::new(*p, 0.0);
        acc = Some(match acc {
            None => weighted,
            Some(m) => m + weighted,
        });
        layout = Some(rho.layout().clone());
    }
    DensityOperator::new(acc.expect("non-empty ensemble"), layout.unwrap())
}

/// Outcome of checking the fidelity-average identity on an ensemble.
///
/// The identity `F(Σ pᵢ ρᵢ, ψ) = Σ pᵢ Fᵢ` gives the per-term relation
/// `pᵢ(1−Fᵢ) ≤ 1 − F(ρ_AB, ψ)`; that derived direction is what is checked
/// (the source material prints the inequality the other way round, which the
/// identity itself contradicts).
#[derive(Debug, Clone)]
pub struct FidelityDecompositionReport {
    pub epsilon: f64,
    /// Whether `F(ρ_AB, target) ≥ 1 − ε` held on entry; reported, not fatal.
    pub precondition_met: bool,
    pub mixture_fidelity: f64,
    pub per_term_fidelity: Vec<f64>,
    /// `|Σ pᵢ Fᵢ − F(ρ_AB, target)|`.
    pub identity_deviation: f64,
    /// `pᵢ(1−Fᵢ)` per term, each bounded by `1 − F(ρ_AB, target)`.
    pub per_term_product: Vec<f64>,
    pub derived_direction_holds: bool,
}

pub fn fidelity_decomposition_check(
    ens: &LabeledEnsemble,
    target: &PureState,
    epsilon: f64,
) -> Result<FidelityDecompositionReport> {
    let mix = mix_ensemble(ens)?;
    let mixture_fidelity = fidelity_to_pure(&mix, target)?;
    let precondition_met = mixture_fidelity >= 1.0 - epsilon;

    let mut per_term_fidelity = Vec::with_capacity(ens.len());
    let mut per_term_product = Vec::with_capacity(ens.len());
    let mut average = 0.0;
    for (p, state) in ens.elements() {
        let f_i = fidelity_to_pure(&state.density_operator(Keep::Ab)?, target)?;
        average += p * f_i;
        per_term_fidelity.push(f_i);
        per_term_product.push(p * (1.0 - f_i));
    }
    let identity_deviation = (average - mixture_fidelity).abs();
    let bound = 1.0 - mixture_fidelity;
    let derived_direction_holds = per_term_product.iter().all(|&x| x <= bound + 1e-12);
    Ok(FidelityDecompositionReport {
        epsilon,
        precondition_met,
        mixture_fidelity,
        per_term_fidelity,
        identity_deviation,
        per_term_product,
        derived_direction_holds,
    })
}

/// `Σ_i √p_i |i⟩ ⊗ |ψ_i⟩` with the index register as the leading subsystem,
/// held at Eve's side. Tracing out register and Eve reproduces the mixture.
pub fn purify(ens: &LabeledEnsemble) -> Result<PureState> {
    let r = ens.len();
    let element_dim = ens.elements()[0].1.joint().dim();
    let mut layout_parts = vec![(REGISTER_LABEL.to_string(), r)];
    for (label, dim) in ens.elements()[0].1.joint().layout().subsystems() {
        layout_parts.push((label.to_string(), dim));
    }
    let layout = SubsystemLayout::new(layout_parts)?;
    let mut amps = vec![Complex64::ZERO; r * element_dim];
    for (i, (p, state)) in ens.elements().iter().enumerate() {
        let scale = Complex64::new(p.sqrt(), 0.0);
        for (j, &a) in state.joint().amplitudes().iter().enumerate() {
            amps[i * element_dim + j] = scale * a;
        }
    }
    PureState::new(amps, layout)
}

/// What measuring the index register does, and whether the pure-state entropy
/// bound still dominates Eve's refined information.
#[derive(Debug, Clone)]
pub struct RegisterMeasurementReport {
    /// Born-rule probability of each register outcome.
    pub outcome_probabilities: Vec<f64>,
    /// Largest `|p̂_i − p_i|` against the ensemble weights.
    pub max_probability_deviation: f64,
    /// Smallest squared overlap between a conditional state and its ensemble
    /// element (1 up to phase when the reduction is exact).
    pub min_conditional_fidelity: f64,
    /// `S(ρ_AB)` of the purified state — the entropy bound that applies when
    /// Eve holds register and ancilla.
    pub s_ab_purified: f64,
    /// `Σ_i p_i χ_i`: Eve's best Holevo information after learning `i`.
    pub weighted_chi: f64,
    /// `s_ab_purified + tol − weighted_chi`; non-negative when the bound holds.
    pub bound_slack: f64,
    pub passed: bool,
}

/// Verify that measuring the register reproduces the ensemble (outcome `i`
/// with probability `p_i`, conditional state `ψ_i`) and that the purified
/// state's entropy bound dominates the label-refined Holevo information.
pub fn register_measurement_equivalence(
    ens: &LabeledEnsemble,
    purified: &PureState,
) -> Result<RegisterMeasurementReport> {
    let r = ens.len();
    let element_dim = ens.elements()[0].1.joint().dim();
    if purified.layout().position(REGISTER_LABEL) != Some(0)
        || purified.layout().dim_of(REGISTER_LABEL) != Some(r)
        || purified.dim() != r * element_dim
    {
        return Err(Error::DimensionMismatch(
            "purified state does not match the ensemble (expected register-leading layout)".into(),
        ));
    }
    let amps = purified.amplitudes();
    let mut outcome_probabilities = Vec::with_capacity(r);
    let mut max_probability_deviation = 0.0f64;
    let mut min_conditional_fidelity = f64::INFINITY;
    for (i, (p, state)) in ens.elements().iter().enumerate() {
        let block = &amps[i * element_dim..(i + 1) * element_dim];
        let p_hat: f64 = block.iter().map(|a| a.norm_sqr()).sum();
        outcome_probabilities.push(p_hat);
        max_probability_deviation = max_probability_deviation.max((p_hat - p).abs());
        if p_hat > 1e-15 {
            // Conditional state fidelity to the element, phase-insensitive.
            let overlap: Complex64 = state
                .joint()
                .amplitudes()
                .iter()
                .zip(block)
                .map(|(a, b)| a.conj() * b)
                .sum();
            min_conditional_fidelity = min_conditional_fidelity.min(overlap.norm_sqr() / p_hat);
        }
    }

    let pair_labels: Vec<String> = (0..ens.n_pairs()).map(pair_label).collect();
    let refs: Vec<&str> = pair_labels.iter().map(String::as_str).collect();
    let s_ab_purified = von_neumann_entropy(&purified.partial_trace(&refs)?)?;

    let mut weighted_chi = 0.0;
    for (p, state) in ens.elements() {
        if *p == 0.0 {
            continue;
        }
        weighted_chi += p * holevo_report(state, KeyMeasurement::AliceZ)?.chi;
    }
    let bound_slack = s_ab_purified + SECURITY_TOL - weighted_chi;
    let passed = max_probability_deviation <= 1e-12
        && min_conditional_fidelity >= 1.0 - 1e-10
        && bound_slack >= 0.0;
    Ok(RegisterMeasurementReport {
        outcome_probabilities,
        max_probability_deviation,
        min_conditional_fidelity,
        s_ab_purified,
        weighted_chi,
        bound_slack,
        passed,
    })
}

/// Random ensemble of term-form attacks, for the verification suites.
pub fn random_ensemble<R: Rng + ?Sized>(
    rng: &mut R,
    n_pairs: usize,
    eve_dim: usize,
    max_elements: usize,
    max_terms: usize,
) -> Result<LabeledEnsemble> {
    let count = rng.random_range(1..=max_elements);
    let mut weights: Vec<f64> = (0..count).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let elements = weights
        .into_iter()
        .map(|w| Ok((w, random_term_attack(rng, n_pairs, eve_dim, max_terms)?)))
        .collect::<Result<Vec<_>>>()?;
    LabeledEnsemble::new(elements)
}
