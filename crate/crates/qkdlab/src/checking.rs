//! The checking phase.
//!
//! On each checked pair Alice and Bob apply either the Z-type check
//! (distinguishing `{Φ±}` from `{Ψ±}`) or the X-type check (`{Φ+,Ψ+}` from
//! `{Φ−,Ψ−}`). Nonlocal mode projects onto those Bell subspaces directly;
//! local mode measures both qubits in the Z or X single-qubit basis and takes
//! the parity of the raw outcomes. The two modes give identical error-bit
//! statistics and leave the information pairs' outcome-averaged state
//! untouched, which [`local_equivalence_report`] certifies numerically.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{bell_unitary, BellDiagonalState, ProtocolState, PureAttackState};
use crate::bell::Pauli;
use crate::error::{Error, Result};
use crate::qstate::{apply_axis, DensityOperator};
use crate::rng::TrialRng;

/// Default tolerance for exact-identity comparisons.
pub const IDENTITY_TOL: f64 = 1e-10;

/// Which check a pair receives. The Y basis exists in the encodings but the
/// protocol never uses it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckBasis {
    Z,
    X,
}

impl CheckBasis {
    /// Whether Bell vector `B_k` registers an error under this check.
    pub fn error_for(self, k: Pauli) -> bool {
        match self {
            CheckBasis::Z => k.has_bit_flip(),
            CheckBasis::X => k.has_phase_flip(),
        }
    }
}

/// How the checks are physically performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasurementMode {
    /// Two-outcome Bell-subspace projections on each checked pair.
    Nonlocal,
    /// Separate single-qubit measurements, outcomes combined by parity.
    Local,
}

/// One checked pair and its basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCheck {
    pub pair: usize,
    pub basis: CheckBasis,
}

/// Which pairs get checked, in which bases, and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckPlan {
    n_pairs_total: usize,
    checked: Vec<PairCheck>,
    mode: MeasurementMode,
}

impl CheckPlan {
    pub fn new(
        n_pairs_total: usize,
        checked: Vec<PairCheck>,
        mode: MeasurementMode,
    ) -> Result<Self> {
        if checked.is_empty() {
            return Err(Error::PlanMismatch("no pairs checked".into()));
        }
        for (i, c) in checked.iter().enumerate() {
            if c.pair >= n_pairs_total {
                return Err(Error::IndexOutOfRange {
                    what: "checked pair",
                    index: c.pair,
                    size: n_pairs_total,
                });
            }
            if checked[..i].iter().any(|d| d.pair == c.pair) {
                return Err(Error::PlanMismatch(format!(
                    "pair {} checked twice",
                    c.pair
                )));
            }
        }
        if checked.len() > 63 {
            return Err(Error::PlanMismatch(
                "more than 63 checked pairs cannot be bit-packed".into(),
            ));
        }
        Ok(CheckPlan {
            n_pairs_total,
            checked,
            mode,
        })
    }

    pub fn n_pairs_total(&self) -> usize {
        self.n_pairs_total
    }

    pub fn checked(&self) -> &[PairCheck] {
        &self.checked
    }

    pub fn n_checked(&self) -> usize {
        self.checked.len()
    }

    pub fn mode(&self) -> MeasurementMode {
        self.mode
    }

    pub fn with_mode(&self, mode: MeasurementMode) -> Self {
        CheckPlan {
            mode,
            ..self.clone()
        }
    }

    /// Pairs not checked, ascending.
    pub fn unchecked_pairs(&self) -> Vec<usize> {
        (0..self.n_pairs_total)
            .filter(|p| !self.checked.iter().any(|c| c.pair == *p))
            .collect()
    }

    fn validate_against(&self, state: &ProtocolState) -> Result<()> {
        if state.n_pairs() != self.n_pairs_total {
            return Err(Error::PlanMismatch(format!(
                "plan covers {} pairs, state has {}",
                self.n_pairs_total,
                state.n_pairs()
            )));
        }
        Ok(())
    }
}

/// Outcome of one checked pair.
///
/// In local mode `raw_local_outcomes` holds Alice's and Bob's single-qubit
/// outcomes `(a, b)`; the error bit is always their parity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub pair: usize,
    pub basis: CheckBasis,
    pub error_bit: bool,
    pub raw_local_outcomes: Option<(bool, bool)>,
}

/// Protocol parameters: `n_pairs_total = 2n` pairs distributed, `n` checked.
///
/// `e_check` sits strictly below the code's correctable rate `e_cor`; the
/// margin absorbs statistical fluctuation and is explicit, never implied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub n_pairs_total: usize,
    pub e_check: f64,
    pub e_cor: f64,
    pub seed: u64,
    pub trials: u64,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pairs_total < 2 || self.n_pairs_total % 2 != 0 {
            return Err(Error::Config(format!(
                "n_pairs_total = {} must be even and at least 2",
                self.n_pairs_total
            )));
        }
        if !(0.0..1.0).contains(&self.e_check) {
            return Err(Error::Config(format!(
                "e_check = {} outside [0, 1)",
                self.e_check
            )));
        }
        if !(self.e_check < self.e_cor && self.e_cor <= 1.0) {
            return Err(Error::Config(format!(
                "need e_check < e_cor <= 1, got e_check = {}, e_cor = {}",
                self.e_check, self.e_cor
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        Ok(())
    }

    /// Number of checked pairs, `n`.
    pub fn n_checked(&self) -> usize {
        self.n_pairs_total / 2
    }
}

/// Exact joint distribution over the error bits of a plan's checked pairs.
///
/// Bit `i` of a key is the error bit of `plan.checked()[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBitDistribution {
    n_bits: usize,
    probs: BTreeMap<u64, f64>,
}

impl ErrorBitDistribution {
    fn new(n_bits: usize, probs: BTreeMap<u64, f64>) -> Self {
        debug_assert!((probs.values().sum::<f64>() - 1.0).abs() < 1e-9);
        ErrorBitDistribution { n_bits, probs }
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn probs(&self) -> &BTreeMap<u64, f64> {
        &self.probs
    }

    pub fn prob(&self, bits: u64) -> f64 {
        self.probs.get(&bits).copied().unwrap_or(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (&bits, &p) in &self.probs {
            acc += p;
            last = bits;
            if u < acc {
                return bits;
            }
        }
        last
    }

    /// Largest pointwise probability difference against another distribution.
    pub fn max_abs_deviation(&self, other: &ErrorBitDistribution) -> f64 {
        let mut keys: Vec<u64> = self.probs.keys().copied().collect();
        keys.extend(other.probs.keys().copied());
        keys.sort_unstable();
        keys.dedup();
        keys.iter()
            .map(|&k| (self.prob(k) - other.prob(k)).abs())
            .fold(0.0, f64::max)
    }
}

/// Raw single-qubit outcome distribution in local mode: two bits per checked
/// pair, `c = 2a + b`, packed as `c_i << (2i)`.
#[derive(Debug, Clone)]
struct RawOutcomeDistribution {
    n_pairs_checked: usize,
    probs: BTreeMap<u64, f64>,
}

impl RawOutcomeDistribution {
    fn marginal_error_bits(&self) -> ErrorBitDistribution {
        let mut probs: BTreeMap<u64, f64> = BTreeMap::new();
        for (&raw, &p) in &self.probs {
            *probs.entry(raw_to_bits(raw, self.n_pairs_checked)).or_insert(0.0) += p;
        }
        ErrorBitDistribution::new(self.n_pairs_checked, probs)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (&raw, &p) in &self.probs {
            acc += p;
            last = raw;
            if u < acc {
                return raw;
            }
        }
        last
    }
}

fn raw_to_bits(raw: u64, n_checked: usize) -> u64 {
    let mut bits = 0u64;
    for i in 0..n_checked {
        let c = (raw >> (2 * i)) & 0b11;
        bits |= (((c >> 1) ^ (c & 1)) & 1) << i;
    }
    bits
}

/// `H ⊗ H` on one pair, rotating the X measurement into digit readout.
fn hadamard_pair() -> DMatrix<Complex64> {
    let h = 0.5;
    DMatrix::from_row_slice(
        4,
        4,
        &[
            Complex64::new(h, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(-h, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(-h, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(-h, 0.0),
            Complex64::new(-h, 0.0),
            Complex64::new(h, 0.0),
            Complex64::new(-h, 0.0),
            Complex64::new(-h, 0.0),
            Complex64::new(h, 0.0),
        ],
    )
}

/// Pattern digit of pair `pair` inside a dense pattern index over `l` pairs.
#[inline]
fn pattern_digit(pattern_idx: usize, l: usize, pair: usize) -> usize {
    (pattern_idx >> (2 * (l - 1 - pair))) & 0b11
}

/// Error bits a pattern produces under the plan's checks (deterministic).
fn bits_for_pattern_digits(plan: &CheckPlan, digit_of: impl Fn(usize) -> usize) -> u64 {
    let mut bits = 0u64;
    for (i, c) in plan.checked().iter().enumerate() {
        let k = Pauli::ALL[digit_of(c.pair)];
        if c.basis.error_for(k) {
            bits |= 1 << i;
        }
    }
    bits
}

/// Exact error-bit distribution of a state under a plan.
///
/// Nonlocal mode projects onto Bell subspaces (diagonal in the pattern
/// representation); local mode computes the raw single-qubit outcome
/// distribution and marginalizes it to parities.
pub fn outcome_distribution(
    state: &ProtocolState,
    plan: &CheckPlan,
) -> Result<ErrorBitDistribution> {
    plan.validate_against(state)?;
    match plan.mode() {
        MeasurementMode::Nonlocal => nonlocal_distribution(state, plan),
        MeasurementMode::Local => Ok(local_raw_distribution(state, plan)?.marginal_error_bits()),
    }
}

fn nonlocal_distribution(state: &ProtocolState, plan: &CheckPlan) -> Result<ErrorBitDistribution> {
    let mut probs: BTreeMap<u64, f64> = BTreeMap::new();
    match state {
        ProtocolState::Pure(pure) => {
            let l = pure.n_pairs();
            let d_e = pure.eve_dim();
            let amps = pure.joint().amplitudes();
            for (idx, amp) in amps.iter().enumerate() {
                let mass = amp.norm_sqr();
                if mass == 0.0 {
                    continue;
                }
                let pattern_idx = idx / d_e;
                let bits = bits_for_pattern_digits(plan, |pair| pattern_digit(pattern_idx, l, pair));
                *probs.entry(bits).or_insert(0.0) += mass;
            }
        }
        ProtocolState::Classical(classical) => {
            for (pattern, &p) in classical.probs() {
                let bits = bits_for_pattern_digits(plan, |pair| {
                    pattern.get(pair).expect("validated length").index()
                });
                *probs.entry(bits).or_insert(0.0) += p;
            }
        }
    }
    Ok(ErrorBitDistribution::new(plan.n_checked(), probs))
}

fn local_raw_distribution(
    state: &ProtocolState,
    plan: &CheckPlan,
) -> Result<RawOutcomeDistribution> {
    let mut probs: BTreeMap<u64, f64> = BTreeMap::new();
    match state {
        ProtocolState::Pure(pure) => {
            let l = pure.n_pairs();
            let d_e = pure.eve_dim();
            let frame = measurement_frame_amplitudes(pure, plan)?;
            for (idx, amp) in frame.iter().enumerate() {
                let mass = amp.norm_sqr();
                if mass == 0.0 {
                    continue;
                }
                let comp_idx = idx / d_e;
                let mut raw = 0u64;
                for (i, c) in plan.checked().iter().enumerate() {
                    raw |= (pattern_digit(comp_idx, l, c.pair) as u64) << (2 * i);
                }
                *probs.entry(raw).or_insert(0.0) += mass;
            }
        }
        ProtocolState::Classical(classical) => {
            // Per checked pair a Bell vector yields the two raw outcomes of
            // the right parity with probability 1/2 each, in both bases.
            let n_checked = plan.n_checked();
            let weight = 1.0 / (1u64 << n_checked) as f64;
            for (pattern, &p) in classical.probs() {
                let bits = bits_for_pattern_digits(plan, |pair| {
                    pattern.get(pair).expect("validated length").index()
                });
                for combo in 0..(1u64 << n_checked) {
                    let mut raw = 0u64;
                    for i in 0..n_checked {
                        let parity = (bits >> i) & 1;
                        let low = (combo >> i) & 1;
                        // parity 0 -> c in {0b00, 0b11}; parity 1 -> {0b01, 0b10}.
                        let c = (low ^ parity) << 1 | low;
                        raw |= c << (2 * i);
                    }
                    *probs.entry(raw).or_insert(0.0) += p * weight;
                }
            }
        }
    }
    Ok(RawOutcomeDistribution {
        n_pairs_checked: plan.n_checked(),
        probs,
    })
}

/// Rotate the checked pair axes of a Bell-basis joint state into the local
/// measurement frame (computational digits; X pairs additionally by `H⊗H`).
fn measurement_frame_amplitudes(pure: &PureAttackState, plan: &CheckPlan) -> Result<Vec<Complex64>> {
    let u = bell_unitary();
    let h2 = hadamard_pair();
    let mut amps = pure.joint().amplitudes().to_vec();
    let layout = pure.joint().layout().clone();
    for c in plan.checked() {
        let pos = layout
            .position(&crate::attack::pair_label(c.pair))
            .expect("pair label exists");
        apply_axis(&mut amps, &layout, pos, &u);
        if c.basis == CheckBasis::X {
            apply_axis(&mut amps, &layout, pos, &h2);
        }
    }
    Ok(amps)
}

/// Undo [`measurement_frame_amplitudes`] on (possibly collapsed) amplitudes.
fn from_measurement_frame(
    amps: &mut Vec<Complex64>,
    pure: &PureAttackState,
    plan: &CheckPlan,
) {
    let u_dagger = bell_unitary().adjoint();
    let h2 = hadamard_pair();
    let layout = pure.joint().layout().clone();
    for c in plan.checked() {
        let pos = layout
            .position(&crate::attack::pair_label(c.pair))
            .expect("pair label exists");
        if c.basis == CheckBasis::X {
            apply_axis(amps, &layout, pos, &h2);
        }
        apply_axis(amps, &layout, pos, &u_dagger);
    }
}

/// Condition a state on nonlocal error bits: amplitudes (or pattern masses)
/// incompatible with the outcome are zeroed, the rest renormalized with their
/// relative magnitudes preserved.
pub fn collapse_nonlocal(
    state: &ProtocolState,
    plan: &CheckPlan,
    bits: u64,
) -> Result<ProtocolState> {
    plan.validate_against(state)?;
    match state {
        ProtocolState::Pure(pure) => {
            let l = pure.n_pairs();
            let d_e = pure.eve_dim();
            let mut amps = pure.joint().amplitudes().to_vec();
            for (idx, amp) in amps.iter_mut().enumerate() {
                let pattern_idx = idx / d_e;
                let got = bits_for_pattern_digits(plan, |pair| pattern_digit(pattern_idx, l, pair));
                if got != bits {
                    *amp = Complex64::ZERO;
                }
            }
            Ok(ProtocolState::Pure(PureAttackState::from_bell_amplitudes(
                l, d_e, amps,
            )?))
        }
        ProtocolState::Classical(classical) => {
            let mut probs: BTreeMap<_, _> = BTreeMap::new();
            for (pattern, &p) in classical.probs() {
                let got = bits_for_pattern_digits(plan, |pair| {
                    pattern.get(pair).expect("validated length").index()
                });
                if got == bits {
                    probs.insert(pattern.clone(), p);
                }
            }
            Ok(ProtocolState::Classical(BellDiagonalState::renormalized(
                classical.n_pairs(),
                probs,
            )?))
        }
    }
}

/// Condition a pure state on local raw outcomes (projective, then rotated
/// back to the Bell representation).
fn collapse_local_pure(
    pure: &PureAttackState,
    plan: &CheckPlan,
    raw: u64,
) -> Result<PureAttackState> {
    let l = pure.n_pairs();
    let d_e = pure.eve_dim();
    let mut amps = measurement_frame_amplitudes(pure, plan)?;
    for (idx, amp) in amps.iter_mut().enumerate() {
        let comp_idx = idx / d_e;
        let matches = plan.checked().iter().enumerate().all(|(i, c)| {
            pattern_digit(comp_idx, l, c.pair) as u64 == (raw >> (2 * i)) & 0b11
        });
        if !matches {
            *amp = Complex64::ZERO;
        }
    }
    from_measurement_frame(&mut amps, pure, plan);
    PureAttackState::from_bell_amplitudes(l, d_e, amps)
}

/// One sampled measurement round.
#[derive(Debug, Clone)]
pub struct SampledCheck {
    /// Error bit `i` belongs to `plan.checked()[i]`.
    pub error_bits: u64,
    pub records: Vec<CheckRecord>,
    /// Post-measurement state on all pairs (checked ones not yet discarded).
    pub collapsed: ProtocolState,
}

/// Sample an outcome and collapse the state accordingly.
pub fn sample_check<R: Rng + ?Sized>(
    state: &ProtocolState,
    plan: &CheckPlan,
    rng: &mut R,
) -> Result<SampledCheck> {
    plan.validate_against(state)?;
    match (state, plan.mode()) {
        (ProtocolState::Pure(pure), MeasurementMode::Local) => {
            let raw_dist = local_raw_distribution(state, plan)?;
            let raw = raw_dist.sample(rng);
            let bits = raw_to_bits(raw, plan.n_checked());
            let collapsed = collapse_local_pure(pure, plan, raw)?;
            Ok(SampledCheck {
                error_bits: bits,
                records: records_for(plan, bits, Some(raw)),
                collapsed: ProtocolState::Pure(collapsed),
            })
        }
        (_, mode) => {
            // Nonlocal sampling; classical states collapse by pattern
            // restriction in both modes (their raw outcomes carry no extra
            // information about unchecked pairs beyond the parities).
            let dist = nonlocal_distribution(state, plan)?;
            let bits = dist.sample(rng);
            let collapsed = collapse_nonlocal(state, plan, bits)?;
            let raw = match mode {
                MeasurementMode::Local => Some(sample_raw_given_bits(plan, bits, rng)),
                MeasurementMode::Nonlocal => None,
            };
            Ok(SampledCheck {
                error_bits: bits,
                records: records_for(plan, bits, raw),
                collapsed,
            })
        }
    }
}

/// For Bell-diagonal states the raw outcomes are uniform over the two
/// parity-compatible combinations per pair, independently.
fn sample_raw_given_bits<R: Rng + ?Sized>(plan: &CheckPlan, bits: u64, rng: &mut R) -> u64 {
    let mut raw = 0u64;
    for i in 0..plan.n_checked() {
        let parity = (bits >> i) & 1;
        let low = rng.random_range(0..2u64);
        let c = (low ^ parity) << 1 | low;
        raw |= c << (2 * i);
    }
    raw
}

fn records_for(plan: &CheckPlan, bits: u64, raw: Option<u64>) -> Vec<CheckRecord> {
    plan.checked()
        .iter()
        .enumerate()
        .map(|(i, c)| CheckRecord {
            pair: c.pair,
            basis: c.basis,
            error_bit: (bits >> i) & 1 == 1,
            raw_local_outcomes: raw.map(|r| {
                let digit = (r >> (2 * i)) & 0b11;
                (digit >> 1 == 1, digit & 1 == 1)
            }),
        })
        .collect()
}

/// Post-measurement state on the information pairs.
#[derive(Debug, Clone)]
pub enum ResidualState {
    /// Bell-diagonal residual, already restricted to the information pairs.
    Classical(BellDiagonalState),
    /// Collapsed pure attack (all pairs still present) plus which pairs carry
    /// information; consumers trace out or marginalize as needed.
    Pure {
        collapsed: PureAttackState,
        info_pairs: Vec<usize>,
    },
}

impl ResidualState {
    pub fn n_info_pairs(&self) -> usize {
        match self {
            ResidualState::Classical(s) => s.n_pairs(),
            ResidualState::Pure { info_pairs, .. } => info_pairs.len(),
        }
    }

    /// Bell-diagonal distribution over the information pairs (for the pure
    /// case, the diagonal of the reduced state).
    pub fn info_bell_diagonal(&self) -> Result<BellDiagonalState> {
        match self {
            ResidualState::Classical(s) => Ok(s.clone()),
            ResidualState::Pure {
                collapsed,
                info_pairs,
            } => collapsed.classicalize()?.marginal_onto(info_pairs),
        }
    }

    /// Reduced density operator on information pairs plus Eve (pure case
    /// only), Bell basis.
    pub fn info_density_with_eve(&self) -> Result<DensityOperator> {
        match self {
            ResidualState::Classical(_) => Err(Error::InvalidValue {
                what: "residual",
                why: "Eve is already traced out of a Bell-diagonal residual".into(),
            }),
            ResidualState::Pure {
                collapsed,
                info_pairs,
            } => {
                let mut labels: Vec<String> = info_pairs
                    .iter()
                    .map(|&p| crate::attack::pair_label(p))
                    .collect();
                labels.push(crate::attack::EVE_LABEL.to_string());
                let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
                collapsed.joint().partial_trace(&refs)
            }
        }
    }
}

/// Transcript of one full check phase.
#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub plan: CheckPlan,
    pub records: Vec<CheckRecord>,
    pub error_rate: f64,
    pub accepted: bool,
    pub residual: ResidualState,
}

/// Run one checking round: choose a uniformly random half of the pairs, a
/// uniformly random basis per checked pair, measure (nonlocal mode), and
/// discard the checked pairs.
pub fn run_check_phase(
    state: &ProtocolState,
    config: &ProtocolConfig,
    rng: &mut TrialRng,
) -> Result<ProtocolOutcome> {
    config.validate()?;
    if state.n_pairs() != config.n_pairs_total {
        return Err(Error::PlanMismatch(format!(
            "config expects {} pairs, state has {}",
            config.n_pairs_total,
            state.n_pairs()
        )));
    }
    let n = config.n_checked();
    let mut picked = rand::seq::index::sample(&mut rng.plan, config.n_pairs_total, n).into_vec();
    picked.sort_unstable();
    let checked: Vec<PairCheck> = picked
        .iter()
        .map(|&pair| PairCheck {
            pair,
            basis: if rng.basis.random_bool(0.5) {
                CheckBasis::Z
            } else {
                CheckBasis::X
            },
        })
        .collect();
    let plan = CheckPlan::new(config.n_pairs_total, checked, MeasurementMode::Nonlocal)?;

    let sampled = sample_check(state, &plan, &mut rng.outcome)?;
    let errors = sampled.error_bits.count_ones() as f64;
    let error_rate = errors / n as f64;
    let accepted = error_rate <= config.e_check;

    let info_pairs = plan.unchecked_pairs();
    let residual = match sampled.collapsed {
        ProtocolState::Classical(s) => ResidualState::Classical(s.marginal_onto(&info_pairs)?),
        ProtocolState::Pure(collapsed) => ResidualState::Pure {
            collapsed,
            info_pairs,
        },
    };
    Ok(ProtocolOutcome {
        plan,
        records: sampled.records,
        error_rate,
        accepted,
        residual,
    })
}

/// Numerical certificate that local and nonlocal checking agree.
#[derive(Debug, Clone)]
pub struct LocalEquivalenceReport {
    pub nonlocal_distribution: ErrorBitDistribution,
    pub local_distribution: ErrorBitDistribution,
    /// Largest pointwise gap between the two error-bit distributions.
    pub max_probability_deviation: f64,
    /// Info-pair reduced state: before vs. outcome-averaged nonlocal checks.
    pub max_nonlocal_state_deviation: f64,
    /// Info-pair reduced state: before vs. outcome-averaged local checks.
    pub max_local_state_deviation: f64,
    /// Info-pair reduced state: averaged nonlocal vs. averaged local.
    pub max_cross_mode_state_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compare both modes on the same plan: error-bit statistics must match, and
/// the information pairs' reduced density operator must be invariant under
/// outcome-averaged measurement in either mode.
pub fn local_equivalence_report(
    state: &ProtocolState,
    plan: &CheckPlan,
    tolerance: f64,
) -> Result<LocalEquivalenceReport> {
    plan.validate_against(state)?;
    let nonlocal_plan = plan.with_mode(MeasurementMode::Nonlocal);
    let local_plan = plan.with_mode(MeasurementMode::Local);

    let nonlocal_distribution = outcome_distribution(state, &nonlocal_plan)?;
    let local_distribution = outcome_distribution(state, &local_plan)?;
    let max_probability_deviation = nonlocal_distribution.max_abs_deviation(&local_distribution);

    let info_pairs = plan.unchecked_pairs();
    if info_pairs.is_empty() {
        return Err(Error::PlanMismatch(
            "equivalence report needs at least one unchecked pair".into(),
        ));
    }

    let before = info_reduced(state, &info_pairs)?;
    let after_nonlocal = averaged_after_nonlocal(state, &nonlocal_plan, &info_pairs)?;
    let after_local = averaged_after_local(state, &local_plan, &info_pairs)?;

    let max_nonlocal_state_deviation = max_entry_deviation(&before, &after_nonlocal);
    let max_local_state_deviation = max_entry_deviation(&before, &after_local);
    let max_cross_mode_state_deviation = max_entry_deviation(&after_nonlocal, &after_local);

    let passed = max_probability_deviation <= tolerance
        && max_nonlocal_state_deviation <= tolerance
        && max_local_state_deviation <= tolerance
        && max_cross_mode_state_deviation <= tolerance;
    Ok(LocalEquivalenceReport {
        nonlocal_distribution,
        local_distribution,
        max_probability_deviation,
        max_nonlocal_state_deviation,
        max_local_state_deviation,
        max_cross_mode_state_deviation,
        tolerance,
        passed,
    })
}

/// Info-pair reduced density operator, Bell basis.
fn info_reduced(state: &ProtocolState, info_pairs: &[usize]) -> Result<DensityOperator> {
    match state {
        ProtocolState::Pure(pure) => {
            let labels: Vec<String> = info_pairs
                .iter()
                .map(|&p| crate::attack::pair_label(p))
                .collect();
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            pure.joint().partial_trace(&refs)
        }
        ProtocolState::Classical(classical) => {
            classical.marginal_onto(info_pairs)?.density_operator()
        }
    }
}

fn averaged_after_nonlocal(
    state: &ProtocolState,
    plan: &CheckPlan,
    info_pairs: &[usize],
) -> Result<DensityOperator> {
    let dist = nonlocal_distribution(state, plan)?;
    let mut acc: Option<DMatrix<Complex64>> = None;
    let mut layout = None;
    for (&bits, &p) in dist.probs() {
        if p <= 0.0 {
            continue;
        }
        let collapsed = collapse_nonlocal(state, plan, bits)?;
        let reduced = info_reduced(&collapsed, info_pairs)?;
        let weighted = reduced.matrix() * Complex64::new(p, 0.0);
        acc = Some(match acc {
            None => weighted,
            Some(m) => m + weighted,
        });
        layout = Some(reduced.layout().clone());
    }
    DensityOperator::new(acc.expect("distribution non-empty"), layout.unwrap())
}

fn averaged_after_local(
    state: &ProtocolState,
    plan: &CheckPlan,
    info_pairs: &[usize],
) -> Result<DensityOperator> {
    match state {
        ProtocolState::Pure(pure) => {
            let raw_dist = local_raw_distribution(state, plan)?;
            let mut acc: Option<DMatrix<Complex64>> = None;
            let mut layout = None;
            for (&raw, &p) in &raw_dist.probs {
                if p <= 0.0 {
                    continue;
                }
                let collapsed = ProtocolState::Pure(collapse_local_pure(pure, plan, raw)?);
                let reduced = info_reduced(&collapsed, info_pairs)?;
                let weighted = reduced.matrix() * Complex64::new(p, 0.0);
                acc = Some(match acc {
                    None => weighted,
                    Some(m) => m + weighted,
                });
                layout = Some(reduced.layout().clone());
            }
            DensityOperator::new(acc.expect("distribution non-empty"), layout.unwrap())
        }
        ProtocolState::Classical(classical) => {
            // Raw local outcomes refine the parities without touching the
            // pattern weights, so conditioning and averaging reduces to the
            // nonlocal computation on the Bell-diagonal state.
            let _ = classical;
            averaged_after_nonlocal(state, &plan.with_mode(MeasurementMode::Nonlocal), info_pairs)
        }
    }
}

fn max_entry_deviation(a: &DensityOperator, b: &DensityOperator) -> f64 {
    let mut max = 0.0f64;
    for i in 0..a.dim() {
        for j in 0..a.dim() {
            max = max.max((a.matrix()[(i, j)] - b.matrix()[(i, j)]).norm());
        }
    }
    max
}
