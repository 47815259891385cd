//! Desk-scale model of the distillation / error-correction stage.
//!
//! The residual state after checking is Bell-diagonal, so a quantum code's
//! action reduces to classifying Pauli patterns: anything within the code's
//! correction radius collapses to the all-`Φ+` pattern, everything else keeps
//! its mass in place (no partial credit, a conservative fidelity bound).
//! The sifting experiments quantify how the random checks filter out states
//! with many illegitimate pairs.

use rand::Rng;

use crate::bell::{Pauli, PauliPattern};
use crate::checking::ProtocolConfig;
use crate::error::{Error, Result};
use std::collections::BTreeMap;

use crate::attack::BellDiagonalState;

/// Abstract correction capability: up to `t_x` bit-flip-type and `t_z`
/// phase-flip-type errors on `n_info` information pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeModel {
    pub t_x: usize,
    pub t_z: usize,
    pub n_info: usize,
}

impl CodeModel {
    pub fn new(t_x: usize, t_z: usize, n_info: usize) -> Result<Self> {
        if t_x > n_info || t_z > n_info {
            return Err(Error::InvalidValue {
                what: "code model",
                why: format!("correction radii ({t_x}, {t_z}) exceed n_info = {n_info}"),
            });
        }
        Ok(CodeModel { t_x, t_z, n_info })
    }
}

/// X-type and Z-type error counts of a pattern; Y contributes to both,
/// following the decomposition Y ∝ XZ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorTypeCounts {
    pub x_type: usize,
    pub z_type: usize,
}

pub fn error_type_counts(pattern: &PauliPattern) -> ErrorTypeCounts {
    let mut counts = ErrorTypeCounts {
        x_type: 0,
        z_type: 0,
    };
    for &k in pattern.entries() {
        if k.has_bit_flip() {
            counts.x_type += 1;
        }
        if k.has_phase_flip() {
            counts.z_type += 1;
        }
    }
    counts
}

/// Apply the code: correctable mass moves to the all-identity pattern, the
/// rest stays put. Returns the final fidelity to `|Φ+⟩^⊗n_info` (the
/// corrected mass) together with the corrected distribution.
pub fn apply_code(
    residual: &BellDiagonalState,
    code: &CodeModel,
) -> Result<(f64, BellDiagonalState)> {
    if residual.n_pairs() != code.n_info {
        return Err(Error::PlanMismatch(format!(
            "residual covers {} pairs, code expects {}",
            residual.n_pairs(),
            code.n_info
        )));
    }
    let identity = PauliPattern::identity(code.n_info);
    let mut probs: BTreeMap<PauliPattern, f64> = BTreeMap::new();
    let mut corrected_mass = 0.0;
    for (pattern, &p) in residual.probs() {
        let counts = error_type_counts(pattern);
        if counts.x_type <= code.t_x && counts.z_type <= code.t_z {
            corrected_mass += p;
            *probs.entry(identity.clone()).or_insert(0.0) += p;
        } else {
            *probs.entry(pattern.clone()).or_insert(0.0) += p;
        }
    }
    Ok((corrected_mass, BellDiagonalState::new(code.n_info, probs)?))
}

/// Probability that a single checked pair of this illegitimate kind shows an
/// error under a uniformly random {Z, X} basis choice, conditional structure:
/// X and Z kinds err in exactly one basis, Y in both.
fn detection_is_certain(kind: Pauli) -> Result<bool> {
    match kind {
        Pauli::I => Err(Error::InvalidValue {
            what: "illegitimate kind",
            why: "the identity pattern is the legitimate state".into(),
        }),
        Pauli::Y => Ok(true),
        Pauli::X | Pauli::Z => Ok(false),
    }
}

/// The shared accept test; Monte Carlo and the closed form must agree on the
/// exact float comparison.
#[inline]
fn passes(errors: usize, n_checked: usize, e_check: f64) -> bool {
    errors as f64 / n_checked as f64 <= e_check
}

/// `C(n, k)` in f64 via the multiplicative form; exact to ~1e-14 relative for
/// the desk-scale arguments used here.
fn binomial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - k + i + 1) as f64 / (i + 1) as f64;
    }
    acc
}

/// `P(Binomial(j, 1/2) ≤ threshold errors out of n checked pass the test)`.
fn pass_probability_given_checked(j: usize, n_checked: usize, e_check: f64, certain: bool) -> f64 {
    if certain {
        return if passes(j, n_checked, e_check) { 1.0 } else { 0.0 };
    }
    let scale = 0.5f64.powi(j as i32);
    (0..=j)
        .filter(|&r| passes(r, n_checked, e_check))
        .map(|r| binomial_f64(j, r) * scale)
        .sum()
}

/// Hypergeometric pmf: `j` of the `m` marked pairs among `n` checked of `N`.
fn hypergeometric_pmf(big_n: usize, m: usize, n: usize, j: usize) -> f64 {
    if j > m || j > n || n - j > big_n - m {
        return 0.0;
    }
    binomial_f64(m, j) * binomial_f64(big_n - m, n - j) / binomial_f64(big_n, n)
}

/// Closed-form probability that a state with `m` illegitimate pairs of the
/// given kind passes the check phase: hypergeometric draw of how many get
/// checked, binomial detection among those.
pub fn exact_pass_probability(m: usize, config: &ProtocolConfig, kind: Pauli) -> Result<f64> {
    config.validate()?;
    let certain = detection_is_certain(kind)?;
    let big_n = config.n_pairs_total;
    if m > big_n {
        return Err(Error::IndexOutOfRange {
            what: "illegitimate pair count",
            index: m,
            size: big_n + 1,
        });
    }
    let n = config.n_checked();
    let mut total = 0.0;
    for j in 0..=m.min(n) {
        total += hypergeometric_pmf(big_n, m, n, j)
            * pass_probability_given_checked(j, n, config.e_check, certain);
    }
    // The f64 binomial products can overshoot 1 by a few ulps.
    Ok(total.clamp(0.0, 1.0))
}

/// Closed-form joint weights `P(pass, m − j residual illegitimate pairs)` for
/// residual counts `0..=m` (index = residual count among the unchecked half).
pub fn exact_pass_and_residual(
    m: usize,
    config: &ProtocolConfig,
    kind: Pauli,
) -> Result<Vec<f64>> {
    config.validate()?;
    let certain = detection_is_certain(kind)?;
    let big_n = config.n_pairs_total;
    if m > big_n {
        return Err(Error::IndexOutOfRange {
            what: "illegitimate pair count",
            index: m,
            size: big_n + 1,
        });
    }
    let n = config.n_checked();
    let mut joint = vec![0.0; m + 1];
    for j in 0..=m.min(n) {
        if m - j > big_n - n {
            continue;
        }
        joint[m - j] += hypergeometric_pmf(big_n, m, n, j)
            * pass_probability_given_checked(j, n, config.e_check, certain);
    }
    Ok(joint)
}

/// Monte Carlo sift estimate for `m` illegitimate pairs of one kind.
#[derive(Debug, Clone)]
pub struct SiftEstimate {
    pub m_illegitimate: usize,
    pub trials: u64,
    pub passes: u64,
    pub pass_probability: f64,
    /// Distribution of the residual illegitimate count among unchecked pairs
    /// given a pass (index = count); empty when nothing passed.
    pub conditional_residual_counts: Vec<f64>,
}

impl SiftEstimate {
    /// `P[residual ratio > threshold | pass]`, ratio over the n unchecked.
    pub fn conditional_ratio_exceeds(&self, threshold: f64, n_unchecked: usize) -> f64 {
        self.conditional_residual_counts
            .iter()
            .enumerate()
            .filter(|(r, _)| *r as f64 / n_unchecked as f64 > threshold)
            .map(|(_, &p)| p)
            .sum()
    }
}

/// Monte Carlo over random check subsets and bases on a state whose `m`
/// illegitimate pairs all carry `kind` (X by default in the harness; Y is
/// the worst case since both bases detect it).
pub fn sift_probability<R: Rng + ?Sized>(
    m: usize,
    config: &ProtocolConfig,
    trials: u64,
    kind: Pauli,
    rng: &mut R,
) -> Result<SiftEstimate> {
    config.validate()?;
    let certain = detection_is_certain(kind)?;
    let big_n = config.n_pairs_total;
    if m > big_n {
        return Err(Error::IndexOutOfRange {
            what: "illegitimate pair count",
            index: m,
            size: big_n + 1,
        });
    }
    if trials == 0 {
        return Err(Error::InvalidValue {
            what: "trials",
            why: "must be positive".into(),
        });
    }
    let n = config.n_checked();
    let mut passes_count = 0u64;
    let mut residual_hist = vec![0u64; m + 1];
    for _ in 0..trials {
        // The m illegitimate pairs sit at indices < m; only the overlap with
        // the random checked subset matters.
        let mut checked_illegitimate = 0usize;
        for idx in rand::seq::index::sample(rng, big_n, n) {
            if idx < m {
                checked_illegitimate += 1;
            }
        }
        let errors = if certain {
            checked_illegitimate
        } else {
            // Uniform basis choice detects each with probability 1/2.
            (0..checked_illegitimate)
                .filter(|_| rng.random_bool(0.5))
                .count()
        };
        if passes(errors, n, config.e_check) {
            passes_count += 1;
            residual_hist[m - checked_illegitimate] += 1;
        }
    }
    let conditional_residual_counts = if passes_count > 0 {
        residual_hist
            .iter()
            .map(|&c| c as f64 / passes_count as f64)
            .collect()
    } else {
        Vec::new()
    };
    Ok(SiftEstimate {
        m_illegitimate: m,
        trials,
        passes: passes_count,
        pass_probability: passes_count as f64 / trials as f64,
        conditional_residual_counts,
    })
}

/// Posterior over the residual illegitimate ratio given a pass, for a prior
/// over `m`, using the exact per-`m` pass probabilities.
#[derive(Debug, Clone)]
pub struct BayesReport {
    /// Total probability of passing under the prior.
    pub pass_probability: f64,
    /// Posterior P(residual count = r | pass), r over the unchecked half.
    pub posterior_residual_counts: Vec<f64>,
    /// P(residual ratio > 2·e_cor | pass).
    pub prob_ratio_exceeds_2ecor: f64,
    /// Set when the prior never passes the test; the posterior is undefined.
    pub never_passes: bool,
}

pub fn bayes_residual_bound(
    prior_over_m: &[f64],
    config: &ProtocolConfig,
    kind: Pauli,
) -> Result<BayesReport> {
    config.validate()?;
    let big_n = config.n_pairs_total;
    if prior_over_m.len() != big_n + 1 {
        return Err(Error::InvalidProbability(format!(
            "prior has {} entries, need {} (m = 0..=2n)",
            prior_over_m.len(),
            big_n + 1
        )));
    }
    if prior_over_m.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidProbability("negative prior mass".into()));
    }
    let total_prior: f64 = prior_over_m.iter().sum();
    if (total_prior - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidProbability(format!(
            "prior sums to {total_prior}"
        )));
    }
    let n = config.n_checked();
    let mut joint_residual = vec![0.0; n + 1];
    let mut pass_probability = 0.0;
    for (m, &prior) in prior_over_m.iter().enumerate() {
        if prior == 0.0 {
            continue;
        }
        let joint = exact_pass_and_residual(m, config, kind)?;
        for (r, &w) in joint.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            // Residual counts cannot exceed the unchecked half.
            debug_assert!(r <= n);
            joint_residual[r] += prior * w;
            pass_probability += prior * w;
        }
    }
    if pass_probability <= 0.0 {
        return Ok(BayesReport {
            pass_probability: 0.0,
            posterior_residual_counts: Vec::new(),
            prob_ratio_exceeds_2ecor: 0.0,
            never_passes: true,
        });
    }
    let posterior: Vec<f64> = joint_residual
        .iter()
        .map(|&w| w / pass_probability)
        .collect();
    let threshold = 2.0 * config.e_cor;
    let prob_ratio_exceeds_2ecor = posterior
        .iter()
        .enumerate()
        .filter(|(r, _)| *r as f64 / n as f64 > threshold)
        .map(|(_, &p)| p)
        .sum();
    Ok(BayesReport {
        pass_probability,
        posterior_residual_counts: posterior,
        prob_ratio_exceeds_2ecor,
        never_passes: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{named_attack, NamedAttackKind};
    use crate::rng::{substream, StreamPurpose};
    use approx::assert_abs_diff_eq;

    fn config(n_pairs_total: usize, e_check: f64, e_cor: f64) -> ProtocolConfig {
        ProtocolConfig {
            n_pairs_total,
            e_check,
            e_cor,
            seed: 7,
            trials: 1,
        }
    }

    #[test]
    fn error_type_counting() {
        let zero = PauliPattern::identity(4);
        assert_eq!(error_type_counts(&zero), ErrorTypeCounts { x_type: 0, z_type: 0 });

        let xz = PauliPattern::parse("1300").unwrap();
        assert_eq!(error_type_counts(&xz), ErrorTypeCounts { x_type: 1, z_type: 1 });

        let yy = PauliPattern::parse("22").unwrap();
        assert_eq!(error_type_counts(&yy), ErrorTypeCounts { x_type: 2, z_type: 2 });
    }

    #[test]
    fn apply_code_radius_boundaries() {
        let identity = BellDiagonalState::delta(PauliPattern::identity(3));
        let code = CodeModel::new(1, 1, 3).unwrap();
        let (f, _) = apply_code(&identity, &code).unwrap();
        assert_abs_diff_eq!(f, 1.0, epsilon = 1e-15);

        let single_x = BellDiagonalState::delta(PauliPattern::parse("100").unwrap());
        let (f, corrected) = apply_code(&single_x, &CodeModel::new(1, 0, 3).unwrap()).unwrap();
        assert_abs_diff_eq!(f, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            corrected.prob(&PauliPattern::identity(3)),
            1.0,
            epsilon = 1e-15
        );

        let (f, corrected) = apply_code(&single_x, &CodeModel::new(0, 0, 3).unwrap()).unwrap();
        assert_abs_diff_eq!(f, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            corrected.prob(&PauliPattern::parse("100").unwrap()),
            1.0,
            epsilon = 1e-15
        );

        assert!(apply_code(&single_x, &CodeModel::new(1, 1, 4).unwrap()).is_err());
        assert!(CodeModel::new(5, 0, 3).is_err());
    }

    /// Binomial-sum oracle, exact in u128 arithmetic.
    fn binomial_tail_oracle(n: usize, p: f64, t: usize) -> f64 {
        fn choose(n: usize, k: usize) -> u128 {
            let mut acc: u128 = 1;
            for i in 0..k.min(n - k) {
                acc = acc * (n - k.min(n - k) + i + 1) as u128 / (i + 1) as u128;
            }
            acc
        }
        (0..=t)
            .map(|k| choose(n, k) as f64 * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32))
            .sum()
    }

    #[test]
    fn iid_x_channel_fidelity_is_a_binomial_tail() {
        let p = 0.13;
        let n_info = 10;
        let residual = named_attack(
            &NamedAttackKind::PauliChannel {
                p_x: p,
                p_y: 0.0,
                p_z: 0.0,
            },
            n_info,
        )
        .unwrap();
        let code = CodeModel::new(2, 2, n_info).unwrap();
        let (f, corrected) = apply_code(&residual, &code).unwrap();
        let expected = binomial_tail_oracle(n_info, p, 2);
        assert_abs_diff_eq!(f, expected, epsilon = 1e-12);

        // Mass conservation and fidelity never below the untouched identity mass.
        let total: f64 = corrected.probs().values().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        assert!(f >= residual.prob(&PauliPattern::identity(n_info)) - 1e-15);
    }

    #[test]
    fn apply_code_never_decreases_identity_mass() {
        let mut rng = substream(3, 0, StreamPurpose::Auxiliary);
        for _ in 0..20 {
            use rand::Rng;
            let residual = named_attack(
                &NamedAttackKind::PauliChannel {
                    p_x: rng.random::<f64>() * 0.3,
                    p_y: rng.random::<f64>() * 0.3,
                    p_z: rng.random::<f64>() * 0.3,
                },
                4,
            )
            .unwrap();
            let code = CodeModel::new(
                rng.random_range(0..=4),
                rng.random_range(0..=4),
                4,
            )
            .unwrap();
            let (f, corrected) = apply_code(&residual, &code).unwrap();
            assert!(f >= residual.prob(&PauliPattern::identity(4)) - 1e-15);
            let total: f64 = corrected.probs().values().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(
                f,
                corrected.prob(&PauliPattern::identity(4)),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn sift_boundary_cases() {
        let cfg = config(20, 0.04, 0.05);
        let mut rng = substream(11, 0, StreamPurpose::Auxiliary);

        let clean = sift_probability(0, &cfg, 2000, Pauli::X, &mut rng).unwrap();
        assert_abs_diff_eq!(clean.pass_probability, 1.0, epsilon = 1e-15);

        // All pairs Ψ−-like: every checked pair errors with certainty.
        let worst = sift_probability(20, &cfg, 2000, Pauli::Y, &mut rng).unwrap();
        assert_abs_diff_eq!(worst.pass_probability, 0.0, epsilon = 1e-15);
        assert!(worst.conditional_residual_counts.is_empty());

        assert!(sift_probability(0, &cfg, 0, Pauli::X, &mut rng).is_err());
        assert!(sift_probability(3, &cfg, 10, Pauli::I, &mut rng).is_err());
        assert!(sift_probability(21, &cfg, 10, Pauli::X, &mut rng).is_err());
    }

    #[test]
    fn exact_pass_probability_is_monotone_and_matches_monte_carlo() {
        let cfg = config(20, 0.04, 0.05);
        let mut previous = f64::INFINITY;
        for m in 0..=20 {
            let exact = exact_pass_probability(m, &cfg, Pauli::X).unwrap();
            assert!(
                exact <= previous + 1e-12,
                "pass probability increased at m = {m}"
            );
            previous = exact;

            let mut rng = substream(5, m as u64, StreamPurpose::Auxiliary);
            let mc = sift_probability(m, &cfg, 20_000, Pauli::X, &mut rng).unwrap();
            let sigma = (exact * (1.0 - exact) / 20_000.0).sqrt();
            assert!(
                (mc.pass_probability - exact).abs() <= 3.0 * sigma + 1e-9,
                "m = {m}: MC {} vs exact {exact} (σ = {sigma})",
                mc.pass_probability
            );
        }
        assert_abs_diff_eq!(
            exact_pass_probability(0, &cfg, Pauli::X).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn threshold_separation_holds() {
        // m beyond 4n·e_cor passes strictly less often than at the threshold.
        let cfg = config(100, 0.04, 0.05);
        let threshold_m = (2.0 * cfg.n_pairs_total as f64 * cfg.e_cor) as usize; // 4n·e_cor
        let at_threshold = exact_pass_probability(threshold_m, &cfg, Pauli::X).unwrap();
        assert!(at_threshold > 0.0);
        for m in threshold_m + 1..=cfg.n_pairs_total {
            let p = exact_pass_probability(m, &cfg, Pauli::X).unwrap();
            assert!(
                p < at_threshold,
                "m = {m}: {p} not below threshold value {at_threshold}"
            );
        }
    }

    #[test]
    fn exact_residual_counts_sum_to_the_pass_probability() {
        let cfg = config(20, 0.1, 0.2);
        for m in 0..=20 {
            let joint = exact_pass_and_residual(m, &cfg, Pauli::X).unwrap();
            let total: f64 = joint.iter().sum();
            let pass = exact_pass_probability(m, &cfg, Pauli::X).unwrap();
            assert_abs_diff_eq!(total, pass, epsilon = 1e-12);
        }
    }

    #[test]
    fn bayes_degenerate_priors() {
        let cfg = config(20, 0.04, 0.05);
        let mut prior = vec![0.0; 21];
        prior[0] = 1.0;
        let report = bayes_residual_bound(&prior, &cfg, Pauli::X).unwrap();
        assert!(!report.never_passes);
        assert_abs_diff_eq!(report.pass_probability, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.posterior_residual_counts[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.prob_ratio_exceeds_2ecor, 0.0, epsilon = 1e-15);

        // All pairs illegitimate with certain detection: never passes.
        let mut prior = vec![0.0; 21];
        prior[20] = 1.0;
        let report = bayes_residual_bound(&prior, &cfg, Pauli::Y).unwrap();
        assert!(report.never_passes);

        let bad = vec![0.5; 21];
        assert!(bayes_residual_bound(&bad, &cfg, Pauli::X).is_err());
        assert!(bayes_residual_bound(&prior[..10], &cfg, Pauli::X).is_err());
    }

    #[test]
    fn bayes_uniform_prior_matches_monte_carlo() {
        let cfg = config(20, 0.04, 0.05);
        let prior = vec![1.0 / 21.0; 21];
        let report = bayes_residual_bound(&prior, &cfg, Pauli::X).unwrap();
        assert!(!report.never_passes);
        let posterior_total: f64 = report.posterior_residual_counts.iter().sum();
        assert_abs_diff_eq!(posterior_total, 1.0, epsilon = 1e-12);

        // Monte Carlo over the same prior: draw m, run a trial, tally the
        // exceedance ratio among passes.
        let mut rng = substream(13, 0, StreamPurpose::Auxiliary);
        use rand::Rng;
        let trials = 200_000u64;
        let n = cfg.n_checked();
        let mut passes_count = 0u64;
        let mut exceed = 0u64;
        for _ in 0..trials {
            let m = rng.random_range(0..=20usize);
            let mut checked_illegitimate = 0usize;
            for idx in rand::seq::index::sample(&mut rng, 20, n) {
                if idx < m {
                    checked_illegitimate += 1;
                }
            }
            let errors = (0..checked_illegitimate)
                .filter(|_| rng.random_bool(0.5))
                .count();
            if passes(errors, n, cfg.e_check) {
                passes_count += 1;
                let ratio = (m - checked_illegitimate) as f64 / n as f64;
                if ratio > 2.0 * cfg.e_cor {
                    exceed += 1;
                }
            }
        }
        let mc = exceed as f64 / passes_count as f64;
        let p = report.prob_ratio_exceeds_2ecor;
        let sigma = (p * (1.0 - p) / passes_count as f64).sqrt();
        assert!(
            (mc - p).abs() <= 3.0 * sigma + 1e-6,
            "MC {mc} vs exact {p} (σ = {sigma})"
        );
    }

    #[test]
    fn residual_exceedance_shrinks_with_protocol_size() {
        // Qualitative trend: under a uniform prior over m, the posterior
        // chance of the residual ratio exceeding 2·e_cor (given a pass)
        // drops as 2n grows. Thresholds are chosen so the smallest size
        // already tolerates at least one error (n·e_check ≥ 1); below that,
        // integer-threshold granularity dominates the trend.
        let mut previous = f64::INFINITY;
        for &big_n in &[20usize, 50, 100] {
            let cfg = config(big_n, 0.1, 0.15);
            let prior: Vec<f64> = vec![1.0 / (big_n + 1) as f64; big_n + 1];
            let report = bayes_residual_bound(&prior, &cfg, Pauli::X).unwrap();
            assert!(!report.never_passes);
            assert!(
                report.prob_ratio_exceeds_2ecor < previous,
                "2n = {big_n}: {} not below {previous}",
                report.prob_ratio_exceeds_2ecor
            );
            previous = report.prob_ratio_exceeds_2ecor;
        }
    }
}
