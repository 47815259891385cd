//! The verification suites and the replay path.
//!
//! Every row is a pure function of `(config, trial index)`: all randomness
//! comes from substreams keyed by the master seed and the trial, so trials
//! run in parallel and still produce the same rows in the same order.

use rand::Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::attack::{ProtocolState, PureAttackState};
use crate::checking::{
    local_equivalence_report, outcome_distribution, run_check_phase, CheckBasis, CheckPlan,
    MeasurementMode, PairCheck,
};
use crate::distillation::{exact_pass_probability, sift_probability};
use crate::error::{Error, Result};
use crate::rng::{substream, StreamPurpose, TrialRng};
use crate::security::{
    fidelity_decomposition_check, holevo_report, legitimate_target, mix_ensemble, purify,
    random_ensemble, register_measurement_equivalence, KeyMeasurement, SECURITY_TOL,
};

use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{
    write_reports, write_summary, MetricValue, ReportRow, Summary, ARTIFACT_VERSION,
};

/// How many random plans each classicalization trial compares.
const PLANS_PER_TRIAL: usize = 20;

/// Everything a finished experiment produced.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub rows: Vec<ReportRow>,
    pub summary: Summary,
    pub report_files: Vec<std::path::PathBuf>,
}

impl ExperimentOutcome {
    pub fn pass(&self) -> bool {
        self.summary.pass
    }
}

/// Run the configured suite and write its reports.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let rows = compute_rows(config)?;
    let (pass, failures) = evaluate(config, &rows);

    let dir = config.output_dir();
    let mut report_files = write_reports(&dir, config.experiment.name(), &rows, config.report_format)?;
    let summary = Summary {
        artifact_version: ARTIFACT_VERSION.to_string(),
        experiment: config.experiment.name().to_string(),
        seed: config.protocol.seed,
        trials: config.protocol.trials,
        tolerances: config.tolerances,
        pass,
        failures,
        report_files: report_files
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            })
            .collect(),
    };
    report_files.push(write_summary(&dir, &summary)?);
    Ok(ExperimentOutcome {
        rows,
        summary,
        report_files,
    })
}

/// Compute all rows without touching the filesystem (used by tests and
/// replay). Trials run in parallel; rows come back in trial order.
pub fn compute_rows(config: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::RunProtocol => {
            let state = config
                .attack
                .as_ref()
                .expect("validated: attack present")
                .build()?;
            (0..config.protocol.trials)
                .into_par_iter()
                .map(|trial| run_protocol_row(config, &state, trial))
                .collect()
        }
        ExperimentKind::VerifyClassicalization => (0..config.protocol.trials)
            .into_par_iter()
            .map(|trial| classicalization_row(config, trial))
            .collect(),
        ExperimentKind::VerifyLocalEquivalence => (0..config.protocol.trials)
            .into_par_iter()
            .map(|trial| local_equivalence_row(config, trial))
            .collect(),
        ExperimentKind::VerifySecurityBounds => (0..config.protocol.trials)
            .into_par_iter()
            .map(|trial| security_row(config, trial))
            .collect(),
        ExperimentKind::SiftSweep => {
            let m_values = sift_m_values(config);
            m_values
                .par_iter()
                .enumerate()
                .map(|(i, &m)| sift_row(config, i as u64, m))
                .collect()
        }
    }
}

/// Recompute a single row (the replay primitive).
pub fn compute_row(config: &ExperimentConfig, trial: u64) -> Result<ReportRow> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::RunProtocol => {
            let state = config
                .attack
                .as_ref()
                .expect("validated: attack present")
                .build()?;
            run_protocol_row(config, &state, trial)
        }
        ExperimentKind::VerifyClassicalization => classicalization_row(config, trial),
        ExperimentKind::VerifyLocalEquivalence => local_equivalence_row(config, trial),
        ExperimentKind::VerifySecurityBounds => security_row(config, trial),
        ExperimentKind::SiftSweep => {
            let m_values = sift_m_values(config);
            let m = *m_values.get(trial as usize).ok_or(Error::IndexOutOfRange {
                what: "sift-sweep trial",
                index: trial as usize,
                size: m_values.len(),
            })?;
            sift_row(config, trial, m)
        }
    }
}

fn sift_m_values(config: &ExperimentConfig) -> Vec<usize> {
    let mut values = config
        .sift
        .as_ref()
        .and_then(|s| s.m_values.clone())
        .unwrap_or_else(|| (0..=config.protocol.n_pairs_total).collect());
    values.sort_unstable();
    values.dedup();
    values
}

fn run_protocol_row(
    config: &ExperimentConfig,
    state: &ProtocolState,
    trial: u64,
) -> Result<ReportRow> {
    let mut rng = TrialRng::new(config.protocol.seed, trial);
    let outcome = run_check_phase(state, &config.protocol, &mut rng)?;
    Ok(
        ReportRow::new(config.experiment.name(), trial, config.protocol.seed)
            .float("error_rate", outcome.error_rate)
            .bool("accepted", outcome.accepted),
    )
}

/// Random attack sized like the acceptance corpus: 2–4 pairs, Eve dimension
/// 1, 2, or 4, up to eight terms.
fn random_acceptance_attack<R: Rng + ?Sized>(rng: &mut R) -> Result<PureAttackState> {
    let n_pairs = rng.random_range(2..=4usize);
    let eve_dim = [1usize, 2, 4][rng.random_range(0..3)];
    crate::attack::random_term_attack(rng, n_pairs, eve_dim, 8)
}

fn random_plan<R: Rng + ?Sized>(
    rng: &mut R,
    n_total: usize,
    n_checked: usize,
    mode: MeasurementMode,
) -> Result<CheckPlan> {
    let mut picked = rand::seq::index::sample(rng, n_total, n_checked).into_vec();
    picked.sort_unstable();
    let checked = picked
        .into_iter()
        .map(|pair| PairCheck {
            pair,
            basis: if rng.random_bool(0.5) {
                CheckBasis::Z
            } else {
                CheckBasis::X
            },
        })
        .collect();
    CheckPlan::new(n_total, checked, mode)
}

fn classicalization_row(config: &ExperimentConfig, trial: u64) -> Result<ReportRow> {
    let mut aux = substream(config.protocol.seed, trial, StreamPurpose::Auxiliary);
    let attack = match &config.attack {
        Some(description) => match description.build()? {
            ProtocolState::Pure(a) => a,
            ProtocolState::Classical(_) => unreachable!("validated: term-form"),
        },
        None => random_acceptance_attack(&mut aux)?,
    };
    let pure = ProtocolState::Pure(attack.clone());
    let classical = ProtocolState::Classical(attack.classicalize()?);

    let n_pairs = attack.n_pairs();
    let mut max_deviation = 0.0f64;
    for _ in 0..PLANS_PER_TRIAL {
        let n_checked = aux.random_range(1..=n_pairs);
        let plan = random_plan(&mut aux, n_pairs, n_checked, MeasurementMode::Nonlocal)?;
        let dp = outcome_distribution(&pure, &plan)?;
        let dc = outcome_distribution(&classical, &plan)?;
        max_deviation = max_deviation.max(dp.max_abs_deviation(&dc));
    }
    let passed = max_deviation < config.tolerances.identity;
    Ok(
        ReportRow::new(config.experiment.name(), trial, config.protocol.seed)
            .int("n_pairs", n_pairs as u64)
            .int("eve_dim", attack.eve_dim() as u64)
            .float("max_abs_deviation", max_deviation)
            .bool("passed", passed),
    )
}

fn local_equivalence_row(config: &ExperimentConfig, trial: u64) -> Result<ReportRow> {
    let mut aux = substream(config.protocol.seed, trial, StreamPurpose::Auxiliary);
    let attack = match &config.attack {
        Some(description) => match description.build()? {
            ProtocolState::Pure(a) => a,
            ProtocolState::Classical(_) => unreachable!("validated: term-form"),
        },
        None => {
            let n_pairs = aux.random_range(2..=3usize);
            let eve_dim = [1usize, 2, 4][aux.random_range(0..3)];
            crate::attack::random_term_attack(&mut aux, n_pairs, eve_dim, 8)?
        }
    };
    let n_pairs = attack.n_pairs();
    // Alternate between the coherent attack and its Bell-diagonal shadow.
    let classical = trial % 2 == 1;
    let state = if classical {
        ProtocolState::Classical(attack.classicalize()?)
    } else {
        ProtocolState::Pure(attack)
    };
    let n_checked = aux.random_range(1..n_pairs);
    let plan = random_plan(&mut aux, n_pairs, n_checked, MeasurementMode::Nonlocal)?;
    let report = local_equivalence_report(&state, &plan, config.tolerances.identity)?;
    Ok(
        ReportRow::new(config.experiment.name(), trial, config.protocol.seed)
            .int("n_pairs", n_pairs as u64)
            .bool("classical", classical)
            .float("max_probability_deviation", report.max_probability_deviation)
            .float(
                "max_nonlocal_state_deviation",
                report.max_nonlocal_state_deviation,
            )
            .float("max_local_state_deviation", report.max_local_state_deviation)
            .float(
                "max_cross_mode_state_deviation",
                report.max_cross_mode_state_deviation,
            )
            .bool("passed", report.passed),
    )
}

fn security_row(config: &ExperimentConfig, trial: u64) -> Result<ReportRow> {
    let mut aux = substream(config.protocol.seed, trial, StreamPurpose::Auxiliary);
    let attack = match &config.attack {
        Some(description) => match description.build()? {
            ProtocolState::Pure(a) => a,
            ProtocolState::Classical(_) => unreachable!("validated: term-form"),
        },
        None => {
            let n_pairs = aux.random_range(1..=3usize);
            let eve_dim = [1usize, 2, 4][aux.random_range(0..3)];
            crate::attack::random_term_attack(&mut aux, n_pairs, eve_dim, 8)?
        }
    };
    let report = holevo_report(&attack, KeyMeasurement::AliceZ)?;
    let entropy_gap = (report.s_ab - report.s_e).abs();
    let chi_slack = report.s_e - report.chi;
    let bound_slack = report.entropy_bound - report.s_ab;
    let holevo_ok = entropy_gap <= SECURITY_TOL
        && report.chi >= -SECURITY_TOL
        && chi_slack >= -SECURITY_TOL
        && bound_slack >= -SECURITY_TOL;

    // Refined-information machinery on a random labeled ensemble.
    let ens = random_ensemble(&mut aux, 2, 2, 4, 6)?;
    let target = legitimate_target(2)?;
    let fd = fidelity_decomposition_check(&ens, &target, 1.0)?;
    let purified = purify(&ens)?;
    let mix = mix_ensemble(&ens)?;
    let pair_labels: Vec<String> = (0..2).map(crate::attack::pair_label).collect();
    let refs: Vec<&str> = pair_labels.iter().map(String::as_str).collect();
    let reduced = purified.partial_trace(&refs)?;
    let mut roundtrip_deviation = 0.0f64;
    for i in 0..mix.dim() {
        for j in 0..mix.dim() {
            roundtrip_deviation = roundtrip_deviation
                .max((reduced.matrix()[(i, j)] - mix.matrix()[(i, j)]).norm());
        }
    }
    let reg = register_measurement_equivalence(&ens, &purified)?;
    let ensemble_ok = fd.identity_deviation <= 1e-12
        && fd.derived_direction_holds
        && roundtrip_deviation <= 1e-12
        && reg.passed;

    Ok(
        ReportRow::new(config.experiment.name(), trial, config.protocol.seed)
            .int("n_pairs", attack.n_pairs() as u64)
            .int("eve_dim", attack.eve_dim() as u64)
            .float("s_ab", report.s_ab)
            .float("s_e", report.s_e)
            .float("chi", report.chi)
            .float("fidelity", report.fidelity)
            .float("entropy_bound", report.entropy_bound)
            .float("entropy_gap", entropy_gap)
            .float("chi_slack", chi_slack)
            .float("bound_slack", bound_slack)
            .float("fidelity_identity_deviation", fd.identity_deviation)
            .bool("per_term_bound_ok", fd.derived_direction_holds)
            .float("purify_roundtrip_deviation", roundtrip_deviation)
            .float(
                "register_probability_deviation",
                reg.max_probability_deviation,
            )
            .float("register_bound_slack", reg.bound_slack)
            .bool("passed", holevo_ok && ensemble_ok),
    )
}

fn sift_row(config: &ExperimentConfig, trial: u64, m: usize) -> Result<ReportRow> {
    let kind = config
        .sift
        .as_ref()
        .map(|s| s.illegitimate_kind)
        .unwrap_or_default()
        .pauli();
    let exact = exact_pass_probability(m, &config.protocol, kind)?;
    let mut rng = substream(config.protocol.seed, trial, StreamPurpose::Auxiliary);
    let estimate = sift_probability(m, &config.protocol, config.protocol.trials, kind, &mut rng)?;
    let sigma = (exact * (1.0 - exact) / config.protocol.trials as f64).sqrt();
    let deviation = (estimate.pass_probability - exact).abs();
    let within = deviation <= config.tolerances.mc_sigmas * sigma + 1e-9;
    Ok(
        ReportRow::new(config.experiment.name(), trial, config.protocol.seed)
            .int("m", m as u64)
            .float("exact_pass_probability", exact)
            .float("pass_probability", estimate.pass_probability)
            .float("mc_sigma", sigma)
            .float("deviation", deviation)
            .bool("within_sigma", within),
    )
}

/// Suite pass/fail judgment over the finished rows.
fn evaluate(config: &ExperimentConfig, rows: &[ReportRow]) -> (bool, Vec<String>) {
    let mut failures = Vec::new();
    match config.experiment {
        ExperimentKind::RunProtocol => {}
        ExperimentKind::VerifyClassicalization
        | ExperimentKind::VerifyLocalEquivalence
        | ExperimentKind::VerifySecurityBounds => {
            for row in rows {
                if let Some(MetricValue::Bool(false)) = row.metric("passed") {
                    failures.push(format!("trial {}: tolerance breached", row.trial));
                }
            }
        }
        ExperimentKind::SiftSweep => {
            let mut previous: Option<(u64, f64)> = None;
            for row in rows {
                let m = match row.metric("m") {
                    Some(MetricValue::Int(m)) => m,
                    _ => continue,
                };
                let exact = match row.metric("exact_pass_probability") {
                    Some(MetricValue::Float(p)) => p,
                    _ => continue,
                };
                if let Some(MetricValue::Bool(false)) = row.metric("within_sigma") {
                    failures.push(format!(
                        "m = {m}: Monte Carlo estimate outside the σ band"
                    ));
                }
                if m == 0 && exact != 1.0 {
                    failures.push("m = 0 must pass with certainty".to_string());
                }
                if let Some((pm, pp)) = previous {
                    if exact > pp + 1e-12 {
                        failures.push(format!(
                            "pass probability rose from m = {pm} to m = {m}"
                        ));
                    }
                }
                previous = Some((m, exact));
            }
        }
    }
    (failures.is_empty(), failures)
}

/// A row loaded back from a report for replay.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowRef {
    pub version: String,
    pub experiment: String,
    pub trial: u64,
    pub seed: u64,
    #[serde(default)]
    pub stream: Option<u64>,
    #[serde(default)]
    pub metrics: Option<serde_json::Map<String, serde_json::Value>>,
}

/// Replay result: the regenerated row, a transcript, and whether the stored
/// metrics match bit-exactly (when the row carried any).
#[derive(Debug)]
pub struct ReplayOutput {
    pub row: ReportRow,
    pub transcript: serde_json::Value,
    pub matches: Option<bool>,
}

/// Re-run exactly one trial from a stored row.
pub fn replay(config: &ExperimentConfig, row_ref: &RowRef) -> Result<ReplayOutput> {
    if row_ref.version != ARTIFACT_VERSION {
        return Err(Error::VersionMismatch {
            row: row_ref.version.clone(),
            current: ARTIFACT_VERSION.to_string(),
        });
    }
    if row_ref.experiment != config.experiment.name() {
        return Err(Error::Config(format!(
            "row is from {:?}, config runs {}",
            row_ref.experiment,
            config.experiment.name()
        )));
    }
    // The row pins the seed; the config supplies everything else.
    let mut effective = config.clone();
    effective.protocol.seed = row_ref.seed;
    let row = compute_row(&effective, row_ref.trial)?;

    let transcript = transcript_for(&effective, row_ref.trial)?;
    let matches = row_ref.metrics.as_ref().map(|stored| {
        stored.len() == row.metrics.len()
            && row.metrics.iter().all(|(name, value)| {
                stored
                    .get(*name)
                    .map(|v| json_matches(v, value))
                    .unwrap_or(false)
            })
    });
    Ok(ReplayOutput {
        row,
        transcript,
        matches,
    })
}

fn json_matches(stored: &serde_json::Value, value: &MetricValue) -> bool {
    match (stored, value) {
        (serde_json::Value::Number(n), MetricValue::Float(f)) => n
            .as_f64()
            .map(|v| v.to_bits() == f.to_bits())
            .unwrap_or(false),
        (serde_json::Value::Number(n), MetricValue::Int(i)) => n.as_u64() == Some(*i),
        (serde_json::Value::Bool(b), MetricValue::Bool(v)) => b == v,
        _ => false,
    }
}

/// Detailed transcript of one trial. For run-protocol this is the full plan,
/// per-pair records, and verdict; other suites replay to their metrics.
fn transcript_for(config: &ExperimentConfig, trial: u64) -> Result<serde_json::Value> {
    match config.experiment {
        ExperimentKind::RunProtocol => {
            let state = config
                .attack
                .as_ref()
                .expect("validated: attack present")
                .build()?;
            let mut rng = TrialRng::new(config.protocol.seed, trial);
            let outcome = run_check_phase(&state, &config.protocol, &mut rng)?;
            let records: Vec<serde_json::Value> = outcome
                .records
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "pair": r.pair,
                        "basis": format!("{:?}", r.basis),
                        "error_bit": r.error_bit,
                    })
                })
                .collect();
            Ok(serde_json::json!({
                "trial": trial,
                "checked_pairs": outcome
                    .plan
                    .checked()
                    .iter()
                    .map(|c| c.pair)
                    .collect::<Vec<_>>(),
                "records": records,
                "error_rate": outcome.error_rate,
                "accepted": outcome.accepted,
            }))
        }
        _ => Ok(serde_json::json!({ "trial": trial })),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checking::ProtocolConfig;
    use crate::harness::config::{ReportFormat, SiftSweepConfig, Tolerances};

    fn verify_config(kind: ExperimentKind, trials: u64) -> ExperimentConfig {
        ExperimentConfig {
            experiment: kind,
            attack: None,
            protocol: ProtocolConfig {
                n_pairs_total: 8,
                e_check: 0.04,
                e_cor: 0.05,
                seed: 42,
                trials,
            },
            output_dir: None,
            report_format: ReportFormat::Both,
            tolerances: Tolerances::default(),
            sift: None,
        }
    }

    #[test]
    fn classicalization_suite_passes() {
        let config = verify_config(ExperimentKind::VerifyClassicalization, 10);
        let rows = compute_rows(&config).unwrap();
        assert_eq!(rows.len(), 10);
        let (pass, failures) = evaluate(&config, &rows);
        assert!(pass, "{failures:?}");
    }

    #[test]
    fn local_equivalence_suite_passes() {
        let config = verify_config(ExperimentKind::VerifyLocalEquivalence, 8);
        let rows = compute_rows(&config).unwrap();
        let (pass, failures) = evaluate(&config, &rows);
        assert!(pass, "{failures:?}");
    }

    #[test]
    fn security_suite_passes() {
        let config = verify_config(ExperimentKind::VerifySecurityBounds, 8);
        let rows = compute_rows(&config).unwrap();
        let (pass, failures) = evaluate(&config, &rows);
        assert!(pass, "{failures:?}");
    }

    #[test]
    fn sift_sweep_is_monotone_and_within_sigma() {
        let mut config = verify_config(ExperimentKind::SiftSweep, 4000);
        config.sift = Some(SiftSweepConfig::default());
        let rows = compute_rows(&config).unwrap();
        assert_eq!(rows.len(), 9);
        let (pass, failures) = evaluate(&config, &rows);
        assert!(pass, "{failures:?}");
    }

    #[test]
    fn parallel_and_serial_rows_agree() {
        let config = verify_config(ExperimentKind::VerifyClassicalization, 6);
        let parallel = compute_rows(&config).unwrap();
        let serial: Vec<ReportRow> = (0..6)
            .map(|t| compute_row(&config, t).unwrap())
            .collect();
        assert_eq!(parallel.len(), serial.len());
        for (a, b) in parallel.iter().zip(&serial) {
            assert_eq!(a.trial, b.trial);
            assert_eq!(a.metrics.len(), b.metrics.len());
            for ((na, va), (nb, vb)) in a.metrics.iter().zip(&b.metrics) {
                assert_eq!(na, nb);
                assert!(va.same_as(vb), "trial {} metric {na} differs", a.trial);
            }
        }
    }

    #[test]
    fn replay_reproduces_rows_bit_exactly() {
        let config = verify_config(ExperimentKind::VerifySecurityBounds, 4);
        let rows = compute_rows(&config).unwrap();
        let target = &rows[2];
        let mut metrics = serde_json::Map::new();
        for (name, value) in &target.metrics {
            metrics.insert((*name).to_string(), serde_json::to_value(value).unwrap());
        }
        let row_ref = RowRef {
            version: ARTIFACT_VERSION.to_string(),
            experiment: config.experiment.name().to_string(),
            trial: target.trial,
            seed: target.seed,
            stream: Some(target.stream),
            metrics: Some(metrics),
        };
        let replayed = replay(&config, &row_ref).unwrap();
        assert_eq!(replayed.matches, Some(true));

        // A wrong seed is a negative control: metrics must differ.
        let wrong_seed = RowRef {
            seed: target.seed + 1,
            ..row_ref.clone()
        };
        let replayed = replay(&config, &wrong_seed).unwrap();
        assert_eq!(replayed.matches, Some(false));

        // A version mismatch is refused outright.
        let wrong_version = RowRef {
            version: "0.0.0-other".to_string(),
            ..row_ref
        };
        assert!(matches!(
            replay(&config, &wrong_version),
            Err(Error::VersionMismatch { .. })
        ));
    }
}
