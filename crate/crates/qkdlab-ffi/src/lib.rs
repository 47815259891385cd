//! C ABI for the qkdlab simulator.
//!
//! Attack states travel as opaque handles created from the same JSON wire
//! format the CLI consumes; every fallible call returns a status code and
//! writes results through out-pointers. The header `include/qkdlab.h` is
//! generated at build time.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use qkdlab::attack::{AttackDescription, ProtocolState};
use qkdlab::bell::Pauli;
use qkdlab::checking::{run_check_phase, ProtocolConfig};
use qkdlab::distillation::exact_pass_probability;
use qkdlab::rng::{substream, StreamPurpose, TrialRng};
use qkdlab::security::{holevo_report, KeyMeasurement};

/// Status of a call. Everything other than `Ok` leaves out-pointers untouched.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The input could not be parsed (malformed JSON or schema violation).
    ParseError = 3,
    /// The input parsed but violates a domain rule (norms, ranges, sizes).
    DomainError = 4,
    /// The operation does not apply to this handle (e.g. a security report
    /// for a Bell-diagonal attack, where Eve is already traced out).
    Unsupported = 5,
    /// An internal invariant failed; the library state is still sound.
    InternalError = 6,
}

fn status_of(error: &qkdlab::Error) -> Status {
    use qkdlab::Error::*;
    match error {
        Json(_) | Config(_) => Status::ParseError,
        Io(_) | VersionMismatch { .. } => Status::Unsupported,
        _ => Status::DomainError,
    }
}

/// An attack state: either a coherent (pure) attack or a Bell-diagonal one.
pub struct Attack {
    state: ProtocolState,
}

/// Protocol parameters, mirroring the JSON `protocol` section.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ProtocolParams {
    pub n_pairs_total: usize,
    pub e_check: f64,
    pub e_cor: f64,
    pub seed: u64,
    pub trials: u64,
}

impl ProtocolParams {
    fn to_config(self) -> ProtocolConfig {
        ProtocolConfig {
            n_pairs_total: self.n_pairs_total,
            e_check: self.e_check,
            e_cor: self.e_cor,
            seed: self.seed,
            trials: self.trials,
        }
    }
}

/// Result of one checking round.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CheckOutcome {
    pub error_rate: f64,
    pub accepted: bool,
    pub n_checked: usize,
}

/// The security quantities of a pure attack (all in bits except fidelity).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SecurityStats {
    pub s_ab: f64,
    pub s_e: f64,
    pub chi: f64,
    pub fidelity: f64,
    pub entropy_bound: f64,
}

fn guarded<F: FnOnce() -> Status>(f: F) -> Status {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(Status::InternalError)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qkd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn qkd_status_message(status: Status) -> *const c_char {
    let message: &'static str = match status {
        Status::Ok => "ok\0",
        Status::NullPointer => "null pointer argument\0",
        Status::InvalidUtf8 => "string argument is not valid UTF-8\0",
        Status::ParseError => "input could not be parsed\0",
        Status::DomainError => "input violates a domain rule\0",
        Status::Unsupported => "operation does not apply to this input\0",
        Status::InternalError => "internal error\0",
    };
    message.as_ptr() as *const c_char
}

/// Parse an attack description (the JSON wire format) into a handle.
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer. A returned handle must be released with
/// [`qkd_attack_free`].
#[no_mangle]
pub unsafe extern "C" fn qkd_attack_from_json(
    json: *const c_char,
    out: *mut *mut Attack,
) -> Status {
    if json.is_null() || out.is_null() {
        return Status::NullPointer;
    }
    let Ok(text) = CStr::from_ptr(json).to_str() else {
        return Status::InvalidUtf8;
    };
    guarded(|| {
        let description = match AttackDescription::from_json(text) {
            Ok(d) => d,
            Err(e) => return status_of(&e),
        };
        match description.build() {
            Ok(state) => {
                *out = Box::into_raw(Box::new(Attack { state }));
                Status::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Release a handle obtained from [`qkd_attack_from_json`]. Null is a no-op.
///
/// # Safety
/// `attack` must be a pointer previously returned by this library and not
/// freed before.
#[no_mangle]
pub unsafe extern "C" fn qkd_attack_free(attack: *mut Attack) {
    if !attack.is_null() {
        drop(Box::from_raw(attack));
    }
}

/// Number of qubit pairs the attack distributes.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qkd_attack_n_pairs(attack: *const Attack, out: *mut usize) -> Status {
    if attack.is_null() || out.is_null() {
        return Status::NullPointer;
    }
    *out = (*attack).state.n_pairs();
    Status::Ok
}

/// Whether the handle holds a coherent (pure) attack.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qkd_attack_is_pure(attack: *const Attack, out: *mut bool) -> Status {
    if attack.is_null() || out.is_null() {
        return Status::NullPointer;
    }
    *out = matches!((*attack).state, ProtocolState::Pure(_));
    Status::Ok
}

/// Run one checking round (trial `trial` of the deterministic schedule).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qkd_run_check_phase(
    attack: *const Attack,
    params: *const ProtocolParams,
    trial: u64,
    out: *mut CheckOutcome,
) -> Status {
    if attack.is_null() || params.is_null() || out.is_null() {
        return Status::NullPointer;
    }
    let state = &(*attack).state;
    let config = (*params).to_config();
    guarded(|| {
        let mut rng = TrialRng::new(config.seed, trial);
        match run_check_phase(state, &config, &mut rng) {
            Ok(outcome) => {
                *out = CheckOutcome {
                    error_rate: outcome.error_rate,
                    accepted: outcome.accepted,
                    n_checked: outcome.plan.n_checked(),
                };
                Status::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Compute the security report of a pure attack. Bell-diagonal handles are
/// rejected with `Unsupported` (Eve's side is already traced out).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qkd_security_report(
    attack: *const Attack,
    out: *mut SecurityStats,
) -> Status {
    if attack.is_null() || out.is_null() {
        return Status::NullPointer;
    }
    let ProtocolState::Pure(pure) = &(*attack).state else {
        return Status::Unsupported;
    };
    guarded(|| match holevo_report(pure, KeyMeasurement::AliceZ) {
        Ok(report) => {
            *out = SecurityStats {
                s_ab: report.s_ab,
                s_e: report.s_e,
                chi: report.chi,
                fidelity: report.fidelity,
                entropy_bound: report.entropy_bound,
            };
            Status::Ok
        }
        Err(e) => status_of(&e),
    })
}

/// Largest deviation between the outcome statistics of a pure attack and its
/// Bell-diagonal counterpart over `n_plans` random check plans.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qkd_classicalization_deviation(
    attack: *const Attack,
    seed: u64,
    n_plans: usize,
    out: *mut f64,
) -> Status {
    if attack.is_null() || out.is_null() {
        return Status::NullPointer;
    }
    let ProtocolState::Pure(pure) = &(*attack).state else {
        return Status::Unsupported;
    };
    if n_plans == 0 {
        return Status::DomainError;
    }
    guarded(|| {
        use qkdlab::checking::{outcome_distribution, CheckBasis, CheckPlan, MeasurementMode, PairCheck};
        use rand::Rng;

        let classical = match pure.classicalize() {
            Ok(c) => c,
            Err(e) => return status_of(&e),
        };
        let pure_state = ProtocolState::Pure(pure.clone());
        let classical_state = ProtocolState::Classical(classical);
        let n_pairs = pure.n_pairs();
        let mut rng = substream(seed, 0, StreamPurpose::Auxiliary);
        let mut max_deviation = 0.0f64;
        for _ in 0..n_plans {
            let n_checked = rng.random_range(1..=n_pairs);
            let mut picked =
                rand::seq::index::sample(&mut rng, n_pairs, n_checked).into_vec();
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
            let plan = match CheckPlan::new(n_pairs, checked, MeasurementMode::Nonlocal) {
                Ok(p) => p,
                Err(e) => return status_of(&e),
            };
            let dp = match outcome_distribution(&pure_state, &plan) {
                Ok(d) => d,
                Err(e) => return status_of(&e),
            };
            let dc = match outcome_distribution(&classical_state, &plan) {
                Ok(d) => d,
                Err(e) => return status_of(&e),
            };
            max_deviation = max_deviation.max(dp.max_abs_deviation(&dc));
        }
        *out = max_deviation;
        Status::Ok
    })
}

/// Closed-form probability that a state with `m` illegitimate pairs passes
/// the check phase. `illegitimate_kind` is 1 for X, 2 for Y, 3 for Z.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qkd_exact_pass_probability(
    params: *const ProtocolParams,
    m: usize,
    illegitimate_kind: u8,
    out: *mut f64,
) -> Status {
    if params.is_null() || out.is_null() {
        return Status::NullPointer;
    }
    let kind = match Pauli::from_index(illegitimate_kind) {
        Ok(k) if k != Pauli::I => k,
        _ => return Status::DomainError,
    };
    let config = (*params).to_config();
    guarded(|| match exact_pass_probability(m, &config, kind) {
        Ok(p) => {
            *out = p;
            Status::Ok
        }
        Err(e) => status_of(&e),
    })
}
