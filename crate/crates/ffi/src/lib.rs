//! C ABI for the fourfold library.
//!
//! Objects cross the boundary as opaque handles created by `fourfold_*_new`
//! or `fourfold_*_run` style functions and released by the matching
//! `*_free`. Every fallible call returns a [`FourfoldStatus`]; after a
//! non-zero status `fourfold_last_error` describes the failure. Results are
//! written through out-pointers. Panics never unwind into C.

use std::cell::RefCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, size_t};

use fourfold::bell::{bell_functional, paper_optimal_settings, BellSettings, ETable};
use fourfold::correlation::{correlation_exact, SettingQuad, StateModel};
use fourfold::experiment::{run_bell, BellRunResult, DetectorBank, NoiseModel};
use fourfold::qkd::{
    extract_pair_keys, run_protocol, security_check, EveModel, ProtocolConfig, ProtocolMode,
    ProtocolTranscript, ThreePartyBasis,
};
use fourfold::qstate::{canonical_psi4, ghz4, overlap, Arm, MeasurementSetting, StateVector4};
use fourfold::spdc::{oracle_state, SplitterConvention};
use fourfold::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FourfoldStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidState = 3,
    InsufficientData = 4,
    Internal = 5,
}

fn status_of(e: &Error) -> FourfoldStatus {
    match e {
        Error::InvalidArgument(_) | Error::Parse(_) => FourfoldStatus::InvalidArgument,
        Error::InvalidState(_) => FourfoldStatus::InvalidState,
        Error::InsufficientData { .. }
        | Error::EmptyPostselection
        | Error::EmptyFrame
        | Error::UnderdeterminedFit(_)
        | Error::CannotCorrect(_)
        | Error::EmptyKey(_) => FourfoldStatus::InsufficientData,
        _ => FourfoldStatus::Internal,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

/// Runs `f`, recording errors and panics.
fn guard(f: impl FnOnce() -> Result<(), (FourfoldStatus, String)>) -> FourfoldStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FourfoldStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FourfoldStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (FourfoldStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (FourfoldStatus, String) {
    (FourfoldStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (FourfoldStatus, String) {
    (FourfoldStatus::InvalidArgument, msg.into())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (FourfoldStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn read_array<const N: usize>(
    p: *const f64,
    what: &str,
) -> Result<[f64; N], (FourfoldStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let mut out = [0.0; N];
    ptr::copy_nonoverlapping(p, out.as_mut_ptr(), N);
    Ok(out)
}

/// Settings from eight phases `[a1, a2, a'1, a'2, b1, b2, b'1, b'2]`, or the
/// optimal settings `a: (0, π/2)`, others `(π/4, −π/4)` when `phases` is null.
unsafe fn settings_or_default(phases: *const f64) -> BellSettings {
    if phases.is_null() {
        return paper_optimal_settings();
    }
    let mut p = [[0.0; 2]; 4];
    for (i, x) in std::slice::from_raw_parts(phases, 8).iter().enumerate() {
        p[i / 2][i % 2] = *x;
    }
    BellSettings::new(p)
}

fn arm_of(index: u32) -> Result<Arm, (FourfoldStatus, String)> {
    Arm::from_index(index as usize)
        .ok_or_else(|| invalid(format!("arm index {index} is not 0..=3")))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fourfold_last_error(buf: *mut c_char, len: size_t) -> size_t {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

// ------------------------------------------------------------------ state

/// Opaque four-qubit state.
pub struct FourfoldState(StateVector4);

/// The four-photon state: 1/√3 on HHVV and VVHH, −1/(2√3) on the mixed terms.
#[no_mangle]
pub extern "C" fn fourfold_state_canonical() -> *mut FourfoldState {
    Box::into_raw(Box::new(FourfoldState(canonical_psi4())))
}

#[no_mangle]
pub extern "C" fn fourfold_state_ghz() -> *mut FourfoldState {
    Box::into_raw(Box::new(FourfoldState(ghz4())))
}

/// State obtained from the bosonic two-pair source through symmetric
/// splitters and one-photon-per-arm post-selection.
///
/// # Safety
/// `out` must be valid for writes; `success_probability` may be null.
#[no_mangle]
pub unsafe extern "C" fn fourfold_state_oracle(
    out: *mut *mut FourfoldState,
    success_probability: *mut f64,
) -> FourfoldStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (state, p) = oracle_state(&SplitterConvention::default()).map_err(lib_err)?;
        if !success_probability.is_null() {
            *success_probability = p;
        }
        *out = Box::into_raw(Box::new(FourfoldState(state)));
        Ok(())
    })
}

/// Builds a state from 16 amplitudes indexed `8a + 4a′ + 2b + b′` (H = 0,
/// V = 1). The vector must be normalized.
///
/// # Safety
/// `re` and `im` must point to 16 doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fourfold_state_from_amplitudes(
    re: *const f64,
    im: *const f64,
    out: *mut *mut FourfoldState,
) -> FourfoldStatus {
    guard(|| {
        let re = read_array::<16>(re, "re")?;
        let im = read_array::<16>(im, "im")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let amps = std::array::from_fn(|i| num_complex::Complex64::new(re[i], im[i]));
        let state = StateVector4::from_amplitudes(amps).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FourfoldState(state)));
        Ok(())
    })
}

/// # Safety
/// `state` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fourfold_state_free(state: *mut FourfoldState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// # Safety
/// `re` and `im` must each have room for 16 doubles.
#[no_mangle]
pub unsafe extern "C" fn fourfold_state_amplitudes(
    state: *const FourfoldState,
    re: *mut f64,
    im: *mut f64,
) -> FourfoldStatus {
    guard(|| {
        let s = deref(state, "state")?;
        if re.is_null() || im.is_null() {
            return Err(null("re/im"));
        }
        for (i, z) in s.0.amplitudes().iter().enumerate() {
            *re.add(i) = z.re;
            *im.add(i) = z.im;
        }
        Ok(())
    })
}

/// `|⟨x|y⟩|`.
///
/// # Safety
/// Handles must be valid; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fourfold_state_overlap_magnitude(
    x: *const FourfoldState,
    y: *const FourfoldState,
    out: *mut f64,
) -> FourfoldStatus {
    guard(|| {
        let (x, y) = (deref(x, "x")?, deref(y, "y")?);
        if out.is_null() {
            return Err(null("out"));
        }
        *out = overlap(&x.0, &y.0).norm();
        Ok(())
    })
}

/// Correlation at equatorial phases `[φa, φa′, φb, φb′]`, scaled by `visibility`.
///
/// # Safety
/// `phases` must point to 4 doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fourfold_correlation(
    state: *const FourfoldState,
    phases: *const f64,
    visibility: f64,
    out: *mut f64,
) -> FourfoldStatus {
    guard(|| {
        let s = deref(state, "state")?;
        let phases = read_array::<4>(phases, "phases")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = correlation_exact(&s.0, &SettingQuad::new(phases), visibility).map_err(lib_err)?;
        Ok(())
    })
}

/// Exact Bell functional. `phases` holds eight phases
/// `[a1, a2, a'1, a'2, b1, b2, b'1, b'2]` or is null for the optimal settings.
///
/// # Safety
/// `phases` must be null or point to 8 doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fourfold_bell_exact(
    state: *const FourfoldState,
    visibility: f64,
    phases: *const f64,
    out: *mut f64,
) -> FourfoldStatus {
    guard(|| {
        let s = deref(state, "state")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(0.0..=1.0).contains(&visibility) {
            return Err(invalid(format!(
                "visibility {visibility} is outside [0, 1]"
            )));
        }
        let settings = settings_or_default(phases);
        let model = StateModel {
            state: s.0,
            visibility,
        };
        *out = bell_functional(&ETable::from_model(&model, &settings));
        Ok(())
    })
}

// --------------------------------------------------------------- bell run

/// Opaque simulated Bell run (16 frames).
pub struct FourfoldBellRun(BellRunResult);

/// Simulates one Bell run. `efficiencies` holds eight detector efficiencies
/// `[a+, a−, a'+, a'−, b+, b−, b'+, b'−]` or is null for ideal detectors;
/// `phases` as in [`fourfold_bell_exact`].
///
/// # Safety
/// Pointers must be null or valid as described; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fourfold_bell_run(
    state: *const FourfoldState,
    visibility: f64,
    efficiencies: *const f64,
    phases: *const f64,
    events_per_frame: u64,
    seed: u64,
    corrected: bool,
    out: *mut *mut FourfoldBellRun,
) -> FourfoldStatus {
    guard(|| {
        let s = deref(state, "state")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let bank = if efficiencies.is_null() {
            DetectorBank::ideal()
        } else {
            let e = read_array::<8>(efficiencies, "efficiencies")?;
            DetectorBank::new(std::array::from_fn(|i| [e[2 * i], e[2 * i + 1]])).map_err(lib_err)?
        };
        let noise = NoiseModel::new(visibility).map_err(lib_err)?;
        let settings = settings_or_default(phases);
        let r = run_bell(
            &s.0,
            &noise,
            &bank,
            &settings,
            events_per_frame,
            seed,
            corrected,
        )
        .map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FourfoldBellRun(r)));
        Ok(())
    })
}

/// # Safety
/// `s` and `s_error` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fourfold_bell_run_value(
    run: *const FourfoldBellRun,
    s: *mut f64,
    s_error: *mut f64,
) -> FourfoldStatus {
    guard(|| {
        let r = deref(run, "run")?;
        if s.is_null() || s_error.is_null() {
            return Err(null("s/s_error"));
        }
        *s = r.0.s;
        *s_error = r.0.s_error;
        Ok(())
    })
}

/// Counts of frame `frame` (0..16, table order), 16 outcomes indexed
/// `8la + 4la′ + 2lb + lb′` with bit 0 for the +1 result.
///
/// # Safety
/// `counts` must have room for 16 values.
#[no_mangle]
pub unsafe extern "C" fn fourfold_bell_run_counts(
    run: *const FourfoldBellRun,
    frame: u32,
    counts: *mut u64,
) -> FourfoldStatus {
    guard(|| {
        let r = deref(run, "run")?;
        if counts.is_null() {
            return Err(null("counts"));
        }
        let f =
            r.0.frames
                .get(frame as usize)
                .ok_or_else(|| invalid(format!("frame {frame} is not 0..16")))?;
        ptr::copy_nonoverlapping(f.counts.as_ptr(), counts, 16);
        Ok(())
    })
}

/// # Safety
/// `run` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fourfold_bell_run_free(run: *mut FourfoldBellRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

// -------------------------------------------------------------------- qkd

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FourfoldMode {
    FourParty = 0,
    SecretSharing = 1,
    ThreeParty = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FourfoldQkdConfig {
    pub n_rounds: u64,
    pub mode: FourfoldMode,
    pub key_fraction: f64,
    pub visibility: f64,
    pub seed: u64,
    /// Arm attacked by an intercept-resend eavesdropper (0..=3), or −1 for none.
    pub eve_arm: i32,
    /// Eve measures in H/V when true, else at equatorial phase `eve_phase`.
    pub eve_hv: bool,
    pub eve_phase: f64,
    /// Three-party mode: common basis H/V when false, π/4 when true.
    pub three_party_diagonal: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FourfoldSecurityReport {
    pub s_estimate: f64,
    pub s_error: f64,
    pub violation: bool,
    pub rounds_used: u64,
}

/// Opaque protocol transcript.
pub struct FourfoldTranscript(ProtocolTranscript);

/// # Safety
/// `config` must be valid; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fourfold_qkd_run(
    state: *const FourfoldState,
    config: *const FourfoldQkdConfig,
    out: *mut *mut FourfoldTranscript,
) -> FourfoldStatus {
    guard(|| {
        let s = deref(state, "state")?;
        let c = deref(config, "config")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let eve = if c.eve_arm < 0 {
            EveModel::None
        } else {
            EveModel::InterceptResend {
                arm: arm_of(c.eve_arm as u32)?,
                basis: if c.eve_hv {
                    MeasurementSetting::Computational
                } else {
                    MeasurementSetting::equatorial(c.eve_phase)
                },
            }
        };
        let config = ProtocolConfig {
            n_rounds: c.n_rounds,
            mode: match c.mode {
                FourfoldMode::FourParty => ProtocolMode::FourParty,
                FourfoldMode::SecretSharing => ProtocolMode::SecretSharing,
                FourfoldMode::ThreeParty => ProtocolMode::ThreeParty,
            },
            key_fraction: c.key_fraction,
            noise: NoiseModel::new(c.visibility).map_err(lib_err)?,
            eve,
            seed: c.seed,
            three_party_basis: if c.three_party_diagonal {
                ThreePartyBasis::Diagonal
            } else {
                ThreePartyBasis::Computational
            },
        };
        let t = run_protocol(&s.0, &config).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FourfoldTranscript(t)));
        Ok(())
    })
}

/// Number of recorded rounds, 0 for a null handle.
///
/// # Safety
/// `t` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn fourfold_transcript_len(t: *const FourfoldTranscript) -> u64 {
    t.as_ref().map_or(0, |t| t.0.rounds.len() as u64)
}

/// # Safety
/// `report` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fourfold_security_check(
    t: *const FourfoldTranscript,
    k_sigma: f64,
    report: *mut FourfoldSecurityReport,
) -> FourfoldStatus {
    guard(|| {
        let t = deref(t, "transcript")?;
        if report.is_null() {
            return Err(null("report"));
        }
        let r = security_check(&t.0, k_sigma).map_err(lib_err)?;
        *report = FourfoldSecurityReport {
            s_estimate: r.s_estimate,
            s_error: r.s_error,
            violation: r.violation,
            rounds_used: r.rounds_used,
        };
        Ok(())
    })
}

/// Pair key when arms `reveal_1` and `reveal_2` disclose their key-round
/// results. Writes the key length and the error rate between the two holders.
///
/// # Safety
/// `bits` and `qber` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fourfold_pair_key(
    t: *const FourfoldTranscript,
    reveal_1: u32,
    reveal_2: u32,
    bits: *mut u64,
    qber: *mut f64,
) -> FourfoldStatus {
    guard(|| {
        let t = deref(t, "transcript")?;
        if bits.is_null() || qber.is_null() {
            return Err(null("bits/qber"));
        }
        let k = extract_pair_keys(&t.0, [arm_of(reveal_1)?, arm_of(reveal_2)?]).map_err(lib_err)?;
        *bits = k.material.rounds_used;
        *qber = k.material.qber[0].qber;
        Ok(())
    })
}

/// # Safety
/// `t` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fourfold_transcript_free(t: *mut FourfoldTranscript) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}
