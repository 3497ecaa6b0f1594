//! Four-qubit polarization states over the arms a, a′, b, b′.
//!
//! Basis index convention: `index = 8·a + 4·a′ + 2·b + b′` with H = 0 and V = 1.
//! The same convention is used for outcome distributions, where the first
//! eigenvector of a setting (+1, or H for the computational basis) is 0.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NORM_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::H, Polarization::V];

    pub fn index(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Polarization::H
        } else {
            Polarization::V
        }
    }

    pub fn orthogonal(self) -> Self {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarization::H => "H",
            Polarization::V => "V",
        })
    }
}

/// Output arm of the two non-polarizing beam splitters, in tensor order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    A,
    APrime,
    B,
    BPrime,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::A, Arm::APrime, Arm::B, Arm::BPrime];

    pub fn index(self) -> usize {
        match self {
            Arm::A => 0,
            Arm::APrime => 1,
            Arm::B => 2,
            Arm::BPrime => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Arm::ALL.get(i).copied()
    }

    /// Weight of this arm's bit in the 16-element basis index.
    pub fn bit_weight(self) -> usize {
        8 >> self.index()
    }

    pub fn label(self) -> &'static str {
        match self {
            Arm::A => "a",
            Arm::APrime => "a'",
            Arm::B => "b",
            Arm::BPrime => "b'",
        }
    }

    /// Accepts `a`, `a'`, `ap`, `a_prime` (and the same for b), case-insensitive.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Arm::A),
            "a'" | "a′" | "ap" | "a_prime" | "aprime" => Ok(Arm::APrime),
            "b" => Ok(Arm::B),
            "b'" | "b′" | "bp" | "b_prime" | "bprime" => Ok(Arm::BPrime),
            other => Err(Error::Parse(format!("unknown arm `{other}`"))),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Basis index of a polarization pattern in arm order a, a′, b, b′.
pub fn basis_index(pols: [Polarization; 4]) -> usize {
    pols.iter().fold(0, |acc, p| (acc << 1) | p.index())
}

pub fn basis_pattern(index: usize) -> [Polarization; 4] {
    std::array::from_fn(|k| Polarization::from_index((index >> (3 - k)) & 1))
}

/// Normalized pure state of four polarization qubits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector4 {
    amps: [Complex64; 16],
}

impl StateVector4 {
    /// Wraps amplitudes that must already be normalized.
    pub fn from_amplitudes(amps: [Complex64; 16]) -> Result<Self> {
        let norm = norm_sqr(&amps);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!(
                "squared norm is {norm}, expected 1"
            )));
        }
        Ok(StateVector4 { amps })
    }

    /// Normalizes arbitrary amplitudes; fails on the zero vector.
    pub fn normalized(amps: [Complex64; 16]) -> Result<Self> {
        let norm = norm_sqr(&amps).sqrt();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(Error::InvalidState("zero or non-finite vector".into()));
        }
        Ok(StateVector4 {
            amps: amps.map(|a| a / norm),
        })
    }

    pub fn basis(pols: [Polarization; 4]) -> Self {
        let mut amps = [ZERO; 16];
        amps[basis_index(pols)] = ONE;
        StateVector4 { amps }
    }

    pub fn amplitudes(&self) -> &[Complex64; 16] {
        &self.amps
    }

    pub fn amplitude(&self, pols: [Polarization; 4]) -> Complex64 {
        self.amps[basis_index(pols)]
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amps)
    }

    /// Applies a 2×2 operator to one arm. The result is not renormalized.
    fn apply_on_arm(amps: &[Complex64; 16], arm: Arm, m: &[[Complex64; 2]; 2]) -> [Complex64; 16] {
        let w = arm.bit_weight();
        let mut out = [ZERO; 16];
        for (i, slot) in out.iter_mut().enumerate() {
            let row = usize::from(i & w != 0);
            let i0 = i & !w;
            let i1 = i | w;
            *slot = m[row][0] * amps[i0] + m[row][1] * amps[i1];
        }
        out
    }

    /// Applies a local unitary to a single arm.
    pub fn apply_local(&self, arm: Arm, u: &LocalUnitary) -> Self {
        StateVector4 {
            amps: Self::apply_on_arm(&self.amps, arm, &u.m),
        }
    }

    /// Projects one arm onto `qubit` and returns the branch probability with
    /// the renormalized post-measurement state (None when the branch is empty).
    pub fn project_arm(&self, arm: Arm, qubit: [Complex64; 2]) -> (f64, Option<StateVector4>) {
        let proj = [
            [qubit[0] * qubit[0].conj(), qubit[0] * qubit[1].conj()],
            [qubit[1] * qubit[0].conj(), qubit[1] * qubit[1].conj()],
        ];
        let amps = Self::apply_on_arm(&self.amps, arm, &proj);
        let p = norm_sqr(&amps);
        if p <= 1e-15 {
            (p.max(0.0), None)
        } else {
            (p, StateVector4::normalized(amps).ok())
        }
    }

    /// JSON-ready dump: 16 `[re, im]` pairs in basis-index order.
    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.amps.iter().map(|a| [a.re, a.im]).collect()
    }

    pub fn from_pairs(pairs: &[[f64; 2]]) -> Result<Self> {
        if pairs.len() != 16 {
            return Err(Error::InvalidState(format!(
                "expected 16 amplitudes, got {}",
                pairs.len()
            )));
        }
        let mut amps = [ZERO; 16];
        for (a, p) in amps.iter_mut().zip(pairs) {
            *a = Complex64::new(p[0], p[1]);
        }
        StateVector4::from_amplitudes(amps)
    }
}

impl Serialize for StateVector4 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_pairs().serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateVector4 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        StateVector4::from_pairs(&pairs).map_err(serde::de::Error::custom)
    }
}

fn norm_sqr(amps: &[Complex64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

/// 2×2 unitary acting on one polarization qubit, rows/columns ordered H, V.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalUnitary {
    m: [[Complex64; 2]; 2],
}

impl LocalUnitary {
    pub fn new(m: [[Complex64; 2]; 2]) -> Result<Self> {
        // U†U = 1
        for i in 0..2 {
            for j in 0..2 {
                let e: Complex64 = (0..2).map(|k| m[k][i].conj() * m[k][j]).sum();
                let target = if i == j { ONE } else { ZERO };
                if (e - target).norm() > NORM_TOL {
                    return Err(Error::invalid_argument(format!(
                        "matrix is not unitary: (U†U)[{i}][{j}] = {e}"
                    )));
                }
            }
        }
        Ok(LocalUnitary { m })
    }

    pub fn identity() -> Self {
        LocalUnitary {
            m: [[ONE, ZERO], [ZERO, ONE]],
        }
    }

    /// H ↔ V exchange.
    pub fn swap_hv() -> Self {
        LocalUnitary {
            m: [[ZERO, ONE], [ONE, ZERO]],
        }
    }

    /// Real 45° basis rotation, H → (H+V)/√2, V → (H−V)/√2.
    pub fn hadamard() -> Self {
        let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
        LocalUnitary {
            m: [[s, s], [s, -s]],
        }
    }

    /// Unit quaternion to SU(2), multiplied by a global phase.
    pub fn from_quaternion(q: [f64; 4], phase: f64) -> Result<Self> {
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-300 {
            return Err(Error::invalid_argument("zero quaternion"));
        }
        let a = Complex64::new(q[0] / n, q[1] / n);
        let b = Complex64::new(q[2] / n, q[3] / n);
        let g = Complex64::from_polar(1.0, phase);
        LocalUnitary::new([[g * a, -g * b.conj()], [g * b, g * a.conj()]])
    }

    /// Haar-random element of U(2).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let q = [
            (1.0 - u1).sqrt() * (TAU * u2).sin(),
            (1.0 - u1).sqrt() * (TAU * u2).cos(),
            u1.sqrt() * (TAU * u3).sin(),
            u1.sqrt() * (TAU * u3).cos(),
        ];
        let phase = TAU * rng.random::<f64>();
        LocalUnitary::from_quaternion(q, phase).expect("Shoemake quaternion is unit")
    }

    pub fn matrix(&self) -> &[[Complex64; 2]; 2] {
        &self.m
    }
}

/// Per-arm analyzer. `Equatorial(φ)` measures the dichotomic observable with
/// eigenvectors `(|V⟩ + l·e^{−iφ}|H⟩)/√2`, `l = ±1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementSetting {
    Equatorial(f64),
    Computational,
}

impl MeasurementSetting {
    /// Equatorial setting with φ reduced to [0, 2π).
    pub fn equatorial(phi: f64) -> Self {
        MeasurementSetting::Equatorial(phi.rem_euclid(TAU))
    }

    pub fn outcomes(self) -> [Outcome; 2] {
        match self {
            MeasurementSetting::Equatorial(_) => [Outcome::Plus, Outcome::Minus],
            MeasurementSetting::Computational => [Outcome::H, Outcome::V],
        }
    }

    pub fn phase(self) -> Option<f64> {
        match self {
            MeasurementSetting::Equatorial(phi) => Some(phi),
            MeasurementSetting::Computational => None,
        }
    }
}

/// Dichotomic measurement result. `Plus`/`Minus` belong to equatorial
/// settings, `H`/`V` to the computational basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Plus,
    Minus,
    H,
    V,
}

impl Outcome {
    /// ±1 value used in correlation products; H counts as +1.
    pub fn sign(self) -> i32 {
        match self {
            Outcome::Plus | Outcome::H => 1,
            Outcome::Minus | Outcome::V => -1,
        }
    }

    /// 0 for the first eigenvector of a setting, 1 for the second.
    pub fn bit(self) -> usize {
        usize::from(self.sign() < 0)
    }

    pub fn matches(self, setting: MeasurementSetting) -> bool {
        matches!(
            (self, setting),
            (
                Outcome::Plus | Outcome::Minus,
                MeasurementSetting::Equatorial(_)
            ) | (Outcome::H | Outcome::V, MeasurementSetting::Computational)
        )
    }

    pub fn for_setting(setting: MeasurementSetting, bit: usize) -> Self {
        setting.outcomes()[bit & 1]
    }

    pub fn symbol(self) -> char {
        match self {
            Outcome::Plus => '+',
            Outcome::Minus => '-',
            Outcome::H => 'H',
            Outcome::V => 'V',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OutcomeQuad(pub [Outcome; 4]);

impl OutcomeQuad {
    pub fn from_index(settings: &[MeasurementSetting; 4], index: usize) -> Self {
        OutcomeQuad(std::array::from_fn(|k| {
            Outcome::for_setting(settings[k], (index >> (3 - k)) & 1)
        }))
    }

    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, o| (acc << 1) | o.bit())
    }

    pub fn parity(&self) -> i32 {
        self.0.iter().map(|o| o.sign()).product()
    }

    /// Parses strings such as `"+-+-"` or `"HVHV"`.
    pub fn parse(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.trim().chars().collect();
        if chars.len() != 4 {
            return Err(Error::Parse(format!(
                "outcome quad `{s}` must have 4 symbols"
            )));
        }
        let mut out = [Outcome::Plus; 4];
        for (o, c) in out.iter_mut().zip(chars) {
            *o = match c {
                '+' => Outcome::Plus,
                '-' => Outcome::Minus,
                'H' | 'h' => Outcome::H,
                'V' | 'v' => Outcome::V,
                other => return Err(Error::Parse(format!("bad outcome symbol `{other}`"))),
            };
        }
        Ok(OutcomeQuad(out))
    }
}

impl fmt::Display for OutcomeQuad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for o in self.0 {
            write!(f, "{}", o.symbol())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EprKind {
    /// (HV − VH)/√2
    PsiMinus,
    /// (HV + VH)/√2
    PsiPlus,
}

/// The post-selected four-photon state:
/// `(HHVV + VVHH)/√3 − (HVHV + HVVH + VHHV + VHVH)/(2√3)`.
pub fn canonical_psi4() -> StateVector4 {
    use Polarization::{H, V};
    let big = Complex64::new(1.0 / 3f64.sqrt(), 0.0);
    let small = Complex64::new(-1.0 / (2.0 * 3f64.sqrt()), 0.0);
    let mut amps = [ZERO; 16];
    amps[basis_index([H, H, V, V])] = big;
    amps[basis_index([V, V, H, H])] = big;
    for p in [[H, V, H, V], [H, V, V, H], [V, H, H, V], [V, H, V, H]] {
        amps[basis_index(p)] = small;
    }
    StateVector4::normalized(amps).expect("nonzero")
}

/// `(HHVV + VVHH)/√2`.
pub fn ghz4() -> StateVector4 {
    use Polarization::{H, V};
    let mut amps = [ZERO; 16];
    amps[basis_index([H, H, V, V])] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    amps[basis_index([V, V, H, H])] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    StateVector4 { amps }
}

/// Two-qubit amplitudes indexed `2·p₁ + p₂`.
pub fn epr_pair(kind: EprKind) -> [Complex64; 4] {
    let s = FRAC_1_SQRT_2;
    let vh = match kind {
        EprKind::PsiMinus => -s,
        EprKind::PsiPlus => s,
    };
    [ZERO, Complex64::new(s, 0.0), Complex64::new(vh, 0.0), ZERO]
}

/// `|EPR⟩_{aa′} ⊗ |EPR⟩_{bb′}`.
pub fn epr_product(kind: EprKind) -> StateVector4 {
    let pair = epr_pair(kind);
    let mut amps = [ZERO; 16];
    for (i, amp) in amps.iter_mut().enumerate() {
        *amp = pair[i >> 2] * pair[i & 3];
    }
    StateVector4 { amps }
}

/// Which EPR product the canonical state is decomposed against.
pub const CANONICAL_EPR_KIND: EprKind = EprKind::PsiPlus;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub ghz_coef: Complex64,
    pub epr_coef: Complex64,
    pub residual_norm: f64,
}

/// Projects onto the GHZ vector and the EPR⊗EPR vector (which are orthogonal)
/// and reports the norm of what is left.
pub fn decompose_ghz_epr(state: &StateVector4) -> Result<Decomposition> {
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::InvalidState(format!("squared norm is {norm}")));
    }
    let ghz = ghz4();
    let epr = epr_product(CANONICAL_EPR_KIND);
    let ghz_coef = overlap(&ghz, state);
    let epr_coef = overlap(&epr, state);
    let mut rest = *state.amplitudes();
    for (i, r) in rest.iter_mut().enumerate() {
        *r -= ghz_coef * ghz.amps[i] + epr_coef * epr.amps[i];
    }
    Ok(Decomposition {
        ghz_coef,
        epr_coef,
        residual_norm: norm_sqr(&rest).sqrt(),
    })
}

/// `(amp_H, amp_V)` of the eigenvector belonging to `outcome`.
pub fn setting_eigenstate(setting: MeasurementSetting, outcome: Outcome) -> Result<[Complex64; 2]> {
    if !outcome.matches(setting) {
        return Err(Error::invalid_argument(format!(
            "outcome {} does not belong to setting {setting:?}",
            outcome.symbol()
        )));
    }
    Ok(eigenstate_unchecked(setting, outcome.bit()))
}

fn eigenstate_unchecked(setting: MeasurementSetting, bit: usize) -> [Complex64; 2] {
    match setting {
        MeasurementSetting::Computational => {
            if bit == 0 {
                [ONE, ZERO]
            } else {
                [ZERO, ONE]
            }
        }
        MeasurementSetting::Equatorial(phi) => {
            let l = if bit == 0 { 1.0 } else { -1.0 };
            [
                Complex64::from_polar(l * FRAC_1_SQRT_2, -phi),
                Complex64::new(FRAC_1_SQRT_2, 0.0),
            ]
        }
    }
}

/// Born-rule probability of a joint outcome.
pub fn outcome_probability(
    state: &StateVector4,
    settings: &[MeasurementSetting; 4],
    outcomes: &OutcomeQuad,
) -> Result<f64> {
    for (k, (o, s)) in outcomes.0.iter().zip(settings).enumerate() {
        if !o.matches(*s) {
            return Err(Error::invalid_argument(format!(
                "outcome {} on arm {} does not match setting {s:?}",
                o.symbol(),
                Arm::ALL[k]
            )));
        }
    }
    Ok(outcome_distribution(state, settings)[outcomes.index()])
}

/// All 16 joint-outcome probabilities, indexed by [`OutcomeQuad::index`].
pub fn outcome_distribution(state: &StateVector4, settings: &[MeasurementSetting; 4]) -> [f64; 16] {
    // Rotate each arm into the measurement eigenbasis: row k of the change of
    // basis is the conjugated k-th eigenvector.
    let mut amps = state.amps;
    for (arm, s) in Arm::ALL.iter().zip(settings) {
        let e0 = eigenstate_unchecked(*s, 0);
        let e1 = eigenstate_unchecked(*s, 1);
        let m = [[e0[0].conj(), e0[1].conj()], [e1[0].conj(), e1[1].conj()]];
        amps = StateVector4::apply_on_arm(&amps, *arm, &m);
    }
    amps.map(|a| a.norm_sqr())
}

/// Applies `U ⊗ U ⊗ U ⊗ U`.
pub fn apply_identical_unitary(state: &StateVector4, u: &LocalUnitary) -> StateVector4 {
    Arm::ALL
        .iter()
        .fold(*state, |s, arm| s.apply_local(*arm, u))
}

/// ⟨s1|s2⟩
pub fn overlap(s1: &StateVector4, s2: &StateVector4) -> Complex64 {
    s1.amps
        .iter()
        .zip(&s2.amps)
        .map(|(a, b)| a.conj() * b)
        .sum()
}
