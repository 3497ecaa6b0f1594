//! Bosonic derivation of the post-selected four-photon state.
//!
//! The double-pair emission operator is applied to vacuum in the two source
//! modes, each source mode is split at a 50:50 beam splitter, and the result is
//! projected onto one photon per output arm. Everything is done with explicit
//! creation-operator algebra on sparse occupation maps, independent of
//! [`crate::qstate`].

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{Arm, LocalUnitary, StateVector4};

pub const MODES: usize = 8;

/// Which eight bosonic modes a [`FockVector`] is expressed in.
///
/// * `Source`: a₀H, a₀V, b₀H, b₀V, then the unused (vacuum) input ports of the
///   two beam splitters: uₐH, uₐV, u_bH, u_bV.
/// * `Arms`: aH, aV, a′H, a′V, bH, bV, b′H, b′V.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeSet {
    Source,
    Arms,
}

impl ModeSet {
    pub fn labels(self) -> [&'static str; MODES] {
        match self {
            ModeSet::Source => ["a0H", "a0V", "b0H", "b0V", "uaH", "uaV", "ubH", "ubV"],
            ModeSet::Arms => ["aH", "aV", "a'H", "a'V", "bH", "bV", "b'H", "b'V"],
        }
    }
}

pub mod source_mode {
    pub const A0_H: usize = 0;
    pub const A0_V: usize = 1;
    pub const B0_H: usize = 2;
    pub const B0_V: usize = 3;
    pub const UA_H: usize = 4;
    pub const UA_V: usize = 5;
    pub const UB_H: usize = 6;
    pub const UB_V: usize = 7;
}

/// Output-side mode index of an arm and polarization (0 = H, 1 = V).
pub fn arm_mode(arm: Arm, pol: usize) -> usize {
    2 * arm.index() + pol
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeOccupation(pub [u8; MODES]);

impl ModeOccupation {
    pub fn total(&self) -> u32 {
        self.0.iter().map(|&n| u32::from(n)).sum()
    }
}

type Terms = BTreeMap<[u8; MODES], Complex64>;

/// Sparse superposition of Fock states with standard bosonic normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    modes: ModeSet,
    terms: Terms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockRecord {
    pub occupation: [u8; MODES],
    pub re: f64,
    pub im: f64,
}

impl FockVector {
    pub fn vacuum(modes: ModeSet) -> Self {
        let mut terms = Terms::new();
        terms.insert([0; MODES], Complex64::new(1.0, 0.0));
        FockVector { modes, terms }
    }

    pub fn from_terms(
        modes: ModeSet,
        terms: impl IntoIterator<Item = (ModeOccupation, Complex64)>,
    ) -> Self {
        let mut map = Terms::new();
        for (occ, amp) in terms {
            *map.entry(occ.0).or_default() += amp;
        }
        FockVector { modes, terms: map }.pruned()
    }

    pub fn modes(&self) -> ModeSet {
        self.modes
    }

    pub fn amplitude(&self, occ: &ModeOccupation) -> Complex64 {
        self.terms.get(&occ.0).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (ModeOccupation, Complex64)> + '_ {
        self.terms.iter().map(|(k, v)| (ModeOccupation(*k), *v))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if n < 1e-300 {
            return Err(Error::InvalidState("zero Fock vector".into()));
        }
        for v in self.terms.values_mut() {
            *v /= n;
        }
        Ok(self)
    }

    /// Distribution of the total photon number.
    pub fn photon_number_distribution(&self) -> BTreeMap<u32, f64> {
        let mut out = BTreeMap::new();
        for (occ, amp) in self.terms() {
            *out.entry(occ.total()).or_insert(0.0) += amp.norm_sqr();
        }
        out
    }

    pub fn to_records(&self) -> Vec<FockRecord> {
        self.terms
            .iter()
            .map(|(k, v)| FockRecord {
                occupation: *k,
                re: v.re,
                im: v.im,
            })
            .collect()
    }

    pub fn from_records(modes: ModeSet, records: &[FockRecord]) -> Self {
        FockVector::from_terms(
            modes,
            records
                .iter()
                .map(|r| (ModeOccupation(r.occupation), Complex64::new(r.re, r.im))),
        )
    }

    fn pruned(mut self) -> Self {
        self.terms.retain(|_, v| v.norm_sqr() > 1e-30);
        self
    }
}

/// Polynomial in creation operators, keyed by exponent vectors. Coefficients
/// are monomial coefficients, not Fock amplitudes.
#[derive(Debug, Clone, Default)]
struct CreationPoly(Terms);

impl CreationPoly {
    fn one() -> Self {
        let mut t = Terms::new();
        t.insert([0; MODES], Complex64::new(1.0, 0.0));
        CreationPoly(t)
    }

    fn from_monomials(items: &[(&[usize], Complex64)]) -> Self {
        let mut t = Terms::new();
        for (modes, c) in items {
            let mut e = [0u8; MODES];
            for &m in *modes {
                e[m] += 1;
            }
            *t.entry(e).or_default() += *c;
        }
        CreationPoly(t)
    }

    fn mul(&self, other: &CreationPoly) -> CreationPoly {
        let mut t = Terms::new();
        for (e1, c1) in &self.0 {
            for (e2, c2) in &other.0 {
                let e: [u8; MODES] = std::array::from_fn(|k| e1[k] + e2[k]);
                *t.entry(e).or_default() += c1 * c2;
            }
        }
        t.retain(|_, v| v.norm_sqr() > 1e-30);
        CreationPoly(t)
    }

    /// Multiplies by the linear form `Σ_k row[k]·d_k†`.
    fn mul_linear(&self, row: &[Complex64; MODES]) -> CreationPoly {
        let mut t = Terms::new();
        for (e, c) in &self.0 {
            for (k, r) in row.iter().enumerate() {
                if r.norm_sqr() == 0.0 {
                    continue;
                }
                let mut e2 = *e;
                e2[k] += 1;
                *t.entry(e2).or_default() += c * r;
            }
        }
        CreationPoly(t)
    }

    /// Acts on vacuum: `Π (d_k†)^{e_k} |0⟩ = Π √(e_k!) |e⟩`.
    fn on_vacuum(&self, modes: ModeSet) -> FockVector {
        let terms = self
            .0
            .iter()
            .map(|(e, c)| (*e, c * sqrt_factorial_product(e)))
            .collect();
        FockVector { modes, terms }.pruned()
    }
}

fn sqrt_factorial_product(e: &[u8; MODES]) -> f64 {
    e.iter()
        .map(|&n| (1..=u32::from(n)).map(f64::from).product::<f64>())
        .product::<f64>()
        .sqrt()
}

/// Applies a passive linear-optics map given as the image of each input
/// creation operator: `c_m† → Σ_k map[m][k]·d_k†`.
pub fn apply_mode_transform(
    fock: &FockVector,
    map: &[[Complex64; MODES]; MODES],
    output: ModeSet,
) -> FockVector {
    let mut out = Terms::new();
    for (occ, amp) in &fock.terms {
        // |n⟩ = Π (c_m†)^{n_m} / √(n_m!) |0⟩
        let mut poly = CreationPoly::one();
        for (m, &n) in occ.iter().enumerate() {
            for _ in 0..n {
                poly = poly.mul_linear(&map[m]);
            }
        }
        let scale = amp / sqrt_factorial_product(occ);
        for (e, c) in poly.on_vacuum(output).terms {
            *out.entry(e).or_default() += c * scale;
        }
    }
    FockVector {
        modes: output,
        terms: out,
    }
    .pruned()
}

/// Normalized `(a₀H†b₀V† − a₀V†b₀H†)² |0⟩`.
pub fn two_pair_source() -> FockVector {
    use source_mode::*;
    let one = Complex64::new(1.0, 0.0);
    let pair = CreationPoly::from_monomials(&[(&[A0_H, B0_V], one), (&[A0_V, B0_H], -one)]);
    pair.mul(&pair)
        .on_vacuum(ModeSet::Source)
        .normalized()
        .expect("double emission is nonzero")
}

/// Beam-splitter convention. For each source mode x₀ with vacuum port uₓ:
/// `x₀† → t·x† + r·x′†`, `uₓ† → −r*·x† + t*·x′†`, identically for H and V.
/// `compensation[arm]` is a phase applied to the V photon of that output arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitterConvention {
    t: Complex64,
    r: Complex64,
    compensation: [f64; 4],
}

impl Default for SplitterConvention {
    /// Symmetric real splitter, t = r = 1/√2. With it the post-selected state
    /// already equals [`crate::qstate::canonical_psi4`] amplitude by amplitude,
    /// so the compensation phases are all zero.
    fn default() -> Self {
        SplitterConvention {
            t: Complex64::new(FRAC_1_SQRT_2, 0.0),
            r: Complex64::new(FRAC_1_SQRT_2, 0.0),
            compensation: [0.0; 4],
        }
    }
}

impl SplitterConvention {
    pub fn new(t: Complex64, r: Complex64, compensation: [f64; 4]) -> Result<Self> {
        if (t.norm_sqr() - 0.5).abs() > 1e-12 || (r.norm_sqr() - 0.5).abs() > 1e-12 {
            return Err(Error::invalid_argument(format!(
                "splitter must be 50:50, got |t|²={}, |r|²={}",
                t.norm_sqr(),
                r.norm_sqr()
            )));
        }
        Ok(SplitterConvention { t, r, compensation })
    }

    pub fn with_compensation(mut self, compensation: [f64; 4]) -> Self {
        self.compensation = compensation;
        self
    }

    pub fn compensation(&self) -> [f64; 4] {
        self.compensation
    }

    /// Full source → arms creation-operator map, compensation included.
    fn mode_map(&self) -> [[Complex64; MODES]; MODES] {
        use source_mode::*;
        let z = Complex64::default();
        let mut map = [[z; MODES]; MODES];
        let phase = |arm: Arm, pol: usize| {
            if pol == 1 {
                Complex64::from_polar(1.0, self.compensation[arm.index()])
            } else {
                Complex64::new(1.0, 0.0)
            }
        };
        let splits = [
            (A0_H, UA_H, Arm::A, Arm::APrime, 0),
            (A0_V, UA_V, Arm::A, Arm::APrime, 1),
            (B0_H, UB_H, Arm::B, Arm::BPrime, 0),
            (B0_V, UB_V, Arm::B, Arm::BPrime, 1),
        ];
        for (src, vac, out1, out2, pol) in splits {
            let (o1, o2) = (arm_mode(out1, pol), arm_mode(out2, pol));
            map[src][o1] = self.t * phase(out1, pol);
            map[src][o2] = self.r * phase(out2, pol);
            map[vac][o1] = -self.r.conj() * phase(out1, pol);
            map[vac][o2] = self.t.conj() * phase(out2, pol);
        }
        map
    }
}

pub fn apply_beam_splitters(fock: &FockVector, conv: &SplitterConvention) -> Result<FockVector> {
    if fock.modes != ModeSet::Source {
        return Err(Error::invalid_argument(
            "beam splitters act on source modes, got arm modes",
        ));
    }
    Ok(apply_mode_transform(fock, &conv.mode_map(), ModeSet::Arms))
}

/// Rotates polarization identically in both source modes (a₀ and b₀).
pub fn rotate_source_polarization(fock: &FockVector, u: &LocalUnitary) -> Result<FockVector> {
    if fock.modes != ModeSet::Source {
        return Err(Error::invalid_argument("expected source modes"));
    }
    let m = u.matrix();
    let mut map = [[Complex64::default(); MODES]; MODES];
    for base in [0, 2, 4, 6] {
        for pin in 0..2 {
            for pout in 0..2 {
                // single photon |pin⟩ → Σ U[pout][pin] |pout⟩
                map[base + pin][base + pout] = m[pout][pin];
            }
        }
    }
    Ok(apply_mode_transform(fock, &map, ModeSet::Source))
}

/// Keeps occupations with exactly one photon per output arm and reads them
/// as polarization qubits. Returns the conditional state and the success
/// probability.
pub fn postselect_one_per_arm(fock: &FockVector) -> Result<(StateVector4, f64)> {
    if fock.modes != ModeSet::Arms {
        return Err(Error::invalid_argument("post-selection needs arm modes"));
    }
    if let Some((occ, _)) = fock.terms().find(|(o, _)| o.total() != 4) {
        return Err(Error::invalid_argument(format!(
            "expected four photons, found occupation {:?}",
            occ.0
        )));
    }
    let mut amps = [Complex64::default(); 16];
    let mut success = 0.0;
    for (occ, amp) in &fock.terms {
        let mut index = 0;
        let mut one_each = true;
        for arm in Arm::ALL {
            let (h, v) = (occ[arm_mode(arm, 0)], occ[arm_mode(arm, 1)]);
            if h + v != 1 {
                one_each = false;
                break;
            }
            index = (index << 1) | usize::from(v == 1);
        }
        if one_each {
            amps[index] += amp;
            success += amp.norm_sqr();
        }
    }
    if success <= 1e-15 {
        return Err(Error::EmptyPostselection);
    }
    let norm = fock.norm_sqr();
    let state = StateVector4::normalized(amps)?;
    Ok((state, success / norm))
}

/// Source → splitters → post-selection.
pub fn oracle_state(conv: &SplitterConvention) -> Result<(StateVector4, f64)> {
    let split = apply_beam_splitters(&two_pair_source(), conv)?;
    postselect_one_per_arm(&split)
}
