//! Round-by-round simulation of the multi-party key distribution schemes
//! built on the four-photon state, with a Bell-violation security check and
//! an intercept-resend eavesdropper on a single arm.
//!
//! Party A (arm a) picks π/4 with probability `key_fraction`, otherwise 0 or
//! π/2; parties A′, B, B′ pick ±π/4. Rounds where A used 0 or π/2 are Bell
//! rounds: everybody announces settings and results and they feed the Bell
//! functional. The remaining rounds carry key material:
//!
//! * `FourParty`: A′, B, B′ keep their random ±π/4; rounds where all four
//!   used π/4 are sifted out as key rounds.
//! * `SecretSharing`: all four measure at π/4 on key rounds.
//! * `ThreeParty`: all four measure in a common designated basis (H/V by
//!   default) so that A and A′ can merge into A*.
//!
//! Outcomes are ±1; in the H/V basis H counts as +1. Key bits are
//! `(1 − l)/2`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};
use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bell::{bell_error, bell_functional, paper_optimal_settings, BellSettings, ETable};
use crate::correlation::{CorrelationEstimate, CorrelationModel, MixtureModel};
use crate::error::{Error, Result};
use crate::experiment::{frame_rng, NoiseModel};
use crate::qstate::{
    outcome_distribution, setting_eigenstate, Arm, MeasurementSetting, StateVector4,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMode {
    FourParty,
    SecretSharing,
    ThreeParty,
}

impl ProtocolMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "four_party" => Ok(ProtocolMode::FourParty),
            "secret_sharing" => Ok(ProtocolMode::SecretSharing),
            "three_party" => Ok(ProtocolMode::ThreeParty),
            other => Err(Error::Parse(format!("unknown protocol mode `{other}`"))),
        }
    }
}

impl fmt::Display for ProtocolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolMode::FourParty => "four_party",
            ProtocolMode::SecretSharing => "secret_sharing",
            ProtocolMode::ThreeParty => "three_party",
        })
    }
}

/// Basis in which A and A′ compare results for the three-party key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreePartyBasis {
    #[default]
    Computational,
    /// Equatorial π/4, the key setting of the other modes.
    Diagonal,
}

impl ThreePartyBasis {
    pub fn setting(self) -> MeasurementSetting {
        match self {
            ThreePartyBasis::Computational => MeasurementSetting::Computational,
            ThreePartyBasis::Diagonal => MeasurementSetting::Equatorial(FRAC_PI_4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EveModel {
    #[default]
    None,
    /// Measures the photon in `arm` in `basis` and resends the eigenstate
    /// matching her result.
    InterceptResend { arm: Arm, basis: MeasurementSetting },
}

impl EveModel {
    /// Pure branches `(probability, post-attack state)` of the four-photon
    /// state, enumerating Eve's two possible results.
    pub fn branches(&self, state: &StateVector4) -> Vec<(f64, StateVector4)> {
        match *self {
            EveModel::None => vec![(1.0, *state)],
            EveModel::InterceptResend { arm, basis } => basis
                .outcomes()
                .iter()
                .filter_map(|o| {
                    let q = setting_eigenstate(basis, *o).expect("outcome from its own basis");
                    let (p, s) = state.project_arm(arm, q);
                    s.map(|s| (p, s))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    Bell,
    Key,
}

/// What a party made public in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Announcement {
    pub setting: bool,
    pub outcome: bool,
}

impl Announcement {
    pub const NOTHING: Announcement = Announcement {
        setting: false,
        outcome: false,
    };
    pub const SETTING: Announcement = Announcement {
        setting: true,
        outcome: false,
    };
    pub const ALL: Announcement = Announcement {
        setting: true,
        outcome: true,
    };

    pub fn code(self) -> &'static str {
        match (self.setting, self.outcome) {
            (true, true) => "so",
            (true, false) => "s",
            (false, true) => "o",
            (false, false) => "-",
        }
    }

    pub fn parse(code: &str) -> Result<Self> {
        match code {
            "so" => Ok(Announcement::ALL),
            "s" => Ok(Announcement::SETTING),
            "o" => Ok(Announcement {
                setting: false,
                outcome: true,
            }),
            "-" => Ok(Announcement::NOTHING),
            other => Err(Error::Parse(format!("bad announcement code `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub kind: RoundKind,
    pub settings: [MeasurementSetting; 4],
    pub outcomes: [i8; 4],
    pub announced: [Announcement; 4],
}

impl RoundRecord {
    pub fn parity(&self) -> i8 {
        self.outcomes.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub n_rounds: u64,
    pub mode: ProtocolMode,
    pub key_fraction: f64,
    pub noise: NoiseModel,
    pub eve: EveModel,
    pub seed: u64,
    pub three_party_basis: ThreePartyBasis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolTranscript {
    pub config: ProtocolConfig,
    pub rounds: Vec<RoundRecord>,
}

fn approx_phase(setting: MeasurementSetting, phi: f64) -> bool {
    match setting {
        MeasurementSetting::Equatorial(p) => {
            let d = (p - phi).rem_euclid(TAU);
            d < 1e-9 || TAU - d < 1e-9
        }
        MeasurementSetting::Computational => false,
    }
}

fn same_setting(x: MeasurementSetting, y: MeasurementSetting) -> bool {
    match (x, y) {
        (MeasurementSetting::Computational, MeasurementSetting::Computational) => true,
        (MeasurementSetting::Equatorial(_), _) => y.phase().is_some_and(|p| approx_phase(x, p)),
        _ => false,
    }
}

/// Runs the protocol on the four-photon `state`.
pub fn run_protocol(state: &StateVector4, config: &ProtocolConfig) -> Result<ProtocolTranscript> {
    if config.n_rounds == 0 {
        return Err(Error::invalid_argument("at least one round is required"));
    }
    if !(config.key_fraction > 0.0 && config.key_fraction < 1.0) {
        return Err(Error::invalid_argument(format!(
            "key fraction {} must lie strictly between 0 and 1",
            config.key_fraction
        )));
    }
    let branches = config.eve.branches(state);
    let branch_pick = WeightedIndex::new(branches.iter().map(|(p, _)| *p))
        .map_err(|e| Error::InvalidState(e.to_string()))?;
    let eq = MeasurementSetting::equatorial;
    let pm = [eq(FRAC_PI_4), eq(-FRAC_PI_4)];

    let rounds = (0..config.n_rounds)
        .map(|round| {
            let mut rng = frame_rng(config.seed, round);
            let key = rng.random::<f64>() < config.key_fraction;
            let random_pm =
                |rng: &mut rand_chacha::ChaCha8Rng| pm[usize::from(rng.random_bool(0.5))];
            let settings = match (key, config.mode) {
                (false, _) => {
                    let a = if rng.random_bool(0.5) {
                        eq(FRAC_PI_2)
                    } else {
                        eq(0.0)
                    };
                    [
                        a,
                        random_pm(&mut rng),
                        random_pm(&mut rng),
                        random_pm(&mut rng),
                    ]
                }
                (true, ProtocolMode::FourParty) => [
                    pm[0],
                    random_pm(&mut rng),
                    random_pm(&mut rng),
                    random_pm(&mut rng),
                ],
                (true, ProtocolMode::SecretSharing) => [pm[0]; 4],
                (true, ProtocolMode::ThreeParty) => [config.three_party_basis.setting(); 4],
            };

            let (_, branch) = &branches[branch_pick.sample(&mut rng)];
            let dist = if rng.random::<f64>() < config.noise.visibility() {
                outcome_distribution(branch, &settings)
            } else {
                [1.0 / 16.0; 16]
            };
            let index = WeightedIndex::new(dist)
                .map_err(|e| Error::InvalidState(e.to_string()))?
                .sample(&mut rng);
            let outcomes: [i8; 4] =
                std::array::from_fn(|k| if (index >> (3 - k)) & 1 == 0 { 1 } else { -1 });

            let announced = if key {
                [Announcement::SETTING; 4]
            } else {
                [Announcement::ALL; 4]
            };
            Ok(RoundRecord {
                round,
                kind: if key { RoundKind::Key } else { RoundKind::Bell },
                settings,
                outcomes,
                announced,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProtocolTranscript {
        config: *config,
        rounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub s_estimate: f64,
    pub s_error: f64,
    pub k_sigma: f64,
    /// `s_estimate − k_sigma·s_error > 1`
    pub violation: bool,
    pub rounds_used: u64,
    pub table: ETable,
}

pub const DEFAULT_K_SIGMA: f64 = 3.0;

/// Table index of a Bell round's settings, if they belong to the 16 combinations.
fn bell_table_index(settings: &[MeasurementSetting; 4], reference: &BellSettings) -> Option<usize> {
    let mut index = 0;
    for (arm, s) in settings.iter().enumerate() {
        let k = (0..2).find(|&k| approx_phase(*s, reference.phases[arm][k]))?;
        index = (index << 1) | k;
    }
    Some(index)
}

/// Groups Bell rounds by their 16 setting combinations and evaluates the
/// Bell functional from the announced results.
pub fn security_check(transcript: &ProtocolTranscript, k_sigma: f64) -> Result<SecurityReport> {
    let reference = paper_optimal_settings();
    let mut counts = [[0u64; 16]; 16];
    let mut used = 0;
    for r in transcript
        .rounds
        .iter()
        .filter(|r| r.kind == RoundKind::Bell)
    {
        if r.announced.iter().any(|a| !a.outcome || !a.setting) {
            continue;
        }
        if let Some(t) = bell_table_index(&r.settings, &reference) {
            let outcome: usize = r
                .outcomes
                .iter()
                .fold(0, |acc, &l| (acc << 1) | usize::from(l < 0));
            counts[t][outcome] += 1;
            used += 1;
        }
    }
    let missing: Vec<String> = (0..16)
        .filter(|&t| counts[t].iter().sum::<u64>() == 0)
        .map(|t| {
            format!(
                "(k,l,m,n)=({},{},{},{})",
                (t >> 3) + 1,
                ((t >> 2) & 1) + 1,
                ((t >> 1) & 1) + 1,
                (t & 1) + 1
            )
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::InsufficientData { missing });
    }
    let mut values = [0.0; 16];
    let mut errors = [0.0; 16];
    for t in 0..16 {
        let n: u64 = counts[t].iter().sum();
        let probs: [f64; 16] = std::array::from_fn(|i| counts[t][i] as f64 / n as f64);
        let e = CorrelationEstimate::from_probabilities(&probs, n)?;
        values[t] = e.value;
        errors[t] = e.std_error;
    }
    let table = ETable::with_errors(values, errors)?;
    let s_estimate = bell_functional(&table);
    let s_error = bell_error(&table)?;
    Ok(SecurityReport {
        s_estimate,
        s_error,
        k_sigma,
        violation: s_estimate - k_sigma * s_error > 1.0,
        rounds_used: used,
        table,
    })
}

/// Exact Bell value at the optimal settings under noise and an eavesdropper,
/// obtained by enumerating Eve's results.
pub fn exact_bell_value(state: &StateVector4, visibility: f64, eve: &EveModel) -> f64 {
    let model = MixtureModel {
        branches: eve.branches(state),
        visibility,
    };
    bell_functional(&ETable::from_model(&model, &paper_optimal_settings()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyKey {
    pub party: String,
    pub bits: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairQber {
    pub parties: [String; 2],
    pub qber: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyMaterial {
    pub keys: Vec<PartyKey>,
    pub qber: Vec<PairQber>,
    pub rounds_used: u64,
}

impl KeyMaterial {
    pub fn key(&self, party: &str) -> Option<&[bool]> {
        self.keys
            .iter()
            .find(|k| k.party == party)
            .map(|k| k.bits.as_slice())
    }
}

fn bit(l: i8) -> bool {
    l < 0
}

fn qber(x: &[bool], y: &[bool]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().zip(y).filter(|(a, b)| a != b).count() as f64 / x.len() as f64
}

/// Outcomes revealed by the two cooperating parties on key rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PairKeyResult {
    pub material: KeyMaterial,
    pub revealing: [Arm; 2],
    pub holders: [Arm; 2],
    /// `(round, [outcome of revealing[0], outcome of revealing[1]])`
    pub revealed: Vec<(u64, [i8; 2])>,
}

/// Two parties reveal settings and results of the all-π/4 key rounds; each
/// of the other two infers the other's result from the product rule
/// `l_a·l_a′·l_b·l_b′ = +1`. The key is the second holder's result; the
/// first holder obtains it by inference.
pub fn extract_pair_keys(
    transcript: &ProtocolTranscript,
    revealing: [Arm; 2],
) -> Result<PairKeyResult> {
    if revealing[0] == revealing[1] {
        return Err(Error::invalid_argument(
            "revealing parties must be distinct",
        ));
    }
    let mut holders = Arm::ALL.into_iter().filter(|a| !revealing.contains(a));
    let holders = [
        holders.next().expect("two holders"),
        holders.next().expect("two holders"),
    ];
    let key_setting = MeasurementSetting::Equatorial(FRAC_PI_4);

    let mut inferred = Vec::new();
    let mut actual = Vec::new();
    let mut revealed = Vec::new();
    for r in transcript.rounds.iter().filter(|r| {
        r.kind == RoundKind::Key && r.settings.iter().all(|s| same_setting(*s, key_setting))
    }) {
        let rev = [
            r.outcomes[revealing[0].index()],
            r.outcomes[revealing[1].index()],
        ];
        let guess = rev[0] * rev[1] * r.outcomes[holders[0].index()];
        inferred.push(bit(guess));
        actual.push(bit(r.outcomes[holders[1].index()]));
        revealed.push((r.round, rev));
    }
    if actual.is_empty() {
        return Err(Error::EmptyKey(
            "no key rounds with all four analyzers at π/4".into(),
        ));
    }
    let q = qber(&inferred, &actual);
    Ok(PairKeyResult {
        material: KeyMaterial {
            qber: vec![PairQber {
                parties: [holders[0].label().into(), holders[1].label().into()],
                qber: q,
            }],
            rounds_used: actual.len() as u64,
            keys: vec![
                PartyKey {
                    party: holders[0].label().into(),
                    bits: inferred,
                },
                PartyKey {
                    party: holders[1].label().into(),
                    bits: actual,
                },
            ],
        },
        revealing,
        holders,
        revealed,
    })
}

/// Exact error rate of the pair key: probability that the four results at
/// the key setting have odd parity.
pub fn exact_pair_qber(state: &StateVector4, visibility: f64, eve: &EveModel) -> f64 {
    let settings = [MeasurementSetting::Equatorial(FRAC_PI_4); 4];
    let model = MixtureModel {
        branches: eve.branches(state),
        visibility,
    };
    let e = model.correlation(&crate::correlation::SettingQuad(
        settings.map(|s| s.phase().unwrap()),
    ));
    (1.0 - e) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreePartyKey {
    pub material: KeyMaterial,
    pub qualifying_rounds: u64,
    pub kept_rounds: u64,
    pub kept_fraction: f64,
    /// Fraction of kept rounds where A*, B and B′ all hold the same bit.
    pub three_way_agreement: f64,
    /// ⟨l_a·l_b⟩ and ⟨l_b·l_b′⟩ over kept rounds.
    pub correlation_ab: f64,
    pub correlation_bb: f64,
}

/// A and A′ merge into A* and keep rounds where their results agree. On
/// those rounds the GHZ component fixes `l_b = l_b′ = −l_a`, so B and B′
/// flip their own bits to obtain A*'s.
pub fn distill_three_party(transcript: &ProtocolTranscript) -> Result<ThreePartyKey> {
    let basis = transcript.config.three_party_basis.setting();
    let qualifying: Vec<&RoundRecord> = transcript
        .rounds
        .iter()
        .filter(|r| {
            r.kind == RoundKind::Key
                && same_setting(r.settings[0], basis)
                && same_setting(r.settings[1], basis)
                && same_setting(r.settings[2], basis)
                && same_setting(r.settings[3], basis)
        })
        .collect();
    let kept: Vec<&&RoundRecord> = qualifying
        .iter()
        .filter(|r| r.outcomes[0] == r.outcomes[1])
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyKey(
            "no rounds where A and A′ measured in the common basis and agreed".into(),
        ));
    }
    let a_star: Vec<bool> = kept.iter().map(|r| bit(r.outcomes[0])).collect();
    let b: Vec<bool> = kept.iter().map(|r| !bit(r.outcomes[2])).collect();
    let bp: Vec<bool> = kept.iter().map(|r| !bit(r.outcomes[3])).collect();
    let n = kept.len() as f64;
    let agree3 = (0..kept.len())
        .filter(|&i| a_star[i] == b[i] && b[i] == bp[i])
        .count() as f64
        / n;
    let corr = |x: usize, y: usize| {
        kept.iter()
            .map(|r| f64::from(r.outcomes[x] * r.outcomes[y]))
            .sum::<f64>()
            / n
    };
    Ok(ThreePartyKey {
        material: KeyMaterial {
            qber: vec![
                PairQber {
                    parties: ["A*".into(), "b".into()],
                    qber: qber(&a_star, &b),
                },
                PairQber {
                    parties: ["A*".into(), "b'".into()],
                    qber: qber(&a_star, &bp),
                },
                PairQber {
                    parties: ["b".into(), "b'".into()],
                    qber: qber(&b, &bp),
                },
            ],
            rounds_used: kept.len() as u64,
            keys: vec![
                PartyKey {
                    party: "A*".into(),
                    bits: a_star,
                },
                PartyKey {
                    party: "b".into(),
                    bits: b,
                },
                PartyKey {
                    party: "b'".into(),
                    bits: bp,
                },
            ],
        },
        qualifying_rounds: qualifying.len() as u64,
        kept_rounds: kept.len() as u64,
        kept_fraction: n / qualifying.len() as f64,
        three_way_agreement: agree3,
        correlation_ab: corr(0, 2),
        correlation_bb: corr(2, 3),
    })
}

/// Packs bits MSB-first into lowercase hex; the tail is zero-padded.
pub fn bits_to_hex(bits: &[bool]) -> String {
    bits.chunks(8)
        .map(|c| {
            let byte = c
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)));
            format!("{byte:02x}")
        })
        .collect()
}

pub fn hex_to_bits(hex: &str, n_bits: usize) -> Result<Vec<bool>> {
    let hex = hex.trim();
    if !hex.len().is_multiple_of(2) || hex.len() * 4 < n_bits {
        return Err(Error::Parse("hex key has the wrong length".into()));
    }
    let mut bits = Vec::with_capacity(n_bits);
    for i in (0..hex.len()).step_by(2) {
        let byte = u8::from_str_radix(&hex[i..i + 2], 16)
            .map_err(|e| Error::Parse(format!("bad hex key: {e}")))?;
        for k in 0..8 {
            bits.push(byte & (1 << (7 - k)) != 0);
        }
    }
    bits.truncate(n_bits);
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::canonical_psi4;

    fn config(mode: ProtocolMode, n: u64, v: f64, eve: EveModel, seed: u64) -> ProtocolConfig {
        ProtocolConfig {
            n_rounds: n,
            mode,
            key_fraction: 0.5,
            noise: NoiseModel::new(v).unwrap(),
            eve,
            seed,
            three_party_basis: ThreePartyBasis::Computational,
        }
    }

    #[test]
    fn setting_distribution() {
        let t = run_protocol(
            &canonical_psi4(),
            &config(ProtocolMode::FourParty, 10_000, 1.0, EveModel::None, 1),
        )
        .unwrap();
        let bell = t
            .rounds
            .iter()
            .filter(|r| r.kind == RoundKind::Bell)
            .count() as f64;
        let sigma = (0.25f64 / 10_000.0).sqrt();
        assert!((bell / 10_000.0 - 0.5).abs() <= 3.0 * sigma);
        for r in &t.rounds {
            for s in &r.settings[1..] {
                assert!(approx_phase(*s, FRAC_PI_4) || approx_phase(*s, -FRAC_PI_4));
            }
        }
    }

    #[test]
    fn common_key_setting_has_even_parity() {
        let t = run_protocol(
            &canonical_psi4(),
            &config(ProtocolMode::FourParty, 20_000, 1.0, EveModel::None, 2),
        )
        .unwrap();
        let mut seen = 0;
        for r in &t.rounds {
            if r.settings.iter().all(|s| approx_phase(*s, FRAC_PI_4)) {
                assert_eq!(r.parity(), 1);
                seen += 1;
            }
        }
        assert!(seen > 100);
    }

    #[test]
    fn transcripts_are_reproducible() {
        let c = config(ProtocolMode::SecretSharing, 2000, 0.9, EveModel::None, 9);
        assert_eq!(
            run_protocol(&canonical_psi4(), &c).unwrap(),
            run_protocol(&canonical_psi4(), &c).unwrap()
        );
    }

    #[test]
    fn bad_config_is_rejected() {
        let mut c = config(ProtocolMode::FourParty, 10, 1.0, EveModel::None, 1);
        c.key_fraction = 1.0;
        assert!(run_protocol(&canonical_psi4(), &c).is_err());
        c.key_fraction = 0.5;
        c.n_rounds = 0;
        assert!(run_protocol(&canonical_psi4(), &c).is_err());
    }

    #[test]
    fn missing_combinations_are_listed() {
        let t = run_protocol(
            &canonical_psi4(),
            &config(ProtocolMode::FourParty, 20, 1.0, EveModel::None, 3),
        )
        .unwrap();
        match security_check(&t, 3.0) {
            Err(Error::InsufficientData { missing }) => assert!(!missing.is_empty()),
            other => panic!("expected insufficient data, got {other:?}"),
        }
    }

    #[test]
    fn exact_values_under_attack() {
        let s = canonical_psi4();
        assert!(
            (exact_bell_value(&s, 1.0, &EveModel::None) - 4.0 * 2f64.sqrt() / 3.0).abs() < 1e-12
        );
        let eq0 = EveModel::InterceptResend {
            arm: Arm::A,
            basis: MeasurementSetting::Equatorial(0.0),
        };
        // frozen from an independent dense-matrix computation
        assert!((exact_bell_value(&s, 1.0, &eq0) - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-12);
        let hv = EveModel::InterceptResend {
            arm: Arm::A,
            basis: MeasurementSetting::Computational,
        };
        assert!(exact_bell_value(&s, 1.0, &hv).abs() < 1e-12);
        let hv_b = EveModel::InterceptResend {
            arm: Arm::B,
            basis: MeasurementSetting::Computational,
        };
        assert!((exact_pair_qber(&s, 1.0, &hv_b) - 0.5).abs() < 1e-12);
        let eq_b = EveModel::InterceptResend {
            arm: Arm::B,
            basis: MeasurementSetting::Equatorial(0.0),
        };
        assert!((exact_pair_qber(&s, 1.0, &eq_b) - 0.25).abs() < 1e-12);
        assert!(exact_pair_qber(&s, 1.0, &EveModel::None).abs() < 1e-12);
    }

    #[test]
    fn pair_keys_agree_without_eve() {
        let t = run_protocol(
            &canonical_psi4(),
            &config(ProtocolMode::SecretSharing, 20_000, 1.0, EveModel::None, 4),
        )
        .unwrap();
        let r = extract_pair_keys(&t, [Arm::A, Arm::APrime]).unwrap();
        assert_eq!(r.holders, [Arm::B, Arm::BPrime]);
        assert_eq!(r.material.qber[0].qber, 0.0);
        assert_eq!(r.material.key("b"), r.material.key("b'"));
        let ones = r.material.key("b'").unwrap().iter().filter(|b| **b).count() as f64;
        let n = r.material.rounds_used as f64;
        assert!((ones / n - 0.5).abs() <= 3.0 * (0.25 / n).sqrt());
        assert!(extract_pair_keys(&t, [Arm::A, Arm::A]).is_err());
    }

    #[test]
    fn announcements_never_leak_key_outcomes() {
        let t = run_protocol(
            &canonical_psi4(),
            &config(ProtocolMode::SecretSharing, 5000, 1.0, EveModel::None, 5),
        )
        .unwrap();
        for r in t.rounds.iter().filter(|r| r.kind == RoundKind::Key) {
            assert!(r.announced.iter().all(|a| !a.outcome));
        }
        let keys = extract_pair_keys(&t, [Arm::B, Arm::BPrime]).unwrap();
        // only the revealing pair's outcomes are published
        for (round, rev) in &keys.revealed {
            let r = &t.rounds[*round as usize];
            assert_eq!(*rev, [r.outcomes[2], r.outcomes[3]]);
        }
    }

    #[test]
    fn three_party_kept_fraction_and_agreement() {
        let t = run_protocol(
            &canonical_psi4(),
            &config(ProtocolMode::ThreeParty, 20_000, 1.0, EveModel::None, 6),
        )
        .unwrap();
        let k = distill_three_party(&t).unwrap();
        let n = k.qualifying_rounds as f64;
        let p = 2.0 / 3.0;
        assert!((k.kept_fraction - p).abs() <= 3.0 * (p * (1.0 - p) / n).sqrt());
        assert_eq!(k.three_way_agreement, 1.0);
        assert_eq!(k.correlation_bb, 1.0);
        assert_eq!(k.correlation_ab, -1.0);
    }

    #[test]
    fn three_party_diagonal_variant() {
        let mut c = config(ProtocolMode::ThreeParty, 20_000, 1.0, EveModel::None, 16);
        c.three_party_basis = ThreePartyBasis::Diagonal;
        let k = distill_three_party(&run_protocol(&canonical_psi4(), &c).unwrap()).unwrap();
        assert_eq!(k.three_way_agreement, 1.0);
        let n = k.qualifying_rounds as f64;
        assert!((k.kept_fraction - 2.0 / 3.0).abs() <= 3.0 * (2.0 / 9.0 / n).sqrt());
    }

    #[test]
    fn three_party_under_white_noise() {
        let t = run_protocol(
            &canonical_psi4(),
            &config(ProtocolMode::ThreeParty, 40_000, 0.0, EveModel::None, 7),
        )
        .unwrap();
        let k = distill_three_party(&t).unwrap();
        let n = k.qualifying_rounds as f64;
        assert!((k.kept_fraction - 0.5).abs() <= 3.0 * (0.25 / n).sqrt());
        let m = k.kept_rounds as f64;
        for q in &k.material.qber {
            assert!((q.qber - 0.5).abs() <= 3.0 * (0.25 / m).sqrt());
        }
    }

    #[test]
    fn empty_key_signals() {
        let t = run_protocol(
            &canonical_psi4(),
            &config(ProtocolMode::ThreeParty, 200, 1.0, EveModel::None, 8),
        )
        .unwrap();
        assert!(matches!(
            extract_pair_keys(&t, [Arm::A, Arm::APrime]),
            Err(Error::EmptyKey(_))
        ));
        let t = run_protocol(
            &canonical_psi4(),
            &config(ProtocolMode::SecretSharing, 200, 1.0, EveModel::None, 8),
        )
        .unwrap();
        assert!(matches!(distill_three_party(&t), Err(Error::EmptyKey(_))));
    }

    #[test]
    fn hex_round_trip() {
        let bits = vec![
            true, false, true, true, false, false, false, true, true, true,
        ];
        let hex = bits_to_hex(&bits);
        assert_eq!(hex, "b1c0");
        assert_eq!(hex_to_bits(&hex, bits.len()).unwrap(), bits);
    }
}
