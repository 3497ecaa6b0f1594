use std::f64::consts::TAU;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fourfold::bell::{bell_functional, BellSettings, ETable};
use fourfold::correlation::{correlation_closed_form, correlation_exact, SettingQuad, StateModel};
use fourfold::experiment::{run_bell, DetectorBank, NoiseModel};
use fourfold::io::{read_frames_csv, read_transcript_csv, write_frames_csv, write_transcript_csv};
use fourfold::qkd::{run_protocol, EveModel, ProtocolConfig, ProtocolMode, ThreePartyBasis};
use fourfold::qstate::{
    apply_identical_unitary, canonical_psi4, overlap, LocalUnitary, StateVector4,
};

fn phases8() -> impl Strategy<Value = [[f64; 2]; 4]> {
    proptest::array::uniform4(proptest::array::uniform2(0.0..TAU))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noisy_correlation_is_scaled_closed_form(p in proptest::array::uniform4(0.0..TAU), v in 0.0f64..=1.0) {
        let q = SettingQuad::new(p);
        let e = correlation_exact(&canonical_psi4(), &q, v).unwrap();
        prop_assert!(e.abs() <= v + 1e-12);
        prop_assert!((e - v * correlation_closed_form(&q)).abs() < 1e-10);
    }

    #[test]
    fn bell_value_is_linear_in_visibility(p in phases8(), v in 0.0f64..=1.0) {
        let settings = BellSettings::new(p);
        let s1 = bell_functional(&ETable::from_model(&StateModel { state: canonical_psi4(), visibility: 1.0 }, &settings));
        let sv = bell_functional(&ETable::from_model(&StateModel { state: canonical_psi4(), visibility: v }, &settings));
        prop_assert!((sv - v * s1).abs() < 1e-10);
    }

    #[test]
    fn no_state_exceeds_the_quantum_maximum(
        re in proptest::array::uniform16(-1.0f64..1.0),
        im in proptest::array::uniform16(-1.0f64..1.0),
        p in phases8(),
    ) {
        let amps: [Complex64; 16] = std::array::from_fn(|i| Complex64::new(re[i], im[i]));
        prop_assume!(amps.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-6);
        let state = StateVector4::normalized(amps).unwrap();
        let s = bell_functional(&ETable::from_model(&StateModel { state, visibility: 1.0 }, &BellSettings::new(p)));
        prop_assert!(s <= 8f64.sqrt() + 1e-9, "S = {s}");
    }

    #[test]
    fn canonical_state_is_invariant_under_identical_rotations(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = LocalUnitary::random(&mut rng);
        let psi = canonical_psi4();
        prop_assert!((overlap(&apply_identical_unitary(&psi, &u), &psi).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transcript_csv_is_a_fixed_point(seed in any::<u64>(), mode in 0usize..3, eve in any::<bool>()) {
        let config = ProtocolConfig {
            n_rounds: 200,
            mode: [ProtocolMode::FourParty, ProtocolMode::SecretSharing, ProtocolMode::ThreeParty][mode],
            key_fraction: 0.3,
            noise: NoiseModel::new(0.9).unwrap(),
            eve: if eve {
                EveModel::InterceptResend { arm: fourfold::qstate::Arm::B, basis: fourfold::qstate::MeasurementSetting::Computational }
            } else {
                EveModel::None
            },
            seed,
            three_party_basis: ThreePartyBasis::Computational,
        };
        let t = run_protocol(&canonical_psi4(), &config).unwrap();
        let mut first = Vec::new();
        write_transcript_csv(&mut first, &t.rounds).unwrap();
        let back = read_transcript_csv(first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_transcript_csv(&mut second, &back).unwrap();
        prop_assert_eq!(first, second);
        prop_assert!(back.iter().zip(&t.rounds).all(|(x, y)| x.outcomes == y.outcomes && x.kind == y.kind));
    }

    #[test]
    fn frames_csv_is_a_fixed_point(seed in any::<u64>(), p in phases8()) {
        let r = run_bell(
            &canonical_psi4(),
            &NoiseModel::new(0.8).unwrap(),
            &DetectorBank::ideal(),
            &BellSettings::new(p),
            50,
            seed,
            false,
        )
        .unwrap();
        let mut first = Vec::new();
        write_frames_csv(&mut first, &r.frames).unwrap();
        let back = read_frames_csv(first.as_slice()).unwrap();
        prop_assert_eq!(back.len(), 16);
        for (f, (_, counts)) in r.frames.iter().zip(&back) {
            prop_assert_eq!(&f.counts, counts);
        }
    }
}
