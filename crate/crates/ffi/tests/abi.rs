use std::path::Path;
use std::process::Command;
use std::ptr;

use fourfold_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as libc::c_char; 256];
    let n = unsafe { fourfold_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|c| *c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn oracle_matches_canonical_state() {
    unsafe {
        let canonical = fourfold_state_canonical();
        let mut oracle = ptr::null_mut();
        let mut p = 0.0;
        assert_eq!(
            fourfold_state_oracle(&mut oracle, &mut p),
            FourfoldStatus::Ok
        );
        let mut ov = 0.0;
        assert_eq!(
            fourfold_state_overlap_magnitude(canonical, oracle, &mut ov),
            FourfoldStatus::Ok
        );
        assert!((ov - 1.0).abs() < 1e-12);
        assert!((p - 0.25).abs() < 1e-12);

        let (mut re, mut im) = ([0.0; 16], [0.0; 16]);
        assert_eq!(
            fourfold_state_amplitudes(canonical, re.as_mut_ptr(), im.as_mut_ptr()),
            FourfoldStatus::Ok
        );
        assert!((re[0b0011] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((re[0b0101] + 1.0 / (2.0 * 3f64.sqrt())).abs() < 1e-15);
        fourfold_state_free(canonical);
        fourfold_state_free(oracle);
    }
}

#[test]
fn exact_bell_value_at_optimal_settings() {
    unsafe {
        let s = fourfold_state_canonical();
        let mut v = 0.0;
        assert_eq!(
            fourfold_bell_exact(s, 1.0, ptr::null(), &mut v),
            FourfoldStatus::Ok
        );
        assert!((v - 4.0 * 2f64.sqrt() / 3.0).abs() < 1e-12);

        let phases = [0.0, std::f64::consts::FRAC_PI_2, 0.0, 0.0];
        let mut e = 0.0;
        assert_eq!(
            fourfold_correlation(s, phases.as_ptr(), 1.0, &mut e),
            FourfoldStatus::Ok
        );
        assert!(e.abs() < 1e-12);

        assert_eq!(
            fourfold_bell_exact(s, 1.5, ptr::null(), &mut v),
            FourfoldStatus::InvalidArgument
        );
        assert!(last_error().contains("visibility"));
        fourfold_state_free(s);
    }
}

#[test]
fn bell_run_is_reproducible() {
    unsafe {
        let s = fourfold_state_canonical();
        let run = |seed| {
            let mut r = ptr::null_mut();
            assert_eq!(
                fourfold_bell_run(s, 0.793, ptr::null(), ptr::null(), 400, seed, false, &mut r),
                FourfoldStatus::Ok
            );
            let (mut v, mut e) = (0.0, 0.0);
            fourfold_bell_run_value(r, &mut v, &mut e);
            let mut counts = [0u64; 16];
            assert_eq!(
                fourfold_bell_run_counts(r, 3, counts.as_mut_ptr()),
                FourfoldStatus::Ok
            );
            assert_eq!(counts.iter().sum::<u64>(), 400);
            assert_eq!(
                fourfold_bell_run_counts(r, 16, counts.as_mut_ptr()),
                FourfoldStatus::InvalidArgument
            );
            fourfold_bell_run_free(r);
            (v, e, counts)
        };
        assert_eq!(run(1), run(1));
        fourfold_state_free(s);
    }
}

#[test]
fn dead_detector_cannot_be_corrected() {
    unsafe {
        let s = fourfold_state_canonical();
        let eff = [1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let mut r = ptr::null_mut();
        let status = fourfold_bell_run(s, 1.0, eff.as_ptr(), ptr::null(), 100, 1, true, &mut r);
        assert_eq!(status, FourfoldStatus::InsufficientData);
        assert!(r.is_null());
        fourfold_state_free(s);
    }
}

#[test]
fn protocol_round_trip() {
    unsafe {
        let s = fourfold_state_canonical();
        let mut config = FourfoldQkdConfig {
            n_rounds: 20_000,
            mode: FourfoldMode::FourParty,
            key_fraction: 0.5,
            visibility: 1.0,
            seed: 4,
            eve_arm: -1,
            eve_hv: false,
            eve_phase: 0.0,
            three_party_diagonal: false,
        };
        let mut t = ptr::null_mut();
        assert_eq!(fourfold_qkd_run(s, &config, &mut t), FourfoldStatus::Ok);
        assert_eq!(fourfold_transcript_len(t), 20_000);
        let mut rep = FourfoldSecurityReport::default();
        assert_eq!(
            fourfold_security_check(t, 3.0, &mut rep),
            FourfoldStatus::Ok
        );
        assert!(rep.violation);
        let (mut bits, mut qber) = (0u64, 1.0);
        assert_eq!(
            fourfold_pair_key(t, 2, 3, &mut bits, &mut qber),
            FourfoldStatus::Ok
        );
        assert!(bits > 0);
        assert_eq!(qber, 0.0);
        assert_eq!(
            fourfold_pair_key(t, 2, 2, &mut bits, &mut qber),
            FourfoldStatus::InvalidArgument
        );
        fourfold_transcript_free(t);

        // Eve measuring arm a in H/V destroys the violation
        config.eve_arm = 0;
        config.eve_hv = true;
        assert_eq!(fourfold_qkd_run(s, &config, &mut t), FourfoldStatus::Ok);
        assert_eq!(
            fourfold_security_check(t, 3.0, &mut rep),
            FourfoldStatus::Ok
        );
        assert!(!rep.violation);
        fourfold_transcript_free(t);

        config.eve_arm = 7;
        assert_eq!(
            fourfold_qkd_run(s, &config, &mut t),
            FourfoldStatus::InvalidArgument
        );
        fourfold_state_free(s);
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        let mut v = 0.0;
        assert_eq!(
            fourfold_bell_exact(ptr::null(), 1.0, ptr::null(), &mut v),
            FourfoldStatus::NullPointer
        );
        assert!(last_error().contains("state"));
        assert_eq!(
            fourfold_state_oracle(ptr::null_mut(), ptr::null_mut()),
            FourfoldStatus::NullPointer
        );
        assert_eq!(fourfold_transcript_len(ptr::null()), 0);
        fourfold_state_free(ptr::null_mut());
        // unnormalized input
        let (re, im) = ([1.0; 16], [0.0; 16]);
        let mut out = ptr::null_mut();
        assert_eq!(
            fourfold_state_from_amplitudes(re.as_ptr(), im.as_ptr(), &mut out),
            FourfoldStatus::InvalidState
        );
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/fourfold.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "fourfold_state_canonical",
        "fourfold_bell_run",
        "fourfold_qkd_run",
        "fourfold_last_error",
        "FOURFOLD_STATUS_INSUFFICIENT_DATA",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"fourfold.h\"\n\
         int main(void) {\n\
           FourfoldState *s = fourfold_state_canonical();\n\
           double v;\n\
           FourfoldStatus st = fourfold_bell_exact(s, 1.0, 0, &v);\n\
           fourfold_state_free(s);\n\
           return st == FOURFOLD_STATUS_OK ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
        .expect("a C compiler is required for this test");
    assert!(status.success());
}
