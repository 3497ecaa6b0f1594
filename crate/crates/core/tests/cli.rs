use std::fs;
use std::path::Path;
use std::process::Command;

use fourfold::bell::paper_optimal_settings;
use fourfold::io::{
    read_etable_csv, read_frames_csv, read_settings_csv, read_transcript_csv, RunManifest,
};
use fourfold::qkd::{hex_to_bits, SecurityReport};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fourfold"))
}

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut full = vec!["fourfold"];
    full.extend_from_slice(args);
    let code = fourfold::cli::run(full, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn exact_bell_prints_optimum() {
    let (code, out) = run(&["bell", "--exact", "--settings", "paper"]);
    assert_eq!(code, 0);
    assert!(out.lines().any(|l| l == "S = 1.886"), "{out}");
    assert!(out.contains("critical visibility = 0.530"));
}

#[test]
fn oracle_check_prints_unit_overlap() {
    let (code, out) = run(&["state", "--check-oracle"]);
    assert_eq!(code, 0);
    assert!(out.contains("overlap magnitude 1.000000000000"), "{out}");
    assert!(out.contains("postselection probability 0.250000000000"));
}

#[test]
fn hv_counts_table() {
    let (code, out) = run(&["counts", "--basis", "HV"]);
    assert_eq!(code, 0);
    let third = out.matches("0.333333333333").count();
    let twelfth = out.matches("0.083333333333").count();
    assert_eq!((third, twelfth), (2, 4), "{out}");
}

#[test]
fn simulated_bell_artifacts_are_byte_identical_and_reparse() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let (code, _) = run(&[
            "bell",
            "--seed",
            "11",
            "--events",
            "300",
            "--visibility",
            "0.793",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    assert_eq!(read_dir_sorted(d1.path()), read_dir_sorted(d2.path()));

    let frames = read_frames_csv(fs::File::open(d1.path().join("frames.csv")).unwrap()).unwrap();
    assert_eq!(frames.len(), 16);
    assert!(frames.iter().all(|(_, c)| c.iter().sum::<u64>() == 300));
    let table = read_etable_csv(fs::File::open(d1.path().join("etable.csv")).unwrap()).unwrap();
    assert!(table.errors.is_some());
    let manifest: RunManifest =
        serde_json::from_slice(&fs::read(d1.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.seed, 11);
    assert_eq!(manifest.settings, paper_optimal_settings());
}

#[test]
fn recorded_frames_reanalyze_to_the_same_value() {
    let d = tempfile::tempdir().unwrap();
    let (_, sim) = run(&["bell", "--seed", "5", "--out", d.path().to_str().unwrap()]);
    let frames = d.path().join("frames.csv");
    let (code, again) = run(&["bell", "--frames", frames.to_str().unwrap()]);
    assert_eq!(code, 0);
    let s_line = |t: &str| {
        t.lines()
            .find(|l| l.starts_with("S = "))
            .unwrap()
            .to_string()
    };
    assert_eq!(s_line(&sim), s_line(&again));
}

#[test]
fn search_writes_settings_file() {
    let d = tempfile::tempdir().unwrap();
    let (code, out) = run(&[
        "bell",
        "--search",
        "--resolution",
        "pi/4",
        "--out",
        d.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("S = 1.886"));
    let s = read_settings_csv(fs::File::open(d.path().join("settings.csv")).unwrap()).unwrap();
    let settings_file = d.path().join("settings.csv");
    let (code, out) = run(&[
        "bell",
        "--exact",
        "--settings",
        settings_file.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{s:?}");
    assert!(out.contains("S = 1.886"));
}

#[test]
fn qkd_artifacts_reparse() {
    let d = tempfile::tempdir().unwrap();
    let (code, _) = run(&[
        "qkd",
        "--seed",
        "2",
        "--events",
        "20000",
        "--key-fraction",
        "0.5",
        "--out",
        d.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rounds =
        read_transcript_csv(fs::File::open(d.path().join("transcript.csv")).unwrap()).unwrap();
    assert_eq!(rounds.len(), 20000);
    let report: SecurityReport =
        serde_json::from_slice(&fs::read(d.path().join("report.json")).unwrap()).unwrap();
    assert!(report.violation);
    let keys: serde_json::Value =
        serde_json::from_slice(&fs::read(d.path().join("keys.json")).unwrap()).unwrap();
    let n = keys["keys"]["bits"]["a"].as_u64().unwrap() as usize;
    let ka = hex_to_bits(&fs::read_to_string(d.path().join("key_a.hex")).unwrap(), n).unwrap();
    let kap = hex_to_bits(
        &fs::read_to_string(d.path().join("key_a_prime.hex")).unwrap(),
        n,
    )
    .unwrap();
    assert_eq!(ka, kap);
}

#[test]
fn config_file_with_flag_override() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"command": "counts", "basis": "HV", "simulate": true, "seed": 1, "events": 100}"#,
    )
    .unwrap();
    let (code, a) = run(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(
        a.starts_with("100 fourfolds from 100 emissions, seed 1"),
        "{a}"
    );
    let (code, b) = run(&["counts", "--config", cfg.to_str().unwrap(), "--seed", "2"]);
    assert_eq!(code, 0);
    assert!(b.contains("seed 2"));
    let (code, _) = run(&["bell", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn json_format() {
    let d = tempfile::tempdir().unwrap();
    let (code, _) = run(&[
        "bell",
        "--exact",
        "--format",
        "json",
        "--out",
        d.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let t: fourfold::bell::ETable =
        serde_json::from_slice(&fs::read(d.path().join("etable.json")).unwrap()).unwrap();
    assert!((fourfold::bell::bell_functional(&t) - 4.0 * 2f64.sqrt() / 3.0).abs() < 1e-12);
}

#[test]
fn exit_codes_from_binary() {
    let ok = bin().args(["bell", "--exact"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("S = 1.886"));

    let no_seed = bin()
        .args(["qkd", "--key-fraction", "0.5"])
        .output()
        .unwrap();
    assert_eq!(no_seed.status.code(), Some(2));

    let bad_flag = bin().args(["bell", "--no-such-flag"]).output().unwrap();
    assert_eq!(bad_flag.status.code(), Some(2));

    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.json");
    fs::write(&cfg, "{\n  \"seed\": 1,\n  \"evnts\": 5\n}").unwrap();
    let bad_cfg = bin()
        .args(["bell", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(bad_cfg.status.code(), Some(2));
    let err = String::from_utf8_lossy(&bad_cfg.stderr);
    assert!(err.contains("evnts") && err.contains("line 3"), "{err}");

    let sparse = bin()
        .args([
            "qkd",
            "--seed",
            "1",
            "--key-fraction",
            "0.5",
            "--events",
            "10",
        ])
        .output()
        .unwrap();
    assert_eq!(sparse.status.code(), Some(3));
}

#[test]
fn dead_detector_correction_is_insufficient_data() {
    let d = tempfile::tempdir().unwrap();
    let bank = d.path().join("bank.json");
    fs::write(
        &bank,
        r#"{"efficiencies": [[1, 0], [1, 1], [1, 1], [1, 1]]}"#,
    )
    .unwrap();
    let (raw, _) = run(&["bell", "--seed", "1", "--bank", bank.to_str().unwrap()]);
    assert_eq!(raw, 0);
    let (corr, _) = run(&[
        "bell",
        "--seed",
        "1",
        "--corrected",
        "--bank",
        bank.to_str().unwrap(),
    ]);
    assert_eq!(corr, 3);
}
