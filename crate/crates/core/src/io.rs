//! Artifact formats.
//!
//! Floats are written with 12 significant digits in scientific notation
//! (`1.88561808316e0`), which keeps artifacts byte-stable and parses back with
//! `str::parse::<f64>`. Computational-basis settings are written as `HV`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::angle::parse_angle;
use crate::bell::{BellSettings, ETable};
use crate::error::{Error, Result};
use crate::experiment::{CoincidenceFrame, DetectorBank};
use crate::qkd::{Announcement, RoundKind, RoundRecord};
use crate::qstate::{Arm, MeasurementSetting, OutcomeQuad};

pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // avoid "-0e0"
        return "0.00000000000e0".into();
    }
    format!("{x:.11e}")
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad number `{s}`")))
}

pub fn fmt_setting(s: MeasurementSetting) -> String {
    match s {
        MeasurementSetting::Equatorial(phi) => fmt_f64(phi),
        MeasurementSetting::Computational => "HV".into(),
    }
}

pub fn parse_setting(s: &str) -> Result<MeasurementSetting> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("hv") {
        Ok(MeasurementSetting::Computational)
    } else {
        Ok(MeasurementSetting::equatorial(parse_angle(t)?))
    }
}

const ARM_COLUMNS: [&str; 4] = ["a", "a'", "b", "b'"];

// ---------------------------------------------------------------- ETable CSV

#[derive(Debug, Serialize, Deserialize)]
struct ETableRow {
    k: u8,
    l: u8,
    m: u8,
    n: u8,
    #[serde(rename = "E")]
    e: String,
    sigma: String,
}

pub fn write_etable_csv<W: Write>(w: W, table: &ETable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for i in 0..16 {
        out.serialize(ETableRow {
            k: (i >> 3) as u8 + 1,
            l: ((i >> 2) & 1) as u8 + 1,
            m: ((i >> 1) & 1) as u8 + 1,
            n: (i & 1) as u8 + 1,
            e: fmt_f64(table.values[i]),
            sigma: table.errors.map(|e| fmt_f64(e[i])).unwrap_or_default(),
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_etable_csv<R: Read>(r: R) -> Result<ETable> {
    let mut values = [f64::NAN; 16];
    let mut errors = [f64::NAN; 16];
    let mut has_errors = true;
    for row in csv::Reader::from_reader(r).deserialize::<ETableRow>() {
        let row = row?;
        if [row.k, row.l, row.m, row.n]
            .iter()
            .any(|x| !(1..=2).contains(x))
        {
            return Err(Error::Parse("table indices must be 1 or 2".into()));
        }
        let i = usize::from(row.k - 1) << 3
            | usize::from(row.l - 1) << 2
            | usize::from(row.m - 1) << 1
            | usize::from(row.n - 1);
        values[i] = parse_f64(&row.e)?;
        if row.sigma.trim().is_empty() {
            has_errors = false;
        } else {
            errors[i] = parse_f64(&row.sigma)?;
        }
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Parse("table must list all 16 entries".into()));
    }
    if has_errors {
        ETable::with_errors(values, errors)
    } else {
        ETable::new(values)
    }
}

// -------------------------------------------------------------- settings CSV

#[derive(Debug, Serialize, Deserialize)]
struct SettingRow {
    arm: String,
    index: u8,
    phi_radians: String,
}

pub fn write_settings_csv<W: Write>(w: W, settings: &BellSettings) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for arm in Arm::ALL {
        for k in 0..2 {
            out.serialize(SettingRow {
                arm: arm.label().into(),
                index: k as u8 + 1,
                phi_radians: fmt_f64(settings.phase(arm, k)),
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads `arm,index,phi_radians`; angles may also be written as `pi/4`.
pub fn read_settings_csv<R: Read>(r: R) -> Result<BellSettings> {
    let mut phases = [[f64::NAN; 2]; 4];
    for row in csv::Reader::from_reader(r).deserialize::<SettingRow>() {
        let row = row?;
        let arm = Arm::parse(&row.arm)?;
        if !(1..=2).contains(&row.index) {
            return Err(Error::Parse(format!(
                "setting index {} is not 1 or 2",
                row.index
            )));
        }
        phases[arm.index()][usize::from(row.index - 1)] = parse_angle(&row.phi_radians)?;
    }
    if phases.iter().flatten().any(|p| p.is_nan()) {
        return Err(Error::Parse("settings file must define 8 phases".into()));
    }
    Ok(BellSettings::new(phases))
}

// ---------------------------------------------------------------- frame CSV

#[derive(Debug, Serialize, Deserialize)]
struct FrameRow {
    setting_a: String,
    #[serde(rename = "setting_a'")]
    setting_ap: String,
    setting_b: String,
    #[serde(rename = "setting_b'")]
    setting_bp: String,
    outcome: String,
    count: u64,
}

/// One row per outcome, sixteen rows per frame.
pub fn write_frames_csv<W: Write>(w: W, frames: &[CoincidenceFrame]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for f in frames {
        let s = f.settings.map(fmt_setting);
        for (i, count) in f.counts.iter().enumerate() {
            out.serialize(FrameRow {
                setting_a: s[0].clone(),
                setting_ap: s[1].clone(),
                setting_b: s[2].clone(),
                setting_bp: s[3].clone(),
                outcome: OutcomeQuad::from_index(&f.settings, i).to_string(),
                count: *count,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Settings and counts of each frame in file order. Detector metadata is not
/// part of the CSV; it lives in the run manifest.
pub fn read_frames_csv<R: Read>(r: R) -> Result<Vec<([MeasurementSetting; 4], [u64; 16])>> {
    let mut frames: Vec<([MeasurementSetting; 4], [u64; 16])> = Vec::new();
    let mut key: Option<[String; 4]> = None;
    let mut seen = 0u16;
    for row in csv::Reader::from_reader(r).deserialize::<FrameRow>() {
        let row = row?;
        let this = [row.setting_a, row.setting_ap, row.setting_b, row.setting_bp];
        let quad = OutcomeQuad::parse(&row.outcome)?;
        // a repeated outcome under the same settings starts the next frame
        if key.as_ref() != Some(&this) || seen & (1 << quad.index()) != 0 {
            seen = 0;
            let settings = [
                parse_setting(&this[0])?,
                parse_setting(&this[1])?,
                parse_setting(&this[2])?,
                parse_setting(&this[3])?,
            ];
            frames.push((settings, [0; 16]));
            key = Some(this);
        }
        seen |= 1 << quad.index();
        let (settings, counts) = frames.last_mut().expect("pushed above");
        if quad
            .0
            .iter()
            .zip(settings.iter())
            .any(|(o, s)| !o.matches(*s))
        {
            return Err(Error::Parse(format!(
                "outcome `{}` does not match its settings",
                row.outcome
            )));
        }
        counts[quad.index()] += row.count;
    }
    Ok(frames)
}

// -------------------------------------------------------------- run manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub seed: u64,
    pub visibility: f64,
    pub bank: DetectorBank,
    pub settings: BellSettings,
    pub events: u64,
    pub corrected: bool,
}

// ----------------------------------------------------------- transcript CSV

#[derive(Debug, Serialize, Deserialize)]
struct TranscriptRow {
    round: u64,
    kind: RoundKind,
    setting_a: String,
    #[serde(rename = "setting_a'")]
    setting_ap: String,
    setting_b: String,
    #[serde(rename = "setting_b'")]
    setting_bp: String,
    l_a: i8,
    #[serde(rename = "l_a'")]
    l_ap: i8,
    l_b: i8,
    #[serde(rename = "l_b'")]
    l_bp: i8,
    announced_a: String,
    #[serde(rename = "announced_a'")]
    announced_ap: String,
    announced_b: String,
    #[serde(rename = "announced_b'")]
    announced_bp: String,
}

/// Announcement codes: `so` setting and outcome, `s` setting only, `-` nothing.
pub fn write_transcript_csv<W: Write>(w: W, rounds: &[RoundRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rounds {
        let s = r.settings.map(fmt_setting);
        let a = r.announced.map(|a| a.code().to_string());
        let [sa, sap, sb, sbp] = s;
        let [aa, aap, ab, abp] = a;
        out.serialize(TranscriptRow {
            round: r.round,
            kind: r.kind,
            setting_a: sa,
            setting_ap: sap,
            setting_b: sb,
            setting_bp: sbp,
            l_a: r.outcomes[0],
            l_ap: r.outcomes[1],
            l_b: r.outcomes[2],
            l_bp: r.outcomes[3],
            announced_a: aa,
            announced_ap: aap,
            announced_b: ab,
            announced_bp: abp,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_transcript_csv<R: Read>(r: R) -> Result<Vec<RoundRecord>> {
    csv::Reader::from_reader(r)
        .deserialize::<TranscriptRow>()
        .map(|row| {
            let row = row?;
            let outcomes = [row.l_a, row.l_ap, row.l_b, row.l_bp];
            if outcomes.iter().any(|l| l.abs() != 1) {
                return Err(Error::Parse(format!(
                    "round {}: outcomes must be ±1",
                    row.round
                )));
            }
            Ok(RoundRecord {
                round: row.round,
                kind: row.kind,
                settings: [
                    parse_setting(&row.setting_a)?,
                    parse_setting(&row.setting_ap)?,
                    parse_setting(&row.setting_b)?,
                    parse_setting(&row.setting_bp)?,
                ],
                outcomes,
                announced: [
                    Announcement::parse(&row.announced_a)?,
                    Announcement::parse(&row.announced_ap)?,
                    Announcement::parse(&row.announced_b)?,
                    Announcement::parse(&row.announced_bp)?,
                ],
            })
        })
        .collect()
}

pub fn arm_column(arm: Arm) -> &'static str {
    ARM_COLUMNS[arm.index()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::paper_optimal_settings;
    use crate::experiment::{run_bell, NoiseModel};
    use crate::qstate::canonical_psi4;
    use proptest::prelude::*;

    #[test]
    fn float_format() {
        assert_eq!(fmt_f64(4.0 * 2f64.sqrt() / 3.0), "1.88561808316e0");
        assert_eq!(fmt_f64(0.0), "0.00000000000e0");
        assert_eq!(fmt_f64(-0.25), "-2.50000000000e-1");
    }

    #[test]
    fn settings_csv_round_trip() {
        let s = paper_optimal_settings();
        let mut buf = Vec::new();
        write_settings_csv(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("arm,index,phi_radians\n"));
        let back = read_settings_csv(buf.as_slice()).unwrap();
        for (x, y) in back.flat().iter().zip(s.flat()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn settings_csv_accepts_fractions() {
        let text = "arm,index,phi_radians\na,1,0\na,2,pi/2\na',1,pi/4\na',2,-pi/4\nb,1,pi/4\nb,2,-pi/4\nb',1,pi/4\nb',2,-pi/4\n";
        assert_eq!(
            read_settings_csv(text.as_bytes()).unwrap(),
            paper_optimal_settings()
        );
        let short = "arm,index,phi_radians\na,1,0\n";
        assert!(read_settings_csv(short.as_bytes()).is_err());
    }

    #[test]
    fn frames_and_table_round_trip() {
        let r = run_bell(
            &canonical_psi4(),
            &NoiseModel::new(0.9).unwrap(),
            &DetectorBank::ideal(),
            &paper_optimal_settings(),
            300,
            1,
            false,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_frames_csv(&mut buf, &r.frames).unwrap();
        let back = read_frames_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 16);
        let mut twice = Vec::new();
        write_frames_csv(&mut twice, &[r.frames[0].clone(), r.frames[0].clone()]).unwrap();
        assert_eq!(read_frames_csv(twice.as_slice()).unwrap().len(), 2);
        for (f, (settings, counts)) in r.frames.iter().zip(&back) {
            assert_eq!(&f.counts, counts);
            for (x, y) in f.settings.iter().zip(settings) {
                assert!((x.phase().unwrap() - y.phase().unwrap()).abs() < 1e-10);
            }
        }

        let mut buf = Vec::new();
        write_etable_csv(&mut buf, &r.table).unwrap();
        let t = read_etable_csv(buf.as_slice()).unwrap();
        for i in 0..16 {
            assert!(
                (t.values[i] - r.table.values[i]).abs()
                    <= 1e-11 * r.table.values[i].abs().max(1e-300)
            );
        }
        assert!(t.errors.is_some());
    }

    #[test]
    fn manifest_rejects_unknown_fields() {
        let m = RunManifest {
            seed: 1,
            visibility: 0.793,
            bank: DetectorBank::ideal(),
            settings: paper_optimal_settings(),
            events: 600,
            corrected: false,
        };
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<RunManifest>(&json).unwrap(), m);
        let extra = json.replacen('{', "{\"bogus\":1,", 1);
        assert!(serde_json::from_str::<RunManifest>(&extra).is_err());
    }

    proptest! {
        #[test]
        fn formatted_floats_reparse(x in -1e6f64..1e6) {
            let y = parse_f64(&fmt_f64(x)).unwrap();
            prop_assert!((x - y).abs() <= 1e-11 * x.abs().max(1e-300));
            // formatting is idempotent after one round trip
            prop_assert_eq!(fmt_f64(y), fmt_f64(x));
        }

        #[test]
        fn transcript_rows_round_trip(
            rows in proptest::collection::vec((0u64..1000, any::<bool>(), any::<[bool; 4]>(), 0.0f64..6.0), 1..20)
        ) {
            let rounds: Vec<RoundRecord> = rows.iter().map(|(round, key, ls, phi)| RoundRecord {
                round: *round,
                kind: if *key { RoundKind::Key } else { RoundKind::Bell },
                settings: [
                    MeasurementSetting::Equatorial(*phi),
                    MeasurementSetting::Computational,
                    MeasurementSetting::Equatorial(0.0),
                    MeasurementSetting::Equatorial(*phi / 2.0),
                ],
                outcomes: ls.map(|b| if b { 1 } else { -1 }),
                announced: if *key { [Announcement::SETTING; 4] } else { [Announcement::ALL; 4] },
            }).collect();
            let mut buf = Vec::new();
            write_transcript_csv(&mut buf, &rounds).unwrap();
            let back = read_transcript_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), rounds.len());
            for (x, y) in back.iter().zip(&rounds) {
                prop_assert_eq!(x.round, y.round);
                prop_assert_eq!(x.outcomes, y.outcomes);
                prop_assert_eq!(x.announced, y.announced);
                prop_assert_eq!(fmt_setting(x.settings[0]), fmt_setting(y.settings[0]));
                prop_assert_eq!(x.settings[1], MeasurementSetting::Computational);
            }
        }
    }
}
