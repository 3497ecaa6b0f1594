//! The `fourfold` command line. Summaries go to stdout, artifacts to the
//! directory given by `--out`.

mod config;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

pub use config::{parse_eve, BankSource, Format, Model, RunConfig};

use crate::angle::parse_angle_list;
use crate::bell::{critical_visibility_for, settings_search, BellSettings, ETable};
use crate::correlation::{
    correlation_closed_form, correlation_exact, correlation_ghz, SettingQuad, StateModel,
};
use crate::error::Error;
use crate::experiment::{
    analyze_frames, hours_for_events, run_bell, run_scan, sample_frame, CoincidenceFrame,
    DetectorBank, NoiseModel,
};
use crate::fit::fit_scan;
use crate::io::{
    fmt_f64, read_frames_csv, write_etable_csv, write_frames_csv, write_settings_csv,
    write_transcript_csv, RunManifest,
};
use crate::qkd::{
    bits_to_hex, distill_three_party, exact_bell_value, extract_pair_keys, run_protocol,
    security_check, EveModel, KeyMaterial, ProtocolConfig, ProtocolMode, DEFAULT_K_SIGMA,
};
use crate::qstate::{
    basis_pattern, decompose_ghz_epr, outcome_distribution, overlap, Arm, OutcomeQuad,
};
use crate::spdc::{oracle_state, SplitterConvention};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INSUFFICIENT_DATA: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Run(e) => match e {
                Error::InvalidArgument(_) | Error::Parse(_) | Error::Json(_) | Error::Csv(_) => {
                    EXIT_CONFIG
                }
                Error::InsufficientData { .. }
                | Error::EmptyPostselection
                | Error::EmptyFrame
                | Error::UnderdeterminedFit(_)
                | Error::CannotCorrect(_)
                | Error::EmptyKey(_) => EXIT_INSUFFICIENT_DATA,
                _ => EXIT_FAILURE,
            },
            CliError::Io(_) => EXIT_FAILURE,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "fourfold",
    version,
    about = "Four-photon entanglement: exact predictions, simulated runs and key distribution"
)]
pub struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    /// May be omitted when the config file names the command.
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON run configuration; flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Emissions per frame, per scan point, or protocol rounds
    #[arg(long, global = true)]
    events: Option<u64>,
    #[arg(long, global = true)]
    visibility: Option<f64>,
    /// Detector bank JSON: {"efficiencies": [[η+, η−] per arm a, a', b, b']}
    #[arg(long, global = true)]
    bank: Option<PathBuf>,
    /// `paper` or a settings CSV (arm,index,phi_radians)
    #[arg(long, global = true)]
    settings: Option<String>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Artifact directory (created if missing)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// four_party, secret_sharing or three_party
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Intercept-resend attack, `arm:basis` such as `a:HV` or `b:pi/4`
    #[arg(long, global = true)]
    eve: Option<String>,
    #[arg(long, global = true)]
    key_fraction: Option<f64>,
    #[arg(long, global = true, value_enum)]
    model: Option<Model>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Amplitudes, GHZ/EPR decomposition and bosonic oracle check
    State {
        #[arg(long)]
        check_oracle: bool,
    },
    /// Exact correlations or a simulated phase scan with fit
    Correlate {
        /// Four phases `φa,φa',φb,φb'`
        #[arg(long, allow_hyphen_values = true)]
        phases: Option<String>,
        #[arg(long)]
        scan: bool,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Bell functional: exact, grid search, simulated or from recorded frames
    Bell {
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        search: bool,
        /// Grid step of the search, e.g. `pi/4`
        #[arg(long)]
        resolution: Option<String>,
        /// Correct rates for detector efficiencies
        #[arg(long)]
        corrected: bool,
        /// Analyze a frames CSV instead of simulating
        #[arg(long)]
        frames: Option<PathBuf>,
    },
    /// Coincidence distribution with all analyzers in one basis
    Counts {
        /// `HV`, `pm45`, or an equatorial phase
        #[arg(long, allow_hyphen_values = true)]
        basis: Option<String>,
        #[arg(long)]
        simulate: bool,
    },
    /// Protocol run, security check and key extraction
    Qkd {
        /// Arms that reveal their key-round results (pair modes)
        #[arg(long)]
        reveal: Option<String>,
        #[arg(long, value_enum)]
        three_party_basis: Option<ThreePartyBasisArg>,
        #[arg(long)]
        k_sigma: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ThreePartyBasisArg {
    Computational,
    Diagonal,
}

fn some_if(b: bool) -> Option<bool> {
    b.then_some(true)
}

impl Cli {
    /// Flags as a config layer; `command` is set when a subcommand was given.
    fn flags(self) -> (Option<PathBuf>, RunConfig) {
        let g = self.global;
        let mut cfg = RunConfig {
            seed: g.seed,
            events: g.events,
            visibility: g.visibility,
            bank: g.bank.map(BankSource::Path),
            settings: g.settings,
            format: g.format,
            out: g.out,
            mode: g.mode,
            eve: g.eve,
            key_fraction: g.key_fraction,
            model: g.model,
            ..Default::default()
        };
        match self.command {
            None => {}
            Some(Command::State { check_oracle }) => {
                cfg.command = Some("state".into());
                cfg.check_oracle = some_if(check_oracle);
            }
            Some(Command::Correlate {
                phases,
                scan,
                steps,
            }) => {
                cfg.command = Some("correlate".into());
                cfg.phases = phases;
                cfg.scan = some_if(scan);
                cfg.steps = steps;
            }
            Some(Command::Bell {
                exact,
                search,
                resolution,
                corrected,
                frames,
            }) => {
                cfg.command = Some("bell".into());
                cfg.exact = some_if(exact);
                cfg.search = some_if(search);
                cfg.resolution = resolution;
                cfg.corrected = some_if(corrected);
                cfg.frames = frames;
            }
            Some(Command::Counts { basis, simulate }) => {
                cfg.command = Some("counts".into());
                cfg.basis = basis;
                cfg.simulate = some_if(simulate);
            }
            Some(Command::Qkd {
                reveal,
                three_party_basis,
                k_sigma,
            }) => {
                cfg.command = Some("qkd".into());
                cfg.reveal = reveal;
                cfg.three_party_basis = three_party_basis.map(|b| match b {
                    ThreePartyBasisArg::Computational => crate::qkd::ThreePartyBasis::Computational,
                    ThreePartyBasisArg::Diagonal => crate::qkd::ThreePartyBasis::Diagonal,
                });
                cfg.k_sigma = k_sigma;
            }
        }
        (g.config, cfg)
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            if e.use_stderr() {
                eprint!("{e}");
            } else {
                let _ = write!(stdout, "{e}");
            }
            return code;
        }
    };
    match resolve(cli).and_then(|cfg| execute(&cfg, stdout)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("fourfold: {e}");
            e.exit_code()
        }
    }
}

fn resolve(cli: Cli) -> CliResult<RunConfig> {
    let (config_path, flags) = cli.flags();
    let cfg = match config_path {
        Some(p) => {
            let file = RunConfig::load(&p)?;
            if let (Some(a), Some(b)) = (&file.command, &flags.command) {
                if a != b {
                    return Err(CliError::Config(format!(
                        "config file is for `{a}` but `{b}` was requested"
                    )));
                }
            }
            file.overlay(flags)
        }
        None => flags,
    };
    Ok(cfg)
}

pub fn execute(cfg: &RunConfig, stdout: &mut dyn Write) -> CliResult<()> {
    let out = Artifacts::new(cfg.out.clone())?;
    match cfg.command.as_deref() {
        Some("state") => cmd_state(cfg, &out, stdout),
        Some("correlate") => cmd_correlate(cfg, &out, stdout),
        Some("bell") => cmd_bell(cfg, &out, stdout),
        Some("counts") => cmd_counts(cfg, &out, stdout),
        Some("qkd") => cmd_qkd(cfg, &out, stdout),
        Some(other) => Err(CliError::Config(format!("unknown command `{other}`"))),
        None => Err(CliError::Config(
            "no command given (state, correlate, bell, counts, qkd)".into(),
        )),
    }
}

struct Artifacts {
    dir: Option<PathBuf>,
}

impl Artifacts {
    fn new(dir: Option<PathBuf>) -> CliResult<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Artifacts { dir })
    }

    fn write(
        &self,
        name: &str,
        f: impl FnOnce(&mut io::BufWriter<fs::File>) -> CliResult<()>,
    ) -> CliResult<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let mut w = io::BufWriter::new(fs::File::create(dir.join(name))?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn json(&self, name: &str, value: &impl serde::Serialize) -> CliResult<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(Error::from)?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn etable(&self, format: Format, table: &ETable) -> CliResult<()> {
        match format {
            Format::Csv => self.write("etable.csv", |w| Ok(write_etable_csv(w, table)?)),
            Format::Json => self.json("etable.json", table),
        }
    }

    /// Rows of already formatted cells.
    fn table(
        &self,
        format: Format,
        stem: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> CliResult<()> {
        match format {
            Format::Csv => self.write(&format!("{stem}.csv"), |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(header).map_err(Error::from)?;
                for r in rows {
                    c.write_record(r).map_err(Error::from)?;
                }
                c.flush()?;
                Ok(())
            }),
            Format::Json => {
                let objects: Vec<serde_json::Map<String, serde_json::Value>> = rows
                    .iter()
                    .map(|r| {
                        header
                            .iter()
                            .zip(r)
                            .map(|(h, v)| ((*h).to_string(), json_cell(v)))
                            .collect()
                    })
                    .collect();
                self.json(&format!("{stem}.json"), &objects)
            }
        }
    }
}

fn json_cell(v: &str) -> serde_json::Value {
    match v.parse::<f64>() {
        Ok(x) if v.contains('e') || v.contains('.') => json!(x),
        _ => match v.parse::<u64>() {
            Ok(n) => json!(n),
            Err(_) => json!(v),
        },
    }
}

fn noise(cfg: &RunConfig) -> CliResult<NoiseModel> {
    Ok(NoiseModel::new(cfg.visibility()?)?)
}

fn model(cfg: &RunConfig) -> Model {
    cfg.model.unwrap_or_default()
}

fn fmt_complex(z: num_complex::Complex64) -> String {
    format!("{} {}i", fmt_f64(z.re), fmt_f64(z.im))
}

fn pattern_label(i: usize) -> String {
    basis_pattern(i)
        .iter()
        .map(|p| if p.index() == 0 { 'H' } else { 'V' })
        .collect()
}

fn cmd_state(cfg: &RunConfig, out: &Artifacts, stdout: &mut dyn Write) -> CliResult<()> {
    let state = model(cfg).state();
    writeln!(stdout, "amplitudes (a a' b b'):")?;
    for (i, z) in state.amplitudes().iter().enumerate() {
        if z.norm() > 1e-15 {
            writeln!(stdout, "  {}  {}", pattern_label(i), fmt_complex(*z))?;
        }
    }
    let d = decompose_ghz_epr(&state)?;
    writeln!(stdout, "GHZ coefficient {}", fmt_complex(d.ghz_coef))?;
    writeln!(stdout, "EPR x EPR coefficient {}", fmt_complex(d.epr_coef))?;
    writeln!(stdout, "residual norm {}", fmt_f64(d.residual_norm))?;

    let mut oracle = serde_json::Value::Null;
    if cfg.flag(cfg.check_oracle) {
        let (o, p) = oracle_state(&SplitterConvention::default())?;
        let ov = overlap(&o, &state).norm();
        writeln!(stdout, "overlap magnitude {ov:.12}")?;
        writeln!(stdout, "postselection probability {p:.12}")?;
        oracle = json!({"overlap_magnitude": ov, "postselection_probability": p});
    }

    match cfg.format() {
        Format::Csv => {
            let rows: Vec<Vec<String>> = state
                .amplitudes()
                .iter()
                .enumerate()
                .map(|(i, z)| vec![pattern_label(i), fmt_f64(z.re), fmt_f64(z.im)])
                .collect();
            out.table(Format::Csv, "state", &["basis", "re", "im"], &rows)?;
        }
        Format::Json => out.json(
            "state.json",
            &json!({
                "amplitudes": state,
                "decomposition": {
                    "ghz": [d.ghz_coef.re, d.ghz_coef.im],
                    "epr_epr": [d.epr_coef.re, d.epr_coef.im],
                    "residual_norm": d.residual_norm,
                },
                "oracle": oracle,
            }),
        )?,
    }
    Ok(())
}

fn cmd_correlate(cfg: &RunConfig, out: &Artifacts, stdout: &mut dyn Write) -> CliResult<()> {
    let state = model(cfg).state();
    let v = cfg.visibility()?;
    let mut did_something = false;

    if let Some(p) = &cfg.phases {
        did_something = true;
        let phases = parse_angle_list(p).map_err(|e| CliError::Config(e.to_string()))?;
        let phases: [f64; 4] = phases
            .try_into()
            .map_err(|_| CliError::Config("--phases needs four angles".into()))?;
        let q = SettingQuad::new(phases);
        let exact = correlation_exact(&state, &q, v)?;
        let closed = v * match model(cfg) {
            Model::Psi4 => correlation_closed_form(&q),
            Model::Ghz => correlation_ghz(&q),
        };
        writeln!(stdout, "E = {exact:.12}")?;
        writeln!(stdout, "closed form = {closed:.12}")?;
        let mut row: Vec<String> = phases.iter().map(|x| fmt_f64(*x)).collect();
        row.extend([fmt_f64(v), fmt_f64(exact), fmt_f64(closed)]);
        out.table(
            cfg.format(),
            "correlation",
            &[
                "phi_a",
                "phi_a'",
                "phi_b",
                "phi_b'",
                "visibility",
                "E_exact",
                "E_closed_form",
            ],
            &[row],
        )?;
    }

    if cfg.flag(cfg.scan) {
        did_something = true;
        let seed = cfg.require_seed("correlate --scan")?;
        let steps = cfg.steps.unwrap_or(13);
        let events = cfg.events.unwrap_or(10_000);
        let data = run_scan(&state, &noise(cfg)?, &cfg.bank()?, steps, events, seed)?;
        let fit = fit_scan(&data.fit_points())?;
        writeln!(
            stdout,
            "scan: {steps} points, {events} emissions each, seed {seed}"
        )?;
        writeln!(
            stdout,
            "fitted visibility = {:.4} ± {:.4}",
            fit.visibility, fit.visibility_error
        )?;
        writeln!(
            stdout,
            "phase offset = {:.4} ± {:.4}",
            fit.phase_offset, fit.phase_error
        )?;
        writeln!(
            stdout,
            "offset = {:.4} ± {:.4}",
            fit.offset, fit.offset_error
        )?;
        let rows: Vec<Vec<String>> = data
            .points
            .iter()
            .map(|(phi, e)| {
                vec![
                    fmt_f64(*phi),
                    fmt_f64(e.value),
                    fmt_f64(e.std_error),
                    e.n_events.to_string(),
                ]
            })
            .collect();
        out.table(
            cfg.format(),
            "scan",
            &["phi_a", "E", "sigma", "n_events"],
            &rows,
        )?;
        out.json("fit.json", &fit)?;
    }

    if !did_something {
        return Err(CliError::Config(
            "correlate needs --phases or --scan".into(),
        ));
    }
    Ok(())
}

fn settings_rows(settings: &BellSettings) -> Vec<String> {
    Arm::ALL
        .iter()
        .map(|arm| {
            format!(
                "{}: {:.6}, {:.6}",
                arm.label(),
                settings.phase(*arm, 0),
                settings.phase(*arm, 1)
            )
        })
        .collect()
}

fn cmd_bell(cfg: &RunConfig, out: &Artifacts, stdout: &mut dyn Write) -> CliResult<()> {
    let state = model(cfg).state();
    let v = cfg.visibility()?;
    let format = cfg.format();

    if cfg.flag(cfg.search) {
        let res = cfg.resolution()?;
        let r = settings_search(
            &StateModel {
                state,
                visibility: v,
            },
            res,
        )?;
        writeln!(stdout, "S = {:.3}", r.value)?;
        writeln!(stdout, "S (12 digits) = {}", fmt_f64(r.value))?;
        writeln!(stdout, "grid step {res:.6}, exhaustive: {}", r.exhaustive)?;
        for line in settings_rows(&r.settings) {
            writeln!(stdout, "  {line}")?;
        }
        out.write("settings.csv", |w| Ok(write_settings_csv(w, &r.settings)?))?;
        out.json(
            "bell.json",
            &json!({"s": r.value, "resolution": res, "exhaustive": r.exhaustive, "visibility": v}),
        )?;
        return Ok(());
    }

    let settings = cfg.settings()?;
    if cfg.flag(cfg.exact) {
        let table = ETable::from_model(
            &StateModel {
                state,
                visibility: v,
            },
            &settings,
        );
        let s = crate::bell::bell_functional(&table);
        let crit = critical_visibility_for(
            &StateModel {
                state,
                visibility: 1.0,
            },
            &settings,
        );
        writeln!(stdout, "S = {s:.3}")?;
        writeln!(stdout, "S (12 digits) = {}", fmt_f64(s))?;
        writeln!(stdout, "critical visibility = {:.3}", crit.value)?;
        out.etable(format, &table)?;
        out.write("settings.csv", |w| Ok(write_settings_csv(w, &settings)?))?;
        out.json(
            "bell.json",
            &json!({"s": s, "visibility": v, "critical_visibility": crit}),
        )?;
        return Ok(());
    }

    let corrected = cfg.flag(cfg.corrected);
    let bank = cfg.bank()?;
    let result = if let Some(path) = &cfg.frames {
        let file = fs::File::open(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let recorded = read_frames_csv(file)?;
        let frames = frames_from_records(recorded, &bank)?;
        let settings = settings_of_frames(&frames)?;
        writeln!(
            stdout,
            "analyzed {} frames from {}",
            frames.len(),
            path.display()
        )?;
        analyze_frames(&settings, frames, corrected)?
    } else {
        let seed = cfg.require_seed("bell (simulated)")?;
        let events = cfg.events.unwrap_or(600);
        let r = run_bell(
            &state,
            &noise(cfg)?,
            &bank,
            &settings,
            events,
            seed,
            corrected,
        )?;
        let fourfolds: u64 = r.frames.iter().map(CoincidenceFrame::total).sum();
        writeln!(
            stdout,
            "simulated 16 frames x {events} emissions, seed {seed}: {fourfolds} fourfolds (~{:.0} h at 150/h)",
            hours_for_events(fourfolds)
        )?;
        out.json(
            "manifest.json",
            &RunManifest {
                seed,
                visibility: v,
                bank,
                settings,
                events,
                corrected,
            },
        )?;
        r
    };
    writeln!(
        stdout,
        "S = {:.3} ± {:.3} ({})",
        result.s,
        result.s_error,
        if corrected {
            "efficiency corrected"
        } else {
            "raw"
        }
    )?;
    writeln!(stdout, "S - 3σ = {:.3}", result.s - 3.0 * result.s_error)?;
    writeln!(
        stdout,
        "violation at 3σ: {}",
        if result.s - 3.0 * result.s_error > 1.0 {
            "yes"
        } else {
            "no"
        }
    )?;
    out.write("frames.csv", |w| Ok(write_frames_csv(w, &result.frames)?))?;
    out.etable(format, &result.table)?;
    out.json(
        "bell.json",
        &json!({"s": result.s, "s_error": result.s_error, "corrected": corrected}),
    )?;
    Ok(())
}

fn frames_from_records(
    recorded: Vec<([crate::qstate::MeasurementSetting; 4], [u64; 16])>,
    bank: &DetectorBank,
) -> CliResult<Vec<CoincidenceFrame>> {
    Ok(recorded
        .into_iter()
        .enumerate()
        .map(|(i, (settings, counts))| CoincidenceFrame {
            settings,
            counts,
            emissions_attempted: counts.iter().sum(),
            bank: *bank,
            seed: 0,
            frame_index: i as u64,
        })
        .collect())
}

/// Recovers the two phases per arm from 16 frames in table order.
fn settings_of_frames(frames: &[CoincidenceFrame]) -> CliResult<BellSettings> {
    if frames.len() != 16 {
        return Err(CliError::Run(Error::InvalidArgument(format!(
            "a Bell run needs 16 frames, got {}",
            frames.len()
        ))));
    }
    let mut phases = [[f64::NAN; 2]; 4];
    for (i, f) in frames.iter().enumerate() {
        for (arm, pair) in phases.iter_mut().enumerate() {
            let k = (i >> (3 - arm)) & 1;
            let p = f.settings[arm].phase().ok_or_else(|| {
                CliError::Run(Error::InvalidArgument(
                    "Bell frames need equatorial settings".into(),
                ))
            })?;
            if pair[k].is_nan() {
                pair[k] = p;
            } else if (pair[k] - p).abs() > 1e-9 {
                return Err(CliError::Run(Error::InvalidArgument(format!(
                    "frame {i} does not follow the table order of settings"
                ))));
            }
        }
    }
    Ok(BellSettings::new(phases))
}

fn cmd_counts(cfg: &RunConfig, out: &Artifacts, stdout: &mut dyn Write) -> CliResult<()> {
    let state = model(cfg).state();
    let setting = cfg.basis()?;
    let settings = [setting; 4];
    let noise = noise(cfg)?;

    if cfg.flag(cfg.simulate) {
        let seed = cfg.require_seed("counts --simulate")?;
        let events = cfg.events.unwrap_or(600);
        let frame = sample_frame(&state, &settings, &noise, &cfg.bank()?, events, seed)?;
        writeln!(
            stdout,
            "{} fourfolds from {events} emissions, seed {seed}",
            frame.total()
        )?;
        for (i, c) in frame.counts.iter().enumerate() {
            writeln!(stdout, "  {}  {c}", OutcomeQuad::from_index(&settings, i))?;
        }
        out.write("frames.csv", |w| {
            Ok(write_frames_csv(w, std::slice::from_ref(&frame))?)
        })?;
        return Ok(());
    }

    let dist = noise.mix(&outcome_distribution(&state, &settings));
    let mut rows = Vec::with_capacity(16);
    for (i, p) in dist.iter().enumerate() {
        let quad = OutcomeQuad::from_index(&settings, i).to_string();
        writeln!(stdout, "  {quad}  {p:.12}")?;
        rows.push(vec![quad, fmt_f64(*p)]);
    }
    out.table(cfg.format(), "counts", &["outcome", "probability"], &rows)?;
    Ok(())
}

fn key_file_name(party: &str) -> String {
    let stem = party
        .to_ascii_lowercase()
        .replace('\'', "_prime")
        .replace('*', "_star");
    format!("key_{stem}.hex")
}

fn report_keys(material: &KeyMaterial, out: &Artifacts, stdout: &mut dyn Write) -> CliResult<()> {
    writeln!(stdout, "key rounds used: {}", material.rounds_used)?;
    for q in &material.qber {
        writeln!(
            stdout,
            "QBER {}-{} = {:.4}",
            q.parties[0], q.parties[1], q.qber
        )?;
    }
    for k in &material.keys {
        writeln!(stdout, "key {}: {} bits", k.party, k.bits.len())?;
        out.write(&key_file_name(&k.party), |w| {
            writeln!(w, "{}", bits_to_hex(&k.bits))?;
            Ok(())
        })?;
    }
    Ok(())
}

fn key_summary(material: &KeyMaterial) -> serde_json::Value {
    json!({
        "rounds_used": material.rounds_used,
        "qber": material.qber,
        "bits": material
            .keys
            .iter()
            .map(|k| (k.party.clone(), json!(k.bits.len())))
            .collect::<serde_json::Map<_, _>>(),
    })
}

fn cmd_qkd(cfg: &RunConfig, out: &Artifacts, stdout: &mut dyn Write) -> CliResult<()> {
    let seed = cfg.require_seed("qkd")?;
    let key_fraction = cfg
        .key_fraction
        .ok_or_else(|| CliError::Config("qkd needs --key-fraction".into()))?;
    let k_sigma = cfg.k_sigma.unwrap_or(DEFAULT_K_SIGMA);
    let mode = cfg.mode()?;
    let eve = cfg.eve()?;
    let state = model(cfg).state();
    let config = ProtocolConfig {
        n_rounds: cfg.events.unwrap_or(100_000),
        mode,
        key_fraction,
        noise: noise(cfg)?,
        eve,
        seed,
        three_party_basis: cfg.three_party_basis.unwrap_or_default(),
    };
    let transcript = run_protocol(&state, &config)?;
    writeln!(
        stdout,
        "{} rounds, mode {mode}, seed {seed}, eve {}",
        config.n_rounds,
        cfg.eve.as_deref().unwrap_or("none")
    )?;
    out.write("transcript.csv", |w| {
        Ok(write_transcript_csv(w, &transcript.rounds)?)
    })?;

    let report = security_check(&transcript, k_sigma)?;
    writeln!(
        stdout,
        "S = {:.3} ± {:.3} from {} Bell rounds",
        report.s_estimate, report.s_error, report.rounds_used
    )?;
    if eve != EveModel::None {
        writeln!(
            stdout,
            "exact S under this attack = {:.3}",
            exact_bell_value(&state, config.noise.visibility(), &eve)
        )?;
    }
    writeln!(
        stdout,
        "violation at {k_sigma}σ: {}",
        if report.violation { "yes" } else { "no, abort" }
    )?;
    out.json("report.json", &report)?;

    let keys = match mode {
        ProtocolMode::ThreeParty => {
            let k = distill_three_party(&transcript)?;
            writeln!(
                stdout,
                "A/A' agreed on {} of {} rounds ({:.4}); three-way agreement {:.4}",
                k.kept_rounds, k.qualifying_rounds, k.kept_fraction, k.three_way_agreement
            )?;
            report_keys(&k.material, out, stdout)?;
            json!({
                "keys": key_summary(&k.material),
                "qualifying_rounds": k.qualifying_rounds,
                "kept_rounds": k.kept_rounds,
                "kept_fraction": k.kept_fraction,
                "three_way_agreement": k.three_way_agreement,
            })
        }
        ProtocolMode::FourParty | ProtocolMode::SecretSharing => {
            let k = extract_pair_keys(&transcript, cfg.reveal()?)?;
            writeln!(
                stdout,
                "revealed by {} and {}",
                k.revealing[0].label(),
                k.revealing[1].label()
            )?;
            report_keys(&k.material, out, stdout)?;
            json!({
                "keys": key_summary(&k.material),
                "revealing": [k.revealing[0].label(), k.revealing[1].label()],
            })
        }
    };
    out.json("keys.json", &keys)?;
    Ok(())
}

/// Exit-code wrapper used by the binary.
pub fn main() -> i32 {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    run(std::env::args_os(), &mut lock)
}
