//! Monte Carlo coincidence counting: single frames, efficiency correction,
//! the single-arm phase scan and full sixteen-frame Bell runs.
//!
//! Frames are seeded by `(seed, frame_index)`: a ChaCha8 generator keyed by the
//! run seed, with the frame index as its stream id. Results therefore do not
//! depend on how frames are scheduled across threads.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{bell_error, bell_functional, BellSettings, ETable};
use crate::correlation::{check_visibility, correlation_estimate, CorrelationEstimate};
use crate::error::{Error, Result};
use crate::fit::ScanPoint;
use crate::qstate::{outcome_distribution, Arm, MeasurementSetting, StateVector4};

/// Typical fourfold rate of the reference experiment, for presentation only.
pub const FOURFOLDS_PER_HOUR: f64 = 150.0;

pub fn hours_for_events(events: u64) -> f64 {
    events as f64 / FOURFOLDS_PER_HOUR
}

/// White-noise admixture: with probability `1 − visibility` the joint outcome
/// is uniform over all sixteen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    visibility: f64,
}

impl NoiseModel {
    pub fn new(visibility: f64) -> Result<Self> {
        check_visibility(visibility)?;
        Ok(NoiseModel { visibility })
    }

    pub fn ideal() -> Self {
        NoiseModel { visibility: 1.0 }
    }

    pub fn visibility(&self) -> f64 {
        self.visibility
    }

    /// `V·p + (1 − V)/16`
    pub fn mix(&self, dist: &[f64; 16]) -> [f64; 16] {
        dist.map(|p| self.visibility * p + (1.0 - self.visibility) / 16.0)
    }
}

/// Eight detector efficiencies, `efficiencies[arm][port]`. Port 0 is the
/// transmitted output of the arm's polarizing splitter and registers outcome
/// +1 (or H); port 1 is the reflected output, outcome −1 (or V).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorBank {
    pub efficiencies: [[f64; 2]; 4],
}

impl DetectorBank {
    /// Zero is accepted to model a dead detector; such a bank cannot be
    /// corrected for.
    pub fn new(efficiencies: [[f64; 2]; 4]) -> Result<Self> {
        if efficiencies
            .iter()
            .flatten()
            .any(|e| !(0.0..=1.0).contains(e))
        {
            return Err(Error::invalid_argument(
                "detector efficiencies must lie in [0, 1]",
            ));
        }
        Ok(DetectorBank { efficiencies })
    }

    pub fn ideal() -> Self {
        DetectorBank {
            efficiencies: [[1.0; 2]; 4],
        }
    }

    pub fn efficiency(&self, arm: Arm, port: usize) -> f64 {
        self.efficiencies[arm.index()][port]
    }

    /// Probability that all four detectors addressed by outcome `index` fire.
    pub fn joint_efficiency(&self, index: usize) -> f64 {
        (0..4)
            .map(|arm| self.efficiencies[arm][(index >> (3 - arm)) & 1])
            .product()
    }

    pub fn is_ideal(&self) -> bool {
        self.efficiencies.iter().flatten().all(|&e| e == 1.0)
    }
}

impl Default for DetectorBank {
    fn default() -> Self {
        DetectorBank::ideal()
    }
}

/// Sixteen fourfold counts recorded at one setting quadruple.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceFrame {
    pub settings: [MeasurementSetting; 4],
    pub counts: [u64; 16],
    pub emissions_attempted: u64,
    pub bank: DetectorBank,
    pub seed: u64,
    pub frame_index: u64,
}

impl CoincidenceFrame {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub(crate) fn frame_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn sample_frame(
    state: &StateVector4,
    settings: &[MeasurementSetting; 4],
    noise: &NoiseModel,
    bank: &DetectorBank,
    n_emissions: u64,
    seed: u64,
) -> Result<CoincidenceFrame> {
    sample_frame_indexed(state, settings, noise, bank, n_emissions, seed, 0)
}

/// Each emission draws a joint outcome from the noisy distribution and is
/// kept only if all four addressed detectors fire.
pub fn sample_frame_indexed(
    state: &StateVector4,
    settings: &[MeasurementSetting; 4],
    noise: &NoiseModel,
    bank: &DetectorBank,
    n_emissions: u64,
    seed: u64,
    frame_index: u64,
) -> Result<CoincidenceFrame> {
    if n_emissions == 0 {
        return Err(Error::invalid_argument(
            "a frame needs at least one emission",
        ));
    }
    let dist = noise.mix(&outcome_distribution(state, settings));
    let outcomes = WeightedIndex::new(dist).map_err(|e| Error::InvalidState(e.to_string()))?;
    let survive: [f64; 16] = std::array::from_fn(|i| bank.joint_efficiency(i));
    let mut rng = frame_rng(seed, frame_index);
    let mut counts = [0u64; 16];
    for _ in 0..n_emissions {
        let i = outcomes.sample(&mut rng);
        if survive[i] >= 1.0 || rng.random::<f64>() < survive[i] {
            counts[i] += 1;
        }
    }
    Ok(CoincidenceFrame {
        settings: *settings,
        counts,
        emissions_attempted: n_emissions,
        bank: *bank,
        seed,
        frame_index,
    })
}

/// Counts divided by the product of their four detector efficiencies, then
/// normalized to probabilities.
pub fn efficiency_correct(frame: &CoincidenceFrame) -> Result<[f64; 16]> {
    if frame.bank.efficiencies.iter().flatten().any(|&e| e <= 0.0) {
        return Err(Error::CannotCorrect(
            "detector bank contains a zero efficiency".into(),
        ));
    }
    let weighted: [f64; 16] =
        std::array::from_fn(|i| frame.counts[i] as f64 / frame.bank.joint_efficiency(i));
    let total: f64 = weighted.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyFrame);
    }
    Ok(weighted.map(|w| w / total))
}

/// Correlation estimate from efficiency-corrected rates; the error uses the
/// raw number of detected events.
pub fn corrected_estimate(frame: &CoincidenceFrame) -> Result<CorrelationEstimate> {
    let rates = efficiency_correct(frame)?;
    CorrelationEstimate::from_probabilities(&rates, frame.total())
}

fn frame_estimate(frame: &CoincidenceFrame, corrected: bool) -> Result<CorrelationEstimate> {
    if corrected && !frame.bank.is_ideal() {
        corrected_estimate(frame)
    } else {
        correlation_estimate(frame)
    }
}

/// Scan over φ_a with φ_a′ = φ_b = φ_b′ = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanDataset {
    pub points: Vec<(f64, CorrelationEstimate)>,
}

impl ScanDataset {
    pub fn fit_points(&self) -> Vec<ScanPoint> {
        self.points
            .iter()
            .map(|(phi, e)| ScanPoint {
                phi: *phi,
                value: e.value,
                sigma: e.std_error,
            })
            .collect()
    }
}

/// Samples `steps` equally spaced φ_a ∈ [0, 2π), one frame per point, and
/// estimates the correlation from efficiency-corrected rates.
pub fn run_scan(
    state: &StateVector4,
    noise: &NoiseModel,
    bank: &DetectorBank,
    steps: usize,
    events_per_point: u64,
    seed: u64,
) -> Result<ScanDataset> {
    if steps < 3 {
        return Err(Error::invalid_argument("a scan needs at least 3 points"));
    }
    let points = (0..steps)
        .into_par_iter()
        .map(|i| {
            let phi = std::f64::consts::TAU * i as f64 / steps as f64;
            let settings = [
                MeasurementSetting::Equatorial(phi),
                MeasurementSetting::Equatorial(0.0),
                MeasurementSetting::Equatorial(0.0),
                MeasurementSetting::Equatorial(0.0),
            ];
            let frame = sample_frame_indexed(
                state,
                &settings,
                noise,
                bank,
                events_per_point,
                seed,
                i as u64,
            )?;
            Ok((phi, frame_estimate(&frame, true)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanDataset { points })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellRunResult {
    pub settings: BellSettings,
    pub frames: Vec<CoincidenceFrame>,
    pub table: ETable,
    pub s: f64,
    pub s_error: f64,
    pub corrected: bool,
}

/// Evaluates the Bell functional from already recorded frames (ordered by
/// table index).
pub fn analyze_frames(
    settings: &BellSettings,
    frames: Vec<CoincidenceFrame>,
    corrected: bool,
) -> Result<BellRunResult> {
    if frames.len() != 16 {
        return Err(Error::invalid_argument(format!(
            "a Bell run needs 16 frames, got {}",
            frames.len()
        )));
    }
    let estimates = frames
        .iter()
        .map(|f| frame_estimate(f, corrected))
        .collect::<Result<Vec<_>>>()?;
    let table = ETable::with_errors(
        std::array::from_fn(|i| estimates[i].value),
        std::array::from_fn(|i| estimates[i].std_error),
    )?;
    Ok(BellRunResult {
        settings: *settings,
        s: bell_functional(&table),
        s_error: bell_error(&table)?,
        table,
        frames,
        corrected,
    })
}

/// Sixteen frames, one per setting combination; frame `i` uses stream `i`.
pub fn run_bell(
    state: &StateVector4,
    noise: &NoiseModel,
    bank: &DetectorBank,
    settings: &BellSettings,
    events_per_frame: u64,
    seed: u64,
    corrected: bool,
) -> Result<BellRunResult> {
    let frames = (0..16usize)
        .into_par_iter()
        .map(|i| {
            sample_frame_indexed(
                state,
                &settings.quad(i).settings(),
                noise,
                bank,
                events_per_frame,
                seed,
                i as u64,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    analyze_frames(settings, frames, corrected)
}
