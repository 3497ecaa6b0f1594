//! Four-party correlation functions: closed form, Born-rule evaluation, and
//! the count-based estimator.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::CoincidenceFrame;
use crate::qstate::{outcome_distribution, MeasurementSetting, OutcomeQuad, StateVector4};

/// Analyzer phases for arms a, a′, b, b′, each reduced to [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingQuad(pub [f64; 4]);

impl SettingQuad {
    pub fn new(phases: [f64; 4]) -> Self {
        SettingQuad(phases.map(|p| p.rem_euclid(TAU)))
    }

    pub fn settings(&self) -> [MeasurementSetting; 4] {
        self.0.map(MeasurementSetting::Equatorial)
    }
}

/// `(2/3)cos(φa+φa′−φb−φb′) + (1/3)cos(φa−φa′)cos(φb−φb′)`
pub fn correlation_closed_form(q: &SettingQuad) -> f64 {
    let [a, ap, b, bp] = q.0;
    2.0 / 3.0 * (a + ap - b - bp).cos() + 1.0 / 3.0 * (a - ap).cos() * (b - bp).cos()
}

/// Correlation of the pure GHZ state `(HHVV+VVHH)/√2`: `cos(φa+φa′−φb−φb′)`.
pub fn correlation_ghz(q: &SettingQuad) -> f64 {
    let [a, ap, b, bp] = q.0;
    (a + ap - b - bp).cos()
}

/// Parity-weighted sum of a distribution over the 16 joint outcomes.
pub fn parity_expectation(dist: &[f64; 16]) -> f64 {
    dist.iter()
        .enumerate()
        .map(|(i, p)| f64::from(parity_of_index(i)) * p)
        .sum()
}

/// Product of the four ±1 outcomes encoded in a basis/outcome index.
pub fn parity_of_index(i: usize) -> i32 {
    if i.count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Expectation of the product of the four local results, under a white-noise
/// admixture of weight `1 − visibility`.
pub fn correlation_exact(state: &StateVector4, q: &SettingQuad, visibility: f64) -> Result<f64> {
    check_visibility(visibility)?;
    Ok(visibility * parity_expectation(&outcome_distribution(state, &q.settings())))
}

pub(crate) fn check_visibility(v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid_argument(format!(
            "visibility {v} is outside [0, 1]"
        )));
    }
    Ok(())
}

/// Anything that predicts a correlation for a setting quad.
pub trait CorrelationModel: Sync {
    fn correlation(&self, q: &SettingQuad) -> f64;
}

/// The closed form for the four-photon state, scaled by a visibility.
#[derive(Debug, Clone, Copy)]
pub struct ClosedForm {
    pub visibility: f64,
}

impl Default for ClosedForm {
    fn default() -> Self {
        ClosedForm { visibility: 1.0 }
    }
}

impl CorrelationModel for ClosedForm {
    fn correlation(&self, q: &SettingQuad) -> f64 {
        self.visibility * correlation_closed_form(q)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GhzClosedForm {
    pub visibility: f64,
}

impl CorrelationModel for GhzClosedForm {
    fn correlation(&self, q: &SettingQuad) -> f64 {
        self.visibility * correlation_ghz(q)
    }
}

/// Born-rule correlations of an explicit state.
#[derive(Debug, Clone, Copy)]
pub struct StateModel {
    pub state: StateVector4,
    pub visibility: f64,
}

impl CorrelationModel for StateModel {
    fn correlation(&self, q: &SettingQuad) -> f64 {
        self.visibility * parity_expectation(&outcome_distribution(&self.state, &q.settings()))
    }
}

/// Mixture of pure branches, e.g. the state after an intercept-resend attack.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    pub branches: Vec<(f64, StateVector4)>,
    pub visibility: f64,
}

impl CorrelationModel for MixtureModel {
    fn correlation(&self, q: &SettingQuad) -> f64 {
        let settings = q.settings();
        self.visibility
            * self
                .branches
                .iter()
                .map(|(w, s)| w * parity_expectation(&outcome_distribution(s, &settings)))
                .sum::<f64>()
    }
}

/// No correlations at all.
#[derive(Debug, Clone, Copy)]
pub struct Uncorrelated;

impl CorrelationModel for Uncorrelated {
    fn correlation(&self, _: &SettingQuad) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_events: u64,
}

impl CorrelationEstimate {
    /// Estimate from normalized outcome probabilities backed by `n_events`
    /// detections. The error treats the underlying counts as independent
    /// Poisson variables, which propagates to `√((1 − E²)/N)`.
    pub fn from_probabilities(probs: &[f64; 16], n_events: u64) -> Result<Self> {
        if n_events == 0 {
            return Err(Error::EmptyFrame);
        }
        let value = parity_expectation(probs).clamp(-1.0, 1.0);
        let std_error = ((1.0 - value * value).max(0.0) / n_events as f64).sqrt();
        Ok(CorrelationEstimate {
            value,
            std_error,
            n_events,
        })
    }
}

/// `E = Σ l_a l_a′ l_b l_b′ c / N` from raw fourfold counts.
pub fn correlation_estimate(frame: &CoincidenceFrame) -> Result<CorrelationEstimate> {
    if frame
        .settings
        .iter()
        .any(|s| matches!(s, MeasurementSetting::Computational))
    {
        return Err(Error::invalid_argument(
            "correlation estimate needs equatorial settings on every arm",
        ));
    }
    let n: u64 = frame.counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyFrame);
    }
    let probs: [f64; 16] = std::array::from_fn(|i| frame.counts[i] as f64 / n as f64);
    debug_assert!((0..16)
        .all(|i| { OutcomeQuad::from_index(&frame.settings, i).parity() == parity_of_index(i) }));
    CorrelationEstimate::from_probabilities(&probs, n)
}
