//! Generalized four-party, two-setting Bell functional.
//!
//! ```text
//! S = 1/16 Σ_{s ∈ {±1}^4} | Σ_{k,l,m,n ∈ {1,2}} s_a^k s_a′^l s_b^m s_b′^n E(k,l,m,n) |
//! ```
//! with `s^1 = s` and `s^2 = 1`. Local realistic models satisfy `S ≤ 1`.
//!
//! Table index convention: `8·k + 4·l + 2·m + n` with setting 1 ↦ 0 and
//! setting 2 ↦ 1. Inner sums use the same layout with `s = +1 ↦ 0`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{ClosedForm, CorrelationModel, SettingQuad};
use crate::error::{Error, Result};
use crate::qstate::Arm;

/// Two alternative phases per arm; `phases[arm][0]` is setting 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellSettings {
    pub phases: [[f64; 2]; 4],
}

impl BellSettings {
    pub fn new(phases: [[f64; 2]; 4]) -> Self {
        BellSettings {
            phases: phases.map(|p| p.map(|x| x.rem_euclid(TAU))),
        }
    }

    pub fn phase(&self, arm: Arm, index: usize) -> f64 {
        self.phases[arm.index()][index]
    }

    /// Setting quad for table index `8k + 4l + 2m + n`.
    pub fn quad(&self, table_index: usize) -> SettingQuad {
        SettingQuad(std::array::from_fn(|x| {
            self.phases[x][(table_index >> (3 - x)) & 1]
        }))
    }

    /// Phases flattened as (a¹, a², a′¹, a′², b¹, b², b′¹, b′²).
    pub fn flat(&self) -> [f64; 8] {
        std::array::from_fn(|i| self.phases[i / 2][i % 2])
    }
}

/// φ = ±π/4 on a′, b, b′; φ_a ∈ {0, π/2}.
pub fn paper_optimal_settings() -> BellSettings {
    let pm = [FRAC_PI_4, -FRAC_PI_4];
    BellSettings::new([[0.0, FRAC_PI_2], pm, pm, pm])
}

/// The sixteen correlations E(k,l,m,n) with optional standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ETable {
    pub values: [f64; 16],
    pub errors: Option<[f64; 16]>,
}

impl ETable {
    pub fn new(values: [f64; 16]) -> Result<Self> {
        if let Some(v) = values
            .iter()
            .find(|v| v.abs() > 1.0 + 1e-9 || !v.is_finite())
        {
            return Err(Error::invalid_argument(format!(
                "correlation {v} is outside [-1, 1]"
            )));
        }
        Ok(ETable {
            values,
            errors: None,
        })
    }

    pub fn with_errors(values: [f64; 16], errors: [f64; 16]) -> Result<Self> {
        if errors.iter().any(|e| *e < 0.0 || !e.is_finite()) {
            return Err(Error::invalid_argument(
                "standard errors must be non-negative",
            ));
        }
        let mut t = ETable::new(values)?;
        t.errors = Some(errors);
        Ok(t)
    }

    pub fn from_model<M: CorrelationModel + ?Sized>(model: &M, settings: &BellSettings) -> Self {
        ETable {
            values: std::array::from_fn(|i| model.correlation(&settings.quad(i))),
            errors: None,
        }
    }
}

/// ±1 coefficient of E(k) in the inner sum for sign pattern `s`.
pub fn sign_coefficient(s: usize, k: usize) -> f64 {
    if (s & !k & 0xF).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// The sixteen inner sums, computed with a per-arm butterfly.
pub fn inner_sums(values: &[f64; 16]) -> [f64; 16] {
    let mut v = *values;
    for bit in [8, 4, 2, 1] {
        for i in 0..16 {
            if i & bit == 0 {
                let (e1, e2) = (v[i], v[i | bit]);
                // s = +1: E¹ + E²; s = −1: −E¹ + E²
                v[i] = e1 + e2;
                v[i | bit] = e2 - e1;
            }
        }
    }
    v
}

pub fn bell_functional(t: &ETable) -> f64 {
    bell_from_values(&t.values)
}

fn bell_from_values(values: &[f64; 16]) -> f64 {
    inner_sums(values).iter().map(|x| x.abs()).sum::<f64>() / 16.0
}

/// Gradient of S with the signs frozen at the measured inner sums. Inner sums
/// not exceeding their own propagated error contribute nothing.
pub fn frozen_gradient(t: &ETable, errors: &[f64; 16]) -> [f64; 16] {
    let sums = inner_sums(&t.values);
    // every inner sum has the same error: all coefficients are ±1
    let inner_err = errors.iter().map(|e| e * e).sum::<f64>().sqrt();
    let mut g = [0.0; 16];
    for (s, sum) in sums.iter().enumerate() {
        if sum.abs() <= inner_err || *sum == 0.0 {
            continue;
        }
        let sign = sum.signum();
        for (k, gk) in g.iter_mut().enumerate() {
            *gk += sign * sign_coefficient(s, k) / 16.0;
        }
    }
    g
}

/// Quadrature error of S from the table's standard errors.
pub fn bell_error(t: &ETable) -> Result<f64> {
    let errors = t
        .errors
        .ok_or_else(|| Error::invalid_argument("table carries no standard errors"))?;
    let g = frozen_gradient(t, &errors);
    Ok(g.iter()
        .zip(&errors)
        .map(|(g, e)| (g * e).powi(2))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalVisibility {
    /// `1/S`; infinite when S = 0.
    pub value: f64,
    /// False when `value ≥ 1`, i.e. no visibility can produce a violation.
    pub violation_possible: bool,
}

impl CriticalVisibility {
    pub fn from_bell_value(s: f64) -> Self {
        let value = if s > 0.0 { 1.0 / s } else { f64::INFINITY };
        CriticalVisibility {
            value,
            violation_possible: value < 1.0,
        }
    }
}

/// Smallest visibility `V` with `V·S > 1` for the four-photon closed form.
pub fn critical_visibility(settings: &BellSettings) -> CriticalVisibility {
    critical_visibility_for(&ClosedForm::default(), settings)
}

pub fn critical_visibility_for<M: CorrelationModel + ?Sized>(
    model: &M,
    settings: &BellSettings,
) -> CriticalVisibility {
    CriticalVisibility::from_bell_value(bell_functional(&ETable::from_model(model, settings)))
}

/// Above this many candidates the search first scans a coarser sub-grid.
const EXHAUSTIVE_LIMIT: u64 = 1 << 26;
const MAX_GRID_POINTS: usize = 72;
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchResult {
    pub settings: BellSettings,
    pub value: f64,
    /// Whether every grid point was visited (otherwise coarse scan + ascent).
    pub exhaustive: bool,
}

/// Maximizes S over a uniform phase grid with step `resolution`, φ_a¹ fixed at
/// 0. Small grids are scanned exhaustively; larger ones are scanned on the
/// coarsest feasible sub-grid and refined by coordinate ascent on the full
/// grid. Ties go to the lexicographically smallest phase vector.
pub fn settings_search<M: CorrelationModel + ?Sized>(
    model: &M,
    resolution: f64,
) -> Result<SearchResult> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::invalid_argument(format!(
            "grid resolution {resolution} yields an empty grid"
        )));
    }
    let n = (TAU / resolution + 1e-9).floor() as usize;
    if n == 0 {
        return Err(Error::invalid_argument(format!(
            "grid resolution {resolution} exceeds 2π; the grid is empty"
        )));
    }
    if n > MAX_GRID_POINTS {
        return Err(Error::invalid_argument(format!(
            "grid with {n} points per phase is too fine (max {MAX_GRID_POINTS})"
        )));
    }
    let grid: Vec<f64> = (0..n).map(|i| i as f64 * resolution).collect();
    let table = CorrelationGrid::new(model, &grid);

    let mut stride = 1;
    while ((n / stride) as u64).pow(7) > EXHAUSTIVE_LIMIT || !n.is_multiple_of(stride) {
        stride += 1;
    }
    let (mut best_idx, mut best) = table.exhaustive(stride);
    let exhaustive = stride == 1;
    if !exhaustive {
        (best_idx, best) = table.coordinate_ascent(best_idx, best);
    }
    let phases: [[f64; 2]; 4] =
        std::array::from_fn(|arm| std::array::from_fn(|k| grid[best_idx[2 * arm + k]]));
    Ok(SearchResult {
        settings: BellSettings::new(phases),
        value: best,
        exhaustive,
    })
}

struct CorrelationGrid {
    n: usize,
    values: Vec<f64>,
}

impl CorrelationGrid {
    fn new<M: CorrelationModel + ?Sized>(model: &M, grid: &[f64]) -> Self {
        let n = grid.len();
        let values = (0..n.pow(4))
            .into_par_iter()
            .map(|flat| {
                let q = [
                    flat / (n * n * n),
                    (flat / (n * n)) % n,
                    (flat / n) % n,
                    flat % n,
                ];
                model.correlation(&SettingQuad(q.map(|i| grid[i])))
            })
            .collect();
        CorrelationGrid { n, values }
    }

    fn bell(&self, idx: &[usize; 8]) -> f64 {
        let n = self.n;
        let e: [f64; 16] = std::array::from_fn(|t| {
            let pick = |arm: usize| idx[2 * arm + ((t >> (3 - arm)) & 1)];
            self.values[((pick(0) * n + pick(1)) * n + pick(2)) * n + pick(3)]
        });
        bell_from_values(&e)
    }

    fn exhaustive(&self, stride: usize) -> ([usize; 8], f64) {
        let m = self.n / stride;
        // parallel over (a², a′¹); each task walks the remaining five phases
        // in lexicographic order
        let chunks: Vec<([usize; 8], f64)> = (0..m * m)
            .into_par_iter()
            .map(|outer| {
                let mut idx = [0usize; 8];
                idx[1] = (outer / m) * stride;
                idx[2] = (outer % m) * stride;
                let mut best = (idx, f64::NEG_INFINITY);
                for inner in 0..m.pow(5) {
                    let mut r = inner;
                    for slot in (3..8).rev() {
                        idx[slot] = (r % m) * stride;
                        r /= m;
                    }
                    let s = self.bell(&idx);
                    if s > best.1 + TIE_TOL {
                        best = (idx, s);
                    }
                }
                best
            })
            .collect();
        chunks
            .into_iter()
            .fold(([0; 8], f64::NEG_INFINITY), |best, c| {
                if c.1 > best.1 + TIE_TOL {
                    c
                } else {
                    best
                }
            })
    }

    fn coordinate_ascent(&self, mut idx: [usize; 8], mut best: f64) -> ([usize; 8], f64) {
        for _ in 0..64 {
            let mut improved = false;
            for slot in 1..8 {
                let mut trial = idx;
                for v in 0..self.n {
                    trial[slot] = v;
                    let s = self.bell(&trial);
                    if s > best + TIE_TOL {
                        best = s;
                        idx = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        (idx, best)
    }
}
