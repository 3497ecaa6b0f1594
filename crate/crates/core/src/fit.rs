//! Sinusoidal fit of a correlation scan with known unit frequency:
//! `E(φ) = A·cos(φ − δ) + C`, linearized as `c·cos φ + s·sin φ + C`.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub phi: f64,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanFit {
    /// |A|
    pub visibility: f64,
    /// δ in (−π, π]
    pub phase_offset: f64,
    pub offset: f64,
    pub visibility_error: f64,
    pub phase_error: f64,
    pub offset_error: f64,
}

/// Ordinary least squares on `{cos φ, sin φ, 1}`. Parameter errors propagate
/// the per-point σ through the linear estimator, so points with σ = 0 are
/// handled without special cases.
pub fn fit_scan(points: &[ScanPoint]) -> Result<ScanFit> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.phi.rem_euclid(TAU)).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if distinct.len() >= 2 && (distinct[0] + TAU - distinct[distinct.len() - 1]).abs() < 1e-12 {
        distinct.pop();
    }
    if distinct.len() < 3 {
        return Err(Error::UnderdeterminedFit(distinct.len()));
    }

    let row = |phi: f64| Vector3::new(phi.cos(), phi.sin(), 1.0);
    let mut xtx = Matrix3::zeros();
    let mut xty = Vector3::zeros();
    for p in points {
        let x = row(p.phi);
        xtx += x * x.transpose();
        xty += x * p.value;
    }
    let inv = xtx
        .try_inverse()
        .ok_or(Error::UnderdeterminedFit(distinct.len()))?;
    let beta = inv * xty;

    // Cov(β) = (XᵀX)⁻¹ Xᵀ diag(σ²) X (XᵀX)⁻¹
    let mut meat = Matrix3::zeros();
    for p in points {
        let x = row(p.phi);
        meat += x * x.transpose() * (p.sigma * p.sigma);
    }
    let cov = inv * meat * inv;

    let (c, s, offset) = (beta[0], beta[1], beta[2]);
    let visibility = c.hypot(s);
    let phase_offset = s.atan2(c);
    let (visibility_error, phase_error) = if visibility > 0.0 {
        let var_v = (c * c * cov[(0, 0)] + s * s * cov[(1, 1)] + 2.0 * c * s * cov[(0, 1)])
            / (visibility * visibility);
        let var_d = (s * s * cov[(0, 0)] + c * c * cov[(1, 1)] - 2.0 * c * s * cov[(0, 1)])
            / visibility.powi(4);
        (var_v.max(0.0).sqrt(), var_d.max(0.0).sqrt())
    } else {
        (cov[(0, 0)].max(cov[(1, 1)]).max(0.0).sqrt(), f64::INFINITY)
    };
    Ok(ScanFit {
        visibility,
        phase_offset,
        offset,
        visibility_error,
        phase_error,
        offset_error: cov[(2, 2)].max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(f: impl Fn(f64) -> f64, n: usize) -> Vec<ScanPoint> {
        (0..n)
            .map(|i| {
                let phi = TAU * i as f64 / n as f64;
                ScanPoint {
                    phi,
                    value: f(phi),
                    sigma: 0.01,
                }
            })
            .collect()
    }

    #[test]
    fn exact_cosine() {
        let fit = fit_scan(&scan(f64::cos, 13)).unwrap();
        assert!((fit.visibility - 1.0).abs() < 1e-12);
        assert!(fit.phase_offset.abs() < 1e-12);
        assert!(fit.offset.abs() < 1e-12);
    }

    #[test]
    fn planted_amplitude_and_phase() {
        let fit = fit_scan(&scan(|p| 0.793 * p.cos(), 13)).unwrap();
        assert!((fit.visibility - 0.793).abs() < 1e-12);
        let fit = fit_scan(&scan(|p| 0.5 * (p - 0.4).cos() + 0.1, 9)).unwrap();
        assert!((fit.visibility - 0.5).abs() < 1e-12);
        assert!((fit.phase_offset - 0.4).abs() < 1e-12);
        assert!((fit.offset - 0.1).abs() < 1e-12);
    }

    #[test]
    fn flat_scan() {
        let fit = fit_scan(&scan(|_| 0.0, 7)).unwrap();
        assert_eq!(fit.visibility, 0.0);
    }

    #[test]
    fn error_scales_with_sigma() {
        // uniform design over a full period: Var(c) = 2σ²/N
        let pts = scan(f64::cos, 12);
        let fit = fit_scan(&pts).unwrap();
        assert!((fit.visibility_error - (2.0 * 0.01f64.powi(2) / 12.0).sqrt()).abs() < 1e-12);
        assert!((fit.offset_error - 0.01 / 12f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn too_few_abscissae() {
        let pts = [
            ScanPoint {
                phi: 0.0,
                value: 1.0,
                sigma: 0.1,
            },
            ScanPoint {
                phi: 1.0,
                value: 0.5,
                sigma: 0.1,
            },
            ScanPoint {
                phi: 1.0,
                value: 0.6,
                sigma: 0.1,
            },
        ];
        assert!(matches!(fit_scan(&pts), Err(Error::UnderdeterminedFit(2))));
        let wrapped = [
            ScanPoint {
                phi: 0.0,
                value: 1.0,
                sigma: 0.1,
            },
            ScanPoint {
                phi: TAU,
                value: 1.0,
                sigma: 0.1,
            },
            ScanPoint {
                phi: 1.0,
                value: 0.5,
                sigma: 0.1,
            },
        ];
        assert!(matches!(
            fit_scan(&wrapped),
            Err(Error::UnderdeterminedFit(2))
        ));
    }
}
