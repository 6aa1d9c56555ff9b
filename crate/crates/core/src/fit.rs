//! Least-squares order fits `y ≈ C t^β` on log-log data.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitModel {
    /// `y = C t^β`
    Power,
    /// `y = C t^β |ln t|`; the log factor is divided out before fitting
    PowerLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// half-width of the 95% confidence interval of the exponent
    pub width: f64,
    pub samples: usize,
}

/// Fit the exponent `β` of `value ~ t^β` from `(t, value)` pairs. Needs at
/// least 5 samples whose `t` span two decades.
pub fn fit_asymptotic_order(samples: &[(f64, f64)], model: FitModel) -> Result<OrderFit> {
    if samples.len() < 5 {
        return Err(Error::param(format!("order fit needs at least 5 samples, got {}", samples.len())));
    }
    if samples.iter().any(|&(t, y)| !(t > 0.0 && y > 0.0) || !t.is_finite() || !y.is_finite()) {
        return Err(Error::param("order fit needs positive finite samples"));
    }
    let (tmin, tmax) = samples
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &(t, _)| (a.min(t), b.max(t)));
    if tmax / tmin < 100.0 * (1.0 - 1e-12) {
        return Err(Error::param(format!("samples span {:.2} decades, need 2", (tmax / tmin).log10())));
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(t, y)| {
            let y = match model {
                FitModel::Power => y,
                FitModel::PowerLog => y / t.ln().abs(),
            };
            (t.ln(), y.ln())
        })
        .collect();
    if model == FitModel::PowerLog && samples.iter().any(|&(t, _)| t == 1.0) {
        return Err(Error::param("log model undefined at t = 1"));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let beta = sxy / sxx;
    let c = my - beta * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - c - beta * p.0).powi(2)).sum();
    let se = (rss / (m - 2.0) / sxx).sqrt();
    let q = StudentsT::new(0.0, 1.0, m - 2.0)
        .map_err(|e| Error::param(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(OrderFit { exponent: beta, prefactor: c.exp(), width: q * se, samples: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> Vec<f64> {
        (0..8).map(|j| 10f64.powf(-0.5 * j as f64)).collect()
    }

    #[test]
    fn exact_power() {
        let s: Vec<_> = grid().into_iter().map(|t| (t, 3.0 * t * t)).collect();
        let f = fit_asymptotic_order(&s, FitModel::Power).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-10);
        assert_relative_eq!(f.prefactor, 3.0, max_relative = 1e-9);
        assert!(f.width < 1e-8);
    }

    #[test]
    fn power_times_log() {
        let s: Vec<_> = grid().into_iter().skip(1).map(|t| (t, t.powf(1.5) * t.ln().abs())).collect();
        let f = fit_asymptotic_order(&s, FitModel::PowerLog).unwrap();
        assert!((f.exponent - 1.5).abs() < 0.05);
        let raw = fit_asymptotic_order(&s, FitModel::Power).unwrap();
        assert!(raw.exponent < 1.45);
    }

    #[test]
    fn constant_data() {
        let s: Vec<_> = grid().into_iter().map(|t| (t, 4.0)).collect();
        assert!(fit_asymptotic_order(&s, FitModel::Power).unwrap().exponent.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let s: Vec<_> = grid().into_iter().map(|t| (t, t)).collect();
        assert!(fit_asymptotic_order(&s[..4], FitModel::Power).is_err());
        assert!(fit_asymptotic_order(&s[..3], FitModel::Power).is_err());
        let short: Vec<_> = (0..6).map(|j| (1.0 + j as f64, 1.0)).collect();
        assert!(fit_asymptotic_order(&short, FitModel::Power).is_err());
        let mut neg = s.clone();
        neg[2].1 = -1.0;
        assert!(matches!(fit_asymptotic_order(&neg, FitModel::Power), Err(Error::Parameter(_))));
    }
}
