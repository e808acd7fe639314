//! Causal change-point scans over a one-dimensional trace: rolling sigmage
//! and a rolling linear-regression prediction band.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::mirror::IsomapTrace;

#[derive(Debug, Error)]
pub enum ChangepointError {
    #[error("window {w} is below the minimum {min}")]
    WindowTooSmall { w: usize, min: usize },
    #[error("trace of length {len} is too short for window {w}")]
    TraceTooShort { len: usize, w: usize },
    #[error("{0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Standard deviations below this are treated as zero.
const DEGENERATE_SD: f64 = 1e-12;

/// Infinite sigmage is written as JSON `null`.
mod finite_or_null {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SigmageRecord {
    pub time: f64,
    pub value: f64,
    /// `|value − mean| / sd`; infinite when the window is constant and the
    /// value departs from it.
    #[serde(with = "finite_or_null")]
    pub sigmage: f64,
    pub window_mean: f64,
    pub window_sd: f64,
    /// The window standard deviation was below 1e-12.
    pub degenerate: bool,
    pub flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SigmageReport {
    pub window: usize,
    pub threshold: f64,
    #[serde(rename = "perTime")]
    pub records: Vec<SigmageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegressionRecord {
    pub time: f64,
    pub observed: f64,
    pub predicted: f64,
    pub half_width: f64,
    pub flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegressionBandReport {
    pub window: usize,
    pub multiplier: f64,
    #[serde(rename = "perTime")]
    pub records: Vec<RegressionRecord>,
}

impl SigmageReport {
    pub fn flagged_times(&self) -> Vec<f64> {
        self.records.iter().filter(|r| r.flag).map(|r| r.time).collect()
    }
}

impl RegressionBandReport {
    pub fn flagged_times(&self) -> Vec<f64> {
        self.records.iter().filter(|r| r.flag).map(|r| r.time).collect()
    }
}

fn check_window(len: usize, w: usize, min: usize) -> Result<(), ChangepointError> {
    if w < min {
        return Err(ChangepointError::WindowTooSmall { w, min });
    }
    if len <= w {
        return Err(ChangepointError::TraceTooShort { len, w });
    }
    Ok(())
}

/// For every index `i >= w`, compares the value with the mean of the `w`
/// preceding values in units of their sample standard deviation and flags
/// it when the ratio exceeds `threshold`.
pub fn sigmage_scan(trace: &IsomapTrace, w: usize, threshold: f64) -> Result<SigmageReport, ChangepointError> {
    let x = &trace.values;
    check_window(x.len(), w, 2)?;
    if threshold.is_nan() {
        return Err(ChangepointError::InvalidParameter("threshold is NaN".into()));
    }
    let times = trace.grid.times();
    let records = (w..x.len())
        .map(|i| {
            let win = &x[i - w..i];
            let mean = win.iter().sum::<f64>() / w as f64;
            let var = win.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w - 1) as f64;
            let sd = var.sqrt();
            let dev = (x[i] - mean).abs();
            let degenerate = sd < DEGENERATE_SD;
            let (sigmage, flag) = if degenerate {
                if dev > DEGENERATE_SD {
                    (f64::INFINITY, true)
                } else {
                    (0.0, false)
                }
            } else {
                let s = dev / sd;
                (s, s > threshold)
            };
            SigmageRecord {
                time: times[i],
                value: x[i],
                sigmage,
                window_mean: mean,
                window_sd: sd,
                degenerate,
                flag,
            }
        })
        .collect();
    Ok(SigmageReport {
        window: w,
        threshold,
        records,
    })
}

/// For every index `i >= w`, fits a least-squares line to the `w` preceding
/// `(time, value)` pairs, extrapolates it to `times[i]`, and flags the value
/// when it falls outside `multiplier` residual standard errors.
pub fn regression_band_scan(
    trace: &IsomapTrace,
    w: usize,
    multiplier: f64,
) -> Result<RegressionBandReport, ChangepointError> {
    let x = &trace.values;
    check_window(x.len(), w, 3)?;
    if multiplier.is_nan() || multiplier <= 0.0 {
        return Err(ChangepointError::InvalidParameter(format!(
            "multiplier {multiplier} must be positive"
        )));
    }
    let times = trace.grid.times();
    let records = (w..x.len())
        .map(|i| {
            let (ts, ys) = (&times[i - w..i], &x[i - w..i]);
            let tm = ts.iter().sum::<f64>() / w as f64;
            let ym = ys.iter().sum::<f64>() / w as f64;
            let stt: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
            let sty: f64 = ts.iter().zip(ys).map(|(t, y)| (t - tm) * (y - ym)).sum();
            let slope = sty / stt;
            let ssr: f64 = ts
                .iter()
                .zip(ys)
                .map(|(t, y)| (y - ym - slope * (t - tm)).powi(2))
                .sum();
            let se = (ssr / (w - 2) as f64).sqrt();
            let predicted = ym + slope * (times[i] - tm);
            let dev = (x[i] - predicted).abs();
            let (half_width, flag) = if se < DEGENERATE_SD {
                ((multiplier * DEGENERATE_SD).max(DEGENERATE_SD), dev > 1e-9)
            } else {
                let hw = multiplier * se;
                (hw, dev > hw)
            };
            RegressionRecord {
                time: times[i],
                observed: x[i],
                predicted,
                half_width,
                flag,
            }
        })
        .collect();
    Ok(RegressionBandReport {
        window: w,
        multiplier,
        records,
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_report_json<T: Serialize>(path: &Path, report: &T) -> Result<(), ChangepointError> {
    fs::write(path, serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}
