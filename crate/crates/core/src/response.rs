//! Bead geometry, the composite scalar response and accuracy metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base of the logarithm in the composite response.
pub const LOG_BASE: f64 = 10.0;

/// Priority weights applied to depth, width and height.
pub const DEPTH_WEIGHT: f64 = 1e10;
pub const WIDTH_WEIGHT: f64 = 1e6;
pub const HEIGHT_WEIGHT: f64 = 1e2;

/// Measured bead dimensions in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeadGeometry {
    pub depth_d: f64,
    pub width_w: f64,
    pub height_h: f64,
}

impl BeadGeometry {
    pub fn new(depth_d: f64, width_w: f64, height_h: f64) -> Result<Self> {
        let g = BeadGeometry {
            depth_d,
            width_w,
            height_h,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("d", self.depth_d),
            ("w", self.width_w),
            ("h", self.height_h),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidGeometry { field, value });
            }
        }
        Ok(())
    }
}

/// Composite scalar response, dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResponseY(pub f64);

impl ResponseY {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `Y = 10 · log((D·1e10 + W·1e6 + H·1e2) / (D + W + H))`.
pub fn composite_response(g: &BeadGeometry) -> Result<ResponseY> {
    g.validate()?;
    let weighted = g.depth_d * DEPTH_WEIGHT + g.width_w * WIDTH_WEIGHT + g.height_h * HEIGHT_WEIGHT;
    let plain = g.depth_d + g.width_w + g.height_h;
    Ok(ResponseY((weighted / plain).log(LOG_BASE) * 10.0))
}

/// RMSE and R² on the response scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub rmse: f64,
    pub r2: f64,
}

fn check_lengths(pred: &[f64], actual: &[f64], min: usize) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            got: pred.len(),
        });
    }
    if actual.len() < min {
        return Err(Error::validation(format!(
            "need at least {min} values, got {}",
            actual.len()
        )));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual, 1)?;
    let sse: f64 = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok((sse / actual.len() as f64).sqrt())
}

/// Coefficient of determination about the mean of `actual`.
pub fn r2_score(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual, 2)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::validation(
            "r2 undefined: actual values have zero variance",
        ));
    }
    let ss_res: f64 = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn metric_pair(pred: &[f64], actual: &[f64]) -> Result<MetricPair> {
    Ok(MetricPair {
        rmse: rmse(pred, actual)?,
        r2: r2_score(pred, actual)?,
    })
}
