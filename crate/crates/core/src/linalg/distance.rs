use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::dims("distance", x.len(), y.len()));
    }
    Ok(())
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `‖x − y‖₂`
pub fn dist_euclid(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x, y)?;
    Ok(sq_euclid(x, y).sqrt())
}

fn sq_euclid(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Normalized inner product distance, `1 − xᵀy / (‖x‖‖y‖)`, in `[0, 2]`.
pub fn dist_nip(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x, y)?;
    let (nx, ny) = (norm(x), norm(y));
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::DistanceUndefined("normalized inner product of a zero vector"));
    }
    let cos = (dot(x, y) / (nx * ny)).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

/// Mean-removed spectral angle scaled to `[0, 1]`.
pub fn dist_mrsa(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x, y)?;
    if x.len() < 2 {
        return Err(Error::DistanceUndefined("mean-removed angle needs at least two bands"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let cx: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let cy: Vec<f64> = y.iter().map(|v| v - my).collect();
    let (nx, ny) = (norm(&cx), norm(&cy));
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::DistanceUndefined("mean-removed angle of a constant vector"));
    }
    // angle = 2·atan2(‖u − v‖, ‖u + v‖) for unit u, v: equal to acos(uᵀv) but
    // accurate near 0 and π where acos loses half the digits.
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in cx.iter().zip(&cy) {
        let (u, v) = (a / nx, b / ny);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    let angle = 2.0 * diff.sqrt().atan2(sum.sqrt());
    Ok((angle / std::f64::consts::PI).clamp(0.0, 1.0))
}

/// Distance criterion used to match proxy columns to dictionary atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclid,
    #[default]
    Nip,
    Mrsa,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Euclid, Metric::Nip, Metric::Mrsa];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclid => "euclid",
            Metric::Nip => "nip",
            Metric::Mrsa => "mrsa",
        }
    }

    pub fn distance(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            Metric::Euclid => dist_euclid(x, y),
            Metric::Nip => dist_nip(x, y),
            Metric::Mrsa => dist_mrsa(x, y),
        }
    }

    /// Per-pair cost entering the assignment objective. Euclid contributes the
    /// squared distance so that the summed objective is the least-squares fit;
    /// for unit-norm vectors it is then exactly `2·nip`.
    pub fn assignment_cost(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            Metric::Euclid => {
                check_len(x, y)?;
                Ok(sq_euclid(x, y))
            }
            other => other.distance(x, y),
        }
    }

    /// Cost substituted when the distance is undefined for a pair.
    pub fn max_cost(self) -> Option<f64> {
        match self {
            Metric::Euclid => None,
            Metric::Nip => Some(2.0),
            Metric::Mrsa => Some(1.0),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Parse(format!("unknown metric `{s}` (expected euclid, nip or mrsa)")))
    }
}
