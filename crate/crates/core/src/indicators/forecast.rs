//! Capability forecasting from an affine fit of KRI value against
//! log10(effective compute).

use serde::{Deserialize, Serialize};

use super::{IndicatorError, IndicatorValue, KriScale, Measurement, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// Intercept: value at 1 FLOP.
    pub a: f64,
    /// Slope per decade of compute.
    pub b: f64,
    /// Distinct (compute, value) points the fit used.
    pub fit_window: Vec<(f64, f64)>,
    pub residual_rms: f64,
}

impl ScalingFit {
    pub fn predict(&self, compute: f64) -> f64 {
        self.a + self.b * compute.log10()
    }

    pub fn predict_clamped(&self, compute: f64, scale: &KriScale) -> f64 {
        self.predict(compute).clamp(scale.lo, scale.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Crossing {
    /// A measured value already meets the threshold at this compute.
    AlreadyReached {
        compute: f64,
    },
    At {
        compute: f64,
    },
    NotReached,
}

impl Crossing {
    /// Compute at which the threshold is (or was) reached.
    pub fn compute(&self) -> Option<f64> {
        match self {
            Crossing::AlreadyReached { compute } | Crossing::At { compute } => Some(*compute),
            Crossing::NotReached => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub fit: ScalingFit,
    pub threshold: f64,
    pub crossing: Crossing,
}

/// (compute, value) pairs of a KRI's numeric measurements that carry an
/// effective-compute figure.
pub fn capability_points(kri_id: &str, history: &[Measurement]) -> Vec<(f64, f64)> {
    history
        .iter()
        .filter(|m| m.indicator_id == kri_id)
        .filter_map(|m| match (m.effective_compute, &m.value) {
            (Some(c), IndicatorValue::Number(v)) => Some((c, *v)),
            _ => None,
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut m = 0.0;
    for (i, v) in values.enumerate() {
        m += (v - m) / (i + 1) as f64;
    }
    m
}

/// Least-squares fit of `value = a + b * log10(compute)`. Exact repeats of
/// a point count once.
pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(c, v)| c.is_finite() && *c > 0.0 && v.is_finite())
        .collect();
    pts.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    pts.dedup();
    let mut computes: Vec<f64> = pts.iter().map(|p| p.0).collect();
    computes.dedup();
    if computes.len() < 2 {
        return Err(IndicatorError::InsufficientData(computes.len()));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.log10()).collect();
    let mx = mean(xs.iter().copied());
    let my = mean(pts.iter().map(|p| p.1));
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, (_, y)) in xs.iter().zip(&pts) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let sse: f64 = xs
        .iter()
        .zip(&pts)
        .map(|(x, (_, y))| (y - a - b * x).powi(2))
        .sum();
    Ok(ScalingFit {
        a,
        b,
        residual_rms: (sse / pts.len() as f64).sqrt(),
        fit_window: pts,
    })
}

/// Compute at which the fitted trend reaches `threshold`.
pub fn forecast_crossing(points: &[(f64, f64)], threshold: f64) -> Result<Forecast> {
    let fit = fit_scaling(points)?;
    let reached = fit
        .fit_window
        .iter()
        .filter(|(_, v)| *v >= threshold)
        .map(|(c, _)| *c)
        .reduce(f64::max);
    let crossing = match reached {
        Some(compute) => Crossing::AlreadyReached { compute },
        None if fit.b > 0.0 => Crossing::At {
            compute: 10f64.powf((threshold - fit.a) / fit.b),
        },
        None => Crossing::NotReached,
    };
    Ok(Forecast {
        fit,
        threshold,
        crossing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_fixture() {
        let f = forecast_crossing(&[(1e22, 30.0), (1e24, 50.0)], 60.0).unwrap();
        assert_eq!(f.fit.b, 10.0);
        assert_eq!(f.fit.a, -190.0);
        assert_eq!(f.crossing, Crossing::At { compute: 1e25 });
    }

    #[test]
    fn flat_is_not_reached() {
        let f = forecast_crossing(&[(1e22, 30.0), (1e24, 30.0)], 60.0).unwrap();
        assert_eq!(f.crossing, Crossing::NotReached);
    }

    #[test]
    fn already_reached() {
        let f = forecast_crossing(&[(1e22, 30.0), (1e24, 65.0), (1e23, 61.0)], 60.0).unwrap();
        assert_eq!(f.crossing, Crossing::AlreadyReached { compute: 1e24 });
    }

    #[test]
    fn needs_two_compute_points() {
        assert_eq!(
            fit_scaling(&[(1e22, 30.0), (1e22, 31.0)]),
            Err(IndicatorError::InsufficientData(1))
        );
        assert_eq!(fit_scaling(&[]), Err(IndicatorError::InsufficientData(0)));
    }

    #[test]
    fn duplicates_do_not_move_the_fit() {
        let pts = [(1e21, 22.0), (1e22, 31.0), (1e24, 49.0)];
        let mut dup = pts.to_vec();
        dup.push(pts[1]);
        assert_eq!(
            forecast_crossing(&pts, 60.0).unwrap().crossing,
            forecast_crossing(&dup, 60.0).unwrap().crossing
        );
    }

    #[test]
    fn points_from_measurements() {
        use crate::time::Timestamp;
        let mut m = Measurement::number("k", 30.0, Timestamp(0));
        m.effective_compute = Some(1e22);
        let plain = Measurement::number("k", 40.0, Timestamp(0));
        assert_eq!(capability_points("k", &[m, plain]), vec![(1e22, 30.0)]);
    }
}
