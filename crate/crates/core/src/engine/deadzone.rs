use serde::{Deserialize, Serialize};

use super::Trace;
use crate::error::{Error, Result};

/// Minimum distance the trace must extend past the event, km.
const MIN_TAIL_KM: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadZone {
    /// Distance from the event to the first bin from which the trace stays within the threshold of the fit, km.
    pub length_km: f64,
    /// The trace never settled within the measured span; `length_km` is the span.
    pub unrecovered: bool,
    /// Slope of the post-event backscatter fit, dB/km (negative for a decaying trace).
    pub fit_slope_db_per_km: f64,
    pub fit_intercept_db: f64,
    /// Decay rate of the excess above the fit (5log of the excess power), dB/km.
    pub tail_decay_db_per_km: Option<f64>,
}

/// Least-squares line through `(x, y)`: (slope, intercept).
pub(crate) fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Dead zone behind the event at `event_km`: the post-event backscatter is
/// fitted on the far half of the remaining trace, and the dead zone ends at the
/// first bin after the last one lying more than `threshold_db` above the fit.
pub fn measure_dead_zone(trace: &Trace, event_km: f64, threshold_db: f64) -> Result<DeadZone> {
    if !(threshold_db > 0.0) {
        return Err(Error::Domain(format!("threshold {threshold_db} dB must be > 0")));
    }
    let post: Vec<(f64, f64)> = trace
        .bins
        .iter()
        .filter(|b| b.distance_km > event_km && !b.db_value.is_nan())
        .map(|b| (b.distance_km, b.db_value))
        .collect();
    let last = post.last().map_or(f64::NEG_INFINITY, |p| p.0);
    if last < event_km + MIN_TAIL_KM {
        return Err(Error::Domain(format!(
            "trace ends {:.3} km after the event, {MIN_TAIL_KM} km needed",
            last - event_km
        )));
    }
    let far_from = event_km + (last - event_km) / 2.0;
    let far: Vec<(f64, f64)> = post
        .iter()
        .copied()
        .filter(|p| p.0 >= far_from && p.1.is_finite())
        .collect();
    let (slope, intercept) =
        linear_fit(&far).ok_or_else(|| Error::Domain("too few usable bins in the fit window".into()))?;
    let fit = |z: f64| intercept + slope * z;

    let above = |p: &(f64, f64)| p.1.is_finite() && p.1 - fit(p.0) > threshold_db;
    let (length_km, unrecovered) = match post.iter().rposition(above) {
        None => (0.0, false),
        Some(i) if i + 1 == post.len() => (last - event_km, true),
        Some(i) => (post[i + 1].0 - event_km, false),
    };

    // Excess power above the fit inside the dead zone, first bin (straddling the event) left out.
    let tail: Vec<(f64, f64)> = post
        .iter()
        .skip(1)
        .take_while(|p| p.0 < event_km + length_km)
        .filter(|p| above(p))
        .map(|p| {
            let ratio = 10f64.powf((p.1 - fit(p.0)) / 5.0);
            (p.0, fit(p.0) + 5.0 * (ratio - 1.0).log10())
        })
        .collect();
    let tail_decay_db_per_km = if tail.len() >= 3 {
        linear_fit(&tail).map(|(s, _)| -s)
    } else {
        None
    };
    Ok(DeadZone {
        length_km,
        unrecovered,
        fit_slope_db_per_km: slope,
        fit_intercept_db: intercept,
        tail_decay_db_per_km,
    })
}
