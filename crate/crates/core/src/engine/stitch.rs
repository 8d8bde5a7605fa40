use std::collections::HashMap;

use super::{CauseCounts, PartialTrace, Trace};
use crate::error::{Error, Result};

/// Bins of different partial traces are matched on their delay, to the picosecond.
fn delay_key(delay_s: f64) -> i64 {
    (delay_s * 1e12).round() as i64
}

const MIN_OVERLAP_BINS: usize = 3;

/// Join partial traces into one. Each partial is shifted onto the already
/// stitched prefix by the inverse-variance weighted mean dB difference over
/// their shared bins; in the overlap the later partial's bins are kept. The
/// uncertainty of every offset accumulates into the bins' `offset_sigma_db`.
pub fn stitch_traces(partials: &[PartialTrace]) -> Result<Trace> {
    let first = partials.first().ok_or_else(|| Error::Stitch("no partial traces".into()))?;
    let mut bins = first.bins.clone();
    for (k, p) in partials.iter().enumerate().skip(1) {
        let start = p
            .bins
            .first()
            .ok_or_else(|| Error::Stitch(format!("partial {k} is empty")))?;
        let prefix_start = bins.first().map_or(f64::NAN, |b| b.delay_s);
        if !(start.delay_s > prefix_start) {
            return Err(Error::Stitch(format!("partial {k} does not start after the preceding ones")));
        }
        let known: HashMap<i64, (f64, f64)> = bins
            .iter()
            .filter(|b| b.db_value.is_finite())
            .map(|b| (delay_key(b.delay_s), (b.db_value, b.counting_db_sigma())))
            .collect();
        // (difference, variance) per shared bin.
        let diffs: Vec<(f64, f64)> = p
            .bins
            .iter()
            .filter(|b| b.db_value.is_finite())
            .filter_map(|b| {
                known
                    .get(&delay_key(b.delay_s))
                    .map(|&(v, s)| (v - b.db_value, s * s + b.counting_db_sigma().powi(2)))
            })
            .collect();
        if diffs.len() < MIN_OVERLAP_BINS {
            return Err(Error::Stitch(format!(
                "partial {k} shares {} usable bins with the preceding trace, {MIN_OVERLAP_BINS} needed",
                diffs.len()
            )));
        }
        let (offset, offset_var) = if diffs.iter().all(|d| d.1 > 0.0 && d.1.is_finite()) {
            let w: f64 = diffs.iter().map(|d| 1.0 / d.1).sum();
            (diffs.iter().map(|d| d.0 / d.1).sum::<f64>() / w, 1.0 / w)
        } else {
            // Without usable intervals fall back to the plain mean.
            (diffs.iter().map(|d| d.0).sum::<f64>() / diffs.len() as f64, 0.0)
        };
        let cut = delay_key(start.delay_s);
        let carried = bins
            .iter()
            .rev()
            .find(|b| delay_key(b.delay_s) < cut)
            .map_or(0.0, |b| b.offset_sigma_db);
        let sigma = (carried * carried + offset_var).sqrt();
        bins.retain(|b| delay_key(b.delay_s) < cut);
        bins.extend(p.bins.iter().cloned().map(|mut b| {
            b.db_value += offset;
            b.provenance = k;
            b.offset_sigma_db = b.offset_sigma_db.hypot(sigma);
            b
        }));
    }
    let reference = first
        .bins
        .iter()
        .find(|b| b.has_estimate())
        .map_or(f64::NAN, |b| b.estimated_power_w);
    Ok(Trace {
        bins,
        gate_width_s: 0.0,
        simulated_time_s: 0.0,
        pulses: 0,
        reference_power_w: reference,
        index_activation: Vec::new(),
        causes: CauseCounts::default(),
    })
}
