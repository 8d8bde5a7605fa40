//! Partial-trace campaign: measure the trace in attenuation-stepped pieces
//! that each start near detector saturation and stop at the noise floor.

use serde::{Deserialize, Serialize};

use super::{gate_mean_power, run_acquisition_with, stitch_traces, AcquisitionOptions, CauseCounts, Trace, TraceBin};
use crate::detector::{power_for_probability, ApdModel};
use crate::error::{invalid, Error, Result};
use crate::fiber::{FiberLink, LaserConfig};
use crate::schemes::{build_schedule, GateSchedule, GatingScheme, SchemeKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    /// Laser time spent on every sampling point, s.
    pub dwell_per_bin_s: f64,
    /// Bin SNR under which the partial trace is considered to have reached the noise floor.
    pub snr_floor: f64,
    /// Consecutive bins below the floor that end a partial trace.
    pub floor_bins: usize,
    /// Distance by which the delay is moved back before the next partial trace, km.
    pub overlap_km: f64,
    /// Detection probability aimed for in the first bin of each partial trace.
    pub target_rate: f64,
    pub seed: u64,
    pub max_partials: usize,
    /// Pulses of the short check run that confirms each attenuator setting.
    pub verify_pulses: u64,
    /// Sampling points simulated between two floor checks.
    pub chunk_bins: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            dwell_per_bin_s: 1.0,
            snr_floor: 4.0,
            floor_bins: 3,
            overlap_km: 5.0,
            target_rate: 0.9,
            seed: 0,
            max_partials: 16,
            verify_pulses: 4000,
            chunk_bins: 8,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dwell_per_bin_s > 0.0 && self.dwell_per_bin_s.is_finite()) {
            return Err(invalid("campaign", format!("dwell {} s must be > 0", self.dwell_per_bin_s)));
        }
        if !(self.snr_floor > 0.0) {
            return Err(invalid("campaign", format!("SNR floor {} must be > 0", self.snr_floor)));
        }
        if self.floor_bins == 0 || self.chunk_bins == 0 || self.max_partials == 0 {
            return Err(invalid("campaign", "floor_bins, chunk_bins and max_partials must be >= 1"));
        }
        if !(self.overlap_km >= 0.0 && self.overlap_km.is_finite()) {
            return Err(invalid("campaign", format!("overlap {} km must be >= 0", self.overlap_km)));
        }
        if !(self.target_rate > 0.0 && self.target_rate < 1.0) {
            return Err(invalid("campaign", format!("target rate {} must lie in (0, 1)", self.target_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialTrace {
    pub bins: Vec<TraceBin>,
    pub attenuation_db: f64,
    /// Length shared with the preceding partial trace, km.
    pub overlap_span_km: f64,
    /// The partial trace ended on the noise floor rather than at the end of the link.
    pub floor_reached: bool,
}

impl PartialTrace {
    pub fn start_km(&self) -> f64 {
        self.bins.first().map_or(f64::NAN, |b| b.distance_km)
    }

    pub fn end_km(&self) -> f64 {
        self.bins.last().map_or(f64::NAN, |b| b.distance_km)
    }

    /// Measured trace span from the first to the last bin with an estimate, dB.
    pub fn span_db(&self) -> f64 {
        let mut it = self.bins.iter().filter(|b| b.db_value.is_finite());
        match (it.next(), it.next_back()) {
            (Some(a), Some(b)) => a.db_value - b.db_value,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coverage {
    Complete,
    /// The floor was reached with no attenuation left to remove.
    Partial { unmeasured_from_km: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub stitched: Trace,
    pub partials: Vec<PartialTrace>,
    pub wall_time_simulated_s: f64,
    pub seed: u64,
    pub coverage: Coverage,
}

/// Attenuation that brings the first gate of `frame` to `target_rate` on the
/// analytic model; `None` when the target cannot be reached even at 0 dB.
fn analytic_attenuation(
    link: &FiberLink,
    laser: &LaserConfig,
    apd: &ApdModel,
    schedule: &GateSchedule,
    frame: usize,
    target_rate: f64,
) -> Result<Option<f64>> {
    let gate = schedule.frames[frame]
        .gates
        .first()
        .ok_or_else(|| Error::Schedule("empty frame".into()))?;
    let w = schedule.gate_width_s;
    let available = gate_mean_power(link, laser, gate.start_s, w, 0.0);
    let needed = power_for_probability(apd, target_rate, w)?;
    if available < needed * (1.0 - 1e-9) {
        return Ok(None);
    }
    Ok(Some((10.0 * (available / needed).log10()).max(0.0)))
}

#[allow(clippy::too_many_arguments)]
fn verify_rate(
    link: &FiberLink,
    laser: &LaserConfig,
    apd: &ApdModel,
    scheme: &GatingScheme,
    frame: usize,
    attenuation_db: f64,
    target_rate: f64,
    pulses: u64,
    seed: u64,
    stream: String,
) -> Result<f64> {
    let opts = AcquisitionOptions {
        stream,
        frames: Some(frame..frame + 1),
        pulses_per_frame: Some(pulses),
        ..AcquisitionOptions::default()
    };
    let t = run_acquisition_with(link, laser, apd, scheme, 1.0, attenuation_db, seed, &opts)?;
    let rate = t.bins[0].count_rate();
    if !((rate - target_rate).abs() <= 0.05) {
        return Err(Error::Campaign(format!(
            "attenuator check failed: measured rate {rate:.3} vs target {target_rate:.3} at {attenuation_db:.2} dB"
        )));
    }
    Ok(rate)
}

/// Attenuation (dB) that makes the first measured bin fire with probability
/// `target_rate`, confirmed by a short Monte Carlo run.
pub fn auto_attenuate(
    link: &FiberLink,
    laser: &LaserConfig,
    apd: &ApdModel,
    scheme: &GatingScheme,
    target_rate: f64,
    seed: u64,
) -> Result<f64> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::Domain(format!("target rate {target_rate} must lie in (0, 1)")));
    }
    let schedule = build_schedule(scheme, laser, link)?;
    let att = analytic_attenuation(link, laser, apd, &schedule, 0, target_rate)?.ok_or_else(|| {
        Error::Campaign(format!(
            "target rate {target_rate} unreachable: first bin stays below it without attenuation"
        ))
    })?;
    verify_rate(link, laser, apd, scheme, 0, att, target_rate, 4000, seed, "auto".into())?;
    Ok(att)
}

/// First index of a run of `run` consecutive bins whose SNR is below `floor`.
fn find_floor(bins: &[TraceBin], floor: f64, run: usize) -> Option<usize> {
    let mut count = 0;
    for (i, b) in bins.iter().enumerate() {
        if b.snr() < floor {
            count += 1;
            if count == run {
                return Some(i + 1 - run);
            }
        } else {
            count = 0;
        }
    }
    None
}

/// Measure the whole link in partial traces with the basic scheme and stitch them.
pub fn partial_trace_campaign(
    link: &FiberLink,
    laser: &LaserConfig,
    apd: &ApdModel,
    scheme: &GatingScheme,
    config: &CampaignConfig,
) -> Result<CampaignResult> {
    config.validate()?;
    if !matches!(scheme.kind, SchemeKind::Basic { .. }) {
        return Err(invalid("campaign", format!("partial traces need the basic scheme, not {}", scheme.kind.name())));
    }
    let schedule = build_schedule(scheme, laser, link)?;
    let nbins = schedule.bins();
    let pulses = match scheme.kind {
        SchemeKind::Basic { gates_per_point: Some(n), .. } => n,
        _ => ((config.dwell_per_bin_s * laser.repetition_hz).round() as u64).max(1),
    };
    let seed = config.seed;

    let mut partials: Vec<PartialTrace> = Vec::new();
    let mut wall = 0.0;
    let mut pulses_total = 0u64;
    let mut causes = CauseCounts::default();
    let mut start = 0usize;
    let mut prev: Option<(f64, usize)> = None; // (attenuation, floor bin index)
    let coverage = loop {
        let k = partials.len();
        if k == config.max_partials {
            return Err(Error::Campaign(format!("no full coverage after {k} partial traces")));
        }
        let att = match analytic_attenuation(link, laser, apd, &schedule, start, config.target_rate)? {
            Some(a) => {
                verify_rate(
                    link,
                    laser,
                    apd,
                    scheme,
                    start,
                    a,
                    config.target_rate,
                    config.verify_pulses,
                    seed,
                    format!("p{k}/verify"),
                )?;
                wall += config.verify_pulses as f64 / laser.repetition_hz;
                a
            }
            None if k == 0 => {
                return Err(Error::Campaign(format!(
                    "target rate {} unreachable: first bin stays below it without attenuation",
                    config.target_rate
                )))
            }
            None => 0.0,
        };
        if let Some((prev_att, prev_floor)) = prev {
            if att >= prev_att - 1e-9 {
                break Coverage::Partial {
                    unmeasured_from_km: link.distance_at_delay(schedule.bin_centers_s[prev_floor]),
                };
            }
        }

        let mut bins: Vec<TraceBin> = Vec::new();
        let mut floor = None;
        let mut next = start;
        while next < nbins && floor.is_none() {
            let end = (next + config.chunk_bins).min(nbins);
            let opts = AcquisitionOptions {
                stream: format!("p{k}"),
                frames: Some(next..end),
                pulses_per_frame: Some(pulses),
                ..AcquisitionOptions::default()
            };
            let t = run_acquisition_with(link, laser, apd, scheme, 1.0, att, seed, &opts)?;
            wall += t.simulated_time_s;
            pulses_total += t.pulses;
            causes.merge(&t.causes);
            bins.extend(t.bins);
            next = end;
            floor = find_floor(&bins, config.snr_floor, config.floor_bins);
        }
        for b in &mut bins {
            b.provenance = k;
        }
        let overlap_span_km = partials.last().map_or(0.0, |p: &PartialTrace| {
            (p.end_km() - bins[0].distance_km).max(0.0)
        });
        match floor {
            None => {
                partials.push(make_partial(bins, att, overlap_span_km, false));
                break Coverage::Complete;
            }
            Some(0) => {
                return Err(Error::Campaign(format!(
                    "partial trace {k} starts below the SNR floor at {:.3} km",
                    link.distance_at_delay(schedule.bin_centers_s[start])
                )))
            }
            Some(rel) => {
                let floor_abs = start + rel;
                bins.truncate(rel);
                partials.push(make_partial(bins, att, overlap_span_km, true));
                if let Some((_, prev_floor)) = prev {
                    if floor_abs <= prev_floor {
                        break Coverage::Partial {
                            unmeasured_from_km: link.distance_at_delay(schedule.bin_centers_s[prev_floor]),
                        };
                    }
                }
                let z_floor = link.distance_at_delay(schedule.bin_centers_s[floor_abs]);
                let z_back = z_floor - config.overlap_km;
                let mut new_start = schedule
                    .bin_centers_s
                    .iter()
                    .position(|&d| link.distance_at_delay(d) >= z_back - 1e-9)
                    .unwrap_or(floor_abs);
                new_start = new_start.min(floor_abs.saturating_sub(3));
                if new_start <= start {
                    return Err(Error::Campaign(format!(
                        "partial trace {k} spans fewer bins than the overlap needs"
                    )));
                }
                prev = Some((att, floor_abs));
                start = new_start;
            }
        }
    };
    let mut stitched = stitch_traces(&partials)?;
    stitched.simulated_time_s = wall;
    stitched.pulses = pulses_total;
    stitched.causes = causes;
    stitched.gate_width_s = schedule.gate_width_s;
    Ok(CampaignResult {
        stitched,
        partials,
        wall_time_simulated_s: wall,
        seed,
        coverage,
    })
}

fn make_partial(bins: Vec<TraceBin>, attenuation_db: f64, overlap_span_km: f64, floor_reached: bool) -> PartialTrace {
    let mut t = Trace {
        bins,
        gate_width_s: 0.0,
        simulated_time_s: 0.0,
        pulses: 0,
        reference_power_w: f64::NAN,
        index_activation: Vec::new(),
        causes: Default::default(),
    };
    t.rereference();
    PartialTrace {
        bins: t.bins,
        attenuation_db,
        overlap_span_km,
        floor_reached,
    }
}
