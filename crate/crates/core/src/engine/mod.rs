//! Monte Carlo trace acquisition.
//!
//! Laser pulses are replayed against a gate schedule. For each scheduled gate
//! the detector either is still dead (the gate is skipped) or is armed and
//! fires with the probability given by the summed Poisson hazards of signal,
//! dark counts, trapped carriers and charge persistence. Counts are binned by
//! delay and inverted to optical power per bin.

mod campaign;
mod deadzone;
mod stitch;

pub use campaign::{auto_attenuate, partial_trace_campaign, CampaignConfig, CampaignResult, Coverage, PartialTrace};
pub use deadzone::{measure_dead_zone, DeadZone};
pub use stitch::stitch_traces;

use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{
    estimate_power, excess_hazard, persistence_injection, saturated_lower_bound, sample_gate, ApdModel, ApdState,
    Cause, GateHazards,
};
use crate::error::{Error, Result};
use crate::fiber::{incident_power, FiberLink, LaserConfig};
use crate::rng::substream;
use crate::schemes::{build_schedule, GateSchedule, GatingScheme, SchemeKind};
use crate::units::{db_loss_factor, five_log, AFTERPULSE_REFERENCE_GATE_S};

/// Target number of simulated gates per work unit for schemes whose gates share a timeline.
const GATES_PER_UNIT: u64 = 1 << 20;
const EXCESS_CAP: f64 = 1.0 - 1e-12;
/// Excess probabilities whose gate hazard falls below this are dropped.
const NEGLIGIBLE_HAZARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinStatus {
    Ok,
    /// No gate was armed in this bin.
    NoData,
    /// Every armed gate fired; the power is a lower bound.
    Saturated,
    /// Detections did not exceed the expected dark counts.
    BelowDark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceBin {
    /// Centre of the bin, s after the pulse.
    pub delay_s: f64,
    pub distance_km: f64,
    pub gates_applied: u64,
    pub gates_activated: u64,
    pub detections: u64,
    pub expected_dark: f64,
    /// Power on the detector (after the attenuator), W. NaN without data.
    pub estimated_power_w: f64,
    pub power_interval_w: (f64, f64),
    /// 5·log10 of the power relative to the trace reference.
    pub db_value: f64,
    pub attenuation_db: f64,
    pub status: BinStatus,
    /// Index of the partial trace the bin comes from.
    pub provenance: usize,
    /// 1σ uncertainty of the dB offset applied when stitching, dB.
    #[serde(default)]
    pub offset_sigma_db: f64,
}

impl TraceBin {
    /// Bin SNR `(N_det − N_dc) / √N_det`.
    pub fn snr(&self) -> f64 {
        if self.detections == 0 {
            return 0.0;
        }
        (self.detections as f64 - self.expected_dark) / (self.detections as f64).sqrt()
    }

    /// Detections per armed gate.
    pub fn count_rate(&self) -> f64 {
        if self.gates_activated == 0 {
            f64::NAN
        } else {
            self.detections as f64 / self.gates_activated as f64
        }
    }

    /// Half width of the ±1σ counting interval on the 5log scale, dB.
    pub fn counting_db_sigma(&self) -> f64 {
        let (lo, hi) = self.power_interval_w;
        if !(lo > 0.0) || !hi.is_finite() {
            return f64::INFINITY;
        }
        0.5 * five_log(hi / lo)
    }

    /// Counting uncertainty combined with the stitching offset uncertainty, dB.
    pub fn db_sigma(&self) -> f64 {
        self.counting_db_sigma().hypot(self.offset_sigma_db)
    }

    pub fn has_estimate(&self) -> bool {
        matches!(self.status, BinStatus::Ok | BinStatus::Saturated) && self.estimated_power_w > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IndexActivation {
    pub applied: u64,
    pub activated: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CauseCounts {
    pub signal: u64,
    pub dark: u64,
    pub afterpulse: u64,
    pub persistence: u64,
}

impl CauseCounts {
    fn add(&mut self, c: Cause) {
        match c {
            Cause::Signal => self.signal += 1,
            Cause::Dark => self.dark += 1,
            Cause::Afterpulse => self.afterpulse += 1,
            Cause::Persistence => self.persistence += 1,
        }
    }

    fn merge(&mut self, o: &CauseCounts) {
        self.signal += o.signal;
        self.dark += o.dark;
        self.afterpulse += o.afterpulse;
        self.persistence += o.persistence;
    }

    pub fn total(&self) -> u64 {
        self.signal + self.dark + self.afterpulse + self.persistence
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub bins: Vec<TraceBin>,
    pub gate_width_s: f64,
    /// Laser time spent on the acquisition, s.
    pub simulated_time_s: f64,
    pub pulses: u64,
    /// Power that maps to 0 dB.
    pub reference_power_w: f64,
    /// Applied / armed gate counts per position within a pulse (index 1 first).
    pub index_activation: Vec<IndexActivation>,
    pub causes: CauseCounts,
}

impl Trace {
    /// Recompute every `db_value` relative to the first bin holding an estimate.
    pub fn rereference(&mut self) {
        let reference = self
            .bins
            .iter()
            .find(|b| b.has_estimate())
            .map(|b| b.estimated_power_w)
            .unwrap_or(f64::NAN);
        self.reference_power_w = reference;
        for b in &mut self.bins {
            b.db_value = bin_db(b, reference);
        }
    }
}

fn bin_db(b: &TraceBin, reference: f64) -> f64 {
    match b.status {
        BinStatus::NoData => f64::NAN,
        BinStatus::BelowDark => f64::NEG_INFINITY,
        _ if b.estimated_power_w > 0.0 => five_log(b.estimated_power_w / reference),
        _ => f64::NEG_INFINITY,
    }
}

#[derive(Debug, Clone, Default)]
pub struct AcquisitionOptions {
    /// Prefix of the RNG stream names; runs with different tags are independent.
    pub stream: String,
    /// Simulate only these frames of the schedule (basic scheme: sampling points).
    pub frames: Option<Range<usize>>,
    /// Fixed pulse count per frame, overriding the duration.
    pub pulses_per_frame: Option<u64>,
    /// Measured dark-count probability per armed gate for every bin, replacing the analytic value.
    pub dark_baseline: Option<Vec<f64>>,
    /// Keep the laser dark (dark-baseline runs).
    pub laser_off: bool,
}

/// Optical power on the detector as a function of delay, for one pulse.
struct Illumination<'a> {
    link: &'a FiberLink,
    laser: &'a LaserConfig,
    factor: f64,
    round_trip: f64,
    step: f64,
}

impl<'a> Illumination<'a> {
    fn new(link: &'a FiberLink, laser: &'a LaserConfig, attenuation_db: f64, laser_off: bool) -> Self {
        Self {
            link,
            laser,
            factor: if laser_off { 0.0 } else { db_loss_factor(attenuation_db) },
            round_trip: link.round_trip_s(),
            step: laser.pulse_width_s / 4.0,
        }
    }

    fn at(&self, t: f64) -> f64 {
        if self.factor == 0.0 || t < 0.0 || t > self.round_trip {
            return 0.0;
        }
        incident_power(self.link, self.laser, t).unwrap_or(0.0) * self.factor
    }

    /// Piecewise-constant sampling of `[a, b]` at the midpoints of steps no longer than a quarter pulse.
    fn pieces(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let len = (b - a).max(0.0);
        let n = if len == 0.0 { 0 } else { ((len / self.step).ceil() as usize).max(1) };
        let h = if n == 0 { 0.0 } else { len / n as f64 };
        (0..n).map(move |k| (self.at(a + (k as f64 + 0.5) * h), h))
    }

    fn mean(&self, a: f64, b: f64) -> f64 {
        let len = b - a;
        if len <= 0.0 {
            return self.at(a);
        }
        self.pieces(a, b).map(|(p, h)| p * h).sum::<f64>() / len
    }
}

/// Mean optical power reaching the detector during a gate, W.
pub fn gate_mean_power(link: &FiberLink, laser: &LaserConfig, gate_start_s: f64, gate_s: f64, attenuation_db: f64) -> f64 {
    Illumination::new(link, laser, attenuation_db, false).mean(gate_start_s, gate_start_s + gate_s)
}

/// Evolution of the detector excess over an interval in which the diode is not armed.
#[derive(Debug, Clone, Copy)]
struct Idle {
    trap: f64,
    decay: f64,
    inject: f64,
}

fn idle_map(apd: &ApdModel, light: &Illumination, a: f64, b: f64, illuminated: bool) -> Idle {
    let len = (b - a).max(0.0);
    let trap = (-len / apd.afterpulse.tau_trap_s).exp();
    let gamma = apd.persistence.gamma_hz;
    if !illuminated || apd.persistence.kappa == 0.0 {
        return Idle { trap, decay: (-gamma * len).exp(), inject: 0.0 };
    }
    let (mut decay, mut inject) = (1.0, 0.0);
    for (p, h) in light.pieces(a, b) {
        let d = (-gamma * h).exp();
        decay *= d;
        inject = inject * d + persistence_injection(apd, p, h);
    }
    Idle { trap, decay, inject }
}

#[derive(Debug, Clone)]
struct GateTiming {
    start: f64,
    bin: usize,
    index: u32,
    pre: Idle,
    /// Idle map over the gate itself, used when the gate is skipped.
    inside: Idle,
    signal: f64,
    dark: f64,
    p_static: f64,
}

#[derive(Debug, Clone)]
struct FrameTable {
    gates: Vec<GateTiming>,
    tail: Idle,
}

struct Engine<'a> {
    apd: &'a ApdModel,
    width: f64,
    m: f64,
    dead_time: f64,
    period: f64,
    tables: Vec<FrameTable>,
}

fn build_tables(
    schedule: &GateSchedule,
    frames: &Range<usize>,
    apd: &ApdModel,
    light: &Illumination,
) -> Vec<FrameTable> {
    let w = schedule.gate_width_s;
    let build = |f: usize| {
        let frame = &schedule.frames[f];
        let mut prev_end = 0.0;
        let gates = frame
            .gates
            .iter()
            .map(|g| {
                let power = light.mean(g.start_s, g.start_s + w);
                let signal = apd.signal_hazard(power, w);
                let dark = apd.dark_hazard(w);
                let timing = GateTiming {
                    start: g.start_s,
                    bin: g.bin,
                    index: g.index,
                    pre: idle_map(apd, light, prev_end, g.start_s, true),
                    inside: idle_map(apd, light, g.start_s, g.start_s + w, true),
                    signal,
                    dark,
                    p_static: -(-(signal + dark)).exp_m1(),
                };
                prev_end = g.start_s + w;
                timing
            })
            .collect();
        FrameTable {
            gates,
            tail: idle_map(apd, light, prev_end, schedule.period_s, true),
        }
    };
    frames.clone().into_par_iter().map(build).collect()
}

#[derive(Debug, Clone, Default)]
struct UnitCounts {
    /// Per gate of the frame: (applied, activated, detections).
    gates: Vec<(u64, u64, u64)>,
    causes: CauseCounts,
}

impl<'a> Engine<'a> {
    fn run_unit(&self, table: &FrameTable, pulses: u64, stream: &str, seed: u64) -> UnitCounts {
        let mut rng = substream(seed, stream);
        let mut cause_rng = substream(seed, &format!("{stream}/cause"));
        let mut counts = UnitCounts {
            gates: vec![(0, 0, 0); table.gates.len()],
            causes: CauseCounts::default(),
        };
        let a0 = self.apd.afterpulse.a0;
        let trap_floor = NEGLIGIBLE_HAZARD / self.m;
        let (mut trap, mut pers) = (0.0f64, 0.0f64);
        // Relative to the start of the current pulse period.
        let mut dead_until = f64::NEG_INFINITY;
        let slack = 1e-6 * self.width;
        for _ in 0..pulses {
            for (gi, g) in table.gates.iter().enumerate() {
                trap *= g.pre.trap;
                pers = pers * g.pre.decay + g.pre.inject;
                let c = &mut counts.gates[gi];
                c.0 += 1;
                // Drawn for every scheduled gate so that runs differing only in
                // detector physics consume the same numbers gate by gate.
                let u: f64 = rng.random();
                if g.start + slack < dead_until {
                    trap *= g.inside.trap;
                    pers = pers * g.inside.decay + g.inside.inject;
                    continue;
                }
                c.1 += 1;
                let hazards = if trap == 0.0 && pers == 0.0 {
                    None
                } else {
                    Some(GateHazards {
                        signal: g.signal,
                        dark: g.dark,
                        afterpulse: excess_hazard(trap, self.m),
                        persistence: excess_hazard(pers, self.m),
                    })
                };
                let p = hazards.map_or(g.p_static, |h| h.probability());
                trap *= g.inside.trap;
                pers *= g.inside.decay;
                if u < p {
                    c.2 += 1;
                    let hz = hazards.unwrap_or(GateHazards {
                        signal: g.signal,
                        dark: g.dark,
                        ..GateHazards::default()
                    });
                    counts.causes.add(hz.cause(cause_rng.random()));
                    trap = (trap + a0).min(EXCESS_CAP);
                    dead_until = g.start + self.width + self.dead_time;
                }
                if trap < trap_floor {
                    trap = 0.0;
                }
                if pers < trap_floor {
                    pers = 0.0;
                }
            }
            trap *= table.tail.trap;
            pers = pers * table.tail.decay + table.tail.inject;
            if trap < trap_floor {
                trap = 0.0;
            }
            if pers < trap_floor {
                pers = 0.0;
            }
            dead_until -= self.period;
        }
        counts
    }
}

/// Simulate `duration_s` of laser time against `scheme` with the given
/// attenuator setting and return one bin per scheduled delay.
pub fn run_acquisition(
    link: &FiberLink,
    laser: &LaserConfig,
    apd: &ApdModel,
    scheme: &GatingScheme,
    duration_s: f64,
    attenuation_db: f64,
    seed: u64,
) -> Result<Trace> {
    run_acquisition_with(link, laser, apd, scheme, duration_s, attenuation_db, seed, &AcquisitionOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn run_acquisition_with(
    link: &FiberLink,
    laser: &LaserConfig,
    apd: &ApdModel,
    scheme: &GatingScheme,
    duration_s: f64,
    attenuation_db: f64,
    seed: u64,
    opts: &AcquisitionOptions,
) -> Result<Trace> {
    apd.validate()?;
    if opts.pulses_per_frame.is_none() && !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::Domain(format!("duration {duration_s} s must be > 0")));
    }
    if !(attenuation_db >= 0.0 && attenuation_db.is_finite()) {
        return Err(Error::Domain(format!("attenuation {attenuation_db} dB must be >= 0")));
    }
    let schedule = build_schedule(scheme, laser, link)?;
    let frames = opts.frames.clone().unwrap_or(0..schedule.frames.len());
    if frames.is_empty() || frames.end > schedule.frames.len() {
        return Err(Error::Schedule(format!(
            "frame range {frames:?} outside schedule of {} frames",
            schedule.frames.len()
        )));
    }
    let per_frame = match (opts.pulses_per_frame, scheme.kind) {
        (Some(n), _) => n,
        (None, SchemeKind::Basic { gates_per_point: Some(n), .. }) => n,
        (None, _) => {
            let total = (duration_s * laser.repetition_hz).round() as u64;
            (total / frames.len() as u64).max(1)
        }
    };
    if per_frame == 0 {
        return Err(Error::Domain("at least one pulse per frame is required".into()));
    }

    let mut apd_run = *apd;
    apd_run.dead_time_s = scheme.dead_time_s;
    let light = Illumination::new(link, laser, attenuation_db, opts.laser_off);
    let engine = Engine {
        apd: &apd_run,
        width: schedule.gate_width_s,
        m: schedule.gate_width_s / AFTERPULSE_REFERENCE_GATE_S,
        dead_time: scheme.dead_time_s,
        period: schedule.period_s,
        tables: build_tables(&schedule, &frames, &apd_run, &light),
    };

    // Work units: (frame offset, first pulse, pulses, stream name).
    let stream = if opts.stream.is_empty() { "acq" } else { opts.stream.as_str() };
    let mut units = Vec::new();
    for (k, f) in frames.clone().enumerate() {
        if matches!(scheme.kind, SchemeKind::Basic { .. }) {
            units.push((k, per_frame, format!("{stream}/bin/{f}")));
        } else {
            let gates = engine.tables[k].gates.len().max(1) as u64;
            let chunk = (GATES_PER_UNIT / gates).max(1);
            let mut first = 0;
            let mut c = 0;
            while first < per_frame {
                let n = chunk.min(per_frame - first);
                units.push((k, n, format!("{stream}/frame/{f}/chunk/{c}")));
                first += n;
                c += 1;
            }
        }
    }
    let results: Vec<(usize, UnitCounts)> = units
        .par_iter()
        .map(|(k, n, name)| (*k, engine.run_unit(&engine.tables[*k], *n, name, seed)))
        .collect();

    let nbins = schedule.bins();
    let mut applied = vec![0u64; nbins];
    let mut activated = vec![0u64; nbins];
    let mut detections = vec![0u64; nbins];
    let mut touched = vec![false; nbins];
    let mut index_activation: Vec<IndexActivation> = Vec::new();
    let mut causes = CauseCounts::default();
    for (k, unit) in &results {
        let table = &engine.tables[*k];
        for (g, c) in table.gates.iter().zip(&unit.gates) {
            applied[g.bin] += c.0;
            activated[g.bin] += c.1;
            detections[g.bin] += c.2;
            touched[g.bin] = true;
            let i = g.index as usize - 1;
            if index_activation.len() <= i {
                index_activation.resize(i + 1, IndexActivation::default());
            }
            index_activation[i].applied += c.0;
            index_activation[i].activated += c.1;
        }
        causes.merge(&unit.causes);
    }

    if let Some(base) = &opts.dark_baseline {
        if base.len() != nbins {
            return Err(Error::Domain(format!(
                "dark baseline has {} bins, schedule has {nbins}",
                base.len()
            )));
        }
    }
    let w = schedule.gate_width_s;
    let mut bins = Vec::new();
    for b in (0..nbins).filter(|&b| touched[b]) {
        let delay = schedule.bin_centers_s[b];
        let dark_p = match &opts.dark_baseline {
            Some(base) => base[b],
            None => apd.dark_probability(w),
        };
        let expected_dark = dark_p * activated[b] as f64;
        let mut bin = TraceBin {
            delay_s: delay,
            distance_km: link.distance_at_delay(delay),
            gates_applied: applied[b],
            gates_activated: activated[b],
            detections: detections[b],
            expected_dark,
            estimated_power_w: f64::NAN,
            power_interval_w: (f64::NAN, f64::NAN),
            db_value: f64::NAN,
            attenuation_db,
            status: BinStatus::NoData,
            provenance: 0,
            offset_sigma_db: 0.0,
        };
        if activated[b] > 0 {
            match estimate_power(apd, detections[b], expected_dark, activated[b], w) {
                Ok(e) => {
                    bin.estimated_power_w = e.power_w;
                    bin.power_interval_w = e.interval;
                    bin.status = if e.probability > 0.0 { BinStatus::Ok } else { BinStatus::BelowDark };
                }
                Err(Error::Saturated { .. }) => {
                    let lb = saturated_lower_bound(apd, expected_dark, activated[b], w)?;
                    bin.estimated_power_w = lb;
                    bin.power_interval_w = (lb, f64::INFINITY);
                    bin.status = BinStatus::Saturated;
                }
                Err(e) => return Err(e),
            }
        }
        bins.push(bin);
    }
    let mut trace = Trace {
        bins,
        gate_width_s: w,
        simulated_time_s: (per_frame * frames.len() as u64) as f64 / laser.repetition_hz,
        pulses: per_frame * frames.len() as u64,
        reference_power_w: f64::NAN,
        index_activation,
        causes,
    };
    trace.rereference();
    Ok(trace)
}

/// Dark-count probability per armed gate for every bin, measured with the laser off.
pub fn measure_dark_baseline(
    link: &FiberLink,
    laser: &LaserConfig,
    apd: &ApdModel,
    scheme: &GatingScheme,
    duration_s: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let opts = AcquisitionOptions {
        stream: "dark".into(),
        laser_off: true,
        ..AcquisitionOptions::default()
    };
    let trace = run_acquisition_with(link, laser, apd, scheme, duration_s, 0.0, seed, &opts)?;
    Ok(trace.bins.iter().map(|b| b.count_rate()).collect())
}

/// Number of pulses after which a single gate at `gate_start_s` first reaches
/// the bin SNR `snr_target`, or `None` within `max_pulses`.
#[allow(clippy::too_many_arguments)]
pub fn pulses_to_snr(
    link: &FiberLink,
    laser: &LaserConfig,
    apd: &ApdModel,
    gate_start_s: f64,
    gate_s: f64,
    attenuation_db: f64,
    snr_target: f64,
    max_pulses: u64,
    seed: u64,
) -> Result<Option<u64>> {
    apd.validate()?;
    laser.validate(link)?;
    let power = gate_mean_power(link, laser, gate_start_s, gate_s, attenuation_db);
    let dark_per_gate = apd.dark_probability(gate_s);
    let mut rng = substream(seed, "snr");
    let mut state = ApdState::fresh();
    let period = laser.period_s();
    let mut det = 0u64;
    for n in 1..=max_pulses {
        let t = (n - 1) as f64 * period + gate_start_s;
        if t >= state.dead_until && sample_gate(apd, &mut state, power, t, gate_s, &mut rng)?.detected {
            det += 1;
        }
        if det > 0 {
            let snr = (det as f64 - dark_per_gate * n as f64) / (det as f64).sqrt();
            if snr >= snr_target {
                return Ok(Some(n));
            }
        }
    }
    Ok(None)
}
