//! Human-readable run reports: configuration echo, derived quantities,
//! results and the list of assumed defaults.

use std::fmt::Write as _;

use nuotdr::analytics::{dynamic_range_for_link, nep0, nep_norm0, NepInput};
use nuotdr::schemes::{build_schedule, SchemeKind};

use crate::config::SimConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
    pub unit: &'static str,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub title: String,
    pub inputs: String,
    pub derived: Vec<Quantity>,
    pub results: Vec<Quantity>,
    pub notes: Vec<String>,
    pub assumptions: Vec<String>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), ..Self::default() }
    }

    pub fn derived(&mut self, name: impl Into<String>, value: f64, unit: &'static str) {
        self.derived.push(Quantity { name: name.into(), value, unit });
    }

    pub fn result(&mut self, name: impl Into<String>, value: f64, unit: &'static str) {
        self.results.push(Quantity { name: name.into(), value, unit });
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "== {} ==", self.title);
        if !self.inputs.is_empty() {
            let _ = writeln!(s, "\n-- inputs --");
            s.push_str(&self.inputs);
            if !self.inputs.ends_with('\n') {
                s.push('\n');
            }
        }
        for (head, list) in [("derived", &self.derived), ("results", &self.results)] {
            if list.is_empty() {
                continue;
            }
            let _ = writeln!(s, "\n-- {head} --");
            let width = list.iter().map(|q| q.name.len()).max().unwrap_or(0);
            for q in list {
                let _ = writeln!(s, "{:<width$}  {:.6e} {}", q.name, q.value, q.unit);
            }
        }
        if !self.notes.is_empty() {
            let _ = writeln!(s, "\n-- notes --");
            for n in &self.notes {
                let _ = writeln!(s, "{n}");
            }
        }
        let _ = writeln!(s, "\n-- assumptions --");
        if self.assumptions.is_empty() {
            let _ = writeln!(s, "none");
        }
        for a in &self.assumptions {
            let _ = writeln!(s, "- {a}");
        }
        s
    }
}

/// Pulses spent on every sampling point of a basic-scheme measurement.
pub fn pulses_per_point(cfg: &SimConfig) -> f64 {
    match cfg.scheme.kind {
        SchemeKind::Basic { gates_per_point: Some(n), .. } => n as f64,
        _ => (cfg.campaign.dwell_per_bin_s * cfg.laser.repetition_hz).round().max(1.0),
    }
}

/// Report skeleton for a configuration: echo, schedule and detector figures.
pub fn config_report(title: &str, cfg: &SimConfig) -> Result<Report, CliError> {
    let mut r = Report::new(title);
    r.inputs = cfg.echo();
    r.assumptions = cfg.assumptions.clone();
    let schedule = build_schedule(&cfg.scheme, &cfg.laser, &cfg.link)?;
    let w = cfg.scheme.gate_width_s;
    let apd = &cfg.apd;
    r.derived("link length", cfg.link.length_km(), "km");
    r.derived("round trip", cfg.link.round_trip_s(), "s");
    r.derived("pulse rate", cfg.laser.repetition_hz, "Hz");
    r.derived("gate frequency", cfg.scheme.gate_frequency(&cfg.laser), "Hz");
    r.derived("duty cycle", schedule.duty_cycle, "");
    r.derived("trace bins", schedule.bins() as f64, "");
    r.derived("gates per pulse (max)", schedule.gates_per_pulse_max() as f64, "");
    r.derived("photon energy", apd.photon_energy_j, "J");
    r.derived("dark probability per gate", apd.dark_probability(w), "");
    r.derived("NEP_norm0", nep_norm0(apd.efficiency, apd.dark_rate_hz, apd.photon_energy_j)?, "W/sqrt(Hz)");
    if cfg.scheme.dead_time_s > 0.0 {
        r.derived(
            "free-running flux limit 1/(eta*tau)",
            1.0 / (apd.efficiency * cfg.scheme.dead_time_s),
            "photons/s",
        );
    }
    if matches!(cfg.scheme.kind, SchemeKind::Basic { .. }) {
        let n = pulses_per_point(cfg);
        let input = NepInput::from_rates(apd.efficiency, 0.0, apd.dark_rate_hz, n, w, apd.photon_energy_j);
        r.derived("pulses per sampling point", n, "");
        if apd.dark_rate_hz > 0.0 {
            let n0 = nep0(&input)?;
            r.derived("NEP0 per sampling point", n0, "W");
            r.derived("predicted dynamic range", dynamic_range_for_link(&cfg.link, &cfg.laser, n0)?, "dB");
            r.note("predicted dynamic range uses the link's capture ratio and scattering coefficient");
        }
    }
    Ok(r)
}
