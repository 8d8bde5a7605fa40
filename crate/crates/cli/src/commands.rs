//! Subcommand implementations. Everything writes through [`Streams`] so the
//! commands can be driven from tests without a process.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nuotdr::analytics::{
    dynamic_range, dynamic_range_for_link, measurement_time, nep, nep0, nep_norm, signal_rate, time_ratio,
    two_point_advantage, ConventionalDetector, NepInput,
};
use nuotdr::engine::{
    auto_attenuate, measure_dark_baseline, measure_dead_zone, partial_trace_campaign, run_acquisition_with,
    stitch_traces, AcquisitionOptions, BinStatus, Coverage, PartialTrace, Trace,
};
use nuotdr::fiber::{backscatter_power, BackscatterForm};
use nuotdr::schemes::{
    detection_rate, free_running_threshold, max_gate_frequency, GatingScheme, SchemeKind,
};
use nuotdr::units::{dbm_to_watts, photon_energy, DEFAULT_WAVELENGTH_M};

use crate::cli::{
    AnalyzeCmd, Cli, Command, CompareArgs, DetectorArgs, DynrArgs, NepArgs, PlanArgs, PowerArgs, RatioArgs,
    SimulateArgs, StitchArgs, TimeArgs, TwopointArgs,
};
use crate::config::{load_config, RunMode, SimConfig};
use crate::csvio::{fmt_f64, read_partial, write_trace};
use crate::error::CliError;
use crate::report::{config_report, Report};

/// Standard output and standard error of a command.
pub struct Streams<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

pub fn run(cli: &Cli, io: &mut Streams) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a, io),
        Command::Analyze { what } => match what {
            AnalyzeCmd::Nep(a) => analyze_nep(cli, a, io),
            AnalyzeCmd::Dynr(a) => analyze_dynr(cli, a, io),
            AnalyzeCmd::Time(a) => analyze_time(cli, a, io),
            AnalyzeCmd::Twopoint(a) => analyze_twopoint(cli, a, io),
            AnalyzeCmd::Ratio(a) => analyze_ratio(cli, a, io),
            AnalyzeCmd::Plan(a) => plan(cli, a, io),
        },
        Command::Plan(a) => plan(cli, a, io),
        Command::Compare(a) => compare(cli, a, io),
        Command::Stitch(a) => stitch(cli, a, io),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Write `bytes` to `path`, or to stdout when there is none.
fn emit(path: Option<&Path>, io: &mut Streams, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?);
            w.write_all(bytes)?;
            w.flush()?;
        }
        None => io.out.write_all(bytes)?,
    }
    Ok(())
}

fn optional_config(cli: &Cli) -> Result<Option<SimConfig>, CliError> {
    cli.config.as_deref().map(load_config).transpose()
}

fn apply_overrides(cli: &Cli, mut cfg: SimConfig) -> SimConfig {
    if let Some(seed) = cli.seed {
        cfg.campaign.seed = seed;
        cfg.materialized.campaign.get_or_insert_with(Default::default).seed = Some(seed);
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    cfg
}

// ---------------------------------------------------------------- simulate

/// Result of one configured measurement.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub trace: Trace,
    pub partials: Vec<PartialTrace>,
    pub coverage: Option<Coverage>,
    /// Attenuator setting of a single run.
    pub attenuation_db: Option<f64>,
    /// Laser time spent, including attenuator checks, s.
    pub wall_time_s: f64,
}

impl Outcome {
    pub fn detections(&self) -> u64 {
        self.trace.bins.iter().map(|b| b.detections).sum()
    }

    /// Detections per second of laser time.
    pub fn detection_rate_hz(&self) -> f64 {
        self.detections() as f64 / self.trace.simulated_time_s
    }

    /// Laser time after which the weakest tenth of the bins would reach `floor`,
    /// scaling the run's own SNR by √t.
    pub fn time_to_snr_floor(&self, floor: f64) -> f64 {
        let mut snr: Vec<f64> = self
            .trace
            .bins
            .iter()
            .filter(|b| b.status == BinStatus::Ok)
            .map(|b| b.snr())
            .filter(|s| s.is_finite())
            .collect();
        if snr.is_empty() {
            return f64::INFINITY;
        }
        snr.sort_by(f64::total_cmp);
        let worst = snr[snr.len() / 10];
        if worst <= 0.0 {
            return f64::INFINITY;
        }
        self.trace.simulated_time_s * (floor / worst).powi(2)
    }
}

fn uses_campaign(cfg: &SimConfig) -> bool {
    match cfg.run.mode {
        RunMode::Campaign => true,
        RunMode::Single => false,
        RunMode::Auto => matches!(cfg.scheme.kind, SchemeKind::Basic { .. }) && cfg.run.attenuation_db.is_none(),
    }
}

/// Run the measurement a configuration describes.
pub fn execute(cfg: &SimConfig) -> Result<Outcome, CliError> {
    let seed = cfg.campaign.seed;
    if uses_campaign(cfg) {
        let r = partial_trace_campaign(&cfg.link, &cfg.laser, &cfg.apd, &cfg.scheme, &cfg.campaign)?;
        return Ok(Outcome {
            trace: r.stitched,
            partials: r.partials,
            coverage: Some(r.coverage),
            attenuation_db: None,
            wall_time_s: r.wall_time_simulated_s,
        });
    }
    let att = match cfg.run.attenuation_db {
        Some(a) => a,
        None => auto_attenuate(&cfg.link, &cfg.laser, &cfg.apd, &cfg.scheme, cfg.campaign.target_rate, seed)?,
    };
    let mut opts = AcquisitionOptions::default();
    if cfg.run.dark_run_s > 0.0 {
        opts.dark_baseline =
            Some(measure_dark_baseline(&cfg.link, &cfg.laser, &cfg.apd, &cfg.scheme, cfg.run.dark_run_s, seed)?);
    }
    let trace =
        run_acquisition_with(&cfg.link, &cfg.laser, &cfg.apd, &cfg.scheme, cfg.run.duration_s, att, seed, &opts)?;
    let wall_time_s = trace.simulated_time_s + cfg.run.dark_run_s;
    Ok(Outcome { trace, partials: Vec::new(), coverage: None, attenuation_db: Some(att), wall_time_s })
}

fn status_counts(trace: &Trace) -> [usize; 4] {
    let mut c = [0; 4];
    for b in &trace.bins {
        c[match b.status {
            BinStatus::Ok => 0,
            BinStatus::Saturated => 1,
            BinStatus::BelowDark => 2,
            BinStatus::NoData => 3,
        }] += 1;
    }
    c
}

fn outcome_results(r: &mut Report, cfg: &SimConfig, o: &Outcome) {
    r.result("seed", cfg.campaign.seed as f64, "");
    r.result("pulses", o.trace.pulses as f64, "");
    r.result("simulated laser time", o.trace.simulated_time_s, "s");
    r.result("wall time incl. checks", o.wall_time_s, "s");
    r.result("detections", o.detections() as f64, "");
    r.result("detection rate", o.detection_rate_hz(), "1/s");
    r.result("time to SNR floor (estimate)", o.time_to_snr_floor(cfg.campaign.snr_floor), "s");
    let c = &o.trace.causes;
    r.result("detections from signal", c.signal as f64, "");
    r.result("detections from dark counts", c.dark as f64, "");
    r.result("detections from afterpulses", c.afterpulse as f64, "");
    r.result("detections from charge persistence", c.persistence as f64, "");
    let [ok, sat, below, none] = status_counts(&o.trace);
    r.result("bins ok", ok as f64, "");
    r.result("bins saturated", sat as f64, "");
    r.result("bins below dark level", below as f64, "");
    r.result("bins without data", none as f64, "");
    if let Some(a) = o.attenuation_db {
        r.result("attenuation", a, "dB");
    }
    for (k, p) in o.partials.iter().enumerate() {
        r.note(format!(
            "partial {k}: {:.3}..{:.3} km at {:.2} dB, span {:.2} dB, overlap {:.3} km{}",
            p.start_km(),
            p.end_km(),
            p.attenuation_db,
            p.span_db(),
            p.overlap_span_km,
            if p.floor_reached { ", noise floor reached" } else { "" }
        ));
    }
    match o.coverage {
        Some(Coverage::Complete) => r.note("coverage: complete"),
        Some(Coverage::Partial { unmeasured_from_km }) => {
            r.note(format!("coverage: partial, unmeasured beyond {unmeasured_from_km:.3} km"))
        }
        None => {}
    }
    if sat > 0 {
        r.note("saturated bins carry lower bounds of the power");
    }
}

fn simulate(cli: &Cli, args: &SimulateArgs, io: &mut Streams) -> Result<(), CliError> {
    let path = cli.config.as_deref().ok_or_else(|| usage("simulate needs --config"))?;
    let mut cfg = apply_overrides(cli, load_config(path)?);
    if let Some(kind) = args.scheme {
        let seed = cfg.campaign.seed;
        let format = cfg.format;
        cfg = cfg.with_scheme(kind)?;
        cfg.campaign.seed = seed;
        cfg.format = format;
    }
    if let Some(d) = args.dark_run {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(usage(format!("--dark-run {d} must be >= 0")));
        }
        cfg.run.dark_run_s = d;
        cfg.materialized.run.get_or_insert_with(Default::default).dark_run_s = Some(d);
    }
    let out_path = cli.out.clone().or_else(|| cfg.output_path.clone().map(Into::into));

    let outcome = execute(&cfg)?;
    let mut csv = Vec::new();
    write_trace(&mut csv, &outcome.trace.bins)?;
    emit(out_path.as_deref(), io, &csv)?;
    if let Some(dir) = &args.partials_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        for (k, p) in outcome.partials.iter().enumerate() {
            let mut buf = Vec::new();
            write_trace(&mut buf, &p.bins)?;
            emit(Some(&dir.join(format!("partial_{k}.csv"))), io, &buf)?;
        }
    }

    let mut report = config_report("simulate", &cfg)?;
    outcome_results(&mut report, &cfg, &outcome);
    let text = report.render();
    match &args.report {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        None => io.err.write_all(text.as_bytes())?,
    }

    if let Some(Coverage::Partial { unmeasured_from_km }) = outcome.coverage {
        return Err(CliError::PartialCoverage(unmeasured_from_km));
    }
    let saturated = status_counts(&outcome.trace)[1];
    if saturated > 0 {
        return Err(CliError::Saturation(format!("{saturated} bins saturated; trace written with lower bounds")));
    }
    Ok(())
}

// ---------------------------------------------------------------- analyze

/// A single-row CSV and its human-readable counterpart.
struct Row {
    cols: Vec<(&'static str, String)>,
    text: Vec<String>,
    assumptions: Vec<String>,
}

impl Row {
    fn new() -> Self {
        Self { cols: Vec::new(), text: Vec::new(), assumptions: Vec::new() }
    }

    fn num(&mut self, name: &'static str, v: f64) {
        self.cols.push((name, fmt_f64(v)));
    }

    fn opt(&mut self, name: &'static str, v: Option<f64>) {
        self.cols.push((name, v.map(fmt_f64).unwrap_or_default()));
    }

    fn raw(&mut self, name: &'static str, v: impl ToString) {
        self.cols.push((name, v.to_string()));
    }

    fn say(&mut self, s: impl Into<String>) {
        self.text.push(s.into());
    }

    fn csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.cols.iter().map(|c| c.0))?;
        w.write_record(self.cols.iter().map(|c| c.1.as_str()))?;
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }

    /// CSV to `--out` or stdout; text to stdout when the CSV went to a file, else stderr.
    fn emit(&self, cli: &Cli, io: &mut Streams) -> Result<(), CliError> {
        emit(cli.out.as_deref(), io, &self.csv()?)?;
        let mut text = self.text.join("\n");
        text.push('\n');
        for a in &self.assumptions {
            text.push_str(&format!("assumed: {a}\n"));
        }
        if cli.out.is_some() {
            io.out.write_all(text.as_bytes())?;
        } else {
            io.err.write_all(text.as_bytes())?;
        }
        Ok(())
    }
}

struct Detector {
    efficiency: f64,
    dark_rate_hz: f64,
    photon_energy_j: f64,
}

fn detector(d: &DetectorArgs, cfg: Option<&SimConfig>, row: &mut Row) -> Result<Detector, CliError> {
    let efficiency = d
        .efficiency
        .or(cfg.map(|c| c.apd.efficiency))
        .ok_or_else(|| usage("missing --efficiency (or --config)"))?;
    let dark_rate_hz = d
        .dark_rate_hz
        .or(cfg.map(|c| c.apd.dark_rate_hz))
        .ok_or_else(|| usage("missing --dark-rate-hz (or --config)"))?;
    let photon_energy_j = match (d.wavelength_m, cfg) {
        (Some(l), _) => photon_energy(l),
        (None, Some(c)) => c.apd.photon_energy_j,
        (None, None) => {
            row.assumptions.push(format!("wavelength {DEFAULT_WAVELENGTH_M:e} m"));
            photon_energy(DEFAULT_WAVELENGTH_M)
        }
    };
    Ok(Detector { efficiency, dark_rate_hz, photon_energy_j })
}

fn power(p: &PowerArgs) -> Option<f64> {
    p.power_w.or(p.power_dbm.map(dbm_to_watts))
}

fn pulses_per_point(cfg: &SimConfig) -> f64 {
    crate::report::pulses_per_point(cfg)
}

fn analyze_nep(cli: &Cli, a: &NepArgs, io: &mut Streams) -> Result<(), CliError> {
    let cfg = optional_config(cli)?;
    let mut row = Row::new();
    let d = detector(&a.detector, cfg.as_ref(), &mut row)?;
    let p = power(&a.power).unwrap_or(0.0);
    let sig = signal_rate(d.efficiency, p, d.photon_energy_j);
    let nn = nep_norm(d.efficiency, sig, d.dark_rate_hz, d.photon_energy_j)?;
    let nn0 = nep_norm(d.efficiency, 0.0, d.dark_rate_hz, d.photon_energy_j)?;
    row.num("efficiency", d.efficiency);
    row.num("dark_rate_hz", d.dark_rate_hz);
    row.num("photon_energy_j", d.photon_energy_j);
    row.num("power_w", p);
    row.num("signal_rate_hz", sig);
    row.num("nep_norm_w_per_rthz", nn);
    row.num("nep_norm0_w_per_rthz", nn0);
    row.say(format!("NEP_norm  = {nn:.4e} W/sqrt(Hz) at {p:.4e} W (signal rate {sig:.4e} /s)"));
    row.say(format!("NEP_norm0 = {nn0:.4e} W/sqrt(Hz)"));
    let gate_s = a.gate_s.or(cfg.as_ref().map(|c| c.scheme.gate_width_s));
    let gates = a.gates.or(cfg.as_ref().map(pulses_per_point));
    let (mut n1, mut n0) = (None, None);
    if let (Some(g), Some(w)) = (gates, gate_s) {
        let input = NepInput::from_rates(d.efficiency, sig, d.dark_rate_hz, g, w, d.photon_energy_j);
        n1 = Some(nep(&input)?);
        n0 = Some(nep0(&input)?);
        row.say(format!("NEP  = {:.4e} W, NEP0 = {:.4e} W over {g} gates of {w:.3e} s", n1.unwrap(), n0.unwrap()));
    }
    row.opt("gates", gates);
    row.opt("gate_s", gate_s);
    row.opt("nep_w", n1);
    row.opt("nep0_w", n0);
    row.emit(cli, io)
}

fn analyze_dynr(cli: &Cli, a: &DynrArgs, io: &mut Streams) -> Result<(), CliError> {
    let cfg = optional_config(cli)?;
    let mut row = Row::new();
    if !(a.time_factor > 0.0 && a.time_factor.is_finite()) {
        return Err(usage(format!("--time-factor {} must be > 0", a.time_factor)));
    }
    let nep0_w = match a.nep0_w {
        Some(n) => n / a.time_factor.sqrt(),
        None => {
            let d = detector(&a.detector, cfg.as_ref(), &mut row)?;
            let gates = a
                .gates
                .or(cfg.as_ref().map(pulses_per_point))
                .ok_or_else(|| usage("missing --gates or --nep0-w (or --config)"))?;
            let w = a
                .gate_s
                .or(cfg.as_ref().map(|c| c.scheme.gate_width_s))
                .ok_or_else(|| usage("missing --gate-s or --nep0-w (or --config)"))?;
            let input =
                NepInput::from_rates(d.efficiency, 0.0, d.dark_rate_hz, gates * a.time_factor, w, d.photon_energy_j);
            nep0(&input)?
        }
    };
    let (p_bs0, dr) = match (a.p_bs0_w, cfg.as_ref()) {
        (Some(p), _) => (p, dynamic_range(p, nep0_w)?),
        (None, Some(c)) => {
            row.assumptions.extend(c.assumptions.iter().filter(|s| s.contains("capture ratio")).cloned());
            (
                backscatter_power(&c.link, &c.laser, 0.0, BackscatterForm::Linearized)?,
                dynamic_range_for_link(&c.link, &c.laser, nep0_w)?,
            )
        }
        (None, None) => return Err(usage("missing --p-bs0-w (or --config)")),
    };
    row.num("p_bs0_w", p_bs0);
    row.num("nep0_w", nep0_w);
    row.num("time_factor", a.time_factor);
    row.num("dynamic_range_db", dr);
    row.say(format!("dynamic range = {dr:.3} dB (P_BS0 {p_bs0:.4e} W, NEP0 {nep0_w:.4e} W)"));
    row.emit(cli, io)
}

fn analyze_time(cli: &Cli, a: &TimeArgs, io: &mut Streams) -> Result<(), CliError> {
    let cfg = optional_config(cli)?;
    let mut row = Row::new();
    let p = power(&a.power).ok_or_else(|| usage("missing --power-w or --power-dbm"))?;
    let snr = a
        .snr
        .or(cfg.as_ref().map(|c| c.campaign.snr_floor))
        .ok_or_else(|| usage("missing --snr (or --config)"))?;
    let b = a
        .bandwidth_hz
        .or(cfg.as_ref().map(|c| 1.0 / (2.0 * c.scheme.gate_width_s)))
        .ok_or_else(|| usage("missing --bandwidth-hz (or --config)"))?;
    let f = a
        .f_pulse_hz
        .or(cfg.as_ref().map(|c| c.laser.repetition_hz))
        .ok_or_else(|| usage("missing --f-pulse-hz (or --config)"))?;
    let nn = match a.nep_norm {
        Some(n) => n,
        None => {
            let d = detector(&a.detector, cfg.as_ref(), &mut row)?;
            nep_norm(d.efficiency, signal_rate(d.efficiency, p, d.photon_energy_j), d.dark_rate_hz, d.photon_energy_j)?
        }
    };
    let t = measurement_time(snr, nn, b, p, f)?;
    row.num("snr", snr);
    row.num("bandwidth_hz", b);
    row.num("power_w", p);
    row.num("f_pulse_hz", f);
    row.num("nep_norm_w_per_rthz", nn);
    row.num("time_s", t);
    row.say(format!("time to SNR {snr} = {t:.3} s (NEP_norm {nn:.4e} W/sqrt(Hz), B {b:.3e} Hz, f {f} Hz)"));
    row.emit(cli, io)
}

fn analyze_twopoint(cli: &Cli, a: &TwopointArgs, io: &mut Streams) -> Result<(), CliError> {
    let alpha = two_point_advantage(a.x_db)?;
    let mut row = Row::new();
    row.num("x_db", a.x_db);
    row.num("alpha", alpha);
    row.say(format!("giving up {} dB allows pulses {alpha:.4} times as long (resolution x{:.2})", a.x_db, 1.0 / alpha));
    row.emit(cli, io)
}

fn analyze_ratio(cli: &Cli, a: &RatioArgs, io: &mut Streams) -> Result<(), CliError> {
    let cfg = optional_config(cli)?;
    let mut row = Row::new();
    let pc = match a.pc_nep_norm {
        Some(n) => n,
        None => {
            let d = detector(&a.detector, cfg.as_ref(), &mut row)?;
            let p = power(&a.power).unwrap_or(0.0);
            nep_norm(d.efficiency, signal_rate(d.efficiency, p, d.photon_energy_j), d.dark_rate_hz, d.photon_energy_j)?
        }
    };
    let conv = match (a.conv_nep_norm, a.conv_factor) {
        (Some(n), _) => n,
        (None, Some(k)) => k * pc,
        (None, None) => return Err(usage("missing --conv-nep-norm or --conv-factor")),
    };
    row.assumptions.push("conventional NEP_norm is a user estimate".into());
    let ratio = time_ratio(&ConventionalDetector::new(conv)?, pc)?;
    row.num("conv_nep_norm_w_per_rthz", conv);
    row.num("pc_nep_norm_w_per_rthz", pc);
    row.num("time_ratio", ratio);
    row.say(format!("the conventional receiver needs {ratio:.1} times longer for the same SNR"));
    row.emit(cli, io)
}

// ---------------------------------------------------------------- plan

const TABLE_ACT_MIN: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const TABLE_P_SIG: [f64; 8] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.25, 0.3, 0.5];

fn plan(cli: &Cli, a: &PlanArgs, io: &mut Streams) -> Result<(), CliError> {
    let cfg = optional_config(cli)?;
    let efficiency = a.efficiency.or(cfg.as_ref().map(|c| c.apd.efficiency));
    if a.table {
        return plan_tables(cli, a, efficiency, cfg.as_ref(), io);
    }
    let p = a.p_sig.ok_or_else(|| usage("missing --p-sig"))?;
    let tau = a
        .tau_s
        .or(cfg.as_ref().map(|c| c.scheme.dead_time_s))
        .ok_or_else(|| usage("missing --tau-s (or --config)"))?;
    let act = a.act_min.ok_or_else(|| usage("missing --act-min"))?;
    let mut row = Row::new();
    let gate = match a.gate_s.or(cfg.as_ref().map(|c| c.scheme.gate_width_s)) {
        Some(g) => g,
        None => {
            row.assumptions.push("gate width 1 ns for the 1/gate cap".into());
            1e-9
        }
    };
    let plan = max_gate_frequency(p, tau, act, gate)?;
    row.num("p_sig", p);
    row.num("tau_s", tau);
    row.num("act_min", act);
    row.num("b", -act.ln());
    row.num("continuous_hz", plan.continuous_hz);
    row.num("gates_per_dead_time", plan.gates_per_dead_time);
    row.raw("whole_gates", plan.whole_gates);
    row.num("whole_gate_hz", plan.whole_gate_hz);
    row.num("cap_hz", plan.cap_hz);
    row.raw("free_running", plan.free_running);
    row.say(format!(
        "f_gate,max = {:.4} MHz ({} whole gates per dead time); continuous solution {:.4} MHz (f*tau = {:.3})",
        plan.whole_gate_capped_hz() / 1e6,
        plan.whole_gates,
        plan.continuous_capped_hz() / 1e6,
        plan.gates_per_dead_time
    ));
    if plan.free_running {
        row.say("the 1/gate cap binds: leave the diode armed (free running)");
    }
    let mut thr = None;
    if let Some(eta) = efficiency {
        let hv = cfg.as_ref().map_or_else(|| photon_energy(DEFAULT_WAVELENGTH_M), |c| c.apd.photon_energy_j);
        let t = free_running_threshold(eta, tau, act, hv)?;
        row.say(format!(
            "free running keeps the activation floor below {:.4e} photons/s ({:.4e} W); 1/(eta*tau) = {:.4e} photons/s",
            t.max_flux,
            t.max_power_w,
            1.0 / (eta * tau)
        ));
        thr = Some(t);
    }
    row.opt("efficiency", efficiency);
    row.opt("threshold_flux", efficiency.map(|eta| 1.0 / (eta * tau)));
    row.opt("floor_flux", thr.map(|t| t.max_flux));
    row.emit(cli, io)
}

fn plan_tables(
    cli: &Cli,
    a: &PlanArgs,
    efficiency: Option<f64>,
    cfg: Option<&SimConfig>,
    io: &mut Streams,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    let mut block = |title: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<(), CliError> {
        if !buf.is_empty() {
            buf.extend_from_slice(b"\n\n");
        }
        buf.extend_from_slice(format!("# {title}\n").as_bytes());
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        buf.extend(w.into_inner().map_err(|e| CliError::Io(e.to_string()))?);
        Ok(())
    };

    block(
        "activation floor constants b = -ln(act_min)",
        &["act_min", "b"],
        TABLE_ACT_MIN.iter().map(|&m| vec![fmt_f64(m), fmt_f64(-m.ln())]).collect(),
    )?;

    let mut rows = Vec::new();
    for &p in &TABLE_P_SIG {
        for &m in &TABLE_ACT_MIN {
            // Dead time and gate width only scale the frequencies; f·τ is what the table shows.
            let plan = max_gate_frequency(p, 1.0, m, 1e-300)?;
            rows.push(vec![
                fmt_f64(p),
                fmt_f64(m),
                fmt_f64(plan.gates_per_dead_time),
                plan.whole_gates.to_string(),
            ]);
        }
    }
    block(
        "largest gate frequency times dead time",
        &["p_sig", "act_min", "f_tau_continuous", "f_tau_whole_gates"],
        rows,
    )?;

    if let Some(eta) = efficiency {
        let tau = a
            .tau_s
            .or(cfg.map(|c| c.apd.dead_time_s))
            .ok_or_else(|| usage("--table with --efficiency needs --tau-s (or --config)"))?;
        let rapid = GatingScheme::rapid_gating();
        let rapid_duty = match rapid.kind {
            SchemeKind::RapidGating { f_gate_hz } => f_gate_hz * rapid.gate_width_s,
            _ => unreachable!(),
        };
        let threshold = 1.0 / (eta * tau);
        let mut rows = Vec::new();
        for k in 0..=40 {
            let flux = 10f64.powf(3.0 + 0.15 * k as f64);
            rows.push(vec![
                fmt_f64(flux),
                fmt_f64(detection_rate(eta, flux, 1.0, tau)?),
                fmt_f64(detection_rate(eta, flux, rapid_duty, rapid.dead_time_s)?),
                if flux < threshold { "free_running" } else { "rapid_gating" }.to_string(),
            ]);
        }
        block(
            &format!(
                "detection rate vs photon flux; free running tau {tau:.3e} s, rapid gating duty {rapid_duty} tau {:.3e} s, threshold {threshold:.4e} photons/s",
                rapid.dead_time_s
            ),
            &["flux_per_s", "free_running_hz", "rapid_gating_hz", "preferred"],
            rows,
        )?;
    }
    emit(cli.out.as_deref(), io, &buf)
}

// ---------------------------------------------------------------- compare

fn delay_key(delay_s: f64) -> i64 {
    (delay_s * 1e12).round() as i64
}

fn compare(cli: &Cli, a: &CompareArgs, io: &mut Streams) -> Result<(), CliError> {
    let ca = apply_overrides(cli, load_config(&a.a)?);
    let cb = apply_overrides(cli, load_config(&a.b)?);
    if ca.link != cb.link {
        return Err(CliError::Comparison(format!(
            "{} and {} describe different fibers",
            a.a.display(),
            a.b.display()
        )));
    }
    let oa = execute(&ca)?;
    let ob = execute(&cb)?;

    let mut joined: BTreeMap<i64, [Option<&nuotdr::engine::TraceBin>; 2]> = BTreeMap::new();
    for (side, o) in [&oa, &ob].into_iter().enumerate() {
        for b in &o.trace.bins {
            joined.entry(delay_key(b.delay_s)).or_default()[side] = Some(b);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "delay_s",
        "distance_km",
        "a_count_rate",
        "a_trace_db",
        "a_snr",
        "b_count_rate",
        "b_trace_db",
        "b_snr",
        "delta_trace_db",
    ])?;
    for pair in joined.values() {
        let any = pair[0].or(pair[1]).expect("joined entry has one side");
        let cells = |b: Option<&nuotdr::engine::TraceBin>| match b {
            Some(b) => [fmt_f64(b.count_rate()), fmt_f64(b.db_value), fmt_f64(b.snr())],
            None => Default::default(),
        };
        let delta = match pair {
            [Some(x), Some(y)] => fmt_f64(y.db_value - x.db_value),
            _ => String::new(),
        };
        let [ra, da, sa] = cells(pair[0]);
        let [rb, db, sb] = cells(pair[1]);
        w.write_record([fmt_f64(any.delay_s), fmt_f64(any.distance_km), ra, da, sa, rb, db, sb, delta])?;
    }
    emit(cli.out.as_deref(), io, &w.into_inner().map_err(|e| CliError::Io(e.to_string()))?)?;

    let floor = ca.campaign.snr_floor;
    let mut r = Report::new("compare");
    r.assumptions = ca.assumptions.clone();
    for x in &cb.assumptions {
        if !r.assumptions.contains(x) {
            r.assumptions.push(x.clone());
        }
    }
    r.note(format!("A = {} ({}), B = {} ({})", a.a.display(), ca.scheme.kind.name(), a.b.display(), cb.scheme.kind.name()));
    let (ra, rb) = (oa.detection_rate_hz(), ob.detection_rate_hz());
    r.result("A detection rate", ra, "1/s");
    r.result("B detection rate", rb, "1/s");
    r.result("delta detection rate (B - A)", rb - ra, "1/s");
    let (ta, tb) = (oa.time_to_snr_floor(floor), ob.time_to_snr_floor(floor));
    r.result("A time to SNR floor", ta, "s");
    r.result("B time to SNR floor", tb, "s");
    r.result("delta time to SNR floor (B - A)", if ta == tb { 0.0 } else { tb - ta }, "s");
    if let Some(ev) = a.event_km {
        let da = measure_dead_zone(&oa.trace, ev, a.threshold_db)?;
        let db = measure_dead_zone(&ob.trace, ev, a.threshold_db)?;
        r.result("A dead zone", da.length_km, "km");
        r.result("B dead zone", db.length_km, "km");
        r.result("delta dead zone (B - A)", db.length_km - da.length_km, "km");
    }
    let text = r.render();
    if cli.out.is_some() {
        io.out.write_all(text.as_bytes())?;
    } else {
        io.err.write_all(text.as_bytes())?;
    }
    Ok(())
}

// ---------------------------------------------------------------- stitch

fn stitch(cli: &Cli, a: &StitchArgs, io: &mut Streams) -> Result<(), CliError> {
    let mut partials = Vec::new();
    for p in &a.files {
        let f = File::open(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        partials.push(read_partial(f).map_err(|e| match e {
            CliError::Io(m) => CliError::Io(format!("{}: {m}", p.display())),
            other => other,
        })?);
    }
    let trace = stitch_traces(&partials)?;
    let mut csv = Vec::new();
    write_trace(&mut csv, &trace.bins)?;
    emit(cli.out.as_deref(), io, &csv)?;
    if cli.verbose {
        writeln!(io.err, "stitched {} partial traces into {} bins", partials.len(), trace.bins.len())?;
    }
    Ok(())
}
