use std::fs;

use nuotdr_cli::{exit, CliError};
use proptest::prelude::*;

mod common;
use common::{nuotdr, shipped, MINIMAL};

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

/// A 100 km / 0.5 dB/km campaign fed by a laser of `peak_w`.
fn campaign(peak_w: f64) -> String {
    format!(
        "[[fiber.segments]]\nlength_km = 100.0\nattenuation_db_per_km = 0.5\n\n\
         [laser]\npeak_power_w = {peak_w:e}\npulse_width_s = 1e-6\n\n\
         [apd]\nefficiency = 0.1\ndark_rate_hz = 20.0\ndead_time_s = 0.0\n\
         [apd.afterpulse]\na0 = 0.0\n[apd.persistence]\nkappa = 0.0\n\n\
         [scheme]\ngate_width_s = 1e-6\ndelay_step_s = 10e-6\ngates_per_point = 100000\n\n\
         [run]\nmode = \"campaign\"\n\n[campaign]\noverlap_km = 12.0\n"
    )
}

#[test]
fn codes_are_stable() {
    assert_eq!(
        [exit::OK, exit::USAGE, exit::CONFIG, exit::CAMPAIGN, exit::SATURATION, exit::PARTIAL_COVERAGE, exit::COMPARISON, exit::IO, exit::STITCH],
        [0, 2, 3, 4, 5, 6, 7, 8, 9]
    );
}

#[test]
fn every_error_path_maps_to_its_code() {
    let dir = tempfile::tempdir().unwrap();
    let scheme = "[scheme]\ndelay_step_s = 1e-6\ngates_per_point = 2000\n";
    let ok = write(&dir, "ok.toml", &format!("{MINIMAL}\n{scheme}\n[run]\nattenuation_db = 55.0\n"));
    let bad = write(&dir, "bad.toml", &MINIMAL.replace("[apd]\n", "[apd]\nefficiency = 2.0\n"));
    let unreachable = write(&dir, "dim.toml", &campaign(1e-12));
    let weak = write(&dir, "weak.toml", &campaign(1e-4));
    let bright = write(&dir, "bright.toml", &format!("{MINIMAL}\n{scheme}\n[run]\nattenuation_db = 0.0\n"));
    let other = write(&dir, "other.toml", &MINIMAL.replace("10.0", "12.0"));
    let trace = dir.path().join("t.csv").to_string_lossy().into_owned();
    let missing = dir.path().join("missing.csv").to_string_lossy().into_owned();
    let free = shipped("low_flux_free_running.toml");

    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["simulate", "--config", &ok, "--out", &trace], exit::OK),
        (vec!["simulate"], exit::USAGE),
        (vec!["simulate", "--config", &ok, "--scheme", "quantum"], exit::USAGE),
        (vec!["analyze", "time"], exit::USAGE),
        (vec!["frobnicate"], exit::USAGE),
        (vec!["simulate", "--config", &bad], exit::CONFIG),
        (vec!["analyze", "twopoint", "--x-db", "-1"], exit::CONFIG),
        (vec!["simulate", "--config", &unreachable], exit::CAMPAIGN),
        (vec!["simulate", "--config", &bright, "--out", &trace], exit::SATURATION),
        (vec!["simulate", "--config", &weak, "--out", &trace], exit::PARTIAL_COVERAGE),
        (vec!["compare", &free, &other], exit::COMPARISON),
        (vec!["simulate", "--config", &missing], exit::IO),
        (vec!["stitch", &missing], exit::IO),
        (vec!["stitch", &trace, &trace], exit::STITCH),
    ];
    for (args, code) in cases {
        let r = nuotdr(&args);
        assert_eq!(r.code, code, "{args:?}\nstdout: {}\nstderr: {}", r.out, r.err);
    }
}

#[test]
fn partial_coverage_still_writes_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let weak = write(&dir, "weak.toml", &campaign(1e-4));
    let out = dir.path().join("t.csv");
    let r = nuotdr(&["simulate", "--config", &weak, "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, exit::PARTIAL_COVERAGE);
    assert!(r.err.contains("unmeasured beyond"), "{}", r.err);
    let text = fs::read_to_string(out).unwrap();
    assert!(text.lines().count() > 10);
}

proptest! {
    #[test]
    fn error_kinds_map_to_distinct_nonzero_codes(msg in ".{0,40}", km in 0.0f64..1e3) {
        let all = [
            CliError::Usage(msg.clone()),
            CliError::Config(msg.clone()),
            CliError::Campaign(msg.clone()),
            CliError::Saturation(msg.clone()),
            CliError::PartialCoverage(km),
            CliError::Comparison(msg.clone()),
            CliError::Io(msg.clone()),
            CliError::Stitch(msg.clone()),
        ];
        let codes: Vec<i32> = all.iter().map(CliError::exit_code).collect();
        prop_assert_eq!(codes, vec![2, 3, 4, 5, 6, 7, 8, 9]);
    }
}
