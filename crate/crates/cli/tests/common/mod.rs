#![allow(dead_code)]

use std::path::PathBuf;

pub struct Run {
    pub code: i32,
    pub out: String,
    pub err: String,
}

/// Run the CLI in-process.
pub fn nuotdr(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("nuotdr").chain(args.iter().copied());
    let code = nuotdr_cli::main_with(argv, &mut out, &mut err);
    Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

pub fn shipped(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name].iter().collect();
    p.to_string_lossy().into_owned()
}

/// Parse the single data row of an `analyze` CSV into (column, value) pairs.
pub fn row(csv_text: &str) -> Vec<(String, String)> {
    let mut lines = csv_text.lines();
    let head: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    let vals: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    assert_eq!(head.len(), vals.len());
    head.into_iter().zip(vals).collect()
}

pub fn col(csv_text: &str, name: &str) -> f64 {
    row(csv_text)
        .into_iter()
        .find(|(k, _)| k == name)
        .unwrap_or_else(|| panic!("no column {name} in {csv_text}"))
        .1
        .parse()
        .unwrap()
}

pub const MINIMAL: &str = "\
[[fiber.segments]]
length_km = 10.0

[laser]
peak_power_w = 0.1
pulse_width_s = 100e-9

[apd]
";
