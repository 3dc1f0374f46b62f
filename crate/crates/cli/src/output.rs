//! Artifact writing: results.json, series CSVs, report.txt.
//!
//! JSON objects serialize with sorted keys, so a rerun with the same seed
//! produces byte-identical files apart from the timestamp field.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use crate::config::Scenario;

/// Default-output-directory environment variable, lowest-precedence source
/// after the built-in default.
pub const OUTPUT_DIR_ENV: &str = "COLLAPSE_LAB_OUT";
pub const DEFAULT_OUTPUT_DIR: &str = "collapse-lab-out";

/// Everything an experiment produces: a summary object for results.json,
/// named CSV series, and the human-readable report body.
pub struct ScenarioOutput {
    pub results: Value,
    pub series: Vec<(String, String)>,
    pub report: String,
}

/// Precedence: per-scenario config key, then --output-dir, then the
/// environment variable, then the built-in default.
pub fn resolve_output_dir(scenario_dir: Option<&str>, flag: Option<&Path>) -> PathBuf {
    if let Some(d) = scenario_dir {
        return PathBuf::from(d);
    }
    if let Some(d) = flag {
        return d.to_path_buf();
    }
    match std::env::var(OUTPUT_DIR_ENV) {
        Ok(d) if !d.is_empty() => PathBuf::from(d),
        _ => PathBuf::from(DEFAULT_OUTPUT_DIR),
    }
}

pub fn version_block() -> Value {
    json!({
        "collapse-core": collapse_core::version(),
        "collapse-cli": env!("CARGO_PKG_VERSION"),
    })
}

fn timestamp_unix_s() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Pretty JSON with a trailing newline. Key order is alphabetical (the
/// underlying maps are ordered), independent of insertion order.
pub fn to_json_bytes(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json serialization cannot fail");
    s.push('\n');
    s
}

/// Write one scenario's artifacts under `dir/<scenario name>/`. Returns the
/// paths written. Directories are created only here, so a run that produces
/// no scenarios touches nothing.
pub fn write_scenario_artifacts(
    dir: &Path,
    scenario: &Scenario,
    out: &ScenarioOutput,
) -> io::Result<Vec<PathBuf>> {
    let sub = dir.join(&scenario.name);
    fs::create_dir_all(&sub)?;
    let mut written = Vec::new();

    let results = json!({
        "scenario": scenario.name,
        "experiment": scenario.experiment.name(),
        "seed": scenario.seed,
        "parameters": scenario.raw,
        "results": out.results,
        "versions": version_block(),
        "timestamp_unix_s": timestamp_unix_s(),
    });
    let path = sub.join("results.json");
    fs::write(&path, to_json_bytes(&results))?;
    written.push(path);

    for (name, csv) in &out.series {
        let path = sub.join(name);
        fs::write(&path, csv)?;
        written.push(path);
    }

    let path = sub.join("report.txt");
    fs::write(&path, &out.report)?;
    written.push(path);
    Ok(written)
}

/// A CSV builder that enforces the one formatting rule: header row first,
/// then rows of 17-significant-digit floats.
pub struct CsvBuilder {
    columns: usize,
    buf: String,
}

impl CsvBuilder {
    pub fn new(header: &[&str]) -> CsvBuilder {
        CsvBuilder {
            columns: header.len(),
            buf: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.columns, "csv row width");
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            self.buf.push_str(&format!("{v:.16e}"));
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_print_17_significant_digits() {
        let mut b = CsvBuilder::new(&["t", "x"]);
        b.row(&[0.5, 1.0 / 3.0]);
        let s = b.finish();
        assert_eq!(s, "t,x\n5.0000000000000000e-1,3.3333333333333331e-1\n");
    }

    #[test]
    fn output_dir_precedence() {
        // no env manipulation here: scenario key and flag dominate anyway
        assert_eq!(
            resolve_output_dir(Some("from_scenario"), Some(Path::new("from_flag"))),
            PathBuf::from("from_scenario")
        );
        assert_eq!(
            resolve_output_dir(None, Some(Path::new("from_flag"))),
            PathBuf::from("from_flag")
        );
    }

    #[test]
    fn json_key_order_is_sorted_not_insertion() {
        let v = json!({"zebra": 1, "alpha": 2});
        let s = to_json_bytes(&v);
        assert!(s.find("alpha").unwrap() < s.find("zebra").unwrap());
    }
}
