//! Run reports: one JSON record plus plot-ready CSV tables per run.
//!
//! Everything a number in a table depends on — seed, config echo, code
//! version, admissibility verdict — travels inside the same report, so any
//! CSV row can be traced back to what produced it. Identical (seed, config)
//! pairs produce byte-identical tables and JSON except for `wall_clock_s`,
//! the one deliberately volatile field.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use vplab_core::regimes::Schedules;

use crate::config::ExperimentConfig;
use crate::error::LabError;
use crate::Result;

/// `version+git` of the binary that produced a report.
pub fn code_version() -> String {
    format!("{}+{}", env!("CARGO_PKG_VERSION"), env!("VPLAB_GIT_HASH"))
}

/// A rectangular numeric table with named columns; serialized as CSV with a
/// declared header and mirrored into the JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "table {} declares {} columns",
            self.name,
            self.columns.len()
        );
        self.rows.push(row);
    }

    /// One column as a vector, by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A named pass/fail verdict with its evidence.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub details: String,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub code_version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    /// Schedule verdict at the configured regime point.
    pub admissibility: Option<Schedules>,
    /// True when an inadmissible point was run anyway.
    pub forced: bool,
    pub wall_clock_s: f64,
    /// Total integrator steps across all runs in the experiment.
    pub step_count: u64,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    /// Free-form measured scalars (fitted slopes, calibrated constants, …).
    pub diagnostics: serde_json::Map<String, serde_json::Value>,
    #[serde(skip)]
    started: Instant,
}

impl RunReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        RunReport {
            experiment: config.experiment.to_string(),
            code_version: code_version(),
            seed: config.seed,
            config: config.clone(),
            admissibility: None,
            forced: false,
            wall_clock_s: 0.0,
            step_count: 0,
            tables: Vec::new(),
            checks: Vec::new(),
            diagnostics: serde_json::Map::new(),
            started: Instant::now(),
        }
    }

    pub fn push_table(&mut self, table: Table) {
        self.tables.push(table);
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn check(&mut self, name: &str, pass: bool, details: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            details: details.into(),
        });
    }

    /// Record a measured scalar (or any JSON value) under `key`.
    pub fn diag(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("diagnostic value serializes");
        self.diagnostics.insert(key.to_string(), v);
    }

    pub fn diag_f64(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).and_then(|v| v.as_f64())
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Stamp the wall clock; call once, when the experiment body is done.
    pub fn finish(&mut self) {
        self.wall_clock_s = self.started.elapsed().as_secs_f64();
    }

    /// Write `report.json` plus one `<table>.csv` per table into `dir`
    /// (created if missing). Returns the report path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        for t in &self.tables {
            t.write_csv(&dir.join(format!("{}.csv", t.name)))?;
        }
        let path = dir.join("report.json");
        let json = serde_json::to_string_pretty(self).map_err(LabError::Json)?;
        fs::write(&path, json + "\n")?;
        Ok(path)
    }

    /// One line per check, for terminal summaries.
    pub fn render_checks(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = if c.pass { "PASS" } else { "FAIL" };
            out.push_str(&format!("  [{tag}] {}: {}\n", c.name, c.details));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::from_toml("experiment = \"lemmas\"\nseed = 5\n").unwrap()
    }

    #[test]
    fn tables_enforce_their_column_count() {
        let mut t = Table::new("demo", &["n", "w1"]);
        t.push(vec![1.0, 2.0]);
        assert_eq!(t.column("w1"), Some(vec![2.0]));
        assert_eq!(t.column("nope"), None);
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            t.push(vec![1.0]);
        }));
        assert!(result.is_err());
    }

    #[test]
    fn report_artifacts_land_in_the_run_directory() {
        let dir = std::env::temp_dir().join("vplab_report_test");
        let _ = fs::remove_dir_all(&dir);

        let mut rep = RunReport::new(&cfg());
        let mut t = Table::new("sweep", &["x", "y"]);
        t.push(vec![0.5, 1.5]);
        t.push(vec![1.0, 2.5]);
        rep.push_table(t);
        rep.check("monotone", true, "2 points increasing");
        rep.diag("slope", 2.0);
        rep.finish();
        let path = rep.write(&dir).unwrap();

        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(json["experiment"], "lemmas");
        assert_eq!(json["seed"], 5);
        assert_eq!(json["diagnostics"]["slope"], 2.0);
        assert_eq!(json["checks"][0]["pass"], true);
        assert!(json["code_version"].as_str().unwrap().starts_with("0.1.0+"));

        let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("x,y"));
        assert_eq!(lines.count(), 2);

        assert!(rep.passed());
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn failed_checks_sink_the_verdict() {
        let mut rep = RunReport::new(&cfg());
        rep.check("a", true, "fine");
        rep.check("b", false, "broken");
        assert!(!rep.passed());
        let text = rep.render_checks();
        assert!(text.contains("[PASS] a"));
        assert!(text.contains("[FAIL] b: broken"));
    }
}
