//! Result rows, their CSV and JSON encodings, and per-point summaries.
//!
//! CSV columns, in order: `policy, function, n, d, nu, delta_spec, delta,
//! seed, trial, energy, latency_slots, latency_bound, forwarding_slots,
//! max_degree, violations, verified, repairs, fallbacks, wall_time_ms,
//! status`. Absent optional values are empty fields.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fit::bootstrap_mean_ci;
use crate::error::{Error, Result};

/// Measurements of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub policy: String,
    pub function: String,
    pub n: usize,
    pub d: usize,
    pub nu: f64,
    /// The budget as configured, e.g. `n^0.5`.
    pub delta_spec: String,
    /// The budget resolved for this trial.
    pub delta: f64,
    pub seed: u64,
    pub trial: usize,
    pub energy: Option<f64>,
    pub latency_slots: Option<usize>,
    /// Guaranteed makespan, when the policy has one.
    pub latency_bound: Option<f64>,
    /// Length of the clique forwarding stage.
    pub forwarding_slots: Option<usize>,
    /// Maximum degree of the dependency graph.
    pub max_degree: Option<usize>,
    pub violations: usize,
    pub verified: bool,
    pub repairs: usize,
    /// Relay paths found by the heuristic because the exact search was too costly.
    pub fallbacks: usize,
    pub wall_time_ms: Option<f64>,
    /// `ok`, `infeasible: ...` or `error: ...`.
    pub status: String,
}

impl ResultRow {
    pub const COLUMNS: [&'static str; 20] = [
        "policy",
        "function",
        "n",
        "d",
        "nu",
        "delta_spec",
        "delta",
        "seed",
        "trial",
        "energy",
        "latency_slots",
        "latency_bound",
        "forwarding_slots",
        "max_degree",
        "violations",
        "verified",
        "repairs",
        "fallbacks",
        "wall_time_ms",
        "status",
    ];

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Accepted rows are model-valid, verified and within their bound.
    pub fn is_accepted(&self) -> bool {
        self.is_ok()
            && self.violations == 0
            && self.verified
            && match (self.latency_slots, self.latency_bound) {
                (Some(l), Some(b)) => l as f64 <= b,
                _ => true,
            }
    }
}

/// Table encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// `.json` selects JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Appends rows to a CSV file as they become available.
pub struct CsvSink {
    wtr: csv::Writer<BufWriter<File>>,
    path: std::path::PathBuf,
}

impl CsvSink {
    /// Creates the file and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
        wtr.write_record(ResultRow::COLUMNS)?;
        wtr.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self {
            wtr,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, rows: &[ResultRow]) -> Result<()> {
        for r in rows {
            self.wtr.serialize(r)?;
        }
        self.wtr.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_results(rows: &[ResultRow], path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Csv => CsvSink::create(path)?.append(rows),
        Format::Json => {
            let mut w = create(path)?;
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
        }
    }
}

/// Reads a table, choosing the format from the extension.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match Format::from_path(path) {
        Format::Csv => {
            let mut rdr = csv::Reader::from_reader(file);
            rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
        }
        Format::Json => Ok(serde_json::from_reader(std::io::BufReader::new(file))?),
    }
}

/// Per-point aggregate over accepted trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub function: String,
    pub d: usize,
    pub nu: f64,
    pub delta_spec: String,
    pub n: usize,
    pub trials: usize,
    pub mean_delta: f64,
    pub mean_energy: f64,
    pub energy_ci_lo: f64,
    pub energy_ci_hi: f64,
    pub mean_latency: f64,
    pub max_latency: usize,
}

/// Groups rows by `(policy, function, d, nu, delta_spec, n)` in order of
/// first appearance; means carry 95% bootstrap intervals.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    type Key = (String, String, usize, u64, String, usize);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: std::collections::HashMap<Key, Vec<&ResultRow>> = Default::default();
    for r in rows.iter().filter(|r| r.is_ok() && r.energy.is_some()) {
        let key = (r.policy.clone(), r.function.clone(), r.d, r.nu.to_bits(), r.delta_spec.clone(), r.n);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let energies: Vec<f64> = g.iter().filter_map(|r| r.energy).collect();
            let ci = bootstrap_mean_ci(&energies, 1000, 0).expect("group is nonempty");
            let lat: Vec<usize> = g.iter().filter_map(|r| r.latency_slots).collect();
            let m = g.len() as f64;
            SummaryRow {
                policy: key.0,
                function: key.1,
                d: key.2,
                nu: f64::from_bits(key.3),
                delta_spec: key.4,
                n: key.5,
                trials: g.len(),
                mean_delta: g.iter().map(|r| r.delta).sum::<f64>() / m,
                mean_energy: ci.mean,
                energy_ci_lo: ci.lo,
                energy_ci_hi: ci.hi,
                mean_latency: lat.iter().sum::<usize>() as f64 / lat.len().max(1) as f64,
                max_latency: lat.iter().copied().max().unwrap_or(0),
            }
        })
        .collect()
}

/// Summary rows as CSV text.
pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        wtr.write_record([
            "policy",
            "function",
            "d",
            "nu",
            "delta_spec",
            "n",
            "trials",
            "mean_delta",
            "mean_energy",
            "energy_ci_lo",
            "energy_ci_hi",
            "mean_latency",
            "max_latency",
        ])?;
    }
    for r in rows {
        wtr.serialize(r)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn row(n: usize, energy: f64) -> ResultRow {
        ResultRow {
            policy: "pi_agg".into(),
            function: "sum".into(),
            n,
            d: 2,
            nu: 4.0,
            delta_spec: "n^0.5".into(),
            delta: (n as f64).sqrt(),
            seed: 0x9e37_79b9_7f4a_7c15,
            trial: 0,
            energy: Some(energy),
            latency_slots: Some(7),
            latency_bound: Some(8.5),
            forwarding_slots: None,
            max_degree: None,
            violations: 0,
            verified: true,
            repairs: 0,
            fallbacks: 0,
            wall_time_ms: None,
            status: "ok".into(),
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_results(&[], &path, Format::Csv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{}\n", ResultRow::COLUMNS.join(",")));
        assert!(read_results(&path).unwrap().is_empty());
    }

    #[test]
    fn csv_and_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = vec![row(16, 0.1 + 0.2), row(32, 1e-300)];
        rows[1].status = "infeasible: needs 5".into();
        rows[1].energy = None;
        rows[1].wall_time_ms = Some(1.25);
        let csv_path = dir.path().join("sub/r.csv");
        write_results(&rows[..1], &csv_path, Format::Csv).unwrap();
        assert_eq!(std::fs::read_to_string(&csv_path).unwrap().lines().count(), 2);
        write_results(&rows, &csv_path, Format::Csv).unwrap();
        assert_eq!(read_results(&csv_path).unwrap(), rows);
        let json_path = dir.path().join("r.json");
        write_results(&rows, &json_path, Format::Json).unwrap();
        assert_eq!(read_results(&json_path).unwrap(), rows);
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = write_results(&[], &blocker.join("r.csv"), Format::Csv).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
    }

    #[test]
    fn summaries_group_by_point() {
        let mut rows = vec![row(16, 1.0), row(16, 3.0), row(32, 5.0)];
        rows.push(ResultRow {
            status: "error: x".into(),
            ..row(32, 100.0)
        });
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].n, s[0].trials, s[0].mean_energy), (16, 2, 2.0));
        assert_eq!((s[1].n, s[1].trials, s[1].mean_energy), (32, 1, 5.0));
        let text = summary_csv(&s).unwrap();
        assert_eq!(text.lines().count(), 3);
    }
}
