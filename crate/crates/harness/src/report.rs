//! Per-generation CSV reports and benchmark summaries.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use gaqueue_core::GenerationReport;
use serde::{Deserialize, Serialize};

pub const GENERATION_HEADER: &str = "generation,best,mean,wall_ms,dups,republished";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub generation: u64,
    pub best: f64,
    pub mean: f64,
    pub wall_ms: f64,
    pub dups: u64,
    pub republished: u64,
}

impl From<&GenerationReport> for GenerationRow {
    fn from(r: &GenerationReport) -> Self {
        GenerationRow {
            generation: r.generation,
            best: r.best_fitness,
            mean: r.mean_fitness,
            wall_ms: r.wall_time.as_secs_f64() * 1000.0,
            dups: r.duplicate_responses,
            republished: r.republished_requests,
        }
    }
}

/// Streams rows, flushing after each one so a failed run leaves a partial
/// but well-formed file.
pub struct CsvReport<W: Write> {
    writer: csv::Writer<W>,
}

impl CsvReport<File> {
    pub fn create(path: &Path) -> io::Result<Self> {
        CsvReport::new(File::create(path)?)
    }
}

impl<W: Write> CsvReport<W> {
    pub fn new(out: W) -> io::Result<Self> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        writer.write_record(GENERATION_HEADER.split(','))?;
        writer.flush()?;
        Ok(CsvReport { writer })
    }

    pub fn write(&mut self, row: &GenerationRow) -> io::Result<()> {
        self.writer.serialize(row).map_err(io::Error::other)?;
        self.writer.flush()
    }
}

pub fn read_rows(path: &Path) -> Result<Vec<GenerationRow>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub worker_count: usize,
    pub generation: u64,
    pub wall_ms: f64,
    pub best: f64,
    pub mean: f64,
    pub dups: u64,
    pub republished: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub worker_count: usize,
    pub generations: usize,
    pub total_ms: f64,
    pub ms_per_generation: f64,
    pub speedup: Option<f64>,
    pub efficiency: Option<f64>,
    pub status: String,
}

/// Raw per-generation rows for each worker count. The summary is derived
/// from these rows alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchmarkReport {
    pub worker_counts: Vec<usize>,
    pub rows: Vec<BenchRow>,
    pub failures: BTreeMap<usize, String>,
}

impl BenchmarkReport {
    pub fn add_run(&mut self, worker_count: usize, rows: &[GenerationRow]) {
        self.rows.extend(rows.iter().map(|r| BenchRow {
            worker_count,
            generation: r.generation,
            wall_ms: r.wall_ms,
            best: r.best,
            mean: r.mean,
            dups: r.dups,
            republished: r.republished,
        }));
    }

    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Total evaluation wall time T(n) over all generations, in ms.
    pub fn total_ms(&self, worker_count: usize) -> Option<f64> {
        if self.failures.contains_key(&worker_count) {
            return None;
        }
        let mut rows = self.rows.iter().filter(|r| r.worker_count == worker_count).peekable();
        rows.peek()?;
        Some(rows.map(|r| r.wall_ms).sum())
    }

    /// T(1) / T(n).
    pub fn speedup(&self, worker_count: usize) -> Option<f64> {
        Some(self.total_ms(1)? / self.total_ms(worker_count)?)
    }

    /// speedup(n) / n.
    pub fn efficiency(&self, worker_count: usize) -> Option<f64> {
        Some(self.speedup(worker_count)? / worker_count as f64)
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        self.worker_counts
            .iter()
            .map(|&n| {
                let generations = self.rows.iter().filter(|r| r.worker_count == n).count();
                let total = self.total_ms(n);
                SummaryRow {
                    worker_count: n,
                    generations,
                    total_ms: total.unwrap_or(f64::NAN),
                    ms_per_generation: total.map_or(f64::NAN, |t| t / generations as f64),
                    speedup: self.speedup(n),
                    efficiency: self.efficiency(n),
                    status: match self.failures.get(&n) {
                        None => "ok".to_string(),
                        Some(e) => format!("failed: {e}"),
                    },
                }
            })
            .collect()
    }

    pub fn write_rows<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in self.summary() {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_rows(path: &Path) -> Result<Vec<BenchRow>, csv::Error> {
        csv::Reader::from_path(path)?.deserialize().collect()
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;

    fn row(generation: u64, wall_ms: f64) -> GenerationRow {
        GenerationRow {
            generation,
            best: 0.1 + generation as f64,
            mean: 1.0 / 3.0,
            wall_ms,
            dups: 0,
            republished: 0,
        }
    }

    #[test]
    fn csv_header_and_exact_floats() {
        let mut buf = Vec::new();
        {
            let mut report = CsvReport::new(&mut buf).unwrap();
            report.write(&row(0, 12.5)).unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(GENERATION_HEADER));
        let parsed: Vec<GenerationRow> = csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(parsed, vec![row(0, 12.5)]);
        assert_eq!(parsed[0].mean.to_bits(), (1.0f64 / 3.0).to_bits());
    }

    #[test]
    fn row_from_report() {
        let r = GenerationReport {
            generation: 4,
            best_fitness: 30.0,
            mean_fitness: 25.5,
            evaluations_performed: 63,
            duplicate_responses: 1,
            republished_requests: 2,
            wall_time: Duration::from_micros(1500),
        };
        let row = GenerationRow::from(&r);
        assert_eq!((row.generation, row.dups, row.republished), (4, 1, 2));
        assert_eq!(row.wall_ms, 1.5);
    }

    #[test]
    fn speedup_and_efficiency_from_rows() {
        let mut b = BenchmarkReport {
            worker_counts: vec![1, 4, 8],
            ..Default::default()
        };
        b.add_run(1, &[row(0, 3200.0), row(1, 3200.0)]);
        b.add_run(4, &[row(0, 1000.0), row(1, 1000.0)]);
        b.failures.insert(8, "stalled".into());
        assert_eq!(b.speedup(4), Some(3.2));
        assert_eq!(b.efficiency(4), Some(0.8));
        assert_eq!(b.speedup(1), Some(1.0));
        assert_eq!(b.speedup(8), None);
        assert!(b.is_partial());
        let s = b.summary();
        assert_eq!(s[1].ms_per_generation, 1000.0);
        assert!(s[2].status.starts_with("failed"));

        let mut buf = Vec::new();
        b.write_rows(&mut buf).unwrap();
        let back: Vec<BenchRow> = csv::Reader::from_reader(buf.as_slice())
            .deserialize()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(back, b.rows);
    }
}
