//! Report serialization: pretty JSON summaries and LF-terminated CSV tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::confidence::ConfidenceReport;
use super::noise::NoiseSample;
use super::similarity::SimilarityRow;
use super::transfer::TransferReport;
use super::whitebox::WhiteboxReport;
use crate::error::{Error, Result};
use crate::nn::archive::write_atomic;

/// JSON envelope shared by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<S> {
    pub experiment: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub summary: S,
}

impl<S: Serialize> Report<S> {
    pub fn new(experiment: impl Into<String>, seed: Option<u64>, config: serde_json::Value, summary: S) -> Self {
        Report {
            experiment: experiment.into(),
            seed,
            config,
            summary,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }
}

/// Header plus string cells, ready for CSV output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner()
            .map_err(|e| Error::InvalidConfig(format!("csv buffer: {}", e.error())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }
}

/// Shortest round-trip decimal; `inf`/`-inf`/`nan` for non-finite values.
pub fn num<T: Into<f64> + std::fmt::Display + Copy>(v: T) -> String {
    let f: f64 = v.into();
    if f.is_nan() {
        "nan".into()
    } else if f.is_infinite() {
        if f > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        v.to_string()
    }
}

/// Empty cell for `None`.
pub fn opt<T: Into<f64> + std::fmt::Display + Copy>(v: Option<T>) -> String {
    v.map(num).unwrap_or_default()
}

/// JSON and CSV destinations for `out`: a directory receives
/// `<experiment>-seed<seed>.{json,csv}`, a file path gets both extensions.
pub fn output_paths(out: &Path, experiment: &str, seed: Option<u64>) -> (PathBuf, PathBuf) {
    if out.is_dir() {
        let stem = match seed {
            Some(s) => format!("{experiment}-seed{s}"),
            None => experiment.to_string(),
        };
        (out.join(format!("{stem}.json")), out.join(format!("{stem}.csv")))
    } else {
        (out.with_extension("json"), out.with_extension("csv"))
    }
}

pub fn noise_table(samples: &[NoiseSample]) -> Table {
    let mut t = Table::new(&["index", "x", "y", "exact", "approx", "error"]);
    t.rows.reserve(samples.len());
    for s in samples {
        t.push(vec![
            s.index.to_string(),
            num(s.x),
            num(s.y),
            num(s.exact),
            num(s.approx),
            num(s.error),
        ]);
    }
    t
}

/// Parses a table written by [`noise_table`].
pub fn parse_noise_csv(bytes: &[u8]) -> Result<Vec<NoiseSample>> {
    let mut r = csv::Reader::from_reader(bytes);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::format("noise CSV", "short row"));
        let f32_at = |i: usize| -> Result<f32> {
            field(i)?
                .parse()
                .map_err(|_| Error::format("noise CSV", format!("bad number in column {i}")))
        };
        out.push(NoiseSample {
            index: field(0)?.parse().map_err(|_| Error::format("noise CSV", "bad index"))?,
            x: f32_at(1)?,
            y: f32_at(2)?,
            exact: f32_at(3)?,
            approx: f32_at(4)?,
            error: field(5)?.parse().map_err(|_| Error::format("noise CSV", "bad error"))?,
        });
    }
    Ok(out)
}

pub fn similarity_table(rows: &[SimilarityRow]) -> Table {
    let mut t = Table::new(&["rank", "patch", "cosine", "exact", "approx", "gap"]);
    for r in rows {
        t.push(vec![
            r.rank.to_string(),
            r.patch.to_string(),
            num(r.cosine),
            num(r.exact),
            num(r.approx),
            num(r.gap),
        ]);
    }
    t
}

pub fn confidence_table(report: &ConfidenceReport) -> Table {
    let mut header = vec!["index".to_string(), "label".to_string()];
    header.extend(report.backends.iter().map(|b| format!("confidence_{}", b.backend)));
    let mut t = Table {
        header,
        rows: Vec::new(),
    };
    for r in &report.rows {
        let mut row = vec![r.index.to_string(), r.label.to_string()];
        row.extend(r.confidence.iter().map(|&c| num(c)));
        t.push(row);
    }
    t
}

pub fn transfer_table(report: &TransferReport) -> Table {
    let mut header = vec!["index".to_string(), "label".to_string()];
    for b in &report.backends {
        header.push(format!("clean_{}", b.backend));
        header.push(format!("adversarial_{}", b.backend));
    }
    let mut t = Table {
        header,
        rows: Vec::new(),
    };
    for r in &report.rows {
        let mut row = vec![r.index.to_string(), r.label.to_string()];
        for (c, a) in r.clean.iter().zip(&r.adversarial) {
            row.push(c.to_string());
            row.push(a.to_string());
        }
        t.push(row);
    }
    t
}

pub fn whitebox_table(report: &WhiteboxReport) -> Table {
    let mut t = Table::new(&["index", "label", "backend", "fooled", "epsilon", "l2", "mse", "psnr"]);
    for r in &report.rows {
        t.push(vec![
            r.index.to_string(),
            r.label.to_string(),
            report.backends[r.backend].backend.clone(),
            r.fooled.to_string(),
            opt(r.epsilon),
            opt(r.l2),
            opt(r.mse),
            opt(r.psnr),
        ]);
    }
    t
}
