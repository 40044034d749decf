use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use flarko_core::eval::MetricsReport;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no reports to write")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Flat row with the column order used in CSV output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: String,
    pub model: String,
    pub n: usize,
    pub pref_at_3: f64,
    pub se_pref: f64,
    pub prof_at_3: f64,
    pub se_prof: f64,
    pub comb_at_3: f64,
    pub se_comb: f64,
}

impl From<&MetricsReport> for ReportRow {
    fn from(r: &MetricsReport) -> Self {
        Self {
            variant: r.variant.name().to_string(),
            model: r.model.clone(),
            n: r.n,
            pref_at_3: r.pref_at_3,
            se_pref: r.se_pref,
            prof_at_3: r.prof_at_3,
            se_prof: r.se_prof,
            comb_at_3: r.comb_at_3,
            se_comb: r.se_comb,
        }
    }
}

fn sorted_rows(reports: &[MetricsReport]) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = reports.iter().map(ReportRow::from).collect();
    rows.sort_by(|a, b| a.variant.cmp(&b.variant).then_with(|| a.model.cmp(&b.model)));
    rows
}

pub fn write_report<W: Write>(reports: &[MetricsReport], out: W, format: ReportFormat) -> Result<(), ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    let rows = sorted_rows(reports);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, &rows)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn emit_report(reports: &[MetricsReport], path: &Path, format: ReportFormat) -> Result<(), ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_report(reports, &mut w, format)?;
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<ReportRow>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn read_rows_json(path: &Path) -> Result<Vec<ReportRow>, ReportError> {
    Ok(serde_json::from_reader(io::BufReader::new(File::open(path)?))?)
}

/// Fixed-width table for terminals.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut s = format!(
        "{:<14} {:<16} {:>5}  {:>15}  {:>15}  {:>15}\n",
        "variant", "model", "n", "Pref@3 (se)", "Prof@3 (se)", "Comb@3 (se)"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<14} {:<16} {:>5}  {:>6.3} ({:.3})  {:>6.3} ({:.3})  {:>6.3} ({:.3})\n",
            r.variant, r.model, r.n, r.pref_at_3, r.se_pref, r.prof_at_3, r.se_prof, r.comb_at_3, r.se_comb
        ));
    }
    s
}
