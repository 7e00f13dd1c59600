//! CSV output: header row then data rows, floats printed as shortest
//! round-trip decimals (Rust's default float display).

use std::fs::File;
use std::io::{BufWriter, Result, Write};
use std::path::Path;

use nflab_core::SimTrace;

/// Format a float so that parsing the text reproduces the value bit for bit.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Write a header and rows of already formatted cells.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()
}

/// Columns: t, energy breakdown, norms, total variation (blank in 2D),
/// step size, accepted flag.
pub fn write_trace(path: &Path, trace: &SimTrace) -> Result<()> {
    let header = [
        "t",
        "e_total",
        "e_diffusion",
        "e_metabolic",
        "e_pumping",
        "e_pressure",
        "m_norm",
        "dtm_norm",
        "tv",
        "dt",
        "accepted",
    ];
    let rows: Vec<Vec<String>> = trace
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.t),
                fmt_f64(r.energy.total),
                fmt_f64(r.energy.diffusion),
                fmt_f64(r.energy.metabolic),
                fmt_f64(r.energy.pumping),
                fmt_f64(r.energy.pressure),
                fmt_f64(r.m_norm),
                fmt_f64(r.dtm_norm),
                r.tv.map(fmt_f64).unwrap_or_default(),
                fmt_f64(r.dt),
                (r.accepted as u8).to_string(),
            ]
        })
        .collect();
    write_table(path, &header, &rows)
}
