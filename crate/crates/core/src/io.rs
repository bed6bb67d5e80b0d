//! CSV formats: populations (`id,pi[,y]`) and drawn samples (`draw_id,unit_id`).
//! Floats are written with Rust's shortest round-trip formatting.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::population::PopulationSpec;
use crate::sampler::SampleDraw;

fn row_error(row: usize, message: impl Into<String>) -> Error {
    Error::CsvRow { row, message: message.into() }
}

fn parse_number(row: usize, column: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| row_error(row, format!("column {column:?}: cannot parse {raw:?} as a number")))?;
    if !v.is_finite() {
        return Err(row_error(row, format!("column {column:?}: value {raw:?} is not finite")));
    }
    Ok(v)
}

/// Reads a population. Rows are numbered from 1 for the header line, so the
/// first data row is row 2.
pub fn read_population<R: Read>(reader: R) -> Result<PopulationSpec> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("id").ok_or_else(|| row_error(1, "missing column \"id\""))?;
    let pi_col = col("pi").ok_or_else(|| row_error(1, "missing column \"pi\""))?;
    let y_col = col("y");
    if let Some(extra) = headers.iter().find(|h| !matches!(*h, "id" | "pi" | "y")) {
        return Err(row_error(1, format!("unknown column {extra:?}")));
    }
    let mut ids = Vec::new();
    let mut pi = Vec::new();
    let mut y = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| row_error(row, e.to_string()))?;
        let field = |c: usize| record.get(c).ok_or_else(|| row_error(row, "too few fields"));
        let id = field(id_col)?;
        if id.is_empty() {
            return Err(row_error(row, "column \"id\": empty id"));
        }
        ids.push(id.to_string());
        pi.push(parse_number(row, "pi", field(pi_col)?)?);
        if let Some(c) = y_col {
            y.push(parse_number(row, "y", field(c)?)?);
        }
    }
    PopulationSpec::new(ids, pi, y_col.map(|_| y))
}

pub fn write_population<W: Write>(writer: W, pop: &PopulationSpec) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    match pop.y() {
        Some(y) => {
            w.write_record(["id", "pi", "y"])?;
            for ((id, p), v) in pop.ids().iter().zip(pop.pi()).zip(y) {
                w.write_record([id.as_str(), &p.to_string(), &v.to_string()])?;
            }
        }
        None => {
            w.write_record(["id", "pi"])?;
            for (id, p) in pop.ids().iter().zip(pop.pi()) {
                w.write_record([id.as_str(), &p.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per selected unit; draws are numbered from 1.
pub fn write_samples<W: Write>(writer: W, ids: &[String], draws: &[SampleDraw]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["draw_id", "unit_id"])?;
    for (d, draw) in draws.iter().enumerate() {
        let draw_id = (d + 1).to_string();
        for &k in &draw.selected {
            w.write_record([draw_id.as_str(), ids[k].as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `draw_id,unit_id` rows and returns the units (0-based) of each
/// draw, in order of first appearance of the draw id.
pub fn read_samples<R: Read>(reader: R, pop: &PopulationSpec) -> Result<Vec<Vec<usize>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let draw_col = headers.iter().position(|h| h == "draw_id");
    let unit_col = headers
        .iter()
        .position(|h| h == "unit_id")
        .ok_or_else(|| row_error(1, "missing column \"unit_id\""))?;
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| row_error(row, e.to_string()))?;
        let draw = draw_col.and_then(|c| record.get(c)).unwrap_or("1").to_string();
        let unit = record.get(unit_col).ok_or_else(|| row_error(row, "too few fields"))?;
        let k = pop
            .index_of(unit)
            .ok_or_else(|| row_error(row, format!("column \"unit_id\": unknown unit {unit:?}")))?;
        match out.iter_mut().find(|(d, _)| *d == draw) {
            Some((_, units)) => {
                if units.contains(&k) {
                    return Err(row_error(row, format!("unit {unit:?} listed twice in draw {draw:?}")));
                }
                units.push(k);
            }
            None => out.push((draw, vec![k])),
        }
    }
    Ok(out
        .into_iter()
        .map(|(_, mut units)| {
            units.sort_unstable();
            units
        })
        .collect())
}

/// Writes rows of `(label, values...)` with a header.
pub fn write_table<W: Write>(writer: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
