use std::collections::BTreeMap;
use std::fmt::Write;

use anyhow::{bail, Result};
use mpir_core::ir::Strategy;

use crate::record::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Markdown,
    Csv,
    Json,
}

pub const COLUMNS: [&str; 8] = ["N", "LU", "OTF", "IP", "OTF-IR", "its", "IP-IR", "its"];

/// Renders records as a timing table.
///
/// Markdown and CSV have one row per dimension and need an OTF and an IP
/// record for each; LU is taken from the OTF run. JSON is the record array
/// itself at full precision.
pub fn emit_table(records: &[RunRecord], format: Format) -> Result<String> {
    if records.is_empty() {
        bail!("no records to tabulate");
    }
    if format == Format::Json {
        return Ok(serde_json::to_string_pretty(records)? + "\n");
    }

    let mut rows: BTreeMap<usize, (Option<&RunRecord>, Option<&RunRecord>)> = BTreeMap::new();
    for r in records {
        let slot = rows.entry(r.n).or_default();
        let side = match r.strategy {
            Strategy::Otf => &mut slot.0,
            Strategy::Ip => &mut slot.1,
        };
        if side.replace(r).is_some() {
            bail!("two {} records for N = {}", r.strategy.name(), r.n);
        }
    }

    let mut out = String::new();
    match format {
        Format::Markdown => {
            writeln!(out, "| {} |", COLUMNS.join(" | "))?;
            writeln!(out, "|{}", "---|".repeat(COLUMNS.len()))?;
        }
        Format::Csv => writeln!(out, "{}", COLUMNS.join(","))?,
        Format::Json => unreachable!(),
    }
    for (n, pair) in rows {
        let (Some(otf), Some(ip)) = pair else {
            bail!("N = {n} needs both an otf and an ip record");
        };
        let cells = [
            n.to_string(),
            sci(otf.lu_seconds),
            sci(otf.solve_seconds),
            sci(ip.solve_seconds),
            sci(otf.ir_loop_seconds),
            otf.iterations.to_string(),
            sci(ip.ir_loop_seconds),
            ip.iterations.to_string(),
        ];
        match format {
            Format::Markdown => writeln!(out, "| {} |", cells.join(" | "))?,
            _ => writeln!(out, "{}", cells.join(","))?,
        }
    }
    Ok(out)
}

/// Reads back the JSON form.
pub fn parse_records(json: &str) -> Result<Vec<RunRecord>> {
    Ok(serde_json::from_str(json)?)
}

/// Two significant digits in scientific notation.
fn sci(x: f64) -> String {
    format!("{x:.1e}")
}
