use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::report::{Report, Table};
use crate::semigroup::fmt17;

use super::Format;

/// CSV with a header row, LF line endings and 17 significant digits.
pub fn write_table_csv<W: Write>(table: &Table, out: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    wtr.write_record(&table.columns)?;
    for row in &table.rows {
        wtr.write_record(row.iter().map(|&v| fmt17(v)))?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn table_csv(table: &Table) -> String {
    let mut buf = Vec::new();
    write_table_csv(table, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Inverse of [`write_table_csv`].
pub fn read_table_csv<R: Read>(name: &str, input: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("table {name}: {field:?} is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != columns.len() {
            return Err(Error::Config(format!("table {name}: ragged row")));
        }
        rows.push(row);
    }
    Ok(Table {
        name: name.to_string(),
        columns,
        rows,
    })
}

fn sanitize(part: &str) -> String {
    part.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Every table in `report` and its sections, keyed by a file stem built
/// from the section path. Repeated stems get a numeric suffix in visiting
/// order.
pub fn collect_tables(report: &Report) -> Vec<(String, &Table)> {
    fn walk<'a>(r: &'a Report, prefix: &str, out: &mut Vec<(String, &'a Table)>) {
        let path = if prefix.is_empty() {
            sanitize(&r.id)
        } else {
            format!("{prefix}.{}", sanitize(&r.id))
        };
        for t in &r.tables {
            out.push((format!("{path}.{}", sanitize(&t.name)), t));
        }
        for s in &r.sections {
            walk(s, &path, out);
        }
    }
    let mut raw = Vec::new();
    walk(report, "", &mut raw);
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    raw.into_iter()
        .map(|(stem, t)| {
            let n = seen.entry(stem.clone()).or_insert(0);
            *n += 1;
            let stem = if *n == 1 { stem } else { format!("{stem}.{n}") };
            (stem, t)
        })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `<id>.json` and/or one `<section path>.<table>.csv` per table into
/// `dir`; returns the paths written, in order.
pub fn emit(report: &Report, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if format.json() {
        let path = dir.join(format!("{}.json", sanitize(&report.id)));
        let mut text = report.to_pretty_json();
        text.push('\n');
        write_file(&path, text.as_bytes())?;
        written.push(path);
    }
    if format.csv() {
        for (stem, table) in collect_tables(report) {
            let path = dir.join(format!("{stem}.csv"));
            write_file(&path, table_csv(table).as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Wall-clock sidecar `<id>.timing.json`, kept out of the report so that
/// reports stay byte-stable.
pub fn emit_timing(report_id: &str, seconds: f64, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{}.timing.json", sanitize(report_id)));
    let value = serde_json::json!({ "id": report_id, "wall_clock_seconds": seconds });
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    Ok(path)
}
