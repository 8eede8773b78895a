use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::HarnessError;
use crate::experiments::{ExperimentOutput, DC_TRACE_HEADER, ROW_HEADER, SUMMARY_HEADER};

/// CSV with an explicit header, so an empty row set still yields one line.
pub fn write_csv<W: Write, T: Serialize>(sink: W, header: &[&str], rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Io("csv".into(), e))?;
    Ok(())
}

pub fn csv_string<T: Serialize>(header: &[&str], rows: &[T]) -> Result<String, HarnessError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, header, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

fn create(path: &Path) -> Result<std::fs::File, HarnessError> {
    std::fs::File::create(path).map_err(|e| HarnessError::Io(path.display().to_string(), e))
}

/// Writes `<name>.csv`, `<name>_summary.csv`, `<name>_dc_trace.csv` when
/// there is a trace, and `<name>_reports.jsonl` on request.
pub fn write_outputs(dir: &Path, name: &str, out: &ExperimentOutput, json: bool) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.display().to_string(), e))?;
    let mut written = Vec::new();
    let rows = dir.join(format!("{name}.csv"));
    write_csv(create(&rows)?, &ROW_HEADER, &out.rows)?;
    written.push(rows);
    let summary = dir.join(format!("{name}_summary.csv"));
    write_csv(create(&summary)?, &SUMMARY_HEADER, &out.summary)?;
    written.push(summary);
    if !out.dc_trace.is_empty() {
        let path = dir.join(format!("{name}_dc_trace.csv"));
        write_csv(create(&path)?, &DC_TRACE_HEADER, &out.dc_trace)?;
        written.push(path);
    }
    if json {
        let path = dir.join(format!("{name}_reports.jsonl"));
        let mut f = std::io::BufWriter::new(create(&path)?);
        for r in &out.reports {
            serde_json::to_writer(&mut f, r)?;
            writeln!(f).map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
        }
        f.flush().map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
        written.push(path);
    }
    Ok(written)
}
