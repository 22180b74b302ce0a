use std::fmt::Write as _;
use std::path::Path;

use cde_core::Matrix;

/// Writes rows with shortest round-trip float formatting so identical runs
/// produce identical bytes.
pub fn write_matrix(path: &Path, header: Option<&str>, m: &Matrix) -> std::io::Result<()> {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(h);
        out.push('\n');
    }
    for r in 0..m.rows {
        let row = m.row(r);
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    std::fs::write(path, out)
}

pub fn write_lines(path: &Path, lines: &[String]) -> std::io::Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
    std::fs::write(path, out)
}

/// CSV with empty cells treated as missing. Returns one Option per cell and
/// the header line if the first row is non-numeric.
pub fn parse_missing_csv(text: &str) -> Result<(Vec<Vec<Option<f64>>>, Option<String>), String> {
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    let mut header = None;
    let mut width = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<Option<f64>>, ()> = cells
            .iter()
            .map(|c| {
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>().map(Some).map_err(|_| ())
                }
            })
            .collect();
        match parsed {
            Ok(vals) => {
                if width == 0 {
                    width = vals.len();
                } else if vals.len() != width {
                    return Err(format!("row {}: expected {} cells, got {}", i + 1, width, vals.len()));
                }
                rows.push(vals);
            }
            Err(()) if rows.is_empty() && header.is_none() => header = Some(line.to_string()),
            Err(()) => return Err(format!("row {}: unparsable numeric cell", i + 1)),
        }
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    Ok((rows, header))
}
