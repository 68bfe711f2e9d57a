//! Series ingestion: one number per line, or one CSV column.

use std::path::Path;

use crate::report::Failure;

/// Reads the series from `path`.
///
/// Without a column selector every non-blank line must parse as one
/// number. With a selector the file is CSV: a header name picks the
/// column by its first-line label, a bare integer picks it by zero-based
/// position in a headerless file. Blank lines are skipped; any other
/// non-numeric token is an error naming the line.
pub fn read_series(path: &Path, column: Option<&str>) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let values = match column {
        None => parse_plain(&text)?,
        Some(sel) => match sel.parse::<usize>() {
            Ok(index) => parse_csv(&text, index, None)?,
            Err(_) => {
                let (line_no, header) = first_content_line(&text).ok_or_else(|| {
                    Failure::input(format!("{}: file is empty", path.display()))
                })?;
                let index = header
                    .split(',')
                    .position(|f| f.trim() == sel)
                    .ok_or_else(|| {
                        Failure::input(format!("line 1: no column named '{sel}' in the header"))
                    })?;
                parse_csv(&text, index, Some(line_no))?
            }
        },
    };
    if values.is_empty() {
        return Err(Failure::input(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(values)
}

fn first_content_line(text: &str) -> Option<(usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .find(|(_, l)| !l.is_empty())
}

fn parse_plain(text: &str) -> Result<Vec<f64>, Failure> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        values.push(line.parse::<f64>().map_err(|_| {
            Failure::input(format!("line {}: cannot parse '{line}' as a number", i + 1))
        })?);
    }
    Ok(values)
}

fn parse_csv(text: &str, index: usize, header_line: Option<usize>) -> Result<Vec<f64>, Failure> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || Some(i + 1) == header_line {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let token = fields.get(index).map(|f| f.trim()).ok_or_else(|| {
            Failure::input(format!(
                "line {}: row has {} fields, column {index} needs more",
                i + 1,
                fields.len()
            ))
        })?;
        values.push(token.parse::<f64>().map_err(|_| {
            Failure::input(format!(
                "line {}: cannot parse '{token}' as a number",
                i + 1
            ))
        })?);
    }
    Ok(values)
}
