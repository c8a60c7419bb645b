//! CSV report writing: '#'-prefixed header lines embed the exact config and
//! command, then a header row and typed data rows. Every report is validated
//! against its schema before a byte is written.

use std::path::Path;

use crate::CmdError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Str,
    Int,
    Float,
}

#[derive(Debug, Clone)]
pub struct ReportSchema {
    pub name: &'static str,
    pub columns: &'static [(&'static str, ColumnKind)],
}

impl ReportSchema {
    fn validate(&self, rows: &[Vec<String>]) -> Result<(), CmdError> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(CmdError::Fault(format!(
                    "report {}: row {i} has {} fields, schema needs {}",
                    self.name,
                    row.len(),
                    self.columns.len()
                )));
            }
            for ((name, kind), cell) in self.columns.iter().zip(row) {
                let ok = match kind {
                    ColumnKind::Str => !cell.is_empty() && !cell.contains(','),
                    ColumnKind::Int => cell.parse::<i64>().is_ok(),
                    ColumnKind::Float => cell.parse::<f64>().map(f64::is_finite).unwrap_or(false),
                };
                if !ok {
                    return Err(CmdError::Fault(format!(
                        "report {}: row {i} column '{name}' rejected value '{cell}'",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Render a float with full round-trip precision and a '.' decimal separator.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Validate rows against the schema and write the report (LF endings).
/// `extras` are additional comment lines (summary values).
pub fn write_report(
    path: &Path,
    schema: &ReportSchema,
    config_json: &str,
    command: &str,
    extras: &[String],
    rows: &[Vec<String>],
) -> Result<(), CmdError> {
    schema.validate(rows)?;
    let mut text = String::new();
    text.push_str(&format!("# report: {}\n", schema.name));
    text.push_str(&format!("# command: {command}\n"));
    text.push_str(&format!("# config: {config_json}\n"));
    for line in extras {
        text.push_str(&format!("# {line}\n"));
    }
    let header: Vec<&str> = schema.columns.iter().map(|(n, _)| *n).collect();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| CmdError::Fault(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text)
        .map_err(|e| CmdError::Fault(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: ReportSchema = ReportSchema {
        name: "test",
        columns: &[("name", ColumnKind::Str), ("value", ColumnKind::Float)],
    };

    #[test]
    fn rejects_wrong_width_and_bad_numbers() {
        assert!(SCHEMA.validate(&[vec!["a".into()]]).is_err());
        assert!(SCHEMA.validate(&[vec!["a".into(), "NaN".into()]]).is_err());
        assert!(SCHEMA
            .validate(&[vec!["a".into(), "1.25e-3".into()]])
            .is_ok());
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.1 + 0.2, 1.0 / 3.0, 74.1234567890123, 1e-300] {
            let s = fmt(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
