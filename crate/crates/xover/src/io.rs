//! Design and matrix file formats.
//!
//! Designs are stored period by period: `periods[i][j]` is the treatment
//! label given to subject `j` in period `i`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use xover_core::{validate_design, CrossoverDesign, Matrix, ValidatedDesign};

use crate::error::{CliError, Result};

/// A treatment label as it appears in a design file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Int(i64),
    Str(String),
}

impl Label {
    fn text(&self) -> String {
        match self {
            Label::Int(v) => v.to_string(),
            Label::Str(s) => s.trim().to_string(),
        }
    }
}

/// JSON design object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub t: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Label>>,
    pub periods: Vec<Vec<Label>>,
}

impl DesignFile {
    pub fn validate(&self) -> Result<ValidatedDesign> {
        let grid: Vec<Vec<String>> = self
            .periods
            .iter()
            .map(|row| row.iter().map(Label::text).collect())
            .collect();
        let alphabet: Option<Vec<String>> = self
            .labels
            .as_ref()
            .map(|l| l.iter().map(Label::text).collect());
        Ok(validate_design(&grid, self.t, alphabet.as_deref())?)
    }

    /// Integer labels when the design uses the plain `1..=t` coding,
    /// otherwise the given labels listed explicitly.
    pub fn from_design(d: &CrossoverDesign, labels: Option<&[String]>) -> Self {
        let plain = labels.is_none_or(|l| {
            l.iter().enumerate().all(|(k, s)| *s == (k + 1).to_string())
        });
        let periods = d
            .periods()
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|c| match labels {
                        Some(l) if !plain => Label::Str(l[c as usize - 1].clone()),
                        _ => Label::Int(c as i64),
                    })
                    .collect()
            })
            .collect();
        DesignFile {
            t: d.t(),
            labels: match labels {
                Some(l) if !plain => Some(l.iter().cloned().map(Label::Str).collect()),
                _ => None,
            },
            periods,
        }
    }
}

/// Parses a design from JSON or headerless CSV text. JSON is recognised by
/// a leading `{`. A CSV design carries no `t`; it is taken from the labels
/// unless `t` is given.
pub fn parse_design(text: &str, t: Option<usize>) -> Result<ValidatedDesign> {
    if text.trim_start().starts_with('{') {
        let file: DesignFile =
            serde_json::from_str(text).map_err(|e| CliError::Format(format!("design JSON: {e}")))?;
        if let Some(t) = t {
            if t != file.t {
                return Err(CliError::Format(format!(
                    "design declares t = {} but t = {t} was requested",
                    file.t
                )));
            }
        }
        file.validate()
    } else {
        let grid = parse_csv_grid(text)?;
        let t = t.unwrap_or_else(|| infer_t(&grid));
        Ok(validate_design(&grid, t, None)?)
    }
}

fn infer_t(grid: &[Vec<String>]) -> usize {
    let mut distinct: Vec<&str> = grid.iter().flatten().map(String::as_str).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let numeric_max = distinct
        .iter()
        .map(|s| s.parse::<usize>().ok())
        .collect::<Option<Vec<_>>>()
        .and_then(|v| v.into_iter().max());
    distinct.len().max(numeric_max.unwrap_or(0))
}

fn parse_csv_grid(text: &str) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut grid = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Format(format!("design CSV: {e}")))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        grid.push(rec.iter().map(str::to_string).collect());
    }
    Ok(grid)
}

pub fn read_design(path: &Path) -> Result<ValidatedDesign> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_design(&text, None).map_err(|e| match e {
        CliError::Format(msg) => CliError::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn design_to_json(d: &CrossoverDesign, labels: Option<&[String]>) -> String {
    let mut s = serde_json::to_string_pretty(&DesignFile::from_design(d, labels))
        .expect("design serializes");
    s.push('\n');
    s
}

pub fn design_to_csv(d: &CrossoverDesign, labels: Option<&[String]>) -> String {
    let mut out = String::new();
    for row in d.periods() {
        let cells: Vec<String> = row
            .iter()
            .map(|&c| match labels {
                Some(l) => l[c as usize - 1].clone(),
                None => c.to_string(),
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes CSV when the path ends in `.csv`, JSON otherwise.
pub fn write_design(path: &Path, d: &CrossoverDesign, labels: Option<&[String]>) -> Result<()> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let text = if is_csv {
        design_to_csv(d, labels)
    } else {
        design_to_json(d, labels)
    };
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    s.push('\n');
    write_text(path, &s)
}

/// Row-major CSV with shortest round-trip float formatting.
pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_matrix_csv(text: &str) -> Result<Matrix> {
    let grid = parse_csv_grid(text)?;
    let rows: Vec<Vec<f64>> = grid
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| {
                        CliError::Format(format!("matrix CSV row {}: {s:?} is not a number", i + 1))
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(CliError::Format("matrix CSV is empty".into()));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != rows[0].len()) {
        return Err(CliError::Format(format!(
            "matrix CSV row {} has {} entries, expected {}",
            i + 1,
            rows[i].len(),
            rows[0].len()
        )));
    }
    Ok(Matrix::from_rows(&rows))
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_matrix_csv(&text).map_err(|e| match e {
        CliError::Format(msg) => CliError::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const D0: &str = r#"{"t": 3, "periods": [
        ["A","A","A","A","A","A","C","C","C","C","C","C","B","B","B","B","B","B"],
        ["B","B","B","B","B","B","A","A","A","A","A","A","C","C","C","C","C","C"],
        ["C","C","C","C","C","C","B","B","B","B","B","B","A","A","A","A","A","A"]]}"#;

    #[test]
    fn reads_d0() {
        let v = parse_design(D0, None).unwrap();
        assert_eq!(v.labels, ["A", "B", "C"]);
        assert_eq!((v.design.p(), v.design.n()), (3, 18));
        assert_eq!(v.design.subject(6), &[3, 1, 2]);
        assert!(v.binary);
    }

    #[test]
    fn integer_and_mixed_labels() {
        let v = parse_design(r#"{"t":2,"periods":[[1,2],[2,1]]}"#, None).unwrap();
        assert_eq!(v.design.subject(0), &[1, 2]);
        let v = parse_design(r#"{"t":2,"labels":["x",7],"periods":[[7,"x"],["x",7]]}"#, None)
            .unwrap();
        assert_eq!(v.design.subject(0), &[2, 1]);
    }

    #[test]
    fn csv_infers_t() {
        let v = parse_design("1,2,3\n2,3,1\n3,1,2\n", None).unwrap();
        assert_eq!(v.design.t(), 3);
        let v = parse_design("a,b\nb,a\n", None).unwrap();
        assert_eq!(v.design.t(), 2);
        assert_eq!(v.labels, ["a", "b"]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_design(r#"{"t":2,"periods":[[1,2],[2]]}"#, None).is_err());
        assert!(parse_design(r#"{"t":2,"periods":[[1,3],[2,1]]}"#, None).is_err());
        assert!(parse_design(r#"{"t":2,"cells":[]}"#, None).is_err());
        assert!(parse_design("", None).is_err());
    }

    #[test]
    fn matrix_csv_round_trip() {
        let m = Matrix::from_rows(&[vec![1.0, 0.1 + 0.2], vec![-3.5e-20, 4.0]]);
        assert_eq!(parse_matrix_csv(&matrix_to_csv(&m)).unwrap(), m);
        assert!(parse_matrix_csv("1,2\n3\n").is_err());
        assert!(parse_matrix_csv("1,x\n").is_err());
    }
}
