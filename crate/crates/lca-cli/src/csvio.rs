//! CSV ingestion and emission. Files carry 1-based category codes;
//! missing cells are empty or `NA`. Category counts may be declared in
//! the schema (`A:3`) or inferred as the largest observed code.

use std::path::Path;

use lca_core::{Dataset, Indicator};

use crate::error::{CliError, Result};

pub const MISSING_TOKENS: [&str; 2] = ["", "NA"];

/// One declared indicator column, with its category count if given.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    pub name: String,
    pub n_categories: Option<u8>,
}

/// Parses `A,B:3,C` into column specs.
pub fn parse_indicator_schema(text: &str) -> Result<Vec<ColumnSpec>> {
    let mut specs: Vec<ColumnSpec> = Vec::new();
    for item in text.split(',') {
        let item = item.trim();
        if item.is_empty() {
            return Err(CliError::Usage(format!(
                "empty indicator entry in `{text}`"
            )));
        }
        let (name, k) = match item.split_once(':') {
            None => (item.to_string(), None),
            Some((name, k_text)) => {
                let k: u8 = k_text.trim().parse().map_err(|_| {
                    CliError::Usage(format!("indicator `{name}`: bad category count `{k_text}`"))
                })?;
                if k < 2 {
                    return Err(CliError::Usage(format!(
                        "indicator `{name}` needs at least 2 categories"
                    )));
                }
                (name.trim().to_string(), Some(k))
            }
        };
        if specs.iter().any(|s| s.name == name) {
            return Err(CliError::Usage(format!("duplicate indicator `{name}`")));
        }
        specs.push(ColumnSpec { name, n_categories: k });
    }
    Ok(specs)
}

/// Parses `Z,T` into covariate names.
pub fn parse_covariate_list(text: &str) -> Result<Vec<String>> {
    let mut names: Vec<String> = Vec::new();
    for item in text.split(',') {
        let item = item.trim();
        if item.is_empty() {
            return Err(CliError::Usage(format!(
                "empty covariate entry in `{text}`"
            )));
        }
        if names.iter().any(|n| n == item) {
            return Err(CliError::Usage(format!("duplicate covariate `{item}`")));
        }
        names.push(item.to_string());
    }
    Ok(names)
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
        let available: Vec<&str> = headers.iter().map(str::trim).collect();
        CliError::Data(format!(
            "{}: column `{name}` not found; available: {}",
            path.display(),
            available.join(", ")
        ))
    })
}

/// Loads the declared columns of a CSV file into a [`Dataset`] and
/// returns it with the fully resolved schema string (`A:3,B:2,...`).
///
/// Rows are numbered from 1 excluding the header, matching how a
/// spreadsheet displays the file.
pub fn load_csv(
    path: &Path,
    indicators: &[ColumnSpec],
    covariates: &[String],
) -> Result<(Dataset, String)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| {
            // File-open failures are IO problems, not malformed data.
            if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                match e.into_kind() {
                    csv::ErrorKind::Io(io) => CliError::io(path, io),
                    _ => unreachable!(),
                }
            } else {
                CliError::Data(format!("{}: {e}", path.display()))
            }
        })?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();

    let indicator_cols: Vec<usize> = indicators
        .iter()
        .map(|s| column_index(&headers, &s.name, path))
        .collect::<Result<_>>()?;
    let covariate_cols: Vec<usize> = covariates
        .iter()
        .map(|n| column_index(&headers, n, path))
        .collect::<Result<_>>()?;

    let mut rows: Vec<Vec<Option<u8>>> = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); covariates.len()];
    for (record_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let row_no = record_no + 1;
        let mut row = Vec::with_capacity(indicators.len());
        for (spec, &col) in indicators.iter().zip(&indicator_cols) {
            let cell = record.get(col).unwrap_or("");
            if MISSING_TOKENS.contains(&cell) {
                row.push(None);
                continue;
            }
            let code: u8 = cell.parse().map_err(|_| {
                CliError::Data(format!(
                    "{}: row {row_no}, column `{}`: `{cell}` is not an integer code",
                    path.display(),
                    spec.name
                ))
            })?;
            if code == 0 {
                return Err(CliError::Data(format!(
                    "{}: row {row_no}, column `{}`: codes are 1-based, found 0",
                    path.display(),
                    spec.name
                )));
            }
            if let Some(k) = spec.n_categories {
                if code > k {
                    return Err(CliError::Data(format!(
                        "{}: row {row_no}, column `{}`: code {code} outside 1..={k}",
                        path.display(),
                        spec.name
                    )));
                }
            }
            row.push(Some(code));
        }
        rows.push(row);

        for (c, (&col, name)) in covariate_cols.iter().zip(covariates).enumerate() {
            let cell = record.get(col).unwrap_or("");
            if MISSING_TOKENS.contains(&cell) {
                columns[c].push(f64::NAN);
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!(
                    "{}: row {row_no}, column `{name}`: `{cell}` is not numeric",
                    path.display()
                ))
            })?;
            columns[c].push(value);
        }
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }

    // Resolve undeclared category counts from the observed codes.
    let mut resolved = Vec::with_capacity(indicators.len());
    for (j, spec) in indicators.iter().enumerate() {
        let k = match spec.n_categories {
            Some(k) => k,
            None => {
                let observed = rows.iter().filter_map(|r| r[j]).max().unwrap_or(0);
                if observed < 2 {
                    return Err(CliError::Data(format!(
                        "{}: column `{}` needs at least 2 categories; declare it as `{}:K`",
                        path.display(),
                        spec.name,
                        spec.name
                    )));
                }
                observed
            }
        };
        resolved.push(Indicator::new(spec.name.clone(), k)?);
    }
    let schema = resolved
        .iter()
        .map(|i| format!("{}:{}", i.name(), i.n_categories()))
        .collect::<Vec<_>>()
        .join(",");

    let named_columns = covariates
        .iter()
        .cloned()
        .zip(columns)
        .collect::<Vec<(String, Vec<f64>)>>();
    let dataset = Dataset::new(resolved, rows, named_columns)?;
    Ok((dataset, schema))
}

/// Writes a dataset back out; codes round-trip bit-exactly through
/// [`load_csv`]. Missing cells are written empty.
pub fn write_csv(path: &Path, d: &Dataset) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let covariate_names: Vec<String> = d.covariate_names().map(String::from).collect();
    let header: Vec<String> = d
        .indicators()
        .iter()
        .map(|i| i.name().to_string())
        .chain(covariate_names.iter().cloned())
        .collect();
    writer
        .write_record(&header)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;

    for i in 0..d.n_rows() {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for j in 0..d.n_indicators() {
            record.push(match d.code(i, j) {
                Some(code) => code.to_string(),
                None => String::new(),
            });
        }
        for name in &covariate_names {
            let value = d.covariate(name).expect("declared covariate")[i];
            record.push(if value.is_nan() { String::new() } else { format!("{value}") });
        }
        writer
            .write_record(&record)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Writes true class labels as a one-column CSV of 1-based classes.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut text = String::from("class\n");
    for &label in labels {
        text.push_str(&(label + 1).to_string());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
