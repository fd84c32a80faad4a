//! Categorical survey data: indicator descriptors, response codes,
//! covariate columns, validation and listwise filtering.
//!
//! Responses are category codes in `1..=K` per indicator; a missing
//! response is `None`. Covariates are numeric columns in which `NaN`
//! marks a missing value. Row indices in errors and reports are 0-based
//! dataset rows; file-oriented loaders translate to line numbers at
//! their own layer.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::Error;
use crate::Result;

/// An observed categorical survey item: a name and its category count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Indicator {
    name: String,
    n_categories: u8,
}

impl Indicator {
    /// A descriptor for an item with codes `1..=n_categories`.
    pub fn new(name: impl Into<String>, n_categories: u8) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidDataset("indicator name is empty".into()));
        }
        if n_categories < 2 {
            return Err(Error::InvalidDataset(format!(
                "indicator `{name}` needs at least 2 categories, got {n_categories}"
            )));
        }
        Ok(Self { name, n_categories })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_categories(&self) -> u8 {
        self.n_categories
    }
}

/// A respondent-by-indicator matrix of category codes plus named numeric
/// covariate columns.
///
/// Immutable after construction apart from covariate alias declarations,
/// so it can be shared freely across parallel fits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    indicators: Vec<Indicator>,
    /// Row-major `n_rows x n_indicators`, `None` = missing.
    responses: Vec<Option<u8>>,
    /// Declaration-ordered columns; `NaN` = missing.
    covariates: Vec<(String, Vec<f64>)>,
    /// Indicator names explicitly declared readable as numeric covariates.
    aliases: Vec<String>,
    n_rows: usize,
}

/// Per-column missing counts, out-of-range cells and the listwise-drop
/// projection for a dataset. Reporting only; the dataset is unmodified.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// `(column name, missing count)` for indicator columns then covariate
    /// columns, in declaration order.
    pub missing_by_column: Vec<(String, usize)>,
    /// Codes outside `1..=K` for their indicator. The checked constructor
    /// rejects such cells, so this is a defensive re-check and normally
    /// empty.
    pub out_of_range: Vec<OutOfRangeCell>,
    /// Number of rows listwise filtering would remove.
    pub rows_dropped: usize,
}

impl ValidationReport {
    /// True when no cell is missing or out of range.
    pub fn is_clean(&self) -> bool {
        self.out_of_range.is_empty() && self.missing_by_column.iter().all(|(_, c)| *c == 0)
    }
}

/// Location and value of a response code outside its indicator's range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutOfRangeCell {
    pub row: usize,
    pub column: String,
    pub value: u8,
}

impl Dataset {
    /// Builds a dataset from per-respondent response rows and covariate
    /// columns, enforcing unique names, consistent lengths and code
    /// ranges.
    pub fn new(
        indicators: Vec<Indicator>,
        rows: Vec<Vec<Option<u8>>>,
        covariates: Vec<(String, Vec<f64>)>,
    ) -> Result<Self> {
        if indicators.is_empty() {
            return Err(Error::InvalidDataset("no indicators declared".into()));
        }
        if rows.is_empty() {
            return Err(Error::InvalidDataset("dataset has zero rows".into()));
        }
        for (i, a) in indicators.iter().enumerate() {
            if indicators[..i].iter().any(|b| b.name() == a.name()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate indicator name `{}`",
                    a.name()
                )));
            }
        }
        for (i, (name, col)) in covariates.iter().enumerate() {
            if covariates[..i].iter().any(|(other, _)| other == name) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate covariate name `{name}`"
                )));
            }
            if indicators.iter().any(|ind| ind.name() == name) {
                return Err(Error::InvalidDataset(format!(
                    "covariate name `{name}` collides with an indicator; \
                     use a covariate alias instead of a second column"
                )));
            }
            if col.len() != rows.len() {
                return Err(Error::InvalidDataset(format!(
                    "covariate `{name}` has {} values for {} rows",
                    col.len(),
                    rows.len()
                )));
            }
        }

        let n_rows = rows.len();
        let j = indicators.len();
        let mut responses = Vec::with_capacity(n_rows * j);
        for (row_idx, row) in rows.into_iter().enumerate() {
            if row.len() != j {
                return Err(Error::InvalidDataset(format!(
                    "row {row_idx} has {} response cells for {j} indicators",
                    row.len()
                )));
            }
            for (col_idx, cell) in row.into_iter().enumerate() {
                if let Some(code) = cell {
                    let ind = &indicators[col_idx];
                    if code < 1 || code > ind.n_categories() {
                        return Err(Error::CodeOutOfRange {
                            row: row_idx,
                            indicator: ind.name().to_string(),
                            code,
                            n_categories: ind.n_categories(),
                        });
                    }
                }
                responses.push(cell);
            }
        }

        Ok(Self {
            indicators,
            responses,
            covariates,
            aliases: Vec::new(),
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_indicators(&self) -> usize {
        self.indicators.len()
    }

    pub fn indicators(&self) -> &[Indicator] {
        &self.indicators
    }

    pub fn indicator_index(&self, name: &str) -> Option<usize> {
        self.indicators.iter().position(|i| i.name() == name)
    }

    /// Response code for `(row, indicator)`; `None` = missing.
    pub fn code(&self, row: usize, indicator: usize) -> Option<u8> {
        self.responses[row * self.indicators.len() + indicator]
    }

    pub fn covariate_names(&self) -> impl Iterator<Item = &str> {
        self.covariates.iter().map(|(n, _)| n.as_str())
    }

    /// Raw covariate column, if one with this name exists.
    pub fn covariate(&self, name: &str) -> Option<&[f64]> {
        self.covariates
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, col)| col.as_slice())
    }

    /// Declares that an indicator's codes may be read as a numeric
    /// covariate column (code used as score).
    pub fn declare_covariate_alias(&mut self, name: &str) -> Result<()> {
        if self.indicator_index(name).is_none() {
            return Err(self.unknown_column(name));
        }
        if !self.aliases.iter().any(|a| a == name) {
            self.aliases.push(name.to_string());
        }
        Ok(())
    }

    pub fn covariate_aliases(&self) -> &[String] {
        &self.aliases
    }

    /// Numeric view of a column for design-matrix construction: a declared
    /// covariate, or an aliased indicator whose codes become scores
    /// (missing code = `NaN`).
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        if let Some(col) = self.covariate(name) {
            return Ok(col.to_vec());
        }
        if let Some(j) = self.indicator_index(name) {
            if !self.aliases.iter().any(|a| a == name) {
                return Err(Error::IndicatorNotAliased {
                    name: name.to_string(),
                });
            }
            return Ok((0..self.n_rows)
                .map(|i| self.code(i, j).map_or(f64::NAN, f64::from))
                .collect());
        }
        Err(self.unknown_column(name))
    }

    fn unknown_column(&self, name: &str) -> Error {
        let mut available: Vec<String> =
            self.covariate_names().map(ToString::to_string).collect();
        available.extend(self.indicators.iter().map(|i| i.name().to_string()));
        Error::UnknownColumn {
            name: name.to_string(),
            available,
        }
    }

    /// True when the row has no missing response and no `NaN` covariate.
    pub fn row_is_complete(&self, row: usize) -> bool {
        let j = self.indicators.len();
        let complete_responses = self.responses[row * j..(row + 1) * j]
            .iter()
            .all(Option::is_some);
        complete_responses
            && self
                .covariates
                .iter()
                .all(|(_, col)| !col[row].is_nan())
    }

    /// Enumerates missing and out-of-range cells and the listwise-drop
    /// count without modifying the dataset.
    pub fn validate(&self) -> ValidationReport {
        let j = self.indicators.len();
        let mut missing_by_column: Vec<(String, usize)> = self
            .indicators
            .iter()
            .map(|i| (i.name().to_string(), 0))
            .chain(self.covariates.iter().map(|(n, _)| (n.clone(), 0)))
            .collect();
        let mut out_of_range = Vec::new();
        let mut rows_dropped = 0;

        for row in 0..self.n_rows {
            let mut dropped = false;
            for col in 0..j {
                match self.code(row, col) {
                    None => {
                        missing_by_column[col].1 += 1;
                        dropped = true;
                    }
                    Some(code) => {
                        let ind = &self.indicators[col];
                        if code < 1 || code > ind.n_categories() {
                            out_of_range.push(OutOfRangeCell {
                                row,
                                column: ind.name().to_string(),
                                value: code,
                            });
                        }
                    }
                }
            }
            for (c, (_, col)) in self.covariates.iter().enumerate() {
                if col[row].is_nan() {
                    missing_by_column[j + c].1 += 1;
                    dropped = true;
                }
            }
            if dropped {
                rows_dropped += 1;
            }
        }

        ValidationReport {
            missing_by_column,
            out_of_range,
            rows_dropped,
        }
    }

    /// Keeps exactly the rows with no missing value in any indicator or
    /// covariate column, preserving order. Idempotent.
    pub fn listwise_filter(&self) -> Result<Self> {
        let keep: Vec<usize> = (0..self.n_rows)
            .filter(|&row| self.row_is_complete(row))
            .collect();
        if keep.is_empty() {
            return Err(Error::NoCompleteCases);
        }
        let j = self.indicators.len();
        let mut responses = Vec::with_capacity(keep.len() * j);
        for &row in &keep {
            responses.extend_from_slice(&self.responses[row * j..(row + 1) * j]);
        }
        let covariates = self
            .covariates
            .iter()
            .map(|(name, col)| {
                (name.clone(), keep.iter().map(|&row| col[row]).collect())
            })
            .collect();
        Ok(Self {
            indicators: self.indicators.clone(),
            responses,
            covariates,
            aliases: self.aliases.clone(),
            n_rows: keep.len(),
        })
    }
}
