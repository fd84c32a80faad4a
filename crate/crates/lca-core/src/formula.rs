//! Interaction-term formulas and their numeric design-matrix expansion.
//!
//! The grammar is deliberately minimal: `term (+ term)*` where a term is
//! `name (: name)*` and names are ASCII identifiers. The intercept is
//! implicit, always present and always first; the strings `""` and `"1"`
//! both denote an intercept-only formula. There is no `*` expansion
//! shorthand, so term lists stay explicit and auditable.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use ndarray::{Array2, ArrayView1};

use crate::data::Dataset;
use crate::error::Error;
use crate::Result;

/// One formula term: a set of covariate names, empty for the intercept.
///
/// Equality is set equality, so `A:Z` and `Z:A` are the same term; the
/// written order is kept separately for display.
#[derive(Debug, Clone)]
pub struct Term {
    /// Sorted unique names; the canonical identity of the term.
    names: Vec<String>,
    /// Names in first-written order; drives the display label.
    display: Vec<String>,
}

impl Term {
    pub fn intercept() -> Self {
        Self {
            names: Vec::new(),
            display: Vec::new(),
        }
    }

    /// A term over the given names, deduplicated with set semantics.
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut display: Vec<String> = Vec::new();
        for name in names {
            let name = name.into();
            if !display.contains(&name) {
                display.push(name);
            }
        }
        let mut names = display.clone();
        names.sort();
        Self { names, display }
    }

    pub fn is_intercept(&self) -> bool {
        self.names.is_empty()
    }

    /// Sorted unique covariate names.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `(Intercept)` or the written names joined with `:`.
    pub fn label(&self) -> String {
        if self.is_intercept() {
            "(Intercept)".to_string()
        } else {
            self.display.join(":")
        }
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
    }
}

impl Eq for Term {}

/// An ordered list of terms with the intercept first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    terms: Vec<Term>,
}

impl Formula {
    pub fn intercept_only() -> Self {
        Self {
            terms: vec![Term::intercept()],
        }
    }

    /// Parses `term (+ term)*`; `""` and `"1"` give an intercept-only
    /// formula. Errors carry the byte offset of the offending token.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() || text.trim() == "1" {
            return Ok(Self::intercept_only());
        }
        let mut terms = vec![Term::intercept()];
        let mut segment_start = 0;
        for (end, boundary) in text
            .char_indices()
            .filter(|&(_, c)| c == '+')
            .map(|(i, _)| (i, true))
            .chain(core::iter::once((text.len(), false)))
        {
            let term = parse_term(text, segment_start, end)?;
            if terms.contains(&term) {
                return Err(Error::DuplicateTerm { term: term.label() });
            }
            terms.push(term);
            if boundary {
                segment_start = end + 1;
            }
        }
        Ok(Self { terms })
    }

    /// Resolves `model0` / `model3` preset names.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "model0" => Some(Self::model0()),
            "model3" => Some(Self::model3()),
            _ => None,
        }
    }

    /// Baseline grouping-variable specification `Z + T + Z:T`.
    ///
    /// The term set is a reconstruction: it is the smallest interaction
    /// form consistent with this model's known coefficient count of four
    /// per contrast, not an explicitly published term list.
    pub fn model0() -> Self {
        Self::parse("Z + T + Z:T").expect("preset parses")
    }

    /// Full 12-term specification over indicators A, F and grouping
    /// variables Z, T, including all two- and three-way interactions.
    pub fn model3() -> Self {
        Self::parse("A + F + Z + T + A:Z + F:Z + A:T + F:T + Z:T + A:Z:T + F:Z:T")
            .expect("preset parses")
    }

    /// Terms in order; index 0 is always the intercept.
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Number of design columns `P` (intercept included).
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_intercept_only(&self) -> bool {
        self.terms.len() == 1
    }

    /// Column labels in term order, `(Intercept)` first.
    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(Term::label).collect()
    }

    /// Canonical text that parses back to an equal formula; the implicit
    /// intercept renders as `1` when it is the only term.
    pub fn render(&self) -> String {
        if self.is_intercept_only() {
            return "1".to_string();
        }
        self.terms[1..]
            .iter()
            .map(Term::label)
            .collect::<Vec<_>>()
            .join(" + ")
    }

    /// Distinct covariate names used by any term, in first-use order.
    pub fn covariate_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for term in &self.terms {
            for name in &term.display {
                if !names.contains(&name.as_str()) {
                    names.push(name);
                }
            }
        }
        names
    }
}

/// Parses one `name (: name)*` segment of `text` spanning `start..end`.
fn parse_term(text: &str, start: usize, end: usize) -> Result<Term> {
    let segment = &text[start..end];
    let trimmed = segment.trim_start();
    let term_pos = start + (segment.len() - trimmed.len());
    if trimmed.trim_end().is_empty() {
        return Err(Error::FormulaParse {
            position: term_pos,
            message: "expected a term".to_string(),
        });
    }
    let mut names = Vec::new();
    let mut piece_start = 0;
    let body = trimmed.trim_end();
    for (i, split) in body
        .char_indices()
        .filter(|&(_, c)| c == ':')
        .map(|(i, _)| (i, true))
        .chain(core::iter::once((body.len(), false)))
    {
        let piece = &body[piece_start..i];
        let name = piece.trim();
        let name_pos = term_pos + piece_start + (piece.len() - piece.trim_start().len());
        validate_name(name, name_pos)?;
        names.push(name);
        if split {
            piece_start = i + 1;
        }
    }
    Ok(Term::new(names))
}

fn validate_name(name: &str, position: usize) -> Result<()> {
    let mut chars = name.char_indices();
    match chars.next() {
        None => {
            return Err(Error::FormulaParse {
                position,
                message: "expected a name".to_string(),
            })
        }
        Some((_, c)) if !(c.is_ascii_alphabetic() || c == '_') => {
            return Err(Error::FormulaParse {
                position,
                message: alloc::format!("name must start with a letter or `_`, got `{c}`"),
            })
        }
        Some(_) => {}
    }
    for (i, c) in chars {
        if !(c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::FormulaParse {
                position: position + i,
                message: alloc::format!("invalid character `{c}` in name"),
            });
        }
    }
    Ok(())
}

/// The numeric expansion of a formula over a dataset: an `n x P` matrix
/// whose first column is all ones and whose later columns are elementwise
/// products of the named covariate columns. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: Array2<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.x.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }
}

#[cfg(test)]
impl DesignMatrix {
    /// Wraps a pre-built matrix directly; in-crate test helper.
    pub(crate) fn from_parts(x: Array2<f64>, labels: Vec<String>) -> Self {
        Self { x, labels }
    }
}

/// Expands a formula against a dataset's numeric columns.
///
/// Every name must resolve to a covariate column or an explicitly aliased
/// indicator; any `NaN` or infinite value in a used column is an error, so
/// the resulting matrix is finite everywhere.
pub fn build_design_matrix(f: &Formula, d: &Dataset) -> Result<DesignMatrix> {
    let n = d.n_rows();
    let mut columns: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for name in f.covariate_names() {
        let col = d.numeric_column(name)?;
        for (row, &v) in col.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteCovariate {
                    row,
                    column: name.to_string(),
                });
            }
        }
        columns.insert(name, col);
    }

    let mut x = Array2::<f64>::ones((n, f.n_terms()));
    for (p, term) in f.terms().iter().enumerate() {
        for name in term.names() {
            let col = &columns[name.as_str()];
            for i in 0..n {
                x[[i, p]] *= col[i];
            }
        }
    }
    Ok(DesignMatrix {
        x,
        labels: f.labels(),
    })
}
