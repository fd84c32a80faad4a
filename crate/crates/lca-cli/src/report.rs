//! JSON report structures. A report embeds the fully resolved run
//! configuration and, for fits, everything needed to reproduce or
//! reuse the fit — the saved-fit format *is* the report, so diagnostics
//! can be recomputed from a report alone (or from a handcrafted one
//! holding published table values).
//!
//! Serialization uses `serde_json`'s shortest round-trippable float
//! rendering, so numbers survive a save/load cycle bit-exactly.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use lca_core::diagnostics::{ClassConditionalTable, ConsistencyReport, IndicatorFlag};
use lca_core::estimator::CoefficientTable;
use lca_core::selection::{Comparison, FitSummary};
use lca_core::{FitWarning, FittedModel, Indicator, Params};

use crate::error::{CliError, Result};

pub fn timestamp_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Top-level report; exactly one payload section is populated per
/// subcommand (diagnose fills `model` too when it fitted one).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub timestamp_unix: u64,
    pub config: ResolvedConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSection>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serialization");
        text.push('\n');
        text
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    /// The model section, required when a report is used as input.
    pub fn model_section(&self, path: &Path) -> Result<&ModelSection> {
        self.model.as_ref().ok_or_else(|| {
            CliError::Data(format!(
                "{}: report has no `model` section to work from",
                path.display()
            ))
        })
    }
}

/// Every setting a run resolved to, defaults included; echoed into the
/// report so the report reproduces itself.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub subcommand: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    /// Resolved indicator schema, category counts included.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicators: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<String>,
    /// One entry per candidate; single-model commands hold one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub formula: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<String>,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    pub tolerance: f64,
    pub missing: String,
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tables: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_consistent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_misclass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_out: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndicatorSection {
    pub name: String,
    pub n_categories: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientRowSection {
    pub term: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContrastSection {
    /// 1-based class compared against class 1.
    pub class: usize,
    pub rows: Vec<CoefficientRowSection>,
}

/// A fitted model in full: enough to diagnose, simulate from, or
/// re-render without the original data. Optional fields default so a
/// handcrafted report (published π and shares only) still loads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSection {
    pub n_classes: usize,
    pub indicators: Vec<IndicatorSection>,
    #[serde(default)]
    pub formula: String,
    #[serde(default)]
    pub n_rows: usize,
    #[serde(default)]
    pub rows_dropped: usize,
    #[serde(default)]
    pub n_parameters: usize,
    #[serde(default)]
    pub residual_df: i64,
    #[serde(default)]
    pub log_likelihood: f64,
    #[serde(default)]
    pub aic: f64,
    #[serde(default)]
    pub bic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi_square: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_square: Option<f64>,
    #[serde(default)]
    pub converged: bool,
    #[serde(default)]
    pub n_iterations: usize,
    #[serde(default)]
    pub restart_index: usize,
    pub estimated_shares: Vec<f64>,
    #[serde(default)]
    pub modal_shares: Vec<f64>,
    /// `item_probs[class][indicator][category]`.
    pub item_probs: Vec<Vec<Vec<f64>>>,
    /// `beta[class - 2][term]`, empty for plain latent class models
    /// fitted without covariates (shares carry the mixing information).
    #[serde(default)]
    pub beta: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<ContrastSection>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ModelSection {
    pub fn from_fit(
        m: &FittedModel,
        summary: &FitSummary,
        formula: String,
        rows_dropped: usize,
        coefficients: Option<&CoefficientTable>,
        extra_warnings: &[String],
    ) -> Self {
        let params = m.params();
        let mut warnings: Vec<String> =
            m.warnings().iter().map(FitWarning::to_string).collect();
        warnings.extend(extra_warnings.iter().cloned());
        Self {
            n_classes: summary.n_classes,
            indicators: m
                .spec()
                .indicators
                .iter()
                .map(|i| IndicatorSection {
                    name: i.name().to_string(),
                    n_categories: i.n_categories(),
                })
                .collect(),
            formula,
            n_rows: summary.n,
            rows_dropped,
            n_parameters: summary.n_parameters,
            residual_df: summary.residual_df,
            log_likelihood: summary.log_likelihood,
            aic: summary.aic,
            bic: summary.bic,
            chi_square: summary.chi_square,
            g_square: summary.g_square,
            converged: summary.converged,
            n_iterations: m.n_iterations(),
            restart_index: m.restart_index(),
            estimated_shares: summary.estimated_shares.clone(),
            modal_shares: summary.modal_shares.clone(),
            item_probs: params.item_probs.clone(),
            beta: params
                .beta
                .rows()
                .into_iter()
                .map(|row| row.to_vec())
                .collect(),
            coefficients: coefficients.map(|table| {
                table
                    .contrasts
                    .iter()
                    .map(|c| ContrastSection {
                        class: c.class,
                        rows: c
                            .rows
                            .iter()
                            .map(|r| CoefficientRowSection {
                                term: r.term.clone(),
                                coefficient: r.coefficient,
                                std_error: r.std_error,
                                t_value: r.t_value,
                                p_value: r.p_value,
                            })
                            .collect(),
                    })
                    .collect()
            }),
            warnings,
        }
    }

    pub fn indicator_list(&self) -> Result<Vec<Indicator>> {
        self.indicators
            .iter()
            .map(|s| Indicator::new(s.name.clone(), s.n_categories).map_err(CliError::from))
            .collect()
    }

    /// Rebuilds the class-conditional table (and shares) for
    /// diagnostics; tolerant of rounded transcribed probabilities.
    pub fn conditional_table(&self) -> Result<(ClassConditionalTable, Vec<f64>)> {
        let indicators = self.indicator_list()?;
        let j_n = indicators.len();
        let r_n = self.item_probs.len();
        if r_n == 0 || self.item_probs.iter().any(|block| block.len() != j_n) {
            return Err(CliError::Data(
                "report item_probs do not match the indicator list".into(),
            ));
        }
        let probs = (0..j_n)
            .map(|j| (0..r_n).map(|r| self.item_probs[r][j].clone()).collect())
            .collect();
        let table = ClassConditionalTable::new(indicators, probs)?;
        Ok((table, self.estimated_shares.clone()))
    }

    /// Rebuilds full parameters for simulation: coefficients when
    /// present, otherwise intercepts recovered from the shares.
    pub fn params(&self) -> Result<Params> {
        if self.beta.is_empty() || self.n_classes == 1 {
            Params::from_shares(self.item_probs.clone(), &self.estimated_shares)
                .map_err(CliError::from)
        } else {
            let rows = self.beta.len();
            let cols = self.beta[0].len();
            if rows != self.n_classes - 1 || self.beta.iter().any(|r| r.len() != cols) {
                return Err(CliError::Data("report beta has inconsistent shape".into()));
            }
            let mut beta = ndarray::Array2::zeros((rows, cols));
            for (c, row) in self.beta.iter().enumerate() {
                for (p, &value) in row.iter().enumerate() {
                    beta[[c, p]] = value;
                }
            }
            Ok(Params { item_probs: self.item_probs.clone(), beta })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummarySection {
    pub label: String,
    pub n_classes: usize,
    pub n: usize,
    pub n_parameters: usize,
    pub residual_df: i64,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi_square: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_square: Option<f64>,
    pub estimated_shares: Vec<f64>,
    pub modal_shares: Vec<f64>,
    pub converged: bool,
}

impl From<&FitSummary> for SummarySection {
    fn from(s: &FitSummary) -> Self {
        Self {
            label: s.label.clone(),
            n_classes: s.n_classes,
            n: s.n,
            n_parameters: s.n_parameters,
            residual_df: s.residual_df,
            log_likelihood: s.log_likelihood,
            aic: s.aic,
            bic: s.bic,
            chi_square: s.chi_square,
            g_square: s.g_square,
            estimated_shares: s.estimated_shares.clone(),
            modal_shares: s.modal_shares.clone(),
            converged: s.converged,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonSection {
    pub summaries: Vec<SummarySection>,
    /// Index into `summaries` of the BIC winner.
    pub best_bic: usize,
    pub best_aic: usize,
}

impl From<&Comparison> for ComparisonSection {
    fn from(c: &Comparison) -> Self {
        Self {
            summaries: c.summaries.iter().map(SummarySection::from).collect(),
            best_bic: c.best_bic,
            best_aic: c.best_aic,
        }
    }
}

pub fn flag_name(flag: IndicatorFlag) -> &'static str {
    match flag {
        IndicatorFlag::Ok => "ok",
        IndicatorFlag::Review => "review",
        IndicatorFlag::DropCandidate => "drop-candidate",
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyRowSection {
    pub indicator: String,
    pub p_consistent: f64,
    pub p_extreme_misclass: f64,
    pub extreme_false_positive: f64,
    pub extreme_false_negative: f64,
    pub flag: String,
}

/// One indicator's class-conditional rows, `rows[class][category]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableSection {
    pub indicator: String,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsSection {
    pub min_consistent: f64,
    pub max_misclass: f64,
    pub shares: Vec<f64>,
    pub class_labels: Vec<String>,
    pub records: Vec<ConsistencyRowSection>,
    pub average_consistent: f64,
    pub average_misclass: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tables: Option<Vec<TableSection>>,
}

impl DiagnosticsSection {
    pub fn build(
        report: &ConsistencyReport,
        table: &ClassConditionalTable,
        shares: &[f64],
        with_tables: bool,
    ) -> Self {
        Self {
            min_consistent: report.thresholds.min_consistent,
            max_misclass: report.thresholds.max_misclass,
            shares: shares.to_vec(),
            class_labels: table.class_labels(),
            records: report
                .records
                .iter()
                .map(|r| ConsistencyRowSection {
                    indicator: r.indicator.clone(),
                    p_consistent: r.p_consistent,
                    p_extreme_misclass: r.p_extreme_misclass,
                    extreme_false_positive: r.extreme_false_positive,
                    extreme_false_negative: r.extreme_false_negative,
                    flag: flag_name(r.flag).to_string(),
                })
                .collect(),
            average_consistent: report.average_consistent,
            average_misclass: report.average_misclass,
            tables: with_tables.then(|| {
                (0..table.n_indicators())
                    .map(|j| TableSection {
                        indicator: table.indicators()[j].name().to_string(),
                        rows: table.rows(j).to_vec(),
                    })
                    .collect()
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSection {
    pub seed: u64,
    pub n: usize,
    pub n_classes: usize,
    pub indicators: Vec<IndicatorSection>,
    pub formula: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<String>,
    pub data_path: String,
    pub labels_path: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_minimal_handcrafted_report_loads() {
        let text = r#"{
            "kind": "fit",
            "timestamp_unix": 0,
            "config": {
                "subcommand": "fit", "seed": 0, "restarts": 1, "max_iter": 1,
                "tolerance": 1e-8, "missing": "listwise", "format": "json"
            },
            "model": {
                "n_classes": 2,
                "indicators": [{"name": "A", "n_categories": 2}],
                "estimated_shares": [0.6, 0.4],
                "item_probs": [[[0.9, 0.1]], [[0.2, 0.8]]]
            }
        }"#;
        let report: Report = serde_json::from_str(text).unwrap();
        let section = report.model.as_ref().unwrap();
        let (table, shares) = section.conditional_table().unwrap();
        assert_eq!(table.n_classes(), 2);
        assert_eq!(shares, vec![0.6, 0.4]);
        assert_eq!(table.prob(0, 1, 1), 0.8);

        let params = section.params().unwrap();
        assert_eq!(params.n_classes(), 2);
        let recovered = params.mixing_shares().unwrap();
        assert!((recovered[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn reports_round_trip_through_json() {
        let report = Report {
            kind: "fit".into(),
            timestamp_unix: 123,
            config: ResolvedConfig {
                subcommand: "fit".into(),
                seed: 7,
                restarts: 10,
                max_iter: 1000,
                tolerance: 1e-8,
                missing: "listwise".into(),
                format: "json".into(),
                formula: vec!["Z + T".into()],
                ..ResolvedConfig::default()
            },
            model: Some(ModelSection {
                n_classes: 1,
                indicators: vec![IndicatorSection { name: "A".into(), n_categories: 2 }],
                formula: "1".into(),
                n_rows: 3,
                rows_dropped: 0,
                n_parameters: 1,
                residual_df: 0,
                log_likelihood: -1.9095425048844386,
                aic: 5.819085009768877,
                bic: 3.621925227240562,
                chi_square: Some(0.0),
                g_square: Some(0.0),
                converged: true,
                n_iterations: 2,
                restart_index: 0,
                estimated_shares: vec![1.0],
                modal_shares: vec![1.0],
                item_probs: vec![vec![vec![1.0 / 3.0, 2.0 / 3.0]]],
                beta: vec![],
                coefficients: None,
                warnings: vec![],
            }),
            comparison: None,
            diagnostics: None,
            generator: None,
        };
        let text = report.to_json();
        let back: Report = serde_json::from_str(&text).unwrap();
        // Floats survive exactly: shortest-round-trip rendering.
        assert_eq!(
            back.model.as_ref().unwrap().log_likelihood,
            report.model.as_ref().unwrap().log_likelihood
        );
        assert_eq!(back.model.unwrap().item_probs[0][0][0], 1.0 / 3.0);
    }
}
