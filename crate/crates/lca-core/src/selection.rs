//! Model selection: information criteria, residual degrees of freedom,
//! and pattern-level goodness of fit across candidate models.
//!
//! Expected pattern frequencies aggregate class priors over respondents
//! first (`W_r = sum_i prior_ir`) and then weight each pattern's
//! class-conditional probability, so the cost is `cells x classes`
//! rather than `rows x cells`.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::Error;
use crate::estimator::{
    class_priors, count_parameters, fit, total_cells, FittedModel, ModelSpec, Params,
    ResponseMatrix,
};
use crate::formula::DesignMatrix;
use crate::math;
use crate::Result;

/// Largest response-pattern space for which expected frequencies are
/// computed by default.
pub const DEFAULT_CELL_CAP: usize = 1_000_000;

/// Akaike information criterion; lower is better.
pub fn aic(log_likelihood: f64, n_parameters: usize) -> f64 {
    -2.0 * log_likelihood + 2.0 * n_parameters as f64
}

/// Bayesian information criterion; lower is better.
pub fn bic(log_likelihood: f64, n_parameters: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + n_parameters as f64 * math::ln(n as f64)
}

/// Response-pattern cells minus estimated parameters minus one.
/// Negative values signal an over-parameterized model; the pattern
/// count saturates rather than overflowing.
pub fn residual_df(spec: &ModelSpec) -> i64 {
    let cells = total_cells(&spec.indicators).min(i128::MAX as u128) as i128;
    let df = cells - count_parameters(spec) as i128 - 1;
    df.clamp(i64::MIN as i128, i64::MAX as i128) as i64
}

/// One row of a model-comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub label: String,
    pub n_classes: usize,
    /// Respondents the model was fitted on.
    pub n: usize,
    pub n_parameters: usize,
    pub residual_df: i64,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    /// Pearson statistic; `None` when the pattern space exceeds the
    /// cell cap.
    pub chi_square: Option<f64>,
    /// Likelihood-ratio companion to `chi_square`.
    pub g_square: Option<f64>,
    pub estimated_shares: Vec<f64>,
    pub modal_shares: Vec<f64>,
    pub converged: bool,
}

/// Summarizes a fitted model; the goodness-of-fit columns start empty
/// and are attached by the scan and comparison drivers.
pub fn information_criteria(m: &FittedModel) -> FitSummary {
    let spec = m.spec();
    let k = count_parameters(spec);
    let n = m.n_rows();
    let ll = m.log_likelihood();
    FitSummary {
        label: alloc::format!("{} classes", spec.n_classes),
        n_classes: spec.n_classes,
        n,
        n_parameters: k,
        residual_df: residual_df(spec),
        log_likelihood: ll,
        aic: aic(ll, k),
        bic: bic(ll, k, n),
        chi_square: None,
        g_square: None,
        estimated_shares: m.estimated_shares().to_vec(),
        modal_shares: m.modal_shares().to_vec(),
        converged: m.converged(),
    }
}

/// Pattern-level fit statistics over complete response rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodnessOfFit {
    /// Pearson `sum (O - E)^2 / E` over all response patterns.
    pub chi_square: f64,
    /// Likelihood-ratio `2 sum O ln(O / E)` over observed patterns.
    pub g_square: f64,
}

/// Compares observed response-pattern counts with model-expected
/// counts `E_y = sum_r W_r P(y | class r)`. Rows with missing responses
/// contribute to neither side. Fails with [`Error::CellCapExceeded`]
/// when the pattern space is larger than `cell_cap`.
pub fn pearson_chi_square(m: &FittedModel, cell_cap: usize) -> Result<GoodnessOfFit> {
    goodness_of_fit_parts(m.params(), m.fit_responses(), m.fit_design(), cell_cap)
}

pub(crate) fn goodness_of_fit_parts(
    params: &Params,
    resp: &ResponseMatrix,
    design: &DesignMatrix,
    cell_cap: usize,
) -> Result<GoodnessOfFit> {
    let cells = total_cells(&resp.indicators);
    if cells > cell_cap as u128 {
        return Err(Error::CellCapExceeded { cells, cap: cell_cap });
    }
    let n_cells = cells as usize;
    let r_n = params.n_classes();
    let j_n = resp.indicators.len();
    let ks: Vec<usize> = resp
        .indicators
        .iter()
        .map(|i| i.n_categories() as usize)
        .collect();

    let priors: Array2<f64> = class_priors(params, design)?;

    // Observed counts and aggregated prior weights, complete rows only.
    let mut observed = vec![0u64; n_cells];
    let mut weights = vec![0.0_f64; r_n];
    for i in 0..resp.n_rows {
        let mut idx = 0usize;
        let mut complete = true;
        for j in 0..j_n {
            match resp.code(i, j) {
                Some(code) => idx = idx * ks[j] + (code as usize - 1),
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete {
            observed[idx] += 1;
            for r in 0..r_n {
                weights[r] += priors[[i, r]];
            }
        }
    }

    // Walk patterns in the same index order and accumulate both
    // statistics; cells that are empty on both sides contribute nothing.
    let mut chi_square = 0.0;
    let mut g_square = 0.0;
    let mut current = vec![0usize; j_n];
    for &o in &observed {
        let mut expected = 0.0;
        for r in 0..r_n {
            let mut product = weights[r];
            for j in 0..j_n {
                product *= params.item_probs[r][j][current[j]];
            }
            expected += product;
        }
        let o = o as f64;
        if o > 0.0 || expected > 0.0 {
            chi_square += (o - expected) * (o - expected) / expected;
            if o > 0.0 {
                g_square += 2.0 * o * math::ln(o / expected);
            }
        }

        let mut j = j_n;
        while j > 0 {
            j -= 1;
            current[j] += 1;
            if current[j] < ks[j] {
                break;
            }
            current[j] = 0;
        }
    }
    Ok(GoodnessOfFit { chi_square, g_square })
}

/// An ordered set of fitted-model summaries with the winners by each
/// criterion. Disagreements between AIC and BIC are surfaced, not
/// resolved: both indexes are reported.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub summaries: Vec<FitSummary>,
    /// Index of the lowest-BIC summary; ties resolve to the earliest.
    pub best_bic: usize,
    /// Index of the lowest-AIC summary; ties resolve to the earliest.
    pub best_aic: usize,
}

impl Comparison {
    fn from_summaries(summaries: Vec<FitSummary>) -> Self {
        fn argmin(summaries: &[FitSummary], key: fn(&FitSummary) -> f64) -> usize {
            let mut best = 0;
            for (i, s) in summaries.iter().enumerate().skip(1) {
                if key(s) < key(&summaries[best]) {
                    best = i;
                }
            }
            best
        }
        let best_bic = argmin(&summaries, |s| s.bic);
        let best_aic = argmin(&summaries, |s| s.aic);
        Self { summaries, best_bic, best_aic }
    }

    /// The BIC winner, the default selection rule.
    pub fn best(&self) -> &FitSummary {
        &self.summaries[self.best_bic]
    }

    pub fn criteria_agree(&self) -> bool {
        self.best_bic == self.best_aic
    }
}

fn attach_goodness_of_fit(s: &mut FitSummary, m: &FittedModel) -> Result<()> {
    match pearson_chi_square(m, DEFAULT_CELL_CAP) {
        Ok(gof) => {
            s.chi_square = Some(gof.chi_square);
            s.g_square = Some(gof.g_square);
            Ok(())
        }
        Err(Error::CellCapExceeded { .. }) => Ok(()),
        Err(e) => Err(e),
    }
}

/// Fits `base` at each class count in `classes` and tabulates the
/// results. Any fit failure is tagged with the class count that caused
/// it and aborts the scan.
pub fn scan_classes(d: &Dataset, base: &ModelSpec, classes: &[usize]) -> Result<Comparison> {
    if classes.is_empty() {
        return Err(Error::InvalidSpec("no class counts to scan".into()));
    }
    let mut summaries = Vec::with_capacity(classes.len());
    for &r in classes {
        let tag = |e: Error| Error::ScanFit { n_classes: r, source: Box::new(e) };
        let mut spec = base.clone();
        spec.n_classes = r;
        let m = fit(d, &spec).map_err(tag)?;
        let mut s = information_criteria(&m);
        attach_goodness_of_fit(&mut s, &m).map_err(tag)?;
        summaries.push(s);
    }
    Ok(Comparison::from_summaries(summaries))
}

/// Fits every labeled candidate on the same dataset and tabulates the
/// results. Any fit failure is tagged with the candidate's label and
/// aborts the comparison.
pub fn compare_models(d: &Dataset, candidates: &[(String, ModelSpec)]) -> Result<Comparison> {
    if candidates.is_empty() {
        return Err(Error::InvalidSpec("no candidate models to compare".into()));
    }
    let mut summaries = Vec::with_capacity(candidates.len());
    for (label, spec) in candidates {
        let tag = |e: Error| Error::CompareFit { label: label.clone(), source: Box::new(e) };
        let m = fit(d, spec).map_err(tag)?;
        let mut s = information_criteria(&m);
        s.label = label.clone();
        attach_goodness_of_fit(&mut s, &m).map_err(tag)?;
        summaries.push(s);
    }
    Ok(Comparison::from_summaries(summaries))
}
