//! Response-consistency diagnostics: class-conditional probability
//! tables, extreme-response bias, and per-indicator screening flags.
//!
//! The consistency probabilities assume the diagonal convention that
//! category `r` is the consistent answer for class `r`, which requires
//! each indicator to have exactly as many categories as there are
//! classes. The bias corners are defined for any table.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::Indicator;
use crate::error::Error;
use crate::estimator::FittedModel;
use crate::Result;

/// Class-conditional response probabilities laid out per indicator:
/// `probs[j][r][k]` is `P(category k+1 | class r+1)` for indicator `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassConditionalTable {
    indicators: Vec<Indicator>,
    probs: Vec<Vec<Vec<f64>>>,
    n_classes: usize,
}

/// Slack allowed on row sums so tables transcribed from rounded,
/// published probabilities still validate.
const ROUNDED_ROW_TOLERANCE: f64 = 5e-3;

impl ClassConditionalTable {
    /// Builds a table from explicit probabilities, e.g. transcribed
    /// from a published report. Rows may be rounded; sums must still
    /// be within [`ROUNDED_ROW_TOLERANCE`] of 1.
    pub fn new(indicators: Vec<Indicator>, probs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if indicators.is_empty() || probs.len() != indicators.len() {
            return Err(Error::InvalidSpec(alloc::format!(
                "{} probability blocks for {} indicators",
                probs.len(),
                indicators.len()
            )));
        }
        let n_classes = probs[0].len();
        if n_classes == 0 {
            return Err(Error::InvalidSpec("no classes in the table".into()));
        }
        for (j, block) in probs.iter().enumerate() {
            if block.len() != n_classes {
                return Err(Error::InvalidSpec(alloc::format!(
                    "indicator `{}` has {} class rows, expected {n_classes}",
                    indicators[j].name(),
                    block.len()
                )));
            }
            for row in block {
                if row.len() != indicators[j].n_categories() as usize {
                    return Err(Error::InvalidSpec(alloc::format!(
                        "indicator `{}` has rows of {} categories, declared {}",
                        indicators[j].name(),
                        row.len(),
                        indicators[j].n_categories()
                    )));
                }
                let mut total = 0.0;
                for &p in row {
                    if !(-1e-9..=1.0 + 1e-9).contains(&p) {
                        return Err(Error::InvalidSpec(alloc::format!(
                            "probability {p} outside [0, 1] for indicator `{}`",
                            indicators[j].name()
                        )));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > ROUNDED_ROW_TOLERANCE {
                    return Err(Error::InvalidSpec(alloc::format!(
                        "row for indicator `{}` sums to {total}",
                        indicators[j].name()
                    )));
                }
            }
        }
        Ok(Self { indicators, probs, n_classes })
    }

    /// Projects a fitted model's item probabilities into table layout.
    pub fn from_model(m: &FittedModel) -> Self {
        let item_probs = &m.params().item_probs;
        let n_classes = item_probs.len();
        let indicators = m.spec().indicators.clone();
        let probs = (0..indicators.len())
            .map(|j| (0..n_classes).map(|r| item_probs[r][j].clone()).collect())
            .collect();
        Self { indicators, probs, n_classes }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_indicators(&self) -> usize {
        self.indicators.len()
    }

    pub fn indicators(&self) -> &[Indicator] {
        &self.indicators
    }

    /// The class rows for one indicator, `[r][k]`.
    pub fn rows(&self, indicator: usize) -> &[Vec<f64>] {
        &self.probs[indicator]
    }

    pub fn prob(&self, indicator: usize, class: usize, category: usize) -> f64 {
        self.probs[indicator][class][category]
    }

    /// Display names for the classes. A three-class table uses the
    /// response-style reading of the canonical order; other sizes are
    /// numbered.
    pub fn class_labels(&self) -> Vec<String> {
        if self.n_classes == 3 {
            ["Positive", "Indifferent", "Negative"]
                .iter()
                .map(|s| String::from(*s))
                .collect()
        } else {
            (1..=self.n_classes)
                .map(|r| alloc::format!("Class {r}"))
                .collect()
        }
    }
}

/// Builds the class-conditional table of a fitted model.
pub fn class_conditional_table(m: &FittedModel) -> ClassConditionalTable {
    ClassConditionalTable::from_model(m)
}

/// The two off-diagonal corners of one indicator's table: the extreme
/// false positive rate `P(first category | last class)` and the
/// extreme false negative rate `P(last category | first class)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeBias {
    pub indicator: String,
    pub extreme_false_positive: f64,
    pub extreme_false_negative: f64,
}

/// Extracts both extreme-bias corners for every indicator.
pub fn extreme_bias(table: &ClassConditionalTable) -> Vec<ExtremeBias> {
    let last_class = table.n_classes() - 1;
    table
        .indicators()
        .iter()
        .enumerate()
        .map(|(j, ind)| {
            let last_category = ind.n_categories() as usize - 1;
            ExtremeBias {
                indicator: ind.name().into(),
                extreme_false_positive: table.prob(j, last_class, 0),
                extreme_false_negative: table.prob(j, 0, last_category),
            }
        })
        .collect()
}

/// The consistency pair for one indicator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyPair {
    /// Share-weighted diagonal mass: the probability that a random
    /// respondent gives the answer matching their class.
    pub p_consistent: f64,
    /// Share-weighted mass on the two extreme corners: the probability
    /// of an answer from the opposite end of the scale.
    pub p_extreme_misclass: f64,
}

fn check_shares(shares: &[f64], n_classes: usize) -> Result<()> {
    if shares.len() != n_classes {
        return Err(Error::InvalidShares(alloc::format!(
            "{} shares for {n_classes} classes",
            shares.len()
        )));
    }
    let mut total = 0.0;
    for &s in shares {
        if !(0.0..=1.0 + 1e-9).contains(&s) {
            return Err(Error::InvalidShares(alloc::format!(
                "share {s} outside [0, 1]"
            )));
        }
        total += s;
    }
    // Same slack as the table rows: shares are often transcribed
    // rounded.
    if (total - 1.0).abs() > ROUNDED_ROW_TOLERANCE {
        return Err(Error::InvalidShares(alloc::format!("shares sum to {total}")));
    }
    Ok(())
}

/// Computes the consistency pair for every indicator. Every indicator
/// must have exactly `n_classes` categories for the diagonal to be
/// meaningful; `p_consistent + p_extreme_misclass <= 1` always holds.
pub fn consistency_probs(
    table: &ClassConditionalTable,
    shares: &[f64],
) -> Result<Vec<ConsistencyPair>> {
    let r_n = table.n_classes();
    check_shares(shares, r_n)?;
    let mut pairs = Vec::with_capacity(table.n_indicators());
    for (j, ind) in table.indicators().iter().enumerate() {
        let k_n = ind.n_categories() as usize;
        if k_n != r_n {
            return Err(Error::DiagonalUndefined {
                indicator: ind.name().into(),
                n_categories: k_n,
                n_classes: r_n,
            });
        }
        let mut p_consistent = 0.0;
        for r in 0..r_n {
            p_consistent += shares[r] * table.prob(j, r, r);
        }
        let p_extreme_misclass =
            shares[0] * table.prob(j, 0, k_n - 1) + shares[r_n - 1] * table.prob(j, r_n - 1, 0);
        pairs.push(ConsistencyPair { p_consistent, p_extreme_misclass });
    }
    Ok(pairs)
}

/// Screening outcome for one indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndicatorFlag {
    /// Comfortably inside both thresholds.
    Ok,
    /// Inside both thresholds but within the review margin of one.
    Review,
    /// Outside at least one threshold.
    DropCandidate,
}

/// Screening thresholds: an indicator should keep at least
/// `min_consistent` share-weighted diagonal mass and at most
/// `max_misclass` extreme-corner mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub min_consistent: f64,
    pub max_misclass: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { min_consistent: 0.40, max_misclass: 0.20 }
    }
}

/// Indicators inside the thresholds but closer than this to either one
/// are flagged for review rather than passed.
pub const REVIEW_MARGIN: f64 = 0.05;

impl Thresholds {
    pub fn flag(&self, pair: &ConsistencyPair) -> IndicatorFlag {
        if pair.p_consistent < self.min_consistent || pair.p_extreme_misclass > self.max_misclass {
            IndicatorFlag::DropCandidate
        } else if pair.p_consistent < self.min_consistent + REVIEW_MARGIN
            || pair.p_extreme_misclass > self.max_misclass - REVIEW_MARGIN
        {
            IndicatorFlag::Review
        } else {
            IndicatorFlag::Ok
        }
    }
}

/// Everything the screening derives for one indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyRecord {
    pub indicator: String,
    pub p_consistent: f64,
    pub p_extreme_misclass: f64,
    pub extreme_false_positive: f64,
    pub extreme_false_negative: f64,
    pub flag: IndicatorFlag,
}

/// Per-indicator screening records plus their exact arithmetic means.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub records: Vec<ConsistencyRecord>,
    pub average_consistent: f64,
    pub average_misclass: f64,
    pub thresholds: Thresholds,
}

/// Builds the screening report from an explicit table and shares.
pub fn consistency_report_from(
    table: &ClassConditionalTable,
    shares: &[f64],
    thresholds: Thresholds,
) -> Result<ConsistencyReport> {
    let pairs = consistency_probs(table, shares)?;
    let bias = extreme_bias(table);
    let records: Vec<ConsistencyRecord> = pairs
        .iter()
        .zip(bias)
        .map(|(pair, b)| ConsistencyRecord {
            indicator: b.indicator,
            p_consistent: pair.p_consistent,
            p_extreme_misclass: pair.p_extreme_misclass,
            extreme_false_positive: b.extreme_false_positive,
            extreme_false_negative: b.extreme_false_negative,
            flag: thresholds.flag(pair),
        })
        .collect();
    let n = records.len() as f64;
    let average_consistent = records.iter().map(|r| r.p_consistent).sum::<f64>() / n;
    let average_misclass = records.iter().map(|r| r.p_extreme_misclass).sum::<f64>() / n;
    Ok(ConsistencyReport { records, average_consistent, average_misclass, thresholds })
}

/// Builds the screening report for a fitted model using its estimated
/// class shares.
pub fn consistency_report(m: &FittedModel, thresholds: Thresholds) -> Result<ConsistencyReport> {
    consistency_report_from(
        &ClassConditionalTable::from_model(m),
        m.estimated_shares(),
        thresholds,
    )
}
