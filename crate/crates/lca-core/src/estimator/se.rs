//! Coefficient standard errors from the empirical (outer-product)
//! information matrix over the full parameter vector.
//!
//! Item probabilities are parameterized with the last category dependent
//! (`K_j - 1` free parameters per class and item), so the information
//! matrix is square over `R . sum_j (K_j - 1)` item parameters plus
//! `(R - 1) . P` coefficients. Coefficient variances are read from the
//! inverse; cross-block correlation is thereby accounted for.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::Error;
use crate::formula::DesignMatrix;
use crate::math;
use crate::Result;

use super::logit::{log_class_priors, score_matrix};
use super::steps::e_step;
use super::{FittedModel, MissingPolicy, Params};

/// One line of a coefficient table: estimate, standard error and the
/// normal-approximation test statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub term: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

/// Coefficient rows for one contrast class against the reference class 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Contrast {
    /// 1-based class number of the contrast (2..=R).
    pub class: usize,
    pub rows: Vec<CoefficientRow>,
}

/// Per-contrast coefficient tables; empty for a single-class model.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    /// Design column labels, `(Intercept)` first.
    pub terms: Vec<String>,
    pub contrasts: Vec<Contrast>,
}

/// Two-sided p value for a standard-normal test statistic; the same
/// computation backs every `p_value` in a [`CoefficientTable`].
pub fn normal_two_sided_p(t: f64) -> f64 {
    math::normal_two_sided_p(t)
}

/// Observed-data score for the mixing coefficients at arbitrary
/// parameters: `score[c][p] = sum_i (theta[i][c+1] - prior[i][c+1])
/// x[i][p]` with `theta` the posteriors at those parameters.
pub fn beta_score(
    params: &Params,
    d: &Dataset,
    x: &DesignMatrix,
    probability_floor: f64,
    missing: MissingPolicy,
) -> Result<Array2<f64>> {
    let (theta, _) = e_step(params, d, x, probability_floor, missing)?;
    let priors = log_class_priors(&params.beta, x)?.mapv(math::exp);
    Ok(score_matrix(&theta, &priors, x))
}

/// Standard errors, t values and two-sided normal p values for every
/// mixing coefficient of a fitted model.
pub fn standard_errors(m: &FittedModel) -> Result<CoefficientTable> {
    let params = m.params();
    let resp = &m.fit_data.responses;
    let x = &m.fit_data.design;
    let theta = m.posteriors();
    let r_n = params.n_classes();
    let j_n = resp.indicators.len();
    let p_n = x.n_columns();
    let n = resp.n_rows;

    let terms: Vec<String> = x.labels().to_vec();
    if r_n == 1 {
        return Ok(CoefficientTable {
            terms,
            contrasts: Vec::new(),
        });
    }

    // Flat layout: item parameters (class, item, category) then
    // coefficients (contrast, term).
    let mut item_offsets = vec![vec![0usize; j_n]; r_n];
    let mut next = 0;
    for r in 0..r_n {
        for j in 0..j_n {
            item_offsets[r][j] = next;
            next += resp.indicators[j].n_categories() as usize - 1;
        }
    }
    let item_dim = next;
    let dim = item_dim + (r_n - 1) * p_n;

    let priors = log_class_priors(&params.beta, x)?.mapv(math::exp);
    let mut info = Array2::<f64>::zeros((dim, dim));
    let mut s = vec![0.0_f64; dim];
    for i in 0..n {
        s.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..r_n {
            let weight = theta[[i, r]];
            if weight == 0.0 {
                continue;
            }
            for j in 0..j_n {
                let Some(code) = resp.code(i, j) else {
                    continue;
                };
                let observed = (code - 1) as usize;
                let pi_row = &params.item_probs[r][j];
                let last = pi_row.len() - 1;
                let last_term = if observed == last {
                    1.0 / pi_row[last]
                } else {
                    0.0
                };
                let base = item_offsets[r][j];
                if observed < last {
                    s[base + observed] = weight / pi_row[observed];
                }
                if last_term != 0.0 {
                    for k in 0..last {
                        s[base + k] -= weight * last_term;
                    }
                }
            }
        }
        let xi = x.row(i);
        for c in 0..r_n - 1 {
            let resid = theta[[i, c + 1]] - priors[[i, c + 1]];
            for p in 0..p_n {
                s[item_dim + c * p_n + p] = resid * xi[p];
            }
        }
        for a in 0..dim {
            if s[a] == 0.0 {
                continue;
            }
            for b in 0..=a {
                info[[a, b]] += s[a] * s[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            info[[b, a]] = info[[a, b]];
        }
    }

    let inverse = math::Cholesky::new(&info)
        .ok_or(Error::SingularInformation)?
        .inverse();

    let contrasts = (0..r_n - 1)
        .map(|c| Contrast {
            class: c + 2,
            rows: terms
                .iter()
                .enumerate()
                .map(|(p, term)| {
                    let coefficient = params.beta[[c, p]];
                    let idx = item_dim + c * p_n + p;
                    let std_error = math::sqrt(inverse[[idx, idx]]);
                    let t_value = coefficient / std_error;
                    CoefficientRow {
                        term: term.clone(),
                        coefficient,
                        std_error,
                        t_value,
                        p_value: math::normal_two_sided_p(t_value),
                    }
                })
                .collect(),
        })
        .collect();

    Ok(CoefficientTable { terms, contrasts })
}
