//! Multi-restart EM estimation of latent class and latent class
//! regression models.
//!
//! Each restart draws seeded starting values, then alternates the E-step
//! with the closed-form item update and one damped Newton step on the
//! mixing coefficients (a generalized EM cycle, so the observed-data
//! log-likelihood never decreases). The winner is the restart with the
//! highest log-likelihood, ties going to the lowest restart index, and
//! its classes are permuted into a canonical order before it is returned.

mod logit;
mod se;
mod steps;

pub use logit::{class_priors, m_step_mixing, MixingUpdate};
pub use se::{
    beta_score, normal_two_sided_p, standard_errors, CoefficientRow, CoefficientTable, Contrast,
};
pub use steps::{e_step, init_params, m_step_items};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use ndarray::Array2;

use crate::data::{Dataset, Indicator};
use crate::error::Error;
use crate::formula::{build_design_matrix, DesignMatrix, Formula};
use crate::math;
use crate::Result;

/// Treatment of missing response codes during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Require complete cases; any missing cell is an error directing the
    /// caller to listwise filtering.
    #[default]
    Complete,
    /// Skip missing items in each respondent's likelihood product.
    /// Covariates must still be complete.
    Partial,
}

/// Convergence and reproducibility controls for [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitControls {
    /// EM iteration cap per restart.
    pub max_iter: usize,
    /// Convergence threshold on the absolute log-likelihood change.
    pub ll_tolerance: f64,
    /// Number of independently seeded restarts.
    pub n_restarts: usize,
    /// Base seed; each restart derives its own stream from it.
    pub seed: u64,
    /// Floor applied to item probabilities inside logarithms only;
    /// reported estimates are un-floored. Must lie in `[0, 0.01]`.
    pub probability_floor: f64,
    pub missing: MissingPolicy,
    /// Run restarts in parallel when the `rayon` feature is enabled.
    /// Results are identical either way; ignored without the feature.
    pub parallel: bool,
}

impl Default for FitControls {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            ll_tolerance: 1e-8,
            n_restarts: 10,
            seed: 0,
            probability_floor: 1e-12,
            missing: MissingPolicy::Complete,
            parallel: cfg!(feature = "rayon"),
        }
    }
}

/// What to fit: class count, indicator subset, mixing formula, controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub n_classes: usize,
    /// Indicators to fit, with their category counts; names must exist in
    /// the dataset with matching counts.
    pub indicators: Vec<Indicator>,
    /// Class-membership formula; intercept-only gives a plain latent
    /// class model.
    pub formula: Formula,
    pub controls: FitControls,
}

impl ModelSpec {
    pub fn new(n_classes: usize, indicators: Vec<Indicator>, formula: Formula) -> Self {
        Self {
            n_classes,
            indicators,
            formula,
            controls: FitControls::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 1 {
            return Err(Error::InvalidSpec("class count must be at least 1".into()));
        }
        if self.indicators.is_empty() {
            return Err(Error::InvalidSpec("no indicators selected".into()));
        }
        let c = &self.controls;
        if c.max_iter < 1 {
            return Err(Error::InvalidSpec("max_iter must be at least 1".into()));
        }
        if c.n_restarts < 1 {
            return Err(Error::InvalidSpec("n_restarts must be at least 1".into()));
        }
        if c.ll_tolerance <= 0.0 || !c.ll_tolerance.is_finite() {
            return Err(Error::InvalidSpec(
                "ll_tolerance must be positive and finite".into(),
            ));
        }
        if !(0.0..=0.01).contains(&c.probability_floor) {
            return Err(Error::InvalidSpec(
                "probability_floor must lie in [0, 0.01]".into(),
            ));
        }
        Ok(())
    }
}

/// Model parameters: class-conditional item probabilities and mixing
/// coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `item_probs[r][j][k]`: probability of category `k+1` of indicator
    /// `j` in class `r`; each `item_probs[r][j]` is a simplex.
    pub item_probs: Vec<Vec<Vec<f64>>>,
    /// `(R - 1) x P` contrast coefficients; class 1 is the reference and
    /// its zero row is implicit.
    pub beta: Array2<f64>,
}

impl Params {
    pub fn n_classes(&self) -> usize {
        self.item_probs.len()
    }

    /// Plain latent class parameters from explicit mixing shares: the
    /// coefficient column becomes the intercept-only log share ratios
    /// `ln(p_r / p_1)`.
    pub fn from_shares(item_probs: Vec<Vec<Vec<f64>>>, shares: &[f64]) -> Result<Self> {
        if shares.len() != item_probs.len() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "{} share entries for {} classes",
                shares.len(),
                item_probs.len()
            )));
        }
        let total: f64 = shares.iter().sum();
        if shares.iter().any(|&s| s.is_nan() || s <= 0.0) || (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidShares(alloc::format!(
                "shares must be positive and sum to 1, got sum {total}"
            )));
        }
        let mut beta = Array2::<f64>::zeros((shares.len() - 1, 1));
        for c in 1..shares.len() {
            beta[[c - 1, 0]] = math::ln(shares[c] / shares[0]);
        }
        let params = Self { item_probs, beta };
        params.validate()?;
        Ok(params)
    }

    /// Class shares implied by the coefficients, defined for
    /// intercept-only parameterizations: softmax of `(0, beta[.,0])`.
    pub fn mixing_shares(&self) -> Option<Vec<f64>> {
        if self.n_classes() == 1 {
            return Some(vec![1.0]);
        }
        if self.beta.ncols() != 1 {
            return None;
        }
        let mut scores = vec![0.0_f64];
        scores.extend(self.beta.column(0).iter());
        let lse = math::logsumexp(&scores);
        Some(scores.iter().map(|&s| math::exp(s - lse)).collect())
    }

    /// Checks simplex and shape invariants: every `item_probs[r][j]` sums
    /// to 1 within 1e-12 with entries in `[0, 1]`, shapes agree across
    /// classes, and `beta` has one row per non-reference class.
    pub fn validate(&self) -> Result<()> {
        let r_n = self.item_probs.len();
        if r_n == 0 {
            return Err(Error::InvalidSpec("no classes in parameters".into()));
        }
        let j_n = self.item_probs[0].len();
        if j_n == 0 {
            return Err(Error::InvalidSpec("no indicators in parameters".into()));
        }
        for (r, per_item) in self.item_probs.iter().enumerate() {
            if per_item.len() != j_n {
                return Err(Error::DimensionMismatch(alloc::format!(
                    "class {r} has {} indicators, class 0 has {j_n}",
                    per_item.len()
                )));
            }
            for (j, row) in per_item.iter().enumerate() {
                if row.len() != self.item_probs[0][j].len() || row.len() < 2 {
                    return Err(Error::DimensionMismatch(alloc::format!(
                        "inconsistent category count for indicator {j} in class {r}"
                    )));
                }
                let mut total = 0.0;
                for &p in row {
                    if !((-0.0..=1.0 + 1e-12).contains(&p)) || !p.is_finite() {
                        return Err(Error::InvalidSpec(alloc::format!(
                            "item probability {p} outside [0, 1] for indicator {j} in class {r}"
                        )));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidSpec(alloc::format!(
                        "item probabilities for indicator {j} in class {r} sum to {total}"
                    )));
                }
            }
        }
        if self.beta.nrows() != r_n - 1 {
            return Err(Error::DimensionMismatch(alloc::format!(
                "beta has {} rows for {} classes",
                self.beta.nrows(),
                r_n
            )));
        }
        if r_n > 1 && self.beta.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "beta has no columns; an intercept is required".into(),
            ));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidSpec("non-finite coefficient".into()));
        }
        Ok(())
    }
}

/// Non-fatal conditions recorded during fitting. Class and restart
/// indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub enum FitWarning {
    /// A class lost all posterior weight; its item probabilities were
    /// reset to uniform.
    EmptyClass { restart: usize, class: usize },
    /// The Newton step needed a ridge term to factor the Hessian.
    RidgedHessian { restart: usize, iteration: usize },
    /// The restart hit `max_iter` before the log-likelihood settled.
    NotConverged { restart: usize },
    /// The log-likelihood fell by more than the monotonicity slack;
    /// indicates a numerical problem.
    LikelihoodDecreased {
        restart: usize,
        iteration: usize,
        drop: f64,
    },
    /// More free parameters than response-pattern cells; estimates may be
    /// unidentifiable.
    OverParameterized { n_parameters: usize, n_cells: u128 },
    /// An indicator doubles as a covariate, which conflicts with local
    /// independence of the items given the class.
    IndicatorAsCovariate { name: String },
}

impl core::fmt::Display for FitWarning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::EmptyClass { restart, class } => write!(
                f,
                "restart {restart}: class {} lost all posterior weight; \
                 its item probabilities were reset to uniform",
                class + 1
            ),
            Self::RidgedHessian { restart, iteration } => write!(
                f,
                "restart {restart}: numerically singular Hessian at iteration \
                 {iteration}; ridge term added to the Newton step"
            ),
            Self::NotConverged { restart } => write!(
                f,
                "restart {restart}: iteration cap reached before convergence"
            ),
            Self::LikelihoodDecreased {
                restart,
                iteration,
                drop,
            } => write!(
                f,
                "restart {restart}: log-likelihood decreased by {drop:e} at \
                 iteration {iteration}"
            ),
            Self::OverParameterized {
                n_parameters,
                n_cells,
            } => write!(
                f,
                "{n_parameters} free parameters for {n_cells} response-pattern \
                 cells; the model may not be identifiable"
            ),
            Self::IndicatorAsCovariate { name } => write!(
                f,
                "indicator `{name}` is used both as a manifest indicator and \
                 as a covariate; local independence may be violated"
            ),
        }
    }
}

/// Response codes for the fitted indicator subset, row-major.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ResponseMatrix {
    pub(crate) indicators: Vec<Indicator>,
    codes: Vec<Option<u8>>,
    pub(crate) n_rows: usize,
}

impl ResponseMatrix {
    pub(crate) fn all_of(d: &Dataset) -> Self {
        let n_rows = d.n_rows();
        let j_n = d.n_indicators();
        let mut codes = Vec::with_capacity(n_rows * j_n);
        for i in 0..n_rows {
            for j in 0..j_n {
                codes.push(d.code(i, j));
            }
        }
        Self {
            indicators: d.indicators().to_vec(),
            codes,
            n_rows,
        }
    }

    fn subset_of(d: &Dataset, indicators: &[Indicator]) -> Result<Self> {
        let mut columns = Vec::with_capacity(indicators.len());
        for ind in indicators {
            let j = d.indicator_index(ind.name()).ok_or_else(|| Error::UnknownColumn {
                name: ind.name().into(),
                available: d.indicators().iter().map(|i| i.name().into()).collect(),
            })?;
            let have = d.indicators()[j].n_categories();
            if have != ind.n_categories() {
                return Err(Error::InvalidSpec(alloc::format!(
                    "indicator `{}` declared with {} categories but the dataset has {have}",
                    ind.name(),
                    ind.n_categories()
                )));
            }
            columns.push(j);
        }
        let n_rows = d.n_rows();
        let mut codes = Vec::with_capacity(n_rows * columns.len());
        for i in 0..n_rows {
            for &j in &columns {
                codes.push(d.code(i, j));
            }
        }
        Ok(Self {
            indicators: indicators.to_vec(),
            codes,
            n_rows,
        })
    }

    #[inline]
    pub(crate) fn code(&self, row: usize, indicator: usize) -> Option<u8> {
        self.codes[row * self.indicators.len() + indicator]
    }
}

/// The data a model was fitted on, retained so post-fit computations
/// (standard errors, goodness of fit) need no re-supplied dataset.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FitData {
    pub(crate) responses: ResponseMatrix,
    pub(crate) design: DesignMatrix,
}

/// A fitted model: parameters, posteriors, likelihood and fit metadata,
/// with classes in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    spec: ModelSpec,
    params: Params,
    posteriors: Array2<f64>,
    log_likelihood: f64,
    n_iterations: usize,
    restart_index: usize,
    converged: bool,
    estimated_shares: Vec<f64>,
    modal_shares: Vec<f64>,
    warnings: Vec<FitWarning>,
    ll_traces: Vec<Vec<f64>>,
    fit_data: FitData,
}

impl FittedModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// `n x R` posterior class-membership probabilities; rows sum to 1.
    pub fn posteriors(&self) -> &Array2<f64> {
        &self.posteriors
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// EM cycles the winning restart ran.
    pub fn n_iterations(&self) -> usize {
        self.n_iterations
    }

    pub fn restart_index(&self) -> usize {
        self.restart_index
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Estimated population shares: column means of the posteriors.
    pub fn estimated_shares(&self) -> &[f64] {
        &self.estimated_shares
    }

    /// Fractions of respondents assigned to each class by highest
    /// posterior probability.
    pub fn modal_shares(&self) -> &[f64] {
        &self.modal_shares
    }

    pub fn warnings(&self) -> &[FitWarning] {
        &self.warnings
    }

    /// Log-likelihood after each E-step of the winning restart.
    pub fn ll_trace(&self) -> &[f64] {
        &self.ll_traces[self.restart_index]
    }

    /// Log-likelihood traces of every restart, in restart order.
    pub fn ll_traces(&self) -> &[Vec<f64>] {
        &self.ll_traces
    }

    pub fn n_rows(&self) -> usize {
        self.posteriors.nrows()
    }

    /// 0-based most-probable class per respondent; posterior ties go to
    /// the lowest class index.
    pub fn modal_assignments(&self) -> Vec<usize> {
        (0..self.posteriors.nrows())
            .map(|i| argmax_row(&self.posteriors, i))
            .collect()
    }

    pub(crate) fn fit_responses(&self) -> &ResponseMatrix {
        &self.fit_data.responses
    }

    pub(crate) fn fit_design(&self) -> &DesignMatrix {
        &self.fit_data.design
    }
}

/// Number of free parameters: `sum_j R (K_j - 1)` item probabilities plus
/// `P (R - 1)` mixing coefficients.
pub fn count_parameters(spec: &ModelSpec) -> usize {
    let r = spec.n_classes;
    let items: usize = spec
        .indicators
        .iter()
        .map(|i| r * (i.n_categories() as usize - 1))
        .sum();
    items + spec.formula.n_terms() * (r - 1)
}

/// Number of distinct response patterns over the fitted indicators,
/// saturating at `u128::MAX`.
pub(crate) fn total_cells(indicators: &[Indicator]) -> u128 {
    indicators
        .iter()
        .fold(1u128, |acc, i| acc.saturating_mul(i.n_categories() as u128))
}

struct RestartRun {
    params: Params,
    theta: Array2<f64>,
    ll: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
    warnings: Vec<FitWarning>,
}

fn run_restart(
    spec: &ModelSpec,
    resp: &ResponseMatrix,
    x: &DesignMatrix,
    restart: usize,
) -> Result<RestartRun> {
    let controls = &spec.controls;
    let mut params = init_params(spec, restart);
    let (mut theta, mut ll) =
        steps::e_step_inner(&params, resp, x, controls.probability_floor, controls.missing)?;
    let mut trace = vec![ll];
    let mut warnings = Vec::new();
    let mut warned_empty: Vec<usize> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iteration in 1..=controls.max_iter {
        let (item_probs, empty) = steps::m_step_items_inner(&theta, resp);
        params.item_probs = item_probs;
        for class in empty {
            if !warned_empty.contains(&class) {
                warned_empty.push(class);
                warnings.push(FitWarning::EmptyClass { restart, class });
            }
        }
        if spec.n_classes > 1 {
            let update = logit::mixing_step_unchecked(&theta, x, &params.beta)?;
            if update.ridged {
                warnings.push(FitWarning::RidgedHessian { restart, iteration });
            }
            params.beta = update.beta;
        }
        let (theta_next, ll_next) =
            steps::e_step_inner(&params, resp, x, controls.probability_floor, controls.missing)?;
        trace.push(ll_next);
        if ll_next < ll - 1e-9 {
            warnings.push(FitWarning::LikelihoodDecreased {
                restart,
                iteration,
                drop: ll - ll_next,
            });
        }
        iterations = iteration;
        let delta = (ll_next - ll).abs();
        theta = theta_next;
        ll = ll_next;
        if delta < controls.ll_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(FitWarning::NotConverged { restart });
    }
    Ok(RestartRun {
        params,
        theta,
        ll,
        iterations,
        converged,
        trace,
        warnings,
    })
}

fn run_all_restarts(
    spec: &ModelSpec,
    resp: &ResponseMatrix,
    x: &DesignMatrix,
) -> Vec<Result<RestartRun>> {
    let n = spec.controls.n_restarts;
    #[cfg(feature = "rayon")]
    {
        if spec.controls.parallel {
            use rayon::prelude::*;
            return (0..n)
                .into_par_iter()
                .map(|restart| run_restart(spec, resp, x, restart))
                .collect();
        }
    }
    (0..n).map(|restart| run_restart(spec, resp, x, restart)).collect()
}

/// Fits the model by multi-restart EM and returns the canonicalized
/// winner. The result is a pure function of `(d, spec)`: per-restart
/// seeding makes it independent of scheduling and worker count.
pub fn fit(d: &Dataset, spec: &ModelSpec) -> Result<FittedModel> {
    spec.validate()?;
    let resp = ResponseMatrix::subset_of(d, &spec.indicators)?;
    let x = build_design_matrix(&spec.formula, d)?;
    if spec.controls.missing == MissingPolicy::Complete {
        for i in 0..resp.n_rows {
            for j in 0..resp.indicators.len() {
                if resp.code(i, j).is_none() {
                    return Err(Error::MissingData {
                        row: i,
                        column: resp.indicators[j].name().into(),
                    });
                }
            }
        }
    }
    if spec.n_classes > 1 {
        logit::check_full_rank(&x)?;
    }

    let mut warnings = Vec::new();
    for name in spec.formula.covariate_names() {
        if spec.indicators.iter().any(|ind| ind.name() == name) {
            warnings.push(FitWarning::IndicatorAsCovariate { name: name.into() });
        }
    }
    let n_parameters = count_parameters(spec);
    let n_cells = total_cells(&spec.indicators);
    if n_parameters as u128 + 1 > n_cells {
        warnings.push(FitWarning::OverParameterized {
            n_parameters,
            n_cells,
        });
    }

    let mut runs = Vec::with_capacity(spec.controls.n_restarts);
    for run in run_all_restarts(spec, &resp, &x) {
        runs.push(run?);
    }
    let mut best = 0;
    for (idx, run) in runs.iter().enumerate() {
        if run.ll > runs[best].ll {
            best = idx;
        }
    }
    let ll_traces: Vec<Vec<f64>> = runs.iter().map(|r| r.trace.clone()).collect();
    for run in &runs {
        warnings.extend(run.warnings.iter().cloned());
    }
    let winner = runs.swap_remove(best);

    let pre_shares = column_means(&winner.theta);
    let perm = canonical_permutation(&winner.params, &pre_shares, 0);
    let (params, posteriors) = apply_class_permutation(winner.params, &winner.theta, &perm);
    let estimated_shares = column_means(&posteriors);
    let modal_shares = modal_fractions(&posteriors);

    Ok(FittedModel {
        spec: spec.clone(),
        params,
        posteriors,
        log_likelihood: winner.ll,
        n_iterations: winner.iterations,
        restart_index: best,
        converged: winner.converged,
        estimated_shares,
        modal_shares,
        warnings,
        ll_traces,
        fit_data: FitData {
            responses: resp,
            design: x,
        },
    })
}

/// Re-orders classes so the anchor indicator's first-category probability
/// `pi[r][anchor][1]` is decreasing in `r`, ties broken by descending
/// estimated share. Posteriors, shares and coefficients are permuted
/// consistently and the coefficients re-referenced to the new class 1;
/// the log-likelihood is unchanged. Idempotent.
pub fn canonicalize(m: &FittedModel, anchor: &str) -> Result<FittedModel> {
    let resp = m.fit_responses();
    let anchor_idx = resp
        .indicators
        .iter()
        .position(|i| i.name() == anchor)
        .ok_or_else(|| Error::UnknownColumn {
            name: anchor.into(),
            available: resp.indicators.iter().map(|i| i.name().into()).collect(),
        })?;
    let perm = canonical_permutation(&m.params, &m.estimated_shares, anchor_idx);
    let (params, posteriors) = apply_class_permutation(m.params.clone(), &m.posteriors, &perm);
    let estimated_shares = perm.iter().map(|&r| m.estimated_shares[r]).collect();
    let modal_shares = perm.iter().map(|&r| m.modal_shares[r]).collect();
    Ok(FittedModel {
        params,
        posteriors,
        estimated_shares,
        modal_shares,
        ..m.clone()
    })
}

/// `order[new_class] = old_class`, sorted by descending anchor
/// first-category probability, then by descending share, then stably by
/// original index.
fn canonical_permutation(params: &Params, shares: &[f64], anchor: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..params.n_classes()).collect();
    order.sort_by(|&a, &b| {
        let key_a = params.item_probs[a][anchor][0];
        let key_b = params.item_probs[b][anchor][0];
        key_b
            .partial_cmp(&key_a)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(
                shares[b]
                    .partial_cmp(&shares[a])
                    .unwrap_or(core::cmp::Ordering::Equal),
            )
    });
    order
}

fn apply_class_permutation(
    params: Params,
    theta: &Array2<f64>,
    order: &[usize],
) -> (Params, Array2<f64>) {
    let r_n = order.len();
    let item_probs: Vec<Vec<Vec<f64>>> = order
        .iter()
        .map(|&old| params.item_probs[old].clone())
        .collect();

    // Re-reference the coefficients: with full rows beta_full[1] = 0,
    // beta_full[r] = beta[r - 1], the new contrast for new class c is
    // beta_full[order[c]] - beta_full[order[0]].
    let p_n = params.beta.ncols();
    let full_row = |class: usize, p: usize| -> f64 {
        if class == 0 {
            0.0
        } else {
            params.beta[[class - 1, p]]
        }
    };
    let mut beta = Array2::<f64>::zeros((r_n.saturating_sub(1), p_n));
    for c in 1..r_n {
        for p in 0..p_n {
            beta[[c - 1, p]] = full_row(order[c], p) - full_row(order[0], p);
        }
    }

    let mut permuted = Array2::<f64>::zeros((theta.nrows(), r_n));
    for (new_r, &old_r) in order.iter().enumerate() {
        for i in 0..theta.nrows() {
            permuted[[i, new_r]] = theta[[i, old_r]];
        }
    }
    (Params { item_probs, beta }, permuted)
}

fn column_means(theta: &Array2<f64>) -> Vec<f64> {
    let n = theta.nrows() as f64;
    (0..theta.ncols())
        .map(|r| theta.column(r).iter().sum::<f64>() / n)
        .collect()
}

fn argmax_row(theta: &Array2<f64>, row: usize) -> usize {
    let mut best = 0;
    for r in 1..theta.ncols() {
        if theta[[row, r]] > theta[[row, best]] {
            best = r;
        }
    }
    best
}

fn modal_fractions(theta: &Array2<f64>) -> Vec<f64> {
    let mut counts = vec![0usize; theta.ncols()];
    for i in 0..theta.nrows() {
        counts[argmax_row(theta, i)] += 1;
    }
    counts
        .into_iter()
        .map(|c| c as f64 / theta.nrows() as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn indicator(name: &str, k: u8) -> Indicator {
        Indicator::new(name, k).unwrap()
    }

    fn spec_with(r: usize, j: usize, k: u8, p_terms: &str) -> ModelSpec {
        let indicators = (0..j)
            .map(|idx| indicator(&alloc::format!("I{idx}"), k))
            .collect();
        ModelSpec::new(r, indicators, Formula::parse(p_terms).unwrap())
    }

    #[test]
    fn parameter_counts_cover_known_layouts() {
        let twelve = "a + b + c + d + e + f + g + h + i + j + k";
        assert_eq!(count_parameters(&spec_with(3, 8, 3, twelve)), 72);
        assert_eq!(count_parameters(&spec_with(2, 8, 3, twelve)), 44);
        assert_eq!(count_parameters(&spec_with(4, 8, 3, twelve)), 100);
        assert_eq!(count_parameters(&spec_with(3, 8, 3, "a + b + c")), 56);
        assert_eq!(count_parameters(&spec_with(1, 2, 2, "")), 2);
    }

    #[test]
    fn spec_validation_rejects_bad_controls() {
        let mut s = spec_with(2, 2, 2, "");
        s.n_classes = 0;
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
        let mut s = spec_with(2, 2, 2, "");
        s.controls.max_iter = 0;
        assert!(s.validate().is_err());
        let mut s = spec_with(2, 2, 2, "");
        s.controls.ll_tolerance = 0.0;
        assert!(s.validate().is_err());
        let mut s = spec_with(2, 2, 2, "");
        s.controls.probability_floor = 0.02;
        assert!(s.validate().is_err());
        let mut s = spec_with(2, 2, 2, "");
        s.controls.n_restarts = 0;
        assert!(s.validate().is_err());
    }

    /// Two well-separated classes over three binary items, no covariates.
    fn two_class_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| {
                let class = usize::from(rng.random::<f64>() < 0.4);
                (0..3)
                    .map(|_| {
                        let p_first = if class == 0 { 0.9 } else { 0.15 };
                        Some(if rng.random::<f64>() < p_first { 1 } else { 2 })
                    })
                    .collect()
            })
            .collect();
        Dataset::new(
            vec![indicator("A", 2), indicator("B", 2), indicator("C", 2)],
            rows,
            vec![],
        )
        .unwrap()
    }

    fn quick_controls() -> FitControls {
        FitControls {
            n_restarts: 4,
            max_iter: 300,
            ..FitControls::default()
        }
    }

    #[test]
    fn fit_is_deterministic_and_monotone() {
        let d = two_class_dataset(120, 3);
        let spec = ModelSpec {
            controls: quick_controls(),
            ..spec_with(2, 3, 2, "")
        };
        let spec = ModelSpec {
            indicators: d.indicators().to_vec(),
            ..spec
        };
        let a = fit(&d, &spec).unwrap();
        let b = fit(&d, &spec).unwrap();
        assert_eq!(a.log_likelihood().to_bits(), b.log_likelihood().to_bits());
        assert_eq!(a.params(), b.params());
        assert_eq!(a.posteriors(), b.posteriors());
        assert_eq!(a.restart_index(), b.restart_index());

        for trace in a.ll_traces() {
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "trace decreased: {} -> {}", w[0], w[1]);
            }
        }
        assert!(a.converged());

        let best_final = a
            .ll_traces()
            .iter()
            .map(|t| *t.last().unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.log_likelihood(), best_final);
    }

    #[test]
    fn fit_normalizations_and_share_vectors_hold() {
        let d = two_class_dataset(90, 11);
        let spec = ModelSpec {
            indicators: d.indicators().to_vec(),
            controls: quick_controls(),
            ..spec_with(2, 3, 2, "")
        };
        let m = fit(&d, &spec).unwrap();
        for i in 0..m.n_rows() {
            let total: f64 = (0..2).map(|r| m.posteriors()[[i, r]]).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(
            m.estimated_shares().iter().sum::<f64>(),
            1.0,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(m.modal_shares().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let assignments = m.modal_assignments();
        let frac_0 = assignments.iter().filter(|&&c| c == 0).count() as f64
            / assignments.len() as f64;
        assert_abs_diff_eq!(frac_0, m.modal_shares()[0], epsilon = 1e-12);
    }

    #[test]
    fn single_class_degenerate_item_is_exact() {
        let d = Dataset::new(
            vec![indicator("A", 3)],
            (0..5).map(|_| vec![Some(2)]).collect(),
            vec![],
        )
        .unwrap();
        let spec = ModelSpec {
            indicators: d.indicators().to_vec(),
            controls: FitControls {
                n_restarts: 1,
                ..FitControls::default()
            },
            ..spec_with(1, 1, 3, "")
        };
        let m = fit(&d, &spec).unwrap();
        assert_eq!(m.params().item_probs[0][0], vec![0.0, 1.0, 0.0]);
        assert_abs_diff_eq!(m.log_likelihood(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn canonical_order_is_restored_after_a_manual_swap() {
        let d = two_class_dataset(150, 7);
        let spec = ModelSpec {
            indicators: d.indicators().to_vec(),
            controls: quick_controls(),
            ..spec_with(2, 3, 2, "")
        };
        let m = fit(&d, &spec).unwrap();
        // Canonical: anchor first-category probability decreasing.
        assert!(m.params().item_probs[0][0][0] >= m.params().item_probs[1][0][0]);

        let again = canonicalize(&m, "A").unwrap();
        assert_eq!(again.params(), m.params());

        // Swap the two classes by re-anchoring on reversed probabilities:
        // build a swapped model by permuting manually.
        let perm = vec![1, 0];
        let (swapped_params, swapped_theta) =
            apply_class_permutation(m.params().clone(), m.posteriors(), &perm);
        let swapped = FittedModel {
            params: swapped_params,
            posteriors: swapped_theta,
            estimated_shares: perm.iter().map(|&r| m.estimated_shares[r]).collect(),
            modal_shares: perm.iter().map(|&r| m.modal_shares[r]).collect(),
            ..m.clone()
        };
        let restored = canonicalize(&swapped, "A").unwrap();
        assert_eq!(restored.params(), m.params());
        assert_eq!(restored.estimated_shares(), m.estimated_shares());
        assert_eq!(restored.log_likelihood(), m.log_likelihood());

        assert!(matches!(
            canonicalize(&m, "nope"),
            Err(Error::UnknownColumn { .. })
        ));
    }

    #[test]
    fn beta_is_rereferenced_when_classes_permute() {
        // Three classes with distinct intercepts; permuting must keep the
        // implied priors identical up to relabeling.
        let params = Params {
            item_probs: vec![
                vec![vec![0.2, 0.8]],
                vec![vec![0.5, 0.5]],
                vec![vec![0.9, 0.1]],
            ],
            beta: ndarray::arr2(&[[0.4], [-0.3]]),
        };
        let theta = Array2::from_elem((4, 3), 1.0 / 3.0);
        let order = vec![2, 0, 1];
        let (permuted, _) = apply_class_permutation(params.clone(), &theta, &order);
        let shares = params.mixing_shares().unwrap();
        let permuted_shares = permuted.mixing_shares().unwrap();
        for (new_r, &old_r) in order.iter().enumerate() {
            assert_abs_diff_eq!(permuted_shares[new_r], shares[old_r], epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_policies_gate_fitting() {
        let mut rows: Vec<Vec<Option<u8>>> = (0..30)
            .map(|i| vec![Some(1 + (i % 2) as u8), Some(1)])
            .collect();
        rows[4][1] = None;
        let d = Dataset::new(vec![indicator("A", 2), indicator("B", 2)], rows, vec![]).unwrap();
        let mut spec = ModelSpec {
            indicators: d.indicators().to_vec(),
            controls: FitControls {
                n_restarts: 2,
                max_iter: 50,
                ..FitControls::default()
            },
            ..spec_with(2, 2, 2, "")
        };
        match fit(&d, &spec) {
            Err(Error::MissingData { row, column }) => {
                assert_eq!(row, 4);
                assert_eq!(column, "B");
            }
            other => panic!("expected MissingData, got {other:?}"),
        }
        spec.controls.missing = MissingPolicy::Partial;
        let m = fit(&d, &spec).unwrap();
        assert!(m.log_likelihood().is_finite());
    }

    #[test]
    fn warnings_cover_overparameterization_and_indicator_reuse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = (0..40)
            .map(|_| {
                (0..2)
                    .map(|_| Some(if rng.random::<f64>() < 0.5 { 1 } else { 2 }))
                    .collect()
            })
            .collect();
        let mut d =
            Dataset::new(vec![indicator("A", 2), indicator("B", 2)], rows, vec![]).unwrap();
        d.declare_covariate_alias("A").unwrap();
        let spec = ModelSpec {
            indicators: d.indicators().to_vec(),
            formula: Formula::parse("A").unwrap(),
            controls: FitControls {
                n_restarts: 1,
                max_iter: 30,
                ..FitControls::default()
            },
            n_classes: 3,
        };
        let m = fit(&d, &spec).unwrap();
        assert!(m
            .warnings()
            .iter()
            .any(|w| matches!(w, FitWarning::OverParameterized { n_cells: 4, .. })));
        assert!(m.warnings().iter().any(
            |w| matches!(w, FitWarning::IndicatorAsCovariate { name } if name == "A")
        ));
    }

    #[test]
    fn unknown_or_mismatched_indicators_are_rejected() {
        let d = two_class_dataset(20, 1);
        let bad_name = ModelSpec {
            indicators: vec![indicator("Q", 2)],
            ..spec_with(2, 1, 2, "")
        };
        assert!(matches!(
            fit(&d, &bad_name),
            Err(Error::UnknownColumn { .. })
        ));
        let bad_k = ModelSpec {
            indicators: vec![indicator("A", 3)],
            ..spec_with(2, 1, 2, "")
        };
        assert!(matches!(fit(&d, &bad_k), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn params_from_shares_and_mixing_shares_round_trip() {
        let item = vec![vec![vec![0.7, 0.3]], vec![vec![0.2, 0.8]], vec![vec![0.5, 0.5]]];
        let shares = [0.5, 0.3, 0.2];
        let params = Params::from_shares(item, &shares).unwrap();
        let back = params.mixing_shares().unwrap();
        for (a, b) in back.iter().zip(shares.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(Params::from_shares(vec![vec![vec![0.5, 0.5]]], &[0.9]).is_err());
        let bad = Params::from_shares(
            vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]],
            &[0.5, 0.6],
        );
        assert!(matches!(bad, Err(Error::InvalidShares(_))));
    }

    #[cfg(feature = "rayon")]
    #[test]
    fn parallel_and_serial_fits_are_bit_identical() {
        let d = two_class_dataset(100, 19);
        let base = ModelSpec {
            indicators: d.indicators().to_vec(),
            controls: FitControls {
                n_restarts: 6,
                parallel: false,
                ..FitControls::default()
            },
            ..spec_with(2, 3, 2, "")
        };
        let serial = fit(&d, &base).unwrap();
        let mut par_spec = base.clone();
        par_spec.controls.parallel = true;
        let parallel = fit(&d, &par_spec).unwrap();
        assert_eq!(
            serial.log_likelihood().to_bits(),
            parallel.log_likelihood().to_bits()
        );
        assert_eq!(serial.params(), parallel.params());
        assert_eq!(serial.posteriors(), parallel.posteriors());
    }
}
