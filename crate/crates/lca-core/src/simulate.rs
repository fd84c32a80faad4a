//! Synthetic data generation from known parameters and brute-force
//! likelihood oracles for small instances.
//!
//! Generation draws one seeded stream per respondent, so a dataset is a
//! pure function of its [`GeneratorSpec`] regardless of evaluation order.
//! The grid oracle in [`brute_force_loglik`] is deliberately coarse and
//! serves as a lower bound on the attainable log-likelihood, not as an
//! equality oracle.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Indicator};
use crate::error::Error;
use crate::estimator::{ModelSpec, Params};
use crate::formula::Formula;
use crate::math;
use crate::Result;

/// Domain tag mixed into per-respondent seeds; distinct from the
/// estimator's restart tag so the streams never collide.
const SEED_TAG: u8 = b'S';

/// How to generate one covariate column.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateKind {
    /// Use this column verbatim; its length must equal `n`.
    Column(Vec<f64>),
    /// Integer scores drawn uniformly from `low..=high`.
    UniformInt { low: i64, high: i64 },
}

/// A named covariate generator.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
}

/// Everything needed to sample a dataset from known parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub params: Params,
    pub indicators: Vec<Indicator>,
    pub covariates: Vec<CovariateSpec>,
    /// Class-membership formula; its names must refer to covariates.
    pub formula: Formula,
    pub n: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    /// A plain latent class generator: explicit shares, no covariates.
    pub fn from_shares(
        indicators: Vec<Indicator>,
        item_probs: Vec<Vec<Vec<f64>>>,
        shares: &[f64],
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        let spec = Self {
            params: Params::from_shares(item_probs, shares)?,
            indicators,
            covariates: Vec::new(),
            formula: Formula::intercept_only(),
            n,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n < 1 {
            return Err(Error::InvalidGenerator("n must be at least 1".into()));
        }
        if self.params.item_probs[0].len() != self.indicators.len() {
            return Err(Error::InvalidGenerator(alloc::format!(
                "parameters cover {} indicators but {} are declared",
                self.params.item_probs[0].len(),
                self.indicators.len()
            )));
        }
        for (j, ind) in self.indicators.iter().enumerate() {
            if self.params.item_probs[0][j].len() != ind.n_categories() as usize {
                return Err(Error::InvalidGenerator(alloc::format!(
                    "indicator `{}` has {} categories but parameters have {}",
                    ind.name(),
                    ind.n_categories(),
                    self.params.item_probs[0][j].len()
                )));
            }
        }
        for (i, c) in self.covariates.iter().enumerate() {
            if self.covariates[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::InvalidGenerator(alloc::format!(
                    "duplicate covariate `{}`",
                    c.name
                )));
            }
            if self.indicators.iter().any(|ind| ind.name() == c.name) {
                return Err(Error::InvalidGenerator(alloc::format!(
                    "covariate `{}` collides with an indicator name",
                    c.name
                )));
            }
            match &c.kind {
                CovariateKind::Column(col) => {
                    if col.len() != self.n {
                        return Err(Error::InvalidGenerator(alloc::format!(
                            "fixed column `{}` has {} values for n = {}",
                            c.name,
                            col.len(),
                            self.n
                        )));
                    }
                    if col.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidGenerator(alloc::format!(
                            "fixed column `{}` contains a non-finite value",
                            c.name
                        )));
                    }
                }
                CovariateKind::UniformInt { low, high } => {
                    if low > high {
                        return Err(Error::InvalidGenerator(alloc::format!(
                            "covariate `{}` has empty range {low}..={high}",
                            c.name
                        )));
                    }
                }
            }
        }
        for name in self.formula.covariate_names() {
            if !self.covariates.iter().any(|c| c.name == name) {
                return Err(Error::InvalidGenerator(alloc::format!(
                    "formula name `{name}` is not a generated covariate"
                )));
            }
        }
        if self.params.n_classes() > 1 && self.params.beta.ncols() != self.formula.n_terms() {
            return Err(Error::InvalidGenerator(alloc::format!(
                "beta has {} columns but the formula has {} terms",
                self.params.beta.ncols(),
                self.formula.n_terms()
            )));
        }
        Ok(())
    }
}

fn respondent_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&(row as u64).to_le_bytes());
    bytes[16] = SEED_TAG;
    ChaCha8Rng::from_seed(bytes)
}

/// Draws a categorical index from a probability row.
fn draw_category(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return k;
        }
    }
    probs.len() - 1
}

/// Samples a dataset and the true class labels (0-based), which are
/// returned out-of-band so recovery tests can align labels separately.
///
/// Per respondent: draw covariates, compute class priors from the
/// formula, draw the class, then draw each indicator from its
/// class-conditional row. Identical specs yield identical output.
pub fn sample_dataset(g: &GeneratorSpec) -> Result<(Dataset, Vec<usize>)> {
    g.validate()?;
    let r_n = g.params.n_classes();
    let j_n = g.indicators.len();
    let terms = g.formula.terms();

    let mut rows: Vec<Vec<Option<u8>>> = Vec::with_capacity(g.n);
    let mut labels = Vec::with_capacity(g.n);
    let mut columns: Vec<(String, Vec<f64>)> = g
        .covariates
        .iter()
        .map(|c| (c.name.clone(), Vec::with_capacity(g.n)))
        .collect();
    let mut values: BTreeMap<&str, f64> = BTreeMap::new();
    let mut scores = vec![0.0_f64; r_n];

    for i in 0..g.n {
        let mut rng = respondent_rng(g.seed, i);

        for (c, spec) in g.covariates.iter().enumerate() {
            let value = match &spec.kind {
                CovariateKind::Column(col) => col[i],
                CovariateKind::UniformInt { low, high } => {
                    rng.random_range(*low..=*high) as f64
                }
            };
            columns[c].1.push(value);
            values.insert(spec.name.as_str(), value);
        }

        // Log priors via the formula expansion of this row.
        scores[0] = 0.0;
        for c in 0..r_n - 1 {
            let mut s = 0.0;
            for (p, term) in terms.iter().enumerate() {
                let mut x = 1.0;
                for name in term.names() {
                    x *= values[name.as_str()];
                }
                s += x * g.params.beta[[c, p]];
            }
            scores[c + 1] = s;
        }
        let lse = math::logsumexp(&scores);
        let priors: Vec<f64> = scores.iter().map(|&s| math::exp(s - lse)).collect();

        let class = draw_category(&mut rng, &priors);
        labels.push(class);
        let mut row = Vec::with_capacity(j_n);
        for j in 0..j_n {
            let k = draw_category(&mut rng, &g.params.item_probs[class][j]);
            row.push(Some(k as u8 + 1));
        }
        rows.push(row);
    }

    let dataset = Dataset::new(g.indicators.clone(), rows, columns)?;
    Ok((dataset, labels))
}

/// The joint distribution over all response patterns for one covariate
/// row: `P(y) = sum_r prior[r] prod_j pi[r][j][y_j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    /// Response patterns as 1-based codes, last indicator varying
    /// fastest.
    pub patterns: Vec<Vec<u8>>,
    pub probs: Vec<f64>,
}

impl JointDistribution {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of a pattern in enumeration order.
    pub fn pattern_index(&self, pattern: &[u8]) -> Option<usize> {
        self.patterns.iter().position(|p| p == pattern)
    }
}

/// Size guard for [`enumerate_joint`]: at most this many patterns.
pub const MAX_JOINT_PATTERNS: u128 = 100_000;

/// Enumerates `P(y)` for every response pattern given one design row.
/// The returned masses sum to 1 within 1e-10.
pub fn enumerate_joint(params: &Params, x_row: &[f64]) -> Result<JointDistribution> {
    params.validate()?;
    let r_n = params.n_classes();
    if r_n > 1 && x_row.len() != params.beta.ncols() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "design row has {} entries but beta has {} columns",
            x_row.len(),
            params.beta.ncols()
        )));
    }
    let ks: Vec<usize> = params.item_probs[0].iter().map(Vec::len).collect();
    let cells = ks.iter().fold(1u128, |acc, &k| acc.saturating_mul(k as u128));
    if cells > MAX_JOINT_PATTERNS {
        return Err(Error::OracleGuard(alloc::format!(
            "{cells} response patterns exceed the enumeration cap of {MAX_JOINT_PATTERNS}"
        )));
    }

    let mut scores = vec![0.0_f64; r_n];
    for c in 0..r_n - 1 {
        let mut s = 0.0;
        for (p, &x) in x_row.iter().enumerate() {
            s += x * params.beta[[c, p]];
        }
        scores[c + 1] = s;
    }
    let lse = math::logsumexp(&scores);
    let priors: Vec<f64> = scores.iter().map(|&s| math::exp(s - lse)).collect();

    let n_patterns = cells as usize;
    let j_n = ks.len();
    let mut patterns = Vec::with_capacity(n_patterns);
    let mut probs = Vec::with_capacity(n_patterns);
    let mut current = vec![0usize; j_n];
    loop {
        let mut mass = 0.0;
        for r in 0..r_n {
            let mut product = priors[r];
            for j in 0..j_n {
                product *= params.item_probs[r][j][current[j]];
            }
            mass += product;
        }
        patterns.push(current.iter().map(|&k| k as u8 + 1).collect());
        probs.push(mass);

        // Odometer increment, last indicator fastest.
        let mut j = j_n;
        loop {
            if j == 0 {
                return Ok(JointDistribution { patterns, probs });
            }
            j -= 1;
            current[j] += 1;
            if current[j] < ks[j] {
                break;
            }
            current[j] = 0;
        }
    }
}

/// Exhaustive grid maximization of the observed-data log-likelihood for
/// tiny two-class binary instances; a lower-bound oracle for [`fit`].
///
/// The grid covers `{ k . grid_step : 0 < k . grid_step < 1 }` for every
/// item probability and for the first-class share, deliberately excluding
/// the boundary values 0 and 1.
///
/// [`fit`]: crate::estimator::fit
pub fn brute_force_loglik(d: &Dataset, spec: &ModelSpec, grid_step: f64) -> Result<f64> {
    let r_n = spec.n_classes;
    let j_n = spec.indicators.len();
    if r_n > 2 {
        return Err(Error::OracleGuard("more than 2 classes".into()));
    }
    if j_n > 3 {
        return Err(Error::OracleGuard("more than 3 indicators".into()));
    }
    if spec.indicators.iter().any(|i| i.n_categories() != 2) {
        return Err(Error::OracleGuard("indicators must be binary".into()));
    }
    if d.n_rows() > 50 {
        return Err(Error::OracleGuard("more than 50 rows".into()));
    }
    if !spec.formula.is_intercept_only() {
        return Err(Error::OracleGuard("formula must be intercept-only".into()));
    }
    if grid_step.is_nan() || grid_step < 0.01 {
        return Err(Error::OracleGuard("grid step must be at least 0.01".into()));
    }

    // Pattern counts over the fitted indicators; 2^J <= 8 patterns.
    let columns: Vec<usize> = spec
        .indicators
        .iter()
        .map(|ind| {
            d.indicator_index(ind.name()).ok_or_else(|| Error::UnknownColumn {
                name: ind.name().into(),
                available: d.indicators().iter().map(|i| i.name().into()).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let n_patterns = 1usize << j_n;
    let mut counts = vec![0u32; n_patterns];
    for i in 0..d.n_rows() {
        let mut idx = 0;
        for &j in &columns {
            let code = d.code(i, j).ok_or(Error::MissingData {
                row: i,
                column: d.indicators()[j].name().into(),
            })?;
            idx = (idx << 1) | (code as usize - 1);
        }
        counts[idx] += 1;
    }

    let grid: Vec<f64> = {
        let mut values = Vec::new();
        let mut k = 1usize;
        loop {
            let v = k as f64 * grid_step;
            if v >= 1.0 - 1e-12 {
                break;
            }
            values.push(v);
            k += 1;
        }
        values
    };
    let shares: Vec<f64> = if r_n == 1 { vec![1.0] } else { grid.clone() };

    // Odometer over all item-probability combinations (one first-category
    // probability per class and item), with the share as the outer loop.
    let slots = r_n * j_n;
    let mut best = f64::NEG_INFINITY;
    let mut pattern_class_prob = vec![0.0_f64; r_n];
    for &share in &shares {
        let class_weights = if r_n == 1 {
            vec![1.0]
        } else {
            vec![share, 1.0 - share]
        };
        let mut slot_idx = vec![0usize; slots];
        'combos: loop {
            let mut ll = 0.0;
            for (pattern, &count) in counts.iter().enumerate() {
                if count == 0 {
                    continue;
                }
                for (r, weight) in class_weights.iter().enumerate() {
                    let mut product = *weight;
                    for j in 0..j_n {
                        let p = grid[slot_idx[r * j_n + j]];
                        let bit = (pattern >> (j_n - 1 - j)) & 1;
                        product *= if bit == 0 { p } else { 1.0 - p };
                    }
                    pattern_class_prob[r] = product;
                }
                let mass: f64 = pattern_class_prob.iter().sum();
                ll += count as f64 * math::ln(mass);
            }
            if ll > best {
                best = ll;
            }

            let mut s = slots;
            loop {
                if s == 0 {
                    break 'combos;
                }
                s -= 1;
                slot_idx[s] += 1;
                if slot_idx[s] < grid.len() {
                    break;
                }
                slot_idx[s] = 0;
            }
        }
    }
    Ok(best)
}

/// The class relabeling (as `perm[fitted] = true`) that maximizes
/// agreement between fitted assignments and true labels, searched over
/// all permutations; exhaustive, so the class count is capped at 4.
/// Ties resolve to the lexicographically smallest permutation.
pub fn best_label_permutation(
    assigned: &[usize],
    truth: &[usize],
    n_classes: usize,
) -> Result<Vec<usize>> {
    if n_classes > 4 {
        return Err(Error::OracleGuard(
            "label alignment is exhaustive and capped at 4 classes".into(),
        ));
    }
    if assigned.len() != truth.len() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "{} assignments for {} labels",
            assigned.len(),
            truth.len()
        )));
    }
    let mut best_perm: Vec<usize> = (0..n_classes).collect();
    let mut best_agreement = 0usize;
    let mut first = true;
    permute((0..n_classes).collect(), &mut |perm| {
        let agreement = assigned
            .iter()
            .zip(truth)
            .filter(|&(&a, &t)| perm[a] == t)
            .count();
        if first || agreement > best_agreement {
            best_agreement = agreement;
            best_perm = perm.to_vec();
            first = false;
        }
    });
    Ok(best_perm)
}

/// Calls `visit` with every permutation of `items`, in lexicographic
/// order of the positions chosen.
fn permute(items: Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    fn recurse(
        remaining: &mut Vec<usize>,
        current: &mut Vec<usize>,
        visit: &mut impl FnMut(&[usize]),
    ) {
        if remaining.is_empty() {
            visit(current);
            return;
        }
        for idx in 0..remaining.len() {
            let item = remaining.remove(idx);
            current.push(item);
            recurse(remaining, current, visit);
            current.pop();
            remaining.insert(idx, item);
        }
    }
    let mut remaining = items;
    let mut current = Vec::new();
    recurse(&mut remaining, &mut current, visit);
}
