//! Restart initialization and the two closed-form EM steps: posterior
//! computation (E) and item-probability re-estimation (M).

use alloc::vec;
use alloc::vec::Vec;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::Error;
use crate::formula::DesignMatrix;
use crate::math;
use crate::Result;

use super::logit::log_class_priors;
use super::{MissingPolicy, ModelSpec, Params, ResponseMatrix};

/// Domain tag mixed into restart seeds so estimator streams never collide
/// with generator streams built from the same user seed.
const SEED_TAG: u8 = b'E';

/// Deterministic random starting values for one restart: item
/// probabilities as normalized independent uniforms, coefficients zero
/// except contrast intercepts drawn uniform in [-0.1, 0.1].
///
/// Values are drawn in a fixed order (item probabilities in class, item,
/// category order, then intercepts by class), so a `(seed, restart)` pair
/// always yields the same parameters.
pub fn init_params(spec: &ModelSpec, restart: usize) -> Params {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&spec.controls.seed.to_le_bytes());
    seed[8..16].copy_from_slice(&(restart as u64).to_le_bytes());
    seed[16] = SEED_TAG;
    let mut rng = ChaCha8Rng::from_seed(seed);

    let r_n = spec.n_classes;
    let mut item_probs = Vec::with_capacity(r_n);
    for _ in 0..r_n {
        let mut per_item = Vec::with_capacity(spec.indicators.len());
        for indicator in &spec.indicators {
            let k = indicator.n_categories() as usize;
            let mut row: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let total: f64 = row.iter().sum();
            for v in &mut row {
                *v /= total;
            }
            per_item.push(row);
        }
        item_probs.push(per_item);
    }

    let p_n = spec.formula.n_terms();
    let mut beta = Array2::<f64>::zeros((r_n - 1, p_n));
    for c in 0..r_n - 1 {
        beta[[c, 0]] = rng.random_range(-0.1..0.1);
    }

    Params { item_probs, beta }
}

/// Posterior class memberships and the observed-data log-likelihood.
///
/// `theta[i][r]` is proportional to `prior[i][r] . prod_j pi[r][j][y_ij]`,
/// evaluated in log space; `probability_floor` clamps item probabilities
/// inside the logarithms only. Under [`MissingPolicy::Partial`] a missing
/// response drops out of the product; under [`MissingPolicy::Complete`]
/// it is an error.
pub fn e_step(
    params: &Params,
    d: &Dataset,
    x: &DesignMatrix,
    probability_floor: f64,
    missing: MissingPolicy,
) -> Result<(Array2<f64>, f64)> {
    params.validate()?;
    let resp = ResponseMatrix::all_of(d);
    e_step_inner(params, &resp, x, probability_floor, missing)
}

pub(crate) fn e_step_inner(
    params: &Params,
    resp: &ResponseMatrix,
    x: &DesignMatrix,
    probability_floor: f64,
    missing: MissingPolicy,
) -> Result<(Array2<f64>, f64)> {
    let n = resp.n_rows;
    let r_n = params.n_classes();
    let j_n = resp.indicators.len();
    if params.item_probs[0].len() != j_n {
        return Err(Error::DimensionMismatch(alloc::format!(
            "parameters cover {} indicators but the data has {j_n}",
            params.item_probs[0].len()
        )));
    }
    for (j, indicator) in resp.indicators.iter().enumerate() {
        let k = indicator.n_categories() as usize;
        if params.item_probs[0][j].len() != k {
            return Err(Error::DimensionMismatch(alloc::format!(
                "indicator `{}` has {k} categories but parameters have {}",
                indicator.name(),
                params.item_probs[0][j].len()
            )));
        }
    }
    if x.n_rows() != n {
        return Err(Error::DimensionMismatch(alloc::format!(
            "{n} data rows but {} design rows",
            x.n_rows()
        )));
    }

    // Logs of the (floored) item probabilities, computed once per call.
    let log_pi: Vec<Vec<Vec<f64>>> = params
        .item_probs
        .iter()
        .map(|per_item| {
            per_item
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&p| math::ln(p.max(probability_floor)))
                        .collect()
                })
                .collect()
        })
        .collect();

    let log_priors = log_class_priors(&params.beta, x)?;
    let mut theta = Array2::<f64>::zeros((n, r_n));
    let mut ll = 0.0;
    let mut scores = vec![0.0_f64; r_n];
    for i in 0..n {
        for (r, score) in scores.iter_mut().enumerate() {
            *score = log_priors[[i, r]];
        }
        for j in 0..j_n {
            match resp.code(i, j) {
                Some(code) => {
                    let k = (code - 1) as usize;
                    for (r, score) in scores.iter_mut().enumerate() {
                        *score += log_pi[r][j][k];
                    }
                }
                None => match missing {
                    MissingPolicy::Partial => {}
                    MissingPolicy::Complete => {
                        return Err(Error::MissingData {
                            row: i,
                            column: resp.indicators[j].name().into(),
                        })
                    }
                },
            }
        }
        let lse = math::logsumexp(&scores);
        if lse == f64::NEG_INFINITY {
            return Err(Error::ZeroPosteriorMass { row: i });
        }
        for r in 0..r_n {
            theta[[i, r]] = math::exp(scores[r] - lse);
        }
        ll += lse;
    }
    Ok((theta, ll))
}

/// Weighted item-probability update
/// `pi[r][j][k] = sum_i theta[i][r] 1[y_ij = k] / sum_i theta[i][r]`,
/// with the denominator restricted to rows where the item is observed.
/// Classes with zero posterior weight get uniform rows and are returned
/// in the second component.
pub fn m_step_items(theta: &Array2<f64>, d: &Dataset) -> (Vec<Vec<Vec<f64>>>, Vec<usize>) {
    let resp = ResponseMatrix::all_of(d);
    m_step_items_inner(theta, &resp)
}

pub(crate) fn m_step_items_inner(
    theta: &Array2<f64>,
    resp: &ResponseMatrix,
) -> (Vec<Vec<Vec<f64>>>, Vec<usize>) {
    let n = resp.n_rows;
    let r_n = theta.ncols();
    let j_n = resp.indicators.len();
    debug_assert_eq!(theta.nrows(), n);

    let mut item_probs: Vec<Vec<Vec<f64>>> = (0..r_n)
        .map(|_| {
            resp.indicators
                .iter()
                .map(|ind| vec![0.0; ind.n_categories() as usize])
                .collect()
        })
        .collect();
    let mut empty_classes = Vec::new();

    for r in 0..r_n {
        let mut class_is_empty = false;
        for j in 0..j_n {
            let k_n = resp.indicators[j].n_categories() as usize;
            let mut denom = 0.0;
            let counts = &mut item_probs[r][j];
            for i in 0..n {
                if let Some(code) = resp.code(i, j) {
                    let w = theta[[i, r]];
                    denom += w;
                    counts[(code - 1) as usize] += w;
                }
            }
            if denom == 0.0 {
                for v in counts.iter_mut() {
                    *v = 1.0 / k_n as f64;
                }
                class_is_empty = true;
            } else {
                for v in counts.iter_mut() {
                    *v /= denom;
                }
            }
        }
        if class_is_empty {
            empty_classes.push(r);
        }
    }
    (item_probs, empty_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Indicator;
    use crate::formula::Formula;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    fn spec(r: usize, ks: &[u8]) -> ModelSpec {
        let indicators = ks
            .iter()
            .enumerate()
            .map(|(j, &k)| Indicator::new(alloc::format!("I{j}"), k).unwrap())
            .collect();
        ModelSpec::new(r, indicators, Formula::intercept_only())
    }

    fn intercept_design(n: usize) -> DesignMatrix {
        DesignMatrix::from_parts(
            Array2::ones((n, 1)),
            vec![std::string::String::from("(Intercept)")],
        )
    }

    #[test]
    fn init_params_is_deterministic_per_seed_and_restart() {
        let spec = spec(3, &[3, 2, 4]);
        let a = init_params(&spec, 4);
        let b = init_params(&spec, 4);
        assert_eq!(a.item_probs, b.item_probs);
        assert_eq!(a.beta, b.beta);
        let c = init_params(&spec, 5);
        assert_ne!(a.item_probs, c.item_probs);
        a.validate().unwrap();
    }

    #[test]
    fn init_params_single_class_has_no_contrasts() {
        let spec = spec(1, &[3]);
        let p = init_params(&spec, 0);
        assert_eq!(p.beta.nrows(), 0);
        assert_eq!(p.n_classes(), 1);
        let total: f64 = p.item_probs[0][0].iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn init_params_category_means_are_near_uniform() {
        let spec = spec(1, &[3]);
        let mut mean = [0.0_f64; 3];
        let draws = 1000;
        for restart in 0..draws {
            let p = init_params(&spec, restart);
            for k in 0..3 {
                mean[k] += p.item_probs[0][0][k];
            }
        }
        for m in mean {
            assert!(
                (m / draws as f64 - 1.0 / 3.0).abs() < 0.02,
                "mean category probability {m} too far from 1/3"
            );
        }
    }

    fn one_item_dataset(codes: &[u8], k: u8) -> Dataset {
        Dataset::new(
            vec![Indicator::new("A", k).unwrap()],
            codes.iter().map(|&c| vec![Some(c)]).collect(),
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn e_step_single_class_gives_unit_posteriors_and_product_likelihood() {
        let d = one_item_dataset(&[1, 2, 2], 3);
        let params = Params {
            item_probs: vec![vec![vec![0.5, 0.3, 0.2]]],
            beta: Array2::zeros((0, 1)),
        };
        let (theta, ll) =
            e_step(&params, &d, &intercept_design(3), 1e-12, MissingPolicy::Complete).unwrap();
        for i in 0..3 {
            assert_eq!(theta[[i, 0]], 1.0);
        }
        let expected = math::ln(0.5) + 2.0 * math::ln(0.3);
        assert_abs_diff_eq!(ll, expected, epsilon = 1e-12);
    }

    #[test]
    fn e_step_two_class_binary_item_matches_bayes_rule() {
        let d = one_item_dataset(&[1], 2);
        let params = Params {
            item_probs: vec![vec![vec![0.9, 0.1]], vec![vec![0.1, 0.9]]],
            beta: Array2::zeros((1, 1)),
        };
        let (theta, ll) =
            e_step(&params, &d, &intercept_design(1), 1e-12, MissingPolicy::Complete).unwrap();
        // Uniform prior: 0.45 / (0.45 + 0.05).
        assert_abs_diff_eq!(theta[[0, 0]], 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(theta[[0, 1]], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(ll, math::ln(0.5), epsilon = 1e-12);
    }

    #[test]
    fn e_step_missing_policies_differ() {
        let d = Dataset::new(
            vec![
                Indicator::new("A", 2).unwrap(),
                Indicator::new("B", 2).unwrap(),
            ],
            vec![vec![Some(1), None], vec![Some(2), Some(1)]],
            vec![],
        )
        .unwrap();
        let params = Params {
            item_probs: vec![vec![vec![0.8, 0.2], vec![0.6, 0.4]]],
            beta: Array2::zeros((0, 1)),
        };
        let x = intercept_design(2);
        match e_step(&params, &d, &x, 1e-12, MissingPolicy::Complete) {
            Err(Error::MissingData { row, column }) => {
                assert_eq!(row, 0);
                assert_eq!(column, "B");
            }
            other => panic!("expected MissingData, got {other:?}"),
        }
        let (_, ll) = e_step(&params, &d, &x, 1e-12, MissingPolicy::Partial).unwrap();
        let expected = math::ln(0.8) + math::ln(0.2) + math::ln(0.6);
        assert_abs_diff_eq!(ll, expected, epsilon = 1e-12);
    }

    #[test]
    fn e_step_zero_mass_without_floor_is_an_error() {
        let d = one_item_dataset(&[2], 2);
        let params = Params {
            item_probs: vec![vec![vec![1.0, 0.0]], vec![vec![1.0, 0.0]]],
            beta: Array2::zeros((1, 1)),
        };
        let x = intercept_design(1);
        match e_step(&params, &d, &x, 0.0, MissingPolicy::Complete) {
            Err(Error::ZeroPosteriorMass { row }) => assert_eq!(row, 0),
            other => panic!("expected ZeroPosteriorMass, got {other:?}"),
        }
        // A positive floor keeps the mass finite.
        assert!(e_step(&params, &d, &x, 1e-12, MissingPolicy::Complete).is_ok());
    }

    #[test]
    fn m_step_items_recovers_weighted_frequencies() {
        let d = one_item_dataset(&[1, 1, 2, 2], 3);
        let theta = Array2::ones((4, 1));
        let (pi, empty) = m_step_items(&theta, &d);
        assert!(empty.is_empty());
        assert_eq!(pi[0][0], vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn m_step_items_with_hard_assignments_gives_one_hot_rows() {
        let d = one_item_dataset(&[1, 2], 3);
        let theta = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        let (pi, empty) = m_step_items(&theta, &d);
        assert!(empty.is_empty());
        assert_eq!(pi[0][0], vec![1.0, 0.0, 0.0]);
        assert_eq!(pi[1][0], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn m_step_items_flags_zero_weight_classes_with_uniform_rows() {
        let d = one_item_dataset(&[1, 2], 2);
        let theta = arr2(&[[1.0, 0.0], [1.0, 0.0]]);
        let (pi, empty) = m_step_items(&theta, &d);
        assert_eq!(empty, vec![1]);
        assert_eq!(pi[1][0], vec![0.5, 0.5]);
        assert_eq!(pi[0][0], vec![0.5, 0.5]);
    }

    #[test]
    fn m_step_items_skips_missing_cells_in_both_counts() {
        let d = Dataset::new(
            vec![Indicator::new("A", 2).unwrap()],
            vec![vec![Some(1)], vec![None], vec![Some(2)]],
            vec![],
        )
        .unwrap();
        let theta = arr2(&[[1.0], [1.0], [1.0]]);
        let (pi, _) = m_step_items(&theta, &d);
        // The missing row contributes to neither numerator nor denominator.
        assert_eq!(pi[0][0], vec![0.5, 0.5]);
    }
}
