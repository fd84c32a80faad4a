//! Multinomial-logit mixing: class priors from covariates and the damped
//! Newton ascent step that updates the coefficients once per EM cycle.
//!
//! Class 1 is the reference: its coefficient row is identically zero and
//! is not stored, so `beta` has `R - 1` rows, one per contrast class.

use alloc::vec;

use ndarray::Array2;

use crate::error::Error;
use crate::formula::DesignMatrix;
use crate::math;
use crate::Result;

use super::Params;

/// Result of one damped Newton ascent step on the mixing coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingUpdate {
    pub beta: Array2<f64>,
    /// True when a ridge term was needed to factor the Hessian.
    pub ridged: bool,
}

/// Row-wise log softmax of the class scores `x_i . beta_r` with the
/// reference class score fixed at zero. Max-subtraction keeps score
/// differences of hundreds finite.
pub(crate) fn log_class_priors(beta: &Array2<f64>, x: &DesignMatrix) -> Result<Array2<f64>> {
    let n = x.n_rows();
    let n_contrasts = beta.nrows();
    if n_contrasts > 0 && beta.ncols() != x.n_columns() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "beta has {} columns but the design matrix has {}",
            beta.ncols(),
            x.n_columns()
        )));
    }
    let r = n_contrasts + 1;
    let mut out = Array2::<f64>::zeros((n, r));
    let mut scores = vec![0.0_f64; r];
    for i in 0..n {
        scores[0] = 0.0;
        let xi = x.row(i);
        for c in 0..n_contrasts {
            let mut s = 0.0;
            for p in 0..x.n_columns() {
                s += xi[p] * beta[[c, p]];
            }
            scores[c + 1] = s;
        }
        let lse = math::logsumexp(&scores);
        for (q, &s) in scores.iter().enumerate() {
            out[[i, q]] = s - lse;
        }
    }
    Ok(out)
}

/// Prior class-membership probabilities per respondent,
/// `prior[i][r] = exp(x_i . beta_r) / sum_q exp(x_i . beta_q)` with the
/// first class as reference. Rows sum to 1.
pub fn class_priors(params: &Params, x: &DesignMatrix) -> Result<Array2<f64>> {
    params.validate()?;
    Ok(log_class_priors(&params.beta, x)?.mapv(math::exp))
}

/// Expected complete-data log-likelihood of the mixing part,
/// `Q(beta) = sum_i sum_r theta[i][r] log prior[i][r]`.
pub(crate) fn q_value(beta: &Array2<f64>, theta: &Array2<f64>, x: &DesignMatrix) -> Result<f64> {
    let lp = log_class_priors(beta, x)?;
    let mut q = 0.0;
    for i in 0..theta.nrows() {
        for r in 0..theta.ncols() {
            let t = theta[[i, r]];
            if t > 0.0 {
                q += t * lp[[i, r]];
            }
        }
    }
    Ok(q)
}

/// Gradient of `Q` with respect to the contrast coefficients:
/// `g[c][p] = sum_i (theta[i][c+1] - prior[i][c+1]) x[i][p]`.
pub(crate) fn score_matrix(
    theta: &Array2<f64>,
    priors: &Array2<f64>,
    x: &DesignMatrix,
) -> Array2<f64> {
    let n_contrasts = theta.ncols() - 1;
    let p_n = x.n_columns();
    let mut g = Array2::<f64>::zeros((n_contrasts, p_n));
    for i in 0..theta.nrows() {
        let xi = x.row(i);
        for c in 0..n_contrasts {
            let resid = theta[[i, c + 1]] - priors[[i, c + 1]];
            for p in 0..p_n {
                g[[c, p]] += resid * xi[p];
            }
        }
    }
    g
}

/// One damped Newton-Raphson ascent step on `Q`, the weighted
/// multinomial-logit update used inside each EM cycle.
///
/// The step is halved (up to 30 times) until `Q` does not decrease; if no
/// such step exists the coefficients are returned unchanged. A numerically
/// singular Hessian gets a ridge term starting at `1e-8 . I`, escalated
/// tenfold until the factorization succeeds.
pub fn m_step_mixing(
    theta: &Array2<f64>,
    x: &DesignMatrix,
    beta_current: &Array2<f64>,
) -> Result<MixingUpdate> {
    if theta.nrows() != x.n_rows() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "{} posterior rows but {} design rows",
            theta.nrows(),
            x.n_rows()
        )));
    }
    check_full_rank(x)?;
    mixing_step_unchecked(theta, x, beta_current)
}

/// Fails with the label of the first design column that is collinear with
/// its predecessors.
pub(crate) fn check_full_rank(x: &DesignMatrix) -> Result<()> {
    let p_n = x.n_columns();
    let m = x.matrix();
    let mut gram = Array2::<f64>::zeros((p_n, p_n));
    for i in 0..x.n_rows() {
        for p in 0..p_n {
            for q in 0..=p {
                gram[[p, q]] += m[[i, p]] * m[[i, q]];
            }
        }
    }
    for p in 0..p_n {
        for q in 0..p {
            gram[[q, p]] = gram[[p, q]];
        }
    }
    match math::Cholesky::factor_with_pivot(&gram) {
        Ok(_) => Ok(()),
        Err(pivot) => Err(Error::CollinearColumns {
            column: x.labels()[pivot].clone(),
        }),
    }
}

/// The Newton step without the rank check; the fitting loop verifies rank
/// once up front instead of on every cycle.
pub(crate) fn mixing_step_unchecked(
    theta: &Array2<f64>,
    x: &DesignMatrix,
    beta_current: &Array2<f64>,
) -> Result<MixingUpdate> {
    let r = theta.ncols();
    let p_n = x.n_columns();
    if r == 1 {
        return Ok(MixingUpdate {
            beta: Array2::zeros((0, p_n)),
            ridged: false,
        });
    }
    let n_contrasts = r - 1;
    let dim = n_contrasts * p_n;
    let n = theta.nrows();

    let priors = log_class_priors(beta_current, x)?.mapv(math::exp);
    let g = score_matrix(theta, &priors, x);

    // Negative Hessian of Q: A[(c,p),(d,q)] =
    //   sum_i x_ip x_iq prior_ic (1[c=d] - prior_id) over contrast classes.
    let mut a = Array2::<f64>::zeros((dim, dim));
    let m = x.matrix();
    for i in 0..n {
        for c in 0..n_contrasts {
            let pc = priors[[i, c + 1]];
            for d in 0..=c {
                let pd = priors[[i, d + 1]];
                let w = if c == d { pc * (1.0 - pc) } else { -pc * pd };
                if w == 0.0 {
                    continue;
                }
                for p in 0..p_n {
                    let wx = w * m[[i, p]];
                    for q in 0..p_n {
                        a[[c * p_n + p, d * p_n + q]] += wx * m[[i, q]];
                    }
                }
            }
        }
    }
    for row in 0..dim {
        for col in 0..row {
            a[[col, row]] = a[[row, col]];
        }
    }

    let mut flat_g = vec![0.0; dim];
    for c in 0..n_contrasts {
        for p in 0..p_n {
            flat_g[c * p_n + p] = g[[c, p]];
        }
    }

    // Factor A, ridging the diagonal when it is numerically singular.
    let mut ridged = false;
    let mut ridge = 0.0_f64;
    let direction = loop {
        let mut work = a.clone();
        for d in 0..dim {
            work[[d, d]] += ridge;
        }
        if let Some(chol) = math::Cholesky::new(&work) {
            break Some(chol.solve(&flat_g));
        }
        ridged = true;
        ridge = if ridge == 0.0 { 1e-8 } else { ridge * 10.0 };
        if ridge > 1.0 {
            break None;
        }
    };
    let Some(direction) = direction else {
        // No usable curvature at all; leave the coefficients in place.
        return Ok(MixingUpdate {
            beta: beta_current.clone(),
            ridged,
        });
    };

    let q0 = q_value(beta_current, theta, x)?;
    let mut step = 1.0;
    for _ in 0..=30 {
        let mut candidate = beta_current.clone();
        for c in 0..n_contrasts {
            for p in 0..p_n {
                candidate[[c, p]] += step * direction[c * p_n + p];
            }
        }
        if q_value(&candidate, theta, x)? >= q0 {
            return Ok(MixingUpdate {
                beta: candidate,
                ridged,
            });
        }
        step *= 0.5;
    }
    Ok(MixingUpdate {
        beta: beta_current.clone(),
        ridged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Indicator};
    use crate::formula::{build_design_matrix, Formula};
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::string::ToString;

    fn intercept_design(n: usize) -> DesignMatrix {
        DesignMatrix::from_parts(
            Array2::ones((n, 1)),
            vec!["(Intercept)".to_string()],
        )
    }

    #[test]
    fn zero_coefficients_give_uniform_priors() {
        let x = intercept_design(4);
        let beta = Array2::zeros((2, 1));
        let lp = log_class_priors(&beta, &x).unwrap();
        for i in 0..4 {
            for r in 0..3 {
                assert_abs_diff_eq!(math::exp(lp[[i, r]]), 1.0 / 3.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn intercept_only_two_class_softmax_is_analytic() {
        let x = intercept_design(1);
        let beta = arr2(&[[math::ln(3.0)]]);
        let lp = log_class_priors(&beta, &x).unwrap();
        assert_abs_diff_eq!(math::exp(lp[[0, 0]]), 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(math::exp(lp[[0, 1]]), 0.75, epsilon = 1e-14);
    }

    #[test]
    fn extreme_score_differences_stay_normalized() {
        let x = intercept_design(2);
        for b in [800.0, -800.0] {
            let beta = arr2(&[[b]]);
            let lp = log_class_priors(&beta, &x).unwrap();
            for i in 0..2 {
                let total: f64 = (0..2).map(|r| math::exp(lp[[i, r]])).sum();
                assert!(total.is_finite());
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn equal_posterior_columns_leave_zero_coefficients_fixed() {
        let x = intercept_design(6);
        let theta = Array2::from_elem((6, 3), 1.0 / 3.0);
        let beta = Array2::zeros((2, 1));
        let update = m_step_mixing(&theta, &x, &beta).unwrap();
        assert!(!update.ridged);
        for c in 0..2 {
            assert_abs_diff_eq!(update.beta[[c, 0]], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn intercept_only_fixed_point_is_log_share_ratio() {
        let n = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut theta = Array2::<f64>::zeros((n, 3));
        for i in 0..n {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for r in 0..3 {
                theta[[i, r]] = raw[r] / total;
            }
        }
        let x = intercept_design(n);
        let mut beta = Array2::zeros((2, 1));
        for _ in 0..200 {
            beta = mixing_step_unchecked(&theta, &x, &beta).unwrap().beta;
        }
        let means: Vec<f64> = (0..3)
            .map(|r| theta.column(r).sum() / n as f64)
            .collect();
        for c in 0..2 {
            let expected = math::ln(means[c + 1] / means[0]);
            assert_abs_diff_eq!(beta[[c, 0]], expected, epsilon = 1e-8);
        }
    }

    #[test]
    fn newton_steps_never_decrease_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 60;
        let x = DesignMatrix::from_parts(
            Array2::from_shape_fn((n, 2), |(_, p)| {
                if p == 0 {
                    1.0
                } else {
                    rng.random_range(-2.0..2.0)
                }
            }),
            vec!["(Intercept)".to_string(), "Z".to_string()],
        );
        let mut theta = Array2::<f64>::zeros((n, 3));
        for i in 0..n {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for r in 0..3 {
                theta[[i, r]] = raw[r] / total;
            }
        }
        let mut beta = Array2::from_shape_fn((2, 2), |_| rng.random_range(-0.5..0.5));
        let mut q = q_value(&beta, &theta, &x).unwrap();
        for _ in 0..25 {
            beta = mixing_step_unchecked(&theta, &x, &beta).unwrap().beta;
            let q_next = q_value(&beta, &theta, &x).unwrap();
            assert!(q_next >= q - 1e-12, "Q decreased: {q} -> {q_next}");
            q = q_next;
        }
    }

    #[test]
    fn q_gradient_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let n = 40;
            let x = DesignMatrix::from_parts(
                Array2::from_shape_fn((n, 2), |(_, p)| {
                    if p == 0 {
                        1.0
                    } else {
                        rng.random_range(-1.5..1.5)
                    }
                }),
                vec!["(Intercept)".to_string(), "Z".to_string()],
            );
            let mut theta = Array2::<f64>::zeros((n, 3));
            for i in 0..n {
                let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
                let total: f64 = raw.iter().sum();
                for r in 0..3 {
                    theta[[i, r]] = raw[r] / total;
                }
            }
            let beta = Array2::from_shape_fn((2, 2), |_| rng.random_range(-1.0..1.0));
            let priors = log_class_priors(&beta, &x).unwrap().mapv(math::exp);
            let analytic = score_matrix(&theta, &priors, &x);
            let h = 1e-6;
            for c in 0..2 {
                for p in 0..2 {
                    let mut plus = beta.clone();
                    plus[[c, p]] += h;
                    let mut minus = beta.clone();
                    minus[[c, p]] -= h;
                    let numeric = (q_value(&plus, &theta, &x).unwrap()
                        - q_value(&minus, &theta, &x).unwrap())
                        / (2.0 * h);
                    let scale = analytic[[c, p]].abs().max(1.0);
                    assert!(
                        (analytic[[c, p]] - numeric).abs() / scale < 1e-5,
                        "gradient mismatch at ({c},{p}): {} vs {numeric}",
                        analytic[[c, p]]
                    );
                }
            }
        }
    }

    #[test]
    fn collinear_design_columns_are_reported_by_label() {
        let mut d = Dataset::new(
            vec![Indicator::new("A", 2).unwrap()],
            vec![vec![Some(1)], vec![Some(2)], vec![Some(1)]],
            vec![
                ("Z".into(), vec![1.0, 2.0, 3.0]),
                ("W".into(), vec![2.0, 4.0, 6.0]),
            ],
        )
        .unwrap();
        d.declare_covariate_alias("A").unwrap();
        let f = Formula::parse("Z + W").unwrap();
        let x = build_design_matrix(&f, &d).unwrap();
        let theta = Array2::from_elem((3, 2), 0.5);
        let beta = Array2::zeros((1, 3));
        match m_step_mixing(&theta, &x, &beta) {
            Err(Error::CollinearColumns { column }) => assert_eq!(column, "W"),
            other => panic!("expected CollinearColumns, got {other:?}"),
        }
    }
}
