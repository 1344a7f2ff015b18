//! Averages, weight divergence, and the convergence-bound terms evaluated
//! on simulation state.
//!
//! Notation follows the engine: `A` is the accessible set of a round, `n1`
//! and `n2` the sizes of `A` and its complement, `w̄` the mean of all local
//! models and `w̃` the partial average.

use serde::{Deserialize, Serialize};

use crate::accessibility::Partition;
use crate::error::{Error, Result};
use crate::objective::ProblemSuite;
use crate::trace::TraceRow;
use crate::vector::{axpy, dist_sq, mean_of, norm, norm_sq, sub, Params};

/// How the partial average combines the two group means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WtildeMode {
    /// `mean_A + mean_{S/A}`; an empty group contributes zero.
    #[default]
    Literal,
    /// `(n1/n) mean_A + (n2/n) mean_{S/A}`, identical to the full average.
    Weighted,
}

/// Which constant multiplies the divergence bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceConstant {
    /// `L eta^2 / n`
    Main,
    /// `(1 + L eta^2) / n`
    Appendix,
}

pub fn full_average(models: &[Params]) -> Result<Params> {
    let d = models.first().ok_or(Error::Empty("models"))?.len();
    Ok(mean_of(models, d).expect("nonempty"))
}

fn group_mean(models: &[Params], nodes: &[usize]) -> Option<Params> {
    let d = models.first()?.len();
    mean_of(nodes.iter().map(|&i| &models[i]), d)
}

pub fn partial_average(models: &[Params], part: &Partition, mode: WtildeMode) -> Result<Params> {
    if part.n() == 0 {
        return Err(Error::EmptyPartition);
    }
    if part.n() != models.len() {
        return Err(Error::DimensionMismatch {
            expected: models.len(),
            got: part.n(),
        });
    }
    let d = models[0].len();
    let zero = || vec![0.0; d];
    let a = group_mean(models, &part.accessible).unwrap_or_else(zero);
    let b = group_mean(models, &part.inaccessible).unwrap_or_else(zero);
    let (wa, wb) = match mode {
        WtildeMode::Literal => (1.0, 1.0),
        WtildeMode::Weighted => {
            let n = part.n() as f64;
            (part.n1() as f64 / n, part.n2() as f64 / n)
        }
    };
    let mut out = zero();
    axpy(wa, &a, &mut out);
    axpy(wb, &b, &mut out);
    Ok(out)
}

/// `||g(w̃) - g(w̄)||` with `g(w̄) = (1/n) sum_i grad F_i(w̄)` and
/// `g(w̃) = (1/n) sum_{i in A} grad F_i(mean_A) + (1/n) sum_{i not in A} grad F_i(w_i)`.
pub fn divergence_lhs(models: &[Params], part: &Partition, suite: &ProblemSuite) -> Result<f64> {
    if part.n2() == 0 {
        // Both gradients are the same expression.
        return Ok(0.0);
    }
    let n = suite.n();
    if models.len() != n || part.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: models.len(),
        });
    }
    let wbar = full_average(models)?;
    let inv = 1.0 / n as f64;
    let mut diff = vec![0.0; suite.dimension];
    if let Some(mean_a) = group_mean(models, &part.accessible) {
        for &i in &part.accessible {
            let q = &suite.problems[i];
            axpy(inv, &q.full_gradient(&mean_a)?, &mut diff);
            axpy(-inv, &q.full_gradient(&wbar)?, &mut diff);
        }
    }
    for &i in &part.inaccessible {
        let q = &suite.problems[i];
        axpy(inv, &q.full_gradient(&models[i])?, &mut diff);
        axpy(-inv, &q.full_gradient(&wbar)?, &mut diff);
    }
    Ok(norm(&diff))
}

/// `n1 ||mean_A - w̄|| + sum_{i not in A} ||w_i - w̄||`.
pub fn divergence_bracket(models: &[Params], part: &Partition, wbar: &[f64]) -> f64 {
    let accessible = group_mean(models, &part.accessible)
        .map_or(0.0, |m| part.n1() as f64 * norm(&sub(&m, wbar)));
    let inaccessible: f64 = part
        .inaccessible
        .iter()
        .map(|&i| norm(&sub(&models[i], wbar)))
        .sum();
    accessible + inaccessible
}

pub fn divergence_rhs(
    models: &[Params],
    part: &Partition,
    wbar: &[f64],
    smoothness: f64,
    eta: f64,
    constant: DivergenceConstant,
) -> f64 {
    let n = part.n() as f64;
    let c = match constant {
        DivergenceConstant::Main => smoothness * eta * eta / n,
        DivergenceConstant::Appendix => (1.0 + smoothness * eta * eta) / n,
    };
    c * divergence_bracket(models, part, wbar)
}

/// Inputs of the per-round bound terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    /// `||(1/n2) sum_{i not in A} w_i||^2`, zero when `n2 = 0`.
    pub mean_inaccessible_norm_sq: f64,
    pub gamma: f64,
    pub eta: f64,
    pub smoothness: f64,
    pub mu: f64,
    pub grad_bound_sq: f64,
    pub lambda: f64,
}

/// `(alpha_t, beta_t)`: contraction factor and additive term of the bound.
pub fn theorem1_terms(p: &BoundInputs) -> (f64, f64) {
    let alpha = 2.0 * (1.0 - p.mu * p.eta);
    let n1 = p.n1 as f64;
    let n2 = p.n2 as f64;
    let g2 = p.grad_bound_sq;
    let eta = p.eta;
    let beta = (eta * p.smoothness * n1 * p.mean_inaccessible_norm_sq
        + 4.0 * eta * p.gamma
        + 2.0 * n1 * eta * eta * g2
        + 2.0
            * n2
            * g2
            * (2.0 * eta.powi(3) * (1.0 + 1.0 / p.lambda) + 2.0 * p.mu * (1.0 - eta) / p.lambda))
        / p.n as f64;
    (alpha, beta)
}

/// The part of `beta_t` that does not vanish with the learning rate:
/// `(1/n) * 2 n2 G^2 * 2 mu (1 - eta) / lambda`.
pub fn gap_term(n: usize, n2: usize, grad_bound_sq: f64, mu: f64, eta: f64, lambda: f64) -> f64 {
    2.0 * n2 as f64 * grad_bound_sq * 2.0 * mu * (1.0 - eta) / lambda / n as f64
}

/// Bound value `alpha^t d0 + beta * sum_{i<t} alpha^i`.
pub fn envelope_value(alpha: f64, beta: f64, t: usize, initial_dist_sq: f64) -> f64 {
    let mut geometric = 0.0;
    let mut power = 1.0;
    for _ in 0..t {
        geometric += power;
        power *= alpha;
    }
    alpha.powi(t as i32) * initial_dist_sq + beta * geometric
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopePoint {
    pub t: usize,
    pub bound: f64,
    pub empirical: f64,
    /// `alpha >= 1`: the bound does not contract this round.
    pub diverging: bool,
}

pub fn theorem1_envelope(trace: &[TraceRow], initial_dist_sq: f64) -> Result<Vec<EnvelopePoint>> {
    if trace.is_empty() {
        return Err(Error::Empty("trace"));
    }
    Ok(trace
        .iter()
        .map(|row| EnvelopePoint {
            t: row.t,
            bound: envelope_value(row.alpha_t, row.beta_t, row.t, initial_dist_sq),
            empirical: row.dist_wtilde_sq,
            diverging: row.alpha_t >= 1.0,
        })
        .collect())
}

/// Fixed parameters of the gap-term monotonicity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapParams {
    pub n: usize,
    pub eta: f64,
    pub mu: f64,
    pub grad_bound_sq: f64,
    pub lambda: f64,
}

/// True iff the gap term is strictly increasing in `n2` over `0..=n` and
/// strictly decreasing along the ascending `lambda_grid`.
pub fn gap_monotonicity_check(p: &GapParams, lambda_grid: &[f64]) -> bool {
    let by_n2: Vec<f64> = (0..=p.n)
        .map(|n2| gap_term(p.n, n2, p.grad_bound_sq, p.mu, p.eta, p.lambda))
        .collect();
    let by_lambda: Vec<f64> = lambda_grid
        .iter()
        .map(|&l| gap_term(p.n, p.n.max(1), p.grad_bound_sq, p.mu, p.eta, l))
        .collect();
    by_n2.windows(2).all(|w| w[1] > w[0])
        && lambda_grid.windows(2).all(|w| w[1] > w[0])
        && by_lambda.windows(2).all(|w| w[1] < w[0])
}

pub fn distance_to_optimum(w: &[f64], w_star: &[f64]) -> Result<f64> {
    if w.len() != w_star.len() {
        return Err(Error::DimensionMismatch {
            expected: w_star.len(),
            got: w.len(),
        });
    }
    Ok(dist_sq(w, w_star))
}

/// `||mean_{S/A}||^2`, or zero when every node is accessible.
pub fn mean_inaccessible_norm_sq(models: &[Params], part: &Partition) -> f64 {
    group_mean(models, &part.inaccessible).map_or(0.0, |m| norm_sq(&m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{GammaWeighting, NodeProblem, Targets};
    use proptest::prelude::*;

    fn split(mask: &[bool]) -> Partition {
        Partition::from_mask(mask)
    }

    #[test]
    fn full_average_examples() {
        let m = vec![vec![1.0, 2.0]; 3];
        assert_eq!(full_average(&m).unwrap(), vec![1.0, 2.0]);
        let e = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(full_average(&e).unwrap(), vec![0.5, 0.5]);
        let scaled: Vec<Params> = e
            .iter()
            .map(|v| v.iter().map(|x| 3.0 * x).collect())
            .collect();
        assert_eq!(full_average(&scaled).unwrap(), vec![1.5, 1.5]);
        assert!(full_average(&[]).is_err());
    }

    #[test]
    fn partial_average_examples() {
        let m = vec![vec![1.0], vec![3.0], vec![8.0]];
        let all = split(&[true; 3]);
        assert_eq!(
            partial_average(&m, &all, WtildeMode::Literal).unwrap(),
            vec![4.0]
        );
        let u = vec![vec![2.0, -1.0], vec![5.0, 4.0]];
        let p = split(&[true, false]);
        assert_eq!(
            partial_average(&u, &p, WtildeMode::Literal).unwrap(),
            vec![7.0, 3.0]
        );
        assert!(partial_average(&[], &split(&[]), WtildeMode::Literal).is_err());
    }

    proptest! {
        #[test]
        fn weighted_mode_equals_full_average(
            values in prop::collection::vec(-5.0f64..5.0, 2 * 9),
            mask in prop::collection::vec(any::<bool>(), 9),
        ) {
            let models: Vec<Params> = values.chunks(2).map(|c| c.to_vec()).collect();
            let p = split(&mask);
            let w = partial_average(&models, &p, WtildeMode::Weighted).unwrap();
            let bar = full_average(&models).unwrap();
            prop_assert!(dist_sq(&w, &bar).sqrt() < 1e-12);
        }
    }

    fn two_node_suite() -> ProblemSuite {
        let a = NodeProblem::new(vec![vec![1.0]], Targets::Real(vec![1.0]), 0.1).unwrap();
        let b = NodeProblem::new(vec![vec![2.0]], Targets::Real(vec![-1.0]), 0.1).unwrap();
        ProblemSuite::build(vec![a, b], GammaWeighting::DataShare).unwrap()
    }

    #[test]
    fn divergence_lhs_vanishes_without_inaccessible_nodes() {
        let suite = two_node_suite();
        let m = vec![vec![0.3], vec![-2.0]];
        assert_eq!(
            divergence_lhs(&m, &split(&[true, true]), &suite).unwrap(),
            0.0
        );
        let same = vec![vec![0.7], vec![0.7]];
        assert!(divergence_lhs(&same, &split(&[true, false]), &suite).unwrap() < 1e-12);
    }

    #[test]
    fn divergence_lhs_hand_evaluation() {
        // grad F_1(w) = (w - 1) + 0.1 w ; grad F_2(w) = 2 (2w + 1) + 0.1 w.
        let suite = two_node_suite();
        let (u, v) = (0.5, 2.0);
        let wbar = 1.25;
        let g1 = |w: f64| (w - 1.0) + 0.1 * w;
        let g2 = |w: f64| 2.0 * (2.0 * w + 1.0) + 0.1 * w;
        // Node 0 accessible alone: mean_A = u. Node 1 inaccessible.
        let g_tilde = 0.5 * g1(u) + 0.5 * g2(v);
        let g_bar = 0.5 * (g1(wbar) + g2(wbar));
        let expected = (g_tilde - g_bar).abs();
        let got = divergence_lhs(&[vec![u], vec![v]], &split(&[true, false]), &suite).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn divergence_rhs_examples() {
        let same = vec![vec![1.0, 1.0]; 4];
        let p = split(&[true, true, false, true]);
        let wbar = full_average(&same).unwrap();
        assert_eq!(
            divergence_rhs(&same, &p, &wbar, 2.0, 0.1, DivergenceConstant::Main),
            0.0
        );

        let m = vec![vec![0.5], vec![1.0]];
        let p = split(&[true, false]);
        let wbar = vec![0.0];
        assert_eq!(divergence_bracket(&m, &p, &wbar), 1.5);
        let (l, eta) = (3.0, 0.2);
        let main = divergence_rhs(&m, &p, &wbar, l, eta, DivergenceConstant::Main);
        let app = divergence_rhs(&m, &p, &wbar, l, eta, DivergenceConstant::Appendix);
        assert!((main - l * eta * eta / 2.0 * 1.5).abs() < 1e-15);
        assert!((app / main - (1.0 + l * eta * eta) / (l * eta * eta)).abs() < 1e-12);
    }

    fn inputs() -> BoundInputs {
        BoundInputs {
            n: 14,
            n1: 12,
            n2: 2,
            mean_inaccessible_norm_sq: 0.7,
            gamma: 0.3,
            eta: 0.1,
            smoothness: 2.0,
            mu: 0.5,
            grad_bound_sq: 4.0,
            lambda: 0.5,
        }
    }

    #[test]
    fn alpha_is_one_at_half() {
        let p = BoundInputs {
            mu: 5.0,
            eta: 0.1,
            ..inputs()
        };
        assert_eq!(theorem1_terms(&p).0, 1.0);
    }

    #[test]
    fn beta_vanishes_with_eta_when_all_accessible() {
        let p = BoundInputs {
            n1: 14,
            n2: 0,
            gamma: 0.0,
            eta: 1e-6,
            ..inputs()
        };
        let (_, beta) = theorem1_terms(&p);
        assert!(beta < 1e-4, "{beta}");
        let p = BoundInputs { eta: 1e-8, ..p };
        assert!(theorem1_terms(&p).1 < beta);
    }

    #[test]
    fn beta_keeps_rate_free_component() {
        let p = BoundInputs {
            eta: 1e-6,
            ..inputs()
        };
        let component = gap_term(p.n, p.n2, p.grad_bound_sq, p.mu, p.eta, p.lambda);
        let limit = 4.0 * p.mu * p.n2 as f64 * p.grad_bound_sq / (p.n as f64 * p.lambda);
        assert!(((component - limit) / limit).abs() < 1e-4);
        assert!(theorem1_terms(&p).1 >= component);
    }

    #[test]
    fn beta_matches_term_by_term_evaluation() {
        let p = inputs();
        let (eta, l, g2) = (p.eta, p.smoothness, p.grad_bound_sq);
        let t1 = eta * l * 12.0 * 0.7;
        let t2 = 4.0 * eta * 0.3;
        let t3 = 2.0 * 12.0 * eta * eta * g2;
        let t4 = 2.0 * 2.0 * g2 * (2.0 * eta * eta * eta * (1.0 + 2.0) + 2.0 * 0.5 * 0.9 / 0.5);
        let (alpha, beta) = theorem1_terms(&p);
        assert!((alpha - 2.0 * 0.95).abs() < 1e-15);
        assert!((beta - (t1 + t2 + t3 + t4) / 14.0).abs() < 1e-12);
    }

    fn synthetic_rows(alpha: f64, beta: f64, len: usize) -> Vec<TraceRow> {
        (0..len)
            .map(|t| TraceRow {
                t,
                alpha_t: alpha,
                beta_t: beta,
                ..TraceRow::default()
            })
            .collect()
    }

    #[test]
    fn envelope_identities() {
        let env = theorem1_envelope(&synthetic_rows(0.5, 0.0, 30), 1.0).unwrap();
        for p in &env {
            assert_eq!(p.bound, 0.5f64.powi(p.t as i32));
            assert!(!p.diverging);
        }
        let c = 0.37;
        let env = theorem1_envelope(&synthetic_rows(1.0, c, 30), 1.0).unwrap();
        for p in &env {
            assert_eq!(p.bound, 1.0 + p.t as f64 * c);
            assert!(p.diverging);
        }
        let mu_eta = 0.6;
        let alpha = 2.0 * (1.0 - mu_eta);
        let env = theorem1_envelope(&synthetic_rows(alpha, 0.0, 40), 1.0).unwrap();
        for w in env.windows(2) {
            assert!(w[1].bound < w[0].bound);
            assert!((w[1].bound / w[0].bound - 0.8).abs() < 1e-12);
        }
        assert!(theorem1_envelope(&[], 1.0).is_err());
    }

    #[test]
    fn gap_monotonicity() {
        let p = GapParams {
            n: 14,
            eta: 0.1,
            mu: 0.5,
            grad_bound_sq: 3.0,
            lambda: 0.5,
        };
        assert!(gap_monotonicity_check(&p, &[0.2, 0.3, 0.5]));
        assert_eq!(gap_term(14, 0, 3.0, 0.5, 0.1, 0.5), 0.0);
        let a = gap_term(14, 3, 3.0, 0.5, 0.1, 0.4);
        let b = gap_term(14, 3, 3.0, 0.5, 0.1, 0.8);
        assert!((a / b - 2.0).abs() < 1e-12);
        let flat = GapParams {
            grad_bound_sq: 0.0,
            ..p
        };
        assert!(!gap_monotonicity_check(&flat, &[0.2, 0.3]));
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance_to_optimum(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(distance_to_optimum(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(distance_to_optimum(&[1.0], &[0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn relaxed_triangle_inequality(
            u in prop::collection::vec(-10.0f64..10.0, 3),
            v in prop::collection::vec(-10.0f64..10.0, 3),
            w in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            let d = |a: &[f64], b: &[f64]| distance_to_optimum(a, b).unwrap();
            prop_assert!(d(&u, &w) <= 2.0 * d(&u, &v) + 2.0 * d(&v, &w) + 1e-9);
        }
    }
}
