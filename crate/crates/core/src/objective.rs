//! Per-node strongly convex objectives and the constants the convergence
//! analysis is stated in.
//!
//! Two families are supported, both with an L2 penalty `reg/2 ||w||^2` so
//! that every local objective is `reg`-strongly convex:
//!
//! * ridge: `F_i(w) = 1/(2 m_i) ||X_i w - y_i||^2 + reg/2 ||w||^2`
//! * softmax: mean cross-entropy of a linear classifier without bias, the
//!   parameter vector holding one length-`d` weight row per class.
//!
//! The global objective is the unweighted mean of the local objectives.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::vector::{axpy, dot, norm, norm_sq, Params};

/// Gradient-norm target for iterative optimum solves.
pub const OPTIMUM_GRAD_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 200;
/// Multiplier applied to the empirical gradient-norm supremum.
pub const GRAD_BOUND_SAFETY: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Ridge,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Targets {
    Real(Vec<f64>),
    Class { labels: Vec<usize>, classes: usize },
}

impl Targets {
    fn len(&self) -> usize {
        match self {
            Targets::Real(y) => y.len(),
            Targets::Class { labels, .. } => labels.len(),
        }
    }
}

/// The data and loss held by one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeProblem {
    features: Vec<Vec<f64>>,
    targets: Targets,
    reg: f64,
}

impl NodeProblem {
    pub fn new(features: Vec<Vec<f64>>, targets: Targets, reg: f64) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Empty("node problem needs at least one sample"));
        }
        if !(reg > 0.0) || !reg.is_finite() {
            return Err(invalid(
                "problem.reg",
                format!("must be finite and > 0 (got {reg})"),
            ));
        }
        if targets.len() != features.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: targets.len(),
            });
        }
        let d = features[0].len();
        if let Some(row) = features.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if let Targets::Class { labels, classes } = &targets {
            if *classes < 2 {
                return Err(invalid(
                    "problem.classes",
                    "softmax needs at least 2 classes",
                ));
            }
            if labels.iter().any(|&l| l >= *classes) {
                return Err(invalid("problem.labels", "label out of range"));
            }
        }
        Ok(Self {
            features,
            targets,
            reg,
        })
    }

    pub fn kind(&self) -> ObjectiveKind {
        match self.targets {
            Targets::Real(_) => ObjectiveKind::Ridge,
            Targets::Class { .. } => ObjectiveKind::Softmax,
        }
    }

    pub fn samples(&self) -> usize {
        self.features.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    fn classes(&self) -> usize {
        match self.targets {
            Targets::Real(_) => 1,
            Targets::Class { classes, .. } => classes,
        }
    }

    /// Length of the flattened parameter vector.
    pub fn dimension(&self) -> usize {
        match self.kind() {
            ObjectiveKind::Ridge => self.feature_dim(),
            ObjectiveKind::Softmax => self.classes() * self.feature_dim(),
        }
    }

    fn check_dim(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: w.len(),
            });
        }
        Ok(())
    }

    /// Data term of sample `k` (no regularizer).
    fn sample_loss(&self, w: &[f64], k: usize, logits: &mut [f64]) -> f64 {
        let x = &self.features[k];
        match &self.targets {
            Targets::Real(y) => {
                let r = dot(x, w) - y[k];
                0.5 * r * r
            }
            Targets::Class { labels, .. } => {
                let lse = self.softmax_into(w, x, logits);
                lse - logits_raw(w, x, labels[k])
            }
        }
    }

    /// Writes class probabilities into `probs` and returns log-sum-exp of the logits.
    fn softmax_into(&self, w: &[f64], x: &[f64], probs: &mut [f64]) -> f64 {
        let d = x.len();
        let mut max = f64::NEG_INFINITY;
        for (c, p) in probs.iter_mut().enumerate() {
            *p = dot(&w[c * d..(c + 1) * d], x);
            max = max.max(*p);
        }
        let mut sum = 0.0;
        for p in probs.iter_mut() {
            *p = (*p - max).exp();
            sum += *p;
        }
        for p in probs.iter_mut() {
            *p /= sum;
        }
        max + sum.ln()
    }

    /// Accumulates `scale * grad(sample data term)` into `out`.
    fn add_sample_gradient(
        &self,
        w: &[f64],
        k: usize,
        scale: f64,
        probs: &mut [f64],
        out: &mut [f64],
    ) {
        let x = &self.features[k];
        match &self.targets {
            Targets::Real(y) => {
                let r = dot(x, w) - y[k];
                axpy(scale * r, x, out);
            }
            Targets::Class { labels, .. } => {
                self.softmax_into(w, x, probs);
                let d = x.len();
                for (c, &p) in probs.iter().enumerate() {
                    let coef = p - if c == labels[k] { 1.0 } else { 0.0 };
                    axpy(scale * coef, x, &mut out[c * d..(c + 1) * d]);
                }
            }
        }
    }

    pub fn loss(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        let mut buf = vec![0.0; self.classes()];
        let data: f64 = (0..self.samples())
            .map(|k| self.sample_loss(w, k, &mut buf))
            .sum::<f64>()
            / self.samples() as f64;
        Ok(data + 0.5 * self.reg * norm_sq(w))
    }

    /// Mini-batch gradient of the data term over `batch` plus the regularizer gradient.
    pub fn gradient(&self, w: &[f64], batch: &[usize]) -> Result<Params> {
        self.check_dim(w)?;
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(&k) = batch.iter().find(|&&k| k >= self.samples()) {
            return Err(Error::DimensionMismatch {
                expected: self.samples(),
                got: k + 1,
            });
        }
        let mut out: Params = w.iter().map(|v| self.reg * v).collect();
        let mut probs = vec![0.0; self.classes()];
        let scale = 1.0 / batch.len() as f64;
        for &k in batch {
            self.add_sample_gradient(w, k, scale, &mut probs, &mut out);
        }
        Ok(out)
    }

    pub fn full_gradient(&self, w: &[f64]) -> Result<Params> {
        let all: Vec<usize> = (0..self.samples()).collect();
        self.gradient(w, &all)
    }

    /// Largest squared per-sample stochastic gradient norm at `w`.
    pub fn max_sample_gradient_sq(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        let mut probs = vec![0.0; self.classes()];
        let mut g = vec![0.0; w.len()];
        let mut best = 0.0f64;
        for k in 0..self.samples() {
            g.iter_mut().zip(w).for_each(|(gi, wi)| *gi = self.reg * wi);
            self.add_sample_gradient(w, k, 1.0, &mut probs, &mut g);
            best = best.max(norm_sq(&g));
        }
        Ok(best)
    }

    /// Fraction of samples classified correctly; `None` for ridge.
    pub fn accuracy(&self, w: &[f64]) -> Result<Option<f64>> {
        self.check_dim(w)?;
        let Targets::Class { labels, classes } = &self.targets else {
            return Ok(None);
        };
        let d = self.feature_dim();
        let correct = self
            .features
            .iter()
            .zip(labels)
            .filter(|(x, &y)| {
                let scores = (0..*classes).map(|c| dot(&w[c * d..(c + 1) * d], x));
                argmax(scores) == y
            })
            .count();
        Ok(Some(correct as f64 / self.samples() as f64))
    }

    /// `lambda_max(X^T X / m)`.
    pub fn feature_curvature(&self) -> f64 {
        let d = self.feature_dim();
        let mut gram = DMatrix::<f64>::zeros(d, d);
        for x in &self.features {
            let v = DVector::from_column_slice(x);
            gram.ger(1.0, &v, &v, 1.0);
        }
        gram /= self.samples() as f64;
        SymmetricEigen::new(gram).eigenvalues.max()
    }

    /// Smoothness constant of this node's objective.
    pub fn smoothness(&self) -> f64 {
        let curvature = self.feature_curvature();
        match self.kind() {
            ObjectiveKind::Ridge => curvature + self.reg,
            // The softmax Jacobian diag(p) - pp^T is bounded by I/2.
            ObjectiveKind::Softmax => curvature / 2.0 + self.reg,
        }
    }

    /// Hessian of the full local objective.
    fn hessian(&self, w: &[f64]) -> DMatrix<f64> {
        let p = self.dimension();
        let d = self.feature_dim();
        let m = self.samples() as f64;
        let mut h = DMatrix::<f64>::zeros(p, p);
        match &self.targets {
            Targets::Real(_) => {
                for x in &self.features {
                    let v = DVector::from_column_slice(x);
                    h.ger(1.0 / m, &v, &v, 1.0);
                }
            }
            Targets::Class { classes, .. } => {
                let mut probs = vec![0.0; *classes];
                for x in &self.features {
                    self.softmax_into(w, x, &mut probs);
                    for a in 0..*classes {
                        for b in 0..*classes {
                            let c = probs[a] * (if a == b { 1.0 } else { 0.0 } - probs[b]) / m;
                            if c == 0.0 {
                                continue;
                            }
                            for f in 0..d {
                                let cf = c * x[f];
                                for g in 0..d {
                                    h[(a * d + f, b * d + g)] += cf * x[g];
                                }
                            }
                        }
                    }
                }
            }
        }
        for i in 0..p {
            h[(i, i)] += self.reg;
        }
        h
    }
}

fn logits_raw(w: &[f64], x: &[f64], class: usize) -> f64 {
    let d = x.len();
    dot(&w[class * d..(class + 1) * d], x)
}

fn argmax(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// Minimizes `sum_i weights[i] * F_i(w)` over the given problems.
///
/// Ridge is solved in closed form from the normal equations; softmax by
/// damped Newton iterations until the gradient norm drops below
/// [`OPTIMUM_GRAD_TOL`].
pub fn minimize_weighted(problems: &[&NodeProblem], weights: &[f64]) -> Result<Params> {
    let first = problems.first().ok_or(Error::Empty("no problems"))?;
    let p = first.dimension();
    if problems
        .iter()
        .any(|q| q.dimension() != p || q.kind() != first.kind())
    {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: problems
                .iter()
                .map(|q| q.dimension())
                .find(|&d| d != p)
                .unwrap_or(p),
        });
    }
    let objective = |w: &[f64]| -> f64 {
        problems
            .iter()
            .zip(weights)
            .map(|(q, &a)| a * q.loss(w).expect("dimension checked"))
            .sum()
    };
    let gradient = |w: &[f64]| -> Params {
        let mut g = vec![0.0; p];
        for (q, &a) in problems.iter().zip(weights) {
            axpy(a, &q.full_gradient(w).expect("dimension checked"), &mut g);
        }
        g
    };
    let hessian = |w: &[f64]| -> DMatrix<f64> {
        let mut h = DMatrix::<f64>::zeros(p, p);
        for (q, &a) in problems.iter().zip(weights) {
            h += q.hessian(w) * a;
        }
        h
    };
    let solve = |h: DMatrix<f64>, rhs: &[f64]| -> Option<Params> {
        let chol = h.cholesky()?;
        Some(
            chol.solve(&DVector::from_column_slice(rhs))
                .as_slice()
                .to_vec(),
        )
    };

    match first.kind() {
        ObjectiveKind::Ridge => {
            // Quadratic: one Newton step from the origin is exact.
            let zero = vec![0.0; p];
            let g0 = gradient(&zero);
            let neg: Params = g0.iter().map(|v| -v).collect();
            let mut w = solve(hessian(&zero), &neg).ok_or(Error::NonConvergence {
                iterations: 0,
                grad_norm: norm(&g0),
            })?;
            // One refinement step absorbs the rounding of the first solve.
            let g = gradient(&w);
            if let Some(step) = solve(hessian(&w), &g) {
                axpy(-1.0, &step, &mut w);
            }
            Ok(w)
        }
        ObjectiveKind::Softmax => {
            let mut w = vec![0.0; p];
            let mut f = objective(&w);
            for iter in 0..NEWTON_MAX_ITERS {
                let g = gradient(&w);
                let gn = norm(&g);
                if gn < OPTIMUM_GRAD_TOL {
                    return Ok(w);
                }
                let step = solve(hessian(&w), &g).ok_or(Error::NonConvergence {
                    iterations: iter,
                    grad_norm: gn,
                })?;
                let slope = dot(&g, &step);
                if slope <= 1e-12 * (1.0 + f.abs()) {
                    // Predicted decrease is below what `f` can resolve; the
                    // quadratic model is exact enough for a full step.
                    axpy(-1.0, &step, &mut w);
                    f = objective(&w);
                    continue;
                }
                let mut t = 1.0;
                loop {
                    let cand: Params = w.iter().zip(&step).map(|(a, s)| a - t * s).collect();
                    let fc = objective(&cand);
                    if fc <= f - 1e-4 * t * slope || t < 1e-10 {
                        w = cand;
                        f = fc;
                        break;
                    }
                    t *= 0.5;
                }
            }
            let gn = norm(&gradient(&w));
            if gn < OPTIMUM_GRAD_TOL {
                Ok(w)
            } else {
                Err(Error::NonConvergence {
                    iterations: NEWTON_MAX_ITERS,
                    grad_norm: gn,
                })
            }
        }
    }
}

/// How the per-node optimal values are weighted in the heterogeneity measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaWeighting {
    /// Weights `m_i / sum_j m_j`, the nodes' data shares.
    #[default]
    DataShare,
    /// Weights `1/n`, matching the global objective.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalOptimum {
    pub w: Params,
    pub value: f64,
}

/// Immutable collection of node problems plus every derived constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSuite {
    pub problems: Vec<NodeProblem>,
    pub dimension: usize,
    #[serde(rename = "L")]
    pub smoothness: f64,
    pub mu: f64,
    pub w_star: Params,
    pub f_star: f64,
    pub local_optima: Vec<LocalOptimum>,
    pub gamma: f64,
    pub gamma_weighting: GammaWeighting,
    pub grad_bound_sq: f64,
}

impl ProblemSuite {
    pub fn build(problems: Vec<NodeProblem>, weighting: GammaWeighting) -> Result<Self> {
        let first = problems
            .first()
            .ok_or(Error::Empty("suite needs at least one node"))?;
        let dimension = first.dimension();
        let kind = first.kind();
        if let Some(q) = problems
            .iter()
            .find(|q| q.dimension() != dimension || q.kind() != kind)
        {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                got: q.dimension(),
            });
        }
        let (smoothness, mu) = constants(&problems);
        let local_optima = problems
            .iter()
            .map(|q| {
                let w = minimize_weighted(&[q], &[1.0])?;
                let value = q.loss(&w)?;
                Ok(LocalOptimum { w, value })
            })
            .collect::<Result<Vec<_>>>()?;
        let (w_star, f_star) = global_optimum(&problems)?;
        let gamma = gamma(&problems, &local_optima, f_star, weighting)?;
        let mut suite = Self {
            problems,
            dimension,
            smoothness,
            mu,
            w_star,
            f_star,
            local_optima,
            gamma,
            gamma_weighting: weighting,
            grad_bound_sq: 0.0,
        };
        let mut probes = vec![vec![0.0; dimension], suite.w_star.clone()];
        probes.extend(suite.local_optima.iter().map(|o| o.w.clone()));
        suite.grad_bound_sq = grad_bound_estimate(&suite, &probes)?;
        Ok(suite)
    }

    pub fn n(&self) -> usize {
        self.problems.len()
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.problems[0].kind()
    }

    pub fn total_samples(&self) -> usize {
        self.problems.iter().map(NodeProblem::samples).sum()
    }

    pub fn data_shares(&self) -> Vec<f64> {
        data_shares(&self.problems)
    }

    /// `F(w) = (1/n) sum_i F_i(w)`.
    pub fn global_loss(&self, w: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for q in &self.problems {
            acc += q.loss(w)?;
        }
        Ok(acc / self.n() as f64)
    }

    pub fn global_gradient(&self, w: &[f64]) -> Result<Params> {
        let mut g = vec![0.0; self.dimension];
        let inv = 1.0 / self.n() as f64;
        for q in &self.problems {
            axpy(inv, &q.full_gradient(w)?, &mut g);
        }
        Ok(g)
    }

    /// Loss of `w` on the union of all nodes' data (sample weighted).
    pub fn pooled_loss(&self, w: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (q, s) in self.problems.iter().zip(self.data_shares()) {
            acc += s * q.loss(w)?;
        }
        Ok(acc)
    }

    /// Accuracy of `w` on the union of all nodes' data; `None` for ridge.
    pub fn pooled_accuracy(&self, w: &[f64]) -> Result<Option<f64>> {
        let mut acc = 0.0;
        for (q, s) in self.problems.iter().zip(self.data_shares()) {
            match q.accuracy(w)? {
                Some(a) => acc += s * a,
                None => return Ok(None),
            }
        }
        Ok(Some(acc))
    }
}

fn data_shares(problems: &[NodeProblem]) -> Vec<f64> {
    let total: usize = problems.iter().map(NodeProblem::samples).sum();
    problems
        .iter()
        .map(|q| q.samples() as f64 / total as f64)
        .collect()
}

/// `(L, mu)`: the largest local smoothness constant and the smallest
/// regularization coefficient, a valid strong-convexity lower bound.
pub fn constants(problems: &[NodeProblem]) -> (f64, f64) {
    let l = problems
        .iter()
        .map(NodeProblem::smoothness)
        .fold(0.0, f64::max);
    let mu = problems
        .iter()
        .map(NodeProblem::reg)
        .fold(f64::INFINITY, f64::min);
    (l, mu)
}

/// Minimizer and minimum of the unweighted global objective.
pub fn global_optimum(problems: &[NodeProblem]) -> Result<(Params, f64)> {
    let refs: Vec<&NodeProblem> = problems.iter().collect();
    let weights = vec![1.0 / problems.len() as f64; problems.len()];
    let w = minimize_weighted(&refs, &weights)?;
    let f = refs.iter().map(|q| q.loss(&w)).sum::<Result<f64>>()? / problems.len() as f64;
    Ok((w, f))
}

/// Heterogeneity measure: optimum of the weighted objective minus the
/// weighted sum of local optimal values. Nonnegative by construction; tiny
/// negative rounding residue is clamped to zero.
pub fn gamma(
    problems: &[NodeProblem],
    local: &[LocalOptimum],
    f_star: f64,
    weighting: GammaWeighting,
) -> Result<f64> {
    let n = problems.len();
    let (weights, optimum) = match weighting {
        GammaWeighting::Uniform => (vec![1.0 / n as f64; n], f_star),
        GammaWeighting::DataShare => {
            let weights = data_shares(problems);
            let refs: Vec<&NodeProblem> = problems.iter().collect();
            let w = minimize_weighted(&refs, &weights)?;
            let mut value = 0.0;
            for (q, &a) in problems.iter().zip(&weights) {
                value += a * q.loss(&w)?;
            }
            (weights, value)
        }
    };
    let local_sum: f64 = local.iter().zip(&weights).map(|(o, &a)| a * o.value).sum();
    let g = optimum - local_sum;
    Ok(if g < 0.0 && g > -1e-10 { 0.0 } else { g })
}

/// Safety factor times the largest squared per-sample gradient norm over all
/// nodes and all `trajectory` points.
pub fn grad_bound_estimate(suite: &ProblemSuite, trajectory: &[Params]) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let mut tracker = GradBound::default();
    for w in trajectory {
        for q in &suite.problems {
            tracker.observe(q, w)?;
        }
    }
    Ok(tracker.value())
}

/// Running supremum of squared stochastic gradient norms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradBound {
    max_sq: f64,
}

impl GradBound {
    /// Starts from an existing estimate (already including the safety factor).
    pub fn from_estimate(estimate: f64) -> Self {
        Self {
            max_sq: estimate / GRAD_BOUND_SAFETY,
        }
    }

    pub fn observe(&mut self, problem: &NodeProblem, w: &[f64]) -> Result<()> {
        self.max_sq = self.max_sq.max(problem.max_sample_gradient_sq(w)?);
        Ok(())
    }

    pub fn raw_max(&self) -> f64 {
        self.max_sq
    }

    pub fn value(&self) -> f64 {
        GRAD_BOUND_SAFETY * self.max_sq
    }
}
