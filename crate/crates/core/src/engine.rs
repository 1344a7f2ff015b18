//! The gossip learning round and full simulations with per-round traces.

use rand::seq::{index, SliceRandom};
use sha2::{Digest, Sha256};

use crate::accessibility::{AccessibilityState, Partition};
use crate::config::SimConfig;
use crate::diagnostics::{
    distance_to_optimum, divergence_lhs, divergence_rhs, envelope_value, full_average, gap_term,
    mean_inaccessible_norm_sq, partial_average, theorem1_terms, BoundInputs, DivergenceConstant,
};
use crate::error::{Error, Result};
use crate::gossip::{build_gossip_matrix, gossip_average, GossipMatrix};
use crate::mobility::{connectivity, init_mobility, step_mobility, Adjacency, MobilityState};
use crate::objective::{GradBound, NodeProblem, ProblemSuite};
use crate::rng::{stream, SimRng, Stream};
use crate::trace::TraceRow;
use crate::vector::{axpy, Params};
use crate::workload::{build_workload, Workload};

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub models: Vec<Params>,
    pub mobility: MobilityState,
    pub access: AccessibilityState,
    /// Index of the next round to execute.
    pub round: usize,
}

/// Generators consumed while the simulation runs.
#[derive(Debug, Clone)]
pub struct SimRngs {
    pub mobility: SimRng,
    pub churn: SimRng,
    pub training: SimRng,
}

impl SimRngs {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            mobility: stream(seed, Stream::Mobility),
            churn: stream(seed, Stream::Churn),
            training: stream(seed, Stream::Training),
        }
    }
}

/// What one round did, besides producing the next state.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub t: usize,
    pub eta: f64,
    pub previous: Vec<Params>,
    /// Models right after gossip averaging.
    pub half_step: Vec<Params>,
    pub adjacency: Adjacency,
    pub partition: Partition,
    pub gossip: GossipMatrix,
    /// Largest mini-batch gradient norm seen by each node's local training
    /// (zero when the node did not train).
    pub max_step_grad_norm: Vec<f64>,
}

/// Builds the learning task of `cfg` (data from the config seed).
pub fn build_suite(cfg: &SimConfig) -> Result<Workload> {
    build_workload(&cfg.problem, &cfg.partition, cfg.n, cfg.seed)
}

pub fn initial_state(
    cfg: &SimConfig,
    suite: &ProblemSuite,
    rngs: &mut SimRngs,
) -> Result<SimState> {
    cfg.validate()?;
    if suite.n() != cfg.n {
        return Err(Error::DimensionMismatch {
            expected: cfg.n,
            got: suite.n(),
        });
    }
    Ok(SimState {
        models: vec![vec![0.0; suite.dimension]; cfg.n],
        mobility: init_mobility(cfg.n, &cfg.mobility, &mut rngs.mobility)?,
        access: AccessibilityState::new(cfg.n),
        round: 0,
    })
}

/// `epochs` shuffled passes of mini-batch SGD over the node's data. Returns
/// the new model and the largest mini-batch gradient norm used.
pub fn local_sgd(
    problem: &NodeProblem,
    w: &[f64],
    eta: f64,
    epochs: usize,
    batch_size: usize,
    rng: &mut SimRng,
) -> Result<(Params, f64)> {
    let mut w = w.to_vec();
    let mut order: Vec<usize> = (0..problem.samples()).collect();
    let mut max_norm: f64 = 0.0;
    for _ in 0..epochs {
        order.shuffle(rng);
        for batch in order.chunks(batch_size) {
            let g = problem.gradient(&w, batch)?;
            max_norm = max_norm.max(crate::vector::norm(&g));
            axpy(-eta, &g, &mut w);
        }
    }
    Ok((w, max_norm))
}

fn reachable_mask(adj: &Adjacency, active: &[bool]) -> Vec<bool> {
    (0..adj.n())
        .map(|i| adj.neighbors(i).any(|j| j != i && active[j]))
        .collect()
}

/// One round: mobility and accessibility, gossip matrix, averaging, local
/// training. Advances `state` in place.
pub fn run_round(
    state: &mut SimState,
    suite: &ProblemSuite,
    cfg: &SimConfig,
    rngs: &mut SimRngs,
) -> Result<RoundOutcome> {
    let t = state.round;
    let eta = cfg.eta_at(t);

    state.mobility = step_mobility(&state.mobility, &cfg.mobility, &mut rngs.mobility);
    let was_accessible = state.access.accessible().to_vec();
    state.access.advance_churn(&cfg.churn, t, &mut rngs.churn);
    let adjacency = connectivity(&state.mobility, cfg.mobility.radius);
    let reachable = reachable_mask(&adjacency, &state.access.churn_active());
    state.access.settle(t, Some(&reachable));
    let accessible = state.access.accessible().to_vec();

    let mut gossip = build_gossip_matrix(&adjacency, &accessible)?;
    if cfg.deemphasis < 1.0 && t > 0 {
        for i in 0..cfg.n {
            if accessible[i] && !was_accessible[i] {
                gossip.deemphasize(i, cfg.deemphasis);
            }
        }
    }

    let previous = std::mem::take(&mut state.models);
    let half_step = gossip_average(&previous, &gossip)?;

    let mut next = Vec::with_capacity(cfg.n);
    let mut max_step_grad_norm = vec![0.0; cfg.n];
    for (i, w) in half_step.iter().enumerate() {
        if accessible[i] || cfg.offline_training {
            let (w, g) = local_sgd(
                &suite.problems[i],
                w,
                eta,
                cfg.local_epochs,
                cfg.batch_size,
                &mut rngs.training,
            )?;
            max_step_grad_norm[i] = g;
            next.push(w);
        } else {
            next.push(w.clone());
        }
    }
    state.models = next;
    state.round += 1;

    Ok(RoundOutcome {
        t,
        eta,
        previous,
        half_step,
        adjacency,
        partition: Partition::from_mask(&accessible),
        gossip,
        max_step_grad_norm,
    })
}

/// A running simulation that records one [`TraceRow`] per round.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    cfg: &'a SimConfig,
    suite: &'a ProblemSuite,
    state: SimState,
    rngs: SimRngs,
    grad_bound: GradBound,
    initial_dist_sq: Option<f64>,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a SimConfig, suite: &'a ProblemSuite) -> Result<Self> {
        let mut rngs = SimRngs::from_seed(cfg.seed);
        let state = initial_state(cfg, suite, &mut rngs)?;
        Ok(Self {
            cfg,
            suite,
            state,
            rngs,
            grad_bound: GradBound::from_estimate(suite.grad_bound_sq),
            initial_dist_sq: None,
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    /// Current estimate of the squared stochastic gradient bound.
    pub fn grad_bound_sq(&self) -> f64 {
        self.grad_bound.value()
    }

    pub fn is_done(&self) -> bool {
        self.state.round >= self.cfg.rounds
    }

    pub fn step(&mut self) -> Result<(RoundOutcome, TraceRow)> {
        let out = run_round(&mut self.state, self.suite, self.cfg, &mut self.rngs)?;
        let row = self.record(&out)?;
        Ok((out, row))
    }

    fn record(&mut self, out: &RoundOutcome) -> Result<TraceRow> {
        let (cfg, suite) = (self.cfg, self.suite);
        let part = &out.partition;
        let next = &self.state.models;
        for (i, q) in suite.problems.iter().enumerate() {
            self.grad_bound.observe(q, &out.previous[i])?;
            self.grad_bound.observe(q, &next[i])?;
        }
        let g2 = self.grad_bound.value();

        let initial = match self.initial_dist_sq {
            Some(d) => d,
            None => {
                let w0 = partial_average(&out.previous, part, cfg.wtilde_mode)?;
                let d = distance_to_optimum(&w0, &suite.w_star)?;
                self.initial_dist_sq = Some(d);
                d
            }
        };

        let wbar_next = full_average(next)?;
        let wtilde_next = partial_average(next, part, cfg.wtilde_mode)?;
        let wbar_prev = full_average(&out.previous)?;
        let rhs = |c| {
            divergence_rhs(
                &out.previous,
                part,
                &wbar_prev,
                suite.smoothness,
                out.eta,
                c,
            )
        };

        let inputs = BoundInputs {
            n: cfg.n,
            n1: part.n1(),
            n2: part.n2(),
            mean_inaccessible_norm_sq: mean_inaccessible_norm_sq(&out.previous, part),
            gamma: suite.gamma,
            eta: out.eta,
            smoothness: suite.smoothness,
            mu: suite.mu,
            grad_bound_sq: g2,
            lambda: cfg.churn.lambda,
        };
        let (alpha, beta) = theorem1_terms(&inputs);

        let mut loss = 0.0;
        let mut acc = 0.0;
        for w in next {
            loss += suite.pooled_loss(w)?;
            acc += suite.pooled_accuracy(w)?.unwrap_or(f64::NAN);
        }
        let n = cfg.n as f64;

        Ok(TraceRow {
            t: out.t,
            n1: part.n1(),
            n2: part.n2(),
            dist_wbar_sq: distance_to_optimum(&wbar_next, &suite.w_star)?,
            dist_wtilde_sq: distance_to_optimum(&wtilde_next, &suite.w_star)?,
            div_lhs: divergence_lhs(next, part, suite)?,
            div_rhs_main: rhs(DivergenceConstant::Main),
            div_rhs_appendix: rhs(DivergenceConstant::Appendix),
            alpha_t: alpha,
            beta_t: beta,
            thm1_bound: envelope_value(alpha, beta, out.t, initial),
            gap_term: gap_term(cfg.n, part.n2(), g2, suite.mu, out.eta, cfg.churn.lambda),
            gamma: suite.gamma,
            mean_loss: loss / n,
            mean_acc: acc / n,
        })
    }

    pub fn run(mut self) -> Result<Vec<TraceRow>> {
        let mut rows = Vec::with_capacity(self.cfg.rounds);
        while !self.is_done() {
            rows.push(self.step()?.1);
        }
        Ok(rows)
    }
}

/// Runs `cfg.rounds` rounds and returns the trace.
pub fn run_simulation(cfg: &SimConfig, suite: &ProblemSuite) -> Result<Vec<TraceRow>> {
    Simulation::new(cfg, suite)?.run()
}

/// Reference trajectory: single-model SGD on the uniform objective, one
/// mini-batch per node per step, with `local_epochs * ceil(mean m_i / batch)`
/// steps per round. Returns `||w - w*||^2` after each round.
pub fn pooled_sgd_oracle(cfg: &SimConfig, suite: &ProblemSuite) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, Stream::Oracle);
    let n = suite.n();
    let mean_m = suite.total_samples().div_ceil(n);
    let steps = cfg.local_epochs * mean_m.div_ceil(cfg.batch_size);
    let mut w = vec![0.0; suite.dimension];
    let mut out = Vec::with_capacity(cfg.rounds);
    for t in 0..cfg.rounds {
        let eta = cfg.eta_at(t);
        for _ in 0..steps {
            let mut g = vec![0.0; suite.dimension];
            for q in &suite.problems {
                let m = q.samples();
                let batch = index::sample(&mut rng, m, cfg.batch_size.min(m)).into_vec();
                axpy(1.0 / n as f64, &q.gradient(&w, &batch)?, &mut g);
            }
            axpy(-eta, &g, &mut w);
        }
        out.push(distance_to_optimum(&w, &suite.w_star)?);
    }
    Ok(out)
}

/// SHA-256 of `"blob {len}\0" + bytes`, hex encoded.
pub fn blob_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Content hash of a suite's JSON encoding.
pub fn suite_hash(suite: &ProblemSuite) -> String {
    let json = serde_json::to_vec(suite).expect("suite serializes");
    blob_sha256(&json)
}
