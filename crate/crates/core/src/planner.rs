//! The beam-search engine and its pluggable candidate-retention strategies.
//!
//! Each planning iteration expands every surviving candidate into
//! `expansion` sampled continuations, scores the pooled set, and filters it
//! back to `beam_width` entries by sampling with replacement from a
//! per-candidate selection distribution. Strategies differ only in how that
//! distribution is built:
//!
//! - [`WstsStrategy`] aggregates each candidate's predicted reward moments
//!   into a mean/variance pair, treats candidates as assets, and solves the
//!   mean-variance portfolio problem over the simplex; the optimal weights
//!   are the selection distribution.
//! - [`EmbsStrategy`] scores candidates by discounted expected return plus
//!   the reward-to-go estimate and samples proportionally to a softmax of
//!   the scores.
//! - [`TopKStrategy`] scores by cumulative log-probability and samples
//!   proportionally to the exponentiated scores, i.e. to sequence
//!   likelihood.
//!
//! Duplicates produced by the filter are retained as distinct beam slots:
//! they diverge again on the next stochastic expansion, so the effective
//! beam narrows toward promising candidates without ever exceeding
//! `beam_width`.
//!
//! A `beam_search` invocation owns its rng (seeded from the config) and is
//! fully deterministic; concurrent invocations against the same immutable
//! model are safe.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{complete_frame, sample_categorical, ConditionalCategoricalModel, SlotMoments};
use crate::portfolio::{solve_mean_variance, PortfolioProblem, WeightVector};
use crate::trajectory::Discretizer;
use crate::{Error, Result};

/// How predicted variances are scaled with lookahead depth when aggregating
/// a candidate. `Inflate` (`gamma^(-2t)`) grows uncertainty for deeper
/// predictions; `Damp` (`gamma^(2t)`) is the conventional discount, kept for
/// sensitivity studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VarianceScaling {
    #[default]
    Inflate,
    Damp,
}

impl VarianceScaling {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "inflate" => Ok(VarianceScaling::Inflate),
            "damp" => Ok(VarianceScaling::Damp),
            other => Err(Error::invalid(format!(
                "unknown variance scaling {other:?} (expected inflate or damp)"
            ))),
        }
    }

    fn factor(&self, gamma: f64, t: i32) -> f64 {
        match self {
            VarianceScaling::Inflate => gamma.powi(-2 * t),
            VarianceScaling::Damp => gamma.powi(2 * t),
        }
    }
}

/// Beam-search parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    /// Candidates kept after each filter step.
    pub beam_width: usize,
    /// Sampled continuations per surviving candidate per iteration.
    pub expansion: usize,
    /// Planning iterations (simulated transitions).
    pub horizon: usize,
    pub gamma: f64,
    /// Risk aversion of the WSTS retention step.
    pub delta: f64,
    /// Floor applied to candidate variances before the portfolio solve.
    pub variance_floor: f64,
    pub seed: u64,
    pub variance_scaling: VarianceScaling,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            beam_width: 4,
            expansion: 2,
            horizon: 5,
            gamma: 0.99,
            delta: 1.0,
            variance_floor: 1e-8,
            seed: 0,
            variance_scaling: VarianceScaling::Inflate,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width < 1 || self.expansion < 1 || self.horizon < 1 {
            return Err(Error::invalid(
                "beam_width, expansion, and horizon must all be at least 1",
            ));
        }
        if !self.gamma.is_finite() || self.gamma <= 0.0 || self.gamma > 1.0 {
            return Err(Error::invalid(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(Error::invalid(format!(
                "delta must be finite and non-negative, got {}",
                self.delta
            )));
        }
        if !self.variance_floor.is_finite() || self.variance_floor <= 0.0 {
            return Err(Error::invalid(format!(
                "variance_floor must be positive, got {}",
                self.variance_floor
            )));
        }
        Ok(())
    }
}

/// A partial rollout: the token prefix (root state tokens plus every sampled
/// frame), the per-step reward moments, the reward-to-go moments of the most
/// recent frame, and the cumulative log-probability of the sampled tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamCandidate {
    pub tokens: Vec<u32>,
    pub reward_moments: Vec<SlotMoments>,
    pub terminal_rtg: Option<SlotMoments>,
    pub log_prob: f64,
    pub steps: usize,
}

impl BeamCandidate {
    /// The search root: just the tokenized current state.
    pub fn root(state_tokens: Vec<u32>) -> Self {
        Self {
            tokens: state_tokens,
            reward_moments: Vec::new(),
            terminal_rtg: None,
            log_prob: 0.0,
            steps: 0,
        }
    }

    /// Sample one continuation frame. The first expansion completes the root
    /// frame (the state slots are already observed); later expansions sample
    /// full frames.
    fn expand<M: ConditionalCategoricalModel + ?Sized>(
        &self,
        model: &M,
        discretizer: &Discretizer,
        rng: &mut impl Rng,
    ) -> BeamCandidate {
        let start_slot = if self.steps == 0 {
            discretizer.state_dim()
        } else {
            0
        };
        let frame = complete_frame(model, discretizer, &self.tokens, start_slot, rng);
        let mut tokens = Vec::with_capacity(self.tokens.len() + frame.tokens.len());
        tokens.extend_from_slice(&self.tokens);
        tokens.extend_from_slice(&frame.tokens);
        let mut reward_moments = self.reward_moments.clone();
        reward_moments.push(frame.reward);
        BeamCandidate {
            tokens,
            reward_moments,
            terminal_rtg: Some(frame.reward_to_go),
            log_prob: self.log_prob + frame.log_prob,
            steps: self.steps + 1,
        }
    }

    /// Decoded action vector of the first simulated frame — what an MPC
    /// runner executes.
    pub fn first_action(&self, discretizer: &Discretizer) -> Vec<f64> {
        let n = discretizer.state_dim();
        (0..discretizer.action_dim())
            .map(|j| discretizer.decode_token(n + j, self.tokens[n + j]))
            .collect()
    }
}

/// Discounted mean and depth-scaled variance of a candidate: the per-step
/// reward moments contribute `gamma^t·E[r_t]` and `scale(t)·Var[r_t]` for
/// `t = 1..=steps`, and the terminal reward-to-go moments enter one step
/// deeper at `t = steps + 1`.
pub fn wsts_aggregate(
    candidate: &BeamCandidate,
    gamma: f64,
    scaling: VarianceScaling,
) -> (f64, f64) {
    assert!(
        candidate.steps >= 1 && candidate.reward_moments.len() == candidate.steps,
        "aggregation needs at least one simulated step"
    );
    let rtg = candidate
        .terminal_rtg
        .expect("expanded candidates carry reward-to-go moments");
    let mut mu = 0.0;
    let mut sigma2 = 0.0;
    for (i, m) in candidate.reward_moments.iter().enumerate() {
        let t = (i + 1) as i32;
        mu += gamma.powi(t) * m.mean;
        sigma2 += scaling.factor(gamma, t) * m.variance;
    }
    let t_final = (candidate.steps + 1) as i32;
    mu += gamma.powi(t_final) * rtg.mean;
    sigma2 += scaling.factor(gamma, t_final) * rtg.variance;
    (mu, sigma2)
}

/// Assemble the candidates' aggregated means and variances and solve the
/// mean-variance retention problem over the simplex.
pub fn wsts_score(
    candidates: &[BeamCandidate],
    delta: f64,
    gamma: f64,
    variance_floor: f64,
    scaling: VarianceScaling,
) -> Result<WeightVector> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidates"));
    }
    let mut mu = Vec::with_capacity(candidates.len());
    let mut sigma2 = Vec::with_capacity(candidates.len());
    for c in candidates {
        let (m, s) = wsts_aggregate(c, gamma, scaling);
        mu.push(m);
        sigma2.push(s);
    }
    let problem = PortfolioProblem::new(mu, sigma2, delta).with_variance_floor(variance_floor);
    solve_mean_variance(&problem)
}

/// Draw `beam_width` candidate indices (with repetition) from the portfolio
/// weights.
pub fn wsts_filter(weights: &WeightVector, beam_width: usize, rng: &mut impl Rng) -> Vec<usize> {
    sample_indices(weights.as_slice(), beam_width, rng)
}

/// Discounted expected return plus reward-to-go per candidate — the WSTS
/// mean with no variance term.
pub fn embs_score(candidates: &[BeamCandidate], gamma: f64) -> Vec<f64> {
    candidates
        .iter()
        .map(|c| wsts_aggregate(c, gamma, VarianceScaling::Inflate).0)
        .collect()
}

/// Sample `beam_width` indices proportionally to a unit-temperature softmax
/// of the scores.
pub fn embs_filter(scores: &[f64], beam_width: usize, rng: &mut impl Rng) -> Vec<usize> {
    sample_indices(&softmax(scores), beam_width, rng)
}

/// Cumulative log-probability per candidate.
pub fn topk_score(candidates: &[BeamCandidate]) -> Vec<f64> {
    candidates.iter().map(|c| c.log_prob).collect()
}

/// Sample `beam_width` indices proportionally to the exponentiated scores,
/// i.e. to sequence likelihood.
pub fn topk_filter(scores: &[f64], beam_width: usize, rng: &mut impl Rng) -> Vec<usize> {
    sample_indices(&softmax(scores), beam_width, rng)
}

/// Max-shifted softmax at unit temperature.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn sample_indices(probs: &[f64], count: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..count).map(|_| sample_categorical(probs, rng)).collect()
}

/// A candidate-retention rule: a selection distribution over the pooled
/// candidates for filtering, and a terminal ranking for the final answer.
pub trait Strategy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Probability of retaining each candidate per filter draw. Must be a
    /// simplex point over the candidate set.
    fn selection_weights(
        &self,
        candidates: &[BeamCandidate],
        cfg: &PlannerConfig,
    ) -> Result<Vec<f64>>;

    /// Index of the candidate returned when the search ends.
    fn best_index(&self, candidates: &[BeamCandidate], cfg: &PlannerConfig) -> usize;
}

/// Mean-variance (portfolio) retention.
pub struct WstsStrategy;

/// Expectation-maximizing retention: softmax over discounted expected
/// returns.
pub struct EmbsStrategy;

/// Likelihood-driven retention: sampling proportional to sequence
/// probability.
pub struct TopKStrategy;

impl Strategy for WstsStrategy {
    fn name(&self) -> &'static str {
        "wsts"
    }

    fn selection_weights(
        &self,
        candidates: &[BeamCandidate],
        cfg: &PlannerConfig,
    ) -> Result<Vec<f64>> {
        Ok(wsts_score(
            candidates,
            cfg.delta,
            cfg.gamma,
            cfg.variance_floor,
            cfg.variance_scaling,
        )?
        .into_vec())
    }

    fn best_index(&self, candidates: &[BeamCandidate], cfg: &PlannerConfig) -> usize {
        best_by_mean(candidates, cfg)
    }
}

impl Strategy for EmbsStrategy {
    fn name(&self) -> &'static str {
        "embs"
    }

    fn selection_weights(
        &self,
        candidates: &[BeamCandidate],
        cfg: &PlannerConfig,
    ) -> Result<Vec<f64>> {
        if candidates.is_empty() {
            return Err(Error::EmptyInput("candidates"));
        }
        Ok(softmax(&embs_score(candidates, cfg.gamma)))
    }

    fn best_index(&self, candidates: &[BeamCandidate], cfg: &PlannerConfig) -> usize {
        best_by_mean(candidates, cfg)
    }
}

impl Strategy for TopKStrategy {
    fn name(&self) -> &'static str {
        "topk"
    }

    fn selection_weights(
        &self,
        candidates: &[BeamCandidate],
        _cfg: &PlannerConfig,
    ) -> Result<Vec<f64>> {
        if candidates.is_empty() {
            return Err(Error::EmptyInput("candidates"));
        }
        Ok(softmax(&topk_score(candidates)))
    }

    fn best_index(&self, candidates: &[BeamCandidate], _cfg: &PlannerConfig) -> usize {
        let mut best = 0;
        for i in 1..candidates.len() {
            if candidates[i].log_prob > candidates[best].log_prob {
                best = i;
            }
        }
        best
    }
}

/// Argmax of the aggregated mean; ties break toward lower variance, then
/// lower index.
fn best_by_mean(candidates: &[BeamCandidate], cfg: &PlannerConfig) -> usize {
    let mut best = 0;
    let mut best_key = (f64::NEG_INFINITY, f64::INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let (mu, sigma2) = wsts_aggregate(c, cfg.gamma, cfg.variance_scaling);
        if mu > best_key.0 || (mu == best_key.0 && sigma2 < best_key.1) {
            best = i;
            best_key = (mu, sigma2);
        }
    }
    best
}

/// Look up a strategy by its config/CLI name.
pub fn strategy_by_name(name: &str) -> Result<Box<dyn Strategy>> {
    match name {
        "wsts" => Ok(Box::new(WstsStrategy)),
        "embs" => Ok(Box::new(EmbsStrategy)),
        "topk" => Ok(Box::new(TopKStrategy)),
        other => Err(Error::invalid(format!(
            "unknown strategy {other:?} (expected wsts, embs, or topk)"
        ))),
    }
}

/// Per-candidate view recorded in a planning trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateTrace {
    pub mu: f64,
    pub sigma2: f64,
    pub log_prob: f64,
    pub weight: f64,
}

/// One planning iteration: pooled candidate summaries, the selection
/// distribution, and the sampled beam slots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub candidates: Vec<CandidateTrace>,
    pub selected: Vec<usize>,
}

/// Run the beam search and return the best candidate under the strategy's
/// terminal objective.
///
/// `start` is the tokenized current state (`state_dim` tokens). Runs
/// `cfg.horizon` iterations; the pool never empties because every surviving
/// candidate contributes at least one continuation.
pub fn beam_search<M: ConditionalCategoricalModel + ?Sized>(
    start: &[u32],
    model: &M,
    discretizer: &Discretizer,
    strategy: &dyn Strategy,
    cfg: &PlannerConfig,
) -> Result<BeamCandidate> {
    Ok(beam_search_traced(start, model, discretizer, strategy, cfg, false)?.0)
}

/// As [`beam_search`], optionally recording a per-iteration trace.
pub fn beam_search_traced<M: ConditionalCategoricalModel + ?Sized>(
    start: &[u32],
    model: &M,
    discretizer: &Discretizer,
    strategy: &dyn Strategy,
    cfg: &PlannerConfig,
    record_trace: bool,
) -> Result<(BeamCandidate, Vec<IterationTrace>)> {
    cfg.validate()?;
    if model.frame_len() != discretizer.frame_len()
        || model.vocab_size() != discretizer.vocab_size()
    {
        return Err(Error::DimensionMismatch(format!(
            "model ({}, {}) does not match discretizer ({}, {})",
            model.frame_len(),
            model.vocab_size(),
            discretizer.frame_len(),
            discretizer.vocab_size()
        )));
    }
    if start.len() != discretizer.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "start has {} tokens, state_dim is {}",
            start.len(),
            discretizer.state_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut beam = vec![BeamCandidate::root(start.to_vec())];
    let mut traces = Vec::new();
    for iteration in 1..=cfg.horizon {
        let mut pool = Vec::with_capacity(beam.len() * cfg.expansion);
        for candidate in &beam {
            for _ in 0..cfg.expansion {
                pool.push(candidate.expand(model, discretizer, &mut rng));
            }
        }
        let weights = strategy.selection_weights(&pool, cfg)?;
        debug_assert_eq!(weights.len(), pool.len());
        let selected = sample_indices(&weights, cfg.beam_width, &mut rng);
        if record_trace {
            traces.push(IterationTrace {
                iteration,
                candidates: pool
                    .iter()
                    .zip(&weights)
                    .map(|(c, &w)| {
                        let (mu, sigma2) = wsts_aggregate(c, cfg.gamma, cfg.variance_scaling);
                        CandidateTrace {
                            mu,
                            sigma2,
                            log_prob: c.log_prob,
                            weight: w,
                        }
                    })
                    .collect(),
                selected: selected.clone(),
            });
        }
        beam = selected.iter().map(|&i| pool[i].clone()).collect();
    }
    let best = strategy.best_index(&beam, cfg);
    Ok((beam.swap_remove(best), traces))
}
