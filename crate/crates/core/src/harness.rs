//! MPC episode execution, multi-seed evaluation, strategy comparison, and
//! report persistence — everything the `wsts` binary wraps.
//!
//! The pipeline is: build the environment from config, generate an offline
//! batch of the configured quality, fit the discretizer, train the tabular
//! model, then replan from every observed state with the configured strategy
//! and execute only the first planned action. Episode returns are normalized
//! so the exact random-policy mean maps to 0 and the exact finite-horizon
//! optimum maps to 100.
//!
//! Reports serialize to JSON deterministically: identical config and seeds
//! produce byte-identical files. Wall-clock timings are therefore kept out
//! of the canonical serialization and only attached on request.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{
    generate_quality_batch, optimal_return, random_policy_return, BatchQuality, Environment,
    WindyCliffChain,
};
use crate::model::{ConditionalCategoricalModel, TabularMarkovModel};
use crate::planner::{
    beam_search_traced, strategy_by_name, IterationTrace, PlannerConfig, Strategy,
    VarianceScaling,
};
use crate::stats::{aggregate, Aggregates, ScoresByEnv};
use crate::trajectory::{Discretizer, OfflineBatch};
use crate::{mix_seed, Error, Result};

const ENV_SEED_SALT: u64 = 0x454e56;
const PLAN_SEED_SALT: u64 = 0x504c41;
const BOOTSTRAP_SALT: u64 = 0xb007;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// The structured config file. Key names are part of the CLI contract; see
/// the README for the full table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub env: EnvConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub batch: BatchConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub planner: PlannerSection,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub length: usize,
    pub slip: f64,
    #[serde(default = "default_cliff_penalty")]
    pub cliff_penalty: f64,
    #[serde(default = "default_goal_reward")]
    pub goal_reward: f64,
    #[serde(default = "default_horizon_cap")]
    pub horizon_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "default_quality")]
    pub quality: String,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_batch_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_vocab")]
    pub vocab: usize,
    #[serde(default = "default_order")]
    pub k: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    #[serde(rename = "B")]
    pub beam_width: usize,
    #[serde(rename = "E", default = "default_expansion")]
    pub expansion: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_variance_floor")]
    pub variance_floor: f64,
    #[serde(default)]
    pub variance_scaling: VarianceScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Number of evaluation seeds; episodes run on seeds `0..seeds`.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_delta_grid")]
    pub delta_grid: Vec<f64>,
    /// Base seed for the bootstrap resampling stream.
    #[serde(default)]
    pub seed: u64,
}

fn default_cliff_penalty() -> f64 { 50.0 }
fn default_goal_reward() -> f64 { 10.0 }
fn default_horizon_cap() -> usize { 24 }
fn default_quality() -> String { "medium-replay".to_string() }
fn default_epsilon() -> f64 { 0.1 }
fn default_episodes() -> usize { 400 }
fn default_batch_seed() -> u64 { 7 }
fn default_vocab() -> usize { 32 }
fn default_order() -> usize { 4 }
fn default_alpha() -> f64 { 0.05 }
fn default_expansion() -> usize { 2 }
fn default_gamma() -> f64 { 0.99 }
fn default_delta() -> f64 { 1.0 }
fn default_variance_floor() -> f64 { 1e-8 }
fn default_seeds() -> usize { 15 }
fn default_bootstrap() -> usize { 2000 }
fn default_delta_grid() -> Vec<f64> { vec![0.1, 0.5, 1.0, 2.0] }

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { quality: default_quality(), epsilon: default_epsilon() }
    }
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self { episodes: default_episodes(), seed: default_batch_seed() }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { vocab: default_vocab(), k: default_order(), alpha: default_alpha() }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seeds: default_seeds(),
            bootstrap: default_bootstrap(),
            delta_grid: default_delta_grid(),
            seed: 0,
        }
    }
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: HarnessConfig =
            toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        BatchQuality::parse(&self.policy.quality)?;
        if !(0.0..=1.0).contains(&self.policy.epsilon) {
            return Err(Error::invalid("policy.epsilon must lie in [0, 1]"));
        }
        if self.batch.episodes == 0 {
            return Err(Error::invalid("batch.episodes must be at least 1"));
        }
        if self.model.vocab < 2 {
            return Err(Error::invalid("model.vocab must be at least 2"));
        }
        if !self.model.alpha.is_finite() || self.model.alpha <= 0.0 {
            return Err(Error::invalid("model.alpha must be positive"));
        }
        if self.eval.seeds < 2 {
            return Err(Error::invalid("eval.seeds must be at least 2"));
        }
        if self.eval.delta_grid.is_empty()
            || self.eval.delta_grid.iter().any(|d| !d.is_finite() || *d < 0.0)
        {
            return Err(Error::invalid(
                "eval.delta_grid must be non-empty with finite non-negative entries",
            ));
        }
        self.planner_config(self.planner.delta, 0).validate()?;
        self.chain()?;
        Ok(())
    }

    /// Canonical serialized form; the basis of the provenance hash.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form, hex-encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_toml().as_bytes());
        digest.iter().fold(String::new(), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }

    pub fn chain(&self) -> Result<WindyCliffChain> {
        WindyCliffChain::new(
            self.env.length,
            self.env.slip,
            self.env.cliff_penalty,
            self.env.goal_reward,
            self.env.horizon_cap,
        )
    }

    pub fn planner_config(&self, delta: f64, seed: u64) -> PlannerConfig {
        PlannerConfig {
            beam_width: self.planner.beam_width,
            expansion: self.planner.expansion,
            horizon: self.planner.horizon,
            gamma: self.planner.gamma,
            delta,
            variance_floor: self.planner.variance_floor,
            seed,
            variance_scaling: self.planner.variance_scaling,
        }
    }

    /// Stratum label for reports: identifies the environment configuration.
    pub fn env_label(&self) -> String {
        format!("chain-L{}-p{}", self.env.length, self.env.slip)
    }
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig {
                length: 9,
                slip: 0.1,
                cliff_penalty: default_cliff_penalty(),
                goal_reward: default_goal_reward(),
                horizon_cap: default_horizon_cap(),
            },
            policy: PolicyConfig::default(),
            batch: BatchConfig::default(),
            model: ModelConfig::default(),
            planner: PlannerSection {
                beam_width: 6,
                expansion: 8,
                horizon: 4,
                gamma: default_gamma(),
                delta: default_delta(),
                variance_floor: default_variance_floor(),
                variance_scaling: VarianceScaling::Inflate,
            },
            eval: EvalConfig::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// MPC execution
// ---------------------------------------------------------------------------

/// Replans from the current observed state each step and executes exactly
/// the first action of the chosen plan.
pub struct MpcRunner<'a, M: ConditionalCategoricalModel + ?Sized> {
    env: WindyCliffChain,
    model: &'a M,
    discretizer: &'a Discretizer,
    strategy: &'a dyn Strategy,
    planner: PlannerConfig,
    episode_cap: usize,
}

/// Trace of one executed MPC step: the observed state, the planning
/// iterations behind the decision, and the executed action with its true
/// reward.
#[derive(Debug, Clone, Serialize)]
pub struct StepTrace {
    pub step: usize,
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub planning: Vec<IterationTrace>,
}

impl<'a, M: ConditionalCategoricalModel + ?Sized> MpcRunner<'a, M> {
    /// Dimension consistency (tokenizer vs model vs environment) is checked
    /// here, before any step runs.
    pub fn new(
        env: WindyCliffChain,
        model: &'a M,
        discretizer: &'a Discretizer,
        strategy: &'a dyn Strategy,
        planner: PlannerConfig,
    ) -> Result<Self> {
        let desc = env.descriptor();
        let frame_len = desc.state_dim + desc.action_dim + 2;
        if discretizer.frame_len() != frame_len
            || discretizer.state_dim() != desc.state_dim
            || discretizer.action_dim() != desc.action_dim
        {
            return Err(Error::DimensionMismatch(format!(
                "discretizer frame ({}, {}, {}) does not match environment ({}, {})",
                discretizer.frame_len(),
                discretizer.state_dim(),
                discretizer.action_dim(),
                desc.state_dim,
                desc.action_dim
            )));
        }
        if model.frame_len() != frame_len || model.vocab_size() != discretizer.vocab_size() {
            return Err(Error::DimensionMismatch(
                "model does not match tokenizer".into(),
            ));
        }
        planner.validate()?;
        let episode_cap = desc.horizon_cap;
        Ok(Self {
            env,
            model,
            discretizer,
            strategy,
            planner,
            episode_cap,
        })
    }

    /// Override the episode horizon cap (defaults to the environment's).
    pub fn with_episode_cap(mut self, cap: usize) -> Self {
        self.episode_cap = cap;
        self
    }

    /// Run one episode; returns the accumulated true environment reward.
    /// Deterministic per seed.
    pub fn run_episode(&mut self, seed: u64) -> Result<f64> {
        Ok(self.episode(seed, false)?.0)
    }

    /// As [`run_episode`](Self::run_episode), also recording per-step traces.
    pub fn run_episode_traced(&mut self, seed: u64) -> Result<(f64, Vec<StepTrace>)> {
        self.episode(seed, true)
    }

    fn episode(&mut self, seed: u64, trace: bool) -> Result<(f64, Vec<StepTrace>)> {
        let mut state = self.env.reset(mix_seed(seed, ENV_SEED_SALT));
        let mut plan_seeds = ChaCha8Rng::seed_from_u64(mix_seed(seed, PLAN_SEED_SALT));
        let mut total = 0.0;
        let mut traces = Vec::new();
        for step in 0..self.episode_cap {
            let root: Vec<u32> = state
                .iter()
                .enumerate()
                .map(|(j, &v)| self.discretizer.encode_value(j, v).0)
                .collect();
            let mut cfg = self.planner.clone();
            cfg.seed = plan_seeds.random();
            let (best, planning) = beam_search_traced(
                &root,
                self.model,
                self.discretizer,
                self.strategy,
                &cfg,
                trace,
            )?;
            let action = best.first_action(self.discretizer);
            let out = self.env.step(&action)?;
            total += out.reward;
            if trace {
                traces.push(StepTrace {
                    step,
                    state: state.clone(),
                    action,
                    reward: out.reward,
                    planning,
                });
            }
            if out.done {
                break;
            }
            state = out.state;
        }
        Ok((total, traces))
    }
}

// ---------------------------------------------------------------------------
// Evaluation pipeline
// ---------------------------------------------------------------------------

/// Linear map placing the exact random-policy mean at 0 and the exact
/// finite-horizon optimum at 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub random_mean: f64,
    pub optimal: f64,
}

impl Normalization {
    pub fn for_chain(chain: &WindyCliffChain) -> Result<Self> {
        let random_mean = random_policy_return(chain);
        let optimal = optimal_return(chain);
        if (optimal - random_mean).abs() < 1e-9 {
            return Err(Error::invalid(
                "degenerate normalization: optimal equals random mean",
            ));
        }
        Ok(Self {
            random_mean,
            optimal,
        })
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        100.0 * (raw - self.random_mean) / (self.optimal - self.random_mean)
    }
}

/// One evaluated episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub raw_return: f64,
    pub normalized: f64,
}

/// Per-(strategy, delta) evaluation row: per-seed scores plus aggregates
/// over the normalized scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub strategy: String,
    pub delta: f64,
    pub scores: Vec<SeedScore>,
    pub aggregates: Aggregates,
}

/// Prepared pipeline artifacts shared by every evaluation in one run.
pub struct Pipeline {
    pub config: HarnessConfig,
    pub config_hash: String,
    pub chain: WindyCliffChain,
    pub batch: OfflineBatch,
    pub discretizer: Discretizer,
    pub model: TabularMarkovModel,
    pub normalization: Normalization,
}

impl Pipeline {
    /// Generate the batch, fit the tokenizer, train the model, and compute
    /// the normalization constants.
    pub fn prepare(config: &HarnessConfig) -> Result<Self> {
        config.validate()?;
        let config_hash = config.hash();
        let chain = config.chain()?;
        let quality = BatchQuality::parse(&config.policy.quality)?;
        let mut batch = generate_quality_batch(
            &chain,
            quality,
            config.batch.episodes,
            config.planner.gamma,
            config.batch.seed,
            config.policy.epsilon,
        )?;
        batch = stamp_batch(batch, &config_hash)?;
        let discretizer = Discretizer::fit(&batch, config.model.vocab)?;
        let model = TabularMarkovModel::train(&batch, &discretizer, config.model.k, config.model.alpha)?
            .with_config_hash(config_hash.clone());
        let normalization = Normalization::for_chain(&chain)?;
        Ok(Self {
            config: config.clone(),
            config_hash,
            chain,
            batch,
            discretizer,
            model,
            normalization,
        })
    }

    /// Build a pipeline around an existing batch (and optionally an existing
    /// trained model) instead of regenerating them.
    pub fn from_artifacts(
        config: &HarnessConfig,
        batch: OfflineBatch,
        model: Option<TabularMarkovModel>,
    ) -> Result<Self> {
        config.validate()?;
        let config_hash = config.hash();
        let chain = config.chain()?;
        let discretizer = Discretizer::fit(&batch, config.model.vocab)?;
        let model = match model {
            Some(m) => m,
            None => {
                TabularMarkovModel::train(&batch, &discretizer, config.model.k, config.model.alpha)?
                    .with_config_hash(config_hash.clone())
            }
        };
        let normalization = Normalization::for_chain(&chain)?;
        Ok(Self {
            config: config.clone(),
            config_hash,
            chain,
            batch,
            discretizer,
            model,
            normalization,
        })
    }

    /// Evaluate one strategy at one risk-aversion level over the configured
    /// seed list. Episodes run in parallel; results are keyed by seed, so
    /// the outcome is independent of scheduling.
    pub fn evaluate(&self, strategy_name: &str, delta: f64) -> Result<RunRow> {
        let seeds: Vec<u64> = (0..self.config.eval.seeds as u64).collect();
        let mut scores: Vec<SeedScore> = seeds
            .par_iter()
            .map(|&seed| {
                let strategy = strategy_by_name(strategy_name)?;
                let mut runner = MpcRunner::new(
                    self.chain.clone(),
                    &self.model,
                    &self.discretizer,
                    strategy.as_ref(),
                    self.config.planner_config(delta, 0),
                )?;
                let raw = runner.run_episode(seed)?;
                Ok(SeedScore {
                    seed,
                    raw_return: raw,
                    normalized: self.normalization.normalize(raw),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        scores.sort_by_key(|s| s.seed);
        let mut by_env = ScoresByEnv::new();
        by_env.insert(
            self.config.env_label(),
            scores.iter().map(|s| s.normalized).collect(),
        );
        let aggregates = aggregate(
            &by_env,
            self.config.eval.bootstrap,
            mix_seed(self.config.eval.seed, BOOTSTRAP_SALT),
        )?;
        Ok(RunRow {
            strategy: strategy_name.to_string(),
            delta,
            scores,
            aggregates,
        })
    }
}

fn stamp_batch(batch: OfflineBatch, hash: &str) -> Result<OfflineBatch> {
    let mut provenance = batch.provenance().clone();
    provenance.config_hash = hash.to_string();
    OfflineBatch::new(
        batch.trajectories().to_vec(),
        batch.state_dim(),
        batch.action_dim(),
        batch.gamma(),
        provenance,
    )
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Report of a single-strategy evaluation (`run` subcommand).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub env_label: String,
    pub normalization: Normalization,
    pub run: RunRow,
    pub config: HarnessConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

/// The stability verdict of a WSTS-vs-EM-BS comparison, computed at the
/// tuned risk-aversion level (best IQM over the sweep grid, ties toward the
/// smaller delta).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub tuned_delta: f64,
    pub wsts_std: f64,
    pub embs_std: f64,
    /// `wsts_std / embs_std`; below one means WSTS is the steadier decoder.
    pub std_ratio: f64,
    pub wsts_iqm: f64,
    pub embs_iqm: f64,
    pub iqm_gap: f64,
    pub more_stable: bool,
    /// Whether the two IQM confidence intervals overlap.
    pub iqm_ci_overlap: bool,
}

/// Report of a full WSTS-vs-EM-BS comparison over the delta sweep grid
/// (`compare` subcommand).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config_hash: String,
    pub env_label: String,
    pub batch_label: String,
    pub normalization: Normalization,
    /// One row per delta in `eval.delta_grid`, in grid order.
    pub wsts: Vec<RunRow>,
    pub embs: RunRow,
    pub verdict: StabilityVerdict,
    pub config: HarnessConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

/// Run one strategy at `planner.delta` over the configured seeds.
pub fn run_strategy(pipeline: &Pipeline, strategy_name: &str) -> Result<EvalReport> {
    strategy_by_name(strategy_name)?;
    let run = pipeline.evaluate(strategy_name, pipeline.config.planner.delta)?;
    Ok(EvalReport {
        config_hash: pipeline.config_hash.clone(),
        env_label: pipeline.config.env_label(),
        normalization: pipeline.normalization,
        run,
        config: pipeline.config.clone(),
        timings_ms: None,
    })
}

/// Run WSTS across the delta sweep grid and EM-BS once, on identical seeds
/// and the identical batch/model, and emit the stability verdict at the
/// tuned delta.
pub fn compare_strategies(config: &HarnessConfig) -> Result<(ComparisonReport, BTreeMap<String, f64>)> {
    let mut timings = BTreeMap::new();
    let t0 = std::time::Instant::now();
    let pipeline = Pipeline::prepare(config)?;
    timings.insert("prepare".to_string(), ms_since(t0));

    let t1 = std::time::Instant::now();
    let mut wsts_rows = Vec::with_capacity(config.eval.delta_grid.len());
    for &delta in &config.eval.delta_grid {
        wsts_rows.push(pipeline.evaluate("wsts", delta)?);
    }
    timings.insert("wsts_sweep".to_string(), ms_since(t1));

    let t2 = std::time::Instant::now();
    let embs = pipeline.evaluate("embs", config.planner.delta)?;
    timings.insert("embs".to_string(), ms_since(t2));

    let tuned = tuned_row(&wsts_rows);
    let verdict = build_verdict(tuned, &embs);
    let report = ComparisonReport {
        config_hash: pipeline.config_hash.clone(),
        env_label: config.env_label(),
        batch_label: pipeline.batch.provenance().policy_label.clone(),
        normalization: pipeline.normalization,
        wsts: wsts_rows,
        embs,
        verdict,
        config: config.clone(),
        timings_ms: None,
    };
    Ok((report, timings))
}

fn ms_since(start: std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// The sweep row with the best IQM; exact ties resolve toward the smaller
/// delta (grid order).
pub fn tuned_row(rows: &[RunRow]) -> &RunRow {
    let mut best = &rows[0];
    for row in &rows[1..] {
        if row.aggregates.iqm.value > best.aggregates.iqm.value {
            best = row;
        }
    }
    best
}

/// The sweep row with the best mean; exact ties resolve toward the smaller
/// delta (grid order).
pub fn best_row_by_mean(rows: &[RunRow]) -> &RunRow {
    let mut best = &rows[0];
    for row in &rows[1..] {
        if row.aggregates.mean.value > best.aggregates.mean.value {
            best = row;
        }
    }
    best
}

fn build_verdict(wsts: &RunRow, embs: &RunRow) -> StabilityVerdict {
    let wsts_std = wsts.aggregates.std;
    let embs_std = embs.aggregates.std;
    let std_ratio = if embs_std == 0.0 {
        if wsts_std == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        wsts_std / embs_std
    };
    let (wi, ei) = (wsts.aggregates.iqm, embs.aggregates.iqm);
    StabilityVerdict {
        tuned_delta: wsts.delta,
        wsts_std,
        embs_std,
        std_ratio,
        wsts_iqm: wi.value,
        embs_iqm: ei.value,
        iqm_gap: wi.value - ei.value,
        more_stable: std_ratio < 1.0,
        iqm_ci_overlap: wi.ci_lower <= ei.ci_upper && ei.ci_lower <= wi.ci_upper,
    }
}

/// Deterministic JSON: timings stripped, two-space pretty print, trailing
/// newline. Identical config + seeds give byte-identical output.
pub fn canonical_json<T: Serialize + Clone + StripTimings>(report: &T) -> String {
    let mut stripped = report.clone();
    stripped.strip_timings();
    let mut text = serde_json::to_string_pretty(&stripped).expect("report serializes");
    text.push('\n');
    text
}

/// Reports that can drop their wall-clock block before canonical
/// serialization.
pub trait StripTimings {
    fn strip_timings(&mut self);
}

impl StripTimings for EvalReport {
    fn strip_timings(&mut self) {
        self.timings_ms = None;
    }
}

impl StripTimings for ComparisonReport {
    fn strip_timings(&mut self) {
        self.timings_ms = None;
    }
}

/// Aggregate table as CSV, one row per (strategy, delta) run.
pub fn comparison_csv(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config={}", report.config_hash);
    let _ = writeln!(
        out,
        "strategy,delta,mean,std,median,iqm,mean_ci_lower,mean_ci_upper,iqm_ci_lower,iqm_ci_upper"
    );
    for row in report.wsts.iter().chain(std::iter::once(&report.embs)) {
        let a = &row.aggregates;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            row.strategy,
            row.delta,
            a.mean.value,
            a.std,
            a.median.value,
            a.iqm.value,
            a.mean.ci_lower,
            a.mean.ci_upper,
            a.iqm.ci_lower,
            a.iqm.ci_upper
        );
    }
    out
}

/// Human-readable comparison table.
pub fn render_comparison(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "env: {}   batch: {}", report.env_label, report.batch_label);
    let _ = writeln!(
        out,
        "normalization: random = {:.3} -> 0, optimal = {:.3} -> 100",
        report.normalization.random_mean, report.normalization.optimal
    );
    let _ = writeln!(
        out,
        "{:<9} {:>6} {:>9} {:>9} {:>9} {:>9} {:>21}",
        "strategy", "delta", "mean", "std", "median", "iqm", "iqm 95% CI"
    );
    for row in report.wsts.iter().chain(std::iter::once(&report.embs)) {
        let a = &row.aggregates;
        let _ = writeln!(
            out,
            "{:<9} {:>6} {:>9.3} {:>9.3} {:>9.3} {:>9.3} [{:>8.3}, {:>8.3}]",
            row.strategy,
            row.delta,
            a.mean.value,
            a.std,
            a.median.value,
            a.iqm.value,
            a.iqm.ci_lower,
            a.iqm.ci_upper
        );
    }
    let v = &report.verdict;
    let _ = writeln!(
        out,
        "verdict: tuned delta = {}, std(wsts) = {:.3}, std(embs) = {:.3}, ratio = {:.3}, iqm gap = {:+.3}, more stable: {}",
        v.tuned_delta, v.wsts_std, v.embs_std, v.std_ratio, v.iqm_gap, v.more_stable
    );
    out
}

/// Per-seed scores of a single-strategy report as CSV.
pub fn eval_csv(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config={}", report.config_hash);
    let _ = writeln!(out, "env,strategy,delta,seed,raw_return,normalized");
    for s in &report.run.scores {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            report.env_label,
            report.run.strategy,
            report.run.delta,
            s.seed,
            s.raw_return,
            s.normalized
        );
    }
    out
}

/// Human-readable evaluation summary.
pub fn render_eval(report: &EvalReport) -> String {
    let mut out = String::new();
    let a = &report.run.aggregates;
    let _ = writeln!(
        out,
        "env: {}   strategy: {}   delta: {}",
        report.env_label, report.run.strategy, report.run.delta
    );
    let _ = writeln!(
        out,
        "normalization: random = {:.3} -> 0, optimal = {:.3} -> 100",
        report.normalization.random_mean, report.normalization.optimal
    );
    let _ = writeln!(
        out,
        "seeds: {}   mean: {:.3}   std: {:.3}   median: {:.3}   iqm: {:.3} [{:.3}, {:.3}]",
        a.count, a.mean.value, a.std, a.median.value, a.iqm.value, a.iqm.ci_lower, a.iqm.ci_upper
    );
    out
}

/// Resolve the output directory: explicit flag, else `WSTS_OUT_DIR`, else
/// `wsts-out` under the current directory.
pub fn output_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("WSTS_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("wsts-out"))
}
