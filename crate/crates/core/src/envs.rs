//! Small stochastic MDP environments, behavior policies, and offline-batch
//! generation — the desk-scale data side of the pipeline.
//!
//! [`WindyCliffChain`] is a one-dimensional chain walked under wind: each
//! step the intended move executes with probability `1 − p_slip`, otherwise
//! a uniformly random other move executes. The goal sits on the chain's
//! cliff-edge end, so any move that overshoots it falls off the cliff. The
//! dash action covers ground twice as fast as a plain step but sets up
//! exactly the overshoot slips punish, which is what gives expectation-only
//! planners something to over-commit to.
//!
//! Everything downstream treats states and actions as real vectors; the
//! chain emits its integer position and action ids cast to reals so the
//! discretization path is exercised end to end.
//!
//! The exact transition kernel is exposed, and finite-horizon dynamic
//! programming over it provides the optimal-return ceiling and the
//! random-policy floor used for score normalization, plus the optimal-action
//! oracle the planner tests compare against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::trajectory::{AugmentedTrajectory, OfflineBatch, Provenance, Transition};
use crate::{mix_seed, Error, Result};

/// Static facts about an environment: dimensions, the discrete action count,
/// the episode cap, and the declared reward range.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvDescriptor {
    pub state_dim: usize,
    pub action_dim: usize,
    pub num_actions: usize,
    pub horizon_cap: usize,
    pub reward_range: (f64, f64),
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// A resettable episodic environment with a finite action set presented as
/// real vectors.
pub trait Environment {
    fn descriptor(&self) -> &EnvDescriptor;

    /// Start a fresh episode; deterministic per seed.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Execute the action nearest to `action`. Stepping a finished episode
    /// is an error.
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;

    /// The real-vector form of a discrete action id.
    fn action_vector(&self, action_id: usize) -> Vec<f64>;

    /// Map an arbitrary action vector to the nearest discrete action.
    fn nearest_action(&self, action: &[f64]) -> usize {
        let n = self.descriptor().num_actions;
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for id in 0..n {
            let v = self.action_vector(id);
            let dist: f64 = v
                .iter()
                .zip(action)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist < best_dist {
                best_dist = dist;
                best = id;
            }
        }
        best
    }
}

/// Chain actions: step back, step forward, dash two cells forward.
pub const BACK: usize = 0;
pub const FORWARD: usize = 1;
pub const DASH: usize = 2;
const NUM_ACTIONS: usize = 3;

/// One resolved transition of the exact kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEntry {
    pub probability: f64,
    /// Next position, or `None` when the episode terminates.
    pub next: Option<usize>,
    pub reward: f64,
}

/// A windy one-dimensional cliff walk.
///
/// Positions run `0..length`, start at 0, goal at `length − 1`. Every step
/// costs 1; landing exactly on the goal pays `goal_reward`, overshooting it
/// falls off the cliff for `−cliff_penalty`. Both terminate the episode.
/// With `p_slip = 0` the dynamics are fully deterministic.
#[derive(Debug, Clone)]
pub struct WindyCliffChain {
    length: usize,
    p_slip: f64,
    cliff_penalty: f64,
    goal_reward: f64,
    descriptor: EnvDescriptor,
    pos: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl WindyCliffChain {
    pub fn new(
        length: usize,
        p_slip: f64,
        cliff_penalty: f64,
        goal_reward: f64,
        horizon_cap: usize,
    ) -> Result<Self> {
        if length < 3 {
            return Err(Error::invalid(format!(
                "chain length must be at least 3, got {length}"
            )));
        }
        if !(0.0..=1.0).contains(&p_slip) {
            return Err(Error::invalid(format!(
                "p_slip must lie in [0, 1], got {p_slip}"
            )));
        }
        if !cliff_penalty.is_finite() || !goal_reward.is_finite() {
            return Err(Error::NonFinite("chain rewards"));
        }
        let descriptor = EnvDescriptor {
            state_dim: 1,
            action_dim: 1,
            num_actions: NUM_ACTIONS,
            horizon_cap,
            reward_range: (-1.0 - cliff_penalty, goal_reward - 1.0),
        };
        Ok(Self {
            length,
            p_slip,
            cliff_penalty,
            goal_reward,
            descriptor,
            pos: 0,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn p_slip(&self) -> f64 {
        self.p_slip
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Goal position (`length − 1`).
    pub fn goal(&self) -> usize {
        self.length - 1
    }

    /// Deterministic effect of an action id from `pos`, before slips.
    fn effect(&self, pos: usize, action: usize) -> usize {
        match action {
            BACK => pos.saturating_sub(1),
            FORWARD => pos + 1,
            DASH => pos + 2,
            _ => unreachable!("action ids are 0..3"),
        }
    }

    fn resolve(&self, pos: usize, action: usize) -> (Option<usize>, f64) {
        let next = self.effect(pos, action);
        if next == self.goal() {
            (None, self.goal_reward - 1.0)
        } else if next > self.goal() {
            (None, -1.0 - self.cliff_penalty)
        } else {
            (Some(next), -1.0)
        }
    }

    /// Exact transition distribution for (pos, intended action): the
    /// intended move with probability `1 − p_slip`, each other move with
    /// `p_slip / 2`. Entries sum to one.
    pub fn kernel(&self, pos: usize, action: usize) -> Vec<KernelEntry> {
        let mut entries = Vec::with_capacity(NUM_ACTIONS);
        for executed in 0..NUM_ACTIONS {
            let probability = if executed == action {
                1.0 - self.p_slip
            } else {
                self.p_slip / (NUM_ACTIONS - 1) as f64
            };
            if probability == 0.0 {
                continue;
            }
            let (next, reward) = self.resolve(pos, executed);
            entries.push(KernelEntry {
                probability,
                next,
                reward,
            });
        }
        entries
    }
}

impl Environment for WindyCliffChain {
    fn descriptor(&self) -> &EnvDescriptor {
        &self.descriptor
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.pos = 0;
        self.done = false;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        vec![0.0]
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let intended = self.nearest_action(action);
        let executed = if self.p_slip > 0.0 && self.rng.random::<f64>() < self.p_slip {
            // Wind: a uniformly random other move executes.
            let other = self.rng.random_range(0..NUM_ACTIONS - 1);
            (intended + 1 + other) % NUM_ACTIONS
        } else {
            intended
        };
        let (next, reward) = self.resolve(self.pos, executed);
        match next {
            Some(p) => {
                self.pos = p;
                Ok(StepOutcome {
                    state: vec![p as f64],
                    reward,
                    done: false,
                })
            }
            None => {
                self.done = true;
                let landing = self.effect(self.pos, executed);
                Ok(StepOutcome {
                    state: vec![landing as f64],
                    reward,
                    done: true,
                })
            }
        }
    }

    fn action_vector(&self, action_id: usize) -> Vec<f64> {
        vec![action_id as f64]
    }
}

// ---------------------------------------------------------------------------
// Exact dynamic programming over the kernel
// ---------------------------------------------------------------------------

/// Finite-horizon optimal values: `values[h][pos]` is the best expected
/// return achievable from `pos` with `h` steps left.
pub fn optimal_values(chain: &WindyCliffChain, horizon: usize) -> Vec<Vec<f64>> {
    dp_values(chain, horizon, true)
}

/// Finite-horizon values of the uniform-random policy.
pub fn random_policy_values(chain: &WindyCliffChain, horizon: usize) -> Vec<Vec<f64>> {
    dp_values(chain, horizon, false)
}

fn dp_values(chain: &WindyCliffChain, horizon: usize, maximize: bool) -> Vec<Vec<f64>> {
    let n = chain.length();
    let mut values = vec![vec![0.0; n]; horizon + 1];
    for h in 1..=horizon {
        for pos in 0..n - 1 {
            let qs = action_values(chain, pos, &values[h - 1]);
            values[h][pos] = if maximize {
                qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            } else {
                qs.iter().sum::<f64>() / qs.len() as f64
            };
        }
    }
    values
}

fn action_values(chain: &WindyCliffChain, pos: usize, tail: &[f64]) -> [f64; NUM_ACTIONS] {
    let mut qs = [0.0; NUM_ACTIONS];
    for (action, q) in qs.iter_mut().enumerate() {
        for entry in chain.kernel(pos, action) {
            let cont = entry.next.map_or(0.0, |p| tail[p]);
            *q += entry.probability * (entry.reward + cont);
        }
    }
    qs
}

/// Best expected return from the start state within the chain's horizon cap.
/// The ceiling used for score normalization.
pub fn optimal_return(chain: &WindyCliffChain) -> f64 {
    let cap = chain.descriptor().horizon_cap;
    optimal_values(chain, cap)[cap][0]
}

/// Expected return of the uniform-random policy from the start state within
/// the horizon cap. The floor used for score normalization.
pub fn random_policy_return(chain: &WindyCliffChain) -> f64 {
    let cap = chain.descriptor().horizon_cap;
    random_policy_values(chain, cap)[cap][0]
}

/// All actions within `1e-9` of the optimal action value at `pos` with
/// `horizon` steps left. The oracle the planner tests compare against.
pub fn optimal_actions(chain: &WindyCliffChain, pos: usize, horizon: usize) -> Vec<usize> {
    let values = optimal_values(chain, horizon);
    let qs = action_values(chain, pos, &values[horizon - 1]);
    let best = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0..NUM_ACTIONS).filter(|&a| qs[a] >= best - 1e-9).collect()
}

/// Stationary greedy policy with respect to the cap-horizon optimal values.
fn greedy_policy(chain: &WindyCliffChain) -> Vec<usize> {
    let cap = chain.descriptor().horizon_cap;
    let values = optimal_values(chain, cap);
    (0..chain.length())
        .map(|pos| {
            if pos + 1 == chain.length() {
                return FORWARD;
            }
            let qs = action_values(chain, pos, &values[cap.saturating_sub(1)]);
            let mut best = 0;
            for a in 1..NUM_ACTIONS {
                if qs[a] > qs[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Behavior policies and batch generation
// ---------------------------------------------------------------------------

/// Tabular action values learned online; indexes by chain position.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable(pub Vec<[f64; NUM_ACTIONS]>);

impl QTable {
    fn argmax(&self, pos: usize) -> usize {
        let row = &self.0[pos];
        let mut best = 0;
        for a in 1..NUM_ACTIONS {
            if row[a] > row[best] {
                best = a;
            }
        }
        best
    }
}

/// Result of a tabular Q-learning run: the final table and every episode
/// rolled out along the way (the medium-replay material).
#[derive(Debug, Clone)]
pub struct QTrainResult {
    pub q: QTable,
    pub recorded: Vec<Vec<Transition>>,
}

/// Plain tabular Q-learning with a fixed learning rate and epsilon-greedy
/// exploration. Deterministic per seed.
pub fn q_learning(chain: &WindyCliffChain, episodes: usize, seed: u64) -> Result<QTrainResult> {
    const LEARNING_RATE: f64 = 0.5;
    const EXPLORATION: f64 = 0.3;
    if episodes == 0 {
        return Err(Error::invalid("q_learning needs at least one episode"));
    }
    let cap = chain.descriptor().horizon_cap;
    let mut env = chain.clone();
    let mut q = QTable(vec![[0.0; NUM_ACTIONS]; chain.length()]);
    let mut recorded = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut policy_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2 * ep as u64 + 1));
        env.reset(mix_seed(seed, 2 * ep as u64));
        let mut pos = 0usize;
        let mut episode = Vec::new();
        for _ in 0..cap {
            let action = if policy_rng.random::<f64>() < EXPLORATION {
                policy_rng.random_range(0..NUM_ACTIONS)
            } else {
                q.argmax(pos)
            };
            let out = env.step(&env.action_vector(action))?;
            episode.push(Transition::new(
                vec![pos as f64],
                env.action_vector(action),
                out.reward,
                out.done,
            ));
            let next_pos = (out.state[0] as usize).min(chain.length() - 1);
            let target = if out.done {
                out.reward
            } else {
                let row = &q.0[next_pos];
                out.reward + row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            q.0[pos][action] += LEARNING_RATE * (target - q.0[pos][action]);
            if out.done {
                break;
            }
            pos = next_pos;
        }
        recorded.push(episode);
    }
    Ok(QTrainResult { q, recorded })
}

/// Quality level of a behavior policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyQuality {
    Random,
    Medium,
    Expert,
}

/// A stationary action-selection rule over chain positions with an
/// exploration rate.
#[derive(Debug, Clone)]
pub struct BehaviorPolicy {
    quality: PolicyQuality,
    epsilon: f64,
    q: Option<QTable>,
    greedy: Option<Vec<usize>>,
}

impl BehaviorPolicy {
    pub fn random() -> Self {
        Self {
            quality: PolicyQuality::Random,
            epsilon: 1.0,
            q: None,
            greedy: None,
        }
    }

    /// Epsilon-greedy on a (typically half-trained) Q table.
    pub fn medium(q: QTable, epsilon: f64) -> Self {
        Self {
            quality: PolicyQuality::Medium,
            epsilon,
            q: Some(q),
            greedy: None,
        }
    }

    /// Epsilon-greedy on the exact finite-horizon optimal values.
    pub fn expert(chain: &WindyCliffChain, epsilon: f64) -> Self {
        Self {
            quality: PolicyQuality::Expert,
            epsilon,
            q: None,
            greedy: Some(greedy_policy(chain)),
        }
    }

    pub fn quality(&self) -> PolicyQuality {
        self.quality
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn act(&self, state: &[f64], rng: &mut impl Rng) -> usize {
        if self.epsilon >= 1.0 || (self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon) {
            return rng.random_range(0..NUM_ACTIONS);
        }
        let pos = state[0].round().max(0.0) as usize;
        match self.quality {
            PolicyQuality::Random => rng.random_range(0..NUM_ACTIONS),
            PolicyQuality::Medium => {
                self.q.as_ref().expect("medium policy has a table").argmax(pos)
            }
            PolicyQuality::Expert => self.greedy.as_ref().expect("expert policy has a table")[pos],
        }
    }
}

/// Roll out `policy` for `episodes` episodes, compute reward-to-go at
/// `gamma`, and stamp provenance. Deterministic per seed.
pub fn generate_batch(
    chain: &WindyCliffChain,
    policy: &BehaviorPolicy,
    episodes: usize,
    gamma: f64,
    seed: u64,
    label: &str,
) -> Result<OfflineBatch> {
    if episodes == 0 {
        return Err(Error::invalid("generate_batch needs at least one episode"));
    }
    let cap = chain.descriptor().horizon_cap;
    let mut env = chain.clone();
    let mut trajectories = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut policy_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2 * ep as u64 + 1));
        let mut state = env.reset(mix_seed(seed, 2 * ep as u64));
        let mut transitions = Vec::new();
        for _ in 0..cap {
            let action = policy.act(&state, &mut policy_rng);
            let out = env.step(&env.action_vector(action))?;
            transitions.push(Transition::new(
                state.clone(),
                env.action_vector(action),
                out.reward,
                out.done,
            ));
            if out.done {
                break;
            }
            state = out.state;
        }
        trajectories.push(AugmentedTrajectory::new(transitions, gamma)?);
    }
    OfflineBatch::new(
        trajectories,
        1,
        1,
        gamma,
        Provenance {
            policy_label: label.to_string(),
            seed,
            config_hash: String::new(),
        },
    )
}

/// Offline dataset qualities mirroring the usual offline-RL settings at toy
/// scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchQuality {
    Random,
    /// Fresh rollouts of an epsilon-greedy policy on a half-trained Q table.
    Medium,
    /// Every episode recorded during the Q-learning run itself.
    MediumReplay,
    /// Half medium rollouts, half exact-optimal rollouts.
    MediumExpert,
    Expert,
}

impl BatchQuality {
    pub fn label(&self) -> &'static str {
        match self {
            BatchQuality::Random => "random",
            BatchQuality::Medium => "medium",
            BatchQuality::MediumReplay => "medium-replay",
            BatchQuality::MediumExpert => "medium-expert",
            BatchQuality::Expert => "expert",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "random" => Ok(BatchQuality::Random),
            "medium" => Ok(BatchQuality::Medium),
            "medium-replay" => Ok(BatchQuality::MediumReplay),
            "medium-expert" => Ok(BatchQuality::MediumExpert),
            "expert" => Ok(BatchQuality::Expert),
            other => Err(Error::invalid(format!("unknown batch quality {other:?}"))),
        }
    }
}

/// Build an offline batch of the requested quality. The medium variants run
/// tabular Q-learning for `episodes` episodes first; `epsilon` is the
/// exploration rate of the medium behavior policy.
pub fn generate_quality_batch(
    chain: &WindyCliffChain,
    quality: BatchQuality,
    episodes: usize,
    gamma: f64,
    seed: u64,
    epsilon: f64,
) -> Result<OfflineBatch> {
    let label = quality.label();
    match quality {
        BatchQuality::Random => {
            generate_batch(chain, &BehaviorPolicy::random(), episodes, gamma, seed, label)
        }
        BatchQuality::Medium => {
            let trained = q_learning(chain, episodes, mix_seed(seed, 0x51))?;
            let policy = BehaviorPolicy::medium(trained.q, epsilon);
            generate_batch(chain, &policy, episodes, gamma, seed, label)
        }
        BatchQuality::MediumReplay => {
            let trained = q_learning(chain, episodes, mix_seed(seed, 0x51))?;
            let trajectories = trained
                .recorded
                .into_iter()
                .map(|transitions| AugmentedTrajectory::new(transitions, gamma))
                .collect::<Result<Vec<_>>>()?;
            OfflineBatch::new(
                trajectories,
                1,
                1,
                gamma,
                Provenance {
                    policy_label: label.to_string(),
                    seed,
                    config_hash: String::new(),
                },
            )
        }
        BatchQuality::MediumExpert => {
            let half = episodes.div_ceil(2);
            let trained = q_learning(chain, episodes, mix_seed(seed, 0x51))?;
            let medium = BehaviorPolicy::medium(trained.q, epsilon);
            let medium_batch = generate_batch(chain, &medium, half, gamma, seed, label)?;
            let expert = BehaviorPolicy::expert(chain, 0.0);
            let expert_batch = generate_batch(
                chain,
                &expert,
                episodes - half,
                gamma,
                mix_seed(seed, 0xE),
                label,
            )?;
            medium_batch.concat(expert_batch, label)
        }
        BatchQuality::Expert => {
            let policy = BehaviorPolicy::expert(chain, 0.0);
            generate_batch(chain, &policy, episodes, gamma, seed, label)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(p_slip: f64) -> WindyCliffChain {
        WindyCliffChain::new(8, p_slip, 50.0, 10.0, 24).unwrap()
    }

    #[test]
    fn deterministic_when_slip_zero() {
        let mut env = chain(0.0);
        env.reset(1);
        for expected in [1.0, 2.0, 3.0] {
            let out = env.step(&[1.0]).unwrap();
            assert_eq!(out.state, vec![expected]);
            assert_eq!(out.reward, -1.0);
            assert!(!out.done);
        }
        // Dash from 3 to 5, then 5 -> goal at 7.
        let out = env.step(&[2.0]).unwrap();
        assert_eq!(out.state, vec![5.0]);
        let out = env.step(&[2.0]).unwrap();
        assert!(out.done);
        assert_eq!(out.reward, 9.0);
    }

    #[test]
    fn overshooting_the_goal_falls() {
        let mut env = chain(0.0);
        env.reset(1);
        for _ in 0..6 {
            env.step(&[1.0]).unwrap();
        }
        // At 6; dash lands past the goal.
        let out = env.step(&[2.0]).unwrap();
        assert!(out.done);
        assert_eq!(out.reward, -51.0);
    }

    #[test]
    fn step_after_done_errors() {
        let mut env = chain(0.0);
        env.reset(1);
        for _ in 0..6 {
            env.step(&[1.0]).unwrap();
        }
        env.step(&[1.0]).unwrap();
        assert!(matches!(env.step(&[1.0]), Err(Error::EpisodeDone)));
    }

    #[test]
    fn full_slip_never_executes_intended() {
        let mut env = chain(1.0);
        for seed in 0..50 {
            env.reset(seed);
            env.pos = 2;
            let out = env.step(&[1.0]).unwrap();
            assert!(out.state[0] == 1.0 || out.state[0] == 4.0);
        }
        // The kernel agrees: the intended entry carries zero probability.
        let entries = chain(1.0).kernel(2, FORWARD);
        assert!(entries.iter().all(|e| e.next != Some(3)));
    }

    #[test]
    fn kernel_rows_sum_to_one() {
        for p in [0.0, 0.15, 0.7, 1.0] {
            let env = chain(p);
            for pos in 0..env.length() - 1 {
                for action in 0..NUM_ACTIONS {
                    let total: f64 = env
                        .kernel(pos, action)
                        .iter()
                        .map(|e| e.probability)
                        .sum();
                    assert!((total - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn empirical_frequencies_match_kernel() {
        // 1e5 steps from a fixed state compared against the exact kernel
        // within 3 sigma binomial bounds.
        let mut env = chain(0.3);
        let entries = env.kernel(2, FORWARD);
        let n = 100_000;
        let mut counts = std::collections::HashMap::new();
        env.reset(42);
        for _ in 0..n {
            env.pos = 2;
            env.done = false;
            let out = env.step(&[1.0]).unwrap();
            let key = if out.done {
                (None, out.reward.to_bits())
            } else {
                (Some(out.state[0] as usize), out.reward.to_bits())
            };
            *counts.entry(key).or_insert(0usize) += 1;
        }
        for e in entries {
            let key = (e.next, e.reward.to_bits());
            let observed = *counts.get(&key).unwrap_or(&0) as f64;
            let expected = e.probability * n as f64;
            let sigma = (n as f64 * e.probability * (1.0 - e.probability)).sqrt();
            assert!(
                (observed - expected).abs() <= 3.0 * sigma + 1.0,
                "outcome {key:?}: {observed} vs {expected}"
            );
        }
    }

    #[test]
    fn hand_computed_optimal_on_deterministic_chain() {
        // L = 4: two moves reach the goal either way (1+2 or 2+1), so the
        // return is -1 + (10 - 1) = 8 and both non-back actions are optimal.
        let env = WindyCliffChain::new(4, 0.0, 50.0, 10.0, 10).unwrap();
        assert_eq!(optimal_return(&env), 8.0);
        assert_eq!(optimal_actions(&env, 0, 10), vec![FORWARD, DASH]);
        // L = 5 needs dash twice; the first move is uniquely a dash.
        let env5 = WindyCliffChain::new(5, 0.0, 50.0, 10.0, 10).unwrap();
        assert_eq!(optimal_return(&env5), 8.0);
        assert_eq!(optimal_actions(&env5, 0, 10), vec![DASH]);
    }

    #[test]
    fn optimal_dominates_random() {
        for p in [0.0, 0.1, 0.3] {
            let env = chain(p);
            assert!(optimal_return(&env) > random_policy_return(&env));
        }
    }

    #[test]
    fn expert_on_deterministic_chain_is_optimal_every_episode() {
        let env = chain(0.0);
        let policy = BehaviorPolicy::expert(&env, 0.0);
        let batch = generate_batch(&env, &policy, 5, 1.0, 3, "expert").unwrap();
        let best = optimal_return(&env);
        for traj in batch.trajectories() {
            assert_eq!(traj.total_reward(), best);
            assert!(traj.transitions().last().unwrap().done);
        }
    }

    #[test]
    fn single_deterministic_rollout_is_the_batch() {
        let env = chain(0.0);
        let policy = BehaviorPolicy::expert(&env, 0.0);
        let batch = generate_batch(&env, &policy, 1, 1.0, 9, "expert").unwrap();
        assert_eq!(batch.trajectories().len(), 1);
        // Replaying the greedy policy by hand, step for step.
        let mut env2 = chain(0.0);
        let mut state = env2.reset(mix_seed(9, 0));
        for tr in batch.trajectories()[0].transitions() {
            assert_eq!(tr.state, state);
            let out = env2.step(&tr.action).unwrap();
            assert_eq!(out.reward, tr.reward);
            state = out.state;
        }
    }

    #[test]
    fn batches_are_deterministic_per_seed() {
        let env = chain(0.2);
        for quality in [
            BatchQuality::Random,
            BatchQuality::Medium,
            BatchQuality::MediumReplay,
            BatchQuality::MediumExpert,
            BatchQuality::Expert,
        ] {
            let a = generate_quality_batch(&env, quality, 40, 0.99, 5, 0.1).unwrap();
            let b = generate_quality_batch(&env, quality, 40, 0.99, 5, 0.1).unwrap();
            assert_eq!(a.to_text().unwrap(), b.to_text().unwrap());
        }
    }

    #[test]
    fn replay_mean_sits_between_random_and_medium() {
        let env = chain(0.1);
        let mean = |b: &OfflineBatch| {
            b.trajectories().iter().map(|t| t.total_reward()).sum::<f64>()
                / b.trajectories().len() as f64
        };
        let random =
            generate_quality_batch(&env, BatchQuality::Random, 300, 1.0, 11, 0.1).unwrap();
        let medium =
            generate_quality_batch(&env, BatchQuality::Medium, 300, 1.0, 11, 0.1).unwrap();
        let replay =
            generate_quality_batch(&env, BatchQuality::MediumReplay, 300, 1.0, 11, 0.1).unwrap();
        let (r, m, mr) = (mean(&random), mean(&medium), mean(&replay));
        assert!(r < mr && mr < m, "means not ordered: {r} {mr} {m}");
    }

    #[test]
    fn quality_labels_round_trip() {
        for q in [
            BatchQuality::Random,
            BatchQuality::Medium,
            BatchQuality::MediumReplay,
            BatchQuality::MediumExpert,
            BatchQuality::Expert,
        ] {
            assert_eq!(BatchQuality::parse(q.label()).unwrap(), q);
        }
        assert!(BatchQuality::parse("imitation").is_err());
    }

    #[test]
    fn nearest_action_rounds() {
        let env = chain(0.0);
        assert_eq!(env.nearest_action(&[0.2]), 0);
        assert_eq!(env.nearest_action(&[0.9]), 1);
        assert_eq!(env.nearest_action(&[5.0]), 2);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(WindyCliffChain::new(2, 0.0, 1.0, 1.0, 5).is_err());
        assert!(WindyCliffChain::new(5, 1.5, 1.0, 1.0, 5).is_err());
        assert!(WindyCliffChain::new(5, 0.0, f64::NAN, 1.0, 5).is_err());
    }
}
