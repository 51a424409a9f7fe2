//! Trajectory representation, reward-to-go augmentation, per-dimension
//! discretization, and the flat token layout shared by every other module.
//!
//! A recorded episode is a sequence of [`Transition`]s. Augmentation attaches
//! a discounted reward-to-go to each step. The [`Discretizer`] quantizes each
//! frame slot independently into `vocab_size` uniform-width bins fit on an
//! offline batch, and encoding flattens a trajectory into frames of
//! `state_dim + action_dim + 2` tokens laid out as `s1..sN, a1..aM, r, R`.
//!
//! All types are immutable after construction and all operations are pure, so
//! values can be shared freely across concurrently running episodes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// One environment step: state and action vectors, scalar reward, terminal flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

impl Transition {
    pub fn new(state: Vec<f64>, action: Vec<f64>, reward: f64, done: bool) -> Self {
        Self {
            state,
            action,
            reward,
            done,
        }
    }
}

/// Discounted reward-to-go: `out[t] = sum_{t' >= t} gamma^(t'-t) * rewards[t']`.
///
/// The final step's reward-to-go is its own reward; there is no bootstrap
/// beyond the recorded trajectory. Computed backwards, so the recurrence
/// `R[t] = r[t] + gamma * R[t+1]` holds exactly in floating point.
///
/// `gamma` may be anywhere in `[0, 1]`; zero degenerates to the per-step
/// rewards themselves.
pub fn compute_reward_to_go(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::EmptyInput("rewards"));
    }
    if !gamma.is_finite() || !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, &r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// An episode plus the reward-to-go vector computed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedTrajectory {
    transitions: Vec<Transition>,
    reward_to_go: Vec<f64>,
    gamma: f64,
}

impl AugmentedTrajectory {
    pub fn new(transitions: Vec<Transition>, gamma: f64) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::EmptyInput("transitions"));
        }
        let rewards: Vec<f64> = transitions.iter().map(|t| t.reward).collect();
        let reward_to_go = compute_reward_to_go(&rewards, gamma)?;
        Ok(Self {
            transitions,
            reward_to_go,
            gamma,
        })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn reward_to_go(&self) -> &[f64] {
        &self.reward_to_go
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Undiscounted episode return.
    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

/// Where an offline batch came from: the behavior policy label, the
/// generation seed, and the hash of the config that produced it (empty when
/// the batch was built programmatically).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub policy_label: String,
    pub seed: u64,
    pub config_hash: String,
}

/// A static collection of augmented trajectories sharing one environment
/// descriptor, plus provenance metadata.
#[derive(Debug, Clone)]
pub struct OfflineBatch {
    trajectories: Vec<AugmentedTrajectory>,
    state_dim: usize,
    action_dim: usize,
    gamma: f64,
    provenance: Provenance,
}

impl OfflineBatch {
    pub fn new(
        trajectories: Vec<AugmentedTrajectory>,
        state_dim: usize,
        action_dim: usize,
        gamma: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::EmptyInput("trajectories"));
        }
        for (i, traj) in trajectories.iter().enumerate() {
            for tr in traj.transitions() {
                if tr.state.len() != state_dim || tr.action.len() != action_dim {
                    return Err(Error::DimensionMismatch(format!(
                        "trajectory {i} has dims ({}, {}), batch declares ({state_dim}, {action_dim})",
                        tr.state.len(),
                        tr.action.len()
                    )));
                }
            }
        }
        Ok(Self {
            trajectories,
            state_dim,
            action_dim,
            gamma,
            provenance,
        })
    }

    pub fn trajectories(&self) -> &[AugmentedTrajectory] {
        &self.trajectories
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Tokens per frame: `state_dim + action_dim + 2` (reward and reward-to-go).
    pub fn frame_len(&self) -> usize {
        self.state_dim + self.action_dim + 2
    }

    /// Total transition count across all trajectories.
    pub fn num_transitions(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    /// Append the trajectories of `other`; descriptors must match.
    pub fn concat(mut self, other: OfflineBatch, policy_label: &str) -> Result<Self> {
        if other.state_dim != self.state_dim
            || other.action_dim != self.action_dim
            || other.gamma != self.gamma
        {
            return Err(Error::DimensionMismatch(
                "cannot concatenate batches with different descriptors".into(),
            ));
        }
        self.trajectories.extend(other.trajectories);
        self.provenance.policy_label = policy_label.to_string();
        Ok(self)
    }

    /// Serialize as newline-delimited text: one header line
    /// (`#wsts-batch v1 n=.. m=.. gamma=.. policy=.. seed=.. config=..`)
    /// followed by one record per transition,
    /// `episode_id,step,s1..sN,a1..aM,reward,done`.
    ///
    /// Floats use the shortest representation that parses back to the same
    /// bits, so save/load round-trips exactly for finite values. Non-finite
    /// values are rejected.
    pub fn to_text(&self) -> Result<String> {
        let label = &self.provenance.policy_label;
        if label.contains(|c: char| c.is_whitespace() || c == ',') {
            return Err(Error::invalid(format!(
                "policy label {label:?} must not contain whitespace or commas"
            )));
        }
        if !self.gamma.is_finite() {
            return Err(Error::NonFinite("batch gamma"));
        }
        let config = if self.provenance.config_hash.is_empty() {
            "-"
        } else {
            &self.provenance.config_hash
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "#wsts-batch v1 n={} m={} gamma={} policy={} seed={} config={}",
            self.state_dim,
            self.action_dim,
            self.gamma,
            if label.is_empty() { "-" } else { label },
            self.provenance.seed,
            config,
        );
        for (episode_id, traj) in self.trajectories.iter().enumerate() {
            for (step, tr) in traj.transitions().iter().enumerate() {
                let _ = write!(out, "{episode_id},{step}");
                for &v in tr.state.iter().chain(tr.action.iter()) {
                    if !v.is_finite() {
                        return Err(Error::NonFinite("batch state/action"));
                    }
                    let _ = write!(out, ",{v}");
                }
                if !tr.reward.is_finite() {
                    return Err(Error::NonFinite("batch reward"));
                }
                let _ = writeln!(out, ",{},{}", tr.reward, tr.done);
            }
        }
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or(Error::EmptyInput("batch text"))?;
        let mut n = None;
        let mut m = None;
        let mut gamma = None;
        let mut policy = String::new();
        let mut seed = 0u64;
        let mut config_hash = String::new();
        for field in header.split_whitespace() {
            if let Some((key, value)) = field.split_once('=') {
                match key {
                    "n" => n = Some(parse_field(1, value)?),
                    "m" => m = Some(parse_field(1, value)?),
                    "gamma" => gamma = Some(parse_field::<f64>(1, value)?),
                    "policy" => policy = if value == "-" { String::new() } else { value.into() },
                    "seed" => seed = parse_field(1, value)?,
                    "config" => {
                        config_hash = if value == "-" { String::new() } else { value.into() }
                    }
                    _ => {}
                }
            } else if field != "#wsts-batch" && field != "v1" {
                return Err(Error::parse(1, format!("unexpected header field {field:?}")));
            }
        }
        let (n, m, gamma) = match (n, m, gamma) {
            (Some(n), Some(m), Some(g)) => (n, m, g),
            _ => return Err(Error::parse(1, "header must declare n, m, gamma")),
        };

        let mut trajectories = Vec::new();
        let mut current: Vec<Transition> = Vec::new();
        let mut current_id: Option<usize> = None;
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 + n + m + 2 {
                return Err(Error::parse(
                    lineno,
                    format!("expected {} fields, got {}", 4 + n + m, fields.len()),
                ));
            }
            let episode_id: usize = parse_field(lineno, fields[0])?;
            let step: usize = parse_field(lineno, fields[1])?;
            if current_id != Some(episode_id) {
                if let Some(_) = current_id.take() {
                    trajectories.push(AugmentedTrajectory::new(
                        std::mem::take(&mut current),
                        gamma,
                    )?);
                }
                current_id = Some(episode_id);
            }
            if step != current.len() {
                return Err(Error::parse(
                    lineno,
                    format!("expected step {}, got {step}", current.len()),
                ));
            }
            let state = fields[2..2 + n]
                .iter()
                .map(|f| parse_field(lineno, f))
                .collect::<Result<Vec<f64>>>()?;
            let action = fields[2 + n..2 + n + m]
                .iter()
                .map(|f| parse_field(lineno, f))
                .collect::<Result<Vec<f64>>>()?;
            let reward: f64 = parse_field(lineno, fields[2 + n + m])?;
            let done: bool = parse_field(lineno, fields[3 + n + m])?;
            current.push(Transition::new(state, action, reward, done));
        }
        if current_id.is_some() {
            trajectories.push(AugmentedTrajectory::new(current, gamma)?);
        }
        OfflineBatch::new(
            trajectories,
            n,
            m,
            gamma,
            Provenance {
                policy_label: policy,
                seed,
                config_hash,
            },
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

fn parse_field<T: std::str::FromStr>(line: usize, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::parse(line, format!("cannot parse {field:?}")))
}

/// Uniform-width bin edges for one frame slot.
#[derive(Debug, Clone, PartialEq)]
struct SlotBins {
    lo: f64,
    hi: f64,
    width: f64,
    /// True when the slot was constant across the fitting batch; all values
    /// collapse to a single effective bin at `lo`.
    degenerate: bool,
}

/// Per-slot uniform quantizer over the `N + M + 2` frame slots.
///
/// Each slot gets exactly `vocab_size` bins spanning the observed range of
/// that slot in the fitting batch, with the observed maximum mapped to the
/// last bin. Values exactly on an interior edge go to the higher bin.
/// Decoding returns the bin midpoint, so the round-trip error of any in-range
/// value is at most half a bin width.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretizer {
    slots: Vec<SlotBins>,
    vocab_size: usize,
    state_dim: usize,
    action_dim: usize,
}

impl Discretizer {
    /// Fit uniform bins on the observed per-slot ranges of `batch`.
    ///
    /// Constant slots (min equals max) collapse to one degenerate bin and are
    /// flagged; see [`Discretizer::is_degenerate`].
    pub fn fit(batch: &OfflineBatch, vocab_size: usize) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::invalid(format!(
                "vocab_size must be at least 2, got {vocab_size}"
            )));
        }
        let frame_len = batch.frame_len();
        let mut lo = vec![f64::INFINITY; frame_len];
        let mut hi = vec![f64::NEG_INFINITY; frame_len];
        let mut observe = |slot: usize, v: f64| {
            if v < lo[slot] {
                lo[slot] = v;
            }
            if v > hi[slot] {
                hi[slot] = v;
            }
        };
        for traj in batch.trajectories() {
            for (t, tr) in traj.transitions().iter().enumerate() {
                for (j, &v) in tr.state.iter().enumerate() {
                    observe(j, v);
                }
                for (j, &v) in tr.action.iter().enumerate() {
                    observe(batch.state_dim() + j, v);
                }
                observe(frame_len - 2, tr.reward);
                observe(frame_len - 1, traj.reward_to_go()[t]);
            }
        }
        let slots = lo
            .into_iter()
            .zip(hi)
            .map(|(lo, hi)| {
                let degenerate = lo == hi;
                SlotBins {
                    lo,
                    hi,
                    width: if degenerate {
                        0.0
                    } else {
                        (hi - lo) / vocab_size as f64
                    },
                    degenerate,
                }
            })
            .collect();
        Ok(Self {
            slots,
            vocab_size,
            state_dim: batch.state_dim(),
            action_dim: batch.action_dim(),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn frame_len(&self) -> usize {
        self.slots.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Slot index of the reward within a frame.
    pub fn reward_slot(&self) -> usize {
        self.frame_len() - 2
    }

    /// Slot index of the reward-to-go within a frame.
    pub fn reward_to_go_slot(&self) -> usize {
        self.frame_len() - 1
    }

    pub fn is_degenerate(&self, slot: usize) -> bool {
        self.slots[slot].degenerate
    }

    /// Half of one bin width, the worst-case round-trip error for in-range values.
    pub fn half_width(&self, slot: usize) -> f64 {
        self.slots[slot].width / 2.0
    }

    /// Quantize one value. Returns the token and whether the value fell
    /// outside the fitted range and was clamped to the nearest bin.
    pub fn encode_value(&self, slot: usize, v: f64) -> (u32, bool) {
        let bins = &self.slots[slot];
        if bins.degenerate {
            return (0, v != bins.lo);
        }
        if v < bins.lo {
            return (0, true);
        }
        if v > bins.hi {
            return ((self.vocab_size - 1) as u32, true);
        }
        let raw = ((v - bins.lo) / bins.width) as usize;
        (raw.min(self.vocab_size - 1) as u32, false)
    }

    /// Midpoint of the token's bin, in the slot's original units.
    pub fn decode_token(&self, slot: usize, token: u32) -> f64 {
        let bins = &self.slots[slot];
        if bins.degenerate {
            return bins.lo;
        }
        bins.lo + (token as f64 + 0.5) * bins.width
    }

    /// Flatten a trajectory into tokens, frame by frame.
    ///
    /// Returns the tokenized trajectory and the number of values that fell
    /// outside the fitted ranges and were clamped. Clamping is reported, not
    /// fatal; encoding the batch the discretizer was fit on never clamps.
    pub fn encode(&self, traj: &AugmentedTrajectory) -> Result<(TokenizedTrajectory, usize)> {
        let frame_len = self.frame_len();
        let first = &traj.transitions()[0];
        if first.state.len() != self.state_dim || first.action.len() != self.action_dim {
            return Err(Error::DimensionMismatch(format!(
                "trajectory dims ({}, {}) do not match discretizer ({}, {})",
                first.state.len(),
                first.action.len(),
                self.state_dim,
                self.action_dim
            )));
        }
        let mut tokens = Vec::with_capacity(traj.len() * frame_len);
        let mut clamps = 0;
        for (t, tr) in traj.transitions().iter().enumerate() {
            let frame = tr
                .state
                .iter()
                .chain(tr.action.iter())
                .copied()
                .chain([tr.reward, traj.reward_to_go()[t]]);
            for (slot, v) in frame.enumerate() {
                let (token, clamped) = self.encode_value(slot, v);
                tokens.push(token);
                clamps += clamped as usize;
            }
        }
        Ok((
            TokenizedTrajectory {
                tokens,
                frame_len,
                horizon: traj.len(),
            },
            clamps,
        ))
    }
}

/// A flattened token sequence of length `horizon * frame_len`, slot order
/// `s1..sN, a1..aM, r, R` within each frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedTrajectory {
    tokens: Vec<u32>,
    frame_len: usize,
    horizon: usize,
}

impl TokenizedTrajectory {
    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens of frame `t`.
    pub fn frame(&self, t: usize) -> &[u32] {
        &self.tokens[t * self.frame_len..(t + 1) * self.frame_len]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-12;

    fn single_slot_batch(values: &[f64]) -> OfflineBatch {
        // One-dimensional states, one constant action dim, constant rewards:
        // slot 0 carries `values`, the rest are degenerate.
        let transitions = values
            .iter()
            .map(|&v| Transition::new(vec![v], vec![0.0], 0.0, false))
            .collect();
        let traj = AugmentedTrajectory::new(transitions, 1.0).unwrap();
        OfflineBatch::new(vec![traj], 1, 1, 1.0, Provenance::default()).unwrap()
    }

    fn random_batch(seed: u64, episodes: usize, steps: usize) -> OfflineBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trajectories = (0..episodes)
            .map(|_| {
                let transitions = (0..steps)
                    .map(|i| {
                        Transition::new(
                            vec![rng.random_range(-3.0..5.0), rng.random_range(0.0..1.0)],
                            vec![rng.random_range(-1.0..1.0)],
                            rng.random_range(-2.0..2.0),
                            i == steps - 1,
                        )
                    })
                    .collect();
                AugmentedTrajectory::new(transitions, 0.97).unwrap()
            })
            .collect();
        OfflineBatch::new(trajectories, 2, 1, 0.97, Provenance::default()).unwrap()
    }

    #[test]
    fn reward_to_go_suffix_sum() {
        let rtg = compute_reward_to_go(&[1.0, 2.0, 3.0], 1.0).unwrap();
        assert_eq!(rtg, vec![6.0, 5.0, 3.0]);
    }

    #[test]
    fn reward_to_go_gamma_zero() {
        let rtg = compute_reward_to_go(&[1.0, 2.0, 3.0], 0.0).unwrap();
        assert_eq!(rtg, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn reward_to_go_discounted() {
        let rtg = compute_reward_to_go(&[1.0, 1.0, 1.0], 0.5).unwrap();
        assert_eq!(rtg, vec![1.75, 1.5, 1.0]);
    }

    #[test]
    fn reward_to_go_empty_errors() {
        assert!(compute_reward_to_go(&[], 1.0).is_err());
    }

    #[test]
    fn reward_to_go_rejects_bad_gamma() {
        assert!(compute_reward_to_go(&[1.0], -0.1).is_err());
        assert!(compute_reward_to_go(&[1.0], 1.5).is_err());
        assert!(compute_reward_to_go(&[1.0], f64::NAN).is_err());
    }

    #[test]
    fn reward_to_go_recurrence_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let rewards: Vec<f64> = (0..20).map(|_| rng.random_range(-5.0..5.0)).collect();
            let gamma = rng.random_range(0.1..1.0);
            let rtg = compute_reward_to_go(&rewards, gamma).unwrap();
            for t in 0..rewards.len() - 1 {
                // Exact because that is how the vector is computed.
                assert_eq!(rtg[t], rewards[t] + gamma * rtg[t + 1]);
            }
            assert_eq!(rtg[rewards.len() - 1], rewards[rewards.len() - 1]);
        }
    }

    #[test]
    fn fit_two_point_range() {
        let batch = single_slot_batch(&[0.0, 1.0]);
        let d = Discretizer::fit(&batch, 2).unwrap();
        // Edges [0, 0.5, 1]: encode(0) = 0, encode(1) = 1.
        assert_eq!(d.encode_value(0, 0.0), (0, false));
        assert_eq!(d.encode_value(0, 1.0), (1, false));
        assert_eq!(d.half_width(0), 0.25);
    }

    #[test]
    fn fit_max_clamps_to_last_bin() {
        let values: Vec<f64> = (0..=10).map(|v| v as f64).collect();
        let batch = single_slot_batch(&values);
        let d = Discretizer::fit(&batch, 10).unwrap();
        assert_eq!(d.encode_value(0, 10.0), (9, false));
    }

    #[test]
    fn fit_flags_degenerate_slots() {
        let batch = single_slot_batch(&[0.0, 1.0]);
        let d = Discretizer::fit(&batch, 4).unwrap();
        assert!(!d.is_degenerate(0));
        // Action, reward, and reward-to-go slots were constant.
        assert!(d.is_degenerate(1));
        assert!(d.is_degenerate(2));
        assert!(d.is_degenerate(3));
        assert_eq!(d.encode_value(1, 0.0), (0, false));
        assert_eq!(d.decode_token(1, 3), 0.0);
        // Off-constant values clamp and are counted.
        assert_eq!(d.encode_value(1, 0.5), (0, true));
    }

    #[test]
    fn fit_rejects_tiny_vocab() {
        let batch = single_slot_batch(&[0.0, 1.0]);
        assert!(Discretizer::fit(&batch, 1).is_err());
    }

    #[test]
    fn edge_value_goes_to_higher_bin() {
        let batch = single_slot_batch(&[0.0, 1.0]);
        let d = Discretizer::fit(&batch, 2).unwrap();
        assert_eq!(d.encode_value(0, 0.5), (1, false));
        let d4 = Discretizer::fit(&batch, 4).unwrap();
        assert_eq!(d4.encode_value(0, 0.25), (1, false));
        assert_eq!(d4.encode_value(0, 0.75), (3, false));
    }

    #[test]
    fn round_trip_error_within_half_width() {
        // Exhaustive over a random batch: decode(encode(v)) stays within half
        // a bin width of v for every recorded value.
        for vocab in [2, 5, 16, 64] {
            let batch = random_batch(11, 8, 25);
            let d = Discretizer::fit(&batch, vocab).unwrap();
            for traj in batch.trajectories() {
                for (t, tr) in traj.transitions().iter().enumerate() {
                    let frame: Vec<f64> = tr
                        .state
                        .iter()
                        .chain(tr.action.iter())
                        .copied()
                        .chain([tr.reward, traj.reward_to_go()[t]])
                        .collect();
                    for (slot, &v) in frame.iter().enumerate() {
                        let (token, clamped) = d.encode_value(slot, v);
                        assert!(!clamped, "in-range value reported as clamped");
                        let back = d.decode_token(slot, token);
                        let tol = d.half_width(slot) * (1.0 + 1e-9) + EPS;
                        assert!(
                            (back - v).abs() <= tol,
                            "slot {slot}: |{back} - {v}| > {tol}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn encode_length_is_horizon_times_frame() {
        let transitions = vec![
            Transition::new(vec![0.0], vec![1.0], 0.5, false),
            Transition::new(vec![1.0], vec![0.0], 1.5, true),
        ];
        let traj = AugmentedTrajectory::new(transitions, 1.0).unwrap();
        let batch =
            OfflineBatch::new(vec![traj.clone()], 1, 1, 1.0, Provenance::default()).unwrap();
        let d = Discretizer::fit(&batch, 4).unwrap();
        let (tok, clamps) = d.encode(&traj).unwrap();
        assert_eq!(tok.len(), 8);
        assert_eq!(tok.frame_len(), 4);
        assert_eq!(tok.horizon(), 2);
        assert_eq!(clamps, 0);
    }

    #[test]
    fn encode_counts_clamps_on_out_of_range() {
        let batch = single_slot_batch(&[0.0, 1.0]);
        let d = Discretizer::fit(&batch, 4).unwrap();
        let stray = AugmentedTrajectory::new(
            vec![Transition::new(vec![2.5], vec![0.0], 0.0, true)],
            1.0,
        )
        .unwrap();
        let (tok, clamps) = d.encode(&stray).unwrap();
        assert_eq!(clamps, 1);
        assert_eq!(tok.tokens()[0], 3);
        let below = AugmentedTrajectory::new(
            vec![Transition::new(vec![-1.0], vec![0.0], 0.0, true)],
            1.0,
        )
        .unwrap();
        let (tok, clamps) = d.encode(&below).unwrap();
        assert_eq!(clamps, 1);
        assert_eq!(tok.tokens()[0], 0);
    }

    #[test]
    fn encoding_fit_batch_never_clamps() {
        let batch = random_batch(29, 6, 15);
        let d = Discretizer::fit(&batch, 12).unwrap();
        let total: usize = batch
            .trajectories()
            .iter()
            .map(|t| d.encode(t).unwrap().1)
            .sum();
        assert_eq!(total, 0);
    }

    #[test]
    fn encode_rejects_mismatched_dims() {
        let batch = random_batch(5, 2, 4);
        let d = Discretizer::fit(&batch, 8).unwrap();
        let other = AugmentedTrajectory::new(
            vec![Transition::new(vec![0.0], vec![0.0], 0.0, true)],
            1.0,
        )
        .unwrap();
        assert!(d.encode(&other).is_err());
    }

    #[test]
    fn batch_text_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let trajectories: Vec<AugmentedTrajectory> = (0..5)
            .map(|_| {
                let transitions = (0..rng.random_range(1..12))
                    .map(|_| {
                        Transition::new(
                            vec![rng.random::<f64>() * 1e3 - 500.0, -0.0],
                            vec![rng.random::<f64>() / 3.0],
                            rng.random::<f64>() * 7.0 - 3.5,
                            rng.random::<f64>() < 0.2,
                        )
                    })
                    .collect();
                AugmentedTrajectory::new(transitions, 0.913).unwrap()
            })
            .collect();
        let batch = OfflineBatch::new(
            trajectories,
            2,
            1,
            0.913,
            Provenance {
                policy_label: "medium-replay".into(),
                seed: 99,
                config_hash: "abc123".into(),
            },
        )
        .unwrap();
        let text = batch.to_text().unwrap();
        let loaded = OfflineBatch::from_text(&text).unwrap();
        assert_eq!(loaded.state_dim(), 2);
        assert_eq!(loaded.action_dim(), 1);
        assert_eq!(loaded.gamma().to_bits(), batch.gamma().to_bits());
        assert_eq!(loaded.provenance(), batch.provenance());
        assert_eq!(loaded.trajectories().len(), batch.trajectories().len());
        for (a, b) in loaded.trajectories().iter().zip(batch.trajectories()) {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.transitions().iter().zip(b.transitions()) {
                for (u, v) in x.state.iter().zip(&y.state) {
                    assert_eq!(u.to_bits(), v.to_bits());
                }
                for (u, v) in x.action.iter().zip(&y.action) {
                    assert_eq!(u.to_bits(), v.to_bits());
                }
                assert_eq!(x.reward.to_bits(), y.reward.to_bits());
                assert_eq!(x.done, y.done);
            }
            for (u, v) in a.reward_to_go().iter().zip(b.reward_to_go()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
        // Re-serializing the loaded batch reproduces the text byte for byte.
        assert_eq!(loaded.to_text().unwrap(), text);
    }

    #[test]
    fn batch_text_rejects_garbage() {
        assert!(OfflineBatch::from_text("").is_err());
        assert!(OfflineBatch::from_text("#wsts-batch v1 n=1 m=1\n").is_err());
        let bad_step = "#wsts-batch v1 n=1 m=1 gamma=1 policy=- seed=0 config=-\n0,1,0,0,0,false\n";
        assert!(OfflineBatch::from_text(bad_step).is_err());
    }

    #[test]
    fn batch_save_rejects_non_finite() {
        let traj = AugmentedTrajectory::new(
            vec![Transition::new(vec![f64::NAN], vec![0.0], 0.0, true)],
            1.0,
        )
        .unwrap();
        let batch = OfflineBatch::new(vec![traj], 1, 1, 1.0, Provenance::default()).unwrap();
        assert!(batch.to_text().is_err());
    }

    #[test]
    fn batch_validates_dims() {
        let traj = AugmentedTrajectory::new(
            vec![Transition::new(vec![0.0], vec![0.0], 0.0, true)],
            1.0,
        )
        .unwrap();
        assert!(OfflineBatch::new(vec![traj], 2, 1, 1.0, Provenance::default()).is_err());
    }
}
