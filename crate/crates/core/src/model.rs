//! The autoregressive conditional categorical model behind the planner, a
//! trainable smoothed tabular Markov implementation, and moment extraction
//! from categorical outputs.
//!
//! The planner only ever sees [`ConditionalCategoricalModel`]: a map from
//! (token context, slot index within the frame) to a probability vector over
//! the vocabulary. [`TabularMarkovModel`] realizes it with add-alpha smoothed
//! count tables keyed by the last `k` context tokens and the target slot;
//! any stronger autoregressive categorical model can be swapped in behind
//! the same trait.
//!
//! Means and variances are reported in decoded (bin midpoint) units so they
//! feed the portfolio step in reward units rather than token indices.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::trajectory::{Discretizer, OfflineBatch};
use crate::{Error, Result};

/// A conditional distribution over the next token given the running context
/// and the frame slot the token will fill.
///
/// Implementations must return non-negative vectors of length
/// [`vocab_size`](Self::vocab_size) summing to one within 1e-9.
pub trait ConditionalCategoricalModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Tokens per frame (`state_dim + action_dim + 2`).
    fn frame_len(&self) -> usize;

    fn next_token_distribution(&self, context: &[u32], slot: usize) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Default)]
struct CountRow {
    counts: Vec<u64>,
    total: u64,
}

impl CountRow {
    fn new(vocab_size: usize) -> Self {
        Self {
            counts: vec![0; vocab_size],
            total: 0,
        }
    }

    fn smoothed(&self, alpha: f64) -> Vec<f64> {
        let vocab = self.counts.len() as f64;
        let denom = self.total as f64 + alpha * vocab;
        self.counts
            .iter()
            .map(|&c| (c as f64 + alpha) / denom)
            .collect()
    }
}

/// Slot-conditioned Markov model with Laplace (add-alpha) smoothing.
///
/// Counts are keyed by `(slot index within frame, context tokens)`, where
/// every position contributes its trailing windows of all lengths `0..=k`.
/// Lookups walk the backoff chain longest-first: the last `k` available
/// tokens, then successively shorter suffixes, down to the empty context
/// (the slot's marginal), then uniform — the first level with any observed
/// mass wins. The backoff keeps rollouts rooted at a bare tokenized state
/// conditioned on that state instead of starting blind, which is what the
/// autoregressive model being stood in for would do.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMarkovModel {
    vocab_size: usize,
    frame_len: usize,
    order: usize,
    alpha: f64,
    table: BTreeMap<(usize, Vec<u32>), CountRow>,
    marginals: Vec<CountRow>,
    config_hash: String,
}

impl TabularMarkovModel {
    /// Count every length-`k+1` token window of the tokenized batch, keyed
    /// by the target's slot index, along with the shorter backoff windows
    /// (lengths `0..k`) at every position.
    pub fn train(
        batch: &OfflineBatch,
        discretizer: &Discretizer,
        order: usize,
        alpha: f64,
    ) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::invalid(format!(
                "smoothing alpha must be positive, got {alpha}"
            )));
        }
        if batch.num_transitions() == 0 {
            return Err(Error::EmptyInput("batch"));
        }
        let frame_len = discretizer.frame_len();
        let vocab_size = discretizer.vocab_size();
        let mut table: BTreeMap<(usize, Vec<u32>), CountRow> = BTreeMap::new();
        for traj in batch.trajectories() {
            let (tok, _) = discretizer.encode(traj)?;
            let tokens = tok.tokens();
            for pos in 0..tokens.len() {
                let slot = pos % frame_len;
                for len in 0..=order.min(pos) {
                    let context = tokens[pos - len..pos].to_vec();
                    let row = table
                        .entry((slot, context))
                        .or_insert_with(|| CountRow::new(vocab_size));
                    row.counts[tokens[pos] as usize] += 1;
                    row.total += 1;
                }
            }
        }
        let marginals = derive_marginals(&table, frame_len, vocab_size);
        Ok(Self {
            vocab_size,
            frame_len,
            order,
            alpha,
            table,
            marginals,
            config_hash: String::new(),
        })
    }

    pub fn with_config_hash(mut self, hash: impl Into<String>) -> Self {
        self.config_hash = hash.into();
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    /// Number of distinct (slot, context) keys with observed counts.
    pub fn num_contexts(&self) -> usize {
        self.table.len()
    }

    /// Serialize as newline-delimited text: a header
    /// (`#wsts-model v1 vocab=.. k=.. alpha=.. frame_len=.. config=..`)
    /// followed by sorted `slot,context,token,count` records, where `context`
    /// is the colon-joined last-k tokens (empty for `k = 0`). Load/save
    /// round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let config = if self.config_hash.is_empty() {
            "-"
        } else {
            &self.config_hash
        };
        let _ = writeln!(
            out,
            "#wsts-model v1 vocab={} k={} alpha={} frame_len={} config={}",
            self.vocab_size, self.order, self.alpha, self.frame_len, config
        );
        for ((slot, context), row) in &self.table {
            let ctx = context
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(":");
            for (token, &count) in row.counts.iter().enumerate() {
                if count > 0 {
                    let _ = writeln!(out, "{slot},{ctx},{token},{count}");
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::EmptyInput("model text"))?;
        let mut vocab_size = None;
        let mut order = None;
        let mut alpha = None;
        let mut frame_len = None;
        let mut config_hash = String::new();
        for field in header.split_whitespace() {
            if let Some((key, value)) = field.split_once('=') {
                match key {
                    "vocab" => vocab_size = Some(parse(1, value)?),
                    "k" => order = Some(parse(1, value)?),
                    "alpha" => alpha = Some(parse::<f64>(1, value)?),
                    "frame_len" => frame_len = Some(parse(1, value)?),
                    "config" => {
                        config_hash = if value == "-" { String::new() } else { value.into() }
                    }
                    _ => {}
                }
            } else if field != "#wsts-model" && field != "v1" {
                return Err(Error::parse(1, format!("unexpected header field {field:?}")));
            }
        }
        let (vocab_size, order, alpha, frame_len) = match (vocab_size, order, alpha, frame_len) {
            (Some(v), Some(k), Some(a), Some(f)) => (v, k, a, f),
            _ => {
                return Err(Error::parse(
                    1,
                    "header must declare vocab, k, alpha, frame_len",
                ))
            }
        };
        let mut table: BTreeMap<(usize, Vec<u32>), CountRow> = BTreeMap::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::parse(lineno, "expected slot,context,token,count"));
            }
            let slot: usize = parse(lineno, fields[0])?;
            let context = if fields[1].is_empty() {
                Vec::new()
            } else {
                fields[1]
                    .split(':')
                    .map(|t| parse::<u32>(lineno, t))
                    .collect::<Result<Vec<u32>>>()?
            };
            let token: usize = parse(lineno, fields[2])?;
            let count: u64 = parse(lineno, fields[3])?;
            if slot >= frame_len || token >= vocab_size || context.len() > order {
                return Err(Error::parse(lineno, "record inconsistent with header"));
            }
            if context.iter().any(|&t| t as usize >= vocab_size) {
                return Err(Error::parse(lineno, "context token out of range"));
            }
            let row = table
                .entry((slot, context))
                .or_insert_with(|| CountRow::new(vocab_size));
            row.counts[token] += count;
            row.total += count;
        }
        let marginals = derive_marginals(&table, frame_len, vocab_size);
        Ok(Self {
            vocab_size,
            frame_len,
            order,
            alpha,
            table,
            marginals,
            config_hash,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

/// Per-slot marginals are the empty-context rows: every position contributes
/// exactly one length-zero window.
fn derive_marginals(
    table: &BTreeMap<(usize, Vec<u32>), CountRow>,
    frame_len: usize,
    vocab_size: usize,
) -> Vec<CountRow> {
    (0..frame_len)
        .map(|slot| {
            table
                .get(&(slot, Vec::new()))
                .cloned()
                .unwrap_or_else(|| CountRow::new(vocab_size))
        })
        .collect()
}

impl ConditionalCategoricalModel for TabularMarkovModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn frame_len(&self) -> usize {
        self.frame_len
    }

    fn next_token_distribution(&self, context: &[u32], slot: usize) -> Vec<f64> {
        assert!(slot < self.frame_len, "slot {slot} out of range");
        let longest = self.order.min(context.len());
        for len in (0..=longest).rev() {
            let key = (slot, context[context.len() - len..].to_vec());
            if let Some(row) = self.table.get(&key) {
                return row.smoothed(self.alpha);
            }
        }
        vec![1.0 / self.vocab_size as f64; self.vocab_size]
    }
}

/// Mean and variance of one slot's distribution, in decoded units.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SlotMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Mean and variance of a categorical distribution over arbitrary values:
/// `mean = sum p_i v_i`, `variance = sum p_i (v_i − mean)²`.
pub fn weighted_moments(probs: &[f64], values: &[f64]) -> SlotMoments {
    debug_assert_eq!(probs.len(), values.len());
    let mean: f64 = probs.iter().zip(values).map(|(p, v)| p * v).sum();
    let variance: f64 = probs
        .iter()
        .zip(values)
        .map(|(p, v)| p * (v - mean) * (v - mean))
        .sum();
    SlotMoments { mean, variance }
}

/// Moments of a token distribution evaluated over the slot's bin midpoints.
pub fn slot_moments(probs: &[f64], slot: usize, discretizer: &Discretizer) -> SlotMoments {
    let values: Vec<f64> = (0..probs.len())
        .map(|t| discretizer.decode_token(slot, t as u32))
        .collect();
    weighted_moments(probs, &values)
}

/// One simulated frame: the sampled tokens, the reward and reward-to-go slot
/// moments evaluated at the contexts those slots were sampled from, and the
/// log-probability of the sampled tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFrame {
    pub tokens: Vec<u32>,
    pub reward: SlotMoments,
    pub reward_to_go: SlotMoments,
    pub log_prob: f64,
}

/// Autoregressively sample one full frame (slots `0..frame_len`) continuing
/// `context`. Deterministic given the rng state and inputs.
pub fn sample_frame<M: ConditionalCategoricalModel + ?Sized>(
    model: &M,
    discretizer: &Discretizer,
    context: &[u32],
    rng: &mut impl Rng,
) -> SampledFrame {
    complete_frame(model, discretizer, context, 0, rng)
}

/// Sample the tail of a frame starting at `start_slot`. The planner uses this
/// for the first step, where the frame's state slots are the observed root.
pub fn complete_frame<M: ConditionalCategoricalModel + ?Sized>(
    model: &M,
    discretizer: &Discretizer,
    context: &[u32],
    start_slot: usize,
    rng: &mut impl Rng,
) -> SampledFrame {
    let frame_len = model.frame_len();
    debug_assert!(start_slot < frame_len);
    debug_assert!(start_slot <= discretizer.reward_slot());
    let reward_slot = discretizer.reward_slot();
    let rtg_slot = discretizer.reward_to_go_slot();
    let mut running: Vec<u32> = context.to_vec();
    let mut tokens = Vec::with_capacity(frame_len - start_slot);
    let mut log_prob = 0.0;
    let mut reward = SlotMoments {
        mean: 0.0,
        variance: 0.0,
    };
    let mut reward_to_go = reward;
    for slot in start_slot..frame_len {
        let probs = model.next_token_distribution(&running, slot);
        if slot == reward_slot {
            reward = slot_moments(&probs, slot, discretizer);
        } else if slot == rtg_slot {
            reward_to_go = slot_moments(&probs, slot, discretizer);
        }
        let token = sample_categorical(&probs, rng);
        log_prob += probs[token].ln();
        tokens.push(token as u32);
        running.push(token as u32);
    }
    SampledFrame {
        tokens,
        reward,
        reward_to_go,
        log_prob,
    }
}

/// Draw one index from a probability vector, consuming exactly one `f64`
/// from the rng. Falls back to the last index on accumulated rounding.
pub fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn parse<T: std::str::FromStr>(line: usize, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::parse(line, format!("cannot parse {field:?}")))
}
