//! Negative-sampled cross-entropy training with Adam.
//!
//! All randomness flows from `base_seed`:
//! - parameter init draws from `ChaCha8Rng::seed_from_u64(base_seed)`;
//! - the epoch-e shuffle uses `base_seed + (e + 1) * 0x9E3779B97F4A7C15`;
//! - sample step s (a global per-sample counter) seeds one stream
//!   `base_seed + s` that yields first the negative ids, then the dropout
//!   masks for that sample.
//!
//! Two identical runs therefore produce byte-identical checkpoints.

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::dataset::{build_splits, Dataset, Normalizers, SampleRef};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_model, EvalOptions};
use crate::model::{
    self, accumulate, cross_entropy_loss, global_norm, scale_gradients, FeatureFlags, Gradients,
    Mode, ModelParams, PreparedSample,
};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Hyperparameters and feature switches for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub max_len: usize,
    pub num_negatives: usize,
    pub batch_size: usize,
    pub base_seed: u64,
    pub duration_buckets: usize,
    pub session_window: i64,
    pub clip_norm: f64,
    pub use_duration: bool,
    pub use_long_short: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 50,
            learning_rate: 0.001,
            dropout: 0.2,
            epochs: 50,
            max_len: 100,
            num_negatives: 10,
            batch_size: 32,
            base_seed: 42,
            duration_buckets: crate::embedding::DEFAULT_DURATION_BUCKETS,
            session_window: 86_400,
            clip_norm: 5.0,
            use_duration: true,
            use_long_short: true,
        }
    }
}

impl TrainConfig {
    pub fn flags(&self) -> FeatureFlags {
        FeatureFlags { use_duration: self.use_duration, use_long_short: self.use_long_short }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.dim == 0 || self.max_len == 0 || self.batch_size == 0 || self.duration_buckets == 0
        {
            return Err(Error::InvalidArgument(
                "dim, max_len, batch_size and duration_buckets must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 || self.clip_norm <= 0.0 || self.session_window <= 0 {
            return Err(Error::InvalidArgument(
                "learning_rate, clip_norm and session_window must be positive".into(),
            ));
        }
        Ok(())
    }
}

const DURATION_CAP: i64 = 86_400;
const DURATION_FALLBACK: i64 = 1800;

/// Derives activity durations from a user's sorted visit timestamps:
/// the gap to the next visit, capped at a day. The final visit has no gap
/// and receives the median of the others, or 30 minutes if alone.
pub fn derive_duration(times: &[i64]) -> Vec<i64> {
    if times.is_empty() {
        return Vec::new();
    }
    let mut durations: Vec<i64> = times
        .windows(2)
        .map(|w| (w[1] - w[0]).min(DURATION_CAP))
        .collect();
    let last = if durations.is_empty() {
        DURATION_FALLBACK
    } else {
        let mut sorted = durations.clone();
        sorted.sort_unstable();
        let mid = sorted.len() / 2;
        if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2
        }
    };
    durations.push(last);
    durations
}

/// Draws `k` distinct locations uniformly from the catalog, never the
/// label. Pure in the seed.
pub fn sample_negatives(label: u32, catalog: u32, k: usize, seed: u64) -> Result<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_negatives_with(&mut rng, label, catalog, k)
}

fn sample_negatives_with(
    rng: &mut ChaCha8Rng,
    label: u32,
    catalog: u32,
    k: usize,
) -> Result<Vec<u32>> {
    if k as u32 >= catalog {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {k} negatives from a catalog of {catalog} excluding the label"
        )));
    }
    let mut drawn = Vec::with_capacity(k);
    while drawn.len() < k {
        // Uniform over the catalog minus the label.
        let mut id = rng.random_range(0..catalog - 1);
        if id >= label {
            id += 1;
        }
        if !drawn.contains(&id) {
            drawn.push(id);
        }
    }
    Ok(drawn)
}

/// Adam accumulators; moments share the parameter layout.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first: ModelParams,
    pub second: ModelParams,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            first: ModelParams::zeros_like(params),
            second: ModelParams::zeros_like(params),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    let (beta1, beta2, eps) = (state.beta1, state.beta2, state.epsilon);

    let mut p_blocks = params.blocks_mut();
    let mut m_blocks = state.first.blocks_mut();
    let mut v_blocks = state.second.blocks_mut();
    for (((_, p), (_, m)), ((_, v), (_, g))) in p_blocks
        .iter_mut()
        .zip(m_blocks.iter_mut())
        .zip(v_blocks.iter_mut().zip(grads.blocks()))
    {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Per-epoch training log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_recall5: f64,
    pub val_ndcg5: f64,
}

pub struct TrainOutcome {
    /// Snapshot with the best validation Recall@5.
    pub best: Checkpoint,
    /// State after the final epoch.
    pub last: Checkpoint,
    pub log: Vec<EpochLog>,
}

pub fn write_training_log<W: std::io::Write>(log: &[EpochLog], mut out: W) -> Result<()> {
    writeln!(out, "epoch,train_loss,val_recall@5,val_ndcg@5")?;
    for row in log {
        writeln!(
            out,
            "{},{},{},{}",
            row.epoch, row.train_loss, row.val_recall5, row.val_ndcg5
        )?;
    }
    Ok(())
}

/// Runs the full training loop over the dataset's training split,
/// validating each epoch.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let splits = build_splits(dataset);
    if splits.train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let catalog = dataset.location_count as u32;
    if config.num_negatives as u32 >= catalog {
        return Err(Error::InvalidArgument(format!(
            "num_negatives {} must be below the location count {catalog}",
            config.num_negatives
        )));
    }
    let norm = Normalizers::from_dataset(dataset);
    let flags = config.flags();
    let fingerprint = dataset.fingerprint()?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.base_seed);
    let mut params = ModelParams::init(
        dataset.user_count,
        dataset.location_count,
        config.duration_buckets,
        config.dim,
        &mut init_rng,
    );
    let mut adam = AdamState::new(&params);

    let eval_opts = EvalOptions {
        max_len: config.max_len,
        session_window: config.session_window,
        flags,
        ks: vec![5],
    };

    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut sample_step: u64 = 0;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..splits.train.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(
            config.base_seed.wrapping_add((epoch as u64 + 1).wrapping_mul(GOLDEN)),
        );
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads: Option<Gradients> = None;
            for &idx in batch {
                let sample = &splits.train[idx];
                let (loss, sample_grads) =
                    train_sample(&params, dataset, sample, &norm, config, sample_step)?;
                sample_step += 1;
                if !loss.is_finite() {
                    return Err(Error::NumericalInstability { param: "loss".to_string() });
                }
                epoch_loss += loss;
                match grads.as_mut() {
                    Some(acc) => accumulate(acc, &sample_grads),
                    None => grads = Some(sample_grads),
                }
            }
            let mut grads = grads.expect("batches are non-empty");
            scale_gradients(&mut grads, 1.0 / batch.len() as f64);
            let norm_val = global_norm(&grads);
            if norm_val > config.clip_norm {
                scale_gradients(&mut grads, config.clip_norm / norm_val);
            }
            adam_step(&mut params, &grads, &mut adam, config.learning_rate);
        }
        params.check_finite()?;

        let val = evaluate_model(&params, dataset, &splits.val, &norm, &eval_opts)?;
        let row = EpochLog {
            epoch,
            train_loss: epoch_loss / splits.train.len() as f64,
            val_recall5: val.recall_at[&5],
            val_ndcg5: val.ndcg_at[&5],
        };
        if best.as_ref().is_none_or(|(r, _)| row.val_recall5 > *r) {
            best = Some((
                row.val_recall5,
                Checkpoint::capture(&params, &adam, config, &fingerprint, epoch),
            ));
        }
        log.push(row);
    }

    let last = Checkpoint::capture(&params, &adam, config, &fingerprint, config.epochs);
    let best = best.map(|(_, ck)| ck).unwrap_or_else(|| last.clone());
    Ok(TrainOutcome { best, last, log })
}

fn train_sample(
    params: &ModelParams,
    dataset: &Dataset,
    sample: &SampleRef,
    norm: &Normalizers,
    config: &TrainConfig,
    sample_step: u64,
) -> Result<(f64, Gradients)> {
    let mut step_rng = ChaCha8Rng::seed_from_u64(config.base_seed.wrapping_add(sample_step));
    let negatives = sample_negatives_with(
        &mut step_rng,
        sample.label,
        dataset.location_count as u32,
        config.num_negatives,
    )?;
    let mut candidates = Vec::with_capacity(negatives.len() + 1);
    candidates.push(sample.label);
    candidates.extend(negatives);

    let flags = config.flags();
    let prepared = PreparedSample::build(
        dataset,
        sample,
        &candidates,
        norm,
        config.max_len,
        config.session_window,
        flags,
    );
    let input = prepared.input(&candidates);
    let fwd = model::forward(
        params,
        &input,
        flags,
        Mode::Train { dropout: config.dropout, rng: &mut step_rng },
    )?;
    let loss = cross_entropy_loss(&fwd.scores, 0);
    let grads = model::backward(params, &input, &fwd, 0, flags)?;
    Ok((loss, grads))
}

/// Scores one already-prepared input against an explicit candidate list in
/// evaluation mode. Shared by the evaluators and the prediction CLI.
pub fn score_input(
    params: &ModelParams,
    input: &model::ModelInput,
    flags: FeatureFlags,
) -> Result<Array1<f64>> {
    Ok(model::forward(params, input, flags, Mode::Eval)?.scores)
}
