//! Ranking metrics, the visit-frequency baseline, and the input-length
//! experiment harness.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dataset::{build_splits, Dataset, Normalizers, SampleRef};
use crate::error::{Error, Result};
use crate::model::{FeatureFlags, ModelParams, Mode, PreparedSample};
use crate::training::{train, TrainConfig};

/// 1-based rank of the label among the scores. Higher scores rank first;
/// among equal scores the smaller id wins, so ranks are reproducible.
pub fn rank_of_label(scores: &[f64], label: u32) -> usize {
    let label_idx = label as usize;
    let label_score = scores[label_idx];
    let mut rank = 1;
    for (id, &s) in scores.iter().enumerate() {
        if s > label_score || (s == label_score && id < label_idx) {
            rank += 1;
        }
    }
    rank
}

/// Fraction of samples whose label landed in the top K.
pub fn recall_at_k(ranks: &[usize], k: usize) -> f64 {
    debug_assert!(k >= 1);
    if ranks.is_empty() {
        return 0.0;
    }
    let hits = ranks.iter().filter(|&&r| r <= k).count();
    hits as f64 / ranks.len() as f64
}

/// Mean position-discounted gain. With one relevant item per sample the
/// ideal gain is 1, so each sample contributes 1/log2(rank+1) inside the
/// cutoff and 0 outside.
pub fn ndcg_at_k(ranks: &[usize], k: usize) -> f64 {
    debug_assert!(k >= 1);
    if ranks.is_empty() {
        return 0.0;
    }
    let total: f64 = ranks
        .iter()
        .map(|&r| if r <= k { 1.0 / ((r + 1) as f64).log2() } else { 0.0 })
        .sum();
    total / ranks.len() as f64
}

/// Evaluation results, recomputable from the per-sample ranks alone.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub recall_at: BTreeMap<usize, f64>,
    pub ndcg_at: BTreeMap<usize, f64>,
    /// (sample id, label, 1-based rank) per evaluated sample, in split order.
    pub per_sample: Vec<(usize, u32, usize)>,
    pub sample_count: usize,
}

impl MetricsReport {
    pub fn from_ranks(labeled_ranks: Vec<(usize, u32, usize)>, ks: &[usize]) -> Self {
        let ranks: Vec<usize> = labeled_ranks.iter().map(|&(_, _, r)| r).collect();
        let mut recall_at = BTreeMap::new();
        let mut ndcg_at = BTreeMap::new();
        for &k in ks {
            recall_at.insert(k, recall_at_k(&ranks, k));
            ndcg_at.insert(k, ndcg_at_k(&ranks, k));
        }
        Self { recall_at, ndcg_at, sample_count: labeled_ranks.len(), per_sample: labeled_ranks }
    }

    pub fn write_metrics_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "metric,K,value")?;
        for (k, v) in &self.recall_at {
            writeln!(out, "recall,{k},{v}")?;
        }
        for (k, v) in &self.ndcg_at {
            writeln!(out, "ndcg,{k},{v}")?;
        }
        Ok(())
    }

    pub fn write_per_sample_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "sample_id,label,rank")?;
        for (id, label, rank) in &self.per_sample {
            writeln!(out, "{id},{label},{rank}")?;
        }
        Ok(())
    }
}

/// Options shared by the evaluators.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub max_len: usize,
    pub session_window: i64,
    pub flags: FeatureFlags,
    pub ks: Vec<usize>,
}

/// Scores every sample of a split against the full location catalog and
/// aggregates ranks. Per-sample scoring is pure, so samples run in
/// parallel; ranks are collected back in split order.
pub fn evaluate_model(
    params: &ModelParams,
    dataset: &Dataset,
    split: &[SampleRef],
    norm: &Normalizers,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let catalog: Vec<u32> = (0..dataset.location_count as u32).collect();
    let labeled: Result<Vec<(usize, u32, usize)>> = split
        .par_iter()
        .enumerate()
        .map(|(id, sample)| {
            let prepared = PreparedSample::build(
                dataset,
                sample,
                &catalog,
                norm,
                opts.max_len,
                opts.session_window,
                opts.flags,
            );
            let fwd =
                crate::model::forward(params, &prepared.input(&catalog), opts.flags, Mode::Eval)?;
            let scores = fwd.scores.to_vec();
            Ok((id, sample.label, rank_of_label(&scores, sample.label)))
        })
        .collect();
    Ok(MetricsReport::from_ranks(labeled?, &opts.ks))
}

/// The visit-frequency baseline. Scores are the user's visit counts over
/// the region exposed to training (everything before the validation
/// label); ranking ties break by global popularity, then by id.
pub struct UserPop {
    /// Per-user visit counts, indexed [user][location].
    user_counts: Vec<Vec<u32>>,
    global_counts: Vec<u32>,
}

impl UserPop {
    pub fn fit(dataset: &Dataset) -> Self {
        let locations = dataset.location_count;
        let mut user_counts = vec![vec![0u32; locations]; dataset.user_count];
        let mut global_counts = vec![0u32; locations];
        for (user, checkins) in dataset.checkins.iter().enumerate() {
            let m = checkins.len();
            if m < 4 {
                continue;
            }
            // Training inputs and labels cover the first m-2 check-ins.
            for c in &checkins[..m - 2] {
                user_counts[user][c.location as usize] += 1;
                global_counts[c.location as usize] += 1;
            }
        }
        Self { user_counts, global_counts }
    }

    /// Raw per-location visit counts for one user.
    pub fn predict(&self, user: u32) -> Vec<f64> {
        self.user_counts[user as usize].iter().map(|&c| c as f64).collect()
    }

    fn rank(&self, user: u32, label: u32) -> usize {
        let counts = &self.user_counts[user as usize];
        let label_key = (counts[label as usize], self.global_counts[label as usize]);
        let mut rank = 1;
        for (id, (&c, &g)) in counts.iter().zip(&self.global_counts).enumerate() {
            let key = (c, g);
            if key > label_key || (key == label_key && (id as u32) < label) {
                rank += 1;
            }
        }
        rank
    }
}

/// Evaluates the baseline over a split.
pub fn evaluate_userpop(dataset: &Dataset, split: &[SampleRef], ks: &[usize]) -> MetricsReport {
    let baseline = UserPop::fit(dataset);
    let labeled: Vec<(usize, u32, usize)> = split
        .iter()
        .enumerate()
        .map(|(id, s)| (id, s.label, baseline.rank(s.user, s.label)))
        .collect();
    MetricsReport::from_ranks(labeled, ks)
}

/// One row of the input-length experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct InputLengthRow {
    pub m: usize,
    pub ndcg5: f64,
    pub recall5: f64,
}

/// Retrains with each user's history truncated to the last `m` check-ins
/// and reports test metrics per m. Seeds are fixed by the config, so the
/// table is reproducible.
pub fn input_length_experiment(
    dataset: &Dataset,
    m_values: &[usize],
    config: &TrainConfig,
) -> Result<Vec<InputLengthRow>> {
    let mut rows = Vec::with_capacity(m_values.len());
    for &m in m_values {
        if m == 0 {
            return Err(Error::InvalidArgument("input length m must be positive".into()));
        }
        let truncated = truncate_histories(dataset, m);
        let outcome = train(&truncated, config)?;
        let (params, _) = outcome.best.restore()?;
        let splits = build_splits(&truncated);
        let norm = Normalizers::from_dataset(&truncated);
        let opts = EvalOptions {
            max_len: config.max_len,
            session_window: config.session_window,
            flags: config.flags(),
            ks: vec![5],
        };
        let report = evaluate_model(&params, &truncated, &splits.test, &norm, &opts)?;
        rows.push(InputLengthRow { m, ndcg5: report.ndcg_at[&5], recall5: report.recall_at[&5] });
    }
    Ok(rows)
}

/// Keeps the most recent `m` check-ins of every user; shorter histories
/// stay whole. The location catalog is left untouched.
pub fn truncate_histories(dataset: &Dataset, m: usize) -> Dataset {
    let checkins = dataset
        .checkins
        .iter()
        .map(|cs| cs[cs.len().saturating_sub(m)..].to_vec())
        .collect();
    Dataset::new(dataset.user_ids.clone(), dataset.locations.clone(), checkins)
}

pub fn write_input_length_csv<W: std::io::Write>(
    rows: &[InputLengthRow],
    mut out: W,
) -> Result<()> {
    writeln!(out, "m,ndcg@5,recall@5")?;
    for row in rows {
        writeln!(out, "{},{},{}", row.m, row.ndcg5, row.recall5)?;
    }
    Ok(())
}
