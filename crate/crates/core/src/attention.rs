//! Self-attention aggregation over sub-trajectories, gated fusion of the
//! long- and short-term branches, and attention matching over candidates.
//!
//! The aggregation keeps the mask multiplicative AFTER the row softmax and
//! does not renormalize; rows belonging to padding positions get a large
//! negative logit guard so the softmax itself stays well-defined. Matching
//! normalizes over the candidate axis and sums each candidate's row to a
//! score; final probabilities are a softmax over those scores.

use ndarray::{concatenate, Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Query/key/value projections for one attention branch.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub query: Array2<f64>,
    pub key: Array2<f64>,
    pub value: Array2<f64>,
}

impl AttentionWeights {
    pub fn init(dim: usize, rng: &mut impl rand::Rng) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let mut mat = || Array2::from_shape_fn((dim, dim), |_| rng.random_range(-bound..=bound));
        Self { query: mat(), key: mat(), value: mat() }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            query: Array2::zeros((dim, dim)),
            key: Array2::zeros((dim, dim)),
            value: Array2::zeros((dim, dim)),
        }
    }
}

/// Gate producing the long/short mixing weight.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionGate {
    /// 2d weights over the concatenated branch means.
    pub weights: Array1<f64>,
    pub bias: f64,
}

impl FusionGate {
    pub fn init(dim: usize, rng: &mut impl rand::Rng) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        Self {
            weights: Array1::from_shape_fn(2 * dim, |_| rng.random_range(-bound..=bound)),
            bias: rng.random_range(-bound..=bound),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { weights: Array1::zeros(2 * dim), bias: 0.0 }
    }
}

/// Pairwise validity mask with entries in {0, 1}. `mask[i][j]` is 1 iff
/// positions i and j are both valid (non-padding).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMatrix(pub Array2<f64>);

impl MaskMatrix {
    pub fn all_valid(n: usize) -> Self {
        Self(Array2::ones((n, n)))
    }

    pub fn from_valid(valid: &[bool]) -> Self {
        let n = valid.len();
        Self(Array2::from_shape_fn((n, n), |(i, j)| {
            if valid[i] && valid[j] {
                1.0
            } else {
                0.0
            }
        }))
    }

    fn row_is_valid(&self, i: usize) -> bool {
        self.0[[i, i]] != 0.0
    }
}

/// Logit guard for padding rows; large enough to flatten the softmax.
const PADDING_LOGIT: f64 = -1e30;

/// Forward intermediates of one branch, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BranchForward {
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Row-softmax attention, pre-mask.
    pub attn: Array2<f64>,
    pub output: Array2<f64>,
}

/// Scaled dot-product self-attention with additive interval logits.
///
/// `S = (M . softmax_rows((E Wq (E Wk)^T + rel) / sqrt(d))) (E Wv)`,
/// the mask applied elementwise after the softmax. An empty input
/// short-circuits to an empty output.
pub fn self_attention_forward(
    embedded: &Array2<f64>,
    rel: &Array2<f64>,
    mask: &MaskMatrix,
    weights: &AttentionWeights,
) -> Result<BranchForward> {
    let n = embedded.nrows();
    let dim = weights.query.nrows();
    if embedded.ncols() != dim && n > 0 {
        return Err(Error::ShapeMismatch(format!(
            "embedding dim {} vs projection dim {dim}",
            embedded.ncols()
        )));
    }
    if rel.shape() != [n, n] || mask.0.shape() != [n, n] {
        return Err(Error::ShapeMismatch(format!(
            "relation {:?} / mask {:?} vs sequence length {n}",
            rel.shape(),
            mask.0.shape()
        )));
    }
    if n == 0 {
        let empty = Array2::zeros((0, dim));
        return Ok(BranchForward {
            q: empty.clone(),
            k: empty.clone(),
            v: empty.clone(),
            attn: Array2::zeros((0, 0)),
            output: empty,
        });
    }

    let q = embedded.dot(&weights.query);
    let k = embedded.dot(&weights.key);
    let v = embedded.dot(&weights.value);
    let scale = 1.0 / (dim as f64).sqrt();
    let mut logits = q.dot(&k.t());
    logits += rel;
    logits *= scale;
    for i in 0..n {
        if !mask.row_is_valid(i) {
            logits.row_mut(i).fill(PADDING_LOGIT);
        }
    }

    let attn = softmax_rows(&logits);
    let output = (&mask.0 * &attn).dot(&v);
    Ok(BranchForward { q, k, v, attn, output })
}

/// Convenience wrapper returning only the aggregated sequence.
pub fn self_attention_aggregate(
    embedded: &Array2<f64>,
    rel: &Array2<f64>,
    mask: &MaskMatrix,
    weights: &AttentionWeights,
) -> Result<Array2<f64>> {
    Ok(self_attention_forward(embedded, rel, mask, weights)?.output)
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Forward intermediates of the fusion step.
#[derive(Debug, Clone)]
pub struct FusionForward {
    pub mean_long: Array1<f64>,
    pub mean_short: Array1<f64>,
    pub alpha: f64,
    /// `alpha * long` rows stacked over `(1 - alpha) * short` rows.
    pub fused: Array2<f64>,
}

/// Gated fusion: `alpha = sigmoid(w . [mean(long) || mean(short)] + b)`,
/// long rows scaled by `alpha`, short rows by `1 - alpha`. The mean of an
/// empty branch is the zero vector.
pub fn fuse_long_short(
    s_long: &Array2<f64>,
    s_short: &Array2<f64>,
    gate: &FusionGate,
) -> FusionForward {
    let dim = s_short.ncols().max(s_long.ncols());
    let mean_long = mean_rows(s_long, dim);
    let mean_short = mean_rows(s_short, dim);
    let joint: Array1<f64> = concatenate![Axis(0), mean_long, mean_short];
    let z = gate.weights.dot(&joint) + gate.bias;
    let alpha = sigmoid(z);
    let fused = concatenate![Axis(0), s_long * alpha, s_short * (1.0 - alpha)];
    FusionForward { mean_long, mean_short, alpha, fused }
}

fn mean_rows(m: &Array2<f64>, dim: usize) -> Array1<f64> {
    if m.nrows() == 0 {
        Array1::zeros(dim)
    } else {
        m.mean_axis(Axis(0)).expect("non-empty")
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Forward intermediates of candidate matching.
#[derive(Debug, Clone)]
pub struct MatchForward {
    /// Candidate-axis softmax of the matching logits, c x n.
    pub attn: Array2<f64>,
    /// Per-candidate mass: each candidate's attention summed over the
    /// trajectory axis.
    pub scores: Array1<f64>,
    /// Softmax of the scores; the distribution the loss is taken over.
    pub probs: Array1<f64>,
}

/// Scores every candidate against the fused trajectory.
///
/// `logits = (cand fused^T + rel) / sqrt(d)` is normalized down each
/// column (across candidates), then summed along the trajectory axis.
pub fn attention_match(
    cand_embeds: &Array2<f64>,
    fused: &Array2<f64>,
    rel: &Array2<f64>,
) -> Result<MatchForward> {
    let c = cand_embeds.nrows();
    let n = fused.nrows();
    if n == 0 {
        return Err(Error::NoContext);
    }
    if rel.shape() != [c, n] || cand_embeds.ncols() != fused.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "candidates {:?}, fused {:?}, relation {:?}",
            cand_embeds.shape(),
            fused.shape(),
            rel.shape()
        )));
    }
    let scale = 1.0 / (cand_embeds.ncols() as f64).sqrt();
    let mut logits = cand_embeds.dot(&fused.t());
    logits += rel;
    logits *= scale;

    let attn = softmax_columns(&logits);
    let scores = attn.sum_axis(Axis(1));
    let probs = softmax_vec(&scores);
    Ok(MatchForward { attn, scores, probs })
}

// Candidate-permutation equivariance must hold bit for bit, so every sum
// over the candidate axis is taken in value order rather than storage
// order.
fn order_independent_sum(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    values.iter().sum()
}

fn softmax_columns(logits: &Array2<f64>) -> Array2<f64> {
    let (c, n) = (logits.nrows(), logits.ncols());
    let mut out = logits.clone();
    for j in 0..n {
        let max = (0..c).map(|i| out[[i, j]]).fold(f64::NEG_INFINITY, f64::max);
        let mut exps: Vec<f64> = (0..c).map(|i| (out[[i, j]] - max).exp()).collect();
        for i in 0..c {
            out[[i, j]] = exps[i];
        }
        let denom = order_independent_sum(&mut exps);
        for i in 0..c {
            out[[i, j]] /= denom;
        }
    }
    out
}

fn softmax_vec(scores: &Array1<f64>) -> Array1<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Array1<f64> = scores.mapv(|v| (v - max).exp());
    let denom = order_independent_sum(&mut exps.to_vec());
    exps / denom
}
