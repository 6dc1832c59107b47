//! The assembled prediction model: embeddings, two attention branches,
//! gated fusion and candidate matching, with an analytic backward pass.
//!
//! The forward pass records every intermediate needed to backpropagate,
//! so one `forward` + `backward` pair yields exact gradients for all
//! parameter groups. Dropout (training mode only) uses inverted scaling
//! and draws its masks from a caller-supplied seeded stream; the same
//! masks are replayed from the cache during the backward pass.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    attention_match, fuse_long_short, self_attention_forward, AttentionWeights, BranchForward,
    FusionForward, FusionGate, MaskMatrix, MatchForward,
};
use crate::dataset::{CheckIn, RelationMatrices};
use crate::embedding::{bucketize_duration, discretize_time, embed_sequence, EmbeddingTables};
use crate::error::{Error, Result};

/// Every learnable weight in the model. The same structure doubles as the
/// gradient and Adam-moment container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub tables: EmbeddingTables,
    pub long_branch: AttentionWeights,
    pub short_branch: AttentionWeights,
    pub gate: FusionGate,
}

impl ModelParams {
    /// Seeded uniform init; the draw order is fixed by field order.
    pub fn init(
        users: usize,
        locations: usize,
        duration_buckets: usize,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            tables: EmbeddingTables::init(users, locations, duration_buckets, dim, rng),
            long_branch: AttentionWeights::init(dim, rng),
            short_branch: AttentionWeights::init(dim, rng),
            gate: FusionGate::init(dim, rng),
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        let dim = other.dim();
        Self {
            tables: EmbeddingTables::zeros(
                other.tables.user.nrows(),
                other.tables.location.nrows(),
                other.tables.duration.nrows(),
                dim,
            ),
            long_branch: AttentionWeights::zeros(dim),
            short_branch: AttentionWeights::zeros(dim),
            gate: FusionGate::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.tables.dim()
    }

    /// Named views over every parameter block, in a fixed order shared by
    /// the optimizer, the checkpoint format and the gradient checker.
    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        fn s2(m: &Array2<f64>) -> &[f64] {
            m.as_slice().expect("standard layout")
        }
        let t = &self.tables;
        vec![
            ("user_table", s2(&t.user)),
            ("location_table", s2(&t.location)),
            ("time_table", s2(&t.time_of_week)),
            ("duration_table", s2(&t.duration)),
            ("unit_time", t.unit_time.as_slice().expect("standard layout")),
            ("unit_dist", t.unit_dist.as_slice().expect("standard layout")),
            ("reduce", t.reduce.as_slice().expect("standard layout")),
            ("long_query", s2(&self.long_branch.query)),
            ("long_key", s2(&self.long_branch.key)),
            ("long_value", s2(&self.long_branch.value)),
            ("short_query", s2(&self.short_branch.query)),
            ("short_key", s2(&self.short_branch.key)),
            ("short_value", s2(&self.short_branch.value)),
            ("gate_weights", self.gate.weights.as_slice().expect("standard layout")),
            ("gate_bias", std::slice::from_ref(&self.gate.bias)),
        ]
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let t = &mut self.tables;
        vec![
            ("user_table", t.user.as_slice_mut().expect("standard layout")),
            ("location_table", t.location.as_slice_mut().expect("standard layout")),
            ("time_table", t.time_of_week.as_slice_mut().expect("standard layout")),
            ("duration_table", t.duration.as_slice_mut().expect("standard layout")),
            ("unit_time", t.unit_time.as_slice_mut().expect("standard layout")),
            ("unit_dist", t.unit_dist.as_slice_mut().expect("standard layout")),
            ("reduce", t.reduce.as_slice_mut().expect("standard layout")),
            ("long_query", self.long_branch.query.as_slice_mut().expect("standard layout")),
            ("long_key", self.long_branch.key.as_slice_mut().expect("standard layout")),
            ("long_value", self.long_branch.value.as_slice_mut().expect("standard layout")),
            ("short_query", self.short_branch.query.as_slice_mut().expect("standard layout")),
            ("short_key", self.short_branch.key.as_slice_mut().expect("standard layout")),
            ("short_value", self.short_branch.value.as_slice_mut().expect("standard layout")),
            ("gate_weights", self.gate.weights.as_slice_mut().expect("standard layout")),
            ("gate_bias", std::slice::from_mut(&mut self.gate.bias)),
        ]
    }

    pub fn block_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let two = |m: &Array2<f64>| m.shape().to_vec();
        vec![
            ("user_table", two(&self.tables.user)),
            ("location_table", two(&self.tables.location)),
            ("time_table", two(&self.tables.time_of_week)),
            ("duration_table", two(&self.tables.duration)),
            ("unit_time", vec![self.tables.unit_time.len()]),
            ("unit_dist", vec![self.tables.unit_dist.len()]),
            ("reduce", vec![self.tables.reduce.len()]),
            ("long_query", two(&self.long_branch.query)),
            ("long_key", two(&self.long_branch.key)),
            ("long_value", two(&self.long_branch.value)),
            ("short_query", two(&self.short_branch.query)),
            ("short_key", two(&self.short_branch.key)),
            ("short_value", two(&self.short_branch.value)),
            ("gate_weights", vec![self.gate.weights.len()]),
            ("gate_bias", vec![1]),
        ]
    }

    /// Fails with the offending block name if any value is non-finite.
    pub fn check_finite(&self) -> Result<()> {
        for (name, data) in self.blocks() {
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalInstability { param: name.to_string() });
            }
        }
        Ok(())
    }
}

/// Gradient container; same layout as the parameters it differentiates.
pub type Gradients = ModelParams;

/// Feature switches resolved from the training configuration.
#[derive(Debug, Clone, Copy)]
pub struct FeatureFlags {
    pub use_duration: bool,
    pub use_long_short: bool,
}

impl Default for FeatureFlags {
    fn default() -> Self {
        Self { use_duration: true, use_long_short: true }
    }
}

/// One scoring request: the partitioned input, its interval matrices and
/// the candidate locations to rank.
#[derive(Debug, Clone)]
pub struct ModelInput<'a> {
    pub long: &'a [CheckIn],
    pub short: &'a [CheckIn],
    pub rel_long: &'a RelationMatrices,
    pub rel_short: &'a RelationMatrices,
    pub candidates: &'a [u32],
}

/// Training applies dropout with a per-sample random stream; evaluation
/// runs the deterministic path.
pub enum Mode<'a> {
    Eval,
    Train { dropout: f64, rng: &'a mut ChaCha8Rng },
}

struct DropoutMask {
    /// Zero where dropped, `1/(1-rate)` where kept (inverted dropout).
    factors: Array2<f64>,
}

impl DropoutMask {
    fn sample(shape: (usize, usize), rate: f64, rng: &mut ChaCha8Rng) -> Self {
        let keep = 1.0 - rate;
        let factors = Array2::from_shape_fn(shape, |_| {
            if rng.random_range(0.0..1.0) < rate {
                0.0
            } else {
                1.0 / keep
            }
        });
        Self { factors }
    }

    fn identity(shape: (usize, usize)) -> Self {
        Self { factors: Array2::ones(shape) }
    }
}

/// Everything the backward pass needs, recorded during the forward pass.
pub struct ForwardCache {
    embed_long: Array2<f64>,
    embed_short: Array2<f64>,
    drop_long: DropoutMask,
    drop_short: DropoutMask,
    drop_fused: DropoutMask,
    branch_long: BranchForward,
    branch_short: BranchForward,
    mask_long: MaskMatrix,
    mask_short: MaskMatrix,
    rel_long_pair: (Array2<f64>, Array2<f64>),
    rel_short_pair: (Array2<f64>, Array2<f64>),
    cand_dt: Array2<f64>,
    cand_ds: Array2<f64>,
    fusion: FusionForward,
    fused_dropped: Array2<f64>,
    cand_embeds: Array2<f64>,
    matching: MatchForward,
    use_long_short: bool,
}

/// The model output for one input: per-candidate scores (ranking order)
/// and normalized probabilities (loss).
pub struct Forward {
    pub scores: Array1<f64>,
    pub probs: Array1<f64>,
    pub cache: ForwardCache,
}

pub fn forward(
    params: &ModelParams,
    input: &ModelInput,
    flags: FeatureFlags,
    mode: Mode,
) -> Result<Forward> {
    if input.short.is_empty() && input.long.is_empty() {
        return Err(Error::NoContext);
    }
    for &cand in input.candidates {
        if cand as usize >= params.tables.location.nrows() {
            return Err(Error::UnknownId { kind: "location", id: cand.to_string() });
        }
    }
    let dim = params.dim();
    let (n_long, n_short) = (input.long.len(), input.short.len());

    let mut embed_long = embed_sequence(input.long, &params.tables, flags.use_duration)?;
    let mut embed_short = embed_sequence(input.short, &params.tables, flags.use_duration)?;

    // Mask draw order is fixed: long embeddings, short embeddings, fused
    // rows. The fused mask is sampled up front at the final fused height so
    // the stream does not depend on intermediate values.
    let fused_rows = if flags.use_long_short { n_long + n_short } else { n_short };
    let (drop_long, drop_short, drop_fused) = match mode {
        Mode::Train { dropout, rng } if dropout > 0.0 => (
            DropoutMask::sample((n_long, dim), dropout, rng),
            DropoutMask::sample((n_short, dim), dropout, rng),
            DropoutMask::sample((fused_rows, dim), dropout, rng),
        ),
        _ => (
            DropoutMask::identity((n_long, dim)),
            DropoutMask::identity((n_short, dim)),
            DropoutMask::identity((fused_rows, dim)),
        ),
    };
    embed_long *= &drop_long.factors;
    embed_short *= &drop_short.factors;

    let (time_w, dist_w) = params.tables.interval_weights();
    let pair_rel = |rel: &RelationMatrices| &rel.dt * time_w + &rel.ds * dist_w;

    let mask_long = MaskMatrix::all_valid(n_long);
    let mask_short = MaskMatrix::all_valid(n_short);
    let branch_long = self_attention_forward(
        &embed_long,
        &pair_rel(input.rel_long),
        &mask_long,
        &params.long_branch,
    )?;
    let branch_short = self_attention_forward(
        &embed_short,
        &pair_rel(input.rel_short),
        &mask_short,
        &params.short_branch,
    )?;

    // With the long/short feature off the whole input flows through the
    // short branch and fusion degenerates to weight 1 on it.
    let fusion = if flags.use_long_short {
        fuse_long_short(&branch_long.output, &branch_short.output, &params.gate)
    } else {
        FusionForward {
            mean_long: Array1::zeros(dim),
            mean_short: Array1::zeros(dim),
            alpha: 1.0,
            fused: branch_short.output.clone(),
        }
    };
    let fused_dropped = &fusion.fused * &drop_fused.factors;

    let cand_embeds = Array2::from_shape_fn((input.candidates.len(), dim), |(c, j)| {
        params.tables.location[[input.candidates[c] as usize, j]]
    });
    let cand_dt = hstack(&input.rel_long.cand_dt, &input.rel_short.cand_dt);
    let cand_ds = hstack(&input.rel_long.cand_ds, &input.rel_short.cand_ds);
    let cand_rel = &cand_dt * time_w + &cand_ds * dist_w;

    let matching = attention_match(&cand_embeds, &fused_dropped, &cand_rel)?;

    Ok(Forward {
        scores: matching.scores.clone(),
        probs: matching.probs.clone(),
        cache: ForwardCache {
            embed_long,
            embed_short,
            drop_long,
            drop_short,
            drop_fused,
            branch_long,
            branch_short,
            mask_long,
            mask_short,
            rel_long_pair: (input.rel_long.dt.clone(), input.rel_long.ds.clone()),
            rel_short_pair: (input.rel_short.dt.clone(), input.rel_short.ds.clone()),
            cand_dt,
            cand_ds,
            fusion,
            fused_dropped,
            cand_embeds,
            matching,
            use_long_short: flags.use_long_short,
        },
    })
}

fn hstack(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    if a.ncols() == 0 {
        return b.clone();
    }
    if b.ncols() == 0 {
        return a.clone();
    }
    ndarray::concatenate![Axis(1), a.view(), b.view()]
}

/// Cross-entropy of the label under the score softmax, via log-sum-exp.
pub fn cross_entropy_loss(scores: &Array1<f64>, label_idx: usize) -> f64 {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.mapv(|v| (v - max).exp()).sum().ln();
    lse - scores[label_idx]
}

/// Gradient contributions flowing into the shared interval weights.
struct IntervalGrads {
    time_w: f64,
    dist_w: f64,
}

/// Analytic gradients of the cross-entropy loss at `label_idx` with
/// respect to every parameter, replaying the cached forward pass.
pub fn backward(
    params: &ModelParams,
    input: &ModelInput,
    fwd: &Forward,
    label_idx: usize,
    flags: FeatureFlags,
) -> Result<Gradients> {
    let cache = &fwd.cache;
    let dim = params.dim();
    let scale = 1.0 / (dim as f64).sqrt();
    let n_long = input.long.len();
    let n = cache.fused_dropped.nrows();
    let c = input.candidates.len();
    let mut grads = Gradients::zeros_like(params);
    let mut interval = IntervalGrads { time_w: 0.0, dist_w: 0.0 };

    // Loss -> scores: softmax cross-entropy.
    let mut d_scores = fwd.probs.clone();
    d_scores[label_idx] -= 1.0;

    // scores[c] = sum_j attn[c][j], so every column of d_attn is d_scores.
    // Candidate-axis softmax backward, then through the 1/sqrt(d) scale.
    let attn = &cache.matching.attn;
    let mut d_pre = Array2::zeros((c, n));
    for j in 0..n {
        let col = attn.column(j);
        let dot: f64 = col.iter().zip(d_scores.iter()).map(|(a, g)| a * g).sum();
        for i in 0..c {
            d_pre[[i, j]] = col[i] * (d_scores[i] - dot);
        }
    }
    d_pre *= scale;

    // pre = cand_embeds . fused^T + cand_rel
    let d_cand_embeds = d_pre.dot(&cache.fused_dropped);
    let d_fused_dropped = d_pre.t().dot(&cache.cand_embeds);
    interval.time_w += (&d_pre * &cache.cand_dt).sum();
    interval.dist_w += (&d_pre * &cache.cand_ds).sum();

    for (row, &cand) in input.candidates.iter().enumerate() {
        let mut loc_row = grads.tables.location.row_mut(cand as usize);
        loc_row += &d_cand_embeds.row(row);
    }

    let d_fused = d_fused_dropped * &cache.drop_fused.factors;

    // Fusion backward.
    let s_long = &cache.branch_long.output;
    let s_short = &cache.branch_short.output;
    let (mut d_s_long, mut d_s_short);
    if cache.use_long_short {
        let alpha = cache.fusion.alpha;
        let g_long = d_fused.slice(ndarray::s![..n_long, ..]).to_owned();
        let g_short = d_fused.slice(ndarray::s![n_long.., ..]).to_owned();
        d_s_long = &g_long * alpha;
        d_s_short = &g_short * (1.0 - alpha);
        let d_alpha = (&g_long * s_long).sum() - (&g_short * s_short).sum();
        let d_z = d_alpha * alpha * (1.0 - alpha);
        grads.gate.bias += d_z;
        for j in 0..dim {
            grads.gate.weights[j] += d_z * cache.fusion.mean_long[j];
            grads.gate.weights[dim + j] += d_z * cache.fusion.mean_short[j];
        }
        if n_long > 0 {
            let spread =
                params.gate.weights.slice(ndarray::s![..dim]).to_owned() * (d_z / n_long as f64);
            for mut row in d_s_long.rows_mut() {
                row += &spread;
            }
        }
        let n_short = s_short.nrows();
        if n_short > 0 {
            let spread =
                params.gate.weights.slice(ndarray::s![dim..]).to_owned() * (d_z / n_short as f64);
            for mut row in d_s_short.rows_mut() {
                row += &spread;
            }
        }
    } else {
        d_s_long = Array2::zeros((n_long, dim));
        d_s_short = d_fused;
    }

    branch_backward(
        BranchGrad {
            fwd: &cache.branch_long,
            mask: &cache.mask_long,
            weights: &params.long_branch,
            embedded: &cache.embed_long,
            drop: &cache.drop_long,
            rel_pair: &cache.rel_long_pair,
            part: input.long,
            d_out: &d_s_long,
        },
        scale,
        flags,
        &mut grads.long_branch,
        &mut grads.tables,
        &mut interval,
    );
    branch_backward(
        BranchGrad {
            fwd: &cache.branch_short,
            mask: &cache.mask_short,
            weights: &params.short_branch,
            embedded: &cache.embed_short,
            drop: &cache.drop_short,
            rel_pair: &cache.rel_short_pair,
            part: input.short,
            d_out: &d_s_short,
        },
        scale,
        flags,
        &mut grads.short_branch,
        &mut grads.tables,
        &mut interval,
    );

    // time_w = reduce . unit_time, dist_w = reduce . unit_dist.
    grads.tables.reduce += &(&params.tables.unit_time * interval.time_w);
    grads.tables.reduce += &(&params.tables.unit_dist * interval.dist_w);
    grads.tables.unit_time += &(&params.tables.reduce * interval.time_w);
    grads.tables.unit_dist += &(&params.tables.reduce * interval.dist_w);

    grads.check_finite()?;
    Ok(grads)
}

struct BranchGrad<'a> {
    fwd: &'a BranchForward,
    mask: &'a MaskMatrix,
    weights: &'a AttentionWeights,
    embedded: &'a Array2<f64>,
    drop: &'a DropoutMask,
    rel_pair: &'a (Array2<f64>, Array2<f64>),
    part: &'a [CheckIn],
    d_out: &'a Array2<f64>,
}

fn branch_backward(
    ctx: BranchGrad,
    scale: f64,
    flags: FeatureFlags,
    weight_grads: &mut AttentionWeights,
    table_grads: &mut EmbeddingTables,
    interval: &mut IntervalGrads,
) {
    let n = ctx.embedded.nrows();
    if n == 0 {
        return;
    }
    let masked = &ctx.mask.0 * &ctx.fwd.attn;
    let d_masked = ctx.d_out.dot(&ctx.fwd.v.t());
    let d_v = masked.t().dot(ctx.d_out);
    let d_attn = &ctx.mask.0 * &d_masked;

    // Row softmax backward, then through the 1/sqrt(d) scale.
    let mut d_pre = Array2::zeros((n, n));
    for i in 0..n {
        let row = ctx.fwd.attn.row(i);
        let g = d_attn.row(i);
        let dot: f64 = row.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        for j in 0..n {
            d_pre[[i, j]] = row[j] * (g[j] - dot);
        }
    }
    d_pre *= scale;

    let d_q = d_pre.dot(&ctx.fwd.k);
    let d_k = d_pre.t().dot(&ctx.fwd.q);
    interval.time_w += (&d_pre * &ctx.rel_pair.0).sum();
    interval.dist_w += (&d_pre * &ctx.rel_pair.1).sum();

    weight_grads.query += &ctx.embedded.t().dot(&d_q);
    weight_grads.key += &ctx.embedded.t().dot(&d_k);
    weight_grads.value += &ctx.embedded.t().dot(&d_v);

    let mut d_embedded = d_q.dot(&ctx.weights.query.t());
    d_embedded += &d_k.dot(&ctx.weights.key.t());
    d_embedded += &d_v.dot(&ctx.weights.value.t());
    d_embedded *= &ctx.drop.factors;

    // Scatter into the lookup tables.
    for (i, checkin) in ctx.part.iter().enumerate() {
        let g = d_embedded.row(i);
        let mut user_row = table_grads.user.row_mut(checkin.user as usize);
        user_row += &g;
        let mut loc_row = table_grads.location.row_mut(checkin.location as usize);
        loc_row += &g;
        let slot = discretize_time(checkin.time);
        let mut time_row = table_grads.time_of_week.row_mut(slot);
        time_row += &g;
        if flags.use_duration {
            let bucket = bucketize_duration(checkin.duration.max(0), table_grads.duration.nrows());
            let mut dur_row = table_grads.duration.row_mut(bucket);
            dur_row += &g;
        }
    }
}

/// Elementwise in-place accumulation: `into += other`.
pub fn accumulate(into: &mut Gradients, other: &Gradients) {
    for ((_, a), (_, b)) in into.blocks_mut().into_iter().zip(other.blocks()) {
        for (x, y) in a.iter_mut().zip(b.iter()) {
            *x += y;
        }
    }
}

/// Scales every gradient entry in place.
pub fn scale_gradients(grads: &mut Gradients, factor: f64) {
    for (_, block) in grads.blocks_mut() {
        for v in block {
            *v *= factor;
        }
    }
}

/// Global L2 norm across all blocks.
pub fn global_norm(grads: &Gradients) -> f64 {
    grads
        .blocks()
        .iter()
        .map(|(_, b)| b.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// A sample descriptor resolved into model-ready tensors: the long/short
/// partition plus interval matrices for both parts.
pub struct PreparedSample {
    pub split: crate::dataset::TrajectorySplit,
    pub rel_long: RelationMatrices,
    pub rel_short: RelationMatrices,
}

impl PreparedSample {
    pub fn build(
        dataset: &crate::dataset::Dataset,
        sample: &crate::dataset::SampleRef,
        candidates: &[u32],
        norm: &crate::dataset::Normalizers,
        max_len: usize,
        session_window: i64,
        flags: FeatureFlags,
    ) -> Self {
        let history = &dataset.checkins[sample.user as usize][..sample.input_len];
        let mut split = crate::dataset::split_long_short(
            history,
            sample.label,
            sample.query_time,
            max_len,
            session_window,
        );
        if !flags.use_long_short {
            // The whole (truncated) input runs through the short branch.
            let mut joined = std::mem::take(&mut split.long);
            joined.append(&mut split.short);
            split.short = joined;
        }
        let rel_long = crate::dataset::build_relation_matrices(
            &split.long,
            split.query_time,
            candidates,
            &dataset.locations,
            norm,
        );
        let rel_short = crate::dataset::build_relation_matrices(
            &split.short,
            split.query_time,
            candidates,
            &dataset.locations,
            norm,
        );
        Self { split, rel_long, rel_short }
    }

    pub fn input<'a>(&'a self, candidates: &'a [u32]) -> ModelInput<'a> {
        ModelInput {
            long: &self.split.long,
            short: &self.split.short,
            rel_long: &self.rel_long,
            rel_short: &self.rel_short,
            candidates,
        }
    }
}
