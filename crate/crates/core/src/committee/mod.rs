//! The prediction ensemble: a pluggable patch-predictor contract, a
//! reference trainable learner, sliding-window whole-stack inference, and
//! frame/stack score aggregation.

mod learner;

pub use learner::{
    load_checkpoint, save_checkpoint, Hyperparameters, ReferenceLearner, TrainConfig,
    FEATURE_BASIS_ID, N_BASE_FEATURES, N_FEATURES,
};

use crate::data::{Frame, HeatmapStack, Stack};
use crate::error::{Error, Result};
use crate::util;

/// Behavioral contract for one committee member: a square patch of
/// intensities in, a same-shaped grid of probabilities out. Predictions
/// must be deterministic given frozen parameters.
pub trait PatchPredictor: Send + Sync {
    fn predict_patch(&self, patch: &Frame) -> Frame;
}

/// Fixed-output predictor. Used to verify that overlap averaging weights
/// sum to one (a constant input must come out unchanged).
pub struct ConstantPredictor(pub f32);

impl PatchPredictor for ConstantPredictor {
    fn predict_patch(&self, patch: &Frame) -> Frame {
        Frame::constant(patch.height(), patch.width(), self.0)
    }
}

/// An ensemble of independently trained members.
#[derive(Debug, Clone, PartialEq)]
pub struct Committee {
    pub members: Vec<ReferenceLearner>,
}

impl Committee {
    pub fn n_members(&self) -> usize {
        self.members.len()
    }
}

/// Train `n_members` learners on the same labeled stacks, diversity coming
/// from per-member init seeds and stochastic sample order (optionally
/// bootstrap resamples of the stacks).
pub fn train_committee(
    labeled: &[Stack],
    n_members: usize,
    seeds: &[u64],
    bootstrap: bool,
    cfg: &TrainConfig,
) -> Result<Committee> {
    if labeled.is_empty() {
        return Err(Error::Config("cannot train a committee on no stacks".into()));
    }
    if n_members < 2 {
        return Err(Error::Config(format!(
            "committee needs >= 2 members, got {n_members}"
        )));
    }
    if seeds.len() != n_members {
        return Err(Error::Config(format!(
            "{} seeds for {} members",
            seeds.len(),
            n_members
        )));
    }
    for s in labeled {
        if s.gt_masks.is_none() {
            return Err(Error::Config(format!("stack {} has no masks", s.id)));
        }
    }
    let members = util::par_map(seeds, |seed| {
        ReferenceLearner::train(labeled, cfg, *seed, bootstrap)
    });
    let members = members.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Committee { members })
}

/// Sliding-window inference over a whole stack.
///
/// Windows start at multiples of `stride`; when the last window would run
/// past the frame it is snapped to the border instead of zero-padding, so
/// every pixel is covered. Overlapping predictions are combined by
/// arithmetic mean.
pub fn sliding_window_predict(
    predictor: &dyn PatchPredictor,
    stack: &Stack,
    patch_size: usize,
    stride: usize,
) -> Result<HeatmapStack> {
    let (h, w) = (stack.height(), stack.width());
    if stride == 0 || stride > patch_size {
        return Err(Error::Config(format!(
            "stride {stride} must satisfy 1 <= stride <= patch_size {patch_size}"
        )));
    }
    if patch_size > h || patch_size > w {
        return Err(Error::Config(format!(
            "patch size {patch_size} exceeds frame dims {h}x{w}"
        )));
    }
    let rows = window_origins(h, patch_size, stride);
    let cols = window_origins(w, patch_size, stride);

    let maps = util::par_map(&stack.frames, |frame| {
        let mut sum = vec![0.0f64; h * w];
        let mut weight = vec![0.0f64; h * w];
        for &r0 in &rows {
            for &c0 in &cols {
                let patch = frame.window(r0, c0, patch_size, patch_size);
                let pred = predictor.predict_patch(&patch);
                debug_assert_eq!(pred.height(), patch_size);
                debug_assert_eq!(pred.width(), patch_size);
                for pr in 0..patch_size {
                    for pc in 0..patch_size {
                        let idx = (r0 + pr) * w + (c0 + pc);
                        sum[idx] += f64::from(pred.get(pr, pc));
                        weight[idx] += 1.0;
                    }
                }
            }
        }
        let pixels: Vec<f32> = sum
            .iter()
            .zip(&weight)
            .map(|(s, c)| (s / c) as f32)
            .collect();
        Frame::new(h, w, pixels).expect("accumulator dims match frame")
    });
    Ok(HeatmapStack {
        stack_id: stack.id.clone(),
        maps,
    })
}

/// Window start offsets along one axis: multiples of `stride`, with a final
/// window snapped to the border when the grid does not cover the axis.
fn window_origins(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut origins = Vec::new();
    let last = dim - patch;
    let mut pos = 0;
    loop {
        if pos >= last {
            origins.push(last);
            break;
        }
        origins.push(pos);
        pos += stride;
    }
    origins
}

/// Run every member over a stack, returning one heatmap per member.
pub fn committee_predict(
    committee: &Committee,
    stack: &Stack,
    patch_size: usize,
    stride: usize,
) -> Result<Vec<HeatmapStack>> {
    committee
        .members
        .iter()
        .map(|m| sliding_window_predict(m, stack, patch_size, stride))
        .collect()
}

/// How per-frame scores are reduced from the pixel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreAggregation {
    /// Max pixel probability (default; preserves small-lesion detections).
    Max,
    /// Mean of the k largest pixel probabilities.
    TopKMean(usize),
}

impl Default for ScoreAggregation {
    fn default() -> Self {
        ScoreAggregation::Max
    }
}

/// Aggregate a heatmap into per-frame scores and a stack score
/// (stack score = max over frame scores).
pub fn frame_and_stack_scores(heatmap: &HeatmapStack, agg: ScoreAggregation) -> (Vec<f64>, f64) {
    let frame_scores: Vec<f64> = heatmap
        .maps
        .iter()
        .map(|m| match agg {
            ScoreAggregation::Max => m
                .pixels()
                .iter()
                .fold(0.0f64, |acc, p| acc.max(f64::from(*p))),
            ScoreAggregation::TopKMean(k) => {
                let k = k.max(1).min(m.pixels().len());
                let mut vals: Vec<f64> = m.pixels().iter().map(|p| f64::from(*p)).collect();
                vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
                vals[..k].iter().sum::<f64>() / k as f64
            }
        })
        .collect();
    let stack_score = frame_scores.iter().fold(0.0f64, |acc, s| acc.max(*s));
    (frame_scores, stack_score)
}
