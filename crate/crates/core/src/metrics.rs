//! Average-precision evaluation at pixel, region, frame, and stack level.
//!
//! AP here is the running-precision sum over positives in descending score
//! order, ties broken by stable input order (pinned so tests are exact).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::committee::{frame_and_stack_scores, ScoreAggregation};
use crate::data::{BinaryMask, HeatmapStack, Stack};
use crate::error::{Error, Result};
use crate::heatmap::{connected_components, threshold};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredInstance {
    pub score: f64,
    pub positive: bool,
}

/// Region extraction and matching convention for region AP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMatchConfig {
    /// Probability threshold for extracting predicted regions.
    pub detection_threshold: f64,
    /// Minimum IoU for a predicted region to claim a ground-truth region.
    pub min_iou: f64,
}

impl Default for RegionMatchConfig {
    fn default() -> Self {
        RegionMatchConfig {
            detection_threshold: 0.5,
            min_iou: 0.5,
        }
    }
}

impl RegionMatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_iou > 0.0 && self.min_iou <= 1.0) {
            return Err(Error::Config(format!(
                "min_iou {} outside (0,1]",
                self.min_iou
            )));
        }
        if !(self.detection_threshold > 0.0 && self.detection_threshold < 1.0) {
            return Err(Error::Config(format!(
                "detection_threshold {} outside (0,1)",
                self.detection_threshold
            )));
        }
        Ok(())
    }
}

/// AP over a ranked instance list.
pub fn average_precision(instances: &[ScoredInstance]) -> Result<f64> {
    let n_pos = instances.iter().filter(|i| i.positive).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("no positive instances".into()));
    }
    let mut order: Vec<usize> = (0..instances.len()).collect();
    // stable: equal scores keep input order
    order.sort_by(|&a, &b| instances[b].score.partial_cmp(&instances[a].score).unwrap());
    let mut tp = 0usize;
    let mut precision_sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if instances[i].positive {
            tp += 1;
            precision_sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(precision_sum / n_pos as f64)
}

/// AP with extra unmatched positives that never appear in the ranking
/// (missed ground-truth regions). They deflate recall via the denominator.
fn average_precision_with_missed(instances: &[ScoredInstance], missed: usize) -> Result<f64> {
    let n_pos = instances.iter().filter(|i| i.positive).count() + missed;
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("no positive instances".into()));
    }
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by(|&a, &b| instances[b].score.partial_cmp(&instances[a].score).unwrap());
    let mut tp = 0usize;
    let mut precision_sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if instances[i].positive {
            tp += 1;
            precision_sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(precision_sum / n_pos as f64)
}

fn gt_masks_of<'a>(stack: &'a Stack) -> Result<&'a [BinaryMask]> {
    stack
        .gt_masks
        .as_deref()
        .ok_or_else(|| Error::Invariant(format!("stack {} has no ground truth", stack.id)))
}

/// Pixel AP over all pixels of all stacks. `subsample` keeps each negative
/// pixel with the given probability (seeded); positives are always kept.
pub fn pixel_ap(
    preds: &[HeatmapStack],
    stacks: &[Stack],
    subsample: Option<(f64, u64)>,
) -> Result<f64> {
    let mut instances = Vec::new();
    let mut rng = subsample.map(|(_, seed)| crate::util::stage_rng(seed, "pixel-ap-subsample"));
    for (pred, stack) in preds.iter().zip(stacks) {
        pred.validate_against(stack)?;
        let masks = gt_masks_of(stack)?;
        for (map, mask) in pred.maps.iter().zip(masks) {
            for (p, bit) in map.pixels().iter().zip(mask.bits()) {
                let positive = *bit == 1;
                if !positive {
                    if let (Some(rng), Some((keep, _))) = (rng.as_mut(), subsample) {
                        if !rng.gen_bool(keep) {
                            continue;
                        }
                    }
                }
                instances.push(ScoredInstance {
                    score: f64::from(*p),
                    positive,
                });
            }
        }
    }
    average_precision(&instances)
}

/// Frame AP: one instance per frame, scored by the frame score, positive
/// iff the frame's mask has any positive pixel.
pub fn frame_ap(preds: &[HeatmapStack], stacks: &[Stack]) -> Result<f64> {
    let mut instances = Vec::new();
    for (pred, stack) in preds.iter().zip(stacks) {
        pred.validate_against(stack)?;
        let masks = gt_masks_of(stack)?;
        let (frame_scores, _) = frame_and_stack_scores(pred, ScoreAggregation::Max);
        for (score, mask) in frame_scores.iter().zip(masks) {
            instances.push(ScoredInstance {
                score: *score,
                positive: mask.count_ones() > 0,
            });
        }
    }
    average_precision(&instances)
}

/// Stack AP: one instance per stack, positive iff any frame is positive.
pub fn stack_ap(preds: &[HeatmapStack], stacks: &[Stack]) -> Result<f64> {
    let mut instances = Vec::new();
    for (pred, stack) in preds.iter().zip(stacks) {
        pred.validate_against(stack)?;
        let masks = gt_masks_of(stack)?;
        let (_, score) = frame_and_stack_scores(pred, ScoreAggregation::Max);
        instances.push(ScoredInstance {
            score,
            positive: masks.iter().any(|m| m.count_ones() > 0),
        });
    }
    average_precision(&instances)
}

struct Region {
    pixels: Vec<usize>,
    score: f64,
}

fn regions_of(labels: &[u32], count: usize, map: Option<&[f32]>) -> Vec<Region> {
    let mut regions: Vec<Region> = (0..count)
        .map(|_| Region {
            pixels: Vec::new(),
            score: 0.0,
        })
        .collect();
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            let r = &mut regions[(l - 1) as usize];
            r.pixels.push(i);
            if let Some(map) = map {
                r.score = r.score.max(f64::from(map[i]));
            }
        }
    }
    regions
}

fn iou(a: &[usize], b: &[usize]) -> f64 {
    // pixel lists are ascending by construction
    let mut inter = 0usize;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Region AP: predicted regions are connected components of the
/// thresholded prediction, scored by max pixel probability; a region is a
/// true positive if it claims an unmatched ground-truth region at
/// IoU >= min (greedy in descending score order, 1-to-1, per frame);
/// unmatched ground-truth regions count as missed positives.
pub fn region_ap(
    preds: &[HeatmapStack],
    stacks: &[Stack],
    cfg: &RegionMatchConfig,
) -> Result<f64> {
    cfg.validate()?;
    let mut instances = Vec::new();
    let mut missed = 0usize;
    let mut total_gt = 0usize;
    for (pred, stack) in preds.iter().zip(stacks) {
        pred.validate_against(stack)?;
        let masks = gt_masks_of(stack)?;
        for (map, gt_mask) in pred.maps.iter().zip(masks) {
            let pred_mask = threshold(map, cfg.detection_threshold)?;
            let (plabels, pcount) = connected_components(&pred_mask);
            let (glabels, gcount) = connected_components(gt_mask);
            total_gt += gcount;
            let mut pred_regions = regions_of(&plabels, pcount, Some(map.pixels()));
            let gt_regions = regions_of(&glabels, gcount, None);
            pred_regions.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
            let mut gt_taken = vec![false; gcount];
            for pr in &pred_regions {
                let mut best: Option<(usize, f64)> = None;
                for (gi, gr) in gt_regions.iter().enumerate() {
                    if gt_taken[gi] {
                        continue;
                    }
                    let overlap = iou(&pr.pixels, &gr.pixels);
                    if overlap >= cfg.min_iou
                        && best.map(|(_, b)| overlap > b).unwrap_or(true)
                    {
                        best = Some((gi, overlap));
                    }
                }
                let positive = if let Some((gi, _)) = best {
                    gt_taken[gi] = true;
                    true
                } else {
                    false
                };
                instances.push(ScoredInstance {
                    score: pr.score,
                    positive,
                });
            }
            missed += gt_taken.iter().filter(|t| !**t).count();
        }
    }
    if total_gt == 0 {
        return Err(Error::UndefinedMetric("no ground-truth regions".into()));
    }
    average_precision_with_missed(&instances, missed)
}

/// Metrics bundle reported per evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pixel_ap: f64,
    pub region_ap: f64,
    pub frame_ap: f64,
    pub stack_ap: f64,
    pub n_stacks: usize,
}

pub fn evaluate(
    preds: &[HeatmapStack],
    stacks: &[Stack],
    region_cfg: &RegionMatchConfig,
    pixel_subsample: Option<(f64, u64)>,
) -> Result<EvalReport> {
    Ok(EvalReport {
        pixel_ap: pixel_ap(preds, stacks, pixel_subsample)?,
        region_ap: region_ap(preds, stacks, region_cfg)?,
        frame_ap: frame_ap(preds, stacks)?,
        stack_ap: stack_ap(preds, stacks)?,
        n_stacks: stacks.len(),
    })
}
