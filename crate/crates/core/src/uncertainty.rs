//! Pixelwise Jensen-Shannon committee disagreement and its aggregation to
//! patch and stack uncertainty.
//!
//! Entropies are base 2, so JS over N members lies in [0, log2 N] bits.

use crate::data::{Frame, HeatmapStack};
use crate::error::{Error, Result};
use crate::util;

/// Per-pixel JS values for one stack, one grid per frame, in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    pub stack_id: String,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationConfig {
    /// Number of top patches averaged into the stack uncertainty.
    pub top_k: usize,
    /// Side length of the non-overlapping aggregation grid.
    pub patch_size: usize,
}

impl AggregationConfig {
    pub fn new(top_k: usize, patch_size: usize) -> Result<Self> {
        if top_k == 0 {
            return Err(Error::Config("top_k must be >= 1".into()));
        }
        if patch_size == 0 {
            return Err(Error::Config("aggregation patch_size must be >= 1".into()));
        }
        Ok(AggregationConfig { top_k, patch_size })
    }

    /// Desk-scale default for K: the reference protocol used K = 200 over
    /// roughly 327 aggregation patches per stack (32 frames of 512^2 on a
    /// 160^2 grid), i.e. the top ~61%. Scale that fraction to the local
    /// patch count so small stacks are not reduced to a pure max.
    pub fn desk_default(frames_per_stack: usize, height: usize, width: usize) -> Self {
        let patch_size = 16;
        let per_frame = height.div_ceil(patch_size) * width.div_ceil(patch_size);
        let n_patches = (frames_per_stack * per_frame).max(1);
        let top_k = ((200.0 * n_patches as f64 / 327.0).ceil() as usize).max(1);
        AggregationConfig { top_k, patch_size }
    }
}

/// Stack-level uncertainty V_i in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct StackUncertainty {
    pub stack_id: String,
    pub value: f64,
}

/// Binary entropy in bits, with 0 log 0 = 0.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0,1]")));
    }
    Ok(h2(p))
}

#[inline]
fn h2(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    term(p) + term(1.0 - p)
}

/// JS divergence of N member probabilities for one pixel:
/// entropy of the mean minus mean of the entropies.
pub fn js_divergence(probs: &[f64]) -> Result<f64> {
    if probs.len() < 2 {
        return Err(Error::Config(format!(
            "JS needs >= 2 members, got {}",
            probs.len()
        )));
    }
    for p in probs {
        if !(0.0..=1.0).contains(p) {
            return Err(Error::Domain(format!("probability {p} outside [0,1]")));
        }
    }
    let n = probs.len() as f64;
    let mean = probs.iter().sum::<f64>() / n;
    let mean_h = probs.iter().map(|p| h2(*p)).sum::<f64>() / n;
    let raw = h2(mean) - mean_h;
    // raw JS is nonnegative up to rounding; anything further negative is a bug
    if raw < -1e-12 {
        return Err(Error::Invariant(format!("JS evaluated to {raw}")));
    }
    Ok(raw.max(0.0))
}

/// Per-pixel JS over N member heatmaps of the same stack.
pub fn uncertainty_map(committee_heatmaps: &[HeatmapStack]) -> Result<UncertaintyMap> {
    if committee_heatmaps.len() < 2 {
        return Err(Error::Config(format!(
            "JS needs >= 2 member heatmaps, got {}",
            committee_heatmaps.len()
        )));
    }
    let first = &committee_heatmaps[0];
    for other in &committee_heatmaps[1..] {
        if other.stack_id != first.stack_id {
            return Err(Error::Invariant(format!(
                "heatmap stack ids differ: {} vs {}",
                first.stack_id, other.stack_id
            )));
        }
        if !first.same_shape(other) {
            return Err(Error::DimensionMismatch {
                path: first.stack_id.clone(),
                detail: "member heatmap dimensions differ".into(),
            });
        }
    }
    let frame_indices: Vec<usize> = (0..first.maps.len()).collect();
    let frames = util::par_map(&frame_indices, |&fi| {
        let (h, w) = (first.maps[fi].height(), first.maps[fi].width());
        let mut pixels = Vec::with_capacity(h * w);
        let mut probs = vec![0.0f64; committee_heatmaps.len()];
        for i in 0..h * w {
            for (j, hm) in committee_heatmaps.iter().enumerate() {
                probs[j] = f64::from(hm.maps[fi].pixels()[i]);
            }
            let js = js_divergence(&probs).expect("validated members");
            pixels.push(js as f32);
        }
        Frame::new(h, w, pixels).expect("same dims")
    });
    Ok(UncertaintyMap {
        stack_id: first.stack_id.clone(),
        frames,
    })
}

/// One aggregation patch: frame index, top-left corner, mean JS over the
/// patch's true pixel count (border remainders included).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchUncertainty {
    pub frame: usize,
    pub row: usize,
    pub col: usize,
    pub mean_js: f64,
}

/// Mean JS per cell of the non-overlapping patch grid.
pub fn patch_uncertainties(map: &UncertaintyMap, cfg: &AggregationConfig) -> Vec<PatchUncertainty> {
    let ps = cfg.patch_size;
    let mut out = Vec::new();
    for (fi, frame) in map.frames.iter().enumerate() {
        let (h, w) = (frame.height(), frame.width());
        let mut r0 = 0;
        while r0 < h {
            let rh = ps.min(h - r0);
            let mut c0 = 0;
            while c0 < w {
                let cw = ps.min(w - c0);
                let mut sum = 0.0f64;
                for r in r0..r0 + rh {
                    for c in c0..c0 + cw {
                        sum += f64::from(frame.get(r, c));
                    }
                }
                out.push(PatchUncertainty {
                    frame: fi,
                    row: r0,
                    col: c0,
                    mean_js: sum / (rh * cw) as f64,
                });
                c0 += ps;
            }
            r0 += ps;
        }
    }
    out
}

/// Mean of the K largest patch values (all of them when fewer than K).
pub fn stack_uncertainty(
    stack_id: &str,
    patches: &[PatchUncertainty],
    cfg: &AggregationConfig,
) -> Result<StackUncertainty> {
    if patches.is_empty() {
        return Err(Error::Domain("no patches to aggregate".into()));
    }
    let mut vals: Vec<f64> = patches.iter().map(|p| p.mean_js).collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let k = cfg.top_k.min(vals.len());
    let value = vals[..k].iter().sum::<f64>() / k as f64;
    Ok(StackUncertainty {
        stack_id: stack_id.to_string(),
        value,
    })
}

/// Convenience: member heatmaps straight to V_i.
pub fn stack_uncertainty_from_heatmaps(
    committee_heatmaps: &[HeatmapStack],
    cfg: &AggregationConfig,
) -> Result<StackUncertainty> {
    let map = uncertainty_map(committee_heatmaps)?;
    let patches = patch_uncertainties(&map, cfg);
    stack_uncertainty(&map.stack_id, &patches, cfg)
}

/// Single-model entropy score, the baseline QBC is compared against:
/// mean pixel entropy of one model's heatmap, aggregated like JS.
pub fn single_model_entropy_map(heatmap: &HeatmapStack) -> UncertaintyMap {
    let frames = heatmap
        .maps
        .iter()
        .map(|m| {
            let pixels: Vec<f32> = m.pixels().iter().map(|p| h2(f64::from(*p)) as f32).collect();
            Frame::new(m.height(), m.width(), pixels).expect("same dims")
        })
        .collect();
    UncertaintyMap {
        stack_id: heatmap.stack_id.clone(),
        frames,
    }
}
