//! The reference patch learner: a regularized logistic model over a fixed
//! local-feature basis, trained by stochastic gradient descent.
//!
//! Feature basis "local-quadratic" (id 2). Base features, computed per
//! pixel within the patch:
//!   0. raw intensity
//!   1. mean over the clamped 3x3 window
//!   2. variance over the clamped 3x3 window
//!   3. mean over the clamped 7x7 window
//!   4. variance over the clamped 7x7 window
//!   5. row position, normalized to [0,1] within the patch
//!   6. column position, normalized to [0,1] within the patch
//! followed by all pairwise products x_i * x_j for i <= j (28 terms), 35
//! features total. The quadratic terms give the model enough capacity
//! that its accuracy keeps improving with training-set size at desk
//! scale, instead of being pinned down by a handful of stacks.
//!
//! Deliberately weak compared to a convolutional net, so active learning
//! has headroom on desk-scale data. Training is reproducible given the
//! member seed (init, patch sampling, and sample order all draw from it).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::data::{Frame, Stack};
use crate::error::{Error, Result};

use super::PatchPredictor;

pub const N_BASE_FEATURES: usize = 7;
pub const N_FEATURES: usize = N_BASE_FEATURES + N_BASE_FEATURES * (N_BASE_FEATURES + 1) / 2;
pub const FEATURE_BASIS_ID: u16 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub epochs: u32,
    pub l2: f64,
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Patch side length used both for sampling training windows and as
    /// the expected inference window.
    pub patch_size: usize,
    /// Uniformly placed background windows per stack. Frames containing
    /// lesion pixels each contribute two extra lesion-centered windows.
    pub patches_per_stack: usize,
    /// Pixels subsampled per training window.
    pub pixels_per_patch: usize,
    pub learning_rate: f64,
    pub epochs: u32,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            patch_size: 32,
            patches_per_stack: 16,
            pixels_per_patch: 64,
            learning_rate: 0.5,
            epochs: 10,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLearner {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hyper: Hyperparameters,
}

impl PatchPredictor for ReferenceLearner {
    fn predict_patch(&self, patch: &Frame) -> Frame {
        let feats = patch_features(patch);
        let pixels: Vec<f32> = feats
            .iter()
            .map(|x| sigmoid(self.score(x)) as f32)
            .collect();
        Frame::new(patch.height(), patch.width(), pixels).expect("same shape as input")
    }
}

impl ReferenceLearner {
    #[inline]
    fn score(&self, x: &[f64; N_FEATURES]) -> f64 {
        let mut z = self.bias;
        for (w, xi) in self.weights.iter().zip(x) {
            z += w * xi;
        }
        z
    }

    /// Train one member. All randomness (init, bootstrap resampling, patch
    /// sampling, epoch shuffles) flows from `seed`.
    pub fn train(stacks: &[Stack], cfg: &TrainConfig, seed: u64, bootstrap: bool) -> Result<Self> {
        if stacks.is_empty() {
            return Err(Error::Config("no training stacks".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);

        let mut weights = vec![0.0; N_FEATURES];
        for w in &mut weights {
            *w = rng.gen_range(-0.01..0.01);
        }
        let mut bias = 0.0f64;

        let chosen: Vec<&Stack> = if bootstrap {
            (0..stacks.len())
                .map(|_| &stacks[rng.gen_range(0..stacks.len())])
                .collect()
        } else {
            stacks.iter().collect()
        };

        let mut samples: Vec<([f64; N_FEATURES], f64)> = Vec::new();
        for stack in &chosen {
            sample_stack(stack, cfg, &mut rng, &mut samples)?;
        }
        if samples.is_empty() {
            return Err(Error::Config("no training samples gathered".into()));
        }
        let n_pos = samples.iter().filter(|(_, y)| *y > 0.5).count();
        if n_pos == 0 || n_pos == samples.len() {
            log::warn!(
                "degenerate training data: {n_pos}/{} positive pixel samples",
                samples.len()
            );
        }

        // pin the class ratio at 4:1 (negative:positive) by subsampling
        // the over-represented side: the pixel prior the model calibrates
        // to must not depend on the labeled set's stack composition
        if n_pos > 0 {
            let n_neg = samples.len() - n_pos;
            let target_neg = (4 * n_pos).max(512);
            let target_pos = (n_neg / 4).max(128);
            if n_neg > target_neg || n_pos > target_pos {
                let (mut pos, mut neg): (Vec<_>, Vec<_>) =
                    samples.into_iter().partition(|(_, y)| *y > 0.5);
                if neg.len() > target_neg {
                    neg.shuffle(&mut rng);
                    neg.truncate(target_neg);
                }
                if pos.len() > target_pos {
                    pos.shuffle(&mut rng);
                    pos.truncate(target_pos);
                }
                pos.extend(neg);
                samples = pos;
            }
        }

        let mut order: Vec<usize> = (0..samples.len()).collect();
        let lr0 = cfg.learning_rate;
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let lr = lr0 / (1.0 + epoch as f64);
            for &i in &order {
                let (x, y) = &samples[i];
                let mut z = bias;
                for (w, xi) in weights.iter().zip(x) {
                    z += w * xi;
                }
                let g = sigmoid(z) - y;
                for (w, xi) in weights.iter_mut().zip(x) {
                    *w -= lr * (g * xi + cfg.l2 * *w);
                }
                bias -= lr * g;
            }
        }

        Ok(ReferenceLearner {
            weights,
            bias,
            hyper: Hyperparameters {
                learning_rate: cfg.learning_rate,
                epochs: cfg.epochs,
                l2: cfg.l2,
                init_seed: seed,
            },
        })
    }
}

fn sample_stack(
    stack: &Stack,
    cfg: &TrainConfig,
    rng: &mut ChaCha12Rng,
    out: &mut Vec<([f64; N_FEATURES], f64)>,
) -> Result<()> {
    let masks = stack
        .gt_masks
        .as_ref()
        .ok_or_else(|| Error::Config(format!("stack {} has no masks", stack.id)))?;
    let (h, w) = (stack.height(), stack.width());
    let ps = cfg.patch_size.min(h).min(w);

    // per-frame positive pixel lists, for lesion-centered windows
    let mut frame_positives: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
    for (fi, m) in masks.iter().enumerate() {
        let mut pos = Vec::new();
        for r in 0..h {
            for c in 0..w {
                if m.get(r, c) == 1 {
                    pos.push((r, c));
                }
            }
        }
        if !pos.is_empty() {
            frame_positives.push((fi, pos));
        }
    }

    // lesion-centered windows, two per lesion frame but capped per stack:
    // a lesion spanning many frames must not let one stack dominate the
    // positive sample pool
    frame_positives.shuffle(rng);
    frame_positives.truncate(4);
    frame_positives.sort_by_key(|(fi, _)| *fi);
    for (fi, pos) in &frame_positives {
        for _ in 0..2 {
            let &(r, c) = &pos[rng.gen_range(0..pos.len())];
            let r0 = r.saturating_sub(ps / 2).min(h - ps);
            let c0 = c.saturating_sub(ps / 2).min(w - ps);
            sample_window(
                stack,
                masks,
                *fi,
                r0,
                c0,
                ps,
                cfg.pixels_per_patch,
                Some((r - r0, c - c0)),
                rng,
                out,
            );
        }
    }
    // plus a fixed ration of background windows; half are placed uniformly,
    // half are hard negatives centered on the stack's most conspicuous
    // off-mask pixels (frames ranked by their brightest off-mask value, so
    // bright non-findings are guaranteed into the sample)
    let mut frame_peaks: Vec<(usize, f32, usize, usize)> = (0..stack.n_frames())
        .map(|fi| {
            let (v, r, c) = brightest_off_mask(&stack.frames[fi], &masks[fi]);
            (fi, v, r, c)
        })
        .collect();
    frame_peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut hard = 0usize;
    for k in 0..cfg.patches_per_stack {
        let (fi, r0, c0, focus) = if k % 2 == 0 {
            (
                rng.gen_range(0..stack.n_frames()),
                rng.gen_range(0..=h - ps),
                rng.gen_range(0..=w - ps),
                None,
            )
        } else {
            let (fi, _, r, c) = frame_peaks[hard % frame_peaks.len()];
            hard += 1;
            let r0 = r.saturating_sub(ps / 2).min(h - ps);
            let c0 = c.saturating_sub(ps / 2).min(w - ps);
            (fi, r0, c0, Some((r - r0, c - c0)))
        };
        sample_window(stack, masks, fi, r0, c0, ps, cfg.pixels_per_patch, focus, rng, out);
    }
    Ok(())
}

fn brightest_off_mask(frame: &Frame, mask: &crate::data::BinaryMask) -> (f32, usize, usize) {
    let (h, w) = (frame.height(), frame.width());
    let mut best = (0usize, 0usize);
    let mut best_v = f32::NEG_INFINITY;
    for r in 0..h {
        for c in 0..w {
            let v = frame.get(r, c);
            if mask.get(r, c) == 0 && v > best_v {
                best_v = v;
                best = (r, c);
            }
        }
    }
    (best_v, best.0, best.1)
}

#[allow(clippy::too_many_arguments)]
fn sample_window(
    stack: &Stack,
    masks: &[crate::data::BinaryMask],
    fi: usize,
    r0: usize,
    c0: usize,
    ps: usize,
    pixels: usize,
    focus: Option<(usize, usize)>,
    rng: &mut ChaCha12Rng,
    out: &mut Vec<([f64; N_FEATURES], f64)>,
) {
    let patch = stack.frames[fi].window(r0, c0, ps, ps);
    let feats = patch_features(&patch);
    match focus {
        // focused window: densely supervise the neighborhood of the given
        // window-local point — bright non-findings are only suppressed at
        // inference if their core, halo, and immediate surround all carry
        // labels, and a uniform or brightness-ranked draw misses the halo
        Some((fr, fc)) => {
            let rad = 4usize;
            let mut taken = 0;
            'outer: for dr in 0..=2 * rad {
                for dc in 0..=2 * rad {
                    if taken >= pixels {
                        break 'outer;
                    }
                    let pr = (fr + dr).wrapping_sub(rad);
                    let pc = (fc + dc).wrapping_sub(rad);
                    if pr >= ps || pc >= ps {
                        continue;
                    }
                    let y = f64::from(masks[fi].get(r0 + pr, c0 + pc));
                    out.push((feats[pr * ps + pc], y));
                    taken += 1;
                }
            }
        }
        None => {
            for _ in 0..pixels {
                let pr = rng.gen_range(0..ps);
                let pc = rng.gen_range(0..ps);
                let y = f64::from(masks[fi].get(r0 + pr, c0 + pc));
                out.push((feats[pr * ps + pc], y));
            }
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-pixel feature vectors for a patch, row-major, via integral images.
pub fn patch_features(patch: &Frame) -> Vec<[f64; N_FEATURES]> {
    let (h, w) = (patch.height(), patch.width());
    // prefix sums with a zero border row/column
    let mut sum = vec![0.0f64; (h + 1) * (w + 1)];
    let mut sumsq = vec![0.0f64; (h + 1) * (w + 1)];
    for r in 0..h {
        let mut row_s = 0.0;
        let mut row_q = 0.0;
        for c in 0..w {
            let v = f64::from(patch.get(r, c));
            row_s += v;
            row_q += v * v;
            sum[(r + 1) * (w + 1) + c + 1] = sum[r * (w + 1) + c + 1] + row_s;
            sumsq[(r + 1) * (w + 1) + c + 1] = sumsq[r * (w + 1) + c + 1] + row_q;
        }
    }
    let box_sum = |tab: &[f64], r0: usize, c0: usize, r1: usize, c1: usize| -> f64 {
        tab[(r1 + 1) * (w + 1) + c1 + 1] + tab[r0 * (w + 1) + c0]
            - tab[r0 * (w + 1) + c1 + 1]
            - tab[(r1 + 1) * (w + 1) + c0]
    };

    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let mut x = [0.0f64; N_FEATURES];
            x[0] = f64::from(patch.get(r, c));
            for (k, rad) in [(1usize, 1usize), (3, 3)] {
                let r0 = r.saturating_sub(rad);
                let c0 = c.saturating_sub(rad);
                let r1 = (r + rad).min(h - 1);
                let c1 = (c + rad).min(w - 1);
                let n = ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64;
                let s = box_sum(&sum, r0, c0, r1, c1);
                let q = box_sum(&sumsq, r0, c0, r1, c1);
                let mean = s / n;
                let var = (q / n - mean * mean).max(0.0);
                let base = if k == 1 { 1 } else { 3 };
                x[base] = mean;
                x[base + 1] = var;
            }
            x[5] = if h > 1 { r as f64 / (h - 1) as f64 } else { 0.0 };
            x[6] = if w > 1 { c as f64 / (w - 1) as f64 } else { 0.0 };
            let mut k = N_BASE_FEATURES;
            for i in 0..N_BASE_FEATURES {
                for j in i..N_BASE_FEATURES {
                    x[k] = x[i] * x[j];
                    k += 1;
                }
            }
            out.push(x);
        }
    }
    out
}

const CKPT_MAGIC: [u8; 4] = *b"ALPR";
const CKPT_VERSION: u16 = 1;

/// Versioned binary predictor checkpoint; round-trips exactly.
pub fn save_checkpoint(learner: &ReferenceLearner, path: &Path) -> Result<()> {
    let display = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(display.clone(), e);
    out.write_all(&CKPT_MAGIC).map_err(io_err)?;
    out.write_all(&CKPT_VERSION.to_le_bytes()).map_err(io_err)?;
    out.write_all(&FEATURE_BASIS_ID.to_le_bytes()).map_err(io_err)?;
    out.write_all(&(learner.weights.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    for w in &learner.weights {
        out.write_all(&w.to_le_bytes()).map_err(io_err)?;
    }
    out.write_all(&learner.bias.to_le_bytes()).map_err(io_err)?;
    out.write_all(&learner.hyper.learning_rate.to_le_bytes())
        .map_err(io_err)?;
    out.write_all(&learner.hyper.epochs.to_le_bytes()).map_err(io_err)?;
    out.write_all(&learner.hyper.l2.to_le_bytes()).map_err(io_err)?;
    out.write_all(&learner.hyper.init_seed.to_le_bytes())
        .map_err(io_err)?;
    out.flush().map_err(|e| Error::io(display.clone(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<ReferenceLearner> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut input = BufReader::new(file);
    let io_err = |e| Error::io(display.clone(), e);

    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(io_err)?;
    if magic != CKPT_MAGIC {
        return Err(Error::BadMagic {
            path: display,
            expected: CKPT_MAGIC,
            got: magic,
        });
    }
    let version = read_u16(&mut input, &display)?;
    if version != CKPT_VERSION {
        return Err(Error::BadVersion {
            path: display,
            got: version,
        });
    }
    let basis = read_u16(&mut input, &display)?;
    if basis != FEATURE_BASIS_ID {
        return Err(Error::Config(format!(
            "checkpoint {display} uses feature basis {basis}, this build supports {FEATURE_BASIS_ID}"
        )));
    }
    let n = read_u32(&mut input, &display)? as usize;
    if n != N_FEATURES {
        return Err(Error::DimensionMismatch {
            path: display,
            detail: format!("{n} weights for basis with {N_FEATURES} features"),
        });
    }
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        weights.push(read_f64(&mut input, &display)?);
    }
    let bias = read_f64(&mut input, &display)?;
    let learning_rate = read_f64(&mut input, &display)?;
    let epochs = read_u32(&mut input, &display)?;
    let l2 = read_f64(&mut input, &display)?;
    let init_seed = read_u64(&mut input, &display)?;
    Ok(ReferenceLearner {
        weights,
        bias,
        hyper: Hyperparameters {
            learning_rate,
            epochs,
            l2,
            init_seed,
        },
    })
}

fn read_u16(r: &mut impl Read, path: &str) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read, path: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, path: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read, path: &str) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
    Ok(f64::from_le_bytes(b))
}
