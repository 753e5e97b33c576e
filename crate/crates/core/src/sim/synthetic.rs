//! Synthetic volumetric dataset generator: elliptical lesions over noisy
//! background, with ground-truth masks and labeling times drawn from the
//! log-linear time model applied to the mask morphology.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{
    BinaryMask, DatasetManifest, Frame, ManifestEntry, Split, Stack,
};
use crate::error::{Error, Result};
use crate::heatmap::{boundary_length, connected_components};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionModel {
    /// Lesions per positive stack, inclusive range.
    pub count_min: usize,
    pub count_max: usize,
    /// Ellipse semi-axis range in pixels, sampled log-uniformly.
    pub semi_axis_min: f64,
    pub semi_axis_max: f64,
    /// Lesion intensity range, sampled uniformly and independently of
    /// size. The low end sits close to the background level.
    pub intensity_min: f64,
    pub intensity_max: f64,
}

impl Default for LesionModel {
    fn default() -> Self {
        LesionModel {
            count_min: 1,
            count_max: 2,
            semi_axis_min: 2.0,
            semi_axis_max: 9.0,
            intensity_min: 0.3,
            intensity_max: 0.5,
        }
    }
}

/// Small bright non-lesion artifacts drawn into every stack (positive or
/// negative) and excluded from the masks. They make negatives genuinely
/// confusable, so suppressing false alarms requires having seen them in
/// training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactModel {
    pub count_min: usize,
    pub count_max: usize,
    /// Radius range in pixels.
    pub radius_min: f64,
    pub radius_max: f64,
    pub intensity_min: f64,
    pub intensity_max: f64,
}

impl Default for ArtifactModel {
    fn default() -> Self {
        ArtifactModel {
            count_min: 2,
            count_max: 6,
            radius_min: 1.0,
            radius_max: 2.0,
            intensity_min: 0.65,
            intensity_max: 0.95,
        }
    }
}

/// Generator side of the labeling-time model: the same log-linear form the
/// cost model fits, evaluated on ground-truth mask features, with
/// multiplicative lognormal noise. Negatives take the floor time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeModel {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub noise_sigma: f64,
    pub floor_time: f64,
}

impl Default for TimeModel {
    fn default() -> Self {
        TimeModel {
            alpha: 0.8,
            beta: 0.4,
            gamma: 2.0,
            noise_sigma: 0.3,
            floor_time: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub height: usize,
    pub width: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub n_trainval: usize,
    pub n_test: usize,
    pub n_pool: usize,
    pub n_pool_test: usize,
    pub positive_fraction: f64,
    pub background_level: f64,
    pub background_noise_sigma: f64,
    pub lesion: LesionModel,
    pub artifact: ArtifactModel,
    pub time: TimeModel,
    pub master_seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            height: 64,
            width: 64,
            frames_min: 8,
            frames_max: 16,
            n_trainval: 256,
            n_test: 96,
            n_pool: 256,
            n_pool_test: 0,
            positive_fraction: 0.35,
            background_level: 0.15,
            background_noise_sigma: 0.06,
            lesion: LesionModel::default(),
            artifact: ArtifactModel::default(),
            time: TimeModel::default(),
            master_seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames_min == 0 || self.frames_min > self.frames_max {
            return Err(Error::Config("bad frames range".into()));
        }
        if self.lesion.count_min > self.lesion.count_max
            || self.lesion.semi_axis_min <= 0.0
            || self.lesion.semi_axis_min > self.lesion.semi_axis_max
        {
            return Err(Error::Config("bad lesion model ranges".into()));
        }
        let max_axis = self.lesion.semi_axis_max.ceil() as usize;
        if 2 * max_axis + 2 > self.height.min(self.width) {
            return Err(Error::Config(format!(
                "lesion semi-axis {} too large for {}x{} frames",
                self.lesion.semi_axis_max, self.height, self.width
            )));
        }
        if !(0.0..=1.0).contains(&self.positive_fraction) {
            return Err(Error::Config("positive_fraction outside [0,1]".into()));
        }
        Ok(())
    }
}

/// Generate all four splits. Deterministic in the master seed; stack ids
/// encode split and index.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(Vec<Stack>, DatasetManifest)> {
    cfg.validate()?;
    let mut stacks = Vec::new();
    for (split, n) in [
        (Split::SeedTrainval, cfg.n_trainval),
        (Split::SeedTest, cfg.n_test),
        (Split::Pool, cfg.n_pool),
        (Split::PoolTest, cfg.n_pool_test),
    ] {
        for i in 0..n {
            stacks.push(generate_stack(cfg, split, i));
        }
    }
    let entries = stacks
        .iter()
        .map(|s| ManifestEntry {
            stack_id: s.id.clone(),
            path: format!("{}.alst", s.id).into(),
            split: s.split,
            gt_label_time: s.gt_label_time,
        })
        .collect();
    Ok((stacks, DatasetManifest::new(entries)?))
}

fn generate_stack(cfg: &SyntheticConfig, split: Split, index: usize) -> Stack {
    let id = format!("{}_{index:04}", split.as_str());
    let mut rng = util::stage_rng(cfg.master_seed, &format!("gen/{id}"));
    let n_frames = rng.gen_range(cfg.frames_min..=cfg.frames_max);
    let positive = rng.gen_bool(cfg.positive_fraction);
    let (h, w) = (cfg.height, cfg.width);

    let bg_noise = Normal::new(0.0, cfg.background_noise_sigma).expect("sigma >= 0");
    let mut frames: Vec<Frame> = (0..n_frames)
        .map(|_| {
            let pixels: Vec<f32> = (0..h * w)
                .map(|_| {
                    let v = cfg.background_level + bg_noise.sample(&mut rng);
                    v.clamp(0.0, 1.0) as f32
                })
                .collect();
            Frame::new(h, w, pixels).expect("dims")
        })
        .collect();
    let mut masks: Vec<BinaryMask> = (0..n_frames).map(|_| BinaryMask::zeros(h, w)).collect();

    if positive {
        let count = rng.gen_range(cfg.lesion.count_min..=cfg.lesion.count_max);
        for _ in 0..count {
            draw_lesion(cfg, &mut rng, &mut frames, &mut masks);
        }
    }

    // Artifacts go into every stack, positive or negative, and stay out of
    // the masks: they look locally bright but are not findings.
    let n_artifacts = rng.gen_range(cfg.artifact.count_min..=cfg.artifact.count_max);
    for _ in 0..n_artifacts {
        draw_artifact(cfg, &mut rng, &mut frames);
    }

    // ground-truth labeling time from mask morphology
    let mut b_total = 0.0;
    let mut m_total = 0.0;
    for m in &masks {
        b_total += boundary_length(m);
        m_total += connected_components(m).1 as f64;
    }
    let time_noise = if cfg.time.noise_sigma > 0.0 {
        Normal::new(0.0, cfg.time.noise_sigma)
            .expect("sigma >= 0")
            .sample(&mut rng)
            .exp()
    } else {
        1.0
    };
    let t = if b_total > 0.0 {
        (cfg.time.alpha * b_total.ln() + cfg.time.beta * m_total.ln() + cfg.time.gamma).exp()
            * time_noise
    } else {
        cfg.time.floor_time * time_noise
    };

    Stack {
        id,
        frames,
        gt_masks: Some(masks),
        gt_label_time: Some(t),
        split,
    }
}

fn draw_lesion(
    cfg: &SyntheticConfig,
    rng: &mut ChaCha12Rng,
    frames: &mut [Frame],
    masks: &mut [BinaryMask],
) {
    let (h, w) = (cfg.height, cfg.width);
    let n_frames = frames.len();
    let log_lo = cfg.lesion.semi_axis_min.ln();
    let log_hi = cfg.lesion.semi_axis_max.ln();
    let a = rng.gen_range(log_lo..=log_hi).exp();
    let b = rng.gen_range(log_lo..=log_hi).exp();
    let size_u = if log_hi > log_lo {
        (((a * b).sqrt().ln() - log_lo) / (log_hi - log_lo)).clamp(0.0, 1.0)
    } else {
        0.5
    };
    // intensity is independent of size: appearance generalizes across
    // lesion sizes, while labeling cost (area and depth span) does not
    let intensity = rng.gen_range(cfg.lesion.intensity_min..=cfg.lesion.intensity_max);
    let margin_r = a.ceil() as usize + 1;
    let margin_c = b.ceil() as usize + 1;
    let cr = rng.gen_range(margin_r..h - margin_r) as f64;
    let cc = rng.gen_range(margin_c..w - margin_c) as f64;
    // depth extent scales with in-plane size: small lesions live on a frame
    // or two, large ones run through much of the stack
    let span_cap = ((size_u * n_frames as f64).ceil() as usize).clamp(1, n_frames);
    let span = rng.gen_range(1..=span_cap);
    let f0 = rng.gen_range(0..=n_frames - span);
    let tex_noise = Normal::new(0.0, cfg.background_noise_sigma * 0.5).expect("sigma >= 0");

    for (offset, fi) in (f0..f0 + span).enumerate() {
        // ellipsoid-style axis taper toward the span ends
        let z = if span > 1 {
            (offset as f64 / (span - 1) as f64) * 2.0 - 1.0
        } else {
            0.0
        };
        let scale = (1.0 - 0.8 * z * z).sqrt();
        let (fa, fb) = (a * scale, b * scale);
        if fa < 0.5 || fb < 0.5 {
            continue;
        }
        let jr = rng.gen_range(-1.0..=1.0);
        let jc = rng.gen_range(-1.0..=1.0);
        let (fcr, fcc) = (cr + jr, cc + jc);
        let r_lo = (fcr - fa).floor().max(0.0) as usize;
        let r_hi = ((fcr + fa).ceil() as usize).min(h - 1);
        let c_lo = (fcc - fb).floor().max(0.0) as usize;
        let c_hi = ((fcc + fb).ceil() as usize).min(w - 1);
        for r in r_lo..=r_hi {
            for c in c_lo..=c_hi {
                let dr = (r as f64 - fcr) / fa;
                let dc = (c as f64 - fcc) / fb;
                if dr * dr + dc * dc <= 1.0 {
                    let v = intensity + tex_noise.sample(rng);
                    frames[fi].set(r, c, v.clamp(0.0, 1.0) as f32);
                    masks[fi].set(r, c, 1);
                }
            }
        }
    }
}

fn draw_artifact(cfg: &SyntheticConfig, rng: &mut ChaCha12Rng, frames: &mut [Frame]) {
    let (h, w) = (cfg.height, cfg.width);
    let radius = rng.gen_range(cfg.artifact.radius_min..=cfg.artifact.radius_max);
    let intensity = rng.gen_range(cfg.artifact.intensity_min..=cfg.artifact.intensity_max);
    let margin = radius.ceil() as usize + 1;
    if 2 * margin >= h || 2 * margin >= w {
        return;
    }
    let cr = rng.gen_range(margin..h - margin) as f64;
    let cc = rng.gen_range(margin..w - margin) as f64;
    let fi = rng.gen_range(0..frames.len());
    let r_lo = (cr - radius).floor().max(0.0) as usize;
    let r_hi = ((cr + radius).ceil() as usize).min(h - 1);
    let c_lo = (cc - radius).floor().max(0.0) as usize;
    let c_hi = ((cc + radius).ceil() as usize).min(w - 1);
    for r in r_lo..=r_hi {
        for c in c_lo..=c_hi {
            let dr = r as f64 - cr;
            let dc = c as f64 - cc;
            if dr * dr + dc * dc <= radius * radius {
                frames[fi].set(r, c, intensity.clamp(0.0, 1.0) as f32);
            }
        }
    }
}
