//! Shared domain types: frames, masks, stacks, heatmaps, and the dataset
//! manifest, plus their on-disk formats.

mod container;
mod manifest;

pub use container::{load_raw_maps, load_stack, save_raw_maps, save_stack};
pub use manifest::{load_dataset, DatasetManifest, ManifestEntry};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single 2D grid of real values, stored row-major.
///
/// Holds either intensities or probabilities; probability-valued frames are
/// validated at the container boundary, not on every mutation.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Invariant("frame dimensions must be >= 1".into()));
        }
        if pixels.len() != height * width {
            return Err(Error::Invariant(format!(
                "frame payload length {} != {}x{}",
                pixels.len(),
                height,
                width
            )));
        }
        Ok(Frame {
            height,
            width,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Frame {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    pub fn constant(height: usize, width: usize, value: f32) -> Self {
        Frame {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.pixels[row * self.width + col] = value;
    }

    #[inline]
    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    /// Copy a `size_h` x `size_w` window with top-left corner at (r0, c0).
    pub fn window(&self, r0: usize, c0: usize, size_h: usize, size_w: usize) -> Frame {
        debug_assert!(r0 + size_h <= self.height && c0 + size_w <= self.width);
        let mut pixels = Vec::with_capacity(size_h * size_w);
        for r in r0..r0 + size_h {
            let row = &self.pixels[r * self.width + c0..r * self.width + c0 + size_w];
            pixels.extend_from_slice(row);
        }
        Frame {
            height: size_h,
            width: size_w,
            pixels,
        }
    }

    pub fn is_probability_valued(&self) -> bool {
        self.pixels.iter().all(|p| (0.0..=1.0).contains(p))
    }
}

/// Binary mask aligned to one frame. Bits are exactly 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::Invariant(format!(
                "mask payload length {} != {}x{}",
                bits.len(),
                height,
                width
            )));
        }
        if let Some(b) = bits.iter().find(|b| **b > 1) {
            return Err(Error::Invariant(format!("mask value {b} is not 0/1")));
        }
        Ok(BinaryMask {
            height,
            width,
            bits,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        BinaryMask {
            height,
            width,
            bits: vec![0; height * width],
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        debug_assert!(value <= 1);
        self.bits[row * self.width + col] = value;
    }

    #[inline]
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b == 1).count()
    }
}

/// Which experiment split a stack belongs to. Stored in the manifest,
/// not the pixel container, so reassignment never rewrites payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    SeedTrainval,
    SeedTest,
    Pool,
    PoolTest,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::SeedTrainval => "seed_trainval",
            Split::SeedTest => "seed_test",
            Split::Pool => "pool",
            Split::PoolTest => "pool_test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seed_trainval" => Ok(Split::SeedTrainval),
            "seed_test" => Ok(Split::SeedTest),
            "pool" => Ok(Split::Pool),
            "pool_test" => Ok(Split::PoolTest),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// One volumetric scan: an ordered sequence of frames, with optional
/// ground-truth masks and observed labeling time.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    pub id: String,
    pub frames: Vec<Frame>,
    pub gt_masks: Option<Vec<BinaryMask>>,
    pub gt_label_time: Option<f64>,
    pub split: Split,
}

impl Stack {
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Invariant(format!("stack {} has no frames", self.id)));
        }
        let (h, w) = (self.frames[0].height(), self.frames[0].width());
        for (i, f) in self.frames.iter().enumerate() {
            if f.height() != h || f.width() != w {
                return Err(Error::Invariant(format!(
                    "stack {}: frame {} is {}x{}, expected {}x{}",
                    self.id,
                    i,
                    f.height(),
                    f.width(),
                    h,
                    w
                )));
            }
        }
        if let Some(masks) = &self.gt_masks {
            if masks.len() != self.frames.len() {
                return Err(Error::Invariant(format!(
                    "stack {}: {} masks for {} frames",
                    self.id,
                    masks.len(),
                    self.frames.len()
                )));
            }
            for (i, m) in masks.iter().enumerate() {
                if m.height() != h || m.width() != w {
                    return Err(Error::Invariant(format!(
                        "stack {}: mask {} dims differ from frames",
                        self.id, i
                    )));
                }
            }
        }
        if let Some(t) = self.gt_label_time {
            if !(t > 0.0) {
                return Err(Error::Invariant(format!(
                    "stack {}: gt_label_time {} must be > 0",
                    self.id, t
                )));
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// Copy with ground truth removed; what the pool looks like before
    /// the annotation oracle reveals anything.
    pub fn without_ground_truth(&self) -> Stack {
        Stack {
            id: self.id.clone(),
            frames: self.frames.clone(),
            gt_masks: None,
            gt_label_time: None,
            split: self.split,
        }
    }
}

/// Per-pixel probability (or divergence) grids for one stack.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    pub stack_id: String,
    pub maps: Vec<Frame>,
}

impl HeatmapStack {
    pub fn validate_against(&self, stack: &Stack) -> Result<()> {
        if self.maps.len() != stack.n_frames() {
            return Err(Error::Invariant(format!(
                "heatmap for {} has {} maps, stack has {} frames",
                self.stack_id,
                self.maps.len(),
                stack.n_frames()
            )));
        }
        for m in &self.maps {
            if m.height() != stack.height() || m.width() != stack.width() {
                return Err(Error::Invariant(format!(
                    "heatmap dims differ from stack {}",
                    self.stack_id
                )));
            }
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &HeatmapStack) -> bool {
        self.maps.len() == other.maps.len()
            && self
                .maps
                .iter()
                .zip(&other.maps)
                .all(|(a, b)| a.height() == b.height() && a.width() == b.width())
    }
}
