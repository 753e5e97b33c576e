//! Cost-model features from the committee-mean heatmap: multi-threshold
//! binarization, connected components, and boundary length.
//!
//! Components use 8-connectivity; perimeter counts exposed 4-neighbor
//! edges — the standard complementary pair.

use crate::data::{BinaryMask, Frame, HeatmapStack};
use crate::error::{Error, Result};
use crate::util;

/// Ascending probability thresholds in (0,1).
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    thresholds: Vec<f64>,
}

impl ThresholdSet {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::Config("threshold set must be nonempty".into()));
        }
        for t in &thresholds {
            if !(*t > 0.0 && *t < 1.0) {
                return Err(Error::Config(format!("threshold {t} outside (0,1)")));
            }
        }
        if !thresholds.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("thresholds must be strictly ascending".into()));
        }
        Ok(ThresholdSet { thresholds })
    }

    pub fn values(&self) -> &[f64] {
        &self.thresholds
    }
}

impl Default for ThresholdSet {
    fn default() -> Self {
        ThresholdSet {
            thresholds: vec![0.3, 0.5, 0.7],
        }
    }
}

/// Morphology features of one stack's mean heatmap: boundary length B and
/// component count M, each summed over frames per threshold and then
/// averaged across thresholds. Per-threshold totals are kept for
/// diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StackFeatures {
    pub stack_id: String,
    pub boundary_length: f64,
    pub component_count: f64,
    /// (threshold, total boundary, total components) per threshold.
    pub per_threshold: Vec<(f64, f64, f64)>,
}

/// Per-pixel arithmetic mean over committee member heatmaps.
pub fn mean_heatmap(committee_heatmaps: &[HeatmapStack]) -> Result<HeatmapStack> {
    let first = committee_heatmaps
        .first()
        .ok_or_else(|| Error::Config("no member heatmaps".into()))?;
    for other in &committee_heatmaps[1..] {
        if !first.same_shape(other) {
            return Err(Error::DimensionMismatch {
                path: first.stack_id.clone(),
                detail: "member heatmap dimensions differ".into(),
            });
        }
    }
    let n = committee_heatmaps.len() as f64;
    let maps = (0..first.maps.len())
        .map(|fi| {
            let (h, w) = (first.maps[fi].height(), first.maps[fi].width());
            let mut pixels = vec![0.0f64; h * w];
            for hm in committee_heatmaps {
                for (acc, p) in pixels.iter_mut().zip(hm.maps[fi].pixels()) {
                    *acc += f64::from(*p);
                }
            }
            let pixels: Vec<f32> = pixels.iter().map(|s| (s / n) as f32).collect();
            Frame::new(h, w, pixels).expect("same dims")
        })
        .collect();
    Ok(HeatmapStack {
        stack_id: first.stack_id.clone(),
        maps,
    })
}

/// Binarize: bit = 1 iff pixel >= tau.
pub fn threshold(map: &Frame, tau: f64) -> Result<BinaryMask> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("threshold {tau} outside (0,1)")));
    }
    let bits: Vec<u8> = map
        .pixels()
        .iter()
        .map(|p| u8::from(f64::from(*p) >= tau))
        .collect();
    BinaryMask::new(map.height(), map.width(), bits)
}

/// 8-connected component labeling with deterministic raster-scan label
/// order: labels are 1..count in order of each component's first pixel.
pub fn connected_components(mask: &BinaryMask) -> (Vec<u32>, usize) {
    let (h, w) = (mask.height(), mask.width());
    let mut labels = vec![0u32; h * w];
    let mut count = 0u32;
    let mut frontier: Vec<(usize, usize)> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) == 1 && labels[r * w + c] == 0 {
                count += 1;
                labels[r * w + c] = count;
                frontier.push((r, c));
                while let Some((fr, fc)) = frontier.pop() {
                    for dr in -1i64..=1 {
                        for dc in -1i64..=1 {
                            if dr == 0 && dc == 0 {
                                continue;
                            }
                            let nr = fr as i64 + dr;
                            let nc = fc as i64 + dc;
                            if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                                continue;
                            }
                            let (nr, nc) = (nr as usize, nc as usize);
                            if mask.get(nr, nc) == 1 && labels[nr * w + nc] == 0 {
                                labels[nr * w + nc] = count;
                                frontier.push((nr, nc));
                            }
                        }
                    }
                }
            }
        }
    }
    (labels, count as usize)
}

/// Exposed unit edges: each foreground pixel contributes one per 4-neighbor
/// that is background or out of frame.
pub fn boundary_length(mask: &BinaryMask) -> f64 {
    let (h, w) = (mask.height(), mask.width());
    let mut edges = 0u64;
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) != 1 {
                continue;
            }
            let exposed = |nr: i64, nc: i64| -> bool {
                nr < 0
                    || nc < 0
                    || nr >= h as i64
                    || nc >= w as i64
                    || mask.get(nr as usize, nc as usize) == 0
            };
            let (ri, ci) = (r as i64, c as i64);
            edges += u64::from(exposed(ri - 1, ci));
            edges += u64::from(exposed(ri + 1, ci));
            edges += u64::from(exposed(ri, ci - 1));
            edges += u64::from(exposed(ri, ci + 1));
        }
    }
    edges as f64
}

/// Features for the labeling-time model: per threshold, sum boundary and
/// component count over all frames; B and M are means across thresholds.
pub fn stack_features(mean: &HeatmapStack, thresholds: &ThresholdSet) -> Result<StackFeatures> {
    let per_threshold: Vec<Result<(f64, f64, f64)>> =
        util::par_map(thresholds.values(), |&tau| {
            let mut b_total = 0.0;
            let mut m_total = 0.0;
            for map in &mean.maps {
                let mask = threshold(map, tau)?;
                b_total += boundary_length(&mask);
                m_total += connected_components(&mask).1 as f64;
            }
            Ok((tau, b_total, m_total))
        });
    let per_threshold = per_threshold.into_iter().collect::<Result<Vec<_>>>()?;
    let n = per_threshold.len() as f64;
    let b = per_threshold.iter().map(|(_, b, _)| b).sum::<f64>() / n;
    let m = per_threshold.iter().map(|(_, _, m)| m).sum::<f64>() / n;
    Ok(StackFeatures {
        stack_id: mean.stack_id.clone(),
        boundary_length: b,
        component_count: m,
        per_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn mask_from(h: usize, w: usize, ones: &[(usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::zeros(h, w);
        for &(r, c) in ones {
            m.set(r, c, 1);
        }
        m
    }

    #[test]
    fn mean_of_identical_members_is_identity() {
        let hm = HeatmapStack {
            stack_id: "s".into(),
            maps: vec![Frame::constant(4, 4, 0.3)],
        };
        let mean = mean_heatmap(&[hm.clone(), hm.clone(), hm.clone()]).unwrap();
        assert_eq!(mean, hm);
    }

    #[test]
    fn mean_of_zero_and_one_is_half() {
        let a = HeatmapStack {
            stack_id: "s".into(),
            maps: vec![Frame::constant(3, 3, 0.0)],
        };
        let b = HeatmapStack {
            stack_id: "s".into(),
            maps: vec![Frame::constant(3, 3, 1.0)],
        };
        let mean = mean_heatmap(&[a, b]).unwrap();
        assert!(mean.maps[0].pixels().iter().all(|p| (*p - 0.5).abs() < 1e-7));
    }

    #[test]
    fn mean_matches_pointwise_recompute() {
        let mut rng = crate::util::stage_rng(2, "mean-hm");
        let members: Vec<HeatmapStack> = (0..3)
            .map(|_| HeatmapStack {
                stack_id: "r".into(),
                maps: vec![Frame::new(
                    4,
                    4,
                    (0..16).map(|_| rng.gen_range(0.0..1.0)).collect(),
                )
                .unwrap()],
            })
            .collect();
        let mean = mean_heatmap(&members).unwrap();
        for i in 0..16 {
            let expect: f64 = members
                .iter()
                .map(|m| f64::from(m.maps[0].pixels()[i]))
                .sum::<f64>()
                / 3.0;
            assert!((f64::from(mean.maps[0].pixels()[i]) - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        let f = Frame::constant(2, 2, 0.5);
        assert_eq!(threshold(&f, 0.5).unwrap().count_ones(), 4);
        assert_eq!(threshold(&f, 0.500001).unwrap().count_ones(), 0);
        assert!(threshold(&f, 0.0).is_err());
        assert!(threshold(&f, 1.0).is_err());
    }

    #[test]
    fn threshold_matches_elementwise_comparison() {
        let mut rng = crate::util::stage_rng(9, "thr");
        let px: Vec<f32> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let f = Frame::new(8, 8, px.clone()).unwrap();
        let m = threshold(&f, 0.4).unwrap();
        for (i, p) in px.iter().enumerate() {
            assert_eq!(m.bits()[i], u8::from(f64::from(*p) >= 0.4));
        }
    }

    #[test]
    fn empty_mask_has_no_components() {
        let (_, count) = connected_components(&BinaryMask::zeros(8, 8));
        assert_eq!(count, 0);
    }

    #[test]
    fn diagonal_pixels_are_one_component() {
        let m = mask_from(4, 4, &[(1, 1), (2, 2)]);
        let (_, count) = connected_components(&m);
        assert_eq!(count, 1);
    }

    #[test]
    fn labels_are_raster_ordered() {
        let m = mask_from(4, 4, &[(0, 3), (3, 0)]);
        let (labels, count) = connected_components(&m);
        assert_eq!(count, 2);
        assert_eq!(labels[3], 1); // first in raster order
        assert_eq!(labels[12], 2);
    }

    /// Naive 4/8-flood-fill oracle, structured differently from the
    /// implementation: repeated label propagation until fixpoint.
    fn flood_fill_count_oracle(mask: &BinaryMask) -> usize {
        let (h, w) = (mask.height(), mask.width());
        let mut label: Vec<usize> = (0..h * w).collect();
        let mut changed = true;
        while changed {
            changed = false;
            for r in 0..h {
                for c in 0..w {
                    if mask.get(r, c) != 1 {
                        continue;
                    }
                    for dr in -1i64..=1 {
                        for dc in -1i64..=1 {
                            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                            if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                                continue;
                            }
                            let (nr, nc) = (nr as usize, nc as usize);
                            if mask.get(nr, nc) == 1 && label[nr * w + nc] < label[r * w + c] {
                                label[r * w + c] = label[nr * w + nc];
                                changed = true;
                            }
                        }
                    }
                }
            }
        }
        let mut roots = std::collections::HashSet::new();
        for r in 0..h {
            for c in 0..w {
                if mask.get(r, c) == 1 {
                    roots.insert(label[r * w + c]);
                }
            }
        }
        roots.len()
    }

    fn neighbor_scan_boundary_oracle(mask: &BinaryMask) -> f64 {
        let (h, w) = (mask.height(), mask.width());
        let at = |r: i64, c: i64| -> u8 {
            if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
                0
            } else {
                mask.get(r as usize, c as usize)
            }
        };
        let mut edges = 0;
        for r in 0..h as i64 {
            for c in 0..w as i64 {
                if at(r, c) == 1 {
                    for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                        if at(r + dr, c + dc) == 0 {
                            edges += 1;
                        }
                    }
                }
            }
        }
        f64::from(edges)
    }

    #[test]
    fn single_pixel_perimeter_is_four() {
        assert_eq!(boundary_length(&mask_from(3, 3, &[(1, 1)])), 4.0);
    }

    #[test]
    fn solid_rectangle_perimeter() {
        let mut ones = Vec::new();
        for r in 1..3 {
            for c in 1..4 {
                ones.push((r, c));
            }
        }
        assert_eq!(boundary_length(&mask_from(5, 6, &ones)), 10.0);
    }

    #[test]
    fn random_masks_match_oracles() {
        let mut rng = crate::util::stage_rng(13, "morph-oracle");
        for _ in 0..50 {
            let bits: Vec<u8> = (0..256).map(|_| u8::from(rng.gen_bool(0.4))).collect();
            let mask = BinaryMask::new(16, 16, bits).unwrap();
            assert_eq!(
                connected_components(&mask).1,
                flood_fill_count_oracle(&mask)
            );
            assert_eq!(boundary_length(&mask), neighbor_scan_boundary_oracle(&mask));
        }
    }

    #[test]
    fn b_zero_iff_m_zero() {
        let mut rng = crate::util::stage_rng(14, "bm-iff");
        for _ in 0..200 {
            let bits: Vec<u8> = (0..64).map(|_| u8::from(rng.gen_bool(0.05))).collect();
            let mask = BinaryMask::new(8, 8, bits).unwrap();
            let b = boundary_length(&mask);
            let m = connected_components(&mask).1;
            assert_eq!(b == 0.0, m == 0);
        }
    }

    #[test]
    fn all_zero_heatmap_gives_zero_features() {
        let hm = HeatmapStack {
            stack_id: "z".into(),
            maps: vec![Frame::zeros(8, 8); 2],
        };
        let f = stack_features(&hm, &ThresholdSet::default()).unwrap();
        assert_eq!(f.boundary_length, 0.0);
        assert_eq!(f.component_count, 0.0);
    }

    #[test]
    fn threshold_invariant_block_averages_to_itself() {
        let mut map = Frame::zeros(8, 8);
        for r in 2..4 {
            for c in 2..5 {
                map.set(r, c, 1.0);
            }
        }
        let hm = HeatmapStack {
            stack_id: "b".into(),
            maps: vec![map],
        };
        let f = stack_features(&hm, &ThresholdSet::default()).unwrap();
        assert_eq!(f.boundary_length, 10.0);
        assert_eq!(f.component_count, 1.0);
        for (_, b, m) in &f.per_threshold {
            assert_eq!(*b, 10.0);
            assert_eq!(*m, 1.0);
        }
    }

    #[test]
    fn graded_blob_features_match_per_threshold_recompute() {
        let mut map = Frame::zeros(8, 8);
        for r in 0..8 {
            for c in 0..8 {
                map.set(r, c, ((r + c) as f32) / 14.0);
            }
        }
        let hm = HeatmapStack {
            stack_id: "g".into(),
            maps: vec![map.clone(), map.clone()],
        };
        let ts = ThresholdSet::default();
        let f = stack_features(&hm, &ts).unwrap();
        let mut b_sum = 0.0;
        let mut m_sum = 0.0;
        for &tau in ts.values() {
            let mask = threshold(&map, tau).unwrap();
            // two identical frames
            let b = 2.0 * boundary_length(&mask);
            let m = 2.0 * connected_components(&mask).1 as f64;
            b_sum += b;
            m_sum += m;
        }
        assert!((f.boundary_length - b_sum / 3.0).abs() < 1e-9);
        assert!((f.component_count - m_sum / 3.0).abs() < 1e-9);
    }

    #[test]
    fn raising_threshold_never_grows_foreground() {
        let mut rng = crate::util::stage_rng(15, "mono");
        let px: Vec<f32> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let f = Frame::new(8, 8, px).unwrap();
        let mut prev = usize::MAX;
        for tau in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let ones = threshold(&f, tau).unwrap().count_ones();
            assert!(ones <= prev);
            prev = ones;
        }
    }
}
