//! Binary stack container.
//!
//! Layout (little-endian): magic "ALST", version u16 = 1, flags u16
//! (bit 0 = masks present, bit 1 = raw-valued payload, range unchecked),
//! height u32, width u32, frame_count u32, then frame_count*height*width
//! f32 pixels, then (if bit 0) the same count of u8 mask bytes.
//!
//! The stack id lives in the filename (stem) and the split in the manifest;
//! the container holds only payloads, so a stack can change split without
//! a pixel rewrite.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{BinaryMask, Frame, HeatmapStack, Split, Stack};

const MAGIC: [u8; 4] = *b"ALST";
const VERSION: u16 = 1;
const FLAG_MASKS: u16 = 1;
const FLAG_RAW: u16 = 2;

pub fn save_stack(stack: &Stack, path: &Path) -> Result<()> {
    stack.validate()?;
    for (i, f) in stack.frames.iter().enumerate() {
        if !f.is_probability_valued() {
            return Err(Error::Invariant(format!(
                "stack {}: frame {} holds values outside [0,1]; use save_raw_maps for unbounded payloads",
                stack.id, i
            )));
        }
    }
    let masks = stack.gt_masks.as_deref();
    write_container(
        path,
        stack.height(),
        stack.width(),
        &stack.frames,
        masks,
        false,
    )
}

pub fn load_stack(path: &Path) -> Result<Stack> {
    let (frames, masks, raw) = read_container(path)?;
    if raw {
        return Err(Error::DimensionMismatch {
            path: path.display().to_string(),
            detail: "container holds raw-valued maps, not a stack; use load_raw_maps".into(),
        });
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stack = Stack {
        id,
        frames,
        gt_masks: masks,
        gt_label_time: None,
        split: Split::Pool,
    };
    stack.validate()?;
    Ok(stack)
}

/// Save per-pixel value maps (committee heatmaps, JS uncertainty maps) in
/// the same container with the raw flag set: no [0,1] range check.
pub fn save_raw_maps(maps: &HeatmapStack, path: &Path) -> Result<()> {
    if maps.maps.is_empty() {
        return Err(Error::Invariant("no maps to save".into()));
    }
    let (h, w) = (maps.maps[0].height(), maps.maps[0].width());
    for m in &maps.maps {
        if m.height() != h || m.width() != w {
            return Err(Error::Invariant("map dimensions inconsistent".into()));
        }
    }
    write_container(path, h, w, &maps.maps, None, true)
}

pub fn load_raw_maps(path: &Path) -> Result<HeatmapStack> {
    let (frames, _, _) = read_container(path)?;
    let stack_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(HeatmapStack {
        stack_id,
        maps: frames,
    })
}

fn write_container(
    path: &Path,
    height: usize,
    width: usize,
    frames: &[Frame],
    masks: Option<&[BinaryMask]>,
    raw: bool,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);

    let mut flags = 0u16;
    if masks.is_some() {
        flags |= FLAG_MASKS;
    }
    if raw {
        flags |= FLAG_RAW;
    }

    out.write_all(&MAGIC).map_err(io_err)?;
    out.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    out.write_all(&flags.to_le_bytes()).map_err(io_err)?;
    out.write_all(&(height as u32).to_le_bytes()).map_err(io_err)?;
    out.write_all(&(width as u32).to_le_bytes()).map_err(io_err)?;
    out.write_all(&(frames.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    for f in frames {
        for p in f.pixels() {
            out.write_all(&p.to_le_bytes()).map_err(io_err)?;
        }
    }
    if let Some(masks) = masks {
        for m in masks {
            out.write_all(m.bits()).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

#[allow(clippy::type_complexity)]
fn read_container(path: &Path) -> Result<(Vec<Frame>, Option<Vec<BinaryMask>>, bool)> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut input = BufReader::new(file);
    let io_err = |e| Error::io(display.clone(), e);

    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(io_err)?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: display,
            expected: MAGIC,
            got: magic,
        });
    }
    let version = read_u16(&mut input, &display)?;
    if version != VERSION {
        return Err(Error::BadVersion {
            path: display,
            got: version,
        });
    }
    let flags = read_u16(&mut input, &display)?;
    let height = read_u32(&mut input, &display)? as usize;
    let width = read_u32(&mut input, &display)? as usize;
    let frame_count = read_u32(&mut input, &display)? as usize;
    if height == 0 || width == 0 || frame_count == 0 {
        return Err(Error::DimensionMismatch {
            path: display,
            detail: format!("declared {frame_count} frames of {height}x{width}"),
        });
    }

    let raw = flags & FLAG_RAW != 0;
    let px_per_frame = height * width;
    let mut frames = Vec::with_capacity(frame_count);
    let mut buf = vec![0u8; px_per_frame * 4];
    for fi in 0..frame_count {
        input.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::DimensionMismatch {
                    path: display.clone(),
                    detail: format!("pixel payload truncated at frame {fi}"),
                }
            } else {
                Error::io(display.clone(), e)
            }
        })?;
        let mut pixels = Vec::with_capacity(px_per_frame);
        for (i, chunk) in buf.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !raw && !(0.0..=1.0).contains(&v) {
                return Err(Error::ProbabilityOutOfRange {
                    path: display,
                    index: fi * px_per_frame + i,
                    value: v,
                });
            }
            pixels.push(v);
        }
        frames.push(Frame::new(height, width, pixels)?);
    }

    let masks = if flags & FLAG_MASKS != 0 {
        let mut masks = Vec::with_capacity(frame_count);
        let mut mbuf = vec![0u8; px_per_frame];
        for fi in 0..frame_count {
            input.read_exact(&mut mbuf).map_err(|e| {
                if e.kind() == std::io::ErrorKind::UnexpectedEof {
                    Error::DimensionMismatch {
                        path: display.clone(),
                        detail: format!("mask payload truncated at frame {fi}"),
                    }
                } else {
                    Error::io(display.clone(), e)
                }
            })?;
            masks.push(BinaryMask::new(height, width, mbuf.clone())?);
        }
        Some(masks)
    } else {
        None
    };

    // trailing garbage means the header lied about dimensions
    let mut extra = [0u8; 1];
    match input.read(&mut extra).map_err(io_err)? {
        0 => {}
        _ => {
            return Err(Error::DimensionMismatch {
                path: display,
                detail: "trailing bytes after declared payload".into(),
            })
        }
    }

    Ok((frames, masks, raw))
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
