//! Binary tensor dumps and netpbm renders.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{ChannelStack, Shape};

pub const LFT1_MAGIC: &[u8; 4] = b"LFT1";
pub const LFT1_HEADER_LEN: usize = 16;

/// Render colors per cell type: tumor green, lymphocyte red, stromal blue,
/// then extra colors for datasets with more types.
pub const PALETTE: [[u8; 3]; 8] = [
    [0, 255, 0],
    [255, 0, 0],
    [0, 0, 255],
    [255, 255, 0],
    [255, 0, 255],
    [0, 255, 255],
    [255, 128, 0],
    [255, 255, 255],
];

/// Encodes a tensor as `LFT1` + u32 channels/height/width + little-endian f32 data.
pub fn encode_lft1(stack: &ChannelStack) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(LFT1_HEADER_LEN + 4 * stack.len());
    out.extend_from_slice(LFT1_MAGIC);
    for dim in [stack.channels(), stack.height(), stack.width()] {
        let v = u32::try_from(dim)
            .map_err(|_| Error::Format(format!("dimension {dim} exceeds u32")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in stack.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_lft1(bytes: &[u8]) -> Result<ChannelStack> {
    if bytes.len() < LFT1_HEADER_LEN || &bytes[..4] != LFT1_MAGIC {
        return Err(Error::Format("missing LFT1 header".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let shape = Shape::new(dim(1), dim(2), dim(3));
    let body = &bytes[LFT1_HEADER_LEN..];
    if body.len() != 4 * shape.len() {
        return Err(Error::Format(format!(
            "LFT1 body has {} bytes, expected {} for shape {shape}",
            body.len(),
            4 * shape.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ChannelStack::from_vec(shape, data)
}

pub fn write_lft1(path: &Path, stack: &ChannelStack) -> Result<()> {
    fs::write(path, encode_lft1(stack)?).map_err(|e| Error::io(path, e))
}

pub fn read_lft1(path: &Path) -> Result<ChannelStack> {
    decode_lft1(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary PGM of one plane; values are clamped to [0, 1] and scaled to 0..255.
pub fn encode_pgm(plane: &[f64], height: usize, width: usize) -> Result<Vec<u8>> {
    if plane.len() != height * width {
        return Err(Error::ShapeMismatch {
            expected: format!("{height}x{width}"),
            actual: format!("{} values", plane.len()),
        });
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(plane.iter().map(|&v| to_byte(v)));
    Ok(out)
}

/// Binary PPM composite of layout channels on a black background. Each pixel at
/// or above `threshold` in channel `c` takes `PALETTE[c]`; overlapping types
/// combine by per-component maximum.
pub fn encode_ppm(layout: &ChannelStack, threshold: f64) -> Result<Vec<u8>> {
    if layout.channels() > PALETTE.len() {
        return Err(Error::arg(format!(
            "at most {} cell types can be rendered, got {}",
            PALETTE.len(),
            layout.channels()
        )));
    }
    let (h, w) = (layout.height(), layout.width());
    let mut rgb = vec![0u8; 3 * h * w];
    for c in 0..layout.channels() {
        for (p, &v) in layout.channel(c).iter().enumerate() {
            if v >= threshold {
                for k in 0..3 {
                    rgb[3 * p + k] = rgb[3 * p + k].max(PALETTE[c][k]);
                }
            }
        }
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(rgb);
    Ok(out)
}

pub fn write_pgm(path: &Path, plane: &[f64], height: usize, width: usize) -> Result<()> {
    fs::write(path, encode_pgm(plane, height, width)?).map_err(|e| Error::io(path, e))
}

pub fn write_ppm(path: &Path, layout: &ChannelStack, threshold: f64) -> Result<()> {
    fs::write(path, encode_ppm(layout, threshold)?).map_err(|e| Error::io(path, e))
}
