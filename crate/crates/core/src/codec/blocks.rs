//! Splitting images into vectorized `b x b` blocks and putting them back.

use crate::error::{Error, Result};
use crate::vq::SampleVector;

use super::image::GrayImage;

/// Block layout of an image after padding to multiples of the block size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockGrid {
    pub cols: usize,
    pub rows: usize,
    pub block: usize,
}

impl BlockGrid {
    pub fn for_image(width: usize, height: usize, block: usize) -> Result<Self> {
        if block == 0 {
            return Err(Error::invalid("block size must be >= 1"));
        }
        Ok(BlockGrid {
            cols: width.div_ceil(block),
            rows: height.div_ceil(block),
            block,
        })
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Blocks in raster order, each vectorized row-major. Right and bottom edges
/// are padded by replicating the last column/row.
pub fn extract_blocks(img: &GrayImage, block: usize) -> Result<(Vec<SampleVector>, BlockGrid)> {
    let grid = BlockGrid::for_image(img.width(), img.height(), block)?;
    let mut out = Vec::with_capacity(grid.len());
    for by in 0..grid.rows {
        for bx in 0..grid.cols {
            let mut v = Vec::with_capacity(block * block);
            for dy in 0..block {
                let y = (by * block + dy).min(img.height() - 1);
                for dx in 0..block {
                    let x = (bx * block + dx).min(img.width() - 1);
                    v.push(img.get(x, y) as f64);
                }
            }
            out.push(SampleVector::new(v)?);
        }
    }
    Ok((out, grid))
}

/// Rounds a reconstructed value to a pixel: half away from zero, then clamped.
pub fn to_pixel(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Inverse of [`extract_blocks`]: rounds, clamps and crops to `width x height`.
pub fn assemble_blocks(
    blocks: &[SampleVector],
    grid: BlockGrid,
    width: usize,
    height: usize,
) -> Result<GrayImage> {
    let b = grid.block;
    if blocks.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: blocks.len(),
        });
    }
    if width == 0 || height == 0 || width.div_ceil(b) != grid.cols || height.div_ceil(b) != grid.rows {
        return Err(Error::invalid(format!(
            "{width}x{height} image does not match a {}x{} grid of {b}-pixel blocks",
            grid.cols, grid.rows
        )));
    }
    if let Some(v) = blocks.iter().find(|v| v.len() != b * b) {
        return Err(Error::DimensionMismatch {
            expected: b * b,
            found: v.len(),
        });
    }
    let mut pixels = vec![0u8; width * height];
    for y in 0..height {
        for x in 0..width {
            let blk = &blocks[(y / b) * grid.cols + x / b];
            pixels[y * width + x] = to_pixel(blk.as_slice()[(y % b) * b + x % b]);
        }
    }
    GrayImage::new(width, height, pixels)
}
