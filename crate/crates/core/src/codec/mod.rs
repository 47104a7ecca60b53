//! Block image codec.
//!
//! An image is cut into `b x b` blocks (`b^2 = n`), every block is encoded
//! greedily through the model's layers, and each layer's indices are
//! arithmetic-coded with that layer's frequency table. Decoding any prefix of
//! the layer payloads yields a progressively refined image.

mod bitstream;
mod blocks;
mod image;

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

pub use bitstream::{Bitstream, HEADER_LEN, STREAM_MAGIC, STREAM_VERSION};
pub use blocks::{assemble_blocks, extract_blocks, to_pixel, BlockGrid};
pub use image::GrayImage;

use crate::entropy::{ac_decode, ac_encode, train_tables};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::seed;
use crate::trainer::{train_multilayer, TrainConfig, TrainReport};
use crate::vq::{decode_multistage, encode_batch, LayerStack, SampleVector};

/// Default block edge in pixels.
pub const DEFAULT_BLOCK: usize = 8;

/// Indices of every block at one layer, in raster order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexPlane {
    pub layer: usize,
    pub indices: Vec<u32>,
}

fn block_size_for(stack: &LayerStack) -> Result<usize> {
    let n = stack.dim();
    let b = (n as f64).sqrt().round() as usize;
    if b * b != n || b > u8::MAX as usize {
        return Err(Error::invalid(format!(
            "model dimension {n} is not the square of a block size up to 255"
        )));
    }
    Ok(b)
}

/// Encodes `blocks` through the first `layers` layers and returns one index
/// plane per layer.
pub fn index_planes(stack: &LayerStack, blocks: &[SampleVector], layers: usize) -> Result<Vec<IndexPlane>> {
    if layers > stack.depth() {
        return Err(Error::invalid(format!(
            "requested {layers} layers from a {}-layer model",
            stack.depth()
        )));
    }
    let codes = encode_batch(stack, blocks)?;
    Ok((0..layers)
        .map(|layer| IndexPlane {
            layer,
            indices: codes.iter().map(|c| c.indices[layer] as u32).collect(),
        })
        .collect())
}

/// Encodes `img` with the first `layers` layers of `model`.
pub fn encode_image(img: &GrayImage, model: &Model, layers: usize) -> Result<Bitstream> {
    let stack = model.stack();
    let b = block_size_for(stack)?;
    if layers > stack.depth() || layers > u8::MAX as usize {
        return Err(Error::invalid(format!(
            "cannot emit {layers} layers from a {}-layer model (format limit 255)",
            stack.depth()
        )));
    }
    let width = u32::try_from(img.width()).map_err(|_| Error::invalid("image too wide"))?;
    let height = u32::try_from(img.height()).map_err(|_| Error::invalid("image too tall"))?;
    let (blocks, _) = extract_blocks(img, b)?;
    let planes = index_planes(stack, &blocks, layers)?;
    let payloads = planes
        .par_iter()
        .map(|p| ac_encode(&p.indices, &model.tables()[p.layer]))
        .collect::<Result<Vec<_>>>()?;
    Ok(Bitstream {
        width,
        height,
        block: b as u8,
        model_hash: model.hash(),
        payloads,
    })
}

/// Entropy-decodes the first `layers` index planes of `bs`.
pub fn decode_index_planes(bs: &Bitstream, model: &Model, layers: usize) -> Result<Vec<IndexPlane>> {
    let found = model.hash();
    if bs.model_hash != found {
        return Err(Error::HashMismatch {
            expected: bs.model_hash,
            found,
        });
    }
    let b = block_size_for(model.stack())?;
    if bs.block as usize != b {
        return Err(Error::invalid(format!(
            "stream uses {}-pixel blocks, model expects {b}",
            bs.block
        )));
    }
    if layers > bs.layers() {
        return Err(Error::invalid(format!(
            "requested {layers} layers from a {}-layer stream",
            bs.layers()
        )));
    }
    if bs.layers() > model.stack().depth() {
        return Err(Error::Format(format!(
            "stream has {} layers, model only {}",
            bs.layers(),
            model.stack().depth()
        )));
    }
    let count = bs.block_count();
    bs.payloads[..layers]
        .par_iter()
        .enumerate()
        .map(|(layer, payload)| {
            let indices = ac_decode(payload, &model.tables()[layer], count)?;
            Ok(IndexPlane { layer, indices })
        })
        .collect()
}

/// Reconstructs the image from the first `layers` payloads of `bs`.
pub fn decode_image(bs: &Bitstream, model: &Model, layers: usize) -> Result<GrayImage> {
    let planes = decode_index_planes(bs, model, layers)?;
    let stack = model.stack();
    let grid = BlockGrid::for_image(bs.width as usize, bs.height as usize, bs.block as usize)?;
    let blocks = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let idx: Vec<usize> = planes.iter().map(|p| p.indices[i] as usize).collect();
            decode_multistage(stack, &idx)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_blocks(&blocks, grid, bs.width as usize, bs.height as usize)
}

/// Encoder-side reconstruction after `layers` layers, before entropy coding.
pub fn reconstruct(img: &GrayImage, stack: &LayerStack, layers: usize) -> Result<GrayImage> {
    let b = block_size_for(stack)?;
    let (blocks, grid) = extract_blocks(img, b)?;
    let planes = index_planes(stack, &blocks, layers)?;
    let recon = (0..blocks.len())
        .map(|i| {
            let idx: Vec<usize> = planes.iter().map(|p| p.indices[i] as usize).collect();
            decode_multistage(stack, &idx)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_blocks(&recon, grid, img.width(), img.height())
}

/// Peak signal-to-noise ratio in dB for 8-bit images; `f64::INFINITY` when identical.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let sse: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(psnr_from_mse(sse / a.pixels().len() as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bpp {
    /// `sum log2(k_i) / b^2` over the layers carried by the stream.
    pub raw: f64,
    /// Payload bits per image pixel. Header and framing are excluded, and
    /// padding pixels do not count towards the denominator.
    pub coded: f64,
}

pub fn bpp(bs: &Bitstream, stack: &LayerStack) -> Result<Bpp> {
    if bs.layers() > stack.depth() {
        return Err(Error::invalid("stream has more layers than the model"));
    }
    let b2 = (bs.block as usize * bs.block as usize) as f64;
    let raw = stack.layers()[..bs.layers()]
        .iter()
        .map(|cb| (cb.size() as f64).log2())
        .sum::<f64>()
        / b2;
    let pixels = bs.width as f64 * bs.height as f64;
    Ok(Bpp {
        raw,
        coded: 8.0 * bs.payload_bytes() as f64 / pixels,
    })
}

/// Trains codebooks on blocks pooled from `train` (tracking `test` for the
/// overfit guard) and fits per-layer frequency tables on the training indices.
pub fn train_image_model(
    train: &[GrayImage],
    test: &[GrayImage],
    block: usize,
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    let pool = |imgs: &[GrayImage]| -> Result<Vec<SampleVector>> {
        let mut out = Vec::new();
        for img in imgs {
            out.extend(extract_blocks(img, block)?.0);
        }
        Ok(out)
    };
    if block > u8::MAX as usize {
        return Err(Error::invalid("block size must be <= 255"));
    }
    let train_blocks = pool(train)?;
    let test_blocks = pool(test)?;
    let (stack, report) = train_multilayer(&train_blocks, &test_blocks, cfg)?;
    let planes = index_planes(&stack, &train_blocks, stack.depth())?;
    let planes: Vec<Vec<u32>> = planes.into_iter().map(|p| p.indices).collect();
    let tables = train_tables(&planes, &stack.layer_sizes())?;
    Ok((Model::new(stack, tables)?, report))
}

/// Seeded shuffle of `0..count` split into (train, test) index lists, with
/// `round(count * train_fraction)` training items. Both sides get at least one
/// item when `count >= 2`; a single item is used for both.
pub fn split_train_test(count: usize, train_fraction: f64, split_seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if count == 0 {
        return Err(Error::invalid("nothing to split"));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::invalid(format!(
            "train fraction must be in [0, 1], got {train_fraction}"
        )));
    }
    if count == 1 {
        return Ok((vec![0], vec![0]));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut seed::rng(split_seed, &[seed::SPLIT]));
    let n_train = ((count as f64 * train_fraction).round() as usize).clamp(1, count - 1);
    let test = order.split_off(n_train);
    Ok((order, test))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRow {
    pub image: String,
    pub layers: usize,
    pub raw_bpp: f64,
    pub coded_bpp: f64,
    pub psnr_db: f64,
}

/// Encodes `img` once with every layer and evaluates each prefix `1..=L`.
pub fn evaluate_image(name: &str, img: &GrayImage, model: &Model) -> Result<Vec<EvalRow>> {
    let depth = model.stack().depth().min(u8::MAX as usize);
    let full = encode_image(img, model, depth)?;
    (1..=depth)
        .map(|j| {
            let bs = full.truncated(j)?;
            let out = decode_image(&bs, model, j)?;
            let rates = bpp(&bs, model.stack())?;
            Ok(EvalRow {
                image: name.to_string(),
                layers: j,
                raw_bpp: rates.raw,
                coded_bpp: rates.coded,
                psnr_db: psnr(img, &out)?,
            })
        })
        .collect()
}

/// CSV with header `image,layers,raw_bpp,coded_bpp,psnr_db`. Identical images
/// are written with `psnr_db = inf`.
pub fn write_eval_csv<W: Write>(rows: &[EvalRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["image", "layers", "raw_bpp", "coded_bpp", "psnr_db"])?;
    for r in rows {
        out.write_record([
            r.image.clone(),
            r.layers.to_string(),
            r.raw_bpp.to_string(),
            r.coded_bpp.to_string(),
            r.psnr_db.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
