//! Vectors, codebooks and the additive multi-stage quantizer.
//!
//! A [`LayerStack`] holds `L` codebooks over the same dimension `n`. Encoding is
//! greedy and sequential: each stage picks the nearest codeword to the residual
//! left by the previous stages and subtracts it. Decoding is a sum of table
//! lookups, so any prefix of the index list is itself a valid (coarser) code.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};

/// Number of codewords scanned together by the nearest-neighbour kernel.
///
/// Codewords are stored interleaved in groups of this size so that the inner
/// loop runs across codewords. Every codeword still accumulates its squared
/// error sequentially over dimensions, so the result is bit-identical to a
/// plain per-codeword loop.
const LANES: usize = 8;

/// A real vector of length `n >= 1` with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleVector(Vec<f64>);

impl SampleVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("sample vector must have length >= 1"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite entry at position {pos}")));
        }
        Ok(SampleVector(values))
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "sample vector must have length >= 1");
        SampleVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for SampleVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Mean squared error `(1/n) * sum (a_j - b_j)^2`, accumulated in index order.
pub fn mse(a: &SampleVector, b: &SampleVector) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(mse_slices(a.as_slice(), b.as_slice()))
}

pub(crate) fn mse_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc / a.len() as f64
}

/// `k` codewords of dimension `n`, stored row-major.
#[derive(Clone, Debug)]
pub struct Codebook {
    k: usize,
    n: usize,
    rows: Vec<f64>,
    interleaved: Vec<f64>,
}

impl PartialEq for Codebook {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.n == other.n && self.rows == other.rows
    }
}

impl Codebook {
    /// Builds a codebook from `k * n` row-major values.
    pub fn new(k: usize, n: usize, rows: Vec<f64>) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(Error::invalid(format!(
                "codebook shape must be positive, got k={k}, n={n}"
            )));
        }
        if rows.len() != k * n {
            return Err(Error::DimensionMismatch {
                expected: k * n,
                found: rows.len(),
            });
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("codebook entries must be finite"));
        }
        let interleaved = interleave(k, n, &rows);
        Ok(Codebook {
            k,
            n,
            rows,
            interleaved,
        })
    }

    pub fn from_codewords(codewords: &[SampleVector]) -> Result<Self> {
        let first = codewords
            .first()
            .ok_or_else(|| Error::invalid("codebook needs at least one codeword"))?;
        let n = first.len();
        let mut rows = Vec::with_capacity(codewords.len() * n);
        for c in codewords {
            check_dim(n, c.len())?;
            rows.extend_from_slice(c.as_slice());
        }
        Codebook::new(codewords.len(), n, rows)
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn codeword(&self, index: usize) -> &[f64] {
        &self.rows[index * self.n..(index + 1) * self.n]
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    /// Bits per dimension, `log2(k) / n`.
    pub fn rate(&self) -> f64 {
        (self.k as f64).log2() / self.n as f64
    }

    /// Index and MSE of the nearest codeword. Ties go to the lowest index.
    pub fn nearest(&self, x: &SampleVector) -> Result<(usize, f64)> {
        check_dim(self.n, x.len())?;
        Ok(self.nearest_slice(x.as_slice()))
    }

    pub(crate) fn nearest_slice(&self, x: &[f64]) -> (usize, f64) {
        debug_assert_eq!(x.len(), self.n);
        let n = self.n;
        let nf = n as f64;
        let mut best = (0, f64::INFINITY);
        for (block, values) in self.interleaved.chunks_exact(n * LANES).enumerate() {
            let mut acc = [0.0f64; LANES];
            for (xj, lane) in x.iter().zip(values.chunks_exact(LANES)) {
                let lane: &[f64; LANES] = lane.try_into().unwrap();
                for l in 0..LANES {
                    let d = xj - lane[l];
                    acc[l] += d * d;
                }
            }
            let base = block * LANES;
            for (l, &s) in acc.iter().enumerate() {
                if base + l >= self.k {
                    break;
                }
                let d = s / nf;
                if d < best.1 {
                    best = (base + l, d);
                }
            }
        }
        best
    }

    /// One residual stage: finds the nearest codeword to `residual`, subtracts it
    /// and adds it to `recon`. Returns the index and the new residual's MSE.
    pub(crate) fn step(&self, residual: &mut [f64], recon: &mut [f64]) -> (usize, f64) {
        let (w, d) = self.nearest_slice(residual);
        let c = self.codeword(w);
        for ((r, y), cj) in residual.iter_mut().zip(recon.iter_mut()).zip(c) {
            *r -= cj;
            *y += cj;
        }
        (w, d)
    }
}

fn interleave(k: usize, n: usize, rows: &[f64]) -> Vec<f64> {
    let blocks = k.div_ceil(LANES);
    let mut out = vec![0.0; blocks * n * LANES];
    for b in 0..blocks {
        for l in 0..LANES {
            // Pad the last block with copies of the final codeword; the strict
            // comparison in the scan means a copy can never displace the original.
            let src = (b * LANES + l).min(k - 1);
            let row = &rows[src * n..(src + 1) * n];
            for (j, v) in row.iter().enumerate() {
                out[(b * n + j) * LANES + l] = *v;
            }
        }
    }
    out
}

/// Index and MSE of the codeword of `cb` nearest to `x`.
pub fn nearest_codeword(cb: &Codebook, x: &SampleVector) -> Result<(usize, f64)> {
    cb.nearest(x)
}

/// The multi-layer model: an ordered list of codebooks of equal dimension.
///
/// `train_distortion` is empty for stacks that were not trained (random
/// codebooks, or stacks loaded from a model file); otherwise it has one entry
/// per layer and is non-increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStack {
    layers: Vec<Codebook>,
    train_distortion: Vec<f64>,
    test_distortion: Option<Vec<f64>>,
}

impl LayerStack {
    pub fn new(layers: Vec<Codebook>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::invalid("a layer stack needs at least one layer"))?;
        let n = first.dim();
        for cb in &layers {
            check_dim(n, cb.dim())?;
        }
        Ok(LayerStack {
            layers,
            train_distortion: Vec::new(),
            test_distortion: None,
        })
    }

    pub fn with_train_distortion(mut self, d: Vec<f64>) -> Result<Self> {
        check_dim(self.depth(), d.len())?;
        if d.windows(2).any(|w| w[1] > w[0] + 1e-12 * w[0].abs().max(1.0)) {
            return Err(Error::invalid("train distortion must be non-increasing"));
        }
        self.train_distortion = d;
        Ok(self)
    }

    pub fn with_test_distortion(mut self, d: Vec<f64>) -> Result<Self> {
        check_dim(self.depth(), d.len())?;
        self.test_distortion = Some(d);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.layers[0].dim()
    }

    /// Number of layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Codebook] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &Codebook {
        &self.layers[i]
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Codebook::size).collect()
    }

    pub fn train_distortion(&self) -> &[f64] {
        &self.train_distortion
    }

    pub fn test_distortion(&self) -> Option<&[f64]> {
        self.test_distortion.as_deref()
    }

    /// Total rate in bits per dimension, the sum of the per-layer rates.
    pub fn total_rate(&self) -> f64 {
        self.layers.iter().map(Codebook::rate).sum()
    }

    /// `log2` of the equivalent single-codebook alphabet, the product of all `k_i`.
    pub fn log2_equivalent_alphabet(&self) -> f64 {
        self.layers.iter().map(|cb| (cb.size() as f64).log2()).sum()
    }

    /// The first `j` layers as a stack of their own.
    pub fn prefix(&self, j: usize) -> Result<LayerStack> {
        if j == 0 || j > self.depth() {
            return Err(Error::invalid(format!(
                "prefix length {j} outside 1..={}",
                self.depth()
            )));
        }
        let mut out = LayerStack::new(self.layers[..j].to_vec())?;
        if !self.train_distortion.is_empty() {
            out.train_distortion = self.train_distortion[..j].to_vec();
        }
        out.test_distortion = self.test_distortion.as_ref().map(|d| d[..j].to_vec());
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizationResult {
    pub indices: Vec<usize>,
    pub reconstruction: SampleVector,
    pub residual: SampleVector,
    /// MSE of the residual after each layer.
    pub per_layer_distortion: Vec<f64>,
}

/// Greedy sequential encoding through every layer of `stack`.
pub fn encode_multistage(stack: &LayerStack, x: &SampleVector) -> Result<QuantizationResult> {
    check_dim(stack.dim(), x.len())?;
    let mut residual = x.as_slice().to_vec();
    let mut recon = vec![0.0; x.len()];
    let mut indices = Vec::with_capacity(stack.depth());
    let mut per_layer_distortion = Vec::with_capacity(stack.depth());
    for cb in stack.layers() {
        let (w, d) = cb.step(&mut residual, &mut recon);
        indices.push(w);
        per_layer_distortion.push(d);
    }
    Ok(QuantizationResult {
        indices,
        reconstruction: SampleVector(recon),
        residual: SampleVector(residual),
        per_layer_distortion,
    })
}

/// Encodes many vectors in parallel. Output order matches input order.
pub fn encode_batch(stack: &LayerStack, xs: &[SampleVector]) -> Result<Vec<QuantizationResult>> {
    xs.par_iter().map(|x| encode_multistage(stack, x)).collect()
}

/// Sums the codewords selected by `indices` over the first `indices.len()` layers.
pub fn decode_multistage(stack: &LayerStack, indices: &[usize]) -> Result<SampleVector> {
    if indices.len() > stack.depth() {
        return Err(Error::invalid(format!(
            "{} indices for a {}-layer stack",
            indices.len(),
            stack.depth()
        )));
    }
    let mut recon = vec![0.0; stack.dim()];
    for (layer, (&w, cb)) in indices.iter().zip(stack.layers()).enumerate() {
        if w >= cb.size() {
            return Err(Error::IndexOutOfRange {
                layer,
                index: w,
                size: cb.size(),
            });
        }
        for (y, c) in recon.iter_mut().zip(cb.codeword(w)) {
            *y += c;
        }
    }
    Ok(SampleVector(recon))
}
