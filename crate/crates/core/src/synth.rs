//! Random codebooks for i.i.d. Gaussian sources and the distortion-rate
//! simulations built on them.
//!
//! Codewords are never trained here. Each layer's codebook is drawn fresh from
//! a seed derived from `(master seed, layer)`, with a per-entry variance taken
//! from a [`ScheduleMode`] so that the layer removes the share of residual
//! energy its rate allows.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::seed;
use crate::vq::{Codebook, SampleVector};

/// Largest codebook `simulate_multistage` builds unless told otherwise.
pub const DEFAULT_CODEBOOK_CAP: usize = 1 << 20;

/// Zero-mean i.i.d. Gaussian source of dimension `n` and variance `sigma2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SourceSpec {
    pub n: usize,
    pub sigma2: f64,
    pub seed: u64,
    pub num_samples: usize,
}

impl SourceSpec {
    pub fn new(n: usize, sigma2: f64, seed: u64, num_samples: usize) -> Result<Self> {
        let spec = SourceSpec {
            n,
            sigma2,
            seed,
            num_samples,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("source dimension must be >= 1"));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!(
                "source variance must be positive, got {}",
                self.sigma2
            )));
        }
        if self.num_samples == 0 {
            return Err(Error::invalid("num_samples must be >= 1"));
        }
        Ok(())
    }

    /// Realization `index` of the source; independent of every other index.
    pub fn realization(&self, index: usize) -> SampleVector {
        let mut rng = seed::rng(self.seed, &[seed::SOURCE, index as u64]);
        let sd = self.sigma2.sqrt();
        let values = (0..self.n)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        SampleVector::new(values).expect("finite gaussian draws")
    }

    pub fn realizations(&self) -> Vec<SampleVector> {
        (0..self.num_samples)
            .into_par_iter()
            .map(|i| self.realization(i))
            .collect()
    }
}

/// Distortion-rate function of a Gaussian source, `sigma2 * 2^(-2 rate)`.
pub fn shannon_bound(sigma2: f64, rate: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!("sigma2 must be positive, got {sigma2}")));
    }
    if !(rate >= 0.0) {
        return Err(Error::invalid(format!("rate must be non-negative, got {rate}")));
    }
    Ok(sigma2 * (-2.0 * rate).exp2())
}

/// Rate a Gaussian stage needs to go from distortion `d_prev` to `d_next`,
/// clamped at zero.
pub fn gaussian_stage_rate(d_prev: f64, d_next: f64) -> Result<f64> {
    if !(d_prev > 0.0 && d_next > 0.0) {
        return Err(Error::invalid(format!(
            "distortions must be positive, got {d_prev} and {d_next}"
        )));
    }
    Ok((0.5 * (d_prev / d_next).log2()).max(0.0))
}

/// How codeword variances are assigned to layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    /// Layer `i` gets `D_{i-1} - D_i`, the energy it is expected to remove.
    #[default]
    ResidualEnergy,
    /// Each layer's variance is the previous layer's variance times
    /// `1 - 2^(-2 R_i)`, starting from `sigma2 (1 - 2^(-2 R_1))`.
    #[serde(rename = "eq7-literal")]
    Compounded,
}

impl FromStr for ScheduleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual-energy" => Ok(ScheduleMode::ResidualEnergy),
            "eq7-literal" => Ok(ScheduleMode::Compounded),
            other => Err(Error::invalid(format!("unknown schedule '{other}'"))),
        }
    }
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleMode::ResidualEnergy => "residual-energy",
            ScheduleMode::Compounded => "eq7-literal",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleEntry {
    /// 1-based layer number.
    pub layer: usize,
    pub rate: f64,
    pub codeword_variance: f64,
    pub predicted_distortion: f64,
}

pub fn variance_schedule(sigma2: f64, rates: &[f64], mode: ScheduleMode) -> Result<Vec<ScheduleEntry>> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::invalid(format!("sigma2 must be positive, got {sigma2}")));
    }
    if let Some(r) = rates.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(Error::invalid(format!("rates must be finite and >= 0, got {r}")));
    }
    let mut out = Vec::with_capacity(rates.len());
    let mut d_prev = sigma2;
    let mut var_prev = sigma2;
    for (i, &rate) in rates.iter().enumerate() {
        let shrink = (-2.0 * rate).exp2();
        let d = d_prev * shrink;
        let var = match mode {
            ScheduleMode::ResidualEnergy => d_prev - d,
            ScheduleMode::Compounded => var_prev * (1.0 - shrink),
        };
        out.push(ScheduleEntry {
            layer: i + 1,
            rate,
            codeword_variance: var,
            predicted_distortion: d,
        });
        d_prev = d;
        var_prev = var;
    }
    Ok(out)
}

fn check_shape(k: usize, n: usize, variance: f64) -> Result<()> {
    if k == 0 || n == 0 {
        return Err(Error::invalid(format!(
            "codebook shape must be positive, got k={k}, n={n}"
        )));
    }
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::invalid(format!(
            "codeword variance must be finite and >= 0, got {variance}"
        )));
    }
    Ok(())
}

/// `k` codewords with i.i.d. `N(0, variance)` entries.
///
/// Draws standard normals and scales them, so two calls that differ only in
/// `variance` return proportional codebooks.
pub fn sample_gaussian_codebook(k: usize, n: usize, variance: f64, seed: u64) -> Result<Codebook> {
    check_shape(k, n, variance)?;
    let mut rng = seed::rng(seed, &[]);
    let sd = variance.sqrt();
    let rows = (0..k * n)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Codebook::new(k, n, rows)
}

/// `k` codewords with independent equiprobable `±sqrt(variance)` entries.
pub fn sample_binary_codebook(k: usize, n: usize, variance: f64, seed: u64) -> Result<Codebook> {
    check_shape(k, n, variance)?;
    let mut rng = seed::rng(seed, &[]);
    let alpha = variance.sqrt();
    let mut rows = Vec::with_capacity(k * n);
    while rows.len() < k * n {
        let bits: u64 = rng.random();
        let take = (k * n - rows.len()).min(64);
        rows.extend((0..take).map(|b| if bits >> b & 1 == 1 { alpha } else { -alpha }));
    }
    Codebook::new(k, n, rows)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CodebookFamily {
    #[default]
    Gaussian,
    Binary,
}

impl CodebookFamily {
    pub fn sample(self, k: usize, n: usize, variance: f64, seed: u64) -> Result<Codebook> {
        match self {
            CodebookFamily::Gaussian => sample_gaussian_codebook(k, n, variance, seed),
            CodebookFamily::Binary => sample_binary_codebook(k, n, variance, seed),
        }
    }
}

impl FromStr for CodebookFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(CodebookFamily::Gaussian),
            "binary" => Ok(CodebookFamily::Binary),
            other => Err(Error::invalid(format!("unknown codebook family '{other}'"))),
        }
    }
}

impl fmt::Display for CodebookFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodebookFamily::Gaussian => "gaussian",
            CodebookFamily::Binary => "binary",
        })
    }
}

/// Codebook size for a requested rate: `round(2^(n * rate))`, at least 1.
pub fn codebook_size_for_rate(n: usize, rate: f64, layer: usize, cap: usize) -> Result<usize> {
    if !(rate >= 0.0) {
        return Err(Error::invalid(format!("rate must be non-negative, got {rate}")));
    }
    let k = (n as f64 * rate).exp2().round().max(1.0);
    if !k.is_finite() || k > cap as f64 {
        return Err(Error::Capacity {
            layer,
            requested: k,
            cap,
        });
    }
    Ok(k as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RdRow {
    pub layer: usize,
    pub k: usize,
    pub cum_rate_bits: f64,
    pub distortion: f64,
    /// Standard error of `distortion` as a sample mean.
    pub std_error: f64,
    pub shannon_bound: f64,
}

/// Per-layer distortion-rate record of one simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct RdTrace {
    pub rows: Vec<RdRow>,
}

impl RdTrace {
    /// CSV with header `layer,cum_rate_bits,distortion,shannon_bound`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["layer", "cum_rate_bits", "distortion", "shannon_bound"])?;
        for r in &self.rows {
            out.write_record([
                r.layer.to_string(),
                r.cum_rate_bits.to_string(),
                r.distortion.to_string(),
                r.shannon_bound.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Gap to the Shannon bound in dB at each layer.
    pub fn gap_db(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| 10.0 * (r.distortion / r.shannon_bound).log10())
            .collect()
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn simulate_multistage(
    src: &SourceSpec,
    rates: &[f64],
    family: CodebookFamily,
    mode: ScheduleMode,
) -> Result<RdTrace> {
    simulate_multistage_capped(src, rates, family, mode, DEFAULT_CODEBOOK_CAP)
}

/// Encodes `src.num_samples` source realizations through `rates.len()` random
/// layers and records the mean residual MSE after each layer.
///
/// Layers are generated and applied one at a time, so memory stays at one
/// codebook regardless of depth. The per-layer step is the same one
/// [`crate::vq::encode_multistage`] uses.
pub fn simulate_multistage_capped(
    src: &SourceSpec,
    rates: &[f64],
    family: CodebookFamily,
    mode: ScheduleMode,
    cap: usize,
) -> Result<RdTrace> {
    src.validate()?;
    if rates.is_empty() {
        return Err(Error::invalid("need at least one layer rate"));
    }
    let n = src.n;
    let sizes = rates
        .iter()
        .enumerate()
        .map(|(i, &r)| codebook_size_for_rate(n, r, i + 1, cap))
        .collect::<Result<Vec<_>>>()?;
    let realized: Vec<f64> = sizes.iter().map(|&k| (k as f64).log2() / n as f64).collect();
    let schedule = variance_schedule(src.sigma2, &realized, mode)?;

    let mut residuals: Vec<Vec<f64>> = src.realizations().into_iter().map(|x| x.into_inner()).collect();
    let mut scratch = vec![vec![0.0; n]; residuals.len()];
    let mut rows = Vec::with_capacity(rates.len());
    let mut cum_rate = 0.0;
    for (i, entry) in schedule.iter().enumerate() {
        let cb = family.sample(
            sizes[i],
            n,
            entry.codeword_variance,
            seed::derive(src.seed, &[seed::CODEBOOK, i as u64]),
        )?;
        let dists: Vec<f64> = residuals
            .par_iter_mut()
            .zip(scratch.par_iter_mut())
            .map(|(r, y)| cb.step(r, y).1)
            .collect();
        let (distortion, std_error) = mean_and_stderr(&dists);
        cum_rate += entry.rate;
        rows.push(RdRow {
            layer: i + 1,
            k: sizes[i],
            cum_rate_bits: cum_rate,
            distortion,
            std_error,
            shannon_bound: shannon_bound(src.sigma2, cum_rate)?,
        });
    }
    Ok(RdTrace { rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OrthogonalityStats {
    /// Mean of `(1/n) <x - x̂, x̂>`.
    pub residual_vs_estimate: f64,
    /// Mean of `(1/n) <x - x̂, x>`.
    pub residual_vs_source: f64,
    pub mean_distortion: f64,
}

/// Quantizes the given vectors with `cb` and averages the orthogonality
/// statistics over them.
pub fn orthogonality_of(cb: &Codebook, samples: &[SampleVector]) -> Result<OrthogonalityStats> {
    if samples.is_empty() {
        return Err(Error::invalid("need at least one sample"));
    }
    for x in samples {
        check_dim(cb.dim(), x.len())?;
    }
    let per_sample: Vec<(f64, f64, f64)> = samples
        .par_iter()
        .map(|x| {
            let x = x.as_slice();
            let (w, d) = cb.nearest_slice(x);
            let est = cb.codeword(w);
            let mut re = 0.0;
            let mut rs = 0.0;
            for (xj, ej) in x.iter().zip(est) {
                let e = xj - ej;
                re += e * ej;
                rs += e * xj;
            }
            let n = x.len() as f64;
            (re / n, rs / n, d)
        })
        .collect();
    let m = samples.len() as f64;
    let (a, b, c) = per_sample
        .iter()
        .fold((0.0, 0.0, 0.0), |acc, s| (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2));
    Ok(OrthogonalityStats {
        residual_vs_estimate: a / m,
        residual_vs_source: b / m,
        mean_distortion: c / m,
    })
}

/// Orthogonality statistics of `cb` over `src.num_samples` source realizations.
pub fn orthogonality_statistics(src: &SourceSpec, cb: &Codebook) -> Result<OrthogonalityStats> {
    src.validate()?;
    check_dim(src.n, cb.dim())?;
    orthogonality_of(cb, &src.realizations())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub variance: f64,
    pub distortion: f64,
    pub residual_vs_estimate: f64,
    pub residual_vs_source: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceSweep {
    pub k: usize,
    pub rows: Vec<SweepRow>,
}

impl VarianceSweep {
    /// Row with the lowest mean distortion.
    pub fn argmin(&self) -> &SweepRow {
        self.rows
            .iter()
            .fold(&self.rows[0], |best, r| if r.distortion < best.distortion { r } else { best })
    }

    /// CSV with header `variance,distortion,residual_vs_estimate,residual_vs_source`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `count` evenly spaced variances from 0 to `multiple * sigma2 (1 - 2^(-2R))`
/// with `R = log2(k) / n`.
pub fn default_sweep_variances(src: &SourceSpec, k: usize, multiple: f64, count: usize) -> Vec<f64> {
    let rate = (k as f64).log2() / src.n as f64;
    let top = multiple * src.sigma2 * (1.0 - (-2.0 * rate).exp2());
    if count < 2 {
        return vec![top];
    }
    (0..count)
        .map(|i| top * i as f64 / (count - 1) as f64)
        .collect()
}

/// Distortion and orthogonality of a `k`-word Gaussian codebook as its variance
/// varies. All rows share the source realizations and the underlying standard
/// normal draws, so rows differ only by the scale of the codebook.
pub fn sweep_codebook_variance(src: &SourceSpec, k: usize, variances: &[f64]) -> Result<VarianceSweep> {
    src.validate()?;
    if variances.is_empty() {
        return Err(Error::invalid("variance list is empty"));
    }
    let samples = src.realizations();
    let cb_seed = seed::derive(src.seed, &[seed::SWEEP]);
    let rows = variances
        .iter()
        .map(|&v| {
            let cb = sample_gaussian_codebook(k, src.n, v, cb_seed)?;
            let s = orthogonality_of(&cb, &samples)?;
            Ok(SweepRow {
                variance: v,
                distortion: s.mean_distortion,
                residual_vs_estimate: s.residual_vs_estimate,
                residual_vs_source: s.residual_vs_source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VarianceSweep { k, rows })
}
