//! Per-layer k-means codebook training on residuals.
//!
//! Layer `i` is trained on what layers `1..i` leave of the training vectors.
//! A held-out test set is pushed through the same layers (assignment only) and
//! compared against the training distortion to flag layers that overfit.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::seed;
use crate::vq::{mse_slices, Codebook, LayerStack, SampleVector};

/// What to do when a layer's test distortion exceeds `(1 + margin)` times its
/// training distortion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OverfitPolicy {
    /// Keep the layer and mark it in the report.
    #[default]
    Report,
    /// Stop training before the first flagged layer.
    Strict,
    /// Halve the layer's codebook size until it is no longer flagged (or reaches 1).
    Shrink,
}

impl FromStr for OverfitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "report" => Ok(OverfitPolicy::Report),
            "strict" => Ok(OverfitPolicy::Strict),
            "shrink" => Ok(OverfitPolicy::Shrink),
            other => Err(Error::invalid(format!("unknown overfit policy '{other}'"))),
        }
    }
}

impl fmt::Display for OverfitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverfitPolicy::Report => "report",
            OverfitPolicy::Strict => "strict",
            OverfitPolicy::Shrink => "shrink",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub layer_sizes: Vec<usize>,
    pub max_iters: usize,
    /// Lloyd stops once the relative distortion improvement drops below this.
    pub rel_tol: f64,
    pub restarts: usize,
    pub overfit_margin: f64,
    pub policy: OverfitPolicy,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layer_sizes: default_layer_sizes(),
            max_iters: 100,
            rel_tol: 1e-4,
            restarts: 3,
            overfit_margin: 0.10,
            policy: OverfitPolicy::Report,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() {
            return Err(Error::invalid("layer_sizes is empty"));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::invalid("every layer needs at least one codeword"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::invalid("rel_tol must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be >= 1"));
        }
        if !(self.overfit_margin >= 0.0) {
            return Err(Error::invalid("overfit_margin must be >= 0"));
        }
        Ok(())
    }
}

/// Twenty layers: five each of 256, 128, 32 and 16 codewords.
pub fn default_layer_sizes() -> Vec<usize> {
    [256, 128, 32, 16]
        .iter()
        .flat_map(|&k| std::iter::repeat_n(k, 5))
        .collect()
}

/// Parses layer sizes written as comma-separated `KxCOUNT` groups or plain
/// sizes, e.g. `256x5,128x5,32x5,16x5` or `8,4,4`.
pub fn parse_layer_sizes(spec: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, count) = match part.split_once(['x', 'X']) {
            Some((k, c)) => (k.trim(), c.trim()),
            None => (part, "1"),
        };
        let k: usize = k
            .parse()
            .map_err(|_| Error::invalid(format!("bad codebook size in '{part}'")))?;
        let count: usize = count
            .parse()
            .map_err(|_| Error::invalid(format!("bad repeat count in '{part}'")))?;
        if k == 0 || count == 0 {
            return Err(Error::invalid(format!("'{part}' must be positive")));
        }
        out.extend(std::iter::repeat_n(k, count));
    }
    if out.is_empty() {
        return Err(Error::invalid("no layer sizes given"));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct KmeansResult {
    pub codebook: Codebook,
    /// Mean per-dimension MSE of the data against its nearest centroid.
    pub distortion: f64,
    pub iterations: usize,
    /// Distortion after initialization and after every Lloyd iteration of the
    /// winning restart.
    pub history: Vec<f64>,
}

fn check_data(data: &[SampleVector]) -> Result<usize> {
    let n = data
        .first()
        .ok_or_else(|| Error::invalid("no training vectors"))?
        .len();
    for x in data {
        check_dim(n, x.len())?;
    }
    Ok(n)
}

/// Best of `cfg.restarts` Lloyd runs from k-means++ seeding.
pub fn kmeans(data: &[SampleVector], k: usize, cfg: &TrainConfig) -> Result<KmeansResult> {
    let n = check_data(data)?;
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if k > data.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the number of training vectors ({})",
            data.len()
        )));
    }
    if cfg.max_iters == 0 || cfg.restarts == 0 || !(cfg.rel_tol > 0.0) {
        return Err(Error::invalid("invalid k-means configuration"));
    }
    let mut best: Option<KmeansResult> = None;
    for r in 0..cfg.restarts {
        let mut rng = seed::rng(cfg.seed, &[seed::KMEANS, k as u64, r as u64]);
        let run = lloyd(data, n, k, cfg, &mut rng)?;
        if best.as_ref().is_none_or(|b| run.distortion < b.distortion) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

fn assign(data: &[SampleVector], cb: &Codebook) -> Vec<(usize, f64)> {
    data.par_iter().map(|x| cb.nearest_slice(x.as_slice())).collect()
}

fn mean_of(assignments: &[(usize, f64)]) -> f64 {
    assignments.iter().map(|a| a.1).sum::<f64>() / assignments.len() as f64
}

fn plus_plus_init(data: &[SampleVector], n: usize, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k * n);
    let first = rng.random_range(0..data.len());
    centroids.extend_from_slice(data[first].as_slice());
    let mut nearest: Vec<f64> = data
        .par_iter()
        .map(|x| mse_slices(x.as_slice(), &centroids[..n]))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = nearest.len() - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // Rounding can land on a zero-weight point; walk back to one with mass.
            if nearest[chosen] == 0.0 {
                chosen = nearest.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            // Every point coincides with a centroid already.
            c % data.len()
        };
        centroids.extend_from_slice(data[pick].as_slice());
        let latest = &centroids[c * n..(c + 1) * n];
        nearest
            .par_iter_mut()
            .zip(data.par_iter())
            .for_each(|(d, x)| *d = d.min(mse_slices(x.as_slice(), latest)));
    }
    centroids
}

fn lloyd(
    data: &[SampleVector],
    n: usize,
    k: usize,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<KmeansResult> {
    let mut centroids = plus_plus_init(data, n, k, rng);
    let mut cb = Codebook::new(k, n, centroids.clone())?;
    let mut assignments = assign(data, &cb);
    let mut distortion = mean_of(&assignments);
    let mut history = vec![distortion];
    let mut iterations = 0;

    while iterations < cfg.max_iters && distortion > 0.0 {
        iterations += 1;
        update_centroids(data, n, k, &assignments, &mut centroids);
        cb = Codebook::new(k, n, centroids.clone())?;
        assignments = assign(data, &cb);
        let next = mean_of(&assignments);
        let improvement = (distortion - next) / distortion;
        distortion = next;
        history.push(distortion);
        if improvement < cfg.rel_tol {
            break;
        }
    }
    Ok(KmeansResult {
        codebook: cb,
        distortion,
        iterations,
        history,
    })
}

/// Moves each centroid to the mean of its members, summing in data order.
/// Empty clusters take the points farthest from their current centroids.
fn update_centroids(
    data: &[SampleVector],
    n: usize,
    k: usize,
    assignments: &[(usize, f64)],
    centroids: &mut [f64],
) {
    let mut sums = vec![0.0; k * n];
    let mut counts = vec![0usize; k];
    for (x, &(w, _)) in data.iter().zip(assignments) {
        counts[w] += 1;
        for (s, v) in sums[w * n..(w + 1) * n].iter_mut().zip(x.as_slice()) {
            *s += v;
        }
    }
    let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    if !empty.is_empty() {
        let mut order: Vec<usize> = (0..data.len()).collect();
        // Farthest first; equal distances keep data order.
        order.sort_by(|&a, &b| assignments[b].1.total_cmp(&assignments[a].1).then(a.cmp(&b)));
        for (&c, &i) in empty.iter().zip(&order) {
            sums[c * n..(c + 1) * n].copy_from_slice(data[i].as_slice());
            counts[c] = 1;
        }
    }
    for c in 0..k {
        let inv = counts[c] as f64;
        for (dst, s) in centroids[c * n..(c + 1) * n]
            .iter_mut()
            .zip(&sums[c * n..(c + 1) * n])
        {
            *dst = s / inv;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerReport {
    pub layer: usize,
    pub k: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    /// Variance of this layer's input residuals (the `k = 1` distortion).
    pub input_variance: f64,
    pub iterations: usize,
    pub ratio: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub layers: Vec<LayerReport>,
    /// Set when the strict policy stopped training early.
    pub stopped_at: Option<usize>,
}

impl TrainReport {
    /// CSV with header `layer,k,train_mse,test_mse,ratio,flagged`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["layer", "k", "train_mse", "test_mse", "ratio", "flagged"])?;
        for r in &self.layers {
            out.write_record([
                r.layer.to_string(),
                r.k.to_string(),
                r.train_mse.to_string(),
                r.test_mse.to_string(),
                r.ratio.to_string(),
                r.flagged.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn overfit_ratio(train: f64, test: f64) -> f64 {
    if train > 0.0 {
        test / train
    } else if test == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

fn per_dim_variance(data: &[Vec<f64>]) -> f64 {
    let n = data[0].len();
    let m = data.len() as f64;
    let mut mean = vec![0.0; n];
    for x in data {
        for (a, v) in mean.iter_mut().zip(x) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m);
    data.iter().map(|x| mse_slices(x, &mean)).sum::<f64>() / m
}

/// Applies `cb` to every residual in place and returns the mean new MSE.
fn apply_layer(cb: &Codebook, residuals: &mut [Vec<f64>]) -> f64 {
    let d: Vec<f64> = residuals
        .par_iter_mut()
        .map(|r| {
            let (w, d) = cb.nearest_slice(r);
            for (rj, c) in r.iter_mut().zip(cb.codeword(w)) {
                *rj -= c;
            }
            d
        })
        .collect();
    d.iter().sum::<f64>() / d.len() as f64
}

fn to_vectors(rows: &[Vec<f64>]) -> Vec<SampleVector> {
    rows.iter()
        .map(|r| SampleVector::new(r.clone()).expect("residuals stay finite"))
        .collect()
}

/// Trains `cfg.layer_sizes.len()` layers on `train`, tracking `test` alongside.
pub fn train_multilayer(
    train: &[SampleVector],
    test: &[SampleVector],
    cfg: &TrainConfig,
) -> Result<(LayerStack, TrainReport)> {
    cfg.validate()?;
    let n = check_data(train)?;
    let tn = check_data(test)?;
    check_dim(n, tn)?;

    let mut train_res: Vec<Vec<f64>> = train.iter().map(|x| x.as_slice().to_vec()).collect();
    let mut test_res: Vec<Vec<f64>> = test.iter().map(|x| x.as_slice().to_vec()).collect();
    let mut layers = Vec::new();
    let mut report = TrainReport::default();

    for (i, &requested) in cfg.layer_sizes.iter().enumerate() {
        let layer_cfg = TrainConfig {
            seed: seed::derive(cfg.seed, &[i as u64]),
            ..cfg.clone()
        };
        let inputs = to_vectors(&train_res);
        let input_variance = per_dim_variance(&train_res);
        let mut k = requested;
        let (cb, iterations, train_mse, test_mse, new_train, new_test) = loop {
            let fit = kmeans(&inputs, k, &layer_cfg)?;
            let mut tr = train_res.clone();
            let mut te = test_res.clone();
            let train_mse = apply_layer(&fit.codebook, &mut tr);
            let test_mse = apply_layer(&fit.codebook, &mut te);
            let flagged = test_mse > (1.0 + cfg.overfit_margin) * train_mse;
            if flagged && cfg.policy == OverfitPolicy::Shrink && k > 1 {
                k /= 2;
                continue;
            }
            break (fit.codebook, fit.iterations, train_mse, test_mse, tr, te);
        };
        let ratio = overfit_ratio(train_mse, test_mse);
        let flagged = test_mse > (1.0 + cfg.overfit_margin) * train_mse;
        if flagged && cfg.policy == OverfitPolicy::Strict {
            if layers.is_empty() {
                return Err(Error::Overfit { layer: 1, ratio });
            }
            report.stopped_at = Some(i + 1);
            break;
        }
        report.layers.push(LayerReport {
            layer: i + 1,
            k,
            train_mse,
            test_mse,
            input_variance,
            iterations,
            ratio,
            flagged,
        });
        layers.push(cb);
        train_res = new_train;
        test_res = new_test;
    }

    let train_d = report.layers.iter().map(|r| r.train_mse).collect();
    let test_d = report.layers.iter().map(|r| r.test_mse).collect();
    let stack = LayerStack::new(layers)?
        .with_train_distortion(train_d)?
        .with_test_distortion(test_d)?;
    Ok((stack, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sv(v: &[f64]) -> SampleVector {
        SampleVector::new(v.to_vec()).unwrap()
    }

    fn cfg(sizes: Vec<usize>) -> TrainConfig {
        TrainConfig {
            layer_sizes: sizes,
            ..TrainConfig::default()
        }
    }

    fn cloud(rng: &mut ChaCha8Rng, count: usize, n: usize) -> Vec<SampleVector> {
        (0..count)
            .map(|_| sv(&(0..n).map(|_| rng.random_range(0.0..255.0)).collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn parses_layer_sizes() {
        assert_eq!(parse_layer_sizes("256x5,128x5,32x5,16x5").unwrap(), default_layer_sizes());
        assert_eq!(parse_layer_sizes("2x1").unwrap(), vec![2]);
        assert_eq!(parse_layer_sizes("8, 4,4").unwrap(), vec![8, 4, 4]);
        assert!(parse_layer_sizes("").is_err());
        assert!(parse_layer_sizes("0x3").is_err());
        assert!(parse_layer_sizes("4xq").is_err());
        assert_eq!(default_layer_sizes().len(), 20);
    }

    #[test]
    fn two_separated_clusters() {
        let pts = [
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [1.0, 1.0],
            [100.0, 100.0],
            [101.0, 100.0],
            [100.0, 101.0],
            [101.0, 101.0],
        ];
        let data: Vec<_> = pts.iter().map(|p| sv(p)).collect();
        let fit = kmeans(&data, 2, &cfg(vec![2])).unwrap();
        let mut cents: Vec<Vec<f64>> = (0..2).map(|w| fit.codebook.codeword(w).to_vec()).collect();
        cents.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cents, vec![vec![0.5, 0.5], vec![100.5, 100.5]]);
        // Each point is 0.5 away from its mean in both coordinates.
        assert!((fit.distortion - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_centroid_is_grand_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = cloud(&mut rng, 50, 3);
        let fit = kmeans(&data, 1, &cfg(vec![1])).unwrap();
        let rows: Vec<Vec<f64>> = data.iter().map(|x| x.as_slice().to_vec()).collect();
        for j in 0..3 {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / 50.0;
            assert!((fit.codebook.codeword(0)[j] - m).abs() < 1e-9);
        }
        assert!((fit.distortion - per_dim_variance(&rows)).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = vec![sv(&[1.0, 2.0]), sv(&[3.0, 4.0])];
        assert!(kmeans(&data, 3, &cfg(vec![3])).is_err());
        assert!(kmeans(&data, 0, &cfg(vec![1])).is_err());
        assert!(kmeans(&[], 1, &cfg(vec![1])).is_err());
        assert!(kmeans(&[sv(&[1.0]), sv(&[1.0, 2.0])], 1, &cfg(vec![1])).is_err());
        assert!(train_multilayer(&data, &[sv(&[1.0])], &cfg(vec![1])).is_err());
        assert!(train_multilayer(&data, &data, &cfg(vec![])).is_err());
    }

    #[test]
    fn lloyd_history_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = cloud(&mut rng, 400, 6);
        for k in [2, 7, 31] {
            let fit = kmeans(&data, k, &cfg(vec![k])).unwrap();
            for w in fit.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", fit.history);
            }
            assert_eq!(*fit.history.last().unwrap(), fit.distortion);
        }
    }

    #[test]
    fn duplicate_points_do_not_break_seeding() {
        let data = vec![sv(&[1.0, 1.0]); 5];
        let fit = kmeans(&data, 3, &cfg(vec![3])).unwrap();
        assert_eq!(fit.distortion, 0.0);
    }

    #[test]
    fn empty_clusters_take_farthest_points() {
        let data = vec![sv(&[0.0]), sv(&[1.0]), sv(&[10.0])];
        let assignments = vec![(0, 0.25), (0, 0.25), (0, 90.25)];
        let mut centroids = vec![0.5, 50.0];
        update_centroids(&data, 1, 2, &assignments, &mut centroids);
        assert_eq!(centroids, vec![11.0 / 3.0, 10.0]);
    }

    #[test]
    fn grand_mean_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train = cloud(&mut rng, 80, 4);
        let test = cloud(&mut rng, 20, 4);
        let (stack, report) = train_multilayer(&train, &test, &cfg(vec![1])).unwrap();
        let rows: Vec<Vec<f64>> = train.iter().map(|x| x.as_slice().to_vec()).collect();
        assert_eq!(stack.depth(), 1);
        assert!((report.layers[0].train_mse - per_dim_variance(&rows)).abs() < 1e-9);
    }

    #[test]
    fn identical_train_and_test_never_flag() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = cloud(&mut rng, 200, 4);
        let mut c = cfg(vec![8, 4, 4, 2]);
        c.overfit_margin = 1e-9;
        let (_, report) = train_multilayer(&data, &data, &c).unwrap();
        for r in &report.layers {
            assert_eq!(r.ratio, 1.0);
            assert!(!r.flagged);
        }
    }

    #[test]
    fn residual_layers_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let train = cloud(&mut rng, 300, 4);
        let test = cloud(&mut rng, 60, 4);
        let (stack, report) = train_multilayer(&train, &test, &cfg(vec![16, 8, 8, 4, 2])).unwrap();
        let mut prev = f64::INFINITY;
        for r in &report.layers {
            assert!(r.train_mse <= prev);
            assert!(r.train_mse <= r.input_variance + 1e-9);
            prev = r.train_mse;
        }
        // Re-encoding the training data through the stack reproduces the report.
        let mut sums = vec![0.0; stack.depth()];
        for x in &train {
            let q = crate::vq::encode_multistage(&stack, x).unwrap();
            for (s, d) in sums.iter_mut().zip(&q.per_layer_distortion) {
                *s += d;
            }
        }
        for (s, r) in sums.iter().zip(&report.layers) {
            assert!((s / train.len() as f64 - r.train_mse).abs() < 1e-9 * r.train_mse.max(1.0));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let train = cloud(&mut rng, 150, 3);
        let test = cloud(&mut rng, 30, 3);
        let c = cfg(vec![8, 4]);
        assert_eq!(
            train_multilayer(&train, &test, &c).unwrap().0,
            train_multilayer(&train, &test, &c).unwrap().0
        );
    }

    #[test]
    fn overfit_policies() {
        // Few training points and a large codebook overfit badly.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let train = cloud(&mut rng, 40, 8);
        let test = cloud(&mut rng, 200, 8);
        let mut c = cfg(vec![2, 32, 2]);
        let (stack, report) = train_multilayer(&train, &test, &c).unwrap();
        assert_eq!(stack.depth(), 3);
        assert!(report.layers[1].flagged);

        c.policy = OverfitPolicy::Strict;
        let first_flag = report.layers.iter().position(|r| r.flagged).unwrap();
        if first_flag == 0 {
            assert!(matches!(
                train_multilayer(&train, &test, &c),
                Err(Error::Overfit { layer: 1, .. })
            ));
        } else {
            let (stack, strict) = train_multilayer(&train, &test, &c).unwrap();
            assert_eq!(stack.depth(), first_flag);
            assert_eq!(strict.stopped_at, Some(first_flag + 1));
        }

        c.policy = OverfitPolicy::Shrink;
        let (stack, shrunk) = train_multilayer(&train, &test, &c).unwrap();
        assert!(stack.layer(1).size() < 32);
        for r in &shrunk.layers {
            assert!(!r.flagged || r.k == 1);
        }
    }

    #[test]
    fn report_csv_header() {
        let report = TrainReport {
            layers: vec![LayerReport {
                layer: 1,
                k: 2,
                train_mse: 0.5,
                test_mse: 0.75,
                input_variance: 1.0,
                iterations: 3,
                ratio: 1.5,
                flagged: true,
            }],
            stopped_at: None,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "layer,k,train_mse,test_mse,ratio,flagged\n1,2,0.5,0.75,1.5,true\n"
        );
    }
}
