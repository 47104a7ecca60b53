use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mlrq::codec::{
    decode_image, encode_image, evaluate_image, split_train_test, train_image_model, write_eval_csv, Bitstream,
    GrayImage,
};
use mlrq::model::Model;
use mlrq::synth::{default_sweep_variances, simulate_multistage, sweep_codebook_variance, SourceSpec};
use mlrq::trainer::{parse_layer_sizes, TrainConfig};

use crate::args::{Command, DecodeArgs, EncodeArgs, EvalArgs, ReplayArgs, SimulateArgs, SweepArgs, TrainArgs};
use crate::error::CliError;
use crate::manifest::{write_atomic, RunManifest};

type Result<T> = std::result::Result<T, CliError>;

/// What a command produced: files to write, in order, plus the facts the
/// manifest needs.
struct Outcome {
    resolved: Command,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    files: Vec<(PathBuf, Vec<u8>)>,
}

pub fn run(cmd: Command) -> Result<()> {
    if let Command::Replay(args) = cmd {
        return replay(&args);
    }
    let start = Instant::now();
    let outcome = match cmd {
        Command::Simulate(a) => simulate(a)?,
        Command::SweepVariance(a) => sweep(a)?,
        Command::Train(a) => train(a)?,
        Command::Encode(a) => encode(a)?,
        Command::Decode(a) => decode(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Replay(_) => unreachable!(),
    };
    guard_inputs(&outcome)?;
    for (path, bytes) in &outcome.files {
        write_atomic(path, bytes)?;
    }
    let outputs: Vec<PathBuf> = outcome.files.iter().map(|f| f.0.clone()).collect();
    let manifest = RunManifest::new(
        &outcome.resolved,
        outcome.seed,
        outcome.inputs,
        outputs.clone(),
        start.elapsed().as_secs_f64(),
    );
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&RunManifest::path_for(&outputs[0]), &json)
}

fn replay(args: &ReplayArgs) -> Result<()> {
    let mut cmd = RunManifest::load(&args.manifest)?.to_command()?;
    if let Command::Replay(_) = cmd {
        return Err(CliError::Invalid("a manifest cannot replay another replay".into()));
    }
    if let Some(dir) = &args.out_dir {
        let move_to = |p: &mut PathBuf| -> Result<()> {
            let name = p
                .file_name()
                .ok_or_else(|| CliError::Invalid(format!("output {} has no file name", p.display())))?;
            *p = dir.join(name);
            Ok(())
        };
        match &mut cmd {
            Command::Simulate(a) => move_to(&mut a.out)?,
            Command::SweepVariance(a) => move_to(&mut a.out)?,
            Command::Train(a) => {
                move_to(&mut a.out)?;
                if let Some(r) = &mut a.report {
                    move_to(r)?;
                }
            }
            Command::Encode(a) => move_to(&mut a.out)?,
            Command::Decode(a) => move_to(&mut a.out)?,
            Command::Eval(a) => move_to(&mut a.out)?,
            Command::Replay(_) => unreachable!(),
        }
    }
    run(cmd)
}

/// Refuses to overwrite any input file.
fn guard_inputs(outcome: &Outcome) -> Result<()> {
    let inputs: Vec<PathBuf> = outcome.inputs.iter().filter_map(|p| fs::canonicalize(p).ok()).collect();
    for (path, _) in &outcome.files {
        if let Ok(canon) = fs::canonicalize(path) {
            if inputs.contains(&canon) {
                return Err(CliError::Invalid(format!("output {} would overwrite an input", path.display())));
            }
        }
    }
    Ok(())
}

fn with_path(path: &Path) -> impl FnOnce(mlrq::Error) -> CliError + '_ {
    move |e| {
        let msg = format!("{}: {e}", path.display());
        if e.is_io() {
            CliError::Io(msg)
        } else {
            CliError::Invalid(msg)
        }
    }
}

fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).map_err(with_path(path))
}

fn load_image(path: &Path) -> Result<GrayImage> {
    GrayImage::load(path).map_err(with_path(path))
}

/// Expands directories into their `.pgm` files (sorted by name); files pass through.
fn discover_images(entries: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in entries {
        let meta = fs::metadata(entry).map_err(|e| CliError::io(entry, e))?;
        if meta.is_dir() {
            let mut found = Vec::new();
            for item in fs::read_dir(entry).map_err(|e| CliError::io(entry, e))? {
                let path = item.map_err(|e| CliError::io(entry, e))?.path();
                let is_pgm = path
                    .extension()
                    .is_some_and(|x| x.eq_ignore_ascii_case("pgm"));
                if is_pgm && path.is_file() {
                    found.push(path);
                }
            }
            found.sort();
            out.extend(found);
        } else {
            out.push(entry.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Invalid("no PGM images found".into()));
    }
    Ok(out)
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> mlrq::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn simulate(a: SimulateArgs) -> Result<Outcome> {
    if a.layers == 0 {
        return Err(CliError::Invalid("--layers must be >= 1".into()));
    }
    if a.k < 1 {
        return Err(CliError::Invalid("--k must be >= 1".into()));
    }
    let src = SourceSpec::new(a.n, a.sigma2, a.seed, a.samples)?;
    let rates = vec![(a.k as f64).log2() / a.n as f64; a.layers];
    let trace = simulate_multistage(&src, &rates, a.family.into(), a.schedule.into())?;
    let csv = csv_bytes(|b| trace.write_csv(b))?;
    Ok(Outcome {
        seed: Some(a.seed),
        inputs: vec![],
        files: vec![(a.out.clone(), csv)],
        resolved: Command::Simulate(a),
    })
}

fn sweep(a: SweepArgs) -> Result<Outcome> {
    if a.points == 0 || !(a.max_multiple > 0.0) {
        return Err(CliError::Invalid("need --points >= 1 and --max-multiple > 0".into()));
    }
    let src = SourceSpec::new(a.n, a.sigma2, a.seed, a.samples)?;
    let variances = default_sweep_variances(&src, a.k, a.max_multiple, a.points);
    let sweep = sweep_codebook_variance(&src, a.k, &variances)?;
    let csv = csv_bytes(|b| sweep.write_csv(b))?;
    Ok(Outcome {
        seed: Some(a.seed),
        inputs: vec![],
        files: vec![(a.out.clone(), csv)],
        resolved: Command::SweepVariance(a),
    })
}

fn train(mut a: TrainArgs) -> Result<Outcome> {
    let cfg = TrainConfig {
        layer_sizes: parse_layer_sizes(&a.layer_sizes)?,
        max_iters: a.max_iters,
        rel_tol: a.rel_tol,
        restarts: a.restarts,
        overfit_margin: a.margin,
        policy: a.policy.into(),
        seed: a.seed,
    };
    cfg.validate()?;
    let paths = discover_images(&a.images)?;
    let images = paths.iter().map(|p| load_image(p)).collect::<Result<Vec<_>>>()?;
    let (train_idx, test_idx) = split_train_test(images.len(), a.split, a.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| images[i].clone()).collect::<Vec<_>>();
    let (model, report) = train_image_model(&pick(&train_idx), &pick(&test_idx), a.block, &cfg)?;
    if let Some(layer) = report.stopped_at {
        eprintln!("strict policy stopped before layer {layer}; model has {} layers", model.stack().depth());
    }
    let report_path = a.report.clone().unwrap_or_else(|| {
        let mut name = a.out.clone().into_os_string();
        name.push(".report.csv");
        PathBuf::from(name)
    });
    a.report = Some(report_path.clone());
    let csv = csv_bytes(|b| report.write_csv(b))?;
    Ok(Outcome {
        seed: Some(a.seed),
        inputs: paths,
        files: vec![(a.out.clone(), model.to_bytes()), (report_path, csv)],
        resolved: Command::Train(a),
    })
}

fn encode(mut a: EncodeArgs) -> Result<Outcome> {
    let model = load_model(&a.model)?;
    let img = load_image(&a.input)?;
    let layers = a.layers.unwrap_or(model.stack().depth());
    a.layers = Some(layers);
    let bs = encode_image(&img, &model, layers)?;
    Ok(Outcome {
        seed: None,
        inputs: vec![a.model.clone(), a.input.clone()],
        files: vec![(a.out.clone(), bs.to_bytes())],
        resolved: Command::Encode(a),
    })
}

fn decode(mut a: DecodeArgs) -> Result<Outcome> {
    let model = load_model(&a.model)?;
    let bytes = fs::read(&a.input).map_err(|e| CliError::io(&a.input, e))?;
    let bs = Bitstream::from_bytes(&bytes).map_err(with_path(&a.input))?;
    let layers = a.layers.unwrap_or(bs.layers());
    a.layers = Some(layers);
    let img = decode_image(&bs, &model, layers)?;
    Ok(Outcome {
        seed: None,
        inputs: vec![a.model.clone(), a.input.clone()],
        files: vec![(a.out.clone(), img.to_pgm())],
        resolved: Command::Decode(a),
    })
}

fn eval(a: EvalArgs) -> Result<Outcome> {
    let model = load_model(&a.model)?;
    let paths = discover_images(&a.images)?;
    let mut rows = Vec::new();
    for p in &paths {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        rows.extend(evaluate_image(&name, &load_image(p)?, &model)?);
    }
    let csv = csv_bytes(|b| write_eval_csv(&rows, b))?;
    let mut inputs = vec![a.model.clone()];
    inputs.extend(paths);
    Ok(Outcome {
        seed: None,
        inputs,
        files: vec![(a.out.clone(), csv)],
        resolved: Command::Eval(a),
    })
}
