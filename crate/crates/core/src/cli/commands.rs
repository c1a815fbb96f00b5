use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{Resolved, RunConfig};
use super::{input_error, Command, DataArgs, Failure};
use crate::analysis::{
    activation_from_evaluation, export_mosaic, fmt_float, grid_csv, learning_curve_csv, render_mosaic, runs_csv,
    sweep, to_json, CostReport, SweepOptions,
};
use crate::checkpoint;
use crate::conv::effective_dictionary;
use crate::learner::{evaluate, init_state, mix_seed, train_from, NetworkState, TrainEvent, TrainLog};
use crate::preprocess::{generate_synthetic, load_dataset, save_dataset, Dataset, Split, SyntheticSpec};
use crate::solver::{InferenceConfig, Mode};
use crate::tensor::Tensor4;

type CmdResult = Result<(), Failure>;

const DEFAULT_T_STAB: f64 = 5e-4;

pub(super) fn dispatch(cmd: Command, workers: Option<usize>) -> CmdResult {
    let config_workers = match &cmd {
        Command::Train { config, .. }
        | Command::Sweep { config, .. }
        | Command::GenSynthetic { config, .. }
        | Command::Preprocess { config, .. } => RunConfig::load(config).ok().and_then(|c| c.workers),
        Command::Infer { data, .. } | Command::ExportRf { data, .. } => {
            data.config.as_ref().and_then(|c| RunConfig::load(c).ok()).and_then(|c| c.workers)
        }
    };
    let threads = workers.or(config_workers).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(Failure::runtime)?;
    pool.install(|| match cmd {
        Command::Train { config, output, mode, seed, epochs } => cmd_train(&config, output, mode, seed, epochs),
        Command::Infer { checkpoint, data, mode, output, t_stab, max_iters } => {
            cmd_infer(&checkpoint, &data, mode, &output, t_stab, max_iters)
        }
        Command::Sweep { config, output, resume } => cmd_sweep(&config, output, resume),
        Command::ExportRf { checkpoint, data, mode, output, exclude_top, format, t_stab } => {
            cmd_export_rf(&checkpoint, &data, mode, &output, exclude_top, &format, t_stab)
        }
        Command::GenSynthetic { config, output, n_train, n_test, active, noise_std, seed } => {
            cmd_gen_synthetic(&config, &output, n_train, n_test, active, noise_std, seed)
        }
        Command::Preprocess { config, output } => cmd_preprocess(&config, &output),
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure::runtime(format!("writing {}: {e}", path.display())))
}

fn write_json<S: Serialize>(path: &Path, v: &S) -> CmdResult {
    write(path, to_json(v).map_err(Failure::runtime)?)
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("creating {}: {e}", dir.display())))
}

fn output_dir(flag: Option<PathBuf>, cfg: &Resolved) -> Result<PathBuf, Failure> {
    flag.or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Failure::usage("no output directory: pass --output or set output_dir in the config"))
}

fn save_checkpoint(state: &NetworkState<f32>, path: &Path) -> CmdResult {
    checkpoint::save(state, path).map_err(Failure::runtime)
}

fn timings(log: &TrainLog) -> String {
    let mut s = String::new();
    for e in &log.epochs {
        let _ = writeln!(s, "epoch {} wall_seconds {:.3}", e.epoch, e.wall_seconds);
    }
    s
}

fn cmd_train(
    config: &Path,
    output: Option<PathBuf>,
    mode: Option<Mode>,
    seed: Option<u64>,
    epochs: Option<usize>,
) -> CmdResult {
    let mut cfg = RunConfig::load(config).map_err(input_error)?;
    if let Some(m) = mode {
        cfg.network.mode = m;
    }
    if let Some(s) = seed {
        cfg.network.seed = s;
    }
    if let Some(e) = epochs {
        cfg.network.epochs = e;
    }
    cfg.network.validate().map_err(input_error)?;
    let out = output_dir(output, &cfg)?;
    let (train, test) = cfg.load_data().map_err(input_error)?;
    let spec = &cfg.network;

    create_dir(&out)?;
    write(&out.join("config.toml"), cfg.echo().map_err(Failure::runtime)?)?;
    let state = init_state::<f32>(spec, spec.seed).map_err(Failure::runtime)?;
    save_checkpoint(&state, &out.join("init.hsc"))?;
    log::info!(
        "training {} on {} images ({} test), {} epochs",
        spec.mode,
        train.len(),
        test.len(),
        spec.epochs
    );
    let mut observer = |ev: TrainEvent<'_, f32>| {
        if let TrainEvent::EpochDone { record, .. } = ev {
            log::info!("epoch {} test total {:.6}", record.epoch, record.total);
        }
    };
    match train_from(spec, state, &train.images, &test.images, &mut observer) {
        Ok((state, log)) => {
            save_checkpoint(&state, &out.join("checkpoint.hsc"))?;
            let lambdas = spec.lambdas();
            write(&out.join("train_costs.csv"), learning_curve_csv(spec.mode, spec.seed, &lambdas, &log, false))?;
            write(&out.join("train_costs_layers.csv"), learning_curve_csv(spec.mode, spec.seed, &lambdas, &log, true))?;
            let last = log.epochs.last().expect("at least one epoch");
            let report = CostReport {
                mode: spec.mode,
                seed: spec.seed,
                epoch: state.epoch,
                lambdas,
                n_images: test.len(),
                layers: last.layers.clone(),
                total: last.total,
                mean_iterations: last.mean_iterations,
                unconverged: last.unconverged,
            };
            write_json(&out.join("report.json"), &report)?;
            write(&out.join("timings.log"), timings(&log))
        }
        Err(e) => {
            let snap = out.join("snapshot.hsc");
            save_checkpoint(&e.snapshot, &snap)?;
            write(&out.join("timings.log"), timings(&e.log))?;
            Err(Failure::runtime(format!("{e}; last good state saved to {}", snap.display())))
        }
    }
}

/// Images to evaluate: an `HSD1` cache if given, else the config's preprocessed test split.
type EvalData = Option<(Dataset<f32>, Option<Resolved>)>;

fn eval_data(data: &DataArgs) -> Result<EvalData, Failure> {
    if let Some(p) = &data.data {
        let cfg = data.config.as_ref().map(|c| RunConfig::load(c)).transpose().map_err(input_error)?;
        return Ok(Some((load_dataset(p).map_err(input_error)?, cfg)));
    }
    if let Some(c) = &data.config {
        let cfg = RunConfig::load(c).map_err(input_error)?;
        let (_, test) = cfg.load_data().map_err(input_error)?;
        return Ok(Some((test, Some(cfg))));
    }
    Ok(None)
}

fn check_shape(state: &NetworkState<f32>, ds: &Dataset<f32>) -> CmdResult {
    state
        .check_input(&ds.images)
        .map_err(|e| Failure::usage(format!("dataset does not fit layer 1 input: {e}")))
}

fn cmd_infer(
    ckpt: &Path,
    data: &DataArgs,
    mode: Mode,
    out: &Path,
    t_stab: Option<f64>,
    max_iters: Option<usize>,
) -> CmdResult {
    let state = checkpoint::load(ckpt).map_err(input_error)?;
    let (ds, cfg) = eval_data(data)?.ok_or_else(|| Failure::usage("infer needs --data or --config"))?;
    check_shape(&state, &ds)?;
    let net = cfg.as_ref().map(|c| &c.network);
    let icfg = InferenceConfig {
        mode,
        t_stab: t_stab.or(net.map(|n| n.t_stab)).unwrap_or(DEFAULT_T_STAB),
        max_iters: max_iters.or(net.map(|n| n.max_iters)).unwrap_or(InferenceConfig::DEFAULT_MAX_ITERS),
    };
    icfg.validate().map_err(input_error)?;
    let eval = evaluate(&state, &ds.images, &icfg).map_err(Failure::runtime)?;

    create_dir(out)?;
    let mut csv = String::from("image,iterations,converged,layer,quadratic,l1\n");
    for (i, costs) in eval.costs.iter().enumerate() {
        for (l, c) in costs.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{i},{},{},{},{},{}",
                eval.iterations[i],
                eval.converged[i],
                l + 1,
                fmt_float(c.quadratic),
                fmt_float(c.l1)
            );
        }
    }
    write(&out.join(format!("infer_{mode}.csv")), csv)?;
    write_json(&out.join(format!("infer_{mode}.json")), &CostReport::from_evaluation(&state, mode, &eval))
}

fn cmd_sweep(config: &Path, output: Option<PathBuf>, resume: bool) -> CmdResult {
    let cfg = RunConfig::load(config).map_err(input_error)?;
    let s = cfg.sweep.clone().ok_or_else(|| Failure::usage("the config has no [sweep] section"))?;
    let (l1, l2) = (s.lambda1.values().map_err(input_error)?, s.lambda2.values().map_err(input_error)?);
    let out = output_dir(output, &cfg)?;
    let (train, test) = cfg.load_data().map_err(input_error)?;

    create_dir(&out)?;
    write(&out.join("config.toml"), cfg.echo().map_err(Failure::runtime)?)?;
    let opts = SweepOptions { workers: 0, cache_dir: Some(out.join("runs")), resume };
    let grid = sweep(&cfg.network, &l1, &l2, &s.seeds, &train.images, &test.images, &opts).map_err(Failure::runtime)?;
    write(&out.join("runs.csv"), runs_csv(&grid))?;
    write(&out.join("grid.csv"), grid_csv(&grid))?;
    write_json(&out.join("grid.json"), &grid)?;
    write_json(&out.join("rel_diff.json"), &grid.rel_diff_grid())?;
    let mut t = String::new();
    for r in &grid.runs {
        let _ = writeln!(
            t,
            "{} seed {} lambda ({}, {}) wall_seconds {:.3}{}",
            r.mode,
            r.seed,
            r.lambda1,
            r.lambda2,
            r.wall_seconds,
            if r.resumed { " (resumed)" } else { "" }
        );
    }
    write(&out.join("timings.log"), t)?;
    for c in grid.cells.iter().filter(|c| !c.valid) {
        log::warn!("cell λ=({}, {}) invalid: {}", c.lambda1, c.lambda2, c.errors.join("; "));
    }
    if grid.valid_cells() == 0 {
        return Err(Failure::runtime("no grid cell completed"));
    }
    Ok(())
}

#[derive(Serialize)]
struct MosaicSummary {
    layer: usize,
    file: String,
    tiles: usize,
    tile_hw: (usize, usize),
    grid: (usize, usize),
    excluded_atom: Option<usize>,
}

fn cmd_export_rf(
    ckpt: &Path,
    data: &DataArgs,
    mode: Mode,
    out: &Path,
    exclude_top: bool,
    format: &str,
    t_stab: Option<f64>,
) -> CmdResult {
    if !["png", "pgm", "ppm"].contains(&format) {
        return Err(Failure::usage(format!("unsupported format `{format}` (png, pgm, ppm)")));
    }
    let state = checkpoint::load(ckpt).map_err(input_error)?;
    let evaluated = match eval_data(data)? {
        Some((ds, cfg)) => {
            check_shape(&state, &ds)?;
            let net = cfg.as_ref().map(|c| &c.network);
            let icfg = InferenceConfig {
                mode,
                t_stab: t_stab.or(net.map(|n| n.t_stab)).unwrap_or(DEFAULT_T_STAB),
                max_iters: net.map_or(InferenceConfig::DEFAULT_MAX_ITERS, |n| n.max_iters),
            };
            icfg.validate().map_err(input_error)?;
            Some(activation_from_evaluation(&evaluate(&state, &ds.images, &icfg).map_err(Failure::runtime)?))
        }
        None => None,
    };
    if exclude_top && evaluated.is_none() {
        log::warn!("--exclude-top without a dataset drops atom 0");
    }
    create_dir(out)?;
    let mut summaries = Vec::new();
    for i in 0..state.n_layers() {
        let eff = effective_dictionary(&state.dicts, i).map_err(Failure::runtime)?;
        let order = evaluated.as_ref().map(|h| h[i].order.clone());
        let m = render_mosaic(&eff, order.as_deref(), exclude_top).map_err(Failure::runtime)?;
        let file = format!("layer{}.{format}", i + 1);
        export_mosaic(&m, &out.join(&file)).map_err(Failure::runtime)?;
        summaries.push(MosaicSummary {
            layer: i + 1,
            file,
            tiles: m.tiles,
            tile_hw: m.tile_hw,
            grid: m.grid,
            excluded_atom: exclude_top.then(|| order.as_ref().map_or(0, |o| o[0])),
        });
    }
    write_json(&out.join("mosaics.json"), &summaries)?;
    if let Some(h) = &evaluated {
        write_json(&out.join("activation.json"), h)?;
    }
    Ok(())
}

fn cmd_gen_synthetic(
    config: &Path,
    out: &Path,
    n_train: usize,
    n_test: usize,
    active: usize,
    noise_std: f64,
    seed: u64,
) -> CmdResult {
    let cfg = RunConfig::load(config).map_err(input_error)?;
    let net = &cfg.network;
    let generator = init_state::<f32>(net, seed).map_err(Failure::runtime)?;
    let spec = |n, s| SyntheticSpec { n_images: n, active, amplitude: super::config::DEFAULT_AMPLITUDE, noise_std, seed: s };
    let (train, truth_train) = generate_synthetic(&generator.dicts, net.input, &spec(n_train, seed)).map_err(input_error)?;
    let (mut test, truth_test) =
        generate_synthetic(&generator.dicts, net.input, &spec(n_test, mix_seed(&[seed, 1]))).map_err(input_error)?;
    test.split = Split::Test;

    create_dir(out)?;
    save_checkpoint(&generator, &out.join("generator.hsc"))?;
    let save = |ds: &Dataset<f32>, name: &str| save_dataset(ds, &out.join(name)).map_err(Failure::runtime);
    save(&train, "train.hsd")?;
    save(&test, "test.hsd")?;
    let top = |codes: &[Tensor4<f32>], split, what: &str| {
        Dataset::new(codes.last().expect("one layer").clone(), split, format!("top codes of {what}"))
    };
    save(&top(&truth_train.codes, Split::Train, "train.hsd"), "truth_train.hsd")?;
    save(&top(&truth_test.codes, Split::Test, "test.hsd"), "truth_test.hsd")
}

#[derive(Serialize)]
struct ProvenanceReport<'a> {
    train: &'a crate::preprocess::Provenance,
    train_fingerprint: String,
    test: &'a crate::preprocess::Provenance,
    test_fingerprint: String,
}

fn cmd_preprocess(config: &Path, out: &Path) -> CmdResult {
    let cfg = RunConfig::load(config).map_err(input_error)?;
    let (train, test) = cfg.load_data().map_err(input_error)?;
    create_dir(out)?;
    write(&out.join("config.toml"), cfg.echo().map_err(Failure::runtime)?)?;
    save_dataset(&train, &out.join("train.hsd")).map_err(Failure::runtime)?;
    save_dataset(&test, &out.join("test.hsd")).map_err(Failure::runtime)?;
    write_json(
        &out.join("provenance.json"),
        &ProvenanceReport {
            train: &train.provenance,
            train_fingerprint: train.provenance.fingerprint(),
            test: &test.provenance,
            test_fingerprint: test.provenance.fingerprint(),
        },
    )
}
