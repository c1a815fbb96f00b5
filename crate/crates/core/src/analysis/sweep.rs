//! λ-grid sweeps: every `(λ1, λ2, seed)` cell is trained and evaluated in
//! both modes, then aggregated across seeds by median.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{median_mad, CostReport};
use crate::error::{HscError, Result};
use crate::learner::{train, EpochRecord, NetworkSpec};
use crate::solver::Mode;
use crate::tensor::Tensor4;

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    /// Per-run JSON records are written here when set.
    pub cache_dir: Option<PathBuf>,
    /// Reuse completed records found in `cache_dir`.
    pub resume: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunOutcome {
    Ok {
        report: CostReport,
        /// Per-epoch test costs; wall times are zeroed.
        curve: Vec<EpochRecord>,
    },
    Failed {
        error: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: Mode,
    pub seed: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Hash of the run's full spec and training/test data.
    pub fingerprint: String,
    pub outcome: RunOutcome,
    #[serde(skip)]
    pub wall_seconds: f64,
    #[serde(skip)]
    pub resumed: bool,
}

impl RunRecord {
    pub fn report(&self) -> Option<&CostReport> {
        match &self.outcome {
            RunOutcome::Ok { report, .. } => Some(report),
            RunOutcome::Failed { .. } => None,
        }
    }

    pub fn curve(&self) -> &[EpochRecord] {
        match &self.outcome {
            RunOutcome::Ok { curve, .. } => curve,
            RunOutcome::Failed { .. } => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub median: f64,
    pub mad: f64,
    pub samples: Vec<f64>,
}

impl Stat {
    fn of(samples: Vec<f64>) -> Option<Stat> {
        let (median, mad) = median_mad(&samples).ok()?;
        Some(Stat { median, mad, samples })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub lambda1: f64,
    pub lambda2: f64,
    /// All runs of both modes succeeded.
    pub valid: bool,
    pub hila: Option<Stat>,
    pub spc: Option<Stat>,
    pub hila_iterations: Option<Stat>,
    pub spc_iterations: Option<Stat>,
    /// Test total after the first epoch, per mode.
    pub hila_first_epoch: Option<Stat>,
    pub spc_first_epoch: Option<Stat>,
    /// `(HiLa - SPC) / HiLa` on the median totals.
    pub rel_diff: Option<f64>,
    /// Test images that hit `max_iters`, summed over runs.
    pub unconverged: usize,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub seeds: Vec<u64>,
    pub template: NetworkSpec,
    pub data_fingerprint: String,
    /// Ordered by λ1, λ2, seed, mode.
    pub runs: Vec<RunRecord>,
    /// Row-major over `(λ1, λ2)`.
    pub cells: Vec<CellSummary>,
}

impl SweepGrid {
    pub fn cell(&self, i: usize, j: usize) -> &CellSummary {
        &self.cells[i * self.lambda2.len() + j]
    }

    /// Relative differences, rows by λ1 and columns by λ2.
    pub fn rel_diff_grid(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.lambda1.len())
            .map(|i| (0..self.lambda2.len()).map(|j| self.cell(i, j).rel_diff).collect())
            .collect()
    }

    pub fn valid_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.valid).count()
    }
}

fn hash_tensor(h: &mut Sha256, t: &Tensor4<f32>) {
    for d in t.dims() {
        h.update((d as u64).to_le_bytes());
    }
    for v in t.data() {
        h.update(v.to_le_bytes());
    }
}

fn data_fingerprint(train_set: &Tensor4<f32>, test_set: &Tensor4<f32>) -> String {
    let mut h = Sha256::new();
    hash_tensor(&mut h, train_set);
    hash_tensor(&mut h, test_set);
    hex::encode(h.finalize())
}

fn run_fingerprint(spec: &NetworkSpec, data_fp: &str) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(spec).expect("spec serializes"));
    h.update(data_fp.as_bytes());
    hex::encode(h.finalize())
}

fn cached(dir: &Path, fingerprint: &str) -> Option<RunRecord> {
    let raw = fs::read(dir.join(format!("{fingerprint}.json"))).ok()?;
    let rec: RunRecord = serde_json::from_slice(&raw).ok()?;
    (rec.fingerprint == fingerprint && matches!(rec.outcome, RunOutcome::Ok { .. })).then_some(rec)
}

fn store(dir: &Path, rec: &RunRecord) -> Result<()> {
    let path = dir.join(format!("{}.json", rec.fingerprint));
    let tmp = dir.join(format!("{}.json.tmp", rec.fingerprint));
    fs::write(&tmp, serde_json::to_vec_pretty(rec)?).map_err(|e| HscError::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| HscError::io(&path, e))
}

struct Job {
    lambda1: f64,
    lambda2: f64,
    seed: u64,
    mode: Mode,
    spec: NetworkSpec,
    fingerprint: String,
}

fn run_job(job: &Job, train_set: &Tensor4<f32>, test_set: &Tensor4<f32>, opts: &SweepOptions) -> Result<RunRecord> {
    if opts.resume {
        if let Some(mut rec) = opts.cache_dir.as_deref().and_then(|d| cached(d, &job.fingerprint)) {
            log::info!("resuming {} seed {} λ=({}, {})", job.mode, job.seed, job.lambda1, job.lambda2);
            rec.resumed = true;
            return Ok(rec);
        }
    }
    let started = Instant::now();
    let outcome = match train::<f32>(&job.spec, train_set, test_set) {
        Ok((state, log)) => {
            let last = log.epochs.last().expect("at least one epoch");
            let report = CostReport {
                mode: job.mode,
                seed: job.seed,
                epoch: state.epoch,
                lambdas: state.lambdas.clone(),
                n_images: test_set.batch(),
                layers: last.layers.clone(),
                total: last.total,
                mean_iterations: last.mean_iterations,
                unconverged: last.unconverged,
            };
            let curve = log
                .epochs
                .iter()
                .map(|r| EpochRecord { wall_seconds: 0.0, ..r.clone() })
                .collect();
            RunOutcome::Ok { report, curve }
        }
        Err(e) => {
            log::warn!("run {} seed {} λ=({}, {}) failed: {e}", job.mode, job.seed, job.lambda1, job.lambda2);
            RunOutcome::Failed { error: e.to_string() }
        }
    };
    let rec = RunRecord {
        mode: job.mode,
        seed: job.seed,
        lambda1: job.lambda1,
        lambda2: job.lambda2,
        fingerprint: job.fingerprint.clone(),
        outcome,
        wall_seconds: started.elapsed().as_secs_f64(),
        resumed: false,
    };
    if let Some(dir) = &opts.cache_dir {
        store(dir, &rec)?;
    }
    Ok(rec)
}

fn summarize(lambda1: f64, lambda2: f64, runs: &[&RunRecord]) -> CellSummary {
    let pick = |mode: Mode, f: &dyn Fn(&RunRecord) -> Option<f64>| {
        Stat::of(runs.iter().filter(|r| r.mode == mode).filter_map(|r| f(r)).collect())
    };
    let total = |r: &RunRecord| r.report().map(|c| c.total);
    let iters = |r: &RunRecord| r.report().map(|c| c.mean_iterations);
    let first = |r: &RunRecord| r.curve().first().map(|e| e.total);
    let errors: Vec<String> = runs
        .iter()
        .filter_map(|r| match &r.outcome {
            RunOutcome::Failed { error } => Some(format!("{} seed {}: {error}", r.mode, r.seed)),
            RunOutcome::Ok { .. } => None,
        })
        .collect();
    let valid = errors.is_empty();
    let hila = pick(Mode::HiLa, &total);
    let spc = pick(Mode::Spc, &total);
    let rel_diff = match (&hila, &spc) {
        (Some(h), Some(s)) if valid && h.median != 0.0 => Some((h.median - s.median) / h.median),
        _ => None,
    };
    CellSummary {
        lambda1,
        lambda2,
        valid,
        hila_iterations: pick(Mode::HiLa, &iters),
        spc_iterations: pick(Mode::Spc, &iters),
        hila_first_epoch: pick(Mode::HiLa, &first),
        spc_first_epoch: pick(Mode::Spc, &first),
        hila,
        spc,
        rel_diff,
        unconverged: runs.iter().filter_map(|r| r.report()).map(|c| c.unconverged).sum(),
        errors,
    }
}

/// Trains and evaluates both modes for every `(λ1, λ2, seed)` combination.
///
/// `template` supplies everything but the first two λ, the mode and the
/// seed. Failed runs are recorded and mark their cell invalid; the sweep
/// itself only fails on invalid arguments or cache I/O errors.
pub fn sweep(
    template: &NetworkSpec,
    lambda1: &[f64],
    lambda2: &[f64],
    seeds: &[u64],
    train_set: &Tensor4<f32>,
    test_set: &Tensor4<f32>,
    opts: &SweepOptions,
) -> Result<SweepGrid> {
    if lambda1.is_empty() || lambda2.is_empty() || seeds.is_empty() {
        return Err(HscError::param("sweep", "λ1, λ2 and seed lists must be nonempty"));
    }
    if template.layers.len() < 2 {
        return Err(HscError::Spec("a λ1 x λ2 sweep needs at least two layers".into()));
    }
    template.validate()?;
    if let Some(dir) = &opts.cache_dir {
        fs::create_dir_all(dir).map_err(|e| HscError::io(dir, e))?;
    }
    let data_fp = data_fingerprint(train_set, test_set);
    let mut jobs = Vec::new();
    for &l1 in lambda1 {
        for &l2 in lambda2 {
            for &seed in seeds {
                for mode in Mode::BOTH {
                    let mut spec = template.clone().with_lambdas(&[l1, l2]);
                    spec.mode = mode;
                    spec.seed = seed;
                    spec.validate()?;
                    let fingerprint = run_fingerprint(&spec, &data_fp);
                    jobs.push(Job { lambda1: l1, lambda2: l2, seed, mode, spec, fingerprint });
                }
            }
        }
    }
    let run_all = || -> Result<Vec<RunRecord>> {
        jobs.par_iter().map(|j| run_job(j, train_set, test_set, opts)).collect()
    };
    let runs = if opts.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| HscError::param("workers", e.to_string()))?
            .install(run_all)?
    } else {
        run_all()?
    };

    let per_cell = seeds.len() * Mode::BOTH.len();
    let mut cells = Vec::with_capacity(lambda1.len() * lambda2.len());
    for (c, chunk) in runs.chunks(per_cell).enumerate() {
        let (i, j) = (c / lambda2.len(), c % lambda2.len());
        cells.push(summarize(lambda1[i], lambda2[j], &chunk.iter().collect::<Vec<_>>()));
    }
    Ok(SweepGrid {
        lambda1: lambda1.to_vec(),
        lambda2: lambda2.to_vec(),
        seeds: seeds.to_vec(),
        template: template.clone(),
        data_fingerprint: data_fp,
        runs,
        cells,
    })
}
