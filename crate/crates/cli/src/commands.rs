//! The four experiment commands. Each computes its results, writes its CSV
//! files into the output directory and returns the results to the caller.
//!
//! Random streams: every generator is a ChaCha8 stream of the configured
//! seed. Stream [`DATA_STREAM`] simulates data, [`INFILL_STREAM`] refines the
//! true path for the mesh study and chain `c` uses `CHAIN_STREAM_BASE + c`,
//! so the data are shared by all algorithms and chains.

use std::fs;
use std::path::{Path as FsPath, PathBuf};

use inf_mmala::model::{brownian_bridge_fill, simulate_observations, simulate_path};
use inf_mmala::{
    run_chain, Algorithm, ChainSummary, DiffusionTarget, GridSpec, InitStrategy, ObservationSet,
    Path, RunConfig, StepRecord,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{grid_indices, trace_indices, DataSource, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::output::{fmt_f64, read_data, trace_column, CsvOut};

pub const DATA_STREAM: u64 = 0;
pub const INFILL_STREAM: u64 = 1;
pub const CHAIN_STREAM_BASE: u64 = 100;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Observations on a grid, with the latent path when it was simulated.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub grid: GridSpec,
    pub obs: ObservationSet,
    pub truth: Option<Path>,
}

/// Simulates data from the configured model, or reads it from `data_file`
/// (which overrides the configured source) or the configured file.
pub fn load_data(cfg: &ExperimentConfig, data_file: Option<&FsPath>) -> Result<Dataset> {
    let path = match (&cfg.data, data_file) {
        (_, Some(p)) => Some(p.to_path_buf()),
        (DataSource::File { path }, None) => Some(path.clone()),
        (DataSource::Simulate { .. }, None) => None,
    };
    match path {
        Some(path) => read_dataset(cfg, &path),
        None => simulate_dataset(cfg),
    }
}

fn read_dataset(cfg: &ExperimentConfig, path: &FsPath) -> Result<Dataset> {
    let (t, y) = read_data(path)?;
    let bad = |reason: String| CliError::Data {
        path: path.to_path_buf(),
        reason,
    };
    let indices = grid_indices("t", &cfg.grid, &t).map_err(|e| bad(e.to_string()))?;
    let obs = ObservationSet::new(indices, y, cfg.sigma2, cfg.grid.n())
        .map_err(|e| bad(e.to_string()))?;
    Ok(Dataset {
        grid: cfg.grid,
        obs,
        truth: None,
    })
}

fn simulate_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let DataSource::Simulate { obs_times } = &cfg.data else {
        return Err(CliError::validation(
            "data.mode",
            "simulation needs mode = \"simulate\"",
        ));
    };
    let indices = grid_indices("data.obs_times", &cfg.grid, obs_times)?;
    let mut rng = stream_rng(cfg.sampler.seed, DATA_STREAM);
    let truth = simulate_path(&cfg.grid, &cfg.fns, &mut rng);
    let obs = simulate_observations(&truth, &indices, &cfg.fns, cfg.sigma2, &mut rng)?;
    Ok(Dataset {
        grid: cfg.grid,
        obs,
        truth: Some(truth),
    })
}

fn prepare_dir(out: &FsPath) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn write_observations(out: &FsPath, ds: &Dataset) -> Result<()> {
    let mut csv = CsvOut::create(out, "data.csv", &["t", "y"])?;
    for (&j, &y) in ds.obs.indices().iter().zip(ds.obs.values()) {
        csv.row([fmt_f64(ds.grid.time_of(j)), fmt_f64(y)])?;
    }
    csv.finish()
}

fn write_path(out: &FsPath, name: &str, grid: &GridSpec, x: &[f64]) -> Result<()> {
    let mut csv = CsvOut::create(out, name, &["t", "x"])?;
    for (k, v) in x.iter().enumerate() {
        csv.row([fmt_f64(grid.time_of(k + 1)), fmt_f64(*v)])?;
    }
    csv.finish()
}

/// Simulates a dataset and writes `data.csv` (`t,y`) and `truth.csv` (`t,x`).
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &FsPath) -> Result<Dataset> {
    let ds = simulate_dataset(cfg)?;
    prepare_dir(out)?;
    write_observations(out, &ds)?;
    if let Some(truth) = &ds.truth {
        write_path(out, "truth.csv", &ds.grid, truth)?;
    }
    Ok(ds)
}

/// What one chain produced.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub chain: usize,
    pub algo: Algorithm,
    pub h: f64,
    pub summary: ChainSummary,
    pub steps: Vec<StepRecord>,
}

/// Chain parameters that vary between the studies.
#[derive(Debug, Clone, Copy)]
struct ChainSpec {
    algo: Algorithm,
    h: f64,
    iters: usize,
    init: InitStrategy,
    burn_in: usize,
    seed: u64,
}

impl ChainSpec {
    fn from_config(cfg: &ExperimentConfig) -> Self {
        let s = &cfg.sampler;
        Self {
            algo: s.algo,
            h: s.h,
            iters: s.iters,
            init: s.init,
            burn_in: s.burn_in,
            seed: s.seed,
        }
    }
}

fn run_one(
    target: &DiffusionTarget,
    spec: ChainSpec,
    traced: &[usize],
    chain: usize,
) -> Result<ChainRun> {
    let run_cfg = RunConfig {
        algo: spec.algo,
        h: spec.h,
        iters: spec.iters,
        init: spec.init,
        trace_indices: traced.to_vec(),
        burn_in: spec.burn_in,
    };
    let mut rng = stream_rng(spec.seed, CHAIN_STREAM_BASE + chain as u64);
    let mut steps = Vec::with_capacity(spec.iters);
    let summary = run_chain(target, &run_cfg, &mut rng, |_, rec, _| steps.push(*rec))?;
    Ok(ChainRun {
        chain,
        algo: spec.algo,
        h: spec.h,
        summary,
        steps,
    })
}

/// Runs `f(0), …, f(k−1)`, concurrently when `k > 1`, keeping chain order.
fn for_chains<T, F>(k: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if k <= 1 {
        return Ok(vec![f(0)?]);
    }
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..k).map(|c| scope.spawn(move || f(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    })
}

/// `name.csv` for a single chain, `name_chain<c>.csv` when there are several.
pub fn chain_file(stem: &str, chain: usize, chains: usize) -> String {
    if chains <= 1 {
        format!("{stem}.csv")
    } else {
        format!("{stem}_chain{chain}.csv")
    }
}

fn target_for(cfg: &ExperimentConfig, ds: &Dataset) -> Result<DiffusionTarget> {
    Ok(DiffusionTarget::new(ds.grid, ds.obs.clone(), cfg.fns)?)
}

/// Runs the configured sampler and writes `steps.csv`, `trace.csv` and
/// `summary.csv` (suffixed per chain when `chains > 1`).
pub fn cmd_sample(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    out: &FsPath,
    chains: usize,
) -> Result<Vec<ChainRun>> {
    let target = target_for(cfg, ds)?;
    let traced = trace_indices(&ds.grid, &cfg.trace_times)?;
    let spec = ChainSpec::from_config(cfg);
    let runs = for_chains(chains, |c| run_one(&target, spec, &traced, c))?;
    prepare_dir(out)?;
    for run in &runs {
        write_steps(out, &chain_file("steps", run.chain, chains), run)?;
        write_trace(
            out,
            &chain_file("trace", run.chain, chains),
            cfg,
            &traced,
            run,
        )?;
        write_summary(
            out,
            &chain_file("summary", run.chain, chains),
            cfg,
            &traced,
            run,
        )?;
    }
    Ok(runs)
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn write_steps(out: &FsPath, name: &str, run: &ChainRun) -> Result<()> {
    let mut csv = CsvOut::create(
        out,
        name,
        &[
            "iteration",
            "accepted",
            "log_ratio",
            "acc_prob",
            "qve_proposed",
        ],
    )?;
    for (i, r) in run.steps.iter().enumerate() {
        csv.row([
            (i + 1).to_string(),
            flag(r.accepted),
            fmt_f64(r.log_ratio),
            fmt_f64(r.acc_prob),
            fmt_f64(r.qve_proposed),
        ])?;
    }
    csv.finish()
}

fn write_trace(
    out: &FsPath,
    name: &str,
    cfg: &ExperimentConfig,
    traced: &[usize],
    run: &ChainRun,
) -> Result<()> {
    let columns: Vec<String> = cfg.trace_times.iter().map(|&t| trace_column(t)).collect();
    let mut header = vec!["iteration"];
    header.extend(columns.iter().map(String::as_str));
    let mut csv = CsvOut::create(out, name, &header)?;
    let series: Vec<&Vec<f64>> = traced.iter().map(|j| &run.summary.traces[j]).collect();
    for i in 0..run.steps.len() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(series.iter().map(|s| fmt_f64(s[i])));
        csv.row(row)?;
    }
    csv.finish()
}

fn write_summary(
    out: &FsPath,
    name: &str,
    cfg: &ExperimentConfig,
    traced: &[usize],
    run: &ChainRun,
) -> Result<()> {
    let s = &run.summary;
    let mut header: Vec<String> = [
        "acceptance_rate",
        "n_steps",
        "n_accepted",
        "mean_acc_prob",
        "metric_failures",
        "burn_in",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut row = vec![
        fmt_f64(s.acceptance_rate),
        s.n_steps.to_string(),
        s.n_accepted.to_string(),
        fmt_f64(s.mean_acc_prob),
        s.metric_failures.to_string(),
        cfg.sampler.burn_in.to_string(),
    ];
    for (&t, &j) in cfg.trace_times.iter().zip(traced) {
        header.push(format!("mean_{}", trace_column(t)));
        header.push(format!("var_{}", trace_column(t)));
        row.push(fmt_f64(s.coord_mean[j - 1]));
        row.push(fmt_f64(s.coord_var[j - 1]));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvOut::create(out, name, &header)?;
    csv.row(row)?;
    csv.finish()
}

/// Runs each algorithm on the same data and seeds and writes
/// `qv_<algo>.csv` (`iteration,qve_proposed,accepted`).
pub fn cmd_qvstudy(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    algos: &[Algorithm],
    out: &FsPath,
    chains: usize,
) -> Result<Vec<ChainRun>> {
    if cfg.fns.obs_map.inverse(1.0).is_err() {
        return Err(CliError::validation(
            "model.obs_map",
            "the QV study needs an invertible observation map",
        ));
    }
    if algos.is_empty() {
        return Err(CliError::validation(
            "algos",
            "at least one algorithm is required",
        ));
    }
    let target = target_for(cfg, ds)?;
    let mut runs = Vec::new();
    for &algo in algos {
        let spec = ChainSpec {
            algo,
            ..ChainSpec::from_config(cfg)
        };
        runs.extend(for_chains(chains, |c| run_one(&target, spec, &[], c))?);
    }
    prepare_dir(out)?;
    for run in &runs {
        let name = chain_file(&format!("qv_{}", run.algo), run.chain, chains);
        let mut csv = CsvOut::create(out, &name, &["iteration", "qve_proposed", "accepted"])?;
        for (i, r) in run.steps.iter().enumerate() {
            csv.row([
                (i + 1).to_string(),
                fmt_f64(r.qve_proposed),
                flag(r.accepted),
            ])?;
        }
        csv.finish()?;
    }
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshRow {
    pub chain: usize,
    pub delta: f64,
    pub algo: Algorithm,
    pub h: f64,
    pub acceptance_rate: f64,
}

/// Result of the mesh study; `fine_truth` is the simulated path refined to
/// `δ/2` by Brownian-bridge infill, when there is a simulated path.
#[derive(Debug, Clone)]
pub struct MeshStudy {
    pub rows: Vec<MeshRow>,
    pub fine_truth: Option<Path>,
}

/// Halves the mesh while keeping the observations: they sit on the same
/// times, now at doubled grid indices. The true path, if known, is refined by
/// Brownian bridges between its coarse values.
pub fn refine_dataset(ds: &Dataset, seed: u64) -> Result<Dataset> {
    let grid = ds.grid.refine(2)?;
    let obs = ds.obs.refine(2, grid.n())?;
    let truth = match &ds.truth {
        Some(coarse) => {
            let pins: Vec<usize> = (1..=coarse.len()).map(|k| 2 * k).collect();
            let mut rng = stream_rng(seed, INFILL_STREAM);
            Some(brownian_bridge_fill(&grid, &pins, coarse, &mut rng)?)
        }
        None => None,
    };
    Ok(Dataset { grid, obs, truth })
}

/// Runs every configured (algorithm, h) pair at `δ` and, with two levels,
/// `δ/2`, on the same observations; writes `mesh.csv`
/// (`delta,algo,h,acceptance_rate`) and `truth_fine.csv` when available.
pub fn cmd_meshstudy(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    out: &FsPath,
    chains: usize,
) -> Result<MeshStudy> {
    let mut levels = vec![ds.clone()];
    if cfg.mesh.levels == 2 {
        levels.push(refine_dataset(ds, cfg.sampler.seed)?);
    }
    let mut rows = Vec::new();
    for level in &levels {
        let target = target_for(cfg, level)?;
        for run in &cfg.mesh.runs {
            let spec = ChainSpec {
                algo: run.algo,
                h: run.h,
                ..ChainSpec::from_config(cfg)
            };
            for r in for_chains(chains, |c| run_one(&target, spec, &[], c))? {
                rows.push(MeshRow {
                    chain: r.chain,
                    delta: level.grid.delta(),
                    algo: r.algo,
                    h: r.h,
                    acceptance_rate: r.summary.acceptance_rate,
                });
            }
        }
    }
    prepare_dir(out)?;
    for c in 0..chains.max(1) {
        let mut csv = CsvOut::create(
            out,
            &chain_file("mesh", c, chains),
            &["delta", "algo", "h", "acceptance_rate"],
        )?;
        for row in rows.iter().filter(|r| r.chain == c) {
            csv.row([
                fmt_f64(row.delta),
                row.algo.to_string(),
                fmt_f64(row.h),
                fmt_f64(row.acceptance_rate),
            ])?;
        }
        csv.finish()?;
    }
    let fine_truth = levels.get(1).and_then(|l| l.truth.clone());
    if let (Some(fine), Some(level)) = (&fine_truth, levels.get(1)) {
        write_path(out, "truth_fine.csv", &level.grid, fine)?;
    }
    Ok(MeshStudy { rows, fine_truth })
}

/// Output directory: the explicit flag, else `OUT_DIR`, else the config.
pub fn resolve_out_dir(
    flag: Option<PathBuf>,
    env: Option<PathBuf>,
    cfg: &ExperimentConfig,
) -> Result<PathBuf> {
    flag.or(env)
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| {
            CliError::validation(
                "output.dir",
                "no output directory (use --out, OUT_DIR or output.dir)",
            )
        })
}
