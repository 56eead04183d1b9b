//! Experiment configuration: a TOML document, parsed into raw tables and then
//! validated field by field before anything is computed.
//!
//! ```toml
//! [grid]
//! delta = 0.01
//! x_star = 2.0
//! t_end = 100.0          # or: n = 10000
//!
//! [model]
//! drift = { name = "affine", c0 = 4.0, c1 = -1.0 }   # or sine / zero
//! obs_map = "power32"    # or identity
//! sigma2 = 0.1
//!
//! [data]
//! mode = "simulate"      # or "file" with path = "data.csv"
//! obs_spacing = 1.0      # or: obs_times = [1.0, 2.0, ...]
//!
//! [sampler]
//! algo = "inf-mmala"     # inf-mala, mmala
//! h = 1.0
//! iters = 2000
//! init = "flat_bridge(2)"  # prior, data_pinned
//! seed = 0               # optional, default 0
//! burn_in = 1000         # optional, default iters / 2
//!
//! [output]
//! dir = "out"            # optional
//! trace_times = [37.0, 36.5]   # optional, default empty
//!
//! [mesh]                 # optional; used by meshstudy only
//! levels = 2             # 1 = δ only, 2 = δ and δ/2
//! runs = [{ algo = "inf-mmala", h = 1.0 }, { algo = "mmala", h = 0.1 }]
//! ```

use std::path::PathBuf;

use inf_mmala::{Algorithm, Drift, GridSpec, InitStrategy, ModelFunctions, ObsMap};
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: RawGrid,
    model: RawModel,
    data: RawData,
    sampler: RawSampler,
    #[serde(default)]
    output: RawOutput,
    mesh: Option<RawMesh>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: Option<i64>,
    t_end: Option<f64>,
    delta: f64,
    x_star: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrift {
    name: String,
    c0: Option<f64>,
    c1: Option<f64>,
    amplitude: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    drift: RawDrift,
    obs_map: String,
    sigma2: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    mode: String,
    obs_times: Option<Vec<f64>>,
    obs_spacing: Option<f64>,
    path: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampler {
    algo: String,
    h: f64,
    iters: i64,
    init: String,
    seed: Option<u64>,
    burn_in: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    #[serde(default)]
    trace_times: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    levels: Option<i64>,
    runs: Option<Vec<RawMeshRun>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeshRun {
    algo: String,
    h: f64,
}

/// Where the observations come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Simulate a path and observe it at these times.
    Simulate { obs_times: Vec<f64> },
    /// Read `t,y` rows from a CSV file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSettings {
    pub algo: Algorithm,
    pub h: f64,
    pub iters: usize,
    pub init: InitStrategy,
    pub seed: u64,
    pub burn_in: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshRun {
    pub algo: Algorithm,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshSettings {
    /// 1 runs at δ only; 2 adds δ/2.
    pub levels: usize,
    pub runs: Vec<MeshRun>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub fns: ModelFunctions,
    pub sigma2: f64,
    pub data: DataSource,
    pub sampler: SamplerSettings,
    pub output_dir: Option<PathBuf>,
    pub trace_times: Vec<f64>,
    pub mesh: MeshSettings,
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Parse {
        line: e
            .span()
            .map(|s| text[..s.start.min(text.len())].lines().count().max(1)),
        message: e.message().to_string(),
    })?;
    validate(raw)
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::validation(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn count(field: &str, v: i64, min: i64) -> Result<usize> {
    if v >= min {
        Ok(v as usize)
    } else {
        Err(CliError::validation(
            field,
            format!("must be at least {min}, got {v}"),
        ))
    }
}

fn algo(field: &str, name: &str) -> Result<Algorithm> {
    name.parse()
        .map_err(|e: inf_mmala::Error| CliError::validation(field, e.to_string()))
}

/// Grid indices of `times`, which must lie on the grid, inside `(0, T]`,
/// and be strictly increasing.
pub fn grid_indices(field: &str, grid: &GridSpec, times: &[f64]) -> Result<Vec<usize>> {
    let mut out: Vec<usize> = Vec::with_capacity(times.len());
    for &t in times {
        let j = grid.index_of_time(t).map_err(|_| {
            CliError::validation(
                field,
                format!(
                    "{t} not on grid (delta = {}, T = {})",
                    grid.delta(),
                    grid.t_end()
                ),
            )
        })?;
        if out.last().is_some_and(|&prev| j <= prev) {
            return Err(CliError::validation(
                field,
                "times must be strictly increasing",
            ));
        }
        out.push(j);
    }
    Ok(out)
}

/// Grid indices of the trace times, which must be on the grid and distinct
/// but may come in any order.
pub fn trace_indices(grid: &GridSpec, times: &[f64]) -> Result<Vec<usize>> {
    let field = "output.trace_times";
    let mut seen = std::collections::BTreeSet::new();
    times
        .iter()
        .map(|&t| {
            let j = grid_indices(field, grid, &[t])?[0];
            if !seen.insert(j) {
                return Err(CliError::validation(
                    field,
                    format!("{t} repeats a grid point"),
                ));
            }
            Ok(j)
        })
        .collect()
}

fn validate(raw: RawConfig) -> Result<ExperimentConfig> {
    let delta = positive("grid.delta", raw.grid.delta)?;
    if !raw.grid.x_star.is_finite() {
        return Err(CliError::validation("grid.x_star", "must be finite"));
    }
    let grid = match (raw.grid.n, raw.grid.t_end) {
        (Some(n), None) => GridSpec::new(count("grid.n", n, 1)?, delta, raw.grid.x_star),
        (None, Some(t)) => {
            GridSpec::with_horizon(positive("grid.t_end", t)?, delta, raw.grid.x_star)
        }
        _ => {
            return Err(CliError::validation(
                "grid",
                "give exactly one of `n` and `t_end`",
            ))
        }
    }
    .map_err(|e| CliError::validation("grid", e.to_string()))?;

    let d = &raw.model.drift;
    let need = |field: &str, v: Option<f64>| -> Result<f64> {
        match v {
            Some(v) if v.is_finite() => Ok(v),
            Some(v) => Err(CliError::validation(
                format!("model.drift.{field}"),
                format!("must be finite, got {v}"),
            )),
            None => Err(CliError::validation(
                format!("model.drift.{field}"),
                "missing",
            )),
        }
    };
    let unused = |fields: &[(&str, Option<f64>)]| -> Result<()> {
        match fields.iter().find(|(_, v)| v.is_some()) {
            Some((f, _)) => Err(CliError::validation(
                format!("model.drift.{f}"),
                format!("not a parameter of drift `{}`", d.name),
            )),
            None => Ok(()),
        }
    };
    let drift = match d.name.as_str() {
        "affine" => {
            unused(&[("amplitude", d.amplitude)])?;
            Drift::Affine {
                c0: need("c0", d.c0)?,
                c1: need("c1", d.c1)?,
            }
        }
        "sine" => {
            unused(&[("c0", d.c0), ("c1", d.c1)])?;
            Drift::Sine {
                amplitude: need("amplitude", d.amplitude)?,
            }
        }
        "zero" => {
            unused(&[("c0", d.c0), ("c1", d.c1), ("amplitude", d.amplitude)])?;
            Drift::zero()
        }
        other => {
            return Err(CliError::validation(
                "model.drift.name",
                format!("unknown drift `{other}` (expected affine, sine or zero)"),
            ))
        }
    };
    let obs_map = match raw.model.obs_map.as_str() {
        "identity" => ObsMap::Identity,
        "power32" => ObsMap::Power32,
        other => {
            return Err(CliError::validation(
                "model.obs_map",
                format!("unknown observation map `{other}` (expected identity or power32)"),
            ))
        }
    };
    let sigma2 = positive("model.sigma2", raw.model.sigma2)?;

    let data = match raw.data.mode.as_str() {
        "simulate" => {
            if raw.data.path.is_some() {
                return Err(CliError::validation(
                    "data.path",
                    "only used with mode = \"file\"",
                ));
            }
            let obs_times = match (raw.data.obs_times, raw.data.obs_spacing) {
                (Some(times), None) => times,
                (None, Some(spacing)) => {
                    let spacing = positive("data.obs_spacing", spacing)?;
                    let k = (grid.t_end() / spacing + 1e-9).floor() as usize;
                    (1..=k).map(|i| i as f64 * spacing).collect()
                }
                _ => {
                    return Err(CliError::validation(
                        "data",
                        "simulate mode needs exactly one of `obs_times` and `obs_spacing`",
                    ))
                }
            };
            if obs_times.is_empty() {
                return Err(CliError::validation(
                    "data.obs_times",
                    "at least one observation time is required",
                ));
            }
            grid_indices("data.obs_times", &grid, &obs_times)?;
            DataSource::Simulate { obs_times }
        }
        "file" => {
            if raw.data.obs_times.is_some() || raw.data.obs_spacing.is_some() {
                return Err(CliError::validation(
                    "data",
                    "observation times come from the file in file mode",
                ));
            }
            let path = raw
                .data
                .path
                .ok_or_else(|| CliError::validation("data.path", "file mode needs a path"))?;
            DataSource::File { path }
        }
        other => {
            return Err(CliError::validation(
                "data.mode",
                format!("unknown mode `{other}` (expected simulate or file)"),
            ))
        }
    };

    let s = raw.sampler;
    let iters = count("sampler.iters", s.iters, 1)?;
    let burn_in = match s.burn_in {
        Some(b) => count("sampler.burn_in", b, 0)?,
        None => iters / 2,
    };
    if burn_in >= iters {
        return Err(CliError::validation(
            "sampler.burn_in",
            format!("must be smaller than iters ({iters}), got {burn_in}"),
        ));
    }
    let init: InitStrategy = s
        .init
        .parse()
        .map_err(|e: inf_mmala::Error| CliError::validation("sampler.init", e.to_string()))?;
    if init == InitStrategy::DataPinned && obs_map.inverse(1.0).is_err() {
        return Err(CliError::validation(
            "sampler.init",
            "data_pinned needs an invertible observation map",
        ));
    }
    let sampler = SamplerSettings {
        algo: algo("sampler.algo", &s.algo)?,
        h: positive("sampler.h", s.h)?,
        iters,
        init,
        seed: s.seed.unwrap_or(0),
        burn_in,
    };

    trace_indices(&grid, &raw.output.trace_times)?;

    let mesh = match raw.mesh {
        None => MeshSettings {
            levels: 2,
            runs: vec![MeshRun {
                algo: sampler.algo,
                h: sampler.h,
            }],
        },
        Some(m) => {
            let levels = match m.levels {
                None => 2,
                Some(l @ 1..=2) => l as usize,
                Some(l) => {
                    return Err(CliError::validation(
                        "mesh.levels",
                        format!("must be 1 or 2, got {l}"),
                    ))
                }
            };
            let runs = match m.runs {
                None => vec![MeshRun {
                    algo: sampler.algo,
                    h: sampler.h,
                }],
                Some(runs) if runs.is_empty() => {
                    return Err(CliError::validation(
                        "mesh.runs",
                        "at least one run is required",
                    ))
                }
                Some(runs) => runs
                    .iter()
                    .map(|r| {
                        Ok(MeshRun {
                            algo: algo("mesh.runs.algo", &r.algo)?,
                            h: positive("mesh.runs.h", r.h)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            };
            MeshSettings { levels, runs }
        }
    };

    Ok(ExperimentConfig {
        grid,
        fns: ModelFunctions { drift, obs_map },
        sigma2,
        data,
        sampler,
        output_dir: raw.output.dir,
        trace_times: raw.output.trace_times,
        mesh,
    })
}
