//! Built-in experiments on the benchmark scenario: drift `a(x) = 4 − x`
//! from `x* = 2`, observations `y = x^{3/2} + 𝒩(0, 0.1)` at `t = 1, …, 100`,
//! mesh `δ = 0.01` (`N = 10⁴`).
//!
//! Each preset is an ordinary configuration document, so it doubles as an
//! example of the format.

use crate::config::{parse_config, ExperimentConfig};
use crate::error::{CliError, Result};

const SCENARIO: &str = r#"
[grid]
t_end = 100.0
delta = 0.01
x_star = 2.0

[model]
drift = { name = "affine", c0 = 4.0, c1 = -1.0 }
obs_map = "power32"
sigma2 = 0.1

[data]
mode = "simulate"
obs_spacing = 1.0
"#;

/// Trace run: ∞-MMALA from bridges flat at 2, traced at an observation time
/// and halfway between two.
pub const FIG1: &str = r#"
[sampler]
algo = "inf-mmala"
h = 1.0
iters = 2000
init = "flat_bridge(2)"
burn_in = 1000

[output]
trace_times = [37.0, 36.5]
"#;

/// Proposal quadratic-variation run from a path pinned to `f⁻¹(yᵢ)`.
pub const FIG2: &str = r#"
[sampler]
algo = "inf-mmala"
h = 1.0
iters = 1000
init = "data_pinned"
burn_in = 0
"#;

/// Acceptance at `δ` and `δ/2` for ∞-MMALA (`h = 1`) and MMALA (`h = 0.1`).
pub const MESH: &str = r#"
[sampler]
algo = "inf-mmala"
h = 1.0
iters = 2000
init = "flat_bridge(2)"
burn_in = 1000

[mesh]
levels = 2
runs = [{ algo = "inf-mmala", h = 1.0 }, { algo = "mmala", h = 0.1 }]
"#;

pub const NAMES: [&str; 3] = ["fig1", "fig2", "mesh"];

/// Full configuration document of a preset.
pub fn preset_text(name: &str) -> Result<String> {
    let body = match name {
        "fig1" => FIG1,
        "fig2" => FIG2,
        "mesh" => MESH,
        other => {
            return Err(CliError::validation(
                "preset",
                format!("unknown preset `{other}` (expected {})", NAMES.join(", ")),
            ))
        }
    };
    Ok(format!("{SCENARIO}{body}"))
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    parse_config(&preset_text(name)?)
}
