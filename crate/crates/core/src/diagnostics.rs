//! Quadratic variation, chain summaries and the exact posterior of the
//! linear-Gaussian special case.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{DiffusionTarget, Drift, GridSpec, ObsMap};
use crate::sampler::StepRecord;
use crate::tridiag::SymTridiag;

/// `QVe = Σⱼ (xⱼ − xⱼ₋₁)²` with `x₀ = x*`.
pub fn qv_estimate(x: &[f64], x_star: f64) -> f64 {
    let mut prev = x_star;
    let mut acc = 0.0;
    for &v in x {
        let d = v - prev;
        acc += d * d;
        prev = v;
    }
    acc
}

/// Grid indices of the requested times.
pub fn trace_indices(grid: &GridSpec, times: &[f64]) -> Result<Vec<usize>> {
    times.iter().map(|&t| grid.index_of_time(t)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub acceptance_rate: f64,
    pub n_steps: usize,
    pub n_accepted: usize,
    /// Mean of `min(1, exp(log_ratio))` over all steps.
    pub mean_acc_prob: f64,
    pub metric_failures: usize,
    /// Per grid index (1-based), the value after every step.
    pub traces: BTreeMap<usize, Vec<f64>>,
    /// QVe of each proposed path.
    pub qve_series: Vec<f64>,
    /// Number of post-burn-in states entering the coordinate moments.
    pub moment_count: usize,
    pub coord_mean: Vec<f64>,
    /// Sample variance (denominator `count − 1`, zero for a single state).
    pub coord_var: Vec<f64>,
}

/// Streaming accumulator behind [`ChainSummary`].
#[derive(Debug, Clone)]
pub struct SummaryBuilder {
    burn_in: usize,
    n_steps: usize,
    n_accepted: usize,
    acc_prob_sum: f64,
    metric_failures: usize,
    traces: BTreeMap<usize, Vec<f64>>,
    qve_series: Vec<f64>,
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl SummaryBuilder {
    pub fn new(dim: usize, trace_indices: &[usize], burn_in: usize) -> Result<Self> {
        let mut traces = BTreeMap::new();
        for &j in trace_indices {
            if j == 0 || j > dim {
                return Err(Error::IndexOutOfRange { index: j, n: dim });
            }
            traces.insert(j, Vec::new());
        }
        Ok(Self {
            burn_in,
            n_steps: 0,
            n_accepted: 0,
            acc_prob_sum: 0.0,
            metric_failures: 0,
            traces,
            qve_series: Vec::new(),
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        })
    }

    /// Records one step and the state it left the chain in.
    pub fn push(&mut self, record: &StepRecord, x: &[f64]) {
        self.n_steps += 1;
        self.n_accepted += record.accepted as usize;
        self.acc_prob_sum += record.acc_prob;
        self.metric_failures += record.metric_failed as usize;
        self.qve_series.push(record.qve_proposed);
        for (&j, series) in self.traces.iter_mut() {
            series.push(x[j - 1]);
        }
        if self.n_steps > self.burn_in {
            // Welford
            self.count += 1;
            let k = self.count as f64;
            for ((m, m2), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
                let d = v - *m;
                *m += d / k;
                *m2 += d * (v - *m);
            }
        }
    }

    pub fn finish(self) -> Result<ChainSummary> {
        if self.n_steps == 0 {
            return Err(Error::EmptyChain);
        }
        let denom = if self.count > 1 {
            (self.count - 1) as f64
        } else {
            1.0
        };
        let coord_var = if self.count > 1 {
            self.m2.iter().map(|m2| m2 / denom).collect()
        } else {
            vec![0.0; self.m2.len()]
        };
        Ok(ChainSummary {
            acceptance_rate: self.n_accepted as f64 / self.n_steps as f64,
            n_steps: self.n_steps,
            n_accepted: self.n_accepted,
            mean_acc_prob: self.acc_prob_sum / self.n_steps as f64,
            metric_failures: self.metric_failures,
            traces: self.traces,
            qve_series: self.qve_series,
            moment_count: self.count,
            coord_mean: self.mean,
            coord_var,
        })
    }
}

/// Summarizes a recorded chain; `states[k]` is the path after step `k`.
pub fn summarize<S: AsRef<[f64]>>(
    records: &[StepRecord],
    states: &[S],
    trace_indices: &[usize],
    burn_in: usize,
) -> Result<ChainSummary> {
    if records.is_empty() {
        return Err(Error::EmptyChain);
    }
    if records.len() != states.len() {
        return Err(Error::DimensionMismatch {
            expected: records.len(),
            got: states.len(),
        });
    }
    let dim = states[0].as_ref().len();
    let mut builder = SummaryBuilder::new(dim, trace_indices, burn_in)?;
    for (r, x) in records.iter().zip(states) {
        builder.push(r, x.as_ref());
    }
    builder.finish()
}

/// Mean and marginal variances of a Gaussian posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub marginal_var: Vec<f64>,
}

/// Largest grid handled by the dense posterior oracle.
pub const EXACT_POSTERIOR_MAX_DIM: usize = 500;

/// Hessian of the discretized `Φ` when the drift is affine and `f` is the
/// identity (the only case in which it is constant).
///
/// For `a(x) = c0 + c1·x` the increment term
/// `−a(xⱼ₋₁)(xⱼ − xⱼ₋₁) + ½a(xⱼ₋₁)²δ` contributes `2c1 + c1²δ` to the
/// `(j−1, j−1)` entry and `−c1` to the `(j−1, j)` entry; `x₀ = x*` is fixed,
/// so the last grid point gets no diagonal Girsanov contribution.
pub fn phi_hessian(target: &DiffusionTarget) -> Result<SymTridiag> {
    let (c1, _) = linear_gaussian_coeffs(target)?;
    let n = target.dim();
    let delta = target.grid().delta();
    let mut diag = vec![2.0 * c1 + c1 * c1 * delta; n];
    diag[n - 1] = 0.0;
    let off = vec![-c1; n - 1];
    let inv_s2 = 1.0 / target.obs().sigma2();
    for &j in target.obs().indices() {
        diag[j - 1] += inv_s2;
    }
    SymTridiag::new(diag, off)
}

fn linear_gaussian_coeffs(target: &DiffusionTarget) -> Result<(f64, f64)> {
    let c = match target.fns().drift {
        Drift::Affine { c0, c1 } => (c1, c0),
        other => {
            return Err(Error::UnsupportedModel(format!(
                "drift {other} is not affine"
            )))
        }
    };
    if target.fns().obs_map != ObsMap::Identity {
        return Err(Error::UnsupportedModel(format!(
            "observation map {} is not the identity",
            target.fns().obs_map
        )));
    }
    Ok(c)
}

/// Exact posterior for affine drift and identity observations, by dense
/// algebra on `P = L + ∇²Φ`, `P·m = L·μ − ∇Φ(0)`.
pub fn exact_gaussian_posterior(target: &DiffusionTarget) -> Result<GaussianPosterior> {
    let n = target.dim();
    if n > EXACT_POSTERIOR_MAX_DIM {
        return Err(Error::UnsupportedModel(format!(
            "dense posterior limited to N ≤ {EXACT_POSTERIOR_MAX_DIM}, got {n}"
        )));
    }
    let hess = phi_hessian(target)?;
    let l = target.prior_precision();
    let mut p = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        p[(i, i)] = l.diag()[i] + hess.diag()[i];
        if i + 1 < n {
            let v = l.off()[i] + hess.off()[i];
            p[(i, i + 1)] = v;
            p[(i + 1, i)] = v;
        }
    }
    let grad0 = target.grad_phi(&vec![0.0; n])?;
    let rhs = nalgebra::DVector::from_iterator(
        n,
        target
            .prior_shift()
            .iter()
            .zip(&grad0)
            .map(|(lm, g)| lm - g),
    );
    let chol = p.cholesky().ok_or(Error::NotPositiveDefinite {
        index: 0,
        pivot: f64::NAN,
    })?;
    let mean = chol.solve(&rhs);
    let cov = chol.inverse();
    Ok(GaussianPosterior {
        mean: mean.iter().copied().collect(),
        marginal_var: (0..n).map(|i| cov[(i, i)]).collect(),
    })
}
