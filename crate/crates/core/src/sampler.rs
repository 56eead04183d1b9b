//! Metropolis–Hastings kernels built on time-discretized manifold Langevin
//! dynamics.
//!
//! Three kernels share one state type:
//!
//! * [`Algorithm::InfMmala`]: semi-implicit proposal
//!   `x′ = a_keep·x + a_drift·S(x) + a_noise·𝒩(0, G(x)⁻¹)` with the
//!   acceptance ratio written as a density against the Gaussian reference, so
//!   it stays non-degenerate as the mesh is refined.
//! * [`Algorithm::InfMala`]: the same proposal with `G(x) ≡ L`.
//! * [`Algorithm::Mmala`]: explicit Euler step
//!   `x′ = x + (h/2)·G(x)⁻¹∇ℒ(x) + √h·𝒩(0, G(x)⁻¹)` with an ordinary
//!   finite-dimensional MH correction.
//!
//! All ratios are computed in log space.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{qv_estimate, ChainSummary, SummaryBuilder};
use crate::error::{check_len, Error, Result};
use crate::model::{brownian_bridge_fill_with_noise, DiffusionTarget, Path};
use crate::tridiag::{standard_normals, CholBidiag, SymTridiag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    InfMmala,
    InfMala,
    Mmala,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::InfMmala, Algorithm::InfMala, Algorithm::Mmala];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::InfMmala => "inf-mmala",
            Algorithm::InfMala => "inf-mala",
            Algorithm::Mmala => "mmala",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument {
                field: "algo",
                reason: format!("unknown algorithm `{s}` (expected inf-mmala, inf-mala or mmala)"),
            })
    }
}

/// Step size `h` and the scalars of the semi-implicit proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalCoeffs {
    pub h: f64,
    pub a_keep: f64,
    pub a_drift: f64,
    pub a_noise: f64,
}

impl ProposalCoeffs {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument {
                field: "h",
                reason: format!("step size must be positive and finite, got {h}"),
            });
        }
        let denom = 1.0 + h / 4.0;
        Ok(Self {
            h,
            a_keep: (1.0 - h / 4.0) / denom,
            a_drift: (h / 2.0) / denom,
            a_noise: h.sqrt() / denom,
        })
    }
}

/// Current path together with everything the kernels need about it.
#[derive(Debug, Clone)]
pub struct ChainState {
    x: Path,
    phi: f64,
    g: SymTridiag,
    gf: CholBidiag,
    s: Vec<f64>,
    logdet_g: f64,
}

impl ChainState {
    /// Builds caches using the target's own metric tensor.
    pub fn new(target: &DiffusionTarget, x: Path) -> Result<Self> {
        let g = target.metric_tensor(&x)?;
        let gf = g.cholesky()?;
        Self::from_metric(target, x, g, gf)
    }

    fn from_metric(
        target: &DiffusionTarget,
        x: Path,
        g: SymTridiag,
        gf: CholBidiag,
    ) -> Result<Self> {
        let phi = target.phi(&x)?.total;
        let s = target.s_vector(&x, &g, &gf)?;
        let logdet_g = gf.log_det();
        Ok(Self {
            x,
            phi,
            g,
            gf,
            s,
            logdet_g,
        })
    }

    pub fn x(&self) -> &Path {
        &self.x
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// `G(x)`.
    pub fn metric(&self) -> &SymTridiag {
        &self.g
    }

    pub fn metric_factor(&self) -> &CholBidiag {
        &self.gf
    }

    /// `S(x)`.
    pub fn s(&self) -> &[f64] {
        &self.s
    }

    /// `log|G(x)|`.
    pub fn logdet_g(&self) -> f64 {
        self.logdet_g
    }

    /// Largest relative deviation of the cached quantities from a fresh
    /// recomputation under `target`'s metric.
    pub fn cache_error(&self, target: &DiffusionTarget) -> Result<f64> {
        let fresh = ChainState::new(target, self.x.clone())?;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        let mut err = rel(self.phi, fresh.phi).max(rel(self.logdet_g, fresh.logdet_g));
        for (a, b) in self.s.iter().zip(&fresh.s) {
            err = err.max(rel(*a, *b));
        }
        for (a, b) in self.g.diag().iter().zip(fresh.g.diag()) {
            err = err.max(rel(*a, *b));
        }
        Ok(err)
    }
}

/// Bookkeeping for one Metropolis–Hastings step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub accepted: bool,
    pub log_ratio: f64,
    /// Quadratic variation of the proposed path.
    pub qve_proposed: f64,
    /// `min(1, exp(log_ratio))`.
    pub acc_prob: f64,
    /// The proposal's metric tensor failed to factorize; the step was rejected.
    pub metric_failed: bool,
}

pub fn acceptance_probability(log_ratio: f64) -> f64 {
    if log_ratio.is_nan() {
        0.0
    } else {
        log_ratio.min(0.0).exp()
    }
}

/// Metropolis decision `log u < log_ratio`.
pub fn accept(u: f64, log_ratio: f64) -> bool {
    u.ln() < log_ratio
}

/// Draws `w ~ 𝒩(0, G(x)⁻¹)` and returns `(x′, v)` with
/// `v = (√h/2)·S(x) + w` and `x′ = a_keep·x + a_noise·v`.
pub fn propose<R: Rng + ?Sized>(
    state: &ChainState,
    c: &ProposalCoeffs,
    rng: &mut R,
) -> (Path, Vec<f64>) {
    let w = state.gf.sample_zero_mean(rng);
    propose_with_noise(state, c, &w).expect("noise drawn with state dimension")
}

/// As [`propose`] with the Gaussian increment `w` supplied.
pub fn propose_with_noise(
    state: &ChainState,
    c: &ProposalCoeffs,
    w: &[f64],
) -> Result<(Path, Vec<f64>)> {
    check_len(state.x.len(), w.len())?;
    let half_sqrt_h = 0.5 * c.h.sqrt();
    let v: Vec<f64> = state
        .s
        .iter()
        .zip(w)
        .map(|(s, w)| half_sqrt_h * s + w)
        .collect();
    let x_prime = state
        .x
        .iter()
        .zip(&v)
        .map(|(x, v)| c.a_keep * x + c.a_noise * v)
        .collect::<Vec<_>>();
    Ok((Path::new(x_prime), v))
}

/// Inverse of `v ↦ a_keep·x + a_noise·v`: `v = [(1 + h/4)x′ − (1 − h/4)x]/√h`.
pub fn rho_inverse(x_prime: &[f64], x: &[f64], h: f64) -> Result<Vec<f64>> {
    check_len(x.len(), x_prime.len())?;
    let (up, down, sqrt_h) = (1.0 + h / 4.0, 1.0 - h / 4.0, h.sqrt());
    Ok(x_prime
        .iter()
        .zip(x)
        .map(|(xp, x)| (up * xp - down * x) / sqrt_h)
        .collect())
}

/// Log-density of `𝒩((√h/2)·s, G⁻¹)` against `𝒩(0, L⁻¹)` at `v`, omitting
/// the state-independent constant `−½ log|L|`:
///
/// ```text
/// (√h/2)·sᵀGv − (h/8)·sᵀGs − ½·vᵀ(G − L)v + ½·log|G|
/// ```
pub fn log_lambda(
    v: &[f64],
    s: &[f64],
    g: &SymTridiag,
    logdet_g: f64,
    prior_precision: &SymTridiag,
    h: f64,
) -> Result<f64> {
    let cross = g.quad_form(s, v)?;
    let norm = g.quad_form(s, s)?;
    let excess = g.quad_form_diff(prior_precision, v)?;
    Ok(0.5 * h.sqrt() * cross - h / 8.0 * norm - 0.5 * excess + 0.5 * logdet_g)
}

/// `log (dμᵀ/dμ)(x, x′)` for the semi-implicit proposal.
///
/// The reference kernel `x′ = a_keep·x + a_noise·𝒩(0, L⁻¹)` is reversible
/// only for a centred Gaussian, so the ratio is assembled in the coordinates
/// `x − μ`, where the drift vector becomes `S(x) − μ`. For `μ = 0` this is
/// the uncentred formula verbatim.
pub fn log_accept_ratio(
    target: &DiffusionTarget,
    state: &ChainState,
    cand: &ChainState,
    h: f64,
) -> Result<f64> {
    let mu = target.grid().x_star();
    let l = target.prior_precision();
    let centre = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x - mu).collect() };
    let (x, x_prime) = (centre(&state.x), centre(&cand.x));

    let v_back = rho_inverse(&x, &x_prime, h)?;
    let v_fwd = rho_inverse(&x_prime, &x, h)?;
    let num = -cand.phi + log_lambda(&v_back, &centre(&cand.s), &cand.g, cand.logdet_g, l, h)?;
    let den = -state.phi + log_lambda(&v_fwd, &centre(&state.s), &state.g, state.logdet_g, l, h)?;
    Ok(num - den)
}

/// Mean of the explicit Euler proposal, `x + (h/2)·G(x)⁻¹∇ℒ(x)`.
///
/// Uses `G(x)⁻¹∇ℒ(x) = S(x) − x`.
pub fn mmala_mean(state: &ChainState, h: f64) -> Vec<f64> {
    state
        .x
        .iter()
        .zip(&state.s)
        .map(|(x, s)| x + 0.5 * h * (s - x))
        .collect()
}

/// `log q(x → x′)` for the explicit Euler proposal, up to a constant.
pub fn mmala_log_proposal(from: &ChainState, to: &[f64], h: f64) -> Result<f64> {
    check_len(from.x.len(), to.len())?;
    let m = mmala_mean(from, h);
    let r: Vec<f64> = to.iter().zip(&m).map(|(t, m)| t - m).collect();
    Ok(0.5 * from.logdet_g - from.g.quad_form(&r, &r)? / (2.0 * h))
}

/// Standard MH log ratio `[ℒ(x′) + log q(x′→x)] − [ℒ(x) + log q(x→x′)]`.
pub fn mmala_log_ratio(
    target: &DiffusionTarget,
    state: &ChainState,
    cand: &ChainState,
    h: f64,
) -> Result<f64> {
    let log_target = |st: &ChainState| -> Result<f64> { Ok(-st.phi - target.prior_energy(&st.x)?) };
    let num = log_target(cand)? + mmala_log_proposal(cand, &state.x, h)?;
    let den = log_target(state)? + mmala_log_proposal(state, &cand.x, h)?;
    Ok(num - den)
}

/// A Metropolis–Hastings kernel bound to one target.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    target: &'a DiffusionTarget,
    algo: Algorithm,
    coeffs: ProposalCoeffs,
    prior_factor: CholBidiag,
}

impl<'a> Sampler<'a> {
    pub fn new(target: &'a DiffusionTarget, algo: Algorithm, h: f64) -> Result<Self> {
        Ok(Self {
            target,
            algo,
            coeffs: ProposalCoeffs::new(h)?,
            prior_factor: target.prior_precision().cholesky()?,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algo
    }

    pub fn coeffs(&self) -> &ProposalCoeffs {
        &self.coeffs
    }

    pub fn target(&self) -> &DiffusionTarget {
        self.target
    }

    /// Caches for `x` under this kernel's geometry. ∞-MALA reuses the
    /// precomputed factor of `L` instead of the target's metric tensor.
    pub fn state(&self, x: Path) -> Result<ChainState> {
        match self.algo {
            Algorithm::InfMala => ChainState::from_metric(
                self.target,
                x,
                self.target.prior_precision().clone(),
                self.prior_factor.clone(),
            ),
            Algorithm::InfMmala | Algorithm::Mmala => ChainState::new(self.target, x),
        }
    }

    /// One MH step; draws `N` standard normals and then one uniform.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: ChainState,
        rng: &mut R,
    ) -> Result<(ChainState, StepRecord)> {
        let z = standard_normals(rng, state.x.len());
        let u: f64 = rng.random();
        self.step_with(state, &z, u)
    }

    /// One MH step driven by the given standard normals `z` and uniform `u`.
    pub fn step_with(
        &self,
        state: ChainState,
        z: &[f64],
        u: f64,
    ) -> Result<(ChainState, StepRecord)> {
        let x_prime = self.proposal_from_normals(&state, z)?;
        let qve_proposed = qv_estimate(&x_prime, self.target.grid().x_star());

        let cand = match self.state(x_prime) {
            Ok(cand) => cand,
            Err(Error::NotPositiveDefinite { .. }) => {
                let record = StepRecord {
                    accepted: false,
                    log_ratio: f64::NEG_INFINITY,
                    qve_proposed,
                    acc_prob: 0.0,
                    metric_failed: true,
                };
                return Ok((state, record));
            }
            Err(e) => return Err(e),
        };

        let log_ratio = self.log_ratio(&state, &cand)?;
        let accepted = accept(u, log_ratio);
        let record = StepRecord {
            accepted,
            log_ratio,
            qve_proposed,
            acc_prob: acceptance_probability(log_ratio),
            metric_failed: false,
        };
        Ok((if accepted { cand } else { state }, record))
    }

    pub fn proposal_from_normals(&self, state: &ChainState, z: &[f64]) -> Result<Path> {
        let w = state.gf.sample_from_normals(z)?;
        match self.algo {
            Algorithm::InfMmala | Algorithm::InfMala => {
                Ok(propose_with_noise(state, &self.coeffs, &w)?.0)
            }
            Algorithm::Mmala => {
                let sqrt_h = self.coeffs.h.sqrt();
                let m = mmala_mean(state, self.coeffs.h);
                Ok(Path::new(
                    m.iter().zip(&w).map(|(m, w)| m + sqrt_h * w).collect(),
                ))
            }
        }
    }

    pub fn log_ratio(&self, state: &ChainState, cand: &ChainState) -> Result<f64> {
        match self.algo {
            Algorithm::InfMmala | Algorithm::InfMala => {
                log_accept_ratio(self.target, state, cand, self.coeffs.h)
            }
            Algorithm::Mmala => mmala_log_ratio(self.target, state, cand, self.coeffs.h),
        }
    }
}

/// How the first path of a chain is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitStrategy {
    /// A draw from the Gaussian reference `𝒩(μ, L⁻¹)`.
    Prior,
    /// Brownian bridges through `value` at every observation time.
    FlatBridge(f64),
    /// Brownian bridges through `f⁻¹(yᵢ)` at every observation time.
    DataPinned,
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitStrategy::Prior => write!(f, "prior"),
            InitStrategy::FlatBridge(v) => write!(f, "flat_bridge({v})"),
            InitStrategy::DataPinned => write!(f, "data_pinned"),
        }
    }
}

/// Parses the [`Display`](fmt::Display) form: `prior`, `data_pinned` or
/// `flat_bridge(<value>)`.
impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument {
            field: "init",
            reason: format!(
                "unknown init `{s}` (expected prior, data_pinned or flat_bridge(<value>))"
            ),
        };
        match s {
            "prior" => Ok(InitStrategy::Prior),
            "data_pinned" => Ok(InitStrategy::DataPinned),
            _ => {
                let inner = s
                    .strip_prefix("flat_bridge(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(bad)?;
                let v: f64 = inner.trim().parse().map_err(|_| bad())?;
                if v.is_finite() {
                    Ok(InitStrategy::FlatBridge(v))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

pub fn init_path<R: Rng + ?Sized>(
    strategy: InitStrategy,
    target: &DiffusionTarget,
    rng: &mut R,
) -> Result<Path> {
    let z = standard_normals(rng, target.dim());
    init_path_with_noise(strategy, target, &z)
}

pub fn init_path_with_noise(
    strategy: InitStrategy,
    target: &DiffusionTarget,
    z: &[f64],
) -> Result<Path> {
    let grid = target.grid();
    let obs = target.obs();
    match strategy {
        InitStrategy::Prior => {
            let w = target
                .prior_precision()
                .cholesky()?
                .sample_from_normals(z)?;
            Ok(Path::new(w.iter().map(|w| grid.x_star() + w).collect()))
        }
        InitStrategy::FlatBridge(value) => {
            let pins = vec![value; obs.len()];
            brownian_bridge_fill_with_noise(grid, obs.indices(), &pins, z)
        }
        InitStrategy::DataPinned => {
            let f = &target.fns().obs_map;
            let pins = obs
                .values()
                .iter()
                .map(|&y| f.inverse(y))
                .collect::<Result<Vec<_>>>()?;
            brownian_bridge_fill_with_noise(grid, obs.indices(), &pins, z)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algo: Algorithm,
    pub h: f64,
    pub iters: usize,
    pub init: InitStrategy,
    /// Grid indices (1-based) whose values are recorded every step.
    pub trace_indices: Vec<usize>,
    /// Steps excluded from the coordinate moments.
    pub burn_in: usize,
}

/// Runs a chain from an initial path drawn with `rng`, then `iters` kernel
/// steps. `observer` sees every step after it is applied.
pub fn run_chain<R, F>(
    target: &DiffusionTarget,
    cfg: &RunConfig,
    rng: &mut R,
    mut observer: F,
) -> Result<ChainSummary>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &StepRecord, &ChainState),
{
    if cfg.iters == 0 {
        return Err(Error::InvalidArgument {
            field: "iters",
            reason: "at least one iteration is required".into(),
        });
    }
    let sampler = Sampler::new(target, cfg.algo, cfg.h)?;
    let x0 = init_path(cfg.init, target, rng)?;
    let mut state = sampler.state(x0)?;
    let mut summary = SummaryBuilder::new(target.dim(), &cfg.trace_indices, cfg.burn_in)?;
    for it in 0..cfg.iters {
        let (next, record) = sampler.step(state, rng)?;
        state = next;
        summary.push(&record, &state.x);
        observer(it, &record, &state);
    }
    summary.finish()
}

/// [`run_chain`] with a ChaCha8 generator seeded from `seed`.
pub fn run_chain_seeded<F>(
    target: &DiffusionTarget,
    cfg: &RunConfig,
    seed: u64,
    observer: F,
) -> Result<ChainSummary>
where
    F: FnMut(usize, &StepRecord, &ChainState),
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_chain(target, cfg, &mut rng, observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Drift, GridSpec, ModelFunctions, ObsMap, ObservationSet};

    fn gaussian_target(n: usize, delta: f64, x_star: f64) -> DiffusionTarget {
        let grid = GridSpec::new(n, delta, x_star).unwrap();
        let obs = ObservationSet::new(vec![n], vec![0.0], 1.0, n).unwrap();
        let fns = ModelFunctions {
            drift: Drift::zero(),
            obs_map: ObsMap::Constant(0.0),
        };
        DiffusionTarget::new(grid, obs, fns).unwrap()
    }

    fn small_paper_target() -> DiffusionTarget {
        let grid = GridSpec::new(6, 0.25, 2.0).unwrap();
        let obs = ObservationSet::new(vec![2, 4, 6], vec![3.0, 6.5, 8.2], 0.1, 6).unwrap();
        let fns = ModelFunctions {
            drift: Drift::Affine { c0: 4.0, c1: -1.0 },
            obs_map: ObsMap::Power32,
        };
        DiffusionTarget::new(grid, obs, fns).unwrap()
    }

    #[test]
    fn coeffs_at_unit_step() {
        let c = ProposalCoeffs::new(1.0).unwrap();
        assert!((c.a_keep - 0.6).abs() < 1e-15);
        assert!((c.a_drift - 0.4).abs() < 1e-15);
        assert!((c.a_noise - 0.8).abs() < 1e-15);
        assert!(ProposalCoeffs::new(0.0).is_err());
        assert!(ProposalCoeffs::new(f64::NAN).is_err());
    }

    #[test]
    fn algorithm_names_roundtrip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("mala".parse::<Algorithm>().is_err());
    }

    #[test]
    fn init_strategy_names_roundtrip() {
        for init in [
            InitStrategy::Prior,
            InitStrategy::DataPinned,
            InitStrategy::FlatBridge(2.0),
            InitStrategy::FlatBridge(-0.25),
        ] {
            assert_eq!(init.to_string().parse::<InitStrategy>().unwrap(), init);
        }
        assert_eq!(
            "flat_bridge( 2.0 )".parse::<InitStrategy>().unwrap(),
            InitStrategy::FlatBridge(2.0)
        );
        for bad in [
            "flat",
            "flat_bridge()",
            "flat_bridge(x)",
            "flat_bridge(inf)",
            "flat_bridge(2",
        ] {
            assert!(bad.parse::<InitStrategy>().is_err(), "{bad}");
        }
    }

    #[test]
    fn fixed_point_of_gaussian_reference() {
        let t = gaussian_target(5, 0.1, 1.5);
        let state = ChainState::new(&t, t.prior_mean()).unwrap();
        let c = ProposalCoeffs::new(1.0).unwrap();
        let (xp, _) = propose_with_noise(&state, &c, &[0.0; 5]).unwrap();
        for v in xp.iter() {
            assert!((v - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn proposal_forms_agree() {
        let t = small_paper_target();
        let x = Path::new(vec![2.3, 2.0, 2.9, 3.4, 3.8, 4.1]);
        let state = ChainState::new(&t, x.clone()).unwrap();
        let c = ProposalCoeffs::new(0.7).unwrap();
        let w = [0.3, -0.1, 0.05, 0.4, -0.7, 0.2];
        let (xp, v) = propose_with_noise(&state, &c, &w).unwrap();
        for i in 0..6 {
            let direct = c.a_keep * x[i] + c.a_drift * state.s()[i] + c.a_noise * w[i];
            assert!((xp[i] - direct).abs() < 1e-12);
        }
        let back = rho_inverse(&xp, &x, c.h).unwrap();
        for i in 0..6 {
            assert!((back[i] - v[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rho_inverse_of_pure_contraction_is_zero() {
        let c = ProposalCoeffs::new(1.0).unwrap();
        let x = [1.0, -2.0, 0.5];
        let xp: Vec<f64> = x.iter().map(|v| c.a_keep * v).collect();
        for v in rho_inverse(&xp, &x, 1.0).unwrap() {
            assert!(v.abs() < 1e-15);
        }
        assert!(rho_inverse(&xp[..2], &x, 1.0).is_err());
    }

    #[test]
    fn log_lambda_at_zero_noise() {
        let t = small_paper_target();
        let state = ChainState::new(&t, Path::new(vec![2.3, 2.0, 2.9, 3.4, 3.8, 4.1])).unwrap();
        let h = 0.5;
        let got = log_lambda(
            &[0.0; 6],
            state.s(),
            state.metric(),
            state.logdet_g(),
            t.prior_precision(),
            h,
        )
        .unwrap();
        let sgs = state.metric().quad_form(state.s(), state.s()).unwrap();
        assert!((got - (-h / 8.0 * sgs + 0.5 * state.logdet_g())).abs() < 1e-12);
    }

    #[test]
    fn gaussian_reference_is_rejection_free() {
        let t = gaussian_target(4, 0.3, 0.7);
        let sampler = Sampler::new(&t, Algorithm::InfMmala, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut state = sampler.state(t.prior_mean()).unwrap();
        for _ in 0..50 {
            let (next, rec) = sampler.step(state, &mut rng).unwrap();
            assert!(rec.accepted);
            assert!(rec.log_ratio.abs() < 1e-9);
            state = next;
        }
    }

    #[test]
    fn forced_uniform_rejects_negative_log_ratio() {
        let t = small_paper_target();
        let sampler = Sampler::new(&t, Algorithm::InfMmala, 1.0).unwrap();
        let x = Path::new(vec![2.3, 2.0, 2.9, 3.4, 3.8, 4.1]);
        let state = sampler.state(x.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = loop {
            let z = standard_normals(&mut rng, 6);
            let cand = sampler
                .state(sampler.proposal_from_normals(&state, &z).unwrap())
                .unwrap();
            if sampler.log_ratio(&state, &cand).unwrap() < 0.0 {
                break z;
            }
        };
        let (next, rec) = sampler.step_with(state, &z, 1.0).unwrap();
        assert!(rec.log_ratio < 0.0);
        assert!(!rec.accepted);
        assert_eq!(next.x(), &x);
        assert_eq!(rec.acc_prob, rec.log_ratio.exp());
    }

    #[test]
    fn candidate_metric_failure_is_rejection() {
        // With the smallest subnormal σ², f′(x)²/σ² overflows to +∞ as soon
        // as the proposal leaves x = 0, so the candidate factorization fails.
        let grid = GridSpec::new(2, 1.0, 0.0).unwrap();
        let obs = ObservationSet::new(vec![1], vec![0.0], f64::from_bits(1), 2).unwrap();
        let fns = ModelFunctions {
            drift: Drift::zero(),
            obs_map: ObsMap::Power32,
        };
        let t = DiffusionTarget::new(grid, obs, fns).unwrap();
        let sampler = Sampler::new(&t, Algorithm::InfMmala, 1.0).unwrap();
        let state = sampler.state(Path::new(vec![0.0, 0.0])).unwrap();
        let (next, rec) = sampler.step_with(state, &[1.0, 1.0], 0.5).unwrap();
        assert!(rec.metric_failed);
        assert!(!rec.accepted);
        assert_eq!(rec.log_ratio, f64::NEG_INFINITY);
        assert_eq!(next.x().as_ref(), &[0.0, 0.0]);
    }

    #[test]
    fn init_strategies_with_forced_noise() {
        let t = small_paper_target();
        let zero = [0.0; 6];
        let p = init_path_with_noise(InitStrategy::Prior, &t, &zero).unwrap();
        assert!(p.iter().all(|&v| v == 2.0));
        let p = init_path_with_noise(InitStrategy::FlatBridge(2.0), &t, &zero).unwrap();
        assert!(p.iter().all(|&v| (v - 2.0).abs() < 1e-15));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = init_path(InitStrategy::DataPinned, &t, &mut rng).unwrap();
        for (&j, &y) in t.obs().indices().iter().zip(t.obs().values()) {
            assert_eq!(p[j - 1], ObsMap::Power32.inverse(y).unwrap());
        }

        let grid = *t.grid();
        let constant = DiffusionTarget::new(
            grid,
            t.obs().clone(),
            ModelFunctions {
                drift: Drift::zero(),
                obs_map: ObsMap::Constant(1.0),
            },
        )
        .unwrap();
        assert!(matches!(
            init_path(InitStrategy::DataPinned, &constant, &mut rng),
            Err(Error::NonInvertibleObsMap(_))
        ));
    }

    #[test]
    fn accepted_state_caches_stay_fresh() {
        let t = small_paper_target();
        let cfg = RunConfig {
            algo: Algorithm::InfMmala,
            h: 0.5,
            iters: 200,
            init: InitStrategy::FlatBridge(2.0),
            trace_indices: vec![],
            burn_in: 0,
        };
        let mut worst: f64 = 0.0;
        run_chain_seeded(&t, &cfg, 4, |_, _, st| {
            worst = worst.max(st.cache_error(&t).unwrap());
        })
        .unwrap();
        assert!(worst < 1e-12, "cache drift {worst}");
    }

    #[test]
    fn run_chain_single_iteration() {
        let t = small_paper_target();
        let cfg = RunConfig {
            algo: Algorithm::Mmala,
            h: 0.1,
            iters: 1,
            init: InitStrategy::DataPinned,
            trace_indices: vec![2],
            burn_in: 0,
        };
        let mut accepted = None;
        let s = run_chain_seeded(&t, &cfg, 0, |_, r, _| accepted = Some(r.accepted)).unwrap();
        assert_eq!(s.n_steps, 1);
        let expected = if accepted.unwrap() { 1.0 } else { 0.0 };
        assert_eq!(s.acceptance_rate, expected);
        assert_eq!(s.traces[&2].len(), 1);

        let bad = RunConfig { iters: 0, ..cfg };
        assert!(run_chain_seeded(&t, &bad, 0, |_, _, _| {}).is_err());
    }

    #[test]
    fn seeded_runs_are_deterministic() {
        let t = small_paper_target();
        let cfg = RunConfig {
            algo: Algorithm::InfMmala,
            h: 1.0,
            iters: 100,
            init: InitStrategy::Prior,
            trace_indices: vec![1, 4],
            burn_in: 10,
        };
        let a = run_chain_seeded(&t, &cfg, 99, |_, _, _| {}).unwrap();
        let b = run_chain_seeded(&t, &cfg, 99, |_, _, _| {}).unwrap();
        assert_eq!(a, b);
    }
}
