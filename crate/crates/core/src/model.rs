//! Discretized posterior of a scalar diffusion path observed with error.
//!
//! The latent path solves `dx = a(x) dt + dw`, `x₀ = x*`, and is observed at
//! grid times through `yᵢ = f(x_{tᵢ}) + 𝒩(0, σ²)`. On a uniform grid of mesh
//! `δ` with `N` points the target has log-density
//!
//! ```text
//! ℒ(x) = −Φ(x) − ½ (x − μ)ᵀ L (x − μ),   Φ = Φ_σ + Φ_a,
//! Φ_σ(x) = Σᵢ (yᵢ − f(x_{jᵢ}))² / (2σ²),
//! Φ_a(x) = Σⱼ [ −a(xⱼ₋₁)(xⱼ − xⱼ₋₁) + ½ a(xⱼ₋₁)² δ ],
//! ```
//!
//! where `μ ≡ x*` and `L` is the tridiagonal Brownian-motion precision.
//! `exp{−Φ_a}` is the left-point (Itô) discretization of the Girsanov density
//! of the diffusion against Brownian motion.

use std::fmt;
use std::ops::{Deref, DerefMut};

use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::tridiag::{standard_normals, CholBidiag, SymTridiag};

/// Relative tolerance used when snapping times onto the grid.
const GRID_TOL: f64 = 1e-9;

/// Uniform time grid `δ, 2δ, …, Nδ` with the fixed initial value `x*` at time 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: usize,
    delta: f64,
    x_star: f64,
}

impl GridSpec {
    pub fn new(n: usize, delta: f64, x_star: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument {
                field: "n",
                reason: "grid needs at least one point".into(),
            });
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument {
                field: "delta",
                reason: format!("mesh must be positive and finite, got {delta}"),
            });
        }
        if !x_star.is_finite() {
            return Err(Error::InvalidArgument {
                field: "x_star",
                reason: "initial value must be finite".into(),
            });
        }
        Ok(Self { n, delta, x_star })
    }

    /// Grid covering `[0, t_end]`; `t_end / delta` must be an integer.
    pub fn with_horizon(t_end: f64, delta: f64, x_star: f64) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidArgument {
                field: "t_end",
                reason: format!("horizon must be positive and finite, got {t_end}"),
            });
        }
        let n = steps_in(t_end, delta).ok_or(Error::OffGridTime { time: t_end, delta })?;
        Self::new(n, delta, x_star)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn x_star(&self) -> f64 {
        self.x_star
    }

    /// `T = N·δ`.
    pub fn t_end(&self) -> f64 {
        self.n as f64 * self.delta
    }

    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 * self.delta
    }

    /// Grid index `j ∈ 1..=N` with `j·δ = t`.
    pub fn index_of_time(&self, t: f64) -> Result<usize> {
        match steps_in(t, self.delta) {
            Some(j) if j >= 1 && j <= self.n => Ok(j),
            _ => Err(Error::OffGridTime {
                time: t,
                delta: self.delta,
            }),
        }
    }

    /// Same horizon and initial value with `factor` times as many points.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument {
                field: "factor",
                reason: "refinement factor must be positive".into(),
            });
        }
        Self::new(self.n * factor, self.delta / factor as f64, self.x_star)
    }
}

fn steps_in(t: f64, delta: f64) -> Option<usize> {
    if !t.is_finite() || !(delta > 0.0) {
        return None;
    }
    let ratio = t / delta;
    let j = ratio.round();
    if j < 0.0 || (ratio - j).abs() > GRID_TOL * j.max(1.0) {
        return None;
    }
    Some(j as usize)
}

/// Discretized path `(x₁, …, x_N)`; `x₀ = x*` is implicit and never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Path(Vec<f64>);

impl Path {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(vec![value; n])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Path {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Deref for Path {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Path {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Drift `a(x)` of the latent diffusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drift {
    /// `a(x) = c0 + c1·x`.
    Affine { c0: f64, c1: f64 },
    /// `a(x) = amplitude·sin(x)`.
    Sine { amplitude: f64 },
}

impl Drift {
    pub fn zero() -> Self {
        Drift::Affine { c0: 0.0, c1: 0.0 }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Drift::Affine { c0, c1 } => c0 + c1 * x,
            Drift::Sine { amplitude } => amplitude * x.sin(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Drift::Affine { c1, .. } => c1,
            Drift::Sine { amplitude } => amplitude * x.cos(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(*self, Drift::Affine { c0, c1 } if c0 == 0.0 && c1 == 0.0)
            || matches!(*self, Drift::Sine { amplitude } if amplitude == 0.0)
    }
}

impl fmt::Display for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Drift::Affine { c0, c1 } => write!(f, "affine({c0}, {c1})"),
            Drift::Sine { amplitude } => write!(f, "sine({amplitude})"),
        }
    }
}

/// Observation map `f(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObsMap {
    Identity,
    /// `f(x) = sign(x)·|x|^{3/2}`, the odd C¹ extension of `x^{3/2}`.
    Power32,
    /// `f(x) = c`; carries no information about the path.
    Constant(f64),
}

impl ObsMap {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ObsMap::Identity => x,
            ObsMap::Power32 => x.signum() * x.abs().powf(1.5),
            ObsMap::Constant(c) => c,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            ObsMap::Identity => 1.0,
            ObsMap::Power32 => 1.5 * x.abs().sqrt(),
            ObsMap::Constant(_) => 0.0,
        }
    }

    pub fn inverse(&self, y: f64) -> Result<f64> {
        match *self {
            ObsMap::Identity => Ok(y),
            ObsMap::Power32 => Ok(y.signum() * y.abs().powf(2.0 / 3.0)),
            ObsMap::Constant(_) => Err(Error::NonInvertibleObsMap(self.to_string())),
        }
    }
}

impl fmt::Display for ObsMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ObsMap::Identity => write!(f, "identity"),
            ObsMap::Power32 => write!(f, "power32"),
            ObsMap::Constant(c) => write!(f, "constant({c})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelFunctions {
    pub drift: Drift,
    pub obs_map: ObsMap,
}

/// Observations `yᵢ` at grid indices `jᵢ` (1-based, `tᵢ = jᵢ·δ`).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    indices: Vec<usize>,
    values: Vec<f64>,
    sigma2: f64,
}

impl ObservationSet {
    pub fn new(indices: Vec<usize>, values: Vec<f64>, sigma2: f64, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument {
                field: "indices",
                reason: "at least one observation is required".into(),
            });
        }
        check_len(indices.len(), values.len())?;
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidArgument {
                field: "sigma2",
                reason: format!("observation variance must be positive, got {sigma2}"),
            });
        }
        validate_indices(&indices, n)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument {
                field: "values",
                reason: "observations must be finite".into(),
            });
        }
        Ok(Self {
            indices,
            values,
            sigma2,
        })
    }

    pub fn from_times(
        times: &[f64],
        values: Vec<f64>,
        sigma2: f64,
        grid: &GridSpec,
    ) -> Result<Self> {
        let indices = times
            .iter()
            .map(|&t| grid.index_of_time(t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices, values, sigma2, grid.n())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// The same data on a grid with `factor` times as many points.
    pub fn refine(&self, factor: usize, fine_n: usize) -> Result<Self> {
        Self::new(
            self.indices.iter().map(|j| j * factor).collect(),
            self.values.clone(),
            self.sigma2,
            fine_n,
        )
    }
}

fn validate_indices(indices: &[usize], n: usize) -> Result<()> {
    for (k, &j) in indices.iter().enumerate() {
        if j == 0 || j > n {
            return Err(Error::IndexOutOfRange { index: j, n });
        }
        if k > 0 && j <= indices[k - 1] {
            return Err(Error::InvalidArgument {
                field: "indices",
                reason: "grid indices must be strictly increasing".into(),
            });
        }
    }
    Ok(())
}

/// Which positive-definite operator is used as the metric tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetricKind {
    /// `G(x) = D(x) + L` with `D` the expected Fisher information of `Φ_σ`.
    #[default]
    ExpectedFisher,
    /// `G(x) ≡ L`.
    Prior,
}

/// The three pieces of `Φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiParts {
    pub total: f64,
    pub sigma: f64,
    pub girsanov: f64,
}

/// Prior precision of Brownian motion started at `x*`: `tridiag(−1, 2, −1)/δ`
/// with the last diagonal entry `1/δ`.
pub fn build_prior_precision(grid: &GridSpec) -> SymTridiag {
    let n = grid.n();
    let inv = 1.0 / grid.delta();
    let mut diag = vec![2.0 * inv; n];
    diag[n - 1] = inv;
    SymTridiag::new(diag, vec![-inv; n - 1]).expect("lengths are consistent by construction")
}

/// Posterior of the discretized path given the observations.
#[derive(Debug, Clone)]
pub struct DiffusionTarget {
    grid: GridSpec,
    obs: ObservationSet,
    fns: ModelFunctions,
    prior_precision: SymTridiag,
    prior_shift: Vec<f64>,
    metric: MetricKind,
}

impl DiffusionTarget {
    pub fn new(grid: GridSpec, obs: ObservationSet, fns: ModelFunctions) -> Result<Self> {
        validate_indices(obs.indices(), grid.n())?;
        let prior_precision = build_prior_precision(&grid);
        // L·μ for μ ≡ x*: every row of L sums to zero except the first.
        let mut prior_shift = vec![0.0; grid.n()];
        prior_shift[0] = grid.x_star() / grid.delta();
        Ok(Self {
            grid,
            obs,
            fns,
            prior_precision,
            prior_shift,
            metric: MetricKind::ExpectedFisher,
        })
    }

    pub fn with_metric(mut self, metric: MetricKind) -> Self {
        self.metric = metric;
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn obs(&self) -> &ObservationSet {
        &self.obs
    }

    pub fn fns(&self) -> &ModelFunctions {
        &self.fns
    }

    pub fn metric_kind(&self) -> MetricKind {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.grid.n()
    }

    /// `L = 𝒞⁻¹`.
    pub fn prior_precision(&self) -> &SymTridiag {
        &self.prior_precision
    }

    /// `L·μ`, which is `(x*/δ)·e₁`.
    pub fn prior_shift(&self) -> &[f64] {
        &self.prior_shift
    }

    pub fn prior_mean(&self) -> Path {
        Path::constant(self.grid.n(), self.grid.x_star())
    }

    pub fn phi(&self, x: &[f64]) -> Result<PhiParts> {
        check_len(self.dim(), x.len())?;
        let f = &self.fns.obs_map;
        let two_s2 = 2.0 * self.obs.sigma2();
        let sigma = self
            .obs
            .indices()
            .iter()
            .zip(self.obs.values())
            .map(|(&j, &y)| {
                let r = y - f.value(x[j - 1]);
                r * r / two_s2
            })
            .sum::<f64>();

        let girsanov = if self.fns.drift.is_zero() {
            0.0
        } else {
            let a = &self.fns.drift;
            let delta = self.grid.delta();
            let mut prev = self.grid.x_star();
            let mut acc = 0.0;
            for &xj in x {
                let ap = a.value(prev);
                acc += -ap * (xj - prev) + 0.5 * ap * ap * delta;
                prev = xj;
            }
            acc
        };

        Ok(PhiParts {
            total: sigma + girsanov,
            sigma,
            girsanov,
        })
    }

    /// Exact gradient of the discretized `Φ`.
    pub fn grad_phi(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        check_len(n, x.len())?;
        let mut grad = vec![0.0; n];

        let f = &self.fns.obs_map;
        let s2 = self.obs.sigma2();
        for (&j, &y) in self.obs.indices().iter().zip(self.obs.values()) {
            let xj = x[j - 1];
            grad[j - 1] -= (y - f.value(xj)) * f.derivative(xj) / s2;
        }

        if !self.fns.drift.is_zero() {
            let a = &self.fns.drift;
            let delta = self.grid.delta();
            // x_k enters increment k as the right endpoint and increment k+1
            // as the left endpoint; the last point only has the former.
            let mut prev = self.grid.x_star();
            for k in 0..n {
                let xk = x[k];
                let mut g = -a.value(prev);
                if k + 1 < n {
                    let (ak, dak) = (a.value(xk), a.derivative(xk));
                    g += -dak * (x[k + 1] - xk) + ak + ak * dak * delta;
                }
                grad[k] += g;
                prev = xk;
            }
        }
        Ok(grad)
    }

    /// Diagonal of `D(x) = G(x) − L`: `Σᵢ 𝟙[jᵢ = j]·f′(x_j)²/σ²`.
    pub fn fisher_diag(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        let mut d = vec![0.0; self.dim()];
        if self.metric == MetricKind::Prior {
            return Ok(d);
        }
        let f = &self.fns.obs_map;
        let s2 = self.obs.sigma2();
        for &j in self.obs.indices() {
            let fp = f.derivative(x[j - 1]);
            d[j - 1] += fp * fp / s2;
        }
        Ok(d)
    }

    /// `G(x) = D(x) + L` (or `L` under [`MetricKind::Prior`]).
    pub fn metric_tensor(&self, x: &[f64]) -> Result<SymTridiag> {
        let d = self.fisher_diag(x)?;
        let mut g = self.prior_precision.clone();
        for (gd, dd) in g.diag_mut().iter_mut().zip(d) {
            *gd += dd;
        }
        Ok(g)
    }

    /// `S(x) = −G(x)⁻¹ {∇Φ(x) − (G(x) − L)x − Lμ}`, given `G(x)` and its factor.
    pub fn s_vector(&self, x: &[f64], g: &SymTridiag, gf: &CholBidiag) -> Result<Vec<f64>> {
        let n = self.dim();
        check_len(n, x.len())?;
        check_len(n, g.dim())?;
        let mut r = self.grad_phi(x)?;
        let l = &self.prior_precision;
        for i in 0..n {
            let mut gx = (g.diag()[i] - l.diag()[i]) * x[i];
            if i > 0 {
                gx += (g.off()[i - 1] - l.off()[i - 1]) * x[i - 1];
            }
            if i + 1 < n {
                gx += (g.off()[i] - l.off()[i]) * x[i + 1];
            }
            r[i] -= gx + self.prior_shift[i];
        }
        let mut s = gf.solve(&r)?;
        s.iter_mut().for_each(|v| *v = -*v);
        Ok(s)
    }

    /// `½ (x − μ)ᵀ L (x − μ)`.
    pub fn prior_energy(&self, x: &[f64]) -> Result<f64> {
        check_len(self.dim(), x.len())?;
        let centered: Vec<f64> = x.iter().map(|v| v - self.grid.x_star()).collect();
        Ok(0.5 * self.prior_precision.quad_form(&centered, &centered)?)
    }

    /// `ℒ(x) = −Φ(x) − ½ (x − μ)ᵀ L (x − μ)`, up to a constant.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        Ok(-self.phi(x)?.total - self.prior_energy(x)?)
    }
}

/// Euler–Maruyama path `xⱼ = xⱼ₋₁ + a(xⱼ₋₁)δ + √δ·ξⱼ`.
pub fn simulate_path<R: Rng + ?Sized>(grid: &GridSpec, fns: &ModelFunctions, rng: &mut R) -> Path {
    let xi = standard_normals(rng, grid.n());
    simulate_path_with_noise(grid, fns, &xi).expect("noise length matches grid")
}

pub fn simulate_path_with_noise(grid: &GridSpec, fns: &ModelFunctions, xi: &[f64]) -> Result<Path> {
    check_len(grid.n(), xi.len())?;
    let delta = grid.delta();
    let sd = delta.sqrt();
    let mut prev = grid.x_star();
    let values = xi
        .iter()
        .map(|&z| {
            prev = prev + fns.drift.value(prev) * delta + sd * z;
            prev
        })
        .collect();
    Ok(Path(values))
}

/// `yᵢ = f(x_{jᵢ}) + σ·ζᵢ`.
pub fn simulate_observations<R: Rng + ?Sized>(
    x: &[f64],
    indices: &[usize],
    fns: &ModelFunctions,
    sigma2: f64,
    rng: &mut R,
) -> Result<ObservationSet> {
    let zeta = standard_normals(rng, indices.len());
    simulate_observations_with_noise(x, indices, fns, sigma2, &zeta)
}

pub fn simulate_observations_with_noise(
    x: &[f64],
    indices: &[usize],
    fns: &ModelFunctions,
    sigma2: f64,
    zeta: &[f64],
) -> Result<ObservationSet> {
    check_len(indices.len(), zeta.len())?;
    validate_indices(indices, x.len())?;
    let sd = sigma2.sqrt();
    let values = indices
        .iter()
        .zip(zeta)
        .map(|(&j, &z)| fns.obs_map.value(x[j - 1]) + sd * z)
        .collect();
    ObservationSet::new(indices.to_vec(), values, sigma2, x.len())
}

/// Fills a path through the given pins with Brownian bridges; after the last
/// pin the path continues as free Brownian motion. `x₀ = x*` acts as a pin at
/// index 0.
pub fn brownian_bridge_fill<R: Rng + ?Sized>(
    grid: &GridSpec,
    pin_indices: &[usize],
    pin_values: &[f64],
    rng: &mut R,
) -> Result<Path> {
    let xi = standard_normals(rng, grid.n());
    brownian_bridge_fill_with_noise(grid, pin_indices, pin_values, &xi)
}

/// As [`brownian_bridge_fill`] with explicit standard normals; `xi[k−1]`
/// drives grid point `k` and is ignored at pinned points.
pub fn brownian_bridge_fill_with_noise(
    grid: &GridSpec,
    pin_indices: &[usize],
    pin_values: &[f64],
    xi: &[f64],
) -> Result<Path> {
    let n = grid.n();
    check_len(n, xi.len())?;
    if pin_indices.len() != pin_values.len() {
        return Err(Error::InvalidPins(format!(
            "{} indices but {} values",
            pin_indices.len(),
            pin_values.len()
        )));
    }
    for (k, &j) in pin_indices.iter().enumerate() {
        if j == 0 || j > n {
            return Err(Error::InvalidPins(format!("index {j} outside 1..={n}")));
        }
        if k > 0 && j <= pin_indices[k - 1] {
            return Err(Error::InvalidPins(
                "indices must be strictly increasing".into(),
            ));
        }
    }

    let delta = grid.delta();
    let mut values = vec![0.0; n];
    let mut prev = grid.x_star();
    let mut k = 1;
    for (&jb, &vb) in pin_indices.iter().zip(pin_values) {
        while k < jb {
            let remaining = (jb - k + 1) as f64;
            let mean = prev + (vb - prev) / remaining;
            let var = delta * (remaining - 1.0) / remaining;
            prev = mean + var.sqrt() * xi[k - 1];
            values[k - 1] = prev;
            k += 1;
        }
        values[jb - 1] = vb;
        prev = vb;
        k = jb + 1;
    }
    let sd = delta.sqrt();
    while k <= n {
        prev += sd * xi[k - 1];
        values[k - 1] = prev;
        k += 1;
    }
    Ok(Path(values))
}
