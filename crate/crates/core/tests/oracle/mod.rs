//! Dense brute-force model used to check the kernels' log acceptance
//! ratios. Everything here is rebuilt from the model definition:
//! increment-form prior, term-by-term potential, dense metric, dense
//! Gaussian proposal densities.

#![allow(dead_code)]

use inf_mmala::model::{Drift, GridSpec, ModelFunctions, ObsMap, ObservationSet};
use inf_mmala::{Algorithm, DiffusionTarget, Path, ProposalCoeffs, Sampler};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct DenseModel {
    pub n: usize,
    pub delta: f64,
    pub x_star: f64,
    pub drift: Drift,
    pub obs_map: ObsMap,
    pub idx: Vec<usize>,
    pub y: Vec<f64>,
    pub sigma2: f64,
}

impl DenseModel {
    pub fn target(&self) -> DiffusionTarget {
        let grid = GridSpec::new(self.n, self.delta, self.x_star).unwrap();
        let obs =
            ObservationSet::new(self.idx.clone(), self.y.clone(), self.sigma2, self.n).unwrap();
        DiffusionTarget::new(
            grid,
            obs,
            ModelFunctions {
                drift: self.drift,
                obs_map: self.obs_map,
            },
        )
        .unwrap()
    }

    // Prior precision from the increment representation: Σ (xⱼ − xⱼ₋₁)²/δ = xᵀLx + linear.
    pub fn prior_precision(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            // increment j involves x_j and x_{j-1} (x_{-1} = x*, fixed)
            l[(j, j)] += 1.0 / self.delta;
            if j > 0 {
                l[(j - 1, j - 1)] += 1.0 / self.delta;
                l[(j - 1, j)] -= 1.0 / self.delta;
                l[(j, j - 1)] -= 1.0 / self.delta;
            }
        }
        l
    }

    pub fn log_target(&self, x: &[f64]) -> f64 {
        let mut phi = 0.0;
        for (&j, &y) in self.idx.iter().zip(&self.y) {
            phi += (y - self.obs_map.value(x[j - 1])).powi(2) / (2.0 * self.sigma2);
        }
        let mut prev = self.x_star;
        let mut prior = 0.0;
        for &v in x {
            let a = self.drift.value(prev);
            phi += -a * (v - prev) + 0.5 * a * a * self.delta;
            prior += (v - prev).powi(2) / (2.0 * self.delta);
            prev = v;
        }
        -phi - prior
    }

    // Forward-mode differentiation of the same sums, one seed per coordinate.
    pub fn grad_log_target(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| {
            let xd: Vec<Dual> = x
                .iter()
                .enumerate()
                .map(|(k, &v)| Dual(v, if k == i { 1.0 } else { 0.0 }))
                .collect();
            let mut lt = Dual(0.0, 0.0);
            for (&j, &y) in self.idx.iter().zip(&self.y) {
                let xj = xd[j - 1];
                let f = Dual(
                    self.obs_map.value(xj.0),
                    self.obs_map.derivative(xj.0) * xj.1,
                );
                let r = Dual(y, 0.0) - f;
                lt = lt - r * r * (1.0 / (2.0 * self.sigma2));
            }
            let mut prev = Dual(self.x_star, 0.0);
            for &v in &xd {
                let a = Dual(
                    self.drift.value(prev.0),
                    self.drift.derivative(prev.0) * prev.1,
                );
                let inc = v - prev;
                lt = lt + a * inc - a * a * (0.5 * self.delta) - inc * inc * (0.5 / self.delta);
                prev = v;
            }
            lt.1
        })
    }

    pub fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        let mut g = self.prior_precision();
        for &j in &self.idx {
            g[(j - 1, j - 1)] += self.obs_map.derivative(x[j - 1]).powi(2) / self.sigma2;
        }
        g
    }

    pub fn s_vector(&self, x: &[f64]) -> DVector<f64> {
        // S(x) = x + G⁻¹∇ℒ(x)
        let g = self.metric(x);
        DVector::from_column_slice(x) + g.lu().solve(&self.grad_log_target(x)).unwrap()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Dual(pub f64, pub f64);

impl std::ops::Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual(self.0 + o.0, self.1 + o.1)
    }
}

impl std::ops::Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual(self.0 - o.0, self.1 - o.1)
    }
}

impl std::ops::Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual(self.0 * o.0, self.0 * o.1 + self.1 * o.0)
    }
}

impl std::ops::Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, k: f64) -> Dual {
        Dual(self.0 * k, self.1 * k)
    }
}

pub fn gaussian_log_density(
    z: &DVector<f64>,
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
) -> f64 {
    let r = z - mean;
    let n = z.len() as f64;
    0.5 * precision.determinant().ln()
        - 0.5 * (r.transpose() * precision * &r)[(0, 0)]
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// log[π(x′)q(x′→x)] − log[π(x)q(x→x′)] for the semi-implicit proposal.
pub fn dense_inf_mmala_ratio(m: &DenseModel, x: &[f64], xp: &[f64], h: f64) -> f64 {
    let c = ProposalCoeffs::new(h).unwrap();
    let log_q = |from: &[f64], to: &[f64]| {
        let mean = DVector::from_column_slice(from) * c.a_keep + m.s_vector(from) * c.a_drift;
        let prec = m.metric(from) / (c.a_noise * c.a_noise);
        gaussian_log_density(&DVector::from_column_slice(to), &mean, &prec)
    };
    (m.log_target(xp) + log_q(xp, x)) - (m.log_target(x) + log_q(x, xp))
}

/// Same for the explicit Euler proposal `x + (h/2)G⁻¹∇ℒ + √h 𝒩(0, G⁻¹)`.
pub fn dense_mmala_ratio(m: &DenseModel, x: &[f64], xp: &[f64], h: f64) -> f64 {
    let log_q = |from: &[f64], to: &[f64]| {
        let g = m.metric(from);
        let nat = g.clone().lu().solve(&m.grad_log_target(from)).unwrap();
        let mean = DVector::from_column_slice(from) + nat * (0.5 * h);
        gaussian_log_density(&DVector::from_column_slice(to), &mean, &(g / h))
    };
    (m.log_target(xp) + log_q(xp, x)) - (m.log_target(x) + log_q(x, xp))
}

pub fn random_model(n: usize, rng: &mut ChaCha8Rng) -> DenseModel {
    let delta = rng.random_range(0.05..0.5);
    let idx: Vec<usize> = (1..=n).filter(|_| rng.random_bool(0.6)).collect();
    let idx = if idx.is_empty() { vec![n] } else { idx };
    let y = idx.iter().map(|_| rng.random_range(1.0..6.0)).collect();
    let drift = if rng.random_bool(0.5) {
        Drift::Affine { c0: 4.0, c1: -1.0 }
    } else {
        Drift::Sine { amplitude: 1.3 }
    };
    DenseModel {
        n,
        delta,
        x_star: rng.random_range(-1.0..3.0),
        drift,
        obs_map: if rng.random_bool(0.5) {
            ObsMap::Power32
        } else {
            ObsMap::Identity
        },
        idx,
        y,
        sigma2: rng.random_range(0.05..1.0),
    }
}

pub fn check_pairs(algo: Algorithm, n: usize, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let m = random_model(n, &mut rng);
        let t = m.target();
        let h = rng.random_range(0.05..2.0);
        let sampler = Sampler::new(&t, algo, h).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
        let state = sampler.state(Path::new(x.clone())).unwrap();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let xp = sampler.proposal_from_normals(&state, &z).unwrap();
        let cand = sampler.state(xp.clone()).unwrap();
        let got = sampler.log_ratio(&state, &cand).unwrap();
        let expected = match algo {
            Algorithm::Mmala => dense_mmala_ratio(&m, &x, &xp, h),
            _ => dense_inf_mmala_ratio(&m, &x, &xp, h),
        };
        worst = worst.max((got - expected).abs() / expected.abs().max(1.0));
    }
    worst
}
