use inf_mmala::diagnostics::phi_hessian;
use inf_mmala::{DiffusionTarget, Drift, GridSpec, ModelFunctions, ObsMap, ObservationSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn target(
    n: usize,
    delta: f64,
    x_star: f64,
    fns: ModelFunctions,
    rng: &mut ChaCha8Rng,
) -> DiffusionTarget {
    let grid = GridSpec::new(n, delta, x_star).unwrap();
    let indices: Vec<usize> = (1..=n).filter(|k| k % 3 == 0 || *k == n).collect();
    let values = indices.iter().map(|_| rng.random_range(1.0..6.0)).collect();
    let obs = ObservationSet::new(indices, values, 0.1, n).unwrap();
    DiffusionTarget::new(grid, obs, fns).unwrap()
}

fn builtin_models() -> Vec<ModelFunctions> {
    let drifts = [
        Drift::Affine { c0: 4.0, c1: -1.0 },
        Drift::Affine { c0: -0.5, c1: 2.0 },
        Drift::Sine { amplitude: 1.7 },
        Drift::zero(),
    ];
    let maps = [ObsMap::Identity, ObsMap::Power32, ObsMap::Constant(0.3)];
    drifts
        .iter()
        .flat_map(|&drift| {
            maps.iter()
                .map(move |&obs_map| ModelFunctions { drift, obs_map })
        })
        .collect()
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let eps = 1e-6;
    for fns in builtin_models() {
        for n in [10, 50] {
            for _ in 0..20 {
                let delta = rng.random_range(0.005..0.2);
                let t = target(n, delta, rng.random_range(0.5..3.0), fns, &mut rng);
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..4.0)).collect();
                let grad = t.grad_phi(&x).unwrap();
                let scale = grad.iter().fold(1.0f64, |m, g| m.max(g.abs()));
                for k in 0..n {
                    let mut up = x.clone();
                    let mut down = x.clone();
                    up[k] += eps;
                    down[k] -= eps;
                    let fd =
                        (t.phi(&up).unwrap().total - t.phi(&down).unwrap().total) / (2.0 * eps);
                    let err = (fd - grad[k]).abs() / scale.max(grad[k].abs());
                    assert!(err <= 1e-5, "{fns:?} n={n} k={k}: fd {fd} vs {}", grad[k]);
                }
            }
        }
    }
}

#[test]
fn linear_model_hessian_matches_differences_of_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (c0, c1) in [(4.0, -1.0), (0.3, 0.7), (-1.0, -2.5)] {
        let fns = ModelFunctions {
            drift: Drift::Affine { c0, c1 },
            obs_map: ObsMap::Identity,
        };
        for n in [10, 50] {
            let t = target(n, rng.random_range(0.01..0.5), 1.0, fns, &mut rng);
            let hess = phi_hessian(&t).unwrap().to_dense();
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..4.0)).collect();
            // The gradient is affine, so a wide central difference is exact up
            // to rounding.
            let eps = 1e-2;
            for k in 0..n {
                let mut up = x.clone();
                let mut down = x.clone();
                up[k] += eps;
                down[k] -= eps;
                let gu = t.grad_phi(&up).unwrap();
                let gd = t.grad_phi(&down).unwrap();
                for i in 0..n {
                    let fd = (gu[i] - gd[i]) / (2.0 * eps);
                    let err = (fd - hess[i][k]).abs() / hess[i][k].abs().max(1.0);
                    assert!(
                        err <= 1e-6,
                        "c1={c1} n={n} ({i},{k}): {fd} vs {}",
                        hess[i][k]
                    );
                }
            }
        }
    }
}

#[test]
fn prior_density_matches_dense_increment_form() {
    // ½(x−μ)ᵀL(x−μ) must equal Σ(xⱼ − xⱼ₋₁)²/2δ exactly, and the dense
    // quadratic form built independently from the increment matrix agrees.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for n in 1..=8 {
        let delta = rng.random_range(0.01..1.0);
        let x_star = rng.random_range(-2.0..2.0);
        let t = target(n, delta, x_star, builtin_models()[0], &mut rng);
        // Increment matrix D: (Dx)ⱼ = xⱼ − xⱼ₋₁ with x₀ dropped into μ.
        let mut l_dense = vec![vec![0.0; n]; n];
        for j in 0..n {
            l_dense[j][j] += 1.0 / delta;
            if j > 0 {
                l_dense[j - 1][j - 1] += 1.0 / delta;
                l_dense[j - 1][j] -= 1.0 / delta;
                l_dense[j][j - 1] -= 1.0 / delta;
            }
        }
        assert_eq!(t.prior_precision().to_dense(), l_dense);
        for _ in 0..50 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let c: Vec<f64> = x.iter().map(|v| v - x_star).collect();
            let mut quad = 0.0;
            for i in 0..n {
                for j in 0..n {
                    quad += 0.5 * c[i] * l_dense[i][j] * c[j];
                }
            }
            let got = t.prior_energy(&x).unwrap();
            assert!((got - quad).abs() <= 1e-10 * quad.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn metric_excess_is_nonnegative_diagonal(
        seed in any::<u64>(),
        n in 2usize..60,
        map in prop::sample::select(vec![ObsMap::Identity, ObsMap::Power32, ObsMap::Constant(1.0)]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fns = ModelFunctions { drift: Drift::Sine { amplitude: 1.0 }, obs_map: map };
        let t = target(n, 0.05, 2.0, fns, &mut rng);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let g = t.metric_tensor(&x).unwrap();
        let l = t.prior_precision();
        prop_assert_eq!(g.off(), l.off());
        for (gd, ld) in g.diag().iter().zip(l.diag()) {
            prop_assert!(gd - ld >= 0.0);
        }
        prop_assert!(g.cholesky().is_ok());
    }
}
