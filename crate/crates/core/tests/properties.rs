use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rtrunc::bipartite::{solve_entangled, BipartiteState, Objective};
use rtrunc::density::trace_distance_pure_real;
use rtrunc::maxent::{partition_power_sums, partition_recursive, MaxEntModel};
use rtrunc::mps::{random_mps, Strategy as Truncation};
use rtrunc::oracle::enumerate_maxent;
use rtrunc::specvec::{k_support_norm_of, top_k_norm_of};
use rtrunc::{robust, tracedist, CanonicalVector};

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Nonzero real vectors of length 2..=max_d.
fn vector(max_d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 2..=max_d)
        .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

/// A vector and a budget `1 <= k <= d`.
fn vector_and_k(max_d: usize) -> impl Strategy<Value = (Vec<f64>, usize)> {
    vector(max_d).prop_flat_map(|v| {
        let d = v.len();
        (Just(v), 1..=d)
    })
}

/// Weights and a subset size `1 <= ell <= n`.
fn weights(max_n: usize, range: f64) -> impl Strategy<Value = (Vec<f64>, usize)> {
    prop::collection::vec(-range..range, 1..=max_n).prop_flat_map(|mu| {
        let n = mu.len();
        (Just(mu), 1..=n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn duality_sandwich(x in vector(12), seed in any::<u64>()) {
        use rand::Rng;
        let d = x.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = unit(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
        let x = unit(&x);
        let ip: f64 = x.iter().zip(&v).map(|(a, b)| a * b).sum();
        for k in 1..=d {
            let bound = top_k_norm_of(&x, k).unwrap() * k_support_norm_of(&v, k).unwrap().value;
            prop_assert!(ip <= bound + 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn norm_interlacing_and_monotonicity(v in vector(20)) {
        let c = CanonicalVector::from_real(&v).unwrap();
        let l1: f64 = c.values().iter().sum();
        let d = c.dim();
        let top1 = c.top_k_norm(1).unwrap();
        let mut prev_top = 0.0;
        let mut prev_ks = f64::INFINITY;
        for k in 1..=d {
            let top = c.top_k_norm(k).unwrap();
            let ks = c.k_support_norm(k).unwrap().value;
            prop_assert!(1.0 - 1e-12 <= ks && ks <= l1 + 1e-12);
            prop_assert!(top <= 1.0 + 1e-12 && top >= top1 - 1e-12);
            prop_assert!(top >= prev_top - 1e-12);
            prop_assert!(ks <= prev_ks + 1e-12);
            prev_top = top;
            prev_ks = ks;
        }
    }

    #[test]
    fn k_support_window_condition((v, k) in vector_and_k(20)) {
        let c = CanonicalVector::from_real(&v).unwrap();
        let res = c.k_support_norm(k).unwrap();
        let r = res.r;
        prop_assert!(r < k);
        let vals = c.values();
        let s: f64 = vals[k - r - 1..].iter().sum();
        let avg = s / (r + 1) as f64;
        // 1-based v_{k-r} is vals[k-r-1]; v_{k-r-1} is vals[k-r-2] (infinite when k-r-1 = 0).
        prop_assert!(avg >= vals[k - r - 1]);
        if k - r >= 2 {
            prop_assert!(vals[k - r - 2] > avg);
        }
        let head: f64 = vals[..k - r - 1].iter().map(|x| x * x).sum();
        prop_assert!((res.value * res.value - head - s * s / (r + 1) as f64).abs() < 1e-12);
    }

    #[test]
    fn canonical_round_trip(re in prop::collection::vec(-1.0f64..1.0, 1..12), im_seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(im_seed);
        let z: Vec<Complex64> = re.iter().map(|&x| Complex64::new(x, rng.random_range(-1.0..1.0))).collect();
        let c = CanonicalVector::new(&z).unwrap();
        let norm = z.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let back = c.restore(c.values()).unwrap();
        for (a, b) in back.iter().zip(&z) {
            prop_assert!((a - b / norm).norm() < 1e-12);
        }
        prop_assert!(c.values().windows(2).all(|w| w[0] >= w[1]));
        let n2: f64 = c.values().iter().map(|x| x * x).sum();
        prop_assert!((n2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_distance_sandwich_and_caps((v, k) in vector_and_k(16)) {
        let c = CanonicalVector::from_real(&v).unwrap();
        let d = c.dim();
        let sol = tracedist::solve(&c, k).unwrap();
        let eps = 1.0 - c.fidelity_k(k).unwrap().powi(2);
        let r = c.robustness_k(k).unwrap();
        prop_assert!(eps.max(0.0) - 1e-9 <= sol.lambda);
        prop_assert!(sol.lambda <= eps.max(0.0).sqrt() + 1e-9);
        prop_assert!(sol.lambda <= r / (1.0 + r) + 1e-9);
        prop_assert!(sol.lambda <= 1.0 - k as f64 / d as f64 + 1e-12);
    }

    #[test]
    fn window_reconstruction_and_rank_one((v, k) in vector_and_k(14)) {
        let c = CanonicalVector::from_real(&v).unwrap();
        let sol = tracedist::solve(&c, k).unwrap();
        let ens = tracedist::build_ensemble(&sol, &c, 1e-10).unwrap();
        if sol.lambda > 0.0 {
            for (j, &q) in sol.window().zip(ens.marginals()) {
                prop_assert!((sol.theta * (q + sol.lambda) - c.values()[j]).abs() < 1e-9);
            }
        }
        let rep = tracedist::verify_optimality(&c, &sol, &ens.density_matrix()).unwrap();
        prop_assert!(rep.second_eigenvalue <= 1e-10);
        prop_assert!(rep.spectral_gap.abs() < 1e-8);
    }

    #[test]
    fn robust_density_properties((v, k) in vector_and_k(14)) {
        let c = CanonicalVector::from_real(&v).unwrap();
        let ens = robust::build_ensemble(&c, k).unwrap();
        let (tau, cert) = robust::density_matrix(&ens).unwrap();
        prop_assert!(cert.passes());
        prop_assert!((tau.trace() - 1.0).abs() < 1e-10);
        let sym = (&tau + tau.transpose()) * 0.5;
        let min_eig = sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(min_eig >= -1e-10);
        let r = c.robustness_k(k).unwrap();
        let u = DVector::from_column_slice(c.values());
        let w = &tau * (1.0 + r) - &u * u.transpose();
        let wsym = (&w + w.transpose()) * 0.5;
        let wmin = wsym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(wmin >= -1e-10);
        prop_assert!(trace_distance_pure_real(c.values(), &tau) <= r / (1.0 + r) + 1e-9);
    }

    #[test]
    fn marginal_identities((mu, ell) in weights(12, 4.0)) {
        let model = MaxEntModel::new(&mu, ell).unwrap();
        let n = mu.len();
        let q = model.marginals();
        let pm = model.pair_marginals().0;
        prop_assert!((q.iter().sum::<f64>() - ell as f64).abs() < 1e-9);
        for i in 0..n {
            let row: f64 = (0..n).map(|j| pm[(i, j)]).sum();
            prop_assert!((row - q[i] * ell as f64).abs() < 1e-9);
            if ell < n {
                for j in 0..n {
                    if i != j {
                        prop_assert!(pm[(i, j)] < q[i] * q[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn shift_invariance((mu, ell) in weights(15, 5.0), c in -20.0f64..20.0) {
        let a = MaxEntModel::new(&mu, ell).unwrap().marginals();
        let shifted: Vec<f64> = mu.iter().map(|m| m + c).collect();
        let b = MaxEntModel::new(&shifted, ell).unwrap().marginals();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_methods_agree((mu, ell) in weights(30, 1.0)) {
        let table = partition_recursive(&mu, ell).unwrap();
        if let Ok(ps) = partition_power_sums(&mu, ell) {
            let z = table.total();
            prop_assert!(((ps - z) / z).abs() < 1e-9, "recursion {} power sums {}", z, ps);
        }
    }

    #[test]
    fn enumeration_marginals_sum_to_ell((mu, ell) in weights(10, 3.0)) {
        let en = enumerate_maxent(&mu, ell).unwrap();
        prop_assert!((en.q.iter().sum::<f64>() - ell as f64).abs() < 1e-12);
        let total: f64 = en.probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}

fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    use rand_distr::{Distribution, StandardNormal};
    let g = DMatrix::<Complex64>::from_fn(n, n, |_, _| {
        Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    g.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entangled_reduction_and_unitary_invariance(a in 1usize..5, b in 1usize..5, seed in any::<u64>()) {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs: Vec<Complex64> = (0..a * b)
            .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        let state = BipartiteState::schmidt(&coeffs, a, b).unwrap();
        let ua = random_unitary(a, &mut rng);
        let ub = random_unitary(b, &mut rng);
        let m = DMatrix::from_row_slice(a, b, &coeffs);
        let rotated = &ua * m * ub.transpose();
        let rc: Vec<Complex64> = (0..a).flat_map(|i| (0..b).map(move |j| (i, j))).map(|(i, j)| rotated[(i, j)]).collect();
        let other = BipartiteState::schmidt(&rc, a, b).unwrap();
        let canon = state.coefficient_vector().unwrap();
        for k in 1..=a.min(b) {
            let (t, _) = solve_entangled(&state, k, Objective::TraceDistance).unwrap();
            prop_assert_eq!(t, tracedist::solve(&canon, k).unwrap().lambda);
            let (t2, _) = solve_entangled(&other, k, Objective::TraceDistance).unwrap();
            prop_assert!((t - t2).abs() < 1e-10);
            let (r, _) = solve_entangled(&state, k, Objective::Robustness).unwrap();
            let (r2, _) = solve_entangled(&other, k, Objective::Robustness).unwrap();
            prop_assert!((r - r2).abs() < 1e-10);
        }
    }

    #[test]
    fn truncation_preserves_norm_and_fidelity_bound(n in 3usize..7, dmax in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = random_mps(n, 2, 8, &mut rng).unwrap();
        for strategy in [Truncation::Deterministic, Truncation::RandomTraceDistance, Truncation::RandomRobustness] {
            let mut t = state.clone();
            let mut eps_sum = 0.0;
            for m in 1..n {
                t.canonicalize(m).unwrap();
                let s = t.center_spectrum().unwrap().to_vec();
                let d = dmax.min(s.len());
                eps_sum += s[d..].iter().map(|x| x * x).sum::<f64>();
                t.truncate_bond(m, d, strategy, &mut rng).unwrap();
                prop_assert!((t.norm() - 1.0).abs() < 1e-10);
            }
            if strategy == Truncation::Deterministic {
                let f = t.inner(&state).norm();
                prop_assert!(f >= (1.0 - eps_sum).max(0.0).sqrt() - 1e-8);
            }
        }
    }
}
