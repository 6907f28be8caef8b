//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails or overruns its time budget.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use rtrunc::maxent::{fit_weights, MarginalVector, MaxEntModel};
use rtrunc::mps::{run_experiment, Cutoff, ExperimentConfig, Strategy};
use rtrunc::oracle::{brute_force_tk, enumerate_maxent, monte_carlo_moments, subset_masks};
use rtrunc::powerlaw::{fit_exponent, sweep};
use rtrunc::{robust, tracedist, CanonicalVector, EnsembleKind};

type Check = fn() -> Result<String, String>;

fn gaussian_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn max_entry_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let h = (m + m.transpose()) * 0.5;
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn closed_form_example() -> Result<String, String> {
    let eps = 0.01f64;
    let v = [(1.0 - 2.0 * eps).sqrt(), eps.sqrt(), eps.sqrt()];
    let canon = CanonicalVector::from_real(&v).map_err(|e| e.to_string())?;
    let r = canon.robustness_k(2).map_err(|e| e.to_string())?;
    let off = (eps * (1.0 - 2.0 * eps)).sqrt();
    let expected = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0 - 2.0 * eps,
            off,
            off,
            off,
            2.0 * eps,
            0.0,
            off,
            0.0,
            2.0 * eps,
        ],
    ) / (1.0 + 2.0 * eps);

    let ens = robust::build_ensemble(&canon, 2).map_err(|e| e.to_string())?;
    let (tau, _) = robust::density_matrix(&ens).map_err(|e| e.to_string())?;
    let sol = tracedist::solve(&canon, 2).map_err(|e| e.to_string())?;
    let tens = tracedist::build_ensemble(&sol, &canon, 1e-10).map_err(|e| e.to_string())?;
    let sigma = tens.density_matrix();

    let dr = (r - 2.0 * eps).abs();
    let dtau = max_entry_diff(&tau, &expected);
    let dsigma = max_entry_diff(&sigma, &expected);
    let detail = format!("|R-0.02|={dr:.1e} tau err={dtau:.1e} sigma err={dsigma:.1e}");
    if dr <= 1e-9 && dtau <= 1e-9 && dsigma <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform_states() -> Result<String, String> {
    let pairs = [
        (35, 15),
        (2, 1),
        (3, 1),
        (3, 2),
        (4, 2),
        (5, 3),
        (7, 3),
        (8, 5),
        (10, 1),
        (10, 9),
        (16, 4),
        (20, 7),
        (25, 24),
        (30, 10),
        (40, 13),
        (50, 17),
        (64, 8),
        (64, 63),
        (100, 30),
        (128, 64),
        (200, 99),
    ];
    let mut worst_t = 0.0f64;
    let mut worst_r = 0.0f64;
    for &(d, k) in &pairs {
        let v = vec![1.0 / (d as f64).sqrt(); d];
        let canon = CanonicalVector::from_real(&v).map_err(|e| e.to_string())?;
        let t = tracedist::solve(&canon, k)
            .map_err(|e| e.to_string())?
            .lambda;
        let r = canon.robustness_k(k).map_err(|e| e.to_string())?;
        worst_t = worst_t.max((t - (1.0 - k as f64 / d as f64)).abs());
        worst_r = worst_r.max((r - (d as f64 / k as f64 - 1.0)).abs());
    }
    let detail = format!(
        "{} pairs, max |T err|={worst_t:.1e} max |R err|={worst_r:.1e}",
        pairs.len()
    );
    if worst_t <= 1e-9 && worst_r <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn qubit_family() -> Result<String, String> {
    let mut worst = 0.0f64;
    for eps in [0.01f64, 0.1, 0.25] {
        let canon = CanonicalVector::from_real(&[(1.0 - eps).sqrt(), eps.sqrt()])
            .map_err(|e| e.to_string())?;
        let t = tracedist::solve(&canon, 1)
            .map_err(|e| e.to_string())?
            .lambda;
        let r = canon.robustness_k(1).map_err(|e| e.to_string())?;
        let g = (eps * (1.0 - eps)).sqrt();
        worst = worst.max((t - g).abs()).max((r - 2.0 * g).abs());
    }
    let detail = format!("max err={worst:.1e}");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle_equivalence() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for _ in 0..500 {
        let d = rng.random_range(2..=8);
        let v = gaussian_vector(&mut rng, d);
        let canon = CanonicalVector::from_real(&v).map_err(|e| e.to_string())?;
        for k in 1..d {
            let sol = tracedist::solve(&canon, k).map_err(|e| e.to_string())?;
            let bf = brute_force_tk(canon.values(), k, 64, &mut rng, Some(&sol.m))
                .map_err(|e| e.to_string())?;
            worst = worst.max((sol.lambda - bf.value).abs());
            cases += 1;
        }
    }
    let detail = format!("{cases} (v, k) cases, max |solve - brute force|={worst:.1e}");
    if worst <= 1e-5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn optimality_certificates() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut eig, mut spec, mut fen) = (0.0f64, 0.0f64, 0.0f64);
    let mut witness = f64::INFINITY;
    let mut failures = Vec::new();
    for inst in 0..200 {
        let d = rng.random_range(2..=64);
        let k = rng.random_range(1..d);
        let mut v = gaussian_vector(&mut rng, d);
        if inst % 4 == 3 {
            // Coarse rounding produces ties.
            v.iter_mut().for_each(|x| *x = (*x * 5.0).round() / 5.0);
            if v.iter().all(|&x| x == 0.0) {
                v[0] = 1.0;
            }
        }
        let canon = CanonicalVector::from_real(&v).map_err(|e| e.to_string())?;
        let sol = tracedist::solve(&canon, k).map_err(|e| e.to_string())?;
        let ens = tracedist::build_ensemble(&sol, &canon, 1e-10).map_err(|e| e.to_string())?;
        let rep = tracedist::verify_optimality(&canon, &sol, &ens.density_matrix())
            .map_err(|e| e.to_string())?;
        eig = eig.max(rep.eigen_residual);
        spec = spec.max(rep.spectral_gap.abs());
        fen = fen.max(rep.fenchel_gap);

        match robust::build_ensemble(&canon, k)
            .and_then(|e| robust::density_matrix(&e).map(|t| (e, t)))
        {
            Ok((rens, (tau, _))) => {
                let r = canon.robustness_k(k).map_err(|e| e.to_string())?;
                let u = DVector::from_column_slice(canon.values());
                let w = &tau * (1.0 + r) - &u * u.transpose();
                witness = witness.min(min_eigenvalue(&w));
                debug_assert_eq!(rens.kind(), EnsembleKind::Robustness);
            }
            Err(e) => failures.push(format!("instance {inst} (d={d}, k={k}): {e}")),
        }
    }
    let detail = format!(
        "eigen residual={eig:.1e} spectral gap={spec:.1e} fenchel gap={fen:.1e} min witness eig={witness:.1e} certificate failures={}",
        failures.len()
    );
    if eig <= 1e-6 && spec <= 1e-6 && fen <= 1e-6 && witness >= -1e-9 && failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail} {}", failures.join("; ")))
    }
}

fn chi_squared_p(counts: &[u64], probs: &[f64], total: u64) -> f64 {
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * total as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((probs.len() - 1) as f64).expect("positive degrees of freedom");
    dist.sf(stat)
}

fn maxent_engine() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut exact_err = 0.0f64;
    let mut worst_corr = f64::NEG_INFINITY;
    for _ in 0..60 {
        let n = rng.random_range(2..=10);
        let ell = rng.random_range(1..n);
        let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let model = MaxEntModel::new(&mu, ell).map_err(|e| e.to_string())?;
        let en = enumerate_maxent(&mu, ell).map_err(|e| e.to_string())?;
        let q = model.marginals();
        let pm = model.pair_marginals().0;
        for i in 0..n {
            exact_err = exact_err.max((q[i] - en.q[i]).abs());
            for j in 0..n {
                exact_err = exact_err.max((pm[(i, j)] - en.pairs[(i, j)]).abs());
                if i != j {
                    worst_corr = worst_corr.max(pm[(i, j)] - q[i] * q[j]);
                }
            }
        }
    }

    let mut fit_resid = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=60);
        let ell = rng.random_range(1..n);
        let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let target = MaxEntModel::new(&mu, ell)
            .map_err(|e| e.to_string())?
            .marginals();
        let mv = MarginalVector::new(target.clone()).map_err(|e| e.to_string())?;
        let rep = fit_weights(&mv, 1e-10, 200).map_err(|e| e.to_string())?;
        let got = rep.model.marginals();
        let r = got
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        fit_resid = fit_resid.max(r);
    }

    let mut min_p = 1.0f64;
    let samples = 100_000u64;
    for &(n, ell) in &[(6usize, 3usize), (7, 2), (5, 4)] {
        let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let model = MaxEntModel::new(&mu, ell).map_err(|e| e.to_string())?;
        let en = enumerate_maxent(&mu, ell).map_err(|e| e.to_string())?;
        let masks = subset_masks(n, ell);
        for glauber in [false, true] {
            let mut counts = vec![0u64; masks.len()];
            for _ in 0..samples {
                let s = if glauber {
                    model
                        .sample_glauber(&mut rng, 10_000)
                        .map_err(|e| e.to_string())?
                } else {
                    model.sample_sequential(&mut rng)
                };
                let m = s.indices.iter().fold(0u32, |m, &i| m | (1 << i));
                let pos = masks
                    .binary_search(&m)
                    .map_err(|_| "sample of wrong size".to_string())?;
                counts[pos] += 1;
            }
            min_p = min_p.min(chi_squared_p(&counts, &en.probs, samples));
        }
    }

    let detail = format!(
        "recursion vs enumeration={exact_err:.1e} max fit residual={fit_resid:.1e} min chi2 p={min_p:.3} max(Q_ij - q_i q_j)={worst_corr:.1e}"
    );
    if exact_err <= 1e-10 && fit_resid <= 1e-10 && min_p > 1e-3 && worst_corr < 0.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn variance_lemma() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_var = f64::NEG_INFINITY;
    let mut worst_mean = f64::NEG_INFINITY;
    for _ in 0..50 {
        let d = rng.random_range(3..=12);
        let k = rng.random_range(1..d);
        let v = gaussian_vector(&mut rng, d);
        let canon = CanonicalVector::from_real(&v).map_err(|e| e.to_string())?;
        let sol = tracedist::solve(&canon, k).map_err(|e| e.to_string())?;
        let ens = tracedist::build_ensemble(&sol, &canon, 1e-10).map_err(|e| e.to_string())?;
        let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        let sym = (&g + g.transpose()) * 0.5;
        let norm = sym
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        let obs = sym / norm;
        let rep = monte_carlo_moments(&ens, &obs, 100_000, &mut rng).map_err(|e| e.to_string())?;
        worst_var =
            worst_var.max(rep.sample_variance - rep.variance_bound - 4.0 * rep.variance_std_error);
        worst_mean = worst_mean
            .max(rep.mean_trace_distance - rep.bias_bound - 4.0 * rep.trace_distance_std_error);
    }
    let detail = format!(
        "max(var - bound - 4se)={worst_var:.2e} max(mean T - sqrt T - 4se)={worst_mean:.2e}"
    );
    if worst_var <= 0.0 && worst_mean <= 0.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Ten log-spaced values from `lo` to `hi`.
fn log_grid(lo: f64, hi: f64) -> Vec<usize> {
    let mut ks: Vec<usize> = (0..10)
        .map(|i| (lo * (hi / lo).powf(i as f64 / 9.0)).round() as usize)
        .collect();
    ks.dedup();
    ks
}

fn power_law_exponents() -> Result<String, String> {
    let d = 4096usize;
    let df = d as f64;
    let mut parts = Vec::new();
    let mut ok = true;
    for &(gamma, lo, hi) in &[(0.25, 0.9, 1.1), (1.5, 0.85, 1.1), (0.75, 0.55, 0.85)] {
        // Below 1/2 small errors need k close to d; above 1/2 the asymptotics
        // assume k much smaller than d.
        let ks = if gamma < 0.5 {
            log_grid(df / 4.0, 0.95 * df)
        } else {
            log_grid(df / 128.0, df / 8.0)
        };
        let rows = sweep(d, gamma, &ks).map_err(|e| e.to_string())?;
        let slope = fit_exponent(&rows, 10).ok_or("too few points")?;
        ok &= slope >= lo && slope <= hi;
        parts.push(format!("gamma={gamma}: {slope:.3} in [{lo}, {hi}]"));
    }
    let detail = parts.join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mps_dominance() -> Result<String, String> {
    let gammas = vec![0.1, 0.3];
    let mut config = ExperimentConfig::figure(
        gammas.clone(),
        vec![1, 2, 3, 4],
        Cutoff::TargetFidelity(0.99),
    );
    config.strategies = vec![Strategy::Deterministic, Strategy::RandomTraceDistance];
    let records = run_experiment(&config).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for &gamma in &gammas {
        let mut wins = 0;
        let mut bias_sum = 0.0;
        let mut std_sum = 0.0;
        let mut fid = Vec::new();
        for &seed in &config.seeds {
            let find = |s: Strategy| {
                records
                    .iter()
                    .find(|r| r.gamma == gamma && r.seed == seed && r.strategy == s)
                    .expect("record present")
            };
            let det = find(Strategy::Deterministic);
            let ran = find(Strategy::RandomTraceDistance);
            let db = (det.estimate - det.exact).abs();
            if (ran.estimate - ran.exact).abs() < db {
                wins += 1;
            }
            bias_sum += db;
            std_sum += ran.sample_std;
            fid.push(format!("D={} F={:.3}", det.cutoff, det.dtrunc_fidelity));
        }
        let ratio = std_sum / bias_sum;
        ok &= wins >= 3 && (0.1..=10.0).contains(&ratio);
        parts.push(format!(
            "gamma={gamma}: rtrunc closer on {wins}/4, std/bias={ratio:.2} ({})",
            fid.join(" ")
        ));
    }
    let detail = parts.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn performance() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let v: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
    let canon = CanonicalVector::from_real(&v).map_err(|e| e.to_string())?;
    let t = Instant::now();
    tracedist::solve(&canon, 1000).map_err(|e| e.to_string())?;
    let solve_time = t.elapsed();

    let mu: Vec<f64> = (0..1000).map(|_| rng.random_range(-2.0..2.0)).collect();
    let model = MaxEntModel::new(&mu, 500).map_err(|e| e.to_string())?;
    let draws = 20_000;
    let t = Instant::now();
    for _ in 0..draws {
        std::hint::black_box(model.sample_sequential(&mut rng));
    }
    let rate = draws as f64 / t.elapsed().as_secs_f64();
    let detail =
        format!("solve d=1e5 k=1e3 in {solve_time:.2?}, {rate:.0} subsets/s at n=1000 ell=500");
    if solve_time < Duration::from_secs(10) && rate >= 1e4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, Check); 10] = [
        (
            "closed-form three-level example",
            Duration::from_secs(1),
            closed_form_example,
        ),
        ("uniform states", Duration::from_secs(1), uniform_states),
        ("qubit family", Duration::from_secs(1), qubit_family),
        (
            "brute-force oracle equivalence",
            Duration::from_secs(300),
            oracle_equivalence,
        ),
        (
            "optimality certificates",
            Duration::from_secs(120),
            optimality_certificates,
        ),
        (
            "max-entropy engine",
            Duration::from_secs(180),
            maxent_engine,
        ),
        ("variance lemma", Duration::from_secs(180), variance_lemma),
        (
            "power-law exponents",
            Duration::from_secs(120),
            power_law_exponents,
        ),
        (
            "MPS truncation comparison",
            Duration::from_secs(600),
            mps_dominance,
        ),
        ("performance", Duration::from_secs(60), performance),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = check();
        let elapsed = t.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over time budget {budget:?}")),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "acceptance {:>2} {} {name} [{elapsed:.2?}] {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
