//! One function per subcommand. Each returns a JSON summary and the same
//! data as a CSV table; side outputs go to the files named by flags.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use rtrunc::bipartite::{sample_low_rank_state, solve_entangled, BipartiteState, Objective};
use rtrunc::ensemble::DEFAULT_FIT_TOL;
use rtrunc::maxent::fit_weights;
use rtrunc::mps::{run_experiment, Cutoff, ExperimentConfig, Strategy};
use rtrunc::oracle::brute_force_tk;
use rtrunc::powerlaw::{fit_exponent, powerlaw_vector, sweep, SweepRow};
use rtrunc::robust::{self, DeltaCertificate};
use rtrunc::{tracedist, CanonicalVector, DensityMatrix, MarginalVector, SparseEnsemble};

use crate::io::{self, num, CliError, CliResult, Table};
use crate::{Global, ObjectiveArg, SampleArgs};

/// Largest dimension the brute-force cross-check accepts.
const ORACLE_MAX_DIM: usize = 64;
const ORACLE_RESTARTS: usize = 32;
const ORACLE_TOL: f64 = 1e-5;
const WITNESS_TOL: f64 = 1e-9;
const DEFAULT_FIT_POINTS: usize = 10;

pub struct Output {
    pub json: Value,
    pub table: Table,
}

fn sample_rng(g: &Global) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(g.seed)
}

fn oracle_rng(g: &Global) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    rng.set_stream(1);
    rng
}

fn canon_from(path: &Path) -> CliResult<CanonicalVector> {
    Ok(CanonicalVector::new(&io::read_vector(path)?)?)
}

fn write_samples<F>(args: &SampleArgs, mut draw: F) -> CliResult<()>
where
    F: FnMut() -> CliResult<Vec<rtrunc::Complex64>>,
{
    if let (Some(n), Some(path)) = (args.samples, &args.samples_out) {
        let states = (0..n).map(|_| draw()).collect::<CliResult<Vec<_>>>()?;
        io::write_file(path, &Table::states(&states).render())?;
    }
    Ok(())
}

fn original_basis(m: &DMatrix<f64>, canon: &CanonicalVector) -> CliResult<DensityMatrix> {
    Ok(DensityMatrix::from_real(m)?.restore(canon)?)
}

fn certificate_json(c: &DeltaCertificate) -> Value {
    json!({
        "min_diag": c.min_diag,
        "max_offdiag": c.max_offdiag,
        "max_abs_rowsum": c.max_abs_rowsum,
        "passes": c.passes(),
    })
}

fn single_row(pairs: &[(&str, String)]) -> Table {
    let header: Vec<&str> = pairs.iter().map(|p| p.0).collect();
    let mut t = Table::new(&header);
    t.push(pairs.iter().map(|p| p.1.clone()).collect());
    t
}

fn check_oracle_dim(d: usize) -> CliResult<()> {
    if d > ORACLE_MAX_DIM {
        return Err(CliError::Usage(format!(
            "--oracle supports dimension at most {ORACLE_MAX_DIM}, got {d}"
        )));
    }
    Ok(())
}

pub fn norms(_g: &Global, input: &Path, k: usize) -> CliResult<Output> {
    let canon = canon_from(input)?;
    let top = canon.top_k_norm(k)?;
    let ks = canon.k_support_norm(k)?;
    let r_k = canon.robustness_k(k)?;
    let eps = (1.0 - top * top).max(0.0);
    let json = json!({
        "d": canon.dim(),
        "k": k,
        "top_k_norm": top,
        "k_support_norm": ks.value,
        "r": ks.r,
        "F_k": top,
        "epsilon": eps,
        "R_k": r_k,
    });
    let table = single_row(&[
        ("d", canon.dim().to_string()),
        ("k", k.to_string()),
        ("top_k_norm", num(top)),
        ("k_support_norm", num(ks.value)),
        ("r", ks.r.to_string()),
        ("F_k", num(top)),
        ("epsilon", num(eps)),
        ("R_k", num(r_k)),
    ]);
    Ok(Output { json, table })
}

fn ensemble_json(ens: &SparseEnsemble, theta: Option<f64>) -> Value {
    let w = ens.window();
    json!({
        "prefix": ens.prefix(),
        "theta": theta,
        "window": [w.start, w.end],
        "window_amp": ens.window_amp(),
        "subset_size": ens.subset_size(),
        "marginals": ens.marginals(),
        "realized_marginals": ens.realized_marginals(),
        "free_positions": ens.free_positions(),
        "mu": ens.model().map(|m| m.mu().to_vec()),
        "perm": ens.canon().perm(),
    })
}

fn tdist_oracle(g: &Global, canon: &CanonicalVector, k: usize, lambda: f64) -> CliResult<Value> {
    check_oracle_dim(canon.dim())?;
    let mut rng = oracle_rng(g);
    let bf = brute_force_tk(canon.values(), k, ORACLE_RESTARTS, &mut rng, None)?;
    let diff = (bf.value - lambda).abs();
    if diff > ORACLE_TOL {
        return Err(CliError::Oracle(format!(
            "brute force gives {} but the solver gives {lambda}",
            bf.value
        )));
    }
    Ok(json!({ "T_k_brute_force": bf.value, "abs_diff": diff }))
}

#[allow(clippy::too_many_arguments)]
pub fn tdist(
    g: &Global,
    input: &Path,
    k: usize,
    ensemble: bool,
    sigma_out: Option<&Path>,
    verify: bool,
    samples: &SampleArgs,
) -> CliResult<Output> {
    let canon = canon_from(input)?;
    let sol = tracedist::solve(&canon, k)?;
    let mut json = json!({
        "T_k": sol.lambda,
        "r": sol.r,
        "ell": sol.ell,
        "theta": sol.theta,
    });
    let table = single_row(&[
        ("T_k", num(sol.lambda)),
        ("r", sol.r.to_string()),
        ("ell", sol.ell.to_string()),
        ("theta", num(sol.theta)),
    ]);
    let needs_ensemble = ensemble || sigma_out.is_some() || verify || samples.samples.is_some();
    if needs_ensemble {
        let ens = tracedist::build_ensemble(&sol, &canon, g.tol.unwrap_or(DEFAULT_FIT_TOL))?;
        if ensemble {
            json["ensemble"] = ensemble_json(&ens, Some(sol.theta));
        }
        if sigma_out.is_some() || verify {
            let sigma = ens.density_matrix();
            if let Some(path) = sigma_out {
                let rho = original_basis(&sigma, &canon)?;
                io::write_file(path, &Table::complex_matrix(rho.entries()).render())?;
            }
            if verify {
                let rep = tracedist::verify_optimality(&canon, &sol, &sigma)?;
                json["verify"] = json!({
                    "eigen_residual": rep.eigen_residual,
                    "fenchel_gap": rep.fenchel_gap,
                    "spectral_gap": rep.spectral_gap,
                    "second_eigenvalue": rep.second_eigenvalue,
                });
            }
        }
        let mut rng = sample_rng(g);
        write_samples(samples, || Ok(ens.sample_restored(&mut rng)))?;
    }
    if g.oracle {
        json["oracle"] = tdist_oracle(g, &canon, k, sol.lambda)?;
    }
    Ok(Output { json, table })
}

/// Smallest eigenvalue of `(1 + R) τ - v vᵀ` in the canonical basis.
fn robust_witness(canon: &CanonicalVector, tau: &DMatrix<f64>, r: f64) -> f64 {
    let v = DVector::from_column_slice(canon.values());
    let w = tau * (1.0 + r) - &v * v.transpose();
    let h = (&w + w.transpose()) * 0.5;
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn robust(
    g: &Global,
    input: &Path,
    k: usize,
    tau_out: Option<&Path>,
    cert: bool,
    samples: &SampleArgs,
) -> CliResult<Output> {
    let canon = canon_from(input)?;
    let ks = canon.k_support_norm(k)?;
    let ens = robust::build_ensemble_with_tol(&canon, k, g.tol.unwrap_or(robust::DEFAULT_FIT_TOL))?;
    let r_k = ens.value();
    let mut json = json!({
        "R_k": r_k,
        "r": ks.r,
        "k_support_norm": ks.value,
    });
    let table = single_row(&[
        ("R_k", num(r_k)),
        ("r", ks.r.to_string()),
        ("k_support_norm", num(ks.value)),
    ]);
    if tau_out.is_some() || cert || g.oracle {
        let (tau, c) = robust::density_matrix(&ens)?;
        if let Some(path) = tau_out {
            let rho = original_basis(&tau, &canon)?;
            io::write_file(path, &Table::complex_matrix(rho.entries()).render())?;
        }
        if cert {
            json["certificate"] = certificate_json(&c);
        }
        if g.oracle {
            let witness = robust_witness(&canon, &tau, r_k);
            if witness < -WITNESS_TOL || !c.passes() {
                return Err(CliError::Oracle(format!(
                    "robustness witness has eigenvalue {witness}, certificate passes: {}",
                    c.passes()
                )));
            }
            json["oracle"] = json!({ "witness_min_eigenvalue": witness });
        }
    }
    let mut rng = sample_rng(g);
    write_samples(samples, || Ok(ens.sample_restored(&mut rng)))?;
    Ok(Output { json, table })
}

#[allow(clippy::too_many_arguments)]
pub fn entangled(
    g: &Global,
    input: &Path,
    k: usize,
    objective: ObjectiveArg,
    density_out: Option<&Path>,
    cert: bool,
    verify: bool,
    samples: &SampleArgs,
) -> CliResult<Output> {
    let (a, b, amps) = io::read_bipartite(input)?;
    let state = BipartiteState::schmidt(&amps, a, b)?;
    let obj = match objective {
        ObjectiveArg::Td => Objective::TraceDistance,
        ObjectiveArg::Robust => Objective::Robustness,
    };
    let (value, ens) = solve_entangled(&state, k, obj)?;
    let label = match objective {
        ObjectiveArg::Td => "T_k",
        ObjectiveArg::Robust => "R_k",
    };
    let mut json = json!({
        "objective": label,
        "value": value,
        "dims": [a, b],
        "rank": state.rank(),
        "schmidt": state.coefficients(),
        "renormalized": state.renormalized(),
    });
    let table = single_row(&[
        ("objective", label.to_string()),
        ("value", num(value)),
        ("rank", state.rank().to_string()),
    ]);
    let canon = state.coefficient_vector()?;
    let mixed = match objective {
        ObjectiveArg::Td => ens.density_matrix(),
        ObjectiveArg::Robust => {
            let (tau, c) = robust::density_matrix(&ens)?;
            if cert {
                json["certificate"] = certificate_json(&c);
            }
            tau
        }
    };
    if let Some(path) = density_out {
        let full = state.lift_density(&mixed)?;
        io::write_file(path, &Table::complex_matrix(&full).render())?;
    }
    if objective == ObjectiveArg::Td && (verify || g.oracle) {
        let sol = tracedist::solve(&canon, k)?;
        if verify {
            let rep = tracedist::verify_optimality(&canon, &sol, &mixed)?;
            json["verify"] = json!({
                "eigen_residual": rep.eigen_residual,
                "fenchel_gap": rep.fenchel_gap,
                "spectral_gap": rep.spectral_gap,
                "second_eigenvalue": rep.second_eigenvalue,
            });
        }
        if g.oracle {
            json["oracle"] = tdist_oracle(g, &canon, k, sol.lambda)?;
        }
    }
    if objective == ObjectiveArg::Robust && g.oracle {
        let witness = robust_witness(&canon, &mixed, value);
        if witness < -WITNESS_TOL {
            return Err(CliError::Oracle(format!(
                "robustness witness has eigenvalue {witness}"
            )));
        }
        json["oracle"] = json!({ "witness_min_eigenvalue": witness });
    }
    let mut rng = sample_rng(g);
    write_samples(samples, || {
        Ok(sample_low_rank_state(&state, &ens, &mut rng)?)
    })?;
    Ok(Output { json, table })
}

pub fn maxent_fit(
    g: &Global,
    input: &Path,
    pairs_out: Option<&Path>,
    max_iter: usize,
) -> CliResult<Output> {
    let q = io::read_reals(input)?;
    let target = MarginalVector::new(q.clone())?;
    let rep = fit_weights(&target, g.tol.unwrap_or(DEFAULT_FIT_TOL), max_iter)?;
    let fitted = rep.model.marginals();
    let mu = rep.model.mu().to_vec();
    let json = json!({
        "n": target.len(),
        "ell": target.ell(),
        "mu": mu,
        "marginals": fitted,
        "residual": rep.residual,
        "iterations": rep.iterations,
        "dual_objective": rep.dual_objective,
        "used_full_newton": rep.used_full_newton,
    });
    let mut table = Table::new(&["index", "q_target", "mu", "q_fit"]);
    for i in 0..q.len() {
        table.push(vec![i.to_string(), num(q[i]), num(mu[i]), num(fitted[i])]);
    }
    if let Some(path) = pairs_out {
        let pm = rep.model.pair_marginals().0;
        io::write_file(path, &Table::real_matrix(&pm).render())?;
    }
    Ok(Output { json, table })
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    gammas: Vec<f64>,
    d: Option<usize>,
    #[serde(default)]
    ks: Vec<usize>,
    /// Alternative to `ks`: the smallest `k` reaching each truncation error.
    #[serde(default)]
    epsilon_targets: Vec<f64>,
    output: Option<PathBuf>,
    /// Accepted for uniformity; the sweep itself is deterministic.
    #[allow(dead_code)]
    seed: Option<u64>,
    fit_points: Option<usize>,
}

fn k_for_epsilon(d: usize, gamma: f64, target: f64) -> CliResult<usize> {
    let v = powerlaw_vector(d, gamma)?;
    let mut tail = 0.0;
    // Walk from the back: the tail grows as k shrinks.
    let mut best = d;
    for k in (1..=d).rev() {
        if k < d {
            tail += v.values()[k] * v.values()[k];
        }
        if tail <= target {
            best = k;
        } else {
            break;
        }
    }
    Ok(best)
}

pub fn powerlaw(
    _g: &Global,
    config: Option<&Path>,
    gamma: Vec<f64>,
    d: Option<usize>,
    k: Vec<usize>,
    out: Option<PathBuf>,
) -> CliResult<Output> {
    let mut cfg: SweepConfig = match config {
        Some(p) => io::read_config(p)?,
        None => SweepConfig::default(),
    };
    if !gamma.is_empty() {
        cfg.gammas = gamma;
    }
    if d.is_some() {
        cfg.d = d;
    }
    if !k.is_empty() {
        cfg.ks = k;
        cfg.epsilon_targets.clear();
    }
    if out.is_some() {
        cfg.output = out;
    }
    let d = cfg
        .d
        .ok_or_else(|| CliError::Usage("powerlaw needs a dimension d".into()))?;
    if d < 2 {
        return Err(CliError::Usage("powerlaw needs d >= 2".into()));
    }
    if cfg.gammas.is_empty() || cfg.gammas.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(CliError::Usage(
            "powerlaw needs one or more gammas > 0".into(),
        ));
    }
    if cfg.ks.is_empty() && cfg.epsilon_targets.is_empty() {
        return Err(CliError::Usage(
            "powerlaw needs a k list or epsilon targets".into(),
        ));
    }
    let points = cfg.fit_points.unwrap_or(DEFAULT_FIT_POINTS);

    let mut rows: Vec<(SweepRow, Option<f64>)> = Vec::new();
    let mut exponents = Vec::new();
    for &gamma in &cfg.gammas {
        let ks: Vec<usize> = if cfg.ks.is_empty() {
            let mut ks = cfg
                .epsilon_targets
                .iter()
                .map(|&t| k_for_epsilon(d, gamma, t))
                .collect::<CliResult<Vec<_>>>()?;
            ks.sort_unstable();
            ks.dedup();
            ks
        } else {
            cfg.ks.clone()
        };
        let sw = sweep(d, gamma, &ks)?;
        let fit = fit_exponent(&sw, points);
        exponents.push(json!({ "gamma": gamma, "exponent": fit }));
        rows.extend(sw.into_iter().map(|r| (r, fit)));
    }

    let mut table = Table::new(&[
        "gamma",
        "d",
        "k",
        "epsilon",
        "T_k",
        "R_k",
        "fitted_exponent",
    ]);
    for (r, fit) in &rows {
        table.push(vec![
            num(r.gamma),
            r.d.to_string(),
            r.k.to_string(),
            num(r.epsilon),
            num(r.t_k),
            num(r.r_k),
            fit.map(num).unwrap_or_default(),
        ]);
    }
    if let Some(path) = &cfg.output {
        io::write_file(path, &table.render())?;
    }
    let json = json!({
        "rows": rows.iter().map(|(r, fit)| json!({
            "gamma": r.gamma,
            "d": r.d,
            "k": r.k,
            "epsilon": r.epsilon,
            "T_k": r.t_k,
            "R_k": r.r_k,
            "fitted_exponent": fit,
        })).collect::<Vec<_>>(),
        "exponents": exponents,
    });
    Ok(Output { json, table })
}

#[derive(Deserialize, Debug)]
#[serde(untagged)]
enum CutoffSpec {
    Fixed(usize),
    Target { target_fidelity: f64 },
}

fn default_phys_dim() -> usize {
    2
}

fn default_max_bond() -> usize {
    16
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
pub struct MpsConfig {
    n: usize,
    gammas: Vec<f64>,
    #[serde(rename = "D", alias = "cutoff")]
    cutoff: CutoffSpec,
    seeds: Vec<u64>,
    samples: usize,
    /// 1-based site of the measured `Z`.
    site: usize,
    strategies: Vec<String>,
    #[serde(default = "default_phys_dim")]
    phys_dim: usize,
    #[serde(default = "default_max_bond")]
    max_bond: usize,
}

pub fn mps(_g: &Global, config: &Path, out: Option<&Path>) -> CliResult<Output> {
    let cfg: MpsConfig = io::read_config(config)?;
    let strategies = cfg
        .strategies
        .iter()
        .map(|s| {
            Strategy::from_label(s).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown strategy {s:?}; expected dtrunc, rtrunc-td or rtrunc-rob"
                ))
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let exp = ExperimentConfig {
        n: cfg.n,
        phys_dim: cfg.phys_dim,
        max_bond: cfg.max_bond,
        gammas: cfg.gammas,
        cutoff: match cfg.cutoff {
            CutoffSpec::Fixed(d) => Cutoff::Fixed(d),
            CutoffSpec::Target { target_fidelity } => Cutoff::TargetFidelity(target_fidelity),
        },
        seeds: cfg.seeds,
        samples: cfg.samples,
        site: cfg.site,
        strategies,
    };
    let records = run_experiment(&exp)?;
    let mut table = Table::new(&[
        "gamma",
        "cutoff",
        "seed",
        "strategy",
        "estimate",
        "exact",
        "abs_error",
        "samples",
        "sample_std",
        "dtrunc_fidelity",
    ]);
    let mut json_rows = Vec::with_capacity(records.len());
    for r in &records {
        let err = (r.estimate - r.exact).abs();
        table.push(vec![
            num(r.gamma),
            r.cutoff.to_string(),
            r.seed.to_string(),
            r.label(),
            num(r.estimate),
            num(r.exact),
            num(err),
            r.samples.to_string(),
            num(r.sample_std),
            num(r.dtrunc_fidelity),
        ]);
        json_rows.push(json!({
            "gamma": r.gamma,
            "cutoff": r.cutoff,
            "seed": r.seed,
            "strategy": r.label(),
            "estimate": r.estimate,
            "exact": r.exact,
            "abs_error": err,
            "samples": r.samples,
            "sample_std": r.sample_std,
            "dtrunc_fidelity": r.dtrunc_fidelity,
        }));
    }
    if let Some(path) = out {
        io::write_file(path, &table.render())?;
    }
    Ok(Output {
        json: Value::Array(json_rows),
        table,
    })
}
