//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL line;
//! the process exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use thermobj::bounds::{
    assemble_greedy_state, deviation_bound, greedy_partition, macrofraction_bound,
    theorem1_bound, DeviationModel, MacrofractionVariant,
};
use thermobj::channels::{
    bloch_of_channel, gad_channel, iterate_to_fixpoint, Channel, GadParams,
};
use thermobj::experiments::{self, ExperimentConfig, DEVIATION_LABEL};
use thermobj::gibbs::{boltzmann_weights, gibbs_state, HamiltonianSpec, InverseTemperature};
use thermobj::operator::{from_bloch, partial_trace, to_bloch, CMatrix, DensityOperator};
use thermobj::oracle::{
    assembled_product_distance, brute_force_partition, direct_trace_distance, enumerate_inf_t,
};
use thermobj::random::{random_hermitian, random_state, random_unitary, seeded_rng};
use thermobj::sbs::{
    certify_sbs, check_equal_dim_coexistence, exact_thermal_objective_state,
    thermal_system_objective, Coexistence, GlobalObjectiveHamiltonian,
    InfiniteTemperatureStates, CERTIFY_TOL,
};

const ZERO_SIGMA_TOL: f64 = 1e-12;
const MIN_R_SQUARED: f64 = 0.95;
const SIGMA_SWEEP_BUDGET: Duration = Duration::from_secs(10);
const MACRO_SWEEP_BUDGET: Duration = Duration::from_secs(30);
const STDERR_MULTIPLE: f64 = 3.0;
const ASSEMBLY_TOL: f64 = 1e-10;
const ORACLE_MAX_ENV: usize = 10;
/// Rounding allowance when the exhaustive optimum equals the greedy total.
const ORACLE_SLACK: f64 = 1e-15;
const KRAUS_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-12;
const FIXPOINT_TOL: f64 = 1e-8;
const ITERATION_STEP_TOL: f64 = 1e-12;
const BLOCH_MAP_TOL: f64 = 1e-12;
const MARGINAL_TOL: f64 = 1e-10;
const COEXISTENCE_TOL: f64 = 1e-9;
const FORMULA_TOL: f64 = 1e-10;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn beta1() -> InverseTemperature {
    InverseTemperature::finite(1.0).unwrap()
}

fn uniform_levels(rng: &mut ChaCha8Rng, n: usize, max: f64) -> Vec<f64> {
    let h: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..max)).collect();
    let min = h.iter().copied().fold(f64::INFINITY, f64::min);
    h.iter().map(|x| x - min).collect()
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

fn sigma_sweep_point(sigma: f64) -> Result<(f64, f64), String> {
    let cfg = ExperimentConfig::sigma_sweep();
    let table = experiments::run(&cfg).map_err(|e| e.to_string())?;
    let row = table
        .series(DEVIATION_LABEL)
        .into_iter()
        .find(|r| (r.grid_value - sigma).abs() < 1e-12)
        .ok_or("sigma point missing")?;
    Ok((row.mean, row.stderr))
}

fn criterion_1() -> Outcome {
    let cfg = ExperimentConfig::sigma_sweep();
    let start = Instant::now();
    let table = experiments::run(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let rows = table.series(DEVIATION_LABEL);
    ensure(rows.len() == 11 && cfg.trials == 1000, || "unexpected sweep layout".into())?;
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let sigmas: Vec<f64> = rows.iter().map(|r| r.grid_value).collect();
    ensure(means[0].abs() <= ZERO_SIGMA_TOL, || format!("mean at sigma=0 is {}", means[0]))?;
    ensure(means.windows(2).all(|w| w[1] > w[0]), || format!("means not increasing: {means:?}"))?;
    let r2 = r_squared(&sigmas, &means);
    ensure(r2 >= MIN_R_SQUARED, || format!("R^2 = {r2}"))?;
    ensure(elapsed < SIGMA_SWEEP_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "mean(0) = {:e}, mean(0.25) = {:.5}, R^2 = {r2:.5}, {elapsed:.2?}",
        means[0], means[10]
    ))
}

fn criterion_2() -> Outcome {
    let cfg = ExperimentConfig::macrofraction_sweep();
    ensure(cfg.trials == 500 && cfg.sigma == 0.05 && cfg.grid.len() == 8, || {
        "unexpected sweep layout".into()
    })?;
    let start = Instant::now();
    let table = experiments::run(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let rows = table.series(MacrofractionVariant::GroupedGreedy.name());
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    ensure(means.windows(2).all(|w| w[1] < w[0]), || {
        format!("grouped_greedy means not decreasing: {means:?}")
    })?;
    let (m1, s1) = sigma_sweep_point(0.05)?;
    let gap = (rows[0].mean - m1).abs();
    let allowed = STDERR_MULTIPLE * (rows[0].stderr.powi(2) + s1.powi(2)).sqrt();
    ensure(gap <= allowed, || format!("N=1 mean {} vs sigma sweep {m1}: gap {gap} > {allowed}", rows[0].mean))?;
    ensure(elapsed < MACRO_SWEEP_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "means {:.5} .. {:.5}, N=1 gap {gap:.2e} (allowed {allowed:.2e}), {elapsed:.2?}",
        means[0], means[7]
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = seeded_rng(0x7431);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let d_s = rng.random_range(2..=3);
        let d_e = rng.random_range(4..=64);
        let probs = boltzmann_weights(&uniform_levels(&mut rng, d_s, 3.0), beta1());
        let h = uniform_levels(&mut rng, d_e, 3.0);
        let total = greedy_partition(&probs, &h, beta1()).map_err(|e| e.to_string())?.total;
        let bound = theorem1_bound(d_s, &h, beta1());
        worst = worst.max(total / bound);
        if total > bound {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} violations of d_S/Z_E"))?;
    Ok(format!("1000 instances, 0 violations, largest total/bound {worst:.4}"))
}

fn criterion_4() -> Outcome {
    let mut rng = seeded_rng(0x4a11);
    let mut checked = 0;
    let mut worst_assembly: f64 = 0.0;
    for _ in 0..200 {
        let d_s = rng.random_range(2..=3);
        let d_e = rng.random_range(d_s..=14);
        let e = uniform_levels(&mut rng, d_s, 3.0);
        let h = uniform_levels(&mut rng, d_e, 3.0);
        let sys = HamiltonianSpec::new(e.clone(), random_unitary(&mut rng, d_s)).unwrap();
        let env = HamiltonianSpec::new(h.clone(), random_unitary(&mut rng, d_e)).unwrap();
        let probs = boltzmann_weights(&e, beta1());
        let r = greedy_partition(&probs, &h, beta1()).map_err(|e| e.to_string())?;
        let (_, achieved) = assemble_greedy_state(&r, &sys, &env, beta1()).map_err(|e| e.to_string())?;
        worst_assembly = worst_assembly.max((achieved - r.total).abs());
        ensure((achieved - r.total).abs() <= ASSEMBLY_TOL, || {
            format!("achieved {achieved} vs total {} (d_S={d_s}, d_E={d_e})", r.total)
        })?;
        if d_e <= ORACLE_MAX_ENV {
            let (_, optimum) =
                brute_force_partition(&probs, &r.weights).map_err(|e| e.to_string())?;
            ensure(optimum <= r.total + ORACLE_SLACK, || {
                format!("oracle {optimum} above greedy {}", r.total)
            })?;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} instances checked against the oracle, largest assembly gap {worst_assembly:.1e}"
    ))
}

fn closed_form_count(d_s: usize, m: usize) -> BigUint {
    let fact = |n: usize| (1..=n).fold(BigUint::from(1u32), |a, k| a * k);
    fact(m * d_s) / fact(m).pow(d_s as u32)
}

fn criterion_5() -> Outcome {
    let count = |d_s, d_e| InfiniteTemperatureStates::new(d_s, d_e).unwrap().count();
    ensure(count(2, 2) == BigUint::from(2u32), || "(2,2) count is not 2".into())?;
    ensure(count(2, 4) == BigUint::from(6u32), || "(2,4) count is not 6".into())?;
    let mut cases = 0;
    for d_s in 1..=3 {
        for m in 1..=2 {
            let d_e = m * d_s;
            let expected = closed_form_count(d_s, m);
            let states = InfiniteTemperatureStates::new(d_s, d_e).unwrap();
            let listed = states.enumerate().map_err(|e| e.to_string())?.count();
            let scanned = enumerate_inf_t(d_s, d_e).map_err(|e| e.to_string())?;
            ensure(
                states.count() == expected
                    && BigUint::from(listed) == expected
                    && BigUint::from(scanned) == expected,
                || format!("(d_S={d_s}, M={m}): expected {expected}, got {} / {listed} / {scanned}", states.count()),
            )?;
            cases += 1;
        }
    }
    Ok(format!("(2,2) -> 2, (2,4) -> 6, {cases} closed-form cases agree"))
}

fn criterion_6() -> Outcome {
    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut worst_kraus: f64 = 0.0;
    let mut worst_fixed: f64 = 0.0;
    for &p in &grid {
        for &eta in &grid {
            let params = GadParams::new(p, eta).unwrap();
            let ch = gad_channel(params).map_err(|e| e.to_string())?;
            worst_kraus = worst_kraus.max(ch.completeness_error());
            let s = params.stationary_state();
            let out = ch.apply(&s).map_err(|e| e.to_string())?;
            worst_fixed = worst_fixed.max(direct_trace_distance(&out, &s).unwrap());
        }
    }
    ensure(worst_kraus <= KRAUS_TOL, || format!("completeness error {worst_kraus}"))?;
    ensure(worst_fixed <= STATIONARY_TOL, || format!("stationary drift {worst_fixed}"))?;

    let mut rng = seeded_rng(0x6ad);
    let mut worst_fix: f64 = 0.0;
    let mut worst_map: f64 = 0.0;
    for (p, eta) in [(0.7, 0.5), (0.2, 0.9), (0.5, 0.1), (0.95, 0.3)] {
        let params = GadParams::new(p, eta).unwrap();
        let ch = gad_channel(params).unwrap();
        let affine = bloch_of_channel(&ch).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let r0 = to_bloch(&random_state(&mut rng, 2)).unwrap();
            let (r, _) = iterate_to_fixpoint(&affine, r0, ITERATION_STEP_TOL, 100_000)
                .map_err(|e| e.to_string())?;
            let d = direct_trace_distance(&from_bloch(r).unwrap(), &params.stationary_state()).unwrap();
            worst_fix = worst_fix.max(d);
        }
        for _ in 0..25 {
            let rho = random_state(&mut rng, 2);
            let via_map = from_bloch(affine.map(to_bloch(&rho).unwrap()).unwrap()).unwrap();
            let direct = ch.apply(&rho).unwrap();
            worst_map = worst_map.max(direct_trace_distance(&via_map, &direct).unwrap());
        }
    }
    ensure(worst_fix <= FIXPOINT_TOL, || format!("fixed point off by {worst_fix}"))?;
    ensure(worst_map <= BLOCH_MAP_TOL, || format!("Bloch map off by {worst_map}"))?;
    Ok(format!(
        "completeness {worst_kraus:.1e}, stationary {worst_fixed:.1e}, 20 iterations within {worst_fix:.1e}, 100 states within {worst_map:.1e}"
    ))
}

/// Certifies `rho` and compares each listed marginal with its expected state.
fn check_witness(
    rho: &DensityOperator,
    dims: &[usize],
    expected: &[(usize, DensityOperator)],
) -> Result<f64, String> {
    let cert = certify_sbs(rho, dims, CERTIFY_TOL).map_err(|e| e.to_string())?;
    ensure(cert.is_objective(), || format!("not certified: {}", cert.witness().unwrap()))?;
    let mut worst: f64 = 0.0;
    for (k, want) in expected {
        let got = partial_trace(rho, dims, &[*k]).map_err(|e| e.to_string())?;
        worst = worst.max(direct_trace_distance(&got, want).unwrap());
    }
    ensure(worst <= MARGINAL_TOL, || format!("marginal off by {worst}"))?;
    Ok(worst)
}

fn criterion_7() -> Outcome {
    let mut rng = seeded_rng(0x5b5);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for beta in [0.0, 0.5, 1.0, 2.0] {
        let b = InverseTemperature::finite(beta).unwrap();
        for _ in 0..5 {
            // thermal system with orthogonal pure conditionals on two subenvironments
            let d_s = rng.random_range(2..=3);
            let d_e = rng.random_range(d_s..=3);
            let hs = HamiltonianSpec::new(uniform_levels(&mut rng, d_s, 2.0), random_unitary(&mut rng, d_s)).unwrap();
            let conds: Vec<Vec<DensityOperator>> = (0..2)
                .map(|_| {
                    let u = random_unitary(&mut rng, d_e);
                    (0..d_s)
                        .map(|i| DensityOperator::from_spectral(&basis_probs(d_e, i), &u).unwrap())
                        .collect()
                })
                .collect();
            let rho = thermal_system_objective(&hs, b, conds).map_err(|e| e.to_string())?;
            worst = worst.max(check_witness(&rho, &[d_s, d_e, d_e], &[(0, gibbs_state(&hs, b))])?);
            count += 1;

            // exact thermal-objective state with shifted, rotated copies
            let subenvs: Vec<(f64, CMatrix)> = (0..2)
                .map(|_| (rng.random_range(-1.0..1.0), random_unitary(&mut rng, d_s)))
                .collect();
            let rho = exact_thermal_objective_state(&hs, &subenvs, b).map_err(|e| e.to_string())?;
            let mut expected = vec![(0, gibbs_state(&hs, b))];
            for (k, (c, u)) in subenvs.iter().enumerate() {
                let he = HamiltonianSpec::new(
                    hs.energies().iter().map(|e| e + c).collect(),
                    u * hs.basis(),
                )
                .unwrap();
                expected.push((k + 1, gibbs_state(&he, b)));
            }
            worst = worst.max(check_witness(&rho, &[d_s, d_s, d_s], &expected)?);
            count += 1;

            // global Hamiltonians with perfect and weighted correlations
            for weighted in [false, true] {
                let d_env = if weighted { 2 * d_s } else { d_s };
                let e = uniform_levels(&mut rng, d_s, 2.0);
                let sys_basis = random_unitary(&mut rng, d_s);
                let env_basis = random_unitary(&mut rng, d_env);
                let q: Vec<Vec<f64>> = (0..d_s)
                    .map(|i| {
                        if !weighted {
                            return basis_probs(d_s, i);
                        }
                        (0..d_env)
                            .map(|a| if a / 2 == i { rng.random_range(0.5..2.0) } else { 0.0 })
                            .collect()
                    })
                    .collect();
                let g = if weighted {
                    GlobalObjectiveHamiltonian::weighted_correlation(e.clone(), sys_basis.clone(), env_basis.clone(), q.clone())
                } else {
                    GlobalObjectiveHamiltonian::perfect_correlation(e.clone(), sys_basis.clone(), env_basis.clone())
                }
                .map_err(|e| e.to_string())?;
                let rho = g.gibbs_state(b).map_err(|e| e.to_string())?;
                // level of environment vector a is E_i q_{a|i} for its owner i
                let env_levels: Vec<f64> = (0..d_env)
                    .map(|a| (0..d_s).map(|i| e[i] * q[i][a]).sum())
                    .collect();
                let weights = boltzmann_weights(&env_levels, b);
                let mut p = vec![0.0; d_s];
                for a in 0..d_env {
                    let owner = (0..d_s).find(|&i| q[i][a] > 0.0).unwrap();
                    p[owner] += weights[a];
                }
                let expected = [
                    (0, DensityOperator::from_spectral(&p, &sys_basis).unwrap()),
                    (1, gibbs_state(&HamiltonianSpec::new(env_levels, env_basis).unwrap(), b)),
                ];
                worst = worst.max(check_witness(&rho, &[d_s, d_env], &expected)?);
                count += 1;
            }
        }
    }
    Ok(format!("{count} constructed states certified, largest marginal gap {worst:.1e}"))
}

fn basis_probs(d: usize, i: usize) -> Vec<f64> {
    (0..d).map(|j| if j == i { 1.0 } else { 0.0 }).collect()
}

fn criterion_8() -> Outcome {
    let mut rng = seeded_rng(0x8e9);
    for n in 0..100 {
        let d = rng.random_range(2..=4);
        let hs = HamiltonianSpec::from_operator(&random_hermitian(&mut rng, d, 1.0)).unwrap();
        let he = HamiltonianSpec::from_operator(&random_hermitian(&mut rng, d, 1.0)).unwrap();
        let c = check_equal_dim_coexistence(&hs, &he, beta1(), COEXISTENCE_TOL).map_err(|e| e.to_string())?;
        ensure(c == Coexistence::Incompatible, || format!("pair {n} reported {c:?}"))?;
    }
    let mut certified = 0;
    for n in 0..100 {
        let dims = [[2, 2], [2, 3], [3, 2], [3, 3]][n % 4];
        let h = random_hermitian(&mut rng, dims[0] * dims[1], 1.0);
        let rho = gibbs_state(&HamiltonianSpec::from_operator(&h).unwrap(), beta1());
        if certify_sbs(&rho, &dims, CERTIFY_TOL).map_err(|e| e.to_string())?.is_objective() {
            certified += 1;
        }
    }
    ensure(certified == 0, || format!("{certified} generic Gibbs states certified objective"))?;
    Ok("100 incompatible Hamiltonian pairs, 100 generic Gibbs states rejected".into())
}

fn criterion_9() -> Outcome {
    let mut rng = seeded_rng(0x9f0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(2..=3);
        let n = rng.random_range(1..=3);
        let beta = InverseTemperature::finite(rng.random_range(0.2..3.0)).unwrap();
        let base = uniform_levels(&mut rng, d, 2.0);
        let shift = rng.random_range(-2.0..2.0);
        let models: Vec<DeviationModel> = (0..n)
            .map(|_| {
                let dev = (0..d).map(|_| rng.random_range(-0.3..0.3)).collect();
                DeviationModel::new(base.clone(), shift, dev, beta).unwrap()
            })
            .collect();
        let levels: Vec<Vec<f64>> = models.iter().map(DeviationModel::env_energies).collect();
        let single = assembled_product_distance(&base, &levels[..1], beta).map_err(|e| e.to_string())?;
        worst = worst.max((single - deviation_bound(&models[0])).abs());
        let product = assembled_product_distance(&base, &levels, beta).map_err(|e| e.to_string())?;
        let formula = macrofraction_bound(&models, MacrofractionVariant::ProductForm).map_err(|e| e.to_string())?;
        worst = worst.max((product - formula).abs());
    }
    ensure(worst <= FORMULA_TOL, || format!("largest gap {worst}"))?;
    Ok(format!("100 instances, largest gap {worst:.1e}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("deviation bound grows linearly with sigma", criterion_1),
        ("grouped macrofraction bound decreases with group size", criterion_2),
        ("greedy partition within d_S/Z_E", criterion_3),
        ("greedy partition against exhaustive search", criterion_4),
        ("counting of infinite-temperature objective states", criterion_5),
        ("amplitude damping channel suite", criterion_6),
        ("constructed objective thermal states certify", criterion_7),
        ("generic Hamiltonians are not objective", criterion_8),
        ("closed-form bounds equal operator trace norms", criterion_9),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
