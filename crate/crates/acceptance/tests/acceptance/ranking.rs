//! P1–P7: the ranking engine and the simulation experiments.

use acceptance::{ensure, CheckResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use ranking_core::{
    bt_mle, elo, fit_em, fit_em_partial, log_likelihood, mmrv, BtConfig, Dataset, EloConfig, EmConfig, EmModel, FitResult,
    ModelParams, Outcome, PartialTerm, PreferenceRecord, RankingMethod, Responsibilities,
};
use sim_harness::{
    run_drift_experiment, run_ranking_experiment, sample_world, uniform_comparisons, ExperimentConfig, ExperimentReport,
    WorldConfig, REGULAR,
};

const SEEDS: u64 = 20;

fn record(k: usize, i: usize, j: usize, outcome: Outcome) -> PreferenceRecord {
    PreferenceRecord::new(format!("t{k}"), i, j, outcome).expect("valid record")
}

// ---------------------------------------------------------------- P1

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

struct Draw {
    data: Dataset,
    params: ModelParams,
    resp: Responsibilities,
    config: EmConfig,
}

fn draw(seed: u64) -> Draw {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD1FF ^ seed);
    let (n, t, m) = (rng.random_range(2..7), rng.random_range(1..6), rng.random_range(5..40));
    let normal = Normal::new(0.0, 1.0).unwrap();
    let records = (0..m)
        .map(|k| {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            let outcome = [Outcome::Win, Outcome::Tie, Outcome::Loss][rng.random_range(0..3)];
            let r = record(k, i, j, outcome);
            if rng.random_bool(0.8) {
                r.with_progress(rng.random(), rng.random()).unwrap()
            } else {
                r
            }
        })
        .collect();
    let mut params = ModelParams::zeros(n, t, rng.random_range(0.05..0.95));
    for v in params.theta.iter_mut().chain(params.tau.iter_mut()) {
        *v = normal.sample(&mut rng);
    }
    for v in params.psi.iter_mut() {
        *v = 0.7 * normal.sample(&mut rng);
    }
    let w: Vec<f64> = (0..t).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    params.nu = w.iter().map(|v| v / total).collect();
    let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..t).map(|_| rng.random_range(0.01..1.0)).collect()).collect();
    Draw {
        data: Dataset::new(n, records).unwrap(),
        params,
        resp: Responsibilities::from_rows(&rows).unwrap(),
        config: EmConfig {
            num_buckets: t,
            l2_theta: rng.random_range(0.0..0.2),
            l2_psi: rng.random_range(0.0..0.2),
            ..EmConfig::default()
        },
    }
}

/// Worst relative error over every θ/ψ/τ coordinate of one draw.
fn worst_fd_error(d: &Draw, model: &EmModel) -> f64 {
    const H_GRAD: f64 = 1e-5;
    const H_HESS: f64 = 1e-4;
    let q = |p: &ModelParams| model.q_objective(p, &d.resp, &d.config);
    let g = model.grad_hess(&d.params, &d.resp, &d.config);
    let q0 = q(&d.params);
    let mut worst: f64 = 0.0;
    for block in 0..3 {
        let (grad, hess) = match block {
            0 => (&g.theta, &g.theta_hess),
            1 => (&g.psi, &g.psi_hess),
            _ => (&g.tau, &g.tau_hess),
        };
        for k in 0..grad.len() {
            let at = |h: f64| {
                let mut p = d.params.clone();
                match block {
                    0 => p.theta[k] += h,
                    1 => p.psi[k] += h,
                    _ => p.tau[k] += h,
                }
                q(&p)
            };
            let fd_g = (at(H_GRAD) - at(-H_GRAD)) / (2.0 * H_GRAD);
            let fd_h = (at(H_HESS) - 2.0 * q0 + at(-H_HESS)) / (H_HESS * H_HESS);
            worst = worst.max(rel_err(grad[k], fd_g)).max(rel_err(hess[k], fd_h));
        }
    }
    worst
}

pub fn p1_gradients() -> CheckResult {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let d = draw(seed);
        let plain = EmModel::new(&d.data);
        let partial = EmModel::with_partial(
            &d.data,
            PartialTerm {
                weight: 1.0,
                sigma: 0.25,
            },
        );
        worst = worst.max(worst_fd_error(&d, &plain)).max(worst_fd_error(&d, &partial));
    }
    ensure(worst < 1e-4, || format!("worst relative error {worst:.3e} >= 1e-4"))?;
    Ok(format!("50 draws x 2 likelihoods, worst relative error {worst:.2e} < 1e-4"))
}

// ---------------------------------------------------------------- P2

fn largest_drop(fit: &FitResult) -> f64 {
    let mut prev = fit.initial_objective;
    let mut worst: f64 = 0.0;
    for &q in &fit.q_trace {
        worst = worst.max(prev - q);
        prev = q;
    }
    worst
}

pub fn p2_monotone() -> CheckResult {
    let (mut worst, mut backtracks, mut iterations) = (0.0f64, 0, 0);
    for seed in 0..SEEDS {
        let world = sample_world(7, 5, seed);
        let data = Dataset::new(7, uniform_comparisons(&world, 300, seed + 1000)).unwrap();
        let config = EmConfig::default().with_seed(seed);
        let fits = [
            (fit_em(&data, &config).map_err(|e| e.to_string())?, EmModel::new(&data)),
            (
                fit_em_partial(&data, &config).map_err(|e| e.to_string())?,
                EmModel::with_partial(&data, config.partial_term()),
            ),
        ];
        for (fit, model) in &fits {
            worst = worst.max(largest_drop(fit));
            backtracks += fit.backtracks;
            iterations += fit.q_trace.len();
            // The trace must be the objective it claims to be.
            let last = *fit.q_trace.last().ok_or("empty trace")?;
            let recomputed = model.penalized_log_likelihood(&fit.params, &config);
            ensure(rel_err(last, recomputed) < 1e-9, || {
                format!("seed {seed}: trace ends at {last}, objective at fitted params is {recomputed}")
            })?;
        }
    }
    ensure(worst <= 1e-9, || format!("objective dropped by {worst:.3e}"))?;
    Ok(format!(
        "{SEEDS} datasets x 2 likelihoods, {iterations} iterations, {backtracks} backtracks, largest drop {worst:.1e}"
    ))
}

// ---------------------------------------------------------------- P3

/// `ln sigmoid(x)` without overflow.
fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn p3_bt_reduction() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let normal = Normal::new(0.0, 1.5).unwrap();
    let mut worst: f64 = 0.0;
    for point in 0..100 {
        let n = rng.random_range(2..9);
        let m = rng.random_range(1..60);
        let records: Vec<PreferenceRecord> = (0..m)
            .map(|k| {
                let i = rng.random_range(0..n);
                let j = (i + rng.random_range(1..n)) % n;
                record(k, i, j, if rng.random_bool(0.5) { Outcome::Win } else { Outcome::Loss })
            })
            .collect();
        let data = Dataset::new(n, records.clone()).unwrap();
        let mut params = ModelParams::zeros(n, 1, 0.0);
        params.theta.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        params.tau[0] = normal.sample(&mut rng);
        let extended = log_likelihood(&params, &data);
        let bt: f64 = records
            .iter()
            .map(|r| {
                let d = params.theta[r.policy_i] - params.theta[r.policy_j];
                match r.outcome {
                    Outcome::Win => ln_sigmoid(d),
                    _ => ln_sigmoid(-d),
                }
            })
            .sum();
        let err = (extended - bt).abs();
        ensure(err < 1e-9, || format!("point {point}: extended {extended} vs BT {bt}"))?;
        worst = worst.max(err);
    }
    Ok(format!("100 points, largest |difference| {worst:.1e}"))
}

// ---------------------------------------------------------------- P4

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (pos, &k) in order.iter().enumerate() {
        r[k] = pos as f64;
    }
    r
}

/// Spearman's rho for tie-free data via the rank-difference formula.
fn spearman_rho(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

pub fn p4_recovery() -> CheckResult {
    let mut rhos = Vec::new();
    for seed in 0..SEEDS {
        let world = sample_world(7, 5, seed);
        let data = Dataset::new(7, uniform_comparisons(&world, 600, seed + 2000)).unwrap();
        let fit = fit_em(&data, &EmConfig::default().with_seed(seed)).map_err(|e| e.to_string())?;
        rhos.push(spearman_rho(&fit.params.theta, &world.params.theta));
    }
    let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
    let min = rhos.iter().copied().fold(f64::INFINITY, f64::min);
    ensure(mean >= 0.9, || format!("mean Spearman {mean:.4} < 0.9 (min {min:.3})"))?;
    Ok(format!("N=7 T=5 M=600 over {SEEDS} seeds: mean Spearman {mean:.4} >= 0.9 (min {min:.3})"))
}

// ---------------------------------------------------------------- P5, P6

fn experiment(world: WorldConfig, grid: Vec<usize>, methods: Vec<RankingMethod>) -> ExperimentConfig {
    ExperimentConfig {
        world,
        grid,
        methods,
        repetitions: SEEDS as usize,
        seed: 0,
        ..ExperimentConfig::default()
    }
}

/// Mean Pearson r of one method at one grid point, from the per-trial rows.
fn mean_r(report: &ExperimentReport, method: &str, m: usize) -> Result<f64, String> {
    let rs: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.method == method && r.comparisons == m && r.pearson.is_finite())
        .map(|r| r.pearson)
        .collect();
    ensure(rs.len() == SEEDS as usize, || format!("{method} at M={m}: {} of {SEEDS} trials usable", rs.len()))?;
    Ok(rs.iter().sum::<f64>() / rs.len() as f64)
}

pub fn p5_convergence() -> CheckResult {
    let task = RankingMethod::TaskEm;
    let report = run_ranking_experiment(&experiment(WorldConfig::default(), vec![100, 600], vec![task]))?;
    let (r100, r600) = (mean_r(&report, task.as_str(), 100)?, mean_r(&report, task.as_str(), 600)?);
    ensure(r100 >= 0.8 * r600, || format!("r@100 {r100:.4} < 0.8 x r@600 {r600:.4}"))?;
    Ok(format!("TASK mean r {r100:.4} at M=100 >= 0.8 x {r600:.4} at M=600"))
}

pub fn p6_ordering() -> CheckResult {
    let world = WorldConfig::default().with_psi_std(0.5);
    let methods = vec![RankingMethod::TaskEm, RankingMethod::Bt, RankingMethod::Elo];
    let report = run_ranking_experiment(&experiment(world.clone(), vec![600], methods))?;
    let task = mean_r(&report, RankingMethod::TaskEm.as_str(), 600)?;
    let bt = mean_r(&report, RankingMethod::Bt.as_str(), 600)?;
    let elo = mean_r(&report, RankingMethod::Elo.as_str(), 600)?;

    let drift = run_drift_experiment(&experiment(world, vec![600], vec![RankingMethod::TaskEm]))?;
    let drift_task = mean_r(&drift, RankingMethod::TaskEm.as_str(), 600)?;
    let regular = mean_r(&drift, REGULAR, 600)?;

    let summary = format!(
        "psi spread 0.5, M=600: TASK {task:.4}, BT {bt:.4}, Elo {elo:.4}; drift: TASK {drift_task:.4} vs Regular {regular:.4}"
    );
    ensure(task >= bt && bt >= elo, || format!("ordering violated: {summary}"))?;
    ensure(drift_task > regular, || format!("drift ordering violated: {summary}"))?;
    Ok(summary)
}

// ---------------------------------------------------------------- P7

fn mmrv_by_enumeration(est: &[f64], oracle: &[f64]) -> f64 {
    let n = est.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let oracle_says = oracle[i].partial_cmp(&oracle[j]).unwrap();
            let est_says = est[i].partial_cmp(&est[j]).unwrap();
            let swapped = oracle_says != std::cmp::Ordering::Equal
                && est_says != std::cmp::Ordering::Equal
                && oracle_says != est_says;
            if swapped {
                worst = worst.max((oracle[i] - oracle[j]).abs());
            }
        }
        total += worst;
    }
    total / n as f64
}

pub fn p7_oracles() -> CheckResult {
    // Two players, 3 wins in 4: the MLE difference is logit(3/4) = ln 3.
    let outcomes = [Outcome::Win, Outcome::Loss, Outcome::Win, Outcome::Win];
    let data = Dataset::new(2, outcomes.iter().enumerate().map(|(k, &o)| record(k, 0, 1, o)).collect()).unwrap();
    let bt = bt_mle(&data, &BtConfig { l2: 0.0, ..BtConfig::default() }).map_err(|e| e.to_string())?;
    let gap = bt.scores[0] - bt.scores[1];
    ensure((gap - 3f64.ln()).abs() < 1e-3, || format!("BT gap {gap} vs ln 3"))?;

    let stream = [
        (0, 1, Outcome::Win),
        (1, 2, Outcome::Tie),
        (2, 0, Outcome::Win),
        (0, 1, Outcome::Loss),
        (2, 1, Outcome::Tie),
    ];
    let data = Dataset::new(3, stream.iter().enumerate().map(|(k, &(i, j, o))| record(k, i, j, o)).collect()).unwrap();
    let got = elo(&data, &EloConfig::default()).scores;
    let mut r = [0.0f64; 3];
    for &(i, j, o) in &stream {
        let y = match o {
            Outcome::Win => 1.0,
            Outcome::Tie => 0.5,
            Outcome::Loss => 0.0,
        };
        let delta = 32.0 * (y - 1.0 / (1.0 + (r[j] - r[i]).exp()));
        r[i] += delta;
        r[j] -= delta;
    }
    ensure(got == r.to_vec(), || format!("Elo {got:?} vs hand replay {r:?}"))?;

    let mut fixtures: Vec<(Vec<f64>, Vec<f64>)> = vec![
        (vec![0.9, 0.5, 0.1], vec![0.9, 0.5, 0.1]),
        (vec![0.5, 0.9, 0.1], vec![0.9, 0.5, 0.1]),
        (vec![1.0, 0.5, 0.0], vec![0.0, 0.5, 1.0]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let n = rng.random_range(2..9);
        fixtures.push(((0..n).map(|_| rng.random()).collect(), (0..n).map(|_| rng.random()).collect()));
    }
    for (est, oracle) in &fixtures {
        let got = mmrv(est, oracle).map_err(|e| e.to_string())?;
        let want = mmrv_by_enumeration(est, oracle);
        ensure((got - want).abs() < 1e-4, || format!("mmrv {est:?} / {oracle:?}: {got} vs {want}"))?;
    }
    Ok(format!(
        "BT gap {gap:.5} (ln 3 = {:.5}); Elo replay exact; {} mmrv fixtures match enumeration",
        3f64.ln(),
        fixtures.len()
    ))
}
