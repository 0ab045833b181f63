//! Seeded ranking-quality experiments against a world's oracle scores.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ranking_core::{mmrv, pearson_r, rank, rank_from_scores, Dataset, PreferenceRecord, RankingConfig, RankingMethod};
use serde::{Deserialize, Serialize};

use crate::world::{
    oracle_scores, sample_categorical, sample_pair, sample_world_with, simulate_comparison, simulate_in_bucket,
    WorldConfig, WorldSpec,
};

/// Label used in reports for the fixed-task-set baseline of the drift experiment.
pub const REGULAR: &str = "regular";

/// Timeline of the distribution-shift scenario.
///
/// Buckets are ordered by true difficulty and the task mix moves linearly from
/// the easier half to the harder half over the run. Policies are ordered by
/// oracle score and the active pool is a window that slides from the weakest
/// towards the strongest, advancing at `churn_phases` evenly spaced points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftSchedule {
    pub bucket_drift: bool,
    pub churn_phases: usize,
    /// Size of the active pool; 0 means `N - (churn_phases - 1)`.
    pub active_policies: usize,
    /// Number of buckets the fixed-task-set baseline draws from.
    pub regular_buckets: usize,
}

impl Default for DriftSchedule {
    fn default() -> Self {
        DriftSchedule {
            bucket_drift: true,
            churn_phases: 4,
            active_policies: 0,
            regular_buckets: 2,
        }
    }
}

impl DriftSchedule {
    /// No drift and no churn.
    pub fn none() -> Self {
        DriftSchedule {
            bucket_drift: false,
            churn_phases: 1,
            active_policies: 0,
            regular_buckets: 2,
        }
    }

    fn window(&self, n: usize) -> usize {
        let w = if self.active_policies == 0 {
            n.saturating_sub(self.churn_phases.saturating_sub(1))
        } else {
            self.active_policies
        };
        w.clamp(2, n)
    }

    /// Active policies (indices into the strength order) during `phase`.
    fn active_range(&self, n: usize, phase: usize) -> std::ops::Range<usize> {
        let w = self.window(n);
        let phases = self.churn_phases.max(1);
        let start = if phases == 1 { 0 } else { ((n - w) * phase + (phases - 1) / 2) / (phases - 1) };
        start..start + w
    }

    fn phase_of(&self, k: usize, m: usize) -> usize {
        let phases = self.churn_phases.max(1);
        (k * phases / m.max(1)).min(phases - 1)
    }

    /// Bucket weights at fraction `f` of the run, buckets given easiest first.
    fn bucket_weights(&self, easiest_first: &[usize], prior: &[f64], f: f64) -> Vec<f64> {
        let t = prior.len();
        if !self.bucket_drift || t == 1 {
            return prior.to_vec();
        }
        let half = t.div_ceil(2);
        let mut w = vec![0.0; t];
        for (pos, &b) in easiest_first.iter().enumerate() {
            if pos < half {
                w[b] += (1.0 - f) / half as f64;
            }
            if pos >= t - half {
                w[b] += f / half as f64;
            }
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    /// Comparison counts to evaluate, ascending.
    pub grid: Vec<usize>,
    pub methods: Vec<RankingMethod>,
    pub repetitions: usize,
    pub seed: u64,
    pub ranking: RankingConfig,
    pub drift: DriftSchedule,
    /// Worker threads; 0 uses the available parallelism.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: WorldConfig::default(),
            grid: vec![25, 50, 100, 200, 400, 600],
            methods: RankingMethod::ALL.to_vec(),
            repetitions: 20,
            seed: 0,
            ranking: RankingConfig::default(),
            drift: DriftSchedule::default(),
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.grid.is_empty() || self.grid.contains(&0) {
            return Err("grid must contain positive comparison counts".into());
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err("grid must be strictly ascending".into());
        }
        if self.repetitions == 0 {
            return Err("repetitions must be at least 1".into());
        }
        if self.world.num_policies < 2 || self.world.num_buckets == 0 {
            return Err("world needs two policies and one bucket".into());
        }
        self.ranking.em.validate().map_err(|e| e.to_string())
    }

    /// World seed of repetition `rep`.
    pub fn world_seed(&self, rep: usize) -> u64 {
        splitmix(self.seed.wrapping_add((rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
    }
}

/// One method at one grid point in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub method: String,
    pub comparisons: usize,
    pub repetition: usize,
    pub world_seed: u64,
    /// NaN when the method could not score every policy or scores were constant.
    pub pearson: f64,
    pub mmrv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub comparisons: usize,
    /// Repetitions with a finite value.
    pub n: usize,
    pub mean_pearson: f64,
    pub std_pearson: f64,
    pub mean_mmrv: f64,
    pub std_mmrv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<TrialRow>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    fn from_rows(rows: Vec<TrialRow>) -> Self {
        let mut groups: BTreeMap<(usize, usize), (String, Vec<f64>, Vec<f64>)> = BTreeMap::new();
        let mut method_order: Vec<String> = Vec::new();
        for row in &rows {
            if !method_order.contains(&row.method) {
                method_order.push(row.method.clone());
            }
            let key = (method_order.iter().position(|m| *m == row.method).unwrap(), row.comparisons);
            let entry = groups.entry(key).or_insert_with(|| (row.method.clone(), Vec::new(), Vec::new()));
            if row.pearson.is_finite() {
                entry.1.push(row.pearson);
                entry.2.push(row.mmrv);
            }
        }
        let summary = groups
            .into_iter()
            .map(|((_, comparisons), (method, r, v))| {
                let (mean_pearson, std_pearson) = mean_std(&r);
                let (mean_mmrv, std_mmrv) = mean_std(&v);
                SummaryRow {
                    method,
                    comparisons,
                    n: r.len(),
                    mean_pearson,
                    std_pearson,
                    mean_mmrv,
                    std_mmrv,
                }
            })
            .collect();
        ExperimentReport { rows, summary }
    }

    pub fn summary_for(&self, method: &str, comparisons: usize) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.method == method && s.comparisons == comparisons)
    }

    /// Raw per-repetition rows.
    pub fn write_rows_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for row in &self.summary {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Plot-ready long format: `method,comparisons,metric,mean,std,n`.
    pub fn write_long_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["method", "comparisons", "metric", "mean", "std", "n"])?;
        for s in &self.summary {
            for (metric, mean, std) in [("pearson", s.mean_pearson, s.std_pearson), ("mmrv", s.mean_mmrv, s.std_mmrv)] {
                wtr.write_record([
                    s.method.clone(),
                    s.comparisons.to_string(),
                    metric.to_string(),
                    mean.to_string(),
                    std.to_string(),
                    s.n.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Scores a dataset with `method` and compares against the oracle. Failures
/// (e.g. a policy without progress data) produce NaN metrics.
pub fn evaluate(dataset: &Dataset, method: RankingMethod, config: &RankingConfig, oracle: &[f64]) -> (f64, f64) {
    let Ok(scores) = rank(dataset, method, config) else {
        return (f64::NAN, f64::NAN);
    };
    let r = pearson_r(&scores.scores, oracle).unwrap_or(f64::NAN);
    let v = mmrv(&scores.scores, oracle).unwrap_or(f64::NAN);
    (r, v)
}

/// Maps `f` over `0..n` on up to `threads` workers; output is in index order.
fn parallel_map<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = if threads == 0 {
        std::thread::available_parallelism().map_or(1, |p| p.get())
    } else {
        threads
    }
    .min(n.max(1));
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= n {
                    break;
                }
                let value = f(k);
                slots.lock().expect("worker panicked")[k] = Some(value);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|v| v.expect("every index is processed"))
        .collect()
}

/// `m` comparisons between uniformly drawn pairs, buckets from the prior.
pub fn uniform_comparisons(world: &WorldSpec, m: usize, seed: u64) -> Vec<PreferenceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<usize> = (0..world.num_policies()).collect();
    (0..m)
        .map(|_| {
            let pair = sample_pair(&pool, &mut rng);
            simulate_comparison(world, pair, &mut rng)
        })
        .collect()
}

/// Ranking quality as a function of the number of comparisons.
///
/// Each repetition draws one world and one stream of uniformly sampled
/// comparisons; grid point `M` uses the first `M` comparisons of the stream.
pub fn run_ranking_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, String> {
    config.validate()?;
    let max_m = *config.grid.last().expect("validated nonempty");
    let per_rep = parallel_map(config.repetitions, config.threads, |rep| {
        let world_seed = config.world_seed(rep);
        let world = sample_world_with(&config.world, world_seed);
        let oracle = oracle_scores(&world);
        let stream = uniform_comparisons(&world, max_m, splitmix(world_seed ^ 0xA5A5));
        let mut rows = Vec::new();
        for &m in &config.grid {
            let data = Dataset::new(world.num_policies(), stream[..m].to_vec()).expect("valid indices");
            for &method in &config.methods {
                let (pearson, mmrv) = evaluate(&data, method, &config.ranking, &oracle);
                rows.push(TrialRow {
                    method: method.to_string(),
                    comparisons: m,
                    repetition: rep,
                    world_seed,
                    pearson,
                    mmrv,
                });
            }
        }
        rows
    });
    Ok(ExperimentReport::from_rows(per_rep.into_iter().flatten().collect()))
}

/// Comparisons under the drift schedule: `(arena stream, fixed-task-set stream)`.
pub fn drift_comparisons(
    world: &WorldSpec,
    schedule: &DriftSchedule,
    m: usize,
    seed: u64,
) -> (Vec<PreferenceRecord>, Vec<PreferenceRecord>) {
    let n = world.num_policies();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oracle = oracle_scores(world);
    let mut weakest_first = rank_from_scores(&oracle);
    weakest_first.reverse();
    let mut easiest_first: Vec<usize> = (0..world.num_buckets()).collect();
    easiest_first.sort_by(|&a, &b| world.params.tau[a].total_cmp(&world.params.tau[b]).then(a.cmp(&b)));

    let t = world.num_buckets();
    let k_regular = schedule.regular_buckets.clamp(1, t);
    let mut all_buckets: Vec<usize> = (0..t).collect();
    for k in 0..k_regular {
        let pick = k + (rand::Rng::random_range(&mut rng, 0..(t - k)));
        all_buckets.swap(k, pick);
    }
    let regular_buckets = all_buckets[..k_regular].to_vec();

    let mut arena = Vec::with_capacity(m);
    let mut regular = Vec::with_capacity(m);
    for k in 0..m {
        let phase = schedule.phase_of(k, m);
        let pool: Vec<usize> = weakest_first[schedule.active_range(n, phase)].to_vec();
        let f = if m > 1 { k as f64 / (m - 1) as f64 } else { 0.0 };
        let weights = schedule.bucket_weights(&easiest_first, &world.params.nu, f);
        let pair = sample_pair(&pool, &mut rng);
        let bucket = sample_categorical(&weights, &mut rng);
        arena.push(simulate_in_bucket(world, pair, bucket, &mut rng));

        let pair = sample_pair(&pool, &mut rng);
        let bucket = regular_buckets[rand::Rng::random_range(&mut rng, 0..k_regular)];
        regular.push(simulate_in_bucket(world, pair, bucket, &mut rng));
    }
    (arena, regular)
}

/// Ranking quality under task-difficulty drift and policy churn.
///
/// Every configured method is fit to the arena stream; the fixed-task-set
/// baseline ranks the second stream by mean progress and is reported as
/// [`REGULAR`].
pub fn run_drift_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, String> {
    config.validate()?;
    let per_rep = parallel_map(config.repetitions, config.threads, |rep| {
        let world_seed = config.world_seed(rep);
        let world = sample_world_with(&config.world, world_seed);
        let oracle = oracle_scores(&world);
        let n = world.num_policies();
        let mut rows = Vec::new();
        for (g, &m) in config.grid.iter().enumerate() {
            let (arena, regular) = drift_comparisons(&world, &config.drift, m, splitmix(world_seed ^ (g as u64 + 1)));
            let arena = Dataset::new(n, arena).expect("valid indices");
            for &method in &config.methods {
                let (pearson, mmrv) = evaluate(&arena, method, &config.ranking, &oracle);
                rows.push(TrialRow {
                    method: method.to_string(),
                    comparisons: m,
                    repetition: rep,
                    world_seed,
                    pearson,
                    mmrv,
                });
            }
            let regular = Dataset::new(n, regular).expect("valid indices");
            let (pearson, mmrv) = evaluate(&regular, RankingMethod::Progress, &config.ranking, &oracle);
            rows.push(TrialRow {
                method: REGULAR.to_string(),
                comparisons: m,
                repetition: rep,
                world_seed,
                pearson,
                mmrv,
            });
        }
        rows
    });
    Ok(ExperimentReport::from_rows(per_rep.into_iter().flatten().collect()))
}

/// Fraction of trials whose progress scores round to the same integer
/// percentage although the preference is not a tie.
pub fn preference_progress_divergence(records: &[PreferenceRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let diverging = records
        .iter()
        .filter(|r| match (r.progress_i, r.progress_j) {
            (Some(a), Some(b)) => (a * 100.0).round() == (b * 100.0).round() && r.outcome != ranking_core::Outcome::Tie,
            _ => false,
        })
        .count();
    diverging as f64 / records.len() as f64
}
