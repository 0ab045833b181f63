//! Ground-truth worlds drawn from the latent-bucket generative model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};
use ranking_core::{outcome_probs, sigmoid, ModelParams, Outcome, PreferenceRecord};
use serde::{Deserialize, Serialize};

/// Spreads used when drawing a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub num_policies: usize,
    pub num_buckets: usize,
    pub theta_std: f64,
    pub tau_std: f64,
    /// Standard deviation of the policy-by-bucket offsets.
    pub psi_std: f64,
    pub nu_tie: f64,
    /// Standard deviation of the additive noise on reported progress.
    pub progress_noise: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            num_policies: 7,
            num_buckets: 5,
            theta_std: 1.0,
            tau_std: 1.0,
            psi_std: 0.3,
            nu_tie: 0.3,
            progress_noise: 0.1,
        }
    }
}

impl WorldConfig {
    pub fn new(num_policies: usize, num_buckets: usize) -> Self {
        WorldConfig {
            num_policies,
            num_buckets,
            ..WorldConfig::default()
        }
    }

    pub fn with_psi_std(mut self, psi_std: f64) -> Self {
        self.psi_std = psi_std;
        self
    }

    pub fn with_progress_noise(mut self, noise: f64) -> Self {
        self.progress_noise = noise;
        self
    }
}

/// True parameters of a simulated arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub params: ModelParams,
    pub progress_noise: f64,
    pub seed: u64,
}

impl WorldSpec {
    pub fn num_policies(&self) -> usize {
        self.params.num_policies()
    }

    pub fn num_buckets(&self) -> usize {
        self.params.num_buckets()
    }

    /// Probability that `policy` solves a task from `bucket`.
    pub fn solve_prob(&self, policy: usize, bucket: usize) -> f64 {
        sigmoid(self.params.logit(policy, bucket))
    }

    pub fn sample_bucket<R: Rng>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.params.nu, rng)
    }
}

/// World with the default spreads.
pub fn sample_world(num_policies: usize, num_buckets: usize, seed: u64) -> WorldSpec {
    sample_world_with(&WorldConfig::new(num_policies, num_buckets), seed)
}

/// Draws `theta ~ N(0, theta_std)`, `tau ~ N(0, tau_std)`, `psi ~ N(0, psi_std)`,
/// `nu ~ Dirichlet(1, ..., 1)`, then centers `theta` and `tau`.
pub fn sample_world_with(config: &WorldConfig, seed: u64) -> WorldSpec {
    assert!(config.num_policies >= 2, "a world needs at least two policies");
    assert!(config.num_buckets >= 1, "a world needs at least one bucket");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, t) = (config.num_policies, config.num_buckets);
    let mut params = ModelParams::zeros(n, t, config.nu_tie);
    let draw = |std: f64, rng: &mut ChaCha8Rng| Normal::new(0.0, std).expect("finite spread").sample(rng);
    params.theta.iter_mut().for_each(|v| *v = draw(config.theta_std, &mut rng));
    params.tau.iter_mut().for_each(|v| *v = draw(config.tau_std, &mut rng));
    params.psi.iter_mut().for_each(|v| *v = draw(config.psi_std, &mut rng));
    // Normalized unit exponentials are a flat Dirichlet draw.
    let raw: Vec<f64> = (0..t).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = raw.iter().sum();
    params.nu = raw.iter().map(|v| v / total).collect();
    params.center();
    WorldSpec {
        params,
        progress_noise: config.progress_noise,
        seed,
    }
}

/// Expected solve probability of each policy over the bucket prior.
pub fn oracle_scores(world: &WorldSpec) -> Vec<f64> {
    (0..world.num_policies())
        .map(|p| {
            (0..world.num_buckets())
                .map(|t| world.params.nu[t] * world.solve_prob(p, t))
                .sum()
        })
        .collect()
}

pub(crate) fn sample_categorical<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    // Rounding can leave u marginally above the last weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn noisy_progress<R: Rng>(q: f64, noise: f64, rng: &mut R) -> f64 {
    if noise == 0.0 {
        return q;
    }
    let e: f64 = StandardNormal.sample(rng);
    (q + noise * e).clamp(0.0, 1.0)
}

/// One A/B trial of `pair` on a task from the given bucket.
pub fn simulate_in_bucket<R: Rng>(world: &WorldSpec, pair: (usize, usize), bucket: usize, rng: &mut R) -> PreferenceRecord {
    let (i, j) = pair;
    let probs = outcome_probs(&world.params, bucket, i, j);
    let u: f64 = rng.random();
    let outcome = if u < probs.win {
        Outcome::Win
    } else if u < probs.win + probs.tie {
        Outcome::Tie
    } else {
        Outcome::Loss
    };
    let progress_i = noisy_progress(world.solve_prob(i, bucket), world.progress_noise, rng);
    let progress_j = noisy_progress(world.solve_prob(j, bucket), world.progress_noise, rng);
    let trial_id = format!("sim-{:016x}", rng.random::<u64>());
    PreferenceRecord::new(trial_id, i, j, outcome)
        .and_then(|r| r.with_progress(progress_i, progress_j))
        .map(|r| r.with_task_label(format!("bucket-{bucket}")))
        .expect("simulated records are valid by construction")
}

/// One A/B trial of `pair` with the bucket drawn from the world's prior.
pub fn simulate_comparison<R: Rng>(world: &WorldSpec, pair: (usize, usize), rng: &mut R) -> PreferenceRecord {
    let bucket = world.sample_bucket(rng);
    simulate_in_bucket(world, pair, bucket, rng)
}

/// Uniform unordered pair from `pool` in random A/B order.
pub fn sample_pair<R: Rng>(pool: &[usize], rng: &mut R) -> (usize, usize) {
    assert!(pool.len() >= 2, "need two policies to form a pair");
    let a = rng.random_range(0..pool.len());
    let b = (a + rng.random_range(1..pool.len())) % pool.len();
    (pool[a], pool[b])
}

/// Progress of a single rollout by a policy of the given skill in `[0, 1]`.
///
/// The skill is read as a solve probability on a bucket of average difficulty,
/// so the rollout succeeds with probability `sigmoid(logit(skill) - tau_t)`
/// for a bucket `t` drawn from the prior.
pub fn synthetic_env_step<R: Rng>(world: &WorldSpec, skill: f64, rng: &mut R) -> f64 {
    let bucket = world.sample_bucket(rng);
    env_progress(world, skill, bucket, rng)
}

pub(crate) fn env_progress<R: Rng>(world: &WorldSpec, skill: f64, bucket: usize, rng: &mut R) -> f64 {
    let skill = skill.clamp(0.0, 1.0);
    let q = if skill >= 1.0 {
        1.0
    } else if skill <= 0.0 {
        0.0
    } else {
        sigmoid((skill / (1.0 - skill)).ln() - world.params.tau[bucket])
    };
    noisy_progress(q, world.progress_noise, rng)
}
