use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{RankingError, Result};

/// Parameters of the latent-bucket pairwise model.
///
/// `psi` is stored row-major with shape `num_policies x num_buckets`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    pub tau: Vec<f64>,
    pub nu: Vec<f64>,
    pub nu_tie: f64,
}

impl ModelParams {
    /// All offsets zero, uniform bucket prior.
    pub fn zeros(num_policies: usize, num_buckets: usize, nu_tie: f64) -> Self {
        ModelParams {
            theta: vec![0.0; num_policies],
            psi: vec![0.0; num_policies * num_buckets],
            tau: vec![0.0; num_buckets],
            nu: vec![1.0 / num_buckets as f64; num_buckets],
            nu_tie,
        }
    }

    /// Initial point of the EM fit: `theta, tau ~ N(0, init_std)`, zero offsets,
    /// uniform prior, tie rate 0.5.
    pub fn initial(num_policies: usize, num_buckets: usize, init_std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, init_std).expect("init_std must be finite and >= 0");
        let mut params = ModelParams::zeros(num_policies, num_buckets, 0.5);
        for v in params.theta.iter_mut() {
            *v = normal.sample(&mut rng);
        }
        for v in params.tau.iter_mut() {
            *v = normal.sample(&mut rng);
        }
        params
    }

    pub fn num_policies(&self) -> usize {
        self.theta.len()
    }

    pub fn num_buckets(&self) -> usize {
        self.tau.len()
    }

    #[inline]
    pub fn psi(&self, policy: usize, bucket: usize) -> f64 {
        self.psi[policy * self.tau.len() + bucket]
    }

    #[inline]
    pub fn psi_mut(&mut self, policy: usize, bucket: usize) -> &mut f64 {
        let t = self.tau.len();
        &mut self.psi[policy * t + bucket]
    }

    /// Log-odds that `policy` solves a task from `bucket`.
    #[inline]
    pub fn logit(&self, policy: usize, bucket: usize) -> f64 {
        self.theta[policy] + self.psi(policy, bucket) - self.tau[bucket]
    }

    /// Subtracts the mean from `theta` and from `tau`.
    pub fn center(&mut self) {
        center(&mut self.theta);
        center(&mut self.tau);
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
            && self.psi.iter().all(|v| v.is_finite())
            && self.tau.iter().all(|v| v.is_finite())
            && self.nu.iter().all(|v| v.is_finite())
            && self.nu_tie.is_finite()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.tau.len();
        if t == 0 || self.nu.len() != t || self.psi.len() != self.theta.len() * t {
            return Err(RankingError::InvalidConfig(format!(
                "inconsistent parameter shapes: theta {}, psi {}, tau {}, nu {}",
                self.theta.len(),
                self.psi.len(),
                t,
                self.nu.len()
            )));
        }
        let total: f64 = self.nu.iter().sum();
        if self.nu.iter().any(|&v| v < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(RankingError::InvalidConfig(format!(
                "bucket prior must lie on the simplex (sum {total})"
            )));
        }
        if !(self.nu_tie > 0.0 && self.nu_tie < 1.0) {
            return Err(RankingError::InvalidConfig(format!(
                "nu_tie {} outside (0, 1)",
                self.nu_tie
            )));
        }
        if !self.is_finite() {
            return Err(RankingError::NonFinite("parameters"));
        }
        Ok(())
    }
}

pub(crate) fn center(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    for v in values.iter_mut() {
        *v -= mean;
    }
}

/// Gaussian partial-success term weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialTerm {
    pub weight: f64,
    pub sigma: f64,
}

impl PartialTerm {
    /// `w / sigma^2`, the common factor of every partial-success derivative.
    #[inline]
    pub(crate) fn scale(&self) -> f64 {
        self.weight / (self.sigma * self.sigma)
    }
}

/// Hyperparameters of the EM fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub em_iters: usize,
    pub num_buckets: usize,
    pub step_clip: f64,
    pub l2_theta: f64,
    pub l2_psi: f64,
    pub step_decay: f64,
    pub tol: f64,
    pub partial_weight: f64,
    pub partial_sigma: f64,
    /// Standard deviation of the random `theta`/`tau` initialization.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            em_iters: 60,
            num_buckets: 60,
            step_clip: 1.0,
            l2_theta: 1e-2,
            l2_psi: 1e-2,
            step_decay: 0.99,
            tol: 1e-4,
            partial_weight: 1.0,
            partial_sigma: 0.25,
            init_std: 0.1,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_buckets(mut self, num_buckets: usize) -> Self {
        self.num_buckets = num_buckets;
        self
    }

    pub fn partial_term(&self) -> PartialTerm {
        PartialTerm {
            weight: self.partial_weight,
            sigma: self.partial_sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(RankingError::InvalidConfig(msg.to_string()));
        if self.num_buckets == 0 {
            return bad("num_buckets must be >= 1");
        }
        if !(self.step_clip > 0.0) {
            return bad("step_clip must be positive");
        }
        if !(self.l2_theta >= 0.0 && self.l2_psi >= 0.0) {
            return bad("l2 penalties must be nonnegative");
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return bad("step_decay must lie in (0, 1]");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.partial_weight >= 0.0) || !(self.partial_sigma > 0.0) {
            return bad("partial_weight must be >= 0 and partial_sigma > 0");
        }
        if !(self.init_std >= 0.0) {
            return bad("init_std must be nonnegative");
        }
        Ok(())
    }
}
