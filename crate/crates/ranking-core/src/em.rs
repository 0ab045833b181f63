//! EM fit of the latent-bucket model.
//!
//! The E-step computes posterior bucket weights per trial. The M-step applies
//! clipped diagonal-Newton updates block by block (`theta`, then `psi`, then
//! `tau`, each block's derivatives taken at the point left by the previous
//! block), re-estimates the bucket prior and the tie rate, and re-centers
//! `theta` and `tau`. A step is only accepted if the penalized observed-data
//! log-likelihood does not drop; otherwise the Newton steps are halved.

use serde::{Deserialize, Serialize};

use crate::error::{RankingError, Result};
use crate::metrics::rank_from_scores;
use crate::model::{log_sum_exp, node_terms, NodeTerms, Trial};
use crate::params::{EmConfig, ModelParams, PartialTerm};
use crate::record::{Dataset, Outcome};

/// Curvature below this magnitude is treated as flat.
const HESSIAN_FLOOR: f64 = 1e-8;
/// Allowed decrease of the objective between iterations before backtracking.
const MONOTONE_SLACK: f64 = 1e-9;
const MAX_HALVINGS: usize = 10;
const NU_TIE_MIN: f64 = 1e-4;
const NU_TIE_MAX: f64 = 1.0 - 1e-4;

/// Posterior bucket weights, one row of length `T` per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Responsibilities {
    num_buckets: usize,
    gamma: Vec<f64>,
    /// Observed-data log-likelihood at the parameters used for the E-step.
    pub log_likelihood: f64,
    /// Trials whose marginal likelihood underflowed; they received a uniform row.
    pub degenerate_rows: Vec<usize>,
}

impl Responsibilities {
    /// Builds responsibilities from explicit rows. Each row is renormalized.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_buckets = rows.first().map_or(0, |r| r.len());
        if num_buckets == 0 || rows.iter().any(|r| r.len() != num_buckets) {
            return Err(RankingError::InvalidConfig(
                "responsibility rows must be nonempty and equally long".into(),
            ));
        }
        let mut gamma = Vec::with_capacity(rows.len() * num_buckets);
        for row in rows {
            let total: f64 = row.iter().sum();
            if !(total > 0.0) || row.iter().any(|&v| v < 0.0) {
                return Err(RankingError::InvalidConfig(
                    "responsibility rows must be nonnegative with positive mass".into(),
                ));
            }
            gamma.extend(row.iter().map(|v| v / total));
        }
        Ok(Responsibilities {
            num_buckets,
            gamma,
            log_likelihood: f64::NAN,
            degenerate_rows: Vec::new(),
        })
    }

    pub fn num_buckets(&self) -> usize {
        self.num_buckets
    }

    pub fn num_records(&self) -> usize {
        if self.num_buckets == 0 {
            0
        } else {
            self.gamma.len() / self.num_buckets
        }
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.gamma[n * self.num_buckets..(n + 1) * self.num_buckets]
    }

    pub fn get(&self, n: usize, t: usize) -> f64 {
        self.gamma[n * self.num_buckets + t]
    }

    /// Column means, i.e. the re-estimated bucket prior.
    pub fn column_means(&self) -> Vec<f64> {
        let m = self.num_records();
        let mut means = vec![0.0; self.num_buckets];
        for n in 0..m {
            for (acc, g) in means.iter_mut().zip(self.row(n)) {
                *acc += g;
            }
        }
        // Rows sum to one up to rounding; dividing by the grand total instead of
        // `m` keeps the result on the simplex.
        let total: f64 = means.iter().sum();
        for v in means.iter_mut() {
            *v /= total;
        }
        means
    }
}

/// First and diagonal second derivatives of the Q objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub theta: Vec<f64>,
    pub theta_hess: Vec<f64>,
    /// Row-major `N x T`, like [`ModelParams::psi`].
    pub psi: Vec<f64>,
    pub psi_hess: Vec<f64>,
    pub tau: Vec<f64>,
    pub tau_hess: Vec<f64>,
}

impl Gradients {
    fn zeros(n: usize, t: usize) -> Self {
        Gradients {
            theta: vec![0.0; n],
            theta_hess: vec![0.0; n],
            psi: vec![0.0; n * t],
            psi_hess: vec![0.0; n * t],
            tau: vec![0.0; t],
            tau_hess: vec![0.0; t],
        }
    }
}

/// Output of one M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct MStep {
    pub params: ModelParams,
    /// Penalized observed-data log-likelihood at `params`.
    pub objective: f64,
    /// Number of rejected candidates before one was accepted.
    pub backtracks: usize,
    /// Multiplier applied to the Newton steps of the accepted candidate
    /// (0 when only the bucket prior could be updated).
    pub step_scale: f64,
}

/// Result of an EM fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    /// Policy indices by descending `theta`.
    pub ranking: Vec<usize>,
    /// Penalized observed-data log-likelihood after each iteration.
    pub q_trace: Vec<f64>,
    /// Same quantity at the initial parameters.
    pub initial_objective: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub backtracks: usize,
    pub degenerate_rows: usize,
}

/// The dataset together with the likelihood variant being fitted.
#[derive(Debug, Clone)]
pub struct EmModel {
    num_policies: usize,
    trials: Vec<Trial>,
    partial: Option<PartialTerm>,
}

impl EmModel {
    pub fn new(dataset: &Dataset) -> Self {
        EmModel {
            num_policies: dataset.num_policies(),
            trials: dataset.records().iter().map(Trial::from).collect(),
            partial: None,
        }
    }

    /// Likelihood augmented with the Gaussian partial-success term.
    pub fn with_partial(dataset: &Dataset, term: PartialTerm) -> Self {
        let mut model = EmModel::new(dataset);
        model.partial = (term.weight > 0.0).then_some(term);
        model
    }

    pub fn num_records(&self) -> usize {
        self.trials.len()
    }

    #[inline]
    fn terms(&self, params: &ModelParams, trial: &Trial, t: usize, log_two_nu_tie: f64) -> NodeTerms {
        node_terms(
            params.logit(trial.i, t),
            params.logit(trial.j, t),
            trial,
            log_two_nu_tie,
            self.partial,
        )
    }

    /// Posterior bucket weights under `params`.
    pub fn e_step(&self, params: &ModelParams) -> Responsibilities {
        let t_count = params.num_buckets();
        let log_nu: Vec<f64> = params.nu.iter().map(|v| v.ln()).collect();
        let log_two_nu_tie = (2.0 * params.nu_tie).ln();
        let mut gamma = Vec::with_capacity(self.trials.len() * t_count);
        let mut degenerate_rows = Vec::new();
        let mut log_likelihood = 0.0;
        let mut row = vec![0.0; t_count];
        for (n, trial) in self.trials.iter().enumerate() {
            for (t, slot) in row.iter_mut().enumerate() {
                *slot = log_nu[t] + self.terms(params, trial, t, log_two_nu_tie).log_p;
            }
            let lse = log_sum_exp(&row);
            if lse.is_finite() {
                gamma.extend(row.iter().map(|v| (v - lse).exp()));
            } else {
                degenerate_rows.push(n);
                gamma.extend(std::iter::repeat_n(1.0 / t_count as f64, t_count));
            }
            log_likelihood += lse;
        }
        Responsibilities {
            num_buckets: t_count,
            gamma,
            log_likelihood,
            degenerate_rows,
        }
    }

    /// Observed-data log-likelihood `sum_n log sum_t nu_t P(y_n | t)`.
    pub fn log_likelihood(&self, params: &ModelParams) -> f64 {
        let log_nu: Vec<f64> = params.nu.iter().map(|v| v.ln()).collect();
        let log_two_nu_tie = (2.0 * params.nu_tie).ln();
        let mut row = vec![0.0; params.num_buckets()];
        self.trials
            .iter()
            .map(|trial| {
                for (t, slot) in row.iter_mut().enumerate() {
                    *slot = log_nu[t] + self.terms(params, trial, t, log_two_nu_tie).log_p;
                }
                log_sum_exp(&row)
            })
            .sum()
    }

    /// Observed-data log-likelihood minus the L2 penalties.
    pub fn penalized_log_likelihood(&self, params: &ModelParams, config: &EmConfig) -> f64 {
        self.log_likelihood(params) - penalty(params, config)
    }

    /// Expected complete-data log-likelihood with L2 penalties.
    pub fn q_objective(&self, params: &ModelParams, resp: &Responsibilities, config: &EmConfig) -> f64 {
        let log_two_nu_tie = (2.0 * params.nu_tie).ln();
        let mut total = 0.0;
        for (n, trial) in self.trials.iter().enumerate() {
            for (t, &g) in resp.row(n).iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                total += g * (params.nu[t].ln() + self.terms(params, trial, t, log_two_nu_tie).log_p);
            }
        }
        total - penalty(params, config)
    }

    /// Analytic gradient and diagonal Hessian of [`EmModel::q_objective`].
    pub fn grad_hess(&self, params: &ModelParams, resp: &Responsibilities, config: &EmConfig) -> Gradients {
        let n_pol = params.num_policies();
        let t_count = params.num_buckets();
        let log_two_nu_tie = (2.0 * params.nu_tie).ln();
        let mut grads = Gradients::zeros(n_pol, t_count);
        for (n, trial) in self.trials.iter().enumerate() {
            for (t, &g) in resp.row(n).iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let k = self.terms(params, trial, t, log_two_nu_tie);
                let (pi, pj) = (trial.i * t_count + t, trial.j * t_count + t);
                grads.theta[trial.i] += g * k.d_i;
                grads.theta[trial.j] += g * k.d_j;
                grads.theta_hess[trial.i] += g * k.d_ii;
                grads.theta_hess[trial.j] += g * k.d_jj;
                grads.psi[pi] += g * k.d_i;
                grads.psi[pj] += g * k.d_j;
                grads.psi_hess[pi] += g * k.d_ii;
                grads.psi_hess[pj] += g * k.d_jj;
                // z_i and z_j both move by -1 with tau_t.
                grads.tau[t] -= g * (k.d_i + k.d_j);
                grads.tau_hess[t] += g * (k.d_ii + k.d_jj + 2.0 * k.d_ij);
            }
        }
        for p in 0..n_pol {
            grads.theta[p] -= config.l2_theta * params.theta[p];
            grads.theta_hess[p] -= config.l2_theta;
        }
        for (k, v) in params.psi.iter().enumerate() {
            grads.psi[k] -= config.l2_psi * v;
            grads.psi_hess[k] -= config.l2_psi;
        }
        grads
    }

    /// One M-step with monotonicity backtracking.
    ///
    /// `iteration` is zero-based and sets the clip bound
    /// `step_clip * step_decay^iteration`.
    pub fn m_step(
        &self,
        params: &ModelParams,
        resp: &Responsibilities,
        config: &EmConfig,
        iteration: usize,
    ) -> Result<MStep> {
        let baseline = if resp.log_likelihood.is_finite() {
            resp.log_likelihood - penalty(params, config)
        } else {
            self.penalized_log_likelihood(params, config)
        };
        let bound = config.step_clip * config.step_decay.powi(iteration as i32);
        let nu_new = resp.column_means();
        let nu_tie_new = self.tie_rate(resp);
        let theta_grads = self.grad_hess(params, resp, config);

        let mut attempts: Vec<(f64, f64)> = vec![(1.0, nu_tie_new)];
        let mut scale = 1.0;
        for _ in 0..=MAX_HALVINGS {
            attempts.push((scale, params.nu_tie));
            scale *= 0.5;
        }
        attempts.dedup();

        for (backtracks, &(scale, nu_tie)) in attempts.iter().enumerate() {
            let candidate = self.block_update(params, resp, config, &theta_grads, bound, scale, &nu_new, nu_tie)?;
            let objective = self.penalized_log_likelihood(&candidate, config);
            if objective >= baseline - MONOTONE_SLACK {
                return Ok(MStep {
                    params: candidate,
                    objective,
                    backtracks,
                    step_scale: scale,
                });
            }
        }

        // Only the mixture weights: a plain EM update of the prior cannot lower
        // the likelihood with everything else held fixed.
        let mut candidate = params.clone();
        candidate.nu = nu_new;
        candidate.center();
        let objective = self.penalized_log_likelihood(&candidate, config);
        if objective >= baseline - MONOTONE_SLACK {
            return Ok(MStep {
                params: candidate,
                objective,
                backtracks: attempts.len(),
                step_scale: 0.0,
            });
        }
        let mut unchanged = params.clone();
        unchanged.center();
        let objective = self.penalized_log_likelihood(&unchanged, config);
        Ok(MStep {
            params: unchanged,
            objective,
            backtracks: attempts.len() + 1,
            step_scale: 0.0,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn block_update(
        &self,
        params: &ModelParams,
        resp: &Responsibilities,
        config: &EmConfig,
        theta_grads: &Gradients,
        bound: f64,
        scale: f64,
        nu: &[f64],
        nu_tie: f64,
    ) -> Result<ModelParams> {
        let mut next = params.clone();
        for p in 0..next.theta.len() {
            next.theta[p] += scale * newton_step(theta_grads.theta[p], theta_grads.theta_hess[p], bound, config.step_clip);
        }
        ensure_finite(&next.theta, "theta")?;

        let psi_grads = self.grad_hess(&next, resp, config);
        for k in 0..next.psi.len() {
            next.psi[k] += scale * newton_step(psi_grads.psi[k], psi_grads.psi_hess[k], bound, config.step_clip);
        }
        ensure_finite(&next.psi, "psi")?;

        let tau_grads = self.grad_hess(&next, resp, config);
        for t in 0..next.tau.len() {
            next.tau[t] += scale * newton_step(tau_grads.tau[t], tau_grads.tau_hess[t], bound, config.step_clip);
        }
        ensure_finite(&next.tau, "tau")?;

        next.nu = nu.to_vec();
        next.nu_tie = nu_tie;
        next.center();
        Ok(next)
    }

    /// Tie rate implied by the responsibility-weighted outcome counts:
    /// `0.5 * ties / wins`, with wins symmetrized over both sides as
    /// `(wins + losses) / 2`, clamped to `(1e-4, 1 - 1e-4)`.
    pub fn tie_rate(&self, resp: &Responsibilities) -> f64 {
        let mut ties = 0.0;
        let mut decisive = 0.0;
        for (n, trial) in self.trials.iter().enumerate() {
            let weight: f64 = resp.row(n).iter().sum();
            match trial.outcome {
                Outcome::Tie => ties += weight,
                Outcome::Win | Outcome::Loss => decisive += weight,
            }
        }
        let rate = if decisive > 0.0 {
            0.5 * ties / (0.5 * decisive)
        } else {
            NU_TIE_MAX
        };
        rate.clamp(NU_TIE_MIN, NU_TIE_MAX)
    }

    /// Runs EM from the seeded initial point.
    pub fn fit(&self, config: &EmConfig) -> Result<FitResult> {
        config.validate()?;
        let mut params = ModelParams::initial(self.num_policies, config.num_buckets, config.init_std, config.seed);
        let initial_objective = self.penalized_log_likelihood(&params, config);
        let mut q_trace = Vec::with_capacity(config.em_iters);
        let mut converged = false;
        let mut backtracks = 0;
        let mut degenerate_rows = 0;
        let mut iterations_run = 0;

        for m in 0..config.em_iters {
            let resp = self.e_step(&params);
            degenerate_rows += resp.degenerate_rows.len();
            let step = self.m_step(&params, &resp, config, m)?;
            backtracks += step.backtracks;
            let max_change = params
                .theta
                .iter()
                .zip(&step.params.theta)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            params = step.params;
            q_trace.push(step.objective);
            iterations_run = m + 1;
            if max_change < config.tol {
                converged = true;
                break;
            }
        }

        let ranking = rank_from_scores(&params.theta);
        Ok(FitResult {
            params,
            ranking,
            q_trace,
            initial_objective,
            iterations_run,
            converged,
            backtracks,
            degenerate_rows,
        })
    }
}

/// Clipped Newton ascent step for one coordinate. Flat or convex directions
/// fall back to a bounded gradient step.
#[inline]
fn newton_step(g: f64, h: f64, bound: f64, step_clip: f64) -> f64 {
    let raw = if h < -HESSIAN_FLOOR {
        -g / h
    } else {
        g * step_clip / (g.abs() + 1e-8)
    };
    raw.clamp(-bound, bound)
}

fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(RankingError::NonFinite(what))
    }
}

pub(crate) fn penalty(params: &ModelParams, config: &EmConfig) -> f64 {
    let theta_sq: f64 = params.theta.iter().map(|v| v * v).sum();
    let psi_sq: f64 = params.psi.iter().map(|v| v * v).sum();
    0.5 * config.l2_theta * theta_sq + 0.5 * config.l2_psi * psi_sq
}

/// Posterior bucket weights for every record.
pub fn e_step(params: &ModelParams, dataset: &Dataset) -> Responsibilities {
    EmModel::new(dataset).e_step(params)
}

/// Observed-data log-likelihood of the dataset, bucket marginalized out.
pub fn log_likelihood(params: &ModelParams, dataset: &Dataset) -> f64 {
    EmModel::new(dataset).log_likelihood(params)
}

pub fn q_objective(params: &ModelParams, resp: &Responsibilities, dataset: &Dataset, config: &EmConfig) -> f64 {
    EmModel::new(dataset).q_objective(params, resp, config)
}

pub fn grad_hess(params: &ModelParams, resp: &Responsibilities, dataset: &Dataset, config: &EmConfig) -> Gradients {
    EmModel::new(dataset).grad_hess(params, resp, config)
}

pub fn m_step(
    params: &ModelParams,
    resp: &Responsibilities,
    dataset: &Dataset,
    config: &EmConfig,
    iteration: usize,
) -> Result<ModelParams> {
    EmModel::new(dataset).m_step(params, resp, config, iteration).map(|s| s.params)
}

/// Fits the latent-bucket model to preference outcomes only.
pub fn fit_em(dataset: &Dataset, config: &EmConfig) -> Result<FitResult> {
    dataset.require_fit_input()?;
    EmModel::new(dataset).fit(config)
}

/// Fits the model with the partial-success term for records carrying progress.
pub fn fit_em_partial(dataset: &Dataset, config: &EmConfig) -> Result<FitResult> {
    dataset.require_fit_input()?;
    if !dataset.records().iter().any(|r| r.has_progress()) {
        return Err(RankingError::NoProgressData);
    }
    EmModel::with_partial(dataset, config.partial_term()).fit(config)
}
