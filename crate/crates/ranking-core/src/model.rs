//! Outcome likelihood of the latent-bucket pairwise model.
//!
//! Given bucket `t`, each policy solves the task independently with probability
//! `q = sigmoid(theta + psi[t] - tau[t])`. The three outcome masses for side A are
//!
//! ```text
//! win  = q_i (1 - q_j)
//! loss = (1 - q_i) q_j
//! tie  = 2 nu_tie sqrt(q_i (1 - q_i) q_j (1 - q_j))
//! ```
//!
//! and are normalized by their sum to form a distribution. Dividing every mass
//! by `sqrt(q_i (1 - q_i) q_j (1 - q_j))` shows the normalized triple only depends
//! on `d = z_i - z_j` through the logits `(d/2, -d/2, ln 2 nu_tie)`; the EM kernel
//! uses that reduced form, [`outcome_probs`] evaluates the masses directly.

use serde::{Deserialize, Serialize};

use crate::params::{ModelParams, PartialTerm};
use crate::record::{Outcome, PreferenceRecord};

/// Normalized outcome distribution for side A.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeProbs {
    pub win: f64,
    pub tie: f64,
    pub loss: f64,
}

impl OutcomeProbs {
    pub fn get(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::Win => self.win,
            Outcome::Tie => self.tie,
            Outcome::Loss => self.loss,
        }
    }

    pub fn sum(&self) -> f64 {
        self.win + self.tie + self.loss
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Normalized `(win, tie, loss)` probabilities of `i` against `j` in bucket `t`.
pub fn outcome_probs(params: &ModelParams, t: usize, i: usize, j: usize) -> OutcomeProbs {
    let z_i = params.logit(i, t);
    let z_j = params.logit(j, t);
    // ln q = -softplus(-z), ln(1 - q) = -softplus(z)
    let (lq_i, lnq_i) = (-softplus(-z_i), -softplus(z_i));
    let (lq_j, lnq_j) = (-softplus(-z_j), -softplus(z_j));
    let log_win = lq_i + lnq_j;
    let log_loss = lnq_i + lq_j;
    let log_tie = (2.0 * params.nu_tie).ln() + 0.5 * (lq_i + lnq_i + lq_j + lnq_j);
    let lse = log_sum_exp3(log_win, log_tie, log_loss);
    OutcomeProbs {
        win: (log_win - lse).exp(),
        tie: (log_tie - lse).exp(),
        loss: (log_loss - lse).exp(),
    }
}

/// `P(y_n)` with the bucket marginalized out.
pub fn marginal_prob(params: &ModelParams, record: &PreferenceRecord) -> f64 {
    (0..params.num_buckets())
        .map(|t| {
            params.nu[t] * outcome_probs(params, t, record.policy_i, record.policy_j).get(record.outcome)
        })
        .sum()
}

/// Log-likelihood of one record in one bucket plus its derivatives with respect
/// to the two log-odds `z_i` and `z_j`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct NodeTerms {
    pub log_p: f64,
    pub d_i: f64,
    pub d_j: f64,
    pub d_ii: f64,
    pub d_jj: f64,
    pub d_ij: f64,
}

/// Per-trial data the kernel needs, extracted once from a record.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Trial {
    pub i: usize,
    pub j: usize,
    pub outcome: Outcome,
    pub progress_i: Option<f64>,
    pub progress_j: Option<f64>,
}

impl From<&PreferenceRecord> for Trial {
    fn from(r: &PreferenceRecord) -> Self {
        Trial {
            i: r.policy_i,
            j: r.policy_j,
            outcome: r.outcome,
            progress_i: r.progress_i,
            progress_j: r.progress_j,
        }
    }
}

/// Evaluates the (optionally partial-success augmented) log-likelihood of a
/// trial for given log-odds, with first and second derivatives.
#[inline]
pub(crate) fn node_terms(
    z_i: f64,
    z_j: f64,
    trial: &Trial,
    log_two_nu_tie: f64,
    partial: Option<PartialTerm>,
) -> NodeTerms {
    let half = 0.5 * (z_i - z_j);
    let (lw, ll, lt) = (half, -half, log_two_nu_tie);
    let m = lw.max(ll).max(lt);
    let (ew, el, et) = ((lw - m).exp(), (ll - m).exp(), (lt - m).exp());
    let s = ew + el + et;
    let lse = m + s.ln();
    let (pw, pl, pt) = (ew / s, el / s, et / s);

    let (l_y, alpha, beta) = match trial.outcome {
        Outcome::Win => (lw, 1.0, 0.0),
        Outcome::Loss => (ll, 0.0, 1.0),
        Outcome::Tie => (lt, 0.5, 0.5),
    };
    let a_bar = pw + 0.5 * pt;
    let b_bar = pl + 0.5 * pt;
    let mut terms = NodeTerms {
        log_p: l_y - lse,
        d_i: alpha - a_bar,
        d_j: beta - b_bar,
        d_ii: -(pw + 0.25 * pt - a_bar * a_bar),
        d_jj: -(pl + 0.25 * pt - b_bar * b_bar),
        d_ij: -(0.25 * pt - a_bar * b_bar),
    };

    if let Some(term) = partial {
        if term.weight > 0.0 {
            let scale = term.scale();
            if let Some(s_i) = trial.progress_i {
                let (v, d, dd) = gaussian_progress(z_i, s_i, scale);
                terms.log_p += v;
                terms.d_i += d;
                terms.d_ii += dd;
            }
            if let Some(s_j) = trial.progress_j {
                let (v, d, dd) = gaussian_progress(z_j, s_j, scale);
                terms.log_p += v;
                terms.d_j += d;
                terms.d_jj += dd;
            }
        }
    }
    terms
}

/// Log of `exp(-(s - q)^2 / (2 sigma^2))^w` and its first two derivatives in `z`.
#[inline]
fn gaussian_progress(z: f64, s: f64, scale: f64) -> (f64, f64, f64) {
    let q = sigmoid(z);
    let var = q * (1.0 - q);
    let r = s - q;
    let value = -0.5 * scale * r * r;
    let d = scale * r * var;
    let dd = scale * var * (r * (1.0 - 2.0 * q) - var);
    (value, d, dd)
}
