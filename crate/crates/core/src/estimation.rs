//! Horvitz-Thompson estimation, martingale increments and variance estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::JointInclusion;
use crate::microstrata::{MicrostratumDecomposition, Slot, Stratum};
use crate::normal::normal_quantile;
use crate::population::{check_values, compensated_sum};
use crate::sampler::StratumStep;

fn require_units(sample: &[usize], y: &[f64], pi: &[f64]) -> Result<()> {
    if y.len() != pi.len() {
        return Err(Error::LengthMismatch { what: "y", got: y.len(), expected: pi.len() });
    }
    match sample.iter().find(|&&k| k >= pi.len()) {
        Some(&index) => Err(Error::UnknownUnit { index, population: pi.len() }),
        None => Ok(()),
    }
}

/// `sum_{k in S} y_k / pi_k`.
pub fn ht_estimate(sample: &[usize], y: &[f64], pi: &[f64]) -> Result<f64> {
    require_units(sample, y, pi)?;
    Ok(compensated_sum(sample.iter().map(|&k| y[k] / pi[k])))
}

/// Martingale increments of one run, alongside the two alternative
/// expressions of each increment (they must agree with `xi`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiDecomposition {
    pub xi: Vec<f64>,
    /// `b_i (c_S - c_F) + sum_k alpha_ik (c_F - c_k)`
    pub alternative: Vec<f64>,
    /// `(1 - b_i) sum_k alpha_ik (c_F - c_k) + b_i sum_k alpha_ik (c_S - c_k)`
    pub convex_form: Vec<f64>,
}

impl XiDecomposition {
    pub fn sum(&self) -> f64 {
        compensated_sum(self.xi.iter().copied())
    }

    pub fn max_form_discrepancy(&self) -> f64 {
        self.xi
            .iter()
            .zip(&self.alternative)
            .zip(&self.convex_form)
            .fold(0.0f64, |m, ((x, a), c)| m.max((x - a).abs()).max((x - c).abs()))
    }
}

/// Increment of stratum `s` given its step record and check-values `cv`.
pub(crate) fn xi_step(dec: &MicrostratumDecomposition, s: &Stratum, step: &StratumStep, cv: &[f64]) -> [f64; 3] {
    let value = |slot: Slot| slot.value_in(cv);
    let members = dec.members_with_entry(s, step.carried_in);
    let b = s.carry_out;
    let (yf, ys) = (value(step.winner), value(step.contender));
    let mut weighted = Vec::with_capacity(members.len());
    let mut diff_f = Vec::with_capacity(members.len());
    let mut diff_s = Vec::with_capacity(members.len());
    for &(slot, alpha) in &members {
        let c = value(slot);
        weighted.push(alpha * c);
        diff_f.push(alpha * (yf - c));
        diff_s.push(alpha * (ys - c));
    }
    let mean = compensated_sum(weighted);
    let sum_f = compensated_sum(diff_f);
    let sum_s = compensated_sum(diff_s);
    let xi = yf + b * value(step.carried_out) - (mean + b * value(s.exit));
    let alternative = b * (ys - yf) + sum_f;
    let convex = (1.0 - b) * sum_f + b * sum_s;
    [xi, alternative, convex]
}

pub fn xi_decompose(trace: &[StratumStep], dec: &MicrostratumDecomposition, y: &[f64]) -> Result<XiDecomposition> {
    if trace.len() != dec.sample_size() {
        return Err(Error::LengthMismatch { what: "trace", got: trace.len(), expected: dec.sample_size() });
    }
    let cv = check_values(y, dec.pi())?;
    let mut out = XiDecomposition {
        xi: Vec::with_capacity(trace.len()),
        alternative: Vec::with_capacity(trace.len()),
        convex_form: Vec::with_capacity(trace.len()),
    };
    for (s, step) in dec.strata().iter().zip(trace) {
        let [xi, alt, convex] = xi_step(dec, s, step, &cv);
        out.xi.push(xi);
        out.alternative.push(alt);
        out.convex_form.push(convex);
    }
    Ok(out)
}

/// Closed-form variance of `xi_i` conditional on the carried unit `L_{i-1}`:
/// the dispersion of the candidates for `S_i` plus the face-off term
/// `(1 - a - b)/(1 - a) sum_k alpha_k a (c_k - c_{k_i})^2`.
pub fn conditional_xi_variance(s: &Stratum, carried: Slot, pi: &[f64], cv: &[f64]) -> f64 {
    let a = s.exit_weight;
    let exit_value = s.exit.value_in(cv);
    let candidates = std::iter::once((carried.value_in(cv), s.entry_weight))
        .chain(s.interior.clone().map(|k| (cv[k], pi[k])));
    let (mut w, mut m1, mut m2, mut face) = (0.0, 0.0, 0.0, 0.0);
    for (c, alpha) in candidates {
        w += alpha;
        m1 += alpha * c;
        m2 += alpha * c * c;
        face += alpha * (c - exit_value).powi(2);
    }
    // sum_{k<l} alpha_k alpha_l (c_k - c_l)^2 = W sum alpha c^2 - (sum alpha c)^2
    let dispersion = (w * m2 - m1 * m1).max(0.0);
    let face_off = if a > 0.0 { (1.0 - a - s.carry_out) / (1.0 - a) * a * face } else { 0.0 };
    dispersion + face_off
}

/// What to do with sampled pairs whose joint inclusion probability is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ZeroPairs {
    #[default]
    Reject,
    /// Skip them; the resulting estimator is biased downwards.
    Drop,
}

/// Sen-Yates-Grundy variance estimator.
pub fn syg_variance(
    sample: &[usize],
    y: &[f64],
    pi: &[f64],
    joint: &JointInclusion,
    zero_pairs: ZeroPairs,
) -> Result<f64> {
    require_units(sample, y, pi)?;
    joint.check_size(pi.len())?;
    let mut zero = Vec::new();
    let mut terms = Vec::new();
    for (a, &k) in sample.iter().enumerate() {
        for &l in &sample[a + 1..] {
            let pkl = joint.get(k, l);
            if pkl <= 0.0 {
                zero.push((k.min(l), k.max(l)));
                continue;
            }
            let d = y[k] / pi[k] - y[l] / pi[l];
            terms.push((pi[k] * pi[l] - pkl) / pkl * d * d);
        }
    }
    if !zero.is_empty() && zero_pairs == ZeroPairs::Reject {
        return Err(Error::ZeroJointProbability { pairs: zero });
    }
    // unordered pairs counted once, so the 1/2 of the ordered double sum cancels
    Ok(compensated_sum(terms))
}

/// `1/(2n(n-1)) sum_{k != l in S} (c_l - c_k)^2`, i.e. the sample variance of
/// the check-values.
pub fn sigma_hat(sample: &[usize], y: &[f64], pi: &[f64]) -> Result<f64> {
    require_units(sample, y, pi)?;
    let n = sample.len();
    if n < 2 {
        return Err(Error::SampleTooSmall(n));
    }
    let cv: Vec<f64> = sample.iter().map(|&k| y[k] / pi[k]).collect();
    let mean = compensated_sum(cv.iter().copied()) / n as f64;
    Ok(compensated_sum(cv.iter().map(|c| (c - mean).powi(2))) / (n - 1) as f64)
}

/// `sigma2 * sum_U pi_k (1 - pi_k)`.
pub fn model_variance(sigma2: f64, pi: &[f64]) -> f64 {
    sigma2 * compensated_sum(pi.iter().map(|p| p * (1.0 - p)))
}

/// Two-sided interval `ht -/+ u_{1-alpha} sqrt(variance)`.
pub fn confidence_interval(ht: f64, variance: f64, alpha: f64) -> Result<(f64, f64)> {
    if variance.is_nan() || variance < 0.0 {
        return Err(Error::NegativeVariance(variance));
    }
    let half = normal_quantile_upper(alpha)? * variance.sqrt();
    Ok((ht - half, ht + half))
}

/// `u_{1-alpha}` for `alpha` in `(0, 0.5]`.
pub fn normal_quantile_upper(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if alpha == 0.5 {
        return Ok(0.0);
    }
    Ok(normal_quantile(1.0 - alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub ht: f64,
    pub variance_syg: Option<f64>,
    pub variance_model: Option<f64>,
    pub sigma2_hat: Option<f64>,
    /// Which variance the interval uses: `"syg"` or `"model"`.
    pub variance_used: Option<String>,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
    /// Sampled pairs with `pi_kl = 0`, when they were dropped.
    pub zero_pairs: Vec<(usize, usize)>,
}

/// HT estimate with the SYG variance when joint probabilities are supplied,
/// the model-assisted variance otherwise (or when SYG is unavailable).
pub fn estimator_report(
    sample: &[usize],
    y: &[f64],
    pi: &[f64],
    joint: Option<&JointInclusion>,
    alpha: f64,
    zero_pairs: ZeroPairs,
) -> Result<EstimatorReport> {
    let ht = ht_estimate(sample, y, pi)?;
    let mut dropped = Vec::new();
    let variance_syg = match joint {
        Some(j) => {
            if zero_pairs == ZeroPairs::Drop {
                if let Err(Error::ZeroJointProbability { pairs }) =
                    syg_variance(sample, y, pi, j, ZeroPairs::Reject)
                {
                    dropped = pairs;
                }
            }
            Some(syg_variance(sample, y, pi, j, zero_pairs)?)
        }
        None => None,
    };
    let sigma2_hat = if sample.len() >= 2 { Some(sigma_hat(sample, y, pi)?) } else { None };
    let variance_model = sigma2_hat.map(|s| model_variance(s, pi));
    let (variance_used, variance) = match (variance_syg, variance_model) {
        (Some(v), _) => (Some("syg".to_string()), v),
        (None, Some(v)) => (Some("model".to_string()), v),
        (None, None) => (None, 0.0),
    };
    if variance < 0.0 {
        return Err(Error::NegativeVariance(variance));
    }
    let (ci_low, ci_high) = confidence_interval(ht, variance, alpha)?;
    Ok(EstimatorReport { ht, variance_syg, variance_model, sigma2_hat, variance_used, ci_low, ci_high, alpha, zero_pairs: dropped })
}
