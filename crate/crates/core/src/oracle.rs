//! Exact enumeration of the pivotal outcome tree for small populations.
//!
//! Every random decision (the contender `S_i`, then the face-off outcome) is
//! expanded; leaves carry the product of branch probabilities. Branches of
//! probability exactly zero are pruned, nothing else is.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::xi_decompose;
use crate::joint::JointInclusion;
use crate::microstrata::{MicrostratumDecomposition, Slot, Stratum};
use crate::population::{check_values, compensated_sum};
use crate::sampler::{keep_probability, selection_probabilities, StratumStep};

pub const DEFAULT_CAP: usize = 14;

#[derive(Debug, Clone, Copy)]
pub struct EnumerateOptions {
    pub cap: usize,
    pub keep_traces: bool,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self { cap: DEFAULT_CAP, keep_traces: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Leaf {
    pub probability: f64,
    pub selected: Vec<usize>,
    pub trace: Vec<StratumStep>,
}

#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pi: Vec<f64>,
    sample_size: usize,
    outcomes: BTreeMap<Vec<usize>, f64>,
    leaves: Option<Vec<Leaf>>,
    first_order: Vec<f64>,
    joint: JointInclusion,
    /// `carry_laws[i]` is the law of `L_i`, `i = 0..=n`.
    carry_laws: Vec<BTreeMap<Slot, f64>>,
}

/// Upper bound on the number of leaves: two face-off outcomes per candidate
/// in every stratum.
pub fn estimated_leaves(dec: &MicrostratumDecomposition) -> f64 {
    dec.strata().iter().map(|s| 2.0 * (s.interior.len() + 1) as f64).product()
}

struct Walker<'a> {
    dec: &'a MicrostratumDecomposition,
    keep_traces: bool,
    steps: Vec<StratumStep>,
    outcomes: BTreeMap<Vec<usize>, f64>,
    leaves: Vec<Leaf>,
    carry_laws: Vec<BTreeMap<Slot, f64>>,
}

impl Walker<'_> {
    fn expand(&mut self, i: usize, carried: Slot, prob: f64) {
        let strata = self.dec.strata();
        if i == strata.len() {
            self.leaf(prob);
            return;
        }
        let s: &Stratum = &strata[i];
        let mut cands: Vec<(Slot, f64)> = selection_probabilities(self.dec, s.index, carried)
            .expect("stratum in range")
            .into_iter()
            .filter(|c| c.1 > 0.0)
            .collect();
        if cands.is_empty() {
            cands.push((carried, 1.0));
        }
        let total: f64 = cands.iter().map(|c| c.1).sum();
        let keep = keep_probability(s);
        for (contender, w) in cands {
            let p_contender = prob * w / total;
            for (keeps, p) in [(true, keep), (false, 1.0 - keep)] {
                if p <= 0.0 {
                    continue;
                }
                let (winner, carried_out) = if keeps { (contender, s.exit) } else { (s.exit, contender) };
                self.steps.push(StratumStep {
                    stratum: s.index,
                    carried_in: carried,
                    contender,
                    keep_probability: keep,
                    winner,
                    carried_out,
                });
                self.expand(i + 1, carried_out, p_contender * p);
                self.steps.pop();
            }
        }
    }

    fn leaf(&mut self, prob: f64) {
        let mut selected: Vec<usize> = self.steps.iter().filter_map(|s| s.winner.unit()).collect();
        selected.sort_unstable();
        self.carry_laws[0].insert(Slot::Phantom, 1.0);
        for step in &self.steps {
            *self.carry_laws[step.stratum].entry(step.carried_out).or_insert(0.0) += prob;
        }
        if self.keep_traces {
            self.leaves.push(Leaf { probability: prob, selected: selected.clone(), trace: self.steps.clone() });
        }
        *self.outcomes.entry(selected).or_insert(0.0) += prob;
    }
}

pub fn enumerate(dec: &MicrostratumDecomposition, options: EnumerateOptions) -> Result<ExactDistribution> {
    let size = dec.population_size();
    if size > options.cap {
        return Err(Error::EnumerationCap { size, cap: options.cap, estimated_leaves: estimated_leaves(dec) });
    }
    let n = dec.sample_size();
    let mut walker = Walker {
        dec,
        keep_traces: options.keep_traces,
        steps: Vec::with_capacity(n),
        outcomes: BTreeMap::new(),
        leaves: Vec::new(),
        carry_laws: vec![BTreeMap::new(); n + 1],
    };
    walker.expand(0, Slot::Phantom, 1.0);

    let mut joint = JointInclusion::zeros(size);
    for (sample, &p) in &walker.outcomes {
        for &k in sample {
            for &l in sample {
                joint.add(k, l, p);
            }
        }
    }
    Ok(ExactDistribution {
        pi: dec.pi().to_vec(),
        sample_size: n,
        first_order: joint.diagonal(),
        outcomes: walker.outcomes,
        leaves: options.keep_traces.then_some(walker.leaves),
        joint,
        carry_laws: walker.carry_laws,
    })
}

impl ExactDistribution {
    pub fn outcomes(&self) -> &BTreeMap<Vec<usize>, f64> {
        &self.outcomes
    }

    pub fn probability_of(&self, sample: &[usize]) -> f64 {
        self.outcomes.get(sample).copied().unwrap_or(0.0)
    }

    pub fn total_probability(&self) -> f64 {
        compensated_sum(self.outcomes.values().copied())
    }

    pub fn first_order(&self) -> &[f64] {
        &self.first_order
    }

    pub fn joint(&self) -> &JointInclusion {
        &self.joint
    }

    pub fn prescribed_pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn leaves(&self) -> Result<&[Leaf]> {
        self.leaves
            .as_deref()
            .ok_or_else(|| Error::CrossCheck("distribution was enumerated without traces".into()))
    }

    /// Law of the carried unit `L_i`, `0 <= i <= n`.
    pub fn carry_law(&self, i: usize) -> &BTreeMap<Slot, f64> {
        &self.carry_laws[i]
    }

    pub fn carry_probability(&self, i: usize, slot: Slot) -> f64 {
        self.carry_laws[i].get(&slot).copied().unwrap_or(0.0)
    }

    /// Exact law of the Horvitz-Thompson estimator: `(estimate, probability)`
    /// per outcome, in outcome order.
    pub fn ht_law(&self, y: &[f64]) -> Result<Vec<(f64, f64)>> {
        let cv = check_values(y, &self.pi)?;
        Ok(self
            .outcomes
            .iter()
            .map(|(s, &p)| (compensated_sum(s.iter().map(|&k| cv[k])), p))
            .collect())
    }
}

/// Design variance of the HT estimator computed two independent ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignVariance {
    /// `sum_s p(s) (HT(s) - t_y)^2`
    pub moment: f64,
    /// `1/2 sum_{k != l} (pi_k pi_l - pi_kl)(y_k/pi_k - y_l/pi_l)^2`
    pub quadratic: f64,
}

impl DesignVariance {
    pub fn value(&self) -> f64 {
        self.moment
    }
}

pub const CROSS_CHECK_TOLERANCE: f64 = 1e-10;

pub fn exact_design_variance(dist: &ExactDistribution, y: &[f64]) -> Result<DesignVariance> {
    let cv = check_values(y, &dist.pi)?;
    let total = compensated_sum(y.iter().copied());
    let moment = compensated_sum(dist.ht_law(y)?.into_iter().map(|(ht, p)| p * (ht - total).powi(2)));
    let pi1 = &dist.first_order;
    let size = pi1.len();
    let mut terms = Vec::with_capacity(size * size);
    for k in 0..size {
        for l in 0..size {
            if k != l {
                terms.push((pi1[k] * pi1[l] - dist.joint.get(k, l)) * (cv[k] - cv[l]).powi(2));
            }
        }
    }
    let quadratic = 0.5 * compensated_sum(terms);
    let scale = 1.0f64.max(moment.abs()).max(quadratic.abs());
    if (moment - quadratic).abs() > CROSS_CHECK_TOLERANCE * scale {
        return Err(Error::CrossCheck(format!(
            "design variance forms disagree: moment {moment} vs quadratic {quadratic}"
        )));
    }
    Ok(DesignVariance { moment, quadratic })
}

/// Conditional moments of `xi_i` given a realized carried unit `L_{i-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalMoments {
    pub carried: Slot,
    pub probability: f64,
    pub mean: f64,
    pub variance: f64,
    pub fourth_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiMoments {
    pub mean: Vec<f64>,
    /// `n x n` covariance matrix; the diagonal holds `Var(xi_i)`.
    pub covariance: Vec<Vec<f64>>,
    pub fourth_moment: Vec<f64>,
    /// Per stratum, moments conditional on each possible `L_{i-1}`.
    pub conditional: Vec<Vec<ConditionalMoments>>,
}

impl XiMoments {
    pub fn variance_sum(&self) -> f64 {
        (0..self.mean.len()).map(|i| self.covariance[i][i]).sum()
    }

    pub fn max_abs_mean(&self) -> f64 {
        self.mean.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_off_diagonal(&self) -> f64 {
        let n = self.mean.len();
        let mut m = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m = m.max(self.covariance[i][j].abs());
                }
            }
        }
        m
    }
}

/// Exact moments of the martingale increments over all enumerated traces.
pub fn exact_xi_moments(dec: &MicrostratumDecomposition, dist: &ExactDistribution, y: &[f64]) -> Result<XiMoments> {
    let n = dec.sample_size();
    let leaves = dist.leaves()?;
    let mut mean = vec![0.0; n];
    let mut second = vec![vec![0.0; n]; n];
    let mut fourth = vec![0.0; n];
    let mut cond: Vec<BTreeMap<Slot, [f64; 4]>> = vec![BTreeMap::new(); n];
    for leaf in leaves {
        let xi = xi_decompose(&leaf.trace, dec, y)?.xi;
        let p = leaf.probability;
        for i in 0..n {
            mean[i] += p * xi[i];
            fourth[i] += p * xi[i].powi(4);
            for j in 0..n {
                second[i][j] += p * xi[i] * xi[j];
            }
            let acc = cond[i].entry(leaf.trace[i].carried_in).or_insert([0.0; 4]);
            acc[0] += p;
            acc[1] += p * xi[i];
            acc[2] += p * xi[i] * xi[i];
            acc[3] += p * xi[i].powi(4);
        }
    }
    let covariance = (0..n)
        .map(|i| (0..n).map(|j| second[i][j] - mean[i] * mean[j]).collect())
        .collect();
    let conditional = cond
        .into_iter()
        .map(|m| {
            m.into_iter()
                .map(|(carried, [p, s1, s2, s4])| {
                    let mu = s1 / p;
                    ConditionalMoments {
                        carried,
                        probability: p,
                        mean: mu,
                        variance: s2 / p - mu * mu,
                        fourth_moment: s4 / p,
                    }
                })
                .collect()
        })
        .collect();
    Ok(XiMoments { mean, covariance, fourth_moment: fourth, conditional })
}

/// JSON layout emitted by the `enumerate` command.
#[derive(Debug, Clone, Serialize)]
pub struct EnumerationDump {
    pub ids: Vec<String>,
    pub outcomes: Vec<OutcomeDump>,
    pub pi1: Vec<f64>,
    pub pi2: JointInclusion,
    pub variance: Option<DesignVariance>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutcomeDump {
    pub units: Vec<String>,
    pub probability: f64,
}

impl EnumerationDump {
    pub fn new(ids: &[String], dist: &ExactDistribution, variance: Option<DesignVariance>) -> Self {
        Self {
            ids: ids.to_vec(),
            outcomes: dist
                .outcomes()
                .iter()
                .map(|(s, &p)| OutcomeDump { units: s.iter().map(|&k| ids[k].clone()).collect(), probability: p })
                .collect(),
            pi1: dist.first_order().to_vec(),
            pi2: dist.joint().clone(),
            variance,
        }
    }
}
