//! Superpopulation model `y_k = beta pi_k + pi_k eps_k` with Gaussian errors
//! whose correlation decays with the index distance `|k - l|`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::JointInclusion;
use crate::microstrata::{decompose, MicrostratumDecomposition};
use crate::population::{check_values, compensated_sum, PopulationSpec};
use crate::rng;

/// Error correlation structure over unit index distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    Iid,
    /// `corr(eps_k, eps_l) = rho^|k-l|`
    Ar1 { rho: f64 },
    /// `corr(eps_k, eps_l) = exp(-|k-l| / range)`
    Exp { range: f64 },
}

impl Kernel {
    /// Lag-one correlation; the kernels are all geometric in the lag.
    pub fn rho(&self) -> f64 {
        match *self {
            Kernel::Iid => 0.0,
            Kernel::Ar1 { rho } => rho,
            Kernel::Exp { range } => (-1.0 / range).exp(),
        }
    }

    pub fn correlation(&self, lag: usize) -> f64 {
        match self {
            Kernel::Iid => (lag == 0) as u8 as f64,
            _ => self.rho().powi(lag as i32),
        }
    }

    pub fn is_iid(&self) -> bool {
        matches!(self, Kernel::Iid)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Iid => Ok(()),
            Kernel::Ar1 { rho } if rho.is_finite() && rho.abs() < 1.0 => Ok(()),
            Kernel::Ar1 { rho } => Err(Error::InvalidModel(format!("ar1 requires |rho| < 1, got {rho}"))),
            Kernel::Exp { range } if range.is_finite() && range > 0.0 => Ok(()),
            Kernel::Exp { range } => Err(Error::InvalidModel(format!("exp requires range > 0, got {range}"))),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    /// `iid`, `ar1:RHO` or `exp:RANGE`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let parse = |a: Option<&str>| -> Result<f64> {
            let a = a.ok_or_else(|| Error::InvalidModel(format!("kernel {name:?} needs a parameter")))?;
            a.trim().parse().map_err(|_| Error::InvalidModel(format!("bad kernel parameter {a:?}")))
        };
        let kernel = match (name.trim(), arg) {
            ("iid", None) => Kernel::Iid,
            ("ar1", a) => Kernel::Ar1 { rho: parse(a)? },
            ("exp", a) => Kernel::Exp { range: parse(a)? },
            _ => return Err(Error::InvalidModel(format!("unknown kernel {s:?}"))),
        };
        kernel.validate()?;
        Ok(kernel)
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Iid => write!(f, "iid"),
            Kernel::Ar1 { rho } => write!(f, "ar1:{rho}"),
            Kernel::Exp { range } => write!(f, "exp:{range}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub beta: f64,
    pub sigma: f64,
    pub kernel: Kernel,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(beta: f64, sigma: f64, kernel: Kernel, seed: u64) -> Result<Self> {
        let c = Self { beta, sigma, kernel, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidModel(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !self.beta.is_finite() {
            return Err(Error::InvalidModel(format!("beta must be finite, got {}", self.beta)));
        }
        self.kernel.validate()
    }

    pub fn covariance(&self, k: usize, l: usize) -> f64 {
        self.sigma * self.sigma * self.kernel.correlation(k.abs_diff(l))
    }
}

/// Stationary Gaussian errors of length `size`, built recursively:
/// `eps_1 = sigma z_1`, `eps_k = rho eps_{k-1} + sigma sqrt(1 - rho^2) z_k`.
pub fn generate_errors<R: Rng + ?Sized>(config: &ModelConfig, size: usize, rng: &mut R) -> Result<Vec<f64>> {
    config.validate()?;
    let rho = config.kernel.rho();
    let innovation = config.sigma * (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(size);
    let mut prev = 0.0;
    for k in 0..size {
        let z: f64 = rng.sample(StandardNormal);
        let e = if k == 0 { config.sigma * z } else { rho * prev + innovation * z };
        out.push(e);
        prev = e;
    }
    Ok(out)
}

pub fn generate_y<R: Rng + ?Sized>(config: &ModelConfig, pi: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let eps = generate_errors(config, pi.len(), rng)?;
    Ok(pi.iter().zip(eps).map(|(p, e)| config.beta * p + p * e).collect())
}

/// Model variance of `HT - t_y` split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnticipatedVariance {
    /// `sigma^2 sum_k pi_k (1 - pi_k)`
    pub design_term: f64,
    /// `sum_{k != l} (pi_kl - pi_k pi_l) Cov(eps_k, eps_l)`
    pub correlation_term: f64,
    pub total: f64,
}

pub fn anticipated_variance(
    config: &ModelConfig,
    pi: &[f64],
    joint: Option<&JointInclusion>,
) -> Result<AnticipatedVariance> {
    config.validate()?;
    let design_term = config.sigma * config.sigma * compensated_sum(pi.iter().map(|p| p * (1.0 - p)));
    let correlation_term = if config.kernel.is_iid() {
        0.0
    } else {
        let j = joint.ok_or(Error::MissingJoint)?;
        j.check_size(pi.len())?;
        let size = pi.len();
        let mut terms = Vec::with_capacity(size * size);
        for k in 0..size {
            for l in 0..size {
                if k != l {
                    terms.push((j.get(k, l) - pi[k] * pi[l]) * config.covariance(k, l));
                }
            }
        }
        compensated_sum(terms)
    };
    Ok(AnticipatedVariance { design_term, correlation_term, total: design_term + correlation_term })
}

/// A statistic next to its normalizing rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateStat {
    pub value: f64,
    pub rate: f64,
    pub ratio: f64,
}

impl RateStat {
    fn new(value: f64, rate: f64) -> Self {
        Self { value, rate, ratio: value / rate }
    }
}

/// The three covariance sums bounding the variance of the design variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H4Stats {
    pub pairs: RateStat,
    /// Needs joint probabilities unless the errors are independent.
    pub triples: Option<RateStat>,
    pub quadruples: Option<RateStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub population_size: usize,
    pub sample_size: usize,
    pub pi_max: f64,
    pub h1_violated: bool,
    pub h2: Option<RateStat>,
    pub h3: Option<RateStat>,
    pub h2b: Option<RateStat>,
    pub h3b: Option<RateStat>,
    pub h4: Option<H4Stats>,
}

/// Largest population for which the `O(N^4)` quadruple sum is evaluated.
pub const H4_BRUTE_FORCE_LIMIT: usize = 60;

/// `sum_i sum_{k in U_i} alpha_ik (c_k - sum_l alpha_il c_l)^2`.
pub fn stratum_dispersion(dec: &MicrostratumDecomposition, cv: &[f64]) -> f64 {
    compensated_sum(dec.strata().iter().map(|s| {
        let members = dec.members_with_entry(s, s.entry);
        let mean: f64 = members.iter().map(|&(slot, a)| a * slot.value_in(cv)).sum();
        members.iter().map(|&(slot, a)| a * (slot.value_in(cv) - mean).powi(2)).sum::<f64>()
    }))
}

/// `sum_k pi_k (c_k - t_y / n)^4`.
pub fn centered_fourth_moment(pi: &[f64], cv: &[f64], total: f64, n: usize) -> f64 {
    let centre = total / n as f64;
    compensated_sum(pi.iter().zip(cv).map(|(p, c)| p * (c - centre).powi(4)))
}

pub fn assumption_report(
    dec: &MicrostratumDecomposition,
    y: Option<&[f64]>,
    model: Option<&ModelConfig>,
    joint: Option<&JointInclusion>,
) -> Result<AssumptionReport> {
    let pi = dec.pi();
    let big_n = pi.len() as f64;
    let n = dec.sample_size();
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    let nf = n as f64;
    let pi_max = dec.pi_max();

    let (h2, h3) = match y {
        Some(y) => {
            let cv = check_values(y, pi)?;
            let total = compensated_sum(y.iter().copied());
            (
                Some(RateStat::new(centered_fourth_moment(pi, &cv, total, n), big_n.powi(4) / nf.powi(3))),
                Some(RateStat::new(stratum_dispersion(dec, &cv), big_n * big_n / nf)),
            )
        }
        None => (None, None),
    };

    let (h2b, h3b, h4) = match model {
        Some(m) => {
            m.validate()?;
            let s2 = m.sigma * m.sigma;
            let h2b = 3.0 * s2 * s2 * compensated_sum(pi.iter().copied());
            let h3b = compensated_sum(dec.strata().iter().map(|s| {
                let members: Vec<(usize, f64)> = dec
                    .members_with_entry(s, s.entry)
                    .into_iter()
                    .filter_map(|(slot, a)| slot.unit().map(|k| (k, a)))
                    .collect();
                let mut acc = 0.0;
                for &(k, ak) in &members {
                    for &(l, al) in &members {
                        acc += ak * al * 2.0 * s2 * (1.0 - m.kernel.correlation(k.abs_diff(l)));
                    }
                }
                acc
            }));
            (
                Some(RateStat::new(h2b, big_n.powi(4) / nf.powi(3))),
                Some(RateStat::new(h3b, big_n * big_n / nf)),
                Some(h4_stats(m, pi, joint, big_n.powi(3) / (nf * nf))?),
            )
        }
        None => (None, None, None),
    };

    Ok(AssumptionReport {
        population_size: pi.len(),
        sample_size: n,
        pi_max,
        h1_violated: pi_max >= 1.0,
        h2,
        h3,
        h2b,
        h3b,
        h4,
    })
}

/// Gaussian fourth-order covariances (Isserlis):
/// `Cov(e_k^2, e_l^2) = 2 C_kl^2`, `Cov(e_k e_l, e_i^2) = 2 C_ki C_li`,
/// `Cov(e_k e_l, e_i e_j) = C_ki C_lj + C_kj C_li`.
fn h4_stats(m: &ModelConfig, pi: &[f64], joint: Option<&JointInclusion>, rate: f64) -> Result<H4Stats> {
    let size = pi.len();
    let c = |k: usize, l: usize| m.covariance(k, l);
    let mut pairs = Vec::new();
    if !m.kernel.is_iid() {
        for k in 0..size {
            for l in 0..size {
                if k != l {
                    let v = pi[k] * (1.0 - pi[k]) * pi[l] * (1.0 - pi[l]) * (2.0 * c(k, l).powi(2)).max(0.0);
                    pairs.push(v);
                }
            }
        }
    }
    let pairs = RateStat::new(compensated_sum(pairs), rate);
    if m.kernel.is_iid() {
        let zero = RateStat::new(0.0, rate);
        return Ok(H4Stats { pairs, triples: Some(zero), quadruples: Some(zero) });
    }
    let Some(j) = joint else {
        return Ok(H4Stats { pairs, triples: None, quadruples: None });
    };
    j.check_size(size)?;
    let d = |k: usize, l: usize| pi[k] * pi[l] - j.get(k, l);
    let mut triples = Vec::new();
    for k in 0..size {
        for l in 0..size {
            if l == k {
                continue;
            }
            for i in 0..size {
                if i == k || i == l {
                    continue;
                }
                let cov = 2.0 * c(k, i) * c(l, i);
                triples.push(d(k, l) * pi[i] * (1.0 - pi[i]) * cov.max(0.0));
            }
        }
    }
    let quadruples = if size <= H4_BRUTE_FORCE_LIMIT {
        let mut acc = Vec::new();
        for k in 0..size {
            for l in 0..size {
                if l == k {
                    continue;
                }
                let dkl = d(k, l);
                for i in 0..size {
                    if i == k || i == l {
                        continue;
                    }
                    for jj in 0..size {
                        if jj == k || jj == l || jj == i {
                            continue;
                        }
                        acc.push(dkl * d(i, jj) * (c(k, i) * c(l, jj) + c(k, jj) * c(l, i)));
                    }
                }
            }
        }
        Some(RateStat::new(compensated_sum(acc), rate))
    } else {
        None
    };
    Ok(H4Stats { pairs, triples: Some(RateStat::new(compensated_sum(triples), rate)), quadruples })
}

/// Reports along a sequence of equal-probability populations `(N, n)`, each
/// with `y` generated from `config`, so that the ratios to the normalizing
/// rates can be inspected as the population grows.
pub fn assumption_ladder(config: &ModelConfig, sizes: &[(usize, usize)]) -> Result<Vec<AssumptionReport>> {
    sizes
        .iter()
        .enumerate()
        .map(|(level, &(big_n, n))| {
            let pop = PopulationSpec::from_probabilities(vec![n as f64 / big_n as f64; big_n])?;
            let dec = decompose(&pop);
            let y = generate_y(config, pop.pi(), &mut rng::stream(config.seed, rng::domain::FIXED_Y, level as u64))?;
            assumption_report(&dec, Some(&y), Some(config), None)
        })
        .collect()
}
