use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::BoundCheck;
use crate::error::{Error, Result};
use crate::estimation::{conditional_xi_variance, ht_estimate, model_variance, normal_quantile_upper, sigma_hat, xi_decompose};
use crate::microstrata::{decompose, MicrostratumDecomposition};
use crate::model::{anticipated_variance, generate_y, ModelConfig};
use crate::normal::{ks_critical_1pct, ks_statistic};
use crate::oracle::{enumerate, exact_design_variance, EnumerateOptions, DEFAULT_CAP};
use crate::population::{check_values, compensated_sum, PopulationSpec};
use crate::rng::{self, domain};
use crate::sampler::draw;

pub const DEFAULT_PILOT_REPLICATES: usize = 20_000;

/// `Design`: one fixed `y`, randomness from the design only.
/// `Model`: a fresh `y` from the model in every replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CltMode {
    Design,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceUsed {
    Exact,
    McEstimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltConfig {
    pub mode: CltMode,
    pub population_size: usize,
    pub sample_size: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Per-side level of the interval.
    pub alpha: f64,
    /// Generates `y` (once in design mode, per replicate in model mode).
    pub model: ModelConfig,
    pub pilot_replicates: usize,
    /// Overrides the equal-probability population built from the sizes; in
    /// design mode its `y`, when present, replaces the generated one.
    pub population: Option<PopulationSpec>,
}

impl CltConfig {
    pub fn new(mode: CltMode, population_size: usize, sample_size: usize, replicates: usize, model: ModelConfig) -> Self {
        Self {
            mode,
            population_size,
            sample_size,
            replicates,
            seed: model.seed,
            alpha: 0.025,
            model,
            pilot_replicates: DEFAULT_PILOT_REPLICATES,
            population: None,
        }
    }
}

/// One Monte Carlo replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub ht: f64,
    pub total: f64,
    /// `(HT - t_y) / sqrt(V)`
    pub statistic: f64,
    pub covered: bool,
    /// `sum_i xi_i^4 / V^2`
    pub fourth_moment_sum: f64,
    /// `sum_i V(xi_i | L_{i-1}) / V`
    pub conditional_variance_sum: f64,
    pub model_variance: Option<f64>,
    pub covered_model: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub mode: CltMode,
    pub population_size: usize,
    pub sample_size: usize,
    pub replicates: usize,
    pub seed: u64,
    pub alpha: f64,
    pub model: ModelConfig,
    /// Fixed population total (design mode).
    pub total: Option<f64>,
    /// Variance used to standardize and to build the intervals.
    pub variance: f64,
    pub variance_used: VarianceUsed,
    pub pilot_replicates: Option<usize>,
    pub statistics: Vec<f64>,
    pub statistic_mean: f64,
    pub statistic_variance: f64,
    pub ks_stat: f64,
    pub ks_critical: f64,
    /// Fraction of intervals `HT -/+ u sqrt(V)` containing `t_y`.
    pub coverage: f64,
    /// Same with the model-assisted variance estimate in place of `V`.
    pub coverage_model_estimator: Option<f64>,
    pub model_variance_mean: Option<f64>,
    pub model_variance_std_error: Option<f64>,
    /// Mean over replicates of `sum_i eta_i^4`.
    pub condition_a: f64,
    /// Variance over replicates of `sum_i V(eta_i | L_{i-1})`.
    pub condition_b: f64,
    pub condition_b_mean: f64,
    pub checks: Vec<BoundCheck>,
}

struct Prepared {
    spec: PopulationSpec,
    dec: MicrostratumDecomposition,
    fixed_y: Option<Vec<f64>>,
}

fn prepare(config: &CltConfig) -> Result<Prepared> {
    if config.replicates == 0 {
        return Err(Error::EmptyInput);
    }
    config.model.validate()?;
    normal_quantile_upper(config.alpha)?;
    let spec = match &config.population {
        Some(p) => p.clone(),
        None => {
            let (big_n, n) = (config.population_size, config.sample_size);
            if big_n == 0 || n == 0 || n > big_n {
                return Err(Error::InvalidModel(format!("need 0 < n <= N, got n = {n}, N = {big_n}")));
            }
            PopulationSpec::from_probabilities(vec![n as f64 / big_n as f64; big_n])?
        }
    };
    spec.require_no_certainty_units()?;
    let dec = decompose(&spec);
    let fixed_y = match config.mode {
        CltMode::Model => None,
        CltMode::Design => Some(match spec.y() {
            Some(y) => y.to_vec(),
            None => generate_y(&config.model, spec.pi(), &mut rng::stream(config.seed, domain::FIXED_Y, 0))?,
        }),
    };
    Ok(Prepared { spec, dec, fixed_y })
}

/// HT error of one draw with its own stream.
fn ht_error(p: &Prepared, config: &CltConfig, sample_domain: u64, model_domain: u64, r: u64) -> Result<f64> {
    let pi = p.spec.pi();
    let generated;
    let y = match &p.fixed_y {
        Some(y) => y.as_slice(),
        None => {
            generated = generate_y(&config.model, pi, &mut rng::stream(config.seed, model_domain, r))?;
            generated.as_slice()
        }
    };
    let d = draw(&p.dec, &mut rng::stream(config.seed, sample_domain, r));
    Ok(ht_estimate(&d.selected, y, pi)? - compensated_sum(y.iter().copied()))
}

fn standardizing_variance(p: &Prepared, config: &CltConfig) -> Result<(f64, VarianceUsed, Option<usize>)> {
    let pi = p.spec.pi();
    if pi.len() <= DEFAULT_CAP {
        let dist = enumerate(&p.dec, EnumerateOptions { cap: DEFAULT_CAP, keep_traces: false })?;
        let v = match &p.fixed_y {
            Some(y) => exact_design_variance(&dist, y)?.moment,
            None => anticipated_variance(&config.model, pi, Some(dist.joint()))?.total,
        };
        return Ok((v, VarianceUsed::Exact, None));
    }
    if p.fixed_y.is_none() && config.model.kernel.is_iid() {
        return Ok((anticipated_variance(&config.model, pi, None)?.total, VarianceUsed::Exact, None));
    }
    let r0 = config.pilot_replicates;
    if r0 == 0 {
        return Err(Error::EmptyInput);
    }
    let errors: Vec<f64> = (0..r0 as u64)
        .into_par_iter()
        .map(|r| ht_error(p, config, domain::PILOT_SAMPLE, domain::PILOT_MODEL, r))
        .collect::<Result<_>>()?;
    // the HT error has mean zero, so its second moment is the variance
    let v = compensated_sum(errors.iter().map(|e| e * e)) / r0 as f64;
    Ok((v, VarianceUsed::McEstimated, Some(r0)))
}

fn replicate(p: &Prepared, config: &CltConfig, variance: f64, u: f64, r: u64) -> Result<Replicate> {
    let pi = p.spec.pi();
    let generated;
    let y = match &p.fixed_y {
        Some(y) => y.as_slice(),
        None => {
            generated = generate_y(&config.model, pi, &mut rng::stream(config.seed, domain::MODEL, r))?;
            generated.as_slice()
        }
    };
    let d = draw(&p.dec, &mut rng::stream(config.seed, domain::SAMPLE, r));
    let total = compensated_sum(y.iter().copied());
    let ht = ht_estimate(&d.selected, y, pi)?;
    let sd = variance.sqrt();
    let xi = xi_decompose(&d.trace, &p.dec, y)?;
    let cv = check_values(y, pi)?;
    let condvar = compensated_sum(
        p.dec.strata().iter().zip(&d.trace).map(|(s, step)| conditional_xi_variance(s, step.carried_in, pi, &cv)),
    );
    let (model_variance, covered_model) = if d.selected.len() >= 2 {
        let vm = model_variance(sigma_hat(&d.selected, y, pi)?, pi);
        (Some(vm), Some((ht - total).abs() <= u * vm.sqrt()))
    } else {
        (None, None)
    };
    Ok(Replicate {
        ht,
        total,
        statistic: (ht - total) / sd,
        covered: (ht - total).abs() <= u * sd,
        fourth_moment_sum: compensated_sum(xi.xi.iter().map(|x| x.powi(4))) / (variance * variance),
        conditional_variance_sum: condvar / variance,
        model_variance,
        covered_model,
    })
}

fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / m;
    let var = if values.len() > 1 {
        compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (m - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Replicates are computed in parallel, each from its own indexed streams,
/// then gathered in index order; the report does not depend on the number
/// of threads.
pub fn clt_experiment(config: &CltConfig) -> Result<(SimulationReport, Vec<Replicate>)> {
    let p = prepare(config)?;
    let (variance, variance_used, pilot) = standardizing_variance(&p, config)?;
    if variance.is_nan() || variance <= 0.0 || !variance.is_finite() {
        return Err(Error::DegenerateVariance);
    }
    let u = normal_quantile_upper(config.alpha)?;
    let reps: Vec<Replicate> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|r| replicate(&p, config, variance, u, r))
        .collect::<Result<_>>()?;

    let count = reps.len() as f64;
    let statistics: Vec<f64> = reps.iter().map(|r| r.statistic).collect();
    let (statistic_mean, statistic_variance) = mean_and_variance(&statistics);
    let ks_stat = ks_statistic(&statistics)?;
    let ks_critical = ks_critical_1pct(reps.len());
    let coverage = reps.iter().filter(|r| r.covered).count() as f64 / count;
    let vm: Option<Vec<f64>> = reps.iter().map(|r| r.model_variance).collect();
    let (model_variance_mean, model_variance_std_error) = match &vm {
        Some(v) => {
            let (m, var) = mean_and_variance(v);
            (Some(m), Some((var / count).sqrt()))
        }
        None => (None, None),
    };
    let coverage_model_estimator = vm
        .as_ref()
        .map(|_| reps.iter().filter(|r| r.covered_model == Some(true)).count() as f64 / count);
    let condition_a = compensated_sum(reps.iter().map(|r| r.fourth_moment_sum)) / count;
    let cond_b: Vec<f64> = reps.iter().map(|r| r.conditional_variance_sum).collect();
    let (condition_b_mean, condition_b) = mean_and_variance(&cond_b);

    let report = SimulationReport {
        mode: config.mode,
        population_size: p.spec.len(),
        sample_size: p.spec.sample_size(),
        replicates: reps.len(),
        seed: config.seed,
        alpha: config.alpha,
        model: config.model,
        total: p.fixed_y.as_ref().map(|y| compensated_sum(y.iter().copied())),
        variance,
        variance_used,
        pilot_replicates: pilot,
        statistics,
        statistic_mean,
        statistic_variance,
        ks_stat,
        ks_critical,
        coverage,
        coverage_model_estimator,
        model_variance_mean,
        model_variance_std_error,
        condition_a,
        condition_b,
        condition_b_mean,
        checks: vec![BoundCheck::inequality("ks_1pct_band", ks_stat, ks_critical)],
    };
    Ok((report, reps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Kernel;

    fn model(kernel: Kernel) -> ModelConfig {
        ModelConfig::new(1.0, 1.0, kernel, 17).unwrap()
    }

    #[test]
    fn single_replicate_smoke() {
        let c = CltConfig::new(CltMode::Design, 10, 3, 1, model(Kernel::Iid));
        let (r, reps) = clt_experiment(&c).unwrap();
        assert_eq!(r.replicates, 1);
        assert_eq!(reps.len(), 1);
        assert!(r.coverage == 0.0 || r.coverage == 1.0);
        assert!(r.ks_stat >= 0.0 && r.ks_stat <= 1.0);
        assert_eq!(r.variance_used, VarianceUsed::Exact);
    }

    #[test]
    fn small_design_uses_exact_variance() {
        let c = CltConfig::new(CltMode::Design, 12, 4, 4000, model(Kernel::Iid));
        let (r, _) = clt_experiment(&c).unwrap();
        assert_eq!(r.variance_used, VarianceUsed::Exact);
        // standardized with the exact variance: mean 0, variance 1
        let se = (1.0 / 4000.0f64).sqrt();
        assert!(r.statistic_mean.abs() < 4.0 * se);
        assert!((r.statistic_variance - 1.0).abs() < 0.1);
        // conditional variances average to the total variance
        assert!((r.condition_b_mean - 1.0).abs() < 0.05);
    }

    #[test]
    fn large_correlated_model_uses_pilot() {
        let mut c = CltConfig::new(CltMode::Model, 200, 20, 50, model(Kernel::Ar1 { rho: 0.5 }));
        c.pilot_replicates = 500;
        let (r, _) = clt_experiment(&c).unwrap();
        assert_eq!(r.variance_used, VarianceUsed::McEstimated);
        assert_eq!(r.pilot_replicates, Some(500));
        let c = CltConfig::new(CltMode::Model, 200, 20, 50, model(Kernel::Iid));
        let (r, _) = clt_experiment(&c).unwrap();
        assert_eq!(r.variance_used, VarianceUsed::Exact);
        assert!((r.variance - 200.0 * 0.1 * 0.9).abs() < 1e-9);
    }

    #[test]
    fn degenerate_variance_rejected() {
        let pop = PopulationSpec::from_probabilities(vec![0.5; 6]).unwrap().with_y(vec![1.0; 6]).unwrap();
        let mut c = CltConfig::new(CltMode::Design, 6, 3, 10, model(Kernel::Iid));
        c.population = Some(pop);
        assert!(matches!(clt_experiment(&c), Err(Error::DegenerateVariance)));
    }

    #[test]
    fn invalid_configs() {
        let mut c = CltConfig::new(CltMode::Design, 10, 3, 0, model(Kernel::Iid));
        assert!(clt_experiment(&c).is_err());
        c.replicates = 5;
        c.alpha = 0.9;
        assert!(clt_experiment(&c).is_err());
        let c = CltConfig::new(CltMode::Design, 3, 5, 5, model(Kernel::Iid));
        assert!(clt_experiment(&c).is_err());
    }

    #[test]
    fn same_seed_same_report() {
        let c = CltConfig::new(CltMode::Model, 300, 30, 100, model(Kernel::Iid));
        assert_eq!(clt_experiment(&c).unwrap().0, clt_experiment(&c).unwrap().0);
    }
}
