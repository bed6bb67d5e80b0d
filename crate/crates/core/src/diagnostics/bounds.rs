use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{conditional_xi_variance, ht_estimate, xi_decompose};
use crate::microstrata::{MicrostratumDecomposition, Slot};
use crate::model::{centered_fourth_moment, stratum_dispersion};
use crate::oracle::{exact_design_variance, exact_xi_moments, ExactDistribution};
use crate::population::{check_values, compensated_sum};

/// Absolute slack allowed on every check, and the relative tolerance of
/// identity checks.
pub const BOUND_TOLERANCE: f64 = 1e-10;

/// `lhs <= rhs` witnessed numerically. Identities are stored as
/// `lhs = |a - b|`, `rhs = tolerance * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub slack: f64,
}

impl BoundCheck {
    pub fn inequality(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, rhs, holds: lhs <= rhs + BOUND_TOLERANCE, slack: rhs - lhs }
    }

    pub fn identity(name: impl Into<String>, a: f64, b: f64, scale: f64) -> Self {
        let scale = a.abs().max(b.abs()).max(scale.abs());
        Self::inequality(name, (a - b).abs(), BOUND_TOLERANCE * scale)
    }

    /// The tightest of many instances of the same check, so one entry per
    /// name is reported. An empty family holds vacuously.
    fn worst(name: &str, checks: impl IntoIterator<Item = BoundCheck>) -> Self {
        checks
            .into_iter()
            .min_by(|x, y| x.slack.total_cmp(&y.slack).then(x.holds.cmp(&y.holds)))
            .map(|mut c| {
                c.name = name.to_string();
                c
            })
            .unwrap_or_else(|| Self::inequality(name, 0.0, 0.0))
    }
}

struct Setup<'a> {
    y: &'a [f64],
    cv: Vec<f64>,
    total: f64,
    /// `z_k = (c_k - t_y / n)^4`
    z: Vec<f64>,
    sum_pi_z: f64,
    /// `1 / (1 - pi_M)`
    kappa: f64,
}

impl<'a> Setup<'a> {
    fn new(dec: &'a MicrostratumDecomposition, y: &'a [f64], dist: &'a ExactDistribution) -> Result<Self> {
        if let Some(k) = dec.pi().iter().position(|&p| p >= 1.0) {
            return Err(Error::CertaintyUnit { id: dec.ids()[k].clone() });
        }
        if dist.prescribed_pi() != dec.pi() {
            return Err(Error::CrossCheck("distribution was enumerated for another population".into()));
        }
        let cv = check_values(y, dec.pi())?;
        let total = compensated_sum(y.iter().copied());
        let centre = total / dec.sample_size() as f64;
        let z: Vec<f64> = cv.iter().map(|c| (c - centre).powi(4)).collect();
        let sum_pi_z = centered_fourth_moment(dec.pi(), &cv, total, dec.sample_size());
        Ok(Self { y, cv, total, z, sum_pi_z, kappa: 1.0 / (1.0 - dec.pi_max()) })
    }
}

/// Mean zero, uncorrelated increments, and variance decomposition.
pub fn check_prop1(dec: &MicrostratumDecomposition, y: &[f64], dist: &ExactDistribution) -> Result<Vec<BoundCheck>> {
    let s = Setup::new(dec, y, dist)?;
    let m = exact_xi_moments(dec, dist, y)?;
    let n = m.mean.len();
    let sd = |i: usize| m.covariance[i][i].max(0.0).sqrt();
    let means = (0..n).map(|i| BoundCheck::identity("", m.mean[i], 0.0, sd(i)));
    let mut covs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                covs.push(BoundCheck::identity("", m.covariance[i][j], 0.0, sd(i) * sd(j)));
            }
        }
    }
    let variance = exact_design_variance(dist, s.y)?.moment;
    Ok(vec![
        BoundCheck::worst("increment_mean_zero", means),
        BoundCheck::worst("increments_uncorrelated", covs),
        BoundCheck::identity("variance_decomposition", m.variance_sum(), variance, 0.0),
    ])
}

/// `sum_i E xi_i^4 <= 16 (2 + 1/(1 - pi_M)) sum_k pi_k z_k`.
pub fn check_prop2(dec: &MicrostratumDecomposition, y: &[f64], dist: &ExactDistribution) -> Result<BoundCheck> {
    let s = Setup::new(dec, y, dist)?;
    let m = exact_xi_moments(dec, dist, y)?;
    let lhs = compensated_sum(m.fourth_moment.iter().copied());
    Ok(BoundCheck::inequality("fourth_moment_bound", lhs, 16.0 * (2.0 + s.kappa) * s.sum_pi_z))
}

/// `(1 - pi_M)^2 sum_i sum_{k in U_i} alpha_ik (c_k - cbar_i)^2 <= V(HT)`.
pub fn check_prop3(dec: &MicrostratumDecomposition, y: &[f64], dist: &ExactDistribution) -> Result<BoundCheck> {
    let s = Setup::new(dec, y, dist)?;
    let lhs = (1.0 - dec.pi_max()).powi(2) * stratum_dispersion(dec, &s.cv);
    let rhs = exact_design_variance(dist, y)?.moment;
    Ok(BoundCheck::inequality("variance_lower_bound", lhs, rhs))
}

/// `V(sum_i V(xi_i | L_{i-1})) <= 8 (3 + 2k)(2 + k) sum_k pi_k z_k`, `k = 1/(1 - pi_M)`.
pub fn check_prop4(dec: &MicrostratumDecomposition, y: &[f64], dist: &ExactDistribution) -> Result<BoundCheck> {
    let s = Setup::new(dec, y, dist)?;
    let mut weighted = Vec::new();
    for leaf in dist.leaves()? {
        let sum = compensated_sum(
            dec.strata()
                .iter()
                .zip(&leaf.trace)
                .map(|(st, step)| conditional_xi_variance(st, step.carried_in, dec.pi(), &s.cv)),
        );
        weighted.push((leaf.probability, sum));
    }
    let mean = compensated_sum(weighted.iter().map(|(p, v)| p * v));
    let lhs = compensated_sum(weighted.iter().map(|(p, v)| p * (v - mean).powi(2)));
    let rhs = 8.0 * (3.0 + 2.0 * s.kappa) * (2.0 + s.kappa) * s.sum_pi_z;
    Ok(BoundCheck::inequality("conditional_variance_dispersion_bound", lhs, rhs))
}

/// `c_i = a_i b_i / ((1 - a_i)(1 - b_i))` for `i = 0..=n` (zero at the ends).
pub fn carry_factors(dec: &MicrostratumDecomposition) -> Vec<f64> {
    dec.a()
        .iter()
        .zip(dec.b())
        .map(|(&a, &b)| if a * b == 0.0 { 0.0 } else { a * b / ((1.0 - a) * (1.0 - b)) })
        .collect()
}

/// Increment representations, convexity bounds, carry-law identities and the
/// closed-form conditional variance.
pub fn check_lemmas(dec: &MicrostratumDecomposition, y: &[f64], dist: &ExactDistribution) -> Result<Vec<BoundCheck>> {
    let s = Setup::new(dec, y, dist)?;
    let n = dec.sample_size();
    let pi = dec.pi();
    let cv = &s.cv;
    let leaves = dist.leaves()?;
    let phi = |x: f64| x.powi(4);

    let mut alt = Vec::new();
    let mut convex = Vec::new();
    let mut telescope = Vec::new();
    let mut pointwise = Vec::new();
    for leaf in leaves {
        let x = xi_decompose(&leaf.trace, dec, y)?;
        let scale = x.xi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            alt.push(BoundCheck::identity("", x.xi[i], x.alternative[i], scale));
            convex.push(BoundCheck::identity("", x.xi[i], x.convex_form[i], scale));
            let st = &dec.strata()[i];
            let step = &leaf.trace[i];
            let (cf, cs) = (step.winner.value_in(cv), step.contender.value_in(cv));
            let members = dec.members_with_entry(st, step.carried_in);
            let b = st.carry_out;
            let bound = compensated_sum(members.iter().map(|&(slot, a)| {
                let c = slot.value_in(cv);
                a * ((1.0 - b) * phi(cf - c) + b * phi(cs - c))
            }));
            pointwise.push(BoundCheck::inequality("", phi(x.xi[i]), bound));
        }
        let ht = ht_estimate(&leaf.selected, y, pi)?;
        telescope.push(BoundCheck::identity("", x.sum(), ht - s.total, scale));
    }

    let moments = exact_xi_moments(dec, dist, y)?;
    let mut conditional = Vec::new();
    let mut closed_forms = Vec::new();
    for (i, st) in dec.strata().iter().enumerate() {
        for cm in &moments.conditional[i] {
            let members = dec.members_with_entry(st, cm.carried);
            let mut terms = Vec::with_capacity(members.len() * members.len());
            for &(k, ak) in &members {
                for &(l, al) in &members {
                    terms.push(ak * al * phi(l.value_in(cv) - k.value_in(cv)));
                }
            }
            conditional.push(BoundCheck::inequality("", cm.fourth_moment, compensated_sum(terms)));
            let closed = conditional_xi_variance(st, cm.carried, pi, cv);
            let scale = members.iter().map(|m| m.1 * m.0.value_in(cv).powi(2)).sum::<f64>();
            closed_forms.push(BoundCheck::identity("", cm.variance, closed, scale));
        }
    }

    // products of consecutive factors c_l, with c(i, i) = 1
    let c = carry_factors(dec);
    let limit = 1.0 + s.kappa;
    let c_of = |i: usize, j: usize| (i..j).map(|l| c[l]).product::<f64>();
    let rows = (1..=n).map(|i| BoundCheck::inequality("", (i..=n).map(|j| c_of(i, j)).sum(), limit));
    let cols = (1..=n).map(|j| BoundCheck::inequality("", (1..=j).map(|i| c_of(i, j)).sum(), limit));
    let factor = (1..=n).map(|l| BoundCheck::inequality("", c[l], 1.0 / (2.0 - dec.pi_max())));

    // carry laws
    let b = dec.b();
    let a = dec.a();
    let p_carry = |j: usize, l: usize| dist.carry_probability(j, Slot::Unit(l));
    let z = &s.z;
    let weight_lhs = compensated_sum(
        (1..n).flat_map(|j| dist.carry_law(j).iter().map(move |(slot, p)| b[j] * p * slot.value_in(z))),
    );
    let weight_rhs = limit * compensated_sum(pi.iter().zip(&s.z).map(|(p, z)| p * z.max(0.0)));
    let mut recursion = Vec::new();
    let mut home_mass = Vec::new();
    let mut per_unit = Vec::new();
    let mut mass_bound = Vec::new();
    for l in 0..pi.len() {
        let home = dec.home_stratum(l);
        let mut expected_weight = Vec::new();
        for j in 1..=n {
            let mass = b[j] * p_carry(j, l);
            mass_bound.push(BoundCheck::inequality("", mass, pi[l]));
            if j < n {
                expected_weight.push(mass);
            }
            if j > home {
                let prev = b[j - 1] * p_carry(j - 1, l);
                recursion.push(BoundCheck::identity("", mass, c[j] * prev, pi[l]));
            }
        }
        if home < n {
            let mass = b[home] * p_carry(home, l);
            let expected = if dec.crossborder()[home] == Slot::Unit(l) {
                let (ah, bh) = (a[home], b[home]);
                bh * (1.0 - ah - bh) / (1.0 - bh)
            } else {
                pi[l] * c[home]
            };
            home_mass.push(BoundCheck::identity("", mass, expected, pi[l]));
            per_unit.push(BoundCheck::inequality("", compensated_sum(expected_weight), limit * mass));
        }
    }

    Ok(vec![
        BoundCheck::worst("increment_alternative_form", alt),
        BoundCheck::worst("increment_convex_form", convex),
        BoundCheck::worst("increments_telescope", telescope),
        BoundCheck::worst("convexity_pointwise", pointwise),
        BoundCheck::worst("convexity_conditional", conditional),
        BoundCheck::worst("carry_factor_bound", factor),
        BoundCheck::worst("carry_product_row_sums", rows),
        BoundCheck::worst("carry_product_column_sums", cols),
        BoundCheck::inequality("carried_weight_bound", weight_lhs, weight_rhs),
        BoundCheck::worst("carried_weight_per_unit", per_unit),
        BoundCheck::worst("carry_recursion", recursion),
        BoundCheck::worst("carry_mass_at_home", home_mass),
        BoundCheck::worst("carry_mass_bound", mass_bound),
        BoundCheck::worst("conditional_variance_closed_form", closed_forms),
    ])
}

/// Every check, in a fixed order.
pub fn check_all(dec: &MicrostratumDecomposition, y: &[f64], dist: &ExactDistribution) -> Result<Vec<BoundCheck>> {
    let mut out = check_prop1(dec, y, dist)?;
    out.push(check_prop2(dec, y, dist)?);
    out.push(check_prop3(dec, y, dist)?);
    out.push(check_prop4(dec, y, dist)?);
    out.extend(check_lemmas(dec, y, dist)?);
    Ok(out)
}
