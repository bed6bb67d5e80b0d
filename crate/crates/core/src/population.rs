//! Finite population: unit labels, prescribed inclusion probabilities and
//! (optionally) the values of the variable of interest.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on `sum(pi)` being an integer, and on cumulative sums
/// being snapped onto integer boundaries.
pub const INTEGER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    ids: Vec<String>,
    pi: Vec<f64>,
    y: Option<Vec<f64>>,
    sample_size: usize,
    pi_max: f64,
}

impl PopulationSpec {
    pub fn new(ids: Vec<String>, pi: Vec<f64>, y: Option<Vec<f64>>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        if ids.len() != pi.len() {
            return Err(Error::LengthMismatch { what: "ids", got: ids.len(), expected: pi.len() });
        }
        if let Some(y) = &y {
            if y.len() != pi.len() {
                return Err(Error::LengthMismatch { what: "y", got: y.len(), expected: pi.len() });
            }
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        for (id, &p) in ids.iter().zip(&pi) {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::ProbabilityOutOfRange { id: id.clone(), pi: p });
            }
        }
        let sum = compensated_sum(pi.iter().copied());
        let nearest = sum.round();
        let deviation = (sum - nearest).abs();
        if deviation > INTEGER_TOLERANCE || nearest < 1.0 {
            return Err(Error::NonIntegerSampleSize { sum, nearest, deviation });
        }
        let pi_max = pi.iter().copied().fold(0.0, f64::max);
        Ok(Self { ids, pi, y, sample_size: nearest as usize, pi_max })
    }

    /// Population labelled `1..=N`.
    pub fn from_probabilities(pi: Vec<f64>) -> Result<Self> {
        let ids = (1..=pi.len()).map(|k| k.to_string()).collect();
        Self::new(ids, pi, None)
    }

    pub fn with_y(mut self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.pi.len() {
            return Err(Error::LengthMismatch { what: "y", got: y.len(), expected: self.pi.len() });
        }
        self.y = Some(y);
        Ok(self)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn y(&self) -> Option<&[f64]> {
        self.y.as_deref()
    }

    pub fn require_y(&self) -> Result<&[f64]> {
        self.y.as_deref().ok_or(Error::MissingY)
    }

    /// Population size `N`.
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// Fixed sample size `n = sum(pi)`.
    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn pi_max(&self) -> f64 {
        self.pi_max
    }

    /// Units with `pi = 1` are accepted by the sampler but break the
    /// "bounded away from one" assumption the diagnostics rely on.
    pub fn certainty_units(&self) -> Vec<usize> {
        self.pi.iter().enumerate().filter(|(_, &p)| p >= 1.0).map(|(k, _)| k).collect()
    }

    /// Fails with [`Error::CertaintyUnit`] if any `pi_k = 1`.
    pub fn require_no_certainty_units(&self) -> Result<()> {
        match self.certainty_units().first() {
            Some(&k) => Err(Error::CertaintyUnit { id: self.ids[k].clone() }),
            None => Ok(()),
        }
    }

    /// Population total `t_y`.
    pub fn total(&self) -> Result<f64> {
        Ok(compensated_sum(self.require_y()?.iter().copied()))
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
}

/// Expansion-weighted values `y_k / pi_k`.
pub fn check_values(y: &[f64], pi: &[f64]) -> Result<Vec<f64>> {
    if y.len() != pi.len() {
        return Err(Error::LengthMismatch { what: "y", got: y.len(), expected: pi.len() });
    }
    Ok(y.iter().zip(pi).map(|(y, p)| y / p).collect())
}

/// Neumaier's compensated summation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_integer_total() {
        let pop = PopulationSpec::from_probabilities(vec![0.6, 0.8, 0.6]).unwrap();
        assert_eq!(pop.sample_size(), 2);
        assert_eq!(pop.pi_max(), 0.8);
        assert_eq!(pop.ids(), &["1", "2", "3"]);
    }

    #[test]
    fn decimal_probabilities_within_tolerance() {
        let pop = PopulationSpec::from_probabilities(vec![0.1; 10]).unwrap();
        assert_eq!(pop.sample_size(), 1);
    }

    #[test]
    fn rejects_non_integer_total() {
        let err = PopulationSpec::from_probabilities(vec![0.5, 0.6]).unwrap_err();
        match err {
            Error::NonIntegerSampleSize { deviation, .. } => assert!((deviation - 0.1).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(
            PopulationSpec::from_probabilities(vec![0.0, 1.0]),
            Err(Error::ProbabilityOutOfRange { .. })
        ));
        assert!(matches!(
            PopulationSpec::from_probabilities(vec![1.5, 0.5]),
            Err(Error::ProbabilityOutOfRange { .. })
        ));
        assert!(matches!(
            PopulationSpec::from_probabilities(vec![f64::NAN, 1.0]),
            Err(Error::ProbabilityOutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_empty_and_duplicates() {
        assert!(matches!(PopulationSpec::from_probabilities(vec![]), Err(Error::EmptyPopulation)));
        let err = PopulationSpec::new(vec!["a".into(), "a".into()], vec![0.5, 0.5], None);
        assert!(matches!(err, Err(Error::DuplicateId(_))));
    }

    #[test]
    fn rejects_length_mismatch() {
        let err = PopulationSpec::new(vec!["a".into(), "b".into()], vec![0.5, 0.5], Some(vec![1.0]));
        assert!(matches!(err, Err(Error::LengthMismatch { what: "y", .. })));
    }

    #[test]
    fn flags_certainty_units() {
        let pop = PopulationSpec::from_probabilities(vec![1.0, 0.5, 0.5]).unwrap();
        assert_eq!(pop.certainty_units(), vec![0]);
        assert!(pop.require_no_certainty_units().is_err());
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let v = vec![0.1; 1_000_000];
        let naive: f64 = v.iter().sum();
        let comp = compensated_sum(v.iter().copied());
        assert!((comp - 100_000.0).abs() <= (naive - 100_000.0).abs());
        assert!((comp - 100_000.0).abs() < 1e-9);
    }
}
