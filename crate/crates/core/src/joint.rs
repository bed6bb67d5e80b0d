use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square matrix of second-order inclusion probabilities `pi_kl`; the
/// diagonal holds the first-order probabilities. Serialized as nested rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct JointInclusion {
    size: usize,
    values: Vec<f64>,
}

impl JointInclusion {
    pub fn zeros(size: usize) -> Self {
        Self { size, values: vec![0.0; size * size] }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.size + l]
    }

    #[inline]
    pub fn add(&mut self, k: usize, l: usize, p: f64) {
        self.values[k * self.size + l] += p;
    }

    pub fn set(&mut self, k: usize, l: usize, p: f64) {
        self.values[k * self.size + l] = p;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.size).map(|k| self.get(k, k)).collect()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.size..(k + 1) * self.size]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.size).map(|k| self.row(k).to_vec()).collect()
    }

    pub fn check_size(&self, expected: usize) -> Result<()> {
        if self.size != expected {
            return Err(Error::LengthMismatch { what: "joint inclusion matrix", got: self.size, expected });
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vec<f64>>> for JointInclusion {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        let size = rows.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != size) {
            return Err(format!("row {bad} has {} entries, expected {size}", rows[bad].len()));
        }
        Ok(Self { size, values: rows.into_iter().flatten().collect() })
    }
}

impl From<JointInclusion> for Vec<Vec<f64>> {
    fn from(m: JointInclusion) -> Self {
        m.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_rows() {
        let mut m = JointInclusion::zeros(2);
        m.set(0, 0, 0.4);
        m.set(1, 1, 0.6);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[0.4,0.0],[0.0,0.6]]");
        let back: JointInclusion = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<JointInclusion>("[[1.0],[1.0, 2.0]]").is_err());
    }
}
