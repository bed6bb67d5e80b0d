//! Cumulative-probability geometry of an ordered pivotal design.
//!
//! Units are laid out on `[0, n]` by their cumulative probabilities
//! `V_k = pi_1 + ... + pi_k`. The unit whose interval contains the integer
//! boundary `i` is the cross-border unit `k_i`; it splits its probability into
//! the part before the boundary (`a_i`) and the part after it (`b_i`). The
//! microstratum `U_i` holds `k_{i-1}` (weight `b_{i-1}`), every unit strictly
//! between `k_{i-1}` and `k_i` (weight `pi_k`) and `k_i` (weight `a_i`).
//!
//! `k_0` and `k_n` are phantom slots with zero weight. Every real unit after
//! `k_{n-1}` is an interior member of the last stratum, so each stratum's
//! weights sum to one whatever the probabilities.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{PopulationSpec, INTEGER_TOLERANCE};

/// A position in a microstratum: either a real unit (0-based index into the
/// population) or one of the two phantom boundary slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    Phantom,
    Unit(usize),
}

impl Slot {
    pub fn unit(self) -> Option<usize> {
        match self {
            Slot::Phantom => None,
            Slot::Unit(k) => Some(k),
        }
    }

    pub fn is_phantom(self) -> bool {
        matches!(self, Slot::Phantom)
    }

    /// Looks up a per-unit value; phantoms read as zero.
    pub fn value_in(self, values: &[f64]) -> f64 {
        match self {
            Slot::Phantom => 0.0,
            Slot::Unit(k) => values[k],
        }
    }
}

/// Microstratum `U_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    /// 1-based stratum number `i`.
    pub index: usize,
    /// `k_{i-1}`.
    pub entry: Slot,
    /// `b_{i-1}`.
    pub entry_weight: f64,
    /// Units strictly between `k_{i-1}` and `k_i` (0-based).
    pub interior: Range<usize>,
    /// `k_i`.
    pub exit: Slot,
    /// `a_i`.
    pub exit_weight: f64,
    /// `b_i`, the residual carried into `U_{i+1}`.
    pub carry_out: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicrostratumDecomposition {
    ids: Vec<String>,
    pi: Vec<f64>,
    cumulative: Vec<f64>,
    crossborder: Vec<Slot>,
    a: Vec<f64>,
    b: Vec<f64>,
    strata: Vec<Stratum>,
}

/// Cumulative sums `V_0..V_N` (compensated), snapped onto integers within
/// [`INTEGER_TOLERANCE`].
pub fn cumulative_probabilities(pi: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(pi.len() + 1);
    out.push(0.0);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &p in pi {
        let t = sum + p;
        if sum.abs() >= p.abs() {
            comp += (sum - t) + p;
        } else {
            comp += (p - t) + sum;
        }
        sum = t;
        out.push(snap(sum + comp));
    }
    out
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= INTEGER_TOLERANCE {
        r
    } else {
        v
    }
}

pub fn decompose(pop: &PopulationSpec) -> MicrostratumDecomposition {
    let pi = pop.pi();
    let big_n = pi.len();
    let n = pop.sample_size();
    let cumulative = cumulative_probabilities(pi);

    let mut crossborder = Vec::with_capacity(n + 1);
    let mut a = vec![0.0; n + 1];
    let mut b = vec![0.0; n + 1];
    crossborder.push(Slot::Phantom);
    // position is 1-based: V[pos - 1] < i <= V[pos]
    let mut pos = 1;
    for i in 1..n {
        let boundary = i as f64;
        while !(cumulative[pos - 1] < boundary && boundary <= cumulative[pos]) {
            pos += 1;
        }
        crossborder.push(Slot::Unit(pos - 1));
        a[i] = boundary - cumulative[pos - 1];
        b[i] = cumulative[pos] - boundary;
    }
    crossborder.push(Slot::Phantom);

    let strata = (1..=n)
        .map(|i| {
            let entry = crossborder[i - 1];
            let exit = crossborder[i];
            let start = entry.unit().map_or(0, |k| k + 1);
            let end = exit.unit().unwrap_or(big_n);
            Stratum {
                index: i,
                entry,
                entry_weight: b[i - 1],
                interior: start..end,
                exit,
                exit_weight: a[i],
                carry_out: b[i],
            }
        })
        .collect();

    MicrostratumDecomposition {
        ids: pop.ids().to_vec(),
        pi: pi.to_vec(),
        cumulative,
        crossborder,
        a,
        b,
        strata,
    }
}

impl MicrostratumDecomposition {
    pub fn population_size(&self) -> usize {
        self.pi.len()
    }

    pub fn sample_size(&self) -> usize {
        self.strata.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn pi_max(&self) -> f64 {
        self.pi.iter().copied().fold(0.0, f64::max)
    }

    /// `V_0..V_N`.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// `k_0..k_n`.
    pub fn crossborder(&self) -> &[Slot] {
        &self.crossborder
    }

    /// `a_0..a_n`.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// `b_0..b_n`.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    /// `U_i` for 1-based `i`.
    pub fn stratum(&self, i: usize) -> Result<&Stratum> {
        if i == 0 || i > self.strata.len() {
            return Err(Error::StratumOutOfRange { index: i, strata: self.strata.len() });
        }
        Ok(&self.strata[i - 1])
    }

    /// Members of `U_i` with their weights `alpha_ik`, in population order:
    /// `k_{i-1}`, the interior units, `k_i`.
    pub fn members(&self, i: usize) -> Result<Vec<(Slot, f64)>> {
        let s = self.stratum(i)?;
        Ok(self.members_with_entry(s, s.entry))
    }

    /// Members of `U'_i`: like [`members`](Self::members) but with the
    /// carried unit `L_{i-1}` in place of `k_{i-1}`.
    pub fn members_with_entry(&self, s: &Stratum, entry: Slot) -> Vec<(Slot, f64)> {
        let mut out = Vec::with_capacity(s.interior.len() + 2);
        out.push((entry, s.entry_weight));
        out.extend(s.interior.clone().map(|k| (Slot::Unit(k), self.pi[k])));
        out.push((s.exit, s.exit_weight));
        out
    }

    /// The 1-based stratum in which unit `k` can first be carried out, i.e.
    /// the stratum where it is interior or is the exiting cross-border unit.
    pub fn home_stratum(&self, k: usize) -> usize {
        self.strata
            .iter()
            .find(|s| s.interior.contains(&k) || s.exit == Slot::Unit(k))
            .map(|s| s.index)
            .expect("strata tile the population")
    }

    /// Rebuilds `pi` from the stratum weights: interior weight, or
    /// `a_i + b_i` for cross-border units.
    pub fn reconstruct_pi(&self) -> Vec<f64> {
        let mut pi = vec![0.0; self.pi.len()];
        for s in &self.strata {
            for k in s.interior.clone() {
                pi[k] = self.pi[k];
            }
            if let Slot::Unit(k) = s.exit {
                pi[k] = s.exit_weight + s.carry_out;
            }
        }
        pi
    }

    pub fn dump(&self) -> DecompositionDump {
        let id_of = |slot: Slot| slot.unit().map(|k| self.ids[k].clone());
        DecompositionDump {
            v: self.cumulative.clone(),
            crossborder: self
                .crossborder
                .iter()
                .enumerate()
                .map(|(i, s)| match s {
                    Slot::Unit(k) => k + 1,
                    Slot::Phantom if i == 0 => 0,
                    Slot::Phantom => self.pi.len() + 1,
                })
                .collect(),
            a: self.a.clone(),
            b: self.b.clone(),
            strata: self
                .strata
                .iter()
                .map(|s| StratumDump {
                    members: self
                        .members_with_entry(s, s.entry)
                        .into_iter()
                        .map(|(slot, alpha)| MemberDump { id: id_of(slot), alpha })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// JSON layout of a decomposition. `crossborder` holds 1-based positions with
/// `0` and `N + 1` standing for the phantom slots; phantom members carry a
/// `null` id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionDump {
    #[serde(rename = "V")]
    pub v: Vec<f64>,
    pub crossborder: Vec<usize>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub strata: Vec<StratumDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumDump {
    pub members: Vec<MemberDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberDump {
    pub id: Option<String>,
    pub alpha: f64,
}
