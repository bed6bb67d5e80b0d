//! One run of ordered pivotal sampling.
//!
//! Stratum by stratum, the unit `L_{i-1}` carried over from the previous
//! stratum competes with the interior units of `U_i` for the slot `S_i`
//! (weights `b_{i-1}` and `pi_k`), then `S_i` faces the cross-border unit `k_i`:
//! the winner `F_i` is selected and the loser `L_i` moves on with weight `b_i`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::JointInclusion;
use crate::microstrata::{MicrostratumDecomposition, Slot, Stratum};
use crate::rng;

/// Decisions taken in stratum `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumStep {
    pub stratum: usize,
    /// `L_{i-1}`
    pub carried_in: Slot,
    /// `S_i`
    pub contender: Slot,
    /// Probability that `S_i` beats `k_i`.
    pub keep_probability: f64,
    /// `F_i`
    pub winner: Slot,
    /// `L_i`
    pub carried_out: Slot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDraw {
    /// Selected units (0-based), sorted.
    pub selected: Vec<usize>,
    pub trace: Vec<StratumStep>,
    /// Number of uniforms consumed; depends only on the decomposition.
    pub uniforms_used: usize,
    pub stream: Option<u64>,
}

/// Weights of the candidates for `S_i`: the carried unit first, then the
/// interior units in population order. They sum to `1 - a_i`.
pub fn selection_probabilities(
    dec: &MicrostratumDecomposition,
    i: usize,
    carried: Slot,
) -> Result<Vec<(Slot, f64)>> {
    let s = dec.stratum(i)?;
    Ok(candidates(dec, s, carried).collect())
}

fn candidates<'a>(
    dec: &'a MicrostratumDecomposition,
    s: &'a Stratum,
    carried: Slot,
) -> impl Iterator<Item = (Slot, f64)> + 'a {
    let pi = dec.pi();
    std::iter::once((carried, s.entry_weight)).chain(s.interior.clone().map(move |k| (Slot::Unit(k), pi[k])))
}

/// `(1 - a_i - b_i) / (1 - b_i)`; one for the final stratum.
pub fn keep_probability(s: &Stratum) -> f64 {
    if s.exit.is_phantom() {
        1.0
    } else {
        ((1.0 - s.exit_weight - s.carry_out) / (1.0 - s.carry_out)).clamp(0.0, 1.0)
    }
}

fn pick_contender<R: Rng + ?Sized>(
    dec: &MicrostratumDecomposition,
    s: &Stratum,
    carried: Slot,
    rng: &mut R,
    uniforms: &mut usize,
) -> Slot {
    let positive = candidates(dec, s, carried).filter(|c| c.1 > 0.0);
    let (count, total, last) =
        positive.fold((0usize, 0.0f64, carried), |(n, t, _), (slot, w)| (n + 1, t + w, slot));
    match count {
        // only when a_i = 1: S_i is irrelevant, it loses the face-off surely
        0 => carried,
        1 => last,
        _ => {
            *uniforms += 1;
            let target = rng.random::<f64>() * total;
            let mut cum = 0.0;
            for (slot, w) in candidates(dec, s, carried) {
                if w <= 0.0 {
                    continue;
                }
                cum += w;
                if target < cum {
                    return slot;
                }
            }
            last
        }
    }
}

pub fn draw<R: Rng + ?Sized>(dec: &MicrostratumDecomposition, rng: &mut R) -> SampleDraw {
    let mut carried = Slot::Phantom;
    let mut uniforms = 0;
    let mut trace = Vec::with_capacity(dec.sample_size());
    let mut selected = Vec::with_capacity(dec.sample_size());
    for s in dec.strata() {
        assert!(
            !(carried.is_phantom() && s.entry_weight > 0.0),
            "phantom slot carried with positive weight into stratum {}",
            s.index
        );
        let contender = pick_contender(dec, s, carried, rng, &mut uniforms);
        let keep = keep_probability(s);
        let keeps = if keep >= 1.0 {
            true
        } else if keep <= 0.0 {
            false
        } else {
            uniforms += 1;
            rng.random::<f64>() < keep
        };
        let (winner, carried_out) = if keeps { (contender, s.exit) } else { (s.exit, contender) };
        match winner {
            Slot::Unit(k) => selected.push(k),
            Slot::Phantom => unreachable!("a phantom slot cannot win stratum {}", s.index),
        }
        trace.push(StratumStep {
            stratum: s.index,
            carried_in: carried,
            contender,
            keep_probability: keep,
            winner,
            carried_out,
        });
        carried = carried_out;
    }
    selected.sort_unstable();
    SampleDraw { selected, trace, uniforms_used: uniforms, stream: None }
}

/// Draw `count` independent samples; draw `r` uses stream `r` of the
/// [`rng::domain::SAMPLE`] domain under `seed`.
pub fn draw_many(dec: &MicrostratumDecomposition, count: usize, seed: u64) -> Vec<SampleDraw> {
    (0..count as u64)
        .into_par_iter()
        .map(|r| {
            let mut d = draw(dec, &mut rng::stream(seed, rng::domain::SAMPLE, r));
            d.stream = Some(r);
            d
        })
        .collect()
}

/// Monte Carlo estimate of the first- and second-order inclusion
/// probabilities. Memory is `O(N^2)`.
pub fn empirical_inclusion(dec: &MicrostratumDecomposition, count: usize, seed: u64) -> Result<JointInclusion> {
    if count == 0 {
        return Err(Error::EmptyInput);
    }
    let size = dec.population_size();
    let counts = (0..count as u64)
        .into_par_iter()
        .fold(
            || vec![0u64; size * size],
            |mut acc, r| {
                let d = draw(dec, &mut rng::stream(seed, rng::domain::SAMPLE, r));
                for &k in &d.selected {
                    for &l in &d.selected {
                        acc[k * size + l] += 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; size * size],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let mut m = JointInclusion::zeros(size);
    for k in 0..size {
        for l in 0..size {
            m.set(k, l, counts[k * size + l] as f64 / count as f64);
        }
    }
    Ok(m)
}
