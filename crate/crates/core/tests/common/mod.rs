#![allow(dead_code)]

use pivotal_core::{decompose, enumerate, EnumerateOptions, ExactDistribution, MicrostratumDecomposition, PopulationSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DENOMINATORS: [u32; 6] = [4, 5, 8, 10, 16, 20];

/// Rational probabilities `m_k / d` in `[1/d, (d-1)/d]` summing to an integer.
pub fn rational_pi(rng: &mut impl Rng, max_n: usize) -> Vec<f64> {
    loop {
        let big_n = rng.random_range(2..=max_n);
        let d = DENOMINATORS[rng.random_range(0..DENOMINATORS.len())] as usize;
        let min_n = big_n.div_ceil(d);
        let max_sample = (big_n * (d - 1)) / d;
        if max_sample < min_n {
            continue;
        }
        let n = rng.random_range(min_n..=max_sample);
        let mut m = vec![1usize; big_n];
        let mut remaining = n * d - big_n;
        while remaining > 0 {
            let k = rng.random_range(0..big_n);
            if m[k] < d - 1 {
                m[k] += 1;
                remaining -= 1;
            }
        }
        return m.into_iter().map(|m| m as f64 / d as f64).collect();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `y` roughly proportional to `pi` with noise.
    Noisy,
    /// Unrelated to `pi`.
    Unrelated,
    /// One large outlier.
    Outlier,
}

pub const SHAPES: [Shape; 3] = [Shape::Noisy, Shape::Unrelated, Shape::Outlier];

pub fn y_values(rng: &mut impl Rng, pi: &[f64], shape: Shape) -> Vec<f64> {
    let mut y: Vec<f64> = match shape {
        Shape::Noisy => pi.iter().map(|p| p * (2.0 + rng.random_range(-1.0..1.0))).collect(),
        Shape::Unrelated => pi.iter().map(|_| rng.random_range(-3.0..5.0)).collect(),
        Shape::Outlier => pi.iter().map(|p| p * (1.0 + 0.3 * rng.random_range(-1.0..1.0))).collect(),
    };
    if shape == Shape::Outlier {
        let k = rng.random_range(0..y.len());
        y[k] = 25.0 * rng.random_range(1.0..2.0);
    }
    y
}

pub struct Instance {
    pub pi: Vec<f64>,
    pub y: Vec<f64>,
    pub shape: Shape,
    pub dec: MicrostratumDecomposition,
    pub dist: ExactDistribution,
}

/// `count` populations with `N <= max_n`, each paired with one y-shape in
/// rotation.
pub fn battery(seed: u64, count: usize, max_n: usize) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let pi = rational_pi(&mut rng, max_n);
            let shape = SHAPES[i % SHAPES.len()];
            let y = y_values(&mut rng, &pi, shape);
            let dec = decompose(&PopulationSpec::from_probabilities(pi.clone()).unwrap());
            let dist = enumerate(&dec, EnumerateOptions { cap: max_n, keep_traces: true }).unwrap();
            Instance { pi, y, shape, dec, dist }
        })
        .collect()
}

/// Populations only, for checks that do not depend on y.
pub fn populations(seed: u64, count: usize, max_n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rational_pi(&mut rng, max_n)).collect()
}
