//! Seeded random instances: connected networks with quadratic costs.

use std::collections::HashSet;

use rand::{Rng, RngExt};

use crate::costs::CostFunction;
use crate::network::{Bus, LineSpec, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomNetwork {
    pub min_buses: usize,
    pub max_buses: usize,
    /// Probability that a non-first bus is a generator (bus 1 always is).
    pub generator_probability: f64,
    /// Probability that a bus gets narrow load bounds so that clipping is likely.
    pub clip_probability: f64,
    /// Probability of each extra (cycle-closing) line on top of a spanning tree.
    pub extra_line_probability: f64,
    pub disturbance_range: (f64, f64),
}

impl Default for RandomNetwork {
    fn default() -> Self {
        Self {
            min_buses: 2,
            max_buses: 10,
            generator_probability: 0.5,
            clip_probability: 0.5,
            extra_line_probability: 0.2,
            disturbance_range: (-1.0, 1.0),
        }
    }
}

impl RandomNetwork {
    pub fn trees(mut self) -> Self {
        self.extra_line_probability = 0.0;
        self
    }

    pub fn with_buses(mut self, min: usize, max: usize) -> Self {
        self.min_buses = min;
        self.max_buses = max;
        self
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Network {
        let n = rng.random_range(self.min_buses..=self.max_buses);
        let mut buses = Vec::with_capacity(n);
        for id in 1..=n {
            let alpha = rng.random_range(0.2..5.0);
            let (lo, hi) = if rng.random_bool(self.clip_probability) {
                (-rng.random_range(0.01..0.3), rng.random_range(0.01..0.3))
            } else {
                (-10.0, 10.0)
            };
            let cost = CostFunction::quadratic(alpha, lo, hi).expect("valid bounds");
            let damping = rng.random_range(0.2..3.0);
            let (a, b) = self.disturbance_range;
            let disturbance = rng.random_range(a..=b);
            if id == 1 || rng.random_bool(self.generator_probability) {
                let inertia = rng.random_range(0.5..5.0);
                buses.push(Bus::generator(id, inertia, damping, disturbance, cost));
            } else {
                buses.push(Bus::load(id, damping, disturbance, cost));
            }
        }

        let mut lines = Vec::new();
        let mut used = HashSet::new();
        let add = |i: usize, j: usize, lines: &mut Vec<LineSpec>, used: &mut HashSet<(usize, usize)>, rng: &mut R| {
            let (from, to) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
            used.insert((i.min(j), i.max(j)));
            lines.push(LineSpec::with_stiffness(from, to, rng.random_range(1.0..10.0)));
        };
        for k in 2..=n {
            let parent = rng.random_range(1..k);
            add(parent, k, &mut lines, &mut used, rng);
        }
        for i in 1..=n {
            for j in i + 1..=n {
                if !used.contains(&(i, j)) && rng.random_bool(self.extra_line_probability) {
                    add(i, j, &mut lines, &mut used, rng);
                }
            }
        }
        Network::build(buses, lines).expect("generated network is valid")
    }
}
