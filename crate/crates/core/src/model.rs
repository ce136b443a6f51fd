//! Source, topology, query and meta-value models shared by the analytics and
//! the simulator.
//!
//! Indices are zero-based throughout: attribute `n`, ISA `k`, NMA `m` and chain
//! state `i` all start at 0.

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A symmetric discrete-time Markov chain describing one attribute.
///
/// The chain stays put with probability `stay_prob` and moves to each of the
/// other `states - 1` states with probability `move_prob`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeChain {
    index: usize,
    states: usize,
    stay_prob: f64,
    move_prob: f64,
    state: usize,
}

impl AttributeChain {
    pub fn new(index: usize, states: usize, stay_prob: f64) -> Result<Self> {
        if states < 2 {
            return Err(Error::invalid("states", "a chain needs at least two states"));
        }
        if !(0.0..=1.0).contains(&stay_prob) {
            return Err(Error::invalid("stay_prob", "must lie in [0, 1]"));
        }
        let move_prob = (1.0 - stay_prob) / (states - 1) as f64;
        Ok(Self {
            index,
            states,
            stay_prob,
            move_prob,
            state: 0,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn stay_prob(&self) -> f64 {
        self.stay_prob
    }

    pub fn move_prob(&self) -> f64 {
        self.move_prob
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn set_state(&mut self, state: usize) {
        assert!(state < self.states, "state {state} out of range");
        self.state = state;
    }

    /// Probability that one step leaves the current state, `(I - 1) p`.
    pub fn change_prob(&self) -> f64 {
        (self.states - 1) as f64 * self.move_prob
    }

    /// Dense transition matrix, row `i` is the law of the next state from `i`.
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.states)
            .map(|i| {
                (0..self.states)
                    .map(|j| if i == j { self.stay_prob } else { self.move_prob })
                    .collect()
            })
            .collect()
    }

    /// Advances the chain one step and returns the new state.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        self.state = self.next_state(rng.random::<f64>(), rng.random::<f64>());
        self.state
    }

    /// The state reached from the current one given two uniforms: `u_move`
    /// decides whether the chain moves, `u_target` picks the destination.
    pub fn next_state(&self, u_move: f64, u_target: f64) -> usize {
        if u_move < self.stay_prob {
            return self.state;
        }
        let others = self.states - 1;
        let pick = ((u_target * others as f64) as usize).min(others - 1);
        if pick >= self.state {
            pick + 1
        } else {
            pick
        }
    }
}

/// Parameters for sampling a deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub num_isas: usize,
    pub num_nmas: usize,
    pub num_attributes: usize,
    pub height_m: f64,
    pub horizontal_sd_m: f64,
    pub jitter_m: f64,
    /// Probability that a given ISA observes a given attribute.
    pub observe_prob: f64,
    /// Observation accuracy `q`, common to every (ISA, attribute) pair.
    pub accuracy: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            num_isas: 10,
            num_nmas: 4,
            num_attributes: 10,
            height_m: 7.0,
            horizontal_sd_m: 60.0,
            jitter_m: 1e-6,
            observe_prob: 0.7,
            accuracy: 0.8,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_isas == 0 {
            return Err(Error::invalid("num_isas", "must be at least 1"));
        }
        if self.num_nmas == 0 {
            return Err(Error::invalid("num_nmas", "must be at least 1"));
        }
        if self.num_attributes == 0 {
            return Err(Error::invalid("num_attributes", "must be at least 1"));
        }
        if !(self.height_m >= 0.0) {
            return Err(Error::invalid("height_m", "must be nonnegative"));
        }
        if !(self.horizontal_sd_m > 0.0) {
            return Err(Error::invalid("horizontal_sd_m", "must be positive"));
        }
        if !(self.jitter_m > 0.0) {
            return Err(Error::invalid("jitter_m", "must be positive"));
        }
        if !(self.observe_prob > 0.0 && self.observe_prob <= 1.0) {
            return Err(Error::invalid("observe_prob", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(Error::invalid("accuracy", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Placement of ISAs relative to NMAs and who observes what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    height_m: f64,
    /// `distances[k][m]`, meters.
    distances: Vec<Vec<f64>>,
    /// `observers[n]`: ISAs that can observe attribute `n`, ascending.
    observers: Vec<Vec<usize>>,
    /// `observable[k]`: attributes ISA `k` can observe, ascending.
    observable: Vec<Vec<usize>>,
    /// `accuracy[k][n]`.
    accuracy: Vec<Vec<f64>>,
}

impl Topology {
    pub fn new(
        distances: Vec<Vec<f64>>,
        height_m: f64,
        observers: Vec<Vec<usize>>,
        accuracy: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let k_count = distances.len();
        if k_count == 0 {
            return Err(Error::invalid("distances", "no ISAs"));
        }
        let m_count = distances[0].len();
        if m_count == 0 {
            return Err(Error::invalid("distances", "no NMAs"));
        }
        for row in &distances {
            if row.len() != m_count {
                return Err(Error::invalid("distances", "ragged matrix"));
            }
            if row.iter().any(|&d| !(d >= height_m) || !d.is_finite()) {
                return Err(Error::invalid("distances", "every distance must be finite and at least the height"));
            }
        }
        let n_count = observers.len();
        if accuracy.len() != k_count || accuracy.iter().any(|r| r.len() != n_count) {
            return Err(Error::invalid("accuracy", "must be a K x N matrix"));
        }
        if accuracy.iter().flatten().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::invalid("accuracy", "entries must lie in [0, 1]"));
        }
        let mut observers = observers;
        let mut observable = vec![Vec::new(); k_count];
        for (n, set) in observers.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            for &k in set.iter() {
                if k >= k_count {
                    return Err(Error::invalid("observers", format!("ISA {k} out of range")));
                }
                observable[k].push(n);
            }
        }
        Ok(Self {
            height_m,
            distances,
            observers,
            observable,
            accuracy,
        })
    }

    pub fn num_isas(&self) -> usize {
        self.distances.len()
    }

    pub fn num_nmas(&self) -> usize {
        self.distances[0].len()
    }

    pub fn num_attributes(&self) -> usize {
        self.observers.len()
    }

    pub fn height_m(&self) -> f64 {
        self.height_m
    }

    pub fn distance(&self, k: usize, m: usize) -> f64 {
        self.distances[k][m]
    }

    pub fn distances(&self) -> &[Vec<f64>] {
        &self.distances
    }

    pub fn observers(&self, n: usize) -> &[usize] {
        &self.observers[n]
    }

    pub fn observable(&self, k: usize) -> &[usize] {
        &self.observable[k]
    }

    pub fn accuracy(&self, k: usize, n: usize) -> f64 {
        self.accuracy[k][n]
    }

    pub fn observes(&self, k: usize, n: usize) -> bool {
        self.observers[n].binary_search(&k).is_ok()
    }

    /// Copy of this topology with the whole distance matrix replaced.
    pub fn with_distances(&self, distances: Vec<Vec<f64>>) -> Result<Self> {
        Topology::new(
            distances,
            self.height_m,
            self.observers.clone(),
            self.accuracy.clone(),
        )
    }

    /// The `count` NMAs farthest from ISA `k`, ties broken by ascending index.
    pub fn farthest_nmas(&self, k: usize, count: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.num_nmas()).collect();
        idx.sort_by(|&a, &b| {
            self.distances[k][b]
                .total_cmp(&self.distances[k][a])
                .then(a.cmp(&b))
        });
        idx.truncate(count.min(self.num_nmas()));
        idx
    }
}

/// Distance from a horizontal offset and an antenna height.
pub fn slant_distance(horizontal_m: f64, height_m: f64) -> f64 {
    horizontal_m.hypot(height_m)
}

/// Samples per-pair distances for `num_isas` ISAs and `num_nmas` NMAs.
///
/// Horizontal offsets are half-normal; afterwards the column of distances to
/// each NMA is nudged so that no two entries are closer than `jitter_m`.
pub fn sample_distances<R: Rng + ?Sized>(cfg: &GeometryConfig, rng: &mut R) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, cfg.horizontal_sd_m).expect("sd validated");
    let mut d: Vec<Vec<f64>> = (0..cfg.num_isas)
        .map(|_| {
            (0..cfg.num_nmas)
                .map(|_| slant_distance(normal.sample(rng).abs(), cfg.height_m))
                .collect()
        })
        .collect();
    separate_columns(&mut d, cfg.jitter_m);
    d
}

pub(crate) fn separate_columns(d: &mut [Vec<f64>], jitter: f64) {
    if d.is_empty() {
        return;
    }
    for m in 0..d[0].len() {
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.sort_by(|&a, &b| d[a][m].total_cmp(&d[b][m]).then(a.cmp(&b)));
        for w in 1..order.len() {
            let prev = d[order[w - 1]][m];
            if d[order[w]][m] - prev < jitter {
                d[order[w]][m] = prev + jitter;
            }
        }
    }
}

/// Samples a complete topology: distances, observer sets and accuracies.
///
/// Every attribute gets at least one observer; membership is redrawn until
/// that holds.
pub fn sample_topology<R: Rng + ?Sized>(cfg: &GeometryConfig, rng: &mut R) -> Result<Topology> {
    cfg.validate()?;
    let distances = sample_distances(cfg, rng);
    let observers = (0..cfg.num_attributes)
        .map(|_| loop {
            let set: Vec<usize> = (0..cfg.num_isas)
                .filter(|_| rng.random::<f64>() < cfg.observe_prob)
                .collect();
            if !set.is_empty() {
                break set;
            }
        })
        .collect();
    let accuracy = vec![vec![cfg.accuracy; cfg.num_attributes]; cfg.num_isas];
    Topology::new(distances, cfg.height_m, observers, accuracy)
}

/// Ordered list of queried attributes for one service interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySchedule {
    attributes: Vec<usize>,
    quorum: usize,
}

impl QuerySchedule {
    pub fn new(attributes: Vec<usize>, quorum: usize, num_attributes: usize, num_nmas: usize) -> Result<Self> {
        if attributes.len() > num_attributes {
            return Err(Error::invalid("attributes", "more slots than attributes"));
        }
        let mut seen = vec![false; num_attributes];
        for &n in &attributes {
            if n >= num_attributes {
                return Err(Error::invalid("attributes", format!("attribute {n} out of range")));
            }
            if std::mem::replace(&mut seen[n], true) {
                return Err(Error::invalid("attributes", format!("attribute {n} queried twice")));
            }
        }
        if quorum == 0 || quorum > num_nmas {
            return Err(Error::invalid("quorum", format!("must lie in [1, {num_nmas}]")));
        }
        Ok(Self { attributes, quorum })
    }

    /// Majority quorum `ceil((M + 1) / 2)`.
    pub fn majority(num_nmas: usize) -> usize {
        (num_nmas + 2) / 2
    }

    pub fn attributes(&self) -> &[usize] {
        &self.attributes
    }

    pub fn slots(&self) -> usize {
        self.attributes.len()
    }

    pub fn quorum(&self) -> usize {
        self.quorum
    }

    /// Attribute carried by slot `j`.
    pub fn attribute_at(&self, j: usize) -> usize {
        self.attributes[j]
    }
}

/// Beta-distributed usefulness score attached to each update.
///
/// Shapes are restricted to positive integers so the CDF has the exact
/// binomial-sum form; the default Beta(2, 2) has `F(v) = 3v^2 - 2v^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaValueModel {
    pub shape_a: u32,
    pub shape_b: u32,
}

impl Default for MetaValueModel {
    fn default() -> Self {
        Self { shape_a: 2, shape_b: 2 }
    }
}

impl MetaValueModel {
    pub fn new(shape_a: u32, shape_b: u32) -> Result<Self> {
        if shape_a == 0 || shape_b == 0 {
            return Err(Error::invalid("meta_value", "shape parameters must be positive integers"));
        }
        Ok(Self { shape_a, shape_b })
    }

    pub fn mean(&self) -> f64 {
        self.shape_a as f64 / (self.shape_a + self.shape_b) as f64
    }

    pub fn cdf(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        let n = (self.shape_a + self.shape_b - 1) as i32;
        let mut binom = 1.0;
        let mut total = 0.0;
        for j in 0..=n {
            if j >= self.shape_a as i32 {
                total += binom * v.powi(j) * (1.0 - v).powi(n - j);
            }
            binom = binom * (n - j) as f64 / (j + 1) as f64;
        }
        total.clamp(0.0, 1.0)
    }

    /// `F^{-1}(u)` by bisection to 1e-12 in `v`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Beta::new(self.shape_a as f64, self.shape_b as f64)
            .expect("positive shapes")
            .sample(rng)
    }
}
