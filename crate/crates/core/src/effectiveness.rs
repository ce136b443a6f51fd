//! Grade-of-effectiveness features: discrepancy error (EDE), resource
//! consumption (ERC) and usefulness of updates (EUU), together with the
//! per-attribute delivery-failure probability and steady-state error.

use serde::{Deserialize, Serialize};

use crate::channel::{success_from_rates_factored, LinkBudget};
use crate::error::{Error, Result};
use crate::model::{AttributeChain, Topology};

/// Default cap on `|K_n|` for subset enumeration.
pub const ENUMERATION_CAP: usize = 12;

/// Concrete forms of the feature maps.
///
/// `g_r(x) = exp(kappa_r x) - 1`, `h(x) = c_h x`, `f_rho(v) = P0 v^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoEFunctions {
    pub kappa: [f64; 3],
    pub c_h: f64,
    pub p0_w: f64,
}

impl Default for GoEFunctions {
    fn default() -> Self {
        Self {
            kappa: [1.0; 3],
            c_h: 1.0,
            p0_w: 0.1,
        }
    }
}

impl GoEFunctions {
    pub fn validate(&self) -> Result<()> {
        if self.kappa.iter().any(|&k| !(k > 0.0)) {
            return Err(Error::invalid("kappa", "all exponents must be positive"));
        }
        if !(self.c_h > 0.0) {
            return Err(Error::invalid("c_h", "must be positive"));
        }
        if !(self.p0_w > 0.0) {
            return Err(Error::invalid("p0_w", "must be positive"));
        }
        Ok(())
    }

    /// `g_r(x)` for `r` in 1..=3.
    pub fn g(&self, r: usize, x: f64) -> f64 {
        (self.kappa[r - 1] * x).exp_m1()
    }

    pub fn g_inv(&self, r: usize, y: f64) -> f64 {
        y.ln_1p() / self.kappa[r - 1]
    }

    pub fn g_prime(&self, r: usize, x: f64) -> f64 {
        let k = self.kappa[r - 1];
        k * (k * x).exp()
    }

    pub fn g_second(&self, r: usize, x: f64) -> f64 {
        let k = self.kappa[r - 1];
        k * k * (k * x).exp()
    }

    pub fn h(&self, x: f64) -> f64 {
        self.c_h * x
    }

    pub fn tx_power(&self, v: f64) -> f64 {
        self.p0_w * v * v * v
    }

    /// `f_rho(v) / v`, continuous at `v = 0`.
    pub fn power_per_value(&self, v: f64) -> f64 {
        self.p0_w * v * v
    }
}

/// Weights `[w1, w2]` on the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
}

impl Weights {
    pub fn new(w1: f64) -> Self {
        Self { w1, w2: 1.0 - w1 }
    }

    pub fn balanced() -> Self {
        Self::new(0.5)
    }
}

/// How the per-subset failure weights are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FailureScale {
    /// Activation/observation outcomes weighted by their probabilities.
    #[default]
    Normalized,
    /// Extra `2^{-|K_n|}` prefactor on the subset sum.
    AsPrinted,
}

/// Which event counts as a delivery failure given the transmitting sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QuorumRule {
    /// Fewer than `M_t` of the `M` NMAs decode (independent fading per NMA).
    #[default]
    Exact,
    /// Product over every correct transmitter of the outage at its `M_t + 1`
    /// farthest NMAs.
    FarthestNmas,
}

/// Steady-state error law for the two-state error chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorLaw {
    /// `pi_01 = E (I-1) p`, `pi_11 = E (1 - p)`.
    #[default]
    Chain,
    /// `pi_11 = E (p' + (I-2) p / (I-1))`.
    AsPrinted,
}

/// Role of one observer in an enumerated outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Inactive,
    Correct,
    Incorrect,
}

impl Role {
    const ALL: [Role; 3] = [Role::Inactive, Role::Correct, Role::Incorrect];
}

/// Probability that a Poisson-binomial count with success probabilities `p`
/// falls below `quorum`.
pub fn below_quorum(p: &[f64], quorum: usize) -> f64 {
    let mut dist = vec![0.0; p.len() + 1];
    dist[0] = 1.0;
    for (i, &pi) in p.iter().enumerate() {
        for c in (0..=i + 1).rev() {
            let stay = dist[c] * (1.0 - pi);
            let came = if c > 0 { dist[c - 1] * pi } else { 0.0 };
            dist[c] = stay + came;
        }
    }
    dist.iter().take(quorum.min(dist.len())).sum::<f64>().clamp(0.0, 1.0)
}

/// Per-attribute delivery-failure model.
///
/// The conditional failure probability of every (inactive, correct,
/// incorrect) assignment of the observers is tabulated once; the failure
/// probability for a given activation vector is then a weighted sum over the
/// `3^{|K_n|}` table entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryModel {
    attribute: usize,
    observers: Vec<usize>,
    accuracy: Vec<f64>,
    /// Indexed by the base-3 code of the roles, observer 0 least significant.
    table: Vec<f64>,
}

impl DeliveryModel {
    /// Builds the table from a per-NMA success-probability oracle
    /// `gamma(correct, incorrect) -> Vec<f64>` (one entry per NMA, indices are
    /// ISA ids) and a quorum rule.
    pub fn build<F>(attribute: usize, topo: &Topology, quorum: usize, rule: QuorumRule, cap: usize, mut gamma: F) -> Result<Self>
    where
        F: FnMut(&[usize], &[usize]) -> Result<Vec<f64>>,
    {
        let observers = topo.observers(attribute).to_vec();
        if observers.len() > cap {
            return Err(Error::EnumerationTooLarge {
                attribute,
                observers: observers.len(),
                cap,
            });
        }
        let accuracy = observers.iter().map(|&k| topo.accuracy(k, attribute)).collect();
        let size = 3usize.pow(observers.len() as u32);
        let mut table = Vec::with_capacity(size);
        let mut correct = Vec::new();
        let mut incorrect = Vec::new();
        for code in 0..size {
            correct.clear();
            incorrect.clear();
            let mut c = code;
            for &k in &observers {
                match Role::ALL[c % 3] {
                    Role::Inactive => {}
                    Role::Correct => correct.push(k),
                    Role::Incorrect => incorrect.push(k),
                }
                c /= 3;
            }
            let fail = if correct.is_empty() {
                1.0
            } else {
                let g = gamma(&correct, &incorrect)?;
                match rule {
                    QuorumRule::Exact => below_quorum(&g, quorum),
                    QuorumRule::FarthestNmas => correct
                        .iter()
                        .map(|&k3| {
                            topo.farthest_nmas(k3, quorum + 1)
                                .into_iter()
                                .map(|m| 1.0 - g[m])
                                .product::<f64>()
                        })
                        .product(),
                }
            };
            table.push(fail);
        }
        Ok(Self {
            attribute,
            observers,
            accuracy,
            table,
        })
    }

    /// Exact-geometry model: rates from the link budget, closed-form success.
    pub fn from_budget(attribute: usize, topo: &Topology, budget: &LinkBudget, quorum: usize, rule: QuorumRule, cap: usize) -> Result<Self> {
        let m_count = topo.num_nmas();
        Self::build(attribute, topo, quorum, rule, cap, |correct, incorrect| {
            (0..m_count)
                .map(|m| {
                    let signal: Vec<f64> = correct.iter().map(|&k| budget.signal_rate(topo, k, m)).collect();
                    let interference: Vec<f64> = incorrect.iter().map(|&k| budget.interference_rate(topo, k, m)).collect();
                    success_from_rates_factored(&signal, &interference, budget.snr_threshold, budget.noise_power_w)
                })
                .collect()
        })
    }

    pub fn attribute(&self) -> usize {
        self.attribute
    }

    pub fn observers(&self) -> &[usize] {
        &self.observers
    }

    /// Conditional failure probability for an explicit role assignment.
    pub fn conditional_failure(&self, roles: &[Role]) -> f64 {
        let code = roles.iter().rev().fold(0usize, |acc, r| {
            acc * 3
                + match r {
                    Role::Inactive => 0,
                    Role::Correct => 1,
                    Role::Incorrect => 2,
                }
        });
        self.table[code]
    }

    /// Weighted sum of the table under per-observer role probabilities
    /// `probs[i] = [inactive, correct, incorrect]`.
    fn weighted(&self, probs: &[[f64; 3]]) -> f64 {
        // fold the least significant observer first; table layout matches
        let Some((first, rest)) = probs.split_first() else {
            return self.table[0];
        };
        let mut layer: Vec<f64> = self
            .table
            .chunks_exact(3)
            .map(|c| first[0] * c[0] + first[1] * c[1] + first[2] * c[2])
            .collect();
        for p in rest {
            let len = layer.len() / 3;
            for i in 0..len {
                layer[i] = p[0] * layer[3 * i] + p[1] * layer[3 * i + 1] + p[2] * layer[3 * i + 2];
            }
            layer.truncate(len);
        }
        layer[0]
    }

    fn role_probs(&self, alpha: &[f64]) -> Vec<[f64; 3]> {
        alpha
            .iter()
            .zip(&self.accuracy)
            .map(|(&a, &q)| [1.0 - a, a * q, a * (1.0 - q)])
            .collect()
    }

    /// Failure probability for activation probabilities `alpha`, one entry
    /// per observer in [`Self::observers`] order.
    pub fn failure(&self, alpha: &[f64], scale: FailureScale) -> f64 {
        assert_eq!(alpha.len(), self.observers.len());
        let e = self.weighted(&self.role_probs(alpha));
        let e = match scale {
            FailureScale::Normalized => e,
            FailureScale::AsPrinted => e * 0.5f64.powi(self.observers.len() as i32),
        };
        e.clamp(0.0, 1.0)
    }

    /// Failure probability conditioned on observer `i` being active and on it
    /// being inactive, in that order.
    pub fn split_failure(&self, alpha: &[f64], i: usize) -> (f64, f64) {
        let mut probs = self.role_probs(alpha);
        let q = self.accuracy[i];
        probs[i] = [0.0, q, 1.0 - q];
        let active = self.weighted(&probs);
        probs[i] = [1.0, 0.0, 0.0];
        let inactive = self.weighted(&probs);
        (active, inactive)
    }

    /// Sum of the subset-probability weights; one in normalized mode.
    pub fn weight_total(&self, alpha: &[f64]) -> f64 {
        let ones = DeliveryModel {
            table: vec![1.0; self.table.len()],
            ..self.clone()
        };
        ones.weighted(&ones.role_probs(alpha))
    }
}

/// Steady-state probability that the NMAs' estimate of the attribute is
/// stale, given the per-query delivery failure probability `failure`.
pub fn steady_state_error(chain: &AttributeChain, failure: f64, law: ErrorLaw) -> f64 {
    let e = failure.clamp(0.0, 1.0);
    let states = chain.states() as f64;
    let p = chain.move_prob();
    let pi01 = e * (states - 1.0) * p;
    let pi11 = match law {
        ErrorLaw::Chain => e * (1.0 - p),
        ErrorLaw::AsPrinted => e * (chain.stay_prob() + (states - 2.0) / (states - 1.0) * p),
    };
    let denom = 1.0 + pi01 - pi11;
    if denom <= 0.0 {
        return 0.0;
    }
    (pi01 / denom).clamp(0.0, 1.0)
}

/// Every computed quantity for one activation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub f1: f64,
    pub f2: f64,
    pub ede: f64,
    pub erc: f64,
    pub euu: f64,
    /// Objective `w1 g1(EDE) + w2 g2(ERC)` under the weights used.
    pub objective: f64,
    /// Per slot, in query order.
    pub failure: Vec<f64>,
    pub success: Vec<f64>,
    /// `prod_{n' != n} S_n'` per slot.
    pub success_others: Vec<f64>,
    pub error: Vec<f64>,
}

impl FeatureReport {
    pub fn success_product(&self) -> f64 {
        self.success.iter().product()
    }

    pub fn error_sum(&self) -> f64 {
        self.error.iter().sum()
    }
}
