//! Uplink SINR model under Rayleigh fading.
//!
//! Collaborating ISAs send the same codeword, so their received powers add;
//! contaminating ISAs (different codeword) add to the interference. With
//! unit-mean exponential fading power, a collaborator `c` contributes
//! `Exp(rate = Lambda_c)` signal with `Lambda_c = d^a / rho`, and an interferer
//! `i` contributes `Exp(rate = gamma_th * Omega_i)` with
//! `Omega_i = d^a / (gamma_th * rho)`.
//!
//! The success probability `Pr(SINR > gamma_th)` has the partial-fraction
//! closed form
//!
//! ```text
//! sum_{c in C_k} sum_{i in I}  prod Lambda * prod Omega
//!     / ((Lambda_c + Omega_i) * Lambda_c * Psi_{c,i}) * exp(-Lambda_c gamma_th sigma^2)
//! ```
//!
//! where `Psi` is the product of rate gaps. Summing the inner partial fraction
//! gives the equivalent factored form `prod_i Omega_i / (Omega_i + Lambda_c)`,
//! which is what [`success_from_rates_factored`] evaluates.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Topology;

/// Relative gap below which two rates count as coincident.
pub const RATE_TOLERANCE: f64 = 1e-10;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub path_loss_exponent: f64,
    pub noise_power_w: f64,
    pub snr_threshold: f64,
    /// Transmit power per ISA, watts.
    pub tx_power_w: Vec<f64>,
}

impl LinkBudget {
    pub fn new(path_loss_exponent: f64, noise_power_w: f64, snr_threshold: f64, tx_power_w: Vec<f64>) -> Result<Self> {
        let budget = Self {
            path_loss_exponent,
            noise_power_w,
            snr_threshold,
            tx_power_w,
        };
        budget.validate()?;
        Ok(budget)
    }

    /// Same transmit power for `num_isas` ISAs.
    pub fn uniform(path_loss_exponent: f64, noise_power_w: f64, snr_threshold: f64, num_isas: usize, power_w: f64) -> Result<Self> {
        Self::new(path_loss_exponent, noise_power_w, snr_threshold, vec![power_w; num_isas])
    }

    pub fn validate(&self) -> Result<()> {
        if !(2.0..7.0).contains(&self.path_loss_exponent) {
            return Err(Error::invalid("path_loss_exponent", "must lie in [2, 7)"));
        }
        if !(self.noise_power_w > 0.0) {
            return Err(Error::invalid("noise_power_w", "must be positive"));
        }
        if !(self.snr_threshold > 0.0) {
            return Err(Error::invalid("snr_threshold", "must be positive"));
        }
        if self.tx_power_w.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid("tx_power_w", "all powers must be positive"));
        }
        Ok(())
    }

    /// `Lambda = d^a / rho` for ISA `k` at NMA `m`.
    pub fn signal_rate(&self, topo: &Topology, k: usize, m: usize) -> f64 {
        signal_rate(topo.distance(k, m), self.path_loss_exponent, self.tx_power_w[k])
    }

    /// `Omega = d^a / (gamma_th rho)` for ISA `k` at NMA `m`.
    pub fn interference_rate(&self, topo: &Topology, k: usize, m: usize) -> f64 {
        self.signal_rate(topo, k, m) / self.snr_threshold
    }
}

pub fn signal_rate(distance_m: f64, exponent: f64, power_w: f64) -> f64 {
    distance_m.powf(exponent) / power_w
}

fn check_distinct(values: &[f64], what: &str) -> Result<()> {
    for (i, &a) in values.iter().enumerate() {
        for &b in &values[i + 1..] {
            if (a - b).abs() <= RATE_TOLERANCE * a.abs().max(b.abs()) {
                return Err(Error::DegenerateGeometry(format!("coincident {what} rates {a:e} and {b:e}")));
            }
        }
    }
    Ok(())
}

/// Hypoexponential weight `prod_{i != c} Lambda_i / (Lambda_i - Lambda_c)`.
fn collaborator_weight(signal: &[f64], c: usize) -> f64 {
    signal
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != c)
        .map(|(_, &l)| l / (l - signal[c]))
        .product()
}

/// Success probability from rates, evaluated term by term as the double
/// partial fraction over collaborators and interferers.
///
/// `signal` holds `Lambda` for every member of `C_k` (the reference ISA
/// included), `interference` holds `Omega` for every interferer.
pub fn success_from_rates(signal: &[f64], interference: &[f64], snr_threshold: f64, noise_w: f64) -> Result<f64> {
    if signal.is_empty() {
        return Ok(0.0);
    }
    check_distinct(signal, "collaborator")?;
    if interference.is_empty() {
        let p: f64 = (0..signal.len())
            .map(|c| collaborator_weight(signal, c) * (-signal[c] * snr_threshold * noise_w).exp())
            .sum();
        return Ok(p.clamp(0.0, 1.0));
    }
    check_distinct(interference, "interferer")?;
    let prod_omega: f64 = interference.iter().product();
    let mut total = 0.0;
    for c in 0..signal.len() {
        let lc = signal[c];
        let col = collaborator_weight(signal, c) * (-lc * snr_threshold * noise_w).exp();
        for (i, &oi) in interference.iter().enumerate() {
            let psi_int: f64 = interference
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &oj)| oj - oi)
                .product();
            total += col * prod_omega / ((lc + oi) * psi_int);
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Same quantity as [`success_from_rates`] with the interferer partial
/// fraction summed into `prod_i Omega_i / (Omega_i + Lambda_c)`.
///
/// Needs distinct collaborator rates only and is the better conditioned of
/// the two, so the bulk evaluators use it.
pub fn success_from_rates_factored(signal: &[f64], interference: &[f64], snr_threshold: f64, noise_w: f64) -> Result<f64> {
    if signal.is_empty() {
        return Ok(0.0);
    }
    check_distinct(signal, "collaborator")?;
    let p: f64 = (0..signal.len())
        .map(|c| {
            let lc = signal[c];
            let shield: f64 = interference.iter().map(|&o| o / (o + lc)).product();
            collaborator_weight(signal, c) * (-lc * snr_threshold * noise_w).exp() * shield
        })
        .sum();
    Ok(p.clamp(0.0, 1.0))
}

fn collaborating_set(k: usize, collaborators: &[usize]) -> Vec<usize> {
    let mut set = collaborators.to_vec();
    if !set.contains(&k) {
        set.push(k);
    }
    set.sort_unstable();
    set.dedup();
    set
}

fn check_sets(k: usize, collaborators: &[usize], interferers: &[usize]) -> Result<()> {
    if interferers.contains(&k) || collaborators.iter().any(|c| interferers.contains(c)) {
        return Err(Error::invalid("interferers", "collaborator and interferer sets must be disjoint"));
    }
    Ok(())
}

/// Closed-form probability that the update of ISA `k`, helped by
/// `collaborators` and contaminated by `interferers`, clears the SINR
/// threshold at NMA `m`.
pub fn success_probability_closed_form(
    k: usize,
    m: usize,
    collaborators: &[usize],
    interferers: &[usize],
    budget: &LinkBudget,
    topo: &Topology,
) -> Result<f64> {
    check_sets(k, collaborators, interferers)?;
    let signal: Vec<f64> = collaborating_set(k, collaborators)
        .into_iter()
        .map(|c| budget.signal_rate(topo, c, m))
        .collect();
    let interference: Vec<f64> = interferers.iter().map(|&i| budget.interference_rate(topo, i, m)).collect();
    success_from_rates(&signal, &interference, budget.snr_threshold, budget.noise_power_w)
}

/// One fading realisation: does the SINR clear the threshold?
pub fn sinr_clears<R: Rng + ?Sized>(signal: &[f64], interference: &[f64], snr_threshold: f64, noise_w: f64, rng: &mut R) -> bool {
    let s: f64 = signal
        .iter()
        .map(|&l| {
            let g: f64 = Exp1.sample(rng);
            g / l
        })
        .sum();
    let i: f64 = interference
        .iter()
        .map(|&o| {
            let g: f64 = Exp1.sample(rng);
            g / (snr_threshold * o)
        })
        .sum::<f64>();
    s > snr_threshold * (i + noise_w)
}

/// Monte Carlo estimate of the success probability from rates.
pub fn success_mc_from_rates<R: Rng + ?Sized>(
    signal: &[f64],
    interference: &[f64],
    snr_threshold: f64,
    noise_w: f64,
    draws: usize,
    rng: &mut R,
) -> f64 {
    let hits = (0..draws)
        .filter(|_| sinr_clears(signal, interference, snr_threshold, noise_w, rng))
        .count();
    hits as f64 / draws.max(1) as f64
}

/// Monte Carlo counterpart of [`success_probability_closed_form`].
#[allow(clippy::too_many_arguments)]
pub fn success_probability_mc<R: Rng + ?Sized>(
    k: usize,
    m: usize,
    collaborators: &[usize],
    interferers: &[usize],
    budget: &LinkBudget,
    topo: &Topology,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    check_sets(k, collaborators, interferers)?;
    if draws == 0 {
        return Err(Error::invalid("draws", "must be at least 1"));
    }
    let signal: Vec<f64> = collaborating_set(k, collaborators)
        .into_iter()
        .map(|c| budget.signal_rate(topo, c, m))
        .collect();
    let interference: Vec<f64> = interferers.iter().map(|&i| budget.interference_rate(topo, i, m)).collect();
    Ok(success_mc_from_rates(&signal, &interference, budget.snr_threshold, budget.noise_power_w, draws, rng))
}

/// `E[1 / (X + sigma^2)]` for `X` a sum of independent exponentials with the
/// given rates, via `int_0^inf exp(-s sigma^2) E[exp(-s X)] ds` on a log grid.
fn mean_inverse_interference(rates: &[f64], noise_w: f64) -> f64 {
    if rates.is_empty() {
        return 1.0 / noise_w;
    }
    let r_min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let lo = r_min.min(1.0 / noise_w).ln() - 40.0;
    let hi = (1.0 / noise_w).ln() + 6.0;
    let steps = (((hi - lo) / 0.01).ceil() as usize).max(2) & !1;
    let h = (hi - lo) / steps as f64;
    let f = |u: f64| {
        let s = u.exp();
        let laplace: f64 = rates.iter().map(|&r| r / (r + s)).product();
        s * (-s * noise_w).exp() * laplace
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// Markov-inequality upper bound on the success probability from rates:
/// `Pr(S > g (X + s2)) <= E[S] / g * E[1 / (X + s2)]`, unclamped.
pub fn markov_bound_from_rates(signal: &[f64], interference: &[f64], snr_threshold: f64, noise_w: f64) -> f64 {
    let mean_signal: f64 = signal.iter().map(|&l| 1.0 / l).sum();
    let rates: Vec<f64> = interference.iter().map(|&o| snr_threshold * o).collect();
    mean_signal / snr_threshold * mean_inverse_interference(&rates, noise_w)
}

/// Upper bound on the success probability averaged over a law of collaborator
/// sets, given as `(weight, set)` pairs whose weights sum to one.
pub fn success_probability_upper_bound(
    k: usize,
    m: usize,
    collaborator_law: &[(f64, Vec<usize>)],
    interferers: &[usize],
    budget: &LinkBudget,
    topo: &Topology,
) -> Result<f64> {
    let interference: Vec<f64> = interferers.iter().map(|&i| budget.interference_rate(topo, i, m)).collect();
    check_distinct(&interference, "interferer")?;
    let mut total = 0.0;
    for (weight, set) in collaborator_law {
        check_sets(k, set, interferers)?;
        let signal: Vec<f64> = collaborating_set(k, set)
            .into_iter()
            .map(|c| budget.signal_rate(topo, c, m))
            .collect();
        check_distinct(&signal, "collaborator")?;
        total += weight * markov_bound_from_rates(&signal, &interference, budget.snr_threshold, budget.noise_power_w);
    }
    Ok(total.clamp(0.0, 1.0))
}
