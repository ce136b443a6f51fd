//! Monte Carlo simulation of the sensing, transmission and decoding loop.
//!
//! Each interval advances every attribute chain once and then walks the
//! query slots in order. In a slot every observer of the queried attribute
//! observes it, applies the acquisition scheme, draws a meta value, decides
//! whether to speak and transmits; each NMA decodes when the SINR of the
//! correct codeword clears the threshold, and the attribute is perceived
//! when a quorum of NMAs decodes. Otherwise the NMAs keep their previous
//! estimate.
//!
//! Draws come from substreams keyed by `(replicate, interval, slot, ISA)` with
//! a fixed draw order, so two policies simulated on the same replicate see the
//! same observations, meta values and fading.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::effectiveness::Weights;
use crate::error::{Error, Result};
use crate::instance::{Activation, Instance};
use crate::optimizer::{solve_algorithm1, tied_optimum, Tying};
use crate::policy::{local_instance, scheme_betas, AcquisitionScheme, PeerKnowledge, SchemeKind, ThresholdPolicy};
use crate::rng::{substream, StreamRng};

const SLOT_STREAM: u64 = 0x51a7;
const CHAIN_STREAM: u64 = 0xc4a1;

/// How an ISA with a generated update decides to speak.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyMode {
    /// Speak with probability `alpha[k][n]`.
    FixedAlpha(Activation),
    /// Speak when the meta value exceeds the ISA's threshold.
    Threshold(ThresholdPolicy),
}

/// Transmit power of a speaking ISA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PowerMode {
    /// `f_rho(v)` for the update's own meta value.
    #[default]
    PerUpdate,
    /// `f_rho(E[V])`, the power the analytical model assumes.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub intervals: usize,
    pub seed: u64,
    pub power: PowerMode,
    pub weights: Weights,
}

impl SimSettings {
    pub fn new(intervals: usize, seed: u64) -> Self {
        Self {
            intervals,
            seed,
            power: PowerMode::PerUpdate,
            weights: Weights::balanced(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsaSlot {
    pub isa: usize,
    pub observed_state: usize,
    pub generated: bool,
    pub meta_value: f64,
    pub spoke: bool,
    pub tx_power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmaSlot {
    pub sinr: f64,
    pub decoded: bool,
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotTrace {
    pub interval: usize,
    pub slot: usize,
    pub attribute: usize,
    pub true_state: usize,
    pub isas: Vec<IsaSlot>,
    pub nmas: Vec<NmaSlot>,
    pub quorum_reached: bool,
    pub reconstructed_state: usize,
}

/// Sample mean with a 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        if samples.is_empty() {
            return Self { mean: f64::NAN, ci: f64::NAN };
        }
        let mean = samples.iter().sum::<f64>() / n;
        if samples.len() < 2 {
            return Self { mean, ci: 0.0 };
        }
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            ci: 1.96 * (var / n).sqrt(),
        }
    }
}

/// Time averages of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scheme: SchemeKind,
    pub intervals: usize,
    pub f1: Estimate,
    pub f2: Estimate,
    pub ede: Estimate,
    pub erc: Estimate,
    pub euu: Estimate,
    /// `w1 g1(mean EDE) + w2 g2(mean ERC)` with a delta-method half-width.
    pub objective: Estimate,
    /// Generated updates per observer-slot.
    pub generation_rate: f64,
    /// Transmissions per observer-slot.
    pub speak_rate: f64,
    /// Quorum failures per slot among slots with a generated update, in
    /// query order. EUU and ERC use the product of the complements.
    pub failure_rate: Vec<f64>,
    /// Slots ending with a stale estimate, in query order.
    pub error_rate: Vec<f64>,
}

#[derive(Debug, Default, Clone)]
struct Accumulator {
    f1: Vec<f64>,
    f2: Vec<f64>,
    ede: Vec<f64>,
    erc: Vec<f64>,
    euu: Vec<f64>,
    observer_slots: u64,
    generated: u64,
    spoke: u64,
    /// Slots with at least one generated update, and quorum failures among
    /// them.
    attempts: Vec<u64>,
    failures: Vec<u64>,
    errors: Vec<u64>,
}

fn exp1(rng: &mut StreamRng) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln()
}

fn simulate(
    instance: &Instance,
    mode: &PolicyMode,
    scheme: SchemeKind,
    settings: &SimSettings,
    replicate: u64,
    mut trace: Option<&mut Vec<SlotTrace>>,
) -> Accumulator {
    let topo = &instance.topology;
    let funcs = &instance.funcs;
    let ch = &instance.channel;
    let slots = instance.slots();
    let nmas = topo.num_nmas();
    let quorum = instance.schedule.quorum();
    let mut chains = instance.chains.clone();
    let mut acq = AcquisitionScheme::new(scheme, chains.len());
    for chain in chains.iter_mut() {
        let mut rng = substream(settings.seed, &[CHAIN_STREAM, replicate, u64::MAX, chain.index() as u64]);
        let start = rng.random_range(0..chain.states());
        chain.set_state(start);
        acq.record_state(chain.index(), start);
    }
    let mut acc = Accumulator {
        attempts: vec![0; slots],
        failures: vec![0; slots],
        errors: vec![0; slots],
        ..Accumulator::default()
    };
    let mut signal = vec![0.0; nmas];
    let mut interference = vec![0.0; nmas];
    for t in 0..settings.intervals {
        for chain in chains.iter_mut() {
            let mut rng = substream(settings.seed, &[CHAIN_STREAM, replicate, t as u64, chain.index() as u64]);
            chain.step(&mut rng);
        }
        let (mut f1, mut f2) = (0.0, 0.0);
        let mut error_count = 0usize;
        for j in 0..slots {
            let n = instance.schedule.attribute_at(j);
            let truth = chains[n].state();
            let states = chains[n].states();
            let generated = acq.generates(n, truth);
            signal.fill(0.0);
            interference.fill(0.0);
            let mut isas = Vec::new();
            for &k in topo.observers(n) {
                let mut rng = substream(settings.seed, &[SLOT_STREAM, replicate, t as u64, j as u64, k as u64]);
                let u_obs: f64 = rng.random();
                let u_wrong: f64 = rng.random();
                let u_meta: f64 = rng.random();
                let u_speak: f64 = rng.random();
                let correct = u_obs < topo.accuracy(k, n);
                let observed = if correct {
                    truth
                } else {
                    let pick = ((u_wrong * (states - 1) as f64) as usize).min(states - 2);
                    if pick >= truth {
                        pick + 1
                    } else {
                        pick
                    }
                };
                let v = instance.meta.inverse_cdf(u_meta);
                let spoke = generated
                    && match mode {
                        PolicyMode::FixedAlpha(alpha) => u_speak < alpha.get(k, n),
                        PolicyMode::Threshold(policy) => policy.speaks(k, n, true, v),
                    };
                let power = match settings.power {
                    PowerMode::PerUpdate => funcs.tx_power(v),
                    PowerMode::Mean => funcs.tx_power(instance.meta.mean()),
                };
                acc.observer_slots += 1;
                acc.generated += generated as u64;
                if spoke {
                    acc.spoke += 1;
                    f1 += v;
                    f2 += funcs.h(funcs.power_per_value(v));
                    for m in 0..nmas {
                        let rx = power * topo.distance(k, m).powf(-ch.path_loss_exponent) * exp1(&mut rng);
                        if correct {
                            signal[m] += rx;
                        } else {
                            interference[m] += rx;
                        }
                    }
                }
                if trace.is_some() {
                    isas.push(IsaSlot {
                        isa: k,
                        observed_state: observed,
                        generated,
                        meta_value: v,
                        spoke,
                        tx_power_w: if spoke { power } else { 0.0 },
                    });
                }
            }
            let mut decoded = 0;
            let mut nma_trace = Vec::new();
            for m in 0..nmas {
                let sinr = signal[m] / (interference[m] + ch.noise_power_w);
                let ok = sinr > ch.snr_threshold;
                decoded += ok as usize;
                if trace.is_some() {
                    nma_trace.push(NmaSlot { sinr, decoded: ok });
                }
            }
            let success = decoded >= quorum;
            if success {
                acq.record_decoded(n, truth);
            }
            if generated && !topo.observers(n).is_empty() {
                acc.attempts[j] += 1;
                acc.failures[j] += !success as u64;
            }
            let estimate = acq.last_decoded[n];
            if estimate != truth {
                acc.errors[j] += 1;
                error_count += 1;
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(SlotTrace {
                    interval: t,
                    slot: j,
                    attribute: n,
                    true_state: truth,
                    isas,
                    nmas: nma_trace,
                    quorum_reached: success,
                    reconstructed_state: estimate,
                });
            }
        }
        for chain in &chains {
            acq.record_state(chain.index(), chain.state());
        }
        acc.f1.push(f1);
        acc.f2.push(f2);
        acc.ede.push(f1 * error_count as f64);
    }
    let prod: f64 = acc.failure_rates().iter().map(|e| 1.0 - e).product();
    acc.erc = acc.f2.iter().map(|f| f * prod).collect();
    acc.euu = acc.f1.iter().map(|f| f * prod).collect();
    acc
}

impl Accumulator {
    /// Quorum-failure frequency per slot among slots where an update was
    /// generated; one when no update was ever generated.
    fn failure_rates(&self) -> Vec<f64> {
        self.attempts
            .iter()
            .zip(&self.failures)
            .map(|(&a, &f)| if a == 0 { 1.0 } else { f as f64 / a as f64 })
            .collect()
    }
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.len() < 2 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

/// Simulates `settings.intervals` intervals on `instance`.
pub fn run_simulation(instance: &Instance, mode: &PolicyMode, scheme: SchemeKind, settings: &SimSettings, replicate: u64) -> RunReport {
    let acc = simulate(instance, mode, scheme, settings, replicate, None);
    let funcs = &instance.funcs;
    let w = settings.weights;
    let ede = Estimate::from_samples(&acc.ede);
    let erc = Estimate::from_samples(&acc.erc);
    let objective = w.w1 * funcs.g(1, ede.mean) + w.w2 * funcs.g(2, erc.mean);
    let d1 = w.w1 * funcs.g_prime(1, ede.mean);
    let d2 = w.w2 * funcs.g_prime(2, erc.mean);
    let t = acc.ede.len() as f64;
    let var = d1 * d1 * covariance(&acc.ede, &acc.ede) + d2 * d2 * covariance(&acc.erc, &acc.erc) + 2.0 * d1 * d2 * covariance(&acc.ede, &acc.erc);
    let errors = acc.errors.iter().map(|&c| c as f64 / settings.intervals as f64).collect();
    let rate = |c: u64| if acc.observer_slots == 0 { 0.0 } else { c as f64 / acc.observer_slots as f64 };
    RunReport {
        scheme,
        intervals: settings.intervals,
        f1: Estimate::from_samples(&acc.f1),
        f2: Estimate::from_samples(&acc.f2),
        ede,
        erc,
        euu: Estimate::from_samples(&acc.euu),
        objective: Estimate {
            mean: objective,
            ci: 1.96 * (var.max(0.0) / t).sqrt(),
        },
        generation_rate: rate(acc.generated),
        speak_rate: rate(acc.spoke),
        failure_rate: acc.failure_rates(),
        error_rate: errors,
    }
}

/// Like [`run_simulation`] but returns the per-slot record.
pub fn trace_simulation(instance: &Instance, mode: &PolicyMode, scheme: SchemeKind, settings: &SimSettings, replicate: u64) -> Vec<SlotTrace> {
    let mut trace = Vec::with_capacity(settings.intervals * instance.slots());
    simulate(instance, mode, scheme, settings, replicate, Some(&mut trace));
    trace
}

/// One row of the threshold sweep; statistics are across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub scheme: SchemeKind,
    pub v_th: f64,
    pub g_mean: f64,
    pub g_ci: f64,
    pub euu_mean: f64,
    pub euu_ci: f64,
    pub alpha_eff: f64,
}

/// Simulates every scheme at every threshold. Seed `s` runs replicate `s`
/// on `instances[s]`; all schemes and thresholds share the same draws.
pub fn sweep_threshold(instances: &[Instance], schemes: &[SchemeKind], grid: &[f64], settings: &SimSettings) -> Vec<ThresholdRow> {
    let cells: Vec<(SchemeKind, f64)> = schemes.iter().flat_map(|&s| grid.iter().map(move |&v| (s, v))).collect();
    cells
        .par_iter()
        .map(|&(scheme, v_th)| {
            let runs: Vec<RunReport> = instances
                .iter()
                .enumerate()
                .map(|(s, inst)| {
                    let policy = ThresholdPolicy::uniform(inst.num_isas(), inst.num_attributes(), v_th);
                    run_simulation(inst, &PolicyMode::Threshold(policy), scheme, settings, s as u64)
                })
                .collect();
            let g = Estimate::from_samples(&runs.iter().map(|r| r.objective.mean).collect::<Vec<_>>());
            let euu = Estimate::from_samples(&runs.iter().map(|r| r.euu.mean).collect::<Vec<_>>());
            ThresholdRow {
                scheme,
                v_th,
                g_mean: g.mean,
                g_ci: g.ci,
                euu_mean: euu.mean,
                euu_ci: euu.ci,
                alpha_eff: runs.iter().map(|r| r.speak_rate).sum::<f64>() / runs.len() as f64,
            }
        })
        .collect()
}

/// Thresholds where `euu_mean` crosses `level` for one scheme, by linear
/// interpolation between grid points.
pub fn threshold_roots(rows: &[ThresholdRow], scheme: SchemeKind, level: f64) -> Vec<(f64, f64)> {
    let pts: Vec<&ThresholdRow> = rows.iter().filter(|r| r.scheme == scheme).collect();
    let mut roots = Vec::new();
    for w in pts.windows(2) {
        let (a, b) = (w[0].euu_mean - level, w[1].euu_mean - level);
        if a == 0.0 || (a < 0.0) != (b < 0.0) && b != 0.0 {
            let f = if a == b { 0.0 } else { a / (a - b) };
            let v = w[0].v_th + f * (w[1].v_th - w[0].v_th);
            let alpha = w[0].alpha_eff + f * (w[1].alpha_eff - w[0].alpha_eff);
            roots.push((v, alpha));
        }
    }
    if let Some(last) = pts.last() {
        if last.euu_mean == level {
            roots.push((last.v_th, last.alpha_eff));
        }
    }
    roots
}

/// One cell of the state-count sweep; `None` when some seed is infeasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatesRow {
    pub states: usize,
    pub query_size: usize,
    pub g_min_feasible: Option<f64>,
}

/// Feasible minimum of the objective over a tied activation, averaged over
/// the configured seeds, for every state count and query size.
pub fn sweep_states(config: &ExperimentConfig, states_grid: &[usize], query_grid: &[usize], grid_step: f64) -> Result<Vec<StatesRow>> {
    let cells: Vec<(usize, usize)> = query_grid.iter().flat_map(|&a| states_grid.iter().map(move |&i| (i, a))).collect();
    let weights = Weights::new(config.optimizer.initial_w1);
    cells
        .par_iter()
        .map(|&(states, query_size)| {
            let cfg = ExperimentConfig {
                states,
                query_size,
                ..config.clone()
            };
            let mut total = 0.0;
            let mut feasible = true;
            for s in 0..cfg.simulation.seeds {
                let inst = cfg.instance(s as u64)?;
                match tied_optimum(&inst, weights, grid_step) {
                    Some((_, g)) => total += g,
                    None => {
                        feasible = false;
                        break;
                    }
                }
            }
            Ok(StatesRow {
                states,
                query_size,
                g_min_feasible: feasible.then(|| total / cfg.simulation.seeds as f64),
            })
        })
        .collect()
}

/// Centralized oracle thresholds against self-decided thresholds, both
/// simulated on the same draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfDecisionReport {
    pub scheme: SchemeKind,
    /// Tied oracle activation per seed.
    pub central_alpha: Vec<f64>,
    /// Locally estimated tied activation per seed and ISA.
    pub local_alpha: Vec<Vec<f64>>,
    pub central_objective: Estimate,
    pub local_objective: Estimate,
    pub central_euu: Estimate,
    pub local_euu: Estimate,
    pub central_feasible: bool,
    pub local_feasible: bool,
    /// `G_central / G_local` when the local policy is feasible, else 0.
    pub accuracy: f64,
}

/// Fixed-point iterations used for the semantics-aware generation rate.
const BETA_ITERATIONS: usize = 50;

/// Compares the centralized tied optimum with every ISA solving its own
/// problem from peer statistics. Seed `s` uses replicate `s` of `config`.
pub fn evaluate_self_decision(
    config: &ExperimentConfig,
    scheme: SchemeKind,
    knowledge: &PeerKnowledge,
    grid_step: f64,
) -> Result<SelfDecisionReport> {
    let weights = Weights::new(config.optimizer.initial_w1);
    let opt = crate::optimizer::OptimizerConfig {
        tying: Tying::Global,
        ..config.optimizer.clone()
    };
    let settings = SimSettings {
        weights,
        ..SimSettings::new(config.simulation.intervals, config.seed)
    };
    let seeds: Vec<u64> = (0..config.simulation.seeds as u64).collect();
    let per_seed = seeds
        .par_iter()
        .map(|&s| -> Result<_> {
            let inst = config.instance(s)?;
            let (k_count, n_count) = (inst.num_isas(), inst.num_attributes());
            let (central, _) = tied_optimum(&inst, weights, grid_step)
                .ok_or_else(|| Error::Infeasible(format!("seed {s}: no tied activation is feasible")))?;
            let beta = scheme_betas(&inst, scheme, &Activation::constant(k_count, n_count, central), BETA_ITERATIONS);
            let central_policy = ThresholdPolicy::from_alpha(&inst, &Activation::constant(k_count, n_count, central), &beta);
            let mut local_policy = ThresholdPolicy::uniform(k_count, n_count, 1.0);
            let mut local_alpha = Vec::with_capacity(k_count);
            for k in 0..k_count {
                if inst.topology.observable(k).is_empty() {
                    local_alpha.push(0.0);
                    continue;
                }
                let local = local_instance(&inst, k, knowledge, config.seed ^ s.rotate_left(32))?;
                let a = match solve_algorithm1(&local, &opt) {
                    Ok(sol) => sol.variables[0],
                    Err(Error::Infeasible(_)) => 1.0,
                    Err(e) => return Err(e),
                };
                let tied = Activation::constant(k_count, n_count, a);
                let own_beta = scheme_betas(&local, scheme, &tied, BETA_ITERATIONS);
                let own = ThresholdPolicy::from_alpha(&local, &tied, &own_beta);
                local_policy.v_th[k] = own.v_th[k].clone();
                local_alpha.push(a);
            }
            let c = run_simulation(&inst, &PolicyMode::Threshold(central_policy), scheme, &settings, s);
            let l = run_simulation(&inst, &PolicyMode::Threshold(local_policy), scheme, &settings, s);
            Ok((central, local_alpha, c, l))
        })
        .collect::<Result<Vec<_>>>()?;
    let pick = |f: &dyn Fn(&(f64, Vec<f64>, RunReport, RunReport)) -> f64| Estimate::from_samples(&per_seed.iter().map(f).collect::<Vec<_>>());
    let central_objective = pick(&|r| r.2.objective.mean);
    let local_objective = pick(&|r| r.3.objective.mean);
    let central_euu = pick(&|r| r.2.euu.mean);
    let local_euu = pick(&|r| r.3.euu.mean);
    let funcs = config.goe_functions();
    let feasible = |e: &Estimate| funcs.g(3, e.mean) >= config.euu_min;
    let local_feasible = feasible(&local_euu);
    let accuracy = if local_feasible && local_objective.mean > 0.0 {
        central_objective.mean / local_objective.mean
    } else if local_feasible {
        1.0
    } else {
        0.0
    };
    Ok(SelfDecisionReport {
        scheme,
        central_alpha: per_seed.iter().map(|r| r.0).collect(),
        local_alpha: per_seed.iter().map(|r| r.1.clone()).collect(),
        central_feasible: feasible(&central_euu),
        local_feasible,
        central_objective,
        local_objective,
        central_euu,
        local_euu,
        accuracy,
    })
}

fn write_header<W: Write>(out: &mut W, header: &[String]) -> std::io::Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

/// Shortest round-trip form; exponent notation for very large or small
/// magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Writes the threshold sweep as CSV, preceded by `# `-prefixed header lines.
pub fn write_threshold_csv<W: Write>(mut out: W, header: &[String], rows: &[ThresholdRow]) -> std::io::Result<()> {
    write_header(&mut out, header)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "v_th", "G_mean", "G_ci", "EUU_mean", "EUU_ci", "alpha_eff"])?;
    for r in rows {
        w.write_record([
            r.scheme.name().to_string(),
            num(r.v_th),
            num(r.g_mean),
            num(r.g_ci),
            num(r.euu_mean),
            num(r.euu_ci),
            num(r.alpha_eff),
        ])?;
    }
    w.flush()
}

/// Writes the state-count sweep as CSV; infeasible cells are empty.
pub fn write_states_csv<W: Write>(mut out: W, header: &[String], rows: &[StatesRow]) -> std::io::Result<()> {
    write_header(&mut out, header)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["I_n", "A_t", "G_min_feasible"])?;
    for r in rows {
        w.write_record([
            r.states.to_string(),
            r.query_size.to_string(),
            r.g_min_feasible.map(num).unwrap_or_default(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance() -> Instance {
        ExperimentConfig {
            num_isas: 4,
            num_attributes: 3,
            query_size: 3,
            ..ExperimentConfig::default()
        }
        .instance(0)
        .unwrap()
    }

    #[test]
    fn silent_network_never_decodes() {
        let inst = instance();
        let mode = PolicyMode::FixedAlpha(Activation::constant(4, 3, 0.0));
        let r = run_simulation(&inst, &mode, SchemeKind::Uniform, &SimSettings::new(200, 3), 0);
        assert_eq!(r.speak_rate, 0.0);
        assert!(r.failure_rate.iter().all(|&f| f == 1.0));
        assert_eq!(r.euu.mean, 0.0);
        assert_eq!(r.objective.mean, 0.0);
    }

    #[test]
    fn trace_respects_slot_invariants() {
        let inst = instance();
        let mode = PolicyMode::FixedAlpha(Activation::constant(4, 3, 0.7));
        let trace = trace_simulation(&inst, &mode, SchemeKind::SemanticsAware, &SimSettings::new(50, 9), 1);
        assert_eq!(trace.len(), 150);
        let mut estimate = vec![0usize; 3];
        for s in &trace {
            for nma in &s.nmas {
                assert_eq!(nma.decoded, nma.sinr > inst.channel.snr_threshold);
            }
            let decoded = s.nmas.iter().filter(|m| m.decoded).count();
            assert_eq!(s.quorum_reached, decoded >= inst.schedule.quorum());
            if s.quorum_reached {
                estimate[s.attribute] = s.true_state;
            }
            assert_eq!(s.reconstructed_state, estimate[s.attribute]);
            for isa in &s.isas {
                assert!(!isa.spoke || isa.generated);
            }
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let inst = instance();
        let mode = PolicyMode::Threshold(ThresholdPolicy::uniform(4, 3, 0.3));
        let s = SimSettings::new(100, 5);
        assert_eq!(
            run_simulation(&inst, &mode, SchemeKind::ChangeAware, &s, 2),
            run_simulation(&inst, &mode, SchemeKind::ChangeAware, &s, 2)
        );
    }

    #[test]
    fn estimate_half_width() {
        let e = Estimate::from_samples(&[1.0, 3.0]);
        assert_eq!(e.mean, 2.0);
        assert!((e.ci - 1.96 * (2.0f64 / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn roots_interpolate() {
        let row = |v: f64, e: f64| ThresholdRow {
            scheme: SchemeKind::Uniform,
            v_th: v,
            g_mean: 0.0,
            g_ci: 0.0,
            euu_mean: e,
            euu_ci: 0.0,
            alpha_eff: 1.0 - v,
        };
        let rows = vec![row(0.0, 0.05), row(0.5, 0.15), row(1.0, 0.0)];
        let roots = threshold_roots(&rows, SchemeKind::Uniform, 0.1);
        assert_eq!(roots.len(), 2);
        assert!((roots[0].0 - 0.25).abs() < 1e-12);
        assert!((roots[1].0 - (0.5 + 0.5 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn csv_columns() {
        let mut buf = Vec::new();
        write_states_csv(&mut buf, &["seed 1".into()], &[StatesRow { states: 4, query_size: 5, g_min_feasible: None }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# seed 1\nI_n,A_t,G_min_feasible\n4,5,\n");
    }
}
