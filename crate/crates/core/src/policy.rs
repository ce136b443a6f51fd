//! Update-generation schemes, generation probabilities and the meta-value
//! threshold rule, plus the ISA-local estimate of the activation
//! probabilities.

use std::collections::HashMap;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::{markov_bound_from_rates, signal_rate, success_from_rates_factored};
use crate::effectiveness::{DeliveryModel, ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::instance::{Activation, Instance};
use crate::model::{slant_distance, AttributeChain, MetaValueModel};
use crate::optimizer::{solve_algorithm1, OptimizerConfig, Solution};
use crate::rng::substream;

/// When an ISA produces an update for a queried attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// Every slot.
    Uniform,
    /// When the attribute's state differs from the previous interval.
    #[serde(alias = "change")]
    ChangeAware,
    /// When the attribute's state differs from the last decoded state.
    #[serde(alias = "semantics")]
    SemanticsAware,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::Uniform, SchemeKind::ChangeAware, SchemeKind::SemanticsAware];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Uniform => "uniform",
            SchemeKind::ChangeAware => "change-aware",
            SchemeKind::SemanticsAware => "semantics-aware",
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SchemeKind::Uniform),
            "change" | "change-aware" => Ok(SchemeKind::ChangeAware),
            "semantics" | "semantics-aware" => Ok(SchemeKind::SemanticsAware),
            other => Err(Error::invalid("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

/// Generation bookkeeping shared by the ISAs: the state every attribute had
/// in the previous interval and the last state decoded by the NMAs.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionScheme {
    pub kind: SchemeKind,
    pub previous: Vec<Option<usize>>,
    pub last_decoded: Vec<usize>,
}

impl AcquisitionScheme {
    pub fn new(kind: SchemeKind, num_attributes: usize) -> Self {
        Self {
            kind,
            previous: vec![None; num_attributes],
            last_decoded: vec![0; num_attributes],
        }
    }

    /// Whether an observer of attribute `n` generates an update when the
    /// attribute is in `state`.
    pub fn generates(&self, n: usize, state: usize) -> bool {
        match self.kind {
            SchemeKind::Uniform => true,
            SchemeKind::ChangeAware => self.previous[n].is_some_and(|s| s != state),
            SchemeKind::SemanticsAware => self.last_decoded[n] != state,
        }
    }

    pub fn record_state(&mut self, n: usize, state: usize) {
        self.previous[n] = Some(state);
    }

    pub fn record_decoded(&mut self, n: usize, state: usize) {
        self.last_decoded[n] = state;
    }
}

/// Probability that an observer of the attribute generates an update in a
/// slot; zero for non-observers. Clamped to `[0, 1]`.
pub fn generation_probability(scheme: SchemeKind, chain: &AttributeChain, error_prob: f64, observes: bool) -> f64 {
    if !observes {
        return 0.0;
    }
    let change = chain.change_prob();
    let beta = match scheme {
        SchemeKind::Uniform => 1.0,
        SchemeKind::ChangeAware => change,
        SchemeKind::SemanticsAware => error_prob * (1.0 - chain.states() as f64 * chain.move_prob()) + change,
    };
    beta.clamp(0.0, 1.0)
}

/// Meta-value threshold that realizes activation `alpha` on top of
/// generation probability `beta`.
pub fn threshold_from_alpha(alpha: f64, beta: f64, meta: &MetaValueModel) -> f64 {
    let beta = beta.max(0.0);
    if beta <= 0.0 {
        return 1.0;
    }
    meta.inverse_cdf(1.0 - (alpha / beta).min(1.0))
}

pub fn decide_speak(v_th: f64, generated: bool, v: f64) -> bool {
    generated && v > v_th
}

/// Per-(ISA, attribute) thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub v_th: Vec<Vec<f64>>,
}

impl ThresholdPolicy {
    pub fn uniform(num_isas: usize, num_attributes: usize, v_th: f64) -> Self {
        Self {
            v_th: vec![vec![v_th; num_attributes]; num_isas],
        }
    }

    pub fn speaks(&self, k: usize, n: usize, generated: bool, v: f64) -> bool {
        decide_speak(self.v_th[k][n], generated, v)
    }

    /// Thresholds for activation matrix `alpha` and per-attribute generation
    /// probabilities `beta`.
    pub fn from_alpha(instance: &Instance, alpha: &Activation, beta: &[f64]) -> Self {
        let k_count = instance.num_isas();
        let n_count = instance.num_attributes();
        let mut v_th = vec![vec![1.0; n_count]; k_count];
        for n in 0..n_count {
            for &k in instance.topology.observers(n) {
                v_th[k][n] = threshold_from_alpha(alpha.get(k, n), beta[n], &instance.meta);
            }
        }
        Self { v_th }
    }
}

/// Analytical per-attribute generation probabilities under `scheme` when the
/// ISAs target activation `alpha`.
///
/// The semantics-aware rate depends on the error probability, which depends
/// on the effective activation `min(alpha, beta)`; the pair is iterated
/// `iterations` times starting from `beta = 1`.
pub fn scheme_betas(instance: &Instance, scheme: SchemeKind, alpha: &Activation, iterations: usize) -> Vec<f64> {
    let n_count = instance.num_attributes();
    let chain_beta = |n: usize, pe: f64| generation_probability(scheme, &instance.chains[n], pe, true);
    let mut beta: Vec<f64> = (0..n_count).map(|n| chain_beta(n, 1.0)).collect();
    if scheme != SchemeKind::SemanticsAware {
        return beta;
    }
    beta.fill(1.0);
    for _ in 0..iterations {
        let mut eff = alpha.clone();
        for (k, row) in eff.0.iter_mut().enumerate() {
            for (n, a) in row.iter_mut().enumerate() {
                if instance.topology.observes(k, n) {
                    *a = a.min(beta[n]);
                }
            }
        }
        for j in 0..instance.slots() {
            let n = instance.schedule.attribute_at(j);
            beta[n] = chain_beta(n, instance.slot_error(&eff, j));
        }
    }
    beta
}

/// How an ISA replaces the success probabilities it cannot compute exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LocalSurrogate {
    /// Exact success probability averaged over sampled peer geometries.
    #[default]
    PeerAverage,
    /// Markov upper bound averaged over sampled peer geometries.
    MarkovBound,
}

/// What an ISA knows about its peers: their horizontal-offset distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeerKnowledge {
    pub horizontal_sd_m: f64,
    pub draws: usize,
    pub surrogate: LocalSurrogate,
}

impl Default for PeerKnowledge {
    fn default() -> Self {
        Self {
            horizontal_sd_m: 60.0,
            draws: 1000,
            surrogate: LocalSurrogate::PeerAverage,
        }
    }
}

/// Per-NMA success probabilities seen by ISA `k` for attribute `n`, averaged
/// over peer placements. Peers are exchangeable, so the average only depends
/// on `k`'s own role and the numbers of correct and incorrect peers.
struct PeerAverager<'a> {
    instance: &'a Instance,
    own: Option<usize>,
    /// `peer_distances[m][draw][slot]`.
    peer_distances: Vec<Vec<Vec<f64>>>,
    power: f64,
    surrogate: LocalSurrogate,
    cache: HashMap<(u8, usize, usize), Vec<f64>>,
}

impl<'a> PeerAverager<'a> {
    fn new(instance: &'a Instance, own: Option<usize>, peers: usize, knowledge: &PeerKnowledge, seed: u64, stream: &[u64]) -> Result<Self> {
        let mut rng = substream(seed, stream);
        let normal = Normal::new(0.0, knowledge.horizontal_sd_m).map_err(|e| Error::invalid("horizontal_sd_m", e.to_string()))?;
        let height = instance.topology.height_m();
        let m_count = instance.topology.num_nmas();
        let peer_distances = (0..m_count)
            .map(|_| {
                (0..knowledge.draws.max(1))
                    .map(|_| {
                        (0..peers)
                            .map(|_| {
                                let x: f64 = normal.sample(&mut rng);
                                slant_distance(x.abs(), height)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            instance,
            own,
            peer_distances,
            power: instance.funcs.tx_power(instance.meta.mean()),
            surrogate: knowledge.surrogate,
            cache: HashMap::new(),
        })
    }

    fn gamma(&mut self, correct: &[usize], incorrect: &[usize]) -> Result<Vec<f64>> {
        let own_role = match self.own {
            Some(k) if correct.contains(&k) => 1u8,
            Some(k) if incorrect.contains(&k) => 2u8,
            _ => 0u8,
        };
        let own_c = usize::from(own_role == 1);
        let own_i = usize::from(own_role == 2);
        let key = (own_role, correct.len() - own_c, incorrect.len() - own_i);
        if let Some(v) = self.cache.get(&key) {
            return Ok(v.clone());
        }
        let ch = self.instance.channel;
        let (peer_c, peer_i) = (key.1, key.2);
        let mut out = Vec::with_capacity(self.peer_distances.len());
        for (m, draws) in self.peer_distances.iter().enumerate() {
            let mut acc = 0.0;
            let mut signal = Vec::with_capacity(peer_c + 1);
            let mut interference = Vec::with_capacity(peer_i + 1);
            for d in draws {
                signal.clear();
                interference.clear();
                let own_rate = self
                    .own
                    .map(|k| signal_rate(self.instance.topology.distance(k, m), ch.path_loss_exponent, self.power));
                if own_role == 1 {
                    signal.extend(own_rate);
                }
                if own_role == 2 {
                    interference.extend(own_rate.map(|r| r / ch.snr_threshold));
                }
                signal.extend(d[..peer_c].iter().map(|&x| signal_rate(x, ch.path_loss_exponent, self.power)));
                interference.extend(
                    d[peer_c..peer_c + peer_i]
                        .iter()
                        .map(|&x| signal_rate(x, ch.path_loss_exponent, self.power) / ch.snr_threshold),
                );
                acc += match self.surrogate {
                    LocalSurrogate::PeerAverage => success_from_rates_factored(&signal, &interference, ch.snr_threshold, ch.noise_power_w)?,
                    LocalSurrogate::MarkovBound => markov_bound_from_rates(&signal, &interference, ch.snr_threshold, ch.noise_power_w),
                };
            }
            out.push(acc / draws.len() as f64);
        }
        self.cache.insert(key, out.clone());
        Ok(out)
    }
}

/// The instance as seen by ISA `k`: success probabilities averaged over the
/// unknown placements of the other observers.
pub fn local_instance(instance: &Instance, k: usize, knowledge: &PeerKnowledge, seed: u64) -> Result<Instance> {
    let topo = &instance.topology;
    let mut models = Vec::with_capacity(instance.slots());
    for j in 0..instance.slots() {
        let n = instance.schedule.attribute_at(j);
        let observers = topo.observers(n);
        let own = observers.contains(&k).then_some(k);
        let peers = observers.len() - usize::from(own.is_some());
        let mut averager = PeerAverager::new(instance, own, peers, knowledge, seed, &[0x10ca1, k as u64, n as u64])?;
        models.push(DeliveryModel::build(
            n,
            topo,
            instance.schedule.quorum(),
            instance.options.quorum_rule,
            ENUMERATION_CAP,
            |c, i| averager.gamma(c, i),
        )?);
    }
    Instance::with_delivery(
        instance.topology.clone(),
        instance.chains.clone(),
        instance.schedule.clone(),
        instance.channel,
        instance.funcs,
        instance.meta,
        instance.euu_min,
        instance.options,
        models,
    )
}

/// ISA `k`'s own estimate of the optimal activation probabilities, obtained
/// by solving the problem on [`local_instance`]. Only row `k` of the returned
/// solution is meant to be used.
pub fn estimate_alpha_locally(instance: &Instance, k: usize, knowledge: &PeerKnowledge, config: &OptimizerConfig, seed: u64) -> Result<Solution> {
    if k >= instance.num_isas() {
        return Err(Error::invalid("k", "ISA index out of range"));
    }
    let local = local_instance(instance, k, knowledge, seed)?;
    solve_algorithm1(&local, config)
}
