//! A fully specified problem instance for one service interval and the
//! evaluation of every effectiveness quantity on it.

use serde::{Deserialize, Serialize};

use crate::channel::LinkBudget;
use crate::effectiveness::{
    steady_state_error, DeliveryModel, ErrorLaw, FailureScale, FeatureReport, GoEFunctions, QuorumRule, Weights,
    ENUMERATION_CAP,
};
use crate::error::{Error, Result};
use crate::model::{AttributeChain, MetaValueModel, QuerySchedule, Topology};

/// Physical channel parameters shared by every link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub path_loss_exponent: f64,
    pub noise_power_w: f64,
    pub snr_threshold: f64,
}

/// Modelling switches that select between printed and derived forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ModelOptions {
    pub failure_scale: FailureScale,
    pub quorum_rule: QuorumRule,
    pub error_law: ErrorLaw,
}

/// Activation probabilities `alpha[k][n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activation(pub Vec<Vec<f64>>);

impl Activation {
    pub fn constant(num_isas: usize, num_attributes: usize, value: f64) -> Self {
        Activation(vec![vec![value; num_attributes]; num_isas])
    }

    pub fn get(&self, k: usize, n: usize) -> f64 {
        self.0[k][n]
    }

    pub fn set(&mut self, k: usize, n: usize, value: f64) {
        self.0[k][n] = value;
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub topology: Topology,
    /// One chain per attribute, indexed by attribute.
    pub chains: Vec<AttributeChain>,
    pub schedule: QuerySchedule,
    pub channel: ChannelParams,
    pub funcs: GoEFunctions,
    pub meta: MetaValueModel,
    pub euu_min: f64,
    /// `values[j][k]`: meta value of ISA `k`'s update in slot `j`.
    pub values: Vec<Vec<f64>>,
    pub options: ModelOptions,
    delivery: Vec<DeliveryModel>,
}

impl Instance {
    /// Builds the instance and tabulates the delivery models using the
    /// mean-value transmit power `f_rho(E[V])` for every ISA.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        topology: Topology,
        chains: Vec<AttributeChain>,
        schedule: QuerySchedule,
        channel: ChannelParams,
        funcs: GoEFunctions,
        meta: MetaValueModel,
        euu_min: f64,
        options: ModelOptions,
    ) -> Result<Self> {
        let budget = LinkBudget::uniform(
            channel.path_loss_exponent,
            channel.noise_power_w,
            channel.snr_threshold,
            topology.num_isas(),
            funcs.tx_power(meta.mean()),
        )?;
        let delivery = schedule
            .attributes()
            .iter()
            .map(|&n| DeliveryModel::from_budget(n, &topology, &budget, schedule.quorum(), options.quorum_rule, ENUMERATION_CAP))
            .collect::<Result<Vec<_>>>()?;
        Self::with_delivery(topology, chains, schedule, channel, funcs, meta, euu_min, options, delivery)
    }

    /// Builds the instance around externally tabulated delivery models, one
    /// per slot.
    #[allow(clippy::too_many_arguments)]
    pub fn with_delivery(
        topology: Topology,
        chains: Vec<AttributeChain>,
        schedule: QuerySchedule,
        channel: ChannelParams,
        funcs: GoEFunctions,
        meta: MetaValueModel,
        euu_min: f64,
        options: ModelOptions,
        delivery: Vec<DeliveryModel>,
    ) -> Result<Self> {
        funcs.validate()?;
        if !(euu_min >= 0.0) {
            return Err(Error::invalid("euu_min", "must be nonnegative"));
        }
        if chains.len() != topology.num_attributes() {
            return Err(Error::invalid("chains", "one chain per attribute is required"));
        }
        if delivery.len() != schedule.slots() {
            return Err(Error::invalid("delivery", "one delivery model per slot is required"));
        }
        let mean = meta.mean();
        let values = vec![vec![mean; topology.num_isas()]; schedule.slots()];
        Ok(Self {
            topology,
            chains,
            schedule,
            channel,
            funcs,
            meta,
            euu_min,
            values,
            options,
            delivery,
        })
    }

    pub fn num_isas(&self) -> usize {
        self.topology.num_isas()
    }

    pub fn num_attributes(&self) -> usize {
        self.topology.num_attributes()
    }

    pub fn slots(&self) -> usize {
        self.schedule.slots()
    }

    pub fn delivery(&self, j: usize) -> &DeliveryModel {
        &self.delivery[j]
    }

    pub fn delivery_models(&self) -> &[DeliveryModel] {
        &self.delivery
    }

    /// Link budget with the mean-value power used by the analytics.
    pub fn analytic_budget(&self) -> LinkBudget {
        LinkBudget {
            path_loss_exponent: self.channel.path_loss_exponent,
            noise_power_w: self.channel.noise_power_w,
            snr_threshold: self.channel.snr_threshold,
            tx_power_w: vec![self.funcs.tx_power(self.meta.mean()); self.num_isas()],
        }
    }

    pub fn set_values(&mut self, values: Vec<Vec<f64>>) -> Result<()> {
        if values.len() != self.slots() || values.iter().any(|r| r.len() != self.num_isas()) {
            return Err(Error::invalid("values", "must be a slots x K matrix"));
        }
        if values.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("values", "meta values must lie in [0, 1]"));
        }
        self.values = values;
        Ok(())
    }

    /// Activation probabilities of slot `j`'s observers, in observer order.
    pub fn slot_alpha(&self, alpha: &Activation, j: usize) -> Vec<f64> {
        let n = self.schedule.attribute_at(j);
        self.delivery[j].observers().iter().map(|&k| alpha.get(k, n)).collect()
    }

    /// `sum_j sum_{k in K_n} alpha_{k,n} v_{k,j}`.
    pub fn usefulness_sum(&self, alpha: &Activation) -> f64 {
        (0..self.slots())
            .map(|j| {
                let n = self.schedule.attribute_at(j);
                self.topology
                    .observers(n)
                    .iter()
                    .map(|&k| alpha.get(k, n) * self.values[j][k])
                    .sum::<f64>()
            })
            .sum()
    }

    /// `sum_j sum_{k in K_n} h(alpha_{k,n} f_rho(v) / v)`.
    pub fn resource_sum(&self, alpha: &Activation) -> f64 {
        (0..self.slots())
            .map(|j| {
                let n = self.schedule.attribute_at(j);
                self.topology
                    .observers(n)
                    .iter()
                    .map(|&k| self.funcs.h(alpha.get(k, n) * self.funcs.power_per_value(self.values[j][k])))
                    .sum::<f64>()
            })
            .sum()
    }

    /// Delivery-failure probability of slot `j`.
    pub fn slot_failure(&self, alpha: &Activation, j: usize) -> f64 {
        self.delivery[j].failure(&self.slot_alpha(alpha, j), self.options.failure_scale)
    }

    pub fn slot_error(&self, alpha: &Activation, j: usize) -> f64 {
        let n = self.schedule.attribute_at(j);
        steady_state_error(&self.chains[n], self.slot_failure(alpha, j), self.options.error_law)
    }

    /// Evaluates every feature and the weighted objective.
    pub fn evaluate(&self, alpha: &Activation, weights: Weights) -> FeatureReport {
        let f1 = self.usefulness_sum(alpha);
        let f2 = self.resource_sum(alpha);
        let failure: Vec<f64> = (0..self.slots()).map(|j| self.slot_failure(alpha, j)).collect();
        let success: Vec<f64> = failure.iter().map(|e| 1.0 - e).collect();
        let error: Vec<f64> = (0..self.slots())
            .map(|j| {
                let n = self.schedule.attribute_at(j);
                steady_state_error(&self.chains[n], failure[j], self.options.error_law)
            })
            .collect();
        let success_others = (0..self.slots())
            .map(|j| success.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, s)| s).product())
            .collect();
        let prod: f64 = success.iter().product();
        let ede = f1 * error.iter().sum::<f64>();
        let erc = f2 * prod;
        let euu = f1 * prod;
        let objective = weights.w1 * self.funcs.g(1, ede) + weights.w2 * self.funcs.g(2, erc);
        FeatureReport {
            f1,
            f2,
            ede,
            erc,
            euu,
            objective,
            failure,
            success,
            success_others,
            error,
        }
    }

    /// `g3(EUU) - EUU_min`; nonnegative when the constraint holds.
    pub fn constraint_slack(&self, report: &FeatureReport) -> f64 {
        self.funcs.g(3, report.euu) - self.euu_min
    }
}

/// Effective discrepancy error `F1 * sum_n P_e,n`.
pub fn ede(instance: &Instance, alpha: &Activation) -> f64 {
    instance.evaluate(alpha, Weights::balanced()).ede
}

/// Effective resource consumption `F2 * prod_n S_n`.
pub fn erc(instance: &Instance, alpha: &Activation) -> f64 {
    instance.evaluate(alpha, Weights::balanced()).erc
}

/// Effective utility of updates `F1 * prod_n S_n`.
pub fn euu(instance: &Instance, alpha: &Activation) -> f64 {
    instance.evaluate(alpha, Weights::balanced()).euu
}

/// Delivery-failure probability of attribute `n` (which must be queried).
pub fn delivery_failure_prob(instance: &Instance, n: usize, alpha: &Activation) -> Result<f64> {
    let j = instance
        .schedule
        .attributes()
        .iter()
        .position(|&a| a == n)
        .ok_or_else(|| Error::invalid("attribute", format!("attribute {n} is not queried")))?;
    Ok(instance.slot_failure(alpha, j))
}
