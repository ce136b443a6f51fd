//! JSON experiment configuration.
//!
//! Physical quantities carry their unit in the field name (`noise_dbm`,
//! `gamma_th_db`, `height_m`) and are converted to linear SI values once, when
//! an [`Instance`] is built. Every field has a default; the defaults describe
//! the reference deployment (10 ISAs, 4 NMAs, 10 ten-state attributes).

use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, dbm_to_watts};
use crate::effectiveness::GoEFunctions;
use crate::error::{Error, Result};
use crate::instance::{ChannelParams, Instance, ModelOptions};
use crate::model::{sample_topology, AttributeChain, GeometryConfig, MetaValueModel, QuerySchedule, Topology};
use crate::optimizer::OptimizerConfig;
use crate::policy::SchemeKind;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub height_m: f64,
    pub horizontal_sd_m: f64,
    pub jitter_m: f64,
    pub observe_prob: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = GeometryConfig::default();
        Self {
            height_m: g.height_m,
            horizontal_sd_m: g.horizontal_sd_m,
            jitter_m: g.jitter_m,
            observe_prob: g.observe_prob,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub path_loss_exponent: f64,
    pub noise_dbm: f64,
    pub gamma_th_db: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            path_loss_exponent: 3.8,
            noise_dbm: -120.0,
            gamma_th_db: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunctionSection {
    pub kappa: [f64; 3],
    pub c_h: f64,
    /// Scale of the cubic power map `P0 v^3`.
    pub p0_dbm: f64,
}

impl Default for FunctionSection {
    fn default() -> Self {
        Self {
            kappa: [1.0; 3],
            c_h: 1.0,
            p0_dbm: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub intervals: usize,
    pub seeds: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { intervals: 500, seeds: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub v_th_start: f64,
    pub v_th_stop: f64,
    pub v_th_step: f64,
    pub states_grid: Vec<usize>,
    pub query_grid: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            v_th_start: 0.0,
            v_th_stop: 1.0,
            v_th_step: 0.05,
            states_grid: vec![4, 10, 20, 50],
            query_grid: vec![5, 10],
        }
    }
}

impl SweepSection {
    pub fn v_th_grid(&self) -> Vec<f64> {
        let count = ((self.v_th_stop - self.v_th_start) / self.v_th_step + 1e-9).floor() as usize;
        (0..=count)
            .map(|i| {
                let v = self.v_th_start + i as f64 * self.v_th_step;
                (v * 1e9).round() / 1e9
            })
            .collect()
    }
}

/// Everything needed to build instances, run the optimizer, the simulator
/// and the sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub num_isas: usize,
    pub num_nmas: usize,
    pub num_attributes: usize,
    /// Decode quorum; majority `ceil((M + 1) / 2)` when absent.
    pub quorum: Option<usize>,
    /// Number of attributes queried per interval (the first ones).
    pub query_size: usize,
    pub states: usize,
    pub stay_prob: f64,
    pub accuracy: f64,
    pub euu_min: f64,
    pub geometry: GeometrySection,
    pub channel: ChannelSection,
    pub functions: FunctionSection,
    pub meta_value: MetaValueModel,
    pub model: ModelOptions,
    pub schemes: Vec<SchemeKind>,
    pub optimizer: OptimizerConfig,
    pub simulation: SimulationSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            num_isas: 10,
            num_nmas: 4,
            num_attributes: 10,
            quorum: None,
            query_size: 10,
            states: 10,
            stay_prob: 0.2,
            accuracy: 0.8,
            euu_min: 0.1,
            geometry: GeometrySection::default(),
            channel: ChannelSection::default(),
            functions: FunctionSection::default(),
            meta_value: MetaValueModel::default(),
            model: ModelOptions::default(),
            schemes: vec![SchemeKind::Uniform, SchemeKind::ChangeAware, SchemeKind::SemanticsAware],
            optimizer: OptimizerConfig::default(),
            simulation: SimulationSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry_config().validate()?;
        let quorum = self.quorum();
        if quorum == 0 || quorum > self.num_nmas {
            return Err(Error::invalid("quorum", format!("must lie in [1, {}]", self.num_nmas)));
        }
        if self.query_size > self.num_attributes {
            return Err(Error::invalid("query_size", "cannot exceed num_attributes"));
        }
        if self.states < 2 {
            return Err(Error::invalid("states", "must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.stay_prob) {
            return Err(Error::invalid("stay_prob", "must lie in [0, 1]"));
        }
        if !(self.euu_min > 0.0) {
            return Err(Error::invalid("euu_min", "must be positive"));
        }
        if !(2.0..7.0).contains(&self.channel.path_loss_exponent) {
            return Err(Error::invalid("channel.path_loss_exponent", "must lie in [2, 7)"));
        }
        MetaValueModel::new(self.meta_value.shape_a, self.meta_value.shape_b)?;
        self.goe_functions().validate()?;
        self.optimizer.validate()?;
        if self.simulation.intervals == 0 {
            return Err(Error::invalid("simulation.intervals", "must be at least 1"));
        }
        if self.simulation.seeds == 0 {
            return Err(Error::invalid("simulation.seeds", "must be at least 1"));
        }
        if !(self.sweep.v_th_step > 0.0) || self.sweep.v_th_start > self.sweep.v_th_stop {
            return Err(Error::invalid("sweep.v_th_step", "grid must be increasing with a positive step"));
        }
        if self.schemes.is_empty() {
            return Err(Error::invalid("schemes", "at least one scheme is required"));
        }
        Ok(())
    }

    pub fn quorum(&self) -> usize {
        self.quorum.unwrap_or_else(|| QuerySchedule::majority(self.num_nmas))
    }

    pub fn geometry_config(&self) -> GeometryConfig {
        GeometryConfig {
            num_isas: self.num_isas,
            num_nmas: self.num_nmas,
            num_attributes: self.num_attributes,
            height_m: self.geometry.height_m,
            horizontal_sd_m: self.geometry.horizontal_sd_m,
            jitter_m: self.geometry.jitter_m,
            observe_prob: self.geometry.observe_prob,
            accuracy: self.accuracy,
        }
    }

    pub fn channel_params(&self) -> ChannelParams {
        ChannelParams {
            path_loss_exponent: self.channel.path_loss_exponent,
            noise_power_w: dbm_to_watts(self.channel.noise_dbm),
            snr_threshold: db_to_linear(self.channel.gamma_th_db),
        }
    }

    pub fn goe_functions(&self) -> GoEFunctions {
        GoEFunctions {
            kappa: self.functions.kappa,
            c_h: self.functions.c_h,
            p0_w: dbm_to_watts(self.functions.p0_dbm),
        }
    }

    /// The deployment used by Monte Carlo replicate `replicate`.
    pub fn topology(&self, replicate: u64) -> Result<Topology> {
        let mut rng = substream(self.seed, &[0x7090, replicate]);
        sample_topology(&self.geometry_config(), &mut rng)
    }

    pub fn chains(&self) -> Result<Vec<AttributeChain>> {
        (0..self.num_attributes)
            .map(|n| AttributeChain::new(n, self.states, self.stay_prob))
            .collect()
    }

    pub fn schedule(&self) -> Result<QuerySchedule> {
        QuerySchedule::new((0..self.query_size).collect(), self.quorum(), self.num_attributes, self.num_nmas)
    }

    pub fn instance_on(&self, topology: Topology) -> Result<Instance> {
        Instance::new(
            topology,
            self.chains()?,
            self.schedule()?,
            self.channel_params(),
            self.goe_functions(),
            self.meta_value,
            self.euu_min,
            self.model,
        )
    }

    /// Analytical instance for replicate `replicate`.
    pub fn instance(&self, replicate: u64) -> Result<Instance> {
        self.instance_on(self.topology(replicate)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("config validation failed: {0}")]
    Invalid(Error),
}
