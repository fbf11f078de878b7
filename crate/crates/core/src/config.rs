//! Scenario configuration file (TOML).
//!
//! Every section has defaults, so an empty file is a valid configuration: the
//! start-up state, no faults, default controller and monitor. See
//! `configs/reference.toml` for the ramp-fault scenario.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::MpcConfig;
use crate::monitor::{Channel, ChartKind, Direction, SetpointConfig};
use crate::plant::{
    validate_faults, FaultSpec, PlantInputs, PlantParams, PlantState, DEFAULT_SUBSTEPS,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of ticks; one telemetry record per tick.
    pub duration: u64,
    pub seed: u64,
    pub plant: PlantSection,
    pub equilibrium: EquilibriumSection,
    pub start: StartSection,
    pub nominal: NominalSection,
    pub faults: Vec<FaultSpec>,
    pub controller: MpcConfig,
    pub monitor: MonitorSection,
    pub actions: ActionSection,
    pub auto_query: Vec<AutoQueryRule>,
    pub pacing: PacingSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration: 1000,
            seed: 0,
            plant: PlantSection::default(),
            equilibrium: EquilibriumSection::default(),
            start: StartSection::default(),
            nominal: NominalSection::default(),
            faults: Vec::new(),
            controller: MpcConfig::default(),
            monitor: MonitorSection::default(),
            actions: ActionSection::default(),
            auto_query: vec![AutoQueryRule::tank_temp_high()],
            pacing: PacingSection::default(),
        }
    }
}

/// Physical coefficients. `k0` and `reaction_heat_coeff` are solved from the
/// equilibrium balances unless given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub flow_over_volume: f64,
    pub activation_temp: f64,
    pub heat_transfer_coeff: f64,
    pub noise_std_tf: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reaction_heat_coeff: Option<f64>,
    pub substeps: usize,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            flow_over_volume: 1.0,
            activation_temp: 8750.0,
            heat_transfer_coeff: 0.28,
            noise_std_tf: 1.0,
            k0: None,
            reaction_heat_coeff: None,
            substeps: DEFAULT_SUBSTEPS,
        }
    }
}

/// Operating point used for calibration and linearization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumSection {
    pub c_a: f64,
    pub temp: f64,
    pub c_af: f64,
    pub t_f: f64,
    pub t_c: f64,
}

impl Default for EquilibriumSection {
    fn default() -> Self {
        let (x, u) = (PlantState::equilibrium(), PlantInputs::equilibrium());
        Self {
            c_a: x.c_a,
            temp: x.temp,
            c_af: u.c_af,
            t_f: u.t_f,
            t_c: u.t_c,
        }
    }
}

impl EquilibriumSection {
    pub fn state(&self) -> PlantState {
        PlantState::new(0.0, self.c_a, self.temp)
    }

    pub fn inputs(&self) -> PlantInputs {
        PlantInputs::new(self.c_af, self.t_f, self.t_c)
    }
}

/// State at t = 0 and the coolant command in force before the first tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartSection {
    pub c_a: f64,
    pub temp: f64,
    pub t_c: f64,
}

impl Default for StartSection {
    fn default() -> Self {
        let (x, u) = (PlantState::initial(), PlantInputs::initial());
        Self {
            c_a: x.c_a,
            temp: x.temp,
            t_c: u.t_c,
        }
    }
}

impl StartSection {
    pub fn equilibrium() -> Self {
        let (x, u) = (PlantState::equilibrium(), PlantInputs::equilibrium());
        Self {
            c_a: x.c_a,
            temp: x.temp,
            t_c: u.t_c,
        }
    }
}

/// Nominal feed inputs before faults and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NominalSection {
    pub c_af: f64,
    pub t_f: f64,
}

impl Default for NominalSection {
    fn default() -> Self {
        Self {
            c_af: 10.0,
            t_f: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub channel: Channel,
    pub kind: ChartKind,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_k")]
    pub k_sigma: f64,
    #[serde(default = "default_confirm")]
    pub confirm: usize,
    /// Baseline mean; estimated from the calibration run when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    /// Baseline standard deviation; estimated from the calibration run when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
}

fn default_window() -> usize {
    20
}

fn default_k() -> f64 {
    3.0
}

fn default_confirm() -> usize {
    15
}

impl ChartSpec {
    pub fn new(channel: Channel, kind: ChartKind, window: usize) -> Self {
        Self {
            channel,
            kind,
            window,
            k_sigma: 3.0,
            confirm: default_confirm(),
            mu0: None,
            sigma0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSection {
    /// Length of the fault-free calibration run that supplies chart baselines.
    pub baseline_samples: usize,
    /// Seed of the calibration run; defaults to `seed + 1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_seed: Option<u64>,
    pub charts: Vec<ChartSpec>,
    pub setpoints: Vec<SetpointConfig>,
}

impl Default for MonitorSection {
    fn default() -> Self {
        Self {
            baseline_samples: 200,
            baseline_seed: None,
            charts: vec![
                ChartSpec::new(Channel::FeedTemp, ChartKind::Mean, 20),
                ChartSpec::new(Channel::FeedTemp, ChartKind::S, 20),
                ChartSpec::new(Channel::FeedTemp, ChartKind::Trend, 100),
            ],
            setpoints: vec![SetpointConfig::high(Channel::TankTemp, 373.0, 1.0).with_confirm(5)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionSection {
    /// Time constant of the feed-temperature relaxation after the heater is
    /// switched off, ticks.
    pub heater_tau: f64,
}

impl Default for ActionSection {
    fn default() -> Self {
        Self { heater_tau: 30.0 }
    }
}

/// Keywords queried automatically when an alarm on `channel` in `direction`
/// is raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoQueryRule {
    pub channel: Channel,
    pub direction: Direction,
    pub keywords: Vec<String>,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
}

fn default_depth() -> usize {
    4
}

impl AutoQueryRule {
    pub fn tank_temp_high() -> Self {
        Self {
            channel: Channel::TankTemp,
            direction: Direction::High,
            keywords: vec!["tank temperature".into(), "high".into()],
            max_depth: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacingSection {
    /// Live sessions advance this many ticks per second; 0 runs as fast as possible.
    pub ticks_per_second: f64,
}

impl ScenarioConfig {
    /// The ramp-fault scenario: start at equilibrium, 0.02 K per tick on the
    /// feed temperature from t = 200.
    pub fn reference() -> Self {
        Self {
            seed: 7,
            start: StartSection::equilibrium(),
            faults: vec![FaultSpec::ramp(
                crate::plant::InputChannel::FeedTemp,
                200.0,
                0.02,
            )],
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn params(&self) -> Result<PlantParams> {
        let p = &self.plant;
        let mut params = PlantParams::calibrate(
            p.flow_over_volume,
            p.activation_temp,
            p.heat_transfer_coeff,
            p.noise_std_tf,
            &self.equilibrium.state(),
            &self.equilibrium.inputs(),
        )?;
        if let Some(k0) = p.k0 {
            params.k0 = k0;
        }
        if let Some(beta) = p.reaction_heat_coeff {
            params.reaction_heat_coeff = beta;
        }
        params.validate()?;
        Ok(params)
    }

    pub fn start_state(&self) -> PlantState {
        PlantState::new(0.0, self.start.c_a, self.start.temp)
    }

    pub fn nominal_inputs(&self) -> PlantInputs {
        PlantInputs::new(self.nominal.c_af, self.nominal.t_f, self.start.t_c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration == 0 {
            return Err(Error::config("duration must be >= 1"));
        }
        self.params()?;
        if self.plant.substeps == 0 {
            return Err(Error::config("plant.substeps must be >= 1"));
        }
        let s = &self.start;
        if !(s.c_a.is_finite() && s.c_a >= 0.0 && s.temp.is_finite() && s.temp > 0.0) {
            return Err(Error::config("start state needs c_a >= 0 and temp > 0"));
        }
        self.controller.validate()?;
        if !(s.t_c >= self.controller.u_min && s.t_c <= self.controller.u_max) {
            return Err(Error::config(format!(
                "start coolant temperature {} outside [{}, {}]",
                s.t_c, self.controller.u_min, self.controller.u_max
            )));
        }
        let n = &self.nominal;
        if !(n.c_af.is_finite() && n.c_af >= 0.0 && n.t_f.is_finite() && n.t_f > 0.0) {
            return Err(Error::config("nominal inputs need c_af >= 0 and t_f > 0"));
        }
        validate_faults(&self.faults)?;
        let m = &self.monitor;
        let needs_baseline = m
            .charts
            .iter()
            .any(|c| c.mu0.is_none() || c.sigma0.is_none());
        if needs_baseline && m.baseline_samples < 2 {
            return Err(Error::config("monitor.baseline_samples must be >= 2"));
        }
        for c in &m.charts {
            if c.window < 2 || c.confirm == 0 || !(c.k_sigma.is_finite() && c.k_sigma >= 0.0) {
                return Err(Error::config(format!(
                    "chart {}/{:?}: window >= 2, confirm >= 1 and k_sigma >= 0 required",
                    c.channel.as_str(),
                    c.kind
                )));
            }
            if let Some(sigma) = c.sigma0 {
                if !(sigma > 0.0) && c.kind != ChartKind::Trend {
                    return Err(Error::config("chart sigma0 must be > 0"));
                }
            }
        }
        for sp in &m.setpoints {
            sp.validate()?;
        }
        if !(self.actions.heater_tau.is_finite() && self.actions.heater_tau > 0.0) {
            return Err(Error::config("actions.heater_tau must be > 0"));
        }
        for rule in &self.auto_query {
            if rule
                .keywords
                .iter()
                .all(|k| crate::text::tokens(k).is_empty())
            {
                return Err(Error::config("auto_query rule needs at least one keyword"));
            }
            if rule.max_depth == 0 {
                return Err(Error::config("auto_query max_depth must be >= 1"));
            }
        }
        if !(self.pacing.ticks_per_second.is_finite() && self.pacing.ticks_per_second >= 0.0) {
            return Err(Error::config("pacing.ticks_per_second must be >= 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.start_state(), PlantState::initial());
        assert_eq!(cfg.nominal_inputs(), PlantInputs::initial());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::reference();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn coolant_out_of_range_rejected() {
        let err = ScenarioConfig::from_toml_str("[start]\nt_c = 250.0\n").unwrap_err();
        assert!(err.to_string().contains("coolant"), "{err}");
    }

    #[test]
    fn unknown_keys_and_bad_faults_rejected() {
        assert!(ScenarioConfig::from_toml_str("durashun = 5").is_err());
        let overlapping = r#"
[[faults]]
target = "t_f"
kind = "ramp"
start_t = 200.0
slope = 0.02
[[faults]]
target = "t_f"
kind = "bias"
start_t = 300.0
magnitude = 1.0
"#;
        assert!(ScenarioConfig::from_toml_str(overlapping).is_err());
    }

    #[test]
    fn explicit_coefficients_override_calibration() {
        let cfg = ScenarioConfig::from_toml_str("[plant]\nk0 = 1.0e10\n").unwrap();
        assert_eq!(cfg.params().unwrap().k0, 1.0e10);
    }
}
