//! Nonlinear CSTR dynamics, feed-temperature noise and input fault injection.
//!
//! The reactor runs an exothermic first-order reaction A -> B:
//!
//! ```text
//! dC_A/dt = (F/V)(C_Af - C_A) - k(T) C_A
//! dT/dt   = (F/V)(T_f - T) + alpha (T_c - T) + beta k(T) C_A
//! k(T)    = k0 exp(-(E/R) / T)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lower bound of the jacket coolant temperature, K.
pub const COOLANT_MIN: f64 = 276.0;
/// Upper bound of the jacket coolant temperature, K.
pub const COOLANT_MAX: f64 = 322.0;

/// Classical RK4 substeps per telemetry tick.
pub const DEFAULT_SUBSTEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub t: f64,
    /// Reagent concentration in the reactor, kmol/m^3.
    pub c_a: f64,
    /// Reactor temperature, K.
    pub temp: f64,
}

impl PlantState {
    pub fn new(t: f64, c_a: f64, temp: f64) -> Self {
        Self { t, c_a, temp }
    }

    /// Start-up state: c_a = 8.5 kmol/m^3, T = 311 K.
    pub fn initial() -> Self {
        Self::new(0.0, 8.5, 311.0)
    }

    /// Operating point: c_a = 2 kmol/m^3, T = 373 K.
    pub fn equilibrium() -> Self {
        Self::new(0.0, 2.0, 373.0)
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.c_a.is_finite() && self.temp.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantInputs {
    /// Feed concentration, kmol/m^3.
    pub c_af: f64,
    /// Feed temperature, K.
    pub t_f: f64,
    /// Jacket coolant temperature, K.
    pub t_c: f64,
}

impl PlantInputs {
    pub fn new(c_af: f64, t_f: f64, t_c: f64) -> Self {
        Self { c_af, t_f, t_c }
    }

    pub fn initial() -> Self {
        Self::new(10.0, 300.0, 292.0)
    }

    pub fn equilibrium() -> Self {
        Self::new(10.0, 300.0, 299.0)
    }

    /// Coolant clamped to `[COOLANT_MIN, COOLANT_MAX]`, concentration floored at 0.
    pub fn clamped(self) -> Self {
        Self {
            c_af: self.c_af.max(0.0),
            t_f: self.t_f,
            t_c: self.t_c.clamp(COOLANT_MIN, COOLANT_MAX),
        }
    }

    pub fn get(&self, channel: InputChannel) -> f64 {
        match channel {
            InputChannel::FeedConc => self.c_af,
            InputChannel::FeedTemp => self.t_f,
            InputChannel::CoolantTemp => self.t_c,
        }
    }

    pub fn set(&mut self, channel: InputChannel, value: f64) {
        match channel {
            InputChannel::FeedConc => self.c_af = value,
            InputChannel::FeedTemp => self.t_f = value,
            InputChannel::CoolantTemp => self.t_c = value,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.c_af.is_finite() && self.t_f.is_finite() && self.t_c.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// F/V, 1/time.
    pub flow_over_volume: f64,
    /// Pre-exponential rate factor, 1/time.
    pub k0: f64,
    /// E/R, K.
    pub activation_temp: f64,
    /// alpha = UA/(V rho C_p), 1/time.
    pub heat_transfer_coeff: f64,
    /// beta = (-dH)/(rho C_p), K m^3/kmol.
    pub reaction_heat_coeff: f64,
    /// Standard deviation of the feed temperature disturbance, K.
    pub noise_std_tf: f64,
}

impl PlantParams {
    /// Solves the two steady-state balances for `k0` and `beta` so that
    /// `(x_eq, u_eq)` is an exact equilibrium.
    pub fn calibrate(
        flow_over_volume: f64,
        activation_temp: f64,
        heat_transfer_coeff: f64,
        noise_std_tf: f64,
        x_eq: &PlantState,
        u_eq: &PlantInputs,
    ) -> Result<Self> {
        let all = [
            flow_over_volume,
            activation_temp,
            heat_transfer_coeff,
            noise_std_tf,
            x_eq.c_a,
            x_eq.temp,
            u_eq.c_af,
            u_eq.t_f,
            u_eq.t_c,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("calibration inputs must be finite"));
        }
        if x_eq.c_a <= 0.0 || x_eq.c_a >= u_eq.c_af {
            return Err(Error::config(
                "equilibrium concentration must lie strictly between 0 and the feed concentration",
            ));
        }
        // Mass balance: (F/V)(C_Af - C_A) = k(T) C_A
        let k_eq = flow_over_volume * (u_eq.c_af - x_eq.c_a) / x_eq.c_a;
        let k0 = k_eq * (activation_temp / x_eq.temp).exp();
        // Energy balance: (F/V)(T_f - T) + alpha (T_c - T) + beta k C_A = 0
        let sensible = flow_over_volume * (u_eq.t_f - x_eq.temp)
            + heat_transfer_coeff * (u_eq.t_c - x_eq.temp);
        let reaction_heat_coeff = -sensible / (k_eq * x_eq.c_a);
        let params = Self {
            flow_over_volume,
            k0,
            activation_temp,
            heat_transfer_coeff,
            reaction_heat_coeff,
            noise_std_tf,
        };
        params.validate()?;
        Ok(params)
    }

    /// F/V = 1, E/R = 8750 K, alpha = 0.28, calibrated to the operating point.
    pub fn reference() -> Self {
        Self::calibrate(
            1.0,
            8750.0,
            0.28,
            1.0,
            &PlantState::equilibrium(),
            &PlantInputs::equilibrium(),
        )
        .expect("reference calibration is well-posed")
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            ("flow_over_volume", self.flow_over_volume),
            ("k0", self.k0),
            ("activation_temp", self.activation_temp),
            ("heat_transfer_coeff", self.heat_transfer_coeff),
            ("reaction_heat_coeff", self.reaction_heat_coeff),
        ];
        for (name, v) in coeffs {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !(self.noise_std_tf.is_finite() && self.noise_std_tf >= 0.0) {
            return Err(Error::config("noise_std_tf must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn rate_constant(&self, temp: f64) -> f64 {
        self.k0 * (-self.activation_temp / temp).exp()
    }
}

impl Default for PlantParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Time derivatives of the two state components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub d_c_a: f64,
    pub d_temp: f64,
}

impl Rates {
    pub fn norm(&self) -> f64 {
        self.d_c_a.hypot(self.d_temp)
    }
}

pub fn derivatives(
    state: &PlantState,
    inputs: &PlantInputs,
    params: &PlantParams,
) -> Result<Rates> {
    if !state.is_finite() || !inputs.is_finite() {
        return Err(Error::domain(format!(
            "non-finite plant state or inputs: {state:?} {inputs:?}"
        )));
    }
    if state.temp <= 0.0 {
        return Err(Error::domain(format!(
            "reactor temperature must be > 0 K, got {}",
            state.temp
        )));
    }
    Ok(rates_unchecked(state.c_a, state.temp, inputs, params))
}

#[inline]
fn rates_unchecked(c_a: f64, temp: f64, u: &PlantInputs, p: &PlantParams) -> Rates {
    let reaction = p.rate_constant(temp) * c_a;
    Rates {
        d_c_a: p.flow_over_volume * (u.c_af - c_a) - reaction,
        d_temp: p.flow_over_volume * (u.t_f - temp)
            + p.heat_transfer_coeff * (u.t_c - temp)
            + p.reaction_heat_coeff * reaction,
    }
}

/// Advances the state by `dt` with [`DEFAULT_SUBSTEPS`] classical RK4 substeps.
pub fn step_rk4(
    state: &PlantState,
    inputs: &PlantInputs,
    params: &PlantParams,
    dt: f64,
) -> Result<PlantState> {
    integrate_rk4(state, inputs, params, dt, DEFAULT_SUBSTEPS)
}

/// Advances the state by `dt` using `substeps` equal classical RK4 steps.
/// Inputs are held constant over the interval.
pub fn integrate_rk4(
    state: &PlantState,
    inputs: &PlantInputs,
    params: &PlantParams,
    dt: f64,
    substeps: usize,
) -> Result<PlantState> {
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::invalid(format!(
            "dt must be finite and >= 0, got {dt}"
        )));
    }
    if substeps == 0 {
        return Err(Error::invalid("substeps must be >= 1"));
    }
    // validates finiteness once up front
    derivatives(state, inputs, params)?;
    if dt == 0.0 {
        return Ok(*state);
    }
    let h = dt / substeps as f64;
    let (mut c, mut temp) = (state.c_a, state.temp);
    for _ in 0..substeps {
        let k1 = rates_unchecked(c, temp, inputs, params);
        let k2 = rates_unchecked(
            c + 0.5 * h * k1.d_c_a,
            temp + 0.5 * h * k1.d_temp,
            inputs,
            params,
        );
        let k3 = rates_unchecked(
            c + 0.5 * h * k2.d_c_a,
            temp + 0.5 * h * k2.d_temp,
            inputs,
            params,
        );
        let k4 = rates_unchecked(c + h * k3.d_c_a, temp + h * k3.d_temp, inputs, params);
        c += h / 6.0 * (k1.d_c_a + 2.0 * k2.d_c_a + 2.0 * k3.d_c_a + k4.d_c_a);
        temp += h / 6.0 * (k1.d_temp + 2.0 * k2.d_temp + 2.0 * k3.d_temp + k4.d_temp);
    }
    let next = PlantState::new(state.t + dt, c, temp);
    if !next.is_finite() || next.temp <= 0.0 {
        return Err(Error::Divergence {
            t: next.t,
            detail: format!("state left the physical domain: c_a={c}, temp={temp}"),
        });
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InputChannel {
    #[serde(rename = "c_af")]
    FeedConc,
    #[serde(rename = "t_f")]
    FeedTemp,
    #[serde(rename = "t_c")]
    CoolantTemp,
}

impl InputChannel {
    pub fn as_str(&self) -> &'static str {
        match self {
            InputChannel::FeedConc => "c_af",
            InputChannel::FeedTemp => "t_f",
            InputChannel::CoolantTemp => "t_c",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaultKind {
    /// Adds `slope * (t - start_t)`.
    Ramp { slope: f64 },
    /// Adds a constant offset.
    Bias { magnitude: f64 },
    /// Freezes the channel at `magnitude`.
    Stuck { magnitude: f64 },
}

/// An input fault active on `[start_t, end_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFault", into = "RawFault")]
pub struct FaultSpec {
    pub target: InputChannel,
    pub kind: FaultKind,
    pub start_t: f64,
    pub end_t: Option<f64>,
}

impl FaultSpec {
    pub fn ramp(target: InputChannel, start_t: f64, slope: f64) -> Self {
        Self {
            target,
            kind: FaultKind::Ramp { slope },
            start_t,
            end_t: None,
        }
    }

    pub fn bias(target: InputChannel, start_t: f64, magnitude: f64) -> Self {
        Self {
            target,
            kind: FaultKind::Bias { magnitude },
            start_t,
            end_t: None,
        }
    }

    pub fn stuck(target: InputChannel, start_t: f64, magnitude: f64) -> Self {
        Self {
            target,
            kind: FaultKind::Stuck { magnitude },
            start_t,
            end_t: None,
        }
    }

    pub fn until(mut self, end_t: f64) -> Self {
        self.end_t = Some(end_t);
        self
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start_t && self.end_t.is_none_or(|end| t < end)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start_t.is_finite() && self.start_t >= 0.0) {
            return Err(Error::config(format!(
                "fault start_t must be >= 0, got {}",
                self.start_t
            )));
        }
        if let Some(end) = self.end_t {
            if !(end.is_finite() && end > self.start_t) {
                return Err(Error::config(format!(
                    "fault end_t must exceed start_t ({} <= {})",
                    end, self.start_t
                )));
            }
        }
        let value = match self.kind {
            FaultKind::Ramp { slope } => slope,
            FaultKind::Bias { magnitude } | FaultKind::Stuck { magnitude } => magnitude,
        };
        if !value.is_finite() {
            return Err(Error::config("fault parameters must be finite"));
        }
        Ok(())
    }

    fn overlaps(&self, other: &FaultSpec) -> bool {
        let end_a = self.end_t.unwrap_or(f64::INFINITY);
        let end_b = other.end_t.unwrap_or(f64::INFINITY);
        self.start_t < end_b && other.start_t < end_a
    }
}

/// Serialized form: `{ target, kind = "ramp"|"bias"|"stuck", start_t, slope?, magnitude?, end_t? }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFault {
    target: InputChannel,
    kind: String,
    start_t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    magnitude: Option<f64>,
}

impl TryFrom<RawFault> for FaultSpec {
    type Error = Error;

    fn try_from(raw: RawFault) -> Result<Self> {
        let kind = match (raw.kind.as_str(), raw.slope, raw.magnitude) {
            ("ramp", Some(slope), None) => FaultKind::Ramp { slope },
            ("bias", None, Some(magnitude)) => FaultKind::Bias { magnitude },
            ("stuck", None, Some(magnitude)) => FaultKind::Stuck { magnitude },
            ("ramp", _, _) => return Err(Error::config("ramp fault takes exactly `slope`")),
            ("bias" | "stuck", _, _) => {
                return Err(Error::config(format!(
                    "{} fault takes exactly `magnitude`",
                    raw.kind
                )))
            }
            (other, _, _) => return Err(Error::config(format!("unknown fault kind `{other}`"))),
        };
        let spec = FaultSpec {
            target: raw.target,
            kind,
            start_t: raw.start_t,
            end_t: raw.end_t,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<FaultSpec> for RawFault {
    fn from(f: FaultSpec) -> Self {
        let (kind, slope, magnitude) = match f.kind {
            FaultKind::Ramp { slope } => ("ramp", Some(slope), None),
            FaultKind::Bias { magnitude } => ("bias", None, Some(magnitude)),
            FaultKind::Stuck { magnitude } => ("stuck", None, Some(magnitude)),
        };
        RawFault {
            target: f.target,
            kind: kind.to_string(),
            start_t: f.start_t,
            end_t: f.end_t,
            slope,
            magnitude,
        }
    }
}

/// Rejects malformed faults and faults that overlap in time on one channel.
pub fn validate_faults(faults: &[FaultSpec]) -> Result<()> {
    for f in faults {
        f.validate()?;
    }
    for (i, a) in faults.iter().enumerate() {
        for b in &faults[i + 1..] {
            if a.target == b.target && a.overlaps(b) {
                return Err(Error::config(format!(
                    "overlapping faults on channel {} (start {} and {})",
                    a.target.as_str(),
                    a.start_t,
                    b.start_t
                )));
            }
        }
    }
    Ok(())
}

/// Faulted inputs at time `t`. Faults on distinct channels compose; the list
/// is assumed to have passed [`validate_faults`].
pub fn apply_faults(t: f64, nominal: &PlantInputs, faults: &[FaultSpec]) -> PlantInputs {
    let mut out = *nominal;
    for f in faults.iter().filter(|f| f.is_active(t)) {
        let current = out.get(f.target);
        let value = match f.kind {
            FaultKind::Ramp { slope } => current + slope * (t - f.start_t),
            FaultKind::Bias { magnitude } => current + magnitude,
            FaultKind::Stuck { magnitude } => magnitude,
        };
        out.set(f.target, value);
    }
    out
}

/// Seeded Normal(0, noise_std_tf^2) source for the feed temperature.
#[derive(Debug, Clone)]
pub struct FeedNoise {
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl FeedNoise {
    pub fn new(seed: u64, params: &PlantParams) -> Self {
        Self::with_std(seed, params.noise_std_tf)
    }

    pub fn with_std(seed: u64, std: f64) -> Self {
        let normal = (std > 0.0).then(|| Normal::new(0.0, std).expect("std validated >= 0"));
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal,
        }
    }

    pub fn sample(&mut self) -> f64 {
        match &self.normal {
            Some(n) => n.sample(&mut self.rng),
            None => 0.0,
        }
    }
}

/// One draw of the feed-temperature perturbation, K.
pub fn sample_feed_noise(noise: &mut FeedNoise) -> f64 {
    noise.sample()
}

/// One telemetry CSV row: time, coolant, tank temperature and concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub time: f64,
    pub coolant_temp: f64,
    pub tank_temp: f64,
    pub tank_conc: f64,
}
