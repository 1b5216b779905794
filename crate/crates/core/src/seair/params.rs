use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pomp::{ParameterSet, Transform};

/// Number of exponential stages in the reporting delay.
pub const DELAY_STAGES: f64 = 2.0;

/// Default regime switch: day 14 after the start of the record.
pub const DEFAULT_LOCKDOWN_TIME: f64 = 14.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Before,
    After,
}

impl Regime {
    #[inline]
    pub fn at(t: f64, lockdown_time: f64) -> Self {
        if t < lockdown_time {
            Regime::Before
        } else {
            Regime::After
        }
    }
}

/// Parameters that change at the regime switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    /// Transmission rate (1/day).
    pub beta: f64,
    /// Relative transmissibility of unreported infections.
    pub mu: f64,
    /// Mean latent period (days).
    pub z: f64,
    /// Mean infectious period (days).
    pub d: f64,
    /// Fraction of infections that are reported.
    pub alpha: f64,
    /// Mean reporting delay (days). Fixed, not estimated.
    pub td: f64,
}

impl RegimeParams {
    /// Basic reproductive number `(α + (1 − α)μ)·D·β`.
    pub fn r0(&self) -> f64 {
        (self.alpha + (1.0 - self.alpha) * self.mu) * self.d * self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeairParams {
    pub before: RegimeParams,
    pub after: RegimeParams,
    /// Mobility factor.
    pub theta: f64,
    /// Measurement overdispersion.
    pub tau: f64,
    /// Intensity of the gamma white noise on transmission.
    pub sigma_se: f64,
    /// Initial exposed count at the source unit.
    pub e0: f64,
    /// Initial unreported-infectious count at the source unit.
    pub a0: f64,
    pub lockdown_time: f64,
}

impl SeairParams {
    #[inline]
    pub fn regime(&self, t: f64) -> &RegimeParams {
        match Regime::at(t, self.lockdown_time) {
            Regime::Before => &self.before,
            Regime::After => &self.after,
        }
    }

    pub fn r0(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Before => self.before.r0(),
            Regime::After => self.after.r0(),
        }
    }

    /// Fitted values for the model with latent and infectious periods shared across regimes.
    pub fn fitted_constrained() -> Self {
        Self {
            before: RegimeParams { beta: 0.97, mu: 1.0, z: 0.72, d: 3.87, alpha: 0.08, td: 9.0 },
            after: RegimeParams { beta: 0.22, mu: 0.78, z: 0.72, d: 3.87, alpha: 0.48, td: 6.0 },
            theta: 2.87,
            tau: 0.32,
            sigma_se: 1.77,
            e0: 3477.0,
            a0: 0.0,
            lockdown_time: DEFAULT_LOCKDOWN_TIME,
        }
    }

    /// Fitted values for the model with regime-specific latent and infectious periods.
    pub fn fitted_unconstrained() -> Self {
        Self {
            before: RegimeParams { beta: 0.73, mu: 1.0, z: 0.55, d: 35.0, alpha: 0.11, td: 9.0 },
            after: RegimeParams { beta: 0.24, mu: 0.61, z: 4.23, d: 2.36, alpha: 0.38, td: 6.0 },
            theta: 2.34,
            tau: 0.28,
            sigma_se: 2.08,
            e0: 2712.0,
            a0: 0.0,
            lockdown_time: DEFAULT_LOCKDOWN_TIME,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (label, r) in [("before", &self.before), ("after", &self.after)] {
            if !(r.z > 0.0 && r.d > 0.0 && r.td > 0.0) {
                return Err(invalid(format!("{label}: durations Z, D, Td must be positive")));
            }
            if !((0.0..=1.0).contains(&r.alpha) && (0.0..=1.0).contains(&r.mu)) {
                return Err(invalid(format!("{label}: alpha and mu must lie in [0, 1]")));
            }
            if !(r.beta >= 0.0) {
                return Err(invalid(format!("{label}: beta must be non-negative")));
            }
        }
        if !(self.theta >= 0.0 && self.tau >= 0.0 && self.sigma_se >= 0.0) {
            return Err(invalid("theta, tau and sigma_SE must be non-negative"));
        }
        if !(self.e0 >= 0.0 && self.a0 >= 0.0) {
            return Err(invalid("E0 and A0 must be non-negative"));
        }
        Ok(())
    }

    /// Reads the named parameters (see [`SeairParams::to_set`]).
    pub fn from_set(set: &ParameterSet) -> Result<Self> {
        let regime = |suffix: &str| -> Result<RegimeParams> {
            Ok(RegimeParams {
                beta: set.get(&format!("beta_{suffix}"))?,
                mu: set.get(&format!("mu_{suffix}"))?,
                z: set.get(&format!("Z_{suffix}"))?,
                d: set.get(&format!("D_{suffix}"))?,
                alpha: set.get(&format!("alpha_{suffix}"))?,
                td: set.get(&format!("Td_{suffix}"))?,
            })
        };
        let p = Self {
            before: regime("before")?,
            after: regime("after")?,
            theta: set.get("theta")?,
            tau: set.get("tau")?,
            sigma_se: set.get("sigma_SE")?,
            e0: set.get("E0")?,
            a0: set.get("A0")?,
            lockdown_time: set.regime_boundary,
        };
        p.validate()?;
        Ok(p)
    }

    /// The named parameter set with estimation-scale transforms; `Td_*` are fixed.
    pub fn to_set(&self) -> ParameterSet {
        let mut set = ParameterSet::new().with_regime_boundary(self.lockdown_time);
        for (suffix, r) in [("before", &self.before), ("after", &self.after)] {
            set.insert(&format!("beta_{suffix}"), r.beta, Transform::Log).expect("beta");
            set.insert(&format!("mu_{suffix}"), r.mu, Transform::Logit).expect("mu");
            set.insert(&format!("Z_{suffix}"), r.z, Transform::Log).expect("Z");
            set.insert(&format!("D_{suffix}"), r.d, Transform::Log).expect("D");
            set.insert(&format!("alpha_{suffix}"), r.alpha, Transform::Logit).expect("alpha");
            let td = format!("Td_{suffix}");
            set.insert(&td, r.td, Transform::Log).expect("Td");
            set.set_fixed(&td, true).expect("Td");
        }
        set.insert("theta", self.theta, Transform::Log).expect("theta");
        set.insert("tau", self.tau, Transform::Log).expect("tau");
        set.insert("sigma_SE", self.sigma_se, Transform::Log).expect("sigma_SE");
        set.insert("E0", self.e0, Transform::LogPlusOne).expect("E0");
        set.insert("A0", self.a0, Transform::LogPlusOne).expect("A0");
        set
    }
}
