//! Scenario files: model parameters, caps and optional run settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::barrier::BarrierOptions;
use crate::error::{Error, Result};
use crate::model::{ConstraintCaps, ModelParams};
use crate::ode::Settings;
use crate::policy::SimOptions;

/// Scenarios shipped with the crate, by name.
pub const BUNDLED: [(&str, &str); 4] = [
    ("cali_comfortable", include_str!("../scenarios/cali_comfortable.json")),
    (
        "cali_comfortable_viable",
        include_str!("../scenarios/cali_comfortable_viable.json"),
    ),
    ("cali_viable", include_str!("../scenarios/cali_viable.json")),
    ("cali_desperate", include_str!("../scenarios/cali_desperate.json")),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub atol: f64,
    pub rtol: f64,
    pub h_init: f64,
    pub h_max: f64,
    /// Simulation and oracle horizon in days.
    pub horizon: f64,
    pub barrier_horizon: f64,
    pub max_segment: f64,
    pub grid: usize,
    pub band: f64,
    pub eps: f64,
    pub switch_distance: f64,
    pub hysteresis: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        let ode = Settings::default();
        let barrier = BarrierOptions::default();
        let sim = SimOptions::default();
        RunSettings {
            atol: ode.atol,
            rtol: ode.rtol,
            h_init: ode.h_init,
            h_max: ode.h_max,
            horizon: 3000.0,
            barrier_horizon: barrier.horizon,
            max_segment: barrier.max_segment,
            grid: 200,
            band: 0.01,
            eps: sim.eps,
            switch_distance: sim.switch_distance,
            hysteresis: sim.hysteresis,
        }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("atol", self.atol),
            ("rtol", self.rtol),
            ("h_init", self.h_init),
            ("h_max", self.h_max),
            ("horizon", self.horizon),
            ("barrier_horizon", self.barrier_horizon),
            ("max_segment", self.max_segment),
            ("band", self.band),
            ("eps", self.eps),
            ("switch_distance", self.switch_distance),
            ("hysteresis", self.hysteresis),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Scenario(format!(
                    "settings.{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.grid < 2 {
            return Err(Error::Scenario("settings.grid must be at least 2".into()));
        }
        Ok(())
    }

    pub fn integrator(&self) -> Settings {
        Settings {
            atol: self.atol,
            rtol: self.rtol,
            h_init: self.h_init,
            h_max: self.h_max,
            ..Settings::default()
        }
    }

    pub fn barrier_options(&self) -> BarrierOptions {
        BarrierOptions {
            integrator: self.integrator(),
            horizon: self.barrier_horizon,
            max_segment: self.max_segment,
            ..BarrierOptions::default()
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            settings: self.integrator(),
            eps: self.eps,
            switch_distance: self.switch_distance,
            hysteresis: self.hysteresis,
            ..SimOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub model: ModelParams,
    pub caps: ConstraintCaps,
    #[serde(default)]
    pub settings: RunSettings,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let s: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.settings.validate()?;
        Ok(s)
    }

    /// Loads a file, or a bundled scenario when `path` names one (with or
    /// without the `.json` suffix) and no such file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match std::fs::read_to_string(path) {
            Ok(text) => Self::parse(&text).map_err(|e| match e {
                Error::Scenario(msg) => Error::Scenario(format!("{}: {msg}", path.display())),
                other => other,
            }),
            Err(err) => {
                let stem = path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .map(|n| n.trim_end_matches(".json"));
                match stem.and_then(bundled) {
                    Some(s) if path.parent().is_none_or(|p| p.as_os_str().is_empty()) => Ok(s),
                    _ => Err(Error::Scenario(format!("{}: {err}", path.display()))),
                }
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn bundled(name: &str) -> Option<ScenarioFile> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ScenarioFile::parse(text).expect("bundled scenarios are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse() {
        for (name, _) in BUNDLED {
            let s = bundled(name).unwrap();
            assert_eq!(s.name.as_deref(), Some(name));
            assert_eq!(s.model, ModelParams::cali());
            assert_eq!(s.settings, RunSettings::default());
        }
        assert_eq!(
            bundled("cali_viable").unwrap().caps,
            ConstraintCaps::new(0.15, 0.2).unwrap()
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        let base = BUNDLED[0].1;
        let extra = base.replacen("\"caps\"", "\"colour\": 1, \"caps\"", 1);
        let err = ScenarioFile::parse(&extra).unwrap_err().to_string();
        assert!(err.contains("colour") && err.contains("line"), "{err}");
        let bad_setting = base.replacen("\"caps\"", "\"settings\": {\"grdi\": 10}, \"caps\"", 1);
        assert!(ScenarioFile::parse(&bad_setting).is_err());
        let bad_cap = base.replace("0.7,", "1.7,");
        assert!(ScenarioFile::parse(&bad_cap).is_err());
        let bad_grid = base.replacen("\"caps\"", "\"settings\": {\"grid\": 1}, \"caps\"", 1);
        assert!(ScenarioFile::parse(&bad_grid).is_err());
    }

    #[test]
    fn round_trip() {
        let s = bundled("cali_desperate").unwrap();
        assert_eq!(ScenarioFile::parse(&s.to_json().unwrap()).unwrap(), s);
        assert_eq!(ScenarioFile::load("cali_desperate.json").unwrap(), s);
        assert!(ScenarioFile::load("/nonexistent/cali_desperate.json").is_err());
    }
}
