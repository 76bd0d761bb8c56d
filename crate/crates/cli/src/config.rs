//! Pipeline and scenario configuration.

use std::path::PathBuf;

use lddc_core::hardy::AnalysisConfig;
use lddc_core::models::RationalModel;
use lddc_core::plants::Pulse;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Desired closed-loop model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesiredSpec {
    /// `1 / (tau s + 1)`
    FirstOrder { tau: f64 },
    /// `w0^2 / (s^2 + 2 xi w0 s + w0^2)`
    SecondOrder { w0: f64, xi: f64 },
    /// Rational model JSON file.
    Model { path: PathBuf },
    /// Time constant `tau` with the relative degree raised to the plant's,
    /// so that the ideal controller stays proper.
    Auto { tau: f64 },
}

impl Default for DesiredSpec {
    fn default() -> Self {
        DesiredSpec::Auto { tau: 1.0 }
    }
}

impl DesiredSpec {
    /// `plant_relative_degree` only affects [`DesiredSpec::Auto`].
    pub fn build(&self, plant_relative_degree: usize) -> Result<RationalModel, CliError> {
        Ok(match self {
            DesiredSpec::FirstOrder { tau } => RationalModel::first_order(*tau)?,
            DesiredSpec::Auto { tau } => auto_desired(*tau, plant_relative_degree)?,
            DesiredSpec::SecondOrder { w0, xi } => RationalModel::second_order(*w0, *xi)?,
            DesiredSpec::Model { path } => lddc_core::io::read_json_file(path)?,
        })
    }

    pub fn relative_degree(model: &RationalModel) -> Result<usize, CliError> {
        let (poles, zeros) = model.poles_zeros()?;
        Ok(poles.len().saturating_sub(zeros.len()))
    }

    /// From the `--desired-*` flags; `None` when none is given.
    pub fn from_flags(
        tau: Option<f64>,
        w0: Option<f64>,
        xi: Option<f64>,
        model: Option<PathBuf>,
    ) -> Result<Option<Self>, CliError> {
        match (tau, w0, model) {
            (None, None, None) => {
                if xi.is_some() {
                    return Err(CliError::Usage("--desired-xi needs --desired-w0".into()));
                }
                Ok(None)
            }
            (Some(tau), None, None) => Ok(Some(DesiredSpec::FirstOrder { tau })),
            (None, Some(w0), None) => Ok(Some(DesiredSpec::SecondOrder {
                w0,
                xi: xi.unwrap_or(1.0),
            })),
            (None, None, Some(path)) => Ok(Some(DesiredSpec::Model { path })),
            _ => Err(CliError::Usage(
                "give exactly one of --desired-tau, --desired-w0 or --desired-model".into(),
            )),
        }
    }
}

/// Unit DC gain, relative degree `max(r, 1)`, poles near `-1 / tau`.
///
/// Degree 2 is the critically damped second-order model; higher degrees
/// cascade first-order lags with slightly spread time constants, since
/// repeated poles have no pole-residue form.
fn auto_desired(tau: f64, r: usize) -> Result<RationalModel, CliError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(CliError::Usage(format!(
            "desired time constant must be > 0, got {tau}"
        )));
    }
    Ok(match r {
        0 | 1 => RationalModel::first_order(tau)?,
        2 => RationalModel::second_order(1.0 / tau, 1.0)?,
        _ => {
            let mut m = RationalModel::constant(1.0);
            for k in 0..r {
                m = m.mul(&RationalModel::first_order(tau / (1.0 + 0.25 * k as f64))?)?;
            }
            m
        }
    })
}

/// Where the plant frequency response comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantSource {
    /// Measured FRF CSV; the plant model for closed-loop checks is fitted.
    File {
        path: PathBuf,
    },
    /// Random plant drawn from the pipeline seed.
    Synthetic {
        max_order: usize,
    },
    Crystallizer,
    Hydro,
}

impl Default for PlantSource {
    fn default() -> Self {
        PlantSource::Synthetic { max_order: 8 }
    }
}

/// Time-domain scenario; unset fields are derived from the closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pulse: Option<Pulse>,
}

/// Samples per simulated series when `dt` is derived.
pub const DEFAULT_STEPS: f64 = 2000.0;
/// Derived horizons span this many slowest closed-loop time constants.
pub const HORIZON_TIME_CONSTANTS: f64 = 20.0;

/// Scenario with every field resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedScenario {
    pub horizon: f64,
    pub dt: f64,
    pub pulse: Pulse,
    /// Slowest closed-loop time constant `1 / min |Re p|`.
    pub time_constant: f64,
}

impl Scenario {
    pub fn resolve(&self, time_constant: f64) -> Result<ResolvedScenario, CliError> {
        let horizon = self
            .horizon
            .unwrap_or(HORIZON_TIME_CONSTANTS * time_constant);
        let dt = self.dt.unwrap_or(horizon / DEFAULT_STEPS);
        let pulse = self.pulse.unwrap_or(Pulse {
            amplitude: 1.0,
            start: 0.0,
            duration: time_constant,
        });
        if !(horizon > 0.0 && horizon.is_finite() && dt > 0.0 && dt <= horizon) {
            return Err(CliError::Usage(format!(
                "invalid horizon {horizon} / dt {dt}"
            )));
        }
        Ok(ResolvedScenario {
            horizon,
            dt,
            pulse,
            time_constant,
        })
    }
}

/// Everything `pipeline` needs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub plant: PlantSource,
    pub analysis: AnalysisConfig,
    pub desired: DesiredSpec,
    /// Reduced controller order; the full projection is always kept too.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    pub seed: u64,
    pub simulation: Scenario,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.order == Some(0) {
            return Err(CliError::Usage("order must be >= 1".into()));
        }
        if let PlantSource::Synthetic { max_order } = self.plant {
            if max_order < 1 {
                return Err(CliError::Usage("synthetic max_order must be >= 1".into()));
            }
        }
        self.analysis.validate()?;
        Ok(())
    }
}
