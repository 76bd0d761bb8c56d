//! Benchmark plants and closed-loop simulation.
//!
//! Synthetic plants carry their ground-truth instabilities. The crystallizer
//! and hydro plants are labeled surrogates with the published RHP-pole and
//! integrator structure, not reproductions of the original process models.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{LambdaTable, TimeSeries};
use crate::linalg;
use crate::models::{
    logspace, FrequencyResponseData, LoopRealization, ModelError, RationalModel, C64,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid plant specification: {0}")]
    InvalidSpec(String),
    #[error("|exp(lambda1 L) - exp(lambda2 L)| underflows at omega = {0}")]
    DenominatorUnderflow(f64),
    #[error("lambda table grid does not match the evaluation grid")]
    GridMismatch,
    #[error("invalid simulation horizon or step")]
    InvalidHorizon,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Ground truth of a synthetic plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPlantSpec {
    /// Number of poles, including RHP poles and the integrator.
    pub order: usize,
    #[serde(with = "crate::io::complex_list")]
    pub rhp_poles: Vec<C64>,
    #[serde(with = "crate::io::complex_list")]
    pub rhp_zeros: Vec<C64>,
    pub integrator: bool,
    pub delay: f64,
    pub seed: u64,
}

/// Magnitude range of randomly drawn poles and zeros.
pub const FEATURE_RANGE: (f64, f64) = (1e-2, 1e1);
/// Minimum distance between any two features, relative to the larger one.
const MIN_SEPARATION: f64 = 0.1;
const DAMPING_RANGE: (f64, f64) = (0.1, 0.9);
const SYNTHETIC_POINTS: usize = 400;

/// Samples `gain * prod(s - z) / prod(s - p) * exp(-delay s)` in product
/// form, which keeps full relative precision next to lightly damped zeros
/// where a partial-fraction sum cancels.
pub fn zpk_response(
    zeros: &[C64],
    poles: &[C64],
    gain: f64,
    delay: f64,
    grid: &[f64],
    label: impl Into<String>,
) -> Result<FrequencyResponseData, PlantError> {
    let values = grid
        .iter()
        .map(|&w| {
            let s = C64::new(0.0, w);
            let num = zeros
                .iter()
                .fold(C64::new(gain, 0.0), |acc, z| acc * (s - z));
            let den = poles
                .iter()
                .fold(C64::new(1.0, 0.0), |acc, p| acc * (s - p));
            num / den * (-s * delay).exp()
        })
        .collect();
    Ok(FrequencyResponseData::new(grid.to_vec(), values, label)?)
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// A random feature (one real value or a conjugate pair) in the requested
/// half-plane.
fn draw_feature(rng: &mut ChaCha8Rng, pair: bool, sign: f64) -> Vec<C64> {
    let m = log_uniform(rng, FEATURE_RANGE);
    if pair {
        let z = rng.random_range(DAMPING_RANGE.0..DAMPING_RANGE.1);
        let (re, im) = (sign * z * m, m * (1.0 - z * z).sqrt());
        vec![C64::new(re, im), C64::new(re, -im)]
    } else {
        vec![C64::new(sign * m, 0.0)]
    }
}

fn separated(candidate: &[C64], taken: &[C64]) -> bool {
    candidate.iter().all(|&c| {
        taken
            .iter()
            .all(|&t| (c - t).norm() >= MIN_SEPARATION * c.norm().max(t.norm()))
    })
}

/// Draws separated features until `count` values are placed.
fn fill(rng: &mut ChaCha8Rng, count: usize, sign: f64, taken: &mut Vec<C64>) -> Vec<C64> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let pair = count - out.len() >= 2 && rng.random_bool(0.5);
        let candidate = draw_feature(rng, pair, sign);
        if separated(&candidate, taken) {
            taken.extend(&candidate);
            out.extend(candidate);
        }
    }
    out
}

fn check_instabilities(values: &[C64], what: &str) -> Result<(), PlantError> {
    if values.iter().any(|v| !(v.re > 0.0)) {
        return Err(PlantError::InvalidSpec(format!("{what} must have Re > 0")));
    }
    if crate::models::conjugate_partners(values, 1e-12).is_none() {
        return Err(PlantError::InvalidSpec(format!(
            "{what} must be conjugate-closed"
        )));
    }
    for (i, a) in values.iter().enumerate() {
        if values[..i]
            .iter()
            .any(|b| (a - b).norm() <= 1e-12 * a.norm())
        {
            return Err(PlantError::InvalidSpec(format!("{what} must be distinct")));
        }
    }
    Ok(())
}

impl SyntheticPlantSpec {
    pub fn validate(&self) -> Result<(), PlantError> {
        check_instabilities(&self.rhp_poles, "RHP poles")?;
        check_instabilities(&self.rhp_zeros, "RHP zeros")?;
        let fixed = self.rhp_poles.len() + usize::from(self.integrator);
        if self.order < fixed.max(1) {
            return Err(PlantError::InvalidSpec(format!(
                "order {} cannot hold {fixed} prescribed poles",
                self.order
            )));
        }
        if self.rhp_zeros.len() > self.order {
            return Err(PlantError::InvalidSpec("more zeros than poles".into()));
        }
        if !(self.delay >= 0.0 && self.delay.is_finite()) {
            return Err(PlantError::InvalidSpec(
                "delay must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Random spec: order up to `max_order`, 0 to 2 RHP poles and 0 to 2 RHP
/// zeros, each either real or a conjugate pair.
pub fn random_spec(seed: u64, max_order: usize) -> SyntheticPlantSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = Vec::new();
    let n_poles = rng.random_range(0..=2usize.min(max_order));
    let rhp_poles = fill(&mut rng, n_poles, 1.0, &mut taken);
    let order = rng.random_range(n_poles.max(1)..=max_order);
    let n_zeros = rng.random_range(0..=2usize.min(order));
    let rhp_zeros = fill(&mut rng, n_zeros, 1.0, &mut taken);
    SyntheticPlantSpec {
        order,
        rhp_poles,
        rhp_zeros,
        integrator: false,
        delay: 0.0,
        seed: rng.random(),
    }
}

/// Plant with the prescribed instabilities and seeded random stable
/// dynamics, sampled on 400 log-spaced points spanning a decade beyond the
/// outermost features. The gain makes the geometric mean of the sampled
/// magnitudes 1, centering the dynamic range.
pub fn generate_synthetic(
    spec: &SyntheticPlantSpec,
) -> Result<(RationalModel, FrequencyResponseData), PlantError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut taken: Vec<C64> = spec
        .rhp_poles
        .iter()
        .chain(&spec.rhp_zeros)
        .copied()
        .collect();
    if !separated(&spec.rhp_poles, &spec.rhp_zeros) {
        return Err(PlantError::InvalidSpec(
            "RHP poles and zeros too close".into(),
        ));
    }

    let n_stable_poles = spec.order - spec.rhp_poles.len() - usize::from(spec.integrator);
    let relative_degree = rng.random_range(0..=2usize.min(spec.order - spec.rhp_zeros.len()));
    let n_stable_zeros = spec.order - relative_degree - spec.rhp_zeros.len();

    let mut poles = spec.rhp_poles.clone();
    poles.extend(fill(&mut rng, n_stable_poles, -1.0, &mut taken));
    if spec.integrator {
        poles.push(C64::new(0.0, 0.0));
    }
    let mut zeros = spec.rhp_zeros.clone();
    zeros.extend(fill(&mut rng, n_stable_zeros, -1.0, &mut taken));

    let magnitudes: Vec<f64> = poles
        .iter()
        .chain(&zeros)
        .map(|v| v.norm())
        .filter(|&m| m > 0.0)
        .collect();
    let lo = magnitudes.iter().copied().fold(f64::INFINITY, f64::min) / 10.0;
    let hi = magnitudes.iter().copied().fold(0.0, f64::max) * 10.0;
    let grid = logspace(lo, hi, SYNTHETIC_POINTS);

    let unit = zpk_response(&zeros, &poles, 1.0, 0.0, &grid, "")?;
    let log_mean = unit.values().iter().map(|v| v.norm().ln()).sum::<f64>() / unit.len() as f64;
    let gain = (-log_mean).exp();
    let model = RationalModel::from_zpk(&zeros, &poles, gain)?.with_delay(spec.delay)?;
    let data = zpk_response(
        &zeros,
        &poles,
        gain,
        spec.delay,
        &grid,
        format!("synthetic seed {}", spec.seed),
    )?;
    Ok((model, data))
}

/// RHP poles of the crystallizer surrogate.
pub const CRYSTALLIZER_RHP_POLES: [C64; 2] =
    [C64::new(1.07e-4, 0.852e-2), C64::new(1.07e-4, -0.852e-2)];

/// Sixth-order, relative-degree-one, minimum-phase surrogate of the
/// crystallizer with its two estimated RHP poles and a lightly damped
/// resonance, sampled on 500 log-spaced points over `[1e-4, 1]` rad/s.
pub fn crystallizer_surrogate() -> Result<(RationalModel, FrequencyResponseData), PlantError> {
    let c = C64::new;
    let mut poles = CRYSTALLIZER_RHP_POLES.to_vec();
    poles.extend([
        c(-2e-3, 0.0),
        c(-1.5e-3, 2.5e-2),
        c(-1.5e-3, -2.5e-2),
        c(-6e-2, 0.0),
    ]);
    let zeros = [
        c(-4e-3, 0.0),
        c(-1e-2, 1.2e-2),
        c(-1e-2, -1.2e-2),
        c(-3e-2, 0.0),
        c(-0.3, 0.0),
    ];
    let grid = logspace(1e-4, 1.0, 500);
    let gain = 1.0 / zpk_response(&zeros, &poles, 1.0, 0.0, &grid, "")?.max_abs();
    let model = RationalModel::from_zpk(&zeros, &poles, gain)?;
    let data = zpk_response(&zeros, &poles, gain, 0.0, &grid, "crystallizer surrogate")?;
    Ok((model, data))
}

/// Integrating, delay-free, minimum-phase surrogate of the open-channel
/// transfer `G_s`, sampled on 500 log-spaced points over `[1e-6, 1e-1]` rad/s.
pub fn hydro_surrogate() -> Result<(RationalModel, FrequencyResponseData), PlantError> {
    let c = C64::new;
    let poles = [c(0.0, 0.0), c(-3e-4, 0.0), c(-1e-2, 0.0)];
    let zeros = [c(-2e-3, 0.0)];
    // about 1 m of depth per 1e4 m^3/s.s of accumulated flow
    let gain = 1e-4 * 3e-4 * 1e-2 / 2e-3;
    let model = RationalModel::from_zpk(&zeros, &poles, gain)?;
    let data = zpk_response(
        &zeros,
        &poles,
        gain,
        0.0,
        &logspace(1e-6, 1e-1, 500),
        "hydro surrogate",
    )?;
    Ok((model, data))
}

/// Open-channel geometry and tabulated propagation coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenChannelConfig {
    pub length: f64,
    pub x: f64,
    pub b0: f64,
    pub q0: f64,
    pub table: LambdaTable,
    pub tau_e: f64,
    pub tau_s: f64,
}

impl OpenChannelConfig {
    /// Config with the default delays of 500 s (inflow) and 1500 s (outflow).
    pub fn new(length: f64, x: f64, b0: f64, q0: f64, table: LambdaTable) -> Self {
        Self {
            length,
            x,
            b0,
            q0,
            table,
            tau_e: 500.0,
            tau_s: 1500.0,
        }
    }

    fn validate(&self, grid: &[f64]) -> Result<(), PlantError> {
        if !(self.x >= 0.0 && self.x <= self.length) {
            return Err(PlantError::InvalidSpec(
                "measurement position must satisfy 0 <= x <= L".into(),
            ));
        }
        if self.b0 == 0.0 || !self.b0.is_finite() {
            return Err(PlantError::InvalidSpec(
                "B0 must be finite and nonzero".into(),
            ));
        }
        if self.table.omegas.len() != grid.len()
            || self
                .table
                .omegas
                .iter()
                .zip(grid)
                .any(|(a, b)| (a - b).abs() > 1e-12 * b.abs())
        {
            return Err(PlantError::GridMismatch);
        }
        Ok(())
    }
}

/// Shared denominator `B0 s (e^{l1 L} - e^{l2 L})`, scaled by `e^{-m}`.
fn channel_denominator(
    cfg: &OpenChannelConfig,
    w: f64,
    l1: C64,
    l2: C64,
    m: f64,
) -> Result<C64, PlantError> {
    let diff = (l1 * cfg.length - m).exp() - (l2 * cfg.length - m).exp();
    if diff.norm() < 1e-300 {
        return Err(PlantError::DenominatorUnderflow(w));
    }
    Ok(cfg.b0 * C64::new(0.0, w) * diff)
}

fn evaluate_channel(
    cfg: &OpenChannelConfig,
    grid: &[f64],
    delay: f64,
    label: &str,
    numerator: impl Fn(C64, C64, f64) -> C64,
) -> Result<FrequencyResponseData, PlantError> {
    cfg.validate(grid)?;
    let mut values = Vec::with_capacity(grid.len());
    for (i, &w) in grid.iter().enumerate() {
        let (l1, l2) = (cfg.table.lambda1[i], cfg.table.lambda2[i]);
        // factor out the dominant exponent so Re(lambda) L up to ~700 stays finite
        let m = (l1.re * cfg.length).max(l2.re * cfg.length);
        let den = channel_denominator(cfg, w, l1, l2, m)?;
        let delay_factor = C64::new(0.0, -w * delay).exp();
        values.push(numerator(l1, l2, m) / den * delay_factor);
    }
    Ok(FrequencyResponseData::new(grid.to_vec(), values, label)?)
}

/// Outflow-to-depth transfer `G_s` times `exp(-i w tau_s)`.
pub fn open_channel_frf(
    cfg: &OpenChannelConfig,
    grid: &[f64],
) -> Result<FrequencyResponseData, PlantError> {
    let x = cfg.x;
    evaluate_channel(cfg, grid, cfg.tau_s, "open channel G_s", |l1, l2, m| {
        l1 * (l1 * x - m).exp() - l2 * (l2 * x - m).exp()
    })
}

/// Inflow-to-depth transfer `G_e` times `exp(-i w tau_e)`.
pub fn open_channel_inflow_frf(
    cfg: &OpenChannelConfig,
    grid: &[f64],
) -> Result<FrequencyResponseData, PlantError> {
    let (x, length) = (cfg.x, cfg.length);
    evaluate_channel(cfg, grid, cfg.tau_e, "open channel G_e", |l1, l2, m| {
        l1 * (l2 * length + l1 * x - m).exp() - l2 * (l1 * length + l2 * x - m).exp()
    })
}

/// Fourth-order Pade approximant of `exp(-delay s)`.
pub fn pade(delay: f64) -> Result<RationalModel, PlantError> {
    if !(delay >= 0.0 && delay.is_finite()) {
        return Err(PlantError::InvalidSpec(
            "delay must be finite and >= 0".into(),
        ));
    }
    if delay == 0.0 {
        return Ok(RationalModel::constant(1.0));
    }
    // N(x) = 1 + x/2 + 3x^2/28 + x^3/84 + x^4/1680; exp(-x) ~ N(-x)/N(x)
    let coeffs = [1.0, 1.0 / 2.0, 3.0 / 28.0, 1.0 / 84.0, 1.0 / 1680.0];
    let lead = coeffs[4];
    let companion = nalgebra::DMatrix::<C64>::from_fn(4, 4, |i, j| {
        if i == 0 {
            C64::new(-coeffs[3 - j] / lead, 0.0)
        } else if j + 1 == i {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let (roots, _) = linalg::eigen(&companion).ok_or(ModelError::EigenFailure)?;
    let roots = crate::models::snap_conjugates(roots);
    let poles: Vec<C64> = roots.iter().map(|r| r / delay).collect();
    let zeros: Vec<C64> = poles.iter().map(|p| -p).collect();
    Ok(RationalModel::from_zpk(&zeros, &poles, 1.0)?)
}

/// Delay-free model with any input delay replaced by its Pade approximant.
pub fn fold_delay(model: &RationalModel) -> Result<RationalModel, PlantError> {
    if model.delay() == 0.0 {
        return Ok(model.clone());
    }
    Ok(model.without_delay().mul(&pade(model.delay())?)?)
}

/// `(e^{p t} - 1) / p`, accurate for small `|p t|` and exact `t` at `p = 0`.
fn step_kernel(p: C64, t: f64) -> C64 {
    let x = p * t;
    if x.norm() < 1e-5 {
        C64::new(t, 0.0) * (1.0 + x / 2.0 + x * x / 6.0)
    } else {
        (x.exp() - 1.0) / p
    }
}

/// Step response of a delay-free model at time `t >= 0`.
pub fn step_response_at(model: &RationalModel, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    model
        .terms()
        .map(|(p, r)| (r * step_kernel(p, t)).re)
        .sum::<f64>()
        + model.direct()
}

fn time_grid(horizon: f64, dt: f64) -> Result<Vec<f64>, PlantError> {
    if !(horizon > 0.0 && dt > 0.0 && horizon.is_finite() && dt <= horizon) {
        return Err(PlantError::InvalidHorizon);
    }
    let n = (horizon / dt + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| k as f64 * dt).collect())
}

fn warn_if_unstable(model: &RationalModel) {
    if let Some(p) = model.poles().iter().find(|p| p.re > 0.0) {
        warn!("simulating an unstable system (pole {p})");
    }
}

/// Exact step response on `t = 0, dt, 2dt, ... <= horizon`.
///
/// Delays are replaced by their fourth-order Pade approximant.
pub fn simulate_step(
    model: &RationalModel,
    horizon: f64,
    dt: f64,
) -> Result<TimeSeries, PlantError> {
    let t = time_grid(horizon, dt)?;
    let model = fold_delay(model)?;
    warn_if_unstable(&model);
    let y = t.iter().map(|&tk| step_response_at(&model, tk)).collect();
    Ok(TimeSeries { t, y })
}

/// Rectangular input pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub amplitude: f64,
    pub start: f64,
    pub duration: f64,
}

/// Output deviation caused by an input-disturbance pulse: the response of
/// `P / (1 + P K)` to the pulse, built from two shifted steps.
pub fn simulate_disturbance(
    plant: &RationalModel,
    controller: &RationalModel,
    pulse: &Pulse,
    horizon: f64,
    dt: f64,
) -> Result<TimeSeries, PlantError> {
    let t = time_grid(horizon, dt)?;
    if !(pulse.duration >= 0.0 && pulse.start >= 0.0) {
        return Err(PlantError::InvalidSpec(
            "pulse start and duration must be >= 0".into(),
        ));
    }
    let p = fold_delay(plant)?;
    let k = fold_delay(controller)?;
    let sensitivity = LoopRealization::new(&p, &k)?.plant_sensitivity()?;
    warn_if_unstable(&sensitivity);
    let end = pulse.start + pulse.duration;
    let y = t
        .iter()
        .map(|&tk| {
            pulse.amplitude
                * (step_response_at(&sensitivity, tk - pulse.start)
                    - step_response_at(&sensitivity, tk - end))
        })
        .collect();
    Ok(TimeSeries { t, y })
}
