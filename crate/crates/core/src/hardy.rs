//! Stable/antistable analysis of frequency-response samples.
//!
//! The data are fitted by a Loewner interpolant, whose partial fractions are
//! sorted by half-plane. RHP poles are counted by the rank of a Hankel matrix
//! built from the antistable part, and RHP zeros come from the same analysis
//! on inverted data.

use log::{debug, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lddc::{self, IdentError, LoewnerOptions};
use crate::linalg;
use crate::models::{FrequencyResponseData, ModelError, RationalModel, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("data fit failed: node residual {0:.3e} exceeds 1e-3")]
    FitFailure(f64),
    #[error("no singular-value gap above the threshold and no value below the floor: {0:?}")]
    AmbiguousRank(Vec<f64>),
    #[error("requested {count} poles but the antistable part has order {order}")]
    CountExceedsOrder { count: usize, order: usize },
    #[error("sample at omega = {0} is too small to invert")]
    NearZeroSample(f64),
    #[error("fitted pole {0} lies on the imaginary axis; prefilter integrators first")]
    AxisPole(C64),
    #[error("invalid analysis configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ident(#[from] IdentError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Tuning of the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Maximum order of the rational data fit.
    pub fit_order: usize,
    /// Ratio `sigma_k / sigma_{k+1}` declaring a rank drop.
    pub rank_gap_threshold: f64,
    /// Relative floor: Hankel singular values below
    /// `abs_floor * max(sigma_1, max |data|)` are zero.
    pub abs_floor: f64,
    /// Pass band `(omega_lo, omega_hi)` of the integrator prefilter;
    /// `None` uses `(omega_min, 10 omega_max)` of the data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integrator_band: Option<(f64, f64)>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            fit_order: 60,
            rank_gap_threshold: 1e3,
            abs_floor: 1e-8,
            integrator_band: None,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.fit_order < 2 {
            return Err(AnalysisError::InvalidConfig(
                "fit_order must be >= 2".into(),
            ));
        }
        if !(self.rank_gap_threshold > 1.0) {
            return Err(AnalysisError::InvalidConfig(
                "rank_gap_threshold must be > 1".into(),
            ));
        }
        if !(self.abs_floor >= 0.0) {
            return Err(AnalysisError::InvalidConfig(
                "abs_floor must be >= 0".into(),
            ));
        }
        if let Some((lo, hi)) = self.integrator_band {
            if !(lo > 0.0 && lo < hi) {
                return Err(AnalysisError::InvalidConfig(
                    "integrator band needs 0 < omega_lo < omega_hi".into(),
                ));
            }
        }
        Ok(())
    }

    fn loewner(&self) -> LoewnerOptions {
        LoewnerOptions {
            max_order: self.fit_order,
            ..LoewnerOptions::default()
        }
    }
}

/// Additive split `P = P_s + P_as` of fitted data.
#[derive(Debug, Clone)]
pub struct ProjectionSplit {
    /// Poles with `Re < 0`, plus the direct term.
    pub stable: RationalModel,
    /// Poles with `Re > 0`, no direct term.
    pub antistable: RationalModel,
    /// Largest relative mismatch of `P_s + P_as` at the nodes.
    pub node_residual: f64,
    /// Largest sample modulus, the scale for absolute floors.
    pub data_scale: f64,
}

/// Estimated instabilities of a plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilityReport {
    #[serde(with = "crate::io::complex_list")]
    pub rhp_poles: Vec<C64>,
    #[serde(with = "crate::io::complex_list")]
    pub rhp_zeros: Vec<C64>,
    pub has_integrator: bool,
    /// Leading Hankel singular values of the pole analysis, descending.
    pub sv_poles: Vec<f64>,
    /// Leading Hankel singular values of the zero analysis, descending.
    pub sv_zeros: Vec<f64>,
    /// Worst node residual of the two data fits.
    pub fit_residual: f64,
}

impl InstabilityReport {
    /// Report with the given instabilities and no diagnostics.
    pub fn from_instabilities(rhp_poles: Vec<C64>, rhp_zeros: Vec<C64>) -> Self {
        Self {
            rhp_poles,
            rhp_zeros,
            has_integrator: false,
            sv_poles: Vec::new(),
            sv_zeros: Vec::new(),
            fit_residual: 0.0,
        }
    }
}

/// Terms whose peak grid contribution is below this fraction of the data
/// scale are fit debris and are dropped before the split.
const PRUNE_REL: f64 = 1e-12;
/// `|Re p| <= AXIS_REL * |p|` marks a pole as sitting on the axis.
const AXIS_REL: f64 = 1e-10;
const FIT_FAILURE: f64 = 1e-3;
const MAX_HANKEL: usize = 300;
/// RHP poles of the inverted data beyond this multiple of the top frequency
/// indicate an uncompensated improper remainder.
const OUT_OF_BAND: f64 = 100.0;
const EXTRA_COMPENSATION: usize = 2;

/// Rational fit of the data split by pole half-plane.
pub fn split_stable_antistable(
    data: &FrequencyResponseData,
    cfg: &AnalysisConfig,
) -> Result<ProjectionSplit, AnalysisError> {
    cfg.validate()?;
    let fit = lddc::loewner_fit(data, &cfg.loewner())?;
    debug!(
        "data fit: rank {} residual {:.2e}",
        fit.rank, fit.node_residual
    );
    if fit.node_residual > FIT_FAILURE {
        return Err(AnalysisError::FitFailure(fit.node_residual));
    }
    let scale = data.max_abs();
    let omegas = data.omegas();
    let model = fit.model.filter_terms(|p, r| {
        let peak = omegas
            .iter()
            .map(|&w| (r / (C64::new(0.0, w) - p)).norm())
            .fold(0.0, f64::max);
        peak >= PRUNE_REL * scale
    });
    for &p in model.poles() {
        if p.re.abs() <= AXIS_REL * p.norm().max(f64::MIN_POSITIVE) || p.norm() == 0.0 {
            return Err(AnalysisError::AxisPole(p));
        }
    }
    let stable = model.filter_terms(|p, _| p.re < 0.0);
    let anti = model.filter_terms(|p, _| p.re > 0.0);
    let antistable = RationalModel::new(
        anti.poles().to_vec(),
        anti.residues().to_vec(),
        C64::new(0.0, 0.0),
        0.0,
    )?;
    let node_residual = lddc::node_residual(&stable.add(&antistable)?, data);
    Ok(ProjectionSplit {
        stable,
        antistable,
        node_residual,
        data_scale: scale,
    })
}

/// Markov parameters `h_1, h_2, ...` of the reflected antistable part after
/// the bilinear map `s = a (z - 1) / (z + 1)`.
fn reflected_markov(antistable: &RationalModel, a: f64, count: usize) -> Vec<f64> {
    let mut h = vec![0.0; count];
    for (q, c) in antistable.terms() {
        // c / (s - q) reflected: -c / (s + q), a stable term with pole -q
        let zeta = (a - q) / (a + q);
        let gain = -c * (C64::new(1.0, 0.0) + zeta) / (a + q);
        let mut power = C64::new(1.0, 0.0);
        for hm in h.iter_mut() {
            *hm += (gain * power).re;
            power *= zeta;
        }
    }
    h
}

/// Number of RHP poles from the Hankel rank of the antistable part.
pub fn count_rhp_poles(
    split: &ProjectionSplit,
    cfg: &AnalysisConfig,
) -> Result<(usize, Vec<f64>), AnalysisError> {
    let anti = &split.antistable;
    if anti.order() == 0 {
        return Ok((0, Vec::new()));
    }
    let a = (anti.poles().iter().map(|q| q.norm().ln()).sum::<f64>() / anti.order() as f64).exp();
    let slowest = anti
        .poles()
        .iter()
        .map(|q| ((a - q) / (a + q)).norm())
        .fold(0.0, f64::max);
    // enough parameters for the slowest mode to decay by 1e-12
    let needed = if slowest > 0.0 && slowest < 1.0 {
        ((1e-12f64).ln() / slowest.ln() / 2.0).ceil() as usize
    } else {
        MAX_HANKEL
    };
    let k = needed.clamp(anti.order() + 2, MAX_HANKEL).max(10);
    let h = reflected_markov(anti, a, 2 * k);
    let hankel = DMatrix::from_fn(k, k, |i, j| h[i + j]);
    let sv = linalg::singular_values(&hankel);
    let floor = cfg.abs_floor * sv[0].max(split.data_scale);
    let count = linalg::rank_by_gap(&sv, cfg.rank_gap_threshold, floor)
        .ok_or_else(|| AnalysisError::AmbiguousRank(sv.clone()))?;
    // values past the antistable order are zero up to rounding
    let mut sv = sv;
    sv.truncate(anti.order() + 2);
    Ok((count, sv))
}

/// The `count` antistable poles with the largest residues, conjugate pairs
/// kept together.
pub fn estimate_rhp_poles(
    split: &ProjectionSplit,
    count: usize,
) -> Result<Vec<C64>, AnalysisError> {
    let anti = &split.antistable;
    if count > anti.order() {
        return Err(AnalysisError::CountExceedsOrder {
            count,
            order: anti.order(),
        });
    }
    let mut units: Vec<(f64, Vec<C64>)> = Vec::new();
    for (p, r) in anti.terms() {
        if p.im > 0.0 {
            units.push((r.norm(), vec![p, p.conj()]));
        } else if p.im == 0.0 {
            units.push((r.norm(), vec![p]));
        }
    }
    units.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut poles = Vec::with_capacity(count);
    for (_, members) in units {
        if poles.len() + members.len() <= count {
            poles.extend(members);
        }
        if poles.len() == count {
            break;
        }
    }
    if poles.len() != count {
        warn!(
            "only {} of {count} RHP poles could be selected as whole conjugate groups",
            poles.len()
        );
    }
    Ok(poles)
}

/// Least-squares slope of `log|v|` against `log w` over the given samples.
fn loglog_slope(samples: &[(f64, C64)]) -> f64 {
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|(w, _)| w.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|(_, v)| v.norm().ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Samples of the lowest (`low = true`) or highest decade, at least four.
fn edge_decade(data: &FrequencyResponseData, low: bool) -> Vec<(f64, C64)> {
    let all: Vec<(f64, C64)> = data.iter().collect();
    let picked: Vec<(f64, C64)> = if low {
        let limit = data.omega_min() * 10.0;
        all.iter().copied().filter(|(w, _)| *w <= limit).collect()
    } else {
        let limit = data.omega_max() / 10.0;
        all.iter().copied().filter(|(w, _)| *w >= limit).collect()
    };
    if picked.len() >= 4 {
        picked
    } else if low {
        all[..4].to_vec()
    } else {
        all[all.len() - 4..].to_vec()
    }
}

/// RHP zeros of the plant, found as RHP poles of the inverted data.
///
/// Inverted data of a strictly proper plant grow with frequency; they are
/// first multiplied by `prod a_k / (s + a_k)` with stable poles above the
/// grid so the fit sees a proper function. These factors move no RHP pole.
/// The number of factors is the high-frequency roll-off rounded up.
pub fn estimate_rhp_zeros(
    data: &FrequencyResponseData,
    cfg: &AnalysisConfig,
) -> Result<Vec<C64>, AnalysisError> {
    Ok(analyze_zeros(data, cfg)?.0)
}

fn analyze_zeros(
    data: &FrequencyResponseData,
    cfg: &AnalysisConfig,
) -> Result<(Vec<C64>, Vec<f64>, f64), AnalysisError> {
    cfg.validate()?;
    if let Some((w, _)) = data.iter().find(|(_, v)| v.norm() < 1e-12) {
        return Err(AnalysisError::NearZeroSample(w));
    }
    // rounding up only adds harmless stable poles; rounding down leaves the
    // fit an improper remainder it can only mimic with far RHP poles
    let degree = (-loglog_slope(&edge_decade(data, false)) - 0.1)
        .ceil()
        .max(0.0) as usize;
    let band_edge = OUT_OF_BAND * data.omega_max();
    let mut outcome = None;
    // a roll-off hidden just above the grid leaves an improper remainder that
    // the fit can only mimic with poles far outside the band; add factors
    // until none remain
    for d in degree..=degree + EXTRA_COMPENSATION {
        let values: Vec<C64> = data
            .iter()
            .map(|(w, v)| {
                let s = C64::new(0.0, w);
                (0..d).fold(C64::new(1.0, 0.0) / v, |acc, k| {
                    let a = data.omega_max() * 1.5f64.powi(k as i32 + 1);
                    acc * a / (s + a)
                })
            })
            .collect();
        let inverted = data.with_values(values, format!("inverse of {}", data.label()))?;
        match split_stable_antistable(&inverted, cfg) {
            Ok(split) => {
                let clean = split
                    .antistable
                    .poles()
                    .iter()
                    .all(|p| p.norm() <= band_edge);
                outcome = Some(Ok(split));
                if clean {
                    break;
                }
                debug!("inverse fit with {d} compensating factors has out-of-band RHP poles");
            }
            Err(e @ AnalysisError::FitFailure(_)) => {
                if outcome.is_none() {
                    outcome = Some(Err(e));
                }
            }
            Err(e) => return Err(e),
        }
    }
    let split = outcome.expect("at least one attempt")?;
    let (count, sv) = count_rhp_poles(&split, cfg)?;
    let zeros = if count == 0 {
        Vec::new()
    } else {
        estimate_rhp_poles(&split, count)?
    };
    Ok((zeros, sv, split.node_residual))
}

/// Detects an integrator from the low-frequency slope and, if present,
/// multiplies the data by `s/(s + w_lo) * w_hi/(s + w_hi)`.
pub fn prefilter_integrator(
    data: &FrequencyResponseData,
    cfg: &AnalysisConfig,
) -> Result<(FrequencyResponseData, bool), AnalysisError> {
    let slope = loglog_slope(&edge_decade(data, true));
    debug!("low-frequency log-log slope {slope:.3}");
    if (slope + 1.0).abs() > 0.1 {
        return Ok((data.clone(), false));
    }
    let (lo, hi) = cfg
        .integrator_band
        .unwrap_or((data.omega_min(), 10.0 * data.omega_max()));
    let values = data
        .iter()
        .map(|(w, v)| {
            let s = C64::new(0.0, w);
            v * s / (s + lo) * hi / (s + hi)
        })
        .collect();
    Ok((
        data.with_values(values, format!("{} (integrator filtered)", data.label()))?,
        true,
    ))
}

/// Full instability analysis: integrator prefilter, pole count and
/// locations, zero locations.
pub fn analyze(
    data: &FrequencyResponseData,
    cfg: &AnalysisConfig,
) -> Result<InstabilityReport, AnalysisError> {
    Ok(analyze_with_split(data, cfg)?.0)
}

/// [`analyze`] plus the stable/antistable split of the (prefiltered) data.
pub fn analyze_with_split(
    data: &FrequencyResponseData,
    cfg: &AnalysisConfig,
) -> Result<(InstabilityReport, ProjectionSplit), AnalysisError> {
    cfg.validate()?;
    let (filtered, has_integrator) = prefilter_integrator(data, cfg)?;
    let split = split_stable_antistable(&filtered, cfg)?;
    let (count, sv_poles) = count_rhp_poles(&split, cfg)?;
    let rhp_poles = if count == 0 {
        Vec::new()
    } else {
        estimate_rhp_poles(&split, count)?
    };
    let (rhp_zeros, sv_zeros, zero_residual) = analyze_zeros(&filtered, cfg)?;
    let report = InstabilityReport {
        rhp_poles,
        rhp_zeros,
        has_integrator,
        sv_poles,
        sv_zeros,
        fit_residual: split.node_residual.max(zero_residual),
    };
    Ok((report, split))
}
