//! Achievable reference models.
//!
//! A closed-loop reference `M_f` is achievable by an internally stabilizing
//! controller when it is stable, vanishes at every RHP zero of the plant and
//! equals one at every RHP pole. [`build_achievable`] turns a stable,
//! minimum-phase desired model `M` into such an `M_f`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hardy::InstabilityReport;
use crate::models::{conjugate_partners, ModelError, RationalModel, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefError {
    #[error("points are not closed under complex conjugation")]
    NotConjugateClosed,
    #[error("point {0} is not in the open right half-plane")]
    NotRhp(C64),
    #[error("point {0} is repeated; instabilities must be distinct")]
    NotDistinct(C64),
    #[error(
        "|M(p) B_z(p)| = {value:.3e} at p = {pole}; the desired model cannot be filtered there"
    )]
    DegenerateDenominator { pole: C64, value: f64 },
    #[error("the desired model is unstable (pole {0})")]
    DesiredModelUnstable(C64),
    #[error("the desired model is not minimum-phase (zero {0})")]
    DesiredModelNonMinimumPhase(C64),
    #[error("the desired model must be delay-free")]
    DesiredModelDelayed,
    #[error("achievability check failed: worst interpolation residual {worst:.3e}, M_f stable {stable}, 1 - M_f stable {sensitivity_stable}")]
    AchievabilityCheckFailed {
        worst: f64,
        stable: bool,
        sensitivity_stable: bool,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Interpolation residuals above this are a failed construction.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Which construction produced `M_f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// No RHP poles or zeros: `M_f = M`.
    StableMP,
    /// RHP zeros only: `M_f = M B_z`.
    StableNMP,
    /// RHP poles only: `M_f = 1 - (1 - M) B_p`.
    UnstableMP,
    /// RHP poles and zeros: `M_f = M B_z F`.
    UnstableNMP,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// `M_f(z) = 0` at an RHP zero.
    Zero,
    /// `M_f(p) = 1` at an RHP pole.
    Pole,
}

/// One interpolation condition and how far `M_f` is from meeting it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub constraint: Constraint,
    #[serde(with = "crate::io::complex")]
    pub point: C64,
    pub residual: f64,
}

/// Residuals and stability verdicts of a candidate `M_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AchievabilityCheck {
    pub residuals: Vec<Residual>,
    pub stable: bool,
    pub sensitivity_stable: bool,
}

impl AchievabilityCheck {
    pub fn worst_residual(&self) -> f64 {
        self.residuals
            .iter()
            .map(|r| r.residual)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.stable && self.sensitivity_stable && self.worst_residual() <= RESIDUAL_TOL
    }
}

/// Desired model, its achievable counterpart and the evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AchievableReference {
    pub desired: RationalModel,
    pub achieved: RationalModel,
    pub branch: Branch,
    pub residuals: Vec<Residual>,
    /// `M_f(0)`; negative for an odd number of real RHP zeros in the
    /// `StableNMP` branch.
    pub dc_gain: f64,
    #[serde(with = "crate::io::complex_list")]
    pub rhp_poles: Vec<C64>,
    #[serde(with = "crate::io::complex_list")]
    pub rhp_zeros: Vec<C64>,
}

fn check_points(points: &[C64]) -> Result<(), RefError> {
    for (i, &p) in points.iter().enumerate() {
        if !(p.re > 0.0) || !p.re.is_finite() || !p.im.is_finite() {
            return Err(RefError::NotRhp(p));
        }
        if points[..i]
            .iter()
            .any(|&q| (p - q).norm() <= 1e-12 * p.norm())
        {
            return Err(RefError::NotDistinct(p));
        }
    }
    if conjugate_partners(points, 1e-12).is_none() {
        return Err(RefError::NotConjugateClosed);
    }
    Ok(())
}

/// All-pass product `prod (s - a) / (s + a)` vanishing at every point.
pub fn blaschke(points: &[C64]) -> Result<RationalModel, RefError> {
    check_points(points)?;
    let mirrored: Vec<C64> = points.iter().map(|a| -a).collect();
    Ok(RationalModel::from_zpk(points, &mirrored, 1.0)?)
}

/// Filter `F` with poles at `-p_j` and `F(p_k) = 1 / (M(p_k) B_z(p_k))`.
///
/// `F = N / prod (s + p_j)` with `N = sum gamma_k l_k`, `l_k` the Lagrange
/// basis on the poles and `gamma_k = prod_j (p_k + p_j) / (M(p_k) B_z(p_k))`.
pub fn build_unstable_filter(
    m: &RationalModel,
    bz: &RationalModel,
    rhp_poles: &[C64],
) -> Result<RationalModel, RefError> {
    check_points(rhp_poles)?;
    let n = rhp_poles.len();
    let mut gamma = Vec::with_capacity(n);
    for &p in rhp_poles {
        let mb = m.eval(p)? * bz.eval(p)?;
        if mb.norm() < 1e-12 {
            return Err(RefError::DegenerateDenominator {
                pole: p,
                value: mb.norm(),
            });
        }
        let prod = rhp_poles
            .iter()
            .fold(C64::new(1.0, 0.0), |acc, &q| acc * (p + q));
        gamma.push(prod / mb);
    }
    let lagrange = |k: usize, s: C64| -> C64 {
        (0..n)
            .filter(|&j| j != k)
            .fold(C64::new(1.0, 0.0), |acc, j| {
                acc * (s - rhp_poles[j]) / (rhp_poles[k] - rhp_poles[j])
            })
    };
    let numerator = |s: C64| -> C64 { (0..n).map(|k| gamma[k] * lagrange(k, s)).sum() };
    let poles: Vec<C64> = rhp_poles.iter().map(|p| -p).collect();
    let residues = poles
        .iter()
        .enumerate()
        .map(|(m_idx, &pm)| {
            let den = poles
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != m_idx)
                .fold(C64::new(1.0, 0.0), |acc, (_, &pj)| acc * (pm - pj));
            numerator(pm) / den
        })
        .collect();
    Ok(RationalModel::realified(
        poles,
        residues,
        C64::new(0.0, 0.0),
        0.0,
    )?)
}

/// Interpolation residuals of `M_f` and the stability of `M_f`, `1 - M_f`.
pub fn check_achievability(
    mf: &RationalModel,
    report: &InstabilityReport,
) -> Result<AchievabilityCheck, RefError> {
    let mut residuals = Vec::new();
    for &z in &report.rhp_zeros {
        residuals.push(Residual {
            constraint: Constraint::Zero,
            point: z,
            residual: mf.eval(z)?.norm(),
        });
    }
    for &p in &report.rhp_poles {
        residuals.push(Residual {
            constraint: Constraint::Pole,
            point: p,
            residual: (mf.eval(p)? - 1.0).norm(),
        });
    }
    let sensitivity = RationalModel::constant(1.0).sub(mf)?;
    Ok(AchievabilityCheck {
        residuals,
        stable: mf.is_stable(),
        sensitivity_stable: sensitivity.is_stable(),
    })
}

fn check_desired(m: &RationalModel) -> Result<(), RefError> {
    if m.delay() != 0.0 {
        return Err(RefError::DesiredModelDelayed);
    }
    if let Some(&p) = m.poles().iter().find(|p| !(p.re < 0.0)) {
        return Err(RefError::DesiredModelUnstable(p));
    }
    let (_, zeros) = m.poles_zeros()?;
    if let Some(&z) = zeros.iter().find(|z| !(z.re < 0.0)) {
        return Err(RefError::DesiredModelNonMinimumPhase(z));
    }
    Ok(())
}

/// Achievable reference for the reported instabilities.
pub fn build_achievable(
    m: &RationalModel,
    report: &InstabilityReport,
) -> Result<AchievableReference, RefError> {
    check_desired(m)?;
    check_points(&report.rhp_poles)?;
    check_points(&report.rhp_zeros)?;
    let one = RationalModel::constant(1.0);
    let (branch, achieved) = match (report.rhp_poles.is_empty(), report.rhp_zeros.is_empty()) {
        (true, true) => (Branch::StableMP, m.clone()),
        (true, false) => (Branch::StableNMP, m.mul(&blaschke(&report.rhp_zeros)?)?),
        (false, true) => {
            let bp = blaschke(&report.rhp_poles)?;
            (Branch::UnstableMP, one.sub(&one.sub(m)?.mul(&bp)?)?)
        }
        (false, false) => {
            let bz = blaschke(&report.rhp_zeros)?;
            let f = build_unstable_filter(m, &bz, &report.rhp_poles)?;
            (Branch::UnstableNMP, m.mul(&bz)?.mul(&f)?)
        }
    };
    let check = check_achievability(&achieved, report)?;
    if !check.passed() {
        return Err(RefError::AchievabilityCheckFailed {
            worst: check.worst_residual(),
            stable: check.stable,
            sensitivity_stable: check.sensitivity_stable,
        });
    }
    Ok(AchievableReference {
        desired: m.clone(),
        dc_gain: achieved.dc_gain()?,
        achieved,
        branch,
        residuals: check.residuals,
        rhp_poles: report.rhp_poles.clone(),
        rhp_zeros: report.rhp_zeros.clone(),
    })
}
