//! Transfer-function and frequency-data representations.
//!
//! Every model in the toolkit is a single-input single-output, continuous-time,
//! real-rational transfer function kept in pole-residue form
//!
//! ```text
//! H(s) = (direct + sum_k residue_k / (s - pole_k)) * exp(-delay * s)
//! ```
//!
//! Coefficient polynomials are never formed: ideal controllers routinely have
//! well over a hundred states and polynomial coefficients of that order carry
//! no usable precision.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

pub type C64 = Complex64;

/// Relative tolerance used to pair poles and residues with their conjugates.
pub const CONJUGATE_TOL: f64 = 1e-8;
/// Looser pairing tolerance applied when symmetrising numerically computed terms.
const REALIFY_TOL: f64 = 1e-6;
/// Pairing tolerance for closed-loop modes. Near pole/zero cancellations in
/// the loop make these eigenvalues less accurate than those of a single model.
const LOOP_PAIR_TOL: f64 = 1e-3;
/// Eigenvalue errors scale with the whole spectrum, so slow closed-loop modes
/// are paired against a fraction of the spectral radius.
fn loop_pair_floor(values: &[C64]) -> f64 {
    let radius = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    (1e-2 * radius).max(f64::MIN_POSITIVE)
}

/// Relative distance below which two poles are considered the same pole.
const REPEAT_TOL: f64 = 1e-12;
/// Half relative spacing used to split the double pole of a critically damped
/// second-order model into two simple real poles.
pub const CRITICAL_SPLIT: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("query point {0} coincides with a pole; perturb the evaluation point")]
    PoleHit(C64),
    #[error("pencil sE - A is singular at s = {0}")]
    SingularPencil(C64),
    #[error("repeated pole near {0}; only simple poles are supported")]
    RepeatedPole(C64),
    #[error("model is identically zero")]
    DegenerateModel,
    #[error("poles/residues are not closed under complex conjugation")]
    NotConjugateClosed,
    #[error("delayed models are not supported by {0}")]
    Delay(&'static str),
    #[error("algebraic loop: 1 + P(inf) K(inf) = 0")]
    AlgebraicLoop,
    #[error("eigenvalue computation failed")]
    EigenFailure,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid frequency data: {0}")]
    InvalidData(String),
}

/// Sampled frequency response `{(omega_i, H(i omega_i))}` on a strictly
/// increasing positive grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponseData {
    omegas: Vec<f64>,
    values: Vec<C64>,
    label: String,
}

impl FrequencyResponseData {
    pub const MIN_SAMPLES: usize = 4;

    pub fn new(
        omegas: Vec<f64>,
        values: Vec<C64>,
        label: impl Into<String>,
    ) -> Result<Self, ModelError> {
        if omegas.len() != values.len() {
            return Err(ModelError::InvalidData(format!(
                "{} frequencies but {} values",
                omegas.len(),
                values.len()
            )));
        }
        if omegas.len() < Self::MIN_SAMPLES {
            return Err(ModelError::InvalidData(format!(
                "need at least {} samples, got {}",
                Self::MIN_SAMPLES,
                omegas.len()
            )));
        }
        if omegas.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(ModelError::InvalidData(
                "frequencies must be finite and positive".into(),
            ));
        }
        if omegas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::InvalidData(
                "frequencies must be strictly increasing".into(),
            ));
        }
        if values
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(ModelError::InvalidData("values must be finite".into()));
        }
        Ok(Self {
            omegas,
            values,
            label: label.into(),
        })
    }

    /// Samples `model` at `s = i omega` on the given grid.
    pub fn from_model(
        model: &RationalModel,
        omegas: &[f64],
        label: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let values = model.freq_response(omegas)?;
        Self::new(omegas.to_vec(), values, label)
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, C64)> + '_ {
        self.omegas.iter().copied().zip(self.values.iter().copied())
    }

    /// Same grid, new values.
    pub fn with_values(
        &self,
        values: Vec<C64>,
        label: impl Into<String>,
    ) -> Result<Self, ModelError> {
        Self::new(self.omegas.clone(), values, label)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn omega_min(&self) -> f64 {
        self.omegas[0]
    }

    pub fn omega_max(&self) -> f64 {
        self.omegas[self.omegas.len() - 1]
    }
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

/// Real-rational transfer function in pole-residue form with an optional
/// input delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RationalModelJson", into = "RationalModelJson")]
pub struct RationalModel {
    poles: Vec<C64>,
    residues: Vec<C64>,
    direct: C64,
    delay: f64,
}

#[derive(Serialize, Deserialize)]
struct RationalModelJson {
    poles: Vec<[f64; 2]>,
    residues: Vec<[f64; 2]>,
    direct: [f64; 2],
    #[serde(default)]
    delay: f64,
}

impl TryFrom<RationalModelJson> for RationalModel {
    type Error = ModelError;

    fn try_from(j: RationalModelJson) -> Result<Self, Self::Error> {
        let c = |v: [f64; 2]| C64::new(v[0], v[1]);
        RationalModel::new(
            j.poles.into_iter().map(c).collect(),
            j.residues.into_iter().map(c).collect(),
            c(j.direct),
            j.delay,
        )
    }
}

impl From<RationalModel> for RationalModelJson {
    fn from(m: RationalModel) -> Self {
        let c = |v: &C64| [v.re, v.im];
        RationalModelJson {
            poles: m.poles.iter().map(c).collect(),
            residues: m.residues.iter().map(c).collect(),
            direct: c(&m.direct),
            delay: m.delay,
        }
    }
}

/// Binary operations supported by [`combine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineOp {
    Add,
    Mul,
    /// `a b / (1 + a b)`, i.e. unity negative feedback around the series `a b`.
    Feedback,
}

pub fn combine(
    a: &RationalModel,
    b: &RationalModel,
    op: CombineOp,
) -> Result<RationalModel, ModelError> {
    match op {
        CombineOp::Add => a.add(b),
        CombineOp::Mul => a.mul(b),
        CombineOp::Feedback => a.feedback(b),
    }
}

fn pole_scale(a: C64, b: C64) -> f64 {
    a.norm().max(b.norm())
}

fn same_pole(a: C64, b: C64) -> bool {
    (a - b).norm() <= REPEAT_TOL * pole_scale(a, b)
}

/// Pairs every entry with the index of its complex conjugate (itself when
/// real). Returns `None` if some entry has no partner within `tol`, relative
/// to its magnitude.
///
/// Candidates are accepted cheapest first, so a noisy real value is never
/// paired with a neighbour while a closer match exists.
pub(crate) fn conjugate_partners(values: &[C64], tol: f64) -> Option<Vec<usize>> {
    conjugate_partners_with_floor(values, tol, f64::MIN_POSITIVE)
}

/// As [`conjugate_partners`], with magnitudes below `floor` measured against
/// `floor` instead.
fn conjugate_partners_with_floor(values: &[C64], tol: f64, floor: f64) -> Option<Vec<usize>> {
    let n = values.len();
    let mut candidates = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let scale = v.norm().max(floor);
        let own = v.im.abs() / scale;
        if own <= tol {
            candidates.push((own, i, i));
        }
        for (j, &w) in values.iter().enumerate().skip(i + 1) {
            let d = (w - v.conj()).norm() / scale.max(w.norm());
            if d <= tol {
                candidates.push((d, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut partner: Vec<Option<usize>> = vec![None; n];
    for (_, i, j) in candidates {
        if partner[i].is_none() && partner[j].is_none() {
            partner[i] = Some(j);
            partner[j] = Some(i);
        }
    }
    partner.into_iter().collect()
}

impl RationalModel {
    /// Validating constructor.
    pub fn new(
        poles: Vec<C64>,
        residues: Vec<C64>,
        direct: C64,
        delay: f64,
    ) -> Result<Self, ModelError> {
        if poles.len() != residues.len() {
            return Err(ModelError::InvalidModel(format!(
                "{} poles but {} residues",
                poles.len(),
                residues.len()
            )));
        }
        let finite = |v: &C64| v.re.is_finite() && v.im.is_finite();
        if !poles.iter().chain(&residues).all(finite) || !finite(&direct) {
            return Err(ModelError::InvalidModel("non-finite coefficient".into()));
        }
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(ModelError::InvalidModel(format!(
                "delay must be >= 0, got {delay}"
            )));
        }
        for i in 0..poles.len() {
            for j in (i + 1)..poles.len() {
                if same_pole(poles[i], poles[j]) {
                    return Err(ModelError::RepeatedPole(poles[i]));
                }
            }
        }
        let partners =
            conjugate_partners(&poles, CONJUGATE_TOL).ok_or(ModelError::NotConjugateClosed)?;
        for (i, &j) in partners.iter().enumerate() {
            let (ri, rj) = (residues[i], residues[j]);
            if (rj - ri.conj()).norm() > CONJUGATE_TOL * (ri.norm() + rj.norm()) {
                return Err(ModelError::NotConjugateClosed);
            }
        }
        if direct.im.abs() > CONJUGATE_TOL * direct.norm() {
            return Err(ModelError::NotConjugateClosed);
        }
        Ok(Self {
            poles,
            residues,
            direct,
            delay,
        })
    }

    /// Builds a model from numerically computed terms, snapping conjugate
    /// pairs and real poles to exact symmetry first.
    pub fn realified(
        poles: Vec<C64>,
        residues: Vec<C64>,
        direct: C64,
        delay: f64,
    ) -> Result<Self, ModelError> {
        Self::realified_with_tol(
            poles,
            residues,
            direct,
            delay,
            REALIFY_TOL,
            f64::MIN_POSITIVE,
        )
    }

    pub(crate) fn realified_with_tol(
        poles: Vec<C64>,
        residues: Vec<C64>,
        direct: C64,
        delay: f64,
        tol: f64,
        floor: f64,
    ) -> Result<Self, ModelError> {
        if poles.len() != residues.len() {
            return Err(ModelError::InvalidModel(
                "pole/residue length mismatch".into(),
            ));
        }
        let partners = conjugate_partners_with_floor(&poles, tol, floor)
            .ok_or(ModelError::NotConjugateClosed)?;
        let mut p = poles.clone();
        let mut r = residues.clone();
        for (i, &j) in partners.iter().enumerate() {
            if i == j {
                p[i] = C64::new(poles[i].re, 0.0);
                r[i] = C64::new(residues[i].re, 0.0);
            } else if i < j {
                let pm = (poles[i] + poles[j].conj()) * 0.5;
                let rm = (residues[i] + residues[j].conj()) * 0.5;
                p[i] = pm;
                p[j] = pm.conj();
                r[i] = rm;
                r[j] = rm.conj();
            }
        }
        Self::new(p, r, C64::new(direct.re, 0.0), delay)
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self {
            poles: Vec::new(),
            residues: Vec::new(),
            direct: C64::new(c, 0.0),
            delay: 0.0,
        }
    }

    /// `1 / (1 + tau s)`.
    pub fn first_order(tau: f64) -> Result<Self, ModelError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(ModelError::InvalidModel(format!(
                "time constant must be > 0, got {tau}"
            )));
        }
        Self::new(
            vec![C64::new(-1.0 / tau, 0.0)],
            vec![C64::new(1.0 / tau, 0.0)],
            C64::new(0.0, 0.0),
            0.0,
        )
    }

    /// `1 / (1 + 2 xi s / w0 + s^2 / w0^2)`, unit DC gain.
    ///
    /// The critically damped case `xi = 1` has a double pole at `-w0`, which
    /// pole-residue form cannot hold; it is represented by two simple real
    /// poles at `-w0 (1 -+ CRITICAL_SPLIT)` with the DC gain kept at one. The
    /// result is slightly over-damped, so its step response stays monotone.
    pub fn second_order(w0: f64, xi: f64) -> Result<Self, ModelError> {
        if !(w0 > 0.0 && w0.is_finite() && xi > 0.0 && xi.is_finite()) {
            return Err(ModelError::InvalidModel(format!(
                "need w0 > 0 and xi > 0, got {w0}, {xi}"
            )));
        }
        let (p1, p2) = if (xi - 1.0).abs() < CRITICAL_SPLIT * CRITICAL_SPLIT {
            (
                C64::new(-w0 * (1.0 - CRITICAL_SPLIT), 0.0),
                C64::new(-w0 * (1.0 + CRITICAL_SPLIT), 0.0),
            )
        } else if xi > 1.0 {
            let d = (xi * xi - 1.0).sqrt();
            (C64::new(-w0 * (xi - d), 0.0), C64::new(-w0 * (xi + d), 0.0))
        } else {
            let d = (1.0 - xi * xi).sqrt();
            (C64::new(-w0 * xi, w0 * d), C64::new(-w0 * xi, -w0 * d))
        };
        let gain = (p1 * p2).re;
        Self::from_zpk(&[], &[p1, p2], gain)
    }

    /// `gain * prod(s - z) / prod(s - p)` converted to pole-residue form.
    ///
    /// Requires a proper function (`zeros.len() <= poles.len()`) with simple
    /// poles. Residues are evaluated from the product form, never from
    /// expanded polynomials.
    pub fn from_zpk(zeros: &[C64], poles: &[C64], gain: f64) -> Result<Self, ModelError> {
        if zeros.len() > poles.len() {
            return Err(ModelError::InvalidModel(
                "improper: more zeros than poles".into(),
            ));
        }
        for i in 0..poles.len() {
            for j in (i + 1)..poles.len() {
                if same_pole(poles[i], poles[j]) {
                    return Err(ModelError::RepeatedPole(poles[i]));
                }
            }
        }
        let residues = poles
            .iter()
            .enumerate()
            .map(|(k, &pk)| {
                let num: C64 = zeros.iter().map(|&z| pk - z).product();
                let den: C64 = poles
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, &pj)| pk - pj)
                    .product();
                num / den * gain
            })
            .collect();
        let direct = if zeros.len() == poles.len() {
            gain
        } else {
            0.0
        };
        Self::realified(poles.to_vec(), residues, C64::new(direct, 0.0), 0.0)
    }

    pub fn poles(&self) -> &[C64] {
        &self.poles
    }

    pub fn residues(&self) -> &[C64] {
        &self.residues
    }

    pub fn direct(&self) -> f64 {
        self.direct.re
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn order(&self) -> usize {
        self.poles.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (C64, C64)> + '_ {
        self.poles
            .iter()
            .copied()
            .zip(self.residues.iter().copied())
    }

    pub fn with_delay(&self, delay: f64) -> Result<Self, ModelError> {
        Self::new(
            self.poles.clone(),
            self.residues.clone(),
            self.direct,
            delay,
        )
    }

    pub fn without_delay(&self) -> Self {
        Self {
            delay: 0.0,
            ..self.clone()
        }
    }

    /// All poles strictly in the open left half-plane.
    pub fn is_stable(&self) -> bool {
        self.poles.iter().all(|p| p.re < 0.0)
    }

    /// `direct + sum residue_k / (s - pole_k)`, times `exp(-delay s)`.
    pub fn eval(&self, s: C64) -> Result<C64, ModelError> {
        let mut acc = self.direct;
        for (p, r) in self.terms() {
            let d = s - p;
            if d.norm() <= 8.0 * f64::EPSILON * pole_scale(s, p) {
                return Err(ModelError::PoleHit(s));
            }
            acc += r / d;
        }
        if self.delay > 0.0 {
            acc *= (-s * self.delay).exp();
        }
        Ok(acc)
    }

    pub fn eval_jw(&self, omega: f64) -> Result<C64, ModelError> {
        self.eval(C64::new(0.0, omega))
    }

    pub fn freq_response(&self, omegas: &[f64]) -> Result<Vec<C64>, ModelError> {
        omegas.iter().map(|&w| self.eval_jw(w)).collect()
    }

    /// Largest modulus over the grid.
    pub fn grid_hinf(&self, omegas: &[f64]) -> Result<f64, ModelError> {
        Ok(self
            .freq_response(omegas)?
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max))
    }

    pub fn dc_gain(&self) -> Result<f64, ModelError> {
        Ok(self.eval(C64::new(0.0, 0.0))?.re)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            poles: self.poles.clone(),
            residues: self.residues.iter().map(|r| r * k).collect(),
            direct: self.direct * k,
            delay: self.delay,
        }
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// Keeps the terms for which `keep(pole, residue)` holds; the direct term
    /// and delay are kept unchanged.
    pub fn filter_terms(&self, mut keep: impl FnMut(C64, C64) -> bool) -> Self {
        let (poles, residues) = self.terms().filter(|&(p, r)| keep(p, r)).unzip();
        Self {
            poles,
            residues,
            direct: self.direct,
            delay: self.delay,
        }
    }

    /// Drops terms whose peak modulus on the imaginary axis, `|r| / |Re p|`,
    /// is below `rel` times the largest peak (or the direct term).
    pub fn prune(&self, rel: f64) -> Self {
        let peak = |p: C64, r: C64| r.norm() / p.re.abs().max(f64::MIN_POSITIVE);
        let reference = self
            .terms()
            .map(|(p, r)| peak(p, r))
            .fold(self.direct.norm(), f64::max);
        self.filter_terms(|p, r| peak(p, r) > rel * reference)
    }

    pub fn add(&self, other: &Self) -> Result<Self, ModelError> {
        if self.delay != other.delay {
            return Err(ModelError::Delay(
                "addition of models with different delays",
            ));
        }
        let mut poles = self.poles.clone();
        let mut residues = self.residues.clone();
        for (p, r) in other.terms() {
            match poles.iter().position(|&q| same_pole(p, q)) {
                Some(k) => residues[k] += r,
                None => {
                    poles.push(p);
                    residues.push(r);
                }
            }
        }
        // exact cancellations such as H - H vanish entirely
        let scale_of = |p: C64| {
            let a = self
                .terms()
                .find(|&(q, _)| same_pole(p, q))
                .map_or(0.0, |(_, r)| r.norm());
            let b = other
                .terms()
                .find(|&(q, _)| same_pole(p, q))
                .map_or(0.0, |(_, r)| r.norm());
            a + b
        };
        let (poles, residues): (Vec<_>, Vec<_>) = poles
            .into_iter()
            .zip(residues)
            .filter(|&(p, r)| r.norm() > 4.0 * f64::EPSILON * scale_of(p))
            .unzip();
        Self::realified(poles, residues, self.direct + other.direct, self.delay)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, ModelError> {
        self.add(&other.neg())
    }

    /// Series connection. Poles of the two factors must be disjoint unless the
    /// corresponding residue cancels exactly.
    pub fn mul(&self, other: &Self) -> Result<Self, ModelError> {
        if self.delay > 0.0 && other.delay > 0.0 {
            return Err(ModelError::Delay(
                "series connection of two delayed factors",
            ));
        }
        let a = self.without_delay();
        let b = other.without_delay();
        let mut poles = Vec::with_capacity(a.order() + b.order());
        let mut residues = Vec::with_capacity(a.order() + b.order());
        for (x, y) in [(&a, &b), (&b, &a)] {
            for (p, r) in x.terms() {
                if let Some(k) = y.poles.iter().position(|&q| same_pole(p, q)) {
                    if r.norm() > 0.0 && y.residues[k].norm() > 0.0 {
                        return Err(ModelError::RepeatedPole(p));
                    }
                }
                let other_value = y.eval(p).map_err(|_| ModelError::RepeatedPole(p))?;
                poles.push(p);
                residues.push(r * other_value);
            }
        }
        Self::realified(
            poles,
            residues,
            a.direct * b.direct,
            self.delay + other.delay,
        )
    }

    /// Closed loop `a b / (1 + a b)` of the series `a b` under unity negative
    /// feedback. Computed from a state-space interconnection, so shared poles
    /// between the two factors are allowed.
    pub fn feedback(&self, other: &Self) -> Result<Self, ModelError> {
        if self.delay > 0.0 || other.delay > 0.0 {
            return Err(ModelError::Delay("feedback"));
        }
        let lp = LoopRealization::new(self, other)?;
        lp.complementary_sensitivity()
    }

    /// Poles (from the representation) and finite zeros.
    ///
    /// Zeros are eigenvalues of the inverse-system state matrix
    /// `A - B C / D`. For strictly proper models, the model is first
    /// multiplied by `(s + a_j)` factors until its feedthrough is nonzero, and
    /// the artificial zeros at `-a_j` are removed afterwards.
    pub fn poles_zeros(&self) -> Result<(Vec<C64>, Vec<C64>), ModelError> {
        let total: f64 = self.residues.iter().map(|r| r.norm()).sum();
        if total == 0.0 && self.direct.norm() == 0.0 {
            return Err(ModelError::DegenerateModel);
        }
        let scale = {
            let nz: Vec<f64> = self
                .poles
                .iter()
                .map(|p| p.norm())
                .filter(|&v| v > 0.0)
                .collect();
            if nz.is_empty() {
                1.0
            } else {
                (nz.iter().map(|v| v.ln()).sum::<f64>() / nz.len() as f64).exp()
            }
        };
        let mut residues = self.residues.clone();
        let mut direct = self.direct;
        let mut shifts: Vec<f64> = Vec::new();
        // relative degree: each pass peels one zero at infinity
        while direct.norm() <= 1e-9 * residues.iter().map(|r| r.norm()).sum::<f64>() {
            if shifts.len() >= self.order() {
                return Err(ModelError::DegenerateModel);
            }
            let a = scale * (0.731_f64 + 0.417 * shifts.len() as f64);
            direct = residues.iter().sum();
            for (r, p) in residues.iter_mut().zip(&self.poles) {
                *r *= *p + a;
            }
            shifts.push(a);
            if residues.iter().all(|r| r.norm() == 0.0) && direct.norm() == 0.0 {
                return Err(ModelError::DegenerateModel);
            }
        }
        let n = self.order();
        let mut a = DMatrix::<C64>::from_diagonal(&DVector::from_vec(self.poles.clone()));
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] -= residues[j] / direct;
            }
        }
        let (mut zeros, _) = linalg::eigen(&a).ok_or(ModelError::EigenFailure)?;
        for a_j in shifts {
            let target = C64::new(-a_j, 0.0);
            if let Some((k, _)) = zeros
                .iter()
                .enumerate()
                .min_by(|x, y| (x.1 - target).norm().total_cmp(&(y.1 - target).norm()))
            {
                zeros.remove(k);
            }
        }
        let zeros = snap_conjugates(zeros);
        Ok((self.poles.clone(), zeros))
    }

    /// Real block-diagonal realization with `E = I`. Conjugate pole pairs map
    /// to 2x2 rotation blocks through the unitary change of basis
    /// `(1/sqrt 2) [[1, 1], [-i, i]]`.
    pub fn to_descriptor(&self) -> DescriptorModel {
        let n = self.order();
        let mut a = DMatrix::<C64>::zeros(n, n);
        let mut b = DVector::<C64>::zeros(n);
        let mut c = DVector::<C64>::zeros(n);
        let partners = conjugate_partners(&self.poles, CONJUGATE_TOL);
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut i = 0;
        let mut visited = vec![false; n];
        let mut row = 0;
        while i < n {
            if visited[i] {
                i += 1;
                continue;
            }
            let j = partners.as_ref().map_or(i, |pp| pp[i]);
            let (p, r) = (self.poles[i], self.residues[i]);
            if j == i {
                a[(row, row)] = C64::new(p.re, 0.0);
                b[row] = C64::new(1.0, 0.0);
                c[row] = C64::new(r.re, 0.0);
                row += 1;
            } else {
                let (pu, ru) = if p.im > 0.0 {
                    (p, r)
                } else {
                    (p.conj(), r.conj())
                };
                a[(row, row)] = C64::new(pu.re, 0.0);
                a[(row, row + 1)] = C64::new(pu.im, 0.0);
                a[(row + 1, row)] = C64::new(-pu.im, 0.0);
                a[(row + 1, row + 1)] = C64::new(pu.re, 0.0);
                b[row] = C64::new(sqrt2, 0.0);
                c[row] = C64::new(sqrt2 * ru.re, 0.0);
                c[row + 1] = C64::new(sqrt2 * ru.im, 0.0);
                visited[j] = true;
                row += 2;
            }
            visited[i] = true;
            i += 1;
        }
        DescriptorModel {
            e: DMatrix::identity(n, n),
            a,
            b,
            c,
            d: self.direct,
        }
    }
}

/// Snaps nearly-conjugate pairs and nearly-real values of a computed root set.
pub(crate) fn snap_conjugates(values: Vec<C64>) -> Vec<C64> {
    snap_conjugates_with_tol(values, REALIFY_TOL, f64::MIN_POSITIVE)
}

fn snap_conjugates_with_tol(values: Vec<C64>, tol: f64, floor: f64) -> Vec<C64> {
    let Some(partners) = conjugate_partners_with_floor(&values, tol, floor) else {
        return values;
    };
    let mut out = values.clone();
    for (i, &j) in partners.iter().enumerate() {
        if i == j {
            out[i] = C64::new(values[i].re, 0.0);
        } else if i < j {
            let m = (values[i] + values[j].conj()) * 0.5;
            out[i] = m;
            out[j] = m.conj();
        }
    }
    out
}

/// Generalized state-space model `C (sE - A)^{-1} B + D`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorModel {
    e: DMatrix<C64>,
    a: DMatrix<C64>,
    b: DVector<C64>,
    c: DVector<C64>,
    d: C64,
}

impl DescriptorModel {
    pub fn new(
        e: DMatrix<C64>,
        a: DMatrix<C64>,
        b: DVector<C64>,
        c: DVector<C64>,
        d: C64,
    ) -> Result<Self, ModelError> {
        let n = a.nrows();
        if a.ncols() != n || e.nrows() != n || e.ncols() != n || b.len() != n || c.len() != n {
            return Err(ModelError::InvalidModel(format!(
                "inconsistent descriptor dimensions: E {}x{}, A {}x{}, B {}, C {}",
                e.nrows(),
                e.ncols(),
                a.nrows(),
                a.ncols(),
                b.len(),
                c.len()
            )));
        }
        Ok(Self { e, a, b, c, d })
    }

    /// Static gain only (order 0).
    pub fn feedthrough(d: f64) -> Self {
        Self {
            e: DMatrix::zeros(0, 0),
            a: DMatrix::zeros(0, 0),
            b: DVector::zeros(0),
            c: DVector::zeros(0),
            d: C64::new(d, 0.0),
        }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn e(&self) -> &DMatrix<C64> {
        &self.e
    }

    pub fn a(&self) -> &DMatrix<C64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<C64> {
        &self.b
    }

    pub fn c(&self) -> &DVector<C64> {
        &self.c
    }

    pub fn d(&self) -> C64 {
        self.d
    }

    pub fn eval(&self, s: C64) -> Result<C64, ModelError> {
        if self.order() == 0 {
            return Ok(self.d);
        }
        let pencil = self.e.map(|v| v * s) - &self.a;
        let x = pencil
            .lu()
            .solve(&self.b)
            .ok_or(ModelError::SingularPencil(s))?;
        let y = self.c.dot(&x) + self.d;
        if y.re.is_finite() && y.im.is_finite() {
            Ok(y)
        } else {
            Err(ModelError::SingularPencil(s))
        }
    }

    /// Pole-residue form. Eigenvalues of the pencil farther than `1e10` times
    /// the pencil's natural frequency scale `||A|| / ||E||` are treated as
    /// infinite and folded into the direct term.
    pub fn to_rational(&self) -> Result<RationalModel, ModelError> {
        let enorm = self.e.norm();
        let reference = if enorm > 0.0 {
            self.a.norm() / enorm
        } else {
            1.0
        };
        self.to_rational_with_cutoff(1e10 * reference.max(f64::MIN_POSITIVE))
    }

    /// Pole-residue form via the shift-and-invert eigenproblem
    /// `M = (A - s0 E)^{-1} E`. Eigenvalues `mu` of `M` map to poles
    /// `s0 + 1/mu`; those with `|1/mu| > far` are infinite eigenvalues whose
    /// (constant) contribution goes into the direct term.
    pub fn to_rational_with_cutoff(&self, far: f64) -> Result<RationalModel, ModelError> {
        let n = self.order();
        if n == 0 {
            return RationalModel::realified(vec![], vec![], self.d, 0.0);
        }
        let enorm = self.e.norm();
        let reference = if enorm > 0.0 {
            (self.a.norm() / enorm).max(f64::MIN_POSITIVE)
        } else {
            1.0
        };
        let mut best: Option<(f64, nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>, C64)> = None;
        for factor in [0.7093, -1.3137, 2.2361, -0.4142, 3.1623, -5.0] {
            let s0 = C64::new(factor * reference, 0.0);
            let shifted = &self.a - self.e.map(|v| v * s0);
            let sv = shifted.singular_values();
            let (hi, lo) = (sv.max(), sv.min());
            let rcond = if hi > 0.0 { lo / hi } else { 0.0 };
            if best.as_ref().is_none_or(|(r, _, _)| rcond > *r) {
                best = Some((rcond, shifted.lu(), s0));
            }
            if rcond > 1e-8 {
                break;
            }
        }
        let (_, lu, s0) = best.expect("at least one shift candidate");
        let m = lu.solve(&self.e).ok_or(ModelError::SingularPencil(s0))?;
        let bp = lu.solve(&self.b).ok_or(ModelError::SingularPencil(s0))?;
        let (mu, v) = linalg::eigen(&m).ok_or(ModelError::EigenFailure)?;
        let w = v.clone().try_inverse().ok_or(ModelError::EigenFailure)?;
        let wb = &w * &bp;
        let mut poles = Vec::with_capacity(n);
        let mut residues = Vec::with_capacity(n);
        let mut direct = self.d;
        for (k, &mu_k) in mu.iter().enumerate() {
            let gain = v.column(k).dot(&self.c) * wb[k];
            if mu_k.norm() * far <= 1.0 {
                direct -= gain;
            } else {
                poles.push(s0 + mu_k.inv());
                residues.push(gain / mu_k);
            }
        }
        RationalModel::realified(poles, residues, direct, 0.0)
    }
}

/// State-space realization of the standard unity-feedback loop around a
/// plant `P` and controller `K`, with a reference entering at the error and
/// a disturbance entering at the plant input:
///
/// ```text
/// e = r - y,  u = K e,  y = P (u + d)
/// ```
pub(crate) struct LoopRealization {
    a: DMatrix<C64>,
    // input columns for r and d
    b_r: DVector<C64>,
    b_d: DVector<C64>,
    // output rows for y, e and u
    c_y: DVector<C64>,
    c_u: DVector<C64>,
    d_yr: C64,
    d_yd: C64,
    d_ur: C64,
}

impl LoopRealization {
    pub(crate) fn new(
        plant: &RationalModel,
        controller: &RationalModel,
    ) -> Result<Self, ModelError> {
        let (np, nk) = (plant.order(), controller.order());
        let n = np + nk;
        let one = C64::new(1.0, 0.0);
        let dp = plant.direct;
        let dk = controller.direct;
        let delta = one + dk * dp;
        if delta.norm() <= 1e-12 * (1.0 + (dk * dp).norm()) {
            return Err(ModelError::AlgebraicLoop);
        }
        // u = ux . x + uw1 r + uw2 d
        let mut ux = DVector::<C64>::zeros(n);
        for i in 0..np {
            ux[i] = -dk * plant.residues[i] / delta;
        }
        for i in 0..nk {
            ux[np + i] = controller.residues[i] / delta;
        }
        let uw1 = dk / delta;
        let uw2 = -dk * dp / delta;
        // y = yx . x + yw1 r + yw2 d
        let mut yx = ux.map(|v| v * dp);
        for i in 0..np {
            yx[i] += plant.residues[i];
        }
        let yw1 = dp * uw1;
        let yw2 = dp * uw2 + dp;

        let mut a = DMatrix::<C64>::zeros(n, n);
        let mut b_r = DVector::<C64>::zeros(n);
        let mut b_d = DVector::<C64>::zeros(n);
        // plant states: xp' = Ap xp + (u + d)
        for i in 0..np {
            a[(i, i)] += plant.poles[i];
            for j in 0..n {
                a[(i, j)] += ux[j];
            }
            b_r[i] = uw1;
            b_d[i] = uw2 + one;
        }
        // controller states: xk' = Ak xk + e,  e = r - y
        for i in 0..nk {
            let row = np + i;
            a[(row, row)] += controller.poles[i];
            for j in 0..n {
                a[(row, j)] -= yx[j];
            }
            b_r[row] = one - yw1;
            b_d[row] = -yw2;
        }
        Ok(Self {
            a,
            b_r,
            b_d,
            c_y: yx,
            c_u: ux,
            d_yr: yw1,
            d_yd: yw2,
            d_ur: uw1,
        })
    }

    pub(crate) fn closed_loop_poles(&self) -> Result<Vec<C64>, ModelError> {
        let (values, _) = linalg::eigen(&self.a).ok_or(ModelError::EigenFailure)?;
        let floor = loop_pair_floor(&values);
        Ok(snap_conjugates_with_tol(values, LOOP_PAIR_TOL, floor))
    }

    fn transfer(
        &self,
        b: &DVector<C64>,
        c: &DVector<C64>,
        d: C64,
    ) -> Result<RationalModel, ModelError> {
        let (poles, residues) =
            linalg::modal_terms(&self.a, b, c).ok_or(ModelError::EigenFailure)?;
        for i in 0..poles.len() {
            for j in (i + 1)..poles.len() {
                if same_pole(poles[i], poles[j]) {
                    return Err(ModelError::RepeatedPole(poles[i]));
                }
            }
        }
        let floor = loop_pair_floor(&poles);
        Ok(
            RationalModel::realified_with_tol(poles, residues, d, 0.0, LOOP_PAIR_TOL, floor)?
                .prune(1e-12),
        )
    }

    /// `y / r = PK / (1 + PK)`.
    pub(crate) fn complementary_sensitivity(&self) -> Result<RationalModel, ModelError> {
        self.transfer(&self.b_r, &self.c_y, self.d_yr)
    }

    /// `e / r = 1 / (1 + PK)`.
    pub(crate) fn sensitivity(&self) -> Result<RationalModel, ModelError> {
        let c = self.c_y.map(|v| -v);
        self.transfer(&self.b_r, &c, C64::new(1.0, 0.0) - self.d_yr)
    }

    /// `y / d = P / (1 + PK)`.
    pub(crate) fn plant_sensitivity(&self) -> Result<RationalModel, ModelError> {
        self.transfer(&self.b_d, &self.c_y, self.d_yd)
    }

    /// `u / r = K / (1 + PK)`.
    pub(crate) fn control_sensitivity(&self) -> Result<RationalModel, ModelError> {
        self.transfer(&self.b_r, &self.c_u, self.d_ur)
    }
}
