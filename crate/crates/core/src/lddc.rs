//! Loewner data-driven controller identification.
//!
//! The chain is: ideal-controller frequency response from plant data and an
//! achievable reference model, Loewner interpolation of those samples into a
//! descriptor model, projection onto its stable part, and residue-based order
//! reduction.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::linalg;
use crate::models::{
    DescriptorModel, FrequencyResponseData, LoopRealization, ModelError, RationalModel, C64,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IdentError {
    #[error("1 - M_f vanishes at {count} of {total} nodes (first at omega = {omega})")]
    SensitivitySingular {
        count: usize,
        total: usize,
        omega: f64,
    },
    #[error("no clear singular-value gap in the Loewner pencil; raise the order cap or inspect the spectrum")]
    RankDetectionAmbiguous,
    #[error("pole {0} lies on the imaginary axis")]
    AxisPole(C64),
    #[error("reduction order must be >= 1")]
    OrderTooSmall,
    #[error("reduction order {requested} exceeds model order {available}")]
    OrderTooLarge { requested: usize, available: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Tuning of the Loewner rank decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoewnerOptions {
    /// Ratio `sigma_k / sigma_{k+1}` that declares a rank drop.
    pub gap_threshold: f64,
    /// Singular values below `rel_floor * sigma_1` are treated as zero.
    pub rel_floor: f64,
    /// Hard cap on the realized order.
    pub max_order: usize,
}

impl Default for LoewnerOptions {
    fn default() -> Self {
        Self {
            gap_threshold: 1e3,
            rel_floor: 1e-13,
            max_order: 200,
        }
    }
}

/// Everything produced by a Loewner fit.
#[derive(Debug, Clone)]
pub struct LoewnerFit {
    /// Rank-compressed pencil `(E, A, B, C) = (-L_r, -sL_r, V_r, W_r)`,
    /// real-valued, before infinite eigenvalues are deflated.
    pub pencil: DescriptorModel,
    /// Pole-residue form of the interpolant.
    pub model: RationalModel,
    /// Singular values of the stacked pencil `[L, sL]`, normalized so the
    /// largest is 1.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// Ratio `sigma_r / sigma_{r+1}` at the chosen rank (infinite when the
    /// next value is exactly zero or absent).
    pub rank_gap: f64,
    /// Largest relative mismatch `|K(i w) - v| / |v|` over all sample nodes.
    pub node_residual: f64,
}

/// Ideal controller `K_i = M_f(i w_i) / (Phi_i (1 - M_f(i w_i)))`.
///
/// Nodes where the denominator vanishes are dropped with a warning when they
/// are at most 1% of the grid; beyond that the call fails.
pub fn ideal_controller_frf(
    plant: &FrequencyResponseData,
    reference: &RationalModel,
) -> Result<FrequencyResponseData, IdentError> {
    let mut omegas = Vec::with_capacity(plant.len());
    let mut values = Vec::with_capacity(plant.len());
    let mut dropped = Vec::new();
    for (w, phi) in plant.iter() {
        let m = reference.eval_jw(w)?;
        let den = phi * (C64::new(1.0, 0.0) - m);
        if den.norm() <= 1e-14 {
            dropped.push(w);
            continue;
        }
        omegas.push(w);
        values.push(m / den);
    }
    if !dropped.is_empty() {
        if dropped.len() * 100 > plant.len() {
            return Err(IdentError::SensitivitySingular {
                count: dropped.len(),
                total: plant.len(),
                omega: dropped[0],
            });
        }
        warn!(
            "dropping {} node(s) where 1 - M_f vanishes: {:?}",
            dropped.len(),
            dropped
        );
    }
    Ok(FrequencyResponseData::new(
        omegas,
        values,
        format!("ideal controller for {}", plant.label()),
    )?)
}

/// Loewner interpolant of the samples as a real descriptor model with
/// invertible `E`, McMillan order and feedthrough separated.
pub fn loewner_interpolate(data: &FrequencyResponseData) -> Result<DescriptorModel, IdentError> {
    Ok(loewner_fit(data, &LoewnerOptions::default())?
        .model
        .to_descriptor())
}

/// Unitary block that maps a `(x, conj x)` pair to real coordinates.
fn pair_block() -> [[C64; 2]; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [
        [C64::new(h, 0.0), C64::new(0.0, -h)],
        [C64::new(h, 0.0), C64::new(0.0, h)],
    ]
}

/// `J^H M`, with `J` the block-diagonal pairing transform acting on rows.
fn transform_rows(m: &DMatrix<C64>) -> DMatrix<C64> {
    let j = pair_block();
    let mut out = m.clone();
    for blk in 0..m.nrows() / 2 {
        let (r0, r1) = (2 * blk, 2 * blk + 1);
        for col in 0..m.ncols() {
            let (a, b) = (m[(r0, col)], m[(r1, col)]);
            out[(r0, col)] = j[0][0].conj() * a + j[1][0].conj() * b;
            out[(r1, col)] = j[0][1].conj() * a + j[1][1].conj() * b;
        }
    }
    out
}

/// `M J`, with `J` acting on columns.
fn transform_cols(m: &DMatrix<C64>) -> DMatrix<C64> {
    let j = pair_block();
    let mut out = m.clone();
    for blk in 0..m.ncols() / 2 {
        let (c0, c1) = (2 * blk, 2 * blk + 1);
        for row in 0..m.nrows() {
            let (a, b) = (m[(row, c0)], m[(row, c1)]);
            out[(row, c0)] = a * j[0][0] + b * j[1][0];
            out[(row, c1)] = a * j[0][1] + b * j[1][1];
        }
    }
    out
}

/// Real part of a matrix that is real up to rounding.
fn real_part(m: &DMatrix<C64>) -> DMatrix<f64> {
    let tol = 1e-8 * (1.0 + m.norm());
    debug_assert!(m.iter().all(|v| v.im.abs() <= tol));
    m.map(|v| v.re)
}

/// Full Loewner fit with diagnostics.
///
/// Samples are split alternately into left (1st, 3rd, ...) and right (2nd,
/// 4th, ...) sets, each completed with its conjugate mirror `(-i w, conj v)`.
/// Frequencies are normalized by the geometric mean of the grid before the
/// matrices are assembled.
pub fn loewner_fit(
    data: &FrequencyResponseData,
    opts: &LoewnerOptions,
) -> Result<LoewnerFit, IdentError> {
    let omegas = data.omegas();
    let values = data.values();
    let scale = (omegas.iter().map(|w| w.ln()).sum::<f64>() / omegas.len() as f64).exp();

    let mut left = Vec::new();
    let mut right = Vec::new();
    for (i, (&w, &v)) in omegas.iter().zip(values).enumerate() {
        let s = C64::new(0.0, w / scale);
        let side = if i % 2 == 0 { &mut left } else { &mut right };
        side.push((s, v));
        side.push((s.conj(), v.conj()));
    }
    let (nl, nr) = (left.len(), right.len());

    let mut loewner = DMatrix::<C64>::zeros(nl, nr);
    let mut shifted = DMatrix::<C64>::zeros(nl, nr);
    for (i, &(mu, v)) in left.iter().enumerate() {
        for (j, &(lambda, w)) in right.iter().enumerate() {
            let den = mu - lambda;
            loewner[(i, j)] = (v - w) / den;
            shifted[(i, j)] = (mu * v - lambda * w) / den;
        }
    }
    let v_col = DMatrix::from_iterator(nl, 1, left.iter().map(|&(_, v)| v));
    let w_row = DMatrix::from_iterator(1, nr, right.iter().map(|&(_, w)| w));

    let l_r = real_part(&transform_cols(&transform_rows(&loewner)));
    let sl_r = real_part(&transform_cols(&transform_rows(&shifted)));
    let v_r = real_part(&transform_rows(&v_col));
    let w_r = real_part(&transform_cols(&w_row));

    let mut wide = DMatrix::<f64>::zeros(nl, 2 * nr);
    wide.view_mut((0, 0), (nl, nr)).copy_from(&l_r);
    wide.view_mut((0, nr), (nl, nr)).copy_from(&sl_r);
    let mut tall = DMatrix::<f64>::zeros(2 * nl, nr);
    tall.view_mut((0, 0), (nl, nr)).copy_from(&l_r);
    tall.view_mut((nl, 0), (nl, nr)).copy_from(&sl_r);

    let svd_wide = wide.svd(true, false);
    let svd_tall = tall.svd(false, true);
    let mut order: Vec<usize> = (0..svd_wide.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd_wide.singular_values[b].total_cmp(&svd_wide.singular_values[a]));
    let sigma1 = svd_wide.singular_values[order[0]];
    let sv: Vec<f64> = order
        .iter()
        .map(|&k| {
            if sigma1 > 0.0 {
                svd_wide.singular_values[k] / sigma1
            } else {
                0.0
            }
        })
        .collect();

    let mut rank = linalg::rank_by_gap(&sv, opts.gap_threshold, opts.rel_floor)
        .ok_or(IdentError::RankDetectionAmbiguous)?;
    if rank > opts.max_order {
        warn!("Loewner rank {rank} capped at {}", opts.max_order);
        rank = opts.max_order;
    }
    let u = svd_wide.u.expect("left vectors requested");
    let vt = svd_tall.v_t.expect("right vectors requested");
    let mut order_t: Vec<usize> = (0..svd_tall.singular_values.len()).collect();
    order_t.sort_by(|&a, &b| svd_tall.singular_values[b].total_cmp(&svd_tall.singular_values[a]));
    // eigenvalues far beyond the top node only add a constant on the grid
    let far = FAR_FACTOR * omegas[omegas.len() - 1] / scale;

    let realize = |rank: usize| -> Result<(DescriptorModel, RationalModel, f64), IdentError> {
        let y = DMatrix::from_fn(nl, rank, |i, j| u[(i, order[j])]);
        let x = DMatrix::from_fn(nr, rank, |i, j| vt[(order_t[j], i)]);
        let yt = y.transpose();
        let cplx = |m: DMatrix<f64>| m.map(|v| C64::new(v, 0.0));
        let e = cplx(-(&yt * &l_r * &x));
        let a = cplx(-(&yt * &sl_r * &x));
        let b = DVector::from_iterator(rank, (&yt * &v_r).iter().map(|&v| C64::new(v, 0.0)));
        let c = DVector::from_iterator(rank, (&w_r * &x).iter().map(|&v| C64::new(v, 0.0)));
        let pencil_scaled = DescriptorModel::new(
            e.clone(),
            a.clone(),
            b.clone(),
            c.clone(),
            C64::new(0.0, 0.0),
        )?;
        let scaled = pencil_scaled.to_rational_with_cutoff(far)?;
        let model = RationalModel::realified(
            scaled.poles().iter().map(|p| p * scale).collect(),
            scaled.residues().iter().map(|r| r * scale).collect(),
            C64::new(scaled.direct(), 0.0),
            0.0,
        )?;
        let pencil = DescriptorModel::new(e.map(|v| v / scale), a, b, c, C64::new(0.0, 0.0))?;
        let resid = node_residual(&model, data);
        Ok((pencil, model, resid))
    };

    let mut best = realize(rank)?;
    if best.2 > ESCALATION_RESIDUAL {
        // features below the singular-value floor: try a few more directions
        let top = (rank + ESCALATION_STEPS).min(opts.max_order).min(sv.len());
        for candidate in rank + 1..=top {
            if let Ok(trial) = realize(candidate) {
                if trial.2 < best.2 {
                    rank = candidate;
                    best = trial;
                }
            }
            if best.2 <= ESCALATION_RESIDUAL {
                break;
            }
        }
    }
    let rank_gap = match sv.get(rank) {
        Some(&next) if next > 0.0 && rank > 0 => sv[rank - 1] / next,
        _ => f64::INFINITY,
    };
    let (pencil, model, node_residual) = best;
    Ok(LoewnerFit {
        pencil,
        model,
        singular_values: sv,
        rank,
        rank_gap,
        node_residual,
    })
}

/// Poles beyond this multiple of the top frequency are folded into the direct
/// term; their in-band effect differs from a constant by under `1 / FAR_FACTOR`.
const FAR_FACTOR: f64 = 1e5;
/// Node residual above which extra singular directions are tried.
const ESCALATION_RESIDUAL: f64 = 1e-6;
/// Maximum number of extra directions tried.
const ESCALATION_STEPS: usize = 8;

/// Largest relative mismatch between a model and the samples.
pub fn node_residual(model: &RationalModel, data: &FrequencyResponseData) -> f64 {
    data.iter()
        .map(|(w, v)| match model.eval_jw(w) {
            Ok(h) => (h - v).norm() / v.norm().max(f64::MIN_POSITIVE),
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Magnitude below which a pole is an intentional integrator.
pub const INTEGRATOR_TOL: f64 = 1e-9;
/// Poles with `|Re p|` below this (and not integrators) sit on the axis.
pub const AXIS_TOL: f64 = 1e-10;

/// Additive stable part of a descriptor model: antistable partial fractions
/// are discarded, the direct term and any integrator poles are kept.
pub fn project_stable(model: &DescriptorModel) -> Result<RationalModel, IdentError> {
    let rational = model.to_rational()?;
    Ok(split_stable(&rational)?.0)
}

/// `(stable part incl. integrators, discarded antistable part)`.
pub fn split_stable(model: &RationalModel) -> Result<(RationalModel, RationalModel), IdentError> {
    for &p in model.poles() {
        if p.norm() >= INTEGRATOR_TOL && p.re.abs() < AXIS_TOL {
            return Err(IdentError::AxisPole(p));
        }
    }
    let keep = |p: C64| p.norm() < INTEGRATOR_TOL || p.re < 0.0;
    let stable = model.filter_terms(|p, _| keep(p));
    let anti = model.filter_terms(|p, _| !keep(p));
    let anti = RationalModel::new(
        anti.poles().to_vec(),
        anti.residues().to_vec(),
        C64::new(0.0, 0.0),
        0.0,
    )?;
    Ok((stable, anti))
}

/// Residue-dominance reduction to `order` states.
///
/// Terms are ranked by `sum_i |r / (i w_i - p)|` over `grid`; conjugate pairs
/// are kept together, so the result may hold one more state than requested.
/// The kept residues are then refit by least squares to the full model on
/// `grid`, weighted by `1 / |K(i w)|`; poles and the direct term are kept.
/// Antistable terms are never selected.
pub fn reduce(
    model: &RationalModel,
    order: usize,
    grid: &[f64],
) -> Result<RationalModel, IdentError> {
    if order < 1 {
        return Err(IdentError::OrderTooSmall);
    }
    if order > model.order() {
        return Err(IdentError::OrderTooLarge {
            requested: order,
            available: model.order(),
        });
    }
    let stable = split_stable(model)?.0;
    if order >= stable.order() {
        return Ok(stable);
    }
    let weight = |p: C64, r: C64| -> f64 {
        grid.iter()
            .map(|&w| (r / (C64::new(0.0, w) - p)).norm())
            .sum()
    };
    // one entry per real pole or conjugate pair
    let mut units: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut used = vec![false; stable.order()];
    for (i, (p, _)) in stable.terms().enumerate() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let mut members = vec![i];
        if p.im != 0.0 {
            if let Some(j) = stable.poles().iter().position(|&q| q == p.conj()) {
                used[j] = true;
                members.push(j);
            }
        }
        let w = members
            .iter()
            .map(|&k| weight(stable.poles()[k], stable.residues()[k]))
            .sum::<f64>()
            / members.len() as f64;
        units.push((w, members));
    }
    units.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut kept: Vec<C64> = Vec::new();
    for (_, members) in &units {
        if kept.len() >= order {
            break;
        }
        if kept.len() + members.len() > order {
            warn!(
                "reduction to order {order} would split a conjugate pair; keeping {}",
                kept.len() + members.len()
            );
        }
        kept.push(stable.poles()[members[0]]);
        if members.len() == 2 {
            kept.push(stable.poles()[members[1]]);
        }
    }
    refit_residues(&stable, &kept, grid)
}

/// Weighted least-squares residues for fixed `poles` so that
/// `sum r / (s - p) + D` matches `target` on `grid`.
fn refit_residues(
    target: &RationalModel,
    poles: &[C64],
    grid: &[f64],
) -> Result<RationalModel, IdentError> {
    let upper: Vec<C64> = poles.iter().copied().filter(|p| p.im >= 0.0).collect();
    let cols: usize = upper.iter().map(|p| if p.im == 0.0 { 1 } else { 2 }).sum();
    let d = target.direct();
    let mut a = DMatrix::<f64>::zeros(2 * grid.len(), cols);
    let mut b = DVector::<f64>::zeros(2 * grid.len());
    for (i, &w) in grid.iter().enumerate() {
        let s = C64::new(0.0, w);
        let full = target.eval(s)?;
        let scale = 1.0 / full.norm().max(f64::MIN_POSITIVE);
        let rhs = (full - d) * scale;
        b[2 * i] = rhs.re;
        b[2 * i + 1] = rhs.im;
        let mut col = 0;
        for &p in &upper {
            let basis: Vec<C64> = if p.im == 0.0 {
                vec![1.0 / (s - p)]
            } else {
                let (f, g) = (1.0 / (s - p), 1.0 / (s - p.conj()));
                vec![f + g, C64::new(0.0, 1.0) * (f - g)]
            };
            for v in basis {
                let v = v * scale;
                a[(2 * i, col)] = v.re;
                a[(2 * i + 1, col)] = v.im;
                col += 1;
            }
        }
    }
    let x = a
        .svd(true, true)
        .solve(&b, f64::EPSILON)
        .map_err(|_| IdentError::Model(ModelError::EigenFailure))?;
    let (mut out_poles, mut residues) = (Vec::new(), Vec::new());
    let mut col = 0;
    for &p in &upper {
        if p.im == 0.0 {
            out_poles.push(p);
            residues.push(C64::new(x[col], 0.0));
            col += 1;
        } else {
            let r = C64::new(x[col], x[col + 1]);
            out_poles.extend([p, p.conj()]);
            residues.extend([r, r.conj()]);
            col += 2;
        }
    }
    Ok(RationalModel::new(
        out_poles,
        residues,
        C64::new(d, 0.0),
        0.0,
    )?)
}

/// Relative root-mean-square mismatch `sqrt(mean |K(i w) - v|^2 / |v|^2)`.
pub fn relative_rms_error(
    model: &RationalModel,
    data: &FrequencyResponseData,
) -> Result<f64, IdentError> {
    let mut acc = 0.0;
    for (w, v) in data.iter() {
        acc += ((model.eval_jw(w)? - v).norm() / v.norm().max(f64::MIN_POSITIVE)).powi(2);
    }
    Ok((acc / data.len() as f64).sqrt())
}

/// Result of the internal-stability test of a plant/controller pair.
#[derive(Debug, Clone)]
pub struct StabilityVerdict {
    pub stable: bool,
    /// Eigenvalues of the closed-loop state matrix; hidden modes from
    /// pole/zero cancellations show up here.
    pub closed_loop_poles: Vec<C64>,
    /// `1 / (1 + PK)`
    pub sensitivity: RationalModel,
    /// `P / (1 + PK)`
    pub plant_sensitivity: RationalModel,
    /// `K / (1 + PK)`
    pub control_sensitivity: RationalModel,
    /// `PK / (1 + PK)`
    pub complementary: RationalModel,
}

/// Gang-of-four internal stability of the unity-feedback loop.
pub fn internal_stability(
    plant: &RationalModel,
    controller: &RationalModel,
) -> Result<StabilityVerdict, IdentError> {
    if plant.delay() > 0.0 || controller.delay() > 0.0 {
        return Err(ModelError::Delay("internal stability analysis").into());
    }
    let lp = LoopRealization::new(plant, controller)?;
    let closed_loop_poles = lp.closed_loop_poles()?;
    let stable = closed_loop_poles.iter().all(|p| p.re < 0.0);
    Ok(StabilityVerdict {
        stable,
        closed_loop_poles,
        sensitivity: lp.sensitivity()?,
        plant_sensitivity: lp.plant_sensitivity()?,
        control_sensitivity: lp.control_sensitivity()?,
        complementary: lp.complementary_sensitivity()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::logspace;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn ideal_controller_nodes() {
        let plant =
            FrequencyResponseData::new(vec![1.0, 2.0, 3.0, 4.0], vec![c(1.0, 0.0); 4], "unit")
                .unwrap();
        let half = RationalModel::constant(0.5);
        let k = ideal_controller_frf(&plant, &half).unwrap();
        assert!(k.values().iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));
        let zero = RationalModel::constant(0.0);
        let k = ideal_controller_frf(&plant, &zero).unwrap();
        assert!(k.values().iter().all(|v| v.norm() == 0.0));
        let one = RationalModel::constant(1.0);
        assert!(matches!(
            ideal_controller_frf(&plant, &one),
            Err(IdentError::SensitivitySingular { count: 4, .. })
        ));
    }

    #[test]
    fn loewner_recovers_first_order() {
        let truth = RationalModel::from_zpk(&[], &[c(-1.0, 0.0)], 1.0).unwrap();
        let grid = logspace(1e-2, 1e2, 40);
        let data = FrequencyResponseData::from_model(&truth, &grid, "1/(s+1)").unwrap();
        let fit = loewner_fit(&data, &LoewnerOptions::default()).unwrap();
        assert_eq!(fit.model.order(), 1);
        let s = c(0.0, 2.0);
        assert!((fit.model.eval(s).unwrap() - truth.eval(s).unwrap()).norm() < 1e-9);
        let desc = loewner_interpolate(&data).unwrap();
        assert!((desc.eval(s).unwrap() - truth.eval(s).unwrap()).norm() < 1e-9);
    }
    #[test]
    fn loewner_recovers_biproper_model() {
        let truth = RationalModel::from_zpk(&[c(-1.0 / 3.0, 0.0)], &[c(-2.0, 0.0)], 3.0).unwrap();
        let data =
            FrequencyResponseData::from_model(&truth, &logspace(1e-2, 1e2, 50), "k").unwrap();
        let fit = loewner_fit(&data, &LoewnerOptions::default()).unwrap();
        assert_eq!(fit.model.order(), 1);
        assert!((fit.model.direct() - 3.0).abs() < 1e-9);
        assert!(fit.node_residual <= 1e-9);
        for w in [0.013, 0.7, 5.5, 77.0] {
            let s = c(0.0, w);
            let want = (3.0 * s + 1.0) / (s + 2.0);
            assert!((fit.model.eval(s).unwrap() - want).norm() <= 1e-9 * want.norm());
        }
    }

    #[test]
    fn loewner_folds_far_poles_into_direct_term() {
        // nine decades between the low-frequency gain and the feedthrough
        let truth = RationalModel::new(
            vec![c(-1e-2, 0.0), c(-1.0, 0.0), c(-0.2, 3.0), c(-0.2, -3.0)],
            vec![c(3e3, 0.0), c(-2.0, 0.0), c(0.01, 0.02), c(0.01, -0.02)],
            c(5e-4, 0.0),
            0.0,
        )
        .unwrap();
        let data =
            FrequencyResponseData::from_model(&truth, &logspace(1e-2, 1e2, 400), "k").unwrap();
        let fit = loewner_fit(&data, &LoewnerOptions::default()).unwrap();
        let edge = data.omega_max();
        assert!(
            fit.model
                .poles()
                .iter()
                .all(|p| p.norm() < FAR_FACTOR * edge),
            "{:?}",
            fit.model.poles()
        );
        assert!(
            fit.model.poles().iter().all(|p| p.re < 0.0),
            "{:?}",
            fit.model.poles()
        );
        assert!(fit.node_residual <= 1e-6, "{}", fit.node_residual);
        let (stable, anti) = split_stable(&fit.model).unwrap();
        assert_eq!(anti.order(), 0);
        assert!(
            (stable.direct() - 5e-4).abs() <= 1e-3 * 5e-4,
            "{}",
            stable.direct()
        );
    }

    #[test]
    fn loewner_zero_data_is_the_zero_model() {
        let data = FrequencyResponseData::new(logspace(0.1, 10.0, 20), vec![c(0.0, 0.0); 20], "z")
            .unwrap();
        let fit = loewner_fit(&data, &LoewnerOptions::default()).unwrap();
        assert_eq!(fit.rank, 0);
        assert_eq!(fit.model.order(), 0);
        assert_eq!(fit.model.direct(), 0.0);
    }

    #[test]
    fn loewner_constant_data_is_order_zero() {
        let data = FrequencyResponseData::new(logspace(0.1, 10.0, 20), vec![c(2.5, 0.0); 20], "c")
            .unwrap();
        let desc = loewner_interpolate(&data).unwrap();
        assert_eq!(desc.order(), 0);
        assert!((desc.d() - c(2.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn project_stable_discards_antistable_terms() {
        let m = RationalModel::new(
            vec![c(-1.0, 0.0), c(2.0, 0.0)],
            vec![c(1.0, 0.0); 2],
            c(0.5, 0.0),
            0.0,
        )
        .unwrap();
        let p = project_stable(&m.to_descriptor()).unwrap();
        assert_eq!(p.order(), 1);
        assert!((p.poles()[0] - c(-1.0, 0.0)).norm() < 1e-12);
        assert!((p.residues()[0] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((p.direct() - 0.5).abs() < 1e-12);

        let stable = RationalModel::from_zpk(
            &[c(-3.0, 0.0)],
            &[c(-1.0, 1.0), c(-1.0, -1.0), c(-4.0, 0.0)],
            2.0,
        )
        .unwrap();
        let p = project_stable(&stable.to_descriptor()).unwrap();
        let mut want: Vec<C64> = stable.poles().to_vec();
        let mut got: Vec<C64> = p.poles().to_vec();
        let key = |z: &C64| (z.re, z.im);
        want.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        for (a, b) in want.iter().zip(&got) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn projection_keeps_integrators_and_rejects_axis_poles() {
        let m = RationalModel::new(
            vec![c(0.0, 0.0), c(-1.0, 0.0)],
            vec![c(1.0, 0.0); 2],
            c(0.0, 0.0),
            0.0,
        )
        .unwrap();
        assert_eq!(split_stable(&m).unwrap().0.order(), 2);
        let axis = RationalModel::new(
            vec![c(0.0, 1.0), c(0.0, -1.0)],
            vec![c(1.0, 0.0); 2],
            c(0.0, 0.0),
            0.0,
        )
        .unwrap();
        assert!(matches!(split_stable(&axis), Err(IdentError::AxisPole(_))));
    }

    #[test]
    fn reduce_keeps_dominant_term() {
        let grid = logspace(1e-2, 1e2, 100);
        let m = RationalModel::new(
            vec![c(-1.0, 0.0), c(-5.0, 0.0)],
            vec![c(10.0, 0.0), c(1e-6, 0.0)],
            c(0.0, 0.0),
            0.0,
        )
        .unwrap();
        let r = reduce(&m, 1, &grid).unwrap();
        assert_eq!(r.poles(), &[c(-1.0, 0.0)]);
        assert!((r.residues()[0] - c(10.0, 0.0)).norm() < 1e-5);
        assert_eq!(reduce(&m, 2, &grid).unwrap(), m);
        assert_eq!(reduce(&m, 0, &grid), Err(IdentError::OrderTooSmall));
        assert!(matches!(
            reduce(&m, 3, &grid),
            Err(IdentError::OrderTooLarge { .. })
        ));
    }

    #[test]
    fn reduce_keeps_pairs_together() {
        let grid = logspace(1e-2, 1e2, 100);
        let m = RationalModel::from_zpk(&[], &[c(-0.1, 1.0), c(-0.1, -1.0), c(-10.0, 0.0)], 10.0)
            .unwrap();
        let r = reduce(&m, 1, &grid).unwrap();
        assert_eq!(r.order(), 2);
        assert!(r.poles().iter().all(|p| p.im != 0.0));
    }

    #[test]
    fn reduction_error_is_nonincreasing_in_order() {
        let poles = [
            c(-0.01, 0.0),
            c(-0.1, 2.0),
            c(-0.1, -2.0),
            c(-1.0, 0.0),
            c(-3.0, 5.0),
            c(-3.0, -5.0),
            c(-20.0, 0.0),
        ];
        let zeros = [c(-0.05, 0.0), c(-0.5, 1.0), c(-0.5, -1.0), c(-8.0, 0.0)];
        let m = RationalModel::from_zpk(&zeros, &poles, 5.0).unwrap();
        let grid = logspace(1e-3, 1e3, 300);
        let data = FrequencyResponseData::from_model(&m, &grid, "m").unwrap();
        let errs: Vec<f64> = [1, 2, 3, 5, 7]
            .iter()
            .map(|&n| relative_rms_error(&reduce(&m, n, &grid).unwrap(), &data).unwrap())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
        assert!(errs[4] < 1e-12);
    }

    #[test]
    fn internal_stability_of_simple_loop() {
        let p = RationalModel::first_order(1.0).unwrap();
        let v = internal_stability(&p, &RationalModel::constant(1.0)).unwrap();
        assert!(v.stable);
        for w in [0.1, 1.0, 10.0] {
            let s = c(0.0, w);
            let want = (s + 1.0) / (s + 2.0);
            assert!((v.sensitivity.eval(s).unwrap() - want).norm() < 1e-12);
        }
    }

    #[test]
    fn cancellation_is_detected() {
        let p = RationalModel::from_zpk(&[], &[c(1.0, 0.0)], 1.0).unwrap();
        let k = RationalModel::from_zpk(&[c(1.0, 0.0)], &[c(-1.0, 0.0)], 1.0).unwrap();
        let v = internal_stability(&p, &k).unwrap();
        assert!(!v.stable);
        assert!(v
            .closed_loop_poles
            .iter()
            .any(|q| (q - c(1.0, 0.0)).norm() < 1e-8));
        assert!(v.plant_sensitivity.poles().iter().any(|q| q.re > 0.0));
    }

    #[test]
    fn internal_stability_matches_characteristic_polynomial() {
        // P = 1/(s-1), K = 4(s+0.5)/s: s(s-1) + 4(s+0.5) = s^2 + 3s + 2
        let p = RationalModel::from_zpk(&[], &[c(1.0, 0.0)], 1.0).unwrap();
        let k = RationalModel::from_zpk(&[c(-0.5, 0.0)], &[c(0.0, 0.0)], 4.0).unwrap();
        let v = internal_stability(&p, &k).unwrap();
        let (b, cc) = (3.0f64, 2.0f64);
        let disc = (b * b - 4.0 * cc).sqrt();
        let mut roots = [(-b - disc) / 2.0, (-b + disc) / 2.0];
        let mut got: Vec<f64> = v.closed_loop_poles.iter().map(|q| q.re).collect();
        roots.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        assert_eq!(got.len(), 2);
        for (a, b) in roots.iter().zip(&got) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(v.stable);
    }
}
