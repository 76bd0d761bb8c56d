//! Pipeline stages shared by the subcommands.

use lddc_core::hardy::{analyze_with_split, AnalysisConfig, InstabilityReport};
use lddc_core::lddc::{
    ideal_controller_frf, internal_stability, loewner_fit, node_residual, reduce,
    relative_rms_error, split_stable, LoewnerOptions,
};
use lddc_core::models::{FrequencyResponseData, RationalModel, C64};
use lddc_core::plants::{fold_delay, simulate_disturbance, simulate_step};
use lddc_core::refmodel::{build_achievable, AchievableReference, Branch, Residual};
use log::{info, warn};
use serde::Serialize;

use crate::config::{ResolvedScenario, Scenario};
use crate::error::CliError;
use crate::output::{finite, Output, Scale};

const OMEGA: (&str, &str, Scale) = ("omega_rad_s", "omega (rad/s)", Scale::Log);

/// Instability analysis with projection and Hankel plots.
pub fn analyze(
    data: &FrequencyResponseData,
    cfg: &AnalysisConfig,
    out: &mut Output,
) -> Result<InstabilityReport, CliError> {
    let (report, split) = analyze_with_split(data, cfg)?;
    info!(
        "{} RHP pole(s), {} RHP zero(s), integrator {}",
        report.rhp_poles.len(),
        report.rhp_zeros.len(),
        report.has_integrator
    );
    out.json("report.json", &report)?;

    let mut rows = Vec::with_capacity(data.len());
    for (w, v) in data.iter() {
        rows.push(vec![
            w,
            v.norm(),
            split.stable.eval_jw(w)?.norm(),
            split.antistable.eval_jw(w)?.norm(),
        ]);
    }
    let header = ["omega_rad_s", "data_abs", "stable_abs", "antistable_abs"];
    out.table("projection.csv", &header, rows.into_iter())?;
    out.plot(
        "projection.csv",
        "Stable and antistable projections of the plant response",
        OMEGA,
        &[
            ("data_abs", "|P|"),
            ("stable_abs", "|P_s|"),
            ("antistable_abs", "|P_as|"),
        ],
        Scale::Log,
    );

    let n = report.sv_poles.len().max(report.sv_zeros.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    out.table(
        "hankel_sv.csv",
        &["index", "sv_poles", "sv_zeros"],
        (0..n).map(|i| {
            vec![
                (i + 1) as f64,
                at(&report.sv_poles, i),
                at(&report.sv_zeros, i),
            ]
        }),
    )?;
    out.plot(
        "hankel_sv.csv",
        "Hankel singular values of the antistable parts",
        ("index", "index", Scale::Linear),
        &[("sv_poles", "poles"), ("sv_zeros", "zeros")],
        Scale::Log,
    );
    Ok(report)
}

/// Achievable reference for a report.
pub fn makeref(
    report: &InstabilityReport,
    desired: &RationalModel,
    out: &mut Output,
) -> Result<AchievableReference, CliError> {
    let reference = build_achievable(desired, report)?;
    info!(
        "branch {:?}, M_f(0) = {}",
        reference.branch, reference.dc_gain
    );
    out.json("reference.json", &reference)?;
    Ok(reference)
}

/// Diagnostics of one identification.
#[derive(Debug, Clone, Serialize)]
pub struct IdentDiagnostics {
    pub nodes: usize,
    pub dropped_nodes: usize,
    pub rank: usize,
    /// `sigma_r / sigma_{r+1}` of the Loewner pencil.
    pub rank_gap: f64,
    /// Leading normalized Loewner singular values.
    pub singular_values: Vec<f64>,
    /// Worst relative mismatch of the interpolant at the nodes.
    pub node_residual: f64,
    pub interpolant_order: usize,
    pub full_order: usize,
    pub antistable_order: usize,
    /// Grid peak of the discarded antistable part over the grid peak of
    /// the ideal controller.
    pub projection_deviation: f64,
    /// Worst relative mismatch of the stable projection at the nodes.
    pub projection_residual: f64,
    pub reduced_order: usize,
    /// Relative RMS grid error of the reduced controller.
    pub reduction_error: f64,
}

pub struct Identified {
    pub full: RationalModel,
    pub reduced: RationalModel,
    pub diagnostics: IdentDiagnostics,
}

const SHOWN_SINGULAR_VALUES: usize = 5;

/// Ideal controller, Loewner interpolation, stable projection and optional
/// reduction.
pub fn ident(
    data: &FrequencyResponseData,
    reference: &AchievableReference,
    order: Option<usize>,
    out: &mut Output,
) -> Result<Identified, CliError> {
    let ideal = ideal_controller_frf(data, &reference.achieved)?;
    let fit = loewner_fit(&ideal, &LoewnerOptions::default())?;
    let (full, anti) = split_stable(&fit.model)?;
    let reduced = match order {
        Some(n) if n < full.order() => reduce(&full, n, ideal.omegas())?,
        Some(n) if n > full.order() => {
            warn!(
                "requested order {n} exceeds the stable projection order {}; keeping it",
                full.order()
            );
            full.clone()
        }
        _ => full.clone(),
    };
    let ideal_peak = ideal.max_abs();
    let diagnostics = IdentDiagnostics {
        nodes: ideal.len(),
        dropped_nodes: data.len() - ideal.len(),
        rank: fit.rank,
        rank_gap: finite(fit.rank_gap),
        singular_values: fit
            .singular_values
            .iter()
            .take(fit.rank + SHOWN_SINGULAR_VALUES)
            .copied()
            .collect(),
        node_residual: fit.node_residual,
        interpolant_order: fit.model.order(),
        full_order: full.order(),
        antistable_order: anti.order(),
        projection_deviation: anti.grid_hinf(ideal.omegas())? / ideal_peak,
        projection_residual: node_residual(&full, &ideal),
        reduced_order: reduced.order(),
        reduction_error: relative_rms_error(&reduced, &ideal)?,
    };
    info!(
        "rank {} (gap {:.2e}), full order {}, reduced order {}",
        diagnostics.rank, diagnostics.rank_gap, diagnostics.full_order, diagnostics.reduced_order
    );
    out.json("controller_full.json", &full)?;
    out.json("controller.json", &reduced)?;
    out.json("diagnostics.json", &diagnostics)?;

    let mut rows = Vec::with_capacity(ideal.len());
    for (w, v) in ideal.iter() {
        let (kf, kr) = (full.eval_jw(w)?, reduced.eval_jw(w)?);
        let interp = fit.model.eval_jw(w)?;
        rows.push(vec![
            w,
            v.norm(),
            v.arg().to_degrees(),
            kf.norm(),
            kf.arg().to_degrees(),
            kr.norm(),
            kr.arg().to_degrees(),
            (interp - v).norm() / v.norm().max(f64::MIN_POSITIVE),
        ]);
    }
    let header = [
        "omega_rad_s",
        "ideal_abs",
        "ideal_phase_deg",
        "full_abs",
        "full_phase_deg",
        "reduced_abs",
        "reduced_phase_deg",
        "node_residual",
    ];
    out.table("controller_fit.csv", &header, rows.into_iter())?;
    out.plot(
        "controller_fit.csv",
        "Ideal and identified controller magnitude",
        OMEGA,
        &[
            ("ideal_abs", "|K*|"),
            ("full_abs", "|K full|"),
            ("reduced_abs", "|K reduced|"),
        ],
        Scale::Log,
    );
    out.plot(
        "controller_fit.csv",
        "Ideal and identified controller phase",
        OMEGA,
        &[
            ("ideal_phase_deg", "K*"),
            ("full_phase_deg", "K full"),
            ("reduced_phase_deg", "K reduced"),
        ],
        Scale::Linear,
    );
    out.plot(
        "controller_fit.csv",
        "Loewner interpolation residual at the nodes",
        OMEGA,
        &[("node_residual", "relative residual")],
        Scale::Log,
    );
    Ok(Identified {
        full,
        reduced,
        diagnostics,
    })
}

/// Closed-loop verdict of one controller.
#[derive(Debug, Clone, Serialize)]
pub struct LoopCheck {
    pub order: usize,
    pub internally_stable: bool,
    pub max_closed_loop_pole_re: f64,
    /// `max |PK/(1+PK) - M_f| / |M_f|` over the plant data grid.
    pub grid_error: f64,
    /// Distance from the nearest controller pole to each plant RHP zero.
    pub pole_distance_to_rhp_zeros: Vec<f64>,
    /// Distance from the nearest controller zero to each plant RHP pole.
    pub zero_distance_to_rhp_poles: Vec<f64>,
}

fn nearest(points: &[C64], to: &[C64]) -> Vec<f64> {
    to.iter()
        .map(|&t| {
            finite(
                points
                    .iter()
                    .map(|&p| (p - t).norm())
                    .fold(f64::INFINITY, f64::min),
            )
        })
        .collect()
}

/// Internal stability against `plant`, grid fidelity against the data.
pub fn check_loop(
    plant: &RationalModel,
    data: &FrequencyResponseData,
    controller: &RationalModel,
    reference: &AchievableReference,
) -> Result<LoopCheck, CliError> {
    let verdict =
        internal_stability(&fold_delay(plant)?, controller).map_err(CliError::LoopAnalysis)?;
    let mut grid_error: f64 = 0.0;
    for (w, p) in data.iter() {
        let l = p * controller.eval_jw(w)?;
        let m = reference.achieved.eval_jw(w)?;
        let mismatch = (l / (1.0 + l) - m).norm() / m.norm().max(f64::MIN_POSITIVE);
        grid_error = grid_error.max(mismatch);
    }
    let zeros = if controller.order() == 0 {
        Vec::new()
    } else {
        controller.poles_zeros()?.1
    };
    Ok(LoopCheck {
        order: controller.order(),
        internally_stable: verdict.stable,
        max_closed_loop_pole_re: verdict
            .closed_loop_poles
            .iter()
            .map(|p| p.re)
            .fold(f64::MIN, f64::max),
        grid_error: finite(grid_error),
        pole_distance_to_rhp_zeros: nearest(controller.poles(), &reference.rhp_zeros),
        zero_distance_to_rhp_poles: nearest(&zeros, &reference.rhp_poles),
    })
}

/// Figures of merit of the simulated responses.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub scenario: ResolvedScenario,
    pub internally_stable: bool,
    pub step_peak: f64,
    pub step_final: f64,
    pub disturbance_peak: f64,
    pub disturbance_final: f64,
    pub open_loop_disturbance_peak: f64,
}

fn peak(y: &[f64]) -> f64 {
    y.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Reference step and input-disturbance pulse of the loop `(plant, controller)`.
pub fn simulate(
    plant: &RationalModel,
    controller: &RationalModel,
    scenario: &Scenario,
    out: &mut Output,
) -> Result<SimulationSummary, CliError> {
    let (p, k) = (fold_delay(plant)?, fold_delay(controller)?);
    let verdict = internal_stability(&p, &k)?;
    if !verdict.stable {
        warn!("the closed loop is not internally stable; simulating anyway");
    }
    let slowest = verdict
        .closed_loop_poles
        .iter()
        .map(|q| q.re.abs())
        .filter(|&r| r > 0.0)
        .fold(f64::INFINITY, f64::min);
    let time_constant = if slowest.is_finite() {
        1.0 / slowest
    } else {
        1.0
    };
    let sc = scenario.resolve(time_constant)?;

    let step = simulate_step(&verdict.complementary, sc.horizon, sc.dt)?;
    let dist = simulate_disturbance(&p, &k, &sc.pulse, sc.horizon, sc.dt)?;
    let open = simulate_disturbance(&p, &RationalModel::zero(), &sc.pulse, sc.horizon, sc.dt)?;
    out.table(
        "step.csv",
        &["t_s", "value"],
        step.t.iter().zip(&step.y).map(|(&t, &y)| vec![t, y]),
    )?;
    out.table(
        "disturbance.csv",
        &["t_s", "closed_loop", "open_loop"],
        dist.t
            .iter()
            .zip(dist.y.iter().zip(&open.y))
            .map(|(&t, (&y, &yo))| vec![t, y, yo]),
    )?;
    out.plot(
        "step.csv",
        "Closed-loop step response",
        ("t_s", "t (s)", Scale::Linear),
        &[("value", "y")],
        Scale::Linear,
    );
    out.plot(
        "disturbance.csv",
        "Input-disturbance pulse response",
        ("t_s", "t (s)", Scale::Linear),
        &[
            ("closed_loop", "with controller"),
            ("open_loop", "without controller"),
        ],
        Scale::Linear,
    );
    Ok(SimulationSummary {
        scenario: sc,
        internally_stable: verdict.stable,
        step_peak: finite(step.y.iter().copied().fold(f64::MIN, f64::max)),
        step_final: finite(*step.y.last().unwrap_or(&0.0)),
        disturbance_peak: finite(peak(&dist.y)),
        disturbance_final: finite(*dist.y.last().unwrap_or(&0.0)),
        open_loop_disturbance_peak: finite(peak(&open.y)),
    })
}

/// Reference summary for the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceSummary {
    pub branch: Branch,
    pub dc_gain: f64,
    pub achieved_order: usize,
    pub worst_residual: f64,
    pub residuals: Vec<Residual>,
}

impl From<&AchievableReference> for ReferenceSummary {
    fn from(r: &AchievableReference) -> Self {
        Self {
            branch: r.branch,
            dc_gain: r.dc_gain,
            achieved_order: r.achieved.order(),
            worst_residual: r.residuals.iter().map(|x| x.residual).fold(0.0, f64::max),
            residuals: r.residuals.clone(),
        }
    }
}
