//! Subcommand drivers: assemble a scenario from its configuration, run it,
//! and emit the artifacts. Everything here returns structured results so
//! both the binary and the test suites drive the same code paths.

use std::f64::consts::PI;

use serde::Serialize;
use wyflow_core::background::{build_background, Background, Family};
use wyflow_core::conformal::{
    average_curvature, curvature_from_w, energy, normalize_volume, total_volume, Exponents,
};
use wyflow_core::flow::{project_neumann, run, FlowResult, FlowTrace};
use wyflow_core::oracle::{
    self, dense_reference_spectrum, dr_dt_crosscheck, ibp_residual, seeded_neumann_field,
    RefinementReport,
};
use wyflow_core::spectral::{
    assemble_linearized, classify_sign, eigensolve, Classification, Spectrum,
};
use wyflow_core::Field;

use crate::config::{InitialData, OutputFormat, ScenarioConfig, VerifyConfig};
use crate::error::{CliError, Result};
use crate::io;

/// Bound on the discretization error of the energy/average-curvature
/// identity |E − c_R·r| ≤ C·h² for analytically-Neumann data (the defect is
/// the one-sided boundary-derivative stencil).
pub const C_ENERGY: f64 = 50.0;

/// Acceptance band for the dissipation-identity refinement ratio of a
/// first-order stepper (the exact value is 2).
pub const RATIO_BAND: (f64, f64) = (1.5, 3.0);

/// Eigenvalue agreement required between the banded solver and the dense
/// reference route.
pub const TOL_DENSE_AGREEMENT: f64 = 1e-8;

pub fn build(cfg: &ScenarioConfig) -> Result<Background> {
    Ok(build_background(&cfg.background)?)
}

/// The configured initial factor, projected onto the discrete Neumann
/// condition but *not* volume-normalized (the spectrum command linearizes
/// at exactly this factor; the flow normalizes it first).
pub fn initial_factor(bg: &Background, initial: &InitialData) -> Result<Field> {
    let n = bg.node_count();
    let raw: Field = match initial {
        InitialData::Constant => vec![1.0; n],
        InitialData::Trig { amplitude, frequency } => {
            if amplitude.abs() >= 1.0 || amplitude.is_nan() {
                return Err(CliError::config(format!(
                    "trig amplitude must satisfy |a| < 1 to keep w positive, got {amplitude}"
                )));
            }
            let [x0, x1] = bg.grid.extents[0];
            let lx = x1 - x0;
            let f = *frequency as f64;
            if bg.grid.is_1d() {
                (0..n)
                    .map(|i| {
                        let x = bg.grid.coord(i)[0] - x0;
                        1.0 + amplitude * (f * PI * x / lx).cos()
                    })
                    .collect()
            } else {
                let [y0, y1] = bg.grid.extents[1];
                let ly = y1 - y0;
                (0..n)
                    .map(|i| {
                        let [x, y] = bg.grid.coord(i);
                        1.0 + amplitude
                            * (f * PI * (x - x0) / lx).cos()
                            * (f * PI * (y - y0) / ly).cos()
                    })
                    .collect()
            }
        }
        InitialData::File { path } => io::read_field_csv(path, n)?,
    };
    Ok(project_neumann(bg, &raw)?)
}

/// Flat-keyed run summary. Field order is the file order; every value is
/// deterministic, so identical configurations produce bitwise-identical
/// summaries.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub case: String,
    pub lambda0: f64,
    pub lambda1: f64,
    pub converged: bool,
    pub steps: u64,
    pub r_inf: f64,
    pub steady_residual: f64,
    pub final_energy: f64,
    pub final_volume: f64,
    pub min_w: f64,
    pub max_w: f64,
    pub max_r_increase: f64,
    pub min_r_margin: f64,
    pub max_step_volume_drift: f64,
    pub max_volume_deviation: f64,
    pub max_lambda_p_increase: f64,
    pub min_rayleigh_margin: f64,
    pub decay_gamma: Option<f64>,
    pub decay_beta: Option<f64>,
    pub decay_super_polynomial: Option<bool>,
}

pub struct RunArtifacts {
    pub result: FlowResult,
    pub trace: FlowTrace,
    pub summary: Summary,
}

/// Runs the configured flow and writes the artifact set into the output
/// directory: resolved config, trace, summary, final factor and curvature
/// fields. Returns the process exit code (0 converged, 2 step-budget hit).
pub fn cmd_run(cfg: &ScenarioConfig) -> Result<(RunArtifacts, i32)> {
    let bg = build(cfg)?;
    let w0 = normalize_volume(&bg, &initial_factor(&bg, &cfg.initial)?)?;
    let classification = classify_sign(&bg)?;
    let (result, trace) = run(&bg, &w0, &cfg.flow)?;

    let fit = trace.fit_decay_exponent(result.r_inf_estimate).ok();
    let summary = Summary {
        scenario: cfg.name.clone(),
        case: result.case.as_str().to_string(),
        lambda0: classification.lambda0,
        lambda1: classification.lambda1,
        converged: result.converged,
        steps: result.steps_taken,
        r_inf: result.r_inf_estimate,
        steady_residual: result.steady_residual,
        final_energy: energy(&bg, &result.w_final)?,
        final_volume: total_volume(&bg, &result.w_final)?,
        min_w: result.extrema.min_w,
        max_w: result.extrema.max_w,
        max_r_increase: result.extrema.max_r_increase,
        min_r_margin: result.extrema.min_r_margin,
        max_step_volume_drift: result.extrema.max_step_volume_drift,
        max_volume_deviation: result.extrema.max_volume_deviation,
        max_lambda_p_increase: result.extrema.max_lambda_p_increase,
        min_rayleigh_margin: result.extrema.min_rayleigh_margin,
        decay_gamma: fit.as_ref().map(|f| f.gamma),
        decay_beta: fit.as_ref().map(|f| f.beta),
        decay_super_polynomial: fit.as_ref().map(|f| f.super_polynomial),
    };

    write_run_artifacts(cfg, &bg, &trace, &result, &summary)?;
    let exit = if result.converged { 0 } else { 2 };
    Ok((RunArtifacts { result, trace, summary }, exit))
}

fn write_run_artifacts(
    cfg: &ScenarioConfig,
    bg: &Background,
    trace: &FlowTrace,
    result: &FlowResult,
    summary: &Summary,
) -> Result<()> {
    let dir = &cfg.out_dir;
    io::write_atomic(&dir.join("config.resolved.ini"), &crate::config::to_ini(cfg))?;
    let mut summary_text =
        serde_json::to_string_pretty(summary).expect("summary serialization");
    summary_text.push('\n');
    io::write_atomic(&dir.join("summary.json"), &summary_text)?;
    let r_final = curvature_from_w(bg, &result.w_final)?;
    match cfg.format {
        OutputFormat::Csv => {
            io::write_atomic(&dir.join("trace.csv"), &io::trace_csv(trace))?;
            io::write_atomic(&dir.join("w_final.csv"), &io::field_csv(bg, "w", &result.w_final))?;
            io::write_atomic(&dir.join("R_final.csv"), &io::field_csv(bg, "R", &r_final))?;
        }
        OutputFormat::Json => {
            io::write_atomic(&dir.join("trace.json"), &io::trace_json(trace))?;
            io::write_atomic(&dir.join("w_final.json"), &io::field_json(bg, "w", &result.w_final))?;
            io::write_atomic(&dir.join("R_final.json"), &io::field_json(bg, "R", &r_final))?;
        }
    }
    Ok(())
}

/// Classifies the conformal class of the configured background.
pub fn cmd_classify(cfg: &ScenarioConfig) -> Result<Classification> {
    let bg = build(cfg)?;
    Ok(classify_sign(&bg)?)
}

/// Solves for the low spectrum of the linearization at the configured
/// initial factor and writes the eigenvalue/eigenfunction tables.
pub fn cmd_spectrum(cfg: &ScenarioConfig) -> Result<Spectrum> {
    let bg = build(cfg)?;
    let w = initial_factor(&bg, &cfg.initial)?;
    let op = assemble_linearized(&bg, &w)?;
    let spectrum = eigensolve(&op, cfg.spectrum_k)?;
    let dir = &cfg.out_dir;
    io::write_atomic(&dir.join("config.resolved.ini"), &crate::config::to_ini(cfg))?;
    match cfg.format {
        OutputFormat::Csv => {
            io::write_atomic(&dir.join("spectrum.csv"), &io::spectrum_csv(&spectrum))?;
            io::write_atomic(&dir.join("modes.csv"), &io::modes_csv(&bg, &spectrum))?;
        }
        OutputFormat::Json => {
            io::write_atomic(&dir.join("spectrum.json"), &io::spectrum_json(&bg, &spectrum))?;
        }
    }
    Ok(spectrum)
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    /// `None` means skipped (not applicable to this scenario).
    pub passed: Option<bool>,
    pub detail: String,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        let tag = match self.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        format!("{tag} {} ({})", self.name, self.detail)
    }
}

pub struct VerifyOutcome {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyOutcome {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed != Some(false))
    }
}

fn scaled_background(cfg: &ScenarioConfig, nodes: usize) -> Result<Background> {
    let mut spec = cfg.background;
    spec.nodes = nodes;
    if matches!(spec.family, Family::FlatRectangle { .. }) {
        spec.nodes_y = nodes;
    }
    Ok(build_background(&spec)?)
}

/// Runs the brute-force verification suite against the configured scenario:
/// transformation-law refinement, integration-by-parts refinement, dense
/// spectral agreement, the dissipation-identity dt-crosscheck, and the
/// energy/average-curvature identity. Refinement tables are written next to
/// the other artifacts; each check contributes one PASS/FAIL/SKIP line.
pub fn cmd_verify(cfg: &ScenarioConfig) -> Result<VerifyOutcome> {
    let mut checks = Vec::new();
    let vc = &cfg.verify;
    io::write_atomic(&cfg.out_dir.join("config.resolved.ini"), &crate::config::to_ini(cfg))?;

    checks.push(curvature_refinement_check(cfg, vc)?);
    checks.push(ibp_refinement_check(cfg, vc)?);
    checks.push(dense_agreement_check(cfg)?);
    checks.push(crosscheck_check(cfg)?);
    checks.push(energy_identity_check(cfg, vc)?);

    Ok(VerifyOutcome { checks })
}

fn curvature_refinement_check(
    cfg: &ScenarioConfig,
    vc: &VerifyConfig,
) -> Result<CheckOutcome> {
    if !matches!(cfg.background.family, Family::FlatInterval { .. }) {
        return Ok(CheckOutcome {
            name: "curvature_refinement",
            passed: None,
            detail: format!(
                "direct route is flat-interval only, scenario family is {}",
                cfg.background.family.id()
            ),
        });
    }
    let mut errors = Vec::new();
    for &nodes in &vc.sizes {
        let bg = scaled_background(cfg, nodes)?;
        let w = seeded_neumann_field(&bg, cfg.seed, 3, 0.3)?;
        let primary = curvature_from_w(&bg, &w)?;
        let direct = oracle::direct_curvature(&bg, &w)?;
        let worst = primary
            .iter()
            .zip(direct.iter())
            .fold(0.0f64, |a, (&p, &d)| a.max((p - d).abs()));
        errors.push(worst);
    }
    let report = RefinementReport::fit(&vc.sizes, &errors)?;
    io::write_atomic(
        &cfg.out_dir.join("refinement_curvature.csv"),
        &io::refinement_csv(&report),
    )?;
    Ok(CheckOutcome {
        name: "curvature_refinement",
        passed: Some(report.order >= vc.min_order),
        detail: format!("order {:.3} (threshold {:.3})", report.order, vc.min_order),
    })
}

fn ibp_refinement_check(cfg: &ScenarioConfig, vc: &VerifyConfig) -> Result<CheckOutcome> {
    let mut worst_order = f64::INFINITY;
    let mut worst_report: Option<RefinementReport> = None;
    for s in 0..vc.seeds.max(1) {
        let mut errors = Vec::new();
        for &nodes in &vc.sizes {
            let bg = scaled_background(cfg, nodes)?;
            let f = seeded_neumann_field(&bg, cfg.seed ^ (0x5f5f + s as u64), 4, 0.4)?;
            let u = seeded_neumann_field(&bg, cfg.seed ^ (0xa7a7 + s as u64), 4, 0.4)?;
            errors.push(ibp_residual(&bg, &f, &u)?);
        }
        let report = RefinementReport::fit(&vc.sizes, &errors)?;
        if report.order < worst_order {
            worst_order = report.order;
            worst_report = Some(report);
        }
    }
    let report = worst_report.expect("at least one seed");
    io::write_atomic(&cfg.out_dir.join("refinement_ibp.csv"), &io::refinement_csv(&report))?;
    Ok(CheckOutcome {
        name: "ibp_refinement",
        passed: Some(worst_order >= vc.min_order),
        detail: format!(
            "worst order {:.3} over {} seeds (threshold {:.3})",
            worst_order, vc.seeds, vc.min_order
        ),
    })
}

fn dense_agreement_check(cfg: &ScenarioConfig) -> Result<CheckOutcome> {
    let nodes = cfg.background.nodes.min(384);
    let bg = scaled_background(cfg, nodes)?;
    if bg.node_count() > 512 {
        return Ok(CheckOutcome {
            name: "dense_spectrum_agreement",
            passed: None,
            detail: format!("{} nodes exceed the dense-route cap", bg.node_count()),
        });
    }
    let ones = vec![1.0; bg.node_count()];
    let k = cfg.spectrum_k.clamp(2, 8);
    let op = assemble_linearized(&bg, &ones)?;
    let primary = eigensolve(&op, k)?;
    let dense = dense_reference_spectrum(&bg, &ones, k)?;
    let mut worst = 0.0f64;
    for (p, d) in primary.pairs.iter().zip(dense.pairs.iter()) {
        worst = worst.max((p.lambda - d.lambda).abs() / (1.0 + p.lambda.abs()));
    }
    Ok(CheckOutcome {
        name: "dense_spectrum_agreement",
        passed: Some(worst <= TOL_DENSE_AGREEMENT),
        detail: format!("max relative gap {worst:.3e} over {k} modes at {nodes} nodes"),
    })
}

fn crosscheck_check(cfg: &ScenarioConfig) -> Result<CheckOutcome> {
    let bg = build(cfg)?;
    let w0 = normalize_volume(&bg, &initial_factor(&bg, &cfg.initial)?)?;
    let (dt, _) = cfg.flow.resolve(&bg)?;
    let out = dr_dt_crosscheck(&bg, &w0, dt, &cfg.flow)?;
    let (passed, detail) = match out.ratio {
        None => (
            true,
            format!(
                "steady data, residuals {:.2e}/{:.2e}, ratio undefined",
                out.residual_coarse, out.residual_fine
            ),
        ),
        Some(ratio) => (
            ratio >= RATIO_BAND.0 && ratio <= RATIO_BAND.1,
            format!("refinement ratio {ratio:.3}, band [{}, {}]", RATIO_BAND.0, RATIO_BAND.1),
        ),
    };
    Ok(CheckOutcome { name: "dissipation_crosscheck", passed: Some(passed), detail })
}

fn energy_identity_check(cfg: &ScenarioConfig, vc: &VerifyConfig) -> Result<CheckOutcome> {
    let bg = build(cfg)?;
    let e = Exponents::for_background(&bg);
    let h = bg.grid.spacing[0].max(if bg.grid.is_1d() { 0.0 } else { bg.grid.spacing[1] });
    let bound = C_ENERGY * h * h;
    let mut worst = 0.0f64;
    for s in 0..vc.seeds.max(1) {
        let w = normalize_volume(
            &bg,
            &seeded_neumann_field(&bg, cfg.seed ^ (0xe4e4 + s as u64), 3, 0.4)?,
        )?;
        let en = energy(&bg, &w)?;
        let r = average_curvature(&bg, &w)?;
        worst = worst.max((en - e.c_r * r).abs());
    }
    Ok(CheckOutcome {
        name: "energy_identity",
        passed: Some(worst <= bound),
        detail: format!("worst |E - c_R·r| = {worst:.3e}, bound {bound:.3e}"),
    })
}

