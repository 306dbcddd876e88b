//! The experiment commands: eigenstate tables, the phase sweeps, the
//! linear weighted-sum check, and Hannay angles.

use std::time::Instant;

use geophase::model::{wrap_angle, ParameterPoint, QuantumState};
use geophase::phases::{
    berry_line_integral, closed_form_for_circle, gamma_dynamic, gamma_dynamic_superposition, gamma_static,
    gamma_weighted_sum, hannay_direct, hannay_from_gamma, phase_difference, probe_sign_convention, EtaConvention,
    PhaseResult,
};
use geophase::spectra::{continue_branch, eigenstates_at, quartic_coefficients, quartic_residual, BranchLabel, EigenstateBranch};
use geophase::dynamics::sweep_cadence;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, LoopKind, Method};
use crate::error::{is_unsupported, CliError, CliResult};
use crate::report::{Cell, Report, Status, Table};

pub const FIG2_COLUMNS: [&str; 10] = [
    "Z",
    "gamma_dynamic",
    "gamma_static",
    "gamma_closed_form",
    "gamma_linear_baseline",
    "winding",
    "beta_bar",
    "dyn_term",
    "action_drift",
    "status",
];

/// A table row plus its contribution to the run status.
struct Row {
    cells: Vec<Cell>,
    failures: Vec<String>,
    unsupported: Option<String>,
}

impl Row {
    /// A row whose computation failed: blanks with the error in `status`.
    fn errored(lead: Vec<Cell>, width: usize, e: CliError) -> Self {
        let mut cells = lead;
        cells.resize(width - 1, Cell::Empty);
        let unsupported = matches!(&e, CliError::Numerical(n) if is_unsupported(n));
        let msg = e.to_string();
        cells.push(Cell::Text(if unsupported { format!("unsupported: {msg}") } else { format!("error: {msg}") }));
        if unsupported {
            Row { cells, failures: Vec::new(), unsupported: Some(msg) }
        } else {
            Row { cells, failures: vec![msg], unsupported: None }
        }
    }

    fn finish(mut cells: Vec<Cell>, failures: Vec<String>) -> Self {
        cells.push(Cell::Text(if failures.is_empty() { "ok".into() } else { format!("fail: {}", failures.join("; ")) }));
        Row { cells, failures, unsupported: None }
    }
}

fn collect(table: &mut Table, status: &mut Status, label: &str, rows: Vec<(f64, Row)>) {
    for (z, row) in rows {
        for f in row.failures {
            status.fail(format!("{label} Z={z}: {f}"));
        }
        if let Some(u) = row.unsupported {
            status.unsupported(format!("{label} Z={z}: {u}"));
        }
        table.push(row.cells);
    }
}

/// Representative of `x` (mod 2π) nearest to `reference`.
pub fn align(x: f64, reference: f64) -> f64 {
    reference + wrap_angle(x - reference)
}

fn circle_point(z: f64) -> ParameterPoint {
    ParameterPoint::new((1.0 - z * z).max(0.0).sqrt(), 0.0, z)
}

fn eigen_residual(b: &EigenstateBranch, c: f64) -> f64 {
    let psi: QuantumState = b.state();
    let h = geophase::model::ModelSpec::nonlinear(c).effective_hamiltonian(&psi, &b.point);
    let v = psi.amplitudes();
    (0..2)
        .map(|i| (h[(i, 0)] * v[0] + h[(i, 1)] * v[1] - v[i] * b.mu).norm())
        .fold(0.0, f64::max)
}

/// Real roots, branch populations, `μ` and `𝓗` over the height grid.
pub fn cmd_eigenstates(config: &ExperimentConfig) -> CliResult<Report> {
    let start = Instant::now();
    let cfg = config.resolve(0.0)?;
    let c = cfg.model.c();
    let tol = &cfg.tolerances;
    let header = vec!["Z", "branch", "eta", "w", "phi", "mu", "energy", "stability", "root_residual", "eigen_residual", "status"];
    let width = header.len();
    let mut table = Table::new("eigenstates", header);
    let mut status = Status::default();
    let rows: Vec<(f64, Vec<Row>)> = cfg
        .grid
        .heights()
        .par_iter()
        .map(|&z| {
            let rows = match eigenstates_at(&circle_point(z), c) {
                Err(e) => vec![Row::errored(vec![z.into()], width, e.into())],
                Ok(branches) => branches
                    .iter()
                    .map(|b| {
                        let coeffs = quartic_coefficients(c, z, 1.0 - z * z);
                        let root = quartic_residual(&coeffs, b.eta).abs();
                        let eig = eigen_residual(b, c);
                        let mut failures = Vec::new();
                        if root >= tol.root_residual {
                            failures.push(format!("root residual {root:e}"));
                        }
                        if eig >= tol.eigen_residual {
                            failures.push(format!("eigen residual {eig:e}"));
                        }
                        let label = match b.label {
                            BranchLabel::Lower => "lower",
                            BranchLabel::Upper => "upper",
                        };
                        let stability = format!("{:?}", b.stability).to_lowercase();
                        Row::finish(
                            vec![
                                z.into(),
                                label.into(),
                                b.eta.into(),
                                b.w.into(),
                                b.phi.into(),
                                b.mu.into(),
                                b.energy.into(),
                                stability.into(),
                                root.into(),
                                eig.into(),
                            ],
                            failures,
                        )
                    })
                    .collect(),
            };
            (z, rows)
        })
        .collect();
    let flat = rows.into_iter().flat_map(|(z, rs)| rs.into_iter().map(move |r| (z, r))).collect();
    collect(&mut table, &mut status, "eigenstates", flat);
    Ok(Report {
        command: "eigenstates",
        tables: vec![table],
        config: cfg,
        derived: json!({ "c": c }),
        status,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

fn phase_check(failures: &mut Vec<String>, what: &str, a: f64, b: f64, tol: f64) {
    let d = phase_difference(a, b);
    if !(d < tol) {
        failures.push(format!("|{what}| = {d:.3e} >= {tol}"));
    }
}

fn fig2_eigen_row(cfg: &ExperimentConfig, z: f64) -> CliResult<Row> {
    let c = cfg.model.c();
    let label = cfg.state.branch;
    let lp = cfg.loop_.build(z)?;
    let closed = cfg.has(Method::ClosedForm).then(|| closed_form_for_circle(z, c, label)).transpose()?;
    let baseline = cfg.has(Method::LinearBaseline).then(|| closed_form_for_circle(z, 0.0, label)).transpose()?;
    let stat = cfg
        .has(Method::Static)
        .then(|| gamma_static(&lp, c, label, 0.0, &cfg.tolerances.static_grid))
        .transpose()?;
    let dynamic = cfg
        .has(Method::Dynamic)
        .then(|| gamma_dynamic(&lp, &cfg.model.spec(), label, 0.0, 1, &cfg.integrator()))
        .transpose()?;
    let reference = closed_form_for_circle(z, c, label)?.unwrapped;
    let tol = cfg.tolerances.phase;
    let mut failures = Vec::new();
    if let (Some(d), Some(cf)) = (&dynamic, &closed) {
        phase_check(&mut failures, "dynamic - closed form", d.gamma, cf.gamma, tol);
    }
    if let (Some(s), Some(cf)) = (&stat, &closed) {
        phase_check(&mut failures, "static - closed form", s.gamma, cf.gamma, tol);
    }
    Ok(Row::finish(fig2_cells(z, reference, &dynamic, &stat, &closed, baseline.map(|b| b.unwrapped), None), failures))
}

fn fig2_orbit_row(cfg: &ExperimentConfig, z: f64) -> CliResult<Row> {
    let c = cfg.model.c();
    let label = cfg.state.branch;
    let action = cfg.state.action;
    let lp = cfg.loop_.build(z)?;
    let grid = &cfg.tolerances.static_grid;
    let stat = cfg.has(Method::Static).then(|| gamma_static(&lp, c, label, action, grid)).transpose()?;
    let baseline = cfg.has(Method::LinearBaseline).then(|| gamma_static(&lp, 0.0, label, action, grid)).transpose()?;
    let closed = (cfg.has(Method::ClosedForm) && c == 0.0 && action == 0.0)
        .then(|| closed_form_for_circle(z, c, label))
        .transpose()?;
    let dynamic = cfg
        .has(Method::Dynamic)
        .then(|| gamma_dynamic(&lp, &cfg.model.spec(), label, action, cfg.state.ensemble, &cfg.integrator()))
        .transpose()?;
    let reference = closed_form_for_circle(z, c, label)?.unwrapped;
    let tol = &cfg.tolerances;
    let mut failures = Vec::new();
    if let (Some(d), Some(s)) = (&dynamic, &stat) {
        phase_check(&mut failures, "dynamic - static", d.gamma, s.gamma, tol.phase);
    }
    let drift = dynamic.as_ref().and_then(|d| d.action_drift(action));
    if let Some(drift) = drift {
        let bound = tol.action_drift_bound(action);
        if !(drift < bound) {
            failures.push(format!("action drift {drift:.3e} >= {bound:e}"));
        }
    }
    Ok(Row::finish(fig2_cells(z, reference, &dynamic, &stat, &closed, baseline.map(|b| b.unwrapped), drift), failures))
}

fn fig2_cells(
    z: f64,
    reference: f64,
    dynamic: &Option<PhaseResult>,
    stat: &Option<PhaseResult>,
    closed: &Option<PhaseResult>,
    baseline: Option<f64>,
    drift: Option<f64>,
) -> Vec<Cell> {
    let aligned = |r: &Option<PhaseResult>| Cell::from(r.as_ref().map(|r| align(r.gamma, reference)));
    vec![
        z.into(),
        aligned(dynamic),
        aligned(stat),
        closed.as_ref().map(|r| r.unwrapped).into(),
        baseline.map(|b| align(b, reference)).into(),
        dynamic.as_ref().map(|d| d.winding).into(),
        dynamic.as_ref().and_then(|d| d.beta_bar).into(),
        dynamic.as_ref().and_then(|d| d.dynamical_term).into(),
        drift.into(),
    ]
}

/// Panel (a): the branch eigenstate; panel (b): orbits of action `I` about it.
pub fn cmd_fig2(config: &ExperimentConfig) -> CliResult<Report> {
    let start = Instant::now();
    let cfg = config.resolve(0.0)?;
    if cfg.loop_.kind != LoopKind::Circle {
        return Err(CliError::Config("fig2 sweeps fixed-Z circles; set loop.kind = \"circle\"".into()));
    }
    let probe = probe_sign_convention(0.5, cfg.tolerances.wilson_samples)?;
    let mut status = Status::default();
    if probe.convention != EtaConvention::MinusW {
        status.fail(format!("sign probe selected {:?}", probe.convention));
    }
    let heights = cfg.grid.heights();
    let width = FIG2_COLUMNS.len();
    let run = |f: fn(&ExperimentConfig, f64) -> CliResult<Row>| -> Vec<(f64, Row)> {
        heights
            .par_iter()
            .map(|&z| (z, f(&cfg, z).unwrap_or_else(|e| Row::errored(vec![z.into()], width, e))))
            .collect()
    };
    let mut panel_a = Table::new("fig2_a", FIG2_COLUMNS.to_vec());
    collect(&mut panel_a, &mut status, "panel a", run(fig2_eigen_row));
    let mut panel_b = Table::new("fig2_b", FIG2_COLUMNS.to_vec());
    collect(&mut panel_b, &mut status, "panel b", run(fig2_orbit_row));
    let cadence = sweep_cadence(&cfg.loop_.build(heights.first().copied().unwrap_or(0.0))?, &cfg.model.spec(), &cfg.integrator());
    Ok(Report {
        command: "fig2",
        tables: vec![panel_a, panel_b],
        derived: json!({
            "c": cfg.model.c(),
            "sign_probe": probe,
            "heights": heights,
            "sweep_cadence_first_row": cadence,
            "phase_branch": "phase columns use the representative nearest the eigenstate closed form (1 - eta) pi",
        }),
        config: cfg,
        status,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Dynamic phase of a superposition against `Σ|a_n|²γ_n` at `c = 0`.
pub fn cmd_linear_check(config: &ExperimentConfig) -> CliResult<Report> {
    let start = Instant::now();
    let mut cfg = config.resolve(0.5)?;
    cfg.model.c = 0.0;
    let header = vec![
        "Z",
        "weight_lower",
        "weight_upper",
        "gamma_dynamic",
        "gamma_weighted_sum",
        "difference",
        "gamma_lower",
        "gamma_upper",
        "alpha_lower",
        "alpha_upper",
        "status",
    ];
    let z = cfg.z();
    let lp = cfg.loop_.build(z)?;
    let model = geophase::model::ModelSpec::nonlinear(0.0);
    let samples = cfg.tolerances.wilson_samples;
    let gammas = [BranchLabel::Lower, BranchLabel::Upper]
        .map(|l| continue_branch(&lp, 0.0, l, samples).and_then(|f| berry_line_integral(&f.states())));
    let [gl, gu] = gammas;
    let (gl, gu) = (gl?.total, gu?.total);
    let w = &cfg.state.weights;
    let weighted = gamma_weighted_sum(w, &[gl, gu])?;
    let dynamic = gamma_dynamic_superposition(&lp, &model, w, cfg.state.ensemble, &cfg.integrator())?;
    let diff = phase_difference(dynamic.phase.gamma, weighted);
    let mut failures = Vec::new();
    phase_check(&mut failures, "dynamic - weighted sum", dynamic.phase.gamma, weighted, cfg.tolerances.phase);
    let z_cell = if cfg.loop_.kind == LoopKind::Circle { Cell::from(z) } else { Cell::Empty };
    let mut table = Table::new("linear_check", header);
    let alphas = &dynamic.mode_hannay;
    let row = Row::finish(
        vec![
            z_cell,
            w[0].into(),
            w[1].into(),
            align(dynamic.phase.gamma, weighted).into(),
            weighted.into(),
            diff.into(),
            gl.into(),
            gu.into(),
            alphas.first().copied().flatten().into(),
            alphas.get(1).copied().flatten().into(),
        ],
        failures,
    );
    let mut status = Status::default();
    collect(&mut table, &mut status, "linear-check", vec![(z, row)]);
    Ok(Report {
        command: "linear-check",
        tables: vec![table],
        derived: json!({ "c": 0.0, "beta_bar": dynamic.phase.beta_bar, "dyn_term": dynamic.phase.dynamical_term }),
        config: cfg,
        status,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Hannay angle of the orbit angle by both routes, plus the sign relation
/// `α ≈ −γ` of the angle conjugate to the norm.
pub fn cmd_hannay(config: &ExperimentConfig) -> CliResult<Report> {
    let start = Instant::now();
    let cfg = config.resolve(0.0)?;
    let c = cfg.model.c();
    let label = cfg.state.branch;
    let action = cfg.state.action;
    let tol = &cfg.tolerances;
    let header = vec![
        "Z",
        "c",
        "action",
        "alpha_static",
        "d_gamma_d_i",
        "alpha_direct",
        "relative_difference",
        "alpha_global",
        "gamma_branch",
        "sign_check",
        "status",
    ];
    let z = cfg.z();
    let lp = cfg.loop_.build(z)?;
    let fd = hannay_from_gamma(&lp, c, label, action, cfg.delta_i(), &tol.static_grid)?;
    let direct = hannay_direct(&lp, &cfg.model.spec(), label, action, cfg.state.ensemble, &cfg.integrator(), tol.frequency_samples)?;
    let gamma = berry_line_integral(&continue_branch(&lp, c, label, tol.wilson_samples)?.states())?.total;
    let alpha_global = direct.alpha_global.expect("direct route reports the global angle");
    let sign_check = phase_difference(alpha_global, -gamma);
    let gap = (fd.alpha - direct.alpha).abs();
    let scale = fd.alpha.abs().max(direct.alpha.abs());
    let relative = if scale > 0.0 { gap / scale } else { 0.0 };
    let mut failures = Vec::new();
    // Near a symmetric loop both angles vanish and the ratio is noise; the
    // absolute phase tolerance then decides.
    if !(relative < tol.hannay_relative || gap < tol.phase) {
        failures.push(format!("Hannay routes differ by {gap:.3e} ({:.1}%)", 100.0 * relative));
    }
    if c == 0.0 && !(sign_check < tol.hannay_sign) {
        failures.push(format!("sign relation |alpha + gamma| = {sign_check:.3e}"));
    }
    let mut table = Table::new("hannay", header);
    let z_cell = if cfg.loop_.kind == LoopKind::Circle { Cell::from(z) } else { Cell::Empty };
    let row = Row::finish(
        vec![
            z_cell,
            c.into(),
            action.into(),
            fd.alpha.into(),
            fd.d_gamma_d_i.into(),
            direct.alpha.into(),
            relative.into(),
            alpha_global.into(),
            gamma.into(),
            sign_check.into(),
        ],
        failures,
    );
    let mut status = Status::default();
    collect(&mut table, &mut status, "hannay", vec![(z, row)]);
    Ok(Report {
        command: "hannay",
        tables: vec![table],
        derived: json!({ "c": c, "delta_i": cfg.delta_i() }),
        config: cfg,
        status,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn align_picks_nearest_representative() {
        assert!((align(-PI + 0.1, PI) - (PI + 0.1)).abs() < 1e-12);
        assert!((align(0.3, 0.2) - 0.3).abs() < 1e-12);
        assert!((align(0.3 + 4.0 * PI, 0.2) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn linear_eigenstate_table_has_eta_plus_minus_z() {
        let mut cfg = ExperimentConfig::default();
        cfg.model.c = 0.0;
        cfg.grid.points = 5;
        let r = cmd_eigenstates(&cfg).unwrap();
        assert!(r.status.ok());
        let t = &r.tables[0];
        assert_eq!(t.rows.len(), 10);
        let eta = t.values("eta");
        let z = t.values("Z");
        for k in 0..t.rows.len() {
            assert!((eta[k].unwrap().abs() - z[k].unwrap().abs()).abs() < 1e-12);
        }
    }
}
