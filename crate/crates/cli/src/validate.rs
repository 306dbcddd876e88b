//! The invariant suite behind `geophase validate`.
//!
//! Each property runs at a small size and reports a one-line detail. The
//! integrator tolerances can be scaled to confirm that the suite notices a
//! degraded integrator.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use geophase::actionangle::{action_of, orbit_with_action, track_angles, BranchFrames};
use geophase::dynamics::{integrate_frozen, run_ensemble, IntegratorConfig, Trajectory};
use geophase::model::{
    classical_hamiltonian, lift, phase_distance, reduce, rhs_nonlinear, two_level_matrix, GaugeSection, ModelSpec,
    ParameterLoop, ParameterPoint, QuantumState,
};
use geophase::phases::{
    berry_line_integral, closed_form_for_circle, gamma_circle_closed_form, gamma_dynamic, gamma_dynamic_superposition,
    gamma_flux, gamma_static, gamma_weighted_sum, hannay_direct, phase_difference, probe_sign_convention,
    CapResolution, EtaConvention, StaticGrid,
};
use geophase::spectra::{
    continue_branch, eigenstates_at, fixed_points_newton, linear_eigensystem, quartic_coefficients, quartic_residual,
    BranchLabel,
};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use serde_json::Value;

use crate::commands::cmd_eigenstates;
use crate::config::ExperimentConfig;
use crate::report::{Cell, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    /// Multiplies the integrator's relative and absolute tolerances.
    pub tolerance_scale: f64,
    pub seed: u64,
    /// Run only properties whose name contains one of these strings.
    pub filter: Vec<String>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self { tolerance_scale: 1.0, seed: 0, filter: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub outcomes: Vec<PropertyOutcome>,
    pub seconds: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            2
        }
    }

    pub fn outcome(&self, name: &str) -> Option<&PropertyOutcome> {
        self.outcomes.iter().find(|o| o.name == name)
    }

    pub fn lines(&self) -> Vec<String> {
        self.outcomes
            .iter()
            .map(|o| format!("{} {} ({:.2}s) {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.seconds, o.detail))
            .collect()
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new("validate", vec!["property", "status", "detail"]);
        for o in &self.outcomes {
            t.push(vec![o.name.into(), Cell::from(if o.passed { "pass" } else { "fail" }), o.detail.clone().into()]);
        }
        t
    }
}

struct Ctx {
    cfg: IntegratorConfig,
    seed: u64,
}

impl Ctx {
    fn rng(&self, salt: u64) -> StdRng {
        StdRng::seed_from_u64(self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt)
    }
}

type Outcome = Result<String, String>;
type Property = fn(&Ctx) -> Outcome;

/// Every property, in report order.
const PROPERTIES: [(&str, Property); 31] = [
    ("model.hamilton_consistency", hamilton_consistency),
    ("model.gauge_invariance", gauge_invariance),
    ("model.vector_field_norm", vector_field_norm),
    ("model.linear_reduction", linear_reduction),
    ("model.reduce_lift_roundtrip", reduce_lift_roundtrip),
    ("dynamics.norm_conservation", norm_conservation),
    ("dynamics.energy_conservation", energy_conservation),
    ("dynamics.linear_propagator", linear_propagator),
    ("dynamics.time_reversal", time_reversal),
    ("dynamics.determinism", determinism),
    ("spectra.root_residual", root_residual),
    ("spectra.eigen_residual", eigen_residual),
    ("spectra.newton_oracle", newton_oracle),
    ("spectra.small_c_continuity", small_c_continuity),
    ("spectra.sign_convention_probe", sign_convention_probe),
    ("spectra.linear_reconstruction", linear_reconstruction),
    ("actionangle.action_roundtrip", action_roundtrip),
    ("actionangle.adiabatic_invariance", adiabatic_invariance),
    ("actionangle.global_phase_rate", global_phase_rate),
    ("actionangle.angle_rate_and_orientation", angle_rate_and_orientation),
    ("phases.arithmetic_identity", arithmetic_identity),
    ("phases.eigenstate_reduction", eigenstate_reduction),
    ("phases.linear_exactness", linear_exactness),
    ("phases.stokes_convergence", stokes_convergence),
    ("phases.wilson_gauge_robustness", wilson_gauge_robustness),
    ("phases.section_independence", section_independence),
    ("phases.linear_weighted_sum", linear_weighted_sum),
    ("phases.rate_convergence", rate_convergence),
    ("phases.hannay_sign_relation", hannay_sign_relation),
    ("cli.reproducibility", reproducibility),
    ("cli.config_echo", config_echo),
];

pub fn property_names() -> Vec<&'static str> {
    PROPERTIES.iter().map(|p| p.0).collect()
}

/// Runs the suite; properties run one after another in table order.
pub fn cmd_validate(opts: &ValidateOptions) -> ValidationReport {
    let start = Instant::now();
    let base = IntegratorConfig::default();
    let cfg = IntegratorConfig {
        rel_tol: (base.rel_tol * opts.tolerance_scale).min(1e-3),
        abs_tol: (base.abs_tol * opts.tolerance_scale).min(1e-3),
        ..base
    };
    let ctx = Ctx { cfg, seed: opts.seed };
    let outcomes = PROPERTIES
        .iter()
        .filter(|(name, _)| opts.filter.is_empty() || opts.filter.iter().any(|f| name.contains(f.as_str())))
        .map(|(name, prop)| {
            let t = Instant::now();
            let (passed, detail) = match prop(&ctx) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            PropertyOutcome { name, passed, detail, seconds: t.elapsed().as_secs_f64() }
        })
        .collect();
    ValidationReport { outcomes, seconds: start.elapsed().as_secs_f64() }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_state(rng: &mut StdRng) -> QuantumState {
    let mut v = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    QuantumState::normalized(vec![v(), v()]).expect("non-zero amplitudes")
}

fn random_point(rng: &mut StdRng) -> ParameterPoint {
    ParameterPoint::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn circle_point(z: f64) -> ParameterPoint {
    ParameterPoint::new((1.0 - z * z).sqrt(), 0.0, z)
}

fn hamilton_consistency(ctx: &Ctx) -> Outcome {
    let mut rng = ctx.rng(1);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let psi = random_state(&mut rng);
        let r = random_point(&mut rng);
        let c = rng.gen_range(-0.5..0.5);
        let rhs = rhs_nonlinear(&psi, &r, c).map_err(err)?;
        let energy = |v: Vec<C64>| classical_hamiltonian(&QuantumState::new(v).unwrap(), &r, c).unwrap();
        for j in 0..2 {
            let shifted = |d: C64| {
                let mut v = psi.amplitudes().to_vec();
                v[j] += d;
                v
            };
            let dx = (energy(shifted(C64::new(h, 0.0))) - energy(shifted(C64::new(-h, 0.0)))) / (2.0 * h);
            let dy = (energy(shifted(C64::new(0.0, h))) - energy(shifted(C64::new(0.0, -h)))) / (2.0 * h);
            // i dψ_j/dt = ∂𝓗/∂ψ_j*
            let expected = C64::new(0.5 * dx, 0.5 * dy);
            let got = C64::new(0.0, 1.0) * rhs.amplitudes()[j];
            worst = worst.max((got - expected).norm() / expected.norm().max(1e-3));
        }
    }
    check(worst < 1e-6, format!("max relative error {worst:.2e} over 200 samples"))
}

fn gauge_invariance(ctx: &Ctx) -> Outcome {
    let mut rng = ctx.rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let psi = random_state(&mut rng);
        let r = random_point(&mut rng);
        let c = rng.gen_range(-0.5..0.5);
        let chi = rng.gen_range(0.0..TAU);
        let a = rhs_nonlinear(&psi.with_phase(chi), &r, c).map_err(err)?;
        let b = rhs_nonlinear(&psi, &r, c).map_err(err)?.with_phase(chi);
        worst = worst.max(a.max_abs_diff(&b));
    }
    check(worst < 1e-14, format!("max deviation {worst:.2e}"))
}

fn vector_field_norm(ctx: &Ctx) -> Outcome {
    let mut rng = ctx.rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let psi = random_state(&mut rng);
        let r = random_point(&mut rng);
        let d = rhs_nonlinear(&psi, &r, rng.gen_range(-0.5..0.5)).map_err(err)?;
        worst = worst.max(psi.inner(&d).re.abs());
    }
    check(worst < 1e-15, format!("max |Re<psi|dpsi/dt>| {worst:.2e}"))
}

fn linear_reduction(ctx: &Ctx) -> Outcome {
    let mut rng = ctx.rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let psi = random_state(&mut rng);
        let r = random_point(&mut rng);
        let d = rhs_nonlinear(&psi, &r, 0.0).map_err(err)?;
        let h = two_level_matrix(&r);
        let v = psi.amplitudes();
        for i in 0..2 {
            let expected = -C64::i() * (h[(i, 0)] * v[0] + h[(i, 1)] * v[1]);
            worst = worst.max((d.amplitudes()[i] - expected).norm());
        }
    }
    check(worst < 1e-15, format!("max deviation {worst:.2e}"))
}

fn reduce_lift_roundtrip(ctx: &Ctx) -> Outcome {
    let mut rng = ctx.rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let psi = random_state(&mut rng);
        let back = lift(&reduce(&psi).map_err(err)?, -psi.amplitudes()[0].arg()).map_err(err)?;
        worst = worst.max(back.max_abs_diff(&psi));
    }
    check(worst < 1e-12, format!("max error {worst:.2e} over 1000 states"))
}

fn norm_conservation(ctx: &Ctx) -> Outcome {
    let psi = QuantumState::normalized(vec![C64::new(0.8, 0.1), C64::new(0.3, -0.5)]).map_err(err)?;
    let traj = integrate_frozen(&psi, &circle_point(0.3), &ModelSpec::nonlinear(0.05), 1e4, &ctx.cfg).map_err(err)?;
    let drift = traj.max_norm_deviation();
    check(drift < 1e-8, format!("max |<psi|psi> - 1| = {drift:.2e} over T = 1e4"))
}

fn energy_conservation(ctx: &Ctx) -> Outcome {
    let psi = QuantumState::normalized(vec![C64::new(0.6, 0.2), C64::new(-0.4, 0.5)]).map_err(err)?;
    let r = ParameterPoint::new(0.6, 0.3, -0.4);
    let c = 0.2;
    let traj = integrate_frozen(&psi, &r, &ModelSpec::nonlinear(c), 1e3, &ctx.cfg).map_err(err)?;
    let e0 = classical_hamiltonian(&psi, &r, c).map_err(err)?;
    let worst = (0..traj.len())
        .map(|k| (classical_hamiltonian(&traj.state(k), &r, c).unwrap() - e0).abs())
        .fold(0.0, f64::max);
    check(worst < 1e-8, format!("max energy deviation {worst:.2e} over T = 1e3"))
}

fn propagate_linear(psi: &QuantumState, r: &ParameterPoint, t: f64) -> QuantumState {
    let n = r.norm();
    let (cs, sn) = ((n * t / 2.0).cos(), (n * t / 2.0).sin());
    let h = two_level_matrix(&r.scale(1.0 / n));
    let v = psi.amplitudes();
    // exp(−iHt) = cos(|R|t/2) − i sin(|R|t/2) (R̂·σ)
    let out = (0..2)
        .map(|i| v[i] * cs - C64::i() * sn * 2.0 * (h[(i, 0)] * v[0] + h[(i, 1)] * v[1]))
        .collect();
    QuantumState::new(out).unwrap()
}

fn linear_propagator(ctx: &Ctx) -> Outcome {
    let psi = QuantumState::normalized(vec![C64::new(0.9, 0.0), C64::new(0.1, 0.4)]).map_err(err)?;
    let r = ParameterPoint::new(0.5, -0.2, 0.7);
    let traj = integrate_frozen(&psi, &r, &ModelSpec::nonlinear(0.0), 200.0, &ctx.cfg).map_err(err)?;
    let worst = (0..traj.len())
        .map(|k| 1.0 - traj.state(k).fidelity(&propagate_linear(&psi, &r, traj.time(k))))
        .fold(0.0, f64::max);
    check(worst < 1e-8, format!("max infidelity {worst:.2e} over T = 200"))
}

fn time_reversal(ctx: &Ctx) -> Outcome {
    let psi = QuantumState::normalized(vec![C64::new(0.5, 0.5), C64::new(0.1, -0.7)]).map_err(err)?;
    let r = ParameterPoint::new(0.3, 0.4, 0.5);
    let model = ModelSpec::nonlinear(0.3);
    let fwd = integrate_frozen(&psi, &r, &model, 100.0, &ctx.cfg).map_err(err)?;
    let back = integrate_frozen(&fwd.final_state(), &r, &model, -100.0, &ctx.cfg).map_err(err)?;
    let d = back.final_state().max_abs_diff(&psi);
    check(d < 1e-8, format!("return error {d:.2e} after T = 100 and back"))
}

fn same_trajectory(a: &Trajectory, b: &Trajectory) -> bool {
    a.times() == b.times() && (0..a.len()).all(|k| a.amplitudes(k) == b.amplitudes(k))
}

fn determinism(ctx: &Ctx) -> Outcome {
    let mut rng = ctx.rng(6);
    let states: Vec<QuantumState> = (0..3).map(|_| random_state(&mut rng)).collect();
    let lp = ParameterLoop::circle_fixed_z(0.3, 0.05).map_err(err)?;
    let model = ModelSpec::nonlinear(0.05);
    let a = run_ensemble(&states, &lp, &model, &ctx.cfg).map_err(err)?;
    let b = run_ensemble(&states, &lp, &model, &ctx.cfg).map_err(err)?;
    let reversed: Vec<QuantumState> = states.iter().rev().cloned().collect();
    let r = run_ensemble(&reversed, &lp, &model, &ctx.cfg).map_err(err)?;
    let repeat = a.iter().zip(&b).all(|(x, y)| same_trajectory(x, y));
    let permuted = a.iter().zip(r.iter().rev()).all(|(x, y)| same_trajectory(x, y));
    check(repeat && permuted, format!("repeat identical: {repeat}, permutation identical: {permuted}"))
}

fn spectra_grid() -> impl Iterator<Item = (f64, f64)> {
    [0.0, 0.05, 0.2, 0.5]
        .into_iter()
        .flat_map(|c| (0..41).map(move |k| (c, -0.95 + 1.9 * k as f64 / 40.0)))
}

fn root_residual(_: &Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for (c, z) in spectra_grid() {
        let coeffs = quartic_coefficients(c, z, 1.0 - z * z);
        for b in eigenstates_at(&circle_point(z), c).map_err(err)? {
            worst = worst.max(quartic_residual(&coeffs, b.eta).abs());
        }
    }
    check(worst < 1e-10, format!("max |p(eta)| {worst:.2e} over 164 points"))
}

fn eigen_residual(_: &Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for (c, z) in spectra_grid() {
        for b in eigenstates_at(&circle_point(z), c).map_err(err)? {
            let psi = b.state();
            let h = ModelSpec::nonlinear(c).effective_hamiltonian(&psi, &b.point);
            let v = psi.amplitudes();
            for i in 0..2 {
                worst = worst.max((h[(i, 0)] * v[0] + h[(i, 1)] * v[1] - v[i] * b.mu).norm());
            }
        }
    }
    check(worst < 1e-9, format!("max |H(psi)psi - mu psi| {worst:.2e}"))
}

fn newton_oracle(_: &Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for (c, z) in spectra_grid() {
        let r = circle_point(z);
        let newton = fixed_points_newton(&r, c).map_err(err)?;
        for b in eigenstates_at(&r, c).map_err(err)? {
            let d = newton
                .iter()
                .map(|f| (f.red.w - b.w).abs() + phase_distance(f.red.phi, b.phi))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        }
    }
    check(worst < 1e-8, format!("max distance to Newton fixed points {worst:.2e}"))
}

fn small_c_continuity(_: &Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..21 {
        let r = circle_point(-0.9 + 1.8 * k as f64 / 20.0);
        let lin = linear_eigensystem(&two_level_matrix(&r)).map_err(err)?;
        let [lo, hi] = eigenstates_at(&r, 1e-6).map_err(err)?;
        worst = worst.max(1.0 - lo.state().fidelity(&lin.vectors[0]));
        worst = worst.max(1.0 - hi.state().fidelity(&lin.vectors[1]));
    }
    check(worst < 1e-4, format!("max infidelity to linear eigenvectors at c = 1e-6: {worst:.2e}"))
}

fn sign_convention_probe(_: &Ctx) -> Outcome {
    let p = probe_sign_convention(0.5, 256).map_err(err)?;
    check(
        p.convention == EtaConvention::MinusW && p.mismatch < 1e-6,
        format!("{:?}, mismatch {:.2e}", p.convention, p.mismatch),
    )
}

fn linear_reconstruction(ctx: &Ctx) -> Outcome {
    let mut rng = ctx.rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a = DMatrix::from_fn(4, 4, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let h = (&a + a.adjoint()).scale(0.5);
        let sys = linear_eigensystem(&h).map_err(err)?;
        let mut rec = DMatrix::<C64>::zeros(4, 4);
        for (lambda, v) in sys.values.iter().zip(&sys.vectors) {
            let col = DMatrix::from_column_slice(4, 1, v.amplitudes());
            rec += (&col * col.adjoint()).scale(*lambda);
        }
        worst = worst.max((rec - &h).norm());
    }
    check(worst < 1e-10, format!("max ||H - V L V^+|| {worst:.2e} over 50 matrices"))
}

fn action_roundtrip(_: &Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for (c, z) in [(0.05, 0.0), (0.05, 0.4), (0.2, -0.6), (0.0, 0.5)] {
        for label in [BranchLabel::Lower, BranchLabel::Upper] {
            let b = geophase::spectra::eigenstate(&circle_point(z), c, label).map_err(err)?;
            let orbit = orbit_with_action(&b, c, 0.005).map_err(err)?;
            let a = action_of(&orbit.curve()).map_err(err)?;
            worst = worst.max((a - orbit.signed_action()).abs() / 0.005);
        }
    }
    check(worst < 1e-6, format!("max relative action error {worst:.2e}"))
}

fn adiabatic_invariance(ctx: &Ctx) -> Outcome {
    let lp = ParameterLoop::circle_fixed_z(0.4, 1e-3).map_err(err)?;
    let r = gamma_dynamic(&lp, &ModelSpec::nonlinear(0.05), BranchLabel::Lower, 0.005, 4, &ctx.cfg).map_err(err)?;
    let drift = r.action_drift(0.005).ok_or("no final action")?;
    let bound = 1e-4f64.max(0.05 * 0.005);
    check(drift < bound, format!("max action drift {drift:.2e} (bound {bound:.1e}) at v = 1e-3, M = 4"))
}

fn frozen_record(ctx: &Ctx, psi: &QuantumState, r: &ParameterPoint, c: f64, t: f64) -> Result<geophase::actionangle::AngleRecord, String> {
    let traj = integrate_frozen(psi, r, &ModelSpec::nonlinear(c), t, &ctx.cfg).map_err(err)?;
    let frames = BranchFrames::from_trajectory(&traj, c, BranchLabel::Lower).map_err(err)?;
    track_angles(&traj, &frames).map_err(err)
}

fn global_phase_rate(ctx: &Ctx) -> Outcome {
    let (c, t) = (0.05, 500.0);
    let mut worst: f64 = 0.0;
    for z in [-0.5, 0.0, 0.4] {
        let b = geophase::spectra::eigenstate(&circle_point(z), c, BranchLabel::Lower).map_err(err)?;
        let rec = frozen_record(ctx, &b.state(), &b.point, c, t)?;
        worst = worst.max((rec.delta_global() - b.mu * t).abs() / t);
    }
    check(worst < 1e-6, format!("max |dTheta - mu t| / t = {worst:.2e}"))
}

fn angle_rate_and_orientation(ctx: &Ctx) -> Outcome {
    let c = 0.05;
    let mut worst: f64 = 0.0;
    let mut coherent = true;
    for (z, label) in [(0.0, BranchLabel::Lower), (0.4, BranchLabel::Lower), (0.4, BranchLabel::Upper)] {
        let b = geophase::spectra::eigenstate(&circle_point(z), c, label).map_err(err)?;
        let orbit = orbit_with_action(&b, c, 0.005).map_err(err)?;
        let t = 3.0 * orbit.period;
        let traj = integrate_frozen(&orbit.state_at(0.0).map_err(err)?, &b.point, &ModelSpec::nonlinear(c), t, &ctx.cfg)
            .map_err(err)?;
        let frames = BranchFrames::from_trajectory(&traj, c, label).map_err(err)?;
        let d = track_angles(&traj, &frames).map_err(err)?.delta_orbit().ok_or("orbit angle undefined")?;
        worst = worst.max((d.abs() / t - TAU / orbit.period).abs());
        coherent &= d.signum() == orbit.signed_action().signum();
    }
    check(
        worst < 1e-6 && coherent,
        format!("max |<dtheta/dt> - 2pi/T| = {worst:.2e}, orientation coherent: {coherent}"),
    )
}

fn arithmetic_identity(ctx: &Ctx) -> Outcome {
    let lp = ParameterLoop::circle_fixed_z(0.3, 0.05).map_err(err)?;
    let r = gamma_dynamic(&lp, &ModelSpec::nonlinear(0.05), BranchLabel::Lower, 0.005, 2, &ctx.cfg).map_err(err)?;
    let (b, d) = (r.beta_bar.ok_or("missing beta_bar")?, r.dynamical_term.ok_or("missing dyn term")?);
    let gap = (r.unwrapped - (b - d)).abs();
    check(gap == 0.0, format!("|gamma - (beta_bar - dyn)| = {gap:.2e}"))
}

fn eigenstate_reduction(_: &Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for z in [-0.4, 0.0, 0.4] {
        let lp = ParameterLoop::circle_fixed_z(z, 1e-3).map_err(err)?;
        let s = gamma_static(&lp, 0.05, BranchLabel::Lower, 0.0, &StaticGrid::default()).map_err(err)?;
        let fam = continue_branch(&lp, 0.05, BranchLabel::Lower, 256).map_err(err)?;
        let w = berry_line_integral(&fam.states()).map_err(err)?;
        worst = worst.max(phase_difference(s.gamma, w.principal));
    }
    check(worst < 1e-6, format!("max |static(I=0) - Wilson| = {worst:.2e}"))
}

fn linear_exactness(_: &Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    for z in [-0.8, -0.3, 0.0, 0.5, 0.9] {
        let lp = ParameterLoop::circle_fixed_z(z, 1.0).map_err(err)?;
        let fam = continue_branch(&lp, 0.0, BranchLabel::Lower, 256).map_err(err)?;
        let w = berry_line_integral(&fam.states()).map_err(err)?.principal;
        // half the solid angle enclosed by the circle
        let solid = PI * (1.0 - z);
        worst = worst.max(phase_difference(w, solid));
        worst = worst.max(phase_difference(gamma_circle_closed_form(z), w));
    }
    check(worst < 1e-6, format!("max |Wilson - solid angle/2| = {worst:.2e}"))
}

fn stokes_convergence(_: &Ctx) -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for z in [0.0, 0.4] {
        let lp = ParameterLoop::circle_fixed_z(z, 1.0).map_err(err)?;
        let exact = closed_form_for_circle(z, 0.05, BranchLabel::Lower).map_err(err)?.unwrapped;
        let e = |radial: usize| -> Result<f64, String> {
            let res = CapResolution { radial, angular: 64 };
            Ok((gamma_flux(&lp, 0.05, BranchLabel::Lower, &res).map_err(err)? - exact).abs())
        };
        let (e1, e2, e3) = (e(8)?, e(16)?, e(32)?);
        let order = (e2 / e3).log2().min((e1 / e2).log2());
        let default = e(CapResolution::default().radial)?;
        ok &= order >= 2.0 && default < 1e-4 && e3 < e2 && e2 < e1;
        details.push(format!("Z={z}: order {order:.2}, default error {default:.1e}"));
    }
    check(ok, details.join("; "))
}

fn wilson_gauge_robustness(ctx: &Ctx) -> Outcome {
    let mut rng = ctx.rng(8);
    let lp = ParameterLoop::circle_fixed_z(0.3, 1.0).map_err(err)?;
    let states = continue_branch(&lp, 0.05, BranchLabel::Lower, 256).map_err(err)?.states();
    let base = berry_line_integral(&states).map_err(err)?.principal;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let jittered: Vec<QuantumState> = states.iter().map(|s| s.with_phase(rng.gen_range(0.0..TAU))).collect();
        worst = worst.max(phase_difference(berry_line_integral(&jittered).map_err(err)?.principal, base));
    }
    check(worst < 1e-9, format!("max change under random rephasing {worst:.2e}"))
}

fn section_independence(_: &Ctx) -> Outcome {
    let lp = ParameterLoop::circle_fixed_z(0.4, 1e-3).map_err(err)?;
    let grid = StaticGrid::default();
    let a = gamma_static(&lp, 0.05, BranchLabel::Lower, 0.005, &grid).map_err(err)?;
    let b = gamma_static(&lp, 0.05, BranchLabel::Lower, 0.005, &StaticGrid { section: GaugeSection::SecondReal, ..grid })
        .map_err(err)?;
    let d = phase_difference(a.gamma, b.gamma);
    check(d < 1e-6, format!("section swap changes gamma by {d:.2e}"))
}

fn linear_weighted_sum(ctx: &Ctx) -> Outcome {
    let lp = ParameterLoop::circle_fixed_z(0.5, 1e-3).map_err(err)?;
    let weights = [0.3, 0.7];
    let r = gamma_dynamic_superposition(&lp, &ModelSpec::nonlinear(0.0), &weights, 8, &ctx.cfg).map_err(err)?;
    let gammas: Vec<f64> = [BranchLabel::Lower, BranchLabel::Upper]
        .into_iter()
        .map(|l| -> Result<f64, String> {
            let fam = continue_branch(&lp, 0.0, l, 256).map_err(err)?;
            Ok(berry_line_integral(&fam.states()).map_err(err)?.total)
        })
        .collect::<Result<_, _>>()?;
    let sum = gamma_weighted_sum(&weights, &gammas).map_err(err)?;
    let d = phase_difference(r.phase.gamma, sum);
    check(d < 0.02, format!("|dynamic - weighted sum| = {d:.2e} at v = 1e-3, M = 8"))
}

fn rate_convergence(ctx: &Ctx) -> Outcome {
    let z = 0.4;
    let reference = {
        let lp = ParameterLoop::circle_fixed_z(z, 1.0).map_err(err)?;
        gamma_static(&lp, 0.05, BranchLabel::Lower, 0.0, &StaticGrid::default()).map_err(err)?.gamma
    };
    let errors: Vec<f64> = [4e-3, 2e-3, 1e-3]
        .into_iter()
        .map(|v| -> Result<f64, String> {
            let lp = ParameterLoop::circle_fixed_z(z, v).map_err(err)?;
            let r = gamma_dynamic(&lp, &ModelSpec::nonlinear(0.05), BranchLabel::Lower, 0.0, 1, &ctx.cfg).map_err(err)?;
            Ok(phase_difference(r.gamma, reference))
        })
        .collect::<Result<_, _>>()?;
    check(
        errors[1] < errors[0] && errors[2] < errors[1],
        format!("errors at v = 4e-3, 2e-3, 1e-3: {:.2e}, {:.2e}, {:.2e}", errors[0], errors[1], errors[2]),
    )
}

fn hannay_sign_relation(ctx: &Ctx) -> Outcome {
    let lp = ParameterLoop::circle_fixed_z(0.4, 1e-3).map_err(err)?;
    let h = hannay_direct(&lp, &ModelSpec::nonlinear(0.0), BranchLabel::Lower, 0.005, 4, &ctx.cfg, 8).map_err(err)?;
    let fam = continue_branch(&lp, 0.0, BranchLabel::Lower, 256).map_err(err)?;
    let gamma = berry_line_integral(&fam.states()).map_err(err)?.total;
    let d = phase_difference(h.alpha_global.ok_or("missing global angle")?, -gamma);
    check(d < 0.05, format!("|alpha + gamma_lower| = {d:.2e} at c = 0"))
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.grid.points = 9;
    cfg
}

fn reproducibility(_: &Ctx) -> Outcome {
    let a = cmd_eigenstates(&small_config()).map_err(err)?;
    let b = cmd_eigenstates(&small_config()).map_err(err)?;
    let same = a.tables[0].to_csv() == b.tables[0].to_csv();
    check(same, format!("identical CSV across runs: {same}"))
}

fn missing_keys(reference: &Value, echoed: &Value, path: &str, out: &mut Vec<String>) {
    if let Value::Object(map) = reference {
        for (k, v) in map {
            let p = format!("{path}.{k}");
            match echoed.get(k) {
                None | Some(Value::Null) => out.push(p),
                Some(e) => missing_keys(v, e, &p, out),
            }
        }
    }
}

fn config_echo(_: &Ctx) -> Outcome {
    let report = cmd_eigenstates(&small_config()).map_err(err)?;
    let meta = report.metadata();
    let reference = serde_json::to_value(ExperimentConfig::default()).map_err(err)?;
    let mut missing = Vec::new();
    missing_keys(&reference, &meta["config"], "config", &mut missing);
    // `output_step = None` means "automatic cadence" and is echoed as null.
    missing.retain(|m| m != "config.tolerances.integrator.output_step");
    check(missing.is_empty(), if missing.is_empty() { "all defaults echoed".into() } else { missing.join(", ") })
}
