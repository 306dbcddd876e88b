//! Time evolution at frozen and slowly swept parameters.
//!
//! Integration is never renormalized: the norm of the state is a genuine
//! accuracy signal and is only checked, every `renorm_check_every`
//! accepted steps, against `norm_tolerance`.

pub(crate) mod dopri;

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParameterLoop, ParameterPoint, QuantumState};

pub(crate) use dopri::Dopri5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub renorm_check_every: usize,
    /// Largest tolerated `|⟨ψ|ψ⟩ − 1|` before integration aborts.
    pub norm_tolerance: f64,
    /// Output cadence; `None` picks `min(0.1, 2π/(40 ω_max), 0.08/ω_max)`.
    pub output_step: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-13,
            abs_tol: 1e-15,
            max_step: 0.5,
            renorm_check_every: 1000,
            norm_tolerance: 1e-9,
            output_step: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v <= 1e-3) {
                return Err(Error::Contract(format!("{name} = {v} outside (0, 1e-3]")));
            }
        }
        if !(self.max_step > 0.0) {
            return Err(Error::Contract("max_step must be positive".into()));
        }
        if let Some(dt) = self.output_step {
            if !(dt > 0.0) {
                return Err(Error::Contract("output_step must be positive".into()));
            }
        }
        Ok(())
    }

    /// Default sampling cadence for a fastest frequency bound `omega_max`.
    ///
    /// The last bound keeps `|⟨ψ(t)|ψ(t + Δt)⟩| ≥ cos(ω_max Δt / 2) > 0.999`
    /// for arbitrary superpositions.
    pub fn cadence_for(&self, omega_max: f64) -> f64 {
        self.output_step.unwrap_or_else(|| {
            if omega_max > 0.0 {
                (0.1f64).min(2.0 * PI / (40.0 * omega_max)).min(0.08 / omega_max)
            } else {
                0.1
            }
        })
    }

    pub(crate) fn solver(&self) -> Dopri5 {
        Dopri5::new(self.rel_tol, self.abs_tol, self.max_step)
    }
}

/// Time-ordered samples `(t, ψ(t), R(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    amplitudes: Vec<C64>,
    points: Vec<ParameterPoint>,
}

impl Trajectory {
    fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            times: Vec::with_capacity(n),
            amplitudes: Vec::with_capacity(n * dim),
            points: Vec::with_capacity(n),
        }
    }

    /// Assembles a trajectory from externally produced samples.
    pub fn from_samples(times: Vec<f64>, states: &[QuantumState], points: Vec<ParameterPoint>) -> Result<Self> {
        let n = times.len();
        if states.len() != n || points.len() != n || n == 0 {
            return Err(Error::Contract("times, states and points must have equal nonzero length".into()));
        }
        if times.windows(2).any(|w| !(w[1] != w[0] && (w[1] - w[0]).signum() == (times[1] - times[0]).signum())) {
            return Err(Error::Contract("sample times must be strictly monotonic".into()));
        }
        let dim = states[0].dim();
        let mut traj = Self::with_capacity(dim, n);
        for ((t, psi), r) in times.into_iter().zip(states).zip(points) {
            psi.require_dim(dim)?;
            traj.push(t, psi.amplitudes(), r);
        }
        Ok(traj)
    }

    fn push(&mut self, t: f64, psi: &[C64], r: ParameterPoint) {
        self.times.push(t);
        self.amplitudes.extend_from_slice(psi);
        self.points.push(r);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn amplitudes(&self, k: usize) -> &[C64] {
        &self.amplitudes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn state(&self, k: usize) -> QuantumState {
        QuantumState::new(self.amplitudes(k).to_vec()).expect("trajectory states have N >= 2")
    }

    pub fn point(&self, k: usize) -> ParameterPoint {
        self.points[k]
    }

    pub fn points(&self) -> &[ParameterPoint] {
        &self.points
    }

    pub fn final_state(&self) -> QuantumState {
        self.state(self.len() - 1)
    }

    pub fn max_norm_deviation(&self) -> f64 {
        self.amplitudes
            .chunks(self.dim)
            .map(|a| (a.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// CSV dump: `t,re_psi1,im_psi1,re_psi2,im_psi2,...,X,Y,Z`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        for j in 1..=self.dim {
            header.push(format!("re_psi{j}"));
            header.push(format!("im_psi{j}"));
        }
        header.extend(["X", "Y", "Z"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            write!(out, "{}", self.times[k])?;
            for a in self.amplitudes(k) {
                write!(out, ",{},{}", a.re, a.im)?;
            }
            let r = self.points[k];
            writeln!(out, ",{},{},{}", r.x, r.y, r.z)?;
        }
        Ok(())
    }
}

fn omega_bound(model: &ModelSpec, r: &ParameterPoint) -> f64 {
    match model {
        ModelSpec::NonlinearTwoLevel { c } => r.norm() + c.abs(),
        ModelSpec::LinearNLevel(m) => m.hamiltonian_at(r).norm(),
    }
}

fn check_initial(initial: &QuantumState, model: &ModelSpec) -> Result<()> {
    initial.require_dim(model.dim())?;
    let dev = (initial.norm_sqr() - 1.0).abs();
    if dev > crate::model::NORM_TOLERANCE {
        return Err(Error::Contract(format!("initial state not normalized (|⟨ψ|ψ⟩ − 1| = {dev:e})")));
    }
    Ok(())
}

fn norm_guard(tol: f64) -> impl FnMut(f64, &[C64]) -> Result<()> {
    move |t, y| {
        let drift = (y.iter().map(|a| a.norm_sqr()).sum::<f64>() - 1.0).abs();
        if drift > tol {
            Err(Error::NormDrift { t, drift })
        } else {
            Ok(())
        }
    }
}

/// Evolves `initial` for `duration` at fixed `R`.
pub fn integrate_frozen(
    initial: &QuantumState,
    r: &ParameterPoint,
    model: &ModelSpec,
    duration: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_initial(initial, model)?;
    cfg.validate()?;
    let dt = cfg.cadence_for(omega_bound(model, r));
    let mut traj = Trajectory::with_capacity(model.dim(), (duration.abs() / dt) as usize + 2);
    let mut y = initial.amplitudes().to_vec();
    let r = *r;
    let obs = |t: f64, psi: &[C64]| {
        traj.push(t, psi, r);
        Ok(())
    };
    match model {
        ModelSpec::NonlinearTwoLevel { c } => {
            let c = *c;
            cfg.solver().integrate(
                |_, psi: &[C64], out: &mut [C64]| crate::model::nonlinear_rhs_into(psi, &r, c, out),
                0.0,
                &mut y,
                duration,
                dt,
                obs,
                cfg.renorm_check_every,
                norm_guard(cfg.norm_tolerance),
            )?;
        }
        ModelSpec::LinearNLevel(m) => {
            let h = m.hamiltonian_at(&r);
            cfg.solver().integrate(
                |_, psi: &[C64], out: &mut [C64]| crate::model::linear_rhs_into(&h, psi, out),
                0.0,
                &mut y,
                duration,
                dt,
                obs,
                cfg.renorm_check_every,
                norm_guard(cfg.norm_tolerance),
            )?;
        }
    }
    Ok(traj)
}

/// Output cadence used for a sweep around `lp`.
pub fn sweep_cadence(lp: &ParameterLoop, model: &ModelSpec, cfg: &IntegratorConfig) -> f64 {
    let omega = (0..64)
        .map(|k| omega_bound(model, &lp.point_at(k as f64 / 64.0)))
        .fold(0.0, f64::max);
    cfg.cadence_for(omega)
}

/// Evolves `initial` while `R(t)` traverses `lp` once, `t ∈ [0, T]`.
pub fn integrate_sweep(
    initial: &QuantumState,
    lp: &ParameterLoop,
    model: &ModelSpec,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_initial(initial, model)?;
    cfg.validate()?;
    if lp.closure_gap() >= 1e-12 {
        return Err(Error::Contract("parameter loop is not closed".into()));
    }
    let total = lp.duration();
    let dt = sweep_cadence(lp, model, cfg);
    let mut traj = Trajectory::with_capacity(model.dim(), (total / dt) as usize + 2);
    let mut y = initial.amplitudes().to_vec();
    let obs = |t: f64, psi: &[C64]| {
        traj.push(t, psi, lp.point_at_time(t));
        Ok(())
    };
    match model {
        ModelSpec::NonlinearTwoLevel { c } => {
            let c = *c;
            cfg.solver().integrate(
                |t, psi: &[C64], out: &mut [C64]| {
                    crate::model::nonlinear_rhs_into(psi, &lp.point_at_time(t), c, out)
                },
                0.0,
                &mut y,
                total,
                dt,
                obs,
                cfg.renorm_check_every,
                norm_guard(cfg.norm_tolerance),
            )?;
        }
        ModelSpec::LinearNLevel(m) => {
            cfg.solver().integrate(
                |t, psi: &[C64], out: &mut [C64]| {
                    let h = m.hamiltonian_at(&lp.point_at_time(t));
                    crate::model::linear_rhs_into(&h, psi, out)
                },
                0.0,
                &mut y,
                total,
                dt,
                obs,
                cfg.renorm_check_every,
                norm_guard(cfg.norm_tolerance),
            )?;
        }
    }
    Ok(traj)
}

/// Maps `f` over `items` (possibly in parallel), keeping input order and
/// reporting the first failing index.
pub(crate) fn ordered_try_map<I, T, F>(items: &[I], f: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = items.par_iter().map(f).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Ensemble {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Order-preserving parallel map that returns the first error as is.
pub(crate) fn par_try_map<I, T, F>(items: &[I], f: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = items.par_iter().map(f).collect();
    results.into_iter().collect()
}

/// `integrate_sweep` over each initial state; output order follows input order.
pub fn run_ensemble(
    initials: &[QuantumState],
    lp: &ParameterLoop,
    model: &ModelSpec,
    cfg: &IntegratorConfig,
) -> Result<Vec<Trajectory>> {
    ordered_try_map(initials, |psi| integrate_sweep(psi, lp, model, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{classical_hamiltonian, LinearModel};

    fn c64(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// `exp(−iHt)ψ` for `H = (R·σ)/2`.
    fn rabi(psi: &QuantumState, r: &ParameterPoint, t: f64) -> QuantumState {
        let b = r.norm();
        let (cs, sn) = ((0.5 * b * t).cos(), (0.5 * b * t).sin());
        let n = r.scale(1.0 / b);
        let a = psi.amplitudes();
        // (n·σ)ψ
        let s0 = a[0] * n.z + c64(n.x, -n.y) * a[1];
        let s1 = c64(n.x, n.y) * a[0] - a[1] * n.z;
        let mi = c64(0.0, -sn);
        QuantumState::two_level(a[0] * cs + mi * s0, a[1] * cs + mi * s1)
    }

    #[test]
    fn stationary_level_phase() {
        let psi = QuantumState::two_level(c64(1.0, 0.0), c64(0.0, 0.0));
        let traj = integrate_frozen(
            &psi,
            &ParameterPoint::new(0.0, 0.0, 1.0),
            &ModelSpec::nonlinear(0.0),
            2.0 * PI,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let expected = QuantumState::two_level(c64(-1.0, 0.0), c64(0.0, 0.0));
        assert!(traj.final_state().max_abs_diff(&expected) < 1e-8);
        assert!((traj.time(traj.len() - 1) - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn rabi_full_period() {
        let psi = QuantumState::two_level(c64(1.0, 0.0), c64(0.0, 0.0));
        let r = ParameterPoint::new(1.0, 0.0, 0.0);
        let traj = integrate_frozen(&psi, &r, &ModelSpec::nonlinear(0.0), 2.0 * PI, &IntegratorConfig::default())
            .unwrap();
        let expected = QuantumState::two_level(c64(-1.0, 0.0), c64(0.0, 0.0));
        assert!(traj.final_state().max_abs_diff(&expected) < 1e-8);
        for k in 0..traj.len() {
            let exact = rabi(&psi, &r, traj.time(k));
            assert!(1.0 - traj.state(k).fidelity(&exact) < 1e-8);
        }
    }

    #[test]
    fn linear_limit_matches_propagator() {
        let psi = QuantumState::normalized(vec![c64(0.3, -0.2), c64(0.5, 0.7)]).unwrap();
        let r = ParameterPoint::new(0.4, -0.3, 0.8);
        let cfg = IntegratorConfig::default();
        let traj = integrate_frozen(&psi, &r, &ModelSpec::nonlinear(0.0), 50.0, &cfg).unwrap();
        let lin = integrate_frozen(&psi, &r, &ModelSpec::LinearNLevel(LinearModel::two_level()), 50.0, &cfg).unwrap();
        let exact = rabi(&psi, &r, 50.0);
        assert!(traj.final_state().max_abs_diff(&exact) < 1e-8);
        assert!(lin.final_state().max_abs_diff(&exact) < 1e-8);
    }

    #[test]
    fn nonlinear_energy_conservation() {
        let psi = QuantumState::two_level(c64(0.5f64.sqrt(), 0.0), c64(0.5f64.sqrt(), 0.0));
        let r = ParameterPoint::new(0.0, 0.0, 0.5);
        let traj = integrate_frozen(&psi, &r, &ModelSpec::nonlinear(0.05), 100.0, &IntegratorConfig::default())
            .unwrap();
        let e0 = classical_hamiltonian(&psi, &r, 0.05).unwrap();
        for k in 0..traj.len() {
            let e = classical_hamiltonian(&traj.state(k), &r, 0.05).unwrap();
            assert!((e - e0).abs() < 1e-8);
        }
        assert!(traj.max_norm_deviation() < 1e-9);
    }

    #[test]
    fn forward_backward_returns() {
        let psi = QuantumState::normalized(vec![c64(0.8, 0.1), c64(0.2, -0.5)]).unwrap();
        let r = ParameterPoint::new(0.6, 0.0, 0.8);
        let model = ModelSpec::nonlinear(0.3);
        let cfg = IntegratorConfig::default();
        let fwd = integrate_frozen(&psi, &r, &model, 30.0, &cfg).unwrap();
        let back = integrate_frozen(&fwd.final_state(), &r, &model, -30.0, &cfg).unwrap();
        assert!(back.final_state().max_abs_diff(&psi) < 1e-8);
        assert!(back.times().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn samples_are_ordered_and_dense() {
        let psi = QuantumState::normalized(vec![c64(0.8, 0.1), c64(0.2, -0.5)]).unwrap();
        let lp = ParameterLoop::circle_fixed_z(0.3, 0.05).unwrap();
        let traj = integrate_sweep(&psi, &lp, &ModelSpec::nonlinear(0.05), &IntegratorConfig::default()).unwrap();
        assert!(traj.times().windows(2).all(|w| w[1] > w[0]));
        assert!((traj.time(traj.len() - 1) - lp.duration()).abs() < 1e-9);
        for k in 1..traj.len() {
            let ov = crate::model::inner(traj.amplitudes(k - 1), traj.amplitudes(k)).norm();
            assert!(ov > 0.999);
        }
        assert!(traj.max_norm_deviation() < 1e-8);
    }

    #[test]
    fn degenerate_circle_is_frozen() {
        let psi = QuantumState::normalized(vec![c64(0.8, 0.1), c64(0.2, -0.5)]).unwrap();
        let lp = ParameterLoop::circle_fixed_z(1.0, 1e-3).unwrap();
        let model = ModelSpec::nonlinear(0.05);
        let cfg = IntegratorConfig::default();
        let sweep = integrate_sweep(&psi, &lp, &model, &cfg).unwrap();
        let frozen = integrate_frozen(&psi, &ParameterPoint::new(0.0, 0.0, 1.0), &model, lp.duration(), &cfg).unwrap();
        assert_eq!(sweep, frozen);
    }

    #[test]
    fn ensemble_order_and_determinism() {
        let lp = ParameterLoop::circle_fixed_z(0.2, 0.02).unwrap();
        let model = ModelSpec::nonlinear(0.05);
        let cfg = IntegratorConfig::default();
        let states: Vec<QuantumState> = (0..4)
            .map(|k| QuantumState::normalized(vec![c64(1.0, 0.0), c64(0.1 * k as f64, 0.3)]).unwrap())
            .collect();
        let single = integrate_sweep(&states[0], &lp, &model, &cfg).unwrap();
        let one = run_ensemble(&states[..1], &lp, &model, &cfg).unwrap();
        assert_eq!(one[0], single);

        let fwd = run_ensemble(&states, &lp, &model, &cfg).unwrap();
        let rev_in: Vec<QuantumState> = states.iter().rev().cloned().collect();
        let rev = run_ensemble(&rev_in, &lp, &model, &cfg).unwrap();
        for k in 0..4 {
            assert_eq!(fwd[k], rev[3 - k]);
        }
    }

    #[test]
    fn ensemble_reports_failing_index() {
        let lp = ParameterLoop::circle_fixed_z(0.2, 0.02).unwrap();
        let good = QuantumState::two_level(c64(1.0, 0.0), c64(0.0, 0.0));
        let bad = QuantumState::two_level(c64(2.0, 0.0), c64(0.0, 0.0));
        let err = run_ensemble(&[good, bad], &lp, &ModelSpec::nonlinear(0.0), &IntegratorConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::Ensemble { index: 1, .. }));
    }

    #[test]
    fn csv_dump_header() {
        let psi = QuantumState::two_level(c64(1.0, 0.0), c64(0.0, 0.0));
        let traj = integrate_frozen(&psi, &ParameterPoint::new(0.0, 0.0, 1.0), &ModelSpec::nonlinear(0.0), 0.2, &IntegratorConfig::default())
            .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,re_psi1,im_psi1,re_psi2,im_psi2,X,Y,Z");
        assert_eq!(lines.count(), traj.len());
    }
}
