//! Frozen orbits, actions and angle variables of the reduced dynamics.
//!
//! The reduced dynamics lives on the cylinder `(q, p) = (φ, w/2)`. Around an
//! elliptic fixed point the quadratic part of `𝓗_red` is brought to circles
//! by `y = K^{1/2} z`, where `K` is the Hessian in `(q, p)` (or `−K` about a
//! maximum) and `z` the displacement. The orbit angle is `atan2(P, Q)` in
//! those coordinates, so it is zero at the top of the orbit (maximum `w`) and
//! advances in the direction of motion about a minimum. Orbits about a
//! maximum run the other way and carry orientation `−1`.
//!
//! Orbits are integrated as the real system `(w, φ, Θ)` with
//! `Θ̇ = ⟨H(ψ)⟩ + (1 − w)/2 · φ̇`, the global phase in the standard section.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::dynamics::{Dopri5, Trajectory};
use crate::error::{Error, Result};
use crate::model::{
    lift, phase_distance, reduce_amplitudes, reduced_gradient, reduced_hamiltonian, reduced_hessian,
    wrap_angle, ParameterPoint, QuantumState, ReducedState,
};
use crate::spectra::{eigenstate, BranchLabel, EigenstateBranch};

/// Samples per frozen orbit unless asked otherwise.
pub const DEFAULT_ORBIT_SAMPLES: usize = 128;

fn orbit_solver() -> Dopri5 {
    Dopri5::new(1e-13, 1e-15, 0.25)
}

/// Linearized normal form of `𝓗_red` about an elliptic fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalForm {
    pub center: ReducedState,
    /// Maps `(δφ, δp)` to `(P, Q)`.
    pub transform: [[f64; 2]; 2],
    /// Linear orbit frequency.
    pub omega: f64,
    /// `+1` about a minimum of `𝓗_red`, `−1` about a maximum.
    pub orientation: f64,
}

impl NormalForm {
    pub fn at(center: &ReducedState, r: &ParameterPoint, c: f64) -> Result<Self> {
        let h = reduced_hessian(center, r, c);
        let k = [[h[1][1], 2.0 * h[0][1]], [2.0 * h[0][1], 4.0 * h[0][0]]];
        let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        if !(det > 0.0) {
            return Err(Error::OrbitConstruction(format!(
                "fixed point at w = {} is not elliptic",
                center.w
            )));
        }
        let orientation = k[0][0].signum();
        let m = [[orientation * k[0][0], orientation * k[0][1]], [orientation * k[1][0], orientation * k[1][1]]];
        // square root of a 2x2 positive-definite matrix
        let sd = det.sqrt();
        let t = (m[0][0] + m[1][1] + 2.0 * sd).sqrt();
        let transform = [[(m[0][0] + sd) / t, m[0][1] / t], [m[1][0] / t, (m[1][1] + sd) / t]];
        Ok(Self {
            center: *center,
            transform,
            omega: sd,
            orientation,
        })
    }

    pub fn displacement(&self, red: &ReducedState) -> (f64, f64) {
        (wrap_angle(red.phi - self.center.phi), 0.5 * (red.w - self.center.w))
    }

    /// Circular coordinates `(P, Q)`.
    pub fn coordinates(&self, red: &ReducedState) -> (f64, f64) {
        let (dq, dp) = self.displacement(red);
        let t = &self.transform;
        (t[0][0] * dq + t[0][1] * dp, t[1][0] * dq + t[1][1] * dp)
    }

    pub fn angle(&self, red: &ReducedState) -> f64 {
        let (p, q) = self.coordinates(red);
        p.atan2(q)
    }

    /// Signed action of the linearized motion through `red`.
    pub fn linear_action(&self, red: &ReducedState) -> f64 {
        let (p, q) = self.coordinates(red);
        self.orientation * (p * p + q * q) / (2.0 * self.omega)
    }

    pub fn linear_period(&self) -> f64 {
        TAU / self.omega
    }
}

fn reduced_flow(r: ParameterPoint, c: f64) -> impl Fn(f64, &[f64], &mut [f64]) {
    move |_, y, d| {
        let red = ReducedState { w: y[0], phi: y[1] };
        let (gw, gphi) = reduced_gradient(&red, &r, c);
        let phidot = 2.0 * gw;
        d[0] = -2.0 * gphi;
        d[1] = phidot;
        d[2] = reduced_hamiltonian(&red, &r, c) + 0.25 * c * (1.0 - y[0] * y[0]) + 0.5 * (1.0 - y[0]) * phidot;
    }
}

fn advance(r: &ParameterPoint, c: f64, y: &mut [f64; 3], dt: f64) -> Result<()> {
    if dt == 0.0 {
        return Ok(());
    }
    orbit_solver().integrate(reduced_flow(*r, c), 0.0, y, dt, f64::INFINITY, |_, _| Ok(()), 0, |_, _| Ok(()))?;
    if !(y[0].abs() < 1.0) {
        return Err(Error::OrbitConstruction("orbit reaches a pole of the Bloch sphere".into()));
    }
    Ok(())
}

fn as_reduced(y: &[f64; 3]) -> ReducedState {
    ReducedState::new(y[0], y[1])
}

struct OrbitTrace {
    period: f64,
    action: f64,
    phase_advance: f64,
    samples: Vec<ReducedState>,
}

/// Follows the frozen orbit through `start` for one period.
fn trace_orbit(start: &ReducedState, r: &ParameterPoint, c: f64, nf: &NormalForm, n: usize) -> Result<OrbitTrace> {
    let target = TAU * nf.orientation;
    let chunk = nf.linear_period() / 64.0;
    let mut y = [start.w, start.phi, 0.0];
    let mut t = 0.0;
    let mut winding = 0.0;
    let mut last = nf.angle(start);
    let (t_a, y_a, wind_a) = loop {
        let prev_y = y;
        let prev_wind = winding;
        advance(r, c, &mut y, chunk)?;
        t += chunk;
        let a = nf.angle(&as_reduced(&y));
        let step = wrap_angle(a - last);
        if step.abs() > PI / 2.0 || step * nf.orientation < 0.0 {
            return Err(Error::OrbitConstruction(
                "orbit leaves the neighbourhood of its fixed point".into(),
            ));
        }
        winding += step;
        last = a;
        if winding.abs() >= TAU {
            break (t - chunk, prev_y, prev_wind);
        }
        if t > 40.0 * nf.linear_period() {
            return Err(Error::OrbitConstruction("orbit does not close".into()));
        }
    };

    // Illinois iteration on the winding deficit inside [t_a, t_a + chunk].
    let angle_a = nf.angle(&as_reduced(&y_a));
    let deficit = |tau: f64| -> Result<f64> {
        let mut yy = y_a;
        advance(r, c, &mut yy, tau)?;
        Ok(wind_a + wrap_angle(nf.angle(&as_reduced(&yy)) - angle_a) - target)
    };
    let (mut lo, mut hi) = (0.0, chunk);
    let (mut f_lo, mut f_hi) = (wind_a - target, deficit(chunk)?);
    let mut side = 0i8;
    let mut tau = hi;
    for _ in 0..100 {
        tau = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let f = deficit(tau)?;
        if f == 0.0 || (hi - lo) < 1e-15 * (1.0 + t_a) {
            break;
        }
        if (f > 0.0) == (f_hi > 0.0) {
            hi = tau;
            f_hi = f;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = tau;
            f_lo = f;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        }
        if f.abs() < 1e-15 {
            break;
        }
    }
    let period = t_a + tau;

    let dt = period / n as f64;
    let mut rows: Vec<[f64; 3]> = Vec::with_capacity(n + 1);
    let mut y = [start.w, start.phi, 0.0];
    orbit_solver().integrate(
        reduced_flow(*r, c),
        0.0,
        &mut y,
        period,
        dt,
        |_, yy| {
            rows.push([yy[0], yy[1], yy[2]]);
            Ok(())
        },
        0,
        |_, _| Ok(()),
    )?;
    if rows.len() != n + 1 {
        return Err(Error::OrbitConstruction(format!(
            "expected {} orbit samples, got {}",
            n + 1,
            rows.len()
        )));
    }
    let gap = (rows[n][0] - rows[0][0]).abs() + phase_distance(rows[n][1], rows[0][1]);
    if gap > 1e-9 {
        return Err(Error::OrbitConstruction(format!("orbit fails to close (gap {gap:e})")));
    }

    let mut action = 0.0;
    for row in &rows[..n] {
        let red = ReducedState { w: row[0], phi: row[1] };
        let phidot = 2.0 * reduced_gradient(&red, r, c).0;
        action += 0.5 * (row[0] - nf.center.w) * phidot;
    }
    action *= dt / TAU;

    let mut samples: Vec<ReducedState> = rows.iter().map(as_reduced).collect();
    samples[n] = samples[0];
    Ok(OrbitTrace {
        period,
        action,
        phase_advance: rows[n][2] - rows[0][2],
        samples,
    })
}

/// A closed orbit of the frozen reduced dynamics.
#[derive(Debug, Clone)]
pub struct FrozenOrbit {
    pub branch: EigenstateBranch,
    pub c: f64,
    /// `|∮p dq| / 2π`.
    pub action: f64,
    pub orientation: f64,
    pub period: f64,
    /// Change of the global phase `Θ` over one period.
    pub phase_advance: f64,
    pub normal_form: NormalForm,
    samples: Vec<(f64, ReducedState)>,
}

impl FrozenOrbit {
    pub fn point(&self) -> ParameterPoint {
        self.branch.point
    }

    /// `(θ₂, state)` uniform in frozen time, closing sample included.
    pub fn samples(&self) -> &[(f64, ReducedState)] {
        &self.samples
    }

    pub fn curve(&self) -> Vec<ReducedState> {
        self.samples.iter().map(|s| s.1).collect()
    }

    /// Action conjugate to the orbit angle (negative about a maximum).
    pub fn signed_action(&self) -> f64 {
        self.orientation * self.action
    }

    /// `2π / T_orb`.
    pub fn orbit_frequency(&self) -> f64 {
        TAU / self.period
    }

    /// Mean rate of the global phase.
    pub fn global_frequency(&self) -> f64 {
        self.phase_advance / self.period
    }

    pub fn is_point(&self) -> bool {
        self.action == 0.0
    }

    /// Reduced state at angle `theta` (frozen time `θT/2π` from the top).
    pub fn reduced_at(&self, theta: f64) -> Result<ReducedState> {
        let start = self.samples[0].1;
        if self.is_point() {
            return Ok(start);
        }
        let mut y = [start.w, start.phi, 0.0];
        advance(&self.branch.point, self.c, &mut y, theta.rem_euclid(TAU) / TAU * self.period)?;
        Ok(as_reduced(&y))
    }

    pub fn state_at(&self, theta: f64) -> Result<QuantumState> {
        lift(&self.reduced_at(theta)?, 0.0)
    }
}

pub fn orbit_with_action(branch: &EigenstateBranch, c: f64, target: f64) -> Result<FrozenOrbit> {
    orbit_with_action_sampled(branch, c, target, DEFAULT_ORBIT_SAMPLES)
}

/// Frozen orbit about `branch` with action `target`, sampled at `n` points.
pub fn orbit_with_action_sampled(branch: &EigenstateBranch, c: f64, target: f64, n: usize) -> Result<FrozenOrbit> {
    if !(target >= 0.0 && target.is_finite()) {
        return Err(Error::Contract(format!("target action {target} must be finite and ≥ 0")));
    }
    if n < 4 {
        return Err(Error::Contract("an orbit needs at least 4 samples".into()));
    }
    let r = branch.point;
    let center = branch.reduced();
    let nf = NormalForm::at(&center, &r, c)?;

    if target == 0.0 {
        let period = nf.linear_period();
        return Ok(FrozenOrbit {
            branch: *branch,
            c,
            action: 0.0,
            orientation: nf.orientation,
            period,
            phase_advance: branch.mu * period,
            normal_form: nf,
            samples: (0..=n).map(|k| (TAU * k as f64 / n as f64, center)).collect(),
        });
    }

    let start_at = |delta: f64| -> Result<ReducedState> {
        let w = center.w + 2.0 * delta;
        if w >= 1.0 {
            return Err(Error::OrbitConstruction(format!("action {target} exceeds the basin")));
        }
        Ok(ReducedState::new(w, center.phi))
    };
    let residual = |delta: f64| -> Result<(f64, OrbitTrace)> {
        let tr = trace_orbit(&start_at(delta)?, &r, c, &nf, n)?;
        Ok(((tr.action * nf.orientation).abs().sqrt() - target.sqrt(), tr))
    };

    let t = &nf.transform;
    let gain = (t[0][1] * t[0][1] + t[1][1] * t[1][1]) / (2.0 * nf.omega);
    let mut d0 = (target / gain).sqrt();
    let (mut g0, mut best) = residual(d0)?;
    let mut d1 = d0 * (target.sqrt() / (g0 + target.sqrt()));
    for _ in 0..60 {
        if (best.action.abs() - target).abs() <= 1e-13 * (1.0 + target) {
            break;
        }
        let (g1, tr) = residual(d1)?;
        best = tr;
        if g1 == g0 {
            break;
        }
        let d2 = d1 - g1 * (d1 - d0) / (g1 - g0);
        d0 = d1;
        g0 = g1;
        d1 = d2;
    }
    if (best.action.abs() - target).abs() > 1e-10 * (1.0 + target) {
        return Err(Error::OrbitConstruction(format!(
            "action root-find stalled at {} (target {target})",
            best.action.abs()
        )));
    }
    let samples = best
        .samples
        .iter()
        .enumerate()
        .map(|(k, s)| (TAU * k as f64 / n as f64, *s))
        .collect();
    Ok(FrozenOrbit {
        branch: *branch,
        c,
        action: best.action.abs(),
        orientation: nf.orientation,
        period: best.period,
        phase_advance: best.phase_advance,
        normal_form: nf,
        samples,
    })
}

/// Action (non-negative) and period of the frozen orbit through `red`.
pub fn action_through(red: &ReducedState, branch: &EigenstateBranch, c: f64) -> Result<(f64, f64)> {
    let nf = NormalForm::at(&branch.reduced(), &branch.point, c)?;
    let (dq, dp) = nf.displacement(red);
    if dq.hypot(dp) < 1e-12 {
        return Ok((0.0, nf.linear_period()));
    }
    let tr = trace_orbit(red, &branch.point, c, &nf, DEFAULT_ORBIT_SAMPLES)?;
    Ok((tr.action * nf.orientation, tr.period))
}

/// Signed `(1/2π)∮ p dq` of a closed curve in `(w, φ)`.
///
/// The curve must be sampled uniformly in some smooth periodic parameter
/// with the closing point repeated; the Green integral is then evaluated
/// with spectral differentiation.
pub fn action_of(curve: &[ReducedState]) -> Result<f64> {
    if curve.len() < 4 {
        return Err(Error::Contract("closed curve needs at least 3 distinct samples".into()));
    }
    let n = curve.len() - 1;
    let (first, last) = (curve[0], curve[n]);
    if (first.w - last.w).abs() + phase_distance(first.phi, last.phi) > 1e-9 {
        return Err(Error::Contract("curve is not closed".into()));
    }
    let mut q = Vec::with_capacity(n);
    let mut acc = 0.0;
    q.push(0.0);
    for k in 1..=n {
        acc += wrap_angle(curve[k].phi - curve[k - 1].phi);
        if k < n {
            q.push(acc);
        }
    }
    if acc.abs() > 1e-9 {
        return Err(Error::Contract("curve winds around the φ cylinder".into()));
    }
    let mut qs: Vec<C64> = q.iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut ps: Vec<C64> = curve[..n].iter().map(|s| C64::new(0.5 * s.w, 0.0)).collect();
    let fft = FftPlanner::new().plan_fft_forward(n);
    fft.process(&mut qs);
    fft.process(&mut ps);
    let scale = 1.0 / (n as f64 * n as f64);
    let mut total = 0.0;
    for j in 1..n {
        let k = if 2 * j < n {
            j as f64
        } else if 2 * j > n {
            j as f64 - n as f64
        } else {
            continue;
        };
        total += (C64::new(0.0, k) * ps[j].conj() * qs[j]).re;
    }
    Ok(total * scale)
}

/// Branch fixed points and normal forms at every sample of a sweep.
#[derive(Debug, Clone)]
pub struct BranchFrames {
    pub label: BranchLabel,
    pub c: f64,
    times: Vec<f64>,
    branches: Vec<EigenstateBranch>,
    forms: Vec<NormalForm>,
}

impl BranchFrames {
    pub fn from_trajectory(traj: &Trajectory, c: f64, label: BranchLabel) -> Result<Self> {
        let mut branches = Vec::with_capacity(traj.len());
        let mut forms = Vec::with_capacity(traj.len());
        for (k, r) in traj.points().iter().enumerate() {
            let b = eigenstate(r, c, label).map_err(|e| Error::BranchContinuation {
                s: traj.time(k),
                reason: e.to_string(),
            })?;
            if let Some(prev) = branches.last() {
                let prev: &EigenstateBranch = prev;
                if (prev.w - b.w).abs() + phase_distance(prev.phi, b.phi) > 0.1 {
                    return Err(Error::BranchContinuation {
                        s: traj.time(k),
                        reason: "fixed point jumps between samples".into(),
                    });
                }
            }
            forms.push(NormalForm::at(&b.reduced(), r, c)?);
            branches.push(b);
        }
        Ok(Self {
            label,
            c,
            times: traj.times().to_vec(),
            branches,
            forms,
        })
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

    pub fn branch(&self, k: usize) -> &EigenstateBranch {
        &self.branches[k]
    }

    pub fn normal_form(&self, k: usize) -> &NormalForm {
        &self.forms[k]
    }
}

/// Unwrapped angle histories of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleRecord {
    pub times: Vec<f64>,
    pub theta_global: Vec<f64>,
    /// Absent when the state sits on the fixed point.
    pub theta_orbit: Option<Vec<f64>>,
}

impl AngleRecord {
    pub fn delta_global(&self) -> f64 {
        self.theta_global[self.theta_global.len() - 1] - self.theta_global[0]
    }

    pub fn delta_orbit(&self) -> Option<f64> {
        self.theta_orbit.as_ref().map(|v| v[v.len() - 1] - v[0])
    }
}

fn unwrap_step(acc: &mut Vec<f64>, raw: f64, prev_raw: f64, index: usize, what: &str) -> Result<()> {
    let step = wrap_angle(raw - prev_raw);
    if step.abs() > PI / 2.0 {
        return Err(Error::Sampling {
            index,
            reason: format!("{what} jumps by {step:.3} rad"),
        });
    }
    let last = *acc.last().unwrap();
    acc.push(last + step);
    Ok(())
}

/// Global phase and orbit angle along a two-level trajectory.
pub fn track_angles(traj: &Trajectory, frames: &BranchFrames) -> Result<AngleRecord> {
    if traj.dim() != 2 {
        return Err(Error::Dimension { expected: 2, got: traj.dim() });
    }
    if traj.len() != frames.len()
        || traj.times().iter().zip(frames.times()).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
    {
        return Err(Error::Contract("branch frames and trajectory sample different times".into()));
    }
    let n = traj.len();
    let mut global = Vec::with_capacity(n);
    let mut orbit = Vec::with_capacity(n);
    let mut has_orbit = true;
    let (mut prev_g, mut prev_o) = (0.0, 0.0);
    for k in 0..n {
        let a = traj.amplitudes(k);
        let red = reduce_amplitudes(a)?;
        let g = -a[0].arg();
        let nf = frames.normal_form(k);
        let (dq, dp) = nf.displacement(&red);
        has_orbit &= dq.hypot(dp) >= 1e-12;
        let o = if has_orbit { nf.angle(&red) } else { 0.0 };
        if k == 0 {
            global.push(g);
            orbit.push(o);
        } else {
            unwrap_step(&mut global, g, prev_g, k, "global phase")?;
            if has_orbit {
                unwrap_step(&mut orbit, o, prev_o, k, "orbit angle")?;
            }
        }
        prev_g = g;
        prev_o = o;
    }
    Ok(AngleRecord {
        times: traj.times().to_vec(),
        theta_global: global,
        theta_orbit: has_orbit.then_some(orbit),
    })
}

/// `M` states uniform in the orbit angle, standard section, zero global phase.
pub fn sample_initial_ensemble(orbit: &FrozenOrbit, m: usize) -> Result<Vec<QuantumState>> {
    if m == 0 {
        return Err(Error::Contract("ensemble size must be at least 1".into()));
    }
    (0..m).map(|k| orbit.state_at(TAU * k as f64 / m as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate_frozen, IntegratorConfig};
    use crate::model::ModelSpec;
    use crate::spectra::eigenstates_at;
    use approx::assert_abs_diff_eq;

    fn equator(c: f64) -> (ParameterPoint, [EigenstateBranch; 2]) {
        let r = ParameterPoint::new(1.0, 0.0, 0.0);
        (r, eigenstates_at(&r, c).unwrap())
    }

    #[test]
    fn normal_form_linear_frequency() {
        let (_, [lo, hi]) = equator(0.0);
        let nf = NormalForm::at(&lo.reduced(), &lo.point, 0.0).unwrap();
        assert_abs_diff_eq!(nf.omega, 1.0, epsilon = 1e-14);
        assert_eq!(nf.orientation, 1.0);
        let nf = NormalForm::at(&hi.reduced(), &hi.point, 0.0).unwrap();
        assert_eq!(nf.orientation, -1.0);
    }

    #[test]
    fn point_orbit() {
        let (_, [lo, _]) = equator(0.0);
        let orbit = orbit_with_action(&lo, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(orbit.period, TAU, epsilon = 1e-12);
        assert!(orbit.curve().iter().all(|s| *s == lo.reduced()));
        assert_eq!(action_of(&orbit.curve()).unwrap(), 0.0);
    }

    #[test]
    fn small_linear_orbit_has_rabi_period() {
        let (_, [lo, hi]) = equator(0.0);
        for b in [lo, hi] {
            let orbit = orbit_with_action(&b, 0.0, 1e-4).unwrap();
            assert!((orbit.period - TAU).abs() < 1e-3, "{}", orbit.period);
            assert_abs_diff_eq!(orbit.action, 1e-4, epsilon = 1e-12);
        }
    }

    #[test]
    fn action_round_trip() {
        let (_, [lo, hi]) = equator(0.05);
        for b in [lo, hi] {
            let orbit = orbit_with_action(&b, 0.05, 0.005).unwrap();
            assert_abs_diff_eq!(orbit.action, 0.005, epsilon = 1e-10);
            let area = action_of(&orbit.curve()).unwrap();
            assert_abs_diff_eq!(area, orbit.signed_action(), epsilon = 1e-10);
            let (again, period) = action_through(&orbit.curve()[37], &b, 0.05).unwrap();
            assert_abs_diff_eq!(again, 0.005, epsilon = 1e-10);
            assert_abs_diff_eq!(period, orbit.period, epsilon = 1e-9);
        }
    }

    /// `(1/2π)∮⟨ψ|i∂_θψ⟩dθ` over the lifted orbit, by central differences.
    #[test]
    fn action_matches_quantum_parametrisation() {
        let (_, [lo, _]) = equator(0.05);
        let orbit = orbit_with_action_sampled(&lo, 0.05, 0.005, 256).unwrap();
        let states: Vec<QuantumState> = orbit.curve().iter().map(|s| lift(s, 0.0).unwrap()).collect();
        let n = states.len() - 1;
        let h = TAU / n as f64;
        let mut total = 0.0;
        for k in 0..n {
            let next = &states[(k + 1) % n];
            let prev = &states[(k + n - 1) % n];
            let d: Vec<C64> = next.amplitudes().iter().zip(prev.amplitudes()).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let conn = crate::model::inner(states[k].amplitudes(), &d) * C64::new(0.0, 1.0);
            total += conn.re * h;
        }
        assert!((total / TAU - orbit.signed_action()).abs() < 1e-6);
    }

    #[test]
    fn circle_action() {
        let rho: f64 = 0.03;
        let n = 64;
        let curve: Vec<ReducedState> = (0..=n)
            .map(|k| {
                let s = TAU * k as f64 / n as f64;
                ReducedState::new(0.1 + 2.0 * rho * s.cos(), 0.4 + rho * s.sin())
            })
            .collect();
        assert_abs_diff_eq!(action_of(&curve).unwrap(), rho * rho / 2.0, epsilon = 1e-15);
        let open = &curve[..n - 3];
        assert!(matches!(action_of(open), Err(Error::Contract(_))));
    }

    #[test]
    fn basin_escape_is_reported() {
        let (_, [lo, _]) = equator(0.05);
        assert!(matches!(orbit_with_action(&lo, 0.05, 0.9), Err(Error::OrbitConstruction(_))));
    }

    #[test]
    fn frozen_eigenstate_angles() {
        let (r, [lo, _]) = equator(0.05);
        let cfg = IntegratorConfig::default();
        let traj = integrate_frozen(&lo.state(), &r, &ModelSpec::nonlinear(0.05), 50.0, &cfg).unwrap();
        let frames = BranchFrames::from_trajectory(&traj, 0.05, BranchLabel::Lower).unwrap();
        let rec = track_angles(&traj, &frames).unwrap();
        assert!(rec.theta_orbit.is_none());
        assert!((rec.delta_global() - lo.mu * 50.0).abs() < 1e-6 * 50.0);
    }

    #[test]
    fn frozen_orbit_winds_once_per_period() {
        let (r, [lo, hi]) = equator(0.0);
        for (b, label) in [(lo, BranchLabel::Lower), (hi, BranchLabel::Upper)] {
            let orbit = orbit_with_action(&b, 0.0, 0.002).unwrap();
            let psi = orbit.state_at(0.0).unwrap();
            let cfg = IntegratorConfig::default();
            let traj = integrate_frozen(&psi, &r, &ModelSpec::nonlinear(0.0), orbit.period, &cfg).unwrap();
            let frames = BranchFrames::from_trajectory(&traj, 0.0, label).unwrap();
            let rec = track_angles(&traj, &frames).unwrap();
            let d = rec.delta_orbit().unwrap();
            assert!((d - orbit.orientation * TAU).abs() < 1e-6, "{d}");
            // global phase advance agrees with the reduced integration
            assert!((rec.delta_global() - orbit.phase_advance).abs() < 1e-8);
        }
    }

    #[test]
    fn ensemble_is_uniform_in_time() {
        let (r, [lo, _]) = equator(0.0);
        let orbit = orbit_with_action(&lo, 0.0, 0.003).unwrap();
        let states = sample_initial_ensemble(&orbit, 4).unwrap();
        assert_eq!(states.len(), 4);
        let cfg = IntegratorConfig::default();
        let model = ModelSpec::nonlinear(0.0);
        for k in 0..4 {
            // a quarter period moves member k onto member k+1 up to a phase
            let traj = integrate_frozen(&states[k], &r, &model, orbit.period / 4.0, &cfg).unwrap();
            let next = &states[(k + 1) % 4];
            assert!(1.0 - traj.final_state().fidelity(next) < 1e-10);
        }
        for s in &states {
            let red = crate::model::reduce(s).unwrap();
            let (a, _) = action_through(&red, &lo, 0.0).unwrap();
            assert_abs_diff_eq!(a, 0.003, epsilon = 1e-10);
        }
        let single = sample_initial_ensemble(&orbit, 1).unwrap();
        assert!(single[0].max_abs_diff(&lift(&orbit.samples()[0].1, 0.0).unwrap()) < 1e-15);
    }
}
