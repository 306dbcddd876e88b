//! Phase functionals: total phase, the averaged geometric phase `γ` by
//! several routes, Berry phases and Hannay angles.
//!
//! Unwrapped values are reported in the standard gauge section, where the
//! connection of a two-level state is `i⟨ψ|dψ⟩ = dΘ − (1 − w)/2 dφ`. On a
//! fixed-`Z` circle this makes the eigenstate value `−π(1 − w)`, which
//! differs from the closed form `(1 − η)π` by a whole turn; comparisons
//! between routes are therefore made modulo `2π`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actionangle::{
    action_through, orbit_with_action, orbit_with_action_sampled, sample_initial_ensemble, track_angles,
    BranchFrames, FrozenOrbit, NormalForm,
};
use crate::dynamics::{integrate_sweep, par_try_map, IntegratorConfig, Trajectory};
use crate::error::{Error, Result};
use crate::model::{
    inner, lift_with, phase_distance, principal_value, reduce_amplitudes, two_level_matrix, wrap_angle,
    GaugeSection, ModelSpec, ParameterLoop, ParameterPoint, QuantumState,
};
use crate::spectra::{eigenstate, eigenstates_at, linear_eigensystem, BranchLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMethod {
    Dynamic,
    Static,
    LineIntegral,
    Flux,
    ClosedForm,
    WeightedSum,
}

/// Per-trajectory contributions of a dynamic run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberPhase {
    pub beta: f64,
    pub delta_global: f64,
    pub delta_orbit: Option<f64>,
    /// Action of the frozen orbit through the final state.
    pub final_action: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseResult {
    /// Principal value in `(−π, π]`.
    pub gamma: f64,
    pub winding: i64,
    /// `gamma + 2π·winding`.
    pub unwrapped: f64,
    pub beta_bar: Option<f64>,
    pub dynamical_term: Option<f64>,
    pub per_trajectory: Vec<MemberPhase>,
    pub method: PhaseMethod,
}

impl PhaseResult {
    fn from_value(value: f64, method: PhaseMethod) -> Self {
        let gamma = principal_value(value);
        Self {
            gamma,
            winding: ((value - gamma) / TAU).round() as i64,
            unwrapped: value,
            beta_bar: None,
            dynamical_term: None,
            per_trajectory: Vec::new(),
            method,
        }
    }

    /// Largest `|I_final − I|` over the ensemble.
    pub fn action_drift(&self, target: f64) -> Option<f64> {
        self.per_trajectory
            .iter()
            .map(|m| m.final_action.map(|a| (a - target).abs()))
            .try_fold(0.0, |acc: f64, d| d.map(|d| acc.max(d)))
    }

    /// `|Σ(I_final − I)| / M`.
    pub fn mean_action_drift(&self, target: f64) -> Option<f64> {
        let n = self.per_trajectory.len() as f64;
        let sum: Option<f64> = self.per_trajectory.iter().map(|m| m.final_action.map(|a| a - target)).sum();
        sum.map(|s| (s / n).abs())
    }
}

/// `|a − b|` modulo `2π`.
pub fn phase_difference(a: f64, b: f64) -> f64 {
    phase_distance(a, b)
}

/// `i∫⟨ψ|ψ̇⟩dt` accumulated from overlap arguments.
///
/// The per-step values `a = −arg⟨ψ_k|ψ_{k+1}⟩` carry an error odd in the
/// step, `O(Δt³) + O(Δt⁵)`. Runs of four equal steps are combined with the
/// double- and quadruple-step overlaps as `(64S₁ − 20S₂ + S₄)/45`; the
/// few leftover steps are corrected with the `Δt³` coefficient measured on a
/// neighbouring pair.
pub fn total_phase(traj: &Trajectory) -> Result<f64> {
    let n = traj.len();
    if n < 2 {
        return Ok(0.0);
    }
    let overlap = |i: usize, j: usize| -> (f64, f64) {
        let (a, b) = (traj.amplitudes(i), traj.amplitudes(j));
        let ov = inner(a, b);
        let na: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
        (ov.norm() / (na * nb).sqrt(), -ov.arg())
    };
    let mut steps = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let (mag, arg) = overlap(k, k + 1);
        if mag < 0.999 {
            return Err(Error::Sampling {
                index: k,
                reason: format!("consecutive overlap {mag:.5} below 0.999"),
            });
        }
        steps.push(arg);
    }
    let t = traj.times();
    let uniform = |k: usize, len: usize| {
        k + len < n && {
            let h = t[k + 1] - t[k];
            (k..k + len).all(|i| ((t[i + 1] - t[i]) - h).abs() <= 1e-9 * h.abs())
        }
    };
    let mut total = 0.0;
    let mut k = 0;
    while k < n - 1 {
        if uniform(k, 4) {
            let s1: f64 = steps[k..k + 4].iter().sum();
            let s2 = overlap(k, k + 2).1 + overlap(k + 2, k + 4).1;
            let s4 = overlap(k, k + 4).1;
            total += (64.0 * s1 - 20.0 * s2 + s4) / 45.0;
            k += 4;
        } else {
            // leftover step: remove the Δt³ error measured on a nearby equal pair
            let h = t[k + 1] - t[k];
            let pair = [k.checked_sub(2), Some(k), k.checked_sub(1)]
                .into_iter()
                .flatten()
                .find(|&j| uniform(j, 2));
            total += match pair {
                Some(j) => {
                    let hj = t[j + 1] - t[j];
                    let e = (overlap(j, j + 2).1 - steps[j] - steps[j + 1]) / (6.0 * hj.powi(3));
                    steps[k] - e * h.powi(3)
                }
                None => steps[k],
            };
            k += 1;
        }
    }
    Ok(total)
}

fn nonlinear_c(model: &ModelSpec) -> Result<f64> {
    match model {
        ModelSpec::NonlinearTwoLevel { c } => Ok(*c),
        ModelSpec::LinearNLevel(_) => Err(Error::UnsupportedRegime(
            "orbit ensembles need the two-level model; use the superposition route for N-level systems".into(),
        )),
    }
}

struct OrbitEnsemble {
    orbit: FrozenOrbit,
    members: Vec<MemberPhase>,
    duration: f64,
}

fn run_orbit_ensemble(
    lp: &ParameterLoop,
    c: f64,
    label: BranchLabel,
    target: f64,
    m: usize,
    cfg: &IntegratorConfig,
) -> Result<OrbitEnsemble> {
    let model = ModelSpec::nonlinear(c);
    let branch = eigenstate(&lp.point_at(0.0), c, label)?;
    let orbit = orbit_with_action(&branch, c, target)?;
    let m = if target == 0.0 { 1 } else { m };
    let states = sample_initial_ensemble(&orbit, m)?;

    let evaluate = |traj: &Trajectory, frames: &BranchFrames| -> Result<MemberPhase> {
        let beta = total_phase(traj)?;
        let rec = track_angles(traj, frames)?;
        let final_action = if target > 0.0 {
            let last = traj.len() - 1;
            let red = reduce_amplitudes(traj.amplitudes(last))?;
            Some(action_through(&red, frames.branch(last), c)?.0)
        } else {
            None
        };
        Ok(MemberPhase {
            beta,
            delta_global: rec.delta_global(),
            delta_orbit: rec.delta_orbit(),
            final_action,
        })
    };
    let wrap = |index: usize| move |e: Error| Error::Ensemble { index, source: Box::new(e) };

    let first = integrate_sweep(&states[0], lp, &model, cfg).map_err(wrap(0))?;
    let frames = BranchFrames::from_trajectory(&first, c, label)?;
    let mut members = vec![evaluate(&first, &frames).map_err(wrap(0))?];
    drop(first);
    let rest: Vec<Result<MemberPhase>> = states[1..]
        .par_iter()
        .map(|psi| {
            let traj = integrate_sweep(psi, lp, &model, cfg)?;
            evaluate(&traj, &frames)
        })
        .collect();
    for (i, r) in rest.into_iter().enumerate() {
        members.push(r.map_err(wrap(i + 1))?);
    }
    Ok(OrbitEnsemble {
        orbit,
        members,
        duration: lp.duration(),
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn mean_orbit_advance(members: &[MemberPhase]) -> Result<f64> {
    let d: Option<Vec<f64>> = members.iter().map(|m| m.delta_orbit).collect();
    d.map(|v| mean(v.into_iter()))
        .ok_or_else(|| Error::Contract("orbit angle undefined for a member on the fixed point".into()))
}

/// `γ = β̄ − (⟨ΔΘ⟩ + I·⟨Δθ_orbit⟩)` from an ensemble of `M` sweeps.
pub fn gamma_dynamic(
    lp: &ParameterLoop,
    model: &ModelSpec,
    label: BranchLabel,
    target: f64,
    m: usize,
    cfg: &IntegratorConfig,
) -> Result<PhaseResult> {
    let c = nonlinear_c(model)?;
    let run = run_orbit_ensemble(lp, c, label, target, m, cfg)?;
    let beta_bar = mean(run.members.iter().map(|m| m.beta));
    let mut dynamical = mean(run.members.iter().map(|m| m.delta_global));
    if target > 0.0 {
        dynamical += run.orbit.signed_action() * mean_orbit_advance(&run.members)?;
    }
    let mut out = PhaseResult::from_value(beta_bar - dynamical, PhaseMethod::Dynamic);
    out.beta_bar = Some(beta_bar);
    out.dynamical_term = Some(dynamical);
    out.per_trajectory = run.members;
    Ok(out)
}

/// Dynamic route for a linear system prepared in a superposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperpositionResult {
    pub phase: PhaseResult,
    /// Per-mode `⟨Δθ_n⟩ − ∫E_n dt` (absent for empty modes).
    pub mode_hannay: Vec<Option<f64>>,
}

fn linear_hamiltonian(model: &ModelSpec, r: &ParameterPoint) -> Result<nalgebra::DMatrix<C64>> {
    match model {
        ModelSpec::LinearNLevel(m) => Ok(m.hamiltonian_at(r)),
        ModelSpec::NonlinearTwoLevel { c } if *c == 0.0 => Ok(two_level_matrix(r)),
        ModelSpec::NonlinearTwoLevel { .. } => {
            Err(Error::UnsupportedRegime("superposition route requires a linear model".into()))
        }
    }
}

/// Sweeps `Σ √w_n e^{−iθ_n}|E_n⟩` with relative phases `θ_n = 2πkn/M`
/// and extracts `γ = β̄ − Σ w_n⟨Δθ_n⟩`, `θ_n = −arg⟨E_n|ψ⟩`.
pub fn gamma_dynamic_superposition(
    lp: &ParameterLoop,
    model: &ModelSpec,
    weights: &[f64],
    m: usize,
    cfg: &IntegratorConfig,
) -> Result<SuperpositionResult> {
    let n = model.dim();
    if weights.len() != n {
        return Err(Error::Dimension { expected: n, got: weights.len() });
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Contract("weights must be non-negative and sum to 1".into()));
    }
    if m == 0 {
        return Err(Error::Contract("ensemble size must be at least 1".into()));
    }
    let occupied: Vec<usize> = (0..n).filter(|&j| weights[j] > 1e-12).collect();
    let m = if occupied.len() == 1 { 1 } else { m };

    let eig0 = linear_eigensystem(&linear_hamiltonian(model, &lp.point_at(0.0))?)?;
    let states: Vec<QuantumState> = (0..m)
        .map(|k| {
            let mut amp = vec![C64::new(0.0, 0.0); n];
            for (j, v) in eig0.vectors.iter().enumerate() {
                let theta = TAU * (k * j) as f64 / m as f64;
                let a = C64::from_polar(weights[j].sqrt(), -theta);
                for (x, e) in amp.iter_mut().zip(v.amplitudes()) {
                    *x += a * e;
                }
            }
            QuantumState::normalized(amp)
        })
        .collect::<Result<_>>()?;

    let first = integrate_sweep(&states[0], lp, model, cfg)?;
    let frames: Vec<(Vec<f64>, Vec<QuantumState>)> = par_try_map(first.points(), |r| {
        let e = linear_eigensystem(&linear_hamiltonian(model, r)?)?;
        Ok((e.values, e.vectors))
    })?;
    let times = first.times().to_vec();

    let evaluate = |traj: &Trajectory| -> Result<(f64, Vec<f64>)> {
        let beta = total_phase(traj)?;
        let mut deltas = Vec::with_capacity(occupied.len());
        for &j in &occupied {
            let mut acc = 0.0;
            let mut prev = 0.0;
            for k in 0..traj.len() {
                let a = -inner(frames[k].1[j].amplitudes(), traj.amplitudes(k)).arg();
                if k > 0 {
                    let step = wrap_angle(a - prev);
                    if step.abs() > PI / 2.0 {
                        return Err(Error::Sampling {
                            index: k,
                            reason: format!("mode {j} angle jumps by {step:.3} rad"),
                        });
                    }
                    acc += step;
                }
                prev = a;
            }
            deltas.push(acc);
        }
        Ok((beta, deltas))
    };
    let mut runs = vec![evaluate(&first)?];
    drop(first);
    runs.extend(crate::dynamics::ordered_try_map(&states[1..], |psi| {
        evaluate(&integrate_sweep(psi, lp, model, cfg)?)
    })?);

    let beta_bar = mean(runs.iter().map(|r| r.0));
    let mut dynamical = 0.0;
    let mut mode_hannay = vec![None; n];
    for (slot, &j) in occupied.iter().enumerate() {
        let d = mean(runs.iter().map(|r| r.1[slot]));
        dynamical += weights[j] * d;
        let energy: f64 = times
            .windows(2)
            .enumerate()
            .map(|(k, w)| 0.5 * (w[1] - w[0]) * (frames[k].0[j] + frames[k + 1].0[j]))
            .sum();
        mode_hannay[j] = Some(d - energy);
    }
    let mut phase = PhaseResult::from_value(beta_bar - dynamical, PhaseMethod::Dynamic);
    phase.beta_bar = Some(beta_bar);
    phase.dynamical_term = Some(dynamical);
    phase.per_trajectory = runs
        .iter()
        .map(|(beta, d)| MemberPhase {
            beta: *beta,
            delta_global: d.iter().zip(&occupied).map(|(x, &j)| weights[j] * x).sum(),
            delta_orbit: None,
            final_action: None,
        })
        .collect();
    Ok(SuperpositionResult { phase, mode_hannay })
}

/// Resolution of the orbit-family grid used by [`gamma_static`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticGrid {
    pub theta_samples: usize,
    pub loop_samples: usize,
    pub section: GaugeSection,
}

impl Default for StaticGrid {
    fn default() -> Self {
        Self {
            theta_samples: 64,
            loop_samples: 256,
            section: GaugeSection::FirstReal,
        }
    }
}

/// Sixth-order central-difference weights for offsets 1, 2, 3.
const FD6: [f64; 3] = [45.0 / 60.0, -9.0 / 60.0, 1.0 / 60.0];

/// `∮dθ/2π ∮ ⟨ψ(I,θ;R)|i∂_R|ψ(I,θ;R)⟩` over the frozen-orbit family.
pub fn gamma_static(lp: &ParameterLoop, c: f64, label: BranchLabel, target: f64, grid: &StaticGrid) -> Result<PhaseResult> {
    let (nt, nr) = (grid.theta_samples, grid.loop_samples);
    if nt < 1 || nr < 7 {
        return Err(Error::Contract("static grid needs ≥ 1 angle and ≥ 7 loop samples".into()));
    }
    let nt_orbit = nt.max(4);
    let index: Vec<usize> = (0..=nr).collect();
    let rows: Vec<Vec<QuantumState>> = par_try_map(&index, |&k| {
        let s = k as f64 / nr as f64;
        let branch = eigenstate(&lp.point_at(s), c, label)
            .map_err(|e| Error::BranchContinuation { s, reason: e.to_string() })?;
        let orbit = orbit_with_action_sampled(&branch, c, target, nt_orbit)?;
        (0..nt)
            .map(|j| {
                let red = if nt == nt_orbit { orbit.samples()[j].1 } else { orbit.reduced_at(TAU * j as f64 / nt as f64)? };
                lift_with(&red, 0.0, grid.section)
            })
            .collect()
    })?;
    for k in 1..=nr {
        let ov = rows[k - 1][0].fidelity(&rows[k][0]);
        if ov < 0.81 {
            return Err(Error::BranchContinuation {
                s: k as f64 / nr as f64,
                reason: format!("orbit family jumps (fidelity {ov:.3})"),
            });
        }
    }
    let mismatch = (0..nt).map(|j| rows[nr][j].max_abs_diff(&rows[0][j])).fold(0.0, f64::max);
    if mismatch > 1e-6 {
        return Err(Error::Gauge { mismatch });
    }

    let h = 1.0 / nr as f64;
    let at = |k: isize, j: usize| &rows[k.rem_euclid(nr as isize) as usize][j];
    let mut total = 0.0;
    for j in 0..nt {
        let mut line = 0.0;
        for k in 0..nr as isize {
            let d: Vec<C64> = (0..2)
                .map(|i| {
                    FD6.iter()
                        .enumerate()
                        .map(|(o, w)| at(k + o as isize + 1, j).amplitudes()[i] * w - at(k - o as isize - 1, j).amplitudes()[i] * w)
                        .sum::<C64>()
                        / h
                })
                .collect();
            line += -inner(at(k, j).amplitudes(), &d).im * h;
        }
        total += line;
    }
    Ok(PhaseResult::from_value(total / nt as f64, PhaseMethod::Static))
}

/// Wilson-loop Berry phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BerryPhase {
    /// Principal value in `(−π, π]`.
    pub principal: f64,
    pub winding: i64,
    /// Sum of per-step phases: the line integral in the family's own gauge.
    pub total: f64,
}

/// `−arg Π⟨E_k|E_{k+1}⟩` around a closed family (closing state not repeated).
///
/// For even `n ≥ 8` the result is Richardson-extrapolated against the
/// every-other-sample loop.
pub fn berry_line_integral(states: &[QuantumState]) -> Result<BerryPhase> {
    let n = states.len();
    if n < 3 {
        return Err(Error::Contract("a loop needs at least 3 states".into()));
    }
    let step = |i: usize, j: usize| -> (f64, f64) {
        let ov = states[i].inner(&states[j]);
        let norm = (states[i].norm_sqr() * states[j].norm_sqr()).sqrt();
        (ov.norm() / norm, -ov.arg())
    };
    let mut total = 0.0;
    for k in 0..n {
        let (mag, arg) = step(k, (k + 1) % n);
        if mag < 0.9 {
            return Err(Error::Discretization { index: k, overlap: mag });
        }
        total += arg;
    }
    if n % 2 == 0 && n >= 8 {
        let half: Option<f64> = (0..n / 2)
            .map(|j| {
                let (mag, arg) = step(2 * j, (2 * j + 2) % n);
                (mag >= 0.9).then_some(arg)
            })
            .sum();
        if let Some(half) = half {
            let w = principal_value(total);
            let w_half = w + wrap_angle(half - w);
            total += (w - w_half) / 3.0;
        }
    }
    let principal = principal_value(total);
    Ok(BerryPhase {
        principal,
        winding: ((total - principal) / TAU).round() as i64,
        total,
    })
}

/// `Σ w_n γ_n`.
pub fn gamma_weighted_sum(weights: &[f64], phases: &[f64]) -> Result<f64> {
    if weights.len() != phases.len() {
        return Err(Error::Dimension { expected: weights.len(), got: phases.len() });
    }
    if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Contract("weights must sum to 1".into()));
    }
    Ok(weights.iter().zip(phases).map(|(w, g)| w * g).sum())
}

/// `(1 − η)π`.
pub fn gamma_circle_closed_form(eta: f64) -> f64 {
    (1.0 - eta) * PI
}

/// Cap quadrature resolution for [`gamma_flux`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapResolution {
    /// Midpoint nodes from the apex to the rim (even; the rule is
    /// Richardson-extrapolated against half as many).
    pub radial: usize,
    /// Trapezoid nodes around the loop.
    pub angular: usize,
}

impl Default for CapResolution {
    fn default() -> Self {
        Self { radial: 400, angular: 64 }
    }
}

/// `½ ∫ η³(R + cηẑ)·dS / ((cη + Z)²(cη³ + Z))` over the cap bounded by `lp`.
///
/// The cap is the cone from an apex (the north pole for fixed-`Z` circles,
/// otherwise the normalized loop centroid) projected onto the unit sphere.
/// The integrand is evaluated as `r³/((1 + cr)²(1 + cr³Z²))`, `r = η/Z`,
/// which stays finite through the equator.
pub fn gamma_flux(lp: &ParameterLoop, c: f64, label: BranchLabel, res: &CapResolution) -> Result<f64> {
    let (nu, ns) = (res.radial, res.angular);
    if nu < 2 || nu % 2 != 0 || ns < 3 {
        return Err(Error::Contract("cap resolution needs an even radial count >= 2 and >= 3 angular nodes".into()));
    }
    if lp.length() == 0.0 {
        return Ok(0.0);
    }
    for k in 0..ns {
        let p = lp.point_at(k as f64 / ns as f64);
        if (p.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Contract("flux route needs a loop on the unit sphere".into()));
        }
    }
    let apex = match lp.circle_z() {
        Some(_) => ParameterPoint::new(0.0, 0.0, 1.0),
        None => {
            let sum = (0..ns).fold(ParameterPoint::new(0.0, 0.0, 0.0), |acc, k| acc + lp.point_at(k as f64 / ns as f64));
            if sum.norm() < 1e-9 {
                return Err(Error::Contract("loop centroid at the origin; cap undefined".into()));
            }
            sum.scale(1.0 / sum.norm())
        }
    };
    let midpoint = |nu: usize| -> Result<f64> {
        let rows: Vec<usize> = (0..nu).collect();
        let partial = par_try_map(&rows, |&i| {
            let u = (i as f64 + 0.5) / nu as f64;
            let mut acc = 0.0;
            for k in 0..ns {
                let s = k as f64 / ns as f64;
                let p = lp.point_at(s);
                let v = apex.scale(1.0 - u) + p.scale(u);
                let len = v.norm();
                let x = v.scale(1.0 / len);
                let project = |d: ParameterPoint| (d - x.scale(x.dot(&d))).scale(1.0 / len);
                let xu = project(p - apex);
                let xs = project(lp.tangent_at(s).scale(u));
                let ds = xu.cross(&xs);
                acc += flux_density(&x, c, label)? * 0.5 * (x.dot(&ds) + c * flux_eta(&x, c, label)? * ds.z);
            }
            Ok(acc)
        })?;
        Ok(partial.iter().sum::<f64>() / (nu * ns) as f64)
    };
    Ok((4.0 * midpoint(nu)? - midpoint(nu / 2)?) / 3.0)
}

fn flux_eta(x: &ParameterPoint, c: f64, label: BranchLabel) -> Result<f64> {
    Ok(eigenstate(x, c, label)?.eta)
}

/// `η³/((cη + Z)²(cη³ + Z))` evaluated through `r = η/Z`.
fn flux_density(x: &ParameterPoint, c: f64, label: BranchLabel) -> Result<f64> {
    let b = eigenstate(x, c, label)?;
    let z = x.z;
    let r = if z.abs() > 1e-6 {
        b.eta / z
    } else {
        // η ≈ −Z/(c + σρ) near the equator
        let sigma = (b.phi - x.azimuth()).cos().signum();
        -1.0 / (c + sigma * x.rho())
    };
    let d1 = 1.0 + c * r;
    let d2 = 1.0 + c * r * r * r * z * z;
    let f = r * r * r / (d1 * d1 * d2);
    if !f.is_finite() || d1.abs() < 1e-10 || d2.abs() < 1e-10 {
        return Err(Error::FluxSingularity { x: x.x, y: x.y, z: x.z });
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaConvention {
    /// `η = −w`.
    MinusW,
    /// `η = +w`.
    PlusW,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignProbe {
    pub convention: EtaConvention,
    pub wilson: f64,
    pub closed_form: f64,
    pub mismatch: f64,
}

/// Fixes the identification of `η` with the population imbalance by
/// comparing `(1 − η)π` with the Wilson loop of the linear lower branch on
/// the circle at height `z`.
pub fn probe_sign_convention(z: f64, samples: usize) -> Result<SignProbe> {
    let lp = ParameterLoop::circle_fixed_z(z, 1.0)?;
    let fam = crate::spectra::continue_branch(&lp, 0.0, BranchLabel::Lower, samples)?;
    let wilson = berry_line_integral(&fam.states())?.principal;
    let w = fam.at(0).w;
    let candidates = [(EtaConvention::MinusW, -w), (EtaConvention::PlusW, w)];
    let (convention, eta) = candidates
        .into_iter()
        .min_by(|a, b| {
            phase_distance(gamma_circle_closed_form(a.1), wilson)
                .partial_cmp(&phase_distance(gamma_circle_closed_form(b.1), wilson))
                .unwrap()
        })
        .unwrap();
    let closed_form = gamma_circle_closed_form(eta);
    let mismatch = phase_distance(closed_form, wilson);
    if mismatch > 1e-6 {
        return Err(Error::Contract(format!(
            "no η convention reproduces the linear Berry phase (best mismatch {mismatch:e})"
        )));
    }
    Ok(SignProbe { convention, wilson, closed_form, mismatch })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HannayMethod {
    FiniteDifference,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HannayResult {
    /// Hannay angle of the orbit angle.
    pub alpha: f64,
    /// Hannay angle of the global-phase angle (direct method only).
    pub alpha_global: Option<f64>,
    pub d_gamma_d_i: Option<f64>,
    pub method: HannayMethod,
}

/// Default finite-difference step in the action.
pub fn default_delta_i(i0: f64) -> f64 {
    0.002f64.max(0.4 * i0)
}

/// `α = −∂γ/∂J` by finite differences of `gamma(I)`, `J = orientation·I`.
pub fn hannay_from_fn<F>(gamma: F, i0: f64, delta: f64, orientation: f64) -> Result<HannayResult>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(i0 >= 0.0) || !(delta > 0.0) {
        return Err(Error::Contract("need I0 ≥ 0 and ΔI > 0".into()));
    }
    let slope = if i0 >= delta {
        (gamma(i0 + delta)? - gamma(i0 - delta)?) / (2.0 * delta)
    } else {
        (gamma(i0 + delta)? - gamma(i0)?) / delta
    };
    let d = orientation * slope;
    Ok(HannayResult {
        alpha: -d,
        alpha_global: None,
        d_gamma_d_i: Some(d),
        method: HannayMethod::FiniteDifference,
    })
}

/// `α = −∂γ/∂I` with `γ` from the static route.
pub fn hannay_from_gamma(
    lp: &ParameterLoop,
    c: f64,
    label: BranchLabel,
    i0: f64,
    delta: f64,
    grid: &StaticGrid,
) -> Result<HannayResult> {
    let b = eigenstate(&lp.point_at(0.0), c, label)?;
    let orientation = NormalForm::at(&b.reduced(), &b.point, c)?.orientation;
    hannay_from_fn(|i| Ok(gamma_static(lp, c, label, i, grid)?.unwrapped), i0, delta, orientation)
}

/// `α = ⟨Δθ⟩ − ∫ω(R(t), I)dt` from an ensemble of sweeps, for both angles.
pub fn hannay_direct(
    lp: &ParameterLoop,
    model: &ModelSpec,
    label: BranchLabel,
    target: f64,
    m: usize,
    cfg: &IntegratorConfig,
    frequency_samples: usize,
) -> Result<HannayResult> {
    let c = nonlinear_c(model)?;
    if !(target > 0.0) {
        return Err(Error::Contract("the orbit angle needs a positive action".into()));
    }
    if frequency_samples == 0 {
        return Err(Error::Contract("need at least one frequency sample".into()));
    }
    let run = run_orbit_ensemble(lp, c, label, target, m, cfg)?;
    let index: Vec<usize> = (0..frequency_samples).collect();
    let freqs: Vec<(f64, f64)> = par_try_map(&index, |&k| {
        let b = eigenstate(&lp.point_at(k as f64 / frequency_samples as f64), c, label)?;
        let o = orbit_with_action(&b, c, target)?;
        Ok((o.global_frequency(), o.orientation * o.orbit_frequency()))
    })?;
    let w1 = mean(freqs.iter().map(|f| f.0)) * run.duration;
    let w2 = mean(freqs.iter().map(|f| f.1)) * run.duration;
    let alpha = mean_orbit_advance(&run.members)? - w2;
    let alpha_global = mean(run.members.iter().map(|m| m.delta_global)) - w1;
    Ok(HannayResult {
        alpha,
        alpha_global: Some(alpha_global),
        d_gamma_d_i: None,
        method: HannayMethod::Direct,
    })
}

/// Closed-form value for the branch at the start of a fixed-`Z` circle.
pub fn closed_form_for_circle(z: f64, c: f64, label: BranchLabel) -> Result<PhaseResult> {
    let r = ParameterPoint::new((1.0 - z * z).max(0.0).sqrt(), 0.0, z);
    let [lo, hi] = eigenstates_at(&r, c)?;
    let eta = if label == BranchLabel::Lower { lo.eta } else { hi.eta };
    Ok(PhaseResult::from_value(gamma_circle_closed_form(eta), PhaseMethod::ClosedForm))
}
