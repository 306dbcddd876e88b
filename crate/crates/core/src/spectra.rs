//! Eigenstates of the nonlinear two-level model and of linear Hamiltonians.
//!
//! Nonlinear eigenstates are the fixed points of the reduced dynamics. With
//! `φ` aligned (`σ = +1`) or anti-aligned (`σ = −1`) with `arg(X + iY)`,
//! the condition `∂𝓗_red/∂w = 0` reads `(Z − cw)√(1 − w²) = σρw`,
//! `ρ = √(X² + Y²)`. Squaring and substituting `w = −η` gives
//!
//! ```text
//! c²η⁴ + 2cZη³ + (Z² + ρ² − c²)η² − 2cZη − Z² = 0,
//! ```
//!
//! which on the unit sphere is `c²η⁴ + 2cZη³ + (1 − c²)η² − 2cZη − Z² = 0`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    lift, reduced_gradient, reduced_hamiltonian, reduced_hessian, wrap_angle, ParameterLoop,
    ParameterPoint, QuantumState, ReducedState,
};

/// A real root of the eigenstate quartic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuarticRoot {
    pub eta: f64,
    pub multiplicity: usize,
}

/// Coefficients of the eigenstate quartic, highest degree first.
pub fn quartic_coefficients(c: f64, z: f64, rho_sq: f64) -> [f64; 5] {
    [c * c, 2.0 * c * z, z * z + rho_sq - c * c, -2.0 * c * z, -z * z]
}

pub fn quartic_residual(coeffs: &[f64; 5], eta: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &a| acc * eta + a)
}

fn quartic_derivative(coeffs: &[f64; 5], eta: f64) -> f64 {
    let d = [4.0 * coeffs[0], 3.0 * coeffs[1], 2.0 * coeffs[2], coeffs[3]];
    d.iter().fold(0.0, |acc, &a| acc * eta + a)
}

/// Real roots of `c²η⁴ + 2cZη³ + (1 − c²)η² − 2cZη − Z² = 0`, ascending.
pub fn quartic_real_roots(c: f64, z: f64) -> Vec<QuarticRoot> {
    real_roots(c, z, (1.0 - z * z).max(0.0))
}

/// Real roots for an arbitrary transverse magnitude `ρ² = X² + Y²`.
pub fn real_roots(c: f64, z: f64, rho_sq: f64) -> Vec<QuarticRoot> {
    let coeffs = quartic_coefficients(c, z, rho_sq);
    if c == 0.0 {
        // (Z² + ρ²)η² = Z²
        let norm = (z * z + rho_sq).sqrt();
        if z == 0.0 || norm == 0.0 {
            return vec![QuarticRoot { eta: 0.0, multiplicity: 2 }];
        }
        let r = z.abs() / norm;
        return vec![
            QuarticRoot { eta: -r, multiplicity: 1 },
            QuarticRoot { eta: r, multiplicity: 1 },
        ];
    }
    if z == 0.0 {
        // η²(c²η² + ρ² − c²) = 0
        let mut out = vec![QuarticRoot { eta: 0.0, multiplicity: 2 }];
        let q = (c * c - rho_sq) / (c * c);
        if q > 0.0 {
            let r = q.sqrt();
            out.insert(0, QuarticRoot { eta: -r, multiplicity: 1 });
            out.push(QuarticRoot { eta: r, multiplicity: 1 });
        } else if q == 0.0 {
            out[0].multiplicity = 4;
        }
        return out;
    }

    let lead = coeffs[0];
    let a = [coeffs[1] / lead, coeffs[2] / lead, coeffs[3] / lead, coeffs[4] / lead];
    #[rustfmt::skip]
    let companion = Matrix4::new(
        -a[0], -a[1], -a[2], -a[3],
        1.0,   0.0,   0.0,   0.0,
        0.0,   1.0,   0.0,   0.0,
        0.0,   0.0,   1.0,   0.0,
    );
    let eig = companion.complex_eigenvalues();

    let mut candidates: Vec<f64> = eig
        .iter()
        .filter(|l| l.im.abs() < 1e-6 * (1.0 + l.re.abs()))
        .map(|l| polish(&coeffs, l.re))
        // for ρ > 0 every genuine root has |w| < 1
        .filter(|&eta| rho_sq == 0.0 || eta.abs() <= 1.0 + 1e-9)
        .filter(|&eta| {
            let scale = coeffs.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
            quartic_residual(&coeffs, eta).abs() < 1e-10 * scale.max(1.0)
        })
        .collect();
    // Pairs with tiny imaginary parts straddle a (near-)double real root.
    let strict: usize = eig.iter().filter(|l| l.im.abs() < 1e-10 * (1.0 + l.re.abs())).count();
    candidates.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let mut roots: Vec<QuarticRoot> = Vec::new();
    for eta in candidates {
        match roots.last_mut() {
            Some(last) if (eta - last.eta).abs() < 1e-9 * (1.0 + eta.abs()) => last.multiplicity += 1,
            _ => roots.push(QuarticRoot { eta, multiplicity: 1 }),
        }
    }
    // Two Newton runs that land on the same simple root are one root.
    for r in roots.iter_mut() {
        if r.multiplicity > 1 && quartic_derivative(&coeffs, r.eta).abs() > 1e-6 && strict >= r.multiplicity {
            r.multiplicity = 1;
        }
    }
    roots
}

fn polish(coeffs: &[f64; 5], mut eta: f64) -> f64 {
    for _ in 0..60 {
        let p = quartic_residual(coeffs, eta);
        let dp = quartic_derivative(coeffs, eta);
        if dp == 0.0 {
            break;
        }
        let step = p / dp;
        eta -= step;
        if step.abs() <= 1e-16 * (1.0 + eta.abs()) {
            break;
        }
    }
    eta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchLabel {
    Lower,
    Upper,
}

impl std::str::FromStr for BranchLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(BranchLabel::Lower),
            "upper" => Ok(BranchLabel::Upper),
            other => Err(Error::Contract(format!("unknown branch label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Elliptic,
    Hyperbolic,
}

/// A stationary point of the reduced dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub red: ReducedState,
    pub stability: Stability,
    pub energy: f64,
}

fn classify(red: &ReducedState, r: &ParameterPoint, c: f64) -> Stability {
    let h = reduced_hessian(red, r, c);
    if h[0][0] * h[1][1] - h[0][1] * h[1][0] > 0.0 {
        Stability::Elliptic
    } else {
        Stability::Hyperbolic
    }
}

/// A nonlinear eigenstate at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenstateBranch {
    pub eta: f64,
    pub w: f64,
    pub phi: f64,
    /// Chemical potential, the eigenvalue of `H(ψ; R)`.
    pub mu: f64,
    /// Classical energy `𝓗`.
    pub energy: f64,
    pub label: BranchLabel,
    pub stability: Stability,
    pub point: ParameterPoint,
}

impl EigenstateBranch {
    pub fn reduced(&self) -> ReducedState {
        ReducedState::new(self.w, self.phi)
    }

    /// The eigenstate in the standard gauge section.
    pub fn state(&self) -> QuantumState {
        lift(&self.reduced(), 0.0).expect("|w| < 1 on eigenstate branches")
    }

    pub fn fixed_point(&self) -> FixedPoint {
        FixedPoint {
            red: self.reduced(),
            stability: self.stability,
            energy: self.energy,
        }
    }
}

/// The two eigenstates at `R`, ordered lower then upper in `𝓗`.
pub fn eigenstates_at(r: &ParameterPoint, c: f64) -> Result<[EigenstateBranch; 2]> {
    let rho = r.rho();
    if rho < 1e-12 {
        return Err(Error::PoleDegeneracy);
    }
    let roots = real_roots(c, r.z, rho * rho);
    let count: usize = roots.iter().map(|q| q.multiplicity).sum();
    if count != 2 {
        return Err(Error::UnsupportedRegime(format!(
            "{count} real roots of the eigenstate quartic at Z = {} (c = {c})",
            r.z
        )));
    }
    let azimuth = r.azimuth();
    let orient = |sigma: f64| if sigma > 0.0 { azimuth } else { azimuth + PI };
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(2);
    for root in &roots {
        if root.multiplicity == 2 {
            // w ≈ Z/(c + σρ) for both orientations
            for sigma in [1.0, -1.0] {
                points.push((r.z / (c + sigma * rho), orient(sigma)));
            }
        } else {
            let w = -root.eta;
            points.push((w, orient(((r.z - c * w) * w).signum())));
        }
    }
    let mut branches: Vec<EigenstateBranch> = points
        .into_iter()
        .map(|(w, phi)| {
            let red = ReducedState::new(w, wrap_angle(phi));
            let energy = reduced_hamiltonian(&red, r, c);
            EigenstateBranch {
                eta: -w,
                w,
                phi: red.phi,
                mu: energy + 0.25 * c * (1.0 - w * w),
                energy,
                label: BranchLabel::Lower,
                stability: classify(&red, r, c),
                point: *r,
            }
        })
        .collect();
    branches.sort_by(|a, b| a.energy.partial_cmp(&b.energy).unwrap());
    branches[1].label = BranchLabel::Upper;
    Ok([branches[0], branches[1]])
}

pub fn eigenstate(r: &ParameterPoint, c: f64, label: BranchLabel) -> Result<EigenstateBranch> {
    let [lo, hi] = eigenstates_at(r, c)?;
    Ok(match label {
        BranchLabel::Lower => lo,
        BranchLabel::Upper => hi,
    })
}

/// Fixed points by 2-D Newton on `∇𝓗_red`, started from the aligned and
/// anti-aligned relative phases. Independent of the quartic.
pub fn fixed_points_newton(r: &ParameterPoint, c: f64) -> Result<Vec<FixedPoint>> {
    let b = r.norm();
    if r.rho() < 1e-12 {
        return Err(Error::PoleDegeneracy);
    }
    let az = r.azimuth();
    [(r.z / b, az), (-r.z / b, az + PI)]
        .into_iter()
        .map(|(w0, phi0)| {
            let mut red = ReducedState::new(w0.clamp(-0.999, 0.999), phi0);
            for _ in 0..100 {
                let (gw, gp) = reduced_gradient(&red, r, c);
                let h = reduced_hessian(&red, r, c);
                let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
                if det == 0.0 {
                    break;
                }
                let dw = (h[1][1] * gw - h[0][1] * gp) / det;
                let dp = (-h[1][0] * gw + h[0][0] * gp) / det;
                let mut wn = red.w - dw;
                if wn.abs() >= 1.0 {
                    wn = 0.5 * (red.w + wn.signum() * 0.999_999);
                }
                red = ReducedState::new(wn, red.phi - dp);
                if dw.abs() < 1e-15 && dp.abs() < 1e-15 {
                    break;
                }
            }
            let (gw, gp) = reduced_gradient(&red, r, c);
            if gw.hypot(gp) > 1e-10 {
                return Err(Error::Contract(format!(
                    "Newton fixed-point search did not converge (|∇𝓗| = {:e})",
                    gw.hypot(gp)
                )));
            }
            Ok(FixedPoint {
                red,
                stability: classify(&red, r, c),
                energy: reduced_hamiltonian(&red, r, c),
            })
        })
        .collect()
}

/// A branch followed around a loop at `s_k = k/n`, `k = 0..=n`.
#[derive(Debug, Clone)]
pub struct BranchFamily {
    pub s: Vec<f64>,
    pub branches: Vec<EigenstateBranch>,
}

impl BranchFamily {
    /// Section states at `s_k`, `k < n` (the closing point is dropped).
    pub fn states(&self) -> Vec<QuantumState> {
        self.branches[..self.branches.len() - 1]
            .iter()
            .map(|b| b.state())
            .collect()
    }

    pub fn at(&self, k: usize) -> &EigenstateBranch {
        &self.branches[k]
    }
}

/// Follows the `label` branch around `lp` on `samples` uniform steps.
pub fn continue_branch(lp: &ParameterLoop, c: f64, label: BranchLabel, samples: usize) -> Result<BranchFamily> {
    if samples == 0 {
        return Err(Error::Contract("continuation needs at least one step".into()));
    }
    let s: Vec<f64> = (0..=samples).map(|k| k as f64 / samples as f64).collect();
    let mut branches = Vec::with_capacity(samples + 1);
    for &sk in &s {
        let b = eigenstate(&lp.point_at(sk), c, label).map_err(|e| Error::BranchContinuation {
            s: sk,
            reason: e.to_string(),
        })?;
        if let Some(prev) = branches.last() {
            let prev: &EigenstateBranch = prev;
            let ov = prev.state().inner(&b.state()).norm();
            if ov <= 0.99 {
                return Err(Error::BranchContinuation {
                    s: sk,
                    reason: format!("consecutive overlap {ov:.4} (branch swap or coarse sampling)"),
                });
            }
        }
        branches.push(b);
    }
    let first = branches[0].state();
    let last = branches[samples].state();
    if 1.0 - first.fidelity(&last) > 1e-9 {
        return Err(Error::BranchContinuation {
            s: 1.0,
            reason: "family does not close".into(),
        });
    }
    Ok(BranchFamily { s, branches })
}

/// Spectral decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct LinearEigensystem {
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthonormal, first non-negligible component real and positive.
    pub vectors: Vec<QuantumState>,
}

pub fn linear_eigensystem(h: &DMatrix<C64>) -> Result<LinearEigensystem> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::Dimension { expected: n, got: h.ncols() });
    }
    let asym = (h - h.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if asym > 1e-12 * h.norm().max(1.0) {
        return Err(Error::Contract(format!("matrix not Hermitian (|H − H†| = {asym:e})")));
    }
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for k in order {
        values.push(eig.eigenvalues[k]);
        let col: Vec<C64> = eig.eigenvectors.column(k).iter().copied().collect();
        vectors.push(QuantumState::new(fix_gauge(col))?);
    }
    Ok(LinearEigensystem { values, vectors })
}

pub(crate) fn fix_gauge(mut v: Vec<C64>) -> Vec<C64> {
    if let Some(pivot) = v.iter().find(|z| z.norm() > 1e-8).copied() {
        let u = pivot.conj() / pivot.norm();
        v.iter_mut().for_each(|z| *z *= u);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{two_level_matrix, ModelSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn roots_of(c: f64, z: f64) -> Vec<(f64, usize)> {
        quartic_real_roots(c, z).iter().map(|r| (r.eta, r.multiplicity)).collect()
    }

    #[test]
    fn quartic_degenerate_linear_case() {
        assert_eq!(roots_of(0.0, 0.5), vec![(-0.5, 1), (0.5, 1)]);
        assert_eq!(roots_of(0.0, 0.0), vec![(0.0, 2)]);
    }

    #[test]
    fn quartic_equator_double_root() {
        assert_eq!(roots_of(0.05, 0.0), vec![(0.0, 2)]);
        // beyond |c| = 1 four real roots appear
        let strong: usize = quartic_real_roots(1.5, 0.0).iter().map(|r| r.multiplicity).sum();
        assert_eq!(strong, 4);
    }

    /// Real roots through an independent 4x4 complex eigen solve of the
    /// companion matrix (nalgebra's Schur on the complexified matrix).
    fn companion_oracle(c: f64, z: f64) -> Vec<f64> {
        let p = quartic_coefficients(c, z, 1.0 - z * z);
        let a: Vec<C64> = p[1..].iter().map(|v| C64::new(v / p[0], 0.0)).collect();
        let mut m = DMatrix::<C64>::zeros(4, 4);
        for j in 0..4 {
            m[(0, j)] = -a[j];
        }
        for i in 1..4 {
            m[(i, i - 1)] = C64::new(1.0, 0.0);
        }
        let ev = m.eigenvalues().unwrap();
        let mut out: Vec<f64> = ev.iter().filter(|l| l.im.abs() < 1e-8).map(|l| l.re).collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }

    #[test]
    fn quartic_generic_two_roots() {
        let roots = quartic_real_roots(0.05, 0.5);
        assert_eq!(roots.len(), 2);
        let oracle = companion_oracle(0.05, 0.5);
        assert_eq!(oracle.len(), 2);
        let coeffs = quartic_coefficients(0.05, 0.5, 0.75);
        for (r, o) in roots.iter().zip(&oracle) {
            assert_eq!(r.multiplicity, 1);
            assert!((r.eta - o).abs() < 1e-9);
            assert!(quartic_residual(&coeffs, r.eta).abs() < 1e-10);
        }
        // regression fixtures
        assert_abs_diff_eq!(roots[0].eta, -0.481_612_156_203_957_8, epsilon = 1e-12);
        assert_abs_diff_eq!(roots[1].eta, 0.519_088_675_096_423_8, epsilon = 1e-12);
    }

    #[test]
    fn linear_lower_eigenstates() {
        let [lo, _] = eigenstates_at(&ParameterPoint::new(0.6, 0.8, 0.0), 0.0).unwrap();
        assert_abs_diff_eq!(lo.w, 0.0, epsilon = 1e-15);
        assert!(crate::model::phase_distance(lo.phi, 0.8f64.atan2(0.6) + PI) < 1e-14);
        assert_abs_diff_eq!(lo.energy, -0.5, epsilon = 1e-14);

        let z: f64 = 0.5;
        let r = ParameterPoint::new((1.0 - z * z).sqrt(), 0.0, z);
        let [lo, hi] = eigenstates_at(&r, 0.0).unwrap();
        assert_abs_diff_eq!(lo.w, -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(hi.w, 0.5, epsilon = 1e-14);
        assert_eq!(lo.stability, Stability::Elliptic);
        assert_eq!(hi.stability, Stability::Elliptic);
    }

    /// Self-consistent iteration of `H(ψ)ψ = μψ`: repeatedly take the
    /// matching eigenvector of the linearised `H(ψ)` with damping.
    fn self_consistent(r: &ParameterPoint, c: f64, label: BranchLabel) -> QuantumState {
        let model = ModelSpec::nonlinear(c);
        let idx = if label == BranchLabel::Lower { 0 } else { 1 };
        let mut psi = linear_eigensystem(&two_level_matrix(r)).unwrap().vectors[idx].clone();
        for _ in 0..500 {
            let h = model.effective_hamiltonian(&psi, r);
            let next = linear_eigensystem(&h).unwrap().vectors[idx].clone();
            let mixed: Vec<C64> = psi
                .amplitudes()
                .iter()
                .zip(next.amplitudes())
                .map(|(a, b)| 0.5 * a + 0.5 * b)
                .collect();
            psi = QuantumState::normalized(fix_gauge(mixed)).unwrap();
        }
        psi
    }

    #[test]
    fn nonlinear_branches_match_self_consistent_iteration() {
        let z: f64 = 0.5;
        let r = ParameterPoint::new((1.0 - z * z).sqrt() * 0.6, (1.0 - z * z).sqrt() * 0.8, z);
        let model = ModelSpec::nonlinear(0.05);
        for (b, label) in eigenstates_at(&r, 0.05).unwrap().iter().zip([BranchLabel::Lower, BranchLabel::Upper]) {
            let oracle = self_consistent(&r, 0.05, label);
            assert!(b.state().max_abs_diff(&oracle) < 1e-9, "{label:?}");
            // H(ψ)ψ = μψ
            let psi = b.state();
            let h = model.effective_hamiltonian(&psi, &r);
            let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
            let res = (&h * &v - v.scale(b.mu)).norm();
            assert!(res < 1e-9, "residual {res}");
        }
    }

    #[test]
    fn quartic_route_matches_newton_oracle() {
        for &(c, z) in &[(0.05f64, 0.5f64), (0.05, -0.8), (0.3, 0.1), (0.05, 0.0), (0.8, -0.3)] {
            let r = ParameterPoint::new((1.0 - z * z).sqrt(), 0.0, z);
            let quartic = eigenstates_at(&r, c).unwrap();
            let newton = fixed_points_newton(&r, c).unwrap();
            for b in &quartic {
                let m = newton
                    .iter()
                    .map(|f| (f.red.w - b.w).abs() + crate::model::phase_distance(f.red.phi, b.phi))
                    .fold(f64::INFINITY, f64::min);
                assert!(m < 1e-10, "c={c} z={z}");
                let (gw, gp) = reduced_gradient(&b.reduced(), &r, c);
                assert!(gw.hypot(gp) < 1e-10);
            }
        }
    }

    #[test]
    fn small_c_continuity() {
        let r = ParameterPoint::new(0.6, 0.0, 0.8);
        let lin = linear_eigensystem(&two_level_matrix(&r)).unwrap();
        let nl = eigenstates_at(&r, 1e-6).unwrap();
        for (v, b) in lin.vectors.iter().zip(&nl) {
            assert!(1.0 - v.fidelity(&b.state()) < 1e-4);
        }
    }

    #[test]
    fn pole_and_regime_errors() {
        assert_eq!(eigenstates_at(&ParameterPoint::new(0.0, 0.0, 1.0), 0.05), Err(Error::PoleDegeneracy));
        assert!(matches!(
            eigenstates_at(&ParameterPoint::new(1.0, 0.0, 0.0), 1.5),
            Err(Error::UnsupportedRegime(_))
        ));
    }

    #[test]
    fn continuation_on_fixed_z_circle() {
        let z = 0.4;
        let lp = ParameterLoop::circle_fixed_z(z, 1e-3).unwrap();
        let lin = continue_branch(&lp, 0.0, BranchLabel::Lower, 64).unwrap();
        for b in &lin.branches {
            assert_abs_diff_eq!(b.w, -z, epsilon = 1e-14);
        }
        let nl = continue_branch(&lp, 0.05, BranchLabel::Lower, 64).unwrap();
        let eta0 = nl.branches[0].eta;
        for b in &nl.branches {
            assert_abs_diff_eq!(b.eta, eta0, epsilon = 1e-13);
        }
        let point = ParameterLoop::custom(|_| ParameterPoint::new(0.6, 0.0, 0.8), 1.0, 1.0).unwrap();
        let fam = continue_branch(&point, 0.05, BranchLabel::Upper, 8).unwrap();
        assert!(fam.branches.iter().all(|b| *b == fam.branches[0]));
    }

    #[test]
    fn continuation_reports_location() {
        // the polar cap circle at Z = 1 is degenerate
        let lp = ParameterLoop::polyline(
            vec![ParameterPoint::new(0.6, 0.0, 0.8), ParameterPoint::new(0.0, 0.0, 1.0)],
            1.0,
        )
        .unwrap();
        match continue_branch(&lp, 0.05, BranchLabel::Lower, 8) {
            Err(Error::BranchContinuation { s, .. }) => assert_abs_diff_eq!(s, 0.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn linear_eigensystem_examples() {
        let h = DMatrix::from_row_slice(2, 2, &[C64::new(-0.5, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.5, 0.0)]);
        let e = linear_eigensystem(&h).unwrap();
        assert_eq!(e.values, vec![-0.5, 0.5]);
        assert_abs_diff_eq!(e.vectors[0].amplitudes()[0].re, 1.0);
        assert_abs_diff_eq!(e.vectors[1].amplitudes()[1].re, 1.0);

        let r = ParameterPoint::new(0.48, -0.6, 0.64);
        let e = linear_eigensystem(&two_level_matrix(&r)).unwrap();
        assert_abs_diff_eq!(e.values[0], -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 0.5, epsilon = 1e-14);

        let bad = DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        assert!(matches!(linear_eigensystem(&bad), Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn hermitian_reconstruction(entries in proptest::collection::vec(-1.0..1.0f64, 32)) {
            let mut h = DMatrix::<C64>::zeros(4, 4);
            for i in 0..4 {
                for j in 0..4 {
                    h[(i, j)] = C64::new(entries[i * 4 + j], entries[16 + i * 4 + j]);
                }
            }
            let h = (&h + h.adjoint()).scale(0.5);
            let e = linear_eigensystem(&h).unwrap();
            prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
            let mut rec = DMatrix::<C64>::zeros(4, 4);
            for (l, v) in e.values.iter().zip(&e.vectors) {
                let col = nalgebra::DVector::from_column_slice(v.amplitudes());
                rec += (&col * col.adjoint()).scale(*l);
                let res = (&h * &col - col.scale(*l)).norm();
                prop_assert!(res < 1e-10);
            }
            prop_assert!((rec - &h).norm() < 1e-10);
        }

        #[test]
        fn quartic_residuals(c in 0.0..0.9f64, z in -0.95..0.95f64) {
            let coeffs = quartic_coefficients(c, z, 1.0 - z * z);
            let roots = quartic_real_roots(c, z);
            prop_assert_eq!(roots.iter().map(|r| r.multiplicity).sum::<usize>(), 2);
            for r in roots {
                prop_assert!(quartic_residual(&coeffs, r.eta).abs() < 1e-10);
            }
        }
    }
}
