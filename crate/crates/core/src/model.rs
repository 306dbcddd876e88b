//! Quantum states, parameter loops and the two-level models.
//!
//! The nonlinear two-level system is
//!
//! ```text
//! i dφ₁/dt = [c|φ₂|² + Z/2] φ₁ + (X − iY)/2 φ₂
//! i dφ₂/dt = [c|φ₁|² − Z/2] φ₂ + (X + iY)/2 φ₁
//! ```
//!
//! generated by the classical Hamiltonian
//! `𝓗 = c|φ₁|²|φ₂|² + (Z/2)(|φ₁|² − |φ₂|²) + Re[(X − iY) φ₁* φ₂]`
//! through `i dψ_j/dt = ∂𝓗/∂ψ_j*`. At unit norm the state reduces to the
//! Bloch pair `(w, φ)` with `w/2` canonically conjugate to `φ`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `⟨ψ|ψ⟩ = 1` for states produced by this crate.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Wraps an angle into `[−π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Principal value in `(−π, π]`.
pub fn principal_value(a: f64) -> f64 {
    let r = wrap_angle(a);
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Distance between two phases on the circle.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Probability amplitudes `ψ_j` of an `N`-level state, `N ≥ 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState(Vec<C64>);

impl QuantumState {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::Dimension {
                expected: 2,
                got: amplitudes.len(),
            });
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::Contract("non-finite amplitude".into()));
        }
        Ok(Self(amplitudes))
    }

    /// Builds the state and rescales it to unit norm.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        let mut s = Self::new(amplitudes)?;
        let n = s.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::Contract("zero state cannot be normalized".into()));
        }
        s.0.iter_mut().for_each(|a| *a /= n);
        Ok(s)
    }

    pub fn two_level(a: C64, b: C64) -> Self {
        Self(vec![a, b])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.0
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &QuantumState) -> C64 {
        inner(&self.0, &other.0)
    }

    /// `|⟨self|other⟩|²`, insensitive to global phase.
    pub fn fidelity(&self, other: &QuantumState) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Multiplies by `e^{iχ}`.
    pub fn with_phase(&self, chi: f64) -> QuantumState {
        let u = C64::from_polar(1.0, chi);
        Self(self.0.iter().map(|a| a * u).collect())
    }

    pub fn max_abs_diff(&self, other: &QuantumState) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub(crate) fn require_dim(&self, n: usize) -> Result<()> {
        if self.dim() != n {
            return Err(Error::Dimension {
                expected: n,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

pub(crate) fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// A point `R = (X, Y, Z)` in parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl ParameterPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Transverse magnitude `√(X² + Y²)`.
    pub fn rho(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// `arg(X + iY)`.
    pub fn azimuth(&self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn distance(&self, other: &ParameterPoint) -> f64 {
        (*self - *other).norm()
    }

    pub fn dot(&self, other: &ParameterPoint) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, o: &ParameterPoint) -> ParameterPoint {
        ParameterPoint::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn scale(&self, k: f64) -> ParameterPoint {
        ParameterPoint::new(self.x * k, self.y * k, self.z * k)
    }
}

impl std::ops::Sub for ParameterPoint {
    type Output = ParameterPoint;
    fn sub(self, o: ParameterPoint) -> ParameterPoint {
        ParameterPoint::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Add for ParameterPoint {
    type Output = ParameterPoint;
    fn add(self, o: ParameterPoint) -> ParameterPoint {
        ParameterPoint::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopKind {
    CircleFixedZ,
    Polyline,
    Custom,
}

/// How the traversal rate `v` maps onto wall time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// `|dR/dt| = v`; the loop takes `T = L/v`.
    #[default]
    ArcLength,
    /// The loop parameter advances at `2π·ds/dt = v`; the loop takes `T = 2π/v`.
    Angular,
}

type PathFn = Arc<dyn Fn(f64) -> ParameterPoint + Send + Sync>;

#[derive(Clone)]
enum Shape {
    Circle { z: f64 },
    Polyline { points: Vec<ParameterPoint>, cumulative: Vec<f64> },
    Custom { path: PathFn, length: f64 },
}

/// A closed path `s ∈ [0, 1] ↦ R(s)` traversed at rate `v`.
#[derive(Clone)]
pub struct ParameterLoop {
    shape: Shape,
    rate: f64,
    rate_mode: RateMode,
}

impl fmt::Debug for ParameterLoop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("ParameterLoop");
        match &self.shape {
            Shape::Circle { z } => d.field("circle_z", z),
            Shape::Polyline { points, .. } => d.field("waypoints", &points.len()),
            Shape::Custom { length, .. } => d.field("custom_length", length),
        };
        d.field("rate", &self.rate)
            .field("rate_mode", &self.rate_mode)
            .finish()
    }
}

impl ParameterLoop {
    /// Circle of radius `√(1 − Z²)` on the unit sphere at height `z`,
    /// traversed counter-clockwise about `+ẑ`.
    pub fn circle_fixed_z(z: f64, rate: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&z) {
            return Err(Error::Contract(format!("circle height {z} outside [-1, 1]")));
        }
        Self::checked(Shape::Circle { z }, rate)
    }

    /// Piecewise-linear loop through `waypoints`, closed back to the first point.
    pub fn polyline(mut waypoints: Vec<ParameterPoint>, rate: f64) -> Result<Self> {
        if waypoints.len() > 1 && waypoints[0].distance(waypoints.last().unwrap()) < 1e-12 {
            waypoints.pop();
        }
        if waypoints.is_empty() {
            return Err(Error::Contract("polyline needs at least one waypoint".into()));
        }
        let n = waypoints.len();
        let mut cumulative = Vec::with_capacity(n + 1);
        cumulative.push(0.0);
        for k in 0..n {
            let seg = waypoints[k].distance(&waypoints[(k + 1) % n]);
            cumulative.push(cumulative[k] + seg);
        }
        Self::checked(
            Shape::Polyline {
                points: waypoints,
                cumulative,
            },
            rate,
        )
    }

    /// Arbitrary closed path. `length` fixes the traversal time `T = length/v`
    /// in arc-length mode and need not equal the geometric length.
    pub fn custom<F>(path: F, length: f64, rate: f64) -> Result<Self>
    where
        F: Fn(f64) -> ParameterPoint + Send + Sync + 'static,
    {
        if !(length >= 0.0) {
            return Err(Error::Contract("custom loop length must be non-negative".into()));
        }
        let l = Self::checked(
            Shape::Custom {
                path: Arc::new(path),
                length,
            },
            rate,
        )?;
        let gap = l.point_at(0.0).distance(&l.point_at(1.0));
        if gap >= 1e-12 {
            return Err(Error::Contract(format!("loop not closed: |R(0) − R(1)| = {gap:e}")));
        }
        Ok(l)
    }

    fn checked(shape: Shape, rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::Contract(format!("rate must be positive, got {rate}")));
        }
        Ok(Self {
            shape,
            rate,
            rate_mode: RateMode::ArcLength,
        })
    }

    pub fn with_rate_mode(mut self, mode: RateMode) -> Self {
        self.rate_mode = mode;
        self
    }

    pub fn with_rate(mut self, rate: f64) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::Contract(format!("rate must be positive, got {rate}")));
        }
        self.rate = rate;
        Ok(self)
    }

    pub fn kind(&self) -> LoopKind {
        match self.shape {
            Shape::Circle { .. } => LoopKind::CircleFixedZ,
            Shape::Polyline { .. } => LoopKind::Polyline,
            Shape::Custom { .. } => LoopKind::Custom,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn rate_mode(&self) -> RateMode {
        self.rate_mode
    }

    /// Height of a fixed-Z circle.
    pub fn circle_z(&self) -> Option<f64> {
        match self.shape {
            Shape::Circle { z } => Some(z),
            _ => None,
        }
    }

    pub fn point_at(&self, s: f64) -> ParameterPoint {
        match &self.shape {
            Shape::Circle { z } => {
                let r = (1.0 - z * z).max(0.0).sqrt();
                let a = 2.0 * PI * s;
                ParameterPoint::new(r * a.cos(), r * a.sin(), *z)
            }
            Shape::Polyline { points, cumulative } => {
                let n = points.len();
                let total = cumulative[n];
                if total == 0.0 {
                    return points[0];
                }
                let d = s.rem_euclid(1.0) * total;
                let k = match cumulative.partition_point(|&c| c <= d) {
                    0 => 0,
                    k => (k - 1).min(n - 1),
                };
                let seg = cumulative[k + 1] - cumulative[k];
                let f = if seg > 0.0 { (d - cumulative[k]) / seg } else { 0.0 };
                let a = points[k];
                let b = points[(k + 1) % n];
                a + (b - a).scale(f)
            }
            Shape::Custom { path, .. } => path(s),
        }
    }

    /// `dR/ds`.
    pub fn tangent_at(&self, s: f64) -> ParameterPoint {
        match &self.shape {
            Shape::Circle { z } => {
                let r = (1.0 - z * z).max(0.0).sqrt();
                let a = 2.0 * PI * s;
                ParameterPoint::new(-2.0 * PI * r * a.sin(), 2.0 * PI * r * a.cos(), 0.0)
            }
            _ => {
                let h = 1e-6;
                (self.point_at(s + h) - self.point_at(s - h)).scale(0.5 / h)
            }
        }
    }

    /// Parameter length `L` used for arc-length timing.
    pub fn length(&self) -> f64 {
        match &self.shape {
            Shape::Circle { z } => 2.0 * PI * (1.0 - z * z).max(0.0).sqrt(),
            Shape::Polyline { cumulative, .. } => *cumulative.last().unwrap(),
            Shape::Custom { length, .. } => *length,
        }
    }

    /// Wall time `T` for one traversal.
    pub fn duration(&self) -> f64 {
        match self.rate_mode {
            RateMode::ArcLength => self.length() / self.rate,
            RateMode::Angular => 2.0 * PI / self.rate,
        }
    }

    /// `R(t)` during a sweep.
    pub fn point_at_time(&self, t: f64) -> ParameterPoint {
        let total = self.duration();
        if total == 0.0 {
            return self.point_at(0.0);
        }
        self.point_at(t / total)
    }

    pub fn closure_gap(&self) -> f64 {
        self.point_at(0.0).distance(&self.point_at(1.0))
    }
}

/// `N×N` Hermitian Hamiltonian as a function of `R`.
#[derive(Clone)]
pub struct LinearModel {
    dim: usize,
    hamiltonian: Arc<dyn Fn(&ParameterPoint) -> DMatrix<C64> + Send + Sync>,
}

impl fmt::Debug for LinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearModel").field("dim", &self.dim).finish()
    }
}

impl LinearModel {
    pub fn new<F>(dim: usize, hamiltonian: F) -> Result<Self>
    where
        F: Fn(&ParameterPoint) -> DMatrix<C64> + Send + Sync + 'static,
    {
        if dim < 2 {
            return Err(Error::Dimension { expected: 2, got: dim });
        }
        Ok(Self {
            dim,
            hamiltonian: Arc::new(hamiltonian),
        })
    }

    /// `H(R) = [[Z/2, (X − iY)/2], [(X + iY)/2, −Z/2]]`.
    pub fn two_level() -> Self {
        Self {
            dim: 2,
            hamiltonian: Arc::new(|r: &ParameterPoint| two_level_matrix(r)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian_at(&self, r: &ParameterPoint) -> DMatrix<C64> {
        (self.hamiltonian)(r)
    }
}

pub fn two_level_matrix(r: &ParameterPoint) -> DMatrix<C64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(r.z / 2.0, 0.0),
            C64::new(r.x / 2.0, -r.y / 2.0),
            C64::new(r.x / 2.0, r.y / 2.0),
            C64::new(-r.z / 2.0, 0.0),
        ],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NonlinearTwoLevel,
    LinearNLevel,
}

/// The system being driven.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    /// The two-mode condensate model with nonlinearity `c`.
    NonlinearTwoLevel { c: f64 },
    LinearNLevel(LinearModel),
}

impl ModelSpec {
    pub fn nonlinear(c: f64) -> Self {
        ModelSpec::NonlinearTwoLevel { c }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::NonlinearTwoLevel { .. } => ModelKind::NonlinearTwoLevel,
            ModelSpec::LinearNLevel(_) => ModelKind::LinearNLevel,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::NonlinearTwoLevel { .. } => 2,
            ModelSpec::LinearNLevel(m) => m.dim(),
        }
    }

    /// Nonlinearity, zero for linear models.
    pub fn c(&self) -> f64 {
        match self {
            ModelSpec::NonlinearTwoLevel { c } => *c,
            ModelSpec::LinearNLevel(_) => 0.0,
        }
    }

    /// Writes `dψ/dt` into `out`.
    pub fn rhs_into(&self, psi: &[C64], r: &ParameterPoint, out: &mut [C64]) {
        match self {
            ModelSpec::NonlinearTwoLevel { c } => nonlinear_rhs_into(psi, r, *c, out),
            ModelSpec::LinearNLevel(m) => {
                let h = m.hamiltonian_at(r);
                linear_rhs_into(&h, psi, out);
            }
        }
    }

    /// `H(ψ; R)` as a matrix, so that `i dψ/dt = H(ψ; R) ψ`.
    pub fn effective_hamiltonian(&self, psi: &QuantumState, r: &ParameterPoint) -> DMatrix<C64> {
        match self {
            ModelSpec::NonlinearTwoLevel { c } => {
                let a = psi.amplitudes();
                let mut h = two_level_matrix(r);
                h[(0, 0)] += C64::new(c * a[1].norm_sqr(), 0.0);
                h[(1, 1)] += C64::new(c * a[0].norm_sqr(), 0.0);
                h
            }
            ModelSpec::LinearNLevel(m) => m.hamiltonian_at(r),
        }
    }

    /// Classical Hamiltonian `𝓗(ψ*, ψ; R)`.
    pub fn energy(&self, psi: &QuantumState, r: &ParameterPoint) -> f64 {
        match self {
            ModelSpec::NonlinearTwoLevel { c } => two_level_energy(psi.amplitudes(), r, *c),
            ModelSpec::LinearNLevel(m) => {
                let h = m.hamiltonian_at(r);
                let v = psi.amplitudes();
                let mut e = C64::new(0.0, 0.0);
                for i in 0..v.len() {
                    for j in 0..v.len() {
                        e += v[i].conj() * h[(i, j)] * v[j];
                    }
                }
                e.re
            }
        }
    }
}

pub(crate) fn linear_rhs_into(h: &DMatrix<C64>, psi: &[C64], out: &mut [C64]) {
    let mi = C64::new(0.0, -1.0);
    for i in 0..psi.len() {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..psi.len() {
            acc += h[(i, j)] * psi[j];
        }
        out[i] = mi * acc;
    }
}

#[inline]
pub(crate) fn nonlinear_rhs_into(psi: &[C64], r: &ParameterPoint, c: f64, out: &mut [C64]) {
    let (p1, p2) = (psi[0], psi[1]);
    let coupling_minus = C64::new(r.x / 2.0, -r.y / 2.0);
    let coupling_plus = C64::new(r.x / 2.0, r.y / 2.0);
    let h1 = p1 * (c * p2.norm_sqr() + r.z / 2.0) + coupling_minus * p2;
    let h2 = p2 * (c * p1.norm_sqr() - r.z / 2.0) + coupling_plus * p1;
    // -i·h
    out[0] = C64::new(h1.im, -h1.re);
    out[1] = C64::new(h2.im, -h2.re);
}

fn two_level_energy(a: &[C64], r: &ParameterPoint, c: f64) -> f64 {
    let n1 = a[0].norm_sqr();
    let n2 = a[1].norm_sqr();
    let cross = C64::new(r.x, -r.y) * a[0].conj() * a[1];
    c * n1 * n2 + 0.5 * r.z * (n1 - n2) + cross.re
}

/// `dψ/dt` of the nonlinear two-level model.
pub fn rhs_nonlinear(state: &QuantumState, r: &ParameterPoint, c: f64) -> Result<QuantumState> {
    state.require_dim(2)?;
    let mut out = vec![C64::new(0.0, 0.0); 2];
    nonlinear_rhs_into(state.amplitudes(), r, c, &mut out);
    Ok(QuantumState(out))
}

/// `𝓗 = c|φ₁|²|φ₂|² + (Z/2)(|φ₁|² − |φ₂|²) + Re[(X − iY) φ₁* φ₂]`.
pub fn classical_hamiltonian(state: &QuantumState, r: &ParameterPoint, c: f64) -> Result<f64> {
    state.require_dim(2)?;
    Ok(two_level_energy(state.amplitudes(), r, c))
}

/// Bloch coordinates of a unit-norm two-level state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    /// Population imbalance `|φ₁|² − |φ₂|²`.
    pub w: f64,
    /// Relative phase `arg φ₂ − arg φ₁` in `[−π, π)`.
    pub phi: f64,
}

impl ReducedState {
    pub fn new(w: f64, phi: f64) -> Self {
        Self { w, phi: wrap_angle(phi) }
    }

    /// Canonical momentum `w/2`.
    pub fn p(&self) -> f64 {
        0.5 * self.w
    }

    /// Unit Bloch vector.
    pub fn bloch(&self) -> ParameterPoint {
        let s = (1.0 - self.w * self.w).max(0.0).sqrt();
        ParameterPoint::new(s * self.phi.cos(), s * self.phi.sin(), self.w)
    }
}

/// Choice of smooth representative `s(w, φ)` over the Bloch sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeSection {
    /// `(√((1+w)/2), √((1−w)/2) e^{iφ})`, singular at `w = −1`.
    #[default]
    FirstReal,
    /// `(√((1+w)/2) e^{−iφ}, √((1−w)/2))`, singular at `w = +1`.
    SecondReal,
}

pub fn reduce(state: &QuantumState) -> Result<ReducedState> {
    state.require_dim(2)?;
    reduce_amplitudes(state.amplitudes())
}

pub(crate) fn reduce_amplitudes(a: &[C64]) -> Result<ReducedState> {
    let n1 = a[0].norm_sqr();
    let n2 = a[1].norm_sqr();
    let total = n1 + n2;
    if n1 <= 1e-30 * total.max(1e-300) {
        return Err(Error::SectionSingular);
    }
    let w = ((n1 - n2) / total).clamp(-1.0, 1.0);
    let phi = if n2 == 0.0 {
        0.0
    } else {
        wrap_angle(a[1].arg() - a[0].arg())
    };
    Ok(ReducedState { w, phi })
}

/// Standard section `s(w, φ)` times `e^{−i·global_phase}`.
pub fn lift(red: &ReducedState, global_phase: f64) -> Result<QuantumState> {
    lift_with(red, global_phase, GaugeSection::FirstReal)
}

pub fn lift_with(red: &ReducedState, global_phase: f64, section: GaugeSection) -> Result<QuantumState> {
    if !(red.w.abs() <= 1.0) {
        return Err(Error::Contract(format!("|w| = {} exceeds 1", red.w.abs())));
    }
    let a = (0.5 * (1.0 + red.w)).sqrt();
    let b = (0.5 * (1.0 - red.w)).sqrt();
    let g = C64::from_polar(1.0, -global_phase);
    let (p1, p2) = match section {
        GaugeSection::FirstReal => (C64::new(a, 0.0), C64::from_polar(b, red.phi)),
        GaugeSection::SecondReal => (C64::from_polar(a, -red.phi), C64::new(b, 0.0)),
    };
    Ok(QuantumState(vec![p1 * g, p2 * g]))
}

/// `𝓗_red(w, φ) = c(1 − w²)/4 + Zw/2 + (√(1 − w²)/2)(X cos φ + Y sin φ)`.
pub fn reduced_hamiltonian(red: &ReducedState, r: &ParameterPoint, c: f64) -> f64 {
    let w = red.w;
    let s = (1.0 - w * w).max(0.0).sqrt();
    0.25 * c * (1.0 - w * w) + 0.5 * r.z * w + 0.5 * s * (r.x * red.phi.cos() + r.y * red.phi.sin())
}

/// `(∂𝓗_red/∂w, ∂𝓗_red/∂φ)`.
pub fn reduced_gradient(red: &ReducedState, r: &ParameterPoint, c: f64) -> (f64, f64) {
    let w = red.w;
    let s = (1.0 - w * w).max(0.0).sqrt();
    let g = r.x * red.phi.cos() + r.y * red.phi.sin();
    let gp = -r.x * red.phi.sin() + r.y * red.phi.cos();
    let dw = -0.5 * c * w + 0.5 * r.z - 0.5 * w * g / s;
    let dphi = 0.5 * s * gp;
    (dw, dphi)
}

/// Hessian of `𝓗_red` in `(w, φ)`: `[[H_ww, H_wφ], [H_wφ, H_φφ]]`.
pub fn reduced_hessian(red: &ReducedState, r: &ParameterPoint, c: f64) -> [[f64; 2]; 2] {
    let w = red.w;
    let one_m = (1.0 - w * w).max(0.0);
    let s = one_m.sqrt();
    let g = r.x * red.phi.cos() + r.y * red.phi.sin();
    let gp = -r.x * red.phi.sin() + r.y * red.phi.cos();
    let hww = -0.5 * c - 0.5 * g / (one_m * s);
    let hwp = -0.5 * w * gp / s;
    let hpp = -0.5 * s * g;
    [[hww, hwp], [hwp, hpp]]
}

/// Reduced equations of motion `(dw/dt, dφ/dt) = (−2 ∂𝓗/∂φ, 2 ∂𝓗/∂w)`.
pub fn reduced_rhs(red: &ReducedState, r: &ParameterPoint, c: f64) -> (f64, f64) {
    let (dw, dphi) = reduced_gradient(red, r, c);
    (-2.0 * dphi, 2.0 * dw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn c64(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn rhs_decoupled_level() {
        let d = rhs_nonlinear(
            &QuantumState::two_level(c64(1.0, 0.0), c64(0.0, 0.0)),
            &ParameterPoint::new(0.0, 0.0, 1.0),
            0.0,
        )
        .unwrap();
        assert_eq!(d.amplitudes(), &[c64(0.0, -0.5), c64(0.0, 0.0)]);
    }

    #[test]
    fn rhs_pure_coupling() {
        let d = rhs_nonlinear(
            &QuantumState::two_level(c64(1.0, 0.0), c64(0.0, 0.0)),
            &ParameterPoint::new(1.0, 0.0, 0.0),
            0.0,
        )
        .unwrap();
        assert_eq!(d.amplitudes(), &[c64(0.0, 0.0), c64(0.0, -0.5)]);
    }

    #[test]
    fn rhs_nonlinear_equal_populations() {
        // i dφ₁/dt = c|φ₂|² φ₁ = 0.05 · ½ · (1/√2)
        let d = rhs_nonlinear(
            &QuantumState::two_level(c64(S, 0.0), c64(S, 0.0)),
            &ParameterPoint::default(),
            0.05,
        )
        .unwrap();
        let expected = -0.025 / 2f64.sqrt();
        for a in d.amplitudes() {
            assert_abs_diff_eq!(a.re, 0.0, epsilon = 1e-17);
            assert_abs_diff_eq!(a.im, expected, epsilon = 1e-17);
        }
    }

    #[test]
    fn rhs_rejects_wrong_dimension() {
        let s = QuantumState::new(vec![c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]).unwrap();
        assert!(matches!(
            rhs_nonlinear(&s, &ParameterPoint::default(), 0.0),
            Err(Error::Dimension { .. })
        ));
        assert!(QuantumState::new(vec![c64(1.0, 0.0)]).is_err());
    }

    #[test]
    fn classical_hamiltonian_examples() {
        let up = QuantumState::two_level(c64(1.0, 0.0), c64(0.0, 0.0));
        for c in [0.0, 0.05, 3.0] {
            assert_eq!(classical_hamiltonian(&up, &ParameterPoint::new(0.0, 0.0, 1.0), c).unwrap(), 0.5);
        }
        let plus = QuantumState::two_level(c64(S, 0.0), c64(S, 0.0));
        assert_abs_diff_eq!(
            classical_hamiltonian(&plus, &ParameterPoint::new(1.0, 0.0, 0.0), 0.0).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn reduce_lift_examples() {
        let r = reduce(&QuantumState::two_level(c64(1.0, 0.0), c64(0.0, 0.0))).unwrap();
        assert_eq!((r.w, r.phi), (1.0, 0.0));
        let s = lift(&ReducedState::new(0.0, PI / 2.0), 0.0).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, S, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].im, S, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].re, 0.0, epsilon = 1e-15);
        assert_eq!(
            reduce(&QuantumState::two_level(c64(0.0, 0.0), c64(1.0, 0.0))),
            Err(Error::SectionSingular)
        );
    }

    #[test]
    fn reduced_hamiltonian_examples() {
        let x = ParameterPoint::new(1.0, 0.0, 0.0);
        assert_abs_diff_eq!(reduced_hamiltonian(&ReducedState::new(0.0, 0.0), &x, 0.0), 0.5);
        for phi in [0.0, 1.0, -2.5] {
            let v = reduced_hamiltonian(&ReducedState::new(1.0, phi), &ParameterPoint::new(0.0, 0.0, 1.0), 0.05);
            assert_abs_diff_eq!(v, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn c_zero_matches_linear_matrix() {
        let r = ParameterPoint::new(0.3, -0.7, 0.2);
        let psi = QuantumState::normalized(vec![c64(0.4, 0.1), c64(-0.2, 0.8)]).unwrap();
        let nl = rhs_nonlinear(&psi, &r, 0.0).unwrap();
        let mut lin = vec![C64::new(0.0, 0.0); 2];
        linear_rhs_into(&two_level_matrix(&r), psi.amplitudes(), &mut lin);
        for (a, b) in nl.amplitudes().iter().zip(&lin) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn effective_hamiltonian_reproduces_rhs() {
        let r = ParameterPoint::new(0.3, -0.7, 0.2);
        let psi = QuantumState::normalized(vec![c64(0.4, 0.1), c64(-0.2, 0.8)]).unwrap();
        let model = ModelSpec::nonlinear(0.37);
        let h = model.effective_hamiltonian(&psi, &r);
        let mut via_matrix = vec![C64::new(0.0, 0.0); 2];
        linear_rhs_into(&h, psi.amplitudes(), &mut via_matrix);
        let direct = rhs_nonlinear(&psi, &r, 0.37).unwrap();
        for (a, b) in direct.amplitudes().iter().zip(&via_matrix) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn loop_geometry() {
        let l = ParameterLoop::circle_fixed_z(0.6, 1e-3).unwrap();
        assert!(l.closure_gap() < 1e-12);
        assert_abs_diff_eq!(l.length(), 2.0 * PI * 0.8, epsilon = 1e-14);
        assert_abs_diff_eq!(l.duration(), 2.0 * PI * 0.8 / 1e-3, epsilon = 1e-9);
        let a = l.with_rate_mode(RateMode::Angular);
        assert_abs_diff_eq!(a.duration(), 2.0 * PI / 1e-3, epsilon = 1e-9);

        let sq = ParameterLoop::polyline(
            vec![
                ParameterPoint::new(0.0, 0.0, 0.0),
                ParameterPoint::new(1.0, 0.0, 0.0),
                ParameterPoint::new(1.0, 1.0, 0.0),
                ParameterPoint::new(0.0, 1.0, 0.0),
            ],
            0.5,
        )
        .unwrap();
        assert_abs_diff_eq!(sq.length(), 4.0);
        assert_abs_diff_eq!(sq.point_at(0.375).x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sq.point_at(0.375).y, 0.5, epsilon = 1e-15);
        assert!(sq.closure_gap() < 1e-12);
        assert!(ParameterLoop::custom(|s| ParameterPoint::new(s, 0.0, 0.0), 1.0, 1.0).is_err());
    }

    fn state_strategy() -> impl Strategy<Value = QuantumState> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("nonzero", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-3)
            .prop_map(|(a, b, c, d)| QuantumState::normalized(vec![c64(a, b), c64(c, d)]).unwrap())
    }

    fn point_strategy() -> impl Strategy<Value = ParameterPoint> {
        (-1.5..1.5f64, -1.5..1.5f64, -1.5..1.5f64).prop_map(|(x, y, z)| ParameterPoint::new(x, y, z))
    }

    /// Central finite differences of 𝓗 in (Re ψ_j, Im ψ_j) give ∂𝓗/∂ψ_j*.
    fn hamilton_rhs_fd(psi: &QuantumState, r: &ParameterPoint, c: f64) -> Vec<C64> {
        let h = 1e-6;
        let base = psi.amplitudes().to_vec();
        let energy = |v: &[C64]| two_level_energy(v, r, c);
        (0..2)
            .map(|j| {
                let mut p = base.clone();
                let mut m = base.clone();
                p[j] += C64::new(h, 0.0);
                m[j] -= C64::new(h, 0.0);
                let dx = (energy(&p) - energy(&m)) / (2.0 * h);
                let mut p = base.clone();
                let mut m = base.clone();
                p[j] += C64::new(0.0, h);
                m[j] -= C64::new(0.0, h);
                let dy = (energy(&p) - energy(&m)) / (2.0 * h);
                let d_conj = C64::new(0.5 * dx, 0.5 * dy);
                // i dψ/dt = ∂𝓗/∂ψ*
                C64::new(0.0, -1.0) * d_conj
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn reduce_lift_round_trip(w in -0.999..1.0f64, phi in -PI..PI) {
            let red = ReducedState::new(w, phi);
            let back = reduce(&lift(&red, 0.7).unwrap()).unwrap();
            prop_assert!((back.w - red.w).abs() < 1e-12);
            prop_assert!(phase_distance(back.phi, red.phi) < 1e-12);
        }

        #[test]
        fn reduced_matches_full_hamiltonian(psi in state_strategy(), r in point_strategy(), c in -1.0..1.0f64) {
            let red = reduce(&psi).unwrap();
            let full = classical_hamiltonian(&psi, &r, c).unwrap();
            prop_assert!((reduced_hamiltonian(&red, &r, c) - full).abs() < 1e-12);
            let relifted = lift(&red, 2.1).unwrap();
            prop_assert!((classical_hamiltonian(&relifted, &r, c).unwrap() - full).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn hamilton_consistency(psi in state_strategy(), r in point_strategy(), c in -1.0..1.0f64) {
            let fd = hamilton_rhs_fd(&psi, &r, c);
            let exact = rhs_nonlinear(&psi, &r, c).unwrap();
            let scale = exact.amplitudes().iter().map(|a| a.norm()).fold(1e-3, f64::max);
            for (a, b) in exact.amplitudes().iter().zip(&fd) {
                prop_assert!((a - b).norm() / scale < 1e-6);
            }
        }

        #[test]
        fn gauge_covariance(psi in state_strategy(), r in point_strategy(), c in -1.0..1.0f64, chi in -PI..PI) {
            let a = rhs_nonlinear(&psi.with_phase(chi), &r, c).unwrap();
            let b = rhs_nonlinear(&psi, &r, c).unwrap().with_phase(chi);
            prop_assert!(a.max_abs_diff(&b) < 1e-14);
        }

        #[test]
        fn vector_field_preserves_norm(psi in state_strategy(), r in point_strategy(), c in -1.0..1.0f64) {
            let d = rhs_nonlinear(&psi, &r, c).unwrap();
            prop_assert!(psi.inner(&d).re.abs() < 1e-15);
        }
    }
}
