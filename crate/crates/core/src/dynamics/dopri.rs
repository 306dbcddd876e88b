//! Dormand–Prince 5(4) with fixed-cadence output.
//!
//! Output times are hit exactly by shortening the step that would overrun
//! them, so samples carry the full local accuracy of the method instead of
//! an interpolant's.

use std::ops::{Add, Mul};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait Component: Copy + Send + Sync + Add<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(self) -> f64;
}

impl Component for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Component for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64, h_max: f64) -> Self {
        Self {
            rtol,
            atol,
            h_max,
            max_steps: 500_000_000,
        }
    }

    /// Integrates `y' = f(t, y)` from `t0` to `t_end` (either direction).
    ///
    /// `observe` sees `t0`, every `t0 + k·dt_out` strictly inside the
    /// interval, and `t_end`. `on_step` sees the state after every
    /// `check_every`-th accepted step.
    #[allow(clippy::too_many_arguments)]
    pub fn integrate<T, F, O, S>(
        &self,
        mut f: F,
        t0: f64,
        y: &mut [T],
        t_end: f64,
        dt_out: f64,
        mut observe: O,
        check_every: usize,
        mut on_step: S,
    ) -> Result<()>
    where
        T: Component,
        F: FnMut(f64, &[T], &mut [T]),
        O: FnMut(f64, &[T]) -> Result<()>,
        S: FnMut(f64, &[T]) -> Result<()>,
    {
        let n = y.len();
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        let span = (t_end - t0).abs();
        observe(t0, y)?;
        if span == 0.0 {
            return Ok(());
        }
        let dt_out = if dt_out > 0.0 && dt_out.is_finite() { dt_out } else { f64::INFINITY };

        let mut k1 = vec![T::zero(); n];
        let mut k2 = vec![T::zero(); n];
        let mut k3 = vec![T::zero(); n];
        let mut k4 = vec![T::zero(); n];
        let mut k5 = vec![T::zero(); n];
        let mut k6 = vec![T::zero(); n];
        let mut k7 = vec![T::zero(); n];
        let mut tmp = vec![T::zero(); n];
        let mut y_new = vec![T::zero(); n];

        f(t0, y, &mut k1);
        let mut h = self.initial_step(y, &k1, span);
        let mut t = t0;
        let mut next_index: u64 = 1;
        let mut accepted = 0usize;
        let mut steps = 0usize;

        loop {
            let next_out = {
                let cand = next_index as f64 * dt_out;
                if cand < span * (1.0 - 1e-13) {
                    cand
                } else {
                    span
                }
            };
            let remaining = next_out - (t - t0) * dir;
            let clipped = remaining <= h;
            let h_try = if clipped { remaining } else { h };
            if h_try < 1e-14 * (1.0 + t.abs()) && !clipped {
                return Err(Error::Integration {
                    t,
                    reason: format!("step size underflow (h = {h_try:e})"),
                });
            }
            steps += 1;
            if steps > self.max_steps {
                return Err(Error::Integration {
                    t,
                    reason: "maximum number of steps exceeded".into(),
                });
            }
            let hs = h_try * dir;

            for i in 0..n {
                tmp[i] = y[i] + k1[i] * (hs * A21);
            }
            f(t + C2 * hs, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * hs;
            }
            f(t + C3 * hs, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * hs;
            }
            f(t + C4 * hs, &tmp, &mut k4);
            for i in 0..n {
                tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * hs;
            }
            f(t + C5 * hs, &tmp, &mut k5);
            for i in 0..n {
                tmp[i] = y[i]
                    + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * hs;
            }
            f(t + hs, &tmp, &mut k6);
            for i in 0..n {
                y_new[i] = y[i]
                    + (k1[i] * B1 + k3[i] * B3 + k4[i] * B4 + k5[i] * B5 + k6[i] * B6) * hs;
            }
            let t_new = if clipped { t0 + dir * next_out } else { t + hs };
            f(t_new, &y_new, &mut k7);

            let mut err_sq = 0.0;
            for i in 0..n {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hs;
                let sc = self.atol + self.rtol * y[i].magnitude().max(y_new[i].magnitude());
                let r = e.magnitude() / sc;
                err_sq += r * r;
            }
            let err = (err_sq / n as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Integration {
                    t,
                    reason: "non-finite error estimate".into(),
                });
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };

            if err <= 1.0 {
                t = t_new;
                y.copy_from_slice(&y_new);
                std::mem::swap(&mut k1, &mut k7);
                accepted += 1;
                let proposal = (h_try * fac).min(self.h_max);
                h = if clipped { proposal.max(h) } else { proposal };
                if check_every > 0 && accepted % check_every == 0 {
                    on_step(t, y)?;
                }
                if clipped {
                    observe(t, y)?;
                    if next_out >= span {
                        return Ok(());
                    }
                    next_index += 1;
                }
            } else {
                h = h_try * fac.min(1.0);
            }
        }
    }

    fn initial_step<T: Component>(&self, y: &[T], dy: &[T], span: f64) -> f64 {
        let n = y.len() as f64;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for (a, b) in y.iter().zip(dy) {
            let sc = self.atol + self.rtol * a.magnitude();
            d0 += (a.magnitude() / sc).powi(2);
            d1 += (b.magnitude() / sc).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(self.h_max).min(span).max(1e-10_f64.min(span))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let solver = Dopri5::new(1e-11, 1e-13, 1.0);
        let mut y = [1.0f64];
        let mut samples = Vec::new();
        solver
            .integrate(
                |_, y: &[f64], d: &mut [f64]| d[0] = -y[0],
                0.0,
                &mut y,
                3.0,
                0.5,
                |t, y| {
                    samples.push((t, y[0]));
                    Ok(())
                },
                0,
                |_, _| Ok(()),
            )
            .unwrap();
        assert_eq!(samples.len(), 7);
        for (t, v) in samples {
            assert!((v - (-t).exp()).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn harmonic_oscillator_backward() {
        let solver = Dopri5::new(1e-11, 1e-13, 1.0);
        let mut y = [1.0f64, 0.0];
        let rhs = |_: f64, y: &[f64], d: &mut [f64]| {
            d[0] = y[1];
            d[1] = -y[0];
        };
        solver
            .integrate(rhs, 0.0, &mut y, 10.0, f64::INFINITY, |_, _| Ok(()), 0, |_, _| Ok(()))
            .unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
        solver
            .integrate(rhs, 10.0, &mut y, 0.0, f64::INFINITY, |_, _| Ok(()), 0, |_, _| Ok(()))
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9);
    }

    #[test]
    fn blow_up_reports_failure() {
        let solver = Dopri5::new(1e-10, 1e-12, 1.0);
        let mut y = [1.0f64];
        let res = solver.integrate(
            |_, y: &[f64], d: &mut [f64]| d[0] = y[0] * y[0],
            0.0,
            &mut y,
            2.0,
            f64::INFINITY,
            |_, _| Ok(()),
            0,
            |_, _| Ok(()),
        );
        match res {
            Err(Error::Integration { t, .. }) => assert!(t > 0.9 && t < 1.0),
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
