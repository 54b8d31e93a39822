//! Explicit Runge-Kutta integrators: fixed-step RK4 and adaptive Dormand-Prince 5(4).

use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Step-size policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum StepControl {
    /// Classical RK4. The interval is split into `ceil(len / h)` equal steps
    /// so every interval end is hit exactly.
    Fixed { h: f64 },
    /// Dormand-Prince 5(4) with embedded error control.
    Adaptive { rtol: f64, atol: f64, h_init: f64, h_max: f64 },
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl::Fixed { h: 1e-4 }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<(), NumericsError> {
        let ok = match *self {
            StepControl::Fixed { h } => h > 0.0 && h.is_finite(),
            StepControl::Adaptive { rtol, atol, h_init, h_max } => {
                rtol > 0.0 && atol > 0.0 && h_init > 0.0 && h_max >= h_init
            }
        };
        if ok {
            Ok(())
        } else {
            Err(NumericsError::InvalidArgument(format!("invalid step control {self:?}")))
        }
    }
}

/// Time-stamped state sequence.
#[derive(Debug, Clone, Default)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Stateful stepper that can be advanced over consecutive intervals while
/// keeping the adaptive step size.
#[derive(Debug, Clone)]
pub struct Integrator {
    control: StepControl,
    h_next: f64,
    steps: usize,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

// Dormand-Prince tableau
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

impl Integrator {
    pub fn new(control: StepControl, dim: usize) -> Result<Self, NumericsError> {
        control.validate()?;
        let h_next = match control {
            StepControl::Fixed { h } => h,
            StepControl::Adaptive { h_init, .. } => h_init,
        };
        Ok(Self {
            control,
            h_next,
            steps: 0,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
        })
    }

    /// Accepted steps so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Advances `x` from `t0` to `t1`, calling `observe` after every accepted step.
    pub fn advance<F, O>(&mut self, rhs: &mut F, t0: f64, t1: f64, x: &mut [f64], mut observe: O) -> Result<(), NumericsError>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        O: FnMut(f64, &[f64]),
    {
        if !(t1 > t0) {
            return Err(NumericsError::InvalidArgument(format!("empty interval [{t0}, {t1}]")));
        }
        match self.control {
            StepControl::Fixed { h } => {
                let len = t1 - t0;
                let n = ((len / h) - 1e-9).ceil().max(1.0) as usize;
                let h = len / n as f64;
                for s in 0..n {
                    let t = t0 + s as f64 * h;
                    self.rk4_step(rhs, t, h, x);
                    let t_new = if s + 1 == n { t1 } else { t0 + (s + 1) as f64 * h };
                    check_finite(x, t_new)?;
                    self.steps += 1;
                    observe(t_new, x);
                }
                Ok(())
            }
            StepControl::Adaptive { rtol, atol, h_max, .. } => {
                let mut t = t0;
                let h_min = 1e-14 * t1.abs().max(1.0);
                rhs(t, x, &mut self.k[0]);
                while t < t1 {
                    let mut h = self.h_next.min(h_max);
                    let last = t + h >= t1 - 1e-12 * (t1 - t0);
                    if last {
                        h = t1 - t;
                    }
                    let err = self.dopri_step(rhs, t, h, x, rtol, atol);
                    if err <= 1.0 {
                        t = if last { t1 } else { t + h };
                        x.copy_from_slice(&self.tmp);
                        self.k[0] = self.k[6].clone();
                        check_finite(x, t)?;
                        self.steps += 1;
                        observe(t, x);
                        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                        // keep the pre-truncation size when the final step was shortened
                        if !last {
                            self.h_next = h * factor;
                        }
                    } else {
                        if !err.is_finite() {
                            self.h_next = h * 0.2;
                        } else {
                            self.h_next = h * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                        }
                        if self.h_next < h_min {
                            return Err(NumericsError::IntegrationAborted {
                                time: t,
                                reason: "step size underflow".into(),
                            });
                        }
                    }
                }
                Ok(())
            }
        }
    }

    fn rk4_step<F>(&mut self, rhs: &mut F, t: f64, h: f64, x: &mut [f64])
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = x.len();
        let [k1, k2, k3, k4, ..] = &mut self.k;
        let tmp = &mut self.tmp;
        rhs(t, x, k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        rhs(t + 0.5 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        rhs(t + 0.5 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        rhs(t + h, tmp, k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// One Dormand-Prince trial step; `k[0]` must hold `f(t, x)`. The
    /// candidate lands in `tmp`, its derivative in `k[6]`. Returns the scaled
    /// RMS error estimate.
    fn dopri_step<F>(&mut self, rhs: &mut F, t: f64, h: f64, x: &[f64], rtol: f64, atol: f64) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = x.len();
        let mut y = vec![0.0; n];
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        for i in 0..n {
            y[i] = x[i] + h * A21 * k1[i];
        }
        rhs(t + h / 5.0, &y, k2);
        for i in 0..n {
            y[i] = x[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + 3.0 * h / 10.0, &y, k3);
        for i in 0..n {
            y[i] = x[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + 4.0 * h / 5.0, &y, k4);
        for i in 0..n {
            y[i] = x[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + 8.0 * h / 9.0, &y, k5);
        for i in 0..n {
            y[i] = x[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, &y, k6);
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = x[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        rhs(t + h, tmp, k7);
        let mut acc = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = atol + rtol * x[i].abs().max(tmp[i].abs());
            acc += (e / sc) * (e / sc);
        }
        if n == 0 {
            0.0
        } else {
            (acc / n as f64).sqrt()
        }
    }
}

fn check_finite(x: &[f64], t: f64) -> Result<(), NumericsError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NumericsError::IntegrationAborted { time: t, reason: "non-finite state".into() })
    }
}

/// Integrates `x' = rhs(t, x)` over `t_span`, recording the initial state and
/// every accepted step.
pub fn integrate<F>(mut rhs: F, x0: &[f64], t_span: (f64, f64), control: StepControl) -> Result<OdeSolution, NumericsError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let (t0, t1) = t_span;
    let mut stepper = Integrator::new(control, x0.len())?;
    let mut sol = OdeSolution { times: vec![t0], states: vec![x0.to_vec()] };
    let mut x = x0.to_vec();
    stepper.advance(&mut rhs, t0, t1, &mut x, |t, s| {
        sol.times.push(t);
        sol.states.push(s.to_vec());
    })?;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rotation(omega: f64) -> impl FnMut(f64, &[f64], &mut [f64]) {
        move |_, x, dx| {
            dx[0] = -omega * x[1];
            dx[1] = omega * x[0];
        }
    }

    #[test]
    fn pure_rotation_returns_after_one_period() {
        let sol = integrate(rotation(100.0 * PI), &[1.0, 0.0], (0.0, 0.02), StepControl::Fixed { h: 1e-4 }).unwrap();
        let end = sol.states.last().unwrap();
        assert!((end[0] - 1.0).abs() < 1e-7 && end[1].abs() < 1e-7, "{end:?}");
        assert_eq!(*sol.times.last().unwrap(), 0.02);
    }

    #[test]
    fn zero_rhs_is_constant() {
        let sol = integrate(|_, _, dx: &mut [f64]| dx.fill(0.0), &[0.3, -2.0], (0.0, 1.0), StepControl::default()).unwrap();
        assert!(sol.states.iter().all(|s| s == &vec![0.3, -2.0]));
    }

    #[test]
    fn exponential_decay() {
        let sol = integrate(|_, x, dx: &mut [f64]| dx[0] = -x[0], &[1.0], (0.0, 1.0), StepControl::Fixed { h: 1e-4 }).unwrap();
        assert!((sol.states.last().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn adaptive_exponential_decay() {
        let ctl = StepControl::Adaptive { rtol: 1e-10, atol: 1e-12, h_init: 1e-3, h_max: 0.1 };
        let sol = integrate(|_, x, dx: &mut [f64]| dx[0] = -x[0], &[1.0], (0.0, 1.0), ctl).unwrap();
        assert!((sol.states.last().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-9);
        assert_eq!(*sol.times.last().unwrap(), 1.0);
    }

    #[test]
    fn adaptive_rotation_period() {
        let ctl = StepControl::Adaptive { rtol: 1e-11, atol: 1e-12, h_init: 1e-4, h_max: 1e-3 };
        let sol = integrate(rotation(100.0 * PI), &[1.0, 0.0], (0.0, 0.02), ctl).unwrap();
        let end = sol.states.last().unwrap();
        assert!((end[0] - 1.0).abs() < 1e-7 && end[1].abs() < 1e-7);
    }

    #[test]
    fn blow_up_aborts_with_time() {
        let err = integrate(|_, x, dx: &mut [f64]| dx[0] = x[0] * x[0], &[1.0], (0.0, 2.0), StepControl::Fixed { h: 1e-3 })
            .unwrap_err();
        match err {
            NumericsError::IntegrationAborted { time, .. } => assert!(time > 0.9 && time <= 2.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_step() {
        assert!(integrate(|_, _, _: &mut [f64]| {}, &[1.0], (0.0, 1.0), StepControl::Fixed { h: 0.0 }).is_err());
        assert!(integrate(|_, _, _: &mut [f64]| {}, &[1.0], (1.0, 1.0), StepControl::Fixed { h: 0.1 }).is_err());
    }
}
