//! Adaptive Dormand–Prince 5(4) integrator for complex linear systems.

use crate::error::{Error, Result};
use crate::hilbert::{C64, ZERO};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
}

impl StepControl {
    pub fn new(rtol: f64, h_max: f64) -> Self {
        StepControl {
            rtol,
            atol: rtol * 1e-3,
            h_max,
        }
    }
}

/// Reusable stage storage. The first stage is carried over between accepted
/// steps; call [`Dopri::reset`] whenever the state is modified externally.
pub struct Dopri {
    k: [Vec<C64>; 7],
    stage: Vec<C64>,
    y_new: Vec<C64>,
    fresh: bool,
    pub h: f64,
    pub rejected: usize,
    pub accepted: usize,
}

impl Dopri {
    pub fn new(dim: usize, control: &StepControl) -> Self {
        Dopri {
            k: std::array::from_fn(|_| vec![ZERO; dim]),
            stage: vec![ZERO; dim],
            y_new: vec![ZERO; dim],
            fresh: false,
            h: 0.1 * control.h_max,
            rejected: 0,
            accepted: 0,
        }
    }

    pub fn reset(&mut self) {
        self.fresh = false;
    }

    fn combine(&mut self, y: &[C64], h: f64, coeffs: &[f64]) {
        self.stage.copy_from_slice(y);
        for (j, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let s = h * a;
            for (out, k) in self.stage.iter_mut().zip(&self.k[j]) {
                *out += k * s;
            }
        }
    }

    /// Evaluates stages 2..7 for a step of size `h` and leaves the fifth-order
    /// solution in `y_new`. Returns the weighted RMS error estimate.
    fn trial<F>(&mut self, f: &mut F, t: f64, y: &[C64], h: f64, control: &StepControl) -> f64
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        if !self.fresh {
            f(t, y, &mut self.k[0]);
            self.fresh = true;
        }
        let rows: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (s, coeffs) in rows.iter().enumerate() {
            self.combine(y, h, coeffs);
            f(t + C[s + 1] * h, &self.stage, &mut self.k[s + 1]);
        }
        self.combine(y, h, &B);
        std::mem::swap(&mut self.stage, &mut self.y_new);
        f(t + h, &self.y_new, &mut self.k[6]);

        let mut acc = 0.0;
        for i in 0..y.len() {
            let mut e = ZERO;
            for (j, &ej) in E.iter().enumerate() {
                if ej != 0.0 {
                    e += self.k[j][i] * ej;
                }
            }
            let scale = control.atol + control.rtol * y[i].norm().max(self.y_new[i].norm());
            acc += (e.norm() * h / scale).powi(2);
        }
        (acc / y.len().max(1) as f64).sqrt()
    }

    /// Single step of exactly `h` without error control, written to `out`.
    /// Used to re-integrate a sub-interval of an accepted step.
    pub fn fixed_step<F>(&mut self, f: &mut F, t: f64, y: &[C64], h: f64, out: &mut [C64])
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let control = StepControl::new(1.0, h);
        let carried = self.fresh.then(|| self.k[0].clone());
        self.fresh = false;
        self.trial(f, t, y, h, &control);
        out.copy_from_slice(&self.y_new);
        match carried {
            Some(k0) => self.k[0] = k0,
            None => self.fresh = false,
        }
    }

    /// Takes one accepted step from `t` towards `t_end` (never past it),
    /// updating `t` and `y` in place.
    pub fn advance<F>(
        &mut self,
        f: &mut F,
        t: &mut f64,
        y: &mut [C64],
        t_end: f64,
        control: &StepControl,
    ) -> Result<()>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let span = t_end - *t;
        if span <= 0.0 {
            return Ok(());
        }
        let mut failures = 0;
        loop {
            let mut h = self.h.min(control.h_max);
            let last = h >= span * (1.0 - 1e-12);
            if last {
                h = span;
            }
            let err = self.trial(f, *t, y, h, control);
            if err.is_finite() && err <= 1.0 {
                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 6);
                *t = if last { t_end } else { *t + h };
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || factor < 1.0 {
                    self.h = (h * factor).min(control.h_max);
                }
                self.accepted += 1;
                return Ok(());
            }
            self.rejected += 1;
            failures += 1;
            let factor = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            self.h = h * factor;
            if failures > 60 || self.h < 1e-12 * control.h_max.max(1.0) {
                return Err(Error::Numerical(format!(
                    "integrator step size collapsed at t = {t:.4} ns; lower numerics.dt or numerics.tolerance"
                )));
            }
        }
    }

    /// Integrates to `t_end` exactly.
    pub fn integrate<F>(
        &mut self,
        f: &mut F,
        t: &mut f64,
        y: &mut [C64],
        t_end: f64,
        control: &StepControl,
    ) -> Result<()>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        while *t < t_end {
            self.advance(f, t, y, t_end, control)?;
        }
        Ok(())
    }
}
