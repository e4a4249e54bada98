//! Dormand–Prince 5(4) integrator with PI step control and dense output.

use std::ops::{Add, AddAssign, Mul, Sub};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Field element the integrator can work on.
pub trait OdeScalar:
    Copy
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + AddAssign
    + Mul<f64, Output = Self>
    + Default
{
    fn modulus(self) -> f64;
}

impl OdeScalar for f64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl OdeScalar for C64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Tolerances and step limits.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            initial_step: 1e-3,
            max_step: f64::INFINITY,
        }
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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension of the last accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep<T> {
    pub t0: f64,
    pub h: f64,
    r: [Vec<T>; 5],
}

impl<T: OdeScalar> DenseStep<T> {
    /// State at `t` within `[t0, t0 + h]`, fourth-order accurate.
    pub fn eval(&self, t: f64, out: &mut [T]) {
        let th = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.r;
        for i in 0..out.len() {
            out[i] = r1[i] + (r2[i] + (r3[i] + (r4[i] + r5[i] * th1) * th) * th1) * th;
        }
    }
}

/// Adaptive integrator state for `y' = f(t, y)`.
pub struct DormandPrince<T, F> {
    f: F,
    opts: OdeOptions,
    pub t: f64,
    pub y: Vec<T>,
    h: f64,
    err_prev: f64,
    k: [Vec<T>; 7],
    tmp: Vec<T>,
    y_new: Vec<T>,
    fsal_valid: bool,
    pub accepted: usize,
    pub rejected: usize,
}

impl<T: OdeScalar, F: FnMut(f64, &[T], &mut [T])> DormandPrince<T, F> {
    pub fn new(f: F, t0: f64, y0: Vec<T>, opts: OdeOptions) -> Self {
        let n = y0.len();
        let z = || vec![T::default(); n];
        Self {
            f,
            h: opts.initial_step.min(opts.max_step),
            opts,
            t: t0,
            y: y0,
            err_prev: 1e-4,
            k: [z(), z(), z(), z(), z(), z(), z()],
            tmp: z(),
            y_new: z(),
            fsal_valid: false,
            accepted: 0,
            rejected: 0,
        }
    }

    /// Overrides the state, e.g. after a discontinuous jump.
    pub fn reset(&mut self, t: f64, y: Vec<T>) {
        self.t = t;
        self.y = y;
        self.fsal_valid = false;
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Takes one accepted step, not past `t_limit`. Returns its dense output.
    pub fn step(&mut self, t_limit: f64) -> Result<DenseStep<T>> {
        let n = self.y.len();
        if !self.fsal_valid {
            let (k0, _) = self.k.split_at_mut(1);
            (self.f)(self.t, &self.y, &mut k0[0]);
            self.fsal_valid = true;
        }
        loop {
            let remaining = t_limit - self.t;
            let mut h = self.h.min(self.opts.max_step);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if h <= 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::Stiffness { t: self.t, step: h });
            }
            let t = self.t;
            let y = &self.y;
            let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
            let tmp = &mut self.tmp;
            for i in 0..n {
                tmp[i] = y[i] + k1[i] * (h * A21);
            }
            (self.f)(t + C2 * h, tmp, k2);
            for i in 0..n {
                tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
            }
            (self.f)(t + C3 * h, tmp, k3);
            for i in 0..n {
                tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
            }
            (self.f)(t + C4 * h, tmp, k4);
            for i in 0..n {
                tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
            }
            (self.f)(t + C5 * h, tmp, k5);
            for i in 0..n {
                tmp[i] = y[i]
                    + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
            }
            (self.f)(t + h, tmp, k6);
            let y_new = &mut self.y_new;
            for i in 0..n {
                y_new[i] = y[i]
                    + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
            }
            (self.f)(t + h, y_new, k7);
            let mut err = 0.0;
            for i in 0..n {
                let e =
                    (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7)
                        * h;
                let sc =
                    self.opts.abs_tol + self.opts.rel_tol * y[i].modulus().max(y_new[i].modulus());
                let q = e.modulus() / sc;
                err += q * q;
            }
            let err = (err / n.max(1) as f64).sqrt();
            if err <= 1.0 {
                let fac = if err == 0.0 {
                    10.0
                } else {
                    (0.9 * err.powf(-0.7 / 5.0) * self.err_prev.powf(0.4 / 5.0)).clamp(0.2, 10.0)
                };
                self.err_prev = err.max(1e-4);
                let mut r5 = vec![T::default(); n];
                let mut r2 = vec![T::default(); n];
                let mut r3 = vec![T::default(); n];
                let mut r4 = vec![T::default(); n];
                for i in 0..n {
                    let dy = y_new[i] - y[i];
                    let bspl = k1[i] * h - dy;
                    r2[i] = dy;
                    r3[i] = bspl;
                    r4[i] = dy - k7[i] * h - bspl;
                    r5[i] = (k1[i] * D1
                        + k3[i] * D3
                        + k4[i] * D4
                        + k5[i] * D5
                        + k6[i] * D6
                        + k7[i] * D7)
                        * h;
                }
                let dense = DenseStep {
                    t0: t,
                    h,
                    r: [y.clone(), r2, r3, r4, r5],
                };
                std::mem::swap(&mut self.y, &mut self.y_new);
                std::mem::swap(k1, k7);
                self.t = if last { t_limit } else { t + h };
                if !last || fac < 1.0 {
                    self.h = h * fac;
                }
                self.accepted += 1;
                return Ok(dense);
            }
            self.rejected += 1;
            self.h = h * (0.9 * err.powf(-0.2)).max(0.2);
        }
    }

    /// Integrates through `times`, calling `sample(i, state)` at each.
    pub fn sample_at<S: FnMut(usize, &[T]) -> Result<()>>(
        &mut self,
        times: &[f64],
        mut sample: S,
    ) -> Result<()> {
        let mut buf = self.y.clone();
        let mut next = 0;
        while next < times.len() && times[next] <= self.t {
            sample(next, &self.y)?;
            next += 1;
        }
        let Some(&t_end) = times.last() else {
            return Ok(());
        };
        while next < times.len() {
            let dense = self.step(t_end)?;
            while next < times.len() && times[next] <= self.t {
                if times[next] == self.t {
                    sample(next, &self.y)?;
                } else {
                    dense.eval(times[next], &mut buf);
                    sample(next, &buf)?;
                }
                next += 1;
            }
        }
        Ok(())
    }
}
