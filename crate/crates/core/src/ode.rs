//! Dormand–Prince 5(4) integrator with dense output for small complex systems.

use num_complex::Complex64;

use crate::{Error, Result};

type C = Complex64;

/// Step-size control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step the controller may take.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-8,
            atol: 1e-10,
            h_max: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
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

/// Dense-output coefficients of the last accepted step.
#[derive(Debug, Clone, Copy)]
struct Dense<const N: usize> {
    t0: f64,
    h: f64,
    r: [[C; N]; 5],
}

/// Adaptive integrator for `y' = f(t, y)` with `y ∈ ℂᴺ`.
pub struct Dopri5<const N: usize, F> {
    f: F,
    opts: OdeOptions,
    t: f64,
    y: [C; N],
    k1: [C; N],
    h: f64,
    steps: usize,
    dense: Option<Dense<N>>,
}

fn axpy<const N: usize>(y: &[C; N], terms: &[(f64, &[C; N])], h: f64) -> [C; N] {
    let mut out = *y;
    for (c, k) in terms {
        let s = c * h;
        for i in 0..N {
            out[i] += k[i] * s;
        }
    }
    out
}

impl<const N: usize, F> Dopri5<N, F>
where
    F: FnMut(f64, &[C; N], &mut [C; N]),
{
    pub fn new(mut f: F, t0: f64, y0: [C; N], opts: OdeOptions) -> Self {
        let mut k1 = [C::new(0.0, 0.0); N];
        f(t0, &y0, &mut k1);
        Dopri5 {
            f,
            opts,
            t: t0,
            y: y0,
            k1,
            h: 0.0,
            steps: 0,
            dense: None,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[C; N] {
        &self.y
    }

    /// Restarts from a new state, keeping the current step-size estimate.
    pub fn reset(&mut self, t: f64, y: [C; N]) {
        self.t = t;
        self.y = y;
        (self.f)(t, &self.y, &mut self.k1);
        self.dense = None;
    }

    fn scale(&self, a: &[C; N], b: &[C; N]) -> [f64; N] {
        let mut s = [0.0; N];
        for i in 0..N {
            s[i] = self.opts.atol + self.opts.rtol * a[i].norm().max(b[i].norm());
        }
        s
    }

    fn initial_step(&mut self, span: f64) -> f64 {
        let sc = self.scale(&self.y, &self.y);
        let norm = |v: &[C; N]| -> f64 {
            (v.iter().zip(&sc).map(|(x, s)| (x.norm() / s).powi(2)).sum::<f64>() / N as f64).sqrt()
        };
        let d0 = norm(&self.y);
        let d1 = norm(&self.k1);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let y1 = axpy(&self.y, &[(1.0, &self.k1)], h0);
        let mut f1 = [C::new(0.0, 0.0); N];
        (self.f)(self.t + h0, &y1, &mut f1);
        let mut diff = [C::new(0.0, 0.0); N];
        for i in 0..N {
            diff[i] = f1[i] - self.k1[i];
        }
        let d2 = norm(&diff) / h0;
        let d = d1.max(d2);
        let h1 = if d <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.opts.h_max).min(span)
    }

    /// Takes one accepted step, never passing `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<()> {
        let span = t_limit - self.t;
        if span <= 0.0 {
            return Ok(());
        }
        if self.h <= 0.0 {
            self.h = self.initial_step(span);
        }
        loop {
            self.steps += 1;
            if self.steps > self.opts.max_steps {
                return Err(Error::Integration {
                    t: self.t,
                    reason: format!("exceeded {} steps", self.opts.max_steps),
                });
            }
            let mut h = self.h.min(self.opts.h_max);
            let last = h >= span * (1.0 - 1e-12);
            if last {
                h = span;
            }
            let min_h = 1e-13 * self.t.abs().max(1.0);
            if h < min_h {
                return Err(Error::Integration {
                    t: self.t,
                    reason: format!("step size {h:e} underflowed"),
                });
            }
            let (t, y, k1) = (self.t, self.y, self.k1);
            let f = &mut self.f;
            let mut k2 = [C::new(0.0, 0.0); N];
            let mut k3 = k2;
            let mut k4 = k2;
            let mut k5 = k2;
            let mut k6 = k2;
            let mut k7 = k2;
            f(t + C2 * h, &axpy(&y, &[(A21, &k1)], h), &mut k2);
            f(t + C3 * h, &axpy(&y, &[(A31, &k1), (A32, &k2)], h), &mut k3);
            f(
                t + C4 * h,
                &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h),
                &mut k4,
            );
            f(
                t + C5 * h,
                &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h),
                &mut k5,
            );
            f(
                t + h,
                &axpy(
                    &y,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                    h,
                ),
                &mut k6,
            );
            let y_new = axpy(
                &y,
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
                h,
            );
            let t_new = if last { t_limit } else { t + h };
            f(t_new, &y_new, &mut k7);

            let sc = self.scale(&y, &y_new);
            let mut err = 0.0;
            for i in 0..N {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7)
                    * h;
                err += (e.norm() / sc[i]).powi(2);
            }
            let err = (err / N as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Integration {
                    t,
                    reason: "non-finite error estimate".into(),
                });
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                let mut r = [[C::new(0.0, 0.0); N]; 5];
                for i in 0..N {
                    let dy = y_new[i] - y[i];
                    let bspl = k1[i] * h - dy;
                    r[0][i] = y[i];
                    r[1][i] = dy;
                    r[2][i] = bspl;
                    r[3][i] = dy - k7[i] * h - bspl;
                    r[4][i] = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6
                        + k7[i] * D7)
                        * h;
                }
                self.dense = Some(Dense { t0: t, h, r });
                self.t = t_new;
                self.y = y_new;
                self.k1 = k7;
                // a truncated final step says nothing about the natural step size
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
                return Ok(());
            }
            self.h = h * factor.min(1.0);
        }
    }

    /// Integrates up to exactly `t1`.
    pub fn advance_to(&mut self, t1: f64) -> Result<()> {
        while self.t < t1 {
            self.step(t1)?;
        }
        Ok(())
    }

    /// Interpolated state inside the last accepted step.
    pub fn dense_at(&self, t: f64) -> [C; N] {
        let Some(d) = &self.dense else {
            return self.y;
        };
        let theta = ((t - d.t0) / d.h).clamp(0.0, 1.0);
        let theta1 = 1.0 - theta;
        let mut out = [C::new(0.0, 0.0); N];
        for i in 0..N {
            out[i] = d.r[0][i]
                + (d.r[1][i] + (d.r[2][i] + (d.r[3][i] + d.r[4][i] * theta1) * theta) * theta1)
                    * theta;
        }
        out
    }

    /// Start of the last accepted step, if any.
    pub fn last_step_start(&self) -> Option<f64> {
        self.dense.as_ref().map(|d| d.t0)
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1`.
pub fn integrate<const N: usize>(
    f: impl FnMut(f64, &[C; N], &mut [C; N]),
    t0: f64,
    y0: [C; N],
    t1: f64,
    opts: OdeOptions,
) -> Result<[C; N]> {
    if t1 < t0 {
        return Err(Error::Integration {
            t: t0,
            reason: format!("cannot integrate backwards to {t1}"),
        });
    }
    let mut solver = Dopri5::new(f, t0, y0, opts);
    solver.advance_to(t1)?;
    Ok(*solver.y())
}
