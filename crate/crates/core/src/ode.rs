//! Adaptive Dormand-Prince 5(4) integrator for small autonomous systems.
//!
//! Each accepted step yields a [`Segment`] carrying cubic Hermite dense output,
//! which callers use for event location and resampling. Event handling lives
//! with the callers: they inspect each segment and restart from a located
//! point when the dynamics change.

use crate::error::{Error, Result};

/// Integrator settings shared by barrier tracing, simulation and the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub atol: f64,
    pub rtol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            atol: 1e-10,
            rtol: 1e-10,
            h_init: 1e-3,
            h_max: 1.0,
            h_min: 1e-14,
        }
    }
}

// Dormand-Prince tableau. Nodes are omitted: every right-hand side here is autonomous.
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
// b - b*, the embedded error weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += c * k[i];
        }
    }
    out
}

/// One accepted step with Hermite dense output.
#[derive(Debug, Clone, Copy)]
pub struct Segment<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    pub f0: [f64; N],
    pub f1: [f64; N],
}

impl<const N: usize> Segment<N> {
    pub fn h(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Cubic Hermite interpolant; exact at both ends.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let h = self.h();
        if h == 0.0 {
            return self.y0;
        }
        let s = (t - self.t0) / h;
        if s <= 0.0 {
            return self.y0;
        }
        if s >= 1.0 {
            return self.y1;
        }
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        std::array::from_fn(|i| h00 * self.y0[i] + h10 * h * self.f0[i] + h01 * self.y1[i] + h11 * h * self.f1[i])
    }

    /// Largest value of component `i` of the interpolant and the time where
    /// it occurs.
    pub fn max_component(&self, i: usize) -> (f64, f64) {
        let h = self.h();
        let mut best = if self.y1[i] >= self.y0[i] {
            (self.t1, self.y1[i])
        } else {
            (self.t0, self.y0[i])
        };
        if h == 0.0 {
            return best;
        }
        // Derivative of the cubic in s = (t - t0) / h is a s^2 + b s + c.
        let (y0, y1, d0, d1) = (self.y0[i], self.y1[i], h * self.f0[i], h * self.f1[i]);
        let a = 6.0 * (y0 - y1) + 3.0 * (d0 + d1);
        let b = 6.0 * (y1 - y0) - 4.0 * d0 - 2.0 * d1;
        let c = d0;
        let mut roots = [f64::NAN; 2];
        if a.abs() < 1e-300 {
            if b != 0.0 {
                roots[0] = -c / b;
            }
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let q = -0.5 * (b + b.signum() * disc.sqrt());
                roots = [q / a, if q != 0.0 { c / q } else { f64::NAN }];
            }
        }
        for s in roots {
            if s > 0.0 && s < 1.0 {
                let t = self.t0 + s * h;
                let v = self.eval(t)[i];
                if v > best.1 {
                    best = (t, v);
                }
            }
        }
        best
    }

    /// Smallest value of component `i` and the time where it occurs.
    pub fn min_component(&self, i: usize) -> (f64, f64) {
        let mut neg = *self;
        for v in [&mut neg.y0, &mut neg.y1, &mut neg.f0, &mut neg.f1] {
            v[i] = -v[i];
        }
        let (t, v) = neg.max_component(i);
        (t, -v)
    }

    /// Locates the first zero of `g` along the dense output, assuming
    /// `g(y0)` and `g(y1)` have opposite signs (or `g(y1) == 0`). Bisects
    /// until the bracket in `t` is below `t_tol`; returns the time on the
    /// far side of the sign change together with the state there.
    pub fn locate<G: Fn(&[f64; N]) -> f64>(&self, g: G, t_tol: f64) -> (f64, [f64; N]) {
        self.locate_before(g, self.t1, t_tol)
    }

    /// As [`Segment::locate`], with the sign change bracketed by `t0` and `t_hi`.
    pub fn locate_before<G: Fn(&[f64; N]) -> f64>(&self, g: G, t_hi: f64, t_tol: f64) -> (f64, [f64; N]) {
        let g0 = g(&self.y0);
        let mut lo = self.t0;
        let mut hi = t_hi.min(self.t1);
        while hi - lo > t_tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let gm = g(&self.eval(mid));
            if (gm > 0.0) == (g0 > 0.0) && gm != 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let y = if hi == self.t1 { self.y1 } else { self.eval(hi) };
        (hi, y)
    }
}

/// Stateful stepper; remembers the step size between calls.
#[derive(Debug, Clone)]
pub struct Integrator {
    settings: Settings,
    h: f64,
}

impl Integrator {
    pub fn new(settings: Settings) -> Self {
        Integrator {
            h: settings.h_init.min(settings.h_max),
            settings,
        }
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    /// Resets the step size to its initial value, as after a discontinuity.
    pub fn restart(&mut self) {
        self.h = self.settings.h_init.min(self.settings.h_max);
    }

    /// Advances one accepted step from `(t, y)` without passing `t_end`.
    pub fn step<const N: usize, F>(&mut self, rhs: &F, t: f64, y: &[f64; N], t_end: f64) -> Result<Segment<N>>
    where
        F: Fn(&[f64; N]) -> [f64; N],
    {
        let k1 = rhs(y);
        loop {
            let remaining = t_end - t;
            let h = self.h.min(self.settings.h_max).min(remaining);
            if h < self.settings.h_min && h < remaining {
                return Err(Error::StepSizeUnderflow { t });
            }
            let k2 = rhs(&axpy(y, &[(h * A21, &k1)]));
            let k3 = rhs(&axpy(y, &[(h * A31, &k1), (h * A32, &k2)]));
            let k4 = rhs(&axpy(y, &[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)]));
            let k5 = rhs(&axpy(
                y,
                &[(h * A51, &k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)],
            ));
            let k6 = rhs(&axpy(
                y,
                &[
                    (h * A61, &k1),
                    (h * A62, &k2),
                    (h * A63, &k3),
                    (h * A64, &k4),
                    (h * A65, &k5),
                ],
            ));
            let y1 = axpy(
                y,
                &[
                    (h * B1, &k1),
                    (h * B3, &k3),
                    (h * B4, &k4),
                    (h * B5, &k5),
                    (h * B6, &k6),
                ],
            );
            let k7 = rhs(&y1);

            let mut err = 0.0f64;
            for i in 0..N {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.settings.atol + self.settings.rtol * y[i].abs().max(y1[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                self.h = h * MIN_FACTOR;
                continue;
            }
            let factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            if err <= 1.0 {
                // Keep the proposal from a full step when the last one was clipped by t_end.
                self.h = (h * factor)
                    .max(if h < self.h { self.h } else { 0.0 })
                    .min(self.settings.h_max);
                let t1 = if h == remaining { t_end } else { t + h };
                return Ok(Segment {
                    t0: t,
                    t1,
                    y0: *y,
                    y1,
                    f0: k1,
                    f1: k7,
                });
            }
            self.h = h * factor.min(1.0);
        }
    }

    /// Integrates from `t0` to `t1`, returning only the final state.
    pub fn integrate<const N: usize, F>(&mut self, rhs: &F, t0: f64, y0: [f64; N], t1: f64) -> Result<[f64; N]>
    where
        F: Fn(&[f64; N]) -> [f64; N],
    {
        let mut t = t0;
        let mut y = y0;
        while t < t1 {
            let seg = self.step(rhs, t, &y, t1)?;
            t = seg.t1;
            y = seg.y1;
        }
        Ok(y)
    }
}
