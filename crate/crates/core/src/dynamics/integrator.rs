//! Adaptive Dormand–Prince 5(4) integrator for complex state vectors.
//!
//! The step is truncated so every requested output time is hit exactly; no
//! interpolation is involved. Step control follows the PI scheme of Hairer,
//! Nørsett and Wanner with first-same-as-last reuse of the final stage.

use std::ops::ControlFlow;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

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

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Tolerances and step limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

/// Work counters of one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Largest scaled error estimate of an accepted step (≤ 1).
    pub max_error: f64,
    pub last_step: f64,
}

/// Integrates `y' = f(t, y)` from `times[0]` through every entry of `times`.
///
/// `observe(k, t, y)` runs at each output time (including the start) and may
/// stop the integration early. `check(t, y)` runs after every accepted step.
pub fn integrate<F, O, C>(
    y0: &[Complex64],
    times: &[f64],
    ctl: &StepControl,
    mut rhs: F,
    mut observe: O,
    mut check: C,
) -> Result<StepStats>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
    O: FnMut(usize, f64, &[Complex64]) -> Result<ControlFlow<()>>,
    C: FnMut(f64, &[Complex64]) -> Result<()>,
{
    let n = y0.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut stats = StepStats::default();
    let mut y = y0.to_vec();
    let mut t = times[0];
    if observe(0, t, &y)?.is_break() || times.len() == 1 {
        return Ok(stats);
    }

    let mut k1 = vec![zero; n];
    let mut k2 = vec![zero; n];
    let mut k3 = vec![zero; n];
    let mut k4 = vec![zero; n];
    let mut k5 = vec![zero; n];
    let mut k6 = vec![zero; n];
    let mut k7 = vec![zero; n];
    let mut tmp = vec![zero; n];
    let mut y_new = vec![zero; n];

    rhs(t, &y, &mut k1);
    stats.rhs_evals += 1;

    let span = times[times.len() - 1] - t;
    let mut h = initial_step(t, &y, &k1, ctl, span, &mut rhs, &mut tmp, &mut k2);
    stats.rhs_evals += 1;
    let mut err_old = 1e-4f64;
    let mut next = 1;

    while next < times.len() {
        if stats.accepted + stats.rejected >= ctl.max_steps {
            return Err(Error::StepUnderflow { t, step: h });
        }
        let target = times[next];
        let remaining = target - t;
        let capped = h.min(ctl.max_step);
        let hits_output = capped >= remaining;
        let step = if hits_output { remaining } else { capped };
        if step <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, step });
        }

        stage(&mut tmp, &y, step, &[(&k1, A21)]);
        rhs(t + C2 * step, &tmp, &mut k2);
        stage(&mut tmp, &y, step, &[(&k1, A31), (&k2, A32)]);
        rhs(t + C3 * step, &tmp, &mut k3);
        stage(&mut tmp, &y, step, &[(&k1, A41), (&k2, A42), (&k3, A43)]);
        rhs(t + C4 * step, &tmp, &mut k4);
        stage(
            &mut tmp,
            &y,
            step,
            &[(&k1, A51), (&k2, A52), (&k3, A53), (&k4, A54)],
        );
        rhs(t + C5 * step, &tmp, &mut k5);
        stage(
            &mut tmp,
            &y,
            step,
            &[(&k1, A61), (&k2, A62), (&k3, A63), (&k4, A64), (&k5, A65)],
        );
        let t_new = if hits_output { target } else { t + step };
        rhs(t_new, &tmp, &mut k6);
        stage(
            &mut y_new,
            &y,
            step,
            &[(&k1, A71), (&k3, A73), (&k4, A74), (&k5, A75), (&k6, A76)],
        );
        rhs(t_new, &y_new, &mut k7);
        stats.rhs_evals += 6;

        stage(
            &mut tmp,
            &[],
            step,
            &[
                (&k1, E1),
                (&k3, E3),
                (&k4, E4),
                (&k5, E5),
                (&k6, E6),
                (&k7, E7),
            ],
        );
        let mut acc = 0.0;
        for i in 0..n {
            let e = tmp[i];
            let scale = ctl.abs_tol + ctl.rel_tol * y[i].norm().max(y_new[i].norm());
            acc += (e.norm() / scale).powi(2);
        }
        let err = (acc / n as f64).sqrt();
        if !err.is_finite() {
            stats.rejected += 1;
            h = step * FAC_MIN;
            continue;
        }

        let fac11 = err.powf(0.2 - BETA * 0.75);
        if err <= 1.0 {
            let fac = (fac11 / err_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            err_old = err.max(1e-4);
            stats.accepted += 1;
            stats.max_error = stats.max_error.max(err);
            stats.last_step = step;
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            check(t, &y)?;
            let proposal = step / fac;
            // a truncated step says nothing about how large the next may be
            h = if hits_output {
                proposal.max(h)
            } else {
                proposal
            };
            if hits_output {
                if observe(next, t, &y)?.is_break() {
                    return Ok(stats);
                }
                next += 1;
            }
        } else {
            stats.rejected += 1;
            h = step / (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }
    Ok(stats)
}

/// `out = y + h Σ cᵢ kᵢ` on the interleaved real view; an empty `y` means
/// zero.
fn stage(out: &mut [Complex64], y: &[Complex64], h: f64, terms: &[(&[Complex64], f64)]) {
    let out: &mut [f64] = bytemuck::cast_slice_mut(out);
    if y.is_empty() {
        out.fill(0.0);
    } else {
        out.copy_from_slice(bytemuck::cast_slice(y));
    }
    for &(k, c) in terms {
        let k: &[f64] = bytemuck::cast_slice(k);
        let c = c * h;
        for (o, v) in out.iter_mut().zip(k) {
            *o += c * v;
        }
    }
}

fn scaled_norm(v: &[Complex64], y: &[Complex64], ctl: &StepControl) -> f64 {
    let acc: f64 = v
        .iter()
        .zip(y)
        .map(|(a, b)| (a.norm() / (ctl.abs_tol + ctl.rel_tol * b.norm())).powi(2))
        .sum();
    (acc / v.len() as f64).sqrt()
}

/// Starting step from the two-evaluation heuristic of Hairer et al.
#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    t0: f64,
    y: &[Complex64],
    f0: &[Complex64],
    ctl: &StepControl,
    span: f64,
    rhs: &mut F,
    y1: &mut [Complex64],
    f1: &mut [Complex64],
) -> f64
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    let d0 = scaled_norm(y, y, ctl);
    let d1 = scaled_norm(f0, y, ctl);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(ctl.max_step).min(span);
    for i in 0..y.len() {
        y1[i] = y[i] + f0[i] * h0;
    }
    rhs(t0 + h0, y1, f1);
    let diff: Vec<Complex64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled_norm(&diff, y, ctl) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(ctl.max_step).min(span)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctl(rel_tol: f64) -> StepControl {
        StepControl {
            rel_tol,
            abs_tol: rel_tol * 1e-2,
            max_step: 1.0,
            max_steps: 1_000_000,
        }
    }

    #[test]
    fn harmonic_oscillator_phase() {
        // y' = -i y, y(t) = e^{-it}
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
        let mut samples = Vec::new();
        integrate(
            &[Complex64::new(1.0, 0.0)],
            &times,
            &ctl(1e-10),
            |_, y, out| out[0] = Complex64::new(0.0, -1.0) * y[0],
            |_, t, y| {
                samples.push((t, y[0]));
                Ok(ControlFlow::Continue(()))
            },
            |_, _| Ok(()),
        )
        .unwrap();
        assert_eq!(samples.len(), times.len());
        for ((t, y), expect) in samples.iter().zip(&times) {
            assert_eq!(t, expect);
            assert!((y - Complex64::new(0.0, -t).exp()).norm() < 1e-8);
        }
    }

    #[test]
    fn tighter_tolerance_reduces_error() {
        let times = [0.0, 5.0];
        let run = |tol: f64| {
            let mut last = Complex64::new(0.0, 0.0);
            integrate(
                &[Complex64::new(1.0, 0.0)],
                &times,
                &ctl(tol),
                |t, y, out| out[0] = Complex64::new(-0.3, t.cos()) * y[0],
                |_, _, y| {
                    last = y[0];
                    Ok(ControlFlow::Continue(()))
                },
                |_, _| Ok(()),
            )
            .unwrap();
            last
        };
        let exact = Complex64::new(-1.5, 5f64.sin()).exp();
        assert!((run(1e-10) - exact).norm() < (run(1e-5) - exact).norm());
        assert!((run(1e-10) - exact).norm() < 1e-8);
    }

    #[test]
    fn early_stop_is_honoured() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let mut seen = 0;
        integrate(
            &[Complex64::new(1.0, 0.0)],
            &times,
            &ctl(1e-8),
            |_, y, out| out[0] = -y[0],
            |k, _, _| {
                seen += 1;
                Ok(if k == 3 {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                })
            },
            |_, _| Ok(()),
        )
        .unwrap();
        assert_eq!(seen, 4);
    }
}
