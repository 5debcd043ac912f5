//! Adaptive Dormand–Prince 5(4) integration of matrix-valued ODEs.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::hilbert::C64;

#[derive(Clone, Copy, Debug)]
pub struct Dp5Options {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    /// Abort once the step shrinks below this.
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for Dp5Options {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, h_max: f64::INFINITY, h_min: 1e-12, max_steps: 10_000_000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Dp5Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl std::ops::AddAssign for Dp5Stats {
    fn add_assign(&mut self, o: Self) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.evaluations += o.evaluations;
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1` in place.
///
/// `h` carries the step size between calls so consecutive intervals reuse
/// the controller state. The error norm is the RMS of the local error scaled
/// by `atol + rtol·max(|y|, |y_new|)`.
pub fn dp5<F>(mut f: F, t0: f64, t1: f64, y: &mut Array2<C64>, h: &mut f64, opts: &Dp5Options) -> Result<Dp5Stats>
where
    F: FnMut(f64, &Array2<C64>, &mut Array2<C64>),
{
    let mut stats = Dp5Stats::default();
    if t1 <= t0 {
        return Ok(stats);
    }
    let shape = y.raw_dim();
    let mut k: Vec<Array2<C64>> = (0..7).map(|_| Array2::zeros(shape)).collect();
    let mut stage = Array2::zeros(shape);
    let mut y_new = Array2::zeros(shape);
    let mut err_est = Array2::<C64>::zeros(shape);
    let mut t = t0;
    if !(*h > 0.0) || !h.is_finite() {
        *h = ((t1 - t0) / 100.0).min(opts.h_max);
    }
    f(t, y, &mut k[0]);
    stats.evaluations += 1;
    let n = y.len() as f64;
    while t < t1 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::Integration { t, reason: format!("exceeded {} steps", opts.max_steps) });
        }
        let last = t + *h >= t1;
        let step = if last { t1 - t } else { h.min(opts.h_max) };
        for s in 1..7 {
            stage.assign(y);
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    stage.scaled_add(C64::new(step * a, 0.0), kj);
                }
            }
            f(t + C[s] * step, &stage, &mut k[s]);
            stats.evaluations += 1;
        }
        // the last stage point is the fifth-order solution
        y_new.assign(&stage);
        err_est.fill(C64::new(0.0, 0.0));
        for (j, kj) in k.iter().enumerate() {
            if E[j] != 0.0 {
                err_est.scaled_add(C64::new(step * E[j], 0.0), kj);
            }
        }
        let mut sum = 0.0;
        Zip::from(&err_est).and(&*y).and(&y_new).for_each(|e, a, b| {
            let sc = opts.atol + opts.rtol * a.norm().max(b.norm());
            sum += (e.norm() / sc).powi(2);
        });
        let err = (sum / n).sqrt();
        if err <= 1.0 {
            t = if last { t1 } else { t + step };
            std::mem::swap(y, &mut y_new);
            let (first, rest) = k.split_at_mut(1);
            std::mem::swap(&mut first[0], &mut rest[5]);
            stats.accepted += 1;
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !last || step >= *h {
                *h = (step * grow).min(opts.h_max);
            }
        } else {
            stats.rejected += 1;
            *h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if *h < opts.h_min {
                return Err(Error::Integration {
                    t,
                    reason: format!("step size {:.3e} fell below the floor {:.3e} (error norm {err:.3e})", *h, opts.h_min),
                });
            }
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut y = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
        let mut h = 0.0;
        let stats = dp5(|_, y, dy| dy.assign(&y.mapv(|z| -z)), 0.0, 5.0, &mut y, &mut h, &Dp5Options::default()).unwrap();
        assert!((y[[0, 0]].re - (-5.0f64).exp()).abs() < 1e-9);
        assert!(stats.accepted > 0);
    }

    #[test]
    fn harmonic_oscillator_phase() {
        // dy/dt = −i ω y
        let w = 3.0;
        let mut y = Array2::from_elem((2, 1), C64::new(1.0, 0.0));
        let mut h = 0.0;
        let opts = Dp5Options { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        dp5(|_, y, dy| dy.assign(&y.mapv(|z| z * C64::new(0.0, -w))), 0.0, 10.0, &mut y, &mut h, &opts).unwrap();
        let exact = C64::new(0.0, -w * 10.0).exp();
        assert!((y[[0, 0]] - exact).norm() < 1e-8);
    }

    #[test]
    fn lands_exactly_on_endpoints() {
        let mut y = Array2::from_elem((1, 1), C64::new(0.0, 0.0));
        let mut h = 0.0;
        let opts = Dp5Options::default();
        for k in 0..10 {
            let (a, b) = (k as f64 * 0.37, (k + 1) as f64 * 0.37);
            dp5(|_, _, dy| dy.fill(C64::new(1.0, 0.0)), a, b, &mut y, &mut h, &opts).unwrap();
        }
        assert!((y[[0, 0]].re - 3.7).abs() < 1e-13);
    }

    #[test]
    fn stiff_problem_hits_step_floor() {
        let mut y = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
        let mut h = 1.0;
        let opts = Dp5Options { h_min: 1e-3, ..Default::default() };
        let r = dp5(|_, y, dy| dy.assign(&y.mapv(|z| z * 1e6)), 0.0, 1.0, &mut y, &mut h, &opts);
        assert!(matches!(r, Err(Error::Integration { .. })));
    }
}
