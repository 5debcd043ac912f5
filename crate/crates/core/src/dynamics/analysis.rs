//! Metrics read off sampled trajectories.

use serde::Serialize;

use super::TrajectoryResult;
use crate::error::{Error, Result};

/// Relative amplitude below which a signal counts as flat.
pub const FLAT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct PeriodEstimate {
    /// Twice the time of the first minimum.
    pub period: f64,
    pub first_minimum: f64,
    /// Value of the signal at the refined minimum.
    pub minimum_value: f64,
    /// Period of the dominant nonzero frequency in the discrete spectrum.
    pub spectral_period: f64,
}

impl PeriodEstimate {
    pub fn disagreement(&self) -> f64 {
        (self.spectral_period - self.period).abs() / self.period
    }
}

/// Vertex of the parabola through three equally spaced samples, as an offset
/// in units of the spacing from the middle sample, and the value there.
fn parabola_vertex(y0: f64, y1: f64, y2: f64) -> (f64, f64) {
    let den = y0 - 2.0 * y1 + y2;
    if den.abs() < 1e-300 {
        return (0.0, y1);
    }
    let x = (0.5 * (y0 - y2) / den).clamp(-1.0, 1.0);
    (x, y1 + 0.25 * (y2 - y0) * x)
}

/// Frequency with the largest DFT power after the mean is removed.
fn dominant_frequency(t: &[f64], y: &[f64]) -> f64 {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let span = t[n - 1] - t[0];
    let dt = span / (n - 1) as f64;
    let power = |f: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (ti, yi) in t.iter().zip(y) {
            let ph = 2.0 * std::f64::consts::PI * f * ti;
            re += (yi - mean) * ph.cos();
            im += (yi - mean) * ph.sin();
        }
        re * re + im * im
    };
    let df = 1.0 / (8.0 * span);
    let (f_lo, f_hi) = (0.5 / span, 0.5 / dt);
    let mut best = (f_lo, power(f_lo));
    let mut f = f_lo;
    while f <= f_hi {
        let p = power(f);
        if p > best.1 {
            best = (f, p);
        }
        f += df;
    }
    let lo = (best.0 - df).max(f_lo * 0.5);
    let hi = best.0 + df;
    crate::spectrum::golden_section(|f| Ok(-power(f)), lo, hi, 1e-10 * hi).map_or(best.0, |r| r.0)
}

/// Oscillation period of a signal that starts at a maximum.
///
/// The first local minimum after the signal crosses its midline and before it
/// recovers above it is refined by a parabola through the neighbouring
/// samples; the period is twice its time. The dominant DFT frequency is
/// computed alongside and a disagreement above 10% is logged.
pub fn extract_period(traj: &TrajectoryResult, observable: &str) -> Result<PeriodEstimate> {
    let y = traj.series(observable)?;
    let t = &traj.times;
    if y.len() < 3 {
        return Err(Error::NoOscillation(format!("{observable}: fewer than three samples")));
    }
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= FLAT_TOL * hi.abs().max(1.0) {
        return Err(Error::NoOscillation(format!("{observable} is flat (range {:.3e})", hi - lo)));
    }
    let mid = 0.5 * (lo + hi);
    let below = y
        .iter()
        .position(|&v| v < mid)
        .ok_or_else(|| Error::NoOscillation(format!("{observable} never drops below its midline")))?;
    let recover = y[below..]
        .iter()
        .position(|&v| v > mid)
        .map(|k| k + below)
        .ok_or_else(|| Error::NoOscillation(format!("{observable} does not recover within the trajectory")))?;
    let start = below.saturating_sub(1);
    let (k, _) = y[start..recover]
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bk, bv), (k, &v)| if v < bv { (k, v) } else { (bk, bv) });
    let k = (k + start).clamp(1, y.len() - 2);
    let dt = t[k + 1] - t[k];
    let (x, v) = parabola_vertex(y[k - 1], y[k], y[k + 1]);
    let first_minimum = t[k] + x * dt;
    let period = 2.0 * (first_minimum - t[0]);
    let spectral_period = 1.0 / dominant_frequency(t, y);
    let est = PeriodEstimate { period, first_minimum, minimum_value: v, spectral_period };
    if est.disagreement() > 0.1 {
        log::warn!(
            "{observable}: first-minimum period {period:.4} and spectral period {spectral_period:.4} differ by {:.1}%",
            100.0 * est.disagreement()
        );
    }
    Ok(est)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Checkpoint {
    pub time: f64,
    pub p_initial: f64,
    pub p_target: f64,
    pub coherence: f64,
}

fn interpolate(t: &[f64], y: &[f64], at: f64) -> f64 {
    let n = t.len();
    if n == 1 {
        return y[0];
    }
    let k = t.partition_point(|&s| s < at).clamp(1, n - 1);
    if n == 2 {
        let w = (at - t[0]) / (t[1] - t[0]);
        return y[0] + w * (y[1] - y[0]);
    }
    // three-point Lagrange on the stencil nearest `at`
    let c = if k + 1 >= n { n - 2 } else if at - t[k - 1] < t[k] - at { k - 1 } else { k };
    let c = c.clamp(1, n - 2);
    let (x0, x1, x2) = (t[c - 1], t[c], t[c + 1]);
    let l0 = (at - x1) * (at - x2) / ((x0 - x1) * (x0 - x2));
    let l1 = (at - x0) * (at - x2) / ((x1 - x0) * (x1 - x2));
    let l2 = (at - x0) * (at - x1) / ((x2 - x0) * (x2 - x1));
    l0 * y[c - 1] + l1 * y[c] + l2 * y[c + 1]
}

/// Populations of the initial and target states and their coherence at `t`.
pub fn entanglement_checkpoint(traj: &TrajectoryResult, t: f64) -> Result<Checkpoint> {
    let (start, end) = (traj.times[0], *traj.times.last().expect("nonempty"));
    if !(t >= start && t <= end) {
        return Err(Error::OutsideTrajectory { t, start, end });
    }
    let at = |name: &str| -> Result<f64> { Ok(interpolate(&traj.times, traj.series(name)?, t)) };
    Ok(Checkpoint { time: t, p_initial: at("p_initial")?, p_target: at("p_target")?, coherence: at("coherence")? })
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryMetrics {
    pub period: Option<PeriodEstimate>,
    /// Maximum of the target-state population.
    pub peak_transfer: Option<f64>,
    /// Largest third-level population of any atom.
    pub max_leakage: f64,
    pub max_photons: f64,
}

impl TrajectoryMetrics {
    /// Metrics with the period taken from `observable`.
    pub fn from_trajectory(traj: &TrajectoryResult, observable: &str) -> Self {
        let max_of = |prefix: &str| {
            traj.names
                .iter()
                .zip(&traj.values)
                .filter(|(n, _)| n.starts_with(prefix))
                .flat_map(|(_, v)| v.iter().copied())
                .fold(0.0f64, f64::max)
        };
        Self {
            period: extract_period(traj, observable).ok(),
            peak_transfer: traj.series("p_target").ok().map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            max_leakage: max_of("third_level_"),
            max_photons: max_of("photons_"),
        }
    }
}
