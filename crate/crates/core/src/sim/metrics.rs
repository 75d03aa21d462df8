use super::Trajectory;
use crate::error::{Error, Result};
use crate::model::Equilibrium;

/// Below this half peak-to-trough the signal is treated as constant.
const FLAT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CycleMetrics {
    /// Half peak-to-trough per component over the post-transient window.
    pub amplitude: [f64; 3],
    /// Mean spacing of `x3` maxima, when at least four regular peaks exist.
    pub period: Option<f64>,
    pub decaying: bool,
    pub period_rel_err_bound: f64,
}

/// Local maxima `(time, value)` with parabolic refinement.
fn peaks(times: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    if values.len() < 3 {
        return out;
    }
    let dt = times[1] - times[0];
    for i in 1..values.len() - 1 {
        let (y0, y1, y2) = (values[i - 1], values[i], values[i + 1]);
        if y1 > y0 && y1 >= y2 {
            let denom = y0 - 2.0 * y1 + y2;
            let delta = if denom != 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
            out.push((times[i] + delta * dt, y1 - 0.25 * (y0 - y2) * delta));
        }
    }
    out
}

pub fn limit_cycle_metrics(traj: &Trajectory, eq: &Equilibrium, transient_fraction: f64) -> Result<CycleMetrics> {
    let start = ((traj.len() as f64) * transient_fraction).floor() as usize;
    if traj.len() < start + 16 {
        return Err(Error::TooShort(format!(
            "{} samples after discarding the first {start}",
            traj.len().saturating_sub(start)
        )));
    }
    let window = &traj.states[start..];
    let times = &traj.times[start..];

    let mut amplitude = [0.0; 3];
    for (c, amp) in amplitude.iter_mut().enumerate() {
        let (lo, hi) = window
            .iter()
            .map(|s| s[c])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        *amp = 0.5 * (hi - lo);
    }
    if amplitude.iter().all(|a| *a < FLAT) {
        return Ok(CycleMetrics {
            amplitude,
            period: None,
            decaying: true,
            period_rel_err_bound: 0.0,
        });
    }

    let x3: Vec<f64> = window.iter().map(|s| s[2]).collect();
    let pk = peaks(times, &x3);

    let mut period = None;
    let mut period_rel_err_bound = f64::INFINITY;
    if pk.len() >= 4 {
        let spacing: Vec<f64> = pk.windows(2).map(|w| w[1].0 - w[0].0).collect();
        let mean = spacing.iter().sum::<f64>() / spacing.len() as f64;
        let (lo, hi) = spacing
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(*s), hi.max(*s)));
        if (hi - lo) < 0.05 * mean {
            period = Some(mean);
            period_rel_err_bound = 0.5 * (hi - lo) / mean + traj.dt / mean;
        }
    }

    let heights: Vec<f64> = pk.iter().map(|(_, v)| v - eq.x3).collect();
    let decaying = if heights.len() >= 2 {
        heights.iter().all(|h| *h > 0.0) && heights.windows(2).all(|w| w[1] <= 0.98 * w[0])
    } else {
        let first = (x3[0] - eq.x3).abs();
        let last = (x3[x3.len() - 1] - eq.x3).abs();
        last < first
    };

    Ok(CycleMetrics {
        amplitude,
        period,
        decaying,
        period_rel_err_bound,
    })
}

/// Exponential rate of small deviations from `eq` on `[t_from, t_to]`.
///
/// Fits a line to the logarithm of the local maxima of `|x(t) - eq|^2` and
/// returns half its slope, i.e. an estimate of the leading root's real part.
pub fn growth_rate(traj: &Trajectory, eq: &Equilibrium, t_from: f64, t_to: f64) -> Option<f64> {
    let target = eq.as_array();
    let (times, sq): (Vec<f64>, Vec<f64>) = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| **t >= t_from && **t <= t_to)
        .map(|(t, s)| {
            let d: f64 = s.iter().zip(&target).map(|(x, y)| (x - y) * (x - y)).sum();
            (*t, d)
        })
        .unzip();
    let pts: Vec<(f64, f64)> = peaks(&times, &sq)
        .into_iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|(t, v)| (t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    Some(0.5 * sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn eq() -> Equilibrium {
        Equilibrium { x1: 0.5, x2: 0.1, x3: 0.09 }
    }

    fn synthetic(dt: f64, t_end: f64, f: impl Fn(f64) -> f64) -> Trajectory {
        let n = (t_end / dt).round() as usize;
        let e = eq();
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
        let states = times.iter().map(|&t| [e.x1, e.x2, f(t)]).collect();
        Trajectory { dt, times, states }
    }

    #[test]
    fn constant_signal() {
        let tr = synthetic(0.01, 10.0, |_| eq().x3);
        let m = limit_cycle_metrics(&tr, &eq(), 0.5).unwrap();
        assert!(m.amplitude.iter().all(|a| *a < 1e-8));
        assert!(m.period.is_none());
        assert!(m.decaying);
    }

    #[test]
    fn sine_period() {
        let period = 14.2;
        let tr = synthetic(1e-2, 400.0, |t| eq().x3 + 0.01 * (2.0 * PI * t / period).sin());
        let m = limit_cycle_metrics(&tr, &eq(), 0.5).unwrap();
        let p = m.period.unwrap();
        assert!((p - period).abs() < 1e-3 * period, "{p}");
        assert!((m.amplitude[2] - 0.01).abs() < 1e-6);
        assert!(!m.decaying);
    }

    #[test]
    fn damped_and_growing() {
        let w = 0.44;
        let d = synthetic(1e-2, 400.0, |t| eq().x3 + 1e-3 * (-0.02 * t).exp() * (w * t).sin());
        assert!(limit_cycle_metrics(&d, &eq(), 0.5).unwrap().decaying);
        let g = synthetic(1e-2, 400.0, |t| eq().x3 + 1e-6 * (0.01 * t).exp() * (w * t).sin());
        assert!(!limit_cycle_metrics(&g, &eq(), 0.5).unwrap().decaying);

        // slope of the fitted envelope recovers the rate
        let r = growth_rate(&d, &eq(), 50.0, 350.0).unwrap();
        assert!((r + 0.02).abs() < 1e-3 * 0.02, "{r}");
    }

    #[test]
    fn too_short() {
        let tr = synthetic(1.0, 5.0, |_| 0.09);
        assert!(matches!(limit_cycle_metrics(&tr, &eq(), 0.5), Err(Error::TooShort(_))));
    }
}
