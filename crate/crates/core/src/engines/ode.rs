//! Adaptive Dormand–Prince 5(4) integration of linear forward systems.
//!
//! Used as the alternative route for the forward Kolmogorov equations of the
//! exact engines. Error control follows the usual mixed absolute/relative RMS
//! norm with a 0.9 safety factor.

use crate::error::{Error, Result};

/// Right-hand side `dp/dt = f(p)` of an autonomous linear system.
pub trait LinearFlow {
    fn dim(&self) -> usize;
    fn derivative(&self, p: &[f64], dp: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-14,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

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
// difference between the 5th order and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates from `t = 0` to `t_end` and returns the state at `t_end`.
pub fn integrate<F: LinearFlow>(
    flow: &F,
    y0: &[f64],
    t_end: f64,
    opts: OdeOptions,
) -> Result<(Vec<f64>, OdeStats)> {
    let n = flow.dim();
    assert_eq!(y0.len(), n);
    let mut stats = OdeStats::default();
    let mut y = y0.to_vec();
    if t_end == 0.0 {
        return Ok((y, stats));
    }

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    flow.derivative(&y, &mut k1);
    let d0 = weighted_rms(&y, &y, opts);
    let d1 = weighted_rms(&k1, &y, opts);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(t_end).max(1e-12 * t_end);

    let mut t = 0.0;
    let mut steps = 0;
    while t < t_end {
        if steps >= opts.max_steps {
            return Err(Error::Numeric(format!(
                "ODE integration exceeded {} steps at t = {t}",
                opts.max_steps
            )));
        }
        steps += 1;
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        flow.derivative(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        flow.derivative(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        flow.derivative(&tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        flow.derivative(&tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        flow.derivative(&tmp, &mut k6);
        for i in 0..n {
            y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        flow.derivative(&y_new, &mut k7);

        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / n as f64).sqrt();

        if err <= 1.0 {
            stats.accepted += 1;
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
        if !h.is_finite() || h <= 0.0 {
            return Err(Error::Numeric("ODE step size collapsed".into()));
        }
    }
    Ok((y, stats))
}

fn weighted_rms(v: &[f64], scale: &[f64], opts: OdeOptions) -> f64 {
    let s: f64 = v
        .iter()
        .zip(scale)
        .map(|(x, y)| {
            let r = x / (opts.atol + opts.rtol * y.abs());
            r * r
        })
        .sum();
    (s / v.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);
    impl LinearFlow for Decay {
        fn dim(&self) -> usize {
            2
        }
        fn derivative(&self, p: &[f64], dp: &mut [f64]) {
            dp[0] = -self.0 * p[0];
            dp[1] = self.0 * p[0];
        }
    }

    #[test]
    fn exponential_decay() {
        for &rate in &[0.5, 5.0, 200.0] {
            let (y, _) = integrate(&Decay(rate), &[1.0, 0.0], 1.0, OdeOptions::default()).unwrap();
            let exact = (-rate as f64).exp();
            assert!((y[0] - exact).abs() < 1e-10, "rate {rate}: {} vs {exact}", y[0]);
            assert!((y[0] + y[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_horizon_is_identity() {
        let (y, stats) = integrate(&Decay(1.0), &[0.3, 0.7], 0.0, OdeOptions::default()).unwrap();
        assert_eq!(y, vec![0.3, 0.7]);
        assert_eq!(stats.accepted, 0);
    }
}
