//! Adaptive Dormand-Prince 5(4) integrator for small first-order systems.

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

// Fifth-order weights (also the last stage row, so the method is FSAL).
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// Fourth-order embedded weights.
const E1: f64 = 5179.0 / 57600.0;
const E3: f64 = 7571.0 / 16695.0;
const E4: f64 = 393.0 / 640.0;
const E5: f64 = -92097.0 / 339200.0;
const E6: f64 = 187.0 / 2100.0;
const E7: f64 = 1.0 / 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    /// Step ceiling.
    pub h_max: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

impl StepStats {
    pub fn merge(&mut self, other: StepStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
    }
}

fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])], h: f64) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

impl Dopri5 {
    /// Integrates `y' = f(x, y)` from `x0` to `x1` (either direction).
    /// `h` carries the last accepted step size between calls; `scale`
    /// weights the components in the error norm.
    pub fn solve<const N: usize, F: FnMut(f64, &[f64; N]) -> [f64; N]>(
        &self,
        f: &mut F,
        x0: f64,
        y0: [f64; N],
        x1: f64,
        h: &mut f64,
        scale: &[f64; N],
    ) -> Result<([f64; N], StepStats)> {
        let mut stats = StepStats::default();
        if x1 == x0 {
            return Ok((y0, stats));
        }
        let dir = (x1 - x0).signum();
        let mut x = x0;
        let mut y = y0;
        let mut k1 = f(x, &y);
        let mut step = h.abs().min(self.h_max).max(1e-14 * (x1 - x0).abs());
        if !(step > 0.0) || !step.is_finite() {
            step = self.h_max.min((x1 - x0).abs());
        }
        loop {
            let remaining = (x1 - x).abs();
            if remaining <= 1e-15 * x1.abs().max(1.0) {
                break;
            }
            let last = step >= remaining;
            let hs = if last { remaining } else { step } * dir;
            let k2 = f(x + C2 * hs, &axpy(&y, &[(A21, &k1)], hs));
            let k3 = f(x + C3 * hs, &axpy(&y, &[(A31, &k1), (A32, &k2)], hs));
            let k4 = f(x + C4 * hs, &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hs));
            let k5 = f(x + C5 * hs, &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hs));
            let k6 = f(
                x + hs,
                &axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], hs),
            );
            let y5 = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], hs);
            let k7 = f(x + hs, &y5);
            let mut err: f64 = 0.0;
            for i in 0..N {
                let y4 = y[i]
                    + hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let tol = self.atol * scale[i] + self.rtol * y[i].abs().max(y5[i].abs());
                err = err.max((y5[i] - y4).abs() / tol);
            }
            if !err.is_finite() {
                return Err(Error::ScaleOutOfReach(format!("non-finite ODE state near x = {x}")));
            }
            if err <= 1.0 {
                x = if last { x1 } else { x + hs };
                y = y5;
                k1 = k7;
                stats.accepted += 1;
                if !last {
                    *h = step;
                }
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                step = (step * grow).min(self.h_max);
            } else {
                stats.rejected += 1;
                step *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
            if stats.accepted + stats.rejected > self.max_steps {
                return Err(Error::ScaleOutOfReach(format!(
                    "step budget {} exhausted at x = {x}",
                    self.max_steps
                )));
            }
        }
        Ok((y, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tableau_rows_sum_to_nodes() {
        assert!((A21 - C2).abs() < 1e-16);
        assert!((A31 + A32 - C3).abs() < 1e-16);
        assert!((A41 + A42 + A43 - C4).abs() < 1e-15);
        assert!((A51 + A52 + A53 + A54 - C5).abs() < 1e-14);
        assert!((A61 + A62 + A63 + A64 + A65 - 1.0).abs() < 1e-14);
        assert!((B1 + B3 + B4 + B5 + B6 - 1.0).abs() < 1e-15);
        assert!((E1 + E3 + E4 + E5 + E6 + E7 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_step_order_is_five() {
        // y' = y on [0, 1]: error ratio under halving approaches 2^5.
        let run = |n: usize| {
            let ode = Dopri5 { rtol: 1.0, atol: 1e10, h_max: 1.0 / n as f64, max_steps: 10 * n };
            let mut h = 1.0 / n as f64;
            let (y, _) = ode.solve(&mut |_, y: &[f64; 1]| [y[0]], 0.0, [1.0], 1.0, &mut h, &[1.0]).unwrap();
            (y[0] - 1f64.exp()).abs()
        };
        let ratio = run(8) / run(16);
        assert!(ratio > 28.0 && ratio < 36.0, "ratio {ratio}");
    }

    #[test]
    fn harmonic_oscillator_over_many_periods() {
        let k = 2.0 * std::f64::consts::PI * 10.0;
        let ode = Dopri5 { rtol: 1e-12, atol: 1e-14, h_max: 1.0 / 160.0, max_steps: 1_000_000 };
        let mut h = 1e-3;
        let (y, stats) = ode
            .solve(&mut |_, y: &[f64; 2]| [y[1], -k * k * y[0]], 0.0, [1.0, 0.0], 10.0, &mut h, &[1.0, k])
            .unwrap();
        assert!((y[0] - (k * 10.0).cos()).abs() < 1e-8);
        assert!(stats.accepted >= 1600);
        // Backwards from the end recovers the start.
        let (z, _) = ode
            .solve(&mut |_, y: &[f64; 2]| [y[1], -k * k * y[0]], 10.0, y, 0.0, &mut h, &[1.0, k])
            .unwrap();
        assert!((z[0] - 1.0).abs() < 1e-8 && (z[1] / k).abs() < 1e-8);
    }
}
