//! Change of variables `y = phi(x) = int_0^x 1/a` taking
//! `rho u_tt - (a u_x)_x = 0` on `[0, 1]` to `omega u_tt - u_yy = 0` on
//! `[0, L]` with `omega = (rho a) o phi^-1` and `L = phi(1)`.

use super::{Coefficient, Family};
use crate::error::{Error, Result};
use crate::quadrature::{gk15, integrate, QuadOptions};

const CELLS: usize = 2048;

#[derive(Debug)]
pub(crate) struct ReducedMap {
    rho: Coefficient,
    a: Coefficient,
    /// `phi` at `k / CELLS`.
    table: Vec<f64>,
}

impl ReducedMap {
    pub(crate) fn new(rho: &Coefficient, a: &Coefficient) -> Result<Self> {
        if rho.length() != 1.0 || a.length() != 1.0 {
            return Err(Error::InvalidParameter("rho and a must live on [0, 1]".into()));
        }
        let inv_a = |x: f64| 1.0 / a.eval(x);
        let bps = a.breakpoints();
        let opts = QuadOptions { rel: 1e-13, abs: 1e-15, min_segments: 1, ..QuadOptions::default() };
        let mut table = Vec::with_capacity(CELLS + 1);
        table.push(0.0);
        let mut acc = 0.0;
        for k in 0..CELLS {
            let lo = k as f64 / CELLS as f64;
            let hi = (k + 1) as f64 / CELLS as f64;
            acc += integrate(&inv_a, lo, hi, &bps, &opts)
                .map_err(|e| Error::Quadrature(format!("integral of 1/a: {e}")))?
                .value;
            table.push(acc);
        }
        Ok(ReducedMap { rho: rho.clone(), a: a.clone(), table })
    }

    pub(crate) fn length(&self) -> f64 {
        self.table[CELLS]
    }

    fn phi(&self, x: f64) -> f64 {
        let pos = (x * CELLS as f64).clamp(0.0, CELLS as f64);
        let k = (pos.floor() as usize).min(CELLS - 1);
        let lo = k as f64 / CELLS as f64;
        if x <= lo {
            return self.table[k];
        }
        let inv_a = |t: f64| 1.0 / self.a.eval(t);
        let bps: Vec<f64> = self.a.singular_points().into_iter().filter(|&p| p > lo && p < x).collect();
        if bps.is_empty() {
            self.table[k] + gk15(&inv_a, lo, x).0
        } else {
            let opts = QuadOptions { rel: 1e-13, abs: 1e-15, ..QuadOptions::default() };
            self.table[k] + integrate(&inv_a, lo, x, &bps, &opts).map(|r| r.value).unwrap_or(f64::NAN)
        }
    }

    /// `phi^-1(y)` by bisection on the table, then safeguarded Newton.
    fn inverse(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, self.length());
        let k = match self.table.binary_search_by(|v| v.total_cmp(&y)) {
            Ok(k) => return k as f64 / CELLS as f64,
            Err(k) => k.clamp(1, CELLS) - 1,
        };
        let (mut lo, mut hi) = (k as f64 / CELLS as f64, (k + 1) as f64 / CELLS as f64);
        let (ylo, yhi) = (self.table[k], self.table[k + 1]);
        let mut x = lo + (hi - lo) * (y - ylo) / (yhi - ylo);
        for _ in 0..60 {
            let f = self.phi(x) - y;
            if f.abs() <= 4.0 * f64::EPSILON * y.max(1e-300) {
                break;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let newton = x - f * self.a.eval(x);
            x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < 4.0 * f64::EPSILON {
                break;
            }
        }
        x
    }

    pub(crate) fn eval(&self, y: f64) -> f64 {
        let x = self.inverse(y);
        self.rho.eval(x) * self.a.eval(x)
    }

    pub(crate) fn singular_points(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.rho.singular_points();
        v.extend(self.a.singular_points());
        v.into_iter().map(|x| self.phi(x)).collect()
    }
}

/// Returns `omega` on `[0, L]` and `L`.
pub fn reduce_to_normal_form(rho: &Coefficient, a: &Coefficient) -> Result<(Coefficient, f64)> {
    let c = Coefficient::new(Family::Reduced { rho: Box::new(rho.clone()), a: Box::new(a.clone()) })?;
    let l = c.length();
    Ok((c, l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_baseline, travel_time};

    fn constant(v: f64) -> Coefficient {
        make_baseline(Family::Constant { value: v }).unwrap()
    }

    #[test]
    fn identity_and_constant_scaling() {
        let (w, l) = reduce_to_normal_form(&constant(1.0), &constant(1.0)).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
        assert!((w.eval(0.37) - 1.0).abs() < 1e-15);
        let (w, l) = reduce_to_normal_form(&constant(1.0), &constant(4.0)).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
        assert!((w.eval(0.1) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn travel_time_is_preserved() {
        let rho = make_baseline(Family::Lipschitz { offset: 1.0, slope: 1.0, center: 0.0 }).unwrap();
        let (w, _) = reduce_to_normal_form(&rho, &constant(1.0)).unwrap();
        let exact = 2.0 / 3.0 * (2f64.powf(1.5) - 1.0);
        assert!((travel_time(&w).value - exact).abs() < 1e-8);

        let rho = make_baseline(Family::Trigonometric { mean: 2.0, cos: vec![0.3], sin: vec![0.1] }).unwrap();
        let a = make_baseline(Family::Trigonometric { mean: 1.5, cos: vec![0.0, 0.2], sin: vec![0.4, 0.0] }).unwrap();
        let (w, l) = reduce_to_normal_form(&rho, &a).unwrap();
        let t_star = crate::quadrature::integrate(
            &|x: f64| (rho.eval(x) / a.eval(x)).sqrt(),
            0.0,
            1.0,
            &[],
            &QuadOptions::default(),
        )
        .unwrap()
        .value;
        assert!((travel_time(&w).value - t_star).abs() < 1e-8);
        // The unit-interval rescaling keeps the travel time as well.
        let unit = w.to_unit_interval().unwrap();
        assert!((travel_time(&unit).value - t_star).abs() < 1e-8);
        assert!(l > 0.0);
    }

    #[test]
    fn inverse_map_round_trips() {
        let a = make_baseline(Family::Hoelder { offset: 1.0, amplitude: 2.0, center: 0.4, alpha: 0.5 }).unwrap();
        let map = ReducedMap::new(&constant(1.0), &a).unwrap();
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            assert!((map.inverse(map.phi(x)) - x).abs() < 1e-12);
        }
    }
}
