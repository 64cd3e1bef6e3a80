//! The oscillator pair `(alpha_eps, w_eps)`: an even 1-periodic potential
//! and an even solution of `w'' + alpha w = 0`, `w(0) = 1`, `w'(0) = 0`,
//! decaying geometrically from one integer to the next.
//!
//! The pair is built from the ansatz `w = cos(2 pi x) exp(-eps eta(x))` with
//! `eta' = 2 chi cos^2(2 pi x)` on `x > 0`, where `chi` is a smooth
//! 1-periodic cutoff vanishing near the integers. Then
//!
//! `alpha = 4 pi^2 - 16 pi eps chi sin cos + 2 eps chi' cos^2 - 4 eps^2 chi^2 cos^4`
//!
//! in closed form, with sin and cos evaluated at `2 pi x`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{gk15, integrate, QuadOptions};
use crate::tolerances;

const TWO_PI: f64 = 2.0 * PI;
const FOUR_PI2: f64 = 4.0 * PI * PI;
const ETA_CELLS: usize = 1024;

fn bump(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

fn bump_prime(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp() / (t * t)
    }
}

/// C-infinity transition from 0 (t <= 0) to 1 (t >= 1).
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = bump(t);
        a / (a + bump(1.0 - t))
    }
}

pub fn smoothstep_prime(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        let a = bump(t);
        let b = bump(1.0 - t);
        (bump_prime(t) * b + a * bump_prime(1.0 - t)) / ((a + b) * (a + b))
    }
}

/// Smooth 1-periodic cutoff. On `[0, 1)` the unshifted profile rises over
/// `[margin, margin + width]`, equals one in the middle and falls over
/// `[1 - margin - width, 1 - margin]`; the whole profile is then translated
/// by `phase`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub margin: f64,
    pub width: f64,
    pub phase: f64,
}

impl Default for Cutoff {
    fn default() -> Self {
        Cutoff { margin: 0.2, width: 0.2, phase: -0.17 }
    }
}

impl Cutoff {
    pub fn validate(&self) -> Result<()> {
        let ok = self.width > 0.0
            && self.width < 0.5
            && self.margin > 0.0
            && self.phase.abs() < self.margin
            && 2.0 * (self.margin + self.width) <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("cutoff {self:?} is not admissible")))
        }
    }

    /// Radius of the neighbourhood of each integer on which the cutoff vanishes.
    pub fn zero_radius(&self) -> f64 {
        self.margin - self.phase.abs()
    }

    fn local(&self, x: f64) -> f64 {
        (x - self.phase).rem_euclid(1.0)
    }

    pub fn value(&self, x: f64) -> f64 {
        let y = self.local(x);
        smoothstep((y - self.margin) / self.width)
            * smoothstep((1.0 - self.margin - y) / self.width)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let y = self.local(x);
        let up = (y - self.margin) / self.width;
        let down = (1.0 - self.margin - y) / self.width;
        (smoothstep_prime(up) * smoothstep(down) - smoothstep(up) * smoothstep_prime(down))
            / self.width
    }

    /// Points in `[0, 1]` where the cutoff changes regime; used as quadrature breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = [
            self.margin,
            self.margin + self.width,
            1.0 - self.margin - self.width,
            1.0 - self.margin,
        ]
        .iter()
        .map(|p| (p + self.phase).rem_euclid(1.0))
        .collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Constants of the pair, all measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConstants {
    /// `sup |alpha - 4 pi^2| / eps` over one period.
    pub m: f64,
    /// `sup |alpha'| / eps` over one period (finite differences).
    pub m_derivative: f64,
    /// Decay rate `c`: `w(n) = exp(-c eps n)`.
    pub decay_rate: f64,
    /// `gamma = int_0^1 w / eps`.
    pub gamma: f64,
    /// `sup (|w| + |w'| + |w''|)` over one period.
    pub c_bound: f64,
    /// Largest `|w'' + alpha w|` on the residual sample.
    pub residual: f64,
    /// Largest `|w(n) exp(c eps n) - 1|` for `n = 0..=20`.
    pub decay_fit: f64,
    /// Largest `|alpha(x + 1) - alpha(x)|` on the sample.
    pub periodicity: f64,
}

/// Parameters that define a pair; everything else is derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub eps: f64,
    pub cutoff: Cutoff,
    /// Upper limit `eps_bar` this pair was validated against.
    pub eps_bar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PairSpec", into = "PairSpec")]
pub struct PeriodicPair {
    spec: PairSpec,
    eta_table: Arc<Vec<f64>>,
    constants: PairConstants,
}

impl PartialEq for PeriodicPair {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl From<PeriodicPair> for PairSpec {
    fn from(p: PeriodicPair) -> Self {
        p.spec
    }
}

impl TryFrom<PairSpec> for PeriodicPair {
    type Error = Error;
    fn try_from(spec: PairSpec) -> Result<Self> {
        PeriodicPair::assemble(spec)
    }
}

/// Build the pair for `eps`, validating every property of the construction.
///
/// If the integral of `w` over a period is too small for the requested
/// cutoff phase, the phase is moved towards the left (which weights the
/// cutoff onto the half period where `sin(2 pi x) > 0`) until it succeeds.
pub fn build_oscillator_pair(eps: f64, cutoff: Cutoff, eps_bar: f64) -> Result<PeriodicPair> {
    if !(eps > 0.0 && eps < eps_bar) {
        return Err(invalid(format!("eps = {eps} outside ]0, {eps_bar}[")));
    }
    cutoff.validate()?;
    let lowest = -(cutoff.margin - 0.01).max(0.0);
    let mut phases = vec![cutoff.phase];
    for k in 1..=8 {
        let p = cutoff.phase + (lowest - cutoff.phase) * k as f64 / 8.0;
        if p < cutoff.phase {
            phases.push(p);
        }
    }
    let mut last_gamma = f64::NAN;
    for phase in phases {
        let pair = PeriodicPair::assemble(PairSpec { eps, cutoff: Cutoff { phase, ..cutoff }, eps_bar })?;
        last_gamma = pair.constants.gamma;
        if last_gamma >= tolerances::GAMMA_FLOOR {
            pair.check_properties()?;
            return Ok(pair);
        }
    }
    Err(Error::PropertyCheck(format!(
        "integral of w over a period stays below {} eps for every admissible phase (last gamma {last_gamma})",
        tolerances::GAMMA_FLOOR
    )))
}

impl PeriodicPair {
    fn assemble(spec: PairSpec) -> Result<Self> {
        spec.cutoff.validate()?;
        if !(spec.eps > 0.0 && spec.eps < spec.eps_bar) {
            return Err(invalid(format!("eps = {} outside ]0, {}[", spec.eps, spec.eps_bar)));
        }
        let cutoff = spec.cutoff;
        let deta = move |t: f64| {
            let c = (TWO_PI * t).cos();
            2.0 * cutoff.value(t) * c * c
        };
        let mut table = Vec::with_capacity(ETA_CELLS + 1);
        table.push(0.0);
        let mut acc = 0.0;
        for k in 0..ETA_CELLS {
            let a = k as f64 / ETA_CELLS as f64;
            let b = (k + 1) as f64 / ETA_CELLS as f64;
            acc += gk15(&deta, a, b).0;
            table.push(acc);
        }
        let mut pair = PeriodicPair {
            spec,
            eta_table: Arc::new(table),
            constants: PairConstants {
                m: 0.0,
                m_derivative: 0.0,
                decay_rate: acc,
                gamma: 0.0,
                c_bound: 0.0,
                residual: 0.0,
                decay_fit: 0.0,
                periodicity: 0.0,
            },
        };
        pair.measure()?;
        Ok(pair)
    }

    fn measure(&mut self) -> Result<()> {
        let eps = self.spec.eps;
        let n = (1.0 / tolerances::SUP_GRID_STEP).round() as usize;
        let mut m: f64 = 0.0;
        let mut periodicity: f64 = 0.0;
        for i in 0..=n {
            let x = i as f64 / n as f64;
            let a = self.alpha(x);
            m = m.max((a - FOUR_PI2).abs());
            if i % 16 == 0 {
                periodicity = periodicity.max((self.alpha(x + 1.0) - a).abs());
            }
        }
        // Derivative bound and residual on a coarser grid (each point costs a quadrature panel).
        let coarse = 20_000;
        let mut m_der: f64 = 0.0;
        let mut residual: f64 = 0.0;
        let mut c_bound: f64 = 0.0;
        let d = 1e-6;
        for i in 0..=coarse {
            let x = i as f64 / coarse as f64;
            let da = (self.alpha(x + d) - self.alpha((x - d).max(0.0))) / (x + d - (x - d).max(0.0));
            m_der = m_der.max(da.abs());
            let w = self.w(x);
            let w2 = self.w_second(x);
            residual = residual.max((w2 + self.alpha(x) * w).abs());
            c_bound = c_bound.max(w.abs() + self.w_prime(x).abs() + w2.abs());
        }
        let rate = self.constants.decay_rate;
        let mut decay_fit: f64 = 0.0;
        for k in 0..=20 {
            let x = k as f64;
            decay_fit = decay_fit.max((self.w(x) * (rate * eps * x).exp() - 1.0).abs());
        }
        let opts = QuadOptions::default();
        let w_int = integrate(&|x: f64| self.w(x), 0.0, 1.0, &self.spec.cutoff.breakpoints(), &opts)?;
        self.constants = PairConstants {
            m: m / eps,
            m_derivative: m_der / eps,
            decay_rate: rate,
            gamma: w_int.value / eps,
            c_bound,
            residual,
            decay_fit,
            periodicity,
        };
        Ok(())
    }

    /// Checks every listed property of the pair against the default tolerances.
    pub fn check_properties(&self) -> Result<()> {
        let c = &self.constants;
        let fail = |what: String| Err(Error::PropertyCheck(what));
        if c.residual > tolerances::ODE_RESIDUAL {
            return fail(format!("ODE residual {:e}", c.residual));
        }
        if c.decay_fit > tolerances::DECAY_FIT {
            return fail(format!("decay fit error {:e}", c.decay_fit));
        }
        if c.periodicity > 1e-9 * FOUR_PI2 {
            return fail(format!("alpha not 1-periodic ({:e})", c.periodicity));
        }
        if c.gamma <= 0.0 {
            return fail(format!("gamma = {} is not positive", c.gamma));
        }
        let r = self.spec.cutoff.zero_radius();
        for k in 0..=64 {
            let x = r * k as f64 / 64.0 * 0.999;
            if self.alpha(x) != FOUR_PI2 || self.alpha(1.0 - x) != FOUR_PI2 {
                return fail(format!("alpha differs from 4 pi^2 at {x} near an integer"));
            }
        }
        if self.w(0.0) != 1.0 || self.w_prime(0.0) != 0.0 {
            return fail("initial data differ from (1, 0)".into());
        }
        let lo = 2.0 * PI * PI;
        let hi = 8.0 * PI * PI;
        if FOUR_PI2 - c.m * self.spec.eps < lo || FOUR_PI2 + c.m * self.spec.eps > hi {
            return fail(format!("alpha leaves [2 pi^2, 8 pi^2] (M eps = {})", c.m * self.spec.eps));
        }
        Ok(())
    }

    pub fn spec(&self) -> &PairSpec {
        &self.spec
    }

    pub fn eps(&self) -> f64 {
        self.spec.eps
    }

    pub fn cutoff(&self) -> &Cutoff {
        &self.spec.cutoff
    }

    pub fn constants(&self) -> &PairConstants {
        &self.constants
    }

    /// `eta` on `x >= 0`, extended evenly.
    pub fn eta(&self, x: f64) -> f64 {
        let x = x.abs();
        let whole = x.floor();
        let frac = x - whole;
        let pos = frac * ETA_CELLS as f64;
        let k = (pos.floor() as usize).min(ETA_CELLS - 1);
        let a = k as f64 / ETA_CELLS as f64;
        let cutoff = self.spec.cutoff;
        let deta = |t: f64| {
            let c = (TWO_PI * t).cos();
            2.0 * cutoff.value(t) * c * c
        };
        let partial = if frac > a { gk15(&deta, a, frac).0 } else { 0.0 };
        whole * self.constants.decay_rate + self.eta_table[k] + partial
    }

    /// `alpha_eps(x)`, even and 1-periodic on each half line.
    pub fn alpha(&self, x: f64) -> f64 {
        let x = x.abs();
        let chi = self.spec.cutoff.value(x);
        let dchi = self.spec.cutoff.derivative(x);
        if chi == 0.0 && dchi == 0.0 {
            return FOUR_PI2;
        }
        let eps = self.spec.eps;
        let (s, c) = (TWO_PI * x).sin_cos();
        let c2 = c * c;
        FOUR_PI2 - 16.0 * PI * eps * chi * s * c + 2.0 * eps * dchi * c2
            - 4.0 * eps * eps * chi * chi * c2 * c2
    }

    /// `w_eps(x) = cos(2 pi x) exp(-eps eta(|x|))`.
    pub fn w(&self, x: f64) -> f64 {
        (TWO_PI * x).cos() * (-self.spec.eps * self.eta(x)).exp()
    }

    /// `w_eps'(x)`; odd because `w` is even.
    pub fn w_prime(&self, x: f64) -> f64 {
        let y = x.abs();
        let eps = self.spec.eps;
        let (s, c) = (TWO_PI * y).sin_cos();
        let g1 = -2.0 * eps * self.spec.cutoff.value(y) * c * c;
        let v = (-TWO_PI * s + c * g1) * (-eps * self.eta(y)).exp();
        if x < 0.0 {
            -v
        } else {
            v
        }
    }

    /// `w_eps''(x)` from the product rule, independent of `alpha`.
    pub fn w_second(&self, x: f64) -> f64 {
        let y = x.abs();
        let eps = self.spec.eps;
        let (s, c) = (TWO_PI * y).sin_cos();
        let chi = self.spec.cutoff.value(y);
        let dchi = self.spec.cutoff.derivative(y);
        let g1 = -2.0 * eps * chi * c * c;
        let g2 = -2.0 * eps * (dchi * c * c - 2.0 * TWO_PI * chi * s * c);
        (-FOUR_PI2 * c - 2.0 * TWO_PI * s * g1 + c * (g2 + g1 * g1)) * (-eps * self.eta(y)).exp()
    }

    /// Log of `|w|` together with its sign, usable where `w` itself underflows.
    pub fn log_abs_w(&self, x: f64) -> (f64, f64) {
        let c = (TWO_PI * x).cos();
        (c.abs().ln() - self.spec.eps * self.eta(x), c.signum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(eps: f64) -> PeriodicPair {
        build_oscillator_pair(eps, Cutoff::default(), tolerances::EPS_BAR).unwrap()
    }

    #[test]
    fn smoothstep_is_a_monotone_transition() {
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        let mut prev = 0.0;
        for i in 10..=90 {
            let v = smoothstep(i as f64 / 100.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn cutoff_derivative_matches_finite_differences() {
        let c = Cutoff::default();
        for i in 0..200 {
            let x = i as f64 / 200.0 + 0.0013;
            let h = 1e-6;
            let fd = (c.value(x + h) - c.value(x - h)) / (2.0 * h);
            assert!((fd - c.derivative(x)).abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn initial_data_and_center_value() {
        let p = pair(0.02);
        assert_eq!(p.w(0.0), 1.0);
        assert_eq!(p.w_prime(0.0), 0.0);
        assert_eq!(p.alpha(0.0), FOUR_PI2);
    }

    #[test]
    fn derivatives_agree_with_richardson_differences() {
        // Independent oracle: fourth-order central differences of w itself.
        let p = pair(0.04);
        let h = 1e-3;
        for i in 0..50 {
            let x = 0.013 + i as f64 * 0.061;
            let d1 = (p.w(x - 2.0 * h) - 8.0 * p.w(x - h) + 8.0 * p.w(x + h) - p.w(x + 2.0 * h)) / (12.0 * h);
            let d2 = (-p.w(x - 2.0 * h) + 16.0 * p.w(x - h) - 30.0 * p.w(x) + 16.0 * p.w(x + h)
                - p.w(x + 2.0 * h))
                / (12.0 * h * h);
            assert!((d1 - p.w_prime(x)).abs() < 1e-7, "w' at {x}");
            assert!((d2 - p.w_second(x)).abs() < 1e-5, "w'' at {x}");
            assert!((d2 + p.alpha(x) * p.w(x)).abs() < 1e-5, "ODE at {x}");
        }
    }

    #[test]
    fn evenness_and_periodicity() {
        let p = pair(0.03);
        for i in 0..100 {
            let x = 0.37 + i as f64 * 0.093;
            assert_eq!(p.alpha(x), p.alpha(-x));
            assert_eq!(p.w(x), p.w(-x));
            assert!((p.alpha(x + 1.0) - p.alpha(x)).abs() < 1e-9);
            // w = p_eps(x) e^{-c eps |x|} with p_eps periodic.
            let rate = p.constants().decay_rate * p.eps();
            let a = p.w(x) * (rate * x).exp();
            let b = p.w(x + 1.0) * (rate * (x + 1.0)).exp();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_matches_independent_simpson_quadrature() {
        let p = pair(0.02);
        let simpson = crate::quadrature::composite_simpson(&|x: f64| p.w(x), 0.0, 1.0, 20_000);
        assert!((simpson / 0.02 - p.constants().gamma).abs() < 1e-6);
        assert!(p.constants().gamma > 0.0);
    }

    #[test]
    fn rejects_eps_outside_range() {
        assert!(build_oscillator_pair(0.06, Cutoff::default(), 0.05).is_err());
        assert!(build_oscillator_pair(0.0, Cutoff::default(), 0.05).is_err());
        let bad = Cutoff { margin: 0.1, width: 0.45, phase: 0.0 };
        assert!(build_oscillator_pair(0.01, bad, 0.05).is_err());
    }

    #[test]
    fn phase_search_rescues_a_symmetric_cutoff() {
        // With no phase shift the cutoff is symmetric about 1/2 and the
        // period integral of w is of order eps^2 only.
        let sym = Cutoff { margin: 0.2, width: 0.2, phase: 0.0 };
        let p = build_oscillator_pair(0.02, sym, 0.05).unwrap();
        assert!(p.cutoff().phase < 0.0);
        assert!(p.constants().gamma >= tolerances::GAMMA_FLOOR);
    }

    #[test]
    fn json_round_trip_rebuilds_the_same_pair() {
        let p = pair(0.01);
        let s = serde_json::to_string(&p).unwrap();
        let q: PeriodicPair = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.constants(), q.constants());
        assert_eq!(p.w(3.3).to_bits(), q.w(3.3).to_bits());
    }
}
