//! Coefficient families: baselines of every regularity class, the
//! oscillator pair, counterexample densities and the normal-form reduction.

pub mod density;
pub mod oscillator;
mod reduce;
pub mod sequences;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use density::{build_pairs, CounterexampleDensity, DensityPiece};
pub use oscillator::{build_oscillator_pair, Cutoff, PairConstants, PeriodicPair};
pub use reduce::reduce_to_normal_form;
pub use sequences::{
    make_sequences, CondFlags, CounterexampleParams, Lambda, ModulusDescriptor, Psi, ScaleRecord, SequenceMode,
    SequenceSpec,
};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate_or_bracket, BracketedIntegral, QuadOptions};
use reduce::ReducedMap;

/// Closed-form description of a density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Constant { value: f64 },
    /// `offset + slope |x - center|`.
    Lipschitz { offset: f64, slope: f64, center: f64 },
    /// Piecewise constant: `values[i]` between `jumps[i-1]` and `jumps[i]`.
    BvStep { values: Vec<f64>, jumps: Vec<f64> },
    /// `offset + amplitude |x - center|^alpha`.
    Hoelder { offset: f64, amplitude: f64, center: f64, alpha: f64 },
    /// `offset + amplitude g(|x - center|)` with
    /// `g(s) = s ln(1 + 1/s) (1 + ln(1 + 1/s))^-mu_power`.
    LogLipschitz { offset: f64, amplitude: f64, center: f64, mu_power: f64 },
    /// `c0 + c1 sum_{n=1}^{n_max} 2^-n cos(2^(n+1) pi x)`.
    Weierstrass { c0: f64, c1: f64, n_max: u32 },
    /// `mean + sum_k cos[k] cos(2 pi (k+1) x) + sin[k] sin(2 pi (k+1) x)`.
    Trigonometric { mean: f64, cos: Vec<f64>, sin: Vec<f64> },
    CounterexamplePsi { density: CounterexampleDensity },
    CounterexampleLambda { j: u32, density: CounterexampleDensity },
    /// `(rho a) o phi^-1` on `[0, L]` with `phi(x) = int_0^x 1/a`.
    Reduced { rho: Box<Coefficient>, a: Box<Coefficient> },
    /// `length^2 inner(length z)` on `[0, 1]`.
    Rescaled { inner: Box<Coefficient>, length: f64 },
}

/// Kind tag of a coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Kind {
    Constant,
    Lipschitz,
    BvStep,
    Hoelder { alpha: f64 },
    LogLipschitz,
    WeierstrassZygmund,
    CounterexamplePsi,
    CounterexampleLambda { j: u32 },
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Descriptor {
    #[serde(flatten)]
    family: Family,
    lower: f64,
    upper: f64,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

/// An evaluable density on `[0, length]` with hyperbolicity bounds.
/// Outside the domain it is extended by its boundary values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Descriptor", into = "Descriptor")]
pub struct Coefficient {
    family: Family,
    lower: f64,
    upper: f64,
    length: f64,
    provenance: BTreeMap<String, String>,
    reduced: Option<Arc<ReducedMap>>,
}

impl PartialEq for Coefficient {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
            && self.lower == other.lower
            && self.upper == other.upper
            && self.provenance == other.provenance
    }
}

impl From<Coefficient> for Descriptor {
    fn from(c: Coefficient) -> Self {
        Descriptor { family: c.family, lower: c.lower, upper: c.upper, provenance: c.provenance }
    }
}

impl TryFrom<Descriptor> for Coefficient {
    type Error = Error;
    fn try_from(d: Descriptor) -> Result<Self> {
        let mut c = Coefficient::new(d.family)?;
        if d.lower > c.lower || d.upper < c.upper || !(d.lower > 0.0) {
            return Err(Error::Hyperbolicity(format!(
                "declared bounds [{}, {}] do not contain the family range [{}, {}]",
                d.lower, d.upper, c.lower, c.upper
            )));
        }
        c.lower = d.lower;
        c.upper = d.upper;
        c.provenance = d.provenance;
        Ok(c)
    }
}

fn loglip_profile(s: f64, p: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let l = (1.0 / s).ln_1p();
    s * l * (1.0 + l).powf(-p)
}

fn weierstrass_sum(x: f64, n_max: u32) -> f64 {
    // cos(2^(n+1) pi x) = cos(2 pi frac(2^n x)); scaling by 2^n is exact.
    let mut s = 0.0;
    let mut amp = 1.0;
    let mut scale = 1.0;
    for _ in 0..n_max {
        amp *= 0.5;
        scale *= 2.0;
        s += amp * (2.0 * PI * (x * scale).rem_euclid(1.0)).cos();
    }
    s
}

impl Coefficient {
    /// Validates the family and computes its bounds.
    pub fn new(family: Family) -> Result<Self> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let (lower, upper, length, reduced) = match &family {
            Family::Constant { value } => (*value, *value, 1.0, None),
            Family::Lipschitz { offset, slope, center } => {
                if !finite(&[*offset, *slope, *center]) {
                    return Err(invalid("non-finite Lipschitz parameters"));
                }
                let far = center.abs().max((1.0 - center).abs());
                let near = if (0.0..=1.0).contains(center) { 0.0 } else { center.abs().min((1.0 - center).abs()) };
                let (a, b) = (offset + slope * near, offset + slope * far);
                (a.min(b), a.max(b), 1.0, None)
            }
            Family::BvStep { values, jumps } => {
                if values.len() != jumps.len() + 1 || values.is_empty() {
                    return Err(invalid("a step function needs one more value than jumps"));
                }
                if jumps.windows(2).any(|w| w[1] <= w[0]) || jumps.iter().any(|j| !(*j > 0.0 && *j < 1.0)) {
                    return Err(invalid("jumps must be increasing inside ]0, 1["));
                }
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi, 1.0, None)
            }
            Family::Hoelder { offset, amplitude, center, alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(invalid(format!("Hoelder exponent {alpha} outside ]0, 1[")));
                }
                if !(*amplitude >= 0.0) || !(0.0..=1.0).contains(center) {
                    return Err(invalid("Hoelder amplitude must be nonnegative and center in [0, 1]"));
                }
                let far = center.max(1.0 - center);
                (*offset, offset + amplitude * far.powf(*alpha), 1.0, None)
            }
            Family::LogLipschitz { offset, amplitude, center, mu_power } => {
                if !(*amplitude >= 0.0) || !(0.0..=1.0).contains(center) || !(*mu_power >= 0.0) {
                    return Err(invalid("log-Lipschitz profile needs amplitude >= 0, mu_power >= 0, center in [0, 1]"));
                }
                let far = center.max(1.0 - center);
                (*offset, offset + amplitude * loglip_profile(far, *mu_power), 1.0, None)
            }
            Family::Weierstrass { c0, c1, n_max } => {
                if *n_max < 1 || *n_max > 48 {
                    return Err(invalid("Weierstrass truncation must satisfy 1 <= n_max <= 48"));
                }
                let dev = c1.abs() * (1.0 - 0.5f64.powi(*n_max as i32));
                (c0 - dev, c0 + dev, 1.0, None)
            }
            Family::Trigonometric { mean, cos, sin } => {
                if cos.len() != sin.len() {
                    return Err(invalid("cos and sin coefficient lists differ in length"));
                }
                let dev: f64 = cos.iter().chain(sin).map(|c| c.abs()).sum();
                (mean - dev, mean + dev, 1.0, None)
            }
            Family::CounterexamplePsi { density } | Family::CounterexampleLambda { density, .. } => {
                let (lo, hi) = density.bounds();
                (lo, hi, 1.0, None)
            }
            Family::Reduced { rho, a } => {
                let map = ReducedMap::new(rho, a)?;
                let length = map.length();
                (rho.lower * a.lower, rho.upper * a.upper, length, Some(Arc::new(map)))
            }
            Family::Rescaled { inner, length } => {
                if !(*length > 0.0) || (inner.length - length).abs() > 1e-12 * length {
                    return Err(invalid("rescaling length must equal the inner domain length"));
                }
                let l2 = length * length;
                (inner.lower * l2, inner.upper * l2, 1.0, None)
            }
        };
        if !(lower > 0.0) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::Hyperbolicity(format!("range [{lower}, {upper}] is not strictly positive")));
        }
        Ok(Coefficient { family, lower, upper, length, provenance: BTreeMap::new(), reduced })
    }

    pub fn with_provenance(mut self, key: &str, value: impl Into<String>) -> Self {
        self.provenance.insert(key.to_string(), value.into());
        self
    }

    /// Widens the declared bounds (they may only grow).
    pub fn with_bounds(mut self, lower: f64, upper: f64) -> Result<Self> {
        if lower > self.lower || upper < self.upper || !(lower > 0.0) {
            return Err(Error::Hyperbolicity(format!(
                "declared bounds [{lower}, {upper}] do not contain [{}, {}]",
                self.lower, self.upper
            )));
        }
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn provenance(&self) -> &BTreeMap<String, String> {
        &self.provenance
    }

    pub fn kind(&self) -> Kind {
        match &self.family {
            Family::Constant { .. } => Kind::Constant,
            Family::Lipschitz { .. } => Kind::Lipschitz,
            Family::BvStep { .. } => Kind::BvStep,
            Family::Hoelder { alpha, .. } => Kind::Hoelder { alpha: *alpha },
            Family::LogLipschitz { .. } => Kind::LogLipschitz,
            Family::Weierstrass { .. } => Kind::WeierstrassZygmund,
            Family::CounterexamplePsi { .. } => Kind::CounterexamplePsi,
            Family::CounterexampleLambda { j, .. } => Kind::CounterexampleLambda { j: *j },
            Family::Trigonometric { .. } | Family::Reduced { .. } | Family::Rescaled { .. } => Kind::Custom,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Length of the domain `[0, L]`.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, self.length);
        match &self.family {
            Family::Constant { value } => *value,
            Family::Lipschitz { offset, slope, center } => offset + slope * (x - center).abs(),
            Family::BvStep { values, jumps } => {
                let k = jumps.iter().take_while(|&&j| x >= j).count();
                values[k]
            }
            Family::Hoelder { offset, amplitude, center, alpha } => {
                offset + amplitude * (x - center).abs().powf(*alpha)
            }
            Family::LogLipschitz { offset, amplitude, center, mu_power } => {
                offset + amplitude * loglip_profile((x - center).abs(), *mu_power)
            }
            Family::Weierstrass { c0, c1, n_max } => c0 + c1 * weierstrass_sum(x, *n_max),
            Family::Trigonometric { mean, cos, sin } => {
                let mut s = *mean;
                for (k, (a, b)) in cos.iter().zip(sin).enumerate() {
                    let (sn, cs) = (2.0 * PI * (k + 1) as f64 * x).sin_cos();
                    s += a * cs + b * sn;
                }
                s
            }
            Family::CounterexamplePsi { density } | Family::CounterexampleLambda { density, .. } => density.eval(x),
            Family::Reduced { .. } => {
                let map = self.reduced.as_ref().expect("reduced map is built on construction");
                map.eval(x)
            }
            Family::Rescaled { inner, length } => length * length * inner.eval(length * x),
        }
    }

    /// Samples at `n + 1` equispaced nodes of `[0, L]`.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        let h = self.length / n as f64;
        (0..=n).map(|i| self.eval(i as f64 * h)).collect()
    }

    /// Points where the density or its derivative jumps.
    pub fn singular_points(&self) -> Vec<f64> {
        match &self.family {
            Family::Lipschitz { center, .. }
            | Family::Hoelder { center, .. }
            | Family::LogLipschitz { center, .. } => vec![*center],
            Family::BvStep { jumps, .. } => jumps.clone(),
            Family::Reduced { .. } => {
                let map = self.reduced.as_ref().expect("reduced map");
                map.singular_points()
            }
            Family::Rescaled { inner, length } => inner.singular_points().iter().map(|p| p / length).collect(),
            _ => Vec::new(),
        }
    }

    /// Quadrature breakpoints: singular points plus oscillation nodes.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v = self.singular_points();
        match &self.family {
            Family::CounterexamplePsi { density } | Family::CounterexampleLambda { density, .. } => {
                v.extend(density.breakpoints())
            }
            Family::Rescaled { inner, length } => v.extend(inner.breakpoints().iter().map(|p| p / length)),
            _ => {}
        }
        v
    }

    /// Number of equal panels adaptive quadrature should start from.
    pub fn oscillation_panels(&self) -> usize {
        match &self.family {
            Family::Weierstrass { n_max, .. } => 1usize << (*n_max + 1).min(18),
            Family::Trigonometric { cos, .. } => 2 * cos.len() + 1,
            Family::Rescaled { inner, .. } => inner.oscillation_panels(),
            _ => 1,
        }
    }

    /// Dense-sample check of `lower <= omega <= upper`.
    pub fn check_hyperbolicity(&self, samples: usize) -> Result<()> {
        let slack = 1e-12 * self.upper;
        let mut pts: Vec<f64> = (0..=samples).map(|i| self.length * i as f64 / samples as f64).collect();
        pts.extend(self.singular_points());
        for x in pts {
            let v = self.eval(x);
            if !(v >= self.lower - slack && v <= self.upper + slack) {
                return Err(Error::Hyperbolicity(format!(
                    "omega({x}) = {v} outside [{}, {}]",
                    self.lower, self.upper
                )));
            }
        }
        Ok(())
    }

    /// Counterexample structure, when present.
    pub fn density(&self) -> Option<&CounterexampleDensity> {
        match &self.family {
            Family::CounterexamplePsi { density } | Family::CounterexampleLambda { density, .. } => Some(density),
            _ => None,
        }
    }

    /// Two-column CSV sample `x,omega` at `n + 1` nodes.
    pub fn to_csv(&self, n: usize) -> String {
        let mut s = String::from("x,omega\n");
        let h = self.length / n as f64;
        for i in 0..=n {
            let x = i as f64 * h;
            let _ = writeln!(s, "{x},{}", self.eval(x));
        }
        s
    }

    /// The same density rescaled to the unit interval (`length^2 omega(length z)`).
    pub fn to_unit_interval(&self) -> Result<Coefficient> {
        if self.length == 1.0 {
            return Ok(self.clone());
        }
        Coefficient::new(Family::Rescaled { inner: Box::new(self.clone()), length: self.length })
    }
}

/// Validated constructor for every baseline family.
pub fn make_baseline(family: Family) -> Result<Coefficient> {
    match family {
        Family::CounterexamplePsi { .. } | Family::CounterexampleLambda { .. } => {
            Err(invalid("counterexample densities are built by make_counterexample_density"))
        }
        f => {
            let c = Coefficient::new(f)?;
            c.check_hyperbolicity(1 << 12)?;
            Ok(c)
        }
    }
}

/// Weierstrass density whose range lies in `[lower, upper]`.
pub fn weierstrass_in_bounds(lower: f64, upper: f64, n_max: u32) -> Result<Coefficient> {
    if !(lower > 0.0 && upper > lower) {
        return Err(invalid("need 0 < lower < upper"));
    }
    make_baseline(Family::Weierstrass { c0: 0.5 * (lower + upper), c1: 0.5 * (upper - lower), n_max })
}

/// Counterexample densities: one density for a psi descriptor, one per
/// level for a lambda descriptor.
pub fn make_counterexample_density(params: &CounterexampleParams, pairs: &[PeriodicPair]) -> Result<Vec<Coefficient>> {
    let out = match &params.spec.descriptor {
        ModulusDescriptor::Psi(_) => {
            let d = density::psi_density(params, pairs)?;
            vec![Coefficient::new(Family::CounterexamplePsi { density: d })?]
        }
        ModulusDescriptor::Lambda(_) => density::lambda_densities(params, pairs)?
            .into_iter()
            .map(|(j, density)| Coefficient::new(Family::CounterexampleLambda { j, density }))
            .collect::<Result<_>>()?,
    };
    for c in &out {
        c.check_hyperbolicity(1 << 16)?;
        let two = 2.0 * PI * PI;
        if c.lower() < two || c.upper() > 4.0 * two {
            return Err(Error::Hyperbolicity("counterexample density leaves [2 pi^2, 8 pi^2]".into()));
        }
    }
    Ok(out)
}

/// `T_omega = int_0^L sqrt(omega)` with its error estimate.
pub fn travel_time(omega: &Coefficient) -> BracketedIntegral {
    let opts = QuadOptions { min_segments: omega.oscillation_panels(), ..QuadOptions::default() };
    integrate_or_bracket(&|x: f64| omega.eval(x).sqrt(), 0.0, omega.length(), &omega.breakpoints(), &opts, 1 << 22)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tolerances;

    #[test]
    fn constant_and_weierstrass_examples() {
        let c = make_baseline(Family::Constant { value: 4.0 * PI * PI }).unwrap();
        assert_eq!((c.lower(), c.upper()), (4.0 * PI * PI, 4.0 * PI * PI));
        assert_eq!(c.kind(), Kind::Constant);
        let w = make_baseline(Family::Weierstrass { c0: 2.0, c1: 1.0, n_max: 40 }).unwrap();
        assert!((w.eval(0.0) - 3.0).abs() < 1e-12);
        assert_eq!(w.kind(), Kind::WeierstrassZygmund);
    }

    #[test]
    fn hoelder_minimum_at_center() {
        let h = make_baseline(Family::Hoelder { offset: 1.0, amplitude: 1.0, center: 0.5, alpha: 0.5 }).unwrap();
        assert_eq!(h.eval(0.5), 1.0);
        for i in 0..=100 {
            assert!(h.eval(i as f64 / 100.0) >= 1.0);
        }
        assert!(make_baseline(Family::Hoelder { offset: 1.0, amplitude: 1.0, center: 0.5, alpha: 1.0 }).is_err());
    }

    #[test]
    fn rejects_non_hyperbolic_parameters() {
        assert!(make_baseline(Family::Weierstrass { c0: 0.5, c1: 1.0, n_max: 8 }).is_err());
        assert!(make_baseline(Family::Constant { value: 0.0 }).is_err());
        assert!(make_baseline(Family::Lipschitz { offset: 0.1, slope: -1.0, center: 0.5 }).is_err());
    }

    #[test]
    fn travel_times() {
        let c = make_baseline(Family::Constant { value: 4.0 * PI * PI }).unwrap();
        assert!((travel_time(&c).value - 2.0 * PI).abs() < 1e-12);
        let one = make_baseline(Family::Constant { value: 1.0 }).unwrap();
        assert!((travel_time(&one).value - 1.0).abs() < 1e-14);
        let w = weierstrass_in_bounds(1.0, 3.0, 12).unwrap();
        let t = travel_time(&w);
        let simpson = crate::quadrature::composite_simpson(&|x: f64| w.eval(x).sqrt(), 0.0, 1.0, 1 << 18);
        assert!((t.value - simpson).abs() < 1e-8);
    }

    #[test]
    fn json_round_trip_of_descriptors() {
        let fams = vec![
            Family::Lipschitz { offset: 1.0, slope: 2.0, center: 0.3 },
            Family::BvStep { values: vec![1.0, 2.0, 1.5], jumps: vec![0.25, 0.75] },
            Family::LogLipschitz { offset: 1.0, amplitude: 0.5, center: 0.5, mu_power: 0.5 },
            Family::Trigonometric { mean: 1.5, cos: vec![0.1, 0.05], sin: vec![0.2, 0.0] },
        ];
        for f in fams {
            let c = make_baseline(f).unwrap().with_provenance("seed", "7");
            let s = serde_json::to_string(&c).unwrap();
            let d: Coefficient = serde_json::from_str(&s).unwrap();
            assert_eq!(c, d);
            assert_eq!(c.eval(0.4321).to_bits(), d.eval(0.4321).to_bits());
        }
    }

    #[test]
    fn csv_sample_has_header_and_nodes() {
        let c = make_baseline(Family::Constant { value: 2.0 }).unwrap();
        let s = c.to_csv(4);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "x,omega");
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[5], "1,2");
    }

    fn scaled_density() -> (CounterexampleParams, Coefficient) {
        let spec = SequenceSpec {
            descriptor: ModulusDescriptor::Psi(Psi::Identity),
            n: 2,
            j_min: 2,
            j_max: 5,
            mode: SequenceMode::Scaled { j0: 4 },
            m_const: 25.0,
        };
        let params = make_sequences(&spec).unwrap();
        let pairs = build_pairs(&params, Cutoff::default(), 0.3).unwrap();
        let c = make_counterexample_density(&params, &pairs).unwrap().remove(0);
        (params, c)
    }

    #[test]
    fn counterexample_density_examples() {
        let (params, c) = scaled_density();
        assert_eq!(c.kind(), Kind::CounterexamplePsi);
        for i in 0..100 {
            let x = 0.5 + 0.5 * (i as f64 + 0.5) / 100.0;
            assert_eq!(c.eval(x), 4.0 * PI * PI);
        }
        for r in &params.records {
            assert_eq!(c.eval(r.m), 4.0 * PI * PI);
            // Continuity at both ends of every interval.
            let (lo, hi) = r.interval;
            assert!((c.eval(lo + 1e-12) - 4.0 * PI * PI).abs() < 1e-9);
            assert_eq!(c.eval(hi), 4.0 * PI * PI);
        }
        let s = c.sample(1 << 16);
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo >= 2.0 * PI * PI && hi <= 8.0 * PI * PI);
        let t = travel_time(&c).value;
        assert!(t >= PI * 2f64.sqrt() && t <= 2.0 * PI * 2f64.sqrt());
    }

    #[test]
    fn counterexample_is_deterministic() {
        let (_, a) = scaled_density();
        let (_, b) = scaled_density();
        let sa = a.sample(4096);
        let sb = b.sample(4096);
        assert!(sa.iter().zip(&sb).all(|(x, y)| x.to_bits() == y.to_bits()));
        let json = serde_json::to_string(&a).unwrap();
        let back: Coefficient = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn lambda_mode_gives_one_density_per_level() {
        let spec = SequenceSpec {
            descriptor: ModulusDescriptor::Lambda(Lambda::LogPower { p: 0.5 }),
            n: 2,
            j_min: 2,
            j_max: 4,
            mode: SequenceMode::Scaled { j0: 4 },
            m_const: 25.0,
        };
        let params = make_sequences(&spec).unwrap();
        let pairs = build_pairs(&params, Cutoff::default(), 0.3).unwrap();
        let ds = make_counterexample_density(&params, &pairs).unwrap();
        assert_eq!(ds.len(), 3);
        for (d, r) in ds.iter().zip(&params.records) {
            assert_eq!(d.kind(), Kind::CounterexampleLambda { j: r.j });
            assert_eq!(d.density().unwrap().pieces.len(), 1);
        }
    }

    #[test]
    fn mismatched_pair_is_rejected() {
        let spec = SequenceSpec {
            descriptor: ModulusDescriptor::Psi(Psi::Identity),
            n: 2,
            j_min: 5,
            j_max: 6,
            mode: SequenceMode::Scaled { j0: 4 },
            m_const: 25.0,
        };
        let params = make_sequences(&spec).unwrap();
        let pair = build_oscillator_pair(0.01, Cutoff::default(), tolerances::EPS_BAR).unwrap();
        assert!(make_counterexample_density(&params, &[pair.clone(), pair]).is_err());
    }
}
