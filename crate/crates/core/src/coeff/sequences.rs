//! Scale sequences of the counterexample: radii `r_j = 2^-j`, centres
//! `m_j = 3 2^-(j+1)`, frequencies `h_j` and oscillation parameters `eps_j`.
//!
//! Paper-strict frequencies `h_j = exp(psi^-1(2^(N j)))` overflow doubles
//! immediately, so every record carries `ln h_j` and `ln eps_j`. The integer
//! part `K_j = ceil(psi^-1(2^(N j)))` is exact in `f64` for the sizes used
//! here, and the correction that makes `n_j = h_j r_j` an even integer is
//! below `2 e^-(K_j - j ln 2)`; it is applied whenever it is representable.
//! All three scale conditions are evaluated in the log domain.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

/// Concave modulus profile `psi` on `[1, inf)` with `psi(1) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "psi", rename_all = "kebab-case")]
pub enum Psi {
    Identity,
    /// `sigma^p`, `0 < p <= 1`.
    Power { p: f64 },
    /// `1 + ln sigma`.
    LogShift,
    /// Piecewise-linear table through `(sigma_i, value_i)`.
    Table { sigma: Vec<f64>, value: Vec<f64> },
}

/// Decreasing profile `lambda` on `]0, 1]` with `lambda(1) = 1` and
/// sub-logarithmic growth at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "lambda", rename_all = "kebab-case")]
pub enum Lambda {
    /// `(1 + ln(1/sigma))^p`, `0 < p < 1`.
    LogPower { p: f64 },
    /// `1 + ln(1 + ln(1/sigma))`.
    LogLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModulusDescriptor {
    Psi(Psi),
    Lambda(Lambda),
}

impl Psi {
    pub fn validate(&self) -> Result<()> {
        match self {
            Psi::Identity | Psi::LogShift => Ok(()),
            Psi::Power { p } if *p > 0.0 && *p <= 1.0 => Ok(()),
            Psi::Power { p } => Err(invalid(format!("psi power {p} outside ]0, 1]"))),
            Psi::Table { sigma, value } => {
                if sigma.len() < 2 || sigma.len() != value.len() {
                    return Err(invalid("psi table needs at least two matching columns"));
                }
                if sigma[0] != 1.0 || value[0] != 1.0 {
                    return Err(invalid("psi table must start at (1, 1)"));
                }
                let mut prev_slope = f64::INFINITY;
                for w in 0..sigma.len() - 1 {
                    let ds = sigma[w + 1] - sigma[w];
                    let dv = value[w + 1] - value[w];
                    if !(ds > 0.0 && dv > 0.0) {
                        return Err(invalid("psi table is not strictly increasing, so it is not invertible"));
                    }
                    let slope = dv / ds;
                    if slope > prev_slope {
                        return Err(invalid("psi table is not concave"));
                    }
                    prev_slope = slope;
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, sigma: f64) -> f64 {
        match self {
            Psi::Identity => sigma,
            Psi::Power { p } => sigma.powf(*p),
            Psi::LogShift => 1.0 + sigma.ln(),
            Psi::Table { sigma: s, value } => table_interp(s, value, sigma),
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        match self {
            Psi::Identity => y,
            Psi::Power { p } => y.powf(1.0 / p),
            Psi::LogShift => (y - 1.0).exp(),
            Psi::Table { sigma, value } => table_interp(value, sigma, y),
        }
    }
}

/// Linear interpolation in a strictly increasing table, extrapolating with the end slopes.
fn table_interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let k = match xs.iter().position(|&v| v >= x) {
        Some(0) => 0,
        Some(k) => k - 1,
        None => n - 2,
    };
    let k = k.min(n - 2);
    ys[k] + (ys[k + 1] - ys[k]) * (x - xs[k]) / (xs[k + 1] - xs[k])
}

impl Lambda {
    pub fn validate(&self) -> Result<()> {
        match self {
            Lambda::LogPower { p } if *p > 0.0 && *p < 1.0 => Ok(()),
            Lambda::LogPower { p } => Err(invalid(format!("lambda power {p} outside ]0, 1[")),),
            Lambda::LogLog => Ok(()),
        }
    }

    /// `lambda(sigma)` given `L = ln(1/sigma) >= 0`.
    pub fn eval_log(&self, l: f64) -> f64 {
        match self {
            Lambda::LogPower { p } => (1.0 + l).powf(*p),
            Lambda::LogLog => 1.0 + (1.0 + l).ln(),
        }
    }

    /// `ln(1/lambda^-1(y))`.
    pub fn inverse_log(&self, y: f64) -> f64 {
        match self {
            Lambda::LogPower { p } => y.powf(1.0 / p) - 1.0,
            Lambda::LogLog => (y - 1.0).exp() - 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SequenceMode {
    /// `h_j = exp(ceil(psi^-1(2^(N j))))`, adjusted so `n_j` is even.
    PaperStrict,
    /// `h_j = 2^(j + j0)`; used for every ODE/PDE run.
    Scaled { j0: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub descriptor: ModulusDescriptor,
    pub n: u32,
    pub j_min: u32,
    pub j_max: u32,
    pub mode: SequenceMode,
    /// The constant `M` of the oscillator pair entering the scale conditions.
    pub m_const: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub j: u32,
    pub r: f64,
    pub m: f64,
    /// `I_j = ]lo, hi]`.
    pub interval: (f64, f64),
    pub log_h: f64,
    /// `h_j` when it fits in a double with `n_j` exact.
    pub h: Option<f64>,
    /// `ln(eps_j h_j)`, kept separately to avoid cancellation against `ln h_j`.
    pub log_eps_h: f64,
    pub log_eps: f64,
    pub eps: f64,
    pub log_n: f64,
    /// `n_j = h_j r_j` when it is exactly representable.
    pub n: Option<u64>,
}

impl ScaleRecord {
    /// `ln(eps_j h_j r_j)`.
    pub fn log_ehr(&self) -> f64 {
        self.log_eps_h - self.j as f64 * LN2
    }
}

/// The three scale conditions for one `j`, with the log-margins
/// (right side minus left side, in log scale; positive means satisfied).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondFlags {
    pub j: u32,
    pub eps_small: bool,
    pub tail_small: bool,
    pub head_small: bool,
    pub margins: [f64; 3],
}

impl CondFlags {
    pub fn all(&self) -> bool {
        self.eps_small && self.tail_small && self.head_small
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleParams {
    pub spec: SequenceSpec,
    pub records: Vec<ScaleRecord>,
    pub cond: Vec<CondFlags>,
    pub eps_decreasing: bool,
    pub n_increasing: bool,
}

impl CounterexampleParams {
    pub fn record(&self, j: u32) -> Option<&ScaleRecord> {
        self.records.iter().find(|r| r.j == j)
    }

    pub fn all_conditions_hold(&self) -> bool {
        self.cond.iter().all(CondFlags::all)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Radius, centre and interval of level `j`.
pub fn interval(j: u32) -> (f64, f64, (f64, f64)) {
    let r = 0.5f64.powi(j as i32);
    let m = 1.5 * r;
    (r, m, (m - 0.5 * r, m + 0.5 * r))
}

fn record(spec: &SequenceSpec, j: u32) -> Result<ScaleRecord> {
    let (r, m, iv) = interval(j);
    let ln_r = -(j as f64) * LN2;
    let (log_h, h, log_n, n) = match (&spec.mode, &spec.descriptor) {
        (SequenceMode::Scaled { j0 }, _) => {
            if *j0 < 1 {
                return Err(invalid("scaled mode needs j0 >= 1 so that n_j is even"));
            }
            let h = 2f64.powi((j + j0) as i32);
            (h.ln(), Some(h), (*j0 as f64) * LN2, Some(1u64 << j0))
        }
        (SequenceMode::PaperStrict, desc) => {
            let target = 2f64.powi((spec.n * j) as i32);
            let k = match desc {
                ModulusDescriptor::Psi(psi) => psi.inverse(target).ceil(),
                ModulusDescriptor::Lambda(l) => l.inverse_log(target).ceil(),
            };
            if !k.is_finite() {
                return Err(invalid(format!("ln h_{j} overflows")));
            }
            let log_n0 = k + ln_r;
            if log_n0 < 40.0 {
                // Round n_j up to an even integer so that interval ends land on integers.
                let n0 = log_n0.exp();
                let n = 2.0 * (n0 / 2.0).ceil();
                let h = n / r;
                (h.ln(), Some(h), n.ln(), Some(n as u64))
            } else {
                // The correction is below 2 e^-40 relative: ln h_j = K_j in double precision.
                (k, None, log_n0, None)
            }
        }
    };
    let log_eps_h = match &spec.descriptor {
        ModulusDescriptor::Psi(psi) => log_h.ln() + psi.eval(log_h).ln(),
        ModulusDescriptor::Lambda(l) => log_h.ln() + l.eval_log(log_h).ln(),
    };
    let log_eps = log_eps_h - log_h;
    let eps = match h {
        Some(h) => log_eps_h.exp() / h,
        None => log_eps.exp(),
    };
    Ok(ScaleRecord { j, r, m, interval: iv, log_h, h, log_eps_h, log_eps, eps, log_n, n })
}

/// Builds the scale sequences and evaluates the three scale conditions.
///
/// Violated conditions are flagged, never turned into errors.
pub fn make_sequences(spec: &SequenceSpec) -> Result<CounterexampleParams> {
    match &spec.descriptor {
        ModulusDescriptor::Psi(p) => p.validate()?,
        ModulusDescriptor::Lambda(l) => l.validate()?,
    }
    if spec.j_min < 2 || spec.j_max < spec.j_min {
        return Err(invalid(format!("j range {}..={} must lie in {{2, 3, ...}}", spec.j_min, spec.j_max)));
    }
    if spec.n == 0 || !(spec.m_const > 0.0) {
        return Err(invalid("N and M must be positive"));
    }
    if let SequenceMode::PaperStrict = spec.mode {
        if 2f64.powi((spec.n * (spec.j_max + TAIL_TERMS)) as i32).is_infinite() {
            return Err(invalid("2^(N j) overflows for the requested range"));
        }
    }
    // Conditions involve k = 1 .. j-1 and a tail k > j; compute a few extra levels.
    let all: Vec<ScaleRecord> =
        (1..=spec.j_max + TAIL_TERMS).map(|j| record(spec, j)).collect::<Result<_>>()?;
    for w in all.windows(2) {
        if !(w[1].log_h > w[0].log_h) {
            return Err(Error::InvalidParameter("h_j is not increasing; descriptor table not invertible".into()));
        }
    }
    let ln5m = (5.0 * spec.m_const).ln();
    let mut cond = Vec::new();
    for rec in all.iter().filter(|r| r.j >= spec.j_min && r.j <= spec.j_max) {
        let j = rec.j as usize;
        let m0 = -(2.0 * spec.m_const).ln() - rec.log_eps;
        let tail: Vec<f64> = all[j..].iter().map(|k| k.log_eps - k.j as f64 * LN2).collect();
        let m1 = (rec.log_eps - rec.j as f64 * LN2) - (ln5m + log_sum_exp(&tail));
        let head: Vec<f64> = all[..j - 1].iter().map(ScaleRecord::log_ehr).collect();
        let m2 = rec.log_ehr() - (ln5m + log_sum_exp(&head));
        cond.push(CondFlags {
            j: rec.j,
            eps_small: m0 >= 0.0,
            tail_small: m1 >= 0.0,
            head_small: m2 >= 0.0,
            margins: [m0, m1, m2],
        });
    }
    let records: Vec<ScaleRecord> =
        all.into_iter().filter(|r| r.j >= spec.j_min && r.j <= spec.j_max).collect();
    let eps_decreasing = records.windows(2).all(|w| w[1].log_eps < w[0].log_eps);
    let n_increasing = records.windows(2).all(|w| w[1].log_n > w[0].log_n);
    Ok(CounterexampleParams { spec: spec.clone(), records, cond, eps_decreasing, n_increasing })
}

/// Number of levels beyond `j_max` summed in the tail condition. Terms
/// decay at least like `exp(-(ln h_k - ln h_j))`, so the remainder is far
/// below double precision.
pub const TAIL_TERMS: u32 = 4;

#[cfg(test)]
mod tests {
    use super::*;

    fn scaled() -> SequenceSpec {
        SequenceSpec {
            descriptor: ModulusDescriptor::Psi(Psi::Identity),
            n: 2,
            j_min: 2,
            j_max: 6,
            mode: SequenceMode::Scaled { j0: 4 },
            m_const: 25.0,
        }
    }

    #[test]
    fn intervals_tile_the_left_half() {
        let (r, m, iv) = interval(3);
        assert_eq!((r, m, iv), (0.125, 0.1875, (0.125, 0.25)));
        for j in 2..30 {
            let (_, _, a) = interval(j);
            let (_, _, b) = interval(j + 1);
            assert_eq!(a.0, b.1);
        }
        assert_eq!(interval(2).2 .1, 0.5);
    }

    #[test]
    fn scaled_identity_matches_the_defining_relation() {
        let p = make_sequences(&scaled()).unwrap();
        let r2 = p.record(2).unwrap();
        assert_eq!(r2.h, Some(64.0));
        let expected = 64f64.ln() * 64f64.ln() / 64.0;
        assert!((r2.eps - expected).abs() < 1e-15);
        assert!(p.eps_decreasing);
        // n_j = 16 at every level: flagged, since the sequence must grow.
        assert!(!p.n_increasing);
        for r in &p.records {
            assert_eq!(r.n, Some(16));
        }
    }

    #[test]
    fn strict_identity_n2_j2_starts_from_e16() {
        let spec = SequenceSpec { mode: SequenceMode::PaperStrict, ..scaled() };
        let p = make_sequences(&spec).unwrap();
        let r2 = p.record(2).unwrap();
        let h = r2.h.unwrap();
        let n = r2.n.unwrap();
        assert_eq!(n % 2, 0);
        assert_eq!(h * 0.25, n as f64);
        assert!(h >= 16f64.exp() && h < 16f64.exp() + 8.0, "h = {h}, n = {n}");
        assert!(p.n_increasing && p.eps_decreasing);
        // eps_j h_j = ln h_j psi(ln h_j), checked through the logs.
        for r in &p.records {
            let lhs = r.log_eps + r.log_h;
            let rhs = 2.0 * r.log_h.ln();
            assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn large_n_satisfies_every_condition() {
        for (n, expect) in [(2, false), (8, true)] {
            let spec = SequenceSpec { n, mode: SequenceMode::PaperStrict, ..scaled() };
            let p = make_sequences(&spec).unwrap();
            assert_eq!(p.all_conditions_hold(), expect, "N = {n}");
        }
    }

    #[test]
    fn head_condition_against_direct_evaluation() {
        // For psi = id: eps_k h_k r_k = (ln h_k)^2 2^-k; with N = 8 these fit in doubles.
        let spec = SequenceSpec { n: 8, mode: SequenceMode::PaperStrict, ..scaled() };
        let p = make_sequences(&spec).unwrap();
        for c in &p.cond {
            let j = c.j as i32;
            let term = |k: i32| {
                let l = 2f64.powi(8 * k).ceil();
                l * l * 0.5f64.powi(k)
            };
            let head: f64 = (1..j).map(term).sum();
            let margin = (term(j) / (5.0 * 25.0 * head)).ln();
            assert!((margin - c.margins[2]).abs() < 1e-9, "j = {j}: {margin} vs {}", c.margins[2]);
        }
    }

    #[test]
    fn lambda_scaled_relation() {
        let spec = SequenceSpec {
            descriptor: ModulusDescriptor::Lambda(Lambda::LogPower { p: 0.5 }),
            ..scaled()
        };
        let p = make_sequences(&spec).unwrap();
        for r in &p.records {
            let h = r.h.unwrap();
            let expected = (1.0 + h.ln()).sqrt() * h.ln() / h;
            assert!((r.eps - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_descriptors() {
        let bad = SequenceSpec {
            descriptor: ModulusDescriptor::Psi(Psi::Table { sigma: vec![1.0, 2.0, 3.0], value: vec![1.0, 1.5, 1.5] }),
            ..scaled()
        };
        assert!(make_sequences(&bad).is_err());
        let bad = SequenceSpec { j_min: 1, ..scaled() };
        assert!(make_sequences(&bad).is_err());
        let convex = SequenceSpec {
            descriptor: ModulusDescriptor::Psi(Psi::Table { sigma: vec![1.0, 2.0, 3.0], value: vec![1.0, 1.5, 3.0] }),
            ..scaled()
        };
        assert!(make_sequences(&convex).is_err());
    }

    #[test]
    fn table_psi_inverts() {
        let t = Psi::Table { sigma: vec![1.0, 2.0, 4.0], value: vec![1.0, 2.0, 3.0] };
        t.validate().unwrap();
        for y in [1.0, 1.5, 2.5, 3.0, 5.0] {
            assert!((t.eval(t.inverse(y)) - y).abs() < 1e-14);
        }
    }
}
