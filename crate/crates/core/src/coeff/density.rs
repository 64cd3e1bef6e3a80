//! Counterexample densities: `omega(x) = alpha_{eps_j}(h_j (x - m_j))` on
//! each active interval `I_j` and `4 pi^2` elsewhere.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::oscillator::{build_oscillator_pair, Cutoff, PeriodicPair};
use super::sequences::{CounterexampleParams, ScaleRecord};
use crate::error::{invalid, Error, Result};

const FOUR_PI2: f64 = 4.0 * PI * PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPiece {
    pub j: u32,
    pub m: f64,
    pub r: f64,
    pub h: f64,
    pub n: u64,
    pub pair: PeriodicPair,
}

impl DensityPiece {
    pub fn interval(&self) -> (f64, f64) {
        (self.m - 0.5 * self.r, self.m + 0.5 * self.r)
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.interval();
        x > lo && x <= hi
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.pair.alpha(self.h * (x - self.m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleDensity {
    pub pieces: Vec<DensityPiece>,
}

impl CounterexampleDensity {
    pub fn eval(&self, x: f64) -> f64 {
        self.pieces.iter().find(|p| p.contains(x)).map_or(FOUR_PI2, |p| p.eval(x))
    }

    pub fn piece(&self, j: u32) -> Option<&DensityPiece> {
        self.pieces.iter().find(|p| p.j == j)
    }

    /// Lower and upper bounds from the measured constants of each pair.
    pub fn bounds(&self) -> (f64, f64) {
        let mut lo = FOUR_PI2;
        let mut hi = FOUR_PI2;
        for p in &self.pieces {
            // Measured on a 1e-5 grid; widen slightly to cover the gaps between samples.
            let dev = p.pair.constants().m * p.pair.eps() * (1.0 + 1e-6) + 1e-9;
            lo = lo.min(FOUR_PI2 - dev);
            hi = hi.max(FOUR_PI2 + dev);
        }
        (lo, hi)
    }

    /// Integer arguments of every piece: `omega` is smooth but the
    /// integrand varies on the scale `1/h_j` between these points.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for p in &self.pieces {
            let (lo, _) = p.interval();
            for k in 0..=p.n {
                v.push(lo + k as f64 / p.h);
            }
        }
        v
    }
}

/// One oscillator pair per level, with `eps` taken from the sequences.
pub fn build_pairs(params: &CounterexampleParams, cutoff: Cutoff, eps_bar: f64) -> Result<Vec<PeriodicPair>> {
    params.records.iter().map(|r| build_oscillator_pair(r.eps, cutoff, eps_bar)).collect()
}

fn piece(rec: &ScaleRecord, pair: &PeriodicPair) -> Result<DensityPiece> {
    let (Some(h), Some(n)) = (rec.h, rec.n) else {
        return Err(invalid(format!("h_{} is not representable; this level only supports inequality checks", rec.j)));
    };
    if n % 2 != 0 || (h * rec.r) != n as f64 {
        return Err(Error::InvalidParameter(format!(
            "n_{} = h r = {} is not an even integer, gluing would be discontinuous",
            rec.j,
            h * rec.r
        )));
    }
    let rel = (pair.eps() - rec.eps).abs() / rec.eps;
    if rel > 1e-12 {
        return Err(invalid(format!("pair eps {} does not match eps_{} = {}", pair.eps(), rec.j, rec.eps)));
    }
    Ok(DensityPiece { j: rec.j, m: rec.m, r: rec.r, h, n, pair: pair.clone() })
}

fn check_bounds(d: &CounterexampleDensity) -> Result<()> {
    let (lo, hi) = d.bounds();
    if lo < 2.0 * PI * PI || hi > 8.0 * PI * PI {
        return Err(Error::Hyperbolicity(format!("density range [{lo}, {hi}] leaves [2 pi^2, 8 pi^2]")));
    }
    Ok(())
}

/// All levels in one density.
pub fn psi_density(params: &CounterexampleParams, pairs: &[PeriodicPair]) -> Result<CounterexampleDensity> {
    if pairs.len() != params.records.len() {
        return Err(invalid("need exactly one pair per level"));
    }
    let pieces = params.records.iter().zip(pairs).map(|(r, p)| piece(r, p)).collect::<Result<Vec<_>>>()?;
    let d = CounterexampleDensity { pieces };
    check_bounds(&d)?;
    Ok(d)
}

/// One density per level, each with a single active interval.
pub fn lambda_densities(
    params: &CounterexampleParams,
    pairs: &[PeriodicPair],
) -> Result<Vec<(u32, CounterexampleDensity)>> {
    if pairs.len() != params.records.len() {
        return Err(invalid("need exactly one pair per level"));
    }
    params
        .records
        .iter()
        .zip(pairs)
        .map(|(r, p)| {
            let d = CounterexampleDensity { pieces: vec![piece(r, p)?] };
            check_bounds(&d)?;
            Ok((r.j, d))
        })
        .collect()
}
