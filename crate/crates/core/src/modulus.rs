//! Moduli of continuity, total variation and Littlewood-Paley blocks of
//! sampled functions, and a classifier over the regularity ladder.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::coeff::Coefficient;
use crate::error::{invalid, Result};
use crate::tolerances;

/// Samples `values[i] = f(i * length / n)`, `i = 0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampled {
    pub values: Vec<f64>,
    pub length: f64,
}

impl Sampled {
    pub fn new(values: Vec<f64>, length: f64) -> Result<Self> {
        if values.len() < 3 {
            return Err(invalid("need at least 3 samples"));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(invalid("length must be positive"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("samples must be finite"));
        }
        Ok(Sampled { values, length })
    }

    pub fn from_fn(f: impl Fn(f64) -> f64, cells: usize) -> Result<Self> {
        Sampled::new((0..=cells).map(|i| f(i as f64 / cells as f64)).collect(), 1.0)
    }

    pub fn from_coefficient(c: &Coefficient, cells: usize) -> Result<Self> {
        Sampled::new(c.sample(cells), c.length())
    }

    /// Parses `x,f` rows (an optional header line and `#` comments are skipped).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut fs = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let mut it = line.split(',');
            let (Some(a), Some(b)) = (it.next(), it.next()) else {
                return Err(invalid(format!("malformed row '{line}'")));
            };
            match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
                (Ok(x), Ok(v)) => {
                    xs.push(x);
                    fs.push(v);
                }
                _ if xs.is_empty() => continue,
                _ => return Err(invalid(format!("non-numeric row '{line}'"))),
            }
        }
        if xs.len() < 3 {
            return Err(invalid("need at least 3 rows"));
        }
        let n = xs.len() - 1;
        let dx = (xs[n] - xs[0]) / n as f64;
        for (i, x) in xs.iter().enumerate() {
            if (x - xs[0] - i as f64 * dx).abs() > 1e-9 * (xs[n] - xs[0]).abs().max(1.0) {
                return Err(invalid("samples must lie on a uniform grid"));
            }
        }
        Sampled::new(fs, xs[n] - xs[0])
    }

    pub fn cells(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dx(&self) -> f64 {
        self.length / self.cells() as f64
    }

    pub fn scaled(&self, c: f64) -> Sampled {
        Sampled { values: self.values.iter().map(|v| c * v).collect(), length: self.length }
    }

    /// Grid step count for `h`, rejecting `h` below two cells or off the grid.
    fn steps(&self, h: f64) -> Result<usize> {
        let k = h / self.dx();
        let kr = k.round();
        if (k - kr).abs() > 1e-9 * k.max(1.0) {
            return Err(invalid(format!("h = {h} is not a multiple of the sample spacing")));
        }
        if kr < 2.0 {
            return Err(invalid(format!("h = {h} is below twice the sample spacing")));
        }
        if kr as usize > self.cells() / 2 {
            return Err(invalid(format!("h = {h} exceeds half the interval")));
        }
        Ok(kr as usize)
    }
}

/// Dyadic steps `h = 2^-k`, `k = 2 ..= log2(cells) - 2`, scaled by the length.
pub fn default_h_grid(f: &Sampled) -> Vec<f64> {
    let levels = (f.cells() as f64).log2().floor() as i32;
    (2..=levels - 2).map(|k| f.length * 0.5f64.powi(k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    Pointwise,
    Integral,
}

/// Denominator `h` or `h log(1 + 1/h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weight {
    Linear,
    Log,
}

impl Weight {
    fn of(self, h: f64) -> f64 {
        match self {
            Weight::Linear => h,
            Weight::Log => h * (1.0 + 1.0 / h).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormEntry {
    /// `Lip`, `LL_inf`, `Z_inf`, `LZ_inf`, `Lip_1`, `LL_1`, `Z_1`, `LZ_1`.
    pub name: String,
    pub order: Order,
    pub norm: NormKind,
    pub weight: Weight,
    /// Supremum of the ratios over the grid.
    pub value: f64,
    /// `(h, difference / weight(h))` in increasing `h`.
    pub ratios: Vec<(f64, f64)>,
}

fn entry_name(order: Order, norm: NormKind, weight: Weight) -> &'static str {
    match (order, norm, weight) {
        (Order::First, NormKind::Pointwise, Weight::Linear) => "Lip",
        (Order::First, NormKind::Pointwise, Weight::Log) => "LL_inf",
        (Order::Second, NormKind::Pointwise, Weight::Linear) => "Z_inf",
        (Order::Second, NormKind::Pointwise, Weight::Log) => "LZ_inf",
        (Order::First, NormKind::Integral, Weight::Linear) => "Lip_1",
        (Order::First, NormKind::Integral, Weight::Log) => "LL_1",
        (Order::Second, NormKind::Integral, Weight::Linear) => "Z_1",
        (Order::Second, NormKind::Integral, Weight::Log) => "LZ_1",
    }
}

/// Raw difference size at step `k` (grid units).
///
/// Second differences are taken on the interior `[h, 1 - h]` in both
/// norms, so that affine data give exactly zero.
fn difference(f: &Sampled, k: usize, order: Order, norm: NormKind) -> f64 {
    let v = &f.values;
    let n = f.cells();
    let d: Box<dyn Fn(usize) -> f64> = match order {
        Order::First => Box::new(|i| (v[i + k] - v[i]).abs()),
        Order::Second => Box::new(|i| (v[i + k] + v[i - k] - 2.0 * v[i]).abs()),
    };
    let (lo, hi) = match order {
        Order::First => (0, n - k),
        Order::Second => (k, n - k),
    };
    match norm {
        NormKind::Pointwise => (lo..=hi).map(&d).fold(0.0, f64::max),
        NormKind::Integral => {
            if hi == lo {
                return 0.0;
            }
            let inner: f64 = (lo + 1..hi).map(&d).sum();
            f.dx() * (inner + 0.5 * (d(lo) + d(hi)))
        }
    }
}

/// Both weights of one difference seminorm over `h_grid`.
pub fn difference_seminorms(f: &Sampled, order: Order, norm: NormKind, h_grid: &[f64]) -> Result<Vec<SeminormEntry>> {
    let mut hs: Vec<f64> = h_grid.to_vec();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    if hs.is_empty() {
        return Err(invalid("empty h grid"));
    }
    let raw: Vec<(f64, f64)> =
        hs.iter().map(|&h| Ok((h, difference(f, f.steps(h)?, order, norm)))).collect::<Result<_>>()?;
    Ok([Weight::Linear, Weight::Log]
        .into_iter()
        .map(|w| {
            let ratios: Vec<(f64, f64)> = raw.iter().map(|&(h, d)| (h, d / w.of(h))).collect();
            SeminormEntry {
                name: entry_name(order, norm, w).into(),
                order,
                norm,
                weight: w,
                value: ratios.iter().map(|r| r.1).fold(0.0, f64::max),
                ratios,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvReport {
    pub tv: f64,
    /// `(cells, TV)` from the coarsest subsample to the full grid.
    pub levels: Vec<(usize, f64)>,
    /// `TV(level + 1) / TV(level)`.
    pub growth: Vec<f64>,
    /// Growth at least `TV_GROWTH_PER_LEVEL` on each of the last `TV_LEVELS` refinements.
    pub not_bv: bool,
}

fn tv_of(values: &[f64], stride: usize) -> f64 {
    values.iter().step_by(stride).collect::<Vec<_>>().windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Total variation on the sample and on dyadic subsamples.
pub fn total_variation(f: &Sampled) -> TvReport {
    let n = f.cells();
    let mut strides = Vec::new();
    let mut s = 1;
    while n.is_multiple_of(s) && n / s >= 8 && strides.len() < 9 {
        strides.push(s);
        s *= 2;
    }
    strides.reverse();
    let levels: Vec<(usize, f64)> = strides.iter().map(|&s| (n / s, tv_of(&f.values, s))).collect();
    let growth: Vec<f64> = levels.windows(2).map(|w| if w[0].1 > 0.0 { w[1].1 / w[0].1 } else { 1.0 }).collect();
    let k = tolerances::TV_LEVELS;
    let not_bv = growth.len() >= k && growth[growth.len() - k..].iter().all(|&g| g >= tolerances::TV_GROWTH_PER_LEVEL);
    TvReport { tv: tv_of(&f.values, 1), levels, growth, not_bv }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub h_grid: Vec<f64>,
    pub entries: Vec<SeminormEntry>,
    pub tv: TvReport,
}

impl ModulusReport {
    pub fn entry(&self, name: &str) -> Option<&SeminormEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Every pointwise and integral seminorm together with the TV trend.
pub fn modulus_report(f: &Sampled, h_grid: &[f64]) -> Result<ModulusReport> {
    let mut entries = Vec::new();
    for norm in [NormKind::Pointwise, NormKind::Integral] {
        for order in [Order::First, Order::Second] {
            entries.extend(difference_seminorms(f, order, norm, h_grid)?);
        }
    }
    let mut hs = h_grid.to_vec();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    Ok(ModulusReport { h_grid: hs, entries, tv: total_variation(f) })
}

// ---------------------------------------------------------------- dyadic blocks

/// `exp(-1/t)` transition from 0 at `t = 0` to 1 at `t = 1`.
fn transition(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Radial cutoff: 1 on `|xi| <= 3/4`, 0 on `|xi| >= 4/3`, smooth between.
pub fn chi(xi: f64) -> f64 {
    let r = xi.abs();
    transition((4.0 / 3.0 - r) / (4.0 / 3.0 - 3.0 / 4.0))
}

/// `phi(xi) = chi(xi / 2) - chi(xi)`, supported in `[3/4, 8/3]`.
pub fn phi(xi: f64) -> f64 {
    chi(0.5 * xi) - chi(xi)
}

/// Multiplier of block `j` (`j = -1` is the low-frequency block) at frequency `nu`.
fn multiplier(j: i32, nu: f64) -> f64 {
    if j < 0 {
        chi(nu)
    } else {
        phi(nu * 0.5f64.powi(j))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Extension {
    Periodic,
    Even,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicBlock {
    pub j: i32,
    pub norm_1: f64,
    pub norm_2: f64,
    pub norm_inf: f64,
    /// Fourier mass of the block outside `[3/4 2^j, 8/3 2^j]`, relative to its total.
    pub outside_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicSpectrum {
    pub extension: Extension,
    pub blocks: Vec<DyadicBlock>,
    /// `sup_j 2^j ||Delta_j f||_p` for `p = 1, 2, inf`.
    pub besov_1: f64,
    pub besov_2: f64,
    pub besov_inf: f64,
    /// `sup_j 2^j max(j + 1, 1)^-1 ||Delta_j f||_inf`.
    pub besov_log_inf: f64,
    /// `max |f - sum_j Delta_j f|` on the sample.
    pub reconstruction_error: f64,
}

impl DyadicSpectrum {
    pub fn block(&self, j: i32) -> Option<&DyadicBlock> {
        self.blocks.iter().find(|b| b.j == j)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,norm_1,norm_2,norm_inf\n");
        for b in &self.blocks {
            s.push_str(&format!("{},{},{},{}\n", b.j, b.norm_1, b.norm_2, b.norm_inf));
        }
        s
    }
}

struct Spectrum {
    coeffs: Vec<Complex<f64>>,
    /// Frequency (cycles per unit length) of each coefficient.
    nu: Vec<f64>,
    inverse: Arc<dyn Fft<f64>>,
    /// Samples of `[0, length]` inside the extended signal.
    keep: usize,
}

fn spectrum(f: &Sampled, ext: Extension) -> Result<Spectrum> {
    let n = f.cells();
    if !n.is_power_of_two() {
        return Err(invalid(format!("{n} cells is not a power of two")));
    }
    let signal: Vec<f64> = match ext {
        Extension::Periodic => f.values[..n].to_vec(),
        Extension::Even => {
            let mut s = f.values.clone();
            s.extend(f.values[1..n].iter().rev());
            s
        }
    };
    let len = signal.len();
    let period = match ext {
        Extension::Periodic => f.length,
        Extension::Even => 2.0 * f.length,
    };
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let mut coeffs: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v, 0.0)).collect();
    forward.process(&mut coeffs);
    let nu = (0..len)
        .map(|k| {
            let signed = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 };
            signed.abs() / period
        })
        .collect();
    Ok(Spectrum { coeffs, nu, inverse, keep: n + 1 })
}

fn synthesize(sp: &Spectrum, weight: impl Fn(f64) -> f64) -> (Vec<f64>, f64) {
    let len = sp.coeffs.len();
    let mut buf: Vec<Complex<f64>> = sp.coeffs.iter().zip(&sp.nu).map(|(c, &nu)| c * weight(nu)).collect();
    let total: f64 = buf.iter().map(|c| c.norm_sqr()).sum();
    sp.inverse.process(&mut buf);
    // A periodic signal omits the last node; it equals the first.
    let out: Vec<f64> = (0..sp.keep).map(|i| buf[i % len].re / len as f64).collect();
    (out, total)
}

/// Littlewood-Paley blocks `Delta_j f`, `j = -1 ..= j_max`, as samples on `[0, length]`.
pub fn block_signals(f: &Sampled, j_max: i32, ext: Extension) -> Result<Vec<(i32, Vec<f64>)>> {
    check_j_max(f, j_max)?;
    let sp = spectrum(f, ext)?;
    Ok((-1..=j_max).into_par_iter().map(|j| (j, synthesize(&sp, |nu| multiplier(j, nu)).0)).collect())
}

fn check_j_max(f: &Sampled, j_max: i32) -> Result<()> {
    let limit = (f.cells() as f64).log2().floor() as i32 - 2;
    if j_max < -1 || j_max > limit {
        return Err(invalid(format!("j_max = {j_max} outside [-1, {limit}]")));
    }
    Ok(())
}

/// Block norms and Besov seminorm estimates.
pub fn dyadic_blocks(f: &Sampled, j_max: i32, ext: Extension) -> Result<DyadicSpectrum> {
    check_j_max(f, j_max)?;
    let sp = spectrum(f, ext)?;
    let dx = f.dx();
    let trap = |v: &[f64], p: f64| -> f64 {
        let n = v.len() - 1;
        let inner: f64 = v[1..n].iter().map(|x| x.abs().powf(p)).sum();
        (dx * (inner + 0.5 * (v[0].abs().powf(p) + v[n].abs().powf(p)))).powf(1.0 / p)
    };
    let results: Vec<(DyadicBlock, Vec<f64>)> = (-1..=j_max)
        .into_par_iter()
        .map(|j| {
            let (v, total) = synthesize(&sp, |nu| multiplier(j, nu));
            let (lo, hi) = if j < 0 { (0.0, 4.0 / 3.0) } else { (0.75 * 2f64.powi(j), 8.0 / 3.0 * 2f64.powi(j)) };
            let outside: f64 = sp
                .coeffs
                .iter()
                .zip(&sp.nu)
                .filter(|(_, &nu)| nu < lo || nu > hi)
                .map(|(c, &nu)| (c * multiplier(j, nu)).norm_sqr())
                .sum();
            let block = DyadicBlock {
                j,
                norm_1: trap(&v, 1.0),
                norm_2: trap(&v, 2.0),
                norm_inf: v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
                outside_mass: if total > 0.0 { outside / total } else { 0.0 },
            };
            (block, v)
        })
        .collect();
    let mut sum = vec![0.0f64; f.values.len()];
    for (_, v) in &results {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let reconstruction_error = sum.iter().zip(&f.values).fold(0.0f64, |m, (s, v)| m.max((s - v).abs()));
    let blocks: Vec<DyadicBlock> = results.into_iter().map(|(b, _)| b).collect();
    let sup = |g: &dyn Fn(&DyadicBlock) -> f64| blocks.iter().map(g).fold(0.0, f64::max);
    let p2 = |b: &DyadicBlock| 2f64.powi(b.j);
    Ok(DyadicSpectrum {
        extension: ext,
        besov_1: sup(&|b| p2(b) * b.norm_1),
        besov_2: sup(&|b| p2(b) * b.norm_2),
        besov_inf: sup(&|b| p2(b) * b.norm_inf),
        besov_log_inf: sup(&|b| p2(b) * b.norm_inf / ((b.j + 1).max(1) as f64)),
        blocks,
        reconstruction_error,
    })
}

// ---------------------------------------------------------------- classifier

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum ModulusClass {
    LipschitzBv,
    Zygmund,
    LogLipschitz,
    LogZygmund,
    Hoelder { alpha: f64 },
    BelowLogLipschitz,
    Inconclusive,
}

impl std::fmt::Display for ModulusClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModulusClass::LipschitzBv => write!(f, "Lipschitz/BV"),
            ModulusClass::Zygmund => write!(f, "Zygmund"),
            ModulusClass::LogLipschitz => write!(f, "log-Lipschitz"),
            ModulusClass::LogZygmund => write!(f, "log-Zygmund"),
            ModulusClass::Hoelder { alpha } => write!(f, "Hoelder({alpha:.3})"),
            ModulusClass::BelowLogLipschitz => write!(f, "below-log-Lipschitz"),
            ModulusClass::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: ModulusClass,
    /// Growth exponent of each pointwise ratio against `log2(1/h)`:
    /// near 0 when bounded, near 1 for logarithmic growth.
    pub growth: Vec<(String, f64)>,
    /// Growth exponent of `2^j ||Delta_j f||_inf` against `j + 2`.
    pub spectral_growth: f64,
    /// Power-law fit `mu_1(h) ~ h^alpha` of the first-difference modulus, with RMS residual.
    pub holder_alpha: f64,
    pub holder_residual: f64,
    /// Fit `mu_1(h) ~ h log(1 + 1/h)^p`, with RMS residual.
    pub log_power: f64,
    pub log_power_residual: f64,
    pub not_bv: bool,
}

/// Least-squares slope and RMS residual of `y` against `x`.
fn fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.len() < 2 {
        return (0.0, 0.0);
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (slope, (rss / n).sqrt())
}

/// Growth exponent over the finer half of the grid (at least three steps),
/// where the ratios have left the coarse-scale transient.
fn growth_exponent(ratios: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = ratios.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let keep = pts.len().div_ceil(2).max(3).min(pts.len());
    // Zero ratios (affine or constant data) carry no growth.
    let (x, y): (Vec<f64>, Vec<f64>) = pts[..keep]
        .iter()
        .filter(|r| r.1 > 0.0)
        .map(|&(h, r)| ((1.0 / h).log2().max(1.0).ln(), r.ln()))
        .unzip();
    fit(&x, &y).0
}

/// A ratio counts as bounded when its growth exponent is below this.
const BOUNDED: f64 = 0.5;

/// Places the sample on the ladder `Lipschitz ⊂ Z ⊂ LL ⊂ LZ`, then
/// Hoelder or below-log-Lipschitz.  The strongest class whose ratio stays
/// bounded wins; the result is inconclusive when the deciding exponent or
/// the one of the stronger class just rejected lies within the classifier
/// margin of the threshold, or when the two fallback fits are too close.
pub fn classify_modulus(report: &ModulusReport, spectrum: &DyadicSpectrum) -> Classification {
    let margin = tolerances::CLASSIFIER_MARGIN;
    let g = |name: &str| report.entry(name).map_or(0.0, |e| growth_exponent(&e.ratios));
    let ladder = [
        ("Lip", ModulusClass::LipschitzBv),
        ("Z_inf", ModulusClass::Zygmund),
        ("LL_inf", ModulusClass::LogLipschitz),
        ("LZ_inf", ModulusClass::LogZygmund),
    ];
    let growth: Vec<(String, f64)> = ladder.iter().map(|(n, _)| (n.to_string(), g(n))).collect();

    let spec_pts: Vec<(f64, f64)> = spectrum
        .blocks
        .iter()
        .filter(|b| b.j >= 0 && b.norm_inf > 0.0)
        .map(|b| (((b.j + 2) as f64).ln(), (2f64.powi(b.j) * b.norm_inf).ln()))
        .collect();
    let spectral_growth = if spec_pts.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = spec_pts.into_iter().unzip();
        fit(&x, &y).0
    } else {
        0.0
    };

    let lip = report.entry("Lip").expect("report has Lip");
    let pts: Vec<(f64, f64)> = lip.ratios.iter().filter(|r| r.1 > 0.0).map(|&(h, r)| (h, r * h)).collect();
    let (holder_alpha, holder_residual, log_power, log_power_residual) = if pts.len() >= 3 {
        let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let (a, ra) = fit(&x, &y);
        let xl: Vec<f64> = pts.iter().map(|p| (1.0 + 1.0 / p.0).ln().ln()).collect();
        let yl: Vec<f64> = pts.iter().map(|p| (p.1 / p.0).ln()).collect();
        let (pw, rp) = fit(&xl, &yl);
        (a, ra, pw, rp)
    } else {
        (1.0, 0.0, 0.0, 0.0)
    };

    let near = |v: f64| (v - BOUNDED).abs() < margin;
    let mut label = None;
    for (i, (_, class)) in ladder.iter().enumerate() {
        let gi = growth[i].1;
        if gi < BOUNDED {
            let ambiguous = near(gi) || (i > 0 && near(growth[i - 1].1));
            let spectral_disagrees = *class == ModulusClass::Zygmund && spectral_growth > BOUNDED + margin;
            label = Some(if ambiguous || spectral_disagrees { ModulusClass::Inconclusive } else { *class });
            break;
        }
    }
    let label = label.unwrap_or_else(|| {
        let close = (holder_residual - log_power_residual).abs() < margin * holder_residual.max(log_power_residual);
        if close && holder_residual > 1e-12 {
            ModulusClass::Inconclusive
        } else if log_power_residual < holder_residual && log_power > 1.0 {
            ModulusClass::BelowLogLipschitz
        } else {
            ModulusClass::Hoelder { alpha: holder_alpha }
        }
    });
    Classification {
        label,
        growth,
        spectral_growth,
        holder_alpha,
        holder_residual,
        log_power,
        log_power_residual,
        not_bv: report.tv.not_bv,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_baseline, Family};

    fn weierstrass(n_max: u32) -> impl Fn(f64) -> f64 {
        move |x| (1..=n_max).map(|n| 0.5f64.powi(n as i32) * (2f64.powi(n as i32 + 1) * std::f64::consts::PI * x).cos()).sum()
    }

    #[test]
    fn affine_and_kink() {
        let f = Sampled::from_fn(|x| x, 1024).unwrap();
        let hs = default_h_grid(&f);
        let first = difference_seminorms(&f, Order::First, NormKind::Pointwise, &hs).unwrap();
        assert!((first[0].value - 1.0).abs() < 1e-12);
        for norm in [NormKind::Pointwise, NormKind::Integral] {
            for e in difference_seminorms(&f, Order::Second, norm, &hs).unwrap() {
                assert!(e.value < 1e-12, "{e:?}");
            }
        }
        let k = Sampled::from_fn(|x| (x - 0.5).abs(), 1024).unwrap();
        let z = difference_seminorms(&k, Order::Second, NormKind::Pointwise, &hs).unwrap();
        assert!((z[0].value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_alias_steps() {
        let f = Sampled::from_fn(|x| x, 64).unwrap();
        assert!(difference_seminorms(&f, Order::First, NormKind::Pointwise, &[1.0 / 64.0]).is_err());
        assert!(difference_seminorms(&f, Order::First, NormKind::Pointwise, &[0.01]).is_err());
    }

    #[test]
    fn weierstrass_is_zygmund_but_not_lipschitz() {
        let f = Sampled::from_fn(weierstrass(16), 1 << 14).unwrap();
        let hs: Vec<f64> = (4..=12).map(|k| 0.5f64.powi(k)).collect();
        let z = &difference_seminorms(&f, Order::Second, NormKind::Pointwise, &hs).unwrap()[0];
        let lip = &difference_seminorms(&f, Order::First, NormKind::Pointwise, &hs).unwrap()[0];
        let zr: Vec<f64> = z.ratios.iter().map(|r| r.1).collect();
        let (zmin, zmax) = zr.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(zmax / zmin < 2.0, "{zr:?}");
        // Lip ratio over log2(1/h) stays within a constant band.
        let lr: Vec<f64> = lip.ratios.iter().map(|&(h, r)| r / (1.0 / h).log2()).collect();
        let (lmin, lmax) = lr.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(lmax / lmin < 1.6, "{lr:?}");
        assert!(lip.ratios[0].1 > 2.0 * lip.ratios.last().unwrap().1);
    }

    #[test]
    fn total_variation_cases() {
        let f = Sampled::from_fn(|x| x * x * x + x, 512).unwrap();
        assert!((total_variation(&f).tv - 2.0).abs() < 1e-12);
        let steps = make_baseline(Family::BvStep { values: vec![1.0, 2.0, 1.0, 2.0], jumps: vec![0.3, 0.55, 0.8] }).unwrap();
        let s = Sampled::from_coefficient(&steps, 1000).unwrap();
        assert!((total_variation(&s).tv - 3.0).abs() < 1e-12);
        // The discrete TV approaches the exact one from below.
        let w = Sampled::from_fn(weierstrass(2), 1 << 12).unwrap();
        assert!((total_variation(&w).tv - 5.0).abs() < 1e-5);
    }

    #[test]
    fn weierstrass_total_variation_against_quadrature() {
        // int |S_n'| by adaptive quadrature between the zeros of cos terms.
        let n = 6;
        let d = |x: f64| -> f64 {
            (1..=n).map(|k| -std::f64::consts::PI * 2.0 * (2f64.powi(k + 1) * std::f64::consts::PI * x).sin()).sum::<f64>().abs()
        };
        let bps: Vec<f64> = (1..512).map(|i| i as f64 / 512.0).collect();
        let exact = crate::quadrature::integrate(&d, 0.0, 1.0, &bps, &Default::default()).unwrap().value;
        let f = Sampled::from_fn(weierstrass(n as u32), 1 << 16).unwrap();
        let tv = total_variation(&f).tv;
        assert!((tv - exact).abs() < 1e-3 * exact, "{tv} vs {exact}");
        assert!(tv < 0.5 * 4.0 * n as f64);
    }

    #[test]
    fn partition_of_unity() {
        for nu in 0..2000 {
            let x = nu as f64 * 0.01;
            let s: f64 = chi(x) + (0..20).map(|j| phi(x * 0.5f64.powi(j))).sum::<f64>();
            assert!((s - 1.0).abs() < 1e-15);
        }
        assert_eq!(chi(0.75), 1.0);
        assert_eq!(chi(4.0 / 3.0), 0.0);
    }

    #[test]
    fn blocks_of_simple_signals() {
        let c = Sampled::from_fn(|_| 3.0, 1024).unwrap();
        let sp = dyadic_blocks(&c, 8, Extension::Periodic).unwrap();
        assert!((sp.block(-1).unwrap().norm_inf - 3.0).abs() < 1e-12);
        assert!(sp.blocks.iter().filter(|b| b.j >= 0).all(|b| b.norm_inf < 1e-12));

        let k = 5;
        let f = Sampled::from_fn(|x| (2.0 * std::f64::consts::PI * 32.0 * x).cos(), 1024).unwrap();
        let sp = dyadic_blocks(&f, 8, Extension::Periodic).unwrap();
        for b in &sp.blocks {
            if (b.j - k).abs() > 1 {
                assert!(b.norm_inf < 1e-12, "{b:?}");
            }
            assert!(b.outside_mass < 1e-20);
        }
        assert!(sp.reconstruction_error < 1e-12);
    }

    #[test]
    fn weierstrass_dyadic_profile() {
        let f = Sampled::from_fn(weierstrass(14), 1 << 13).unwrap();
        let sp = dyadic_blocks(&f, 10, Extension::Periodic).unwrap();
        for j in 3..=10 {
            let v = 2f64.powi(j) * sp.block(j).unwrap().norm_inf;
            assert!((0.5..=2.0).contains(&v), "j = {j}: {v}");
        }
    }

    #[test]
    fn classifier_ladder() {
        let hs = |f: &Sampled| default_h_grid(f);
        let classify = |f: Sampled| {
            let r = modulus_report(&f, &hs(&f)).unwrap();
            let s = dyadic_blocks(&f, 8, Extension::Even).unwrap();
            classify_modulus(&r, &s)
        };
        assert_eq!(classify(Sampled::from_fn(|_| 1.0, 4096).unwrap()).label, ModulusClass::LipschitzBv);
        assert_eq!(classify(Sampled::from_fn(|x| (x - 0.5).abs(), 4096).unwrap()).label, ModulusClass::LipschitzBv);
        let w = classify(Sampled::from_fn(weierstrass(16), 4096).unwrap());
        assert_eq!(w.label, ModulusClass::Zygmund, "{w:?}");
        let h = classify(Sampled::from_fn(|x| (x - 0.5).abs().sqrt(), 4096).unwrap());
        match h.label {
            ModulusClass::Hoelder { alpha } => assert!((alpha - 0.5).abs() < 0.05),
            other => panic!("{other:?}"),
        }
    }
}
