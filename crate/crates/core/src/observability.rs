//! Boundary observability at `x = 0`: quotients, ensemble estimates of the
//! observability constant, the counterexample divergence sweep, the
//! low-frequency unique continuation check and HUM null controls.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::coeff::{travel_time, Coefficient, CounterexampleParams, Family, ModulusDescriptor};
use crate::error::{invalid, Error, Result};
use crate::modulus::{default_h_grid, modulus_report, Sampled};
use crate::quadrature::trapezoid;
use crate::quasimodes::{solve_quasimode, QuasimodeOptions, QuasimodeParams};
use crate::tolerances::DENOMINATOR_FLOOR;
use crate::wavesim::{
    dual_trace_norm, evolve, evolve_inhomogeneous, sample_fn, time_derivative, time_grid, trace_sobolev_norm,
    BoundaryForcing, Scheme, WaveOptions, WaveTrajectory,
};

/// A C_obs trend counts as flat when it grows by less than this factor
/// between the smallest and the largest cutoff.
pub const BOUNDED_GROWTH: f64 = 1.5;

/// Per-level growth factor and run length that count as divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
pub const DIVERGENCE_RUN: usize = 3;

/// What the denominator measures on the trace `u_x(., 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Measurement {
    /// `int_0^T |d_t^m u_x(t, 0)|^2`.
    Derivative { m: usize },
    /// `sum_{k <= m} int_0^T |d_t^k u_x(t, 0)|^2`.
    Cumulative { m: usize },
    /// `|u_x(., 0)|_{H^beta(0, T)}^2`.
    Sobolev { beta: f64 },
}

impl std::fmt::Display for Measurement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Measurement::Derivative { m } => write!(f, "m={m}"),
            Measurement::Cumulative { m } => write!(f, "m<={m}"),
            Measurement::Sobolev { beta } => write!(f, "beta={beta}"),
        }
    }
}

/// `|u0|_{H^1_0}^2 + |u1|_{L^2}^2` on the node samples.
pub fn initial_norm(u0: &[f64], u1: &[f64]) -> f64 {
    let n = u0.len() - 1;
    let dx = 1.0 / n as f64;
    let grad: f64 = u0.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / dx;
    let sq: Vec<f64> = u1.iter().map(|v| v * v).collect();
    grad + trapezoid(&sq, dx)
}

/// The denominator for one measurement of a trace sampled at step `dt`.
pub fn trace_measure(trace: &[f64], dt: f64, meas: Measurement) -> Result<f64> {
    let sq_int = |m: usize| {
        let d = time_derivative(trace, dt, m);
        let sq: Vec<f64> = d.iter().map(|v| v * v).collect();
        trapezoid(&sq, dt)
    };
    match meas {
        Measurement::Derivative { m } => Ok(sq_int(m)),
        Measurement::Cumulative { m } => Ok((0..=m).map(sq_int).sum()),
        Measurement::Sobolev { beta } => Ok(trace_sobolev_norm(trace, dt, beta)?.powi(2)),
    }
}

fn divide(numerator: f64, denominator: f64) -> Result<f64> {
    if !(numerator > 0.0) {
        return Err(Error::Degenerate("zero initial data (0/0)".into()));
    }
    if !(denominator > DENOMINATOR_FLOOR * numerator) {
        return Err(Error::QuotientUnbounded(format!(
            "denominator {denominator:.3e} below the floor for numerator {numerator:.3e}"
        )));
    }
    Ok(numerator / denominator)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quotient {
    pub numerator: f64,
    pub denominator: f64,
    pub value: f64,
    pub t: f64,
    pub t_omega: f64,
    /// `T > 2 T_omega`.
    pub admissible: bool,
}

/// `Q = (|u0|_{H^1_0}^2 + |u1|^2) / measurement of u_x(., 0)` for the
/// solution of the homogeneous problem.
pub fn observability_quotient(
    omega: &Coefficient,
    u0: &[f64],
    u1: &[f64],
    t: f64,
    meas: Measurement,
    opts: &WaveOptions,
) -> Result<Quotient> {
    let numerator = initial_norm(u0, u1);
    if !(numerator > 0.0) {
        return Err(Error::Degenerate("zero initial data (0/0)".into()));
    }
    let opts = WaveOptions { energies: false, ..*opts };
    let traj = evolve(omega, u0, u1, t, &opts)?;
    let denominator = trace_measure(&traj.trace_left, traj.dt, meas)?;
    let value = divide(numerator, denominator)?;
    let t_omega = travel_time(omega).value;
    Ok(Quotient { numerator, denominator, value, t: traj.t_final, t_omega, admissible: traj.t_final > 2.0 * t_omega })
}

// ---------------------------------------------------------------------------
// Ensemble estimate of C_obs

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    /// Highest sine mode per estimate, increasing.
    pub cutoffs: Vec<usize>,
    /// Random mode mixtures added per cutoff.
    pub random_members: usize,
    pub seed: u64,
    pub resolution: usize,
    pub orders: Vec<usize>,
    pub betas: Vec<f64>,
    /// Grid for the dense Gramian cross-check; `None` skips it.
    pub gramian_resolution: Option<usize>,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            cutoffs: vec![8, 16, 32, 64],
            random_members: 8,
            seed: 0,
            resolution: 1024,
            orders: vec![0],
            betas: Vec::new(),
            gramian_resolution: Some(256),
        }
    }
}

#[derive(Debug, Clone)]
struct Member {
    label: String,
    cutoff: usize,
    u0: Vec<f64>,
    u1: Vec<f64>,
}

fn ensemble_members(spec: &EnsembleSpec, n: usize) -> Vec<Member> {
    use std::f64::consts::PI;
    let k_max = *spec.cutoffs.last().unwrap_or(&1);
    let zero = vec![0.0; n + 1];
    let mut out = Vec::new();
    for k in 1..=k_max {
        let w = k as f64 * PI;
        out.push(Member {
            label: format!("mode-{k}-u0"),
            cutoff: k,
            u0: sample_fn(n, |x| (w * x).sin() / w),
            u1: zero.clone(),
        });
        out.push(Member { label: format!("mode-{k}-u1"), cutoff: k, u0: zero.clone(), u1: sample_fn(n, |x| (w * x).sin()) });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for &kc in &spec.cutoffs {
        for i in 0..spec.random_members {
            let a: Vec<f64> = (0..kc).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..kc).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u0 = sample_fn(n, |x| {
                a.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * PI * x).sin() / ((k + 1) as f64 * PI)).sum()
            });
            let u1 = sample_fn(n, |x| b.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * PI * x).sin()).sum());
            out.push(Member { label: format!("mix-{kc}-{i}"), cutoff: kc, u0, u1 });
        }
        // Packets at the cutoff frequency, far from the observed end.
        let w = kc as f64 * PI;
        let env = move |x: f64| (-((x - 0.75) / 0.08).powi(2)).exp() * (PI * x).sin();
        out.push(Member {
            label: format!("packet-{kc}-u0"),
            cutoff: kc,
            u0: sample_fn(n, |x| env(x) * (w * x).sin() / w),
            u1: zero.clone(),
        });
        out.push(Member {
            label: format!("packet-{kc}-u1"),
            cutoff: kc,
            u0: zero.clone(),
            u1: sample_fn(n, |x| env(x) * (w * x).sin()),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientEntry {
    pub datum: String,
    pub measurement: Measurement,
    /// `None` when the quotient is unbounded at this resolution.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffEstimate {
    pub cutoff: usize,
    pub members: usize,
    /// Maximum quotient per measurement (infinite if any member is unbounded).
    pub c_obs: Vec<f64>,
    /// Member attaining the maximum, per measurement.
    pub worst: Vec<String>,
    /// Dense-Gramian supremum over the span of modes up to the cutoff, per derivative order.
    pub gramian: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityReport {
    pub omega: Coefficient,
    pub t: f64,
    pub t_omega: f64,
    pub admissible: bool,
    pub measurements: Vec<Measurement>,
    pub entries: Vec<QuotientEntry>,
    pub estimates: Vec<CutoffEstimate>,
    /// `C_obs(last cutoff) / C_obs(first cutoff)` per measurement.
    pub growth: Vec<f64>,
    /// Smallest derivative order whose trend is flat.
    pub loss_order: Option<usize>,
    /// Smallest Sobolev exponent whose trend is flat.
    pub loss_beta: Option<f64>,
    /// `|omega|_LL / omega_*`, the quantity the loss is predicted to scale
    /// with (up to an unspecified universal constant).
    pub ll_over_lower: Option<f64>,
}

impl ObservabilityReport {
    /// `C_obs(to) / C_obs(from)` for measurement index `k`.
    pub fn growth_between(&self, k: usize, from: usize, to: usize) -> Option<f64> {
        let get = |c: usize| self.estimates.iter().find(|e| e.cutoff == c).map(|e| e.c_obs[k]);
        Some(get(to)? / get(from)?)
    }

    pub fn gramian_growth_between(&self, k: usize, from: usize, to: usize) -> Option<f64> {
        let get = |c: usize| {
            self.estimates.iter().find(|e| e.cutoff == c).and_then(|e| e.gramian.as_ref().map(|g| g[k]))
        };
        Some(get(to)? / get(from)?)
    }

    /// `cutoff,<measurement>...` table of C_obs.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cutoff");
        for m in &self.measurements {
            let _ = write!(s, ",C_obs[{m}]");
        }
        s.push('\n');
        for e in &self.estimates {
            let _ = write!(s, "{}", e.cutoff);
            for c in &e.c_obs {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }
}

fn measurements(spec: &EnsembleSpec) -> Vec<Measurement> {
    let mut v: Vec<Measurement> = spec.orders.iter().map(|&m| Measurement::Derivative { m }).collect();
    v.extend(spec.betas.iter().map(|&beta| Measurement::Sobolev { beta }));
    v
}

/// Ensemble maximum of the quotient per mode cutoff, with a dense Gramian
/// cross-check at coarse resolution.
pub fn estimate_observability_constant(omega: &Coefficient, t: f64, spec: &EnsembleSpec) -> Result<ObservabilityReport> {
    if spec.cutoffs.is_empty() || spec.cutoffs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("cutoffs must be a non-empty increasing list"));
    }
    if spec.betas.iter().any(|b| !(*b >= 0.0)) {
        return Err(invalid("Sobolev exponents must be nonnegative"));
    }
    let meas = measurements(spec);
    if meas.is_empty() {
        return Err(invalid("no measurement requested"));
    }
    let n = spec.resolution;
    let members = ensemble_members(spec, n);
    let opts = WaveOptions { energies: false, ..WaveOptions::default() };
    let values: Vec<Vec<Option<f64>>> = members
        .par_iter()
        .map(|mb| -> Result<Vec<Option<f64>>> {
            let traj = evolve(omega, &mb.u0, &mb.u1, t, &opts)?;
            let num = initial_norm(&mb.u0, &mb.u1);
            meas.iter()
                .map(|&ms| {
                    let den = trace_measure(&traj.trace_left, traj.dt, ms)?;
                    match divide(num, den) {
                        Ok(v) => Ok(Some(v)),
                        Err(Error::QuotientUnbounded(_)) => Ok(None),
                        Err(e) => Err(e),
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let gram = match spec.gramian_resolution {
        Some(g) => Some(gramian_estimates(omega, t, g.min(n), &spec.cutoffs, &spec.orders)?),
        None => None,
    };

    let mut estimates = Vec::new();
    for (ci, &kc) in spec.cutoffs.iter().enumerate() {
        let mut c_obs = vec![0.0f64; meas.len()];
        let mut worst = vec![String::new(); meas.len()];
        let mut count = 0;
        for (mb, vals) in members.iter().zip(&values) {
            if mb.cutoff > kc {
                continue;
            }
            count += 1;
            for (k, v) in vals.iter().enumerate() {
                let v = v.unwrap_or(f64::INFINITY);
                if v > c_obs[k] {
                    c_obs[k] = v;
                    worst[k] = mb.label.clone();
                }
            }
        }
        estimates.push(CutoffEstimate {
            cutoff: kc,
            members: count,
            c_obs,
            worst,
            gramian: gram.as_ref().map(|g| g[ci].clone()),
        });
    }
    let growth: Vec<f64> = (0..meas.len())
        .map(|k| estimates.last().unwrap().c_obs[k] / estimates[0].c_obs[k])
        .collect();
    let flat = |k: usize| growth[k] < BOUNDED_GROWTH && estimates.iter().all(|e| e.c_obs[k].is_finite());
    let loss_order = spec.orders.iter().enumerate().find(|(k, _)| flat(*k)).map(|(_, m)| *m);
    let off = spec.orders.len();
    let mut betas: Vec<(usize, f64)> = spec.betas.iter().copied().enumerate().collect();
    betas.sort_by(|a, b| a.1.total_cmp(&b.1));
    let loss_beta = betas.into_iter().find(|(k, _)| flat(off + k)).map(|(_, b)| b);

    let entries = members
        .iter()
        .zip(&values)
        .flat_map(|(mb, vals)| {
            meas.iter()
                .zip(vals)
                .map(|(ms, v)| QuotientEntry { datum: mb.label.clone(), measurement: *ms, value: *v })
                .collect::<Vec<_>>()
        })
        .collect();
    let ll_over_lower = Sampled::from_coefficient(omega, 4096)
        .and_then(|s| modulus_report(&s, &default_h_grid(&s)))
        .ok()
        .and_then(|r| r.entry("LL_inf").map(|e| e.value / omega.lower()));
    let t_omega = travel_time(omega).value;
    let (dt, steps) = time_grid(omega, n, t, WaveOptions::default().cfl)?;
    let t_run = dt * steps as f64;
    Ok(ObservabilityReport {
        omega: omega.clone(),
        t: t_run,
        t_omega,
        admissible: t_run > 2.0 * t_omega,
        measurements: meas,
        entries,
        estimates,
        growth,
        loss_order,
        loss_beta,
        ll_over_lower,
    })
}

/// `sup_a (a^T N a) / (a^T G a)` over the span of the sine modes up to each
/// cutoff (displacement and velocity), per derivative order.
fn gramian_estimates(
    omega: &Coefficient,
    t: f64,
    n: usize,
    cutoffs: &[usize],
    orders: &[usize],
) -> Result<Vec<Vec<f64>>> {
    use std::f64::consts::PI;
    let k_max = *cutoffs.last().unwrap();
    let zero = vec![0.0; n + 1];
    let opts = WaveOptions { energies: false, ..WaveOptions::default() };
    // Basis order: mode k displacement at 2(k-1), velocity at 2(k-1)+1.
    let basis: Vec<(Vec<f64>, Vec<f64>)> = (1..=k_max)
        .flat_map(|k| {
            let w = k as f64 * PI;
            [(sample_fn(n, |x| (w * x).sin() / w), zero.clone()), (zero.clone(), sample_fn(n, |x| (w * x).sin()))]
        })
        .collect();
    let trajs: Vec<WaveTrajectory> =
        basis.par_iter().map(|(u0, u1)| evolve(omega, u0, u1, t, &opts)).collect::<Result<_>>()?;
    let dx = 1.0 / n as f64;
    let dim = basis.len();
    let mut num = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let (a0, a1) = &basis[i];
            let (b0, b1) = &basis[j];
            let grad: f64 = (0..n).map(|q| (a0[q + 1] - a0[q]) * (b0[q + 1] - b0[q])).sum::<f64>() / dx;
            let prod: Vec<f64> = a1.iter().zip(b1).map(|(x, y)| x * y).collect();
            let v = grad + trapezoid(&prod, dx);
            num[(i, j)] = v;
            num[(j, i)] = v;
        }
    }
    let mut out = vec![Vec::new(); cutoffs.len()];
    for &m in orders {
        let traces: Vec<Vec<f64>> = trajs.iter().map(|tr| time_derivative(&tr.trace_left, tr.dt, m)).collect();
        let dt = trajs[0].dt;
        let mut g = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let prod: Vec<f64> = traces[i].iter().zip(&traces[j]).map(|(x, y)| x * y).collect();
                let v = trapezoid(&prod, dt);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        for (ci, &kc) in cutoffs.iter().enumerate() {
            let d = 2 * kc;
            let nn = num.view((0, 0), (d, d)).into_owned();
            let gg = g.view((0, 0), (d, d)).into_owned();
            out[ci].push(generalized_sup(&nn, &gg));
        }
    }
    Ok(out)
}

/// `max_a a^T N a / a^T G a = 1 / lambda_min(L^-1 G L^-T)` with `N = L L^T`.
fn generalized_sup(num: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    let Some(chol) = num.clone().cholesky() else { return f64::NAN };
    let l = chol.l();
    let Some(linv) = l.clone().try_inverse() else { return f64::NAN };
    let s = &linv * g * linv.transpose();
    let s = 0.5 * (&s + s.transpose());
    let eig = SymmetricEigen::new(s);
    let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let lmax = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    if !(lmin > DENOMINATOR_FLOOR.sqrt() * lmax) {
        return f64::INFINITY;
    }
    1.0 / lmin
}

// ---------------------------------------------------------------------------
// Counterexample divergence

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub quasimode: QuasimodeOptions,
    /// Grid points per spatial wavelength of `phi_j`.
    pub points_per_wave: f64,
    pub min_resolution: usize,
    pub max_resolution: usize,
    /// Observation time; `None` means `2 T_omega + 1/2`.
    pub horizon: Option<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            quasimode: QuasimodeOptions::default(),
            points_per_wave: 16.0,
            min_resolution: 1024,
            max_resolution: 1 << 16,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub j: u32,
    pub h: f64,
    pub resolution: usize,
    pub t: f64,
    /// `int (h^2 omega phi^2 + phi'^2)`, the energy of `v_j = phi_j e^{i h_j t}`.
    pub numerator: f64,
    /// `int phi'^2` and `h^2 int omega phi^2`: the cosine and sine phases.
    pub phase_numerators: [f64; 2],
    /// `|phi(0)|^2 + |phi(1)|^2 + |phi'(0)|^2`.
    pub boundary_smallness: f64,
    /// Per requested order: `max` over phases of the quotient.
    pub quotient: Vec<f64>,
    /// Per requested order: `max` over phases of `int |d_t^m u_x(t,0)|^2`.
    pub denominator: Vec<f64>,
    /// `denominator / (h^{2(m+3)} boundary_smallness)`.
    pub denominator_bound_ratio: Vec<f64>,
    /// Largest `|u_j(t, 0)|` and `|u_j(t, 1)|` over the run.
    pub boundary_residual: f64,
    /// Measured LL seminorm of the density used at this level (lambda mode).
    pub seminorm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleTable {
    pub orders: Vec<usize>,
    pub rows: Vec<CounterexampleRow>,
    pub truncated_at: Option<(u32, String)>,
    /// `growth[k][i] = Q(row i+1) / Q(row i)` for order `orders[k]`.
    pub growth: Vec<Vec<f64>>,
    /// A run of at least [`DIVERGENCE_RUN`] consecutive factors `>= DIVERGENCE_FACTOR`.
    pub diverges: Vec<bool>,
    /// `max / min` of `numerator h_j` over the rows.
    pub numerator_h_spread: f64,
    /// Least-squares slope of `ln K_j` against `ln ln h_j` (lambda mode).
    pub seminorm_log_slope: Option<f64>,
}

impl CounterexampleTable {
    /// `j,h,Q_<m>...,numerator,denominator,boundary_smallness`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,h");
        for m in &self.orders {
            let _ = write!(s, ",Q_{m}");
        }
        s.push_str(",numerator,denominator,boundary_smallness\n");
        for r in &self.rows {
            let _ = write!(s, "{},{}", r.j, r.h);
            for q in &r.quotient {
                let _ = write!(s, ",{q}");
            }
            let _ = writeln!(s, ",{},{},{}", r.numerator, r.denominator.first().unwrap_or(&f64::NAN), r.boundary_smallness);
        }
        s
    }
}

fn longest_run(factors: &[f64], threshold: f64) -> usize {
    let mut best = 0;
    let mut cur = 0;
    for f in factors {
        if *f >= threshold {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 0;
        }
    }
    best
}

fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Builds `u_j = v_j + z_j` for every level with `v_j = phi_j(x)(cos, sin)(h_j t)`
/// and `z_j` the Dirichlet correction, and tabulates the quotients. `omegas`
/// holds one density (psi mode) or one density per level (lambda mode).
pub fn run_counterexample_sweep(
    params: &CounterexampleParams,
    omegas: &[Coefficient],
    orders: &[usize],
    opts: &SweepOptions,
) -> Result<CounterexampleTable> {
    let lambda = matches!(params.spec.descriptor, ModulusDescriptor::Lambda(_));
    let density_for = |j: u32| -> Result<&Coefficient> {
        if !lambda {
            return omegas.first().ok_or_else(|| invalid("no density given"));
        }
        omegas
            .iter()
            .find(|c| matches!(c.family(), Family::CounterexampleLambda { j: k, .. } if *k == j))
            .ok_or_else(|| invalid(format!("no lambda density for level {j}")))
    };
    let results: Vec<Result<CounterexampleRow>> = params
        .records
        .par_iter()
        .map(|rec| {
            let omega = density_for(rec.j)?;
            let qp = QuasimodeParams::from_record(rec)?;
            counterexample_level(omega, qp, orders, opts, lambda)
        })
        .collect();
    let mut rows = Vec::new();
    let mut truncated_at = None;
    for (rec, r) in params.records.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e @ Error::ScaleOutOfReach(_)) => {
                truncated_at = Some((rec.j, e.to_string()));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let growth: Vec<Vec<f64>> = (0..orders.len())
        .map(|k| rows.windows(2).map(|w| w[1].quotient[k] / w[0].quotient[k]).collect())
        .collect();
    let diverges = growth.iter().map(|g| longest_run(g, DIVERGENCE_FACTOR) >= DIVERGENCE_RUN).collect();
    let nh: Vec<f64> = rows.iter().map(|r| r.numerator * r.h).collect();
    let spread = nh.iter().copied().fold(0.0f64, f64::max) / nh.iter().copied().fold(f64::INFINITY, f64::min);
    let seminorm_log_slope = if lambda {
        let pts: Vec<(f64, f64)> =
            rows.iter().filter_map(|r| r.seminorm.map(|k| (r.h.ln().ln(), k.ln()))).collect();
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        ls_slope(&x, &y)
    } else {
        None
    };
    Ok(CounterexampleTable {
        orders: orders.to_vec(),
        rows,
        truncated_at,
        growth,
        diverges,
        numerator_h_spread: spread,
        seminorm_log_slope,
    })
}

fn counterexample_level(
    omega: &Coefficient,
    qp: QuasimodeParams,
    orders: &[usize],
    opts: &SweepOptions,
    lambda: bool,
) -> Result<CounterexampleRow> {
    use std::f64::consts::PI;
    let h = qp.h;
    let waves = h * omega.upper().sqrt() / (2.0 * PI);
    let n = ((opts.points_per_wave * waves).ceil() as usize).next_power_of_two().max(opts.min_resolution);
    if n > opts.max_resolution {
        return Err(Error::ScaleOutOfReach(format!(
            "level {} needs {n} cells, above the limit {}",
            qp.j, opts.max_resolution
        )));
    }
    let qopts = QuasimodeOptions { grid: n, ..opts.quasimode };
    let qm = solve_quasimode(omega, qp, &qopts)?;
    let dx = 1.0 / n as f64;
    let w: Vec<f64> = (0..=n).map(|i| omega.eval(i as f64 * dx)).collect();
    let dphi2: Vec<f64> = qm.dphi.iter().map(|v| v * v).collect();
    let kin: Vec<f64> = qm.phi.iter().zip(&w).map(|(p, o)| h * h * o * p * p).collect();
    let phase_num = [trapezoid(&dphi2, dx), trapezoid(&kin, dx)];
    let numerator = phase_num[0] + phase_num[1];
    let (phi0, phi1, dphi0) = (qm.phi[0], qm.phi[n], qm.dphi[0]);
    let smallness = phi0 * phi0 + phi1 * phi1 + dphi0 * dphi0;

    let t = match opts.horizon {
        Some(t) => t,
        None => 2.0 * travel_time(omega).value + 0.5,
    };
    let wopts = WaveOptions { energies: false, ..WaveOptions::default() };
    let (dt, steps) = time_grid(omega, n, t, wopts.cfl)?;
    let mut den = vec![0.0f64; orders.len()];
    let mut quot = vec![0.0f64; orders.len()];
    let mut residual = 0.0f64;
    for (phase, num) in phase_num.iter().enumerate() {
        let wave = move |t: f64| if phase == 0 { (h * t).cos() } else { (h * t).sin() };
        let forcing =
            BoundaryForcing::from_fn(move |t| -phi0 * wave(t), move |t| -phi1 * wave(t), dt, steps, u32::MAX);
        let z = evolve_inhomogeneous(omega, &forcing, n, t, &wopts)?;
        let trace: Vec<f64> =
            z.trace_left.iter().enumerate().map(|(l, zt)| dphi0 * wave(l as f64 * dt) + zt).collect();
        // u_j = v_j + z_j on the boundary, at the final level.
        let ub = [phi0 * wave(z.t_final) + z.u_final[0], phi1 * wave(z.t_final) + z.u_final[n]];
        residual = residual.max(ub[0].abs()).max(ub[1].abs());
        for (k, &m) in orders.iter().enumerate() {
            let d = trace_measure(&trace, dt, Measurement::Derivative { m })?;
            den[k] = den[k].max(d);
            let q = if d > DENOMINATOR_FLOOR * num { num / d } else { f64::INFINITY };
            quot[k] = quot[k].max(q);
        }
    }
    let bound_ratio = orders
        .iter()
        .zip(&den)
        .map(|(&m, d)| d / (h.powi(2 * (m as i32 + 3)) * smallness))
        .collect();
    let seminorm = if lambda {
        let s = Sampled::from_coefficient(omega, n)?;
        modulus_report(&s, &default_h_grid(&s))?.entry("LL_inf").map(|e| e.value)
    } else {
        None
    };
    Ok(CounterexampleRow {
        j: qp.j,
        h,
        resolution: n,
        t: dt * steps as f64,
        numerator,
        phase_numerators: phase_num,
        boundary_smallness: smallness,
        quotient: quot,
        denominator: den,
        denominator_bound_ratio: bound_ratio,
        boundary_residual: residual,
        seminorm,
    })
}

// ---------------------------------------------------------------------------
// Unique continuation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRatio {
    /// `int_{window} |u_x(t, 0)|^2` over `[T/2 - 1, T/2 + 1] cap [0, T]`.
    pub low: f64,
    /// `int_0^T |d_t^m u_x(t, 0)|^2`.
    pub high: f64,
    pub ratio: f64,
    pub window: (f64, f64),
}

pub fn unique_continuation_check(traj: &WaveTrajectory, m: usize) -> Result<ContinuationRatio> {
    let t = traj.t_final;
    let (a, b) = ((0.5 * t - 1.0).max(0.0), (0.5 * t + 1.0).min(t));
    let la = (a / traj.dt).round() as usize;
    let lb = ((b / traj.dt).round() as usize).min(traj.trace_left.len() - 1);
    let sq: Vec<f64> = traj.trace_left[la..=lb].iter().map(|v| v * v).collect();
    let low = trapezoid(&sq, traj.dt);
    let high = trace_measure(&traj.trace_left, traj.dt, Measurement::Derivative { m })?;
    let scale = traj.trace_left.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if !(scale > 0.0) || !(high > DENOMINATOR_FLOOR * low) {
        return Err(Error::Degenerate("vacuous: the observed trace is zero".into()));
    }
    Ok(ContinuationRatio { low, high, ratio: low / high, window: (a, b) })
}

/// Supremum of the continuation ratio over random smooth data (sine modes
/// up to 8 with `1/k^2` decay).
pub fn unique_continuation_ensemble(
    omega: &Coefficient,
    t: f64,
    m: usize,
    members: usize,
    resolution: usize,
    seed: u64,
) -> Result<f64> {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<(Vec<f64>, Vec<f64>)> = (0..members)
        .map(|_| {
            let a: Vec<f64> = (1..=8).map(|k| rng.gen_range(-1.0..1.0) / (k * k) as f64).collect();
            let b: Vec<f64> = (1..=8).map(|k| rng.gen_range(-1.0..1.0) / (k * k) as f64).collect();
            let f = |c: &Vec<f64>, x: f64| -> f64 {
                c.iter().enumerate().map(|(k, v)| v * ((k + 1) as f64 * PI * x).sin()).sum()
            };
            (sample_fn(resolution, |x| f(&a, x)), sample_fn(resolution, |x| f(&b, x)))
        })
        .collect();
    let opts = WaveOptions { energies: false, ..WaveOptions::default() };
    let ratios: Vec<f64> = data
        .par_iter()
        .map(|(u0, u1)| {
            let tr = evolve(omega, u0, u1, t, &opts)?;
            Ok(unique_continuation_check(&tr, m)?.ratio)
        })
        .collect::<Result<_>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// HUM control

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlOptions {
    pub resolution: usize,
    pub max_iterations: usize,
    /// Target for the terminal relative energy in `L^2 x H^-1`.
    pub tolerance: f64,
    pub cfl: f64,
}

impl Default for ControlOptions {
    fn default() -> Self {
        ControlOptions { resolution: 256, max_iterations: 200, tolerance: 1e-6, cfl: WaveOptions::default().cfl }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgStep {
    pub iteration: usize,
    /// Terminal relative energy of the current iterate.
    pub residual: f64,
    /// `|f|_{L^2}^2` of the current iterate.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlResult {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub t: f64,
    pub admissible: bool,
    /// Order `m` of the control space `H^-m`.
    pub m: f64,
    pub dt: f64,
    /// `f(t_l)` at `x = 0`.
    pub control: Vec<f64>,
    pub terminal_l2: f64,
    pub terminal_hm1: f64,
    /// `(|y(T)|^2 + |y_t(T)|_{H^-1}^2) / (|y0|^2 + |y1|_{H^-1}^2)`, from an
    /// independent forward run with the computed control.
    pub terminal_relative_energy: f64,
    pub control_l2: f64,
    /// `|f|_{H^-m}` with the tapered trace-norm convention.
    pub control_norm: f64,
    /// `control_norm / (|y0| + |y1|_{H^-1})`.
    pub cost_constant: f64,
    pub iterations: usize,
    pub history: Vec<CgStep>,
    pub controlled: bool,
}

impl ControlResult {
    /// `iteration,residual,cost`.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iteration,residual,cost\n");
        for h in &self.history {
            let _ = writeln!(s, "{},{},{}", h.iteration, h.residual, h.cost);
        }
        s
    }
}

/// Forward and exact discrete adjoint of the map from the boundary values
/// `f_0..f_N` (plus initial data) to the terminal state
/// `(y^N, (y^N - y^{N-1}) / dt)` on the interior nodes.
pub(crate) struct ControlSystem {
    s: Scheme,
    /// Frequency weight exponent for traces (`-m`).
    m: f64,
}

impl ControlSystem {
    fn levels(&self) -> usize {
        self.s.steps
    }

    /// Terminal `(y^N, v^N)` on nodes `1..n`, each of length `n - 1`.
    fn forward(&self, y0: &[f64], y1: &[f64], f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.s.n;
        let nl = self.levels();
        let mut prev = y0.to_vec();
        prev[0] = f[0];
        prev[n] = 0.0;
        let mut cur = vec![0.0; n + 1];
        self.s.first_step(&prev, y1, &mut cur);
        cur[0] = f[1];
        cur[n] = 0.0;
        let mut next = vec![0.0; n + 1];
        for l in 1..nl {
            self.s.step(&prev, &cur, &mut next);
            next[0] = f[l + 1];
            next[n] = 0.0;
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        let y: Vec<f64> = cur[1..n].to_vec();
        let v: Vec<f64> = (1..n).map(|i| (cur[i] - prev[i]) / self.s.dt).collect();
        (y, v)
    }

    /// Gradient with respect to `f` of `alpha . y^N + beta . v^N` for the
    /// zero-data forward map: the adjoint wave equation run backward.
    fn adjoint(&self, alpha: &[f64], beta: &[f64]) -> Vec<f64> {
        let n = self.s.n;
        let nl = self.levels();
        let dt = self.s.dt;
        let r = (dt / self.s.dx).powi(2);
        let mass = &self.s.mass;
        // p vectors on nodes 0..=n with zero boundary entries.
        let bt = |p: &[f64], out: &mut [f64]| {
            for i in 1..n {
                let q = |k: usize| if k == 0 || k == n { 0.0 } else { p[k] / mass[k] };
                out[i] = 2.0 * p[i] + r * (q(i + 1) - 2.0 * q(i) + q(i - 1));
            }
        };
        let mut grad = vec![0.0; nl + 1];
        let c1 = r / mass[1];
        // p^N and p^{N-1}.
        let mut p_next = vec![0.0; n + 1]; // p^{k+1}
        let mut p_cur = vec![0.0; n + 1]; // p^k
        for i in 1..n {
            p_next[i] = alpha[i - 1] + beta[i - 1] / dt;
        }
        bt(&p_next, &mut p_cur);
        for i in 1..n {
            p_cur[i] += -beta[i - 1] / dt;
        }
        // grad f_{N-1} = c . p^N.
        grad[nl - 1] = c1 * p_next[1];
        let mut k = nl - 1;
        let mut tmp = vec![0.0; n + 1];
        while k >= 1 {
            // p_cur = p^k: record the gradient of f_{k-1}.
            grad[k - 1] = if k == 1 { 0.5 * c1 * p_cur[1] } else { c1 * p_cur[1] };
            if k == 1 {
                break;
            }
            bt(&p_cur, &mut tmp);
            for i in 1..n {
                tmp[i] -= p_next[i];
            }
            std::mem::swap(&mut p_next, &mut p_cur);
            std::mem::swap(&mut p_cur, &mut tmp);
            k -= 1;
        }
        grad
    }

    /// Symmetric frequency weight `(1 + xi^2)^m` applied through a
    /// zero-padded transform (no taper, so the operator stays symmetric).
    fn weight(&self, f: &mut [f64]) {
        if self.m == 0.0 {
            return;
        }
        let len = f.len();
        let size = (2 * len).next_power_of_two();
        let mut buf: Vec<Complex<f64>> =
            (0..size).map(|i| Complex::new(if i < len { f[i] } else { 0.0 }, 0.0)).collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(size).process(&mut buf);
        let dxi = 2.0 * std::f64::consts::PI / (size as f64 * self.s.dt);
        for (k, c) in buf.iter_mut().enumerate() {
            let kk = if k <= size / 2 { k as f64 } else { k as f64 - size as f64 };
            let xi = kk * dxi;
            *c *= (1.0 + xi * xi).powf(self.m) / size as f64;
        }
        planner.plan_fft_inverse(size).process(&mut buf);
        for (v, c) in f.iter_mut().zip(&buf) {
            *v = c.re;
        }
    }

    /// `(K^-1 v)` for the Dirichlet Laplacian `K = tridiag(-1, 2, -1) / dx^2`
    /// on the interior, by the Thomas algorithm.
    fn inverse_laplacian(&self, v: &[f64]) -> Vec<f64> {
        let k = v.len();
        let dx2 = self.s.dx * self.s.dx;
        let mut c = vec![0.0; k];
        let mut d = vec![0.0; k];
        let (a, b) = (-1.0 / dx2, 2.0 / dx2);
        c[0] = a / b;
        d[0] = v[0] / b;
        for i in 1..k {
            let den = b - a * c[i - 1];
            c[i] = a / den;
            d[i] = (v[i] - a * d[i - 1]) / den;
        }
        let mut x = vec![0.0; k];
        x[k - 1] = d[k - 1];
        for i in (0..k - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        x
    }

    fn l2(&self, y: &[f64]) -> f64 {
        y.iter().map(|v| v * v).sum::<f64>() * self.s.dx
    }

    fn hm1(&self, v: &[f64]) -> f64 {
        let w = self.inverse_laplacian(v);
        v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() * self.s.dx
    }
}

/// Boundary control at `x = 0` steering `(y0, y1)` to rest at time `T`:
/// preconditioned conjugate gradients on the HUM dual functional, with the
/// `L^2 x H^1_0` Riesz map of the terminal state as preconditioner.
pub fn hum_control(
    omega: &Coefficient,
    y0: &[f64],
    y1: &[f64],
    t: f64,
    m: f64,
    opts: &ControlOptions,
) -> Result<ControlResult> {
    let n = opts.resolution;
    if y0.len() != n + 1 || y1.len() != n + 1 {
        return Err(invalid("target data must have resolution + 1 samples"));
    }
    if !(m >= 0.0) {
        return Err(invalid("control order m must be nonnegative"));
    }
    let s = Scheme::new(omega, n, t, opts.cfl)?;
    if s.steps < 3 {
        return Err(invalid("horizon too short for the control loop"));
    }
    let sys = ControlSystem { s, m: -m };
    let dt = sys.s.dt;
    let nl = sys.levels();
    let t_omega = travel_time(omega).value;
    let t_run = dt * nl as f64;
    let mut y0 = y0.to_vec();
    y0[0] = 0.0;
    y0[n] = 0.0;
    let mut y1 = y1.to_vec();
    y1[0] = 0.0;
    y1[n] = 0.0;
    let e0 = sys.l2(&y0[1..n]) + sys.hm1(&y1[1..n]);
    let zero_f = vec![0.0; nl + 1];
    let finish = |f: Vec<f64>, iterations: usize, history: Vec<CgStep>| -> ControlResult {
        let (yt, vt) = sys.forward(&y0, &y1, &f);
        let (l2, hm1) = (sys.l2(&yt), sys.hm1(&vt));
        let rel = if e0 > 0.0 { (l2 + hm1) / e0 } else { 0.0 };
        let control_l2 = f.iter().map(|v| v * v).sum::<f64>() * dt;
        let control_norm = dual_trace_norm(&f, dt, m);
        let size = sys.l2(&y0[1..n]).sqrt() + sys.hm1(&y1[1..n]).sqrt();
        ControlResult {
            y0: y0.clone(),
            y1: y1.clone(),
            t: t_run,
            admissible: t_run > 2.0 * t_omega,
            m,
            dt,
            control: f,
            terminal_l2: l2.sqrt(),
            terminal_hm1: hm1.sqrt(),
            terminal_relative_energy: rel,
            control_l2,
            control_norm,
            cost_constant: if size > 0.0 { control_norm / size } else { 0.0 },
            iterations,
            controlled: rel <= opts.tolerance,
            history,
        }
    };
    if !(e0 > 0.0) {
        return Ok(finish(zero_f, 0, Vec::new()));
    }

    let (by, bv) = sys.forward(&y0, &y1, &zero_f);
    let split = n - 1;
    let mut r: Vec<f64> = by.iter().chain(&bv).map(|v| -v).collect();
    let precondition = |r: &[f64]| -> Vec<f64> {
        let mut z = r[..split].to_vec();
        z.extend(sys.inverse_laplacian(&r[split..]));
        z
    };
    // H p = L W L^T p / dt; also returns the control increment W L^T p / dt.
    let apply = |p: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut g = sys.adjoint(&p[..split], &p[split..]);
        sys.weight(&mut g);
        g.iter_mut().for_each(|v| *v /= dt);
        let zero = vec![0.0; n + 1];
        let (y, v) = sys.forward(&zero, &zero, &g);
        (y.into_iter().chain(v).collect(), g)
    };
    let energy_of = |r: &[f64], z: &[f64]| r.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() * sys.s.dx;

    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = energy_of(&r, &z);
    let mut f = zero_f.clone();
    let mut history = vec![CgStep { iteration: 0, residual: rz / e0, cost: 0.0 }];
    let mut best = (rz / e0, f.clone());
    let mut iterations = 0;
    while iterations < opts.max_iterations && rz / e0 > opts.tolerance {
        let (hp, df) = apply(&p);
        let php = energy_of(&p, &hp);
        if !(php > 0.0) {
            break;
        }
        let a = rz / php;
        for (fv, d) in f.iter_mut().zip(&df) {
            *fv += a * d;
        }
        for (rv, h) in r.iter_mut().zip(&hp) {
            *rv -= a * h;
        }
        z = precondition(&r);
        let rz_new = energy_of(&r, &z);
        iterations += 1;
        let cost = f.iter().map(|v| v * v).sum::<f64>() * dt;
        history.push(CgStep { iteration: iterations, residual: rz_new / e0, cost });
        if rz_new / e0 < best.0 {
            best = (rz_new / e0, f.clone());
        }
        let b = rz_new / rz;
        rz = rz_new;
        for (pv, zv) in p.iter_mut().zip(&z) {
            *pv = zv + b * *pv;
        }
    }
    Ok(finish(best.1, iterations, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::Family;
    use std::f64::consts::PI;

    fn constant(v: f64) -> Coefficient {
        Coefficient::new(Family::Constant { value: v }).unwrap()
    }

    #[test]
    fn single_mode_quotient_is_one_half() {
        let n = 1024;
        for k in [1usize, 3, 6] {
            let u0 = sample_fn(n, |x| (k as f64 * PI * x).sin());
            let q = observability_quotient(
                &constant(1.0),
                &u0,
                &vec![0.0; n + 1],
                2.0,
                Measurement::Derivative { m: 0 },
                &WaveOptions::default(),
            )
            .unwrap();
            assert!((q.value - 0.5).abs() < 0.01, "k {k}: {}", q.value);
        }
    }

    #[test]
    fn quotient_scale_invariance_and_degenerate_cases() {
        let n = 256;
        let omega = Coefficient::new(Family::Trigonometric { mean: 1.5, cos: vec![0.3], sin: vec![0.1] }).unwrap();
        let u0 = sample_fn(n, |x| x * (1.0 - x) * (3.0 * x).sin());
        let u1 = sample_fn(n, |x| (2.0 * PI * x).sin());
        let meas = Measurement::Cumulative { m: 1 };
        let opts = WaveOptions::default();
        let q1 = observability_quotient(&omega, &u0, &u1, 3.0, meas, &opts).unwrap();
        let s = |v: &[f64]| v.iter().map(|x| -3.7e5 * x).collect::<Vec<_>>();
        let q2 = observability_quotient(&omega, &s(&u0), &s(&u1), 3.0, meas, &opts).unwrap();
        assert!((q1.value / q2.value - 1.0).abs() < 1e-12);
        let zero = vec![0.0; n + 1];
        let e = observability_quotient(&omega, &zero, &zero, 3.0, meas, &opts);
        assert!(matches!(e, Err(Error::Degenerate(_))));
    }

    #[test]
    fn early_horizon_sees_nothing() {
        // Data in [0.4, 0.6] travels at speed 1 and reaches x = 0 at t = 0.4.
        let n = 1024;
        let bump = |x: f64| {
            let s = (x - 0.5) / 0.1;
            if s.abs() < 1.0 {
                (-1.0 / (1.0 - s * s)).exp()
            } else {
                0.0
            }
        };
        let u0 = sample_fn(n, bump);
        let e = observability_quotient(
            &constant(1.0),
            &u0,
            &vec![0.0; n + 1],
            0.3,
            Measurement::Derivative { m: 0 },
            &WaveOptions::default(),
        );
        assert!(matches!(e, Err(Error::QuotientUnbounded(_))), "{e:?}");
    }

    #[test]
    fn cumulative_denominator_never_increases_quotient() {
        let n = 256;
        let omega = Coefficient::new(Family::Lipschitz { offset: 1.0, slope: 1.0, center: 0.4 }).unwrap();
        let u0 = sample_fn(n, |x| (PI * x).sin() + 0.3 * (4.0 * PI * x).sin());
        let u1 = sample_fn(n, |x| (2.0 * PI * x).sin());
        let mut last = f64::INFINITY;
        for m in 0..4 {
            let q = observability_quotient(&omega, &u0, &u1, 3.5, Measurement::Cumulative { m }, &WaveOptions::default())
                .unwrap();
            assert!(q.value <= last);
            last = q.value;
        }
    }

    #[test]
    fn constant_density_ensemble_is_one_half() {
        let spec = EnsembleSpec { cutoffs: vec![4, 8], random_members: 3, resolution: 512, ..Default::default() };
        let rep = estimate_observability_constant(&constant(1.0), 2.0, &spec).unwrap();
        for e in &rep.estimates {
            assert!((e.c_obs[0] / 0.5 - 1.0).abs() < 0.02, "{:?}", e);
            let g = e.gramian.as_ref().unwrap()[0];
            assert!((g / 0.5 - 1.0).abs() < 0.02, "gramian {g}");
        }
        assert_eq!(rep.loss_order, Some(0));
        // Deterministic given the seed.
        let again = estimate_observability_constant(&constant(1.0), 2.0, &spec).unwrap();
        assert_eq!(rep, again);
    }

    #[test]
    fn continuation_ratio_single_mode() {
        let n = 1024;
        let k = 3.0;
        let u0 = sample_fn(n, |x| (k * PI * x).sin());
        let tr = evolve(&constant(1.0), &u0, &vec![0.0; n + 1], 2.0, &Default::default()).unwrap();
        let r = unique_continuation_check(&tr, 1).unwrap();
        let want = 1.0 / (k * PI).powi(2);
        assert!((r.ratio / want - 1.0).abs() < 0.01, "{} vs {want}", r.ratio);
        let zero = vec![0.0; n + 1];
        let tr = evolve(&constant(1.0), &zero, &zero, 2.0, &Default::default()).unwrap();
        assert!(matches!(unique_continuation_check(&tr, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn adjoint_is_exact_transpose() {
        let omega = Coefficient::new(Family::Trigonometric { mean: 1.5, cos: vec![0.3], sin: vec![0.1] }).unwrap();
        let n = 32;
        let sys = ControlSystem { s: Scheme::new(&omega, n, 0.7, 0.9).unwrap(), m: 0.0 };
        let nl = sys.levels();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f: Vec<f64> = (0..=nl).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let al: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let be: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let zero = vec![0.0; n + 1];
        let (y, v) = sys.forward(&zero, &zero, &f);
        let lhs: f64 = y.iter().zip(&al).map(|(a, b)| a * b).sum::<f64>()
            + v.iter().zip(&be).map(|(a, b)| a * b).sum::<f64>();
        let g = sys.adjoint(&al, &be);
        let rhs: f64 = g.iter().zip(&f).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} {rhs}");
        // The weight is symmetric.
        let sysw = ControlSystem { m: -1.0, ..sys };
        let mut wf = f.clone();
        sysw.weight(&mut wf);
        let mut wg = g.clone();
        sysw.weight(&mut wg);
        let a: f64 = wf.iter().zip(&g).map(|(x, y)| x * y).sum();
        let b: f64 = f.iter().zip(&wg).map(|(x, y)| x * y).sum();
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn zero_target_needs_no_control() {
        let n = 64;
        let zero = vec![0.0; n + 1];
        let opts = ControlOptions { resolution: n, ..Default::default() };
        let r = hum_control(&constant(1.0), &zero, &zero, 2.5, 0.0, &opts).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.control.iter().all(|v| *v == 0.0));
        assert!(r.controlled);
    }

    #[test]
    fn constant_density_is_controllable() {
        let n = 128;
        let y0 = sample_fn(n, |x| (PI * x).sin());
        let opts = ControlOptions { resolution: n, ..Default::default() };
        let r = hum_control(&constant(1.0), &y0, &vec![0.0; n + 1], 2.5, 0.0, &opts).unwrap();
        assert!(r.controlled, "{:?}", r.history.last());
        assert!(r.terminal_relative_energy < 1e-6 && r.iterations < 200);
        assert!(r.admissible);
    }

    #[test]
    fn continuation_supremum_is_refinement_stable() {
        let omega = Coefficient::new(Family::Trigonometric { mean: 1.5, cos: vec![0.3], sin: vec![0.1] }).unwrap();
        let t = 2.0 * travel_time(&omega).value + 0.5;
        let a = unique_continuation_ensemble(&omega, t, 2, 50, 1024, 11).unwrap();
        let b = unique_continuation_ensemble(&omega, t, 2, 50, 2048, 11).unwrap();
        assert!((a / b - 1.0).abs() < 0.2, "{a} vs {b}");
    }

    #[test]
    fn lambda_sweep_measures_seminorms() {
        use crate::coeff::{build_pairs, make_counterexample_density, make_sequences, Cutoff, Lambda, SequenceMode, SequenceSpec};
        let spec = SequenceSpec {
            descriptor: ModulusDescriptor::Lambda(Lambda::LogPower { p: 0.5 }),
            n: 1,
            j_min: 2,
            j_max: 3,
            mode: SequenceMode::Scaled { j0: 4 },
            m_const: 25.0,
        };
        let params = make_sequences(&spec).unwrap();
        let pairs = build_pairs(&params, Cutoff::default(), 0.3).unwrap();
        let omegas = make_counterexample_density(&params, &pairs).unwrap();
        let table = run_counterexample_sweep(&params, &omegas, &[0], &SweepOptions::default()).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert!(table.rows.iter().all(|r| r.seminorm.is_some_and(|k| k > 0.0) && r.quotient[0] > 0.0));
        assert!(table.seminorm_log_slope.is_some());
        assert!(table.rows.iter().all(|r| r.boundary_residual < 1e-9), "{:?}", table.rows);
        assert!(table.to_csv().starts_with("j,h,Q_0,numerator,denominator,boundary_smallness\n"));
    }
}
