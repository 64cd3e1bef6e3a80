//! Leapfrog solver for `omega(x) u_tt = u_xx` on `[0, 1]`, its sidewise
//! counterpart (space as the evolution variable) and the energy bookkeeping
//! built on top of both.
//!
//! The forward scheme is
//! `m_i (u^{n+1} - 2u^n + u^{n-1}) / dt^2 = (u_{i+1} - 2u_i + u_{i-1}) / dx^2`
//! with node mass `m_i = (omega(x_i - dx/2) + omega(x_i + dx/2)) / 2`. The
//! quadratic form
//! `E^{n+1/2} = 1/2 sum m_i |(u^{n+1}-u^n)/dt|^2 dx
//!            + 1/2 sum (d u^{n+1})(d u^n) / dx`
//! is conserved exactly by the homogeneous scheme and is what the energy
//! series report. Since the scheme is linear and time invariant, the time
//! differences `(delta_t)^k u` are discrete solutions too, so the same form
//! applied to them gives a conserved discrete `E_k`.

use std::fmt::Write as _;
use std::io::{Read, Write};

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::coeff::Coefficient;
use crate::error::{invalid, Error, Result};
use crate::quadrature::trapezoid;
use crate::tolerances::{CFL, SNR_FLOOR, TAPER_FRACTION};

/// Energy fraction kept by the cosine taper on a stationary signal:
/// `1 - 2a + 2a * 3/8` for taper fraction `a`.
pub const TAPER_ENERGY: f64 = 1.0 - 2.0 * TAPER_FRACTION + 0.75 * TAPER_FRACTION;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveOptions {
    /// Courant number `dt / (dx sqrt(omega_*))`, at most [`CFL`].
    pub cfl: f64,
    /// Highest energy index `k` recorded.
    pub k_max: usize,
    /// Record the `E_k` series (an `O(n k_max)` cost per step).
    pub energies: bool,
    /// Keep `(u, u_t)` every `stride` levels (the last level is always kept).
    pub snapshot_stride: Option<usize>,
}

impl Default for WaveOptions {
    fn default() -> Self {
        WaveOptions { cfl: CFL, k_max: 2, energies: true, snapshot_stride: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub ut: Vec<f64>,
}

/// Ratios of the forced-problem estimates, measured on one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcingRatios {
    /// `int_0^T int (omega z_t^2 + z_x^2)`.
    pub interior_energy: f64,
    /// `int_0^T (|z_x(t,0)|^2 + |z_x(t,1)|^2)`.
    pub boundary_flux: f64,
    pub w2_norms: [f64; 2],
    pub w3_norms: [f64; 2],
    /// `interior_energy / (omega^* (|f|_{W^{2,inf}}^2 + |g|_{W^{2,inf}}^2))`.
    pub interior_ratio: Option<f64>,
    /// `boundary_flux / (omega^* (|f|_{W^{3,inf}}^2 + |g|_{W^{3,inf}}^2))`.
    pub flux_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveTrajectory {
    /// Number of cells.
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
    pub t_final: f64,
    pub cfl: f64,
    /// Formal order of the scheme.
    pub order: u32,
    pub omega_lower: f64,
    pub omega_upper: f64,
    /// Node masses.
    pub mass: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// `u_x(t_l, 0)` for `l = 0..=steps`.
    pub trace_left: Vec<f64>,
    /// `u_x(t_l, 1)` for `l = 0..=steps`.
    pub trace_right: Vec<f64>,
    /// `energies[k][l]` is `E_k` at `t_{l+1/2}`, `l = 0..steps-k`.
    pub energies: Vec<Vec<f64>>,
    pub u_final: Vec<f64>,
    pub ut_final: Vec<f64>,
    /// `Some(false)` when the boundary forcing does not vanish to first order at `t = 0`.
    pub compatible: Option<bool>,
    pub forcing: Option<ForcingRatios>,
}

/// Dirichlet data sampled at the solver levels `t_l = l dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryForcing {
    pub dt: f64,
    /// `f(t_l)` at `x = 0`.
    pub left: Vec<f64>,
    /// `g(t_l)` at `x = 1`.
    pub right: Vec<f64>,
    /// Declared number of bounded derivatives.
    pub smoothness: u32,
}

impl BoundaryForcing {
    /// Samples `steps + 2` levels, one beyond the horizon for the final velocity.
    pub fn from_fn(
        f: impl Fn(f64) -> f64,
        g: impl Fn(f64) -> f64,
        dt: f64,
        steps: usize,
        smoothness: u32,
    ) -> Self {
        let t = |l: usize| l as f64 * dt;
        BoundaryForcing {
            dt,
            left: (0..steps + 2).map(|l| f(t(l))).collect(),
            right: (0..steps + 2).map(|l| g(t(l))).collect(),
            smoothness,
        }
    }

    /// True when both signals and their first derivatives vanish at `t = 0`,
    /// up to round-off and the `O(dt)` error of a one-sided derivative.
    pub fn compatible_with_rest(&self) -> bool {
        let dt = self.dt;
        [&self.left, &self.right].iter().all(|s| {
            if s.len() < 3 {
                return s.iter().all(|v| *v == 0.0);
            }
            let sup = s.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let curv = s.windows(3).fold(0.0f64, |a, w| a.max((w[2] - 2.0 * w[1] + w[0]).abs())) / (dt * dt);
            let d = (-3.0 * s[0] + 4.0 * s[1] - s[2]) / (2.0 * dt);
            s[0].abs() <= 1e-12 * sup && d.abs() <= 2.0 * curv * dt + 1e-12 * sup / dt
        })
    }
}

/// Uniform space grid, time step and node masses shared by the forward
/// solver, the sidewise solver and the control loop.
#[derive(Debug, Clone)]
pub(crate) struct Scheme {
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
    pub mass: Vec<f64>,
}

impl Scheme {
    pub fn new(omega: &Coefficient, n: usize, t_final: f64, cfl: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(invalid(format!("resolution {n} must be a power of two, at least 4")));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(invalid(format!("horizon T = {t_final} must be positive")));
        }
        if !(cfl > 0.0) || cfl > CFL {
            return Err(Error::Cfl(format!("Courant number {cfl} outside (0, {CFL}]")));
        }
        if (omega.length() - 1.0).abs() > 1e-14 {
            return Err(invalid("the solver works on [0, 1]; rescale the coefficient first"));
        }
        omega.check_hyperbolicity(4 * n)?;
        let dx = 1.0 / n as f64;
        let dt_max = cfl * dx * omega.lower().sqrt();
        // Level counts are multiples of n/64, so doubling n (n >= 64) halves
        // dt exactly and refinement studies compare on nested time grids.
        let q = (n / 64).max(1);
        let steps = q * (t_final / (dt_max * q as f64)).ceil() as usize;
        let dt = t_final / steps as f64;
        let mass = node_mass(omega, n);
        if let Some(m) = mass.iter().find(|m| !(**m >= omega.lower() * (1.0 - 1e-12))) {
            return Err(Error::Hyperbolicity(format!("node mass {m} below omega_* = {}", omega.lower())));
        }
        Ok(Scheme { n, dx, dt, steps, mass })
    }

    /// `u^{n+1}` from `u^{n-1}`, `u^n` on the interior nodes.
    pub fn step(&self, prev: &[f64], cur: &[f64], next: &mut [f64]) {
        let r = (self.dt / self.dx).powi(2);
        for i in 1..self.n {
            let lap = cur[i + 1] - 2.0 * cur[i] + cur[i - 1];
            next[i] = 2.0 * cur[i] - prev[i] + r * lap / self.mass[i];
        }
    }

    /// Second-order start `u^1 = u^0 + dt u_1 + dt^2/2 D u^0` on the interior.
    pub fn first_step(&self, u0: &[f64], u1: &[f64], next: &mut [f64]) {
        let r = (self.dt / self.dx).powi(2);
        for i in 1..self.n {
            let lap = u0[i + 1] - 2.0 * u0[i] + u0[i - 1];
            next[i] = u0[i] + self.dt * u1[i] + 0.5 * r * lap / self.mass[i];
        }
    }

    /// The conserved form between two consecutive levels.
    pub fn energy(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut kin = 0.0;
        for i in 0..=self.n {
            let w = if i == 0 || i == self.n { 0.5 } else { 1.0 };
            let v = (b[i] - a[i]) / self.dt;
            kin += w * self.mass[i] * v * v;
        }
        let mut pot = 0.0;
        for i in 0..self.n {
            pot += (b[i + 1] - b[i]) * (a[i + 1] - a[i]);
        }
        0.5 * kin * self.dx + 0.5 * pot / self.dx
    }

    pub fn trace_left(&self, u: &[f64]) -> f64 {
        (-11.0 * u[0] + 18.0 * u[1] - 9.0 * u[2] + 2.0 * u[3]) / (6.0 * self.dx)
    }

    pub fn trace_right(&self, u: &[f64]) -> f64 {
        let n = self.n;
        (11.0 * u[n] - 18.0 * u[n - 1] + 9.0 * u[n - 2] - 2.0 * u[n - 3]) / (6.0 * self.dx)
    }
}

fn node_mass(omega: &Coefficient, n: usize) -> Vec<f64> {
    let dx = 1.0 / n as f64;
    let cell: Vec<f64> = (0..n).map(|i| omega.eval((i as f64 + 0.5) * dx)).collect();
    (0..=n)
        .map(|i| match i {
            0 => cell[0],
            i if i == n => cell[n - 1],
            i => 0.5 * (cell[i - 1] + cell[i]),
        })
        .collect()
}

/// Time step and level count the solver will use for this configuration.
pub fn time_grid(omega: &Coefficient, n: usize, t_final: f64, cfl: f64) -> Result<(f64, usize)> {
    let s = Scheme::new(omega, n, t_final, cfl)?;
    Ok((s.dt, s.steps))
}

/// `f` sampled at the `n + 1` nodes of `[0, 1]`.
pub fn sample_fn(n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..=n).map(|i| f(i as f64 / n as f64)).collect()
}

fn binomial_row(k: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 0..k {
        let mut next = vec![1.0; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row
}

/// `(delta_t)^k u^l / dt^k` from levels `l..=l+k` (oldest first).
fn time_difference(levels: &[&[f64]], k: usize, dt: f64, out: &mut [f64]) {
    let c = binomial_row(k);
    let scale = dt.powi(-(k as i32));
    out.iter_mut().for_each(|v| *v = 0.0);
    for (l, lev) in levels.iter().enumerate().take(k + 1) {
        let sign = if (k - l).is_multiple_of(2) { 1.0 } else { -1.0 };
        let w = sign * c[l] * scale;
        for (o, v) in out.iter_mut().zip(lev.iter()) {
            *o += w * v;
        }
    }
}

struct Run {
    trace_left: Vec<f64>,
    trace_right: Vec<f64>,
    energies: Vec<Vec<f64>>,
    snapshots: Vec<Snapshot>,
    u_final: Vec<f64>,
    ut_final: Vec<f64>,
    space_time_energy: f64,
}

/// Shared time loop. `boundary(l)` gives the Dirichlet values at level `l`.
fn run_scheme(
    s: &Scheme,
    u0: &[f64],
    u1: &[f64],
    boundary: &dyn Fn(usize) -> (f64, f64),
    opts: &WaveOptions,
) -> Run {
    let n = s.n;
    let k_max = opts.k_max;
    let depth = k_max + 2;
    // Ring buffer of the last `depth` levels; level l lives in slot l % depth.
    let mut ring: Vec<Vec<f64>> = vec![vec![0.0; n + 1]; depth];
    ring[0].copy_from_slice(u0);
    let (a, b) = boundary(0);
    ring[0][0] = a;
    ring[0][n] = b;

    let mut trace_left = Vec::with_capacity(s.steps + 1);
    let mut trace_right = Vec::with_capacity(s.steps + 1);
    let mut energies: Vec<Vec<f64>> = (0..=k_max).map(|k| Vec::with_capacity(s.steps.saturating_sub(k))).collect();
    let mut snapshots = Vec::new();
    let stride = opts.snapshot_stride.filter(|&st| st > 0);
    let mut u_final = Vec::new();
    let mut ut_final = Vec::new();
    let mut space_time = 0.0;
    let mut w_a = vec![0.0; n + 1];
    let mut w_b = vec![0.0; n + 1];
    let mut next = vec![0.0; n + 1];

    trace_left.push(s.trace_left(&ring[0]));
    trace_right.push(s.trace_right(&ring[0]));

    // Computes level l + 1 for l = 0..=steps (one level past the horizon for
    // the final velocity).
    for l in 0..=s.steps {
        {
            let cur = &ring[l % depth];
            if l == 0 {
                s.first_step(cur, u1, &mut next);
            } else {
                let prev = &ring[(l - 1) % depth];
                s.step(prev, cur, &mut next);
            }
        }
        let (a, b) = boundary(l + 1);
        next[0] = a;
        next[n] = b;
        let slot = (l + 1) % depth;
        ring[slot].copy_from_slice(&next);

        // Velocity at level l for snapshots.
        let want_snap = stride.is_some_and(|st| l % st == 0) || l == s.steps;
        if want_snap {
            let cur = &ring[l % depth];
            let ut: Vec<f64> = if l == 0 {
                let mut v = u1.to_vec();
                if s.steps > 0 {
                    v[0] = (ring[1 % depth][0] - cur[0]) / s.dt;
                    v[n] = (ring[1 % depth][n] - cur[n]) / s.dt;
                }
                v
            } else {
                let prev = &ring[(l - 1) % depth];
                (0..=n).map(|i| (next[i] - prev[i]) / (2.0 * s.dt)).collect()
            };
            let t = l as f64 * s.dt;
            if l == s.steps {
                u_final = cur.clone();
                ut_final = ut.clone();
            }
            if stride.is_some_and(|st| l % st == 0) || (stride.is_some() && l == s.steps) {
                snapshots.push(Snapshot { t, u: cur.clone(), ut });
            }
        }
        if l == s.steps {
            break;
        }

        trace_left.push(s.trace_left(&next));
        trace_right.push(s.trace_right(&next));

        // Space-time energy on the half level l + 1/2.
        {
            let a = &ring[l % depth];
            let b = &next;
            let mut kin = 0.0;
            let mut pot = 0.0;
            for i in 0..=n {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                let v = (b[i] - a[i]) / s.dt;
                kin += w * s.mass[i] * v * v;
            }
            for i in 0..n {
                let ga = a[i + 1] - a[i];
                let gb = b[i + 1] - b[i];
                pot += 0.5 * (ga * ga + gb * gb);
            }
            space_time += (kin * s.dx + pot / s.dx) * s.dt;
        }

        // E_k at t_{m+1/2} with m = l + 1 - (k + 1) needs levels m..=l+1.
        for k in 0..=k_max {
            if !opts.energies || l + 1 < k + 1 {
                continue;
            }
            let m = l - k;
            let lv: Vec<&[f64]> = (m..=l + 1).map(|q| ring[q % depth].as_slice()).collect();
            time_difference(&lv[..k + 1], k, s.dt, &mut w_a);
            time_difference(&lv[1..], k, s.dt, &mut w_b);
            energies[k].push(s.energy(&w_a, &w_b));
        }
    }

    Run { trace_left, trace_right, energies, snapshots, u_final, ut_final, space_time_energy: space_time }
}

fn check_data(n: usize, u0: &[f64], u1: &[f64]) -> Result<()> {
    if u0.len() != n + 1 || u1.len() != n + 1 {
        return Err(invalid("initial data must have resolution + 1 samples"));
    }
    if u0.iter().chain(u1).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite initial data"));
    }
    let scale = u0.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    if u0[0].abs() > 1e-12 * scale || u0[n].abs() > 1e-12 * scale {
        return Err(invalid("u0 must vanish at both endpoints"));
    }
    Ok(())
}

/// Homogeneous Dirichlet evolution of `(u0, u1)` sampled at the `n + 1`
/// nodes, `n = u0.len() - 1`.
pub fn evolve(
    omega: &Coefficient,
    u0: &[f64],
    u1: &[f64],
    t_final: f64,
    opts: &WaveOptions,
) -> Result<WaveTrajectory> {
    let n = u0.len().saturating_sub(1);
    let s = Scheme::new(omega, n, t_final, opts.cfl)?;
    check_data(n, u0, u1)?;
    let mut u0 = u0.to_vec();
    let mut u1 = u1.to_vec();
    u0[0] = 0.0;
    u0[n] = 0.0;
    u1[0] = 0.0;
    u1[n] = 0.0;
    let run = run_scheme(&s, &u0, &u1, &|_| (0.0, 0.0), opts);
    Ok(assemble(omega, &s, opts, run, None, None))
}

fn assemble(
    omega: &Coefficient,
    s: &Scheme,
    opts: &WaveOptions,
    run: Run,
    compatible: Option<bool>,
    forcing: Option<ForcingRatios>,
) -> WaveTrajectory {
    WaveTrajectory {
        n: s.n,
        dx: s.dx,
        dt: s.dt,
        steps: s.steps,
        t_final: s.dt * s.steps as f64,
        cfl: s.dt / (s.dx * omega.lower().sqrt()),
        order: 2,
        omega_lower: omega.lower(),
        omega_upper: omega.upper(),
        mass: s.mass.clone(),
        snapshots: run.snapshots,
        trace_left: run.trace_left,
        trace_right: run.trace_right,
        energies: if opts.energies { run.energies } else { Vec::new() },
        u_final: run.u_final,
        ut_final: run.ut_final,
        compatible,
        forcing,
    }
}

/// `sum_{i <= k} sup |f^(i)|` by repeated second-order differences.
pub fn w_inf_norm(samples: &[f64], dt: f64, k: usize) -> f64 {
    let mut cur = samples.to_vec();
    let mut total = cur.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for _ in 0..k {
        let len = cur.len();
        if len < 3 {
            break;
        }
        let mut d = vec![0.0; len];
        d[0] = (-3.0 * cur[0] + 4.0 * cur[1] - cur[2]) / (2.0 * dt);
        d[len - 1] = (3.0 * cur[len - 1] - 4.0 * cur[len - 2] + cur[len - 3]) / (2.0 * dt);
        for i in 1..len - 1 {
            d[i] = (cur[i + 1] - cur[i - 1]) / (2.0 * dt);
        }
        total += d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        cur = d;
    }
    total
}

/// Zero initial data driven by Dirichlet values `z(t,0) = f(t)`, `z(t,1) = g(t)`.
/// Boundary nodes take the forcing values from level 0 on, so a nonzero
/// `f(0)` enters as a jump seen by the first half step.
pub fn evolve_inhomogeneous(
    omega: &Coefficient,
    forcing: &BoundaryForcing,
    n: usize,
    t_final: f64,
    opts: &WaveOptions,
) -> Result<WaveTrajectory> {
    let s = Scheme::new(omega, n, t_final, opts.cfl)?;
    if (forcing.dt - s.dt).abs() > 1e-12 * s.dt {
        return Err(invalid(format!("forcing sampled at dt = {}, solver uses {}", forcing.dt, s.dt)));
    }
    if forcing.left.len() < s.steps + 2 || forcing.right.len() < s.steps + 2 {
        return Err(invalid(format!("forcing needs {} samples", s.steps + 2)));
    }
    if forcing.left.iter().chain(&forcing.right).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite forcing"));
    }
    let zero = vec![0.0; n + 1];
    let run = run_scheme(&s, &zero, &zero, &|l| (forcing.left[l], forcing.right[l]), opts);
    let boundary_flux = {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
        trapezoid(&sq(&run.trace_left), s.dt) + trapezoid(&sq(&run.trace_right), s.dt)
    };
    let horizon = |v: &[f64]| v[..=s.steps].to_vec();
    let (fl, fr) = (horizon(&forcing.left), horizon(&forcing.right));
    let w2 = [w_inf_norm(&fl, s.dt, 2), w_inf_norm(&fr, s.dt, 2)];
    let w3 = [w_inf_norm(&fl, s.dt, 3), w_inf_norm(&fr, s.dt, 3)];
    let ratio = |num: f64, w: [f64; 2]| {
        let den = omega.upper() * (w[0] * w[0] + w[1] * w[1]);
        (den > 0.0).then(|| num / den)
    };
    let ratios = ForcingRatios {
        interior_energy: run.space_time_energy,
        boundary_flux,
        w2_norms: w2,
        w3_norms: w3,
        interior_ratio: ratio(run.space_time_energy, w2),
        flux_ratio: ratio(boundary_flux, w3),
    };
    let compatible = forcing.compatible_with_rest();
    Ok(assemble(omega, &s, opts, run, Some(compatible), Some(ratios)))
}

impl WaveTrajectory {
    pub fn time(&self, l: usize) -> f64 {
        l as f64 * self.dt
    }

    /// Relative drift `max |E_k - E_k(first)| / |E_k(first)|`.
    pub fn energy_drift(&self, k: usize) -> Option<f64> {
        let e = self.energies.get(k)?;
        let e0 = *e.first()?;
        if e0 == 0.0 {
            return Some(0.0);
        }
        Some(e.iter().fold(0.0f64, |a, v| a.max((v - e0).abs())) / e0.abs())
    }

    /// `t,trace_left,trace_right`.
    pub fn traces_csv(&self) -> String {
        let mut s = String::from("t,trace_left,trace_right\n");
        for (l, (a, b)) in self.trace_left.iter().zip(&self.trace_right).enumerate() {
            let _ = writeln!(s, "{},{a},{b}", self.time(l));
        }
        s
    }

    /// `t,E_0,...,E_kmax` on the half levels common to every series.
    pub fn energies_csv(&self) -> String {
        let mut s = String::from("t");
        for k in 0..self.energies.len() {
            let _ = write!(s, ",E_{k}");
        }
        s.push('\n');
        let rows = self.energies.iter().map(Vec::len).min().unwrap_or(0);
        for l in 0..rows {
            let _ = write!(s, "{}", (l as f64 + 0.5) * self.dt);
            for e in &self.energies {
                let _ = write!(s, ",{}", e[l]);
            }
            s.push('\n');
        }
        s
    }

    pub fn summary(&self) -> TrajectorySummary {
        TrajectorySummary {
            n: self.n,
            dx: self.dx,
            dt: self.dt,
            steps: self.steps,
            t_final: self.t_final,
            cfl: self.cfl,
            order: self.order,
            energy_initial: self.energies.iter().map(|e| e.first().copied().unwrap_or(0.0)).collect(),
            energy_drift: (0..self.energies.len()).map(|k| self.energy_drift(k).unwrap_or(0.0)).collect(),
            snapshots: self.snapshots.len(),
            compatible: self.compatible,
            forcing: self.forcing,
        }
    }

    /// Flat little-endian layout: `n: u64`, `rows: u64`, `T: f64`, then
    /// `rows` rows of `2(n+1) + 1` doubles each: `t`, `u[0..=n]`, `u_t[0..=n]`.
    pub fn write_snapshots_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.snapshots.len() as u64).to_le_bytes())?;
        w.write_all(&self.t_final.to_le_bytes())?;
        for snap in &self.snapshots {
            w.write_all(&snap.t.to_le_bytes())?;
            for v in snap.u.iter().chain(&snap.ut) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Reads the layout written by [`WaveTrajectory::write_snapshots_binary`];
/// returns `(n, T, snapshots)`.
pub fn read_snapshots_binary(r: &mut impl Read) -> std::io::Result<(usize, f64, Vec<Snapshot>)> {
    let mut b8 = [0u8; 8];
    let mut word = |r: &mut dyn Read| -> std::io::Result<[u8; 8]> {
        r.read_exact(&mut b8)?;
        Ok(b8)
    };
    let n = u64::from_le_bytes(word(r)?) as usize;
    let rows = u64::from_le_bytes(word(r)?) as usize;
    let t_final = f64::from_le_bytes(word(r)?);
    let mut snaps = Vec::with_capacity(rows);
    for _ in 0..rows {
        let t = f64::from_le_bytes(word(r)?);
        let mut u = Vec::with_capacity(n + 1);
        let mut ut = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            u.push(f64::from_le_bytes(word(r)?));
        }
        for _ in 0..=n {
            ut.push(f64::from_le_bytes(word(r)?));
        }
        snaps.push(Snapshot { t, u, ut });
    }
    Ok((n, t_final, snaps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
    pub t_final: f64,
    pub cfl: f64,
    pub order: u32,
    pub energy_initial: Vec<f64>,
    pub energy_drift: Vec<f64>,
    pub snapshots: usize,
    pub compatible: Option<bool>,
    pub forcing: Option<ForcingRatios>,
}

/// `m`-fold forward difference of a uniformly sampled signal divided by `dt^m`.
pub fn time_derivative(signal: &[f64], dt: f64, m: usize) -> Vec<f64> {
    let mut cur = signal.to_vec();
    for _ in 0..m {
        cur = cur.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    }
    cur
}

// ---------------------------------------------------------------------------
// Sidewise evolution

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Right,
    Left,
}

/// Cauchy data on the line `x = x0`, sampled at `t_l = l dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub x0: f64,
    pub dt: f64,
    pub u: Vec<f64>,
    pub ux: Vec<f64>,
}

impl Slice {
    /// The slice `u = 0`, `u_x = trace_left` at `x = 0` of a homogeneous run.
    pub fn left_boundary(traj: &WaveTrajectory) -> Self {
        Slice { x0: 0.0, dt: traj.dt, u: vec![0.0; traj.trace_left.len()], ux: traj.trace_left.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidewiseResult {
    pub dt: f64,
    /// Space substep of the sidewise leapfrog.
    pub dx: f64,
    /// Output abscissae.
    pub x: Vec<f64>,
    /// Valid time-index window `[lo, hi]` at each output abscissa.
    pub windows: Vec<(usize, usize)>,
    /// `u` on the window, per output abscissa.
    pub u: Vec<Vec<f64>>,
    /// `u_x` on the window, per output abscissa.
    pub ux: Vec<Vec<f64>>,
    /// `f_energy[k][i]` is `F_k(x[i])`.
    pub f_energy: Vec<Vec<f64>>,
}

/// Integrates `u_xx = omega(x) u_tt` in `x` from the slice, over `span`,
/// reporting every `output_dx`. The substep is the largest `output_dx / q`
/// with `q` integer and `dx sqrt(omega^*) <= dt`. The window of valid time
/// indices loses one node at each end per substep, the numerical domain of
/// dependence, which shrinks at least as fast as `sqrt(omega^*)` per unit `x`.
pub fn sidewise_evolve(
    omega: &Coefficient,
    slice: &Slice,
    direction: Direction,
    span: f64,
    output_dx: f64,
    k_max: usize,
) -> Result<SidewiseResult> {
    let len = slice.u.len();
    if slice.ux.len() != len || len < 3 {
        return Err(invalid("slice u and u_x must have the same length, at least 3"));
    }
    if !(span >= 0.0) || !(output_dx > 0.0) || !(slice.dt > 0.0) {
        return Err(invalid("span, output step and dt must be positive"));
    }
    let outputs = (span / output_dx).round() as usize;
    if (outputs as f64 * output_dx - span).abs() > 1e-9 * output_dx.max(span) {
        return Err(invalid("span must be a multiple of the output step"));
    }
    let sign = match direction {
        Direction::Right => 1.0,
        Direction::Left => -1.0,
    };
    let end = slice.x0 + sign * span;
    if end < -1e-12 || end > omega.length() + 1e-12 {
        return Err(invalid(format!("sidewise span leaves the domain at x = {end}")));
    }
    let q = (output_dx * omega.upper().sqrt() / slice.dt).ceil().max(1.0) as usize;
    let dxs = output_dx / q as f64;
    let total = outputs * q;
    // Each substep consumes one node at each end; the last output needs one more.
    if 2 * (total + 1) + 1 > len {
        return Err(Error::DomainOfDependence(format!(
            "span {span} needs {} time samples, slice has {len}",
            2 * (total + 1) + 1
        )));
    }
    let dt = slice.dt;
    let r = (dxs / dt).powi(2);
    let xs = |s: usize| slice.x0 + sign * s as f64 * dxs;
    let mass = |s: usize| 0.5 * (omega.eval(xs(s) - 0.5 * dxs) + omega.eval(xs(s) + 0.5 * dxs));

    // Level s is valid on [s, len - 1 - s] (level 1 via the Taylor start).
    let mut prev = slice.u.clone();
    let mut cur = vec![0.0; len];
    {
        let m0 = mass(0);
        for i in 1..len - 1 {
            let utt = slice.u[i + 1] - 2.0 * slice.u[i] + slice.u[i - 1];
            cur[i] = slice.u[i] + sign * dxs * slice.ux[i] + 0.5 * r * m0 * utt;
        }
    }
    let mut next = vec![0.0; len];

    let mut out = SidewiseResult {
        dt,
        dx: dxs,
        x: Vec::with_capacity(outputs + 1),
        windows: Vec::with_capacity(outputs + 1),
        u: Vec::with_capacity(outputs + 1),
        ux: Vec::with_capacity(outputs + 1),
        f_energy: vec![Vec::with_capacity(outputs + 1); k_max + 1],
    };
    let record = |s: usize, u: &[f64], ux: &[f64], lo: usize, hi: usize, out: &mut SidewiseResult| {
        let x = xs(s);
        let w = omega.eval(x);
        out.x.push(x);
        out.windows.push((lo, hi));
        let uw = u[lo..=hi].to_vec();
        let uxw = ux[lo..=hi].to_vec();
        for k in 0..=k_max {
            let ut = time_derivative(&uw, dt, k + 1);
            let uxk = time_derivative(&uxw, dt, k);
            let a: Vec<f64> = ut.iter().map(|v| w * v * v).collect();
            let b: Vec<f64> = uxk.iter().map(|v| v * v).collect();
            out.f_energy[k].push(0.5 * (trapezoid(&a, dt) + trapezoid(&b, dt)));
        }
        out.u.push(uw);
        out.ux.push(uxw);
    };
    let ux0: Vec<f64> = slice.ux.clone();
    record(0, &slice.u, &ux0, 0, len - 1, &mut out);

    for s in 1..=total {
        let ms = mass(s);
        for i in (s + 1)..(len - 1 - s) {
            let utt = cur[i + 1] - 2.0 * cur[i] + cur[i - 1];
            next[i] = 2.0 * cur[i] - prev[i] + r * ms * utt;
        }
        if s % q == 0 {
            let (lo, hi) = (s + 1, len - 2 - s);
            let mut ux = vec![0.0; len];
            for i in lo..=hi {
                ux[i] = sign * (next[i] - prev[i]) / (2.0 * dxs);
            }
            record(s, &cur, &ux, lo, hi, &mut out);
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// D_omega and trace norms

/// `D_omega^m f` with `D_omega f = f'' / omega`, by `m` applications of the
/// three-point second difference on the `n + 1` nodes of `[0, 1]`. End values
/// are extrapolated from the interior by the cubic through four nodes.
pub fn apply_d_omega(f: &[f64], omega: &Coefficient, m: usize) -> Result<Vec<f64>> {
    let n = f.len().saturating_sub(1);
    if m == 0 {
        return Ok(f.to_vec());
    }
    if n < 4 {
        return Err(invalid("need at least 4 cells"));
    }
    let dx = omega.length() / n as f64;
    let w: Vec<f64> = (0..=n).map(|i| omega.eval(i as f64 * dx)).collect();
    let mut cur = f.to_vec();
    for _ in 0..m {
        let mut next = vec![0.0; n + 1];
        for i in 1..n {
            next[i] = (cur[i + 1] - 2.0 * cur[i] + cur[i - 1]) / (dx * dx * w[i]);
        }
        next[0] = 4.0 * next[1] - 6.0 * next[2] + 4.0 * next[3] - next[4];
        next[n] = 4.0 * next[n - 1] - 6.0 * next[n - 2] + 4.0 * next[n - 3] - next[n - 4];
        cur = next;
    }
    // Round-off in f is amplified by at most (4 / (dx^2 omega_*))^m.
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let noise = f64::EPSILON * sup(f) * (4.0 / (dx * dx * omega.lower())).powi(m as i32);
    let signal = sup(&cur);
    if !(noise <= SNR_FLOOR * signal) {
        return Err(Error::NoiseFloor(format!(
            "D_omega^{m} at {n} cells: round-off {noise:.2e} vs signal {signal:.2e}"
        )));
    }
    Ok(cur)
}

/// Cosine (Tukey) taper over [`TAPER_FRACTION`] of the window on each side.
pub fn taper(len: usize) -> Vec<f64> {
    let ramp = ((len.saturating_sub(1)) as f64 * TAPER_FRACTION).max(1.0);
    (0..len)
        .map(|i| {
            let d = (i as f64).min((len - 1 - i) as f64);
            if d >= ramp {
                1.0
            } else {
                0.5 * (1.0 - (std::f64::consts::PI * d / ramp).cos())
            }
        })
        .collect()
}

/// `(sum (1 + xi^2)^beta |hat(w s)(xi)|^2)^{1/2}` with `xi` the angular
/// frequency, `w` the taper and the transform scaled so that `beta = 0`
/// gives the discrete L^2 norm of the tapered signal. Any real `beta`.
pub fn weighted_trace_norm(signal: &[f64], dt: f64, beta: f64) -> f64 {
    let len = signal.len();
    if len == 0 {
        return 0.0;
    }
    let w = taper(len);
    let size = (2 * len).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = (0..size)
        .map(|i| Complex::new(if i < len { signal[i] * w[i] } else { 0.0 }, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(size).process(&mut buf);
    let dxi = 2.0 * std::f64::consts::PI / (size as f64 * dt);
    let mut acc = 0.0;
    for (k, c) in buf.iter().enumerate() {
        let kk = if k <= size / 2 { k as f64 } else { k as f64 - size as f64 };
        let xi = kk * dxi;
        acc += (1.0 + xi * xi).powf(beta) * c.norm_sqr();
    }
    (acc * dt / size as f64).sqrt()
}

/// `H^beta(0, T)` norm of a trace sampled at step `dt`, `beta >= 0`.
pub fn trace_sobolev_norm(signal: &[f64], dt: f64, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(invalid(format!("beta = {beta} must be nonnegative")));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt must be positive"));
    }
    Ok(weighted_trace_norm(signal, dt, beta))
}

/// `H^{-m}(0, T)` norm under the same taper and weight convention.
pub fn dual_trace_norm(signal: &[f64], dt: f64, m: f64) -> f64 {
    weighted_trace_norm(signal, dt, -m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::Family;
    use std::f64::consts::PI;

    fn constant(v: f64) -> Coefficient {
        Coefficient::new(Family::Constant { value: v }).unwrap()
    }

    fn smooth() -> Coefficient {
        Coefficient::new(Family::Trigonometric { mean: 1.5, cos: vec![0.3, 0.1], sin: vec![0.05, 0.0] }).unwrap()
    }

    fn bump(c: f64, w: f64) -> impl Fn(f64) -> f64 {
        move |x| {
            let s = (x - c) / w;
            if s.abs() < 1.0 {
                (-1.0 / (1.0 - s * s)).exp() * std::f64::consts::E
            } else {
                0.0
            }
        }
    }

    #[test]
    fn single_mode_half_period() {
        let n = 512;
        let u0 = sample_fn(n, |x| (PI * x).sin());
        let tr = evolve(&constant(1.0), &u0, &vec![0.0; n + 1], 1.0, &WaveOptions::default()).unwrap();
        let err = tr.u_final.iter().zip(&u0).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "err {err}");
        for (l, v) in tr.trace_left.iter().enumerate() {
            assert!((v - PI * (PI * tr.time(l)).cos()).abs() < 1e-4);
        }
        assert!(tr.u_final[0] == 0.0 && tr.u_final[n] == 0.0);
    }

    #[test]
    fn energies_are_conserved_on_smooth_data() {
        let n = 512;
        let u0 = sample_fn(n, |x| bump(0.4, 0.3)(x) + 0.2 * (3.0 * PI * x).sin());
        let u1 = sample_fn(n, |x| (2.0 * PI * x).sin());
        let tr = evolve(&smooth(), &u0, &u1, 4.0, &WaveOptions::default()).unwrap();
        for k in 0..=2 {
            let d = tr.energy_drift(k).unwrap();
            assert!(d < 1e-10, "E_{k} drift {d}");
        }
    }

    #[test]
    fn scheme_is_time_reversible() {
        let n = 256;
        let omega = smooth();
        let s = Scheme::new(&omega, n, 2.0, CFL).unwrap();
        let u0 = sample_fn(n, bump(0.5, 0.2));
        let mut a = u0.clone();
        let mut b = vec![0.0; n + 1];
        s.first_step(&a, &vec![0.0; n + 1], &mut b);
        let mut c = vec![0.0; n + 1];
        for _ in 1..s.steps {
            s.step(&a, &b, &mut c);
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut b, &mut c);
        }
        // Swap the last two levels and march back.
        std::mem::swap(&mut a, &mut b);
        for _ in 1..s.steps {
            s.step(&a, &b, &mut c);
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut b, &mut c);
        }
        let err = b.iter().zip(&u0).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-11, "err {err}");
    }

    #[test]
    fn second_order_convergence() {
        // Exact mode solution for omega = 1, self-refinement for a smooth omega.
        let exact = |n: usize| {
            let u0 = sample_fn(n, |x| (3.0 * PI * x).sin());
            let tr = evolve(&constant(1.0), &u0, &vec![0.0; n + 1], 1.3, &WaveOptions::default()).unwrap();
            let t = tr.t_final;
            let e: Vec<f64> = (0..=n)
                .map(|i| tr.u_final[i] - (3.0 * PI * i as f64 / n as f64).sin() * (3.0 * PI * t).cos())
                .map(|d| d * d)
                .collect();
            trapezoid(&e, 1.0 / n as f64).sqrt()
        };
        let order = (exact(256) / exact(512)).log2();
        assert!(order > 1.9, "order {order}");

        let omega = smooth();
        let run = |n: usize| {
            let u0 = sample_fn(n, bump(0.5, 0.3));
            let opts = WaveOptions { cfl: 0.5, ..Default::default() };
            evolve(&omega, &u0, &vec![0.0; n + 1], 1.0, &opts).unwrap()
        };
        let (a, b, c) = (run(256), run(512), run(1024));
        let diff = |x: &WaveTrajectory, y: &WaveTrajectory| {
            let e: Vec<f64> = (0..=x.n).map(|i| (x.u_final[i] - y.u_final[2 * i]).powi(2)).collect();
            trapezoid(&e, x.dx).sqrt()
        };
        let order = (diff(&a, &b) / diff(&b, &c)).log2();
        assert!(order > 1.9, "order {order}");
    }

    #[test]
    fn finite_propagation_speed() {
        let n = 1024;
        let omega = smooth();
        let (a, b) = (0.45, 0.55);
        let u0 = sample_fn(n, bump(0.5, 0.05));
        let t = 0.2;
        let tr = evolve(&omega, &u0, &vec![0.0; n + 1], t, &WaveOptions::default()).unwrap();
        let reach = t / omega.lower().sqrt();
        let (lo, hi) = (a - reach, b + reach);
        let mut outside = 0.0;
        let mut total = 0.0;
        for i in 0..n {
            let x = (i as f64 + 0.5) / n as f64;
            let g = ((tr.u_final[i + 1] - tr.u_final[i]) * n as f64).powi(2);
            let v = 0.5 * (tr.ut_final[i] + tr.ut_final[i + 1]);
            let e = g + tr.mass[i] * v * v;
            total += e;
            if x < lo || x > hi {
                outside += e;
            }
        }
        assert!(outside / total < 1e-10, "tail {}", outside / total);
    }

    #[test]
    fn rejects_bad_input() {
        let n = 64;
        let u0 = sample_fn(n, |x| x);
        assert!(evolve(&constant(1.0), &u0, &vec![0.0; n + 1], 1.0, &Default::default()).is_err());
        let u0 = vec![0.0; 65 + 1];
        assert!(evolve(&constant(1.0), &u0, &vec![0.0; 66], 1.0, &Default::default()).is_err());
        let u0 = vec![0.0; n + 1];
        let e = evolve(&constant(1.0), &u0, &u0, 1.0, &WaveOptions { cfl: 1.2, ..Default::default() });
        assert!(matches!(e, Err(Error::Cfl(_))));
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let omega = constant(2.0);
        let (dt, steps) = time_grid(&omega, 64, 1.0, CFL).unwrap();
        let f = BoundaryForcing::from_fn(|_| 0.0, |_| 0.0, dt, steps, 10);
        let tr = evolve_inhomogeneous(&omega, &f, 64, 1.0, &Default::default()).unwrap();
        assert!(tr.u_final.iter().all(|v| *v == 0.0));
        assert!(tr.forcing.unwrap().interior_ratio.is_none());
        assert_eq!(tr.compatible, Some(true));
    }

    #[test]
    fn forced_ratios_stable_under_refinement() {
        let omega = constant(1.0);
        let h = 12.0;
        let ratios = |n: usize| {
            let (dt, steps) = time_grid(&omega, n, 2.0, CFL).unwrap();
            let f = BoundaryForcing::from_fn(move |t| (h * t).sin() * t.sin().powi(2), |_| 0.0, dt, steps, 100);
            let tr = evolve_inhomogeneous(&omega, &f, n, 2.0, &Default::default()).unwrap();
            assert_eq!(tr.compatible, Some(true));
            let r = tr.forcing.unwrap();
            (r.interior_ratio.unwrap(), r.flux_ratio.unwrap())
        };
        let (a1, b1) = ratios(512);
        let (a2, b2) = ratios(1024);
        assert!(a1.is_finite() && b1.is_finite() && a1 > 0.0 && b1 > 0.0);
        assert!((a1 / a2 - 1.0).abs() < 0.02 && (b1 / b2 - 1.0).abs() < 0.02, "{a1} {a2} {b1} {b2}");
    }

    #[test]
    fn incompatible_forcing_is_flagged() {
        let omega = constant(1.0);
        let (dt, steps) = time_grid(&omega, 64, 0.5, CFL).unwrap();
        let f = BoundaryForcing::from_fn(|t| (3.0 * t).cos(), |_| 0.0, dt, steps, 100);
        let tr = evolve_inhomogeneous(&omega, &f, 64, 0.5, &Default::default()).unwrap();
        assert_eq!(tr.compatible, Some(false));
        assert_eq!(tr.u_final[0], f.left[steps]);
    }

    #[test]
    fn forced_superposition_matches_standing_wave() {
        // v = sin(k x + 1) cos(k t) solves the PDE for omega = 1 but not the
        // boundary conditions; v + z with z forced by -v must vanish there.
        let omega = constant(1.0);
        let n = 512;
        let k = 5.0;
        let t_final = 1.5;
        let (dt, steps) = time_grid(&omega, n, t_final, CFL).unwrap();
        let v = move |t: f64, x: f64| (k * x + 1.0).sin() * (k * t).cos();
        let f = BoundaryForcing::from_fn(move |t| -v(t, 0.0), move |t| -v(t, 1.0), dt, steps, 100);
        let opts = WaveOptions { snapshot_stride: Some(1), ..Default::default() };
        let tr = evolve_inhomogeneous(&omega, &f, n, t_final, &opts).unwrap();
        let field = |l: usize| -> Vec<f64> {
            let t = l as f64 * dt;
            (0..=n).map(|i| v(t, i as f64 / n as f64) + tr.snapshots[l].u[i]).collect()
        };
        let last = field(steps);
        assert!(last[0].abs() < 1e-14 && last[n].abs() < 1e-14);
        // The discrete z satisfies the scheme exactly, so the residual of
        // v + z is the truncation error of v alone.
        let (a, b, c) = (field(steps - 2), field(steps - 1), last);
        let residual = (1..n)
            .map(|i| {
                let utt = (c[i] - 2.0 * b[i] + a[i]) / (dt * dt);
                let lap = (b[i + 1] - 2.0 * b[i] + b[i - 1]) * (n * n) as f64;
                (utt - lap).abs()
            })
            .fold(0.0, f64::max);
        assert!(residual < 1e-3 * k * k, "residual {residual}");
    }

    #[test]
    fn sidewise_agrees_with_forward_run() {
        // Sidewise from the x = 0 slice of the n-run versus the n-run itself,
        // measured against the n-run's own refinement error.
        let omega = smooth();
        let run = |n: usize| {
            let u0 = sample_fn(n, bump(0.6, 0.2));
            let opts = WaveOptions { snapshot_stride: Some(1), k_max: 0, ..Default::default() };
            evolve(&omega, &u0, &vec![0.0; n + 1], 4.0, &opts).unwrap()
        };
        let (a, b) = (run(256), run(512));
        assert_eq!(b.steps, 2 * a.steps);
        let sw = sidewise_evolve(&omega, &Slice::left_boundary(&a), Direction::Right, 0.5, a.dx, 1).unwrap();
        let (mut e_sw, mut e_fw) = (0.0f64, 0.0f64);
        for (xi, x) in sw.x.iter().enumerate() {
            let i = (x * a.n as f64).round() as usize;
            let (lo, hi) = sw.windows[xi];
            assert!(lo as f64 * a.dt >= x * omega.upper().sqrt() - 1e-12);
            assert!(hi <= a.steps - lo);
            for (q, v) in sw.u[xi].iter().enumerate() {
                let l = lo + q;
                let fa = a.snapshots[l].u[i];
                e_sw = e_sw.max((v - fa).abs());
                e_fw = e_fw.max((fa - b.snapshots[2 * l].u[2 * i]).abs());
            }
        }
        assert!(e_sw < 2.0 * e_fw, "sidewise {e_sw} forward {e_fw}");
        // F_0(0) is half the boundary integral.
        let sq: Vec<f64> = a.trace_left.iter().map(|v| v * v).collect();
        let bnd = trapezoid(&sq, a.dt);
        assert!((sw.f_energy[0][0] - 0.5 * bnd).abs() < 1e-12 * bnd);
    }

    #[test]
    fn sidewise_reproduces_dalembert() {
        // omega = 1, u = sin(pi x) sin(pi t) has slice u = 0, u_x = pi sin(pi t).
        let dt = 1.0 / 512.0;
        let len = 1025;
        let slice = Slice {
            x0: 0.0,
            dt,
            u: vec![0.0; len],
            ux: (0..len).map(|l| PI * (PI * l as f64 * dt).sin()).collect(),
        };
        let sw = sidewise_evolve(&constant(1.0), &slice, Direction::Right, 0.5, 1.0 / 64.0, 0).unwrap();
        for (xi, x) in sw.x.iter().enumerate() {
            let (lo, _) = sw.windows[xi];
            for (q, v) in sw.u[xi].iter().enumerate() {
                let t = (lo + q) as f64 * dt;
                assert!((v - (PI * x).sin() * (PI * t).sin()).abs() < 1e-5);
            }
        }
        // Leftward from x = 1 with the mirrored slice gives the same field.
        let mirrored = Slice { x0: 1.0, ux: slice.ux.iter().map(|v| -v).collect(), ..slice.clone() };
        let back = sidewise_evolve(&constant(1.0), &mirrored, Direction::Left, 0.5, 1.0 / 64.0, 0).unwrap();
        let last = sw.u.len() - 1;
        for (p, q) in sw.u[last].iter().zip(&back.u[last]) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn sidewise_span_beyond_dependence_fails() {
        let omega = constant(1.0);
        let slice = Slice { x0: 0.0, dt: 0.01, u: vec![0.0; 50], ux: vec![1.0; 50] };
        let e = sidewise_evolve(&omega, &slice, Direction::Right, 0.5, 0.01, 0);
        assert!(matches!(e, Err(Error::DomainOfDependence(_))));
    }

    #[test]
    fn d_omega_examples() {
        let n = 256;
        let f = sample_fn(n, |x| (PI * x).sin());
        assert_eq!(apply_d_omega(&f, &constant(1.0), 0).unwrap(), f);
        let d = apply_d_omega(&f, &constant(1.0), 1).unwrap();
        for (i, v) in d.iter().enumerate() {
            assert!((v + PI * PI * f[i]).abs() < 1e-3);
        }
        let g = sample_fn(n, |x| (2.0 * PI * x).sin());
        let d = apply_d_omega(&g, &constant(4.0), 2).unwrap();
        let p4 = PI.powi(4);
        for (i, v) in d.iter().enumerate() {
            assert!((v - p4 * g[i]).abs() < 1e-3 * p4, "{i} {v}");
        }
        let big = sample_fn(1 << 14, |x| (PI * x).sin());
        assert!(matches!(apply_d_omega(&big, &constant(1.0), 3), Err(Error::NoiseFloor(_))));
    }

    #[test]
    fn trace_norms() {
        let dt = 1e-3;
        let tn = 2.0;
        let len = (tn / dt) as usize + 1;
        let om = 8.0 * PI;
        let s: Vec<f64> = (0..len).map(|l| (om * l as f64 * dt).sin()).collect();
        let h0 = trace_sobolev_norm(&s, dt, 0.0).unwrap();
        // beta = 0 is the discrete L^2 norm of the tapered signal.
        let w = taper(len);
        let direct: f64 = s.iter().zip(&w).map(|(a, b)| (a * b).powi(2)).sum::<f64>() * dt;
        assert!((h0 * h0 / direct - 1.0).abs() < 1e-10);
        assert!((h0 * h0 / (TAPER_ENERGY * tn / 2.0) - 1.0).abs() < 0.02);
        for beta in [0.5, 1.0, 2.0] {
            let hb = trace_sobolev_norm(&s, dt, beta).unwrap();
            let want = (1.0 + om * om).powf(beta / 2.0);
            assert!((hb / h0 / want - 1.0).abs() < 0.05, "beta {beta}: {}", hb / h0 / want);
        }
        let mut last = 0.0;
        for beta in [0.0, 0.1, 0.2, 0.7, 1.5] {
            let v = trace_sobolev_norm(&s, dt, beta).unwrap();
            assert!(v >= last);
            last = v;
        }
        assert!(trace_sobolev_norm(&s, dt, -0.5).is_err());
        assert!(dual_trace_norm(&s, dt, 1.0) < h0);
    }

    #[test]
    fn snapshot_binary_roundtrip() {
        let n = 16;
        let u0 = sample_fn(n, |x| (PI * x).sin());
        let opts = WaveOptions { snapshot_stride: Some(5), ..Default::default() };
        let tr = evolve(&constant(1.0), &u0, &vec![0.0; n + 1], 0.5, &opts).unwrap();
        let mut buf = Vec::new();
        tr.write_snapshots_binary(&mut buf).unwrap();
        let (nn, t, snaps) = read_snapshots_binary(&mut buf.as_slice()).unwrap();
        assert_eq!((nn, t), (n, tr.t_final));
        assert_eq!(snaps, tr.snapshots);
        assert!(tr.traces_csv().starts_with("t,trace_left,trace_right\n"));
        assert!(tr.energies_csv().starts_with("t,E_0,E_1,E_2\n"));
    }
}
