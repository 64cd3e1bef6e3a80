//! Quasi-eigenfunctions `phi'' + h^2 omega phi = 0`, `phi(m) = 1`, `phi'(m) = 0`.
//!
//! The solve marches outward from `m` through a partition of `[0, 1]`:
//! closed form `w(h (x - m))` on the own interval of a counterexample
//! density, exact rotation where `omega` is constant, and Dormand-Prince
//! everywhere else.  The ODE path is always run across the own interval
//! too, as a cross-check of the closed form.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::density::DensityPiece;
use crate::coeff::{Coefficient, CounterexampleParams, Family, ScaleRecord};
use crate::error::{invalid, Error, Result};
use crate::ode::{Dopri5, StepStats};
use crate::quadrature::{integrate, QuadOptions};
use crate::tolerances;

const FOUR_PI2: f64 = 4.0 * PI * PI;
const RENORM_HIGH: f64 = 1e100;
const RENORM_LOW: f64 = 1e-100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasimodeParams {
    pub j: u32,
    pub h: f64,
    pub m: f64,
    pub r: f64,
}

impl QuasimodeParams {
    pub fn from_record(rec: &ScaleRecord) -> Result<Self> {
        let h = rec.h.ok_or_else(|| {
            Error::ScaleOutOfReach(format!("h_{} = exp({:.3e}) does not fit in a double", rec.j, rec.log_h))
        })?;
        Ok(QuasimodeParams { j: rec.j, h, m: rec.m, r: rec.r })
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.m - 0.5 * self.r, self.m + 0.5 * self.r);
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(invalid(format!("h = {} must be positive", self.h)));
        }
        if !(self.r > 0.0 && lo >= 0.0 && hi <= 1.0) {
            return Err(invalid(format!("interval [{lo}, {hi}] must lie in [0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasimodeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Output grid: `grid + 1` uniform nodes on `[0, 1]`.
    pub grid: usize,
    pub max_steps: usize,
    /// Re-run at a looser tolerance to estimate the global error.
    pub error_estimate: bool,
}

impl Default for QuasimodeOptions {
    fn default() -> Self {
        QuasimodeOptions {
            rtol: tolerances::ODE_RTOL,
            atol: tolerances::ODE_ATOL,
            grid: 4096,
            max_steps: 50_000_000,
            error_estimate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rtol: f64,
    /// Amplitude-scale error estimate at the boundary points.
    pub global_error: f64,
    /// `sup |phi_ode - w(h (x - m))|` on the own interval, if the closed form exists.
    pub closed_form_error: Option<f64>,
    /// `max(|phi - 1|, |phi'| / h)` after integrating back to `m`.
    pub reversibility_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasimodeResult {
    pub params: QuasimodeParams,
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    /// `int_{I_j} phi^2`.
    pub interior_mass: f64,
    /// `|phi|^2 + |phi'|^2` at `m - r/2` and `m + r/2`.
    pub extreme_energy: [f64; 2],
    pub log_extreme_energy: [f64; 2],
    /// `|phi|^2 + |phi'|^2` at `x = 0` and `x = 1`.
    pub boundary_energy: [f64; 2],
    pub log_boundary_energy: [f64; 2],
    /// `4 pi^2 h^2 phi^2 + phi'^2` at `0`, `1/2` and `1`.
    pub log_e_phi: [f64; 3],
    pub stats: IntegratorStats,
}

impl QuasimodeResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,phi,dphi\n");
        for i in 0..self.x.len() {
            s.push_str(&format!("{},{},{}\n", self.x[i], self.phi[i], self.dphi[i]));
        }
        s
    }

    /// `E_phi = 4 pi^2 h^2 phi^2 + phi'^2` at node `i`.
    pub fn e_phi(&self, i: usize) -> f64 {
        let h = self.params.h;
        FOUR_PI2 * h * h * self.phi[i] * self.phi[i] + self.dphi[i] * self.dphi[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Closed,
    Constant(f64),
    /// Step ceiling.
    Ode(f64),
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    kind: Kind,
    inside: bool,
}

/// Marching state, with `phi` and `phi'` scaled by `exp(-log_scale)`
/// and `mass` by `exp(-2 log_scale)`.
#[derive(Debug, Clone, Copy)]
struct State {
    x: f64,
    phi: f64,
    dphi: f64,
    mass: f64,
    log_scale: f64,
}

impl State {
    fn log_energy(&self) -> f64 {
        (self.phi * self.phi + self.dphi * self.dphi).ln() + 2.0 * self.log_scale
    }

    fn log_e_phi(&self, h: f64) -> f64 {
        (FOUR_PI2 * h * h * self.phi * self.phi + self.dphi * self.dphi).ln() + 2.0 * self.log_scale
    }

    fn values(&self) -> (f64, f64) {
        let s = self.log_scale.exp();
        (self.phi * s, self.dphi * s)
    }

    fn renormalize(&mut self, k: f64) {
        let amp = self.phi.hypot(self.dphi / k);
        if amp > RENORM_HIGH || (amp < RENORM_LOW && amp > 0.0) {
            let l = amp.ln();
            let s = (-l).exp();
            self.phi *= s;
            self.dphi *= s;
            self.mass *= s * s;
            self.log_scale += l;
        }
    }
}

struct Problem<'a> {
    omega: &'a Coefficient,
    params: QuasimodeParams,
    own: Option<&'a DensityPiece>,
    segments: Vec<Segment>,
    opts: QuasimodeOptions,
}

fn own_piece<'a>(omega: &'a Coefficient, p: &QuasimodeParams) -> Option<&'a DensityPiece> {
    let d = omega.density()?;
    d.pieces.iter().find(|q| q.j == p.j && q.h == p.h && q.m == p.m && q.r == p.r)
}

fn build_segments(omega: &Coefficient, p: &QuasimodeParams, closed: bool) -> Vec<Segment> {
    let base_ceiling = 1.0 / (16.0 * p.h * (omega.upper().sqrt() / (2.0 * PI)).max(1.0));
    let mut raw: Vec<(f64, f64, Kind)> = Vec::new();
    match omega.family() {
        Family::Constant { value } => raw.push((0.0, 1.0, Kind::Constant(*value))),
        Family::CounterexamplePsi { density } | Family::CounterexampleLambda { density, .. } => {
            let mut pieces: Vec<&DensityPiece> = density.pieces.iter().collect();
            pieces.sort_by(|a, b| a.m.total_cmp(&b.m));
            let mut x = 0.0;
            for q in pieces {
                let (lo, hi) = q.interval();
                if lo > x {
                    raw.push((x, lo, Kind::Constant(FOUR_PI2)));
                }
                let own = q.j == p.j && q.h == p.h && q.m == p.m && q.r == p.r;
                let kind = if own && closed {
                    Kind::Closed
                } else {
                    Kind::Ode(base_ceiling.min(1.0 / (16.0 * q.h)))
                };
                raw.push((lo, hi, kind));
                x = hi;
            }
            if x < 1.0 {
                raw.push((x, 1.0, Kind::Constant(FOUR_PI2)));
            }
        }
        _ => raw.push((0.0, 1.0, Kind::Ode(base_ceiling))),
    }
    // Split at the ends of the own interval so that mass accumulates exactly on it.
    let (a, b) = (p.m - 0.5 * p.r, p.m + 0.5 * p.r);
    let mut out = Vec::new();
    for (lo, hi, kind) in raw {
        let mut cuts = vec![lo];
        for c in [a, b, p.m] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            out.push(Segment { lo: w[0], hi: w[1], kind, inside: mid > a && mid < b });
        }
    }
    out
}

impl<'a> Problem<'a> {
    fn new(omega: &'a Coefficient, params: QuasimodeParams, opts: QuasimodeOptions, closed: bool) -> Self {
        let own = own_piece(omega, &params);
        let segments = build_segments(omega, &params, closed && own.is_some());
        Problem { omega, params, own, segments, opts }
    }

    fn segment(&self, a: f64, b: f64) -> &Segment {
        let mid = 0.5 * (a + b);
        self.segments
            .iter()
            .find(|s| mid >= s.lo && mid <= s.hi)
            .unwrap_or_else(|| self.segments.last().expect("non-empty partition"))
    }

    fn closed_form(&self, x: f64) -> (f64, f64) {
        let q = self.own.expect("closed form needs the own piece");
        let s = q.h * (x - q.m);
        (q.pair.w(s), q.h * q.pair.w_prime(s))
    }

    /// Advances `st` to `t` inside a single segment.
    fn advance(&self, st: &mut State, t: f64, hstep: &mut f64, stats: &mut StepStats) -> Result<()> {
        let seg = *self.segment(st.x, t);
        let h = self.params.h;
        match seg.kind {
            Kind::Closed => {
                let (phi, dphi) = self.closed_form(t);
                st.phi = phi;
                st.dphi = dphi;
                st.log_scale = 0.0;
            }
            Kind::Constant(c) => {
                let k = h * c.sqrt();
                let d = t - st.x;
                let (s, co) = (k * d).sin_cos();
                let (a, b) = (st.phi, st.dphi / k);
                if seg.inside {
                    let (s2, c2) = (2.0 * k * d).sin_cos();
                    st.mass += 0.5 * (a * a + b * b) * d + (a * a - b * b) * s2 / (4.0 * k) + a * b * (1.0 - c2) / (2.0 * k);
                }
                st.phi = a * co + b * s;
                st.dphi = k * (b * co - a * s);
            }
            Kind::Ode(ceiling) => {
                // The configured tolerance is a target for the global error; steps run ten times tighter.
                let ode = Dopri5 {
                    rtol: 0.1 * self.opts.rtol,
                    atol: 0.1 * self.opts.atol,
                    h_max: ceiling,
                    max_steps: self.opts.max_steps,
                };
                let h2 = h * h;
                let omega = self.omega;
                let inside = if seg.inside { 1.0 } else { 0.0 };
                let k = 2.0 * PI * h;
                let amp = st.phi.hypot(st.dphi / k).max(1e-300);
                let mut f = |x: f64, y: &[f64; 3]| [y[1], -h2 * omega.eval(x) * y[0], inside * y[0] * y[0]];
                let scale = [amp, amp * k, amp * amp * seg.hi.max(1e-3)];
                let (y, s) = ode.solve(&mut f, st.x, [st.phi, st.dphi, st.mass], t, hstep, &scale)?;
                stats.merge(s);
                st.phi = y[0];
                st.dphi = y[1];
                st.mass = y[2];
            }
        }
        st.x = t;
        st.renormalize(2.0 * PI * h);
        Ok(())
    }

    /// Marches from `start` through `targets` (ordered in the direction of travel),
    /// stopping additionally at every segment boundary.
    fn march(&self, start: State, targets: &[f64]) -> Result<(Vec<State>, StepStats)> {
        let mut stats = StepStats::default();
        let mut st = start;
        let mut hstep = 1.0 / (64.0 * self.params.h);
        let mut out = Vec::with_capacity(targets.len());
        for &t in targets {
            let dir = t - st.x;
            let mut stops: Vec<f64> = self
                .segments
                .iter()
                .flat_map(|s| [s.lo, s.hi])
                .filter(|&b| (b - st.x) * dir > 0.0 && (t - b) * dir > 0.0)
                .collect();
            stops.sort_by(|a, b| if dir > 0.0 { a.total_cmp(b) } else { b.total_cmp(a) });
            stops.dedup();
            stops.push(t);
            for s in stops {
                if s != st.x {
                    self.advance(&mut st, s, &mut hstep, &mut stats)?;
                }
            }
            out.push(st);
        }
        Ok((out, stats))
    }
}

struct Sweep {
    left: Vec<State>,
    right: Vec<State>,
    stats: StepStats,
}

fn outward(problem: &Problem, left_targets: &[f64], right_targets: &[f64]) -> Result<Sweep> {
    let m = problem.params.m;
    let start = State { x: m, phi: 1.0, dphi: 0.0, mass: 0.0, log_scale: 0.0 };
    let (left, s1) = problem.march(start, left_targets)?;
    let (right, mut s2) = problem.march(start, right_targets)?;
    s2.merge(s1);
    Ok(Sweep { left, right, stats: s2 })
}

fn closed_mass(q: &DensityPiece) -> Result<f64> {
    let half = 0.5 * q.n as f64;
    let mut bps: Vec<f64> = Vec::new();
    let cut = q.pair.cutoff().breakpoints();
    for k in 0..q.n / 2 {
        bps.push(k as f64);
        bps.extend(cut.iter().map(|c| k as f64 + c));
    }
    let opts = QuadOptions { rel: 1e-12, abs: 1e-16, ..QuadOptions::default() };
    let v = integrate(&|s: f64| q.pair.w(s).powi(2), 0.0, half, &bps, &opts)?.value;
    Ok(2.0 * v / q.h)
}

/// Solves the quasimode ODE for one level.
pub fn solve_quasimode(omega: &Coefficient, params: QuasimodeParams, opts: &QuasimodeOptions) -> Result<QuasimodeResult> {
    params.validate()?;
    if omega.length() != 1.0 {
        return Err(invalid("quasimodes are defined on [0, 1]"));
    }
    if opts.grid < 2 || !(opts.rtol > 0.0) {
        return Err(invalid("grid must have at least 2 cells and rtol must be positive"));
    }
    let (m, r, h) = (params.m, params.r, params.h);
    let (a, b) = (m - 0.5 * r, m + 0.5 * r);
    let n = opts.grid;
    let x: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();

    // Targets: grid nodes plus the interval ends, 1/2 and the boundary.
    let mut left_t: Vec<f64> = x.iter().copied().filter(|&v| v < m).collect();
    left_t.extend([a, 0.0, 0.5].iter().filter(|&&v| v < m));
    left_t.sort_by(|p, q| q.total_cmp(p));
    left_t.dedup();
    let mut right_t: Vec<f64> = x.iter().copied().filter(|&v| v > m).collect();
    right_t.extend([b, 1.0, 0.5].iter().filter(|&&v| v > m));
    right_t.sort_by(f64::total_cmp);
    right_t.dedup();

    let problem = Problem::new(omega, params, *opts, true);
    let main = outward(&problem, &left_t, &right_t)?;
    let mut stats = main.stats;

    let find = |v: f64| -> State {
        let side = if v < m { &main.left } else { &main.right };
        *side.iter().find(|s| s.x == v).expect("target was marched")
    };
    let at_m = State { x: m, phi: 1.0, dphi: 0.0, mass: 0.0, log_scale: 0.0 };
    let state_at = |v: f64| if v == m { at_m } else { find(v) };

    let mut phi = vec![0.0; n + 1];
    let mut dphi = vec![0.0; n + 1];
    for (i, &xi) in x.iter().enumerate() {
        let (p, d) = state_at(xi).values();
        phi[i] = p;
        dphi[i] = d;
    }

    // Cross-checks along the pure ODE path.
    let ode_problem = Problem::new(omega, params, *opts, false);
    let mut closed_form_error = None;
    let reversibility_error;
    if let Some(q) = problem.own {
        let lt: Vec<f64> = left_t.iter().copied().filter(|&v| v >= a).collect();
        let rt: Vec<f64> = right_t.iter().copied().filter(|&v| v <= b).collect();
        let check = outward(&ode_problem, &lt, &rt)?;
        stats.merge(check.stats);
        let mut err: f64 = 0.0;
        for s in check.left.iter().chain(check.right.iter()) {
            let (p, _) = s.values();
            err = err.max((p - q.pair.w(q.h * (s.x - q.m))).abs());
        }
        closed_form_error = Some(err);
        let end = *check.right.last().expect("right end");
        let (back, s) = ode_problem.march(end, &[m])?;
        stats.merge(s);
        let (p, d) = back[0].values();
        reversibility_error = (p - 1.0).abs().max(d.abs() / h);
    } else {
        let end = find(1.0);
        let (back, s) = problem.march(end, &[m])?;
        stats.merge(s);
        let (p, d) = back[0].values();
        reversibility_error = (p - 1.0).abs().max(d.abs() / h);
    }

    let (ea, eb) = (state_at(a), state_at(b));
    let (e0, e1) = (state_at(0.0), state_at(1.0));
    let interior_mass = match problem.own {
        Some(q) => closed_mass(q)?,
        None => {
            let l = main.left.iter().find(|s| s.x == a).map_or(0.0, |s| s.mass * (2.0 * s.log_scale).exp());
            let rr = main.right.iter().find(|s| s.x == b).map_or(0.0, |s| s.mass * (2.0 * s.log_scale).exp());
            l.abs() + rr
        }
    };

    let log_boundary_energy = [e0.log_energy(), e1.log_energy()];
    let mut global_error = 0.0;
    if opts.error_estimate {
        let loose = QuasimodeOptions { rtol: opts.rtol * 10.0, atol: opts.atol * 10.0, ..*opts };
        let p2 = Problem::new(omega, params, loose, true);
        let alt = outward(&p2, &[0.0], &[1.0])?;
        let k = 2.0 * PI * h;
        for (s, t) in [(e0, alt.left[0]), (e1, alt.right[0])] {
            let (p, d) = s.values();
            let (q, e) = t.values();
            global_error = f64::max(global_error, (p - q).abs() + (d - e).abs() / k);
        }
        for (side, le) in ["x = 0", "x = 1"].iter().zip(log_boundary_energy) {
            let amp_floor = 1e-15 * (stats.accepted as f64).sqrt().max(1.0);
            let resolved = 0.5 * le + (2.0 * PI * h).ln().max(0.0);
            if global_error.max(amp_floor).ln() > resolved - 10f64.ln() {
                return Err(Error::ScaleOutOfReach(format!(
                    "j = {}: boundary amplitude exp({:.2}) at {side} is below the estimated global error {:.2e}",
                    params.j,
                    0.5 * le,
                    global_error
                )));
            }
        }
    }

    Ok(QuasimodeResult {
        params,
        x,
        phi,
        dphi,
        interior_mass,
        extreme_energy: [ea.log_energy().exp(), eb.log_energy().exp()],
        log_extreme_energy: [ea.log_energy(), eb.log_energy()],
        boundary_energy: [log_boundary_energy[0].exp(), log_boundary_energy[1].exp()],
        log_boundary_energy,
        log_e_phi: [e0.log_e_phi(h), state_at(0.5).log_e_phi(h), e1.log_e_phi(h)],
        stats: IntegratorStats {
            accepted: stats.accepted,
            rejected: stats.rejected,
            rtol: opts.rtol,
            global_error,
            closed_form_error,
            reversibility_error,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallRatio {
    pub x1: f64,
    pub x2: f64,
    /// `E(x2) / [E(x1) exp(h |int_{x1}^{x2} |4 pi^2 - omega||)]`.
    pub e_ratio: f64,
    pub e_exponent: f64,
    /// `Ẽ(x2) / [Ẽ(x1) exp(|int |omega'| / omega|)]`, declined across singular points.
    pub e_tilde_ratio: Option<f64>,
    pub e_tilde_exponent: Option<f64>,
}

fn quad(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, omega: &Coefficient) -> Result<f64> {
    if lo == hi {
        return Ok(0.0);
    }
    let bps: Vec<f64> = omega.breakpoints().into_iter().filter(|&p| p > lo && p < hi).collect();
    let opts = QuadOptions { rel: 1e-10, abs: 1e-14, max_intervals: 1 << 20, ..QuadOptions::default() };
    Ok(integrate(f, lo, hi, &bps, &opts)?.value)
}

/// Checks both Gronwall-type energy bounds between the node pairs `pairs`.
///
/// `Ẽ = h^2 omega phi^2 + phi'^2` is the weighted energy whose logarithmic
/// derivative is `omega' / omega` times a factor in `[0, 1]`.
pub fn energy_gronwall_check(
    res: &QuasimodeResult,
    omega: &Coefficient,
    pairs: &[(usize, usize)],
) -> Result<Vec<GronwallRatio>> {
    let h = res.params.h;
    let singular = omega.singular_points();
    let constant = matches!(omega.family(), Family::Constant { .. });
    let dlog = |x: f64| {
        // Narrower steps drown the quadrature in cancellation noise.
        let d = 1e-5;
        let (lo, hi) = ((x - d).max(0.0), (x + d).min(omega.length()));
        ((omega.eval(hi) - omega.eval(lo)) / (hi - lo)).abs() / omega.eval(x)
    };
    let dev = |x: f64| (FOUR_PI2 - omega.eval(x)).abs();
    pairs
        .iter()
        .map(|&(i1, i2)| {
            if i1 >= res.x.len() || i2 >= res.x.len() {
                return Err(invalid("node index out of range"));
            }
            let (x1, x2) = (res.x[i1], res.x[i2]);
            let (lo, hi) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
            let e_exponent = if constant { h * dev(0.5) * (hi - lo) } else { h * quad(&dev, lo, hi, omega)? };
            let e_ratio = res.e_phi(i2) / res.e_phi(i1) * (-e_exponent).exp();
            let crosses = singular.iter().any(|&s| s >= lo && s <= hi);
            let (e_tilde_ratio, e_tilde_exponent) = if crosses {
                (None, None)
            } else {
                let ex = if constant { 0.0 } else { quad(&dlog, lo, hi, omega)? };
                let et = |i: usize| h * h * omega.eval(res.x[i]) * res.phi[i] * res.phi[i] + res.dphi[i] * res.dphi[i];
                (Some(et(i2) / et(i1) * (-ex).exp()), Some(ex))
            };
            Ok(GronwallRatio { x1, x2, e_ratio, e_exponent, e_tilde_ratio, e_tilde_exponent })
        })
        .collect()
}

/// `count` random node pairs with distinct indices.
pub fn random_pairs(nodes: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let a = rng.gen_range(0..nodes);
            let b = rng.gen_range(0..nodes);
            if a != b {
                break (a, b);
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub j: u32,
    pub h: f64,
    pub eps: f64,
    pub n: u64,
    pub interior_mass: f64,
    pub extreme_energy: f64,
    /// `exp(-c eps h r)` from the measured decay rate.
    pub extreme_prediction: f64,
    pub log_boundary_energy: [f64; 2],
    /// `d log E / d log h` against the previous level, at `x = 0` and `x = 1`.
    pub slope: [Option<f64>; 2],
    /// `ln(4 pi^2 h^2 exp(-(4/5) c eps h r))`, the bound chain for `E_phi(0)`.
    pub log_bound: f64,
    /// `ln E_phi` at `0`, `1/2`, `1`.
    pub log_e_phi: [f64; 3],
    pub closed_form_error: Option<f64>,
    pub reversibility_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// First level that could not be resolved, with the reason.
    pub truncated_at: Option<(u32, String)>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "j,h,eps,interior_mass,extreme_energy,log_boundary_energy_0,log_boundary_energy_1,slope_0,slope_1\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.j,
                r.h,
                r.eps,
                r.interior_mass,
                r.extreme_energy,
                r.log_boundary_energy[0],
                r.log_boundary_energy[1],
                opt(r.slope[0]),
                opt(r.slope[1])
            ));
        }
        s
    }

    /// Whether `|slope|` at `x = 0` is strictly increasing over the rows that have one.
    pub fn slopes_increasing(&self) -> bool {
        let v: Vec<f64> = self.rows.iter().filter_map(|r| r.slope[0]).map(f64::abs).collect();
        v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0])
    }
}

/// Solves every level of `omega` (a counterexample density built from
/// `params`) in parallel and tabulates the boundary energies.
pub fn boundary_smallness_sweep(
    params: &CounterexampleParams,
    omega: &Coefficient,
    opts: &QuasimodeOptions,
) -> Result<SweepTable> {
    let density = omega.density().ok_or_else(|| invalid("the sweep needs a counterexample density"))?;
    let recs: Vec<&ScaleRecord> = params.records.iter().filter(|r| density.piece(r.j).is_some()).collect();
    let solved: Vec<(u32, Result<QuasimodeResult>)> = recs
        .par_iter()
        .map(|r| (r.j, QuasimodeParams::from_record(r).and_then(|p| solve_quasimode(omega, p, opts))))
        .collect();
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut truncated_at = None;
    for ((j, res), rec) in solved.into_iter().zip(recs) {
        let res = match res {
            Ok(r) => r,
            Err(e @ Error::ScaleOutOfReach(_)) => {
                truncated_at = Some((j, e.to_string()));
                break;
            }
            Err(e) => return Err(e),
        };
        let piece = density.piece(j).expect("filtered");
        let c = piece.pair.constants().decay_rate;
        let ehr = piece.pair.eps() * piece.n as f64;
        let slope = match rows.last() {
            Some(prev) => {
                let dl = res.params.h.ln() - prev.h.ln();
                [
                    Some((res.log_boundary_energy[0] - prev.log_boundary_energy[0]) / dl),
                    Some((res.log_boundary_energy[1] - prev.log_boundary_energy[1]) / dl),
                ]
            }
            None => [None, None],
        };
        rows.push(SweepRow {
            j,
            h: res.params.h,
            eps: rec.eps,
            n: piece.n,
            interior_mass: res.interior_mass,
            extreme_energy: res.extreme_energy[0].max(res.extreme_energy[1]),
            extreme_prediction: (-c * ehr).exp(),
            log_boundary_energy: res.log_boundary_energy,
            slope,
            log_bound: (FOUR_PI2 * res.params.h * res.params.h).ln() - 0.8 * c * ehr,
            log_e_phi: res.log_e_phi,
            closed_form_error: res.stats.closed_form_error,
            reversibility_error: res.stats.reversibility_error,
        });
    }
    Ok(SweepTable { rows, truncated_at })
}
