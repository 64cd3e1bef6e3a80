//! Desk-scale acceptance criteria, shared by the `acceptance` test target and
//! the CLI self-test. Every runner measures, compares against its stated
//! tolerance and reports the numbers; none of them panic on a miss.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeff::{
    build_oscillator_pair, build_pairs, make_counterexample_density, make_sequences, travel_time, weierstrass_in_bounds,
    Coefficient, CounterexampleParams, Cutoff, Family, ModulusDescriptor, Psi, SequenceMode, SequenceSpec,
};
use crate::modulus::{classify_modulus, default_h_grid, dyadic_blocks, modulus_report, Extension, ModulusClass, Sampled};
use crate::observability::{
    estimate_observability_constant, hum_control, initial_norm, run_counterexample_sweep, trace_measure,
    ControlOptions, EnsembleSpec, Measurement, SweepOptions,
};
use crate::quasimodes::{boundary_smallness_sweep, QuasimodeOptions};
use crate::tolerances;
use crate::wavesim::{evolve, sample_fn, sidewise_evolve, Direction, Slice, WaveOptions, WaveTrajectory};
use crate::Result;

pub const CRITERIA: u32 = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub measured: String,
    pub tolerance: String,
    pub seconds: f64,
    pub runtime_limit: f64,
    pub notes: Vec<String>,
}

impl Criterion {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {}: measured {} | required {} | {:.1} s (limit {} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.tolerance,
            self.seconds,
            self.runtime_limit
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceOptions {
    /// Coarser grids and shorter sweeps, for the self-test.
    pub reduced: bool,
    pub seed: u64,
    /// Replace the main tolerance of this criterion by an unattainable one.
    pub corrupt: Option<u32>,
    /// Count the runtime limit towards the verdict.
    pub enforce_runtime: bool,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        AcceptanceOptions { reduced: false, seed: 0, corrupt: None, enforce_runtime: true }
    }
}

impl AcceptanceOptions {
    /// Upper bound `v`, or zero when corrupted.
    fn upper(&self, id: u32, v: f64) -> f64 {
        if self.corrupt == Some(id) {
            0.0
        } else {
            v
        }
    }

    /// Lower bound `v`, or infinity when corrupted.
    fn lower(&self, id: u32, v: f64) -> f64 {
        if self.corrupt == Some(id) {
            f64::INFINITY
        } else {
            v
        }
    }
}

const LIMITS: [f64; 11] = [10.0, 30.0, 5.0, 300.0, 600.0, 300.0, 60.0, 30.0, 120.0, 60.0, 1.0];
const NAMES: [&str; 11] = [
    "constant-coefficient boundary identity",
    "energy conservation",
    "oscillator pair",
    "quasimode concentration",
    "counterexample divergence",
    "Zygmund observability trend",
    "modulus classifier",
    "dyadic characterization",
    "HUM control",
    "sidewise/forward cross-validation",
    "paper-strict sequence conditions",
];

struct Outcome {
    passed: bool,
    measured: String,
    tolerance: String,
    notes: Vec<String>,
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// Runs one criterion by number.
pub fn run_criterion(id: u32, opts: &AcceptanceOptions) -> Criterion {
    let start = Instant::now();
    let outcome = match id {
        1 => boundary_identity(opts),
        2 => energy_conservation(opts),
        3 => oscillator_pair(opts),
        4 => quasimode_concentration(opts),
        5 => counterexample_divergence(opts),
        6 => zygmund_trend(opts),
        7 => classifier(opts),
        8 => dyadic(opts),
        9 => control(opts),
        10 => sidewise(opts),
        11 => strict_sequences(opts),
        _ => Err(crate::error::invalid(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let k = (id as usize).clamp(1, LIMITS.len()) - 1;
    let limit = LIMITS[k];
    let mut c = match outcome {
        Ok(o) => Criterion {
            id,
            name: NAMES[k].into(),
            passed: o.passed,
            measured: o.measured,
            tolerance: o.tolerance,
            seconds,
            runtime_limit: limit,
            notes: o.notes,
        },
        Err(e) => Criterion {
            id,
            name: NAMES[k].into(),
            passed: false,
            measured: format!("error: {e}"),
            tolerance: "-".into(),
            seconds,
            runtime_limit: limit,
            notes: Vec::new(),
        },
    };
    if opts.enforce_runtime && seconds > limit {
        c.passed = false;
        c.notes.push(format!("runtime {seconds:.1} s over the {limit} s limit"));
    }
    c
}

pub fn run_all(opts: &AcceptanceOptions) -> Vec<Criterion> {
    (1..=CRITERIA).map(|id| run_criterion(id, opts)).collect()
}

fn counterexample_psi(j_max: u32) -> Result<(CounterexampleParams, Coefficient)> {
    let spec = SequenceSpec {
        descriptor: ModulusDescriptor::Psi(Psi::Identity),
        n: 1,
        j_min: 2,
        j_max,
        mode: SequenceMode::Scaled { j0: 4 },
        m_const: 25.0,
    };
    let params = make_sequences(&spec)?;
    let pairs = build_pairs(&params, Cutoff::default(), 0.3)?;
    let omega = make_counterexample_density(&params, &pairs)?.remove(0);
    Ok((params, omega))
}

fn smooth_density() -> Coefficient {
    Coefficient::new(Family::Trigonometric { mean: 1.5, cos: vec![0.3, 0.1], sin: vec![0.05, 0.0] })
        .expect("valid trigonometric density")
}

fn bump(c: f64, w: f64) -> impl Fn(f64) -> f64 {
    move |x| {
        let s = (x - c) / w;
        if s.abs() < 1.0 {
            (-1.0 / (1.0 - s * s)).exp()
        } else {
            0.0
        }
    }
}

fn boundary_identity(o: &AcceptanceOptions) -> Result<Outcome> {
    use std::f64::consts::PI;
    let n = if o.reduced { 512 } else { 2048 };
    let omega = Coefficient::new(Family::Constant { value: 1.0 })?;
    let mut data: Vec<(Vec<f64>, Vec<f64>)> =
        (1..=8).map(|k| (sample_fn(n, |x| (k as f64 * PI * x).sin()), vec![0.0; n + 1])).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    for _ in 0..4 {
        let a: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = |c: &Vec<f64>, x: f64| -> f64 { c.iter().enumerate().map(|(k, v)| v * ((k + 1) as f64 * PI * x).sin()).sum() };
        data.push((sample_fn(n, |x| f(&a, x)), sample_fn(n, |x| f(&b, x))));
    }
    let opts = WaveOptions { energies: false, ..Default::default() };
    let (mut id_err, mut q_err) = (0.0f64, 0.0f64);
    for (u0, u1) in &data {
        let tr = evolve(&omega, u0, u1, 2.0, &opts)?;
        let num = initial_norm(u0, u1);
        let den = trace_measure(&tr.trace_left, tr.dt, Measurement::Derivative { m: 0 })?;
        // 4 E(0) = 2 (|u0'|^2 + |u1|^2).
        id_err = id_err.max((den / (2.0 * num) - 1.0).abs());
        q_err = q_err.max((num / den / 0.5 - 1.0).abs());
    }
    let (t1, t2) = (o.upper(1, 1e-3), o.upper(1, 0.02));
    Ok(Outcome {
        passed: id_err < t1 && q_err < t2,
        measured: format!("identity rel err {id_err:.2e}, quotient rel err {q_err:.2e} ({} data, n = {n})", data.len()),
        tolerance: format!("< {t1:.0e}, < {t2}"),
        notes: Vec::new(),
    })
}

fn energy_conservation(o: &AcceptanceOptions) -> Result<Outcome> {
    let n = if o.reduced { 512 } else { 2048 };
    let omega = smooth_density();
    let u0 = sample_fn(n, bump(0.5, 0.3));
    let u1 = sample_fn(n, |x| 0.5 * bump(0.4, 0.2)(x));
    let tr = evolve(&omega, &u0, &u1, 4.0, &WaveOptions { k_max: 2, ..Default::default() })?;
    let drift: Vec<f64> = (0..=2).map(|k| tr.energy_drift(k).unwrap_or(f64::INFINITY)).collect();
    let worst = drift.iter().copied().fold(0.0, f64::max);
    let tol = o.upper(2, 1e-6);
    Ok(Outcome {
        passed: worst < tol,
        measured: format!("drift E0 {:.1e}, E1 {:.1e}, E2 {:.1e} (n = {n})", drift[0], drift[1], drift[2]),
        tolerance: format!("< {tol:.0e}"),
        notes: Vec::new(),
    })
}

fn oscillator_pair(o: &AcceptanceOptions) -> Result<Outcome> {
    let eps = [0.04, 0.02, 0.01];
    let consts = eps
        .iter()
        .map(|&e| build_oscillator_pair(e, Cutoff::default(), tolerances::EPS_BAR).map(|p| *p.constants()))
        .collect::<Result<Vec<_>>>()?;
    let residual = consts.iter().map(|c| c.residual).fold(0.0, f64::max);
    let fit = consts.iter().map(|c| c.decay_fit).fold(0.0, f64::max);
    let m: Vec<f64> = consts.iter().map(|c| c.m).collect();
    let g: Vec<f64> = consts.iter().map(|c| c.gamma).collect();
    let (m_sp, g_sp) = (spread(&m) - 1.0, spread(&g) - 1.0);
    let (tr, tf, tm, tg) = (o.upper(3, tolerances::ODE_RESIDUAL), o.upper(3, tolerances::DECAY_FIT), 0.1, 0.2);
    let positive = g.iter().all(|v| *v > 0.0);
    Ok(Outcome {
        passed: residual < tr && fit < tf && m_sp < tm && g_sp < tg && positive,
        measured: format!(
            "residual {residual:.1e}, decay fit {fit:.1e}, M spread {:.1}%, gamma spread {:.1}% (gamma {:.4}..{:.4})",
            100.0 * m_sp,
            100.0 * g_sp,
            g.iter().copied().fold(f64::INFINITY, f64::min),
            g.iter().copied().fold(0.0, f64::max)
        ),
        tolerance: format!("< {tr:.0e}, < {tf:.0e}, < 10%, < 20%, gamma > 0"),
        notes: consts.iter().zip(eps).map(|(c, e)| format!("eps {e}: M {:.4}, c {:.4}, gamma {:.4}", c.m, c.decay_rate, c.gamma)).collect(),
    })
}

fn quasimode_concentration(o: &AcceptanceOptions) -> Result<Outcome> {
    let (params, omega) = counterexample_psi(if o.reduced { 5 } else { 6 })?;
    let s = boundary_smallness_sweep(&params, &omega, &QuasimodeOptions::default())?;
    let extreme = s.rows.iter().map(|r| (r.extreme_energy / r.extreme_prediction - 1.0).abs()).fold(0.0, f64::max);
    let mass: Vec<f64> = s.rows.iter().map(|r| r.interior_mass * r.h.powi(3)).collect();
    let mass_spread = spread(&mass);
    let slopes: Vec<f64> = s.rows.iter().filter_map(|r| r.slope[0]).collect();
    let (te, tm) = (o.upper(4, 0.1), 3.0);
    let increasing = s.slopes_increasing();
    let mut notes: Vec<String> = s
        .rows
        .iter()
        .map(|r| {
            format!(
                "j {}: h {}, extreme {:.4e} vs {:.4e}, mass*h^3 {:.4e}, ln E(0) {:.2}, ODE vs closed form {:.1e}",
                r.j,
                r.h,
                r.extreme_energy,
                r.extreme_prediction,
                r.interior_mass * r.h.powi(3),
                r.log_boundary_energy[0],
                r.closed_form_error.unwrap_or(f64::NAN)
            )
        })
        .collect();
    if let Some((j, why)) = &s.truncated_at {
        notes.push(format!("truncated at j = {j}: {why}"));
    }
    Ok(Outcome {
        passed: extreme < te && mass_spread < tm && increasing && s.truncated_at.is_none(),
        measured: format!(
            "extreme rel err {extreme:.2e}, mass*h^3 spread {mass_spread:.2}, |slope| {:?}",
            slopes.iter().map(|v| (v.abs() * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
        tolerance: format!("< {te}, < {tm}, strictly increasing"),
        notes,
    })
}

fn counterexample_divergence(o: &AcceptanceOptions) -> Result<Outcome> {
    let (params, omega) = counterexample_psi(if o.reduced { 5 } else { 6 })?;
    let table = run_counterexample_sweep(&params, &[omega], &[0, 1, 2], &SweepOptions::default())?;
    let need = o.lower(5, crate::observability::DIVERGENCE_FACTOR);
    let diverges: Vec<bool> = table
        .growth
        .iter()
        .map(|g| {
            let mut run = 0;
            let mut best = 0;
            for f in g {
                run = if *f >= need { run + 1 } else { 0 };
                best = best.max(run);
            }
            best >= crate::observability::DIVERGENCE_RUN
        })
        .collect();
    let mut notes: Vec<String> = table
        .rows
        .iter()
        .map(|r| {
            format!(
                "j {}: h {}, n {}, Q {:?}, numerator*h {:.3e}, den/(h^(2m+6) smallness) {:?}",
                r.j,
                r.h,
                r.resolution,
                r.quotient.iter().map(|q| format!("{q:.3e}")).collect::<Vec<_>>(),
                r.numerator * r.h,
                r.denominator_bound_ratio.iter().map(|q| format!("{q:.2e}")).collect::<Vec<_>>()
            )
        })
        .collect();
    if let Some((j, why)) = &table.truncated_at {
        notes.push(format!("truncated at j = {j}: {why}"));
    }
    let growth: Vec<String> = table
        .growth
        .iter()
        .zip(&table.orders)
        .map(|(g, m)| format!("m={m}: {:?}", g.iter().map(|v| (v * 10.0).round() / 10.0).collect::<Vec<_>>()))
        .collect();
    Ok(Outcome {
        passed: diverges.iter().all(|d| *d) && table.numerator_h_spread < 3.0,
        measured: format!("growth factors {}; numerator*h spread {:.2}", growth.join(", "), table.numerator_h_spread),
        tolerance: format!(">= {need} on {} consecutive levels for each m, spread < 3", crate::observability::DIVERGENCE_RUN),
        notes,
    })
}

fn zygmund_trend(o: &AcceptanceOptions) -> Result<Outcome> {
    let spec = EnsembleSpec {
        cutoffs: vec![16, 32, 64],
        random_members: if o.reduced { 2 } else { 4 },
        seed: o.seed,
        resolution: if o.reduced { 512 } else { 1024 },
        gramian_resolution: Some(256),
        ..Default::default()
    };
    let run = |omega: &Coefficient| -> Result<(f64, Option<f64>, f64)> {
        let t = 2.0 * travel_time(omega).value + 0.5;
        let rep = estimate_observability_constant(omega, t, &spec)?;
        Ok((rep.growth_between(0, 16, 64).unwrap_or(f64::NAN), rep.gramian_growth_between(0, 16, 64), t))
    };
    let w = weierstrass_in_bounds(1.0, 2.0, 12)?;
    let (gw, gw_gram, tw) = run(&w)?;
    let (_, ce) = counterexample_psi(6)?;
    let (gc, gc_gram, tc) = run(&ce)?;
    let (tz, tce) = (o.upper(6, BOUNDED), 10.0);
    Ok(Outcome {
        passed: gw < tz && gc >= tce,
        measured: format!("Weierstrass growth {gw:.3}, counterexample growth {gc:.3}"),
        tolerance: format!("< {tz}, >= {tce}"),
        notes: vec![
            format!("Weierstrass T = {tw:.3}, Gramian growth {gw_gram:?}"),
            format!("counterexample T = {tc:.3}, Gramian growth {gc_gram:?}"),
        ],
    })
}

const BOUNDED: f64 = crate::observability::BOUNDED_GROWTH;

fn classifier(o: &AcceptanceOptions) -> Result<Outcome> {
    let classify = |f: &Sampled| -> Result<_> {
        let r = modulus_report(f, &default_h_grid(f))?;
        let s = dyadic_blocks(f, 8, Extension::Even)?;
        Ok((classify_modulus(&r, &s), r))
    };
    let n = 4096;
    let w = weierstrass_in_bounds(1.0, 2.0, 16)?;
    let (_, ce) = counterexample_psi(6)?;
    let samples: Vec<(&str, Sampled)> = vec![
        ("constant", Sampled::from_fn(|_| 1.0, n)?),
        ("|x-1/2|", Sampled::from_fn(|x| (x - 0.5).abs(), n)?),
        ("|x-1/2|^(1/2)", Sampled::from_fn(|x| (x - 0.5).abs().sqrt(), n)?),
        ("Weierstrass", Sampled::from_coefficient(&w, n)?),
        ("counterexample-psi", Sampled::from_coefficient(&ce, 1 << 16)?),
    ];
    let mut notes = Vec::new();
    let mut all = true;
    let mut labels = Vec::new();
    let mut weier = (false, false, Vec::new());
    for (name, f) in &samples {
        let (c, rep) = classify(f)?;
        let ok = match *name {
            "constant" | "|x-1/2|" => c.label == ModulusClass::LipschitzBv,
            "|x-1/2|^(1/2)" => matches!(c.label, ModulusClass::Hoelder { alpha } if (alpha - 0.5).abs() < 0.1),
            "Weierstrass" => c.label == ModulusClass::Zygmund,
            _ => c.label == ModulusClass::BelowLogLipschitz,
        };
        if *name == "Weierstrass" {
            let z = c.growth.iter().find(|g| g.0 == "Z_inf").map_or(f64::INFINITY, |g| g.1);
            weier = (c.not_bv, z < 0.5, rep.tv.growth.clone());
        }
        all &= ok;
        labels.push(format!("{name} -> {}", c.label));
        notes.push(format!("{name}: {} growth {:?}", c.label, c.growth));
    }
    let tv_need = o.lower(7, tolerances::TV_GROWTH_PER_LEVEL);
    let tail: Vec<f64> = weier.2.iter().rev().take(tolerances::TV_LEVELS).rev().copied().collect();
    let not_bv = tail.len() == tolerances::TV_LEVELS && tail.iter().all(|g| *g >= tv_need);
    notes.push(format!("Weierstrass TV growth per level {:?}", weier.2.iter().map(|g| (g * 1000.0).round() / 1000.0).collect::<Vec<_>>()));
    Ok(Outcome {
        passed: all && not_bv && weier.1,
        measured: format!(
            "{}; Weierstrass not-BV {not_bv}, Z ratio bounded {}",
            labels.join(", "),
            weier.1
        ),
        tolerance: format!("expected classes; TV growth >= {tv_need}/level over {} levels", tolerances::TV_LEVELS),
        notes,
    })
}

fn dyadic(o: &AcceptanceOptions) -> Result<Outcome> {
    use std::f64::consts::PI;
    let f = Sampled::from_fn(
        |x| (1..=14).map(|n| 0.5f64.powi(n) * (2f64.powi(n + 1) * PI * x).cos()).sum(),
        1 << 13,
    )?;
    let sp = dyadic_blocks(&f, 10, Extension::Periodic)?;
    let vals: Vec<f64> = (3..=10).map(|j| sp.block(j).map_or(f64::NAN, |b| 2f64.powi(j) * b.norm_inf)).collect();
    let (lo, hi) = (0.5, o.upper(8, 2.0).max(0.0));
    let band = vals.iter().all(|v| (lo..=hi).contains(v));
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let coef: Vec<(f64, f64)> = (0..=200).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let g = Sampled::from_fn(
        |x| coef.iter().enumerate().map(|(k, (a, b))| a * (2.0 * PI * k as f64 * x).cos() + b * (2.0 * PI * k as f64 * x).sin()).sum(),
        4096,
    )?;
    let rec = dyadic_blocks(&g, 10, Extension::Periodic)?.reconstruction_error;
    let tr = o.upper(8, tolerances::DYADIC_RECONSTRUCTION);
    Ok(Outcome {
        passed: band && rec < tr,
        measured: format!(
            "2^j |Delta_j f| for j = 3..10: {:?}; reconstruction {rec:.1e}",
            vals.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
        tolerance: format!("in [{lo}, {hi}], < {tr:.0e}"),
        notes: Vec::new(),
    })
}

fn control(o: &AcceptanceOptions) -> Result<Outcome> {
    use std::f64::consts::PI;
    let n = if o.reduced { 128 } else { 256 };
    let omega = Coefficient::new(Family::Constant { value: 1.0 })?;
    let y0 = sample_fn(n, |x| (PI * x).sin());
    let tol = o.upper(9, 1e-6);
    let copts = ControlOptions { resolution: n, tolerance: 1e-6, ..Default::default() };
    let r = hum_control(&omega, &y0, &vec![0.0; n + 1], 2.5, 0.0, &copts)?;
    let spec = EnsembleSpec { cutoffs: vec![8], random_members: 4, seed: o.seed, resolution: 1024, ..Default::default() };
    let c_obs = estimate_observability_constant(&omega, 2.5, &spec)?.estimates[0].c_obs[0];
    let size = y0.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let cost = r.control_l2 / size;
    let dual = cost * c_obs;
    Ok(Outcome {
        passed: r.controlled && r.terminal_relative_energy < tol && r.iterations <= 200 && (0.25..=4.0).contains(&dual),
        measured: format!(
            "terminal rel energy {:.2e} after {} iterations; cost {cost:.4} vs 1/C_obs {:.4} (ratio {dual:.3})",
            r.terminal_relative_energy,
            r.iterations,
            1.0 / c_obs
        ),
        tolerance: format!("< {tol:.0e} within 200 iterations, ratio in [1/4, 4]"),
        notes: vec![
            format!("C_obs {c_obs:.4}, cost / C_obs {:.3}", cost / c_obs),
            format!("cost = |f|^2_L2(0,T) / |y0|^2_L2, n = {n}, dt = {:.3e}", r.dt),
        ],
    })
}

fn sidewise(o: &AcceptanceOptions) -> Result<Outcome> {
    let n = if o.reduced { 128 } else { 256 };
    let densities = vec![
        ("trigonometric", smooth_density()),
        ("constant", Coefficient::new(Family::Constant { value: 1.3 })?),
        (
            "trigonometric-2",
            Coefficient::new(Family::Trigonometric { mean: 2.0, cos: vec![0.0, 0.4], sin: vec![0.2, 0.0] })?,
        ),
    ];
    let mut notes = Vec::new();
    let mut worst = 0.0f64;
    for (name, omega) in &densities {
        let mk = |n: usize| -> Result<WaveTrajectory> {
            let u0 = sample_fn(n, bump(0.6, 0.2));
            evolve(omega, &u0, &vec![0.0; n + 1], 4.0, &WaveOptions { snapshot_stride: Some(1), energies: false, ..Default::default() })
        };
        let (a, b) = (mk(n)?, mk(2 * n)?);
        let sw = sidewise_evolve(omega, &Slice::left_boundary(&a), Direction::Right, 0.5, a.dx, 0)?;
        let (mut e_sw, mut e_fw) = (0.0f64, 0.0f64);
        for (xi, x) in sw.x.iter().enumerate() {
            let i = (x * n as f64).round() as usize;
            let (lo, _) = sw.windows[xi];
            for (q, v) in sw.u[xi].iter().enumerate() {
                let l = lo + q;
                let t = l as f64 * a.dt;
                let lb = (t / b.dt).round() as usize;
                if (lb as f64 * b.dt - t).abs() > 1e-9 * t.max(1.0) {
                    continue;
                }
                let fa = a.snapshots[l].u[i];
                let fb = b.snapshots[lb].u[2 * i];
                e_sw = e_sw.max((v - fa).abs());
                e_fw = e_fw.max((fa - fb).abs());
            }
        }
        worst = worst.max(e_sw / e_fw);
        notes.push(format!("{name}: sidewise-forward {e_sw:.2e}, forward self-refinement {e_fw:.2e}"));
    }
    let tol = o.upper(10, 2.0);
    Ok(Outcome {
        passed: worst < tol,
        measured: format!("worst ratio {worst:.3} over {} densities (n = {n})", densities.len()),
        tolerance: format!("< {tol}"),
        notes,
    })
}

fn strict_sequences(o: &AcceptanceOptions) -> Result<Outcome> {
    let mut notes = Vec::new();
    let mut last_ok = false;
    for n in [2u32, 4, 8] {
        let spec = SequenceSpec {
            descriptor: ModulusDescriptor::Psi(Psi::Identity),
            n,
            j_min: 2,
            j_max: 6,
            mode: SequenceMode::PaperStrict,
            m_const: 25.0,
        };
        let p = make_sequences(&spec)?;
        let row: Vec<String> = p
            .cond
            .iter()
            .map(|c| {
                let f = |b: bool| if b { 'y' } else { 'n' };
                format!("j{}:{}{}{}", c.j, f(c.eps_small), f(c.tail_small), f(c.head_small))
            })
            .collect();
        notes.push(format!("N = {n}: {}", row.join(" ")));
        // Margins are log-scale slack; positive means satisfied.
        let margin = p.cond.iter().flat_map(|c| c.margins).fold(f64::INFINITY, f64::min);
        last_ok = p.all_conditions_hold() && margin > o.lower(11, 0.0);
        notes.push(format!("N = {n}: smallest log-margin {margin:.3}"));
    }
    Ok(Outcome {
        passed: last_ok,
        measured: format!("all three conditions at N = 8, j = 2..6: {last_ok}"),
        tolerance: "all satisfied for the largest N".into(),
        notes,
    })
}
