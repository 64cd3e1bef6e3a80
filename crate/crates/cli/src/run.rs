//! One runner per experiment kind. Each writes through [`Artifacts`] and
//! returns the notes that decide the exit status.

use roughwave::coeff::{build_pairs, make_sequences, travel_time, Coefficient, ModulusDescriptor, SequenceMode};
use roughwave::modulus::{classify_modulus, default_h_grid, dyadic_blocks, modulus_report, Extension, Sampled};
use roughwave::observability::{
    estimate_observability_constant, hum_control, run_counterexample_sweep, ControlOptions, EnsembleSpec,
    SweepOptions,
};
use roughwave::quasimodes::{boundary_smallness_sweep, solve_quasimode, QuasimodeParams};
use roughwave::wavesim::{evolve, WaveOptions};
use serde::Serialize;

use crate::artifacts::Artifacts;
use crate::config::{densities, CoefficientCfg, ExperimentConfig, Kind, Source};
use crate::svg::{plot, Series};
use crate::CliError;

/// Outcome flags that do not abort the run but change the exit status.
#[derive(Debug, Default)]
pub struct Outcome {
    pub truncated: Option<String>,
}

/// Fills the horizon for the kinds that need one: `2 T_omega + 1/2`.
pub fn resolve(cfg: &mut ExperimentConfig, kind: Kind) -> Result<(), CliError> {
    if cfg.t.is_none() && matches!(kind, Kind::Simulate | Kind::Observability | Kind::Control) {
        let omega = densities(cfg)?.remove(0);
        cfg.t = Some(2.0 * travel_time(&omega).value + 0.5);
    }
    Ok(())
}

pub fn run(kind: Kind, cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    out.write("config.json", &cfg.canonical())?;
    if cfg.strict_paper {
        strict_paper(cfg, out)?;
    }
    match kind {
        Kind::Simulate => simulate(cfg, out),
        Kind::Quasimode => quasimode(cfg, out),
        Kind::Modulus => modulus(cfg, out),
        Kind::Counterexample => counterexample(cfg, out),
        Kind::Observability => observability(cfg, out),
        Kind::Control => control(cfg, out),
    }
}

fn provenance_line(out: &Artifacts) -> String {
    let p = out.provenance();
    format!("{} {} kind={} config_sha256={} seed={}", p.tool, p.version, p.kind, p.config_sha256, p.seed)
}

fn svg(out: &mut Artifacts, cfg: &ExperimentConfig, name: &str, title: &str, axes: (&str, &str), log_y: bool, series: &[Series]) -> Result<(), CliError> {
    if !cfg.plots {
        return Ok(());
    }
    let s = plot(title, axes.0, axes.1, log_y, series, &provenance_line(out));
    out.write(name, s.as_bytes())
}

fn horizon(cfg: &ExperimentConfig) -> f64 {
    cfg.t.expect("horizon resolved before the run")
}

/// Writes the scale conditions of the configured sequence in paper-strict
/// mode and refuses to continue when one of them fails.
fn strict_paper(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let spec = roughwave::coeff::SequenceSpec { mode: SequenceMode::PaperStrict, ..cfg.sequence.spec() };
    let params = make_sequences(&spec)?;
    let mut csv = String::from("j,eps_small,tail_small,head_small,margin_eps,margin_tail,margin_head\n");
    for c in &params.cond {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.j, c.eps_small, c.tail_small, c.head_small, c.margins[0], c.margins[1], c.margins[2]
        ));
    }
    out.write("strict_conditions.csv", csv.as_bytes())?;
    let failed: Vec<u32> = params.cond.iter().filter(|c| !c.all()).map(|c| c.j).collect();
    if failed.is_empty() {
        out.note("paper-strict scale conditions hold for every level");
        Ok(())
    } else {
        Err(CliError::Config(format!("paper-strict scale conditions fail at j = {failed:?}")))
    }
}

fn coefficient_outputs(cfg: &ExperimentConfig, out: &mut Artifacts, omega: &Coefficient) -> Result<(), CliError> {
    let n = cfg.resolution;
    out.write("coefficient.csv", omega.to_csv(n).as_bytes())?;
    let pts = (0..=n).map(|i| {
        let x = omega.length() * i as f64 / n as f64;
        (x, omega.eval(x))
    });
    svg(out, cfg, "coefficient.svg", "coefficient", ("x", "omega"), false, &[Series { name: "omega".into(), points: pts.collect() }])
}

fn simulate(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let omega = densities(cfg)?.remove(0).to_unit_interval()?;
    let (u0, u1) = cfg.data.sample(cfg.resolution);
    let opts = WaveOptions { cfl: cfg.cfl, k_max: cfg.k_max, energies: true, snapshot_stride: cfg.snapshot_stride };
    let traj = evolve(&omega, &u0, &u1, horizon(cfg), &opts)?;
    out.write_json("summary.json", &traj.summary())?;
    out.write("traces.csv", traj.traces_csv().as_bytes())?;
    out.write("energies.csv", traj.energies_csv().as_bytes())?;
    if cfg.snapshot_stride.is_some() {
        let mut buf = Vec::new();
        traj.write_snapshots_binary(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
        out.write("snapshots.bin", &buf)?;
    }
    coefficient_outputs(cfg, out, &omega)?;
    let series: Vec<Series> = traj
        .energies
        .iter()
        .enumerate()
        .map(|(k, e)| Series {
            name: format!("E_{k}"),
            points: e.iter().enumerate().map(|(l, v)| ((l as f64 + 0.5) * traj.dt, *v)).collect(),
        })
        .collect();
    svg(out, cfg, "energies.svg", "discrete energies", ("t", "E_k"), true, &series)?;
    let trace = Series {
        name: "u_x(t,0)".into(),
        points: traj.trace_left.iter().enumerate().map(|(l, v)| (l as f64 * traj.dt, *v)).collect(),
    };
    svg(out, cfg, "trace.svg", "boundary trace", ("t", "u_x(t,0)"), false, &[trace])?;
    Ok(Outcome::default())
}

fn counterexample_params(cfg: &ExperimentConfig) -> Result<roughwave::coeff::CounterexampleParams, CliError> {
    if cfg.coefficient != CoefficientCfg::Source(Source::Counterexample) {
        return Err(CliError::Config("this experiment needs [coefficient] source = \"counterexample\"".into()));
    }
    Ok(make_sequences(&cfg.sequence.spec())?)
}

fn quasimode(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let params = counterexample_params(cfg)?;
    if !matches!(params.spec.descriptor, ModulusDescriptor::Psi(_)) {
        return Err(CliError::Config("the quasimode sweep needs a psi descriptor".into()));
    }
    let omega = densities(cfg)?.remove(0);
    let table = boundary_smallness_sweep(&params, &omega, &cfg.quasimode)?;
    out.write("sweep.csv", table.to_csv().as_bytes())?;
    out.write_json("sweep.json", &table)?;
    if let Some(rec) = table.rows.first().and_then(|r| params.record(r.j)) {
        let res = solve_quasimode(&omega, QuasimodeParams::from_record(rec)?, &cfg.quasimode)?;
        out.write("profile.csv", res.to_csv().as_bytes())?;
        let pts = res.x.iter().zip(&res.phi).map(|(x, p)| (*x, *p)).collect();
        let name = format!("phi_{}", rec.j);
        svg(out, cfg, "profile.svg", "quasimode profile", ("x", "phi"), false, &[Series { name, points: pts }])?;
    }
    let ends = |k: usize| Series {
        name: format!("x = {k}"),
        points: table.rows.iter().map(|r| (r.j as f64, r.log_boundary_energy[k])).collect(),
    };
    svg(out, cfg, "boundary.svg", "boundary energy", ("j", "ln(|phi|^2 + |phi'|^2)"), false, &[ends(0), ends(1)])?;
    let truncated = table.truncated_at.as_ref().map(|(j, why)| format!("sweep truncated at j = {j}: {why}"));
    if let Some(t) = &truncated {
        out.note(t.clone());
    }
    Ok(Outcome { truncated })
}

fn modulus(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let f = match &cfg.coefficient {
        CoefficientCfg::Source(Source::Samples { path }) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            Sampled::from_csv(&text)?
        }
        _ => Sampled::from_coefficient(&densities(cfg)?.remove(0), cfg.resolution)?,
    };
    let cells = f.cells();
    if !cells.is_power_of_two() || cells < 64 {
        return Err(CliError::Config(format!("modulus analysis needs a power-of-two cell count >= 64, got {cells}")));
    }
    let j_max = cells.trailing_zeros() as i32 - 2;
    let report = modulus_report(&f, &default_h_grid(&f))?;
    let spectrum = dyadic_blocks(&f, j_max, Extension::Even)?;
    let class = classify_modulus(&report, &spectrum);

    #[derive(Serialize)]
    struct Payload<'a> {
        label: String,
        classification: &'a roughwave::modulus::Classification,
        report: &'a roughwave::modulus::ModulusReport,
        spectrum: &'a roughwave::modulus::DyadicSpectrum,
    }
    out.write_json(
        "modulus.json",
        &Payload { label: class.label.to_string(), classification: &class, report: &report, spectrum: &spectrum },
    )?;
    out.write("dyadic.csv", spectrum.to_csv().as_bytes())?;
    let mut ratios = String::from("name,h,ratio\n");
    for e in &report.entries {
        for (h, r) in &e.ratios {
            ratios.push_str(&format!("{},{h},{r}\n", e.name));
        }
    }
    out.write("ratios.csv", ratios.as_bytes())?;
    let norm = |name: &str, g: fn(&roughwave::modulus::DyadicBlock) -> f64| Series {
        name: name.into(),
        points: spectrum.blocks.iter().map(|b| (b.j as f64, 2f64.powi(b.j) * g(b))).collect(),
    };
    svg(
        out,
        cfg,
        "dyadic.svg",
        "dyadic spectrum",
        ("j", "2^j |Delta_j f|"),
        true,
        &[norm("L1", |b| b.norm_1), norm("L2", |b| b.norm_2), norm("Linf", |b| b.norm_inf)],
    )?;
    let pts = f.values.iter().enumerate().map(|(i, v)| (i as f64 * f.dx(), *v)).collect();
    svg(out, cfg, "coefficient.svg", "sampled coefficient", ("x", "f"), false, &[Series { name: "f".into(), points: pts }])?;
    out.note(format!("classified as {}", class.label));
    Ok(Outcome::default())
}

fn counterexample(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let params = counterexample_params(cfg)?;
    let pairs = build_pairs(&params, cfg.sequence.cutoff, cfg.sequence.eps_bar)?;
    let omegas = roughwave::coeff::make_counterexample_density(&params, &pairs)?;
    let opts = SweepOptions {
        quasimode: cfg.quasimode,
        points_per_wave: cfg.sweep.points_per_wave,
        min_resolution: cfg.sweep.min_resolution,
        max_resolution: cfg.sweep.max_resolution,
        horizon: cfg.t,
    };
    let table = run_counterexample_sweep(&params, &omegas, &cfg.orders, &opts)?;
    out.write("divergence.csv", table.to_csv().as_bytes())?;
    out.write_json("divergence.json", &table)?;
    let series: Vec<Series> = cfg
        .orders
        .iter()
        .enumerate()
        .map(|(k, m)| Series {
            name: format!("Q_{m}"),
            points: table.rows.iter().map(|r| (r.j as f64, r.quotient[k])).collect(),
        })
        .collect();
    svg(out, cfg, "quotients.svg", "observability quotients", ("j", "Q_m"), true, &series)?;
    for (m, d) in cfg.orders.iter().zip(&table.diverges) {
        out.note(format!("Q_{m}: {}", if *d { "diverges" } else { "no divergence detected" }));
    }
    let truncated = table.truncated_at.as_ref().map(|(j, why)| format!("sweep truncated at j = {j}: {why}"));
    if let Some(t) = &truncated {
        out.note(t.clone());
    }
    Ok(Outcome { truncated })
}

fn observability(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let omega = densities(cfg)?.remove(0).to_unit_interval()?;
    let spec = EnsembleSpec {
        cutoffs: cfg.ensemble.cutoffs.clone(),
        random_members: cfg.ensemble.random_members,
        seed: cfg.seed,
        resolution: cfg.resolution,
        orders: cfg.orders.clone(),
        betas: cfg.betas.clone(),
        gramian_resolution: cfg.ensemble.gramian_resolution,
    };
    let rep = estimate_observability_constant(&omega, horizon(cfg), &spec)?;
    out.write("c_obs.csv", rep.to_csv().as_bytes())?;

    #[derive(Serialize)]
    struct Payload<'a> {
        t: f64,
        t_omega: f64,
        admissible: bool,
        measurements: Vec<String>,
        estimates: &'a [roughwave::observability::CutoffEstimate],
        growth: &'a [f64],
        loss_order: Option<usize>,
        loss_beta: Option<f64>,
        ll_over_lower: Option<f64>,
    }
    out.write_json(
        "observability.json",
        &Payload {
            t: rep.t,
            t_omega: rep.t_omega,
            admissible: rep.admissible,
            measurements: rep.measurements.iter().map(ToString::to_string).collect(),
            estimates: &rep.estimates,
            growth: &rep.growth,
            loss_order: rep.loss_order,
            loss_beta: rep.loss_beta,
            ll_over_lower: rep.ll_over_lower,
        },
    )?;
    let series: Vec<Series> = rep
        .measurements
        .iter()
        .enumerate()
        .map(|(k, m)| Series {
            name: m.to_string(),
            points: rep.estimates.iter().map(|e| (e.cutoff as f64, e.c_obs[k])).collect(),
        })
        .collect();
    svg(out, cfg, "c_obs.svg", "observability constant", ("mode cutoff", "C_obs"), true, &series)?;
    if !rep.admissible {
        out.note(format!("T = {} is not above 2 T_omega = {}", rep.t, 2.0 * rep.t_omega));
    }
    Ok(Outcome::default())
}

fn control(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let omega = densities(cfg)?.remove(0).to_unit_interval()?;
    let (y0, y1) = cfg.data.sample(cfg.resolution);
    let opts = ControlOptions {
        resolution: cfg.resolution,
        max_iterations: cfg.control.max_iterations,
        tolerance: cfg.control.tolerance,
        cfl: cfg.cfl,
    };
    let res = hum_control(&omega, &y0, &y1, horizon(cfg), cfg.control.m, &opts)?;
    out.write("history.csv", res.history_csv().as_bytes())?;
    let mut signal = String::from("t,f\n");
    for (l, f) in res.control.iter().enumerate() {
        signal.push_str(&format!("{},{f}\n", l as f64 * res.dt));
    }
    out.write("control.csv", signal.as_bytes())?;

    #[derive(Serialize)]
    struct Payload<'a> {
        t: f64,
        admissible: bool,
        m: f64,
        dt: f64,
        terminal_l2: f64,
        terminal_hm1: f64,
        terminal_relative_energy: f64,
        control_l2: f64,
        control_norm: f64,
        cost_constant: f64,
        iterations: usize,
        controlled: bool,
        history: &'a [roughwave::observability::CgStep],
    }
    out.write_json(
        "control.json",
        &Payload {
            t: res.t,
            admissible: res.admissible,
            m: res.m,
            dt: res.dt,
            terminal_l2: res.terminal_l2,
            terminal_hm1: res.terminal_hm1,
            terminal_relative_energy: res.terminal_relative_energy,
            control_l2: res.control_l2,
            control_norm: res.control_norm,
            cost_constant: res.cost_constant,
            iterations: res.iterations,
            controlled: res.controlled,
            history: &res.history,
        },
    )?;
    let hist = Series {
        name: "terminal energy".into(),
        points: res.history.iter().map(|h| (h.iteration as f64, h.residual)).collect(),
    };
    svg(out, cfg, "history.svg", "conjugate gradient history", ("iteration", "relative terminal energy"), true, &[hist])?;
    let sig = Series {
        name: "f(t)".into(),
        points: res.control.iter().enumerate().map(|(l, f)| (l as f64 * res.dt, *f)).collect(),
    };
    svg(out, cfg, "control.svg", "boundary control", ("t", "f"), false, &[sig])?;
    if !res.controlled {
        out.note(format!(
            "terminal relative energy {} above tolerance {} after {} iterations",
            res.terminal_relative_energy, cfg.control.tolerance, res.iterations
        ));
    }
    Ok(Outcome::default())
}
