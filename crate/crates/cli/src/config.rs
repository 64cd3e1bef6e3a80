//! Experiment configuration. Files are TOML (sections of key = value) or the
//! equivalent JSON; every field is optional and defaults are echoed back into
//! the emitted `config.json`.

use std::path::{Path, PathBuf};

use roughwave::coeff::{Coefficient, Cutoff, Family, ModulusDescriptor, Psi, SequenceMode, SequenceSpec};
use roughwave::quasimodes::QuasimodeOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Simulate,
    Quasimode,
    Modulus,
    Counterexample,
    Observability,
    Control,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Quasimode => "quasimode",
            Kind::Modulus => "modulus",
            Kind::Counterexample => "counterexample",
            Kind::Observability => "observability",
            Kind::Control => "control",
        }
    }
}

/// Where the density comes from. Closed-form families use the core tags
/// (`family = "constant"`, `value = 1.0`); the other sources carry a
/// `source` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientCfg {
    Source(Source),
    Closed(Family),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Source {
    /// Built from the `[sequence]` section.
    Counterexample,
    Weierstrass { lower: f64, upper: f64, n_max: u32 },
    /// `x,value` CSV; only the modulus experiment accepts it.
    Samples { path: PathBuf },
}

impl Default for CoefficientCfg {
    fn default() -> Self {
        CoefficientCfg::Closed(Family::Constant { value: 1.0 })
    }
}

/// Initial data (or the control target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataCfg {
    /// `sin(k pi x)` as displacement, or as velocity when `velocity`.
    Mode {
        k: usize,
        #[serde(default)]
        velocity: bool,
    },
    /// Smooth bump `exp(-1/(1-s^2))`, `s = (x - center)/width`.
    Bump { center: f64, width: f64 },
    /// Sine-series coefficients of `u0` and `u1`.
    Series { u0: Vec<f64>, u1: Vec<f64> },
    Zero,
}

impl Default for DataCfg {
    fn default() -> Self {
        DataCfg::Mode { k: 1, velocity: false }
    }
}

impl DataCfg {
    pub fn sample(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        use std::f64::consts::PI;
        use roughwave::wavesim::sample_fn;
        let zero = vec![0.0; n + 1];
        match self {
            DataCfg::Mode { k, velocity } => {
                let s = sample_fn(n, |x| (*k as f64 * PI * x).sin());
                if *velocity {
                    (zero, s)
                } else {
                    (s, zero)
                }
            }
            DataCfg::Bump { center, width } => {
                let s = sample_fn(n, |x| {
                    let s = (x - center) / width;
                    if s.abs() < 1.0 {
                        (-1.0 / (1.0 - s * s)).exp()
                    } else {
                        0.0
                    }
                });
                (s, zero)
            }
            DataCfg::Series { u0, u1 } => {
                let f = |c: &[f64], x: f64| -> f64 {
                    c.iter().enumerate().map(|(k, v)| v * ((k + 1) as f64 * PI * x).sin()).sum()
                };
                (sample_fn(n, |x| f(u0, x)), sample_fn(n, |x| f(u1, x)))
            }
            DataCfg::Zero => (zero.clone(), zero),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceCfg {
    pub descriptor: ModulusDescriptor,
    pub n: u32,
    pub j_min: u32,
    pub j_max: u32,
    pub mode: SequenceMode,
    pub m_const: f64,
    pub eps_bar: f64,
    pub cutoff: Cutoff,
}

impl Default for SequenceCfg {
    fn default() -> Self {
        SequenceCfg {
            descriptor: ModulusDescriptor::Psi(Psi::Identity),
            n: 1,
            j_min: 2,
            j_max: 5,
            mode: SequenceMode::Scaled { j0: 4 },
            m_const: 25.0,
            eps_bar: 0.3,
            cutoff: Cutoff::default(),
        }
    }
}

impl SequenceCfg {
    pub fn spec(&self) -> SequenceSpec {
        SequenceSpec {
            descriptor: self.descriptor.clone(),
            n: self.n,
            j_min: self.j_min,
            j_max: self.j_max,
            mode: self.mode,
            m_const: self.m_const,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleCfg {
    pub cutoffs: Vec<usize>,
    pub random_members: usize,
    pub gramian_resolution: Option<usize>,
}

impl Default for EnsembleCfg {
    fn default() -> Self {
        EnsembleCfg { cutoffs: vec![8, 16, 32, 64], random_members: 8, gramian_resolution: Some(256) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlCfg {
    /// Order of the control space `H^-m`.
    pub m: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ControlCfg {
    fn default() -> Self {
        ControlCfg { m: 0.0, tolerance: 1e-6, max_iterations: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepCfg {
    pub points_per_wave: f64,
    pub min_resolution: usize,
    pub max_resolution: usize,
}

impl Default for SweepCfg {
    fn default() -> Self {
        SweepCfg { points_per_wave: 16.0, min_resolution: 1024, max_resolution: 1 << 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    pub seed: u64,
    pub resolution: usize,
    /// Horizon; `None` means `2 T_omega + 0.5`, resolved before the run.
    pub t: Option<f64>,
    pub cfl: f64,
    pub k_max: usize,
    pub snapshot_stride: Option<usize>,
    pub orders: Vec<usize>,
    pub betas: Vec<f64>,
    pub plots: bool,
    pub strict_paper: bool,
    pub coefficient: CoefficientCfg,
    pub data: DataCfg,
    pub sequence: SequenceCfg,
    pub ensemble: EnsembleCfg,
    pub control: ControlCfg,
    pub quasimode: QuasimodeOptions,
    pub sweep: SweepCfg,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: None,
            seed: 0,
            resolution: 1024,
            t: None,
            cfl: roughwave::tolerances::CFL,
            k_max: 2,
            snapshot_stride: None,
            orders: vec![0, 1, 2],
            betas: Vec::new(),
            plots: true,
            strict_paper: false,
            coefficient: CoefficientCfg::default(),
            data: DataCfg::default(),
            sequence: SequenceCfg::default(),
            ensemble: EnsembleCfg::default(),
            control: ControlCfg::default(),
            quasimode: QuasimodeOptions::default(),
            sweep: SweepCfg::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        let parsed = if json {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    /// Basic range checks; solver-level checks (hyperbolicity, CFL) happen
    /// when the experiment builds its objects.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        if !self.resolution.is_power_of_two() || self.resolution < 16 {
            return bad("resolution must be a power of two >= 16");
        }
        if !(self.cfl > 0.0 && self.cfl <= roughwave::tolerances::CFL) {
            return bad("cfl must lie in ]0, 0.9]");
        }
        if self.t.is_some_and(|t| !(t > 0.0)) {
            return bad("t must be positive");
        }
        if self.sequence.j_min > self.sequence.j_max {
            return bad("sequence.j_min exceeds sequence.j_max");
        }
        if self.ensemble.cutoffs.is_empty() {
            return bad("ensemble.cutoffs is empty");
        }
        Ok(())
    }

    /// Canonical JSON of the resolved configuration.
    pub fn canonical(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical()))
    }
}

/// Builds the coefficient(s) named by the config: one density, or one per
/// level for a lambda counterexample.
pub fn densities(cfg: &ExperimentConfig) -> Result<Vec<Coefficient>, CliError> {
    use roughwave::coeff::{build_pairs, make_counterexample_density, make_sequences, weierstrass_in_bounds};
    match &cfg.coefficient {
        CoefficientCfg::Closed(f) => Ok(vec![Coefficient::new(f.clone())?]),
        CoefficientCfg::Source(Source::Weierstrass { lower, upper, n_max }) => {
            Ok(vec![weierstrass_in_bounds(*lower, *upper, *n_max)?])
        }
        CoefficientCfg::Source(Source::Counterexample) => {
            let params = make_sequences(&cfg.sequence.spec())?;
            let pairs = build_pairs(&params, cfg.sequence.cutoff, cfg.sequence.eps_bar)?;
            Ok(make_counterexample_density(&params, &pairs)?)
        }
        CoefficientCfg::Source(Source::Samples { .. }) => {
            Err(CliError::Config("sampled coefficients are only accepted by the modulus experiment".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let toml_text = r#"
            resolution = 256
            t = 2.0
            [coefficient]
            family = "trigonometric"
            mean = 1.5
            cos = [0.3]
            sin = [0.1]
            [data]
            type = "bump"
            center = 0.5
            width = 0.2
            [sequence]
            descriptor = { kind = "psi", psi = "identity" }
            mode = { mode = "paper-strict" }
        "#;
        let a = ExperimentConfig::parse(toml_text, Path::new("a.toml")).unwrap();
        let b = ExperimentConfig::parse(std::str::from_utf8(&a.canonical()).unwrap(), Path::new("a.json")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.sequence.mode, SequenceMode::PaperStrict);
        assert!(matches!(a.coefficient, CoefficientCfg::Closed(Family::Trigonometric { .. })));
    }

    #[test]
    fn sources_and_unknown_keys() {
        let c = ExperimentConfig::parse("[coefficient]\nsource = \"counterexample\"\n", Path::new("c.toml")).unwrap();
        assert_eq!(c.coefficient, CoefficientCfg::Source(Source::Counterexample));
        assert!(ExperimentConfig::parse("resolutoin = 3\n", Path::new("c.toml")).is_err());
        let d = ExperimentConfig::default();
        assert!(d.validate().is_ok());
        assert!(ExperimentConfig { resolution: 1000, ..d }.validate().is_err());
    }
}
