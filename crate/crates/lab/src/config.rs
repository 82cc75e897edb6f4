//! Run configuration, the config-file format and the built-in presets.
//!
//! A config file is flat `key = value` text (TOML syntax, no tables). Every
//! key is optional and overrides the preset (or the defaults). Keys:
//!
//! | key | type | meaning |
//! |---|---|---|
//! | `field` | `"real"` \| `"complex"` | scalar field |
//! | `d` | int ≥ 1 | matrix dimension |
//! | `n_layers` | int ≥ 2 | depth N |
//! | `target` | `"identity"` \| `"diag"` \| `"random"` | target kind |
//! | `target_scale` | real ≥ 0 | σ₁ for `identity` (Σ = σ₁·I) |
//! | `target_diag` | list of d reals ≥ 0 | diagonal for `diag` |
//! | `init` | `"balanced"` \| `"random"` | initialization scheme |
//! | `epsilon` | real > 0 | initialization scale ε |
//! | `s_phases` | list of N angles (radians) | balanced constants `s_j = e^{iφ_j}`; real field accepts 0 and π only |
//! | `pinned_spectrum` | list of d reals > 0 | balanced only: fixes `Σ_w(0) = ε·diag(list)` |
//! | `det_sign` | `"plus"` \| `"minus"` \| `"none"` | balanced real only: sign of det W(0) |
//! | `reg_a` | real ≥ 0 | regularizer weight a |
//! | `integrator` | `"gd"` \| `"rk4"` | GD or RK4 gradient flow |
//! | `step` | real > 0 | learning rate η (gd) or step h (rk4) |
//! | `omit_l_ori` | bool | regularizer-only dynamics |
//! | `steps` | int ≥ 1 | step budget |
//! | `record_stride` | int ≥ 1 | record every k-th step |
//! | `seed` | int | 64-bit seed |
//! | `eps_conv` | real > 0 | convergence threshold on `l_ori` |
//!
//! `target = "random"` draws a Gaussian Σ from the seed and reduces it to a
//! diagonal target (the stack is rotated accordingly) before the run.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use dmf_core::ensembles::{DetSign, InitKind, InitScheme};
use dmf_core::dynamics::{DynConfig, Integrator};
use dmf_core::{Field, FieldTag, Real};
use serde::Deserialize;

use crate::{LabError, LabResult};

/// Fixed singular values of `G` in the balanced-initialization figures.
pub const FIG_PINNED_SPECTRUM: [f64; 5] = [1.0, 0.8, 0.6, 0.5, 0.9];
/// Non-identity target of the second balanced-initialization figure.
pub const FIG_H2_TARGET: [f64; 5] = [2.00, 1.55, 1.10, 0.65, 0.20];
/// Any layer norm above this terminates a run as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub enum TargetChoice {
    Identity { scale: f64 },
    Diag(Vec<f64>),
    RandomGeneral,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub field: FieldTag,
    pub d: usize,
    pub n_layers: usize,
    pub target: TargetChoice,
    pub init: InitKind,
    pub epsilon: f64,
    pub s_phases: Vec<f64>,
    pub pinned_spectrum: Option<Vec<f64>>,
    pub det_sign: Option<DetSign>,
    pub reg_a: f64,
    pub integrator: Integrator,
    pub step: f64,
    pub omit_l_ori: bool,
    pub steps: u64,
    pub record_stride: u64,
    pub seed: u64,
    pub eps_conv: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            field: FieldTag::Real,
            d: 5,
            n_layers: 4,
            target: TargetChoice::Identity { scale: 1.0 },
            init: InitKind::BalancedGaussian,
            epsilon: 0.05,
            s_phases: Vec::new(),
            pinned_spectrum: None,
            det_sign: None,
            reg_a: 0.0,
            integrator: Integrator::Gd,
            step: 0.1,
            omit_l_ori: false,
            steps: 200_000,
            record_stride: 100,
            seed: 0,
            eps_conv: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Balanced init, pinned `Σ_w(0)`, identity target, GD.
    FigH1,
    /// As `FigH1` with a non-identity diagonal target.
    FigH2,
    /// Regularizer-only GD from a random init.
    FigH3,
    /// Random-init GD with the regularizer, used for convergence sweeps.
    Convergence,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fig-h1" => Ok(Preset::FigH1),
            "fig-h2" => Ok(Preset::FigH2),
            "fig-h3" => Ok(Preset::FigH3),
            "convergence" => Ok(Preset::Convergence),
            other => Err(format!(
                "unknown preset `{other}` (expected fig-h1|fig-h2|fig-h3|convergence)"
            )),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::FigH1 => "fig-h1",
            Preset::FigH2 => "fig-h2",
            Preset::FigH3 => "fig-h3",
            Preset::Convergence => "convergence",
        }
    }

    pub fn config(self) -> RunConfig {
        let balanced = RunConfig {
            pinned_spectrum: Some(FIG_PINNED_SPECTRUM.to_vec()),
            det_sign: Some(DetSign::Plus),
            ..RunConfig::default()
        };
        match self {
            Preset::FigH1 => balanced,
            Preset::FigH2 => RunConfig {
                target: TargetChoice::Diag(FIG_H2_TARGET.to_vec()),
                ..balanced
            },
            Preset::FigH3 => RunConfig {
                init: InitKind::RandomGaussian,
                epsilon: 1.0,
                reg_a: 1.0,
                step: 0.001,
                omit_l_ori: true,
                steps: 20_000,
                record_stride: 1,
                ..RunConfig::default()
            },
            Preset::Convergence => RunConfig {
                init: InitKind::RandomGaussian,
                epsilon: 0.3,
                reg_a: 50.0,
                step: 0.004,
                record_stride: 1000,
                ..RunConfig::default()
            },
        }
    }

    /// Labelled variants run by `run --preset` when neither `--field` nor
    /// `--det` is given.
    pub fn variants(self) -> Vec<(String, RunConfig)> {
        let base = self.config();
        match self {
            Preset::FigH1 | Preset::FigH2 => vec![
                ("real-det-plus".into(), base.clone()),
                (
                    "real-det-minus".into(),
                    RunConfig {
                        det_sign: Some(DetSign::Minus),
                        ..base.clone()
                    },
                ),
                ("complex".into(), base.with_field(FieldTag::Complex)),
            ],
            Preset::FigH3 | Preset::Convergence => vec![
                ("real".into(), base.clone()),
                ("complex".into(), base.with_field(FieldTag::Complex)),
            ],
        }
    }
}

/// Optional-everything mirror of [`RunConfig`] read from a config file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub field: Option<String>,
    pub d: Option<usize>,
    pub n_layers: Option<usize>,
    pub target: Option<String>,
    pub target_scale: Option<f64>,
    pub target_diag: Option<Vec<f64>>,
    pub init: Option<String>,
    pub epsilon: Option<f64>,
    pub s_phases: Option<Vec<f64>>,
    pub pinned_spectrum: Option<Vec<f64>>,
    pub det_sign: Option<String>,
    pub reg_a: Option<f64>,
    pub integrator: Option<String>,
    pub step: Option<f64>,
    pub omit_l_ori: Option<bool>,
    pub steps: Option<u64>,
    pub record_stride: Option<u64>,
    pub seed: Option<u64>,
    pub eps_conv: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> LabResult<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

fn parse_init(s: &str) -> LabResult<InitKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "balanced" => Ok(InitKind::BalancedGaussian),
        "random" => Ok(InitKind::RandomGaussian),
        other => Err(LabError::Config(format!(
            "unknown init `{other}` (expected balanced|random)"
        ))),
    }
}

fn init_name(k: InitKind) -> &'static str {
    match k {
        InitKind::BalancedGaussian => "balanced",
        InitKind::RandomGaussian => "random",
    }
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

impl RunConfig {
    /// Switches the field; a determinant sign only applies to ℝ and is
    /// dropped when moving to ℂ.
    pub fn with_field(mut self, field: FieldTag) -> Self {
        if field == FieldTag::Complex {
            self.det_sign = None;
        }
        self.field = field;
        self
    }

    /// Overlays every key present in `file`.
    pub fn apply(&mut self, file: &ConfigFile) -> LabResult<()> {
        let cfg_err = |e: String| LabError::Config(e);
        if let Some(f) = &file.field {
            self.field = f.parse().map_err(cfg_err)?;
        }
        if let Some(v) = file.d {
            self.d = v;
        }
        if let Some(v) = file.n_layers {
            self.n_layers = v;
        }
        if let Some(t) = &file.target {
            self.target = match t.trim().to_ascii_lowercase().as_str() {
                "identity" => TargetChoice::Identity {
                    scale: file.target_scale.unwrap_or(1.0),
                },
                "diag" => TargetChoice::Diag(file.target_diag.clone().ok_or_else(|| {
                    LabError::Config("target = \"diag\" needs target_diag".into())
                })?),
                "random" => TargetChoice::RandomGeneral,
                other => {
                    return Err(LabError::Config(format!(
                        "unknown target `{other}` (expected identity|diag|random)"
                    )))
                }
            };
        } else {
            if let (Some(s), TargetChoice::Identity { scale }) = (file.target_scale, &mut self.target) {
                *scale = s;
            }
            if let Some(v) = &file.target_diag {
                self.target = TargetChoice::Diag(v.clone());
            }
        }
        if let Some(s) = &file.init {
            self.init = parse_init(s)?;
        }
        if let Some(v) = file.epsilon {
            self.epsilon = v;
        }
        if let Some(v) = &file.s_phases {
            self.s_phases = v.clone();
        }
        if let Some(v) = &file.pinned_spectrum {
            self.pinned_spectrum = if v.is_empty() { None } else { Some(v.clone()) };
        }
        if let Some(s) = &file.det_sign {
            self.det_sign = match s.trim().to_ascii_lowercase().as_str() {
                "none" => None,
                other => Some(other.parse().map_err(cfg_err)?),
            };
        }
        if let Some(v) = file.reg_a {
            self.reg_a = v;
        }
        if let Some(s) = &file.integrator {
            self.integrator = s.parse().map_err(cfg_err)?;
        }
        if let Some(v) = file.step {
            self.step = v;
        }
        if let Some(v) = file.omit_l_ori {
            self.omit_l_ori = v;
        }
        if let Some(v) = file.steps {
            self.steps = v;
        }
        if let Some(v) = file.record_stride {
            self.record_stride = v;
        }
        if let Some(v) = file.seed {
            self.seed = v;
        }
        if let Some(v) = file.eps_conv {
            self.eps_conv = v;
        }
        Ok(())
    }

    pub fn validate(&self) -> LabResult<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.d == 0 {
            return bad("d must be >= 1".into());
        }
        if self.n_layers < 2 {
            return bad("n_layers must be >= 2".into());
        }
        if self.steps == 0 || self.record_stride == 0 {
            return bad("steps and record_stride must be >= 1".into());
        }
        if !(self.eps_conv > 0.0) {
            return bad("eps_conv must be > 0".into());
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return bad("epsilon must be a positive finite number".into());
        }
        match &self.target {
            TargetChoice::Identity { scale } if !(*scale >= 0.0) || !scale.is_finite() => {
                return bad("target_scale must be finite and >= 0".into())
            }
            TargetChoice::Diag(v) if v.len() != self.d => {
                return bad(format!("target_diag has {} entries, d = {}", v.len(), self.d))
            }
            TargetChoice::Diag(v) if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) => {
                return bad("target_diag entries must be finite and >= 0".into())
            }
            _ => {}
        }
        if !self.s_phases.is_empty() && self.s_phases.len() != self.n_layers {
            return bad(format!(
                "s_phases has {} entries, n_layers = {}",
                self.s_phases.len(),
                self.n_layers
            ));
        }
        if self.field == FieldTag::Real && self.s_phases.iter().any(|&p| p != 0.0 && (p.abs() - PI).abs() > 1e-12) {
            return bad("real field accepts s_phases of 0 or pi only".into());
        }
        if self.init == InitKind::RandomGaussian && (self.pinned_spectrum.is_some() || self.det_sign.is_some()) {
            return bad("pinned_spectrum and det_sign apply to balanced init only".into());
        }
        if self.field == FieldTag::Complex && self.det_sign.is_some() {
            return bad("det_sign applies to the real field only".into());
        }
        if let Some(p) = &self.pinned_spectrum {
            if p.len() != self.d {
                return bad(format!("pinned_spectrum has {} entries, d = {}", p.len(), self.d));
            }
        }
        self.dyn_config::<f64>().validate()?;
        self.init_scheme::<f64>().validate(self.n_layers)?;
        Ok(())
    }

    pub fn dyn_config<T: Field>(&self) -> DynConfig<T::RealField> {
        DynConfig {
            reg_a: T::RealField::lit(self.reg_a),
            step: T::RealField::lit(self.step),
            integrator: self.integrator,
            omit_l_ori: self.omit_l_ori,
        }
    }

    pub fn init_scheme<T: Field>(&self) -> InitScheme<T> {
        let eps = T::RealField::lit(self.epsilon);
        let mut scheme = match self.init {
            InitKind::BalancedGaussian => InitScheme::balanced(eps),
            InitKind::RandomGaussian => InitScheme::random(eps),
        };
        scheme.s_phases = self
            .s_phases
            .iter()
            .map(|&p| match T::TAG {
                // exact ±1 rather than (cos π, sin π)
                FieldTag::Real => T::from_parts(T::RealField::lit(if p == 0.0 { 1.0 } else { -1.0 }), T::RealField::lit(0.0)),
                FieldTag::Complex => T::from_parts(T::RealField::lit(p.cos()), T::RealField::lit(p.sin())),
            })
            .collect();
        scheme.pinned_spectrum = self
            .pinned_spectrum
            .as_ref()
            .map(|v| v.iter().map(|&x| T::RealField::lit(x)).collect());
        scheme.det_sign = self.det_sign;
        scheme
    }

    /// The effective configuration in config-file syntax; feeding the output
    /// back through [`ConfigFile::parse`] reproduces `self`.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("field", format!("\"{}\"", self.field.name()));
        kv("d", self.d.to_string());
        kv("n_layers", self.n_layers.to_string());
        match &self.target {
            TargetChoice::Identity { scale } => {
                kv("target", "\"identity\"".into());
                kv("target_scale", format!("{scale:?}"));
            }
            TargetChoice::Diag(v) => {
                kv("target", "\"diag\"".into());
                kv("target_diag", fmt_list(v));
            }
            TargetChoice::RandomGeneral => kv("target", "\"random\"".into()),
        }
        kv("init", format!("\"{}\"", init_name(self.init)));
        kv("epsilon", format!("{:?}", self.epsilon));
        kv("s_phases", fmt_list(&self.s_phases));
        kv(
            "pinned_spectrum",
            fmt_list(self.pinned_spectrum.as_deref().unwrap_or(&[])),
        );
        kv(
            "det_sign",
            match self.det_sign {
                None => "\"none\"".into(),
                Some(DetSign::Plus) => "\"plus\"".into(),
                Some(DetSign::Minus) => "\"minus\"".into(),
            },
        );
        kv("reg_a", format!("{:?}", self.reg_a));
        kv("integrator", format!("\"{}\"", self.integrator));
        kv("step", format!("{:?}", self.step));
        kv("omit_l_ori", self.omit_l_ori.to_string());
        kv("steps", self.steps.to_string());
        kv("record_stride", self.record_stride.to_string());
        kv("seed", self.seed.to_string());
        kv("eps_conv", format!("{:?}", self.eps_conv));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for p in [Preset::FigH1, Preset::FigH2, Preset::FigH3, Preset::Convergence] {
            p.config().validate().unwrap();
            for (_, v) in p.variants() {
                v.validate().unwrap();
            }
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
    }

    #[test]
    fn echo_round_trips() {
        for p in [Preset::FigH1, Preset::FigH2, Preset::FigH3] {
            for (_, cfg) in p.variants() {
                let mut back = RunConfig {
                    d: 1,
                    ..RunConfig::default()
                };
                back.apply(&ConfigFile::parse(&cfg.to_config_text()).unwrap()).unwrap();
                assert_eq!(back, cfg);
            }
        }
    }

    #[test]
    fn file_overrides_and_rejections() {
        let mut cfg = Preset::FigH1.config();
        cfg.apply(&ConfigFile::parse("seed = 9\nstep = 0.05\ndet_sign = \"minus\"\n").unwrap())
            .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.step, 0.05);
        assert_eq!(cfg.det_sign, Some(DetSign::Minus));
        assert!(ConfigFile::parse("bogus = 1").is_err());
        assert!(ConfigFile::parse("[table]\nd = 1").is_err());

        let mut bad = RunConfig::default();
        bad.record_stride = 0;
        assert!(bad.validate().is_err());
        let bad = RunConfig::default().with_field(FieldTag::Complex);
        assert!(bad.validate().is_ok());
        let bad = RunConfig {
            field: FieldTag::Complex,
            det_sign: Some(DetSign::Plus),
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RunConfig {
            target: TargetChoice::Diag(vec![1.0; 3]),
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RunConfig {
            s_phases: vec![0.0, 1.0, 0.0, 0.0],
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn real_phases_are_exact_signs() {
        let cfg = RunConfig {
            s_phases: vec![0.0, PI, 0.0, -PI],
            ..RunConfig::default()
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.init_scheme::<f64>().s_phases, vec![1.0, -1.0, 1.0, -1.0]);
    }
}
