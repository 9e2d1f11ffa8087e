//! Scenario configuration: strict JSON with defaults filled in.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::boundary::{
    alpha_for_flux, cylinder_unitary, left_right_pasting, torus_unitary, unitary_from_preset, BoundaryUnitary, PathRule, Preset,
};
use crate::error::{config_err, Error, Result};
use crate::geometry::{make_mesh_with, DomainSpec, Mesh, Resolution};
use crate::linalg::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    Spectrum,
    Flow,
    Faraday,
    ReconnectIntervals,
    TorusVsCylinder,
    BracketingSweep,
    HypothesisReport,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 7] = [
        ScenarioId::Spectrum,
        ScenarioId::Flow,
        ScenarioId::Faraday,
        ScenarioId::ReconnectIntervals,
        ScenarioId::TorusVsCylinder,
        ScenarioId::BracketingSweep,
        ScenarioId::HypothesisReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Spectrum => "spectrum",
            ScenarioId::Flow => "flow",
            ScenarioId::Faraday => "faraday",
            ScenarioId::ReconnectIntervals => "reconnect_intervals",
            ScenarioId::TorusVsCylinder => "torus_vs_cylinder",
            ScenarioId::BracketingSweep => "bracketing_sweep",
            ScenarioId::HypothesisReport => "hypothesis_report",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Dirichlet,
    Neumann,
    Periodic,
    QuasiPeriodic,
    TwoIntervalU1,
    TwoIntervalU2,
    BlockPasting,
    Torus,
    Cylinder,
    Custom,
}

/// A boundary condition as written in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcConfig {
    pub preset: PresetName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Real part of a custom matrix, row by row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl BcConfig {
    pub fn preset(preset: PresetName) -> Self {
        Self {
            preset,
            alpha: None,
            epsilon: None,
            re: None,
            im: None,
        }
    }

    pub fn flux(eps: f64) -> Self {
        Self {
            epsilon: Some(eps),
            ..Self::preset(PresetName::QuasiPeriodic)
        }
    }

    /// Checks that only the parameters of the chosen preset are present.
    pub fn validate(&self, field: &str) -> Result<()> {
        let qp = self.preset == PresetName::QuasiPeriodic;
        let custom = self.preset == PresetName::Custom;
        if !qp && (self.alpha.is_some() || self.epsilon.is_some()) {
            return Err(config_err(format!("{field}.alpha"), "alpha/epsilon only apply to quasi_periodic"));
        }
        if qp && self.alpha.is_some() == self.epsilon.is_some() {
            return Err(config_err(format!("{field}.alpha"), "quasi_periodic needs exactly one of alpha, epsilon"));
        }
        if let Some(v) = self.alpha.or(self.epsilon) {
            if !v.is_finite() {
                return Err(config_err(format!("{field}.alpha"), "must be finite"));
            }
        }
        if !custom && (self.re.is_some() || self.im.is_some()) {
            return Err(config_err(format!("{field}.re"), "matrix entries only apply to custom"));
        }
        if custom {
            let re = self.re.as_ref().ok_or_else(|| config_err(format!("{field}.re"), "custom needs `re`"))?;
            let n = re.len();
            let square = |m: &Vec<Vec<f64>>| n > 0 && m.len() == n && m.iter().all(|r| r.len() == n);
            if !square(re) {
                return Err(config_err(format!("{field}.re"), "must be a non-empty square matrix"));
            }
            if let Some(im) = &self.im {
                if !square(im) {
                    return Err(config_err(format!("{field}.im"), format!("must be {n}x{n} like `re`")));
                }
            }
        }
        Ok(())
    }

    /// The unitary on `mesh`.
    pub fn unitary(&self, mesh: &Mesh) -> Result<BoundaryUnitary> {
        let n_b = mesh.n_boundary();
        let preset = match self.preset {
            PresetName::Dirichlet => Preset::Dirichlet,
            PresetName::Neumann => Preset::Neumann,
            PresetName::Periodic => Preset::Periodic,
            PresetName::QuasiPeriodic => Preset::QuasiPeriodic {
                alpha: match (self.alpha, self.epsilon) {
                    (Some(a), _) => a,
                    (None, Some(e)) => alpha_for_flux(e),
                    (None, None) => return Err(config_err("bc.alpha", "quasi_periodic needs alpha or epsilon")),
                },
            },
            PresetName::TwoIntervalU1 => Preset::TwoIntervalU1,
            PresetName::TwoIntervalU2 => Preset::TwoIntervalU2,
            PresetName::BlockPasting => return left_right_pasting(mesh),
            PresetName::Torus => return torus_unitary(mesh),
            PresetName::Cylinder => return cylinder_unitary(mesh),
            PresetName::Custom => {
                let re = self.re.as_ref().ok_or_else(|| config_err("bc.re", "custom needs `re`"))?;
                let n = re.len();
                let m = DMatrix::from_fn(n, n, |i, j| {
                    C64::new(re[i][j], self.im.as_ref().map_or(0.0, |im| im[i][j]))
                });
                Preset::Custom(m)
            }
        };
        unitary_from_preset(&preset, n_b)
    }
}

/// Flux schedule `eps: from -> to` over duration `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonRamp {
    pub from: f64,
    pub to: f64,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default)]
    pub shape: RampShape,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampShape {
    #[default]
    Linear,
    /// Half-cosine, zero rate at both ends.
    Smooth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathRuleName {
    Eigenphase,
    GreatCircle,
}

impl From<PathRuleName> for PathRule {
    fn from(r: PathRuleName) -> Self {
        match r {
            PathRuleName::Eigenphase => PathRule::Eigenphase,
            PathRuleName::GreatCircle => PathRule::GreatCircle,
        }
    }
}

/// A scenario run. After [`parse_config`] every optional numeric field the
/// scenario uses holds its default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bc: Option<BcConfig>,
    /// Path end point for flow-type scenarios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bc_end: Option<BcConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_rule: Option<PathRuleName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_ramp: Option<EpsilonRamp>,
    /// Nodes per unit length (per unit side on rectangles).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Cells per segment or rectangle side; overrides `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Duration of an optional frozen-domain run along the path.
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Number of random unitaries in a sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

pub const DEFAULT_N: usize = 1000;
pub const DEFAULT_N_2D: usize = 40;
pub const DEFAULT_K: usize = 10;
pub const DEFAULT_FARADAY_CELLS: usize = 256;
pub const DEFAULT_STEPS: usize = 51;
pub const DEFAULT_SAMPLES: usize = 50;
pub const DEFAULT_SEED: u64 = 0;

/// Parses and validates a JSON document, filling defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse {
            path: if path == "." { "<root>".into() } else { path },
            message: format!("{inner} (line {}, column {})", inner.line(), inner.column()),
        }
    })?;
    cfg.fill_defaults()?;
    Ok(cfg)
}

impl ScenarioConfig {
    /// Minimal config for `scenario` with defaults filled.
    pub fn new(scenario: ScenarioId) -> Self {
        let mut cfg = Self {
            scenario,
            domain: None,
            bc: None,
            bc_end: None,
            path_rule: None,
            epsilon_ramp: None,
            n: None,
            cells: None,
            k: None,
            dt: None,
            duration: None,
            steps: None,
            samples: None,
            seed: None,
            output: None,
        };
        cfg.fill_defaults().expect("defaults are valid");
        cfg
    }

    fn fill_defaults(&mut self) -> Result<()> {
        use ScenarioId::*;
        let s = self.scenario;
        if self.domain.is_none() {
            self.domain = Some(match s {
                Spectrum | BracketingSweep => DomainSpec::unit_interval(),
                Flow | Faraday => DomainSpec::ring(),
                ReconnectIntervals | HypothesisReport => DomainSpec::two_unit_intervals(),
                TorusVsCylinder => DomainSpec::Rectangle { width: 1.0, height: 1.0 },
            });
        }
        let planar = matches!(self.domain, Some(DomainSpec::Rectangle { .. }));
        if s == Faraday && self.n.is_none() && self.cells.is_none() {
            self.cells = Some(DEFAULT_FARADAY_CELLS);
        }
        if self.cells.is_none() {
            self.n.get_or_insert(if planar { DEFAULT_N_2D } else { DEFAULT_N });
        }
        self.k.get_or_insert(match s {
            TorusVsCylinder => 9,
            Faraday => 4,
            _ => DEFAULT_K,
        });
        self.seed.get_or_insert(DEFAULT_SEED);
        match s {
            Spectrum => {
                self.bc.get_or_insert(BcConfig::preset(PresetName::Dirichlet));
            }
            Flow => {
                if self.bc.is_none() && self.epsilon_ramp.is_none() {
                    self.epsilon_ramp = Some(EpsilonRamp {
                        from: 0.0,
                        to: 1.0,
                        duration: None,
                        shape: RampShape::Linear,
                    });
                }
                self.steps.get_or_insert(DEFAULT_STEPS);
            }
            ReconnectIntervals | HypothesisReport => {
                self.bc.get_or_insert(BcConfig::preset(PresetName::TwoIntervalU1));
                self.bc_end.get_or_insert(BcConfig::preset(PresetName::TwoIntervalU2));
                self.steps.get_or_insert(DEFAULT_STEPS);
            }
            Faraday => {
                self.epsilon_ramp.get_or_insert(EpsilonRamp {
                    from: 0.0,
                    to: 0.4,
                    duration: Some(200.0),
                    shape: RampShape::Linear,
                });
                self.dt.get_or_insert(1e-2);
                self.steps.get_or_insert(DEFAULT_STEPS);
            }
            BracketingSweep => {
                self.samples.get_or_insert(DEFAULT_SAMPLES);
            }
            TorusVsCylinder => {}
        }
        if self.bc.is_some() && self.bc_end.is_some() {
            self.path_rule.get_or_insert(PathRuleName::Eigenphase);
        }
        if self.duration.is_some() {
            self.dt.get_or_insert(1e-2);
        }
        self.validate()
    }

    fn validate(&self) -> Result<()> {
        use ScenarioId::*;
        let positive = |v: Option<f64>, name: &str| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(config_err(name, format!("must be positive, got {x}"))),
            _ => Ok(()),
        };
        positive(self.dt, "dt")?;
        positive(self.duration, "T")?;
        for (v, name) in [(self.n, "n"), (self.cells, "cells"), (self.k, "k"), (self.samples, "samples")] {
            if v == Some(0) {
                return Err(config_err(name, "must be positive"));
            }
        }
        if let Some(steps) = self.steps {
            if steps < 2 {
                return Err(config_err("steps", format!("at least 2 path samples are needed, got {steps}")));
            }
        }
        if let Some(bc) = &self.bc {
            bc.validate("bc")?;
        }
        if let Some(bc) = &self.bc_end {
            bc.validate("bc_end")?;
        }
        if let Some(r) = &self.epsilon_ramp {
            if !r.from.is_finite() || !r.to.is_finite() {
                return Err(config_err("epsilon_ramp.from", "must be finite"));
            }
            positive(r.duration, "epsilon_ramp.T")?;
        }
        let need = |ok: bool, field: &str, reason: &str| if ok { Ok(()) } else { Err(config_err(field, reason)) };
        match self.scenario {
            Spectrum => need(self.bc_end.is_none(), "bc_end", "spectrum takes a single boundary condition")?,
            Flow => {
                need(self.epsilon_ramp.is_some() != self.bc.is_some(), "epsilon_ramp", "give either epsilon_ramp or bc/bc_end")?;
                need(self.bc.is_none() || self.bc_end.is_some(), "bc_end", "a flow needs both path end points")?;
            }
            Faraday => {
                let r = self.epsilon_ramp.as_ref().expect("filled");
                need(r.duration.is_some(), "epsilon_ramp.T", "the faraday scenario needs a ramp duration")?;
                need(self.bc.is_none() && self.bc_end.is_none(), "bc", "the faraday scenario runs on the periodic ring")?;
                need(self.duration.is_none(), "T", "give the duration as epsilon_ramp.T")?;
                need(is_ring(self.domain.as_ref()), "domain", "the faraday scenario needs the ring [0, 2 pi]")?;
            }
            ReconnectIntervals | HypothesisReport => {
                need(self.epsilon_ramp.is_none(), "epsilon_ramp", "use bc and bc_end for this path")?;
            }
            TorusVsCylinder => {
                need(
                    matches!(self.domain, Some(DomainSpec::Rectangle { .. })),
                    "domain",
                    "torus_vs_cylinder needs a rectangle",
                )?;
                need(self.bc.is_none(), "bc", "torus_vs_cylinder builds its own boundary conditions")?;
            }
            BracketingSweep => need(self.bc.is_none(), "bc", "the sweep draws its own unitaries")?,
        }
        if self.duration.is_some() && !matches!(self.scenario, ReconnectIntervals | Flow) {
            return Err(config_err("T", "a frozen-domain run is only available along reconnect/flow paths"));
        }
        Ok(())
    }

    pub fn resolution(&self) -> Resolution {
        match self.cells {
            Some(c) => Resolution::Cells(c),
            None => Resolution::PerUnitLength(self.n.unwrap_or(DEFAULT_N)),
        }
    }

    pub fn mesh(&self) -> Result<Mesh> {
        let domain = self.domain.as_ref().ok_or_else(|| config_err("domain", "missing"))?;
        make_mesh_with(domain, self.resolution())
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or(DEFAULT_K)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn steps(&self) -> usize {
        self.steps.unwrap_or(DEFAULT_STEPS)
    }
}

fn is_ring(d: Option<&DomainSpec>) -> bool {
    match d {
        Some(DomainSpec::Intervals(v)) => v.len() == 1 && v[0][0] == 0.0 && (v[0][1] - 2.0 * PI).abs() < 1e-12,
        _ => false,
    }
}
