use serde::{Deserialize, Serialize};
use staeckel_tori::numerics::LmConfig;
use staeckel_tori::staeckel::DEFAULT_NODES;
use staeckel_tori::target::{FitRegion, LogPotentialParams, LogTarget, TargetHamiltonian, ToyTarget};
use staeckel_tori::torusfit::{AngleGrid, SymmetryFilter, WaveSet};
use staeckel_tori::ToyParams;
use std::path::PathBuf;

use crate::CliError;

/// Contents of the run configuration file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub toy: ToySection,
    pub target: TargetSection,
    pub torus: TorusSection,
    pub grid: AngleGrid,
    #[serde(default)]
    pub lm: LmConfig,
    pub output: OutputSection,
}

/// Toy potential: explicit `(alpha, gamma, rho0)`, or `prefit = true` to fit
/// them to the target over `region`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub rho0: Option<f64>,
    #[serde(default)]
    pub prefit: bool,
    #[serde(default)]
    pub region: FitRegion,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetName {
    Logarithmic,
    ToyStaeckel,
}

/// Target potential. `a` and `b` apply to the logarithmic target only.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub name: TargetName,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusSection {
    /// `(J_λ, J_φ, J_ν)`.
    pub actions: [f64; 3],
    pub k_lambda_max: u32,
    pub k_nu_max: u32,
    #[serde(default = "default_symmetry")]
    pub symmetry: SymmetryFilter,
}

fn default_symmetry() -> SymmetryFilter {
    SymmetryFilter::Even
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Points on the model-torus section.
    #[serde(default = "default_section_points")]
    pub section_points: usize,
    /// Orbits integrated by `section` and `trace`.
    #[serde(default = "default_orbits")]
    pub orbits: usize,
    /// Orbit duration in units of the longest torus period `2π/min(ω_λ, ω_ν)`.
    #[serde(default = "default_periods")]
    pub periods: f64,
    #[serde(default = "default_samples")]
    pub samples_per_period: usize,
    /// Seed for the toy angles at which orbits start.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_section_points() -> usize {
    16
}
fn default_orbits() -> usize {
    8
}
fn default_periods() -> f64 {
    100.0
}
fn default_samples() -> usize {
    50
}
fn default_seed() -> u64 {
    1
}

/// A parsed configuration together with its source text.
pub struct Loaded {
    pub config: RunConfig,
    pub text: String,
}

pub fn load(path: &std::path::Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = parse(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok(Loaded { config, text })
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !self.toy.prefit {
            for (name, v) in [("alpha", self.toy.alpha), ("gamma", self.toy.gamma), ("rho0", self.toy.rho0)] {
                if v.is_none() {
                    return bad(format!("missing field `toy.{name}` (or set `toy.prefit = true`)"));
                }
            }
            self.explicit_toy()?;
        }
        if self.toy.quadrature_nodes < 8 {
            return bad(format!("`toy.quadrature_nodes` = {} is below 8", self.toy.quadrature_nodes));
        }
        self.toy.region.points().map_err(|e| CliError::Config(format!("`toy.region`: {e}")))?;
        if self.target.name == TargetName::ToyStaeckel && self.toy.prefit {
            return bad("the toy-staeckel target needs explicit toy parameters, not `toy.prefit`".into());
        }
        if self.target.name == TargetName::ToyStaeckel && (self.target.a.is_some() || self.target.b.is_some()) {
            return bad("`target.a` and `target.b` apply to the logarithmic target only".into());
        }
        if self.target.name == TargetName::Logarithmic {
            LogTarget::new(self.log_params()).map_err(|e| CliError::Config(format!("`target`: {e}")))?;
        }
        let j = self.torus.actions;
        if !(j[0] > 0.0 && j[2] > 0.0 && j.iter().all(|v| v.is_finite())) {
            return bad(format!("`torus.actions` = {j:?} needs J_lambda > 0 and J_nu > 0"));
        }
        if self.waves().is_empty() {
            return bad("`torus.k_lambda_max` and `torus.k_nu_max` give an empty wave set".into());
        }
        self.grid.check(&self.waves()).map_err(|e| CliError::Config(format!("`grid`: {e}")))?;
        self.lm.validate().map_err(|e| CliError::Config(format!("`lm`: {e}")))?;
        let o = &self.output;
        if o.section_points == 0 || o.orbits == 0 || o.samples_per_period < 4 || !(o.periods > 0.0) {
            return bad("`output` needs section_points, orbits > 0, samples_per_period >= 4 and periods > 0".into());
        }
        Ok(())
    }

    fn explicit_toy(&self) -> Result<ToyParams, CliError> {
        let (a, g, r) = (self.toy.alpha.unwrap(), self.toy.gamma.unwrap(), self.toy.rho0.unwrap());
        ToyParams::new(a, g, r).map_err(|e| CliError::Config(format!("`toy`: {e}")))
    }

    /// Toy parameters given explicitly; `None` when a pre-fit is requested.
    pub fn toy_params(&self) -> Result<Option<ToyParams>, CliError> {
        if self.toy.prefit {
            Ok(None)
        } else {
            self.explicit_toy().map(Some)
        }
    }

    fn log_params(&self) -> LogPotentialParams {
        let d = LogPotentialParams::default();
        LogPotentialParams { a: self.target.a.unwrap_or(d.a), b: self.target.b.unwrap_or(d.b) }
    }

    /// The target; the toy-Stäckel target uses `toy` as its parameters.
    pub fn target(&self, toy: &ToyParams) -> Box<dyn TargetHamiltonian> {
        match self.target.name {
            TargetName::Logarithmic => Box::new(LogTarget::new(self.log_params()).expect("validated")),
            TargetName::ToyStaeckel => Box::new(ToyTarget::new(*toy)),
        }
    }

    pub fn waves(&self) -> WaveSet {
        WaveSet::new(self.torus.k_lambda_max, self.torus.k_nu_max, self.torus.symmetry)
    }
}
