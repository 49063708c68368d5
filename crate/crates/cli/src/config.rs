use std::path::{Path, PathBuf};

use anyhow::bail;
use eit_cem::experiments::{ConductivitySpec, CurrentPattern, FitWindow, GeometryConfig, HModel, SweepConfig};
use eit_cem::{ElectrodeLayout, Tensor2};
use serde::{Deserialize, Serialize};

/// Contact impedance used by the CEM when neither `beta` nor `impedances` is set.
pub const DEFAULT_BETA: f64 = 1e-2;

/// Raised for anything wrong with the run configuration; maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub model: ModelSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub n_sides: usize,
    pub n_electrodes: usize,
    pub base_level: usize,
    pub boundary_rounds: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = GeometryConfig::default();
        Self {
            n_sides: g.n_sides,
            n_electrodes: g.n_electrodes,
            base_level: g.base_level,
            boundary_rounds: g.boundary_rounds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Cem,
    Shunt,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// Constant contact impedance on every electrode.
    pub beta: Option<f64>,
    /// Per-electrode contact impedances; overrides `beta`.
    pub impedances: Option<Vec<f64>>,
    /// Constant conductivity tensor, identity when absent.
    pub conductivity: Option<Tensor2>,
    pub harmonic: Option<usize>,
    pub currents: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Explicit β grid. When absent, `beta_count` points log-spaced from
    /// `beta_max` down to `beta_min`.
    pub betas: Option<Vec<f64>>,
    pub beta_max: f64,
    pub beta_min: f64,
    pub beta_count: usize,
    pub levels: Vec<usize>,
    pub reference_level: usize,
    pub skip_leading: usize,
    pub skip_trailing: usize,
    pub record_condition: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepConfig::default();
        Self {
            betas: None,
            beta_max: 1.0,
            beta_min: 1e-5,
            beta_count: 11,
            levels: d.levels,
            reference_level: d.reference_level,
            skip_leading: 0,
            skip_trailing: 0,
            record_condition: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// Contact model requested on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaArg {
    Value(f64),
    Shunt,
}

impl std::str::FromStr for BetaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("shunt") {
            return Ok(BetaArg::Shunt);
        }
        s.parse::<f64>()
            .map(BetaArg::Value)
            .map_err(|_| format!("expected a positive number or \"shunt\", got {s:?}"))
    }
}

/// Inclusive level range written `a..b`.
pub fn parse_levels(s: &str) -> Result<Vec<usize>, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected a range like 1..5, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad range start in {s:?}"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad range end in {s:?}"))?;
    if a > b {
        return Err(format!("empty level range {s:?}"));
    }
    Ok((a..=b).collect())
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config_error(format!("invalid config {}: {e}", path.display())))
    }

    pub fn apply_beta(&mut self, beta: BetaArg) {
        match beta {
            BetaArg::Value(b) => {
                self.model.kind = ModelKind::Cem;
                self.model.beta = Some(b);
                self.model.impedances = None;
            }
            BetaArg::Shunt => self.model.kind = ModelKind::Shunt,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# unserializable config: {e}\n"))
    }

    /// True when the configuration names contact impedances explicitly.
    pub fn has_impedances(&self) -> bool {
        self.model.beta.is_some() || self.model.impedances.is_some()
    }

    pub fn geometry(&self) -> GeometryConfig {
        GeometryConfig {
            n_sides: self.geometry.n_sides,
            n_electrodes: self.geometry.n_electrodes,
            base_level: self.geometry.base_level,
            boundary_rounds: self.geometry.boundary_rounds,
        }
    }

    pub fn conductivity(&self) -> ConductivitySpec {
        match self.model.conductivity {
            Some(s) => ConductivitySpec::Constant(s),
            None => ConductivitySpec::Identity,
        }
    }

    pub fn current(&self) -> anyhow::Result<CurrentPattern> {
        match (&self.model.harmonic, &self.model.currents) {
            (Some(_), Some(_)) => bail!(ConfigError(
                "set either model.harmonic or model.currents, not both".into()
            )),
            (Some(h), None) => Ok(CurrentPattern::Cosine { harmonic: *h }),
            (None, Some(c)) => Ok(CurrentPattern::Custom(c.clone())),
            (None, None) => Ok(CurrentPattern::default()),
        }
    }

    pub fn layout(&self) -> anyhow::Result<ElectrodeLayout> {
        let m = self.geometry.n_electrodes;
        let layout = match (&self.model.impedances, self.model.beta) {
            (Some(z), _) => ElectrodeLayout::new(z.clone()),
            (None, b) => ElectrodeLayout::uniform(m, b.unwrap_or(DEFAULT_BETA)),
        };
        let layout = layout.map_err(|e| config_error(e.to_string()))?;
        if layout.n_electrodes() != m {
            bail!(ConfigError(format!(
                "{} impedances given for {m} electrodes",
                layout.n_electrodes()
            )));
        }
        Ok(layout)
    }

    pub fn h_model(&self) -> anyhow::Result<HModel> {
        match self.model.kind {
            ModelKind::Shunt => Ok(HModel::Shunt),
            ModelKind::Cem => match self.model.beta.unwrap_or(DEFAULT_BETA) {
                beta if beta > 0.0 && beta.is_finite() => Ok(HModel::Cem { beta }),
                beta => bail!(ConfigError(format!("contact impedance must be positive, got {beta}"))),
            },
        }
    }

    pub fn sweep_config(&self) -> anyhow::Result<SweepConfig> {
        let s = &self.sweep;
        let betas = match &s.betas {
            Some(b) => b.clone(),
            None => {
                if !(s.beta_max > 0.0 && s.beta_min > 0.0) {
                    bail!(ConfigError("sweep.beta_max and sweep.beta_min must be positive".into()));
                }
                eit_cem::experiments::log_spaced(s.beta_max, s.beta_min, s.beta_count)
            }
        };
        Ok(SweepConfig {
            geometry: self.geometry(),
            conductivity: self.conductivity(),
            current: self.current()?,
            betas,
            levels: s.levels.clone(),
            reference_level: s.reference_level,
            fit: FitWindow {
                skip_leading: s.skip_leading,
                skip_trailing: s.skip_trailing,
            },
            record_condition: s.record_condition,
            ..SweepConfig::default()
        })
    }

    pub fn output_dir(&self) -> &Path {
        &self.output.dir
    }
}
