//! Experiment configuration in TOML.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use epr_young::modular::ModularFrame;
use epr_young::sampler::SamplerConfig;
use epr_young::states::{
    build_mme_state, build_separable_state, build_suboptimal_state, max_propagation_time,
    Displacement, EprSource, GratingSpec, SlitPairState, SourceEnsemble,
};
use epr_young::tabulate::MomentumGrid;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    /// Ideal slit-correlated state.
    #[default]
    Mme,
    /// Finite-width state built from the source widths.
    Suboptimal,
    /// Uncorrelated product state.
    Separable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub seed: u64,
    pub n_events: usize,
    pub admixture_w: f64,
    pub phase_shift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub far_t2: Option<f64>,
    pub state: StateKind,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            seed: 42,
            n_events: 100_000,
            admixture_w: 0.0,
            phase_shift: 0.0,
            far_t2: None,
            state: StateKind::Mme,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSection {
    pub h: f64,
}

impl Default for FrameSection {
    fn default() -> Self {
        Self { h: TAU }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub events_near: PathBuf,
    pub events_far: PathBuf,
    pub report: PathBuf,
    pub histogram: PathBuf,
    pub pattern: PathBuf,
    pub pattern_sum: PathBuf,
    pub sweep: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            events_near: "events_near.csv".into(),
            events_far: "events_far.csv".into(),
            report: "report.jsonl".into(),
            histogram: "histogram.csv".into(),
            pattern: "pattern.csv".into(),
            pattern_sum: "pattern_sum.csv".into(),
            sweep: "sweep.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grating: GratingSpec,
    pub source: EprSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<Displacement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<SourceEnsemble>,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub frame: FrameSection,
    #[serde(default)]
    pub grid: MomentumGrid,
    #[serde(default)]
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    /// Two slits, `σ_rel = 0.05 d`, `σ_cm = 3 N d`, flight to the gratings
    /// for half the maximal time.
    fn default() -> Self {
        let grating = GratingSpec { n_slits: 2, d: 1.0, a: 0.1 };
        let mut source = EprSource {
            sigma_x_rel: 0.05,
            sigma_x_cm: 6.0,
            mass: 1.0,
            t_grating: 0.0,
        };
        source.t_grating = 0.5 * max_propagation_time(&source, 1.0);
        Self {
            grating,
            source,
            displacement: None,
            ensemble: None,
            sampler: SamplerSection::default(),
            frame: FrameSection::default(),
            grid: MomentumGrid::default(),
            output: OutputSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn sha(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn check(&self) -> Result<(), CliError> {
        let config = |e: epr_young::Error| CliError::Config(e.to_string());
        self.grating.check().map_err(config)?;
        self.source.check().map_err(config)?;
        if let Some(e) = &self.ensemble {
            e.check().map_err(config)?;
        }
        self.frame().map_err(config)?;
        self.sampler_config().check().map_err(config)?;
        if self.sampler.n_events == 0 {
            return Err(CliError::Config("sampler.n_events must be positive".into()));
        }
        Ok(())
    }

    pub fn frame(&self) -> epr_young::Result<ModularFrame<f64>> {
        self.grating.frame(self.frame.h)
    }

    pub fn hbar(&self) -> f64 {
        self.frame.h / TAU
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            seed: self.sampler.seed,
            n_events: self.sampler.n_events,
            admixture_w: self.sampler.admixture_w,
            phase_shift: self.sampler.phase_shift,
            ensemble: self.ensemble,
            far_t2: self.sampler.far_t2,
            mass: self.source.mass,
            grid: self.grid,
        }
    }

    pub fn state(&self) -> epr_young::Result<SlitPairState> {
        match self.sampler.state {
            StateKind::Mme => build_mme_state(&self.grating, &self.source, self.hbar()),
            StateKind::Suboptimal => build_suboptimal_state(&self.grating, &self.source, self.hbar()),
            StateKind::Separable => build_separable_state(&self.grating),
        }
    }

    /// Far events come from the displaced-source sampler.
    pub fn uses_ensemble(&self) -> bool {
        self.ensemble.is_some() || self.displacement.is_some_and(|d| !d.is_zero())
    }

    /// Units tag for file preambles.
    pub fn units(&self) -> String {
        let (h, d, m) = (self.frame.h, self.grating.d, self.source.mass);
        if h == TAU && d == 1.0 && m == 1.0 {
            "natural(hbar=1,d=1,m=1)".into()
        } else {
            format!("custom(hbar={},d={d},m={m})", self.hbar())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trip_is_idempotent() {
        let text = ExperimentConfig::default().to_toml();
        let parsed = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(parsed, ExperimentConfig::default());
        assert_eq!(parsed.to_toml(), text);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = ExperimentConfig::default().to_toml().replace("n_slits", "n_slit");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("n_slit"), "{err}");
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut cfg = ExperimentConfig::default();
        cfg.sampler.admixture_w = 2.0;
        assert!(ExperimentConfig::parse(&cfg.to_toml()).is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.grating.a = 1.5;
        assert!(ExperimentConfig::parse(&cfg.to_toml()).is_err());
    }

    #[test]
    fn hash_ignores_formatting() {
        let cfg = ExperimentConfig::default();
        let text = format!("# comment\n{}", cfg.to_toml());
        assert_eq!(ExperimentConfig::parse(&text).unwrap().sha(), cfg.sha());
        let mut other = cfg.clone();
        other.sampler.seed = 1;
        assert_ne!(other.sha(), cfg.sha());
    }

    #[test]
    fn optional_sections() {
        let mut text = ExperimentConfig::default().to_toml();
        text.push_str("\n[ensemble]\ns0_p_cm = 6.283185307179586\n");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        assert!(cfg.uses_ensemble());
        assert_eq!(cfg.ensemble.unwrap().s0_x_rel, 0.0);
        assert!(!ExperimentConfig::default().uses_ensemble());
    }
}
