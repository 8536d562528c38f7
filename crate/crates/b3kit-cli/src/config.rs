//! Run configuration: a single TOML document with strict key checking.
//!
//! Every numeric constraint enforced by the library types is re-validated
//! at load time so a bad document fails before any suite or trial runs.
//! The canonical serialized form of the effective config (after seed
//! overrides) is hashed to content-address output directories.

use serde::{Deserialize, Serialize};

use b3kit::decoder::DispatchSource;
use b3kit::error::{Error, Result};
use b3kit::pbo::PboConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub regions: usize,
    pub channels: usize,
    pub tasks: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            regions: 6,
            channels: 8,
            tasks: 4,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub var_min: f64,
    pub var_max: f64,
    pub ref_var: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            var_min: 0.01,
            var_max: 1.0,
            ref_var: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PboSection {
    pub w0: f64,
    pub eta_b: f64,
    pub correction_enabled: bool,
}

impl Default for PboSection {
    fn default() -> Self {
        Self {
            w0: 1.0,
            eta_b: 0.5,
            correction_enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub steps: usize,
    pub lr: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            lr: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PfeSection {
    /// Rule count; must be a perfect square (the bank initializes on a grid).
    pub rules: usize,
    pub epsilon: f64,
    pub fit: FitConfig,
}

impl Default for PfeSection {
    fn default() -> Self {
        Self {
            rules: 4,
            epsilon: 1e-6,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdoSection {
    pub kernel: usize,
    pub theta: f64,
    pub weight_seed: u64,
}

impl Default for CdoSection {
    fn default() -> Self {
        Self {
            kernel: 1,
            theta: 0.0,
            weight_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSection {
    pub stages: usize,
    pub aggregation: Vec<f64>,
    /// `closed_form` or `corrected`.
    pub dispatch_source: String,
}

impl Default for DecoderSection {
    fn default() -> Self {
        Self {
            stages: 3,
            aggregation: vec![1.0, 1.0, 1.0],
            dispatch_source: "corrected".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorSection {
    /// `identity` or `attention`.
    pub mode: String,
    pub seed: u64,
}

impl Default for ExtractorSection {
    fn default() -> Self {
        Self {
            mode: "identity".to_string(),
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub trials: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { trials: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    pub dump_fields: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".to_string(),
            dump_fields: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub noise: NoiseConfig,
    pub pbo: PboSection,
    pub pfe: PfeSection,
    pub cdo: CdoSection,
    pub decoder: DecoderSection,
    pub extractor: ExtractorSection,
    pub bench: BenchSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::Parameter {
                name: "config",
                message: format!("{e}"),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |name: &'static str, message: String| Err(Error::Parameter { name, message });
        if self.scene.height == 0 || self.scene.width == 0 {
            return err("scene", format!("dimensions must be >= 1, got {}x{}", self.scene.height, self.scene.width));
        }
        if self.scene.regions < 2 {
            return err("scene.regions", "at least 2 regions are required".into());
        }
        if self.scene.channels < 7 {
            return err("scene.channels", format!("at least 7 channels are required, got {}", self.scene.channels));
        }
        if self.scene.tasks == 0 {
            return err("scene.tasks", "at least one task is required".into());
        }
        if self.noise.var_min.is_nan() || self.noise.var_min <= 0.0 || self.noise.var_max < self.noise.var_min {
            return err("noise", format!("need 0 < var_min <= var_max, got [{}, {}]", self.noise.var_min, self.noise.var_max));
        }
        if self.noise.ref_var.is_nan() || self.noise.ref_var <= 0.0 {
            return err("noise.ref_var", format!("must be > 0, got {}", self.noise.ref_var));
        }
        // Delegated checks: w0 > 0 and eta_b in (0, 1).
        PboConfig::new(self.pbo.w0, self.pbo.eta_b, self.pbo.correction_enabled)?;
        let grid = (self.pfe.rules as f64).sqrt() as usize;
        if self.pfe.rules == 0 || grid * grid != self.pfe.rules {
            return err("pfe.rules", format!("rule count must be a positive perfect square (grid bank), got {}", self.pfe.rules));
        }
        if self.pfe.epsilon.is_nan() || self.pfe.epsilon <= 0.0 {
            return err("pfe.epsilon", format!("must be > 0, got {}", self.pfe.epsilon));
        }
        if self.pfe.fit.steps == 0 {
            return err("pfe.fit.steps", "at least one step is required".into());
        }
        if !self.pfe.fit.lr.is_finite() || self.pfe.fit.lr < 0.0 {
            return err("pfe.fit.lr", format!("must be finite and >= 0, got {}", self.pfe.fit.lr));
        }
        if self.cdo.kernel != 1 && self.cdo.kernel != 3 {
            return err("cdo.kernel", format!("must be 1 or 3, got {}", self.cdo.kernel));
        }
        if !self.cdo.theta.is_finite() {
            return err("cdo.theta", "must be finite".into());
        }
        if self.decoder.stages == 0 {
            return err("decoder.stages", "at least one stage is required".into());
        }
        if self.decoder.aggregation.len() != self.decoder.stages {
            return err("decoder.aggregation", format!(
                "{} weights for {} stages",
                self.decoder.aggregation.len(),
                self.decoder.stages
            ));
        }
        if self.decoder.aggregation.iter().any(|w| !w.is_finite()) {
            return err("decoder.aggregation", "weights must be finite".into());
        }
        self.dispatch_source()?;
        if self.extractor.mode != "identity" && self.extractor.mode != "attention" {
            return err("extractor.mode", format!("must be `identity` or `attention`, got `{}`", self.extractor.mode));
        }
        if self.bench.trials == 0 {
            return err("bench.trials", "at least one trial is required".into());
        }
        Ok(())
    }

    pub fn dispatch_source(&self) -> Result<DispatchSource> {
        match self.decoder.dispatch_source.as_str() {
            "closed_form" => Ok(DispatchSource::ClosedForm),
            "corrected" => Ok(DispatchSource::Corrected),
            other => Err(Error::Parameter {
                name: "decoder.dispatch_source",
                message: format!("must be `closed_form` or `corrected`, got `{other}`"),
            }),
        }
    }

    pub fn pbo_config(&self) -> Result<PboConfig> {
        PboConfig::new(self.pbo.w0, self.pbo.eta_b, self.pbo.correction_enabled)
    }

    /// Grid edge of the rule bank (`rules` is a validated perfect square).
    pub fn pfe_grid(&self) -> usize {
        (self.pfe.rules as f64).sqrt() as usize
    }

    /// Canonical document bytes: the TOML serialization of the parsed
    /// struct, independent of the input document's formatting.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Stable 64-bit content hash of the canonical document bytes.
    pub fn hash_hex(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical_toml().as_bytes()))
    }
}

/// FNV-1a over bytes; platform-independent.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        let config = RunConfig::default();
        assert!(config.validate().is_ok());
        assert_eq!(config.scene.height, 32);
        assert_eq!(config.bench.trials, 100);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("[scene]\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml_str("[nonsense]\nx = 1\n").is_err());
    }

    #[test]
    fn invalid_eta_rejected_at_load() {
        let text = "[pbo]\neta_b = 1.5\n";
        assert!(RunConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn partial_document_fills_defaults() {
        let config = RunConfig::from_toml_str("[scene]\nseed = 7\n").unwrap();
        assert_eq!(config.scene.seed, 7);
        assert_eq!(config.scene.height, 32);
    }

    #[test]
    fn hash_is_formatting_independent_and_seed_sensitive() {
        let a = RunConfig::from_toml_str("[scene]\nseed = 7\n").unwrap();
        let b = RunConfig::from_toml_str("[scene]\n\n  seed   =   7\n").unwrap();
        assert_eq!(a.hash_hex(), b.hash_hex());
        let c = RunConfig::from_toml_str("[scene]\nseed = 8\n").unwrap();
        assert_ne!(a.hash_hex(), c.hash_hex());
    }

    #[test]
    fn aggregation_length_checked() {
        let text = "[decoder]\nstages = 2\naggregation = [1.0]\ndispatch_source = \"corrected\"\n";
        assert!(RunConfig::from_toml_str(text).is_err());
    }
}
