//! Run configuration: a JSON document with one section per library module,
//! loaded from a file or a named profile.

use std::path::{Path, PathBuf};

use qrng_core::entropy::Integration;
use qrng_core::noise_model::DetectorConfig;
use qrng_core::pipeline::{DEFAULT_SAMPLES_PER_BLOCK, DEFAULT_SECURITY_LOG2};
use qrng_core::randtest::BatteryConfig;
use qrng_core::trace::TraceConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::output::read_file;

pub const DEFAULT_PROFILE: &str = "gesi-paper";

const BUNDLED: [(&str, &str); 4] = [
    ("gesi-paper", include_str!("../profiles/gesi-paper.json")),
    (
        "gesi-paper-alt-dark",
        include_str!("../profiles/gesi-paper-alt-dark.json"),
    ),
    (
        "ingaas-paper",
        include_str!("../profiles/ingaas-paper.json"),
    ),
    ("fig8-qcnr20", include_str!("../profiles/fig8-qcnr20.json")),
];

pub fn bundled_profile_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(name, _)| *name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorSettings {
    pub samples_per_block: usize,
    /// `ε = 2^−security_log2`.
    pub security_log2: u32,
}

impl Default for ExtractorSettings {
    fn default() -> Self {
        Self {
            samples_per_block: DEFAULT_SAMPLES_PER_BLOCK,
            security_log2: DEFAULT_SECURITY_LOG2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default = "default_trace")]
    pub trace: TraceConfig,
    #[serde(default)]
    pub integration: Integration,
    #[serde(default)]
    pub extractor: ExtractorSettings,
    #[serde(default)]
    pub battery: BatteryConfig,
}

fn default_trace() -> TraceConfig {
    TraceConfig::reference(1)
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            description: String::new(),
            detector: DetectorConfig::default(),
            trace: default_trace(),
            integration: Integration::default(),
            extractor: ExtractorSettings::default(),
            battery: BatteryConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|source| CliError::Config {
            path: origin.to_string(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section, naming the offending field with its section.
    pub fn validate(&self) -> Result<()> {
        let section = |name: &str, r: qrng_core::Result<()>| {
            r.map_err(|e| match e {
                qrng_core::Error::InvalidParameter { field, reason } => {
                    CliError::invalid(format!("{name}.{field}"), reason)
                }
                e => e.into(),
            })
        };
        section("detector", self.detector.validate())?;
        section("trace", self.trace.validate())?;
        section("integration", self.integration.validate())?;
        section("battery", self.battery.validate())?;
        if self.extractor.samples_per_block == 0 {
            return Err(CliError::invalid(
                "extractor.samples_per_block",
                "must be >= 1",
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::invalid("config", format!("{} is not UTF-8", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// A named profile from `dir` when given, otherwise from the bundled set.
    pub fn profile(name: &str, dir: Option<&Path>) -> Result<Self> {
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_')
        {
            return Err(CliError::invalid(
                "profile",
                format!("`{name}` is not a profile name (lowercase letters, digits, '-', '_')"),
            ));
        }
        if let Some(dir) = dir {
            let path: PathBuf = dir.join(format!("{name}.json"));
            return Self::load(&path);
        }
        match BUNDLED.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => Self::parse(text, &format!("profile {name}")),
            None => Err(CliError::invalid(
                "profile",
                format!(
                    "unknown profile `{name}`; bundled: {}",
                    bundled_profile_names().collect::<Vec<_>>().join(", ")
                ),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use qrng_core::entropy::{AdcModel, BinConvention};

    use super::*;

    #[test]
    fn bundled_profiles_match_library_presets() {
        let gesi = RunConfig::profile("gesi-paper", None).unwrap();
        assert_eq!(gesi.detector, DetectorConfig::gesi_reference());
        assert_eq!(gesi.trace, TraceConfig::reference(1));
        assert_eq!(gesi.integration, Integration::default());
        assert_eq!(gesi.battery, BatteryConfig::default());
        assert_eq!(gesi.extractor, ExtractorSettings::default());
        assert_eq!(
            RunConfig::profile("gesi-paper-alt-dark", None)
                .unwrap()
                .detector,
            DetectorConfig::gesi_alt_dark()
        );
        assert_eq!(
            RunConfig::profile("ingaas-paper", None).unwrap().detector,
            DetectorConfig::ingaas_reference()
        );
        let fig8 = RunConfig::profile("fig8-qcnr20", None).unwrap();
        let ratio = fig8.trace.model.sigma_q / fig8.trace.model.sigma_e;
        assert!((20.0 * ratio.log10() - 20.0).abs() < 1e-12);
        assert_eq!(
            fig8.trace.adc,
            AdcModel::new(2.3, 8, BinConvention::FullSpan).unwrap()
        );
    }

    #[test]
    fn empty_document_is_the_default_profile() {
        let cfg = RunConfig::parse("{}", "test").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_and_invalid_fields_are_named() {
        let err = RunConfig::parse(r#"{"detectr": {}}"#, "test").unwrap_err();
        assert!(err.to_string().contains("detectr"), "{err}");
        assert_eq!(err.exit_code(), 1);

        let mut cfg = RunConfig::default();
        cfg.detector.temperature = -1.0;
        let text = serde_json::to_string(&cfg).unwrap();
        let err = RunConfig::parse(&text, "test").unwrap_err();
        assert!(err.to_string().contains("detector.temperature"), "{err}");
    }

    #[test]
    fn profile_names_are_checked() {
        assert_eq!(
            RunConfig::profile("../etc", None).unwrap_err().exit_code(),
            1
        );
        assert_eq!(RunConfig::profile("nope", None).unwrap_err().exit_code(), 1);
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            RunConfig::profile("gesi-paper", Some(dir.path()))
                .unwrap_err()
                .exit_code(),
            2
        );
        std::fs::write(dir.path().join("mine.json"), "{}").unwrap();
        assert_eq!(
            RunConfig::profile("mine", Some(dir.path())).unwrap(),
            RunConfig::default()
        );
    }
}
