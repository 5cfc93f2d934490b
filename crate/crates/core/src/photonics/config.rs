//! Bench description loaded from TOML.
//!
//! Every section rejects unknown keys. Parse failures and validation failures
//! both surface as [`Error::Config`] carrying the dotted path of the field.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::detector::{misbin_from_jitter, DetectorParams};
use super::source::{PairStatistics, SourceNoise, SourceParams};
use crate::heralding::HeraldingConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Mean pair number per qubit for each source.
    pub mu: f64,
    pub state_fidelity: f64,
    #[serde(default)]
    pub pair_statistics: PairStatistics,
    #[serde(default)]
    pub noise: SourceNoise,
    /// Relative phase of the A–B source state; 0 gives Φ+.
    #[serde(default)]
    pub phase_ab: f64,
    /// Relative phase of the C–D source state; π gives Φ−.
    #[serde(default = "default_phase_cd")]
    pub phase_cd: f64,
    /// Maximum photons per source (two per pair).
    #[serde(default = "default_truncation")]
    pub truncation: usize,
}

fn default_phase_cd() -> f64 {
    PI
}

fn default_truncation() -> usize {
    4
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub transmission_a: f64,
    pub transmission_b: f64,
    pub transmission_c: f64,
    pub transmission_d: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsmParams {
    /// Amplitude overlap ξ of the two 1533 nm spectral modes; the HOM dip
    /// visibility for single photons is ξ².
    pub overlap: f64,
    #[serde(default)]
    pub accept_psi_plus: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub efficiency: f64,
    /// Hz.
    pub dark_rate: f64,
    /// Seconds per temporal bin.
    pub window: f64,
    /// Explicit misbin probability; mutually exclusive with `jitter_fwhm`.
    #[serde(default)]
    pub misbin_prob: Option<f64>,
    /// Timing jitter FWHM in seconds, converted to a misbin probability.
    #[serde(default)]
    pub jitter_fwhm: Option<f64>,
    #[serde(default = "default_bin_spacing")]
    pub bin_spacing: f64,
}

fn default_bin_spacing() -> f64 {
    1.4e-9
}

impl DetectorSpec {
    pub fn resolve(&self, path: &str) -> Result<DetectorParams> {
        let misbin = match (self.misbin_prob, self.jitter_fwhm) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    format!("{path}.misbin_prob"),
                    "give either misbin_prob or jitter_fwhm, not both",
                ))
            }
            (Some(q), None) => q,
            (None, Some(j)) => misbin_from_jitter(j, self.bin_spacing)
                .map_err(|e| Error::config(format!("{path}.jitter_fwhm"), e.to_string()))?,
            (None, None) => 0.0,
        };
        let p = DetectorParams {
            efficiency: self.efficiency,
            dark_rate: self.dark_rate,
            window: self.window,
            misbin_prob: misbin,
        };
        p.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => Error::config(format!("{path}.{name}"), reason),
            other => other,
        })?;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorsConfig {
    pub bsm: DetectorSpec,
    pub analyzer: DetectorSpec,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    /// Exact per-pulse outcome probabilities, counts drawn multinomially.
    #[default]
    Aggregate,
    /// Photon patterns sampled pulse by pulse and pushed through the detectors.
    PerPulse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_pulses")]
    pub pulses: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub engine: EngineKind,
}

fn default_seed() -> u64 {
    1
}

fn default_pulses() -> u64 {
    1_000_000
}

fn default_workers() -> usize {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: default_seed(),
            pulses: default_pulses(),
            workers: default_workers(),
            engine: EngineKind::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Phase points of the α − β scan over one period.
    #[serde(default = "default_scan_points")]
    pub points: usize,
}

fn default_scan_points() -> usize {
    16
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            points: default_scan_points(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyConfig {
    #[serde(default = "default_resamples")]
    pub resamples: usize,
}

fn default_resamples() -> usize {
    200
}

impl Default for TomographyConfig {
    fn default() -> Self {
        TomographyConfig {
            resamples: default_resamples(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomConfig {
    /// Pump pulse duration, seconds.
    pub pump_duration: f64,
    /// Single-photon coherence time, seconds.
    pub coherence_time: f64,
    /// Points of the coincidence-vs-overlap curve.
    #[serde(default = "default_overlap_points")]
    pub overlap_points: usize,
    /// Photons per source for HOM runs, overriding `source.truncation`. The
    /// unconditioned thermal visibility needs more pairs to converge than the
    /// swap statistics do.
    #[serde(default)]
    pub truncation: Option<usize>,
}

fn default_overlap_points() -> usize {
    11
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: Option<SourceConfig>,
    pub channels: Option<ChannelConfig>,
    pub bsm: Option<BsmParams>,
    pub detectors: Option<DetectorsConfig>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub tomography: TomographyConfig,
    pub hom: Option<HomConfig>,
    pub heralding: Option<HeraldingConfig>,
}

/// Resolved optical bench consumed by the simulators.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Optics {
    pub source_ab: SourceParams,
    pub source_cd: SourceParams,
    pub truncation: usize,
    pub channels: ChannelConfig,
    pub bsm: BsmParams,
    pub bsm_detector: DetectorParams,
    pub analyzer_detector: DetectorParams,
}

fn unit(path: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::config(path, format!("{x} outside [0, 1]")));
    }
    Ok(())
}

fn check_truncation(path: &str, t: usize) -> Result<()> {
    if t < 2 {
        return Err(Error::config(path, "at least 2 photons (one pair) per source"));
    }
    if t > 12 {
        return Err(Error::config(path, "more than 12 photons per source is not supported"));
    }
    Ok(())
}

fn missing(section: &str) -> Error {
    Error::config(section, "required section is missing")
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Checks every present section; missing optional sections are only
    /// reported by the accessor that needs them.
    pub fn validate(&self) -> Result<()> {
        if self.source.is_some() || self.channels.is_some() || self.bsm.is_some() || self.detectors.is_some() {
            self.optics()?;
        }
        if self.run.pulses == 0 {
            return Err(Error::config("run.pulses", "must be positive"));
        }
        if self.run.workers == 0 {
            return Err(Error::config("run.workers", "must be positive"));
        }
        if self.scan.points < 5 {
            return Err(Error::config("scan.points", "at least 5 points are needed for a fit"));
        }
        if self.tomography.resamples < 100 {
            return Err(Error::config("tomography.resamples", "at least 100 resamples"));
        }
        if let Some(h) = &self.hom {
            if !(h.coherence_time > 0.0) {
                return Err(Error::config("hom.coherence_time", "must be positive"));
            }
            if !(h.pump_duration >= 0.0) {
                return Err(Error::config("hom.pump_duration", "must be nonnegative"));
            }
            if h.overlap_points < 2 {
                return Err(Error::config("hom.overlap_points", "at least 2 points"));
            }
            if let Some(t) = h.truncation {
                check_truncation("hom.truncation", t)?;
            }
        }
        if let Some(h) = &self.heralding {
            h.validate()?;
        }
        Ok(())
    }

    pub fn optics(&self) -> Result<Optics> {
        let s = self.source.as_ref().ok_or_else(|| missing("source"))?;
        let ch = self.channels.ok_or_else(|| missing("channels"))?;
        let bsm = self.bsm.ok_or_else(|| missing("bsm"))?;
        let det = self.detectors.ok_or_else(|| missing("detectors"))?;
        if !(0.0..1.0).contains(&s.mu) {
            return Err(Error::config("source.mu", format!("{} outside [0, 1)", s.mu)));
        }
        unit("source.state_fidelity", s.state_fidelity)?;
        for (p, v) in [("source.phase_ab", s.phase_ab), ("source.phase_cd", s.phase_cd)] {
            if !v.is_finite() {
                return Err(Error::config(p, "not finite"));
            }
        }
        check_truncation("source.truncation", s.truncation)?;
        unit("channels.transmission_a", ch.transmission_a)?;
        unit("channels.transmission_b", ch.transmission_b)?;
        unit("channels.transmission_c", ch.transmission_c)?;
        unit("channels.transmission_d", ch.transmission_d)?;
        unit("bsm.overlap", bsm.overlap)?;
        let mk = |phase: f64| SourceParams {
            mu: s.mu,
            phase,
            state_fidelity: s.state_fidelity,
            pair_statistics: s.pair_statistics,
            noise: s.noise,
        };
        Ok(Optics {
            source_ab: mk(s.phase_ab),
            source_cd: mk(s.phase_cd),
            truncation: s.truncation,
            channels: ch,
            bsm,
            bsm_detector: det.bsm.resolve("detectors.bsm")?,
            analyzer_detector: det.analyzer.resolve("detectors.analyzer")?,
        })
    }

    pub fn hom_config(&self) -> Result<HomConfig> {
        self.hom.ok_or_else(|| missing("hom"))
    }

    /// Bench for HOM runs: [`Self::optics`] with the HOM truncation applied.
    pub fn hom_optics(&self) -> Result<Optics> {
        let mut o = self.optics()?;
        if let Some(t) = self.hom.and_then(|h| h.truncation) {
            o.truncation = t;
        }
        Ok(o)
    }

    pub fn heralding_config(&self) -> Result<&HeraldingConfig> {
        self.heralding.as_ref().ok_or_else(|| missing("heralding"))
    }
}

impl Optics {
    /// Lossless, noiseless bench with ideal detectors and perfect overlap.
    pub fn ideal(mu: f64) -> Self {
        let src = |phase| SourceParams {
            mu,
            phase,
            state_fidelity: 1.0,
            pair_statistics: PairStatistics::Thermal,
            noise: SourceNoise::Depolarizing,
        };
        Optics {
            source_ab: src(0.0),
            source_cd: src(PI),
            truncation: 4,
            channels: ChannelConfig {
                transmission_a: 1.0,
                transmission_b: 1.0,
                transmission_c: 1.0,
                transmission_d: 1.0,
            },
            bsm: BsmParams {
                overlap: 1.0,
                accept_psi_plus: false,
            },
            bsm_detector: DetectorParams::ideal(),
            analyzer_detector: DetectorParams::ideal(),
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.source_ab.mu = mu;
        self.source_cd.mu = mu;
        self
    }

    pub fn with_overlap(mut self, overlap: f64) -> Self {
        self.bsm.overlap = overlap;
        self
    }

    pub fn max_pairs(&self) -> usize {
        self.truncation / 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[source]
mu = 0.1
state_fidelity = 0.95

[channels]
transmission_a = 0.5
transmission_b = 0.5
transmission_c = 0.5
transmission_d = 0.5

[bsm]
overlap = 1.0

[detectors.bsm]
efficiency = 0.5
dark_rate = 10.0
window = 1.4e-9
jitter_fwhm = 250e-12

[detectors.analyzer]
efficiency = 0.5
dark_rate = 300.0
window = 1.4e-9
misbin_prob = 1e-3
"#;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let o = c.optics().unwrap();
        assert_eq!(o.truncation, 4);
        assert_eq!(o.source_cd.phase, PI);
        assert!(o.bsm_detector.misbin_prob < 1e-9);
        assert_eq!(o.analyzer_detector.misbin_prob, 1e-3);
        assert_eq!(c.run.seed, 1);
    }

    #[test]
    fn unknown_key_is_rejected_with_path() {
        let text = MINIMAL.replace("overlap = 1.0", "overlap = 1.0\nbogus = 3");
        match ExperimentConfig::from_toml_str(&text) {
            Err(Error::Config { path, reason }) => {
                assert_eq!(path, "bsm.bogus");
                assert!(reason.contains("bogus"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_key_names_the_field() {
        let text = MINIMAL.replace("state_fidelity = 0.95", "");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("state_fidelity"), "{err}");
    }

    #[test]
    fn out_of_range_value_reports_path() {
        let text = MINIMAL.replace("mu = 0.1", "mu = 1.5");
        match ExperimentConfig::from_toml_str(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "source.mu"),
            other => panic!("unexpected {other:?}"),
        }
        let text = MINIMAL.replace("efficiency = 0.5\ndark_rate = 300.0", "efficiency = 1.5\ndark_rate = 300.0");
        match ExperimentConfig::from_toml_str(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "detectors.analyzer.efficiency"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn conflicting_misbin_inputs_rejected() {
        let text = MINIMAL.replace("misbin_prob = 1e-3", "misbin_prob = 1e-3\njitter_fwhm = 5e-10");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }
}
