//! Fock-space model of the optical bench.

pub mod config;
pub mod detector;
pub mod fock;
pub mod hom;
pub mod mode;
pub mod model;
pub mod optics;
pub mod source;
pub mod swap;

pub use config::{BsmParams, EngineKind, ExperimentConfig, Optics};
pub use detector::{bsm_classify, BsmOutcome, DetectorParams, Readout};
pub use fock::{FockMixture, FockState};
pub use hom::{calibrate_overlap, hom_visibility_bound, run_hom, run_hom_seeds, HomResult};
pub use mode::{ModeLabel, Side, Slot, Spatial, Wavelength};
pub use optics::{analyzer, apply_loss, beam_splitter, AnalyzerBasis};
pub use source::{spdc_state, PairStatistics, SourceNoise, SourceParams};
pub use swap::{run_swap, scan_settings, tomography_settings, AnalyzerSetting, CoincidenceRecord, RunOptions, SwapSimulator};
