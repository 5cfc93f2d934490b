//! State reconstruction, resampling error bars and visibility fits.

pub mod bootstrap;
pub mod dataset;
pub mod fit;
pub mod mle;

pub use bootstrap::{bootstrap, BootstrapSummary, Statistic};
pub use dataset::{from_records, read_csv, standard_projectors, write_csv, TomographySetting};
pub use fit::{fit_visibility, VisibilityFit};
pub use mle::{reconstruct, MleOptions, MleResult};
