use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Wavelength {
    Nm795,
    Nm1533,
}

/// Which 795 nm photon an analyzer acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    A,
    D,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spatial {
    A,
    B,
    C,
    D,
    BsmOut1,
    BsmOut2,
    AnalyzerPlus(Side),
    AnalyzerMinus(Side),
    Sink(u16),
}

/// Spectral slot of a 1533 nm photon. Photons from B and C share the common
/// slot with amplitude √overlap and otherwise sit in a slot of their own.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    Common,
    Distinct(Spatial),
}

pub const EARLY_BIN: u8 = 0;
pub const LATE_BIN: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeLabel {
    pub wavelength: Wavelength,
    pub spatial: Spatial,
    /// Temporal bin: 0/1 for early/late, 0..=2 at analyzer outputs.
    pub bin: u8,
    pub slot: Slot,
}

impl ModeLabel {
    pub fn new(wavelength: Wavelength, spatial: Spatial, bin: u8) -> Self {
        ModeLabel {
            wavelength,
            spatial,
            bin,
            slot: Slot::Common,
        }
    }

    pub fn with_slot(mut self, slot: Slot) -> Self {
        self.slot = slot;
        self
    }

    pub fn with_spatial(mut self, spatial: Spatial) -> Self {
        self.spatial = spatial;
        self
    }

    /// The two time-bin modes of a 795 nm arm.
    pub fn arm_795(side: Side) -> [ModeLabel; 2] {
        let s = match side {
            Side::A => Spatial::A,
            Side::D => Spatial::D,
        };
        [
            ModeLabel::new(Wavelength::Nm795, s, EARLY_BIN),
            ModeLabel::new(Wavelength::Nm795, s, LATE_BIN),
        ]
    }

    /// The two time-bin modes of a 1533 nm arm (B or C).
    pub fn arm_1533(spatial: Spatial) -> [ModeLabel; 2] {
        [
            ModeLabel::new(Wavelength::Nm1533, spatial, EARLY_BIN),
            ModeLabel::new(Wavelength::Nm1533, spatial, LATE_BIN),
        ]
    }
}
