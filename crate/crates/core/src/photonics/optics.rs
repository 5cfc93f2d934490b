//! Passive optics: beam splitters, loss, spectral slots and the time-bin
//! analyzers.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::fock::{FockMixture, FockState};
use super::mode::{ModeLabel, Side, Slot, Spatial, Wavelength};
use crate::qstate::{c64, CMatrix, Projector, C64};
use crate::{Error, Result};

fn check_unit(name: &'static str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::param(name, format!("{x} outside [0, 1]")));
    }
    Ok(())
}

/// Beam splitter acting in place on two modes with reflectivity `r`:
/// `a† → √(1−r) a† + √r b†`, `b† → √r a† − √(1−r) b†`.
pub fn beam_splitter(state: &FockState, a: &ModeLabel, b: &ModeLabel, r: f64) -> Result<FockState> {
    check_unit("reflectivity", r)?;
    if a.wavelength != b.wavelength || a.bin != b.bin || a.slot != b.slot {
        return Err(Error::IncompatibleModes(format!(
            "beam splitter inputs {a:?} and {b:?} differ in wavelength, bin or slot"
        )));
    }
    let mut s = state.clone();
    let ia = s.require(a)?;
    let ib = s.require(b)?;
    let (t, r) = ((1.0 - r).sqrt(), r.sqrt());
    let m = CMatrix::from_row_slice(2, 2, &[c64(t, 0.0), c64(r, 0.0), c64(r, 0.0), c64(-t, 0.0)]);
    s.apply_linear(&[ia, ib], &[ia, ib], &m)?;
    Ok(s)
}

/// Binomial thinning of one mode. Kraus branch `k` removes `k` photons with
/// amplitude `√(C(n,k) t^{n−k} (1−t)^k)`.
pub fn apply_loss(state: &FockState, mode: &ModeLabel, t: f64) -> Result<FockMixture> {
    check_unit("transmission", t)?;
    let i = state.require(mode)?;
    let nmax = state.terms().map(|(o, _)| o[i]).max().unwrap_or(0);
    let mut out = FockMixture::default();
    for k in 0..=nmax {
        let br = state.map_terms(|occ| {
            let n = occ[i];
            if n < k {
                return None;
            }
            let binom = (0..k).fold(1.0, |acc, j| acc * f64::from(n - j) / f64::from(j + 1));
            let amp2 = binom * t.powi(i32::from(n - k)) * (1.0 - t).powi(i32::from(k));
            if amp2 == 0.0 {
                return None;
            }
            let mut o = occ.clone();
            o[i] = n - k;
            Some((o, amp2.sqrt()))
        });
        if !br.is_zero() {
            out.branches.push(br);
        }
    }
    Ok(out)
}

pub fn apply_loss_mixture(mix: &FockMixture, mode: &ModeLabel, t: f64) -> Result<FockMixture> {
    let mut out = FockMixture::default();
    for b in &mix.branches {
        out.branches.extend(apply_loss(b, mode, t)?.branches);
    }
    Ok(out)
}

/// Splits a common-slot 1533 nm mode into `√ξ` common plus `√(1−ξ)` in a slot
/// private to the mode's spatial arm.
pub fn split_slot(state: &mut FockState, mode: &ModeLabel, overlap: f64) -> Result<()> {
    check_unit("overlap", overlap)?;
    if mode.slot != Slot::Common {
        return Err(Error::IncompatibleModes(format!("{mode:?} is not in the common slot")));
    }
    let i = state.require(mode)?;
    let j = state.ensure_mode(mode.with_slot(Slot::Distinct(mode.spatial)));
    let m = CMatrix::from_column_slice(2, 1, &[c64(overlap.sqrt(), 0.0), c64((1.0 - overlap).sqrt(), 0.0)]);
    state.apply_linear(&[i], &[i, j], &m)
}

/// The BSM beam splitter: every B mode interferes with the C mode of the same
/// bin and slot; outputs are relabelled to the two BSM ports.
pub fn bsm_interfere(state: &FockState) -> Result<FockState> {
    let mut s = state.clone();
    let mut pairs: Vec<(u8, Slot)> = s
        .modes()
        .iter()
        .filter(|m| m.wavelength == Wavelength::Nm1533 && matches!(m.spatial, Spatial::B | Spatial::C))
        .map(|m| (m.bin, m.slot))
        .collect();
    pairs.sort();
    pairs.dedup();
    for (bin, slot) in pairs {
        let b = ModeLabel::new(Wavelength::Nm1533, Spatial::B, bin).with_slot(slot);
        let c = b.with_spatial(Spatial::C);
        let ib = s.ensure_mode(b);
        let ic = s.ensure_mode(c);
        s = beam_splitter(&s, &b, &c, 0.5)?;
        s.relabel(ib, b.with_spatial(Spatial::BsmOut1))?;
        s.relabel(ic, c.with_spatial(Spatial::BsmOut2))?;
    }
    Ok(s)
}

/// Measurement basis of a time-bin analyzer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "basis", content = "phi", rename_all = "snake_case")]
pub enum AnalyzerBasis {
    /// Direct arrival-time readout.
    Z,
    /// Interferometer with phase φ; middle-bin clicks project on Phase(φ) / Phase(φ+π).
    Phase(f64),
}

impl AnalyzerBasis {
    pub fn phase(phi: f64) -> Result<Self> {
        if !(0.0..TAU).contains(&phi) {
            return Err(Error::param("phi", format!("{phi} outside [0, 2π)")));
        }
        Ok(AnalyzerBasis::Phase(phi))
    }

    pub fn validate(&self) -> Result<()> {
        if let AnalyzerBasis::Phase(phi) = *self {
            AnalyzerBasis::phase(phi)?;
        }
        Ok(())
    }

    /// Number of output bins per port.
    pub fn bins(&self) -> usize {
        match self {
            AnalyzerBasis::Z => 2,
            AnalyzerBasis::Phase(_) => 3,
        }
    }

    /// Ports used: Z reads one detector, Phase reads both.
    pub fn ports(&self) -> usize {
        match self {
            AnalyzerBasis::Z => 1,
            AnalyzerBasis::Phase(_) => 2,
        }
    }

    /// Qubit projectors for the two conclusive outcomes.
    pub fn projectors(&self) -> [Projector; 2] {
        match *self {
            AnalyzerBasis::Z => [Projector::Early, Projector::Late],
            AnalyzerBasis::Phase(phi) => {
                let p = Projector::phase_wrapped(phi);
                [p, p.complement()]
            }
        }
    }

    /// Fraction of single photons that can yield a conclusive outcome.
    pub fn postselection(&self) -> f64 {
        match self {
            AnalyzerBasis::Z => 1.0,
            AnalyzerBasis::Phase(_) => 0.5,
        }
    }

    /// The basis measuring Phase(φ+π) first; Z is its own flip.
    pub fn flipped(&self) -> Self {
        match *self {
            AnalyzerBasis::Z => AnalyzerBasis::Z,
            AnalyzerBasis::Phase(phi) => AnalyzerBasis::Phase(crate::qstate::wrap_phase(phi + PI)),
        }
    }
}

pub fn analyzer_port(side: Side, plus: bool, bin: u8) -> ModeLabel {
    let sp = if plus {
        Spatial::AnalyzerPlus(side)
    } else {
        Spatial::AnalyzerMinus(side)
    };
    ModeLabel::new(Wavelength::Nm795, sp, bin)
}

/// Sends the 795 nm photons of `side` through its analyzer. Z relabels the
/// arm onto the "+" detector; Phase is the unbalanced interferometer with
/// three output bins per port.
pub fn analyzer(state: &FockState, side: Side, basis: AnalyzerBasis) -> Result<FockState> {
    basis.validate()?;
    let [e, l] = ModeLabel::arm_795(side);
    let mut s = state.clone();
    let ie = s.require(&e)?;
    let il = s.require(&l)?;
    match basis {
        AnalyzerBasis::Z => {
            s.relabel(ie, analyzer_port(side, true, 0))?;
            s.relabel(il, analyzer_port(side, true, 1))?;
        }
        AnalyzerBasis::Phase(phi) => {
            let outs: Vec<usize> = [true, false]
                .iter()
                .flat_map(|&p| (0..3).map(move |bin| (p, bin)))
                .map(|(p, bin)| s.ensure_mode(analyzer_port(side, p, bin)))
                .collect();
            let h = c64(0.5, 0.0);
            let z = C64::from_polar(0.5, phi);
            let o = C64::default();
            // Rows: +0, +1, +2, −0, −1, −2. Columns: e, ℓ.
            let m = CMatrix::from_row_slice(6, 2, &[h, o, z, h, o, z, h, o, -z, h, o, -z]);
            s.apply_linear(&[ie, il], &outs, &m)?;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::mode::{EARLY_BIN, LATE_BIN};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn bsm_modes() -> Vec<ModeLabel> {
        vec![
            ModeLabel::new(Wavelength::Nm1533, Spatial::B, EARLY_BIN),
            ModeLabel::new(Wavelength::Nm1533, Spatial::C, EARLY_BIN),
        ]
    }

    #[test]
    fn hom_bunching() {
        let m = bsm_modes();
        let s = FockState::number_state(m.clone(), &[1, 1]).unwrap();
        let out = beam_splitter(&s, &m[0], &m[1], 0.5).unwrap();
        assert_eq!(out.amplitude(&[1, 1]), C64::default());
        assert!((out.amplitude(&[2, 0]).re - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((out.amplitude(&[0, 2]).re + FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn single_photon_splits() {
        let m = bsm_modes();
        let s = FockState::number_state(m.clone(), &[1, 0]).unwrap();
        let out = beam_splitter(&s, &m[0], &m[1], 0.5).unwrap();
        assert!((out.amplitude(&[1, 0]).re - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((out.amplitude(&[0, 1]).re - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn mismatched_bins_rejected() {
        let a = ModeLabel::new(Wavelength::Nm1533, Spatial::B, EARLY_BIN);
        let b = ModeLabel::new(Wavelength::Nm1533, Spatial::C, LATE_BIN);
        let s = FockState::vacuum(vec![a, b]).unwrap();
        assert!(beam_splitter(&s, &a, &b, 0.5).is_err());
    }

    /// One photon from each side, fully distinguishable or fully overlapping.
    fn bsm_coincidence(overlap: f64) -> f64 {
        let m = bsm_modes();
        let mut s = FockState::number_state(m.clone(), &[1, 1]).unwrap();
        split_slot(&mut s, &m[0], overlap).unwrap();
        split_slot(&mut s, &m[1], overlap).unwrap();
        let out = bsm_interfere(&s).unwrap();
        // Coincidence: at least one photon in each output port, any slot.
        out.probabilities()
            .iter()
            .filter(|(o, _)| {
                let port = |sp: Spatial| {
                    out.modes()
                        .iter()
                        .zip(o.iter())
                        .filter(|(l, _)| l.spatial == sp)
                        .map(|(_, &n)| n as u32)
                        .sum::<u32>()
                };
                port(Spatial::BsmOut1) > 0 && port(Spatial::BsmOut2) > 0
            })
            .map(|(_, p)| p)
            .sum()
    }

    #[test]
    fn distinguishable_coincidence_is_half() {
        assert!((bsm_coincidence(0.0) - 0.5).abs() < 1e-12);
        assert!(bsm_coincidence(1.0) < 1e-24);
    }

    #[test]
    fn partial_overlap_gives_squared_visibility() {
        let xi: f64 = 0.89f64.sqrt();
        let v = 1.0 - bsm_coincidence(xi) / bsm_coincidence(0.0);
        assert!((v - 0.89).abs() < 1e-12);
    }

    #[test]
    fn loss_limits() {
        let m = bsm_modes();
        let s = FockState::number_state(m.clone(), &[2, 1]).unwrap();
        let id = apply_loss(&s, &m[0], 1.0).unwrap();
        assert_eq!(id.branches.len(), 1);
        assert_eq!(id.branches[0], s);
        let gone = apply_loss(&s, &m[0], 0.0).unwrap();
        assert!((gone.mean_photons(&m[0]).unwrap()).abs() < 1e-15);
        assert!((gone.trace() - 1.0).abs() < 1e-15);
        let one = FockState::number_state(m.clone(), &[1, 0]).unwrap();
        let t = apply_loss(&one, &m[0], 0.35).unwrap();
        assert!((t.mean_photons(&m[0]).unwrap() - 0.35).abs() < 1e-15);
    }

    /// Loss as a beam splitter into an unobserved mode followed by tracing it
    /// out gives the same mixture as the Kraus thinning.
    #[test]
    fn loss_equals_beam_splitter_to_sink() {
        let m = bsm_modes();
        let s = FockState::from_terms(
            m.clone(),
            [
                (vec![2, 0], c64(0.6, 0.0)),
                (vec![1, 1], c64(0.0, 0.48)),
                (vec![0, 1], c64(0.64, 0.0)),
            ],
        )
        .unwrap();
        let t: f64 = 0.3;
        let kraus = apply_loss(&s, &m[0], t).unwrap();

        let sink = ModeLabel::new(Wavelength::Nm1533, Spatial::Sink(0), EARLY_BIN);
        let mut wide = s.clone();
        let is = wide.ensure_mode(sink);
        let bs = beam_splitter(&wide, &m[0], &sink, 1.0 - t).unwrap();
        let traced: Vec<FockState> = bs.split_on(is).into_iter().map(|(_, b)| b).collect();

        // Compare density matrices over the retained modes.
        let rho = |branches: &[FockState]| {
            let mut map = std::collections::BTreeMap::new();
            for b in branches {
                for (o1, a1) in b.terms() {
                    for (o2, a2) in b.terms() {
                        *map.entry((o1.clone(), o2.clone())).or_insert(C64::default()) += a1 * a2.conj();
                    }
                }
            }
            map
        };
        let r1 = rho(&kraus.branches);
        let r2 = rho(&traced);
        let keys: std::collections::BTreeSet<_> = r1.keys().chain(r2.keys()).cloned().collect();
        for k in keys {
            let a = r1.get(&k).copied().unwrap_or_default();
            let b = r2.get(&k).copied().unwrap_or_default();
            assert!((a - b).norm() < 1e-12, "{k:?}: {a} vs {b}");
        }
    }

    fn analyzer_middle(input: [C64; 2], phi: f64) -> (f64, f64) {
        let modes = ModeLabel::arm_795(Side::A).to_vec();
        let s = FockState::from_terms(modes, [(vec![1, 0], input[0]), (vec![0, 1], input[1])]).unwrap();
        let out = analyzer(&s, Side::A, AnalyzerBasis::phase(phi).unwrap()).unwrap();
        let ip = out.require(&analyzer_port(Side::A, true, 1)).unwrap();
        let im = out.require(&analyzer_port(Side::A, false, 1)).unwrap();
        let mut p = (0.0, 0.0);
        for (o, pr) in out.probabilities() {
            if o[ip] == 1 {
                p.0 += pr;
            }
            if o[im] == 1 {
                p.1 += pr;
            }
        }
        p
    }

    #[test]
    fn early_photon_does_not_interfere() {
        for phi in [0.0, 1.0, 3.0, 5.5] {
            let (p, m) = analyzer_middle([c64(1.0, 0.0), C64::default()], phi);
            assert!((p - 0.25).abs() < 1e-12 && (m - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn plus_state_exits_plus_port() {
        let s = FRAC_1_SQRT_2;
        let (p, m) = analyzer_middle([c64(s, 0.0), c64(s, 0.0)], 0.0);
        assert!((p - 0.5).abs() < 1e-12);
        assert!(m.abs() < 1e-12);
    }

    #[test]
    fn analyzer_rejects_bad_phase() {
        assert!(AnalyzerBasis::phase(TAU).is_err());
        assert!(AnalyzerBasis::phase(-0.1).is_err());
    }

    proptest! {
        #[test]
        fn middle_bin_implements_projector(theta in 0.0f64..3.2, chi in 0.0f64..6.28, phi in 0.0f64..6.28) {
            let a = c64((theta / 2.0).cos(), 0.0);
            let b = C64::from_polar((theta / 2.0).sin(), chi);
            let (p, m) = analyzer_middle([a, b], phi);
            let proj = Projector::phase_wrapped(phi).ket();
            let ov: C64 = proj.amplitudes()[0].conj() * a + proj.amplitudes()[1].conj() * b;
            prop_assert!((p - 0.5 * ov.norm_sqr()).abs() < 1e-12);
            prop_assert!((p + m - 0.5).abs() < 1e-12);
        }

        #[test]
        fn analyzer_and_bsm_preserve_norm(n in 0u8..3, k in 0u8..3, phi in 0.0f64..6.28, xi in 0.0f64..1.0) {
            let mut modes = ModeLabel::arm_795(Side::A).to_vec();
            modes.extend(ModeLabel::arm_1533(Spatial::B));
            modes.extend(ModeLabel::arm_1533(Spatial::C));
            let s = FockState::number_state(modes.clone(), &[n, k, 1, k, n, 1]).unwrap();
            let mut s = analyzer(&s, Side::A, AnalyzerBasis::Phase(phi)).unwrap();
            for m in &modes[2..] {
                split_slot(&mut s, m, xi).unwrap();
            }
            let out = bsm_interfere(&s).unwrap();
            prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-9);
        }
    }
}
