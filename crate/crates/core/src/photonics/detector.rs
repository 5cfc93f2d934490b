//! Threshold detectors with efficiency, dark counts and timing misassignment,
//! plus the click-pattern classifiers for the BSM and the analyzers.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::optics::AnalyzerBasis;
use crate::{Error, Result};

/// FWHM of a Gaussian divided by its standard deviation.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Overall detection probability, including any channel transmission
    /// folded in by the caller.
    pub efficiency: f64,
    /// Hz.
    pub dark_rate: f64,
    /// Gate per temporal bin, seconds.
    pub window: f64,
    /// Probability a detected photon is registered one bin early (and, with
    /// the same probability, one bin late).
    pub misbin_prob: f64,
}

impl DetectorParams {
    pub fn ideal() -> Self {
        DetectorParams {
            efficiency: 1.0,
            dark_rate: 0.0,
            window: 0.0,
            misbin_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::param("efficiency", format!("{} outside [0, 1]", self.efficiency)));
        }
        if !(self.dark_rate >= 0.0 && self.window >= 0.0) {
            return Err(Error::param("dark_rate", "dark rate and window must be nonnegative"));
        }
        if !(0.0..=0.5).contains(&self.misbin_prob) {
            return Err(Error::param("misbin_prob", format!("{} outside [0, 0.5]", self.misbin_prob)));
        }
        if self.dark_prob() > 1.0 {
            return Err(Error::param("dark_rate", "dark_rate × window exceeds 1"));
        }
        Ok(())
    }

    /// Dark-click probability per bin.
    pub fn dark_prob(&self) -> f64 {
        self.dark_rate * self.window
    }

    /// Same detector behind an extra transmission `t`.
    pub fn with_transmission(mut self, t: f64) -> Self {
        self.efficiency *= t;
        self
    }
}

/// One-sided Gaussian tail beyond half the bin spacing.
pub fn misbin_from_jitter(fwhm: f64, spacing: f64) -> Result<f64> {
    if !(fwhm >= 0.0 && spacing > 0.0) {
        return Err(Error::param("jitter_fwhm", "jitter must be ≥ 0 and bin spacing > 0"));
    }
    if fwhm == 0.0 {
        return Ok(0.0);
    }
    let sigma = fwhm / FWHM_PER_SIGMA;
    Ok(0.5 * erfc(spacing / 2.0 / (sigma * std::f64::consts::SQRT_2)))
}

/// Where a photon arriving in `bin` is registered: `Some(bin')` or lost.
fn landing(bin: usize, shift: i32, nbins: usize) -> Option<usize> {
    let b = bin as i32 + shift;
    (b >= 0 && (b as usize) < nbins).then_some(b as usize)
}

/// Exact distribution over click masks (bit `j` = bin `j` fired) for a
/// detector receiving `photons[j]` photons in bin `j`.
pub fn click_distribution(photons: &[u8], p: &DetectorParams) -> Vec<f64> {
    let nb = photons.len();
    let mut dist = vec![0.0; 1 << nb];
    dist[0] = 1.0;
    let q = p.misbin_prob;
    for (bin, &n) in photons.iter().enumerate() {
        let mut outcomes: Vec<(Option<usize>, f64)> = vec![(None, 1.0 - p.efficiency)];
        for (shift, w) in [(-1, q), (0, 1.0 - 2.0 * q), (1, q)] {
            if w > 0.0 {
                outcomes.push((landing(bin, shift, nb), p.efficiency * w));
            }
        }
        for _ in 0..n {
            let mut next = vec![0.0; dist.len()];
            for (mask, &pm) in dist.iter().enumerate() {
                if pm == 0.0 {
                    continue;
                }
                for &(land, w) in &outcomes {
                    let m = land.map_or(mask, |j| mask | (1 << j));
                    next[m] += pm * w;
                }
            }
            dist = next;
        }
    }
    let d = p.dark_prob();
    if d > 0.0 {
        for j in 0..nb {
            let mut next = vec![0.0; dist.len()];
            for (mask, &pm) in dist.iter().enumerate() {
                next[mask] += pm * (1.0 - d);
                next[mask | (1 << j)] += pm * d;
            }
            dist = next;
        }
    }
    dist
}

/// Samples a click mask with the same model as [`click_distribution`].
pub fn sample_clicks<R: Rng + ?Sized>(photons: &[u8], p: &DetectorParams, rng: &mut R) -> u8 {
    let nb = photons.len();
    let q = p.misbin_prob;
    let mut mask = 0u8;
    for (bin, &n) in photons.iter().enumerate() {
        for _ in 0..n {
            if rng.random::<f64>() >= p.efficiency {
                continue;
            }
            let u: f64 = rng.random();
            let shift = if u < q {
                -1
            } else if u < 2.0 * q {
                1
            } else {
                0
            };
            if let Some(j) = landing(bin, shift, nb) {
                mask |= 1 << j;
            }
        }
    }
    let d = p.dark_prob();
    for j in 0..nb {
        if rng.random::<f64>() < d {
            mask |= 1 << j;
        }
    }
    mask
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BsmOutcome {
    PsiMinus,
    PsiPlus,
    Fail,
}

impl BsmOutcome {
    pub const ALL: [BsmOutcome; 3] = [BsmOutcome::PsiMinus, BsmOutcome::PsiPlus, BsmOutcome::Fail];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Classifies the two BSM port masks (bit 0 early, bit 1 late).
pub fn bsm_classify(port1: u8, port2: u8, accept_psi_plus: bool) -> BsmOutcome {
    let single = |m: u8| m == 0b01 || m == 0b10;
    if single(port1) && single(port2) && port1 != port2 {
        return BsmOutcome::PsiMinus;
    }
    if accept_psi_plus && ((port1 == 0b11 && port2 == 0) || (port1 == 0 && port2 == 0b11)) {
        return BsmOutcome::PsiPlus;
    }
    BsmOutcome::Fail
}

/// Both ports fired in a common bin.
pub fn hom_coincidence(port1: u8, port2: u8) -> bool {
    port1 & port2 != 0
}

/// Analyzer result: `Zero` is the basis's first projector (early, or
/// Phase(φ)); `One` its complement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    Zero,
    One,
    Inconclusive,
}

impl Readout {
    pub const ALL: [Readout; 3] = [Readout::Zero, Readout::One, Readout::Inconclusive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn flipped(self) -> Readout {
        match self {
            Readout::Zero => Readout::One,
            Readout::One => Readout::Zero,
            Readout::Inconclusive => Readout::Inconclusive,
        }
    }
}

/// Z reads the "+" detector's bin (exclusive); Phase reads the middle bins
/// of both ports (exclusive). Outer-bin clicks carry no information.
pub fn analyzer_readout(basis: AnalyzerBasis, plus: u8, minus: u8) -> Readout {
    match basis {
        AnalyzerBasis::Z => match plus {
            0b01 => Readout::Zero,
            0b10 => Readout::One,
            _ => Readout::Inconclusive,
        },
        AnalyzerBasis::Phase(_) => {
            let p = plus & 0b010 != 0;
            let m = minus & 0b010 != 0;
            match (p, m) {
                (true, false) => Readout::Zero,
                (false, true) => Readout::One,
                _ => Readout::Inconclusive,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;

    fn det(eff: f64) -> DetectorParams {
        DetectorParams {
            efficiency: eff,
            ..DetectorParams::ideal()
        }
    }

    #[test]
    fn vacuum_never_clicks_without_darks() {
        let p = det(0.7);
        assert_eq!(click_distribution(&[0, 0], &p)[0], 1.0);
        let mut rng = rng_for(1, &[]);
        for _ in 0..1000 {
            assert_eq!(sample_clicks(&[0, 0], &p, &mut rng), 0);
        }
    }

    #[test]
    fn single_photon_click_rate() {
        let eta = 0.37;
        let p = det(eta);
        let dist = click_distribution(&[1, 0], &p);
        assert!((dist[1] - eta).abs() < 1e-15);
        let mut rng = rng_for(2, &[]);
        let n = 100_000;
        let clicks = (0..n).filter(|_| sample_clicks(&[1, 0], &p, &mut rng) != 0).count() as f64;
        let sigma = (n as f64 * eta * (1.0 - eta)).sqrt();
        assert!((clicks - n as f64 * eta).abs() < 3.0 * sigma);
    }

    #[test]
    fn dark_probability_per_bin() {
        let p = DetectorParams {
            efficiency: 0.5,
            dark_rate: 10.0,
            window: 1.4e-9,
            misbin_prob: 0.0,
        };
        assert!((p.dark_prob() - 1.4e-8).abs() < 1e-20);
        let d = click_distribution(&[0, 0], &p);
        assert!((d[1] - 1.4e-8 * (1.0 - 1.4e-8)).abs() < 1e-20);
    }

    #[test]
    fn misbin_tail() {
        assert!(misbin_from_jitter(250e-12, 1.4e-9).unwrap() < 1e-9);
        let q = misbin_from_jitter(500e-12, 1.4e-9).unwrap();
        assert!((q - 4.9e-4).abs() < 0.2e-4, "{q}");
        assert_eq!(misbin_from_jitter(0.0, 1.4e-9).unwrap(), 0.0);
    }

    #[test]
    fn misbin_moves_clicks() {
        let p = DetectorParams {
            misbin_prob: 0.1,
            ..det(1.0)
        };
        let d = click_distribution(&[0, 1, 0], &p);
        assert!((d[0b001] - 0.1).abs() < 1e-15);
        assert!((d[0b100] - 0.1).abs() < 1e-15);
        assert!((d[0b010] - 0.8).abs() < 1e-15);
        let edge = click_distribution(&[1, 0], &p);
        assert!((edge[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sampled_and_exact_distributions_agree() {
        let p = DetectorParams {
            efficiency: 0.6,
            dark_rate: 1e6,
            window: 1e-2 / 1e6 * 5.0,
            misbin_prob: 0.05,
        };
        let photons = [2, 0, 1];
        let exact = click_distribution(&photons, &p);
        let mut rng = rng_for(3, &[]);
        let n = 200_000;
        let mut hist = vec![0u32; 8];
        for _ in 0..n {
            hist[sample_clicks(&photons, &p, &mut rng) as usize] += 1;
        }
        for m in 0..8 {
            let mean = n as f64 * exact[m];
            let sigma = (mean * (1.0 - exact[m])).sqrt().max(1.0);
            assert!((f64::from(hist[m]) - mean).abs() < 4.0 * sigma, "mask {m}");
        }
    }

    #[test]
    fn bsm_examples() {
        assert_eq!(bsm_classify(0b01, 0b10, false), BsmOutcome::PsiMinus);
        assert_eq!(bsm_classify(0b11, 0, true), BsmOutcome::PsiPlus);
        assert_eq!(bsm_classify(0b11, 0, false), BsmOutcome::Fail);
        assert_eq!(bsm_classify(0b01, 0b01, true), BsmOutcome::Fail);
        assert_eq!(bsm_classify(0b11, 0b10, true), BsmOutcome::Fail);
    }

    #[test]
    fn readout_rules() {
        let ph = AnalyzerBasis::Phase(0.0);
        assert_eq!(analyzer_readout(ph, 0b010, 0b101), Readout::Zero);
        assert_eq!(analyzer_readout(ph, 0b111, 0b010), Readout::Inconclusive);
        assert_eq!(analyzer_readout(ph, 0b001, 0b010), Readout::One);
        assert_eq!(analyzer_readout(AnalyzerBasis::Z, 0b11, 0), Readout::Inconclusive);
        assert_eq!(analyzer_readout(AnalyzerBasis::Z, 0b10, 0), Readout::One);
    }
}
