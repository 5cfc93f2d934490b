//! SPDC pair sources: pair-number statistics and the multi-pair Fock states.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use super::fock::{FockMixture, FockState};
use super::mode::{ModeLabel, Side, Spatial};
use crate::qstate::{c64, C64};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PairStatistics {
    #[default]
    Thermal,
    Poissonian,
}

/// How the single-pair state is degraded to reach the target fidelity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceNoise {
    /// Isotropic: weight `(1-F)/3` on each Bell state orthogonal to the target.
    #[default]
    Depolarizing,
    /// Weight `1-F` on the target with its relative phase flipped.
    Dephasing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    /// Mean pair number per qubit (per pump pulse pair).
    pub mu: f64,
    /// Relative phase of the ℓℓ term: 0 gives Φ+, π gives Φ−.
    pub phase: f64,
    pub state_fidelity: f64,
    pub pair_statistics: PairStatistics,
    pub noise: SourceNoise,
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mu) {
            return Err(Error::param("mu", format!("{} outside [0, 1)", self.mu)));
        }
        if !(0.0..=1.0).contains(&self.state_fidelity) {
            return Err(Error::param(
                "state_fidelity",
                format!("{} outside [0, 1]", self.state_fidelity),
            ));
        }
        if !self.phase.is_finite() {
            return Err(Error::param("phase", "not finite"));
        }
        Ok(())
    }
}

/// Pair-number distribution for `n = 0..=max_pairs`, renormalized over the
/// truncated support.
pub fn pair_number_weights(mu: f64, stats: PairStatistics, max_pairs: usize) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&mu) {
        return Err(Error::param("mu", format!("{mu} outside [0, 1)")));
    }
    let raw: Vec<f64> = (0..=max_pairs)
        .map(|n| match stats {
            PairStatistics::Thermal => mu.powi(n as i32) / (1.0 + mu).powi(n as i32 + 1),
            PairStatistics::Poissonian => {
                let fact: f64 = (1..=n).map(|k| k as f64).product();
                (-mu).exp() * mu.powi(n as i32) / fact
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|p| p / total).collect())
}

/// Two-qubit amplitudes in (ee, eℓ, ℓe, ℓℓ) order; the first qubit is the
/// 795 nm photon.
pub type PairKet = [C64; 4];

fn phi(phase: f64, sign: f64) -> PairKet {
    let s = FRAC_1_SQRT_2;
    let z = C64::from_polar(s * sign, phase);
    [c64(s, 0.0), C64::default(), C64::default(), z]
}

fn psi(sign: f64) -> PairKet {
    let s = FRAC_1_SQRT_2;
    [C64::default(), c64(s, 0.0), c64(s * sign, 0.0), C64::default()]
}

/// Weighted pure decomposition of the noisy single-pair state.
pub fn single_pair_branches(p: &SourceParams) -> Vec<(f64, PairKet)> {
    let f = p.state_fidelity;
    let mut out = vec![(f, phi(p.phase, 1.0))];
    match p.noise {
        SourceNoise::Depolarizing => {
            let w = (1.0 - f) / 3.0;
            out.push((w, phi(p.phase, -1.0)));
            out.push((w, psi(1.0)));
            out.push((w, psi(-1.0)));
        }
        SourceNoise::Dephasing => out.push((1.0 - f, phi(p.phase, -1.0))),
    }
    out.retain(|(w, _)| *w > 0.0);
    out
}

/// Normalized `Π_k (Σ_ij ψ_k[ij] a_i† b_j†) |0⟩` over the four modes
/// `[a_e, a_ℓ, b_e, b_ℓ]`.
pub fn pair_product_state(kets: &[PairKet], a: [ModeLabel; 2], b: [ModeLabel; 2]) -> Result<FockState> {
    let modes = vec![a[0], a[1], b[0], b[1]];
    let mut state = FockState::vacuum(modes.clone())?;
    for ket in kets {
        let mut next = FockState::from_terms(modes.clone(), std::iter::empty())?;
        for i in 0..2 {
            for j in 0..2 {
                let amp = ket[2 * i + j];
                if amp == C64::default() {
                    continue;
                }
                next.add_scaled(&state.create(i).create(2 + j), amp)?;
            }
        }
        state = next;
    }
    state.normalize()?;
    Ok(state)
}

/// All photon states of one pair-number sector with their mixture weights.
#[derive(Clone, Debug)]
pub struct PairSector {
    pub pairs: usize,
    /// Branches with norm² equal to their weight within the sector (sums to 1).
    pub branches: FockMixture,
}

/// Photon states per pair number for a source feeding `side` (795 nm) and
/// `partner` (1533 nm, B or C).
pub fn source_sectors(p: &SourceParams, max_pairs: usize, side: Side, partner: Spatial) -> Result<Vec<PairSector>> {
    p.validate()?;
    let a = ModeLabel::arm_795(side);
    let b = ModeLabel::arm_1533(partner);
    let ideal = single_pair_branches(&SourceParams { state_fidelity: 1.0, ..*p })[0].1;
    let mut sectors = Vec::with_capacity(max_pairs + 1);
    for n in 0..=max_pairs {
        // Only the one-pair term carries the source noise; higher terms are
        // the symmetrized powers of the ideal pair state.
        let branches = if n == 1 {
            single_pair_branches(p)
                .into_iter()
                .map(|(w, ket)| {
                    let mut st = pair_product_state(&[ket], a, b)?;
                    st.scale(w.sqrt());
                    Ok(st)
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![pair_product_state(&vec![ideal; n], a, b)?]
        };
        sectors.push(PairSector {
            pairs: n,
            branches: FockMixture { branches },
        });
    }
    Ok(sectors)
}

/// Full truncated source state on modes A and B, pair sectors weighted by the
/// pair statistics. `truncation` counts photons, two per pair.
pub fn spdc_state(p: &SourceParams, truncation: usize) -> Result<FockMixture> {
    if truncation < 2 {
        return Err(Error::param("truncation", "at least one pair (2 photons) is required"));
    }
    let max_pairs = truncation / 2;
    let weights = pair_number_weights(p.mu, p.pair_statistics, max_pairs)?;
    let mut out = FockMixture::default();
    for (sector, w) in source_sectors(p, max_pairs, Side::A, Spatial::B)?.into_iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for mut b in sector.branches.branches {
            b.scale(w.sqrt());
            out.branches.push(b);
        }
    }
    Ok(out)
}
