//! Exact per-pulse outcome probabilities.
//!
//! For every pair-number sector `(n_ab, n_cd)` the two sources are propagated
//! through loss, the spectral-slot split and the BSM beam splitter. The state
//! is then grouped by the photon counts reaching the four BSM detector bins,
//! leaving one operator on the 795 nm photons per count vector. Detection and
//! classification enter only through probabilities of those count vectors and
//! through effective POVMs of the analyzers, so every outcome probability is
//! a finite sum of traces.

use std::collections::BTreeMap;

use rustc_hash::FxHashMap;

use serde::{Deserialize, Serialize};

use super::config::Optics;
use super::detector::{
    analyzer_readout, bsm_classify, click_distribution, hom_coincidence, BsmOutcome, DetectorParams, Readout,
};
use super::fock::{FockMixture, FockState};
use super::mode::{ModeLabel, Side, Slot, Spatial, Wavelength};
use super::optics::{analyzer, analyzer_port, apply_loss_mixture, split_slot, AnalyzerBasis};
use super::source::{pair_number_weights, source_sectors};
use crate::qstate::{CMatrix, CVector, C64};
use crate::{Error, Result};

/// What the 795 nm side reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SideMeasurement {
    Analyzer(AnalyzerBasis),
    /// Direct detection; outcome `Zero` for a click in any bin, otherwise
    /// `Inconclusive`.
    AnyClick,
}

impl SideMeasurement {
    fn basis(&self) -> AnalyzerBasis {
        match *self {
            SideMeasurement::Analyzer(b) => b,
            SideMeasurement::AnyClick => AnalyzerBasis::Z,
        }
    }

    fn readout(&self, plus: u8, minus: u8) -> Readout {
        match *self {
            SideMeasurement::Analyzer(b) => analyzer_readout(b, plus, minus),
            SideMeasurement::AnyClick => {
                if plus | minus != 0 {
                    Readout::Zero
                } else {
                    Readout::Inconclusive
                }
            }
        }
    }
}

/// What the 1533 nm detectors report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BsmReadout {
    /// Outcome index is [`BsmOutcome::index`].
    Swap,
    /// Outcome 0: both ports fired in a common bin; 1: otherwise.
    HomCoincidence,
}

impl BsmReadout {
    pub fn outcomes(&self) -> usize {
        match self {
            BsmReadout::Swap => 3,
            BsmReadout::HomCoincidence => 2,
        }
    }

    fn classify(&self, m1: u8, m2: u8, accept_psi_plus: bool) -> usize {
        match self {
            BsmReadout::Swap => bsm_classify(m1, m2, accept_psi_plus).index(),
            BsmReadout::HomCoincidence => usize::from(!hom_coincidence(m1, m2)),
        }
    }
}

/// Photon counts at every detector bin for one pulse.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhotonPattern {
    /// Port 1 early, port 1 late, port 2 early, port 2 late.
    pub bsm: [u8; 4],
    pub a_plus: [u8; 3],
    pub a_minus: [u8; 3],
    pub d_plus: [u8; 3],
    pub d_minus: [u8; 3],
}

#[derive(Clone, Debug)]
struct Block {
    counts: [u8; 4],
    /// Unnormalized operator on the 795 nm photons of this sector.
    rho: CMatrix,
}

#[derive(Clone, Debug)]
struct Sector {
    n_ab: usize,
    n_cd: usize,
    blocks: Vec<Block>,
    /// `Σ_k P(b|k) ρ_k` for the swap and HOM readouts.
    swap: Vec<CMatrix>,
    hom: Vec<CMatrix>,
}

#[derive(Clone, Debug)]
pub struct OpticalModel {
    optics: Optics,
    /// BSM detectors including B/C transmission when it is folded in.
    bsm_detector: DetectorParams,
    explicit_loss: bool,
    sectors: Vec<Sector>,
}

/// Weight of each `(n_ab, n_cd)` sector, indexed `[n_ab][n_cd]`.
pub type SectorWeights = Vec<Vec<f64>>;

/// Effective POVM of one analyzer for `n` incoming photons, per readout.
type SidePovm = [CMatrix; 3];

fn prepare_arm(mix: &FockMixture, arm: Spatial, t: f64, explicit_loss: bool, overlap: f64) -> Result<Vec<FockState>> {
    let modes = ModeLabel::arm_1533(arm);
    let mut m = mix.clone();
    if explicit_loss {
        for mode in &modes {
            m = apply_loss_mixture(&m, mode, t)?;
        }
    }
    let mut out = Vec::with_capacity(m.branches.len());
    for mut b in m.branches {
        for mode in &modes {
            split_slot(&mut b, mode, overlap)?;
        }
        out.push(b);
    }
    Ok(out)
}

/// One source branch after the BSM beam splitter, written as a polynomial in
/// the output creation operators. Each entry is (packed output exponents,
/// late-photon count on the 795 nm side, coefficient). The 795 nm part stays
/// in amplitude form because the beam splitter does not touch it.
type OutPoly = Vec<(u64, usize, C64)>;

const OUT_BITS: u32 = 5;
const OUT_MODES: usize = 12;

/// Output mode index for (port, bin, slot): slots are common, distinct to
/// arm B, distinct to arm C.
fn out_index(port: usize, bin: u8, slot: Slot) -> Result<usize> {
    let s = match slot {
        Slot::Common => 0,
        Slot::Distinct(Spatial::B) => 1,
        Slot::Distinct(Spatial::C) => 2,
        Slot::Distinct(other) => {
            return Err(Error::IncompatibleModes(format!("unexpected slot owner {other:?}")));
        }
    };
    if bin > 1 {
        return Err(Error::IncompatibleModes(format!("bin {bin} at the BSM")));
    }
    Ok((port * 2 + bin as usize) * 3 + s)
}

fn factorial(n: u64) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: u8, k: u8) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * f64::from(n - j) / f64::from(j + 1))
}

/// Applies the 50/50 beam splitter `B → (1 + 2)/√2`, `C → (1 − 2)/√2` to one
/// arm's creation operators.
fn substitute(x: &FockState, side: Side) -> Result<OutPoly> {
    let [e, l] = ModeLabel::arm_795(side);
    let il = x.index_of(&l);
    let mut inputs = Vec::new();
    for (i, m) in x.modes().iter().enumerate() {
        if *m == e || *m == l {
            continue;
        }
        let sign = match (m.wavelength, m.spatial) {
            (Wavelength::Nm1533, Spatial::B) => 1.0,
            (Wavelength::Nm1533, Spatial::C) => -1.0,
            _ => return Err(Error::IncompatibleModes(format!("{m:?} cannot enter the BSM"))),
        };
        inputs.push((i, out_index(0, m.bin, m.slot)?, out_index(1, m.bin, m.slot)?, sign));
    }
    let mut acc: FxHashMap<(u64, usize), C64> = FxHashMap::default();
    for (occ, &amp) in x.terms() {
        let late = il.map_or(0, |i| occ[i] as usize);
        let mut poly: Vec<(u64, f64)> = vec![(0, 1.0)];
        for &(i, o1, o2, sign) in &inputs {
            let k = occ[i];
            if k == 0 {
                continue;
            }
            // Amplitude to coefficient form, times (1/√2)^k from the splitter.
            let base = (0.5f64).powi(i32::from(k)).sqrt() / factorial(u64::from(k)).sqrt();
            let mut next = Vec::with_capacity(poly.len() * (k as usize + 1));
            for &(key, c) in &poly {
                for j in 0..=k {
                    let s = if (k - j) % 2 == 1 { sign } else { 1.0 };
                    let key2 = key + (u64::from(j) << (OUT_BITS as usize * o1)) + (u64::from(k - j) << (OUT_BITS as usize * o2));
                    next.push((key2, c * base * binomial(k, j) * s));
                }
            }
            poly = next;
        }
        for (key, c) in poly {
            *acc.entry((key, late)).or_default() += amp * c;
        }
    }
    let mut out: OutPoly = acc.into_iter().map(|((k, l), c)| (k, l, c)).collect();
    out.sort_by_key(|t| (t.0, t.1));
    Ok(out)
}

/// Detector-bin counts and the `√(∏ n!)` factor turning output coefficients
/// back into amplitudes.
fn unpack_outputs(key: u64) -> ([u8; 4], f64) {
    let mut counts = [0u8; 4];
    let mut norm = 1.0;
    for m in 0..OUT_MODES {
        let n = (key >> (OUT_BITS as usize * m)) & ((1 << OUT_BITS) - 1);
        counts[m / 3] += n as u8;
        norm *= factorial(n).sqrt();
    }
    (counts, norm)
}

impl OpticalModel {
    pub fn build(optics: &Optics) -> Result<Self> {
        let max = optics.max_pairs();
        let ch = optics.channels;
        let explicit_loss = ch.transmission_b != ch.transmission_c;
        let bsm_detector = if explicit_loss {
            optics.bsm_detector
        } else {
            optics.bsm_detector.with_transmission(ch.transmission_b)
        };
        let xi = optics.bsm.overlap;
        let s1 = source_sectors(&optics.source_ab, max, Side::A, Spatial::B)?;
        let s2 = source_sectors(&optics.source_cd, max, Side::D, Spatial::C)?;
        let arms1: Vec<Vec<OutPoly>> = s1
            .iter()
            .map(|s| {
                prepare_arm(&s.branches, Spatial::B, ch.transmission_b, explicit_loss, xi)?
                    .iter()
                    .map(|b| substitute(b, Side::A))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let arms2: Vec<Vec<OutPoly>> = s2
            .iter()
            .map(|s| {
                prepare_arm(&s.branches, Spatial::C, ch.transmission_c, explicit_loss, xi)?
                    .iter()
                    .map(|b| substitute(b, Side::D))
                    .collect()
            })
            .collect::<Result<_>>()?;

        let mut sectors = Vec::new();
        for (n_ab, br1) in arms1.iter().enumerate() {
            for (n_cd, br2) in arms2.iter().enumerate() {
                let dim = (n_ab + 1) * (n_cd + 1);
                let mut blocks: BTreeMap<[u8; 4], CMatrix> = BTreeMap::new();
                for x in br1 {
                    for y in br2 {
                        // Each branch pair is one pure state; group its
                        // amplitudes by the full output occupation.
                        let mut by_config: FxHashMap<u64, CVector> = FxHashMap::default();
                        for &(kx, ia, cx) in x {
                            for &(ky, id, cy) in y {
                                let v = by_config.entry(kx + ky).or_insert_with(|| CVector::zeros(dim));
                                v[ia * (n_cd + 1) + id] += cx * cy;
                            }
                        }
                        for (key, v) in by_config {
                            let (counts, norm) = unpack_outputs(key);
                            let m = blocks.entry(counts).or_insert_with(|| CMatrix::zeros(dim, dim));
                            m.gerc(C64::from(norm * norm), &v, &v, C64::from(1.0));
                        }
                    }
                }
                let blocks: Vec<Block> = blocks.into_iter().map(|(counts, rho)| Block { counts, rho }).collect();
                let mut sector = Sector {
                    n_ab,
                    n_cd,
                    blocks,
                    swap: vec![],
                    hom: vec![],
                };
                sector.swap = aggregate(&sector.blocks, &bsm_detector, BsmReadout::Swap, optics.bsm.accept_psi_plus, dim);
                sector.hom = aggregate(&sector.blocks, &bsm_detector, BsmReadout::HomCoincidence, false, dim);
                sectors.push(sector);
            }
        }
        Ok(OpticalModel {
            optics: optics.clone(),
            bsm_detector,
            explicit_loss,
            sectors,
        })
    }

    pub fn optics(&self) -> &Optics {
        &self.optics
    }

    pub fn explicit_loss(&self) -> bool {
        self.explicit_loss
    }

    /// Sector weights for the configured `mu`; `qnd` drops every sector with
    /// more than one pair in a source.
    pub fn sector_weights(&self, qnd: bool) -> Result<SectorWeights> {
        let max = self.optics.max_pairs();
        let p1 = pair_number_weights(self.optics.source_ab.mu, self.optics.source_ab.pair_statistics, max)?;
        let p2 = pair_number_weights(self.optics.source_cd.mu, self.optics.source_cd.pair_statistics, max)?;
        Ok((0..=max)
            .map(|i| {
                (0..=max)
                    .map(|j| if qnd && (i > 1 || j > 1) { 0.0 } else { p1[i] * p2[j] })
                    .collect()
            })
            .collect())
    }

    /// Same optical states, different pair rate. Only the sector weights
    /// depend on `mu`, so the propagated states are reused.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        let mut m = self.clone();
        m.optics = m.optics.clone().with_mu(mu);
        m.optics.source_ab.validate()?;
        Ok(m)
    }

    fn side_detector(&self, side: Side) -> DetectorParams {
        let t = match side {
            Side::A => self.optics.channels.transmission_a,
            Side::D => self.optics.channels.transmission_d,
        };
        self.optics.analyzer_detector.with_transmission(t)
    }

    /// Analyzer output amplitudes for `n` photons: one row per output
    /// configuration, one column per input state `|n−i early, i late⟩`.
    fn side_outputs(side: Side, basis: AnalyzerBasis, n: usize) -> Result<Vec<([u8; 3], [u8; 3], Vec<C64>)>> {
        let modes = ModeLabel::arm_795(side).to_vec();
        let mut rows: BTreeMap<([u8; 3], [u8; 3]), Vec<C64>> = BTreeMap::new();
        for i in 0..=n {
            let input = FockState::number_state(modes.clone(), &[(n - i) as u8, i as u8])?;
            let out = analyzer(&input, side, basis)?;
            let plus: Vec<Option<usize>> = (0..3).map(|b| out.index_of(&analyzer_port(side, true, b))).collect();
            let minus: Vec<Option<usize>> = (0..3).map(|b| out.index_of(&analyzer_port(side, false, b))).collect();
            for (occ, amp) in out.terms() {
                let mut p = [0u8; 3];
                let mut m = [0u8; 3];
                for b in 0..3 {
                    p[b] = plus[b].map_or(0, |j| occ[j]);
                    m[b] = minus[b].map_or(0, |j| occ[j]);
                }
                rows.entry((p, m)).or_insert_with(|| vec![C64::default(); n + 1])[i] += amp;
            }
        }
        Ok(rows.into_iter().map(|((p, m), v)| (p, m, v)).collect())
    }

    fn side_povm(&self, side: Side, meas: SideMeasurement, n: usize) -> Result<SidePovm> {
        let basis = meas.basis();
        let det = self.side_detector(side);
        let bins = basis.bins();
        let mut e: SidePovm = std::array::from_fn(|_| CMatrix::zeros(n + 1, n + 1));
        for (p, m, v) in Self::side_outputs(side, basis, n)? {
            let dp = click_distribution(&p[..bins], &det);
            let dm = if basis.ports() == 2 {
                click_distribution(&m[..bins], &det)
            } else {
                vec![1.0]
            };
            let mut probs = [0.0; 3];
            for (mp, &pp) in dp.iter().enumerate() {
                for (mm, &pm) in dm.iter().enumerate() {
                    probs[meas.readout(mp as u8, mm as u8).index()] += pp * pm;
                }
            }
            let col = CVector::from_vec(v);
            let outer = col.conjugate() * col.transpose();
            for (o, &pr) in probs.iter().enumerate() {
                if pr > 0.0 {
                    e[o] += outer.scale(pr);
                }
            }
        }
        Ok(e)
    }

    /// Joint probabilities indexed `[bsm][readout A][readout D]` (flattened,
    /// row-major) for one pulse.
    pub fn outcome_probabilities(
        &self,
        weights: &SectorWeights,
        readout: BsmReadout,
        a: SideMeasurement,
        d: SideMeasurement,
    ) -> Result<Vec<f64>> {
        let nb = readout.outcomes();
        let mut out = vec![0.0; nb * 9];
        let mut cache_a: BTreeMap<usize, SidePovm> = BTreeMap::new();
        let mut cache_d: BTreeMap<usize, SidePovm> = BTreeMap::new();
        for s in &self.sectors {
            let w = weights[s.n_ab][s.n_cd];
            if w == 0.0 {
                continue;
            }
            if !cache_a.contains_key(&s.n_ab) {
                cache_a.insert(s.n_ab, self.side_povm(Side::A, a, s.n_ab)?);
            }
            if !cache_d.contains_key(&s.n_cd) {
                cache_d.insert(s.n_cd, self.side_povm(Side::D, d, s.n_cd)?);
            }
            let ea = &cache_a[&s.n_ab];
            let ed = &cache_d[&s.n_cd];
            let mats = match readout {
                BsmReadout::Swap => &s.swap,
                BsmReadout::HomCoincidence => &s.hom,
            };
            for oa in 0..3 {
                for od in 0..3 {
                    let joint = ea[oa].kronecker(&ed[od]);
                    for (b, rho) in mats.iter().enumerate() {
                        let p = crate::qstate::trace_of_product(rho, &joint).re;
                        out[(b * 3 + oa) * 3 + od] += w * p;
                    }
                }
            }
        }
        for p in &mut out {
            *p = p.max(0.0);
        }
        Ok(out)
    }

    /// Distribution of photon patterns at the detectors for one setting.
    pub fn pattern_distribution(
        &self,
        weights: &SectorWeights,
        a: AnalyzerBasis,
        d: AnalyzerBasis,
    ) -> Result<Vec<(PhotonPattern, f64)>> {
        let mut acc: BTreeMap<PhotonPattern, f64> = BTreeMap::new();
        let mut cache: BTreeMap<(bool, usize), Vec<([u8; 3], [u8; 3], Vec<C64>)>> = BTreeMap::new();
        for s in &self.sectors {
            let w = weights[s.n_ab][s.n_cd];
            if w == 0.0 {
                continue;
            }
            for (key, side, basis, n) in [(true, Side::A, a, s.n_ab), (false, Side::D, d, s.n_cd)] {
                if !cache.contains_key(&(key, n)) {
                    cache.insert((key, n), Self::side_outputs(side, basis, n)?);
                }
            }
            let va = &cache[&(true, s.n_ab)];
            let vd = &cache[&(false, s.n_cd)];
            for blk in &s.blocks {
                for (pa, ma, xa) in va {
                    for (pd, md, xd) in vd {
                        // ⟨out| ρ |out⟩ with out amplitudes x_a ⊗ x_d.
                        let nd = xd.len();
                        let row: Vec<C64> = xa.iter().flat_map(|&u| xd.iter().map(move |&v| u * v)).collect();
                        let mut p = C64::default();
                        for (r, &ur) in row.iter().enumerate() {
                            if ur == C64::default() {
                                continue;
                            }
                            for (c, &uc) in row.iter().enumerate() {
                                if uc == C64::default() {
                                    continue;
                                }
                                p += ur * blk.rho[(r, c)] * uc.conj();
                            }
                        }
                        debug_assert_eq!(row.len(), xa.len() * nd);
                        let p = w * p.re;
                        if p <= 0.0 {
                            continue;
                        }
                        let pat = PhotonPattern {
                            bsm: blk.counts,
                            a_plus: *pa,
                            a_minus: *ma,
                            d_plus: *pd,
                            d_minus: *md,
                        };
                        *acc.entry(pat).or_default() += p;
                    }
                }
            }
        }
        Ok(acc.into_iter().collect())
    }

    pub fn bsm_detector(&self) -> DetectorParams {
        self.bsm_detector
    }

    pub fn side_detector_params(&self, side: Side) -> DetectorParams {
        self.side_detector(side)
    }

    /// Post-selected A–D state given BSM outcome `b` in the single-pair
    /// sector, before the analyzers. Used for diagnostics and tests.
    pub fn heralded_state(&self, weights: &SectorWeights, b: BsmOutcome) -> Option<CMatrix> {
        let mut acc = CMatrix::zeros(4, 4);
        for s in &self.sectors {
            if s.n_ab == 1 && s.n_cd == 1 {
                acc += s.swap[b.index()].scale(weights[1][1]);
            }
        }
        let tr = acc.trace().re;
        (tr > 0.0).then(|| acc.unscale(tr))
    }
}

fn aggregate(blocks: &[Block], det: &DetectorParams, readout: BsmReadout, accept_psi_plus: bool, dim: usize) -> Vec<CMatrix> {
    let mut out = vec![CMatrix::zeros(dim, dim); readout.outcomes()];
    for blk in blocks {
        let probs = bsm_class_probabilities(&blk.counts, det, readout, accept_psi_plus);
        for (b, p) in probs.into_iter().enumerate() {
            if p > 0.0 {
                out[b] += blk.rho.scale(p);
            }
        }
    }
    out
}

pub fn bsm_class_probabilities(counts: &[u8; 4], det: &DetectorParams, readout: BsmReadout, accept_psi_plus: bool) -> Vec<f64> {
    let d1 = click_distribution(&counts[..2], det);
    let d2 = click_distribution(&counts[2..], det);
    let mut out = vec![0.0; readout.outcomes()];
    for (m1, &p1) in d1.iter().enumerate() {
        for (m2, &p2) in d2.iter().enumerate() {
            out[readout.classify(m1 as u8, m2 as u8, accept_psi_plus)] += p1 * p2;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::concurrence;
    use crate::qstate::{bell_state, BellKind, DensityMatrix};

    #[test]
    fn sectors_are_trace_preserving() {
        let mut o = Optics::ideal(0.1);
        o.channels.transmission_b = 0.3;
        o.channels.transmission_c = 0.6;
        o.bsm.overlap = 0.8;
        o.source_ab.state_fidelity = 0.9;
        let m = OpticalModel::build(&o).unwrap();
        assert!(m.explicit_loss());
        for s in &m.sectors {
            let tr: f64 = s.blocks.iter().map(|b| b.rho.trace().re).sum();
            assert!((tr - 1.0).abs() < 1e-9, "sector ({}, {}) trace {tr}", s.n_ab, s.n_cd);
        }
    }

    #[test]
    fn ideal_swap_heralds_psi_plus() {
        let o = Optics::ideal(0.01);
        let m = OpticalModel::build(&o).unwrap();
        let w = m.sector_weights(false).unwrap();
        let rho = m.heralded_state(&w, BsmOutcome::PsiMinus).unwrap();
        let rho = DensityMatrix::new(rho).unwrap();
        let psi = bell_state(BellKind::PsiPlus);
        assert!((crate::metrics::pure_fidelity(&rho, &psi).unwrap() - 1.0).abs() < 1e-12);
        let c = concurrence(&rho).unwrap();
        assert!((c - 1.0).abs() < 1e-6, "{c}");
    }

    #[test]
    fn folded_and_explicit_loss_agree() {
        let mut o = Optics::ideal(0.15);
        o.bsm.overlap = 0.9;
        o.source_ab.state_fidelity = 0.9;
        o.source_cd.state_fidelity = 0.9;
        o.bsm_detector.efficiency = 0.7;
        o.bsm_detector.dark_rate = 1e5;
        o.bsm_detector.window = 1e-7;
        o.channels.transmission_b = 0.4;
        o.channels.transmission_c = 0.4;
        let folded = OpticalModel::build(&o).unwrap();
        assert!(!folded.explicit_loss());
        // Nudge C by an amount far below the tolerance to force explicit Kraus loss.
        o.channels.transmission_c = 0.4 * (1.0 + 1e-12);
        let explicit = OpticalModel::build(&o).unwrap();
        assert!(explicit.explicit_loss());
        let w = folded.sector_weights(false).unwrap();
        let meas = SideMeasurement::Analyzer(AnalyzerBasis::Phase(0.7));
        let p1 = folded.outcome_probabilities(&w, BsmReadout::Swap, meas, SideMeasurement::Analyzer(AnalyzerBasis::Z)).unwrap();
        let p2 = explicit.outcome_probabilities(&w, BsmReadout::Swap, meas, SideMeasurement::Analyzer(AnalyzerBasis::Z)).unwrap();
        for (x, y) in p1.iter().zip(&p2) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut o = Optics::ideal(0.2);
        o.analyzer_detector.efficiency = 0.6;
        o.analyzer_detector.dark_rate = 1e6;
        o.analyzer_detector.window = 1e-8;
        o.analyzer_detector.misbin_prob = 0.02;
        let m = OpticalModel::build(&o).unwrap();
        let w = m.sector_weights(false).unwrap();
        for (a, d) in [(AnalyzerBasis::Z, AnalyzerBasis::Phase(1.0)), (AnalyzerBasis::Phase(2.0), AnalyzerBasis::Phase(0.0))] {
            let p = m
                .outcome_probabilities(&w, BsmReadout::Swap, SideMeasurement::Analyzer(a), SideMeasurement::Analyzer(d))
                .unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let pats = m.pattern_distribution(&w, a, d).unwrap();
            assert!((pats.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ideal_z_correlations_are_anti() {
        let o = Optics::ideal(0.001);
        let m = OpticalModel::build(&o).unwrap();
        let w = m.sector_weights(false).unwrap();
        let z = SideMeasurement::Analyzer(AnalyzerBasis::Z);
        let p = m.outcome_probabilities(&w, BsmReadout::Swap, z, z).unwrap();
        let b = BsmOutcome::PsiMinus.index();
        let at = |oa: Readout, od: Readout| p[(b * 3 + oa.index()) * 3 + od.index()];
        let anti = at(Readout::Zero, Readout::One) + at(Readout::One, Readout::Zero);
        let same = at(Readout::Zero, Readout::Zero) + at(Readout::One, Readout::One);
        assert!(anti > 0.0);
        // Same-bin coincidences need two pairs from one source: O(mu) relative.
        assert!(same / anti < 5e-3, "{same} {anti}");
    }
    #[test]
    fn substitution_matches_direct_beam_splitter() {
        use super::super::optics::bsm_interfere;
        use super::super::source::{PairStatistics, SourceNoise, SourceParams};
        let src = |phase: f64| SourceParams {
            mu: 0.2,
            phase,
            state_fidelity: 0.9,
            pair_statistics: PairStatistics::Thermal,
            noise: SourceNoise::Depolarizing,
        };
        let s1 = source_sectors(&src(0.0), 2, Side::A, Spatial::B).unwrap();
        let s2 = source_sectors(&src(std::f64::consts::PI), 2, Side::D, Spatial::C).unwrap();
        // Noise lives in the one-pair sector; the two-pair sector is one pure ket.
        let xs = prepare_arm(&s1[1].branches, Spatial::B, 1.0, false, 0.7).unwrap();
        let ys = prepare_arm(&s2[2].branches, Spatial::C, 1.0, false, 0.7).unwrap();
        let zs = prepare_arm(&s2[1].branches, Spatial::C, 1.0, false, 0.7).unwrap();
        for (x, y) in [(&xs[0], &ys[0]), (&xs[3], &ys[0]), (&xs[2], &zs[1])] {
            let direct = bsm_interfere(&x.tensor(y).unwrap()).unwrap();
            let ial = direct.require(&ModeLabel::arm_795(Side::A)[1]).unwrap();
            let idl = direct.require(&ModeLabel::arm_795(Side::D)[1]).unwrap();
            let mut want: BTreeMap<(u64, usize), C64> = BTreeMap::new();
            for (occ, &amp) in direct.terms() {
                let mut key = 0u64;
                for (i, m) in direct.modes().iter().enumerate() {
                    let port = match m.spatial {
                        Spatial::BsmOut1 => 0,
                        Spatial::BsmOut2 => 1,
                        _ => continue,
                    };
                    key += u64::from(occ[i]) << (OUT_BITS as usize * out_index(port, m.bin, m.slot).unwrap());
                }
                *want.entry((key, occ[ial] as usize * 2 + occ[idl] as usize)).or_default() += amp;
            }
            let px = substitute(x, Side::A).unwrap();
            let py = substitute(y, Side::D).unwrap();
            let mut got: BTreeMap<(u64, usize), C64> = BTreeMap::new();
            for &(kx, ia, cx) in &px {
                for &(ky, id, cy) in &py {
                    *got.entry((kx + ky, ia * 2 + id)).or_default() += cx * cy;
                }
            }
            for (k, v) in got.iter_mut() {
                *v *= unpack_outputs(k.0).1;
            }
            got.retain(|_, v| v.norm_sqr() > 1e-28);
            assert_eq!(got.len(), want.len());
            for (k, v) in &want {
                assert!((got[k] - v).norm() < 1e-12, "{k:?}");
            }
        }
    }
}
