//! The swapping experiment: analyzer settings, counting runs and records.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EngineKind, Optics};
use super::detector::{analyzer_readout, bsm_classify, sample_clicks, BsmOutcome, Readout};
use super::mode::Side;
use super::model::{BsmReadout, OpticalModel, PhotonPattern, SectorWeights, SideMeasurement};
use super::optics::AnalyzerBasis;
use crate::seed::rng_for;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSetting {
    pub a: AnalyzerBasis,
    pub d: AnalyzerBasis,
}

impl AnalyzerSetting {
    pub fn new(a: AnalyzerBasis, d: AnalyzerBasis) -> Result<Self> {
        a.validate()?;
        d.validate()?;
        Ok(AnalyzerSetting { a, d })
    }
}

/// σX, σY, σZ per side: Phase(0), Phase(π/2) and arrival time.
pub const TOMOGRAPHY_BASES: [AnalyzerBasis; 3] = [AnalyzerBasis::Phase(0.0), AnalyzerBasis::Phase(FRAC_PI_2), AnalyzerBasis::Z];

pub fn tomography_settings() -> Vec<AnalyzerSetting> {
    TOMOGRAPHY_BASES
        .iter()
        .flat_map(|&a| TOMOGRAPHY_BASES.iter().map(move |&d| AnalyzerSetting { a, d }))
        .collect()
}

/// Phase scan with `β = 0` and `α` stepping over one period.
pub fn scan_settings(points: usize) -> Vec<AnalyzerSetting> {
    (0..points)
        .map(|k| AnalyzerSetting {
            a: AnalyzerBasis::Phase(TAU * k as f64 / points as f64),
            d: AnalyzerBasis::Phase(0.0),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCount {
    pub bsm: BsmOutcome,
    pub a: Readout,
    pub d: Readout,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceRecord {
    pub setting: AnalyzerSetting,
    pub pulses: u64,
    /// All 27 joint outcomes; they sum to `pulses`.
    pub counts: Vec<OutcomeCount>,
}

fn outcome_index(b: usize, a: usize, d: usize) -> usize {
    (b * 3 + a) * 3 + d
}

impl CoincidenceRecord {
    fn from_flat(setting: AnalyzerSetting, pulses: u64, flat: &[u64]) -> Self {
        let mut counts = Vec::with_capacity(27);
        for b in BsmOutcome::ALL {
            for a in Readout::ALL {
                for d in Readout::ALL {
                    counts.push(OutcomeCount {
                        bsm: b,
                        a,
                        d,
                        count: flat[outcome_index(b.index(), a.index(), d.index())],
                    });
                }
            }
        }
        CoincidenceRecord { setting, pulses, counts }
    }

    pub fn count(&self, b: BsmOutcome, a: Readout, d: Readout) -> u64 {
        self.counts
            .iter()
            .find(|c| c.bsm == b && c.a == a && c.d == d)
            .map_or(0, |c| c.count)
    }

    /// Fourfold events heralding Ψ+ between A and D. A Ψ+ BSM outcome differs
    /// by a σZ on one side, so its D readout is flipped in the phase bases.
    pub fn heralded(&self, a: Readout, d: Readout, accept_psi_plus: bool) -> u64 {
        let mut n = self.count(BsmOutcome::PsiMinus, a, d);
        if accept_psi_plus {
            let dd = match self.setting.d {
                AnalyzerBasis::Z => d,
                AnalyzerBasis::Phase(_) => d.flipped(),
            };
            n += self.count(BsmOutcome::PsiPlus, a, dd);
        }
        n
    }
}

/// Multinomial draw via sequential binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    let mut out = vec![0u64; probs.len()];
    let mut left = n;
    let mut mass: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = left;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = Binomial::new(left, q)
            .map_err(|e| Error::param("probability", e.to_string()))?
            .sample(rng);
        out[i] = k;
        left -= k;
        mass -= p;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub pulses: u64,
    pub seed: u64,
    pub engine: EngineKind,
    pub workers: usize,
    /// Drop multi-pair emissions before the BSM.
    pub qnd: bool,
}

impl RunOptions {
    pub fn new(pulses: u64, seed: u64) -> Self {
        RunOptions {
            pulses,
            seed,
            engine: EngineKind::Aggregate,
            workers: 1,
            qnd: false,
        }
    }
}

/// A click at one detector bin, for trace output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickEvent {
    pub pulse: u64,
    pub detector: &'static str,
    pub bin: u8,
}

pub struct SwapSimulator {
    model: OpticalModel,
}

struct PulseSampler<'a> {
    model: &'a OpticalModel,
    setting: AnalyzerSetting,
    patterns: Vec<PhotonPattern>,
    alias: WeightedAliasIndex<f64>,
}

impl PulseSampler<'_> {
    fn pulse<R: Rng>(&self, rng: &mut R, mut trace: Option<&mut dyn FnMut(&'static str, u8)>) -> usize {
        let pat = &self.patterns[self.alias.sample(rng)];
        let bd = self.model.bsm_detector();
        let m1 = sample_clicks(&pat.bsm[..2], &bd, rng);
        let m2 = sample_clicks(&pat.bsm[2..], &bd, rng);
        let b = bsm_classify(m1, m2, self.model.optics().bsm.accept_psi_plus);
        let mut side = |s: Side, basis: AnalyzerBasis, plus: &[u8; 3], minus: &[u8; 3]| {
            let det = self.model.side_detector_params(s);
            let bins = basis.bins();
            let p = sample_clicks(&plus[..bins], &det, rng);
            let m = if basis.ports() == 2 { sample_clicks(&minus[..bins], &det, rng) } else { 0 };
            (analyzer_readout(basis, p, m), p, m)
        };
        let (ra, pa, ma) = side(Side::A, self.setting.a, &pat.a_plus, &pat.a_minus);
        let (rd, pd, md) = side(Side::D, self.setting.d, &pat.d_plus, &pat.d_minus);
        if let Some(t) = trace.as_mut() {
            for (name, mask) in [("bsm1", m1), ("bsm2", m2), ("a_plus", pa), ("a_minus", ma), ("d_plus", pd), ("d_minus", md)] {
                for bin in 0..3u8 {
                    if mask & (1 << bin) != 0 {
                        t(name, bin);
                    }
                }
            }
        }
        outcome_index(b.index(), ra.index(), rd.index())
    }
}

impl SwapSimulator {
    pub fn new(optics: &Optics) -> Result<Self> {
        Ok(SwapSimulator {
            model: OpticalModel::build(optics)?,
        })
    }

    pub fn model(&self) -> &OpticalModel {
        &self.model
    }

    pub fn optics(&self) -> &Optics {
        self.model.optics()
    }

    /// Same bench at a different pair rate, reusing the propagated states.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Ok(SwapSimulator {
            model: self.model.with_mu(mu)?,
        })
    }

    pub fn weights(&self, qnd: bool) -> Result<SectorWeights> {
        self.model.sector_weights(qnd)
    }

    /// Exact per-pulse probabilities of the 27 joint outcomes.
    pub fn exact(&self, setting: &AnalyzerSetting, qnd: bool) -> Result<Vec<f64>> {
        setting.a.validate()?;
        setting.d.validate()?;
        self.model.outcome_probabilities(
            &self.weights(qnd)?,
            BsmReadout::Swap,
            SideMeasurement::Analyzer(setting.a),
            SideMeasurement::Analyzer(setting.d),
        )
    }

    fn sampler(&self, setting: &AnalyzerSetting, qnd: bool) -> Result<PulseSampler<'_>> {
        let dist = self.model.pattern_distribution(&self.weights(qnd)?, setting.a, setting.d)?;
        let (patterns, w): (Vec<_>, Vec<_>) = dist.into_iter().unzip();
        let alias = WeightedAliasIndex::new(w).map_err(|e| Error::Degenerate(e.to_string()))?;
        Ok(PulseSampler {
            model: &self.model,
            setting: *setting,
            patterns,
            alias,
        })
    }

    pub fn run(&self, settings: &[AnalyzerSetting], opts: &RunOptions) -> Result<Vec<CoincidenceRecord>> {
        if settings.is_empty() {
            return Err(Error::param("settings", "at least one analyzer setting is required"));
        }
        if opts.pulses == 0 {
            return Err(Error::param("pulses", "must be positive"));
        }
        if opts.workers == 0 {
            return Err(Error::param("workers", "must be positive"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::param("workers", e.to_string()))?;
        let w = opts.workers as u64;
        let shards: Vec<(u64, u64)> = (0..w)
            .map(|s| (s, opts.pulses / w + u64::from(s < opts.pulses % w)))
            .filter(|&(_, n)| n > 0)
            .collect();
        settings
            .iter()
            .enumerate()
            .map(|(i, setting)| {
                let flat: Vec<u64> = match opts.engine {
                    EngineKind::Aggregate => {
                        let probs = self.exact(setting, opts.qnd)?;
                        let parts: Vec<Result<Vec<u64>>> = pool.install(|| {
                            shards
                                .par_iter()
                                .map(|&(s, n)| sample_multinomial(n, &probs, &mut rng_for(opts.seed, &[i as u64, s])))
                                .collect()
                        });
                        sum_parts(parts)?
                    }
                    EngineKind::PerPulse => {
                        let sampler = self.sampler(setting, opts.qnd)?;
                        let parts: Vec<Result<Vec<u64>>> = pool.install(|| {
                            shards
                                .par_iter()
                                .map(|&(s, n)| {
                                    let mut rng = rng_for(opts.seed, &[i as u64, s]);
                                    let mut c = vec![0u64; 27];
                                    for _ in 0..n {
                                        c[sampler.pulse(&mut rng, None)] += 1;
                                    }
                                    Ok(c)
                                })
                                .collect()
                        });
                        sum_parts(parts)?
                    }
                };
                Ok(CoincidenceRecord::from_flat(*setting, opts.pulses, &flat))
            })
            .collect()
    }

    /// Single-shard pulse-by-pulse run reporting every click. Counts equal a
    /// one-worker per-pulse run of the same setting index and seed.
    pub fn run_traced<F>(&self, setting_index: usize, setting: &AnalyzerSetting, opts: &RunOptions, mut sink: F) -> Result<CoincidenceRecord>
    where
        F: FnMut(ClickEvent) -> Result<()>,
    {
        let sampler = self.sampler(setting, opts.qnd)?;
        let mut rng = rng_for(opts.seed, &[setting_index as u64, 0]);
        let mut c = vec![0u64; 27];
        let mut err = None;
        for pulse in 0..opts.pulses {
            let mut cb = |detector: &'static str, bin: u8| {
                if err.is_none() {
                    if let Err(e) = sink(ClickEvent { pulse, detector, bin }) {
                        err = Some(e);
                    }
                }
            };
            c[sampler.pulse(&mut rng, Some(&mut cb))] += 1;
            if let Some(e) = err.take() {
                return Err(e);
            }
        }
        Ok(CoincidenceRecord::from_flat(*setting, opts.pulses, &c))
    }
}

fn sum_parts(parts: Vec<Result<Vec<u64>>>) -> Result<Vec<u64>> {
    let mut total = vec![0u64; 27];
    for p in parts {
        for (t, x) in total.iter_mut().zip(p?) {
            *t += x;
        }
    }
    Ok(total)
}

pub fn run_swap(optics: &Optics, settings: &[AnalyzerSetting], opts: &RunOptions) -> Result<Vec<CoincidenceRecord>> {
    SwapSimulator::new(optics)?.run(settings, opts)
}
