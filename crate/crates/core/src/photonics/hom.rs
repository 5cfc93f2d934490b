//! Two-photon interference at the BSM beam splitter.

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::config::Optics;
use super::detector::Readout;
use super::model::{BsmReadout, OpticalModel, SideMeasurement};
use crate::seed::rng_for;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomResult {
    pub visibility: f64,
    pub sigma: f64,
    pub n_max: u64,
    pub n_min: u64,
    /// Exact per-pulse coincidence probabilities behind the counts.
    pub p_max: f64,
    pub p_min: f64,
    pub pulses: u64,
    pub overlap: f64,
    pub conditioned: bool,
}

/// `1/√(1 + (ΔT/τ)²)` for pump duration ΔT and coherence time τ.
pub fn hom_visibility_bound(pump_duration: f64, coherence_time: f64) -> Result<f64> {
    if !(coherence_time > 0.0) {
        return Err(Error::param("coherence_time", "must be positive"));
    }
    if !(pump_duration >= 0.0) {
        return Err(Error::param("pump_duration", "must be nonnegative"));
    }
    let r = pump_duration / coherence_time;
    Ok(1.0 / (1.0 + r * r).sqrt())
}

/// Per-pulse probability of a same-bin coincidence across the two BSM
/// ports; `conditioned` also requires a click on both 795 nm detectors.
pub fn hom_coincidence_probability(optics: &Optics, overlap: f64, conditioned: bool) -> Result<f64> {
    let model = OpticalModel::build(&optics.clone().with_overlap(overlap))?;
    coincidence_from_model(&model, conditioned)
}

fn coincidence_from_model(model: &OpticalModel, conditioned: bool) -> Result<f64> {
    let w = model.sector_weights(false)?;
    let p = model.outcome_probabilities(&w, BsmReadout::HomCoincidence, SideMeasurement::AnyClick, SideMeasurement::AnyClick)?;
    // Outcome 0 of the HOM readout is a coincidence.
    Ok(if conditioned {
        p[Readout::Zero.index() * 3 + Readout::Zero.index()]
    } else {
        p[..9].iter().sum()
    })
}

/// Visibility `1 − N_min/N_max` from coincidences with fully
/// distinguishable photons (`N_max`) and with amplitude overlap `overlap`.
pub fn run_hom(optics: &Optics, overlap: f64, pulses: u64, seed: u64, conditioned: bool) -> Result<HomResult> {
    Ok(run_hom_seeds(optics, overlap, pulses, &[seed], conditioned)?.remove(0))
}

/// [`run_hom`] for several seeds; the optical model is built once.
pub fn run_hom_seeds(optics: &Optics, overlap: f64, pulses: u64, seeds: &[u64], conditioned: bool) -> Result<Vec<HomResult>> {
    if pulses == 0 {
        return Err(Error::param("pulses", "must be positive"));
    }
    if seeds.is_empty() {
        return Err(Error::param("seeds", "at least one seed"));
    }
    let p_max = hom_coincidence_probability(optics, 0.0, conditioned)?;
    let p_min = hom_coincidence_probability(optics, overlap, conditioned)?;
    seeds
        .iter()
        .map(|&seed| {
            let draw = |p: f64, k: u64| -> Result<u64> {
                Ok(Binomial::new(pulses, p.clamp(0.0, 1.0))
                    .map_err(|e| Error::param("probability", e.to_string()))?
                    .sample(&mut rng_for(seed, &[k])))
            };
            let n_max = draw(p_max, 0)?;
            let n_min = draw(p_min, 1)?;
            if n_max == 0 {
                return Err(Error::Degenerate("no coincidences with distinguishable photons; raise pulses".into()));
            }
            let (a, b) = (n_min as f64, n_max as f64);
            let sigma = if n_min == 0 {
                1.0 / b
            } else {
                a / b * (1.0 / a + 1.0 / b).sqrt()
            };
            Ok(HomResult {
                visibility: 1.0 - a / b,
                sigma,
                n_max,
                n_min,
                p_max,
                p_min,
                pulses,
                overlap,
                conditioned,
            })
        })
        .collect()
}

/// Coincidence probability on a grid of overlaps from 0 to `overlap_max`.
pub fn hom_curve(optics: &Optics, overlap_max: f64, points: usize, conditioned: bool) -> Result<Vec<(f64, f64)>> {
    if points < 2 {
        return Err(Error::param("points", "at least 2"));
    }
    (0..points)
        .map(|k| {
            let x = overlap_max * k as f64 / (points - 1) as f64;
            Ok((x, hom_coincidence_probability(optics, x, conditioned)?))
        })
        .collect()
}

/// Exact (noise-free) conditioned visibility of `optics` at `overlap`.
pub fn expected_visibility(optics: &Optics, overlap: f64, conditioned: bool) -> Result<f64> {
    let p_max = hom_coincidence_probability(optics, 0.0, conditioned)?;
    let p_min = hom_coincidence_probability(optics, overlap, conditioned)?;
    if p_max <= 0.0 {
        return Err(Error::Degenerate("no coincidences with distinguishable photons".into()));
    }
    Ok(1.0 - p_min / p_max)
}

/// Overlap whose exact conditioned visibility equals `target`, by bisection.
pub fn calibrate_overlap(optics: &Optics, target: f64, tol: f64) -> Result<f64> {
    let v1 = expected_visibility(optics, 1.0, true)?;
    if !(0.0..=v1).contains(&target) {
        return Err(Error::param("target", format!("{target} outside reachable [0, {v1:.4}]")));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if expected_visibility(optics, mid, true)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
