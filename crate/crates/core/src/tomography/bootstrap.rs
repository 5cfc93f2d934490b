//! Poisson bootstrap of quantities derived from the reconstructed state.

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use super::dataset::TomographySetting;
use super::mle::{reconstruct, reconstruct_from, MleOptions};
use crate::metrics::{concurrence, nearest_werner, pure_fidelity};
use crate::qstate::{DensityMatrix, Ket};
use crate::seed::rng_for;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub enum Statistic {
    Concurrence,
    /// Fidelity with a fixed pure state.
    FidelityTo(Ket),
    WernerVisibility,
    WernerFidelity,
}

impl Statistic {
    pub fn name(&self) -> &'static str {
        match self {
            Statistic::Concurrence => "concurrence",
            Statistic::FidelityTo(_) => "fidelity",
            Statistic::WernerVisibility => "werner_v",
            Statistic::WernerFidelity => "werner_fidelity",
        }
    }
}

fn evaluate(rho: &DensityMatrix, stats: &[Statistic]) -> Result<Vec<f64>> {
    let needs_werner = stats
        .iter()
        .any(|s| matches!(s, Statistic::WernerVisibility | Statistic::WernerFidelity));
    let werner = if needs_werner { Some(nearest_werner(rho)?) } else { None };
    stats
        .iter()
        .map(|s| match s {
            Statistic::Concurrence => concurrence(rho),
            Statistic::FidelityTo(psi) => pure_fidelity(rho, psi),
            Statistic::WernerVisibility => Ok(werner.as_ref().map_or(0.0, |w| w.v)),
            Statistic::WernerFidelity => Ok(werner.as_ref().map_or(0.0, |w| w.fidelity)),
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BootstrapSummary {
    pub statistic: &'static str,
    /// Value on the original data.
    pub estimate: f64,
    pub mean: f64,
    pub std: f64,
    /// Central 95% percentile interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
    /// Resamples whose refit failed and were left out.
    pub dropped: usize,
}

/// Smallest accepted number of resamples.
pub const MIN_RESAMPLES: usize = 100;

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn resample(rows: &[TomographySetting], seed: u64, index: usize) -> Vec<TomographySetting> {
    let mut rng = rng_for(seed, &[index as u64]);
    rows.iter()
        .map(|r| {
            let counts = if r.counts == 0 {
                0
            } else {
                Poisson::new(r.counts as f64).expect("positive mean").sample(&mut rng) as u64
            };
            TomographySetting { counts, ..r.clone() }
        })
        .collect()
}

/// Redraws every count from a Poisson distribution with the observed value as
/// mean, refits, and summarizes each statistic. Resample `i` uses a seed
/// derived from `(seed, i)`, so the result does not depend on thread count.
pub fn bootstrap(
    rows: &[TomographySetting],
    stats: &[Statistic],
    n_resamples: usize,
    seed: u64,
    opts: &MleOptions,
) -> Result<Vec<BootstrapSummary>> {
    if n_resamples < MIN_RESAMPLES {
        return Err(Error::param("n_resamples", format!("need at least {MIN_RESAMPLES}, got {n_resamples}")));
    }
    if stats.is_empty() {
        return Err(Error::param("stats", "no statistic requested"));
    }
    let point = reconstruct(rows, opts)?;
    let estimate = evaluate(&point.rho, stats)?;
    // Collected in resample order, so the summary is independent of scheduling.
    let outcomes: Vec<Result<Vec<f64>>> = (0..n_resamples)
        .into_par_iter()
        .map(|i| {
            let data = resample(rows, seed, i);
            let fit = reconstruct_from(&data, &point.rho, opts)?;
            evaluate(&fit.rho, stats)
        })
        .collect();
    let samples: Vec<Vec<f64>> = outcomes.into_iter().filter_map(Result::ok).collect();
    let dropped = n_resamples - samples.len();
    if samples.is_empty() {
        return Err(Error::Degenerate("every bootstrap resample failed to reconstruct".into()));
    }
    Ok(stats
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut v: Vec<f64> = samples.iter().map(|x| x[k]).collect();
            v.sort_by(f64::total_cmp);
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = if v.len() > 1 {
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            BootstrapSummary {
                statistic: s.name(),
                estimate: estimate[k],
                mean,
                std: var.sqrt(),
                ci_low: percentile(&v, 0.025),
                ci_high: percentile(&v, 0.975),
                resamples: v.len(),
                dropped,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{bell_state, BellKind};
    use crate::tomography::dataset::from_state;

    #[test]
    fn too_few_resamples_rejected() {
        let rows = from_state(&DensityMatrix::maximally_mixed(4), 1e3).unwrap();
        for n in [0, 99] {
            let err = bootstrap(&rows, &[Statistic::Concurrence], n, 1, &MleOptions::default());
            assert!(matches!(err, Err(Error::InvalidParameter { name: "n_resamples", .. })));
        }
    }

    fn opts() -> MleOptions {
        MleOptions {
            starts: 2,
            ..MleOptions::default()
        }
    }

    #[test]
    fn spread_shrinks_with_counts_and_is_reproducible() {
        let rho = DensityMatrix::werner(0.7, &bell_state(BellKind::PsiPlus)).unwrap();
        let stats = [Statistic::Concurrence, Statistic::FidelityTo(bell_state(BellKind::PsiPlus))];
        let small = bootstrap(&from_state(&rho, 2e3).unwrap(), &stats, 100, 9, &opts()).unwrap();
        let large = bootstrap(&from_state(&rho, 2e5).unwrap(), &stats, 100, 9, &opts()).unwrap();
        for (s, l) in small.iter().zip(&large) {
            assert!(l.std < s.std, "{} {} vs {}", s.statistic, l.std, s.std);
            assert!(s.ci_low <= s.mean && s.mean <= s.ci_high);
            assert_eq!(s.dropped, 0);
        }
        // 100× the counts gives roughly 10× smaller spread.
        let ratio = small[0].std / large[0].std;
        assert!((5.0..20.0).contains(&ratio), "{ratio}");
        // Werner v = 0.7 gives C = (3v − 1)/2 = 0.55.
        assert!((large[0].estimate - 0.55).abs() < 0.01);
        let again = bootstrap(&from_state(&rho, 2e3).unwrap(), &stats, 100, 9, &opts()).unwrap();
        assert_eq!(again[0].std.to_bits(), small[0].std.to_bits());
    }

    #[test]
    fn high_count_bell_state_has_small_spread() {
        let psi = bell_state(BellKind::PsiPlus);
        let rows = from_state(&psi.projector(), 1e6).unwrap();
        let out = bootstrap(&rows, &[Statistic::Concurrence], 100, 3, &opts()).unwrap();
        assert!(out[0].std < 0.01, "{}", out[0].std);
    }

    #[test]
    fn mean_converges_to_point_estimate() {
        let rho = DensityMatrix::werner(0.6, &bell_state(BellKind::PsiPlus)).unwrap();
        let rows = from_state(&rho, 1e7).unwrap();
        let stats = [Statistic::Concurrence, Statistic::WernerVisibility, Statistic::WernerFidelity];
        let out = bootstrap(&rows, &stats, 100, 5, &opts()).unwrap();
        for s in &out {
            assert!((s.mean - s.estimate).abs() < 0.005, "{}: {} vs {}", s.statistic, s.mean, s.estimate);
        }
        assert!((out[1].estimate - 0.6).abs() < 1e-3);
    }
}
