//! Sinusoidal fit of coincidence counts against analyzer phase difference.
//!
//! Model: `N(Δ) = B·(1 + V·cos(Δ/q − φ))`, where `q` is the period in units of
//! 2π. Points are weighted by their Poisson variance, `1/max(N, 1)`, and the
//! reported uncertainties come from the inverse weighted normal matrix.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::qstate::wrap_phase;
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct VisibilityFit {
    pub visibility: f64,
    pub visibility_err: f64,
    /// Radians, wrapped to [0, 2π).
    pub phase_offset: f64,
    pub phase_offset_err: f64,
    /// In units of 2π.
    pub period: f64,
    pub period_err: f64,
    pub baseline: f64,
    pub baseline_err: f64,
    pub period_fixed: bool,
    /// Observed minus fitted counts, in input order.
    pub residuals: Vec<f64>,
    pub chi2: f64,
    pub iterations: usize,
}

struct Data<'a> {
    x: &'a [f64],
    y: Vec<f64>,
    w: Vec<f64>,
}

fn model(p: &[f64; 4], x: f64) -> f64 {
    let [b, v, phi, q] = *p;
    b * (1.0 + v * (x / q - phi).cos())
}

fn chi2(d: &Data, p: &[f64; 4]) -> f64 {
    d.x.iter()
        .zip(&d.y)
        .zip(&d.w)
        .map(|((&x, &y), &w)| w * (y - model(p, x)).powi(2))
        .sum()
}

/// Columns: ∂/∂B, ∂/∂V, ∂/∂φ and, when free, ∂/∂q.
fn jacobian(d: &Data, p: &[f64; 4], free: usize) -> DMatrix<f64> {
    let [b, v, phi, q] = *p;
    DMatrix::from_fn(d.x.len(), free, |i, k| {
        let x = d.x[i];
        let arg = x / q - phi;
        match k {
            0 => 1.0 + v * arg.cos(),
            1 => b * arg.cos(),
            2 => b * v * arg.sin(),
            _ => b * v * arg.sin() * x / (q * q),
        }
    })
}

/// Weighted linear fit of `a + c·cos(x/q) + s·sin(x/q)`; returns parameters
/// and the weighted residual.
fn linear_seed(d: &Data, q: f64) -> Option<([f64; 4], f64)> {
    let n = d.x.len();
    let a = DMatrix::from_fn(n, 3, |i, k| {
        let t = d.x[i] / q;
        let f = [1.0, t.cos(), t.sin()][k];
        f * d.w[i].sqrt()
    });
    let rhs = DVector::from_iterator(n, d.y.iter().zip(&d.w).map(|(y, w)| y * w.sqrt()));
    let sol = (a.transpose() * &a).lu().solve(&(a.transpose() * rhs))?;
    let (base, c, s) = (sol[0], sol[1], sol[2]);
    if base <= 0.0 {
        return None;
    }
    let p = [base, c.hypot(s) / base, s.atan2(c), q];
    Some((p, chi2(d, &p)))
}

fn validate(points: &[(f64, f64)], q: f64) -> Result<()> {
    if points.len() < 5 {
        return Err(Error::Degenerate(format!("need at least 5 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite() || y < 0.0) {
        return Err(Error::Degenerate("phases must be finite and counts nonnegative".into()));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < PI * q {
        return Err(Error::Degenerate(format!("phase span {:.3} rad is below half a period", hi - lo)));
    }
    if points.iter().all(|p| p.1 == 0.0) {
        return Err(Error::Degenerate("all counts are zero".into()));
    }
    Ok(())
}

pub fn fit_visibility(points: &[(f64, f64)], fix_period: bool) -> Result<VisibilityFit> {
    validate(points, 1.0)?;
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let d = Data {
        x: &x,
        y: points.iter().map(|p| p.1).collect(),
        w: points.iter().map(|p| 1.0 / p.1.max(1.0)).collect(),
    };
    let free = if fix_period { 3 } else { 4 };

    // Seed: exact linear solve at q = 1, or the best q on a grid.
    let grid: Vec<f64> = if fix_period {
        vec![1.0]
    } else {
        (0..=300).map(|k| 0.5 + 0.005 * k as f64).collect()
    };
    let (mut p, mut cost) = grid
        .iter()
        .filter_map(|&q| linear_seed(&d, q))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Degenerate("no sinusoid fits the data".into()))?;

    // Levenberg–Marquardt refinement.
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for it in 1..=500 {
        iterations = it;
        let j = jacobian(&d, &p, free);
        let r = DVector::from_iterator(x.len(), x.iter().zip(&d.y).map(|(&xi, &yi)| yi - model(&p, xi)));
        let wj = DMatrix::from_fn(x.len(), free, |i, k| j[(i, k)] * d.w[i]);
        let jtj = j.transpose() * &wj;
        let jtr = wj.transpose() * &r;
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for k in 0..free {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for k in 0..free {
                trial[k] += step[k];
            }
            let c = chi2(&d, &trial);
            if c <= cost {
                let rel = (cost - c) / cost.max(1e-300);
                let small_step = step.norm() < 1e-13 * (1.0 + p.iter().map(|v| v.abs()).sum::<f64>());
                p = trial;
                cost = c;
                lambda = (lambda * 0.1).max(1e-12);
                improved = !(rel < 1e-15 || small_step);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }

    if p[1] < 0.0 {
        p[1] = -p[1];
        p[2] += PI;
    }
    let j = jacobian(&d, &p, free);
    let wj = DMatrix::from_fn(x.len(), free, |i, k| j[(i, k)] * d.w[i]);
    let cov = (j.transpose() * wj)
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular normal matrix at the optimum".into()))?;
    let err = |k: usize| if k < free { cov[(k, k)].max(0.0).sqrt() } else { 0.0 };
    Ok(VisibilityFit {
        visibility: p[1],
        visibility_err: err(1),
        phase_offset: wrap_phase(p[2]),
        phase_offset_err: err(2),
        period: p[3],
        period_err: err(3),
        baseline: p[0],
        baseline_err: err(0),
        period_fixed: fix_period,
        residuals: x.iter().zip(&d.y).map(|(&xi, &yi)| yi - model(&p, xi)).collect(),
        chi2: cost,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Poisson};

    fn sinusoid(n: usize, b: f64, v: f64, phi: f64, q: f64) -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let x = 2.0 * PI * k as f64 / n as f64;
                (x, b * (1.0 + v * (x / q - phi).cos()))
            })
            .collect()
    }

    fn phase_diff(a: f64, b: f64) -> f64 {
        let d = wrap_phase(a - b);
        d.min(2.0 * PI - d)
    }

    #[test]
    fn noiseless_fixed_period() {
        let f = fit_visibility(&sinusoid(12, 100.0, 0.5, 0.3, 1.0), true).unwrap();
        assert!((f.visibility - 0.5).abs() < 1e-6, "{}", f.visibility);
        assert!((f.baseline - 100.0).abs() < 1e-6);
        assert!(phase_diff(f.phase_offset, 0.3) < 1e-6);
        assert!(f.residuals.iter().all(|r| r.abs() < 1e-6));
        assert_eq!(f.period, 1.0);
    }

    #[test]
    fn noiseless_free_period() {
        let f = fit_visibility(&sinusoid(16, 50.0, 0.7, 1.0, 0.96), false).unwrap();
        assert!((f.period - 0.96).abs() < 1e-6, "{}", f.period);
        assert!((f.visibility - 0.7).abs() < 1e-6);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(fit_visibility(&sinusoid(4, 10.0, 0.5, 0.0, 1.0), true).is_err());
        let narrow: Vec<(f64, f64)> = (0..8).map(|k| (0.3 * k as f64, 10.0 + k as f64)).collect();
        assert!(fit_visibility(&narrow, true).is_err());
        let zeros: Vec<(f64, f64)> = (0..8).map(|k| (k as f64, 0.0)).collect();
        assert!(fit_visibility(&zeros, true).is_err());
    }

    fn noisy(seed: u64, v: f64, b: f64) -> Vec<(f64, f64)> {
        let mut rng = rng_for(seed, &[]);
        sinusoid(16, b, v, 0.0, 1.0)
            .into_iter()
            .map(|(x, m)| (x, Poisson::new(m).unwrap().sample(&mut rng)))
            .collect()
    }

    #[test]
    fn uncertainty_covers_truth() {
        // Counts comparable to a long four-fold scan: tens per point.
        let v_true = 0.562;
        let seeds = 200;
        let covered = (0..seeds)
            .filter(|&s| {
                let f = fit_visibility(&noisy(s, v_true, 40.0), true).unwrap();
                (f.visibility - v_true).abs() <= 2.0 * f.visibility_err
            })
            .count();
        assert!(covered as f64 >= 0.9 * seeds as f64, "{covered}/{seeds}");
    }

    #[test]
    fn free_period_refit_of_fixed_period_data() {
        let within = (0..50)
            .filter(|&s| {
                let f = fit_visibility(&noisy(1000 + s, 0.562, 4000.0), false).unwrap();
                (f.period - 1.0).abs() < 0.03
            })
            .count();
        assert!(within >= 45, "{within}/50");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn global_phase_shift_moves_offset_only(delta in -3.0f64..3.0, seed in 0u64..100) {
            let pts = noisy(seed, 0.5, 200.0);
            let shifted: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x + delta, y)).collect();
            let a = fit_visibility(&pts, true).unwrap();
            let b = fit_visibility(&shifted, true).unwrap();
            prop_assert!((a.visibility - b.visibility).abs() < 1e-9);
            prop_assert!(phase_diff(b.phase_offset, a.phase_offset + delta) < 1e-9);
        }
    }
}
