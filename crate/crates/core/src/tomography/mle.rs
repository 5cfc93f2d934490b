//! Maximum-likelihood two-qubit state reconstruction.
//!
//! The state is parametrized as `ρ = T†T / tr(T†T)` with `T` lower triangular
//! and a real diagonal, so every iterate is a valid density matrix. Counts are
//! Poissonian with an unknown common rate; profiling the rate out gives
//!
//! `L(ρ) = Σ_j n_j ln p_j − N ln Σ_j s_j p_j`,  `p_j = tr(ρ Π_j)`,
//!
//! where `s_j` is the row sensitivity ([`TomographySetting::scale`]). The
//! objective is maximized by L-BFGS from several deterministic starts.

use std::collections::VecDeque;

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::dataset::TomographySetting;
use crate::qstate::{c64, CMatrix, CVector, DensityMatrix, Tensor};
use crate::seed::rng_for;
use crate::{Error, Result};

const DIM: usize = 4;
const NPARAM: usize = DIM * DIM;
/// Seed for the random starting points; fixed so fits are reproducible.
const START_SEED: u64 = 0x6d6c_6500;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MleOptions {
    /// Stop once an iteration improves the log-likelihood by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Number of starting points; the first is the maximally mixed state.
    pub starts: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            tolerance: 1e-9,
            max_iterations: 100_000,
            starts: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MleResult {
    #[serde(skip)]
    pub rho: DensityMatrix,
    /// Profile Poisson log-likelihood (without the `ln n!` constant).
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Starts that reached the best likelihood within 1e-6.
    pub starts_agreeing: usize,
}

/// Rows reduced to what the likelihood needs.
struct Problem {
    vecs: Vec<CVector>,
    counts: Vec<f64>,
    scales: Vec<f64>,
    total: f64,
}

impl Problem {
    fn new(rows: &[TomographySetting]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyData);
        }
        let mut vecs = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if !(r.exposure > 0.0) || !r.exposure.is_finite() {
                return Err(Error::param("exposure", format!("row {i}: must be positive and finite")));
            }
            vecs.push(r.projector_a.ket().tensor(&r.projector_d.ket()).amplitudes().clone());
        }
        let counts: Vec<f64> = rows.iter().map(|r| r.counts as f64).collect();
        let total: f64 = counts.iter().sum();
        if total == 0.0 {
            return Err(Error::EmptyData);
        }
        Ok(Problem {
            vecs,
            counts,
            scales: rows.iter().map(TomographySetting::scale).collect(),
            total,
        })
    }

    fn probs(&self, a: &CMatrix) -> Vec<f64> {
        self.vecs.iter().map(|v| (v.adjoint() * a * v)[(0, 0)].re).collect()
    }

    /// Objective in terms of the unnormalized `A = T†T`; scale invariant.
    fn objective(&self, a: &CMatrix) -> f64 {
        let p = self.probs(a);
        let mut f = 0.0;
        let mut norm = 0.0;
        for ((&n, &s), &pj) in self.counts.iter().zip(&self.scales).zip(&p) {
            norm += s * pj;
            if n > 0.0 {
                if pj <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                f += n * pj.ln();
            }
        }
        f - self.total * norm.ln()
    }

    /// Gradient of the objective with respect to `A` (Hermitian).
    fn gradient_a(&self, a: &CMatrix) -> CMatrix {
        let p = self.probs(a);
        let norm: f64 = self.scales.iter().zip(&p).map(|(s, pj)| s * pj).sum();
        let mut g = CMatrix::zeros(DIM, DIM);
        for ((v, (&n, &s)), &pj) in self.vecs.iter().zip(self.counts.iter().zip(&self.scales)).zip(&p) {
            let mut c = -self.total * s / norm;
            if n > 0.0 {
                c += n / pj;
            }
            g.gerc(c64(c, 0.0), v, v, c64(1.0, 0.0));
        }
        g
    }

    /// Full log-likelihood with the rate at its profile optimum.
    fn log_likelihood(&self, rho: &CMatrix) -> f64 {
        let p = self.probs(rho);
        let norm: f64 = self.scales.iter().zip(&p).map(|(s, pj)| s * pj).sum();
        let rate = self.total / norm;
        self.counts
            .iter()
            .zip(&self.scales)
            .zip(&p)
            .map(|((&n, &s), &pj)| {
                let lambda = rate * s * pj;
                let t = if n > 0.0 { n * lambda.ln() } else { 0.0 };
                t - lambda
            })
            .sum()
    }
}

/// Lower-triangular `T` from 16 reals: the diagonal first, then real and
/// imaginary parts of the strictly lower entries row by row.
fn unpack(x: &[f64]) -> CMatrix {
    let mut t = CMatrix::zeros(DIM, DIM);
    for i in 0..DIM {
        t[(i, i)] = c64(x[i], 0.0);
    }
    let mut k = DIM;
    for r in 1..DIM {
        for c in 0..r {
            t[(r, c)] = c64(x[k], x[k + 1]);
            k += 2;
        }
    }
    t
}

fn pack(t: &CMatrix) -> Vec<f64> {
    let mut x = Vec::with_capacity(NPARAM);
    for i in 0..DIM {
        x.push(t[(i, i)].re);
    }
    for r in 1..DIM {
        for c in 0..r {
            x.push(t[(r, c)].re);
            x.push(t[(r, c)].im);
        }
    }
    x
}

/// Negated objective plus `(tr A − 1)²`, which pins the otherwise free scale
/// without moving the optimum in `ρ`; returns value and gradient in `x`.
fn cost(problem: &Problem, x: &[f64]) -> (f64, Vec<f64>) {
    let t = unpack(x);
    let a = t.adjoint() * &t;
    let f = problem.objective(&a);
    if !f.is_finite() {
        return (f64::INFINITY, vec![0.0; NPARAM]);
    }
    let tr = a.trace().re;
    let mut g = problem.gradient_a(&a);
    for i in 0..DIM {
        g[(i, i)] -= c64(2.0 * (tr - 1.0), 0.0);
    }
    // dF = 2 Re Σ conj((T G)_kl) dT_kl.
    let tg = (&t * &g).scale(2.0);
    let grad = pack(&tg).into_iter().map(|v| -v).collect();
    (-f + (tr - 1.0).powi(2), grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Optimum {
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// L-BFGS with Armijo backtracking.
fn lbfgs(problem: &Problem, x0: Vec<f64>, opts: &MleOptions) -> Optimum {
    const MEMORY: usize = 8;
    let mut x = x0;
    let (mut fx, mut gx) = cost(problem, &x);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut quiet = 0;
    for it in 1..=opts.max_iterations {
        // Two-loop recursion for d = −H g.
        let mut q = gx.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut d: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&gx, &d);
        if slope >= 0.0 {
            hist.clear();
            d = gx.iter().map(|v| -v).collect();
            slope = dot(&gx, &d);
        }
        let mut step = if hist.is_empty() {
            (1.0 / dot(&gx, &gx).sqrt()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let (fn_, gn) = cost(problem, &xn);
            if fn_ <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // No descent possible at machine precision: stationary.
            return Optimum { x, iterations: it, converged: true };
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 {
            if hist.len() == MEMORY {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let improvement = fx - fn_;
        x = xn;
        fx = fn_;
        gx = gn;
        // Two quiet iterations in a row, so a single short step is not
        // mistaken for convergence.
        quiet = if improvement < opts.tolerance { quiet + 1 } else { 0 };
        if quiet >= 2 {
            return Optimum { x, iterations: it, converged: true };
        }
    }
    Optimum {
        x,
        iterations: opts.max_iterations,
        converged: false,
    }
}

fn rho_from(x: &[f64]) -> Result<DensityMatrix> {
    let t = unpack(x);
    DensityMatrix::from_unnormalized(t.adjoint() * &t)
}

fn starting_points(n: usize) -> Vec<Vec<f64>> {
    let base = pack(&CMatrix::identity(DIM, DIM).scale(0.5));
    (0..n.max(1))
        .map(|k| {
            if k == 0 {
                return base.clone();
            }
            let mut rng = rng_for(START_SEED, &[k as u64]);
            base.iter()
                .map(|&b| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    b + 0.3 * z
                })
                .collect()
        })
        .collect()
}

/// Lower-triangular `T` with `T†T = ρ + εI`, used to warm-start a fit.
fn factor(rho: &DensityMatrix) -> Result<Vec<f64>> {
    // Reversing the basis turns the usual A = L L† into A = T†T.
    let n = DIM;
    let m = rho.matrix() + CMatrix::identity(n, n).scale(1e-6);
    let rev = CMatrix::from_fn(n, n, |i, j| m[(n - 1 - i, n - 1 - j)]);
    let l = nalgebra::Cholesky::new(rev)
        .ok_or_else(|| Error::NotPsd(0.0))?
        .unpack();
    let t = CMatrix::from_fn(n, n, |i, j| l[(n - 1 - j, n - 1 - i)].conj());
    Ok(pack(&t))
}

fn finish(problem: &Problem, runs: Vec<Optimum>) -> Result<MleResult> {
    let scored: Vec<(f64, Optimum)> = runs
        .into_iter()
        .map(|o| {
            let t = unpack(&o.x);
            (problem.objective(&(t.adjoint() * &t)), o)
        })
        .collect();
    let best_f = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let agreeing = scored.iter().filter(|s| best_f - s.0 < 1e-6).count();
    // First start reaching the best value wins ties, keeping the choice stable.
    let (_, best) = scored
        .into_iter()
        .find(|s| s.0 == best_f)
        .ok_or_else(|| Error::Degenerate("likelihood is not finite at any start".into()))?;
    let rho = rho_from(&best.x)?;
    Ok(MleResult {
        log_likelihood: problem.log_likelihood(rho.matrix()),
        rho,
        iterations: best.iterations,
        converged: best.converged,
        starts_agreeing: agreeing,
    })
}

pub fn reconstruct(rows: &[TomographySetting], opts: &MleOptions) -> Result<MleResult> {
    let problem = Problem::new(rows)?;
    let runs = starting_points(opts.starts).into_iter().map(|x0| lbfgs(&problem, x0, opts)).collect();
    finish(&problem, runs)
}

/// Single fit started near `start`; used for bootstrap resamples, where the
/// point estimate is already close to the optimum.
pub fn reconstruct_from(rows: &[TomographySetting], start: &DensityMatrix, opts: &MleOptions) -> Result<MleResult> {
    let problem = Problem::new(rows)?;
    let runs = vec![
        lbfgs(&problem, factor(start)?, opts),
        lbfgs(&problem, starting_points(1).remove(0), opts),
    ];
    finish(&problem, runs)
}

/// Profile log-likelihood of `rho` for the given rows.
pub fn log_likelihood(rows: &[TomographySetting], rho: &DensityMatrix) -> Result<f64> {
    Ok(Problem::new(rows)?.log_likelihood(rho.matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{concurrence, pure_fidelity};
    use crate::qstate::{bell_state, BellKind, Projector};
    use crate::tomography::dataset::from_state;
    use proptest::prelude::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let rho = DensityMatrix::werner(0.6, &bell_state(BellKind::PsiPlus)).unwrap();
        let mut rows = from_state(&rho, 5e3).unwrap();
        rows[3].counts += 17;
        rows[10].exposure = 2.0;
        let p = Problem::new(&rows).unwrap();
        let x: Vec<f64> = starting_points(3)[2].clone();
        let (_, g) = cost(&p, &x);
        for k in 0..NPARAM {
            let h = 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (cost(&p, &xp).0 - cost(&p, &xm).0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-4 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn pure_bell_state_recovered() {
        let psi = bell_state(BellKind::PsiPlus);
        let rows = from_state(&psi.projector(), 1e6).unwrap();
        let fit = reconstruct(&rows, &MleOptions::default()).unwrap();
        let f = pure_fidelity(&fit.rho, &psi).unwrap();
        assert!(f > 0.999, "{f}");
        assert!(concurrence(&fit.rho).unwrap() > 0.99);
    }

    #[test]
    fn maximally_mixed_recovered() {
        let mixed = DensityMatrix::maximally_mixed(4);
        let rows = from_state(&mixed, 1e6).unwrap();
        let fit = reconstruct(&rows, &MleOptions::default()).unwrap();
        let dev = (fit.rho.matrix() - mixed.matrix()).norm();
        assert!(dev < 1e-3, "{dev}");
        assert!(fit.converged);
        assert!(fit.starts_agreeing >= 5);
    }

    #[test]
    fn sensitivities_are_respected() {
        // Doubling the exposure of a row and its counts leaves the estimate unchanged.
        let rho = DensityMatrix::werner(0.5, &bell_state(BellKind::PhiMinus)).unwrap();
        let rows = from_state(&rho, 1e5).unwrap();
        let mut doubled = rows.clone();
        for r in doubled.iter_mut().step_by(3) {
            r.counts *= 2;
            r.exposure *= 2.0;
        }
        let a = reconstruct(&rows, &MleOptions::default()).unwrap();
        let b = reconstruct(&doubled, &MleOptions::default()).unwrap();
        assert!(a.rho.trace_distance(&b.rho) < 1e-3);
    }

    #[test]
    fn warm_start_reaches_same_optimum() {
        let rho = DensityMatrix::werner(0.4, &bell_state(BellKind::PsiPlus)).unwrap();
        let rows = from_state(&rho, 2e4).unwrap();
        let a = reconstruct(&rows, &MleOptions::default()).unwrap();
        let b = reconstruct_from(&rows, &rho, &MleOptions::default()).unwrap();
        assert!((a.log_likelihood - b.log_likelihood).abs() < 1e-6);
    }

    #[test]
    fn empty_and_zero_data_rejected() {
        assert!(reconstruct(&[], &MleOptions::default()).is_err());
        let rows = vec![TomographySetting {
            projector_a: Projector::Early,
            projector_d: Projector::Late,
            counts: 0,
            exposure: 1.0,
        }];
        assert!(reconstruct(&rows, &MleOptions::default()).is_err());
    }

    fn random_rho(seed: u64) -> DensityMatrix {
        let mut rng = rng_for(seed, &[]);
        let g = CMatrix::from_fn(4, 4, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            c64(re, im)
        });
        DensityMatrix::from_unnormalized(&g * g.adjoint()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn estimate_is_physical_and_beats_truth(seed in 0u64..1000) {
            let truth = random_rho(seed);
            let rows = from_state(&truth, 3e3).unwrap();
            let fit = reconstruct(&rows, &MleOptions { starts: 3, ..MleOptions::default() }).unwrap();
            let m = fit.rho.matrix();
            prop_assert!((m.trace().re - 1.0).abs() < 1e-9);
            prop_assert!((m - m.adjoint()).norm() < 1e-12);
            prop_assert!(fit.rho.eigenvalues().iter().all(|&e| e > -1e-12));
            let truth_ll = log_likelihood(&rows, &truth).unwrap();
            prop_assert!(fit.log_likelihood >= truth_ll - 1e-7, "{} < {}", fit.log_likelihood, truth_ll);
        }
    }
}
