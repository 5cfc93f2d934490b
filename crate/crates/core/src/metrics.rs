//! Entanglement and closeness measures on two-qubit states.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{
    bell_state, c64, hermitian_eigenvalues, pauli_y, psd_sqrt, zyz_unitary, BellKind, CMatrix,
    DensityMatrix, Ket, Projector,
};

/// Grid points per angle in the coarse search over maximally entangled states.
pub const GRID_POINTS: usize = 16;
/// Final coordinate step of the local refinement.
pub const REFINE_STEP: f64 = 1e-5;
/// Fidelity differences below this are treated as ties.
pub const TIE_TOL: f64 = 1e-9;

const REFINED_CANDIDATES: usize = 6;
const ANTI_CANDIDATES: usize = 3;

fn require_two_qubit(rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: rho.dim(),
        });
    }
    Ok(())
}

/// Wootters concurrence `max(0, λ1 − λ2 − λ3 − λ4)`.
///
/// The λ are the square roots of the eigenvalues of `ρ ρ̃`, obtained here as the
/// eigenvalues of the Hermitian matrix `√(√ρ ρ̃ √ρ)`.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    require_two_qubit(rho)?;
    let yy = pauli_y().kronecker(&pauli_y());
    let tilde = &yy * rho.matrix().conjugate() * &yy;
    let sqrt_rho = psd_sqrt(rho.matrix())?;
    let r = &sqrt_rho * tilde * &sqrt_rho;
    let mut lambdas: Vec<f64> = hermitian_eigenvalues(&r)
        .into_iter()
        .map(|x| x.max(0.0).sqrt())
        .collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}

/// Uhlmann fidelity `(tr √(√σ ρ √σ))²`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: sigma.dim(),
        });
    }
    let s = psd_sqrt(sigma.matrix())?;
    Ok(fidelity_with_sqrt(rho.matrix(), &s))
}

fn fidelity_with_sqrt(rho: &CMatrix, sqrt_sigma: &CMatrix) -> f64 {
    let m = sqrt_sigma * rho * sqrt_sigma;
    let root_sum: f64 = hermitian_eigenvalues(&m)
        .into_iter()
        .map(|x| x.max(0.0).sqrt())
        .sum();
    (root_sum * root_sum).clamp(0.0, 1.0)
}

/// `⟨ψ|ρ|ψ⟩`
pub fn pure_fidelity(rho: &DensityMatrix, psi: &Ket) -> Result<f64> {
    if rho.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: psi.dim(),
        });
    }
    let a = psi.amplitudes();
    Ok((a.adjoint() * rho.matrix() * a)[(0, 0)].re)
}

/// Euler angles `(a, b, c)` of `U = Rz(a) Ry(b) Rz(c)` in `(𝟙⊗U)|Φ+⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxEntParams(pub [f64; 3]);

impl MaxEntParams {
    pub fn unitary(&self) -> CMatrix {
        let [a, b, c] = self.0;
        zyz_unitary(a, b, c)
    }

    pub fn ket(&self) -> Ket {
        let u = CMatrix::identity(2, 2).kronecker(&self.unitary());
        canonical_phase(bell_state(BellKind::PhiPlus).apply(&u).expect("4-dim"))
    }
}

/// Removes the global phase so the largest amplitude is real and positive.
fn canonical_phase(k: Ket) -> Ket {
    let amps = k.amplitudes();
    let lead = amps
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(c64(1.0, 0.0));
    if lead.norm() == 0.0 {
        return k;
    }
    let rot = lead.conj() / lead.norm();
    Ket::new(amps.iter().map(|z| z * rot).collect()).expect("nonzero")
}

/// `1 − max_k |⟨Bell_k|ψ⟩|²`
pub fn distance_to_bell(psi: &Ket) -> f64 {
    let best = BellKind::ALL
        .iter()
        .map(|&b| bell_state(b).inner(psi).norm_sqr())
        .fold(0.0, f64::max);
    1.0 - best
}

/// Canonical Bell state with the largest overlap `|⟨Bell|ψ⟩|²`, and that overlap.
pub fn closest_bell(psi: &Ket) -> (BellKind, f64) {
    BellKind::ALL
        .iter()
        .map(|&b| (b, bell_state(b).inner(psi).norm_sqr()))
        .fold((BellKind::PhiPlus, -1.0), |best, x| if x.1 > best.1 { x } else { best })
}

/// Best-matching canonical Bell state, when the overlap exceeds 1 − 1e-6.
pub fn matching_bell(psi: &Ket) -> Option<BellKind> {
    BellKind::ALL
        .iter()
        .copied()
        .find(|&b| bell_state(b).inner(psi).norm_sqr() > 1.0 - 1e-6)
}

#[derive(Clone, Debug, Serialize)]
pub struct MaxEntFit {
    #[serde(skip)]
    pub psi: Ket,
    pub psi_params: MaxEntParams,
    pub bell: Option<BellKind>,
    pub nearest_bell: BellKind,
    pub bell_overlap: f64,
    pub fidelity: f64,
    /// Several distinct states reach the optimum within [`TIE_TOL`].
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct WernerFit {
    pub v: f64,
    #[serde(skip)]
    pub psi: Ket,
    pub psi_params: MaxEntParams,
    pub bell: Option<BellKind>,
    pub nearest_bell: BellKind,
    pub bell_overlap: f64,
    pub fidelity: f64,
    pub degenerate: bool,
}

impl WernerFit {
    pub fn state(&self) -> DensityMatrix {
        DensityMatrix::werner(self.v, &self.psi).expect("v kept in range")
    }
}

fn angle_grid() -> Vec<[f64; 3]> {
    let n = GRID_POINTS;
    let mut out = Vec::with_capacity(n * n * n);
    for i in 0..n {
        let a = TAU * i as f64 / n as f64;
        for j in 0..n {
            let b = PI * j as f64 / (n - 1) as f64;
            for k in 0..n {
                let c = TAU * k as f64 / n as f64;
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// One exploratory sweep: each coordinate moves by `±step` if that helps.
fn explore<const N: usize>(
    mut x: [f64; N],
    mut best: f64,
    step: f64,
    bounds: &[(f64, f64); N],
    f: &impl Fn(&[f64; N]) -> f64,
) -> ([f64; N], f64) {
    for i in 0..N {
        for dir in [1.0, -1.0] {
            let mut trial = x;
            trial[i] = (trial[i] + dir * step).clamp(bounds[i].0, bounds[i].1);
            if trial[i] == x[i] {
                continue;
            }
            let val = f(&trial);
            if val > best {
                best = val;
                x = trial;
                break;
            }
        }
    }
    (x, best)
}

/// Hooke–Jeeves pattern search: exploratory coordinate moves, then repeated
/// extrapolation along the last displacement, halving the step when stuck.
/// The pattern moves follow curved ridges that plain coordinate ascent
/// crawls along.
fn coordinate_ascent<const N: usize>(
    start: [f64; N],
    start_value: f64,
    initial_step: f64,
    bounds: &[(f64, f64); N],
    f: &impl Fn(&[f64; N]) -> f64,
) -> ([f64; N], f64) {
    let mut x = start;
    let mut best = start_value;
    let mut step = initial_step;
    while step >= REFINE_STEP {
        let (xn, vn) = explore(x, best, step, bounds, f);
        if vn <= best {
            step *= 0.5;
            continue;
        }
        let (mut base, mut cur, mut cur_v) = (x, xn, vn);
        loop {
            let mut p = cur;
            for i in 0..N {
                p[i] = (2.0 * cur[i] - base[i]).clamp(bounds[i].0, bounds[i].1);
            }
            let (pe, pv) = explore(p, f(&p), step, bounds, f);
            if pv > cur_v {
                base = cur;
                cur = pe;
                cur_v = pv;
            } else {
                break;
            }
        }
        x = cur;
        best = cur_v;
    }
    (x, best)
}

struct Scored<const N: usize> {
    x: [f64; N],
    value: f64,
    psi: Ket,
}

/// Picks the winner among refined candidates, applying the Bell-closeness tie-break.
fn select<const N: usize>(mut cands: Vec<Scored<N>>, grid_degenerate: bool) -> (Scored<N>, bool) {
    cands.sort_by(|a, b| b.value.total_cmp(&a.value));
    let top = cands[0].value;
    let tied: Vec<Scored<N>> = cands.into_iter().filter(|c| top - c.value <= TIE_TOL).collect();
    let distinct = tied
        .iter()
        .any(|c| 1.0 - c.psi.inner(&tied[0].psi).norm_sqr() > 1e-6);
    let winner = tied
        .into_iter()
        .min_by(|a, b| distance_to_bell(&a.psi).total_cmp(&distance_to_bell(&b.psi)))
        .expect("at least one candidate");
    (winner, distinct || grid_degenerate)
}

/// Grid candidates sorted by value, and whether distinct grid states tie at the top.
fn ranked_grid(scores: Vec<([f64; 3], f64)>) -> (Vec<([f64; 3], f64)>, bool) {
    let mut scores = scores;
    scores.sort_by(|a, b| b.1.total_cmp(&a.1));
    let top = scores[0].1;
    let lead = MaxEntParams(scores[0].0).ket();
    let tied = scores.iter().take_while(|s| top - s.1 <= TIE_TOL).count();
    let degenerate = scores[..tied]
        .iter()
        .any(|s| 1.0 - MaxEntParams(s.0).ket().inner(&lead).norm_sqr() > 1e-6);
    if degenerate {
        // Refine the tied points nearest a canonical Bell state first.
        scores[..tied].sort_by(|a, b| {
            distance_to_bell(&MaxEntParams(a.0).ket()).total_cmp(&distance_to_bell(&MaxEntParams(b.0).ket()))
        });
    }
    (scores, degenerate)
}

/// Maximizes `⟨ψ|ρ|ψ⟩` over maximally entangled `ψ = (𝟙⊗U)|Φ+⟩`.
pub fn nearest_max_entangled(rho: &DensityMatrix) -> Result<MaxEntFit> {
    require_two_qubit(rho)?;
    let objective = |x: &[f64; 3]| pure_fidelity(rho, &MaxEntParams(*x).ket()).expect("4-dim");
    let scores: Vec<_> = angle_grid().into_iter().map(|x| (x, objective(&x))).collect();
    let (ranked, grid_degenerate) = ranked_grid(scores);

    let step = TAU / GRID_POINTS as f64 / 2.0;
    let unbounded = [(f64::NEG_INFINITY, f64::INFINITY); 3];
    let cands: Vec<Scored<3>> = ranked
        .iter()
        .take(REFINED_CANDIDATES)
        .map(|&(x, v)| {
            let (x, value) = coordinate_ascent(x, v, step, &unbounded, &objective);
            Scored {
                x,
                value,
                psi: MaxEntParams(x).ket(),
            }
        })
        .collect();
    let (best, degenerate) = select(cands, grid_degenerate);
    let (nearest_bell, bell_overlap) = closest_bell(&best.psi);
    Ok(MaxEntFit {
        bell: matching_bell(&best.psi),
        nearest_bell,
        bell_overlap,
        psi: best.psi,
        psi_params: MaxEntParams(best.x),
        fidelity: best.value,
        degenerate,
    })
}

/// `F(ρ, Werner(v, Φ+))` for a state already rotated into the Φ+ frame.
fn werner_phi_plus_fidelity(rho_rot: &CMatrix, v: f64, phi_proj: &CMatrix) -> f64 {
    let alpha = ((1.0 + 3.0 * v) / 4.0).max(0.0).sqrt();
    let beta = ((1.0 - v) / 4.0).max(0.0).sqrt();
    let id = CMatrix::identity(4, 4);
    let sqrt_w = phi_proj.scale(alpha) + (id - phi_proj).scale(beta);
    fidelity_with_sqrt(rho_rot, &sqrt_w)
}

fn golden_max(lo: f64, hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    // Endpoints matter when the optimum sits on the boundary.
    let mut best = if f1 > f2 { (x1, f1) } else { (x2, f2) };
    for edge in [lo, hi] {
        let fe = f(edge);
        if fe > best.1 {
            best = (edge, fe);
        }
    }
    best
}

pub const WERNER_V_MIN: f64 = -1.0 / 3.0;

/// Maximizes `F(ρ, v|ψ⟩⟨ψ| + (1 − v)𝟙/4)` jointly over `v ∈ [−1/3, 1]` and
/// maximally entangled `ψ`.
pub fn nearest_werner(rho: &DensityMatrix) -> Result<WernerFit> {
    require_two_qubit(rho)?;
    let phi_proj = bell_state(BellKind::PhiPlus).projector().into_matrix();
    let rotated = |x: &[f64; 3]| {
        let u = CMatrix::identity(2, 2).kronecker(&MaxEntParams(*x).unitary());
        u.adjoint() * rho.matrix() * u
    };
    let inner = |x: &[f64; 3], tol: f64| {
        let r = rotated(x);
        golden_max(WERNER_V_MIN, 1.0, tol, |v| werner_phi_plus_fidelity(&r, v, &phi_proj))
    };

    // The grid is ranked by the cheap overlap ⟨ψ|ρ|ψ⟩; only the candidates go
    // through the Uhlmann fidelity. The least-overlapping points are kept too,
    // since v < 0 favours ψ that ρ avoids.
    let overlap = |x: &[f64; 3]| pure_fidelity(rho, &MaxEntParams(*x).ket()).expect("4-dim");
    let scores: Vec<_> = angle_grid().into_iter().map(|x| (x, overlap(&x))).collect();
    let (top, _) = ranked_grid(scores.clone());
    let (bottom, _) = ranked_grid(scores.into_iter().map(|(x, f)| (x, -f)).collect());
    let starts = top.iter().take(REFINED_CANDIDATES).chain(bottom.iter().take(ANTI_CANDIDATES));

    let joint = |p: &[f64; 4]| {
        let r = rotated(&[p[0], p[1], p[2]]);
        werner_phi_plus_fidelity(&r, p[3], &phi_proj)
    };
    let step = TAU / GRID_POINTS as f64 / 2.0;
    let inf = f64::INFINITY;
    let bounds = [(-inf, inf), (-inf, inf), (-inf, inf), (WERNER_V_MIN, 1.0)];
    let cands: Vec<Scored<4>> = starts
        .map(|&(x, _)| {
            let (v, value) = inner(&x, 1e-7);
            let (p, value) = coordinate_ascent([x[0], x[1], x[2], v], value, step, &bounds, &joint);
            // Re-polish v for the final angles.
            let (v, value2) = inner(&[p[0], p[1], p[2]], 1e-9);
            let (p, value) = if value2 >= value { ([p[0], p[1], p[2], v], value2) } else { (p, value) };
            Scored {
                x: p,
                value,
                psi: MaxEntParams([p[0], p[1], p[2]]).ket(),
            }
        })
        .collect();
    let (best, degenerate) = select(cands, false);
    let params = MaxEntParams([best.x[0], best.x[1], best.x[2]]);
    let (nearest_bell, bell_overlap) = closest_bell(&best.psi);
    Ok(WernerFit {
        v: best.x[3],
        bell: matching_bell(&best.psi),
        nearest_bell,
        bell_overlap,
        psi: best.psi,
        psi_params: params,
        fidelity: best.value,
        degenerate,
    })
}

/// Highest two-photon interference visibility reachable by a separable Werner state.
pub fn separable_visibility_bound() -> f64 {
    1.0 / 3.0
}

/// Visibility of `P(δ) = tr(ρ · Π_δ ⊗ Π_0)` over a full scan of the A-side phase.
///
/// `P(δ)` is exactly `A + B cos δ + C sin δ`, so three samples fix it.
pub fn phase_scan_visibility(rho: &DensityMatrix) -> Result<f64> {
    require_two_qubit(rho)?;
    let p = |d: f64| {
        crate::qstate::expectation(
            rho,
            &Projector::joint(&Projector::phase_wrapped(d), &Projector::Phase(0.0)),
        )
        .expect("4-dim")
    };
    let (p0, p90, p180) = (p(0.0), p(PI / 2.0), p(PI));
    let a = 0.5 * (p0 + p180);
    let b = 0.5 * (p0 - p180);
    let c = p90 - a;
    if a <= 0.0 {
        return Ok(0.0);
    }
    Ok((b * b + c * c).sqrt() / a)
}
