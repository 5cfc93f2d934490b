//! Sparse multimode Fock states.
//!
//! A state is a map from occupation tuples to amplitudes over a dense list of
//! labelled modes. Linear optics acts on creation operators, so photon number
//! is conserved and the truncation chosen at the source is respected exactly.

use std::collections::BTreeMap;

use super::mode::ModeLabel;
use crate::qstate::{c64, CMatrix, C64};
use crate::{Error, Result};

pub type Occupation = Vec<u8>;

/// Amplitudes with squared magnitude below this are dropped after a transform.
const PRUNE_NORM_SQR: f64 = 1e-30;

fn sqrt_factorial(n: u8) -> f64 {
    (1..=n as u32).map(f64::from).product::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    modes: Vec<ModeLabel>,
    terms: BTreeMap<Occupation, C64>,
}

fn check_unique(modes: &[ModeLabel]) -> Result<()> {
    for (i, m) in modes.iter().enumerate() {
        if modes[..i].contains(m) {
            return Err(Error::IncompatibleModes(format!("duplicate mode label {m:?}")));
        }
    }
    Ok(())
}

impl FockState {
    pub fn vacuum(modes: Vec<ModeLabel>) -> Result<Self> {
        check_unique(&modes)?;
        let mut terms = BTreeMap::new();
        terms.insert(vec![0; modes.len()], c64(1.0, 0.0));
        Ok(FockState { modes, terms })
    }

    pub fn from_terms<I>(modes: Vec<ModeLabel>, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Occupation, C64)>,
    {
        check_unique(&modes)?;
        let mut map: BTreeMap<Occupation, C64> = BTreeMap::new();
        for (occ, amp) in terms {
            if occ.len() != modes.len() {
                return Err(Error::DimensionMismatch {
                    expected: modes.len(),
                    got: occ.len(),
                });
            }
            *map.entry(occ).or_default() += amp;
        }
        let mut s = FockState { modes, terms: map };
        s.prune();
        Ok(s)
    }

    /// A single occupation-number basis state.
    pub fn number_state(modes: Vec<ModeLabel>, occ: &[u8]) -> Result<Self> {
        Self::from_terms(modes, [(occ.to_vec(), c64(1.0, 0.0))])
    }

    pub fn modes(&self) -> &[ModeLabel] {
        &self.modes
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn index_of(&self, label: &ModeLabel) -> Option<usize> {
        self.modes.iter().position(|m| m == label)
    }

    pub fn require(&self, label: &ModeLabel) -> Result<usize> {
        self.index_of(label)
            .ok_or_else(|| Error::IncompatibleModes(format!("mode {label:?} not present")))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &C64)> {
        self.terms.iter()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn amplitude(&self, occ: &[u8]) -> C64 {
        self.terms.get(occ).copied().unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        self.scale(1.0 / n);
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.terms.values_mut() {
            *a *= s;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest total photon number over the support.
    pub fn max_photons(&self) -> u32 {
        self.terms
            .keys()
            .map(|o| o.iter().map(|&n| n as u32).sum())
            .max()
            .unwrap_or(0)
    }

    /// `self += coef · other`; both states must use the same mode list.
    pub fn add_scaled(&mut self, other: &FockState, coef: C64) -> Result<()> {
        if self.modes != other.modes {
            return Err(Error::IncompatibleModes("mode lists differ".into()));
        }
        for (occ, a) in &other.terms {
            *self.terms.entry(occ.clone()).or_default() += coef * a;
        }
        self.prune();
        Ok(())
    }

    /// `a†_mode |self⟩`, unnormalized.
    pub fn create(&self, mode: usize) -> FockState {
        let terms = self
            .terms
            .iter()
            .map(|(occ, a)| {
                let mut o = occ.clone();
                o[mode] += 1;
                let f = f64::from(o[mode]).sqrt();
                (o, a * f)
            })
            .collect();
        FockState {
            modes: self.modes.clone(),
            terms,
        }
    }

    /// Tensor product; mode labels must be disjoint.
    pub fn tensor(&self, other: &FockState) -> Result<FockState> {
        let mut modes = self.modes.clone();
        modes.extend_from_slice(&other.modes);
        check_unique(&modes)?;
        let mut terms = BTreeMap::new();
        for (oa, a) in &self.terms {
            for (ob, b) in &other.terms {
                let mut o = oa.clone();
                o.extend_from_slice(ob);
                terms.insert(o, a * b);
            }
        }
        Ok(FockState { modes, terms })
    }

    /// Index of `label`, appending it in vacuum if absent.
    pub fn ensure_mode(&mut self, label: ModeLabel) -> usize {
        if let Some(i) = self.index_of(&label) {
            return i;
        }
        self.modes.push(label);
        self.terms = std::mem::take(&mut self.terms)
            .into_iter()
            .map(|(mut o, a)| {
                o.push(0);
                (o, a)
            })
            .collect();
        self.modes.len() - 1
    }

    pub fn relabel(&mut self, mode: usize, label: ModeLabel) -> Result<()> {
        if self.modes.iter().enumerate().any(|(i, m)| i != mode && *m == label) {
            return Err(Error::IncompatibleModes(format!("label {label:?} already in use")));
        }
        self.modes[mode] = label;
        Ok(())
    }

    /// Applies the linear map `a†_in[c] → Σ_r m[(r, c)] a†_out[r]`.
    ///
    /// Input modes are emptied before the output photons are added, so an
    /// output may reuse an input mode. The map is exact on any photon number.
    pub fn apply_linear(&mut self, inputs: &[usize], outputs: &[usize], m: &CMatrix) -> Result<()> {
        if m.nrows() != outputs.len() || m.ncols() != inputs.len() {
            return Err(Error::DimensionMismatch {
                expected: outputs.len() * inputs.len(),
                got: m.nrows() * m.ncols(),
            });
        }
        for (list, what) in [(inputs, "input"), (outputs, "output")] {
            for (i, &x) in list.iter().enumerate() {
                if x >= self.modes.len() || list[..i].contains(&x) {
                    return Err(Error::IncompatibleModes(format!("bad {what} mode index {x}")));
                }
            }
        }
        let mut out: BTreeMap<Occupation, C64> = BTreeMap::new();
        for (occ, amp) in &self.terms {
            let mut base = occ.clone();
            let mut denom = 1.0;
            let mut photons = Vec::new();
            for (c, &i) in inputs.iter().enumerate() {
                denom *= sqrt_factorial(occ[i]);
                photons.extend(std::iter::repeat_n(c, occ[i] as usize));
                base[i] = 0;
            }
            // Expand the product of substituted creation operators, merging
            // equal monomials as we go.
            let mut poly: BTreeMap<Occupation, C64> = BTreeMap::new();
            poly.insert(base, c64(1.0, 0.0));
            for &c in &photons {
                let mut next: BTreeMap<Occupation, C64> = BTreeMap::new();
                for (o, coef) in &poly {
                    for (r, &j) in outputs.iter().enumerate() {
                        let t = m[(r, c)];
                        if t == C64::default() {
                            continue;
                        }
                        let mut o2 = o.clone();
                        o2[j] += 1;
                        *next.entry(o2).or_default() += coef * t;
                    }
                }
                poly = next;
            }
            for (o, coef) in poly {
                let mut f = 1.0 / denom;
                for &j in outputs {
                    f *= sqrt_factorial(o[j]);
                }
                // Spectator modes keep their own factorials on both sides.
                *out.entry(o).or_default() += amp * coef * f;
            }
        }
        self.terms = out;
        self.prune();
        Ok(())
    }

    pub fn mean_photons(&self, mode: usize) -> f64 {
        self.terms
            .iter()
            .map(|(o, a)| f64::from(o[mode]) * a.norm_sqr())
            .sum::<f64>()
            / self.norm_sqr()
    }

    /// Occupation probabilities `|amplitude|²` (unnormalized if the state is).
    pub fn probabilities(&self) -> Vec<(Occupation, f64)> {
        self.terms.iter().map(|(o, a)| (o.clone(), a.norm_sqr())).collect()
    }

    /// Splits on the photon number of `mode`, removing that mode.
    /// Returns unnormalized conditional branches keyed by the count.
    pub fn split_on(&self, mode: usize) -> Vec<(u8, FockState)> {
        let mut modes = self.modes.clone();
        modes.remove(mode);
        let mut by: BTreeMap<u8, BTreeMap<Occupation, C64>> = BTreeMap::new();
        for (occ, a) in &self.terms {
            let mut o = occ.clone();
            let n = o.remove(mode);
            by.entry(n).or_default().insert(o, *a);
        }
        by.into_iter()
            .map(|(n, terms)| {
                (
                    n,
                    FockState {
                        modes: modes.clone(),
                        terms,
                    },
                )
            })
            .collect()
    }

    /// Maps each occupation through `f`, which may change per-mode counts but
    /// not the mode list. Used for Kraus operators diagonal in number basis.
    pub(crate) fn map_terms<F>(&self, mut f: F) -> FockState
    where
        F: FnMut(&Occupation) -> Option<(Occupation, f64)>,
    {
        let mut terms: BTreeMap<Occupation, C64> = BTreeMap::new();
        for (occ, a) in &self.terms {
            if let Some((o, s)) = f(occ) {
                *terms.entry(o).or_default() += a * s;
            }
        }
        let mut st = FockState {
            modes: self.modes.clone(),
            terms,
        };
        st.prune();
        st
    }

    fn prune(&mut self) {
        self.terms.retain(|_, a| a.norm_sqr() > PRUNE_NORM_SQR);
    }
}

/// Incoherent sum of unnormalized pure branches: `ρ = Σ_b |ψ_b⟩⟨ψ_b|`.
#[derive(Clone, Debug, Default)]
pub struct FockMixture {
    pub branches: Vec<FockState>,
}

impl FockMixture {
    pub fn pure(state: FockState) -> Self {
        FockMixture {
            branches: vec![state],
        }
    }

    pub fn trace(&self) -> f64 {
        self.branches.iter().map(FockState::norm_sqr).sum()
    }

    pub fn mean_photons(&self, label: &ModeLabel) -> Result<f64> {
        let mut total = 0.0;
        for b in &self.branches {
            let i = b.require(label)?;
            total += b.mean_photons(i) * b.norm_sqr();
        }
        Ok(total / self.trace())
    }

    /// Probability of each occupation tuple, merged over branches that share
    /// a mode list.
    pub fn probabilities(&self) -> BTreeMap<Occupation, f64> {
        let mut out = BTreeMap::new();
        for b in &self.branches {
            for (o, p) in b.probabilities() {
                *out.entry(o).or_default() += p;
            }
        }
        out
    }
}
