//! Tomography datasets: one row per pair of local projectors.
//!
//! CSV columns: `basis_A, param_A, basis_D, param_D, counts, exposure`.
//! `basis_*` is `early`, `late` or `phase`; `param_*` is the phase in radians
//! (ignored for `early`/`late`). `exposure` is the number of pulses (or any
//! common time unit) the row was integrated over. The expected count of a row
//! is proportional to `exposure · f_A · f_D · tr(ρ Π_A⊗Π_D)` where `f` is the
//! analyzer post-selection: 1/2 for phase projectors, 1 for early/late.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::photonics::detector::Readout;
use crate::photonics::swap::{tomography_settings, CoincidenceRecord};
use crate::qstate::{CMatrix, Projector};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographySetting {
    pub projector_a: Projector,
    pub projector_d: Projector,
    pub counts: u64,
    pub exposure: f64,
}

fn postselection(p: &Projector) -> f64 {
    match p {
        Projector::Phase(_) => 0.5,
        Projector::Early | Projector::Late => 1.0,
    }
}

impl TomographySetting {
    /// Relative sensitivity `s_j` of the row.
    pub fn scale(&self) -> f64 {
        self.exposure * postselection(&self.projector_a) * postselection(&self.projector_d)
    }

    pub fn operator(&self) -> CMatrix {
        Projector::joint(&self.projector_a, &self.projector_d)
    }
}

/// The 36 projector pairs: eigenstates of σX, σY, σZ on each side.
pub fn standard_projectors() -> Vec<(Projector, Projector)> {
    tomography_settings()
        .into_iter()
        .flat_map(|s| {
            let pa = s.a.projectors();
            let pd = s.d.projectors();
            pa.into_iter().flat_map(move |a| pd.into_iter().map(move |d| (a, d)))
        })
        .collect()
}

/// Converts swap records into tomography rows from heralded events.
pub fn from_records(records: &[CoincidenceRecord], accept_psi_plus: bool) -> Vec<TomographySetting> {
    let mut rows = Vec::with_capacity(records.len() * 4);
    for r in records {
        let pa = r.setting.a.projectors();
        let pd = r.setting.d.projectors();
        for (ia, oa) in [Readout::Zero, Readout::One].into_iter().enumerate() {
            for (id, od) in [Readout::Zero, Readout::One].into_iter().enumerate() {
                rows.push(TomographySetting {
                    projector_a: pa[ia],
                    projector_d: pd[id],
                    counts: r.heralded(oa, od, accept_psi_plus),
                    exposure: r.pulses as f64,
                });
            }
        }
    }
    rows
}

/// Rows from exact per-pulse probabilities, scaled so the total is `total`.
/// Counts are rounded to integers.
pub fn from_state(rho: &crate::qstate::DensityMatrix, total: f64) -> Result<Vec<TomographySetting>> {
    let probs: Vec<(Projector, Projector, f64)> = standard_projectors()
        .into_iter()
        .map(|(a, d)| {
            let p = crate::qstate::expectation(rho, &Projector::joint(&a, &d))?;
            Ok((a, d, p * postselection(&a) * postselection(&d)))
        })
        .collect::<Result<_>>()?;
    let sum: f64 = probs.iter().map(|x| x.2).sum();
    Ok(probs
        .into_iter()
        .map(|(a, d, p)| TomographySetting {
            projector_a: a,
            projector_d: d,
            counts: (total * p / sum).round() as u64,
            exposure: 1.0,
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct Row {
    #[serde(rename = "basis_A")]
    basis_a: String,
    #[serde(rename = "param_A")]
    param_a: f64,
    #[serde(rename = "basis_D")]
    basis_d: String,
    #[serde(rename = "param_D")]
    param_d: f64,
    counts: u64,
    exposure: f64,
}

fn encode(p: &Projector) -> (String, f64) {
    match *p {
        Projector::Early => ("early".into(), 0.0),
        Projector::Late => ("late".into(), 0.0),
        Projector::Phase(phi) => ("phase".into(), phi),
    }
}

fn decode(basis: &str, param: f64, line: usize, col: &str) -> Result<Projector> {
    match basis.trim() {
        "early" => Ok(Projector::Early),
        "late" => Ok(Projector::Late),
        "phase" => Projector::phase(param).map_err(|e| Error::config(format!("row {line}.{col}"), e.to_string())),
        other => Err(Error::config(format!("row {line}.{col}"), format!("unknown basis `{other}`"))),
    }
}

pub fn write_csv<W: Write>(w: W, rows: &[TomographySetting]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        let (ba, pa) = encode(&r.projector_a);
        let (bd, pd) = encode(&r.projector_d);
        wr.serialize(Row {
            basis_a: ba,
            param_a: pa,
            basis_d: bd,
            param_d: pd,
            counts: r.counts,
            exposure: r.exposure,
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<TomographySetting>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rd.deserialize::<Row>().enumerate() {
        let row = row?;
        let line = i + 1;
        if !(row.exposure > 0.0) {
            return Err(Error::config(format!("row {line}.exposure"), "must be positive"));
        }
        out.push(TomographySetting {
            projector_a: decode(&row.basis_a, row.param_a, line, "param_A")?,
            projector_d: decode(&row.basis_d, row.param_d, line, "param_D")?,
            counts: row.counts,
            exposure: row.exposure,
        });
    }
    Ok(out)
}

/// True if the rows are exactly the 36 standard projector pairs.
pub fn is_standard(rows: &[TomographySetting]) -> bool {
    let std = standard_projectors();
    rows.len() == std.len()
        && std.iter().all(|(a, d)| {
            rows.iter().any(|r| {
                let same = |x: &Projector, y: &Projector| match (x, y) {
                    (Projector::Phase(p), Projector::Phase(q)) => (p - q).abs() < 1e-9,
                    _ => x == y,
                };
                same(&r.projector_a, a) && same(&r.projector_d, d)
            })
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{bell_state, BellKind};

    #[test]
    fn standard_set_has_36_distinct_pairs() {
        let s = standard_projectors();
        assert_eq!(s.len(), 36);
        for (i, x) in s.iter().enumerate() {
            assert!(!s[..i].contains(x));
        }
    }

    #[test]
    fn csv_round_trip() {
        let rho = bell_state(BellKind::PsiPlus).projector();
        let rows = from_state(&rho, 1e5).unwrap();
        assert!(is_standard(&rows));
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("basis_A,param_A,basis_D,param_D,counts,exposure"));
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn bad_basis_reports_row() {
        let text = "basis_A,param_A,basis_D,param_D,counts,exposure\nearly,0,sideways,0,3,1\n";
        let err = read_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("sideways"), "{err}");
    }
}
