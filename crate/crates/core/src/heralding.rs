//! Bandwidth-limited heralding efficiencies for box-shaped spectra.
//!
//! The joint spectrum is a diagonal band of width Δν_p; signal and idler
//! filters cut horizontal and vertical bands. The heralding efficiency of one
//! photon is the area of the filter intersection over the area of the
//! partner's filter band inside the pump band.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Time-bandwidth product of a transform-limited Gaussian pulse.
pub const TIME_BANDWIDTH_GAUSSIAN: f64 = 0.44;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthModel {
    /// GHz.
    pub dnu_p: f64,
    pub dnu_s: f64,
    pub dnu_i: f64,
}

impl BandwidthModel {
    pub fn new(dnu_p: f64, dnu_s: f64, dnu_i: f64) -> Result<Self> {
        for (name, v) in [("dnu_p", dnu_p), ("dnu_s", dnu_s), ("dnu_i", dnu_i)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("bandwidth {v} must be positive")));
            }
        }
        Ok(BandwidthModel { dnu_p, dnu_s, dnu_i })
    }

    pub fn area_s(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.dnu_p * self.dnu_s
    }

    pub fn area_i(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.dnu_p * self.dnu_i
    }

    pub fn area_si(&self) -> f64 {
        self.dnu_s * self.dnu_i
    }

    /// The area formulas hold only when both filters are narrower than the pump.
    pub fn is_valid(&self) -> bool {
        self.dnu_s < self.dnu_p && self.dnu_i < self.dnu_p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeraldingBound {
    pub eta_s: f64,
    pub eta_i: f64,
    pub valid: bool,
    pub warnings: Vec<String>,
}

pub fn heralding_bound(m: &BandwidthModel) -> HeraldingBound {
    let mut warnings = Vec::new();
    if !m.is_valid() {
        warnings.push(format!(
            "filter bandwidths ({}, {}) GHz not both below pump bandwidth {} GHz; area model outside validity",
            m.dnu_s, m.dnu_i, m.dnu_p
        ));
    }
    let mut clamp = |x: f64, name: &str| {
        if x > 1.0 {
            warnings.push(format!("{name} = {x:.4} clamped to 1"));
            1.0
        } else {
            x
        }
    };
    let eta_s = clamp(m.area_si() / m.area_i(), "eta_s");
    let eta_i = clamp(m.area_si() / m.area_s(), "eta_i");
    HeraldingBound {
        eta_s,
        eta_i,
        valid: m.is_valid(),
        warnings,
    }
}

/// Heralding rates from measured coincidences and singles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeraldingMeasurement {
    pub coincidences: f64,
    pub singles_s: f64,
    pub singles_i: f64,
}

impl HeraldingMeasurement {
    pub fn new(coincidences: f64, singles_s: f64, singles_i: f64) -> Result<Self> {
        if !(coincidences >= 0.0 && singles_s >= 0.0 && singles_i >= 0.0) {
            return Err(Error::param("rates", "rates must be nonnegative"));
        }
        if coincidences > singles_s.min(singles_i) {
            return Err(Error::param("coincidences", "exceed a singles rate"));
        }
        Ok(HeraldingMeasurement {
            coincidences,
            singles_s,
            singles_i,
        })
    }

    /// Probability of detecting the signal given an idler detection.
    pub fn eta_s(&self) -> f64 {
        if self.singles_i == 0.0 {
            0.0
        } else {
            self.coincidences / self.singles_i
        }
    }

    pub fn eta_i(&self) -> f64 {
        if self.singles_s == 0.0 {
            0.0
        } else {
            self.coincidences / self.singles_s
        }
    }
}

pub fn loss_chain(bound: f64, factors: &[f64]) -> Result<f64> {
    for &f in factors {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::param("factor", format!("{f} outside [0, 1]")));
        }
    }
    Ok(factors.iter().fold(bound, |acc, f| acc * f))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub value: f64,
    pub clamped: bool,
    pub warning: Option<String>,
}

pub fn infer_coupling(measured: f64, expected: f64) -> Result<Coupling> {
    if !(expected > 0.0) {
        return Err(Error::param("expected", "must be positive"));
    }
    if !(measured >= 0.0) {
        return Err(Error::param("measured", "must be nonnegative"));
    }
    let raw = measured / expected;
    Ok(if raw > 1.0 {
        Coupling {
            value: 1.0,
            clamped: true,
            warning: Some(format!("measured exceeds expected (ratio {raw:.4}); coupling clamped to 1")),
        }
    } else {
        Coupling {
            value: raw,
            clamped: false,
            warning: None,
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugateBandwidth {
    pub lambda_i_nm: f64,
    pub dlambda_i_nm: f64,
    pub dnu_p_ghz: f64,
    pub dnu_s_ghz: f64,
    pub dnu_i_ghz: f64,
}

/// Idler wavelength and width from energy conservation. With
/// `include_pump` the idler width is the signal width plus the pump width.
pub fn conjugate_bandwidth(
    lambda_s_nm: f64,
    dlambda_s_nm: f64,
    lambda_p_nm: f64,
    pump_duration_ps: f64,
    include_pump: bool,
) -> Result<ConjugateBandwidth> {
    if !(lambda_s_nm > 0.0 && lambda_p_nm > 0.0) {
        return Err(Error::param("lambda", "wavelengths must be positive"));
    }
    if 1.0 / lambda_p_nm <= 1.0 / lambda_s_nm {
        return Err(Error::param("lambda_p", "pump photon energy must exceed the signal's"));
    }
    if !(dlambda_s_nm >= 0.0) || !(pump_duration_ps > 0.0) {
        return Err(Error::param("bandwidth", "widths must be ≥ 0 and pulse duration > 0"));
    }
    let inv_i = 1.0 / lambda_p_nm - 1.0 / lambda_s_nm;
    let lambda_i = 1.0 / inv_i;
    // c in nm·GHz: 1 m/s = 1e9 nm/s = 1 nm·GHz.
    let c = SPEED_OF_LIGHT;
    let dnu_s = c * dlambda_s_nm / (lambda_s_nm * lambda_s_nm);
    let dnu_p = TIME_BANDWIDTH_GAUSSIAN / (pump_duration_ps * 1e-12) * 1e-9;
    let dnu_i = if include_pump { dnu_s + dnu_p } else { dnu_s };
    Ok(ConjugateBandwidth {
        lambda_i_nm: lambda_i,
        dlambda_i_nm: dnu_i * lambda_i * lambda_i / c,
        dnu_p_ghz: dnu_p,
        dnu_s_ghz: dnu_s,
        dnu_i_ghz: dnu_i,
    })
}

/// `[heralding]` section of the bench config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeraldingConfig {
    /// GHz.
    pub dnu_p: f64,
    pub dnu_s: f64,
    pub dnu_i: f64,
    /// Known losses after the bandwidth bound (detector, cavity, prism, ...).
    #[serde(default)]
    pub factors_s: Vec<f64>,
    #[serde(default)]
    pub factors_i: Vec<f64>,
    /// Measured heralding efficiencies.
    pub measured_s: Option<f64>,
    pub measured_i: Option<f64>,
    /// Optional energy-conservation inputs (nm, ps).
    pub lambda_s: Option<f64>,
    pub dlambda_s: Option<f64>,
    pub lambda_p: Option<f64>,
    pub pump_duration_ps: Option<f64>,
    #[serde(default = "default_true")]
    pub include_pump_bandwidth: bool,
}

fn default_true() -> bool {
    true
}

impl HeraldingConfig {
    pub fn validate(&self) -> Result<()> {
        BandwidthModel::new(self.dnu_p, self.dnu_s, self.dnu_i).map_err(|e| match e {
            Error::InvalidParameter { name, reason } => Error::config(format!("heralding.{name}"), reason),
            other => other,
        })?;
        for (p, fs) in [("heralding.factors_s", &self.factors_s), ("heralding.factors_i", &self.factors_i)] {
            if fs.iter().any(|f| !(0.0..=1.0).contains(f)) {
                return Err(Error::config(p, "factors must lie in [0, 1]"));
            }
        }
        let optics = [self.lambda_s, self.dlambda_s, self.lambda_p, self.pump_duration_ps];
        if optics.iter().any(Option::is_some) && !optics.iter().all(Option::is_some) {
            return Err(Error::config(
                "heralding.lambda_s",
                "lambda_s, dlambda_s, lambda_p and pump_duration_ps must be given together",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeraldingRow {
    pub photon: String,
    pub bound: f64,
    pub expected: f64,
    pub measured: Option<f64>,
    pub coupling: Option<Coupling>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeraldingReport {
    pub model: BandwidthModel,
    pub rows: Vec<HeraldingRow>,
    pub conjugate: Option<ConjugateBandwidth>,
    pub warnings: Vec<String>,
}

pub fn heralding_report(cfg: &HeraldingConfig) -> Result<HeraldingReport> {
    cfg.validate()?;
    let model = BandwidthModel::new(cfg.dnu_p, cfg.dnu_s, cfg.dnu_i)?;
    let bound = heralding_bound(&model);
    let mut warnings = bound.warnings.clone();
    let mut rows = Vec::new();
    for (photon, b, factors, measured) in [
        ("signal", bound.eta_s, &cfg.factors_s, cfg.measured_s),
        ("idler", bound.eta_i, &cfg.factors_i, cfg.measured_i),
    ] {
        let expected = loss_chain(b, factors)?;
        let coupling = match measured {
            Some(m) => {
                let c = infer_coupling(m, expected)?;
                if let Some(w) = &c.warning {
                    warnings.push(format!("{photon}: {w}"));
                }
                Some(c)
            }
            None => None,
        };
        rows.push(HeraldingRow {
            photon: photon.into(),
            bound: b,
            expected,
            measured,
            coupling,
        });
    }
    let conjugate = match (cfg.lambda_s, cfg.dlambda_s, cfg.lambda_p, cfg.pump_duration_ps) {
        (Some(ls), Some(dls), Some(lp), Some(t)) => Some(conjugate_bandwidth(ls, dls, lp, t, cfg.include_pump_bandwidth)?),
        _ => None,
    };
    Ok(HeraldingReport {
        model,
        rows,
        conjugate,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn round3(x: f64) -> f64 {
        let mag = 10f64.powi(2 - x.abs().log10().floor() as i32);
        (x * mag).round() / mag
    }

    #[test]
    fn bounds_from_filter_widths() {
        let m = BandwidthModel::new(24.4, 6.0, 12.0).unwrap();
        let b = heralding_bound(&m);
        assert_eq!(round3(b.eta_s), 0.174);
        assert_eq!(round3(b.eta_i), 0.348);
        assert!(b.valid && b.warnings.is_empty());
    }

    #[test]
    fn boundary_is_clamped() {
        let p = 24.4;
        let m = BandwidthModel::new(p, std::f64::consts::SQRT_2 * p, 12.0).unwrap();
        let b = heralding_bound(&m);
        assert!((b.eta_s - 1.0).abs() < 1e-12);
        assert!(!b.valid && !b.warnings.is_empty());
        let wide = heralding_bound(&BandwidthModel::new(p, 3.0 * p, 12.0).unwrap());
        assert_eq!(wide.eta_s, 1.0);
    }

    #[test]
    fn nonpositive_bandwidth_rejected() {
        assert!(BandwidthModel::new(0.0, 1.0, 1.0).is_err());
        assert!(BandwidthModel::new(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn loss_chains_and_coupling() {
        let s = loss_chain(0.174, &[0.50, 0.40, 0.85]).unwrap();
        let i = loss_chain(0.348, &[0.70, 0.80, 0.85]).unwrap();
        assert!((s - 0.0296).abs() < 5e-5);
        assert!((i - 0.166).abs() < 5e-4);
        assert_eq!(loss_chain(0.3, &[]).unwrap(), 0.3);
        assert!(loss_chain(0.3, &[1.2]).is_err());
        assert!((infer_coupling(0.0196, 0.0296).unwrap().value - 0.66).abs() < 5e-3);
        assert!((infer_coupling(0.058, 0.166).unwrap().value - 0.35).abs() < 5e-3);
        assert_eq!(infer_coupling(0.2, 0.2).unwrap().value, 1.0);
        let c = infer_coupling(0.3, 0.2).unwrap();
        assert!(c.clamped && c.value == 1.0);
        assert!(infer_coupling(0.1, 0.0).is_err());
    }

    #[test]
    fn measurement_ratios() {
        let m = HeraldingMeasurement::new(30.0, 1000.0, 200.0).unwrap();
        assert!((m.eta_s() - 0.15).abs() < 1e-15);
        assert!((m.eta_i() - 0.03).abs() < 1e-15);
        assert!(HeraldingMeasurement::new(300.0, 100.0, 1000.0).is_err());
    }

    #[test]
    fn conjugate_bandwidth_examples() {
        let c = conjugate_bandwidth(795.0, 1.5, 523.5, 18.0, true).unwrap();
        assert!((c.lambda_i_nm - 1533.0).abs() < 2.0);
        assert!((c.dlambda_i_nm - 5.6).abs() < 0.2, "{}", c.dlambda_i_nm);
        assert!((c.dnu_p_ghz - 24.4).abs() < 1.0);
        let no = conjugate_bandwidth(795.0, 1.5, 523.5, 18.0, false).unwrap();
        assert!((no.dlambda_i_nm - 5.6).abs() < 0.2);
        let lim = conjugate_bandwidth(795.0, 0.0, 523.5, 1e12, true).unwrap();
        assert!(lim.dlambda_i_nm < 1e-9);
        let degenerate = conjugate_bandwidth(1000.0, 1.0, 500.0, 10.0, true).unwrap();
        assert!((degenerate.lambda_i_nm - 1000.0).abs() < 1e-9);
        assert!(conjugate_bandwidth(500.0, 1.0, 600.0, 10.0, true).is_err());
    }

    /// Uniform samples inside the pump band, counted against box filters.
    #[test]
    fn monte_carlo_area_oracle() {
        let m = BandwidthModel::new(24.4, 6.0, 12.0).unwrap();
        let mut rng = crate::seed::rng_for(11, &[]);
        // Band coordinates: u across the band (width Δν_p), w along it.
        let half_w = (m.dnu_p / std::f64::consts::SQRT_2 + m.dnu_s.max(m.dnu_i)) / std::f64::consts::SQRT_2;
        let (mut n_s, mut n_i, mut n_si) = (0u64, 0u64, 0u64);
        for _ in 0..1_000_000 {
            let u = (rng.random::<f64>() - 0.5) * m.dnu_p;
            let w = (rng.random::<f64>() * 2.0 - 1.0) * half_w;
            let nu_s = (u + w) / std::f64::consts::SQRT_2;
            let nu_i = (u - w) / std::f64::consts::SQRT_2;
            let in_s = nu_s.abs() <= m.dnu_s / 2.0;
            let in_i = nu_i.abs() <= m.dnu_i / 2.0;
            n_s += u64::from(in_s);
            n_i += u64::from(in_i);
            n_si += u64::from(in_s && in_i);
        }
        let b = heralding_bound(&m);
        let mc_s = n_si as f64 / n_i as f64;
        let mc_i = n_si as f64 / n_s as f64;
        assert!((mc_s / b.eta_s - 1.0).abs() < 0.01, "{mc_s} vs {}", b.eta_s);
        assert!((mc_i / b.eta_i - 1.0).abs() < 0.01, "{mc_i} vs {}", b.eta_i);
    }

    proptest! {
        #[test]
        fn ratio_independent_of_pump(p in 1.0f64..100.0, s in 0.1f64..50.0, i in 0.1f64..50.0) {
            let b = heralding_bound(&BandwidthModel::new(p * 10.0, s, i).unwrap());
            prop_assume!(b.eta_s < 1.0 && b.eta_i < 1.0);
            prop_assert!((b.eta_s / b.eta_i - s / i).abs() < 1e-12 * (s / i).max(1.0));
        }

        #[test]
        fn loss_chain_order_invariant(f in proptest::collection::vec(0.0f64..=1.0, 0..6), b in 0.0f64..1.0) {
            let mut r = f.clone();
            r.reverse();
            let x = loss_chain(b, &f).unwrap();
            let y = loss_chain(b, &r).unwrap();
            prop_assert!((x - y).abs() < 1e-15);
            let (l, rr) = f.split_at(f.len() / 2);
            let nested = loss_chain(loss_chain(b, l).unwrap(), rr).unwrap();
            prop_assert!((x - nested).abs() < 1e-15);
        }

        #[test]
        fn energy_conservation(ls in 600.0f64..1000.0, lp in 300.0f64..550.0, d in 0.0f64..3.0, t in 1.0f64..100.0) {
            let c = conjugate_bandwidth(ls, d, lp, t, true).unwrap();
            let resid = 1.0 / lp - 1.0 / ls - 1.0 / c.lambda_i_nm;
            prop_assert!(resid.abs() < 1e-9 / lp);
        }
    }
}
