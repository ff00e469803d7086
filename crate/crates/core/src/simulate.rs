//! Synthetic transmission traces with seeded complex Gaussian noise.
//!
//! A trace samples a uniform grid across the cavity line plus a dense
//! window around every OMIA dip, so narrow features are resolved without
//! an enormous uniform grid. The pump always sits on the red sideband of
//! the first mechanical mode.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitkit::{Trace, TraceData, TraceMeta};
use crate::formats::OmSystem;
use crate::omresponse::{
    cooperativity, effective_mech_linewidth, photons_from_power, power_for_photons, MechTerm,
    PhotonSource, PumpConfig, ResponseError, TwoToneModel,
};
use crate::units::{dbm_to_watts, rad_to_hz, watts_to_dbm};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation settings: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ResponseError),
}

/// How the pump is set for each trace of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PumpSweep {
    /// One undriven trace.
    Bare,
    /// Source powers in dBm.
    PumpDbm(Vec<f64>),
    /// Target cooperativities of the first mechanical mode; the matching
    /// source power is computed and recorded in the header.
    Cooperativity(Vec<f64>),
}

/// Generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSpec {
    pub pumps: PumpSweep,
    /// Input-chain attenuation, dB.
    pub atten_db: f64,
    /// Half-width of the uniform grid in units of κ.
    pub span_kappa: f64,
    pub points: usize,
    /// Samples in each dense dip window.
    pub dip_points: usize,
    /// Half-width of each dip window in units of the broadened linewidth.
    pub dip_span: f64,
    /// Signal-to-noise ratio in dB relative to the peak transmission;
    /// `None` writes noiseless traces.
    pub snr_db: Option<f64>,
    /// Drop the phase column.
    pub magnitude_only: bool,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            pumps: PumpSweep::Bare,
            atten_db: 60.0,
            span_kappa: 4.0,
            points: 801,
            dip_points: 401,
            dip_span: 5.0,
            snr_db: None,
            magnitude_only: false,
        }
    }
}

impl SimSpec {
    fn validate(&self) -> Result<(), SimError> {
        if self.points < 3 {
            return Err(SimError::Invalid("points must be at least 3".into()));
        }
        if !(self.span_kappa > 0.0 && self.dip_span > 0.0) {
            return Err(SimError::Invalid("spans must be positive".into()));
        }
        if !self.atten_db.is_finite() {
            return Err(SimError::Invalid("atten_db must be finite".into()));
        }
        if let Some(snr) = self.snr_db {
            if snr.is_nan() {
                return Err(SimError::Invalid("snr_db is NaN".into()));
            }
        }
        let values = match &self.pumps {
            PumpSweep::Bare => return Ok(()),
            PumpSweep::PumpDbm(v) | PumpSweep::Cooperativity(v) => v,
        };
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Invalid("pump list must be non-empty and finite".into()));
        }
        if matches!(self.pumps, PumpSweep::Cooperativity(_)) && values.iter().any(|&c| c < 0.0) {
            return Err(SimError::Invalid("target cooperativities must be >= 0".into()));
        }
        Ok(())
    }
}

/// Noise standard deviation of the complex sample (both quadratures
/// together) for a given SNR.
pub fn noise_sigma(amp_scale: f64, snr_db: f64) -> f64 {
    amp_scale * 10f64.powf(-snr_db / 20.0)
}

struct PumpPoint {
    dbm: f64,
    n_d: f64,
}

fn pump_points(sys: &OmSystem, spec: &SimSpec) -> Result<Vec<Option<PumpPoint>>, SimError> {
    let cav = &sys.cavity;
    let mech = sys.mech_modes.first();
    let need_mode = || mech.ok_or_else(|| SimError::Invalid("pumped traces need a mechanical mode".into()));
    match &spec.pumps {
        PumpSweep::Bare => Ok(vec![None]),
        PumpSweep::PumpDbm(levels) => {
            let m = need_mode()?;
            levels
                .iter()
                .map(|&dbm| {
                    let n_d = photons_from_power(
                        cav,
                        &PumpConfig {
                            omega_d: cav.omega_c - m.omega_m,
                            source: PhotonSource::Power {
                                power_w: dbm_to_watts(dbm),
                                attenuation_db: Some(spec.atten_db),
                            },
                        },
                    )?;
                    Ok(Some(PumpPoint { dbm, n_d }))
                })
                .collect()
        }
        PumpSweep::Cooperativity(targets) => {
            let m = need_mode()?;
            if !(m.g0 > 0.0) {
                return Err(SimError::Invalid("cooperativity targets need g0 > 0".into()));
            }
            let per_photon = 4.0 * m.g0 * m.g0 / (cav.kappa() * m.gamma_m);
            targets
                .iter()
                .map(|&c| {
                    let n_d = c / per_photon;
                    let p_in = power_for_photons(cav, cav.omega_c - m.omega_m, n_d);
                    Ok(Some(PumpPoint {
                        dbm: watts_to_dbm(p_in) + spec.atten_db,
                        n_d,
                    }))
                })
                .collect()
        }
    }
}

fn grid(centre: f64, half: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = 2.0 * half / (n - 1) as f64;
    (0..n).map(move |i| centre - half + step * i as f64)
}

/// Probe frequencies (Hz) for one trace.
fn probe_grid(sys: &OmSystem, spec: &SimSpec, model: Option<&TwoToneModel>) -> Vec<f64> {
    let fc = rad_to_hz(sys.cavity.omega_c);
    let half = spec.span_kappa * rad_to_hz(sys.cavity.kappa());
    let mut f: Vec<f64> = grid(fc, half, spec.points).collect();
    if let (Some(model), true) = (model, spec.dip_points >= 3) {
        let f_pump = fc + rad_to_hz(model.pump_detuning);
        for t in &model.terms {
            let centre = f_pump + rad_to_hz(t.omega_m);
            let w = spec.dip_span * rad_to_hz(effective_mech_linewidth(t.gamma_m, t.coop));
            if (centre - fc).abs() < half {
                f.extend(grid(centre, w, spec.dip_points).filter(|x| (x - fc).abs() <= half));
            }
        }
    }
    f.sort_by(f64::total_cmp);
    // Drop near-coincident samples so the grid stays strictly increasing.
    let tol = 1e-12 * fc.abs().max(1.0);
    f.dedup_by(|b, a| *b - *a <= tol);
    f
}

fn fmt_meta(extra: &mut BTreeMap<String, String>, key: String, v: f64) {
    extra.insert(key, format!("{v}"));
}

/// Generate one trace per pump setting, in the order given.
///
/// Noise is drawn from a single ChaCha8 stream seeded with `seed`, so the
/// same inputs always yield identical traces.
pub fn simulate_traces(sys: &OmSystem, spec: &SimSpec, seed: u64) -> Result<Vec<Trace>, SimError> {
    sys.cavity.validate()?;
    for m in &sys.mech_modes {
        m.validate()?;
    }
    spec.validate()?;
    let cav = sys.cavity;
    let kappa = cav.kappa();
    let sigma = spec.snr_db.map(|snr| noise_sigma(cav.amp_scale, snr));
    let normal = match sigma {
        Some(s) if s > 0.0 => Some(
            Normal::new(0.0, s / std::f64::consts::SQRT_2)
                .map_err(|e| SimError::Invalid(e.to_string()))?,
        ),
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut out = Vec::new();
    for pump in pump_points(sys, spec)? {
        let mut meta = TraceMeta::default();
        let extra = &mut meta.extra;
        extra.insert("seed".into(), seed.to_string());
        extra.insert(
            "snr_db".into(),
            spec.snr_db.map_or("inf".into(), |s| format!("{s}")),
        );
        fmt_meta(extra, "omega_c_hz".into(), rad_to_hz(cav.omega_c));
        fmt_meta(extra, "kappa_int_hz".into(), rad_to_hz(cav.kappa_int));
        fmt_meta(extra, "kappa_in_hz".into(), rad_to_hz(cav.kappa_in));
        fmt_meta(extra, "kappa_out_hz".into(), rad_to_hz(cav.kappa_out));
        fmt_meta(extra, "amp_scale".into(), cav.amp_scale);

        let model = match &pump {
            None => None,
            Some(p) => {
                let m1 = &sys.mech_modes[0];
                meta.pump_dbm = Some(p.dbm);
                meta.atten_db = Some(spec.atten_db);
                meta.pump_hz = Some(rad_to_hz(cav.omega_c - m1.omega_m));
                fmt_meta(extra, "n_d".into(), p.n_d);
                let terms = sys
                    .mech_modes
                    .iter()
                    .enumerate()
                    .map(|(k, m)| {
                        let coop = cooperativity(m.g0, p.n_d, kappa, m.gamma_m)?;
                        fmt_meta(extra, format!("mode{}_omega_m_hz", k + 1), rad_to_hz(m.omega_m));
                        fmt_meta(extra, format!("mode{}_gamma_m_hz", k + 1), rad_to_hz(m.gamma_m));
                        fmt_meta(extra, format!("mode{}_g0_hz", k + 1), rad_to_hz(m.g0));
                        fmt_meta(extra, format!("mode{}_coop", k + 1), coop);
                        Ok(MechTerm {
                            omega_m: m.omega_m,
                            gamma_m: m.gamma_m,
                            coop,
                        })
                    })
                    .collect::<Result<Vec<_>, ResponseError>>()?;
                Some(TwoToneModel {
                    cavity: cav,
                    pump_detuning: -m1.omega_m,
                    terms,
                })
            }
        };
        let model = model.unwrap_or(TwoToneModel {
            cavity: cav,
            pump_detuning: 0.0,
            terms: Vec::new(),
        });
        let is_pumped = !model.terms.is_empty();
        let freqs = probe_grid(sys, spec, is_pumped.then_some(&model));
        let fc = rad_to_hz(cav.omega_c);
        let s21: Vec<Complex64> = freqs
            .iter()
            .map(|&f| {
                let clean = model.s21(crate::units::hz_to_rad(f - fc));
                match &normal {
                    Some(n) => clean + Complex64::new(n.sample(&mut rng), n.sample(&mut rng)),
                    None => clean,
                }
            })
            .collect();
        let data = if spec.magnitude_only {
            TraceData::Magnitude(s21.iter().map(|z| z.norm()).collect())
        } else {
            TraceData::Complex(s21)
        };
        let trace = Trace::new(freqs, data, meta)
            .map_err(|e| SimError::Invalid(format!("generated trace rejected: {e}")))?;
        out.push(trace);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::omresponse::{CavityParams, MechMode};
    use crate::units::hz_to_rad;

    fn system() -> OmSystem {
        let cav = CavityParams::from_total(
            hz_to_rad(6.0e9),
            hz_to_rad(481e3),
            hz_to_rad(100e3),
            hz_to_rad(100e3),
            0.5,
        )
        .unwrap();
        OmSystem {
            cavity: cav,
            mech_modes: vec![MechMode::new(hz_to_rad(5.23e6), hz_to_rad(250.0), hz_to_rad(8.0)).unwrap()],
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let spec = SimSpec {
            pumps: PumpSweep::Cooperativity(vec![1.0, 10.0]),
            snr_db: Some(30.0),
            ..Default::default()
        };
        let a = simulate_traces(&system(), &spec, 11).unwrap();
        let b = simulate_traces(&system(), &spec, 11).unwrap();
        let c = simulate_traces(&system(), &spec, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_dip_depth() {
        let spec = SimSpec {
            pumps: PumpSweep::Cooperativity(vec![40.0]),
            ..Default::default()
        };
        let t = &simulate_traces(&system(), &spec, 0).unwrap()[0];
        let fc = 6.0e9;
        let i = t
            .freqs_hz()
            .iter()
            .position(|&f| (f - fc).abs() < 1e-3)
            .expect("dip centre sampled");
        let mag = t.magnitudes()[i];
        assert!((mag / 0.5 - 1.0 / 41.0).abs() < 1e-9);
        let coop: f64 = t.meta.extra["mode1_coop"].parse().unwrap();
        assert!((coop - 40.0).abs() < 1e-9);
    }

    #[test]
    fn noise_level_matches_snr() {
        let spec = SimSpec {
            snr_db: Some(30.0),
            points: 4001,
            span_kappa: 200.0,
            ..Default::default()
        };
        let sys = system();
        let noisy = &simulate_traces(&sys, &spec, 3).unwrap()[0];
        let clean = &simulate_traces(&sys, &SimSpec { snr_db: None, ..spec }, 3).unwrap()[0];
        let (TraceData::Complex(a), TraceData::Complex(b)) = (noisy.data(), clean.data()) else {
            panic!()
        };
        let var = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() / a.len() as f64;
        let expected = noise_sigma(0.5, 30.0);
        assert!((var.sqrt() / expected - 1.0).abs() < 0.05);
    }

    #[test]
    fn pump_dbm_matches_coop_target() {
        let sys = system();
        let by_coop = simulate_traces(
            &sys,
            &SimSpec {
                pumps: PumpSweep::Cooperativity(vec![5.0]),
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let dbm = by_coop[0].meta.pump_dbm.unwrap();
        let by_dbm = simulate_traces(
            &sys,
            &SimSpec {
                pumps: PumpSweep::PumpDbm(vec![dbm]),
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let coop: f64 = by_dbm[0].meta.extra["mode1_coop"].parse().unwrap();
        assert!((coop / 5.0 - 1.0).abs() < 1e-9);
    }
}
