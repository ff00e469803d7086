use rayon::prelude::*;

use super::{fit_bare_cavity, fit_omia, FitError, FitReport, ParamUnit, Trace};
use crate::omresponse::{photons_from_power, CavityParams, PhotonSource, PumpConfig};
use crate::units::{dbm_to_watts, hz_to_rad};

/// One cooperativity measurement at a known pump photon number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoopPoint {
    pub n_d: f64,
    pub coop: f64,
    pub coop_sigma: f64,
}

/// Linewidths entering the slope-to-g₀ conversion, rad/s, with their 1σ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedRates {
    pub kappa: f64,
    pub kappa_sigma: f64,
    pub gamma_m: f64,
    pub gamma_m_sigma: f64,
}

impl FixedRates {
    pub fn exact(kappa: f64, gamma_m: f64) -> Self {
        Self {
            kappa,
            kappa_sigma: 0.0,
            gamma_m,
            gamma_m_sigma: 0.0,
        }
    }
}

/// Straight line through the origin of cooperativity against photon
/// number, `C = s·n_d` with `s = 4g₀²/(κγ_m)`.
///
/// Points with `n_d` above `linear_max_nd` are excluded from the fit and
/// only checked afterwards: any that fall more than 3σ below the line are
/// listed in the report warnings as sublinear.
///
/// Weights are `1/σ²` when every point carries a positive `coop_sigma`;
/// otherwise the fit is unweighted and the slope uncertainty comes from
/// the residual scatter.
pub fn fit_coop_linear(
    points: &[CoopPoint],
    rates: FixedRates,
    linear_max_nd: Option<f64>,
) -> Result<FitReport, FitError> {
    let limit = linear_max_nd.unwrap_or(f64::INFINITY);
    let (linear, late): (Vec<CoopPoint>, Vec<CoopPoint>) =
        points.iter().partition(|p| p.n_d <= limit);
    if linear.len() < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            got: linear.len(),
        });
    }
    if let Some(p) = points.iter().find(|p| !(p.n_d > 0.0) || !p.coop.is_finite()) {
        return Err(FitError::InvalidTrace(format!(
            "cooperativity point needs n_d > 0 and finite C, got n_d={} C={}",
            p.n_d, p.coop
        )));
    }
    if !(rates.kappa > 0.0 && rates.gamma_m > 0.0) {
        return Err(FitError::InvalidTrace(
            "kappa and gamma_m must be positive".into(),
        ));
    }

    let weighted = linear.iter().all(|p| p.coop_sigma > 0.0);
    let weight = |p: &CoopPoint| {
        if weighted {
            1.0 / (p.coop_sigma * p.coop_sigma)
        } else {
            1.0
        }
    };
    let sxx: f64 = linear.iter().map(|p| weight(p) * p.n_d * p.n_d).sum();
    let sxy: f64 = linear.iter().map(|p| weight(p) * p.n_d * p.coop).sum();
    let slope = sxy / sxx;
    let chi2: f64 = linear
        .iter()
        .map(|p| weight(p) * (p.coop - slope * p.n_d).powi(2))
        .sum();
    let slope_sigma = if weighted {
        (1.0 / sxx).sqrt()
    } else {
        (chi2 / (linear.len() - 1) as f64 / sxx).sqrt()
    };
    if slope < 0.0 {
        return Err(FitError::NegativeSlope(slope));
    }

    let kg = rates.kappa * rates.gamma_m;
    let g0 = 0.5 * (slope * kg).sqrt();
    let mut report = FitReport::new("coop_linear");
    let g0_sigma = if slope > 0.0 {
        let rel = 0.5
            * ((slope_sigma / slope).powi(2)
                + (rates.kappa_sigma / rates.kappa).powi(2)
                + (rates.gamma_m_sigma / rates.gamma_m).powi(2))
            .sqrt();
        g0 * rel
    } else {
        report
            .warnings
            .push("zero slope: g0 unresolved, sigma is the one-sigma upper bound".into());
        0.5 * (slope_sigma * kg).sqrt()
    };

    for p in &late {
        let expected = slope * p.n_d;
        let spread = (p.coop_sigma.powi(2) + (p.n_d * slope_sigma).powi(2)).sqrt();
        if p.coop < expected - 3.0 * spread {
            report.warnings.push(format!(
                "sublinear point: n_d={:e} C={:.4} is more than 3 sigma below the linear fit ({:.4})",
                p.n_d, p.coop, expected
            ));
        }
    }

    report.residual_norm = chi2.sqrt();
    report.push("g0", ParamUnit::AngularFrequency, g0, g0_sigma);
    report.push("slope_per_photon", ParamUnit::Dimensionless, slope, slope_sigma);
    report.push("points_used", ParamUnit::Dimensionless, linear.len() as f64, 0.0);
    Ok(report)
}

/// Settings for [`batch_extract`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    /// Input coupling rate, rad/s; needed to convert pump power to photons.
    pub kappa_in: f64,
    /// Output coupling rate, rad/s.
    pub kappa_out: f64,
    /// Overrides the `atten_db` header of every trace.
    pub attenuation_db: Option<f64>,
    /// Upper photon number of the linear regime used for g₀.
    pub linear_max_nd: Option<f64>,
}

/// Per-trace result of the batch chain.
#[derive(Debug)]
pub struct TraceOutcome {
    /// Position of the trace in the caller's list.
    pub index: usize,
    pub pump_dbm: Option<f64>,
    pub result: Result<(FitReport, CoopPoint), FitError>,
}

#[derive(Debug)]
pub struct BatchResult {
    pub cavity: FitReport,
    pub cavity_params: CavityParams,
    /// Ordered by increasing pump power.
    pub traces: Vec<TraceOutcome>,
    /// Weighted mean of the fitted intrinsic linewidths, rad/s, with 1σ.
    pub gamma_m: (f64, f64),
    pub g0: Result<FitReport, FitError>,
}

impl BatchResult {
    pub fn points(&self) -> Vec<CoopPoint> {
        self.traces
            .iter()
            .filter_map(|t| t.result.as_ref().ok().map(|(_, p)| *p))
            .collect()
    }
}

fn trace_point(trace: &Trace, cavity: &CavityParams, config: &BatchConfig) -> Result<(FitReport, CoopPoint), FitError> {
    let pump_dbm = trace.meta.pump_dbm.ok_or(FitError::MissingMetadata("pump_dbm"))?;
    let pump_hz = trace.meta.pump_hz.ok_or(FitError::MissingMetadata("pump_hz"))?;
    let atten = config
        .attenuation_db
        .or(trace.meta.atten_db)
        .ok_or(FitError::MissingMetadata("atten_db"))?;
    let report = fit_omia(trace, cavity)?;
    let n_d = photons_from_power(
        cavity,
        &PumpConfig {
            omega_d: hz_to_rad(pump_hz),
            source: PhotonSource::Power {
                power_w: dbm_to_watts(pump_dbm),
                attenuation_db: Some(atten),
            },
        },
    )?;
    let point = CoopPoint {
        n_d,
        coop: report.value("coop"),
        coop_sigma: report.sigma("coop"),
    };
    Ok((report, point))
}

/// Full extraction over a pump-power series.
///
/// Inverse-variance mean of `(value, sigma)` pairs. The internal sigma is
/// scaled up by the Birge ratio `√(χ²/(n−1))` when the values scatter
/// more than their sigmas allow, as happens when they share a fitted
/// cavity. Zero sigmas everywhere give an unweighted mean with zero sigma.
fn weighted_mean(values: &[(f64, f64)]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|&(_, s)| s == 0.0) {
        let mean = values.iter().map(|v| v.0).sum::<f64>() / values.len() as f64;
        return (mean, 0.0);
    }
    let w = |s: f64| if s > 0.0 { 1.0 / (s * s) } else { 1.0 };
    let wsum: f64 = values.iter().map(|&(_, s)| w(s)).sum();
    let mean = values.iter().map(|&(v, s)| w(s) * v).sum::<f64>() / wsum;
    let internal = wsum.recip().sqrt();
    if values.len() < 2 {
        return (mean, internal);
    }
    let chi2: f64 = values.iter().map(|&(v, s)| w(s) * (v - mean).powi(2)).sum();
    let birge = (chi2 / (values.len() - 1) as f64).sqrt();
    (mean, internal * birge.max(1.0))
}

/// The bare cavity is fitted on the lowest-power trace; every trace is then
/// fitted for its OMIA feature (in parallel), converted to a
/// [`CoopPoint`], and the points inside the linear regime are regressed
/// for g₀. A failing trace is reported in its [`TraceOutcome`] and skipped.
pub fn batch_extract(traces: &[Trace], config: &BatchConfig) -> Result<BatchResult, FitError> {
    let mut order: Vec<usize> = (0..traces.len())
        .filter(|&i| traces[i].meta.pump_dbm.is_some())
        .collect();
    order.sort_by(|&a, &b| {
        traces[a].meta.pump_dbm.unwrap().total_cmp(&traces[b].meta.pump_dbm.unwrap())
    });
    order.extend((0..traces.len()).filter(|&i| traces[i].meta.pump_dbm.is_none()));
    let &lowest = order.first().ok_or(FitError::TooFewPoints { needed: 1, got: 0 })?;
    if traces[lowest].meta.pump_dbm.is_none() {
        return Err(FitError::MissingMetadata("pump_dbm"));
    }

    let cavity = fit_bare_cavity(&traces[lowest])?;
    let cavity_params = CavityParams::from_total(
        cavity.value("omega_c"),
        cavity.value("kappa"),
        config.kappa_in,
        config.kappa_out,
        cavity.value("amp_scale"),
    )?;

    let outcomes: Vec<TraceOutcome> = order
        .par_iter()
        .map(|&i| TraceOutcome {
            index: i,
            pump_dbm: traces[i].meta.pump_dbm,
            result: trace_point(&traces[i], &cavity_params, config),
        })
        .collect();
    for o in &outcomes {
        if let Err(e) = &o.result {
            log::warn!("trace {} skipped: {e}", o.index);
        }
    }

    let limit = config.linear_max_nd.unwrap_or(f64::INFINITY);
    let linear: Vec<(f64, f64)> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok())
        .filter(|(_, p)| p.n_d <= limit)
        .map(|(r, _)| (r.value("gamma_m"), r.sigma("gamma_m")))
        .collect();
    let gamma_m = weighted_mean(&linear);
    let points: Vec<CoopPoint> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().map(|(_, p)| *p))
        .collect();
    let g0 = if gamma_m.0.is_finite() {
        fit_coop_linear(
            &points,
            FixedRates {
                kappa: cavity.value("kappa"),
                kappa_sigma: cavity.sigma("kappa"),
                gamma_m: gamma_m.0,
                gamma_m_sigma: gamma_m.1,
            },
            config.linear_max_nd,
        )
    } else {
        Err(FitError::TooFewPoints {
            needed: 3,
            got: 0,
        })
    };

    Ok(BatchResult {
        cavity,
        cavity_params,
        traces: outcomes,
        gamma_m,
        g0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn exact_points(g0: f64, kappa: f64, gamma: f64, nds: &[f64]) -> Vec<CoopPoint> {
        nds.iter()
            .map(|&n| CoopPoint {
                n_d: n,
                coop: 4.0 * g0 * g0 * n / (kappa * gamma),
                coop_sigma: 0.0,
            })
            .collect()
    }

    #[test]
    fn weighted_mean_inflates_for_excess_scatter() {
        // Consistent values keep the internal sigma 1/√2.
        let (m, s) = weighted_mean(&[(1.0, 1.0), (1.0, 1.0)]);
        assert_eq!(m, 1.0);
        assert!((s - 0.5f64.sqrt()).abs() < 1e-15);
        // Values 10 apart with unit sigmas: χ² = 50, Birge ratio √50.
        let (m, s) = weighted_mean(&[(0.0, 1.0), (10.0, 1.0)]);
        assert_eq!(m, 5.0);
        assert!((s - 0.5f64.sqrt() * 50f64.sqrt()).abs() < 1e-12);
        assert_eq!(weighted_mean(&[(2.0, 0.0), (4.0, 0.0)]), (3.0, 0.0));
        assert!(weighted_mean(&[]).0.is_nan());
    }

    #[test]
    fn exact_points_give_exact_g0() {
        let (g0, k, g) = (TAU * 8.0, TAU * 481e3, TAU * 250.0);
        let pts = exact_points(g0, k, g, &[1e5, 1e6, 5e6, 1e7]);
        let r = fit_coop_linear(&pts, FixedRates::exact(k, g), None).unwrap();
        assert!((r.value("g0") / g0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let (k, g) = (TAU * 481e3, TAU * 250.0);
        let pts = exact_points(TAU * 8.0, k, g, &[1e5, 1e6]);
        assert!(matches!(
            fit_coop_linear(&pts, FixedRates::exact(k, g), None),
            Err(FitError::TooFewPoints { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn all_zero_coop_is_flagged() {
        let zero: Vec<CoopPoint> = [1e5, 1e6, 1e7]
            .iter()
            .map(|&n| CoopPoint {
                n_d: n,
                coop: 0.0,
                coop_sigma: 0.1,
            })
            .collect();
        let r = fit_coop_linear(&zero, FixedRates::exact(1e6, 1e3), None).unwrap();
        assert_eq!(r.value("g0"), 0.0);
        assert!(r.sigma("g0") > 0.0);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn negative_slope_rejected() {
        let pts: Vec<CoopPoint> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&n| CoopPoint {
                n_d: n,
                coop: -0.1 * n,
                coop_sigma: 0.01,
            })
            .collect();
        assert!(matches!(
            fit_coop_linear(&pts, FixedRates::exact(1.0, 1.0), None),
            Err(FitError::NegativeSlope(s)) if s < 0.0
        ));
    }

    #[test]
    fn linear_limit_and_sublinear_flag() {
        let (g0, k, g) = (TAU * 8.0, TAU * 481e3, TAU * 250.0);
        let mut pts = exact_points(g0, k, g, &[1e5, 1e6, 5e6, 1e7, 1e8]);
        for p in &mut pts {
            p.coop_sigma = 0.01 * p.coop;
        }
        pts[4].coop *= 0.5;
        let r = fit_coop_linear(&pts, FixedRates::exact(k, g), Some(2e7)).unwrap();
        assert!((r.value("g0") / g0 - 1.0).abs() < 1e-12);
        assert_eq!(r.value("points_used"), 4.0);
        assert_eq!(r.warnings.len(), 1);
    }
}
