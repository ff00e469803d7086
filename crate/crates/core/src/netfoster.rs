//! Lossless one-port admittance and Foster-form mode extraction.
//!
//! A lossless network seen from a port has a purely imaginary admittance
//! whose imaginary part increases monotonically with frequency between poles.
//! Every zero crossing with positive slope is a resonant mode; the slope at
//! the crossing fixes the equivalent parallel-LC elements of that mode:
//!
//! ```text
//! Z   = 2 / (ω₀ · dY/dω)
//! C_p = 1 / (Z · ω₀)        (= slope / 2)
//! L_p = Z / ω₀
//! ```

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum relative distance between a synthesis grid point and a branch pole.
pub const POLE_GUARD: f64 = 1e-6;

/// Relative tolerance of the zero-crossing refinement.
pub const ROOT_RTOL: f64 = 1e-10;

/// Number of samples used by the local least-squares slope fit.
pub const SLOPE_WINDOW: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid admittance trace: {0}")]
    InvalidTrace(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("network has no elements")]
    EmptyNetwork,
    #[error("grid point {omega:.6e} rad/s lies within the pole guard of branch pole {pole:.6e} rad/s")]
    GridAtPole { omega: f64, pole: f64 },
    #[error("no positive-slope zero crossing found")]
    NoModeFound,
    #[error("grid too coarse to resolve crossing between {lo:.6e} and {hi:.6e} rad/s")]
    GridTooCoarse { lo: f64, hi: f64 },
    #[error("capacitance must be non-negative, got {0:e} F")]
    NegativeCapacitance(f64),
    #[error("mode capacitance must be positive, got {0:e} F")]
    NonPositiveCp(f64),
}

/// Tabulated imaginary part of a port admittance on an angular frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceTrace {
    freqs: Vec<f64>,
    y_imag: Vec<f64>,
}

impl AdmittanceTrace {
    /// `freqs` in rad/s, strictly increasing and positive; `y_imag` in siemens.
    pub fn new(freqs: Vec<f64>, y_imag: Vec<f64>) -> Result<Self, NetError> {
        if freqs.len() != y_imag.len() {
            return Err(NetError::InvalidTrace(format!(
                "length mismatch: {} frequencies, {} admittance values",
                freqs.len(),
                y_imag.len()
            )));
        }
        if freqs.len() < 3 {
            return Err(NetError::InvalidTrace(format!(
                "need at least 3 points, got {}",
                freqs.len()
            )));
        }
        if let Some(i) = freqs.iter().position(|w| !w.is_finite() || *w <= 0.0) {
            return Err(NetError::InvalidTrace(format!(
                "frequency #{i} is not a positive finite value ({})",
                freqs[i]
            )));
        }
        if let Some(i) = y_imag.iter().position(|y| !y.is_finite()) {
            return Err(NetError::InvalidTrace(format!(
                "admittance #{i} is not finite ({})",
                y_imag[i]
            )));
        }
        if let Some(i) = freqs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(NetError::InvalidTrace(format!(
                "frequencies not strictly increasing at #{}",
                i + 1
            )));
        }
        Ok(Self { freqs, y_imag })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn y_imag(&self) -> &[f64] {
        &self.y_imag
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }
}

/// Series-LC branch of the admittance Foster form, contributing
/// `ωC/(1 − ω²LC)` with a pole at `1/√(LC)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcBranch {
    #[serde(rename = "l_h")]
    pub l: f64,
    #[serde(rename = "c_f")]
    pub c: f64,
}

impl LcBranch {
    pub fn pole(&self) -> f64 {
        1.0 / (self.l * self.c).sqrt()
    }

    fn susceptance(&self, w: f64) -> f64 {
        w * self.c / (1.0 - w * w * self.l * self.c)
    }
}

/// Canonical lossless admittance: shunt capacitor, optional shunt inductor
/// (the `−1/(ωL)` term) and resonant branches.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FosterNetwork {
    pub shunt_c: f64,
    pub series_l: Option<f64>,
    pub branches: Vec<LcBranch>,
}

impl FosterNetwork {
    /// A single parallel-LC mode.
    pub fn lc(c: f64, l: f64) -> Self {
        Self {
            shunt_c: c,
            series_l: Some(l),
            branches: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if !self.shunt_c.is_finite() || self.shunt_c < 0.0 {
            return Err(NetError::InvalidNetwork(format!(
                "shunt_c must be a finite value >= 0, got {}",
                self.shunt_c
            )));
        }
        if let Some(l) = self.series_l {
            if !l.is_finite() || l <= 0.0 {
                return Err(NetError::InvalidNetwork(format!(
                    "series_l must be positive, got {l}"
                )));
            }
        }
        for (k, b) in self.branches.iter().enumerate() {
            if !(b.l.is_finite() && b.c.is_finite() && b.l > 0.0 && b.c > 0.0) {
                return Err(NetError::InvalidNetwork(format!(
                    "branch {k} needs positive L and C, got L={} C={}",
                    b.l, b.c
                )));
            }
        }
        let mut poles = self.poles();
        poles.sort_by(f64::total_cmp);
        if poles.windows(2).any(|p| (p[1] - p[0]) <= 1e-12 * p[1]) {
            return Err(NetError::InvalidNetwork(
                "branch resonant frequencies must be pairwise distinct".into(),
            ));
        }
        if self.shunt_c == 0.0 && self.series_l.is_none() && self.branches.is_empty() {
            return Err(NetError::EmptyNetwork);
        }
        Ok(())
    }

    pub fn poles(&self) -> Vec<f64> {
        self.branches.iter().map(LcBranch::pole).collect()
    }

    /// Im[Y(ω)] in siemens. Not guarded against poles.
    pub fn susceptance(&self, w: f64) -> f64 {
        let mut y = w * self.shunt_c;
        if let Some(l) = self.series_l {
            y -= 1.0 / (w * l);
        }
        y + self.branches.iter().map(|b| b.susceptance(w)).sum::<f64>()
    }

    /// Same network with `c_m` added in parallel.
    pub fn with_added_capacitance(&self, c_m: f64) -> Self {
        Self {
            shunt_c: self.shunt_c + c_m,
            ..self.clone()
        }
    }

    /// Frequencies that set the scale of the network's response.
    fn characteristic_freqs(&self) -> Vec<f64> {
        let mut out = self.poles();
        if let Some(l) = self.series_l {
            let c_tot = self.shunt_c + self.branches.iter().map(|b| b.c).sum::<f64>();
            if c_tot > 0.0 {
                out.push(1.0 / (l * c_tot).sqrt());
            }
            if self.shunt_c > 0.0 {
                out.push(1.0 / (l * self.shunt_c).sqrt());
            }
        }
        out
    }
}

/// Evaluate the Foster-form susceptance of `network` on `grid` (rad/s).
pub fn synthesize_admittance(
    network: &FosterNetwork,
    grid: &[f64],
) -> Result<AdmittanceTrace, NetError> {
    network.validate()?;
    let poles = network.poles();
    for &w in grid {
        if let Some(&pole) = poles.iter().find(|&&p| ((w - p) / p).abs() < POLE_GUARD) {
            return Err(NetError::GridAtPole { omega: w, pole });
        }
    }
    let y = grid.iter().map(|&w| network.susceptance(w)).collect();
    AdmittanceTrace::new(grid.to_vec(), y)
}

/// Add a parallel capacitance `c_m`: `Y_t(ω) = Y_p(ω) + ωC_m`.
pub fn total_admittance(trace: &AdmittanceTrace, c_m: f64) -> Result<AdmittanceTrace, NetError> {
    if !(c_m >= 0.0) || !c_m.is_finite() {
        return Err(NetError::NegativeCapacitance(c_m));
    }
    if c_m == 0.0 {
        return Ok(trace.clone());
    }
    let y = trace
        .freqs
        .iter()
        .zip(&trace.y_imag)
        .map(|(w, y)| y + w * c_m)
        .collect();
    Ok(AdmittanceTrace {
        freqs: trace.freqs.clone(),
        y_imag: y,
    })
}

/// One resonant mode extracted from a positive-slope zero crossing.
///
/// `impedance_z` is `2/(ω₀·slope)`, the characteristic impedance
/// `√(L_p/C_p)` of the mode with `C_p` the *total* capacitance seen at the
/// port (environment plus any added capacitance). When a mechanical
/// capacitance `C_m` is part of the trace, the environment share is
/// `C_p − C_m`, and some authors quote the impedance against `C_m` alone;
/// [`ModeParams::impedance_against`] evaluates `√(L_p/C)` for any chosen
/// capacitance so both conventions are available.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeParams {
    /// Resonant angular frequency, rad/s.
    pub omega0: f64,
    /// dIm[Y]/dω at the crossing, farad.
    pub slope: f64,
    /// Ohm.
    pub impedance_z: f64,
    /// Farad.
    pub c_p: f64,
    /// Henry.
    pub l_p: f64,
}

impl ModeParams {
    pub fn from_slope(omega0: f64, slope: f64) -> Self {
        let impedance_z = 2.0 / (omega0 * slope);
        Self {
            omega0,
            slope,
            impedance_z,
            c_p: 1.0 / (impedance_z * omega0),
            l_p: impedance_z / omega0,
        }
    }

    pub fn frequency_hz(&self) -> f64 {
        crate::units::rad_to_hz(self.omega0)
    }

    /// `√(L_p/C)` for an arbitrary capacitance `c`.
    pub fn impedance_against(&self, c: f64) -> f64 {
        (self.l_p / c).sqrt()
    }
}

/// Locate every positive-slope zero crossing of `trace`, sorted by frequency.
pub fn find_modes(trace: &AdmittanceTrace) -> Result<Vec<ModeParams>, NetError> {
    let w = &trace.freqs;
    let y = &trace.y_imag;
    let mut modes = Vec::new();
    for i in 0..w.len() - 1 {
        if !(y[i] < 0.0 && y[i + 1] >= 0.0) {
            continue;
        }
        let (rs, re) = monotone_run(y, i);
        if re - rs + 1 < SLOPE_WINDOW {
            return Err(NetError::GridTooCoarse {
                lo: w[i],
                hi: w[i + 1],
            });
        }
        let omega0 = if y[i + 1] == 0.0 {
            w[i + 1]
        } else {
            refine_root(w, y, i, rs, re)?
        };
        let slope = local_slope(w, y, omega0, rs, re);
        if !(slope > 0.0) {
            return Err(NetError::GridTooCoarse {
                lo: w[i],
                hi: w[i + 1],
            });
        }
        modes.push(ModeParams::from_slope(omega0, slope));
    }
    if modes.is_empty() {
        return Err(NetError::NoModeFound);
    }
    Ok(modes)
}

/// Maximal run of strictly increasing samples containing `i` and `i + 1`.
fn monotone_run(y: &[f64], i: usize) -> (usize, usize) {
    let mut rs = i;
    while rs > 0 && y[rs - 1] < y[rs] {
        rs -= 1;
    }
    let mut re = i + 1;
    while re + 1 < y.len() && y[re + 1] > y[re] {
        re += 1;
    }
    (rs, re)
}

/// Cubic Lagrange interpolant through four run samples around the bracket.
struct LocalInterp {
    nodes: [f64; 4],
    values: [f64; 4],
    origin: f64,
    scale: f64,
}

impl LocalInterp {
    fn new(w: &[f64], y: &[f64], i: usize, rs: usize, re: usize) -> Self {
        let start = i.saturating_sub(1).clamp(rs, re - 3);
        let origin = w[i];
        let scale = w[i + 1] - w[i];
        let mut nodes = [0.0; 4];
        let mut values = [0.0; 4];
        for k in 0..4 {
            nodes[k] = (w[start + k] - origin) / scale;
            values[k] = y[start + k];
        }
        Self {
            nodes,
            values,
            origin,
            scale,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for a in 0..4 {
            let mut basis = 1.0;
            for b in 0..4 {
                if a != b {
                    basis *= (t - self.nodes[b]) / (self.nodes[a] - self.nodes[b]);
                }
            }
            acc += self.values[a] * basis;
        }
        acc
    }

    fn omega(&self, t: f64) -> f64 {
        self.origin + t * self.scale
    }
}

/// Bisection on the local interpolant to `ROOT_RTOL`, finished with one
/// inverse-quadratic step.
fn refine_root(w: &[f64], y: &[f64], i: usize, rs: usize, re: usize) -> Result<f64, NetError> {
    let p = LocalInterp::new(w, y, i, rs, re);
    let coarse = || NetError::GridTooCoarse {
        lo: w[i],
        hi: w[i + 1],
    };

    // A bracket hiding a pole shows up as a non-monotone interpolant.
    const SAMPLES: usize = 16;
    let mut prev = p.eval(0.0);
    for k in 1..=SAMPLES {
        let v = p.eval(k as f64 / SAMPLES as f64);
        if v <= prev {
            return Err(coarse());
        }
        prev = v;
    }

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let (mut f_lo, mut f_hi) = (p.eval(lo), p.eval(hi));
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(coarse());
    }
    while (hi - lo) * p.scale > ROOT_RTOL * p.omega(lo) {
        let mid = 0.5 * (lo + hi);
        let f_mid = p.eval(mid);
        if f_mid == 0.0 {
            return Ok(p.omega(mid));
        }
        if f_mid < 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    let f_mid = p.eval(mid);
    let t = inverse_quadratic([lo, mid, hi], [f_lo, f_mid, f_hi])
        .filter(|t| (lo..=hi).contains(t))
        .unwrap_or(mid);
    Ok(p.omega(t))
}

fn inverse_quadratic(x: [f64; 3], f: [f64; 3]) -> Option<f64> {
    let (d01, d02, d12) = (f[0] - f[1], f[0] - f[2], f[1] - f[2]);
    if d01 == 0.0 || d02 == 0.0 || d12 == 0.0 {
        return None;
    }
    let t = x[0] * f[1] * f[2] / (d01 * d02) - x[1] * f[0] * f[2] / (d01 * d12)
        + x[2] * f[0] * f[1] / (d02 * d12);
    t.is_finite().then_some(t)
}

/// dY/dω at `omega0` from a least-squares quadratic over the
/// `SLOPE_WINDOW` run samples nearest the root.
fn local_slope(w: &[f64], y: &[f64], omega0: f64, rs: usize, re: usize) -> f64 {
    let pos = w[rs..=re].partition_point(|&v| v < omega0) + rs;
    let mut lo = pos.saturating_sub(SLOPE_WINDOW / 2).max(rs);
    let hi = (lo + SLOPE_WINDOW - 1).min(re);
    lo = hi + 1 - SLOPE_WINDOW.min(hi + 1 - rs);

    let scale = (w[hi] - w[lo]) / (hi - lo) as f64;
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for k in lo..=hi {
        let x = (w[k] - omega0) / scale;
        let row = Vector3::new(1.0, x, x * x);
        ata += row * row.transpose();
        atb += row * y[k];
    }
    match ata.lu().solve(&atb) {
        Some(coef) => coef[1] / scale,
        None => f64::NAN,
    }
}

/// Fraction `C_m / (C_m + C_p)` of the mode capacitance carried by `c_m`.
pub fn participation_ratio(c_m: f64, c_p: f64) -> Result<f64, NetError> {
    if !(c_p > 0.0) {
        return Err(NetError::NonPositiveCp(c_p));
    }
    if !(c_m >= 0.0) {
        return Err(NetError::NegativeCapacitance(c_m));
    }
    Ok(c_m / (c_m + c_p))
}

/// Log-spaced grid spanning the network's characteristic frequencies, kept
/// clear of branch poles.
pub fn auto_grid(network: &FosterNetwork, points_per_decade: usize) -> Vec<f64> {
    let chars = network.characteristic_freqs();
    let (lo, hi) = if chars.is_empty() {
        (1e6, 1e12)
    } else {
        let min = chars.iter().copied().fold(f64::INFINITY, f64::min);
        let max = chars.iter().copied().fold(0.0, f64::max);
        (min / 20.0, max * 20.0)
    };
    let decades = (hi / lo).log10();
    let n = ((decades * points_per_decade as f64).ceil() as usize).max(16);
    let poles = network.poles();
    let guard = 10.0 * POLE_GUARD;
    let mut grid: Vec<f64> = (0..=n)
        .map(|k| lo * 10f64.powf(decades * k as f64 / n as f64))
        .map(|w| {
            match poles.iter().find(|&&p| ((w - p) / p).abs() < guard) {
                Some(&p) if w < p => p * (1.0 - guard),
                Some(&p) => p * (1.0 + guard),
                None => w,
            }
        })
        .collect();
    grid.dedup_by(|a, b| *a <= *b);
    grid
}

/// Lowest resonance of `network` with `c_m` added in parallel, rad/s.
pub fn coupled_mode_frequency(network: &FosterNetwork, c_m: f64) -> Result<f64, NetError> {
    Ok(coupled_mode(network, c_m)?.omega0)
}

/// Lowest mode of `network` loaded by `c_m`, located on an automatic grid
/// and then re-extracted on a dense local grid.
pub fn coupled_mode(network: &FosterNetwork, c_m: f64) -> Result<ModeParams, NetError> {
    Ok(coupled_modes(network, c_m)?[0])
}

/// Every mode of `network` loaded by `c_m` inside the automatic grid, each
/// re-extracted by [`refine_mode`].
pub fn coupled_modes(network: &FosterNetwork, c_m: f64) -> Result<Vec<ModeParams>, NetError> {
    network.validate()?;
    let coarse_grid = auto_grid(network, 400);
    let coarse = total_admittance(&synthesize_admittance(network, &coarse_grid)?, c_m)?;
    find_modes(&coarse)?
        .iter()
        .map(|m| refine_mode(network, c_m, m.omega0))
        .collect()
}

/// Re-extract the mode nearest `omega_guess` on a 401-point grid spanning
/// ±1% of it, narrowed to a quarter of the distance to the closest pole.
pub fn refine_mode(network: &FosterNetwork, c_m: f64, omega_guess: f64) -> Result<ModeParams, NetError> {
    let mut half: f64 = 1e-2;
    for p in network.poles() {
        let d = ((p - omega_guess) / omega_guess).abs();
        half = half.min(0.25 * d);
    }
    let n = 400;
    let fine_grid: Vec<f64> = (0..=n)
        .map(|k| omega_guess * (1.0 - half + 2.0 * half * k as f64 / n as f64))
        .collect();
    let fine = total_admittance(&synthesize_admittance(network, &fine_grid)?, c_m)?;
    find_modes(&fine)?
        .into_iter()
        .min_by(|a, b| {
            (a.omega0 - omega_guess)
                .abs()
                .total_cmp(&(b.omega0 - omega_guess).abs())
        })
        .ok_or(NetError::NoModeFound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    const FF: f64 = 1e-15;
    const NH: f64 = 1e-9;

    fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn lc_susceptance_formula() {
        let net = FosterNetwork::lc(29.8 * FF, 5.4 * NH);
        let w = TAU * 1e9;
        let tr = synthesize_admittance(&net, &[w, 2.0 * w, 3.0 * w]).unwrap();
        let expect = w * 29.8 * FF - 1.0 / (w * 5.4 * NH);
        assert!((tr.y_imag()[0] - expect).abs() <= 1e-15 * expect.abs());
        assert!(tr.y_imag()[0] < 0.0);
    }

    #[test]
    fn shunt_only_is_linear_without_modes() {
        let net = FosterNetwork {
            shunt_c: 50.0 * FF,
            ..Default::default()
        };
        let grid = linear_grid(1e9, 1e11, 200);
        let tr = synthesize_admittance(&net, &grid).unwrap();
        for (w, y) in tr.freqs().iter().zip(tr.y_imag()) {
            assert!((y - w * 50.0 * FF).abs() < 1e-18);
        }
        assert_eq!(find_modes(&tr), Err(NetError::NoModeFound));
    }

    #[test]
    fn branch_pole_changes_sign() {
        let br = LcBranch { l: 2.0 * NH, c: 100.0 * FF };
        let net = FosterNetwork {
            shunt_c: 0.0,
            series_l: None,
            branches: vec![br],
        };
        let p = br.pole();
        let tr = synthesize_admittance(&net, &[p * (1.0 - 1e-4), p * (1.0 + 1e-4)]);
        // two points is not a valid trace; evaluate directly instead
        assert!(tr.is_err());
        assert!(net.susceptance(p * (1.0 - 1e-5)) > 1.0);
        assert!(net.susceptance(p * (1.0 + 1e-5)) < -1.0);
    }

    #[test]
    fn grid_at_pole_rejected() {
        let br = LcBranch { l: 2.0 * NH, c: 100.0 * FF };
        let net = FosterNetwork {
            shunt_c: 10.0 * FF,
            series_l: None,
            branches: vec![br],
        };
        let p = br.pole();
        let err = synthesize_admittance(&net, &[p * 0.5, p * (1.0 + 1e-7), p * 2.0]).unwrap_err();
        assert!(matches!(err, NetError::GridAtPole { .. }));
    }

    #[test]
    fn empty_network_rejected() {
        let err = synthesize_admittance(&FosterNetwork::default(), &[1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(err, NetError::EmptyNetwork);
    }

    #[test]
    fn duplicate_poles_rejected() {
        let b = LcBranch { l: 1.0 * NH, c: 1.0 * FF };
        let net = FosterNetwork {
            shunt_c: 1.0 * FF,
            series_l: None,
            branches: vec![b, b],
        };
        assert!(matches!(net.validate(), Err(NetError::InvalidNetwork(_))));
    }

    #[test]
    fn total_admittance_identity_and_linearity() {
        let net = FosterNetwork {
            shunt_c: 29.8 * FF,
            ..Default::default()
        };
        let grid = linear_grid(1e9, 1e11, 50);
        let tr = synthesize_admittance(&net, &grid).unwrap();
        assert_eq!(total_admittance(&tr, 0.0).unwrap(), tr);
        let sum = total_admittance(&tr, 23.0 * FF).unwrap();
        let direct = synthesize_admittance(
            &FosterNetwork {
                shunt_c: 52.8 * FF,
                ..Default::default()
            },
            &grid,
        )
        .unwrap();
        for (a, b) in sum.y_imag().iter().zip(direct.y_imag()) {
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }
        assert!(total_admittance(&tr, -1e-15).is_err());
    }

    #[test]
    fn lc_mode_recovered() {
        let (c, l) = (52.8 * FF, 5.4 * NH);
        let w0 = 1.0 / (l * c).sqrt();
        let grid = linear_grid(0.5 * w0, 1.5 * w0, 2001);
        let tr = synthesize_admittance(&FosterNetwork::lc(c, l), &grid).unwrap();
        let modes = find_modes(&tr).unwrap();
        assert_eq!(modes.len(), 1);
        let m = modes[0];
        assert!(((m.omega0 - w0) / w0).abs() < 1e-10);
        assert!(((m.c_p - c) / c).abs() < 1e-6);
        assert!(((m.l_p - l) / l).abs() < 1e-6);
        assert!(((m.impedance_z - (l / c).sqrt()) / 319.8).abs() < 1e-3);
        assert!((m.frequency_hz() / 1e9 - 9.43).abs() < 0.005);
        let self_consistent = 1.0 / (m.l_p * m.c_p).sqrt();
        assert!(((self_consistent - m.omega0) / m.omega0).abs() < 1e-9);
    }

    #[test]
    fn coarse_bracket_around_pole_is_reported() {
        // Two samples straddling a pole: the run around the bracket is too short.
        let br = LcBranch { l: 2.0 * NH, c: 100.0 * FF };
        let net = FosterNetwork {
            shunt_c: 10.0 * FF,
            series_l: None,
            branches: vec![br],
        };
        let p = br.pole();
        let grid = vec![0.2 * p, 0.5 * p, 1.8 * p, 2.5 * p, 3.0 * p];
        let tr = synthesize_admittance(&net, &grid).unwrap();
        assert!(matches!(
            find_modes(&tr),
            Err(NetError::GridTooCoarse { .. }) | Err(NetError::NoModeFound)
        ));
    }

    #[test]
    fn participation_cases() {
        let r = participation_ratio(23.0 * FF, 29.8 * FF).unwrap();
        assert!((r - 0.4356).abs() < 1e-3);
        assert_eq!(participation_ratio(0.0, 29.8 * FF).unwrap(), 0.0);
        assert_eq!(participation_ratio(5.0 * FF, 5.0 * FF).unwrap(), 0.5);
        assert_eq!(
            participation_ratio(1.0, 0.0),
            Err(NetError::NonPositiveCp(0.0))
        );
    }

    #[test]
    fn coupled_mode_with_drum_capacitance() {
        let net = FosterNetwork::lc(29.8 * FF, 5.4 * NH);
        let w = coupled_mode_frequency(&net, 23.0 * FF).unwrap();
        let oracle = 1.0 / (5.4 * NH * 52.8 * FF).sqrt();
        assert!(((w - oracle) / oracle).abs() < 1e-9);
        let bare = coupled_mode_frequency(&net, 0.0).unwrap();
        let bare_oracle = 1.0 / (5.4 * NH * 29.8 * FF).sqrt();
        assert!(((bare - bare_oracle) / bare_oracle).abs() < 1e-9);
        let doubled = coupled_mode_frequency(&net, 46.0 * FF).unwrap();
        assert!(doubled < w);
    }

    #[test]
    fn mode_between_branch_poles() {
        // No shunt inductor: the lowest mode sits above the first pole.
        let br = LcBranch { l: 3.0 * NH, c: 40.0 * FF };
        let net = FosterNetwork {
            shunt_c: 20.0 * FF,
            series_l: None,
            branches: vec![br],
        };
        let w = coupled_mode_frequency(&net, 0.0).unwrap();
        // ωC_s + ωC/(1−ω²LC) = 0  →  ω² = (C_s + C)/(L·C·C_s)
        let oracle = ((20.0 + 40.0) / (3.0 * NH * 40.0 * FF * 20.0)).sqrt();
        assert!(((w - oracle) / oracle).abs() < 1e-9, "{w} vs {oracle}");
        assert!(w > br.pole());
    }
}
