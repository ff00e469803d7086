//! Forward model of a microwave optomechanical cavity under a red-detuned
//! pump: bare Lorentzian transmission, two-tone OMIT/OMIA response,
//! cooperativity and photon-number calibration.
//!
//! With a pump at `ω_d` and a probe at `ω_p = ω_c + Δ`, each mechanical mode
//! `k` contributes `C_k / (1 − 2iΔ_k/γ_k)` to the denominator of the probe
//! transmission, with `Δ_k = ω_p − ω_d − ω_k`. For the canonical pump
//! position `ω_d = ω_c − ω_m` this reduces to `Δ_k = Δ`:
//!
//! ```text
//! S21(Δ) = A / [ (1 − 2iΔ/κ) + C / (1 − 2iΔ/γ_m) ]
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{attenuation_factor, HBAR};

/// Effective-mass factor of a clamped circular drum fundamental mode.
pub const DEFAULT_MASS_FACTOR: f64 = 0.27;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResponseError {
    #[error("{name} must be positive, got {value:e}")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("cooperativity must be non-negative, got {0}")]
    NegativeCooperativity(f64),
    #[error("pump power given without input-chain attenuation")]
    MissingAttenuation,
    #[error("effective mass not set and no geometry to derive it from")]
    MissingMass,
}

fn positive(name: &'static str, value: f64) -> Result<f64, ResponseError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ResponseError::NonPositiveRate { name, value })
    }
}

/// Cavity mode with its decay rates split by channel, all in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    pub omega_c: f64,
    pub kappa_int: f64,
    pub kappa_in: f64,
    pub kappa_out: f64,
    /// Peak transmission prefactor √(η_L η_R), treated as a free amplitude.
    pub amp_scale: f64,
}

impl CavityParams {
    pub fn new(
        omega_c: f64,
        kappa_int: f64,
        kappa_in: f64,
        kappa_out: f64,
        amp_scale: f64,
    ) -> Result<Self, ResponseError> {
        let p = Self {
            omega_c,
            kappa_int,
            kappa_in,
            kappa_out,
            amp_scale,
        };
        p.validate()?;
        Ok(p)
    }

    /// Build from a total linewidth, attributing the remainder to internal loss.
    pub fn from_total(
        omega_c: f64,
        kappa: f64,
        kappa_in: f64,
        kappa_out: f64,
        amp_scale: f64,
    ) -> Result<Self, ResponseError> {
        Self::new(omega_c, kappa - kappa_in - kappa_out, kappa_in, kappa_out, amp_scale)
    }

    pub fn validate(&self) -> Result<(), ResponseError> {
        positive("omega_c", self.omega_c)?;
        positive("kappa_int", self.kappa_int)?;
        positive("kappa_in", self.kappa_in)?;
        positive("kappa_out", self.kappa_out)?;
        if !(self.amp_scale > 0.0 && self.amp_scale <= 1.0) {
            return Err(ResponseError::InvalidParameter {
                name: "amp_scale",
                reason: format!("must lie in (0, 1], got {}", self.amp_scale),
            });
        }
        Ok(())
    }

    /// Total linewidth κ.
    pub fn kappa(&self) -> f64 {
        self.kappa_int + self.kappa_in + self.kappa_out
    }
}

/// One mechanical mode, rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechMode {
    pub omega_m: f64,
    pub gamma_m: f64,
    pub g0: f64,
    pub mass_eff: Option<f64>,
}

impl MechMode {
    pub fn new(omega_m: f64, gamma_m: f64, g0: f64) -> Result<Self, ResponseError> {
        let m = Self {
            omega_m,
            gamma_m,
            g0,
            mass_eff: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ResponseError> {
        positive("gamma_m", self.gamma_m)?;
        if !(self.omega_m > self.gamma_m) {
            return Err(ResponseError::InvalidParameter {
                name: "omega_m",
                reason: format!(
                    "must exceed gamma_m ({:e}), got {:e}",
                    self.gamma_m, self.omega_m
                ),
            });
        }
        if !(self.g0 >= 0.0) {
            return Err(ResponseError::InvalidParameter {
                name: "g0",
                reason: format!("must be non-negative, got {}", self.g0),
            });
        }
        if let Some(m) = self.mass_eff {
            positive("mass_eff", m)?;
        }
        Ok(())
    }
}

/// Where the intracavity pump photon number comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhotonSource {
    /// Photon number given directly.
    Photons(f64),
    /// Source power in watts and input-chain attenuation in dB.
    Power {
        power_w: f64,
        attenuation_db: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpConfig {
    /// Pump angular frequency, rad/s.
    pub omega_d: f64,
    pub source: PhotonSource,
}

/// Suspended-drum geometry, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrumGeometry {
    pub diameter: f64,
    pub gap_d: f64,
    pub plate_area: f64,
    pub film_thickness: f64,
    pub density: f64,
}

impl DrumGeometry {
    /// Circular drum; the plate area follows from the diameter.
    pub fn circular(diameter: f64, gap_d: f64, film_thickness: f64, density: f64) -> Self {
        let r = 0.5 * diameter;
        Self {
            diameter,
            gap_d,
            plate_area: std::f64::consts::PI * r * r,
            film_thickness,
            density,
        }
    }

    pub fn validate(&self) -> Result<(), ResponseError> {
        for (name, v) in [
            ("diameter", self.diameter),
            ("gap_d", self.gap_d),
            ("plate_area", self.plate_area),
            ("film_thickness", self.film_thickness),
            ("density", self.density),
        ] {
            positive(name, v)?;
        }
        let r = 0.5 * self.diameter;
        let disk = std::f64::consts::PI * r * r;
        if ((self.plate_area - disk) / disk).abs() > 1e-12 {
            return Err(ResponseError::InvalidParameter {
                name: "plate_area",
                reason: format!("{:e} m² inconsistent with diameter ({disk:e} m²)", self.plate_area),
            });
        }
        Ok(())
    }

    /// Physical mass of the suspended film.
    pub fn film_mass(&self) -> f64 {
        self.density * self.film_thickness * self.plate_area
    }

    /// Effective modal mass for a given mass factor.
    pub fn effective_mass(&self, mass_factor: f64) -> f64 {
        mass_factor * self.film_mass()
    }
}

/// Optomechanical cooperativity `4 g₀² n_d / (κ γ_m)`.
pub fn cooperativity(g0: f64, n_d: f64, kappa: f64, gamma_m: f64) -> Result<f64, ResponseError> {
    positive("g0", g0)?;
    positive("kappa", kappa)?;
    positive("gamma_m", gamma_m)?;
    if !(n_d >= 0.0) {
        return Err(ResponseError::InvalidParameter {
            name: "n_d",
            reason: format!("must be non-negative, got {n_d}"),
        });
    }
    Ok(4.0 * g0 * g0 * n_d / (kappa * gamma_m))
}

/// Transmission-dip factor `1/(1 + C)` at the OMIA center.
pub fn omia_depth(coop: f64) -> f64 {
    1.0 / (1.0 + coop)
}

/// Back-action-broadened mechanical linewidth `γ_m (1 + C)`.
pub fn effective_mech_linewidth(gamma_m: f64, coop: f64) -> f64 {
    gamma_m * (1.0 + coop)
}

/// A mechanical contribution to the two-tone denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechTerm {
    pub omega_m: f64,
    pub gamma_m: f64,
    pub coop: f64,
}

/// Probe transmission under a pump at detuning `pump_detuning = ω_d − ω_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoToneModel {
    pub cavity: CavityParams,
    pub pump_detuning: f64,
    pub terms: Vec<MechTerm>,
}

impl TwoToneModel {
    /// Pump on the red sideband of `mech`, the configuration of the OMIA
    /// measurement.
    pub fn red_sideband(cavity: CavityParams, mech: &MechMode, coop: f64) -> Self {
        Self {
            cavity,
            pump_detuning: -mech.omega_m,
            terms: vec![MechTerm {
                omega_m: mech.omega_m,
                gamma_m: mech.gamma_m,
                coop,
            }],
        }
    }

    /// Complex transmission at probe offset `delta = ω_p − ω_c`.
    pub fn s21(&self, delta: f64) -> Complex64 {
        let kappa = self.cavity.kappa();
        let mut denom = Complex64::new(1.0, -2.0 * delta / kappa);
        for t in &self.terms {
            let dm = delta - self.pump_detuning - t.omega_m;
            denom += t.coop / Complex64::new(1.0, -2.0 * dm / t.gamma_m);
        }
        self.cavity.amp_scale / denom
    }

    /// Whether every mechanical mode is sideband resolved (ω_m > κ).
    pub fn sideband_resolved(&self) -> bool {
        let kappa = self.cavity.kappa();
        self.terms.iter().all(|t| t.omega_m > kappa)
    }
}

/// Evaluated transmission with its regime flag.
#[derive(Debug, Clone, PartialEq)]
pub struct S21Response {
    pub s21: Vec<Complex64>,
    /// False when ω_m ≤ κ, where the two-tone model loses validity.
    pub sideband_resolved: bool,
}

/// Two-tone transmission for a red-sideband pump, one value per probe offset.
pub fn s21_two_tone(
    cav: &CavityParams,
    mech: &MechMode,
    coop: f64,
    probe_offsets: &[f64],
) -> Result<S21Response, ResponseError> {
    if !(coop >= 0.0) {
        return Err(ResponseError::NegativeCooperativity(coop));
    }
    let model = TwoToneModel::red_sideband(*cav, mech, coop);
    let sideband_resolved = model.sideband_resolved();
    if !sideband_resolved {
        log::warn!(
            "omega_m = {:e} rad/s does not exceed kappa = {:e} rad/s; two-tone model outside its regime",
            mech.omega_m,
            cav.kappa()
        );
    }
    Ok(S21Response {
        s21: probe_offsets.iter().map(|&d| model.s21(d)).collect(),
        sideband_resolved,
    })
}

/// Bare-cavity Lorentzian transmission.
pub fn s21_bare(cav: &CavityParams, probe_offsets: &[f64]) -> Vec<Complex64> {
    let kappa = cav.kappa();
    probe_offsets
        .iter()
        .map(|&d| cav.amp_scale / Complex64::new(1.0, -2.0 * d / kappa))
        .collect()
}

/// Intracavity pump photon number from a power-referenced pump.
///
/// `n_d = (P_in κ_in / ħω_d) / (Δ_d² + (κ/2)²)` with `P_in` the power after
/// the input-chain attenuation and `Δ_d = ω_d − ω_c`.
pub fn photons_from_power(cav: &CavityParams, pump: &PumpConfig) -> Result<f64, ResponseError> {
    match pump.source {
        PhotonSource::Photons(n) => {
            if n >= 0.0 {
                Ok(n)
            } else {
                Err(ResponseError::InvalidParameter {
                    name: "n_d",
                    reason: format!("must be non-negative, got {n}"),
                })
            }
        }
        PhotonSource::Power {
            power_w,
            attenuation_db,
        } => {
            let att = attenuation_db.ok_or(ResponseError::MissingAttenuation)?;
            if !(power_w >= 0.0) {
                return Err(ResponseError::InvalidParameter {
                    name: "power_w",
                    reason: format!("must be non-negative, got {power_w}"),
                });
            }
            positive("omega_d", pump.omega_d)?;
            let p_in = power_w * attenuation_factor(att);
            let detuning = pump.omega_d - cav.omega_c;
            let half = 0.5 * cav.kappa();
            Ok(p_in * cav.kappa_in / (HBAR * pump.omega_d) / (detuning * detuning + half * half))
        }
    }
}

/// Power after attenuation that yields `n_d` photons; inverse of
/// [`photons_from_power`].
pub fn power_for_photons(cav: &CavityParams, omega_d: f64, n_d: f64) -> f64 {
    let detuning = omega_d - cav.omega_c;
    let half = 0.5 * cav.kappa();
    n_d * HBAR * omega_d * (detuning * detuning + half * half) / cav.kappa_in
}

/// Zero-point motion `√(ħ / 2 m ω_m)`, metres.
pub fn zero_point_motion(mass_eff: f64, omega_m: f64) -> f64 {
    (HBAR / (2.0 * mass_eff * omega_m)).sqrt()
}

/// Single-photon coupling `(ω_c/2)·η·x_zpf/d` for a parallel-plate
/// capacitor carrying a fraction `eta` of the mode capacitance.
///
/// The mass comes from `mech.mass_eff` when set, otherwise from the drum
/// film with [`DEFAULT_MASS_FACTOR`] (see [`estimate_g0_with_mass_factor`]).
pub fn estimate_g0(
    cav: &CavityParams,
    mech: &MechMode,
    geom: &DrumGeometry,
    eta: f64,
) -> Result<f64, ResponseError> {
    estimate_g0_with_mass_factor(cav, mech, Some(geom), eta, DEFAULT_MASS_FACTOR)
}

pub fn estimate_g0_with_mass_factor(
    cav: &CavityParams,
    mech: &MechMode,
    geom: Option<&DrumGeometry>,
    eta: f64,
    mass_factor: f64,
) -> Result<f64, ResponseError> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(ResponseError::InvalidParameter {
            name: "eta",
            reason: format!("participation must lie in [0, 1], got {eta}"),
        });
    }
    let mass = match (mech.mass_eff, geom) {
        (Some(m), _) => positive("mass_eff", m)?,
        (None, Some(g)) => {
            g.validate()?;
            positive("mass_factor", mass_factor)?;
            g.effective_mass(mass_factor)
        }
        (None, None) => return Err(ResponseError::MissingMass),
    };
    let gap = match geom {
        Some(g) => positive("gap_d", g.gap_d)?,
        None => return Err(ResponseError::MissingMass),
    };
    let x_zpf = zero_point_motion(mass, positive("omega_m", mech.omega_m)?);
    Ok(0.5 * cav.omega_c * eta * x_zpf / gap)
}
