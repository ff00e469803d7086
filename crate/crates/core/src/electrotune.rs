//! DC-bias tuning of the drum: direct electrostatic drive and capacitive
//! spring softening.
//!
//! The drum is treated as a rigid plate on a spring `k`. A bias `V` across
//! the compliant capacitor lowers the effective spring constant to
//! `k − ½V²C″`, so the mechanical frequency follows
//! `ω(V) = ω₀·√(1 − V²C″/(2k))`, which is a downward parabola for small `V`.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::omresponse::DrumGeometry;
use crate::units::EPS0;

#[derive(Debug, Error, PartialEq)]
pub enum TuneError {
    #[error("bias {v_dc} V exceeds pull-in: effective spring constant would be {k_eff:e} N/m")]
    PullInExceeded { v_dc: f64, k_eff: f64 },
    #[error("need at least {needed} distinct voltages, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid tuning input: {0}")]
    Invalid(String),
}

/// Lumped electromechanical model of a biased drum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneModel {
    /// rad/s at zero bias.
    pub omega_m0: f64,
    /// N/m.
    pub spring_k: f64,
    /// Second derivative of the compliant capacitance, F/m².
    pub d2c_dx2: f64,
    /// kg.
    pub mass_eff: f64,
}

impl TuneModel {
    /// Builds the model with `k = m·ω₀²`.
    pub fn new(omega_m0: f64, mass_eff: f64, d2c_dx2: f64) -> Result<Self, TuneError> {
        let model = Self {
            omega_m0,
            spring_k: mass_eff * omega_m0 * omega_m0,
            d2c_dx2,
            mass_eff,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), TuneError> {
        for (name, v) in [
            ("omega_m0", self.omega_m0),
            ("spring_k", self.spring_k),
            ("mass_eff", self.mass_eff),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TuneError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.d2c_dx2.is_finite() {
            return Err(TuneError::Invalid("d2c_dx2 must be finite".into()));
        }
        let k = self.mass_eff * self.omega_m0 * self.omega_m0;
        if ((self.spring_k - k) / k).abs() > 1e-9 {
            return Err(TuneError::Invalid(format!(
                "spring_k {:e} inconsistent with m·ω₀² = {k:e}",
                self.spring_k
            )));
        }
        Ok(())
    }

    /// Bias at which the linearized spring constant reaches zero.
    pub fn pull_in_voltage(&self) -> f64 {
        if self.d2c_dx2 > 0.0 {
            (2.0 * self.spring_k / self.d2c_dx2).sqrt()
        } else {
            f64::INFINITY
        }
    }
}

/// Amplitude of the resonant force `C′·V_dc·V_ac`.
pub fn drive_force(c_m_prime: f64, v_dc: f64, v_ac: f64) -> f64 {
    c_m_prime * v_dc * v_ac
}

/// Mechanical frequency under bias `v_dc`, rad/s.
pub fn softened_frequency(model: &TuneModel, v_dc: f64) -> Result<f64, TuneError> {
    let k_eff = model.spring_k - 0.5 * v_dc * v_dc * model.d2c_dx2;
    if !(k_eff > 0.0) {
        return Err(TuneError::PullInExceeded { v_dc, k_eff });
    }
    Ok(model.omega_m0 * (k_eff / model.spring_k).sqrt())
}

/// Measured mechanical frequency against bias.
#[derive(Debug, Clone, PartialEq)]
pub struct VSweep {
    pub volts: Vec<f64>,
    /// rad/s.
    pub freqs: Vec<f64>,
}

impl VSweep {
    pub fn new(volts: Vec<f64>, freqs: Vec<f64>) -> Result<Self, TuneError> {
        if volts.len() != freqs.len() {
            return Err(TuneError::Invalid(format!(
                "{} voltages but {} frequencies",
                volts.len(),
                freqs.len()
            )));
        }
        if volts.iter().chain(&freqs).any(|v| !v.is_finite()) {
            return Err(TuneError::Invalid("non-finite sweep value".into()));
        }
        if volts.len() < 3 {
            return Err(TuneError::TooFewPoints {
                needed: 3,
                got: volts.len(),
            });
        }
        Ok(Self { volts, freqs })
    }

    /// Sweep sampled from the forward model.
    pub fn from_model(model: &TuneModel, volts: &[f64]) -> Result<Self, TuneError> {
        let freqs = volts
            .iter()
            .map(|&v| softened_frequency(model, v))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(volts.to_vec(), freqs)
    }
}

/// Result of [`fit_parabola`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolaFit {
    pub omega_m0: f64,
    /// `c₂` in `ω = ω₀ + c₂V²`, rad/s/V².
    pub curvature: f64,
    pub omega_m0_sigma: f64,
    pub curvature_sigma: f64,
    /// Set when `c₂ > 0`, which softening cannot produce (stress stiffening
    /// or a bad sweep).
    pub positive_curvature: bool,
}

impl ParabolaFit {
    pub fn eval(&self, v: f64) -> f64 {
        self.omega_m0 + self.curvature * v * v
    }

    /// `C″ = −4k·c₂/ω₀` for a known spring constant.
    pub fn d2c_dx2(&self, spring_k: f64) -> f64 {
        -4.0 * spring_k * self.curvature / self.omega_m0
    }
}

/// Least-squares fit of `ω(V) = ω₀ + c₂V²`.
pub fn fit_parabola(sweep: &VSweep) -> Result<ParabolaFit, TuneError> {
    let mut distinct: Vec<f64> = sweep.volts.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(TuneError::TooFewPoints {
            needed: 3,
            got: distinct.len(),
        });
    }

    // Centre both columns so that the normal matrix stays well conditioned
    // for frequencies in the MHz range.
    let n = sweep.volts.len() as f64;
    let x: Vec<f64> = sweep.volts.iter().map(|v| v * v).collect();
    let x_mean = x.iter().sum::<f64>() / n;
    let y_mean = sweep.freqs.iter().sum::<f64>() / n;
    let mut ata = Matrix2::zeros();
    let mut aty = Vector2::zeros();
    for (&xi, &yi) in x.iter().zip(&sweep.freqs) {
        let row = Vector2::new(1.0, xi - x_mean);
        ata += row * row.transpose();
        aty += row * (yi - y_mean);
    }
    let inv = ata
        .try_inverse()
        .ok_or_else(|| TuneError::Invalid("singular parabola fit (all |V| equal)".into()))?;
    let coef = inv * aty;
    let curvature = coef[1];
    let omega_m0 = y_mean + coef[0] - curvature * x_mean;

    let rss: f64 = x
        .iter()
        .zip(&sweep.freqs)
        .map(|(&xi, &yi)| (yi - omega_m0 - curvature * xi).powi(2))
        .sum();
    let dof = (sweep.volts.len() as f64 - 2.0).max(1.0);
    let s2 = rss / dof;
    let curvature_sigma = (s2 * inv[(1, 1)]).sqrt();
    // ω₀ = ȳ + a − c·x̄ with a and c from the centred fit.
    let var_w0 = s2 * (inv[(0, 0)] - 2.0 * x_mean * inv[(0, 1)] + x_mean * x_mean * inv[(1, 1)]);

    Ok(ParabolaFit {
        omega_m0,
        curvature,
        omega_m0_sigma: var_w0.max(0.0).sqrt(),
        curvature_sigma,
        positive_curvature: curvature > 0.0,
    })
}

/// Parallel-plate capacitance of one drum and its gap derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateDerivatives {
    /// F.
    pub c_m: f64,
    /// F/m.
    pub c_prime: f64,
    /// F/m².
    pub c_dprime: f64,
}

/// `C = ε₀A/d`, `C′ = ε₀A/d²`, `C″ = 2ε₀A/d³`.
pub fn parallel_plate_derivatives(geom: &DrumGeometry) -> Result<PlateDerivatives, TuneError> {
    let d = geom.gap_d;
    if !(d > 0.0) || !(geom.plate_area > 0.0) {
        return Err(TuneError::Invalid(format!(
            "gap and plate area must be positive, got d={d:e} A={:e}",
            geom.plate_area
        )));
    }
    let c_m = EPS0 * geom.plate_area / d;
    Ok(PlateDerivatives {
        c_m,
        c_prime: c_m / d,
        c_dprime: 2.0 * c_m / (d * d),
    })
}
