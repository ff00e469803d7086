use std::collections::BTreeMap;

use num_complex::Complex64;

use super::FitError;

/// Measured transmission samples.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceData {
    Complex(Vec<Complex64>),
    /// |S21| only; no phase information.
    Magnitude(Vec<f64>),
}

impl TraceData {
    pub fn len(&self) -> usize {
        match self {
            Self::Complex(v) => v.len(),
            Self::Magnitude(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Acquisition metadata carried in `#key=value` header lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceMeta {
    pub pump_dbm: Option<f64>,
    pub atten_db: Option<f64>,
    pub vdc_v: Option<f64>,
    /// Pump tone frequency.
    pub pump_hz: Option<f64>,
    /// Any other header entries, kept verbatim.
    pub extra: BTreeMap<String, String>,
}

/// A probe-frequency sweep of S21. Frequencies are ordinary (Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    freqs_hz: Vec<f64>,
    data: TraceData,
    pub meta: TraceMeta,
}

impl Trace {
    pub fn new(freqs_hz: Vec<f64>, data: TraceData, meta: TraceMeta) -> Result<Self, FitError> {
        if freqs_hz.len() != data.len() {
            return Err(FitError::InvalidTrace(format!(
                "{} frequencies but {} samples",
                freqs_hz.len(),
                data.len()
            )));
        }
        if freqs_hz.len() < 3 {
            return Err(FitError::InvalidTrace("fewer than 3 samples".into()));
        }
        if freqs_hz.iter().any(|f| !f.is_finite()) {
            return Err(FitError::InvalidTrace("non-finite frequency".into()));
        }
        if let Some(i) = freqs_hz.windows(2).position(|w| w[1] <= w[0]) {
            return Err(FitError::InvalidTrace(format!(
                "frequencies not strictly increasing at sample {}",
                i + 1
            )));
        }
        let finite = match &data {
            TraceData::Complex(v) => v.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            TraceData::Magnitude(v) => v.iter().all(|m| m.is_finite() && *m >= 0.0),
        };
        if !finite {
            return Err(FitError::InvalidTrace(
                "non-finite or negative sample value".into(),
            ));
        }
        Ok(Self {
            freqs_hz,
            data,
            meta,
        })
    }

    pub fn freqs_hz(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn data(&self) -> &TraceData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }

    pub fn has_phase(&self) -> bool {
        matches!(self.data, TraceData::Complex(_))
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        match &self.data {
            TraceData::Complex(v) => v.iter().map(|z| z.norm()).collect(),
            TraceData::Magnitude(v) => v.clone(),
        }
    }

    /// Drop the phase, keeping |S21|.
    pub fn to_magnitude(&self) -> Self {
        Self {
            freqs_hz: self.freqs_hz.clone(),
            data: TraceData::Magnitude(self.magnitudes()),
            meta: self.meta.clone(),
        }
    }

    /// Samples with `lo_hz ≤ f ≤ hi_hz`.
    pub fn window(&self, lo_hz: f64, hi_hz: f64) -> Result<Self, FitError> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| (lo_hz..=hi_hz).contains(&self.freqs_hz[i]))
            .collect();
        let freqs = idx.iter().map(|&i| self.freqs_hz[i]).collect();
        let data = match &self.data {
            TraceData::Complex(v) => TraceData::Complex(idx.iter().map(|&i| v[i]).collect()),
            TraceData::Magnitude(v) => TraceData::Magnitude(idx.iter().map(|&i| v[i]).collect()),
        };
        Self::new(freqs, data, self.meta.clone())
    }
}
