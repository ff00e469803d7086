use serde_json::{json, Map, Value};

use crate::units::{hz_to_rad, rad_to_hz};

/// Unit class of a fitted parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamUnit {
    /// rad/s internally, written as Hz with an `_hz` key suffix.
    AngularFrequency,
    Dimensionless,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitParam {
    pub name: String,
    pub unit: ParamUnit,
    pub value: f64,
    /// 1σ from the linearised covariance.
    pub sigma: f64,
}

/// Result of one fit, in internal units.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub kind: String,
    pub params: Vec<FitParam>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_owned(),
            params: Vec::new(),
            residual_norm: 0.0,
            converged: true,
            iterations: 0,
            gradient_norm: 0.0,
            warnings: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, unit: ParamUnit, value: f64, sigma: f64) {
        self.params.push(FitParam {
            name: name.to_owned(),
            unit,
            value,
            sigma,
        });
    }

    pub fn get(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Value of `name`; panics if the report has no such parameter.
    pub fn value(&self, name: &str) -> f64 {
        self.get(name)
            .unwrap_or_else(|| panic!("fit report has no parameter `{name}`"))
            .value
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.get(name)
            .unwrap_or_else(|| panic!("fit report has no parameter `{name}`"))
            .sigma
    }

    /// JSON form with unit-suffixed keys and ordinary frequencies.
    pub fn to_json(&self) -> Value {
        let mut params = Map::new();
        for p in &self.params {
            let (key, value, sigma) = match p.unit {
                ParamUnit::AngularFrequency => {
                    (format!("{}_hz", p.name), rad_to_hz(p.value), rad_to_hz(p.sigma))
                }
                ParamUnit::Dimensionless => (p.name.clone(), p.value, p.sigma),
            };
            params.insert(key, json!({ "value": value, "sigma": sigma }));
        }
        json!({
            "schema_version": 1,
            "kind": self.kind,
            "params": params,
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "warnings": self.warnings,
        })
    }

    /// Inverse of [`FitReport::to_json`].
    pub fn from_json(v: &Value) -> Result<Self, String> {
        let obj = v.as_object().ok_or("fit report must be a JSON object")?;
        match obj.get("schema_version").and_then(Value::as_u64) {
            Some(1) => {}
            other => return Err(format!("unsupported schema_version {other:?}")),
        }
        let num = |key: &str| -> Result<f64, String> {
            obj.get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| format!("missing numeric key `{key}`"))
        };
        let mut report = Self::new(
            obj.get("kind")
                .and_then(Value::as_str)
                .ok_or("missing key `kind`")?,
        );
        report.residual_norm = num("residual_norm")?;
        report.gradient_norm = num("gradient_norm")?;
        report.iterations = obj
            .get("iterations")
            .and_then(Value::as_u64)
            .ok_or("missing key `iterations`")? as usize;
        report.converged = obj
            .get("converged")
            .and_then(Value::as_bool)
            .ok_or("missing key `converged`")?;
        report.warnings = obj
            .get("warnings")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|w| w.as_str().map(String::from)).collect())
            .unwrap_or_default();
        let params = obj
            .get("params")
            .and_then(Value::as_object)
            .ok_or("missing key `params`")?;
        for (key, entry) in params {
            let value = entry
                .get("value")
                .and_then(Value::as_f64)
                .ok_or_else(|| format!("param `{key}` lacks a value"))?;
            let sigma = entry.get("sigma").and_then(Value::as_f64).unwrap_or(0.0);
            match key.strip_suffix("_hz") {
                Some(name) => report.push(
                    name,
                    ParamUnit::AngularFrequency,
                    hz_to_rad(value),
                    hz_to_rad(sigma),
                ),
                None => report.push(key, ParamUnit::Dimensionless, value, sigma),
            }
        }
        Ok(report)
    }
}
