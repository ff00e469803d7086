//! Readers and writers for the on-disk formats.
//!
//! Every file stores ordinary frequencies in Hz and voltages in volts;
//! conversion to angular units happens here. Floats are written in Rust's
//! shortest round-trip form so a file re-parses to identical values.
//!
//! | file              | layout                                              |
//! |-------------------|-----------------------------------------------------|
//! | admittance CSV    | `freq_hz,y_imag_siemens`                            |
//! | network JSON      | `{shunt_c_f, series_l_h, branches:[{l_h, c_f}]}`    |
//! | trace CSV         | `#key=value` header lines, `freq_hz,mag_db[,phase_rad]` |
//! | bias sweep CSV    | `vdc_v,freq_hz`                                     |
//! | `omsystem.json`   | cavity rates and mechanical modes, keys in `_hz`    |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::electrotune::VSweep;
use crate::fitkit::{CoopPoint, Trace, TraceData, TraceMeta};
use crate::netfoster::{AdmittanceTrace, FosterNetwork, LcBranch};
use crate::omresponse::{CavityParams, MechMode};
use crate::units::{hz_to_rad, rad_to_hz};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Schema(String),
}

impl FormatError {
    fn parse(line: usize, msg: impl Into<String>) -> Self {
        Self::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub fn read_to_string(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn write_string(path: &Path, contents: &str) -> Result<(), FormatError> {
    fs::write(path, contents).map_err(|source| FormatError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Serialize JSON with a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String, FormatError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// A parsed CSV body: named columns plus `#key=value` header entries.
struct Table {
    meta: BTreeMap<String, String>,
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn parse_table(text: &str, allowed: &[&[&str]]) -> Result<Table, FormatError> {
    let mut meta = BTreeMap::new();
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if columns.is_none() {
                if let Some((k, v)) = comment.split_once('=') {
                    meta.insert(k.trim().to_owned(), v.trim().to_owned());
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match &columns {
            None => {
                if !allowed.iter().any(|cols| cols == &fields.as_slice()) {
                    let expected: Vec<String> = allowed.iter().map(|c| c.join(",")).collect();
                    return Err(FormatError::parse(
                        line_no,
                        format!("header `{line}` is not one of: {}", expected.join(" | ")),
                    ));
                }
                columns = Some(fields.iter().map(|s| s.to_string()).collect());
            }
            Some(cols) => {
                if fields.len() != cols.len() {
                    return Err(FormatError::parse(
                        line_no,
                        format!("expected {} fields, found {}", cols.len(), fields.len()),
                    ));
                }
                let row = fields
                    .iter()
                    .zip(cols)
                    .map(|(f, name)| {
                        f.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| {
                                FormatError::parse(line_no, format!("`{name}` value `{f}` is not a finite number"))
                            })
                    })
                    .collect::<Result<Vec<f64>, _>>()?;
                rows.push(row);
            }
        }
    }
    let columns = columns.ok_or_else(|| FormatError::Schema("missing CSV header line".into()))?;
    Ok(Table {
        meta,
        columns,
        rows,
    })
}

impl Table {
    fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }
}

// ---- admittance ----

pub fn parse_admittance_csv(text: &str) -> Result<AdmittanceTrace, FormatError> {
    let t = parse_table(text, &[&["freq_hz", "y_imag_siemens"]])?;
    let freqs = t.column(0).into_iter().map(hz_to_rad).collect();
    AdmittanceTrace::new(freqs, t.column(1)).map_err(|e| FormatError::Schema(e.to_string()))
}

pub fn format_admittance_csv(trace: &AdmittanceTrace) -> String {
    let mut s = String::from("freq_hz,y_imag_siemens\n");
    for (w, y) in trace.freqs().iter().zip(trace.y_imag()) {
        let _ = writeln!(s, "{},{}", rad_to_hz(*w), y);
    }
    s
}

// ---- network ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema_version: Option<u32>,
    shunt_c_f: f64,
    #[serde(default)]
    series_l_h: Option<f64>,
    #[serde(default)]
    branches: Vec<LcBranch>,
}

pub fn parse_network_json(text: &str) -> Result<FosterNetwork, FormatError> {
    let f: NetworkFile = serde_json::from_str(text)?;
    check_version(f.schema_version)?;
    let net = FosterNetwork {
        shunt_c: f.shunt_c_f,
        series_l: f.series_l_h,
        branches: f.branches,
    };
    net.validate().map_err(|e| FormatError::Schema(e.to_string()))?;
    Ok(net)
}

pub fn format_network_json(net: &FosterNetwork) -> Result<String, FormatError> {
    to_json_string(&NetworkFile {
        schema_version: Some(SCHEMA_VERSION),
        shunt_c_f: net.shunt_c,
        series_l_h: net.series_l,
        branches: net.branches.clone(),
    })
}

fn check_version(v: Option<u32>) -> Result<(), FormatError> {
    match v {
        None | Some(SCHEMA_VERSION) => Ok(()),
        Some(other) => Err(FormatError::Schema(format!(
            "unsupported schema_version {other} (expected {SCHEMA_VERSION})"
        ))),
    }
}

// ---- traces ----

const META_KEYS: [&str; 4] = ["pump_dbm", "atten_db", "vdc_v", "pump_hz"];

pub fn parse_trace_csv(text: &str) -> Result<Trace, FormatError> {
    let t = parse_table(
        text,
        &[&["freq_hz", "mag_db"], &["freq_hz", "mag_db", "phase_rad"]],
    )?;
    let mut meta = TraceMeta::default();
    for (k, v) in &t.meta {
        let slot = match k.as_str() {
            "pump_dbm" => &mut meta.pump_dbm,
            "atten_db" => &mut meta.atten_db,
            "vdc_v" => &mut meta.vdc_v,
            "pump_hz" => &mut meta.pump_hz,
            _ => {
                meta.extra.insert(k.clone(), v.clone());
                continue;
            }
        };
        let x = v
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| FormatError::Schema(format!("header `{k}` value `{v}` is not a finite number")))?;
        *slot = Some(x);
    }
    let freqs = t.column(0);
    let mags = t.column(1).into_iter().map(|db| 10f64.powf(db / 20.0));
    let data = if t.columns.len() == 3 {
        TraceData::Complex(
            mags.zip(t.column(2))
                .map(|(m, ph)| Complex64::from_polar(m, ph))
                .collect(),
        )
    } else {
        TraceData::Magnitude(mags.collect())
    };
    Trace::new(freqs, data, meta).map_err(|e| FormatError::Schema(e.to_string()))
}

pub fn format_trace_csv(trace: &Trace) -> String {
    let mut s = String::new();
    let m = &trace.meta;
    for (key, v) in META_KEYS.iter().zip([m.pump_dbm, m.atten_db, m.vdc_v, m.pump_hz]) {
        if let Some(v) = v {
            let _ = writeln!(s, "#{key}={v}");
        }
    }
    for (k, v) in &m.extra {
        let _ = writeln!(s, "#{k}={v}");
    }
    match trace.data() {
        TraceData::Complex(z) => {
            s.push_str("freq_hz,mag_db,phase_rad\n");
            for (f, z) in trace.freqs_hz().iter().zip(z) {
                let _ = writeln!(s, "{},{},{}", f, 20.0 * z.norm().log10(), z.arg());
            }
        }
        TraceData::Magnitude(v) => {
            s.push_str("freq_hz,mag_db\n");
            for (f, m) in trace.freqs_hz().iter().zip(v) {
                let _ = writeln!(s, "{},{}", f, 20.0 * m.log10());
            }
        }
    }
    s
}

// ---- bias sweeps ----

/// Parses `vdc_v,freq_hz`; the returned sweep holds rad/s.
pub fn parse_vsweep_csv(text: &str) -> Result<VSweep, FormatError> {
    let t = parse_table(text, &[&["vdc_v", "freq_hz"]])?;
    VSweep::new(t.column(0), t.column(1).into_iter().map(hz_to_rad).collect())
        .map_err(|e| FormatError::Schema(e.to_string()))
}

pub fn format_vsweep_csv(sweep: &VSweep) -> String {
    let mut s = String::from("vdc_v,freq_hz\n");
    for (v, w) in sweep.volts.iter().zip(&sweep.freqs) {
        let _ = writeln!(s, "{},{}", v, rad_to_hz(*w));
    }
    s
}

// ---- cooperativity points ----

pub fn parse_coop_points_csv(text: &str) -> Result<Vec<CoopPoint>, FormatError> {
    let t = parse_table(text, &[&["n_d", "coop", "coop_sigma"]])?;
    Ok(t.rows
        .iter()
        .map(|r| CoopPoint {
            n_d: r[0],
            coop: r[1],
            coop_sigma: r[2],
        })
        .collect())
}

pub fn format_coop_points_csv(points: &[CoopPoint]) -> String {
    let mut s = String::from("n_d,coop,coop_sigma\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.n_d, p.coop, p.coop_sigma);
    }
    s
}

// ---- omsystem.json ----

/// Cavity plus mechanical modes, as stored in `omsystem.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmSystem {
    pub cavity: CavityParams,
    pub mech_modes: Vec<MechMode>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OmSystemFile {
    schema_version: u32,
    omega_c_hz: f64,
    kappa_int_hz: f64,
    kappa_in_hz: f64,
    kappa_out_hz: f64,
    #[serde(default = "unit_amp")]
    amp_scale: f64,
    #[serde(default)]
    mech_modes: Vec<MechModeFile>,
}

fn unit_amp() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MechModeFile {
    omega_m_hz: f64,
    gamma_m_hz: f64,
    g0_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mass_eff_kg: Option<f64>,
}

pub fn parse_omsystem_json(text: &str) -> Result<OmSystem, FormatError> {
    let f: OmSystemFile = serde_json::from_str(text)?;
    check_version(Some(f.schema_version))?;
    let schema = |e: crate::omresponse::ResponseError| FormatError::Schema(e.to_string());
    let cavity = CavityParams::new(
        hz_to_rad(f.omega_c_hz),
        hz_to_rad(f.kappa_int_hz),
        hz_to_rad(f.kappa_in_hz),
        hz_to_rad(f.kappa_out_hz),
        f.amp_scale,
    )
    .map_err(schema)?;
    let mech_modes = f
        .mech_modes
        .iter()
        .map(|m| {
            let mode = MechMode {
                omega_m: hz_to_rad(m.omega_m_hz),
                gamma_m: hz_to_rad(m.gamma_m_hz),
                g0: hz_to_rad(m.g0_hz),
                mass_eff: m.mass_eff_kg,
            };
            mode.validate().map(|_| mode)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(schema)?;
    Ok(OmSystem { cavity, mech_modes })
}

pub fn format_omsystem_json(sys: &OmSystem) -> Result<String, FormatError> {
    let c = &sys.cavity;
    to_json_string(&OmSystemFile {
        schema_version: SCHEMA_VERSION,
        omega_c_hz: rad_to_hz(c.omega_c),
        kappa_int_hz: rad_to_hz(c.kappa_int),
        kappa_in_hz: rad_to_hz(c.kappa_in),
        kappa_out_hz: rad_to_hz(c.kappa_out),
        amp_scale: c.amp_scale,
        mech_modes: sys
            .mech_modes
            .iter()
            .map(|m| MechModeFile {
                omega_m_hz: rad_to_hz(m.omega_m),
                gamma_m_hz: rad_to_hz(m.gamma_m),
                g0_hz: rad_to_hz(m.g0),
                mass_eff_kg: m.mass_eff,
            })
            .collect(),
    })
}
