//! The `omcavity` command line: run configuration, orchestration and
//! output files.
//!
//! Each command reads one JSON [`RunConfig`] and writes into an output
//! directory guarded by a lockfile. Exit codes are a stable contract:
//! 0 success, 1 input error, 2 domain error, 3 convergence failure,
//! 4 insufficient data.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::electrotune::{
    fit_parabola, parallel_plate_derivatives, softened_frequency, TuneError, TuneModel, VSweep,
};
use crate::fitkit::{
    batch_extract, fit_bare_cavity, fit_omia, BatchConfig, FitError, FitReport, Trace, TraceData,
};
use crate::formats::{self, FormatError, SCHEMA_VERSION};
use crate::netfoster::{
    auto_grid, find_modes, refine_mode, synthesize_admittance, total_admittance, AdmittanceTrace,
    ModeParams, NetError,
};
use crate::omresponse::{CavityParams, DrumGeometry, MechTerm, TwoToneModel, DEFAULT_MASS_FACTOR};
use crate::plot::{render_svg, PlotSeries, SeriesKind};
use crate::simulate::{simulate_traces, SimError, SimSpec};
use crate::units::{hz_to_rad, rad_to_hz};
use crate::Complex64;

pub const LOCKFILE: &str = ".omcavity.lock";

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Input = 1,
    Domain = 2,
    Convergence = 3,
    Insufficient = 4,
}

impl ExitStatus {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl CliError {
    pub fn new(status: ExitStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn input(message: impl Into<String>) -> Self {
        Self::new(ExitStatus::Input, message)
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        Self::input(e.to_string())
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        let status = match e {
            NetError::InvalidTrace(_) | NetError::InvalidNetwork(_) | NetError::EmptyNetwork => {
                ExitStatus::Input
            }
            NetError::NegativeCapacitance(_) => ExitStatus::Input,
            _ => ExitStatus::Domain,
        };
        Self::new(status, e.to_string())
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        let status = match &e {
            FitError::InvalidTrace(_) | FitError::MissingMetadata(_) => ExitStatus::Input,
            FitError::NotConverged(_) | FitError::Optimizer(_) => ExitStatus::Convergence,
            FitError::TooFewPoints { .. } => ExitStatus::Insufficient,
            _ => ExitStatus::Domain,
        };
        Self::new(status, e.to_string())
    }
}

impl From<TuneError> for CliError {
    fn from(e: TuneError) -> Self {
        let status = match e {
            TuneError::PullInExceeded { .. } => ExitStatus::Domain,
            TuneError::TooFewPoints { .. } => ExitStatus::Insufficient,
            TuneError::Invalid(_) => ExitStatus::Input,
        };
        Self::new(status, e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        Self::input(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Locate resonant modes of a lossless network and write the mode table.
    Modes,
    /// Generate synthetic transmission traces.
    Simulate,
    /// Fit traces: bare cavity, OMIA, or the full batch chain down to g0.
    Fit,
    /// Electrostatic tuning: fit a bias sweep or evaluate the forward model.
    Tune,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Modes => "modes",
            Self::Simulate => "simulate",
            Self::Fit => "fit",
            Self::Tune => "tune",
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "omcavity", version, about = "Cavity optomechanics mode, response and fit toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Noise seed for `simulate`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Signal-to-noise ratio for `simulate`; `inf` writes noiseless traces.
    #[arg(long = "snr-db", global = true, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    /// Upper photon number of the linear cooperativity regime (`fit` batch).
    #[arg(long = "linear-max-nd", global = true)]
    pub linear_max_nd: Option<f64>,
}

/// Top-level configuration file. Paths are relative to the file itself.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub modes: Option<ModesConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub tune: Option<TuneConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesConfig {
    pub network: PathBuf,
    /// Mechanically compliant capacitance added in parallel, F.
    #[serde(default)]
    pub c_m_f: f64,
    /// Explicit evaluation grid; omitted means an automatic grid with
    /// per-mode refinement.
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub points: usize,
    #[serde(default = "yes")]
    pub log: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// `omsystem.json`.
    pub system: PathBuf,
    #[serde(default)]
    pub sweep: SimSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    Bare,
    Omia,
    Batch,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub mode: FitMode,
    /// Trace files or glob patterns.
    pub traces: Vec<String>,
    /// Cavity source for `omia`: an `omsystem.json`.
    #[serde(default)]
    pub system: Option<PathBuf>,
    /// Cavity source for `omia`: a `fitreport.json` from a bare fit, used
    /// together with the coupling rates below.
    #[serde(default)]
    pub cavity_report: Option<PathBuf>,
    #[serde(default)]
    pub kappa_in_hz: Option<f64>,
    #[serde(default)]
    pub kappa_out_hz: Option<f64>,
    /// Overrides the `atten_db` header of every trace.
    #[serde(default)]
    pub atten_db: Option<f64>,
    #[serde(default)]
    pub linear_max_nd: Option<f64>,
    /// Fit |S21| even when phase is present.
    #[serde(default)]
    pub magnitude_only: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    /// Measured `vdc_v,freq_hz` sweep; selects fit mode.
    #[serde(default)]
    pub sweep: Option<PathBuf>,
    /// Forward model; selects forward mode when no sweep is given.
    #[serde(default)]
    pub model: Option<TuneModelConfig>,
    /// Bias points for forward mode, V.
    #[serde(default)]
    pub volts: Vec<f64>,
    /// Spring constant for converting a fitted curvature into C″.
    #[serde(default)]
    pub spring_k_n_per_m: Option<f64>,
    #[serde(default)]
    pub mass_eff_kg: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneModelConfig {
    pub f0_hz: f64,
    #[serde(default)]
    pub mass_eff_kg: Option<f64>,
    #[serde(default)]
    pub c_dprime_f_per_m2: Option<f64>,
    #[serde(default)]
    pub geometry: Option<GeometryConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub diameter_m: f64,
    pub gap_m: f64,
    pub film_thickness_m: f64,
    pub density_kg_m3: f64,
    /// Identical drums in parallel.
    #[serde(default = "one")]
    pub drums: u32,
}

fn one() -> u32 {
    1
}

impl GeometryConfig {
    fn drum(&self) -> DrumGeometry {
        DrumGeometry::circular(self.diameter_m, self.gap_m, self.film_thickness_m, self.density_kg_m3)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| CliError::input(format!("config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::input(format!(
                "config: unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }
}

/// Exclusive ownership of an output directory for the life of a command.
struct OutputLock(PathBuf);

impl OutputLock {
    fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
        let path = dir.join(LOCKFILE);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                CliError::input(format!(
                    "cannot lock output directory {} ({e}); another omcavity process may own it",
                    dir.display()
                ))
            })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(Self(path))
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Writes files into the output directory, remembering what was written.
struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        formats::write_string(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let text = formats::to_json_string(value)?;
        self.write(name, &text)
    }

    fn series(&mut self, stem: &str, title: &str, series: &[PlotSeries]) -> Result<(), CliError> {
        for (k, s) in series.iter().enumerate() {
            let name = if series.len() == 1 {
                format!("{stem}.csv")
            } else {
                format!("{stem}_{}.csv", s.label_slug(k))
            };
            self.write(&name, &s.to_csv())?;
        }
        self.write(&format!("{stem}.svg"), &render_svg(title, series))
    }
}

impl PlotSeries {
    fn label_slug(&self, k: usize) -> String {
        let slug: String = self
            .label
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        if slug.is_empty() {
            k.to_string()
        } else {
            slug
        }
    }
}

/// Parse arguments, run, and map the outcome to a process exit code.
pub fn main_with(cli: &Cli) -> u8 {
    match run(cli) {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
            ExitStatus::Success.code()
        }
        Err(e) => {
            eprintln!("omcavity {}: {}", cli.command.name(), e.message);
            e.status.code()
        }
    }
}

/// Run one command; returns the files written.
///
/// Files already written when a later stage fails stay on disk.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::input("--config is required"))?;
    let cfg = RunConfig::parse(&formats::read_to_string(config_path)?)?;
    let base = config_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(|d| base.join(d)))
        .ok_or_else(|| CliError::input("no output directory: pass --out or set out_dir"))?;

    let _lock = OutputLock::acquire(&out_dir)?;
    let mut out = Output {
        dir: out_dir,
        written: Vec::new(),
    };
    let missing = |block: &str| CliError::input(format!("config has no `{block}` block"));
    match cli.command {
        Command::Modes => cmd_modes(cfg.modes.as_ref().ok_or_else(|| missing("modes"))?, &base, &mut out)?,
        Command::Simulate => {
            let sim = cfg.simulate.as_ref().ok_or_else(|| missing("simulate"))?;
            let seed = cli.seed.or(cfg.seed).unwrap_or(0);
            cmd_simulate(sim, cli.snr_db, seed, &base, &mut out)?
        }
        Command::Fit => {
            let fit = cfg.fit.as_ref().ok_or_else(|| missing("fit"))?;
            cmd_fit(fit, cli.linear_max_nd.or(fit.linear_max_nd), &base, &mut out)?
        }
        Command::Tune => cmd_tune(cfg.tune.as_ref().ok_or_else(|| missing("tune"))?, &base, &mut out)?,
    }
    Ok(out.written)
}

// ---- modes ----

#[derive(Serialize)]
struct ModeRow {
    f0_hz: f64,
    f0_ghz: f64,
    /// `2/(ω₀·slope)`, the impedance against the total mode capacitance.
    z_ohm: f64,
    slope_f: f64,
    c_total_ff: f64,
    /// Environment share of the mode capacitance, `C_total − C_m`.
    c_p_ff: f64,
    l_p_nh: f64,
    participation: f64,
}

fn mode_row(m: &ModeParams, c_m: f64) -> ModeRow {
    ModeRow {
        f0_hz: m.frequency_hz(),
        f0_ghz: m.frequency_hz() * 1e-9,
        z_ohm: m.impedance_z,
        slope_f: m.slope,
        c_total_ff: m.c_p * 1e15,
        c_p_ff: (m.c_p - c_m) * 1e15,
        l_p_nh: m.l_p * 1e9,
        participation: c_m / m.c_p,
    }
}

fn explicit_grid(g: &GridSpec) -> Result<Vec<f64>, CliError> {
    if !(g.f_min_hz > 0.0 && g.f_max_hz > g.f_min_hz && g.points >= 5) {
        return Err(CliError::input(
            "grid needs 0 < f_min_hz < f_max_hz and at least 5 points",
        ));
    }
    let n = g.points - 1;
    Ok((0..=n)
        .map(|k| {
            let t = k as f64 / n as f64;
            let f = if g.log {
                g.f_min_hz * (g.f_max_hz / g.f_min_hz).powf(t)
            } else {
                g.f_min_hz + t * (g.f_max_hz - g.f_min_hz)
            };
            hz_to_rad(f)
        })
        .collect())
}

fn cmd_modes(cfg: &ModesConfig, base: &Path, out: &mut Output) -> Result<(), CliError> {
    let net = formats::parse_network_json(&formats::read_to_string(&base.join(&cfg.network))?)?;
    let c_m = cfg.c_m_f;
    if !(c_m >= 0.0 && c_m.is_finite()) {
        return Err(CliError::input(format!("c_m_f must be finite and >= 0, got {c_m}")));
    }
    let (grid, refine) = match &cfg.grid {
        Some(g) => (explicit_grid(g)?, false),
        None => (auto_grid(&net, 400), true),
    };
    let trace = total_admittance(&synthesize_admittance(&net, &grid)?, c_m)?;
    let mut modes = find_modes(&trace)?;
    if refine {
        modes = modes
            .iter()
            .map(|m| refine_mode(&net, c_m, m.omega0))
            .collect::<Result<_, _>>()?;
    }
    let rows: Vec<ModeRow> = modes.iter().map(|m| mode_row(m, c_m)).collect();
    out.json(
        "modes.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "c_m_f": c_m,
            "modes": rows,
        }),
    )?;
    out.write("admittance.csv", &formats::format_admittance_csv(&trace))?;
    let series = admittance_series(&trace)?;
    out.write("admittance.svg", &render_svg("Im Y_t", &[series]))
}

/// Y_t for plotting, clipped near poles so the SVG stays readable.
fn admittance_series(trace: &AdmittanceTrace) -> Result<PlotSeries, CliError> {
    let mut mags: Vec<f64> = trace.y_imag().iter().map(|y| y.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let clip = 10.0 * mags[mags.len() / 2].max(f64::MIN_POSITIVE);
    Ok(PlotSeries::new(
        "Im Y_t",
        SeriesKind::Line,
        ("freq_ghz", trace.freqs().iter().map(|&w| rad_to_hz(w) * 1e-9).collect()),
        (
            "y_imag_siemens",
            trace.y_imag().iter().map(|y| y.clamp(-clip, clip)).collect(),
        ),
    )?)
}

// ---- simulate ----

fn cmd_simulate(
    cfg: &SimulateConfig,
    snr_override: Option<f64>,
    seed: u64,
    base: &Path,
    out: &mut Output,
) -> Result<(), CliError> {
    let sys = formats::parse_omsystem_json(&formats::read_to_string(&base.join(&cfg.system))?)?;
    let mut spec = cfg.sweep.clone();
    if let Some(snr) = snr_override {
        if snr.is_nan() {
            return Err(CliError::input("--snr-db is NaN"));
        }
        spec.snr_db = (snr != f64::INFINITY).then_some(snr);
    }
    let traces = simulate_traces(&sys, &spec, seed)?;
    for (i, t) in traces.iter().enumerate() {
        out.write(&format!("trace_{i:03}.csv"), &formats::format_trace_csv(t))?;
    }
    Ok(())
}

// ---- fit ----

fn expand_traces(patterns: &[String], base: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    let mut files = Vec::new();
    for p in patterns {
        let full = base.join(p);
        if p.contains(['*', '?', '[']) {
            let pattern = full.to_string_lossy().into_owned();
            let mut matched: Vec<PathBuf> = glob::glob(&pattern)
                .map_err(|e| CliError::input(format!("bad trace pattern `{p}`: {e}")))?
                .filter_map(Result::ok)
                .collect();
            matched.sort();
            if matched.is_empty() {
                return Err(CliError::input(format!("trace pattern `{p}` matched no files")));
            }
            for m in matched {
                let shown = m
                    .strip_prefix(base)
                    .unwrap_or(&m)
                    .to_string_lossy()
                    .into_owned();
                files.push((shown, m));
            }
        } else {
            files.push((p.clone(), full));
        }
    }
    if files.is_empty() {
        return Err(CliError::new(ExitStatus::Insufficient, "no traces given"));
    }
    Ok(files)
}

fn load_trace(path: &Path, magnitude_only: bool) -> Result<Trace, CliError> {
    let t = formats::parse_trace_csv(&formats::read_to_string(path)?)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(if magnitude_only { t.to_magnitude() } else { t })
}

fn observed(trace: &Trace) -> Vec<Complex64> {
    match trace.data() {
        TraceData::Complex(z) => z.clone(),
        TraceData::Magnitude(m) => m.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
    }
}

/// Magnitude residual `|S_data| − |S_model|` against frequency.
fn residual_series(trace: &Trace, model: impl Fn(f64) -> Complex64) -> Result<PlotSeries, CliError> {
    let f = trace.freqs_hz().to_vec();
    let r = observed(trace)
        .iter()
        .zip(&f)
        .map(|(z, &fr)| z.norm() - model(fr).norm())
        .collect();
    Ok(PlotSeries::new("residual", SeriesKind::Scatter, ("freq_hz", f), ("residual_mag", r))?)
}

fn bare_model(report: &FitReport) -> impl Fn(f64) -> Complex64 {
    let (wc, kappa, amp) = (
        report.value("omega_c"),
        report.value("kappa"),
        report.value("amp_scale"),
    );
    move |f| amp / Complex64::new(1.0, -2.0 * (hz_to_rad(f) - wc) / kappa)
}

fn omia_model(report: &FitReport, cavity: CavityParams, pump_hz: f64) -> impl Fn(f64) -> Complex64 {
    let model = TwoToneModel {
        cavity,
        pump_detuning: hz_to_rad(pump_hz) - cavity.omega_c,
        terms: vec![MechTerm {
            omega_m: report.value("omega_m"),
            gamma_m: report.value("gamma_m"),
            coop: report.value("coop"),
        }],
    };
    move |f| model.s21(hz_to_rad(f) - cavity.omega_c)
}

fn coupling_rates(cfg: &FitConfig, base: &Path) -> Result<(f64, f64, Option<CavityParams>), CliError> {
    let sys = match &cfg.system {
        Some(p) => Some(formats::parse_omsystem_json(&formats::read_to_string(&base.join(p))?)?),
        None => None,
    };
    let k_in = cfg
        .kappa_in_hz
        .map(hz_to_rad)
        .or(sys.as_ref().map(|s| s.cavity.kappa_in));
    let k_out = cfg
        .kappa_out_hz
        .map(hz_to_rad)
        .or(sys.as_ref().map(|s| s.cavity.kappa_out));
    match (k_in, k_out) {
        (Some(a), Some(b)) => Ok((a, b, sys.map(|s| s.cavity))),
        _ => Err(CliError::input(
            "coupling rates unknown: set kappa_in_hz and kappa_out_hz or give a system file",
        )),
    }
}

fn fit_cavity_for_omia(cfg: &FitConfig, base: &Path) -> Result<CavityParams, CliError> {
    let (k_in, k_out, sys_cavity) = coupling_rates(cfg, base)?;
    if let Some(p) = &cfg.cavity_report {
        let v: Value = serde_json::from_str(&formats::read_to_string(&base.join(p))?)
            .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
        // Accept a bare FitReport or a fitreport.json written by `fit`.
        let node = v
            .get("traces")
            .and_then(|t| t.get(0))
            .and_then(|t| t.get("report"))
            .or_else(|| v.get("cavity"))
            .unwrap_or(&v);
        let r = FitReport::from_json(node).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
        for key in ["omega_c", "kappa", "amp_scale"] {
            if r.get(key).is_none() {
                return Err(CliError::input(format!(
                    "{}: cavity report lacks `{key}`",
                    p.display()
                )));
            }
        }
        return CavityParams::from_total(r.value("omega_c"), r.value("kappa"), k_in, k_out, r.value("amp_scale"))
            .map_err(|e| CliError::new(ExitStatus::Domain, e.to_string()));
    }
    sys_cavity.ok_or_else(|| CliError::input("omia fit needs `system` or `cavity_report`"))
}

fn cmd_fit(
    cfg: &FitConfig,
    linear_max_nd: Option<f64>,
    base: &Path,
    out: &mut Output,
) -> Result<(), CliError> {
    let files = expand_traces(&cfg.traces, base)?;
    let traces: Vec<Trace> = files
        .iter()
        .map(|(_, p)| load_trace(p, cfg.magnitude_only))
        .collect::<Result<_, _>>()?;
    match cfg.mode {
        FitMode::Bare => fit_each(&files, &traces, out, "bare", |t| {
            let r = fit_bare_cavity(t)?;
            let res = residual_series(t, bare_model(&r))?;
            Ok((r, res))
        }),
        FitMode::Omia => {
            let cavity = fit_cavity_for_omia(cfg, base)?;
            fit_each(&files, &traces, out, "omia", |t| {
                let r = fit_omia(t, &cavity)?;
                let pump = t.meta.pump_hz.unwrap_or_default();
                let res = residual_series(t, omia_model(&r, cavity, pump))?;
                Ok((r, res))
            })
        }
        FitMode::Batch => fit_batch(cfg, linear_max_nd, base, &files, &traces, out),
    }
}

type TraceFit = Result<(FitReport, PlotSeries), CliError>;

fn fit_each(
    files: &[(String, PathBuf)],
    traces: &[Trace],
    out: &mut Output,
    mode: &str,
    fit: impl Fn(&Trace) -> TraceFit,
) -> Result<(), CliError> {
    let mut entries = Vec::new();
    let mut first_err: Option<CliError> = None;
    for (i, ((name, _), t)) in files.iter().zip(traces).enumerate() {
        match fit(t) {
            Ok((report, residual)) => {
                out.write(&format!("residuals_{i:03}.csv"), &residual.to_csv())?;
                if i == 0 {
                    out.write("residuals.svg", &render_svg(name, &[residual]))?;
                }
                entries.push(json!({ "file": name, "report": report.to_json() }));
            }
            Err(e) => {
                entries.push(json!({ "file": name, "error": e.message }));
                first_err.get_or_insert(e);
            }
        }
    }
    out.json(
        "fitreport.json",
        &json!({ "schema_version": SCHEMA_VERSION, "mode": mode, "traces": entries }),
    )?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn fit_batch(
    cfg: &FitConfig,
    linear_max_nd: Option<f64>,
    base: &Path,
    files: &[(String, PathBuf)],
    traces: &[Trace],
    out: &mut Output,
) -> Result<(), CliError> {
    let (kappa_in, kappa_out, _) = coupling_rates(cfg, base)?;
    for ((name, _), t) in files.iter().zip(traces) {
        let missing = if t.meta.pump_dbm.is_none() {
            Some("pump_dbm")
        } else if t.meta.pump_hz.is_none() {
            Some("pump_hz")
        } else if t.meta.atten_db.is_none() && cfg.atten_db.is_none() {
            Some("atten_db")
        } else {
            None
        };
        if let Some(key) = missing {
            return Err(CliError::input(format!("{name}: metadata header lacks `{key}`")));
        }
    }
    let result = batch_extract(
        traces,
        &BatchConfig {
            kappa_in,
            kappa_out,
            attenuation_db: cfg.atten_db,
            linear_max_nd,
        },
    )?;

    let mut entries = Vec::new();
    for o in &result.traces {
        let name = &files[o.index].0;
        let t = &traces[o.index];
        match &o.result {
            Ok((report, point)) => {
                let pump = t.meta.pump_hz.unwrap_or_default();
                let res = residual_series(t, omia_model(report, result.cavity_params, pump))?;
                out.write(&format!("residuals_{:03}.csv", o.index), &res.to_csv())?;
                entries.push(json!({
                    "file": name,
                    "pump_dbm": o.pump_dbm,
                    "n_d": point.n_d,
                    "report": report.to_json(),
                }));
            }
            Err(e) => entries.push(json!({ "file": name, "pump_dbm": o.pump_dbm, "error": e.to_string() })),
        }
    }
    let points = result.points();
    out.write("coop_points.csv", &formats::format_coop_points_csv(&points))?;
    if !points.is_empty() {
        let mut series = vec![PlotSeries::new(
            "data",
            SeriesKind::Scatter,
            ("n_d", points.iter().map(|p| p.n_d).collect()),
            ("coop", points.iter().map(|p| p.coop).collect()),
        )?];
        if let Ok(g0) = &result.g0 {
            let slope = g0.value("slope_per_photon");
            let n_max = points.iter().map(|p| p.n_d).fold(0.0, f64::max);
            series.push(PlotSeries::new(
                "linear fit",
                SeriesKind::Line,
                ("n_d", vec![0.0, n_max]),
                ("coop", vec![0.0, slope * n_max]),
            )?);
        }
        out.series("coop", "cooperativity vs pump photons", &series)?;
    }
    let lowest = &traces[result.traces[0].index];
    out.write(
        "residuals_cavity.csv",
        &residual_series(lowest, bare_model(&result.cavity))?.to_csv(),
    )?;

    let g0_json = match &result.g0 {
        Ok(r) => r.to_json(),
        Err(e) => json!({ "error": e.to_string() }),
    };
    out.json(
        "fitreport.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "mode": "batch",
            "cavity": result.cavity.to_json(),
            "gamma_m_hz": { "value": rad_to_hz(result.gamma_m.0), "sigma": rad_to_hz(result.gamma_m.1) },
            "traces": entries,
            "g0": g0_json,
        }),
    )?;
    match result.g0 {
        Ok(_) => Ok(()),
        Err(e) => Err(e.into()),
    }
}

// ---- tune ----

#[derive(Serialize)]
struct TuneReport {
    schema_version: u32,
    mode: &'static str,
    f0_hz: f64,
    f0_sigma_hz: f64,
    curvature_hz_per_v2: f64,
    curvature_sigma_hz_per_v2: f64,
    c_dprime_f_per_m2: Option<f64>,
    spring_k_n_per_m: Option<f64>,
    positive_curvature_warning: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    points: Vec<TunePoint>,
}

#[derive(Serialize)]
struct TunePoint {
    vdc_v: f64,
    freq_hz: f64,
}

fn parabola_series(sweep: &VSweep, f0_hz: f64, c2_hz: f64) -> Result<Vec<PlotSeries>, CliError> {
    let data = PlotSeries::new(
        "data",
        SeriesKind::Scatter,
        ("vdc_v", sweep.volts.clone()),
        ("freq_hz", sweep.freqs.iter().map(|&w| rad_to_hz(w)).collect()),
    )?;
    let lo = sweep.volts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sweep.volts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v: Vec<f64> = (0..=200).map(|k| lo + (hi - lo) * k as f64 / 200.0).collect();
    let f = v.iter().map(|v| f0_hz + c2_hz * v * v).collect();
    Ok(vec![data, PlotSeries::new("parabola", SeriesKind::Line, ("vdc_v", v), ("freq_hz", f))?])
}

fn cmd_tune(cfg: &TuneConfig, base: &Path, out: &mut Output) -> Result<(), CliError> {
    if let Some(path) = &cfg.sweep {
        let sweep = formats::parse_vsweep_csv(&formats::read_to_string(&base.join(path))?)?;
        let fit = fit_parabola(&sweep)?;
        let spring_k = cfg
            .spring_k_n_per_m
            .or(cfg.mass_eff_kg.map(|m| m * fit.omega_m0 * fit.omega_m0));
        let report = TuneReport {
            schema_version: SCHEMA_VERSION,
            mode: "fit",
            f0_hz: rad_to_hz(fit.omega_m0),
            f0_sigma_hz: rad_to_hz(fit.omega_m0_sigma),
            curvature_hz_per_v2: rad_to_hz(fit.curvature),
            curvature_sigma_hz_per_v2: rad_to_hz(fit.curvature_sigma),
            c_dprime_f_per_m2: spring_k.map(|k| fit.d2c_dx2(k)),
            spring_k_n_per_m: spring_k,
            positive_curvature_warning: fit.positive_curvature,
            points: Vec::new(),
        };
        if fit.positive_curvature {
            log::warn!("fitted curvature is positive; capacitive softening cannot produce this");
        }
        out.json("tunereport.json", &report)?;
        let series = parabola_series(&sweep, report.f0_hz, report.curvature_hz_per_v2)?;
        return out.series("tune", "frequency vs bias", &series);
    }

    let m = cfg
        .model
        .as_ref()
        .ok_or_else(|| CliError::input("tune needs `sweep` or `model`"))?;
    let geom = m.geometry.map(|g| (g.drum(), g.drums as f64));
    let mass = m
        .mass_eff_kg
        .or(geom.map(|(d, n)| n * d.effective_mass(DEFAULT_MASS_FACTOR)))
        .ok_or_else(|| CliError::input("tune model needs mass_eff_kg or geometry"))?;
    let d2c = match (m.c_dprime_f_per_m2, geom) {
        (Some(c), _) => c,
        (None, Some((d, n))) => n * parallel_plate_derivatives(&d)?.c_dprime,
        (None, None) => return Err(CliError::input("tune model needs c_dprime_f_per_m2 or geometry")),
    };
    let model = TuneModel::new(hz_to_rad(m.f0_hz), mass, d2c)?;
    if cfg.volts.is_empty() {
        return Err(CliError::new(ExitStatus::Insufficient, "forward tune needs `volts`"));
    }
    let freqs = cfg
        .volts
        .iter()
        .map(|&v| softened_frequency(&model, v))
        .collect::<Result<Vec<_>, _>>()?;
    let c2 = -model.omega_m0 * model.d2c_dx2 / (4.0 * model.spring_k);
    out.json(
        "tunereport.json",
        &TuneReport {
            schema_version: SCHEMA_VERSION,
            mode: "forward",
            f0_hz: rad_to_hz(model.omega_m0),
            f0_sigma_hz: 0.0,
            curvature_hz_per_v2: rad_to_hz(c2),
            curvature_sigma_hz_per_v2: 0.0,
            c_dprime_f_per_m2: Some(model.d2c_dx2),
            spring_k_n_per_m: Some(model.spring_k),
            positive_curvature_warning: false,
            points: cfg
                .volts
                .iter()
                .zip(&freqs)
                .map(|(&vdc_v, &w)| TunePoint {
                    vdc_v,
                    freq_hz: rad_to_hz(w),
                })
                .collect(),
        },
    )?;
    let sweep = VSweep {
        volts: cfg.volts.clone(),
        freqs,
    };
    if sweep.volts.len() >= 3 {
        out.write("vsweep.csv", &formats::format_vsweep_csv(&sweep))?;
    }
    let series = parabola_series(&sweep, rad_to_hz(model.omega_m0), rad_to_hz(c2))?;
    out.series("tune", "frequency vs bias", &series)
}
