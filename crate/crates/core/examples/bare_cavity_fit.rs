//! Fit a noisy undriven cavity trace for its centre, linewidth and
//! amplitude, then write it in the trace CSV format.

use omcavity::fitkit::fit_bare_cavity;
use omcavity::formats::{format_trace_csv, OmSystem};
use omcavity::omresponse::{CavityParams, MechMode};
use omcavity::simulate::{simulate_traces, SimSpec};
use omcavity::units::{hz_to_rad, rad_to_hz};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = OmSystem {
        cavity: CavityParams::new(hz_to_rad(6.31e9), hz_to_rad(55e3), hz_to_rad(96e3), hz_to_rad(330e3), 0.37)?,
        mech_modes: vec![MechMode::new(hz_to_rad(5.23e6), hz_to_rad(250.0), hz_to_rad(8.0))?],
    };
    let spec = SimSpec {
        snr_db: Some(30.0),
        ..Default::default()
    };
    let trace = &simulate_traces(&sys, &spec, 1)?[0];

    let r = fit_bare_cavity(trace)?;
    println!("f_c   = {:.6} GHz", rad_to_hz(r.value("omega_c")) * 1e-9);
    println!("kappa = {:.2} +/- {:.2} kHz", rad_to_hz(r.value("kappa")) * 1e-3, rad_to_hz(r.sigma("kappa")) * 1e-3);
    println!("A     = {:.4} +/- {:.4}", r.value("amp_scale"), r.sigma("amp_scale"));

    let csv = format_trace_csv(trace);
    println!("\n{}", csv.lines().take(6).collect::<Vec<_>>().join("\n"));
    Ok(())
}
