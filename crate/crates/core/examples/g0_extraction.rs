//! Full chain on a simulated power sweep: cavity fit, one OMIA fit per
//! trace, photon calibration, and the linear cooperativity fit for g0.

use omcavity::fitkit::{batch_extract, BatchConfig};
use omcavity::formats::OmSystem;
use omcavity::omresponse::{CavityParams, MechMode};
use omcavity::simulate::{simulate_traces, PumpSweep, SimSpec};
use omcavity::units::{hz_to_rad, rad_to_hz};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = OmSystem {
        cavity: CavityParams::new(hz_to_rad(6.31e9), hz_to_rad(55e3), hz_to_rad(96e3), hz_to_rad(330e3), 0.37)?,
        mech_modes: vec![MechMode::new(hz_to_rad(5.23e6), hz_to_rad(250.0), hz_to_rad(8.0))?],
    };
    let spec = SimSpec {
        pumps: PumpSweep::Cooperativity(vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0]),
        snr_db: Some(30.0),
        ..Default::default()
    };
    let traces = simulate_traces(&sys, &spec, 42)?;

    let config = BatchConfig {
        kappa_in: sys.cavity.kappa_in,
        kappa_out: sys.cavity.kappa_out,
        attenuation_db: None,
        linear_max_nd: None,
    };
    let result = batch_extract(&traces, &config)?;

    println!("{:>9} {:>12} {:>14}", "P (dBm)", "n_d", "C");
    for t in &result.traces {
        if let Ok((_, p)) = &t.result {
            println!("{:>9.2} {:>12.4e} {:>8.3} +/- {:.3}", t.pump_dbm.unwrap_or(f64::NAN), p.n_d, p.coop, p.coop_sigma);
        }
    }
    let (gm, gm_s) = result.gamma_m;
    println!("gamma_m/2pi = {:.1} +/- {:.1} Hz", rad_to_hz(gm), rad_to_hz(gm_s));
    let g0 = result.g0?;
    println!("g0/2pi      = {:.3} +/- {:.3} Hz (true 8)", rad_to_hz(g0.value("g0")), rad_to_hz(g0.sigma("g0")));
    Ok(())
}
