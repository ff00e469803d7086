//! Single-photon coupling estimated from the drum geometry and the
//! participation of its capacitance in the cavity mode.

use omcavity::netfoster::{coupled_mode, FosterNetwork};
use omcavity::omresponse::{estimate_g0, zero_point_motion, CavityParams, DrumGeometry, MechMode, DEFAULT_MASS_FACTOR};
use omcavity::units::{hz_to_rad, rad_to_hz};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let drum = DrumGeometry::circular(22e-6, 300e-9, 100e-9, 2700.0);
    let mech = MechMode::new(hz_to_rad(5.23e6), hz_to_rad(250.0), 0.0)?;
    let cav = CavityParams::new(hz_to_rad(6.31e9), hz_to_rad(55e3), hz_to_rad(96e3), hz_to_rad(330e3), 0.37)?;

    let mass = drum.effective_mass(DEFAULT_MASS_FACTOR);
    println!("m_eff = {:.3e} kg, x_zpf = {:.3e} m", mass, zero_point_motion(mass, mech.omega_m));

    let mode = coupled_mode(&FosterNetwork::lc(29.8e-15, 5.4e-9), 23e-15)?;
    let eta = 23e-15 / mode.c_p;
    for eta in [eta, 0.5 * eta] {
        let g0 = estimate_g0(&cav, &mech, &drum, eta)?;
        println!("eta = {eta:.3}: g0/2pi = {:.1} Hz", rad_to_hz(g0));
    }
    Ok(())
}
