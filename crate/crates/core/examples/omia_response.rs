//! Transmission dip opened by a red-sideband pump: depth 1/(1+C) and a
//! width that grows as gamma_m (1+C).

use omcavity::omresponse::{
    effective_mech_linewidth, omia_depth, s21_two_tone, CavityParams, MechMode,
};
use omcavity::units::{hz_to_rad, rad_to_hz};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cav = CavityParams::new(hz_to_rad(6.31e9), hz_to_rad(55e3), hz_to_rad(96e3), hz_to_rad(330e3), 0.37)?;
    let mech = MechMode::new(hz_to_rad(5.23e6), hz_to_rad(250.0), hz_to_rad(8.0))?;

    println!("{:>6} {:>10} {:>10} {:>12}", "C", "|S21|/A", "1/(1+C)", "width (Hz)");
    for coop in [0.0, 1.0, 10.0, 40.0] {
        let s = s21_two_tone(&cav, &mech, coop, &[0.0])?.s21[0];
        let width = rad_to_hz(effective_mech_linewidth(mech.gamma_m, coop));
        println!("{coop:>6} {:>10.5} {:>10.5} {width:>12.1}", s.norm() / cav.amp_scale, omia_depth(coop));
    }

    // A short cut through the C = 10 dip.
    let offsets: Vec<f64> = (-10..=10).map(|k| hz_to_rad(300.0 * k as f64)).collect();
    let resp = s21_two_tone(&cav, &mech, 10.0, &offsets)?;
    for (d, s) in offsets.iter().zip(&resp.s21) {
        println!("{:>8.0} Hz  {:.4}", rad_to_hz(*d), s.norm());
    }
    Ok(())
}
