//! Spring softening of a drum under DC bias, and recovery of C'' from the
//! fitted curvature of the tuning parabola.

use omcavity::electrotune::{fit_parabola, parallel_plate_derivatives, TuneModel, VSweep};
use omcavity::omresponse::{DrumGeometry, DEFAULT_MASS_FACTOR};
use omcavity::units::{hz_to_rad, rad_to_hz};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let drum = DrumGeometry::circular(22e-6, 300e-9, 100e-9, 2700.0);
    let pp = parallel_plate_derivatives(&drum)?;
    println!("C = {:.2} fF, C' = {:.3e} F/m, C'' = {:.3e} F/m^2", pp.c_m * 1e15, pp.c_prime, pp.c_dprime);

    let model = TuneModel::new(hz_to_rad(5.23e6), drum.effective_mass(DEFAULT_MASS_FACTOR), pp.c_dprime)?;
    println!("k = {:.2} N/m, pull-in at {:.2} V", model.spring_k, model.pull_in_voltage());

    let vmax = 0.1 * model.pull_in_voltage();
    let volts: Vec<f64> = (-10..=10).map(|i| vmax * i as f64 / 10.0).collect();
    let sweep = VSweep::from_model(&model, &volts)?;
    for (v, w) in sweep.volts.iter().zip(&sweep.freqs).step_by(5) {
        println!("  {v:7.3} V  {:.3} Hz", rad_to_hz(*w));
    }

    let fit = fit_parabola(&sweep)?;
    println!("curvature {:.4} Hz/V^2", rad_to_hz(fit.curvature));
    println!("C'' from fit {:.4e} F/m^2 ({:+.3}%)", fit.d2c_dx2(model.spring_k), 100.0 * (fit.d2c_dx2(model.spring_k) / pp.c_dprime - 1.0));
    Ok(())
}
