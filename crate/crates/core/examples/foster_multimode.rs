//! Several modes from one admittance sweep, and how each shifts when a
//! compliant capacitance is added.

use omcavity::netfoster::{
    auto_grid, coupled_modes, find_modes, synthesize_admittance, FosterNetwork, LcBranch,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = FosterNetwork {
        shunt_c: 40e-15,
        series_l: Some(4e-9),
        branches: vec![
            LcBranch { l: 2e-9, c: 60e-15 },
            LcBranch { l: 1.2e-9, c: 25e-15 },
        ],
    };

    let trace = synthesize_admittance(&net, &auto_grid(&net, 400))?;
    println!("bare network, {} samples", trace.len());
    for m in find_modes(&trace)? {
        println!("  {:8.4} GHz  Z = {:7.2} ohm", m.frequency_hz() * 1e-9, m.impedance_z);
    }

    for c_m in [5e-15, 20e-15] {
        println!("with C_m = {:.0} fF", c_m * 1e15);
        for m in coupled_modes(&net, c_m)? {
            let eta = c_m / m.c_p;
            println!("  {:8.4} GHz  participation {eta:.3}", m.frequency_hz() * 1e-9);
        }
    }
    Ok(())
}
