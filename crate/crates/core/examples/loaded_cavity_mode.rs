//! Mode of the 3D cavity loaded by the drum capacitance, from its lumped
//! equivalent circuit.

use omcavity::netfoster::{coupled_mode, participation_ratio, FosterNetwork};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Empty cavity as a parallel LC; the drum adds 23 fF in parallel.
    let cavity = FosterNetwork::lc(29.8e-15, 5.4e-9);
    let c_m = 23e-15;

    let mode = coupled_mode(&cavity, c_m)?;
    println!("f0            {:.4} GHz", mode.frequency_hz() * 1e-9);
    println!("Z             {:.2} ohm", mode.impedance_z);
    println!("C_p           {:.2} fF", mode.c_p * 1e15);
    println!("L_p           {:.3} nH", mode.l_p * 1e9);
    println!("participation {:.3}", participation_ratio(c_m, mode.c_p - c_m)?);
    Ok(())
}
