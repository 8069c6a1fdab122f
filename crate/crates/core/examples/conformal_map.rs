//! Fit the disc-to-helmet conformal map and place the electrodes.

use num_complex::Complex64;
use vhed_eit::geometry::{arc_parametrization, electrode_midpoints, ConformalMap, DEFAULT_TRUNCATION, HELMET_SEMI_AXES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let map = ConformalMap::disc_to_ellipse(HELMET_SEMI_AXES, DEFAULT_TRUNCATION)?;
    println!("semi-axes {:?}, perimeter {:.6}", map.semi_axes(), map.perimeter());
    println!("max boundary deviation {:.2e}", map.fit_deviation());
    for (j, c) in map.coefficients().iter().take(6).enumerate() {
        println!("  c_{} = {c:+.6e}", 2 * j + 1);
    }
    let z = Complex64::new(0.3, -0.2);
    println!("Ψ({z}) = {:.6}, Ψ'({z}) = {:.6}", map.eval(z), map.derivative(z));

    let electrodes = electrode_midpoints(&map, 16 + 1)?;
    println!("\n{:>3} {:>9} {:>20} {:>9}", "m", "θ_m", "y_m", "s_m");
    for (m, e) in electrodes.iter().enumerate() {
        println!("{:>3} {:>9.5} ({:>8.5}, {:>8.5}) {:>9.5}", m + 1, e.theta, e.point[0], e.point[1], e.arc);
    }

    let param = arc_parametrization(&map, 256)?;
    println!("\narc-length parametrisation: {} nodes, spacing {:.6}", param.len(), param.spacing());
    Ok(())
}
