//! Discrete DN matrix of the unit disc with a concentric inclusion, compared
//! with the analytic eigenvalues `n(1 − μρ^{2n})/(1 + μρ^{2n})`.

use vhed_eit::cem_fem::{simulate_measurements, ForwardSetup};
use vhed_eit::dn_mimic::{dn_matrix, reference_nd_matrix, relative_nd_matrix};
use vhed_eit::phantom::{HeadPhantom, StrokeInclusion};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (m, rho, sigma_c) = (65, 0.5, 2.0);
    let setup = ForwardSetup::disc(m)?;
    let phantom = HeadPhantom::with_inclusions((1.0, 1.0), vec![StrokeInclusion::disc([0.0, 0.0], rho, sigma_c)]);

    let meas = simulate_measurements(&phantom, &setup)?;
    println!("mesh: {} nodes, {} triangles", meas.mesh_nodes, meas.mesh_triangles);
    let nd = relative_nd_matrix(&meas.relative(), &setup.patterns)?;
    let r1 = reference_nd_matrix(&setup.map, m)?;
    let dn = dn_matrix(&nd, &r1)?;
    println!("condition of Uᵀ I + R₁: {:.3e}, asymmetry {:.2e}", dn.condition, dn.asymmetry());

    let mu = (1.0 - sigma_c) / (1.0 + sigma_c);
    let lt = dn.reduced();
    println!("{:>3} {:>12} {:>12} {:>12} {:>10}", "n", "cos mode", "sin mode", "analytic", "rel. err");
    for n in 1..=16 {
        let exact = n as f64 * (1.0 - mu * rho.powi(2 * n as i32)) / (1.0 + mu * rho.powi(2 * n as i32));
        let (c, s) = (lt[(2 * n - 2, 2 * n - 2)], lt[(2 * n - 1, 2 * n - 1)]);
        let err = ((c - exact).abs()).max((s - exact).abs()) / exact;
        println!("{n:>3} {c:>12.6} {s:>12.6} {exact:>12.6} {err:>10.2e}");
    }
    Ok(())
}
