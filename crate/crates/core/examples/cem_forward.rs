//! Complete electrode model voltages for a head phantom, with relative noise.

use vhed_eit::cem_fem::{simulate_measurements, write_voltages, ForwardSetup, MeshSpec, DEFAULT_CONTACT_IMPEDANCE};
use vhed_eit::geometry::HELMET_SEMI_AXES;
use vhed_eit::phantom::{sample_phantom, Scenario, StrokeClass, TissueDistributions, DEFAULT_PERTURBATION};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setup = ForwardSetup::new(HELMET_SEMI_AXES, 65, MeshSpec::default(), DEFAULT_CONTACT_IMPEDANCE)?;
    let phantom = sample_phantom(11, StrokeClass::Hemorrhagic, Scenario::Circular, DEFAULT_PERTURBATION, &TissueDistributions::default())?;

    let start = std::time::Instant::now();
    let meas = simulate_measurements(&phantom, &setup)?;
    println!(
        "{} nodes, {} triangles, {} patterns solved twice in {:.2} s",
        meas.mesh_nodes,
        meas.mesh_triangles,
        setup.patterns.n_patterns(),
        start.elapsed().as_secs_f64()
    );

    let v = &meas.sigma.voltages;
    let sums: f64 = v.column_iter().map(|c| c.sum().abs()).fold(0.0, f64::max);
    println!("largest |Σ_m U_m| over patterns: {sums:.2e}");
    let rel = meas.relative();
    println!("‖U_σ‖ = {:.4e}, ‖U_σ − U_1‖ = {:.4e}", v.norm(), rel.norm());

    for delta in [1e-3, 1e-2] {
        let noisy = meas.sigma.with_noise(delta, 42)?;
        let err = (&noisy.voltages - v).norm() / v.norm();
        println!("δ = {delta}: ‖e‖/‖U‖ = {err:.3e}");
    }
    let path = std::env::temp_dir().join("vhed-voltages.f64");
    write_voltages(&path, &meas.sigma, phantom.seed, &setup)?;
    println!("saved {}", path.display());
    Ok(())
}
