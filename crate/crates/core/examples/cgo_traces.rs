//! Boundary traces of the CGO solutions on the spectral grid for one phantom.

use vhed_eit::cem_fem::simulate_measurements;
use vhed_eit::cgo_bie::{cgo_traces, BieSystem};
use vhed_eit::phantom::{sample_phantom, Scenario, StrokeClass, TissueDistributions, DEFAULT_PERTURBATION};
use vhed_eit::pipeline::{ExperimentConfig, FeatureContext};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::default();
    let ctx = FeatureContext::new(&cfg)?;
    let phantom = sample_phantom(3, StrokeClass::Hemorrhagic, Scenario::Circular, DEFAULT_PERTURBATION, &TissueDistributions::default())?;
    let meas = simulate_measurements(&phantom, &ctx.setup)?;
    let dn = ctx.dn_from_voltages(&meas.sigma, &meas.reference)?;

    let start = std::time::Instant::now();
    let system = BieSystem::new(&ctx.ops, &dn, &ctx.reference, cfg.n_modes)?;
    let traces = cgo_traces(&system, &ctx.grid)?;
    println!(
        "{} angles × {} τ values × {} boundary nodes in {:.2} s",
        ctx.grid.angles.len(),
        ctx.grid.taus.len(),
        ctx.ops.quad.len(),
        start.elapsed().as_secs_f64()
    );
    let worst = traces.residuals.iter().flatten().cloned().fold(0.0, f64::max);
    println!("largest backward error {worst:.2e}, max |ω±| {:.4e}", traces.max_abs());

    println!("\n{:>8} {:>12} {:>12}", "τ", "max|ω+|", "max|ω−|");
    let a = 0;
    for (t, tau) in ctx.grid.taus.iter().enumerate().step_by(4) {
        let m = |side: &Vec<Vec<Vec<num_complex::Complex64>>>| side[a][t].iter().map(|c| c.norm()).fold(0.0, f64::max);
        println!("{tau:>8.3} {:>12.4e} {:>12.4e}", m(&traces.plus), m(&traces.minus));
    }
    Ok(())
}
