//! VHED profiles of a hemorrhagic/ischemic pair with identical geometry,
//! written as SVG line plots.

use vhed_eit::cem_fem::simulate_measurements;
use vhed_eit::phantom::{sample_phantom, Scenario, StrokeClass, TissueDistributions, DEFAULT_PERTURBATION};
use vhed_eit::pipeline::{overlay_svg, profile_svg, ExperimentConfig, FeatureContext};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::default();
    let ctx = FeatureContext::new(&cfg)?;
    let out = std::env::temp_dir().join("vhed-profiles");
    std::fs::create_dir_all(&out)?;

    let mut pair = Vec::new();
    for class in [StrokeClass::Hemorrhagic, StrokeClass::Ischemic] {
        let phantom = sample_phantom(5, class, Scenario::Circular, DEFAULT_PERTURBATION, &TissueDistributions::default())?;
        let meas = simulate_measurements(&phantom, &ctx.setup)?;
        let dn = ctx.dn_from_voltages(&meas.sigma, &meas.reference)?;
        let start = std::time::Instant::now();
        let profile = ctx.profile_from_dn(&dn)?;
        println!("{class:?}: profile in {:.2} s, max |T_odd| = {:.4e}", start.elapsed().as_secs_f64(), profile.max_abs());

        let t = &profile.window.t_grid;
        for (a, row) in profile.t_odd.iter().enumerate() {
            let (i, peak) = row.iter().enumerate().max_by(|x, y| x.1.norm().total_cmp(&y.1.norm())).unwrap();
            let ratio = row[t.len() / 2].norm() / profile.t_plus[a][t.len() / 2].norm();
            println!(
                "  φ = {:.4}: leading feature {peak:.4e} at t = {:+.3}; |T_odd(0)|/|T⁺(0)| = {ratio:.3}",
                profile.angles[a], t[i]
            );
            let svg = profile_svg(t, row, &format!("{class:?}, φ = {:.4}", profile.angles[a]), &format!("max |T_odd| = {:.3e}", profile.max_abs()));
            std::fs::write(out.join(format!("{class:?}_angle{a}.svg")), svg)?;
        }
        pair.push((format!("{class:?}"), class, profile.t_odd.clone()));
        if class == StrokeClass::Ischemic {
            std::fs::write(out.join("overlay.svg"), overlay_svg(t, &profile.angles, &pair))?;
        }
    }
    println!("plots in {}", out.display());
    Ok(())
}
