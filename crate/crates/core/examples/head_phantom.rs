//! Sample virtual patients for each stroke scenario and save one as JSON.

use vhed_eit::io::write_json;
use vhed_eit::phantom::{sample_phantom, Scenario, StrokeClass, Tissue, TissueDistributions, DEFAULT_PERTURBATION};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dists = TissueDistributions::default();
    for (i, scenario) in Scenario::ALL.into_iter().enumerate() {
        for class in [StrokeClass::Ischemic, StrokeClass::Hemorrhagic] {
            let seed = 100 + i as u64;
            let p = sample_phantom(seed, class, scenario, DEFAULT_PERTURBATION, &dists)?;
            println!("{} / {:?} (seed {seed})", scenario.name(), class);
            let t = p.tissues;
            println!(
                "  scalp {:.3} skull {:.4} CSF {:.3} grey {:.4} white {:.4}",
                t.scalp, t.skull, t.csf, t.grey, t.white
            );
            for inc in &p.inclusions {
                println!("  inclusion at ({:+.3}, {:+.3}), {:?}, σ = {:.4}", inc.center[0], inc.center[1], inc.shape, inc.conductivity);
            }
            let centre = p.inclusions[0].center;
            println!("  tissue at first inclusion centre: {:?}", p.tissue_at(centre));
        }
    }

    let p = sample_phantom(7, StrokeClass::Hemorrhagic, Scenario::Multiple, DEFAULT_PERTURBATION, &dists)?;
    let path = std::env::temp_dir().join("vhed-phantom.json");
    write_json(&path, &p)?;
    println!("\nsaved {} ({} layers, scalp outer radius at θ=0: {:.4})", path.display(), p.layers.len(), p.layer(Tissue::Scalp).unwrap().radius(0.0));
    Ok(())
}
