//! Mesh generation, the CEM solver and simulated measurements.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use vhed_eit::cem_fem::{
    add_noise, simulate_measurements, simulate_on_mesh, CemError, CemSolver, ForwardSetup, Mesh, MeshSpec, RegionTag,
    VoltageSet, DEFAULT_CONTACT_IMPEDANCE,
};
use vhed_eit::geometry::HELMET_SEMI_AXES;
use vhed_eit::phantom::{sample_phantom, HeadPhantom, Scenario, StrokeClass, StrokeInclusion, TissueDistributions, DEFAULT_PERTURBATION};

fn setup(m: usize, h: f64) -> ForwardSetup {
    ForwardSetup::new(HELMET_SEMI_AXES, m, MeshSpec { target_h: h, coverage: 0.5 }, DEFAULT_CONTACT_IMPEDANCE).unwrap()
}

fn patient(seed: u64, class: StrokeClass, scenario: Scenario) -> HeadPhantom {
    sample_phantom(seed, class, scenario, DEFAULT_PERTURBATION, &TissueDistributions::default()).unwrap()
}

fn mesh_for(phantom: &HeadPhantom, s: &ForwardSetup) -> Mesh {
    Mesh::build(phantom, &s.map, &s.layout, s.mesh).unwrap()
}

fn solver_for(phantom: &HeadPhantom, s: &ForwardSetup) -> (Mesh, CemSolver) {
    let mesh = mesh_for(phantom, s);
    let solver = CemSolver::new(&mesh, &mesh.conductivities(phantom), &s.impedances()).unwrap();
    (mesh, solver)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[test]
fn zero_current_gives_zero_potentials() {
    let s = setup(17, 0.04);
    let (_, solver) = solver_for(&patient(1, StrokeClass::Hemorrhagic, Scenario::Circular), &s);
    let sol = solver.solve(&vec![0.0; 17]).unwrap();
    assert!(sol.electrode.iter().chain(&sol.interior).all(|&v| v == 0.0));
}

#[test]
fn unbalanced_current_is_rejected() {
    let s = setup(9, 0.05);
    let (_, solver) = solver_for(&HeadPhantom::homogeneous(HELMET_SEMI_AXES), &s);
    let mut currents = vec![0.0; 9];
    currents[0] = 1.0;
    assert!(matches!(solver.solve(&currents), Err(CemError::NotConserved(_))));
    assert!(matches!(solver.solve(&[0.0; 4]), Err(CemError::Dimension { .. })));
}

#[test]
fn transfer_matrix_is_reciprocal() {
    let s = setup(33, 0.03);
    let phantom = patient(4, StrokeClass::Ischemic, Scenario::Elliptic);
    let meas = simulate_measurements(&phantom, &s).unwrap();
    let g = meas.sigma.voltages.transpose() * &s.patterns.currents;
    let asym = (&g - g.transpose()).amax() / g.amax();
    assert!(asym < 1e-9, "relative asymmetry {asym:e}");
}

#[test]
fn electrode_currents_are_recovered() {
    let s = setup(33, 0.03);
    let (_, solver) = solver_for(&patient(2, StrokeClass::Hemorrhagic, Scenario::Multiple), &s);
    for k in [0, 7, 31] {
        let currents = s.patterns.column(k);
        let sol = solver.solve(&currents).unwrap();
        let back = solver.electrode_currents(&sol);
        let scale = currents.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let err = back.iter().zip(&currents).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 5e-3 * scale, "pattern {k}: current error {err:e} of {scale:e}");
        assert!(back.iter().sum::<f64>().abs() < 1e-10 * scale);
        assert!(sol.electrode.iter().sum::<f64>().abs() < 1e-12);
    }
}

#[test]
fn homogeneous_phantom_has_unit_conductivity() {
    let s = setup(33, 0.04);
    let phantom = HeadPhantom::homogeneous(HELMET_SEMI_AXES);
    let mesh = mesh_for(&phantom, &s);
    assert!(mesh.conductivities(&phantom).iter().all(|&c| c == 1.0));
    assert!(mesh.region_tag.iter().all(|t| matches!(t, RegionTag::Tissue(_))));
}

#[test]
fn mesh_covers_the_helmet_with_positive_elements() {
    let s = setup(65, 0.02);
    let mesh = mesh_for(&patient(3, StrokeClass::Ischemic, Scenario::Circular), &s);
    let area: f64 = (0..mesh.triangles.len()).map(|t| mesh.area(t)).sum();
    let exact = PI * HELMET_SEMI_AXES.0 * HELMET_SEMI_AXES.1;
    assert!((area - exact).abs() < 1e-3 * exact, "area {area} vs {exact}");
    assert!((0..mesh.triangles.len()).all(|t| mesh.area(t) > 0.0));
    assert!(mesh.min_quality() > 0.1, "min quality {}", mesh.min_quality());
    assert_eq!(mesh.nodes[mesh.center], [0.0, 0.0]);
    for &b in &mesh.boundary {
        let p = mesh.nodes[b];
        let r = (p[0] / HELMET_SEMI_AXES.0).powi(2) + (p[1] / HELMET_SEMI_AXES.1).powi(2);
        assert!((r - 1.0).abs() < 1e-9, "boundary node off the ellipse");
    }
}

#[test]
fn electrodes_are_resolved_and_graded() {
    let h = 0.02;
    let s = setup(65, h);
    let mesh = mesh_for(&HeadPhantom::homogeneous(HELMET_SEMI_AXES), &s);
    assert_eq!(mesh.electrode_edges.len(), 65);
    let half_width = 0.5 * 0.5 * s.map.perimeter() / 65.0;
    for (m, edges) in mesh.electrode_edges.iter().enumerate() {
        assert!(edges.len() >= 4, "electrode {m} has {} edges", edges.len());
        assert!(edges.windows(2).all(|w| w[0][1] == w[1][0]), "electrode {m} is not contiguous");
        let len: f64 = edges.iter().map(|&[a, b]| dist(mesh.nodes[a], mesh.nodes[b])).sum();
        assert!((len - 2.0 * half_width).abs() < 1e-3 * half_width, "electrode {m} length {len}");
        for end in [edges[0], edges[edges.len() - 1]] {
            let e = dist(mesh.nodes[end[0]], mesh.nodes[end[1]]);
            assert!(e <= 0.5 * h / 4.0, "electrode {m} end edge {e}");
        }
    }
}

#[test]
fn strokes_are_resolved_and_tagged() {
    let s = setup(65, 0.02);
    for (seed, scenario) in [(10, Scenario::Circular), (11, Scenario::Elliptic), (12, Scenario::Multiple)] {
        let phantom = patient(seed, StrokeClass::Hemorrhagic, scenario);
        let mesh = mesh_for(&phantom, &s);
        for i in 0..phantom.inclusions.len() {
            let n = mesh.region_tag.iter().filter(|&&t| t == RegionTag::Inclusion(i)).count();
            assert!(n >= 20, "{scenario:?}: inclusion {i} covers {n} triangles");
        }
        let sigma = mesh.conductivities(&phantom);
        let mut checked = 0;
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let c = mesh.centroid(t);
            // vertices and edge midpoints pulled slightly towards the centroid
            let corners = tri.map(|i| mesh.nodes[i]);
            let probes: Vec<[f64; 2]> = (0..3)
                .flat_map(|k| {
                    let (a, b) = (corners[k], corners[(k + 1) % 3]);
                    [a, [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]]
                })
                .map(|p| [c[0] + 0.95 * (p[0] - c[0]), c[1] + 0.95 * (p[1] - c[1])])
                .collect();
            let at_c = phantom.conductivity_at(c).unwrap();
            if probes.iter().all(|&p| phantom.conductivity_at(p).unwrap() == at_c) {
                assert!((sigma[t] - at_c).abs() < 1e-12 * at_c, "{scenario:?}: triangle {t}");
                checked += 1;
            }
        }
        assert!(checked > mesh.triangles.len() * 9 / 10);
    }
}

fn stacked_distance(a: &VoltageSet, b: &VoltageSet) -> f64 {
    (&a.voltages - &b.voltages).norm() / b.voltages.norm()
}

#[test]
fn refinement_drift_decreases() {
    let phantom = patient(20, StrokeClass::Hemorrhagic, Scenario::Circular);
    let data: Vec<VoltageSet> = [0.04, 0.02, 0.01].iter().map(|&h| simulate_measurements(&phantom, &setup(33, h)).unwrap().sigma).collect();
    let coarse = stacked_distance(&data[0], &data[2]);
    let medium = stacked_distance(&data[1], &data[2]);
    assert!(medium < coarse, "drift {coarse:e} -> {medium:e}");
    assert!(medium < 1e-2);
}

#[test]
fn nested_refinement_keeps_geometry() {
    let s = setup(17, 0.05);
    let phantom = patient(5, StrokeClass::Ischemic, Scenario::Circular);
    let mesh = mesh_for(&phantom, &s);
    let fine = mesh.refined(&phantom);
    assert_eq!(fine.triangles.len(), 4 * mesh.triangles.len());
    assert_eq!(fine.boundary.len(), 2 * mesh.boundary.len());
    let area = |m: &Mesh| (0..m.triangles.len()).map(|t| m.area(t)).sum::<f64>();
    assert!((area(&fine) - area(&mesh)).abs() < 1e-12);
    assert!(fine.electrode_edges.iter().zip(&mesh.electrode_edges).all(|(f, c)| f.len() == 2 * c.len()));
    assert!(simulate_on_mesh(&phantom, &fine, &s).is_ok());
}

#[test]
fn noise_has_exact_relative_norm() {
    let v: Vec<f64> = (0..4160).map(|i| (i as f64 * 0.37).sin()).collect();
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    for (delta, seed) in [(1e-3, 0), (1e-2, 1), (0.1, 99)] {
        let noisy = add_noise(&v, delta, seed).unwrap();
        let e: Vec<f64> = noisy.iter().zip(&v).map(|(a, b)| a - b).collect();
        assert!((norm(&e) / norm(&v) - delta).abs() < 1e-12 * delta.max(1.0));
        assert_eq!(noisy, add_noise(&v, delta, seed).unwrap());
        assert_ne!(noisy, add_noise(&v, delta, seed + 1).unwrap());
    }
    assert_eq!(add_noise(&v, 0.0, 3).unwrap(), v);
    assert!(matches!(add_noise(&[0.0; 8], 1e-2, 0), Err(CemError::ZeroSignal)));
}

#[test]
fn measurements_are_deterministic_and_class_dependent() {
    let s = setup(65, 0.04);
    let base = patient(30, StrokeClass::Hemorrhagic, Scenario::Circular);
    let a = simulate_measurements(&base, &s).unwrap();
    let b = simulate_measurements(&base, &s).unwrap();
    assert_eq!(a.sigma.voltages, b.sigma.voltages);
    assert_eq!(a.sigma.stacked().len(), 65 * 64);

    let homogeneous = simulate_measurements(&HeadPhantom::homogeneous(HELMET_SEMI_AXES), &s).unwrap();
    assert_eq!(homogeneous.sigma.voltages, homogeneous.reference.voltages);

    // same geometry, stroke conductivity flipped between the two classes
    let flip = |sigma: f64| {
        let mut p = base.clone();
        p.inclusions = base.inclusions.iter().map(|i| StrokeInclusion { conductivity: sigma, ..i.clone() }).collect();
        simulate_measurements(&p, &s).unwrap().sigma.voltages
    };
    let diff: DMatrix<f64> = flip(3.0) - flip(0.3);
    assert!(diff.norm() > 1e-4 * a.sigma.voltages.norm());

    let round = VoltageSet::from_stacked(65, &a.sigma.stacked()).unwrap();
    assert_eq!(round.voltages, a.sigma.voltages);
    assert!(VoltageSet::from_stacked(65, &[0.0; 10]).is_err());
}
