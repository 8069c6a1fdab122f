//! Homogeneous ND matrix and the DN approximation built from electrode data.

use nalgebra::DMatrix;

use vhed_eit::cem_fem::{add_noise, simulate_measurements, trig_basis, ForwardSetup, Mesh, MeshSpec};
use vhed_eit::dn_mimic::{dn_matrix, reference_nd_matrix, relative_nd_matrix};
use vhed_eit::geometry::{ConformalMap, HELMET_SEMI_AXES};
use vhed_eit::phantom::HeadPhantom;
use vhed_eit::sparse::{nested_dissection, CscMatrix, Ldlt};

const GAUSS: [(f64, f64); 3] = [(0.112_701_665_379_258_3, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.887_298_334_620_741_7, 5.0 / 18.0)];

/// `R₁` from a P1 Neumann solve on a fine mesh of the helmet.
fn fem_reference(setup: &ForwardSetup, h: f64) -> DMatrix<f64> {
    let phantom = HeadPhantom::homogeneous(HELMET_SEMI_AXES);
    let spec = MeshSpec { target_h: h, ..setup.mesh };
    let mesh = Mesh::build(&phantom, &setup.map, &setup.layout, spec).unwrap();
    let n = mesh.n_nodes();
    let c = mesh.center;

    let mut trip = vec![(c, c, 1.0)];
    for t in &mesh.triangles {
        let p: Vec<[f64; 2]> = t.iter().map(|&i| mesh.nodes[i]).collect();
        let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let grads: Vec<[f64; 2]> = (0..3)
            .map(|i| {
                let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
                [(a[1] - b[1]) / area2, (b[0] - a[0]) / area2]
            })
            .collect();
        for i in 0..3 {
            for j in 0..3 {
                if t[i] == c || t[j] == c {
                    continue;
                }
                let k = 0.5 * area2.abs() * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                trip.push((t[i], t[j], k));
            }
        }
    }
    let stiffness = CscMatrix::from_triplets(n, &trip);
    let factor = Ldlt::new(&stiffness, nested_dissection(&stiffness, &mesh.nodes)).unwrap();

    // arc coordinate of every boundary node: chord length rescaled to L
    let length = setup.map.perimeter();
    let nb = mesh.boundary.len();
    let mut cum = vec![0.0; nb + 1];
    for i in 0..nb {
        let (a, b) = (mesh.nodes[mesh.boundary[i]], mesh.nodes[mesh.boundary[(i + 1) % nb]]);
        cum[i + 1] = cum[i] + (b[0] - a[0]).hypot(b[1] - a[1]);
    }
    let start = setup.layout[0].arc - 0.5 * spec.coverage * length / setup.layout.len() as f64;
    let arcs: Vec<f64> = cum.iter().map(|x| start + x * length / cum[nb]).collect();

    // ∫ f(s) λ_a(s) ds and ∫ f(s) λ_b(s) ds on every boundary edge
    let edge_moments = |f: &dyn Fn(f64) -> f64| -> Vec<(f64, f64)> {
        (0..nb)
            .map(|i| {
                let ds = arcs[i + 1] - arcs[i];
                GAUSS.iter().fold((0.0, 0.0), |(ma, mb), &(x, w)| {
                    let v = f(arcs[i] + x * ds) * w * ds;
                    (ma + v * (1.0 - x), mb + v * x)
                })
            })
            .collect()
    };

    let m = setup.layout.len();
    let mut out = DMatrix::zeros(m - 1, m - 1);
    let moments: Vec<Vec<(f64, f64)>> = (1..m).map(|k| edge_moments(&|s| trig_basis(k, length, s))).collect();
    let mass: Vec<(f64, f64)> = edge_moments(&|_| 1.0);
    for k in 0..m - 1 {
        let mut load = vec![0.0; n];
        let mut lumped = vec![0.0; n];
        for i in 0..nb {
            let (a, b) = (mesh.boundary[i], mesh.boundary[(i + 1) % nb]);
            load[a] += moments[k][i].0;
            load[b] += moments[k][i].1;
            lumped[a] += mass[i].0;
            lumped[b] += mass[i].1;
        }
        let drift = load.iter().sum::<f64>() / length;
        for (l, w) in load.iter_mut().zip(&lumped) {
            *l -= drift * w;
        }
        load[c] = 0.0;
        let u = factor.solve(&load).unwrap();
        for j in 0..m - 1 {
            out[(j, k)] = (0..nb)
                .map(|i| u[mesh.boundary[i]] * moments[j][i].0 + u[mesh.boundary[(i + 1) % nb]] * moments[j][i].1)
                .sum::<f64>();
        }
    }
    out
}

#[test]
fn spectral_reference_matches_finite_elements_on_helmet() {
    let setup = ForwardSetup::new(HELMET_SEMI_AXES, 65, MeshSpec::default(), 1e-3).unwrap();
    let spectral = reference_nd_matrix(&setup.map, 65).unwrap().matrix;
    let fem = fem_reference(&setup, 0.01);
    let err = (&spectral - &fem).amax();
    assert!(err < 1e-4, "max entry difference {err:e} (largest entry {:e})", spectral.amax());
}

#[test]
fn disc_reference_has_inverse_harmonic_diagonal() {
    let r = reference_nd_matrix(&ConformalMap::identity(), 17).unwrap().matrix;
    for j in 0..16 {
        for k in 0..16 {
            let expected = if j == k { 1.0 / ((k + 2) / 2) as f64 } else { 0.0 };
            assert!((r[(j, k)] - expected).abs() < 1e-12, "({j}, {k}): {}", r[(j, k)]);
        }
    }
}

#[test]
fn helmet_reference_is_symmetric_with_coupling() {
    let map = ConformalMap::disc_to_ellipse(HELMET_SEMI_AXES, 32).unwrap();
    let r = reference_nd_matrix(&map, 33).unwrap().matrix;
    assert!((&r - r.transpose()).amax() < 1e-10 * r.amax());
    assert!(r[(0, 4)].abs() > 1e-3 * r.amax(), "no coupling between the first and third cosine modes");
}

#[test]
fn homogeneous_data_give_zero_relative_nd() {
    let setup = ForwardSetup::new(HELMET_SEMI_AXES, 33, MeshSpec { target_h: 0.04, coverage: 0.5 }, 1e-3).unwrap();
    let meas = simulate_measurements(&HeadPhantom::homogeneous(HELMET_SEMI_AXES), &setup).unwrap();
    let nd = relative_nd_matrix(&meas.relative(), &setup.patterns).unwrap();
    assert_eq!(nd.amax(), 0.0);
    let r1 = reference_nd_matrix(&setup.map, 33).unwrap();
    let dn = dn_matrix(&nd, &r1).unwrap();
    let product = dn.reduced() * &r1.matrix;
    assert!((product - DMatrix::identity(32, 32)).amax() < 1e-9);
}

#[test]
fn noise_energy_in_relative_nd_matches_expectation() {
    let m = 33;
    let setup = ForwardSetup::new(HELMET_SEMI_AXES, m, MeshSpec { target_h: 0.04, coverage: 0.5 }, 1e-3).unwrap();
    let meas = simulate_measurements(&HeadPhantom::homogeneous(HELMET_SEMI_AXES), &setup).unwrap();
    let v = meas.sigma.stacked();
    let delta = 1e-2;
    let norm2: f64 = v.iter().map(|x| x * x).sum();
    let s2 = delta * delta * norm2 / (m * (m - 1)) as f64;
    let currents = &setup.patterns.currents;
    let expected = (m - 1) as f64 * s2 * currents.norm_squared();

    let trials = 200;
    let mean = (0..trials)
        .map(|seed| {
            let noisy = add_noise(&v, delta, seed).unwrap();
            let e = DMatrix::from_iterator(m, m - 1, noisy.iter().zip(&v).map(|(a, b)| a - b));
            (e.transpose() * currents).norm_squared()
        })
        .sum::<f64>()
        / trials as f64;
    let ratio = mean / expected;
    assert!((ratio - 1.0).abs() < 0.05, "Monte-Carlo / expected = {ratio}");
}
