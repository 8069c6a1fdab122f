//! Assembly and factorisation of the CEM system.
//!
//! Unknowns are the nodal potentials `u` and the electrode potentials `U`.
//! The bilinear form is
//!
//! ```text
//! B((u,U),(v,V)) = ∫ σ∇u·∇v + Σ_m z_m⁻¹ ∫_{e_m} (u − U_m)(v − V_m) ds
//! ```
//!
//! whose kernel is the constants. The center node is pinned to zero, which
//! makes the reduced matrix positive definite; the solution is then shifted
//! so that `Σ U_m = 0`.

use crate::sparse::{nested_dissection, CscMatrix, Ldlt, Symbolic};

use super::mesh::Mesh;
use super::CemError;

/// Factorised CEM system for one mesh and conductivity.
#[derive(Debug, Clone)]
pub struct CemSolver {
    n_nodes: usize,
    n_electrodes: usize,
    ground: usize,
    /// Electrode edges with their lengths, `(a, b, |e|)`.
    edges: Vec<Vec<(usize, usize, f64)>>,
    impedance: Vec<f64>,
    factor: Ldlt,
}

#[derive(Debug, Clone)]
pub struct CemSolution {
    /// Electrode potentials, zero mean.
    pub electrode: Vec<f64>,
    /// Nodal potentials, shifted with the same constant.
    pub interior: Vec<f64>,
}

/// Symbolic analysis shared by every conductivity on one mesh.
#[derive(Debug, Clone)]
pub struct CemPattern {
    symbolic: Symbolic,
}

impl CemSolver {
    /// Factor the system; `sigma` holds one value per triangle.
    pub fn new(mesh: &Mesh, sigma: &[f64], impedance: &[f64]) -> Result<Self, CemError> {
        let (matrix, coords) = assemble(mesh, sigma, impedance)?;
        let symbolic = Symbolic::analyse(&matrix, nested_dissection(&matrix, &coords));
        Self::with_pattern(mesh, sigma, impedance, &CemPattern { symbolic })
    }

    /// Analyse the sparsity pattern of `mesh` once for repeated factorisations.
    pub fn analyse(mesh: &Mesh, impedance: &[f64]) -> Result<CemPattern, CemError> {
        let ones = vec![1.0; mesh.triangles.len()];
        let (matrix, coords) = assemble(mesh, &ones, impedance)?;
        Ok(CemPattern { symbolic: Symbolic::analyse(&matrix, nested_dissection(&matrix, &coords)) })
    }

    pub fn with_pattern(mesh: &Mesh, sigma: &[f64], impedance: &[f64], pattern: &CemPattern) -> Result<Self, CemError> {
        let (matrix, _) = assemble(mesh, sigma, impedance)?;
        let factor = pattern.symbolic.factor(&matrix)?;
        Ok(Self {
            n_nodes: mesh.n_nodes(),
            n_electrodes: mesh.electrode_edges.len(),
            ground: mesh.center,
            edges: electrode_edges(mesh),
            impedance: impedance.to_vec(),
            factor,
        })
    }

    pub fn electrodes(&self) -> usize {
        self.n_electrodes
    }

    /// Solve for the electrode current vector `currents` (must sum to zero).
    pub fn solve(&self, currents: &[f64]) -> Result<CemSolution, CemError> {
        if currents.len() != self.n_electrodes {
            return Err(CemError::Dimension { expected: self.n_electrodes, got: currents.len() });
        }
        let total: f64 = currents.iter().sum();
        let scale = currents.iter().map(|c| c.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        if total.abs() > 1e-10 * scale {
            return Err(CemError::NotConserved(total));
        }
        let nu = self.n_nodes - 1;
        let mut rhs = vec![0.0; nu + self.n_electrodes];
        rhs[nu..].copy_from_slice(currents);
        let x = self.factor.solve(&rhs)?;
        let mut electrode = x[nu..].to_vec();
        let shift = electrode.iter().sum::<f64>() / self.n_electrodes as f64;
        electrode.iter_mut().for_each(|v| *v -= shift);
        let mut interior = Vec::with_capacity(self.n_nodes);
        for i in 0..self.n_nodes {
            let v = match i.cmp(&self.ground) {
                std::cmp::Ordering::Less => x[i],
                std::cmp::Ordering::Equal => 0.0,
                std::cmp::Ordering::Greater => x[i - 1],
            };
            interior.push(v - shift);
        }
        Ok(CemSolution { electrode, interior })
    }

    /// Electrode currents `z_m⁻¹ ∫_{e_m} (U_m − u) ds` recovered from a solution.
    pub fn electrode_currents(&self, sol: &CemSolution) -> Vec<f64> {
        self.edges
            .iter()
            .zip(&self.impedance)
            .zip(&sol.electrode)
            .map(|((edges, z), um)| {
                edges
                    .iter()
                    .map(|&(a, b, len)| len * (um - 0.5 * (sol.interior[a] + sol.interior[b])))
                    .sum::<f64>()
                    / z
            })
            .collect()
    }
}

fn electrode_edges(mesh: &Mesh) -> Vec<Vec<(usize, usize, f64)>> {
    mesh.electrode_edges
        .iter()
        .map(|edges| {
            edges
                .iter()
                .map(|&[a, b]| {
                    let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
                    (a, b, (pa[0] - pb[0]).hypot(pa[1] - pb[1]))
                })
                .collect()
        })
        .collect()
}

/// Reduced CEM matrix and coordinates of its unknowns (for the ordering).
fn assemble(mesh: &Mesh, sigma: &[f64], impedance: &[f64]) -> Result<(CscMatrix, Vec<[f64; 2]>), CemError> {
    let nt = mesh.triangles.len();
    let m = mesh.electrode_edges.len();
    if sigma.len() != nt {
        return Err(CemError::Dimension { expected: nt, got: sigma.len() });
    }
    if impedance.len() != m {
        return Err(CemError::Dimension { expected: m, got: impedance.len() });
    }
    if impedance.iter().any(|z| !(*z > 0.0)) {
        return Err(CemError::BadImpedance);
    }
    let ground = mesh.center;
    let nu = mesh.n_nodes() - 1;
    // node index → unknown index (ground removed)
    let unk = |i: usize| -> Option<usize> {
        match i.cmp(&ground) {
            std::cmp::Ordering::Less => Some(i),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(i - 1),
        }
    };
    let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(9 * nt + 8 * mesh.boundary.len());
    let push = |a: Option<usize>, b: Option<usize>, v: f64, trip: &mut Vec<(usize, usize, f64)>| {
        if let (Some(a), Some(b)) = (a, b) {
            trip.push((a, b, v));
        }
    };
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|i| mesh.nodes[i]);
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]));
        // gradients of barycentric coordinates times 2·area
        let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
        let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
        let coef = sigma[t] / (4.0 * area);
        for i in 0..3 {
            for j in 0..3 {
                push(unk(tri[i]), unk(tri[j]), coef * (b[i] * b[j] + c[i] * c[j]), &mut trip);
            }
        }
    }
    for (e, edges) in electrode_edges(mesh).iter().enumerate() {
        let inv_z = 1.0 / impedance[e];
        let ue = Some(nu + e);
        for &(a, bnode, len) in edges {
            let (ua, ub) = (unk(a), unk(bnode));
            push(ua, ua, inv_z * len / 3.0, &mut trip);
            push(ub, ub, inv_z * len / 3.0, &mut trip);
            push(ua, ub, inv_z * len / 6.0, &mut trip);
            push(ub, ua, inv_z * len / 6.0, &mut trip);
            for u in [ua, ub] {
                push(u, ue, -inv_z * len / 2.0, &mut trip);
                push(ue, u, -inv_z * len / 2.0, &mut trip);
            }
            push(ue, ue, inv_z * len, &mut trip);
        }
    }
    let n = nu + m;
    let matrix = CscMatrix::from_triplets(n, &trip);

    let mut coords: Vec<[f64; 2]> = (0..mesh.n_nodes()).filter(|&i| i != ground).map(|i| mesh.nodes[i]).collect();
    for edges in &mesh.electrode_edges {
        let mid = edges[edges.len() / 2][0];
        coords.push(mesh.nodes[mid]);
    }
    Ok((matrix, coords))
}
