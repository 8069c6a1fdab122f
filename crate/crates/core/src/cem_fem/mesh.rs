//! Ring-structured triangulation of the helmet domain.
//!
//! Nodes are laid out on closed star-shaped rings. Ring 0 is the domain
//! boundary, sampled so that every electrode is resolved by at least four
//! edges; the compartment curves of the phantom appear as rings, so the
//! tissue layers are meshed conformingly. Consecutive rings are stitched by
//! the shortest-diagonal rule and the innermost ring is fanned to the
//! origin.
//!
//! The local spacing is `target_h/16` at electrode ends and grows linearly
//! along the boundary and with depth, with slope `target_h / GRADING_LENGTH`,
//! up to `target_h/2` on the boundary and `target_h` inside. Every spacing
//! scales with `target_h`, so halving it halves the local size everywhere.
//!
//! Stroke inclusions are not ring curves. Nodes next to their boundaries are
//! snapped onto them, and elements that still straddle a boundary get
//! sub-sampled conductivities (see [`Mesh::conductivities`]).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{ConformalMap, ElectrodeMidpoint};
use crate::phantom::{HeadPhantom, InclusionShape, RadialCurve, Tissue};

use super::CemError;

/// Distance over which the spacing grows by `target_h`.
const GRADING_LENGTH: f64 = 0.16;
/// Spacing at electrode ends relative to the boundary spacing `target_h/2`.
const END_REFINEMENT: f64 = 8.0;
const MIN_ELECTRODE_EDGES: usize = 4;
/// Smallest element quality accepted when snapping nodes to inclusions.
const MIN_SNAP_QUALITY: f64 = 0.15;
/// Barycentric subdivision used when an element straddles an inclusion edge.
const SUBDIVISION: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub target_h: f64,
    /// Fraction of the boundary covered by electrodes.
    pub coverage: f64,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self { target_h: 0.02, coverage: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionTag {
    Tissue(Tissue),
    Inclusion(usize),
}

impl RegionTag {
    pub fn at(phantom: &HeadPhantom, p: [f64; 2]) -> Self {
        match phantom.inclusions.iter().rposition(|i| i.contains(p)) {
            Some(i) => RegionTag::Inclusion(i),
            None => RegionTag::Tissue(phantom.tissue_at(p)),
        }
    }

    fn value(self, phantom: &HeadPhantom) -> f64 {
        match self {
            RegionTag::Tissue(t) => phantom.tissues.get(t),
            RegionTag::Inclusion(i) => phantom.inclusions[i].conductivity,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Region of each triangle's centroid.
    pub region_tag: Vec<RegionTag>,
    /// Region of the ring band that contains the triangle (exact for layers).
    band_region: Vec<RegionTag>,
    /// Boundary nodes in counter-clockwise order.
    pub boundary: Vec<usize>,
    /// Boundary edges `(a, b)` per electrode, contiguous and ordered.
    pub electrode_edges: Vec<Vec<[usize; 2]>>,
    /// Node at the origin; used as the ground node by the solver.
    pub center: usize,
    pub spec: MeshSpec,
}

struct Band {
    outer: RadialCurve,
    /// `None` for the central band.
    inner: Option<RadialCurve>,
    region: RegionTag,
}

impl Mesh {
    pub fn build(
        phantom: &HeadPhantom,
        map: &ConformalMap,
        layout: &[ElectrodeMidpoint],
        spec: MeshSpec,
    ) -> Result<Self, CemError> {
        if !(spec.target_h > 0.0) || !(spec.coverage > 0.0 && spec.coverage < 1.0) {
            return Err(CemError::BadMeshSpec(spec.target_h, spec.coverage));
        }
        if layout.len() < 3 {
            return Err(CemError::Mesh("need at least three electrodes".into()));
        }
        let h = spec.target_h;
        let hb = 0.5 * h;
        let he = hb / END_REFINEMENT;
        let slope = h / GRADING_LENGTH;
        let spacing = |depth: f64| (he + slope * depth).min(h);

        let (boundary_pts, electrode_ranges) = boundary_samples(map, layout, spec.coverage, he, hb, slope);
        let bands = bands_of(phantom);

        let mut nodes: Vec<[f64; 2]> = Vec::new();
        let mut triangles: Vec<[usize; 3]> = Vec::new();
        let mut band_region: Vec<RegionTag> = Vec::new();
        // nodes on ∂Ω and on layer curves never move
        let mut fixed: Vec<bool> = Vec::new();

        // ring 0: the boundary itself
        let mut prev: Vec<(f64, usize)> = boundary_pts
            .iter()
            .map(|p| {
                nodes.push(*p);
                fixed.push(true);
                (p[1].atan2(p[0]), nodes.len() - 1)
            })
            .collect();
        let boundary: Vec<usize> = prev.iter().map(|&(_, i)| i).collect();
        let boundary_angles: Vec<f64> = prev.iter().map(|&(a, _)| a).collect();
        let nb = boundary.len();
        let mut on_boundary_angles = true;
        let mut ring_count = 0usize;
        let mut depth = 0.0;

        for (bi, band) in bands.iter().enumerate() {
            let mean_outer = mean_radius(&band.outer);
            let thickness = match &band.inner {
                Some(inner) => mean_outer - mean_radius(inner),
                None => mean_outer,
            };
            if thickness <= 0.0 {
                return Err(CemError::Mesh(format!("band {bi} has non-positive thickness")));
            }
            // sub-ring offsets inside the band, graded with depth
            let mut offsets = vec![0.0];
            let mut d = 0.0;
            loop {
                let step = spacing(depth + d);
                let slack = if band.inner.is_some() { 0.3 } else { 0.6 };
                if d + step >= thickness - slack * step {
                    break;
                }
                d += step;
                offsets.push(d);
            }
            let levels: Vec<f64> = offsets.iter().map(|o| o / thickness).collect();
            // level 0 of the first band is the boundary ring, already placed
            let start = if bi == 0 { 1 } else { 0 };
            for (li, &lambda) in levels.iter().enumerate().skip(start) {
                let ring_depth = depth + offsets[li];
                let radial = |angle: f64| {
                    let ro = band.outer.radius(angle);
                    let ri = band.inner.as_ref().map_or(0.0, |c| c.radius(angle));
                    (1.0 - lambda) * ro + lambda * ri
                };
                let perimeter = ring_perimeter(&radial);
                let want = (perimeter / spacing(ring_depth)).round().max(6.0) as usize;
                ring_count += 1;
                let angles: Vec<f64> = if on_boundary_angles && want * 5 >= nb * 4 {
                    boundary_angles.clone()
                } else {
                    on_boundary_angles = false;
                    let offset = if ring_count % 2 == 1 { PI / want as f64 } else { 0.0 };
                    (0..want).map(|j| offset + 2.0 * PI * j as f64 / want as f64 - PI).collect()
                };
                let ring: Vec<(f64, usize)> = angles
                    .iter()
                    .map(|&a| {
                        let r = radial(a);
                        nodes.push([r * a.cos(), r * a.sin()]);
                        fixed.push(li == 0);
                        (a, nodes.len() - 1)
                    })
                    .collect();
                // triangles between prev and ring belong to the band that owns prev
                let owner = if li == 0 { bands[bi - 1].region } else { band.region };
                let before = triangles.len();
                stitch(&nodes, &prev, &ring, &mut triangles)?;
                band_region.extend(std::iter::repeat(owner).take(triangles.len() - before));
                prev = ring;
            }
            depth += thickness;
        }
        nodes.push([0.0, 0.0]);
        fixed.push(true);
        let center = nodes.len() - 1;
        for j in 0..prev.len() {
            let a = prev[j].1;
            let b = prev[(j + 1) % prev.len()].1;
            triangles.push(oriented(&nodes, [a, b, center]));
            band_region.push(bands.last().unwrap().region);
        }

        let electrode_edges = electrode_ranges
            .iter()
            .map(|&(first, count)| (0..count).map(|e| [boundary[(first + e) % nb], boundary[(first + e + 1) % nb]]).collect())
            .collect();
        snap_to_inclusions(phantom, &mut nodes, &triangles, &band_region, &fixed);
        let region_tag = triangles
            .iter()
            .map(|t| RegionTag::at(phantom, centroid(&nodes, t)))
            .collect();
        let mesh = Mesh { nodes, triangles, region_tag, band_region, boundary, electrode_edges, center, spec };
        let q = mesh.min_quality();
        if !(q > 0.0) {
            return Err(CemError::Mesh(format!("degenerate triangle (quality {q})")));
        }
        Ok(mesh)
    }

    /// Uniform refinement: every triangle is split into four through its edge
    /// midpoints. Boundary midpoints stay on the polygon, so the refined mesh
    /// is nested in this one.
    pub fn refined(&self, phantom: &HeadPhantom) -> Mesh {
        let mut nodes = self.nodes.clone();
        let mut mids: std::collections::HashMap<(usize, usize), usize> = std::collections::HashMap::new();
        let mut mid = |a: usize, b: usize, nodes: &mut Vec<[f64; 2]>| -> usize {
            *mids.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (nodes[a], nodes[b]);
                nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut band_region = Vec::with_capacity(4 * self.triangles.len());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let (ab, bc, ca) = (mid(a, b, &mut nodes), mid(b, c, &mut nodes), mid(c, a, &mut nodes));
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
            band_region.extend([self.band_region[t]; 4]);
        }
        let boundary = (0..self.boundary.len())
            .flat_map(|i| {
                let (a, b) = (self.boundary[i], self.boundary[(i + 1) % self.boundary.len()]);
                [a, mid(a, b, &mut nodes)]
            })
            .collect();
        let electrode_edges = self
            .electrode_edges
            .iter()
            .map(|edges| {
                edges
                    .iter()
                    .flat_map(|&[a, b]| {
                        let m = mid(a, b, &mut nodes);
                        [[a, m], [m, b]]
                    })
                    .collect()
            })
            .collect();
        let region_tag = triangles.iter().map(|t| RegionTag::at(phantom, centroid(&nodes, t))).collect();
        let spec = MeshSpec { target_h: 0.5 * self.spec.target_h, ..self.spec };
        Mesh { nodes, triangles, region_tag, band_region, boundary, electrode_edges, center: self.center, spec }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.nodes, &self.triangles[t])
    }

    /// Inradius over circumradius, scaled so an equilateral triangle scores 1.
    pub fn quality(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        let la = dist(b, c);
        let lb = dist(a, c);
        let lc = dist(a, b);
        let s = 0.5 * (la + lb + lc);
        let area = signed_area(&self.nodes, &self.triangles[t]);
        let inr = area / s;
        let circ = la * lb * lc / (4.0 * area);
        2.0 * inr / circ
    }

    pub fn min_quality(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.quality(t)).fold(f64::INFINITY, f64::min)
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        centroid(&self.nodes, &self.triangles[t])
    }

    pub fn longest_edge(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        dist(a, b).max(dist(b, c)).max(dist(a, c))
    }

    /// Element conductivities for `phantom`.
    ///
    /// Layer values come from the conforming ring bands; inclusion edges
    /// cutting an element are resolved by averaging over a 25-point
    /// barycentric subdivision.
    pub fn conductivities(&self, phantom: &HeadPhantom) -> Vec<f64> {
        let n = SUBDIVISION as f64;
        let mut samples = Vec::with_capacity(SUBDIVISION * SUBDIVISION);
        for i in 0..SUBDIVISION {
            for j in 0..SUBDIVISION - i {
                samples.push(((i as f64 + 1.0 / 3.0) / n, (j as f64 + 1.0 / 3.0) / n));
                if i + j + 1 < SUBDIVISION {
                    samples.push(((i as f64 + 2.0 / 3.0) / n, (j as f64 + 2.0 / 3.0) / n));
                }
            }
        }
        self.triangles
            .iter()
            .enumerate()
            .map(|(t, tri)| {
                let band = self.band_region[t];
                let base = band.value(phantom);
                let c = centroid(&self.nodes, tri);
                let reach = self.longest_edge(t);
                let near: Vec<usize> = phantom
                    .inclusions
                    .iter()
                    .enumerate()
                    .filter(|(k, inc)| {
                        band != RegionTag::Inclusion(*k)
                            && dist(c, inc.center) < inc.bounding_radius() + reach
                    })
                    .map(|(k, _)| k)
                    .collect();
                if near.is_empty() {
                    return base;
                }
                let [p0, p1, p2] = tri.map(|i| self.nodes[i]);
                let mut acc = 0.0;
                for &(l1, l2) in &samples {
                    let l0 = 1.0 - l1 - l2;
                    let p = [
                        l0 * p0[0] + l1 * p1[0] + l2 * p2[0],
                        l0 * p0[1] + l1 * p1[1] + l2 * p2[1],
                    ];
                    acc += near
                        .iter()
                        .rev()
                        .find(|&&k| phantom.inclusions[k].contains(p))
                        .map_or(base, |&k| phantom.inclusions[k].conductivity);
                }
                acc / samples.len() as f64
            })
            .collect()
    }
}

/// Move interior nodes onto the inclusion boundaries so that most elements
/// lie on one side. For every element edge that crosses a boundary, the
/// endpoint closer to it is projected along the ray from the inclusion
/// centre, unless that would drop an adjacent element below
/// [`MIN_SNAP_QUALITY`].
fn snap_to_inclusions(
    phantom: &HeadPhantom,
    nodes: &mut [[f64; 2]],
    triangles: &[[usize; 3]],
    band_region: &[RegionTag],
    fixed: &[bool],
) {
    let mut adjacent: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (t, tri) in triangles.iter().enumerate() {
        for &i in tri {
            adjacent[i].push(t);
        }
    }
    let mut locked = fixed.to_vec();
    for (k, inc) in phantom.inclusions.iter().enumerate() {
        if band_region.contains(&RegionTag::Inclusion(k)) {
            continue;
        }
        let target = |p: [f64; 2]| {
            let l = inc.level(p);
            [inc.center[0] + (p[0] - inc.center[0]) / l, inc.center[1] + (p[1] - inc.center[1]) / l]
        };
        let mut candidates: Vec<(f64, usize)> = Vec::new();
        for tri in triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let (la, lb) = (inc.level(nodes[a]) - 1.0, inc.level(nodes[b]) - 1.0);
                if la * lb < 0.0 {
                    let (da, db) = (dist(nodes[a], target(nodes[a])), dist(nodes[b], target(nodes[b])));
                    candidates.push(if da <= db { (da, a) } else { (db, b) });
                }
            }
        }
        candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        candidates.dedup_by_key(|c| c.1);
        for (_, i) in candidates {
            if locked[i] {
                continue;
            }
            let old = nodes[i];
            nodes[i] = target(old);
            let ok = adjacent[i].iter().all(|&t| quality_of(nodes, &triangles[t]) >= MIN_SNAP_QUALITY);
            if ok {
                locked[i] = true;
            } else {
                nodes[i] = old;
            }
        }
    }
}

fn quality_of(nodes: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    let [a, b, c] = t.map(|i| nodes[i]);
    let (la, lb, lc) = (dist(b, c), dist(a, c), dist(a, b));
    let area = signed_area(nodes, t);
    if area <= 0.0 {
        return 0.0;
    }
    // 2·inradius / circumradius
    16.0 * area * area / (la * lb * lc * (la + lb + lc))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn centroid(nodes: &[[f64; 2]], t: &[usize; 3]) -> [f64; 2] {
    let [a, b, c] = t.map(|i| nodes[i]);
    [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
}

fn signed_area(nodes: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    let [a, b, c] = t.map(|i| nodes[i]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn oriented(nodes: &[[f64; 2]], t: [usize; 3]) -> [usize; 3] {
    if signed_area(nodes, &t) < 0.0 {
        [t[0], t[2], t[1]]
    } else {
        t
    }
}

fn mean_radius(c: &RadialCurve) -> f64 {
    let n = 256;
    (0..n).map(|j| c.radius(2.0 * PI * j as f64 / n as f64)).sum::<f64>() / n as f64
}

fn ring_perimeter(radial: &impl Fn(f64) -> f64) -> f64 {
    let n = 512;
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|j| {
            let a = 2.0 * PI * j as f64 / n as f64;
            let r = radial(a);
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    (0..n).map(|j| dist(pts[j], pts[(j + 1) % n])).sum()
}

/// Outer-to-inner list of ring bands for the phantom.
fn bands_of(phantom: &HeadPhantom) -> Vec<Band> {
    let mut curves: Vec<(RadialCurve, RegionTag)> =
        vec![((RadialCurve::reference(phantom.semi_axes, 1.0)), RegionTag::Tissue(Tissue::Helmet))];
    for (t, c) in &phantom.layers {
        curves.push(((c.clone()), RegionTag::Tissue(*t)));
    }
    // a disc inclusion centred at the origin is meshed as one more ring
    for (k, inc) in phantom.inclusions.iter().enumerate() {
        if let InclusionShape::Disc { radius } = inc.shape {
            let innermost = curves.last().unwrap().0.clone();
            let fits = (0..64).all(|j| innermost.radius(2.0 * PI * j as f64 / 64.0) > radius * 1.05);
            if inc.center[0].hypot(inc.center[1]) < 1e-12 && fits {
                curves.push(((RadialCurve::reference((1.0, 1.0), radius)), RegionTag::Inclusion(k)));
            }
        }
    }
    let n = curves.len();
    (0..n)
        .map(|i| Band {
            outer: curves[i].0.clone(),
            inner: curves.get(i + 1).map(|c| c.0.clone()),
            region: curves[i].1,
        })
        .collect()
}

/// Steps covering an interval of length `len`, growing geometrically from
/// `he` at both ends up to `hb` in the middle.
fn graded_steps(len: f64, he: f64, hb: f64, slope: f64) -> Vec<f64> {
    let mut left = Vec::new();
    let (mut used, mut s) = (0.0, he.min(0.5 * len));
    while s < hb && 2.0 * (used + s) <= len {
        left.push(s);
        used += s;
        s = (he + slope * used).min(hb);
    }
    let rest = len - 2.0 * used;
    let mut steps = left.clone();
    match left.last() {
        Some(&last) if rest < 0.5 * last => {
            steps.extend(left.iter().rev());
            let scale = len / (2.0 * used);
            steps.iter_mut().for_each(|x| *x *= scale);
            return steps;
        }
        _ => {}
    }
    let n_mid = ((rest / hb).ceil() as usize).max(1);
    steps.extend(std::iter::repeat(rest / n_mid as f64).take(n_mid));
    steps.extend(left.iter().rev());
    steps
}

/// Arc offsets of the nodes of an interval, its start included and its end
/// excluded, with at least `min_edges` edges.
fn graded_offsets(len: f64, he: f64, hb: f64, slope: f64, min_edges: usize) -> Vec<f64> {
    let mut steps = graded_steps(len, he, hb, slope);
    if steps.len() < min_edges {
        steps = vec![len / min_edges as f64; min_edges];
    }
    let mut at = 0.0;
    steps
        .iter()
        .map(|s| {
            let x = at;
            at += s;
            x
        })
        .collect()
}

/// Boundary node positions (counter-clockwise) and, per electrode, the index
/// of its first node together with its edge count. Spacing is `he` at the
/// electrode ends and grows to `hb`.
fn boundary_samples(
    map: &ConformalMap,
    layout: &[ElectrodeMidpoint],
    coverage: f64,
    he: f64,
    hb: f64,
    slope: f64,
) -> (Vec<[f64; 2]>, Vec<(usize, usize)>) {
    let length = map.perimeter();
    let m = layout.len();
    let half = 0.5 * coverage * length / m as f64;
    let electrode = graded_offsets(2.0 * half, he, hb, slope, MIN_ELECTRODE_EDGES);
    let mut arcs = Vec::new();
    let mut ranges = Vec::with_capacity(m);
    for k in 0..m {
        let s = layout[k].arc;
        let next = if k + 1 < m { layout[k + 1].arc } else { layout[0].arc + length };
        ranges.push((arcs.len(), electrode.len()));
        arcs.extend(electrode.iter().map(|o| s - half + o));
        let gap_start = s + half;
        let gap = (next - half) - gap_start;
        arcs.extend(graded_offsets(gap, he, hb, slope, 1).iter().map(|o| gap_start + o));
    }
    let pts = arcs
        .iter()
        .map(|&s| {
            let p = map.boundary_point(map.theta_at_arc(s));
            [p.re, p.im]
        })
        .collect();
    (pts, ranges)
}

/// Index of the ring node whose angle is closest to `origin`.
fn nearest_angle(ring: &[(f64, usize)], origin: f64) -> usize {
    let wrap = |x: f64| ((x + PI).rem_euclid(2.0 * PI) - PI).abs();
    (0..ring.len())
        .min_by(|&a, &b| wrap(ring[a].0 - origin).total_cmp(&wrap(ring[b].0 - origin)))
        .unwrap()
}

/// Triangulate the annulus between two rings by the shortest-diagonal rule.
fn stitch(
    nodes: &[[f64; 2]],
    outer: &[(f64, usize)],
    inner: &[(f64, usize)],
    triangles: &mut Vec<[usize; 3]>,
) -> Result<(), CemError> {
    let na = outer.len();
    let nb = inner.len();
    let a0 = 0;
    let b0 = nearest_angle(inner, outer[a0].0);
    let node_a = |i: usize| outer[(a0 + i) % na].1;
    let node_b = |j: usize| inner[(b0 + j) % nb].1;
    let (mut i, mut j) = (0usize, 0usize);
    while i < na || j < nb {
        let take_outer = if i == na {
            false
        } else if j == nb {
            true
        } else {
            let d_outer = dist(nodes[node_a(i + 1)], nodes[node_b(j)]);
            let d_inner = dist(nodes[node_a(i)], nodes[node_b(j + 1)]);
            d_outer <= d_inner
        };
        let t = if take_outer {
            i += 1;
            [node_a(i - 1), node_a(i), node_b(j)]
        } else {
            j += 1;
            [node_a(i), node_b(j), node_b(j - 1)]
        };
        let area = signed_area(nodes, &t);
        if area <= 0.0 {
            return Err(CemError::Mesh(format!("inverted element between rings (area {area:e})")));
        }
        triangles.push(t);
    }
    Ok(())
}

