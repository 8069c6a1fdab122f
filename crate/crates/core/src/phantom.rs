//! Virtual patients: layered head anatomy inside the fixed helmet, tissue
//! conductivities, and stroke inclusions.
//!
//! Every compartment boundary is a star-shaped radial curve
//! `r(ϑ) = r₀(ϑ)·(1 + Σ_{n=1}^{4} a_n cos(nϑ + ψ_n))` around the origin, where
//! `r₀` is a fixed fraction of the helmet ellipse's radial function. Curves
//! are drawn from the outside in and re-drawn until they nest.
//!
//! Conductivities are normalised by the scalp mean; the helmet band between
//! the scalp curve and `∂Ω` has conductivity exactly 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Rays used for the nesting and containment checks.
pub const CHECK_RAYS: usize = 256;
pub const MIN_CONDUCTIVITY: f64 = 1e-3;
pub const DEFAULT_PERTURBATION: f64 = 0.03;
const MAX_ANATOMY_ATTEMPTS: usize = 100;
const MAX_STROKE_ATTEMPTS: usize = 200;
const LAYER_REDRAWS: usize = 40;
/// Thinnest allowed layer, relative to its reference thickness.
const MIN_GAP_FRACTION: f64 = 0.35;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("perturbation amplitude {0} outside [0, 0.05]")]
    BadAmplitude(f64),
    #[error("could not draw nested compartment curves after {0} attempts")]
    Nesting(usize),
    #[error("could not place stroke inclusions after {0} attempts")]
    Placement(usize),
    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tissue {
    Helmet,
    Scalp,
    Skull,
    Csf,
    Grey,
    White,
}

impl Tissue {
    /// Compartments bounded by a curve, outermost first.
    pub const LAYERS: [Tissue; 5] = [Tissue::Scalp, Tissue::Skull, Tissue::Csf, Tissue::Grey, Tissue::White];

    /// Outer boundary of each layer as a fraction of the helmet radius.
    fn reference_fraction(self) -> f64 {
        match self {
            Tissue::Helmet => 1.0,
            Tissue::Scalp => 0.90,
            Tissue::Skull => 0.84,
            Tissue::Csf => 0.78,
            Tissue::Grey => 0.745,
            Tissue::White => 0.56,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrokeClass {
    Ischemic = 0,
    Hemorrhagic = 1,
}

impl StrokeClass {
    pub fn label(self) -> f64 {
        self as u8 as f64
    }

    pub fn from_index(i: usize) -> Self {
        if i % 2 == 0 {
            StrokeClass::Ischemic
        } else {
            StrokeClass::Hemorrhagic
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    Circular,
    Elliptic,
    Multiple,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Circular, Scenario::Elliptic, Scenario::Multiple];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Circular => "circular",
            Scenario::Elliptic => "elliptic",
            Scenario::Multiple => "multiple",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub stdev: f64,
}

impl Gaussian {
    pub const fn new(mean: f64, stdev: f64) -> Self {
        Self { mean, stdev }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let x = if self.stdev > 0.0 {
            Normal::new(self.mean, self.stdev).expect("finite stdev").sample(rng)
        } else {
            self.mean
        };
        x.max(MIN_CONDUCTIVITY)
    }
}

/// Normalised conductivity distributions per tissue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueDistributions {
    pub scalp: Gaussian,
    pub skull: Gaussian,
    pub csf: Gaussian,
    pub grey: Gaussian,
    pub white: Gaussian,
    pub ischemic: Gaussian,
    pub hemorrhagic: Gaussian,
}

impl Default for TissueDistributions {
    fn default() -> Self {
        Self {
            scalp: Gaussian::new(1.0, 0.0333),
            skull: Gaussian::new(0.0625, 0.0021),
            csf: Gaussian::new(6.25, 0.2083),
            grey: Gaussian::new(0.3063, 0.0102),
            white: Gaussian::new(0.1938, 0.0065),
            ischemic: Gaussian::new(0.0938, 0.0031),
            hemorrhagic: Gaussian::new(2.1875, 0.0729),
        }
    }
}

impl TissueDistributions {
    pub fn stroke(&self, class: StrokeClass) -> Gaussian {
        match class {
            StrokeClass::Ischemic => self.ischemic,
            StrokeClass::Hemorrhagic => self.hemorrhagic,
        }
    }

    /// All standard deviations set to zero.
    pub fn means_only(&self) -> Self {
        let z = |g: Gaussian| Gaussian::new(g.mean, 0.0);
        Self {
            scalp: z(self.scalp),
            skull: z(self.skull),
            csf: z(self.csf),
            grey: z(self.grey),
            white: z(self.white),
            ischemic: z(self.ischemic),
            hemorrhagic: z(self.hemorrhagic),
        }
    }
}

/// Sampled conductivity per compartment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueValues {
    pub scalp: f64,
    pub skull: f64,
    pub csf: f64,
    pub grey: f64,
    pub white: f64,
}

impl TissueValues {
    pub const fn uniform() -> Self {
        Self { scalp: 1.0, skull: 1.0, csf: 1.0, grey: 1.0, white: 1.0 }
    }

    pub fn get(&self, t: Tissue) -> f64 {
        match t {
            Tissue::Helmet => 1.0,
            Tissue::Scalp => self.scalp,
            Tissue::Skull => self.skull,
            Tissue::Csf => self.csf,
            Tissue::Grey => self.grey,
            Tissue::White => self.white,
        }
    }
}

/// Radial function of the helmet ellipse with semi-axes `(a, b)`.
pub fn ellipse_radius(semi_axes: (f64, f64), angle: f64) -> f64 {
    let (a, b) = semi_axes;
    let (s, c) = angle.sin_cos();
    a * b / ((b * c).powi(2) + (a * s).powi(2)).sqrt()
}

/// A star-shaped closed curve `r(ϑ) = f·r_Ω(ϑ)·(1 + Σ a_n cos(nϑ + ψ_n))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialCurve {
    pub semi_axes: (f64, f64),
    pub fraction: f64,
    /// `(a_n, ψ_n)` for `n = 1..=len`.
    pub modes: Vec<(f64, f64)>,
}

impl RadialCurve {
    pub fn reference(semi_axes: (f64, f64), fraction: f64) -> Self {
        Self { semi_axes, fraction, modes: Vec::new() }
    }

    pub fn reference_radius(&self, angle: f64) -> f64 {
        self.fraction * ellipse_radius(self.semi_axes, angle)
    }

    pub fn radius(&self, angle: f64) -> f64 {
        let bump: f64 = self
            .modes
            .iter()
            .enumerate()
            .map(|(i, &(a, psi))| a * ((i + 1) as f64 * angle + psi).cos())
            .sum();
        self.reference_radius(angle) * (1.0 + bump)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let r = p[0].hypot(p[1]);
        r < self.radius(p[1].atan2(p[0]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InclusionShape {
    Disc { radius: f64 },
    Ellipse { semi_major: f64, semi_minor: f64, rotation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeInclusion {
    pub center: [f64; 2],
    pub shape: InclusionShape,
    pub conductivity: f64,
}

impl StrokeInclusion {
    pub fn disc(center: [f64; 2], radius: f64, conductivity: f64) -> Self {
        Self { center, shape: InclusionShape::Disc { radius }, conductivity }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        match self.shape {
            InclusionShape::Disc { radius } => dx * dx + dy * dy < radius * radius,
            InclusionShape::Ellipse { semi_major, semi_minor, rotation } => {
                let (s, c) = rotation.sin_cos();
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                (u / semi_major).powi(2) + (v / semi_minor).powi(2) < 1.0
            }
        }
    }

    /// Scaled distance from the centre: below 1 inside, 1 on the boundary,
    /// homogeneous of degree one in `p − center`.
    pub fn level(&self, p: [f64; 2]) -> f64 {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        match self.shape {
            InclusionShape::Disc { radius } => dx.hypot(dy) / radius,
            InclusionShape::Ellipse { semi_major, semi_minor, rotation } => {
                let (s, c) = rotation.sin_cos();
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                (u / semi_major).hypot(v / semi_minor)
            }
        }
    }

    /// Radius of the smallest centred disc containing the inclusion.
    pub fn bounding_radius(&self) -> f64 {
        match self.shape {
            InclusionShape::Disc { radius } => radius,
            InclusionShape::Ellipse { semi_major, .. } => semi_major,
        }
    }

    /// `n` points on the inclusion boundary.
    pub fn boundary_points(&self, n: usize) -> Vec<[f64; 2]> {
        (0..n)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / n as f64;
                let (s, c) = t.sin_cos();
                let (u, v) = match self.shape {
                    InclusionShape::Disc { radius } => (radius * c, radius * s),
                    InclusionShape::Ellipse { semi_major, semi_minor, rotation } => {
                        let (sr, cr) = rotation.sin_cos();
                        let (u, v) = (semi_major * c, semi_minor * s);
                        (cr * u - sr * v, sr * u + cr * v)
                    }
                };
                [self.center[0] + u, self.center[1] + v]
            })
            .collect()
    }
}

/// Piecewise-constant conductivity on the helmet domain.
///
/// With no layers and no inclusions this is the homogeneous `σ ≡ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadPhantom {
    pub semi_axes: (f64, f64),
    /// `(tissue, outer boundary)`, outermost first.
    pub layers: Vec<(Tissue, RadialCurve)>,
    pub tissues: TissueValues,
    pub inclusions: Vec<StrokeInclusion>,
    pub label: Option<StrokeClass>,
    pub scenario: Option<Scenario>,
    pub seed: u64,
}

impl HeadPhantom {
    pub fn homogeneous(semi_axes: (f64, f64)) -> Self {
        Self {
            semi_axes,
            layers: Vec::new(),
            tissues: TissueValues::uniform(),
            inclusions: Vec::new(),
            label: None,
            scenario: None,
            seed: 0,
        }
    }

    /// `σ = 1` background with the given inclusions.
    pub fn with_inclusions(semi_axes: (f64, f64), inclusions: Vec<StrokeInclusion>) -> Self {
        Self { inclusions, ..Self::homogeneous(semi_axes) }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.inclusions.is_empty()
            && self.layers.iter().all(|(t, _)| (self.tissues.get(*t) - 1.0).abs() == 0.0)
    }

    pub fn layer(&self, t: Tissue) -> Option<&RadialCurve> {
        self.layers.iter().find(|(tt, _)| *tt == t).map(|(_, c)| c)
    }

    /// Compartment (ignoring inclusions) containing `p`.
    pub fn tissue_at(&self, p: [f64; 2]) -> Tissue {
        let mut tissue = Tissue::Helmet;
        for (t, curve) in &self.layers {
            if curve.contains(p) {
                tissue = *t;
            } else {
                break;
            }
        }
        tissue
    }

    pub fn inside_domain(&self, p: [f64; 2]) -> bool {
        let r = p[0].hypot(p[1]);
        r <= ellipse_radius(self.semi_axes, p[1].atan2(p[0])) * (1.0 + 1e-12)
    }

    pub fn conductivity_at(&self, p: [f64; 2]) -> Result<f64, PhantomError> {
        if !self.inside_domain(p) {
            return Err(PhantomError::OutsideDomain(p[0], p[1]));
        }
        Ok(self.conductivity_unchecked(p))
    }

    pub(crate) fn conductivity_unchecked(&self, p: [f64; 2]) -> f64 {
        if let Some(inc) = self.inclusions.iter().rev().find(|i| i.contains(p)) {
            return inc.conductivity;
        }
        self.tissues.get(self.tissue_at(p))
    }

    /// The phantom with every stroke removed.
    pub fn anatomy_only(&self) -> Self {
        Self { inclusions: Vec::new(), label: None, scenario: None, ..self.clone() }
    }
}

/// Independent per-purpose RNG stream for a sample seed.
pub fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

const STREAM_ANATOMY: u64 = 1;
const STREAM_TISSUE: u64 = 2;
const STREAM_STROKE: u64 = 3;

/// Draw an anatomy (no inclusions, no label); tissue values are left at 1.
pub fn sample_head_anatomy(seed: u64, amplitude: f64) -> Result<HeadPhantom, PhantomError> {
    sample_head_anatomy_in(crate::geometry::HELMET_SEMI_AXES, seed, amplitude)
}

pub fn sample_head_anatomy_in(semi_axes: (f64, f64), seed: u64, amplitude: f64) -> Result<HeadPhantom, PhantomError> {
    if !(0.0..=0.05).contains(&amplitude) {
        return Err(PhantomError::BadAmplitude(amplitude));
    }
    let mut rng = stream(seed, STREAM_ANATOMY);
    let rays: Vec<f64> = (0..CHECK_RAYS).map(|j| 2.0 * PI * j as f64 / CHECK_RAYS as f64).collect();
    let mut layers = None;
    for _ in 0..MAX_ANATOMY_ATTEMPTS {
        if let Some(l) = draw_layers(&mut rng, semi_axes, amplitude, &rays) {
            layers = Some(l);
            break;
        }
    }
    let layers = layers.ok_or(PhantomError::Nesting(MAX_ANATOMY_ATTEMPTS))?;
    Ok(HeadPhantom {
        semi_axes,
        layers,
        tissues: TissueValues::uniform(),
        inclusions: Vec::new(),
        label: None,
        scenario: None,
        seed,
    })
}

/// One pass from the scalp inwards; `None` when some layer will not nest.
fn draw_layers(
    rng: &mut ChaCha8Rng,
    semi_axes: (f64, f64),
    amplitude: f64,
    rays: &[f64],
) -> Option<Vec<(Tissue, RadialCurve)>> {
    let mut layers: Vec<(Tissue, RadialCurve)> = Vec::new();
    let mut outer = RadialCurve::reference(semi_axes, 1.0);
    let mut outer_tissue = Tissue::Helmet;
    for &t in &Tissue::LAYERS {
        let gap = outer_tissue.reference_fraction() - t.reference_fraction();
        let mut accepted = None;
        for _ in 0..LAYER_REDRAWS {
            let modes: Vec<(f64, f64)> = (0..4)
                .map(|_| {
                    let a = if amplitude > 0.0 { rng.random_range(-amplitude..amplitude) } else { 0.0 };
                    (a, rng.random_range(0.0..2.0 * PI))
                })
                .collect();
            let curve = RadialCurve { semi_axes, fraction: t.reference_fraction(), modes };
            let nested = rays
                .iter()
                .all(|&a| outer.radius(a) - curve.radius(a) >= MIN_GAP_FRACTION * gap * ellipse_radius(semi_axes, a));
            if nested {
                accepted = Some(curve);
                break;
            }
        }
        let curve = accepted?;
        outer = curve.clone();
        outer_tissue = t;
        layers.push((t, curve));
    }
    Some(layers)
}

pub fn sample_conductivities(seed: u64, dists: &TissueDistributions) -> TissueValues {
    let mut rng = stream(seed, STREAM_TISSUE);
    TissueValues {
        scalp: dists.scalp.draw(&mut rng),
        skull: dists.skull.draw(&mut rng),
        csf: dists.csf.draw(&mut rng),
        grey: dists.grey.draw(&mut rng),
        white: dists.white.draw(&mut rng),
    }
}

/// Place the stroke(s) for a scenario inside the brain, on the right side.
pub fn sample_stroke(
    seed: u64,
    class: StrokeClass,
    scenario: Scenario,
    anatomy: &HeadPhantom,
    dists: &TissueDistributions,
) -> Result<Vec<StrokeInclusion>, PhantomError> {
    let mut rng = stream(seed, STREAM_STROKE);
    let brain = anatomy
        .layer(Tissue::Grey)
        .cloned()
        .unwrap_or_else(|| RadialCurve::reference(anatomy.semi_axes, Tissue::Grey.reference_fraction()));
    let dist = dists.stroke(class);

    let shapes: Vec<InclusionShape> = match scenario {
        Scenario::Circular => vec![InclusionShape::Disc { radius: rng.random_range(0.1..0.25) }],
        Scenario::Elliptic => vec![random_ellipse(&mut rng)],
        Scenario::Multiple => vec![
            InclusionShape::Disc { radius: rng.random_range(0.1..0.15) },
            random_ellipse(&mut rng),
        ],
    };

    let mut placed: Vec<StrokeInclusion> = Vec::new();
    for shape in shapes {
        let mut ok = None;
        for _ in 0..MAX_STROKE_ATTEMPTS {
            let center = [rng.random_range(0.05..0.7), rng.random_range(-0.75..0.75)];
            let candidate = StrokeInclusion { center, shape, conductivity: 0.0 };
            if fits_in_brain(&candidate, &brain) && placed.iter().all(|p| disjoint(p, &candidate)) {
                ok = Some(candidate);
                break;
            }
        }
        let mut inc = ok.ok_or(PhantomError::Placement(MAX_STROKE_ATTEMPTS))?;
        inc.conductivity = dist.draw(&mut rng);
        placed.push(inc);
    }
    Ok(placed)
}

fn random_ellipse(rng: &mut ChaCha8Rng) -> InclusionShape {
    InclusionShape::Ellipse {
        semi_major: rng.random_range(0.16..0.26),
        semi_minor: rng.random_range(0.07..0.16),
        rotation: rng.random_range(0.0..PI),
    }
}

fn fits_in_brain(inc: &StrokeInclusion, brain: &RadialCurve) -> bool {
    inc.boundary_points(96).iter().all(|&p| {
        let r = p[0].hypot(p[1]);
        r < brain.radius(p[1].atan2(p[0])) - 0.02
    })
}

fn disjoint(a: &StrokeInclusion, b: &StrokeInclusion) -> bool {
    let margin = 0.02;
    let grow = |i: &StrokeInclusion| {
        let mut g = *i;
        g.shape = match g.shape {
            InclusionShape::Disc { radius } => InclusionShape::Disc { radius: radius + margin },
            InclusionShape::Ellipse { semi_major, semi_minor, rotation } => InclusionShape::Ellipse {
                semi_major: semi_major + margin,
                semi_minor: semi_minor + margin,
                rotation,
            },
        };
        g
    };
    let (ga, gb) = (grow(a), grow(b));
    !ga.boundary_points(128).iter().any(|&p| gb.contains(p))
        && !gb.boundary_points(128).iter().any(|&p| ga.contains(p))
        && !ga.contains(gb.center)
        && !gb.contains(ga.center)
}

/// Full virtual patient for `(seed, class, scenario)`.
pub fn sample_phantom(
    seed: u64,
    class: StrokeClass,
    scenario: Scenario,
    amplitude: f64,
    dists: &TissueDistributions,
) -> Result<HeadPhantom, PhantomError> {
    let mut p = sample_head_anatomy(seed, amplitude)?;
    p.tissues = sample_conductivities(seed, dists);
    p.inclusions = sample_stroke(seed, class, scenario, &p, dists)?;
    p.label = Some(class);
    p.scenario = Some(scenario);
    Ok(p)
}
