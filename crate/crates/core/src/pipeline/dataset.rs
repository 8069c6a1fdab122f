//! Per-sample generation: phantom, CEM data, noisy variants, DN matrices and
//! VHED profiles, persisted one directory per sample.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cem_fem::{simulate_measurements, write_voltages, ForwardSetup, MeshSpec, VoltageSet};
use crate::cgo_bie::{build_k_grid, cgo_traces, BieOperators, BieSystem, KGrid};
use crate::dn_mimic::{dn_matrix, reference_nd_matrix, relative_nd_matrix, write_dn, DnMatrix, NdMatrix};
use crate::geometry::HELMET_SEMI_AXES;
use crate::io;
use crate::phantom::{sample_phantom, HeadPhantom, Scenario, StrokeClass};
use crate::vhed::{vhed_profile, write_profile, VhedProfile, WindowSpec};

use super::{io_err, ExperimentConfig, PipelineError};

pub const MANIFEST_FILE: &str = "manifest.json";
const RECORD_FILE: &str = "record.json";
const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleSet {
    Train,
    Circular,
    Elliptic,
    Multiple,
}

impl SampleSet {
    pub const ALL: [SampleSet; 4] = [SampleSet::Train, SampleSet::Circular, SampleSet::Elliptic, SampleSet::Multiple];
    pub const TESTS: [SampleSet; 3] = [SampleSet::Circular, SampleSet::Elliptic, SampleSet::Multiple];

    pub fn name(self) -> &'static str {
        match self {
            SampleSet::Train => "train",
            SampleSet::Circular => "test-circular",
            SampleSet::Elliptic => "test-elliptic",
            SampleSet::Multiple => "test-multiple",
        }
    }

    /// Training uses circular inclusions, like the first test set.
    pub fn scenario(self) -> Scenario {
        match self {
            SampleSet::Train | SampleSet::Circular => Scenario::Circular,
            SampleSet::Elliptic => Scenario::Elliptic,
            SampleSet::Multiple => Scenario::Multiple,
        }
    }

    pub fn size(self, cfg: &ExperimentConfig) -> usize {
        match self {
            SampleSet::Train => cfg.train_samples,
            _ => cfg.test_samples,
        }
    }

    fn stream(self) -> u64 {
        self as u64 + 1
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Counter-based seed for sample `index` of `set`; independent of generation order.
pub fn derive_seed(master: u64, set: SampleSet, index: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ set.stream()) ^ index as u64)
}

/// Noise seed for the `level`-th noise level of a sample.
pub fn noise_seed(sample_seed: u64, level: usize) -> u64 {
    splitmix64(sample_seed ^ splitmix64(0x6E6F_6973_6500 + level as u64))
}

/// Geometry, reference map and k-grid shared by every sample.
#[derive(Debug)]
pub struct FeatureContext {
    pub setup: ForwardSetup,
    pub reference: NdMatrix,
    pub ops: BieOperators,
    pub grid: KGrid,
    pub window: WindowSpec,
    pub n_modes: usize,
}

impl FeatureContext {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, PipelineError> {
        let mesh = MeshSpec { target_h: cfg.mesh_h, coverage: cfg.electrode_coverage };
        let setup = ForwardSetup::new(HELMET_SEMI_AXES, cfg.electrodes, mesh, cfg.contact_impedance)?;
        let reference = reference_nd_matrix(&setup.map, cfg.electrodes)?;
        let ops = BieOperators::new(&setup.map, cfg.boundary_nodes, cfg.electrodes)?;
        let grid = build_k_grid(cfg.tau_max, cfg.n_tau, &cfg.angles)?;
        let window = match cfg.window_a {
            Some(a) => WindowSpec::with_sharpness(cfg.tau_max, a),
            None => WindowSpec::new(cfg.tau_max),
        };
        Ok(Self { setup, reference, ops, grid, window, n_modes: cfg.n_modes })
    }

    /// `L̃_σ` from (possibly noisy) absolute voltages and the noise-free reference.
    pub fn dn_from_voltages(&self, voltages: &VoltageSet, reference: &VoltageSet) -> Result<DnMatrix, PipelineError> {
        let rel = &voltages.voltages - &reference.voltages;
        let nd = relative_nd_matrix(&rel, &self.setup.patterns)?;
        let mut dn = dn_matrix(&nd, &self.reference)?;
        dn.noise_level = voltages.noise_level;
        Ok(dn)
    }

    pub fn profile_from_dn(&self, dn: &DnMatrix) -> Result<VhedProfile, PipelineError> {
        let system = BieSystem::new(&self.ops, dn, &self.reference, self.n_modes)?;
        let traces = cgo_traces(&system, &self.grid)?;
        let mut profile = vhed_profile(&traces, &self.ops.quad, &self.window)?;
        profile.noise_level = dn.noise_level;
        Ok(profile)
    }
}

/// Path relative to the output directory, with its byte length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub bytes: u64,
}

impl FileRef {
    fn of(root: &Path, path: &Path) -> Result<Self, PipelineError> {
        let bytes = std::fs::metadata(path).map_err(io_err(path))?.len();
        let rel = path.strip_prefix(root).unwrap_or(path);
        Ok(Self { path: rel.to_string_lossy().replace('\\', "/"), bytes })
    }

    pub fn resolve(&self, root: &Path) -> PathBuf {
        root.join(&self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseVariant {
    pub delta: f64,
    pub noise_seed: u64,
    /// Noisy absolute voltages; also the raw feature vector.
    pub voltages: FileRef,
    pub dn: FileRef,
    /// `T_odd` on the `(angle, t)` grid.
    pub profile: FileRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum SampleStatus {
    Complete,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub set: SampleSet,
    pub index: usize,
    pub seed: u64,
    pub class: StrokeClass,
    pub scenario: Scenario,
    pub status: SampleStatus,
    pub phantom: Option<FileRef>,
    /// Noise-free `σ ≡ 1` voltages on the sample's mesh.
    pub reference: Option<FileRef>,
    pub variants: Vec<NoiseVariant>,
}

impl SampleRecord {
    pub fn label(&self) -> f64 {
        self.class.label()
    }

    pub fn is_complete(&self) -> bool {
        self.status == SampleStatus::Complete
    }

    pub fn variant(&self, delta: f64) -> Option<&NoiseVariant> {
        self.variants.iter().find(|v| v.delta == delta)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredRecord {
    config_hash: String,
    record: SampleRecord,
}

/// Wall-clock times of one sample; kept out of the manifest so that it stays
/// reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleTiming {
    pub forward_seconds: f64,
    /// DN matrix, CGO traces and profile, one entry per noise level.
    pub vhed_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub code_version: String,
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn root(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn records_in(&self, set: SampleSet) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.set == set)
    }

    pub fn failed(&self) -> usize {
        self.records.iter().filter(|r| !r.is_complete()).count()
    }

    /// Unique ids, files present with their declared sizes, balanced labels.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut ids = HashSet::new();
        for r in &self.records {
            if !ids.insert(&r.id) {
                return Err(PipelineError::Missing(format!("duplicate sample id {}", r.id)));
            }
            let files = r
                .phantom
                .iter()
                .chain(&r.reference)
                .chain(r.variants.iter().flat_map(|v| [&v.voltages, &v.dn, &v.profile]));
            for f in files {
                let path = f.resolve(self.root());
                let len = std::fs::metadata(&path).map(|m| m.len()).map_err(io_err(&path))?;
                if len != f.bytes {
                    return Err(PipelineError::Missing(format!("{} has {len} bytes, manifest says {}", f.path, f.bytes)));
                }
            }
        }
        let complete: Vec<_> = self.records.iter().filter(|r| r.is_complete()).collect();
        if !complete.is_empty() {
            let hem = complete.iter().filter(|r| r.class == StrokeClass::Hemorrhagic).count();
            let frac = hem as f64 / complete.len() as f64;
            if !(0.45..=0.55).contains(&frac) {
                return Err(PipelineError::Missing(format!("hemorrhagic fraction {frac:.3} outside [0.45, 0.55]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GenerationStats {
    pub total: usize,
    pub generated: usize,
    pub reused: usize,
    pub failed: usize,
    pub wall_seconds: f64,
    /// Over freshly generated samples and noise levels.
    pub mean_vhed_seconds: f64,
    pub max_vhed_seconds: f64,
}

pub fn sample_id(set: SampleSet, index: usize) -> String {
    format!("{}-{index:04}", set.name())
}

fn delta_tag(level: usize) -> String {
    format!("d{level}")
}

/// Generate, persist and describe one sample. Failures of the numerical
/// chain are returned as a failed record; only I/O errors abort.
pub fn process_sample(
    ctx: &FeatureContext,
    cfg: &ExperimentConfig,
    set: SampleSet,
    index: usize,
) -> Result<(SampleRecord, Option<SampleTiming>), PipelineError> {
    let root = &cfg.output_dir;
    let id = sample_id(set, index);
    let dir = root.join("samples").join(&id);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let seed = derive_seed(cfg.master_seed, set, index);
    let class = StrokeClass::from_index(index);
    let mut record = SampleRecord {
        id: id.clone(),
        set,
        index,
        seed,
        class,
        scenario: set.scenario(),
        status: SampleStatus::Complete,
        phantom: None,
        reference: None,
        variants: Vec::new(),
    };
    match build_sample(ctx, cfg, &mut record, &dir) {
        Ok(timing) => Ok((record, Some(timing))),
        Err(PipelineError::Io { context, source }) => Err(PipelineError::Io { context, source }),
        Err(e) => {
            record.status = SampleStatus::Failed { reason: e.to_string() };
            record.variants.clear();
            Ok((record, None))
        }
    }
}

fn build_sample(
    ctx: &FeatureContext,
    cfg: &ExperimentConfig,
    record: &mut SampleRecord,
    dir: &Path,
) -> Result<SampleTiming, PipelineError> {
    let root = &cfg.output_dir;
    let start = Instant::now();
    let phantom: HeadPhantom = sample_phantom(record.seed, record.class, record.scenario, cfg.perturbation, &cfg.tissues)?;
    let phantom_path = dir.join("phantom.json");
    io::write_json(&phantom_path, &phantom).map_err(io_err(&phantom_path))?;
    record.phantom = Some(FileRef::of(root, &phantom_path)?);

    let meas = simulate_measurements(&phantom, &ctx.setup)?;
    let ref_path = dir.join("reference.f64");
    write_voltages(&ref_path, &meas.reference, record.seed, &ctx.setup).map_err(io_err(&ref_path))?;
    record.reference = Some(FileRef::of(root, &ref_path)?);
    let forward_seconds = start.elapsed().as_secs_f64();

    let mut vhed_seconds = Vec::with_capacity(cfg.noise_levels.len());
    for (level, &delta) in cfg.noise_levels.iter().enumerate() {
        let nseed = noise_seed(record.seed, level);
        let noisy = meas.sigma.with_noise(delta, nseed)?;
        let tag = delta_tag(level);
        let v_path = dir.join(format!("voltages_{tag}.f64"));
        write_voltages(&v_path, &noisy, record.seed, &ctx.setup).map_err(io_err(&v_path))?;

        let t0 = Instant::now();
        let mut dn = ctx.dn_from_voltages(&noisy, &meas.reference)?;
        dn.sample_id = Some(record.id.clone());
        let mut profile = ctx.profile_from_dn(&dn)?;
        vhed_seconds.push(t0.elapsed().as_secs_f64());
        if !profile.is_finite() {
            return Err(PipelineError::Missing(format!("non-finite profile at delta {delta}")));
        }
        profile.sample_id = Some(record.id.clone());

        let dn_path = dir.join(format!("dn_{tag}.f64"));
        write_dn(&dn_path, &dn).map_err(io_err(&dn_path))?;
        let p_path = dir.join(format!("vhed_{tag}.f64"));
        write_profile(&p_path, &profile).map_err(io_err(&p_path))?;
        record.variants.push(NoiseVariant {
            delta,
            noise_seed: nseed,
            voltages: FileRef::of(root, &v_path)?,
            dn: FileRef::of(root, &dn_path)?,
            profile: FileRef::of(root, &p_path)?,
        });
    }
    Ok(SampleTiming { forward_seconds, vhed_seconds })
}

fn load_stored(dir: &Path, hash: &str) -> Option<SampleRecord> {
    let stored: StoredRecord = io::read_json(&dir.join(RECORD_FILE)).ok()?;
    (stored.config_hash == hash && stored.record.is_complete()).then_some(stored.record)
}

/// Build the pool used for sample generation and training.
pub(crate) fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))
}

/// Generate every sample of the configuration, reusing completed samples of
/// an earlier run with the same data settings. Failed samples are retried.
///
/// `progress` is called with `(finished, total)` after each sample.
pub fn generate_dataset(
    cfg: &ExperimentConfig,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<(DatasetManifest, GenerationStats), PipelineError> {
    cfg.validate()?;
    let jobs: Vec<(SampleSet, usize)> =
        SampleSet::ALL.iter().flat_map(|&s| (0..s.size(cfg)).map(move |i| (s, i))).collect();
    generate_samples(cfg, &jobs, progress)
}

/// [`generate_dataset`] restricted to the listed `(set, index)` samples,
/// without the minimum-count check.
pub fn generate_samples(
    cfg: &ExperimentConfig,
    jobs: &[(SampleSet, usize)],
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<(DatasetManifest, GenerationStats), PipelineError> {
    cfg.validate_settings()?;
    let start = Instant::now();
    let root = &cfg.output_dir;
    std::fs::create_dir_all(root).map_err(io_err(root))?;
    let hash = cfg.data_hash();
    let config_path = root.join("config.json");
    io::write_json(&config_path, cfg).map_err(io_err(&config_path))?;

    let ctx = FeatureContext::new(cfg)?;
    let total = jobs.len();
    let done = std::sync::atomic::AtomicUsize::new(0);

    let pool = thread_pool(cfg.threads)?;
    // (record, freshly generated, VHED seconds per noise level)
    let results: Vec<Result<(SampleRecord, bool, Vec<f64>), PipelineError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(set, index)| {
                let dir = root.join("samples").join(sample_id(set, index));
                let out = match load_stored(&dir, &hash) {
                    Some(r) => Ok((r, false, Vec::new())),
                    None => {
                        let (record, timing) = process_sample(&ctx, cfg, set, index)?;
                        let mut times = Vec::new();
                        if let Some(t) = timing {
                            let p = dir.join(TIMING_FILE);
                            io::write_json(&p, &t).map_err(io_err(&p))?;
                            times = t.vhed_seconds;
                        }
                        let p = dir.join(RECORD_FILE);
                        let stored = StoredRecord { config_hash: hash.clone(), record: record.clone() };
                        io::write_json(&p, &stored).map_err(io_err(&p))?;
                        Ok((record, true, times))
                    }
                };
                progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1, total);
                out
            })
            .collect()
    });

    let mut records = Vec::with_capacity(total);
    let mut stats = GenerationStats { total, ..Default::default() };
    let mut vhed_times = Vec::new();
    for res in results {
        let (record, fresh, times) = res?;
        if fresh {
            stats.generated += 1;
        } else {
            stats.reused += 1;
        }
        vhed_times.extend(times);
        if !record.is_complete() {
            stats.failed += 1;
        }
        records.push(record);
    }
    if !vhed_times.is_empty() {
        stats.mean_vhed_seconds = vhed_times.iter().sum::<f64>() / vhed_times.len() as f64;
        stats.max_vhed_seconds = vhed_times.iter().cloned().fold(0.0, f64::max);
    }
    stats.wall_seconds = start.elapsed().as_secs_f64();

    let manifest = DatasetManifest {
        config: cfg.clone(),
        config_hash: hash,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        records,
    };
    let path = root.join(MANIFEST_FILE);
    io::write_json(&path, &manifest).map_err(io_err(&path))?;
    if stats.failed as f64 > cfg.max_failure_fraction * total as f64 {
        return Err(PipelineError::BatchFailure { failed: stats.failed, total });
    }
    Ok((manifest, stats))
}

/// Read `manifest.json` from an output directory. The stored config's
/// output directory is replaced by `dir`, so moved runs stay readable.
pub fn open_manifest(dir: &Path) -> Result<DatasetManifest, PipelineError> {
    let path = dir.join(MANIFEST_FILE);
    let mut m: DatasetManifest = io::read_json(&path).map_err(io_err(&path))?;
    m.config.output_dir = dir.to_path_buf();
    Ok(m)
}
