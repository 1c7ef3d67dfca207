//! Synthetic scenes and the Monte-Carlo benchmark harness.
//!
//! # Random generator contract
//!
//! Scenes are reproducible bit-for-bit from a 64-bit seed on any platform. A port must
//! follow these rules exactly:
//!
//! * Generator: xoshiro256++ seeded by expanding the `u64` seed through SplitMix64
//!   (four successive outputs fill the state), as in `Xoshiro256PlusPlus::seed_from_u64`.
//! * `uniform()`: `(next_u64() >> 11) as f64 * 2^-53`, in `[0, 1)`.
//! * `below(n)`: `((next_u64() as u128 * n as u128) >> 64) as usize`.
//! * `normal()`: Box–Muller on two uniforms `u1, u2`, with `r = sqrt(-2 ln(1 - u1))` and
//!   `θ = 2π u2`. It returns `r cos θ` and caches `r sin θ` for the next call.
//! * Uniform rotations use Shoemake's method: three uniforms `u1, u2, u3` give the
//!   quaternion `(w, x, y, z) = (√u1 cos 2πu3, √(1-u1) sin 2πu2, √(1-u1) cos 2πu2, √u1 sin 2πu3)`.
//! * Shuffles use Fisher–Yates from the last index down, swapping `i` with `below(i + 1)`.
//! * The scene seed for trial `t` of a cell with base seed `s` is `mix(s ^ mix(t + 1))`,
//!   where `mix` is the SplitMix64 finalizer. A grid's cell `c` gets base seed
//!   `mix(grid_seed ^ mix(c + 1) ^ 0x9E3779B97F4A7C15)`.
//!
//! Draw order in [`generate_scene`]: true transform (rotation, then translation x, y, z),
//! then CT markers (x, y, z uniforms per attempt), then per-marker noise (three normals,
//! drawn even at zero sigma), then the dropout shuffle, then decoys (x, y, z), then the final
//! shuffle of device points.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{Vector3, Vector4};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::icp::{icp_register, IcpConfig};
use crate::kv::KvBlock;
use crate::markers::{Frame, MarkerSet};
use crate::triangle::{register, RegistrationConfig, TriangleTable};

/// SplitMix64 output function.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_seed(cell_seed: u64, trial: usize) -> u64 {
    mix(cell_seed ^ mix(trial as u64 + 1))
}

pub fn cell_seed(grid_seed: u64, cell: usize) -> u64 {
    mix(grid_seed ^ mix(cell as u64 + 1) ^ 0x9E37_79B9_7F4A_7C15)
}

/// The documented scene generator.
#[derive(Debug, Clone)]
pub struct SceneRng {
    inner: Xoshiro256PlusPlus,
    spare_normal: Option<f64>,
}

impl SceneRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn unit_vector(&mut self) -> Vector3<f64> {
        loop {
            let v = Vector3::new(self.normal(), self.normal(), self.normal());
            let n = v.norm();
            if n > 1e-12 {
                return v / n;
            }
        }
    }

    pub fn rotation(&mut self) -> Vector4<f64> {
        let (u1, u2, u3) = (self.uniform(), self.uniform(), self.uniform());
        let tau = 2.0 * std::f64::consts::PI;
        let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
        Vector4::new(b * (tau * u3).cos(), a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin())
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// How the ground-truth CT → device transform is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformSpec {
    Fixed(RigidTransform<f64>),
    /// Rotation uniform over SO(3), translation uniform in `[-h, h]³`.
    RandomUniform { translation_half_extent_mm: f64 },
    /// Rotation by a fixed angle about a uniformly random axis.
    RandomAngle { angle_rad: f64, translation_half_extent_mm: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub n_markers: usize,
    /// Markers are drawn uniformly in a box of this size centered at the origin.
    pub placement_extent_mm: [f64; 3],
    pub true_transform: TransformSpec,
    pub noise_sigma_mm: f64,
    pub dropout_count: usize,
    pub decoy_count: usize,
    /// CT markers closer than this are redrawn.
    pub min_separation_mm: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_markers: 3,
            placement_extent_mm: [200.0; 3],
            true_transform: TransformSpec::RandomUniform {
                translation_half_extent_mm: 100.0,
            },
            noise_sigma_mm: 0.0,
            dropout_count: 0,
            decoy_count: 0,
            min_separation_mm: 20.0,
            seed: 0,
        }
    }
}

const SCENE_KEYS: [&str; 11] = [
    "n_markers",
    "placement_extent_mm",
    "noise_sigma_mm",
    "dropout",
    "decoys",
    "min_separation_mm",
    "seed",
    "rotation",
    "rotation_angle_deg",
    "translation_half_extent_mm",
    "translation_mm",
];

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_markers < 3 {
            return Err(Error::Config(format!("n_markers must be at least 3, got {}", self.n_markers)));
        }
        if self.n_markers < self.dropout_count + 3 {
            return Err(Error::Config(format!(
                "n_markers - dropout must be at least 3, got {} - {}",
                self.n_markers, self.dropout_count
            )));
        }
        if !(self.noise_sigma_mm >= 0.0) || !self.noise_sigma_mm.is_finite() {
            return Err(Error::Config("noise_sigma_mm must be finite and >= 0".into()));
        }
        if self.placement_extent_mm.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::Config("placement_extent_mm must be positive".into()));
        }
        if !(self.min_separation_mm >= 0.0) {
            return Err(Error::Config("min_separation_mm must be >= 0".into()));
        }
        match self.true_transform {
            TransformSpec::RandomUniform { translation_half_extent_mm: h }
            | TransformSpec::RandomAngle { translation_half_extent_mm: h, .. }
                if !(h >= 0.0) =>
            {
                Err(Error::Config("translation_half_extent_mm must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Keys: `n_markers`, `placement_extent_mm`, `noise_sigma_mm`, `dropout`, `decoys`,
    /// `min_separation_mm`, `seed`, `rotation` (`random`, `angle` or `identity`),
    /// `rotation_angle_deg`, `translation_half_extent_mm`, `translation_mm` (fixed, with
    /// `rotation = identity`).
    pub fn from_kv(kv: &KvBlock) -> Result<Self> {
        kv.check_keys(&SCENE_KEYS)?;
        let spec = SceneSpec {
            noise_sigma_mm: kv.get_or("noise_sigma_mm", 0.0)?,
            dropout_count: kv.get_or("dropout", 0)?,
            decoy_count: kv.get_or("decoys", 0)?,
            ..shared_scene_keys(kv, kv.require("n_markers")?)?
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Everything except noise, dropout and decoys, which may be lists in a grid.
fn shared_scene_keys(kv: &KvBlock, n_markers: usize) -> Result<SceneSpec> {
    let d = SceneSpec::default();
    let half = kv.get_or("translation_half_extent_mm", 100.0)?;
    let mode: String = kv.get_or("rotation", "random".to_string())?;
    let true_transform = match mode.as_str() {
        "random" => TransformSpec::RandomUniform {
            translation_half_extent_mm: half,
        },
        "angle" => TransformSpec::RandomAngle {
            angle_rad: kv.require::<f64>("rotation_angle_deg")?.to_radians(),
            translation_half_extent_mm: half,
        },
        "identity" => {
            let t = kv.get_triple("translation_mm")?.unwrap_or([0.0; 3]);
            TransformSpec::Fixed(RigidTransform::from_translation(Vector3::from(t)))
        }
        other => return Err(Error::Config(format!("unknown rotation mode {other:?}"))),
    };
    Ok(SceneSpec {
        n_markers,
        placement_extent_mm: kv.get_triple("placement_extent_mm")?.unwrap_or(d.placement_extent_mm),
        true_transform,
        min_separation_mm: kv.get_or("min_separation_mm", d.min_separation_mm)?,
        seed: kv.get_or("seed", 0u64)?,
        ..d
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ct_markers: MarkerSet<f64>,
    /// Device ids are the CT index for true markers and `n_markers + j` for decoy `j`.
    pub device_markers: MarkerSet<f64>,
    pub truth: RigidTransform<f64>,
    /// CT marker positions followed by the placement-box center.
    pub targets: Vec<Vector3<f64>>,
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = SceneRng::new(spec.seed);

    let truth = match &spec.true_transform {
        TransformSpec::Fixed(t) => *t,
        TransformSpec::RandomUniform {
            translation_half_extent_mm: h,
        } => {
            let q = rng.rotation();
            let t = Vector3::new(rng.uniform_in(-h, *h), rng.uniform_in(-h, *h), rng.uniform_in(-h, *h));
            RigidTransform::from_quaternion(q, t)
        }
        TransformSpec::RandomAngle {
            angle_rad,
            translation_half_extent_mm: h,
        } => {
            let axis = rng.unit_vector();
            let t = Vector3::new(rng.uniform_in(-h, *h), rng.uniform_in(-h, *h), rng.uniform_in(-h, *h));
            RigidTransform::from_axis_angle(axis, *angle_rad, t)
        }
    };

    let half = spec.placement_extent_mm.map(|e| e / 2.0);
    let mut ct: Vec<Vector3<f64>> = Vec::with_capacity(spec.n_markers);
    let min_sep2 = spec.min_separation_mm * spec.min_separation_mm;
    for i in 0..spec.n_markers {
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::Config(format!(
                    "could not place marker {i} at {} mm separation in the placement box",
                    spec.min_separation_mm
                )));
            }
            let p = Vector3::new(
                rng.uniform_in(-half[0], half[0]),
                rng.uniform_in(-half[1], half[1]),
                rng.uniform_in(-half[2], half[2]),
            );
            if ct.iter().all(|q| (p - q).norm_squared() >= min_sep2) {
                ct.push(p);
                break;
            }
        }
    }

    let mut device: Vec<(u32, Vector3<f64>)> = ct
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let noise = Vector3::new(rng.normal(), rng.normal(), rng.normal()) * spec.noise_sigma_mm;
            (i as u32, truth.apply(p) + noise)
        })
        .collect();

    if spec.dropout_count > 0 {
        let mut order: Vec<usize> = (0..device.len()).collect();
        rng.shuffle(&mut order);
        let mut dropped = vec![false; device.len()];
        for &i in &order[..spec.dropout_count] {
            dropped[i] = true;
        }
        device = device
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !dropped[*i])
            .map(|(_, d)| d)
            .collect();
    }

    if spec.decoy_count > 0 {
        let moved = truth.apply_all(&ct);
        let mut lo = moved[0];
        let mut hi = moved[0];
        for p in &moved {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        for j in 0..spec.decoy_count {
            let p = Vector3::new(
                rng.uniform_in(lo.x, hi.x),
                rng.uniform_in(lo.y, hi.y),
                rng.uniform_in(lo.z, hi.z),
            );
            device.push(((spec.n_markers + j) as u32, p));
        }
    }
    rng.shuffle(&mut device);

    let mut targets = ct.clone();
    targets.push(Vector3::zeros());
    let ct_ids = (0..spec.n_markers as u32).collect();
    let (ids, points): (Vec<u32>, Vec<Vector3<f64>>) = device.into_iter().unzip();
    Ok(Scene {
        ct_markers: MarkerSet::with_ids(Frame::Ct, ct, Some(ct_ids))?,
        device_markers: MarkerSet::with_ids(Frame::Device, points, Some(ids))?,
        truth,
        targets,
    })
}

/// Mean distance between the targets mapped by `estimated` and by `truth`.
pub fn target_registration_error(
    estimated: &RigidTransform<f64>,
    truth: &RigidTransform<f64>,
    targets: &[Vector3<f64>],
) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Precondition("TRE needs at least one target".into()));
    }
    let sum: f64 = targets
        .iter()
        .map(|p| (estimated.apply(p) - truth.apply(p)).norm())
        .sum();
    Ok(sum / targets.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Triangle,
    Icp,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Triangle => "triangle",
            Method::Icp => "icp",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triangle" => Ok(Method::Triangle),
            "icp" => Ok(Method::Icp),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// One benchmark trial. Error fields are `None` when registration failed; `status` then
/// holds the error kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub method: Method,
    pub seed: u64,
    pub n_markers: usize,
    pub noise_sigma_mm: f64,
    pub dropout: usize,
    pub decoys: usize,
    pub tre_mm: Option<f64>,
    pub rot_err_rad: Option<f64>,
    pub trans_err_mm: Option<f64>,
    pub time_us: f64,
    pub flipped: bool,
    pub status: String,
}

pub const TRIAL_CSV_HEADER: [&str; 12] = [
    "method",
    "seed",
    "n_markers",
    "noise_sigma_mm",
    "dropout",
    "decoys",
    "tre_mm",
    "rot_err_rad",
    "trans_err_mm",
    "time_us",
    "flipped",
    "status",
];

/// Registration settings shared by every trial.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MethodConfigs {
    pub triangle: RegistrationConfig<f64>,
    pub icp: IcpConfig<f64>,
}

/// Runs one method on one scene. Timing covers table construction plus `register` for the
/// triangle method and `icp_register` for ICP.
pub fn run_trial(scene: &Scene, method: Method, configs: &MethodConfigs) -> (Result<(RigidTransform<f64>, bool)>, f64) {
    let start = Instant::now();
    let outcome = match method {
        Method::Triangle => {
            let table = TriangleTable::from_markers(&scene.device_markers, configs.triangle.degeneracy_ratio);
            register(&scene.ct_markers, &table, &configs.triangle).map(|r| (r.transform, r.flipped))
        }
        Method::Icp => icp_register(&scene.ct_markers, &scene.device_markers, &configs.icp).map(|r| (r.transform, false)),
    };
    let elapsed = start.elapsed().as_secs_f64() * 1e6;
    (outcome, elapsed)
}

fn trial_record(spec: &SceneSpec, scene: &Scene, method: Method, configs: &MethodConfigs) -> Result<TrialRecord> {
    let (outcome, time_us) = run_trial(scene, method, configs);
    let mut record = TrialRecord {
        method,
        seed: spec.seed,
        n_markers: spec.n_markers,
        noise_sigma_mm: spec.noise_sigma_mm,
        dropout: spec.dropout_count,
        decoys: spec.decoy_count,
        tre_mm: None,
        rot_err_rad: None,
        trans_err_mm: None,
        time_us,
        flipped: false,
        status: "ok".into(),
    };
    match outcome {
        Ok((estimated, flipped)) => {
            let diff = estimated.compose(&scene.truth.inverse());
            record.tre_mm = Some(target_registration_error(&estimated, &scene.truth, &scene.targets)?);
            record.rot_err_rad = Some(diff.rotation_angle());
            record.trans_err_mm = Some((estimated.translation() - scene.truth.translation()).norm());
            record.flipped = flipped;
        }
        Err(e) => record.status = e.kind().into(),
    }
    Ok(record)
}

/// Runs every `(cell, method)` pair for `trials_per_cell` trials. Cell `c`, trial `t` uses
/// the scene seeded by `trial_seed(cells[c].seed, t)`, so all methods see the same scenes.
/// One extra warm-up trial per pair is run first and discarded. Records are ordered by
/// cell, then method (in the given order), then trial.
pub fn run_benchmark(
    cells: &[SceneSpec],
    methods: &[Method],
    trials_per_cell: usize,
    configs: &MethodConfigs,
) -> Result<Vec<TrialRecord>> {
    if trials_per_cell == 0 {
        return Err(Error::Precondition("trials_per_cell must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::Precondition("at least one method is required".into()));
    }
    let mut records = Vec::with_capacity(cells.len() * methods.len() * trials_per_cell);
    for cell in cells {
        cell.validate()?;
        let scenes = (0..trials_per_cell)
            .map(|t| {
                let spec = SceneSpec {
                    seed: trial_seed(cell.seed, t),
                    ..cell.clone()
                };
                generate_scene(&spec).map(|s| (spec, s))
            })
            .collect::<Result<Vec<_>>>()?;
        for &method in methods {
            let _ = run_trial(&scenes[0].1, method, configs);
            for (spec, scene) in &scenes {
                records.push(trial_record(spec, scene, method, configs)?);
            }
        }
    }
    Ok(records)
}

/// CSV with [`TRIAL_CSV_HEADER`]; failed trials leave the error fields empty.
pub fn records_to_csv(records: &[TrialRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Precondition(format!("CSV write failed: {e}"));
    w.write_record(TRIAL_CSV_HEADER).map_err(io)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.method.as_str().to_string(),
            r.seed.to_string(),
            r.n_markers.to_string(),
            r.noise_sigma_mm.to_string(),
            r.dropout.to_string(),
            r.decoys.to_string(),
            opt(r.tre_mm),
            opt(r.rot_err_rad),
            opt(r.trans_err_mm),
            r.time_us.to_string(),
            r.flipped.to_string(),
            r.status.clone(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Precondition(format!("CSV write failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

/// Arithmetic mean and sample standard deviation (n − 1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Some(Stat {
            mean,
            std,
            n: values.len(),
        })
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> Option<f64> {
        self.std.map(|s| s / (self.n as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub n_markers: usize,
    pub noise_sigma_mm: f64,
    pub dropout: usize,
    pub decoys: usize,
    pub trials: usize,
    pub failures: usize,
    pub flipped: usize,
    pub tre_mm: Option<Stat>,
    pub rot_err_rad: Option<Stat>,
    pub trans_err_mm: Option<Stat>,
    pub time_us: Option<Stat>,
}

/// Per-cell aggregates, in order of first appearance. Error statistics use successful
/// trials only; timing uses all trials.
pub fn summarize(records: &[TrialRecord]) -> Vec<CellSummary> {
    type CellKey = (Method, usize, u64, usize, usize);
    let mut order: Vec<CellKey> = Vec::new();
    let mut groups: BTreeMap<CellKey, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.method, r.n_markers, r.noise_sigma_mm.to_bits(), r.dropout, r.decoys);
        let entry = groups.entry(key).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let collect = |f: fn(&TrialRecord) -> Option<f64>| Stat::of(&rs.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            CellSummary {
                method: key.0,
                n_markers: key.1,
                noise_sigma_mm: f64::from_bits(key.2),
                dropout: key.3,
                decoys: key.4,
                trials: rs.len(),
                failures: rs.iter().filter(|r| r.status != "ok").count(),
                flipped: rs.iter().filter(|r| r.flipped).count(),
                tre_mm: collect(|r| r.tre_mm),
                rot_err_rad: collect(|r| r.rot_err_rad),
                trans_err_mm: collect(|r| r.trans_err_mm),
                time_us: collect(|r| Some(r.time_us)),
            }
        })
        .collect()
}

/// A benchmark grid: the Cartesian product of the listed scene parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchGrid {
    pub cells: Vec<SceneSpec>,
    pub methods: Vec<Method>,
    pub trials: usize,
}

impl BenchGrid {
    /// Scene keys as in [`SceneSpec::from_kv`], where `n_markers`, `noise_sigma_mm`,
    /// `dropout` and `decoys` may be comma-separated lists, plus `methods` (list) and
    /// `trials`. `seed` is the grid seed from which cell seeds are derived.
    pub fn from_kv(kv: &KvBlock) -> Result<Self> {
        let mut keys = SCENE_KEYS.to_vec();
        keys.extend(["methods", "trials"]);
        kv.check_keys(&keys)?;
        let list_usize = |key: &str, d: usize| -> Result<Vec<usize>> {
            Ok(kv.get_list::<usize>(key)?.unwrap_or_else(|| vec![d]))
        };
        let n_list = kv
            .get_list::<usize>("n_markers")?
            .ok_or_else(|| Error::Config("missing key n_markers".into()))?;
        let noise = kv.get_list::<f64>("noise_sigma_mm")?.unwrap_or_else(|| vec![0.0]);
        let dropout = list_usize("dropout", 0)?;
        let decoys = list_usize("decoys", 0)?;
        let methods = kv
            .get_list::<String>("methods")?
            .unwrap_or_else(|| vec!["triangle".into()])
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<Method>>>()?;
        let trials: usize = kv.get_or("trials", 100)?;
        let grid_seed: u64 = kv.get_or("seed", 0)?;
        let mut cells = Vec::new();
        for &n in &n_list {
            for &sigma in &noise {
                for &drop in &dropout {
                    for &dec in &decoys {
                        let spec = SceneSpec {
                            noise_sigma_mm: sigma,
                            dropout_count: drop,
                            decoy_count: dec,
                            seed: cell_seed(grid_seed, cells.len()),
                            ..shared_scene_keys(kv, n)?
                        };
                        spec.validate()?;
                        cells.push(spec);
                    }
                }
            }
        }
        if trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        Ok(Self { cells, methods, trials })
    }

    pub fn run(&self, configs: &MethodConfigs) -> Result<Vec<TrialRecord>> {
        run_benchmark(&self.cells, &self.methods, self.trials, configs)
    }
}
