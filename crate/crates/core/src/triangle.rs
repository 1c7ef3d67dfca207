//! Correspondence-free registration by triangle shape matching.
//!
//! Every triple of detected device markers is indexed in a k-d tree by its scale-free
//! edge-ratio key `(e2/e1, e3/e1)`, where `e1` is the longest edge, `e2` the shortest and
//! `e3` the middle one. A CT-side triangle is matched against its nearest keys, candidates
//! whose longest edge differs by more than a scale tolerance are rejected, and the survivors
//! are aligned vertex-by-edge-role with a closed-form rigid fit.
//!
//! Three points alone cannot tell a triangle from its mirror image. When outward-facing
//! references are available for both sides (a point inside the body for CT, the camera
//! position for the device), each triangle gets an oriented normal; an alignment that turns
//! the CT normal against the device normal is rejected and the vertex pairing is exchanged.

use std::cmp::Ordering;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fit_unchecked, rmsd, PointCorrespondences, RigidTransform, TransformRecord};
use crate::kdtree::KdTree;
use crate::kv::KvBlock;
use crate::markers::MarkerSet;
use crate::scalar::Real;

pub const DEFAULT_DEGENERACY_RATIO: f64 = 1e-6;

/// Scale-normalized edge-ratio descriptor. Invariants: `0 < r2 ≤ r3 ≤ 1`, `r2 + r3 > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleKey<T: Real> {
    /// shortest / longest
    pub r2: T,
    /// middle / longest
    pub r3: T,
    /// longest edge, mm
    pub e1: T,
}

impl<T: Real> TriangleKey<T> {
    pub fn coords(&self) -> [T; 2] {
        [self.r2, self.r3]
    }

    pub fn shape_distance(&self, other: &Self) -> T {
        ((self.r2 - other.r2) * (self.r2 - other.r2) + (self.r3 - other.r3) * (self.r3 - other.r3)).sqrt()
    }
}

/// A keyed triangle together with its vertex roles.
///
/// `order[0]` is the vertex opposite the longest edge, `order[1]` opposite the shortest,
/// `order[2]` opposite the middle edge. `lengths` are sorted descending (longest, middle,
/// shortest).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalTriangle<T: Real> {
    pub order: [usize; 3],
    pub key: TriangleKey<T>,
    lengths_desc: [T; 3],
    by_length: [usize; 3],
}

/// Canonicalizes three points. Ties in edge length are broken by input vertex index.
pub fn canonical_triangle<T: Real>(points: &[Vector3<T>; 3], degeneracy_ratio: T) -> Result<CanonicalTriangle<T>> {
    let opposite = [
        (points[1] - points[2]).norm(),
        (points[0] - points[2]).norm(),
        (points[0] - points[1]).norm(),
    ];
    let mut by_length = [0usize, 1, 2];
    by_length.sort_by(|&a, &b| {
        opposite[b]
            .partial_cmp(&opposite[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let e1 = opposite[by_length[0]];
    let e3 = opposite[by_length[1]];
    let e2 = opposite[by_length[2]];
    let area = (points[1] - points[0]).cross(&(points[2] - points[0])).norm() * T::lit(0.5);
    if !(e1 > T::zero()) || !(area >= degeneracy_ratio * e1 * e1) || !(e2 > T::zero()) {
        return Err(Error::DegenerateTriangle(format!(
            "area {area} below {degeneracy_ratio}·e1² (e1 = {e1})"
        )));
    }
    Ok(CanonicalTriangle {
        order: [by_length[0], by_length[2], by_length[1]],
        key: TriangleKey {
            r2: e2 / e1,
            r3: e3 / e1,
            e1,
        },
        lengths_desc: [e1, e3, e2],
        by_length,
    })
}

/// Edge-ratio key of a triangle using the default degeneracy threshold (`area < 1e-6·e1²`).
pub fn triangle_key<T: Real>(p1: &Vector3<T>, p2: &Vector3<T>, p3: &Vector3<T>) -> Result<TriangleKey<T>> {
    canonical_triangle(&[*p1, *p2, *p3], T::lit(DEFAULT_DEGENERACY_RATIO)).map(|c| c.key)
}

/// A device-side triangle stored in a [`TriangleTable`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexedTriangle<T: Real> {
    /// Marker indices in role order: opposite longest, opposite shortest, opposite middle.
    pub marker_indices: [usize; 3],
    pub key: TriangleKey<T>,
}

/// Outcome of one [`TriangleTable::insert_marker`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InsertOutcome {
    pub inserted: usize,
    pub skipped_degenerate: usize,
}

/// Incremental index of every triangle formed by the detected markers.
#[derive(Debug, Clone)]
pub struct TriangleTable<T: Real> {
    markers: Vec<Vector3<T>>,
    tree: KdTree<T, 2, IndexedTriangle<T>>,
    degeneracy_ratio: T,
    skipped_degenerate: usize,
}

impl<T: Real> Default for TriangleTable<T> {
    fn default() -> Self {
        Self::new(T::lit(DEFAULT_DEGENERACY_RATIO))
    }
}

impl<T: Real> TriangleTable<T> {
    pub fn new(degeneracy_ratio: T) -> Self {
        Self {
            markers: Vec::new(),
            tree: KdTree::new(),
            degeneracy_ratio,
            skipped_degenerate: 0,
        }
    }

    /// Table populated from a marker set in its stored order.
    pub fn from_markers(markers: &MarkerSet<T>, degeneracy_ratio: T) -> Self {
        let mut table = Self::new(degeneracy_ratio);
        for p in markers.points() {
            table.insert_marker(*p);
        }
        table
    }

    pub fn markers(&self) -> &[Vector3<T>] {
        &self.markers
    }

    /// Number of stored triangles.
    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn skipped_degenerate(&self) -> usize {
        self.skipped_degenerate
    }

    pub fn triangles(&self) -> impl Iterator<Item = &IndexedTriangle<T>> {
        self.tree.iter().map(|(_, _, t)| t)
    }

    /// Adds a marker and indexes every triangle it forms with earlier markers.
    pub fn insert_marker(&mut self, point: Vector3<T>) -> InsertOutcome {
        let new = self.markers.len();
        self.markers.push(point);
        let mut outcome = InsertOutcome::default();
        for i in 0..new {
            for j in (i + 1)..new {
                let ids = [i, j, new];
                let pts = [self.markers[i], self.markers[j], point];
                match canonical_triangle(&pts, self.degeneracy_ratio) {
                    Ok(c) => {
                        let tri = IndexedTriangle {
                            marker_indices: c.order.map(|o| ids[o]),
                            key: c.key,
                        };
                        self.tree.insert(c.key.coords(), tri);
                        outcome.inserted += 1;
                    }
                    Err(_) => outcome.skipped_degenerate += 1,
                }
            }
        }
        self.skipped_degenerate += outcome.skipped_degenerate;
        outcome
    }

    /// The `k` stored triangles nearest to `key` in `(r2, r3)`, ascending by distance
    /// (ties by insertion order). Exact.
    pub fn query_nearest(&self, key: &TriangleKey<T>, k: usize) -> Vec<(IndexedTriangle<T>, T)> {
        self.tree
            .nearest(&key.coords(), k)
            .into_iter()
            .map(|n| (*n.value, n.distance_squared.sqrt()))
            .collect()
    }

    /// Linear-scan reference for [`TriangleTable::query_nearest`].
    pub fn query_brute_force(&self, key: &TriangleKey<T>, k: usize) -> Vec<(IndexedTriangle<T>, T)> {
        self.tree
            .nearest_brute_force(&key.coords(), k)
            .into_iter()
            .map(|n| (*n.value, n.distance_squared.sqrt()))
            .collect()
    }

    pub fn triangle_points(&self, tri: &IndexedTriangle<T>) -> [Vector3<T>; 3] {
        tri.marker_indices.map(|i| self.markers[i])
    }
}

/// Pairing of a CT triangle with a device triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleCorrespondence<T: Real> {
    /// `source[i] = ct[ct_order[i]]`, `target[i] = device[device_order[i]]`.
    pub correspondences: PointCorrespondences<T>,
    pub ct_order: [usize; 3],
    pub device_order: [usize; 3],
    /// Number of pairings compared because of edge-length ties.
    pub candidates: usize,
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Pairs vertices by edge role: opposite-longest with opposite-longest, and likewise for the
/// shortest and middle edges. Edges whose lengths agree within `tie_epsilon` (in either
/// triangle) are interchangeable; every pairing consistent with the ties is fitted and the
/// lowest-RMSD one is returned.
pub fn canonical_correspondence<T: Real>(
    ct: &[Vector3<T>; 3],
    device: &[Vector3<T>; 3],
    tie_epsilon: T,
    degeneracy_ratio: T,
) -> Result<TriangleCorrespondence<T>> {
    let a = canonical_triangle(ct, degeneracy_ratio)?;
    let b = canonical_triangle(device, degeneracy_ratio)?;
    // slot s holds the vertex opposite the s-th longest edge
    let tied = |s: usize| {
        (a.lengths_desc[s] - a.lengths_desc[s + 1]).abs() <= tie_epsilon
            || (b.lengths_desc[s] - b.lengths_desc[s + 1]).abs() <= tie_epsilon
    };
    let group = {
        let t01 = tied(0);
        let t12 = tied(1);
        let mut g = [0usize, 1, 2];
        if t01 {
            g[1] = g[0];
        }
        if t12 {
            g[2] = g[1];
        }
        g
    };
    // role order (opp e1, opp e2, opp e3) expressed in slots
    const ROLE_SLOTS: [usize; 3] = [0, 2, 1];
    let source: Vec<Vector3<T>> = ROLE_SLOTS.iter().map(|&s| ct[a.by_length[s]]).collect();
    let ct_order = ROLE_SLOTS.map(|s| a.by_length[s]);

    let mut best: Option<(T, [usize; 3])> = None;
    let mut candidates = 0;
    for perm in PERMUTATIONS {
        if (0..3).any(|s| group[perm[s]] != group[s]) {
            continue;
        }
        candidates += 1;
        let device_order = ROLE_SLOTS.map(|s| b.by_length[perm[s]]);
        let target: Vec<Vector3<T>> = device_order.iter().map(|&i| device[i]).collect();
        let fit = fit_unchecked(&source, &target);
        let r = rmsd(&fit, &source, &target);
        if best.is_none_or(|(br, _)| r < br) {
            best = Some((r, device_order));
        }
    }
    let (_, device_order) = best.expect("identity permutation always admissible");
    let target = device_order.iter().map(|&i| device[i]).collect();
    Ok(TriangleCorrespondence {
        correspondences: PointCorrespondences::new(source, target)?,
        ct_order,
        device_order,
        candidates,
    })
}

/// Outward-facing reference directions for a source/target triangle pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facing<T: Real> {
    pub source: Vector3<T>,
    pub target: Vector3<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlipAlignment<T: Real> {
    pub transform: RigidTransform<T>,
    pub rmsd: T,
    pub flipped: bool,
    /// `target` index paired with each `source` index in the returned fit.
    pub pairing: [usize; 3],
}

fn oriented_normal<T: Real>(tri: &[Vector3<T>], facing: &Vector3<T>) -> Vector3<T> {
    let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
    if n.dot(facing) < T::zero() {
        -n
    } else {
        n
    }
}

/// Rigid fit of three correspondences with normal-flip correction.
///
/// Without `facing` this is a plain closed-form fit. With it, the fit is accepted only if
/// the rotated CT normal agrees with the device normal; otherwise the correspondence is
/// exchanged and every alternative pairing whose normals agree is fitted, returning the
/// lowest-RMSD one with `flipped = true`.
pub fn align_with_flip<T: Real>(
    corr: &PointCorrespondences<T>,
    facing: Option<&Facing<T>>,
    degeneracy_ratio: T,
) -> Result<FlipAlignment<T>> {
    if corr.len() != 3 {
        return Err(Error::Precondition(format!(
            "flip alignment needs exactly 3 correspondences, got {}",
            corr.len()
        )));
    }
    let src: [Vector3<T>; 3] = [corr.source[0], corr.source[1], corr.source[2]];
    let dst: [Vector3<T>; 3] = [corr.target[0], corr.target[1], corr.target[2]];
    canonical_triangle(&src, degeneracy_ratio)?;
    canonical_triangle(&dst, degeneracy_ratio)?;

    let solve = |pairing: [usize; 3]| {
        let target: Vec<Vector3<T>> = pairing.iter().map(|&i| dst[i]).collect();
        let t = fit_unchecked(&src, &target);
        let r = rmsd(&t, &src, &target);
        (t, r)
    };
    let (transform, r) = solve([0, 1, 2]);
    let Some(facing) = facing else {
        return Ok(FlipAlignment {
            transform,
            rmsd: r,
            flipped: false,
            pairing: [0, 1, 2],
        });
    };

    let n_src = oriented_normal(&src, &facing.source);
    let n_dst = oriented_normal(&dst, &facing.target);
    let agrees = |t: &RigidTransform<T>| (t.rotation() * n_src).dot(&n_dst) >= T::zero();
    if agrees(&transform) {
        return Ok(FlipAlignment {
            transform,
            rmsd: r,
            flipped: false,
            pairing: [0, 1, 2],
        });
    }

    // Single-pair exchanges first, starting with the two endpoints of the longest edge
    // (source vertices 1 and 2 in role order), then the cyclic relabelings.
    const ALTERNATIVES: [[usize; 3]; 5] = [[0, 2, 1], [1, 0, 2], [2, 1, 0], [1, 2, 0], [2, 0, 1]];
    let mut best: Option<FlipAlignment<T>> = None;
    for pairing in ALTERNATIVES {
        let (t, rr) = solve(pairing);
        if !agrees(&t) {
            continue;
        }
        if best.as_ref().is_none_or(|b| rr < b.rmsd) {
            best = Some(FlipAlignment {
                transform: t,
                rmsd: rr,
                flipped: true,
                pairing,
            });
        }
    }
    Ok(best.unwrap_or(FlipAlignment {
        transform,
        rmsd: r,
        flipped: false,
        pairing: [0, 1, 2],
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig<T: Real> {
    /// Candidate device triangles examined per CT triangle.
    pub k: usize,
    pub scale_tolerance_mm: T,
    pub tie_epsilon_mm: T,
    pub degeneracy_ratio: T,
    /// A point inside the patient in CT coordinates; CT triangle normals face away from it.
    pub ct_body_center: Option<Vector3<T>>,
    /// Camera position in device coordinates; device triangle normals face toward it.
    pub device_camera: Option<Vector3<T>>,
}

impl<T: Real> Default for RegistrationConfig<T> {
    fn default() -> Self {
        Self {
            k: 4,
            scale_tolerance_mm: T::lit(5.0),
            tie_epsilon_mm: T::lit(0.5),
            degeneracy_ratio: T::lit(DEFAULT_DEGENERACY_RATIO),
            ct_body_center: None,
            device_camera: None,
        }
    }
}

impl<T: Real> RegistrationConfig<T> {
    pub const KEYS: [&'static str; 6] = [
        "k",
        "scale_tolerance_mm",
        "tie_epsilon_mm",
        "degeneracy_ratio",
        "ct_body_center_mm",
        "device_camera_mm",
    ];

    pub fn from_kv(kv: &KvBlock) -> Result<Self> {
        kv.check_keys(&Self::KEYS)?;
        let d = Self::default();
        let triple = |key: &str| -> Result<Option<Vector3<T>>> {
            Ok(kv.get_triple(key)?.map(|v| Vector3::new(T::lit(v[0]), T::lit(v[1]), T::lit(v[2]))))
        };
        let cfg = Self {
            k: kv.get_or("k", d.k)?,
            scale_tolerance_mm: T::lit(kv.get_or("scale_tolerance_mm", d.scale_tolerance_mm.to_f64_lossy())?),
            tie_epsilon_mm: T::lit(kv.get_or("tie_epsilon_mm", d.tie_epsilon_mm.to_f64_lossy())?),
            degeneracy_ratio: T::lit(kv.get_or("degeneracy_ratio", d.degeneracy_ratio.to_f64_lossy())?),
            ct_body_center: triple("ct_body_center_mm")?,
            device_camera: triple("device_camera_mm")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::default();
        kv.insert("k", self.k);
        kv.insert("scale_tolerance_mm", self.scale_tolerance_mm.to_f64_lossy());
        kv.insert("tie_epsilon_mm", self.tie_epsilon_mm.to_f64_lossy());
        kv.insert("degeneracy_ratio", self.degeneracy_ratio.to_f64_lossy());
        let fmt = |v: &Vector3<T>| {
            format!("{},{},{}", v.x.to_f64_lossy(), v.y.to_f64_lossy(), v.z.to_f64_lossy())
        };
        if let Some(c) = &self.ct_body_center {
            kv.insert("ct_body_center_mm", fmt(c));
        }
        if let Some(c) = &self.device_camera {
            kv.insert("device_camera_mm", fmt(c));
        }
        kv
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.scale_tolerance_mm >= T::zero()) || !(self.tie_epsilon_mm >= T::zero()) {
            return Err(Error::Config("tolerances must be non-negative".into()));
        }
        if !(self.degeneracy_ratio >= T::zero()) {
            return Err(Error::Config("degeneracy_ratio must be non-negative".into()));
        }
        if self.ct_body_center.is_some() != self.device_camera.is_some() {
            return Err(Error::Config(
                "ct_body_center_mm and device_camera_mm must be given together".into(),
            ));
        }
        Ok(())
    }

    fn facing(&self, ct: &[Vector3<T>], device: &[Vector3<T>]) -> Option<Facing<T>> {
        let (body, camera) = (self.ct_body_center?, self.device_camera?);
        let third = T::lit(1.0 / 3.0);
        let ct_c = (ct[0] + ct[1] + ct[2]) * third;
        let dev_c = (device[0] + device[1] + device[2]) * third;
        Some(Facing {
            source: ct_c - body,
            target: camera - dev_c,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult<T: Real> {
    /// CT → device.
    pub transform: RigidTransform<T>,
    pub matched_triangle: IndexedTriangle<T>,
    /// CT marker indices paired, position by position, with `device_indices`.
    pub ct_indices: [usize; 3],
    pub device_indices: [usize; 3],
    pub shape_distance: T,
    /// RMSD over all CT markers to their nearest device marker after alignment.
    pub rmsd: T,
    /// RMSD of the three matched pairs.
    pub triangle_rmsd: T,
    pub flipped: bool,
}

/// JSON shape of a [`RegistrationResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub transform: TransformRecord,
    pub rmsd: f64,
    pub triangle_rmsd: f64,
    pub shape_distance: f64,
    pub flipped: bool,
    pub ct_indices: [usize; 3],
    pub device_indices: [usize; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_ids: Option<[u32; 3]>,
}

impl<T: Real> RegistrationResult<T> {
    pub fn to_record(&self, device_ids: Option<&[u32]>) -> RegistrationRecord {
        RegistrationRecord {
            transform: self.transform.to_record(Some(self.rmsd)),
            rmsd: self.rmsd.to_f64_lossy(),
            triangle_rmsd: self.triangle_rmsd.to_f64_lossy(),
            shape_distance: self.shape_distance.to_f64_lossy(),
            flipped: self.flipped,
            ct_indices: self.ct_indices,
            device_indices: self.device_indices,
            device_ids: device_ids.map(|ids| self.device_indices.map(|i| ids[i])),
        }
    }
}

fn nearest_rmsd<T: Real>(transform: &RigidTransform<T>, ct: &[Vector3<T>], device: &KdTree<T, 3, ()>) -> T {
    let sse = ct.iter().fold(T::zero(), |acc, p| {
        let q = transform.apply(p);
        let hit = device.nearest_one(&[q.x, q.y, q.z]).expect("device markers present");
        acc + hit.distance_squared
    });
    (sse / T::from_usize(ct.len()).expect("count fits")).sqrt()
}

/// Registers CT markers against the device triangle table.
///
/// Every CT triangle is keyed and compared against its `k` nearest device triangles; those
/// within `scale_tolerance_mm` on the longest edge are aligned (with flip correction when
/// facing references are configured) and scored by the RMSD of all CT markers to their
/// nearest device marker. The best candidate by `(rmsd, shape distance, marker indices)`
/// wins.
pub fn register<T: Real>(
    ct_markers: &MarkerSet<T>,
    table: &TriangleTable<T>,
    config: &RegistrationConfig<T>,
) -> Result<RegistrationResult<T>> {
    config.validate()?;
    let ct = ct_markers.points();
    if ct.len() < 3 {
        return Err(Error::Precondition(format!(
            "registration needs at least 3 CT markers, got {}",
            ct.len()
        )));
    }
    if table.markers().len() < 3 {
        return Err(Error::InsufficientMarkers {
            found: table.markers().len(),
        });
    }
    if table.is_empty() {
        return Err(Error::NoMatch("device markers form no non-degenerate triangle".into()));
    }
    let device_tree: KdTree<T, 3, ()> =
        KdTree::build(table.markers().iter().map(|p| ([p.x, p.y, p.z], ())));

    let mut best: Option<RegistrationResult<T>> = None;
    let mut best_rejected: Option<(T, T, [usize; 3], [usize; 3])> = None;
    let mut ct_triangles = 0usize;

    for i in 0..ct.len() {
        for j in (i + 1)..ct.len() {
            for l in (j + 1)..ct.len() {
                let ids = [i, j, l];
                let pts = [ct[i], ct[j], ct[l]];
                let Ok(canon) = canonical_triangle(&pts, config.degeneracy_ratio) else {
                    continue;
                };
                ct_triangles += 1;
                for (dev_tri, shape_distance) in table.query_nearest(&canon.key, config.k) {
                    let scale_gap = (canon.key.e1 - dev_tri.key.e1).abs();
                    if scale_gap > config.scale_tolerance_mm {
                        let worse = best_rejected.as_ref().is_none_or(|(g, _, _, _)| scale_gap < *g);
                        if worse {
                            best_rejected = Some((scale_gap, shape_distance, ids, dev_tri.marker_indices));
                        }
                        continue;
                    }
                    let dev_pts = table.triangle_points(&dev_tri);
                    let corr = canonical_correspondence(&pts, &dev_pts, config.tie_epsilon_mm, config.degeneracy_ratio)?;
                    let ct_ordered = corr.ct_order.map(|o| pts[o]);
                    let dev_ordered = corr.device_order.map(|o| dev_pts[o]);
                    let facing = config.facing(&ct_ordered, &dev_ordered);
                    let aligned = align_with_flip(&corr.correspondences, facing.as_ref(), config.degeneracy_ratio)?;
                    let ct_indices = corr.ct_order.map(|o| ids[o]);
                    let device_indices = aligned
                        .pairing
                        .map(|p| dev_tri.marker_indices[corr.device_order[p]]);
                    let candidate = RegistrationResult {
                        transform: aligned.transform,
                        matched_triangle: dev_tri,
                        ct_indices,
                        device_indices,
                        shape_distance,
                        rmsd: nearest_rmsd(&aligned.transform, ct, &device_tree),
                        triangle_rmsd: aligned.rmsd,
                        flipped: aligned.flipped,
                    };
                    if best.as_ref().is_none_or(|b| better(&candidate, b)) {
                        best = Some(candidate);
                    }
                }
            }
        }
    }

    if ct_triangles == 0 {
        return Err(Error::DegenerateTriangle("every CT marker triple is degenerate".into()));
    }
    best.ok_or_else(|| match best_rejected {
        Some((gap, dist, ct_ids, dev_ids)) => Error::NoMatch(format!(
            "no candidate within scale tolerance {}; best rejected: ct {ct_ids:?} vs device {dev_ids:?}, shape distance {dist}, longest-edge gap {gap} mm",
            config.scale_tolerance_mm
        )),
        None => Error::NoMatch("no candidate triangles".into()),
    })
}

fn better<T: Real>(a: &RegistrationResult<T>, b: &RegistrationResult<T>) -> bool {
    let key = |r: &RegistrationResult<T>| {
        let mut dev = r.device_indices;
        dev.sort_unstable();
        let mut ct = r.ct_indices;
        ct.sort_unstable();
        (ct, dev)
    };
    a.rmsd
        .partial_cmp(&b.rmsd)
        .unwrap_or(Ordering::Equal)
        .then(a.shape_distance.partial_cmp(&b.shape_distance).unwrap_or(Ordering::Equal))
        .then(key(a).cmp(&key(b)))
        == Ordering::Less
}
