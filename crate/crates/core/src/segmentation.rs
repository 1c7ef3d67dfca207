//! Fiducial marker extraction from CT: threshold, label connected components,
//! keep components of the expected physical size, report their centroids.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::kv::KvBlock;
use crate::markers::{Frame, MarkerSet};
use crate::volume::Volume;

/// One bit per voxel, same ordering as the source [`Volume`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    dims: [usize; 3],
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: [usize; 3], bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.iter().product::<usize>() {
            return Err(Error::Precondition(format!(
                "mask has {} bits for dims {dims:?}",
                bits.len()
            )));
        }
        Ok(Self { dims, bits })
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        Self {
            dims,
            bits: vec![false; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.bits[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = self.index(i, j, k);
        self.bits[idx] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Six,
    Eighteen,
    #[default]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            6 => Some(Self::Six),
            18 => Some(Self::Eighteen),
            26 => Some(Self::TwentySix),
            _ => None,
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Self::Six => 6,
            Self::Eighteen => 18,
            Self::TwentySix => 26,
        }
    }

    /// Whether a non-zero offset with components in {-1, 0, 1} is a neighbor.
    #[inline]
    pub fn admits(self, d: [isize; 3]) -> bool {
        let manhattan = d.iter().map(|c| c.unsigned_abs()).sum::<usize>();
        match self {
            Self::Six => manhattan == 1,
            Self::Eighteen => (1..=2).contains(&manhattan),
            Self::TwentySix => manhattan >= 1,
        }
    }

    /// All neighbor offsets.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dk in -1..=1 {
            for dj in -1..=1 {
                for di in -1..=1 {
                    if self.admits([di, dj, dk]) {
                        out.push([di, dj, dk]);
                    }
                }
            }
        }
        out
    }

    /// Neighbor offsets that precede the center voxel in x-fastest scan order.
    fn backward_offsets(self) -> Vec<[isize; 3]> {
        self.offsets()
            .into_iter()
            .filter(|&[di, dj, dk]| dk < 0 || (dk == 0 && (dj < 0 || (dj == 0 && di < 0))))
            .collect()
    }
}

/// A maximal connected set of mask voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub label: u32,
    /// Member voxels in ascending scan order.
    pub voxel_indices: Vec<[usize; 3]>,
    pub voxel_count: usize,
    pub volume_mm3: f64,
}

/// Mask bit set iff voxel HU ≥ `hu_min`.
pub fn threshold_volume(volume: &Volume, hu_min: i16) -> BinaryMask {
    BinaryMask {
        dims: volume.dims(),
        bits: volume.voxels().iter().map(|&v| v >= hu_min).collect(),
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let grand = parent[parent[x as usize] as usize];
        parent[x as usize] = grand;
        x = grand;
    }
    x
}

/// Two-pass union-find labeling. Labels are `1..=K`, ordered by each component's first
/// voxel in scan order. `volume_mm3` is filled in with unit spacing; use
/// [`connected_components_in`] for physical volumes.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Component> {
    label_components(mask, connectivity, 1.0)
}

/// [`connected_components`] with `volume_mm3` computed from the volume's spacing.
pub fn connected_components_in(mask: &BinaryMask, connectivity: Connectivity, spacing: [f64; 3]) -> Vec<Component> {
    label_components(mask, connectivity, spacing.iter().product())
}

fn label_components(mask: &BinaryMask, connectivity: Connectivity, voxel_mm3: f64) -> Vec<Component> {
    let [nx, ny, nz] = mask.dims;
    let backward = connectivity.backward_offsets();
    let mut provisional = vec![0u32; mask.bits.len()];
    // parent[0] is an unused sentinel so provisional label 0 can mean background.
    let mut parent: Vec<u32> = vec![0];

    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * (j + ny * k);
                if !mask.bits[idx] {
                    continue;
                }
                let mut current = 0u32;
                for &[di, dj, dk] in &backward {
                    let (ni, nj, nk) = (i as isize + di, j as isize + dj, k as isize + dk);
                    if ni < 0 || nj < 0 || nk < 0 || ni >= nx as isize || nj >= ny as isize {
                        continue;
                    }
                    let nidx = ni as usize + nx * (nj as usize + ny * nk as usize);
                    let neighbor = provisional[nidx];
                    if neighbor == 0 {
                        continue;
                    }
                    let root = find(&mut parent, neighbor);
                    if current == 0 {
                        current = root;
                    } else if root != current {
                        let (lo, hi) = if root < current { (root, current) } else { (current, root) };
                        parent[hi as usize] = lo;
                        current = lo;
                    }
                }
                if current == 0 {
                    current = parent.len() as u32;
                    parent.push(current);
                }
                provisional[idx] = current;
            }
        }
    }

    let mut final_label = vec![0u32; parent.len()];
    let mut components: Vec<Component> = Vec::new();
    for (idx, &p) in provisional.iter().enumerate() {
        if p == 0 {
            continue;
        }
        let root = find(&mut parent, p) as usize;
        if final_label[root] == 0 {
            components.push(Component {
                label: components.len() as u32 + 1,
                voxel_indices: Vec::new(),
                voxel_count: 0,
                volume_mm3: 0.0,
            });
            final_label[root] = components.len() as u32;
        }
        let comp = &mut components[final_label[root] as usize - 1];
        let i = idx % nx;
        let rest = idx / nx;
        comp.voxel_indices.push([i, rest % ny, rest / ny]);
    }
    for c in &mut components {
        c.voxel_count = c.voxel_indices.len();
        c.volume_mm3 = c.voxel_count as f64 * voxel_mm3;
    }
    components
}

/// Keeps components whose physical volume lies in the closed interval
/// `[expected·(1−tol), expected·(1+tol)]`, preserving order.
pub fn filter_by_size(
    components: Vec<Component>,
    spacing: [f64; 3],
    expected_mm3: f64,
    tolerance_fraction: f64,
) -> Result<Vec<Component>> {
    if !(expected_mm3 > 0.0 && expected_mm3.is_finite()) {
        return Err(Error::Precondition(format!("expected_mm3 must be > 0, got {expected_mm3}")));
    }
    if !(tolerance_fraction > 0.0 && tolerance_fraction < 1.0) {
        return Err(Error::Precondition(format!(
            "tolerance_fraction must be in (0, 1), got {tolerance_fraction}"
        )));
    }
    let voxel_mm3: f64 = spacing.iter().product();
    let lo = expected_mm3 * (1.0 - tolerance_fraction);
    let hi = expected_mm3 * (1.0 + tolerance_fraction);
    Ok(components
        .into_iter()
        .map(|mut c| {
            c.volume_mm3 = c.voxel_count as f64 * voxel_mm3;
            c
        })
        .filter(|c| c.volume_mm3 >= lo && c.volume_mm3 <= hi)
        .collect())
}

/// Unweighted mean of member voxel centers in world coordinates.
pub fn component_centroid(component: &Component, volume: &Volume) -> Result<Vector3<f64>> {
    if component.voxel_indices.is_empty() {
        return Err(Error::Precondition("centroid of an empty component".into()));
    }
    let sum = component
        .voxel_indices
        .iter()
        .fold(Vector3::zeros(), |acc, &[i, j, k]| acc + volume.world(i, j, k));
    Ok(sum / component.voxel_indices.len() as f64)
}

/// Centroid weighted by `HU − hu_min + 1`, which is ≥ 1 for every member voxel.
pub fn component_weighted_centroid(component: &Component, volume: &Volume, hu_min: i16) -> Result<Vector3<f64>> {
    if component.voxel_indices.is_empty() {
        return Err(Error::Precondition("centroid of an empty component".into()));
    }
    let (sum, total) = component
        .voxel_indices
        .iter()
        .fold((Vector3::zeros(), 0.0), |(acc, w_acc), &[i, j, k]| {
            let w = (volume.get(i, j, k) as f64 - hu_min as f64 + 1.0).max(1.0);
            (acc + volume.world(i, j, k) * w, w_acc + w)
        });
    Ok(sum / total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationConfig {
    pub hu_min: i16,
    pub connectivity: Connectivity,
    pub expected_mm3: f64,
    pub tolerance_fraction: f64,
    pub intensity_weighted: bool,
}

impl SegmentationConfig {
    pub const DEFAULT_HU_MIN: i16 = 300;
    pub const DEFAULT_TOLERANCE: f64 = 0.5;

    /// Defaults for everything except the marker size, which has no sensible default.
    pub fn with_expected_mm3(expected_mm3: f64) -> Self {
        Self {
            hu_min: Self::DEFAULT_HU_MIN,
            connectivity: Connectivity::TwentySix,
            expected_mm3,
            tolerance_fraction: Self::DEFAULT_TOLERANCE,
            intensity_weighted: false,
        }
    }

    pub fn from_kv(kv: &KvBlock) -> Result<Self> {
        kv.check_keys(&[
            "hu_min",
            "connectivity",
            "expected_mm3",
            "tolerance_fraction",
            "intensity_weighted",
        ])?;
        let connectivity = kv.get_or::<u32>("connectivity", 26)?;
        let cfg = Self {
            hu_min: kv.get_or("hu_min", Self::DEFAULT_HU_MIN)?,
            connectivity: Connectivity::from_count(connectivity)
                .ok_or_else(|| Error::Config(format!("connectivity must be 6, 18 or 26, got {connectivity}")))?,
            expected_mm3: kv.require("expected_mm3")?,
            tolerance_fraction: kv.get_or("tolerance_fraction", Self::DEFAULT_TOLERANCE)?,
            intensity_weighted: kv.get_or("intensity_weighted", false)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::default();
        kv.insert("hu_min", self.hu_min);
        kv.insert("connectivity", self.connectivity.count());
        kv.insert("expected_mm3", self.expected_mm3);
        kv.insert("tolerance_fraction", self.tolerance_fraction);
        kv.insert("intensity_weighted", self.intensity_weighted);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.expected_mm3 > 0.0 && self.expected_mm3.is_finite()) {
            return Err(Error::Config(format!("expected_mm3 must be > 0, got {}", self.expected_mm3)));
        }
        if !(self.tolerance_fraction > 0.0 && self.tolerance_fraction < 1.0) {
            return Err(Error::Config(format!(
                "tolerance_fraction must be in (0, 1), got {}",
                self.tolerance_fraction
            )));
        }
        Ok(())
    }
}

/// Summary of a kept component, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedMarker {
    pub label: u32,
    pub voxel_count: usize,
    pub volume_mm3: f64,
    pub centroid: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationReport {
    pub components_found: usize,
    pub markers: Vec<DetectedMarker>,
}

impl SegmentationReport {
    /// Centroids in component order, with ids `0..n`.
    pub fn marker_set(&self) -> MarkerSet<f64> {
        let ids = (0..self.markers.len() as u32).collect();
        MarkerSet::with_ids(Frame::Ct, self.markers.iter().map(|m| m.centroid).collect(), Some(ids))
            .expect("centroids are finite")
    }
}

/// Runs the full pipeline but does not enforce the three-marker minimum.
pub fn segment_volume(volume: &Volume, config: &SegmentationConfig) -> Result<SegmentationReport> {
    config.validate()?;
    let mask = threshold_volume(volume, config.hu_min);
    let components = connected_components_in(&mask, config.connectivity, volume.spacing());
    let components_found = components.len();
    let kept = filter_by_size(components, volume.spacing(), config.expected_mm3, config.tolerance_fraction)?;
    let markers = kept
        .iter()
        .map(|c| {
            let centroid = if config.intensity_weighted {
                component_weighted_centroid(c, volume, config.hu_min)?
            } else {
                component_centroid(c, volume)?
            };
            Ok(DetectedMarker {
                label: c.label,
                voxel_count: c.voxel_count,
                volume_mm3: c.volume_mm3,
                centroid,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SegmentationReport {
        components_found,
        markers,
    })
}

/// Threshold → components → size filter → centroids, in the CT frame.
/// Fails with [`Error::InsufficientMarkers`] when fewer than three markers survive.
pub fn segment_markers(volume: &Volume, config: &SegmentationConfig) -> Result<MarkerSet<f64>> {
    let report = segment_volume(volume, config)?;
    if report.markers.len() < 3 {
        return Err(Error::InsufficientMarkers {
            found: report.markers.len(),
        });
    }
    Ok(report.marker_set())
}
