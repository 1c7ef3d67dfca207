//! Point-to-point Iterative Closest Point baseline.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_non_collinear, fit_unchecked, RigidTransform, TransformRecord};
use crate::kdtree::KdTree;
use crate::kv::KvBlock;
use crate::markers::MarkerSet;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct IcpConfig<T: Real> {
    pub max_iterations: usize,
    /// Stop once the RMSD changes by less than this between iterations (mm).
    pub rmsd_delta_tolerance: T,
    pub initial_transform: RigidTransform<T>,
}

impl<T: Real> Default for IcpConfig<T> {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            rmsd_delta_tolerance: T::lit(1e-6),
            initial_transform: RigidTransform::identity(),
        }
    }
}

impl<T: Real> IcpConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.rmsd_delta_tolerance > T::zero()) {
            return Err(Error::Config("rmsd_delta_tolerance must be > 0".into()));
        }
        Ok(())
    }

    /// Keys: `max_iterations`, `rmsd_delta_tolerance`, and optionally `initial_rotation`
    /// (9 values, row-major) with `initial_translation` (3 values).
    pub fn from_kv(kv: &KvBlock) -> Result<Self> {
        kv.check_keys(&["max_iterations", "rmsd_delta_tolerance", "initial_rotation", "initial_translation"])?;
        let d = Self::default();
        let rotation = kv.get_list::<f64>("initial_rotation")?;
        let translation = kv.get_triple("initial_translation")?;
        let initial_transform = match (rotation, translation) {
            (None, None) => d.initial_transform,
            (r, t) => {
                let rotation = match r {
                    Some(r) if r.len() == 9 => r.try_into().expect("length checked"),
                    Some(_) => return Err(Error::Config("initial_rotation needs 9 values".into())),
                    None => [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                };
                let record = TransformRecord {
                    rotation,
                    translation: t.unwrap_or([0.0; 3]),
                    rmsd: None,
                };
                RigidTransform::from_record(&record)?
            }
        };
        let cfg = Self {
            max_iterations: kv.get_or("max_iterations", d.max_iterations)?,
            rmsd_delta_tolerance: T::lit(kv.get_or("rmsd_delta_tolerance", d.rmsd_delta_tolerance.to_f64_lossy())?),
            initial_transform,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult<T: Real> {
    pub transform: RigidTransform<T>,
    /// Nearest-neighbor RMSD under `transform`.
    pub rmsd: T,
    pub iterations_used: usize,
    pub converged: bool,
    /// Nearest-neighbor RMSD at the start of each iteration, followed by the final value.
    pub rmsd_history: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpRecord {
    pub transform: TransformRecord,
    pub rmsd: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

impl<T: Real> IcpResult<T> {
    pub fn to_record(&self) -> IcpRecord {
        IcpRecord {
            transform: self.transform.to_record(Some(self.rmsd)),
            rmsd: self.rmsd.to_f64_lossy(),
            iterations_used: self.iterations_used,
            converged: self.converged,
        }
    }
}

fn matches<T: Real>(
    transform: &RigidTransform<T>,
    source: &[Vector3<T>],
    tree: &KdTree<T, 3, ()>,
) -> (Vec<Vector3<T>>, T) {
    let mut matched = Vec::with_capacity(source.len());
    let mut sse = T::zero();
    for p in source {
        let q = transform.apply(p);
        let hit = tree.nearest_one(&[q.x, q.y, q.z]).expect("target non-empty");
        let t = tree.point(hit.id);
        matched.push(Vector3::new(t[0], t[1], t[2]));
        sse += hit.distance_squared;
    }
    let n = T::from_usize(source.len()).expect("count fits");
    (matched, (sse / n).sqrt())
}

/// Aligns `source` onto `target` by alternating nearest-neighbor matching and closed-form
/// rigid fitting. A step that would raise the RMSD is discarded and ends the run, so the
/// recorded RMSD sequence never increases.
pub fn icp_register<T: Real>(source: &MarkerSet<T>, target: &MarkerSet<T>, config: &IcpConfig<T>) -> Result<IcpResult<T>> {
    config.validate()?;
    let src = source.points();
    if src.len() < 3 {
        return Err(Error::Precondition(format!("ICP needs at least 3 source points, got {}", src.len())));
    }
    if target.len() < 3 {
        return Err(Error::Precondition(format!("ICP needs at least 3 target points, got {}", target.len())));
    }
    check_non_collinear(src)?;
    let tree: KdTree<T, 3, ()> = KdTree::build(target.points().iter().map(|p| ([p.x, p.y, p.z], ())));

    let mut current = config.initial_transform;
    let (mut matched, mut current_rmsd) = matches(&current, src, &tree);
    let mut history = vec![current_rmsd];
    let mut converged = false;
    let mut iterations_used = 0;

    while iterations_used < config.max_iterations {
        iterations_used += 1;
        let candidate = fit_unchecked(src, &matched);
        let (next_matched, next_rmsd) = matches(&candidate, src, &tree);
        if next_rmsd > current_rmsd {
            converged = true;
            break;
        }
        let delta = current_rmsd - next_rmsd;
        current = candidate;
        current_rmsd = next_rmsd;
        matched = next_matched;
        history.push(current_rmsd);
        if delta < config.rmsd_delta_tolerance {
            converged = true;
            break;
        }
    }

    Ok(IcpResult {
        transform: current,
        rmsd: current_rmsd,
        iterations_used,
        converged,
        rmsd_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{absolute_orientation, PointCorrespondences};
    use crate::markers::Frame;

    fn cloud() -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(100.0, 10.0, 5.0),
            Vector3::new(20.0, 90.0, -10.0),
            Vector3::new(60.0, 50.0, 70.0),
            Vector3::new(-40.0, 30.0, 20.0),
            Vector3::new(10.0, -60.0, 40.0),
        ]
    }

    fn set(frame: Frame, pts: Vec<Vector3<f64>>) -> MarkerSet<f64> {
        MarkerSet::new(frame, pts).unwrap()
    }

    #[test]
    fn fixed_point_converges_immediately() {
        let s = set(Frame::Ct, cloud());
        let r = icp_register(&s, &set(Frame::Device, cloud()), &IcpConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations_used <= 2);
        assert!(r.rmsd < 1e-9);
    }

    #[test]
    fn small_perturbation_recovered() {
        let truth = RigidTransform::from_axis_angle(Vector3::new(0.3, 1.0, -0.2), 5f64.to_radians(), Vector3::new(2.0, 0.0, 0.0));
        let r = icp_register(
            &set(Frame::Ct, cloud()),
            &set(Frame::Device, truth.apply_all(&cloud())),
            &IcpConfig::default(),
        )
        .unwrap();
        assert!(r.converged);
        let (dr, dt) = r.transform.max_abs_diff(&truth);
        assert!(dr < 1e-6 && dt < 1e-6, "{dr} {dt}");
        assert!(r.rmsd_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn large_rotation_keeps_monotone_history() {
        let truth = RigidTransform::from_axis_angle(Vector3::new(0.0, 0.0, 1.0), 170f64.to_radians(), Vector3::zeros());
        let r = icp_register(
            &set(Frame::Ct, cloud()),
            &set(Frame::Device, truth.apply_all(&cloud())),
            &IcpConfig::default(),
        )
        .unwrap();
        assert!(r.rmsd_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.iterations_used <= 100);
    }

    #[test]
    fn ground_truth_init_does_not_move() {
        let truth = RigidTransform::from_axis_angle(Vector3::new(1.0, 1.0, 1.0), 2.5, Vector3::new(-30.0, 4.0, 9.0));
        let cfg = IcpConfig {
            initial_transform: truth,
            ..IcpConfig::default()
        };
        let r = icp_register(&set(Frame::Ct, cloud()), &set(Frame::Device, truth.apply_all(&cloud())), &cfg).unwrap();
        let (dr, dt) = r.transform.max_abs_diff(&truth);
        assert!(dr < 1e-12 && dt < 1e-9);
    }

    #[test]
    fn single_step_equals_closed_form() {
        let src = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(50.0, 0.0, 0.0), Vector3::new(0.0, 40.0, 0.0)];
        let truth = RigidTransform::from_axis_angle(Vector3::new(0.0, 0.0, 1.0), 0.05, Vector3::new(1.0, 1.0, 0.5));
        let dst = truth.apply_all(&src);
        let cfg = IcpConfig {
            max_iterations: 1,
            ..IcpConfig::default()
        };
        let r = icp_register(&set(Frame::Ct, src.clone()), &set(Frame::Device, dst.clone()), &cfg).unwrap();
        let (closed, _) = absolute_orientation(&PointCorrespondences::new(src, dst).unwrap()).unwrap();
        assert_eq!(r.transform, closed);
    }

    #[test]
    fn degenerate_source_rejected() {
        let line: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let r = icp_register(&set(Frame::Ct, line), &set(Frame::Device, cloud()), &IcpConfig::default());
        assert!(matches!(r, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn config_from_kv() {
        let kv = KvBlock::parse("max_iterations = 7\ninitial_translation = 1,2,3").unwrap();
        let cfg = IcpConfig::<f64>::from_kv(&kv).unwrap();
        assert_eq!(cfg.max_iterations, 7);
        assert_eq!(*cfg.initial_transform.translation(), Vector3::new(1.0, 2.0, 3.0));
        assert!(IcpConfig::<f64>::from_kv(&KvBlock::parse("max_iterations = 0").unwrap()).is_err());
    }
}
