//! Rigid transforms and closed-form absolute orientation.
//!
//! [`absolute_orientation`] follows Horn's unit-quaternion formulation: the optimal rotation
//! is the eigenvector of the largest eigenvalue of a symmetric 4×4 matrix built from the
//! cross-covariance of the centered point sets. Because the solution is a unit quaternion
//! the result is always a proper rotation, even when the unconstrained orthogonal optimum
//! would be a reflection.

use nalgebra::{Matrix3, Matrix4, Rotation3, SMatrix, SVector, Unit, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Proper rotation plus translation: `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<T: Real> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
}

impl<T: Real> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> RigidTransform<T> {
    /// Validates orthonormality and `det = +1` within [`Real::validation_tolerance`].
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self> {
        let tol = T::validation_tolerance();
        let gram_err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if !(gram_err <= tol) {
            return Err(Error::Precondition(format!(
                "rotation is not orthonormal (max |RᵀR − I| = {gram_err})"
            )));
        }
        let det = rotation.determinant();
        if !((det - T::one()).abs() <= tol) {
            return Err(Error::Precondition(format!("rotation determinant is {det}, expected +1")));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::Precondition("translation is not finite".into()));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Rotation3<T>) -> Self {
        Self {
            rotation: rotation.into_inner(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized), then translation.
    pub fn from_axis_angle(axis: Vector3<T>, angle: T, translation: Vector3<T>) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self {
            rotation: rot.into_inner(),
            translation,
        }
    }

    /// From a (not necessarily normalized, non-zero) quaternion `(w, x, y, z)`.
    pub fn from_quaternion(q: Vector4<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation: quaternion_to_matrix(q),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    pub fn apply_all(&self, points: &[Vector3<T>]) -> Vec<Vector3<T>> {
        points.iter().map(|p| self.apply(p)).collect()
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let mut rotation = self.rotation * other.rotation;
        let drift = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if drift > T::lit(1e-12) {
            rotation = orthonormalize(&rotation);
        }
        Self {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in `[0, π]`, computed with `atan2` so tiny angles stay accurate.
    pub fn rotation_angle(&self) -> T {
        rotation_angle(&self.rotation)
    }

    /// Largest entry-wise difference in rotation and translation.
    pub fn max_abs_diff(&self, other: &Self) -> (T, T) {
        (
            (self.rotation - other.rotation).amax(),
            (self.translation - other.translation).amax(),
        )
    }

    pub fn cast<U: Real>(&self) -> RigidTransform<U> {
        RigidTransform {
            rotation: self.rotation.map(|v| U::lit(v.to_f64_lossy())),
            translation: self.translation.map(|v| U::lit(v.to_f64_lossy())),
        }
    }

    pub fn to_record(&self, rmsd: Option<T>) -> TransformRecord {
        let mut rotation = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                rotation[3 * r + c] = self.rotation[(r, c)].to_f64_lossy();
            }
        }
        TransformRecord {
            rotation,
            translation: [
                self.translation.x.to_f64_lossy(),
                self.translation.y.to_f64_lossy(),
                self.translation.z.to_f64_lossy(),
            ],
            rmsd: rmsd.map(|r| r.to_f64_lossy()),
        }
    }

    pub fn from_record(record: &TransformRecord) -> Result<Self> {
        let rotation = Matrix3::from_row_slice(&record.rotation.map(T::lit));
        let translation = Vector3::from_row_slice(&record.translation.map(T::lit));
        Self::new(rotation, translation)
    }
}

/// JSON shape of a transform: row-major rotation, translation, optional fit residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmsd: Option<f64>,
}

pub fn rotation_angle<T: Real>(r: &Matrix3<T>) -> T {
    let v = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    v.norm().atan2(r.trace() - T::one())
}

fn quaternion_to_matrix<T: Real>(q: Vector4<T>) -> Matrix3<T> {
    let q = q.normalize();
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let two = T::lit(2.0);
    Matrix3::new(
        w * w + x * x - y * y - z * z,
        two * (x * y - w * z),
        two * (x * z + w * y),
        two * (x * y + w * z),
        w * w - x * x + y * y - z * z,
        two * (y * z - w * x),
        two * (x * z - w * y),
        two * (y * z + w * x),
        w * w - x * x - y * y + z * z,
    )
}

fn orthonormalize<T: Real>(m: &Matrix3<T>) -> Matrix3<T> {
    let guess = Rotation3::from_matrix_unchecked(*m);
    Rotation3::from_matrix_eps(m, T::default_epsilon(), 0, guess).into_inner()
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues and the matching unit eigenvectors (as columns), unsorted.
pub fn symmetric_eigen<T: Real, const N: usize>(m: &SMatrix<T, N, N>) -> (SVector<T, N>, SMatrix<T, N, N>) {
    let mut a = *m;
    let mut v = SMatrix::<T, N, N>::identity();
    let scale = a.amax();
    if scale == T::zero() {
        return (a.diagonal(), v);
    }
    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..N {
            for q in (p + 1)..N {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= T::default_epsilon() * scale {
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta == T::zero() { T::one() } else { t };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..N {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..N {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..N {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diagonal(), v)
}

/// Paired source/target points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCorrespondences<T: Real> {
    pub source: Vec<Vector3<T>>,
    pub target: Vec<Vector3<T>>,
}

impl<T: Real> PointCorrespondences<T> {
    pub fn new(source: Vec<Vector3<T>>, target: Vec<Vector3<T>>) -> Result<Self> {
        if source.len() != target.len() {
            return Err(Error::Precondition(format!(
                "{} source points vs {} target points",
                source.len(),
                target.len()
            )));
        }
        Ok(Self { source, target })
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }
}

pub fn centroid<T: Real>(points: &[Vector3<T>]) -> Vector3<T> {
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + p);
    sum / T::from_usize(points.len().max(1)).expect("count fits")
}

/// Root-mean-square of `‖T(sᵢ) − dᵢ‖`.
pub fn rmsd<T: Real>(transform: &RigidTransform<T>, source: &[Vector3<T>], target: &[Vector3<T>]) -> T {
    if source.is_empty() {
        return T::zero();
    }
    let sse = source
        .iter()
        .zip(target)
        .fold(T::zero(), |acc, (s, d)| acc + (transform.apply(s) - d).norm_squared());
    (sse / T::from_usize(source.len()).expect("count fits")).sqrt()
}

/// Ratio below which the second principal extent counts as zero relative to the first.
fn collinearity_ratio<T: Real>() -> T {
    let eps_based = T::default_epsilon() * T::lit(1e3);
    let floor = T::lit(1e-9);
    if eps_based > floor {
        eps_based
    } else {
        floor
    }
}

/// Fails when the points are coincident or collinear: the second principal extent is
/// below `1e-9 ×` the first.
pub fn check_non_collinear<T: Real>(points: &[Vector3<T>]) -> Result<()> {
    let c = centroid(points);
    let scatter = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - c;
        acc + d * d.transpose()
    });
    let (vals, _) = symmetric_eigen(&scatter);
    let mut sorted = [vals[0], vals[1], vals[2]];
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let largest = sorted[0].max(T::zero()).sqrt();
    let middle = sorted[1].max(T::zero()).sqrt();
    if !(largest > T::zero()) {
        return Err(Error::DegenerateGeometry("all source points coincide".into()));
    }
    if middle < collinearity_ratio::<T>() * largest {
        return Err(Error::DegenerateGeometry(format!(
            "source points are collinear (principal extents {largest} vs {middle})"
        )));
    }
    Ok(())
}

/// Least-squares rigid fit `target ≈ R·source + t` over proper rotations. Returns the
/// transform and the residual RMSD.
pub fn absolute_orientation<T: Real>(corr: &PointCorrespondences<T>) -> Result<(RigidTransform<T>, T)> {
    if corr.source.len() != corr.target.len() {
        return Err(Error::Precondition("source and target lengths differ".into()));
    }
    if corr.len() < 3 {
        return Err(Error::Precondition(format!(
            "at least 3 correspondences required, got {}",
            corr.len()
        )));
    }
    check_non_collinear(&corr.source)?;
    let transform = fit_unchecked(&corr.source, &corr.target);
    let residual = rmsd(&transform, &corr.source, &corr.target);
    Ok((transform, residual))
}

/// Horn's quaternion solution without precondition checks.
pub(crate) fn fit_unchecked<T: Real>(source: &[Vector3<T>], target: &[Vector3<T>]) -> RigidTransform<T> {
    let cs = centroid(source);
    let ct = centroid(target);
    let s = source.iter().zip(target).fold(Matrix3::zeros(), |acc, (a, b)| {
        acc + (a - cs) * (b - ct).transpose()
    });
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    let n = Matrix4::new(
        sxx + syy + szz,
        syz - szy,
        szx - sxz,
        sxy - syx,
        syz - szy,
        sxx - syy - szz,
        sxy + syx,
        szx + sxz,
        szx - sxz,
        sxy + syx,
        -sxx + syy - szz,
        syz + szy,
        sxy - syx,
        szx + sxz,
        syz + szy,
        -sxx - syy + szz,
    );
    let (vals, vecs) = symmetric_eigen(&n);
    let best = (0..4)
        .max_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal))
        .expect("4 eigenvalues");
    let q: Vector4<T> = vecs.column(best).into_owned();
    let rotation = quaternion_to_matrix(q);
    RigidTransform {
        rotation,
        translation: ct - rotation * cs,
    }
}
