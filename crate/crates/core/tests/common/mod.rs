//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};

/// Least-squares proper rigid fit via SVD of the cross-covariance (Kabsch with the
/// determinant sign correction). Returns `(R, t)` with `target ≈ R·source + t`.
pub fn kabsch(source: &[Vector3<f64>], target: &[Vector3<f64>]) -> (Matrix3<f64>, Vector3<f64>) {
    let n = source.len() as f64;
    let cs = source.iter().sum::<Vector3<f64>>() / n;
    let ct = target.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        h += (s - cs) * (t - ct).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let d = (v_t.transpose() * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let r = v_t.transpose() * correction * u.transpose();
    (r, ct - r * cs)
}

pub fn fit_rmsd(r: &Matrix3<f64>, t: &Vector3<f64>, source: &[Vector3<f64>], target: &[Vector3<f64>]) -> f64 {
    let sse: f64 = source
        .iter()
        .zip(target)
        .map(|(s, q)| (r * s + t - q).norm_squared())
        .sum();
    (sse / source.len() as f64).sqrt()
}

pub const PAIRINGS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

fn oriented_normal(tri: &[Vector3<f64>; 3], facing: &Vector3<f64>) -> Vector3<f64> {
    let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
    if n.dot(facing) < 0.0 {
        -n
    } else {
        n
    }
}

/// Minimum RMSD over all six vertex pairings whose proper fit maps the source normal
/// (oriented along `source_facing`) onto the target normal (oriented along
/// `target_facing`).
pub fn constrained_optimum(
    source: &[Vector3<f64>; 3],
    target: &[Vector3<f64>; 3],
    source_facing: &Vector3<f64>,
    target_facing: &Vector3<f64>,
) -> Option<f64> {
    let ns = oriented_normal(source, source_facing);
    let nt = oriented_normal(target, target_facing);
    PAIRINGS
        .iter()
        .filter_map(|p| {
            let tgt: Vec<Vector3<f64>> = p.iter().map(|&i| target[i]).collect();
            let (r, t) = kabsch(source, &tgt);
            ((r * ns).dot(&nt) >= 0.0).then(|| fit_rmsd(&r, &t, source, &tgt))
        })
        .min_by(|a, b| a.partial_cmp(b).unwrap())
}

pub fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}
