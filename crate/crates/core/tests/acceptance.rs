//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if any fail.

mod common;

use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use trireg::bench::{
    records_to_csv, summarize, trial_seed, MethodConfigs, SceneRng, Stat, TransformSpec,
};
use trireg::geometry::rotation_angle;
use trireg::mesh::sphere_phantom;
use trireg::segmentation::segment_volume;
use trireg::{
    absolute_orientation, generate_scene, icp_register, marching_cubes, register, run_benchmark, segment_markers,
    IcpConfig, MarkerSet, Method, PointCorrespondences, RegistrationConfig, RigidTransform, SceneSpec,
    SegmentationConfig, TriangleKey, TriangleTable, Volume,
};

use common::{binomial, constrained_optimum, kabsch};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn errors(est: &RigidTransform<f64>, truth: &RigidTransform<f64>) -> (f64, f64) {
    let rot = rotation_angle(&(est.rotation() * truth.rotation().transpose()));
    (rot, (est.translation() - truth.translation()).norm())
}

fn zero_noise_recovery() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    let mut failures = 0;
    for trial in 0..1000 {
        let spec = SceneSpec {
            n_markers: 3,
            seed: trial_seed(0xACCE_0001, trial),
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).expect("scene");
        let table = TriangleTable::from_markers(&scene.device_markers, 1e-6);
        match register(&scene.ct_markers, &table, &RegistrationConfig::default()) {
            Ok(r) => {
                let (dr, dt) = errors(&r.transform, &scene.truth);
                worst = (worst.0.max(dr), worst.1.max(dt));
            }
            Err(_) => failures += 1,
        }
    }
    outcome(
        failures == 0 && worst.0 < 1e-6 && worst.1 < 1e-6,
        format!("1000 scenes, failures {failures}, max rotation error {:.3e} rad, max translation error {:.3e} mm", worst.0, worst.1),
    )
}

fn marker_count_trend() -> Outcome {
    let counts = [4usize, 6, 8, 10];
    let cells: Vec<SceneSpec> = counts
        .iter()
        .map(|&n| SceneSpec {
            n_markers: n,
            noise_sigma_mm: 2.0,
            seed: 0xACCE_0002,
            ..SceneSpec::default()
        })
        .collect();
    let records = run_benchmark(&cells, &[Method::Triangle], 200, &MethodConfigs::default()).expect("bench");
    let summary = summarize(&records);
    let stats: Vec<Stat> = summary.iter().map(|s| s.tre_mm.expect("successes")).collect();
    let failures: usize = summary.iter().map(|s| s.failures).sum();
    let mut steps_ok = true;
    for w in stats.windows(2) {
        let se = (w[0].standard_error().unwrap().powi(2) + w[1].standard_error().unwrap().powi(2)).sqrt();
        steps_ok &= w[1].mean <= w[0].mean + se;
    }
    let means: Vec<String> = counts
        .iter()
        .zip(&stats)
        .map(|(n, s)| format!("{n}: {:.3}±{:.3}", s.mean, s.std.unwrap()))
        .collect();
    outcome(
        failures == 0 && stats[3].mean < stats[0].mean && steps_ok,
        format!("mean TRE mm by marker count [{}], failures {failures}", means.join(", ")),
    )
}

fn registration_speed() -> Outcome {
    let mut worst = Vec::new();
    for (n, budget_us) in [(3usize, 50_000.0), (10, 200_000.0)] {
        let cell = SceneSpec {
            n_markers: n,
            noise_sigma_mm: 1.0,
            seed: 0xACCE_0003,
            ..SceneSpec::default()
        };
        let records = run_benchmark(&[cell], &[Method::Triangle], 50, &MethodConfigs::default()).expect("bench");
        let max = records.iter().map(|r| r.time_us).fold(0.0, f64::max);
        let mean = records.iter().map(|r| r.time_us).sum::<f64>() / records.len() as f64;
        worst.push((n, max, mean, budget_us));
    }
    let pass = worst.iter().all(|(_, max, _, budget)| max < budget);
    let detail = worst
        .iter()
        .map(|(n, max, mean, _)| format!("{n} markers: mean {mean:.1} us, max {max:.1} us"))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn segmentation_budget() -> Outcome {
    let dims = [256, 256, 256];
    let spacing = [0.9, 0.9, 1.2];
    let body_center = Vector3::new(115.0, 115.0, 153.0);
    let radius = 3.0;
    let markers = [
        Vector3::new(115.3, 30.1, 150.2),
        Vector3::new(190.45, 120.7, 100.9),
        Vector3::new(60.2, 170.33, 200.55),
    ];
    let volume = Volume::from_fn(dims, spacing, [0.0; 3], |p| {
        if markers.iter().any(|m| (p - m).norm() <= radius) {
            return 2000;
        }
        let d = p - body_center;
        if (d.x / 95.0).powi(2) + (d.y / 95.0).powi(2) + (d.z / 140.0).powi(2) > 1.0 {
            return -1000;
        }
        // spine-like dense cylinder, far larger than a marker
        if (d.x * d.x + (d.y + 30.0).powi(2)).sqrt() < 12.0 {
            return 700;
        }
        40
    })
    .expect("volume");
    let config = SegmentationConfig::with_expected_mm3(4.0 / 3.0 * std::f64::consts::PI * radius.powi(3));
    let start = Instant::now();
    let found = segment_markers(&volume, &config);
    let secs = start.elapsed().as_secs_f64();
    let Ok(found) = found else {
        return outcome(false, format!("segmentation failed: {:?}", found.err()));
    };
    let tol = 0.5 * 1.2;
    let worst = markers
        .iter()
        .map(|m| {
            found
                .points()
                .iter()
                .map(|p| (p - m).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    outcome(
        found.len() == 3 && secs < 5.0 && worst <= tol,
        format!("256^3 in {secs:.2} s, {} markers, max centroid error {worst:.3} mm (limit {tol} mm)", found.len()),
    )
}

fn horn_oracle() -> Outcome {
    let mut rng = SceneRng::new(0xACCE_0005);
    let mut max_diff = 0.0f64;
    let mut improper = 0;
    for case in 0..500 {
        let n = 3 + rng.below(18);
        let src: Vec<Vector3<f64>> = (0..n)
            .map(|_| Vector3::new(rng.uniform_in(-100.0, 100.0), rng.uniform_in(-100.0, 100.0), rng.uniform_in(-100.0, 100.0)))
            .collect();
        let truth = RigidTransform::from_quaternion(rng.rotation(), Vector3::new(rng.normal(), rng.normal(), rng.normal()) * 50.0);
        let mirror = case % 5 == 0;
        let dst: Vec<Vector3<f64>> = src
            .iter()
            .map(|p| {
                let q = truth.apply(p) + Vector3::new(rng.normal(), rng.normal(), rng.normal()) * 2.0;
                if mirror {
                    Vector3::new(-q.x, q.y, q.z)
                } else {
                    q
                }
            })
            .collect();
        let (fit, _) = absolute_orientation(&PointCorrespondences::new(src.clone(), dst.clone()).unwrap()).unwrap();
        let (r, t) = kabsch(&src, &dst);
        let diff = (fit.rotation() - r).amax().max((fit.translation() - t).amax());
        max_diff = max_diff.max(diff);
        if (fit.rotation().determinant() - 1.0).abs() > 1e-9 {
            improper += 1;
        }
    }
    outcome(
        max_diff < 1e-9 && improper == 0,
        format!("500 sets (100 mirrored), max entry difference {max_diff:.3e}, improper {improper}"),
    )
}

fn flip_correctness() -> Outcome {
    let mut rng = SceneRng::new(0xACCE_0006);
    let (mut flipped, mut proper, mut max_gap, mut failures) = (0, 0, 0.0f64, 0);
    for _ in 0..200 {
        // scalene triangle on the skin, body center behind it
        let ct: [Vector3<f64>; 3] = std::array::from_fn(|_| {
            Vector3::new(rng.uniform_in(-60.0, 60.0), rng.uniform_in(-60.0, 60.0), rng.uniform_in(-5.0, 5.0))
        });
        let centroid = (ct[0] + ct[1] + ct[2]) / 3.0;
        let body = centroid - Vector3::new(0.0, 0.0, 80.0);
        let truth = RigidTransform::from_quaternion(rng.rotation(), Vector3::new(rng.normal(), rng.normal(), rng.normal()) * 100.0);
        let moved = truth.apply_all(&ct);
        let dev_c = (moved[0] + moved[1] + moved[2]) / 3.0;
        let camera = truth.apply(&(centroid + Vector3::new(0.0, 0.0, 400.0)));
        // mirror in the triangle's own plane: reflect across the plane through the centroid
        // that contains the plane normal and a random in-plane direction
        let plane_n = (moved[1] - moved[0]).cross(&(moved[2] - moved[0])).normalize();
        let in_plane = plane_n.cross(&rng.unit_vector()).normalize();
        let mirror_axis = plane_n.cross(&in_plane);
        let device: Vec<Vector3<f64>> = moved
            .iter()
            .map(|p| p - mirror_axis * (2.0 * (p - dev_c).dot(&mirror_axis)))
            .collect();

        let config = RegistrationConfig {
            ct_body_center: Some(body),
            device_camera: Some(camera),
            ..RegistrationConfig::default()
        };
        let ct_set = MarkerSet::new(trireg::Frame::Ct, ct.to_vec()).unwrap();
        let table = TriangleTable::from_markers(&MarkerSet::new(trireg::Frame::Device, device.clone()).unwrap(), 1e-6);
        let Ok(result) = register(&ct_set, &table, &config) else {
            failures += 1;
            continue;
        };
        flipped += result.flipped as usize;
        let r = result.transform.rotation();
        if (r.determinant() - 1.0).abs() < 1e-9 && (r.transpose() * r - Matrix3::identity()).amax() < 1e-9 {
            proper += 1;
        }
        let target = [device[0], device[1], device[2]];
        let optimum = constrained_optimum(&ct, &target, &(centroid - body), &(camera - dev_c)).expect("some pairing agrees");
        max_gap = max_gap.max((result.triangle_rmsd - optimum).abs());
    }
    outcome(
        failures == 0 && flipped == 200 && proper == 200 && max_gap < 1e-9,
        format!("200 scenes, flipped {flipped}, proper {proper}, failures {failures}, max |rmsd - constrained optimum| {max_gap:.3e} mm"),
    )
}

fn icp_properties() -> Outcome {
    // monotone RMSD history
    let mut non_monotone = 0;
    for trial in 0..100 {
        let scene = generate_scene(&SceneSpec {
            n_markers: 6,
            noise_sigma_mm: 2.0,
            seed: trial_seed(0xACCE_0071, trial),
            ..SceneSpec::default()
        })
        .unwrap();
        let r = icp_register(&scene.ct_markers, &scene.device_markers, &IcpConfig::default()).unwrap();
        if r.rmsd_history.windows(2).any(|w| w[1] > w[0]) {
            non_monotone += 1;
        }
    }

    // small perturbations, zero noise
    let mut rng = SceneRng::new(0xACCE_0072);
    let mut worst = (0.0f64, 0.0f64);
    for trial in 0..100 {
        let angle = rng.uniform_in(0.0, 10.0).to_radians();
        let scene = generate_scene(&SceneSpec {
            n_markers: 6,
            true_transform: TransformSpec::RandomAngle {
                angle_rad: angle,
                translation_half_extent_mm: 5.0 / 3f64.sqrt(),
            },
            seed: trial_seed(0xACCE_0073, trial),
            ..SceneSpec::default()
        })
        .unwrap();
        let r = icp_register(&scene.ct_markers, &scene.device_markers, &IcpConfig::default()).unwrap();
        let (dr, dt) = errors(&r.transform, &scene.truth);
        worst = (worst.0.max(dr), worst.1.max(dt));
    }

    // robustness comparison
    let cell = SceneSpec {
        n_markers: 6,
        noise_sigma_mm: 2.0,
        true_transform: TransformSpec::RandomAngle {
            angle_rad: 30f64.to_radians(),
            translation_half_extent_mm: 10.0,
        },
        seed: 0xACCE_0074,
        ..SceneSpec::default()
    };
    let records = run_benchmark(&[cell], &[Method::Triangle, Method::Icp], 200, &MethodConfigs::default()).unwrap();
    let summary = summarize(&records);
    let (tri, icp) = (&summary[0], &summary[1]);
    let (tri_tre, icp_tre) = (tri.tre_mm.unwrap().mean, icp.tre_mm.unwrap().mean);

    let pass = non_monotone == 0
        && worst.0 < 1e-6
        && worst.1 < 1e-6
        && tri.failures == 0
        && icp.failures == 0
        && tri_tre <= icp_tre;
    outcome(
        pass,
        format!(
            "non-monotone {non_monotone}/100; small perturbation max errors {:.3e} rad, {:.3e} mm; mean TRE triangle {tri_tre:.3} mm vs ICP {icp_tre:.3} mm (failures {}/{})",
            worst.0, worst.1, tri.failures, icp.failures
        ),
    )
}

fn table_combinatorics() -> Outcome {
    let mut rng = SceneRng::new(0xACCE_0008);
    let mut size_ok = true;
    let mut table = TriangleTable::<f64>::default();
    for n in 1..=12 {
        table.insert_marker(Vector3::new(rng.uniform_in(0.0, 300.0), rng.uniform_in(0.0, 300.0), rng.uniform_in(0.0, 300.0)));
        if n >= 3 {
            size_ok &= table.len() == binomial(n, 3);
        }
    }
    let mut mismatches = 0;
    for _ in 0..50 {
        let r3 = rng.uniform_in(0.5, 1.0);
        let r2 = rng.uniform_in((1.0 - r3).max(0.0), r3);
        let key = TriangleKey { r2, r3, e1: 1.0 };
        let a = table.query_nearest(&key, 5);
        let b = table.query_brute_force(&key, 5);
        if a != b {
            mismatches += 1;
        }
    }
    outcome(
        size_ok && mismatches == 0,
        format!("sizes C(n,3) for n = 3..12: {size_ok}; {} stored, 50 queries, mismatches {mismatches}", table.len()),
    )
}

fn mesh_validity() -> Outcome {
    let v = sphere_phantom([56; 3], [1.0; 3], Vector3::new(27.5, 27.5, 27.5), 20.0, 1000, -1000).unwrap();
    let m = marching_cubes(&v, 0.0).unwrap();
    let analytic = 4.0 * std::f64::consts::PI * 400.0;
    let area_err = (m.surface_area() - analytic).abs() / analytic;
    let stl = m.stl_bytes();
    let pass = m.is_watertight()
        && m.euler_characteristic() == 2
        && area_err < 0.05
        && stl.len() == 84 + 50 * m.faces.len();
    outcome(
        pass,
        format!(
            "{} faces, watertight {}, chi {}, area error {:.2}%, STL {} bytes",
            m.faces.len(),
            m.is_watertight(),
            m.euler_characteristic(),
            area_err * 100.0,
            stl.len()
        ),
    )
}

fn pipeline_outputs() -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let scene = generate_scene(&SceneSpec {
        n_markers: 7,
        noise_sigma_mm: 1.0,
        decoy_count: 2,
        dropout_count: 1,
        seed: 0xACCE_0010,
        ..SceneSpec::default()
    })
    .unwrap();
    out.push(scene.ct_markers.to_csv_string().into_bytes());
    out.push(scene.device_markers.to_csv_string().into_bytes());

    let table = TriangleTable::from_markers(&scene.device_markers, 1e-6);
    let reg = register(&scene.ct_markers, &table, &RegistrationConfig::default()).unwrap();
    out.push(serde_json::to_vec(&reg.to_record(scene.device_markers.ids())).unwrap());
    let icp = icp_register(&scene.ct_markers, &scene.device_markers, &IcpConfig::default()).unwrap();
    out.push(serde_json::to_vec(&icp.to_record()).unwrap());

    let mut vol = sphere_phantom([40; 3], [1.0; 3], Vector3::new(19.5, 19.5, 19.5), 14.0, 40, -1000).unwrap();
    for c in [[6, 19, 19], [19, 6, 19], [19, 19, 33]] {
        for d in 0..3 {
            vol.set(c[0] + d % 2, c[1] + d / 2, c[2], 2000);
        }
    }
    let seg = segment_volume(&vol, &SegmentationConfig::with_expected_mm3(3.0)).unwrap();
    out.push(seg.marker_set().to_csv_string().into_bytes());
    out.push(vol.to_bytes());
    let mesh = marching_cubes(&vol, -300.0).unwrap();
    out.push(mesh.stl_bytes());
    out.push(mesh.obj_string().into_bytes());

    let cells = vec![SceneSpec {
        n_markers: 5,
        noise_sigma_mm: 2.0,
        seed: 0xACCE_0011,
        ..SceneSpec::default()
    }];
    let mut records = run_benchmark(&cells, &[Method::Triangle, Method::Icp], 10, &MethodConfigs::default()).unwrap();
    for r in &mut records {
        r.time_us = 0.0;
    }
    out.push(records_to_csv(&records).unwrap().into_bytes());
    out.push(serde_json::to_vec(&summarize(&records)).unwrap());
    out
}

fn determinism() -> Outcome {
    let a = pipeline_outputs();
    let b = pipeline_outputs();
    let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    outcome(
        differing == 0,
        format!("{} stage outputs compared, {differing} differ", a.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("zero-noise exact recovery", zero_noise_recovery),
        ("marker-count TRE trend", marker_count_trend),
        ("registration speed", registration_speed),
        ("segmentation budget", segmentation_budget),
        ("closed-form fit matches SVD oracle", horn_oracle),
        ("flip correctness", flip_correctness),
        ("ICP baseline properties", icp_properties),
        ("triangle table combinatorics", table_combinatorics),
        ("mesh validity", mesh_validity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        failed += !o.pass as usize;
        println!(
            "criterion {:>2} {}: {} ({}; {:.1} s)",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
