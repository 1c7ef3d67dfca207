use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trireg::mesh::sphere_phantom;
use trireg::{write_volume, RegistrationRecord, Volume};

fn trireg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trireg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn cube_phantom(dir: &Path, with_markers: bool) -> PathBuf {
    let mut v = Volume::filled([40, 40, 40], [1.0; 3], [0.0; 3], 40).unwrap();
    if with_markers {
        for corner in [[4, 4, 4], [30, 6, 10], [12, 28, 30]] {
            for k in 0..4 {
                for j in 0..4 {
                    for i in 0..4 {
                        v.set(corner[0] + i, corner[1] + j, corner[2] + k, 2000);
                    }
                }
            }
        }
    }
    let p = dir.join(if with_markers { "markers.vol" } else { "tissue.vol" });
    write_volume(&v, &p).unwrap();
    p
}

#[test]
fn segment_phantom_and_zero_case() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "seg.cfg", "expected_mm3 = 64\n");
    let out = dir.path().join("ct.csv");

    let vol = cube_phantom(dir.path(), true);
    let o = trireg(&["segment", "--volume", s(&vol), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.contains("ct,0,5.5,5.5,5.5"), "{text}");
    assert!(stderr(&o).contains("markers: 3"));

    let tissue = cube_phantom(dir.path(), false);
    let o = trireg(&["segment", "--volume", s(&tissue), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("insufficient markers: found 0"), "{err}");
    assert_eq!(err.lines().filter(|l| l.starts_with("error:")).count(), 1);

    let o = trireg(&["segment", "--volume", "/nonexistent.vol", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: io:"));
}

#[test]
fn simulate_feeds_register() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "scene.cfg", "n_markers = 6\nseed = 17\n");
    let prefix = dir.path().join("scene");
    let o = trireg(&["simulate", "--spec", s(&spec), "--out-prefix", s(&prefix)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let ct = dir.path().join("scene_ct.csv");
    let device = dir.path().join("scene_device.csv");
    let out = dir.path().join("reg.json");
    let o = trireg(&["register", "--ct", s(&ct), "--device", s(&device), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rec: RegistrationRecord = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(rec.rmsd < 1e-6);

    let truth: trireg::TransformRecord =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("scene_truth.json")).unwrap()).unwrap();
    for (a, b) in rec.transform.rotation.iter().zip(truth.rotation.iter()) {
        assert!((a - b).abs() < 1e-9);
    }

    let out = dir.path().join("icp.json");
    let o = trireg(&["icp", "--source", s(&ct), "--target", s(&device), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(std::fs::read_to_string(&out).unwrap().contains("\"iterations_used\""));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "scene.cfg", "n_markers = 5\nnoise_sigma_mm = 1.5\ndecoys = 2\nseed = 99\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for p in [&a, &b] {
        assert_eq!(trireg(&["simulate", "--spec", s(&spec), "--out-prefix", s(p)]).status.code(), Some(0));
    }
    for suffix in ["_ct.csv", "_device.csv", "_truth.json"] {
        let read = |p: &Path| std::fs::read(format!("{}{suffix}", p.display())).unwrap();
        assert_eq!(read(&a), read(&b), "{suffix}");
    }
}

#[test]
fn register_domain_and_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ct = write(
        dir.path(),
        "ct.csv",
        "frame,id,x_mm,y_mm,z_mm\nct,0,0,0,0\nct,1,50,0,0\nct,2,0,40,0\n",
    );
    let two = write(dir.path(), "two.csv", "frame,id,x_mm,y_mm,z_mm\ndevice,0,0,0,0\ndevice,1,50,0,0\n");
    let out = dir.path().join("r.json");
    let o = trireg(&["register", "--ct", s(&ct), "--device", s(&two), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("insufficient markers: found 2"));

    let bad = write(
        dir.path(),
        "bad.csv",
        "frame,id,x_mm,y_mm,z_mm\ndevice,0,0,0,0\ndevice,1,abc,0,0\ndevice,2,0,40,0\n",
    );
    let o = trireg(&["register", "--ct", s(&ct), "--device", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let far = write(
        dir.path(),
        "far.csv",
        "frame,id,x_mm,y_mm,z_mm\ndevice,0,0,0,0\ndevice,1,500,0,0\ndevice,2,0,400,0\n",
    );
    let o = trireg(&["register", "--ct", s(&ct), "--device", s(&far), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("best rejected"));
}

#[test]
fn mesh_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let v = sphere_phantom([40; 3], [1.0; 3], nalgebra::Vector3::new(19.5, 19.5, 19.5), 12.0, 40, -1000).unwrap();
    let vol = dir.path().join("sphere.vol");
    write_volume(&v, &vol).unwrap();

    let stl = dir.path().join("skin.stl");
    let o = trireg(&["mesh", "--volume", s(&vol), "--iso", "-300", "--out", s(&stl)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let bytes = std::fs::read(&stl).unwrap();
    let faces = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    assert!(faces > 100);
    assert_eq!(bytes.len(), 84 + 50 * faces);

    let obj = dir.path().join("skin.obj");
    assert_eq!(trireg(&["mesh", "--volume", s(&vol), "--out", s(&obj)]).status.code(), Some(0));
    let mesh = trireg::TriangleMesh::parse_obj(&std::fs::read_to_string(&obj).unwrap()).unwrap();
    assert_eq!(mesh.faces.len(), faces);

    let txt = dir.path().join("skin.txt");
    assert_eq!(trireg(&["mesh", "--volume", s(&vol), "--out", s(&txt)]).status.code(), Some(2));
}

#[test]
fn bench_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write(dir.path(), "grid.cfg", "n_markers = 4\nnoise_sigma_mm = 1\ntrials = 5\nseed = 3\n");
    let (csv, json) = (dir.path().join("b.csv"), dir.path().join("b.json"));
    let o = trireg(&["bench", "--grid", s(&grid), "--out-csv", s(&csv), "--out-json", s(&json)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("method,seed,n_markers,noise_sigma_mm,dropout,decoys,tre_mm,rot_err_rad,trans_err_mm,time_us,flipped,status\n"));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary[0]["trials"], 5);
}

#[test]
fn usage_errors_are_single_line() {
    for args in [&["register"][..], &["frobnicate"][..], &["mesh", "--volume"][..]] {
        let o = trireg(args);
        assert_eq!(o.status.code(), Some(2));
        let err = stderr(&o);
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        assert!(err.starts_with("error: usage:"));
    }
    assert_eq!(trireg(&["--help"]).status.code(), Some(0));
}
