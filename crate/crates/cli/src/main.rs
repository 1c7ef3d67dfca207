//! `trireg`: segment CT markers, extract surface meshes, register marker sets and run
//! synthetic benchmarks.
//!
//! Exit codes: 0 on success, 1 on domain errors (too few markers, no match, degenerate
//! geometry), 2 on usage, format and I/O errors. Failures print one line to stderr:
//! `error: <kind>: <message>`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use trireg::bench::{records_to_csv, summarize, BenchGrid, MethodConfigs};
use trireg::segmentation::segment_volume;
use trireg::{
    generate_scene, icp_register, marching_cubes, read_markers, read_volume, register, write_markers, write_obj,
    write_stl, Error, IcpConfig, KvBlock, MarkerSet, RegistrationConfig, SceneSpec, SegmentationConfig,
    TriangleTable,
};

#[derive(Parser)]
#[command(name = "trireg", version, about = "Marker-based CT-to-patient registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment fiducial markers from a VOL1 volume into a CT marker CSV.
    Segment {
        /// Input volume (VOL1 format).
        #[arg(long)]
        volume: PathBuf,
        /// Segmentation config (key = value): expected_mm3 (required), hu_min,
        /// connectivity, tolerance_fraction, intensity_weighted.
        #[arg(long)]
        config: PathBuf,
        /// Output marker CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract an isosurface mesh; the format follows the extension (.stl binary, .obj ASCII).
    Mesh {
        #[arg(long)]
        volume: PathBuf,
        /// Iso value in HU.
        #[arg(long, default_value_t = trireg::mesh::SKIN_ISO_HU, allow_hyphen_values = true)]
        iso: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Register CT markers to device markers by triangle matching; writes result JSON.
    Register {
        /// CT marker CSV.
        #[arg(long)]
        ct: PathBuf,
        /// Device marker CSV; inserted into the triangle table in file order.
        #[arg(long)]
        device: PathBuf,
        /// Registration config (key = value): k, scale_tolerance_mm, tie_epsilon_mm,
        /// degeneracy_ratio, ct_body_center_mm, device_camera_mm.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// ICP baseline: align source markers (CT) onto target markers (device); writes JSON.
    Icp {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// ICP config (key = value): max_iterations, rmsd_delta_tolerance,
        /// initial_rotation, initial_translation.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic scene: <prefix>_ct.csv, <prefix>_device.csv, <prefix>_truth.json.
    Simulate {
        /// Scene spec (key = value): n_markers (required), placement_extent_mm,
        /// noise_sigma_mm, dropout, decoys, min_separation_mm, seed, rotation,
        /// rotation_angle_deg, translation_half_extent_mm, translation_mm.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Run a benchmark grid; writes per-trial CSV and per-cell JSON summary.
    Bench {
        /// Grid (key = value): scene keys, where n_markers, noise_sigma_mm, dropout and
        /// decoys may be comma-separated lists, plus methods and trials.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        out_json: PathBuf,
    },
}

#[derive(Debug)]
struct Failure {
    kind: String,
    message: String,
    code: u8,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InsufficientMarkers { .. }
            | Error::NoMatch(_)
            | Error::DegenerateGeometry(_)
            | Error::DegenerateTriangle(_)
            | Error::Precondition(_) => 1,
            _ => 2,
        };
        Failure {
            kind: e.kind().to_string(),
            message: e.to_string(),
            code,
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        kind: "usage".into(),
        message: message.into(),
        code: 2,
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read_kv(path: &Path) -> CliResult<KvBlock> {
    Ok(KvBlock::read(path)?)
}

fn write_text(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| Failure {
        kind: "io".into(),
        message: format!("I/O error on {}: {e}", path.display()),
        code: 2,
    })
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    write_text(path, &text)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Segment { volume, config, out } => {
            let cfg = SegmentationConfig::from_kv(&read_kv(&config)?)?;
            let vol = read_volume(&volume)?;
            let report = segment_volume(&vol, &cfg)?;
            eprintln!(
                "components: {}, markers: {}",
                report.components_found,
                report.markers.len()
            );
            for (i, m) in report.markers.iter().enumerate() {
                eprintln!("marker {i}: {} voxels, {} mm3", m.voxel_count, m.volume_mm3);
            }
            if report.markers.len() < 3 {
                return Err(Error::InsufficientMarkers {
                    found: report.markers.len(),
                }
                .into());
            }
            write_markers(&report.marker_set(), &out)?;
        }
        Command::Mesh { volume, iso, out } => {
            let ext = out
                .extension()
                .and_then(|e| e.to_str())
                .map(str::to_ascii_lowercase);
            let vol = read_volume(&volume)?;
            let mesh = marching_cubes(&vol, iso)?;
            match ext.as_deref() {
                Some("stl") => write_stl(&mesh, &out)?,
                Some("obj") => write_obj(&mesh, &out)?,
                _ => return Err(usage(format!("mesh output must end in .stl or .obj: {}", out.display()))),
            }
            eprintln!("vertices: {}, faces: {}", mesh.vertices.len(), mesh.faces.len());
        }
        Command::Register { ct, device, config, out } => {
            let cfg = match config {
                Some(p) => RegistrationConfig::<f64>::from_kv(&read_kv(&p)?)?,
                None => RegistrationConfig::default(),
            };
            let ct: MarkerSet<f64> = read_markers(&ct)?;
            let device: MarkerSet<f64> = read_markers(&device)?;
            let mut table = TriangleTable::new(cfg.degeneracy_ratio);
            for p in device.points() {
                table.insert_marker(*p);
            }
            let result = register(&ct, &table, &cfg)?;
            write_json(&out, &result.to_record(device.ids()))?;
            eprintln!("rmsd: {} mm, flipped: {}", result.rmsd, result.flipped);
        }
        Command::Icp { source, target, config, out } => {
            let cfg = match config {
                Some(p) => IcpConfig::<f64>::from_kv(&read_kv(&p)?)?,
                None => IcpConfig::default(),
            };
            let src: MarkerSet<f64> = read_markers(&source)?;
            let dst: MarkerSet<f64> = read_markers(&target)?;
            let result = icp_register(&src, &dst, &cfg)?;
            write_json(&out, &result.to_record())?;
            eprintln!(
                "rmsd: {} mm, iterations: {}, converged: {}",
                result.rmsd, result.iterations_used, result.converged
            );
        }
        Command::Simulate { spec, out_prefix } => {
            let spec = SceneSpec::from_kv(&read_kv(&spec)?)?;
            let scene = generate_scene(&spec)?;
            write_markers(&scene.ct_markers, with_suffix(&out_prefix, "_ct.csv"))?;
            write_markers(&scene.device_markers, with_suffix(&out_prefix, "_device.csv"))?;
            write_json(&with_suffix(&out_prefix, "_truth.json"), &scene.truth.to_record(None))?;
        }
        Command::Bench { grid, out_csv, out_json } => {
            let grid = BenchGrid::from_kv(&read_kv(&grid)?)?;
            let records = grid.run(&MethodConfigs::default())?;
            write_text(&out_csv, &records_to_csv(&records)?)?;
            write_json(&out_json, &summarize(&records))?;
            eprintln!("trials: {}", records.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}: {}", f.kind, f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
