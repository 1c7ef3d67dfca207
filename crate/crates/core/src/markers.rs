//! Marker point sets and their CSV form (`frame,id,x_mm,y_mm,z_mm`).

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MARKER_CSV_HEADER: [&str; 5] = ["frame", "id", "x_mm", "y_mm", "z_mm"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    Ct,
    Device,
}

impl Frame {
    pub fn as_str(self) -> &'static str {
        match self {
            Frame::Ct => "ct",
            Frame::Device => "device",
        }
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Frame {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ct" => Ok(Frame::Ct),
            "device" => Ok(Frame::Device),
            other => Err(format!("unknown frame `{other}`")),
        }
    }
}

/// Ordered marker positions (mm) in one coordinate frame, with optional tag IDs.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSet<T: Real> {
    frame: Frame,
    points: Vec<Vector3<T>>,
    ids: Option<Vec<u32>>,
}

impl<T: Real> MarkerSet<T> {
    pub fn new(frame: Frame, points: Vec<Vector3<T>>) -> Result<Self> {
        Self::with_ids(frame, points, None)
    }

    pub fn with_ids(frame: Frame, points: Vec<Vector3<T>>, ids: Option<Vec<u32>>) -> Result<Self> {
        if let Some(bad) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Precondition(format!("marker {bad} has a non-finite coordinate")));
        }
        if let Some(ids) = &ids {
            if ids.len() != points.len() {
                return Err(Error::Precondition(format!(
                    "{} ids for {} points",
                    ids.len(),
                    points.len()
                )));
            }
        }
        Ok(Self { frame, points, ids })
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn points(&self) -> &[Vector3<T>] {
        &self.points
    }

    pub fn ids(&self) -> Option<&[u32]> {
        self.ids.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Precondition(format!("CSV write failed: {e}"));
        w.write_record(MARKER_CSV_HEADER).map_err(csv_err)?;
        for (i, p) in self.points.iter().enumerate() {
            let id = self
                .ids
                .as_ref()
                .map(|ids| ids[i].to_string())
                .unwrap_or_default();
            w.write_record([
                self.frame.as_str().to_string(),
                id,
                p.x.to_f64_lossy().to_string(),
                p.y.to_f64_lossy().to_string(),
                p.z.to_f64_lossy().to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Precondition(format!("CSV flush failed: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory CSV write");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    /// Parses marker CSV. All rows must share one frame; IDs are all present or all absent.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut frame = None;
        let mut points = Vec::new();
        let mut ids: Vec<Option<u32>> = Vec::new();
        for (idx, record) in r.records().enumerate() {
            let line = idx + 1;
            let record = record.map_err(|e| Error::format(line, e.to_string()))?;
            if idx == 0 && record.iter().eq(MARKER_CSV_HEADER.iter().copied()) {
                continue;
            }
            if record.len() != 5 {
                return Err(Error::format(line, format!("expected 5 fields, got {}", record.len())));
            }
            let row_frame: Frame = record[0].parse().map_err(|e| Error::format(line, e))?;
            match frame {
                None => frame = Some(row_frame),
                Some(f) if f != row_frame => {
                    return Err(Error::format(line, format!("frame `{row_frame}` differs from `{f}`")))
                }
                _ => {}
            }
            let id = if record[1].is_empty() {
                None
            } else {
                Some(record[1].parse::<u32>().map_err(|_| {
                    Error::format(line, format!("invalid id `{}`", &record[1]))
                })?)
            };
            let mut xyz = [T::zero(); 3];
            for (slot, field) in xyz.iter_mut().zip(record.iter().skip(2)) {
                let value: f64 = field
                    .parse()
                    .map_err(|_| Error::format(line, format!("non-numeric coordinate `{field}`")))?;
                if !value.is_finite() {
                    return Err(Error::format(line, format!("non-finite coordinate `{field}`")));
                }
                *slot = T::lit(value);
            }
            points.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
            ids.push(id);
        }
        let frame = frame.ok_or_else(|| Error::format(1, "no marker rows"))?;
        let ids = if ids.iter().all(Option::is_none) {
            None
        } else if ids.iter().all(Option::is_some) {
            Some(ids.into_iter().flatten().collect())
        } else {
            return Err(Error::format(1, "ids must be present on every row or on none"));
        };
        Self::with_ids(frame, points, ids)
    }
}

pub fn read_markers<T: Real>(path: impl AsRef<Path>) -> Result<MarkerSet<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    MarkerSet::read_csv(std::io::BufReader::new(file))
}

pub fn write_markers<T: Real>(markers: &MarkerSet<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, markers.to_csv_string()).map_err(|e| Error::io(path, e))
}
