//! Per-frame tracker exports.
//!
//! One CSV per video with a header row. Required columns: `frame`,
//! `x_0..x_67`, `y_0..y_67` (landmark pixels), `pose_Rx`, `pose_Ry`,
//! `pose_Rz` (pitch, yaw, roll in radians) and `gaze_0_{x,y,z}`,
//! `gaze_1_{x,y,z}` (left and right eye unit vectors). Extra columns are
//! ignored. Empty or `nan` cells mark a value as missing.

use std::path::Path;

use crate::error::{Error, Result};

pub const NUM_LANDMARKS: usize = 68;
const GAZE_NORM_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub frame: usize,
    /// Pixel coordinates; NaN where the tracker lost a landmark.
    pub landmarks: Vec<(f64, f64)>,
    /// Pitch, yaw, roll.
    pub pose: [f64; 3],
    pub gaze_left: [f64; 3],
    pub gaze_right: [f64; 3],
}

impl RawFrame {
    pub fn landmarks_valid(&self) -> bool {
        self.landmarks.len() == NUM_LANDMARKS
            && self.landmarks.iter().all(|(x, y)| x.is_finite() && y.is_finite())
            && self.pose.iter().all(|v| v.is_finite())
    }

    pub fn gaze_valid(&self) -> bool {
        [self.gaze_left, self.gaze_right].iter().all(|g| {
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            norm.is_finite() && (norm - 1.0).abs() <= GAZE_NORM_TOL
        })
    }
}

fn parse_cell(raw: &str) -> std::result::Result<f64, std::num::ParseFloatError> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") {
        Ok(f64::NAN)
    } else {
        s.parse()
    }
}

struct Columns {
    frame: usize,
    xs: Vec<usize>,
    ys: Vec<usize>,
    pose: [usize; 3],
    gaze: [usize; 6],
}

impl Columns {
    fn locate(headers: &csv::StringRecord, origin: &str) -> Result<Self> {
        let find = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::schema_at(origin, format!("missing column `{name}`")))
        };
        let xs = (0..NUM_LANDMARKS).map(|i| find(&format!("x_{i}"))).collect::<Result<_>>()?;
        let ys = (0..NUM_LANDMARKS).map(|i| find(&format!("y_{i}"))).collect::<Result<_>>()?;
        Ok(Columns {
            frame: find("frame")?,
            xs,
            ys,
            pose: [find("pose_Rx")?, find("pose_Ry")?, find("pose_Rz")?],
            gaze: [
                find("gaze_0_x")?,
                find("gaze_0_y")?,
                find("gaze_0_z")?,
                find("gaze_1_x")?,
                find("gaze_1_y")?,
                find("gaze_1_z")?,
            ],
        })
    }
}

/// Parses a tracker CSV. `origin` labels error messages (usually the path).
pub fn parse_frames_csv(text: &str, origin: &str) -> Result<Vec<RawFrame>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::schema_at(origin, e))?.clone();
    let cols = Columns::locate(&headers, origin)?;
    let mut frames = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2;
        let record = record.map_err(|e| Error::schema_at(format!("{origin}:{row}"), e))?;
        let get = |col: usize, name: &str| -> Result<f64> {
            let cell = record.get(col).unwrap_or("");
            parse_cell(cell)
                .map_err(|_| Error::schema_at(format!("{origin}:{row}"), format!("column `{name}`: bad number `{cell}`")))
        };
        let frame_val = get(cols.frame, "frame")?;
        if !(frame_val.is_finite() && frame_val >= 0.0 && frame_val.fract() == 0.0) {
            return Err(Error::schema_at(format!("{origin}:{row}"), "column `frame` must be a non-negative integer"));
        }
        let mut landmarks = Vec::with_capacity(NUM_LANDMARKS);
        for i in 0..NUM_LANDMARKS {
            landmarks.push((get(cols.xs[i], "x")?, get(cols.ys[i], "y")?));
        }
        let mut gaze = [0.0; 6];
        for (k, g) in gaze.iter_mut().enumerate() {
            *g = get(cols.gaze[k], "gaze")?;
        }
        frames.push(RawFrame {
            frame: frame_val as usize,
            landmarks,
            pose: [get(cols.pose[0], "pose_Rx")?, get(cols.pose[1], "pose_Ry")?, get(cols.pose[2], "pose_Rz")?],
            gaze_left: [gaze[0], gaze[1], gaze[2]],
            gaze_right: [gaze[3], gaze[4], gaze[5]],
        });
    }
    Ok(frames)
}

pub fn read_frames_csv(path: &Path) -> Result<Vec<RawFrame>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_frames_csv(&text, &path.display().to_string())
}

/// Header line matching [`parse_frames_csv`].
pub fn csv_header() -> String {
    let mut cols = vec!["frame".to_string()];
    cols.extend((0..NUM_LANDMARKS).map(|i| format!("x_{i}")));
    cols.extend((0..NUM_LANDMARKS).map(|i| format!("y_{i}")));
    cols.extend(["pose_Rx", "pose_Ry", "pose_Rz"].map(String::from));
    cols.extend(["gaze_0_x", "gaze_0_y", "gaze_0_z", "gaze_1_x", "gaze_1_y", "gaze_1_z"].map(String::from));
    cols.join(",")
}

/// Serializes frames in the layout [`parse_frames_csv`] reads.
pub fn write_frames_csv(frames: &[RawFrame]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for f in frames {
        let mut cells = vec![f.frame.to_string()];
        cells.extend(f.landmarks.iter().map(|(x, _)| fmt_cell(*x)));
        cells.extend(f.landmarks.iter().map(|(_, y)| fmt_cell(*y)));
        cells.extend(f.pose.iter().map(|v| fmt_cell(*v)));
        cells.extend(f.gaze_left.iter().chain(&f.gaze_right).map(|v| fmt_cell(*v)));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}
