//! Frame files and CSV records.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::mushroom::Label;

/// Rec. 601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// One row of the detections CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame: u64,
    pub x: usize,
    pub y: usize,
    pub theta_deg: u32,
    pub response: f64,
    pub trace_id: u64,
    pub label: Label,
}

/// Target centre of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthPoint {
    pub frame: u64,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub beta: f64,
    pub detection_rate: f64,
    pub false_alarm_rate: f64,
}

/// One row of the traces CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub trace_id: u64,
    pub start_frame: u64,
    pub end_frame: u64,
    pub length: usize,
    pub sd_0: f64,
    pub sd_45: f64,
    pub sd_90: f64,
    pub sd_135: f64,
    pub label: Label,
}

/// Per-frame directional responses at a probe pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRecord {
    pub frame: u64,
    pub x: usize,
    pub y: usize,
    pub e_0: f64,
    pub e_45: f64,
    pub e_90: f64,
    pub e_135: f64,
    pub e_180: f64,
    pub e_225: f64,
    pub e_270: f64,
    pub e_315: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub value: f64,
    pub response: f64,
}

/// Writes records as CSV with a header row (header is written even when
/// `records` is empty).
pub fn write_records<T: Serialize, W: Write>(records: &[T], header: &[&str], sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    w.write_record(header)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("flushing csv", e))?;
    Ok(())
}

pub fn read_records<T: for<'de> Deserialize<'de>, R: Read>(source: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(source);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub const DETECTION_HEADER: &[&str] = &["frame", "x", "y", "theta_deg", "response", "trace_id", "label"];
pub const GROUND_TRUTH_HEADER: &[&str] = &["frame", "x", "y"];
pub const ROC_HEADER: &[&str] = &["beta", "detection_rate", "false_alarm_rate"];
pub const TRACE_HEADER: &[&str] = &[
    "trace_id",
    "start_frame",
    "end_frame",
    "length",
    "sd_0",
    "sd_45",
    "sd_90",
    "sd_135",
    "label",
];
pub const DIRECTION_HEADER: &[&str] = &[
    "frame", "x", "y", "e_0", "e_45", "e_90", "e_135", "e_180", "e_225", "e_270", "e_315",
];
pub const TUNING_HEADER: &[&str] = &["value", "response"];

pub fn write_detections<W: Write>(records: &[DetectionRecord], sink: W) -> Result<()> {
    write_records(records, DETECTION_HEADER, sink)
}

pub fn write_ground_truth<W: Write>(records: &[GroundTruthPoint], sink: W) -> Result<()> {
    write_records(records, GROUND_TRUTH_HEADER, sink)
}

pub fn write_roc<W: Write>(records: &[RocPoint], sink: W) -> Result<()> {
    write_records(records, ROC_HEADER, sink)
}

pub fn write_traces<W: Write>(records: &[TraceRecord], sink: W) -> Result<()> {
    write_records(records, TRACE_HEADER, sink)
}

pub fn write_directions<W: Write>(records: &[DirectionRecord], sink: W) -> Result<()> {
    write_records(records, DIRECTION_HEADER, sink)
}

pub fn write_tuning<W: Write>(records: &[TuningRecord], sink: W) -> Result<()> {
    write_records(records, TUNING_HEADER, sink)
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn with_file<T>(path: &Path, f: impl FnOnce(BufWriter<File>) -> Result<T>) -> Result<T> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f(BufWriter::new(file))
}

pub fn open_file(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))
}

/// Decodes an image file to real luminance in `[0, 255]`. Colour images are
/// reduced with the Rec. 601 weights; 16-bit data is rescaled to 8-bit range.
pub fn read_image(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| Error::Frame {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        image::DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) * 255.0 / 65535.0)
            .collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| LUMA_WEIGHTS[0] * p[0] as f64 + LUMA_WEIGHTS[1] * p[1] as f64 + LUMA_WEIGHTS[2] * p[2] as f64)
            .collect(),
    };
    let data = data.into_iter().map(|v| v.clamp(0.0, 255.0)).collect();
    Frame::from_vec(w, h, data)
}

/// Writes a frame as 8-bit binary PGM (P5), rounding and clamping to `[0, 255]`.
pub fn write_pgm(frame: &Frame, path: &Path) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    bytes.extend(frame.as_slice().iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn is_frame_file(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("pgm") | Some("png")
    )
}

/// Frame files named by `source`: a directory (its `.pgm`/`.png` files in
/// lexicographic order) or a manifest of newline-separated paths, relative
/// entries resolved against the manifest's directory.
pub fn list_frames(source: &Path) -> Result<Vec<PathBuf>> {
    if source.is_dir() {
        let mut paths = Vec::new();
        let entries = fs::read_dir(source).map_err(|e| Error::io(format!("listing {}", source.display()), e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(format!("listing {}", source.display()), e))?;
            let p = entry.path();
            if p.is_file() && is_frame_file(&p) {
                paths.push(p);
            }
        }
        paths.sort();
        Ok(paths)
    } else {
        let text = fs::read_to_string(source).map_err(|e| Error::io(format!("reading {}", source.display()), e))?;
        let base = source.parent().unwrap_or(Path::new("."));
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let p = PathBuf::from(l);
                if p.is_absolute() {
                    p
                } else {
                    base.join(p)
                }
            })
            .collect())
    }
}

/// Streaming frame reader that enforces constant dimensions.
#[derive(Debug)]
pub struct FrameReader {
    paths: std::vec::IntoIter<PathBuf>,
    dims: Option<(usize, usize)>,
    failed: bool,
}

impl FrameReader {
    pub fn open(source: &Path) -> Result<Self> {
        Ok(Self::from_paths(list_frames(source)?))
    }

    pub fn from_paths(paths: Vec<PathBuf>) -> Self {
        FrameReader {
            paths: paths.into_iter(),
            dims: None,
            failed: false,
        }
    }

    pub fn remaining(&self) -> usize {
        self.paths.len()
    }
}

impl Iterator for FrameReader {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let path = self.paths.next()?;
        let result = read_image(&path).and_then(|frame| match self.dims {
            Some(d) if d != frame.dims() => Err(Error::Frame {
                path: path.clone(),
                message: format!(
                    "size {}x{} differs from the stream's {}x{}",
                    frame.width(),
                    frame.height(),
                    d.0,
                    d.1
                ),
            }),
            _ => {
                self.dims = Some(frame.dims());
                Ok(frame)
            }
        });
        if result.is_err() {
            self.failed = true;
        }
        Some(result)
    }
}

/// Reads a whole frame source into memory.
pub fn read_frames(source: &Path) -> Result<Vec<Frame>> {
    FrameReader::open(source)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direction::Direction;

    #[test]
    fn empty_detection_list_is_header_only() {
        let mut buf = Vec::new();
        write_detections(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "frame,x,y,theta_deg,response,trace_id,label\n"
        );
    }

    #[test]
    fn one_detection_two_lines() {
        let rec = DetectionRecord {
            frame: 12,
            x: 3,
            y: 4,
            theta_deg: Direction::from_index(2).unwrap().degrees(),
            response: 0.1 + 0.2,
            trace_id: 7,
            label: Label::Fake,
        };
        let mut buf = Vec::new();
        write_detections(std::slice::from_ref(&rec), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().nth(1).unwrap(), "12,3,4,90,0.30000000000000004,7,fake");
        let back: Vec<DetectionRecord> = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, vec![rec]);
    }

    #[test]
    fn pgm_round_trip_and_reader() {
        let dir = tempfile::tempdir().unwrap();
        let f = Frame::from_fn(6, 4, |x, y| (x * 40 + y) as f64);
        for i in 0..3 {
            write_pgm(&f, &dir.path().join(format!("{i:06}.pgm"))).unwrap();
        }
        let frames = read_frames(dir.path()).unwrap();
        assert_eq!(frames.len(), 3);
        assert_eq!(frames[0], f);
    }

    #[test]
    fn mismatched_size_names_file() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&Frame::zeros(6, 4), &dir.path().join("000000.pgm")).unwrap();
        write_pgm(&Frame::zeros(5, 4), &dir.path().join("000001.pgm")).unwrap();
        write_pgm(&Frame::zeros(6, 4), &dir.path().join("000002.pgm")).unwrap();
        let results: Vec<_> = FrameReader::open(dir.path()).unwrap().collect();
        assert_eq!(results.len(), 2);
        match &results[1] {
            Err(Error::Frame { path, .. }) => assert!(path.ends_with("000001.pgm")),
            other => panic!("expected frame error, got {other:?}"),
        }
    }

    #[test]
    fn colour_png_uses_rec601() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let img = image::RgbImage::from_pixel(2, 2, image::Rgb([200, 100, 50]));
        img.save(&path).unwrap();
        let f = read_image(&path).unwrap();
        // 0.299*200 + 0.587*100 + 0.114*50
        assert!((f.get(1, 1) - 124.2).abs() < 1e-9);
    }

    #[test]
    fn manifest_source() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&Frame::filled(4, 4, 9.0), &dir.path().join("b.pgm")).unwrap();
        write_pgm(&Frame::filled(4, 4, 1.0), &dir.path().join("a.pgm")).unwrap();
        let manifest = dir.path().join("list.txt");
        fs::write(&manifest, "b.pgm\na.pgm\n").unwrap();
        let frames = read_frames(&manifest).unwrap();
        assert_eq!(frames[0].get(0, 0), 9.0);
        assert_eq!(frames[1].get(0, 0), 1.0);
        assert!(matches!(
            read_frames(&dir.path().join("missing.txt")),
            Err(Error::Io { .. })
        ));
    }
}
