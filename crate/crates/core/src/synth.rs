//! Synthetic cluttered-background sequences with a composited block target.

use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::io::GroundTruthPoint;
use crate::kv::{parse_key_values, parse_num};

/// Where the background panorama comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum BackgroundSource {
    /// An image file, decoded to luminance.
    Image(PathBuf),
    /// Constant luminance.
    Uniform(f64),
    /// Seeded procedural clutter with small target-like blocks scattered through it.
    Procedural,
}

impl BackgroundSource {
    fn parse(value: &str, base: Option<&Path>) -> Result<Self> {
        if value == "procedural" {
            return Ok(BackgroundSource::Procedural);
        }
        if let Some(lum) = value.strip_prefix("uniform:") {
            let lum: f64 = parse_num("background", lum)?;
            if !(0.0..=255.0).contains(&lum) {
                return Err(Error::InvalidSpec(format!(
                    "uniform background luminance {lum} outside [0, 255]"
                )));
            }
            return Ok(BackgroundSource::Uniform(lum));
        }
        let p = PathBuf::from(value);
        Ok(BackgroundSource::Image(match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub background: BackgroundSource,
    /// px/s; positive pans the scene rightward.
    pub bg_velocity: f64,
    pub target_w: usize,
    pub target_h: usize,
    pub target_luminance: f64,
    /// px/s along the path.
    pub target_velocity: f64,
    /// Piecewise-linear waypoints. A path whose last point equals its first
    /// is traversed cyclically; otherwise the target halts at the end.
    pub path: Vec<(f64, f64)>,
    pub frames: usize,
    pub rate: f64,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Number of target-sized dark blocks in a procedural background.
    pub features: usize,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        SequenceSpec {
            background: BackgroundSource::Procedural,
            bg_velocity: 250.0,
            target_w: 5,
            target_h: 5,
            target_luminance: 0.0,
            target_velocity: 250.0,
            path: circle_path(250.0, 125.0, 10.0, 24),
            frames: 1000,
            rate: 1000.0,
            seed: 0,
            width: 500,
            height: 250,
            features: 40,
        }
    }
}

/// Closed polygon with `segments` sides inscribed in a circle, starting at
/// the rightmost point and running clockwise on screen (y grows downward).
pub fn circle_path(cx: f64, cy: f64, radius: f64, segments: usize) -> Vec<(f64, f64)> {
    let n = segments.max(3);
    let mut pts: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            (cx + radius * a.cos(), cy + radius * a.sin())
        })
        .collect();
    pts.push(pts[0]);
    pts
}

fn parse_path(value: &str) -> Result<Vec<(f64, f64)>> {
    let mut pts = Vec::new();
    for item in value.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (x, y) = item
            .split_once(',')
            .ok_or_else(|| Error::InvalidSpec(format!("path point {item:?} is not `x,y`")))?;
        let x: f64 = x
            .trim()
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("bad path x in {item:?}")))?;
        let y: f64 = y
            .trim()
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("bad path y in {item:?}")))?;
        pts.push((x, y));
    }
    if pts.is_empty() {
        return Err(Error::InvalidSpec("path needs at least one point".into()));
    }
    Ok(pts)
}

impl SequenceSpec {
    /// Parses a spec file body; relative background paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut spec = SequenceSpec::default();
        for (k, v) in parse_key_values(text).map_err(|e| Error::InvalidSpec(e.to_string()))? {
            spec.set(&k, &v, base)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, path.parent())
    }

    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let num = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::InvalidSpec(format!("{key}: cannot parse {v:?}")))
        };
        let int = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::InvalidSpec(format!("{key}: cannot parse {v:?}")))
        };
        match key {
            "background" => self.background = BackgroundSource::parse(value, base)?,
            "bg_velocity" => self.bg_velocity = num(value)?,
            "target_w" => self.target_w = int(value)?,
            "target_h" => self.target_h = int(value)?,
            "target_luminance" => self.target_luminance = num(value)?,
            "target_velocity" => self.target_velocity = num(value)?,
            "path" => self.path = parse_path(value)?,
            "frames" => self.frames = int(value)?,
            "rate" => self.rate = num(value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::InvalidSpec(format!("seed: cannot parse {value:?}")))?
            }
            "width" => self.width = int(value)?,
            "height" => self.height = int(value)?,
            "features" => self.features = int(value)?,
            _ => return Err(Error::InvalidSpec(format!("unknown sequence key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return bad(format!("frame rate must be > 0, got {}", self.rate));
        }
        if self.width == 0 || self.height == 0 {
            return bad("view window must be non-empty".into());
        }
        if self.target_w == 0 || self.target_h == 0 {
            return bad("target size must be at least 1x1".into());
        }
        if !(0.0..=255.0).contains(&self.target_luminance) {
            return bad(format!("target luminance {} outside [0, 255]", self.target_luminance));
        }
        if !self.bg_velocity.is_finite() || !self.target_velocity.is_finite() || self.target_velocity < 0.0 {
            return bad("velocities must be finite, target velocity non-negative".into());
        }
        if self.path.is_empty() {
            return bad("path needs at least one point".into());
        }
        let path = Path2::new(&self.path);
        for t in 0..self.frames {
            let (cx, cy) = path.center(self.target_velocity * t as f64 / self.rate);
            if !self.block_fits(cx, cy) {
                return bad(format!("target leaves the frame at frame {t} (centre {cx},{cy})"));
            }
        }
        Ok(())
    }

    fn block_fits(&self, cx: i64, cy: i64) -> bool {
        let x0 = cx - (self.target_w / 2) as i64;
        let y0 = cy - (self.target_h / 2) as i64;
        x0 >= 0
            && y0 >= 0
            && x0 + self.target_w as i64 <= self.width as i64
            && y0 + self.target_h as i64 <= self.height as i64
    }

    /// Rows the target block can cover along its path.
    pub fn swept_rows(&self) -> Range<usize> {
        let (lo, hi) = self
            .path
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.1), hi.max(p.1))
            });
        let half = (self.target_h / 2 + 1) as f64;
        let start = (lo - half).floor().max(0.0) as usize;
        let end = ((hi + half).ceil().max(0.0) as usize + 1).min(self.height);
        start..end.max(start)
    }

    /// Background width needed to pan without wrapping.
    pub fn required_background_width(&self) -> usize {
        let travel = (self.bg_velocity.abs() * self.frames as f64 / self.rate).ceil() as usize;
        self.width + travel
    }
}

/// Arc-length parameterised polyline.
#[derive(Debug, Clone)]
struct Path2 {
    points: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
    closed: bool,
}

impl Path2 {
    fn new(points: &[(f64, f64)]) -> Self {
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
            cumulative.push(cumulative.last().unwrap() + d);
        }
        let closed = points.len() > 2 && points.first() == points.last();
        Path2 {
            points: points.to_vec(),
            cumulative,
            closed,
        }
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn point(&self, s: f64) -> (f64, f64) {
        let total = self.total();
        if total == 0.0 {
            return self.points[0];
        }
        let s = if self.closed {
            s.rem_euclid(total)
        } else {
            s.clamp(0.0, total)
        };
        let i = match self.cumulative.iter().position(|&c| c > s) {
            Some(i) => i - 1,
            None => self.points.len() - 2,
        };
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let f = if seg > 0.0 { (s - self.cumulative[i]) / seg } else { 0.0 };
        let (a, b) = (self.points[i], self.points[i + 1]);
        (a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1))
    }

    fn center(&self, s: f64) -> (i64, i64) {
        let (x, y) = self.point(s);
        (x.round() as i64, y.round() as i64)
    }
}

/// A fully specified sequence; frames are rendered on demand.
#[derive(Debug, Clone)]
pub struct Sequence {
    spec: SequenceSpec,
    background: Frame,
    path: Path2,
}

/// Validates `spec`, loads or synthesises the background and returns a
/// sequence whose frames are rendered lazily.
pub fn generate_sequence(spec: &SequenceSpec) -> Result<Sequence> {
    spec.validate()?;
    let background = match &spec.background {
        BackgroundSource::Image(p) => {
            let img = crate::io::read_image(p)?;
            if img.height() != spec.height || img.width() < spec.width {
                return Err(Error::InvalidSpec(format!(
                    "background {} is {}x{}; need height {} and width >= {}",
                    p.display(),
                    img.width(),
                    img.height(),
                    spec.height,
                    spec.width
                )));
            }
            img
        }
        BackgroundSource::Uniform(v) => Frame::filled(spec.width, spec.height, *v),
        BackgroundSource::Procedural => procedural_background(
            spec.required_background_width(),
            spec.height,
            spec.features,
            (spec.target_w, spec.target_h),
            spec.seed,
            spec.swept_rows(),
        ),
    };
    Ok(Sequence {
        spec: spec.clone(),
        background,
        path: Path2::new(&spec.path),
    })
}

impl Sequence {
    pub fn spec(&self) -> &SequenceSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.spec.frames
    }

    pub fn is_empty(&self) -> bool {
        self.spec.frames == 0
    }

    pub fn background(&self) -> &Frame {
        &self.background
    }

    /// Horizontal pan at frame `t`, in pixels.
    pub fn pan(&self, t: usize) -> i64 {
        (self.spec.bg_velocity * t as f64 / self.spec.rate).round() as i64
    }

    pub fn target_center(&self, t: usize) -> (usize, usize) {
        let (x, y) = self.path.center(self.spec.target_velocity * t as f64 / self.spec.rate);
        (x as usize, y as usize)
    }

    /// Background only, without the target.
    pub fn background_frame(&self, t: usize) -> Frame {
        let bw = self.background.width() as i64;
        let shift = self.pan(t);
        let bg = &self.background;
        Frame::from_fn(self.spec.width, self.spec.height, |x, y| {
            bg.get((x as i64 - shift).rem_euclid(bw) as usize, y)
        })
    }

    pub fn frame(&self, t: usize) -> Frame {
        let mut f = self.background_frame(t);
        let (cx, cy) = self.target_center(t);
        let (x0, y0) = (cx - self.spec.target_w / 2, cy - self.spec.target_h / 2);
        for y in y0..y0 + self.spec.target_h {
            for x in x0..x0 + self.spec.target_w {
                f.set(x, y, self.spec.target_luminance);
            }
        }
        f
    }

    pub fn frames(&self) -> impl Iterator<Item = Frame> + '_ {
        (0..self.spec.frames).map(move |t| self.frame(t))
    }

    pub fn ground_truth(&self) -> Vec<GroundTruthPoint> {
        (0..self.spec.frames)
            .map(|t| {
                let (x, y) = self.target_center(t);
                GroundTruthPoint { frame: t as u64, x, y }
            })
            .collect()
    }

    /// Panorama x-coordinates of the procedural small features (empty for
    /// other background sources).
    pub fn feature_sites(&self) -> Vec<(usize, usize)> {
        match self.spec.background {
            BackgroundSource::Procedural => feature_sites(
                self.background.width(),
                self.background.height(),
                self.spec.features,
                self.spec.seed,
                &self.spec.swept_rows(),
            ),
            _ => Vec::new(),
        }
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Value noise on a lattice of spacing `cell`, in [0, 1].
fn value_noise(w: usize, h: usize, cell: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gw = w / cell + 2;
    let gh = h / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.gen::<f64>()).collect();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let gy = y / cell;
        let fy = smoothstep((y % cell) as f64 / cell as f64);
        for x in 0..w {
            let gx = x / cell;
            let fx = smoothstep((x % cell) as f64 / cell as f64);
            let g = |i: usize, j: usize| grid[j * gw + i];
            let top = g(gx, gy) * (1.0 - fx) + g(gx + 1, gy) * fx;
            let bot = g(gx, gy + 1) * (1.0 - fx) + g(gx + 1, gy + 1) * fx;
            out[y * w + x] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

const FEATURE_MARGIN: usize = 12;
const FEATURE_SPACING: f64 = 24.0;
/// Gap kept between the clutter and the rows the target sweeps.
const CLEAR_MARGIN: usize = 12;

/// Feature centres, drawn from their own stream so they can be recovered
/// without re-rendering. No feature touches the rows in `clear`.
fn feature_sites(w: usize, h: usize, count: usize, seed: u64, clear: &Range<usize>) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    let mut sites: Vec<(usize, usize)> = Vec::with_capacity(count);
    let blocked = |y: usize| y + FEATURE_MARGIN > clear.start && y < clear.end + FEATURE_MARGIN;
    let mut attempts = 0;
    while sites.len() < count && attempts < count * 200 && w > 2 * FEATURE_MARGIN && h > 2 * FEATURE_MARGIN {
        attempts += 1;
        let x = rng.gen_range(FEATURE_MARGIN..w - FEATURE_MARGIN);
        let y = rng.gen_range(FEATURE_MARGIN..h - FEATURE_MARGIN);
        if blocked(y) {
            continue;
        }
        let far = sites.iter().all(|&(sx, sy)| {
            let (dx, dy) = (sx as f64 - x as f64, sy as f64 - y as f64);
            (dx * dx + dy * dy).sqrt() >= FEATURE_SPACING
        });
        if far {
            sites.push((x, y));
        }
    }
    sites
}

/// A bright, smoothly varying panorama with `features` dark blocks of
/// `feature_size` (w, h) and a few large dark bars. Blocks and bars stay out
/// of the rows in `clear`.
pub fn procedural_background(
    w: usize,
    h: usize,
    features: usize,
    feature_size: (usize, usize),
    seed: u64,
    clear: Range<usize>,
) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coarse = value_noise(w, h, 48, &mut rng);
    let fine = value_noise(w, h, 16, &mut rng);
    let mut f = Frame::from_fn(w, h, |x, y| {
        let i = y * w + x;
        170.0 + 50.0 * coarse[i] + 20.0 * fine[i]
    });

    // bars hang from the top or stand on the bottom edge, whichever side of
    // the clear band has more room
    let above = clear.start.saturating_sub(CLEAR_MARGIN).min(h);
    let below = (clear.end + CLEAR_MARGIN).min(h);
    let rows = if clear.is_empty() {
        0..h
    } else if above >= h - below {
        0..above
    } else {
        below..h
    };
    if rows.len() >= 20 {
        let bars = (w / 300).max(1);
        for _ in 0..bars {
            let bw = rng.gen_range(20..40);
            let x0 = rng.gen_range(0..w.saturating_sub(bw).max(1));
            let lum = rng.gen_range(70.0..100.0);
            for y in rows.clone() {
                for x in x0..(x0 + bw).min(w) {
                    f.set(x, y, lum);
                }
            }
        }
    }

    let mut feature_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb10b);
    let (fw, fh) = (
        feature_size.0.clamp(1, 2 * FEATURE_MARGIN),
        feature_size.1.clamp(1, 2 * FEATURE_MARGIN),
    );
    for (cx, cy) in feature_sites(w, h, features, seed, &clear) {
        let lum = feature_rng.gen_range(0.0..50.0);
        let (x0, y0) = (cx - fw / 2, cy - fh / 2);
        for y in y0..y0 + fh {
            for x in x0..x0 + fw {
                f.set(x, y, lum);
            }
        }
    }
    f
}
