//! Mushroom body: thresholded detections, motion-trace linking, contrast
//! sampling along traces and target/fake classification by the spread of the
//! sampled directional contrast.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contrast::ContrastField;
use crate::direction::{Direction, Orientation};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::motion::DirectionalResponseField;

/// A thresholded STMD response at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub t: u64,
    pub x: usize,
    pub y: usize,
    pub direction: Direction,
    pub response: f64,
}

/// Detections in `field`: pixels whose peak response over directions exceeds
/// `beta` and that are the strongest pixel within `nms_radius` (Euclidean).
/// Equal responses are resolved in favour of the earlier pixel in raster
/// order, direction ties in favour of the smaller angle.
pub fn detect(field: &DirectionalResponseField, beta: f64, nms_radius: f64) -> Vec<Detection> {
    let (peak, arg) = field.peak();
    local_maxima(field.t, &peak, &arg, beta, nms_radius)
}

/// Non-maximum suppression over a precomputed peak field. Whether a pixel is a
/// local maximum does not depend on `beta`, so raising `beta` only filters the
/// result.
pub fn local_maxima(t: u64, peak: &Frame, argmax: &[u8], beta: f64, nms_radius: f64) -> Vec<Detection> {
    let (w, h) = peak.dims();
    let r = nms_radius.max(0.0).floor() as isize;
    let r2 = nms_radius * nms_radius;
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = peak.get(x, y);
            if !(v > beta) {
                continue;
            }
            let idx = y * w + x;
            let mut is_max = true;
            'scan: for dy in -r..=r {
                for dx in -r..=r {
                    if (dx == 0 && dy == 0) || ((dx * dx + dy * dy) as f64) > r2 {
                        continue;
                    }
                    let Some(q) = peak.get_checked(x as isize + dx, y as isize + dy) else {
                        continue;
                    };
                    let q_idx = (y as isize + dy) as usize * w + (x as isize + dx) as usize;
                    if q > v || (q == v && q_idx < idx) {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                out.push(Detection {
                    t,
                    x,
                    y,
                    direction: Direction::from_index(argmax[idx] as usize).expect("argmax in range"),
                    response: v,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Undecided,
    Target,
    Fake,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Undecided => "undecided",
            Label::Target => "target",
            Label::Fake => "fake",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "undecided" => Ok(Label::Undecided),
            "target" => Ok(Label::Target),
            "fake" => Ok(Label::Fake),
            other => Err(Error::InvalidParameter(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassifierParams {
    /// SD threshold; traces whose largest per-orientation SD exceeds it are targets.
    pub gamma: f64,
    /// Number of most recent contrast samples in the SD.
    pub samples: usize,
    pub match_radius: f64,
    /// Frames a trace may go unmatched before it is finalized.
    pub max_gap: u64,
    pub min_trace_len: usize,
    pub nms_radius: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams {
            gamma: 10.0,
            samples: 1000,
            match_radius: 8.0,
            max_gap: 3,
            min_trace_len: 1000,
            nms_radius: 5.0,
        }
    }
}

impl ClassifierParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.samples < 1 {
            return Err(Error::InvalidParameter("m must be >= 1".into()));
        }
        if !(self.match_radius >= 1.0) {
            return Err(Error::InvalidParameter("match_radius must be >= 1".into()));
        }
        if self.max_gap < 1 {
            return Err(Error::InvalidParameter("max_gap must be >= 1".into()));
        }
        if !(self.nms_radius >= 0.0 && self.nms_radius.is_finite()) {
            return Err(Error::InvalidParameter("nms_radius must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: u64,
    pub x: usize,
    pub y: usize,
    pub direction: Direction,
}

/// A motion trace: linked detections, one contrast 4-vector per point once
/// the contrast pathway has sampled it.
#[derive(Debug, Clone)]
pub struct Trace {
    pub id: u64,
    pub points: Vec<TracePoint>,
    pub contrast: Vec<[f64; Orientation::COUNT]>,
    pub label: Label,
    pub finalized: bool,
}

impl Trace {
    fn new(id: u64, point: TracePoint) -> Self {
        Trace {
            id,
            points: vec![point],
            contrast: Vec::new(),
            label: Label::Undecided,
            finalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> &TracePoint {
        self.points.last().expect("traces are never empty")
    }

    pub fn first_t(&self) -> u64 {
        self.points[0].t
    }

    pub fn last_t(&self) -> u64 {
        self.last().t
    }

    /// Appends `Q(t, phi) = T(x(t), y(t), phi)` for the newest point.
    pub fn sample_contrast(&mut self, field: &ContrastField) -> Result<()> {
        let last = *self.last();
        if field.t != last.t {
            return Err(Error::InvalidState(format!(
                "trace {} ends at frame {} but contrast field is frame {}",
                self.id, last.t, field.t
            )));
        }
        if self.contrast.len() >= self.points.len() {
            return Err(Error::InvalidState(format!(
                "trace {} already has contrast for frame {}",
                self.id, last.t
            )));
        }
        self.contrast.push(field.at(last.x, last.y));
        Ok(())
    }

    /// Appends a contrast sample taken elsewhere (e.g. from a cache).
    pub fn push_contrast(&mut self, q: [f64; Orientation::COUNT]) -> Result<()> {
        if self.contrast.len() >= self.points.len() {
            return Err(Error::InvalidState(format!("trace {} has no unsampled point", self.id)));
        }
        self.contrast.push(q);
        Ok(())
    }

    /// Population SD of each orientation over the last `min(m, n)` samples.
    pub fn contrast_sd(&self, m: usize) -> [f64; Orientation::COUNT] {
        let n = self.contrast.len().min(m);
        let window = &self.contrast[self.contrast.len() - n..];
        let mut out = [0.0; Orientation::COUNT];
        for (k, o) in out.iter_mut().enumerate() {
            let column: Vec<f64> = window.iter().map(|q| q[k]).collect();
            *o = population_sd(&column);
        }
        out
    }
}

/// Two-pass population standard deviation (divisor `n`); 0 for empty input.
pub fn population_sd(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// Target if the largest per-orientation SD exceeds `gamma`, fake otherwise;
/// undecided below the minimum trace length.
pub fn classify(trace: &Trace, params: &ClassifierParams) -> Label {
    if trace.len() < params.min_trace_len || trace.contrast.is_empty() {
        return Label::Undecided;
    }
    let sd = trace.contrast_sd(params.samples);
    let largest = sd.iter().copied().fold(0.0, f64::max);
    if largest > params.gamma {
        Label::Target
    } else {
        Label::Fake
    }
}

/// Links per-frame detections into traces.
#[derive(Debug, Clone)]
pub struct Tracker {
    match_radius: f64,
    max_gap: u64,
    traces: Vec<Trace>,
    live: Vec<usize>,
    last_t: Option<u64>,
}

impl Tracker {
    pub fn new(match_radius: f64, max_gap: u64) -> Self {
        Tracker {
            match_radius,
            max_gap,
            traces: Vec::new(),
            live: Vec::new(),
            last_t: None,
        }
    }

    pub fn from_params(params: &ClassifierParams) -> Self {
        Self::new(params.match_radius, params.max_gap)
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn trace(&self, id: u64) -> &Trace {
        &self.traces[id as usize]
    }

    pub fn trace_mut(&mut self, id: u64) -> &mut Trace {
        &mut self.traces[id as usize]
    }

    /// Ids of traces that can still be extended.
    pub fn live_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.live.iter().map(|&i| i as u64)
    }

    /// Matches the detections of frame `t` to live traces and returns the
    /// trace id each detection joined, in detection order.
    ///
    /// Matching is greedy over (distance, trace age, detection index), which
    /// pairs every trace and detection that are each other's nearest free
    /// partner within the match radius.
    pub fn update(&mut self, t: u64, detections: &[Detection]) -> Result<Vec<u64>> {
        if let Some(prev) = self.last_t {
            if t <= prev {
                return Err(Error::InvalidState(format!(
                    "tracker received frame {t} after frame {prev}"
                )));
            }
        }
        self.last_t = Some(t);
        // traces that already missed too many frames cannot be extended
        let max_gap = self.max_gap;
        self.finalize_where(|tr| t - tr.last_t() > max_gap + 1);

        let r2 = self.match_radius * self.match_radius;
        let mut pairs = Vec::new();
        for (slot, &ti) in self.live.iter().enumerate() {
            let last = self.traces[ti].last();
            for (di, d) in detections.iter().enumerate() {
                let dx = d.x as i64 - last.x as i64;
                let dy = d.y as i64 - last.y as i64;
                let dist2 = dx * dx + dy * dy;
                if dist2 as f64 <= r2 {
                    pairs.push((dist2, slot, di));
                }
            }
        }
        pairs.sort_unstable();
        let mut trace_taken = vec![false; self.live.len()];
        let mut assigned: Vec<Option<u64>> = vec![None; detections.len()];
        for (_, slot, di) in pairs {
            if trace_taken[slot] || assigned[di].is_some() {
                continue;
            }
            trace_taken[slot] = true;
            let ti = self.live[slot];
            let d = &detections[di];
            self.traces[ti].points.push(TracePoint {
                t,
                x: d.x,
                y: d.y,
                direction: d.direction,
            });
            assigned[di] = Some(ti as u64);
        }
        let mut ids = Vec::with_capacity(detections.len());
        for (di, d) in detections.iter().enumerate() {
            let id = match assigned[di] {
                Some(id) => id,
                None => {
                    let id = self.traces.len() as u64;
                    self.traces.push(Trace::new(
                        id,
                        TracePoint {
                            t,
                            x: d.x,
                            y: d.y,
                            direction: d.direction,
                        },
                    ));
                    self.live.push(id as usize);
                    id
                }
            };
            ids.push(id);
        }
        self.finalize_where(|tr| t - tr.last_t() > max_gap);
        Ok(ids)
    }

    fn finalize_where(&mut self, pred: impl Fn(&Trace) -> bool) {
        let traces = &mut self.traces;
        self.live.retain(|&i| {
            if pred(&traces[i]) {
                traces[i].finalized = true;
                false
            } else {
                true
            }
        });
    }

    /// Finalizes every live trace and returns all traces in id order.
    pub fn finish(mut self) -> Vec<Trace> {
        self.finalize_where(|_| true);
        self.traces
    }
}
