//! The per-frame detection loop: motion pathway, thresholding, trace linking,
//! contrast sampling and classification.

use crate::config::RunConfig;
use crate::contrast::ContrastPathway;
use crate::direction::Orientation;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::io::{DetectionRecord, DirectionRecord, TraceRecord};
use crate::motion::MotionPathway;
use crate::mushroom::{classify, detect, local_maxima, ClassifierParams, Detection, Label, Trace, Tracker};

/// Trace linking and classification, shared by live runs and cache replays.
#[derive(Debug, Clone)]
struct MushroomStage {
    tracker: Tracker,
    params: ClassifierParams,
    contrast: bool,
    detections: Vec<(Detection, u64)>,
}

impl MushroomStage {
    fn new(params: &ClassifierParams, contrast: bool) -> Self {
        MushroomStage {
            tracker: Tracker::from_params(params),
            params: params.clone(),
            contrast,
            detections: Vec::new(),
        }
    }

    fn step(
        &mut self,
        t: u64,
        detections: &[Detection],
        mut contrast_at: impl FnMut(usize) -> Result<[f64; Orientation::COUNT]>,
    ) -> Result<()> {
        let ids = self.tracker.update(t, detections)?;
        for (i, (d, &id)) in detections.iter().zip(&ids).enumerate() {
            if self.contrast {
                let q = contrast_at(i)?;
                self.tracker.trace_mut(id).push_contrast(q)?;
            }
            self.detections.push((*d, id));
        }
        Ok(())
    }

    fn finish(self, frames: u64, warm_up_frames: usize) -> RunOutput {
        let mut traces = self.tracker.finish();
        for tr in &mut traces {
            tr.label = if self.contrast {
                classify(tr, &self.params)
            } else {
                Label::Target
            };
        }
        let detections = self
            .detections
            .iter()
            .map(|(d, id)| DetectionRecord {
                frame: d.t,
                x: d.x,
                y: d.y,
                theta_deg: d.direction.degrees(),
                response: d.response,
                trace_id: *id,
                label: traces[*id as usize].label,
            })
            .collect();
        RunOutput {
            detections,
            directions: Vec::new(),
            traces,
            samples: self.params.samples,
            frames,
            warm_up_frames,
        }
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Detections in frame order, labelled with their trace's final label.
    pub detections: Vec<DetectionRecord>,
    /// All eight directional responses at each detection, in the same order.
    /// Cache replays keep only the peak response and leave this empty.
    pub directions: Vec<DirectionRecord>,
    pub traces: Vec<Trace>,
    samples: usize,
    pub frames: u64,
    pub warm_up_frames: usize,
}

impl RunOutput {
    pub fn trace_records(&self) -> Vec<TraceRecord> {
        self.traces
            .iter()
            .map(|tr| {
                let sd = tr.contrast_sd(self.samples);
                TraceRecord {
                    trace_id: tr.id,
                    start_frame: tr.first_t(),
                    end_frame: tr.last_t(),
                    length: tr.len(),
                    sd_0: sd[0],
                    sd_45: sd[1],
                    sd_90: sd[2],
                    sd_135: sd[3],
                    label: tr.label,
                }
            })
            .collect()
    }

    /// Detections whose label counts as a detection for scoring.
    pub fn scored_detections(&self, include_undecided: bool) -> Vec<DetectionRecord> {
        self.detections
            .iter()
            .filter(|d| d.label == Label::Target || (include_undecided && d.label == Label::Undecided))
            .cloned()
            .collect()
    }
}

/// Per-frame summary returned by [`Engine::process`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOutcome {
    pub t: u64,
    pub warm_up: bool,
    pub detections: usize,
    pub max_abs_response: f64,
}

/// Streaming detector. Frames during warm-up are processed but not thresholded.
#[derive(Debug, Clone)]
pub struct Engine {
    beta: f64,
    nms_radius: f64,
    motion: MotionPathway,
    contrast: Option<ContrastPathway>,
    stage: MushroomStage,
    directions: Vec<DirectionRecord>,
}

impl Engine {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let beta = config.pipeline.require_beta()?;
        let contrast = if config.contrast_pathway {
            Some(ContrastPathway::new(config.contrast)?)
        } else {
            None
        };
        Ok(Engine {
            beta,
            nms_radius: config.classifier.nms_radius,
            motion: MotionPathway::new(config.pipeline.clone())?,
            contrast,
            stage: MushroomStage::new(&config.classifier, config.contrast_pathway),
            directions: Vec::new(),
        })
    }

    pub fn warm_up_frames(&self) -> usize {
        self.motion.warm_up_frames()
    }

    pub fn process(&mut self, frame: &Frame) -> Result<FrameOutcome> {
        let m = self.motion.process(frame)?;
        let max_abs_response = m.response.max_abs();
        if m.warm_up {
            return Ok(FrameOutcome {
                t: m.t,
                warm_up: true,
                detections: 0,
                max_abs_response,
            });
        }
        let dets = detect(&m.response, self.beta, self.nms_radius);
        for d in &dets {
            let e = m.response.at(d.x, d.y);
            self.directions.push(DirectionRecord {
                frame: d.t,
                x: d.x,
                y: d.y,
                e_0: e[0],
                e_45: e[1],
                e_90: e[2],
                e_135: e[3],
                e_180: e[4],
                e_225: e[5],
                e_270: e[6],
                e_315: e[7],
            });
        }
        // the contrast field is only needed where something was detected
        let field = match (&self.contrast, dets.is_empty()) {
            (Some(c), false) => Some(c.process(m.t, &m.ommatidia)?),
            _ => None,
        };
        self.stage.step(m.t, &dets, |i| {
            let f = field
                .as_ref()
                .ok_or_else(|| Error::InvalidState("contrast field missing".into()))?;
            Ok(f.at(dets[i].x, dets[i].y))
        })?;
        Ok(FrameOutcome {
            t: m.t,
            warm_up: false,
            detections: dets.len(),
            max_abs_response,
        })
    }

    pub fn finish(self) -> RunOutput {
        let frames = self.motion.frames_processed();
        let warm_up = self.motion.warm_up_frames();
        let mut out = self.stage.finish(frames, warm_up);
        out.directions = self.directions;
        out
    }
}

/// Runs the engine over a frame stream.
pub fn run<I>(config: &RunConfig, frames: I) -> Result<RunOutput>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    let mut engine = Engine::new(config)?;
    for f in frames {
        engine.process(&f?)?;
    }
    Ok(engine.finish())
}

/// A local maximum of the peak response together with the contrast sample at
/// its pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub detection: Detection,
    pub contrast: [f64; Orientation::COUNT],
}

/// Per-frame candidates above a floor threshold. Replaying with any
/// `beta >= floor` gives the same result as a full run at that `beta`.
#[derive(Debug, Clone)]
pub struct CandidateCache {
    floor: f64,
    frames: Vec<(u64, Vec<Candidate>)>,
    frame_count: u64,
    warm_up_frames: usize,
}

impl CandidateCache {
    /// Runs the motion pathway (and the contrast pathway when enabled) once,
    /// keeping every local maximum whose response exceeds `floor`.
    pub fn build<I>(config: &RunConfig, floor: f64, frames: I) -> Result<Self>
    where
        I: IntoIterator<Item = Result<Frame>>,
    {
        config.validate()?;
        if !(floor.is_finite() && floor >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cache floor must be non-negative, got {floor}"
            )));
        }
        let mut motion = MotionPathway::new(config.pipeline.clone())?;
        let contrast = ContrastPathway::new(config.contrast)?;
        let nms = config.classifier.nms_radius;
        let mut out = Vec::new();
        for f in frames {
            let m = motion.process(&f?)?;
            if m.warm_up {
                continue;
            }
            let (peak, arg) = m.response.peak();
            let dets = local_maxima(m.t, &peak, &arg, floor, nms);
            let candidates = if dets.is_empty() {
                Vec::new()
            } else {
                let field = contrast.process(m.t, &m.ommatidia)?;
                dets.into_iter()
                    .map(|d| Candidate {
                        contrast: field.at(d.x, d.y),
                        detection: d,
                    })
                    .collect()
            };
            out.push((m.t, candidates));
        }
        Ok(CandidateCache {
            floor,
            frames: out,
            frame_count: motion.frames_processed(),
            warm_up_frames: motion.warm_up_frames(),
        })
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn frame_count(&self) -> u64 {
        self.frame_count
    }

    pub fn warm_up_frames(&self) -> usize {
        self.warm_up_frames
    }

    /// Largest cached response, or `None` if nothing exceeded the floor.
    pub fn max_response(&self) -> Option<f64> {
        self.frames
            .iter()
            .flat_map(|(_, c)| c.iter().map(|c| c.detection.response))
            .reduce(f64::max)
    }

    pub fn candidates(&self) -> impl Iterator<Item = &Candidate> {
        self.frames.iter().flat_map(|(_, c)| c.iter())
    }

    /// Thresholds, links and classifies the cached candidates at `beta`.
    pub fn replay(&self, beta: f64, classifier: &ClassifierParams, contrast_pathway: bool) -> Result<RunOutput> {
        if !(beta >= self.floor) {
            return Err(Error::InvalidParameter(format!(
                "beta {beta} is below the cache floor {}",
                self.floor
            )));
        }
        classifier.validate()?;
        let mut stage = MushroomStage::new(classifier, contrast_pathway);
        for (t, candidates) in &self.frames {
            let kept: Vec<&Candidate> = candidates.iter().filter(|c| c.detection.response > beta).collect();
            let dets: Vec<Detection> = kept.iter().map(|c| c.detection).collect();
            stage.step(*t, &dets, |i| Ok(kept[i].contrast))?;
        }
        Ok(stage.finish(self.frame_count, self.warm_up_frames))
    }
}
