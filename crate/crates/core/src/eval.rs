//! Detection scoring, ROC sweeps, Weber contrast and tuning-curve experiments.

use std::collections::BTreeMap;
use std::ops::Range;

use crate::config::RunConfig;
use crate::direction::Direction;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::io::{DetectionRecord, GroundTruthPoint, RocPoint, TuningRecord};
use crate::motion::{DirectionalResponseField, MotionPathway, PipelineParams};
use crate::pipeline::{CandidateCache, RunOutput};
use crate::synth::{generate_sequence, BackgroundSource, SequenceSpec};

/// Matching radius for a true detection, in pixels.
pub const MATCH_RADIUS: f64 = 5.0;
/// Surround width for Weber contrast, in pixels.
pub const WEBER_MARGIN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalResult {
    pub true_detections: u64,
    pub actual_targets: u64,
    pub false_detections: u64,
    pub frames: u64,
}

impl EvalResult {
    pub fn detection_rate(&self) -> f64 {
        if self.actual_targets == 0 {
            0.0
        } else {
            self.true_detections as f64 / self.actual_targets as f64
        }
    }

    /// False detections per frame.
    pub fn false_alarm_rate(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.false_detections as f64 / self.frames as f64
        }
    }
}

/// Scores detections against ground truth over `frames`. Within each frame,
/// detection/target pairs closer than `radius` are matched one-to-one,
/// nearest first (earlier detections win ties). Unmatched detections are false.
pub fn match_and_score(
    detections: &[DetectionRecord],
    gt: &[GroundTruthPoint],
    radius: f64,
    frames: Range<u64>,
) -> EvalResult {
    let mut by_frame: BTreeMap<u64, (Vec<&DetectionRecord>, Vec<&GroundTruthPoint>)> = BTreeMap::new();
    for d in detections.iter().filter(|d| frames.contains(&d.frame)) {
        by_frame.entry(d.frame).or_default().0.push(d);
    }
    let mut actual = 0;
    for g in gt.iter().filter(|g| frames.contains(&g.frame)) {
        by_frame.entry(g.frame).or_default().1.push(g);
        actual += 1;
    }
    let r2 = radius * radius;
    let (mut tp, mut fp) = (0u64, 0u64);
    for (dets, targets) in by_frame.values() {
        let mut pairs = Vec::new();
        for (di, d) in dets.iter().enumerate() {
            for (gi, g) in targets.iter().enumerate() {
                let dx = d.x as i64 - g.x as i64;
                let dy = d.y as i64 - g.y as i64;
                let dist2 = dx * dx + dy * dy;
                if dist2 as f64 <= r2 {
                    pairs.push((dist2, di, gi));
                }
            }
        }
        pairs.sort_unstable();
        let mut det_used = vec![false; dets.len()];
        let mut gt_used = vec![false; targets.len()];
        let mut matched = 0u64;
        for (_, di, gi) in pairs {
            if !det_used[di] && !gt_used[gi] {
                det_used[di] = true;
                gt_used[gi] = true;
                matched += 1;
            }
        }
        tp += matched;
        fp += dets.len() as u64 - matched;
    }
    EvalResult {
        true_detections: tp,
        actual_targets: actual,
        false_detections: fp,
        frames: frames.end.saturating_sub(frames.start),
    }
}

/// Frames that count for scoring: everything after warm-up.
pub fn scoring_range(output: &RunOutput) -> Range<u64> {
    output.warm_up_frames as u64..output.frames
}

pub fn score_run(output: &RunOutput, gt: &[GroundTruthPoint], include_undecided: bool) -> EvalResult {
    match_and_score(
        &output.scored_detections(include_undecided),
        gt,
        MATCH_RADIUS,
        scoring_range(output),
    )
}

fn check_increasing(betas: &[f64]) -> Result<()> {
    if betas.iter().any(|b| !b.is_finite()) || betas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "beta list must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// One ROC point per `beta`, replaying the cached candidates.
pub fn roc_sweep(
    cache: &CandidateCache,
    gt: &[GroundTruthPoint],
    betas: &[f64],
    config: &RunConfig,
) -> Result<Vec<RocPoint>> {
    check_increasing(betas)?;
    betas
        .iter()
        .map(|&beta| {
            let out = cache.replay(beta, &config.classifier, config.contrast_pathway)?;
            let r = score_run(&out, gt, config.include_undecided);
            Ok(RocPoint {
                beta,
                detection_rate: r.detection_rate(),
                false_alarm_rate: r.false_alarm_rate(),
            })
        })
        .collect()
}

/// Scores at one threshold with and without the contrast pathway.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub beta: f64,
    pub with_contrast: EvalResult,
    pub without_contrast: EvalResult,
    /// Detection frame, position and direction agree between the two runs.
    pub positions_identical: bool,
}

pub fn ablation(
    cache: &CandidateCache,
    gt: &[GroundTruthPoint],
    betas: &[f64],
    config: &RunConfig,
) -> Result<Vec<AblationRow>> {
    check_increasing(betas)?;
    betas
        .iter()
        .map(|&beta| {
            let with = cache.replay(beta, &config.classifier, true)?;
            let without = cache.replay(beta, &config.classifier, false)?;
            let key = |d: &DetectionRecord| (d.frame, d.x, d.y, d.theta_deg);
            let positions_identical = with.detections.iter().map(key).eq(without.detections.iter().map(key));
            Ok(AblationRow {
                beta,
                with_contrast: score_run(&with, gt, config.include_undecided),
                without_contrast: score_run(&without, gt, config.include_undecided),
                positions_identical,
            })
        })
        .collect()
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    /// The rectangle the sequence generator paints for a block centred at `(cx, cy)`.
    pub fn centered(cx: usize, cy: usize, w: usize, h: usize) -> Self {
        Rect {
            x0: cx.saturating_sub(w / 2),
            y0: cy.saturating_sub(h / 2),
            w,
            h,
        }
    }

    fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x0 + self.w).contains(&x) && (self.y0..self.y0 + self.h).contains(&y)
    }
}

/// `|mean(target) - mean(surround)| / 255`, the surround being the ring of
/// width `margin` around `rect`.
pub fn weber_contrast(frame: &Frame, rect: Rect, margin: usize) -> Result<f64> {
    if rect.w == 0 || rect.h == 0 {
        return Err(Error::InvalidParameter("target rectangle is empty".into()));
    }
    if rect.x0 < margin
        || rect.y0 < margin
        || rect.x0 + rect.w + margin > frame.width()
        || rect.y0 + rect.h + margin > frame.height()
    {
        return Err(Error::InvalidParameter(format!(
            "target rectangle {rect:?} with margin {margin} does not fit in a {}x{} frame",
            frame.width(),
            frame.height()
        )));
    }
    let (mut st, mut nt, mut sb, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for y in rect.y0 - margin..rect.y0 + rect.h + margin {
        for x in rect.x0 - margin..rect.x0 + rect.w + margin {
            let v = frame.get(x, y);
            if rect.contains(x, y) {
                st += v;
                nt += 1;
            } else {
                sb += v;
                nb += 1;
            }
        }
    }
    Ok((st / nt as f64 - sb / nb as f64).abs() / 255.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuningAxis {
    Contrast,
    Velocity,
    Width,
    Height,
}

impl std::str::FromStr for TuningAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contrast" => Ok(TuningAxis::Contrast),
            "velocity" => Ok(TuningAxis::Velocity),
            "width" => Ok(TuningAxis::Width),
            "height" => Ok(TuningAxis::Height),
            _ => Err(Error::Config(format!(
                "unknown tuning axis {s:?} (expected contrast, velocity, width or height)"
            ))),
        }
    }
}

/// Strongest response near a target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetPeak {
    pub x: usize,
    pub y: usize,
    pub direction: Direction,
    pub response: f64,
    /// All eight directional responses at `(x, y)`.
    pub responses: [f64; Direction::COUNT],
}

/// The pixel within Euclidean distance `radius` of `(x, y)` whose largest
/// directional response is greatest (earliest pixel and smallest angle win
/// ties). The block centre itself carries no response: the STMD fires where
/// the target's trailing edge brightens the scene again.
pub fn target_peak(response: &DirectionalResponseField, x: usize, y: usize, radius: f64) -> TargetPeak {
    let (w, h) = (response.width(), response.height());
    let r = radius.max(0.0).floor() as usize;
    let mut best: Option<TargetPeak> = None;
    for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
        for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
            let (dx, dy) = (xx as f64 - x as f64, yy as f64 - y as f64);
            if dx * dx + dy * dy > radius * radius {
                continue;
            }
            let responses = response.at(xx, yy);
            let (k, v) =
                responses.iter().enumerate().fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
                );
            if best.is_none_or(|b| v > b.response) {
                best = Some(TargetPeak {
                    x: xx,
                    y: yy,
                    direction: Direction::from_index(k).expect("eight directions"),
                    response: v,
                    responses,
                });
            }
        }
    }
    best.expect("the centre pixel is always inside the disc")
}

/// Sequence for one point of a tuning sweep: the swept quantity applied to
/// `base` on a blank white background with a static view, the target moving
/// rightward along a straight path. The frame is cropped to the path plus a
/// margin so sweeps stay cheap.
pub fn tuning_spec(axis: TuningAxis, value: f64, base: &SequenceSpec) -> Result<SequenceSpec> {
    let mut spec = base.clone();
    spec.background = BackgroundSource::Uniform(255.0);
    spec.bg_velocity = 0.0;
    let as_size = |v: f64| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::InvalidParameter(format!(
                "target size must be a positive integer, got {v}"
            )))
        }
    };
    match axis {
        TuningAxis::Contrast => {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidParameter(format!(
                    "Weber contrast must be in [0, 1], got {value}"
                )));
            }
            spec.target_luminance = 255.0 * (1.0 - value);
        }
        TuningAxis::Velocity => spec.target_velocity = value,
        TuningAxis::Width => spec.target_w = as_size(value)?,
        TuningAxis::Height => spec.target_h = as_size(value)?,
    }
    let margin = (spec.target_w.max(spec.target_h) + 20) as f64;
    let travel = (spec.target_velocity * spec.frames.saturating_sub(1) as f64 / spec.rate).ceil();
    spec.height = spec.target_h + 2 * margin as usize;
    let cy = (spec.height / 2) as f64;
    spec.width = (travel + 2.0 * margin) as usize;
    spec.path = vec![(margin, cy), (margin + travel.max(1.0), cy)];
    spec.validate()?;
    Ok(spec)
}

/// Strongest directional response anywhere on row `y`.
pub fn row_peak(response: &DirectionalResponseField, y: usize) -> f64 {
    Direction::all()
        .flat_map(|d| response.field(d).row(y).iter().copied())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Mean post-warm-up STMD output for each grid value, read along the row
/// through the target centre. The tuning scenes hold nothing but the target
/// and it moves along that row, so the row peak is its response; the peak
/// trails the block by more as it gets faster or longer, which a fixed search
/// disc would miss.
pub fn tuning_experiment(
    axis: TuningAxis,
    grid: &[f64],
    base: &SequenceSpec,
    params: &PipelineParams,
) -> Result<Vec<TuningRecord>> {
    grid.iter()
        .map(|&value| {
            let spec = tuning_spec(axis, value, base)?;
            let seq = generate_sequence(&spec)?;
            let mut motion = MotionPathway::new(params.clone())?;
            let (mut sum, mut n) = (0.0, 0usize);
            for t in 0..seq.len() {
                let m = motion.process(&seq.frame(t))?;
                if m.warm_up {
                    continue;
                }
                let (_, cy) = seq.target_center(t);
                sum += row_peak(&m.response, cy);
                n += 1;
            }
            if n == 0 {
                return Err(Error::InvalidParameter(format!(
                    "sequence of {} frames ends before warm-up ({} frames)",
                    seq.len(),
                    motion.warm_up_frames()
                )));
            }
            Ok(TuningRecord {
                value,
                response: sum / n as f64,
            })
        })
        .collect()
}
