//! Motion pathway: ommatidia, LMC band-pass, medulla channels, directional
//! STMD correlation and lateral inhibition.

use std::f64::consts::TAU;

use crate::direction::Direction;
use crate::error::{Error, Result};
use crate::frame::{Frame, FrameHistory};
use crate::kernels::{
    bandpass_kernel, conv2, gamma_kernel, gaussian_kernel, inhibition_kernel, temporal_conv, GammaSpec, SpatialKernel,
    TemporalKernel, DEFAULT_MASS_EPS,
};

/// Lateral inhibition kernel constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InhibitionParams {
    pub a: f64,
    pub b: f64,
    pub e: f64,
    pub rho: f64,
    pub sigma2: f64,
    pub sigma3: f64,
}

impl Default for InhibitionParams {
    fn default() -> Self {
        InhibitionParams {
            a: 1.0,
            b: 3.0,
            e: 1.0,
            rho: 0.0,
            sigma2: 1.5,
            sigma3: 3.0,
        }
    }
}

/// Motion pathway parameters. Defaults are the published model settings;
/// the detection threshold has no default and must be configured.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    pub sigma1: f64,
    /// LMC fast/slow Gamma pair `(n1, tau1)`, `(n2, tau2)`.
    pub lmc_fast: GammaSpec,
    pub lmc_slow: GammaSpec,
    /// Correlation distance in pixels.
    pub alpha1: u32,
    /// Mi1 delay `(n3, tau3)`.
    pub mi1: GammaSpec,
    /// Tm1 delays `(n4, tau4)` and `(n5, tau5)`.
    pub tm1_fast: GammaSpec,
    pub tm1_slow: GammaSpec,
    pub inhibition: InhibitionParams,
    pub beta: Option<f64>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            sigma1: 1.0,
            lmc_fast: GammaSpec::new(2, 3.0),
            lmc_slow: GammaSpec::new(6, 9.0),
            alpha1: 3,
            mi1: GammaSpec::new(3, 15.0),
            tm1_fast: GammaSpec::new(5, 25.0),
            tm1_slow: GammaSpec::new(8, 40.0),
            inhibition: InhibitionParams::default(),
            beta: None,
        }
    }
}

impl PipelineParams {
    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1.is_finite() && self.sigma1 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma1 must be positive, got {}",
                self.sigma1
            )));
        }
        for spec in [self.lmc_fast, self.lmc_slow, self.mi1, self.tm1_fast, self.tm1_slow] {
            spec.validate()?;
        }
        if self.alpha1 < 1 {
            return Err(Error::InvalidParameter("alpha1 must be >= 1".into()));
        }
        let inh = &self.inhibition;
        inhibition_kernel(inh.sigma2, inh.sigma3, inh.e, inh.rho, inh.a, inh.b)?;
        if let Some(beta) = self.beta {
            if !(beta.is_finite() && beta >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "beta must be a non-negative number, got {beta}"
                )));
            }
        }
        Ok(())
    }

    /// The configured threshold, or an error if it was never set.
    pub fn require_beta(&self) -> Result<f64> {
        self.beta
            .ok_or_else(|| Error::Config("detection threshold beta must be configured explicitly".into()))
    }
}

/// Ommatidia: Gaussian blur of the raw luminance frame.
pub fn ommatidia(raw: &Frame, kernel: &SpatialKernel) -> Result<Frame> {
    conv2(raw, kernel)
}

/// LMC: band-pass temporal filter over the ommatidia history.
pub fn lmc(history: &FrameHistory, bandpass: &TemporalKernel) -> Result<Frame> {
    temporal_conv(history, bandpass)
}

/// Outputs of the four medulla channels for one frame.
#[derive(Debug, Clone)]
pub struct MedullaOutput {
    pub t: u64,
    /// `[L]+`
    pub tm3: Frame,
    /// `[-L]+`
    pub tm2: Frame,
    /// Tm3 delayed by `(n3, tau3)`.
    pub mi1: Frame,
    /// Tm2 delayed by `(n4, tau4)`.
    pub tm1_fast: Frame,
    /// Tm2 delayed by `(n5, tau5)`.
    pub tm1_slow: Frame,
}

/// Histories of the rectified LMC output feeding the medulla delay lines.
#[derive(Debug, Clone)]
pub struct MedullaState {
    mi1_kernel: TemporalKernel,
    tm1_fast_kernel: TemporalKernel,
    tm1_slow_kernel: TemporalKernel,
    on_history: FrameHistory,
    off_history: FrameHistory,
    next_t: Option<u64>,
}

impl MedullaState {
    pub fn new(mi1: GammaSpec, tm1_fast: GammaSpec, tm1_slow: GammaSpec) -> Result<Self> {
        let mi1_kernel = gamma_kernel(mi1.order, mi1.tau, DEFAULT_MASS_EPS)?;
        let tm1_fast_kernel = gamma_kernel(tm1_fast.order, tm1_fast.tau, DEFAULT_MASS_EPS)?;
        let tm1_slow_kernel = gamma_kernel(tm1_slow.order, tm1_slow.tau, DEFAULT_MASS_EPS)?;
        let on_history = FrameHistory::new(mi1_kernel.len());
        let off_history = FrameHistory::new(tm1_fast_kernel.len().max(tm1_slow_kernel.len()));
        Ok(MedullaState {
            mi1_kernel,
            tm1_fast_kernel,
            tm1_slow_kernel,
            on_history,
            off_history,
            next_t: None,
        })
    }

    /// Longest delay kernel, in frames.
    pub fn depth(&self) -> usize {
        self.mi1_kernel
            .len()
            .max(self.tm1_fast_kernel.len())
            .max(self.tm1_slow_kernel.len())
    }

    /// Rectifies `l` (the LMC output of frame `t`), pushes it into the delay
    /// lines and returns all four channels.
    pub fn step(&mut self, t: u64, l: &Frame) -> Result<MedullaOutput> {
        if let Some(expected) = self.next_t {
            if t != expected {
                return Err(Error::InvalidState(format!(
                    "medulla expected frame {expected}, got frame {t}"
                )));
            }
        }
        let tm3 = l.map(|v| v.max(0.0));
        let tm2 = l.map(|v| (-v).max(0.0));
        self.on_history.push(tm3.clone());
        self.off_history.push(tm2.clone());
        let mi1 = temporal_conv(&self.on_history, &self.mi1_kernel)?;
        let tm1_fast = temporal_conv(&self.off_history, &self.tm1_fast_kernel)?;
        let tm1_slow = temporal_conv(&self.off_history, &self.tm1_slow_kernel)?;
        self.next_t = Some(t + 1);
        Ok(MedullaOutput {
            t,
            tm3,
            tm2,
            mi1,
            tm1_fast,
            tm1_slow,
        })
    }
}

/// STMD correlation for one preferred direction:
/// `D = Tm3(x) * (Tm1_fast(x) + Mi1(x')) * Tm1_slow(x')`.
///
/// The partner `x'` lies `alpha1` pixels *upstream*, `x' = x - alpha1 (cos theta, sin theta)`:
/// the slow Tm1 delay means `x'` must be crossed first, so this is the
/// placement under which `theta` is the direction of motion the cell prefers.
/// Pixels whose partner falls outside the frame yield 0.
pub fn stmd_correlate(medulla: &MedullaOutput, direction: Direction, alpha1: u32) -> Frame {
    let (w, h) = medulla.tm3.dims();
    let (ox, oy) = direction.offset(alpha1 as f64);
    let (dx, dy) = (-ox, -oy);
    let mut out = Frame::zeros(w, h);
    let x_lo = (-dx).max(0) as usize;
    let x_hi = (w as isize - dx.max(0)).max(0) as usize;
    let y_lo = (-dy).max(0) as usize;
    let y_hi = (h as isize - dy.max(0)).max(0) as usize;
    if x_lo >= x_hi || y_lo >= y_hi {
        return out;
    }
    for y in y_lo..y_hi {
        let yp = (y as isize + dy) as usize;
        let tm3 = &medulla.tm3.row(y)[x_lo..x_hi];
        let fast = &medulla.tm1_fast.row(y)[x_lo..x_hi];
        let xp_lo = (x_lo as isize + dx) as usize;
        let xp_hi = (x_hi as isize + dx) as usize;
        let mi1 = &medulla.mi1.row(yp)[xp_lo..xp_hi];
        let slow = &medulla.tm1_slow.row(yp)[xp_lo..xp_hi];
        let dst = &mut out.row_mut(y)[x_lo..x_hi];
        for i in 0..dst.len() {
            dst[i] = tm3[i] * (fast[i] + mi1[i]) * slow[i];
        }
    }
    out
}

/// `E = max(D conv W_s, 0)`.
pub fn lateral_inhibit(correlation: &Frame, kernel: &SpatialKernel) -> Result<Frame> {
    let mut e = conv2(correlation, kernel)?;
    e.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(e)
}

/// Motion direction estimate: angle of `sum_theta E(theta) (cos theta, sin theta)`
/// mapped into `[0, 2 pi)`.
pub fn estimate_direction(responses: &[f64; Direction::COUNT]) -> Result<f64> {
    if !responses.iter().any(|&v| v > 0.0) {
        return Err(Error::UndefinedDirection);
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for d in Direction::all() {
        let v = responses[d.index()];
        sx += v * d.radians().cos();
        sy += v * d.radians().sin();
    }
    let angle = sy.atan2(sx).rem_euclid(TAU);
    Ok(if angle >= TAU { 0.0 } else { angle })
}

/// Inhibited STMD output `E(x, y, theta)` for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalResponseField {
    pub t: u64,
    fields: Vec<Frame>,
}

impl DirectionalResponseField {
    pub fn new(t: u64, fields: Vec<Frame>) -> Result<Self> {
        if fields.len() != Direction::COUNT {
            return Err(Error::InvalidParameter(format!(
                "expected {} direction fields, got {}",
                Direction::COUNT,
                fields.len()
            )));
        }
        let dims = fields[0].dims();
        if fields.iter().any(|f| f.dims() != dims) {
            return Err(Error::InvalidParameter("direction fields differ in size".into()));
        }
        Ok(DirectionalResponseField { t, fields })
    }

    pub fn width(&self) -> usize {
        self.fields[0].width()
    }

    pub fn height(&self) -> usize {
        self.fields[0].height()
    }

    pub fn field(&self, direction: Direction) -> &Frame {
        &self.fields[direction.index()]
    }

    pub fn at(&self, x: usize, y: usize) -> [f64; Direction::COUNT] {
        let mut out = [0.0; Direction::COUNT];
        for (o, f) in out.iter_mut().zip(&self.fields) {
            *o = f.get(x, y);
        }
        out
    }

    /// Per-pixel maximum over directions and the index of the first direction
    /// attaining it.
    pub fn peak(&self) -> (Frame, Vec<u8>) {
        let (w, h) = (self.width(), self.height());
        let mut best = self.fields[0].clone();
        let mut arg = vec![0u8; w * h];
        for (k, f) in self.fields.iter().enumerate().skip(1) {
            for ((b, a), &v) in best.as_mut_slice().iter_mut().zip(arg.iter_mut()).zip(f.as_slice()) {
                if v > *b {
                    *b = v;
                    *a = k as u8;
                }
            }
        }
        (best, arg)
    }

    pub fn max(&self) -> f64 {
        self.fields.iter().map(Frame::max).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.fields.iter().map(Frame::max_abs).fold(0.0, f64::max)
    }
}

/// Motion pathway output for one input frame.
#[derive(Debug, Clone)]
pub struct MotionFrame {
    pub t: u64,
    /// Ommatidia output, shared with the contrast pathway.
    pub ommatidia: Frame,
    pub lmc: Frame,
    pub response: DirectionalResponseField,
    /// Set while the temporal filters still lack a full history.
    pub warm_up: bool,
}

/// Streaming motion pathway. Frames must arrive in order.
#[derive(Debug, Clone)]
pub struct MotionPathway {
    params: PipelineParams,
    ommatidia_kernel: SpatialKernel,
    lmc_kernel: TemporalKernel,
    inhibition: SpatialKernel,
    ommatidia_history: FrameHistory,
    medulla: MedullaState,
    dims: Option<(usize, usize)>,
    next_t: u64,
}

impl MotionPathway {
    pub fn new(params: PipelineParams) -> Result<Self> {
        params.validate()?;
        let ommatidia_kernel = gaussian_kernel(params.sigma1)?;
        let lmc_kernel = bandpass_kernel(
            params.lmc_fast.order,
            params.lmc_fast.tau,
            params.lmc_slow.order,
            params.lmc_slow.tau,
        )?;
        let inh = params.inhibition;
        let inhibition = inhibition_kernel(inh.sigma2, inh.sigma3, inh.e, inh.rho, inh.a, inh.b)?;
        let medulla = MedullaState::new(params.mi1, params.tm1_fast, params.tm1_slow)?;
        Ok(MotionPathway {
            ommatidia_history: FrameHistory::new(lmc_kernel.len()),
            params,
            ommatidia_kernel,
            lmc_kernel,
            inhibition,
            medulla,
            dims: None,
            next_t: 0,
        })
    }

    pub fn params(&self) -> &PipelineParams {
        &self.params
    }

    /// Frames needed before the LMC and the medulla delay lines see a full
    /// history: `len(H) + max(len(Gamma_3..5)) - 1`.
    pub fn warm_up_frames(&self) -> usize {
        warm_up_frames(self.lmc_kernel.len(), self.medulla.depth())
    }

    pub fn frames_processed(&self) -> u64 {
        self.next_t
    }

    pub fn process(&mut self, raw: &Frame) -> Result<MotionFrame> {
        match self.dims {
            None => self.dims = Some(raw.dims()),
            Some(d) if d != raw.dims() => {
                return Err(Error::InvalidParameter(format!(
                    "frame {} is {}x{}, stream is {}x{}",
                    self.next_t,
                    raw.width(),
                    raw.height(),
                    d.0,
                    d.1
                )))
            }
            Some(_) => {}
        }
        let t = self.next_t;
        let p = ommatidia(raw, &self.ommatidia_kernel)?;
        self.ommatidia_history.push(p.clone());
        let l = lmc(&self.ommatidia_history, &self.lmc_kernel)?;
        let medulla = self.medulla.step(t, &l)?;
        let mut fields = Vec::with_capacity(Direction::COUNT);
        for d in Direction::all() {
            let corr = stmd_correlate(&medulla, d, self.params.alpha1);
            fields.push(lateral_inhibit(&corr, &self.inhibition)?);
        }
        self.next_t += 1;
        Ok(MotionFrame {
            t,
            ommatidia: p,
            lmc: l,
            response: DirectionalResponseField::new(t, fields)?,
            warm_up: (t as usize) < self.warm_up_frames(),
        })
    }
}

pub(crate) fn warm_up_frames(lmc_len: usize, medulla_depth: usize) -> usize {
    lmc_len + medulla_depth - 1
}
