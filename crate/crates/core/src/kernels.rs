//! Spatial and temporal kernels of the model and the convolution engine.
//!
//! Spatial convolution is true convolution, `out(x, y) = sum k(dx, dy) f(x - dx, y - dy)`,
//! with edge-replicated borders. [`conv2`] factors each kernel into a sum of
//! separable terms when that is cheaper, otherwise it runs a padded direct loop;
//! [`conv2_naive`] is the unoptimized reference used to check both.

use nalgebra::DMatrix;

use crate::direction::Orientation;
use crate::error::{Error, Result};
use crate::frame::{Frame, FrameHistory};

/// Default tail-mass threshold for truncating Gamma kernels.
pub const DEFAULT_MASS_EPS: f64 = 1e-3;

/// Singular values below this fraction of the largest are dropped from the
/// separable factorisation.
const RANK_TOLERANCE: f64 = 1e-12;
const RECONSTRUCTION_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone)]
struct SeparableTerm {
    /// Indexed by `dy + radius`, already scaled by the singular value.
    vertical: Vec<f64>,
    /// Indexed by `dx + radius`.
    horizontal: Vec<f64>,
}

/// A square `(2r+1) x (2r+1)` kernel anchored at its centre tap.
#[derive(Debug, Clone)]
pub struct SpatialKernel {
    radius: usize,
    taps: Vec<f64>,
    /// `None` when no exact separable form was found; such kernels always
    /// take the direct path.
    terms: Option<Vec<SeparableTerm>>,
}

impl SpatialKernel {
    /// Builds a kernel from row-major taps; row index is `dy + radius`.
    pub fn from_taps(radius: usize, taps: Vec<f64>) -> Result<Self> {
        let side = 2 * radius + 1;
        if taps.len() != side * side {
            return Err(Error::InvalidParameter(format!(
                "kernel of radius {radius} needs {} taps, got {}",
                side * side,
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("kernel taps must be finite".into()));
        }
        let terms = separable_terms(radius, &taps);
        Ok(SpatialKernel { radius, taps, terms })
    }

    /// The single-tap identity kernel.
    pub fn identity() -> Self {
        Self::from_taps(0, vec![1.0]).expect("identity kernel")
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Tap at offset `(dx, dy)` from the anchor; zero outside the grid.
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        if dx.abs() > r || dy.abs() > r {
            return 0.0;
        }
        self.taps[((dy + r) as usize) * self.side() + (dx + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// Number of separable terms the optimized path would use, or `None` if
    /// the kernel has no verified decomposition.
    pub fn separable_rank(&self) -> Option<usize> {
        self.terms.as_ref().map(Vec::len)
    }

    fn prefers_separable(&self) -> bool {
        let side = self.side();
        self.terms.as_ref().is_some_and(|t| 2 * side * t.len() < side * side)
    }
}

fn separable_terms(radius: usize, taps: &[f64]) -> Option<Vec<SeparableTerm>> {
    let side = 2 * radius + 1;
    if side == 1 {
        return Some(vec![SeparableTerm {
            vertical: vec![taps[0]],
            horizontal: vec![1.0],
        }]);
    }
    let svd = DMatrix::from_row_slice(side, side, taps).svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let sigma = &svd.singular_values;
    let largest = sigma.iter().copied().fold(0.0, f64::max);
    let terms: Vec<SeparableTerm> = (0..sigma.len())
        .filter(|&i| sigma[i] > largest * RANK_TOLERANCE)
        .map(|i| SeparableTerm {
            vertical: (0..side).map(|r| u[(r, i)] * sigma[i]).collect(),
            horizontal: (0..side).map(|c| v_t[(i, c)]).collect(),
        })
        .collect();
    // the SVD occasionally returns wrong vectors for rank-deficient input, so
    // only trust a decomposition that reproduces the taps
    let scale = taps.iter().fold(0.0, |m: f64, t| m.max(t.abs()));
    for r in 0..side {
        for c in 0..side {
            let rebuilt: f64 = terms.iter().map(|t| t.vertical[r] * t.horizontal[c]).sum();
            if (rebuilt - taps[r * side + c]).abs() > scale * RECONSTRUCTION_TOLERANCE {
                return None;
            }
        }
    }
    Some(terms)
}

fn gaussian_value(x: f64, y: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    (-(x * x + y * y) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2)
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite and positive, got {value}"
        )))
    }
}

/// Isotropic Gaussian on radius `ceil(3 sigma)`, renormalised to unit sum.
pub fn gaussian_kernel(sigma: f64) -> Result<SpatialKernel> {
    check_positive("sigma", sigma)?;
    let radius = (3.0 * sigma).ceil() as usize;
    let r = radius as isize;
    let mut taps = Vec::with_capacity((2 * radius + 1).pow(2));
    for dy in -r..=r {
        for dx in -r..=r {
            taps.push(gaussian_value(dx as f64, dy as f64, sigma));
        }
    }
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    SpatialKernel::from_taps(radius, taps)
}

/// Lateral inhibition kernel `A [g]+ + B [g]-` with
/// `g = G(sigma2) - e G(sigma3) - rho`, sampled on radius `ceil(3 sigma3)`.
/// Not renormalised.
pub fn inhibition_kernel(sigma2: f64, sigma3: f64, e: f64, rho: f64, a: f64, b: f64) -> Result<SpatialKernel> {
    check_positive("sigma2", sigma2)?;
    check_positive("sigma3", sigma3)?;
    if sigma3 <= sigma2 {
        return Err(Error::InvalidParameter(format!(
            "inhibition surround sigma3 ({sigma3}) must exceed centre sigma2 ({sigma2})"
        )));
    }
    for (name, v) in [("e", e), ("rho", rho), ("A", a), ("B", b)] {
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be finite")));
        }
    }
    let radius = (3.0 * sigma3).ceil() as usize;
    let r = radius as isize;
    let mut taps = Vec::with_capacity((2 * radius + 1).pow(2));
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (dx as f64, dy as f64);
            let g = gaussian_value(x, y, sigma2) - e * gaussian_value(x, y, sigma3) - rho;
            taps.push(a * g.max(0.0) + b * g.min(0.0));
        }
    }
    SpatialKernel::from_taps(radius, taps)
}

/// Directional-derivative kernel of a T1 neuron:
/// `W_A(x + ax, y + ay) - W_A(x - ax, y - ay)` where `(ax, ay)` is the rounded
/// offset `alpha2 (cos phi, sin phi)` and `W_A = gaussian_kernel(eta)`.
///
/// Convolving with this kernel equals differencing two AMC outputs sampled at
/// `+/-(ax, ay)`, away from the frame border.
pub fn t1_kernel(eta: f64, alpha2: f64, phi: Orientation) -> Result<SpatialKernel> {
    check_positive("alpha2", alpha2)?;
    let amc = gaussian_kernel(eta)?;
    let (ax, ay) = phi.offset(alpha2);
    let radius = amc.radius() + ax.unsigned_abs().max(ay.unsigned_abs());
    let r = radius as isize;
    let mut taps = Vec::with_capacity((2 * radius + 1).pow(2));
    for dy in -r..=r {
        for dx in -r..=r {
            taps.push(amc.at(dx + ax, dy + ay) - amc.at(dx - ax, dy - ay));
        }
    }
    SpatialKernel::from_taps(radius, taps)
}

fn check_fits(frame: &Frame, kernel: &SpatialKernel) -> Result<()> {
    if frame.is_empty() {
        return Err(Error::InvalidParameter("cannot convolve an empty frame".into()));
    }
    let side = kernel.side();
    if side > frame.width() || side > frame.height() {
        return Err(Error::InvalidParameter(format!(
            "kernel {side}x{side} is larger than frame {}x{}",
            frame.width(),
            frame.height()
        )));
    }
    Ok(())
}

/// Spatial convolution with edge replication (optimized path).
pub fn conv2(frame: &Frame, kernel: &SpatialKernel) -> Result<Frame> {
    check_fits(frame, kernel)?;
    if kernel.prefers_separable() {
        Ok(conv_separable(frame, kernel))
    } else {
        Ok(conv_direct(frame, kernel))
    }
}

/// Plain quadruple-loop spatial convolution; the reference for [`conv2`].
pub fn conv2_naive(frame: &Frame, kernel: &SpatialKernel) -> Result<Frame> {
    check_fits(frame, kernel)?;
    let r = kernel.radius() as isize;
    Ok(Frame::from_fn(frame.width(), frame.height(), |x, y| {
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                acc += kernel.at(dx, dy) * frame.get_clamped(x as isize - dx, y as isize - dy);
            }
        }
        acc
    }))
}

/// Copies `row` into `buf` with `pad` replicated samples on each side.
fn pad_row(row: &[f64], pad: usize, buf: &mut Vec<f64>) {
    buf.clear();
    let first = row[0];
    let last = row[row.len() - 1];
    buf.extend(std::iter::repeat_n(first, pad));
    buf.extend_from_slice(row);
    buf.extend(std::iter::repeat_n(last, pad));
}

#[inline]
fn axpy(acc: &mut [f64], weight: f64, src: &[f64]) {
    for (a, s) in acc.iter_mut().zip(src) {
        *a += weight * s;
    }
}

fn conv_direct(frame: &Frame, kernel: &SpatialKernel) -> Frame {
    let (w, h) = frame.dims();
    let r = kernel.radius();
    let side = kernel.side();
    let pw = w + 2 * r;
    let mut padded = Vec::with_capacity(pw * (h + 2 * r));
    let mut buf = Vec::with_capacity(pw);
    for py in 0..h + 2 * r {
        let sy = py.saturating_sub(r).min(h - 1);
        pad_row(frame.row(sy), r, &mut buf);
        padded.extend_from_slice(&buf);
    }
    let taps = kernel.taps();
    let mut out = Frame::zeros(w, h);
    for y in 0..h {
        let out_row = out.row_mut(y);
        for ky in 0..side {
            // kernel row ky is dy = ky - r; source row is y - dy, padded index y + 2r - ky
            let src_row = &padded[(y + 2 * r - ky) * pw..(y + 2 * r - ky + 1) * pw];
            for kx in 0..side {
                let tap = taps[ky * side + kx];
                if tap == 0.0 {
                    continue;
                }
                let start = 2 * r - kx;
                axpy(out_row, tap, &src_row[start..start + w]);
            }
        }
    }
    out
}

fn conv_separable(frame: &Frame, kernel: &SpatialKernel) -> Frame {
    let (w, h) = frame.dims();
    let r = kernel.radius();
    let side = kernel.side();
    let mut out = Frame::zeros(w, h);
    let mut buf = Vec::with_capacity(w + 2 * r);
    let mut horizontal = Frame::zeros(w, h);
    for term in kernel.terms.iter().flatten() {
        for y in 0..h {
            pad_row(frame.row(y), r, &mut buf);
            let dst = horizontal.row_mut(y);
            dst.fill(0.0);
            for kx in 0..side {
                let tap = term.horizontal[kx];
                if tap == 0.0 {
                    continue;
                }
                let start = 2 * r - kx;
                axpy(dst, tap, &buf[start..start + w]);
            }
        }
        for y in 0..h {
            for ky in 0..side {
                let tap = term.vertical[ky];
                if tap == 0.0 {
                    continue;
                }
                // dy = ky - r, source row y - dy
                let sy = (y + r).saturating_sub(ky).min(h - 1);
                axpy(out.row_mut(y), tap, horizontal.row(sy));
            }
        }
    }
    out
}

/// Order and time constant of a Gamma kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSpec {
    pub order: u32,
    pub tau: f64,
}

impl GammaSpec {
    pub fn new(order: u32, tau: f64) -> Self {
        GammaSpec { order, tau }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidParameter(format!(
                "Gamma order must be >= 1, got {}",
                self.order
            )));
        }
        check_positive("Gamma tau", self.tau)
    }

    /// Continuous kernel value at lag `t` (frames).
    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let n = self.order as f64;
        let log_fact: f64 = (1..self.order).map(|k| (k as f64).ln()).sum();
        (n * (n * t).ln() - n * t / self.tau - log_fact - (n + 1.0) * self.tau.ln()).exp()
    }

    /// Continuous mass beyond lag `t`, i.e. the upper regularised gamma
    /// function `Q(n + 1, n t / tau)` (integer shape, closed form).
    pub fn tail_mass(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let x = self.order as f64 * t / self.tau;
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..=self.order {
            term *= x / j as f64;
            sum += term;
        }
        (-x).exp() * sum
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemporalKind {
    Gamma(GammaSpec),
    Bandpass { fast: GammaSpec, slow: GammaSpec },
}

/// Causal kernel over frame lags `0..len`.
#[derive(Debug, Clone)]
pub struct TemporalKernel {
    taps: Vec<f64>,
    kind: TemporalKind,
}

impl TemporalKernel {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn kind(&self) -> TemporalKind {
        self.kind
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }
}

/// Gamma kernel sampled at integer lags, truncated where the continuous tail
/// mass drops below `mass_eps`, renormalised to unit sum.
pub fn gamma_kernel(order: u32, tau: f64, mass_eps: f64) -> Result<TemporalKernel> {
    let spec = GammaSpec::new(order, tau);
    spec.validate()?;
    if !(mass_eps > 0.0 && mass_eps <= 0.01) {
        return Err(Error::InvalidParameter(format!(
            "mass_eps must lie in (0, 0.01], got {mass_eps}"
        )));
    }
    let mut len = 1usize;
    while spec.tail_mass(len as f64) >= mass_eps {
        len += 1;
    }
    let mut taps: Vec<f64> = (0..len).map(|k| spec.value(k as f64)).collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    Ok(TemporalKernel {
        taps,
        kind: TemporalKind::Gamma(spec),
    })
}

/// Band-pass kernel: fast Gamma minus slow Gamma, zero-padded to the longer one.
pub fn bandpass_kernel(n1: u32, tau1: f64, n2: u32, tau2: f64) -> Result<TemporalKernel> {
    let fast = gamma_kernel(n1, tau1, DEFAULT_MASS_EPS)?;
    let slow = gamma_kernel(n2, tau2, DEFAULT_MASS_EPS)?;
    let len = fast.len().max(slow.len());
    let taps = (0..len)
        .map(|k| fast.taps.get(k).copied().unwrap_or(0.0) - slow.taps.get(k).copied().unwrap_or(0.0))
        .collect();
    Ok(TemporalKernel {
        taps,
        kind: TemporalKind::Bandpass {
            fast: GammaSpec::new(n1, tau1),
            slow: GammaSpec::new(n2, tau2),
        },
    })
}

/// `out(x, y) = sum_k history(x, y, now - k) taps[k]`; lags older than the
/// stored history contribute nothing.
pub fn temporal_conv(history: &FrameHistory, kernel: &TemporalKernel) -> Result<Frame> {
    let newest = history
        .newest()
        .ok_or_else(|| Error::InvalidState("temporal convolution over an empty history".into()))?;
    let mut out = Frame::zeros(newest.width(), newest.height());
    for (frame, &tap) in history.iter().zip(kernel.taps()) {
        if tap != 0.0 {
            axpy(out.as_mut_slice(), tap, frame.as_slice());
        }
    }
    Ok(out)
}
