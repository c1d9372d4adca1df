//! Contrast pathway: AMC pooling and T1 directional contrast.

use crate::direction::Orientation;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::kernels::{conv2, gaussian_kernel, t1_kernel, SpatialKernel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastParams {
    pub eta: f64,
    pub alpha2: f64,
}

impl Default for ContrastParams {
    fn default() -> Self {
        ContrastParams { eta: 1.5, alpha2: 3.0 }
    }
}

impl ContrastParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.alpha2.is_finite() && self.alpha2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha2 must be non-negative, got {}",
                self.alpha2
            )));
        }
        Ok(())
    }
}

/// Signed T1 output `T(x, y, phi)` for the four orientations.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastField {
    pub t: u64,
    fields: Vec<Frame>,
}

impl ContrastField {
    pub fn new(t: u64, fields: Vec<Frame>) -> Result<Self> {
        if fields.len() != Orientation::COUNT {
            return Err(Error::InvalidParameter(format!(
                "expected {} orientation fields, got {}",
                Orientation::COUNT,
                fields.len()
            )));
        }
        Ok(ContrastField { t, fields })
    }

    pub fn field(&self, phi: Orientation) -> &Frame {
        &self.fields[phi.index()]
    }

    pub fn at(&self, x: usize, y: usize) -> [f64; Orientation::COUNT] {
        let mut out = [0.0; Orientation::COUNT];
        for (o, f) in out.iter_mut().zip(&self.fields) {
            *o = f.get(x, y);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.fields.iter().map(Frame::max_abs).fold(0.0, f64::max)
    }
}

/// AMC output: the ommatidia field pooled by a Gaussian of width `eta`.
pub fn amc(ommatidia: &Frame, eta: f64) -> Result<Frame> {
    conv2(ommatidia, &gaussian_kernel(eta)?)
}

/// T1 output via the fused directional-derivative kernel.
pub fn t1(ommatidia: &Frame, eta: f64, alpha2: f64, phi: Orientation) -> Result<Frame> {
    conv2(ommatidia, &t1_kernel(eta, alpha2, phi)?)
}

/// T1 output as the explicit difference `A(x + a) - A(x - a)` of two AMC
/// samples, with sample coordinates clamped to the frame.
pub fn t1_from_amc(amc: &Frame, alpha2: f64, phi: Orientation) -> Frame {
    let (ax, ay) = phi.offset(alpha2);
    Frame::from_fn(amc.width(), amc.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        amc.get_clamped(x + ax, y + ay) - amc.get_clamped(x - ax, y - ay)
    })
}

/// Stateless per-frame contrast pathway with its four T1 kernels prebuilt.
#[derive(Debug, Clone)]
pub struct ContrastPathway {
    params: ContrastParams,
    kernels: Vec<SpatialKernel>,
}

impl ContrastPathway {
    pub fn new(params: ContrastParams) -> Result<Self> {
        params.validate()?;
        let kernels = Orientation::all()
            .map(|phi| t1_kernel(params.eta, params.alpha2, phi))
            .collect::<Result<Vec<_>>>()?;
        Ok(ContrastPathway { params, kernels })
    }

    pub fn params(&self) -> ContrastParams {
        self.params
    }

    pub fn process(&self, t: u64, ommatidia: &Frame) -> Result<ContrastField> {
        let fields = self
            .kernels
            .iter()
            .map(|k| conv2(ommatidia, k))
            .collect::<Result<Vec<_>>>()?;
        ContrastField::new(t, fields)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_frame(dark_left: bool) -> Frame {
        Frame::from_fn(40, 40, |x, _| {
            let left = x < 20;
            if left == dark_left {
                20.0
            } else {
                220.0
            }
        })
    }

    #[test]
    fn uniform_frame_has_no_contrast() {
        let cp = ContrastPathway::new(ContrastParams::default()).unwrap();
        let out = cp.process(0, &Frame::filled(30, 30, 140.0)).unwrap();
        assert!(out.max_abs() < 1e-9);
    }

    #[test]
    fn amc_constant_and_impulse() {
        let out = amc(&Frame::filled(20, 20, 9.0), 1.5).unwrap();
        assert!(out.as_slice().iter().all(|v| (v - 9.0).abs() < 1e-9));
        let mut imp = Frame::zeros(21, 21);
        imp.set(10, 10, 1.0);
        let out = amc(&imp, 1.5).unwrap();
        let k = gaussian_kernel(1.5).unwrap();
        assert!((out.get(12, 9) - k.at(2, -1)).abs() < 1e-15);
    }

    #[test]
    fn vertical_step_edge() {
        let cp = ContrastPathway::new(ContrastParams::default()).unwrap();
        let out = cp.process(0, &step_frame(true)).unwrap();
        let t0 = out.field(Orientation::from_index(0).unwrap());
        let t90 = out.field(Orientation::from_index(2).unwrap());
        assert!(t0.get(20, 20) > 0.0);
        assert!(t0.get(19, 20) > 0.0);
        assert!(t90.max_abs() < 1e-9);

        let flipped = cp.process(0, &step_frame(false)).unwrap();
        let f0 = flipped.field(Orientation::from_index(0).unwrap());
        // 240 - I maps one polarity onto the other
        for (a, b) in t0.as_slice().iter().zip(f0.as_slice()) {
            assert!((a + b).abs() < 1e-9);
        }
    }

    #[test]
    fn fused_matches_explicit_in_interior() {
        let p = Frame::from_fn(48, 40, |x, y| ((x * 31 + y * 17) % 23) as f64 * 9.0);
        let a = amc(&p, 1.5).unwrap();
        for phi in Orientation::all() {
            let fused = t1(&p, 1.5, 3.0, phi).unwrap();
            let explicit = t1_from_amc(&a, 3.0, phi);
            for y in 8..32 {
                for x in 8..40 {
                    assert!((fused.get(x, y) - explicit.get(x, y)).abs() < 1e-9);
                }
            }
        }
    }
}
