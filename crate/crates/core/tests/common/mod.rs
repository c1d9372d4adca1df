use stmd_core::Frame;

/// Direct convolution with replicated borders, written out independently of
/// the library's kernels module. `taps` is row-major, row index `dy + radius`.
pub fn reference_conv(frame: &Frame, taps: &[f64], radius: usize) -> Frame {
    let (w, h) = frame.dims();
    let side = 2 * radius + 1;
    let r = radius as isize;
    Frame::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for ky in 0..side {
            for kx in 0..side {
                let sx = (x as isize - (kx as isize - r)).clamp(0, w as isize - 1) as usize;
                let sy = (y as isize - (ky as isize - r)).clamp(0, h as isize - 1) as usize;
                acc += taps[ky * side + kx] * frame.get(sx, sy);
            }
        }
        acc
    })
}

pub fn max_diff(a: &Frame, b: &Frame) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}
