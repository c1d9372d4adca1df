//! The eight STMD preferred directions and the four T1 orientations.
//!
//! Angles map to displacements `(cos a, sin a)` in `(x, y)` index space with
//! `y` growing downward, so `a = pi/2` points down the raster.

use std::f64::consts::{FRAC_PI_4, TAU};

use crate::error::{Error, Result};

/// One of the eight preferred directions `k * pi/4`, `k = 0..8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Direction(u8);

impl Direction {
    pub const COUNT: usize = 8;

    pub fn all() -> impl Iterator<Item = Direction> {
        (0..Self::COUNT as u8).map(Direction)
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index < Self::COUNT {
            Ok(Direction(index as u8))
        } else {
            Err(Error::InvalidParameter(format!(
                "direction index {index} out of range 0..8"
            )))
        }
    }

    /// Accepts an angle within 1e-9 of a multiple of `pi/4` (modulo `2 pi`).
    pub fn from_radians(angle: f64) -> Result<Self> {
        snap_to_grid(angle, Self::COUNT)
            .map(|k| Direction(k as u8))
            .ok_or_else(|| Error::InvalidParameter(format!("{angle} rad is not one of the 8 preferred directions")))
    }

    pub fn from_degrees(deg: u32) -> Result<Self> {
        if !deg.is_multiple_of(45) || deg >= 360 {
            return Err(Error::InvalidParameter(format!(
                "{deg} deg is not one of the 8 preferred directions"
            )));
        }
        Ok(Direction((deg / 45) as u8))
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn radians(self) -> f64 {
        self.0 as f64 * FRAC_PI_4
    }

    pub fn degrees(self) -> u32 {
        self.0 as u32 * 45
    }

    /// Integer pixel displacement `round(distance * (cos, sin))`.
    pub fn offset(self, distance: f64) -> (isize, isize) {
        rounded_offset(self.radians(), distance)
    }
}

/// One of the four T1 orientations `k * pi/4`, `k = 0..4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Orientation(u8);

impl Orientation {
    pub const COUNT: usize = 4;

    pub fn all() -> impl Iterator<Item = Orientation> {
        (0..Self::COUNT as u8).map(Orientation)
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index < Self::COUNT {
            Ok(Orientation(index as u8))
        } else {
            Err(Error::InvalidParameter(format!(
                "orientation index {index} out of range 0..4"
            )))
        }
    }

    /// Accepts `0, pi/4, pi/2, 3pi/4` within 1e-9. Other angles are rejected,
    /// including `pi` and beyond.
    pub fn from_radians(angle: f64) -> Result<Self> {
        let err = || Error::InvalidParameter(format!("{angle} rad is not one of the 4 T1 orientations"));
        if !angle.is_finite() || !(-1e-9..=3.0 * FRAC_PI_4 + 1e-9).contains(&angle) {
            return Err(err());
        }
        snap_to_grid(angle, Direction::COUNT)
            .map(|k| Orientation(k as u8))
            .ok_or_else(err)
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn radians(self) -> f64 {
        self.0 as f64 * FRAC_PI_4
    }

    pub fn degrees(self) -> u32 {
        self.0 as u32 * 45
    }

    pub fn offset(self, distance: f64) -> (isize, isize) {
        rounded_offset(self.radians(), distance)
    }
}

fn rounded_offset(angle: f64, distance: f64) -> (isize, isize) {
    let dx = (distance * angle.cos()).round();
    let dy = (distance * angle.sin()).round();
    // round() can yield -0.0; the cast drops the sign.
    (dx as isize, dy as isize)
}

fn snap_to_grid(angle: f64, steps: usize) -> Option<usize> {
    if !angle.is_finite() {
        return None;
    }
    let step = TAU / steps as f64;
    let wrapped = angle.rem_euclid(TAU);
    let k = (wrapped / step).round();
    if (wrapped - k * step).abs() > 1e-9 {
        return None;
    }
    Some(k as usize % steps)
}
