use std::f64::consts::{FRAC_PI_2, PI, TAU};

use super::raw::{RawFrame, NUM_LANDMARKS};

pub const HORIZONTAL_BINS: usize = 6;
pub const ANGULAR_BINS: usize = 4;
pub const PHI_DIM: usize = HORIZONTAL_BINS + ANGULAR_BINS + 3;

/// Horizontal-velocity bin, edges in pixels:
/// `(-inf,-5] (-5,-2.5] (-2.5,0] (0,2.5] (2.5,5] (5,inf)`.
pub fn horizontal_bin(dx: f64) -> usize {
    if dx <= -5.0 {
        0
    } else if dx <= -2.5 {
        1
    } else if dx <= 0.0 {
        2
    } else if dx <= 2.5 {
        3
    } else if dx <= 5.0 {
        4
    } else {
        5
    }
}

/// Motion direction mapped to `(0, 2π]`; zero and negative angles wrap by 2π.
pub fn motion_angle(dx: f64, dy: f64) -> f64 {
    let theta = dy.atan2(dx);
    if theta <= 0.0 {
        theta + TAU
    } else {
        theta
    }
}

/// Quadrant bin of an angle in `(0, 2π]`.
pub fn angular_bin(theta: f64) -> usize {
    if theta <= FRAC_PI_2 {
        0
    } else if theta <= PI {
        1
    } else if theta <= 3.0 * FRAC_PI_2 {
        2
    } else {
        3
    }
}

/// Landmark velocity histograms between two valid frames, as frequencies
/// over the 68 landmarks. `mirror_x` negates horizontal displacement.
pub fn landmark_motion_histograms(
    prev: &RawFrame,
    curr: &RawFrame,
    mirror_x: bool,
) -> ([f64; HORIZONTAL_BINS], [f64; ANGULAR_BINS]) {
    let mut horizontal = [0usize; HORIZONTAL_BINS];
    let mut angular = [0usize; ANGULAR_BINS];
    for (&(x0, y0), &(x1, y1)) in prev.landmarks.iter().zip(&curr.landmarks) {
        let mut dx = x1 - x0;
        if mirror_x {
            dx = -dx;
        }
        let dy = y1 - y0;
        horizontal[horizontal_bin(dx)] += 1;
        angular[angular_bin(motion_angle(dx, dy))] += 1;
    }
    let n = NUM_LANDMARKS as f64;
    (horizontal.map(|c| c as f64 / n), angular.map(|c| c as f64 / n))
}

/// `[6 horizontal | 4 angular | pitch, yaw, roll]`.
pub fn head_features(prev: &RawFrame, curr: &RawFrame, mirror_x: bool) -> Vec<f64> {
    let (h, a) = landmark_motion_histograms(prev, curr, mirror_x);
    let mut phi = Vec::with_capacity(PHI_DIM);
    phi.extend_from_slice(&h);
    phi.extend_from_slice(&a);
    phi.extend_from_slice(&curr.pose);
    phi
}
