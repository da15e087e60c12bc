//! Golden-angle spiral (and radial fallback) k-space trajectories, navigator
//! marking, and binning of interleaves into temporal frames.
//!
//! All k-space coordinates are in cycles/FOV, so a point at `k = N/2` sits at
//! the Nyquist edge of an `N`-pixel grid.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// 2*pi*(1 - 1/phi), the golden-angle increment in radians (~137.5078 deg).
pub const GOLDEN_ANGLE_RAD: f64 = 2.399963229728653;

/// One k-space interleave: sample points, the rotation that produced them,
/// and analytic ramp density-compensation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// (kx, ky) per readout point, cycles/FOV.
    pub points: Vec<[f64; 2]>,
    /// Rotation applied to the base interleave, radians in [0, 2*pi).
    pub angle: f64,
    /// Positive per-point compensation weights, normalized to mean 1.
    pub density_weights: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Rotate every point by `angle` radians (weights are rotation-invariant).
    pub fn rotated(&self, angle: f64) -> Trajectory {
        let (s, c) = angle.sin_cos();
        Trajectory {
            points: self
                .points
                .iter()
                .map(|&[kx, ky]| [c * kx - s * ky, s * kx + c * ky])
                .collect(),
            angle: wrap_2pi(self.angle + angle),
            density_weights: self.density_weights.clone(),
        }
    }
}

/// Grouping of interleave indices into temporal frames. The same grouping is
/// reused for every slice, since each slice replays the identical sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameBinning {
    /// Interleave indices per frame, in acquisition order.
    pub frames: Vec<Vec<usize>>,
    pub spirals_per_frame: usize,
}

impl FrameBinning {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

/// Per-slice acquisition timing: interleaves fired every `tr_s` seconds from
/// the slice's start time, then grouped by `binning`.
#[derive(Debug, Clone)]
pub struct AcquisitionSchedule {
    pub tr_s: f64,
    pub n_interleaves: usize,
    pub binning: FrameBinning,
}

impl AcquisitionSchedule {
    /// Time of interleave `k` relative to the slice acquisition start.
    pub fn interleave_time(&self, k: usize) -> f64 {
        k as f64 * self.tr_s
    }

    /// Center time of frame `f` (mean of its first and last interleave times).
    pub fn frame_center_time(&self, f: usize) -> f64 {
        let group = &self.binning.frames[f];
        let first = self.interleave_time(*group.first().expect("non-empty frame"));
        let last = self.interleave_time(*group.last().expect("non-empty frame"));
        0.5 * (first + last)
    }
}

fn wrap_2pi(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi);
    if r == two_pi {
        0.0
    } else {
        r
    }
}

/// True when interleave `k` is a navigator (fixed-angle) readout.
/// `navigator_every = 0` disables navigators.
pub fn is_navigator(k: usize, navigator_every: usize) -> bool {
    navigator_every > 0 && k % navigator_every == navigator_every - 1
}

/// Rotation angle of interleave `k`. Navigators always return 0; the rest
/// advance by the golden angle, counted over non-navigator interleaves only.
pub fn golden_angle(k: usize, navigator_every: usize) -> f64 {
    if is_navigator(k, navigator_every) {
        return 0.0;
    }
    let skipped = if navigator_every > 0 {
        (k + 1) / navigator_every
    } else {
        0
    };
    let j = k - skipped;
    wrap_2pi(j as f64 * GOLDEN_ANGLE_RAD)
}

/// Archimedean spiral interleave: r(s) = k_max*s, theta(s) = 2*pi*turns*s,
/// sampled at `readout_points` equispaced values of s in [0, 1].
pub fn make_spiral(readout_points: usize, turns: f64, k_max: f64) -> Result<Trajectory> {
    if readout_points < 8 {
        return Err(CoreError::Argument(format!(
            "readout_points must be >= 8, got {readout_points}"
        )));
    }
    if turns <= 0.0 {
        return Err(CoreError::Argument(format!("turns must be > 0, got {turns}")));
    }
    if k_max <= 0.0 {
        return Err(CoreError::Argument(format!("k_max must be > 0, got {k_max}")));
    }
    let mut points = Vec::with_capacity(readout_points);
    let mut radius = Vec::with_capacity(readout_points);
    for i in 0..readout_points {
        let s = i as f64 / (readout_points - 1) as f64;
        let r = k_max * s;
        let theta = 2.0 * std::f64::consts::PI * turns * s;
        points.push([r * theta.cos(), r * theta.sin()]);
        radius.push(r);
    }
    Ok(Trajectory {
        points,
        angle: 0.0,
        density_weights: ramp_weights(&radius, k_max, readout_points),
    })
}

/// Radial fallback: a diameter readout from -k_max to +k_max. Same interface
/// and weight model as the spiral; handy for cheap tests.
pub fn make_radial(readout_points: usize, k_max: f64) -> Result<Trajectory> {
    if readout_points < 8 {
        return Err(CoreError::Argument(format!(
            "readout_points must be >= 8, got {readout_points}"
        )));
    }
    if k_max <= 0.0 {
        return Err(CoreError::Argument(format!("k_max must be > 0, got {k_max}")));
    }
    let mut points = Vec::with_capacity(readout_points);
    let mut radius = Vec::with_capacity(readout_points);
    for i in 0..readout_points {
        let s = i as f64 / (readout_points - 1) as f64;
        let k = k_max * (2.0 * s - 1.0);
        points.push([k, 0.0]);
        radius.push(k.abs());
    }
    Ok(Trajectory {
        points,
        angle: 0.0,
        density_weights: ramp_weights(&radius, k_max, readout_points),
    })
}

/// Analytic ramp |k| with floor k_max/readout_points, normalized to mean 1.
fn ramp_weights(radius: &[f64], k_max: f64, readout_points: usize) -> Vec<f64> {
    let floor = k_max / readout_points as f64;
    let mut w: Vec<f64> = radius.iter().map(|&r| r.max(floor)).collect();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    for x in &mut w {
        *x /= mean;
    }
    w
}

/// Trajectory of interleave `k`: the base interleave rotated by its golden
/// angle. All navigators share one identical trajectory value (angle 0).
pub fn interleave_trajectory(base: &Trajectory, k: usize, navigator_every: usize) -> Trajectory {
    base.rotated(golden_angle(k, navigator_every))
}

/// Group consecutive retained interleaves into frames of `spirals_per_frame`,
/// dropping the trailing partial frame. When `exclude_navigators` is set,
/// navigator interleaves are removed before grouping.
pub fn bin_frames(
    n_interleaves: usize,
    spirals_per_frame: usize,
    navigator_every: usize,
    exclude_navigators: bool,
) -> Result<FrameBinning> {
    if spirals_per_frame < 1 {
        return Err(CoreError::Argument(
            "spirals_per_frame must be >= 1".into(),
        ));
    }
    if n_interleaves < spirals_per_frame {
        return Err(CoreError::Argument(format!(
            "n_interleaves ({n_interleaves}) must be >= spirals_per_frame ({spirals_per_frame})"
        )));
    }
    let retained: Vec<usize> = (0..n_interleaves)
        .filter(|&k| !(exclude_navigators && is_navigator(k, navigator_every)))
        .collect();
    let frames = retained
        .chunks_exact(spirals_per_frame)
        .map(|c| c.to_vec())
        .collect();
    Ok(FrameBinning {
        frames,
        spirals_per_frame,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_angle_first_interleave_is_zero() {
        assert_eq!(golden_angle(0, 6), 0.0);
    }

    #[test]
    fn golden_angle_navigators_hold_fixed_angle() {
        for k in [5, 11, 17, 23] {
            assert_eq!(golden_angle(k, 6), 0.0);
        }
    }

    #[test]
    fn golden_angle_single_increment() {
        assert!((golden_angle(1, 0) - 2.399963).abs() < 1e-6);
    }

    #[test]
    fn golden_angle_skips_navigators_in_count() {
        // k=6 is the 6th non-navigator (indices 0..4 and 6), so 5 increments.
        let expected = wrap_2pi(5.0 * GOLDEN_ANGLE_RAD);
        assert!((golden_angle(6, 6) - expected).abs() < 1e-12);
    }

    #[test]
    fn spiral_starts_at_origin_and_ends_at_k_max() {
        let t = make_spiral(64, 8.0, 32.0).unwrap();
        assert_eq!(t.points[0], [0.0, 0.0]);
        let last = t.points.last().unwrap();
        let mag = (last[0] * last[0] + last[1] * last[1]).sqrt();
        assert!((mag - 32.0).abs() < 1e-12);
    }

    #[test]
    fn spiral_weights_positive_mean_one() {
        let t = make_spiral(64, 8.0, 32.0).unwrap();
        assert!(t.density_weights.iter().all(|&w| w > 0.0));
        let mean = t.density_weights.iter().sum::<f64>() / t.density_weights.len() as f64;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_matches_explicit_matrix() {
        let t = make_spiral(32, 4.0, 16.0).unwrap();
        let a = golden_angle(1, 0);
        let rotated = t.rotated(a);
        let (s, c) = a.sin_cos();
        for (p, q) in t.points.iter().zip(rotated.points.iter()) {
            let expect = [c * p[0] - s * p[1], s * p[0] + c * p[1]];
            assert!((expect[0] - q[0]).abs() < 1e-12);
            assert!((expect[1] - q[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn navigator_trajectories_are_identical_values() {
        let base = make_spiral(32, 4.0, 16.0).unwrap();
        let t5 = interleave_trajectory(&base, 5, 6);
        let t11 = interleave_trajectory(&base, 11, 6);
        assert_eq!(t5, t11);
        assert_eq!(t5, base);
    }

    #[test]
    fn binning_paper_counts() {
        assert_eq!(bin_frames(3192, 6, 0, false).unwrap().n_frames(), 532);
    }

    #[test]
    fn binning_drops_trailing_partial() {
        let b = bin_frames(13, 6, 0, false).unwrap();
        assert_eq!(b.n_frames(), 2);
        assert_eq!(b.frames[1], vec![6, 7, 8, 9, 10, 11]);
    }

    #[test]
    fn binning_excludes_navigators() {
        // 480 interleaves with every 6th a navigator leaves 400; 400/5 = 80.
        let b = bin_frames(480, 5, 6, true).unwrap();
        assert_eq!(b.n_frames(), 80);
        for frame in &b.frames {
            for &k in frame {
                assert!(!is_navigator(k, 6));
            }
        }
    }

    #[test]
    fn binning_partitions_retained_interleaves() {
        let b = bin_frames(100, 4, 6, true).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for frame in &b.frames {
            assert_eq!(frame.len(), 4);
            for &k in frame {
                assert!(seen.insert(k), "interleave {k} appears twice");
            }
        }
    }

    #[test]
    fn three_gap_property_of_golden_angles() {
        // Sorted gaps of {angle mod pi} take at most 3 distinct values.
        for m in [13, 50, 200] {
            let mut angles: Vec<f64> = (0..m).map(|k| golden_angle(k, 0) % std::f64::consts::PI).collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut gaps: Vec<f64> = angles
                .windows(2)
                .map(|w| w[1] - w[0])
                .collect();
            gaps.push(angles[0] + std::f64::consts::PI - angles[m - 1]);
            gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut distinct = 1;
            for w in gaps.windows(2) {
                if (w[1] - w[0]).abs() > 1e-9 {
                    distinct += 1;
                }
            }
            assert!(distinct <= 3, "m={m}: {distinct} distinct gaps");
        }
    }

    #[test]
    fn schedule_frame_spacing_matches_tr() {
        let binning = bin_frames(480, 6, 0, false).unwrap();
        let sched = AcquisitionSchedule {
            tr_s: 0.0084,
            n_interleaves: 480,
            binning,
        };
        let dt = sched.frame_center_time(1) - sched.frame_center_time(0);
        assert!((dt - 0.0504).abs() < 1e-12);
    }

    #[test]
    fn spiral_rejects_bad_args() {
        assert!(make_spiral(4, 8.0, 32.0).is_err());
        assert!(make_spiral(64, 8.0, -1.0).is_err());
        assert!(make_radial(64, 0.0).is_err());
    }
}
