//! Dynamic multislice digital phantom with known, per-slice-asynchronous
//! cardiac and respiratory motion.
//!
//! The phantom is a stack of soft-edged ellipsoids (torso, liver, myocardium,
//! blood pool). Cardiac phase contracts the blood pool sinusoidally (minimum
//! radius at phase pi) and sways the heart slightly in-plane; respiratory
//! phase translates everything in-plane. The sway makes the rendered image an
//! injective function of cardiac phase, so phase recovery has a unique answer.
//! Because each slice is acquired sequentially, its motion schedule starts at
//! a different offset; matched frame indices across slices therefore sit at
//! different phases. That misalignment is exactly what joint training must undo.

use crate::error::{ConfigViolation, CoreError, Result};
use crate::sampling::AcquisitionSchedule;
use crate::types::{Grid, Volume3D};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

/// One soft-edged ellipsoid structure, geometry in millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center_mm: [f64; 3],
    pub radii_mm: [f64; 3],
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    /// (Nx, Ny, Nz) voxels; Nz is the number of slices.
    pub grid: (usize, usize, usize),
    /// In-plane field of view in mm.
    pub fov_mm: f64,
    /// Through-plane spacing between slices in mm.
    pub slice_spacing_mm: f64,
    /// Cardiac frequency, Hz.
    pub f_cardiac: f64,
    /// Respiratory frequency, Hz.
    pub f_resp: f64,
    /// Acquisition start time of each slice, seconds; length must equal Nz.
    pub slice_offsets_s: Vec<f64>,
    /// Background-to-foreground structures, rendered in order.
    pub torso: Ellipsoid,
    pub liver: Ellipsoid,
    pub myocardium: Ellipsoid,
    pub blood_pool: Ellipsoid,
    /// Fractional in-plane blood-pool radius reduction at systole (phase pi).
    pub cardiac_contraction: f64,
    /// In-plane heart sway amplitude over the cardiac cycle, mm.
    pub cardiac_sway_mm: f64,
    /// Respiratory translation amplitude, voxels.
    pub resp_shift_voxels: f64,
    /// Soft-edge width as a fraction of each ellipsoid radius.
    pub edge_fraction: f64,
}

impl PhantomConfig {
    /// Desk-scale default: 4 slices, 64x64 in-plane, physiological rates.
    /// Slice offsets include a 0.35 s inter-slice gap on top of the 4.032 s
    /// acquisition (480 interleaves at TR = 8.4 ms) so that matched frames of
    /// different slices land at well-separated phases.
    pub fn default_desk() -> Self {
        let slice_stride_s = 480.0 * 0.0084 + 0.35;
        Self {
            grid: (64, 64, 4),
            fov_mm: 320.0,
            slice_spacing_mm: 8.0,
            f_cardiac: 1.25,
            f_resp: 0.25,
            slice_offsets_s: (0..4).map(|z| z as f64 * slice_stride_s).collect(),
            torso: Ellipsoid {
                center_mm: [0.0, 8.0, 0.0],
                radii_mm: [120.0, 92.0, 200.0],
                intensity: 0.25,
            },
            liver: Ellipsoid {
                center_mm: [46.0, 36.0, -6.0],
                radii_mm: [52.0, 40.0, 60.0],
                intensity: 0.5,
            },
            myocardium: Ellipsoid {
                center_mm: [-26.0, -20.0, 0.0],
                radii_mm: [38.0, 34.0, 30.0],
                intensity: 0.85,
            },
            blood_pool: Ellipsoid {
                center_mm: [-26.0, -20.0, 0.0],
                radii_mm: [26.0, 23.0, 24.0],
                intensity: 1.0,
            },
            cardiac_contraction: 0.35,
            cardiac_sway_mm: 6.0,
            resp_shift_voxels: 3.0,
            edge_fraction: 0.1,
        }
    }

    pub fn grid_struct(&self) -> Grid {
        Grid::new(self.grid.0, self.grid.1, self.grid.2)
    }

    pub fn n_slices(&self) -> usize {
        self.grid.2
    }

    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        let (nx, ny, nz) = self.grid;
        if nx < 16 || ny < 16 {
            violations.push(ConfigViolation {
                key: "phantom.grid".into(),
                message: format!("Nx, Ny must be >= 16, got ({nx}, {ny})"),
            });
        }
        if nz < 2 {
            violations.push(ConfigViolation {
                key: "phantom.grid".into(),
                message: format!("Nz (slices) must be >= 2, got {nz}"),
            });
        }
        if !(self.f_resp > 0.0 && self.f_cardiac > 0.0 && self.f_resp < self.f_cardiac) {
            violations.push(ConfigViolation {
                key: "phantom.f_resp".into(),
                message: format!(
                    "need 0 < f_resp < f_cardiac, got f_resp={} f_cardiac={}",
                    self.f_resp, self.f_cardiac
                ),
            });
        }
        if self.slice_offsets_s.len() != nz {
            violations.push(ConfigViolation {
                key: "phantom.slice_offsets_s".into(),
                message: format!(
                    "expected {} offsets (one per slice), got {}",
                    nz,
                    self.slice_offsets_s.len()
                ),
            });
        }
        if self.slice_offsets_s.iter().any(|&t| t < 0.0) {
            violations.push(ConfigViolation {
                key: "phantom.slice_offsets_s".into(),
                message: "offsets must be >= 0".into(),
            });
        }
        let resp_mm = self.resp_shift_voxels * self.fov_mm / ny.max(1) as f64;
        for (name, e) in [
            ("torso", &self.torso),
            ("liver", &self.liver),
            ("myocardium", &self.myocardium),
            ("blood_pool", &self.blood_pool),
        ] {
            let cardiac = if name == "torso" || name == "liver" {
                0.0
            } else {
                self.cardiac_sway_mm.abs()
            };
            let reach_x = e.center_mm[0].abs() + e.radii_mm[0] + cardiac;
            let reach_y = e.center_mm[1].abs() + e.radii_mm[1] + resp_mm.abs();
            if reach_x > self.fov_mm / 2.0 || reach_y > self.fov_mm / 2.0 {
                violations.push(ConfigViolation {
                    key: format!("phantom.{name}"),
                    message: format!(
                        "structure reaches ({reach_x:.1}, {reach_y:.1}) mm, outside FOV/2 = {}",
                        self.fov_mm / 2.0
                    ),
                });
            }
        }
        if !(0.0..1.0).contains(&self.cardiac_contraction) {
            violations.push(ConfigViolation {
                key: "phantom.cardiac_contraction".into(),
                message: "must be in [0, 1)".into(),
            });
        }
        if !(0.0 < self.edge_fraction && self.edge_fraction < 0.5) {
            violations.push(ConfigViolation {
                key: "phantom.edge_fraction".into(),
                message: "must be in (0, 0.5)".into(),
            });
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(CoreError::Config(violations))
        }
    }
}

/// Instantaneous motion phases, each wrapped to [0, 2*pi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionState {
    pub phase_cardiac: f64,
    pub phase_resp: f64,
}

impl MotionState {
    pub fn new(phase_cardiac: f64, phase_resp: f64) -> Self {
        Self {
            phase_cardiac: wrap_phase(phase_cardiac),
            phase_resp: wrap_phase(phase_resp),
        }
    }
}

pub fn wrap_phase(a: f64) -> f64 {
    let r = a.rem_euclid(TWO_PI);
    if r == TWO_PI {
        0.0
    } else {
        r
    }
}

/// Ground truth for one (slice, frame) pair of the acquisition schedule.
#[derive(Debug, Clone)]
pub struct GroundTruthRecord {
    pub slice_index: usize,
    pub frame_index: usize,
    /// Absolute frame-center time, seconds.
    pub time_s: f64,
    pub state: MotionState,
    /// Noiseless volume rendered at `state`; real non-negative values.
    pub volume: Volume3D,
}

/// Motion phases of slice `slice_index` at time `t_abs` past its acquisition
/// start (the slice offset is added internally).
pub fn motion_state(cfg: &PhantomConfig, t_abs: f64, slice_index: usize) -> Result<MotionState> {
    if slice_index >= cfg.n_slices() {
        return Err(CoreError::Index(format!(
            "slice_index {} out of range (Nz = {})",
            slice_index,
            cfg.n_slices()
        )));
    }
    let t = t_abs + cfg.slice_offsets_s[slice_index];
    Ok(MotionState::new(
        TWO_PI * cfg.f_cardiac * t,
        TWO_PI * cfg.f_resp * t,
    ))
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

struct PlacedEllipsoid {
    center: [f64; 3],
    inv_radii: [f64; 3],
    intensity: f64,
}

impl PlacedEllipsoid {
    /// Inside weight in [0, 1]: 1 well inside, smooth falloff over the edge band.
    fn weight(&self, p: [f64; 3], edge: f64) -> f64 {
        let dx = (p[0] - self.center[0]) * self.inv_radii[0];
        let dy = (p[1] - self.center[1]) * self.inv_radii[1];
        let dz = (p[2] - self.center[2]) * self.inv_radii[2];
        let rho2 = dx * dx + dy * dy + dz * dz;
        if rho2 >= 1.0 {
            return 0.0;
        }
        let rho = rho2.sqrt();
        if rho <= 1.0 - edge {
            1.0
        } else {
            smoothstep((1.0 - rho) / edge)
        }
    }
}

/// Render the full 3D volume at a motion state. Deterministic and smooth in
/// both phases; values are real non-negative (imaginary parts zero).
pub fn render_volume(cfg: &PhantomConfig, state: &MotionState) -> Volume3D {
    let (nx, ny, nz) = cfg.grid;
    let dx = cfg.fov_mm / nx as f64;
    let dy = cfg.fov_mm / ny as f64;

    let resp_dy = cfg.resp_shift_voxels * dy * state.phase_resp.sin();
    let sway_dx = cfg.cardiac_sway_mm * state.phase_cardiac.sin();
    let squeeze = 1.0 - cfg.cardiac_contraction * 0.5 * (1.0 - state.phase_cardiac.cos());

    let place = |e: &Ellipsoid, cardiac: bool, squeeze_xy: bool| {
        let mut center = e.center_mm;
        center[1] += resp_dy;
        if cardiac {
            center[0] += sway_dx;
        }
        let mut radii = e.radii_mm;
        if squeeze_xy {
            radii[0] *= squeeze;
            radii[1] *= squeeze;
        }
        PlacedEllipsoid {
            center,
            inv_radii: [1.0 / radii[0], 1.0 / radii[1], 1.0 / radii[2]],
            intensity: e.intensity,
        }
    };

    // Painter's order: later structures overwrite earlier ones where inside.
    let structures = [
        place(&cfg.torso, false, false),
        place(&cfg.liver, false, false),
        place(&cfg.myocardium, true, false),
        place(&cfg.blood_pool, true, true),
    ];

    let mut vol = Volume3D::zeros((nx, ny, nz));
    let edge = cfg.edge_fraction;
    for iz in 0..nz {
        let z = (iz as f64 - (nz as f64 - 1.0) / 2.0) * cfg.slice_spacing_mm;
        for ix in 0..nx {
            let x = (ix as f64 - (nx as f64 - 1.0) / 2.0) * dx;
            for iy in 0..ny {
                let y = (iy as f64 - (ny as f64 - 1.0) / 2.0) * dy;
                let mut v = 0.0;
                for s in &structures {
                    let w = s.weight([x, y, z], edge);
                    v = v * (1.0 - w) + s.intensity * w;
                }
                vol[[ix, iy, iz]] = Complex64::new(v, 0.0);
            }
        }
    }
    vol
}

/// Render ground truth for every (slice, frame) of the schedule, at the
/// frame-center time of each frame.
pub fn simulate_series(
    cfg: &PhantomConfig,
    schedule: &AcquisitionSchedule,
) -> Result<Vec<GroundTruthRecord>> {
    cfg.validate()?;
    if schedule.binning.n_frames() == 0 {
        return Err(CoreError::Argument("empty acquisition schedule".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..cfg.n_slices())
        .flat_map(|z| (0..schedule.binning.n_frames()).map(move |f| (z, f)))
        .collect();
    jobs.into_par_iter()
        .map(|(z, f)| {
            let t_rel = schedule.frame_center_time(f);
            let state = motion_state(cfg, t_rel, z)?;
            Ok(GroundTruthRecord {
                slice_index: z,
                frame_index: f,
                time_s: t_rel + cfg.slice_offsets_s[z],
                state,
                volume: render_volume(cfg, &state),
            })
        })
        .collect()
}

/// Blood-pool cross-sectional area in a slice, in voxels above the
/// myocardium/blood intensity midpoint. Used by tests and evaluation.
pub fn blood_area(cfg: &PhantomConfig, vol: &Volume3D, iz: usize) -> usize {
    let thresh = 0.5 * (cfg.myocardium.intensity + cfg.blood_pool.intensity);
    let (nx, ny, _) = cfg.grid;
    let mut count = 0;
    for ix in 0..nx {
        for iy in 0..ny {
            if vol[[ix, iy, iz]].re > thresh {
                count += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::bin_frames;

    fn cfg() -> PhantomConfig {
        PhantomConfig::default_desk()
    }

    #[test]
    fn motion_state_zero_time_zero_offset_is_origin() {
        let mut c = cfg();
        c.slice_offsets_s = vec![0.0; 4];
        let s = motion_state(&c, 0.0, 0).unwrap();
        assert_eq!((s.phase_cardiac, s.phase_resp), (0.0, 0.0));
    }

    #[test]
    fn motion_state_half_period_is_pi() {
        let mut c = cfg();
        c.f_cardiac = 1.0;
        c.slice_offsets_s = vec![0.0; 4];
        let s = motion_state(&c, 0.5, 0).unwrap();
        assert!((s.phase_cardiac - PI).abs() < 1e-12);
    }

    #[test]
    fn motion_state_wraps() {
        // f = 1.25 Hz at t = 1 s: 2.5*pi wraps to 0.5*pi.
        let mut c = cfg();
        c.slice_offsets_s = vec![0.0; 4];
        let s = motion_state(&c, 1.0, 0).unwrap();
        assert!((s.phase_cardiac - 0.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn motion_state_periodicity() {
        let c = cfg();
        let a = motion_state(&c, 3.21, 1).unwrap();
        let b = motion_state(&c, 3.21 + 1.0 / c.f_cardiac, 1).unwrap();
        assert!((a.phase_cardiac - b.phase_cardiac).abs() < 1e-9);
    }

    #[test]
    fn motion_state_rejects_bad_slice() {
        assert!(motion_state(&cfg(), 0.0, 99).is_err());
    }

    #[test]
    fn slice_schedules_are_asynchronous() {
        let c = cfg();
        let a = motion_state(&c, 0.0, 0).unwrap();
        let b = motion_state(&c, 0.0, 1).unwrap();
        assert!((a.phase_cardiac - b.phase_cardiac).abs() > 0.1);
    }

    #[test]
    fn systole_shrinks_blood_pool() {
        let c = cfg();
        let rest = render_volume(&c, &MotionState::new(0.0, 0.0));
        let systole = render_volume(&c, &MotionState::new(PI, 0.0));
        // Compare at matched sway: phase pi has sin = 0, same as phase 0.
        let mid = c.grid.2 / 2;
        assert!(blood_area(&c, &systole, mid) < blood_area(&c, &rest, mid));
    }

    #[test]
    fn respiration_is_a_pure_shift() {
        // Phase pi/2 shifts everything by resp_shift_voxels (integer) along y,
        // so the render equals the rest render shifted by whole voxels.
        let c = cfg();
        let d = c.resp_shift_voxels as usize;
        let rest = render_volume(&c, &MotionState::new(0.0, 0.0));
        let shifted = render_volume(&c, &MotionState::new(0.0, PI / 2.0));
        let (nx, ny, nz) = c.grid;
        let mut max_diff: f64 = 0.0;
        for ix in 0..nx {
            for iy in 0..ny - d {
                for iz in 0..nz {
                    let diff = (shifted[[ix, iy + d, iz]] - rest[[ix, iy, iz]]).norm();
                    max_diff = max_diff.max(diff);
                }
            }
        }
        assert!(max_diff < 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn resp_phase_pi_matches_rest() {
        // sin(pi) = 0: same shift as phase 0, so the volumes are identical.
        let c = cfg();
        let a = render_volume(&c, &MotionState::new(0.0, 0.0));
        let b = render_volume(&c, &MotionState::new(0.0, PI));
        assert_eq!(a, b);
    }

    #[test]
    fn render_is_deterministic() {
        let c = cfg();
        let s = MotionState::new(1.234, 0.567);
        assert_eq!(render_volume(&c, &s), render_volume(&c, &s));
    }

    #[test]
    fn cardiac_sway_makes_phase_injective() {
        // Phases phi and 2*pi - phi share the blood radius but not the sway.
        let c = cfg();
        let a = render_volume(&c, &MotionState::new(1.0, 0.0));
        let b = render_volume(&c, &MotionState::new(TWO_PI - 1.0, 0.0));
        let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).sum();
        assert!(diff > 1.0, "renders at mirrored cardiac phases must differ");
    }

    #[test]
    fn simulate_series_counts_and_completeness() {
        let c = cfg();
        let binning = bin_frames(480, 6, 0, false).unwrap();
        let sched = AcquisitionSchedule {
            tr_s: 0.0084,
            n_interleaves: 480,
            binning,
        };
        let records = simulate_series(&c, &sched).unwrap();
        assert_eq!(records.len(), 4 * 80);
        let mut seen = std::collections::BTreeSet::new();
        for r in &records {
            assert!(seen.insert((r.slice_index, r.frame_index)));
            assert!(r.volume.iter().all(|v| v.re >= 0.0 && v.im == 0.0));
        }
    }

    #[test]
    fn validate_rejects_small_grids_and_bad_rates() {
        let mut c = cfg();
        c.grid = (8, 8, 4);
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.f_resp = 2.0; // above cardiac
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.slice_offsets_s = vec![0.0];
        assert!(c.validate().is_err());
    }
}
