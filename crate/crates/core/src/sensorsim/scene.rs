//! Pressure stimuli: object presses, slides and the idle hand.
//!
//! Press footprints come from 17 procedural templates built out of ellipses,
//! capsules, rectangles and rings. Each recording draws a pose jitter
//! (translation and rotation) and a pressing rhythm from its seed.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::frames::{GRID_SIZE, NUM_CLASSES, TAXELS};
use crate::seed;

/// Minimum pressure on any taxel inside a press footprint.
pub const CONTACT_FLOOR_N: f64 = 0.2;
/// Peak pressure of a full-intensity template cell at the top of a push.
pub const PRESS_PEAK_N: f64 = 9.0;
/// Upper bound of idle-hand pose stress.
pub const EMPTY_HAND_MAX_N: f64 = 0.002;
/// Template intensity below which a cell is outside the footprint.
const SUPPORT_CUTOFF: f64 = 0.05;
const MAX_JITTER_PX: f64 = 2.0;
const MAX_JITTER_DEG: f64 = 10.0;
const TREMOR_PX: f64 = 0.3;
/// Where template origins land on the glove: the middle of the palm.
const ANCHOR: (f64, f64) = (16.5, 19.5);

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    /// Centre, semi-axes, rotation (degrees).
    Ellipse { c: (f64, f64), a: f64, b: f64, deg: f64 },
    /// Segment endpoints and half width.
    Capsule { p0: (f64, f64), p1: (f64, f64), hw: f64 },
    /// Centre and half extents.
    Rect { c: (f64, f64), hx: f64, hy: f64 },
    /// Centre, radius, half width of the annulus.
    Ring { c: (f64, f64), r: f64, hw: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Primitive {
    shape: Shape,
    weight: f64,
}

#[inline]
fn bump(d: f64) -> f64 {
    if d < 1.0 {
        1.0 - d * d
    } else {
        0.0
    }
}

impl Primitive {
    fn intensity(&self, x: f64, y: f64) -> f64 {
        let d = match self.shape {
            Shape::Ellipse { c, a, b, deg } => {
                let (s, co) = (deg * PI / 180.0).sin_cos();
                let (dx, dy) = (x - c.0, y - c.1);
                let u = co * dx + s * dy;
                let v = -s * dx + co * dy;
                ((u / a).powi(2) + (v / b).powi(2)).sqrt()
            }
            Shape::Capsule { p0, p1, hw } => {
                let (vx, vy) = (p1.0 - p0.0, p1.1 - p0.1);
                let len2 = vx * vx + vy * vy;
                let t = (((x - p0.0) * vx + (y - p0.1) * vy) / len2).clamp(0.0, 1.0);
                let (px, py) = (p0.0 + t * vx, p0.1 + t * vy);
                ((x - px).powi(2) + (y - py).powi(2)).sqrt() / hw
            }
            Shape::Rect { c, hx, hy } => ((x - c.0).abs() / hx).max((y - c.1).abs() / hy),
            Shape::Ring { c, r, hw } => {
                let rho = ((x - c.0).powi(2) + (y - c.1).powi(2)).sqrt();
                (rho - r).abs() / hw
            }
        };
        self.weight * bump(d)
    }
}

fn ellipse(c: (f64, f64), a: f64, b: f64, deg: f64, weight: f64) -> Primitive {
    Primitive {
        shape: Shape::Ellipse { c, a, b, deg },
        weight,
    }
}

fn capsule(p0: (f64, f64), p1: (f64, f64), hw: f64, weight: f64) -> Primitive {
    Primitive {
        shape: Shape::Capsule { p0, p1, hw },
        weight,
    }
}

fn rect(c: (f64, f64), hx: f64, hy: f64, weight: f64) -> Primitive {
    Primitive {
        shape: Shape::Rect { c, hx, hy },
        weight,
    }
}

fn ring(c: (f64, f64), r: f64, hw: f64, weight: f64) -> Primitive {
    Primitive {
        shape: Shape::Ring { c, r, hw },
        weight,
    }
}

/// Footprint template for `class_id`, in pixels relative to the palm anchor.
fn template(class_id: u8) -> Vec<Primitive> {
    match class_id {
        // ball
        0 => vec![ellipse((0.0, 0.0), 5.0, 5.0, 0.0, 1.0)],
        // battery
        1 => vec![capsule((0.0, -5.0), (0.0, 5.0), 2.2, 1.0)],
        // brick
        2 => vec![rect((0.0, 0.0), 7.0, 4.5, 0.8)],
        // can
        3 => vec![ring((0.0, 0.0), 5.0, 1.4, 1.0)],
        // cup
        4 => vec![
            ring((-1.0, 0.0), 4.0, 1.3, 1.0),
            capsule((4.5, -1.5), (6.5, 1.5), 1.2, 0.8),
        ],
        // glasses
        5 => vec![
            ring((-4.5, 0.0), 2.6, 1.0, 0.9),
            ring((4.5, 0.0), 2.6, 1.0, 0.9),
            capsule((-1.8, -0.5), (1.8, -0.5), 0.9, 0.6),
        ],
        // key
        6 => vec![
            ring((0.0, -5.0), 2.2, 1.1, 1.0),
            capsule((0.0, -2.5), (0.0, 7.0), 1.2, 0.9),
        ],
        // lotion
        7 => vec![ellipse((0.0, 0.0), 3.2, 7.0, 20.0, 1.0)],
        // mug
        8 => vec![
            ring((-1.0, 0.0), 5.2, 1.6, 1.0),
            capsule((5.0, -3.0), (7.5, 3.0), 1.3, 0.9),
        ],
        // pen
        9 => vec![capsule((-6.0, -6.0), (6.0, 6.0), 1.1, 1.0)],
        // phone
        10 => vec![rect((0.0, 0.0), 3.5, 6.5, 1.0)],
        // plate
        11 => vec![ring((0.0, 0.0), 7.5, 1.4, 0.9)],
        // scissors
        12 => vec![
            capsule((-4.0, -7.0), (3.0, 4.0), 1.0, 1.0),
            capsule((4.0, -7.0), (-3.0, 4.0), 1.0, 1.0),
            ring((-3.5, 6.0), 1.8, 0.9, 0.9),
            ring((3.5, 6.0), 1.8, 0.9, 0.9),
        ],
        // screwdriver
        13 => vec![
            capsule((0.0, -8.0), (0.0, 3.0), 1.0, 1.0),
            ellipse((0.0, 6.0), 2.4, 3.6, 0.0, 0.9),
        ],
        // spoon
        14 => vec![
            ellipse((-3.0, -4.0), 2.5, 3.5, -30.0, 1.0),
            capsule((-1.5, -1.0), (5.0, 7.0), 0.9, 0.8),
        ],
        // tape
        15 => vec![ring((0.0, 0.0), 4.0, 2.1, 1.0)],
        // flat palm press
        16 => vec![ellipse((0.0, 1.0), 7.0, 5.5, 0.0, 0.45)],
        _ => Vec::new(),
    }
}

fn template_intensity(prims: &[Primitive], x: f64, y: f64) -> f64 {
    prims
        .iter()
        .map(|p| p.intensity(x, y))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Spans all rows; moves along x to change.
    Vertical,
    /// Spans all columns; moves along y to change.
    Horizontal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "shape")]
pub enum SlideProfile {
    /// Compact round spot.
    Point { radius: f64, peak: f64 },
    /// Uniform band spanning the whole sensor.
    Stripe {
        orientation: Orientation,
        width: f64,
        pressure: f64,
    },
}

impl SlideProfile {
    pub fn point() -> Self {
        SlideProfile::Point {
            radius: 2.5,
            peak: PRESS_PEAK_N,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SceneKind {
    Press {
        class_id: u8,
    },
    /// Profile starting at `start` (x = column, y = row) moving by
    /// `velocity` pixels per frame.
    Slide {
        profile: SlideProfile,
        start: (f64, f64),
        velocity: (f64, f64),
    },
    EmptyHand,
}

/// Systematic placement of the glove in one recording session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionPose {
    pub offset: (f64, f64),
    pub rotation_deg: f64,
    pub stretch: f64,
}

impl Default for SessionPose {
    fn default() -> Self {
        Self {
            offset: (0.0, 0.0),
            rotation_deg: 0.0,
            stretch: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct PressMotion {
    offset: (f64, f64),
    rotation_rad: f64,
    period: f64,
    phase: f64,
    tremor_phase: (f64, f64),
    tremor_period: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct IdleStress {
    /// Centre, radius, amplitude, angular rate.
    bumps: Vec<((f64, f64), f64, f64, f64)>,
}

/// A time-varying pressure map, deterministic given its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceScene {
    kind: SceneKind,
    frames: usize,
    seed: u64,
    template: Vec<Primitive>,
    motion: Option<PressMotion>,
    idle: Option<IdleStress>,
    session: SessionPose,
}

pub fn generate_scene(kind: SceneKind, frames: usize, seed: u64) -> Result<ForceScene, SimError> {
    if frames == 0 {
        return Err(SimError::InvalidConfig("scene needs at least one frame".into()));
    }
    let mut rng = seed::rng(seed, &[0x5ce7e]);
    let (template, motion, idle) = match kind {
        SceneKind::Press { class_id } => {
            if class_id as usize >= NUM_CLASSES {
                return Err(SimError::UnknownClass(class_id));
            }
            let motion = PressMotion {
                offset: (
                    rng.random_range(-MAX_JITTER_PX..=MAX_JITTER_PX),
                    rng.random_range(-MAX_JITTER_PX..=MAX_JITTER_PX),
                ),
                rotation_rad: rng.random_range(-MAX_JITTER_DEG..=MAX_JITTER_DEG) * PI / 180.0,
                period: rng.random_range(150.0..300.0),
                phase: rng.random_range(0.0..2.0 * PI),
                tremor_phase: (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)),
                tremor_period: rng.random_range(60.0..140.0),
            };
            (template(class_id), Some(motion), None)
        }
        SceneKind::Slide { profile, .. } => {
            let ok = match profile {
                SlideProfile::Point { radius, peak } => radius > 0.0 && peak >= 0.0,
                SlideProfile::Stripe { width, pressure, .. } => width > 0.0 && pressure >= 0.0,
            };
            if !ok {
                return Err(SimError::InvalidConfig(format!("bad slide profile {profile:?}")));
            }
            (Vec::new(), None, None)
        }
        SceneKind::EmptyHand => {
            let n = rng.random_range(2..=5);
            let bumps = (0..n)
                .map(|_| {
                    (
                        (rng.random_range(4.0..28.0), rng.random_range(4.0..28.0)),
                        rng.random_range(2.0..6.0),
                        rng.random_range(0.2..1.0) * EMPTY_HAND_MAX_N,
                        rng.random_range(0.005..0.05),
                    )
                })
                .collect();
            (Vec::new(), None, Some(IdleStress { bumps }))
        }
    };
    Ok(ForceScene {
        kind,
        frames,
        seed,
        template,
        motion,
        idle,
        session: SessionPose::default(),
    })
}

impl ForceScene {
    pub fn kind(&self) -> SceneKind {
        self.kind
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_session_pose(mut self, pose: SessionPose) -> Self {
        self.session = pose;
        self
    }

    /// Class id recorded for this scene; slides carry no object label and
    /// are filed under the empty hand.
    pub fn label(&self) -> u8 {
        match self.kind {
            SceneKind::Press { class_id } => class_id,
            _ => crate::frames::EMPTY_HAND,
        }
    }

    /// Pressure in newtons for every taxel at frame `k` (row-major).
    pub fn pressure(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; TAXELS];
        match self.kind {
            SceneKind::Press { .. } => self.press_pressure(k, &mut out),
            SceneKind::Slide {
                profile,
                start,
                velocity,
            } => {
                let cx = start.0 + velocity.0 * k as f64;
                let cy = start.1 + velocity.1 * k as f64;
                for r in 0..GRID_SIZE {
                    for c in 0..GRID_SIZE {
                        let (x, y) = (c as f64, r as f64);
                        out[r * GRID_SIZE + c] = match profile {
                            SlideProfile::Point { radius, peak } => {
                                let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() / radius;
                                peak * bump(d)
                            }
                            SlideProfile::Stripe {
                                orientation,
                                width,
                                pressure,
                            } => {
                                let dist = match orientation {
                                    Orientation::Vertical => (x - cx).abs(),
                                    Orientation::Horizontal => (y - cy).abs(),
                                };
                                if dist <= width / 2.0 {
                                    pressure
                                } else {
                                    0.0
                                }
                            }
                        };
                    }
                }
            }
            SceneKind::EmptyHand => {
                let idle = self.idle.as_ref().expect("idle stress present");
                for r in 0..GRID_SIZE {
                    for c in 0..GRID_SIZE {
                        let (x, y) = (c as f64, r as f64);
                        let v: f64 = idle
                            .bumps
                            .iter()
                            .map(|&((bx, by), rad, amp, rate)| {
                                let d = ((x - bx).powi(2) + (y - by).powi(2)).sqrt() / rad;
                                amp * bump(d) * (0.5 + 0.5 * (rate * k as f64).sin())
                            })
                            .sum();
                        out[r * GRID_SIZE + c] = v.min(EMPTY_HAND_MAX_N);
                    }
                }
            }
        }
        out
    }

    fn press_pressure(&self, k: usize, out: &mut [f64]) {
        let m = self.motion.as_ref().expect("press motion present");
        let t = k as f64;
        let envelope = 0.55 + 0.45 * (0.5 - 0.5 * (2.0 * PI * t / m.period + m.phase).cos());
        let w = 2.0 * PI * t / m.tremor_period;
        let tremor = (
            TREMOR_PX * (w + m.tremor_phase.0).sin(),
            TREMOR_PX * (0.7 * w + m.tremor_phase.1).sin(),
        );
        let s = &self.session;
        let rot = m.rotation_rad + s.rotation_deg * PI / 180.0;
        let (sin, cos) = rot.sin_cos();
        let ox = ANCHOR.0 + m.offset.0 + s.offset.0 + tremor.0;
        let oy = ANCHOR.1 + m.offset.1 + s.offset.1 + tremor.1;
        for r in 0..GRID_SIZE {
            for c in 0..GRID_SIZE {
                let (dx, dy) = (c as f64 - ox, r as f64 - oy);
                // Map grid coordinates back into the template frame.
                let u = (cos * dx + sin * dy) / s.stretch;
                let v = (-sin * dx + cos * dy) / s.stretch;
                let i = template_intensity(&self.template, u, v);
                if i > SUPPORT_CUTOFF {
                    out[r * GRID_SIZE + c] = CONTACT_FLOOR_N + envelope * PRESS_PEAK_N * i;
                }
            }
        }
    }
}

/// Pressure-weighted centroid `(x, y)` of a map, if it carries any pressure.
pub fn pressure_centroid(pressure: &[f64]) -> Option<(f64, f64)> {
    let mut total = 0.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (i, &p) in pressure.iter().enumerate() {
        total += p;
        sx += p * (i % GRID_SIZE) as f64;
        sy += p * (i / GRID_SIZE) as f64;
    }
    (total > 0.0).then(|| (sx / total, sy / total))
}
