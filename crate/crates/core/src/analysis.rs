//! Sensor degradation across sessions and slip detection from centroid
//! motion.

use serde::Serialize;
use thiserror::Error;

use crate::calib::{is_contact, ThresholdMap};
use crate::frames::{Dataset, TactileFrame, EMPTY_HAND, GRID_SIZE, TAXELS};

/// Centroid speed (pixels per frame) above which a sequence is slipping.
pub const SLIP_SPEED_PX: f64 = 0.5;
pub const DEFAULT_SLIP_WINDOW: usize = 5;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("session {0} is missing from the dataset")]
    MissingSession(u8),
    #[error("no contact frames for {0}")]
    NoContactFrames(String),
    #[error("reference session has no positive response")]
    ZeroReference,
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionResponse {
    pub session: u8,
    pub contact_frames: usize,
    /// Mean signal above baseline per taxel, in counts.
    pub mean_signal: f64,
    /// `mean_signal` relative to session 1.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegradationReport {
    pub baseline: f64,
    pub sessions: Vec<SessionResponse>,
}

fn frame_signal(frame: &TactileFrame, baseline: f64) -> f64 {
    frame.values().iter().map(|&v| v as f64 - baseline).sum::<f64>() / TAXELS as f64
}

/// Mean response of each session's contact frames relative to session 1.
pub fn relative_mean_response(
    dataset: &Dataset,
    thresholds: &ThresholdMap,
    baseline: f64,
) -> Result<DegradationReport, AnalysisError> {
    if dataset.session(1).is_none() {
        return Err(AnalysisError::MissingSession(1));
    }
    let mut sessions = Vec::new();
    for (&id, recs) in dataset.sessions() {
        let (mut sum, mut n) = (0.0, 0usize);
        for rec in recs {
            for f in rec.frames().iter().filter(|f| is_contact(f, thresholds)) {
                sum += frame_signal(f, baseline);
                n += 1;
            }
        }
        if n == 0 {
            return Err(AnalysisError::NoContactFrames(format!("session {id}")));
        }
        sessions.push(SessionResponse {
            session: id,
            contact_frames: n,
            mean_signal: sum / n as f64,
            relative: 0.0,
        });
    }
    let reference = sessions[0].mean_signal;
    if reference <= 0.0 {
        return Err(AnalysisError::ZeroReference);
    }
    for s in &mut sessions {
        s.relative = s.mean_signal / reference;
    }
    sessions[0].relative = 1.0;
    Ok(DegradationReport { baseline, sessions })
}

/// Elementwise mean of the contact frames of `class_id` in `session`
/// (every frame for the empty hand).
pub fn class_average_frame(
    dataset: &Dataset,
    class_id: u8,
    session: u8,
    thresholds: &ThresholdMap,
) -> Result<Vec<f64>, AnalysisError> {
    let recs = dataset.session(session).ok_or(AnalysisError::MissingSession(session))?;
    let mut acc = vec![0.0; TAXELS];
    let mut n = 0usize;
    for rec in recs.iter().filter(|r| r.label() == class_id) {
        for f in rec.frames() {
            if class_id != EMPTY_HAND && !is_contact(f, thresholds) {
                continue;
            }
            for (a, &v) in acc.iter_mut().zip(f.values()) {
                *a += v as f64;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(AnalysisError::NoContactFrames(format!("class {class_id} in session {session}")));
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlipState {
    Static,
    Slipping,
    /// Too few consecutive frames with contact to estimate motion.
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlipReport {
    pub window: usize,
    /// Centroid `(x, y)` of above-threshold mass per frame (x = column).
    pub centroids: Vec<Option<(f64, f64)>>,
    /// Least-squares velocity of each complete window, by first frame.
    pub window_velocities: Vec<(usize, (f64, f64))>,
    /// Mean of the window velocities.
    pub velocity: Option<(f64, f64)>,
    pub speed: Option<f64>,
    /// `atan2(vy, vx)` in degrees; y grows downward along rows.
    pub direction_deg: Option<f64>,
    pub state: SlipState,
}

impl SlipReport {
    pub fn centroids_csv(&self) -> String {
        let mut s = String::from("frame,x,y\n");
        for (k, c) in self.centroids.iter().enumerate() {
            match c {
                Some((x, y)) => s.push_str(&format!("{k},{x:.6},{y:.6}\n")),
                None => s.push_str(&format!("{k},,\n")),
            }
        }
        s
    }
}

/// Centroid of `max(count - threshold, 0)`, if any taxel exceeds its threshold.
pub fn contact_centroid(frame: &TactileFrame, thresholds: &ThresholdMap) -> Option<(f64, f64)> {
    let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (i, (&v, &t)) in frame.values().iter().zip(thresholds.values()).enumerate() {
        if v > t {
            let w = (v - t) as f64;
            m += w;
            sx += w * (i % GRID_SIZE) as f64;
            sy += w * (i / GRID_SIZE) as f64;
        }
    }
    (m > 0.0).then(|| (sx / m, sy / m))
}

fn ls_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, y) in ys.iter().enumerate() {
        let dt = t as f64 - tm;
        num += dt * (y - ym);
        den += dt * dt;
    }
    num / den
}

/// Estimates centroid velocity over sliding windows and classifies the
/// sequence as static or slipping.
pub fn detect_slip(
    frames: &[TactileFrame],
    thresholds: &ThresholdMap,
    window: usize,
) -> Result<SlipReport, AnalysisError> {
    if window < 2 {
        return Err(AnalysisError::Invalid(format!("window {window} must be >= 2")));
    }
    if frames.len() < window {
        return Err(AnalysisError::Invalid(format!(
            "{} frames for a window of {window}",
            frames.len()
        )));
    }
    let centroids: Vec<_> = frames.iter().map(|f| contact_centroid(f, thresholds)).collect();
    let mut window_velocities = Vec::new();
    for start in 0..=centroids.len() - window {
        let w = &centroids[start..start + window];
        if w.iter().all(Option::is_some) {
            let xs: Vec<f64> = w.iter().map(|c| c.expect("checked").0).collect();
            let ys: Vec<f64> = w.iter().map(|c| c.expect("checked").1).collect();
            window_velocities.push((start, (ls_slope(&xs), ls_slope(&ys))));
        }
    }
    let velocity = (!window_velocities.is_empty()).then(|| {
        let n = window_velocities.len() as f64;
        let vx = window_velocities.iter().map(|w| w.1 .0).sum::<f64>() / n;
        let vy = window_velocities.iter().map(|w| w.1 .1).sum::<f64>() / n;
        (vx, vy)
    });
    let speed = velocity.map(|(x, y)| x.hypot(y));
    let state = match speed {
        None => SlipState::Undefined,
        Some(s) if s > SLIP_SPEED_PX => SlipState::Slipping,
        Some(_) => SlipState::Static,
    };
    Ok(SlipReport {
        window,
        centroids,
        window_velocities,
        velocity,
        speed,
        direction_deg: velocity.map(|(x, y)| y.atan2(x).to_degrees()),
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::Recording;

    fn frame_with(points: &[(usize, usize, u16)], base: u16) -> TactileFrame {
        let mut v = vec![base; TAXELS];
        for &(r, c, val) in points {
            v[r * GRID_SIZE + c] = val;
        }
        TactileFrame::new(v, 0).unwrap()
    }

    fn session_with(ds: &mut Dataset, session: u8, frames: Vec<TactileFrame>) {
        let frames = frames
            .into_iter()
            .enumerate()
            .map(|(k, f)| f.with_timestamp(k as u64))
            .collect();
        ds.push(Recording::new(0, session, frames, vec![]).unwrap());
    }

    #[test]
    fn identical_and_halved_sessions() {
        let th = ThresholdMap::uniform(110);
        let f = frame_with(&[(3, 3, 300), (4, 4, 500)], 100);
        let half = frame_with(&[(3, 3, 200), (4, 4, 300)], 100);
        let mut ds = Dataset::default();
        session_with(&mut ds, 1, vec![f.clone(), f.clone()]);
        session_with(&mut ds, 2, vec![f.clone()]);
        session_with(&mut ds, 3, vec![half]);
        let r = relative_mean_response(&ds, &th, 100.0).unwrap();
        assert_eq!(r.sessions[0].relative, 1.0);
        assert!((r.sessions[1].relative - 1.0).abs() < 1e-12);
        assert!((r.sessions[2].relative - 0.5).abs() < 1e-9);
    }

    #[test]
    fn missing_reference_or_contact_is_an_error() {
        let th = ThresholdMap::uniform(110);
        let mut ds = Dataset::default();
        session_with(&mut ds, 2, vec![frame_with(&[(0, 0, 500)], 100)]);
        assert!(matches!(
            relative_mean_response(&ds, &th, 100.0),
            Err(AnalysisError::MissingSession(1))
        ));
        session_with(&mut ds, 1, vec![frame_with(&[], 100)]);
        assert!(matches!(
            relative_mean_response(&ds, &th, 100.0),
            Err(AnalysisError::NoContactFrames(_))
        ));
    }

    #[test]
    fn class_average_is_midpoint() {
        let th = ThresholdMap::uniform(0);
        let mut ds = Dataset::default();
        session_with(&mut ds, 1, vec![frame_with(&[], 100), frame_with(&[], 300)]);
        let avg = class_average_frame(&ds, 0, 1, &th).unwrap();
        assert!(avg.iter().all(|&v| v == 200.0));
        assert!(class_average_frame(&ds, 3, 1, &th).is_err());
        assert!(class_average_frame(&ds, 0, 2, &th).is_err());
    }

    #[test]
    fn moving_spot_is_slipping() {
        let th = ThresholdMap::uniform(10);
        let frames: Vec<_> = (0..8).map(|k| frame_with(&[(10, 2 + 2 * k, 500)], 0)).collect();
        let r = detect_slip(&frames, &th, 5).unwrap();
        assert_eq!(r.state, SlipState::Slipping);
        assert!((r.speed.unwrap() - 2.0).abs() < 1e-12);
        assert!(r.direction_deg.unwrap().abs() < 1e-9);
        assert_eq!(r.window_velocities.len(), 4);
    }

    #[test]
    fn no_contact_is_undefined_not_error() {
        let th = ThresholdMap::uniform(10);
        let frames = vec![frame_with(&[], 0); 6];
        assert_eq!(detect_slip(&frames, &th, 5).unwrap().state, SlipState::Undefined);
        assert!(detect_slip(&frames[..3], &th, 5).is_err());
    }
}
