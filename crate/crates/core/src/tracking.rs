//! Object-level tracking data: loading, validation, ball interpolation and
//! kinematics.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::design_space::SCHEMA_VERSION;
use crate::error::{read_bytes, write_bytes, Error, Result};
use crate::geom::{BBox, Point2, Quad};
use crate::scalar::Scalar;

/// 17-point posture layout, in storage order.
pub const KEYPOINT_NAMES: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// Derived keypoint: midpoint of the shoulders.
pub const NECK: &str = "neck";

/// Skeleton edges as index pairs into [`KEYPOINT_NAMES`].
pub const SKELETON_BONES: [(usize, usize); 16] = [
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (5, 6),
    (5, 7),
    (7, 9),
    (6, 8),
    (8, 10),
    (5, 11),
    (6, 12),
    (11, 12),
    (11, 13),
    (13, 15),
    (12, 14),
    (14, 16),
];

pub const DEFAULT_KEYPOINT_THRESHOLD: f64 = 0.3;

pub fn keypoint_index(name: &str) -> Option<usize> {
    KEYPOINT_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlayerId {
    A,
    B,
}

impl PlayerId {
    pub const BOTH: [PlayerId; 2] = [PlayerId::A, PlayerId::B];

    pub fn opponent(self) -> PlayerId {
        match self {
            PlayerId::A => PlayerId::B,
            PlayerId::B => PlayerId::A,
        }
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for PlayerId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(PlayerId::A),
            "B" | "b" => Ok(PlayerId::B),
            _ => Err(Error::UnknownPlayer(s.to_string())),
        }
    }
}

/// Keypoint stored on disk as `[x, y, confidence]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(T, T, f64)", into = "(T, T, f64)")]
#[serde(bound(serialize = "T: Serialize + Copy", deserialize = "T: Deserialize<'de> + Copy"))]
pub struct Keypoint<T> {
    pub point: Point2<T>,
    pub confidence: f64,
}

impl<T> From<(T, T, f64)> for Keypoint<T> {
    fn from((x, y, confidence): (T, T, f64)) -> Self {
        Keypoint { point: Point2 { x, y }, confidence }
    }
}

impl<T> From<Keypoint<T>> for (T, T, f64) {
    fn from(k: Keypoint<T>) -> Self {
        (k.point.x, k.point.y, k.confidence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallDetection<T> {
    pub center: Point2<T>,
    pub bbox: BBox<T>,
    /// Spin measured by an external tool, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_rpm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize + Copy", deserialize = "T: Deserialize<'de> + Copy"))]
pub struct PlayerDetection<T> {
    pub id: PlayerId,
    pub bbox: BBox<T>,
    pub keypoints: [Keypoint<T>; 17],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableGeometry<T> {
    /// Table surface corners: top-left, top-right, bottom-right, bottom-left.
    pub quad: Quad<T>,
    /// Pixel column of the net plane. Player A plays from the left half.
    pub net_x: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize + Copy", deserialize = "T: Deserialize<'de> + Copy"))]
pub struct FrameDetections<T> {
    pub frame_index: usize,
    pub timestamp: f64,
    #[serde(default)]
    pub ball: Option<BallDetection<T>>,
    pub players: Vec<PlayerDetection<T>>,
    pub table: TableGeometry<T>,
}

impl<T: Scalar> FrameDetections<T> {
    pub fn player(&self, id: PlayerId) -> Option<&PlayerDetection<T>> {
        self.players.iter().find(|p| p.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub frame_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub player_names: Option<[String; 2]>,
}

impl VideoMeta {
    pub fn duration_seconds(&self) -> f64 {
        self.frame_count as f64 / self.fps
    }

    pub fn player_name(&self, id: PlayerId) -> Option<&str> {
        self.player_names.as_ref().map(|n| n[id as usize].as_str())
    }
}

/// Tracking file as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize + Copy", deserialize = "T: Deserialize<'de> + Copy"))]
pub struct TrackingFile<T> {
    pub schema_version: u32,
    pub video: VideoMeta,
    pub frames: Vec<FrameDetections<T>>,
}

/// Validated per-frame detections for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingDataset<T> {
    pub video: VideoMeta,
    pub frames: Vec<FrameDetections<T>>,
}

impl<T: Scalar + DeserializeOwned + Serialize> TrackingDataset<T> {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let file: TrackingFile<T> = serde_json::from_slice(bytes)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: file.schema_version, supported: SCHEMA_VERSION });
        }
        TrackingDataset::new(file.video, file.frames)
    }

    pub fn to_json(&self) -> String {
        let file = TrackingFile { schema_version: SCHEMA_VERSION, video: self.video.clone(), frames: self.frames.clone() };
        let mut s = serde_json::to_string_pretty(&file).expect("dataset serialization");
        s.push('\n');
        s
    }

    /// Saves as JSON, gzip-compressed when the path ends in `.gz`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = self.to_json();
        if path.extension().is_some_and(|e| e == "gz") {
            let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
            enc.write_all(json.as_bytes()).and_then(|_| enc.flush()).map_err(|e| Error::Image(e.to_string()))?;
            let bytes = enc.finish().map_err(|e| Error::Image(e.to_string()))?;
            write_bytes(path, &bytes)
        } else {
            write_bytes(path, json.as_bytes())
        }
    }
}

/// Loads and validates a tracking file (plain or gzip JSON).
pub fn load_dataset<T: Scalar + DeserializeOwned + Serialize>(path: &Path) -> Result<TrackingDataset<T>> {
    let raw = read_bytes(path)?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        out
    } else {
        raw
    };
    TrackingDataset::from_json(&bytes)
}

impl<T: Scalar> TrackingDataset<T> {
    pub fn new(video: VideoMeta, frames: Vec<FrameDetections<T>>) -> Result<Self> {
        let ds = TrackingDataset { video, frames };
        ds.validate()?;
        Ok(ds)
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn last_frame(&self) -> usize {
        self.frames.len().saturating_sub(1)
    }

    pub fn frame(&self, index: usize) -> Result<&FrameDetections<T>> {
        self.frames
            .get(index)
            .ok_or_else(|| Error::invalid(format!("frame {index} out of range (0..{})", self.frames.len())))
    }

    fn validate(&self) -> Result<()> {
        let v = &self.video;
        if self.frames.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !(v.fps.is_finite() && v.fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {}", v.fps)));
        }
        if v.width == 0 || v.height == 0 {
            return Err(Error::invalid("video width and height must be positive"));
        }
        for (expected, frame) in self.frames.iter().enumerate() {
            if frame.frame_index != expected {
                return Err(Error::NonContiguous { expected, found: frame.frame_index });
            }
        }
        if self.frames.len() != v.frame_count {
            return Err(Error::invalid(format!(
                "frame_count {} does not match {} frames",
                v.frame_count,
                self.frames.len()
            )));
        }
        let (w, h) = (T::lit(f64::from(v.width)), T::lit(f64::from(v.height)));
        for f in &self.frames {
            let geom = |detail: String| Error::Geometry { frame: f.frame_index, detail };
            if let Some(ball) = &f.ball {
                if !ball.bbox.is_valid() || !ball.center.is_finite() {
                    return Err(geom("ball bbox must have positive size".into()));
                }
            }
            if f.players.len() != 2 || f.player(PlayerId::A).is_none() || f.player(PlayerId::B).is_none() {
                return Err(geom("exactly two players A and B are required".into()));
            }
            for p in &f.players {
                if !p.bbox.is_valid() {
                    return Err(geom(format!("player {} bbox must have positive size", p.id)));
                }
                for (k, kp) in p.keypoints.iter().enumerate() {
                    if !(0.0..=1.0).contains(&kp.confidence) {
                        return Err(geom(format!("keypoint {} confidence outside [0,1]", KEYPOINT_NAMES[k])));
                    }
                    let inside = kp.point.x >= T::zero() && kp.point.x <= w && kp.point.y >= T::zero() && kp.point.y <= h;
                    if kp.confidence > 0.0 && !inside {
                        return Err(geom(format!(
                            "keypoint {} of player {} outside the frame and not flagged occluded",
                            KEYPOINT_NAMES[k], p.id
                        )));
                    }
                }
            }
            if !f.table.quad.is_convex() {
                return Err(geom("table quad is not convex".into()));
            }
            if !f.table.net_x.is_finite() {
                return Err(geom("net_x is not finite".into()));
            }
        }
        Ok(())
    }

    /// Shifts every position by `d`. Used to check translation equivariance.
    pub fn translated(&self, d: Point2<T>) -> Self {
        let mut out = self.clone();
        for f in &mut out.frames {
            if let Some(b) = &mut f.ball {
                b.center = b.center + d;
                b.bbox = b.bbox.translated(d);
            }
            for p in &mut f.players {
                p.bbox = p.bbox.translated(d);
                for k in &mut p.keypoints {
                    k.point = k.point + d;
                }
            }
            f.table.quad = f.table.quad.translated(d);
            f.table.net_x = f.table.net_x + d.x;
        }
        out
    }
}

/// Interpolated ball positions with per-frame velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallTrack<T> {
    pub fps: f64,
    /// One entry per dataset frame; `None` outside the detected range.
    pub centers: Vec<Option<Point2<T>>>,
    /// True where the center was filled in rather than detected.
    pub occluded: Vec<bool>,
    /// Velocity in px/s, defined wherever the center is.
    pub velocity: Vec<Option<Point2<T>>>,
}

impl<T: Scalar> BallTrack<T> {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, frame: usize) -> Option<Point2<T>> {
        self.centers.get(frame).copied().flatten()
    }

    pub fn velocity(&self, frame: usize) -> Option<Point2<T>> {
        self.velocity.get(frame).copied().flatten()
    }

    pub fn speed(&self, frame: usize) -> Option<T> {
        self.velocity(frame).map(Point2::norm)
    }

    /// First and last frame with a defined center.
    pub fn coverage(&self) -> Option<(usize, usize)> {
        let first = self.centers.iter().position(Option::is_some)?;
        let last = self.centers.iter().rposition(Option::is_some)?;
        Some((first, last))
    }

    /// Track built from already complete centers (no occlusion flags).
    pub fn from_centers(centers: Vec<Option<Point2<T>>>, fps: f64) -> Result<Self> {
        let (filled, occluded) = fill_gaps(&centers);
        let (first, last) = coverage_of(&filled)
            .ok_or_else(|| Error::BallTrackUndefined("no ball positions".into()))?;
        let points: Vec<Point2<T>> = filled[first..=last].iter().map(|c| c.expect("filled")).collect();
        let vel = derive_velocity(&points, fps)?;
        let mut velocity = vec![None; filled.len()];
        for (i, v) in vel.into_iter().enumerate() {
            velocity[first + i] = Some(v);
        }
        Ok(BallTrack { fps, centers: filled, occluded, velocity })
    }
}

fn coverage_of<P>(centers: &[Option<P>]) -> Option<(usize, usize)> {
    Some((centers.iter().position(Option::is_some)?, centers.iter().rposition(Option::is_some)?))
}

/// Linearly fills every gap between two known positions. Returns the filled
/// centers and a flag per frame marking filled entries. Frames before the
/// first or after the last known position stay `None`.
pub fn fill_gaps<T: Scalar>(centers: &[Option<Point2<T>>]) -> (Vec<Option<Point2<T>>>, Vec<bool>) {
    let mut out = centers.to_vec();
    let mut flags = vec![false; centers.len()];
    let mut prev: Option<(usize, Point2<T>)> = None;
    for (i, c) in centers.iter().enumerate() {
        if let Some(p) = c {
            if let Some((j, q)) = prev {
                let span = T::from_count(i - j);
                for k in j + 1..i {
                    out[k] = Some(q.lerp(*p, T::from_count(k - j) / span));
                    flags[k] = true;
                }
            }
            prev = Some((i, *p));
        }
    }
    (out, flags)
}

/// Fills occluded ball positions between detections and derives velocity.
pub fn interpolate_ball<T: Scalar>(ds: &TrackingDataset<T>) -> Result<BallTrack<T>> {
    let detected: Vec<Option<Point2<T>>> = ds.frames.iter().map(|f| f.ball.as_ref().map(|b| b.center)).collect();
    let count = detected.iter().filter(|c| c.is_some()).count();
    if count < 2 {
        return Err(Error::BallTrackUndefined(format!("{count} ball detection(s), need at least 2")));
    }
    BallTrack::from_centers(detected, ds.video.fps)
}

/// Per-sample velocity in units per second: central differences inside,
/// one-sided differences at both ends.
pub fn derive_velocity<T: Scalar>(points: &[Point2<T>], fps: f64) -> Result<Vec<Point2<T>>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::BallTrackUndefined("velocity needs at least two frames".into()));
    }
    let rate = T::lit(fps);
    let half_rate = T::lit(fps / 2.0);
    Ok((0..n)
        .map(|i| match i {
            0 => (points[1] - points[0]) * rate,
            i if i == n - 1 => (points[n - 1] - points[n - 2]) * rate,
            i => (points[i + 1] - points[i - 1]) * half_rate,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeypointLookup<T> {
    Visible(Point2<T>),
    Occluded,
}

impl<T: Copy> KeypointLookup<T> {
    pub fn point(self) -> Option<Point2<T>> {
        match self {
            KeypointLookup::Visible(p) => Some(p),
            KeypointLookup::Occluded => None,
        }
    }
}

/// Looks up a named keypoint (including the derived `neck`), returning it
/// only when its confidence reaches `threshold`.
pub fn player_keypoint<T: Scalar>(
    ds: &TrackingDataset<T>,
    player: PlayerId,
    name: &str,
    frame: usize,
    threshold: f64,
) -> Result<KeypointLookup<T>> {
    let det = ds.frame(frame)?.player(player).ok_or_else(|| Error::UnknownPlayer(player.to_string()))?;
    let (point, confidence) = if name == NECK {
        let l = det.keypoints[keypoint_index("left_shoulder").expect("schema")];
        let r = det.keypoints[keypoint_index("right_shoulder").expect("schema")];
        (l.point.midpoint(r.point), l.confidence.min(r.confidence))
    } else {
        let idx = keypoint_index(name).ok_or_else(|| Error::UnknownKeypoint(name.to_string()))?;
        let k = det.keypoints[idx];
        (k.point, k.confidence)
    };
    Ok(if confidence >= threshold { KeypointLookup::Visible(point) } else { KeypointLookup::Occluded })
}

/// Racket-hand position used for stroke detection: the right wrist, falling
/// back to the neck when the wrist is occluded.
pub fn reach_point<T: Scalar>(ds: &TrackingDataset<T>, player: PlayerId, frame: usize, threshold: f64) -> Option<Point2<T>> {
    ["right_wrist", NECK]
        .iter()
        .find_map(|name| player_keypoint(ds, player, name, frame, threshold).ok().and_then(KeypointLookup::point))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    #[test]
    fn midpoint_gap_is_filled_and_flagged() {
        let (c, flags) = fill_gaps(&[Some(p(0.0, 0.0)), None, Some(p(10.0, 10.0))]);
        assert_eq!(c[1], Some(p(5.0, 5.0)));
        assert_eq!(flags, vec![false, true, false]);
    }

    #[test]
    fn complete_track_is_unchanged() {
        let input = vec![Some(p(1.0, 2.0)), Some(p(3.0, 5.0)), Some(p(7.0, 1.0))];
        let (c, flags) = fill_gaps(&input);
        assert_eq!(c, input);
        assert!(flags.iter().all(|f| !f));
    }

    #[test]
    fn five_frame_gap_matches_per_gap_line_solve() {
        let input = vec![Some(p(0.0, 0.0)), None, None, None, None, Some(p(10.0, 0.0))];
        let (c, _) = fill_gaps(&input);
        // Independent oracle: slope of the bracketing segment, evaluated per frame.
        let slope = (10.0 - 0.0) / (5.0 - 0.0);
        for (k, expected) in [(1usize, 2.0), (2, 4.0), (3, 6.0), (4, 8.0)] {
            let oracle = 0.0 + slope * k as f64;
            assert!((oracle - expected).abs() < 1e-12);
            let got = c[k].unwrap();
            assert!((got.x - oracle).abs() < 1e-9 && got.y.abs() < 1e-12, "frame {k}: {got:?}");
        }
    }

    #[test]
    fn interpolation_works_in_f32() {
        let (c, _) = fill_gaps(&[Some(Point2::new(0.0f32, 0.0)), None, Some(Point2::new(4.0, -2.0))]);
        assert_eq!(c[1], Some(Point2::new(2.0f32, -1.0)));
    }

    #[test]
    fn constant_motion_velocity() {
        let pts: Vec<_> = (0..6).map(|i| p(3.0 + i as f64, 7.0)).collect();
        let v = derive_velocity(&pts, 50.0).unwrap();
        assert!(v.iter().all(|v| *v == p(50.0, 0.0)));
        let still = vec![p(4.0, 4.0); 4];
        assert!(derive_velocity(&still, 50.0).unwrap().iter().all(|v| *v == p(0.0, 0.0)));
        assert!(derive_velocity(&still[..1], 50.0).is_err());
    }

    #[test]
    fn central_difference_on_parabola_is_within_truncation() {
        // y(t) = t^2 sampled at 5 frames, dt = 1/fps.
        let fps = 50.0;
        let dt = 1.0 / fps;
        let pts: Vec<_> = (0..5).map(|i| p(0.0, (i as f64 * dt).powi(2))).collect();
        let v = derive_velocity(&pts, fps).unwrap();
        for (i, vi) in v.iter().enumerate().take(4).skip(1) {
            let t = i as f64 * dt;
            let analytic = 2.0 * t;
            // truncation term of the central difference: y''' dt^2 / 6 = 0 for a quadratic.
            assert!((vi.y - analytic).abs() < 1e-9, "frame {i}: {} vs {}", vi.y, analytic);
        }
        // one-sided ends carry the first-order term y'' dt / 2 = dt.
        assert!((v[0].y - (0.0 + dt)).abs() < 1e-9);
    }

    #[test]
    fn interpolate_requires_two_detections() {
        let mut ds = synth::fixture_rally();
        for f in ds.frames.iter_mut().skip(1) {
            f.ball = None;
        }
        assert!(matches!(interpolate_ball(&ds), Err(Error::BallTrackUndefined(_))));
    }

    #[test]
    fn fixture_loads_with_expected_duration() {
        let ds = synth::fixture_rally();
        assert_eq!(ds.video.frame_count, 300);
        assert_eq!(ds.video.fps, 50.0);
        assert!((ds.video.duration_seconds() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn non_contiguous_and_empty_are_rejected() {
        let ds = synth::fixture_rally();
        let mut frames: Vec<_> = ds.frames[..4].to_vec();
        frames.remove(2);
        let mut meta = ds.video.clone();
        meta.frame_count = 3;
        let err = TrackingDataset::new(meta.clone(), frames).unwrap_err();
        assert!(err.to_string().contains("non-contiguous frame_index"), "{err}");
        meta.frame_count = 0;
        let err = TrackingDataset::<f64>::new(meta, vec![]).unwrap_err();
        assert_eq!(err.to_string(), "empty dataset");
    }

    #[test]
    fn malformed_geometry_is_rejected() {
        let ds = synth::fixture_rally();
        let mut frames = ds.frames.clone();
        frames[5].players[0].bbox.w = 0.0;
        assert!(matches!(TrackingDataset::new(ds.video.clone(), frames), Err(Error::Geometry { frame: 5, .. })));
        let mut frames = ds.frames.clone();
        frames[7].table.quad.0.swap(0, 1);
        assert!(matches!(TrackingDataset::new(ds.video.clone(), frames), Err(Error::Geometry { frame: 7, .. })));
    }

    #[test]
    fn schema_version_is_checked() {
        let json = synth::fixture_rally().to_json().replacen("\"schema_version\": 1", "\"schema_version\": 9", 1);
        assert!(matches!(TrackingDataset::<f64>::from_json(json.as_bytes()), Err(Error::SchemaVersion { found: 9, .. })));
    }

    #[test]
    fn save_load_round_trip_plain_and_gzip() {
        let ds = synth::fixture_rally();
        let dir = tempfile::tempdir().unwrap();
        for name in ["t.json", "t.json.gz"] {
            let path = dir.path().join(name);
            ds.save(&path).unwrap();
            let back: TrackingDataset<f64> = load_dataset(&path).unwrap();
            assert!(back == ds);
            assert!(back.to_json() == ds.to_json());
        }
    }

    #[test]
    fn keypoint_threshold_and_neck_fallback() {
        let mut ds = synth::fixture_rally();
        let kps = &mut ds.frames[0].players[0].keypoints;
        kps[keypoint_index("right_wrist").unwrap()].confidence = 0.9;
        assert!(matches!(
            player_keypoint(&ds, PlayerId::A, "right_wrist", 0, 0.3).unwrap(),
            KeypointLookup::Visible(_)
        ));
        let kps = &mut ds.frames[0].players[0].keypoints;
        kps[keypoint_index("right_wrist").unwrap()].confidence = 0.1;
        kps[keypoint_index("left_shoulder").unwrap()].confidence = 0.8;
        kps[keypoint_index("right_shoulder").unwrap()].confidence = 0.8;
        assert_eq!(player_keypoint(&ds, PlayerId::A, "right_wrist", 0, 0.3).unwrap(), KeypointLookup::Occluded);
        assert!(matches!(player_keypoint(&ds, PlayerId::A, NECK, 0, 0.3).unwrap(), KeypointLookup::Visible(_)));
        let neck = player_keypoint(&ds, PlayerId::A, NECK, 0, 0.3).unwrap().point();
        assert_eq!(reach_point(&ds, PlayerId::A, 0, 0.3), neck);
        assert!(matches!(player_keypoint(&ds, PlayerId::A, "left_antenna", 0, 0.3), Err(Error::UnknownKeypoint(_))));
        assert!(matches!("C".parse::<PlayerId>(), Err(Error::UnknownPlayer(_))));
    }

    fn sparse_track() -> impl Strategy<Value = Vec<Option<Point2<f64>>>> {
        prop::collection::vec(
            prop::option::weighted(0.6, (-500.0f64..2500.0, -500.0f64..1500.0).prop_map(|(x, y)| p(x, y))),
            2..40,
        )
    }

    proptest! {
        #[test]
        fn interpolation_is_idempotent(track in sparse_track()) {
            let (once, _) = fill_gaps(&track);
            let (twice, flags) = fill_gaps(&once);
            prop_assert_eq!(&once, &twice);
            // second pass sees no interior gaps
            if let Some((a, b)) = coverage_of(&once) {
                prop_assert!(flags[a..=b].iter().all(|f| !f));
            }
        }

        #[test]
        fn interpolated_points_are_collinear(track in sparse_track()) {
            let (filled, flags) = fill_gaps(&track);
            let known: Vec<usize> = (0..track.len()).filter(|&i| track[i].is_some()).collect();
            for w in known.windows(2) {
                let (a, b) = (track[w[0]].unwrap(), track[w[1]].unwrap());
                for k in w[0] + 1..w[1] {
                    prop_assert!(flags[k]);
                    let q = filled[k].unwrap();
                    let len = (b - a).norm();
                    if len > 0.0 {
                        let dist = ((b - a).cross(q - a) / len).abs();
                        prop_assert!(dist < 1e-9, "off segment by {}", dist);
                        let t = (q - a).dot(b - a) / (len * len);
                        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&t));
                    } else {
                        prop_assert!((q - a).norm() < 1e-9);
                    }
                }
            }
        }

        #[test]
        fn reversed_track_has_negated_reversed_velocity(
            pts in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3).prop_map(|(x, y)| p(x, y)), 2..30),
            fps in prop::sample::select(vec![25.0, 30.0, 50.0, 60.0]),
        ) {
            let v = derive_velocity(&pts, fps).unwrap();
            let rev: Vec<_> = pts.iter().rev().copied().collect();
            let vr = derive_velocity(&rev, fps).unwrap();
            let n = pts.len();
            for i in 0..n {
                prop_assert_eq!(vr[i], -v[n - 1 - i]);
            }
        }
    }
}
