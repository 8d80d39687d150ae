//! Event-level data from object-level tracks: strokes with hit frames,
//! bounces with placement cells, net hits and turn segmentation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::design_space::SCHEMA_VERSION;
use crate::error::{Error, Result};
use crate::geom::{Point2, Quad};
use crate::scalar::Scalar;
use crate::tracking::{
    interpolate_ball, player_keypoint, reach_point, BallTrack, PlayerId, TableGeometry, TrackingDataset,
    DEFAULT_KEYPOINT_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Stroke,
    Bounce,
    NetHit,
    Turn,
}

impl EventKind {
    fn id_prefix(self) -> &'static str {
        match self {
            EventKind::Stroke => "stroke",
            EventKind::Bounce => "bounce",
            EventKind::NetHit => "nethit",
            EventKind::Turn => "turn",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventSubject {
    Ball,
    A,
    B,
}

impl EventSubject {
    pub fn player(self) -> Option<PlayerId> {
        match self {
            EventSubject::Ball => None,
            EventSubject::A => Some(PlayerId::A),
            EventSubject::B => Some(PlayerId::B),
        }
    }
}

impl From<PlayerId> for EventSubject {
    fn from(p: PlayerId) -> Self {
        match p {
            PlayerId::A => EventSubject::A,
            PlayerId::B => EventSubject::B,
        }
    }
}

/// Cell of the 3x3 grid on one table half. Depth 0 is the row along the end
/// line, lateral 0 the top edge in screen space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementCell {
    pub half: PlayerId,
    pub zone: u8,
    pub point: Point2<f64>,
}

impl PlacementCell {
    pub fn depth(&self) -> u8 {
        self.zone / 3
    }

    pub fn lateral(&self) -> u8 {
        self.zone % 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    ForehandAttack,
    BackhandAttack,
    ForehandPush,
    BackhandPush,
    Unknown,
}

impl Technique {
    pub fn label(self) -> &'static str {
        match self {
            Technique::ForehandAttack => "forehand_attack",
            Technique::BackhandAttack => "backhand_attack",
            Technique::ForehandPush => "forehand_push",
            Technique::BackhandPush => "backhand_push",
            Technique::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub event_id: String,
    pub kind: EventKind,
    pub subject: EventSubject,
    /// Inclusive frame span.
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_frame: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<PlacementCell>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl Event {
    pub fn new(kind: EventKind, subject: EventSubject, start: usize, end: usize) -> Self {
        Event {
            event_id: String::new(),
            kind,
            subject,
            start,
            end,
            hit_frame: None,
            placement: None,
            attributes: BTreeMap::new(),
        }
    }

    /// The frame the event is pinned to: the hit frame of a stroke, else its start.
    pub fn key_frame(&self) -> usize {
        self.hit_frame.unwrap_or(self.start)
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.start <= frame && frame <= self.end
    }

    pub fn technique(&self) -> Option<&str> {
        self.attributes.get("stroke_technique").map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventParams {
    /// Reach threshold as a fraction of the frame width.
    pub reach_fraction: f64,
    /// Minimum relative speed drop for a net hit.
    pub net_drop: f64,
    /// Frames after the crossing searched for the drop.
    pub net_window: usize,
    pub enforce_alternation: bool,
    pub keypoint_threshold: f64,
}

impl Default for EventParams {
    fn default() -> Self {
        EventParams {
            reach_fraction: 0.12,
            net_drop: 0.5,
            net_window: 3,
            enforce_alternation: true,
            keypoint_threshold: DEFAULT_KEYPOINT_THRESHOLD,
        }
    }
}

impl EventParams {
    pub fn reach_px(&self, frame_width: u32) -> f64 {
        self.reach_fraction * f64::from(frame_width)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reach_fraction > 0.0 && self.reach_fraction.is_finite()) {
            return Err(Error::invalid("reach_fraction must be positive"));
        }
        if !(0.0..=1.0).contains(&self.net_drop) {
            return Err(Error::invalid("net_drop must lie in [0, 1]"));
        }
        if self.net_window == 0 {
            return Err(Error::invalid("net_window must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.keypoint_threshold) {
            return Err(Error::invalid("keypoint_threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Half-window of the local-minimum test (5 frames in total).
const MIN_HALF_WINDOW: usize = 2;

/// Distance minima below `threshold`: strictly below earlier neighbours and
/// not above later ones inside the window, so plateaus resolve to their
/// earliest frame.
pub fn local_minima<T: Scalar>(values: &[Option<T>], threshold: T) -> Vec<usize> {
    let mut out = Vec::new();
    for (f, v) in values.iter().enumerate() {
        let Some(v) = *v else { continue };
        if v >= threshold {
            continue;
        }
        let lo = f.saturating_sub(MIN_HALF_WINDOW);
        let hi = (f + MIN_HALF_WINDOW).min(values.len() - 1);
        let ok = (lo..=hi).filter(|&g| g != f).all(|g| match values[g] {
            None => true,
            Some(w) if g < f => v < w,
            Some(w) => v <= w,
        });
        if ok {
            out.push(f);
        }
    }
    out
}

/// First frame in `[start, end]` where the ball's horizontal motion reverses.
/// Returns the frame the ball reached before moving the other way (the
/// earliest frame of a plateau).
pub fn find_hit_frame<T: Scalar>(track: &BallTrack<T>, start: usize, end: usize) -> Option<usize> {
    let mut last: Option<(bool, usize)> = None;
    for g in start + 1..=end {
        let (Some(a), Some(b)) = (track.center(g - 1), track.center(g)) else {
            last = None;
            continue;
        };
        let dx = b.x - a.x;
        if dx == T::zero() {
            continue;
        }
        let forward = dx > T::zero();
        match last {
            Some((dir, reached)) if dir != forward => return Some(reached),
            _ => last = Some((forward, g)),
        }
    }
    None
}

/// Stroke events for both players, sorted by start frame.
pub fn detect_strokes<T: Scalar>(track: &BallTrack<T>, ds: &TrackingDataset<T>, params: &EventParams) -> Vec<Event> {
    let reach = T::lit(params.reach_px(ds.video.width));
    let mut strokes = Vec::new();
    for player in PlayerId::BOTH {
        let dist: Vec<Option<T>> = (0..ds.frame_count())
            .map(|f| {
                let ball = track.center(f)?;
                let hand = reach_point(ds, player, f, params.keypoint_threshold)?;
                Some(ball.distance(hand))
            })
            .collect();
        let mut covered_until: Option<usize> = None;
        for f in local_minima(&dist, reach) {
            if covered_until.is_some_and(|e| f <= e) {
                continue;
            }
            let within = |g: usize| dist[g].is_some_and(|d| d < reach);
            let mut start = f;
            while start > 0 && within(start - 1) {
                start -= 1;
            }
            let mut end = f;
            while end + 1 < dist.len() && within(end + 1) {
                end += 1;
            }
            covered_until = Some(end);
            let mut ev = Event::new(EventKind::Stroke, player.into(), start, end);
            ev.hit_frame = find_hit_frame(track, start, end);
            ev.attributes.insert("closest_frame".into(), f.to_string());
            strokes.push(ev);
        }
    }
    strokes.sort_by_key(|e| (e.start, e.key_frame(), e.subject));
    if params.enforce_alternation {
        let mut kept: Vec<Event> = Vec::with_capacity(strokes.len());
        for ev in strokes {
            if kept.last().is_some_and(|prev| prev.subject == ev.subject) {
                continue;
            }
            kept.push(ev);
        }
        strokes = kept;
    }
    number(&mut strokes);
    strokes
}

/// The half-table quads `(A side, B side)` split along `net_x`.
pub fn half_quads<T: Scalar>(table: &TableGeometry<T>) -> (Quad<T>, Quad<T>) {
    let [tl, tr, br, bl] = table.quad.0;
    let at_net = |a: Point2<T>, b: Point2<T>| a.lerp(b, (table.net_x - a.x) / (b.x - a.x));
    let top = at_net(tl, tr);
    let bottom = at_net(bl, br);
    (Quad([tl, top, bottom, bl]), Quad([top, tr, br, bottom]))
}

fn grid_index(t: f64) -> u8 {
    ((t * 3.0).floor() as i64).clamp(0, 2) as u8
}

/// Maps a contact point on the table to its half and 3x3 zone.
pub fn placement_cell<T: Scalar>(table: &TableGeometry<T>, p: Point2<T>) -> Option<PlacementCell> {
    if !table.quad.contains(p) {
        return None;
    }
    let (qa, qb) = half_quads(table);
    let half = if p.x < table.net_x { PlayerId::A } else { PlayerId::B };
    let quad = if half == PlayerId::A { qa } else { qb };
    let (u, v) = quad.inverse_bilinear(p)?;
    let (u, v) = (u.as_f64().clamp(0.0, 1.0), v.as_f64().clamp(0.0, 1.0));
    // depth counts from the end line of the half
    let depth = if half == PlayerId::A { grid_index(u) } else { grid_index(1.0 - u) };
    let lateral = grid_index(v);
    Some(PlacementCell { half, zone: depth * 3 + lateral, point: p.cast() })
}

/// Screen-space center of a grid cell.
pub fn cell_center<T: Scalar>(table: &TableGeometry<T>, half: PlayerId, zone: u8) -> Point2<f64> {
    let (qa, qb) = half_quads(table);
    let (depth, lateral) = (f64::from(zone / 3), f64::from(zone % 3));
    let d = (depth + 0.5) / 3.0;
    let u = if half == PlayerId::A { d } else { 1.0 - d };
    let quad = if half == PlayerId::A { qa } else { qb };
    quad.bilinear(T::lit(u), T::lit((lateral + 0.5) / 3.0)).cast()
}

/// Corners of a grid cell (top-left, top-right, bottom-right, bottom-left in
/// half-quad parameter space).
pub fn cell_polygon<T: Scalar>(table: &TableGeometry<T>, half: PlayerId, zone: u8) -> [Point2<f64>; 4] {
    let (qa, qb) = half_quads(table);
    let (depth, lateral) = (f64::from(zone / 3), f64::from(zone % 3));
    let (u0, u1) = if half == PlayerId::A {
        (depth / 3.0, (depth + 1.0) / 3.0)
    } else {
        (1.0 - (depth + 1.0) / 3.0, 1.0 - depth / 3.0)
    };
    let (v0, v1) = (lateral / 3.0, (lateral + 1.0) / 3.0);
    let quad = if half == PlayerId::A { qa } else { qb };
    let at = |u: f64, v: f64| quad.bilinear(T::lit(u), T::lit(v)).cast();
    [at(u0, v0), at(u1, v0), at(u1, v1), at(u0, v1)]
}

/// Bounces: local maxima of screen y on the table where the vertical
/// velocity turns from downward to upward.
pub fn detect_bounces<T: Scalar>(track: &BallTrack<T>, ds: &TrackingDataset<T>) -> Vec<Event> {
    let mut out = Vec::new();
    for f in 1..track.len().saturating_sub(1) {
        let (Some(prev), Some(cur), Some(next)) = (track.center(f - 1), track.center(f), track.center(f + 1)) else {
            continue;
        };
        let (Some(v0), Some(v1)) = (track.velocity(f - 1), track.velocity(f + 1)) else {
            continue;
        };
        if !(cur.y > prev.y && cur.y >= next.y && v0.y > T::zero() && v1.y < T::zero()) {
            continue;
        }
        let Some(cell) = placement_cell(&ds.frames[f].table, cur) else {
            continue;
        };
        let mut ev = Event::new(EventKind::Bounce, EventSubject::Ball, f, f);
        ev.placement = Some(cell);
        out.push(ev);
    }
    number(&mut out);
    out
}

/// Net hits: the ball crosses the net plane and its speed drops by at least
/// `net_drop` (relative) within `net_window` frames.
pub fn detect_net_hits<T: Scalar>(track: &BallTrack<T>, ds: &TrackingDataset<T>, params: &EventParams) -> Vec<Event> {
    let mut out = Vec::new();
    let keep = T::lit(1.0 - params.net_drop);
    for c in 1..track.len() {
        let (Some(a), Some(b)) = (track.center(c - 1), track.center(c)) else {
            continue;
        };
        let net = ds.frames[c].table.net_x;
        let (sa, sb) = (a.x - net, b.x - net);
        let crossed = sa != T::zero() && (sa * sb < T::zero() || sb == T::zero());
        if !crossed {
            continue;
        }
        let Some(before) = track.speed(c - 1) else { continue };
        if before <= T::zero() {
            continue;
        }
        let last = (c + params.net_window - 1).min(track.len() - 1);
        let slowest = (c..=last).filter_map(|g| track.speed(g)).fold(None, |m: Option<T>, s| {
            Some(m.map_or(s, |m| m.min(s)))
        });
        if slowest.is_some_and(|s| s <= before * keep) {
            out.push(Event::new(EventKind::NetHit, EventSubject::Ball, c - 1, last));
        }
    }
    number(&mut out);
    out
}

/// Turn `i` runs from hit `i` to the frame before hit `i + 1`; the last
/// turn ends at `rally_end`. Strokes without a hit frame are skipped.
pub fn segment_turns(strokes: &[Event], rally_end: usize) -> Vec<Event> {
    let hits: Vec<(usize, &Event)> = strokes.iter().filter_map(|s| s.hit_frame.map(|h| (h, s))).collect();
    let mut out = Vec::new();
    for (i, &(h, stroke)) in hits.iter().enumerate() {
        if h > rally_end {
            break;
        }
        let end = hits.get(i + 1).map_or(rally_end, |&(n, _)| n.saturating_sub(1).min(rally_end));
        let mut ev = Event::new(EventKind::Turn, stroke.subject, h, end.max(h));
        ev.attributes.insert("stroke".into(), stroke.event_id.clone());
        out.push(ev);
    }
    number(&mut out);
    out
}

/// Rule-table technique label from the posture at the hit frame.
pub fn classify_stroke_technique<T: Scalar>(stroke: &Event, ds: &TrackingDataset<T>, threshold: f64) -> Technique {
    let (Some(hit), Some(player)) = (stroke.hit_frame, stroke.subject.player()) else {
        return Technique::Unknown;
    };
    let kp = |name: &str| player_keypoint(ds, player, name, hit, threshold).ok().and_then(|k| k.point());
    let (Some(wrist), Some(shoulder)) = (kp("right_wrist"), kp("right_shoulder")) else {
        return Technique::Unknown;
    };
    let others: Vec<Point2<T>> = ["left_shoulder", "left_hip", "right_hip"].iter().filter_map(|n| kp(n)).collect();
    if others.is_empty() {
        return Technique::Unknown;
    }
    let torso_x = others.iter().fold(shoulder.x, |acc, p| acc + p.x) / T::from_count(others.len() + 1);
    let racket_side = shoulder.x - torso_x;
    let wrist_side = wrist.x - torso_x;
    if racket_side == T::zero() || wrist_side == T::zero() {
        return Technique::Unknown;
    }
    let forehand = (racket_side > T::zero()) == (wrist_side > T::zero());
    let attack = wrist.y < shoulder.y;
    match (forehand, attack) {
        (true, true) => Technique::ForehandAttack,
        (false, true) => Technique::BackhandAttack,
        (true, false) => Technique::ForehandPush,
        (false, false) => Technique::BackhandPush,
    }
}

fn number(events: &mut [Event]) {
    for (i, e) in events.iter_mut().enumerate() {
        e.event_id = format!("{}#{i}", e.kind.id_prefix());
    }
}

/// Every detected event of a rally, sorted by `(start, kind, event_id)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub schema_version: u32,
    pub rally_end: usize,
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn new(rally_end: usize, mut events: Vec<Event>) -> Self {
        events.sort_by(|a, b| (a.start, a.kind, &a.event_id).cmp(&(b.start, b.kind, &b.event_id)));
        EventLog { schema_version: SCHEMA_VERSION, rally_end, events }
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn get(&self, id: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.event_id == id)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let log: EventLog = serde_json::from_str(text)?;
        if log.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: log.schema_version, supported: SCHEMA_VERSION });
        }
        for e in &log.events {
            if e.start > e.end || e.end > log.rally_end {
                return Err(Error::invalid(format!("event {} has span [{}, {}] outside the rally", e.event_id, e.start, e.end)));
            }
            if e.hit_frame.is_some_and(|h| !e.contains(h)) {
                return Err(Error::invalid(format!("event {} hit_frame outside its span", e.event_id)));
            }
        }
        Ok(EventLog::new(log.rally_end, log.events))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("event serialization");
        s.push('\n');
        s
    }
}

/// Runs all detectors on a dataset.
pub fn detect_events<T: Scalar>(ds: &TrackingDataset<T>, params: &EventParams) -> Result<(BallTrack<T>, EventLog)> {
    params.validate()?;
    let track = interpolate_ball(ds)?;
    let mut strokes = detect_strokes(&track, ds, params);
    for s in &mut strokes {
        let t = classify_stroke_technique(s, ds, params.keypoint_threshold);
        s.attributes.insert("stroke_technique".into(), t.label().into());
    }
    let rally_end = ds.last_frame();
    let turns = segment_turns(&strokes, rally_end);
    let mut all = strokes;
    all.extend(detect_bounces(&track, ds));
    all.extend(detect_net_hits(&track, ds, params));
    all.extend(turns);
    Ok((track, EventLog::new(rally_end, all)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, RallyPlan};
    use crate::tracking::KEYPOINT_NAMES;

    fn track_of(points: &[(f64, f64)]) -> BallTrack<f64> {
        BallTrack::from_centers(points.iter().map(|&(x, y)| Some(Point2::new(x, y))).collect(), 50.0).unwrap()
    }

    #[test]
    fn fixture_has_six_alternating_hits_and_turns() {
        let ds = synth::fixture_rally();
        let (_, log) = detect_events(&ds, &EventParams::default()).unwrap();
        let hits: Vec<(usize, EventSubject)> = log
            .of_kind(EventKind::Stroke)
            .filter_map(|s| s.hit_frame.map(|h| (h, s.subject)))
            .collect();
        use EventSubject::{A, B};
        assert_eq!(hits, vec![(20, A), (65, B), (110, A), (155, B), (200, A), (245, B)]);
        let turns: Vec<(usize, usize)> = log.of_kind(EventKind::Turn).map(|t| (t.start, t.end)).collect();
        assert_eq!(turns, vec![(20, 64), (65, 109), (110, 154), (155, 199), (200, 244), (245, 299)]);
        // the last ball flies past player A without a return
        let last = log.of_kind(EventKind::Stroke).last().unwrap();
        assert_eq!((last.subject, last.hit_frame), (A, None));
    }

    #[test]
    fn fixture_bounces_match_the_plan() {
        let plan = RallyPlan::fixture();
        let ds = plan.build().dataset;
        let (_, log) = detect_events(&ds, &EventParams::default()).unwrap();
        let frames: Vec<usize> = log.of_kind(EventKind::Bounce).map(|b| b.start).collect();
        assert_eq!(frames, plan.bounce_frames);
        let zones: Vec<(PlayerId, u8)> = log
            .of_kind(EventKind::Bounce)
            .map(|b| b.placement.map(|c| (c.half, c.zone)).unwrap())
            .collect();
        use PlayerId::{A, B};
        assert_eq!(zones, vec![(B, 4), (A, 5), (B, 0), (A, 1), (B, 1), (A, 1)]);
        assert_eq!(log.of_kind(EventKind::NetHit).count(), 0);
    }

    #[test]
    fn fixture_techniques() {
        let (_, log) = detect_events(&synth::fixture_rally(), &EventParams::default()).unwrap();
        let t: Vec<&str> = log.of_kind(EventKind::Stroke).filter(|s| s.hit_frame.is_some()).map(|s| s.technique().unwrap()).collect();
        assert_eq!(
            t,
            ["forehand_push", "backhand_push", "forehand_push", "backhand_push", "forehand_push", "forehand_attack"]
        );
    }

    #[test]
    fn oscillating_ball_strokes_alternate() {
        // ball between x=100 and x=900 with wrists at x=80 and x=920
        let mut ds = synth::fixture_rally();
        let period = 40usize;
        for f in &mut ds.frames {
            let phase = f.frame_index % (2 * period);
            let x = if phase <= period { 100.0 + 20.0 * phase as f64 } else { 900.0 - 20.0 * (phase - period) as f64 };
            let b = f.ball.get_or_insert_with(|| ds_ball(x));
            b.center = Point2::new(x, 400.0);
            b.bbox = crate::geom::BBox::new(x - 6.0, 394.0, 12.0, 12.0);
            for p in &mut f.players {
                let wx = if p.id == PlayerId::A { 80.0 } else { 920.0 };
                p.keypoints[10].point = Point2::new(wx, 405.0);
            }
        }
        let track = interpolate_ball(&ds).unwrap();
        let strokes = detect_strokes(&track, &ds, &EventParams::default());
        let hits: Vec<(Option<usize>, EventSubject)> = strokes.iter().map(|s| (s.hit_frame, s.subject)).collect();
        assert_eq!(hits[0], (None, EventSubject::A), "rally starts at the A turning point");
        for (i, (h, subject)) in hits.iter().enumerate().skip(1) {
            let expected_subject = if i % 2 == 0 { EventSubject::A } else { EventSubject::B };
            assert_eq!(*subject, expected_subject);
            assert_eq!(*h, Some(i * period));
        }
    }

    fn ds_ball(x: f64) -> crate::tracking::BallDetection<f64> {
        crate::tracking::BallDetection {
            center: Point2::new(x, 400.0),
            bbox: crate::geom::BBox::new(x - 6.0, 394.0, 12.0, 12.0),
            rotation_rpm: None,
        }
    }

    #[test]
    fn distant_ball_yields_no_strokes() {
        let mut ds = synth::fixture_rally();
        for f in &mut ds.frames {
            f.ball = Some(ds_ball(960.0 + (f.frame_index % 7) as f64));
        }
        let track = interpolate_ball(&ds).unwrap();
        assert!(detect_strokes(&track, &ds, &EventParams::default()).is_empty());
    }

    #[test]
    fn hit_frame_is_the_horizontal_turning_point() {
        let t = track_of(&[(50.0, 0.0), (30.0, 0.0), (10.0, 0.0), (40.0, 0.0), (70.0, 0.0)]);
        assert_eq!(find_hit_frame(&t, 0, 4), Some(2));
        // plateau resolves to the earliest frame
        let t = track_of(&[(50.0, 0.0), (10.0, 0.0), (10.0, 0.0), (40.0, 0.0)]);
        assert_eq!(find_hit_frame(&t, 0, 3), Some(1));
        let t = track_of(&[(50.0, 0.0), (40.0, 0.0), (30.0, 0.0)]);
        assert_eq!(find_hit_frame(&t, 0, 2), None);
    }

    #[test]
    fn local_minimum_plateau_takes_earliest() {
        let v = [Some(5.0), Some(2.0), Some(2.0), Some(4.0), Some(6.0)];
        assert_eq!(local_minima(&v, 10.0), vec![1]);
        assert!(local_minima(&v, 1.0).is_empty());
    }

    #[test]
    fn net_hit_predicate() {
        let mut ds = synth::fixture_rally();
        ds.frames.truncate(8);
        ds.video.frame_count = 8;
        // 300 px/s is 6 px/frame, 60 px/s is 1.2 px/frame
        let xs = [942.0, 948.0, 954.0, 960.5, 961.7, 962.9, 964.1, 965.3];
        let t = track_of(&xs.iter().map(|&x| (x, 500.0)).collect::<Vec<_>>());
        let hits = detect_net_hits(&t, &ds, &EventParams::default());
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].start, 2);
        let steady: Vec<(f64, f64)> = (0..8).map(|i| (930.0 + 10.0 * i as f64, 500.0)).collect();
        assert!(detect_net_hits(&track_of(&steady), &ds, &EventParams::default()).is_empty());
    }

    #[test]
    fn turns_partition() {
        let mk = |h: usize, s: EventSubject| {
            let mut e = Event::new(EventKind::Stroke, s, h - 3, h + 3);
            e.hit_frame = Some(h);
            e
        };
        let strokes = vec![mk(10, EventSubject::A), mk(60, EventSubject::B), mk(110, EventSubject::A)];
        let spans: Vec<_> = segment_turns(&strokes, 150).iter().map(|t| (t.start, t.end)).collect();
        assert_eq!(spans, vec![(10, 59), (60, 109), (110, 150)]);
        let spans: Vec<_> = segment_turns(&[mk(20, EventSubject::A)], 100).iter().map(|t| (t.start, t.end)).collect();
        assert_eq!(spans, vec![(20, 100)]);
        assert!(segment_turns(&[], 100).is_empty());
    }

    #[test]
    fn technique_rule_table() {
        let ds = synth::fixture_rally();
        let mut stroke = Event::new(EventKind::Stroke, EventSubject::A, 15, 25);
        stroke.hit_frame = Some(20);
        let set = |ds: &mut TrackingDataset<f64>, name: &str, x: f64, y: f64, c: f64| {
            let i = KEYPOINT_NAMES.iter().position(|n| *n == name).unwrap();
            let kp = &mut ds.frames[20].players[0].keypoints[i];
            kp.point = Point2::new(x, y);
            kp.confidence = c;
        };
        // oracle: rule table evaluated directly on the constructed posture
        let oracle = |wrist: (f64, f64), rsh: (f64, f64), torso_x: f64| {
            let above = wrist.1 < rsh.1;
            let same = (wrist.0 - torso_x).signum() == (rsh.0 - torso_x).signum();
            match (same, above) {
                (true, true) => Technique::ForehandAttack,
                (false, true) => Technique::BackhandAttack,
                (true, false) => Technique::ForehandPush,
                (false, false) => Technique::BackhandPush,
            }
        };
        let mut ds1 = ds.clone();
        set(&mut ds1, "right_shoulder", 345.0, 470.0, 0.9);
        set(&mut ds1, "left_shoulder", 315.0, 470.0, 0.9);
        set(&mut ds1, "right_hip", 342.0, 600.0, 0.9);
        set(&mut ds1, "left_hip", 318.0, 600.0, 0.9);
        set(&mut ds1, "right_wrist", 400.0, 420.0, 0.9);
        let torso = (345.0 + 315.0 + 342.0 + 318.0) / 4.0;
        assert_eq!(classify_stroke_technique(&stroke, &ds1, 0.3), oracle((400.0, 420.0), (345.0, 470.0), torso));
        assert_eq!(classify_stroke_technique(&stroke, &ds1, 0.3), Technique::ForehandAttack);
        // wrist below the hip, on the other side of the torso
        set(&mut ds1, "right_wrist", 260.0, 640.0, 0.9);
        assert_eq!(classify_stroke_technique(&stroke, &ds1, 0.3), oracle((260.0, 640.0), (345.0, 470.0), torso));
        assert_eq!(classify_stroke_technique(&stroke, &ds1, 0.3), Technique::BackhandPush);
        let mut ds2 = ds.clone();
        for kp in &mut ds2.frames[20].players[0].keypoints {
            kp.confidence = 0.0;
        }
        assert_eq!(classify_stroke_technique(&stroke, &ds2, 0.3), Technique::Unknown);
    }

    #[test]
    fn placement_grid_on_rectangle() {
        let table = TableGeometry {
            quad: Quad([
                Point2::new(0.0, 0.0),
                Point2::new(600.0, 0.0),
                Point2::new(600.0, 90.0),
                Point2::new(0.0, 90.0),
            ]),
            net_x: 300.0,
        };
        // B-side center cell
        let c = placement_cell(&table, Point2::new(450.0, 45.0)).unwrap();
        assert_eq!((c.half, c.zone), (PlayerId::B, 4));
        // A-side end line, top
        let c = placement_cell(&table, Point2::new(10.0, 5.0)).unwrap();
        assert_eq!((c.half, c.zone), (PlayerId::A, 0));
        // B-side end line, bottom
        let c = placement_cell(&table, Point2::new(590.0, 85.0)).unwrap();
        assert_eq!((c.half, c.zone), (PlayerId::B, 2));
        assert!(placement_cell(&table, Point2::new(700.0, 45.0)).is_none());
        let center = cell_center(&table, PlayerId::B, 0);
        assert!((center.x - 550.0).abs() < 1e-9 && (center.y - 15.0).abs() < 1e-9);
    }

    #[test]
    fn translation_equivariance_on_fixture() {
        let ds = synth::fixture_rally();
        let (_, a) = detect_events(&ds, &EventParams::default()).unwrap();
        let moved = ds.translated(Point2::new(-64.0, 32.0));
        let (_, b) = detect_events(&moved, &EventParams::default()).unwrap();
        assert_eq!(a.events.len(), b.events.len());
        for (x, y) in a.events.iter().zip(&b.events) {
            assert_eq!((&x.event_id, x.start, x.end, x.hit_frame), (&y.event_id, y.start, y.end, y.hit_frame));
            assert_eq!(x.placement.map(|c| (c.half, c.zone)), y.placement.map(|c| (c.half, c.zone)));
        }
    }

    #[test]
    fn event_log_round_trips() {
        let (_, log) = detect_events(&synth::fixture_rally(), &EventParams::default()).unwrap();
        let back = EventLog::from_json(&log.to_json()).unwrap();
        assert_eq!(back, log);
    }
}
