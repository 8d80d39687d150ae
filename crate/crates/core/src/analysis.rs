//! Everything extracted from one rally, plus attribute resolution: which
//! registry attributes exist for a subject at a frame, and their values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::design_space::{DataLevel, Registry, Subject};
use crate::error::{Error, Result};
use crate::events::{cell_polygon, detect_events, Event, EventKind, EventLog, EventParams};
use crate::geom::{BBox, Point2};
use crate::pyramid::Pyramid;
use crate::tactics::{
    import_tactics, merge_facts, run_rules, ImportReport, RuleDiagnostic, RulePack, TacticContext, TacticFact,
    TacticKind, TacticPayload,
};
use crate::tracking::{BallTrack, PlayerId, TrackingDataset};

/// What a selection points at: the ball, one player, the table or the rally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Ball,
    Player(PlayerId),
    Table,
    Rally,
}

impl Target {
    pub fn subject(self) -> Subject {
        match self {
            Target::Ball => Subject::Ball,
            Target::Player(_) => Subject::Player,
            Target::Table => Subject::Table,
            Target::Rally => Subject::Rally,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Ball => f.write_str("ball"),
            Target::Player(p) => write!(f, "{p}"),
            Target::Table => f.write_str("table"),
            Target::Rally => f.write_str("rally"),
        }
    }
}

impl FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ball" | "Ball" => Ok(Target::Ball),
            "table" | "Table" => Ok(Target::Table),
            "rally" | "Rally" => Ok(Target::Rally),
            _ => s
                .parse::<PlayerId>()
                .map(Target::Player)
                .map_err(|_| Error::invalid(format!("unknown subject {s:?} (expected ball, A, B, table or rally)"))),
        }
    }
}

impl Serialize for Target {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCell {
    pub half: PlayerId,
    pub zone: u8,
    pub probability: f64,
    pub polygon: [Point2<f64>; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPath {
    pub probability: f64,
    pub points: Vec<Point2<f64>>,
}

/// Resolved value of an attribute at a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DataValue {
    Point { point: Point2<f64> },
    Path { points: Vec<Point2<f64>> },
    Scalar { value: f64, unit: String },
    Text { text: String },
    Cell { half: PlayerId, zone: u8, polygon: [Point2<f64>; 4] },
    Distribution { cells: Vec<WeightedCell> },
    Routes { routes: Vec<WeightedPath> },
    Box { bbox: BBox<f64> },
    /// One entry per keypoint; `None` below the confidence threshold.
    Posture { keypoints: Vec<Option<Point2<f64>>> },
    Polygon { points: Vec<Point2<f64>> },
    Spans { spans: Vec<(usize, usize)> },
}

/// Samples per route curve.
pub const ROUTE_SAMPLES: usize = 16;

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub params: EventParams,
    pub rules: RulePack,
    /// Contents of a tactic import file.
    pub import: Option<String>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { params: EventParams::default(), rules: RulePack::default_pack(), import: None }
    }
}

/// The extracted data of one rally at every level.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub registry: Registry,
    pub dataset: TrackingDataset<f64>,
    pub track: BallTrack<f64>,
    pub events: EventLog,
    pub facts: Vec<TacticFact>,
    pub diagnostics: Vec<RuleDiagnostic>,
    pub import_report: Option<ImportReport>,
    pub pyramid: Pyramid,
    pub keypoint_threshold: f64,
}

impl Analysis {
    pub fn build(dataset: TrackingDataset<f64>, registry: Registry, options: &AnalysisOptions) -> Result<Analysis> {
        let (track, events) = detect_events(&dataset, &options.params)?;
        Analysis::from_parts(dataset, registry, track, events, options)
    }

    /// Builds from an already detected event log.
    pub fn from_parts(
        dataset: TrackingDataset<f64>,
        registry: Registry,
        track: BallTrack<f64>,
        events: EventLog,
        options: &AnalysisOptions,
    ) -> Result<Analysis> {
        let out = run_rules(&options.rules, &TacticContext { dataset: &dataset, track: &track, events: &events })?;
        let (facts, import_report) = match &options.import {
            Some(text) => {
                let (imported, report) = import_tactics(text, &events)?;
                (merge_facts(&out.facts, &imported), Some(report))
            }
            None => (out.facts, None),
        };
        let pyramid = Pyramid::build(&dataset, &track, &events, &facts)?;
        Ok(Analysis {
            registry,
            dataset,
            track,
            events,
            facts,
            diagnostics: out.diagnostics,
            import_report,
            pyramid,
            keypoint_threshold: options.params.keypoint_threshold,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.dataset.frame_count()
    }

    pub fn turn_at(&self, frame: usize) -> Option<&Event> {
        self.events.of_kind(EventKind::Turn).find(|t| t.contains(frame))
    }

    /// The stroke whose turn contains `frame`.
    pub fn stroke_at(&self, frame: usize) -> Option<&Event> {
        let turn = self.turn_at(frame)?;
        self.events.get(turn.attributes.get("stroke")?)
    }

    fn fact(&self, kind: TacticKind, anchor: &str) -> Option<&TacticFact> {
        self.facts.iter().find(|f| f.kind == kind && f.anchor_event == anchor)
    }

    /// Whether the subject itself is present at `frame`.
    pub fn present(&self, target: Target, frame: usize) -> bool {
        let Some(f) = self.dataset.frames.get(frame) else { return false };
        match target {
            Target::Ball => self.track.center(frame).is_some(),
            Target::Player(p) => f.player(p).is_some(),
            Target::Table | Target::Rally => true,
        }
    }

    /// Screen position used to anchor labels for a subject.
    pub fn anchor_point(&self, target: Target, frame: usize) -> Option<Point2<f64>> {
        let f = self.dataset.frames.get(frame)?;
        match target {
            Target::Ball => self.track.center(frame),
            Target::Player(p) => f.player(p).map(|d| Point2::new(d.bbox.x + d.bbox.w / 2.0, d.bbox.y)),
            Target::Table => Some(quad_center(&f.table.quad.0)),
            Target::Rally => Some(Point2::new(f64::from(self.dataset.video.width) / 2.0, 40.0)),
        }
    }

    /// Ball or player positions over `[a, b]` (clamped to the clip).
    pub fn trajectory(&self, target: Target, a: usize, b: usize) -> Option<Vec<Point2<f64>>> {
        let b = b.min(self.dataset.last_frame());
        if a > b {
            return None;
        }
        let pts: Vec<Point2<f64>> = match target {
            Target::Ball => (a..=b).filter_map(|f| self.track.center(f)).collect(),
            Target::Player(p) => (a..=b)
                .filter_map(|f| self.dataset.frames[f].player(p).map(|d| d.bbox.center()))
                .collect(),
            _ => return None,
        };
        (!pts.is_empty()).then_some(pts)
    }

    /// Value of `attribute` for `target` at `frame`, or `None` when the
    /// subject is absent or the data does not exist there.
    pub fn resolve(&self, attribute: &str, target: Target, frame: usize) -> Option<DataValue> {
        if frame >= self.frame_count() {
            return None;
        }
        let kind = self.registry.attribute(attribute).ok()?;
        if kind.subject != target.subject() {
            return None;
        }
        let nontracking = kind.category == crate::design_space::DataCategory::NonTracking;
        if !nontracking && !self.present(target, frame) {
            return None;
        }
        let f = &self.dataset.frames[frame];
        let turn_start = self.turn_at(frame).map_or(frame, |t| t.start);
        let hitter = |s: &Event| -> bool { matches!(target, Target::Player(p) if s.subject.player() == Some(p)) };
        match (attribute, target) {
            ("ball_position", Target::Ball) => self.track.center(frame).map(|point| DataValue::Point { point }),
            ("ball_trajectory", Target::Ball) => self.trajectory(target, turn_start, frame).map(|points| DataValue::Path { points }),
            ("ball_speed", Target::Ball) => self.track.speed(frame).map(|value| DataValue::Scalar { value, unit: "px/s".into() }),
            ("ball_rotation_speed", Target::Ball) => {
                let hit = self.stroke_at(frame)?.hit_frame?;
                let rpm = self.dataset.frames[hit].ball.as_ref()?.rotation_rpm?;
                Some(DataValue::Scalar { value: rpm, unit: "rpm".into() })
            }
            ("ball_placement", Target::Ball) => {
                let turn = self.turn_at(frame)?;
                let cell = self
                    .events
                    .of_kind(EventKind::Bounce)
                    .filter(|b| turn.contains(b.start))
                    .find_map(|b| b.placement)?;
                Some(DataValue::Cell { half: cell.half, zone: cell.zone, polygon: cell_polygon(&f.table, cell.half, cell.zone) })
            }
            ("potential_placements", Target::Ball) => {
                let stroke = self.stroke_at(frame)?;
                match &self.fact(TacticKind::PotentialPlacements, &stroke.event_id)?.payload {
                    TacticPayload::Placements { cells } => Some(DataValue::Distribution {
                        cells: cells
                            .iter()
                            .map(|c| WeightedCell {
                                half: c.half,
                                zone: c.zone,
                                probability: c.probability,
                                polygon: cell_polygon(&f.table, c.half, c.zone),
                            })
                            .collect(),
                    }),
                    _ => None,
                }
            }
            ("potential_routes", Target::Ball) => {
                let stroke = self.stroke_at(frame)?;
                match &self.fact(TacticKind::PotentialRoutes, &stroke.event_id)?.payload {
                    TacticPayload::Routes { routes } => Some(DataValue::Routes {
                        routes: routes
                            .iter()
                            .map(|r| WeightedPath { probability: r.probability, points: r.curve.sample(ROUTE_SAMPLES) })
                            .collect(),
                    }),
                    _ => None,
                }
            }
            ("player_object", Target::Player(p)) => f.player(p).map(|d| DataValue::Box { bbox: d.bbox }),
            ("player_position", Target::Player(p)) => f.player(p).map(|d| DataValue::Point { point: d.bbox.center() }),
            ("player_trajectory", Target::Player(_)) => {
                self.trajectory(target, turn_start, frame).map(|points| DataValue::Path { points })
            }
            ("player_posture", Target::Player(p)) => {
                let d = f.player(p)?;
                let keypoints: Vec<Option<Point2<f64>>> = d
                    .keypoints
                    .iter()
                    .map(|k| (k.confidence >= self.keypoint_threshold).then_some(k.point))
                    .collect();
                keypoints.iter().any(Option::is_some).then_some(DataValue::Posture { keypoints })
            }
            ("player_name", Target::Player(p)) => {
                self.dataset.video.player_name(p).map(|n| DataValue::Text { text: n.to_string() })
            }
            ("stroke_technique", Target::Player(_)) => {
                let s = self.stroke_at(frame).filter(|s| hitter(s))?;
                s.technique().map(|t| DataValue::Text { text: t.replace('_', " ") })
            }
            ("stroke_effect" | "player_tactic" | "key_stroke", Target::Player(_)) => {
                let kind = match attribute {
                    "stroke_effect" => TacticKind::StrokeEffect,
                    "player_tactic" => TacticKind::PlayerTactic,
                    _ => TacticKind::KeyStroke,
                };
                let s = self.stroke_at(frame).filter(|s| hitter(s))?;
                self.fact(kind, &s.event_id)?.label().map(|t| DataValue::Text { text: t.to_string() })
            }
            ("table_region", Target::Table) => Some(DataValue::Polygon { points: f.table.quad.0.to_vec() }),
            ("rally_turns", Target::Rally) => {
                let spans: Vec<(usize, usize)> = self.events.of_kind(EventKind::Turn).map(|t| (t.start, t.end)).collect();
                (!spans.is_empty()).then_some(DataValue::Spans { spans })
            }
            _ => None,
        }
    }

    /// Attributes available for `target` at `frame` with level at most
    /// `filter`, ordered by level (highest first) then name.
    pub fn attributes_at(&self, target: Target, frame: usize, filter: DataLevel) -> Vec<&crate::design_space::DataAttributeKind> {
        let mut out: Vec<_> = self
            .registry
            .attributes()
            .filter(|a| a.subject == target.subject() && a.level <= filter)
            .filter(|a| self.resolve(&a.name, target, frame).is_some())
            .collect();
        out.sort_by(|a, b| b.level.cmp(&a.level).then_with(|| a.name.cmp(&b.name)));
        out
    }

    /// Default frame interval a selection refers to: from the frame to the
    /// end of its turn, else the frame alone.
    pub fn default_span(&self, frame: usize) -> (usize, usize) {
        self.turn_at(frame).map_or((frame, frame), |t| (frame, t.end))
    }
}

fn quad_center(q: &[Point2<f64>; 4]) -> Point2<f64> {
    Point2::new((q[0].x + q[1].x + q[2].x + q[3].x) / 4.0, (q[0].y + q[1].y + q[2].y + q[3].y) / 4.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn fixture() -> Analysis {
        Analysis::build(synth::fixture_rally(), Registry::builtin(), &AnalysisOptions::default()).unwrap()
    }

    fn names(v: Vec<&crate::design_space::DataAttributeKind>) -> Vec<String> {
        v.into_iter().map(|a| a.name.clone()).collect()
    }

    #[test]
    fn ball_at_hit_frame_offers_the_tactic_triple() {
        let a = fixture();
        let got = names(a.attributes_at(Target::Ball, 200, DataLevel::Tactic));
        for want in ["ball_rotation_speed", "potential_placements", "potential_routes"] {
            assert!(got.contains(&want.to_string()), "{got:?}");
        }
        assert_eq!(got[..2], ["potential_placements", "potential_routes"]);
        assert_eq!(a.resolve("ball_rotation_speed", Target::Ball, 200), Some(DataValue::Scalar { value: 7000.0, unit: "rpm".into() }));
    }

    #[test]
    fn object_filter_hides_event_attributes() {
        let a = fixture();
        let got = names(a.attributes_at(Target::Player(PlayerId::A), 200, DataLevel::Object));
        assert!(!got.contains(&"stroke_technique".to_string()));
        assert!(got.contains(&"player_posture".to_string()));
        let all = names(a.attributes_at(Target::Player(PlayerId::A), 200, DataLevel::Event));
        assert!(all.contains(&"stroke_technique".to_string()));
        for level in DataLevel::ALL {
            for attr in a.attributes_at(Target::Ball, 150, level) {
                assert!(attr.level <= level);
            }
        }
    }

    #[test]
    fn absent_ball_has_no_attributes() {
        let mut ds = synth::fixture_rally();
        for f in &mut ds.frames[..5] {
            f.ball = None;
        }
        let a = Analysis::build(ds, Registry::builtin(), &AnalysisOptions::default()).unwrap();
        assert_eq!(a.track.coverage().unwrap().0, 5);
        assert!(a.attributes_at(Target::Ball, 0, DataLevel::Tactic).is_empty());
        assert!(!a.attributes_at(Target::Ball, 5, DataLevel::Tactic).is_empty());
        // names are non-tracking and survive without detections
        assert!(a.resolve("player_name", Target::Player(PlayerId::B), 0).is_some());
    }

    #[test]
    fn trajectory_matches_track_centers() {
        let a = fixture();
        let Some(DataValue::Path { points }) = a.resolve("ball_trajectory", Target::Ball, 204) else { panic!() };
        assert_eq!(points.len(), 5);
        for (i, p) in points.iter().enumerate() {
            assert_eq!(Some(*p), a.track.center(200 + i));
        }
    }

    #[test]
    fn target_strings_round_trip() {
        for t in [Target::Ball, Target::Player(PlayerId::A), Target::Player(PlayerId::B), Target::Table, Target::Rally] {
            let s = serde_json::to_string(&t).unwrap();
            assert_eq!(serde_json::from_str::<Target>(&s).unwrap(), t);
        }
        assert!("C".parse::<Target>().is_err());
    }
}
