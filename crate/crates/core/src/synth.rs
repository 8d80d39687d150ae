//! Synthetic rally generator.
//!
//! Produces tracking datasets with analytically known hits and bounces: the
//! ball moves at constant horizontal speed between hitting points and follows
//! parabolic arcs vertically, bouncing once on the receiver's half. Used for
//! the bundled fixture and for randomized checks of the event detectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::Target;
use crate::design_space::{NarrativeOrder, Visual, SCHEMA_VERSION};
use crate::events::Technique;
use crate::geom::{BBox, Point2, Quad};
use crate::script::{AugmentationScript, DataSelection, ScriptMapping, Style, ZigZagSpec};
use crate::tracking::{
    BallDetection, FrameDetections, Keypoint, PlayerDetection, PlayerId, TableGeometry, TrackingDataset, TrackingFile,
    VideoMeta, KEYPOINT_NAMES,
};

/// Vertical lift of the arc leaving a racket, in px.
const APEX_LIFT: f64 = 120.0;
/// Vertical lift of the arc after a bounce, in px.
const REBOUND_LIFT: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RallyPlan {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub frame_count: usize,
    pub table: TableGeometry<f64>,
    /// Fixed racket-hand positions of players A and B.
    pub wrist: [Point2<f64>; 2],
    /// Hit frames; player A serves and players alternate.
    pub hits: Vec<usize>,
    /// Bounce frame after each hit (one per hit, the last for the final ball).
    pub bounce_frames: Vec<usize>,
    /// Screen y of each bounce.
    pub bounce_y: Vec<f64>,
    /// Horizontal speed of the last ball, px/frame.
    pub final_speed: f64,
    /// Upward speed after the last bounce, px/frame.
    pub final_rise: f64,
    pub occluded: Vec<usize>,
    /// Posture of the hitter at each hit.
    pub techniques: Vec<Technique>,
    pub rotation_rpm: Vec<Option<f64>>,
    pub player_names: Option<[String; 2]>,
}

/// A generated rally plus its ground truth.
#[derive(Debug, Clone)]
pub struct SynthRally {
    pub dataset: TrackingDataset<f64>,
    /// `(hit frame, hitter)` in order.
    pub hits: Vec<(usize, PlayerId)>,
    /// `(bounce frame, contact point)` in order.
    pub bounces: Vec<(usize, Point2<f64>)>,
}

pub fn hitter(index: usize) -> PlayerId {
    if index.is_multiple_of(2) {
        PlayerId::A
    } else {
        PlayerId::B
    }
}

impl RallyPlan {
    /// The 6-second, 50 fps, 1920x1080 rally bundled as the fixture.
    pub fn fixture() -> Self {
        use Technique::*;
        RallyPlan {
            width: 1920,
            height: 1080,
            fps: 50.0,
            frame_count: 300,
            table: TableGeometry {
                quad: Quad([
                    Point2::new(560.0, 600.0),
                    Point2::new(1360.0, 600.0),
                    Point2::new(1400.0, 700.0),
                    Point2::new(520.0, 700.0),
                ]),
                net_x: 960.0,
            },
            wrist: [Point2::new(400.0, 530.0), Point2::new(1520.0, 530.0)],
            hits: vec![20, 65, 110, 155, 200, 245],
            bounce_frames: vec![53, 95, 146, 191, 237, 272],
            bounce_y: vec![640.0, 670.0, 620.0, 660.0, 650.0, 660.0],
            final_speed: 31.0,
            final_rise: 25.0,
            occluded: vec![40, 41, 130, 178],
            techniques: vec![ForehandPush, BackhandPush, ForehandPush, BackhandPush, ForehandPush, ForehandAttack],
            rotation_rpm: vec![Some(3800.0), Some(4500.0), Some(5200.0), Some(6100.0), Some(7000.0), Some(5600.0)],
            player_names: Some(["Player Red".into(), "Player Black".into()]),
        }
    }

    /// A random rally on a rectangular table, reproducible from `seed`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (left, right, top, bottom) = (500.0, 1420.0, 600.0, 720.0);
        let net_x = (left + right) / 2.0;
        let wrist = [
            Point2::new(rng.gen_range(360.0..420.0), rng.gen_range(500.0..540.0)),
            Point2::new(rng.gen_range(1500.0..1560.0), rng.gen_range(500.0..540.0)),
        ];
        let n_hits = rng.gen_range(2..=7);
        let frame_count = 400;
        let mut hits = vec![rng.gen_range(12..24)];
        for _ in 1..n_hits {
            let prev = *hits.last().unwrap();
            hits.push(prev + rng.gen_range(36..56));
        }
        let mut bounce_frames = Vec::new();
        let mut bounce_y = Vec::new();
        let cell_w = (net_x - left) / 3.0;
        let cell_h = (bottom - top) / 3.0;
        let final_speed = rng.gen_range(24.0..34.0);
        for k in 0..n_hits {
            let from = hit_point(wrist, hitter(k));
            let receiver_left = hitter(k) == PlayerId::B;
            // aim at the interior of a random cell on the receiver's half
            let depth = rng.gen_range(0..3) as f64;
            let lateral = rng.gen_range(0..3) as f64;
            let frac_x = (depth + rng.gen_range(0.25..0.75)) * cell_w;
            let target_x = if receiver_left { left + frac_x } else { right - frac_x };
            let b = if k + 1 < n_hits {
                let to = hit_point(wrist, hitter(k + 1));
                let dur = (hits[k + 1] - hits[k]) as f64;
                let s = (target_x - from.x) / (to.x - from.x);
                hits[k] + ((s * dur).round() as usize).clamp(6, (dur as usize) - 6)
            } else {
                hits[k] + ((target_x - from.x).abs() / final_speed).round().max(6.0) as usize
            };
            bounce_frames.push(b);
            bounce_y.push(top + (lateral + rng.gen_range(0.25..0.75)) * cell_h);
        }
        let mut occluded = Vec::new();
        for k in 0..n_hits.saturating_sub(1) {
            // one mid-flight gap between the hit and the bounce
            let (h, b) = (hits[k], bounce_frames[k]);
            if b > h + 10 && rng.gen_bool(0.5) {
                occluded.push(rng.gen_range(h + 4..b - 4));
            }
        }
        let techniques = (0..n_hits)
            .map(|_| match rng.gen_range(0..4) {
                0 => Technique::ForehandAttack,
                1 => Technique::BackhandAttack,
                2 => Technique::ForehandPush,
                _ => Technique::BackhandPush,
            })
            .collect();
        RallyPlan {
            width: 1920,
            height: 1080,
            fps: 50.0,
            frame_count,
            table: TableGeometry {
                quad: Quad([
                    Point2::new(left, top),
                    Point2::new(right, top),
                    Point2::new(right, bottom),
                    Point2::new(left, bottom),
                ]),
                net_x,
            },
            wrist,
            hits,
            bounce_frames,
            bounce_y,
            final_speed,
            final_rise: rng.gen_range(18.0..30.0),
            occluded,
            techniques,
            rotation_rpm: vec![None; n_hits],
            player_names: None,
        }
    }

    fn ball_at(&self, t: usize) -> Option<Point2<f64>> {
        let first = *self.hits.first()?;
        let y_hit = |k: usize| hit_point(self.wrist, hitter(k)).y;
        if t <= first {
            // serve toss drifting into the racket
            let h = hit_point(self.wrist, PlayerId::A);
            let start = Point2::new(h.x + 50.0, h.y - 140.0);
            return Some(start.lerp(h, t as f64 / first as f64));
        }
        let k = self.hits.iter().rposition(|&h| h <= t)?;
        let from = hit_point(self.wrist, hitter(k));
        let (h, b, yb) = (self.hits[k], self.bounce_frames[k], self.bounce_y[k]);
        let tf = t as f64;
        if k + 1 < self.hits.len() {
            let to = hit_point(self.wrist, hitter(k + 1));
            let h2 = self.hits[k + 1];
            let x = from.x + (to.x - from.x) * (tf - h as f64) / (h2 - h) as f64;
            let y = if t <= b {
                arc(y_hit(k), yb, APEX_LIFT, (tf - h as f64) / (b - h) as f64)
            } else {
                arc(yb, y_hit(k + 1), REBOUND_LIFT, (tf - b as f64) / (h2 - b) as f64)
            };
            Some(Point2::new(x, y))
        } else {
            let dir = if hitter(k) == PlayerId::A { 1.0 } else { -1.0 };
            let x = from.x + dir * self.final_speed * (tf - h as f64);
            let y = if t <= b {
                arc(y_hit(k), yb, APEX_LIFT, (tf - h as f64) / (b - h) as f64)
            } else {
                yb - self.final_rise * (tf - b as f64)
            };
            let p = Point2::new(x, y);
            let inside = x >= 0.0 && x <= f64::from(self.width) && y >= 0.0 && y <= f64::from(self.height);
            inside.then_some(p)
        }
    }

    fn technique_at(&self, player: PlayerId, t: usize) -> Technique {
        self.hits
            .iter()
            .enumerate()
            .filter(|(k, _)| hitter(*k) == player)
            .min_by_key(|(_, &h)| h.abs_diff(t))
            .map(|(k, _)| self.techniques[k])
            .unwrap_or(Technique::ForehandPush)
    }

    pub fn build(&self) -> SynthRally {
        let mut frames = Vec::with_capacity(self.frame_count);
        for t in 0..self.frame_count {
            let ball = if self.occluded.contains(&t) {
                None
            } else {
                self.ball_at(t).map(|c| BallDetection {
                    center: c,
                    bbox: BBox::new(c.x - 6.0, c.y - 6.0, 12.0, 12.0),
                    rotation_rpm: self.hits.iter().position(|&h| h == t).and_then(|k| self.rotation_rpm[k]),
                })
            };
            let players = PlayerId::BOTH
                .iter()
                .map(|&id| posture(id, self.wrist[id as usize], self.technique_at(id, t)))
                .collect();
            frames.push(FrameDetections {
                frame_index: t,
                timestamp: t as f64 / self.fps,
                ball,
                players,
                table: self.table.clone(),
            });
        }
        let video = VideoMeta {
            width: self.width,
            height: self.height,
            fps: self.fps,
            frame_count: self.frame_count,
            player_names: self.player_names.clone(),
        };
        let dataset = TrackingDataset::new(video, frames).expect("synthetic rally is valid");
        let hits = self.hits.iter().enumerate().map(|(k, &h)| (h, hitter(k))).collect();
        let bounces = self
            .bounce_frames
            .iter()
            .filter_map(|&b| self.ball_at(b).map(|p| (b, p)))
            .collect();
        SynthRally { dataset, hits, bounces }
    }

    pub fn to_file(&self) -> TrackingFile<f64> {
        let ds = self.build().dataset;
        TrackingFile { schema_version: SCHEMA_VERSION, video: ds.video, frames: ds.frames }
    }
}

/// Where the ball meets the racket of `player`.
pub fn hit_point(wrist: [Point2<f64>; 2], player: PlayerId) -> Point2<f64> {
    let w = wrist[player as usize];
    match player {
        PlayerId::A => Point2::new(w.x + 20.0, w.y - 10.0),
        PlayerId::B => Point2::new(w.x - 20.0, w.y - 10.0),
    }
}

/// Parabolic interpolation from `y0` to `y1` with an upward lift (screen y
/// decreases) of `lift` px at the midpoint.
fn arc(y0: f64, y1: f64, lift: f64, s: f64) -> f64 {
    y0 + (y1 - y0) * s - 4.0 * lift * s * (1.0 - s)
}

/// Standing posture whose right wrist sits at `wrist`.
fn posture(id: PlayerId, wrist: Point2<f64>, technique: Technique) -> PlayerDetection<f64> {
    // players stand behind their end of the table, wrist towards the net
    let toward_net = if id == PlayerId::A { 1.0 } else { -1.0 };
    let torso_x = wrist.x - toward_net * 70.0;
    let attack = matches!(technique, Technique::ForehandAttack | Technique::BackhandAttack);
    let forehand = matches!(technique, Technique::ForehandAttack | Technique::ForehandPush);
    let shoulder_y = if attack { wrist.y + 40.0 } else { wrist.y - 60.0 };
    let hip_y = shoulder_y + 120.0;
    // right shoulder on the wrist side for forehands, turned away for backhands
    let side = if forehand { toward_net } else { -toward_net };
    let r_sh = Point2::new(torso_x + side * 15.0, shoulder_y);
    let l_sh = Point2::new(torso_x - side * 15.0, shoulder_y);
    let r_hip = Point2::new(torso_x + side * 12.0, hip_y);
    let l_hip = Point2::new(torso_x - side * 12.0, hip_y);
    let head = Point2::new(torso_x, shoulder_y - 50.0);
    let pts: [Point2<f64>; 17] = [
        head,
        head + Point2::new(-6.0, -6.0),
        head + Point2::new(6.0, -6.0),
        head + Point2::new(-12.0, 0.0),
        head + Point2::new(12.0, 0.0),
        l_sh,
        r_sh,
        l_sh.midpoint(Point2::new(torso_x - side * 30.0, shoulder_y + 60.0)),
        r_sh.midpoint(wrist),
        Point2::new(torso_x - side * 30.0, shoulder_y + 60.0),
        wrist,
        l_hip,
        r_hip,
        l_hip + Point2::new(0.0, 90.0),
        r_hip + Point2::new(0.0, 90.0),
        l_hip + Point2::new(0.0, 180.0),
        r_hip + Point2::new(0.0, 180.0),
    ];
    debug_assert_eq!(pts.len(), KEYPOINT_NAMES.len());
    let keypoints = pts.map(|p| Keypoint { point: p, confidence: 0.9 });
    let (min_x, max_x) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.x), b.max(p.x)));
    let (min_y, max_y) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.y), b.max(p.y)));
    PlayerDetection {
        id,
        bbox: BBox::new(min_x - 10.0, min_y - 10.0, max_x - min_x + 20.0, max_y - min_y + 20.0),
        keypoints,
    }
}

/// The bundled 300-frame fixture rally.
pub fn fixture_rally() -> TrackingDataset<f64> {
    RallyPlan::fixture().build().dataset
}

/// File stems of the bundled scripts, in [`fixture_scripts`] order.
pub const FIXTURE_SCRIPTS: [&str; 3] = ["linear", "flash_forward", "zigzag"];

fn fixture_mapping(id: &str, attribute: &str, subject: Target, anchor: usize, span: (usize, usize), visual: Visual) -> ScriptMapping {
    ScriptMapping {
        mapping_id: id.into(),
        selection: DataSelection {
            selection_id: format!("s-{id}"),
            attribute: attribute.into(),
            subject,
            anchor_frame: anchor,
            source_span: span,
        },
        visual,
        style: Style::default(),
        hold_frames: None,
        pass: 1,
    }
}

/// Linear, FlashForward and ZigZag scripts over [`fixture_rally`]. The ball
/// at the fifth hit carries rotation, placement and route data; the last
/// turn contributes the ball trajectory.
pub fn fixture_scripts() -> Vec<AugmentationScript> {
    let insight = |hold: Option<usize>| {
        let mut ms = vec![
            fixture_mapping("m1", "ball_rotation_speed", Target::Ball, 200, (200, 244), Visual::Label),
            fixture_mapping("m2", "potential_placements", Target::Ball, 200, (200, 244), Visual::HeatmapRegion),
            fixture_mapping("m3", "potential_routes", Target::Ball, 200, (200, 244), Visual::Polyline),
            fixture_mapping("m4", "ball_trajectory", Target::Ball, 245, (245, 299), Visual::Polyline),
        ];
        for m in &mut ms {
            m.hold_frames = hold;
        }
        ms
    };

    let mut linear = AugmentationScript::new("linear", (0, 299), NarrativeOrder::Linear);
    linear.mappings = insight(None);

    let mut ff = AugmentationScript::new("flash_forward", (100, 299), NarrativeOrder::FlashForward);
    ff.mappings = insight(Some(25));

    let mut zz = AugmentationScript::new("zigzag", (100, 299), NarrativeOrder::ZigZag);
    zz.zigzag = Some(ZigZagSpec { anchor: 210, rewind_frames: 30 });
    let mut skeleton = fixture_mapping("m2", "player_posture", Target::Player(PlayerId::A), 200, (200, 244), Visual::Skeleton);
    skeleton.pass = 2;
    let mut path = fixture_mapping("m3", "ball_trajectory", Target::Ball, 200, (200, 244), Visual::Polyline);
    path.pass = 2;
    zz.mappings = vec![fixture_mapping("m1", "ball_position", Target::Ball, 200, (200, 244), Visual::Dot), skeleton, path];

    vec![linear, ff, zz]
}
