//! Brute-force oracles shared by the property tests and the acceptance run.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use rallyvis::analysis::Target;
use rallyvis::design_space::{NarrativeOrder, Visual};
use rallyvis::events::{detect_events, EventKind, EventParams, EventSubject, PlacementCell};
use rallyvis::recommender::{recommend, FallbackTable, MappingStats, RecommendationSource};
use rallyvis::scheduler::{build_dag, compile_schedule, CompileOptions, Phase, RenderSchedule};
use rallyvis::script::{AugmentationScript, DataSelection, ScriptMapping, Style};
use rallyvis::synth::RallyPlan;
use rallyvis::tactics::infer_potential_placements;
use rallyvis::tracking::{PlayerId, VideoMeta};
use rallyvis::events::Event;

pub fn video(frame_count: usize) -> VideoMeta {
    VideoMeta { width: 1920, height: 1080, fps: 50.0, frame_count, player_names: None }
}

pub fn mapping(id: &str, visual: Visual, anchor: usize, span: (usize, usize), hold: Option<usize>) -> ScriptMapping {
    ScriptMapping {
        mapping_id: id.into(),
        selection: DataSelection {
            selection_id: format!("s-{id}"),
            attribute: "ball_position".into(),
            subject: Target::Ball,
            anchor_frame: anchor,
            source_span: span,
        },
        visual,
        style: Style::default(),
        hold_frames: hold,
        pass: 1,
    }
}

const MARKS: [Visual; 9] = [
    Visual::Label,
    Visual::Dot,
    Visual::Polyline,
    Visual::Arrow,
    Visual::Region,
    Visual::HeatmapRegion,
    Visual::Spotlight,
    Visual::Skeleton,
    Visual::BoundingBox,
];

/// A FlashForward or FlashBack script with 1 to 8 mappings, some sharing
/// anchors, a few of them video effects.
pub fn random_ff_fb_script<R: Rng>(rng: &mut R) -> (AugmentationScript, VideoMeta) {
    let n = rng.gen_range(40..300);
    let order = if rng.gen_bool(0.5) { NarrativeOrder::FlashForward } else { NarrativeOrder::FlashBack };
    let t0 = rng.gen_range(0..n / 4);
    let t1 = rng.gen_range(3 * n / 4..n);
    let mut script = AugmentationScript::new("random", (t0, t1), order);
    let mut anchors: Vec<usize> = Vec::new();
    for k in 0..rng.gen_range(1..=8) {
        let anchor = match anchors.choose(rng) {
            Some(&a) if rng.gen_bool(0.3) => a,
            _ => rng.gen_range(t0..=t1),
        };
        anchors.push(anchor);
        let span = (rng.gen_range(t0..=anchor), rng.gen_range(anchor..=t1));
        let visual = if rng.gen_bool(0.15) {
            *[Visual::Pause, Visual::SlowMotion, Visual::Repeat].choose(rng).unwrap()
        } else {
            *MARKS.choose(rng).unwrap()
        };
        let hold = if rng.gen_bool(0.3) { None } else { Some(rng.gen_range(0..60)) };
        script.mappings.push(mapping(&format!("m{}", k + 1), visual, anchor, span, hold));
    }
    (script, video(n))
}

/// Creation runs per mapping: each maximal stretch of consecutive output
/// frames in which the mapping is in its Creation phase.
fn creation_runs(schedule: &RenderSchedule) -> BTreeMap<&str, Vec<usize>> {
    let mut runs: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut previous: Vec<&str> = Vec::new();
    for f in &schedule.output_frames {
        let now: Vec<&str> =
            f.items.iter().filter(|i| i.phase == Phase::Creation).map(|i| i.mapping_id.as_str()).collect();
        for id in &now {
            if !previous.contains(id) {
                runs.entry(id).or_default().push(f.index);
            }
        }
        previous = now;
    }
    runs
}

/// Virtual-edge and single-creation violations of one compiled script.
pub fn schedule_violations(script: &AugmentationScript, video: &VideoMeta) -> Vec<String> {
    let dag = match build_dag(script) {
        Ok(d) => d,
        Err(e) => return vec![format!("dag: {e}")],
    };
    let schedule = match compile_schedule(script, video, &CompileOptions::default()) {
        Ok(s) => s,
        Err(e) => return vec![format!("compile: {e}")],
    };
    let runs = creation_runs(&schedule);
    let mut out = Vec::new();
    let mapping_of: BTreeMap<&str, &str> =
        dag.nodes.iter().map(|n| (n.node_id.as_str(), n.mapping_id.as_str())).collect();
    for (from, to) in dag.virtual_edges() {
        let (a, b) = (mapping_of[from], mapping_of[to]);
        match (runs.get(a).and_then(|r| r.first()), runs.get(b).and_then(|r| r.first())) {
            (Some(x), Some(y)) if x < y => {}
            other => out.push(format!("virtual edge {a} -> {b}: creations at {other:?}")),
        }
    }
    for (id, r) in &runs {
        if r.len() > 1 {
            out.push(format!("{id} has {} creation phases", r.len()));
        }
    }
    for m in script.mappings.iter().filter(|m| m.is_mark()) {
        if !runs.contains_key(m.mapping_id.as_str()) {
            out.push(format!("{} never created", m.mapping_id));
        }
    }
    out
}

pub const ORACLE_ATTRIBUTES: [&str; 4] = ["ball_speed", "ball_trajectory", "player_posture", "zz_unmapped"];
pub const ORACLE_VISUALS: [&str; 5] = ["Arrow", "Dot", "Label", "Polyline", "Spotlight"];
pub const ORACLE_ORDERS: [NarrativeOrder; 3] =
    [NarrativeOrder::Linear, NarrativeOrder::FlashForward, NarrativeOrder::ZigZag];

/// Sparse random count table; many zeros and small counts to force ties.
pub fn random_counts<R: Rng>(rng: &mut R) -> Vec<(String, String, NarrativeOrder, u64)> {
    let mut rows = Vec::new();
    for d in &ORACLE_ATTRIBUTES[..3] {
        for v in ORACLE_VISUALS {
            for o in ORACLE_ORDERS {
                if rng.gen_bool(0.6) {
                    rows.push((d.to_string(), v.to_string(), o, rng.gen_range(0..4)));
                }
            }
        }
    }
    rows.shuffle(rng);
    rows
}

pub fn stats_from(rows: &[(String, String, NarrativeOrder, u64)], scale: u64) -> MappingStats {
    let mut stats = MappingStats::default();
    for (d, v, o, c) in rows {
        *stats.counts.entry((d.clone(), v.clone(), *o)).or_default() += c * scale;
    }
    stats
}

/// Exhaustive argmax over every visual name; ties resolve to the smallest name.
fn argmax(rows: &[(String, String, NarrativeOrder, u64)], data: &str, order: NarrativeOrder) -> Option<String> {
    let mut totals: Vec<(String, u64)> = Vec::new();
    for (d, v, o, c) in rows {
        if d == data && *o == order {
            match totals.iter_mut().find(|(name, _)| name == v) {
                Some(t) => t.1 += c,
                None => totals.push((v.clone(), *c)),
            }
        }
    }
    let max = totals.iter().map(|t| t.1).max().filter(|&m| m > 0)?;
    totals.into_iter().filter(|t| t.1 == max).map(|t| t.0).min()
}

/// Mismatches between `recommend` and the oracle for one table, including
/// probability sums per order and invariance under scaling the counts.
pub fn recommender_violations(rows: &[(String, String, NarrativeOrder, u64)], scale: u64) -> Vec<String> {
    let mut out = Vec::new();
    let stats = stats_from(rows, 1);
    let scaled = stats_from(rows, scale);
    let mut fallback = FallbackTable::builtin();
    fallback.entries.insert("zz_unmapped".into(), "Label".into());
    for d in ORACLE_ATTRIBUTES {
        fallback.entries.entry(d.to_string()).or_insert_with(|| "Dot".into());
    }
    for o in ORACLE_ORDERS {
        if stats.order_mappings(o) > 0 {
            let sum: f64 = ORACLE_ATTRIBUTES
                .iter()
                .flat_map(|d| ORACLE_VISUALS.iter().map(move |v| (d, v)))
                .map(|(d, v)| stats.conditional_probability(d, v, o))
                .sum();
            if (sum - 1.0).abs() > 1e-12 {
                out.push(format!("{o}: probabilities sum to {sum}"));
            }
        }
        for d in ORACLE_ATTRIBUTES {
            let got = recommend(&stats, d, o, &fallback).unwrap();
            let again = recommend(&scaled, d, o, &fallback).unwrap();
            match argmax(rows, d, o) {
                Some(v) if got.visual == v && got.source == RecommendationSource::Corpus => {}
                None if got.source == RecommendationSource::Fallback && Some(got.visual.as_str()) == fallback.get(d) => {}
                expected => out.push(format!("{d}/{o}: got {} ({:?}), oracle {expected:?}", got.visual, got.source)),
            }
            if again.visual != got.visual {
                out.push(format!("{d}/{o}: x{scale} changes {} to {}", got.visual, again.visual));
            }
        }
    }
    out
}

/// Zone of a point on an axis-aligned table, straight from the grid
/// definition: rows count from each end line, columns from the top edge.
fn rect_cell(left: f64, right: f64, top: f64, bottom: f64, net: f64, x: f64, y: f64) -> Option<(PlayerId, u8)> {
    if !(left..=right).contains(&x) || !(top..=bottom).contains(&y) {
        return None;
    }
    let third = |t: f64| ((t * 3.0).floor() as i64).clamp(0, 2) as u8;
    let lateral = third((y - top) / (bottom - top));
    let (half, depth) = if x < net {
        (PlayerId::A, third((x - left) / (net - left)))
    } else {
        (PlayerId::B, third((right - x) / (right - net)))
    };
    Some((half, depth * 3 + lateral))
}

/// Compares detection on a random rally against its analytic ground truth
/// and checks that turns tile the rally.
pub fn event_violations(seed: u64) -> Vec<String> {
    let plan = RallyPlan::random(seed);
    let rally = plan.build();
    let mut out = Vec::new();
    let (_, log) = match detect_events(&rally.dataset, &EventParams::default()) {
        Ok(x) => x,
        Err(e) => return vec![format!("seed {seed}: {e}")],
    };
    // the final ball passes the receiver without a hit: that shows up as
    // one trailing stroke without a hit frame
    let (last_hit, last_hitter) = *rally.hits.last().unwrap();
    let strokes: Vec<(Option<usize>, EventSubject)> = log
        .of_kind(EventKind::Stroke)
        .filter(|s| !(s.hit_frame.is_none() && s.start > last_hit && s.subject == last_hitter.opponent().into()))
        .map(|s| (s.hit_frame, s.subject))
        .collect();
    let expected: Vec<(Option<usize>, EventSubject)> =
        rally.hits.iter().map(|&(h, p)| (Some(h), EventSubject::from(p))).collect();
    if strokes != expected {
        out.push(format!("seed {seed}: strokes {strokes:?}, expected {expected:?}"));
    }

    let [tl, _, br, _] = plan.table.quad.0;
    let bounces: Vec<(usize, PlayerId, u8)> = log
        .of_kind(EventKind::Bounce)
        .filter_map(|b| b.placement.map(|c: PlacementCell| (b.start, c.half, c.zone)))
        .collect();
    let expected: Vec<(usize, PlayerId, u8)> = rally
        .bounces
        .iter()
        .filter_map(|&(f, p)| {
            rect_cell(tl.x, br.x, tl.y, br.y, plan.table.net_x, p.x, p.y).map(|(h, z)| (f, h, z))
        })
        .collect();
    if bounces != expected {
        out.push(format!("seed {seed}: bounces {bounces:?}, expected {expected:?}"));
    }

    let turns: Vec<&Event> = log.of_kind(EventKind::Turn).collect();
    let last = rally.dataset.last_frame();
    match (turns.first(), turns.last()) {
        (Some(first), Some(end)) => {
            if Some(first.start) != rally.hits.first().map(|h| h.0) || end.end != last {
                out.push(format!("seed {seed}: turns cover [{}, {}]", first.start, end.end));
            }
            for w in turns.windows(2) {
                if w[1].start != w[0].end + 1 {
                    out.push(format!("seed {seed}: gap or overlap between {} and {}", w[0].event_id, w[1].event_id));
                }
            }
        }
        _ => out.push(format!("seed {seed}: no turns")),
    }
    out
}

/// One random end-line reception: hitter, received cell on the end-line row
/// of the hitter's half and an optional positive prior.
pub fn end_line_violations<R: Rng>(rng: &mut R) -> Vec<String> {
    let hitter = if rng.gen_bool(0.5) { PlayerId::A } else { PlayerId::B };
    let zone = rng.gen_range(0..3u8);
    let prior: Option<Vec<f64>> = rng.gen_bool(0.7).then(|| (0..9).map(|_| rng.gen_range(0.001..10.0)).collect());
    let mut stroke = Event::new(EventKind::Stroke, hitter.into(), 10, 20);
    stroke.hit_frame = Some(15);
    let reception = PlacementCell { half: hitter, zone, point: rallyvis::Point::new(0.0, 0.0) };
    let cells = match infer_potential_placements(&stroke, Some(reception), prior.as_deref()) {
        Ok(c) => c,
        Err(e) => return vec![e.to_string()],
    };
    let mut out = Vec::new();
    let support: Vec<(PlayerId, u8)> = cells.iter().map(|c| (c.half, c.zone)).collect();
    let opponent = hitter.opponent();
    if support != vec![(opponent, 0), (opponent, 1), (opponent, 2)] {
        out.push(format!("{hitter} from zone {zone}: support {support:?}"));
    }
    let sum: f64 = cells.iter().map(|c| c.probability).sum();
    if (sum - 1.0).abs() > 1e-9 || cells.iter().any(|c| c.probability <= 0.0) {
        out.push(format!("{hitter} from zone {zone}: probabilities sum to {sum}"));
    }
    out
}
