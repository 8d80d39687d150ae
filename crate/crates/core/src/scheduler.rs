//! Compiles a script into a double-track render schedule: the video track
//! (play, hold, reverse) and, per output frame, the active data items with
//! their animation phase.

use std::cmp::Reverse as Rev;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::design_space::{NarrativeOrder, Visual, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::hash::sha256_hex;
use crate::script::AugmentationScript;
use crate::tracking::VideoMeta;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagEdge {
    pub to: String,
    #[serde(rename = "virtual")]
    pub is_virtual: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleNode {
    pub node_id: String,
    pub mapping_id: String,
    pub source_frame: usize,
    pub edges: Vec<DagEdge>,
    /// Presented ahead of (or after) its own frame and not shown again there.
    pub presented_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleDag {
    pub order: NarrativeOrder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<usize>,
    pub nodes: Vec<ScheduleNode>,
}

impl ScheduleDag {
    /// Kahn's algorithm; among ready nodes the earliest source frame goes
    /// first, then script order.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let index: BTreeMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.node_id.as_str(), i)).collect();
        let mut indegree = vec![0usize; self.nodes.len()];
        for n in &self.nodes {
            for e in &n.edges {
                indegree[*index.get(e.to.as_str()).ok_or_else(|| Error::invalid(format!("edge to unknown node {}", e.to)))?] += 1;
            }
        }
        let mut ready: BinaryHeap<Rev<(usize, usize)>> = indegree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| Rev((self.nodes[i].source_frame, i)))
            .collect();
        let mut out = Vec::with_capacity(self.nodes.len());
        while let Some(Rev((_, i))) = ready.pop() {
            out.push(i);
            for e in &self.nodes[i].edges {
                let j = index[e.to.as_str()];
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push(Rev((self.nodes[j].source_frame, j)));
                }
            }
        }
        if out.len() != self.nodes.len() {
            return Err(Error::Cycle);
        }
        Ok(out)
    }

    pub fn virtual_edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.nodes
            .iter()
            .flat_map(|n| n.edges.iter().filter(|e| e.is_virtual).map(move |e| (n.node_id.as_str(), e.to.as_str())))
    }
}

/// Frame the order pivots on, if any.
fn order_anchor(script: &AugmentationScript) -> Option<usize> {
    let frames = script.mappings.iter().filter(|m| m.is_mark()).map(|m| m.selection.anchor_frame);
    match script.order {
        NarrativeOrder::FlashForward => frames.min(),
        NarrativeOrder::FlashBack => frames.max(),
        NarrativeOrder::TimeFork => script.timefork.as_ref().and_then(|t| t.anchor).or_else(|| frames.min()),
        NarrativeOrder::ZigZag => script.zigzag.map(|z| z.anchor),
        NarrativeOrder::Linear | NarrativeOrder::Grouped => None,
    }
}

/// One node per graphical mapping. Chronological edges join consecutive
/// source-frame groups; under FlashForward and FlashBack the anchor group is
/// left out of that chain and instead gets a virtual edge to every other
/// node. Under TimeFork every hypothetical node precedes every actual one.
pub fn build_dag(script: &AugmentationScript) -> Result<ScheduleDag> {
    if !script.order.is_schedulable() {
        return Err(Error::UnsupportedOrder(script.order));
    }
    let anchor = order_anchor(script);
    let marks: Vec<_> = script.mappings.iter().filter(|m| m.is_mark()).collect();
    let flashing = matches!(script.order, NarrativeOrder::FlashForward | NarrativeOrder::FlashBack);
    let mut nodes: Vec<ScheduleNode> = marks
        .iter()
        .map(|m| ScheduleNode {
            node_id: m.mapping_id.clone(),
            mapping_id: m.mapping_id.clone(),
            source_frame: m.selection.anchor_frame,
            edges: Vec::new(),
            presented_flag: flashing && Some(m.selection.anchor_frame) != anchor,
        })
        .collect();
    let edge = |to: &ScheduleNode, is_virtual| DagEdge { to: to.node_id.clone(), is_virtual };
    if script.order == NarrativeOrder::TimeFork {
        let tf = script.timefork.as_ref().ok_or_else(|| Error::Script("TimeFork scripts need a timefork section".into()))?;
        for h in &tf.hypothetical {
            let Some(i) = nodes.iter().position(|n| &n.node_id == h) else { continue };
            for a in &tf.actual {
                if let Some(j) = nodes.iter().position(|n| &n.node_id == a) {
                    let e = edge(&nodes[j], false);
                    nodes[i].edges.push(e);
                }
            }
        }
    } else {
        let chained: Vec<usize> = (0..nodes.len())
            .filter(|&i| !(flashing && Some(nodes[i].source_frame) == anchor))
            .collect();
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in &chained {
            groups.entry(nodes[i].source_frame).or_default().push(i);
        }
        let groups: Vec<Vec<usize>> = groups.into_values().collect();
        for w in groups.windows(2) {
            for &i in &w[0] {
                for &j in &w[1] {
                    let e = edge(&nodes[j], false);
                    nodes[i].edges.push(e);
                }
            }
        }
        if flashing {
            let heads: Vec<usize> = (0..nodes.len()).filter(|&i| Some(nodes[i].source_frame) == anchor).collect();
            for &i in &heads {
                for &j in &chained {
                    let e = edge(&nodes[j], true);
                    nodes[i].edges.push(e);
                }
            }
        }
    }
    let dag = ScheduleDag { order: script.order, anchor, nodes };
    dag.topo_order()?;
    Ok(dag)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameKind {
    Play,
    Hold,
    Reverse,
}

/// Why a non-play frame exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    /// The video waits while mappings of the narrative order are revealed.
    Reveal,
    Pause,
    SlowMotion,
    Repeat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Creation,
    Sustain,
    Destruction,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveItem {
    pub mapping_id: String,
    pub phase: Phase,
    /// Position inside a Creation or Destruction ramp of `steps` frames.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub step: u32,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub steps: u32,
}

impl ActiveItem {
    /// Opacity factor of the ramp: rises through Creation, falls through Destruction.
    pub fn ramp_factor(&self) -> f64 {
        let (k, n) = (f64::from(self.step), f64::from(self.steps));
        match self.phase {
            Phase::Sustain => 1.0,
            Phase::Creation => (k + 1.0) / (n + 1.0),
            Phase::Destruction => (n - k) / (n + 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFrame {
    pub index: usize,
    pub kind: FrameKind,
    pub source_frame: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<Effect>,
    pub items: Vec<ActiveItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSchedule {
    pub schema_version: u32,
    pub script_id: String,
    pub order: NarrativeOrder,
    pub fps: f64,
    pub clip: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<usize>,
    pub total_frames: usize,
    pub output_frames: Vec<OutputFrame>,
}

impl RenderSchedule {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schedule serialization");
        s.push('\n');
        s
    }

    /// sha-256 of the compact JSON form.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("schedule serialization").as_bytes())
    }

    pub fn count(&self, kind: FrameKind) -> usize {
        self.output_frames.iter().filter(|f| f.kind == kind).count()
    }

    /// Output index of each mapping's first Creation frame.
    pub fn creation_index(&self, mapping_id: &str) -> Option<usize> {
        self.output_frames
            .iter()
            .position(|f| f.items.iter().any(|i| i.mapping_id == mapping_id && i.phase == Phase::Creation))
    }

    fn renumber(&mut self) {
        for (i, f) in self.output_frames.iter_mut().enumerate() {
            f.index = i;
        }
        self.total_frames = self.output_frames.len();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompileOptions {
    /// Hold length for mappings without their own; two seconds when unset.
    #[serde(default)]
    pub default_hold_frames: Option<usize>,
    #[serde(default = "default_ramp")]
    pub ramp_frames: usize,
}

fn default_ramp() -> usize {
    10
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { default_hold_frames: None, ramp_frames: default_ramp() }
    }
}

impl CompileOptions {
    pub fn default_hold(&self, fps: f64) -> usize {
        self.default_hold_frames.unwrap_or_else(|| (2.0 * fps).round() as usize)
    }
}

struct Raw {
    kind: FrameKind,
    src: usize,
    effect: Option<Effect>,
    seg: u8,
}

/// Extra frames inserted after the play frame of a source frame.
#[derive(Default)]
struct Extras {
    /// (frames, effect) holds on the frame itself.
    holds: Vec<(usize, Effect)>,
    /// Replayed source frame intervals.
    repeats: Vec<(usize, usize)>,
}

struct Timeline {
    frames: Vec<Raw>,
}

impl Timeline {
    fn play(&mut self, seg: u8, a: usize, b: usize, extras: &BTreeMap<(u8, usize), Extras>, reveal: Option<(usize, usize)>) -> Option<(usize, usize)> {
        let mut reveal_at = None;
        for f in a..=b {
            self.frames.push(Raw { kind: FrameKind::Play, src: f, effect: None, seg });
            if let Some((at, n)) = reveal {
                if at == f && seg == 0 {
                    reveal_at = Some((self.frames.len(), n));
                    self.hold(seg, f, n, Effect::Reveal);
                }
            }
            if let Some(x) = extras.get(&(seg, f)) {
                for &(n, effect) in &x.holds {
                    self.hold(seg, f, n, effect);
                }
                for &(s, e) in &x.repeats {
                    for r in s..=e {
                        self.frames.push(Raw { kind: FrameKind::Hold, src: r, effect: Some(Effect::Repeat), seg });
                    }
                }
            }
        }
        reveal_at
    }

    fn hold(&mut self, seg: u8, f: usize, n: usize, effect: Effect) {
        for _ in 0..n {
            self.frames.push(Raw { kind: FrameKind::Hold, src: f, effect: Some(effect), seg });
        }
    }

    fn first_play(&self, seg: u8, f: usize) -> Option<usize> {
        self.frames.iter().position(|r| r.seg == seg && r.kind == FrameKind::Play && r.src == f)
    }

    /// Last output index still at source time `f` within `seg`: the frame
    /// before the play of `f + 1`, or the end of the segment.
    fn last_at(&self, seg: u8, f: usize) -> Option<usize> {
        match self.first_play(seg, f + 1) {
            Some(i) => Some(i - 1),
            None => self.frames.iter().rposition(|r| r.seg == seg),
        }
    }
}

/// Compiles `script` against the clip's video metadata.
pub fn compile_schedule(script: &AugmentationScript, video: &VideoMeta, options: &CompileOptions) -> Result<RenderSchedule> {
    script.validate(video.frame_count)?;
    let dag = build_dag(script)?;
    let (t0, t1) = script.clip;
    let default_hold = options.default_hold(video.fps);
    let hold_of = |i: usize| script.mappings[i].hold_frames.unwrap_or(default_hold);
    let span_of = |i: usize| {
        let s = &script.mappings[i].selection;
        (s.anchor_frame, s.source_span.1.min(t1))
    };
    let seg_of = |i: usize| if script.mappings[i].pass == 2 { 2u8 } else { 0u8 };
    let index_of: BTreeMap<&str, usize> =
        script.mappings.iter().enumerate().map(|(i, m)| (m.mapping_id.as_str(), i)).collect();
    let marks: Vec<usize> = (0..script.mappings.len()).filter(|&i| script.mappings[i].is_mark()).collect();
    let anchor = dag.anchor;

    let mut extras: BTreeMap<(u8, usize), Extras> = BTreeMap::new();
    if script.order == NarrativeOrder::Linear {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in &marks {
            groups.entry(span_of(i).0).or_default().push(i);
        }
        for (f, g) in groups.into_iter().filter(|(_, g)| g.len() >= 2) {
            let n = g.iter().map(|&i| hold_of(i)).max().unwrap_or(0);
            extras.entry((0, f)).or_default().holds.push((n, Effect::Pause));
        }
    }
    for (i, m) in script.mappings.iter().enumerate() {
        let (vs, ve) = span_of(i);
        match m.visual {
            Visual::Pause => extras.entry((seg_of(i), vs)).or_default().holds.push((hold_of(i), Effect::Pause)),
            Visual::Repeat => extras.entry((seg_of(i), ve)).or_default().repeats.push((vs, ve)),
            _ => {}
        }
    }

    // reveal order and offsets inside the anchor hold
    let topo: Vec<usize> = dag.topo_order()?.into_iter().map(|n| index_of[dag.nodes[n].mapping_id.as_str()]).collect();
    let revealed: Vec<usize> = match script.order {
        NarrativeOrder::FlashForward | NarrativeOrder::FlashBack => topo.clone(),
        NarrativeOrder::TimeFork => {
            let hyp = &script.timefork.as_ref().expect("validated").hypothetical;
            topo.iter().copied().filter(|&i| hyp.contains(&script.mappings[i].mapping_id)).collect()
        }
        _ => Vec::new(),
    };
    let mut offsets: BTreeMap<usize, usize> = BTreeMap::new();
    let mut reveal_len = 0;
    for &i in &revealed {
        offsets.insert(i, reveal_len);
        reveal_len += hold_of(i).max(1);
    }

    let mut tl = Timeline { frames: Vec::new() };
    let mut reveal_start = None;
    match script.order {
        NarrativeOrder::ZigZag => {
            let z = script.zigzag.expect("validated");
            let back_to = z.anchor + 1 - z.rewind_frames;
            tl.play(0, t0, z.anchor, &extras, None);
            for f in (back_to..=z.anchor).rev() {
                tl.frames.push(Raw { kind: FrameKind::Reverse, src: f, effect: None, seg: 1 });
            }
            tl.play(2, back_to, t1, &extras, None);
        }
        _ => {
            let reveal = match (anchor, revealed.is_empty()) {
                (Some(a), false) => Some((a, reveal_len)),
                _ => None,
            };
            reveal_start = tl.play(0, t0, t1, &extras, reveal);
        }
    }
    let last = tl.frames.len() - 1;

    // visible output interval of every graphical mapping
    let never = |i: usize| Error::Script(format!("mapping {} is never visible", script.mappings[i].mapping_id));
    let mut visible: Vec<(usize, usize, usize)> = Vec::new();
    for &i in &marks {
        let (vs, ve) = span_of(i);
        let (c, d) = match script.order {
            NarrativeOrder::Linear => (tl.first_play(0, vs).ok_or_else(|| never(i))?, tl.last_at(0, ve).ok_or_else(|| never(i))?),
            NarrativeOrder::FlashForward | NarrativeOrder::FlashBack => {
                let (start, n) = reveal_start.expect("reveal hold");
                let c = start + offsets[&i];
                let d = tl.last_at(0, ve).ok_or_else(|| never(i))?.max(start + n - 1).max(c);
                (c, d)
            }
            NarrativeOrder::TimeFork => match (offsets.get(&i), reveal_start) {
                (Some(&off), Some((start, n))) => (start + off, start + n - 1),
                _ => {
                    let a = anchor.expect("timefork anchor");
                    let after = reveal_start.map_or_else(|| tl.first_play(0, a).map(|p| p + 1), |(s, n)| Some(s + n));
                    let c = if vs <= a { after } else { tl.first_play(0, vs) };
                    match c.filter(|&c| c <= last) {
                        Some(c) => (c, last),
                        None => return Err(never(i)),
                    }
                }
            },
            NarrativeOrder::ZigZag => {
                let z = script.zigzag.expect("validated");
                if script.mappings[i].pass == 2 {
                    let vs = vs.max(z.anchor + 1 - z.rewind_frames);
                    if vs > ve {
                        return Err(never(i));
                    }
                    (tl.first_play(2, vs).ok_or_else(|| never(i))?, tl.last_at(2, ve).ok_or_else(|| never(i))?)
                } else {
                    if vs > z.anchor {
                        return Err(never(i));
                    }
                    (tl.first_play(0, vs).ok_or_else(|| never(i))?, tl.last_at(0, ve).ok_or_else(|| never(i))?)
                }
            }
            NarrativeOrder::Grouped => return Err(Error::UnsupportedOrder(NarrativeOrder::Grouped)),
        };
        visible.push((i, c, d));
    }

    let mut output: Vec<OutputFrame> = tl
        .frames
        .iter()
        .enumerate()
        .map(|(index, r)| OutputFrame { index, kind: r.kind, source_frame: r.src, effect: r.effect, items: Vec::new() })
        .collect();
    let ramp = options.ramp_frames;
    for &(i, c, d) in &visible {
        let len = d - c + 1;
        let (rc, rd) = if d == last { (ramp.min(len), 0) } else {
            let rc = ramp.min(len.div_ceil(2));
            (rc, ramp.min(len - rc))
        };
        for (k, frame) in output[c..=d].iter_mut().enumerate() {
            let (phase, step, steps) = if k < rc {
                (Phase::Creation, k, rc)
            } else if k >= len - rd {
                (Phase::Destruction, k - (len - rd), rd)
            } else {
                (Phase::Sustain, 0, 0)
            };
            frame.items.push(ActiveItem {
                mapping_id: script.mappings[i].mapping_id.clone(),
                phase,
                step: step as u32,
                steps: steps as u32,
            });
        }
    }

    let mut schedule = RenderSchedule {
        schema_version: SCHEMA_VERSION,
        script_id: script.script_id.clone(),
        order: script.order,
        fps: video.fps,
        clip: script.clip,
        anchor,
        total_frames: output.len(),
        output_frames: output,
    };
    for (i, m) in script.mappings.iter().enumerate() {
        if m.visual == Visual::SlowMotion {
            let (vs, ve) = span_of(i);
            schedule = apply_slow_motion(&schedule, (vs, ve), m.style.rate.unwrap_or(0.5))?;
        }
    }
    Ok(schedule)
}

/// Frame-hold slow motion: every Play frame with a source frame in `span`
/// is followed by `round(1 / rate) - 1` Hold copies carrying the same items.
pub fn apply_slow_motion(schedule: &RenderSchedule, span: (usize, usize), rate: f64) -> Result<RenderSchedule> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::invalid(format!("slow motion rate must lie in (0, 1), got {rate}")));
    }
    let (a, b) = span;
    let mut out = schedule.clone();
    if a > b {
        return Ok(out);
    }
    if a < schedule.clip.0 || b > schedule.clip.1 {
        return Err(Error::invalid(format!(
            "slow motion span [{a}, {b}] outside the clip [{}, {}]",
            schedule.clip.0, schedule.clip.1
        )));
    }
    let copies = (1.0 / rate).round() as usize;
    out.output_frames.clear();
    for f in &schedule.output_frames {
        out.output_frames.push(f.clone());
        if f.kind == FrameKind::Play && (a..=b).contains(&f.source_frame) {
            for _ in 1..copies {
                out.output_frames.push(OutputFrame { kind: FrameKind::Hold, effect: Some(Effect::SlowMotion), ..f.clone() });
            }
        }
    }
    out.renumber();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Target;
    use crate::script::{DataSelection, ScriptMapping, Style, TimeForkSpec, ZigZagSpec};

    fn video(n: usize) -> VideoMeta {
        VideoMeta { width: 1920, height: 1080, fps: 50.0, frame_count: n, player_names: None }
    }

    fn mapping(id: &str, frame: usize, end: usize, hold: Option<usize>) -> ScriptMapping {
        ScriptMapping {
            mapping_id: id.into(),
            selection: DataSelection {
                selection_id: format!("sel-{id}"),
                attribute: "ball_position".into(),
                subject: Target::Ball,
                anchor_frame: frame,
                source_span: (frame, end),
            },
            visual: Visual::Dot,
            style: Style::default(),
            hold_frames: hold,
            pass: 1,
        }
    }

    fn script(order: NarrativeOrder, maps: Vec<ScriptMapping>) -> AugmentationScript {
        let mut s = AugmentationScript::new("s", (0, 99), order);
        s.mappings = maps;
        s
    }

    fn three(order: NarrativeOrder) -> AugmentationScript {
        script(order, vec![mapping("a", 10, 15, Some(40)), mapping("b", 20, 25, Some(40)), mapping("c", 30, 35, Some(40))])
    }

    /// Independent oracle: repeatedly take the ready node with the smallest
    /// (source frame, position).
    fn oracle_topo(dag: &ScheduleDag) -> Vec<String> {
        let mut done: Vec<String> = Vec::new();
        while done.len() < dag.nodes.len() {
            let ready = dag
                .nodes
                .iter()
                .enumerate()
                .filter(|(_, n)| !done.contains(&n.node_id))
                .filter(|(_, n)| {
                    dag.nodes.iter().all(|p| done.contains(&p.node_id) || !p.edges.iter().any(|e| e.to == n.node_id))
                })
                .min_by_key(|(i, n)| (n.source_frame, *i))
                .unwrap();
            done.push(ready.1.node_id.clone());
        }
        done
    }

    #[test]
    fn flash_forward_dag() {
        let dag = build_dag(&three(NarrativeOrder::FlashForward)).unwrap();
        let v: Vec<(&str, &str)> = dag.virtual_edges().collect();
        assert_eq!(v, [("a", "b"), ("a", "c")]);
        let order: Vec<String> = dag.topo_order().unwrap().into_iter().map(|i| dag.nodes[i].node_id.clone()).collect();
        assert_eq!(order, ["a", "b", "c"]);
        assert_eq!(order, oracle_topo(&dag));
        assert_eq!(dag.nodes.iter().map(|n| n.presented_flag).collect::<Vec<_>>(), [false, true, true]);
    }

    #[test]
    fn flash_back_dag_has_no_cycle() {
        let dag = build_dag(&three(NarrativeOrder::FlashBack)).unwrap();
        let order: Vec<String> = dag.topo_order().unwrap().into_iter().map(|i| dag.nodes[i].node_id.clone()).collect();
        assert_eq!(order, ["c", "a", "b"]);
        assert_eq!(order, oracle_topo(&dag));
    }

    #[test]
    fn small_dags() {
        let one = build_dag(&script(NarrativeOrder::FlashForward, vec![mapping("a", 5, 5, None)])).unwrap();
        assert_eq!(one.nodes.len(), 1);
        assert!(one.nodes[0].edges.is_empty());
        let lin = build_dag(&three(NarrativeOrder::Linear)).unwrap();
        assert_eq!(lin.virtual_edges().count(), 0);
    }

    #[test]
    fn duration_identities() {
        let ff = compile_schedule(&three(NarrativeOrder::FlashForward), &video(100), &CompileOptions::default()).unwrap();
        assert_eq!(ff.total_frames, 220);
        assert_eq!(ff.count(FrameKind::Hold), 120);
        let lin = compile_schedule(&three(NarrativeOrder::Linear), &video(100), &CompileOptions::default()).unwrap();
        assert_eq!(lin.total_frames, 100);
        assert!(lin.output_frames.iter().enumerate().all(|(i, f)| f.kind == FrameKind::Play && f.source_frame == i));
        let mut zz = three(NarrativeOrder::ZigZag);
        zz.zigzag = Some(ZigZagSpec { anchor: 60, rewind_frames: 20 });
        let zz = compile_schedule(&zz, &video(100), &CompileOptions::default()).unwrap();
        assert_eq!(zz.total_frames, 140);
        let kinds: Vec<(FrameKind, usize)> = runs(&zz);
        assert_eq!(kinds, [(FrameKind::Play, 61), (FrameKind::Reverse, 20), (FrameKind::Play, 59)]);
    }

    fn runs(s: &RenderSchedule) -> Vec<(FrameKind, usize)> {
        let mut out: Vec<(FrameKind, usize)> = Vec::new();
        for f in &s.output_frames {
            match out.last_mut() {
                Some((k, n)) if *k == f.kind => *n += 1,
                _ => out.push((f.kind, 1)),
            }
        }
        out
    }

    #[test]
    fn linear_shared_anchor_pauses() {
        let s = script(NarrativeOrder::Linear, vec![mapping("a", 10, 20, Some(30)), mapping("b", 10, 12, Some(25))]);
        let sch = compile_schedule(&s, &video(100), &CompileOptions::default()).unwrap();
        assert_eq!(sch.total_frames, 130);
        assert!(sch.output_frames[11..41].iter().all(|f| f.kind == FrameKind::Hold && f.source_frame == 10));
    }

    #[test]
    fn flash_forward_reveals_in_order_once() {
        let sch = compile_schedule(&three(NarrativeOrder::FlashForward), &video(100), &CompileOptions::default()).unwrap();
        let idx: Vec<usize> = ["a", "b", "c"].iter().map(|m| sch.creation_index(m).unwrap()).collect();
        assert_eq!(idx, [11, 51, 91]);
        for m in ["a", "b", "c"] {
            let creations = sch.output_frames.iter().filter(|f| f.items.iter().any(|i| i.mapping_id == m && i.phase == Phase::Creation && i.step == 0)).count();
            assert_eq!(creations, 1);
        }
        // c stays up until its span ends at source frame 35
        let last_c = sch.output_frames.iter().rposition(|f| f.items.iter().any(|i| i.mapping_id == "c")).unwrap();
        assert_eq!(sch.output_frames[last_c].source_frame, 35);
    }

    #[test]
    fn timefork_phases() {
        let mut s = script(
            NarrativeOrder::TimeFork,
            vec![mapping("h1", 30, 30, Some(20)), mapping("h2", 30, 30, Some(20)), mapping("x", 30, 40, Some(20))],
        );
        s.timefork = Some(TimeForkSpec { anchor: None, hypothetical: vec!["h1".into(), "h2".into()], actual: vec!["x".into()] });
        let sch = compile_schedule(&s, &video(100), &CompileOptions::default()).unwrap();
        assert_eq!(sch.total_frames, 140);
        let first_play_after = sch.output_frames.iter().position(|f| f.kind == FrameKind::Play && f.source_frame > 30).unwrap();
        for h in ["h1", "h2"] {
            let d = sch.output_frames.iter().position(|f| f.items.iter().any(|i| i.mapping_id == h && i.phase == Phase::Destruction)).unwrap();
            assert!(d < first_play_after);
        }
        let x_destroyed = sch.output_frames.iter().any(|f| f.items.iter().any(|i| i.mapping_id == "x" && i.phase == Phase::Destruction));
        assert!(!x_destroyed);
        assert_eq!(sch.creation_index("x"), Some(first_play_after));
    }

    #[test]
    fn zigzag_passes() {
        let mut s = script(NarrativeOrder::ZigZag, vec![mapping("p1", 45, 70, None), mapping("p2", 45, 70, None)]);
        s.mappings[1].pass = 2;
        s.zigzag = Some(ZigZagSpec { anchor: 60, rewind_frames: 20 });
        let sch = compile_schedule(&s, &video(100), &CompileOptions::default()).unwrap();
        for f in &sch.output_frames {
            let ids: Vec<&str> = f.items.iter().map(|i| i.mapping_id.as_str()).collect();
            match (f.index, f.kind) {
                (_, FrameKind::Reverse) => assert!(ids.is_empty()),
                (i, _) if i < 61 => assert!(!ids.contains(&"p2")),
                _ => assert!(!ids.contains(&"p1")),
            }
        }
        // conservation: rewind window seen forward, reversed and replayed
        let plays = |src: usize| sch.output_frames.iter().filter(|f| f.source_frame == src).count();
        assert_eq!(plays(50), 3);
        assert_eq!(plays(20), 1);
    }

    #[test]
    fn grouped_is_unsupported() {
        let err = compile_schedule(&three(NarrativeOrder::Grouped), &video(100), &CompileOptions::default()).unwrap_err();
        assert!(err.to_string().contains("unsupported order"));
    }

    #[test]
    fn slow_motion_arithmetic() {
        let lin = compile_schedule(&script(NarrativeOrder::Linear, vec![]), &video(100), &CompileOptions::default()).unwrap();
        assert_eq!(apply_slow_motion(&lin, (10, 19), 0.5).unwrap().total_frames, 110);
        assert_eq!(apply_slow_motion(&lin, (10, 13), 0.25).unwrap().total_frames, 112);
        assert_eq!(apply_slow_motion(&lin, (5, 4), 0.5).unwrap(), lin);
        assert!(apply_slow_motion(&lin, (0, 3), 1.0).is_err());
        assert!(apply_slow_motion(&lin, (0, 3), 0.0).is_err());
    }

    #[test]
    fn compile_is_pure() {
        let s = three(NarrativeOrder::FlashBack);
        let a = compile_schedule(&s, &video(100), &CompileOptions::default()).unwrap();
        let b = compile_schedule(&s, &video(100), &CompileOptions::default()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.digest(), b.digest());
    }
}
