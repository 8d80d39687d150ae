//! The data pyramid: a rally tree with turn, event, object and frame nodes,
//! plus tactic facts hanging off the root.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::design_space::{DataLevel, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::events::{Event, EventKind, EventLog};
use crate::hash::sha256_hex;
use crate::tactics::TacticFact;
use crate::tracking::{BallTrack, PlayerId, TrackingDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodePayload {
    Rally { frame_count: usize },
    Turn { event: Event },
    Event { event: Event },
    Tactic { fact: TacticFact },
    /// Objects present at one frame.
    Object { frame: usize, ball: bool, ball_interpolated: bool, players: Vec<PlayerId> },
    Frame { frame: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyramidNode {
    pub node_id: String,
    pub level: DataLevel,
    pub start: usize,
    pub end: usize,
    pub payload: NodePayload,
    pub children: Vec<String>,
}

impl PyramidNode {
    pub fn intersects(&self, a: usize, b: usize) -> bool {
        self.start <= b && a <= self.end
    }

    pub fn event(&self) -> Option<&Event> {
        match &self.payload {
            NodePayload::Turn { event } | NodePayload::Event { event } => Some(event),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pyramid {
    pub schema_version: u32,
    pub root: String,
    pub nodes: BTreeMap<String, PyramidNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidSummary {
    pub root: String,
    pub frames: (usize, usize),
    pub node_count: usize,
    /// Node count per level.
    pub levels: BTreeMap<DataLevel, usize>,
    pub turn_count: usize,
    pub suggested_insights: Vec<String>,
}

/// Node under construction; ids are assigned bottom-up once children are known.
struct Draft {
    level: DataLevel,
    start: usize,
    end: usize,
    payload: NodePayload,
    children: Vec<usize>,
}

fn sort_key(d: &Draft) -> (usize, usize, u8) {
    (d.start, d.end, 3 - d.level.rank())
}

impl Pyramid {
    /// Builds the tree: rally root, turns, events under the turn holding
    /// their key frame, one object node per frame under the narrowest event
    /// containing it (else its turn, else the root), a frame node under each
    /// object node, and tactic facts under the root.
    pub fn build(dataset: &TrackingDataset<f64>, track: &BallTrack<f64>, events: &EventLog, facts: &[TacticFact]) -> Result<Pyramid> {
        let n = dataset.frame_count();
        for e in &events.events {
            if e.start > e.end || e.end >= n {
                return Err(Error::invalid(format!(
                    "event {} spans frames [{}, {}] outside 0..{}",
                    e.event_id, e.start, e.end, n
                )));
            }
        }
        let mut drafts: Vec<Draft> = Vec::new();
        let root = 0;
        drafts.push(Draft { level: DataLevel::Tactic, start: 0, end: n - 1, payload: NodePayload::Rally { frame_count: n }, children: vec![] });

        let turns: Vec<&Event> = events.of_kind(EventKind::Turn).collect();
        let mut turn_nodes = Vec::new();
        for t in &turns {
            drafts.push(Draft {
                level: DataLevel::Event,
                start: t.start,
                end: t.end,
                payload: NodePayload::Turn { event: (*t).clone() },
                children: vec![],
            });
            turn_nodes.push(drafts.len() - 1);
        }
        let turn_of = |frame: usize| turns.iter().position(|t| t.contains(frame)).map(|i| turn_nodes[i]);

        let mut event_nodes: Vec<(usize, &Event)> = Vec::new();
        for e in events.events.iter().filter(|e| e.kind != EventKind::Turn) {
            drafts.push(Draft {
                level: DataLevel::Event,
                start: e.start,
                end: e.end,
                payload: NodePayload::Event { event: e.clone() },
                children: vec![],
            });
            let id = drafts.len() - 1;
            let parent = turn_of(e.key_frame()).unwrap_or(root);
            drafts[parent].children.push(id);
            event_nodes.push((id, e));
        }
        for &t in &turn_nodes {
            drafts[root].children.push(t);
        }

        for f in 0..n {
            let frame = &dataset.frames[f];
            let players = PlayerId::BOTH.into_iter().filter(|&p| frame.player(p).is_some()).collect();
            drafts.push(Draft { level: DataLevel::Image, start: f, end: f, payload: NodePayload::Frame { frame: f }, children: vec![] });
            let image = drafts.len() - 1;
            drafts.push(Draft {
                level: DataLevel::Object,
                start: f,
                end: f,
                payload: NodePayload::Object {
                    frame: f,
                    ball: track.center(f).is_some(),
                    ball_interpolated: track.occluded.get(f).copied().unwrap_or(false),
                    players,
                },
                children: vec![image],
            });
            let object = drafts.len() - 1;
            let narrowest = event_nodes
                .iter()
                .filter(|(_, e)| e.contains(f))
                .min_by_key(|(_, e)| (e.end - e.start, e.start, e.event_id.clone()))
                .map(|(id, _)| *id);
            let parent = narrowest.or_else(|| turn_of(f)).unwrap_or(root);
            drafts[parent].children.push(object);
        }

        for fact in facts {
            let anchor = events
                .get(&fact.anchor_event)
                .ok_or_else(|| Error::invalid(format!("fact {} anchors unknown event {}", fact.fact_id, fact.anchor_event)))?;
            drafts.push(Draft {
                level: DataLevel::Tactic,
                start: anchor.start,
                end: anchor.end,
                payload: NodePayload::Tactic { fact: fact.clone() },
                children: vec![],
            });
            let id = drafts.len() - 1;
            drafts[root].children.push(id);
        }

        // parent spans cover their children
        fn hull(drafts: &mut Vec<Draft>, i: usize) -> (usize, usize) {
            let children = drafts[i].children.clone();
            for c in children {
                let (s, e) = hull(drafts, c);
                drafts[i].start = drafts[i].start.min(s);
                drafts[i].end = drafts[i].end.max(e);
            }
            (drafts[i].start, drafts[i].end)
        }
        hull(&mut drafts, root);

        let mut nodes = BTreeMap::new();
        let root_id = assign_ids(&mut drafts, root, &mut nodes);
        Ok(Pyramid { schema_version: SCHEMA_VERSION, root: root_id, nodes })
    }

    pub fn root(&self) -> &PyramidNode {
        &self.nodes[&self.root]
    }

    pub fn node(&self, id: &str) -> Option<&PyramidNode> {
        self.nodes.get(id)
    }

    pub fn children<'a>(&'a self, node: &'a PyramidNode) -> impl Iterator<Item = &'a PyramidNode> {
        node.children.iter().filter_map(|c| self.nodes.get(c))
    }

    /// Nodes in depth-first pre-order from the root.
    pub fn walk(&self) -> Vec<&PyramidNode> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root()];
        while let Some(n) = stack.pop() {
            out.push(n);
            let kids: Vec<&PyramidNode> = self.children(n).collect();
            stack.extend(kids.into_iter().rev());
        }
        out
    }

    pub fn turns(&self) -> Vec<&Event> {
        self.children(self.root())
            .filter_map(|n| match &n.payload {
                NodePayload::Turn { event } => Some(event),
                _ => None,
            })
            .collect()
    }

    /// Subtree of nodes whose span intersects `[a, b]`, ids preserved.
    pub fn brush(&self, a: usize, b: usize) -> Result<Pyramid> {
        if a > b {
            return Err(Error::invalid(format!("empty brush interval [{a}, {b}]")));
        }
        let root = self.root();
        if b > root.end {
            return Err(Error::invalid(format!("brush interval [{a}, {b}] outside the rally [0, {}]", root.end)));
        }
        let mut nodes = BTreeMap::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            let kept: Vec<&PyramidNode> = self.children(n).filter(|c| c.intersects(a, b)).collect();
            let mut copy = n.clone();
            copy.children = kept.iter().map(|c| c.node_id.clone()).collect();
            nodes.insert(copy.node_id.clone(), copy);
            stack.extend(kept);
        }
        Ok(Pyramid { schema_version: self.schema_version, root: self.root.clone(), nodes })
    }

    /// Highlighted events: strokes within the last two turns.
    pub fn suggested_insights(&self) -> Vec<String> {
        let turns = self.turns();
        let Some(from) = turns.iter().rev().nth(1).or(turns.last()).map(|t| t.start) else {
            return Vec::new();
        };
        let mut ids: Vec<(usize, String)> = self
            .nodes
            .values()
            .filter_map(|n| match &n.payload {
                NodePayload::Event { event } if event.kind == EventKind::Stroke && event.key_frame() >= from => {
                    Some((event.key_frame(), event.event_id.clone()))
                }
                _ => None,
            })
            .collect();
        ids.sort();
        ids.into_iter().map(|(_, id)| id).collect()
    }

    pub fn summary(&self) -> PyramidSummary {
        let mut levels = BTreeMap::new();
        for n in self.nodes.values() {
            *levels.entry(n.level).or_insert(0) += 1;
        }
        let root = self.root();
        PyramidSummary {
            root: self.root.clone(),
            frames: (root.start, root.end),
            node_count: self.nodes.len(),
            levels,
            turn_count: self.turns().len(),
            suggested_insights: self.suggested_insights(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("pyramid serialization");
        s.push('\n');
        s
    }
}

fn assign_ids(drafts: &mut Vec<Draft>, i: usize, out: &mut BTreeMap<String, PyramidNode>) -> String {
    let mut children = drafts[i].children.clone();
    children.sort_by(|&a, &b| sort_key(&drafts[a]).cmp(&sort_key(&drafts[b])).then(a.cmp(&b)));
    let child_ids: Vec<String> = children.into_iter().map(|c| assign_ids(drafts, c, out)).collect();
    let d = &drafts[i];
    let content = serde_json::json!({
        "level": d.level,
        "start": d.start,
        "end": d.end,
        "payload": d.payload,
        "children": child_ids,
    });
    let id = sha256_hex(content.to_string().as_bytes())[..16].to_string();
    out.insert(
        id.clone(),
        PyramidNode { node_id: id.clone(), level: d.level, start: d.start, end: d.end, payload: d.payload.clone(), children: child_ids },
    );
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{detect_events, EventParams};
    use crate::synth;
    use crate::tactics::{run_rules, RulePack, TacticContext};

    fn fixture() -> Pyramid {
        let ds = synth::fixture_rally();
        let (track, log) = detect_events(&ds, &EventParams::default()).unwrap();
        let facts = run_rules(&RulePack::default_pack(), &TacticContext { dataset: &ds, track: &track, events: &log })
            .unwrap()
            .facts;
        Pyramid::build(&ds, &track, &log, &facts).unwrap()
    }

    #[test]
    fn levels_and_spans_nest() {
        let p = fixture();
        // oracle: independent containment check over every parent/child pair
        for n in p.nodes.values() {
            for c in p.children(n) {
                assert!(c.level <= n.level, "{:?} under {:?}", c.level, n.level);
                assert!(n.start <= c.start && c.end <= n.end);
            }
        }
        assert_eq!(p.walk().len(), p.nodes.len());
        assert_eq!(p.turns().len(), 6);
        let frames = p.nodes.values().filter(|n| matches!(n.payload, NodePayload::Frame { .. })).count();
        assert_eq!(frames, 300);
    }

    #[test]
    fn small_rally_shape() {
        let ds = synth::fixture_rally();
        let (track, log) = detect_events(&ds, &EventParams::default()).unwrap();
        // keep the first three turns and four strokes
        let keep: Vec<Event> = log
            .events
            .iter()
            .filter(|e| match e.kind {
                EventKind::Turn => ["turn#0", "turn#1", "turn#2"].contains(&e.event_id.as_str()),
                EventKind::Stroke => ["stroke#0", "stroke#1", "stroke#2", "stroke#3"].contains(&e.event_id.as_str()),
                _ => false,
            })
            .cloned()
            .collect();
        let mut small = EventLog::new(log.rally_end, keep);
        small.events.iter_mut().filter(|e| e.event_id == "turn#2").for_each(|t| t.end = 299);
        let facts: Vec<TacticFact> = run_rules(&RulePack::default_pack(), &TacticContext { dataset: &ds, track: &track, events: &log })
            .unwrap()
            .facts
            .into_iter()
            .filter(|f| f.fact_id.starts_with("r20") && small.get(&f.anchor_event).is_some())
            .take(2)
            .collect();
        assert_eq!(facts.len(), 2);
        let p = Pyramid::build(&ds, &track, &small, &facts).unwrap();
        let root = p.root();
        let kids: Vec<&PyramidNode> = p.children(root).collect();
        assert_eq!(kids.iter().filter(|k| matches!(k.payload, NodePayload::Turn { .. })).count(), 3);
        assert_eq!(kids.iter().filter(|k| matches!(k.payload, NodePayload::Tactic { .. })).count(), 2);
        let strokes_under_turns: usize = kids
            .iter()
            .filter(|k| matches!(k.payload, NodePayload::Turn { .. }))
            .map(|t| p.children(t).filter(|c| c.event().is_some_and(|e| e.kind == EventKind::Stroke)).count())
            .sum();
        // stroke#3 hits at frame 155, after the kept turns' hits but inside turn#2 once it is stretched to the end
        assert_eq!(strokes_under_turns, 4);
    }

    #[test]
    fn no_events_gives_object_nodes_under_root() {
        let ds = synth::fixture_rally();
        let (track, _) = detect_events(&ds, &EventParams::default()).unwrap();
        let p = Pyramid::build(&ds, &track, &EventLog::new(299, vec![]), &[]).unwrap();
        assert_eq!(p.children(p.root()).count(), 300);
        assert!(p.children(p.root()).all(|c| c.level == DataLevel::Object));
    }

    #[test]
    fn build_is_deterministic() {
        assert_eq!(fixture().to_json(), fixture().to_json());
    }

    #[test]
    fn brush_last_two_turns_and_identity() {
        let p = fixture();
        let turns = p.turns();
        let (a, b) = (turns[4].start, 299);
        let sub = p.brush(a, b).unwrap();
        let sub_turns: Vec<&str> = sub.turns().iter().map(|t| t.event_id.as_str()).collect();
        assert_eq!(sub_turns, ["turn#4", "turn#5"]);
        assert_eq!(p.brush(0, 299).unwrap(), p);
        assert!(p.brush(10, 5).is_err());
        // every in-rally interval reaches at least one turn once past the first hit
        for a in (turns[0].start..300).step_by(7) {
            assert!(!p.brush(a, a).unwrap().turns().is_empty());
        }
        // monotone
        let small: Vec<String> = p.brush(100, 120).unwrap().nodes.into_keys().collect();
        let big = p.brush(90, 150).unwrap();
        assert!(small.iter().all(|k| big.nodes.contains_key(k)));
    }

    #[test]
    fn insights_are_strokes_in_last_two_turns() {
        assert_eq!(fixture().suggested_insights(), ["stroke#4", "stroke#5", "stroke#6"]);
    }
}
