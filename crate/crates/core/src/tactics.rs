//! Tactic-level data: an expert rule engine over detected events and an
//! import path for externally produced tactic annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::design_space::SCHEMA_VERSION;
use crate::error::{Error, Result};
use crate::events::{cell_center, Event, EventKind, EventLog, PlacementCell};
use crate::expr::{Env, Expr, Value};
use crate::geom::{Point2, QuadBezier};
use crate::tracking::{BallTrack, PlayerId, TrackingDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TacticKind {
    PotentialRoutes,
    PotentialPlacements,
    StrokeEffect,
    PlayerTactic,
    KeyStroke,
}

impl fmt::Display for TacticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    RuleEngine,
    Imported,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellProbability {
    pub half: PlayerId,
    pub zone: u8,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub half: PlayerId,
    pub zone: u8,
    pub probability: f64,
    pub curve: QuadBezier<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TacticPayload {
    Placements { cells: Vec<CellProbability> },
    Routes { routes: Vec<Route> },
    Label { value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticFact {
    pub fact_id: String,
    pub kind: TacticKind,
    pub anchor_event: String,
    pub payload: TacticPayload,
    pub provenance: Provenance,
}

impl TacticFact {
    pub fn label(&self) -> Option<&str> {
        match &self.payload {
            TacticPayload::Label { value } => Some(value),
            _ => None,
        }
    }
}

/// What a matching rule produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RuleEffect {
    /// Placement distribution over the opponent half, restricted to the given
    /// depth rows (all rows when absent) and weighted by `prior` (9 weights
    /// indexed by zone, uniform when absent).
    Placements {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rows: Option<Vec<u8>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<Vec<f64>>,
    },
    /// One arc per supported cell of the placement facts already produced for the event.
    Routes,
    StrokeEffect { value: String },
    PlayerTactic { value: String },
    KeyStroke { value: String },
}

impl RuleEffect {
    pub fn kind(&self) -> TacticKind {
        match self {
            RuleEffect::Placements { .. } => TacticKind::PotentialPlacements,
            RuleEffect::Routes => TacticKind::PotentialRoutes,
            RuleEffect::StrokeEffect { .. } => TacticKind::StrokeEffect,
            RuleEffect::PlayerTactic { .. } => TacticKind::PlayerTactic,
            RuleEffect::KeyStroke { .. } => TacticKind::KeyStroke,
        }
    }
}

fn stroke_kind() -> EventKind {
    EventKind::Stroke
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticRule {
    pub rule_id: String,
    #[serde(default = "stroke_kind")]
    pub applies_to: EventKind,
    pub guard: String,
    pub effect: RuleEffect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulePack {
    pub schema_version: u32,
    pub rules: Vec<TacticRule>,
}

/// A rule with its parsed guard.
#[derive(Debug, Clone)]
struct CompiledRule<'a> {
    rule: &'a TacticRule,
    guard: Expr,
}

impl RulePack {
    pub fn from_json(text: &str) -> Result<Self> {
        let pack: RulePack = serde_json::from_str(text)?;
        if pack.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: pack.schema_version, supported: SCHEMA_VERSION });
        }
        pack.validate()?;
        Ok(pack)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("rule pack serialization");
        s.push('\n');
        s
    }

    /// Checks guard syntax, unique ids and placement parameters.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for r in &self.rules {
            if !ids.insert(r.rule_id.as_str()) {
                return Err(Error::invalid(format!("duplicate rule_id {:?}", r.rule_id)));
            }
            Expr::parse(&r.guard)?;
            if let RuleEffect::Placements { rows, prior } = &r.effect {
                if rows.as_ref().is_some_and(|rows| rows.is_empty() || rows.iter().any(|&d| d > 2)) {
                    return Err(Error::invalid(format!("rule {}: rows must be a non-empty subset of 0..=2", r.rule_id)));
                }
                if let Some(p) = prior {
                    if p.len() != 9 || p.iter().any(|w| !w.is_finite() || *w < 0.0) {
                        return Err(Error::invalid(format!("rule {}: prior needs 9 non-negative weights", r.rule_id)));
                    }
                }
            }
        }
        Ok(())
    }

    /// End-line restriction, uniform fallback, routes and stroke effects.
    pub fn default_pack() -> Self {
        let rule = |id: &str, guard: &str, effect: RuleEffect| TacticRule {
            rule_id: id.into(),
            applies_to: EventKind::Stroke,
            guard: guard.into(),
            effect,
        };
        let effect = |v: &str| RuleEffect::StrokeEffect { value: v.into() };
        RulePack {
            schema_version: SCHEMA_VERSION,
            rules: vec![
                rule(
                    "r10-endline-placement",
                    "has_hit && has_reception && reception_depth == 0",
                    RuleEffect::Placements { rows: Some(vec![0]), prior: None },
                ),
                rule(
                    "r20-uniform-placement",
                    "has_hit && has_reception && reception_depth != 0",
                    RuleEffect::Placements { rows: None, prior: None },
                ),
                rule("r30-routes", "has_hit && has_reception", RuleEffect::Routes),
                rule(
                    "r40-effect-offensive",
                    "technique in ['forehand_attack', 'backhand_attack'] && ball_speed >= 1000",
                    effect("offensive"),
                ),
                rule(
                    "r41-effect-defensive",
                    "technique in ['forehand_push', 'backhand_push'] && has_reception && reception_depth == 0",
                    effect("defensive"),
                ),
                rule(
                    "r42-effect-neutral",
                    "has_hit && !(technique in ['forehand_attack', 'backhand_attack'] && ball_speed >= 1000) \
                     && !(technique in ['forehand_push', 'backhand_push'] && has_reception && reception_depth == 0)",
                    effect("neutral"),
                ),
            ],
        }
    }

    fn compiled(&self) -> Result<Vec<CompiledRule<'_>>> {
        let mut rules: Vec<CompiledRule<'_>> = self
            .rules
            .iter()
            .map(|rule| Ok(CompiledRule { rule, guard: Expr::parse(&rule.guard)? }))
            .collect::<Result<_>>()?;
        rules.sort_by(|a, b| a.rule.rule_id.cmp(&b.rule.rule_id));
        Ok(rules)
    }
}

/// Data the rules are evaluated against.
#[derive(Debug, Clone, Copy)]
pub struct TacticContext<'a> {
    pub dataset: &'a TrackingDataset<f64>,
    pub track: &'a BallTrack<f64>,
    pub events: &'a EventLog,
}

impl<'a> TacticContext<'a> {
    /// Where the hitter of `stroke` received the ball: the last bounce on the
    /// hitter's half after the previous hit and before this one.
    pub fn reception(&self, stroke: &Event) -> Option<PlacementCell> {
        let player = stroke.subject.player()?;
        let hit = stroke.hit_frame?;
        let previous_hit = self
            .events
            .of_kind(EventKind::Stroke)
            .filter_map(|s| s.hit_frame)
            .filter(|&h| h < hit)
            .max();
        self.events
            .of_kind(EventKind::Bounce)
            .filter(|b| b.start < hit && previous_hit.is_none_or(|p| b.start > p))
            .filter_map(|b| b.placement)
            .filter(|c| c.half == player)
            .last()
    }

    /// Guard variables for an event.
    pub fn env(&self, event: &Event) -> Env {
        let mut env = Env::new();
        let subject = match event.subject.player() {
            Some(p) => p.to_string(),
            None => "Ball".into(),
        };
        env.insert("kind".into(), Value::Str(event.kind.to_string()));
        env.insert("subject".into(), Value::Str(subject));
        env.insert("start".into(), Value::Num(event.start as f64));
        env.insert("end".into(), Value::Num(event.end as f64));
        env.insert("has_hit".into(), Value::Bool(event.hit_frame.is_some()));
        env.insert("hit_frame".into(), event.hit_frame.map(|h| h as f64).into());
        let key = event.key_frame();
        env.insert("ball_speed".into(), self.ball_speed(event).into());
        let rpm = self.dataset.frames.get(key).and_then(|f| f.ball.as_ref()).and_then(|b| b.rotation_rpm);
        env.insert("rotation_rpm".into(), rpm.into());
        env.insert("technique".into(), event.technique().into());
        let cell = if event.kind == EventKind::Stroke { self.reception(event) } else { event.placement };
        env.insert("has_reception".into(), Value::Bool(cell.is_some()));
        env.insert("reception_depth".into(), cell.map(|c| f64::from(c.depth())).into());
        env.insert("reception_lateral".into(), cell.map(|c| f64::from(c.lateral())).into());
        env.insert("reception_zone".into(), cell.map(|c| f64::from(c.zone)).into());
        env
    }

    /// Outgoing speed after a hit (mean over the next three frames), else the
    /// speed at the event's key frame. px/s.
    pub fn ball_speed(&self, event: &Event) -> Option<f64> {
        match event.hit_frame {
            Some(h) => {
                let s: Vec<f64> = (h + 1..=h + 3).filter_map(|f| self.track.speed(f)).collect();
                (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)
            }
            None => self.track.speed(event.key_frame()),
        }
    }

    fn ball_position(&self, event: &Event) -> Option<Point2<f64>> {
        self.track.center(event.key_frame())
    }
}

/// Placement distribution over the opponent half of the hitter.
///
/// `rows` restricts the support to depth rows (0 = end line); `prior` holds
/// one non-negative weight per zone. The result is normalized by the exact
/// sum of the supported weights.
pub fn placement_distribution(
    hitter: PlayerId,
    rows: Option<&[u8]>,
    prior: Option<&[f64]>,
) -> Result<Vec<CellProbability>> {
    let half = hitter.opponent();
    let support: Vec<(u8, f64)> = (0u8..9)
        .filter(|z| rows.is_none_or(|r| r.contains(&(z / 3))))
        .map(|z| (z, prior.map_or(1.0, |p| p[z as usize])))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    let total: f64 = support.iter().map(|&(_, w)| w).sum();
    if support.is_empty() || !total.is_finite() || total <= 0.0 {
        return Err(Error::EmptySupport(format!("{half} half")));
    }
    Ok(support
        .into_iter()
        .map(|(zone, w)| CellProbability { half, zone, probability: w / total })
        .collect())
}

/// Placements for a stroke given where the hitter received the ball: an
/// end-line reception restricts the support to the opponent end-line row.
pub fn infer_potential_placements(
    stroke: &Event,
    reception: Option<PlacementCell>,
    prior: Option<&[f64]>,
) -> Result<Vec<CellProbability>> {
    let hitter = stroke
        .subject
        .player()
        .ok_or_else(|| Error::invalid(format!("{} is not a player stroke", stroke.event_id)))?;
    if stroke.hit_frame.is_none() {
        return Err(Error::invalid(format!("{} has no hit frame", stroke.event_id)));
    }
    let reception = reception.ok_or_else(|| Error::MissingReception(stroke.event_id.clone()))?;
    let rows: Option<&[u8]> = if reception.depth() == 0 { Some(&[0]) } else { None };
    placement_distribution(hitter, rows, prior)
}

/// One arc per supported cell, from the ball position to the cell center.
pub fn infer_potential_routes(
    cells: &[CellProbability],
    ball: Point2<f64>,
    table: &crate::tracking::TableGeometry<f64>,
) -> Result<Vec<Route>> {
    if cells.is_empty() {
        return Err(Error::EmptySupport("no placement cells".into()));
    }
    Ok(cells
        .iter()
        .map(|c| {
            let end = cell_center(table, c.half, c.zone);
            let mid = ball.midpoint(end);
            // control point above the chord so the arc bows upwards on screen
            let lift = 0.5 * ball.distance(end);
            let control = Point2::new(mid.x, mid.y - lift);
            Route { half: c.half, zone: c.zone, probability: c.probability, curve: QuadBezier { start: ball, control, end } }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleDiagnostic {
    pub rule_id: String,
    pub event_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleOutput {
    pub facts: Vec<TacticFact>,
    pub diagnostics: Vec<RuleDiagnostic>,
}

/// Evaluates every rule (in rule_id order) against every event of its kind
/// (in frame order). A failing guard or effect is recorded as a diagnostic
/// and does not stop the other rules.
pub fn run_rules(pack: &RulePack, ctx: &TacticContext<'_>) -> Result<RuleOutput> {
    let rules = pack.compiled()?;
    let mut facts: Vec<TacticFact> = Vec::new();
    let mut diagnostics = Vec::new();
    for CompiledRule { rule, guard } in &rules {
        let mut events: Vec<&Event> = ctx.events.of_kind(rule.applies_to).collect();
        events.sort_by_key(|e| (e.key_frame(), e.event_id.clone()));
        for event in events {
            let outcome = guard
                .test(&ctx.env(event))
                .map_err(Error::from)
                .and_then(|hit| if hit { apply(rule, event, ctx, &facts).map(Some) } else { Ok(None) });
            match outcome {
                Ok(Some(payload)) => facts.push(TacticFact {
                    fact_id: format!("{}@{}", rule.rule_id, event.event_id),
                    kind: rule.effect.kind(),
                    anchor_event: event.event_id.clone(),
                    payload,
                    provenance: Provenance::RuleEngine,
                }),
                Ok(None) => {}
                Err(e) => diagnostics.push(RuleDiagnostic {
                    rule_id: rule.rule_id.clone(),
                    event_id: event.event_id.clone(),
                    message: e.to_string(),
                }),
            }
        }
    }
    Ok(RuleOutput { facts, diagnostics })
}

fn apply(rule: &TacticRule, event: &Event, ctx: &TacticContext<'_>, earlier: &[TacticFact]) -> Result<TacticPayload> {
    Ok(match &rule.effect {
        RuleEffect::Placements { rows, prior } => {
            let hitter = event
                .subject
                .player()
                .ok_or_else(|| Error::invalid(format!("{} is not a player event", event.event_id)))?;
            if event.kind == EventKind::Stroke && ctx.reception(event).is_none() {
                return Err(Error::MissingReception(event.event_id.clone()));
            }
            TacticPayload::Placements { cells: placement_distribution(hitter, rows.as_deref(), prior.as_deref())? }
        }
        RuleEffect::Routes => {
            let cells: Vec<CellProbability> = earlier
                .iter()
                .filter(|f| f.anchor_event == event.event_id && f.kind == TacticKind::PotentialPlacements)
                .flat_map(|f| match &f.payload {
                    TacticPayload::Placements { cells } => cells.clone(),
                    _ => Vec::new(),
                })
                .collect();
            let ball = ctx
                .ball_position(event)
                .ok_or_else(|| Error::DataMissing { attribute: "ball_position".into(), frame: event.key_frame() })?;
            let table = &ctx.dataset.frame(event.key_frame())?.table;
            TacticPayload::Routes { routes: infer_potential_routes(&cells, ball, table)? }
        }
        RuleEffect::StrokeEffect { value } | RuleEffect::PlayerTactic { value } | RuleEffect::KeyStroke { value } => {
            TacticPayload::Label { value: value.clone() }
        }
    })
}

/// An externally produced fact as stored in an import file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportedFact {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fact_id: Option<String>,
    pub kind: TacticKind,
    pub anchor_event: String,
    pub payload: TacticPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticImportFile {
    pub schema_version: u32,
    pub facts: Vec<ImportedFact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFact {
    pub index: usize,
    pub anchor_event: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImportReport {
    pub imported: usize,
    pub skipped: Vec<SkippedFact>,
}

fn check_distribution(cells: &[CellProbability]) -> std::result::Result<(), String> {
    if cells.iter().any(|c| !(0.0..=1.0).contains(&c.probability) || c.zone > 8) {
        return Err("placement probabilities must lie in [0, 1] with zones 0..=8".into());
    }
    let sum: f64 = cells.iter().map(|c| c.probability).sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(format!("placement probabilities sum to {sum}, expected 1"));
    }
    Ok(())
}

/// Parses an import file and resolves anchors against `events`. Facts with
/// unknown anchors or invalid payloads are skipped and reported.
pub fn import_tactics(text: &str, events: &EventLog) -> Result<(Vec<TacticFact>, ImportReport)> {
    let file: TacticImportFile = serde_json::from_str(text)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion { found: file.schema_version, supported: SCHEMA_VERSION });
    }
    let mut report = ImportReport::default();
    let mut by_id: BTreeMap<String, TacticFact> = BTreeMap::new();
    for (index, f) in file.facts.into_iter().enumerate() {
        let skip = |reason: String| SkippedFact { index, anchor_event: f.anchor_event.clone(), reason };
        if events.get(&f.anchor_event).is_none() {
            report.skipped.push(skip("anchor event not found".into()));
            continue;
        }
        if let TacticPayload::Placements { cells } = &f.payload {
            if let Err(reason) = check_distribution(cells) {
                report.skipped.push(skip(reason));
                continue;
            }
        }
        let fact_id = f.fact_id.clone().unwrap_or_else(|| format!("import:{}@{}", f.kind, f.anchor_event));
        by_id.insert(
            fact_id.clone(),
            TacticFact { fact_id, kind: f.kind, anchor_event: f.anchor_event, payload: f.payload, provenance: Provenance::Imported },
        );
    }
    report.imported = by_id.len();
    Ok((by_id.into_values().collect(), report))
}

/// Imported facts shadow rule facts with the same `(kind, anchor)` pair.
/// Result: surviving rule facts in their original order, then all imported
/// facts sorted by id (later duplicates of an id replace earlier ones).
pub fn merge_facts(facts: &[TacticFact], imported: &[TacticFact]) -> Vec<TacticFact> {
    let mut imp: BTreeMap<&str, &TacticFact> = BTreeMap::new();
    for f in facts.iter().chain(imported).filter(|f| f.provenance == Provenance::Imported) {
        imp.insert(&f.fact_id, f);
    }
    let shadowed: BTreeSet<(TacticKind, &str)> = imp.values().map(|f| (f.kind, f.anchor_event.as_str())).collect();
    let mut out: Vec<TacticFact> = facts
        .iter()
        .filter(|f| f.provenance == Provenance::RuleEngine)
        .filter(|f| !shadowed.contains(&(f.kind, f.anchor_event.as_str())))
        .cloned()
        .collect();
    out.extend(imp.into_values().cloned());
    out
}

/// Facts of a rally, as written by `tactics run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticSet {
    pub schema_version: u32,
    pub facts: Vec<TacticFact>,
    #[serde(default)]
    pub diagnostics: Vec<RuleDiagnostic>,
}

impl TacticSet {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("tactic serialization");
        s.push('\n');
        s
    }
}
