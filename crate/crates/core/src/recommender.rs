//! Visual recommendation from corpus frequencies of (data, visual, order)
//! triples, with a fixed fallback table when the corpus has no record.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::design_space::{ClipAnnotation, DataLevel, NarrativeOrder, SCHEMA_VERSION};
use crate::error::{Error, Result};

/// Aggregated corpus counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MappingStats {
    /// (attribute, visual, order) → number of mapping records.
    pub counts: BTreeMap<(String, String, NarrativeOrder), u64>,
    /// order → number of clips.
    pub order_totals: BTreeMap<NarrativeOrder, u64>,
    /// (level, order) → number of clips.
    pub level_order_counts: BTreeMap<(DataLevel, NarrativeOrder), u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CountRecord {
    data: String,
    visual: String,
    order: NarrativeOrder,
    count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct OrderRecord {
    order: NarrativeOrder,
    clips: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LevelOrderRecord {
    level: DataLevel,
    order: NarrativeOrder,
    clips: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct StatsFile {
    schema_version: u32,
    counts: Vec<CountRecord>,
    order_totals: Vec<OrderRecord>,
    level_order_counts: Vec<LevelOrderRecord>,
}

impl Serialize for MappingStats {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StatsFile {
            schema_version: SCHEMA_VERSION,
            counts: self
                .counts
                .iter()
                .map(|((data, visual, order), &count)| CountRecord { data: data.clone(), visual: visual.clone(), order: *order, count })
                .collect(),
            order_totals: self.order_totals.iter().map(|(&order, &clips)| OrderRecord { order, clips }).collect(),
            level_order_counts: self
                .level_order_counts
                .iter()
                .map(|(&(level, order), &clips)| LevelOrderRecord { level, order, clips })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MappingStats {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = StatsFile::deserialize(d)?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(serde::de::Error::custom(format!("unsupported schema_version {}", f.schema_version)));
        }
        let mut stats = MappingStats::default();
        for r in f.counts {
            *stats.counts.entry((r.data, r.visual, r.order)).or_default() += r.count;
        }
        for r in f.order_totals {
            *stats.order_totals.entry(r.order).or_default() += r.clips;
        }
        for r in f.level_order_counts {
            *stats.level_order_counts.entry((r.level, r.order)).or_default() += r.clips;
        }
        Ok(stats)
    }
}

impl MappingStats {
    pub fn compile(clips: &[ClipAnnotation]) -> MappingStats {
        let mut stats = MappingStats::default();
        for clip in clips {
            let o = clip.narrative_order;
            *stats.order_totals.entry(o).or_default() += 1;
            *stats.level_order_counts.entry((clip.data_level, o)).or_default() += 1;
            for m in &clip.mappings {
                *stats.counts.entry((m.data.clone(), m.visual.clone(), o)).or_default() += 1;
            }
        }
        stats
    }

    pub fn count(&self, data: &str, visual: &str, order: NarrativeOrder) -> u64 {
        self.counts.get(&(data.to_string(), visual.to_string(), order)).copied().unwrap_or(0)
    }

    /// Number of mapping records under `order`.
    pub fn order_mappings(&self, order: NarrativeOrder) -> u64 {
        self.counts.iter().filter(|((_, _, o), _)| *o == order).map(|(_, &c)| c).sum()
    }

    /// p((d, v) | O), normalized over all mapping records of O; 0 when O has none.
    pub fn conditional_probability(&self, data: &str, visual: &str, order: NarrativeOrder) -> f64 {
        let total = self.order_mappings(order);
        if total == 0 {
            return 0.0;
        }
        self.count(data, visual, order) as f64 / total as f64
    }

    pub fn total_clips(&self) -> u64 {
        self.order_totals.values().sum()
    }

    /// Most frequent schedulable order for clips at `level`; Linear on ties
    /// and on empty statistics.
    pub fn default_order_for_level(&self, level: DataLevel) -> NarrativeOrder {
        let mut best = (NarrativeOrder::Linear, self.level_order_counts.get(&(level, NarrativeOrder::Linear)).copied().unwrap_or(0));
        for o in NarrativeOrder::ALL.into_iter().filter(|o| o.is_schedulable()) {
            let c = self.level_order_counts.get(&(level, o)).copied().unwrap_or(0);
            if c > best.1 {
                best = (o, c);
            }
        }
        best.0
    }

    pub fn summary(&self) -> CorpusSummary {
        let total = self.total_clips();
        let orders = NarrativeOrder::ALL
            .into_iter()
            .map(|order| {
                let clips = self.order_totals.get(&order).copied().unwrap_or(0);
                let ratio = if total == 0 { 0.0 } else { clips as f64 * 100.0 / total as f64 };
                OrderShare { order, clips, percent: ratio }
            })
            .collect();
        let levels = DataLevel::ALL
            .into_iter()
            .map(|level| LevelRow {
                level,
                orders: NarrativeOrder::ALL
                    .into_iter()
                    .map(|o| self.level_order_counts.get(&(level, o)).copied().unwrap_or(0))
                    .collect(),
            })
            .collect();
        CorpusSummary { total_clips: total, orders, levels }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("stats serialization");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderShare {
    pub order: NarrativeOrder,
    pub clips: u64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: DataLevel,
    /// Clip counts in `NarrativeOrder::ALL` order.
    pub orders: Vec<u64>,
}

/// Per-order clip shares, as printed by `corpus stats`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub total_clips: u64,
    pub orders: Vec<OrderShare>,
    pub levels: Vec<LevelRow>,
}

impl CorpusSummary {
    pub fn to_text(&self) -> String {
        let mut out = format!("clips: {}\n", self.total_clips);
        for s in &self.orders {
            out.push_str(&format!("{:<13}{:>4}  {:.1}%\n", s.order.to_string(), s.clips, s.percent));
        }
        out.push_str("\nlevel        ");
        for o in NarrativeOrder::ALL {
            out.push_str(&format!("{:>13}", o.to_string()));
        }
        out.push('\n');
        for row in &self.levels {
            out.push_str(&format!("{:<13}", row.level.to_string()));
            for c in &row.orders {
                out.push_str(&format!("{c:>13}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Attribute → visual defaults used when the corpus has no record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackTable {
    pub schema_version: u32,
    pub entries: BTreeMap<String, String>,
}

const BUILTIN_FALLBACK: &[(&str, &str)] = &[
    ("ball_placement", "Region"),
    ("ball_position", "Dot"),
    ("ball_rotation_speed", "Label"),
    ("ball_speed", "Label"),
    ("ball_trajectory", "Polyline"),
    ("key_stroke", "Spotlight"),
    ("player_name", "Label"),
    ("player_object", "BoundingBox"),
    ("player_position", "Dot"),
    ("player_posture", "Skeleton"),
    ("player_tactic", "Label"),
    ("player_trajectory", "Polyline"),
    ("potential_placements", "HeatmapRegion"),
    ("potential_routes", "Polyline"),
    ("rally_turns", "Label"),
    ("stroke_effect", "Label"),
    ("stroke_technique", "Spotlight"),
    ("table_region", "Region"),
];

impl FallbackTable {
    pub fn builtin() -> Self {
        FallbackTable {
            schema_version: SCHEMA_VERSION,
            entries: BUILTIN_FALLBACK.iter().map(|(d, v)| (d.to_string(), v.to_string())).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: FallbackTable = serde_json::from_str(text)?;
        if t.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: t.schema_version, supported: SCHEMA_VERSION });
        }
        Ok(t)
    }

    pub fn get(&self, data: &str) -> Option<&str> {
        self.entries.get(data).map(String::as_str)
    }
}

impl Default for FallbackTable {
    fn default() -> Self {
        FallbackTable::builtin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecommendationSource {
    Corpus,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub attribute: String,
    pub visual: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    pub source: RecommendationSource,
}

/// Visual maximizing p((d, v) | O); lexicographically smallest visual name
/// on ties; the fallback entry when no record exists for (d, ·, O).
pub fn recommend(stats: &MappingStats, data: &str, order: NarrativeOrder, fallback: &FallbackTable) -> Result<Recommendation> {
    let mut best: Option<(&str, u64)> = None;
    for ((d, v, o), &c) in &stats.counts {
        if d != data || *o != order || c == 0 {
            continue;
        }
        // BTreeMap iteration is ordered by visual name within (d, ·, O), so
        // a strict comparison keeps the first name among equals
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((v, c));
        }
    }
    match best {
        Some((visual, _)) => Ok(Recommendation {
            attribute: data.to_string(),
            visual: visual.to_string(),
            probability: Some(stats.conditional_probability(data, visual, order)),
            source: RecommendationSource::Corpus,
        }),
        None => fallback
            .get(data)
            .map(|visual| Recommendation {
                attribute: data.to_string(),
                visual: visual.to_string(),
                probability: None,
                source: RecommendationSource::Fallback,
            })
            .ok_or_else(|| Error::NoVisual(data.to_string())),
    }
}

pub fn recommend_all(
    stats: &MappingStats,
    data: &[String],
    order: NarrativeOrder,
    fallback: &FallbackTable,
) -> Result<Vec<Recommendation>> {
    data.iter().map(|d| recommend(stats, d, order, fallback)).collect()
}
