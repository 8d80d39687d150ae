//! Design-space vocabulary: data levels, narrative orders, the attribute and
//! visual registries, and corpus clip annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version stamped into every JSON document this crate reads or writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Version of the built-in attribute and visual registries.
pub const REGISTRY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DataCategory {
    Tracking,
    NonTracking,
}

/// Semantic level of a piece of data, from raw frames up to tactics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DataLevel {
    Image,
    Object,
    Event,
    Tactic,
}

impl DataLevel {
    pub const ALL: [DataLevel; 4] = [DataLevel::Image, DataLevel::Object, DataLevel::Event, DataLevel::Tactic];

    pub fn rank(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for DataLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for DataLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DataLevel::ALL
            .into_iter()
            .find(|l| l.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown data level {s:?}")))
    }
}

/// Intended audience effect. Each purpose caps the data level that may be selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NarrativePurpose {
    Entertainment,
    Middle,
    Education,
}

impl NarrativePurpose {
    pub fn level_filter(self) -> DataLevel {
        match self {
            NarrativePurpose::Entertainment => DataLevel::Object,
            NarrativePurpose::Middle => DataLevel::Event,
            NarrativePurpose::Education => DataLevel::Tactic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NarrativeOrder {
    Linear,
    FlashForward,
    FlashBack,
    TimeFork,
    ZigZag,
    Grouped,
}

impl NarrativeOrder {
    pub const ALL: [NarrativeOrder; 6] = [
        NarrativeOrder::Linear,
        NarrativeOrder::FlashForward,
        NarrativeOrder::FlashBack,
        NarrativeOrder::TimeFork,
        NarrativeOrder::ZigZag,
        NarrativeOrder::Grouped,
    ];

    /// Grouped (picture-in-picture) is recorded in annotations but never scheduled.
    pub fn is_schedulable(self) -> bool {
        self != NarrativeOrder::Grouped
    }
}

impl fmt::Display for NarrativeOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for NarrativeOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        NarrativeOrder::ALL
            .into_iter()
            .find(|o| o.to_string().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| Error::invalid(format!("unknown narrative order {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subject {
    Ball,
    Player,
    Table,
    Rally,
}

impl FromStr for Subject {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Ball" | "ball" => Ok(Subject::Ball),
            "Player" | "player" => Ok(Subject::Player),
            "Table" | "table" => Ok(Subject::Table),
            "Rally" | "rally" => Ok(Subject::Rally),
            _ => Err(Error::invalid(format!("unknown subject {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataAttributeKind {
    pub name: String,
    pub level: DataLevel,
    pub category: DataCategory,
    pub subject: Subject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VisualFamily {
    GraphicalMark,
    VideoEffect,
}

/// Closed visual vocabulary understood by the renderer and scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Visual {
    Label,
    Dot,
    Polyline,
    Arrow,
    Region,
    HeatmapRegion,
    Spotlight,
    Skeleton,
    BoundingBox,
    Pause,
    SlowMotion,
    Repeat,
}

impl Visual {
    pub const ALL: [Visual; 12] = [
        Visual::Label,
        Visual::Dot,
        Visual::Polyline,
        Visual::Arrow,
        Visual::Region,
        Visual::HeatmapRegion,
        Visual::Spotlight,
        Visual::Skeleton,
        Visual::BoundingBox,
        Visual::Pause,
        Visual::SlowMotion,
        Visual::Repeat,
    ];

    pub fn family(self) -> VisualFamily {
        match self {
            Visual::Pause | Visual::SlowMotion | Visual::Repeat => VisualFamily::VideoEffect,
            _ => VisualFamily::GraphicalMark,
        }
    }

    pub fn name(self) -> String {
        format!("{self:?}")
    }
}

impl fmt::Display for Visual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Visual {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Visual::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown visual {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualKind {
    pub name: String,
    pub family: VisualFamily,
}

/// Attribute entry as it appears in a registry file. The subject stays a
/// string so that unknown subjects surface as violations instead of parse errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeRecord {
    pub name: String,
    pub level: DataLevel,
    pub category: DataCategory,
    pub subject: String,
}

impl From<&DataAttributeKind> for AttributeRecord {
    fn from(a: &DataAttributeKind) -> Self {
        AttributeRecord {
            name: a.name.clone(),
            level: a.level,
            category: a.category,
            subject: format!("{:?}", a.subject),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateName { name: String },
    LevelMismatch { name: String, declared: DataLevel, expected: DataLevel },
    UnknownSubject { name: String, subject: String },
    DuplicateVisual { name: String },
    UnknownVisual { name: String },
    FamilyMismatch { name: String, declared: VisualFamily, expected: VisualFamily },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateName { name } => write!(f, "duplicate name: {name}"),
            Violation::LevelMismatch { name, declared, expected } => {
                write!(f, "level mismatch: {name} declared {declared}, expected {expected}")
            }
            Violation::UnknownSubject { name, subject } => {
                write!(f, "unknown subject: {name} references {subject:?}")
            }
            Violation::DuplicateVisual { name } => write!(f, "duplicate name: visual {name}"),
            Violation::UnknownVisual { name } => write!(f, "unknown visual: {name}"),
            Violation::FamilyMismatch { name, declared, expected } => {
                write!(f, "family mismatch: {name} declared {declared:?}, expected {expected:?}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

// (name, level, category, subject)
const BUILTIN_ATTRIBUTES: &[(&str, DataLevel, DataCategory, Subject)] = {
    use DataCategory::*;
    use DataLevel::*;
    use Subject::*;
    &[
        ("ball_position", Object, Tracking, Ball),
        ("ball_trajectory", Object, Tracking, Ball),
        ("ball_speed", Object, Tracking, Ball),
        ("ball_rotation_speed", Event, Tracking, Ball),
        ("ball_placement", Event, Tracking, Ball),
        ("potential_placements", Tactic, Tracking, Ball),
        ("potential_routes", Tactic, Tracking, Ball),
        ("player_object", Object, Tracking, Player),
        ("player_position", Object, Tracking, Player),
        ("player_trajectory", Object, Tracking, Player),
        ("player_posture", Object, Tracking, Player),
        ("player_name", Object, NonTracking, Player),
        ("stroke_technique", Event, Tracking, Player),
        ("stroke_effect", Tactic, Tracking, Player),
        ("player_tactic", Tactic, Tracking, Player),
        ("key_stroke", Tactic, Tracking, Player),
        ("table_region", Object, Tracking, Table),
        ("rally_turns", Event, Tracking, Rally),
    ]
};

/// Canonical level of a built-in attribute name, if it is one.
pub fn canonical_level(name: &str) -> Option<DataLevel> {
    BUILTIN_ATTRIBUTES.iter().find(|a| a.0 == name).map(|a| a.1)
}

/// Checks attribute and visual records for duplicate names, level mismatches
/// against the canonical table, unknown subjects and visual family errors.
pub fn validate_registry(attributes: &[AttributeRecord], visuals: &[VisualKind]) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    for a in attributes {
        if !seen.insert(a.name.as_str()) {
            violations.push(Violation::DuplicateName { name: a.name.clone() });
        }
        if let Some(expected) = canonical_level(&a.name) {
            if expected != a.level {
                violations.push(Violation::LevelMismatch {
                    name: a.name.clone(),
                    declared: a.level,
                    expected,
                });
            }
        }
        if a.subject.parse::<Subject>().is_err() {
            violations.push(Violation::UnknownSubject { name: a.name.clone(), subject: a.subject.clone() });
        }
    }
    let mut seen = BTreeSet::new();
    for v in visuals {
        if !seen.insert(v.name.as_str()) {
            violations.push(Violation::DuplicateVisual { name: v.name.clone() });
        }
        match v.name.parse::<Visual>() {
            Ok(known) if known.family() != v.family => violations.push(Violation::FamilyMismatch {
                name: v.name.clone(),
                declared: v.family,
                expected: known.family(),
            }),
            Ok(_) => {}
            Err(_) => violations.push(Violation::UnknownVisual { name: v.name.clone() }),
        }
    }
    ValidationReport { violations }
}

/// Registry file layout (`schema_version`, `attributes`, `visuals`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryFile {
    pub schema_version: u32,
    #[serde(default)]
    pub attributes: Vec<AttributeRecord>,
    #[serde(default)]
    pub visuals: Vec<VisualKind>,
}

/// Validated attribute and visual registries.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    attributes: BTreeMap<String, DataAttributeKind>,
    visuals: BTreeMap<String, VisualKind>,
}

impl Registry {
    pub fn builtin() -> Self {
        let attributes = BUILTIN_ATTRIBUTES
            .iter()
            .map(|&(name, level, category, subject)| {
                (name.to_string(), DataAttributeKind { name: name.to_string(), level, category, subject })
            })
            .collect();
        let visuals = Visual::ALL
            .iter()
            .map(|v| (v.name(), VisualKind { name: v.name(), family: v.family() }))
            .collect();
        Registry { attributes, visuals }
    }

    pub fn from_records(attributes: &[AttributeRecord], visuals: &[VisualKind]) -> Result<Self> {
        let report = validate_registry(attributes, visuals);
        if !report.is_ok() {
            return Err(Error::Registry(report));
        }
        let attributes = attributes
            .iter()
            .map(|a| {
                let kind = DataAttributeKind {
                    name: a.name.clone(),
                    level: a.level,
                    category: a.category,
                    subject: a.subject.parse().expect("validated"),
                };
                (a.name.clone(), kind)
            })
            .collect();
        let visuals = visuals.iter().map(|v| (v.name.clone(), v.clone())).collect();
        Ok(Registry { attributes, visuals })
    }

    /// The built-in registry extended with the entries of a user file. User
    /// entries may not redefine built-in names.
    pub fn extended(file: &RegistryFile) -> Result<Self> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: file.schema_version, supported: SCHEMA_VERSION });
        }
        let base = Registry::builtin();
        let mut attrs: Vec<AttributeRecord> = base.attributes.values().map(AttributeRecord::from).collect();
        attrs.extend(file.attributes.iter().cloned());
        let mut visuals: Vec<VisualKind> = base.visuals.values().cloned().collect();
        visuals.extend(file.visuals.iter().cloned());
        Registry::from_records(&attrs, &visuals)
    }

    pub fn attribute(&self, name: &str) -> Result<&DataAttributeKind> {
        self.attributes
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown attribute {name:?}")))
    }

    pub fn level_of(&self, name: &str) -> Result<DataLevel> {
        self.attribute(name).map(|a| a.level)
    }

    pub fn attributes(&self) -> impl Iterator<Item = &DataAttributeKind> {
        self.attributes.values()
    }

    pub fn visual(&self, name: &str) -> Option<&VisualKind> {
        self.visuals.get(name)
    }

    pub fn visuals(&self) -> impl Iterator<Item = &VisualKind> {
        self.visuals.values()
    }

    pub fn contains_attribute(&self, name: &str) -> bool {
        self.attributes.contains_key(name)
    }
}

impl Default for Registry {
    fn default() -> Self {
        Registry::builtin()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VisualMapping {
    pub data: String,
    pub visual: String,
}

/// One annotated clip of the reference corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipAnnotation {
    pub clip_id: String,
    pub sport: String,
    pub data_level: DataLevel,
    pub narrative_order: NarrativeOrder,
    pub mappings: Vec<VisualMapping>,
    #[serde(default)]
    pub source: String,
}

impl ClipAnnotation {
    pub fn validate(&self, registry: &Registry) -> Result<()> {
        if self.mappings.is_empty() {
            return Err(Error::invalid(format!("clip {}: mappings must be non-empty", self.clip_id)));
        }
        let mut max = DataLevel::Image;
        for m in &self.mappings {
            let level = registry
                .level_of(&m.data)
                .map_err(|_| Error::invalid(format!("clip {}: unknown attribute {:?}", self.clip_id, m.data)))?;
            if registry.visual(&m.visual).is_none() {
                return Err(Error::invalid(format!("clip {}: unknown visual {:?}", self.clip_id, m.visual)));
            }
            max = max.max(level);
        }
        if max != self.data_level {
            return Err(Error::invalid(format!(
                "clip {}: data_level {} differs from highest mapped level {}",
                self.clip_id, self.data_level, max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub schema_version: u32,
    pub clips: Vec<ClipAnnotation>,
}

impl AnnotationFile {
    pub fn from_json(text: &str, registry: &Registry) -> Result<Self> {
        let file: AnnotationFile = serde_json::from_str(text)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: file.schema_version, supported: SCHEMA_VERSION });
        }
        for clip in &file.clips {
            clip.validate(registry)?;
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("annotation serialization");
        s.push('\n');
        s
    }
}

/// The corpus bundled with the crate.
pub fn bundled_corpus() -> AnnotationFile {
    AnnotationFile::from_json(include_str!("../data/corpus.json"), &Registry::builtin())
        .expect("bundled corpus is valid")
}
