//! Augmentation scripts: selected data, the visual each is mapped to, and
//! the narrative order they are presented in.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::analysis::{Analysis, Target};
use crate::design_space::{NarrativeOrder, Visual, VisualFamily, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::hash::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSelection {
    pub selection_id: String,
    pub attribute: String,
    pub subject: Target,
    pub anchor_frame: usize,
    /// Inclusive frame interval the data refers to.
    pub source_span: (usize, usize),
}

/// User style overrides. Unset fields take renderer defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Style {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stroke_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opacity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub font_size: Option<f64>,
    /// Replaces the generated label text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Playback rate of a SlowMotion mapping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

/// Parses `#rrggbb` or `#rrggbbaa`.
pub fn parse_color(s: &str) -> Option<[u8; 4]> {
    let hex = s.strip_prefix('#')?;
    if !(hex.len() == 6 || hex.len() == 8) || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).ok();
    Some([byte(0)?, byte(2)?, byte(4)?, if hex.len() == 8 { byte(6)? } else { 255 }])
}

impl Style {
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.color {
            if parse_color(c).is_none() {
                return Err(Error::Script(format!("color {c:?} is not #rrggbb or #rrggbbaa")));
            }
        }
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x.is_finite() && x > 0.0) => Err(Error::Script(format!("{name} must be positive, got {x}"))),
            _ => Ok(()),
        };
        positive("stroke_width", self.stroke_width)?;
        positive("font_size", self.font_size)?;
        if let Some(o) = self.opacity {
            if !(0.0..=1.0).contains(&o) {
                return Err(Error::Script(format!("opacity must lie in [0, 1], got {o}")));
            }
        }
        if let Some(r) = self.rate {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Script(format!("rate must lie in (0, 1), got {r}")));
            }
        }
        Ok(())
    }

    /// Applies the set fields of `patch` over `self`.
    pub fn merged(&self, patch: &Style) -> Style {
        Style {
            color: patch.color.clone().or_else(|| self.color.clone()),
            stroke_width: patch.stroke_width.or(self.stroke_width),
            opacity: patch.opacity.or(self.opacity),
            font_size: patch.font_size.or(self.font_size),
            text: patch.text.clone().or_else(|| self.text.clone()),
            rate: patch.rate.or(self.rate),
        }
    }
}

fn first_pass() -> u8 {
    1
}

fn is_first_pass(p: &u8) -> bool {
    *p == 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptMapping {
    pub mapping_id: String,
    pub selection: DataSelection,
    pub visual: Visual,
    #[serde(default)]
    pub style: Style,
    /// Frames the video holds while this mapping is revealed; defaults to two seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold_frames: Option<usize>,
    /// ZigZag pass the mapping belongs to (1 = first play, 2 = replay).
    #[serde(default = "first_pass", skip_serializing_if = "is_first_pass")]
    pub pass: u8,
}

impl ScriptMapping {
    pub fn is_mark(&self) -> bool {
        self.visual.family() == VisualFamily::GraphicalMark
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZigZagSpec {
    pub anchor: usize,
    pub rewind_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeForkSpec {
    /// Frame the video holds on; defaults to the earliest mapping anchor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<usize>,
    pub hypothetical: Vec<String>,
    pub actual: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationScript {
    pub schema_version: u32,
    pub script_id: String,
    /// Inclusive frame interval of the clip.
    pub clip: (usize, usize),
    pub order: NarrativeOrder,
    pub mappings: Vec<ScriptMapping>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zigzag: Option<ZigZagSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timefork: Option<TimeForkSpec>,
}

impl AugmentationScript {
    pub fn new(script_id: impl Into<String>, clip: (usize, usize), order: NarrativeOrder) -> Self {
        AugmentationScript {
            schema_version: SCHEMA_VERSION,
            script_id: script_id.into(),
            clip,
            order,
            mappings: Vec::new(),
            zigzag: None,
            timefork: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: AugmentationScript = serde_json::from_str(text)?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: s.schema_version, supported: SCHEMA_VERSION });
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("script serialization");
        s.push('\n');
        s
    }

    /// Content hash of the canonical JSON form.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("script serialization").as_bytes())
    }

    pub fn mapping(&self, id: &str) -> Option<&ScriptMapping> {
        self.mappings.iter().find(|m| m.mapping_id == id)
    }

    /// Next free `m<N>` mapping id.
    pub fn next_mapping_id(&self) -> String {
        let n = self
            .mappings
            .iter()
            .filter_map(|m| m.mapping_id.strip_prefix('m').and_then(|d| d.parse::<usize>().ok()))
            .max()
            .map_or(1, |n| n + 1);
        format!("m{n}")
    }

    /// Structural checks that need only the clip length.
    pub fn validate(&self, frame_count: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Script(msg));
        let (t0, t1) = self.clip;
        if t0 > t1 || t1 >= frame_count {
            return bad(format!("clip [{t0}, {t1}] is not within frames 0..{frame_count}"));
        }
        if !self.order.is_schedulable() {
            return Err(Error::UnsupportedOrder(self.order));
        }
        let mut ids = BTreeSet::new();
        for m in &self.mappings {
            if m.mapping_id.is_empty() || !ids.insert(m.mapping_id.as_str()) {
                return bad(format!("mapping id {:?} is empty or repeated", m.mapping_id));
            }
            let s = &m.selection;
            if !(t0..=t1).contains(&s.anchor_frame) {
                return bad(format!("mapping {}: anchor frame {} outside the clip", m.mapping_id, s.anchor_frame));
            }
            let (a, b) = s.source_span;
            if !(a <= s.anchor_frame && s.anchor_frame <= b) {
                return bad(format!("mapping {}: source span [{a}, {b}] must contain the anchor frame", m.mapping_id));
            }
            if !(1..=2).contains(&m.pass) || (m.pass == 2 && self.order != NarrativeOrder::ZigZag) {
                return bad(format!("mapping {}: pass {} is only valid as 1, or 2 under ZigZag", m.mapping_id, m.pass));
            }
            m.style.validate().map_err(|e| Error::Script(format!("mapping {}: {e}", m.mapping_id)))?;
        }
        match (self.order, &self.zigzag) {
            (NarrativeOrder::ZigZag, Some(z)) => {
                if !(t0..=t1).contains(&z.anchor) {
                    return bad(format!("zigzag anchor {} outside the clip", z.anchor));
                }
                if z.rewind_frames == 0 || z.rewind_frames > z.anchor - t0 + 1 {
                    return bad(format!(
                        "zigzag rewind of {} frames from {} exceeds the clip start {t0}",
                        z.rewind_frames, z.anchor
                    ));
                }
            }
            (NarrativeOrder::ZigZag, None) => return bad("ZigZag scripts need a zigzag section".into()),
            (_, Some(_)) => return bad("zigzag section is only valid for ZigZag scripts".into()),
            _ => {}
        }
        match (self.order, &self.timefork) {
            (NarrativeOrder::TimeFork, Some(tf)) => {
                let marks: BTreeSet<&str> = self.mappings.iter().filter(|m| m.is_mark()).map(|m| m.mapping_id.as_str()).collect();
                let hyp: BTreeSet<&str> = tf.hypothetical.iter().map(String::as_str).collect();
                let act: BTreeSet<&str> = tf.actual.iter().map(String::as_str).collect();
                if hyp.len() != tf.hypothetical.len() || act.len() != tf.actual.len() || !hyp.is_disjoint(&act) {
                    return bad("timefork lists must not repeat ids".into());
                }
                let listed: BTreeSet<&str> = hyp.union(&act).copied().collect();
                if listed != marks {
                    return bad("timefork lists must name every graphical mapping exactly once".into());
                }
                if let Some(a) = tf.anchor {
                    if !(t0..=t1).contains(&a) {
                        return bad(format!("timefork anchor {a} outside the clip"));
                    }
                }
            }
            (NarrativeOrder::TimeFork, None) => return bad("TimeFork scripts need a timefork section".into()),
            (_, Some(_)) => return bad("timefork section is only valid for TimeFork scripts".into()),
            _ => {}
        }
        Ok(())
    }

    /// Structural checks plus data availability: every selection must name a
    /// registry attribute of its subject that resolves at its anchor.
    pub fn validate_with(&self, analysis: &Analysis) -> Result<()> {
        self.validate(analysis.frame_count())?;
        for m in &self.mappings {
            let s = &m.selection;
            let kind = analysis
                .registry
                .attribute(&s.attribute)
                .map_err(|_| Error::Script(format!("mapping {}: unknown attribute {:?}", m.mapping_id, s.attribute)))?;
            if kind.subject != s.subject.subject() {
                return Err(Error::Script(format!(
                    "mapping {}: {} is not an attribute of {}",
                    m.mapping_id, s.attribute, s.subject
                )));
            }
            if m.is_mark() && analysis.resolve(&s.attribute, s.subject, s.anchor_frame).is_none() {
                return Err(Error::DataMissing { attribute: s.attribute.clone(), frame: s.anchor_frame });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapping(id: &str, frame: usize) -> ScriptMapping {
        ScriptMapping {
            mapping_id: id.into(),
            selection: DataSelection {
                selection_id: format!("s-{id}"),
                attribute: "ball_position".into(),
                subject: Target::Ball,
                anchor_frame: frame,
                source_span: (frame, frame + 5),
            },
            visual: Visual::Dot,
            style: Style::default(),
            hold_frames: None,
            pass: 1,
        }
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let mut s = AugmentationScript::new("s1", (0, 99), NarrativeOrder::Linear);
        s.mappings.push(mapping("m1", 10));
        let text = s.to_json();
        assert!(!text.contains("\"pass\""));
        let back = AugmentationScript::from_json(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.digest(), s.digest());
        assert_eq!(s.next_mapping_id(), "m2");
    }

    #[test]
    fn structural_errors() {
        let mut s = AugmentationScript::new("s", (0, 99), NarrativeOrder::Grouped);
        assert!(matches!(s.validate(100), Err(Error::UnsupportedOrder(NarrativeOrder::Grouped))));
        s.order = NarrativeOrder::ZigZag;
        s.zigzag = Some(ZigZagSpec { anchor: 10, rewind_frames: 20 });
        assert!(s.validate(100).unwrap_err().to_string().contains("exceeds the clip start"));
        s.zigzag = Some(ZigZagSpec { anchor: 60, rewind_frames: 20 });
        s.validate(100).unwrap();
        s.mappings.push(mapping("m1", 120));
        assert!(s.validate(200).is_err());
        s.mappings[0] = mapping("m1", 10);
        s.mappings.push(mapping("m1", 20));
        assert!(s.validate(100).unwrap_err().to_string().contains("repeated"));
    }

    #[test]
    fn style_checks() {
        assert_eq!(parse_color("#ff0000"), Some([255, 0, 0, 255]));
        assert_eq!(parse_color("#00000080"), Some([0, 0, 0, 128]));
        assert!(parse_color("red").is_none());
        assert!(Style { stroke_width: Some(-1.0), ..Style::default() }.validate().is_err());
        assert!(Style { opacity: Some(1.5), ..Style::default() }.validate().is_err());
        let base = Style { color: Some("#ffffff".into()), ..Style::default() };
        let merged = base.merged(&Style { stroke_width: Some(3.0), ..Style::default() });
        assert_eq!((merged.color.as_deref(), merged.stroke_width), (Some("#ffffff"), Some(3.0)));
    }
}
