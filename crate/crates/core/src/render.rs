//! Overlay rendering: script mappings realized as screen-space items, one
//! SVG document per output frame, and optional compositing onto source images.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{Analysis, DataValue, Target};
use crate::design_space::{DataCategory, DataLevel, NarrativeOrder, Visual, SCHEMA_VERSION};
use crate::error::{read_bytes, write_bytes, Error, Result};
use crate::geom::{BBox, Point2};
use crate::hash::sha256_hex;
use crate::scheduler::{Effect, FrameKind, OutputFrame, Phase, RenderSchedule};
use crate::script::{parse_color, AugmentationScript, ScriptMapping};
use crate::tracking::SKELETON_BONES;

type P = Point2<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Geometry {
    Circle { center: P, radius: f64 },
    Polylines { paths: Vec<WeightedPolyline>, arrow: bool },
    Polygons { polygons: Vec<WeightedPolygon> },
    Ellipse { center: P, rx: f64, ry: f64 },
    Rect { bbox: BBox<f64> },
    Skeleton { points: Vec<Option<P>>, bones: Vec<(usize, usize)> },
    Text { text: String, anchor: P },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPolyline {
    pub points: Vec<P>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPolygon {
    pub points: Vec<P>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemStyle {
    pub color: [u8; 4],
    pub stroke_width: f64,
    pub font_size: f64,
    pub opacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayItem {
    pub mapping_id: String,
    pub visual: Visual,
    pub geometry: Geometry,
    pub style: ItemStyle,
    pub z: i32,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayFrame {
    pub output_index: usize,
    pub source_frame: usize,
    pub canvas: (u32, u32),
    pub items: Vec<OverlayItem>,
    /// Mappings whose data could not be resolved at this frame.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
}

/// Default colors and sizes; every field can be overridden per mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderDefaults {
    pub player_colors: [String; 2],
    pub palette: Vec<String>,
    pub stroke_width: f64,
    pub font_size: f64,
    pub dot_radius: f64,
}

impl Default for RenderDefaults {
    fn default() -> Self {
        RenderDefaults {
            player_colors: ["#d62728".into(), "#000000".into()],
            palette: ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22"]
                .map(String::from)
                .to_vec(),
            stroke_width: 4.0,
            font_size: 32.0,
            dot_radius: 8.0,
        }
    }
}

impl RenderDefaults {
    pub fn validate(&self) -> Result<()> {
        if self.palette.is_empty() {
            return Err(Error::invalid("palette must not be empty"));
        }
        for c in self.player_colors.iter().chain(&self.palette) {
            if parse_color(c).is_none() {
                return Err(Error::invalid(format!("color {c:?} is not #rrggbb or #rrggbbaa")));
            }
        }
        for (name, v) in [("stroke_width", self.stroke_width), ("font_size", self.font_size), ("dot_radius", self.dot_radius)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

pub fn z_of(visual: Visual) -> i32 {
    match visual {
        Visual::HeatmapRegion | Visual::Region => 0,
        Visual::Spotlight => 1,
        Visual::Polyline | Visual::Arrow => 2,
        Visual::Skeleton | Visual::BoundingBox => 3,
        Visual::Dot => 4,
        Visual::Label => 5,
        Visual::Pause | Visual::SlowMotion | Visual::Repeat => 6,
    }
}

/// Heatmap cell alpha for probability `p` given the largest probability.
pub fn heat_alpha(p: f64, pmax: f64) -> f64 {
    if pmax > 0.0 {
        0.8 * p / pmax
    } else {
        0.0
    }
}

/// Label text for a resolved value.
pub fn label_text(value: &DataValue) -> String {
    match value {
        DataValue::Scalar { value, unit } => format!("{value:.0} {unit}"),
        DataValue::Text { text } => text.clone(),
        DataValue::Point { point } => format!("({:.0}, {:.0})", point.x, point.y),
        DataValue::Path { points } => format!("{} points", points.len()),
        DataValue::Cell { half, zone, .. } => format!("{half} zone {zone}"),
        DataValue::Distribution { cells } => {
            let best = cells.iter().fold(None::<&crate::analysis::WeightedCell>, |b, c| match b {
                Some(b) if b.probability >= c.probability => Some(b),
                _ => Some(c),
            });
            best.map_or_else(String::new, |c| format!("{} zone {}: {:.0}%", c.half, c.zone, c.probability * 100.0))
        }
        DataValue::Routes { routes } => format!("{} routes", routes.len()),
        DataValue::Box { .. } => String::new(),
        DataValue::Posture { .. } => String::new(),
        DataValue::Polygon { .. } => "table".into(),
        DataValue::Spans { spans } => format!("{} turns", spans.len()),
    }
}

/// Frame a mapping's data is read at when shown at `frame`. Object-level
/// tracking data follows playback within the mapping's span; everything
/// else stays pinned to the selection anchor.
fn data_frame(analysis: &Analysis, m: &ScriptMapping, frame: usize) -> usize {
    let s = &m.selection;
    let dynamic = analysis
        .registry
        .attribute(&s.attribute)
        .is_ok_and(|a| a.level == DataLevel::Object && a.category == DataCategory::Tracking);
    if dynamic {
        frame.clamp(s.anchor_frame, s.source_span.1.max(s.anchor_frame))
    } else {
        s.anchor_frame
    }
}

fn mapping_color(m: &ScriptMapping, index: usize, defaults: &RenderDefaults) -> [u8; 4] {
    let base = match (&m.style.color, m.selection.subject) {
        (Some(c), _) => c.clone(),
        (None, Target::Player(p)) => defaults.player_colors[p as usize].clone(),
        (None, _) => defaults.palette[index % defaults.palette.len()].clone(),
    };
    parse_color(&base).unwrap_or([0, 0, 0, 255])
}

fn subject_box(analysis: &Analysis, target: Target, frame: usize) -> Option<BBox<f64>> {
    let f = analysis.dataset.frames.get(frame)?;
    match target {
        Target::Player(p) => f.player(p).map(|d| d.bbox),
        Target::Ball => {
            let c = analysis.track.center(frame)?;
            let b = f.ball.as_ref().map_or(BBox::new(c.x - 8.0, c.y - 8.0, 16.0, 16.0), |b| b.bbox);
            Some(BBox::new(c.x - b.w / 2.0, c.y - b.h / 2.0, b.w, b.h))
        }
        _ => None,
    }
}

/// Builds the overlay item of mapping `index` of `script` at source `frame`.
pub fn realize_item(
    script: &AugmentationScript,
    index: usize,
    analysis: &Analysis,
    frame: usize,
    phase: Phase,
    ramp_factor: f64,
    defaults: &RenderDefaults,
) -> Result<Option<OverlayItem>> {
    let m = &script.mappings[index];
    if !m.is_mark() {
        return Ok(None);
    }
    let s = &m.selection;
    let at = data_frame(analysis, m, frame);
    let missing = || Error::DataMissing { attribute: s.attribute.clone(), frame: at };
    let value = analysis.resolve(&s.attribute, s.subject, at).ok_or_else(missing)?;
    let value = match (&value, s.attribute.as_str()) {
        // a trajectory spans from the selection start up to the current frame,
        // or the whole span while shown ahead of it
        (DataValue::Path { .. }, "ball_trajectory" | "player_trajectory") => {
            let end = if frame < s.anchor_frame { s.source_span.1 } else { at };
            let points = analysis.trajectory(s.subject, s.source_span.0, end).ok_or_else(missing)?;
            DataValue::Path { points }
        }
        _ => value,
    };
    let color = mapping_color(m, index, defaults);
    let style = ItemStyle {
        color,
        stroke_width: m.style.stroke_width.unwrap_or(defaults.stroke_width),
        font_size: m.style.font_size.unwrap_or(defaults.font_size),
        opacity: m.style.opacity.unwrap_or(1.0) * ramp_factor,
    };
    let incompatible = || Error::Script(format!("{} cannot show {}", m.visual, s.attribute));
    let anchor = || analysis.anchor_point(s.subject, at).ok_or_else(missing);
    let geometry = match m.visual {
        Visual::Label => {
            let text = m.style.text.clone().unwrap_or_else(|| label_text(&value));
            let a = anchor()?;
            Geometry::Text { text, anchor: Point2::new(a.x, a.y - 24.0) }
        }
        Visual::Dot => {
            let center = match &value {
                DataValue::Point { point } => *point,
                DataValue::Box { bbox } => bbox.center(),
                DataValue::Path { points } => *points.last().ok_or_else(missing)?,
                _ => anchor()?,
            };
            Geometry::Circle { center, radius: defaults.dot_radius }
        }
        Visual::Polyline | Visual::Arrow => {
            let paths = match &value {
                DataValue::Path { points } => vec![WeightedPolyline { points: points.clone(), alpha: 1.0 }],
                DataValue::Routes { routes } => {
                    let pmax = routes.iter().map(|r| r.probability).fold(0.0, f64::max);
                    routes
                        .iter()
                        .map(|r| WeightedPolyline { points: r.points.clone(), alpha: if pmax > 0.0 { r.probability / pmax } else { 0.0 } })
                        .collect()
                }
                _ => return Err(incompatible()),
            };
            Geometry::Polylines { paths, arrow: m.visual == Visual::Arrow }
        }
        Visual::Region | Visual::HeatmapRegion => {
            let heat = m.visual == Visual::HeatmapRegion;
            let flat = if heat { 0.8 } else { 0.35 };
            let polygons = match &value {
                DataValue::Distribution { cells } => {
                    let pmax = cells.iter().map(|c| c.probability).fold(0.0, f64::max);
                    cells
                        .iter()
                        .filter(|c| heat || c.probability > 0.0)
                        .map(|c| WeightedPolygon {
                            points: c.polygon.to_vec(),
                            alpha: if heat { heat_alpha(c.probability, pmax) } else { flat },
                        })
                        .collect()
                }
                DataValue::Cell { polygon, .. } => vec![WeightedPolygon { points: polygon.to_vec(), alpha: flat }],
                DataValue::Polygon { points } => vec![WeightedPolygon { points: points.clone(), alpha: flat }],
                DataValue::Box { bbox } => vec![WeightedPolygon { points: box_points(bbox), alpha: flat }],
                _ => return Err(incompatible()),
            };
            Geometry::Polygons { polygons }
        }
        Visual::Spotlight => {
            let b = subject_box(analysis, s.subject, at).ok_or_else(incompatible)?;
            let c = b.center();
            let r = if s.subject == Target::Ball { 30.0 } else { 0.0 };
            Geometry::Ellipse { center: c, rx: (b.w * 0.6).max(r), ry: (b.h * 0.6).max(r) }
        }
        Visual::Skeleton => match &value {
            DataValue::Posture { keypoints } => {
                let bones = SKELETON_BONES
                    .iter()
                    .copied()
                    .filter(|&(a, b)| keypoints[a].is_some() && keypoints[b].is_some())
                    .collect();
                Geometry::Skeleton { points: keypoints.clone(), bones }
            }
            _ => return Err(incompatible()),
        },
        Visual::BoundingBox => match &value {
            DataValue::Box { bbox } => Geometry::Rect { bbox: *bbox },
            _ => Geometry::Rect { bbox: subject_box(analysis, s.subject, at).ok_or_else(incompatible)? },
        },
        Visual::Pause | Visual::SlowMotion | Visual::Repeat => return Ok(None),
    };
    Ok(Some(OverlayItem { mapping_id: m.mapping_id.clone(), visual: m.visual, geometry, style, z: z_of(m.visual), phase }))
}

fn box_points(b: &BBox<f64>) -> Vec<P> {
    vec![
        Point2::new(b.x, b.y),
        Point2::new(b.x + b.w, b.y),
        Point2::new(b.x + b.w, b.y + b.h),
        Point2::new(b.x, b.y + b.h),
    ]
}

/// Realizes every active item of one output frame, sorted by z then mapping id.
pub fn realize_frame(
    frame: &OutputFrame,
    script: &AugmentationScript,
    analysis: &Analysis,
    defaults: &RenderDefaults,
) -> Result<OverlayFrame> {
    let mut items = Vec::new();
    let mut missing = Vec::new();
    for active in &frame.items {
        let index = script
            .mappings
            .iter()
            .position(|m| m.mapping_id == active.mapping_id)
            .ok_or_else(|| Error::Script(format!("schedule references unknown mapping {}", active.mapping_id)))?;
        match realize_item(script, index, analysis, frame.source_frame, active.phase, active.ramp_factor(), defaults) {
            Ok(Some(item)) => items.push(item),
            Ok(None) => {}
            Err(Error::DataMissing { .. }) => missing.push(active.mapping_id.clone()),
            Err(e) => return Err(e),
        }
    }
    items.sort_by(|a, b| a.z.cmp(&b.z).then_with(|| a.mapping_id.cmp(&b.mapping_id)));
    missing.sort();
    let v = &analysis.dataset.video;
    Ok(OverlayFrame { output_index: frame.index, source_frame: frame.source_frame, canvas: (v.width, v.height), items, missing })
}

pub fn realize_all(
    schedule: &RenderSchedule,
    script: &AugmentationScript,
    analysis: &Analysis,
    defaults: &RenderDefaults,
) -> Result<Vec<OverlayFrame>> {
    schedule.output_frames.par_iter().map(|f| realize_frame(f, script, analysis, defaults)).collect()
}

/// Fixed six-decimal formatting with negative zero folded to zero.
pub fn num(v: f64) -> String {
    let s = format!("{v:.6}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn rgb(c: [u8; 4]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(ch),
        }
    }
    out
}

fn points_attr(points: &[P]) -> String {
    points.iter().map(|p| format!("{},{}", num(p.x), num(p.y))).collect::<Vec<_>>().join(" ")
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Creation => "creation",
        Phase::Sustain => "sustain",
        Phase::Destruction => "destruction",
    }
}

/// Serializes one overlay frame as a standalone SVG document.
pub fn render_svg(frame: &OverlayFrame) -> String {
    let (w, h) = frame.canvas;
    let mut out = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    out.push('\n');
    for item in &frame.items {
        let st = &item.style;
        let color = rgb(st.color);
        let alpha = f64::from(st.color[3]) / 255.0;
        let _ = writeln!(
            out,
            r#"<g data-mapping="{}" data-visual="{}" data-phase="{}" opacity="{}">"#,
            escape(&item.mapping_id),
            item.visual,
            phase_name(item.phase),
            num(st.opacity.clamp(0.0, 1.0))
        );
        let sw = num(st.stroke_width);
        match &item.geometry {
            Geometry::Circle { center, radius } => {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{}" cy="{}" r="{}" fill="{color}" fill-opacity="{}"/>"#,
                    num(center.x),
                    num(center.y),
                    num(*radius),
                    num(alpha)
                );
            }
            Geometry::Polylines { paths, arrow } => {
                for p in paths {
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{sw}" stroke-opacity="{}" stroke-linejoin="round" stroke-linecap="round"/>"#,
                        points_attr(&p.points),
                        num(alpha * p.alpha)
                    );
                    if *arrow && p.points.len() >= 2 {
                        let tip = p.points[p.points.len() - 1];
                        let prev = p.points[p.points.len() - 2];
                        let head = arrow_head(prev, tip, st.stroke_width * 4.0);
                        let _ = writeln!(
                            out,
                            r#"<polygon points="{}" fill="{color}" fill-opacity="{}"/>"#,
                            points_attr(&head),
                            num(alpha * p.alpha)
                        );
                    }
                }
            }
            Geometry::Polygons { polygons } => {
                for p in polygons {
                    let _ = writeln!(
                        out,
                        r#"<polygon points="{}" fill="{color}" fill-opacity="{}" stroke="{color}" stroke-width="{sw}" stroke-opacity="{}"/>"#,
                        points_attr(&p.points),
                        num(alpha * p.alpha),
                        num(alpha)
                    );
                }
            }
            Geometry::Ellipse { center, rx, ry } => {
                let _ = writeln!(
                    out,
                    r#"<ellipse cx="{}" cy="{}" rx="{}" ry="{}" fill="{color}" fill-opacity="{}" stroke="{color}" stroke-width="{sw}" stroke-opacity="{}"/>"#,
                    num(center.x),
                    num(center.y),
                    num(*rx),
                    num(*ry),
                    num(alpha * 0.25),
                    num(alpha)
                );
            }
            Geometry::Rect { bbox } => {
                let _ = writeln!(
                    out,
                    r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="{color}" stroke-width="{sw}" stroke-opacity="{}"/>"#,
                    num(bbox.x),
                    num(bbox.y),
                    num(bbox.w),
                    num(bbox.h),
                    num(alpha)
                );
            }
            Geometry::Skeleton { points, bones } => {
                for &(a, b) in bones {
                    let (Some(p), Some(q)) = (points[a], points[b]) else { continue };
                    let _ = writeln!(
                        out,
                        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="{sw}" stroke-opacity="{}" stroke-linecap="round"/>"#,
                        num(p.x),
                        num(p.y),
                        num(q.x),
                        num(q.y),
                        num(alpha)
                    );
                }
                for p in points.iter().flatten() {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{}" cy="{}" r="{}" fill="{color}" fill-opacity="{}"/>"#,
                        num(p.x),
                        num(p.y),
                        num(st.stroke_width),
                        num(alpha)
                    );
                }
            }
            Geometry::Text { text, anchor } => {
                let _ = writeln!(
                    out,
                    r##"<text x="{}" y="{}" font-family="sans-serif" font-size="{}" text-anchor="middle" fill="{color}" fill-opacity="{}" stroke="#ffffff" stroke-width="{}" paint-order="stroke">{}</text>"##,
                    num(anchor.x),
                    num(anchor.y),
                    num(st.font_size),
                    num(alpha),
                    num(st.font_size / 8.0),
                    escape(text)
                );
            }
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

fn arrow_head(prev: P, tip: P, size: f64) -> Vec<P> {
    let d = tip - prev;
    let len = d.norm();
    let (ux, uy) = if len > 0.0 { (d.x / len, d.y / len) } else { (1.0, 0.0) };
    let base = Point2::new(tip.x - ux * size, tip.y - uy * size);
    let (nx, ny) = (-uy * size / 2.0, ux * size / 2.0);
    vec![tip, Point2::new(base.x + nx, base.y + ny), Point2::new(base.x - nx, base.y - ny)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub kind: FrameKind,
    pub source_frame: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<Effect>,
    /// Playback annotation: play, reverse, or hold:<effect>.
    pub annotation: String,
    pub overlay: String,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub script_id: String,
    pub order: NarrativeOrder,
    pub fps: f64,
    pub canvas: (u32, u32),
    pub total_frames: usize,
    pub frames: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialization");
        s.push('\n');
        s
    }

    pub fn count(&self, kind: FrameKind) -> usize {
        self.frames.iter().filter(|f| f.kind == kind).count()
    }
}

pub fn overlay_name(index: usize) -> String {
    format!("overlays/{index:06}.svg")
}

pub fn frame_name(index: usize) -> String {
    format!("frames/{index:06}.png")
}

fn annotation(f: &OutputFrame) -> String {
    match (f.kind, f.effect) {
        (FrameKind::Play, _) => "play".into(),
        (FrameKind::Reverse, _) => "reverse".into(),
        (FrameKind::Hold, Some(e)) => format!("hold:{}", serde_json::to_value(e).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()),
        (FrameKind::Hold, None) => "hold".into(),
    }
}

/// Writes `overlays/%06d.svg` for every output frame and `manifest.json`
/// into `out`. With `frames_dir`, each overlay is also composited onto the
/// source image `frames_dir/%06d.png` of its source frame and written to
/// `frames/%06d.png`.
pub fn composite_sequence(
    schedule: &RenderSchedule,
    overlays: &[OverlayFrame],
    out: &Path,
    frames_dir: Option<&Path>,
) -> Result<Manifest> {
    if overlays.len() != schedule.output_frames.len() {
        return Err(Error::invalid(format!(
            "{} overlays for {} output frames",
            overlays.len(),
            schedule.output_frames.len()
        )));
    }
    let canvas = overlays.first().map_or((0, 0), |o| o.canvas);
    let entries: Vec<ManifestEntry> = schedule
        .output_frames
        .par_iter()
        .zip(overlays.par_iter())
        .map(|(f, o)| -> Result<ManifestEntry> {
            let svg = render_svg(o);
            write_bytes(&out.join(overlay_name(f.index)), svg.as_bytes())?;
            let frame = match frames_dir {
                Some(dir) => {
                    let png = composite_png(&svg, &source_image(dir, f.source_frame), o.canvas)?;
                    write_bytes(&out.join(frame_name(f.index)), &png)?;
                    Some(frame_name(f.index))
                }
                None => None,
            };
            Ok(ManifestEntry {
                index: f.index,
                kind: f.kind,
                source_frame: f.source_frame,
                effect: f.effect,
                annotation: annotation(f),
                overlay: overlay_name(f.index),
                sha256: sha256_hex(svg.as_bytes()),
                frame,
                missing: o.missing.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        script_id: schedule.script_id.clone(),
        order: schedule.order,
        fps: schedule.fps,
        canvas,
        total_frames: schedule.total_frames,
        frames: entries,
    };
    write_bytes(&out.join("manifest.json"), manifest.to_json().as_bytes())?;
    Ok(manifest)
}

/// Alpha-composites an overlay document onto a PNG source image.
pub fn composite_png(svg: &str, source: &Path, canvas: (u32, u32)) -> Result<Vec<u8>> {
    use resvg::{tiny_skia, usvg};
    if !source.exists() {
        return Err(Error::MissingSourceImage(source.to_path_buf()));
    }
    let bytes = read_bytes(source)?;
    let mut pixmap = tiny_skia::Pixmap::decode_png(&bytes).map_err(|e| Error::Image(format!("{}: {e}", source.display())))?;
    if (pixmap.width(), pixmap.height()) != canvas {
        return Err(Error::DimensionMismatch {
            found_w: pixmap.width(),
            found_h: pixmap.height(),
            canvas_w: canvas.0,
            canvas_h: canvas.1,
        });
    }
    static FONTS: std::sync::OnceLock<std::sync::Arc<usvg::fontdb::Database>> = std::sync::OnceLock::new();
    let fontdb = FONTS.get_or_init(|| {
        let mut db = usvg::fontdb::Database::new();
        db.load_system_fonts();
        std::sync::Arc::new(db)
    });
    let options = usvg::Options { fontdb: fontdb.clone(), ..usvg::Options::default() };
    let tree = usvg::Tree::from_str(svg, &options).map_err(|e| Error::Image(e.to_string()))?;
    resvg::render(&tree, tiny_skia::Transform::identity(), &mut pixmap.as_mut());
    pixmap.encode_png().map_err(|e| Error::Image(e.to_string()))
}

/// Realizes, renders and writes a full schedule.
pub fn export(
    schedule: &RenderSchedule,
    script: &AugmentationScript,
    analysis: &Analysis,
    defaults: &RenderDefaults,
    out: &Path,
    frames_dir: Option<&Path>,
) -> Result<Manifest> {
    let overlays = realize_all(schedule, script, analysis, defaults)?;
    composite_sequence(schedule, &overlays, out, frames_dir)
}

/// Rendered SVG of a single output frame.
pub fn preview_svg(
    schedule: &RenderSchedule,
    script: &AugmentationScript,
    analysis: &Analysis,
    defaults: &RenderDefaults,
    index: usize,
) -> Result<Option<String>> {
    let Some(frame) = schedule.output_frames.get(index) else { return Ok(None) };
    Ok(Some(render_svg(&realize_frame(frame, script, analysis, defaults)?)))
}

/// Source image path for `frame` under a frames directory.
pub fn source_image(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("{frame:06}.png"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(items: Vec<OverlayItem>) -> OverlayFrame {
        OverlayFrame { output_index: 0, source_frame: 0, canvas: (1920, 1080), items, missing: vec![] }
    }

    fn dot(id: &str, x: f64, y: f64) -> OverlayItem {
        OverlayItem {
            mapping_id: id.into(),
            visual: Visual::Dot,
            geometry: Geometry::Circle { center: Point2::new(x, y), radius: 8.0 },
            style: ItemStyle { color: [255, 0, 0, 255], stroke_width: 4.0, font_size: 32.0, opacity: 1.0 },
            z: 4,
            phase: Phase::Sustain,
        }
    }

    #[test]
    fn empty_frame_is_root_only() {
        let svg = render_svg(&frame(vec![]));
        assert_eq!(
            svg,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1920\" height=\"1080\" viewBox=\"0 0 1920 1080\">\n</svg>\n"
        );
    }

    #[test]
    fn coordinates_round_to_six_places() {
        let svg = render_svg(&frame(vec![dot("m1", 100.1234567, 50.0)]));
        assert!(svg.contains(r#"cx="100.123457" cy="50.000000""#), "{svg}");
        assert_eq!(svg, render_svg(&frame(vec![dot("m1", 100.1234567, 50.0)])));
        assert_eq!(num(-0.0000001), "0.000000");
        assert_eq!(num(-1.5), "-1.500000");
    }

    #[test]
    fn heat_alpha_is_monotone() {
        assert!(heat_alpha(0.5, 0.5) > heat_alpha(0.25, 0.5));
        assert_eq!(heat_alpha(1.0 / 3.0, 1.0 / 3.0), heat_alpha(1.0 / 3.0, 1.0 / 3.0));
        assert_eq!(heat_alpha(0.0, 0.0), 0.0);
    }

    #[test]
    fn labels() {
        assert_eq!(label_text(&DataValue::Scalar { value: 7000.0, unit: "rpm".into() }), "7000 rpm");
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }

    #[test]
    fn svg_parses_with_usvg() {
        let svg = render_svg(&frame(vec![dot("m1", 10.0, 10.0)]));
        resvg::usvg::Tree::from_str(&svg, &resvg::usvg::Options::default()).unwrap();
    }
}
