//! Batch entry points for every stage of the pipeline.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors, 2 for
//! internal errors.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use rallyvis::analysis::Analysis;
use rallyvis::config::PipelineConfig;
use rallyvis::design_space::{AnnotationFile, NarrativeOrder, Registry};
use rallyvis::error::{read_text, write_bytes};
use rallyvis::events::{detect_events, EventKind};
use rallyvis::pyramid::Pyramid;
use rallyvis::recommender::{recommend_all, FallbackTable, MappingStats};
use rallyvis::render::export;
use rallyvis::scheduler::{compile_schedule, FrameKind};
use rallyvis::script::AugmentationScript;
use rallyvis::tactics::{import_tactics, run_rules, RulePack, TacticContext, TacticSet};
use rallyvis::tracking::{load_dataset, TrackingDataset};
use rallyvis::{Error, ErrorKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rallyvis", version, about = "Augment table tennis rallies with embedded visualizations")]
pub struct Cli {
    /// Pipeline parameters (TOML or JSON).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print machine-readable JSON to stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Report progress on stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(flatten)]
    pub params: ParamOverrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides applied on top of the config file.
#[derive(Debug, Default, Args)]
pub struct ParamOverrides {
    /// Stroke reach as a fraction of the frame width.
    #[arg(long, global = true)]
    pub reach_fraction: Option<f64>,
    /// Relative speed drop that marks a net hit.
    #[arg(long, global = true)]
    pub net_drop: Option<f64>,
    /// Frames after the net crossing searched for the drop.
    #[arg(long, global = true)]
    pub net_window: Option<usize>,
    /// Minimum confidence of a usable pose keypoint.
    #[arg(long, global = true)]
    pub keypoint_threshold: Option<f64>,
    /// Default hold length of a revealed mapping, in frames.
    #[arg(long, global = true)]
    pub hold_frames: Option<usize>,
    /// Length of creation and destruction ramps, in frames.
    #[arg(long, global = true)]
    pub ramp_frames: Option<usize>,
    /// Comma-separated mapping colors, e.g. "#1f77b4,#ff7f0e".
    #[arg(long, global = true, value_delimiter = ',')]
    pub palette: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check tracking files.
    #[command(subcommand)]
    Ingest(IngestCmd),
    /// Event detection.
    #[command(subcommand)]
    Events(EventsCmd),
    /// Data pyramid.
    #[command(subcommand)]
    Pyramid(PyramidCmd),
    /// Tactic rules and imports.
    #[command(subcommand)]
    Tactics(TacticsCmd),
    /// Reference corpus.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Recommend visuals for data attributes.
    Recommend(RecommendArgs),
    /// Render schedules.
    #[command(subcommand)]
    Schedule(ScheduleCmd),
    /// Render a script to overlays and a manifest.
    Render(RenderArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum IngestCmd {
    Validate { tracking: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum EventsCmd {
    Detect {
        #[arg(long)]
        tracking: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum PyramidCmd {
    Build {
        #[arg(long)]
        tracking: PathBuf,
        /// Tactic import file merged over the rule output.
        #[arg(long)]
        tactics: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nodes of a built pyramid intersecting a frame interval.
    Query {
        #[arg(long)]
        pyramid: PathBuf,
        /// Inclusive frame interval "start,end".
        #[arg(long, value_parser = parse_interval)]
        brush: (usize, usize),
    },
}

#[derive(Debug, Subcommand)]
pub enum TacticsCmd {
    Run {
        #[arg(long)]
        tracking: PathBuf,
        /// Rule pack; the built-in pack when omitted.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Import {
        #[arg(long)]
        tracking: PathBuf,
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    Stats {
        corpus: PathBuf,
        /// Also write the compiled statistics.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    /// Attribute names.
    #[arg(long = "data", required = true, num_args = 1..)]
    pub data: Vec<String>,
    #[arg(long, value_parser = parse_order)]
    pub order: NarrativeOrder,
    /// Annotation corpus; the bundled one when omitted.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub fallback: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ScheduleCmd {
    Compile {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        tracking: PathBuf,
        /// Replaces the script's order.
        #[arg(long, value_parser = parse_order)]
        order: Option<NarrativeOrder>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub script: PathBuf,
    #[arg(long)]
    pub tracking: PathBuf,
    /// Tactic import file applied on top of the rule engine.
    #[arg(long)]
    pub tactics: Option<PathBuf>,
    /// Output directory for `manifest.json` and `overlays/`.
    #[arg(long)]
    pub out: PathBuf,
    /// Source images `%06d.png` to composite the overlays onto.
    #[arg(long)]
    pub frames_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, default_value = "rallyvis-data")]
    pub data_dir: PathBuf,
}

fn parse_order(s: &str) -> Result<NarrativeOrder, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_interval(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected \"start,end\"")?;
    let n = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
    Ok((n(a)?, n(b)?))
}

/// Loads the config file (TOML unless it ends in `.json`) and applies flag overrides.
pub fn load_config(path: Option<&Path>, params: &ParamOverrides) -> rallyvis::Result<PipelineConfig> {
    let mut config = match path {
        Some(p) => {
            let text = read_text(p)?;
            if p.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text)?
            } else {
                toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", p.display())))?
            }
        }
        None => PipelineConfig::default(),
    };
    let e = &mut config.events;
    e.reach_fraction = params.reach_fraction.unwrap_or(e.reach_fraction);
    e.net_drop = params.net_drop.unwrap_or(e.net_drop);
    e.net_window = params.net_window.unwrap_or(e.net_window);
    e.keypoint_threshold = params.keypoint_threshold.unwrap_or(e.keypoint_threshold);
    if params.hold_frames.is_some() {
        config.schedule.default_hold_frames = params.hold_frames;
    }
    config.schedule.ramp_frames = params.ramp_frames.unwrap_or(config.schedule.ramp_frames);
    if let Some(p) = &params.palette {
        config.render.palette = p.clone();
    }
    config.validate()?;
    Ok(config)
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            let text = e.render().to_string();
            return if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            } else {
                let _ = write!(stderr, "{text}");
                EXIT_INVALID
            };
        }
    };
    let mut out = Output { json: cli.json, stdout };
    match execute(&cli, &mut out, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            match e.kind() {
                ErrorKind::Validation => EXIT_INVALID,
                ErrorKind::Internal => EXIT_INTERNAL,
            }
        }
    }
}

struct Output<'a> {
    json: bool,
    stdout: &'a mut dyn Write,
}

impl Output<'_> {
    /// JSON document with `--json`, else the text lines.
    fn emit<T: Serialize>(&mut self, value: &T, text: impl FnOnce() -> String) -> rallyvis::Result<()> {
        let s = if self.json {
            let mut s = serde_json::to_string_pretty(value)?;
            s.push('\n');
            s
        } else {
            text()
        };
        self.stdout
            .write_all(s.as_bytes())
            .map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source })
    }
}

fn dataset(path: &Path) -> rallyvis::Result<TrackingDataset<f64>> {
    load_dataset(path)
}

fn analysis(config: &PipelineConfig, tracking: &Path, tactics: Option<&Path>) -> rallyvis::Result<Analysis> {
    let import = tactics.map(read_text).transpose()?;
    Analysis::build(dataset(tracking)?, Registry::builtin(), &config.analysis_options(import))
}

fn write_or_print(out: &mut Output<'_>, path: Option<&Path>, body: &str, summary: serde_json::Value, text: String) -> rallyvis::Result<()> {
    match path {
        Some(p) => {
            write_bytes(p, body.as_bytes())?;
            out.emit(&summary, || text)
        }
        None => out
            .stdout
            .write_all(body.as_bytes())
            .map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source }),
    }
}

fn execute(cli: &Cli, out: &mut Output<'_>, stderr: &mut dyn Write) -> rallyvis::Result<()> {
    let config = load_config(cli.config.as_deref(), &cli.params)?;
    let mut log = |msg: String| {
        if cli.verbose {
            let _ = writeln!(stderr, "{msg}");
        }
    };
    match &cli.command {
        Command::Ingest(IngestCmd::Validate { tracking }) => {
            let ds = dataset(tracking)?;
            let v = &ds.video;
            let balls = ds.frames.iter().filter(|f| f.ball.is_some()).count();
            let summary = json!({
                "valid": true,
                "frame_count": ds.frame_count(),
                "fps": v.fps,
                "width": v.width,
                "height": v.height,
                "ball_frames": balls,
            });
            out.emit(&summary, || {
                format!(
                    "ok: {} frames at {} fps, {}x{}, ball detected in {balls} frames\n",
                    ds.frame_count(),
                    v.fps,
                    v.width,
                    v.height
                )
            })
        }
        Command::Events(EventsCmd::Detect { tracking, out: path }) => {
            let ds = dataset(tracking)?;
            let (_, events) = detect_events(&ds, &config.events)?;
            let counts: Vec<(EventKind, usize)> = [EventKind::Stroke, EventKind::Bounce, EventKind::NetHit, EventKind::Turn]
                .into_iter()
                .map(|k| (k, events.of_kind(k).count()))
                .collect();
            let summary = json!({
                "out": path,
                "counts": counts.iter().map(|(k, n)| (k.to_string(), *n)).collect::<std::collections::BTreeMap<_, _>>(),
            });
            let text = counts.iter().map(|(k, n)| format!("{k}: {n}\n")).collect();
            write_or_print(out, path.as_deref(), &events.to_json(), summary, text)
        }
        Command::Pyramid(PyramidCmd::Build { tracking, tactics, out: path }) => {
            let a = analysis(&config, tracking, tactics.as_deref())?;
            let summary = a.pyramid.summary();
            let text = format!(
                "{} nodes, {} turns; suggested insights: {}\n",
                summary.node_count,
                summary.turn_count,
                summary.suggested_insights.join(", ")
            );
            write_or_print(out, path.as_deref(), &a.pyramid.to_json(), serde_json::to_value(&summary)?, text)
        }
        Command::Pyramid(PyramidCmd::Query { pyramid, brush }) => {
            let p: Pyramid = serde_json::from_str(&read_text(pyramid)?)?;
            let b = p.brush(brush.0, brush.1)?;
            let rows: Vec<serde_json::Value> = b
                .walk()
                .into_iter()
                .map(|n| json!({ "node_id": n.node_id, "level": n.level, "start": n.start, "end": n.end, "kind": node_kind(n) }))
                .collect();
            out.emit(&json!({ "brush": brush, "nodes": rows }), || {
                rows.iter()
                    .map(|r| format!("{} {} [{}, {}] {}\n", r["node_id"].as_str().unwrap_or(""), r["level"].as_str().unwrap_or(""), r["start"], r["end"], r["kind"].as_str().unwrap_or("")))
                    .collect()
            })
        }
        Command::Tactics(TacticsCmd::Run { tracking, rules, out: path }) => {
            let ds = dataset(tracking)?;
            let (track, events) = detect_events(&ds, &config.events)?;
            let pack = match rules {
                Some(p) => RulePack::from_json(&read_text(p)?)?,
                None => RulePack::default_pack(),
            };
            let result = run_rules(&pack, &TacticContext { dataset: &ds, track: &track, events: &events })?;
            let set = TacticSet { schema_version: rallyvis::design_space::SCHEMA_VERSION, facts: result.facts, diagnostics: result.diagnostics };
            let summary = json!({ "out": path, "facts": set.facts.len(), "diagnostics": set.diagnostics });
            let text = format!("{} facts, {} rule diagnostics\n", set.facts.len(), set.diagnostics.len());
            write_or_print(out, path.as_deref(), &set.to_json(), summary, text)
        }
        Command::Tactics(TacticsCmd::Import { tracking, file, out: path }) => {
            let ds = dataset(tracking)?;
            let (_, events) = detect_events(&ds, &config.events)?;
            let (facts, report) = import_tactics(&read_text(file)?, &events)?;
            let set = TacticSet { schema_version: rallyvis::design_space::SCHEMA_VERSION, facts, diagnostics: vec![] };
            let summary = json!({ "out": path, "report": report });
            let text = format!("{} imported, {} skipped\n", report.imported, report.skipped.len())
                + &report.skipped.iter().map(|s| format!("  skipped #{} ({}): {}\n", s.index, s.anchor_event, s.reason)).collect::<String>();
            write_or_print(out, path.as_deref(), &set.to_json(), summary, text)
        }
        Command::Corpus(CorpusCmd::Stats { corpus, out: path }) => {
            let file = AnnotationFile::from_json(&read_text(corpus)?, &Registry::builtin())?;
            let stats = MappingStats::compile(&file.clips);
            if let Some(p) = path {
                write_bytes(p, stats.to_json().as_bytes())?;
            }
            let summary = stats.summary();
            out.emit(&summary, || summary.to_text())
        }
        Command::Recommend(args) => {
            let stats = match &args.corpus {
                Some(p) => MappingStats::compile(&AnnotationFile::from_json(&read_text(p)?, &Registry::builtin())?.clips),
                None => MappingStats::compile(&rallyvis::design_space::bundled_corpus().clips),
            };
            let fallback = match &args.fallback {
                Some(p) => FallbackTable::from_json(&read_text(p)?)?,
                None => FallbackTable::builtin(),
            };
            let recs = recommend_all(&stats, &args.data, args.order, &fallback)?;
            out.emit(&recs, || {
                recs.iter()
                    .map(|r| match r.probability {
                        Some(p) => format!("{} -> {} (p = {p:.4})\n", r.attribute, r.visual),
                        None => format!("{} -> {} (fallback)\n", r.attribute, r.visual),
                    })
                    .collect()
            })
        }
        Command::Schedule(ScheduleCmd::Compile { script, tracking, order, out: path }) => {
            let mut s = AugmentationScript::from_json(&read_text(script)?)?;
            if let Some(o) = order {
                s.order = *o;
            }
            let a = analysis(&config, tracking, None)?;
            s.validate_with(&a)?;
            let schedule = compile_schedule(&s, &a.dataset.video, &config.schedule)?;
            let summary = json!({
                "out": path,
                "script_id": schedule.script_id,
                "order": schedule.order,
                "total_frames": schedule.total_frames,
                "play": schedule.count(FrameKind::Play),
                "hold": schedule.count(FrameKind::Hold),
                "reverse": schedule.count(FrameKind::Reverse),
                "digest": schedule.digest(),
            });
            let text = format!(
                "{}: {} output frames ({} play, {} hold, {} reverse)\n",
                schedule.order,
                schedule.total_frames,
                schedule.count(FrameKind::Play),
                schedule.count(FrameKind::Hold),
                schedule.count(FrameKind::Reverse)
            );
            write_or_print(out, path.as_deref(), &schedule.to_json(), summary, text)
        }
        Command::Render(args) => {
            let s = AugmentationScript::from_json(&read_text(&args.script)?)?;
            let a = analysis(&config, &args.tracking, args.tactics.as_deref())?;
            s.validate_with(&a)?;
            let schedule = compile_schedule(&s, &a.dataset.video, &config.schedule)?;
            log(format!("rendering {} output frames", schedule.total_frames));
            let manifest = export(&schedule, &s, &a, &config.render, &args.out, args.frames_dir.as_deref())?;
            let missing: usize = manifest.frames.iter().map(|f| f.missing.len()).sum();
            let summary = json!({
                "out": args.out,
                "manifest": args.out.join("manifest.json"),
                "total_frames": manifest.total_frames,
                "missing_items": missing,
            });
            out.emit(&summary, || format!("wrote {} frames to {}\n", manifest.total_frames, args.out.display()))
        }
        Command::Serve(args) => {
            let state = rallyvis_service::AppState::open(&args.data_dir, config.clone())?;
            let addr = SocketAddr::new(args.host, args.port);
            let rt = tokio::runtime::Runtime::new().map_err(|source| Error::Io { path: PathBuf::from("<runtime>"), source })?;
            rt.block_on(rallyvis_service::serve(addr, state))
                .map_err(|source| Error::Io { path: PathBuf::from(addr.to_string()), source })
        }
    }
}

fn node_kind(n: &rallyvis::pyramid::PyramidNode) -> String {
    use rallyvis::pyramid::NodePayload as P;
    match &n.payload {
        P::Rally { .. } => "rally".into(),
        P::Turn { event } | P::Event { event } => event.event_id.clone(),
        P::Tactic { fact } => fact.fact_id.clone(),
        P::Object { frame, .. } => format!("objects@{frame}"),
        P::Frame { frame } => format!("frame@{frame}"),
    }
}
