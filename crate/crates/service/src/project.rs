//! On-disk project sessions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::Serialize;

use rallyvis::analysis::Analysis;
use rallyvis::config::PipelineConfig;
use rallyvis::design_space::{bundled_corpus, AnnotationFile, Registry};
use rallyvis::error::{read_text, write_bytes};
use rallyvis::recommender::{FallbackTable, MappingStats};
use rallyvis::scheduler::{compile_schedule, RenderSchedule};
use rallyvis::script::AugmentationScript;
use rallyvis::tactics::TacticImportFile;
use rallyvis::tracking::TrackingDataset;
use rallyvis::{Error, Result};

const TRACKING: &str = "tracking.json";
const TACTICS: &str = "tactics.json";
const CORPUS: &str = "corpus.json";
const SCRIPTS: &str = "scripts";
pub const EXPORTS: &str = "exports";

/// Problem with one uploaded file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub file: String,
    pub message: String,
}

/// Parsed upload, checked file by file.
pub struct Upload {
    pub dataset: TrackingDataset<f64>,
    pub tactics: Option<String>,
    pub corpus: Option<AnnotationFile>,
}

impl Upload {
    /// Validates every file and reports all problems at once.
    pub fn parse(tracking: &[u8], tactics: Option<&[u8]>, corpus: Option<&[u8]>) -> Result<Upload, Vec<Diagnostic>> {
        let mut diagnostics = Vec::new();
        let mut report = |file: &str, e: Error| diagnostics.push(Diagnostic { file: file.into(), message: e.to_string() });
        let dataset = TrackingDataset::<f64>::from_json(tracking).map_err(|e| report("tracking", e)).ok();
        let tactics = match tactics {
            Some(bytes) => match serde_json::from_slice::<TacticImportFile>(bytes) {
                Ok(_) => Some(String::from_utf8_lossy(bytes).into_owned()),
                Err(e) => {
                    report("tactics", e.into());
                    None
                }
            },
            None => None,
        };
        let corpus = match corpus {
            Some(bytes) => {
                let text = String::from_utf8_lossy(bytes);
                AnnotationFile::from_json(&text, &Registry::builtin()).map_err(|e| report("corpus", e)).ok()
            }
            None => None,
        };
        match dataset {
            Some(dataset) if diagnostics.is_empty() => Ok(Upload { dataset, tactics, corpus }),
            _ => Err(diagnostics),
        }
    }
}

pub struct Project {
    pub id: String,
    pub dir: PathBuf,
    pub analysis: Analysis,
    pub stats: MappingStats,
    pub fallback: FallbackTable,
    pub scripts: BTreeMap<String, AugmentationScript>,
    /// script id → (script digest, schedule). Entries whose digest no longer
    /// matches the script are stale and recompiled on access.
    compiled: Mutex<BTreeMap<String, (String, Arc<RenderSchedule>)>>,
}

impl Project {
    /// Runs the analysis for an upload and writes the project directory.
    pub fn create(id: String, dir: PathBuf, upload: Upload, config: &PipelineConfig) -> Result<Project> {
        let analysis = Analysis::build(upload.dataset, Registry::builtin(), &config.analysis_options(upload.tactics.clone()))?;
        write_bytes(&dir.join(TRACKING), analysis.dataset.to_json().as_bytes())?;
        if let Some(t) = &upload.tactics {
            write_bytes(&dir.join(TACTICS), t.as_bytes())?;
        }
        if let Some(c) = &upload.corpus {
            write_bytes(&dir.join(CORPUS), c.to_json().as_bytes())?;
        }
        std::fs::create_dir_all(dir.join(SCRIPTS)).map_err(|source| Error::Io { path: dir.join(SCRIPTS), source })?;
        Ok(Project::assemble(id, dir, analysis, upload.corpus, BTreeMap::new()))
    }

    /// Reopens a project directory written by [`Project::create`].
    pub fn load(id: String, dir: PathBuf, config: &PipelineConfig) -> Result<Project> {
        let tracking = read_text(&dir.join(TRACKING))?;
        let tactics = optional_text(&dir.join(TACTICS))?;
        let corpus = match optional_text(&dir.join(CORPUS))? {
            Some(text) => Some(AnnotationFile::from_json(&text, &Registry::builtin())?),
            None => None,
        };
        let dataset = TrackingDataset::from_json(tracking.as_bytes())?;
        let analysis = Analysis::build(dataset, Registry::builtin(), &config.analysis_options(tactics))?;
        let mut scripts = BTreeMap::new();
        let script_dir = dir.join(SCRIPTS);
        if script_dir.is_dir() {
            let entries = std::fs::read_dir(&script_dir).map_err(|source| Error::Io { path: script_dir.clone(), source })?;
            for entry in entries.flatten() {
                let path = entry.path();
                if path.extension().is_some_and(|e| e == "json") {
                    let script = AugmentationScript::from_json(&read_text(&path)?)?;
                    scripts.insert(script.script_id.clone(), script);
                }
            }
        }
        Ok(Project::assemble(id, dir, analysis, corpus, scripts))
    }

    fn assemble(
        id: String,
        dir: PathBuf,
        analysis: Analysis,
        corpus: Option<AnnotationFile>,
        scripts: BTreeMap<String, AugmentationScript>,
    ) -> Project {
        let corpus = corpus.unwrap_or_else(bundled_corpus);
        Project {
            id,
            dir,
            analysis,
            stats: MappingStats::compile(&corpus.clips),
            fallback: FallbackTable::builtin(),
            scripts,
            compiled: Mutex::new(BTreeMap::new()),
        }
    }

    /// Stores a script and evicts its compiled schedule.
    pub fn put_script(&mut self, script: AugmentationScript) -> Result<()> {
        let path = self.dir.join(SCRIPTS).join(format!("{}.json", script.script_id));
        write_bytes(&path, script.to_json().as_bytes())?;
        self.compiled.lock().expect("schedule cache").remove(&script.script_id);
        self.scripts.insert(script.script_id.clone(), script);
        Ok(())
    }

    pub fn script(&self, script_id: &str) -> Option<&AugmentationScript> {
        self.scripts.get(script_id)
    }

    /// The compiled schedule of a script, compiled on first use and cached by
    /// script digest.
    pub fn schedule(&self, script: &AugmentationScript, config: &PipelineConfig) -> Result<Arc<RenderSchedule>> {
        let digest = script.digest();
        let mut cache = self.compiled.lock().expect("schedule cache");
        if let Some((d, s)) = cache.get(&script.script_id) {
            if *d == digest {
                return Ok(s.clone());
            }
        }
        script.validate_with(&self.analysis)?;
        let schedule = Arc::new(compile_schedule(script, &self.analysis.dataset.video, &config.schedule)?);
        cache.insert(script.script_id.clone(), (digest, schedule.clone()));
        Ok(schedule)
    }

    /// Script digest of the cached schedule, if one is cached and current.
    pub fn compiled_digest(&self, script_id: &str) -> Option<String> {
        let cache = self.compiled.lock().expect("schedule cache");
        let (d, _) = cache.get(script_id)?;
        (self.scripts.get(script_id)?.digest() == *d).then(|| d.clone())
    }
}

fn optional_text(path: &Path) -> Result<Option<String>> {
    if path.exists() {
        read_text(path).map(Some)
    } else {
        Ok(None)
    }
}
