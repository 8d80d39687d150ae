//! HTTP authoring service: projects hold an analysed rally and its
//! augmentation scripts; previews and exports render through the same
//! pipeline as the batch CLI.

mod api;
pub mod project;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicU64;
use std::sync::{Arc, RwLock};

use rallyvis::config::PipelineConfig;
use rallyvis::{Error, Result};

pub use api::router;
pub use project::{Diagnostic, Project, Upload};

pub type ProjectHandle = Arc<tokio::sync::RwLock<Project>>;

/// Shared server state. Each project has its own lock: mutations of one
/// project are serialized, reads run concurrently, and distinct projects
/// never wait on each other.
pub struct AppState {
    pub data_dir: PathBuf,
    pub config: PipelineConfig,
    projects: RwLock<BTreeMap<String, ProjectHandle>>,
    next_id: std::sync::Mutex<u64>,
    export_seq: AtomicU64,
    /// Guards the swap of a finished export into its final directory.
    export_swap: std::sync::Mutex<()>,
}

impl AppState {
    /// Opens `data_dir`, reloading every project found under `projects/`.
    pub fn open(data_dir: &Path, config: PipelineConfig) -> Result<Arc<AppState>> {
        config.validate()?;
        let root = data_dir.join("projects");
        std::fs::create_dir_all(&root).map_err(|source| Error::Io { path: root.clone(), source })?;
        let mut projects = BTreeMap::new();
        let mut max_id = 0;
        let entries = std::fs::read_dir(&root).map_err(|source| Error::Io { path: root.clone(), source })?;
        let mut dirs: Vec<PathBuf> = entries.flatten().map(|e| e.path()).filter(|p| p.is_dir()).collect();
        dirs.sort();
        for dir in dirs {
            let Some(id) = dir.file_name().and_then(|n| n.to_str()).map(str::to_string) else { continue };
            let Some(n) = id.strip_prefix('p').and_then(|d| d.parse::<u64>().ok()) else { continue };
            max_id = max_id.max(n);
            match Project::load(id.clone(), dir.clone(), &config) {
                Ok(p) => {
                    projects.insert(id, Arc::new(tokio::sync::RwLock::new(p)));
                }
                Err(e) => eprintln!("skipping project {}: {e}", dir.display()),
            }
        }
        Ok(Arc::new(AppState {
            data_dir: data_dir.to_path_buf(),
            config,
            projects: RwLock::new(projects),
            next_id: std::sync::Mutex::new(max_id + 1),
            export_seq: AtomicU64::new(0),
            export_swap: std::sync::Mutex::new(()),
        }))
    }

    pub fn project(&self, id: &str) -> Option<ProjectHandle> {
        self.projects.read().expect("project table").get(id).cloned()
    }

    fn allocate(&self) -> (String, PathBuf) {
        let mut next = self.next_id.lock().expect("id counter");
        let id = format!("p{:06}", *next);
        *next += 1;
        let dir = self.data_dir.join("projects").join(&id);
        (id, dir)
    }

    fn insert(&self, project: Project) -> ProjectHandle {
        let id = project.id.clone();
        let handle = Arc::new(tokio::sync::RwLock::new(project));
        self.projects.write().expect("project table").insert(id, handle.clone());
        handle
    }
}

/// Serves the API on `addr` until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
