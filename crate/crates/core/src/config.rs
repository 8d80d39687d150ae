//! Tunable parameters of the whole pipeline, loadable from one file.

use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisOptions;
use crate::error::Result;
use crate::events::EventParams;
use crate::render::RenderDefaults;
use crate::scheduler::CompileOptions;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub events: EventParams,
    pub schedule: CompileOptions,
    pub render: RenderDefaults,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.events.validate()?;
        self.render.validate()
    }

    /// Analysis options with the default rule pack and an optional tactic import.
    pub fn analysis_options(&self, import: Option<String>) -> AnalysisOptions {
        AnalysisOptions { params: self.events, import, ..AnalysisOptions::default() }
    }
}
