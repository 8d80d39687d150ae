//! Committed fixtures and render goldens.
//!
//! `RALLYVIS_BLESS=1 cargo test -p rallyvis-core --test fixtures` rewrites
//! them from the generators.

use std::path::{Path, PathBuf};

use rallyvis::analysis::{Analysis, AnalysisOptions};
use rallyvis::design_space::Registry;
use rallyvis::render::{export, overlay_name, RenderDefaults};
use rallyvis::scheduler::{compile_schedule, CompileOptions};
use rallyvis::script::AugmentationScript;
use rallyvis::synth::{fixture_rally, fixture_scripts, FIXTURE_SCRIPTS};
use rallyvis::tracking::load_dataset;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn bless() -> bool {
    std::env::var_os("RALLYVIS_BLESS").is_some()
}

fn check_file(path: &Path, actual: &[u8]) {
    if bless() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{} differs from the generated output", path.display());
}

#[test]
fn rally_fixture_matches_generator() {
    let path = root().join("rally.json.gz");
    let generated = fixture_rally();
    if bless() {
        generated.save(&path).unwrap();
    }
    assert_eq!(load_dataset::<f64>(&path).unwrap(), generated);
}

#[test]
fn script_fixtures_match_generator() {
    for (stem, script) in FIXTURE_SCRIPTS.iter().zip(fixture_scripts()) {
        let path = root().join("scripts").join(format!("{stem}.json"));
        check_file(&path, script.to_json().as_bytes());
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(AugmentationScript::from_json(&text).unwrap(), script);
    }
}

/// Output indices whose SVGs are committed next to each manifest.
const SAMPLES: [usize; 8] = [0, 110, 120, 150, 170, 210, 260, 350];

#[test]
fn render_goldens() {
    let analysis = Analysis::build(fixture_rally(), Registry::builtin(), &AnalysisOptions::default()).unwrap();
    for (stem, script) in FIXTURE_SCRIPTS.iter().zip(fixture_scripts()) {
        script.validate_with(&analysis).unwrap();
        let schedule = compile_schedule(&script, &analysis.dataset.video, &CompileOptions::default()).unwrap();
        let runs: Vec<_> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                export(&schedule, &script, &analysis, &RenderDefaults::default(), dir.path(), None).unwrap();
                dir
            })
            .collect();
        let golden = root().join("goldens").join(stem);
        let manifest = std::fs::read(runs[0].path().join("manifest.json")).unwrap();
        assert_eq!(manifest, std::fs::read(runs[1].path().join("manifest.json")).unwrap());
        check_file(&golden.join("manifest.json"), &manifest);
        for i in SAMPLES.into_iter().filter(|&i| i < schedule.total_frames) {
            let name = overlay_name(i);
            let svg = std::fs::read(runs[0].path().join(&name)).unwrap();
            assert_eq!(svg, std::fs::read(runs[1].path().join(&name)).unwrap());
            check_file(&golden.join(&name), &svg);
        }
    }
}
