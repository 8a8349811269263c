use std::collections::BTreeMap;
use std::path::Path;

use papernest::fixtures::write_fixture;
use papernest::geom::P3;
use papernest::layout::Paper;
use papernest::mesh::io::save_obj;
use papernest::mesh::primitives::icosphere;
use papernest::pipeline::{run_path, validate, PipelineError, RunOptions, RunReport, Stage};

fn numbers(svg: &str, class: &str) -> Vec<usize> {
    let key = format!("<g class=\"{class}\" data-number=\"");
    svg.match_indices(&key)
        .map(|(i, _)| {
            let rest = &svg[i + key.len()..];
            rest[..rest.find('"').unwrap()].parse().unwrap()
        })
        .collect()
}

fn svgs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "svg"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn run_fixture(name: &str, root: &Path, out: &str) -> RunReport {
    let cfg = write_fixture(name, &root.join("in")).unwrap();
    run_path(&cfg, &RunOptions { out_dir: root.join(out), ..Default::default() }).unwrap()
}

#[test]
fn concentric_pair_runs_end_to_end_and_reproduces() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run_fixture("concentric", tmp.path(), "a");
    assert_eq!(r.stages.iter().map(|s| s.stage).collect::<Vec<_>>(), Stage::ALL);
    assert!(r.stages.iter().all(|s| s.seconds >= 0.0));
    assert_eq!(r.levels.len(), 1);
    assert_eq!(r.patches.len(), 3);
    assert!(r.patches.iter().all(|p| p.energy == 0.0));
    assert!(r.stability.per_level_stable && r.stability.final_stable);
    assert_eq!(r.structures.len(), 2);
    assert!(r.structures.iter().all(|s| s.papermesh.as_ref().is_some_and(|m| m.faces <= 150)));

    let dir = tmp.path().join("a/concentric");
    for f in &r.outputs {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let pages = svgs(&dir);
    assert_eq!(pages.len(), 2 * r.pages);
    let (mut tabs, mut targets) = (Vec::new(), Vec::new());
    for (name, bytes) in &pages {
        let s = std::str::from_utf8(bytes).unwrap();
        if name.ends_with("_front.svg") {
            tabs.extend(numbers(s, "tab"));
        } else {
            targets.extend(numbers(s, "target"));
        }
    }
    tabs.sort_unstable();
    targets.sort_unstable();
    let total: usize = r.patches.iter().map(|p| p.tabs).sum();
    assert_eq!(tabs, (1..=total).collect::<Vec<_>>());
    assert_eq!(tabs, targets);

    let again = run_fixture("concentric", tmp.path(), "b");
    assert_eq!(pages, svgs(&tmp.path().join("b/concentric")));
    assert_eq!(serde_json::to_value(&r.patches).unwrap(), serde_json::to_value(&again.patches).unwrap());
    assert_eq!(serde_json::to_value(&r.levels).unwrap(), serde_json::to_value(&again.levels).unwrap());
}

#[test]
fn head_fixture_prints_textured_halves_and_brain() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run_fixture("head", tmp.path(), "out");
    assert_eq!(r.paper, Paper::A3);
    let labels: Vec<&str> = r.patches.iter().map(|p| p.label.as_str()).collect();
    assert_eq!(labels, ["skin-below", "skin-above", "brain"]);
    assert!(r.patches.iter().all(|p| p.textured));
    let roles: Vec<&str> = r.structures.iter().map(|s| s.role.as_str()).collect();
    assert_eq!(roles, ["papermesh", "papermesh", "projection", "projection"]);
    assert!((100..=300).contains(&r.totals.papermesh_faces));
    assert!(tmp.path().join("out/head/skin-above_atlas.png").is_file());
}

#[test]
fn single_mesh_is_a_degenerate_run() {
    let tmp = tempfile::tempdir().unwrap();
    save_obj(&icosphere(2, 1.0, P3::origin()), tmp.path().join("ball.obj")).unwrap();
    let cfg = tmp.path().join("ball.toml");
    std::fs::write(&cfg, "[[structure]]\nid = \"ball\"\npath = \"ball.obj\"\n").unwrap();
    let r = run_path(&cfg, &RunOptions { out_dir: tmp.path().join("out"), seed: Some(9), paper: None }).unwrap();
    assert_eq!(r.model, "ball");
    assert_eq!(r.seed, 9);
    assert!(r.levels.is_empty());
    assert_eq!(r.patches.len(), 1);
    assert_eq!(r.patches[0].label, "ball");
    assert_eq!(r.hierarchy.tree.nodes.len(), 1);
    assert_eq!(r.stages.len(), Stage::ALL.len());
}

const PAIR: &str = r#"
[[structure]]
id = "outer"
path = "outer.obj"

[[structure]]
id = "inner"
path = "inner.obj"
"#;

fn checked(extra: &str) -> Vec<String> {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture("concentric", tmp.path()).unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, format!("{PAIR}{extra}")).unwrap();
    validate(&cfg).into_iter().map(|d| d.to_string()).collect()
}

#[test]
fn validation_reports_referential_errors() {
    assert!(checked("").is_empty());
    let d = checked("\n[[level]]\nid = \"l\"\nmembers = [\"outer\", \"liver\"]\n");
    assert!(d.iter().any(|m| m.contains("unknown structure id `liver`")), "{d:?}");
    let d = checked("\n[[structure]]\nid = \"outer\"\npath = \"inner.obj\"\n");
    assert!(d.iter().any(|m| m.contains("duplicate structure id")), "{d:?}");
}

#[test]
fn four_channels_exceed_the_budget() {
    let mut extra = String::new();
    for (i, c) in ["cyan", "magenta", "yellow", "cyan"].iter().enumerate() {
        extra += &format!("\n[[structure]]\nid = \"s{i}\"\npath = \"inner.obj\"\n");
        extra += &format!("\n[[projection]]\nstructure = \"s{i}\"\nonto = \"outer\"\nchannel = \"{c}\"\n");
    }
    let d = checked(&extra);
    assert!(d.iter().any(|m| m.contains("channel budget exceeded")), "{d:?}");
}

#[test]
fn invalid_config_fails_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, PAIR).unwrap();
    let e = run_path(&cfg, &RunOptions { out_dir: tmp.path().join("out"), ..Default::default() }).unwrap_err();
    assert!(matches!(e, PipelineError::Invalid(ref d) if d.len() == 2), "{e}");
    assert!(!tmp.path().join("out").exists());
}
