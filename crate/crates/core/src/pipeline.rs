//! Config-driven run of the whole workflow, from input meshes to printable sheets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approximate::{make_papermesh, MeshStats, DEFAULT_FACE_BUDGET, DEFAULT_FINE_FACES};
use crate::cutter::CutPlane;
use crate::geom::V3;
use crate::hierarchy::{build_grouped_hierarchy, HierarchyTree};
use crate::layout::{paginate, render_pages, shrink_tabs, Paper, PrintItem, TAB_MM};
use crate::mesh::io::{load_mesh, write_obj};
use crate::projection::{self, check_assignment, combine_channels, prepare_mode, project_structure, Channel, Mode, TextureAtlas};
use crate::stability::{build_assembly, plan_cuts, static_equilibrium_check, PlanOptions, Rejection, SimParams};
use crate::unfold::{anneal_unfolding, AnnealParams, Patch2D, UnfoldError};
use crate::viewpoint::{self, best_viewpoint, ViewRanking};
use crate::TriMesh;

/// Ranked directions kept per level in the report.
pub const REPORT_TOP_VIEWS: usize = 10;

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}
fn default_mu() -> f64 {
    SimParams::default().mu
}
fn default_face_budget() -> usize {
    DEFAULT_FACE_BUDGET
}
fn default_fine_faces() -> usize {
    DEFAULT_FINE_FACES
}
fn default_texture() -> usize {
    projection::DEFAULT_RESOLUTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    pub id: String,
    /// OBJ or STL file, relative to the config file.
    pub path: PathBuf,
}

/// Meshes printed together as one papermesh level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    pub id: String,
    pub members: Vec<String>,
    #[serde(default)]
    pub outermost: bool,
}

/// A structure rendered as texture onto the pieces of a level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub structure: String,
    pub onto: String,
    pub channel: Channel,
    #[serde(default)]
    pub mode: Mode,
    /// Clipping distance in model units.
    #[serde(default)]
    pub clip: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViewConfig {
    pub samples: usize,
    pub resolution: usize,
}

impl Default for ViewConfig {
    fn default() -> Self {
        ViewConfig { samples: viewpoint::DEFAULT_SAMPLES, resolution: viewpoint::DEFAULT_RESOLUTION }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnealConfig {
    pub iterations: usize,
    /// Extra seeds tried when a piece does not reach zero energy.
    pub restarts: usize,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig { iterations: AnnealParams::default().iterations, restarts: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Model name; defaults to the config file stem.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paper: Paper,
    #[serde(default = "default_up")]
    pub up: [f64; 3],
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_face_budget")]
    pub face_budget: usize,
    #[serde(default = "default_fine_faces")]
    pub fine_faces: usize,
    #[serde(default = "default_texture")]
    pub texture_resolution: usize,
    #[serde(default)]
    pub viewpoint: ViewConfig,
    #[serde(default)]
    pub anneal: AnnealConfig,
    #[serde(rename = "structure", default)]
    pub structures: Vec<StructureConfig>,
    /// Empty means one level per non-projected structure.
    #[serde(rename = "level", default)]
    pub levels: Vec<LevelConfig>,
    #[serde(rename = "projection", default)]
    pub projections: Vec<ProjectionConfig>,
    /// Directory that structure paths are relative to.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, Diagnostic> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Diagnostic::new("config", e.message().trim()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Diagnostic> {
        let text = std::fs::read_to_string(path).map_err(|e| Diagnostic::new("config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, path.parent().unwrap_or(Path::new(".")))?;
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    pub fn model_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| "model".into())
    }

    /// Configured levels, or one per structure that is not only projected.
    pub fn effective_levels(&self) -> Vec<LevelConfig> {
        if !self.levels.is_empty() {
            return self.levels.clone();
        }
        let projected: BTreeSet<&str> = self.projections.iter().map(|p| p.structure.as_str()).collect();
        self.structures
            .iter()
            .filter(|s| !projected.contains(s.id.as_str()))
            .map(|s| LevelConfig { id: s.id.clone(), members: vec![s.id.clone()], outermost: false })
            .collect()
    }
}

/// One validation finding, tied to a config location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub location: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { location: location.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

fn duplicates<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = BTreeSet::new();
    let mut dup = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            dup.insert(id);
        }
    }
    dup.into_iter().collect()
}

/// Schema and referential checks; reads no geometry.
pub fn validate_config(cfg: &RunConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if cfg.structures.is_empty() {
        out.push(Diagnostic::new("structure", "no structures given"));
    }
    for id in duplicates(cfg.structures.iter().map(|s| s.id.as_str())) {
        out.push(Diagnostic::new(format!("structure.{id}"), "duplicate structure id"));
    }
    let ids: BTreeSet<&str> = cfg.structures.iter().map(|s| s.id.as_str()).collect();
    for s in &cfg.structures {
        let p = cfg.base_dir.join(&s.path);
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("obj") | Some("stl")) {
            out.push(Diagnostic::new(format!("structure.{}", s.id), format!("unsupported mesh format: {}", s.path.display())));
        } else if !p.is_file() {
            out.push(Diagnostic::new(format!("structure.{}", s.id), format!("missing file: {}", p.display())));
        }
    }
    let levels = cfg.effective_levels();
    if levels.is_empty() {
        out.push(Diagnostic::new("level", "no papermesh levels"));
    }
    for id in duplicates(levels.iter().map(|l| l.id.as_str())) {
        out.push(Diagnostic::new(format!("level.{id}"), "duplicate level id"));
    }
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    for l in &levels {
        if l.members.is_empty() {
            out.push(Diagnostic::new(format!("level.{}", l.id), "level has no members"));
        }
        for m in &l.members {
            if !ids.contains(m.as_str()) {
                out.push(Diagnostic::new(format!("level.{}", l.id), format!("unknown structure id `{m}`")));
            } else if let Some(prev) = owner.insert(m, &l.id) {
                out.push(Diagnostic::new(format!("level.{}", l.id), format!("structure `{m}` already belongs to level `{prev}`")));
            }
        }
    }
    if levels.iter().filter(|l| l.outermost).count() > 1 {
        out.push(Diagnostic::new("level", "more than one level marked outermost"));
    }
    let level_ids: BTreeSet<&str> = levels.iter().map(|l| l.id.as_str()).collect();
    let mut channels: BTreeMap<&str, Vec<Channel>> = BTreeMap::new();
    for (i, p) in cfg.projections.iter().enumerate() {
        let loc = format!("projection[{i}]");
        if !ids.contains(p.structure.as_str()) {
            out.push(Diagnostic::new(&loc, format!("unknown structure id `{}`", p.structure)));
        }
        if !level_ids.contains(p.onto.as_str()) {
            out.push(Diagnostic::new(&loc, format!("unknown level id `{}`", p.onto)));
        }
        if p.clip.is_some_and(|c| c.is_nan() || c <= 0.0) {
            out.push(Diagnostic::new(&loc, "clip distance must be positive"));
        }
        channels.entry(&p.onto).or_default().push(p.channel);
    }
    for (level, chans) in &channels {
        if let Err(e) = check_assignment(chans) {
            out.push(Diagnostic::new(format!("level.{level}"), e.to_string()));
        }
    }
    for s in &cfg.structures {
        if !owner.contains_key(s.id.as_str()) && !cfg.projections.iter().any(|p| p.structure == s.id) {
            out.push(Diagnostic::new(format!("structure.{}", s.id), "structure is neither in a level nor projected"));
        }
    }
    if cfg.face_budget < 4 {
        out.push(Diagnostic::new("face_budget", "must be at least 4"));
    }
    if cfg.fine_faces < cfg.face_budget {
        out.push(Diagnostic::new("fine_faces", "must not be below face_budget"));
    }
    if cfg.mu.is_nan() || cfg.mu < 0.0 {
        out.push(Diagnostic::new("mu", "friction must be non-negative"));
    }
    if !V3::from(cfg.up).iter().all(|c| c.is_finite()) || V3::from(cfg.up).norm() == 0.0 {
        out.push(Diagnostic::new("up", "up vector must be non-zero"));
    }
    if cfg.viewpoint.samples < 2 || cfg.viewpoint.resolution == 0 {
        out.push(Diagnostic::new("viewpoint", "need at least 2 samples and a positive resolution"));
    }
    if cfg.texture_resolution == 0 {
        out.push(Diagnostic::new("texture_resolution", "must be positive"));
    }
    if cfg.anneal.iterations == 0 {
        out.push(Diagnostic::new("anneal.iterations", "must be positive"));
    }
    out
}

/// Loads and checks a config file.
pub fn validate(path: &Path) -> Vec<Diagnostic> {
    match RunConfig::load(path) {
        Ok(cfg) => validate_config(&cfg),
        Err(d) => vec![d],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Input,
    Approximate,
    Hierarchy,
    Viewpoint,
    Cut,
    Stability,
    Projection,
    Unfold,
    Layout,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Input,
        Stage::Approximate,
        Stage::Hierarchy,
        Stage::Viewpoint,
        Stage::Cut,
        Stage::Stability,
        Stage::Projection,
        Stage::Unfold,
        Stage::Layout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Input => "input",
            Stage::Approximate => "approximate",
            Stage::Hierarchy => "hierarchy",
            Stage::Viewpoint => "viewpoint",
            Stage::Cut => "cut",
            Stage::Stability => "stability",
            Stage::Projection => "projection",
            Stage::Unfold => "unfold",
            Stage::Layout => "layout",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid config:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: BoxError,
    },
}

fn fail<E: Into<BoxError>>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage { stage, source: e.into() }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Outputs go to `<out_dir>/<model>/`.
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub paper: Option<Paper>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedView {
    pub direction: [f64; 3],
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub node: usize,
    pub label: String,
    pub level: usize,
    pub view: [f64; 3],
    pub entropy: f64,
    /// Zero-based rank of the accepted direction.
    pub rank: usize,
    pub plane_origin: [f64; 3],
    pub plane_normal: [f64; 3],
    pub rejections: Vec<Rejection>,
    pub top_views: Vec<RankedView>,
    pub stable: bool,
    pub max_displacement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityFlags {
    /// Every per-level cut search ended stable.
    pub per_level_stable: bool,
    /// Simulation of the full nested assembly.
    pub final_stable: bool,
    pub final_max_displacement: f64,
    pub diverged: bool,
    /// Static equilibrium of the full assembly.
    pub static_stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureCounts {
    pub id: String,
    /// `papermesh` or `projection`.
    pub role: String,
    pub input: MeshStats,
    pub papermesh: Option<MeshStats>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Totals {
    pub input_vertices: usize,
    pub input_faces: usize,
    pub papermesh_vertices: usize,
    pub papermesh_faces: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatchReport {
    pub label: String,
    pub level: String,
    pub vertices: usize,
    pub faces: usize,
    pub folds: usize,
    pub cuts: usize,
    pub tabs: usize,
    pub tab_numbers: [usize; 2],
    pub energy: f64,
    pub iterations: usize,
    pub seed: u64,
    pub textured: bool,
    pub page: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyReport {
    pub tree: HierarchyTree,
    /// Level id of each node.
    pub labels: Vec<String>,
    /// Structure id of each mesh index used in the tree.
    pub meshes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub model: String,
    pub seed: u64,
    pub paper: Paper,
    pub scale_mm_per_unit: f64,
    pub pages: usize,
    pub hierarchy: HierarchyReport,
    pub levels: Vec<LevelReport>,
    pub stability: StabilityFlags,
    pub structures: Vec<StructureCounts>,
    pub totals: Totals,
    pub patches: Vec<PatchReport>,
    pub stages: Vec<StageTiming>,
    /// Paths relative to the model output directory.
    pub outputs: Vec<String>,
}

/// A printable connected piece of one level.
struct Piece {
    label: String,
    node: usize,
    mesh: TriMesh,
    /// Index into `shells` of the halves this piece came from.
    shell: Option<usize>,
}

struct Timer {
    stages: Vec<StageTiming>,
}

impl Timer {
    fn time<T>(&mut self, stage: Stage, f: impl FnOnce() -> Result<T, PipelineError>) -> Result<T, PipelineError> {
        let t = Instant::now();
        let r = f()?;
        self.stages.push(StageTiming { stage, seconds: t.elapsed().as_secs_f64() });
        Ok(r)
    }
}

fn piece_seed(seed: u64, piece: usize, attempt: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add((piece as u64) << 16).wrapping_add(attempt as u64)
}

fn write(out: &mut Vec<String>, dir: &Path, name: String, bytes: &[u8]) -> Result<(), PipelineError> {
    std::fs::write(dir.join(&name), bytes).map_err(fail(Stage::Layout))?;
    out.push(name);
    Ok(())
}

/// Loads a config file, validates it and runs it.
pub fn run_path(path: &Path, opts: &RunOptions) -> Result<RunReport, PipelineError> {
    let cfg = RunConfig::load(path).map_err(|d| PipelineError::Invalid(vec![d]))?;
    run(&cfg, opts)
}

/// Runs every stage in order and writes all artifacts plus `report.json`.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport, PipelineError> {
    let diags = validate_config(cfg);
    if !diags.is_empty() {
        return Err(PipelineError::Invalid(diags));
    }
    let seed = opts.seed.unwrap_or(cfg.seed);
    let paper = opts.paper.unwrap_or(cfg.paper);
    let model = cfg.model_name();
    let up = V3::from(cfg.up).normalize();
    let levels = cfg.effective_levels();
    let mut timer = Timer { stages: Vec::new() };

    // (a) input
    let inputs: BTreeMap<String, TriMesh> = timer.time(Stage::Input, || {
        cfg.structures
            .par_iter()
            .map(|s| {
                load_mesh(cfg.base_dir.join(&s.path))
                    .map(|m| (s.id.clone(), m))
                    .map_err(|e| fail::<String>(Stage::Input)(format!("structure `{}`: {e}", s.id)))
            })
            .collect()
    })?;

    // (b) papermeshes, indexed in level order
    let mesh_ids: Vec<String> = levels.iter().flat_map(|l| l.members.iter().cloned()).collect();
    let papermeshes: Vec<TriMesh> = timer.time(Stage::Approximate, || {
        mesh_ids
            .par_iter()
            .map(|id| make_papermesh(&inputs[id], id, cfg.fine_faces, cfg.face_budget).map(|p| p.mesh).map_err(fail(Stage::Approximate)))
            .collect()
    })?;
    let pm_refs: Vec<&TriMesh> = papermeshes.iter().collect();

    // (c) hierarchy
    let tree = timer.time(Stage::Hierarchy, || {
        let mut next = 0;
        let groups: Vec<Vec<usize>> = levels
            .iter()
            .map(|l| {
                let g = (next..next + l.members.len()).collect();
                next += l.members.len();
                g
            })
            .collect();
        let tree = build_grouped_hierarchy(&pm_refs, &groups).map_err(fail(Stage::Hierarchy))?;
        if let Some(i) = levels.iter().position(|l| l.outermost) {
            if tree.root != i {
                return Err(fail::<String>(Stage::Hierarchy)(format!(
                    "level `{}` is marked outermost but `{}` encloses it",
                    levels[i].id, levels[tree.root].id
                )));
            }
        }
        Ok(tree)
    })?;

    // (d) viewpoint per node with nested children
    let internal: Vec<usize> = tree.nodes.iter().filter(|n| !n.children.is_empty()).map(|n| n.id).collect();
    let rankings: BTreeMap<usize, ViewRanking> = timer.time(Stage::Viewpoint, || {
        Ok(internal
            .iter()
            .map(|&node| {
                let scene: Vec<&TriMesh> =
                    tree.nodes[node].children.iter().flat_map(|c| tree.nodes[*c].members.iter().map(|&m| pm_refs[m])).collect();
                (node, best_viewpoint(&scene, cfg.viewpoint.samples, cfg.viewpoint.resolution))
            })
            .collect())
    })?;

    // (e) cut and stability search
    let plan_opts = PlanOptions { sim: SimParams { mu: cfg.mu, ..SimParams::default() }, up, max_candidates: None };
    let plan = timer.time(Stage::Cut, || plan_cuts(&tree, &pm_refs, &rankings, &plan_opts).map_err(fail(Stage::Cut)))?;

    // (f) stability of the full nested assembly
    let stability = timer.time(Stage::Stability, || {
        let asm = build_assembly(&tree, &pm_refs, &plan.cuts, tree.root, up).map_err(fail(Stage::Stability))?;
        Ok(StabilityFlags {
            per_level_stable: plan.per_level_stable,
            final_stable: plan.final_report.stable,
            final_max_displacement: plan.final_report.max_displacement,
            diverged: plan.final_report.diverged,
            static_stable: static_equilibrium_check(&asm, cfg.mu),
        })
    })?;

    // printable pieces: connected solid components of halves, or whole members
    let mut shells: Vec<(Vec<TriMesh>, CutPlane)> = Vec::new();
    let mut pieces: Vec<Piece> = Vec::new();
    for node in &tree.nodes {
        let level = &levels[node.id];
        if let Some(h) = plan.cuts.get(&node.id) {
            let shell = shells.len();
            shells.push((vec![h.below.clone(), h.above.clone()], h.plane));
            for (side, half) in [("below", &h.below), ("above", &h.above)] {
                let comps: Vec<TriMesh> =
                    half.connected_components().into_iter().filter(|c| c.signed_volume().is_ok_and(|v| v > 0.0)).collect();
                let many = comps.len() > 1;
                for (k, c) in comps.into_iter().enumerate() {
                    let label = if many { format!("{}-{side}-{}", level.id, k + 1) } else { format!("{}-{side}", level.id) };
                    pieces.push(Piece { label, node: node.id, mesh: c, shell: Some(shell) });
                }
            }
        } else {
            for &m in &node.members {
                let label = if node.members.len() > 1 { format!("{}-{}", level.id, mesh_ids[m]) } else { level.id.clone() };
                pieces.push(Piece { label, node: node.id, mesh: papermeshes[m].clone(), shell: None });
            }
        }
    }

    // (g) projection onto every piece of the target level
    let atlases: Vec<Option<TextureAtlas>> = timer.time(Stage::Projection, || {
        pieces
            .iter()
            .map(|p| {
                let onto: Vec<&ProjectionConfig> = cfg.projections.iter().filter(|pr| pr.onto == levels[p.node].id).collect();
                if onto.is_empty() {
                    return Ok(None);
                }
                let (shell_pieces, cut): (Vec<&TriMesh>, Option<&CutPlane>) = match p.shell {
                    Some(s) => (shells[s].0.iter().collect(), Some(&shells[s].1)),
                    None => (vec![&p.mesh], None),
                };
                let mut channels = Vec::new();
                for pr in onto {
                    let structure = &inputs[&pr.structure];
                    let surf = prepare_mode(&p.mesh, structure, pr.mode, &shell_pieces, cut, pr.clip).map_err(fail(Stage::Projection))?;
                    channels.push((pr.channel, project_structure(&surf, structure, pr.channel, cfg.texture_resolution)));
                }
                Ok(Some(combine_channels(&channels)))
            })
            .collect()
    })?;

    // (h) unfolding
    let unfolded: Vec<(Patch2D, f64, usize, u64)> = timer.time(Stage::Unfold, || {
        pieces
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut last = None;
                for attempt in 0..=cfg.anneal.restarts {
                    let s = piece_seed(seed, i, attempt);
                    let params = AnnealParams { iterations: cfg.anneal.iterations, seed: s, ..AnnealParams::default() };
                    match anneal_unfolding(&p.mesh, &params) {
                        Ok(r) => return Ok((r.patch, r.energy, r.iterations, s)),
                        Err(UnfoldError::AnnealFailure(r)) => last = Some(r),
                        Err(e) => return Err(fail::<String>(Stage::Unfold)(format!("piece `{}`: {e}", p.label))),
                    }
                }
                let e = last.map_or(f64::NAN, |r| r.energy);
                Err(fail::<String>(Stage::Unfold)(format!(
                    "piece `{}` kept overlap energy {e:.4} after {} seeds",
                    p.label,
                    cfg.anneal.restarts + 1
                )))
            })
            .collect()
    })?;

    // layout and export
    let dir = opts.out_dir.join(&model);
    let (layout, patches, outputs) = timer.time(Stage::Layout, || {
        std::fs::create_dir_all(&dir).map_err(fail(Stage::Layout))?;
        let mut patches: Vec<Patch2D> = Vec::with_capacity(unfolded.len());
        let mut offset = 0;
        for (p, ..) in &unfolded {
            let mut p = p.clone();
            for t in p.tabs.iter_mut() {
                t.number += offset;
            }
            offset += p.tabs.len();
            patches.push(p);
        }
        let layout = paginate(&patches, paper, None).map_err(fail(Stage::Layout))?;
        let patches: Vec<Patch2D> = patches.iter().map(|p| shrink_tabs(p, TAB_MM / layout.scale)).collect();
        let items: Vec<PrintItem> = pieces
            .iter()
            .zip(&patches)
            .zip(&atlases)
            .map(|((pc, patch), atlas)| PrintItem { label: &pc.label, mesh: &pc.mesh, patch, atlas: atlas.as_ref() })
            .collect();
        let pages = render_pages(&layout, &items, &model);
        let mut outputs = Vec::new();
        for page in &pages {
            write(&mut outputs, &dir, format!("page{:02}_front.svg", page.index + 1), page.front.as_bytes())?;
            write(&mut outputs, &dir, format!("page{:02}_back.svg", page.index + 1), page.back.as_bytes())?;
        }
        for ((pc, patch), atlas) in pieces.iter().zip(&patches).zip(&atlases) {
            let mut obj = Vec::new();
            write_obj(&pc.mesh, &mut obj).map_err(fail(Stage::Layout))?;
            write(&mut outputs, &dir, format!("{}.obj", pc.label), &obj)?;
            let json = serde_json::to_vec_pretty(patch).map_err(fail(Stage::Layout))?;
            write(&mut outputs, &dir, format!("{}_patch.json", pc.label), &json)?;
            if let Some(a) = atlas {
                let (png, chart) = a.to_png();
                write(&mut outputs, &dir, format!("{}_atlas.png", pc.label), &png)?;
                let json = serde_json::to_vec_pretty(&chart).map_err(fail(Stage::Layout))?;
                write(&mut outputs, &dir, format!("{}_chart.json", pc.label), &json)?;
            }
        }
        Ok((layout, patches, outputs))
    })?;

    let structures: Vec<StructureCounts> = cfg
        .structures
        .iter()
        .map(|s| {
            let pm = mesh_ids.iter().position(|m| *m == s.id).map(|i| MeshStats::from(&papermeshes[i]));
            StructureCounts {
                id: s.id.clone(),
                role: if pm.is_some() { "papermesh" } else { "projection" }.into(),
                input: MeshStats::from(&inputs[&s.id]),
                papermesh: pm,
            }
        })
        .collect();
    let totals = Totals {
        input_vertices: structures.iter().filter(|s| s.papermesh.is_some()).map(|s| s.input.vertices).sum(),
        input_faces: structures.iter().filter(|s| s.papermesh.is_some()).map(|s| s.input.faces).sum(),
        papermesh_vertices: structures.iter().filter_map(|s| s.papermesh.as_ref()).map(|m| m.vertices).sum(),
        papermesh_faces: structures.iter().filter_map(|s| s.papermesh.as_ref()).map(|m| m.faces).sum(),
    };
    let level_reports: Vec<LevelReport> = plan
        .decisions
        .iter()
        .map(|d| {
            let ranking = &rankings[&d.node];
            let chosen = ranking.samples.get(d.rank).unwrap_or(ranking.best());
            LevelReport {
                node: d.node,
                label: levels[d.node].id.clone(),
                level: d.level,
                view: chosen.direction,
                entropy: chosen.entropy,
                rank: d.rank,
                plane_origin: d.plane.origin().into(),
                plane_normal: d.plane.normal().into(),
                rejections: d.rejections.clone(),
                top_views: ranking
                    .samples
                    .iter()
                    .take(REPORT_TOP_VIEWS)
                    .map(|s| RankedView { direction: s.direction, entropy: s.entropy })
                    .collect(),
                stable: d.report.stable,
                max_displacement: d.report.max_displacement,
            }
        })
        .collect();
    let patch_reports: Vec<PatchReport> = pieces
        .iter()
        .zip(&patches)
        .zip(&unfolded)
        .enumerate()
        .map(|(i, ((pc, patch), (_, energy, iterations, s)))| PatchReport {
            label: pc.label.clone(),
            level: levels[pc.node].id.clone(),
            vertices: pc.mesh.vertex_count(),
            faces: patch.faces.len(),
            folds: patch.folds.len(),
            cuts: patch.cuts.len(),
            tabs: patch.tabs.len(),
            tab_numbers: [patch.tabs.iter().map(|t| t.number).min().unwrap_or(0), patch.tabs.iter().map(|t| t.number).max().unwrap_or(0)],
            energy: *energy,
            iterations: *iterations,
            seed: *s,
            textured: atlases[i].is_some(),
            page: layout.placements[i].page + 1,
        })
        .collect();
    let mut outputs = outputs;
    outputs.push("report.json".into());
    let report = RunReport {
        model,
        seed,
        paper,
        scale_mm_per_unit: layout.scale,
        pages: layout.pages,
        hierarchy: HierarchyReport { tree: tree.clone(), labels: levels.iter().map(|l| l.id.clone()).collect(), meshes: mesh_ids.clone() },
        levels: level_reports,
        stability,
        structures,
        totals,
        patches: patch_reports,
        stages: timer.stages,
        outputs,
    };
    let json = serde_json::to_vec_pretty(&report).map_err(fail(Stage::Layout))?;
    std::fs::write(dir.join("report.json"), json).map_err(fail(Stage::Layout))?;
    Ok(report)
}
