//! Stage drivers behind the `cavl` binary. Every stage reads and writes
//! plain files in a run directory so any stage can be replaced by real data.

use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use cavl::calibration::{calibrate, read_pose_text, write_pose_text, CalibrationParams, ScoreImage};
use cavl::codec::{decode_stack, DecodeParams, PatternSuite, SuiteManifest};
use cavl::evaluation::{coverage_curve, mesh_deviation_masked};
use cavl::geometry::{CameraModel, CaveModel, Intrinsics, RigidMotion, Vec3};
use cavl::lightmap::LightMap;
use cavl::mesh::TriangleMesh;
use cavl::raster::{Label, SegmentationMask};
use cavl::reconstruction::{reconstruct, write_energy_log, ReconstructionParams};
use cavl::simulator::{SceneFile, Trace};

/// Error kinds that decide the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad or missing configuration (exit 2).
    Config(String),
    /// A result was produced but the numerics did not converge (exit 4).
    NotConverged(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::NotConverged(m) => write!(f, "not converged: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    Failure::Config(msg.into()).into()
}

/// 0 success, 2 configuration, 3 data, 4 numerical failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use cavl::error::Error as E;
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Config(_) => 2,
                Failure::NotConverged(_) => 4,
            };
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_) | E::InvalidParameter(_) => 2,
                E::Diverged(_) | E::NoValidFaces { .. } | E::UnwrapInconsistent { .. } | E::DegenerateDirection => 4,
                _ => 3,
            };
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return 2;
        }
    }
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub frequencies: Vec<u32>,
    pub phases: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            frequencies: vec![1, 8, 64],
            phases: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// ICP-align the reconstruction before measuring.
    pub pre_align: bool,
    /// Vertices projecting within this many px of the background are left
    /// out of the deviation statistics.
    pub boundary_band: u32,
    pub coverage_bins: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            pre_align: false,
            boundary_band: 5,
            coverage_bins: 100,
        }
    }
}

/// Run configuration. Relative paths resolve against the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scene description (TOML) used by `simulate` and as the source of
    /// intrinsics and cube size.
    pub scene: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Overrides the scene seed.
    pub seed: Option<u64>,
    /// Overrides the scene intrinsics.
    pub intrinsics: Option<Intrinsics>,
    /// Anchor point; defaults to the simulated anchor in `truth/anchor.txt`.
    pub x0: Option<[f64; 3]>,
    pub suite: SuiteConfig,
    pub decode: DecodeParams,
    pub calibration: CalibrationParams,
    pub reconstruction: ReconstructionParams,
    pub evaluation: EvaluationConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Loads `path` and resolves relative paths; referenced files must exist.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(s) = &cfg.scene {
            cfg.scene = Some(base.join(s));
        }
        if let Some(o) = &cfg.out {
            cfg.out = Some(base.join(o));
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> anyhow::Result<()> {
        if let Some(s) = &self.scene {
            if !s.is_file() {
                return Err(config_err(format!("scene file {} does not exist", s.display())));
            }
        }
        self.reconstruction.schedule.validate().map_err(|e| config_err(e.to_string()))?;
        if self.evaluation.coverage_bins == 0 {
            return Err(config_err("coverage_bins must be positive"));
        }
        self.suite()?;
        Ok(())
    }

    pub fn suite(&self) -> anyhow::Result<PatternSuite> {
        PatternSuite::new(&self.suite.frequencies, self.suite.phases).map_err(|e| config_err(e.to_string()))
    }

    fn scene_file(&self) -> anyhow::Result<Option<SceneFile>> {
        self.scene
            .as_deref()
            .map(|p| SceneFile::load(p).map_err(|e| config_err(e.to_string())))
            .transpose()
    }

    pub fn intrinsics(&self) -> anyhow::Result<Intrinsics> {
        if let Some(k) = self.intrinsics {
            return Ok(k);
        }
        match self.scene_file()? {
            Some(s) => Ok(s.camera),
            None => Err(config_err("missing intrinsics: set `intrinsics` or `scene`")),
        }
    }

    pub fn cave(&self) -> anyhow::Result<CaveModel> {
        let h = self.scene_file()?.map_or(CaveModel::default().half_extent(), |s| s.half_extent);
        CaveModel::new(h).map_err(|e| config_err(e.to_string()))
    }

    /// Self-describing copy: every parameter spelled out, no output path.
    pub fn manifest(&self) -> anyhow::Result<String> {
        let mut m = self.clone();
        m.out = None;
        m.scene = self.scene.as_ref().and_then(|p| p.file_name().map(PathBuf::from));
        let mut text = String::from(
            "# resolved run configuration; omitted optional keys: intrinsics and x0 come from\n\
             # the scene and the simulated anchor, calibration.score.noise_floor is estimated\n",
        );
        text.push_str(&toml::to_string(&m)?);
        if let Some(scene) = self.scene_file()? {
            text.push_str("\n# scene\n");
            let mut t = toml::Table::new();
            t.insert("scene_resolved".into(), toml::Value::try_from(scene)?);
            text.push_str(&toml::to_string(&t)?);
        }
        Ok(text)
    }
}

/// File names inside a run directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn stack(&self) -> PathBuf {
        self.root.join("stack")
    }
    pub fn truth(&self, name: &str) -> PathBuf {
        self.root.join("truth").join(name)
    }
    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

pub const LIGHT_MAP: &str = "light_map.bin";
pub const POSE: &str = "pose.txt";
pub const MASK_INITIAL: &str = "mask_initial.pgm";
pub const MASK_FINAL: &str = "mask_final.pgm";
pub const SCORE: &str = "score.pgm";
pub const RECON: &str = "recon.obj";
pub const ENERGY: &str = "energy.csv";
pub const DEVIATION: &str = "deviation.csv";
pub const DEVIATION_VERTICES: &str = "deviation_vertices.txt";
pub const COVERAGE: &str = "coverage.csv";
pub const RUN_MANIFEST: &str = "run_manifest.toml";
pub const ANCHOR: &str = "anchor.txt";
pub const SPECIMEN: &str = "specimen.obj";

fn create(path: &Path) -> anyhow::Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> anyhow::Result<BufReader<fs::File>> {
    Ok(BufReader::new(fs::File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

pub fn read_light_map(path: &Path) -> anyhow::Result<LightMap> {
    Ok(LightMap::read_from(open(path)?)?)
}

pub fn read_mask(path: &Path) -> anyhow::Result<SegmentationMask> {
    Ok(SegmentationMask::read_pnm(open(path)?)?)
}

pub fn read_pose(path: &Path) -> anyhow::Result<RigidMotion> {
    Ok(read_pose_text(open(path)?)?.0)
}

pub fn read_mesh(path: &Path) -> anyhow::Result<TriangleMesh> {
    Ok(TriangleMesh::read_obj(open(path)?)?)
}

fn write_point(path: &Path, p: &Vec3) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{:e} {:e} {:e}", p.x, p.y, p.z)?;
    Ok(w.flush()?)
}

pub fn read_point(path: &Path) -> anyhow::Result<Vec3> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_point(&text)
}

/// Three numbers separated by commas or whitespace.
pub fn parse_point(text: &str) -> anyhow::Result<Vec3> {
    let v: Vec<f64> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| anyhow!("bad number `{t}`")))
        .collect::<anyhow::Result<_>>()?;
    match v[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err(anyhow!("expected three coordinates, got {}", v.len())),
    }
}

/// 8-bit PGM: scores 0..3 map to 0..240, undefined pixels to 255.
fn write_score(path: &Path, s: &ScoreImage) -> anyhow::Result<()> {
    let mut w = create(path)?;
    write!(w, "P5\n{} {}\n255\n", s.width, s.height)?;
    let bytes: Vec<u8> = s.values.iter().map(|v| v.map_or(255, |v| (v * 80.0).round().clamp(0.0, 240.0) as u8)).collect();
    w.write_all(&bytes)?;
    Ok(w.flush()?)
}

fn write_mask(path: &Path, m: &SegmentationMask) -> anyhow::Result<()> {
    let mut w = create(path)?;
    m.write_pnm(&mut w)?;
    Ok(w.flush()?)
}

fn log_stage(stage: &str, t: Instant) {
    eprintln!("[{stage}] done in {:.2} s", t.elapsed().as_secs_f64());
}

/// Renders the suite and writes the stack plus the ground-truth bundle.
pub fn cmd_simulate(cfg: &RunConfig, out: &Layout) -> anyhow::Result<()> {
    let t = Instant::now();
    let path = cfg.scene.as_deref().ok_or_else(|| config_err("simulate needs a scene file"))?;
    let mut file = SceneFile::load(path).map_err(|e| config_err(e.to_string()))?;
    if let Some(seed) = cfg.seed {
        file.seed = seed;
    }
    let scene = file.to_scene(path.parent().unwrap_or(Path::new(".")))?;
    let suite = cfg.suite()?;
    let traces = scene.trace_all();
    let images: Vec<_> = suite
        .frames()
        .iter()
        .enumerate()
        .map(|(i, spec)| scene.render_frame(&traces, spec, i as u64))
        .collect();
    let manifest = SuiteManifest::for_suite(&suite, scene.cave.half_extent(), scene.width(), scene.height());
    manifest.write_stack(&out.stack(), &images)?;

    let gt = scene.ground_truth_from(&traces);
    let mut w = create(&out.truth(LIGHT_MAP))?;
    gt.light_map.write_to(&mut w)?;
    w.flush()?;
    write_mask(&out.truth("mask.pgm"), &gt.mask)?;
    let mut w = create(&out.truth(POSE))?;
    write_pose_text(&mut w, &gt.pose, 0.0)?;
    w.flush()?;
    if let Some(mesh) = &gt.specimen {
        let mut w = create(&out.truth(SPECIMEN))?;
        mesh.write_obj(&mut w)?;
        w.flush()?;
    }
    if let Some(x0) = simulated_anchor(&traces, &gt.mask) {
        write_point(&out.truth(ANCHOR), &x0)?;
    }
    log_stage("simulate", t);
    Ok(())
}

/// Surface point seen by the foreground pixel closest to the foreground
/// centroid.
fn simulated_anchor(traces: &[Trace], mask: &SegmentationMask) -> Option<Vec3> {
    let w = mask.width as usize;
    let fg: Vec<usize> = (0..mask.labels.len()).filter(|&i| mask.labels[i] == Label::Foreground).collect();
    if fg.is_empty() {
        return None;
    }
    let n = fg.len() as f64;
    let cx = fg.iter().map(|&i| (i % w) as f64).sum::<f64>() / n;
    let cy = fg.iter().map(|&i| (i / w) as f64).sum::<f64>() / n;
    let best = fg.iter().copied().min_by(|&a, &b| {
        let da = ((a % w) as f64 - cx).powi(2) + ((a / w) as f64 - cy).powi(2);
        let db = ((b % w) as f64 - cx).powi(2) + ((b / w) as f64 - cy).powi(2);
        da.total_cmp(&db).then(a.cmp(&b))
    })?;
    match traces[best] {
        Trace::Reflected { hit, .. } => Some(hit),
        _ => None,
    }
}

pub fn cmd_decode(cfg: &RunConfig, stack: &Path, out: &Layout) -> anyhow::Result<()> {
    let t = Instant::now();
    let (manifest, frames) = SuiteManifest::read_stack(stack)?;
    let cave = CaveModel::new(manifest.half_extent)?;
    let refs: Vec<_> = frames.iter().map(|(s, i)| (*s, i)).collect();
    let lm = decode_stack(&refs, &cave, &cfg.decode)?;
    let mut w = create(&out.file(LIGHT_MAP))?;
    lm.write_to(&mut w)?;
    w.flush()?;
    eprintln!("[decode] {} of {} pixels valid", lm.valid_count(), lm.len());
    log_stage("decode", t);
    Ok(())
}

pub fn cmd_calibrate(cfg: &RunConfig, light_map: &Path, out: &Layout) -> anyhow::Result<()> {
    let t = Instant::now();
    let k = cfg.intrinsics()?;
    let cave = cfg.cave()?;
    let lm = read_light_map(light_map)?;
    let c = calibrate(&lm, &k, &cave, &cfg.calibration)?;
    let mut w = create(&out.file(POSE))?;
    c.pose.write_text(&mut w)?;
    w.flush()?;
    write_mask(&out.file(MASK_INITIAL), &c.initial_mask)?;
    write_mask(&out.file(MASK_FINAL), &c.final_mask)?;
    write_score(&out.file(SCORE), &c.score)?;
    eprintln!(
        "[calibrate] wall {}, rms {:.4} px, {} background pixels{}",
        c.pose.wall_face,
        c.pose.rms_reproj,
        c.pose.inlier_count,
        if c.pose.converged { "" } else { " (refinement hit its iteration cap)" }
    );
    log_stage("calibrate", t);
    Ok(())
}

pub struct ReconstructInputs<'a> {
    pub light_map: &'a Path,
    pub pose: &'a Path,
    pub mask: &'a Path,
    pub x0: Vec3,
}

pub fn cmd_reconstruct(cfg: &RunConfig, inputs: &ReconstructInputs, out: &Layout) -> anyhow::Result<()> {
    let t = Instant::now();
    let k = cfg.intrinsics()?;
    let lm = read_light_map(inputs.light_map)?;
    let pose = read_pose(inputs.pose)?;
    let mask = read_mask(inputs.mask)?;
    let camera = CameraModel::new(k, pose)?;
    let r = reconstruct(&lm, &camera, &mask, &inputs.x0, &cfg.reconstruction)?;
    let mut w = create(&out.file(RECON))?;
    r.mesh.write_obj(&mut w)?;
    w.flush()?;
    let mut w = create(&out.file(ENERGY))?;
    write_energy_log(&mut w, &r.log)?;
    w.flush()?;
    eprintln!(
        "[reconstruct] {} vertices, {} faces, final energy {:.4e}",
        r.mesh.vertices.len(),
        r.mesh.triangles.len(),
        r.log.last().map_or(0.0, |e| e.energy)
    );
    log_stage("reconstruct", t);
    Ok(())
}

pub struct EvaluateInputs<'a> {
    pub recon: &'a Path,
    pub truth: &'a Path,
    pub light_map: &'a Path,
    pub pose: &'a Path,
    /// Foreground mask for coverage and the boundary band, if available.
    pub mask: Option<&'a Path>,
}

/// Vertices whose pixel lies at least `band` px from every non-foreground
/// pixel.
pub fn interior_vertices(mesh: &TriangleMesh, camera: &CameraModel, mask: &SegmentationMask, band: u32) -> Vec<bool> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let b = band as i64;
    let fg = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && mask.labels[(y * w + x) as usize] == Label::Foreground;
    mesh.vertices
        .iter()
        .map(|p| {
            let Ok((u, v)) = camera.project_world(p) else { return false };
            let (x, y) = (u.round() as i64, v.round() as i64);
            (-b..=b).all(|dy| (-b..=b).all(|dx| dx * dx + dy * dy > b * b || fg(x + dx, y + dy)))
        })
        .collect()
}

pub fn cmd_evaluate(cfg: &RunConfig, inputs: &EvaluateInputs, out: &Layout) -> anyhow::Result<()> {
    let t = Instant::now();
    let recon = read_mesh(inputs.recon)?;
    let truth = read_mesh(inputs.truth)?;
    let lm = read_light_map(inputs.light_map)?;
    let pose = read_pose(inputs.pose)?;
    let mask = inputs.mask.map(read_mask).transpose()?;
    let camera = CameraModel::new(cfg.intrinsics()?, pose)?;
    let cave = cfg.cave()?;

    let keep = mask.as_ref().map(|m| interior_vertices(&recon, &camera, m, cfg.evaluation.boundary_band));
    let report = mesh_deviation_masked(&recon, &truth, cfg.evaluation.pre_align, keep.as_deref())?;
    let mut w = create(&out.file(DEVIATION))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&out.file(DEVIATION_VERTICES))?;
    report.write_sidecar(&mut w)?;
    w.flush()?;

    let curve = coverage_curve(&lm, &camera, &cave, mask.as_ref(), cfg.evaluation.coverage_bins)?;
    let mut w = create(&out.file(COVERAGE))?;
    curve.write_csv(&mut w)?;
    w.flush()?;
    eprintln!(
        "[evaluate] mean {:.4} mm, max {:.4} mm, area {:.4} m2, {} faces; back wall {}",
        report.mean, report.max, report.area_m2, report.face_count, curve.back_wall
    );
    log_stage("evaluate", t);
    if let Some(fit) = &report.alignment {
        if !fit.converged {
            return Err(Failure::NotConverged(format!("ICP stopped after {} iterations", fit.rms_log.len() - 1)).into());
        }
    }
    Ok(())
}

/// Anchor from the configuration, else the one written by `simulate`.
pub fn resolve_anchor(cfg: &RunConfig, out: &Layout) -> anyhow::Result<Vec3> {
    if let Some(p) = cfg.x0 {
        return Ok(Vec3::from(p));
    }
    let path = out.truth(ANCHOR);
    if path.is_file() {
        return read_point(&path);
    }
    Err(config_err("no anchor point: set `x0` or run `simulate` first"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Decode,
    Calibrate,
    Reconstruct,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Simulate, Stage::Decode, Stage::Calibrate, Stage::Reconstruct, Stage::Evaluate];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Decode => "decode",
            Stage::Calibrate => "calibrate",
            Stage::Reconstruct => "reconstruct",
            Stage::Evaluate => "evaluate",
        }
    }
}

/// Error raised by a pipeline stage, tagged with the stage name.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {:#}", self.stage.name(), self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(self.source.as_ref())
    }
}

/// Settings a stage's outputs depend on; a stage is complete for
/// `--resume` when its marker holds the same text.
fn fingerprint(cfg: &RunConfig, stage: Stage) -> anyhow::Result<String> {
    let mut s = String::new();
    for st in Stage::ALL {
        let part = match st {
            Stage::Simulate => format!(
                "scene = {:?}\nseed = {:?}\n{}",
                cfg.scene_file()?.map(|f| toml::to_string(&f)).transpose()?,
                cfg.seed,
                toml::to_string(&cfg.suite)?
            ),
            Stage::Decode => toml::to_string(&cfg.decode)?,
            Stage::Calibrate => format!("{:?}\n{}", cfg.intrinsics, toml::to_string(&cfg.calibration)?),
            Stage::Reconstruct => format!("x0 = {:?}\n{}", cfg.x0, toml::to_string(&cfg.reconstruction)?),
            Stage::Evaluate => toml::to_string(&cfg.evaluation)?,
        };
        s.push_str(&format!("[{}]\n{part}\n", st.name()));
        if st == stage {
            break;
        }
    }
    Ok(s)
}

/// Files whose presence, together with the marker, marks a stage done.
fn outputs(out: &Layout, stage: Stage) -> Vec<PathBuf> {
    match stage {
        Stage::Simulate => vec![out.stack().join("manifest.toml"), out.truth(LIGHT_MAP), out.truth("mask.pgm"), out.truth(POSE)],
        Stage::Decode => vec![out.file(LIGHT_MAP)],
        Stage::Calibrate => vec![out.file(POSE), out.file(MASK_INITIAL), out.file(MASK_FINAL), out.file(SCORE)],
        Stage::Reconstruct => vec![out.file(RECON), out.file(ENERGY)],
        Stage::Evaluate => vec![out.file(DEVIATION), out.file(DEVIATION_VERTICES), out.file(COVERAGE)],
    }
}

fn marker(out: &Layout, stage: Stage) -> PathBuf {
    out.root.join(".stages").join(stage.name())
}

fn run_stage(cfg: &RunConfig, out: &Layout, stage: Stage) -> anyhow::Result<()> {
    match stage {
        Stage::Simulate => cmd_simulate(cfg, out),
        Stage::Decode => cmd_decode(cfg, &out.stack(), out),
        Stage::Calibrate => cmd_calibrate(cfg, &out.file(LIGHT_MAP), out),
        Stage::Reconstruct => {
            let x0 = resolve_anchor(cfg, out)?;
            let inputs = ReconstructInputs {
                light_map: &out.file(LIGHT_MAP),
                pose: &out.file(POSE),
                mask: &out.file(MASK_FINAL),
                x0,
            };
            cmd_reconstruct(cfg, &inputs, out)
        }
        Stage::Evaluate => {
            let truth = out.truth(SPECIMEN);
            if !truth.is_file() {
                eprintln!("[evaluate] skipped: scene has no specimen");
                return Ok(());
            }
            let inputs = EvaluateInputs {
                recon: &out.file(RECON),
                truth: &truth,
                light_map: &out.file(LIGHT_MAP),
                pose: &out.file(POSE),
                mask: Some(&out.file(MASK_FINAL)),
            };
            cmd_evaluate(cfg, &inputs, out)
        }
    }
}

/// All stages in order. With `resume`, stages whose marker matches the
/// current settings are skipped; once one stage reruns, all later ones do.
pub fn cmd_pipeline(cfg: &RunConfig, out: &Layout, resume: bool) -> anyhow::Result<()> {
    fs::create_dir_all(&out.root).with_context(|| format!("creating {}", out.root.display()))?;
    fs::write(out.file(RUN_MANIFEST), cfg.manifest()?)?;
    let mut fresh = false;
    for stage in Stage::ALL {
        let fp = fingerprint(cfg, stage)?;
        let m = marker(out, stage);
        let done = fs::read_to_string(&m).is_ok_and(|t| t == fp) && outputs(out, stage).iter().all(|p| p.is_file());
        if resume && !fresh && done {
            eprintln!("[{}] up to date, skipped", stage.name());
            continue;
        }
        fresh = true;
        let _ = fs::remove_file(&m);
        run_stage(cfg, out, stage).map_err(|source| StageError { stage, source })?;
        fs::create_dir_all(m.parent().unwrap())?;
        fs::write(&m, fp)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_every_field() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.suite.frequencies, vec![1, 8, 64]);
        assert_eq!(cfg.reconstruction.schedule.levels, 3);
        let back = RunConfig::from_toml(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let e = RunConfig::from_toml("colour = 3").unwrap_err();
        assert_eq!(exit_code(&e), 2);
        let e = RunConfig::from_toml("[reconstruction]\ngrid = 3").unwrap_err();
        assert_eq!(exit_code(&e), 2);
    }

    #[test]
    fn missing_intrinsics() {
        let e = RunConfig::default().intrinsics().unwrap_err();
        assert_eq!(exit_code(&e), 2);
    }

    #[test]
    fn exit_codes() {
        use cavl::error::Error as E;
        assert_eq!(exit_code(&anyhow::Error::from(E::Diverged(60))), 4);
        assert_eq!(exit_code(&anyhow::Error::from(E::ManifestMismatch("x".into()))), 3);
        assert_eq!(exit_code(&anyhow::Error::from(E::Config("x".into()))), 2);
        let nested = anyhow::Error::from(StageError {
            stage: Stage::Reconstruct,
            source: E::AnchorOutsideForeground.into(),
        });
        assert_eq!(exit_code(&nested), 3);
        assert!(nested.to_string().contains("reconstruct"));
    }

    #[test]
    fn points_parse() {
        assert_eq!(parse_point("1, 2.5,-3").unwrap(), Vec3::new(1.0, 2.5, -3.0));
        assert_eq!(parse_point("1e3 0 0\n").unwrap(), Vec3::new(1000.0, 0.0, 0.0));
        assert!(parse_point("1,2").is_err());
    }
}
