//! The `amodal` command line: picking, localisation, planning, evaluation,
//! harvest reports, data synthesis and self-checks.

use amodal_core::dataset::{augment_all, synth_scene, AnnotationSet, AugmentSpec, Sample, SynthParams};
use amodal_core::evaluation::{correlate, evaluate, harvest_success, EvalOptions, HarvestLog};
use amodal_core::geometry::{
    back_project, grasp_plan, sample_depth, to_base, Calibration, Point3, QuinticProfile, DEFAULT_ENCLOSE_OFFSET,
    DEFAULT_SAFETY_MARGIN, PICK_ORIENTATION,
};
use amodal_core::maskops::{picking_point_with, BinaryMask, BorderPolicy};
use amodal_core::nn::{
    deep_head_proto_forward, gam_forward, gradient_suite, sppf_forward, DeepHeadConfig, GamParams, SppfConfig,
    DEFAULT_REDUCTION_RATIO, DEFAULT_SPPF_KERNEL,
};
use amodal_core::ndtensor::Tensor;
use amodal_core::pgm::{self, GrayImage};
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug, Parser)]
#[command(name = "amodal", version, about = "Occlusion-robust picking pipeline tools")]
struct Cli {
    /// Print the result document as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Picking point of a binary mask.
    Pick {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, value_enum, default_value_t = Border::Background)]
        border: Border,
    },
    /// Pixel and depth to a base-frame point.
    Locate(LocateArgs),
    /// Grasp waypoints and a quintic timing schedule.
    Plan(PlanArgs),
    /// Mask AP, mAP and precision/recall against annotations.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        by_occlusion: bool,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Harvest success per occlusion level.
    HarvestReport {
        #[arg(long, conflicts_with_all = ["picked", "total"])]
        log: Option<PathBuf>,
        /// Picked counts, zero to high.
        #[arg(long, value_delimiter = ',', requires = "total")]
        picked: Vec<u64>,
        /// Trials per level; one value applies to every level.
        #[arg(long, value_delimiter = ',')]
        total: Vec<u64>,
    },
    /// R² of the least-squares line through (x, y) pairs.
    Correlate {
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Flip, rotation, shear, exposure and noise variants of a dataset.
    Augment {
        #[arg(long)]
        ann: PathBuf,
        /// Directory holding the annotated PGM images.
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 2)]
        variants: usize,
    },
    /// Synthetic occluded scenes with exact masks.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.10, 0.35, 0.60])]
        targets: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        scenes: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
    },
    /// Gradient and shape checks of the network blocks.
    NnCheck {
        /// Skip the sampled 512-channel head check.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Border {
    Background,
    Neutral,
}

#[derive(Debug, Args)]
struct LocateArgs {
    /// Pixel column; with --y instead of --mask.
    #[arg(long, requires = "y", conflicts_with = "mask")]
    x: Option<usize>,
    #[arg(long, requires = "x")]
    y: Option<usize>,
    /// Mask whose picking point is located.
    #[arg(long, required_unless_present = "x")]
    mask: Option<PathBuf>,
    /// 16-bit PGM, millimetres.
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    calib: PathBuf,
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Base-frame target, metres.
    #[arg(long, value_parser = triple, allow_hyphen_values = true)]
    target: [f64; 3],
    #[arg(long, default_value_t = DEFAULT_SAFETY_MARGIN)]
    margin: f64,
    #[arg(long, default_value_t = DEFAULT_ENCLOSE_OFFSET)]
    offset: f64,
    /// Roll, pitch, yaw in radians.
    #[arg(long, value_parser = triple, allow_hyphen_values = true)]
    orientation: Option<[f64; 3]>,
    /// Seconds from pre-grasp to grasp.
    #[arg(long, default_value_t = 2.0)]
    duration: f64,
    #[arg(long, default_value_t = 11)]
    steps: usize,
}

fn triple(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(v).map_err(|v| format!("expected 3 comma-separated numbers, got {}", v.len()))
}

struct Report {
    doc: Value,
    text: String,
    ok: bool,
}

impl Report {
    fn new(doc: Value, text: String) -> Self {
        Self { doc, text, ok: true }
    }
}

pub fn run<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let msg = e.render().to_string();
            let (stdout, stderr) = if e.use_stderr() { (String::new(), msg) } else { (msg, String::new()) };
            return Outcome { code, stdout, stderr };
        }
    };
    match dispatch(&cli) {
        Ok(r) => Outcome {
            code: if r.ok { EXIT_OK } else { EXIT_DOMAIN },
            stdout: if cli.json { format!("{}\n", r.doc) } else { r.text },
            stderr: String::new(),
        },
        Err(e) => Outcome {
            code: EXIT_DOMAIN,
            stdout: if cli.json { format!("{}\n", json!({ "error": format!("{e:#}") })) } else { String::new() },
            stderr: format!("error: {e:#}\n"),
        },
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<Report> {
    match &cli.cmd {
        Command::Pick { mask, border } => pick(mask, *border),
        Command::Locate(a) => locate(a),
        Command::Plan(a) => plan(a),
        Command::Eval {
            gt,
            pred,
            by_occlusion,
            workers,
            out,
        } => eval(gt, pred, *by_occlusion, *workers, out.as_deref()),
        Command::HarvestReport { log, picked, total } => harvest(log.as_deref(), picked, total),
        Command::Correlate { pairs } => correlate_cmd(pairs),
        Command::Augment {
            ann,
            images,
            out_dir,
            variants,
        } => augment_cmd(ann, images, out_dir, *variants, cli.seed),
        Command::Synth {
            out_dir,
            targets,
            scenes,
            width,
            height,
        } => synth_cmd(out_dir, targets, *scenes, *width, *height, cli.seed),
        Command::NnCheck { quick } => nn_check(cli.seed, !*quick),
    }
}

/// Writes through a sibling temporary file renamed into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_image(path: &Path) -> anyhow::Result<GrayImage> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    pgm::decode(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn read_mask(path: &Path) -> anyhow::Result<BinaryMask> {
    BinaryMask::load(path).with_context(|| format!("loading mask {}", path.display()))
}

fn policy(b: Border) -> BorderPolicy {
    match b {
        Border::Background => BorderPolicy::BorderIsBackground,
        Border::Neutral => BorderPolicy::BorderIsNeutral,
    }
}

fn pick(mask: &Path, border: Border) -> anyhow::Result<Report> {
    let p = picking_point_with(&read_mask(mask)?, policy(border))?;
    let text = format!("picking point ({}, {}), clearance {:.4} px\n", p.x, p.y, p.clearance);
    Ok(Report::new(serde_json::to_value(p)?, text))
}

fn point_json(p: &Point3) -> Value {
    json!({ "x": p.x, "y": p.y, "z": p.z })
}

fn locate(a: &LocateArgs) -> anyhow::Result<Report> {
    let (u, v, clearance) = match (&a.mask, a.x, a.y) {
        (Some(m), _, _) => {
            let p = picking_point_with(&read_mask(m)?, BorderPolicy::default())?;
            (p.x, p.y, Some(p.clearance))
        }
        (None, Some(x), Some(y)) => (x, y, None),
        _ => bail!("give --mask or both --x and --y"),
    };
    let calib = Calibration::load(&a.calib).with_context(|| format!("loading {}", a.calib.display()))?;
    let depth = sample_depth(&read_image(&a.depth)?, u, v)?;
    let cam = back_project(u as f64, v as f64, depth, &calib.intrinsics)?;
    let base = to_base(&cam, &calib.hand_eye, &calib.ee_to_base);
    let mut doc = json!({
        "pixel": { "u": u, "v": v },
        "depth_m": depth,
        "camera": point_json(&cam),
        "base": point_json(&base),
    });
    if let Some(c) = clearance {
        doc["clearance"] = json!(c);
    }
    let text = format!(
        "pixel ({u}, {v}) depth {depth:.4} m\ncamera ({:.4}, {:.4}, {:.4}) m\nbase   ({:.4}, {:.4}, {:.4}) m\n",
        cam.x, cam.y, cam.z, base.x, base.y, base.z
    );
    Ok(Report::new(doc, text))
}

fn plan(a: &PlanArgs) -> anyhow::Result<Report> {
    if a.steps < 2 {
        bail!("--steps must be at least 2, got {}", a.steps);
    }
    let target = Point3::new(a.target[0], a.target[1], a.target[2], amodal_core::geometry::Frame::Base)?;
    let p = grasp_plan(&target, a.orientation.unwrap_or(PICK_ORIENTATION), a.margin, a.offset)?;
    let profile = QuinticProfile::new(a.duration)?;
    let (from, to) = (p.pre_grasp.position, p.grasp.position);
    let mut schedule = Vec::with_capacity(a.steps);
    let mut text = format!(
        "pre-grasp ({:.4}, {:.4}, {:.4})\ngrasp     ({:.4}, {:.4}, {:.4})\n\n{:>8} {:>8} {:>10} {:>10} {:>10}\n",
        from.x, from.y, from.z, to.x, to.y, to.z, "t", "s", "x", "y", "z"
    );
    for i in 0..a.steps {
        let t = a.duration * i as f64 / (a.steps - 1) as f64;
        let m = profile.eval(t)?;
        let pos = [
            from.x + m.s * (to.x - from.x),
            from.y + m.s * (to.y - from.y),
            from.z + m.s * (to.z - from.z),
        ];
        text.push_str(&format!("{t:>8.3} {:>8.4} {:>10.4} {:>10.4} {:>10.4}\n", m.s, pos[0], pos[1], pos[2]));
        schedule.push(json!({ "t": t, "s": m.s, "s_dot": m.s_dot, "s_ddot": m.s_ddot, "position": pos }));
    }
    Ok(Report::new(json!({ "plan": p, "duration": a.duration, "schedule": schedule }), text))
}

fn load_set(path: &Path) -> anyhow::Result<AnnotationSet> {
    AnnotationSet::load(path).with_context(|| format!("loading {}", path.display()))
}

fn eval(gt: &Path, pred: &Path, by_occlusion: bool, workers: usize, out: Option<&Path>) -> anyhow::Result<Report> {
    let gts = load_set(gt)?.ground_truth()?;
    let dets = load_set(pred)?.detections()?;
    let report = evaluate(&dets, &gts, &EvalOptions { by_occlusion, workers })?;
    let doc = report.to_json();
    if let Some(path) = out {
        write_atomic(path, serde_json::to_string_pretty(&doc)?.as_bytes())?;
    }
    Ok(Report::new(doc, report.to_text()))
}

fn harvest(log: Option<&Path>, picked: &[u64], total: &[u64]) -> anyhow::Result<Report> {
    let log = match log {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<HarvestLog>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => {
            if picked.is_empty() {
                bail!("give --log or --picked with --total");
            }
            let total = if total.len() == 1 { vec![total[0]; picked.len()] } else { total.to_vec() };
            HarvestLog::from_counts(picked, &total)?
        }
    };
    let s = harvest_success(&log)?;
    Ok(Report::new(serde_json::to_value(&s)?, s.to_text()))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PairsDoc {
    Pairs { pairs: Vec<[f64; 2]> },
    Columns { x: Vec<f64>, y: Vec<f64> },
}

fn correlate_cmd(path: &Path) -> anyhow::Result<Report> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: PairsDoc = serde_json::from_str(&text)
        .with_context(|| format!("{}: expected {{\"pairs\": [[x, y], ...]}} or {{\"x\": [...], \"y\": [...]}}", path.display()))?;
    let (x, y): (Vec<f64>, Vec<f64>) = match doc {
        PairsDoc::Pairs { pairs } => pairs.into_iter().map(|[a, b]| (a, b)).unzip(),
        PairsDoc::Columns { x, y } => (x, y),
    };
    let r2 = correlate(&x, &y)?;
    Ok(Report::new(json!({ "n": x.len(), "r2": r2 }), format!("n = {}, R² = {r2:.4}\n", x.len())))
}

fn augment_cmd(ann: &Path, images: &Path, out_dir: &Path, variants: usize, seed: u64) -> anyhow::Result<Report> {
    let set = load_set(ann)?;
    let spec = AugmentSpec {
        variants_per_image: variants,
        seed,
        ..AugmentSpec::default()
    };
    spec.validate()?;
    let mut samples = Vec::with_capacity(set.images.len());
    for img in &set.images {
        let image = read_image(&images.join(&img.file))?;
        if (image.width, image.height) != (img.w, img.h) {
            bail!("{}: {}x{} pixels but annotated as {}x{}", img.file, image.width, image.height, img.w, img.h);
        }
        samples.push(Sample {
            image,
            instances: set.instances.iter().filter(|i| i.image == img.id).cloned().collect(),
        });
    }
    let out = augment_all(&samples, &spec)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut result = AnnotationSet::default();
    let per = variants + 1;
    for (k, s) in out.iter().enumerate() {
        let src = &set.images[k / per];
        let stem = Path::new(&src.file).file_stem().map_or("image".into(), |s| s.to_string_lossy().into_owned());
        let file = format!("{stem}_v{}.pgm", k % per);
        let id = (k + 1) as u64;
        write_atomic(&out_dir.join(&file), &pgm::encode(&s.image))?;
        result.images.push(amodal_core::dataset::ImageEntry {
            id,
            w: s.image.width,
            h: s.image.height,
            file,
        });
        result.instances.extend(s.instances.iter().cloned().map(|mut i| {
            i.image = id;
            i
        }));
    }
    write_atomic(&out_dir.join("annotations.json"), result.to_json().as_bytes())?;
    let doc = json!({ "images": result.images.len(), "instances": result.instances.len(), "out_dir": out_dir });
    let text = format!(
        "{} images, {} instances written to {}\n",
        result.images.len(),
        result.instances.len(),
        out_dir.display()
    );
    Ok(Report::new(doc, text))
}

fn synth_cmd(out_dir: &Path, targets: &[f64], scenes: usize, width: usize, height: usize, seed: u64) -> anyhow::Result<Report> {
    let params = SynthParams {
        width,
        height,
        ..SynthParams::new(targets.to_vec())
    };
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut set = AnnotationSet::default();
    let mut fruits = Vec::new();
    let mut text = format!("{:<6} {:<6} {:>7} {:>9} {:<8}\n", "scene", "fruit", "target", "achieved", "level");
    for s in 0..scenes {
        let scene = synth_scene(&params, seed.wrapping_add(s as u64))?;
        let id = (s + 1) as u64;
        let file = format!("scene{s}.pgm");
        write_atomic(&out_dir.join(&file), &pgm::encode(&scene.image))?;
        let ann = scene.annotations(id, &file, params.class_id);
        set.images.extend(ann.images);
        set.instances.extend(ann.instances);
        for (j, f) in scene.fruits.iter().enumerate() {
            let amodal = format!("scene{s}_fruit{j}_amodal.pgm");
            let visible = format!("scene{s}_fruit{j}_visible.pgm");
            write_atomic(&out_dir.join(&amodal), &f.amodal.to_pgm())?;
            write_atomic(&out_dir.join(&visible), &f.visible.to_pgm())?;
            text.push_str(&format!(
                "{s:<6} {j:<6} {:>7.3} {:>9.4} {:<8}\n",
                f.target,
                f.achieved,
                f.level().name()
            ));
            fruits.push(json!({
                "scene": s, "fruit": j, "target": f.target, "achieved": f.achieved,
                "level": f.level(), "amodal_mask": amodal, "visible_mask": visible,
            }));
        }
    }
    write_atomic(&out_dir.join("annotations.json"), set.to_json().as_bytes())?;
    Ok(Report::new(json!({ "scenes": scenes, "fruits": fruits }), text))
}

fn nn_check(seed: u64, wide: bool) -> anyhow::Result<Report> {
    let mut rows = Vec::new();
    let mut ok = true;
    let mut text = format!("{:<18} {:>8} {:>12} {:>6}\n", "check", "probed", "max_rel_err", "pass");
    for c in gradient_suite(seed, wide)? {
        ok &= c.pass;
        text.push_str(&format!("{:<18} {:>8} {:>12.3e} {:>6}\n", c.name, c.probed, c.max_rel_err, c.pass));
        rows.push(serde_json::to_value(&c)?);
    }
    for (name, expect, got) in shape_checks(seed)? {
        let pass = expect == got;
        ok &= pass;
        text.push_str(&format!("{name:<18} {:>8} {:>12} {pass:>6}\n", "-", format!("{got:?}")));
        rows.push(json!({ "name": name, "expected_shape": expect, "shape": got, "pass": pass }));
    }
    Ok(Report {
        doc: json!({ "pass": ok, "checks": rows }),
        text,
        ok,
    })
}

type ShapeRow = (&'static str, Vec<usize>, Vec<usize>);

fn shape_checks(seed: u64) -> anyhow::Result<Vec<ShapeRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::random_uniform(&[64, 8, 8], -1.0, 1.0, &mut rng);
    let gam = GamParams::random(64, DEFAULT_REDUCTION_RATIO, &mut rng)?;
    let sppf = SppfConfig::random(DEFAULT_SPPF_KERNEL, 64, 32, 64, &mut rng)?;
    let head = DeepHeadConfig::widened(&mut rng)?;
    let hx = Tensor::random_uniform(&[head.in_channels(), 6, 6], -1.0, 1.0, &mut rng);
    Ok(vec![
        ("gam_shape", vec![64, 8, 8], gam_forward(&x, &gam)?.shape().to_vec()),
        ("sppf_shape", vec![64, 8, 8], sppf_forward(&x, &sppf)?.shape().to_vec()),
        (
            "deep_head_shape",
            vec![head.proto_channels(), 6, 6],
            deep_head_proto_forward(&hx, &head)?.shape().to_vec(),
        ),
    ])
}
