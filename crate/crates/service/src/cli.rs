//! The `xroads` command line.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use xroads_core::protocol::{encode_frame_packet, SceneConfig};
use xroads_core::store::StatsStore;
use xroads_core::ClassSet;
use xroads_eval::records::load_dataset;
use xroads_eval::reference::reference_manifest;
use xroads_eval::{
    evaluate_dataset, plan_augmentation, split_dataset, tracking_metrics, AccuracyDenominator, ApInterpolation,
    AugmentConfig, EvalConfig, LabelManifest, TrackBox,
};
use xroads_sim::{apply_noise, simulate, GroundTruthBundle, NoiseParams};

use crate::api::{self, AppState};
use crate::query::{StatsParams, StatsQuery};
use crate::source::{load_scenario, InputSpec};
use crate::worker::{Worker, WorkerConfig, WorkerStatus};

#[derive(Debug, Parser)]
#[command(name = "xroads", version, about = "Intersection analytics from vehicle detections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate a detection stream and its ground truth.
    Simulate(SimulateArgs),
    /// Run pipelines over files, TCP streams or the embedded simulator.
    Run(RunArgs),
    /// Run over recorded files.
    Replay(RunArgs),
    /// Print bucketed statistics from a store.
    Report(ReportArgs),
    /// Detection and tracking evaluation.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Plan image duplications that rebalance class shares.
    PlanAugment(PlanArgs),
    /// Stratified train/valid/test split of a label manifest.
    Split(SplitArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Preset name or scenario file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Detection stream output (one packet per line).
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth bundle output.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Matching scene configuration output.
    #[arg(long)]
    pub scene_out: Option<PathBuf>,
    /// Noise parameters (JSON) replacing the scenario's own.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Ignore any noise in the scenario.
    #[arg(long)]
    pub clean: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scene configuration, one per input (optional for `sim:` inputs).
    #[arg(long)]
    pub scene: Vec<PathBuf>,
    /// `FILE`, `tcp://host:port` or `sim:<preset|file>[?seed=N]`; repeat for several cameras.
    #[arg(long, required = true)]
    pub input: Vec<String>,
    /// Presence receiver, `tcp://host:port`.
    #[arg(long)]
    pub tsc: Option<String>,
    /// Store directory; in memory when omitted.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Serve the HTTP API on this port and keep running after the streams end.
    #[arg(long)]
    pub serve: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    /// Process packets as fast as possible instead of at their timestamps.
    #[arg(long)]
    pub max_speed: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Epoch milliseconds, inclusive.
    #[arg(long)]
    pub from: Option<String>,
    /// Epoch milliseconds, exclusive.
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub bucket: Option<String>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub camera: Option<String>,
    #[arg(long)]
    pub detector: Option<String>,
    #[arg(long)]
    pub class: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Precision, recall, AP and accuracy of detection records.
    Det(EvalDetArgs),
    /// Identity switches and fragmentation of tracks.
    Track(EvalTrackArgs),
}

#[derive(Debug, Args)]
pub struct EvalDetArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Class-set preset (`six` or `ten`).
    #[arg(long, default_value = "six")]
    pub classes: String,
    /// `all-point` or `101-point`.
    #[arg(long, default_value = "all-point")]
    pub ap: String,
    /// Precision-recall curves output (CSV).
    #[arg(long)]
    pub pr_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalTrackArgs {
    /// Ground-truth bundle, track-box lines or a store directory.
    #[arg(long)]
    pub gt: PathBuf,
    /// Track-box lines, ground-truth bundle or a store directory.
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Manifest file, or `reference` for the built-in published class counts.
    #[arg(long)]
    pub manifest: String,
    #[arg(long, default_value_t = 0.40)]
    pub majority_cap: f64,
    #[arg(long, default_value_t = 0.05)]
    pub minority_floor: f64,
    /// Copies per image, or `none` for no limit.
    #[arg(long, default_value = "5")]
    pub dup_cap: String,
    /// Full plan output (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Manifest file, or `reference`.
    #[arg(long)]
    pub manifest: String,
    #[arg(long, default_value = "0.9,0.05,0.05")]
    pub ratios: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Assignment output (CSV); sizes are printed either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Cmd::Simulate(a) => cmd_simulate(&a),
        Cmd::Run(a) => cmd_run(&a, false),
        Cmd::Replay(a) => cmd_run(&a, true),
        Cmd::Report(a) => cmd_report(&a),
        Cmd::Eval(EvalCmd::Det(a)) => cmd_eval_det(&a),
        Cmd::Eval(EvalCmd::Track(a)) => cmd_eval_track(&a),
        Cmd::PlanAugment(a) => cmd_plan(&a),
        Cmd::Split(a) => cmd_split(&a),
    }
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for l in lines {
        w.write_all(l.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let sc = load_scenario(&a.scenario)?;
    let classes = sc.classes()?;
    let (clean, gt) = simulate(&sc, a.seed)?;
    let noise = match (&a.noise, a.clean) {
        (Some(p), _) => Some(serde_json::from_str::<NoiseParams>(&fs::read_to_string(p)?).context("noise file")?),
        (None, true) => None,
        (None, false) => sc.noise.clone(),
    };
    let packets = match noise {
        Some(np) if !np.is_identity() => apply_noise(&clean, &np, classes.len(), sc.camera.image_size, a.seed)?,
        _ => clean,
    };
    write_lines(&a.out, packets.iter().map(|p| encode_frame_packet(p, &classes)))?;
    if let Some(p) = &a.gt {
        gt.save(p)?;
    }
    if let Some(p) = &a.scene_out {
        fs::write(p, sc.scene_config().to_json_pretty())?;
    }
    eprintln!("{} packets, {} vehicles", packets.len(), gt.tracks.len());
    Ok(0)
}

/// Pairs inputs with scenes; `sim:` inputs may take their scene from the scenario.
fn worker_configs(a: &RunArgs, replay: bool) -> Result<Vec<WorkerConfig>> {
    if !a.scene.is_empty() && a.scene.len() != a.input.len() {
        bail!("give one --scene per --input ({} scenes, {} inputs)", a.scene.len(), a.input.len());
    }
    let mut out = Vec::new();
    for (i, raw) in a.input.iter().enumerate() {
        let input: InputSpec = raw.parse()?;
        if replay && !matches!(input, InputSpec::File(_)) {
            bail!("replay takes file inputs; got {raw}");
        }
        let (scene, scene_path) = match a.scene.get(i) {
            Some(p) => (
                SceneConfig::load(p).map_err(|e| anyhow!("configuration error in {}: {e}", p.display()))?,
                Some(p.clone()),
            ),
            None => match &input {
                InputSpec::Sim { scenario, .. } => (load_scenario(scenario)?.scene_config(), None),
                _ => bail!("--scene is required for input {raw}"),
            },
        };
        out.push(WorkerConfig {
            scene,
            scene_path,
            input,
            max_speed: a.max_speed,
            tsc_addr: a.tsc.clone(),
        });
    }
    Ok(out)
}

fn cmd_run(a: &RunArgs, replay: bool) -> Result<i32> {
    let configs = worker_configs(a, replay)?;
    let store = match &a.store {
        Some(dir) => StatsStore::open(dir).with_context(|| format!("opening store {}", dir.display()))?,
        None => StatsStore::in_memory(),
    };
    let store = Arc::new(Mutex::new(store));
    let mut workers = Vec::new();
    for cfg in configs {
        workers.push(Worker::start(cfg, store.clone()).map_err(|e| anyhow!("configuration error: {e}"))?);
    }

    let Some(port) = a.serve else {
        let mut failed = false;
        for w in workers {
            let (handle, summary) = w.join();
            if let Some(s) = summary {
                println!("{}", serde_json::to_string(&s)?);
            }
            if handle.status == WorkerStatus::Failed {
                failed = true;
                eprintln!("{}: {}", handle.camera_id, handle.last_error.unwrap_or_default());
            }
        }
        store.lock().expect("store lock").flush()?;
        return Ok(if failed { 1 } else { 0 });
    };

    let state = AppState::new(workers.iter().map(Worker::reference).collect(), store.clone());
    for w in &workers {
        let shared = w.shared().clone();
        thread::spawn(move || loop {
            if let Some(s) = shared.summary() {
                println!("{}", serde_json::to_string(&s).expect("summary serializes"));
                let _ = std::io::stdout().flush();
                return;
            }
            thread::sleep(Duration::from_millis(100));
        });
    }
    let addr: SocketAddr = format!("{}:{port}", a.bind).parse().context("--bind/--serve address")?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("serving on http://{}", listener.local_addr()?);
        tokio::select! {
            r = api::serve(listener, state) => r?,
            _ = tokio::signal::ctrl_c() => {}
        }
        anyhow::Ok(())
    })?;
    store.lock().expect("store lock").flush()?;
    Ok(0)
}

/// Renders the report exactly as `GET /api/stats` does.
pub fn report_text(a: &ReportArgs) -> Result<String> {
    let store = StatsStore::open(&a.store).with_context(|| format!("opening store {}", a.store.display()))?;
    let params = StatsParams {
        kind: a.kind.clone(),
        camera: a.camera.clone(),
        detector: a.detector.clone(),
        class: a.class.clone(),
        from: a.from.clone(),
        to: a.to.clone(),
        bucket: a.bucket.clone(),
        format: a.format.clone(),
    };
    Ok(StatsQuery::parse(&params)?.render(&store)?)
}

fn cmd_report(a: &ReportArgs) -> Result<i32> {
    let text = report_text(a)?;
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(0)
}

fn cmd_eval_det(a: &EvalDetArgs) -> Result<i32> {
    let classes = ClassSet::preset(&a.classes)?;
    let ap_interpolation = match a.ap.as_str() {
        "all-point" => ApInterpolation::AllPoint,
        "101-point" => ApInterpolation::Point101,
        other => bail!("--ap must be all-point or 101-point, not {other}"),
    };
    let cfg = EvalConfig {
        iou_threshold: a.iou,
        ap_interpolation,
        accuracy_denominator: AccuracyDenominator::GroundTruth,
    };
    let preds = load_dataset(&a.pred, &classes)?;
    let gts = load_dataset(&a.gt, &classes)?;
    let report = evaluate_dataset(&preds, &gts, &classes, &cfg)?;
    print!("{}", report.to_csv());
    if let Some(p) = &a.pr_out {
        fs::write(p, report.pr_csv())?;
    }
    Ok(0)
}

/// Track boxes from a store directory, a ground-truth bundle or JSON lines
/// of `{"frame", "id", "bbox"}`.
pub fn load_track_boxes(path: &Path) -> Result<Vec<TrackBox>> {
    if path.is_dir() {
        let store = StatsStore::open(path)?;
        return Ok(store
            .trajectories()
            .iter()
            .flat_map(|t| t.path.iter().map(move |s| TrackBox { frame: s.frame, id: t.track_id, bbox: s.bbox }))
            .collect());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(gt) = serde_json::from_str::<GroundTruthBundle>(&text) {
        return Ok(gt
            .tracks
            .iter()
            .flat_map(|t| t.samples.iter().map(move |s| TrackBox { frame: s.frame, id: t.id, bbox: s.bbox }))
            .collect());
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

fn cmd_eval_track(a: &EvalTrackArgs) -> Result<i32> {
    let gt = load_track_boxes(&a.gt)?;
    let hyp = load_track_boxes(&a.hyp)?;
    let m = tracking_metrics(&gt, &hyp, a.iou);
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(0)
}

fn load_manifest(arg: &str) -> Result<LabelManifest> {
    if arg == "reference" {
        return Ok(reference_manifest());
    }
    Ok(LabelManifest::load(arg)?)
}

fn cmd_plan(a: &PlanArgs) -> Result<i32> {
    let m = load_manifest(&a.manifest)?;
    let dup_cap = match a.dup_cap.as_str() {
        "none" => None,
        s => Some(s.parse().map_err(|_| anyhow!("--dup-cap must be an integer or `none`"))?),
    };
    let cfg = AugmentConfig { majority_cap: a.majority_cap, minority_floor: a.minority_floor, dup_cap };
    let plan = plan_augmentation(&m, &cfg)?;
    print!("{}", plan.summary_csv(&m.classes));
    for u in &plan.unmet {
        eprintln!("unmet {} for {}: projected share {:.4}, target {:.4}", u.target, u.class, u.share, u.value);
    }
    if let Some(p) = &a.out {
        fs::write(p, serde_json::to_string_pretty(&plan)?)?;
    }
    Ok(0)
}

fn cmd_split(a: &SplitArgs) -> Result<i32> {
    let m = load_manifest(&a.manifest)?;
    let parts: Vec<f64> = a
        .ratios
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow!("--ratios must be three numbers"))?;
    let ratios: [f64; 3] = parts.try_into().map_err(|_| anyhow!("--ratios must be three numbers"))?;
    let s = split_dataset(&m, ratios, a.seed)?;
    println!("train,valid,test");
    println!("{},{},{}", s.sizes[0], s.sizes[1], s.sizes[2]);
    if let Some(p) = &a.out {
        fs::write(p, s.to_csv())?;
    }
    Ok(0)
}
