//! The commands behind the CLI, as plain functions over a [`RunConfig`].

use std::path::{Path, PathBuf};
use std::thread;

use geo_orbit_core::fed::{
    mean_std, train_fedmeta, train_meta_centralized, upload_ledger, ClientTask, CommLedger,
    CommSummary, GlobalBroadcast, TaskSetup,
};
use geo_orbit_core::metanet::{MetaNet, SceneFeatures};
use geo_orbit_core::metrics::{loss_param, loss_total, LossBreakdown, LossWeights, MetricsConfig};
use geo_orbit_core::pipeline::{detect_lanes, DetectionParams, LaneModel, Track};
use geo_orbit_core::scenario::{
    generate_tracks, reference_model, seen_scenes, unseen_scenes, OracleResult, SceneSpec,
};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TrackCoordinates};
use crate::error::{CliError, CliResult};
use crate::geojson::lane_model_geojson;
use crate::io::{self, CurveRow, TrackFrame};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Fixed hand-tuned parameters, no learning.
    Baseline,
    /// Predictor trained on pooled raw data.
    Meta,
    /// Predictor trained by federated averaging.
    Fedmeta,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Meta, Mode::Fedmeta];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Meta => "meta",
            Mode::Fedmeta => "fedmeta",
        }
    }
}

pub fn output_dir(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.paths.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn read_specs(paths: &[PathBuf]) -> CliResult<Vec<SceneSpec>> {
    paths
        .iter()
        .map(|p| {
            let spec: SceneSpec = io::read_json(p)?;
            spec.validate().map_err(|e| CliError::parse(p, e))?;
            Ok(spec)
        })
        .collect()
}

/// Training scenes: the configured spec files, or the built-in benchmark.
pub fn seen_specs(cfg: &RunConfig) -> CliResult<Vec<SceneSpec>> {
    if cfg.paths.scenes.is_empty() {
        Ok(seen_scenes(cfg.seed, cfg.tracks_per_lane))
    } else {
        read_specs(&cfg.paths.scenes)
    }
}

pub fn unseen_specs(cfg: &RunConfig) -> CliResult<Vec<SceneSpec>> {
    if cfg.paths.unseen_scenes.is_empty() {
        Ok(unseen_scenes(cfg.seed, cfg.tracks_per_lane))
    } else {
        read_specs(&cfg.paths.unseen_scenes)
    }
}

pub fn task_setup(cfg: &RunConfig) -> TaskSetup {
    TaskSetup {
        grid: cfg.grid.clone(),
        metrics: cfg.metrics(),
        scaling: cfg.feature_scaling,
        kmeans_seed: cfg.kmeans_seed,
    }
}

/// Runs `f` on every item on its own thread; results keep input order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = items
            .iter()
            .enumerate()
            .map(|(i, it)| s.spawn(move || f(i, it)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

/// One client per scene, ids in scene order. Each scene's grid search runs
/// on its own thread.
pub fn build_clients(
    specs: &[SceneSpec],
    setup: &TaskSetup,
) -> CliResult<Vec<(ClientTask, OracleResult)>> {
    par_map(specs, |i, spec| {
        ClientTask::from_spec(i as u32, spec, setup)
            .map_err(|e| CliError::bad_input(format!("scene `{}`: {e}", spec.scene_id)))
    })
    .into_iter()
    .collect()
}

/// A scene ready for detection.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub scene_id: String,
    pub tracks: Vec<Track>,
    pub hour_of_day: f64,
    /// Present when the scene came from a spec.
    pub reference: Option<LaneModel>,
}

impl LoadedScene {
    pub fn from_spec(spec: &SceneSpec) -> CliResult<Self> {
        Ok(Self {
            scene_id: spec.scene_id.clone(),
            tracks: generate_tracks(spec)?,
            hour_of_day: spec.hour_of_day,
            reference: Some(reference_model(spec)?),
        })
    }
}

pub fn track_frame(cfg: &RunConfig) -> CliResult<TrackFrame> {
    Ok(match cfg.track_coordinates {
        TrackCoordinates::Meters => TrackFrame::Planar,
        TrackCoordinates::Pixels => {
            let p = cfg
                .paths
                .homography
                .as_deref()
                .ok_or_else(|| CliError::bad_input("no homography path"))?;
            TrackFrame::Pixels(io::read_homography(p)?)
        }
        TrackCoordinates::Degrees => {
            let p = cfg
                .paths
                .anchor
                .as_deref()
                .ok_or_else(|| CliError::bad_input("no anchor path"))?;
            TrackFrame::Degrees(io::read_anchor(p)?)
        }
    })
}

/// File name up to the first dot: `a.tracks.jsonl` is scene `a`.
fn stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.split('.').next().unwrap_or_default().to_string()
}

/// `scene` is a tracks file (`.jsonl`), a scene spec (`.json`) or the id
/// of a built-in scene.
pub fn load_scene(cfg: &RunConfig, scene: &str) -> CliResult<LoadedScene> {
    let path = Path::new(scene);
    let ext = path.extension().and_then(|e| e.to_str());
    if ext == Some("jsonl") {
        let tracks = io::read_tracks(path, &track_frame(cfg)?)?;
        return Ok(LoadedScene {
            scene_id: stem(path),
            tracks,
            hour_of_day: cfg.hour_of_day,
            reference: None,
        });
    }
    if ext == Some("json") {
        let spec = read_specs(&[path.to_path_buf()])?.remove(0);
        return LoadedScene::from_spec(&spec);
    }
    let mut specs = seen_specs(cfg)?;
    specs.extend(unseen_specs(cfg)?);
    match specs.iter().find(|s| s.scene_id == scene) {
        Some(spec) => LoadedScene::from_spec(spec),
        None => {
            let ids: Vec<&str> = specs.iter().map(|s| s.scene_id.as_str()).collect();
            Err(CliError::bad_input(format!(
                "`{scene}` is neither a tracks file, a scene spec nor a known scene ({})",
                ids.join(", ")
            )))
        }
    }
}

/// Where detection parameters come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamSource {
    Fixed(DetectionParams),
    Predicted(MetaNet),
}

impl ParamSource {
    pub fn params(
        &self,
        cfg: &RunConfig,
        tracks: &[Track],
        hour_of_day: f64,
    ) -> CliResult<DetectionParams> {
        match self {
            ParamSource::Fixed(p) => Ok(*p),
            ParamSource::Predicted(net) => {
                let x = SceneFeatures::extract(tracks, hour_of_day, &cfg.feature_scaling)?;
                Ok(net.forward(&x, cfg.kmeans_seed))
            }
        }
    }
}

pub fn read_checkpoint(path: &Path) -> CliResult<MetaNet> {
    io::read_json(path)
}

pub fn read_params(path: &Path) -> CliResult<DetectionParams> {
    let p: DetectionParams = io::read_json(path)?;
    p.validate().map_err(|e| CliError::parse(path, e))?;
    Ok(p)
}

/// Explicit params beat an explicit checkpoint, which beats the configured
/// checkpoint; the baseline params are the fallback.
pub fn param_source(
    cfg: &RunConfig,
    params: Option<&Path>,
    checkpoint: Option<&Path>,
) -> CliResult<ParamSource> {
    if let Some(p) = params {
        return Ok(ParamSource::Fixed(read_params(p)?));
    }
    match checkpoint.or(cfg.paths.checkpoint.as_deref()) {
        Some(c) => Ok(ParamSource::Predicted(read_checkpoint(c)?)),
        None => Ok(ParamSource::Fixed(cfg.baseline_params)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOutcome {
    pub model: LaneModel,
    pub params: DetectionParams,
    pub lanes_path: PathBuf,
    pub geojson_path: PathBuf,
}

/// Writes `<scene>.lanes.json` and `<scene>.geojson` into `out`.
pub fn cmd_detect(
    cfg: &RunConfig,
    scene: &LoadedScene,
    source: &ParamSource,
    out: &Path,
) -> CliResult<DetectOutcome> {
    let params = source.params(cfg, &scene.tracks, scene.hour_of_day)?;
    let model = detect_lanes(&scene.scene_id, &scene.tracks, &params)?;
    let anchor = cfg
        .paths
        .anchor
        .as_deref()
        .map(io::read_anchor)
        .transpose()?;
    let lanes_path = out.join(format!("{}.lanes.json", scene.scene_id));
    let geojson_path = out.join(format!("{}.geojson", scene.scene_id));
    io::write_json(&lanes_path, &model)?;
    io::write_json(&geojson_path, &lane_model_geojson(&model, anchor.as_ref()))?;
    Ok(DetectOutcome {
        model,
        params,
        lanes_path,
        geojson_path,
    })
}

/// Loss components of one detected model against its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub scene_id: String,
    pub weights: LossWeights,
    pub consistency: f64,
    pub geometry: f64,
    pub center: f64,
    pub lane_num: f64,
    pub total: f64,
    pub matched_pairs: usize,
    pub unmatched_detected: usize,
    pub unmatched_reference: usize,
    pub no_match_warning: bool,
}

impl LossReport {
    pub fn breakdown(&self) -> LossBreakdown {
        LossBreakdown {
            consistency: self.consistency,
            geometry: self.geometry,
            center: self.center,
            lane_num: self.lane_num,
            total: self.total,
            weights: self.weights,
        }
    }
}

pub fn evaluate(
    detected: &LaneModel,
    reference: &LaneModel,
    metrics: &MetricsConfig,
) -> CliResult<LossReport> {
    let e = loss_total(detected, reference, metrics)?;
    let b = e.breakdown;
    Ok(LossReport {
        scene_id: reference.scene_id().to_string(),
        weights: b.weights,
        consistency: b.consistency,
        geometry: b.geometry,
        center: b.center,
        lane_num: b.lane_num,
        total: b.total,
        matched_pairs: e.matching.pairs.len(),
        unmatched_detected: e.matching.unmatched_detected.len(),
        unmatched_reference: e.matching.unmatched_reference.len(),
        no_match_warning: e.no_match_warning,
    })
}

/// Writes `loss_report.json` and `loss_report.txt`; returns the table.
pub fn cmd_eval(
    cfg: &RunConfig,
    detected: &Path,
    reference: &Path,
    out: &Path,
) -> CliResult<String> {
    let d: LaneModel = io::read_json(detected)?;
    let r: LaneModel = io::read_json(reference)?;
    let report = evaluate(&d, &r, &cfg.metrics())?;
    let table = io::loss_table(
        "scene",
        &[(report.scene_id.clone(), report.breakdown())],
        &report.weights,
    );
    io::write_json(&out.join("loss_report.json"), &report)?;
    io::write_text(&out.join("loss_report.txt"), &table)?;
    Ok(table)
}

/// Writes a spec, tracks and reference lanes per scene.
pub fn cmd_generate(cfg: &RunConfig, only: Option<&str>, out: &Path) -> CliResult<Vec<String>> {
    let mut specs = seen_specs(cfg)?;
    specs.extend(unseen_specs(cfg)?);
    if let Some(id) = only {
        specs.retain(|s| s.scene_id == id);
        if specs.is_empty() {
            return Err(CliError::bad_input(format!("unknown scene `{id}`")));
        }
    }
    for spec in &specs {
        let scene = LoadedScene::from_spec(spec)?;
        let id = &spec.scene_id;
        io::write_json(&out.join(format!("{id}.scene.json")), spec)?;
        io::write_text(
            &out.join(format!("{id}.tracks.jsonl")),
            &io::tracks_jsonl(&scene.tracks)?,
        )?;
        io::write_json(&out.join(format!("{id}.reference.json")), &scene.reference)?;
    }
    Ok(specs.into_iter().map(|s| s.scene_id).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientTarget {
    pub client_id: u32,
    pub scene_id: String,
    /// Grid-search optimum the predictor is trained towards.
    pub target: DetectionParams,
    pub oracle_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub mode: Mode,
    pub seed: u64,
    pub clients: Vec<ClientTarget>,
    pub comm: CommSummary,
    pub session_seconds: f64,
    pub bps: f64,
    pub final_mean_param_loss: f64,
    pub final_std_param_loss: f64,
}

/// Model size as sent over the wire.
fn model_bytes(net: &MetaNet) -> u64 {
    GlobalBroadcast {
        round: 0,
        net: net.clone(),
    }
    .encode()
    .len() as u64
}

/// Trains (or, for the baseline, just scores) and writes the artifacts of
/// `mode` into `<out>/<mode>/`.
pub fn cmd_train(cfg: &RunConfig, mode: Mode, out: &Path) -> CliResult<TrainSummary> {
    let specs = seen_specs(cfg)?;
    let built = build_clients(&specs, &task_setup(cfg))?;
    let targets: Vec<ClientTarget> = built
        .iter()
        .map(|(c, o)| ClientTarget {
            client_id: c.client_id,
            scene_id: c.scene_id.clone(),
            target: c.theta_star,
            oracle_total: o.loss.total,
        })
        .collect();
    let clients: Vec<ClientTask> = built.into_iter().map(|(c, _)| c).collect();
    train_clients(cfg, mode, &clients, targets, &out.join(mode.as_str()))
}

pub fn train_clients(
    cfg: &RunConfig,
    mode: Mode,
    clients: &[ClientTask],
    targets: Vec<ClientTarget>,
    dir: &Path,
) -> CliResult<TrainSummary> {
    let (ledger, curve, comm): (CommLedger, Vec<CurveRow>, CommSummary) = match mode {
        Mode::Baseline => {
            let ledger = upload_ledger(clients, &cfg.link);
            let p = cfg.baseline_params.to_vector();
            let losses: Vec<f64> = clients
                .iter()
                .map(|c| loss_param(&p, &c.theta_star.to_vector()))
                .collect();
            let (mean, std) = mean_std(&losses);
            let comm = CommSummary::from_ledger(&ledger, 0, clients.len(), 0);
            io::write_json(&dir.join("params.json"), &cfg.baseline_params)?;
            (
                ledger,
                vec![CurveRow {
                    round: 0,
                    mean,
                    std,
                }],
                comm,
            )
        }
        Mode::Meta => {
            let run = train_meta_centralized(clients, &cfg.central_config())?;
            let curve = run
                .epochs
                .iter()
                .map(|e| CurveRow {
                    round: e.epoch,
                    mean: e.mean_param_loss,
                    std: e.std_param_loss,
                })
                .collect();
            let comm = CommSummary::from_ledger(
                &run.ledger,
                model_bytes(&run.net),
                clients.len(),
                run.epochs.len() as u32,
            );
            io::write_json(&dir.join("checkpoint.json"), &run.net)?;
            io::write_text(&dir.join("rounds.jsonl"), &io::jsonl(&run.epochs)?)?;
            (run.ledger, curve, comm)
        }
        Mode::Fedmeta => {
            let run = train_fedmeta(clients, &cfg.fed_config())?;
            let curve = run
                .reports
                .iter()
                .map(|r| CurveRow {
                    round: r.round,
                    mean: r.mean_param_loss,
                    std: r.std_param_loss,
                })
                .collect();
            let comm = run.summary(clients.len());
            io::write_json(&dir.join("checkpoint.json"), &run.net)?;
            io::write_text(&dir.join("rounds.jsonl"), &io::jsonl(&run.reports)?)?;
            (run.ledger, curve, comm)
        }
    };
    io::write_text(&dir.join("ledger.csv"), &io::ledger_csv(&ledger)?)?;
    io::write_text(&dir.join("loss_curve.csv"), &io::loss_curve_csv(&curve)?)?;
    let last = curve.last().copied().unwrap_or(CurveRow {
        round: 0,
        mean: 0.0,
        std: 0.0,
    });
    let summary = TrainSummary {
        mode,
        seed: cfg.seed,
        clients: targets,
        comm,
        session_seconds: cfg.session_seconds,
        bps: comm.bps(cfg.session_seconds)?,
        final_mean_param_loss: last.mean,
        final_std_param_loss: last.std,
    };
    io::write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Trained artifacts of one mode, as found on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeArtifacts {
    pub mode: Mode,
    pub source: ParamSource,
    pub summary: TrainSummary,
}

/// Every mode under `out` that has a complete set of artifacts.
pub fn find_artifacts(out: &Path) -> CliResult<Vec<ModeArtifacts>> {
    let mut found = Vec::new();
    for mode in Mode::ALL {
        let dir = out.join(mode.as_str());
        let summary_path = dir.join("summary.json");
        if !summary_path.exists() {
            continue;
        }
        let source = match mode {
            Mode::Baseline => ParamSource::Fixed(read_params(&dir.join("params.json"))?),
            _ => ParamSource::Predicted(read_checkpoint(&dir.join("checkpoint.json"))?),
        };
        found.push(ModeArtifacts {
            mode,
            source,
            summary: io::read_json(&summary_path)?,
        });
    }
    Ok(found)
}

/// Per-scene result of running a parameter source on a reference scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub scene_id: String,
    pub params: DetectionParams,
    /// Detection produced no lanes; scored against an empty model.
    pub detection_failed: bool,
    pub loss: LossBreakdown,
}

/// Detects every scene with `source` and scores it. A failed detection is
/// scored as an empty model, so it pays the full lane-count loss.
pub fn score_scenes(
    cfg: &RunConfig,
    source: &ParamSource,
    scenes: &[LoadedScene],
) -> CliResult<Vec<SceneScore>> {
    let metrics = cfg.metrics();
    par_map(scenes, |_, scene| {
        let reference = scene.reference.as_ref().ok_or_else(|| {
            CliError::bad_input(format!("scene `{}` has no reference", scene.scene_id))
        })?;
        let params = source.params(cfg, &scene.tracks, scene.hour_of_day)?;
        let (model, failed) = match detect_lanes(&scene.scene_id, &scene.tracks, &params) {
            Ok(m) => (m, false),
            Err(_) => (LaneModel::new(scene.scene_id.clone(), Vec::new()), true),
        };
        Ok(SceneScore {
            scene_id: scene.scene_id.clone(),
            params,
            detection_failed: failed,
            loss: loss_total(&model, reference, &metrics)?.breakdown,
        })
    })
    .into_iter()
    .collect()
}

/// Component-wise mean. The total is recomputed from the mean components so
/// that it stays their weighted sum.
pub fn mean_breakdown(scores: &[SceneScore], weights: LossWeights) -> LossBreakdown {
    let n = scores.len().max(1) as f64;
    let sum = |f: fn(&LossBreakdown) -> f64| scores.iter().map(|s| f(&s.loss)).sum::<f64>() / n;
    LossBreakdown::from_components(
        sum(|b| b.consistency),
        sum(|b| b.geometry),
        sum(|b| b.center),
        sum(|b| b.lane_num),
        weights,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub mode: Mode,
    pub split: String,
    pub loss: LossBreakdown,
    pub scenes: Vec<SceneScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub accuracy: Vec<AccuracyRow>,
    pub communication: Vec<(Mode, CommSummary, f64)>,
}

const MB: f64 = 1e6;

/// One column per mode, rows in the usual cost-table order.
pub fn comm_table(rows: &[(Mode, CommSummary, f64)]) -> String {
    let labels = [
        "Model size (MB)",
        "Clients",
        "Rounds",
        "Model upload (MB)",
        "File upload (MB)",
        "Download (MB)",
        "Total (MB)",
        "BPS (Mbps)",
    ];
    let label_w = labels.iter().map(|l| l.len()).max().unwrap_or(0);
    let mut out = format!("{:<label_w$}", "");
    for (m, _, _) in rows {
        out.push_str(&format!("  {:>12}", m.as_str()));
    }
    out.push('\n');
    for (i, label) in labels.iter().enumerate() {
        out.push_str(&format!("{label:<label_w$}"));
        for (_, c, bps) in rows {
            let cell = match i {
                0 => format!("{:.4}", c.model_size_bytes as f64 / MB),
                1 => c.clients.to_string(),
                2 => c.rounds.to_string(),
                3 => format!("{:.4}", c.model_upload_bytes as f64 / MB),
                4 => format!("{:.4}", c.file_upload_bytes as f64 / MB),
                5 => format!("{:.4}", c.download_bytes as f64 / MB),
                6 => format!("{:.4}", c.total_bytes as f64 / MB),
                _ => format!("{bps:.1}"),
            };
            out.push_str(&format!("  {cell:>12}"));
        }
        out.push('\n');
    }
    out
}

impl Report {
    pub fn text(&self, weights: &LossWeights) -> String {
        let rows: Vec<(String, LossBreakdown)> = self
            .accuracy
            .iter()
            .map(|r| (format!("{} ({})", r.mode.as_str(), r.split), r.loss))
            .collect();
        let mut out = io::loss_table("model", &rows, weights);
        out.push('\n');
        out.push_str(&comm_table(&self.communication));
        out
    }
}

/// Scores every trained mode under `out` on the seen and held-out scenes.
/// Writes `report.json` and `report.txt`.
pub fn cmd_report(cfg: &RunConfig, out: &Path) -> CliResult<(Report, String)> {
    let artifacts = find_artifacts(out)?;
    if artifacts.is_empty() {
        return Err(CliError::bad_input(format!(
            "no trained models under {}; run `train` first",
            out.display()
        )));
    }
    let load = |specs: Vec<SceneSpec>| -> CliResult<Vec<LoadedScene>> {
        par_map(&specs, |_, s| LoadedScene::from_spec(s))
            .into_iter()
            .collect()
    };
    let splits = [
        ("seen", load(seen_specs(cfg)?)?),
        ("unseen", load(unseen_specs(cfg)?)?),
    ];
    let mut accuracy = Vec::new();
    for a in &artifacts {
        for (split, scenes) in &splits {
            let scores = score_scenes(cfg, &a.source, scenes)?;
            accuracy.push(AccuracyRow {
                mode: a.mode,
                split: split.to_string(),
                loss: mean_breakdown(&scores, cfg.weights),
                scenes: scores,
            });
        }
    }
    let communication = artifacts
        .iter()
        .map(|a| {
            Ok((
                a.mode,
                a.summary.comm,
                a.summary.comm.bps(cfg.session_seconds)?,
            ))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let report = Report {
        accuracy,
        communication,
    };
    let text = report.text(&cfg.weights);
    io::write_json(&out.join("report.json"), &report)?;
    io::write_text(&out.join("report.txt"), &text)?;
    Ok((report, text))
}
