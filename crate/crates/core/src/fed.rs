//! Federated and centralized training of the parameter predictor, with
//! byte-exact communication accounting.
//!
//! Clients are simulated in-process, but every exchange crosses an explicit
//! wire boundary: the sender encodes a message to bytes, the ledger charges
//! those bytes, and the receiver decodes them. None of the client-to-server
//! message types has a field that can carry trajectory samples.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metanet::{
    FeatureScaling, MetaNet, SceneFeatures, DEFAULT_HIDDEN, FEATURE_COUNT, HEAD_COUNT,
};
use crate::metrics::{loss_total, MetricsConfig};
use crate::pipeline::{detect_lanes, DetectionParams, LaneModel, ParamVector, Track};
use crate::scenario::{
    extract_features, generate_tracks, oracle_params, reference_model, OracleResult, ParamGrid,
    SceneSpec,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

/// What a ledger entry paid for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    /// Global weights sent to a client.
    Broadcast,
    /// A client's gradient.
    Update,
    /// A client's per-round scene report file.
    Report,
    /// A full raw trajectory file uploaded for centralized training.
    RawFile,
}

/// Transfer-time model: `bytes * 8 / bandwidth + latency`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub bandwidth_mbps: f64,
    pub latency_s: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self {
            bandwidth_mbps: 100.0,
            latency_s: 0.005,
        }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidth_mbps > 0.0
            && self.bandwidth_mbps.is_finite()
            && self.latency_s > 0.0
            && self.latency_s.is_finite()
        {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "link bandwidth and latency must be positive".into(),
            ))
        }
    }

    pub fn seconds(&self, bytes: u64) -> f64 {
        bytes as f64 * 8.0 / (self.bandwidth_mbps * 1e6) + self.latency_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub round: u32,
    pub direction: Direction,
    pub payload: Payload,
    pub bytes: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CommLedger {
    entries: Vec<LedgerEntry>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(
        &mut self,
        link: &LinkModel,
        round: u32,
        direction: Direction,
        payload: Payload,
        bytes: u64,
    ) {
        self.entries.push(LedgerEntry {
            round,
            direction,
            payload,
            bytes,
            seconds: link.seconds(bytes),
        });
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.bytes).sum()
    }

    pub fn bytes(&self, direction: Direction) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.direction == direction)
            .map(|e| e.bytes)
            .sum()
    }

    pub fn payload_bytes(&self, payload: Payload) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.payload == payload)
            .map(|e| e.bytes)
            .sum()
    }

    pub fn total_seconds(&self) -> f64 {
        self.entries.iter().map(|e| e.seconds).sum()
    }

    pub fn extend(&mut self, other: &CommLedger) {
        self.entries.extend_from_slice(&other.entries);
    }
}

/// Megabits per second: `total bytes * 8 / 1e6 / session_seconds`.
pub fn bps(ledger: &CommLedger, session_seconds: f64) -> Result<f64> {
    bps_of_bytes(ledger.total_bytes(), session_seconds)
}

pub fn bps_of_bytes(bytes: u64, session_seconds: f64) -> Result<f64> {
    if !(session_seconds > 0.0) || !session_seconds.is_finite() {
        return Err(Error::InvalidArgument(
            "session time must be positive".into(),
        ));
    }
    Ok(bytes as f64 * 8.0 / 1e6 / session_seconds)
}

/// Per-regime transmission totals in the layout of a cost comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommSummary {
    pub model_size_bytes: u64,
    pub clients: usize,
    pub rounds: u32,
    pub model_upload_bytes: u64,
    pub file_upload_bytes: u64,
    pub download_bytes: u64,
    pub total_bytes: u64,
}

impl CommSummary {
    pub fn from_ledger(
        ledger: &CommLedger,
        model_size_bytes: u64,
        clients: usize,
        rounds: u32,
    ) -> Self {
        Self {
            model_size_bytes,
            clients,
            rounds,
            model_upload_bytes: ledger.payload_bytes(Payload::Update),
            file_upload_bytes: ledger.payload_bytes(Payload::Report)
                + ledger.payload_bytes(Payload::RawFile),
            download_bytes: ledger.payload_bytes(Payload::Broadcast),
            total_bytes: ledger.total_bytes(),
        }
    }

    pub fn bps(&self, session_seconds: f64) -> Result<f64> {
        bps_of_bytes(self.total_bytes, session_seconds)
    }
}

const TAG_BROADCAST: u8 = 0xB1;
const TAG_UPDATE: u8 = 0xC1;
const TAG_REPORT: u8 = 0xC2;

struct Writer(Vec<u8>);

impl Writer {
    fn new(tag: u8) -> Self {
        Self(vec![tag])
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn net(&mut self, n: &MetaNet) {
        let flat = n.to_flat();
        self.u32(n.hidden() as u32);
        self.u32(flat.len() as u32);
        for v in flat {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], tag: u8) -> Result<Self> {
        match buf.first() {
            Some(&t) if t == tag => Ok(Self { buf, pos: 1 }),
            _ => Err(Error::Decode(alloc::format!(
                "expected message tag {tag:#x}"
            ))),
        }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Decode("message truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn net(&mut self) -> Result<MetaNet> {
        let hidden = self.u32()? as usize;
        let n = self.u32()? as usize;
        let mut flat = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            flat.push(self.f64()?);
        }
        MetaNet::from_flat(hidden, &flat)
    }
    fn rest(&self) -> &'a [u8] {
        &self.buf[self.pos..]
    }
    fn finish(self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::Decode("trailing bytes".into()))
        }
    }
}

/// Server to client: the current global weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalBroadcast {
    pub round: u32,
    pub net: MetaNet,
}

impl GlobalBroadcast {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(TAG_BROADCAST);
        w.u32(self.round);
        w.net(&self.net);
        w.0
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf, TAG_BROADCAST)?;
        let msg = Self {
            round: r.u32()?,
            net: r.net()?,
        };
        r.finish()?;
        Ok(msg)
    }
}

/// Client to server: the local gradient of the parameter-alignment loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub round: u32,
    pub client_id: u32,
    pub param_loss: f64,
    pub gradient: MetaNet,
}

impl ClientUpdate {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(TAG_UPDATE);
        w.u32(self.round);
        w.u32(self.client_id);
        w.f64(self.param_loss);
        w.net(&self.gradient);
        w.0
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf, TAG_UPDATE)?;
        let msg = Self {
            round: r.u32()?,
            client_id: r.u32()?,
            param_loss: r.f64()?,
            gradient: r.net()?,
        };
        r.finish()?;
        Ok(msg)
    }
}

/// Client to server: scene summary for monitoring, zero-padded to the
/// declared report-file size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneReport {
    pub round: u32,
    pub client_id: u32,
    pub features: SceneFeatures,
    pub predicted: ParamVector,
    /// Detection loss at the predicted parameters.
    pub task_loss: f64,
    pub lane_count: u32,
}

impl SceneReport {
    pub fn encode(&self, declared_bytes: u64) -> Vec<u8> {
        let mut w = Writer::new(TAG_REPORT);
        w.u32(self.round);
        w.u32(self.client_id);
        for v in self.features.0 {
            w.f64(v);
        }
        for v in self.predicted.0 {
            w.f64(v);
        }
        w.f64(self.task_loss);
        w.u32(self.lane_count);
        let declared = usize::try_from(declared_bytes).unwrap_or(usize::MAX);
        if w.0.len() < declared {
            w.0.resize(declared, 0);
        }
        w.0
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf, TAG_REPORT)?;
        let round = r.u32()?;
        let client_id = r.u32()?;
        let mut f = [0.0; FEATURE_COUNT];
        for v in &mut f {
            *v = r.f64()?;
        }
        let mut p = [0.0; HEAD_COUNT];
        for v in &mut p {
            *v = r.f64()?;
        }
        let task_loss = r.f64()?;
        let lane_count = r.u32()?;
        if r.rest().iter().any(|&b| b != 0) {
            return Err(Error::Decode("report padding must be zero".into()));
        }
        Ok(Self {
            round,
            client_id,
            features: SceneFeatures(f),
            predicted: ParamVector(p),
            task_loss,
            lane_count,
        })
    }
}

/// One participating site. Tracks stay local; only derived quantities
/// leave the client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientTask {
    pub client_id: u32,
    pub scene_id: String,
    pub tracks: Vec<Track>,
    pub features: SceneFeatures,
    pub theta_star: DetectionParams,
    pub reference: LaneModel,
    /// Size of the raw trajectory file the centralized regime would upload.
    pub raw_file_bytes: u64,
}

/// Inputs needed to turn a [`SceneSpec`] into a [`ClientTask`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskSetup {
    pub grid: ParamGrid,
    pub metrics: MetricsConfig,
    pub scaling: FeatureScaling,
    pub kmeans_seed: u64,
}

impl ClientTask {
    /// Generates the scene's tracks and reference and runs the grid oracle
    /// for its target parameters.
    pub fn from_spec(
        client_id: u32,
        spec: &SceneSpec,
        setup: &TaskSetup,
    ) -> Result<(Self, OracleResult)> {
        let tracks = generate_tracks(spec)?;
        let reference = reference_model(spec)?;
        let oracle = oracle_params(
            &tracks,
            &reference,
            &setup.grid,
            &setup.metrics,
            setup.kmeans_seed,
        )?;
        let features = extract_features(&tracks, spec.hour_of_day, &setup.scaling)?;
        Ok((
            Self {
                client_id,
                scene_id: spec.scene_id.clone(),
                tracks,
                features,
                theta_star: oracle.params,
                reference,
                raw_file_bytes: spec.raw_file_bytes,
            },
            oracle,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    pub rounds: u32,
    pub sample_fraction: f64,
    pub lr: f64,
    pub seed: u64,
    pub hidden: usize,
    /// Declared size of each client's per-round report file.
    pub report_bytes: u64,
    pub link: LinkModel,
    pub metrics: MetricsConfig,
    pub kmeans_seed: u64,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            rounds: 20,
            sample_fraction: 1.0,
            lr: 0.05,
            seed: 0,
            hidden: DEFAULT_HIDDEN,
            report_bytes: 70_000,
            link: LinkModel::default(),
            metrics: MetricsConfig::default(),
            kmeans_seed: 0,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("rounds must be at least 1".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::ParamOutOfRange {
                name: "sample_fraction",
                value: self.sample_fraction,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidArgument(
                "hidden size must be positive".into(),
            ));
        }
        self.link.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    /// Clients that delivered an update, ascending.
    pub participants: Vec<u32>,
    /// Sampled clients whose local detection failed.
    pub dropped: Vec<u32>,
    /// Parameter-alignment loss per participant at the broadcast weights.
    pub param_losses: Vec<f64>,
    /// Detection loss per participant at its predicted parameters.
    pub task_losses: Vec<f64>,
    pub mean_param_loss: f64,
    pub std_param_loss: f64,
    pub aborted: bool,
    /// FNV-1a hash of the global weights after the round.
    pub checksum: u64,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

/// Population mean and standard deviation; zeros for an empty slice.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (
        m,
        libm::sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n),
    )
}

pub fn net_checksum(net: &MetaNet) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in net.to_flat() {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Equal-weight mean of the gradients, summed per component with Neumaier
/// compensation in the order given.
pub fn average_gradients(grads: &[MetaNet]) -> Result<MetaNet> {
    let first = grads
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to average".into()))?;
    let hidden = first.hidden();
    let flats: Vec<Vec<f64>> = grads.iter().map(MetaNet::to_flat).collect();
    if grads.iter().any(|g| g.hidden() != hidden) {
        return Err(Error::InvalidArgument("gradient shapes differ".into()));
    }
    let n = flats[0].len();
    let inv = 1.0 / grads.len() as f64;
    let out: Vec<f64> = (0..n)
        .map(|k| {
            let (mut sum, mut comp) = (0.0f64, 0.0f64);
            for f in &flats {
                let x = f[k];
                let t = sum + x;
                comp += if sum.abs() >= x.abs() {
                    (sum - t) + x
                } else {
                    (x - t) + sum
                };
                sum = t;
            }
            (sum + comp) * inv
        })
        .collect();
    MetaNet::from_flat(hidden, &out)
}

fn round_rng(seed: u64, round: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Sorted indices of the clients taking part in `round`.
pub fn sample_clients(n: usize, fraction: f64, seed: u64, round: u32) -> Vec<usize> {
    let m = (libm::ceil(fraction * n as f64) as usize).clamp(1, n);
    let mut picked = sample(&mut round_rng(seed, round), n, m).into_vec();
    picked.sort_unstable();
    picked
}

/// Local work of one client: decode the broadcast, run detection at the
/// predicted parameters, and return the encoded update and report.
fn client_round(
    task: &ClientTask,
    broadcast: &[u8],
    config: &FedConfig,
) -> Result<(Vec<u8>, Vec<u8>)> {
    let msg = GlobalBroadcast::decode(broadcast)?;
    let predicted = msg.net.forward_raw(&task.features);
    let params = predicted.to_detection_params(config.kmeans_seed);
    let model = detect_lanes(&task.scene_id, &task.tracks, &params)?;
    let task_loss = loss_total(&model, &task.reference, &config.metrics)?
        .breakdown
        .total;
    let (param_loss, gradient) = msg
        .net
        .grad_param_loss(&task.features, &task.theta_star.to_vector());
    let update = ClientUpdate {
        round: msg.round,
        client_id: task.client_id,
        param_loss,
        gradient,
    };
    let report = SceneReport {
        round: msg.round,
        client_id: task.client_id,
        features: task.features,
        predicted,
        task_loss,
        lane_count: model.lane_count() as u32,
    };
    Ok((update.encode(), report.encode(config.report_bytes)))
}

/// Everything a client sent in a round, as raw bytes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundTraffic {
    pub uploads: Vec<Vec<u8>>,
}

/// One federated round: sample clients, broadcast, collect updates,
/// average in client-id order and take one gradient step.
///
/// If no sampled client can complete its local work the round is marked
/// aborted and the weights are returned unchanged.
pub fn run_round(
    net: &MetaNet,
    clients: &[ClientTask],
    config: &FedConfig,
    round: u32,
    ledger: &mut CommLedger,
) -> Result<(MetaNet, RoundReport, RoundTraffic)> {
    config.validate()?;
    if clients.is_empty() {
        return Err(Error::InvalidArgument(
            "a round needs at least one client".into(),
        ));
    }
    let mut order: Vec<&ClientTask> = clients.iter().collect();
    order.sort_by_key(|c| c.client_id);
    if order.windows(2).any(|w| w[0].client_id == w[1].client_id) {
        return Err(Error::InvalidArgument("client ids must be unique".into()));
    }
    let sampled = sample_clients(order.len(), config.sample_fraction, config.seed, round);

    let broadcast = GlobalBroadcast {
        round,
        net: net.clone(),
    }
    .encode();
    let mut bytes_up = 0;
    let mut bytes_down = 0;
    let mut updates = Vec::new();
    let mut dropped = Vec::new();
    let mut task_losses = Vec::new();
    let mut traffic = RoundTraffic::default();
    for &i in &sampled {
        let task = order[i];
        ledger.record(
            &config.link,
            round,
            Direction::Down,
            Payload::Broadcast,
            broadcast.len() as u64,
        );
        bytes_down += broadcast.len() as u64;
        match client_round(task, &broadcast, config) {
            Ok((update, report)) => {
                for (bytes, payload) in [(&update, Payload::Update), (&report, Payload::Report)] {
                    ledger.record(
                        &config.link,
                        round,
                        Direction::Up,
                        payload,
                        bytes.len() as u64,
                    );
                    bytes_up += bytes.len() as u64;
                }
                updates.push(ClientUpdate::decode(&update)?);
                task_losses.push(SceneReport::decode(&report)?.task_loss);
                traffic.uploads.push(update);
                traffic.uploads.push(report);
            }
            Err(Error::InsufficientData(_) | Error::NoValidGroups(_)) => {
                dropped.push(task.client_id)
            }
            Err(e) => return Err(e),
        }
    }

    let participants: Vec<u32> = updates.iter().map(|u| u.client_id).collect();
    let param_losses: Vec<f64> = updates.iter().map(|u| u.param_loss).collect();
    let (mean, std) = mean_std(&param_losses);
    let aborted = updates.is_empty();
    let next = if aborted {
        net.clone()
    } else {
        let grads: Vec<MetaNet> = updates.into_iter().map(|u| u.gradient).collect();
        net.sgd_step(&average_gradients(&grads)?, config.lr)?
    };
    let report = RoundReport {
        round,
        participants,
        dropped,
        param_losses,
        task_losses,
        mean_param_loss: mean,
        std_param_loss: std,
        aborted,
        checksum: net_checksum(&next),
        bytes_up,
        bytes_down,
    };
    Ok((next, report, traffic))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedRun {
    pub net: MetaNet,
    pub reports: Vec<RoundReport>,
    pub ledger: CommLedger,
}

impl FedRun {
    pub fn summary(&self, clients: usize) -> CommSummary {
        let model_bytes = GlobalBroadcast {
            round: 0,
            net: self.net.clone(),
        }
        .encode()
        .len() as u64;
        CommSummary::from_ledger(
            &self.ledger,
            model_bytes,
            clients,
            self.reports.len() as u32,
        )
    }
}

/// Federated training from a seeded initialization. `observe` sees every
/// round's uploaded bytes as they were sent.
pub fn train_fedmeta_observed(
    clients: &[ClientTask],
    config: &FedConfig,
    mut observe: impl FnMut(&RoundReport, &RoundTraffic),
) -> Result<FedRun> {
    config.validate()?;
    let mut net = MetaNet::init(config.seed, config.hidden)?;
    let mut ledger = CommLedger::new();
    let mut reports = Vec::with_capacity(config.rounds as usize);
    for round in 1..=config.rounds {
        let (next, report, traffic) = run_round(&net, clients, config, round, &mut ledger)?;
        observe(&report, &traffic);
        net = next;
        reports.push(report);
    }
    Ok(FedRun {
        net,
        reports,
        ledger,
    })
}

pub fn train_fedmeta(clients: &[ClientTask], config: &FedConfig) -> Result<FedRun> {
    train_fedmeta_observed(clients, config, |_, _| {})
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralConfig {
    pub epochs: u32,
    pub lr: f64,
    pub seed: u64,
    pub hidden: usize,
    pub link: LinkModel,
}

impl Default for CentralConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.05,
            seed: 0,
            hidden: DEFAULT_HIDDEN,
            link: LinkModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: u32,
    /// Per-client parameter-alignment loss at the start of the epoch.
    pub param_losses: Vec<f64>,
    pub mean_param_loss: f64,
    pub std_param_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralRun {
    pub net: MetaNet,
    pub epochs: Vec<EpochReport>,
    pub ledger: CommLedger,
}

/// Ledger of the centralized regimes: each client's raw file, uploaded once.
pub fn upload_ledger(clients: &[ClientTask], link: &LinkModel) -> CommLedger {
    let mut ledger = CommLedger::new();
    for c in clients {
        ledger.record(link, 0, Direction::Up, Payload::RawFile, c.raw_file_bytes);
    }
    ledger
}

/// Centralized training on the pooled `(features, target)` pairs: one SGD
/// step per client per epoch, in a seeded order.
pub fn train_meta_centralized(
    clients: &[ClientTask],
    config: &CentralConfig,
) -> Result<CentralRun> {
    if clients.is_empty() || config.epochs == 0 {
        return Err(Error::InvalidArgument(
            "centralized training needs clients and epochs".into(),
        ));
    }
    config.link.validate()?;
    let ledger = upload_ledger(clients, &config.link);
    let mut net = MetaNet::init(config.seed, config.hidden)?;
    let mut epochs = Vec::with_capacity(config.epochs as usize);
    let mut order: Vec<usize> = (0..clients.len()).collect();
    for epoch in 1..=config.epochs {
        let losses: Vec<f64> = clients
            .iter()
            .map(|c| net.param_loss(&c.features, &c.theta_star.to_vector()))
            .collect();
        let (mean, std) = mean_std(&losses);
        epochs.push(EpochReport {
            epoch,
            param_losses: losses,
            mean_param_loss: mean,
            std_param_loss: std,
        });
        order.shuffle(&mut round_rng(config.seed, epoch));
        for &i in &order {
            let c = &clients[i];
            let (_, g) = net.grad_param_loss(&c.features, &c.theta_star.to_vector());
            net = net.sgd_step(&g, config.lr)?;
        }
    }
    Ok(CentralRun {
        net,
        epochs,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::TrackSample;
    use crate::scenario::seen_scenes;
    use alloc::format;
    use rand::Rng;

    fn lane_tracks(prefix: &str, lanes: &[f64], per_lane: usize) -> Vec<Track> {
        let mut out = Vec::new();
        for (l, &x) in lanes.iter().enumerate() {
            for k in 0..per_lane {
                let jitter = 0.05 * (k as f64 - per_lane as f64 / 2.0) / per_lane as f64;
                let samples = (0..30)
                    .map(|i| {
                        TrackSample::new(
                            i as f64 * 0.2,
                            x + jitter,
                            i as f64 * 2.5 + k as f64 * 0.01,
                        )
                    })
                    .collect();
                out.push(Track::new(format!("{prefix}-{l}-{k}"), samples).unwrap());
            }
        }
        out
    }

    fn synthetic_client(
        id: u32,
        theta: DetectionParams,
        features: [f64; FEATURE_COUNT],
    ) -> ClientTask {
        let tracks = lane_tracks(&format!("c{id}"), &[0.0, 3.6], 8);
        let reference = detect_lanes("r", &tracks, &DetectionParams::default()).unwrap();
        ClientTask {
            client_id: id,
            scene_id: format!("scene-{id}"),
            tracks,
            features: SceneFeatures(features),
            theta_star: theta,
            reference,
            raw_file_bytes: 1_000,
        }
    }

    fn theta(s: f64, p: f64) -> DetectionParams {
        DetectionParams::new(s, 0.3, 40, p, 0).unwrap()
    }

    #[test]
    fn wire_round_trips() {
        let net = MetaNet::init(3, 5).unwrap();
        let b = GlobalBroadcast {
            round: 7,
            net: net.clone(),
        };
        assert_eq!(GlobalBroadcast::decode(&b.encode()).unwrap(), b);
        let u = ClientUpdate {
            round: 7,
            client_id: 2,
            param_loss: 0.25,
            gradient: net,
        };
        assert_eq!(ClientUpdate::decode(&u.encode()).unwrap(), u);
        assert!(ClientUpdate::decode(&b.encode()).is_err());
        let mut truncated = u.encode();
        truncated.pop();
        assert!(ClientUpdate::decode(&truncated).is_err());
        let r = SceneReport {
            round: 1,
            client_id: 4,
            features: SceneFeatures([0.5; FEATURE_COUNT]),
            predicted: DetectionParams::default().to_vector(),
            task_loss: 3.0,
            lane_count: 2,
        };
        let bytes = r.encode(70_000);
        assert_eq!(bytes.len(), 70_000);
        assert_eq!(SceneReport::decode(&bytes).unwrap(), r);
        assert_eq!(SceneReport::decode(&r.encode(0)).unwrap(), r);
    }

    #[test]
    fn identical_clients_equal_single_update() {
        let t = theta(4.0, 0.2);
        let f = [0.3, -0.2, 0.1, 0.0, 1.0, 0.4, -0.7];
        let clients: Vec<ClientTask> = (0..4).map(|i| synthetic_client(i, t, f)).collect();
        let cfg = FedConfig {
            seed: 5,
            lr: 0.1,
            ..FedConfig::default()
        };
        let net = MetaNet::init(9, 16).unwrap();
        let (global, report, _) =
            run_round(&net, &clients, &cfg, 1, &mut CommLedger::new()).unwrap();
        assert_eq!(report.participants, vec![0, 1, 2, 3]);
        let (_, g) = net.grad_param_loss(&SceneFeatures(f), &t.to_vector());
        let single = net.sgd_step(&g, 0.1).unwrap();
        for (a, b) in global.to_flat().iter().zip(single.to_flat()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn opposite_gradients_cancel() {
        let net = MetaNet::init(1, 4).unwrap();
        let g = MetaNet::init(2, 4).unwrap();
        let avg = average_gradients(&[g.clone(), g.scaled(-1.0).unwrap()]).unwrap();
        assert!(avg.to_flat().iter().all(|&v| v == 0.0));
        // a zero step keeps the net as is
        assert_eq!(net.sgd_step(&avg, 0.5).unwrap(), net);
    }

    #[test]
    fn aggregation_ignores_client_order() {
        let f = |k: f64| [k, -k, 0.5 * k, 0.0, 1.0, 0.1, k * k];
        let clients: Vec<ClientTask> = (0..5)
            .map(|i| {
                synthetic_client(
                    i,
                    theta(1.0 + 3.0 * i as f64, 0.05 + 0.1 * i as f64),
                    f(i as f64 * 0.3),
                )
            })
            .collect();
        let mut shuffled = clients.clone();
        shuffled.reverse();
        shuffled.swap(0, 2);
        let cfg = FedConfig::default();
        let net = MetaNet::init(4, 16).unwrap();
        let a = run_round(&net, &clients, &cfg, 3, &mut CommLedger::new()).unwrap();
        let b = run_round(&net, &shuffled, &cfg, 3, &mut CommLedger::new()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn sampling_fraction_and_determinism() {
        assert_eq!(sample_clients(10, 0.25, 1, 1).len(), 3);
        assert_eq!(sample_clients(10, 1.0, 1, 1), (0..10).collect::<Vec<_>>());
        assert_eq!(sample_clients(4, 0.01, 1, 1).len(), 1);
        assert_eq!(sample_clients(10, 0.5, 3, 2), sample_clients(10, 0.5, 3, 2));
    }

    #[test]
    fn failing_clients_are_dropped_and_all_failing_aborts() {
        let mut bad = synthetic_client(1, theta(3.0, 0.1), [0.0; FEATURE_COUNT]);
        bad.tracks.truncate(3);
        let good = synthetic_client(0, theta(3.0, 0.1), [0.0; FEATURE_COUNT]);
        let net = MetaNet::init(0, 8).unwrap();
        let cfg = FedConfig::default();
        let (_, report, _) =
            run_round(&net, &[good, bad.clone()], &cfg, 1, &mut CommLedger::new()).unwrap();
        assert_eq!(report.participants, vec![0]);
        assert_eq!(report.dropped, vec![1]);
        let (same, report, _) = run_round(&net, &[bad], &cfg, 1, &mut CommLedger::new()).unwrap();
        assert!(report.aborted);
        assert_eq!(same, net);
    }

    #[test]
    fn ledger_matches_serialized_bytes() {
        let clients: Vec<ClientTask> = (0..3)
            .map(|i| synthetic_client(i, theta(2.0, 0.3), [0.1 * i as f64; 7]))
            .collect();
        let cfg = FedConfig {
            rounds: 4,
            ..FedConfig::default()
        };
        let mut uploaded = 0u64;
        let run = train_fedmeta_observed(&clients, &cfg, |_, t| {
            uploaded += t.uploads.iter().map(|u| u.len() as u64).sum::<u64>();
        })
        .unwrap();
        assert_eq!(run.ledger.bytes(Direction::Up), uploaded);
        let reported: u64 = run.reports.iter().map(|r| r.bytes_up + r.bytes_down).sum();
        assert_eq!(run.ledger.total_bytes(), reported);
        assert!(run.ledger.entries().iter().all(|e| e.seconds > 0.0));
        let per_round_broadcast = GlobalBroadcast {
            round: 1,
            net: run.net.clone(),
        }
        .encode()
        .len() as u64;
        assert_eq!(
            run.ledger.payload_bytes(Payload::Broadcast),
            4 * 3 * per_round_broadcast
        );
        assert_eq!(run.ledger.payload_bytes(Payload::Report), 4 * 3 * 70_000);

        let longer = train_fedmeta(&clients, &FedConfig { rounds: 8, ..cfg }).unwrap();
        assert!(longer.ledger.total_bytes() >= run.ledger.total_bytes());
        let again = train_fedmeta(&clients, &cfg).unwrap();
        assert_eq!(again.reports, run.reports);
    }

    #[test]
    fn one_round_run_is_run_round() {
        let clients: Vec<ClientTask> = (0..2)
            .map(|i| synthetic_client(i, theta(8.0, 0.6), [0.2; 7]))
            .collect();
        let cfg = FedConfig {
            rounds: 1,
            seed: 3,
            ..FedConfig::default()
        };
        let run = train_fedmeta(&clients, &cfg).unwrap();
        let init = MetaNet::init(3, cfg.hidden).unwrap();
        let (net, report, _) = run_round(&init, &clients, &cfg, 1, &mut CommLedger::new()).unwrap();
        assert_eq!(run.net, net);
        assert_eq!(run.reports, vec![report]);
    }

    #[test]
    fn centralized_single_client_is_local_training() {
        let c = synthetic_client(0, theta(12.0, 0.7), [0.4; 7]);
        let cfg = CentralConfig {
            epochs: 5,
            lr: 0.2,
            seed: 8,
            ..CentralConfig::default()
        };
        let run = train_meta_centralized(core::slice::from_ref(&c), &cfg).unwrap();
        let mut net = MetaNet::init(8, cfg.hidden).unwrap();
        for _ in 0..5 {
            let (_, g) = net.grad_param_loss(&c.features, &c.theta_star.to_vector());
            net = net.sgd_step(&g, 0.2).unwrap();
        }
        assert_eq!(run.net, net);
        assert_eq!(run.ledger.total_bytes(), 1_000);
        assert!(run.epochs[4].mean_param_loss < run.epochs[0].mean_param_loss);
    }

    #[test]
    fn upload_ledger_sums_declared_sizes() {
        let mut clients: Vec<ClientTask> = (0..4)
            .map(|i| synthetic_client(i, theta(2.0, 0.3), [0.0; 7]))
            .collect();
        let sizes = [100_000_000u64, 120_000_000, 107_300_000, 100_000_000];
        for (c, s) in clients.iter_mut().zip(sizes) {
            c.raw_file_bytes = s;
        }
        let ledger = upload_ledger(&clients, &LinkModel::default());
        assert_eq!(ledger.total_bytes(), 427_300_000);
        assert!((bps(&ledger, 1.0).unwrap() - 3418.4).abs() < 1e-9);
        let s = CommSummary::from_ledger(&ledger, 0, 4, 1);
        assert_eq!(
            (s.model_upload_bytes, s.download_bytes, s.file_upload_bytes),
            (0, 0, 427_300_000)
        );
    }

    #[test]
    fn bps_examples() {
        assert_eq!(bps(&CommLedger::new(), 1.0).unwrap(), 0.0);
        assert!(bps(&CommLedger::new(), 0.0).is_err());
        // 0.01 + 5.6 + 0.018 MB
        let v = bps_of_bytes(10_000 + 5_600_000 + 18_000, 1.0).unwrap();
        assert!((v - 45.024).abs() < 1e-9);
    }

    #[test]
    fn seeded_scene_clients_build() {
        let setup = TaskSetup {
            grid: ParamGrid {
                smoothing: vec![5.0, 10.0],
                angle_threshold: vec![0.2, 0.5],
                bin_count: vec![32, 64],
                peak_prominence: vec![0.05, 0.2],
            },
            ..TaskSetup::default()
        };
        let spec = &seen_scenes(1, 20)[0];
        let (task, oracle) = ClientTask::from_spec(3, spec, &setup).unwrap();
        assert_eq!(task.theta_star, oracle.params);
        assert_eq!(oracle.evaluated, 16);
        assert_eq!(task.reference.lane_count(), 3);
    }

    #[test]
    fn random_gradients_average_exactly_when_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let flat: Vec<f64> = (0..MetaNet::zeros(3).param_count())
                .map(|_| rng.random_range(-5.0..5.0))
                .collect();
            let g = MetaNet::from_flat(3, &flat).unwrap();
            let avg = average_gradients(&[g.clone(), g.clone(), g.clone(), g.clone()]).unwrap();
            assert_eq!(avg, g);
        }
    }
}
