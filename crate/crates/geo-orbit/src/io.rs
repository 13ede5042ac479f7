//! On-disk formats: JSON documents, JSON-lines tracks and round reports,
//! CSV ledgers and loss curves, plain-text loss tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use geo_orbit_core::fed::{CommLedger, Direction};
use geo_orbit_core::geometry::{Homography, LocalTangentPlane, PixelPoint};
use geo_orbit_core::metrics::{LossBreakdown, LossWeights};
use geo_orbit_core::pipeline::{Track, TrackSample};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::read(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e))
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_text(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::write(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::write(path, e))
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> CliResult<String> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &to_json(value)?)
}

/// One line of a tracks file: `{"id": ..., "samples": [[t, x, y], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub id: String,
    pub samples: Vec<[f64; 3]>,
}

impl From<&Track> for TrackRecord {
    fn from(t: &Track) -> Self {
        Self {
            id: t.id().to_string(),
            samples: t
                .samples()
                .iter()
                .map(|s| [s.t, s.point.x, s.point.y])
                .collect(),
        }
    }
}

/// How the `x, y` of a tracks file map to ground meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackFrame {
    /// Already local meters.
    Planar,
    /// Image pixels, mapped through a homography.
    Pixels(Homography),
    /// Longitude, latitude in degrees, projected around an anchor.
    Degrees(LocalTangentPlane),
}

impl TrackFrame {
    fn sample(&self, [t, x, y]: [f64; 3]) -> geo_orbit_core::Result<TrackSample> {
        let p = match self {
            TrackFrame::Planar => return Ok(TrackSample::new(t, x, y)),
            TrackFrame::Pixels(h) => h.apply(PixelPoint::new(x, y))?,
            TrackFrame::Degrees(plane) => plane.project(x, y),
        };
        Ok(TrackSample::new(t, p.x, p.y))
    }
}

/// Parses a tracks file. Errors carry the 1-based line number.
pub fn parse_tracks(text: &str, frame: &TrackFrame) -> Result<Vec<Track>, String> {
    let mut tracks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let rec: TrackRecord =
            serde_json::from_str(line).map_err(|e| format!("line {line_no}: {e}"))?;
        let samples = rec
            .samples
            .iter()
            .map(|&s| frame.sample(s))
            .collect::<geo_orbit_core::Result<Vec<_>>>()
            .map_err(|e| format!("line {line_no}: {e}"))?;
        tracks.push(Track::new(rec.id, samples).map_err(|e| format!("line {line_no}: {e}"))?);
    }
    if tracks.is_empty() {
        return Err("no tracks".into());
    }
    Ok(tracks)
}

pub fn read_tracks(path: &Path, frame: &TrackFrame) -> CliResult<Vec<Track>> {
    parse_tracks(&read_text(path)?, frame).map_err(|e| CliError::parse(path, e))
}

pub fn tracks_jsonl(tracks: &[Track]) -> CliResult<String> {
    jsonl(tracks.iter().map(TrackRecord::from))
}

/// One compact JSON document per line.
pub fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> CliResult<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).map_err(|e| CliError::internal(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomographyFile {
    /// Row-major 3x3.
    pub matrix: [f64; 9],
}

pub fn read_homography(path: &Path) -> CliResult<Homography> {
    let f: HomographyFile = read_json(path)?;
    Homography::from_row_major(&f.matrix).map_err(|e| CliError::parse(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorFile {
    pub lat0: f64,
    pub lon0: f64,
}

pub fn read_anchor(path: &Path) -> CliResult<LocalTangentPlane> {
    let f: AnchorFile = read_json(path)?;
    LocalTangentPlane::new(f.lat0, f.lon0).map_err(|e| CliError::parse(path, e))
}

/// A ledger line as written to CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub round: u32,
    pub direction: Direction,
    pub bytes: u64,
    pub seconds: f64,
}

pub fn ledger_csv(ledger: &CommLedger) -> CliResult<String> {
    csv_rows(ledger.entries().iter().map(|e| LedgerRow {
        round: e.round,
        direction: e.direction,
        bytes: e.bytes,
        seconds: e.seconds,
    }))
}

pub fn parse_ledger_csv(text: &str) -> Result<Vec<LedgerRow>, String> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())
}

/// One point of a loss curve: a round or an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub round: u32,
    pub mean: f64,
    pub std: f64,
}

pub fn loss_curve_csv(rows: &[CurveRow]) -> CliResult<String> {
    csv_rows(rows.iter().copied())
}

pub fn parse_loss_curve_csv(text: &str) -> Result<Vec<CurveRow>, String> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())
}

fn csv_rows<T: Serialize>(rows: impl IntoIterator<Item = T>) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| CliError::internal(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::internal(e.to_string()))
}

pub const LOSS_COLUMNS: [&str; 5] = [
    "L_consistency",
    "L_geometry",
    "L_center",
    "L_lane_num",
    "L_total",
];

/// Fixed-width table of loss rows, one per label, followed by the weights.
pub fn loss_table(
    label_header: &str,
    rows: &[(String, LossBreakdown)],
    weights: &LossWeights,
) -> String {
    let label_w = rows
        .iter()
        .map(|(l, _)| l.len())
        .chain([label_header.len()])
        .max()
        .unwrap_or(0);
    let col_w = LOSS_COLUMNS
        .iter()
        .map(|c| c.len())
        .max()
        .unwrap_or(0)
        .max(10);
    let mut out = String::new();
    let _ = write!(out, "{label_header:<label_w$}");
    for c in LOSS_COLUMNS {
        let _ = write!(out, "  {c:>col_w$}");
    }
    out.push('\n');
    for (label, b) in rows {
        let _ = write!(out, "{label:<label_w$}");
        for v in [b.consistency, b.geometry, b.center, b.lane_num, b.total] {
            let _ = write!(out, "  {v:>col_w$.4}");
        }
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "weights: consistency={} geometry={} center={} lane_num={}",
        weights.consistency, weights.geometry, weights.center, weights.lane_num
    );
    out
}
