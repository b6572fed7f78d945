//! Artifact file names, writers and readers.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BuildingStatus, ExclusionReason, FitStatus, Inputs, PipelineError};
use crate::behavior::HOURS_PER_DAY;
use crate::cluster::ProfileSummary;
use crate::eigen::{DayClassification, EigenModel, EigenModelRecord};
use crate::embed::Embedding;
use crate::ingest::IngestReport;

pub const INGEST_REPORT: &str = "ingest_report.json";
pub const MODELS: &str = "models.jsonl";
pub const BUILDINGS: &str = "buildings.csv";
pub const DAY_CLASSIFICATION: &str = "day_classification.csv";
pub const EMBEDDING: &str = "embedding.csv";
pub const CLUSTERS: &str = "clusters.csv";
pub const CENTROIDS: &str = "centroids.csv";
pub const PROFILES: &str = "profiles.csv";
pub const PROFILE_GRIDS: &str = "profile_grids.csv";
pub const ELBOW: &str = "elbow.csv";
pub const FIGURES: &str = "figures";

/// Artifacts that change when the set of fitted buildings changes.
pub const COHORT_ARTIFACTS: [&str; 7] = [EMBEDDING, CLUSTERS, CENTROIDS, PROFILES, PROFILE_GRIDS, ELBOW, FIGURES];

fn create(path: &Path) -> Result<BufWriter<fs::File>, PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| PipelineError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<fs::File>, PipelineError> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<fs::File>>, PipelineError> {
    Ok(csv::Writer::from_writer(create(path)?))
}

pub(crate) fn finish<W: Write>(path: &Path, mut w: csv::Writer<W>) -> Result<(), PipelineError> {
    w.flush().map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| PipelineError::io(path, e))
}

/// Hour column names `h00..h23`.
pub fn hour_headers() -> impl Iterator<Item = String> {
    (0..HOURS_PER_DAY).map(|h| format!("h{h:02}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub buildings: usize,
    pub hours: usize,
    pub first_timestamp: Option<String>,
    pub last_timestamp: Option<String>,
    pub metadata_records: usize,
    /// Meter buildings with no metadata row.
    pub without_metadata: Vec<String>,
    /// Metadata rows with no meter column.
    pub without_meters: Vec<String>,
    pub meters: IngestReport,
}

pub fn ingest_summary(inputs: &Inputs) -> IngestSummary {
    let meta = inputs.metadata_by_id();
    let ids = inputs.table.building_ids();
    let ts = inputs.table.timestamps();
    IngestSummary {
        buildings: ids.len(),
        hours: ts.len(),
        first_timestamp: ts.first().map(crate::ingest::format_timestamp),
        last_timestamp: ts.last().map(crate::ingest::format_timestamp),
        metadata_records: inputs.metadata.len(),
        without_metadata: ids.iter().filter(|id| !meta.contains_key(id.as_str())).cloned().collect(),
        without_meters: inputs
            .metadata
            .iter()
            .filter(|m| inputs.table.index_of(&m.building_id).is_none())
            .map(|m| m.building_id.clone())
            .collect(),
        meters: inputs.report.clone(),
    }
}

pub fn write_ingest_report(out: &Path, inputs: &Inputs) -> Result<(), PipelineError> {
    let path = out.join(INGEST_REPORT);
    let mut json = serde_json::to_string_pretty(&ingest_summary(inputs))?;
    json.push('\n');
    write_text(&path, &json)
}

/// One JSON record per line, in the order given.
pub fn write_models_jsonl<'a>(
    path: &Path,
    models: impl IntoIterator<Item = &'a EigenModel>,
) -> Result<(), PipelineError> {
    let mut f = create(path)?;
    for m in models {
        serde_json::to_writer(&mut f, &m.to_record())?;
        f.write_all(b"\n").map_err(|e| PipelineError::io(path, e))?;
    }
    f.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn read_models_jsonl(path: &Path) -> Result<Vec<EigenModel>, PipelineError> {
    let mut models = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EigenModelRecord = serde_json::from_str(&line)?;
        let model = EigenModel::from_record(rec)
            .map_err(|e| PipelineError::Data(format!("{} line {}: {e}", path.display(), n + 1)))?;
        models.push(model);
    }
    Ok(models)
}

pub fn write_buildings_csv(path: &Path, statuses: &[BuildingStatus]) -> Result<(), PipelineError> {
    let mut w = csv_writer(path)?;
    w.write_record(["building_id", "status", "reason", "detail", "days"])?;
    for s in statuses {
        let (status, reason, detail) = match (&s.status, &s.reason) {
            (FitStatus::Fitted, _) => ("fitted", "", ""),
            (FitStatus::Excluded, Some(r)) => ("excluded", r.name(), r.detail()),
            (FitStatus::Excluded, None) => ("excluded", "", ""),
        };
        let days = s.days.map(|d| d.to_string()).unwrap_or_default();
        w.write_record([s.building_id.as_str(), status, reason, detail, &days])?;
    }
    finish(path, w)
}

pub fn read_buildings_csv(path: &Path) -> Result<Vec<BuildingStatus>, PipelineError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let status = match field(1) {
            "fitted" => FitStatus::Fitted,
            "excluded" => FitStatus::Excluded,
            other => return Err(PipelineError::Data(format!("unknown status {other:?} in {}", path.display()))),
        };
        out.push(BuildingStatus {
            building_id: field(0).to_string(),
            status,
            reason: ExclusionReason::parse(field(2), field(3)),
            days: field(4).parse().ok(),
        });
    }
    Ok(out)
}

/// One row per classified day:
/// `building_id,date,assigned,polarity,w1..wk`.
pub fn write_classifications_csv<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (&'a str, &'a DayClassification)>,
    k: usize,
) -> Result<(), PipelineError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["building_id".to_string(), "date".into(), "assigned".into(), "polarity".into()];
    header.extend((1..=k).map(|j| format!("w{j}")));
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for (id, c) in rows {
        for d in 0..c.day_dates.len() {
            rec.clear();
            rec.push(id.to_string());
            rec.push(c.day_dates[d].to_string());
            rec.push(c.assigned[d].to_string());
            rec.push(c.polarity[d].to_string());
            rec.extend(c.weights[d].iter().map(f64::to_string));
            rec.resize(header.len(), String::new());
            w.write_record(&rec)?;
        }
    }
    finish(path, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedDay {
    pub building_id: String,
    pub date: NaiveDate,
    pub assigned: usize,
    pub polarity: i8,
    pub weights: Vec<f64>,
}

pub fn read_classifications_csv(path: &Path) -> Result<Vec<ClassifiedDay>, PipelineError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    let bad = |what: &str, v: &str| PipelineError::Data(format!("{}: bad {what} {v:?}", path.display()));
    for rec in r.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        out.push(ClassifiedDay {
            building_id: get(0).to_string(),
            date: get(1).parse().map_err(|_| bad("date", get(1)))?,
            assigned: get(2).parse().map_err(|_| bad("assigned", get(2)))?,
            polarity: get(3).parse().map_err(|_| bad("polarity", get(3)))?,
            weights: rec
                .iter()
                .skip(4)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| bad("weight", s)))
                .collect::<Result<_, _>>()?,
        });
    }
    Ok(out)
}

pub fn write_embedding_csv(path: &Path, embedding: &Embedding) -> Result<(), PipelineError> {
    let mut f = create(path)?;
    embedding.write_csv(&mut f)?;
    f.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn read_embedding_csv(path: &Path) -> Result<Embedding, PipelineError> {
    Ok(Embedding::read_csv(open(path)?)?)
}

pub fn write_clusters_csv(
    path: &Path,
    ids: &[String],
    profiles: &[String],
    clusters: &[usize],
) -> Result<(), PipelineError> {
    let mut w = csv_writer(path)?;
    w.write_record(["building_id", "profile", "cluster"])?;
    for ((id, p), c) in ids.iter().zip(profiles).zip(clusters) {
        w.write_record([id.as_str(), p.as_str(), &c.to_string()])?;
    }
    finish(path, w)
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ClusterRow {
    pub building_id: String,
    pub profile: String,
    pub cluster: usize,
}

pub fn read_clusters_csv(path: &Path) -> Result<Vec<ClusterRow>, PipelineError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Centroids in profile order: `profile,cluster,c1..cd`.
pub fn write_centroids_csv(
    path: &Path,
    profiles: &[ProfileSummary],
    centroids: &[Vec<f64>],
) -> Result<(), PipelineError> {
    let mut w = csv_writer(path)?;
    let dim = centroids.first().map_or(0, Vec::len);
    let mut header = vec!["profile".to_string(), "cluster".into()];
    header.extend((1..=dim).map(|j| format!("c{j}")));
    w.write_record(&header)?;
    for p in profiles {
        let mut rec = vec![p.profile_id.clone(), p.cluster.to_string()];
        rec.extend(centroids[p.cluster].iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    finish(path, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidRow {
    pub profile: String,
    pub cluster: usize,
    pub coords: Vec<f64>,
}

pub fn read_centroids_csv(path: &Path) -> Result<Vec<CentroidRow>, PipelineError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse_err = |s: &str| PipelineError::Data(format!("{}: bad number {s:?}", path.display()));
        out.push(CentroidRow {
            profile: rec.get(0).unwrap_or("").to_string(),
            cluster: rec.get(1).unwrap_or("").parse().map_err(|_| parse_err(rec.get(1).unwrap_or("")))?,
            coords: rec
                .iter()
                .skip(2)
                .map(|s| s.parse().map_err(|_| parse_err(s)))
                .collect::<Result<_, _>>()?,
        });
    }
    Ok(out)
}

/// Median primary eigenbehavior per profile: `profile,cluster,members,m00..`.
pub fn write_profiles_csv(path: &Path, profiles: &[ProfileSummary]) -> Result<(), PipelineError> {
    let mut w = csv_writer(path)?;
    let dim = profiles.first().map_or(0, |p| p.median_eigenbehavior.len());
    let mut header = vec!["profile".to_string(), "cluster".into(), "members".into()];
    header.extend((0..dim).map(|j| format!("m{j:02}")));
    w.write_record(&header)?;
    for p in profiles {
        let mut rec = vec![p.profile_id.clone(), p.cluster.to_string(), p.members.len().to_string()];
        rec.extend(p.median_eigenbehavior.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    finish(path, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRow {
    pub profile: String,
    pub cluster: usize,
    pub members: usize,
    pub median: Vec<f64>,
}

pub fn read_profiles_csv(path: &Path) -> Result<Vec<ProfileRow>, PipelineError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |s: &str| PipelineError::Data(format!("{}: bad number {s:?}", path.display()));
        let get = |i: usize| rec.get(i).unwrap_or("");
        out.push(ProfileRow {
            profile: get(0).to_string(),
            cluster: get(1).parse().map_err(|_| bad(get(1)))?,
            members: get(2).parse().map_err(|_| bad(get(2)))?,
            median: rec
                .iter()
                .skip(3)
                .map(|s| s.parse().map_err(|_| bad(s)))
                .collect::<Result<_, _>>()?,
        });
    }
    Ok(out)
}

/// Each profile's median eigenbehavior as a `categories x 24` grid:
/// `profile,category,h00..h23`.
pub fn write_profile_grids_csv(
    path: &Path,
    profiles: &[ProfileSummary],
    categories: usize,
) -> Result<(), PipelineError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["profile".to_string(), "category".into()];
    header.extend(hour_headers());
    w.write_record(&header)?;
    for p in profiles {
        for c in 0..categories {
            let mut rec = vec![p.profile_id.clone(), c.to_string()];
            rec.extend(
                p.median_eigenbehavior[c * HOURS_PER_DAY..(c + 1) * HOURS_PER_DAY]
                    .iter()
                    .map(f64::to_string),
            );
            w.write_record(&rec)?;
        }
    }
    finish(path, w)
}

pub fn write_elbow_csv(path: &Path, table: &[(usize, f64)]) -> Result<(), PipelineError> {
    let mut w = csv_writer(path)?;
    w.write_record(["k", "inertia"])?;
    for (k, i) in table {
        w.write_record([k.to_string(), i.to_string()])?;
    }
    finish(path, w)
}

fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let mut f = open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| PipelineError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// SHA-256 of every file under `dir` (recursively), keyed by `/`-separated
/// relative path. Top-level names in `skip` are ignored.
pub fn checksum_dir(dir: &Path, skip: &[&str]) -> Result<BTreeMap<String, String>, PipelineError> {
    fn walk(dir: &Path, prefix: &str, skip: &[&str], out: &mut BTreeMap<String, String>) -> Result<(), PipelineError> {
        let entries = fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| PipelineError::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if prefix.is_empty() && skip.contains(&name.as_str()) {
                continue;
            }
            let rel = if prefix.is_empty() {
                name
            } else {
                format!("{prefix}/{name}")
            };
            let path = entry.path();
            if path.is_dir() {
                walk(&path, &rel, skip, out)?;
            } else {
                out.insert(rel, sha256_file(&path)?);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, "", skip, &mut out)?;
    Ok(out)
}
