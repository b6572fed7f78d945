//! End-to-end orchestration: configuration, per-building fitting, cohort
//! embedding and clustering, artifact files and the run manifest.
//!
//! Every stage reads and writes plain files in the output directory so it
//! can be run on its own:
//!
//! | stage      | reads                                   | writes |
//! |------------|-----------------------------------------|--------|
//! | ingest     | meter CSV, metadata CSV                 | `ingest_report.json` |
//! | fit        | meter CSV, metadata CSV                 | `models.jsonl`, `buildings.csv` |
//! | classify   | meter CSV, metadata CSV, `models.jsonl` | `day_classification.csv` |
//! | embed      | `models.jsonl`                          | `embedding.csv` |
//! | cluster    | `embedding.csv`, `models.jsonl`         | `clusters.csv`, `centroids.csv`, `profiles.csv`, `profile_grids.csv`, `elbow.csv` |
//! | report     | all of the above                        | `figures/` |
//!
//! [`run_pipeline`] runs them all in one pass and adds `manifest.json`.

pub mod artifacts;
pub mod report;
mod svg;
pub mod synth;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{behavior_matrices, BehaviorError, HOURS_PER_DAY};
use crate::cluster::{elbow, kmeans_fit, summarize_profiles, ClusterError, KMeansConfig, KMeansModel, ProfileSummary};
use crate::eigen::{classify_days, DayClassification, EigenError, EigenModel};
use crate::embed::{embed, EmbedConfig, EmbedError, Embedding};
use crate::ingest::{
    extract_building, parse_meter_csv, parse_metadata_csv, BuildingMetadata, IngestError, IngestReport, MeterTable,
};
use crate::seed::derive_seed;

pub use artifacts::*;
pub use report::{report_figures, ReportOptions};
pub use synth::{generate_synthetic, SynthConfig, SynthCorpus};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("data error: {0}")]
    Data(String),
    #[error("only {fitted} buildings could be fitted, at least {required} are needed")]
    TooFewBuildings { fitted: usize, required: usize },
    #[error("missing input artifact {0}; run the upstream stage first")]
    ReportInputMissing(PathBuf),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 configuration, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Embed(EmbedError::InvalidConfig(_)) => 2,
            PipelineError::Cluster(ClusterError::InvalidConfig(_)) => 2,
            PipelineError::Io { .. }
            | PipelineError::Ingest(_)
            | PipelineError::Csv(_)
            | PipelineError::Json(_)
            | PipelineError::Data(_)
            | PipelineError::TooFewBuildings { .. }
            | PipelineError::ReportInputMissing(_)
            | PipelineError::Embed(EmbedError::TooFewPoints { .. } | EmbedError::RaggedPoints)
            | PipelineError::Cluster(ClusterError::TooFewPoints { .. } | ClusterError::RaggedPoints) => 3,
            PipelineError::Eigen(_) | PipelineError::Embed(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterSpace {
    /// Cluster the 2-D embedding coordinates.
    Embedding,
    /// Cluster the primary eigenbehaviors directly.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSettings {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub negative_samples: usize,
}

impl Default for EmbedSettings {
    fn default() -> Self {
        let d = EmbedConfig::default();
        EmbedSettings {
            n_neighbors: d.n_neighbors,
            min_dist: d.min_dist,
            epochs: d.epochs,
            negative_samples: d.negative_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSettings {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub space: ClusterSpace,
    /// Largest k in the elbow table; 0 skips it.
    pub elbow_max_k: usize,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        let d = KMeansConfig::default();
        ClusterSettings {
            k: d.k,
            restarts: d.restarts,
            max_iter: d.max_iter,
            space: ClusterSpace::Embedding,
            elbow_max_k: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub meters: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Global seed; stage seeds are derived from it by [`derive_seed`].
    pub seed: u64,
    pub categories: usize,
    /// Number of leading eigenbehaviors used for day classification.
    pub top_k: usize,
    pub embed: EmbedSettings,
    pub cluster: ClusterSettings,
    pub report: ReportOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            meters: None,
            metadata: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            categories: crate::behavior::DEFAULT_CATEGORIES,
            top_k: 3,
            embed: EmbedSettings::default(),
            cluster: ClusterSettings::default(),
            report: ReportOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, PipelineError> {
        let raw = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(2..=255).contains(&self.categories) {
            return bad(format!("categories must be in 2..=255, got {}", self.categories));
        }
        let dim = self.categories * HOURS_PER_DAY;
        if self.top_k == 0 || self.top_k > dim {
            return bad(format!("top_k must be in 1..={dim}, got {}", self.top_k));
        }
        if self.cluster.k == 0 || self.cluster.restarts == 0 || self.cluster.max_iter == 0 {
            return bad("cluster k, restarts and max_iter must be positive".into());
        }
        self.embed_config(self.embed.n_neighbors)
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn embed_seed(&self) -> u64 {
        derive_seed(self.seed, "embed")
    }

    pub fn cluster_seed(&self) -> u64 {
        derive_seed(self.seed, "cluster")
    }

    pub fn embed_config(&self, n_neighbors: usize) -> EmbedConfig {
        EmbedConfig {
            n_neighbors,
            min_dist: self.embed.min_dist,
            epochs: self.embed.epochs,
            negative_samples: self.embed.negative_samples,
            seed: self.embed_seed(),
            curve: None,
        }
    }

    pub fn kmeans_config(&self) -> KMeansConfig {
        KMeansConfig {
            k: self.cluster.k,
            restarts: self.cluster.restarts,
            max_iter: self.cluster.max_iter,
            seed: self.cluster_seed(),
        }
    }

    fn input_paths(&self) -> Result<(&Path, &Path), PipelineError> {
        match (&self.meters, &self.metadata) {
            (Some(m), Some(d)) => Ok((m, d)),
            _ => Err(PipelineError::Config("both a meter CSV and a metadata CSV are required".into())),
        }
    }
}

/// Parsed inputs of one run.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub table: MeterTable,
    pub metadata: Vec<BuildingMetadata>,
    pub report: IngestReport,
}

impl Inputs {
    pub fn metadata_by_id(&self) -> HashMap<&str, &BuildingMetadata> {
        self.metadata.iter().map(|m| (m.building_id.as_str(), m)).collect()
    }
}

fn open(path: &Path) -> Result<fs::File, PipelineError> {
    fs::File::open(path).map_err(|e| PipelineError::io(path, e))
}

pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs, PipelineError> {
    let (meters, metadata) = cfg.input_paths()?;
    let parsed = parse_meter_csv(std::io::BufReader::new(open(meters)?))?;
    let metadata = parse_metadata_csv(std::io::BufReader::new(open(metadata)?))?;
    info!(
        "loaded {} buildings x {} hours ({} rows rejected, {} missing cells)",
        parsed.table.building_count(),
        parsed.table.row_count(),
        parsed.report.rejected.len(),
        parsed.report.missing_cells()
    );
    Ok(Inputs {
        table: parsed.table,
        metadata,
        report: parsed.report,
    })
}

/// Why a building was left out of the cohort.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExclusionReason {
    MissingMetadata,
    MissingArea,
    DegenerateSeries,
    NoCompleteDays,
    InsufficientData(String),
    Numerical(String),
}

impl ExclusionReason {
    pub fn name(&self) -> &'static str {
        match self {
            ExclusionReason::MissingMetadata => "MissingMetadata",
            ExclusionReason::MissingArea => "MissingArea",
            ExclusionReason::DegenerateSeries => "DegenerateSeries",
            ExclusionReason::NoCompleteDays => "NoCompleteDays",
            ExclusionReason::InsufficientData(_) => "InsufficientData",
            ExclusionReason::Numerical(_) => "Numerical",
        }
    }

    pub fn parse(name: &str, detail: &str) -> Option<Self> {
        Some(match name {
            "MissingMetadata" => ExclusionReason::MissingMetadata,
            "MissingArea" => ExclusionReason::MissingArea,
            "DegenerateSeries" => ExclusionReason::DegenerateSeries,
            "NoCompleteDays" => ExclusionReason::NoCompleteDays,
            "InsufficientData" => ExclusionReason::InsufficientData(detail.to_string()),
            "Numerical" => ExclusionReason::Numerical(detail.to_string()),
            _ => return None,
        })
    }

    pub fn detail(&self) -> &str {
        match self {
            ExclusionReason::InsufficientData(d) | ExclusionReason::Numerical(d) => d,
            _ => "",
        }
    }
}

impl From<BehaviorError> for ExclusionReason {
    fn from(e: BehaviorError) -> Self {
        match e {
            BehaviorError::MissingArea(_) => ExclusionReason::MissingArea,
            BehaviorError::DegenerateSeries(_) => ExclusionReason::DegenerateSeries,
            BehaviorError::NoCompleteDays(_) => ExclusionReason::NoCompleteDays,
            other => ExclusionReason::InsufficientData(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildingFit {
    pub model: EigenModel,
    pub classification: DayClassification,
}

#[derive(Debug, Clone)]
pub enum BuildingOutcome {
    Fitted(Box<BuildingFit>),
    Excluded(ExclusionReason),
}

impl BuildingOutcome {
    pub fn fit(&self) -> Option<&BuildingFit> {
        match self {
            BuildingOutcome::Fitted(f) => Some(f),
            BuildingOutcome::Excluded(_) => None,
        }
    }
}

fn fit_one(
    table: &MeterTable,
    id: &str,
    meta: Option<&BuildingMetadata>,
    categories: usize,
    top_k: usize,
) -> Result<BuildingFit, ExclusionReason> {
    let meta = meta.ok_or(ExclusionReason::MissingMetadata)?;
    let series = extract_building(table, id).map_err(|e| ExclusionReason::InsufficientData(e.to_string()))?;
    let (_, bin) = behavior_matrices(&series, meta, categories)?;
    let numerical = |e: EigenError| ExclusionReason::Numerical(e.to_string());
    let model = EigenModel::fit_behavior(&bin).map_err(numerical)?;
    let classification = classify_days(&bin, &model, top_k.min(model.dim())).map_err(numerical)?;
    Ok(BuildingFit { model, classification })
}

/// Fit every building of the meter table independently. The result follows
/// the table's column order.
pub fn fit_buildings(inputs: &Inputs, categories: usize, top_k: usize) -> Vec<(String, BuildingOutcome)> {
    let meta = inputs.metadata_by_id();
    let ids = inputs.table.building_ids();
    ids.par_iter()
        .map(|id| {
            let outcome = match fit_one(&inputs.table, id, meta.get(id.as_str()).copied(), categories, top_k) {
                Ok(fit) => BuildingOutcome::Fitted(Box::new(fit)),
                Err(reason) => {
                    warn!("excluding {id}: {}", reason.name());
                    BuildingOutcome::Excluded(reason)
                }
            };
            (id.clone(), outcome)
        })
        .collect()
}

/// Embedding and clustering of the fitted cohort.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub embedding: Embedding,
    pub n_neighbors: usize,
    pub kmeans: KMeansModel,
    pub profiles: Vec<ProfileSummary>,
    pub elbow: Vec<(usize, f64)>,
    /// Profile id per building, aligned with `embedding.building_ids`.
    pub profile_of: Vec<String>,
}

fn minimum_cohort(cfg: &PipelineConfig) -> usize {
    cfg.cluster.k.max(3)
}

/// UMAP neighbour count actually used: the configured value, capped at
/// one less than the cohort size.
pub fn effective_neighbors(cfg: &PipelineConfig, n: usize) -> usize {
    cfg.embed.n_neighbors.min(n.saturating_sub(1))
}

pub fn embed_stage(
    cfg: &PipelineConfig,
    ids: &[String],
    primaries: &[Vec<f64>],
) -> Result<(Embedding, usize), PipelineError> {
    let required = minimum_cohort(cfg);
    if ids.len() < required {
        return Err(PipelineError::TooFewBuildings {
            fitted: ids.len(),
            required,
        });
    }
    let k = effective_neighbors(cfg, ids.len());
    if k != cfg.embed.n_neighbors {
        warn!("cohort of {} buildings: using {k} neighbours", ids.len());
    }
    let coords = embed(primaries, &cfg.embed_config(k))?;
    Ok((
        Embedding {
            building_ids: ids.to_vec(),
            coords,
        },
        k,
    ))
}

pub fn cluster_stage(
    cfg: &PipelineConfig,
    embedding: &Embedding,
    primaries: &[Vec<f64>],
) -> Result<(KMeansModel, Vec<ProfileSummary>, Vec<(usize, f64)>, Vec<String>), PipelineError> {
    let points: Vec<Vec<f64>> = match cfg.cluster.space {
        ClusterSpace::Embedding => embedding.coords.iter().map(|c| c.to_vec()).collect(),
        ClusterSpace::Raw => primaries.to_vec(),
    };
    let km_cfg = cfg.kmeans_config();
    let model = kmeans_fit(&points, &km_cfg)?;
    let profiles = summarize_profiles(&model.labels, &embedding.building_ids, primaries, &model.centroids);
    let elbow_table = if cfg.cluster.elbow_max_k > 0 {
        elbow(&points, 1..=cfg.cluster.elbow_max_k, &km_cfg)?
    } else {
        Vec::new()
    };
    let mut name = vec![String::new(); cfg.cluster.k];
    for p in &profiles {
        name[p.cluster] = p.profile_id.clone();
    }
    let profile_of = model.labels.iter().map(|&l| name[l].clone()).collect();
    Ok((model, profiles, elbow_table, profile_of))
}

pub fn cohort_stage(cfg: &PipelineConfig, ids: &[String], primaries: &[Vec<f64>]) -> Result<Cohort, PipelineError> {
    let (embedding, n_neighbors) = embed_stage(cfg, ids, primaries)?;
    let (kmeans, profiles, elbow, profile_of) = cluster_stage(cfg, &embedding, primaries)?;
    Ok(Cohort {
        embedding,
        n_neighbors,
        kmeans,
        profiles,
        elbow,
        profile_of,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitStatus {
    Fitted,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingStatus {
    pub building_id: String,
    pub status: FitStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<ExclusionReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub days: Option<usize>,
}

impl BuildingStatus {
    pub fn of(id: &str, outcome: &BuildingOutcome) -> Self {
        match outcome {
            BuildingOutcome::Fitted(f) => BuildingStatus {
                building_id: id.to_string(),
                status: FitStatus::Fitted,
                reason: None,
                days: Some(f.model.days),
            },
            BuildingOutcome::Excluded(r) => BuildingStatus {
                building_id: id.to_string(),
                status: FitStatus::Excluded,
                reason: Some(r.clone()),
                days: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub buildings: usize,
    pub fitted: usize,
    pub excluded: usize,
    pub classified_days: usize,
    pub profiles: usize,
}

/// Parameters resolved at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub embed_seed: u64,
    pub cluster_seed: u64,
    pub n_neighbors: usize,
    pub curve_a: f64,
    pub curve_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: PipelineConfig,
    pub buildings: Vec<BuildingStatus>,
    pub counts: RunCounts,
    pub effective: EffectiveParams,
    /// Artifacts whose contents depend on which buildings are in the cohort.
    pub cohort_dependent: Vec<String>,
    pub wall_time_seconds: f64,
    /// SHA-256 of every artifact, keyed by path relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
}

pub const MANIFEST: &str = "manifest.json";

pub fn read_manifest(out_dir: &Path) -> Result<RunManifest, PipelineError> {
    let path = out_dir.join(MANIFEST);
    Ok(serde_json::from_reader(std::io::BufReader::new(open(&path)?))?)
}

/// Run every stage and write all artifacts plus `manifest.json`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let started = Instant::now();
    cfg.validate()?;
    let out = cfg.out_dir.as_path();
    fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;

    let inputs = load_inputs(cfg)?;
    write_ingest_report(out, &inputs)?;

    let outcomes = fit_buildings(&inputs, cfg.categories, cfg.top_k);
    let fitted: Vec<(&str, &BuildingFit)> = outcomes
        .iter()
        .filter_map(|(id, o)| o.fit().map(|f| (id.as_str(), f)))
        .collect();
    info!("fitted {} of {} buildings", fitted.len(), outcomes.len());
    let required = minimum_cohort(cfg);
    if fitted.len() < required {
        return Err(PipelineError::TooFewBuildings {
            fitted: fitted.len(),
            required,
        });
    }

    let models: Vec<&EigenModel> = fitted.iter().map(|(_, f)| &f.model).collect();
    write_models_jsonl(&out.join(MODELS), models.iter().copied())?;
    let statuses: Vec<BuildingStatus> = outcomes.iter().map(|(id, o)| BuildingStatus::of(id, o)).collect();
    write_buildings_csv(&out.join(BUILDINGS), &statuses)?;
    write_classifications_csv(
        &out.join(DAY_CLASSIFICATION),
        fitted.iter().map(|(id, f)| (*id, &f.classification)),
        cfg.top_k,
    )?;

    let ids: Vec<String> = fitted.iter().map(|(id, _)| id.to_string()).collect();
    let primaries: Vec<Vec<f64>> = models.iter().map(|m| m.primary().as_slice().to_vec()).collect();
    let cohort = cohort_stage(cfg, &ids, &primaries)?;
    write_embedding_csv(&out.join(EMBEDDING), &cohort.embedding)?;
    write_cohort(out, cfg, &cohort)?;

    report_figures(out, &cfg.report)?;

    let embed_cfg = cfg.embed_config(cohort.n_neighbors);
    let (curve_a, curve_b) = embed_cfg.curve_params();
    let classified_days = fitted.iter().map(|(_, f)| f.classification.assigned.len()).sum();
    let mut manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        counts: RunCounts {
            buildings: statuses.len(),
            fitted: fitted.len(),
            excluded: statuses.len() - fitted.len(),
            classified_days,
            profiles: cohort.profiles.len(),
        },
        buildings: statuses,
        effective: EffectiveParams {
            embed_seed: embed_cfg.seed,
            cluster_seed: cfg.cluster_seed(),
            n_neighbors: cohort.n_neighbors,
            curve_a,
            curve_b,
        },
        cohort_dependent: COHORT_ARTIFACTS.iter().map(|s| s.to_string()).collect(),
        wall_time_seconds: 0.0,
        artifacts: checksum_dir(out, &[MANIFEST])?,
    };
    manifest.wall_time_seconds = started.elapsed().as_secs_f64();
    let path = out.join(MANIFEST);
    let file = fs::File::create(&path).map_err(|e| PipelineError::io(&path, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &manifest)?;
    info!("run finished in {:.2} s", manifest.wall_time_seconds);
    Ok(manifest)
}

/// Stage `ingest`: validate the inputs and write `ingest_report.json`.
pub fn ingest_stage(cfg: &PipelineConfig) -> Result<Inputs, PipelineError> {
    let out = cfg.out_dir.as_path();
    fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    let inputs = load_inputs(cfg)?;
    write_ingest_report(out, &inputs)?;
    Ok(inputs)
}

/// Stage `fit`: write `models.jsonl` and `buildings.csv`.
pub fn fit_stage(cfg: &PipelineConfig) -> Result<Vec<BuildingStatus>, PipelineError> {
    cfg.validate()?;
    let out = cfg.out_dir.as_path();
    fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    let inputs = load_inputs(cfg)?;
    let outcomes = fit_buildings(&inputs, cfg.categories, cfg.top_k);
    write_models_jsonl(&out.join(MODELS), outcomes.iter().filter_map(|(_, o)| o.fit().map(|f| &f.model)))?;
    let statuses: Vec<BuildingStatus> = outcomes.iter().map(|(id, o)| BuildingStatus::of(id, o)).collect();
    write_buildings_csv(&out.join(BUILDINGS), &statuses)?;
    Ok(statuses)
}

/// Stage `classify`: project each fitted building's days onto its stored
/// model and write `day_classification.csv`.
pub fn classify_stage(cfg: &PipelineConfig) -> Result<usize, PipelineError> {
    cfg.validate()?;
    let out = cfg.out_dir.as_path();
    let models = read_models_jsonl(&require(out, MODELS)?)?;
    let inputs = load_inputs(cfg)?;
    let meta = inputs.metadata_by_id();
    let results: Result<Vec<(String, DayClassification)>, PipelineError> = models
        .par_iter()
        .map(|model| {
            let id = &model.building_id;
            let m = meta
                .get(id.as_str())
                .ok_or_else(|| PipelineError::Data(format!("no metadata for fitted building {id:?}")))?;
            let series = extract_building(&inputs.table, id)?;
            let (_, bin) = behavior_matrices(&series, m, cfg.categories)
                .map_err(|e| PipelineError::Data(format!("{id}: {e}")))?;
            if bin.width() != model.dim() {
                return Err(PipelineError::Data(format!(
                    "{id}: model dimension {} does not match {} categories",
                    model.dim(),
                    cfg.categories
                )));
            }
            Ok((id.clone(), classify_days(&bin, model, cfg.top_k)?))
        })
        .collect();
    let results = results?;
    write_classifications_csv(
        &out.join(DAY_CLASSIFICATION),
        results.iter().map(|(id, c)| (id.as_str(), c)),
        cfg.top_k,
    )?;
    Ok(results.len())
}

fn primaries_of(models: &[EigenModel]) -> (Vec<String>, Vec<Vec<f64>>) {
    models
        .iter()
        .map(|m| (m.building_id.clone(), m.primary().as_slice().to_vec()))
        .unzip()
}

/// Stage `embed`: embed the primary eigenbehaviors from `models.jsonl`.
pub fn embed_file_stage(cfg: &PipelineConfig) -> Result<Embedding, PipelineError> {
    cfg.validate()?;
    let out = cfg.out_dir.as_path();
    let models = read_models_jsonl(&require(out, MODELS)?)?;
    let (ids, primaries) = primaries_of(&models);
    let (embedding, _) = embed_stage(cfg, &ids, &primaries)?;
    write_embedding_csv(&out.join(EMBEDDING), &embedding)?;
    Ok(embedding)
}

/// Stage `cluster`: cluster the stored embedding and write the profile files.
pub fn cluster_file_stage(cfg: &PipelineConfig) -> Result<Vec<ProfileSummary>, PipelineError> {
    cfg.validate()?;
    let out = cfg.out_dir.as_path();
    let embedding = read_embedding_csv(&require(out, EMBEDDING)?)?;
    let models = read_models_jsonl(&require(out, MODELS)?)?;
    let by_id: HashMap<&str, &EigenModel> = models.iter().map(|m| (m.building_id.as_str(), m)).collect();
    let primaries = embedding
        .building_ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|m| m.primary().as_slice().to_vec())
                .ok_or_else(|| PipelineError::Data(format!("embedded building {id:?} has no model")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let required = minimum_cohort(cfg);
    if embedding.building_ids.len() < required {
        return Err(PipelineError::TooFewBuildings {
            fitted: embedding.building_ids.len(),
            required,
        });
    }
    let (kmeans, profiles, elbow, profile_of) = cluster_stage(cfg, &embedding, &primaries)?;
    let cohort = Cohort {
        embedding,
        n_neighbors: 0,
        kmeans,
        profiles,
        elbow,
        profile_of,
    };
    write_cohort(out, cfg, &cohort)?;
    Ok(cohort.profiles)
}

fn write_cohort(out: &Path, cfg: &PipelineConfig, cohort: &Cohort) -> Result<(), PipelineError> {
    write_clusters_csv(&out.join(CLUSTERS), &cohort.embedding.building_ids, &cohort.profile_of, &cohort.kmeans.labels)?;
    write_centroids_csv(&out.join(CENTROIDS), &cohort.profiles, &cohort.kmeans.centroids)?;
    write_profiles_csv(&out.join(PROFILES), &cohort.profiles)?;
    write_profile_grids_csv(&out.join(PROFILE_GRIDS), &cohort.profiles, cfg.categories)?;
    write_elbow_csv(&out.join(ELBOW), &cohort.elbow)?;
    Ok(())
}

/// Path of an upstream artifact, or [`PipelineError::ReportInputMissing`].
pub fn require(out: &Path, name: &str) -> Result<PathBuf, PipelineError> {
    let path = out.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(PipelineError::ReportInputMissing(path))
    }
}
