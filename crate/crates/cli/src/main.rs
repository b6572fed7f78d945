use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;

use eigenbehavior::pipeline::{
    self, cluster_file_stage, embed_file_stage, fit_stage, generate_synthetic, ingest_stage, report_figures,
    run_pipeline, ClusterSpace, FitStatus, PipelineConfig, PipelineError, SynthConfig,
};

#[derive(Parser)]
#[command(name = "eigenbehavior", version, about = "Eigenbehavior analysis of hourly building meter data")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the inputs and write ingest_report.json.
    Ingest(PipelineArgs),
    /// Fit one eigenbehavior model per building.
    Fit(PipelineArgs),
    /// Classify every day against its building's stored model.
    Classify(PipelineArgs),
    /// Embed the primary eigenbehaviors in two dimensions.
    Embed(PipelineArgs),
    /// Group the embedded buildings into behavior profiles.
    Cluster(PipelineArgs),
    /// Write figure data and SVGs from the stage outputs.
    Report(PipelineArgs),
    /// Run every stage and write manifest.json.
    Run(PipelineArgs),
    /// Generate a synthetic meter corpus with ground truth.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Space {
    Embedding,
    Raw,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON configuration file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Wide meter CSV: timestamp column, then one column per building.
    #[arg(long)]
    meters: Option<PathBuf>,
    /// Building metadata CSV.
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of usage levels per hour.
    #[arg(long)]
    categories: Option<usize>,
    /// Leading eigenbehaviors used for day classification.
    #[arg(long)]
    top_k: Option<usize>,
    /// Number of behavior profiles.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    cluster_space: Option<Space>,
    /// UMAP neighbour count.
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(long)]
    min_dist: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Building to draw per-building figures for (repeatable).
    #[arg(long = "report-building")]
    report_buildings: Vec<String>,
}

impl PipelineArgs {
    fn resolve(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_json_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.meters {
            cfg.meters = Some(v.clone());
        }
        if let Some(v) = &self.metadata {
            cfg.metadata = Some(v.clone());
        }
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.categories {
            cfg.categories = v;
        }
        if let Some(v) = self.top_k {
            cfg.top_k = v;
        }
        if let Some(v) = self.clusters {
            cfg.cluster.k = v;
        }
        if let Some(v) = self.restarts {
            cfg.cluster.restarts = v;
        }
        if let Some(v) = self.cluster_space {
            cfg.cluster.space = match v {
                Space::Embedding => ClusterSpace::Embedding,
                Space::Raw => ClusterSpace::Raw,
            };
        }
        if let Some(v) = self.neighbors {
            cfg.embed.n_neighbors = v;
        }
        if let Some(v) = self.min_dist {
            cfg.embed.min_dist = v;
        }
        if let Some(v) = self.epochs {
            cfg.embed.epochs = v;
        }
        if !self.report_buildings.is_empty() {
            cfg.report.buildings = self.report_buildings.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Directory for meters.csv, metadata.csv and the ground-truth files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SynthConfig::default().buildings)]
    buildings: usize,
    #[arg(long, default_value_t = SynthConfig::default().days)]
    days: usize,
    /// 1: all days alike, 2: weekday/weekend, 3: weekday/Saturday/Sunday.
    #[arg(long, default_value_t = SynthConfig::default().regimes)]
    regimes: usize,
    #[arg(long, default_value_t = SynthConfig::default().archetypes)]
    archetypes: usize,
    #[arg(long, default_value_t = SynthConfig::default().noise)]
    noise: f64,
    #[arg(long, default_value_t = SynthConfig::default().missing_rate)]
    missing_rate: f64,
    #[arg(long, default_value_t = SynthConfig::default().seed)]
    seed: u64,
    /// First day, YYYY-MM-DD.
    #[arg(long, default_value_t = SynthConfig::default().start)]
    start: NaiveDate,
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Ingest(args) => {
            let cfg = args.resolve()?;
            let inputs = ingest_stage(&cfg)?;
            let summary = pipeline::ingest_summary(&inputs);
            println!(
                "{} buildings, {} hours, {} rows rejected, {} missing cells",
                summary.buildings,
                summary.hours,
                summary.meters.rejected.len(),
                summary.meters.missing_cells()
            );
        }
        Command::Fit(args) => {
            let cfg = args.resolve()?;
            let statuses = fit_stage(&cfg)?;
            let fitted = statuses.iter().filter(|s| s.status == FitStatus::Fitted).count();
            println!("fitted {fitted} of {} buildings", statuses.len());
        }
        Command::Classify(args) => {
            let cfg = args.resolve()?;
            let n = pipeline::classify_stage(&cfg)?;
            println!("classified days of {n} buildings");
        }
        Command::Embed(args) => {
            let cfg = args.resolve()?;
            let e = embed_file_stage(&cfg)?;
            println!("embedded {} buildings", e.building_ids.len());
        }
        Command::Cluster(args) => {
            let cfg = args.resolve()?;
            for p in cluster_file_stage(&cfg)? {
                println!("{}: {} buildings", p.profile_id, p.members.len());
            }
        }
        Command::Report(args) => {
            let cfg = args.resolve()?;
            let files = report_figures(&cfg.out_dir, &cfg.report)?;
            println!("wrote {} figure files", files.len());
        }
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let manifest = run_pipeline(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&manifest.counts)?);
        }
        Command::Synth(args) => {
            let cfg = SynthConfig {
                buildings: args.buildings,
                days: args.days,
                regimes: args.regimes,
                archetypes: args.archetypes,
                noise: args.noise,
                missing_rate: args.missing_rate,
                seed: args.seed,
                start: args.start,
            };
            generate_synthetic(&cfg)?.write(&args.out)?;
            println!("wrote {} buildings x {} days to {}", cfg.buildings, cfg.days, args.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
