//! `weathersense`: simulate, extract, train, monitor and report.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use weathersense::fuzzy::MonitorModel;
use weathersense::pipeline::{
    analyze_dataset, extract, monitor_dataset, read_extract, report, train, write_extract, write_report, write_training,
};
use weathersense::sim::{generate_dataset, DatasetManifest, WeatherPresets};

use config::{parse_conditions, parse_sensors, split_list, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "weathersense", version, about = "Weather-degraded sensor simulation and fuzzy-tree performance monitoring")]
struct Cli {
    /// JSON run configuration; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random draw (precedence: flag, config, WEATHERSENSE_SEED, 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: out].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate frames of the weather matrix into <out>/dataset.
    Simulate {
        /// Comma-separated condition tags, or `all`.
        #[arg(long)]
        conditions: Option<String>,
        /// Frames per condition.
        #[arg(long)]
        frames: Option<usize>,
        /// Comma-separated sensors.
        #[arg(long)]
        sensors: Option<String>,
    },
    /// Write features.csv, labels.csv and thresholds.json into <out>.
    Extract(DatasetArgs),
    /// Train the fuzzy trees on <out>/features.csv and labels.csv.
    Train {
        /// Directory holding features.csv and labels.csv [default: <out>].
        #[arg(long, value_name = "DIR")]
        input: Option<PathBuf>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        population: Option<usize>,
    },
    /// Grade every frame of a dataset into <out>/monitor.
    Monitor {
        #[command(flatten)]
        data: DatasetArgs,
        /// Model file [default: <out>/model.json].
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[arg(long)]
        conditions: Option<String>,
        #[arg(long)]
        sensors: Option<String>,
    },
    /// Metric curves per condition and distance into <out>/report.
    Report(DatasetArgs),
}

#[derive(Debug, Args)]
struct DatasetArgs {
    /// Dataset directory [default: <out>/dataset].
    #[arg(long, value_name = "DIR")]
    dataset: Option<PathBuf>,
    /// Report missing frames without failing.
    #[arg(long)]
    lenient: bool,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<weathersense::Error> for Failure {
    fn from(e: weathersense::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Usage)
}

/// Settings shared by every subcommand after merging flags and the file.
struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
    presets: WeatherPresets,
}

impl Ctx {
    fn dataset(&self, flag: &Option<PathBuf>) -> PathBuf {
        flag.clone()
            .or_else(|| self.cfg.dataset.clone())
            .unwrap_or_else(|| self.out.join("dataset"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(p) => usage(RunConfig::load(p))?,
        None => RunConfig::default(),
    };
    let level = match cli.verbose.max(cfg.verbosity) {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("WEATHERSENSE_LOG")
        .format_timestamp(None)
        .init();

    let threads = cli.threads.unwrap_or(cfg.threads);
    if threads > 0 {
        usage(
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| anyhow!("cannot start {threads} threads: {e}")),
        )?;
    }
    let seed = usage(cfg.resolve_seed(cli.seed))?;
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let presets = match &cfg.presets {
        Some(p) => usage(WeatherPresets::load(p).map_err(anyhow::Error::from))?,
        None => WeatherPresets::default(),
    };
    log::info!("seed {seed}, output {}", out.display());
    let ctx = Ctx { cfg, seed, out, presets };

    match cli.command {
        Command::Simulate { conditions, frames, sensors } => simulate(&ctx, conditions, frames, sensors),
        Command::Extract(d) => run_extract(&ctx, &d),
        Command::Train {
            input,
            generations,
            population,
        } => run_train(&ctx, input, generations, population),
        Command::Monitor {
            data,
            model,
            conditions,
            sensors,
        } => run_monitor(&ctx, &data, model, conditions, sensors),
        Command::Report(d) => run_report(&ctx, &d),
    }
}

fn simulate(ctx: &Ctx, conditions: Option<String>, frames: Option<usize>, sensors: Option<String>) -> Result<(), Failure> {
    let sc = &ctx.cfg.simulate;
    let frames = frames.unwrap_or(sc.frames);
    if frames == 0 {
        return Err(Failure::Usage(anyhow!("--frames must be at least 1")));
    }
    let conditions = usage(parse_conditions(&conditions.map(|c| split_list(&c)).unwrap_or_else(|| sc.conditions.clone())))?;
    let sensors = usage(parse_sensors(&sensors.map(|s| split_list(&s)).unwrap_or_else(|| sc.sensors.clone())))?;
    let scenario = sc.scenario.clone().with_seed(ctx.seed);
    usage(scenario.validate().map_err(anyhow::Error::from))?;
    usage(sc.radar.validate().map_err(anyhow::Error::from))?;
    let matrix: Vec<_> = conditions.into_iter().map(|w| (w, scenario.clone())).collect();
    let root = ctx.dataset(&None);
    let m = generate_dataset(&root, &matrix, frames, &sensors, &sc.radar, &ctx.presets)?;
    println!("wrote {} frames of {} conditions to {}", m.entries.len(), m.cells.len(), root.display());
    Ok(())
}

/// Lists missing frames on stderr; fails unless lenient.
fn check_missing(ctx: &Ctx, d: &DatasetArgs, missing: &[PathBuf]) -> Result<(), Failure> {
    for p in missing {
        eprintln!("missing frame: {}", p.display());
    }
    if !missing.is_empty() && !(d.lenient || ctx.cfg.lenient) {
        return Err(Failure::Runtime(anyhow!("{} frame file(s) missing (use --lenient to accept)", missing.len())));
    }
    Ok(())
}

fn run_extract(ctx: &Ctx, d: &DatasetArgs) -> Result<(), Failure> {
    let root = ctx.dataset(&d.dataset);
    let out = extract(&root, &ctx.presets, &ctx.cfg.extract)?;
    write_extract(&ctx.out, &out)?;
    println!("wrote {} labeled rows to {}", out.samples.len(), ctx.out.display());
    check_missing(ctx, d, &out.missing)
}

fn run_train(ctx: &Ctx, input: Option<PathBuf>, generations: Option<usize>, population: Option<usize>) -> Result<(), Failure> {
    let mut tc = ctx.cfg.train.clone();
    tc.ga.seed = ctx.seed;
    if let Some(g) = generations {
        tc.ga.generations = g;
    }
    if let Some(p) = population {
        tc.ga.population = p;
    }
    usage(tc.ga.validate().map_err(anyhow::Error::from))?;
    if tc.ga.generations == 0 {
        log::warn!("0 generations: the model keeps the random initial population's best trees");
    }
    let input = input.unwrap_or_else(|| ctx.out.clone());
    let samples = read_extract(&input).with_context(|| format!("reading the extract in {}", input.display()))?;
    let out = train(&samples, &tc)?;
    write_training(&ctx.out, &out)?;
    for s in &out.report.sensors {
        match s.test_accuracy {
            Some(a) => println!("{}: held-out accuracy {:.3} on {} rows", s.sensor, a, s.test_samples),
            None => println!("{}: no held-out rows", s.sensor),
        }
    }
    Ok(())
}

fn run_monitor(
    ctx: &Ctx,
    d: &DatasetArgs,
    model: Option<PathBuf>,
    conditions: Option<String>,
    sensors: Option<String>,
) -> Result<(), Failure> {
    let mc = &ctx.cfg.monitor;
    let tags = conditions.map(|c| split_list(&c)).unwrap_or_else(|| mc.conditions.clone());
    let keep: Option<Vec<String>> = if tags.iter().any(|t| t == "all") {
        None
    } else {
        Some(usage(parse_conditions(&tags))?.iter().map(|w| w.tag()).collect())
    };
    let sensors = usage(parse_sensors(&sensors.map(|s| split_list(&s)).unwrap_or_else(|| mc.sensors.clone())))?;
    let path = model.or_else(|| mc.model.clone()).unwrap_or_else(|| ctx.out.join("model.json"));
    let model = MonitorModel::load(&path)?;
    let root = ctx.dataset(&d.dataset);
    let dir = ctx.out.join("monitor");
    let s = monitor_dataset(&root, &model, &ctx.presets, &ctx.cfg.extract.chain, keep.as_deref(), &sensors, &dir)?;
    println!("wrote {} records and {} grid maps to {}", s.records, s.grid_maps, dir.display());
    check_missing(ctx, d, &s.missing)
}

fn run_report(ctx: &Ctx, d: &DatasetArgs) -> Result<(), Failure> {
    let root = ctx.dataset(&d.dataset);
    let manifest = DatasetManifest::load(&root)?;
    let a = analyze_dataset(&root, &manifest, &manifest.sensors, &ctx.presets, &ctx.cfg.extract.chain, false)?;
    let r = report(&a.frames);
    let dir = ctx.out.join("report");
    write_report(&dir, &r)?;
    println!("wrote {} curve points to {}", r.curves.len(), dir.display());
    check_missing(ctx, d, &a.missing)
}
