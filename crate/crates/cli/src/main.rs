use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphsynth::aligner::AlignMode;
use graphsynth::featgen::Backend;
use graphsynth::pipeline::{self, GenerateOptions, ModelBundle, PipelineConfig};
use graphsynth::{Error, Result};

#[derive(Parser)]
#[command(name = "graphsynth", version, about = "Fit attributed graph models and generate scaled synthetic replicas")]
struct Cli {
    /// Worker threads; overrides the environment and the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model bundle from a CSV described by a config file.
    Fit {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset from a bundle.
    Generate {
        #[arg(long)]
        bundle: PathBuf,
        /// Edge-count multiplier; node counts grow by its square root.
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Aligner mode, defaults to the one the bundle was fitted with.
        #[arg(long, value_enum)]
        aligner: Option<AlignArg>,
        /// Attach feature rows in sampling order instead of aligning them.
        #[arg(long)]
        no_align: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a synthetic dataset against a real dataset or a bundle.
    Evaluate {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synthetic: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a baseline dataset matched to the real node and edge counts.
    Baseline {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, default_value_t = BaselineKind::Er)]
        kind: BaselineKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the real graph described by a config as a dataset.
    Ingest {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a small synthetic transaction table and a matching config.
    Toy {
        #[arg(long, default_value_t = 60_000)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time generation without alignment over a range of scale factors.
    BenchScaling {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 4.0, 16.0, 64.0])]
        scales: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Noise strength in [0, 1].
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, value_enum)]
    aligner: Option<AlignArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mixture,
    Independent,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlignArg {
    Ranked,
    Exhaustive,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Er,
}

impl From<AlignArg> for AlignMode {
    fn from(a: AlignArg) -> Self {
        match a {
            AlignArg::Ranked => AlignMode::Ranked,
            AlignArg::Exhaustive => AlignMode::Exhaustive,
            AlignArg::Random => AlignMode::Random,
        }
    }
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.noise {
            cfg.noise = n;
        }
        if let Some(b) = self.backend {
            cfg.feature_backend = match b {
                BackendArg::Mixture => Backend::Mixture,
                BackendArg::Independent => Backend::Independent,
            };
        }
        if let Some(a) = self.aligner {
            cfg.aligner = a.into();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn workers(flag: Option<usize>, configured: Option<usize>) -> Result<usize> {
    match flag {
        Some(0) => Err(Error::Config("--workers must be at least 1".into())),
        Some(n) => Ok(n),
        None => pipeline::resolve_workers(configured),
    }
}

fn with_pool<T: Send>(n: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
    pool.install(f)
}

/// Writes to stdout; a closed pipe is not an error.
fn say(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    say(&serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { config, out } => {
            let cfg = config.load()?;
            with_pool(workers(cli.workers, cfg.workers)?, || {
                let (bundle, timings) = pipeline::fit(&cfg)?;
                bundle.save(&out, Some(&timings))?;
                log::info!("bundle written to {} in {:.2}s", out.display(), timings.total());
                print_json(&bundle.manifest.fit)
            })
        }
        Command::Generate { bundle, scale, seed, aligner, no_align, out } => {
            let b = ModelBundle::load(&bundle)?;
            let opts = GenerateOptions {
                scale: scale.unwrap_or(b.manifest.config.scale),
                seed: seed.unwrap_or(b.manifest.config.seed),
                align: !no_align,
                mode: aligner.map(Into::into),
            };
            with_pool(workers(cli.workers, b.manifest.config.workers)?, || {
                let (g, timings) = pipeline::generate(&b, &opts)?;
                let manifest = pipeline::manifest_for(&g, "generate", Some(opts.seed), Some(opts.scale));
                pipeline::write_dataset(&out, &g, &manifest, &timings)?;
                log::info!("{} edges written to {} in {:.2}s", g.total_edges(), out.display(), timings.total());
                print_json(&manifest.edge_types)
            })
        }
        Command::Evaluate { real, synthetic, out } => with_pool(workers(cli.workers, None)?, || {
            let ev = pipeline::evaluate(&real, &synthetic)?;
            graphsynth::metrics::write_report(&out, &ev.report, &ev.real, &ev.synthetic)?;
            say(&format!(
                "degree_dist_score {:.6}\nfeature_corr_score {:.6}\ndegree_feature_js {:.6}",
                ev.report.degree_dist_score, ev.report.feature_corr_score, ev.report.degree_feature_js
            ));
            Ok(())
        }),
        Command::Baseline { config, kind: BaselineKind::Er, out } => {
            let cfg = config.load()?;
            with_pool(workers(cli.workers, cfg.workers)?, || {
                let (g, timings) = pipeline::baseline(&cfg)?;
                let manifest = pipeline::manifest_for(&g, "baseline-er", Some(cfg.seed), Some(1.0));
                pipeline::write_dataset(&out, &g, &manifest, &timings)?;
                print_json(&manifest.edge_types)
            })
        }
        Command::Ingest { config, out } => {
            let cfg = config.load()?;
            with_pool(workers(cli.workers, cfg.workers)?, || {
                let mut timings = pipeline::Timings::default();
                let g = timings.time("ingest", || pipeline::ingest(&cfg))?;
                let manifest = pipeline::manifest_for(&g, "ingest", None, None);
                pipeline::write_dataset(&out, &g, &manifest, &timings)?;
                print_json(&manifest.edge_types)
            })
        }
        Command::Toy { rows, seed, out } => {
            let path = pipeline::toy::write_toy(&out, rows, seed)?;
            say(&path.display().to_string());
            Ok(())
        }
        Command::BenchScaling { bundle, scales, seed, out } => {
            let b = ModelBundle::load(&bundle)?;
            with_pool(workers(cli.workers, b.manifest.config.workers)?, || {
                let scratch = scratch_dir(&out);
                let points = pipeline::bench_scaling(&b, &scales, seed, &scratch);
                let _ = std::fs::remove_dir_all(&scratch);
                let points = points?;
                pipeline::write_scaling_csv(&out, &points)?;
                for p in &points {
                    say(&format!("scale {} edges {} {:.0} edges/s", p.scale, p.edges, p.edges_per_second));
                }
                Ok(())
            })
        }
    }
}

/// Scratch space for benchmark outputs, next to the CSV.
fn scratch_dir(out: &Path) -> PathBuf {
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    parent.join(format!(".bench-scratch-{}", std::process::id()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
