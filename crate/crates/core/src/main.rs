use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use causal_foundry::config::{PipelineConfig, Resolved};
use causal_foundry::fixture::write_furnace_fixture;
use causal_foundry::pipeline::{
    cmd_compare, cmd_discover, cmd_pipeline, cmd_sample, cmd_segment, DiscoverSummary, SampleSummary,
};
use causal_foundry::synth::{linear_suite, nonlinear_suite, read_suite, run_benchmark, ScoreOptions, SCMSpec};
use causal_foundry::{io, Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "causal-foundry", version, about = "Causal discovery pipeline for cyclic process data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Split the trace into cycles and attach cluster labels.
    Segment,
    /// Screen outliers and draw a validated subset per cluster.
    Sample,
    /// Run PCMCI+ with every CI test plus the hybrid on each cluster.
    Discover,
    /// Compare the per-cluster graphs.
    Compare,
    /// Run segment, sample, discover and compare.
    Pipeline,
    /// Score every method on synthetic models with known structure.
    Bench(BenchArgs),
    /// Write the synthetic furnace trace, labels and a matching config.
    Fixture(FixtureArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteKind {
    Linear,
    Nonlinear,
}

#[derive(Args)]
struct BenchArgs {
    /// Suite file (JSON list of SCM specs).
    #[arg(long, conflicts_with = "generate")]
    suite: Option<PathBuf>,
    /// Generate a suite instead of reading one.
    #[arg(long)]
    generate: Option<SuiteKind>,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 5)]
    n_vars: usize,
    #[arg(long, default_value_t = 2000)]
    length: usize,
    /// Score autocorrelation self-links too.
    #[arg(long)]
    include_self_links: bool,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    clusters: usize,
    #[arg(long, default_value_t = 10)]
    cycles_per_cluster: usize,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn resolve(cli: &Cli) -> Result<Resolved> {
    let mut r = load_config(cli)?.resolve()?;
    if let Some(out) = &cli.out {
        r.output = out.clone();
    }
    Ok(r)
}

fn warn_sample(s: &SampleSummary) {
    for c in &s.failed_validation {
        eprintln!("warning: cluster {c}: no draw met the EMD/MMD thresholds; using the best draw");
    }
}

fn warn_discover(s: &DiscoverSummary) {
    for c in s.clusters.iter().filter(|c| c.status != "ok") {
        eprintln!(
            "warning: cluster {} skipped: {}",
            c.cluster,
            c.reason.as_deref().unwrap_or("unknown reason")
        );
    }
}

fn bench(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let cfg = load_config(cli)?.resolve()?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.join("bench"));
    let suite: Vec<SCMSpec> = match (&args.suite, args.generate) {
        (Some(path), _) => read_suite(path)?,
        (None, Some(kind)) => {
            let seed = cfg.config.seed;
            let s = match kind {
                SuiteKind::Linear => linear_suite(args.count, args.n_vars, args.length, seed),
                SuiteKind::Nonlinear => nonlinear_suite(args.count, args.n_vars, args.length, seed),
            };
            std::fs::create_dir_all(&out).map_err(|e| Error::Config(format!("{}: {e}", out.display())))?;
            io::write_json(&out.join("suite.json"), &s)?;
            s
        }
        (None, None) => return Err(Error::Config("bench needs --suite or --generate".into())),
    };
    let opts = ScoreOptions {
        include_self_links: args.include_self_links,
    };
    let report = run_benchmark(&suite, &cfg.config.discovery, opts)?;
    report.write(&out)?;
    print!("{}", report.to_csv());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    match &cli.command {
        Command::Segment => {
            let s = cmd_segment(&resolve(cli)?)?;
            println!("{} cycles ({} discarded), clustering: {}", s.cycles, s.discarded, s.clustering);
        }
        Command::Sample => {
            let s = cmd_sample(&resolve(cli)?)?;
            warn_sample(&s);
            println!("sampled {} clusters", s.clusters.len());
        }
        Command::Discover => {
            let s = cmd_discover(&resolve(cli)?)?;
            warn_discover(&s);
            let ok = s.clusters.iter().filter(|c| c.status == "ok").count();
            println!("graphs for {ok} of {} clusters", s.clusters.len());
        }
        Command::Compare => {
            let s = cmd_compare(&resolve(cli)?)?;
            println!("{} pairs across {} clusters ({})", s.pairs, s.clusters.len(), s.method);
        }
        Command::Pipeline => {
            let s = cmd_pipeline(&resolve(cli)?)?;
            warn_sample(&s.sample);
            warn_discover(&s.discover);
            println!(
                "{} cycles, {} clusters, {} causal pairs",
                s.segment.cycles,
                s.compare.clusters.len(),
                s.compare.pairs
            );
        }
        Command::Bench(args) => bench(cli, args)?,
        Command::Fixture(args) => {
            let seed = cli.seed.unwrap_or(1);
            let fx = write_furnace_fixture(&args.dir, args.clusters, args.cycles_per_cluster, seed)?;
            println!("wrote {} rows, {} cycles to {}", fx.data.n_rows(), fx.cycle_rows.len(), args.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Internal => 4,
            })
        }
    }
}
