//! Command-line front end: generate synthetic sources, run scenarios and
//! grid sweeps, and aggregate run CSVs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use incremad_core::data::{load_dataset, save_dataset, synth_sources};
use incremad_core::report::{self, write_comparison, write_grid, write_runs_csv, Manifest};
use incremad_core::runner::{compare_strategies, grid_sweep, rep_seeds, run_scenario};
use incremad_core::stream::{candidate_sizes, enumerate_orders};
use incremad_core::{
    MetricProfile, RunConfig, SizeSchedule, SourceSet, StrategyConfig, StrategyKind,
    SynthSourceSpec,
};

#[derive(Parser)]
#[command(name = "incremad", version, about = "Continual-learning experiments over chunked feature streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic source datasets and a held-out test set.
    Synth(SynthArgs),
    /// Run one strategy (and its Joint reference) over orders and seeds.
    Run(RunArgs),
    /// Sweep LwF over chunk sizes and λ values.
    Grid(GridArgs),
    /// Aggregate a runs CSV into a summary and, for grids, matrices.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    sources: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 250)]
    samples_per_class: usize,
    #[arg(long, default_value_t = 250)]
    test_samples_per_class: usize,
    /// Norm of each global class mean.
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    /// Norm of each per-source class offset.
    #[arg(long, default_value_t = 2.0)]
    shift: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Options shared by `run` and `grid`.
#[derive(Args)]
struct Common {
    /// Directory holding source_<i>.clf files and test.clf.
    #[arg(long)]
    data: PathBuf,
    /// `all` or a permutation such as 2,0,1,3.
    #[arg(long, default_value = "all")]
    orders: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_profile, default_value = "mad")]
    profile: MetricProfile,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Hidden widths, comma separated; empty for a linear model.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_strategy, default_value = "naive")]
    strategy: StrategyKind,
    /// Weight of the strategy: LwF λ, EWC λ or SI c.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value = "zipf-small")]
    schedule: String,
    #[arg(long, default_value_t = 1)]
    reps: usize,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    common: Common,
    /// Chunk sizes, comma separated, or `all` for 50..500 step 50.
    #[arg(long, default_value = "all")]
    sizes: String,
    /// λ values, comma separated; defaults to the profile's grid.
    #[arg(long = "lambda")]
    lambdas: Option<String>,
    #[arg(long, default_value_t = incremad_core::runner::DEFAULT_SEEDS_PER_CELL)]
    reps: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// runs.csv written by `run` or `grid`.
    #[arg(long)]
    runs: PathBuf,
    #[arg(long, value_parser = parse_profile, default_value = "mad")]
    profile: MetricProfile,
    #[arg(long)]
    out: PathBuf,
}

fn parse_profile(s: &str) -> Result<MetricProfile, String> {
    s.parse().map_err(|e: incremad_core::Error| e.to_string())
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse().map_err(|e: incremad_core::Error| e.to_string())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|v| !v.trim().is_empty())
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("invalid {what} {v:?}"))
        })
        .collect()
}

fn source_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("source_{i}.clf"))
}

fn load_sources(dir: &Path) -> Result<SourceSet> {
    let mut sources = Vec::new();
    while source_path(dir, sources.len()).exists() {
        let p = source_path(dir, sources.len());
        sources.push(load_dataset(&p).with_context(|| format!("loading {}", p.display()))?);
    }
    if sources.is_empty() {
        bail!("no source_0.clf in {}", dir.display());
    }
    let p = dir.join("test.clf");
    let test = load_dataset(&p).with_context(|| format!("loading {}", p.display()))?;
    Ok(SourceSet { sources, test })
}

fn resolve_orders(spec: &str, n: usize) -> Result<Vec<Vec<usize>>> {
    if spec == "all" {
        return Ok(enumerate_orders(n)?);
    }
    Ok(vec![parse_list(spec, "source index")?])
}

impl Common {
    fn base(&self, strategy: StrategyConfig, schedule: SizeSchedule) -> Result<RunConfig> {
        let mut cfg = RunConfig::new(strategy, schedule, Vec::new(), self.seed);
        cfg.profile = self.profile;
        if let Some(h) = &self.hidden {
            cfg.hidden = parse_list(h, "hidden width")?;
        }
        if let Some(lr) = self.lr {
            cfg.learning_rate = lr;
        }
        if let Some(m) = self.momentum {
            cfg.momentum = m;
        }
        Ok(cfg)
    }

    fn strategy(&self, kind: StrategyKind) -> StrategyConfig {
        StrategyConfig {
            epochs_per_experience: self.epochs,
            batch_size: self.batch_size,
            ..StrategyConfig::new(kind)
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSourceSpec {
        n_sources: a.sources,
        n_classes: a.classes,
        dim: a.dim,
        samples_per_class: a.samples_per_class,
        test_samples_per_class: a.test_samples_per_class,
        class_separation: a.separation,
        shift: a.shift,
        noise: a.noise,
        seed: a.seed,
    };
    let set = synth_sources(&spec)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (i, ds) in set.sources.iter().enumerate() {
        save_dataset(ds, source_path(&a.out, i))?;
    }
    save_dataset(&set.test, a.out.join("test.clf"))?;
    let spec_path = a.out.join("spec.json");
    fs::write(&spec_path, serde_json_pretty(&spec)?)
        .with_context(|| format!("writing {}", spec_path.display()))?;
    println!("wrote {} sources and test.clf to {}", set.sources.len(), a.out.display());
    Ok(())
}

fn serde_json_pretty(spec: &SynthSourceSpec) -> Result<String> {
    let mut s = serde_json::to_string_pretty(spec)?;
    s.push('\n');
    Ok(s)
}

fn run(a: RunArgs) -> Result<()> {
    let c = &a.common;
    let data = load_sources(&c.data)?;
    let orders = resolve_orders(&c.orders, data.sources.len())?;
    let seeds = rep_seeds(c.seed, a.reps);
    let mut strategy = c.strategy(a.strategy);
    if let Some(l) = a.lambda {
        match a.strategy {
            StrategyKind::Lwf => strategy.lambda_lwf = l,
            StrategyKind::Ewc => strategy.lambda_ewc = l,
            StrategyKind::Si => strategy.si_c = l,
            k => bail!("--lambda has no meaning for {k}"),
        }
    }
    let base = c.base(strategy.clone(), SizeSchedule { mode: a.schedule.parse()?, ..SizeSchedule::zipf_small() })?;
    let manifest = Manifest::new("run", c.profile, base.fingerprint(), &seeds, &orders);

    if a.strategy == StrategyKind::Joint {
        let mut runs = Vec::new();
        for &seed in &seeds {
            for order in &orders {
                let mut cfg = base.clone();
                cfg.order = order.clone();
                cfg.seed = seed;
                runs.push(run_scenario(&cfg, &data)?);
            }
        }
        fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
        write_runs_csv(c.out.join("runs.csv"), &runs)?;
        let mut manifest = manifest;
        manifest.runs = runs.iter().map(|r| r.fingerprint.clone()).collect();
        manifest.files = vec!["runs.csv".into()];
        manifest.write(c.out.join("manifest.json"))?;
        let mean = runs.iter().map(|r| r.auc).sum::<f64>() / runs.len() as f64;
        println!("joint: {} runs, mean AUC {mean:.4}", runs.len());
        return Ok(());
    }

    let cmp = compare_strategies(&base, &[strategy], &orders, &seeds, &data, c.workers)?;
    write_comparison(&c.out, &cmp, manifest)?;
    println!("joint: mean AUC {:.4}", cmp.joint_mean_auc);
    for s in &cmp.strategies {
        println!(
            "{}: {} runs, mean AUC {:.4}, deviation vs Joint {:+.2}%",
            s.label, s.runs, s.mean_auc, s.mean_deviation_pct
        );
    }
    Ok(())
}

fn grid(a: GridArgs) -> Result<()> {
    let c = &a.common;
    let data = load_sources(&c.data)?;
    let orders = resolve_orders(&c.orders, data.sources.len())?;
    let seeds = rep_seeds(c.seed, a.reps);
    let sizes = if a.sizes == "all" { candidate_sizes() } else { parse_list(&a.sizes, "size")? };
    let lambdas = match &a.lambdas {
        Some(l) => parse_list(l, "λ")?,
        None => c.profile.default_lambdas(),
    };
    let base = c.base(c.strategy(StrategyKind::Lwf), SizeSchedule::fixed(sizes.first().copied().unwrap_or(50)))?;
    let spec = incremad_core::GridSpec { base, sizes, lambdas, orders, seeds };
    let result = grid_sweep(&spec, &data, c.workers)?;
    let manifest = Manifest::new("grid", c.profile, spec.base.fingerprint(), &spec.seeds, &spec.orders);
    write_grid(&c.out, &result, manifest)?;
    let failures: usize = result.cells.iter().flatten().map(|cell| cell.failures).sum();
    println!(
        "grid {}x{}: {} runs, {failures} failures, written to {}",
        result.sizes.len(),
        result.lambdas.len(),
        result.runs.len(),
        c.out.display()
    );
    for &s in &result.sizes {
        if let Some(l) = result.best_lambda(s) {
            println!("size {s}: best λ {l}");
        }
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let written = report::report(&a.runs, &a.out, a.profile)?;
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Grid(a) => grid(a),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
