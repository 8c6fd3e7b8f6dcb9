use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use poms::archive::load_archive;
use poms::envs::Env;
use poms::runner::{
    default_workers, emit_plot, refresh_summary, run_dir, run_suite, run_with_workers, write_run,
    Algorithm, ExperimentConfig, Preset,
};
use poms::{Error, Result};

#[derive(Parser)]
#[command(
    name = "poms",
    version,
    about = "Quality-diversity policy search with learned parameter manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seed of an experiment.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every configured seed and refresh the aggregate curves.
    Suite {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Comma-separated seeds, overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Comma-separated algorithms, each run from its own preset with the same overrides.
        #[arg(long, value_delimiter = ',')]
        algorithms: Option<Vec<Algorithm>>,
    },
    /// Plot coverage curves from metrics files.
    Plot {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Check a config file without running anything.
    ValidateConfig { config: PathBuf },
    /// Summarise a saved archive.
    InspectArchive {
        archive: PathBuf,
        /// Also export the elites as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment config; without it a preset is used.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    preset: Preset,
    #[arg(long)]
    env: Option<Env>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    loops: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    init_samples: Option<usize>,
    #[arg(long)]
    sigma_theta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "POMS_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    dump_trajectories: bool,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<(ExperimentConfig, usize)> {
        self.resolve_for(self.algorithm)
    }

    /// Presets are built per algorithm, since step sizes differ between them.
    fn resolve_for(&self, algorithm: Option<Algorithm>) -> Result<(ExperimentConfig, usize)> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => {
                let env = self
                    .env
                    .ok_or_else(|| Error::Config("either --config or --env is required".into()))?;
                ExperimentConfig::preset(self.preset, env, algorithm.unwrap_or(Algorithm::Poms))
            }
        };
        if let Some(e) = self.env {
            cfg.env = e;
        }
        if let Some(a) = algorithm {
            cfg.algorithm = a;
        }
        macro_rules! set {
            ($field:ident, $target:ident) => {
                if let Some(v) = self.$field {
                    cfg.$target = v;
                }
            };
        }
        set!(loops, loops);
        set!(iterations, iterations_per_loop);
        set!(budget, batch_budget);
        set!(init_samples, init_samples);
        set!(sigma_theta, sigma_theta);
        if let Some(o) = self
            .out
            .clone()
            .or_else(|| std::env::var_os("POMS_OUT_DIR").map(PathBuf::from))
        {
            cfg.output_dir = o;
        }
        cfg.dump_trajectories |= self.dump_trajectories;
        cfg.validate()?;
        Ok((cfg, self.workers.unwrap_or_else(default_workers)))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { exp, seed } => {
            let (cfg, workers) = exp.resolve()?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let out = run_with_workers(&cfg, seed, workers)?;
            let dir = run_dir(&cfg.output_dir, cfg.algorithm, seed);
            let m = write_run(&out, &dir)?;
            println!(
                "{} {} seed {seed}: coverage {:.4} after {} rollouts -> {}",
                cfg.algorithm,
                cfg.env,
                m.final_coverage,
                m.total_rollouts,
                dir.display()
            );
        }
        Command::Suite {
            exp,
            seeds,
            algorithms,
        } => {
            let (cfg, workers) = exp.resolve()?;
            let seeds = seeds.unwrap_or_else(|| cfg.seeds.clone());
            for alg in algorithms.unwrap_or_else(|| vec![cfg.algorithm]) {
                let (c, _) = exp.resolve_for(Some(alg))?;
                let (runs, _) = run_suite(&c, &seeds, workers)?;
                for r in runs {
                    println!(
                        "{alg} seed {}: coverage {:.4}",
                        r.seed, r.manifest.final_coverage
                    );
                }
            }
            refresh_summary(&cfg.output_dir)?;
            println!("aggregate written to {}", cfg.output_dir.display());
        }
        Command::Plot { metrics, out } => {
            emit_plot(&metrics, &out)?;
            println!("{}", out.display());
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!(
                "{}: {} on {} ({} cells), {} rollouts per seed, {} seeds",
                config.display(),
                cfg.algorithm,
                cfg.env,
                cfg.env.bd_spec().total_cells(),
                cfg.total_rollouts(),
                cfg.seeds.len()
            );
        }
        Command::InspectArchive { archive, csv } => inspect(&archive, csv.as_deref())?,
    }
    Ok(())
}

fn inspect(path: &Path, csv: Option<&Path>) -> Result<()> {
    let a = load_archive(path)?;
    a.verify()?;
    println!("{}", path.display());
    println!("  grid {:?} = {} cells", a.spec().sizes(), a.total_cells());
    println!("  elites {} (coverage {:.4})", a.len(), a.coverage());
    if let Some(e) = a.elites().next() {
        println!("  policy {}", e.params.spec());
    }
    let mut per_loop = std::collections::BTreeMap::new();
    for e in a.elites() {
        *per_loop.entry(e.loop_index).or_insert(0usize) += 1;
    }
    for (l, n) in per_loop {
        println!("  loop {l}: {n} elites");
    }
    if let Some(c) = csv {
        poms::archive::export_csv(c, &a)?;
        println!("  exported {}", c.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
