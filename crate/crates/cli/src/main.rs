use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use lodwave::corrector::{build_corrector_set_with_stats, cache_key, measure_localization_decay, store_cached, CorrectorCache};
use lodwave::study::problem::{example_boundary, example_field};
use lodwave::study::{
    run_convergence_study, run_selftest, run_single, study_cache, write_study_outputs, ExampleSpec, ExperimentConfig, RunRequest,
};
use lodwave::{build_ih, build_mesh, Error, FineDiscretization, MethodSpec, Result, Variant};

#[derive(Parser)]
#[command(name = "lodwave", version, about = "Multiscale wave propagation with localized correctors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExampleArg {
    Example2,
    SyntheticEx1,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lod,
    LodSimplified,
    StandardFem,
}

impl From<MethodArg> for Variant {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lod => Variant::Lod,
            MethodArg::LodSimplified => Variant::LodSimplified,
            MethodArg::StandardFem => Variant::StandardFem,
        }
    }
}

#[derive(clap::Args)]
struct ExampleOpts {
    #[arg(long, value_enum, default_value = "example2")]
    example: ExampleArg,
    /// Seed of the synthetic checkerboard coefficient.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl ExampleOpts {
    fn spec(&self) -> ExampleSpec {
        match self.example {
            ExampleArg::Example2 => ExampleSpec::Example2,
            ExampleArg::SyntheticEx1 => ExampleSpec::synthetic(self.seed),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Full convergence study from a JSON config.
    Study {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's worker count.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// One coarse simulation; writes a nodal trajectory and the energy trace.
    Run {
        #[command(flatten)]
        example: ExampleOpts,
        #[arg(long)]
        coarse_level: u32,
        #[arg(long)]
        fine_level: u32,
        #[arg(long, default_value_t = 2)]
        ell: usize,
        #[arg(long, value_enum, default_value = "lod")]
        method: MethodArg,
        #[arg(long = "T", default_value_t = 1.0)]
        final_time: f64,
        #[arg(long, default_value = "run_output")]
        out: PathBuf,
        /// Write every k-th state.
        #[arg(long, default_value_t = 1)]
        every: usize,
        #[arg(long)]
        zero_source: bool,
        #[arg(long)]
        lumped_mass: bool,
    },
    /// Offline stage only: build (and cache) the element correctors.
    Correctors {
        #[command(flatten)]
        example: ExampleOpts,
        #[arg(long)]
        coarse_level: u32,
        #[arg(long)]
        fine_level: u32,
        #[arg(long, default_value_t = 2)]
        ell: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Localization error of the correctors for increasing patch size.
    Decay {
        #[command(flatten)]
        example: ExampleOpts,
        #[arg(long)]
        coarse_level: u32,
        #[arg(long)]
        fine_level: u32,
        #[arg(long, default_value_t = 4)]
        ell_max: usize,
    },
    /// Quick property checks.
    Selftest,
}

fn fine_for(example: &ExampleSpec, fine_level: u32) -> Result<FineDiscretization> {
    FineDiscretization::new(&build_mesh(fine_level)?, example_boundary(example), &example_field(example)?)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(Error::Argument("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Study { config, out, jobs } => {
            let mut cfg = ExperimentConfig::from_json_file(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(jobs) = jobs {
                cfg.jobs = jobs;
            }
            let table = run_convergence_study(&cfg)?;
            let files = write_study_outputs(&table, &cfg.output_dir)?;
            for r in &table.rows {
                let ell = r.layers.map_or("-".to_string(), |l| l.to_string());
                match (r.error, &r.failure) {
                    (Some(e), _) => println!("{:<15} H={:.5} ell={ell:<2} error={e:.6e} order={}", r.variant.name(), r.mesh_size, r.order.map_or("-".into(), |o| format!("{o:.3}"))),
                    (None, f) => println!("{:<15} H={:.5} ell={ell:<2} FAILED {}", r.variant.name(), r.mesh_size, f.as_deref().unwrap_or("")),
                }
            }
            println!("{}", json!({ "files": files, "failures": table.failures() }));
            Ok(true)
        }
        Command::Run {
            example,
            coarse_level,
            fine_level,
            ell,
            method,
            final_time,
            out,
            every,
            zero_source,
            lumped_mass,
        } => {
            let req = RunRequest {
                example: example.spec(),
                coarse_level,
                fine_level,
                layers: ell,
                method: MethodSpec {
                    variant: method.into(),
                    lumped_mass,
                },
                final_time,
                stride: every,
                output_dir: out,
                zero_source,
            };
            let cache = std::env::var_os(lodwave::corrector::CACHE_DIR_ENV).map(|d| CorrectorCache::new(PathBuf::from(d)));
            let summary = run_single(&req, cache.as_ref())?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(true)
        }
        Command::Correctors {
            example,
            coarse_level,
            fine_level,
            ell,
            jobs,
            cache_dir,
        } => {
            let spec = example.spec();
            let fine = fine_for(&spec, fine_level)?;
            let op = build_ih(&build_mesh(coarse_level)?, &fine.mesh, fine.bc)?;
            let start = std::time::Instant::now();
            let (set, stats) = pool(jobs)?.install(|| build_corrector_set_with_stats(&op, &fine, ell))?;
            let seconds = start.elapsed().as_secs_f64();
            let mut cfg = ExperimentConfig::new(spec, vec![coarse_level], fine_level, vec![ell]);
            cfg.cache_dir = cache_dir;
            let stored = match study_cache(&cfg) {
                Some(cache) => Some(store_cached(&cache, &cache_key(&op, &fine, ell), &set, fine.n_dofs())?),
                None => None,
            };
            println!("{}", json!({ "stats": stats, "seconds": seconds, "jobs": jobs, "cache_file": stored }));
            Ok(true)
        }
        Command::Decay {
            example,
            coarse_level,
            fine_level,
            ell_max,
        } => {
            let spec = example.spec();
            let fine = fine_for(&spec, fine_level)?;
            let op = build_ih(&build_mesh(coarse_level)?, &fine.mesh, fine.bc)?;
            let rows = measure_localization_decay(&op, &fine, ell_max)?;
            println!("ell,residual");
            for r in &rows {
                println!("{},{:e}", r.layers, r.residual);
            }
            Ok(true)
        }
        Command::Selftest => {
            let checks = run_selftest()?;
            for c in &checks {
                println!("{} {:<16} {:.3e} (tolerance {:.0e})", if c.passed { "ok  " } else { "FAIL" }, c.name, c.value, c.tolerance);
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}
