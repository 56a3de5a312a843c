use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::corrector::{CorrectorCache, CACHE_DIR_ENV};
use crate::error::{Error, Result};
use crate::leapfrog::{leapfrog_run, MethodSpec, RunOptions, Variant};
use crate::mesh::build_mesh;

use super::config::ExperimentConfig;
use super::norm::error_norm_with_basis;
use super::problem::{prepare_method, setup_problem, ProblemSetup};
use super::reference::{reference_solution, Reference};

/// One line of the error table. Failed runs keep their row with `error = None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub variant: Variant,
    pub coarse_level: u32,
    pub mesh_size: f64,
    /// Localization depth; `None` for standard FEM.
    pub layers: Option<usize>,
    pub dt: f64,
    pub steps: usize,
    pub error: Option<f64>,
    /// `log₂(e_{2H} / e_H)` against the next coarser level of the same series.
    pub order: Option<f64>,
    pub seconds: f64,
    pub cache_hit: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceInfo {
    pub fine_level: u32,
    pub sample_dt: f64,
    pub fine_dt: f64,
    pub substeps: usize,
    pub samples: usize,
    pub seconds: f64,
    pub cache_hit: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorTable {
    pub config: ExperimentConfig,
    pub reference: ReferenceInfo,
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    /// Rows of one series, ordered from coarse to fine.
    pub fn series(&self, variant: Variant, layers: Option<usize>) -> Vec<&ErrorRow> {
        self.rows.iter().filter(|r| r.variant == variant && r.layers == layers).collect()
    }

    /// Least-squares slope of `log e` against `log H` over the successful rows of a series.
    pub fn fitted_order(&self, variant: Variant, layers: Option<usize>) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .series(variant, layers)
            .iter()
            .filter_map(|r| r.error.filter(|e| *e > 0.0).map(|e| (r.mesh_size.ln(), e.ln())))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failure.is_some()).count()
    }
}

/// Corrector cache chosen by `LODWAVE_CACHE_DIR`, then the config.
pub fn study_cache(config: &ExperimentConfig) -> Option<CorrectorCache> {
    match std::env::var_os(CACHE_DIR_ENV) {
        Some(dir) if !dir.is_empty() => Some(CorrectorCache::new(PathBuf::from(dir))),
        _ => config.cache_dir.clone().map(CorrectorCache::new),
    }
}

#[derive(Debug, Clone, Copy)]
struct Task {
    variant: Variant,
    layers: Option<usize>,
    coarse_level: u32,
}

fn tasks(config: &ExperimentConfig) -> Vec<Task> {
    let mut levels = config.coarse_levels.clone();
    levels.sort_unstable();
    let mut variants = config.variants.clone();
    variants.sort_unstable();
    variants.dedup();
    let mut out = Vec::new();
    for variant in variants {
        let layer_set: Vec<Option<usize>> = if variant.needs_correctors() {
            config.ell.values().into_iter().map(Some).collect()
        } else {
            vec![None]
        };
        for layers in layer_set {
            for &coarse_level in &levels {
                out.push(Task {
                    variant,
                    layers,
                    coarse_level,
                });
            }
        }
    }
    out
}

fn run_task(
    setup: &ProblemSetup,
    reference: &Reference,
    config: &ExperimentConfig,
    cache: Option<&CorrectorCache>,
    task: Task,
) -> ErrorRow {
    let start = Instant::now();
    let mesh_size = build_mesh(task.coarse_level).map_or(f64::NAN, |m| m.mesh_size());
    let mut row = ErrorRow {
        variant: task.variant,
        coarse_level: task.coarse_level,
        mesh_size,
        layers: task.layers,
        dt: f64::NAN,
        steps: 0,
        error: None,
        order: None,
        seconds: 0.0,
        cache_hit: false,
        failure: None,
    };
    let result = (|| -> Result<(f64, usize, f64, bool)> {
        let method = MethodSpec {
            variant: task.variant,
            lumped_mass: config.lumped_mass,
        };
        let prepared = prepare_method(setup, task.coarse_level, task.layers.unwrap_or(0), method, cache)?;
        let grid = prepared.default_grid(config.final_time)?;
        let (traj, _) = leapfrog_run(&prepared.system, &prepared.u0, &prepared.v0, &prepared.load, &grid, &RunOptions::default())?;
        let err = error_norm_with_basis(&traj, Some(prepared.basis()), &reference.trajectory, &grid, &setup.fine)?;
        Ok((grid.dt, grid.n_steps, err, prepared.cache_hit))
    })();
    match result {
        Ok((dt, steps, err, hit)) => {
            row.dt = dt;
            row.steps = steps;
            row.error = Some(err);
            row.cache_hit = hit;
        }
        Err(e) => row.failure = Some(format!("{}: {e}", e.kind())),
    }
    row.seconds = start.elapsed().as_secs_f64();
    row
}

fn fill_orders(rows: &mut [ErrorRow]) {
    for k in 1..rows.len() {
        let (prev, cur) = (&rows[k - 1], &rows[k]);
        if prev.variant != cur.variant || prev.layers != cur.layers {
            continue;
        }
        if let (Some(a), Some(b)) = (prev.error, cur.error) {
            if a > 0.0 && b > 0.0 {
                rows[k].order = Some((a / b).ln() / (prev.mesh_size / cur.mesh_size).ln());
            }
        }
    }
}

/// Runs every `(variant, ℓ, H)` combination of the config against one fine
/// reference solution. Individual failures are recorded in their row.
pub fn run_convergence_study(config: &ExperimentConfig) -> Result<ErrorTable> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    pool.install(|| {
        let mut setup = setup_problem(&config.example, config.fine_level)?;
        if config.zero_source {
            setup = setup.with_zero_source();
        }
        let cache = study_cache(config);
        let dts: Vec<f64> = config
            .coarse_levels
            .iter()
            .map(|&l| setup.coarse_timestep(l))
            .collect::<Result<_>>()?;
        let start = Instant::now();
        let reference = reference_solution(&setup, &dts, config.final_time, cache.as_ref().map(|c| c.dir()))?;
        let reference_info = ReferenceInfo {
            fine_level: config.fine_level,
            sample_dt: reference.sample_dt,
            fine_dt: reference.fine_dt,
            substeps: reference.substeps,
            samples: reference.trajectory.len(),
            seconds: start.elapsed().as_secs_f64(),
            cache_hit: reference.cache_hit,
        };
        let mut rows: Vec<ErrorRow> = tasks(config)
            .into_par_iter()
            .map(|t| run_task(&setup, &reference, config, cache.as_ref(), t))
            .collect();
        fill_orders(&mut rows);
        Ok(ErrorTable {
            config: config.clone(),
            reference: reference_info,
            rows,
        })
    })
}
