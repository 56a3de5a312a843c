use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leapfrog::Variant;

/// Which experiment to set up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExampleSpec {
    /// Layered coefficient, Dirichlet on `x₁ = 0`, `f = sin(4πx₁)(1−t)`, `u₀` from an elliptic solve.
    Example2,
    /// Random checkerboard coefficient, Dirichlet on all of ∂Ω, `f = 1`, zero initial data.
    SyntheticEx1 {
        seed: u64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_beta")]
        beta: f64,
    },
}

fn default_epsilon() -> f64 {
    1.0 / 128.0
}

fn default_alpha() -> f64 {
    0.04
}

fn default_beta() -> f64 {
    1.96
}

impl ExampleSpec {
    pub fn synthetic(seed: u64) -> Self {
        ExampleSpec::SyntheticEx1 {
            seed,
            epsilon: default_epsilon(),
            alpha: default_alpha(),
            beta: default_beta(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExampleSpec::Example2 => "example2",
            ExampleSpec::SyntheticEx1 { .. } => "synthetic_ex1",
        }
    }

    /// Coarsest fine level that resolves the coefficient.
    pub fn min_fine_level(&self) -> u32 {
        match self {
            ExampleSpec::Example2 => 6,
            ExampleSpec::SyntheticEx1 { epsilon, .. } => (-epsilon.log2()).round().max(0.0) as u32,
        }
    }
}

/// One or several localization depths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Layers {
    One(usize),
    Many(Vec<usize>),
}

impl Layers {
    pub fn values(&self) -> Vec<usize> {
        match self {
            Layers::One(l) => vec![*l],
            Layers::Many(v) => v.clone(),
        }
    }
}

fn default_final_time() -> f64 {
    1.0
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::Lod]
}

fn default_jobs() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("study_output")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub example: ExampleSpec,
    pub coarse_levels: Vec<u32>,
    pub fine_level: u32,
    pub ell: Layers,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads for study rows and corrector builds.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Corrector cache directory; `LODWAVE_CACHE_DIR` takes precedence, none disables caching.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub lumped_mass: bool,
    /// Replace the source term by zero.
    #[serde(default)]
    pub zero_source: bool,
}

impl ExperimentConfig {
    pub fn new(example: ExampleSpec, coarse_levels: Vec<u32>, fine_level: u32, ell: Vec<usize>) -> Self {
        Self {
            example,
            coarse_levels,
            fine_level,
            ell: Layers::Many(ell),
            final_time: default_final_time(),
            variants: default_variants(),
            output_dir: default_output_dir(),
            jobs: default_jobs(),
            cache_dir: None,
            lumped_mass: false,
            zero_source: false,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.coarse_levels.is_empty() {
            return bad("coarse_levels is empty".into());
        }
        let max_coarse = *self.coarse_levels.iter().max().unwrap();
        if self.fine_level <= max_coarse {
            return bad(format!("fine_level {} must exceed every coarse level (max {max_coarse})", self.fine_level));
        }
        if self.fine_level < self.example.min_fine_level() {
            return bad(format!(
                "fine_level {} does not resolve the {} coefficient (needs ≥ {})",
                self.fine_level,
                self.example.name(),
                self.example.min_fine_level()
            ));
        }
        if self.fine_level > crate::mesh::MAX_LEVEL {
            return Err(Error::Capacity(format!("fine_level {} exceeds {}", self.fine_level, crate::mesh::MAX_LEVEL)));
        }
        if self.ell.values().is_empty() {
            return bad("ell is empty".into());
        }
        if self.variants.is_empty() {
            return bad("no variants selected".into());
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return bad(format!("final_time {} must be positive", self.final_time));
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        if !self.coarse_levels.iter().all(|l| seen.insert(*l)) {
            return bad("coarse_levels contains duplicates".into());
        }
        Ok(())
    }
}
