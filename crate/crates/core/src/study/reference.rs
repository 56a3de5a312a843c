use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coefficient::content_hash;
use crate::error::{Error, Result};
use crate::leapfrog::{aligned_substep, leapfrog_run, RunOptions, SecondOrderSystem, TimeGrid, Trajectory};

use super::problem::ProblemSetup;

/// Fine-grid standard FEM solution stored at every multiple of `sample_dt`.
#[derive(Debug, Clone)]
pub struct Reference {
    pub trajectory: Trajectory,
    pub sample_dt: f64,
    pub fine_dt: f64,
    pub substeps: usize,
    pub cache_hit: bool,
}

/// Common sampling step of several coarse step sizes: the smallest one, which
/// must divide all others.
pub fn common_sample_step(coarse_dts: &[f64]) -> Result<f64> {
    let sample = coarse_dts.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(sample > 0.0 && sample.is_finite()) {
        return Err(Error::Argument("no coarse time steps given".into()));
    }
    for &dt in coarse_dts {
        let m = (dt / sample).round();
        if (m * sample - dt).abs() > 1e-12 * dt {
            return Err(Error::TimeGridMismatch(format!("coarse step {dt} is not a multiple of {sample}")));
        }
    }
    Ok(sample)
}

/// Runs standard FEM on the fine mesh with `Δt_fine = Δt_sample / ⌈Δt_sample / Δt_CFL⌉`
/// up to the latest coarse time point, so every coarse time lies on the fine grid.
pub fn reference_solution(
    setup: &ProblemSetup,
    coarse_dts: &[f64],
    final_time: f64,
    cache_dir: Option<&Path>,
) -> Result<Reference> {
    let sample_dt = common_sample_step(coarse_dts)?;
    let mut horizon: f64 = 0.0;
    for &dt in coarse_dts {
        horizon = horizon.max(TimeGrid::new(final_time, dt)?.horizon());
    }
    let system = SecondOrderSystem::fine(&setup.fine, false)?;
    let (fine_dt, substeps) = aligned_substep(sample_dt, system.cfl_limit());
    let n_samples = ((horizon / sample_dt) - 1e-9).ceil() as usize;
    let grid = TimeGrid::with_steps(fine_dt, substeps * n_samples)?;
    let key = reference_key(setup, &grid, substeps);
    if let Some(dir) = cache_dir {
        if let Some(trajectory) = load_reference(&reference_path(dir, &key), &key)? {
            return Ok(Reference {
                trajectory,
                sample_dt,
                fine_dt,
                substeps,
                cache_hit: true,
            });
        }
    }
    let opts = RunOptions {
        enforce_cfl: true,
        stride: substeps,
    };
    let (trajectory, _) = leapfrog_run(&system, &setup.u0, &setup.v0, &setup.load, &grid, &opts)?;
    if let Some(dir) = cache_dir {
        store_reference(dir, &key, &trajectory)?;
    }
    Ok(Reference {
        trajectory,
        sample_dt,
        fine_dt,
        substeps,
        cache_hit: false,
    })
}

/// Content address: coefficient, boundary, initial data, source and time grid.
fn reference_key(setup: &ProblemSetup, grid: &TimeGrid, substeps: usize) -> String {
    let times: Vec<f64> = (0..=grid.n_steps).map(|n| setup.load.time_factor(grid.time(n))).collect();
    let descr = serde_json::json!({
        "format": 1,
        "fine_level": setup.fine.mesh.level(),
        "boundary": setup.fine.bc.name(),
        "coefficient": content_hash(&setup.fine.coeff),
        "u0": content_hash(&setup.u0),
        "v0": content_hash(&setup.v0),
        "load": content_hash(setup.load.spatial()),
        "time_factors": content_hash(&times),
        "dt": grid.dt.to_bits(),
        "steps": grid.n_steps,
        "stride": substeps,
    });
    hex::encode(Sha256::digest(descr.to_string().as_bytes()))
}

fn reference_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("reference-{key}.bin"))
}

const MAGIC: &[u8; 8] = b"LODWREF1";

#[derive(Serialize, Deserialize)]
struct Header {
    key: String,
    dt: f64,
    stride: usize,
    n_states: usize,
    n_dofs: usize,
}

fn store_reference(dir: &Path, key: &str, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{key}.{}.tmp", std::process::id()));
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        w.write_all(MAGIC)?;
        let header = serde_json::to_vec(&Header {
            key: key.to_string(),
            dt: traj.dt,
            stride: traj.stride,
            n_states: traj.len(),
            n_dofs: traj.states.first().map_or(0, Vec::len),
        })?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for (t, u) in traj.times.iter().zip(&traj.states) {
            w.write_all(&t.to_le_bytes())?;
            for x in u {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
    }
    fs::rename(&tmp, reference_path(dir, key))?;
    Ok(())
}

fn load_reference(path: &Path, key: &str) -> Result<Option<Trajectory>> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let corrupt = |m: &str| Error::Cache(format!("{}: {m}", path.display()));
    let mut r = BufReader::new(file);
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    if &buf8 != MAGIC {
        return Err(corrupt("bad magic"));
    }
    r.read_exact(&mut buf8)?;
    let hlen = u64::from_le_bytes(buf8) as usize;
    if hlen > 1 << 20 {
        return Err(corrupt("oversized header"));
    }
    let mut hb = vec![0u8; hlen];
    r.read_exact(&mut hb)?;
    let h: Header = serde_json::from_slice(&hb)?;
    if h.key != key {
        return Err(corrupt("key mismatch"));
    }
    let mut read_f64 = |r: &mut BufReader<fs::File>| -> Result<f64> {
        r.read_exact(&mut buf8).map_err(|_| corrupt("truncated"))?;
        Ok(f64::from_le_bytes(buf8))
    };
    let mut times = Vec::with_capacity(h.n_states);
    let mut states = Vec::with_capacity(h.n_states);
    for _ in 0..h.n_states {
        times.push(read_f64(&mut r)?);
        states.push((0..h.n_dofs).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?);
    }
    Ok(Some(Trajectory {
        dt: h.dt,
        stride: h.stride,
        times,
        states,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::config::ExampleSpec;
    use crate::study::problem::setup_problem;

    #[test]
    fn sample_step_must_divide() {
        assert_eq!(common_sample_step(&[0.4, 0.1, 0.2]).unwrap(), 0.1);
        assert!(matches!(common_sample_step(&[0.1, 0.25]), Err(Error::TimeGridMismatch(_))));
    }

    #[test]
    fn zero_data_reference_is_zero_and_cached() {
        let setup = setup_problem(&ExampleSpec::synthetic(2), 7).unwrap().with_zero_source();
        let dts = [setup.coarse_timestep(1).unwrap(), setup.coarse_timestep(2).unwrap()];
        let dir = tempfile::tempdir().unwrap();
        let r = reference_solution(&setup, &dts, 0.2, Some(dir.path())).unwrap();
        assert!(!r.cache_hit);
        assert!(r.trajectory.states.iter().all(|u| u.iter().all(|&x| x == 0.0)));
        assert!((r.sample_dt - dts[1]).abs() < 1e-18);
        assert!(r.fine_dt <= SecondOrderSystem::fine(&setup.fine, false).unwrap().cfl_limit());
        assert!((r.fine_dt * r.substeps as f64 - r.sample_dt).abs() < 1e-15);
        let again = reference_solution(&setup, &dts, 0.2, Some(dir.path())).unwrap();
        assert!(again.cache_hit);
        assert_eq!(again.trajectory, r.trajectory);
        // Every coarse time point is stored.
        for dt in dts {
            let g = TimeGrid::new(0.2, dt).unwrap();
            for i in 0..=g.n_steps {
                assert!(crate::study::norm::state_at(&r.trajectory, g.time(i)).is_some());
            }
        }
    }
}
