//! Content-addressed on-disk cache for corrector sets.
//!
//! Layout: 8-byte magic, a length-prefixed JSON header, then per element its
//! id, patch dof list, corner mask and corner values, all little-endian.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{build_corrector_set, reassemble, CorrectorSet, ElementCorrectors};
use crate::coefficient::content_hash;
use crate::error::{Error, Result};
use crate::fem::FineDiscretization;
use crate::interpolation::InterpolationOperator;

const MAGIC: &[u8; 8] = b"LODWCOR1";
const FORMAT_VERSION: u32 = 1;

/// Environment variable overriding the cache directory.
pub const CACHE_DIR_ENV: &str = "LODWAVE_CACHE_DIR";

#[derive(Debug, Clone)]
pub struct CorrectorCache {
    dir: PathBuf,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Header {
    key: String,
    coarse_level: u32,
    fine_level: u32,
    layers: usize,
    n_fine: usize,
    n_elements: usize,
    max_residual: f64,
}

impl CorrectorCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `$LODWAVE_CACHE_DIR` if set, else `default`.
    pub fn from_env_or(default: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(d) if !d.is_empty() => Self::new(d),
            _ => Self::new(default),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("correctors-{key}.bin"))
    }

    /// Loads the set if cached, else builds and stores it. The flag is true on a hit.
    pub fn get_or_build(
        &self,
        op: &InterpolationOperator,
        fine: &FineDiscretization,
        layers: usize,
    ) -> Result<(CorrectorSet, bool)> {
        let key = cache_key(op, fine, layers);
        if let Some(set) = load_cached(self, &key, op, fine)? {
            return Ok((set, true));
        }
        let set = build_corrector_set(op, fine, layers)?;
        store_cached(self, &key, &set, fine.n_dofs())?;
        Ok((set, false))
    }
}

/// SHA-256 over everything the correctors depend on.
pub fn cache_key(op: &InterpolationOperator, fine: &FineDiscretization, layers: usize) -> String {
    let descr = serde_json::json!({
        "format": FORMAT_VERSION,
        "coarse_level": op.coarse().level(),
        "fine_level": fine.mesh.level(),
        "boundary": fine.bc.name(),
        "layers": layers,
        "coefficient": content_hash(&fine.coeff),
    });
    hex::encode(Sha256::digest(descr.to_string().as_bytes()))
}

fn write_u64<W: Write>(w: &mut W, x: u64) -> std::io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

/// Writes atomically: a temporary file in the cache directory is renamed into place.
pub fn store_cached(cache: &CorrectorCache, key: &str, set: &CorrectorSet, n_fine: usize) -> Result<PathBuf> {
    fs::create_dir_all(&cache.dir)?;
    let path = cache.path_for(key);
    let tmp = cache.dir.join(format!(".{key}.{}.tmp", std::process::id()));
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        w.write_all(MAGIC)?;
        let header = Header {
            key: key.to_string(),
            coarse_level: set.coarse_level,
            fine_level: set.fine_level,
            layers: set.layers,
            n_fine,
            n_elements: set.elements.len(),
            max_residual: set.max_residual,
        };
        let hb = serde_json::to_vec(&header)?;
        write_u64(&mut w, hb.len() as u64)?;
        w.write_all(&hb)?;
        for ec in &set.elements {
            write_u64(&mut w, ec.element as u64)?;
            write_u64(&mut w, ec.fine_dofs.len() as u64)?;
            for &d in &ec.fine_dofs {
                write_u64(&mut w, d as u64)?;
            }
            let mask = ec
                .corners
                .iter()
                .enumerate()
                .fold(0u8, |m, (c, v)| if v.is_some() { m | (1 << c) } else { m });
            w.write_all(&[mask])?;
            for vals in ec.corners.iter().flatten() {
                for &v in vals {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Returns `None` when no entry exists; a corrupt or mismatching entry is an error.
pub fn load_cached(
    cache: &CorrectorCache,
    key: &str,
    op: &InterpolationOperator,
    fine: &FineDiscretization,
) -> Result<Option<CorrectorSet>> {
    let path = cache.path_for(key);
    let file = match fs::File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let corrupt = |what: &str| Error::Cache(format!("{}: {what}", path.display()));
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| corrupt("truncated"))?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let hlen = read_u64(&mut r)? as usize;
    if hlen > 1 << 20 {
        return Err(corrupt("oversized header"));
    }
    let mut hb = vec![0u8; hlen];
    r.read_exact(&mut hb)?;
    let header: Header = serde_json::from_slice(&hb)?;
    if header.key != key || header.n_fine != fine.n_dofs() || header.coarse_level != op.coarse().level() {
        return Err(corrupt("header does not match the requested problem"));
    }
    let mut elements = Vec::with_capacity(header.n_elements);
    for _ in 0..header.n_elements {
        let element = read_u64(&mut r)? as usize;
        let n = read_u64(&mut r)? as usize;
        if n > header.n_fine || element >= op.coarse().n_elems() {
            return Err(corrupt("inconsistent element record"));
        }
        let fine_dofs = (0..n)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<std::io::Result<Vec<_>>>()?;
        if fine_dofs.iter().any(|&d| d >= header.n_fine) {
            return Err(corrupt("dof out of range"));
        }
        let mut mask = [0u8; 1];
        r.read_exact(&mut mask)?;
        let mut corners: [Option<Vec<f64>>; 4] = Default::default();
        for (c, slot) in corners.iter_mut().enumerate() {
            if mask[0] & (1 << c) != 0 {
                *slot = Some((0..n).map(|_| read_f64(&mut r)).collect::<std::io::Result<Vec<_>>>()?);
            }
        }
        elements.push(ElementCorrectors {
            element,
            fine_dofs,
            corners,
        });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(Some(reassemble(op, header.n_fine, header.layers, elements, header.max_residual)))
}
