//! Binary grid files and sequence directories.
//!
//! A grid file is little-endian:
//!
//! ```text
//! magic  b"CCGRID01"
//! u32    dim
//! i32    level
//! i64    origin[dim]
//! u64    extents[dim]
//! f64    values[prod extents]   (row-major, last axis fastest)
//! ```
//!
//! Round trips are bit-exact. Provenance goes into a JSON sidecar named
//! `<file>.json`.
//!
//! A sequence directory holds one element per index `k`, either as
//! `<k>.grid` or split into patches `<k>_<p>.grid` that are summed.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{check_dim, CellBox, GridFunction};
use crate::multiscale::DyadicSum;

pub const GRID_MAGIC: &[u8; 8] = b"CCGRID01";
pub const SCHEMA_VERSION: u32 = 1;

pub fn write_grid<W: Write>(u: &GridFunction, mut w: W) -> Result<()> {
    w.write_all(GRID_MAGIC)?;
    w.write_all(&(u.dim() as u32).to_le_bytes())?;
    w.write_all(&u.level().to_le_bytes())?;
    for o in u.origin() {
        w.write_all(&o.to_le_bytes())?;
    }
    for e in u.extents() {
        w.write_all(&(*e as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(u.values().len() * 8);
    for v in u.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn take<const K: usize>(bytes: &[u8], at: &mut usize, path: &Path) -> Result<[u8; K]> {
    let end = *at + K;
    let slice = bytes
        .get(*at..end)
        .ok_or_else(|| Error::format(path, format!("truncated at byte {at}")))?;
    *at = end;
    Ok(slice.try_into().expect("slice length"))
}

/// Parse a grid file; `path` is only used in error messages.
pub fn read_grid<R: Read>(mut r: R, path: &Path) -> Result<GridFunction> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut at = 0;
    let magic: [u8; 8] = take(&bytes, &mut at, path)?;
    if &magic != GRID_MAGIC {
        return Err(Error::format(path, "not a grid file (bad magic)"));
    }
    let dim = u32::from_le_bytes(take(&bytes, &mut at, path)?) as usize;
    check_dim(dim).map_err(|e| Error::format(path, e.to_string()))?;
    let level = i32::from_le_bytes(take(&bytes, &mut at, path)?);
    let mut origin = Vec::with_capacity(dim);
    for _ in 0..dim {
        origin.push(i64::from_le_bytes(take(&bytes, &mut at, path)?));
    }
    let mut extents = Vec::with_capacity(dim);
    for _ in 0..dim {
        extents.push(u64::from_le_bytes(take(&bytes, &mut at, path)?) as usize);
    }
    let cells = CellBox::new(origin, extents).map_err(|e| Error::format(path, e.to_string()))?;
    let count = cells.cell_count();
    let expected = count.checked_mul(8).map(|b| b + at as u128);
    if expected != Some(bytes.len() as u128) {
        return Err(Error::format(
            path,
            format!("header announces {count} values but the payload has {} bytes", bytes.len() - at),
        ));
    }
    let values = bytes[at..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    GridFunction::new(level, cells, values).map_err(|e| Error::format(path, e.to_string()))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Write the grid file and its JSON sidecar.
pub fn save_grid(path: &Path, u: &GridFunction, provenance: &serde_json::Value) -> Result<()> {
    let mut file = fs::File::create(path)?;
    write_grid(u, &mut file)?;
    let meta = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "dim": u.dim(),
        "level": u.level(),
        "origin": u.origin(),
        "extents": u.extents(),
        "provenance": provenance,
    });
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn load_grid(path: &Path) -> Result<GridFunction> {
    let file = fs::File::open(path).map_err(|e| Error::format(path, e.to_string()))?;
    read_grid(std::io::BufReader::new(file), path)
}

/// `<k>.grid` -> `(k, None)`, `<k>_<p>.grid` -> `(k, Some(p))`.
fn parse_element_name(name: &str) -> Option<(i64, Option<u64>)> {
    let stem = name.strip_suffix(".grid")?;
    match stem.split_once('_') {
        None => Some((stem.parse().ok()?, None)),
        Some((k, p)) => Some((k.parse().ok()?, Some(p.parse().ok()?))),
    }
}

/// Elements of a sequence directory in increasing `k`.
pub fn read_sequence_dir(dir: &Path) -> Result<Vec<(i64, DyadicSum)>> {
    let mut files: BTreeMap<i64, Vec<(Option<u64>, PathBuf)>> = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::format(dir, e.to_string()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if !name.ends_with(".grid") {
            continue;
        }
        let (k, patch) = parse_element_name(name)
            .ok_or_else(|| Error::format(&path, "expected <k>.grid or <k>_<patch>.grid"))?;
        files.entry(k).or_default().push((patch, path));
    }
    if files.is_empty() {
        return Err(Error::Usage(format!("sequence directory {} holds no .grid files", dir.display())));
    }
    let mut out = Vec::with_capacity(files.len());
    for (k, mut parts) in files {
        parts.sort();
        let mut dim = None;
        let mut sum: Option<DyadicSum> = None;
        for (_, path) in parts {
            let g = load_grid(&path)?;
            if *dim.get_or_insert(g.dim()) != g.dim() {
                return Err(Error::format(&path, "patches of one element differ in dimension"));
            }
            sum.get_or_insert_with(|| DyadicSum::zero(g.dim())).add(1.0, &g)?;
        }
        out.push((k, sum.expect("at least one patch")));
    }
    let dim = out[0].1.dim();
    if let Some((k, _)) = out.iter().find(|(_, s)| s.dim() != dim) {
        return Err(Error::format(dir, format!("element {k} differs in dimension from the first")));
    }
    Ok(out)
}

/// One file per patch, `<k>_<p>.grid`; zero elements get a single empty
/// cell so that every index survives a round trip.
pub fn write_sequence_dir(dir: &Path, elements: &[(i64, DyadicSum)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (k, u) in elements {
        let patches: Vec<GridFunction> = if u.is_zero() {
            vec![GridFunction::zeros(0, CellBox::new(vec![0; u.dim()], vec![1; u.dim()])?)]
        } else {
            u.patches().to_vec()
        };
        for (p, g) in patches.iter().enumerate() {
            let path = dir.join(format!("{k}_{p}.grid"));
            let mut file = fs::File::create(&path)?;
            write_grid(g, &mut file)?;
        }
    }
    Ok(())
}
