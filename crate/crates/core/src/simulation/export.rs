//! Scenario-set files.
//!
//! The binary layout is, all integers little-endian:
//!
//! ```text
//! magic        6 bytes   "SAESG1"
//! n_series     u64
//! n_paths      u64
//! horizon      u64
//! seed         u64
//! start_year   i64
//! per series:  u64 name length, UTF-8 name bytes
//! data         f64 x n_series x n_paths x horizon, row-major in that order
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::ScenarioSet;
use crate::error::{Error, Result};
use crate::models::CascadeState;

pub const MAGIC: &[u8; 6] = b"SAESG1";

fn io_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

/// Long-format CSV: `path,year,series,value`.
pub fn write_csv<W: Write>(set: &ScenarioSet, out: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "path,year,series,value").map_err(io_err)?;
    for (name, values) in &set.series {
        for p in 0..set.n_paths {
            for t in 0..set.horizon {
                writeln!(
                    w,
                    "{p},{},{name},{}",
                    set.start_year + t as i32,
                    values[p * set.horizon + t]
                )
                .map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

pub fn write_binary<W: Write>(set: &ScenarioSet, out: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(io_err);
    put(MAGIC)?;
    put(&(set.series.len() as u64).to_le_bytes())?;
    put(&(set.n_paths as u64).to_le_bytes())?;
    put(&(set.horizon as u64).to_le_bytes())?;
    put(&set.seed.to_le_bytes())?;
    put(&(set.start_year as i64).to_le_bytes())?;
    for name in set.series.keys() {
        put(&(name.len() as u64).to_le_bytes())?;
        put(name.as_bytes())?;
    }
    for values in set.series.values() {
        for v in values {
            put(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(io_err)
}

fn take<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(buf)
}

fn take_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(take::<R, 8>(r)?))
}

/// Reads a binary scenario file. Parameter sets and the initial state are
/// not stored in the binary form and come back empty.
pub fn read_binary<R: Read>(input: R) -> Result<ScenarioSet> {
    let mut r = std::io::BufReader::new(input);
    if &take::<_, 6>(&mut r)? != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let n_series = take_u64(&mut r)? as usize;
    let n_paths = take_u64(&mut r)? as usize;
    let horizon = take_u64(&mut r)? as usize;
    let seed = take_u64(&mut r)?;
    let start_year = i64::from_le_bytes(take::<_, 8>(&mut r)?) as i32;
    if n_series > 64 {
        return Err(Error::Format(format!("implausible series count {n_series}")));
    }
    let mut names = Vec::with_capacity(n_series);
    for _ in 0..n_series {
        let len = take_u64(&mut r)? as usize;
        if len > 256 {
            return Err(Error::Format(format!("implausible name length {len}")));
        }
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(io_err)?;
        names.push(String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))?);
    }
    let count = n_paths
        .checked_mul(horizon)
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let mut series = BTreeMap::new();
    for name in names {
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64::from_le_bytes(take::<_, 8>(&mut r)?));
        }
        series.insert(name, values);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(io_err)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    Ok(ScenarioSet {
        seed,
        n_paths,
        horizon,
        start_year,
        series,
        initial_state: CascadeState::default(),
        params: Vec::new(),
    })
}
