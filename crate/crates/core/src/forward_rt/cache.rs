//! Versioned JSON cache for traced path sets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trace::TraceResult;
use crate::error::{Error, Result};

pub const CACHE_FORMAT: &str = "rfmat-trace";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CacheFile {
    format: String,
    version: u32,
    traces: Vec<TraceResult>,
}

pub fn write_trace_cache(path: &Path, traces: &[TraceResult]) -> Result<()> {
    let file = CacheFile { format: CACHE_FORMAT.into(), version: CACHE_VERSION, traces: traces.to_vec() };
    std::fs::write(path, serde_json::to_vec(&file)?)?;
    Ok(())
}

pub fn read_trace_cache(path: &Path) -> Result<Vec<TraceResult>> {
    let bytes = std::fs::read(path)?;
    let file: CacheFile = serde_json::from_slice(&bytes)?;
    if file.format != CACHE_FORMAT {
        return Err(Error::Cache(format!("not a trace cache (format `{}`)", file.format)));
    }
    if file.version != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported cache version {}", file.version)));
    }
    Ok(file.traces)
}
