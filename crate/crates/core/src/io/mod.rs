//! File formats: `.flo` flow fields, CSV matrices and grids, replay traces, atomic writes.

mod flo;
mod tables;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use flo::{read_flo, write_flo, FlowField, FLO_MAGIC};
pub use tables::{
    read_flow_map, read_grid_csv, read_matrix_csv, read_trace, write_grid_csv, TraceRow,
};

/// Writes `bytes` to `path` through a sibling temp file, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
