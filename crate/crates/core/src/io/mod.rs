//! Ingestion, persistence, and run configuration.

pub mod checkpoint;
pub mod config;
pub mod off;
pub mod xyz;

use std::path::Path;

use crate::error::Result;

/// Writes atomically: the payload lands in a sibling temp file which is
/// renamed over the target, so readers never observe a partial file.
pub fn atomic_write(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
