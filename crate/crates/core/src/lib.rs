//! Finding similar exercises: normalization, auxiliary tasks, gated
//! multi-task training of a pair scorer, confident-learning label pruning and
//! ranked retrieval evaluation.

pub mod clean;
pub mod cli;
pub mod corpus;
pub mod eval;
pub mod model;
pub mod moe;
pub mod normalizer;
pub mod tasks;

use std::io::Write;
use std::path::Path;

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}
