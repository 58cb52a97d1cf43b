//! Subcommand implementations. Each one validates its inputs up front,
//! does all the work in memory, and only then writes its outputs, each
//! file atomically, so a failed run leaves nothing half-written.

pub mod eval;
pub mod gradcheck;
pub mod ingest;
pub mod profile;
pub mod synth;
pub mod train;

use std::fs;
use std::path::{Path, PathBuf};

use flowlens_core::capture::ExportStream;
use flowlens_core::synth::apply_labels;
use flowlens_core::synth::dataset::read_labels_jsonl;
use flowlens_core::util::write_atomic;

use crate::CliError;

/// Read a required input file with the path in the error message.
pub fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

/// Create `dir` and atomically write `name` into it.
pub fn write_output(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    write_atomic(&path, bytes)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Load a streams file and, when a label sidecar is given or the default
/// one exists next to the data, join labels onto the streams by flow key.
/// Returns the streams and how many rows matched.
pub fn load_streams(
    streams_path: &Path,
    labels_path: Option<&Path>,
    default_labels: &Path,
) -> Result<(Vec<ExportStream>, usize), CliError> {
    let text = read_input(streams_path)?;
    let mut streams = flowlens_core::capture::read_streams_jsonl(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", streams_path.display())))?;
    let effective = match labels_path {
        Some(p) => Some(p.to_path_buf()),
        None if default_labels.is_file() => Some(default_labels.to_path_buf()),
        None => None,
    };
    let mut matched = 0;
    if let Some(p) = effective {
        let rows = read_labels_jsonl(&read_input(&p)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        matched = apply_labels(&mut streams, &rows);
    }
    Ok((streams, matched))
}
