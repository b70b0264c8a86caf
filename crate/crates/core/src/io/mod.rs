//! File formats: hyperspectral cubes, dictionaries, regions.

mod dictfile;
mod hsi;

use std::io::Write;
use std::path::Path;

pub use dictfile::{
    columns_to_csv, load_dictionary, load_regions, parse_columns_csv, parse_regions, save_dictionary,
    DictionarySidecar,
};
pub use hsi::{load_hsi, save_hsi, sidecar_path, HsiCube, HsiFormat, HsiHeader};

/// Writes `bytes` to a temporary file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

fn with_path(path: &Path, e: std::io::Error) -> std::io::Error {
    std::io::Error::new(e.kind(), format!("`{}`: {e}", path.display()))
}

/// `std::fs::read_to_string` with the path in the error message.
pub fn read_text(path: &Path) -> std::io::Result<String> {
    std::fs::read_to_string(path).map_err(|e| with_path(path, e))
}

pub(crate) fn read_bytes(path: &Path) -> std::io::Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| with_path(path, e))
}
