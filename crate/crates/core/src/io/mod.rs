//! File formats and artifact plumbing: PFM, 8-bit rasters, flat configs,
//! ground-truth ingestion. Every write goes through [`atomic_write`].

mod config;
mod pfm;
mod raster;
mod scene;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

pub use config::{parse_config, RunConfig, SignalParams, CONFIG_KEYS};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use raster::{
    boundary_overlay, decode_image, encode_gray_png, encode_mask_png, encode_rgb_png, read_image, read_mask,
    scaled_disparity_png, write_gray_png, write_mask_png, write_rgb_png,
};
pub use scene::{left_to_cyclopean, ConversionReport, GtView, SceneBundle};

use crate::error::Result;

/// Writes through a temporary file in the target directory and renames it
/// into place, so a crash never leaves a partial file under the final name.
pub fn atomic_write(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new().prefix(".partial-").tempfile_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    // Temporary files are created private; artifacts should not be.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn atomic_write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    atomic_write(path, |w| w.write_all(bytes))
}
