//! Persistence: TOML configurations, binary kernel and eigensystem files,
//! and sweep reports.

mod binary;
mod config;
mod report;

pub use binary::{
    eigensystem_from_bytes, eigensystem_to_bytes, kernel_from_bytes, kernel_to_bytes,
    load_eigensystem, load_kernel, save_eigensystem, save_kernel, EIGEN_MAGIC, KERNEL_MAGIC,
};
pub use config::{
    config_hash, config_to_toml, load_config, parse_config, parse_kernel_table, save_config,
    ConfigDocument, SCHEMA_VERSION,
};
pub use report::{
    aligned_table, ber_svg, curves_table, load_curves, manifest_text, parse_csv, read_manifest,
    result_csv, Curve, CSV_HEADER,
};

use std::fs;
use std::path::Path;

use crate::error::Result;

/// Writes through a sibling temporary file and renames it into place, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    fs::write(&tmp, bytes)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}
