mod enhance;
mod records;
mod scan;

pub use enhance::{gradcheck, hsse_demo};
pub use records::{augment, eval, sidb_build};
pub use scan::unproject;

use std::fs;
use std::path::Path;

use dg_core::formats::write_atomic;
use dg_core::hsse::HsseConfig;

use crate::error::{require_file, CliError, CliResult};
use crate::RunConfig;

fn say(cfg: &RunConfig, msg: impl AsRef<str>) {
    if !cfg.quiet {
        println!("{}", msg.as_ref());
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_output(path: &Path, bytes: &[u8]) -> CliResult<()> {
    write_atomic(path, bytes).map_err(|e| CliError::Input(format!("cannot write output: {e}")))
}

fn load_hsse_config(path: Option<&Path>) -> CliResult<HsseConfig> {
    match path {
        None => Ok(HsseConfig::default()),
        Some(p) => {
            require_file(p)?;
            Ok(HsseConfig::from_json(&read_text(p)?)?)
        }
    }
}
