use std::fs;
use std::path::Path;

use super::{Feeder, FeederData};
use crate::{Error, Result};

/// Reads and validates a feeder description file.
pub fn load_feeder(path: impl AsRef<Path>) -> Result<Feeder> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feeder(&text, &path.display().to_string())
}

pub fn parse_feeder(text: &str, source_name: &str) -> Result<Feeder> {
    let data: FeederData = toml::from_str(text)
        .map_err(|e| Error::Parse { source_name: source_name.to_string(), message: e.to_string() })?;
    Feeder::new(data)
}

pub fn to_toml_string(feeder: &Feeder) -> String {
    toml::to_string(feeder.data()).expect("feeder data is always representable as TOML")
}

pub fn write_feeder(feeder: &Feeder, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_toml_string(feeder)).map_err(|e| Error::io(path, e))
}
