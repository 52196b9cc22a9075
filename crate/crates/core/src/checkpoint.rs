//! Shared checkpoint layout: `config.json`, a little-endian f64 parameter
//! blob and an optional CSV training log.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, IoContext, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const LOG_FILE: &str = "training_log.csv";

pub(crate) fn write_checkpoint<C: Serialize, R: Serialize>(
    dir: &Path,
    config: &C,
    params: &[f64],
    log: &[R],
) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    let cfg = dir.join(CONFIG_FILE);
    fs::write(&cfg, serde_json::to_vec_pretty(config)?).at(&cfg)?;
    let blob: Vec<u8> = params.iter().flat_map(|p| p.to_le_bytes()).collect();
    let params_path = dir.join(PARAMS_FILE);
    fs::write(&params_path, blob).at(&params_path)?;
    let mut w = csv::Writer::from_path(dir.join(LOG_FILE))?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush().at(dir.join(LOG_FILE))?;
    Ok(())
}

pub(crate) fn read_checkpoint<C: DeserializeOwned>(dir: &Path) -> Result<(C, Vec<f64>)> {
    let cfg = dir.join(CONFIG_FILE);
    let config = serde_json::from_slice(&fs::read(&cfg).at(&cfg)?)?;
    let params_path = dir.join(PARAMS_FILE);
    let blob = fs::read(&params_path).at(&params_path)?;
    if blob.len() % 8 != 0 {
        return Err(Error::InvalidInput(format!(
            "{} is not a whole number of f64 values",
            params_path.display()
        )));
    }
    let params = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((config, params))
}

pub(crate) fn read_log<R: DeserializeOwned>(dir: &Path) -> Result<Vec<R>> {
    let path = dir.join(LOG_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    csv::Reader::from_path(path)?
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
