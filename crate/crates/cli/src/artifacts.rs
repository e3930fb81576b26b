//! Run directories: checkpoint, config, result, confusion matrix and timings.

use std::fs;
use std::path::Path;

use serde::Serialize;
use twostream_core::data::Dataset;
use twostream_core::io::{load_module, save_module};
use twostream_core::{Error, Result};

use crate::config::RunConfig;
use crate::ladder::init_model;
use crate::model::Model;
use crate::train::{confusion_csv, TrainOutput};

pub const MODEL_FILE: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "config.conf";
pub const RESULT_FILE: &str = "result.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const TIMINGS_FILE: &str = "timings.json";

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format("JSON", e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn save_run(dir: impl AsRef<Path>, cfg: &RunConfig, model: &Model, out: &TrainOutput) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    save_module(dir.join(MODEL_FILE), model)?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_text())?;
    write_json(dir.join(RESULT_FILE), &out.result)?;
    fs::write(
        dir.join(CONFUSION_FILE),
        confusion_csv(&out.result.confusion, &out.result.class_names),
    )?;
    write_json(dir.join(TIMINGS_FILE), &out.timings)
}

pub fn load_config(dir: impl AsRef<Path>) -> Result<RunConfig> {
    let path = dir.as_ref().join(CONFIG_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::parse(&text)
}

/// Rebuilds the trained model of a run directory for `data`.
pub fn load_run(dir: impl AsRef<Path>, data: &Dataset) -> Result<(RunConfig, Model)> {
    let dir = dir.as_ref();
    let cfg = load_config(dir)?;
    let mut model = init_model(&cfg, data)?;
    load_module(dir.join(MODEL_FILE), &mut model)?;
    Ok((cfg, model))
}
