//! Layered run configuration.
//!
//! Each command resolves its configuration as a JSON object merged from,
//! lowest priority first: built-in defaults, `--paper-defaults`, command
//! presets, the `--config` file, and explicit flags. The merged object is
//! deserialised into the command's resolved config and echoed verbatim
//! into `manifest.json`, so a manifest can be fed back through `--config`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sidelobe::bga::GaConfig;
use sidelobe::io::SceneFile;
use sidelobe::rls::MainlobeShape;

use crate::error::CliError;

pub const PAPER_BANDWIDTH: f64 = 5e6;
pub const PAPER_PULSE_WIDTH: f64 = 20e-6;
pub const PAPER_SAMPLE_RATE: f64 = 12e6;
pub const PAPER_FILTER_LENGTH: usize = 480;
pub const PAPER_TAPER: f64 = 0.1;
pub const PAPER_ITERATIONS: usize = 10_000;

pub const DEMO_SCENE: &str = include_str!("../scenes/two_scatterer.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WaveformKind {
    #[default]
    Lfm,
    Barker,
    Impulse,
    File,
}

/// Transmit pulse description. Which fields are needed depends on `kind`:
/// an LFM needs bandwidth, pulse width and sample rate; a file needs a
/// path to an `index,re,im` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformConfig {
    pub kind: WaveformKind,
    pub bandwidth: Option<f64>,
    pub pulse_width: Option<f64>,
    pub sample_rate: Option<f64>,
    pub taper_alpha: f64,
    pub barker_length: usize,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignIslConfig {
    pub waveform: WaveformConfig,
    /// Twice the pulse length when absent.
    pub filter_length: Option<usize>,
    pub mainlobe_width: usize,
    /// Peak response of the min-ISL filter; the pulse energy when absent.
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RlsInit {
    Matched,
    MinIsl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeRlsConfig {
    pub waveform: WaveformConfig,
    pub filter_length: Option<usize>,
    pub mainlobe_width: usize,
    pub iterations: usize,
    pub forgetting_factor: f64,
    /// Initial `P = δI`; `100·mean|s|²` when absent.
    pub regularization: Option<f64>,
    pub init: RlsInit,
    pub shape: MainlobeShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleanConfig {
    pub waveform: WaveformConfig,
    /// Number of range cells (filter length of the convolution model).
    pub cells: usize,
    pub scene: Option<SceneFile>,
    /// Detection threshold; derived from `pfa` when absent.
    pub eta: Option<f64>,
    pub pfa: f64,
    /// Noise-power floor, relative to the pulse energy, used when the scene
    /// is noiseless so the detector and estimator stay well posed.
    pub diagonal_loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub waveform: WaveformConfig,
    pub filter: Option<PathBuf>,
    pub mainlobe_width: usize,
}

/// Serialised run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub outputs: Vec<String>,
}

/// Recursive object merge; non-object values in `top` replace `base`.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, t) => *b = t,
    }
}

fn waveform_defaults() -> Value {
    json!({
        "kind": "lfm",
        "bandwidth": null,
        "pulse_width": null,
        "sample_rate": null,
        "taper_alpha": PAPER_TAPER,
        "barker_length": 13,
        "path": null,
    })
}

fn paper_waveform() -> Value {
    json!({
        "bandwidth": PAPER_BANDWIDTH,
        "pulse_width": PAPER_PULSE_WIDTH,
        "sample_rate": PAPER_SAMPLE_RATE,
        "taper_alpha": PAPER_TAPER,
    })
}

pub fn defaults(command: &str, paper: bool) -> Value {
    let mut v = match command {
        "design-isl" => json!({
            "waveform": waveform_defaults(),
            "filter_length": null,
            "mainlobe_width": 3,
            "alpha": null,
        }),
        "optimize-rls" => json!({
            "waveform": waveform_defaults(),
            "filter_length": null,
            "mainlobe_width": 3,
            "iterations": PAPER_ITERATIONS,
            "forgetting_factor": sidelobe::rls::DEFAULT_FORGETTING,
            "regularization": null,
            "init": "min_isl",
            "shape": "triangular",
        }),
        "clean" => json!({
            "waveform": waveform_defaults(),
            "cells": 128,
            "scene": null,
            "eta": null,
            "pfa": 1e-6,
            "diagonal_loading": 1e-9,
        }),
        "metrics" => json!({
            "waveform": waveform_defaults(),
            "filter": null,
            "mainlobe_width": 3,
        }),
        "design-nlfm" => {
            let mut g = serde_json::to_value(GaConfig::default()).expect("GA config serialises");
            // the pulse parameters have no generic default
            g.as_object_mut().expect("object").remove("waveform_params");
            g
        }
        other => unreachable!("unknown command {other}"),
    };
    if paper {
        let p = match command {
            "design-isl" | "optimize-rls" => json!({ "waveform": paper_waveform(), "filter_length": PAPER_FILTER_LENGTH }),
            "clean" | "metrics" => json!({ "waveform": paper_waveform() }),
            _ => json!({ "waveform_params": serde_json::to_value(GaConfig::default().waveform_params).expect("serialises") }),
        };
        merge(&mut v, p);
    }
    v
}

/// Small preset that makes `clean --demo-scene` self-contained: a 64-sample
/// LFM over 128 range cells with the bundled two-scatterer scene.
pub fn demo_scene_preset() -> Value {
    let scene: Value = serde_json::from_str(DEMO_SCENE).expect("bundled scene is valid JSON");
    json!({
        "waveform": { "kind": "lfm", "bandwidth": 2e6, "pulse_width": 16e-6, "sample_rate": 4e6, "taper_alpha": 0.0 },
        "cells": 128,
        "scene": scene,
    })
}

/// What a `--config` file contributed: its config object and, for a
/// manifest, the recorded seed.
pub struct ConfigFile {
    pub config: Value,
    pub seed: Option<u64>,
}

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Load `--config`, unwrapping a manifest produced by the same command.
pub fn load_config_file(path: &Path, command: &str) -> Result<ConfigFile, CliError> {
    let v = read_json(path)?;
    if v.get("command").is_some() && v.get("config").is_some() {
        let m: Manifest = serde_json::from_value(v).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if m.command != command {
            return Err(CliError::Config(format!("{} is a manifest for `{}`, not `{command}`", path.display(), m.command)));
        }
        return Ok(ConfigFile { config: m.config, seed: m.seed });
    }
    if !v.is_object() {
        return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
    }
    Ok(ConfigFile { config: v, seed: None })
}

/// Builder for the flag layer: only flags the user actually passed end up
/// in the object.
#[derive(Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    pub fn set<T: Serialize>(&mut self, path: &[&str], value: Option<T>) -> &mut Self {
        let Some(value) = value else { return self };
        let value = serde_json::to_value(value).expect("flag values serialise");
        let mut node = &mut self.0;
        for key in &path[..path.len() - 1] {
            node = node
                .entry(key.to_string())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("override paths do not collide");
        }
        node.insert(path[path.len() - 1].to_string(), value);
        self
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.0)
    }
}

pub fn resolve<T: serde::de::DeserializeOwned>(merged: &Value) -> Result<T, CliError> {
    serde_json::from_value(merged.clone()).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))
}
