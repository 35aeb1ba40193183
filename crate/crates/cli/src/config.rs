//! Experiment configuration: one JSON document plus `--set key=value` overrides.

use std::path::{Path, PathBuf};

use ctxdepth::data::synthetic::{self, SyntheticSpec};
use ctxdepth::data::{load_split, FrameTriplet, KittiConfig, KittiDataset};
use ctxdepth::data::{AugmentConfig, TripletSource};
use ctxdepth::losses::LossConfig;
use ctxdepth::network::DepthNetConfig;
use ctxdepth::training::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{input, CliResult};

/// Snapshot written into every run directory.
pub const CONFIG_SNAPSHOT: &str = "config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    #[default]
    Synthetic,
    Kitti,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DataKind,
    /// Synthetic: a directory written by `synth` (generated in memory when absent).
    /// KITTI: the raw-data root.
    pub root: Option<PathBuf>,
    /// KITTI split directory (`{train,val,test}_files.txt`) or a single list file.
    pub split: Option<PathBuf>,
    /// Which list of the split to train on.
    pub list: String,
    pub synthetic: SyntheticSpec,
    pub kitti: KittiConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            kind: DataKind::Synthetic,
            root: None,
            split: None,
            list: "train".into(),
            synthetic: SyntheticSpec::default(),
            kitti: KittiConfig::default(),
        }
    }
}

impl DataConfig {
    /// Network input resolution as `(width, height)`.
    pub fn resolution(&self) -> CliResult<(usize, usize)> {
        match (self.kind, &self.root) {
            (DataKind::Kitti, _) => Ok((self.kitti.width, self.kitti.height)),
            (DataKind::Synthetic, None) => Ok((self.synthetic.width, self.synthetic.height)),
            (DataKind::Synthetic, Some(root)) => {
                let spec = read_spec(&root.join("spec.json"))?;
                Ok((spec.width, spec.height))
            }
        }
    }

    pub fn open(&self) -> CliResult<Box<dyn TripletSource>> {
        match self.kind {
            DataKind::Synthetic => Ok(Box::new(self.synthetic_scenes()?)),
            DataKind::Kitti => {
                let root = self
                    .root
                    .as_ref()
                    .ok_or_else(|| input("data.root is required for KITTI data"))?;
                if !root.is_dir() {
                    return Err(input(format!(
                        "dataset root {} does not exist",
                        root.display()
                    )));
                }
                let split = self
                    .split
                    .as_ref()
                    .ok_or_else(|| input("data.split is required for KITTI data"))?;
                let manifest = load_split(split)?;
                let ids = manifest
                    .get(&self.list)
                    .ok_or_else(|| input(format!("split has no `{}` list", self.list)))?;
                let data = KittiDataset::new(root.clone(), ids, self.kitti.clone());
                if data.is_empty() {
                    return Err(input(format!(
                        "no usable `{}` frames under {}",
                        self.list,
                        root.display()
                    )));
                }
                Ok(Box::new(data))
            }
        }
    }

    pub fn synthetic_scenes(&self) -> CliResult<Vec<FrameTriplet>> {
        let scenes = match &self.root {
            Some(root) => {
                if !root.is_dir() {
                    return Err(input(format!(
                        "dataset root {} does not exist",
                        root.display()
                    )));
                }
                synthetic::load_dataset(root)?
            }
            None => synthetic::generate_synthetic_dataset(&self.synthetic)?,
        };
        if scenes.is_empty() {
            return Err(input("synthetic dataset has no scenes"));
        }
        Ok(scenes)
    }
}

pub fn read_spec(path: &Path) -> CliResult<SyntheticSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input(format!("invalid spec {}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: DepthNetConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub data: DataConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            network: DepthNetConfig::default(),
            train: TrainConfig::default(),
            loss: LossConfig::default(),
            augment: AugmentConfig::default(),
            data: DataConfig::default(),
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (defaults when `None`) and applies `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| input(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str::<Value>(&text)
                    .map_err(|e| input(format!("invalid JSON in {}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        serde_json::from_value(doc).map_err(|e| input(format!("invalid config: {e}")))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.train.validate()?;
        self.loss.validate()?;
        if let DataKind::Synthetic = self.data.kind {
            self.data.synthetic.validate()?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text)
            .map_err(|e| input(format!("cannot write {}: {e}", path.display())))
    }
}

/// `a.b.c=value`: the value is parsed as JSON when possible and taken as a string otherwise.
pub fn apply_override(doc: &mut Value, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| input(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(input(format!("override `{spec}` has an empty key segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(map) => map,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just created")
            }
            _ => {
                return Err(input(format!(
                    "override `{key}`: `{}` is not an object",
                    parts[..i].join(".")
                )))
            }
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("key has at least one segment")
}

/// Resolution recorded by the run that produced `checkpoint` (`<run>/checkpoints/<name>.tar`).
pub fn run_resolution(checkpoint: &Path) -> Option<(usize, usize)> {
    let run = checkpoint.parent()?.parent()?;
    let cfg = ExperimentConfig::load(Some(&run.join(CONFIG_SNAPSHOT)), &[]).ok()?;
    cfg.data.resolution().ok()
}
