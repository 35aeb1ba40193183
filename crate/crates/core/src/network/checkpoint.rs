//! Checkpoint archives: a tar file holding a JSON manifest plus named weight records.
//!
//! ```text
//! manifest.json    format tag, version, step/epoch counters, network config, free-form extras
//! model.mpk        named MessagePack record of the depth and pose networks
//! optimizer.mpk    optional optimiser state
//! ```

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use burn::module::Module;
use burn::record::{FullPrecisionSettings, NamedMpkBytesRecorder, Record, Recorder};
use burn::tensor::backend::Backend;
use serde::{Deserialize, Serialize};

use super::{DepthNetConfig, DepthPoseModel};
use crate::error::{Error, Result};

pub const FORMAT: &str = "ctxdepth-checkpoint";
pub const VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const MODEL: &str = "model.mpk";
const OPTIMIZER: &str = "optimizer.mpk";

type Bytes = NamedMpkBytesRecorder<FullPrecisionSettings>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub step: usize,
    pub epoch: usize,
    pub network: DepthNetConfig,
    /// Training configuration, loss statistics and anything else the writer wants to keep.
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl CheckpointManifest {
    pub fn new(network: DepthNetConfig, step: usize, epoch: usize) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            step,
            epoch,
            network,
            extra: serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub model: Vec<u8>,
    pub optimizer: Option<Vec<u8>>,
}

pub fn encode_record<B: Backend, R: Record<B>>(record: R) -> Result<Vec<u8>> {
    Recorder::<B>::record(&Bytes::new(), record, ()).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn decode_record<B: Backend, R: Record<B>>(bytes: Vec<u8>, device: &B::Device) -> Result<R> {
    Recorder::<B>::load(&Bytes::new(), bytes, device).map_err(|e| Error::Checkpoint(e.to_string()))
}

impl Checkpoint {
    pub fn from_model<B: Backend>(
        manifest: CheckpointManifest,
        model: &DepthPoseModel<B>,
    ) -> Result<Self> {
        Ok(Self {
            manifest,
            model: encode_record::<B, _>(model.clone().into_record())?,
            optimizer: None,
        })
    }

    /// Rebuilds the networks described by the manifest and loads their weights.
    pub fn load_model<B: Backend>(&self, device: &B::Device) -> Result<DepthPoseModel<B>> {
        let model = DepthPoseModel::new(&self.manifest.network, device)?;
        let record = decode_record::<B, _>(self.model.clone(), device)?;
        Ok(model.load_record(record))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut builder = tar::Builder::new(File::create(path).map_err(io)?);
        let manifest = serde_json::to_vec_pretty(&self.manifest).expect("manifest serialises");
        let mut entries = vec![
            (MANIFEST, manifest.as_slice()),
            (MODEL, self.model.as_slice()),
        ];
        if let Some(opt) = &self.optimizer {
            entries.push((OPTIMIZER, opt.as_slice()));
        }
        for (name, data) in entries {
            let mut header = tar::Header::new_gnu();
            header.set_size(data.len() as u64);
            header.set_mode(0o644);
            header.set_cksum();
            builder.append_data(&mut header, name, data).map_err(io)?;
        }
        builder.into_inner().map_err(io)?.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let malformed = |message: String| Error::Format {
            what: "checkpoint",
            path: path.to_path_buf(),
            message,
        };
        let mut archive = tar::Archive::new(File::open(path).map_err(io)?);
        let (mut manifest, mut model, mut optimizer) = (None, None, None);
        for entry in archive.entries().map_err(io)? {
            let mut entry = entry.map_err(io)?;
            let name = entry.path().map_err(io)?.to_string_lossy().into_owned();
            let mut data = Vec::new();
            entry.read_to_end(&mut data).map_err(io)?;
            match name.as_str() {
                MANIFEST => manifest = Some(data),
                MODEL => model = Some(data),
                OPTIMIZER => optimizer = Some(data),
                _ => log::warn!("ignoring unknown checkpoint entry {name}"),
            }
        }
        let manifest: CheckpointManifest = serde_json::from_slice(
            &manifest.ok_or_else(|| malformed(format!("missing {MANIFEST}")))?,
        )
        .map_err(|e| malformed(e.to_string()))?;
        if manifest.format != FORMAT || manifest.version != VERSION {
            return Err(malformed(format!(
                "unsupported format {} v{}",
                manifest.format, manifest.version
            )));
        }
        Ok(Self {
            manifest,
            model: model.ok_or_else(|| malformed(format!("missing {MODEL}")))?,
            optimizer,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_util::to_vec;
    use burn::backend::NdArray;
    use burn::tensor::{Distribution, Tensor};

    type B = NdArray<f32>;

    #[test]
    fn round_trip_preserves_outputs() {
        let dev = Default::default();
        let cfg = DepthNetConfig::tiny();
        let model = DepthPoseModel::<B>::new(&cfg, &dev).unwrap();
        let mut manifest = CheckpointManifest::new(cfg, 12, 3);
        manifest.extra = serde_json::json!({"note": "x"});
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.tar");
        Checkpoint::from_model(manifest.clone(), &model)
            .unwrap()
            .save(&path)
            .unwrap();

        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.manifest, manifest);
        assert!(loaded.optimizer.is_none());
        let restored = loaded.load_model::<B>(&dev).unwrap();
        let x = Tensor::<B, 4>::random([1, 3, 32, 32], Distribution::Default, &dev);
        let a = to_vec(model.depth.forward(x.clone()).unwrap().remove(0));
        let b = to_vec(restored.depth.forward(x).unwrap().remove(0));
        assert_eq!(a, b);
    }

    #[test]
    fn missing_or_foreign_archives_fail() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Checkpoint::load(&dir.path().join("nope.tar")),
            Err(Error::Io { .. })
        ));
        let path = dir.path().join("empty.tar");
        tar::Builder::new(File::create(&path).unwrap())
            .into_inner()
            .unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Format { .. })));
    }
}
